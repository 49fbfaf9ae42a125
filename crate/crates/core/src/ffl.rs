//! Fine-grained finding labels (FFL).
//!
//! The wire form is the pipe-delimited string `type | polarity | finding | anatomy`,
//! e.g. `anatomicalfinding | no | vascular congestion | lung`. A three-field form
//! without anatomy is accepted and gets the anatomy [`UNSPECIFIED`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const UNSPECIFIED: &str = "unspecified";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Yes,
    No,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Yes => "yes",
            Polarity::No => "no",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Yes => Polarity::No,
            Polarity::No => Polarity::Yes,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A structured finding: `type | polarity | core finding | anatomy`.
///
/// All fields are stored trimmed, lower-cased and with inner whitespace collapsed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ffl {
    pub finding_type: String,
    pub polarity: Polarity,
    pub core_finding: String,
    pub anatomy: String,
}

/// Lower-case, trim, and collapse runs of whitespace to a single space.
pub fn fold(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl Ffl {
    pub fn new(
        finding_type: &str,
        polarity: Polarity,
        core_finding: &str,
        anatomy: &str,
    ) -> Self {
        Ffl {
            finding_type: fold(finding_type),
            polarity,
            core_finding: fold(core_finding),
            anatomy: fold(anatomy),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let fields: Vec<String> = text.split('|').map(fold).collect();
        let err = |reason: String| Error::Parse { text: text.to_string(), reason };
        if fields.len() != 3 && fields.len() != 4 {
            return Err(err(format!("expected 3 or 4 fields, found {}", fields.len())));
        }
        if let Some(i) = fields.iter().position(String::is_empty) {
            return Err(err(format!("field {} is empty", i + 1)));
        }
        let polarity = match fields[1].as_str() {
            "yes" => Polarity::Yes,
            "no" => Polarity::No,
            other => return Err(err(format!("unknown polarity {other:?}"))),
        };
        let anatomy = fields.get(3).cloned().unwrap_or_else(|| UNSPECIFIED.to_string());
        Ok(Ffl {
            finding_type: fields[0].clone(),
            polarity,
            core_finding: fields[2].clone(),
            anatomy,
        })
    }

    /// Four-field wire form.
    pub fn serialize(&self) -> String {
        format!(
            "{} | {} | {} | {}",
            self.finding_type, self.polarity, self.core_finding, self.anatomy
        )
    }

    /// Three-field projection without anatomy.
    pub fn serialize3(&self) -> String {
        format!("{} | {} | {}", self.finding_type, self.polarity, self.core_finding)
    }

    pub fn negate(&self) -> Self {
        Ffl { polarity: self.polarity.flipped(), ..self.clone() }
    }

    pub fn with_anatomy(&self, anatomy: &str) -> Self {
        Ffl { anatomy: fold(anatomy), ..self.clone() }
    }

    /// Same polarity and core finding, anatomy ignored.
    pub fn same_claim(&self, other: &Ffl) -> bool {
        self.polarity == other.polarity && self.core_finding == other.core_finding
    }
}

impl fmt::Display for Ffl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl FromStr for Ffl {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ffl::parse(s)
    }
}

impl Serialize for Ffl {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&Ffl::serialize(self))
    }
}

impl<'de> Deserialize<'de> for Ffl {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Ffl::parse(&text).map_err(serde::de::Error::custom)
    }
}
