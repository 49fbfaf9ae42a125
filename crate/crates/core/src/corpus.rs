//! Grounded findings, samples, JSONL corpora and train/val/test splits.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ffl::Ffl;
use crate::geometry::BBox;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Reversal,
    Relocate,
    Substitution,
}

/// One finding with its location and veracity label `E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundedFinding {
    pub ffl: Ffl,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub e: u8,
    pub provenance: Provenance,
}

impl GroundedFinding {
    pub fn real(ffl: Ffl, bbox: BBox) -> Self {
        GroundedFinding { ffl, bbox, e: 1, provenance: Provenance::Original }
    }

    pub fn is_real(&self) -> bool {
        self.e == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleWire {
    image_id: String,
    image_ref: String,
    findings: Vec<GroundedFinding>,
}

/// One study: an image reference with its real (`E=1`) and fake (`E=0`) findings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampleWire", into = "SampleWire")]
pub struct Sample {
    pub image_id: String,
    pub image_ref: String,
    pub findings_real: Vec<GroundedFinding>,
    pub findings_fake: Vec<GroundedFinding>,
}

impl TryFrom<SampleWire> for Sample {
    type Error = Error;

    fn try_from(w: SampleWire) -> Result<Self> {
        let mut s = Sample {
            image_id: w.image_id,
            image_ref: w.image_ref,
            findings_real: Vec::new(),
            findings_fake: Vec::new(),
        };
        for f in w.findings {
            match f.e {
                1 => s.findings_real.push(f),
                0 => s.findings_fake.push(f),
                e => return Err(Error::schema(&s.image_id, format!("veracity must be 0 or 1, got {e}"))),
            }
        }
        Ok(s)
    }
}

impl From<Sample> for SampleWire {
    fn from(s: Sample) -> Self {
        let mut findings = s.findings_real;
        findings.extend(s.findings_fake);
        SampleWire { image_id: s.image_id, image_ref: s.image_ref, findings }
    }
}

impl Sample {
    pub fn new(image_id: impl Into<String>, image_ref: impl Into<String>) -> Self {
        Sample {
            image_id: image_id.into(),
            image_ref: image_ref.into(),
            findings_real: Vec::new(),
            findings_fake: Vec::new(),
        }
    }

    pub fn findings(&self) -> impl Iterator<Item = &GroundedFinding> {
        self.findings_real.iter().chain(self.findings_fake.iter())
    }

    /// Gold copy of the sample: real findings only.
    pub fn gold(&self) -> Sample {
        Sample { findings_fake: Vec::new(), ..self.clone() }
    }

    /// Record-level invariants; returns one message per violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.image_id.is_empty() {
            out.push("empty image_id".to_string());
        }
        let mut seen: HashSet<(String, [u64; 4])> = HashSet::new();
        for f in self.findings() {
            let key = (f.ffl.serialize(), f.bbox.as_array().map(f64::to_bits));
            if !seen.insert(key) {
                out.push(format!("duplicate record {} {:?}", f.ffl, f.bbox.as_array()));
            }
            match (f.provenance, f.e) {
                (Provenance::Original, 1) => {
                    if f.bbox.area() <= 0.0 {
                        out.push(format!("real finding {} has an empty box", f.ffl));
                    }
                }
                (Provenance::Original, _) => out.push(format!("original finding {} has e=0", f.ffl)),
                (_, 1) => out.push(format!("perturbed finding {} has e=1", f.ffl)),
                (Provenance::Reversal, _) => {
                    if !f.bbox.is_zero() {
                        out.push(format!("reversal {} carries a non-zero box", f.ffl));
                    }
                }
                (_, _) => {
                    if f.bbox.is_zero() {
                        out.push(format!("non-reversal fake {} carries the zero box", f.ffl));
                    }
                }
            }
        }
        for fake in &self.findings_fake {
            for real in &self.findings_real {
                if fake.ffl == real.ffl && fake.bbox == real.bbox {
                    out.push(format!("fake {} repeats a real record", fake.ffl));
                }
                if fake.provenance != Provenance::Reversal
                    && (fake.ffl == real.ffl || fake.ffl == real.ffl.negate())
                {
                    out.push(format!("fake {} equals or negates real {}", fake.ffl, real.ffl));
                }
            }
        }
        out
    }
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            Error::schema(format!("{}:{}", path.display(), lineno + 1), e.to_string())
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    read_jsonl(path)
}

/// Index partition of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Shuffled 70-10-20 partition; each fold reshuffles with its own stream.
    pub fn new(n: usize, fold: usize, seed: u64) -> Split {
        Split::with_ratios(n, fold, seed, 0.7, 0.1)
    }

    pub fn with_ratios(n: usize, fold: usize, seed: u64, train: f64, val: f64) -> Split {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut r = rng::stream(rng::derive(seed, "split"), fold as u64);
        idx.shuffle(&mut r);
        let n_train = (n as f64 * train).round() as usize;
        let n_val = ((n as f64 * val).round() as usize).min(n - n_train.min(n));
        let n_train = n_train.min(n);
        let mut train_idx = idx[..n_train].to_vec();
        let mut val_idx = idx[n_train..n_train + n_val].to_vec();
        let mut test_idx = idx[n_train + n_val..].to_vec();
        train_idx.sort_unstable();
        val_idx.sort_unstable();
        test_idx.sort_unstable();
        Split { train: train_idx, val: val_idx, test: test_idx }
    }

    pub fn select<'a, T>(items: &'a [T], idx: &[usize]) -> Vec<&'a T> {
        idx.iter().map(|&i| &items[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffl::Polarity;

    fn edema() -> Ffl {
        Ffl::new("anatomicalfinding", Polarity::Yes, "edema", "right lung")
    }

    #[test]
    fn wire_form_merges_reals_and_fakes() {
        let mut s = Sample::new("img1", "images/img1.png");
        s.findings_real.push(GroundedFinding::real(edema(), BBox::new(0.14, 0.13, 0.72, 0.56).unwrap()));
        s.findings_fake.push(GroundedFinding {
            ffl: edema().negate(),
            bbox: BBox::ZERO,
            e: 0,
            provenance: Provenance::Reversal,
        });
        let line = serde_json::to_string(&s).unwrap();
        assert_eq!(
            line,
            r#"{"image_id":"img1","image_ref":"images/img1.png","findings":[{"ffl":"anatomicalfinding | yes | edema | right lung","box":[0.14,0.13,0.72,0.56],"e":1,"provenance":"original"},{"ffl":"anatomicalfinding | no | edema | right lung","box":[0.0,0.0,0.0,0.0],"e":0,"provenance":"reversal"}]}"#
        );
        let back: Sample = serde_json::from_str(&line).unwrap();
        assert_eq!(back, s);
        assert!(back.violations().is_empty());
    }

    #[test]
    fn flags_invariant_violations() {
        let mut s = Sample::new("img1", "x.png");
        let b = BBox::new(0.1, 0.1, 0.2, 0.2).unwrap();
        s.findings_real.push(GroundedFinding::real(edema(), b));
        s.findings_fake.push(GroundedFinding { ffl: edema(), bbox: b, e: 0, provenance: Provenance::Relocate });
        s.findings_fake.push(GroundedFinding {
            ffl: edema().negate(),
            bbox: b,
            e: 0,
            provenance: Provenance::Reversal,
        });
        let v = s.violations();
        assert!(v.iter().any(|m| m.contains("repeats a real record")));
        assert!(v.iter().any(|m| m.contains("non-zero box")));
    }

    #[test]
    fn rejects_bad_veracity() {
        let line = r#"{"image_id":"a","image_ref":"a.png","findings":[{"ffl":"t | yes | edema | lung","box":[0,0,0.1,0.1],"e":2,"provenance":"original"}]}"#;
        assert!(serde_json::from_str::<Sample>(line).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let s = Split::new(101, 0, 9);
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(s.train.len(), 71);
        assert_eq!(s.val.len(), 10);
        assert_eq!(Split::new(101, 0, 9), s);
        assert_ne!(Split::new(101, 1, 9), s);
    }
}
