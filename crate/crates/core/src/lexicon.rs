//! Controlled vocabulary of findings, anatomical regions and contradictions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ffl::{fold, Ffl, UNSPECIFIED};

pub const DEFAULT_FINDING_TYPE: &str = "anatomicalfinding";

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.json");

/// On-disk lexicon schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconFile {
    #[serde(default)]
    pub version: Option<String>,
    pub findings: BTreeMap<String, Vec<String>>,
    pub regions: Vec<String>,
    #[serde(default)]
    pub contradictions: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub types: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    version: String,
    findings: Vec<String>,
    synonyms: HashMap<String, String>,
    regions: Vec<String>,
    contradictions: BTreeMap<String, BTreeSet<String>>,
    types: BTreeMap<String, String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::from_json(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl Lexicon {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: LexiconFile = serde_json::from_str(text)?;
        Lexicon::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::from_json(&text)
    }

    pub fn from_file(file: LexiconFile) -> Result<Self> {
        let mut findings = Vec::new();
        let mut synonyms: HashMap<String, String> = HashMap::new();
        for canonical in file.findings.keys() {
            let c = fold(canonical);
            if c.is_empty() {
                return Err(Error::Lexicon("empty finding name".into()));
            }
            if synonyms.insert(c.clone(), c.clone()).is_some() {
                return Err(Error::Lexicon(format!("finding {c:?} listed twice")));
            }
            findings.push(c);
        }
        for (canonical, syns) in &file.findings {
            let c = fold(canonical);
            for s in syns {
                let s = fold(s);
                match synonyms.get(&s) {
                    Some(owner) if *owner == c => {}
                    Some(owner) => {
                        return Err(Error::Lexicon(format!(
                            "synonym {s:?} maps to both {owner:?} and {c:?}"
                        )))
                    }
                    None => {
                        synonyms.insert(s, c.clone());
                    }
                }
            }
        }
        findings.sort();

        let mut regions = Vec::new();
        let mut seen = BTreeSet::new();
        for r in &file.regions {
            let r = fold(r);
            if r.is_empty() || r == UNSPECIFIED || !seen.insert(r.clone()) {
                return Err(Error::Lexicon(format!("region {r:?} is empty, reserved or repeated")));
            }
            regions.push(r);
        }

        let known: BTreeSet<&str> = findings.iter().map(String::as_str).collect();
        let mut contradictions: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (a, bs) in &file.contradictions {
            let a = fold(a);
            for b in bs {
                let b = fold(b);
                for x in [&a, &b] {
                    if !known.contains(x.as_str()) {
                        return Err(Error::Lexicon(format!("contradiction names unknown finding {x:?}")));
                    }
                }
                contradictions.entry(a.clone()).or_default().insert(b.clone());
                contradictions.entry(b).or_default().insert(a.clone());
            }
        }

        let mut types = BTreeMap::new();
        for (f, t) in &file.types {
            let f = fold(f);
            if !known.contains(f.as_str()) {
                return Err(Error::Lexicon(format!("type given for unknown finding {f:?}")));
            }
            types.insert(f, fold(t));
        }

        Ok(Lexicon {
            version: file.version.unwrap_or_else(|| "unversioned".into()),
            findings,
            synonyms,
            regions,
            contradictions,
            types,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Canonical findings in sorted order; the index is the finding's glyph id.
    pub fn findings(&self) -> &[String] {
        &self.findings
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn finding_index(&self, canonical: &str) -> Option<usize> {
        self.findings.binary_search_by(|f| f.as_str().cmp(canonical)).ok()
    }

    pub fn region_index(&self, name: &str) -> Option<usize> {
        let name = fold(name);
        self.regions.iter().position(|r| *r == name)
    }

    /// Map a raw phrase or synonym to its canonical finding.
    pub fn normalize_finding(&self, raw: &str) -> Result<String> {
        let key = fold(raw);
        self.synonyms
            .get(&key)
            .cloned()
            .ok_or(Error::UnknownTerm(key))
    }

    pub fn normalize_region(&self, raw: &str) -> Result<String> {
        let key = fold(raw);
        if key == UNSPECIFIED || self.regions.contains(&key) {
            Ok(key)
        } else {
            Err(Error::UnknownTerm(key))
        }
    }

    /// Canonicalize the finding and anatomy of an FFL.
    pub fn resolve(&self, ffl: &Ffl) -> Result<Ffl> {
        Ok(Ffl {
            finding_type: ffl.finding_type.clone(),
            polarity: ffl.polarity,
            core_finding: self.normalize_finding(&ffl.core_finding)?,
            anatomy: self.normalize_region(&ffl.anatomy)?,
        })
    }

    pub fn finding_type(&self, canonical: &str) -> &str {
        self.types
            .get(canonical)
            .map(String::as_str)
            .unwrap_or(DEFAULT_FINDING_TYPE)
    }

    /// All finding types in use, sorted, always including the default type.
    pub fn finding_types(&self) -> Vec<String> {
        let mut t: BTreeSet<String> = self.types.values().cloned().collect();
        t.insert(DEFAULT_FINDING_TYPE.to_string());
        t.into_iter().collect()
    }

    pub fn contradicts(&self, a: &str, b: &str) -> bool {
        self.contradictions
            .get(a)
            .is_some_and(|set| set.contains(b))
    }

    pub fn synonym_pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.synonyms.iter().map(|(s, c)| (s.as_str(), c.as_str()))
    }
}
