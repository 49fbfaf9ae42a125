//! Synthetic real/fake corpus generation.
//!
//! Every positive real finding spawns up to three kinds of fakes:
//!
//! * reversal: polarity flipped, location cleared to the zero box;
//! * relocation: same finding moved to another pooled location of that finding
//!   (IoU below the overlap threshold), with the anatomy relabelled to the new region;
//! * substitution: a different finding absent from the study, placed at one of
//!   its own pooled locations.
//!
//! Locations are closed-world: fakes only ever use boxes observed for the same
//! finding somewhere in the gold corpus.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{GroundedFinding, Provenance, Sample};
use crate::ffl::{Ffl, Polarity};
use crate::geometry::{iou, BBox};
use crate::layout::RegionLayout;
use crate::lexicon::Lexicon;
use crate::rng::{self, Rng};

/// Per-finding list of gold locations, in corpus order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LocationPool {
    pub boxes: BTreeMap<String, Vec<BBox>>,
}

impl LocationPool {
    /// Accumulate the boxes of positive real findings, keyed by canonical finding.
    pub fn build<'a>(gold: impl IntoIterator<Item = &'a Sample>) -> Self {
        let mut boxes: BTreeMap<String, Vec<BBox>> = BTreeMap::new();
        for s in gold {
            for f in &s.findings_real {
                if f.ffl.polarity == Polarity::Yes {
                    boxes.entry(f.ffl.core_finding.clone()).or_default().push(f.bbox);
                }
            }
        }
        LocationPool { boxes }
    }

    pub fn get(&self, finding: &str) -> &[BBox] {
        self.boxes.get(finding).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, finding: &str, b: &BBox) -> bool {
        self.get(finding).contains(b)
    }
}

pub fn build_pools(gold: &[Sample]) -> LocationPool {
    LocationPool::build(gold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub reversal: usize,
    pub relocate: usize,
    pub substitution: usize,
    /// Relocations must overlap the original box with IoU strictly below this.
    pub overlap_threshold: f64,
    /// Also reverse negative real findings into positive fakes.
    pub reverse_negatives: bool,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            reversal: 1,
            relocate: 1,
            substitution: 1,
            overlap_threshold: 0.2,
            reverse_negatives: false,
        }
    }
}

impl PerturbConfig {
    /// One reversal, two relocations, one substitution per finding.
    pub fn table2() -> Self {
        PerturbConfig { relocate: 2, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub reversal: usize,
    pub relocate: usize,
    pub substitution: usize,
}

impl TypeCounts {
    fn bump(&mut self, p: Provenance) {
        match p {
            Provenance::Reversal => self.reversal += 1,
            Provenance::Relocate => self.relocate += 1,
            Provenance::Substitution => self.substitution += 1,
            Provenance::Original => {}
        }
    }

    pub fn total(&self) -> usize {
        self.reversal + self.relocate + self.substitution
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub samples: usize,
    pub real_findings: usize,
    pub fake_findings: usize,
    pub emitted: TypeCounts,
    pub skipped: TypeCounts,
}

/// Shared read-only state for perturbing one corpus.
#[derive(Debug, Clone, Copy)]
pub struct PerturbContext<'a> {
    pub lexicon: &'a Lexicon,
    pub layout: &'a RegionLayout,
    pub pool: &'a LocationPool,
    pub overlap_threshold: f64,
}

fn same_record(a: &GroundedFinding, ffl: &Ffl, b: &BBox) -> bool {
    a.ffl == *ffl && a.bbox == *b
}

/// A candidate fake FFL must neither repeat nor negate a real one.
fn clashes_with_real(sample: &Sample, ffl: &Ffl) -> bool {
    sample
        .findings_real
        .iter()
        .any(|r| r.ffl == *ffl || r.ffl == ffl.negate())
}

fn is_new_fake(sample: &Sample, ffl: &Ffl, b: &BBox) -> bool {
    !sample.findings().any(|f| same_record(f, ffl, b))
}

/// Flip polarity and clear the location.
pub fn perturb_reversal(g: &GroundedFinding) -> GroundedFinding {
    GroundedFinding { ffl: g.ffl.negate(), bbox: BBox::ZERO, e: 0, provenance: Provenance::Reversal }
}

/// Move `g` to a uniformly drawn eligible pool location of the same finding.
///
/// `sample` holds the study's real findings and the fakes emitted so far; `None`
/// means no eligible location exists.
pub fn perturb_relocate(
    g: &GroundedFinding,
    sample: &Sample,
    ctx: &PerturbContext<'_>,
    rng: &mut Rng,
) -> Option<GroundedFinding> {
    let eligible: Vec<(Ffl, BBox)> = ctx
        .pool
        .get(&g.ffl.core_finding)
        .iter()
        .filter(|b| iou(b, &g.bbox) < ctx.overlap_threshold)
        .map(|b| (g.ffl.with_anatomy(ctx.layout.region_of(b)), *b))
        .filter(|(ffl, b)| !clashes_with_real(sample, ffl) && is_new_fake(sample, ffl, b))
        .collect();
    let (ffl, bbox) = eligible.choose(rng)?.clone();
    Some(GroundedFinding { ffl, bbox, e: 0, provenance: Provenance::Relocate })
}

/// Replace the finding by one absent from the study, placed at a pooled location
/// of the substitute. Substitutes must not contradict any real finding or any
/// fake already in the study.
pub fn perturb_substitute(
    sample: &Sample,
    ctx: &PerturbContext<'_>,
    rng: &mut Rng,
) -> Option<GroundedFinding> {
    let present: BTreeSet<&str> = sample.findings_real.iter().map(|f| f.ffl.core_finding.as_str()).collect();
    let fake_findings: BTreeSet<&str> = sample.findings_fake.iter().map(|f| f.ffl.core_finding.as_str()).collect();
    let make = |finding: &str, b: &BBox| {
        Ffl::new(ctx.lexicon.finding_type(finding), Polarity::Yes, finding, ctx.layout.region_of(b))
    };
    let candidates: Vec<&String> = ctx
        .lexicon
        .findings()
        .iter()
        .filter(|m| !present.contains(m.as_str()))
        .filter(|m| !present.iter().chain(&fake_findings).any(|x| ctx.lexicon.contradicts(x, m)))
        .filter(|m| ctx.pool.get(m).iter().any(|b| is_new_fake(sample, &make(m, b), b)))
        .collect();
    let finding = *candidates.choose(rng)?;
    let boxes: Vec<&BBox> = ctx
        .pool
        .get(finding)
        .iter()
        .filter(|b| is_new_fake(sample, &make(finding, b), b))
        .collect();
    let bbox = **boxes.choose(rng)?;
    Some(GroundedFinding {
        ffl: make(finding, &bbox),
        bbox,
        e: 0,
        provenance: Provenance::Substitution,
    })
}

/// Perturb one gold sample with its own random stream.
pub fn perturb_sample(
    gold: &Sample,
    config: &PerturbConfig,
    ctx: &PerturbContext<'_>,
    rng: &mut Rng,
    report: &mut GenerationReport,
) -> Sample {
    let mut s = gold.gold();
    for g in &gold.findings_real {
        let positive = g.ffl.polarity == Polarity::Yes;
        let reversals = if positive || config.reverse_negatives { config.reversal } else { 0 };
        for _ in 0..reversals {
            let fake = perturb_reversal(g);
            if is_new_fake(&s, &fake.ffl, &fake.bbox) {
                report.emitted.bump(Provenance::Reversal);
                s.findings_fake.push(fake);
            } else {
                report.skipped.bump(Provenance::Reversal);
            }
        }
        if !positive {
            continue;
        }
        for _ in 0..config.relocate {
            match perturb_relocate(g, &s, ctx, rng) {
                Some(fake) => {
                    report.emitted.bump(Provenance::Relocate);
                    s.findings_fake.push(fake);
                }
                None => report.skipped.bump(Provenance::Relocate),
            }
        }
        for _ in 0..config.substitution {
            match perturb_substitute(&s, ctx, rng) {
                Some(fake) => {
                    report.emitted.bump(Provenance::Substitution);
                    s.findings_fake.push(fake);
                }
                None => report.skipped.bump(Provenance::Substitution),
            }
        }
    }
    s
}

/// Build the synthetic corpus. Sample `i` uses stream `i` of the seed, so the
/// output does not depend on processing order.
pub fn generate_corpus(
    gold: &[Sample],
    config: &PerturbConfig,
    lexicon: &Lexicon,
    layout: &RegionLayout,
    pool: &LocationPool,
    seed: u64,
) -> (Vec<Sample>, GenerationReport) {
    let ctx = PerturbContext { lexicon, layout, pool, overlap_threshold: config.overlap_threshold };
    let base = rng::derive(seed, "perturb");
    let mut report = GenerationReport::default();
    let out: Vec<Sample> = gold
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut r = rng::stream(base, i as u64);
            perturb_sample(g, config, &ctx, &mut r, &mut report)
        })
        .collect();
    report.samples = out.len();
    report.real_findings = out.iter().map(|s| s.findings_real.len()).sum();
    report.fake_findings = out.iter().map(|s| s.findings_fake.len()).sum();
    (out, report)
}
