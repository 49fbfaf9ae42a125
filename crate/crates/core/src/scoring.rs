//! Report error quantification.
//!
//! A report is a list of indicated findings (an FFL plus the location it points
//! at). The fact-checking score compares them with model predictions:
//!
//! `FCScore = ½ (fraction of findings predicted real + mean IoU(indicated, predicted))`
//!
//! and `RQ = 1 - FCScore`. The same formula against the gold sample gives the
//! ground-truth error `RQ(A, G)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{GroundedFinding, Sample};
use crate::error::{Error, Result};
use crate::ffl::Ffl;
use crate::geometry::{iou, BBox, EPS};
use crate::layout::RegionLayout;
use crate::model::{Example, FcModel, Prediction};
use crate::perturb::{perturb_relocate, perturb_reversal, perturb_substitute, PerturbContext};
use crate::rng::{self, Rng};

/// How the FC score combines its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RqConvention {
    /// Mean of the fraction predicted real and the mean IoU.
    #[default]
    Default,
    /// The printed expression: `|E=1| / Σ E` plus the mean of `IoU / 2`, halved.
    PaperLiteral,
}

impl FromStr for RqConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(RqConvention::Default),
            "paper-literal" => Ok(RqConvention::PaperLiteral),
            _ => Err(Error::Config(format!("unknown rq convention {s:?}"))),
        }
    }
}

impl fmt::Display for RqConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RqConvention::Default => "default",
            RqConvention::PaperLiteral => "paper-literal",
        })
    }
}

/// When an indicated claim counts as present in the gold sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoldMatch {
    /// Polarity, finding and anatomy all agree: the finding-location pair is in the gold.
    #[default]
    Pair,
    /// Polarity and finding agree; a wrong anatomy only costs overlap.
    Finding,
}

impl GoldMatch {
    pub fn matches(self, gold: &Ffl, claim: &Ffl) -> bool {
        gold.same_claim(claim) && (self == GoldMatch::Finding || gold.anatomy == claim.anatomy)
    }
}

impl FromStr for GoldMatch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair" => Ok(GoldMatch::Pair),
            "finding" => Ok(GoldMatch::Finding),
            _ => Err(Error::Config(format!("unknown gold matching {s:?}"))),
        }
    }
}

/// A claim of an automated report with the location it indicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatedFinding {
    pub ffl: Ffl,
    pub indicated_box: BBox,
}

impl IndicatedFinding {
    pub fn new(ffl: Ffl, indicated_box: BBox) -> Self {
        IndicatedFinding { ffl, indicated_box }
    }

    /// Location recovered from the claimed anatomy: its region box, or the zero
    /// box when unspecified.
    pub fn from_report(ffl: Ffl, layout: &RegionLayout) -> Self {
        let indicated_box = layout.indicated_box(&ffl.anatomy);
        IndicatedFinding { ffl, indicated_box }
    }

    /// The claim exactly as recorded in a gold finding.
    pub fn from_gold(g: &GroundedFinding) -> Self {
        IndicatedFinding { ffl: g.ffl.clone(), indicated_box: g.bbox }
    }
}

/// The two quantities the score needs from each finding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRow {
    pub real: bool,
    pub iou: f64,
}

pub fn fc_score(rows: &[ScoreRow], convention: RqConvention) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Undefined("no findings to score".into()));
    }
    let n = rows.len() as f64;
    let n_real = rows.iter().filter(|r| r.real).count() as f64;
    let iou_sum: f64 = rows.iter().map(|r| r.iou).sum();
    let score = match convention {
        RqConvention::Default => 0.5 * (n_real / n + iou_sum / n),
        RqConvention::PaperLiteral => {
            // numerator and denominator both count findings predicted real, so the ratio is 1 or undefined
            let veracity = if n_real > 0.0 { 1.0 } else { 0.0 };
            0.5 * (veracity + iou_sum / (2.0 * n))
        }
    };
    Ok(score.clamp(0.0, 1.0))
}

pub fn rq(rows: &[ScoreRow], convention: RqConvention) -> Result<f64> {
    Ok(1.0 - fc_score(rows, convention)?)
}

/// One verified finding of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentRow {
    pub ffl: Ffl,
    pub indicated_box: BBox,
    /// Predicted box clipped into the frame; zero when prediction failed.
    pub predicted_box: BBox,
    pub veracity_prob: Option<f64>,
    pub e_p: u8,
    pub iou: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl AssessmentRow {
    pub fn score_row(&self) -> ScoreRow {
        ScoreRow { real: self.e_p == 1, iou: self.iou }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportAssessment {
    pub image_id: String,
    pub convention: RqConvention,
    pub rows: Vec<AssessmentRow>,
    pub fc_score: f64,
    pub rq: f64,
}

/// Verify every indicated finding of one report against the model. A finding the
/// model cannot encode becomes a row with an error, scored as fake with no overlap.
pub fn assess_report(
    model: &FcModel,
    image: &crate::toyworld::ToyImage,
    indicated: &[IndicatedFinding],
    convention: RqConvention,
) -> Result<ReportAssessment> {
    if indicated.is_empty() {
        return Err(Error::Undefined("no findings to verify".into()));
    }
    let ffls: Vec<Ffl> = indicated.iter().map(|i| i.ffl.clone()).collect();
    let preds = model.predict(image, &ffls)?;
    let rows: Vec<AssessmentRow> = indicated
        .iter()
        .zip(preds)
        .map(|(ind, p)| match p {
            Ok(p) => {
                let predicted_box = if p.is_real() { p.to_box() } else { BBox::ZERO };
                AssessmentRow {
                    ffl: ind.ffl.clone(),
                    indicated_box: ind.indicated_box,
                    predicted_box,
                    veracity_prob: Some(p.veracity_prob),
                    e_p: p.is_real() as u8,
                    iou: iou(&ind.indicated_box, &predicted_box),
                    error: None,
                }
            }
            Err(e) => AssessmentRow {
                ffl: ind.ffl.clone(),
                indicated_box: ind.indicated_box,
                predicted_box: BBox::ZERO,
                veracity_prob: None,
                e_p: 0,
                iou: 0.0,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let score_rows: Vec<ScoreRow> = rows.iter().map(AssessmentRow::score_row).collect();
    let fc = fc_score(&score_rows, convention)?;
    Ok(ReportAssessment { image_id: image.image_id.clone(), convention, rows, fc_score: fc, rq: 1.0 - fc })
}

/// Score rows against the gold sample. A claim is real when some gold real
/// finding matches it; its overlap is taken with the best such finding.
pub fn gold_rows(indicated: &[IndicatedFinding], gold: &Sample, matching: GoldMatch) -> Vec<ScoreRow> {
    indicated
        .iter()
        .map(|ind| {
            let matches = gold.findings_real.iter().filter(|g| matching.matches(&g.ffl, &ind.ffl));
            let mut row = ScoreRow { real: false, iou: 0.0 };
            for g in matches {
                row.real = true;
                row.iou = row.iou.max(iou(&ind.indicated_box, &g.bbox));
            }
            row
        })
        .collect()
}

pub fn rq_ground_truth(
    indicated: &[IndicatedFinding],
    gold: &Sample,
    convention: RqConvention,
    matching: GoldMatch,
) -> Result<f64> {
    rq(&gold_rows(indicated, gold, matching), convention)
}

/// Lin's concordance correlation coefficient with population moments.
pub fn ccc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::Undefined("concordance needs at least two pairs".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>() / n;
    let vy = y.iter().map(|b| (b - my) * (b - my)).sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let den = vx + vy + (mx - my) * (mx - my);
    if den < EPS * EPS {
        return Ok(0.0);
    }
    Ok(2.0 * cov / den)
}

/// Held-out metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Fraction of all findings whose thresholded veracity matches the label.
    pub accuracy: f64,
    /// Mean IoU between predicted and gold boxes over real findings.
    pub miou: f64,
    pub findings: usize,
    pub real_findings: usize,
}

/// Metrics over `(finding, prediction)` pairs.
pub fn evaluate_predictions<'a>(
    pairs: impl IntoIterator<Item = (&'a GroundedFinding, Prediction)>,
) -> Result<EvalMetrics> {
    let (mut n, mut correct, mut n_real, mut iou_sum) = (0usize, 0usize, 0usize, 0.0);
    for (g, p) in pairs {
        n += 1;
        if p.is_real() == g.is_real() {
            correct += 1;
        }
        if g.is_real() {
            n_real += 1;
            iou_sum += iou(&p.to_box(), &g.bbox);
        }
    }
    if n == 0 {
        return Err(Error::Undefined("empty test set".into()));
    }
    Ok(EvalMetrics {
        accuracy: correct as f64 / n as f64,
        miou: if n_real == 0 { 0.0 } else { iou_sum / n_real as f64 },
        findings: n,
        real_findings: n_real,
    })
}

pub fn evaluate_model(model: &FcModel, test: &[Example]) -> Result<EvalMetrics> {
    let mut pairs = Vec::new();
    for ex in test {
        let findings: Vec<&GroundedFinding> = ex.sample.findings().collect();
        let ffls: Vec<Ffl> = findings.iter().map(|g| g.ffl.clone()).collect();
        for (g, p) in findings.into_iter().zip(model.predict(ex.image, &ffls)?) {
            pairs.push((g, p?));
        }
    }
    evaluate_predictions(pairs)
}

/// Per-finding corruption probabilities of a simulated report generator; the
/// remainder keeps the finding unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorProfile {
    pub name: String,
    pub reverse: f64,
    pub relocate: f64,
    pub substitute: f64,
}

impl ErrorProfile {
    /// Error rate split evenly over the three corruption kinds.
    pub fn even(name: impl Into<String>, rate: f64) -> Self {
        ErrorProfile { name: name.into(), reverse: rate / 3.0, relocate: rate / 3.0, substitute: rate / 3.0 }
    }

    pub fn error_rate(&self) -> f64 {
        self.reverse + self.relocate + self.substitute
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.reverse, self.relocate, self.substitute].iter().all(|p| (0.0..=1.0).contains(p))
            && self.error_rate() <= 1.0 + 1e-12;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("profile {} does not hold probabilities", self.name)))
        }
    }
}

/// Seven generators with error rates from 0 to 0.8.
pub fn default_profiles() -> Vec<ErrorProfile> {
    [0.0, 0.1, 0.2, 0.35, 0.5, 0.65, 0.8]
        .iter()
        .enumerate()
        .map(|(i, &r)| ErrorProfile::even(format!("gen{i}-err{:02}", (r * 100.0f64).round() as u32), r))
        .collect()
}

/// Corrupt the gold findings of one study into an automated report.
///
/// All per-finding decisions are drawn before any corruption is built, so for a
/// fixed stream a finding corrupted at some rate is also corrupted at every higher
/// rate. Relocations and substitutions that have no eligible location fall back
/// to a reversal. Locations are recovered from the claimed anatomy.
pub fn simulate_generator(
    gold: &Sample,
    profile: &ErrorProfile,
    ctx: &PerturbContext<'_>,
    rng: &mut Rng,
) -> Vec<IndicatedFinding> {
    let draws: Vec<f64> = gold.findings_real.iter().map(|_| rng.random::<f64>()).collect();
    let mut work = gold.gold();
    let mut out = Vec::with_capacity(draws.len());
    let t1 = profile.reverse;
    let t2 = t1 + profile.relocate;
    let t3 = t2 + profile.substitute;
    for (g, &u) in gold.findings_real.iter().zip(&draws) {
        let ffl = if u < t1 {
            None
        } else if u < t2 {
            perturb_relocate(g, &work, ctx, rng).map(|f| {
                work.findings_fake.push(f.clone());
                f.ffl
            })
        } else if u < t3 {
            perturb_substitute(&work, ctx, rng).map(|f| {
                work.findings_fake.push(f.clone());
                f.ffl
            })
        } else {
            Some(g.ffl.clone())
        };
        let ffl = ffl.unwrap_or_else(|| perturb_reversal(g).ffl);
        out.push(IndicatedFinding::from_report(ffl, ctx.layout));
    }
    out
}

/// Per-generator means of the two error scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceRow {
    pub generator: String,
    pub error_rate: f64,
    pub reports: usize,
    pub rq_ap: f64,
    pub rq_ag: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceStudy {
    pub convention: RqConvention,
    pub matching: GoldMatch,
    pub rows: Vec<ConcordanceRow>,
    pub ccc: f64,
    /// Whether mean `RQ(A, G)` strictly increases with the error rate.
    pub rq_ag_monotone: bool,
}

/// Run every profile over the test studies and compare model-based with gold-based
/// error scores. Study `i` uses stream `i` for every profile.
pub fn concordance_study(
    model: &FcModel,
    test: &[Example],
    profiles: &[ErrorProfile],
    ctx: &PerturbContext<'_>,
    convention: RqConvention,
    matching: GoldMatch,
    seed: u64,
) -> Result<ConcordanceStudy> {
    if test.is_empty() {
        return Err(Error::Undefined("empty test set".into()));
    }
    let base = rng::derive(seed, "simulate");
    let mut rows = Vec::with_capacity(profiles.len());
    for p in profiles {
        p.validate()?;
        let (mut ap, mut ag, mut n) = (0.0, 0.0, 0usize);
        for (i, ex) in test.iter().enumerate() {
            let gold = ex.sample.gold();
            if gold.findings_real.is_empty() {
                continue;
            }
            let indicated = simulate_generator(&gold, p, ctx, &mut rng::stream(base, i as u64));
            ap += assess_report(model, ex.image, &indicated, convention)?.rq;
            ag += rq_ground_truth(&indicated, &gold, convention, matching)?;
            n += 1;
        }
        if n == 0 {
            return Err(Error::Undefined("no test study has gold findings".into()));
        }
        rows.push(ConcordanceRow {
            generator: p.name.clone(),
            error_rate: p.error_rate(),
            reports: n,
            rq_ap: ap / n as f64,
            rq_ag: ag / n as f64,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.rq_ap).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.rq_ag).collect();
    let mut by_rate: Vec<&ConcordanceRow> = rows.iter().collect();
    by_rate.sort_by(|a, b| a.error_rate.total_cmp(&b.error_rate));
    let rq_ag_monotone = by_rate.windows(2).all(|w| w[1].error_rate > w[0].error_rate && w[1].rq_ag > w[0].rq_ag);
    Ok(ConcordanceStudy { convention, matching, ccc: ccc(&x, &y)?, rows, rq_ag_monotone })
}

/// Claimed findings of one report, as read from a reports file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFinding {
    pub ffl: Ffl,
    /// Explicit location; recovered from the anatomy when absent.
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub image_id: String,
    pub image_ref: String,
    pub findings: Vec<ReportFinding>,
}

impl Report {
    pub fn indicated(&self, layout: &RegionLayout) -> Vec<IndicatedFinding> {
        self.findings
            .iter()
            .map(|f| match f.bbox {
                Some(b) => IndicatedFinding::new(f.ffl.clone(), b),
                None => IndicatedFinding::from_report(f.ffl.clone(), layout),
            })
            .collect()
    }
}
