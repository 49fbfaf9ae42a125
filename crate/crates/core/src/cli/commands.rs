//! One function per subcommand. Each writes its artifacts under `out`, then the
//! manifest; the returned string is a one-line summary for the terminal.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::*;
use super::manifest::Manifest;
use crate::corpus::{read_jsonl, read_samples, write_jsonl, GroundedFinding, Sample, Split};
use crate::error::{Error, Result};
use crate::ffl::Ffl;
use crate::layout::RegionLayout;
use crate::lexicon::Lexicon;
use crate::model::{train, AblationMode, Checkpoint, EpochMetrics, Example, FcConfig};
use crate::perturb::{build_pools, generate_corpus, PerturbContext};
use crate::scoring::{
    assess_report, concordance_study, evaluate_model, rq_ground_truth, ConcordanceStudy, EvalMetrics,
    ReportAssessment, RqConvention,
};
use crate::scoring::Report;
use crate::toyworld::{render_overlay, OverlayColor, ToyImage, ToyWorld};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path.display().to_string(), e.to_string()))
}

fn resolve_sample(lexicon: &Lexicon, s: &Sample) -> Result<Sample> {
    let fix = |fs: &[GroundedFinding]| -> Result<Vec<GroundedFinding>> {
        fs.iter().map(|g| Ok(GroundedFinding { ffl: lexicon.resolve(&g.ffl)?, ..g.clone() })).collect()
    };
    Ok(Sample {
        findings_real: fix(&s.findings_real)?,
        findings_fake: fix(&s.findings_fake)?,
        ..s.clone()
    })
}

/// Samples with canonical FFLs and their decoded images.
struct Loaded {
    lexicon: Lexicon,
    samples: Vec<Sample>,
    images: Vec<ToyImage>,
}

impl Loaded {
    fn read(data: &DataConfig) -> Result<Self> {
        let lexicon = load_lexicon(data.lexicon.as_deref())?;
        let samples = read_samples(&data.corpus)?
            .iter()
            .map(|s| resolve_sample(&lexicon, s))
            .collect::<Result<Vec<_>>>()?;
        if samples.is_empty() {
            return Err(Error::schema(data.corpus.display().to_string(), "no samples"));
        }
        let dir = data.image_dir();
        let images = samples
            .iter()
            .map(|s| ToyImage::read_png(&dir.join(&s.image_ref), &s.image_id))
            .collect::<Result<Vec<_>>>()?;
        Ok(Loaded { lexicon, samples, images })
    }

    fn examples(&self, idx: &[usize]) -> Vec<Example<'_>> {
        idx.iter().map(|&i| Example { image: &self.images[i], sample: &self.samples[i] }).collect()
    }

    fn all(&self) -> Vec<usize> {
        (0..self.samples.len()).collect()
    }
}

/// Partition written by `train` so later stages can find its held-out part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    pub seed: u64,
    pub fold: usize,
    pub folds: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitFile {
    fn new(cfg: &SplitConfig, n: usize) -> Result<Self> {
        cfg.validate()?;
        let s = Split::new(n, cfg.fold, cfg.seed);
        Ok(SplitFile { seed: cfg.seed, fold: cfg.fold, folds: cfg.folds, train: s.train, val: s.val, test: s.test })
    }

    fn check(&self, n: usize, path: &Path) -> Result<()> {
        match self.train.iter().chain(&self.val).chain(&self.test).find(|&&i| i >= n) {
            Some(i) => Err(Error::schema(path.display().to_string(), format!("index {i} outside a corpus of {n}"))),
            None => Ok(()),
        }
    }
}

fn test_indices(split: Option<&Path>, loaded: &Loaded) -> Result<Vec<usize>> {
    match split {
        Some(p) => {
            let s: SplitFile = read_json(p)?;
            s.check(loaded.samples.len(), p)?;
            Ok(s.test)
        }
        None => Ok(loaded.all()),
    }
}

pub fn gen_gold(cfg: &GenGoldConfig, out: &Path) -> Result<String> {
    let lexicon = load_lexicon(cfg.lexicon.as_deref())?;
    let world = ToyWorld::new(lexicon, cfg.world.clone())?;
    let (images, gold) = world.generate_gold(cfg.n, cfg.seed)?;
    create_dir(&out.join("images"))?;
    let mut manifest = Manifest::new("gen-gold", cfg)?;
    write_jsonl(&out.join("gold.jsonl"), &gold)?;
    manifest.record(out, "gold.jsonl")?;
    for (img, s) in images.iter().zip(&gold) {
        img.write_png(&out.join(&s.image_ref))?;
        manifest.record(out, &s.image_ref)?;
    }
    manifest.write(out)?;
    Ok(format!("wrote {} gold samples to {}", gold.len(), out.display()))
}

pub fn gen_synth(cfg: &GenSynthConfig, out: &Path) -> Result<String> {
    let lexicon = load_lexicon(cfg.lexicon.as_deref())?;
    let layout = RegionLayout::from_lexicon(&lexicon)?;
    let gold = read_samples(&cfg.gold)?
        .iter()
        .map(|s| resolve_sample(&lexicon, s))
        .collect::<Result<Vec<_>>>()?;
    if let Some(s) = gold.iter().find(|s| !s.findings_fake.is_empty()) {
        return Err(Error::schema(cfg.gold.display().to_string(), format!("{} already has fakes", s.image_id)));
    }
    let pool = build_pools(&gold);
    let (corpus, report) = generate_corpus(&gold, &cfg.perturb, &lexicon, &layout, &pool, cfg.seed);
    create_dir(out)?;
    let mut manifest = Manifest::new("gen-synth", cfg)?;
    write_jsonl(&out.join("synth.jsonl"), &corpus)?;
    write_json(&out.join("generation_report.json"), &report)?;
    manifest.record(out, "synth.jsonl")?;
    manifest.record(out, "generation_report.json")?;
    manifest.write(out)?;
    Ok(format!(
        "{} samples: {} real, {} fake findings ({} skipped)",
        report.samples,
        report.real_findings,
        report.fake_findings,
        report.skipped.total()
    ))
}

pub fn train_cmd(cfg: &TrainConfig, out: &Path, verbose: bool) -> Result<String> {
    cfg.model.validate()?;
    let data = Loaded::read(&cfg.data)?;
    let split = SplitFile::new(&cfg.split, data.samples.len())?;
    let (tr, va) = (data.examples(&split.train), data.examples(&split.val));
    let ck = train(&tr, &va, &data.lexicon, &cfg.model, cfg.seed, |m| {
        if verbose {
            eprintln!(
                "epoch {:>3}  supcon {:>9.4}  reg {:.4}  val acc {}",
                m.epoch,
                m.supcon_loss,
                m.reg_loss,
                m.val_accuracy.map_or("-".into(), |a| format!("{a:.3}"))
            );
        }
    })?;
    create_dir(out)?;
    let mut manifest = Manifest::new("train", cfg)?;
    ck.save(&out.join("checkpoint.json"))?;
    write_jsonl(&out.join("train_log.jsonl"), &ck.metrics)?;
    write_json(&out.join("split.json"), &split)?;
    for f in ["checkpoint.json", "train_log.jsonl", "split.json"] {
        manifest.record(out, f)?;
    }
    manifest.write(out)?;
    let last = ck.metrics.last().copied();
    Ok(format!(
        "trained {} for {} epochs; final val accuracy {}",
        cfg.model.mode,
        cfg.model.epochs,
        last.and_then(|m| m.val_accuracy).map_or("-".into(), |a| format!("{a:.3}"))
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub image_id: String,
    pub ffl: Ffl,
    #[serde(rename = "box")]
    pub bbox: Option<[f64; 4]>,
    pub veracity_prob: Option<f64>,
    pub e_p: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

pub fn predict_cmd(cfg: &PredictConfig, out: &Path) -> Result<String> {
    let ck = Checkpoint::load(&cfg.checkpoint)?;
    let data = Loaded::read(&cfg.data)?;
    let mut rows = Vec::new();
    for (s, img) in data.samples.iter().zip(&data.images) {
        let ffls: Vec<Ffl> = s.findings().map(|g| g.ffl.clone()).collect();
        for (ffl, p) in ffls.iter().zip(ck.model.predict(img, &ffls)?) {
            rows.push(match p {
                Ok(p) => PredictionRow {
                    image_id: s.image_id.clone(),
                    ffl: ffl.clone(),
                    bbox: Some(p.bbox),
                    veracity_prob: Some(p.veracity_prob),
                    e_p: Some(p.is_real() as u8),
                    error: None,
                },
                Err(e) => PredictionRow {
                    image_id: s.image_id.clone(),
                    ffl: ffl.clone(),
                    bbox: None,
                    veracity_prob: None,
                    e_p: None,
                    error: Some(e.to_string()),
                },
            });
        }
    }
    create_dir(out)?;
    let mut manifest = Manifest::new("predict", cfg)?;
    write_jsonl(&out.join("predictions.jsonl"), &rows)?;
    manifest.record(out, "predictions.jsonl")?;
    manifest.write(out)?;
    Ok(format!("{} predictions over {} images", rows.len(), data.samples.len()))
}

/// Assessment of one report, with the gold-based score when gold was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentLine {
    #[serde(flatten)]
    pub assessment: ReportAssessment,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rq_ground_truth: Option<f64>,
}

pub fn assess_cmd(cfg: &AssessConfig, out: &Path) -> Result<String> {
    let ck = Checkpoint::load(&cfg.checkpoint)?;
    let lexicon = load_lexicon(cfg.lexicon.as_deref())?;
    let layout = RegionLayout::from_lexicon(&lexicon)?;
    let reports: Vec<Report> = read_jsonl(&cfg.reports)?;
    let gold: BTreeMap<String, Sample> = match &cfg.gold {
        Some(p) => read_samples(p)?
            .iter()
            .map(|s| Ok((s.image_id.clone(), resolve_sample(&lexicon, s)?)))
            .collect::<Result<_>>()?,
        None => BTreeMap::new(),
    };
    let dir = cfg.image_dir();
    create_dir(out)?;
    if cfg.overlays {
        create_dir(&out.join("overlays"))?;
    }
    let mut manifest = Manifest::new("assess", cfg)?;
    let mut lines = Vec::with_capacity(reports.len());
    let mut overlay_files = Vec::new();
    for r in &reports {
        let img = ToyImage::read_png(&dir.join(&r.image_ref), &r.image_id)?;
        // unresolvable terms stay as written and fail their own row
        let indicated: Vec<_> = r
            .indicated(&layout)
            .into_iter()
            .map(|mut ind| {
                if let Ok(f) = lexicon.resolve(&ind.ffl) {
                    ind.ffl = f;
                }
                ind
            })
            .collect();
        let a = assess_report(&ck.model, &img, &indicated, cfg.convention)?;
        let g = gold.get(&r.image_id);
        let rq_gt = match g {
            Some(g) => Some(rq_ground_truth(&indicated, &g.gold(), cfg.convention, cfg.matching)?),
            None => None,
        };
        if cfg.overlays {
            let mut boxes = Vec::new();
            for row in &a.rows {
                boxes.push((row.indicated_box, OverlayColor::Indicated, row.ffl.to_string()));
                if row.e_p == 1 {
                    boxes.push((row.predicted_box, OverlayColor::Predicted, row.ffl.to_string()));
                }
            }
            for gf in g.iter().flat_map(|g| &g.findings_real) {
                boxes.push((gf.bbox, OverlayColor::GroundTruth, gf.ffl.to_string()));
            }
            let rel = format!("overlays/{}.png", r.image_id);
            render_overlay(&img, &boxes).write_png(&out.join(&rel))?;
            overlay_files.push(rel);
        }
        lines.push(AssessmentLine { assessment: a, rq_ground_truth: rq_gt });
    }
    write_jsonl(&out.join("assessments.jsonl"), &lines)?;
    manifest.record(out, "assessments.jsonl")?;
    for rel in &overlay_files {
        manifest.record(out, rel)?;
    }
    manifest.write(out)?;
    let mean = lines.iter().map(|l| l.assessment.rq).sum::<f64>() / lines.len().max(1) as f64;
    Ok(format!("assessed {} reports; mean RQ {mean:.4}", lines.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationFile {
    pub mode: AblationMode,
    pub studies: usize,
    pub metrics: EvalMetrics,
}

pub fn evaluate_cmd(cfg: &EvaluateConfig, out: &Path) -> Result<String> {
    let ck = Checkpoint::load(&cfg.checkpoint)?;
    let data = Loaded::read(&cfg.data)?;
    let idx = test_indices(cfg.split.as_deref(), &data)?;
    let metrics = evaluate_model(&ck.model, &data.examples(&idx))?;
    let file = EvaluationFile { mode: ck.model.config.mode, studies: idx.len(), metrics };
    create_dir(out)?;
    let mut manifest = Manifest::new("evaluate", cfg)?;
    write_json(&out.join("evaluation.json"), &file)?;
    manifest.record(out, "evaluation.json")?;
    manifest.write(out)?;
    Ok(format!("accuracy {:.4}  mIoU {:.4}  over {} studies", metrics.accuracy, metrics.miou, idx.len()))
}

pub fn concordance_cmd(cfg: &ConcordanceConfig, out: &Path) -> Result<String> {
    let ck = Checkpoint::load(&cfg.checkpoint)?;
    let data = Loaded::read(&cfg.data)?;
    let layout = RegionLayout::from_lexicon(&data.lexicon)?;
    let gold: Vec<Sample> = data.samples.iter().map(Sample::gold).collect();
    let pool = build_pools(&gold);
    let ctx = PerturbContext { lexicon: &data.lexicon, layout: &layout, pool: &pool, overlap_threshold: cfg.overlap_threshold };
    let idx = test_indices(cfg.split.as_deref(), &data)?;
    let study: ConcordanceStudy =
        concordance_study(&ck.model, &data.examples(&idx), &cfg.profiles, &ctx, cfg.convention, cfg.matching, cfg.seed)?;
    create_dir(out)?;
    let mut manifest = Manifest::new("concordance", cfg)?;
    write_json(&out.join("concordance.json"), &study)?;
    manifest.record(out, "concordance.json")?;
    manifest.write(out)?;
    Ok(format!("ccc {:.4} over {} generators; RQ(A,G) monotone: {}", study.ccc, study.rows.len(), study.rq_ag_monotone))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: AblationMode,
    pub accuracy: f64,
    pub miou: f64,
    pub final_epoch: Option<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationFile {
    pub test_studies: usize,
    pub rows: Vec<AblationRow>,
    /// Modes ordered by held-out mIoU, best first.
    pub ranking_by_miou: Vec<AblationMode>,
}

pub fn ablate_cmd(cfg: &AblateConfig, out: &Path, verbose: bool) -> Result<String> {
    if cfg.modes.is_empty() {
        return Err(Error::Config("no ablation modes given".into()));
    }
    let data = Loaded::read(&cfg.data)?;
    let split = SplitFile::new(&cfg.split, data.samples.len())?;
    let (tr, va, te) = (data.examples(&split.train), data.examples(&split.val), data.examples(&split.test));
    let mut rows = Vec::new();
    for &mode in &cfg.modes {
        let model = FcConfig { mode, ..cfg.model.clone() };
        let ck = train(&tr, &va, &data.lexicon, &model, cfg.seed, |_| {})?;
        let m = evaluate_model(&ck.model, &te)?;
        if verbose {
            eprintln!("{mode}: accuracy {:.4}  mIoU {:.4}", m.accuracy, m.miou);
        }
        rows.push(AblationRow { mode, accuracy: m.accuracy, miou: m.miou, final_epoch: ck.metrics.last().copied() });
    }
    let mut ranked: Vec<&AblationRow> = rows.iter().collect();
    ranked.sort_by(|a, b| b.miou.total_cmp(&a.miou));
    let file = AblationFile {
        test_studies: te.len(),
        ranking_by_miou: ranked.iter().map(|r| r.mode).collect(),
        rows,
    };
    create_dir(out)?;
    let mut manifest = Manifest::new("ablate", cfg)?;
    write_json(&out.join("ablation.json"), &file)?;
    manifest.record(out, "ablation.json")?;
    manifest.write(out)?;
    Ok(format!("best mIoU: {}", file.ranking_by_miou[0]))
}

/// Kinds of file `validate-schema` understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FileKind {
    /// Gold samples: real findings only.
    Gold,
    /// Synthetic samples with real and fake findings.
    Synth,
    Reports,
    Checkpoint,
    Manifest,
}

/// Problems found in `path`; empty when it is valid.
pub fn validate_file(kind: FileKind, path: &Path, lexicon: Option<&Path>) -> Result<Vec<String>> {
    let lexicon = load_lexicon(lexicon)?;
    let mut problems = Vec::new();
    match kind {
        FileKind::Gold | FileKind::Synth => {
            for s in read_samples(path)? {
                if kind == FileKind::Gold && !s.findings_fake.is_empty() {
                    problems.push(format!("{}: gold sample carries fake findings", s.image_id));
                }
                for f in s.findings() {
                    if let Err(e) = lexicon.resolve(&f.ffl) {
                        problems.push(format!("{}: {e}", s.image_id));
                    }
                }
                problems.extend(s.violations().into_iter().map(|v| format!("{}: {v}", s.image_id)));
            }
        }
        FileKind::Reports => {
            for r in read_jsonl::<Report>(path)? {
                if r.findings.is_empty() {
                    problems.push(format!("{}: report has no findings", r.image_id));
                }
                for f in &r.findings {
                    if let Err(e) = lexicon.resolve(&f.ffl) {
                        problems.push(format!("{}: {e}", r.image_id));
                    }
                }
            }
        }
        FileKind::Checkpoint => {
            Checkpoint::load(path)?;
        }
        FileKind::Manifest => {
            let m = Manifest::load(path)?;
            let dir: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
            problems.extend(m.verify(&dir)?.into_iter().map(|a| format!("{a}: digest mismatch")));
        }
    }
    Ok(problems)
}

/// Convention flag shared by `assess` and `concordance`.
pub fn convention(paper_literal: bool, current: RqConvention) -> RqConvention {
    if paper_literal {
        RqConvention::PaperLiteral
    } else {
        current
    }
}
