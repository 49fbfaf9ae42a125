//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Oracles here are written independently of the library code they check.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use factcheck::cli::manifest::Manifest;
use factcheck::corpus::{GroundedFinding, Provenance, Sample, Split};
use factcheck::geometry::{giou, hull, iou};
use factcheck::layout::RegionLayout;
use factcheck::model::loss::supcon;
use factcheck::model::{grad_check, train, AblationMode, Checkpoint, Example, FcConfig};
use factcheck::perturb::{build_pools, generate_corpus, LocationPool, PerturbConfig, PerturbContext};
use factcheck::rng;
use factcheck::scoring::{
    ccc, concordance_study, default_profiles, evaluate_model, fc_score, rq_ground_truth, EvalMetrics, GoldMatch,
    IndicatedFinding, RqConvention, ScoreRow,
};
use factcheck::toyworld::{ToyConfig, ToyImage, ToyWorld};
use factcheck::{BBox, Ffl, Lexicon, Polarity};
use rand::Rng as _;

const GRAD_TOL: f64 = 1e-4;
const REDUCTION_TOL: f64 = 1e-12;
const RASTER: usize = 512;
const GEOMETRY_TOL: f64 = 2e-3;
const SCORING_TOL: f64 = 1e-9;
const MIN_ACCURACY: f64 = 0.90;
const MIN_MIOU: f64 = 0.45;
const MIN_CCC: f64 = 0.90;
const GOLD_SAMPLES: usize = 1000;
const SEED: u64 = 7;

struct Verdict {
    id: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn within(start: Instant, budget_s: u64) -> bool {
    start.elapsed() < Duration::from_secs(budget_s)
}

// ---------------------------------------------------------------- loss

fn loss_correctness() -> Verdict {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for mode in AblationMode::ALL {
        let rep = grad_check(&FcConfig { mode, ..FcConfig::default() }, 11);
        worst = worst.max(rep.max_rel_error);
        parts.push(format!("{mode} {:.2e}", rep.max_rel_error));
    }
    let mut r = rng::stream(3, 0);
    let mut dev: f64 = 0.0;
    for _ in 0..10_000 {
        let (sr, sf) = (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let tau = r.random_range(0.02..2.0);
        let got = supcon(&[sr], &[sf], tau, false).expect("one real, one fake").loss;
        dev = dev.max((got - (sf - sr) / tau).abs());
    }
    Verdict {
        id: "C1 loss correctness",
        pass: worst < GRAD_TOL && dev <= REDUCTION_TOL && within(start, 60),
        detail: format!("max rel err {worst:.2e} ({}); 1-real/1-fake reduction dev {dev:.1e}", parts.join(", ")),
        elapsed: start.elapsed(),
    }
}

// ---------------------------------------------------------------- geometry

/// Pixel-index extent `[c0, c1) x [r0, r1)` covered by a lattice box.
type Cells = (usize, usize, usize, usize);

fn lattice_box(r: &mut rng::Rng) -> (BBox, Option<Cells>) {
    if r.random_bool(0.1) {
        return (BBox::ZERO, None);
    }
    let span = |r: &mut rng::Rng| {
        let a = r.random_range(0..RASTER);
        let b = r.random_range(a + 1..=RASTER);
        (a, b)
    };
    let ((c0, c1), (r0, r1)) = (span(r), span(r));
    let n = RASTER as f64;
    let b = BBox::new(c0 as f64 / n, r0 as f64 / n, (c1 - c0) as f64 / n, (r1 - r0) as f64 / n).expect("lattice box");
    (b, Some((c0, c1, r0, r1)))
}

/// Pixels whose centre lies inside `b`.
fn rasterize(b: &BBox) -> Vec<bool> {
    let n = RASTER as f64;
    let mut m = vec![false; RASTER * RASTER];
    for row in 0..RASTER {
        let cy = (row as f64 + 0.5) / n;
        if cy < b.y || cy >= b.y + b.h {
            continue;
        }
        for col in 0..RASTER {
            let cx = (col as f64 + 0.5) / n;
            if cx >= b.x && cx < b.x + b.w {
                m[row * RASTER + col] = true;
            }
        }
    }
    m
}

fn geometry_oracle() -> Verdict {
    let start = Instant::now();
    let mut r = rng::stream(5, 0);
    let (mut e_iou, mut e_giou, mut e_hull) = (0.0f64, 0.0f64, 0.0f64);
    let mut zero_pairs = 0;
    for _ in 0..1000 {
        let (a, ca) = lattice_box(&mut r);
        let (b, cb) = lattice_box(&mut r);
        zero_pairs += (ca.is_none() || cb.is_none()) as usize;
        let (ma, mb) = (rasterize(&a), rasterize(&b));
        let inter = ma.iter().zip(&mb).filter(|(x, y)| **x && **y).count() as f64;
        let union = ma.iter().zip(&mb).filter(|(x, y)| **x || **y).count() as f64;
        let iou_px = if union == 0.0 { 0.0 } else { inter / union };

        // hull of the covered pixels; a zero box adds the origin corner
        let (mut c0, mut r0, mut c1, mut r1) = (usize::MAX, usize::MAX, 0, 0);
        for (m, cells) in [(&ma, ca), (&mb, cb)] {
            if cells.is_none() {
                c0 = 0;
                r0 = 0;
            }
            for (k, _) in m.iter().enumerate().filter(|(_, v)| **v) {
                let (row, col) = (k / RASTER, k % RASTER);
                c0 = c0.min(col);
                r0 = r0.min(row);
                c1 = c1.max(col + 1);
                r1 = r1.max(row + 1);
            }
        }
        let n = RASTER as f64;
        let (c1, r1) = (c1.max(c0), r1.max(r0));
        let hull_px = ((c1 - c0) * (r1 - r0)) as f64;
        let h = hull(&a, &b);
        let oracle_hull = [c0 as f64 / n, r0 as f64 / n, (c1 - c0) as f64 / n, (r1 - r0) as f64 / n];
        for (got, want) in h.as_array().iter().zip(oracle_hull) {
            e_hull = e_hull.max((got - want).abs());
        }
        let giou_px = if hull_px == 0.0 { 0.0 } else { iou_px - (hull_px - union) / hull_px };
        e_iou = e_iou.max((iou(&a, &b) - iou_px).abs());
        e_giou = e_giou.max((giou(&a, &b) - giou_px).abs());
    }
    let worst = e_iou.max(e_giou).max(e_hull);
    Verdict {
        id: "C2 geometry oracle",
        pass: worst <= GEOMETRY_TOL && zero_pairs > 0 && within(start, 60),
        detail: format!(
            "1000 pairs ({zero_pairs} with a zero box) on a {RASTER}x{RASTER} raster; max err iou {e_iou:.1e}, giou {e_giou:.1e}, hull {e_hull:.1e}"
        ),
        elapsed: start.elapsed(),
    }
}

// ---------------------------------------------------------------- perturbation

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let h = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    let inter = w.max(0.0) * h.max(0.0);
    let union = a.w * a.h + b.w * b.h - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn key(g: &GroundedFinding) -> String {
    format!("{}@{:?}", g.ffl, g.bbox.as_array().map(f64::to_bits))
}

/// Every rule a synthetic sample must satisfy, checked from scratch.
fn scan(
    synth: &Sample,
    gold: &Sample,
    pool: &LocationPool,
    layout: &RegionLayout,
    lex: &Lexicon,
    cfg: &PerturbConfig,
) -> Vec<String> {
    let mut bad = Vec::new();
    let id = &synth.image_id;
    if synth.findings_real != gold.findings_real {
        bad.push(format!("{id}: real findings changed"));
    }
    let mut seen = BTreeSet::new();
    for f in synth.findings() {
        if !seen.insert(key(f)) {
            bad.push(format!("{id}: repeated record {}", f.ffl));
        }
    }
    let reals = &synth.findings_real;
    let present: BTreeSet<&str> = reals.iter().map(|g| g.ffl.core_finding.as_str()).collect();
    for g in reals {
        if g.e != 1 || g.provenance != Provenance::Original || g.bbox.w * g.bbox.h <= 0.0 {
            bad.push(format!("{id}: malformed real {}", g.ffl));
        }
    }
    let positives = reals.iter().filter(|g| g.ffl.polarity == Polarity::Yes).count();
    let mut per_kind = [0usize; 3];
    for f in &synth.findings_fake {
        if f.e != 0 {
            bad.push(format!("{id}: fake {} labelled real", f.ffl));
        }
        if f.provenance != Provenance::Reversal && reals.iter().any(|g| g.ffl == f.ffl || g.ffl == f.ffl.negate()) {
            bad.push(format!("{id}: fake {} repeats or negates a real finding", f.ffl));
        }
        let zero = f.bbox.x == 0.0 && f.bbox.y == 0.0 && f.bbox.w == 0.0 && f.bbox.h == 0.0;
        if zero != (f.provenance == Provenance::Reversal) {
            bad.push(format!("{id}: {:?} {} breaks reversal<=>zero box", f.provenance, f.ffl));
        }
        let in_pool = pool.get(&f.ffl.core_finding).iter().any(|b| b.as_array() == f.bbox.as_array());
        match f.provenance {
            Provenance::Reversal => {
                per_kind[0] += 1;
                if !reals.iter().any(|g| g.ffl.negate() == f.ffl) {
                    bad.push(format!("{id}: reversal {} has no source", f.ffl));
                }
            }
            Provenance::Relocate => {
                per_kind[1] += 1;
                let source = reals.iter().find(|g| {
                    g.ffl.polarity == f.ffl.polarity
                        && g.ffl.core_finding == f.ffl.core_finding
                        && overlap(&g.bbox, &f.bbox) < cfg.overlap_threshold
                });
                if source.is_none() || !in_pool || f.ffl.anatomy != layout.region_of(&f.bbox) {
                    bad.push(format!("{id}: relocation {} off pool, overlapping or mislabelled", f.ffl));
                }
            }
            Provenance::Substitution => {
                per_kind[2] += 1;
                let contradicts = present.iter().any(|p| lex.contradicts(p, &f.ffl.core_finding));
                if present.contains(f.ffl.core_finding.as_str())
                    || contradicts
                    || !in_pool
                    || f.ffl.polarity != Polarity::Yes
                    || f.ffl.anatomy != layout.region_of(&f.bbox)
                {
                    bad.push(format!("{id}: substitution {} is not a valid substitute", f.ffl));
                }
            }
            Provenance::Original => bad.push(format!("{id}: fake marked original")),
        }
    }
    let limits = [cfg.reversal, cfg.relocate, cfg.substitution];
    for (k, (&n, &l)) in per_kind.iter().zip(&limits).enumerate() {
        let reversible = if k == 0 && cfg.reverse_negatives { reals.len() } else { positives };
        if n > l * reversible {
            bad.push(format!("{id}: {n} fakes of kind {k}, at most {} expected", l * reversible));
        }
    }
    bad
}

fn jsonl_bytes(samples: &[Sample]) -> Vec<u8> {
    samples.iter().flat_map(|s| (serde_json::to_string(s).unwrap() + "\n").into_bytes()).collect()
}

fn perturbation_invariants() -> Verdict {
    let start = Instant::now();
    let lex = Lexicon::default();
    let world = ToyWorld::new(lex.clone(), ToyConfig::default()).unwrap();
    let (images, gold) = world.generate_gold(GOLD_SAMPLES, SEED).unwrap();
    let (images2, gold2) = world.generate_gold(GOLD_SAMPLES, SEED).unwrap();
    let pool = build_pools(&gold);
    let mut violations = Vec::new();
    let mut identical = images == images2 && jsonl_bytes(&gold) == jsonl_bytes(&gold2);
    let mut fakes = 0;
    for cfg in [PerturbConfig::default(), PerturbConfig::table2()] {
        let (a, _) = generate_corpus(&gold, &cfg, &lex, world.layout(), &pool, SEED);
        let (b, _) = generate_corpus(&gold, &cfg, &lex, world.layout(), &pool, SEED);
        identical &= jsonl_bytes(&a) == jsonl_bytes(&b);
        for (s, g) in a.iter().zip(&gold) {
            fakes += s.findings_fake.len();
            violations.extend(scan(s, g, &pool, world.layout(), &lex, &cfg));
        }
    }
    Verdict {
        id: "C3 perturbation invariants",
        pass: violations.is_empty() && identical && fakes > 0 && within(start, 60),
        detail: format!(
            "{GOLD_SAMPLES} gold samples, {fakes} fakes over default and table2 configs; {} violations{}; reruns byte-identical: {identical}",
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
        elapsed: start.elapsed(),
    }
}

// ---------------------------------------------------------------- learnability and concordance

struct Toy {
    lex: Lexicon,
    layout: RegionLayout,
    images: Vec<ToyImage>,
    corpus: Vec<Sample>,
    pool: LocationPool,
    split: Split,
}

impl Toy {
    fn new() -> Toy {
        let lex = Lexicon::default();
        let world = ToyWorld::new(lex.clone(), ToyConfig::default()).unwrap();
        let (images, gold) = world.generate_gold(GOLD_SAMPLES, SEED).unwrap();
        let pool = build_pools(&gold);
        let (corpus, _) = generate_corpus(&gold, &PerturbConfig::default(), &lex, world.layout(), &pool, SEED);
        let layout = world.layout().clone();
        Toy { lex, layout, images, corpus, pool, split: Split::new(GOLD_SAMPLES, 0, SEED) }
    }

    fn examples(&self, idx: &[usize]) -> Vec<Example<'_>> {
        idx.iter().map(|&i| Example { image: &self.images[i], sample: &self.corpus[i] }).collect()
    }

    fn fit(&self, mode: AblationMode) -> (Checkpoint, EvalMetrics) {
        let cfg = FcConfig { mode, ..FcConfig::default() };
        let ck = train(&self.examples(&self.split.train), &self.examples(&self.split.val), &self.lex, &cfg, SEED, |_| {})
            .unwrap();
        let m = evaluate_model(&ck.model, &self.examples(&self.split.test)).unwrap();
        (ck, m)
    }
}

fn learnability(toy: &Toy) -> (Verdict, Checkpoint) {
    let start = Instant::now();
    let (comb, m) = toy.fit(AblationMode::Comb);
    let (_, sep) = toy.fit(AblationMode::Sep);
    let epochs = comb.model.config.epochs;
    let pass = m.accuracy >= MIN_ACCURACY && m.miou >= MIN_MIOU && m.miou >= sep.miou && epochs <= 100;
    let v = Verdict {
        id: "C4 learnability",
        pass: pass && within(start, 20 * 60),
        detail: format!(
            "{GOLD_SAMPLES} gold samples, {epochs} epochs, {} test findings: FCRegComb accuracy {:.4} mIoU {:.4}; FCRegSep mIoU {:.4}",
            m.findings, m.accuracy, m.miou, sep.miou
        ),
        elapsed: start.elapsed(),
    };
    (v, comb)
}

fn concordance(toy: &Toy, ck: &Checkpoint) -> Verdict {
    let start = Instant::now();
    let ctx = PerturbContext { lexicon: &toy.lex, layout: &toy.layout, pool: &toy.pool, overlap_threshold: 0.2 };
    let test = toy.examples(&toy.split.test);
    let profiles = default_profiles();
    let study =
        concordance_study(&ck.model, &test, &profiles, &ctx, RqConvention::Default, GoldMatch::Pair, SEED).unwrap();
    let finding_only =
        concordance_study(&ck.model, &test, &profiles, &ctx, RqConvention::Default, GoldMatch::Finding, SEED).unwrap();
    let rates: Vec<f64> = study.rows.iter().map(|r| r.error_rate).collect();
    let span = rates.first() == Some(&0.0) && rates.last().is_some_and(|r| (r - 0.8).abs() < 1e-12);
    let table: Vec<String> = study.rows.iter().map(|r| format!("{:.2}:{:.3}/{:.3}", r.error_rate, r.rq_ap, r.rq_ag)).collect();
    Verdict {
        id: "C5 concordance",
        pass: study.ccc >= MIN_CCC && study.rq_ag_monotone && study.rows.len() >= 7 && span && within(start, 300),
        detail: format!(
            "ccc {:.4} over {} generators, RQ(A,G) monotone {}; rate:AP/AG {}; (finding-only matching ccc {:.4})",
            study.ccc,
            study.rows.len(),
            study.rq_ag_monotone,
            table.join(" "),
            finding_only.ccc
        ),
        elapsed: start.elapsed(),
    }
}

// ---------------------------------------------------------------- scoring

fn rand_box(r: &mut rng::Rng) -> BBox {
    if r.random_bool(0.15) {
        return BBox::ZERO;
    }
    let (w, h) = (r.random_range(0.05..0.5), r.random_range(0.05..0.5));
    BBox::new(r.random_range(0.0..1.0 - w), r.random_range(0.0..1.0 - h), w, h).unwrap()
}

fn rand_ffl(r: &mut rng::Rng, lex: &Lexicon) -> Ffl {
    let f = &lex.findings()[r.random_range(0..4)];
    let a = &lex.regions()[r.random_range(0..3)];
    let p = if r.random_bool(0.7) { Polarity::Yes } else { Polarity::No };
    Ffl::new(lex.finding_type(f), p, f, a)
}

fn scoring_oracle() -> Verdict {
    let start = Instant::now();
    let lex = Lexicon::default();
    let mut r = rng::stream(9, 0);
    let (mut e_fc, mut e_lit, mut e_gt, mut e_ccc) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        // fc_score over random rows
        let n = r.random_range(1..10);
        let rows: Vec<ScoreRow> =
            (0..n).map(|_| ScoreRow { real: r.random_bool(0.6), iou: r.random_range(0.0..1.0) }).collect();
        let mut per_row = 0.0;
        for row in &rows {
            per_row += 0.5 * (if row.real { 1.0 } else { 0.0 } + row.iou);
        }
        e_fc = e_fc.max((fc_score(&rows, RqConvention::Default).unwrap() - per_row / n as f64).abs());
        let any_real = rows.iter().any(|row| row.real);
        let literal = 0.5 * (any_real as u8 as f64) + rows.iter().map(|row| row.iou / (4.0 * n as f64)).sum::<f64>();
        e_lit = e_lit.max((fc_score(&rows, RqConvention::PaperLiteral).unwrap() - literal.clamp(0.0, 1.0)).abs());

        // rq_ground_truth against a brute-force matcher
        let mut gold = Sample::new("g", "g.png");
        for _ in 0..r.random_range(1..5) {
            let b = rand_box(&mut r);
            let b = if b == BBox::ZERO { BBox::new(0.1, 0.1, 0.2, 0.2).unwrap() } else { b };
            gold.findings_real.push(GroundedFinding::real(rand_ffl(&mut r, &lex), b));
        }
        let indicated: Vec<IndicatedFinding> = (0..r.random_range(1..6))
            .map(|_| {
                if r.random_bool(0.5) {
                    let g = &gold.findings_real[r.random_range(0..gold.findings_real.len())];
                    IndicatedFinding::new(g.ffl.clone(), if r.random_bool(0.5) { g.bbox } else { rand_box(&mut r) })
                } else {
                    IndicatedFinding::new(rand_ffl(&mut r, &lex), rand_box(&mut r))
                }
            })
            .collect();
        for matching in [GoldMatch::Pair, GoldMatch::Finding] {
            let (mut hits, mut overlap_sum) = (0.0, 0.0);
            for ind in &indicated {
                let mut best: Option<f64> = None;
                for g in &gold.findings_real {
                    let same = g.ffl.polarity == ind.ffl.polarity
                        && g.ffl.core_finding == ind.ffl.core_finding
                        && (matching == GoldMatch::Finding || g.ffl.anatomy == ind.ffl.anatomy);
                    if same {
                        best = Some(best.unwrap_or(0.0).max(overlap(&ind.indicated_box, &g.bbox)));
                    }
                }
                if let Some(o) = best {
                    hits += 1.0;
                    overlap_sum += o;
                }
            }
            let k = indicated.len() as f64;
            let want = 1.0 - 0.5 * (hits / k + overlap_sum / k);
            let got = rq_ground_truth(&indicated, &gold, RqConvention::Default, matching).unwrap();
            e_gt = e_gt.max((got - want).abs());
        }

        // ccc against the raw-moment form
        let m = r.random_range(2..30);
        let x: Vec<f64> = (0..m).map(|_| r.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.7 * v + r.random_range(-0.5..0.5) + 0.2).collect();
        let nf = m as f64;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let syy: f64 = y.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let (mx, my) = (sx / nf, sy / nf);
        let want = 2.0 * (sxy / nf - mx * my) / (sxx / nf - mx * mx + syy / nf - my * my + (mx - my).powi(2));
        e_ccc = e_ccc.max((ccc(&x, &y).unwrap() - want).abs());
    }
    let x = [-3.0, -1.0, 0.5, 1.5, 2.0];
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    let identity = ccc(&x, &x).unwrap() == 1.0 && ccc(&x, &neg).unwrap() == -1.0;
    let worst = e_fc.max(e_lit).max(e_gt).max(e_ccc);
    Verdict {
        id: "C6 scoring oracles",
        pass: worst <= SCORING_TOL && identity,
        detail: format!(
            "200 assessments; max err fc_score {e_fc:.1e}, paper-literal {e_lit:.1e}, rq_ground_truth {e_gt:.1e}, ccc {e_ccc:.1e}; ccc(x,x)=1 and ccc(x,-x)=-1 exactly: {identity}"
        ),
        elapsed: start.elapsed(),
    }
}

// ---------------------------------------------------------------- cli reproducibility

fn factcheck(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_factcheck")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn write_reports(gold_path: &Path, reports_path: &Path) {
    let text = fs::read_to_string(gold_path).unwrap();
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let s: Sample = serde_json::from_str(line).unwrap();
        // every third report drops its anatomy so the region lookup falls back
        let findings: Vec<serde_json::Value> = s
            .findings_real
            .iter()
            .map(|g| {
                let ffl = if i % 3 == 0 { g.ffl.with_anatomy("unspecified") } else { g.ffl.clone() };
                serde_json::json!({ "ffl": ffl })
            })
            .collect();
        let line = serde_json::json!({ "image_id": s.image_id, "image_ref": s.image_ref, "findings": findings });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    fs::write(reports_path, out).unwrap();
}

fn cli_pipeline(a: &Path) -> Result<Vec<&'static str>, String> {
    let p = |rel: &str| a.join(rel).display().to_string();
    let out = a.display().to_string();
    factcheck(&["gen-gold", "--out", &out, "--n", "40", "--seed", "3"])?;
    factcheck(&["gen-synth", "--out", &out, "--gold", &p("gold.jsonl"), "--seed", "3"])?;
    factcheck(&["train", "--out", &out, "--corpus", &p("synth.jsonl"), "--epochs", "3", "--quiet"])?;
    factcheck(&["predict", "--out", &out, "--checkpoint", &p("checkpoint.json"), "--corpus", &p("synth.jsonl")])?;
    let ck = p("checkpoint.json");
    let data = ["--corpus", &p("synth.jsonl")];
    factcheck(&[&["evaluate", "--out", &out, "--checkpoint", &ck, "--split", &p("split.json")][..], &data].concat())?;
    factcheck(&[&["concordance", "--out", &out, "--checkpoint", &ck, "--split", &p("split.json")][..], &data].concat())?;
    write_reports(&a.join("gold.jsonl"), &a.join("reports.jsonl"));
    factcheck(&["assess", "--out", &out, "--checkpoint", &ck, "--reports", &p("reports.jsonl"), "--gold", &p("gold.jsonl")])?;
    factcheck(&[&["ablate", "--out", &out, "--epochs", "2", "--quiet"][..], &data].concat())?;
    Ok(vec!["gen-gold", "gen-synth", "train", "predict", "evaluate", "concordance", "assess", "ablate"])
}

fn cli_reproducibility() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut problems = Vec::new();
    let mut artifacts = 0;
    match cli_pipeline(&a) {
        Err(e) => problems.push(e),
        Ok(commands) => {
            for cmd in &commands {
                let manifest_path = a.join(format!("{cmd}.manifest.json"));
                let replay = factcheck(&[
                    cmd,
                    "--config",
                    &manifest_path.display().to_string(),
                    "--out",
                    &b.display().to_string(),
                    "--quiet",
                ])
                .or_else(|_| {
                    factcheck(&[cmd, "--config", &manifest_path.display().to_string(), "--out", &b.display().to_string()])
                });
                if let Err(e) = replay {
                    problems.push(e);
                    continue;
                }
                let m = Manifest::load(&manifest_path).unwrap();
                match m.verify(&a) {
                    Ok(stale) if stale.is_empty() => {}
                    other => problems.push(format!("{cmd}: manifest does not match its outputs: {other:?}")),
                }
                for rel in m.artifacts.keys() {
                    artifacts += 1;
                    if fs::read(a.join(rel)).ok() != fs::read(b.join(rel)).ok() {
                        problems.push(format!("{cmd}: {rel} differs on replay"));
                    }
                }
                let name = format!("{cmd}.manifest.json");
                if fs::read(a.join(&name)).ok() != fs::read(b.join(&name)).ok() {
                    problems.push(format!("{cmd}: manifest differs on replay"));
                }
            }
        }
    }
    Verdict {
        id: "C7 cli reproducibility",
        pass: problems.is_empty() && artifacts > 0,
        detail: format!(
            "{artifacts} artifacts over 8 commands replayed from their manifests; {} mismatches{}",
            problems.len(),
            problems.first().map(|p| format!(" (first: {p})")).unwrap_or_default()
        ),
        elapsed: start.elapsed(),
    }
}

fn main() {
    let mut verdicts = vec![loss_correctness(), geometry_oracle(), perturbation_invariants()];
    let toy = Toy::new();
    let (learn, comb) = learnability(&toy);
    verdicts.push(learn);
    verdicts.push(concordance(&toy, &comb));
    verdicts.push(scoring_oracle());
    verdicts.push(cli_reproducibility());
    let mut failed = 0;
    for v in &verdicts {
        failed += !v.pass as usize;
        println!(
            "{} {}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.id,
            v.detail,
            v.elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria pass", verdicts.len() - failed, verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
