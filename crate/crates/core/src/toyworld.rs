//! Procedural gold corpus: grayscale images in which every finding is drawn as a
//! glyph with a finding-specific intensity code inside one anatomical region.
//!
//! Ground truth is exact by construction. Glyph boxes are pixel aligned and sit
//! strictly inside their region cell, leaving at least one background column and
//! row before the next cell so neighbouring glyphs never touch.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{GroundedFinding, Sample};
use crate::error::{Error, Result};
use crate::ffl::{Ffl, Polarity};
use crate::geometry::BBox;
use crate::layout::RegionLayout;
use crate::lexicon::Lexicon;
use crate::rng::{self, Rng};

pub const LOWEST_CODE: f64 = 0.3;
pub const HIGHEST_CODE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub width: usize,
    pub height: usize,
    pub min_findings: usize,
    pub max_findings: usize,
    /// Amplitude of the additive uniform pixel noise.
    pub noise: f64,
    /// Probability that a report carries one explicit negative mention.
    pub negative_prob: f64,
    /// Number of regions each finding can appear in.
    pub sites_per_finding: usize,
    /// Glyph side as a fraction of the usable cell side.
    pub size_min: f64,
    pub size_max: f64,
    /// Seed of the finding-to-site assignment; part of the world, not of a run.
    pub site_seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            width: 128,
            height: 128,
            min_findings: 1,
            max_findings: 4,
            noise: 0.05,
            negative_prob: 0.3,
            sites_per_finding: 4,
            size_min: 0.8,
            size_max: 1.0,
            site_seed: 36,
        }
    }
}

/// Single-channel 8-bit image; intensities are `value / 255`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyImage {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl ToyImage {
    pub fn blank(image_id: impl Into<String>, width: usize, height: usize) -> Self {
        ToyImage { image_id: image_id.into(), width, height, pixels: vec![0; width * height] }
    }

    pub fn intensity(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x] as f64 / 255.0
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        write_png(path, self.width, self.height, png::ColorType::Grayscale, &self.pixels, &[])
    }

    pub fn read_png(path: &Path, image_id: impl Into<String>) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let decoder = png::Decoder::new(BufReader::new(file));
        let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::Png("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
        if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Png(format!(
                "{}: expected 8-bit grayscale, got {:?}/{:?}",
                path.display(),
                info.color_type,
                info.bit_depth
            )));
        }
        buf.truncate(info.buffer_size());
        Ok(ToyImage {
            image_id: image_id.into(),
            width: info.width as usize,
            height: info.height as usize,
            pixels: buf,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlyphShape {
    Filled,
    Frame,
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedFinding {
    pub finding: String,
    pub region: String,
    pub bbox: BBox,
    pub glyph: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub image_id: String,
    pub placed: Vec<PlacedFinding>,
    /// Explicit negative mentions `(finding, region)`; nothing is drawn for them.
    pub negatives: Vec<(String, String)>,
    pub noise: f64,
}

#[derive(Debug, Clone)]
pub struct ToyWorld {
    lexicon: Lexicon,
    layout: RegionLayout,
    config: ToyConfig,
    sites: Vec<Vec<usize>>,
}

impl ToyWorld {
    pub fn new(lexicon: Lexicon, config: ToyConfig) -> Result<Self> {
        let layout = RegionLayout::from_lexicon(&lexicon)?;
        let k = lexicon.findings().len();
        if k < 2 {
            return Err(Error::Config("toy world needs at least two findings".into()));
        }
        if config.min_findings == 0 || config.min_findings > config.max_findings {
            return Err(Error::Config("need 1 <= min_findings <= max_findings".into()));
        }
        if config.max_findings > k.min(layout.len()) {
            return Err(Error::Config(format!(
                "max_findings {} exceeds placement capacity {}",
                config.max_findings,
                k.min(layout.len())
            )));
        }
        if config.sites_per_finding == 0 || config.sites_per_finding > layout.len() {
            return Err(Error::Config("sites_per_finding out of range".into()));
        }
        if !(0.0..=1.0).contains(&config.size_min)
            || !(config.size_min..=1.0).contains(&config.size_max)
        {
            return Err(Error::Config("need 0 <= size_min <= size_max <= 1".into()));
        }
        if config.width < 4 * layout.cols() || config.height < 4 * layout.rows() {
            return Err(Error::Config("image too small for the region grid".into()));
        }
        if !(0.0..0.1).contains(&config.noise) {
            return Err(Error::Config("noise must lie in [0, 0.1)".into()));
        }

        let mut r = rng::stream(config.site_seed, 0);
        let sites = (0..k)
            .map(|_| {
                let mut all: Vec<usize> = (0..layout.len()).collect();
                all.shuffle(&mut r);
                let mut s = all[..config.sites_per_finding].to_vec();
                s.sort_unstable();
                s
            })
            .collect();
        Ok(ToyWorld { lexicon, layout, config, sites })
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn layout(&self) -> &RegionLayout {
        &self.layout
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    /// Regions where a finding (by glyph id) can be drawn.
    pub fn sites(&self, glyph: usize) -> &[usize] {
        &self.sites[glyph]
    }

    /// Intensity code of each glyph id, evenly spaced in `[LOWEST_CODE, HIGHEST_CODE]`.
    pub fn glyph_codes(&self) -> Vec<f64> {
        glyph_codes(self.lexicon.findings().len())
    }

    pub fn glyph_shape(glyph: usize) -> GlyphShape {
        match glyph % 3 {
            0 => GlyphShape::Filled,
            1 => GlyphShape::Frame,
            _ => GlyphShape::Cross,
        }
    }

    /// Pixel span `[start, end)` usable for glyphs in cell `c` along an axis of
    /// `size` pixels split into `cells` cells.
    fn usable_span(size: usize, cells: usize, c: usize) -> (usize, usize) {
        let start = (c * size).div_ceil(cells);
        let end = ((c + 1) * size) / cells;
        (start, end.saturating_sub(1).max(start + 1))
    }

    pub fn image_id(index: usize) -> String {
        format!("toy{index:06}")
    }

    /// Sample the scene of image `index`; draws from `r`.
    pub fn sample_scene(&self, index: usize, r: &mut Rng) -> SceneSpec {
        let cfg = &self.config;
        let k = self.lexicon.findings().len();
        let count = r.random_range(cfg.min_findings..=cfg.max_findings);
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(r);

        let mut occupied = vec![false; self.layout.len()];
        let mut placed = Vec::new();
        for &glyph in &order {
            if placed.len() == count {
                break;
            }
            let free: Vec<usize> = self.sites[glyph].iter().copied().filter(|&s| !occupied[s]).collect();
            let Some(&region) = free.choose(r) else { continue };
            occupied[region] = true;
            let (row, col) = (region / self.layout.cols(), region % self.layout.cols());
            let (x0, x1) = Self::usable_span(cfg.width, self.layout.cols(), col);
            let (y0, y1) = Self::usable_span(cfg.height, self.layout.rows(), row);
            let mut side = |lo: usize, hi: usize| {
                let len = hi - lo;
                let frac = r.random_range(cfg.size_min..=cfg.size_max);
                let size = ((frac * len as f64).round() as usize).clamp(3.min(len), len);
                let offset = r.random_range(0..=len - size);
                (lo + offset, size)
            };
            let (px, pw) = side(x0, x1);
            let (py, ph) = side(y0, y1);
            let bbox = BBox::clamped(
                px as f64 / cfg.width as f64,
                py as f64 / cfg.height as f64,
                pw as f64 / cfg.width as f64,
                ph as f64 / cfg.height as f64,
            );
            placed.push(PlacedFinding {
                finding: self.lexicon.findings()[glyph].clone(),
                region: self.layout.name(region).to_string(),
                bbox,
                glyph,
            });
        }

        let mut negatives = Vec::new();
        if r.random_bool(cfg.negative_prob) {
            let absent: Vec<usize> = (0..k).filter(|g| !placed.iter().any(|p| p.glyph == *g)).collect();
            if let Some(&g) = absent.choose(r) {
                let region = *self.sites[g].choose(r).expect("sites are non-empty");
                negatives.push((self.lexicon.findings()[g].clone(), self.layout.name(region).to_string()));
            }
        }

        SceneSpec { image_id: Self::image_id(index), placed, negatives, noise: cfg.noise }
    }

    /// Rasterize a scene; noise is drawn from `r`.
    pub fn render(&self, scene: &SceneSpec, r: &mut Rng) -> ToyImage {
        let (w, h) = (self.config.width, self.config.height);
        let codes = self.glyph_codes();
        let mut base = vec![0.0f64; w * h];
        for p in &scene.placed {
            let (x0, y0) = ((p.bbox.x * w as f64).round() as usize, (p.bbox.y * h as f64).round() as usize);
            let (gw, gh) = ((p.bbox.w * w as f64).round() as usize, (p.bbox.h * h as f64).round() as usize);
            let shape = Self::glyph_shape(p.glyph);
            for dy in 0..gh {
                for dx in 0..gw {
                    if glyph_covers(shape, dx, dy, gw, gh) {
                        base[(y0 + dy) * w + x0 + dx] = codes[p.glyph];
                    }
                }
            }
        }
        let pixels = base
            .iter()
            .map(|&v| {
                let n = if scene.noise > 0.0 { r.random_range(-scene.noise..=scene.noise) } else { 0.0 };
                ((v + n).clamp(0.0, 1.0) * 255.0).round() as u8
            })
            .collect();
        ToyImage { image_id: scene.image_id.clone(), width: w, height: h, pixels }
    }

    /// Gold sample describing a scene: drawn findings with their glyph boxes, then
    /// negative mentions located at their region box.
    pub fn scene_sample(&self, scene: &SceneSpec) -> Sample {
        let mut s = Sample::new(&scene.image_id, format!("images/{}.png", scene.image_id));
        for p in &scene.placed {
            let ffl = Ffl::new(self.lexicon.finding_type(&p.finding), Polarity::Yes, &p.finding, &p.region);
            s.findings_real.push(GroundedFinding::real(ffl, p.bbox));
        }
        for (finding, region) in &scene.negatives {
            let ffl = Ffl::new(self.lexicon.finding_type(finding), Polarity::No, finding, region);
            let bbox = self.layout.region_box(region).expect("region from layout");
            s.findings_real.push(GroundedFinding::real(ffl, bbox));
        }
        s
    }

    /// Generate `n` images with their gold samples. Image `i` depends only on
    /// `(seed, i)`.
    pub fn generate_gold(&self, n: usize, seed: u64) -> Result<(Vec<ToyImage>, Vec<Sample>)> {
        if n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        let base = rng::derive(seed, "toyworld");
        let mut images = Vec::with_capacity(n);
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let mut r = rng::stream(base, i as u64);
            let scene = self.sample_scene(i, &mut r);
            images.push(self.render(&scene, &mut r));
            samples.push(self.scene_sample(&scene));
        }
        Ok((images, samples))
    }
}

pub fn glyph_codes(k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| LOWEST_CODE + (HIGHEST_CODE - LOWEST_CODE) * i as f64 / (k.max(2) - 1) as f64)
        .collect()
}

fn glyph_covers(shape: GlyphShape, dx: usize, dy: usize, w: usize, h: usize) -> bool {
    match shape {
        GlyphShape::Filled => true,
        GlyphShape::Frame => {
            let t = (w.min(h) / 4).max(2);
            dx < t || dy < t || dx + t >= w || dy + t >= h
        }
        GlyphShape::Cross => {
            let in_band = |d: usize, len: usize| d >= len / 4 && d < len - len / 4;
            in_band(dx, w) || in_band(dy, h)
        }
    }
}

/// Role of an overlay rectangle; the colour follows the usual error-explanation
/// legend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlayColor {
    /// Green.
    Predicted,
    /// Orange.
    Indicated,
    /// Red.
    GroundTruth,
}

impl OverlayColor {
    pub fn rgb(self) -> [u8; 3] {
        match self {
            OverlayColor::Predicted => [0, 200, 0],
            OverlayColor::Indicated => [255, 165, 0],
            OverlayColor::GroundTruth => [220, 0, 0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Overlay {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
    pub captions: Vec<String>,
}

impl Overlay {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// RGB PNG; captions go into `tEXt` chunks.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        write_png(path, self.width, self.height, png::ColorType::Rgb, &self.rgb, &self.captions)
    }
}

/// Draw 1-pixel box outlines over a grayscale image.
pub fn render_overlay(img: &ToyImage, boxes: &[(BBox, OverlayColor, String)]) -> Overlay {
    let (w, h) = (img.width, img.height);
    let mut rgb: Vec<u8> = img.pixels.iter().flat_map(|&p| [p, p, p]).collect();
    let mut captions = Vec::new();
    for (b, color, caption) in boxes {
        let to_px = |v: f64, n: usize| ((v * n as f64).floor() as usize).min(n - 1);
        let x0 = to_px(b.x, w);
        let y0 = to_px(b.y, h);
        let x1 = (((b.x1() * w as f64).ceil() as usize).max(1) - 1).clamp(x0, w - 1);
        let y1 = (((b.y1() * h as f64).ceil() as usize).max(1) - 1).clamp(y0, h - 1);
        let c = color.rgb();
        let mut put = |x: usize, y: usize| rgb[3 * (y * w + x)..3 * (y * w + x) + 3].copy_from_slice(&c);
        for x in x0..=x1 {
            put(x, y0);
            put(x, y1);
        }
        for y in y0..=y1 {
            put(x0, y);
            put(x1, y);
        }
        captions.push(format!("{:?}: {}", color, caption));
    }
    Overlay { width: w, height: h, rgb, captions }
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    data: &[u8],
    captions: &[String],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    for c in captions {
        enc.add_text_chunk("caption".to_string(), c.clone())
            .map_err(|e| Error::Png(e.to_string()))?;
    }
    let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
    writer.write_image_data(data).map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::iou;

    fn world(config: ToyConfig) -> ToyWorld {
        ToyWorld::new(Lexicon::default(), config).unwrap()
    }

    /// Independent oracle: 4-connected components of above-background pixels.
    fn components(img: &ToyImage, threshold: f64) -> Vec<BBox> {
        let (w, h) = (img.width, img.height);
        let mut seen = vec![false; w * h];
        let mut out = Vec::new();
        for start in 0..w * h {
            if seen[start] || img.pixels[start] as f64 / 255.0 <= threshold {
                continue;
            }
            let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(p) = stack.pop() {
                let (x, y) = (p % w, p / w);
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
                let mut push = |q: usize| {
                    if !seen[q] && img.pixels[q] as f64 / 255.0 > threshold {
                        seen[q] = true;
                        stack.push(q);
                    }
                };
                if x > 0 { push(p - 1); }
                if x + 1 < w { push(p + 1); }
                if y > 0 { push(p - w); }
                if y + 1 < h { push(p + w); }
            }
            out.push(BBox::from_corners(
                x0 as f64 / w as f64,
                y0 as f64 / h as f64,
                x1 as f64 / w as f64,
                y1 as f64 / h as f64,
            ));
        }
        out
    }

    #[test]
    fn single_finding_box_equals_rendered_bounds() {
        let w = world(ToyConfig { min_findings: 1, max_findings: 1, noise: 0.0, negative_prob: 0.0, ..Default::default() });
        let (images, samples) = w.generate_gold(1, 3).unwrap();
        assert_eq!(samples[0].findings_real.len(), 1);
        let comps = components(&images[0], 0.15);
        assert_eq!(comps.len(), 1);
        let b = samples[0].findings_real[0].bbox;
        for (u, v) in comps[0].as_array().iter().zip(b.as_array()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn regeneration_is_identical() {
        let w = world(ToyConfig::default());
        let a = w.generate_gold(20, 7).unwrap();
        let b = w.generate_gold(20, 7).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = w.generate_gold(20, 8).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn connected_components_recover_boxes() {
        let w = world(ToyConfig::default());
        let (images, samples) = w.generate_gold(60, 11).unwrap();
        for (img, s) in images.iter().zip(&samples) {
            let comps = components(img, 0.15);
            let drawn: Vec<_> = s.findings_real.iter().filter(|f| f.ffl.polarity == Polarity::Yes).collect();
            assert_eq!(comps.len(), drawn.len(), "{}", s.image_id);
            for f in drawn {
                let best = comps.iter().map(|c| iou(c, &f.bbox)).fold(0.0, f64::max);
                assert!(best > 0.95, "{} {}: {best}", s.image_id, f.ffl);
            }
        }
    }

    #[test]
    fn boxes_stay_inside_their_region() {
        let w = world(ToyConfig::default());
        let (_, samples) = w.generate_gold(200, 5).unwrap();
        for s in &samples {
            for f in &s.findings_real {
                let region = w.layout().region_box(&f.ffl.anatomy).unwrap();
                assert!(region.contains(&f.bbox), "{} {:?}", f.ffl, f.bbox);
                assert!(f.bbox.area() > 0.0);
            }
        }
    }

    #[test]
    fn findings_spread_over_regions() {
        let w = world(ToyConfig::default());
        let (_, samples) = w.generate_gold(1000, 1).unwrap();
        let mut regions: std::collections::BTreeMap<&str, std::collections::BTreeSet<&str>> = Default::default();
        for s in &samples {
            for f in s.findings_real.iter().filter(|f| f.ffl.polarity == Polarity::Yes) {
                regions.entry(&f.ffl.core_finding).or_default().insert(&f.ffl.anatomy);
            }
        }
        assert_eq!(regions.len(), w.lexicon().findings().len());
        for (f, r) in regions {
            assert!(r.len() >= 3, "{f} seen in {} regions", r.len());
        }
    }

    #[test]
    fn rejects_bad_requests() {
        let w = world(ToyConfig::default());
        assert!(w.generate_gold(0, 1).is_err());
        let cfg = ToyConfig { max_findings: 40, ..Default::default() };
        assert!(ToyWorld::new(Lexicon::default(), cfg).is_err());
    }

    #[test]
    fn overlay_geometry() {
        let img = ToyImage::blank("a", 128, 128);
        let plain = render_overlay(&img, &[]);
        assert!(plain.rgb.iter().all(|&v| v == 0));

        let o = render_overlay(&img, &[(BBox::FULL, OverlayColor::Predicted, "x".into())]);
        let green = OverlayColor::Predicted.rgb();
        for i in 0..128 {
            assert_eq!(o.pixel(i, 0), green);
            assert_eq!(o.pixel(i, 127), green);
            assert_eq!(o.pixel(0, i), green);
            assert_eq!(o.pixel(127, i), green);
        }
        assert_eq!(o.pixel(1, 1), [0, 0, 0]);
        assert_eq!(o.pixel(64, 64), [0, 0, 0]);
    }

    #[test]
    fn overlay_uses_three_colours() {
        let img = ToyImage::blank("a", 64, 64);
        let boxes = [
            (BBox::new(0.1, 0.1, 0.2, 0.2).unwrap(), OverlayColor::Predicted, "pred".to_string()),
            (BBox::new(0.5, 0.1, 0.2, 0.2).unwrap(), OverlayColor::Indicated, "ind".to_string()),
            (BBox::new(0.1, 0.6, 0.2, 0.2).unwrap(), OverlayColor::GroundTruth, "gt".to_string()),
        ];
        let o = render_overlay(&img, &boxes);
        assert_eq!(o.pixel(6, 6), [0, 200, 0]);
        assert_eq!(o.pixel(32, 6), [255, 165, 0]);
        assert_eq!(o.pixel(6, 38), [220, 0, 0]);
        assert_eq!(o.captions.len(), 3);
    }

    #[test]
    fn png_roundtrip() {
        let w = world(ToyConfig::default());
        let (images, _) = w.generate_gold(2, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        images[0].write_png(&p).unwrap();
        let back = ToyImage::read_png(&p, images[0].image_id.clone()).unwrap();
        assert_eq!(back, images[0]);
    }
}
