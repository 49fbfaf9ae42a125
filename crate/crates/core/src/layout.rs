//! Anatomical region grid shared by the toy world, the perturbation engine and scoring.

use crate::error::{Error, Result};
use crate::ffl::{fold, UNSPECIFIED};
use crate::geometry::BBox;
use crate::lexicon::Lexicon;

/// Regions tile the unit frame as a `rows x cols` grid in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionLayout {
    rows: usize,
    cols: usize,
    names: Vec<String>,
}

impl RegionLayout {
    pub fn grid(names: Vec<String>, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || names.len() != rows * cols {
            return Err(Error::Config(format!(
                "{} region names do not fill a {rows}x{cols} grid",
                names.len()
            )));
        }
        Ok(RegionLayout { rows, cols, names })
    }

    /// Square grid over the lexicon's region catalogue (6x6 for 36 regions).
    pub fn from_lexicon(lex: &Lexicon) -> Result<Self> {
        let n = lex.regions().len();
        let side = (n as f64).sqrt().round() as usize;
        RegionLayout::grid(lex.regions().to_vec(), side, side)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        let name = fold(name);
        self.names.iter().position(|n| *n == name)
    }

    pub fn cell_box(&self, index: usize) -> BBox {
        let (r, c) = (index / self.cols, index % self.cols);
        let (w, h) = (1.0 / self.cols as f64, 1.0 / self.rows as f64);
        BBox::clamped(c as f64 * w, r as f64 * h, w, h)
    }

    pub fn region_box(&self, name: &str) -> Option<BBox> {
        self.index_of(name).map(|i| self.cell_box(i))
    }

    /// Location implied by an anatomy phrase; the zero box when unspecified or unknown.
    pub fn indicated_box(&self, anatomy: &str) -> BBox {
        if fold(anatomy) == UNSPECIFIED {
            return BBox::ZERO;
        }
        self.region_box(anatomy).unwrap_or(BBox::ZERO)
    }

    /// Region whose cell contains the box center.
    pub fn region_index_of(&self, b: &BBox) -> usize {
        let (cx, cy) = b.center();
        let c = ((cx * self.cols as f64).floor() as usize).min(self.cols - 1);
        let r = ((cy * self.rows as f64).floor() as usize).min(self.rows - 1);
        r * self.cols + c
    }

    pub fn region_of(&self, b: &BBox) -> &str {
        &self.names[self.region_index_of(b)]
    }
}
