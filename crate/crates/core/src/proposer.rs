//! Object region proposals from a coarse foreground labelling.
//!
//! Connected foreground components get a tight bounding box, which is grown on all
//! four sides and clipped to the image. Overlapping boxes are merged until none
//! overlap, and the survivors are filtered by area.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagedata::LabelField;
use crate::unary::RegionTranslation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(Error::InvalidConfig(format!("connectivity must be 4 or 8, got {n}"))),
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposerConfig {
    pub extension_fraction: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub connectivity: Connectivity,
}

impl ProposerConfig {
    /// Proposal area limits used for MJU-Waste sized images.
    pub fn mju_waste() -> Self {
        Self {
            extension_fraction: 0.30,
            n_min: 900,
            n_max: 40_000,
            connectivity: Connectivity::Eight,
        }
    }

    pub fn taco() -> Self {
        Self {
            n_min: 25_000,
            n_max: 250_000,
            ..Self::mju_waste()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.extension_fraction >= 0.0 && self.extension_fraction.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "extension fraction {} must be finite and non-negative",
                self.extension_fraction
            )));
        }
        if !(0 < self.n_min && self.n_min < self.n_max) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < n_min < n_max, got {} and {}",
                self.n_min, self.n_max
            )));
        }
        Ok(())
    }
}

impl Default for ProposerConfig {
    fn default() -> Self {
        Self::mju_waste()
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl BoundingBox {
    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    /// True when the boxes share at least one pixel. Shared edges do not count.
    pub fn overlaps(&self, other: &BoundingBox) -> bool {
        self.top <= other.bottom
            && other.top <= self.bottom
            && self.left <= other.right
            && other.left <= self.right
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            top: self.top.min(other.top),
            left: self.left.min(other.left),
            bottom: self.bottom.max(other.bottom),
            right: self.right.max(other.right),
        }
    }

    fn include(&mut self, row: usize, col: usize) {
        self.top = self.top.min(row);
        self.left = self.left.min(col);
        self.bottom = self.bottom.max(row);
        self.right = self.right.max(col);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub id: usize,
    pub pixel_count: usize,
    pub bbox: BoundingBox,
}

/// Foreground components of a label map. Ids follow raster order of first pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentMap {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<Option<usize>>,
    pub components: Vec<Component>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

/// Two-pass union-find labelling of every non-zero pixel.
pub fn connected_components(labels: &LabelField, connectivity: Connectivity) -> ComponentMap {
    let (w, h) = (labels.width(), labels.height());
    let fg = labels.data();
    let mut provisional = vec![usize::MAX; w * h];
    let mut parent: Vec<usize> = Vec::new();

    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if fg[i] == 0 {
                continue;
            }
            let mut neighbours = [usize::MAX; 4];
            if col > 0 {
                neighbours[0] = provisional[i - 1];
            }
            if row > 0 {
                neighbours[1] = provisional[i - w];
                if connectivity == Connectivity::Eight {
                    if col > 0 {
                        neighbours[2] = provisional[i - w - 1];
                    }
                    if col + 1 < w {
                        neighbours[3] = provisional[i - w + 1];
                    }
                }
            }
            let mut label = usize::MAX;
            for &n in neighbours.iter().filter(|&&n| n != usize::MAX) {
                if label == usize::MAX {
                    label = n;
                } else {
                    union(&mut parent, label, n);
                }
            }
            if label == usize::MAX {
                label = parent.len();
                parent.push(label);
            }
            provisional[i] = label;
        }
    }

    let mut root_to_id = vec![usize::MAX; parent.len()];
    let mut ids = vec![None; w * h];
    let mut components: Vec<Component> = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if provisional[i] == usize::MAX {
                continue;
            }
            let root = find(&mut parent, provisional[i]);
            if root_to_id[root] == usize::MAX {
                root_to_id[root] = components.len();
                components.push(Component {
                    id: components.len(),
                    pixel_count: 0,
                    bbox: BoundingBox {
                        top: row,
                        left: col,
                        bottom: row,
                        right: col,
                    },
                });
            }
            let id = root_to_id[root];
            ids[i] = Some(id);
            let comp = &mut components[id];
            comp.pixel_count += 1;
            comp.bbox.include(row, col);
        }
    }

    ComponentMap {
        width: w,
        height: h,
        ids,
        components,
    }
}

/// An axis-aligned proposal rectangle and the components it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionProposal {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
    pub source_component_ids: Vec<usize>,
}

impl RegionProposal {
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn translation(&self) -> RegionTranslation {
        RegionTranslation {
            offset_row: self.top,
            offset_col: self.left,
            region_height: self.height,
            region_width: self.width,
        }
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox {
            top: self.top,
            left: self.left,
            bottom: self.top + self.height - 1,
            right: self.left + self.width - 1,
        }
    }
}

/// Half-up rounding; the epsilon keeps products like 0.3 * 5 on the upper side.
fn extension(fraction: f64, extent: usize) -> usize {
    (fraction * extent as f64 + 0.5 + 1e-9).floor() as usize
}

/// Grows a tight box by `fraction` of its own extent on each side, clipped to the image.
pub fn extend_box(b: &BoundingBox, fraction: f64, width: usize, height: usize) -> BoundingBox {
    let dr = extension(fraction, b.height());
    let dc = extension(fraction, b.width());
    BoundingBox {
        top: b.top.saturating_sub(dr),
        left: b.left.saturating_sub(dc),
        bottom: (b.bottom + dr).min(height - 1),
        right: (b.right + dc).min(width - 1),
    }
}

/// Replaces overlapping boxes by their union until no two overlap.
pub fn merge_overlapping(mut boxes: Vec<(BoundingBox, Vec<usize>)>) -> Vec<(BoundingBox, Vec<usize>)> {
    'restart: loop {
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if boxes[i].0.overlaps(&boxes[j].0) {
                    let (bj, sj) = boxes.remove(j);
                    let (bi, si) = &mut boxes[i];
                    *bi = bi.union(&bj);
                    si.extend(sj);
                    continue 'restart;
                }
            }
        }
        return boxes;
    }
}

/// Region proposals for the foreground (non-zero) pixels of `labels`, sorted by
/// top then left.
pub fn propose(labels: &LabelField, cfg: &ProposerConfig) -> Result<Vec<RegionProposal>> {
    cfg.validate()?;
    let (w, h) = (labels.width(), labels.height());
    let map = connected_components(labels, cfg.connectivity);
    let extended = map
        .components
        .iter()
        .map(|c| (extend_box(&c.bbox, cfg.extension_fraction, w, h), vec![c.id]))
        .collect();
    let mut proposals: Vec<RegionProposal> = merge_overlapping(extended)
        .into_iter()
        .filter(|(b, _)| (cfg.n_min..=cfg.n_max).contains(&b.area()))
        .map(|(b, mut ids)| {
            ids.sort_unstable();
            RegionProposal {
                top: b.top,
                left: b.left,
                height: b.height(),
                width: b.width(),
                source_component_ids: ids,
            }
        })
        .collect();
    proposals.sort_by_key(|p| (p.top, p.left));
    Ok(proposals)
}
