//! Gaussian filtering in feature space: `out_i = sum_j exp(-|f_i - f_j|^2 / 2) v_j`.

use std::collections::HashMap;

use rayon::prelude::*;

use super::lattice::PermutohedralLattice;

/// Row-major feature vectors, each coordinate already divided by its bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0, "feature dimension must be positive");
        assert_eq!(data.len() % dim, 0, "feature data is not a whole number of points");
        assert!(data.iter().all(|v| v.is_finite()), "features must be finite");
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        self.point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// A prepared Gaussian filter over a fixed point set.
pub trait GaussianFilter: Send + Sync {
    /// Filters `value_dim` channels per point.
    fn apply(&self, values: &[f64], value_dim: usize) -> Vec<f64>;
}

/// Which filter implementation mean-field inference uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterBackend {
    /// Exact double sum over all pairs.
    BruteForce,
    /// Truncated sum over feature-space neighbours.
    #[default]
    Neighbourhood,
    /// Permutohedral lattice: fastest on large images, but only a coarse
    /// approximation of the Gaussian.
    Lattice,
}

impl FilterBackend {
    pub fn prepare(self, features: &FeatureSet) -> Box<dyn GaussianFilter> {
        match self {
            FilterBackend::BruteForce => Box::new(BruteForceFilter::new(features.clone())),
            FilterBackend::Neighbourhood => Box::new(NeighbourhoodFilter::new(features)),
            FilterBackend::Lattice => Box::new(LatticeFilter(PermutohedralLattice::new(
                features.data(),
                features.dim(),
            ))),
        }
    }
}

pub struct BruteForceFilter {
    features: FeatureSet,
}

impl BruteForceFilter {
    pub fn new(features: FeatureSet) -> Self {
        Self { features }
    }
}

impl GaussianFilter for BruteForceFilter {
    fn apply(&self, values: &[f64], value_dim: usize) -> Vec<f64> {
        let n = self.features.len();
        assert_eq!(values.len(), n * value_dim, "one value vector per point");
        let mut out = vec![0.0; values.len()];
        out.par_chunks_mut(value_dim).enumerate().for_each(|(i, row)| {
            for j in 0..n {
                let k = (-0.5 * self.features.squared_distance(i, j)).exp();
                for (o, v) in row.iter_mut().zip(&values[j * value_dim..(j + 1) * value_dim]) {
                    *o += k * v;
                }
            }
        });
        out
    }
}

/// Exact reference filter, including each point's own contribution.
pub fn gaussian_filter_bruteforce(features: &FeatureSet, values: &[f64], value_dim: usize) -> Vec<f64> {
    BruteForceFilter::new(features.clone()).apply(values, value_dim)
}

/// Fast filter; see [`NeighbourhoodFilter`].
pub fn gaussian_filter_fast(features: &FeatureSet, values: &[f64], value_dim: usize) -> Vec<f64> {
    NeighbourhoodFilter::new(features).apply(values, value_dim)
}

/// Pairs whose kernel value falls below this are dropped.
pub const NEIGHBOURHOOD_CUTOFF_WEIGHT: f64 = 1e-8;

/// Upper bound on cached pair weights before falling back to recomputing them.
const MAX_CACHED_PAIRS: usize = 40_000_000;

/// Gaussian sum truncated at the radius where the kernel drops below
/// [`NEIGHBOURHOOD_CUTOFF_WEIGHT`].
///
/// Points are bucketed into a grid of cubic cells whose side equals the cutoff
/// radius, so every partner of a point lies in the 3^d block of cells around it.
/// Work is proportional to the number of retained pairs: linear in the point count
/// when the point density is bounded, quadratic when every point sees every other.
pub struct NeighbourhoodFilter {
    features: FeatureSet,
    radius_sq: f64,
    /// Points sorted by cell, and per point the ranges of that sorted list to scan.
    order: Vec<u32>,
    scan: Vec<Vec<(u32, u32)>>,
    cache: Option<PairCache>,
}

/// Compressed rows of retained pairs `(i, j)` with `j > i`; the kernel is
/// symmetric and every point's own weight is 1, so the rest is implied.
struct PairCache {
    row_start: Vec<usize>,
    partner: Vec<u32>,
    weight: Vec<f32>,
    /// Row ranges scattered independently and summed in order, so results do not
    /// depend on the thread count.
    blocks: Vec<(usize, usize)>,
}

const SCATTER_BLOCKS: usize = 8;

impl NeighbourhoodFilter {
    pub fn new(features: &FeatureSet) -> Self {
        let radius_sq = -2.0 * NEIGHBOURHOOD_CUTOFF_WEIGHT.ln();
        let radius = radius_sq.sqrt();
        let (n, d) = (features.len(), features.dim());

        let cell_of = |i: usize| -> Vec<i64> {
            features.point(i).iter().map(|v| (v / radius).floor() as i64).collect()
        };
        let mut keyed: Vec<(Vec<i64>, u32)> = (0..n).map(|i| (cell_of(i), i as u32)).collect();
        keyed.sort();

        let mut cells: HashMap<Vec<i64>, (u32, u32)> = HashMap::new();
        let mut start = 0;
        while start < keyed.len() {
            let mut end = start + 1;
            while end < keyed.len() && keyed[end].0 == keyed[start].0 {
                end += 1;
            }
            cells.insert(keyed[start].0.clone(), (start as u32, end as u32));
            start = end;
        }
        let order: Vec<u32> = keyed.iter().map(|(_, i)| *i).collect();

        let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
            .map(|mut code| {
                (0..d)
                    .map(|_| {
                        let o = (code % 3) as i64 - 1;
                        code /= 3;
                        o
                    })
                    .collect()
            })
            .collect();
        let mut scan_of_cell: HashMap<&Vec<i64>, Vec<(u32, u32)>> = HashMap::new();
        for key in cells.keys() {
            let mut ranges: Vec<(u32, u32)> = offsets
                .iter()
                .filter_map(|off| {
                    let nb: Vec<i64> = key.iter().zip(off).map(|(k, o)| k + o).collect();
                    cells.get(&nb).copied()
                })
                .collect();
            ranges.sort_unstable();
            scan_of_cell.insert(key, ranges);
        }
        let mut scan = vec![Vec::new(); n];
        for (key, i) in &keyed {
            scan[*i as usize] = scan_of_cell[key].clone();
        }

        let mut filter = Self {
            features: features.clone(),
            radius_sq,
            order,
            scan,
            cache: None,
        };
        filter.cache = filter.build_cache();
        filter
    }

    fn neighbours(&self, i: usize, mut visit: impl FnMut(usize, f64)) {
        for &(a, b) in &self.scan[i] {
            for &j in &self.order[a as usize..b as usize] {
                let j = j as usize;
                let dist = self.features.squared_distance(i, j);
                if dist <= self.radius_sq {
                    visit(j, (-0.5 * dist).exp());
                }
            }
        }
    }

    fn build_cache(&self) -> Option<PairCache> {
        let n = self.features.len();
        let mut row_start = Vec::with_capacity(n + 1);
        let mut partner = Vec::new();
        let mut weight = Vec::new();
        row_start.push(0);
        for i in 0..n {
            for &(a, b) in &self.scan[i] {
                for &j in &self.order[a as usize..b as usize] {
                    if j as usize > i {
                        let dist = self.features.squared_distance(i, j as usize);
                        if dist <= self.radius_sq {
                            partner.push(j);
                            weight.push((-0.5 * dist).exp() as f32);
                        }
                    }
                }
            }
            if partner.len() > MAX_CACHED_PAIRS {
                return None;
            }
            row_start.push(partner.len());
        }

        let total = partner.len();
        let mut blocks = Vec::with_capacity(SCATTER_BLOCKS);
        let mut lo = 0;
        for b in 1..=SCATTER_BLOCKS {
            let target = total * b / SCATTER_BLOCKS;
            let mut hi = lo;
            while hi < n && (row_start[hi] < target || b == SCATTER_BLOCKS) {
                hi += 1;
            }
            if hi > lo {
                blocks.push((lo, hi));
            }
            lo = hi;
        }
        Some(PairCache {
            row_start,
            partner,
            weight,
            blocks,
        })
    }

    /// Number of retained unordered pairs of distinct points; `None` when uncached.
    pub fn cached_pairs(&self) -> Option<usize> {
        self.cache.as_ref().map(|c| c.partner.len())
    }
}

impl PairCache {
    fn apply(&self, values: &[f64], vd: usize) -> Vec<f64> {
        let partials: Vec<Vec<f64>> = self
            .blocks
            .par_iter()
            .map(|&(lo, hi)| {
                let mut out = vec![0.0; values.len()];
                for i in lo..hi {
                    let range = self.row_start[i]..self.row_start[i + 1];
                    let vi = &values[i * vd..(i + 1) * vd];
                    let mut acc = [0.0f64; 8];
                    for (&j, &w) in self.partner[range.clone()].iter().zip(&self.weight[range]) {
                        let (j, w) = (j as usize, f64::from(w));
                        let vj = &values[j * vd..(j + 1) * vd];
                        if vd <= acc.len() {
                            for c in 0..vd {
                                acc[c] += w * vj[c];
                            }
                        } else {
                            for c in 0..vd {
                                out[i * vd + c] += w * vj[c];
                            }
                        }
                        for c in 0..vd {
                            out[j * vd + c] += w * vi[c];
                        }
                    }
                    if vd <= acc.len() {
                        for c in 0..vd {
                            out[i * vd + c] += acc[c];
                        }
                    }
                }
                out
            })
            .collect();
        let mut out = values.to_vec();
        for p in &partials {
            out.iter_mut().zip(p).for_each(|(o, v)| *o += v);
        }
        out
    }
}

impl GaussianFilter for NeighbourhoodFilter {
    fn apply(&self, values: &[f64], value_dim: usize) -> Vec<f64> {
        let vd = value_dim;
        assert_eq!(values.len(), self.features.len() * vd, "one value vector per point");
        if let Some(cache) = &self.cache {
            return cache.apply(values, vd);
        }
        let mut out = vec![0.0; values.len()];
        out.par_chunks_mut(vd).enumerate().for_each(|(i, row)| {
            self.neighbours(i, |j, w| {
                let v = &values[j * vd..(j + 1) * vd];
                row.iter_mut().zip(v).for_each(|(o, v)| *o += w * v);
            })
        });
        out
    }
}

struct LatticeFilter(PermutohedralLattice);

impl GaussianFilter for LatticeFilter {
    fn apply(&self, values: &[f64], value_dim: usize) -> Vec<f64> {
        self.0.filter(values, value_dim)
    }
}
