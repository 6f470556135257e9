//! Permutohedral lattice: splat onto the vertices of the enclosing simplex,
//! blur along each lattice axis, and slice back with the same barycentric weights.

use std::collections::HashMap;

pub struct PermutohedralLattice {
    dim: usize,
    /// Per point, the d+1 enclosing vertex indices.
    offsets: Vec<usize>,
    /// Per point, the d+1 barycentric weights.
    weights: Vec<f64>,
    /// Per vertex, the two neighbour vertex indices along each of the d+1 axes.
    neighbours: Vec<[Option<usize>; 2]>,
    vertex_count: usize,
    point_count: usize,
}

impl PermutohedralLattice {
    /// `features` holds `point_count` rows of `dim` coordinates, already divided by
    /// the kernel bandwidth.
    pub fn new(features: &[f64], dim: usize) -> Self {
        assert!(dim > 0 && features.len().is_multiple_of(dim));
        let n = features.len() / dim;
        let d = dim;
        let d1 = d + 1;

        let inv_std = (2.0f64 / 3.0).sqrt() * d1 as f64;
        let scale: Vec<f64> = (0..d)
            .map(|i| inv_std / (((i + 1) * (i + 2)) as f64).sqrt())
            .collect();

        let mut table: HashMap<Vec<i32>, usize> = HashMap::new();
        let mut keys: Vec<Vec<i32>> = Vec::new();
        let mut offsets = Vec::with_capacity(n * d1);
        let mut weights = Vec::with_capacity(n * d1);

        let mut elevated = vec![0.0; d1];
        let mut rem0 = vec![0i32; d1];
        let mut rank = vec![0i32; d1];
        let mut bary = vec![0.0; d + 2];
        let mut key = vec![0i32; d];

        for p in 0..n {
            let f = &features[p * d..(p + 1) * d];
            let mut sm = 0.0;
            for i in (1..=d).rev() {
                let cf = f[i - 1] * scale[i - 1];
                elevated[i] = sm - i as f64 * cf;
                sm += cf;
            }
            elevated[0] = sm;

            let down_factor = 1.0 / d1 as f64;
            let mut sum = 0i32;
            for i in 0..d1 {
                let v = down_factor * elevated[i];
                let up = v.ceil() * d1 as f64;
                let down = v.floor() * d1 as f64;
                rem0[i] = if up - elevated[i] < elevated[i] - down {
                    up as i32
                } else {
                    down as i32
                };
                sum += rem0[i];
            }
            let sum = sum / d1 as i32;

            rank.iter_mut().for_each(|r| *r = 0);
            for i in 0..d {
                let di = elevated[i] - rem0[i] as f64;
                for j in i + 1..d1 {
                    if di < elevated[j] - rem0[j] as f64 {
                        rank[i] += 1;
                    } else {
                        rank[j] += 1;
                    }
                }
            }

            if sum > 0 {
                for i in 0..d1 {
                    if rank[i] >= d1 as i32 - sum {
                        rem0[i] -= d1 as i32;
                        rank[i] += sum - d1 as i32;
                    } else {
                        rank[i] += sum;
                    }
                }
            } else if sum < 0 {
                for i in 0..d1 {
                    if rank[i] < -sum {
                        rem0[i] += d1 as i32;
                        rank[i] += d1 as i32 + sum;
                    } else {
                        rank[i] += sum;
                    }
                }
            }

            bary.iter_mut().for_each(|b| *b = 0.0);
            for i in 0..d1 {
                let v = (elevated[i] - rem0[i] as f64) * down_factor;
                bary[d - rank[i] as usize] += v;
                bary[d + 1 - rank[i] as usize] -= v;
            }
            bary[0] += 1.0 + bary[d + 1];

            for remainder in 0..d1 as i32 {
                for i in 0..d {
                    key[i] = rem0[i]
                        + if rank[i] <= d as i32 - remainder {
                            remainder
                        } else {
                            remainder - d1 as i32
                        };
                }
                let idx = *table.entry(key.clone()).or_insert_with(|| {
                    keys.push(key.clone());
                    keys.len() - 1
                });
                offsets.push(idx);
                weights.push(bary[remainder as usize]);
            }
        }

        let vertex_count = keys.len();
        let mut neighbours = Vec::with_capacity(vertex_count * d1);
        let mut n1 = vec![0i32; d];
        let mut n2 = vec![0i32; d];
        for axis in 0..d1 {
            for k in &keys {
                for i in 0..d {
                    n1[i] = k[i] - 1;
                    n2[i] = k[i] + 1;
                }
                if axis < d {
                    n1[axis] = k[axis] + d as i32;
                    n2[axis] = k[axis] - d as i32;
                }
                neighbours.push([table.get(&n1).copied(), table.get(&n2).copied()]);
            }
        }

        Self {
            dim,
            offsets,
            weights,
            neighbours,
            vertex_count,
            point_count: n,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Approximate Gaussian sum over all points, for `value_dim` channels per point.
    pub fn filter(&self, values: &[f64], value_dim: usize) -> Vec<f64> {
        let d1 = self.dim + 1;
        let vd = value_dim;
        assert_eq!(values.len(), self.point_count * vd);

        let mut lattice = vec![0.0; self.vertex_count * vd];
        for p in 0..self.point_count {
            let v = &values[p * vd..(p + 1) * vd];
            for r in 0..d1 {
                let o = self.offsets[p * d1 + r] * vd;
                let w = self.weights[p * d1 + r];
                for c in 0..vd {
                    lattice[o + c] += w * v[c];
                }
            }
        }

        let mut next = vec![0.0; lattice.len()];
        for axis in 0..d1 {
            let nb = &self.neighbours[axis * self.vertex_count..(axis + 1) * self.vertex_count];
            for (i, [a, b]) in nb.iter().enumerate() {
                for c in 0..vd {
                    let left = a.map_or(0.0, |j| lattice[j * vd + c]);
                    let right = b.map_or(0.0, |j| lattice[j * vd + c]);
                    next[i * vd + c] = lattice[i * vd + c] + 0.5 * (left + right);
                }
            }
            std::mem::swap(&mut lattice, &mut next);
        }

        let alpha = 1.0 / (1.0 + 2f64.powi(-(self.dim as i32)));
        let mut out = vec![0.0; values.len()];
        for p in 0..self.point_count {
            for r in 0..d1 {
                let o = self.offsets[p * d1 + r] * vd;
                let w = self.weights[p * d1 + r] * alpha;
                for c in 0..vd {
                    out[p * vd + c] += w * lattice[o + c];
                }
            }
        }
        out
    }
}
