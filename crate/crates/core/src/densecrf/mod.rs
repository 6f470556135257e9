//! Fully connected CRF over the image grid with Potts label compatibility.
//!
//! The energy of a labelling combines the scene-level unary, the object-level unary
//! scaled by `alpha`, and Gaussian pairwise terms over appearance (position and
//! colour), position alone, and optionally position and depth. Mean-field inference
//! evaluates the pairwise messages with Gaussian filters in each kernel's feature
//! space.

mod filter;
mod lattice;

pub use filter::{
    gaussian_filter_bruteforce, gaussian_filter_fast, BruteForceFilter, FeatureSet, FilterBackend,
    GaussianFilter, NeighbourhoodFilter, NEIGHBOURHOOD_CUTOFF_WEIGHT,
};
pub use lattice::PermutohedralLattice;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagedata::{argmax_lowest, ColorField, DepthField, LabelField, ProbabilityField};
use crate::unary::UnaryField;

/// Per-pixel approximate posterior marginals.
pub type MarginalField = ProbabilityField;

/// Largest image, in pixels, accepted by [`energy`].
pub const DEFAULT_ENERGY_CAP: usize = 64 * 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Softmax of the combined unary.
    #[default]
    Unary,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelNorm {
    /// Raw Gaussian sums.
    None,
    /// Scale messages by `1/sqrt(K1)` on both sides, so a message stays on the
    /// order of the kernel weight whatever the image size.
    #[default]
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrfConfig {
    /// Weight of the object-level unary.
    pub alpha: f64,
    pub w_appearance: f64,
    pub w_smooth: f64,
    pub w_depth: f64,
    /// Spatial bandwidth of the appearance kernel, pixels.
    pub theta_alpha: f64,
    /// Colour bandwidth of the appearance kernel, 8-bit levels.
    pub theta_beta: f64,
    /// Spatial bandwidth of the smoothing kernel, pixels.
    pub theta_gamma: f64,
    /// Spatial bandwidth of the depth kernel, pixels.
    pub theta_delta: f64,
    /// Depth bandwidth of the depth kernel, millimetres.
    pub theta_epsilon: f64,
    pub iterations: usize,
    pub use_depth: bool,
    pub init: Init,
    pub kernel_norm: KernelNorm,
}

impl CrfConfig {
    pub fn mju_waste() -> Self {
        Self {
            alpha: 1.0,
            w_appearance: 3.0,
            w_smooth: 1.0,
            w_depth: 1.0,
            theta_alpha: 20.0,
            theta_beta: 20.0,
            theta_gamma: 1.0,
            theta_delta: 10.0,
            theta_epsilon: 20.0,
            iterations: 10,
            use_depth: true,
            init: Init::Unary,
            kernel_norm: KernelNorm::Symmetric,
        }
    }

    /// Colour-only preset; the depth term is switched off.
    pub fn taco() -> Self {
        Self {
            theta_alpha: 100.0,
            theta_gamma: 10.0,
            w_depth: 0.0,
            use_depth: false,
            ..Self::mju_waste()
        }
    }

    /// Same configuration with every pairwise weight set to zero.
    pub fn without_pairwise(&self) -> Self {
        Self {
            w_appearance: 0.0,
            w_smooth: 0.0,
            w_depth: 0.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("alpha", self.alpha),
            ("w_appearance", self.w_appearance),
            ("w_smooth", self.w_smooth),
            ("w_depth", self.w_depth),
        ];
        for (name, v) in weights {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        let bandwidths = [
            ("theta_alpha", self.theta_alpha),
            ("theta_beta", self.theta_beta),
            ("theta_gamma", self.theta_gamma),
            ("theta_delta", self.theta_delta),
            ("theta_epsilon", self.theta_epsilon),
        ];
        for (name, v) in bandwidths {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be finite and > 0")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for CrfConfig {
    fn default() -> Self {
        Self::mju_waste()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Appearance,
    Smoothing,
    Depth,
}

/// One weighted Gaussian pairwise kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub kind: KernelKind,
    pub weight: f64,
    pub features: FeatureSet,
}

impl Kernel {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.weight * (-0.5 * self.features.squared_distance(i, j)).exp()
    }
}

/// Builds the appearance and smoothing kernels, plus the depth kernel when depth
/// is given and enabled. `x` is the column and `y` the row of each pixel.
pub fn build_kernels(image: &ColorField, depth: Option<&DepthField>, cfg: &CrfConfig) -> Result<Vec<Kernel>> {
    cfg.validate()?;
    let (w, h) = (image.width(), image.height());
    let n = w * h;
    let mut appearance = Vec::with_capacity(n * 5);
    let mut smoothing = Vec::with_capacity(n * 2);
    for row in 0..h {
        for col in 0..w {
            let (x, y) = (col as f64, row as f64);
            let [r, g, b] = image.pixel(row, col);
            appearance.extend([
                x / cfg.theta_alpha,
                y / cfg.theta_alpha,
                f64::from(r) / cfg.theta_beta,
                f64::from(g) / cfg.theta_beta,
                f64::from(b) / cfg.theta_beta,
            ]);
            smoothing.extend([x / cfg.theta_gamma, y / cfg.theta_gamma]);
        }
    }
    let mut kernels = vec![
        Kernel {
            kind: KernelKind::Appearance,
            weight: cfg.w_appearance,
            features: FeatureSet::new(5, appearance),
        },
        Kernel {
            kind: KernelKind::Smoothing,
            weight: cfg.w_smooth,
            features: FeatureSet::new(2, smoothing),
        },
    ];

    if let (Some(depth), true) = (depth, cfg.use_depth) {
        if (depth.width(), depth.height()) != (w, h) {
            return Err(Error::DimensionMismatch(format!(
                "depth is {}x{}, image is {w}x{h}",
                depth.width(),
                depth.height()
            )));
        }
        if depth.missing_count() > 0 {
            return Err(Error::InvalidField(format!(
                "depth has {} missing pixels; fill them first",
                depth.missing_count()
            )));
        }
        let mut features = Vec::with_capacity(n * 3);
        for row in 0..h {
            for col in 0..w {
                features.extend([
                    col as f64 / cfg.theta_delta,
                    row as f64 / cfg.theta_delta,
                    depth.data()[row * w + col] / cfg.theta_epsilon,
                ]);
            }
        }
        kernels.push(Kernel {
            kind: KernelKind::Depth,
            weight: cfg.w_depth,
            features: FeatureSet::new(3, features),
        });
    }
    Ok(kernels)
}

fn combined_unary(coarse: &UnaryField, fused: &UnaryField, alpha: f64) -> Result<Vec<f64>> {
    if !coarse.same_shape(fused) {
        return Err(Error::DimensionMismatch(format!(
            "scene unary {}x{}x{} vs fused unary {}x{}x{}",
            coarse.width(),
            coarse.height(),
            coarse.classes(),
            fused.width(),
            fused.height(),
            fused.classes()
        )));
    }
    Ok(coarse
        .data()
        .iter()
        .zip(fused.data())
        .map(|(c, f)| c + alpha * f)
        .collect())
}

/// Normalises `scores` per pixel as `exp(score) / sum(exp(score))`.
fn normalise_exp(scores: &mut [f64], classes: usize) {
    for px in scores.chunks_exact_mut(classes) {
        let max = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in px.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        px.iter_mut().for_each(|v| *v /= sum);
    }
}

struct PreparedKernel {
    weight: f64,
    filter: Box<dyn GaussianFilter>,
    /// Per-pixel scale for symmetric normalisation.
    norm: Option<Vec<f64>>,
}

/// Mean-field inference state for one image.
pub struct MeanField {
    width: usize,
    height: usize,
    classes: usize,
    unary: Vec<f64>,
    kernels: Vec<PreparedKernel>,
    cfg: CrfConfig,
}

impl MeanField {
    /// Prepares one filter per kernel with a non-zero weight.
    pub fn new(
        unary_coarse: &UnaryField,
        unary_fused: &UnaryField,
        kernels: &[Kernel],
        cfg: &CrfConfig,
        backend: FilterBackend,
    ) -> Result<Self> {
        cfg.validate()?;
        let unary = combined_unary(unary_coarse, unary_fused, cfg.alpha)?;
        let n = unary_coarse.pixel_count();
        let mut prepared = Vec::new();
        for k in kernels {
            if k.features.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{:?} kernel has {} points for {n} pixels",
                    k.kind,
                    k.features.len()
                )));
            }
            if k.weight == 0.0 {
                continue;
            }
            let filter = backend.prepare(&k.features);
            let norm = match cfg.kernel_norm {
                KernelNorm::None => None,
                KernelNorm::Symmetric => Some(
                    filter
                        .apply(&vec![1.0; n], 1)
                        .into_iter()
                        .map(|s| 1.0 / s.max(f64::MIN_POSITIVE).sqrt())
                        .collect(),
                ),
            };
            prepared.push(PreparedKernel {
                weight: k.weight,
                filter,
                norm,
            });
        }
        Ok(Self {
            width: unary_coarse.width(),
            height: unary_coarse.height(),
            classes: unary_coarse.classes(),
            unary,
            kernels: prepared,
            cfg: *cfg,
        })
    }

    fn initial(&self) -> Vec<f64> {
        match self.cfg.init {
            Init::Unary => {
                let mut q: Vec<f64> = self.unary.iter().map(|u| -u).collect();
                normalise_exp(&mut q, self.classes);
                q
            }
            Init::Uniform => vec![1.0 / self.classes as f64; self.unary.len()],
        }
    }

    /// Pairwise messages: per pixel and class, the kernel-weighted mass of that
    /// class at every other pixel.
    fn messages(&self, q: &[f64]) -> Vec<f64> {
        let c = self.classes;
        let mut total = vec![0.0; q.len()];
        for k in &self.kernels {
            match &k.norm {
                None => {
                    let filtered = k.filter.apply(q, c);
                    for ((t, f), q) in total.iter_mut().zip(&filtered).zip(q) {
                        *t += k.weight * (f - q);
                    }
                }
                Some(norm) => {
                    let scaled: Vec<f64> =
                        q.iter().enumerate().map(|(i, v)| v * norm[i / c]).collect();
                    let filtered = k.filter.apply(&scaled, c);
                    for (i, t) in total.iter_mut().enumerate() {
                        let s = norm[i / c];
                        *t += k.weight * s * (filtered[i] - scaled[i]);
                    }
                }
            }
        }
        total
    }

    fn step(&self, q: &[f64]) -> Vec<f64> {
        let c = self.classes;
        let messages = self.messages(q);
        let mut next = vec![0.0; q.len()];
        for ((out, m), u) in next
            .chunks_exact_mut(c)
            .zip(messages.chunks_exact(c))
            .zip(self.unary.chunks_exact(c))
        {
            let all: f64 = m.iter().sum();
            for k in 0..c {
                // Potts: pay for the mass assigned to every other label
                out[k] = -u[k] - (all - m[k]);
            }
        }
        normalise_exp(&mut next, c);
        next
    }

    /// Runs exactly `cfg.iterations` updates.
    pub fn run(&self) -> Result<MarginalField> {
        self.run_with(|_, _| {})
    }

    /// Runs inference, handing each iterate to `observe` (iteration number from 1).
    pub fn run_with(&self, mut observe: impl FnMut(usize, &[f64])) -> Result<MarginalField> {
        let mut q = self.initial();
        for it in 1..=self.cfg.iterations {
            q = self.step(&q);
            observe(it, &q);
        }
        ProbabilityField::new(self.width, self.height, self.classes, q)
    }
}

/// Mean-field approximation of the CRF posterior.
pub fn mean_field(
    unary_coarse: &UnaryField,
    unary_fused: &UnaryField,
    kernels: &[Kernel],
    cfg: &CrfConfig,
    backend: FilterBackend,
) -> Result<MarginalField> {
    MeanField::new(unary_coarse, unary_fused, kernels, cfg, backend)?.run()
}

/// Per-pixel MAP label; ties go to the lower class index.
pub fn map_labels(q: &MarginalField) -> LabelField {
    q.argmax()
}

/// Labelling of the combined unary alone, which is what inference returns when
/// every pairwise weight is zero.
pub fn unary_labels(unary_coarse: &UnaryField, unary_fused: &UnaryField, alpha: f64) -> Result<LabelField> {
    let neg: Vec<f64> = combined_unary(unary_coarse, unary_fused, alpha)?
        .into_iter()
        .map(|u| -u)
        .collect();
    let c = unary_coarse.classes();
    let data = neg.chunks_exact(c).map(argmax_lowest).collect();
    LabelField::new(unary_coarse.width(), unary_coarse.height(), c, data)
}

/// Energy of a labelling, by exhaustive summation over all ordered pixel pairs.
///
/// With symmetric kernel normalisation each kernel value is scaled by
/// `1/sqrt(s_i s_j)`, where `s_i` is the kernel's row sum including the pixel
/// itself, matching the messages used in inference.
///
/// Diagnostic only: quadratic in the pixel count and refused above `cap` pixels.
pub fn energy(
    labels: &LabelField,
    unary_coarse: &UnaryField,
    unary_fused: &UnaryField,
    kernels: &[Kernel],
    cfg: &CrfConfig,
    cap: usize,
) -> Result<f64> {
    let n = labels.width() * labels.height();
    if n > cap {
        return Err(Error::TooLarge { pixels: n, cap });
    }
    if (labels.width(), labels.height()) != (unary_coarse.width(), unary_coarse.height())
        || !unary_coarse.same_shape(unary_fused)
    {
        return Err(Error::DimensionMismatch("labels and unaries differ in shape".into()));
    }
    if let Some(k) = kernels.iter().find(|k| k.features.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "{:?} kernel has {} points for {n} pixels",
            k.kind,
            k.features.len()
        )));
    }
    let c = unary_coarse.classes();
    let x = labels.data();
    let mut total = 0.0;
    for (i, &label) in x.iter().enumerate() {
        let k = usize::from(label);
        total += unary_coarse.data()[i * c + k] + cfg.alpha * unary_fused.data()[i * c + k];
    }
    let active: Vec<&Kernel> = kernels.iter().filter(|k| k.weight != 0.0).collect();
    let scales: Vec<Vec<f64>> = active
        .iter()
        .map(|k| match cfg.kernel_norm {
            KernelNorm::None => vec![1.0; n],
            KernelNorm::Symmetric => (0..n)
                .map(|i| {
                    let row: f64 = (0..n).map(|j| k.value(i, j)).sum::<f64>() / k.weight;
                    1.0 / row.sqrt()
                })
                .collect(),
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            if x[i] != x[j] {
                total += active
                    .iter()
                    .zip(&scales)
                    .map(|(k, s)| s[i] * k.value(i, j) * s[j])
                    .sum::<f64>();
            }
        }
    }
    Ok(total)
}
