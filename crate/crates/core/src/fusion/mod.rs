//! Sliding-window score fusion with Gaussian importance weighting.
//!
//! Windows of edge `D` are laid out with stride `D * (1 - overlap)`; the last
//! window on each axis is clamped flush to the boundary. Axes shorter than
//! `D` are zero-padded symmetrically, so window origins live in the padded
//! grid and fused outputs are cropped back to the original extent.

mod patch_file;

pub use patch_file::{read_patches, write_patches, PatchFile, PATCH_MAGIC, PATCH_VERSION};

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_PATCH_SIZE: usize = 96;
pub const DEFAULT_OVERLAP: f64 = 0.5;
pub const DEFAULT_SIGMA_COEFF: f64 = 0.125;
/// Lower bound on importance weights.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Padded extent and low-side padding for one volume.
pub fn padded_geometry(dims: [usize; 3], patch_size: usize) -> ([usize; 3], [usize; 3]) {
    let padded = dims.map(|d| d.max(patch_size));
    let offset = [0, 1, 2].map(|a| (padded[a] - dims[a]) / 2);
    (padded, offset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowGrid {
    pub dims: [usize; 3],
    pub padded_dims: [usize; 3],
    /// Low-side zero padding per axis.
    pub pad_offset: [usize; 3],
    pub patch_size: usize,
    pub overlap: f64,
    /// Window origins in padded coordinates, lexicographic (x, y, z).
    pub origins: Vec<[usize; 3]>,
}

impl WindowGrid {
    pub fn stride(&self) -> usize {
        stride_for(self.patch_size, self.overlap)
    }

    /// Origins of `self` that are absent from `present`.
    pub fn missing<'a>(&self, present: impl IntoIterator<Item = &'a [usize; 3]>) -> Vec<[usize; 3]> {
        let have: std::collections::BTreeSet<[usize; 3]> = present.into_iter().copied().collect();
        self.origins.iter().filter(|o| !have.contains(*o)).copied().collect()
    }
}

fn stride_for(patch_size: usize, overlap: f64) -> usize {
    ((patch_size as f64 * (1.0 - overlap)).floor() as usize).max(1)
}

fn axis_origins(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut o = 0;
    loop {
        out.push(o);
        if o + patch >= extent {
            break;
        }
        o += stride;
        if o + patch > extent {
            o = extent - patch;
        }
    }
    out
}

/// Lay out sliding windows over a volume of `dims` voxels.
pub fn make_windows(dims: [usize; 3], patch_size: usize, overlap: f64) -> Result<WindowGrid> {
    if patch_size == 0 {
        return Err(Error::argument("patch size must be positive"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::argument(format!("overlap {overlap} is outside [0, 1)")));
    }
    if dims.contains(&0) {
        return Err(Error::argument(format!("volume dims must be >= 1, got {dims:?}")));
    }
    let stride = stride_for(patch_size, overlap);
    let (padded_dims, pad_offset) = padded_geometry(dims, patch_size);
    let per_axis = padded_dims.map(|d| axis_origins(d, patch_size, stride));
    let mut origins = Vec::with_capacity(per_axis.iter().map(Vec::len).product());
    for &x in &per_axis[0] {
        for &y in &per_axis[1] {
            for &z in &per_axis[2] {
                origins.push([x, y, z]);
            }
        }
    }
    Ok(WindowGrid {
        dims,
        padded_dims,
        pad_offset,
        patch_size,
        overlap,
        origins,
    })
}

/// Per-voxel fusion weights for one window, peak 1 at voxel `size / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianImportance {
    size: usize,
    sigma_coeff: f64,
    weights: Vec<f64>,
}

impl GaussianImportance {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma_coeff(&self) -> f64 {
        self.sigma_coeff
    }

    pub fn center(&self) -> usize {
        self.size / 2
    }

    #[inline]
    pub fn weight(&self, x: usize, y: usize, z: usize) -> f64 {
        self.weights[x + self.size * (y + self.size * z)]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `w = exp(-|v - c|^2 / (2 sigma^2))`, `sigma = sigma_coeff * patch_size`,
/// floored at [`WEIGHT_FLOOR`].
pub fn gaussian_weights(patch_size: usize, sigma_coeff: f64) -> Result<GaussianImportance> {
    if patch_size == 0 {
        return Err(Error::argument("patch size must be positive"));
    }
    if !(sigma_coeff.is_finite() && sigma_coeff > 0.0) {
        return Err(Error::argument(format!(
            "sigma coefficient must be positive, got {sigma_coeff}"
        )));
    }
    let sigma = sigma_coeff * patch_size as f64;
    let c = (patch_size / 2) as f64;
    // separable: exp(-(dx^2 + dy^2 + dz^2) / 2s^2) = g(dx) g(dy) g(dz)
    let axis: Vec<f64> = (0..patch_size)
        .map(|i| {
            let d = i as f64 - c;
            -d * d / (2.0 * sigma * sigma)
        })
        .collect();
    let n = patch_size;
    let mut weights = Vec::with_capacity(n * n * n);
    for &ez in &axis {
        for &ey in &axis {
            for &ex in &axis {
                weights.push((ex + ey + ez).exp().max(WEIGHT_FLOOR));
            }
        }
    }
    Ok(GaussianImportance {
        size: patch_size,
        sigma_coeff,
        weights,
    })
}

/// Class scores for one window.
///
/// `scores` is class-major: `scores[c * D^3 + x + D * (y + D * z)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePatch {
    pub origin: [usize; 3],
    pub classes: usize,
    pub size: usize,
    pub scores: Vec<f32>,
}

impl ScorePatch {
    pub fn new(origin: [usize; 3], classes: usize, size: usize, scores: Vec<f32>) -> Result<Self> {
        if classes == 0 || size == 0 {
            return Err(Error::argument("score patch needs at least one class and voxel"));
        }
        if scores.len() != classes * size * size * size {
            return Err(Error::argument(format!(
                "score block has {} values, expected {classes} x {size}^3",
                scores.len()
            )));
        }
        Ok(Self {
            origin,
            classes,
            size,
            scores,
        })
    }

    #[inline]
    pub fn score(&self, class: usize, x: usize, y: usize, z: usize) -> f32 {
        let d = self.size;
        self.scores[class * d * d * d + x + d * (y + d * z)]
    }
}

/// Whether patch scores are probabilities or logits. Logits are softmaxed
/// per voxel before accumulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreKind {
    #[default]
    Probabilities,
    Logits,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FuseOptions {
    pub score_kind: ScoreKind,
    /// Also return the fused per-class score volume.
    pub keep_scores: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedVolume {
    pub dims: [usize; 3],
    /// Argmax labels, x-fastest.
    pub labels: Vec<u16>,
    /// Fused class scores, class-major, when requested.
    pub scores: Option<Vec<f32>>,
    pub classes: usize,
}

fn validate(patches: &[ScorePatch], importance: &GaussianImportance, padded: [usize; 3]) -> Result<usize> {
    let first = patches
        .first()
        .ok_or_else(|| Error::argument("no score patches to fuse"))?;
    let classes = first.classes;
    if classes > usize::from(u16::MAX) + 1 {
        return Err(Error::argument(format!("{classes} classes exceed the label range")));
    }
    for p in patches {
        if p.classes != classes {
            return Err(Error::argument(format!(
                "class count differs between patches ({} vs {classes})",
                p.classes
            )));
        }
        if p.size != importance.size {
            return Err(Error::argument(format!(
                "patch size {} does not match importance map size {}",
                p.size, importance.size
            )));
        }
        if (0..3).any(|a| p.origin[a] + p.size > padded[a]) {
            return Err(Error::argument(format!(
                "window at {:?} extends past the padded volume {padded:?}",
                p.origin
            )));
        }
        if p.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::argument(format!("non-finite score in window at {:?}", p.origin)));
        }
    }
    Ok(classes)
}

/// Fuse window scores into a label volume of `volume_dims` voxels.
///
/// Per voxel the fused score of class `c` is `sum(w * s_c) / sum(w)` over the
/// covering windows, accumulated in lexicographic origin order whatever the
/// input order; the label is the arg-max with ties going to the lowest class.
pub fn fuse(
    patches: &[ScorePatch],
    importance: &GaussianImportance,
    volume_dims: [usize; 3],
    options: FuseOptions,
) -> Result<FusedVolume> {
    if volume_dims.contains(&0) {
        return Err(Error::argument(format!(
            "volume dims must be >= 1, got {volume_dims:?}"
        )));
    }
    let (padded, offset) = padded_geometry(volume_dims, importance.size);
    let classes = validate(patches, importance, padded)?;

    let mut order: Vec<&ScorePatch> = patches.iter().collect();
    order.sort_by_key(|p| p.origin);
    if let Some(w) = order.windows(2).find(|w| w[0].origin == w[1].origin) {
        return Err(Error::argument(format!("duplicate window origin {:?}", w[0].origin)));
    }

    let [nx, ny, nz] = volume_dims;
    let d = importance.size;
    let plane = nx * ny;

    let planes: Vec<(Vec<u16>, Option<Vec<f32>>)> = (0..nz)
        .into_par_iter()
        .map(|z| {
            let pz = z + offset[2];
            let mut num = vec![0f64; plane * classes];
            let mut den = vec![0f64; plane];
            let mut probs = vec![0f64; classes];
            for p in order.iter().filter(|p| (p.origin[2]..p.origin[2] + d).contains(&pz)) {
                let lz = pz - p.origin[2];
                for y in 0..ny {
                    let py = y + offset[1];
                    if !(p.origin[1]..p.origin[1] + d).contains(&py) {
                        continue;
                    }
                    let ly = py - p.origin[1];
                    for x in 0..nx {
                        let px = x + offset[0];
                        if !(p.origin[0]..p.origin[0] + d).contains(&px) {
                            continue;
                        }
                        let lx = px - p.origin[0];
                        let w = importance.weight(lx, ly, lz);
                        for (c, slot) in probs.iter_mut().enumerate() {
                            *slot = f64::from(p.score(c, lx, ly, lz));
                        }
                        if options.score_kind == ScoreKind::Logits {
                            softmax_in_place(&mut probs);
                        }
                        let v = x + nx * y;
                        den[v] += w;
                        for (acc, s) in num[v * classes..(v + 1) * classes].iter_mut().zip(&probs) {
                            *acc += w * s;
                        }
                    }
                }
            }
            let mut labels = vec![0u16; plane];
            let mut fused = options.keep_scores.then(|| vec![0f32; plane * classes]);
            for v in 0..plane {
                if den[v] <= 0.0 {
                    return Err(Error::Internal(format!(
                        "voxel ({}, {}, {z}) is not covered by any window",
                        v % nx,
                        v / nx
                    )));
                }
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for c in 0..classes {
                    let s = num[v * classes + c] / den[v];
                    if s > best_score {
                        best = c;
                        best_score = s;
                    }
                    if let Some(f) = fused.as_mut() {
                        f[c * plane + v] = s as f32;
                    }
                }
                labels[v] = best as u16;
            }
            Ok((labels, fused))
        })
        .collect::<Result<_>>()?;

    let n = plane * nz;
    let mut labels = Vec::with_capacity(n);
    let mut scores = options.keep_scores.then(|| vec![0f32; n * classes]);
    for (z, (l, f)) in planes.into_iter().enumerate() {
        labels.extend_from_slice(&l);
        if let (Some(out), Some(f)) = (scores.as_mut(), f) {
            for c in 0..classes {
                let dst = c * n + z * plane;
                out[dst..dst + plane].copy_from_slice(&f[c * plane..(c + 1) * plane]);
            }
        }
    }
    Ok(FusedVolume {
        dims: volume_dims,
        labels,
        scores,
        classes,
    })
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}
