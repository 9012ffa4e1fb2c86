//! Voxel volumes, NIfTI-1 I/O, resampling and the label scheme.
//!
//! Voxels are stored x-fastest (`x + nx * (y + ny * z)`), which is the
//! on-disk order of NIfTI-1 payloads.

mod labels;
pub mod nifti;

pub use labels::{
    filter_cases, labels_present, remap_labels, CaseEntry, CaseInventory, LabelGroup, LabelMap, Split, Target,
    DEFAULT_MIN_LABELS, DEFAULT_SPLIT_SIZES,
};

use crate::error::{Error, Result};

/// A 3D voxel grid with physical spacing (mm per axis) and origin (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    voxels: Vec<T>,
}

/// CT intensities in Hounsfield units.
pub type ImageVolume = Volume<f32>;

/// Integer label IDs; 0 is background.
pub type LabelVolume = Volume<u16>;

impl<T> Volume<T> {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], voxels: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::argument(format!("volume dims must be >= 1, got {dims:?}")));
        }
        check_spacing(spacing)?;
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::argument(format!("non-finite origin {origin:?}")));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if voxels.len() != expected {
            return Err(Error::argument(format!(
                "voxel count {} does not match dims {dims:?} ({expected})",
                voxels.len()
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            voxels,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn voxels(&self) -> &[T] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<T> {
        self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.voxels[self.index(x, y, z)]
    }

    /// Same geometry, new voxel values.
    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Volume<U> {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            origin: self.origin,
            voxels: self.voxels.iter().map(f).collect(),
        }
    }

    /// True when `other` has the same dims and spacing (spacing compared to 1e-6 mm).
    pub fn same_grid<U>(&self, other: &Volume<U>) -> bool {
        self.dims == other.dims
            && self
                .spacing
                .iter()
                .zip(other.spacing.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-6)
    }
}

impl<T: Clone> Volume<T> {
    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: T) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, [0.0; 3], vec![value; n])
    }
}

pub(crate) fn check_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::argument(format!(
            "spacing must be positive and finite, got {spacing:?}"
        )));
    }
    Ok(())
}

/// Interpolation used by [`resample_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Nearest,
    Trilinear,
}

/// Output extent along one axis plus the input-index coordinate of every
/// output voxel center.
///
/// Output voxel `i` has its center at input index `(i + 0.5) * r - 0.5` with
/// `r = out_spacing / in_spacing`, so both grids span the same field of view.
fn axis_samples(n_in: usize, s_in: f64, s_out: f64) -> Vec<f64> {
    let n_out = ((n_in as f64 * s_in / s_out).round() as usize).max(1);
    let ratio = s_out / s_in;
    let hi = (n_in - 1) as f64;
    (0..n_out)
        .map(|i| ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, hi))
        .collect()
}

fn resampled_origin(origin: [f64; 3], s_in: [f64; 3], s_out: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|a| origin[a] + 0.5 * (s_out[a] - s_in[a]))
}

/// Nearest-neighbour resampling. Never introduces values absent from the input.
pub fn resample_nearest<T: Copy>(vol: &Volume<T>, target_spacing: [f64; 3]) -> Result<Volume<T>> {
    check_spacing(target_spacing)?;
    let axes: Vec<Vec<usize>> = (0..3)
        .map(|a| {
            axis_samples(vol.dims[a], vol.spacing[a], target_spacing[a])
                .into_iter()
                .map(|c| (c + 0.5).floor() as usize)
                .map(|i| i.min(vol.dims[a] - 1))
                .collect()
        })
        .collect();
    let dims = [axes[0].len(), axes[1].len(), axes[2].len()];
    let mut out = Vec::with_capacity(dims.iter().product());
    for &z in &axes[2] {
        for &y in &axes[1] {
            for &x in &axes[0] {
                out.push(*vol.get(x, y, z));
            }
        }
    }
    Volume::new(
        dims,
        target_spacing,
        resampled_origin(vol.origin, vol.spacing, target_spacing),
        out,
    )
}

/// Resample a CT image. Trilinear sampling clamps at the volume edge.
pub fn resample_image(vol: &ImageVolume, target_spacing: [f64; 3], mode: Interpolation) -> Result<ImageVolume> {
    if mode == Interpolation::Nearest {
        return resample_nearest(vol, target_spacing);
    }
    check_spacing(target_spacing)?;
    // (lower index, upper index, weight of upper)
    let axes: Vec<Vec<(usize, usize, f64)>> = (0..3)
        .map(|a| {
            let n = vol.dims[a];
            axis_samples(n, vol.spacing[a], target_spacing[a])
                .into_iter()
                .map(|c| {
                    let lo = c.floor() as usize;
                    let hi = (lo + 1).min(n - 1);
                    (lo, hi, c - lo as f64)
                })
                .collect()
        })
        .collect();
    let dims = [axes[0].len(), axes[1].len(), axes[2].len()];
    let mut out = Vec::with_capacity(dims.iter().product());
    let v = |x: usize, y: usize, z: usize| f64::from(*vol.get(x, y, z));
    for &(z0, z1, fz) in &axes[2] {
        for &(y0, y1, fy) in &axes[1] {
            for &(x0, x1, fx) in &axes[0] {
                let c00 = v(x0, y0, z0) * (1.0 - fx) + v(x1, y0, z0) * fx;
                let c10 = v(x0, y1, z0) * (1.0 - fx) + v(x1, y1, z0) * fx;
                let c01 = v(x0, y0, z1) * (1.0 - fx) + v(x1, y0, z1) * fx;
                let c11 = v(x0, y1, z1) * (1.0 - fx) + v(x1, y1, z1) * fx;
                let c0 = c00 * (1.0 - fy) + c10 * fy;
                let c1 = c01 * (1.0 - fy) + c11 * fy;
                out.push((c0 * (1.0 - fz) + c1 * fz) as f32);
            }
        }
    }
    Volume::new(
        dims,
        target_spacing,
        resampled_origin(vol.origin, vol.spacing, target_spacing),
        out,
    )
}

/// Label volumes are always resampled with nearest neighbour.
pub fn resample_labels(vol: &LabelVolume, target_spacing: [f64; 3]) -> Result<LabelVolume> {
    resample_nearest(vol, target_spacing)
}
