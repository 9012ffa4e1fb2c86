//! Boundary voxels and exact nearest-surface distances.
//!
//! Distances come from a separable squared Euclidean distance transform
//! (lower envelope of parabolas, one pass per axis) that also carries the
//! index of the nearest site. The reported distance is recomputed from that
//! site's coordinates, so it matches a direct point-to-point evaluation.

use super::Mask;
use crate::error::{Error, Result};

/// Boundary voxels of a mask under 6-connectivity, with the grid spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSet {
    spacing: [f64; 3],
    voxels: Vec<[usize; 3]>,
}

impl SurfaceSet {
    pub fn new(spacing: [f64; 3], voxels: Vec<[usize; 3]>) -> Self {
        Self { spacing, voxels }
    }

    pub fn voxels(&self) -> &[[usize; 3]] {
        &self.voxels
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// Voxel centers in mm (grid-relative).
    pub fn points(&self) -> Vec<[f64; 3]> {
        self.voxels.iter().map(|v| to_mm(*v, self.spacing)).collect()
    }
}

#[inline]
fn to_mm(v: [usize; 3], spacing: [f64; 3]) -> [f64; 3] {
    [
        v[0] as f64 * spacing[0],
        v[1] as f64 * spacing[1],
        v[2] as f64 * spacing[2],
    ]
}

#[inline]
pub(crate) fn point_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Foreground voxels with at least one background or out-of-grid 6-neighbour.
pub fn extract_surface(mask: &Mask, spacing: [f64; 3]) -> SurfaceSet {
    let [nx, ny, nz] = mask.dims();
    let mut voxels = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !mask.get(x, y, z) {
                    continue;
                }
                let interior = x > 0
                    && x + 1 < nx
                    && y > 0
                    && y + 1 < ny
                    && z > 0
                    && z + 1 < nz
                    && mask.get(x - 1, y, z)
                    && mask.get(x + 1, y, z)
                    && mask.get(x, y - 1, z)
                    && mask.get(x, y + 1, z)
                    && mask.get(x, y, z - 1)
                    && mask.get(x, y, z + 1);
                if !interior {
                    voxels.push([x, y, z]);
                }
            }
        }
    }
    SurfaceSet { spacing, voxels }
}

/// For every query point, the exact Euclidean distance (mm) to the closest
/// target point. Both sets must share a spacing.
pub fn nearest_surface_distances(query: &SurfaceSet, target: &SurfaceSet) -> Result<Vec<f64>> {
    if target.is_empty() {
        return Err(Error::argument("nearest-surface distance needs a nonempty target"));
    }
    if query.spacing != target.spacing {
        return Err(Error::argument(format!(
            "surface spacings differ: {:?} vs {:?}",
            query.spacing, target.spacing
        )));
    }
    if query.is_empty() {
        return Ok(Vec::new());
    }

    // Domain: bounding box of both sets. All sites lie inside it, so the
    // transform restricted to it is exact for every query voxel.
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for v in query.voxels.iter().chain(&target.voxels) {
        for a in 0..3 {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    let dims = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
    let local = |v: &[usize; 3]| (v[0] - lo[0]) + dims[0] * ((v[1] - lo[1]) + dims[1] * (v[2] - lo[2]));

    let n = dims.iter().product();
    let mut dist = vec![f64::INFINITY; n];
    let mut site = vec![usize::MAX; n];
    for (i, v) in target.voxels.iter().enumerate() {
        let idx = local(v);
        dist[idx] = 0.0;
        site[idx] = i;
    }
    for axis in 0..3 {
        transform_axis(&mut dist, &mut site, dims, axis, target.spacing[axis]);
    }

    let targets = target.points();
    Ok(query
        .voxels
        .iter()
        .map(|v| {
            let s = site[local(v)];
            point_distance(to_mm(*v, query.spacing), targets[s])
        })
        .collect())
}

fn transform_axis(dist: &mut [f64], site: &mut [usize], dims: [usize; 3], axis: usize, spacing: f64) {
    let len = dims[axis];
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let (outer_a, outer_b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let stride_of = |a: usize| {
        if a == 0 {
            1
        } else if a == 1 {
            dims[0]
        } else {
            dims[0] * dims[1]
        }
    };
    let w = spacing * spacing;

    let mut f = vec![0f64; len];
    let mut s = vec![0usize; len];
    let mut env = Envelope::with_capacity(len);
    for j in 0..dims[outer_b] {
        for i in 0..dims[outer_a] {
            let base = i * stride_of(outer_a) + j * stride_of(outer_b);
            for q in 0..len {
                f[q] = dist[base + q * stride];
                s[q] = site[base + q * stride];
            }
            env.lower_envelope(&f, w);
            if env.is_empty() {
                continue;
            }
            let mut k = 0;
            for q in 0..len {
                let qf = q as f64;
                while env.bounds[k + 1] < qf {
                    k += 1;
                }
                let p = env.parabolas[k];
                let d = p as f64 - qf;
                dist[base + q * stride] = w * d * d + f[p];
                site[base + q * stride] = s[p];
            }
        }
    }
}

struct Envelope {
    parabolas: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            parabolas: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    fn is_empty(&self) -> bool {
        self.parabolas.is_empty()
    }

    /// Lower envelope of `w (x - p)^2 + f[p]` over finite `f[p]`.
    fn lower_envelope(&mut self, f: &[f64], w: f64) {
        self.parabolas.clear();
        self.bounds.clear();
        self.bounds.push(f64::NEG_INFINITY);
        for (q, &fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            let qf = q as f64;
            let mut cut;
            loop {
                let Some(&p) = self.parabolas.last() else {
                    cut = f64::NEG_INFINITY;
                    break;
                };
                let pf = p as f64;
                cut = ((fq + w * qf * qf) - (f[p] + w * pf * pf)) / (2.0 * w * (qf - pf));
                if cut <= self.bounds[self.parabolas.len() - 1] {
                    self.parabolas.pop();
                    self.bounds.pop();
                } else {
                    break;
                }
            }
            if self.parabolas.is_empty() {
                self.bounds.clear();
                self.bounds.push(f64::NEG_INFINITY);
            } else {
                self.bounds.push(cut);
            }
            self.parabolas.push(q);
        }
        self.bounds.push(f64::INFINITY);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn mask(dims: [usize; 3], on: &[[usize; 3]]) -> Mask {
        let mut m = Mask::empty(dims);
        for v in on {
            m.set(v[0], v[1], v[2], true);
        }
        m
    }

    #[test]
    fn single_voxel_surface() {
        let m = mask([3, 3, 3], &[[1, 1, 1]]);
        let s = extract_surface(&m, [2.0, 2.0, 2.0]);
        assert_eq!(s.voxels(), &[[1, 1, 1]]);
        assert_eq!(s.points(), vec![[2.0, 2.0, 2.0]]);
    }

    #[test]
    fn cube_surface_excludes_only_center() {
        let mut on = Vec::new();
        for z in 1..4 {
            for y in 1..4 {
                for x in 1..4 {
                    on.push([x, y, z]);
                }
            }
        }
        let s = extract_surface(&mask([5, 5, 5], &on), [1.0; 3]);
        assert_eq!(s.len(), 26);
        assert!(!s.voxels().contains(&[2, 2, 2]));
        // touching the grid edge counts as boundary
        let full = Mask::new([3, 3, 3], vec![true; 27]).unwrap();
        assert_eq!(extract_surface(&full, [1.0; 3]).len(), 26);
    }

    #[test]
    fn empty_mask_has_empty_surface() {
        assert!(extract_surface(&Mask::empty([4, 4, 4]), [1.0; 3]).is_empty());
    }

    #[test]
    fn identical_sets_are_at_distance_zero() {
        let s = SurfaceSet::new([0.7, 1.2, 2.5], vec![[0, 0, 0], [3, 1, 2], [5, 5, 0]]);
        assert_eq!(nearest_surface_distances(&s, &s).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn two_points_four_mm_apart() {
        let a = SurfaceSet::new([2.0; 3], vec![[0, 0, 0]]);
        let b = SurfaceSet::new([2.0; 3], vec![[2, 0, 0]]);
        assert_eq!(nearest_surface_distances(&a, &b).unwrap(), vec![4.0]);
    }

    #[test]
    fn empty_target_is_an_error() {
        let a = SurfaceSet::new([1.0; 3], vec![[0, 0, 0]]);
        let b = SurfaceSet::new([1.0; 3], vec![]);
        assert!(nearest_surface_distances(&a, &b).is_err());
        assert!(nearest_surface_distances(&b, &a).unwrap().is_empty());
    }

    #[test]
    fn matches_all_pairs_on_random_masks() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..40 {
            let dims = [rng.gen_range(1..=12), rng.gen_range(1..=12), rng.gen_range(1..=12)];
            let spacing = [
                rng.gen_range(0.3..3.0),
                rng.gen_range(0.3..3.0),
                rng.gen_range(0.3..3.0),
            ];
            let n = dims.iter().product();
            let pa: f64 = rng.gen_range(0.02..0.6);
            let pb: f64 = rng.gen_range(0.02..0.6);
            let a = Mask::new(dims, (0..n).map(|_| rng.gen_bool(pa)).collect()).unwrap();
            let b = Mask::new(dims, (0..n).map(|_| rng.gen_bool(pb)).collect()).unwrap();
            let sa = extract_surface(&a, spacing);
            let sb = extract_surface(&b, spacing);
            if sb.is_empty() {
                continue;
            }
            let got = nearest_surface_distances(&sa, &sb).unwrap();
            let pts_b = sb.points();
            for (p, d) in sa.points().iter().zip(&got) {
                let brute = pts_b
                    .iter()
                    .map(|q| point_distance(*p, *q))
                    .fold(f64::INFINITY, f64::min);
                assert!((brute - d).abs() <= 1e-12, "{brute} vs {d}");
            }
        }
    }
}
