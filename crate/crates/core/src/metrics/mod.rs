//! Per-label Dice and Normalized Surface Distance, and their aggregation.
//!
//! `None` stands for an undefined value: both masks empty for Dice, both
//! surfaces empty for NSD. Undefined values are skipped by aggregation. If
//! exactly one side is empty, both metrics are 0.

mod aggregate;
mod surface;

pub use aggregate::{aggregate, case_group_means, AggregateRow, CaseGroupMean, Metric, Scope, TotalMode};
pub use surface::{extract_surface, nearest_surface_distances, SurfaceSet};

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{LabelMap, LabelVolume};

/// Surface tolerance for NSD, in mm.
pub const DEFAULT_NSD_TOLERANCE_MM: f64 = 3.0;

/// A binary voxel grid, x-fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: [usize; 3],
    voxels: Vec<bool>,
}

impl Mask {
    pub fn new(dims: [usize; 3], voxels: Vec<bool>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::argument(format!("mask dims must be >= 1, got {dims:?}")));
        }
        if voxels.len() != dims.iter().product::<usize>() {
            return Err(Error::argument(format!(
                "mask has {} voxels, dims {dims:?} need {}",
                voxels.len(),
                dims.iter().product::<usize>()
            )));
        }
        Ok(Self { dims, voxels })
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        Self {
            dims,
            voxels: vec![false; dims.iter().product()],
        }
    }

    /// Voxels equal to `label`.
    pub fn from_labels(vol: &LabelVolume, label: u16) -> Self {
        Self {
            dims: vol.dims(),
            voxels: vol.voxels().iter().map(|&v| v == label).collect(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxels(&self) -> &[bool] {
        &self.voxels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.voxels[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, on: bool) {
        let i = x + self.dims[0] * (y + self.dims[1] * z);
        self.voxels[i] = on;
    }

    pub fn count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v).count()
    }
}

fn check_dims(a: &Mask, b: &Mask) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::argument(format!(
            "mask dims differ: {:?} vs {:?}",
            a.dims, b.dims
        )));
    }
    Ok(())
}

/// `2|A∩B| / (|A|+|B|)`, `None` when both masks are empty.
pub fn dice(a: &Mask, b: &Mask) -> Result<Option<f64>> {
    check_dims(a, b)?;
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.voxels.iter().zip(&b.voxels) {
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    Ok(dice_from_counts(na, nb, both))
}

pub(crate) fn dice_from_counts(na: usize, nb: usize, both: usize) -> Option<f64> {
    if na + nb == 0 {
        None
    } else {
        Some(2.0 * both as f64 / (na + nb) as f64)
    }
}

/// Normalized Surface Distance at tolerance `tau` (mm).
pub fn nsd(a: &Mask, b: &Mask, spacing: [f64; 3], tau: f64) -> Result<Option<f64>> {
    check_dims(a, b)?;
    crate::volume::check_spacing(spacing)?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::argument(format!("NSD tolerance must be positive, got {tau}")));
    }
    let sa = extract_surface(a, spacing);
    let sb = extract_surface(b, spacing);
    nsd_from_surfaces(&sa, &sb, tau)
}

fn nsd_from_surfaces(sa: &SurfaceSet, sb: &SurfaceSet, tau: f64) -> Result<Option<f64>> {
    match (sa.is_empty(), sb.is_empty()) {
        (true, true) => return Ok(None),
        (true, false) | (false, true) => return Ok(Some(0.0)),
        _ => {}
    }
    let within = |d: Vec<f64>| d.into_iter().filter(|&d| d <= tau).count();
    let hits = within(nearest_surface_distances(sa, sb)?) + within(nearest_surface_distances(sb, sa)?);
    Ok(Some(hits as f64 / (sa.len() + sb.len()) as f64))
}

/// One (case, model, label) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub case_id: String,
    pub model_id: String,
    pub label_id: u16,
    pub dice: Option<f64>,
    pub nsd: Option<f64>,
}

/// One record per target label of `map`, in label order.
///
/// Each label is evaluated on the bounding box of its voxels in either
/// volume. Cropping changes neither overlap counts nor surfaces, since
/// everything outside the box is background for that label.
pub fn evaluate_case(
    pred: &LabelVolume,
    truth: &LabelVolume,
    map: &LabelMap,
    case_id: &str,
    model_id: &str,
    tau: f64,
) -> Result<Vec<MetricRecord>> {
    if pred.dims() != truth.dims() {
        return Err(Error::format(format!(
            "case {case_id}: prediction dims {:?} differ from truth {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    if !pred.same_grid(truth) {
        return Err(Error::format(format!(
            "case {case_id}: prediction spacing {:?} differs from truth {:?}",
            pred.spacing(),
            truth.spacing()
        )));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::argument(format!("NSD tolerance must be positive, got {tau}")));
    }
    let n_labels = map.num_targets();
    let boxes = label_boxes(pred, truth, n_labels);
    let spacing = truth.spacing();

    let mut out = Vec::with_capacity(n_labels);
    for target in map.targets() {
        let id = target.id;
        let (dice, nsd) = match &boxes[id as usize] {
            None => (None, None),
            Some(bb) => {
                let a = crop_mask(pred, id, bb);
                let b = crop_mask(truth, id, bb);
                (dice(&a, &b)?, nsd(&a, &b, spacing, tau)?)
            }
        };
        out.push(MetricRecord {
            case_id: case_id.to_string(),
            model_id: model_id.to_string(),
            label_id: id,
            dice,
            nsd,
        });
    }
    Ok(out)
}

type BoundingBox = ([usize; 3], [usize; 3]);

fn label_boxes(pred: &LabelVolume, truth: &LabelVolume, n_labels: usize) -> Vec<Option<BoundingBox>> {
    let mut boxes: Vec<Option<BoundingBox>> = vec![None; n_labels + 1];
    let [nx, ny, nz] = truth.dims();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = truth.index(x, y, z);
                for l in [pred.voxels()[i], truth.voxels()[i]] {
                    let l = l as usize;
                    if l == 0 || l > n_labels {
                        continue;
                    }
                    let p = [x, y, z];
                    match &mut boxes[l] {
                        Some((lo, hi)) => {
                            for a in 0..3 {
                                lo[a] = lo[a].min(p[a]);
                                hi[a] = hi[a].max(p[a]);
                            }
                        }
                        slot => *slot = Some((p, p)),
                    }
                }
            }
        }
    }
    boxes
}

fn crop_mask(vol: &LabelVolume, label: u16, (lo, hi): &BoundingBox) -> Mask {
    let dims = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
    let mut voxels = Vec::with_capacity(dims.iter().product());
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                voxels.push(*vol.get(x, y, z) == label);
            }
        }
    }
    Mask { dims, voxels }
}

const NA: &str = "NA";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

fn parse_opt(field: &str, what: &str, line: usize) -> Result<Option<f64>> {
    if field == NA {
        return Ok(None);
    }
    let v: f64 = field
        .parse()
        .map_err(|_| Error::format(format!("line {line}: bad {what} value {field:?}")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::format(format!("line {line}: {what} {v} outside [0, 1]")));
    }
    Ok(Some(v))
}

/// `case_id,model_id,label_id,dice,nsd`, `NA` for undefined values.
pub fn records_to_csv(records: &[MetricRecord]) -> String {
    let mut s = String::from("case_id,model_id,label_id,dice,nsd\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.case_id,
            r.model_id,
            r.label_id,
            fmt_opt(r.dice),
            fmt_opt(r.nsd)
        );
    }
    s
}

pub fn records_from_reader(reader: impl Read) -> Result<Vec<MetricRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::format(e.to_string()))?.clone();
    let expected = ["case_id", "model_id", "label_id", "dice", "nsd"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::format(format!(
            "metric record header must be {}",
            expected.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::format(format!("line {line}: {e}")))?;
        let label_id = row[2]
            .parse()
            .map_err(|_| Error::format(format!("line {line}: bad label_id {:?}", &row[2])))?;
        out.push(MetricRecord {
            case_id: row[0].to_string(),
            model_id: row[1].to_string(),
            label_id,
            dice: parse_opt(&row[3], "dice", line)?,
            nsd: parse_opt(&row[4], "nsd", line)?,
        });
    }
    Ok(out)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    records_from_reader(file)
}

pub fn write_records(path: impl AsRef<Path>, records: &[MetricRecord]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, records_to_csv(records)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{LabelGroup, Target, Volume};
    use proptest::prelude::*;

    fn mask(dims: [usize; 3], on: &[[usize; 3]]) -> Mask {
        let mut m = Mask::empty(dims);
        for v in on {
            m.set(v[0], v[1], v[2], true);
        }
        m
    }

    #[test]
    fn dice_hand_cases() {
        let d = [4, 1, 1];
        let a = mask(d, &[[0, 0, 0], [1, 0, 0]]);
        let b = mask(d, &[[1, 0, 0]]);
        assert_eq!(dice(&a, &b).unwrap(), Some(2.0 / 3.0));
        assert_eq!(dice(&a, &a).unwrap(), Some(1.0));
        assert_eq!(dice(&a, &mask(d, &[[3, 0, 0]])).unwrap(), Some(0.0));
        assert_eq!(dice(&Mask::empty(d), &Mask::empty(d)).unwrap(), None);
        assert!(dice(&a, &Mask::empty([2, 2, 1])).is_err());
    }

    #[test]
    fn nsd_hand_cases() {
        let d = [4, 1, 1];
        let a = mask(d, &[[0, 0, 0]]);
        // 4 mm apart > 3 mm
        assert_eq!(nsd(&a, &mask(d, &[[2, 0, 0]]), [2.0; 3], 3.0).unwrap(), Some(0.0));
        // 2 mm apart <= 3 mm
        assert_eq!(nsd(&a, &mask(d, &[[1, 0, 0]]), [2.0; 3], 3.0).unwrap(), Some(1.0));
        assert_eq!(nsd(&Mask::empty(d), &a, [2.0; 3], 3.0).unwrap(), Some(0.0));
        assert_eq!(nsd(&Mask::empty(d), &Mask::empty(d), [2.0; 3], 3.0).unwrap(), None);
        assert!(nsd(&a, &a, [2.0; 3], 0.0).is_err());
    }

    #[test]
    fn nsd_tolerance_is_inclusive() {
        let d = [4, 1, 1];
        let a = mask(d, &[[0, 0, 0]]);
        let b = mask(d, &[[1, 0, 0]]);
        assert_eq!(nsd(&a, &b, [3.0; 3], 3.0).unwrap(), Some(1.0));
    }

    fn two_label_map() -> LabelMap {
        LabelMap::identity(vec![
            Target {
                id: 1,
                name: "a".into(),
                group: LabelGroup::Btcv,
            },
            Target {
                id: 2,
                name: "b".into(),
                group: LabelGroup::Surgical,
            },
            Target {
                id: 3,
                name: "c".into(),
                group: LabelGroup::Surgical,
            },
        ])
        .unwrap()
    }

    #[test]
    fn evaluate_identical_and_background_predictions() {
        let mut vox = vec![0u16; 6 * 5 * 4];
        vox[7] = 1;
        vox[8] = 1;
        vox[30] = 2;
        let truth = Volume::new([6, 5, 4], [1.5, 1.5, 2.0], [0.0; 3], vox).unwrap();
        let map = two_label_map();

        let same = evaluate_case(&truth, &truth, &map, "c1", "m", 3.0).unwrap();
        assert_eq!(same.len(), 3);
        for r in &same[..2] {
            assert_eq!((r.dice, r.nsd), (Some(1.0), Some(1.0)));
        }
        assert_eq!((same[2].dice, same[2].nsd), (None, None));

        let bg = truth.map(|_| 0u16);
        let recs = evaluate_case(&bg, &truth, &map, "c1", "m", 3.0).unwrap();
        assert_eq!(recs[0].dice, Some(0.0));
        assert_eq!(recs[1].nsd, Some(0.0));
        assert_eq!(recs[2].dice, None);
    }

    #[test]
    fn evaluate_rejects_mismatched_grids() {
        let a = Volume::filled([2, 2, 2], [1.0; 3], 0u16).unwrap();
        let b = Volume::filled([2, 2, 2], [1.0, 1.0, 2.0], 0u16).unwrap();
        let c = Volume::filled([2, 2, 3], [1.0; 3], 0u16).unwrap();
        let map = two_label_map();
        assert!(matches!(
            evaluate_case(&a, &b, &map, "x", "m", 3.0),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            evaluate_case(&a, &c, &map, "x", "m", 3.0),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn record_csv_round_trip_with_na() {
        let recs = vec![
            MetricRecord {
                case_id: "s0001".into(),
                model_id: "unet".into(),
                label_id: 4,
                dice: Some(0.8125),
                nsd: None,
            },
            MetricRecord {
                case_id: "s0001".into(),
                model_id: "unet".into(),
                label_id: 5,
                dice: None,
                nsd: None,
            },
        ];
        let text = records_to_csv(&recs);
        assert!(text.contains("s0001,unet,4,0.8125,NA\n"));
        assert_eq!(records_from_reader(text.as_bytes()).unwrap(), recs);
        assert!(records_from_reader("case_id,model_id,label_id,dice,nsd\na,b,1,1.5,NA\n".as_bytes()).is_err());
        assert!(records_from_reader("case,model\n".as_bytes()).is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (Mask, Mask, [f64; 3])> {
        (1usize..7, 1usize..7, 1usize..7).prop_flat_map(|(x, y, z)| {
            let n = x * y * z;
            (
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n),
                [0.5f64..2.5, 0.5f64..2.5, 0.5f64..2.5],
            )
                .prop_map(move |(a, b, s)| (Mask::new([x, y, z], a).unwrap(), Mask::new([x, y, z], b).unwrap(), s))
        })
    }

    fn flip_x(m: &Mask) -> Mask {
        let [nx, ny, nz] = m.dims();
        let mut out = Mask::empty(m.dims());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    out.set(nx - 1 - x, y, z, m.get(x, y, z));
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn metrics_are_symmetric((a, b, s) in arb_pair()) {
            prop_assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
            prop_assert_eq!(nsd(&a, &b, s, 3.0).unwrap(), nsd(&b, &a, s, 3.0).unwrap());
        }

        #[test]
        fn self_comparison_is_perfect((a, _b, s) in arb_pair()) {
            if a.count() > 0 {
                prop_assert_eq!(dice(&a, &a).unwrap(), Some(1.0));
                prop_assert_eq!(nsd(&a, &a, s, 3.0).unwrap(), Some(1.0));
            }
        }

        #[test]
        fn nsd_monotone_in_tolerance((a, b, s) in arb_pair(), t1 in 0.1f64..5.0, dt in 0.0f64..5.0) {
            let lo = nsd(&a, &b, s, t1).unwrap();
            let hi = nsd(&a, &b, s, t1 + dt).unwrap();
            prop_assert_eq!(lo.is_some(), hi.is_some());
            if let (Some(lo), Some(hi)) = (lo, hi) {
                prop_assert!(lo <= hi);
            }
        }

        #[test]
        fn invariant_under_shared_flip((a, b, s) in arb_pair()) {
            let (fa, fb) = (flip_x(&a), flip_x(&b));
            prop_assert_eq!(dice(&a, &b).unwrap(), dice(&fa, &fb).unwrap());
            prop_assert_eq!(nsd(&a, &b, s, 3.0).unwrap(), nsd(&fa, &fb, s, 3.0).unwrap());
        }

        #[test]
        fn values_stay_in_unit_interval((a, b, s) in arb_pair(), tau in 0.1f64..6.0) {
            for v in [dice(&a, &b).unwrap(), nsd(&a, &b, s, tau).unwrap()].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
