//! Confusion-matrix statistics for the three ranged zones and localization
//! error metrics.

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::pathloss::ProximityZone;

/// Rows are the actual zone, columns the predicted zone, both ordered
/// Immediate, Near, Far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix3 {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix3 {
    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        Self { counts }
    }

    pub fn build(actual: &[ProximityZone], predicted: &[ProximityZone]) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::LengthMismatch {
                left: actual.len(),
                right: predicted.len(),
            });
        }
        let mut cm = Self::default();
        for (i, (a, p)) in actual.iter().zip(predicted).enumerate() {
            let (Some(ai), Some(pi)) = (a.index(), p.index()) else {
                return Err(Error::Label(format!(
                    "pair {i} contains the unknown zone; only immediate, near and far are evaluated"
                )));
            };
            cm.counts[ai][pi] += 1;
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::EmptyInput("confusion matrix has no samples".into())),
            t => Ok(self.trace() as f64 / t as f64),
        }
    }

    /// One-vs-rest statistics for `zone`. `Unknown` has no row and yields all-zero counts.
    pub fn zone_metrics(&self, zone: ProximityZone) -> ZoneMetrics {
        let Some(k) = zone.index() else {
            return ZoneMetrics::from_counts(0, 0, 0, 0);
        };
        let tp = self.counts[k][k];
        let row: u64 = self.counts[k].iter().sum();
        let col: u64 = (0..3).map(|i| self.counts[i][k]).sum();
        let fn_ = row - tp;
        let fp = col - tp;
        let tn = self.total() - row - fp;
        ZoneMetrics::from_counts(tp, tn, fp, fn_)
    }

    pub fn merge(&self, other: &Self) -> Self {
        let mut out = *self;
        for i in 0..3 {
            for j in 0..3 {
                out.counts[i][j] += other.counts[i][j];
            }
        }
        out
    }
}

/// Per-zone statistics. Ratios whose denominator is zero are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneMetrics {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub fallout: Option<f64>,
    pub fdr: Option<f64>,
    pub fnr: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ZoneMetrics {
    pub fn from_counts(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self {
            tp,
            tn,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            sensitivity: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
            fallout: ratio(fp, fp + tn),
            fdr: ratio(fp, fp + tp),
            fnr: ratio(fn_, fn_ + tp),
        }
    }

    /// `(label, value)` pairs in report order.
    pub fn ratios(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("precision", self.precision),
            ("sensitivity", self.sensitivity),
            ("specificity", self.specificity),
            ("fallout", self.fallout),
            ("fdr", self.fdr),
            ("fnr", self.fnr),
        ]
    }
}

fn check_lengths(actual: usize, estimates: usize) -> Result<()> {
    if actual == 0 || estimates == 0 {
        return Err(Error::EmptyInput(
            "error metric needs actual and estimated points".into(),
        ));
    }
    Ok(())
}

fn mean_of<const D: usize>(
    points: impl ExactSizeIterator<Item = nalgebra::SVector<f64, D>>,
) -> nalgebra::SVector<f64, D> {
    let n = points.len() as f64;
    points.fold(nalgebra::SVector::zeros(), |acc, p| acc + p) / n
}

/// Horizontal localization error: the mean distance from every actual point
/// to the single averaged estimate.
pub fn error_2d(actual: &[Vector2<f64>], estimates: &[Vector2<f64>]) -> Result<f64> {
    check_lengths(actual.len(), estimates.len())?;
    let est = mean_of(estimates.iter().copied());
    Ok(actual.iter().map(|a| (a - est).norm()).sum::<f64>() / actual.len() as f64)
}

/// Vertical-aware error: the horizontal term of [`error_2d`] plus the mean
/// absolute vertical offset from the averaged estimate.
///
/// This is a sum of two means, not a 3D Euclidean error: a point 3, 4 and 2 m
/// off along x, y and z scores 5 + 2 = 7.
pub fn error_3d(actual: &[Vector3<f64>], estimates: &[Vector3<f64>]) -> Result<f64> {
    check_lengths(actual.len(), estimates.len())?;
    let est = mean_of(estimates.iter().copied());
    let n = actual.len() as f64;
    let horizontal: f64 = actual
        .iter()
        .map(|a| (a.xy() - est.xy()).norm())
        .sum::<f64>()
        / n;
    let vertical: f64 = actual.iter().map(|a| (a.z - est.z).abs()).sum::<f64>() / n;
    Ok(horizontal + vertical)
}

/// Mean of per-sample distances between paired actual and estimated points.
pub fn mean_pairwise_error_2d(actual: &[Vector2<f64>], estimates: &[Vector2<f64>]) -> Result<f64> {
    check_lengths(actual.len(), estimates.len())?;
    if actual.len() != estimates.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: estimates.len(),
        });
    }
    Ok(actual
        .iter()
        .zip(estimates)
        .map(|(a, e)| (a - e).norm())
        .sum::<f64>()
        / actual.len() as f64)
}

/// Per-sample counterpart of [`error_3d`]: mean horizontal plus mean vertical
/// distance of paired points.
pub fn mean_pairwise_error_3d(actual: &[Vector3<f64>], estimates: &[Vector3<f64>]) -> Result<f64> {
    check_lengths(actual.len(), estimates.len())?;
    if actual.len() != estimates.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: estimates.len(),
        });
    }
    let n = actual.len() as f64;
    Ok(actual
        .iter()
        .zip(estimates)
        .map(|(a, e)| (a.xy() - e.xy()).norm() + (a.z - e.z).abs())
        .sum::<f64>()
        / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathloss::ProximityZone::*;
    use proptest::prelude::*;

    #[test]
    fn build_counts_pairs() {
        let cm = ConfusionMatrix3::build(&[Near], &[Far]).unwrap();
        assert_eq!(cm.counts[1][2], 1);
        assert_eq!(cm.total(), 1);
        assert_eq!(
            ConfusionMatrix3::build(&[], &[]).unwrap(),
            ConfusionMatrix3::default()
        );

        let actual: Vec<_> = (0..120).map(|i| ProximityZone::RANGED[i % 3]).collect();
        let cm = ConfusionMatrix3::build(&actual, &actual).unwrap();
        assert_eq!(cm.trace(), 120);
        assert_eq!(cm.accuracy().unwrap(), 1.0);
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(matches!(
            ConfusionMatrix3::build(&[Near], &[]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            ConfusionMatrix3::build(&[Near], &[Unknown]),
            Err(Error::Label(_))
        ));
        assert!(ConfusionMatrix3::default().accuracy().is_err());
    }

    #[test]
    fn reference_one_vs_rest_ratios() {
        let m = ZoneMetrics::from_counts(21, 80, 0, 19);
        assert!((m.sensitivity.unwrap() - 0.525).abs() < 1e-12);
        assert_eq!(m.precision, Some(1.0));
        assert!((m.fnr.unwrap() - 0.475).abs() < 1e-12);

        let m = ZoneMetrics::from_counts(38, 73, 7, 2);
        assert!((m.precision.unwrap() - 0.844).abs() < 1e-3);
        assert!((m.sensitivity.unwrap() - 0.95).abs() < 1e-12);
    }

    #[test]
    fn diagonal_matrix_is_perfect() {
        let cm = ConfusionMatrix3::from_counts([[5, 0, 0], [0, 7, 0], [0, 0, 9]]);
        for z in ProximityZone::RANGED {
            let m = cm.zone_metrics(z);
            assert_eq!(m.sensitivity, Some(1.0));
            assert_eq!(m.specificity, Some(1.0));
            assert_eq!(m.fallout, Some(0.0));
            assert_eq!(m.fdr, Some(0.0));
            assert_eq!(m.fnr, Some(0.0));
        }
    }

    #[test]
    fn off_diagonal_accuracy_is_zero() {
        let cm = ConfusionMatrix3::from_counts([[0, 4, 4], [4, 0, 4], [4, 4, 0]]);
        assert_eq!(cm.accuracy().unwrap(), 0.0);
    }

    #[test]
    fn absent_zone_reports_undefined() {
        let cm = ConfusionMatrix3::from_counts([[3, 0, 0], [0, 3, 0], [0, 0, 0]]);
        let far = cm.zone_metrics(Far);
        assert_eq!(far.precision, None);
        assert_eq!(far.sensitivity, None);
        assert_eq!(far.specificity, Some(1.0));
    }

    #[test]
    fn error_2d_cases() {
        let p = Vector2::new(2.0, 3.0);
        assert_eq!(error_2d(&[p, p], &[p, p, p]).unwrap(), 0.0);
        assert_eq!(
            error_2d(&[Vector2::zeros()], &[Vector2::new(3.0, 4.0)]).unwrap(),
            5.0
        );
        let actual = vec![Vector2::new(1.0, 1.0); 10];
        let estimates: Vec<_> = (0..10)
            .map(|i| Vector2::new(1.0, if i % 2 == 0 { 1.5 } else { 2.5 }))
            .collect();
        assert!((error_2d(&actual, &estimates).unwrap() - 1.0).abs() < 1e-12);
        assert!(error_2d(&[], &[p]).is_err());
        assert!(error_2d(&[p], &[]).is_err());
    }

    #[test]
    fn error_3d_is_sum_of_means() {
        let o = Vector3::zeros();
        assert_eq!(error_3d(&[o], &[o]).unwrap(), 0.0);
        assert_eq!(error_3d(&[o], &[Vector3::new(3.0, 4.0, 2.0)]).unwrap(), 7.0);
        assert_eq!(error_3d(&[o], &[Vector3::new(0.0, 0.0, 1.5)]).unwrap(), 1.5);
        assert!(error_3d(&[], &[o]).is_err());
    }

    #[test]
    fn pairwise_alternative() {
        let actual = [Vector2::new(0.0, 0.0), Vector2::new(0.0, 0.0)];
        let est = [Vector2::new(1.0, 0.0), Vector2::new(-1.0, 0.0)];
        assert_eq!(error_2d(&actual, &est).unwrap(), 0.0);
        assert_eq!(mean_pairwise_error_2d(&actual, &est).unwrap(), 1.0);
        assert!(mean_pairwise_error_2d(&actual, &est[..1]).is_err());
    }

    fn arb_matrix() -> impl Strategy<Value = ConfusionMatrix3> {
        proptest::array::uniform3(proptest::array::uniform3(0u64..50))
            .prop_map(ConfusionMatrix3::from_counts)
    }

    proptest! {
        #[test]
        fn one_vs_rest_counts_partition(cm in arb_matrix()) {
            let total = cm.total();
            let mut tp_sum = 0;
            for z in ProximityZone::RANGED {
                let m = cm.zone_metrics(z);
                let row: u64 = cm.counts[z.index().unwrap()].iter().sum();
                prop_assert_eq!(m.tp + m.fn_, row);
                prop_assert_eq!(m.tn + m.fp, total - row);
                prop_assert_eq!(m.tp + m.tn + m.fp + m.fn_, total);
                if let (Some(s), Some(f)) = (m.specificity, m.fallout) {
                    prop_assert!((f - (1.0 - s)).abs() < 1e-12);
                }
                if let (Some(p), Some(f)) = (m.precision, m.fdr) {
                    prop_assert!((f - (1.0 - p)).abs() < 1e-12);
                }
                if let (Some(s), Some(f)) = (m.sensitivity, m.fnr) {
                    prop_assert!((f - (1.0 - s)).abs() < 1e-12);
                }
                tp_sum += m.tp;
            }
            if total > 0 {
                prop_assert!((cm.accuracy().unwrap() - tp_sum as f64 / total as f64).abs() < 1e-15);
            }
        }

        #[test]
        fn error_2d_rigid_invariance(
            pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..12),
            est in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..12),
            shift in (-50.0f64..50.0, -50.0f64..50.0),
            angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let a: Vec<_> = pts.iter().map(|&(x, y)| Vector2::new(x, y)).collect();
            let e: Vec<_> = est.iter().map(|&(x, y)| Vector2::new(x, y)).collect();
            let rot = nalgebra::Rotation2::new(angle);
            let t = Vector2::new(shift.0, shift.1);
            let base = error_2d(&a, &e).unwrap();
            let moved = |v: &[Vector2<f64>]| v.iter().map(|p| rot * p + t).collect::<Vec<_>>();
            prop_assert!((error_2d(&moved(&a), &moved(&e)).unwrap() - base).abs() < 1e-9);

            let a3: Vec<_> = a.iter().enumerate().map(|(i, p)| Vector3::new(p.x, p.y, i as f64 * 0.3)).collect();
            let e3: Vec<_> = e.iter().map(|p| Vector3::new(p.x, p.y, 1.0)).collect();
            let base3 = error_3d(&a3, &e3).unwrap();
            let rot3 = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
            let t3 = Vector3::new(shift.0, shift.1, shift.0 * 0.1);
            let moved3 = |v: &[Vector3<f64>]| v.iter().map(|p| rot3 * p + t3).collect::<Vec<_>>();
            prop_assert!((error_3d(&moved3(&a3), &moved3(&e3)).unwrap() - base3).abs() < 1e-9);
        }
    }
}
