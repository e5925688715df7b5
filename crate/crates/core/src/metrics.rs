//! Trajectory-level relative errors and their mean / standard deviation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

/// `||pred - truth|| / ||truth||` over a whole trajectory.
pub fn rel_error(pred: &[f64], truth: &[f64], norm: Norm) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Empty("relative error of an empty trajectory"));
    }
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "relative error prediction",
            expected: truth.len(),
            received: pred.len(),
        });
    }
    let (num, den) = match norm {
        Norm::L1 => pred
            .iter()
            .zip(truth)
            .fold((0.0, 0.0), |(n, d), (p, t)| (n + (p - t).abs(), d + t.abs())),
        Norm::L2 => {
            let (n, d) = pred
                .iter()
                .zip(truth)
                .fold((0.0, 0.0), |(n, d), (p, t)| (n + (p - t) * (p - t), d + t * t));
            (n.sqrt(), d.sqrt())
        }
    };
    if den == 0.0 {
        return Err(Error::InvalidArgument(
            "relative error undefined: reference trajectory has zero norm".into(),
        ));
    }
    if !(num.is_finite() && den.is_finite()) {
        return Err(Error::NonFinite("relative error inputs".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdKind {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryError {
    pub u_bar: f64,
    pub l1_rel: f64,
    pub l2_rel: f64,
}

impl TrajectoryError {
    pub fn compute(u_bar: f64, pred: &[f64], truth: &[f64]) -> Result<Self> {
        Ok(Self {
            u_bar,
            l1_rel: rel_error(pred, truth, Norm::L1)?,
            l2_rel: rel_error(pred, truth, Norm::L2)?,
        })
    }
}

/// Errors are fractions; the CSV output reports percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub per_trajectory: Vec<TrajectoryError>,
    pub mean_l1: f64,
    pub std_l1: f64,
    pub mean_l2: f64,
    pub std_l2: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone, kind: StdKind) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let dof = match kind {
        StdKind::Population => n,
        StdKind::Sample => (n - 1.0).max(1.0),
    };
    (mean, (ss / dof).sqrt())
}

pub fn aggregate(per_trajectory: Vec<TrajectoryError>, kind: StdKind) -> Result<ErrorReport> {
    if per_trajectory.is_empty() {
        return Err(Error::Empty("no trajectories to aggregate"));
    }
    let (mean_l1, std_l1) = mean_std(per_trajectory.iter().map(|e| e.l1_rel), kind);
    let (mean_l2, std_l2) = mean_std(per_trajectory.iter().map(|e| e.l2_rel), kind);
    Ok(ErrorReport {
        per_trajectory,
        mean_l1,
        std_l1,
        mean_l2,
        std_l2,
    })
}

pub const REPORT_HEADER: &str = "config_label,target,scope,u_bar,mean_l1,std_l1,mean_l2,std_l2";

impl ErrorReport {
    /// One row per trajectory (`scope = trajectory`, std columns zero) and a
    /// final `aggregate` row; error columns are percentages to 2 decimals.
    pub fn write_csv<W: Write>(&self, config_label: &str, target: &str, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        for e in &self.per_trajectory {
            writeln!(
                out,
                "{config_label},{target},trajectory,{},{:.2},0.00,{:.2},0.00",
                e.u_bar,
                100.0 * e.l1_rel,
                100.0 * e.l2_rel
            )?;
        }
        writeln!(
            out,
            "{config_label},{target},aggregate,,{:.2},{:.2},{:.2},{:.2}",
            100.0 * self.mean_l1,
            100.0 * self.std_l1,
            100.0 * self.mean_l2,
            100.0 * self.std_l2
        )?;
        out.flush()
    }

    pub fn to_csv_string(&self, config_label: &str, target: &str) -> String {
        let mut buf = Vec::new();
        self.write_csv(config_label, target, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn err(l: f64) -> TrajectoryError {
        TrajectoryError {
            u_bar: 1.0,
            l1_rel: l,
            l2_rel: l,
        }
    }

    #[test]
    fn identical_is_zero() {
        let v = [0.3, -1.2, 4.0];
        assert_eq!(rel_error(&v, &v, Norm::L1).unwrap(), 0.0);
        assert_eq!(rel_error(&v, &v, Norm::L2).unwrap(), 0.0);
    }

    #[test]
    fn homogeneity() {
        let truth = [0.5, -2.0, 3.25, 1e-3];
        let pred: Vec<f64> = truth.iter().map(|t| 1.01 * t).collect();
        for norm in [Norm::L1, Norm::L2] {
            assert!((rel_error(&pred, &truth, norm).unwrap() - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_truth_rejected() {
        assert!(rel_error(&[1.0], &[0.0], Norm::L2).is_err());
        assert!(rel_error(&[], &[], Norm::L2).is_err());
    }

    #[test]
    fn single_and_pair() {
        let r = aggregate(vec![err(0.02)], StdKind::Population).unwrap();
        assert_eq!((r.mean_l2, r.std_l2), (0.02, 0.0));
        let r = aggregate(vec![err(0.01), err(0.03)], StdKind::Population).unwrap();
        assert!((r.mean_l1 - 0.02).abs() < 1e-15);
        assert!((r.std_l1 - 0.01).abs() < 1e-15);
        let s = aggregate(vec![err(0.01), err(0.03)], StdKind::Sample).unwrap();
        assert!((s.std_l1 - 0.01 * 2f64.sqrt()).abs() < 1e-15);
        assert!(aggregate(vec![], StdKind::Population).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = aggregate(vec![err(0.0123), err(0.02)], StdKind::Population).unwrap();
        let text = r.to_csv_string("PP", "lift");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "PP,lift,trajectory,1,1.23,0.00,1.23,0.00");
        assert!(lines[3].starts_with("PP,lift,aggregate,,1.62,0.39,"));
    }

    proptest! {
        #[test]
        fn scale_invariant(
            pairs in prop::collection::vec((-10.0f64..10.0, 0.5f64..10.0), 1..40),
            c in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
        ) {
            let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let sp: Vec<f64> = pred.iter().map(|v| c * v).collect();
            let st: Vec<f64> = truth.iter().map(|v| c * v).collect();
            for norm in [Norm::L1, Norm::L2] {
                let a = rel_error(&pred, &truth, norm).unwrap();
                let b = rel_error(&sp, &st, norm).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }
        }

        #[test]
        fn order_invariant(errors in prop::collection::vec(0.0f64..1.0, 1..20)) {
            let fwd: Vec<_> = errors.iter().map(|&e| err(e)).collect();
            let mut rev = fwd.clone();
            rev.reverse();
            let a = aggregate(fwd, StdKind::Population).unwrap();
            let b = aggregate(rev, StdKind::Population).unwrap();
            prop_assert!((a.mean_l2 - b.mean_l2).abs() < 1e-14);
            prop_assert!((a.std_l2 - b.std_l2).abs() < 1e-14);
        }
    }
}
