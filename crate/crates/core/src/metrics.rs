//! Reasoning efficiency, outcome efficiency and comparison against
//! Best-of-N.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{nfe_min_of, non_degraded, RunTrace};

/// Per-instance outcome of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub instance_id: String,
    /// Result not worse than the Best-of-N pick on the same instance.
    pub sigma: bool,
    /// General score of the selected result.
    pub score: f64,
    pub nfe: u64,
    pub nfe_min: u64,
    pub mllm_queries: u32,
}

impl InstanceRow {
    /// Row for `trace`, judged against the Best-of-N result quality
    /// `reference` on the same instance.
    pub fn from_trace(trace: &RunTrace, reference: f64) -> Result<Self> {
        let score = trace
            .final_quality()
            .ok_or_else(|| Error::Metric(format!("{} has no final result", trace.instance_id)))?;
        Ok(Self {
            instance_id: trace.instance_id.clone(),
            sigma: non_degraded(score, reference),
            score,
            nfe: trace.total_nfe(),
            nfe_min: nfe_min_of(trace, reference)?,
            mllm_queries: trace.mllm_queries,
        })
    }
}

fn check_rows(rows: &[InstanceRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Metric("no rows".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.nfe == 0) {
        return Err(Error::Metric(format!("{} has zero NFE", r.instance_id)));
    }
    Ok(())
}

/// `mean_i sigma_i * (S_i / S_max) * (N T / NFE_i)`.
pub fn reasoning_efficiency(rows: &[InstanceRow], n: u32, steps: u32, s_max: f64) -> Result<f64> {
    check_rows(rows)?;
    let full = f64::from(n) * f64::from(steps);
    let sum: f64 = rows
        .iter()
        .filter(|r| r.sigma)
        .map(|r| (r.score / s_max) * (full / r.nfe as f64))
        .sum();
    Ok(sum / rows.len() as f64)
}

/// `mean_i sigma_i * NFE_min_i / NFE_i`.
pub fn outcome_efficiency(rows: &[InstanceRow]) -> Result<f64> {
    check_rows(rows)?;
    if let Some(r) = rows.iter().find(|r| r.nfe_min > r.nfe) {
        return Err(Error::Metric(format!(
            "{}: NFE_min {} exceeds NFE {}",
            r.instance_id, r.nfe_min, r.nfe
        )));
    }
    let sum: f64 = rows
        .iter()
        .filter(|r| r.sigma)
        .map(|r| r.nfe_min as f64 / r.nfe as f64)
        .sum();
    Ok(sum / rows.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub instance_count: usize,
    pub eta: f64,
    pub xi: f64,
    pub mean_final_score: f64,
    pub total_nfe: u64,
    pub mean_mllm_queries: f64,
    pub per_instance: Vec<InstanceRow>,
}

impl EfficiencyReport {
    pub fn from_rows(rows: Vec<InstanceRow>, n: u32, steps: u32, s_max: f64) -> Result<Self> {
        let eta = reasoning_efficiency(&rows, n, steps, s_max)?;
        let xi = outcome_efficiency(&rows)?;
        let m = rows.len() as f64;
        Ok(Self {
            instance_count: rows.len(),
            eta,
            xi,
            mean_final_score: rows.iter().map(|r| r.score).sum::<f64>() / m,
            total_nfe: rows.iter().map(|r| r.nfe).sum(),
            mean_mllm_queries: rows.iter().map(|r| f64::from(r.mllm_queries)).sum::<f64>() / m,
            per_instance: rows,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub eta_ratio: f64,
    pub xi_ratio: f64,
    /// Best-of-N total NFE over this strategy's total NFE.
    pub nfe_ratio: f64,
    pub score_delta: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

fn instance_ids(r: &EfficiencyReport) -> Vec<&str> {
    let mut v: Vec<&str> = r.per_instance.iter().map(|x| x.instance_id.as_str()).collect();
    v.sort_unstable();
    v
}

/// Ratios of `report` against the Best-of-N report on the same instances.
pub fn compare_to_bon(report: &EfficiencyReport, bon: &EfficiencyReport) -> Result<Comparison> {
    if instance_ids(report) != instance_ids(bon) {
        return Err(Error::Metric("reports cover different instance sets".into()));
    }
    Ok(Comparison {
        eta_ratio: ratio(report.eta, bon.eta),
        xi_ratio: ratio(report.xi, bon.xi),
        nfe_ratio: ratio(bon.total_nfe as f64, report.total_nfe as f64),
        score_delta: report.mean_final_score - bon.mean_final_score,
    })
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(sigma: bool, score: f64, nfe: u64, nfe_min: u64) -> InstanceRow {
        InstanceRow {
            instance_id: format!("{score}-{nfe}-{nfe_min}-{sigma}"),
            sigma,
            score,
            nfe,
            nfe_min,
            mllm_queries: 0,
        }
    }

    #[test]
    fn eta_unit_row() {
        assert_eq!(
            reasoning_efficiency(&[row(true, 10.0, 896, 896)], 32, 28, 10.0).unwrap(),
            1.0
        );
        assert_eq!(
            reasoning_efficiency(&[row(false, 10.0, 896, 896)], 32, 28, 10.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn eta_two_rows() {
        let rows = [row(true, 8.0, 448, 28), row(true, 6.0, 896, 28)];
        let eta = reasoning_efficiency(&rows, 32, 28, 10.0).unwrap();
        assert!((eta - 1.1).abs() < 1e-12, "{eta}");
    }

    #[test]
    fn eta_rejects_zero_nfe_and_empty() {
        assert!(reasoning_efficiency(&[row(true, 1.0, 0, 0)], 32, 28, 10.0).is_err());
        assert!(reasoning_efficiency(&[], 32, 28, 10.0).is_err());
    }

    #[test]
    fn xi_examples() {
        assert_eq!(outcome_efficiency(&[row(true, 5.0, 112, 112)]).unwrap(), 1.0);
        assert_eq!(outcome_efficiency(&[row(false, 5.0, 112, 28)]).unwrap(), 0.0);
        assert!((outcome_efficiency(&[row(true, 5.0, 112, 28)]).unwrap() - 0.25).abs() < 1e-12);
        assert!(outcome_efficiency(&[row(true, 5.0, 28, 112)]).is_err());
    }

    #[test]
    fn self_comparison_is_unity() {
        let r = EfficiencyReport::from_rows(vec![row(true, 8.0, 448, 28), row(false, 3.0, 896, 896)], 32, 28, 10.0)
            .unwrap();
        let c = compare_to_bon(&r, &r).unwrap();
        assert_eq!(
            (c.eta_ratio, c.xi_ratio, c.nfe_ratio, c.score_delta),
            (1.0, 1.0, 1.0, 0.0)
        );
    }

    #[test]
    fn half_nfe_is_double_speed() {
        let mut a = row(true, 8.0, 448, 28);
        let mut b = row(true, 8.0, 896, 28);
        a.instance_id = "x".into();
        b.instance_id = "x".into();
        let ade = EfficiencyReport::from_rows(vec![a], 32, 28, 10.0).unwrap();
        let bon = EfficiencyReport::from_rows(vec![b], 32, 28, 10.0).unwrap();
        assert_eq!(compare_to_bon(&ade, &bon).unwrap().nfe_ratio, 2.0);
    }

    #[test]
    fn mismatched_sets_are_rejected() {
        let a = EfficiencyReport::from_rows(vec![row(true, 8.0, 448, 28)], 32, 28, 10.0).unwrap();
        let b = EfficiencyReport::from_rows(vec![row(true, 7.0, 448, 28)], 32, 28, 10.0).unwrap();
        assert!(compare_to_bon(&a, &b).is_err());
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[2.0, 3.0]), None);
    }

    fn arb_rows() -> impl Strategy<Value = Vec<InstanceRow>> {
        prop::collection::vec(
            (any::<bool>(), 0.0f64..10.0, 1u64..2000, 0.0f64..=1.0)
                .prop_map(|(s, q, nfe, f)| row(s, q, nfe, ((nfe as f64) * f).floor() as u64)),
            1..20,
        )
    }

    proptest! {
        #[test]
        fn permutation_invariant(rows in arb_rows(), k in any::<usize>()) {
            let mut rotated = rows.clone();
            let len = rotated.len();
            rotated.rotate_left(k % len);
            let a = reasoning_efficiency(&rows, 32, 28, 10.0).unwrap();
            let b = reasoning_efficiency(&rotated, 32, 28, 10.0).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            let a = outcome_efficiency(&rows).unwrap();
            let b = outcome_efficiency(&rotated).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn dropping_degraded_rows_never_hurts(rows in arb_rows()) {
            let kept: Vec<_> = rows.iter().filter(|r| r.sigma).cloned().collect();
            prop_assume!(!kept.is_empty());
            prop_assert!(reasoning_efficiency(&kept, 32, 28, 10.0).unwrap() + 1e-12 >= reasoning_efficiency(&rows, 32, 28, 10.0).unwrap());
            prop_assert!(outcome_efficiency(&kept).unwrap() + 1e-12 >= outcome_efficiency(&rows).unwrap());
        }

        #[test]
        fn eta_linear_in_budget(rows in arb_rows()) {
            let a = reasoning_efficiency(&rows, 16, 28, 10.0).unwrap();
            let b = reasoning_efficiency(&rows, 32, 28, 10.0).unwrap();
            prop_assert!((b - 2.0 * a).abs() <= 1e-9 * (1.0 + b.abs()));
        }

        #[test]
        fn xi_at_most_one(rows in arb_rows()) {
            prop_assert!(outcome_efficiency(&rows).unwrap() <= 1.0 + 1e-12);
        }
    }
}
