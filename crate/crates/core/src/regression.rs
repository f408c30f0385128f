//! Least squares fitting, grand averages and the two-part breakpoint sweep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{r2_from, ByCondition, Trial};
use crate::error::{Error, Result};
use crate::geometry::AngularCondition;
use crate::models::{IdModel, IdValue, RegressionFit};

/// Mean movement time of one condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionMean {
    pub condition: AngularCondition,
    pub mean_time_s: f64,
    pub trial_count: usize,
}

/// Ordinary least squares of `y` on `x`.
///
/// `r2 = 1 − SSres/SStot`; when `y` is constant the fit is exact and `r2 = 1`.
pub fn ols(points: &[(f64, f64)]) -> Result<RegressionFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} points, a line needs at least 2",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::DegenerateRegression("non-finite data".into()));
    }
    let x0 = points[0].0;
    if points.iter().all(|p| p.0 == x0) {
        return Err(Error::DegenerateRegression(format!(
            "all {} points share x = {x0}",
            points.len()
        )));
    }
    let n = points.len();
    let y0 = points[0].1;
    if points.iter().all(|p| p.1 == y0) {
        return Ok(RegressionFit {
            a: y0,
            b: 0.0,
            r2: 1.0,
            n,
        });
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = points.iter().map(|&(x, y)| (y - a - b * x).powi(2)).sum();
    Ok(RegressionFit {
        a,
        b,
        r2: r2_from(ss_res, syy),
        n,
    })
}

/// OLS over tagged ID values; mixing formulations is rejected.
pub fn fit_ids(points: &[(IdValue, f64)]) -> Result<RegressionFit> {
    if let Some((first, _)) = points.first() {
        if let Some((other, _)) = points.iter().find(|(id, _)| id.model != first.model) {
            return Err(Error::Usage(format!(
                "cannot fit {} and {} IDs together",
                first.model, other.model
            )));
        }
    }
    let xy: Vec<_> = points.iter().map(|(id, t)| (id.value, *t)).collect();
    ols(&xy)
}

/// How trials are combined into a condition mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Mean over all trials of the condition.
    #[default]
    Pooled,
    /// Mean of per-participant means.
    PerParticipant,
}

/// One mean per distinct `(α, ω)`, sorted ascending. The caller passes only
/// valid trials (successful, outliers removed).
pub fn grand_average(trials: &[Trial], weighting: Weighting) -> Vec<ConditionMean> {
    let mut groups: ByCondition<BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for t in trials {
        let participant = match weighting {
            Weighting::Pooled => "",
            Weighting::PerParticipant => t.participant_id.as_str(),
        };
        groups
            .entry(t.condition().key_bits())
            .or_insert_with(|| (t.condition(), BTreeMap::new()))
            .1
            .entry(participant)
            .or_default()
            .push(t.duration_s);
    }
    let mut out: Vec<ConditionMean> = groups
        .into_values()
        .map(|(condition, by_participant)| {
            let trial_count = by_participant.values().map(Vec::len).sum();
            let means: Vec<f64> = by_participant.into_values().map(sorted_mean).collect();
            ConditionMean {
                condition,
                mean_time_s: sorted_mean(means),
                trial_count,
            }
        })
        .collect();
    out.sort_by(|a, b| a.condition.cmp_key(&b.condition));
    out
}

/// Order-independent mean: values are summed in sorted order.
fn sorted_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Predictor used by the left half of a two-part fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeftPredictor {
    /// Same ID formulation as the right half.
    #[default]
    Id,
    /// Amplitude α in degrees only.
    Alpha,
}

/// One row of a breakpoint sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPartFit {
    pub breakpoint_id: f64,
    pub left: RegressionFit,
    pub right: RegressionFit,
    /// Means in each pool.
    pub left_n: usize,
    pub right_n: usize,
    /// Distinct ID values in each pool (the "L-R" label).
    pub left_distinct: usize,
    pub right_distinct: usize,
    pub left_predictor: LeftPredictor,
}

impl TwoPartFit {
    /// `"<left distinct>-<right distinct>"`, e.g. `"3-15"`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.left_distinct, self.right_distinct)
    }
}

/// Sweeps every observed ID as a breakpoint, keeping at least `min_side`
/// distinct IDs on each side. Means with `ID ≤ breakpoint` form the left pool.
pub fn breakpoint_sweep(
    means: &[ConditionMean],
    model: IdModel,
    min_side: usize,
) -> Result<Vec<TwoPartFit>> {
    breakpoint_sweep_with(means, model, min_side, LeftPredictor::Id)
}

/// [`breakpoint_sweep`] with a choice of left-pool predictor. With
/// [`LeftPredictor::Alpha`], rows whose left pool has a single α are skipped.
pub fn breakpoint_sweep_with(
    means: &[ConditionMean],
    model: IdModel,
    min_side: usize,
    left_predictor: LeftPredictor,
) -> Result<Vec<TwoPartFit>> {
    if min_side < 2 {
        return Err(Error::Usage(format!(
            "min_side must be at least 2 to fit a line, got {min_side}"
        )));
    }
    let mut pts: Vec<(f64, &ConditionMean)> = means
        .iter()
        .map(|m| Ok((model.angular(&m.condition)?, m)))
        .collect::<Result<_>>()?;
    pts.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.condition.cmp_key(&b.1.condition))
    });
    let mut distinct: Vec<f64> = Vec::new();
    for &(id, _) in &pts {
        if distinct.last().is_none_or(|&last| !same_id(last, id)) {
            distinct.push(id);
        }
    }
    let d = distinct.len();
    if d < 2 * min_side {
        return Err(Error::InsufficientData(format!(
            "{d} distinct ID values under {model}, the sweep needs at least {}",
            2 * min_side
        )));
    }
    let mut rows = Vec::with_capacity(d + 1 - 2 * min_side);
    for left_distinct in min_side..=d - min_side {
        let bp = distinct[left_distinct - 1];
        let split = pts.partition_point(|&(id, _)| id < bp || same_id(id, bp));
        let (lp, rp) = pts.split_at(split);
        let right_xy: Vec<_> = rp.iter().map(|&(id, m)| (id, m.mean_time_s)).collect();
        let left = match left_predictor {
            LeftPredictor::Id => ols(&lp
                .iter()
                .map(|&(id, m)| (id, m.mean_time_s))
                .collect::<Vec<_>>())?,
            LeftPredictor::Alpha => {
                let left_means: Vec<_> = lp.iter().map(|&(_, m)| *m).collect();
                match alpha_only_fit(&left_means) {
                    Ok(f) => f,
                    Err(Error::DegenerateRegression(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
        };
        rows.push(TwoPartFit {
            breakpoint_id: bp,
            left,
            right: ols(&right_xy)?,
            left_n: lp.len(),
            right_n: rp.len(),
            left_distinct,
            right_distinct: d - left_distinct,
            left_predictor,
        });
    }
    Ok(rows)
}

fn same_id(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Row maximizing `min(left r2, right r2)`; the first one wins ties.
pub fn best_row(rows: &[TwoPartFit]) -> Option<&TwoPartFit> {
    rows.iter()
        .fold(None, |best: Option<&TwoPartFit>, r| match best {
            Some(b) if b.left.r2.min(b.right.r2) >= r.left.r2.min(r.right.r2) => Some(b),
            _ => Some(r),
        })
}

/// Mean time regressed on α in degrees.
pub fn alpha_only_fit(means: &[ConditionMean]) -> Result<RegressionFit> {
    let pts: Vec<_> = means
        .iter()
        .map(|m| (m.condition.alpha_deg(), m.mean_time_s))
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateRegression(format!(
            "{} condition means, alpha-only fit needs two distinct alphas",
            pts.len()
        )));
    }
    ols(&pts)
}

/// Mean time regressed on the model's ID.
pub fn fit_one_part(means: &[ConditionMean], model: IdModel) -> Result<RegressionFit> {
    let pts: Vec<_> = means
        .iter()
        .map(|m| Ok((model.angular(&m.condition)?, m.mean_time_s)))
        .collect::<Result<_>>()?;
    ols(&pts)
}
