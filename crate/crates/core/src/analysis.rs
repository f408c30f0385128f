//! Trial validation, outlier rejection, velocity profiles and hitpoint statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    angular_distance, project_hitpoint, AngularCondition, Direction3, PlacedTrial,
};

/// Values grouped by condition, keyed by the bit pattern of `(α, ω)`.
pub(crate) type ByCondition<T> = BTreeMap<(u64, u64), (AngularCondition, T)>;

/// Number of equal time intervals in a velocity profile.
pub const PROFILE_BINS: usize = 10;
/// Fewest ray samples a trial needs for velocity analysis.
pub const MIN_PROFILE_SAMPLES: usize = PROFILE_BINS + 1;

/// One sample of the pointing ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaySample {
    /// Seconds since the start object was selected.
    pub t_s: f64,
    pub direction: Direction3,
}

/// One pointing movement from start selection to target selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub participant_id: String,
    pub session: u32,
    pub trial_index: u32,
    pub placed: PlacedTrial,
    pub duration_s: f64,
    pub success: bool,
    pub hit: Direction3,
    pub samples: Vec<RaySample>,
}

impl Trial {
    pub fn condition(&self) -> AngularCondition {
        self.placed.condition
    }

    /// `participant/session/trial_index`, used in diagnostics.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}",
            self.participant_id, self.session, self.trial_index
        )
    }

    fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::MalformedTrial {
            trial: self.label(),
            reason: reason.into(),
        }
    }

    /// Checks timing, sample ordering and that a successful hit is inside the target.
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(self.malformed(format!("duration {} is not positive", self.duration_s)));
        }
        let mut prev: Option<f64> = None;
        for s in &self.samples {
            if !(s.t_s.is_finite() && s.t_s >= 0.0) {
                return Err(self.malformed(format!("sample time {} is negative", s.t_s)));
            }
            if let Some(p) = prev {
                if s.t_s <= p {
                    return Err(self.malformed(format!(
                        "sample times not strictly increasing ({p} then {})",
                        s.t_s
                    )));
                }
            }
            prev = Some(s.t_s);
        }
        if let Some(last) = prev {
            if last > self.duration_s + 1e-6 {
                return Err(self.malformed(format!(
                    "last sample at {last} s is after the trial end {}",
                    self.duration_s
                )));
            }
        }
        if self.success {
            let off = angular_distance(&self.hit, &self.placed.target_center);
            let r = self.placed.target_size_deg / 2.0;
            if off > r + 1e-6 {
                return Err(self.malformed(format!(
                    "successful hit is {off} deg from the target center, radius is {r}"
                )));
            }
        }
        Ok(())
    }

    /// Total angular path length of the sampled ray, in degrees.
    pub fn path_length_deg(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| angular_distance(&w[0].direction, &w[1].direction))
            .sum()
    }
}

/// How duration statistics are grouped for outlier rejection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutlierGrouping {
    #[default]
    PerCondition,
    Global,
}

#[derive(Debug, Clone, Default)]
pub struct OutlierSplit {
    pub kept: Vec<Trial>,
    pub removed: Vec<Trial>,
}

/// Single-pass rejection of trials whose duration is more than `k` sample
/// standard deviations from their group mean. Input order is preserved.
pub fn remove_outliers(trials: Vec<Trial>, k: f64, grouping: OutlierGrouping) -> OutlierSplit {
    let key = |t: &Trial| match grouping {
        OutlierGrouping::PerCondition => Some(t.condition().key_bits()),
        OutlierGrouping::Global => None,
    };
    let mut groups: BTreeMap<Option<(u64, u64)>, Vec<f64>> = BTreeMap::new();
    for t in &trials {
        groups.entry(key(t)).or_default().push(t.duration_s);
    }
    let limits: BTreeMap<_, _> = groups
        .into_iter()
        .map(|(g, mut d)| {
            d.sort_by(f64::total_cmp);
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            let sd = if d.len() < 2 {
                0.0
            } else {
                (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            (g, (mean, sd))
        })
        .collect();

    let mut split = OutlierSplit::default();
    for t in trials {
        let (mean, sd) = limits[&key(&t)];
        let spread_is_zero = sd <= 1e-12 * mean.abs().max(1e-300);
        if !spread_is_zero && (t.duration_s - mean).abs() > k * sd {
            split.removed.push(t);
        } else {
            split.kept.push(t);
        }
    }
    split
}

/// Mean angular speed per tenth of a trial, averaged over trials of one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub condition: AngularCondition,
    pub trial_count: usize,
    /// Degrees per second, one entry per 10% of trial time.
    pub decile_mean_dps: [f64; PROFILE_BINS],
}

impl VelocityProfile {
    /// Index of the fastest interval (first one on ties).
    pub fn peak_decile(&self) -> usize {
        peak_index(&self.decile_mean_dps)
    }

    pub fn peak_dps(&self) -> f64 {
        self.decile_mean_dps[self.peak_decile()]
    }
}

pub(crate) fn peak_index(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean angular speed in each tenth of one trial's sampled time span.
///
/// Speed is constant on each inter-sample segment (forward difference). A
/// segment straddling an interval boundary contributes to both intervals in
/// proportion to its overlap, so every interval mean is a time average and
/// `Σ mean · span/10` equals the sampled path length.
pub fn trial_decile_speeds(trial: &Trial) -> Result<[f64; PROFILE_BINS]> {
    let s = &trial.samples;
    if s.len() < MIN_PROFILE_SAMPLES {
        return Err(trial.malformed(format!(
            "{} ray samples, velocity analysis needs at least {MIN_PROFILE_SAMPLES}",
            s.len()
        )));
    }
    let t0 = s[0].t_s;
    let span = s[s.len() - 1].t_s - t0;
    if span.is_nan() || span <= 0.0 {
        return Err(trial.malformed("ray samples span no time"));
    }
    let width = span / PROFILE_BINS as f64;
    let mut distance = [0.0; PROFILE_BINS];
    for w in s.windows(2) {
        let dt = w[1].t_s - w[0].t_s;
        if dt.is_nan() || dt <= 0.0 {
            return Err(trial.malformed("sample times not strictly increasing"));
        }
        let speed = angular_distance(&w[0].direction, &w[1].direction) / dt;
        let (a, b) = (w[0].t_s - t0, w[1].t_s - t0);
        let first = ((a / width).floor() as usize).min(PROFILE_BINS - 1);
        let last = ((b / width).ceil() as usize).clamp(1, PROFILE_BINS);
        for (bin, acc) in distance.iter_mut().enumerate().take(last).skip(first) {
            let lo = bin as f64 * width;
            let hi = if bin + 1 == PROFILE_BINS {
                span
            } else {
                (bin + 1) as f64 * width
            };
            let overlap = b.min(hi) - a.max(lo);
            if overlap > 0.0 {
                *acc += speed * overlap;
            }
        }
    }
    Ok(distance.map(|d| d / width))
}

/// Average interval speeds over every trial with the given condition.
pub fn velocity_profile(trials: &[Trial], condition: AngularCondition) -> Result<VelocityProfile> {
    let mut sum = [0.0; PROFILE_BINS];
    let mut count = 0usize;
    for t in trials
        .iter()
        .filter(|t| t.condition().key_bits() == condition.key_bits())
    {
        let d = trial_decile_speeds(t)?;
        for (acc, v) in sum.iter_mut().zip(d) {
            *acc += v;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::InsufficientData(format!(
            "no trials for condition alpha={} omega={}",
            condition.alpha_deg(),
            condition.omega_deg()
        )));
    }
    Ok(VelocityProfile {
        condition,
        trial_count: count,
        decile_mean_dps: sum.map(|s| s / count as f64),
    })
}

/// Velocity profiles for every condition present, sorted by `(α, ω)`.
pub fn velocity_profiles(trials: &[Trial]) -> Result<Vec<VelocityProfile>> {
    distinct_conditions(trials)
        .into_iter()
        .map(|c| velocity_profile(trials, c))
        .collect()
}

pub(crate) fn distinct_conditions(trials: &[Trial]) -> Vec<AngularCondition> {
    let mut seen = BTreeMap::new();
    for t in trials {
        seen.entry(t.condition().key_bits())
            .or_insert(t.condition());
    }
    let mut v: Vec<_> = seen.into_values().collect();
    v.sort_by(|a, b| a.cmp_key(b));
    v
}

/// Normalized hit of one trial.
pub fn trial_hitpoint(trial: &Trial) -> Result<crate::geometry::Hitpoint2D> {
    project_hitpoint(
        &trial.placed.start_center,
        &trial.placed.target_center,
        trial.placed.target_size_deg / 2.0,
        &trial.hit,
    )
    .map_err(|e| trial.malformed(e.to_string()))
}

/// Per-condition hitpoint summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitpointSummary {
    pub condition: AngularCondition,
    pub n: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    /// Share of hits with `x < 0` among hits with `x ≠ 0`; 0 when there are none.
    pub undershoot_fraction: f64,
    /// Share of hits with `x > 0` among hits with `x ≠ 0`.
    pub overshoot_fraction: f64,
}

/// Projects successful hits and summarizes them per condition, sorted by `(α, ω)`.
/// Failed trials are skipped.
pub fn hitpoint_stats(trials: &[Trial]) -> Result<Vec<HitpointSummary>> {
    let mut groups: ByCondition<Vec<(f64, f64)>> = BTreeMap::new();
    for t in trials.iter().filter(|t| t.success) {
        let p = trial_hitpoint(t)?;
        groups
            .entry(t.condition().key_bits())
            .or_insert_with(|| (t.condition(), Vec::new()))
            .1
            .push((p.x, p.y));
    }
    let mut out: Vec<HitpointSummary> = groups
        .into_values()
        .map(|(condition, pts)| {
            let n = pts.len();
            let under = pts.iter().filter(|p| p.0 < 0.0).count();
            let over = pts.iter().filter(|p| p.0 > 0.0).count();
            let signed = under + over;
            let frac = |k: usize| {
                if signed == 0 {
                    0.0
                } else {
                    k as f64 / signed as f64
                }
            };
            HitpointSummary {
                condition,
                n,
                mean_x: pts.iter().map(|p| p.0).sum::<f64>() / n as f64,
                mean_y: pts.iter().map(|p| p.1).sum::<f64>() / n as f64,
                undershoot_fraction: frac(under),
                overshoot_fraction: frac(over),
            }
        })
        .collect();
    out.sort_by(|a, b| a.condition.cmp_key(&b.condition));
    Ok(out)
}

/// Fixed-effects fit `x = intercept + alpha_coef · α + omega_coef · ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitpointEffects {
    pub intercept: f64,
    pub alpha_coef: f64,
    pub omega_coef: f64,
    pub r2: f64,
    pub n_conditions: usize,
}

/// Least squares of `x` on `(α, ω)` over `(α, ω, x)` points.
pub fn fit_x_on_alpha_omega(points: &[(f64, f64, f64)]) -> Result<HitpointEffects> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} conditions, the two-predictor fit needs at least 3",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let ma = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mw = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mx = points.iter().map(|p| p.2).sum::<f64>() / n;
    let (mut saa, mut sww, mut saw, mut sax, mut swx, mut sxx) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &(a, w, x) in points {
        let (da, dw, dx) = (a - ma, w - mw, x - mx);
        saa += da * da;
        sww += dw * dw;
        saw += da * dw;
        sax += da * dx;
        swx += dw * dx;
        sxx += dx * dx;
    }
    let det = saa * sww - saw * saw;
    if det.is_nan() || det <= 1e-12 * saa * sww {
        return Err(Error::DegenerateRegression(
            "alpha and omega are collinear or constant across conditions".into(),
        ));
    }
    let alpha_coef = (sww * sax - saw * swx) / det;
    let omega_coef = (saa * swx - saw * sax) / det;
    let intercept = mx - alpha_coef * ma - omega_coef * mw;
    let ss_res: f64 = points
        .iter()
        .map(|&(a, w, x)| (x - intercept - alpha_coef * a - omega_coef * w).powi(2))
        .sum();
    let r2 = r2_from(ss_res, sxx);
    Ok(HitpointEffects {
        intercept,
        alpha_coef,
        omega_coef,
        r2,
        n_conditions: points.len(),
    })
}

pub(crate) fn r2_from(ss_res: f64, ss_tot: f64) -> f64 {
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    }
}

/// Regresses per-condition mean projected `x` on `α` and `ω`.
pub fn hitpoint_fixed_effect_fit(trials: &[Trial]) -> Result<HitpointEffects> {
    let stats = hitpoint_stats(trials)?;
    let pts: Vec<_> = stats
        .iter()
        .map(|s| (s.condition.alpha_deg(), s.condition.omega_deg(), s.mean_x))
        .collect();
    fit_x_on_alpha_omega(&pts)
}

/// Spearman rank correlation with average ranks for ties. `NaN` when either
/// side has no spread or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    if x.len() != y.len() || x.len() < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}
