//! Synthetic pointing trials.
//!
//! Two modes share one parameter set:
//!
//! - parametric: duration follows `a + b · ID + noise` exactly, the ray sweeps a
//!   minimum-jerk great circle to a hit drawn uniformly in the target disk;
//! - motor: a ballistic minimum-jerk submovement toward an aim point biased to
//!   the near edge, followed by corrective submovements until the ray is
//!   inside the target.
//!
//! Each trial draws from its own ChaCha stream keyed by `(seed, trial index)`,
//! so results do not depend on generation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{RaySample, Trial};
use crate::error::{Error, Result};
use crate::geometry::{
    add, angular_distance, cross, normalize, scale, AngularCondition, Direction3, PlacedTrial,
};
use crate::models::IdModel;
use crate::taskgen::TaskPlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorParams {
    /// Planted intercept, seconds.
    pub a_s: f64,
    /// Planted slope, seconds per ID unit.
    pub b_s_per_id: f64,
    pub id_model: IdModel,
    /// Gaussian SD added to each planted duration (ballistic duration in motor mode).
    pub noise_sd_s: f64,
    /// Ballistic aim offset toward the start, as a fraction of ω/2 at small ω.
    pub aim_bias_frac: f64,
    /// Growth of the aim offset fraction per 100° of ω.
    pub bias_omega_sensitivity: f64,
    /// Ballistic endpoint SD as a fraction of the movement amplitude.
    pub endpoint_noise_frac: f64,
    /// Pause before each corrective submovement.
    pub correction_latency_s: f64,
    /// Shortest corrective submovement.
    pub correction_min_s: f64,
    pub sample_rate_hz: f64,
    /// Stationary time between reaching the target and the confirming click.
    pub trigger_latency_s: f64,
    /// A trial that is still outside the target after this many corrections fails.
    pub max_corrections: u32,
    /// Below this ω the ballistic speed is undamped.
    pub damping_onset_deg: f64,
    /// At and above this ω the ballistic speed factor is `damping_min_factor`.
    pub damping_full_deg: f64,
    pub damping_min_factor: f64,
    /// Redraws allowed when a planted duration comes out nonpositive.
    pub max_resamples: u32,
}

impl Default for MotorParams {
    fn default() -> Self {
        Self {
            a_s: 0.2133,
            b_s_per_id: 0.15,
            id_model: IdModel::Ang,
            noise_sd_s: 0.03,
            aim_bias_frac: 0.15,
            bias_omega_sensitivity: 1.5,
            endpoint_noise_frac: 0.08,
            correction_latency_s: 0.15,
            correction_min_s: 0.1,
            sample_rate_hz: 90.0,
            trigger_latency_s: 0.05,
            max_corrections: 8,
            damping_onset_deg: 64.0,
            damping_full_deg: 136.0,
            damping_min_factor: 0.85,
            max_resamples: 100,
        }
    }
}

impl MotorParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("a_s", self.a_s),
            ("b_s_per_id", self.b_s_per_id),
            ("noise_sd_s", self.noise_sd_s),
            ("aim_bias_frac", self.aim_bias_frac),
            ("bias_omega_sensitivity", self.bias_omega_sensitivity),
            ("endpoint_noise_frac", self.endpoint_noise_frac),
            ("correction_latency_s", self.correction_latency_s),
            ("correction_min_s", self.correction_min_s),
            ("trigger_latency_s", self.trigger_latency_s),
            ("damping_onset_deg", self.damping_onset_deg),
            ("damping_full_deg", self.damping_full_deg),
            ("damping_min_factor", self.damping_min_factor),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Usage(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.sample_rate_hz.is_nan() || self.sample_rate_hz < 30.0 {
            return Err(Error::Usage(format!(
                "sample_rate_hz must be at least 30, got {}",
                self.sample_rate_hz
            )));
        }
        if self.damping_min_factor <= 0.0 || self.damping_min_factor > 1.0 {
            return Err(Error::Usage("damping_min_factor must be in (0, 1]".into()));
        }
        if !self.id_model.is_angular() {
            return Err(Error::Usage(format!(
                "{} is not an angular ID model",
                self.id_model
            )));
        }
        Ok(())
    }

    /// Multiplicative ballistic speed factor for targets of size `omega_deg`.
    pub fn speed_factor(&self, omega_deg: f64) -> f64 {
        let (lo, hi) = (self.damping_onset_deg, self.damping_full_deg);
        if omega_deg <= lo {
            1.0
        } else if omega_deg >= hi || hi <= lo {
            self.damping_min_factor
        } else {
            1.0 - (1.0 - self.damping_min_factor) * (omega_deg - lo) / (hi - lo)
        }
    }

    /// Offset of the ballistic aim point from the target center toward the start, degrees.
    pub fn aim_bias_deg(&self, omega_deg: f64) -> f64 {
        let frac = self.aim_bias_frac * (1.0 + self.bias_omega_sensitivity * omega_deg / 100.0);
        frac.min(0.95) * omega_deg / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    Parametric,
    Motor,
}

/// Simulated trials plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trials: Vec<Trial>,
    /// Planted durations redrawn because they were nonpositive.
    pub resampled: usize,
    /// Trials emitted with `success = false`.
    pub failed: usize,
}

/// Minimum-jerk position profile `10τ³ − 15τ⁴ + 6τ⁵`.
pub fn minimum_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Independent RNG stream for one trial.
pub fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

#[derive(Debug, Clone, Copy)]
struct Move {
    t0: f64,
    t1: f64,
    from: Direction3,
    to: Direction3,
}

/// Piecewise ray path: minimum-jerk moves separated by pauses.
#[derive(Debug, Clone)]
struct Path {
    origin: Direction3,
    moves: Vec<Move>,
}

impl Path {
    fn at(&self, t: f64) -> Direction3 {
        let mut pos = self.origin;
        for m in &self.moves {
            if t <= m.t0 {
                return pos;
            }
            if t < m.t1 {
                let s = minimum_jerk((t - m.t0) / (m.t1 - m.t0));
                return m.from.slerp(&m.to, s);
            }
            pos = m.to;
        }
        pos
    }

    fn sample(&self, duration: f64, rate_hz: f64) -> Vec<RaySample> {
        let dt = 1.0 / rate_hz;
        let mut out = Vec::with_capacity((duration * rate_hz) as usize + 2);
        let mut k = 0u64;
        loop {
            let t = k as f64 * dt;
            if t >= duration - 1e-9 {
                break;
            }
            out.push(RaySample {
                t_s: t,
                direction: self.at(t),
            });
            k += 1;
        }
        out.push(RaySample {
            t_s: duration,
            direction: self.at(duration),
        });
        out
    }
}

/// Uniform point in the angular disk of radius `radius_deg` around `center`.
fn uniform_in_disk<R: Rng + ?Sized>(
    center: &Direction3,
    radius_deg: f64,
    rng: &mut R,
) -> Direction3 {
    let r = radius_deg * rng.random::<f64>().sqrt();
    let bearing = rng.random::<f64>() * std::f64::consts::TAU;
    center.offset(r, bearing)
}

/// Moves `point` by `along` degrees in the direction of travel `from → point`
/// and `lateral` degrees across it (tangent-plane offsets).
fn perturb(from: &Direction3, point: &Direction3, along: f64, lateral: f64) -> Direction3 {
    let p = point.to_array();
    let beyond = from
        .rotated_toward(point, angular_distance(from, point) + 1.0)
        .to_array();
    let mut t_along = crate::geometry::sub(beyond, scale(p, crate::geometry::dot(beyond, p)));
    if crate::geometry::norm(t_along) < 1e-12 {
        t_along = cross(p, [0.0, 1.0, 0.0]);
    }
    let t_along = normalize(t_along);
    let t_lat = cross(p, t_along);
    let v = add(
        p,
        add(
            scale(t_along, along.to_radians().tan()),
            scale(t_lat, lateral.to_radians().tan()),
        ),
    );
    Direction3::new(v[0], v[1], v[2]).expect("perturbed direction is nonzero")
}

fn planted_duration<R: Rng + ?Sized>(
    params: &MotorParams,
    condition: &AngularCondition,
    rng: &mut R,
    resampled: &mut usize,
) -> Result<f64> {
    let mean = params.a_s + params.b_s_per_id * params.id_model.angular(condition)?;
    let noise = Normal::new(0.0, params.noise_sd_s).map_err(|e| Error::Usage(e.to_string()))?;
    for _ in 0..=params.max_resamples {
        let d = mean + noise.sample(rng);
        if d > 0.0 {
            return Ok(d);
        }
        *resampled += 1;
    }
    Err(Error::Usage(format!(
        "planted duration stayed nonpositive after {} redraws (mean {mean} s)",
        params.max_resamples
    )))
}

struct Meta<'a> {
    participant_id: &'a str,
    session: u32,
    trial_index: u32,
}

/// Measured (non-warm-up) plan trials with their session and running index.
fn plan_entries(plan: &TaskPlan) -> impl Iterator<Item = (u32, u32, &PlacedTrial)> {
    plan.trials()
        .filter(|(_, warmup, _)| !warmup)
        .enumerate()
        .map(|(i, (s, _, t))| (s as u32, i as u32, t))
}

fn parametric_trial(
    placed: &PlacedTrial,
    meta: Meta<'_>,
    params: &MotorParams,
    rng: &mut ChaCha8Rng,
    resampled: &mut usize,
) -> Result<Trial> {
    let duration = planted_duration(params, &placed.condition, rng, resampled)?;
    let hit = uniform_in_disk(&placed.target_center, placed.target_size_deg / 2.0, rng);
    let path = Path {
        origin: placed.start_center,
        moves: vec![Move {
            t0: 0.0,
            t1: duration,
            from: placed.start_center,
            to: hit,
        }],
    };
    Ok(Trial {
        participant_id: meta.participant_id.to_string(),
        session: meta.session,
        trial_index: meta.trial_index,
        placed: *placed,
        duration_s: duration,
        success: true,
        hit,
        samples: path.sample(duration, params.sample_rate_hz),
    })
}

fn motor_trial(
    placed: &PlacedTrial,
    meta: Meta<'_>,
    params: &MotorParams,
    rng: &mut ChaCha8Rng,
    resampled: &mut usize,
) -> Result<Trial> {
    let c = placed.condition;
    let target = placed.target_center;
    let radius = placed.target_size_deg / 2.0;
    let start = placed.start_center;

    let planted = planted_duration(params, &c, rng, resampled)?;
    let ballistic_s = (planted - params.trigger_latency_s).max(params.correction_min_s)
        / params.speed_factor(c.omega_deg());

    let amplitude = angular_distance(&start, &target);
    let aim = target.rotated_toward(&start, params.aim_bias_deg(c.omega_deg()).min(amplitude));
    let sigma = params.endpoint_noise_frac * amplitude;
    let along: f64 = StandardNormal.sample(rng);
    let lateral: f64 = StandardNormal.sample(rng);
    let mut pos = perturb(&start, &aim, along * sigma, lateral * sigma);

    let mut moves = vec![Move {
        t0: 0.0,
        t1: ballistic_s,
        from: start,
        to: pos,
    }];
    let mut t = ballistic_s;
    let mut corrections = 0;
    while angular_distance(&pos, &target) > radius && corrections < params.max_corrections {
        let remaining = angular_distance(&pos, &target);
        let sigma = params.endpoint_noise_frac * remaining;
        let along: f64 = StandardNormal.sample(rng);
        let lateral: f64 = StandardNormal.sample(rng);
        let next = perturb(&pos, &target, along * sigma, lateral * sigma);
        let id = (remaining / c.omega_deg()).ln_1p() / std::f64::consts::LN_2;
        let t0 = t + params.correction_latency_s;
        let t1 = t0 + params.correction_min_s + params.b_s_per_id * id;
        moves.push(Move {
            t0,
            t1,
            from: pos,
            to: next,
        });
        pos = next;
        t = t1;
        corrections += 1;
    }
    let success = angular_distance(&pos, &target) <= radius;
    let duration = t + params.trigger_latency_s;
    let path = Path {
        origin: start,
        moves,
    };
    Ok(Trial {
        participant_id: meta.participant_id.to_string(),
        session: meta.session,
        trial_index: meta.trial_index,
        placed: *placed,
        duration_s: duration,
        success,
        hit: pos,
        samples: path.sample(duration, params.sample_rate_hz),
    })
}

fn simulate(
    plan: &TaskPlan,
    params: &MotorParams,
    seed: u64,
    participant_id: &str,
    mode: SimMode,
) -> Result<SimOutput> {
    params.validate()?;
    let mut out = SimOutput {
        trials: Vec::with_capacity(plan.trial_count()),
        resampled: 0,
        failed: 0,
    };
    for (session, index, placed) in plan_entries(plan) {
        let mut rng = trial_rng(seed, index as u64);
        let meta = Meta {
            participant_id,
            session,
            trial_index: index,
        };
        let trial = match mode {
            SimMode::Parametric => {
                parametric_trial(placed, meta, params, &mut rng, &mut out.resampled)?
            }
            SimMode::Motor => motor_trial(placed, meta, params, &mut rng, &mut out.resampled)?,
        };
        if !trial.success {
            out.failed += 1;
        }
        out.trials.push(trial);
    }
    Ok(out)
}

/// Planted-law trials for every measured trial of `plan`.
pub fn simulate_parametric(plan: &TaskPlan, params: &MotorParams, seed: u64) -> Result<SimOutput> {
    simulate(plan, params, seed, "sim", SimMode::Parametric)
}

/// Ballistic-plus-correction trials for every measured trial of `plan`.
pub fn simulate_motor(plan: &TaskPlan, params: &MotorParams, seed: u64) -> Result<SimOutput> {
    simulate(plan, params, seed, "sim", SimMode::Motor)
}

/// Runs the plan once per participant (`P01`, `P02`, …), each with its own
/// seed derived from `seed`.
pub fn simulate_cohort(
    plan: &TaskPlan,
    params: &MotorParams,
    mode: SimMode,
    participants: usize,
    seed: u64,
) -> Result<SimOutput> {
    let mut all = SimOutput {
        trials: Vec::new(),
        resampled: 0,
        failed: 0,
    };
    let width = participants.to_string().len().max(2);
    for p in 0..participants {
        let id = format!("P{:0width$}", p + 1);
        let sub_seed = trial_rng(seed, u64::MAX - p as u64).random::<u64>();
        let out = simulate(plan, params, sub_seed, &id, mode)?;
        all.trials.extend(out.trials);
        all.resampled += out.resampled;
        all.failed += out.failed;
    }
    Ok(all)
}
