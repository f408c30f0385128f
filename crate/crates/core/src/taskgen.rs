//! Experiment plans for the ISO circle task and the hemispherical-grid task.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    admissible_pairs, iso_order, pick_pair, place_hemigrid, place_iso_circle, AngularCondition,
    GridSlot, PlacedTrial, PlacementConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Methodology {
    IsoCircle,
    HemiGrid,
}

/// How α and ω/2 must compare for a condition to be used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaRule {
    /// `α ≥ ω/2`: the start may touch the target edge.
    #[default]
    AtLeastHalfOmega,
    /// `α > ω/2`: the start is strictly outside the target.
    ExceedsHalfOmega,
}

/// Grid used to check that a condition can actually be placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCheck {
    pub grid_spacing_deg: f64,
    pub placement: PlacementConfig,
}

/// Constraints applied by [`valid_pairs`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Admissibility {
    pub alpha_rule: AlphaRule,
    /// When set, a condition must have at least one placeable slot pair.
    pub grid: Option<GridCheck>,
}

/// Cartesian product of `alphas × omegas` filtered by `admissibility`,
/// sorted by `(α, ω)` with duplicates removed.
pub fn valid_pairs(
    alphas: &[f64],
    omegas: &[f64],
    admissibility: &Admissibility,
) -> Vec<AngularCondition> {
    let slots = admissibility.grid.map(|g| {
        place_hemigrid(
            g.grid_spacing_deg,
            g.placement.fov_h_deg,
            g.placement.fov_v_deg,
        )
    });
    let mut out = Vec::new();
    for &a in alphas {
        for &w in omegas {
            let rule_ok = match admissibility.alpha_rule {
                AlphaRule::AtLeastHalfOmega => a >= w / 2.0,
                AlphaRule::ExceedsHalfOmega => a > w / 2.0,
            };
            if !rule_ok {
                continue;
            }
            let Ok(c) = AngularCondition::new(a, w) else {
                continue;
            };
            if let (Some(g), Some(slots)) = (&admissibility.grid, &slots) {
                if admissible_pairs(slots, c, &g.placement).is_empty() {
                    continue;
                }
            }
            out.push(c);
        }
    }
    out.sort_by(|a, b| a.cmp_key(b));
    out.dedup_by(|a, b| a.key_bits() == b.key_bits());
    out
}

/// Trials sharing one condition. ISO sets hold one circle of reciprocal
/// trials; hemispherical-grid sets hold a single independent trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSet {
    pub condition: AngularCondition,
    /// Practice set, excluded from analysis.
    #[serde(default)]
    pub warmup: bool,
    pub trials: Vec<PlacedTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub sets: Vec<TrialSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub methodology: Methodology,
    pub seed: u64,
    /// Failed trials are re-queued at the end of the run; failures are runtime
    /// events, so the plan only records the policy.
    pub repeat_failed: bool,
    pub sessions: Vec<Session>,
}

impl TaskPlan {
    /// Sets excluding warm-up sets.
    pub fn set_count(&self) -> usize {
        self.measured_sets().count()
    }

    /// Trials excluding warm-up sets.
    pub fn trial_count(&self) -> usize {
        self.measured_sets().map(|s| s.trials.len()).sum()
    }

    pub fn measured_sets(&self) -> impl Iterator<Item = &TrialSet> {
        self.sessions
            .iter()
            .flat_map(|s| &s.sets)
            .filter(|s| !s.warmup)
    }

    /// Every trial in run order as `(session index, warmup, trial)`.
    pub fn trials(&self) -> impl Iterator<Item = (usize, bool, &PlacedTrial)> {
        self.sessions.iter().enumerate().flat_map(|(i, s)| {
            s.sets
                .iter()
                .flat_map(move |set| set.trials.iter().map(move |t| (i, set.warmup, t)))
        })
    }

    /// Distinct measured conditions, sorted.
    pub fn conditions(&self) -> Vec<AngularCondition> {
        let mut v: Vec<_> = self.measured_sets().map(|s| s.condition).collect();
        v.sort_by(|a, b| a.cmp_key(b));
        v.dedup_by(|a, b| a.key_bits() == b.key_bits());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoPlanConfig {
    pub reps: usize,
    pub n_targets: usize,
    pub view_distance_m: f64,
    pub warmup_sets: usize,
}

impl Default for IsoPlanConfig {
    fn default() -> Self {
        Self {
            reps: 3,
            n_targets: 10,
            view_distance_m: 2.0,
            warmup_sets: 0,
        }
    }
}

/// Each condition `reps` times in shuffled set order; each set is one full
/// circle visited in [`iso_order`]. The first trial of a set starts from the
/// circle point opposite its target.
pub fn gen_iso_plan(
    conditions: &[AngularCondition],
    config: &IsoPlanConfig,
    seed: u64,
) -> Result<TaskPlan> {
    if conditions.is_empty() {
        return Err(Error::PlanShape("no conditions to plan".into()));
    }
    if config.reps == 0 {
        return Err(Error::PlanShape("reps must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<AngularCondition> = conditions
        .iter()
        .flat_map(|c| std::iter::repeat_n(*c, config.reps))
        .collect();
    order.shuffle(&mut rng);
    let warmup: Vec<AngularCondition> = (0..config.warmup_sets)
        .map(|_| *conditions.choose(&mut rng).expect("nonempty"))
        .collect();

    let mut sets = Vec::with_capacity(warmup.len() + order.len());
    for (condition, is_warmup) in warmup
        .into_iter()
        .map(|c| (c, true))
        .chain(order.into_iter().map(|c| (c, false)))
    {
        let circle = place_iso_circle(config.n_targets, condition, config.view_distance_m)?;
        let visit = iso_order(config.n_targets);
        let trials = visit
            .iter()
            .enumerate()
            .map(|(j, &target)| {
                let start = if j == 0 {
                    circle.opposite_point(target)
                } else {
                    circle.centers[visit[j - 1]]
                };
                PlacedTrial::new(start, circle.centers[target], condition)
            })
            .collect();
        sets.push(TrialSet {
            condition,
            warmup: is_warmup,
            trials,
        });
    }
    Ok(TaskPlan {
        methodology: Methodology::IsoCircle,
        seed,
        repeat_failed: true,
        sessions: vec![Session { sets }],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HemiPlanConfig {
    pub sessions: usize,
    pub trials_per_session: usize,
    pub grid_spacing_deg: f64,
    pub placement: PlacementConfig,
    /// Require every condition to appear equally often.
    pub enforce_balance: bool,
    /// Practice trials prepended to the first session.
    pub warmup_trials: usize,
}

impl Default for HemiPlanConfig {
    fn default() -> Self {
        Self {
            sessions: 15,
            trials_per_session: 48,
            grid_spacing_deg: 10.0,
            placement: PlacementConfig::default(),
            enforce_balance: true,
            warmup_trials: 0,
        }
    }
}

/// Shuffled pairing list spread over sessions; every trial is placed on the
/// grid independently.
///
/// With `enforce_balance` the total trial count must be a multiple of the
/// number of pairs. Without it the remainder is filled by distinct pairs
/// drawn at random.
pub fn gen_hemi_plan(
    pairs: &[AngularCondition],
    config: &HemiPlanConfig,
    seed: u64,
) -> Result<TaskPlan> {
    if pairs.is_empty() {
        return Err(Error::PlanShape("no conditions to plan".into()));
    }
    let total = config.sessions * config.trials_per_session;
    if total == 0 {
        return Err(Error::PlanShape(
            "sessions and trials per session must be positive".into(),
        ));
    }
    let reps = total / pairs.len();
    let remainder = total % pairs.len();
    if config.enforce_balance && remainder != 0 {
        return Err(Error::PlanShape(format!(
            "{} sessions x {} trials = {total} is not a multiple of {} conditions; \
             use a total of {} or {} trials",
            config.sessions,
            config.trials_per_session,
            pairs.len(),
            reps * pairs.len(),
            (reps + 1) * pairs.len()
        )));
    }

    let slots = place_hemigrid(
        config.grid_spacing_deg,
        config.placement.fov_h_deg,
        config.placement.fov_v_deg,
    );
    let mut candidates: HashMap<(u64, u64), Vec<(usize, usize)>> = HashMap::new();
    for c in pairs {
        let found = admissible_pairs(&slots, *c, &config.placement);
        if found.is_empty() {
            return Err(Error::InfeasibleCondition {
                condition: *c,
                reason: "no slot pair at this amplitude fits the field of view".into(),
            });
        }
        candidates.insert(c.key_bits(), found);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list: Vec<AngularCondition> = pairs
        .iter()
        .flat_map(|c| std::iter::repeat_n(*c, reps))
        .collect();
    list.extend(pairs.choose_multiple(&mut rng, remainder).copied());
    list.shuffle(&mut rng);

    let place =
        |c: AngularCondition, rng: &mut ChaCha8Rng, slots: &[GridSlot]| -> Result<TrialSet> {
            let placed = pick_pair(slots, &candidates[&c.key_bits()], c, rng)?;
            Ok(TrialSet {
                condition: c,
                warmup: false,
                trials: vec![placed],
            })
        };

    let mut warmup = Vec::with_capacity(config.warmup_trials);
    for _ in 0..config.warmup_trials {
        let c = *pairs.choose(&mut rng).expect("nonempty");
        let mut set = place(c, &mut rng, &slots)?;
        set.warmup = true;
        warmup.push(set);
    }
    let mut sessions = Vec::with_capacity(config.sessions);
    for chunk in list.chunks(config.trials_per_session) {
        let sets = chunk
            .iter()
            .map(|&c| place(c, &mut rng, &slots))
            .collect::<Result<Vec<_>>>()?;
        sessions.push(Session { sets });
    }
    if let Some(first) = sessions.first_mut() {
        warmup.append(&mut first.sets);
        first.sets = warmup;
    }
    Ok(TaskPlan {
        methodology: Methodology::HemiGrid,
        seed,
        repeat_failed: true,
        sessions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angular_distance;

    pub(crate) const MAIN_OMEGAS: [f64; 18] = [
        2.0, 8.0, 16.0, 24.0, 32.0, 40.0, 48.0, 56.0, 64.0, 72.0, 80.0, 88.0, 96.0, 104.0, 112.0,
        120.0, 128.0, 136.0,
    ];

    fn main_alphas() -> Vec<f64> {
        (1..=7).map(|i| 10.0 * i as f64).collect()
    }

    #[test]
    fn prelim_grid_has_18_pairs() {
        let v = valid_pairs(
            &[20.0, 40.0, 60.0],
            &[1.0, 2.0, 3.0, 5.0, 10.0, 15.0],
            &Admissibility::default(),
        );
        assert_eq!(v.len(), 18);
    }

    #[test]
    fn main_grid_counts_match_enumeration() {
        let alphas = main_alphas();
        let brute = |strict: bool| {
            let mut n = 0;
            for &a in &alphas {
                for &w in &MAIN_OMEGAS {
                    if (strict && a > w / 2.0) || (!strict && a >= w / 2.0) {
                        n += 1;
                    }
                }
            }
            n
        };
        let loose = valid_pairs(&alphas, &MAIN_OMEGAS, &Admissibility::default());
        assert_eq!(loose.len(), brute(false));
        assert_eq!(loose.len(), 75);
        let strict = valid_pairs(
            &alphas,
            &MAIN_OMEGAS,
            &Admissibility {
                alpha_rule: AlphaRule::ExceedsHalfOmega,
                grid: None,
            },
        );
        assert_eq!(strict.len(), brute(true));
        assert_eq!(strict.len(), 72);
        assert!(strict.windows(2).all(|w| w[0].cmp_key(&w[1]).is_lt()));
    }

    #[test]
    fn grid_predicate_filters_conditions() {
        let strict_fov = Admissibility {
            alpha_rule: AlphaRule::AtLeastHalfOmega,
            grid: Some(GridCheck {
                grid_spacing_deg: 10.0,
                placement: PlacementConfig {
                    fov_fit: crate::geometry::FovFit::TargetDiskInside,
                    ..PlacementConfig::default()
                },
            }),
        };
        let v = valid_pairs(&main_alphas(), &MAIN_OMEGAS, &strict_fov);
        assert!(!v.is_empty());
        assert!(v.iter().all(|c| c.omega_deg() <= 98.0));
        let centers = Admissibility {
            grid: Some(GridCheck {
                grid_spacing_deg: 10.0,
                placement: PlacementConfig::default(),
            }),
            ..Admissibility::default()
        };
        assert_eq!(
            valid_pairs(&main_alphas(), &MAIN_OMEGAS, &centers).len(),
            75
        );
    }

    #[test]
    fn empty_omegas_give_no_pairs() {
        assert!(valid_pairs(&[10.0, 20.0], &[], &Admissibility::default()).is_empty());
    }

    #[test]
    fn iso_plan_counts() {
        let conds = valid_pairs(
            &[20.0, 40.0, 60.0],
            &[1.0, 2.0, 3.0, 5.0, 10.0, 15.0],
            &Admissibility::default(),
        );
        let plan = gen_iso_plan(&conds, &IsoPlanConfig::default(), 1).unwrap();
        assert_eq!(plan.set_count(), 54);
        assert_eq!(plan.trial_count(), 540);
        for set in plan.measured_sets() {
            assert!(set.trials.iter().all(|t| t.condition == set.condition));
        }
    }

    #[test]
    fn iso_single_set_follows_visit_order() {
        let c = AngularCondition::new(40.0, 5.0).unwrap();
        let cfg = IsoPlanConfig {
            reps: 1,
            ..IsoPlanConfig::default()
        };
        let plan = gen_iso_plan(&[c], &cfg, 3).unwrap();
        let set = &plan.sessions[0].sets[0];
        let circle = place_iso_circle(10, c, 2.0).unwrap();
        let idx: Vec<usize> = set
            .trials
            .iter()
            .map(|t| {
                circle
                    .centers
                    .iter()
                    .position(|d| *d == t.target_center)
                    .unwrap()
            })
            .collect();
        assert_eq!(idx, vec![0, 5, 1, 6, 2, 7, 3, 8, 4, 9]);
        // n/2 steps are exact; n/2 + 1 steps are slightly shorter
        for (j, t) in set.trials.iter().enumerate() {
            let amp = t.movement_amplitude_deg();
            if j % 2 == 1 || j == 0 {
                assert!((amp - 40.0).abs() < 1e-6, "{j}: {amp}");
            } else {
                assert!(amp < 40.0 && amp > 37.0, "{j}: {amp}");
            }
        }
    }

    #[test]
    fn iso_plan_warmup_sets_are_excluded() {
        let c = AngularCondition::new(40.0, 5.0).unwrap();
        let cfg = IsoPlanConfig {
            reps: 2,
            warmup_sets: 3,
            ..IsoPlanConfig::default()
        };
        let plan = gen_iso_plan(&[c], &cfg, 3).unwrap();
        assert_eq!(plan.sessions[0].sets.len(), 5);
        assert_eq!(plan.set_count(), 2);
        assert!(plan.sessions[0].sets[..3].iter().all(|s| s.warmup));
    }

    #[test]
    fn plans_are_deterministic() {
        let conds = valid_pairs(&[20.0, 40.0], &[2.0, 10.0], &Admissibility::default());
        let a = gen_iso_plan(&conds, &IsoPlanConfig::default(), 11).unwrap();
        let b = gen_iso_plan(&conds, &IsoPlanConfig::default(), 11).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = gen_iso_plan(&conds, &IsoPlanConfig::default(), 12).unwrap();
        assert_ne!(a, c);

        let cfg = HemiPlanConfig {
            sessions: 2,
            trials_per_session: 4,
            ..HemiPlanConfig::default()
        };
        let x = gen_hemi_plan(&conds, &cfg, 5).unwrap();
        let y = gen_hemi_plan(&conds, &cfg, 5).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn hemi_plan_main_study_shape() {
        let pairs = valid_pairs(
            &main_alphas(),
            &MAIN_OMEGAS,
            &Admissibility {
                alpha_rule: AlphaRule::ExceedsHalfOmega,
                grid: None,
            },
        );
        let plan = gen_hemi_plan(&pairs, &HemiPlanConfig::default(), 7).unwrap();
        assert_eq!(plan.sessions.len(), 15);
        assert!(plan.sessions.iter().all(|s| s.sets.len() == 48));
        assert_eq!(plan.trial_count(), 720);
        let mut counts: HashMap<(u64, u64), usize> = HashMap::new();
        for set in plan.measured_sets() {
            *counts.entry(set.condition.key_bits()).or_default() += 1;
            let t = &set.trials[0];
            assert!(
                (angular_distance(&t.start_center, &t.target_center) - set.condition.alpha_deg())
                    .abs()
                    < 1e-6
            );
            assert_eq!(t.start_size_deg, 1.0);
            assert_eq!(t.target_size_deg, set.condition.omega_deg());
        }
        assert_eq!(counts.len(), 72);
        assert!(counts.values().all(|&n| n == 10));
    }

    #[test]
    fn hemi_plan_single_pair() {
        let c = AngularCondition::new(30.0, 8.0).unwrap();
        let cfg = HemiPlanConfig {
            sessions: 1,
            trials_per_session: 4,
            ..HemiPlanConfig::default()
        };
        let plan = gen_hemi_plan(&[c], &cfg, 2).unwrap();
        assert_eq!(plan.trial_count(), 4);
        assert!(plan.measured_sets().all(|s| s.condition == c));
    }

    #[test]
    fn hemi_plan_shape_errors() {
        let pairs = valid_pairs(&[10.0, 20.0, 30.0], &[2.0, 8.0], &Admissibility::default());
        let cfg = HemiPlanConfig {
            sessions: 1,
            trials_per_session: 7,
            ..HemiPlanConfig::default()
        };
        match gen_hemi_plan(&pairs, &cfg, 1) {
            Err(Error::PlanShape(msg)) => assert!(msg.contains("6") && msg.contains("12"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let relaxed = HemiPlanConfig {
            enforce_balance: false,
            ..cfg
        };
        let plan = gen_hemi_plan(&pairs, &relaxed, 1).unwrap();
        assert_eq!(plan.trial_count(), 7);
    }

    #[test]
    fn hemi_plan_reports_unplaceable_condition() {
        let c = AngularCondition::new(70.0, 136.0).unwrap();
        let cfg = HemiPlanConfig {
            sessions: 1,
            trials_per_session: 1,
            placement: PlacementConfig {
                fov_fit: crate::geometry::FovFit::TargetDiskInside,
                ..PlacementConfig::default()
            },
            ..HemiPlanConfig::default()
        };
        assert!(matches!(
            gen_hemi_plan(&[c], &cfg, 1),
            Err(Error::InfeasibleCondition { .. })
        ));
    }
}
