//! Command-line front end: `plan`, `simulate`, `analyze`, `validate`, `report`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{
    distinct_conditions, hitpoint_fixed_effect_fit, hitpoint_stats, remove_outliers,
    velocity_profiles, OutlierGrouping, Trial, MIN_PROFILE_SAMPLES,
};
use crate::error::Error;
use crate::geometry::{admissible_pairs, place_hemigrid, FovFit, PlacementConfig};
use crate::io::{self, AnalysisCache, NamedFit, Predictor, SweepResult};
use crate::models::IdModel;
use crate::regression::{
    alpha_only_fit, breakpoint_sweep_with, fit_one_part, grand_average, LeftPredictor, Weighting,
};
use crate::simulator::{simulate_cohort, MotorParams, SimMode};
use crate::taskgen::{
    gen_hemi_plan, gen_iso_plan, valid_pairs, Admissibility, AlphaRule, HemiPlanConfig,
    IsoPlanConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "distal",
    version,
    about = "Distal pointing task plans, simulation and performance models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a task plan.
    Plan(PlanArgs),
    /// Simulate trials for a plan.
    Simulate(SimulateArgs),
    /// Filter, average and fit a trial dataset; write report artifacts.
    Analyze(AnalyzeArgs),
    /// Check that a dataset or plan file loads cleanly.
    Validate(ValidateArgs),
    /// Re-emit report artifacts from a cached analysis.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Iso,
    Hemi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlphaRuleArg {
    /// α ≥ ω/2
    AtLeastHalf,
    /// α > ω/2
    ExceedsHalf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FovFitArg {
    Centers,
    Disk,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Amplitudes in degrees: `lo:hi:step` ranges and/or comma-separated values.
    #[arg(long)]
    pub alphas: String,
    /// Target sizes in degrees, same syntax as --alphas.
    #[arg(
        long,
        required_unless_present = "omegas_file",
        conflicts_with = "omegas_file"
    )]
    pub omegas: Option<String>,
    /// File of target sizes separated by whitespace or commas; `#` starts a comment.
    #[arg(long)]
    pub omegas_file: Option<PathBuf>,
    /// Admissibility rule; defaults to at-least-half for iso and exceeds-half for hemi.
    #[arg(long, value_enum)]
    pub alpha_rule: Option<AlphaRuleArg>,
    /// ISO: repetitions of each condition.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// ISO: targets per circle.
    #[arg(long, default_value_t = 10)]
    pub targets: usize,
    /// ISO: viewing distance in meters.
    #[arg(long, default_value_t = 2.0)]
    pub view_distance: f64,
    /// Hemi: number of sessions.
    #[arg(long, default_value_t = 15)]
    pub sessions: usize,
    /// Hemi: trials per session.
    #[arg(long, default_value_t = 48)]
    pub per_session: usize,
    /// Hemi: grid spacing in degrees.
    #[arg(long, default_value_t = 10.0)]
    pub grid_spacing: f64,
    #[arg(long, default_value_t = 104.0)]
    pub fov_h: f64,
    #[arg(long, default_value_t = 98.0)]
    pub fov_v: f64,
    /// Hemi: require object centers (default) or whole target disks inside the field of view.
    #[arg(long, value_enum, default_value_t = FovFitArg::Centers)]
    pub fov_fit: FovFitArg,
    /// Hemi: allow a trial total that is not a multiple of the condition count.
    #[arg(long)]
    pub allow_unbalanced: bool,
    /// Warm-up sets (iso) or trials (hemi) excluded from analysis.
    #[arg(long, default_value_t = 0)]
    pub warmup: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Parametric,
    Motor,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Parametric)]
    pub mode: ModeArg,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub participants: usize,
    /// JSON file with a full simulator parameter set; individual flags override it.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Planted intercept in seconds.
    #[arg(long)]
    pub a: Option<f64>,
    /// Planted slope in seconds per ID unit.
    #[arg(long)]
    pub b: Option<f64>,
    /// ID model the durations are planted on.
    #[arg(long)]
    pub model: Option<IdModel>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[arg(long)]
    pub max_corrections: Option<u32>,
    #[command(flatten)]
    pub output: DatasetOut,
}

#[derive(Debug, Args)]
pub struct DatasetOut {
    #[arg(long, requires = "samples_out", required_unless_present = "bundle_out")]
    pub trials_out: Option<PathBuf>,
    #[arg(long, requires = "trials_out")]
    pub samples_out: Option<PathBuf>,
    /// Write one JSON bundle instead of the two delimited files.
    #[arg(long, conflicts_with_all = ["trials_out", "samples_out"])]
    pub bundle_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatasetIn {
    #[arg(long, requires = "samples")]
    pub trials: Option<PathBuf>,
    #[arg(long, requires = "trials")]
    pub samples: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["trials", "samples"])]
    pub bundle: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupingArg {
    PerCondition,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Pooled,
    PerParticipant,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: DatasetIn,
    /// Reject trials more than K standard deviations from their group mean; 0 disables.
    #[arg(long, default_value_t = 3.0)]
    pub outlier_k: f64,
    #[arg(long, value_enum, default_value_t = GroupingArg::PerCondition)]
    pub outlier_grouping: GroupingArg,
    #[arg(long, value_enum, default_value_t = WeightingArg::Pooled)]
    pub weighting: WeightingArg,
    /// One-part fits to run, comma-separated (fitted on the grand means).
    #[arg(long, value_delimiter = ',', default_value = "ang,angpow3,dp3")]
    pub models: Vec<IdModel>,
    /// Also fit mean time against α alone.
    #[arg(long)]
    pub alpha_fit: bool,
    /// Run the breakpoint sweep.
    #[arg(long)]
    pub two_part: bool,
    /// ID model for the breakpoint sweep.
    #[arg(long, default_value = "ang")]
    pub model: IdModel,
    #[arg(long, default_value_t = 3)]
    pub min_side: usize,
    /// Regress the left pool on α instead of ID.
    #[arg(long)]
    pub alpha_left: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: DatasetIn,
    /// Validate a plan file.
    #[arg(long, conflicts_with_all = ["trials", "samples", "bundle"])]
    pub plan: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `analysis.json` written by `analyze`.
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Parses `lo:hi:step` ranges (inclusive) and plain numbers separated by commas.
pub fn parse_values(spec: &str) -> anyhow::Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [v] => out.push(
                v.parse::<f64>()
                    .with_context(|| format!("bad number `{v}`"))?,
            ),
            [lo, hi, step] => {
                let (lo, hi, step): (f64, f64, f64) = (
                    lo.parse()
                        .with_context(|| format!("bad range start in `{item}`"))?,
                    hi.parse()
                        .with_context(|| format!("bad range end in `{item}`"))?,
                    step.parse()
                        .with_context(|| format!("bad range step in `{item}`"))?,
                );
                if !(step > 0.0 && hi >= lo) {
                    bail!("range `{item}` needs a positive step and end >= start");
                }
                let n = ((hi - lo) / step + 1e-9).floor() as usize;
                out.extend((0..=n).map(|i| lo + i as f64 * step));
            }
            _ => bail!("cannot parse `{item}`; use numbers or lo:hi:step"),
        }
    }
    if out.is_empty() {
        bail!("empty value list `{spec}`");
    }
    Ok(out)
}

fn read_values_file(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let body: Vec<&str> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .collect();
    let joined = body.join(",").replace(char::is_whitespace, ",");
    parse_values(&joined).with_context(|| format!("in {}", path.display()))
}

fn check_input(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}

fn check_output(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            bail!("output directory {} does not exist", dir.display())
        }
        _ => Ok(()),
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn cmd_plan(args: PlanArgs) -> anyhow::Result<()> {
    check_output(&args.out)?;
    let alphas = parse_values(&args.alphas).context("--alphas")?;
    let omegas = match (&args.omegas, &args.omegas_file) {
        (Some(s), _) => parse_values(s).context("--omegas")?,
        (None, Some(p)) => {
            check_input(p)?;
            read_values_file(p)?
        }
        (None, None) => bail!("one of --omegas or --omegas-file is required"),
    };
    let rule = match args.alpha_rule {
        Some(AlphaRuleArg::AtLeastHalf) => AlphaRule::AtLeastHalfOmega,
        Some(AlphaRuleArg::ExceedsHalf) => AlphaRule::ExceedsHalfOmega,
        None if args.method == MethodArg::Hemi => AlphaRule::ExceedsHalfOmega,
        None => AlphaRule::AtLeastHalfOmega,
    };
    let conditions = valid_pairs(
        &alphas,
        &omegas,
        &Admissibility {
            alpha_rule: rule,
            grid: None,
        },
    );
    let excluded = alphas.len() * omegas.len() - conditions.len();
    if conditions.is_empty() {
        bail!("no (alpha, omega) combination satisfies the alpha rule");
    }

    let plan = match args.method {
        MethodArg::Iso => {
            let cfg = IsoPlanConfig {
                reps: args.reps,
                n_targets: args.targets,
                view_distance_m: args.view_distance,
                warmup_sets: args.warmup,
            };
            gen_iso_plan(&conditions, &cfg, args.seed)?
        }
        MethodArg::Hemi => {
            let placement = PlacementConfig {
                fov_h_deg: args.fov_h,
                fov_v_deg: args.fov_v,
                fov_fit: match args.fov_fit {
                    FovFitArg::Centers => FovFit::CentersOnly,
                    FovFitArg::Disk => FovFit::TargetDiskInside,
                },
                ..PlacementConfig::default()
            };
            let slots = place_hemigrid(args.grid_spacing, args.fov_h, args.fov_v);
            let infeasible: Vec<_> = conditions
                .iter()
                .filter(|c| admissible_pairs(&slots, **c, &placement).is_empty())
                .collect();
            if !infeasible.is_empty() {
                for c in &infeasible {
                    eprintln!(
                        "infeasible: alpha={} omega={}: no slot pair on a {}-degree grid fits a {}x{} field of view",
                        c.alpha_deg(),
                        c.omega_deg(),
                        args.grid_spacing,
                        args.fov_h,
                        args.fov_v
                    );
                }
                bail!("{} infeasible condition(s)", infeasible.len());
            }
            let cfg = HemiPlanConfig {
                sessions: args.sessions,
                trials_per_session: args.per_session,
                grid_spacing_deg: args.grid_spacing,
                placement,
                enforce_balance: !args.allow_unbalanced,
                warmup_trials: args.warmup,
            };
            gen_hemi_plan(&conditions, &cfg, args.seed)?
        }
    };
    io::write_plan(&args.out, &plan)?;
    println!(
        "{} conditions ({} combinations excluded by the alpha rule), {} sets, {} trials -> {}",
        conditions.len(),
        excluded,
        plan.measured_sets().count(),
        plan.trial_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    check_input(&args.plan)?;
    if let Some(p) = &args.params {
        check_input(p)?;
    }
    for p in [
        &args.output.trials_out,
        &args.output.samples_out,
        &args.output.bundle_out,
    ]
    .into_iter()
    .flatten()
    {
        check_output(p)?;
    }
    if args.participants == 0 {
        bail!("--participants must be at least 1");
    }
    let plan = io::read_plan(&args.plan)?;
    let mut params = match &args.params {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => MotorParams::default(),
    };
    if let Some(v) = args.a {
        params.a_s = v;
    }
    if let Some(v) = args.b {
        params.b_s_per_id = v;
    }
    if let Some(v) = args.model {
        params.id_model = v;
    }
    if let Some(v) = args.noise_sd {
        params.noise_sd_s = v;
    }
    if let Some(v) = args.sample_rate {
        params.sample_rate_hz = v;
    }
    if let Some(v) = args.max_corrections {
        params.max_corrections = v;
    }
    let mode = match args.mode {
        ModeArg::Parametric => SimMode::Parametric,
        ModeArg::Motor => SimMode::Motor,
    };
    let out = simulate_cohort(&plan, &params, mode, args.participants, args.seed)?;
    match (
        &args.output.trials_out,
        &args.output.samples_out,
        &args.output.bundle_out,
    ) {
        (_, _, Some(b)) => {
            let f =
                std::fs::File::create(b).with_context(|| format!("creating {}", b.display()))?;
            io::write_bundle(std::io::BufWriter::new(f), &out.trials)?;
        }
        (Some(t), Some(s), None) => io::write_trial_files(t, s, &out.trials)?,
        _ => bail!("give --trials-out and --samples-out, or --bundle-out"),
    }
    println!(
        "{} trials, {} failed, {} resampled durations",
        out.trials.len(),
        out.failed,
        out.resampled
    );
    Ok(())
}

fn load_dataset(input: &DatasetIn) -> anyhow::Result<Vec<Trial>> {
    match (&input.trials, &input.samples, &input.bundle) {
        (_, _, Some(b)) => {
            check_input(b)?;
            Ok(io::read_bundle_file(b)?)
        }
        (Some(t), Some(s), None) => {
            check_input(t)?;
            check_input(s)?;
            Ok(io::load_trial_files(t, s)?)
        }
        _ => Err(anyhow!("give --trials and --samples, or --bundle")),
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> anyhow::Result<()> {
    if !(args.outlier_k.is_finite() && args.outlier_k >= 0.0) {
        bail!("--outlier-k must be a nonnegative number");
    }
    let trials = load_dataset(&args.input)?;
    let total = trials.len();
    let (ok, failed): (Vec<Trial>, Vec<Trial>) = trials.into_iter().partition(|t| t.success);
    if ok.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no successful trials to analyze ({total} trials loaded)"
        ))
        .into());
    }
    let grouping = match args.outlier_grouping {
        GroupingArg::PerCondition => OutlierGrouping::PerCondition,
        GroupingArg::Global => OutlierGrouping::Global,
    };
    let split = if args.outlier_k > 0.0 {
        remove_outliers(ok, args.outlier_k, grouping)
    } else {
        crate::analysis::OutlierSplit {
            kept: ok,
            removed: Vec::new(),
        }
    };
    let weighting = match args.weighting {
        WeightingArg::Pooled => Weighting::Pooled,
        WeightingArg::PerParticipant => Weighting::PerParticipant,
    };
    let kept = split.kept;
    let means = grand_average(&kept, weighting);
    println!(
        "{total} trials: {} failed, {} outliers removed, {} kept, {} condition means",
        failed.len(),
        split.removed.len(),
        kept.len(),
        means.len()
    );

    let mut fits = Vec::new();
    for m in &args.models {
        let fit = fit_one_part(&means, *m).with_context(|| format!("one-part fit under {m}"))?;
        fits.push(NamedFit {
            predictor: Predictor::Id(*m),
            fit,
        });
    }
    if args.alpha_fit {
        let fit = alpha_only_fit(&means).context("alpha-only fit")?;
        fits.push(NamedFit {
            predictor: Predictor::Alpha,
            fit,
        });
    }
    fits.sort_by(|x, y| y.fit.r2.total_cmp(&x.fit.r2));
    for f in &fits {
        println!(
            "fit {:<10} R2 = {:6.2}%  a = {:.4} s  b = {:.4}  n = {}{}",
            f.predictor.name(),
            100.0 * f.fit.r2,
            f.fit.a,
            f.fit.b,
            f.fit.n,
            if f.fit.a < 0.0 {
                "  (nonphysical intercept)"
            } else {
                ""
            }
        );
    }

    let sweep = if args.two_part {
        let left = if args.alpha_left {
            LeftPredictor::Alpha
        } else {
            LeftPredictor::Id
        };
        let rows = breakpoint_sweep_with(&means, args.model, args.min_side, left)
            .with_context(|| format!("breakpoint sweep under {}", args.model))?;
        if let Some(best) = crate::regression::best_row(&rows) {
            println!(
                "two-part {}: {} rows, best {} at {:.4} (left R2 {:.2}%, right R2 {:.2}%)",
                args.model,
                rows.len(),
                best.label(),
                best.breakpoint_id,
                100.0 * best.left.r2,
                100.0 * best.right.r2
            );
        }
        Some(SweepResult {
            model: args.model,
            rows,
        })
    } else {
        None
    };

    let sampled: Vec<Trial> = kept
        .iter()
        .filter(|t| t.samples.len() >= MIN_PROFILE_SAMPLES)
        .cloned()
        .collect();
    let velocity = if sampled.is_empty() {
        eprintln!("note: no trials with ray samples; velocity profiles skipped");
        Vec::new()
    } else {
        velocity_profiles(&sampled).context("velocity profiles")?
    };
    let hitpoints = hitpoint_stats(&kept).context("hitpoint statistics")?;
    let hitpoint_effects = if distinct_conditions(&kept).len() >= 3 {
        match hitpoint_fixed_effect_fit(&kept) {
            Ok(e) => Some(e),
            Err(e) => {
                eprintln!("note: hitpoint fixed-effect fit skipped: {e}");
                None
            }
        }
    } else {
        None
    };

    let cache = AnalysisCache {
        kept_trials: kept.len(),
        removed_outliers: split.removed.len(),
        failed_trials: failed.len(),
        means,
        fits,
        sweep,
        velocity,
        hitpoints,
        hitpoint_effects,
    };
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    io::write_cache(&args.out_dir.join("analysis.json"), &cache)?;
    let written = io::write_report_dir(&args.out_dir, &cache)?;
    println!(
        "wrote analysis.json and {} report files to {}",
        written.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> anyhow::Result<()> {
    if let Some(p) = &args.plan {
        check_input(p)?;
        let plan = io::read_plan(p)?;
        println!(
            "plan ok: {} sessions, {} sets, {} trials, {} conditions",
            plan.sessions.len(),
            plan.set_count(),
            plan.trial_count(),
            plan.conditions().len()
        );
        return Ok(());
    }
    let trials = load_dataset(&args.input)?;
    let samples: usize = trials.iter().map(|t| t.samples.len()).sum();
    let mut participants: Vec<&str> = trials.iter().map(|t| t.participant_id.as_str()).collect();
    participants.dedup();
    println!(
        "dataset ok: {} trials, {} samples, {} participants, {} conditions",
        trials.len(),
        samples,
        participants.len(),
        distinct_conditions(&trials).len()
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    check_input(&args.cache)?;
    let cache = io::read_cache(&args.cache)?;
    let written = io::write_report_dir(&args.out_dir, &cache)?;
    println!(
        "wrote {} report files to {}",
        written.len(),
        args.out_dir.display()
    );
    Ok(())
}
