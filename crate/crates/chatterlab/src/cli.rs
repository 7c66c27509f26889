//! Command-line front end: every analysis in the library behind one binary,
//! emitting trajectory CSVs, JSON reports, and SVG plots into an output
//! directory. Exit codes: `0` success, `2` validation failure, `3`
//! numerical non-convergence. All artifacts are deterministic — repeated
//! runs of the same command produce byte-identical CSV/JSON.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::approx::{
    contraction_rate, heuristic_iterate, iterate_approx, throughput_l, RateConstants,
    ThroughputReport,
};
use crate::ctmc::{
    noise_ignition_params, oscillation_detector, recovering_state, simulate_ctmc,
    simulate_ctmc_rep, stochastic_oscillation_params, write_ctmc_csv, CtmcParams, CtmcState,
};
use crate::equilibrium::{certify_endless, iterate_periodic, ClassificationResult, Verdict};
use crate::fluid::{simulate, FluidError, Trajectory};
use crate::model::{state_from_triple, validate_params, ModelError, ModelParams, StateVector};
use crate::numerics::format_g9;
use crate::report::{to_json_string, ComparisonReport};
use crate::svg::{delta_time_plot, phase_portrait, queues_time_plot, sharing_time_plot, LinePlot};

/// Exit code for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code for configuration or validation failures.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for numerical non-convergence.
pub const EXIT_NO_CONVERGENCE: i32 = 3;

/// Parse the process arguments, run the selected command, and return the
/// process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                FluidError::Numerics(_) => EXIT_NO_CONVERGENCE,
                _ => EXIT_VALIDATION,
            }
        }
    }
}

#[derive(Parser)]
#[command(
    name = "chatterlab",
    version,
    about = "Threshold-routed overload dynamics: exact switching trajectories, cycle-map fixed points, oscillation certificates, throughput collapse checks, and a seeded stochastic simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the deterministic switching model and export the sampled path
    Fluid(FluidArgs),
    /// Iterate the half-cycle return map to find a periodic oscillation
    Periodic(PeriodicArgs),
    /// Iterate the one-dimensional jump-system cycle map and certify its rate
    Approx(ApproxArgs),
    /// Iterate the exponential-factor shortcut map
    Heuristic(HeuristicArgs),
    /// Build a worst-case endless-oscillation certificate for a gap box
    Certify(CertifyArgs),
    /// Simulate the finite stochastic system and export fluid-scaled paths
    Ctmc(CtmcArgs),
    /// Compute long-run throughput over the oscillation and the collapse verdict
    Collapse(CollapseArgs),
    /// Regenerate a preconfigured reference artifact set
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Trajectory CSV only
    Csv,
    /// Trajectory as a JSON document
    Json,
    /// Trajectory CSV plus SVG plots
    Svg,
}

#[derive(Args)]
struct CommonArgs {
    /// Model parameters as a JSON file (defaults to the built-in reference
    /// overload example)
    #[arg(long, value_name = "FILE.json")]
    params: Option<PathBuf>,
    /// Output directory for emitted artifacts
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Output format for trajectory artifacts
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct FluidArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Initial state as a JSON file (defaults to the reference start)
    #[arg(long, value_name = "FILE.json")]
    initial: Option<PathBuf>,
    /// Simulation horizon
    #[arg(long, default_value_t = 200.0)]
    horizon: f64,
    /// Sampling step
    #[arg(long, default_value_t = 0.05)]
    sample_dt: f64,
}

#[derive(Args)]
struct PeriodicArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Initial state as a JSON file (defaults to the reference start)
    #[arg(long, value_name = "FILE.json")]
    initial: Option<PathBuf>,
    /// Fixed-point tolerance on the cycle-start coordinates
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Half-cycle iteration budget
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
}

#[derive(Args)]
struct ApproxArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Starting queue-difference gap
    #[arg(long, default_value_t = 5.0)]
    delta0: f64,
    /// Fixed-point tolerance
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Iteration budget
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    /// Interval margin for the contraction-rate certificate
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
}

#[derive(Args)]
struct HeuristicArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Starting queue-difference gap
    #[arg(long, default_value_t = 5.0)]
    delta0: f64,
    /// Iteration budget
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Lower end of the certified gap box
    #[arg(long, default_value_t = 4.0)]
    delta_lower: f64,
    /// Upper end of the certified gap box
    #[arg(long, default_value_t = 7.0)]
    delta_upper: f64,
    /// Queue floor of the certified box
    #[arg(long, default_value_t = 1.0)]
    q1_lower: f64,
}

#[derive(Args)]
struct CtmcArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Initial head-count state as a JSON file (defaults to empty)
    #[arg(long, value_name = "FILE.json")]
    initial: Option<PathBuf>,
    /// System scale used when `--params` holds fluid parameters (or is absent)
    #[arg(long, default_value_t = 100)]
    n: u32,
    /// Simulation horizon
    #[arg(long, default_value_t = 200.0)]
    horizon: f64,
    /// Sampling step
    #[arg(long, default_value_t = 0.25)]
    sample_dt: f64,
    /// Base seed; replication `r` runs on stream `(seed, r)`
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of replications
    #[arg(long, default_value_t = 1)]
    reps: usize,
}

#[derive(Args)]
struct CollapseArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Starting queue-difference gap for the factor iteration
    #[arg(long, default_value_t = 5.0)]
    delta0: f64,
    /// Iteration budget
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    /// Fixed-point comparison table for both cycle maps
    #[value(name = "table1")]
    Table1,
    /// Sustained-oscillation trajectory artifact set (no abandonment)
    #[value(name = "fig3_6")]
    Fig3_6,
    /// Dying-oscillation artifact set (fast sharing rate)
    #[value(name = "fig7_8")]
    Fig7_8,
    /// Oscillation-with-abandonment artifact set
    #[value(name = "fig9_10")]
    Fig9_10,
    /// Stochastic-experiment artifact set (noise ignition and
    /// stochastic-only oscillation)
    #[value(name = "sec7_4")]
    Sec7_4,
    /// Worst-case certificate artifact set with random-start validation
    #[value(name = "appendixA_example")]
    AppendixAExample,
}

impl Target {
    fn dir_name(self) -> &'static str {
        match self {
            Target::Table1 => "table1",
            Target::Fig3_6 => "fig3_6",
            Target::Fig7_8 => "fig7_8",
            Target::Fig9_10 => "fig9_10",
            Target::Sec7_4 => "sec7_4",
            Target::AppendixAExample => "appendixA_example",
        }
    }
}

#[derive(Args)]
struct ReproduceArgs {
    /// Artifact set to regenerate
    #[arg(value_enum)]
    target: Target,
    /// Output directory; artifacts land in a subdirectory named after the target
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

fn dispatch(command: &Command) -> Result<i32, FluidError> {
    match command {
        Command::Fluid(a) => cmd_fluid(a),
        Command::Periodic(a) => cmd_periodic(a),
        Command::Approx(a) => cmd_approx(a),
        Command::Heuristic(a) => cmd_heuristic(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Ctmc(a) => cmd_ctmc(a),
        Command::Collapse(a) => cmd_collapse(a),
        Command::Reproduce(a) => cmd_reproduce(a),
    }
}

// ---------------------------------------------------------------------------
// Configuration loading
// ---------------------------------------------------------------------------

/// The built-in reference overload example: near-critical load, slow
/// sharing, no abandonment.
fn reference_params() -> ModelParams {
    ModelParams::new(0.98, 0.1, 0.0, 0.1, 0.01).expect("reference parameters are valid")
}

/// The reference example with slow abandonment (used by the certificate
/// machinery, which needs `θ > 0`).
fn reference_params_abandonment() -> ModelParams {
    ModelParams::new(0.98, 0.1, 0.01, 0.1, 0.01).expect("reference parameters are valid")
}

/// The reference start: a small gap above the activation threshold with
/// stale reverse sharing at the release threshold.
fn reference_start(p: &ModelParams) -> StateVector {
    state_from_triple(1.0, 1.2, 0.005, p)
}

fn parse_json_file<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, FluidError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        ModelError::InvalidParams(format!("cannot parse {} from {}: {e}", what, path.display()))
            .into()
    })
}

fn load_model_params(path: &Option<PathBuf>, default: ModelParams) -> Result<ModelParams, FluidError> {
    let p = match path {
        Some(f) => parse_json_file::<ModelParams>(f, "model parameters")?,
        None => default,
    };
    let report = validate_params(&p, false);
    if !report.is_valid() {
        return Err(ModelError::InvalidParams(report.errors.join("; ")).into());
    }
    Ok(p)
}

fn load_state(path: &Option<PathBuf>, default: StateVector) -> Result<StateVector, FluidError> {
    let x = match path {
        Some(f) => parse_json_file::<StateVector>(f, "initial state")?,
        None => default,
    };
    x.well_formed()?;
    Ok(x)
}

/// Load stochastic-system parameters: a file holding either full
/// head-count parameters or fluid parameters (scaled by `n`); absent file
/// means the reference example scaled by `n`.
fn load_ctmc_params(path: &Option<PathBuf>, n: u32) -> Result<CtmcParams, FluidError> {
    let p = match path {
        Some(f) => {
            let text = fs::read_to_string(f)?;
            if let Ok(cp) = serde_json::from_str::<CtmcParams>(&text) {
                cp
            } else {
                let mp: ModelParams = serde_json::from_str(&text).map_err(|e| {
                    ModelError::InvalidParams(format!(
                        "cannot parse parameters from {}: {e}",
                        f.display()
                    ))
                })?;
                CtmcParams::from_symmetric(n, &mp)?
            }
        }
        None => CtmcParams::from_symmetric(n, &reference_params())?,
    };
    p.validate()?;
    Ok(p)
}

// ---------------------------------------------------------------------------
// Artifact helpers
// ---------------------------------------------------------------------------

fn save_text(dir: &Path, name: &str, content: &str) -> Result<PathBuf, FluidError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, content)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn save_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, FluidError> {
    save_text(dir, name, &to_json_string(value))
}

fn save_trajectory_csv(dir: &Path, name: &str, traj: &Trajectory) -> Result<PathBuf, FluidError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    traj.write_csv(File::create(&path)?)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn save_ctmc_path_csv(
    dir: &Path,
    name: &str,
    traj: &Trajectory,
    n: u32,
    seed: u64,
) -> Result<PathBuf, FluidError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    write_ctmc_csv(traj, n, seed, File::create(&path)?)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn exit_for(verdict: Verdict) -> i32 {
    if verdict == Verdict::Undetermined {
        EXIT_NO_CONVERGENCE
    } else {
        EXIT_OK
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_fluid(a: &FluidArgs) -> Result<i32, FluidError> {
    let p = load_model_params(&a.common.params, reference_params())?;
    let x0 = load_state(&a.initial, reference_start(&p))?;
    let traj = simulate(&x0, &p, a.horizon, a.sample_dt)?;
    let dir = &a.common.out;
    match a.common.format {
        Format::Csv => {
            save_trajectory_csv(dir, "fluid_trajectory.csv", &traj)?;
        }
        Format::Json => {
            save_json(dir, "fluid_trajectory.json", &traj)?;
        }
        Format::Svg => {
            save_trajectory_csv(dir, "fluid_trajectory.csv", &traj)?;
            save_text(dir, "fluid_delta.svg", &delta_time_plot(&traj, "queue difference"))?;
            save_text(dir, "fluid_phase.svg", &phase_portrait(&traj, "sharing cycle portrait"))?;
            save_text(dir, "fluid_queues.svg", &queues_time_plot(&traj, "queue lengths"))?;
            save_text(dir, "fluid_sharing.svg", &sharing_time_plot(&traj, "shared content"))?;
        }
    }
    let last = traj.samples.last().expect("a trajectory has at least one sample");
    println!(
        "fluid: end t = {}, hint = {:?}, cycles recorded = {}",
        format_g9(last.t),
        traj.hint,
        traj.cycle_records.len()
    );
    Ok(EXIT_OK)
}

fn cmd_periodic(a: &PeriodicArgs) -> Result<i32, FluidError> {
    let p = load_model_params(&a.common.params, reference_params())?;
    let x0 = load_state(&a.initial, reference_start(&p))?;
    let result = iterate_periodic(&x0, &p, a.tol, a.max_iter)?;
    save_json(&a.common.out, "periodic.json", &result)?;
    print_classification("periodic", &result);
    Ok(exit_for(result.verdict))
}

#[derive(Serialize)]
struct ApproxCommandReport {
    classification: ClassificationResult,
    rate_constants: Option<RateConstants>,
    rate_constants_error: Option<String>,
}

fn cmd_approx(a: &ApproxArgs) -> Result<i32, FluidError> {
    let p = load_model_params(&a.common.params, reference_params())?;
    let classification = iterate_approx(a.delta0, &p, a.tol, a.max_iter)?;
    let (rate_constants, rate_constants_error) = match contraction_rate(&p, a.margin) {
        Ok(rc) => (Some(rc), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = ApproxCommandReport { classification, rate_constants, rate_constants_error };
    save_json(&a.common.out, "approx.json", &report)?;
    print_classification("approx", &report.classification);
    if let Some(rc) = &report.rate_constants {
        println!(
            "approx: contraction rho = {} (certified = {})",
            format_g9(rc.rho),
            rc.certified
        );
    }
    Ok(exit_for(report.classification.verdict))
}

fn cmd_heuristic(a: &HeuristicArgs) -> Result<i32, FluidError> {
    let p = load_model_params(&a.common.params, reference_params())?;
    let result = heuristic_iterate(a.delta0, &p, a.max_iter)?;
    save_json(&a.common.out, "heuristic.json", &result)?;
    print_classification("heuristic", &result.classification);
    if let Some(xi) = result.xi_star {
        println!("heuristic: xi* = {}", format_g9(xi));
    }
    Ok(exit_for(result.classification.verdict))
}

fn cmd_certify(a: &CertifyArgs) -> Result<i32, FluidError> {
    let p = load_model_params(&a.common.params, reference_params_abandonment())?;
    let cert = certify_endless(&p, a.delta_lower, a.delta_upper, a.q1_lower)?;
    save_json(&a.common.out, "certificate.json", &cert)?;
    println!(
        "certify: verdict = {}, next-gap interval = [{}, {}], amplitude bound = {}",
        cert.verdict,
        format_g9(cert.delta_next_bounds.0),
        format_g9(cert.delta_next_bounds.1),
        format_g9(cert.a_u_const)
    );
    Ok(EXIT_OK)
}

fn cmd_ctmc(a: &CtmcArgs) -> Result<i32, FluidError> {
    let p = load_ctmc_params(&a.common.params, a.n)?;
    let x0 = match &a.initial {
        Some(f) => parse_json_file::<CtmcState>(f, "initial head-count state")?,
        None => CtmcState::empty(),
    };
    x0.validate(&p)?;
    if a.reps == 0 {
        return Err(ModelError::Precondition("need at least one replication".into()).into());
    }
    let dir = &a.common.out;
    let mut first: Option<Trajectory> = None;
    for rep in 0..a.reps {
        let traj = simulate_ctmc_rep(&x0, &p, a.horizon, a.sample_dt, a.seed, rep as u64)?;
        let name = if a.reps == 1 {
            "ctmc_path.csv".to_string()
        } else {
            format!("ctmc_path_rep{rep}.csv")
        };
        match a.common.format {
            Format::Json => {
                save_json(dir, &name.replace(".csv", ".json"), &traj)?;
            }
            _ => {
                save_ctmc_path_csv(dir, &name, &traj, p.n, a.seed)?;
            }
        }
        if first.is_none() {
            first = Some(traj);
        }
    }
    let traj = first.expect("at least one replication ran");
    if a.common.format == Format::Svg {
        save_text(dir, "ctmc_sharing.svg", &sharing_time_plot(&traj, "shared content (scaled)"))?;
        save_text(dir, "ctmc_queues.svg", &queues_time_plot(&traj, "queue lengths (scaled)"))?;
    }
    println!(
        "ctmc: n = {}, reps = {}, alternations(band 0.3) on rep 0 = {}",
        p.n,
        a.reps,
        oscillation_detector(&traj, 0.3)
    );
    Ok(EXIT_OK)
}

fn cmd_collapse(a: &CollapseArgs) -> Result<i32, FluidError> {
    let p = load_model_params(&a.common.params, reference_params())?;
    let heuristic = heuristic_iterate(a.delta0, &p, a.max_iter)?;
    match heuristic.xi_star {
        Some(xi_star) => {
            let report = throughput_l(xi_star, &p)?;
            save_json(&a.common.out, "collapse.json", &report)?;
            print_throughput(&report);
            Ok(EXIT_OK)
        }
        None => {
            #[derive(Serialize)]
            struct NoCycleReport {
                collapse: bool,
                verdict: Verdict,
                notes: Vec<String>,
            }
            let report = NoCycleReport {
                collapse: false,
                verdict: heuristic.classification.verdict,
                notes: vec![
                    "the cycle map did not converge to a sustained oscillation; throughput is not cycle-limited".to_string(),
                ],
            };
            save_json(&a.common.out, "collapse.json", &report)?;
            println!("collapse: no sustained oscillation ({})", report.verdict);
            Ok(exit_for(heuristic.classification.verdict))
        }
    }
}

fn print_classification(tag: &str, r: &ClassificationResult) {
    match &r.periodic {
        Some(pe) => println!(
            "{tag}: verdict = {}, gap* = {}, shared* = {}, T1 = {}, T2 = {} ({} iterations)",
            r.verdict,
            format_g9(pe.delta_star),
            format_g9(pe.z21_star),
            format_g9(pe.t_star[0]),
            format_g9(pe.t_star[1]),
            r.iterations_used
        ),
        None => println!(
            "{tag}: verdict = {} after {} iterations (stop: {:?})",
            r.verdict, r.iterations_used, r.stop_reason
        ),
    }
}

fn print_throughput(t: &ThroughputReport) {
    println!(
        "collapse: verdict = {}, L(oracle) = {}, L(closed form) = {}, L(variant) = {}{}",
        t.collapse,
        format_g9(t.l_oracle),
        format_g9(t.l_closed_form),
        format_g9(t.l_closed_form_variant),
        match t.l_reference {
            Some(r) => format!(", L(reference) = {}", format_g9(r)),
            None => String::new(),
        }
    );
    println!(
        "collapse: queue growth per cycle = {} over cycle length {}",
        format_g9(t.queue_growth_per_cycle),
        format_g9(t.cycle_length)
    );
}

// ---------------------------------------------------------------------------
// Reproduction targets
// ---------------------------------------------------------------------------

fn cmd_reproduce(a: &ReproduceArgs) -> Result<i32, FluidError> {
    let dir = a.out.join(a.target.dir_name());
    match a.target {
        Target::Table1 => reproduce_table1(&dir),
        Target::Fig3_6 => reproduce_fig3_6(&dir),
        Target::Fig7_8 => reproduce_fig7_8(&dir),
        Target::Fig9_10 => reproduce_fig9_10(&dir),
        Target::Sec7_4 => reproduce_sec7_4(&dir),
        Target::AppendixAExample => reproduce_appendix_a(&dir),
    }
}

/// Comparison of both cycle-map fixed points against the reported reference
/// table.
fn reproduce_table1(dir: &Path) -> Result<i32, FluidError> {
    let p = reference_params();
    let approx = iterate_approx(5.0, &p, 1e-12, 300)?;
    let pa = approx
        .periodic
        .ok_or_else(|| ModelError::Precondition("jump-system map did not converge".into()))?;
    let fluid = iterate_periodic(&reference_start(&p), &p, 1e-10, 300)?;
    let pf = fluid
        .periodic
        .ok_or_else(|| ModelError::Precondition("switching-model map did not converge".into()))?;

    let mut report = ComparisonReport::new("cycle-map fixed points vs reported reference values");
    report.row("jump approximation: gap fixed point", pa.delta_star, 8.802, 0.001);
    report.row("jump approximation: shared content at release", pa.z21_star, 0.9992, 0.0005);
    report.row("jump approximation: activation interval", pa.t_star[0], 7.093, 0.001);
    report.row("jump approximation: release interval", pa.t_star[1], 46.044, 0.001);
    report.row_noted(
        "switching model: gap fixed point",
        pf.delta_star,
        8.663,
        0.005,
        "computed by two independent methods (closed-form half-cycle map and high-order \
         event-detecting integration, agreeing to ~1e-13); the reference row's own shared-content \
         and release-interval entries are consistent with the computed value, not with the \
         reference gap",
    );
    report.row("switching model: shared content at release", pf.z21_star, 0.9992, 0.005);
    report.row_noted(
        "switching model: activation interval",
        pf.t_star[0],
        7.270,
        0.005,
        "the shared content implied by the reference interval (0.9993) contradicts the reference \
         table's own shared-content entry (0.9992), which matches the computed interval instead",
    );
    report.row("switching model: release interval", pf.t_star[1], 46.044, 0.005);
    report.note(
        "reference start: queues 1 and 1.2, so the starting gap is 0.2 (the reference text \
         quotes 0.1 for the same queue levels; both readings recorded)",
    );
    save_json(dir, "report.json", &report)?;
    save_text(dir, "table1.csv", &report.to_csv_string())?;
    println!(
        "table1: jump gap* = {}, switching gap* = {}, all rows within tolerance = {}",
        format_g9(pa.delta_star),
        format_g9(pf.delta_star),
        report.all_within
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct CycleStartRow {
    time: f64,
    q1: f64,
    q2: f64,
    gap: f64,
}

#[derive(Serialize)]
struct TrajectorySummary {
    hint: String,
    final_time: f64,
    cycles_recorded: usize,
    cycle_starts: Vec<CycleStartRow>,
    /// Consecutive cycle-start transitions at the end of the run over which
    /// the smaller queue strictly increases. Early transient cycles may dip
    /// while the oscillation spirals out; sustained growth shows up here.
    growing_tail_transitions: usize,
    /// Whether the smaller queue grew strictly over at least the last five
    /// cycle-start transitions.
    sustained_queue_growth: bool,
    notes: Vec<String>,
}

fn summarize_cycles(traj: &Trajectory, notes: Vec<String>) -> TrajectorySummary {
    let cycle_starts: Vec<CycleStartRow> = traj
        .cycle_records
        .iter()
        .filter_map(|c| {
            c.states_at_switch.first().map(|s| CycleStartRow {
                time: c.start_time,
                q1: s.q1,
                q2: s.q2,
                gap: s.q2 - s.q1,
            })
        })
        .collect();
    let mut growing_tail_transitions = 0;
    for w in cycle_starts.windows(2).rev() {
        if w[1].q1.min(w[1].q2) > w[0].q1.min(w[0].q2) {
            growing_tail_transitions += 1;
        } else {
            break;
        }
    }
    TrajectorySummary {
        hint: format!("{:?}", traj.hint),
        final_time: traj.samples.last().map(|s| s.t).unwrap_or(0.0),
        cycles_recorded: traj.cycle_records.len(),
        cycle_starts,
        growing_tail_transitions,
        sustained_queue_growth: growing_tail_transitions >= 5,
        notes,
    }
}

/// Sustained oscillation without abandonment: full trajectory, gap and
/// phase plots, and the cycle-start queue growth that signals collapse.
fn reproduce_fig3_6(dir: &Path) -> Result<i32, FluidError> {
    let p = reference_params();
    let x0 = reference_start(&p);
    let traj = simulate(&x0, &p, 1065.0, 0.05)?;
    save_trajectory_csv(dir, "trajectory.csv", &traj)?;
    save_text(dir, "delta.svg", &delta_time_plot(&traj, "queue difference"))?;
    save_text(dir, "phase.svg", &phase_portrait(&traj, "sharing cycle portrait"))?;
    save_text(dir, "queues.svg", &queues_time_plot(&traj, "queue lengths"))?;
    save_text(dir, "sharing.svg", &sharing_time_plot(&traj, "shared content"))?;
    let summary = summarize_cycles(
        &traj,
        vec![
            "queue levels at successive cycle starts grow without bound: the oscillation wastes \
             capacity on inefficient sharing even though the offered load is below capacity"
                .to_string(),
        ],
    );
    save_json(dir, "report.json", &summary)?;
    println!(
        "fig3_6: {} cycles recorded, sustained queue growth = {} ({} growing transitions)",
        summary.cycles_recorded, summary.sustained_queue_growth, summary.growing_tail_transitions
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ClassifiedTrajectoryReport {
    classification: ClassificationResult,
    trajectory: TrajectorySummary,
}

/// Dying oscillation at a fast sharing rate: the gap sequence shrinks until
/// the restart fails and the path relaxes toward the rest point.
fn reproduce_fig7_8(dir: &Path) -> Result<i32, FluidError> {
    let p = ModelParams::new(0.98, 0.3, 0.0, 0.1, 0.01)
        .map_err(FluidError::from)?;
    let x0 = state_from_triple(1.0, 21.0, 0.005, &p);
    let traj = simulate(&x0, &p, 160.0, 0.05)?;
    save_trajectory_csv(dir, "trajectory.csv", &traj)?;
    save_text(dir, "delta.svg", &delta_time_plot(&traj, "queue difference"))?;
    save_text(dir, "phase.svg", &phase_portrait(&traj, "inward cycle portrait"))?;
    let classification = iterate_periodic(&x0, &p, 1e-10, 100)?;
    let report = ClassifiedTrajectoryReport {
        classification,
        trajectory: summarize_cycles(
            &traj,
            vec![
                "oscillation ceases when the restart gap falls below the activation threshold; \
                 the path then relaxes toward the no-sharing rest point"
                    .to_string(),
            ],
        ),
    };
    save_json(dir, "report.json", &report)?;
    println!(
        "fig7_8: verdict = {}, trajectory hint = {}",
        report.classification.verdict, report.trajectory.hint
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct AbandonmentReport {
    box_start_classification: ClassificationResult,
    box_start_trajectory: TrajectorySummary,
    reference_start_trajectory: TrajectorySummary,
}

/// Oscillation with abandonment: the reference start honestly empties a
/// queue mid-cycle, while a start inside the certified box spirals outward
/// to the periodic oscillation.
fn reproduce_fig9_10(dir: &Path) -> Result<i32, FluidError> {
    let p = reference_params_abandonment();

    let x_ref = reference_start(&p);
    let traj_ref = simulate(&x_ref, &p, 1065.0, 0.05)?;
    save_trajectory_csv(dir, "trajectory_reference_start.csv", &traj_ref)?;
    save_text(
        dir,
        "delta_reference_start.svg",
        &delta_time_plot(&traj_ref, "queue difference (reference start)"),
    )?;

    let x_box = state_from_triple(4.0, 8.0, 0.005, &p);
    let traj_box = simulate(&x_box, &p, 1065.0, 0.05)?;
    save_trajectory_csv(dir, "trajectory_box_start.csv", &traj_box)?;
    save_text(dir, "delta.svg", &delta_time_plot(&traj_box, "queue difference (box start)"))?;
    save_text(dir, "phase.svg", &phase_portrait(&traj_box, "outward cycle portrait"))?;

    let classification = iterate_periodic(&x_box, &p, 1e-10, 300)?;
    let report = AbandonmentReport {
        box_start_classification: classification,
        box_start_trajectory: summarize_cycles(
            &traj_box,
            vec!["starts inside the certified gap box spiral outward to the periodic oscillation"
                .to_string()],
        ),
        reference_start_trajectory: summarize_cycles(
            &traj_ref,
            vec![
                "from the reference start the growing oscillation empties a queue during the \
                 fourth full cycle; the cycle analysis stops there and the path relaxes"
                    .to_string(),
            ],
        ),
    };
    save_json(dir, "report.json", &report)?;
    println!(
        "fig9_10: box-start verdict = {}, reference-start hint = {}",
        report.box_start_classification.verdict, report.reference_start_trajectory.hint
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct IgnitionSummary {
    seeds: usize,
    horizon: f64,
    band: f64,
    minimum_alternations: usize,
    ignited: usize,
    fraction: f64,
    alternation_counts: Vec<usize>,
}

#[derive(Serialize)]
struct StochasticExperimentsReport {
    ignition: IgnitionSummary,
    exp1_path_alternations: usize,
    exp2_alternations: usize,
    exp2_max_queue: f64,
    exp2_average_queue: f64,
    fluid_companion_alternations: usize,
    fluid_companion_hint: String,
    notes: Vec<String>,
}

/// Two seeded stochastic experiments: noise igniting sharing from the empty
/// state, and sustained stochastic oscillation at service-grade rates whose
/// deterministic limit cannot oscillate.
fn reproduce_sec7_4(dir: &Path) -> Result<i32, FluidError> {
    // Experiment 1: noise ignition from the empty state.
    let p1 = noise_ignition_params();
    let empty = CtmcState::empty();
    let path1 = simulate_ctmc(&empty, &p1, 1500.0, 0.25, 1)?;
    save_ctmc_path_csv(dir, "exp1_path.csv", &path1, p1.n, 1)?;
    let q1_pts: Vec<(f64, f64)> = path1.samples.iter().map(|s| (s.t, s.state.q1)).collect();
    save_text(
        dir,
        "exp1_queue1.svg",
        &LinePlot::new("class-1 queue (scaled), noisy ignition", "t", "queue length")
            .series("q1", &q1_pts)
            .render(),
    )?;
    save_text(dir, "exp1_sharing.svg", &sharing_time_plot(&path1, "shared content (scaled)"))?;

    let band = 0.3;
    let mut alternation_counts = Vec::with_capacity(50);
    for seed in 0..50u64 {
        let t = simulate_ctmc(&empty, &p1, 400.0, 0.25, seed)?;
        alternation_counts.push(oscillation_detector(&t, band));
    }
    let ignited = alternation_counts.iter().filter(|&&c| c >= 3).count();
    let ignition = IgnitionSummary {
        seeds: alternation_counts.len(),
        horizon: 400.0,
        band,
        minimum_alternations: 3,
        ignited,
        fraction: ignited as f64 / alternation_counts.len() as f64,
        alternation_counts,
    };

    // Experiment 2: stochastic-only oscillation at service-grade rates.
    let p2 = stochastic_oscillation_params();
    let x2 = recovering_state(&p2, 20);
    let path2 = simulate_ctmc(&x2, &p2, 1500.0, 0.5, 5)?;
    save_ctmc_path_csv(dir, "exp2_path.csv", &path2, p2.n, 5)?;
    save_text(dir, "exp2_sharing.svg", &sharing_time_plot(&path2, "shared content (scaled)"))?;
    let exp2_alternations = oscillation_detector(&path2, 0.1);
    let exp2_max_queue = path2
        .samples
        .iter()
        .fold(0.0f64, |m, s| m.max(s.state.q1.max(s.state.q2)));
    let exp2_average_queue = path2
        .samples
        .iter()
        .map(|s| s.state.q1.max(s.state.q2))
        .sum::<f64>()
        / path2.samples.len() as f64;

    // Deterministic companion for experiment 2: even an extreme one-sided
    // overload produces a single sharing episode, no oscillation.
    let pf = ModelParams::new(0.98, 0.5, 0.5, 0.1, 0.01).map_err(FluidError::from)?;
    let xf = StateVector { q1: 1.0, q2: 1000.0, z11: 1.0, z12: 0.01, z21: 0.0, z22: 0.99 };
    let fluid_companion = simulate(&xf, &pf, 100.0, 0.05)?;
    save_trajectory_csv(dir, "exp2_fluid.csv", &fluid_companion)?;
    save_text(
        dir,
        "exp2_fluid_sharing.svg",
        &sharing_time_plot(&fluid_companion, "shared content, deterministic model"),
    )?;

    let report = StochasticExperimentsReport {
        ignition,
        exp1_path_alternations: oscillation_detector(&path1, band),
        exp2_alternations,
        exp2_max_queue,
        exp2_average_queue,
        fluid_companion_alternations: oscillation_detector(&fluid_companion, 0.1),
        fluid_companion_hint: format!("{:?}", fluid_companion.hint),
        notes: vec![
            "experiment 1: the deterministic model started empty parks at the no-sharing rest \
             point forever; sample-path noise ignites sharing and large scaled oscillations"
                .to_string(),
            "experiment 2: at service-grade sharing and abandonment rates the deterministic \
             model cannot sustain oscillation, yet the stochastic paths alternate shared \
             customers for the whole run while abandonment keeps the queues too small to \
             betray it"
                .to_string(),
            "deterministic companion: even from an extreme one-sided overload the model \
             performs a single sharing episode — abandonment collapses the backlog, a queue \
             empties in finite time, and no alternation ever occurs"
                .to_string(),
        ],
    };
    save_json(dir, "report.json", &report)?;
    println!(
        "sec7_4: ignition fraction = {}, exp2 alternations = {}, fluid companion alternations = {}",
        format_g9(report.ignition.fraction),
        report.exp2_alternations,
        report.fluid_companion_alternations
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct RandomStartRow {
    delta0: f64,
    q1: f64,
    z21: f64,
    verdict: Verdict,
    delta_star: Option<f64>,
    iterations: usize,
}

#[derive(Serialize)]
struct CertificateReport {
    comparison: ComparisonReport,
    random_starts: Vec<RandomStartRow>,
    all_random_starts_oscillatory: bool,
}

/// Worst-case oscillation certificate for the reference gap box, with its
/// headline constants compared against the reported reference values and
/// ten random starts inside the box classified by direct iteration.
fn reproduce_appendix_a(dir: &Path) -> Result<i32, FluidError> {
    let p = reference_params_abandonment();
    let cert = certify_endless(&p, 4.0, 7.0, 1.0)?;
    save_json(dir, "certificate.json", &cert)?;

    let mut comparison = ComparisonReport::new("certificate constants vs reported reference values");
    comparison.row("parameter-only amplitude bound", cert.a_u_const, -0.891, 0.01);
    comparison.row_at_least("coarse next-gap lower estimate", cert.delta_l_estimate, 6.21);
    comparison.row_noted(
        "certificate verdict (1 = every start in the box oscillates forever)",
        f64::from(u8::from(cert.verdict)),
        1.0,
        0.0,
        "all five conditions hold: release reached, queue positive, queue floor re-entered, \
         next start content below the release threshold, next gap inside the box",
    );

    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let mut random_starts = Vec::with_capacity(10);
    for _ in 0..10 {
        let delta0 = 4.0 + 3.0 * rng.random::<f64>();
        let q1 = 1.0 + 7.0 * rng.random::<f64>();
        let z21 = p.tau * rng.random::<f64>();
        let x0 = state_from_triple(q1, q1 + delta0, z21, &p);
        let r = iterate_periodic(&x0, &p, 1e-9, 400)?;
        random_starts.push(RandomStartRow {
            delta0,
            q1,
            z21,
            verdict: r.verdict,
            delta_star: r.periodic.as_ref().map(|pe| pe.delta_star),
            iterations: r.iterations_used,
        });
    }
    let all_random_starts_oscillatory =
        random_starts.iter().all(|r| r.verdict == Verdict::Oscillatory);
    let report = CertificateReport { comparison, random_starts, all_random_starts_oscillatory };
    save_json(dir, "report.json", &report)?;
    println!(
        "appendixA_example: verdict = {}, amplitude bound = {}, next-gap estimate = {}, random starts all oscillatory = {}",
        cert.verdict,
        format_g9(cert.a_u_const),
        format_g9(cert.delta_l_estimate),
        all_random_starts_oscillatory
    );
    Ok(EXIT_OK)
}
