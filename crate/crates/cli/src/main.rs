//! `mgpoison`: dataset generation, attack synthesis, verification, cost
//! bounds and learner simulation from the command line.
//!
//! Exit codes: 0 ok, 2 bad configuration, 3 infeasible attack, 4 coverage
//! violation, 5 failed check.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use mgpoison::attack::{AttackError, AttackOptions, AttackResult, Formulation, LearnerModel, TieBreak};
use mgpoison::bandit::{solve_bandit_attack, BanditAttackInstance};
use mgpoison::confidence::{hoeffding_widths, ConfidenceWidths, HoeffdingConfig};
use mgpoison::cost::{cost_bounds, period_optima};
use mgpoison::game::{check_full_coverage, mle_game, visit_counts, Cell, GameError, GameShape, JointPolicy, OfflineDataset};
use mgpoison::generators::{random_dataset, example_game_dataset, worst_case_dataset, RandomDatasetSpec, EXAMPLE_GAME_BOUND};
use mgpoison::io::{dataset_from_jsonl, dataset_to_jsonl, parse_bound, parse_policy, policy_tuples, DatasetHeader};
use mgpoison::learners::{compatibility_witness, bonus_gamma, check_bonus_compatibility, largest_compatible_constant, povi, BonusKind, LearnerError};
use mgpoison::markov::{
    feasibility_condition, solve_markov_attack, verify_attack, DualForm, MarkovAttackInstance, MarkovCertificate, MarkovLpOptions,
    VerifyOptions,
};

#[derive(Parser, Debug)]
#[command(name = "mgpoison", version, about = "Reward poisoning of offline multi-agent datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Write a generated dataset and its header.
    Gen(GenArgs),
    /// Solve for the minimal-cost poisoning of a dataset.
    Attack(AttackArgs),
    /// Sample plausible games around a dataset and check the target policy.
    Verify(VerifyArgs),
    /// Report lower and upper bounds on the optimal attack cost.
    Bounds(BoundsArgs),
    /// Run pessimistic/optimistic value iteration on a dataset.
    Learn(LearnArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum Family {
    WorstCase,
    /// The two-player example game; `section3` is accepted as an alias.
    #[value(alias = "section3")]
    ExampleGame,
    Random,
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Output JSON-Lines dataset.
    #[arg(long)]
    out: PathBuf,
    /// Header path; defaults to `<stem>.header.json` next to the dataset.
    #[arg(long)]
    header: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "A")]
    actions: Option<usize>,
    #[arg(long = "S")]
    states: Option<usize>,
    #[arg(long = "H")]
    horizon: Option<usize>,
    /// Visits per cell (worst-case family).
    #[arg(long = "N")]
    visits: Option<usize>,
    /// Per-joint-action counts of the example game, comma separated.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    #[arg(long)]
    min_visits: Option<usize>,
    #[arg(long)]
    max_visits: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Reward bound.
    #[arg(long)]
    b: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// JSON-Lines dataset.
    #[arg(long)]
    dataset: PathBuf,
    /// Header path; defaults to `<stem>.header.json` next to the dataset.
    #[arg(long)]
    header: Option<PathBuf>,
    /// Reward bound overriding the header (`inf` allowed).
    #[arg(long)]
    b: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum WidthKind {
    Hoeffding,
    Constant,
    Zero,
}

#[derive(Args, Debug, Serialize)]
struct WidthArgs {
    /// Confidence width family.
    #[arg(long, value_enum)]
    widths: Option<WidthKind>,
    /// Failure probability of the Hoeffding widths.
    #[arg(long)]
    delta: Option<f64>,
    /// Constant reward width.
    #[arg(long)]
    rho_r: Option<f64>,
    /// Constant transition width.
    #[arg(long)]
    rho_p: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct TargetArgs {
    /// `all-zeros`, a JSON `[h][s]` table, or `@path` to a file holding one.
    #[arg(long)]
    target: String,
    /// Required separation margin.
    #[arg(long)]
    iota: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum ModelArg {
    Mle,
    Ci,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum FormulationArg {
    PerEpisode,
    Aggregated,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum DualArg {
    Box,
    L1,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum TieBreakArg {
    SolverVertex,
    HighestMeans,
}

#[derive(Args, Debug, Serialize)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "per-episode")]
    formulation: FormulationArg,
    /// Dualisation of the transition uncertainty (Markov shapes).
    #[arg(long, value_enum, default_value = "box")]
    dual: DualArg,
    /// Bound the target action's reward term of the upper Q by `b`.
    #[arg(long)]
    clip_target_upper: bool,
    #[arg(long, value_enum, default_value = "solver-vertex")]
    tie_break: TieBreakArg,
}

#[derive(Args, Debug, Serialize)]
struct AttackArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    widths: WidthArgs,
    /// Learner model the attack targets.
    #[arg(long, value_enum)]
    model: ModelArg,
    #[command(flatten)]
    solver: SolverArgs,
    /// Poisoned JSON-Lines output; its header is written alongside.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report output; the report is always printed to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Sampled games for an immediate verification; 0 skips it.
    #[arg(long, default_value_t = 0)]
    verify_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    widths: WidthArgs,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Largest policy count for the uniqueness check by enumeration.
    #[arg(long, default_value_t = 64)]
    uniqueness_limit: u128,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct BoundsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    widths: WidthArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Also solve the full program and check that the bounds bracket it.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum BonusArg {
    Pessimistic,
    Optimistic,
    Zero,
}

#[derive(Args, Debug, Serialize)]
struct LearnArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    bonus: BonusArg,
    /// Bonus constant, or `auto` for the largest constant whose bonus stays
    /// within the reward widths.
    #[arg(long)]
    bonus_c: Option<String>,
    /// Widths for the compatibility check; omitted means no check.
    /// `--delta` is shared by the bonus and the Hoeffding widths.
    #[command(flatten)]
    widths: WidthArgs,
    /// Expected policy (`all-zeros`, JSON table or `@path`).
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Reasons to stop, each with its exit code.
#[derive(Debug)]
enum Failure {
    Config(String),
    Infeasible { message: String, report: Value },
    Coverage(Vec<Cell>),
    Check { message: String, report: Value },
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Infeasible { .. } => 3,
            Failure::Coverage(_) => 4,
            Failure::Check { .. } => 5,
        }
    }
}

fn config(msg: impl std::fmt::Display) -> Failure {
    Failure::Config(msg.to_string())
}

/// Coverage violations become exit 4; everything else is a bad configuration.
fn game_failure(e: GameError) -> Failure {
    match e {
        GameError::UncoveredCell(cells) => Failure::Coverage(cells),
        e => config(e),
    }
}

fn attack_failure(e: AttackError) -> Failure {
    match e {
        AttackError::Game(g) => game_failure(g),
        e => config(e),
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| config(format!("{}: {e}", dir.display())))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| config(format!("{}: {e}", path.display())))?;
    tmp.persist(path).map_err(|e| config(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))
}

fn default_header(dataset: &Path) -> PathBuf {
    let stem = dataset.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    dataset.with_file_name(format!("{stem}.header.json"))
}

fn to_json<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report values serialize")
}

fn bound_json(b: f64) -> Value {
    if b.is_infinite() {
        json!("inf")
    } else {
        json!(b)
    }
}

/// Worker threads: all cores, capped by `MGPOISON_THREADS`.
fn thread_cap() -> Result<usize, Failure> {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("MGPOISON_THREADS") {
        Ok(v) => {
            let cap: usize = v.trim().parse().map_err(|_| config(format!("MGPOISON_THREADS must be a positive integer, got {v:?}")))?;
            if cap == 0 {
                return Err(config("MGPOISON_THREADS must be positive"));
            }
            Ok(cores.min(cap))
        }
        Err(_) => Ok(cores),
    }
}

/// A dataset with its header and resolved bound.
struct Loaded {
    dataset: OfflineDataset,
    header_path: PathBuf,
    bound: f64,
}

impl Loaded {
    fn shape(&self) -> &GameShape {
        self.dataset.shape()
    }

    fn resolved(&self) -> Value {
        let s = self.shape();
        json!({
            "header": self.header_path,
            "n": s.n_players(),
            "n_states": s.n_states(),
            "actions": s.actions(),
            "H": s.horizon(),
            "b": bound_json(self.bound),
        })
    }
}

fn load(args: &DataArgs) -> Result<Loaded, Failure> {
    let header_path = args.header.clone().unwrap_or_else(|| default_header(&args.dataset));
    let header: DatasetHeader = serde_json::from_str(&read(&header_path)?).map_err(|e| config(format!("{}: {e}", header_path.display())))?;
    let shape = header.shape().map_err(|e| config(format!("{}: {e}", header_path.display())))?;
    let bound = match &args.b {
        Some(t) => parse_bound(t).map_err(config)?,
        None => header.bound(),
    };
    let dataset = dataset_from_jsonl(&read(&args.dataset)?, &shape).map_err(|e| config(format!("{}: {e}", args.dataset.display())))?;
    let coverage = check_full_coverage(&visit_counts(&dataset));
    if !coverage.satisfied {
        return Err(Failure::Coverage(coverage.uncovered));
    }
    if bound.is_finite() && dataset.max_abs_reward() > bound {
        eprintln!("warning: recorded rewards exceed b = {bound}; cell means are checked against it");
    }
    Ok(Loaded { dataset, header_path, bound })
}

fn load_policy(text: &str, shape: &GameShape) -> Result<JointPolicy, Failure> {
    let body = match text.strip_prefix('@') {
        Some(path) => read(Path::new(path))?,
        None => text.to_string(),
    };
    parse_policy(&body, shape).map_err(|e| config(format!("target policy: {e}")))
}

fn check_iota(iota: f64) -> Result<(), Failure> {
    if !(iota.is_finite() && iota >= 0.0) {
        return Err(config(format!("--iota must be finite and nonnegative, got {iota}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<(), Failure> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(config(format!("--delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

fn build_widths(args: &WidthArgs, loaded: &Loaded) -> Result<ConfidenceWidths, Failure> {
    let shape = loaded.shape();
    match args.widths {
        None => Err(config("--widths is required (hoeffding, constant or zero)")),
        Some(WidthKind::Zero) => Ok(ConfidenceWidths::zero(shape)),
        Some(WidthKind::Constant) => {
            let rho_r = args.rho_r.ok_or_else(|| config("--widths constant needs --rho-r"))?;
            let rho_p = match (args.rho_p, shape.horizon()) {
                (Some(p), _) => p,
                (None, 1) => 0.0,
                (None, _) => return Err(config("--widths constant needs --rho-p when H > 1")),
            };
            ConfidenceWidths::constant(shape, rho_r, rho_p).map_err(config)
        }
        Some(WidthKind::Hoeffding) => {
            let delta = args.delta.ok_or_else(|| config("--widths hoeffding needs --delta"))?;
            check_delta(delta)?;
            hoeffding_widths(&visit_counts(&loaded.dataset), shape, loaded.bound, &HoeffdingConfig::new(delta)).map_err(config)
        }
    }
}

fn emit(report: &Value, path: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(report).expect("reports serialize") + "\n";
    if let Some(p) = path {
        write_atomic(p, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn envelope(command: &str, cfg: Value) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!(command));
    m.insert("config".into(), cfg);
    m
}

fn run_gen(args: &GenArgs) -> Result<(), Failure> {
    let need = |v: Option<usize>, flag: &str| v.ok_or_else(|| config(format!("--family {:?} needs --{flag}", args.family)));
    let need_bound = || -> Result<f64, Failure> {
        let text = args.b.as_deref().ok_or_else(|| config("--b is required"))?;
        let b = parse_bound(text).map_err(config)?;
        if b.is_infinite() {
            return Err(config("generated datasets need a finite --b"));
        }
        Ok(b)
    };
    let (dataset, bound) = match args.family {
        Family::ExampleGame => {
            let counts = args.counts.clone().unwrap_or_else(|| vec![1; 4]);
            if counts.len() != 4 {
                return Err(config("--counts needs four entries"));
            }
            let b = match &args.b {
                Some(t) => parse_bound(t).map_err(config)?,
                None => EXAMPLE_GAME_BOUND,
            };
            (example_game_dataset(&counts).map_err(config)?, b)
        }
        Family::WorstCase => {
            let b = need_bound()?;
            let ds = worst_case_dataset(need(args.n, "n")?, need(args.actions, "A")?, need(args.states, "S")?, need(args.horizon, "H")?, need(args.visits, "N")?, b)
                .map_err(config)?;
            (ds, b)
        }
        Family::Random => {
            let b = need_bound()?;
            let (n, a) = (need(args.n, "n")?, need(args.actions, "A")?);
            let shape = GameShape::symmetric(n, a, need(args.states, "S")?, need(args.horizon, "H")?).map_err(config)?;
            let spec = RandomDatasetSpec {
                min_visits: need(args.min_visits, "min-visits")?,
                max_visits: need(args.max_visits, "max-visits")?,
                bound: b,
                noise: args.noise.ok_or_else(|| config("--family random needs --noise"))?,
            };
            (random_dataset(&shape, &spec, args.seed).map_err(config)?, b)
        }
    };
    let header_path = args.header.clone().unwrap_or_else(|| default_header(&args.out));
    let header = DatasetHeader::new(dataset.shape(), bound);
    write_atomic(&header_path, &(serde_json::to_string(&header).expect("header serializes") + "\n"))?;
    write_atomic(&args.out, &dataset_to_jsonl(&dataset))?;
    let counts = visit_counts(&dataset);
    let mut report = envelope("gen", to_json(args));
    report.insert("dataset".into(), json!(args.out));
    report.insert("header".into(), json!(header_path));
    report.insert("episodes".into(), json!(dataset.n_episodes()));
    report.insert("min_count".into(), json!(counts.min()));
    report.insert("max_count".into(), json!(counts.max()));
    report.insert("counts".into(), json!(counts.to_nested()));
    emit(&Value::Object(report), None)
}

fn markov_options(s: &SolverArgs) -> MarkovLpOptions {
    let formulation = match s.formulation {
        FormulationArg::PerEpisode => Formulation::PerEpisode,
        FormulationArg::Aggregated => Formulation::Aggregated,
    };
    let tie_break = match s.tie_break {
        TieBreakArg::SolverVertex => TieBreak::SolverVertex,
        TieBreakArg::HighestMeans => TieBreak::HighestMeans,
    };
    MarkovLpOptions {
        attack: AttackOptions::new(formulation).with_tie_break(tie_break),
        dual: match s.dual {
            DualArg::Box => DualForm::Box,
            DualArg::L1 => DualForm::L1Ball,
        },
        clip_target_upper: s.clip_target_upper,
    }
}

fn is_bandit(shape: &GameShape) -> bool {
    shape.n_states() == 1 && shape.horizon() == 1
}

/// Report block for an infeasible program: the cells breaking the
/// sufficient condition `ι ≤ 2b - (H - h + 1) ρ`.
fn infeasible(base: serde_json::Map<String, Value>, shape: &GameShape, widths: &ConfidenceWidths, iota: f64, bound: f64) -> Failure {
    let mut report = base;
    report.insert("status".into(), json!("infeasible"));
    let violations = feasibility_condition(shape, widths, iota, bound).map(|r| r.violations).unwrap_or_default();
    let message = match violations.first() {
        Some(v) => format!(
            "attack infeasible; ι = {iota} exceeds {} at (h={}, s={}, a={})",
            v.threshold, v.cell.h, v.cell.s, v.cell.a
        ),
        None => "attack infeasible".to_string(),
    };
    report.insert("violations".into(), to_json(&violations));
    Failure::Infeasible { message, report: Value::Object(report) }
}

fn verify_block(
    loaded: &Loaded,
    poisoned: &OfflineDataset,
    target: &JointPolicy,
    widths: &ConfidenceWidths,
    iota: f64,
    certificate: Option<&MarkovCertificate>,
    opts: &VerifyOptions,
) -> Result<mgpoison::markov::VerifyReport, Failure> {
    let inst = MarkovAttackInstance::new(loaded.dataset.clone(), target.clone(), widths.clone(), iota, loaded.bound).map_err(attack_failure)?;
    verify_attack(&inst, certificate, poisoned, opts).map_err(attack_failure)
}

fn attack_fields(report: &mut serde_json::Map<String, Value>, res: &AttackResult) {
    report.insert("status".into(), to_json(&res.status));
    report.insert("cost".into(), json!(res.cost));
    report.insert("lp_objective".into(), json!(res.lp_objective));
    report.insert("worst_margin".into(), json!(res.worst_margin));
    report.insert("margins".into(), to_json(&res.margins));
    report.insert("mle_after".into(), to_json(&res.poisoned_mle.to_nested()));
    report.insert("formulation".into(), to_json(&res.formulation));
    report.insert("tally".into(), to_json(&res.tally));
    report.insert("pivots".into(), json!(res.pivots));
}

fn run_attack(args: &AttackArgs) -> Result<(), Failure> {
    let loaded = load(&args.data)?;
    check_iota(args.target.iota)?;
    let shape = loaded.shape().clone();
    let target = load_policy(&args.target.target, &shape)?;
    let iota = args.target.iota;
    let mut widths = build_widths(&args.widths, &loaded)?;
    if args.model == ModelArg::Mle {
        widths = ConfidenceWidths::zero(&shape);
    }
    let threads = thread_cap()?;
    let mut report = envelope("attack", to_json(args));
    let mut resolved = loaded.resolved();
    resolved["target"] = to_json(&policy_tuples(&target, &shape));
    resolved["threads"] = json!(threads);
    report.insert("resolved".into(), resolved);
    report.insert("seed".into(), json!(args.seed));
    report.insert("widths".into(), to_json(&widths.tables()));
    let opts = markov_options(&args.solver);
    let (result, certificate) = if is_bandit(&shape) {
        report.insert("mode".into(), json!(if args.model == ModelArg::Mle { "bandit_mle" } else { "bandit_ci" }));
        let tuple = shape.joint_tuple(target.action(0, 0));
        let inst = BanditAttackInstance::new(loaded.dataset.clone(), &tuple, widths.clone(), iota, loaded.bound).map_err(attack_failure)?;
        let model = if args.model == ModelArg::Mle { LearnerModel::Mle } else { LearnerModel::ConfidenceBound };
        match solve_bandit_attack(&inst, model, &opts.attack) {
            Ok(r) => (r, None),
            Err(AttackError::Infeasible) => return Err(infeasible(report, &shape, &widths, iota, loaded.bound)),
            Err(e) => return Err(attack_failure(e)),
        }
    } else {
        report.insert("mode".into(), json!(if args.model == ModelArg::Mle { "markov_mle" } else { "markov_ci" }));
        let inst = MarkovAttackInstance::new(loaded.dataset.clone(), target.clone(), widths.clone(), iota, loaded.bound).map_err(attack_failure)?;
        match solve_markov_attack(&inst, &opts) {
            Ok(r) => (r.attack, Some(r.certificate)),
            Err(AttackError::Infeasible) => return Err(infeasible(report, &shape, &widths, iota, loaded.bound)),
            Err(e) => return Err(attack_failure(e)),
        }
    };
    attack_fields(&mut report, &result);
    if let Some(cert) = &certificate {
        report.insert("q_lower".into(), to_json(&cert.lp_bounds.q_lower.to_nested()));
        report.insert("q_upper".into(), to_json(&cert.lp_bounds.q_upper.to_nested()));
        report.insert("exact_q_lower".into(), to_json(&cert.exact.q_lower.to_nested()));
        report.insert("exact_q_upper".into(), to_json(&cert.exact.q_upper.to_nested()));
        report.insert("max_lp_slack".into(), json!(cert.max_lp_slack));
        report.insert("clip_flags".into(), to_json(&cert.clip_flags));
    }
    if let Some(out) = &args.out {
        let header = DatasetHeader::new(&shape, loaded.bound);
        write_atomic(&default_header(out), &(serde_json::to_string(&header).expect("header serializes") + "\n"))?;
        write_atomic(out, &dataset_to_jsonl(&result.poisoned))?;
        report.insert("output".into(), json!(out));
    }
    let mut failed = false;
    if args.verify_samples > 0 {
        let vopts = VerifyOptions { samples: args.verify_samples, seed: args.seed, threads, ..VerifyOptions::default() };
        let v = verify_block(&loaded, &result.poisoned, &target, &widths, iota, certificate.as_ref(), &vopts)?;
        failed = !v.passed();
        report.insert("verify".into(), to_json(&v));
    }
    let report = Value::Object(report);
    if failed {
        return Err(Failure::Check { message: "verification of the attack failed".into(), report });
    }
    emit(&report, args.report.as_deref())
}

fn run_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let loaded = load(&args.data)?;
    check_iota(args.target.iota)?;
    let shape = loaded.shape().clone();
    let target = load_policy(&args.target.target, &shape)?;
    let widths = build_widths(&args.widths, &loaded)?;
    let threads = thread_cap()?;
    let mut report = envelope("verify", to_json(args));
    let mut resolved = loaded.resolved();
    resolved["target"] = to_json(&policy_tuples(&target, &shape));
    resolved["threads"] = json!(threads);
    report.insert("resolved".into(), resolved);
    report.insert("seed".into(), json!(args.seed));
    let opts = VerifyOptions { samples: args.samples, seed: args.seed, threads, uniqueness_limit: args.uniqueness_limit };
    let v = verify_block(&loaded, &loaded.dataset, &target, &widths, args.target.iota, None, &opts)?;
    let passed = v.passed();
    report.insert("passed".into(), json!(passed));
    report.insert("verify".into(), to_json(&v));
    let report = Value::Object(report);
    if !passed {
        return Err(Failure::Check { message: format!("{} of {} sampled games failed", v.samples - v.passes, v.samples), report });
    }
    emit(&report, args.report.as_deref())
}

fn run_bounds(args: &BoundsArgs) -> Result<(), Failure> {
    let loaded = load(&args.data)?;
    check_iota(args.target.iota)?;
    let shape = loaded.shape().clone();
    let target = load_policy(&args.target.target, &shape)?;
    let widths = build_widths(&args.widths, &loaded)?;
    let iota = args.target.iota;
    let inst = MarkovAttackInstance::new(loaded.dataset.clone(), target.clone(), widths.clone(), iota, loaded.bound).map_err(attack_failure)?;
    let mut report = envelope("bounds", to_json(args));
    let mut resolved = loaded.resolved();
    resolved["target"] = to_json(&policy_tuples(&target, &shape));
    report.insert("resolved".into(), resolved);
    let opts = markov_options(&args.solver);
    let optima = match period_optima(&inst, &opts) {
        Ok(o) => o,
        Err(AttackError::Infeasible) => return Err(infeasible(report, &shape, &widths, iota, loaded.bound)),
        Err(e) => return Err(attack_failure(e)),
    };
    let bounds = cost_bounds(&inst, Some(&optima)).map_err(attack_failure)?;
    report.insert("bounds".into(), to_json(&bounds));
    report.insert("best_lower".into(), json!(bounds.best_lower()));
    report.insert("best_upper".into(), json!(bounds.best_upper()));
    let mut bracketed = true;
    if args.full {
        let cost = match solve_markov_attack(&inst, &opts) {
            Ok(r) => r.attack.cost,
            Err(AttackError::Infeasible) => return Err(infeasible(report, &shape, &widths, iota, loaded.bound)),
            Err(e) => return Err(attack_failure(e)),
        };
        bracketed = bounds.brackets(cost, 1e-5);
        report.insert("cost".into(), json!(cost));
        report.insert("bracketed".into(), json!(bracketed));
    }
    let report = Value::Object(report);
    if !bracketed {
        return Err(Failure::Check { message: "solved cost falls outside the reported bounds".into(), report });
    }
    emit(&report, args.report.as_deref())
}

fn run_learn(args: &LearnArgs) -> Result<(), Failure> {
    let loaded = load(&args.data)?;
    let shape = loaded.shape().clone();
    let counts = visit_counts(&loaded.dataset);
    let widths = match args.widths.widths {
        Some(_) => Some(build_widths(&args.widths, &loaded)?),
        None => None,
    };
    let kind = match args.bonus {
        BonusArg::Pessimistic => BonusKind::Pessimistic,
        BonusArg::Optimistic => BonusKind::Optimistic,
        BonusArg::Zero => BonusKind::Zero,
    };
    let (c, delta) = if kind == BonusKind::Zero {
        (0.0, args.widths.delta.unwrap_or(0.5))
    } else {
        let delta = args.widths.delta.ok_or_else(|| config("--delta is required for a nonzero bonus"))?;
        check_delta(delta)?;
        let text = args.bonus_c.as_deref().ok_or_else(|| config("--bonus-c is required for a nonzero bonus"))?;
        let c = if text == "auto" {
            let w = widths.as_ref().ok_or_else(|| config("--bonus-c auto needs --widths"))?;
            largest_compatible_constant(&shape, &counts, w, delta)
        } else {
            text.parse::<f64>().map_err(|e| config(format!("--bonus-c: {e}")))?
        };
        (c, delta)
    };
    let mut report = envelope("learn", to_json(args));
    let mut resolved = loaded.resolved();
    resolved["bonus_c"] = json!(c);
    resolved["delta"] = json!(delta);
    report.insert("resolved".into(), resolved);
    let gamma = bonus_gamma(&shape, &counts, kind, c, delta).map_err(config)?;
    let out = match povi(&loaded.dataset, &gamma, loaded.bound) {
        Ok(o) => o,
        Err(LearnerError::NoEquilibrium { h, s }) => {
            report.insert("status".into(), json!("no_equilibrium"));
            report.insert("cell".into(), json!({"h": h, "s": s}));
            return Err(Failure::Check { message: format!("no pure equilibrium at (h={h}, s={s})"), report: Value::Object(report) });
        }
        Err(LearnerError::Game(g)) => return Err(game_failure(g)),
        Err(e) => return Err(config(e)),
    };
    let policy = out.joint_policy(&shape);
    let mut ok = true;
    report.insert("status".into(), json!("solved"));
    report.insert("policy".into(), to_json(&policy_tuples(&policy, &shape)));
    report.insert("joint_policy".into(), to_json(&out.policy));
    report.insert("ne_status".into(), to_json(&out.ne_status));
    report.insert("all_strict".into(), json!(out.all_strict()));
    report.insert("pure_equilibria".into(), to_json(&out.pure_equilibria));
    report.insert("v_lower".into(), to_json(&out.v_lower));
    if let Some(w) = &widths {
        let mle = mle_game(&loaded.dataset, loaded.bound).map_err(game_failure)?;
        let compat = check_bonus_compatibility(&mle, &gamma, w, &out.v_lower);
        ok &= compat.holds;
        report.insert("compatibility".into(), json!({"holds": compat.holds, "min_slack": compat.min_slack}));
        if compat.holds {
            let games = compatibility_witness(&mle, &shape, &gamma, w, &out).map_err(config)?;
            report.insert("witness_games".into(), json!(games.len()));
        }
    }
    if let Some(t) = &args.target {
        let expected = load_policy(t, &shape)?;
        let matches = expected == policy;
        ok &= matches;
        report.insert("target_match".into(), json!(matches));
    }
    let report = Value::Object(report);
    if !ok {
        return Err(Failure::Check { message: "learner checks failed".into(), report });
    }
    emit(&report, args.report.as_deref())
}

fn report_path(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Attack(a) => a.report.as_deref(),
        Command::Verify(a) => a.report.as_deref(),
        Command::Bounds(a) => a.report.as_deref(),
        Command::Learn(a) => a.report.as_deref(),
        Command::Gen(_) => None,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Attack(a) => run_attack(a),
        Command::Verify(a) => run_verify(a),
        Command::Bounds(a) => run_bounds(a),
        Command::Learn(a) => run_learn(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            match &f {
                Failure::Config(m) => eprintln!("error: {m}"),
                Failure::Coverage(cells) => {
                    let list: Vec<String> = cells.iter().map(|c| format!("(h={}, s={}, a={})", c.h, c.s, c.a)).collect();
                    eprintln!("error: {} uncovered cell(s): {}", cells.len(), list.join(", "));
                    let report = json!({"status": "uncovered", "uncovered": to_json(cells)});
                    let _ = emit(&report, report_path(&cli.command));
                }
                Failure::Infeasible { message, report } | Failure::Check { message, report } => {
                    eprintln!("error: {message}");
                    let _ = emit(report, report_path(&cli.command));
                }
            }
            ExitCode::from(code)
        }
    }
}
