use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use binquad::epsdp::{epsdp_solve, second_singular_value, EntropySpec, EpsdpSchedule};
use binquad::io::{
    cut_value, graph_to_maxcut_quadratic, ising_from_json, ising_to_json, parse_beasley,
    parse_gset, write_results_csv, ResultRecord,
};
use binquad::ising::{
    is_k_safe, map_attractive, msp_experiment, msp_rows_csv, patterns_up_to, removed_set,
    two_mode_polytope, InfectionPattern, MspConfig, MspGraphParam,
};
use binquad::lowrank::{bm_solve, factor_from_psd, gw_round, min_embedding_width, SolveOptions};
use binquad::model::{IsingModel, QuadraticProblem};
use binquad::prevent::{project_to_safe, ProjectionOptions};
use binquad::rankmin::{numerical_rank, rank_descent, RankMinOptions, Surrogate};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "binquad", version, about = "Binary quadratic optimization workbench")]
struct Cli {
    /// Optional key=value config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Max-cut / QUBO pipeline: low-rank solve, hyperplane rounding,
    /// optional rank minimization, re-rounding.
    Maxcut(MaxcutArgs),
    /// Entropy-penalized low-rank SDP solve.
    Epsdp(EpsdpArgs),
    /// Attractive Ising MAP inference and safety tooling.
    #[command(subcommand)]
    Ising(IsingCommand),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RankminKind {
    Sv,
    Schatten,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Tsallis,
    Renyi,
    VonNeumann,
}

// FromStr so these enums can also come from a key=value config file.
macro_rules! value_enum_from_str {
    ($($t:ty),*) => {$(
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                <$t as ValueEnum>::from_str(s, true)
            }
        }
    )*};
}
value_enum_from_str!(RankminKind, OutputFormat, Family);

#[derive(Args)]
struct MaxcutArgs {
    /// Gset (rudy) or ORLIB bqp instance file; format is sniffed from the header.
    instance: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Hyperplane rounding trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Factor width; defaults to the Barvinok–Pataki bound for n.
    #[arg(long)]
    k: Option<usize>,
    /// Run the rank-minimization post-processor with this surrogate.
    #[arg(long, value_enum)]
    rankmin: Option<RankminKind>,
    /// Surrogate smoothing parameter ε.
    #[arg(long)]
    eps: Option<f64>,
    /// Singular-value surrogate exponent q.
    #[arg(long)]
    q: Option<f64>,
    /// Schatten surrogate exponent p.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Args)]
struct EpsdpArgs {
    /// Gset (rudy) or ORLIB bqp instance file; format is sniffed from the header.
    instance: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Factor width.
    #[arg(long)]
    k: Option<usize>,
    /// Entropy family.
    #[arg(long, value_enum)]
    family: Option<Family>,
    /// Entropy order α (Tsallis/Rényi).
    #[arg(long)]
    alpha: Option<f64>,
    /// Initial penalty weight λ0.
    #[arg(long)]
    lambda0: Option<f64>,
    /// Penalty growth factor γ.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Subcommand)]
enum IsingCommand {
    /// MAP state under a clamped infection pattern.
    Map(IsingMapArgs),
    /// Check k-safety over all patterns up to size k.
    Safety(IsingSafetyArgs),
    /// Project onto the two-mode safe polytope; prints one row per k.
    Mitigate(IsingMitigateArgs),
    /// Mixed-state proportion experiment over random graphs.
    Msp(IsingMspArgs),
}

#[derive(Args)]
struct IsingMapArgs {
    /// Ising model JSON file.
    model: PathBuf,
    /// Clamped (infected) nodes, comma-separated, e.g. "0,3,7".
    #[arg(long)]
    pattern: String,
    /// Negate every field entry before solving.
    #[arg(long)]
    flip_h: bool,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Args)]
struct IsingSafetyArgs {
    model: PathBuf,
    /// Safety level: every MAP removed set must have ≤ k nodes.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    flip_h: bool,
}

#[derive(Args)]
struct IsingMitigateArgs {
    model: PathBuf,
    /// Safety levels, comma-separated (e.g. "1,2,3,4"); one output row each.
    #[arg(long)]
    k: Option<String>,
    /// Keep fields fixed (pass `--fix-h false` to let the projection move h).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    fix_h: bool,
    #[arg(long)]
    flip_h: bool,
    /// Write the last projection report (JSON) here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Args)]
struct IsingMspArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Edge-count sweep, comma-separated (default "30,70,110,150,190").
    #[arg(long)]
    edges: Option<String>,
    /// Degree sweep for regular graphs, comma-separated (overrides --edges).
    #[arg(long)]
    degrees: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Fallback values from a key=value config file ('#' comments allowed).
struct Config(HashMap<String, String>);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = read_input(path)?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(CliError::usage(format!(
                        "{}:{}: expected key=value",
                        path.display(),
                        lineno + 1
                    )));
                };
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Self(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                CliError::usage(format!("config key '{key}': cannot parse '{raw}'"))
            }),
        }
    }
}

/// Flag value if given, else config value, else the built-in default.
fn resolve<T: FromStr>(
    flag: Option<T>,
    cfg: &Config,
    key: &str,
    default: T,
) -> Result<T, CliError> {
    match flag {
        Some(v) => Ok(v),
        None => Ok(cfg.get(key)?.unwrap_or(default)),
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: String) -> Self {
        Self { code: EXIT_USAGE, message }
    }

    fn runtime(message: String) -> Self {
        Self { code: EXIT_RUNTIME, message }
    }
}

impl From<binquad::Error> for CliError {
    fn from(e: binquad::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError {
        code: EXIT_USAGE,
        message: format!("cannot read {}: {e}", path.display()),
    })
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn instance_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// A parsed instance: quadratic problem, additive constant, and an
/// optional graph for direct cut counting.
struct Instance {
    name: String,
    problem: QuadraticProblem,
    constant: f64,
    graph: Option<binquad::WeightedGraph>,
}

/// Gset headers have two tokens ("n m"), ORLIB headers have one
/// (the instance count).
fn load_instances(path: &Path) -> Result<Vec<Instance>, CliError> {
    let text = read_input(path)?;
    let header = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| CliError::runtime(format!("{}: empty file", path.display())))?;
    let stem = instance_stem(path);
    match header.split_whitespace().count() {
        2 => {
            let graph = parse_gset(&text)?;
            let (problem, constant) = graph_to_maxcut_quadratic(&graph);
            Ok(vec![Instance { name: stem, problem, constant, graph: Some(graph) }])
        }
        1 => {
            let qubos = parse_beasley(&text)?;
            let many = qubos.len() > 1;
            Ok(qubos
                .iter()
                .enumerate()
                .map(|(i, q)| {
                    let conv = binquad::qubo_to_quadratic(q);
                    Instance {
                        name: if many { format!("{stem}#{}", i + 1) } else { stem.clone() },
                        problem: conv.problem,
                        constant: conv.constant,
                        graph: None,
                    }
                })
                .collect())
        }
        _ => Err(CliError::runtime(format!(
            "{}: cannot sniff format from header '{header}'",
            path.display()
        ))),
    }
}

fn records_output(
    records: &[ResultRecord],
    format: OutputFormat,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let text = match format {
        OutputFormat::Csv => write_results_csv(records),
        OutputFormat::Json => {
            let rows: Vec<serde_json::Value> = records
                .iter()
                .map(|r| {
                    let params: HashMap<&str, &str> = r
                        .params
                        .iter()
                        .map(|(k, v)| (k.as_str(), v.as_str()))
                        .collect();
                    serde_json::json!({
                        "instance": r.instance,
                        "method": r.method,
                        "objective": r.objective,
                        "rank": r.rank,
                        "seconds": r.seconds,
                        "seed": r.seed,
                        "params": params,
                    })
                })
                .collect();
            format!("{}\n", serde_json::to_string_pretty(&rows).expect("serializable"))
        }
    };
    write_output(out, &text)
}

fn cmd_maxcut(args: MaxcutArgs, cfg: &Config) -> Result<(), CliError> {
    let seed = resolve(args.seed, cfg, "seed", 0)?;
    let trials = resolve(args.trials, cfg, "trials", 1000)?;
    let eps = resolve(args.eps, cfg, "eps", 0.005)?;
    let q = resolve(args.q, cfg, "q", 0.8)?;
    let p = resolve(args.p, cfg, "p", 0.1)?;
    let format = resolve(args.format, cfg, "format", OutputFormat::Csv)?;
    let rankmin = match args.rankmin {
        Some(r) => Some(r),
        None => cfg.get::<RankminKind>("rankmin")?,
    };

    let mut records = Vec::new();
    for inst in load_instances(&args.instance)? {
        let k = resolve(args.k, cfg, "k", min_embedding_width(inst.problem.n()))?;
        let start = Instant::now();
        let opts = SolveOptions { seed, ..SolveOptions::default() };
        let f = bm_solve(&inst.problem, k, &opts)?;
        let (x, w_star) = gw_round(&inst.problem, &f, trials, seed)?;
        let objective = match &inst.graph {
            Some(g) => cut_value(g, &x)?,
            None => inst.constant + w_star,
        };
        let x0 = f.gram();
        let start_rank = numerical_rank(&x0, 1e-6);
        records.push(ResultRecord {
            instance: inst.name.clone(),
            method: "bm".into(),
            objective,
            rank: start_rank,
            seconds: start.elapsed().as_secs_f64(),
            seed,
            params: vec![("k".into(), k.to_string()), ("trials".into(), trials.to_string())],
        });

        if let Some(kind) = rankmin {
            let start = Instant::now();
            let (surrogate, label, params) = match kind {
                RankminKind::Sv => (
                    Surrogate::SingularValue { eps, q },
                    "rankmin-sv",
                    vec![("eps".into(), eps.to_string()), ("q".into(), q.to_string())],
                ),
                RankminKind::Schatten => (
                    Surrogate::Schatten { eps, p },
                    "rankmin-schatten",
                    vec![("eps".into(), eps.to_string()), ("p".into(), p.to_string())],
                ),
            };
            let upper = inst.problem.trace_product(&x0);
            let opts = RankMinOptions::new(surrogate, w_star, upper);
            let (x_final, _) = rank_descent(&inst.problem, &x0, &opts)?;
            let f_final = factor_from_psd(&x_final)?;
            let (x, w) = gw_round(&inst.problem, &f_final, trials, seed)?;
            let objective = match &inst.graph {
                Some(g) => cut_value(g, &x)?,
                None => inst.constant + w,
            };
            records.push(ResultRecord {
                instance: inst.name.clone(),
                method: label.into(),
                objective,
                rank: numerical_rank(&x_final, 1e-6),
                seconds: start.elapsed().as_secs_f64(),
                seed,
                params,
            });
        }
    }
    records_output(&records, format, args.out.as_deref())
}

fn cmd_epsdp(args: EpsdpArgs, cfg: &Config) -> Result<(), CliError> {
    let seed = resolve(args.seed, cfg, "seed", 0)?;
    let k = resolve(args.k, cfg, "k", 10)?;
    let alpha = resolve(args.alpha, cfg, "alpha", 2.0)?;
    let family = resolve(args.family, cfg, "family", Family::Tsallis)?;
    let format = resolve(args.format, cfg, "format", OutputFormat::Csv)?;
    let spec = match family {
        Family::Tsallis => EntropySpec::Tsallis { alpha },
        Family::Renyi => EntropySpec::Renyi { alpha },
        Family::VonNeumann => EntropySpec::VonNeumann,
    };
    spec.validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let sched = EpsdpSchedule {
        lambda0: resolve(args.lambda0, cfg, "lambda0", EpsdpSchedule::default().lambda0)?,
        gamma: resolve(args.gamma, cfg, "gamma", EpsdpSchedule::default().gamma)?,
        ..EpsdpSchedule::default()
    };
    sched
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;

    let mut records = Vec::new();
    let mut traces = Vec::new();
    for inst in load_instances(&args.instance)? {
        let start = Instant::now();
        let out = epsdp_solve(&inst.problem, k, &spec, &sched, seed)?;
        let objective = match &inst.graph {
            Some(g) => cut_value(g, &out.state)?,
            None => inst.constant + out.objective,
        };
        let sigma2 = second_singular_value(&out.factor);
        records.push(ResultRecord {
            instance: inst.name.clone(),
            method: format!("epsdp-{}", spec.label()),
            objective,
            rank: numerical_rank(&out.factor.gram(), 1e-6),
            seconds: start.elapsed().as_secs_f64(),
            seed,
            params: vec![
                ("k".into(), k.to_string()),
                ("lambda0".into(), sched.lambda0.to_string()),
                ("gamma".into(), sched.gamma.to_string()),
                ("sigma2".into(), format!("{sigma2:.3e}")),
            ],
        });
        traces.push((inst.name, out.sigma2_trace));
    }

    match format {
        OutputFormat::Csv => {
            let mut text = write_results_csv(&records);
            text.push_str("instance,outer_iter,sigma2\n");
            for (name, trace) in &traces {
                for (i, s) in trace.iter().enumerate() {
                    text.push_str(&format!("{name},{i},{s}\n"));
                }
            }
            write_output(args.out.as_deref(), &text)
        }
        OutputFormat::Json => {
            let rows: Vec<serde_json::Value> = records
                .iter()
                .zip(&traces)
                .map(|(r, (_, trace))| {
                    serde_json::json!({
                        "instance": r.instance,
                        "method": r.method,
                        "objective": r.objective,
                        "rank": r.rank,
                        "seconds": r.seconds,
                        "seed": r.seed,
                        "sigma2_trace": trace,
                    })
                })
                .collect();
            let text = format!("{}\n", serde_json::to_string_pretty(&rows).expect("serializable"));
            write_output(args.out.as_deref(), &text)
        }
    }
}

fn load_model(path: &Path, flip_h: bool) -> Result<IsingModel, CliError> {
    let m = ising_from_json(&read_input(path)?)?;
    Ok(if flip_h { m.with_flipped_h() } else { m })
}

fn parse_usize_list(raw: &str, what: &str) -> Result<Vec<usize>, CliError> {
    raw.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::usage(format!("{what}: cannot parse '{t}'")))
        })
        .collect()
}

fn cmd_ising_map(args: IsingMapArgs, cfg: &Config) -> Result<(), CliError> {
    let m = load_model(&args.model, args.flip_h)?;
    let nodes = parse_usize_list(&args.pattern, "--pattern")?;
    let pattern = InfectionPattern::new(nodes.into_iter().collect(), m.n())
        .map_err(|e| CliError::usage(e.to_string()))?;
    let x = map_attractive(&m, &pattern)?;
    let removed: Vec<usize> = removed_set(&x).into_iter().collect();
    match resolve(args.format, cfg, "format", OutputFormat::Csv)? {
        OutputFormat::Json => {
            let doc = serde_json::json!({
                "state": x.spins(),
                "removed": removed,
                "removed_size": removed.len(),
            });
            println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
        }
        OutputFormat::Csv => {
            let spins: Vec<String> = x.spins().iter().map(|s| format!("{s:+}")).collect();
            println!("state: {}", spins.join(" "));
            println!(
                "removed ({}): {}",
                removed.len(),
                removed.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
            );
        }
    }
    Ok(())
}

fn cmd_ising_safety(args: IsingSafetyArgs, cfg: &Config) -> Result<(), CliError> {
    let m = load_model(&args.model, args.flip_h)?;
    let k = resolve(args.k, cfg, "k", 1)?;
    let patterns = patterns_up_to(m.n(), k);
    let (safe, sizes) = is_k_safe(&m, &patterns, k)?;
    let worst = sizes.iter().copied().max().unwrap_or(0);
    println!(
        "{} (k={k}, patterns={}, max removed set={worst})",
        if safe { "safe" } else { "unsafe" },
        patterns.len()
    );
    Ok(())
}

fn cmd_ising_mitigate(args: IsingMitigateArgs, cfg: &Config) -> Result<(), CliError> {
    let m0 = load_model(&args.model, args.flip_h)?;
    let raw_k = match args.k {
        Some(raw) => raw,
        None => cfg.get::<String>("k")?.unwrap_or_else(|| "1".into()),
    };
    let levels = parse_usize_list(&raw_k, "--k")?;
    let format = resolve(args.format, cfg, "format", OutputFormat::Csv)?;

    let mut rows = Vec::new();
    let mut last_report = None;
    for &k in &levels {
        let patterns = patterns_up_to(m0.n(), k);
        let sp = two_mode_polytope(m0.graph(), &patterns);
        let opts = ProjectionOptions {
            fix_h: args.fix_h,
            verify_k: Some(k),
            ..ProjectionOptions::default()
        };
        let (model, report) = project_to_safe(&m0, &sp, &patterns, &opts)?;
        rows.push(serde_json::json!({
            "k": k,
            "constraints": report.constraints,
            "runtime_s": report.runtime_s,
            "cost": report.cost,
            "verified": report.verified,
        }));
        last_report = Some((model, report));
    }

    match format {
        OutputFormat::Csv => {
            println!("k,constraints,runtime_s,cost,verified");
            for row in &rows {
                println!(
                    "{},{},{:.6},{},{}",
                    row["k"], row["constraints"],
                    row["runtime_s"].as_f64().unwrap_or(0.0),
                    row["cost"], row["verified"]
                );
            }
        }
        OutputFormat::Json => {
            println!("{}", serde_json::to_string_pretty(&rows).expect("serializable"));
        }
    }
    if let (Some(path), Some((model, report))) = (args.out.as_deref(), last_report) {
        let doc = serde_json::json!({
            "report": report,
            "model": serde_json::from_str::<serde_json::Value>(&ising_to_json(&model))
                .expect("valid JSON"),
        });
        write_output(
            Some(path),
            &format!("{}\n", serde_json::to_string_pretty(&doc).expect("serializable")),
        )?;
    }
    Ok(())
}

fn cmd_ising_msp(args: IsingMspArgs, cfg: &Config) -> Result<(), CliError> {
    let n = resolve(args.n, cfg, "n", 20)?;
    let samples = resolve(args.samples, cfg, "samples", 200)?;
    let seed = resolve(args.seed, cfg, "seed", 0)?;
    let param = if let Some(raw) = &args.degrees {
        MspGraphParam::Degrees(parse_usize_list(raw, "--degrees")?)
    } else {
        let raw = match &args.edges {
            Some(raw) => raw.clone(),
            None => cfg
                .get::<String>("edges")?
                .unwrap_or_else(|| "30,70,110,150,190".into()),
        };
        MspGraphParam::EdgeCounts(parse_usize_list(&raw, "--edges")?)
    };
    let config = MspConfig::new(n, param, samples, seed);
    let rows = msp_experiment(&config)?;
    write_output(args.out.as_deref(), &msp_rows_csv(&rows))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Maxcut(args) => cmd_maxcut(args, &cfg),
        Command::Epsdp(args) => cmd_epsdp(args, &cfg),
        Command::Ising(IsingCommand::Map(args)) => cmd_ising_map(args, &cfg),
        Command::Ising(IsingCommand::Safety(args)) => cmd_ising_safety(args, &cfg),
        Command::Ising(IsingCommand::Mitigate(args)) => cmd_ising_mitigate(args, &cfg),
        Command::Ising(IsingCommand::Msp(args)) => cmd_ising_msp(args, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
