use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use star_core::benchmarks::{run_mechanism, Mechanism};
use star_core::decomposition::{classify_cycle, decompose_circulation};
use star_core::experiment::{per_user_csv, run_experiment, ExperimentConfig};
use star_core::feasibility::all_requests_satisfiable;
use star_core::instance::{format_decimal, parse_flow, parse_instance, write_flow, write_instance, DEFAULT_PRECISION};
use star_core::oracle::{brute_force_feasible, brute_force_optimum, SmallInstanceLimits};
use star_core::simgen::{dataset_rng, gen_er_instance, gen_er_social, gen_spectrum_instance, load_social_edge_list};
use star_core::simgen::{ErParams, SpectrumParams};
use star_core::solver::{solve, Objective, SolveOptions, Solution};
use star_core::transforms::{scale_to_integral, split_provider_capacity, ServiceMode};
use star_core::{Flow, Graph, Rational};

#[derive(Parser)]
#[command(name = "star", version, about = "Max-utility circulations on social-request graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal circulation of an instance.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        opts: SolveArgs,
        /// Append one line per canceled cycle.
        #[arg(long)]
        trace: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Whether every request can be served in full.
    Feasibility {
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PRECISION)]
        precision: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Split a circulation into cycle flows.
    Decompose {
        instance: PathBuf,
        flow: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PRECISION)]
        precision: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run STAR or one of the restricted mechanisms.
    Benchmark {
        instance: PathBuf,
        #[arg(long, value_parser = parse_mechanism)]
        mechanism: Mechanism,
        #[command(flatten)]
        opts: SolveArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare the solver and the feasibility test with exhaustive search.
    OracleCheck {
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PRECISION)]
        precision: u32,
    },
    /// Run a parameter sweep described by a key = value config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write a random instance.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Divisible)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Utility)]
    objective: ObjectiveArg,
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision: u32,
}

impl SolveArgs {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            mode: match self.mode {
                ModeArg::Divisible => ServiceMode::Divisible,
                ModeArg::Indivisible => ServiceMode::Indivisible,
            },
            objective: match self.objective {
                ObjectiveArg::Utility => Objective::Utility,
                ObjectiveArg::Service => Objective::Service,
            },
            precision: self.precision,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Divisible,
    Indivisible,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Utility,
    Service,
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    Er,
    Spectrum,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    setting: SettingArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    n: u32,
    /// Trust probability (ER social graph).
    #[arg(long, default_value_t = 0.2)]
    p_s: f64,
    /// Request probability (ER setting).
    #[arg(long, default_value_t = 0.2)]
    p_r: f64,
    /// Credit limits are uniform in 1..=N_S (spectrum setting).
    #[arg(long, default_value_t = 5)]
    n_s: u32,
    /// Request amounts are uniform in 1..=N_R (spectrum setting).
    #[arg(long, default_value_t = 5)]
    n_r: u32,
    /// Directed `u v` edge list used as the spectrum social graph.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision: u32,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_mechanism(s: &str) -> Result<Mechanism, String> {
    s.parse()
}

fn load(path: &Path, precision: u32) -> Result<Graph> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_instance(&text, precision).with_context(|| format!("parsing {}", path.display()))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn dec(v: Rational) -> Result<String> {
    Ok(format_decimal(v)?)
}

fn solution_text(graph: &Graph, s: &Solution, trace: bool) -> Result<String> {
    let mut out = write_flow(graph, &s.flow)?;
    writeln!(out, "utility={} service={} iterations={}", dec(s.utility)?, dec(s.total_service)?, s.iterations)?;
    if trace {
        for c in &s.cycles_used {
            writeln!(
                out,
                "cycle nodes={} weight={} rc={}",
                c.cycle.node_path(),
                dec(s.unscaled_weight(c))?,
                dec(s.unscaled_value(c))?
            )?;
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve { instance, opts, trace, output } => {
            let graph = load(&instance, opts.precision)?;
            let solution = solve(&graph, opts.options())?;
            emit(output.as_deref(), &solution_text(&graph, &solution, trace)?)?;
        }
        Command::Feasibility { instance, precision, output } => {
            let graph = load(&instance, precision)?;
            emit(output.as_deref(), &feasibility_text(&graph, precision)?)?;
        }
        Command::Decompose { instance, flow, precision, output } => {
            let graph = load(&instance, precision)?;
            let text = fs::read_to_string(&flow).with_context(|| format!("reading {}", flow.display()))?;
            let f = parse_flow(&graph, &text, precision)?;
            let mut out = String::new();
            for c in decompose_circulation(&graph, &f)? {
                writeln!(out, "cycle value={} class={} path={}", dec(c.value)?, classify_cycle(&c), c.path())?;
            }
            emit(output.as_deref(), &out)?;
        }
        Command::Benchmark { instance, mechanism, opts, output } => {
            let graph = load(&instance, opts.precision)?;
            let result = run_mechanism(&graph, mechanism, opts.options())?;
            let mut out = solution_text(&graph, &result.solution, false)?;
            writeln!(out, "mechanism={} exactness={}", result.mechanism, result.exactness)?;
            emit(output.as_deref(), &out)?;
        }
        Command::OracleCheck { instance, precision } => {
            let graph = load(&instance, precision)?;
            let (text, matched) = oracle_text(&graph, precision)?;
            emit(None, &text)?;
            if !matched {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Simulate { config, jobs } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            // Relative paths in the config are relative to the config file.
            let base = config.parent().unwrap_or(Path::new("."));
            for p in [&mut cfg.output, &mut cfg.per_user_output, &mut cfg.dataset, &mut cfg.instance].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            let result = run_experiment(&cfg, jobs)?;
            if !result.failures.is_empty() {
                log::warn!("{} replications failed and were left out of the means", result.failures.len());
            }
            emit(cfg.output.as_deref(), &result.table.to_csv()?)?;
            if let Some(path) = &cfg.per_user_output {
                emit(Some(path), &per_user_csv(&result.per_user)?)?;
            }
        }
        Command::Generate(args) => {
            let graph = generate(&args)?;
            emit(args.output.as_deref(), &write_instance(&graph)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Feasibility on the integer-scaled, provider-split instance, reported in original units.
fn feasibility_text(graph: &Graph, precision: u32) -> Result<String> {
    let (split, _) = split_provider_capacity(graph);
    let (scaled, scaling) = scale_to_integral(&split, ServiceMode::Divisible, precision)?;
    let res = all_requests_satisfiable(&scaled);
    let mut out = String::new();
    writeln!(out, "satisfiable {}", res.satisfiable)?;
    writeln!(out, "P {}", dec(scaling.unscale_amount(res.total_imbalance))?)?;
    writeln!(out, "maxflow {}", dec(scaling.unscale_amount(res.max_flow_value))?)?;
    if let Some(w) = res.witness {
        let flow = Flow {
            request: w.request[..graph.requests().len()].iter().map(|&v| scaling.unscale_amount(v)).collect(),
            social: w.social.iter().map(|&v| scaling.unscale_amount(v)).collect(),
        };
        out.push_str(&write_flow(graph, &flow)?);
    }
    Ok(out)
}

fn oracle_text(graph: &Graph, precision: u32) -> Result<(String, bool)> {
    let (scaled, scaling) = scale_to_integral(graph, ServiceMode::Divisible, precision)?;
    let limits = SmallInstanceLimits::default();
    let oracle_opt = scaling.unscale_utility(brute_force_optimum(&scaled, &limits)?);
    let oracle_feasible = brute_force_feasible(&scaled, &limits)?;
    let solver_opt = solve(graph, SolveOptions::default())?.utility;
    let (split, _) = split_provider_capacity(&scaled);
    let solver_feasible = all_requests_satisfiable(&split).satisfiable;

    let matched = oracle_opt == solver_opt && oracle_feasible == solver_feasible;
    let mut out = String::new();
    writeln!(out, "oracle_optimum {}", dec(oracle_opt)?)?;
    writeln!(out, "solver_optimum {}", dec(solver_opt)?)?;
    writeln!(out, "oracle_feasible {oracle_feasible}")?;
    writeln!(out, "solver_feasible {solver_feasible}")?;
    writeln!(out, "{}", if matched { "MATCH" } else { "MISMATCH" })?;
    Ok((out, matched))
}

fn generate(args: &GenerateArgs) -> Result<Graph> {
    match args.setting {
        SettingArg::Er => {
            if args.dataset.is_some() {
                bail!("--dataset applies to the spectrum setting only");
            }
            let params =
                ErParams { n: args.n, p_s: args.p_s, p_r: args.p_r, seed: args.seed, precision: args.precision, ..Default::default() };
            Ok(gen_er_instance(&params)?)
        }
        SettingArg::Spectrum => {
            let params = SpectrumParams {
                n: args.n as usize,
                n_s: args.n_s,
                n_r: args.n_r,
                seed: args.seed,
                precision: args.precision,
                ..Default::default()
            };
            let social = match &args.dataset {
                Some(path) => {
                    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
                    let mut rng = dataset_rng(args.seed);
                    load_social_edge_list(BufReader::new(file), params.n, params.n_s, &mut rng)?
                }
                None => gen_er_social(args.n, args.p_s, args.n_s, args.seed)?,
            };
            Ok(gen_spectrum_instance(&params, &social)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
