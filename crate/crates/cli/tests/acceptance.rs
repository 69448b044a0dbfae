//! End-to-end acceptance checks. Prints one `criterion N: PASS|FAIL - detail`
//! line per criterion and exits nonzero if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use star_core::benchmarks::{solve_rp, solve_st, Mechanism};
use star_core::decomposition::{decompose_circulation, verify_decomposition, CycleFlow};
use star_core::experiment::{run_experiment, ExperimentConfig, MetricsTable};
use star_core::feasibility::all_requests_satisfiable;
use star_core::graph::{validate_flow, GraphBuilder};
use star_core::instance::write_instance;
use star_core::oracle::{brute_force_feasible, brute_force_optimum, SmallInstanceLimits};
use star_core::simgen::{derive_seed, gen_er_instance, gen_er_social, gen_spectrum_instance, ErParams, SpectrumParams};
use star_core::solver::{solve_max_service, solve_max_utility, Objective, Solution, SolveOptions};
use star_core::transforms::{to_rational, ServiceMode};
use star_core::{Graph, IntGraph, Rational};

type Outcome = Result<String, String>;

const MASTER_SEED: u64 = 20_240_601;

fn q(n: i64) -> Rational {
    Rational::from_integer(n)
}

fn opts(mode: ServiceMode, objective: Objective) -> SolveOptions {
    SolveOptions { mode, objective, ..Default::default() }
}

/// Every cycle-canceling solve passes through here so the progress criterion sees all of them.
#[derive(Default)]
struct Progress {
    solves: usize,
    violations: Vec<String>,
    worst_ratio: f64,
}

impl Progress {
    fn record(&mut self, label: &str, s: &Solution) {
        self.solves += 1;
        if !s.utility_trace.windows(2).all(|w| w[1] > w[0]) || s.utility_trace.first().is_some_and(|&u| u <= 0) {
            self.violations.push(format!("{label}: utility trace not strictly increasing"));
        }
        if s.iterations != s.utility_trace.len() || s.iterations as u128 > s.iteration_bound {
            self.violations.push(format!("{label}: {} iterations, bound {}", s.iterations, s.iteration_bound));
        }
        if s.iteration_bound > 0 {
            self.worst_ratio = self.worst_ratio.max(s.iterations as f64 / s.iteration_bound as f64);
        }
    }
}

/// Decompositions gathered for the round-trip criterion.
#[derive(Default)]
struct RoundTrips {
    checked: usize,
    failures: Vec<String>,
}

impl RoundTrips {
    fn check(&mut self, label: &str, graph: &Graph, s: &Solution) {
        self.checked += 1;
        let result = decompose_circulation(graph, &s.flow)
            .map_err(|e| e.to_string())
            .and_then(|cycles| verify_decomposition(graph, &s.flow, &cycles));
        if let Err(e) = result {
            self.failures.push(format!("{label}: {e}"));
        }
    }
}

/// Random integer instance: each ordered pair gets a credit arc and a request with probability 1/2.
fn small_instance(rng: &mut ChaCha8Rng) -> IntGraph {
    let n = rng.random_range(2..=5u32);
    let mut b = GraphBuilder::with_nodes(n);
    let mut credit = std::collections::BTreeMap::new();
    for a in 1..=n {
        for c in (1..=n).filter(|&c| c != a) {
            if rng.random_bool(0.5) {
                credit.insert((a, c), rng.random_range(1..=3i64));
            }
            if rng.random_bool(0.5) {
                b = b.request(a, c, rng.random_range(1..=3i64), rng.random_range(0..=3i64));
            }
        }
    }
    for (&(a, c), &cap) in &credit {
        if a < c {
            b = b.social(a, c, cap, credit.get(&(c, a)).copied().unwrap_or(0));
        } else if !credit.contains_key(&(c, a)) {
            b = b.social(c, a, 0, cap);
        }
    }
    b.build().expect("generated instance is valid")
}

fn small_instances() -> Vec<IntGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    (0..200).map(|_| small_instance(&mut rng)).collect()
}

fn default_er_instances() -> Vec<Graph> {
    (0..100)
        .map(|r| gen_er_instance(&ErParams { seed: derive_seed(MASTER_SEED, r), ..Default::default() }).unwrap())
        .collect()
}

fn g1() -> Graph {
    to_rational(
        &GraphBuilder::with_nodes(4)
            .request(1, 2, 1i64, 1)
            .request(4, 3, 1, 1)
            .social(1, 3, 0, 1)
            .social(2, 4, 1, 0)
            .build()
            .unwrap(),
    )
}

fn criterion_1(instances: &[IntGraph], progress: &mut Progress, trips: &mut RoundTrips) -> Outcome {
    let start = Instant::now();
    let limits = SmallInstanceLimits::default();
    for (k, g) in instances.iter().enumerate() {
        let best = brute_force_optimum(g, &limits).map_err(|e| format!("instance {k}: {e}"))?;
        let graph = to_rational(g);
        for mode in [ServiceMode::Divisible, ServiceMode::Indivisible] {
            let s = solve_max_utility(&graph, opts(mode, Objective::Utility)).map_err(|e| e.to_string())?;
            progress.record(&format!("small {k} {mode}"), &s);
            trips.check(&format!("small {k} {mode}"), &graph, &s);
            if s.utility != q(best) {
                return Err(format!("instance {k} ({mode}): solver {} vs oracle {best}", s.utility));
            }
        }
    }
    Ok(format!("{} instances, both modes match the oracle, {:.2?}", instances.len(), start.elapsed()))
}

fn criterion_2(instances: &[IntGraph]) -> Outcome {
    let limits = SmallInstanceLimits::default();
    let mut satisfiable = 0;
    for (k, g) in instances.iter().enumerate() {
        let expected = brute_force_feasible(g, &limits).map_err(|e| format!("instance {k}: {e}"))?;
        let res = all_requests_satisfiable(g);
        if res.satisfiable != expected {
            return Err(format!("instance {k}: max-flow says {}, oracle says {expected}", res.satisfiable));
        }
        if let Some(w) = &res.witness {
            satisfiable += 1;
            let ok = validate_flow(g, w).map(|r| r.is_circulation()).unwrap_or(false)
                && g.requests().iter().zip(&w.request).all(|(e, f)| *f == e.capacity);
            if !ok {
                return Err(format!("instance {k}: witness is not a saturating circulation"));
            }
        } else if res.satisfiable {
            return Err(format!("instance {k}: satisfiable without a witness"));
        }
    }
    Ok(format!("{} instances agree, {satisfiable} satisfiable with valid witnesses", instances.len()))
}

fn criterion_3(progress: &mut Progress, trips: &mut RoundTrips) -> Outcome {
    let g = g1();
    let service = solve_max_service(&g, SolveOptions::default()).map_err(|e| e.to_string())?;
    let utility = solve_max_utility(&g, SolveOptions::default()).map_err(|e| e.to_string())?;
    let rp = solve_rp(&g, SolveOptions::default()).map_err(|e| e.to_string())?;
    let st = solve_st(&g, SolveOptions::default()).map_err(|e| e.to_string())?;
    for (label, s) in [("g1 service", &service), ("g1 utility", &utility), ("g1 rp", &rp.solution)] {
        progress.record(label, s);
        trips.check(label, &g, s);
    }
    let oracle = brute_force_optimum(
        &GraphBuilder::with_nodes(4)
            .request(1, 2, 1i64, 1)
            .request(4, 3, 1, 1)
            .social(1, 3, 0, 1)
            .social(2, 4, 1, 0)
            .build()
            .unwrap(),
        &SmallInstanceLimits::default(),
    )
    .map_err(|e| e.to_string())?;
    let got = (service.total_service, utility.utility, rp.solution.utility, st.solution.utility);
    if got != (q(2), q(2), q(0), q(0)) || oracle != 2 {
        return Err(format!("service/utility/rp/st = {got:?}, oracle {oracle}"));
    }
    Ok("STAR service 2, utility 2 (oracle 2); RP 0; ST 0".into())
}

fn criterion_4(er: &[Graph], progress: &mut Progress, trips: &mut RoundTrips) -> Outcome {
    for (k, g) in er.iter().enumerate() {
        let s = solve_max_utility(g, SolveOptions::default()).map_err(|e| e.to_string())?;
        progress.record(&format!("er {k}"), &s);
        trips.check(&format!("er {k}"), g, &s);
    }
    if trips.failures.is_empty() {
        Ok(format!("{} decompositions aggregate exactly to their flows", trips.checked))
    } else {
        Err(format!("{} of {} failed, first: {}", trips.failures.len(), trips.checked, trips.failures[0]))
    }
}

fn criterion_5(progress: &Progress) -> Outcome {
    if progress.violations.is_empty() {
        Ok(format!(
            "{} solves strictly increasing and within bound, max iterations/bound {:.2e}",
            progress.solves, progress.worst_ratio
        ))
    } else {
        Err(format!("{} violations, first: {}", progress.violations.len(), progress.violations[0]))
    }
}

fn criterion_6(er: &[Graph], progress: &mut Progress) -> Outcome {
    let start = Instant::now();
    let mut gains = 0;
    for (k, g) in er.iter().enumerate() {
        let star = solve_max_utility(g, SolveOptions::default()).map_err(|e| e.to_string())?;
        let rp = solve_rp(g, SolveOptions::default()).map_err(|e| e.to_string())?;
        let st = solve_st(g, SolveOptions::default()).map_err(|e| e.to_string())?;
        progress.record(&format!("er {k} rp"), &rp.solution);
        if star.utility < st.solution.utility || star.utility < rp.solution.utility {
            return Err(format!(
                "instance {k}: star {} st {} rp {}",
                star.utility, st.solution.utility, rp.solution.utility
            ));
        }
        if rp.solution.flow.social.iter().any(|v| *v != q(0)) {
            return Err(format!("instance {k}: RP uses social credit"));
        }
        let singles = st.cycles.iter().all(|c: &CycleFlow<Rational>| c.request_count() == 1);
        if !singles || verify_decomposition(g, &st.solution.flow, &st.cycles).is_err() {
            return Err(format!("instance {k}: ST cycles are not single-request or do not aggregate"));
        }
        gains += usize::from(star.utility > st.solution.utility.max(rp.solution.utility));
    }
    Ok(format!("{} instances, STAR strictly ahead on {gains}, {:.2?}", er.len(), start.elapsed()))
}

fn metric(table: &MetricsTable, value: &str, mechanism: Mechanism, name: &str) -> Result<(f64, f64), String> {
    let row = table.get(value, mechanism, name).ok_or_else(|| format!("missing {name} for {mechanism} at {value}"))?;
    Ok((row.mean.ok_or_else(|| format!("{name} at {value} has no mean"))?, row.stderr.unwrap_or(0.0)))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let values = ["0.1", "0.2", "0.3", "0.4", "0.5"];
    let config = ExperimentConfig::parse(&format!(
        "setting = er\nsweep = p_s\nvalues = {}\nreplications = 50\nmechanisms = star,rp\nobjective = service\nseed = {MASTER_SEED}\n",
        values.join(",")
    ))
    .map_err(|e| e.to_string())?;
    let er = run_experiment(&config, None).map_err(|e| e.to_string())?;
    let mut trend = Vec::new();
    for v in values {
        trend.push(metric(&er.table, v, Mechanism::Star, "normalized_service")?);
    }
    let trend_text: Vec<String> = trend.iter().map(|(m, s)| format!("{m:.3}±{s:.3}")).collect();
    if let Some((k, _)) = trend.iter().enumerate().find(|(_, (m, _))| *m <= 1.0) {
        return Err(format!("normalized service {} at P_S={}", trend_text[k], values[k]));
    }
    for k in 1..trend.len() {
        let ((a, sa), (b, sb)) = (trend[k - 1], trend[k]);
        if b < a - (sa * sa + sb * sb).sqrt() {
            return Err(format!("trend drops at P_S={}: {}", values[k], trend_text.join(" ")));
        }
    }

    let sizes = ["10", "20", "30"];
    let config = ExperimentConfig::parse(&format!(
        "setting = spectrum\nsweep = n\nvalues = {}\nreplications = 50\nmechanisms = star,st,rp\nobjective = utility\nseed = {MASTER_SEED}\n",
        sizes.join(",")
    ))
    .map_err(|e| e.to_string())?;
    let spectrum = run_experiment(&config, None).map_err(|e| e.to_string())?;
    let mut gains = Vec::new();
    for n in sizes {
        let star = metric(&spectrum.table, n, Mechanism::Star, "total_utility")?.0;
        let best = metric(&spectrum.table, n, Mechanism::St, "total_utility")?
            .0
            .max(metric(&spectrum.table, n, Mechanism::Rp, "total_utility")?.0);
        if star <= best {
            return Err(format!("N={n}: STAR {star:.4} does not beat {best:.4}"));
        }
        gains.push(if best > 0.0 { 100.0 * (star - best) / best } else { f64::INFINITY });
    }
    let band = gains.iter().cloned().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g), hi.max(g)));
    Ok(format!(
        "normalized service {}; spectrum gain over best benchmark {:.1}%..{:.1}%, {:.2?}",
        trend_text.join(" "),
        band.0,
        band.1,
        start.elapsed()
    ))
}

fn criterion_8(progress: &mut Progress) -> Outcome {
    let replications = 20u64;
    let mut points = Vec::new();
    let mut worst = 0f64;
    for n in [10usize, 20, 30, 40, 50] {
        let mut total = 0usize;
        for r in 0..replications {
            let seed = derive_seed(MASTER_SEED, r);
            let social = gen_er_social(n as u32, 0.2, 5, seed).map_err(|e| e.to_string())?;
            let params = SpectrumParams { n, n_s: 5, n_r: 5, seed, ..Default::default() };
            let g = gen_spectrum_instance(&params, &social).map_err(|e| e.to_string())?;
            let s = solve_max_utility(&g, opts(ServiceMode::Indivisible, Objective::Utility)).map_err(|e| e.to_string())?;
            progress.record(&format!("spectrum n={n} rep {r}"), &s);
            if s.iterations as u128 > s.iteration_bound {
                return Err(format!("N={n} rep {r}: {} iterations above bound {}", s.iterations, s.iteration_bound));
            }
            worst = worst.max(s.iterations as f64 / s.iteration_bound.max(1) as f64);
            total += s.iterations;
        }
        points.push((n as f64, total as f64 / replications as f64));
    }
    if points.iter().any(|&(_, m)| m <= 0.0) {
        return Err(format!("no iterations at some size: {points:?}"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(n, m)| (n.ln(), m.ln())).collect();
    let k = logs.len() as f64;
    let (mx, my) = (logs.iter().map(|p| p.0).sum::<f64>() / k, logs.iter().map(|p| p.1).sum::<f64>() / k);
    let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let means: Vec<String> = points.iter().map(|(n, m)| format!("N={n}:{m:.1}")).collect();
    let detail = format!("mean iterations {}; log-log slope {slope:.2}; max iterations/bound {worst:.2e}", means.join(" "));
    if slope < 2.5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_star"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| format!("cannot run star: {e}"))?;
    if !out.status.success() {
        return Err(format!("star {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path();
    std::fs::write(path.join("g1.txt"), write_instance(&g1()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    std::fs::write(
        path.join("sweep.cfg"),
        "setting = er\nsweep = p_s\nvalues = 0.1,0.3\nreplications = 4\nseed = 5\noutput = sweep.csv\n",
    )
    .map_err(|e| e.to_string())?;

    let steps: Vec<(Vec<&str>, Option<&str>)> = vec![
        (vec!["generate", "er", "--seed", "7", "-o", "er.txt"], Some("er.txt")),
        (vec!["generate", "spectrum", "--seed", "7", "--n", "12", "-o", "sp.txt"], Some("sp.txt")),
        (vec!["solve", "er.txt", "--trace", "-o", "er.flow"], Some("er.flow")),
        (vec!["solve", "sp.txt", "--mode", "indivisible", "--objective", "service"], None),
        (vec!["feasibility", "er.txt", "-o", "er.feas"], Some("er.feas")),
        (vec!["decompose", "er.txt", "er.flow", "-o", "er.cycles"], Some("er.cycles")),
        (vec!["benchmark", "er.txt", "--mechanism", "st"], None),
        (vec!["benchmark", "sp.txt", "--mechanism", "rp"], None),
        (vec!["oracle-check", "g1.txt"], None),
        (vec!["simulate", "--config", "sweep.cfg", "--jobs", "2"], Some("sweep.csv")),
    ];
    for (args, file) in &steps {
        let mut runs = Vec::new();
        for _ in 0..2 {
            let stdout = run_cli(path, args)?;
            let written = match file {
                Some(f) => std::fs::read(path.join(f)).map_err(|e| format!("{f}: {e}"))?,
                None => Vec::new(),
            };
            runs.push((stdout, written));
        }
        if runs[0] != runs[1] {
            return Err(format!("star {} differs between runs", args.join(" ")));
        }
        if runs[0].0.is_empty() && runs[0].1.is_empty() {
            return Err(format!("star {} produced no output", args.join(" ")));
        }
    }
    Ok(format!("{} invocations byte-identical across repeated runs", steps.len()))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let instances = small_instances();
    let er = default_er_instances();
    let mut progress = Progress::default();
    let mut trips = RoundTrips::default();

    let mut results: Vec<(u32, Outcome)> = vec![
        (1, criterion_1(&instances, &mut progress, &mut trips)),
        (2, criterion_2(&instances)),
        (3, criterion_3(&mut progress, &mut trips)),
        (4, criterion_4(&er, &mut progress, &mut trips)),
        (6, criterion_6(&er, &mut progress)),
        (7, criterion_7()),
        (8, criterion_8(&mut progress)),
        (9, criterion_9()),
    ];
    results.push((5, criterion_5(&progress)));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS - {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL - {detail}");
            }
        }
    }
    println!("acceptance: {} of {} passed in {:.2?}", results.len() - failed, results.len(), started.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
