//! Command-line driver: single recoveries, study runs, component estimation,
//! and a quick self-test battery.

use super::{
    format_supports, run_single_recovery, run_study, ExperimentConfig, RecoverySetup,
};
use crate::components::{estimate_bivariate, estimate_net_marginal, estimate_univariate};
use crate::learn::{Algorithm, ConstantsConfig, PlanOverrides};
use crate::model::{
    anova_canonicalize, build_model, default_params, BoundedGenerator, ModelConfig, NoiseModel,
    QueryOracle,
};
use crate::recovery::VectorSolver;
use crate::seeds::rng_from;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "sparse-interactions",
    version,
    about = "Structure learning for sparse additive models with pairwise interactions from point queries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AlgorithmArg {
    #[value(name = "alg1_2")]
    Alg12,
    #[value(name = "alg3")]
    Alg3,
    #[value(name = "alg4")]
    Alg4,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Algorithm {
        match a {
            AlgorithmArg::Alg12 => Algorithm::GradientProbe,
            AlgorithmArg::Alg3 => Algorithm::HessianRows,
            AlgorithmArg::Alg4 => Algorithm::HessianSketch,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolverArg {
    Iht,
    L1,
}

impl From<SolverArg> for VectorSolver {
    fn from(s: SolverArg) -> VectorSolver {
        match s {
            SolverArg::Iht => VectorSolver::Iht,
            SolverArg::L1 => VectorSolver::L1Equality,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Builtin model name (f1/f2/f3 x nonoverlap/overlap, k_family_*, rho_family).
    #[arg(long)]
    model: String,
    #[arg(long)]
    d: usize,
    /// Block count for the scaling families.
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file with a constants block (d1, d2, b3, lambda1, lambda2, ...).
    #[arg(long)]
    constants: Option<PathBuf>,
}

impl ModelArgs {
    fn to_config(&self) -> Result<ModelConfig, String> {
        let constants: Option<ConstantsConfig> = match &self.constants {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                Some(serde_json::from_str(&text).map_err(|e| format!("bad constants json: {e}"))?)
            }
            None => None,
        };
        Ok(ModelConfig {
            builtin: Some(self.model.clone()),
            d: self.d,
            t: self.t,
            seed: self.seed,
            custom: None,
            constants,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one structure recovery and print the identified supports.
    Recover {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "alg1_2")]
        algorithm: AlgorithmArg,
        #[arg(long, default_value_t = 3.8)]
        ctilde: f64,
        #[arg(long, default_value = "iht")]
        solver: SolverArg,
        /// Gaussian noise variance (omit for noiseless queries).
        #[arg(long)]
        sigma2: Option<f64>,
        /// Bounded noise magnitude (uniform draws).
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        n1: Option<usize>,
        #[arg(long)]
        n2: Option<usize>,
    },
    /// Run a Monte-Carlo study from a JSON config and write CSV.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate the component functions of a model given its supports.
    Components {
        #[command(flatten)]
        model: ModelArgs,
        /// Axis samples for univariate estimates.
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Per-axis samples for bivariate estimates.
        #[arg(long, default_value_t = 32)]
        n1: usize,
        #[arg(long)]
        sigma2: Option<f64>,
        /// Repetitions per query under noise.
        #[arg(long, default_value_t = 50)]
        resample: usize,
        /// Directory for serialized spline estimates.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant self-test battery.
    Selftest,
}

/// Entry point that returns an exit code instead of exiting, for tests.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli.command) {
        Ok(()) => 0,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn noise_from(sigma2: Option<f64>, eps: Option<f64>) -> NoiseModel {
    match (sigma2, eps) {
        (Some(s), _) if s > 0.0 => NoiseModel::Gaussian { sigma2: s },
        (_, Some(e)) if e > 0.0 => {
            NoiseModel::BoundedArbitrary { eps: e, generator: BoundedGenerator::Uniform }
        }
        _ => NoiseModel::Noiseless,
    }
}

fn run_command(cmd: Command) -> Result<(), String> {
    match cmd {
        Command::Recover { model, algorithm, ctilde, solver, sigma2, eps, n1, n2 } => {
            let mc = model.to_config()?;
            let spec = build_model(&mc).map_err(|e| e.to_string())?;
            let params = default_params(&mc, &spec).map_err(|e| e.to_string())?;
            let setup = RecoverySetup {
                model: &spec,
                params,
                algorithm: algorithm.into(),
                ctilde,
                noise: noise_from(sigma2, eps),
                overrides: PlanOverrides { n1, n2, solver: Some(solver.into()) },
            };
            let (result, plan) =
                run_single_recovery(&setup, model.seed).map_err(|e| e.to_string())?;
            let (s1, s2) = format_supports(&result.s1, &result.s2);
            println!(
                "model={} d={} algorithm={:?} ctilde={} seed={}",
                mc.builtin.as_deref().unwrap_or("custom"),
                mc.d,
                setup.algorithm,
                ctilde,
                model.seed
            );
            println!("S1 = {s1}");
            println!("S2 = {s2}");
            let phases = result
                .ledger
                .per_phase
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" ");
            println!("queries total={} {}", result.ledger.total, phases);
            println!(
                "plan m_v={} m_x={} m_x'={} mu={:.6} n1={} n2={}",
                plan.m_v, plan.m_x, plan.m_x_prime, plan.mu, plan.n1, plan.n2
            );
            let (t1, t2) = format_supports(&spec.canonical_supports().0, &spec.s2());
            println!("truth S1 = {t1}");
            println!("truth S2 = {t2}");
            Ok(())
        }
        Command::Experiment { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| format!("cannot read {}: {e}", config.display()))?;
            let cfg: ExperimentConfig =
                serde_json::from_str(&text).map_err(|e| format!("bad config: {e}"))?;
            let summary = run_study(&cfg).map_err(|e| e.to_string())?;
            println!("study={} cells={} trials={}", cfg.study.name(), summary.cells.len(), cfg.trials);
            for cell in &summary.cells {
                println!(
                    "d={} k={} rho_m={} ctilde={} sigma2={} success_rate={:.2} mean_queries={:.0}",
                    cell.d, cell.k, cell.rho_m, cell.ctilde, cell.sigma2, cell.success_rate,
                    cell.mean_queries
                );
            }
            println!("csv written to {}", summary.csv_path.display());
            Ok(())
        }
        Command::Components { model, n, n1, sigma2, resample, out } => {
            let mc = model.to_config()?;
            let spec = build_model(&mc).map_err(|e| e.to_string())?;
            let canon = anova_canonicalize(&spec, 256).map_err(|e| e.to_string())?;
            let noise = noise_from(sigma2, None);
            let reps = if matches!(noise, NoiseModel::Noiseless) { 1 } else { resample };
            let oracle = QueryOracle::new(&spec, noise, 0.1).map_err(|e| e.to_string())?;
            let mut rng = rng_from(model.seed, &[0xc11]);
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
            }
            println!("constant c = {:.6}", canon.c);
            let write_est = |name: String,
                             est: &crate::components::SplineEstimate|
             -> Result<(), String> {
                println!(
                    "{name}: arity={} samples={} centering_residual={:.3e}",
                    est.arity(),
                    est.n_samples(),
                    est.mean().abs()
                );
                if let Some(dir) = &out {
                    std::fs::write(dir.join(format!("{name}.txt")), est.to_text())
                        .map_err(|e| e.to_string())?;
                }
                Ok(())
            };
            let (s1, _) = spec.canonical_supports();
            for p in &s1 {
                let est = estimate_univariate(&oracle, *p, n, reps, &mut rng)
                    .map_err(|e| e.to_string())?;
                write_est(format!("phi_{}", p + 1), &est)?;
            }
            for (l, lp) in &spec.s2() {
                let degrees = (spec.degree(*l), spec.degree(*lp));
                let est = estimate_bivariate(&oracle, (*l, *lp), degrees, n1, reps, &mut rng)
                    .map_err(|e| e.to_string())?;
                write_est(format!("phi_{}_{}", l + 1, lp + 1), &est)?;
            }
            let s2v = spec.s2_var();
            for q in &s2v {
                if spec.degree(*q) > 1 {
                    let est = estimate_net_marginal(&oracle, *q, &s2v, n1, reps, &mut rng)
                        .map_err(|e| e.to_string())?;
                    write_est(format!("phi_net_{}", q + 1), &est)?;
                }
            }
            println!("queries total={}", oracle.ledger().total());
            Ok(())
        }
        Command::Selftest => selftest(),
    }
}

fn selftest() -> Result<(), String> {
    use crate::learn::cubic_roots_trig;
    use crate::sampling::{build_hash_family, sample_directions, DirectionKind};
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("{}: {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    let fam = build_hash_family(200, 1.7, &mut rng_from(1, &[1]));
    check("hash family coverage (d=200)", fam.map(|f| f.covers_all_pairs()).unwrap_or(false));

    let dirs = sample_directions(100, 200, DirectionKind::Ternary, &mut rng_from(1, &[2]));
    let zeros = dirs.rows().iter().filter(|&&v| v == 0.0).count() as f64 / 20_000.0;
    check("ternary zero fraction within band", (zeros - 2.0 / 3.0).abs() < 0.05);

    let roots_ok = cubic_roots_trig(-3.0, 1.0)
        .map(|r| r.iter().all(|&y| (y * y * y - 3.0 * y + 1.0).abs() < 1e-9))
        .unwrap_or(false);
    check("cubic roots residual", roots_ok);

    let plan_ok = {
        use crate::learn::{make_plan, ProblemParams};
        let p = ProblemParams {
            k: 6,
            rho_m: 1,
            b3: 6.0,
            d1: 2.0,
            d2: 3.0,
            lambda1: 0.3,
            lambda2: 1.0,
            c_rec: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            c1_hash: 1.7,
            b012: None,
        };
        let clean = make_plan(
            &p,
            100,
            &NoiseModel::Noiseless,
            Algorithm::GradientProbe,
            3.8,
            &PlanOverrides::default(),
        );
        let tiny = make_plan(
            &p,
            100,
            &NoiseModel::BoundedArbitrary { eps: 1e-12, generator: BoundedGenerator::Uniform },
            Algorithm::GradientProbe,
            3.8,
            &PlanOverrides::default(),
        );
        match (clean, tiny) {
            (Ok(a), Ok(b)) => (a.mu - b.mu).abs() < 1e-6 && a.check_admissible().is_ok(),
            _ => false,
        }
    };
    check("plan consistency as noise vanishes", plan_ok);

    let spline_ok = {
        use crate::components::quasi_interpolate_1d;
        let samples: Vec<(f64, f64)> =
            crate::components::uniform_grid(16).into_iter().map(|t| (t, 2.0 * t)).collect();
        quasi_interpolate_1d(&samples)
            .map(|e| (e.eval1(0.3) - 0.6).abs() < 1e-10)
            .unwrap_or(false)
    };
    check("spline reproduces linear", spline_ok);

    let recover_ok = {
        let mc = ModelConfig::builtin("f1_nonoverlap", 60, 3);
        let spec = build_model(&mc).unwrap();
        let params = default_params(&mc, &spec).unwrap();
        let setup = RecoverySetup {
            model: &spec,
            params,
            algorithm: Algorithm::GradientProbe,
            ctilde: 3.8,
            noise: NoiseModel::Noiseless,
            overrides: PlanOverrides::default(),
        };
        run_single_recovery(&setup, 3)
            .map(|(r, _)| {
                let (s1, s2) = spec.canonical_supports();
                r.s1 == s1 && r.s2 == s2
            })
            .unwrap_or(false)
    };
    check("end-to-end recovery (f1, d=60)", recover_ok);

    if failures == 0 {
        println!("selftest: all checks passed");
        Ok(())
    } else {
        Err(format!("selftest: {failures} check(s) failed"))
    }
}
