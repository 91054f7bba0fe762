use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mfmlmc::abc::{abc_rejection, AbcProblem};
use mfmlmc::bench::{estimate_marginal_density, fit_convergence, run_benchmark, MethodSpec};
use mfmlmc::config::{ObservationConfig, ProblemConfig};
use mfmlmc::io::{observations_to_csv, samples_to_csv, trajectory_to_csv, write_text};
use mfmlmc::mf::{mf_abc, ContinuationProbs, EtaMode, FidelityPair, TunerConfig};
use mfmlmc::mfmlmc::{mfmlmc_pipeline, tune_tau_sequence};
use mfmlmc::mlmc::{mlmc_pipeline, AllocationTarget, ThresholdSchedule};
use mfmlmc::models::{build_benchmark, BenchmarkId, Scale, CANONICAL_DATA_SEED};
use mfmlmc::network::ReactionNetwork;
use mfmlmc::rng::RngStream;
use mfmlmc::sim::{observe, simulate_exact, simulate_tau_leap};
use mfmlmc::{EstimatorReport, WeightedSample};

/// Likelihood-free Bayesian inference for stochastic reaction networks:
/// exact and tau-leaping simulation, ABC rejection, and multilevel /
/// multifidelity accelerations.
#[derive(Parser)]
#[command(name = "mfmlmc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a model forward and write the path (or its observations) as CSV.
    Simulate(SimulateArgs),
    /// Run one of the inference methods on a problem config.
    Infer(InferArgs),
    /// Sweep tau candidates with the adaptive multifidelity sampler.
    Tune(TuneArgs),
    /// Built-in benchmark models.
    Models(ModelsArgs),
    /// Method-comparison benchmark: variance versus cost with rate fits.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Free parameter values, comma separated.
    #[arg(long, value_delimiter = ',')]
    theta: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    /// Simulation horizon.
    #[arg(long = "T")]
    t_end: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Tau-leaping step; exact simulation when absent.
    #[arg(long)]
    tau: Option<f64>,
    /// Observation config (JSON: {"species": [...], "sigma": s, "times": [...]});
    /// when given, the CSV holds noisy observations instead of the path.
    #[arg(long = "obs-config")]
    obs_config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    /// Problem config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// rejection | mf | mlmc | mfmlmc
    #[arg(long)]
    method: String,
    /// Override the config's sample count.
    #[arg(long)]
    n: Option<usize>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,

    // multifidelity options
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    eta1: Option<f64>,
    #[arg(long)]
    eta2: Option<f64>,
    #[arg(long, default_value_t = false)]
    adaptive: bool,
    #[arg(long = "burn-in")]
    burn_in: Option<usize>,
    #[arg(long = "eta-min", default_value_t = mfmlmc::mf::DEFAULT_ETA_MIN)]
    eta_min: f64,

    // multilevel options
    #[arg(long)]
    eps1: Option<f64>,
    /// Target threshold; defaults to the config's epsilon.
    #[arg(long = "epsL")]
    eps_l: Option<f64>,
    /// Geometric scale factor between thresholds.
    #[arg(long)]
    m: Option<f64>,
    /// Number of levels.
    #[arg(long = "L")]
    levels: Option<usize>,
    #[arg(long = "trial-n", default_value_t = 200)]
    trial_n: usize,
    /// Target standard deviation of the estimate.
    #[arg(long = "target-h")]
    target_h: Option<f64>,
    /// Rescale the allocation so the last level draws this many samples.
    #[arg(long = "anchor-NL")]
    anchor_nl: Option<usize>,

    #[arg(long = "out-report")]
    out_report: Option<PathBuf>,
    #[arg(long = "out-samples")]
    out_samples: Option<PathBuf>,
    /// Per-level CSV (mlmc/mfmlmc).
    #[arg(long = "out-levels")]
    out_levels: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    config: PathBuf,
    /// Tau candidates, comma separated.
    #[arg(long, value_delimiter = ',')]
    taus: Vec<f64>,
    /// Threshold candidates; defaults to the config's epsilon.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long = "trial-n", default_value_t = 2000)]
    trial_n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelsArgs {
    #[command(subcommand)]
    command: ModelsCommand,
}

#[derive(Subcommand)]
enum ModelsCommand {
    /// Write model JSON, canonical data CSV, and a problem config.
    Export {
        /// michaelis_menten | repressilator | mapk2
        #[arg(long)]
        id: String,
        /// paper | desk
        #[arg(long, default_value = "desk")]
        scale: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = CANONICAL_DATA_SEED)]
        seed: u64,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark config (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    if let Ok(threads) = std::env::var("MFMLMC_THREADS") {
        let threads: usize = threads.parse().context("MFMLMC_THREADS must be an integer")?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().ok();
    }
    match Cli::parse().command {
        Command::Simulate(args) => simulate(args),
        Command::Infer(args) => infer(args),
        Command::Tune(args) => tune(args),
        Command::Models(args) => models(args),
        Command::Bench(args) => bench(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let network = ReactionNetwork::load(&args.model)?;
    let stream = RngStream::new(args.seed);
    let traj = match args.tau {
        Some(tau) => {
            simulate_tau_leap(&network, &args.theta, args.t0, args.t_end, tau, &stream.derive(1))?
        }
        None => simulate_exact(&network, &args.theta, args.t0, args.t_end, &stream.derive(1))?,
    };
    let csv = match &args.obs_config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let cfg: ObservationConfig = serde_json::from_str(&text)?;
            let obs_model = cfg.resolve(&network)?;
            let obs = observe(&traj, &obs_model, &stream.derive(2))?;
            observations_to_csv(&obs, &obs_model, &network.species)
        }
        None => trajectory_to_csv(&traj, &network.species),
    };
    write_text(&args.out, &csv)?;
    eprintln!(
        "wrote {} ({} snapshots, cost {:.3e} work / {:.3}s)",
        args.out.display(),
        traj.len(),
        traj.cost.work,
        traj.cost.seconds
    );
    Ok(())
}

fn parse_taus(raw: &Option<String>, levels: usize) -> Result<Vec<f64>> {
    let Some(raw) = raw else { bail!("--tau is required for this method") };
    let taus: Vec<f64> = raw
        .split(',')
        .map(|t| t.trim().parse::<f64>().context("bad tau value"))
        .collect::<Result<_>>()?;
    if taus.len() == 1 {
        Ok(vec![taus[0]; levels])
    } else if taus.len() == levels {
        Ok(taus)
    } else {
        bail!("expected one tau or one per level ({levels})")
    }
}

fn schedule_from(args: &InferArgs, problem: &AbcProblem) -> Result<ThresholdSchedule> {
    let eps_l = args.eps_l.unwrap_or(problem.epsilon);
    let eps1 = args.eps1.context("--eps1 is required for multilevel methods")?;
    Ok(match (args.levels, args.m) {
        (Some(levels), None) => ThresholdSchedule::geometric(eps1, eps_l, levels)?,
        (None, Some(m)) => ThresholdSchedule::from_scale_factor(eps1, eps_l, m)?,
        (None, None) => ThresholdSchedule::auto(eps1, eps_l)?,
        (Some(_), Some(_)) => bail!("give either --L or --m, not both"),
    })
}

fn allocation_target(args: &InferArgs) -> Result<AllocationTarget> {
    match (args.target_h, args.anchor_nl) {
        (Some(h), None) => Ok(AllocationTarget::StdDev(h)),
        (None, Some(n)) => Ok(AllocationTarget::AnchorLast(n)),
        (None, None) => bail!("give --target-h or --anchor-NL"),
        (Some(_), Some(_)) => bail!("give either --target-h or --anchor-NL, not both"),
    }
}

fn levels_csv(report: &EstimatorReport) -> String {
    let mut out =
        String::from("level,epsilon,n_samples,contribution,mean_weight,cost,eta1,eta2,phi_hat\n");
    for l in &report.per_level {
        let (e1, e2) = l.eta.map_or((String::new(), String::new()), |(a, b)| {
            (format!("{a}"), format!("{b}"))
        });
        let phi = l.phi_hat.map_or(String::new(), |p| format!("{p}"));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            l.level, l.epsilon, l.n_samples, l.contribution, l.mean_weight, l.cost, e1, e2, phi
        ));
    }
    out
}

fn write_outputs(
    args: &InferArgs,
    report: &EstimatorReport,
    samples: Option<&[WeightedSample]>,
) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(report)?);
    if let Some(path) = &args.out_report {
        write_text(path, &serde_json::to_string_pretty(report)?)?;
    }
    if let (Some(path), Some(samples)) = (&args.out_samples, samples) {
        write_text(path, &samples_to_csv(samples))?;
    }
    if let Some(path) = &args.out_levels {
        write_text(path, &levels_csv(report))?;
    }
    Ok(())
}

fn infer(args: InferArgs) -> Result<()> {
    let (cfg, problem) = ProblemConfig::load(&args.config)?;
    let n = args.n.unwrap_or(cfg.n);
    let seed = args.seed.unwrap_or(cfg.seed);
    let stream = RngStream::new(seed);
    let target = cfg.f;
    let f = move |theta: &[f64]| target.eval(theta);

    match args.method.as_str() {
        "rejection" => {
            let (report, samples) = abc_rejection(&problem, &f, n, &stream)?;
            write_outputs(&args, &report, Some(&samples))?;
        }
        "mf" => {
            let taus = parse_taus(&args.tau, 1)?;
            let pair = FidelityPair::symmetric(taus[0], problem.epsilon);
            let tuner =
                TunerConfig { burn_in: args.burn_in, eta_min: args.eta_min, ..Default::default() };
            let eta = match (args.adaptive, args.eta1, args.eta2) {
                (true, None, None) => EtaMode::Adaptive(tuner),
                (false, Some(e1), Some(e2)) => EtaMode::Fixed(ContinuationProbs::new(e1, e2)?),
                _ => bail!("give --eta1/--eta2 or --adaptive"),
            };
            let (report, samples, info) = mf_abc(&problem, &pair, eta, &f, n, &stream)?;
            eprintln!("final eta = ({:.4}, {:.4})", info.eta_final.eta1, info.eta_final.eta2);
            write_outputs(&args, &report, Some(&samples))?;
        }
        "mlmc" => {
            let schedule = schedule_from(&args, &problem)?;
            let target = allocation_target(&args)?;
            let (report, samples) =
                mlmc_pipeline(&problem, &schedule, args.trial_n, target, &f, &stream)?;
            let flat: Vec<WeightedSample> = samples.into_iter().flatten().collect();
            write_outputs(&args, &report, Some(&flat))?;
        }
        "mfmlmc" => {
            let schedule = schedule_from(&args, &problem)?;
            let target = allocation_target(&args)?;
            let taus = parse_taus(&args.tau, schedule.len())?;
            let tuner =
                TunerConfig { burn_in: args.burn_in, eta_min: args.eta_min, ..Default::default() };
            let (report, samples) = mfmlmc_pipeline(
                &problem,
                &schedule,
                &taus,
                args.trial_n,
                target,
                tuner,
                &f,
                &stream,
            )?;
            let flat: Vec<WeightedSample> = samples.into_iter().flatten().collect();
            write_outputs(&args, &report, Some(&flat))?;
        }
        other => bail!("unknown method: {other}"),
    }
    Ok(())
}

fn tune(args: TuneArgs) -> Result<()> {
    let (cfg, problem) = ProblemConfig::load(&args.config)?;
    let epsilons = args.epsilons.unwrap_or_else(|| vec![problem.epsilon]);
    let seed = args.seed.unwrap_or(cfg.seed);
    let target = cfg.f;
    let f = move |theta: &[f64]| target.eval(theta);
    let sweep = tune_tau_sequence(
        &problem,
        &args.taus,
        &epsilons,
        args.trial_n,
        TunerConfig::default(),
        &f,
        &RngStream::new(seed),
    )?;
    let mut out = String::from("epsilon,tau,total_cost,eta1,eta2\n");
    for (i, &eps) in sweep.epsilons.iter().enumerate() {
        for (j, &tau) in sweep.taus.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                eps, tau, sweep.cost[i][j], sweep.eta[i][j].0, sweep.eta[i][j].1
            ));
        }
    }
    write_text(&args.out, &out)?;
    for (eps, tau) in sweep.epsilons.iter().zip(&sweep.per_epsilon) {
        eprintln!("eps {eps}: best tau {tau}");
    }
    eprintln!("shared recommendation: tau = {}", sweep.shared);
    Ok(())
}

fn models(args: ModelsArgs) -> Result<()> {
    match args.command {
        ModelsCommand::Export { id, scale, out, seed } => {
            let bench = build_benchmark(BenchmarkId::parse(&id)?, Scale::parse(&scale)?);
            std::fs::create_dir_all(&out)?;
            bench.network.save(&out.join("model.json"))?;
            let data = bench.generate_data(seed)?;
            write_text(
                &out.join("data.csv"),
                &observations_to_csv(&data, &bench.obs_model, &bench.network.species),
            )?;
            let problem = ProblemConfig {
                model: "model.json".into(),
                data: "data.csv".into(),
                observation: ObservationConfig::from_model(&bench.obs_model, &bench.network),
                prior: bench.prior.bounds.clone(),
                epsilon: bench.default_target_eps(),
                f: bench.default_target(),
                seed,
                n: 500,
                cost: Default::default(),
            };
            problem.save(&out.join("problem.json"))?;
            eprintln!("exported {} ({}) to {}", id, scale, out.display());
            Ok(())
        }
    }
}

// --- bench config ---

#[derive(serde::Deserialize)]
struct BenchConfigFile {
    problem: String,
    replicates: usize,
    seed: u64,
    methods: Vec<BenchMethodFile>,
    #[serde(default)]
    density: Option<DensityFile>,
}

#[derive(serde::Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
enum BenchMethodFile {
    Rejection { ref_variance: f64, target_h2: Vec<f64> },
    Mf { tau: f64, ref_variance: f64, target_h2: Vec<f64> },
    Mlmc { eps1: f64, m: Option<f64>, levels: Option<usize>, trial_n: usize, target_h2: Vec<f64> },
    Mfmlmc {
        eps1: f64,
        m: Option<f64>,
        levels: Option<usize>,
        taus: Vec<f64>,
        trial_n: usize,
        target_h2: Vec<f64>,
    },
}

#[derive(serde::Deserialize)]
struct DensityFile {
    dims: Vec<usize>,
    #[serde(default = "default_bins")]
    bins: usize,
    n: usize,
}

fn default_bins() -> usize {
    50
}

fn schedule_for(
    eps1: f64,
    eps_l: f64,
    m: Option<f64>,
    levels: Option<usize>,
) -> Result<ThresholdSchedule> {
    Ok(match (levels, m) {
        (Some(levels), None) => ThresholdSchedule::geometric(eps1, eps_l, levels)?,
        (None, Some(m)) => ThresholdSchedule::from_scale_factor(eps1, eps_l, m)?,
        (None, None) => ThresholdSchedule::auto(eps1, eps_l)?,
        _ => bail!("give either levels or m"),
    })
}

fn bench(args: BenchArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)?;
    let cfg: BenchConfigFile = serde_json::from_str(&text)?;
    let dir = args.config.parent().unwrap_or_else(|| std::path::Path::new("."));
    let (pcfg, problem) = ProblemConfig::load(&dir.join(&cfg.problem))?;
    let target = pcfg.f;
    let f = move |theta: &[f64]| target.eval(theta);

    std::fs::create_dir_all(&args.out)?;
    let mut runs_csv =
        String::from("method,h2,replicate,estimate,variance_estimate,cost,tuning_cost\n");
    let mut fits = serde_json::Map::new();
    for method_file in &cfg.methods {
        let (spec, h2) = match method_file {
            BenchMethodFile::Rejection { ref_variance, target_h2 } => {
                (MethodSpec::Rejection { ref_variance: *ref_variance }, target_h2.clone())
            }
            BenchMethodFile::Mf { tau, ref_variance, target_h2 } => (
                MethodSpec::Mf {
                    tau: *tau,
                    ref_variance: *ref_variance,
                    tuner: TunerConfig::default(),
                },
                target_h2.clone(),
            ),
            BenchMethodFile::Mlmc { eps1, m, levels, trial_n, target_h2 } => (
                MethodSpec::Mlmc {
                    schedule: schedule_for(*eps1, problem.epsilon, *m, *levels)?,
                    trial_n: *trial_n,
                },
                target_h2.clone(),
            ),
            BenchMethodFile::Mfmlmc { eps1, m, levels, taus, trial_n, target_h2 } => {
                let schedule = schedule_for(*eps1, problem.epsilon, *m, *levels)?;
                let taus =
                    if taus.len() == 1 { vec![taus[0]; schedule.len()] } else { taus.clone() };
                (
                    MethodSpec::MfMlmc {
                        schedule,
                        taus,
                        trial_n: *trial_n,
                        tuner: TunerConfig::default(),
                    },
                    target_h2.clone(),
                )
            }
        };
        let run = run_benchmark(&problem, &spec, &f, &h2, cfg.replicates, cfg.seed)?;
        for p in &run.points {
            runs_csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                run.method, p.h2, p.replicate, p.estimate, p.variance_estimate, p.cost, p.tuning_cost
            ));
        }
        let pts: Vec<(f64, f64)> =
            run.summaries.iter().map(|s| (s.mean_cost, s.variance)).collect();
        let fit = fit_convergence(&pts)?;
        eprintln!("{}: gamma = {:.3}", run.method, fit.gamma);
        fits.insert(run.method.clone(), serde_json::to_value(&fit)?);
    }
    write_text(&args.out.join("runs.csv"), &runs_csv)?;
    write_text(
        &args.out.join("fits.json"),
        &serde_json::to_string_pretty(&serde_json::Value::Object(fits))?,
    )?;

    if let Some(density) = &cfg.density {
        let (_, samples) = abc_rejection(&problem, &f, density.n, &RngStream::new(cfg.seed))?;
        let mut csv = String::from("dim,bin_lo,bin_hi,density\n");
        for &dim in &density.dims {
            let support = problem.prior.bounds[dim];
            let table = estimate_marginal_density(&samples, dim, density.bins, support)?;
            let edges = table.edges();
            for (i, d) in table.density.iter().enumerate() {
                csv.push_str(&format!("{},{},{},{}\n", dim, edges[i], edges[i + 1], d));
            }
        }
        write_text(&args.out.join("densities.csv"), &csv)?;
    }
    eprintln!("benchmark artifacts in {}", args.out.display());
    Ok(())
}
