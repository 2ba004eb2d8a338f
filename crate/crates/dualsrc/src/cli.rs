//! Command-line workflow: world generation, policy and coordinator
//! training, backtesting and report rendering. Every subcommand is
//! replayable from its flags: identical seeds produce identical artifacts.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::backtest::{
    check_criteria, default_alpha_grid, export_trajectories, run_backtest, tbs_grid_search,
    BacktestOptions, BacktestReport, CoordinatorKind, CriteriaFile, MeanSource,
};
use crate::coordinator::{CoordMeta, MpcConfig};
use crate::datagen::{generate_world, load_world, save_world, GenSpec};
use crate::error::{domain, Result};
use crate::mlp::Activation;
use crate::policies::{
    Bsht, BuyPolicy, FeatureLayout, PolicyMeta, RlPolicy, Tbs, TbsConfig,
};
use crate::training::{
    load_checkpoint, sample_capacity_paths, save_checkpoint, train_buy_policy, train_coordinator,
    BatchStat, CapacitySampling, Checkpoint, PriceMode, TrainConfig, WorldSource,
};
use crate::world::{validate_world, ExoWorld};

#[derive(Parser)]
#[command(
    name = "dualsrc",
    version,
    about = "Dual-sourcing inventory optimization: simulate, train, coordinate, backtest"
)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory for outputs; overrides the DUALSRC_OUT_DIR environment
    /// variable (default ".").
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a seeded synthetic world file.
    Gen(GenArgs),
    /// Train a neural buy policy by direct backpropagation.
    TrainBuy(TrainBuyArgs),
    /// Train the neural capacity coordinator against a frozen buy policy.
    TrainCoord(TrainCoordArgs),
    /// Evaluate policies and coordinators on the held-out window.
    Backtest(BacktestArgs),
    /// Render tables from a backtest report.
    Report(ReportArgs),
}

#[derive(Args, Serialize)]
pub struct GenArgs {
    /// Generator spec JSON; missing fields take the desk-scale defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Product-count override.
    #[arg(long)]
    pub products: Option<usize>,
    /// Horizon override in weeks.
    #[arg(long)]
    pub weeks: Option<usize>,
    /// Output world file.
    #[arg(long, default_value = "world.dsw")]
    pub out: PathBuf,
    /// Re-validate the generated world and print the report.
    #[arg(long)]
    pub validate: bool,
}

#[derive(Args, Serialize)]
pub struct TrainBuyArgs {
    #[arg(long)]
    pub world: PathBuf,
    /// dualsrc-rl | jit-rl | priced
    #[arg(long, default_value = "dualsrc-rl")]
    pub mode: String,
    /// Output checkpoint (default <mode>.ckpt).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Resume training from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value_t = 600)]
    pub batches: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training window length T^Train.
    #[arg(long, default_value_t = 72)]
    pub train_weeks: usize,
    /// Hidden layer sizes, comma separated.
    #[arg(long, default_value = "32,32")]
    pub hidden: String,
    #[arg(long, default_value_t = 4)]
    pub embed_dim: usize,
    /// Resample a fresh world per epoch from the spec stored in the world
    /// file (the default when a spec is present; pass false for the single
    /// fixed path).
    #[arg(long)]
    pub resample: Option<bool>,
    /// Plain SGD instead of Adam, for literal fidelity to the update rule.
    #[arg(long)]
    pub sgd: bool,
    /// Honor ordered reductions for bit-identical reruns.
    #[arg(long, default_value_t = true)]
    pub deterministic: bool,
    /// Training log CSV (default train_log_<mode>.csv).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct TrainCoordArgs {
    #[arg(long)]
    pub world: PathBuf,
    /// Frozen buy-policy checkpoint.
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long, default_value = "coordinator.ckpt")]
    pub out: PathBuf,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    pub batches: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 72)]
    pub train_weeks: usize,
    /// Hidden layer sizes, comma separated.
    #[arg(long, default_value = "32,32")]
    pub hidden: String,
    /// Capacity-fraction band for sampled training limits.
    #[arg(long, default_value_t = 0.5)]
    pub frac_min: f64,
    #[arg(long, default_value_t = 1.2)]
    pub frac_max: f64,
    #[arg(long, default_value_t = 4)]
    pub block: usize,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct BacktestArgs {
    #[arg(long)]
    pub world: PathBuf,
    /// Comma-separated subset of: bsht, tbs, jit-rl, dualsrc-rl.
    #[arg(long, default_value = "bsht,tbs,jit-rl,dualsrc-rl")]
    pub policies: String,
    /// Trained dualsrc-rl checkpoint (required when selected).
    #[arg(long)]
    pub dualsrc: Option<PathBuf>,
    /// Trained jit-rl checkpoint (required when selected).
    #[arg(long)]
    pub jit_rl: Option<PathBuf>,
    /// Fixed TBS alpha; when absent the grid search runs on the training
    /// window.
    #[arg(long)]
    pub tbs_alpha: Option<f64>,
    /// Comma-separated subset of: none, neural, mpc.
    #[arg(long, default_value = "none")]
    pub coordinators: String,
    /// Trained coordinator checkpoint (required when `neural` selected).
    #[arg(long)]
    pub coord: Option<PathBuf>,
    /// Number of sampled capacity paths.
    #[arg(long, default_value_t = 20)]
    pub paths: usize,
    #[arg(long, default_value_t = 1)]
    pub path_seed: u64,
    /// First backtest week.
    #[arg(long, default_value_t = 72)]
    pub split: usize,
    /// Capacity-fraction band for the sampled paths.
    #[arg(long, default_value_t = 0.5)]
    pub frac_min: f64,
    #[arg(long, default_value_t = 1.2)]
    pub frac_max: f64,
    #[arg(long, default_value_t = 4)]
    pub block: usize,
    #[arg(long, default_value_t = 200)]
    pub mpc_iters: usize,
    #[arg(long, default_value_t = 0.01)]
    pub mpc_tol: f64,
    #[arg(long, default_value_t = 0.5)]
    pub mpc_eta: f64,
    /// Reference policy for M2/M4 (default: each policy's own
    /// unconstrained run).
    #[arg(long)]
    pub reference: Option<String>,
    /// Skip writing per-combination trajectory CSVs.
    #[arg(long)]
    pub no_trajectories: bool,
    /// JSON criteria file; any missed threshold makes the exit code
    /// nonzero.
    #[arg(long)]
    pub criteria: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Serialize)]
pub struct ReportArgs {
    /// Backtest report JSON.
    #[arg(long)]
    pub report: PathBuf,
    /// text | csv
    #[arg(long, default_value = "text")]
    pub format: String,
}

/// Parses argv and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap uses exit code 2 for usage errors, 0 for --help/--version
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };

    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out_dir = cli
        .out_dir
        .or_else(|| std::env::var_os("DUALSRC_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    // every invocation logs its resolved configuration for exact replay
    if let Err(e) = log_run_config(&out_dir, &cli.command) {
        eprintln!("warning: could not write run config: {e}");
    }
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(&out_dir, args),
        Command::TrainBuy(args) => cmd_train_buy(&out_dir, args),
        Command::TrainCoord(args) => cmd_train_coord(&out_dir, args),
        Command::Backtest(args) => cmd_backtest(&out_dir, args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn log_run_config(out_dir: &Path, command: &Command) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let name = match command {
        Command::Gen(_) => "gen",
        Command::TrainBuy(_) => "train-buy",
        Command::TrainCoord(_) => "train-coord",
        Command::Backtest(_) => "backtest",
        Command::Report(_) => "report",
    };
    let json = serde_json::to_string_pretty(command)
        .map_err(|e| domain(format!("run config encode: {e}")))?;
    std::fs::write(out_dir.join(format!("runconfig_{name}.json")), json)?;
    Ok(())
}

fn resolve(out_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        out_dir.join(path)
    }
}

fn cmd_gen(out_dir: &Path, args: GenArgs) -> Result<i32> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<GenSpec>(&text)
                .map_err(|e| domain(format!("bad spec file: {e}")))?
        }
        None => GenSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(products) = args.products {
        spec.num_products = products;
    }
    if let Some(weeks) = args.weeks {
        spec.horizon = weeks;
    }

    let world = generate_world(&spec)?;
    if args.validate {
        let report = validate_world(&world);
        if report.is_empty() {
            println!("validation: ok");
        } else {
            for v in &report {
                eprintln!("violation: {v}");
            }
            return Ok(1);
        }
    }
    let out = resolve(out_dir, &args.out);
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_world(&out, &world, Some(&spec))?;
    println!(
        "wrote {} ({} products x {} weeks, seed {})",
        out.display(),
        world.num_products,
        world.horizon,
        spec.seed
    );
    Ok(0)
}

fn parse_hidden(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| domain(format!("bad hidden layer size '{s}': {e}")))
        })
        .collect()
}

fn write_train_log(path: &Path, history: &[BatchStat]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "batch,objective,grad_norm,wall_ms")?;
    for s in history {
        writeln!(out, "{},{},{},{:.3}", s.batch, s.objective, s.grad_norm, s.wall_ms)?;
    }
    Ok(())
}

fn load_world_file(path: &Path) -> Result<(ExoWorld, Option<GenSpec>)> {
    let (world, spec) = load_world(path)?;
    let violations = validate_world(&world);
    if !violations.is_empty() {
        return Err(domain(format!(
            "world file fails validation: {} (+{} more)",
            violations[0],
            violations.len().saturating_sub(1)
        )));
    }
    Ok((world, spec))
}

fn cmd_train_buy(out_dir: &Path, args: TrainBuyArgs) -> Result<i32> {
    let (world, world_spec) = load_world_file(&args.world)?;
    let (mask_llt, prices) = match args.mode.as_str() {
        "dualsrc-rl" => (false, PriceMode::Unpriced),
        "jit-rl" => (true, PriceMode::Unpriced),
        "priced" => (false, PriceMode::random_default()),
        other => return Err(domain(format!("unknown mode '{other}'"))),
    };

    let hidden = parse_hidden(&args.hidden)?;
    let layout = FeatureLayout::for_world(&world);
    let meta = PolicyMeta::new(
        layout,
        args.embed_dim,
        world.num_products,
        &hidden,
        Activation::Tanh,
        mask_llt,
    );

    let cfg = TrainConfig {
        batch_size: args.batch_size,
        step_size: args.lr,
        max_batches: args.batches,
        train_horizon: args.train_weeks,
        seed: args.seed,
        optimizer: if args.sgd {
            crate::training::OptimizerKind::Sgd
        } else {
            crate::training::OptimizerKind::Adam
        },
        deterministic: args.deterministic,
        ..TrainConfig::default()
    };

    let resample = args.resample.unwrap_or(world_spec.is_some());
    let source = match (&world_spec, resample) {
        (Some(spec), true) => WorldSource::Generative { spec, base: &world },
        _ => WorldSource::Fixed(&world),
    };

    let resume = match &args.resume {
        Some(path) => Some(load_checkpoint(path)?),
        None => None,
    };

    let out = resolve(out_dir, &args.out.unwrap_or_else(|| PathBuf::from(format!("{}.ckpt", args.mode))));
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let out_for_cb = out.clone();
    let mut save_cb = move |ck: &Checkpoint| save_checkpoint(&out_for_cb, ck);
    let (params, log) =
        train_buy_policy(&source, &meta, &cfg, &prices, resume, Some(&mut save_cb))?;

    let log_path = resolve(
        out_dir,
        &args.log.unwrap_or_else(|| PathBuf::from(format!("train_log_{}.csv", args.mode))),
    );
    write_train_log(&log_path, &log.history)?;
    println!(
        "trained {} for {} batches (converged: {}); params {} -> {}",
        args.mode,
        log.batches,
        log.converged,
        params.data.len(),
        out.display()
    );
    Ok(0)
}

fn cmd_train_coord(out_dir: &Path, args: TrainCoordArgs) -> Result<i32> {
    let (world, _) = load_world_file(&args.world)?;
    let buy = load_checkpoint(&args.policy)?.policy_params()?;
    let hidden = parse_hidden(&args.hidden)?;
    let meta = CoordMeta::new(world.lead_llt, &hidden, Activation::Tanh);
    let cfg = TrainConfig {
        batch_size: args.batch_size,
        step_size: args.lr,
        max_batches: args.batches,
        train_horizon: args.train_weeks,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let sampling = CapacitySampling {
        fraction_min: args.frac_min,
        fraction_max: args.frac_max,
        block_weeks: args.block,
    };
    let resume = match &args.resume {
        Some(path) => Some(load_checkpoint(path)?),
        None => None,
    };

    let out = resolve(out_dir, &args.out);
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let out_for_cb = out.clone();
    let mut save_cb = move |ck: &Checkpoint| save_checkpoint(&out_for_cb, ck);
    let (_, log) =
        train_coordinator(&world, &buy, &meta, &cfg, &sampling, resume, Some(&mut save_cb))?;

    let log_path = resolve(
        out_dir,
        &args.log.unwrap_or_else(|| PathBuf::from("train_log_coordinator.csv")),
    );
    write_train_log(&log_path, &log.history)?;
    println!(
        "trained coordinator for {} batches (converged: {}) -> {}",
        log.batches,
        log.converged,
        out.display()
    );
    Ok(0)
}

fn cmd_backtest(out_dir: &Path, args: BacktestArgs) -> Result<i32> {
    let (world, world_spec) = load_world_file(&args.world)?;
    if args.split == 0 || args.split >= world.horizon {
        return Err(domain(format!(
            "--split {} must lie inside the horizon {}",
            args.split, world.horizon
        )));
    }

    // assemble policies
    let mut policies: Vec<Box<dyn BuyPolicy>> = Vec::new();
    for name in args.policies.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "bsht" => policies.push(Box::new(Bsht)),
            "tbs" => {
                let alpha = match args.tbs_alpha {
                    Some(a) => a,
                    None => {
                        let (best, scores) =
                            tbs_grid_search(&world, args.split, &default_alpha_grid())?;
                        let summary: Vec<String> =
                            scores.iter().map(|(a, r)| format!("{a}:{r:.0}")).collect();
                        println!("tbs alpha grid ({}), best {best}", summary.join(" "));
                        best
                    }
                };
                policies.push(Box::new(Tbs(TbsConfig::new(alpha, world.lead_llt))));
            }
            "jit-rl" => {
                let path = args
                    .jit_rl
                    .as_ref()
                    .ok_or_else(|| domain("--jit-rl checkpoint required for the jit-rl policy"))?;
                let params = load_checkpoint(path)?.policy_params()?;
                policies.push(Box::new(RlPolicy::new("jit-rl", params)));
            }
            "dualsrc-rl" => {
                let path = args.dualsrc.as_ref().ok_or_else(|| {
                    domain("--dualsrc checkpoint required for the dualsrc-rl policy")
                })?;
                let params = load_checkpoint(path)?.policy_params()?;
                policies.push(Box::new(RlPolicy::new("dualsrc-rl", params)));
            }
            other => return Err(domain(format!("unknown policy '{other}'"))),
        }
    }
    if policies.is_empty() {
        return Err(domain("no policies selected"));
    }

    // assemble coordinators
    let mut coordinators: Vec<CoordinatorKind> = Vec::new();
    for name in args.coordinators.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "none" => coordinators.push(CoordinatorKind::Unconstrained),
            "neural" => {
                let path = args.coord.as_ref().ok_or_else(|| {
                    domain("--coord checkpoint required for the neural coordinator")
                })?;
                let params = load_checkpoint(path)?.coord_params()?;
                coordinators.push(CoordinatorKind::Neural(params));
            }
            "mpc" => coordinators.push(CoordinatorKind::Mpc(MpcConfig {
                eta_scale: args.mpc_eta,
                tol_frac: args.mpc_tol,
                max_iters: args.mpc_iters,
            })),
            other => return Err(domain(format!("unknown coordinator '{other}'"))),
        }
    }

    // sample capacity paths off the anchor policy's unconstrained peak
    let weeks = world.horizon - args.split;
    let refs: Vec<&dyn BuyPolicy> = policies.iter().map(|b| b.as_ref()).collect();
    let anchor_idx = refs
        .iter()
        .position(|p| p.name() == "dualsrc-rl")
        .unwrap_or(0);
    let anchor_volumes = {
        let demand_paths: Vec<Vec<f64>> = (0..world.num_products)
            .map(|p| world.weeks[p].iter().map(|w| w.demand).collect())
            .collect();
        crate::backtest::unconstrained_network_volumes(
            &world,
            refs[anchor_idx],
            &demand_paths,
            args.split,
        )?
    };
    let peak = anchor_volumes.iter().fold(0.0_f64, |a, &b| a.max(b)).max(1e-9);
    let sampling = CapacitySampling {
        fraction_min: args.frac_min,
        fraction_max: args.frac_max,
        block_weeks: args.block,
    };
    let capacity_paths = sample_capacity_paths(peak, weeks, args.paths, args.path_seed, &sampling)?;

    let options = BacktestOptions {
        split: args.split,
        price_horizon: world.lead_llt,
        mean_source: match world_spec {
            Some(spec) => MeanSource::Generative(Box::new(spec)),
            None => MeanSource::History,
        },
        reference_policy: args.reference.clone(),
        seed: args.seed,
    };

    let report = run_backtest(&world, &refs, &coordinators, &capacity_paths, &options)?;

    std::fs::create_dir_all(out_dir)?;
    let report_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| domain(format!("report encode: {e}")))?;
    std::fs::write(&report_path, &json)?;
    println!("wrote {}", report_path.display());

    if !args.no_trajectories {
        let written = export_trajectories(&report, &out_dir.join("trajectories"))?;
        println!("wrote {} trajectory files", written.len());
    }

    print_tables(&report);

    if let Some(criteria_path) = &args.criteria {
        let text = std::fs::read_to_string(criteria_path)?;
        let criteria: CriteriaFile =
            serde_json::from_str(&text).map_err(|e| domain(format!("bad criteria file: {e}")))?;
        let results = check_criteria(&report, &criteria);
        let mut failed = false;
        for r in &results {
            let status = if r.passed { "pass" } else { "FAIL" };
            let actual =
                r.actual.map(|a| format!("{a:.4}")).unwrap_or_else(|| "missing".to_string());
            println!("criterion {status}: {} {} {} (actual {actual})", r.metric, r.op, r.threshold);
            failed |= !r.passed;
        }
        if failed {
            return Ok(1);
        }
    }
    Ok(0)
}

fn print_tables(report: &BacktestReport) {
    println!();
    println!(
        "Cumulative discounted reward, backtest weeks {}..{}",
        report.meta.split,
        report.meta.split + report.meta.backtest_weeks
    );
    println!("  {:<12} {:>16} {:>12}", "policy", "reward", "% of BSHT");
    for row in &report.table1 {
        let pct = row
            .pct_of_bsht
            .map(|p| format!("{p:.2}"))
            .unwrap_or_else(|| "-".to_string());
        println!("  {:<12} {:>16.2} {:>12}", row.policy, row.cumulative_reward, pct);
    }
    if !report.table2.is_empty() {
        println!();
        println!(
            "Violations over {} capacity paths (initialization: {})",
            report.table2.first().map(|r| r.paths).unwrap_or(0),
            report.meta.initialization
        );
        println!(
            "  {:<12} {:<12} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "policy", "coordinator", "M1", "M2", "M3", "M4", "Reward"
        );
        for row in &report.table2 {
            println!(
                "  {:<12} {:<12} {:>7.1}% {:>7.1}% {:>7.1}% {:>7.1}% {:>8.1}",
                row.policy,
                row.coordinator,
                row.m1,
                row.m2,
                row.m3,
                row.m4,
                row.reward_pct_of_unconstrained
            );
        }
    }
    println!();
}

fn cmd_report(args: ReportArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.report)?;
    let report: BacktestReport =
        serde_json::from_str(&text).map_err(|e| domain(format!("bad report file: {e}")))?;
    match args.format.as_str() {
        "text" => print_tables(&report),
        "csv" => {
            println!("table,policy,coordinator,metric,value");
            for row in &report.table1 {
                println!("table1,{},,cumulative_reward,{}", row.policy, row.cumulative_reward);
                if let Some(p) = row.pct_of_bsht {
                    println!("table1,{},,pct_of_bsht,{p}", row.policy);
                }
            }
            for row in &report.table2 {
                for (name, value) in [
                    ("m1", row.m1),
                    ("m2", row.m2),
                    ("m3", row.m3),
                    ("m4", row.m4),
                    ("reward_pct", row.reward_pct_of_unconstrained),
                ] {
                    println!("table2,{},{},{name},{value}", row.policy, row.coordinator);
                }
            }
        }
        other => return Err(domain(format!("unknown format '{other}'"))),
    }
    Ok(0)
}
