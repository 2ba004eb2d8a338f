//! Held-out-window evaluation: reward comparisons against BSHT, violation
//! metrics M1-M4 under sampled capacity paths, and plot-ready trajectory
//! exports.
//!
//! Every policy is warmed up on the training window to build its natural
//! "onhand + inflight" start state, then evaluated on the backtest window.
//! All runs share the same exogenous world (common random numbers), rewards
//! are reported unpenalized, and capacity prices steer policies only through
//! their decision features.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coordinator::{
    coord_featurize, forecast_prices, mpc_dual_search, CoordInputs, CoordParams, MeanPaths,
    MpcConfig, MpcContext, PricePath,
};
use crate::datagen::GenSpec;
use crate::error::{domain, Result};
use crate::policies::{trailing_mean, BuyPolicy, PolicyCtx};
use crate::rng::Fnv;
use crate::sim::{step, SimState};
use crate::world::ExoWorld;

/// Relative one-sided violation metrics, in percent.
///
/// M1: mean violation; M2: mean violation over weeks where the reference
/// (unconstrained) run used at least 90% of the limit; M3: share of weeks
/// violating by more than 10%; M4: share of weeks violating by more than 10%
/// while the reference was above 90% of the limit. Undefined denominators
/// report 0 with the corresponding `*_defined` flag cleared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationMetrics {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub m2_defined: bool,
    pub m4_defined: bool,
}

pub fn violation_metrics(
    volumes: &[f64],
    limits: &[f64],
    reference: &[f64],
) -> Result<ViolationMetrics> {
    let n = volumes.len();
    if n == 0 || limits.len() != n || reference.len() != n {
        return Err(domain(format!(
            "violation_metrics misaligned: {} volumes, {} limits, {} reference",
            n,
            limits.len(),
            reference.len()
        )));
    }
    if limits.iter().any(|&k| !(k > 0.0)) {
        return Err(domain("capacity limits must be positive"));
    }

    let violation: Vec<f64> =
        volumes.iter().zip(limits).map(|(&v, &k)| ((v - k) / k).max(0.0)).collect();
    let near: Vec<bool> =
        reference.iter().zip(limits).map(|(&r, &k)| r >= 0.9 * k).collect();

    let m1 = 100.0 * violation.iter().sum::<f64>() / n as f64;
    let near_count = near.iter().filter(|&&b| b).count();
    let (m2, m2_defined) = if near_count > 0 {
        let sum: f64 = violation.iter().zip(&near).filter(|(_, &b)| b).map(|(&v, _)| v).sum();
        (100.0 * sum / near_count as f64, true)
    } else {
        (0.0, false)
    };
    let m3 = 100.0 * violation.iter().filter(|&&v| v > 0.10).count() as f64 / n as f64;
    let m4_count = violation.iter().zip(&near).filter(|(&v, &b)| v > 0.10 && b).count();
    let m4 = 100.0 * m4_count as f64 / n as f64;

    Ok(ViolationMetrics { m1, m2, m3, m4, m2_defined, m4_defined: true })
}

/// How prices are produced during a constrained run.
pub enum CoordinatorKind {
    Unconstrained,
    Neural(CoordParams),
    Mpc(MpcConfig),
}

impl CoordinatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            CoordinatorKind::Unconstrained => "none",
            CoordinatorKind::Neural(_) => "neural",
            CoordinatorKind::Mpc(_) => "mpc",
        }
    }
}

/// Mean-path source for the MPC sandbox.
pub enum MeanSource {
    /// Empirical means over observed history.
    History,
    /// Generative means from the world's spec plus trailing-mean demand.
    Generative(Box<GenSpec>),
}

impl MeanSource {
    fn build(&self, world: &ExoWorld, products: &[usize], week: usize) -> MeanPaths {
        match self {
            MeanSource::History => MeanPaths::from_history(world, products, week),
            MeanSource::Generative(spec) => spec.mean_paths(world, products, week),
        }
    }
}

pub struct BacktestOptions {
    /// First backtest week (the training window is `0..split`).
    pub split: usize,
    /// Coordinator forecast horizon L; prices cover `L + 1` weeks.
    pub price_horizon: usize,
    pub mean_source: MeanSource,
    /// Policy whose unconstrained volumes anchor M2/M4; falls back to each
    /// policy's own unconstrained run when absent.
    pub reference_policy: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub split: usize,
    pub backtest_weeks: usize,
    pub initialization: String,
    pub world_fingerprint: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Row {
    pub policy: String,
    pub cumulative_reward: f64,
    pub pct_of_bsht: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRow {
    pub policy: String,
    pub coordinator: String,
    pub path: usize,
    pub metrics: ViolationMetrics,
    pub reward_pct_of_unconstrained: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table2Row {
    pub policy: String,
    pub coordinator: String,
    pub paths: usize,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub reward_pct_of_unconstrained: f64,
}

/// Network-level weekly series for one evaluated combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryTable {
    pub policy: String,
    pub coordinator: String,
    /// Capacity-path index; None for unconstrained runs.
    pub path: Option<usize>,
    pub start_week: usize,
    pub network_volume: Vec<f64>,
    pub limits: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Full coordinator forecasts per week, for price audits.
    #[serde(default)]
    pub price_paths: Vec<PricePath>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestReport {
    pub meta: ReportMeta,
    pub table1: Vec<Table1Row>,
    pub table2: Vec<Table2Row>,
    pub per_path: Vec<PathRow>,
    pub trajectories: Vec<TrajectoryTable>,
}

/// Per-product simulation bookkeeping for one policy over one window.
struct PopState {
    states: Vec<SimState<f64>>,
    action_hist: Vec<Vec<(f64, f64)>>,
    last_inbound: Vec<f64>,
}

impl PopState {
    fn fresh(world: &ExoWorld) -> Self {
        PopState {
            states: (0..world.num_products).map(|p| SimState::fresh(world, p)).collect(),
            action_hist: vec![Vec::new(); world.num_products],
            last_inbound: vec![0.0; world.num_products],
        }
    }
}

/// Advances the whole population one week under `policy`, returning the
/// end-of-week network volume and the sum of (undiscounted) rewards.
fn population_step(
    world: &ExoWorld,
    pop: &mut PopState,
    demand_paths: &[Vec<f64>],
    week: usize,
    policy: &dyn BuyPolicy,
    price_path: Option<&[f64]>,
) -> Result<(f64, f64)> {
    let mut volume = 0.0;
    let mut reward = 0.0;
    for p in 0..world.num_products {
        let exo = world.week(p, week);
        let ctx = PolicyCtx {
            product: p,
            week,
            exo,
            demand_hist: &demand_paths[p][..week],
            state: &pop.states[p],
            actions: &pop.action_hist[p],
            price_path,
            unit_volume: world.unit_volumes[p],
        };
        let action = policy.order(&ctx)?;
        let prev_onhand = pop.states[p].onhand;
        let (next, out) = step(
            &pop.states[p],
            exo,
            (action.qty_jit, action.qty_llt),
            None,
            world.unit_volumes[p],
        )?;
        pop.last_inbound[p] = out.onhand_pre - prev_onhand;
        pop.action_hist[p].push((action.qty_jit, action.qty_llt));
        volume += next.onhand * world.unit_volumes[p];
        reward += out.reward;
        pop.states[p] = next;
    }
    Ok((volume, reward))
}

/// Simulates `0..split` to produce each policy's natural start state.
fn warmup(world: &ExoWorld, policy: &dyn BuyPolicy, demand_paths: &[Vec<f64>], split: usize) -> Result<PopState> {
    let mut pop = PopState::fresh(world);
    for t in 0..split {
        population_step(world, &mut pop, demand_paths, t, policy, None)?;
    }
    Ok(pop)
}

struct UnconstrainedRun {
    cumulative: f64,
    volumes: Vec<f64>,
    start: PopState,
}

fn run_unconstrained(
    world: &ExoWorld,
    policy: &dyn BuyPolicy,
    demand_paths: &[Vec<f64>],
    split: usize,
) -> Result<UnconstrainedRun> {
    let start = warmup(world, policy, demand_paths, split)?;
    let mut pop = PopState {
        states: start.states.clone(),
        action_hist: start.action_hist.clone(),
        last_inbound: start.last_inbound.clone(),
    };
    let mut volumes = Vec::with_capacity(world.horizon - split);
    let mut cumulative = 0.0;
    let mut discount = 1.0;
    for t in split..world.horizon {
        let (vol, reward) = population_step(world, &mut pop, demand_paths, t, policy, None)?;
        volumes.push(vol);
        cumulative += discount * reward;
        discount *= world.discount_factor;
    }
    Ok(UnconstrainedRun { cumulative, volumes, start })
}

struct ConstrainedRun {
    cumulative: f64,
    volumes: Vec<f64>,
    lambdas: Vec<f64>,
    price_log: Vec<PricePath>,
}

fn run_constrained(
    world: &ExoWorld,
    policy: &dyn BuyPolicy,
    demand_paths: &[Vec<f64>],
    start: &PopState,
    limits: &[f64],
    coordinator: &CoordinatorKind,
    options: &BacktestOptions,
) -> Result<ConstrainedRun> {
    let split = options.split;
    let weeks = world.horizon - split;
    let horizon = options.price_horizon;
    let all_products: Vec<usize> = (0..world.num_products).collect();
    let mut pop = PopState {
        states: start.states.clone(),
        action_hist: start.action_hist.clone(),
        last_inbound: start.last_inbound.clone(),
    };
    let mut volumes = Vec::with_capacity(weeks);
    let mut lambdas = Vec::with_capacity(weeks);
    let mut lambda_hist: Vec<f64> = Vec::with_capacity(weeks);
    let mut cumulative = 0.0;
    let mut discount = 1.0;
    let mut price_log: Vec<PricePath> = Vec::new();
    let mut last_mpc_path: Option<Vec<f64>> = None;

    for (rel, t) in (split..world.horizon).enumerate() {
        let k_view: Vec<f64> =
            (0..=horizon).map(|k| limits[(rel + k).min(limits.len() - 1)]).collect();

        let forecast: Vec<f64> = match coordinator {
            CoordinatorKind::Unconstrained => vec![0.0; horizon + 1],
            CoordinatorKind::Neural(coord) => {
                let onhand: Vec<f64> = pop.states.iter().map(|s| s.onhand).collect();
                let inflight: Vec<f64> = pop.states.iter().map(|s| s.inflight_total()).collect();
                let last_orders: Vec<(f64, f64)> = pop
                    .action_hist
                    .iter()
                    .map(|h| h.last().copied().unwrap_or((0.0, 0.0)))
                    .collect();
                let last_demand: Vec<f64> = (0..world.num_products)
                    .map(|p| if t > 0 { demand_paths[p][t - 1] } else { 0.0 })
                    .collect();
                let mean_demand: Vec<f64> = (0..world.num_products)
                    .map(|p| trailing_mean(&demand_paths[p][..t], 12))
                    .collect();
                let prices_f: Vec<f64> =
                    (0..world.num_products).map(|p| world.week(p, t).price).collect();
                let costs_f: Vec<f64> =
                    (0..world.num_products).map(|p| world.week(p, t).cost_jit).collect();
                let inputs = CoordInputs {
                    week: t,
                    onhand: &onhand,
                    inflight: &inflight,
                    last_orders: &last_orders,
                    last_inbound: &pop.last_inbound,
                    last_demand: &last_demand,
                    mean_demand: &mean_demand,
                    prices: &prices_f,
                    costs: &costs_f,
                    unit_volumes: &world.unit_volumes,
                    capacity_path: &k_view,
                    lambda_hist: &lambda_hist,
                };
                let features = coord_featurize(coord.meta.horizon, &inputs)?;
                forecast_prices(&coord.meta, &coord.data, &features)?
            }
            CoordinatorKind::Mpc(cfg) => {
                let mean = options.mean_source.build(world, &all_products, t);
                let action_tails: Vec<Vec<(f64, f64)>> = pop
                    .action_hist
                    .iter()
                    .map(|h| h[h.len().saturating_sub(8)..].to_vec())
                    .collect();
                let demand_tails: Vec<Vec<f64>> = (0..world.num_products)
                    .map(|p| demand_paths[p][t.saturating_sub(12)..t].to_vec())
                    .collect();
                let ctx = MpcContext {
                    world,
                    week: t,
                    products: &all_products,
                    states: &pop.states,
                    action_tails: &action_tails,
                    demand_tails: &demand_tails,
                    mean: &mean,
                    k_path: &k_view,
                };
                let warm: Option<Vec<f64>> = last_mpc_path.as_ref().map(|prev: &Vec<f64>| {
                    let mut shifted: Vec<f64> = prev[1..].to_vec();
                    shifted.push(*prev.last().unwrap());
                    shifted
                });
                let out = mpc_dual_search(&ctx, policy, cfg, warm.as_deref())?;
                last_mpc_path = Some(out.prices.clone());
                out.prices
            }
        };

        price_log.push(PricePath { made_at: t, prices: forecast.clone() });
        lambdas.push(forecast[0]);
        lambda_hist.push(forecast[0]);

        let (vol, reward) =
            population_step(world, &mut pop, demand_paths, t, policy, Some(&forecast))?;
        volumes.push(vol);
        cumulative += discount * reward;
        discount *= world.discount_factor;
    }

    Ok(ConstrainedRun { cumulative, volumes, lambdas, price_log })
}

/// Evaluates every (policy, coordinator, capacity path) combination on the
/// held-out window under common random numbers.
pub fn run_backtest(
    world: &ExoWorld,
    policies: &[&dyn BuyPolicy],
    coordinators: &[CoordinatorKind],
    capacity_paths: &[Vec<f64>],
    options: &BacktestOptions,
) -> Result<BacktestReport> {
    if options.split == 0 || options.split >= world.horizon {
        return Err(domain(format!(
            "split {} must lie inside the horizon {}",
            options.split, world.horizon
        )));
    }
    let weeks = world.horizon - options.split;
    for (i, path) in capacity_paths.iter().enumerate() {
        if path.len() != weeks {
            return Err(domain(format!(
                "capacity path {i} has {} weeks, backtest window has {weeks}",
                path.len()
            )));
        }
    }

    let demand_paths: Vec<Vec<f64>> = (0..world.num_products)
        .map(|p| world.weeks[p].iter().map(|w| w.demand).collect())
        .collect();

    // unconstrained pass: Table 1 rewards, reference volumes, start states
    let unconstrained: Vec<UnconstrainedRun> = policies
        .par_iter()
        .map(|policy| run_unconstrained(world, *policy, &demand_paths, options.split))
        .collect::<Result<Vec<_>>>()?;

    let bsht_cumulative = policies
        .iter()
        .position(|p| p.name() == "bsht")
        .map(|i| unconstrained[i].cumulative);
    let table1: Vec<Table1Row> = policies
        .iter()
        .zip(&unconstrained)
        .map(|(policy, run)| Table1Row {
            policy: policy.name(),
            cumulative_reward: run.cumulative,
            pct_of_bsht: bsht_cumulative.map(|b| 100.0 * run.cumulative / b),
        })
        .collect();

    let mut trajectories: Vec<TrajectoryTable> = policies
        .iter()
        .zip(&unconstrained)
        .map(|(policy, run)| TrajectoryTable {
            policy: policy.name(),
            coordinator: "none".into(),
            path: None,
            start_week: options.split,
            network_volume: run.volumes.clone(),
            limits: Vec::new(),
            lambdas: vec![0.0; weeks],
            price_paths: Vec::new(),
        })
        .collect();

    // constrained passes
    let mut per_path: Vec<PathRow> = Vec::new();
    let mut table2: Vec<Table2Row> = Vec::new();
    for (pi, policy) in policies.iter().enumerate() {
        let reference_volumes: &Vec<f64> = options
            .reference_policy
            .as_ref()
            .and_then(|name| policies.iter().position(|p| &p.name() == name))
            .map(|ri| &unconstrained[ri].volumes)
            .unwrap_or(&unconstrained[pi].volumes);

        for coordinator in coordinators {
            if matches!(coordinator, CoordinatorKind::Unconstrained) {
                // score the already-simulated unconstrained volumes against
                // every path; reward is the normalization anchor (100)
                let mut sums = (0.0, 0.0, 0.0, 0.0);
                for (path_idx, limits) in capacity_paths.iter().enumerate() {
                    let metrics =
                        violation_metrics(&unconstrained[pi].volumes, limits, reference_volumes)?;
                    per_path.push(PathRow {
                        policy: policy.name(),
                        coordinator: "none".into(),
                        path: path_idx,
                        metrics,
                        reward_pct_of_unconstrained: 100.0,
                    });
                    sums.0 += metrics.m1;
                    sums.1 += metrics.m2;
                    sums.2 += metrics.m3;
                    sums.3 += metrics.m4;
                }
                let n = capacity_paths.len().max(1) as f64;
                table2.push(Table2Row {
                    policy: policy.name(),
                    coordinator: "none".into(),
                    paths: capacity_paths.len(),
                    m1: sums.0 / n,
                    m2: sums.1 / n,
                    m3: sums.2 / n,
                    m4: sums.3 / n,
                    reward_pct_of_unconstrained: 100.0,
                });
                continue;
            }
            let runs: Vec<(usize, ConstrainedRun)> = capacity_paths
                .par_iter()
                .enumerate()
                .map(|(path_idx, limits)| {
                    let run = run_constrained(
                        world,
                        *policy,
                        &demand_paths,
                        &unconstrained[pi].start,
                        limits,
                        coordinator,
                        options,
                    )?;
                    Ok((path_idx, run))
                })
                .collect::<Result<Vec<_>>>()?;

            let mut sums = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (path_idx, run) in &runs {
                let metrics =
                    violation_metrics(&run.volumes, &capacity_paths[*path_idx], reference_volumes)?;
                let reward_pct = 100.0 * run.cumulative / unconstrained[pi].cumulative;
                per_path.push(PathRow {
                    policy: policy.name(),
                    coordinator: coordinator.label().into(),
                    path: *path_idx,
                    metrics,
                    reward_pct_of_unconstrained: reward_pct,
                });
                sums.0 += metrics.m1;
                sums.1 += metrics.m2;
                sums.2 += metrics.m3;
                sums.3 += metrics.m4;
                sums.4 += reward_pct;
                trajectories.push(TrajectoryTable {
                    policy: policy.name(),
                    coordinator: coordinator.label().into(),
                    path: Some(*path_idx),
                    start_week: options.split,
                    network_volume: run.volumes.clone(),
                    limits: capacity_paths[*path_idx].clone(),
                    lambdas: run.lambdas.clone(),
                    price_paths: run.price_log.clone(),
                });
            }
            let n = runs.len().max(1) as f64;
            table2.push(Table2Row {
                policy: policy.name(),
                coordinator: coordinator.label().into(),
                paths: runs.len(),
                m1: sums.0 / n,
                m2: sums.1 / n,
                m3: sums.2 / n,
                m4: sums.3 / n,
                reward_pct_of_unconstrained: sums.4 / n,
            });
        }
    }

    let mut hasher = Fnv::new();
    hasher.write_u64(options.seed);
    hasher.write_u64(options.split as u64);
    hasher.write_u64(capacity_paths.len() as u64);
    hasher.write_u64(options.price_horizon as u64);
    let meta = ReportMeta {
        seed: options.seed,
        split: options.split,
        backtest_weeks: weeks,
        initialization: "onhand+inflight".into(),
        world_fingerprint: format!("{:016x}", world.fingerprint()),
        config_hash: format!("{:016x}", hasher.finish()),
    };

    Ok(BacktestReport { meta, table1, table2, per_path, trajectories })
}

/// Unconstrained weekly network volumes of one policy over the backtest
/// window (after its warmup); used to anchor capacity-path sampling.
pub fn unconstrained_network_volumes(
    world: &ExoWorld,
    policy: &dyn BuyPolicy,
    demand_paths: &[Vec<f64>],
    split: usize,
) -> Result<Vec<f64>> {
    Ok(run_unconstrained(world, policy, demand_paths, split)?.volumes)
}

/// Cumulative discounted reward of a policy over the training window,
/// starting from fresh inventory.
pub fn training_window_reward(
    world: &ExoWorld,
    policy: &dyn BuyPolicy,
    split: usize,
) -> Result<f64> {
    let demand_paths: Vec<Vec<f64>> = (0..world.num_products)
        .map(|p| world.weeks[p].iter().map(|w| w.demand).collect())
        .collect();
    let mut pop = PopState::fresh(world);
    let mut cumulative = 0.0;
    let mut discount = 1.0;
    for t in 0..split {
        let (_, reward) = population_step(world, &mut pop, &demand_paths, t, policy, None)?;
        cumulative += discount * reward;
        discount *= world.discount_factor;
    }
    Ok(cumulative)
}

/// Grid-searches the Tailored Base-Surge scale factor on the training
/// window; the best alpha by training reward is frozen for backtesting.
pub fn tbs_grid_search(
    world: &ExoWorld,
    split: usize,
    alphas: &[f64],
) -> Result<(f64, Vec<(f64, f64)>)> {
    if alphas.is_empty() {
        return Err(domain("alpha grid must be non-empty"));
    }
    let scores: Vec<(f64, f64)> = alphas
        .par_iter()
        .map(|&alpha| {
            let policy =
                crate::policies::Tbs(crate::policies::TbsConfig::new(alpha, world.lead_llt));
            let reward = training_window_reward(world, &policy, split)?;
            Ok((alpha, reward))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = scores
        .iter()
        .fold(scores[0], |acc, &cur| if cur.1 > acc.1 { cur } else { acc });
    Ok((best.0, scores))
}

/// Default search grid for the TBS scale factor.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=6).map(|i| 0.25 * i as f64).collect()
}

/// Writes one CSV per evaluated combination: `week,network_volume,limit,lambda`.
pub fn export_trajectories(report: &BacktestReport, dir: &Path) -> Result<Vec<PathBuf>> {
    use std::io::Write;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for tr in &report.trajectories {
        let name = match tr.path {
            Some(idx) => format!("traj_{}_{}_path{}.csv", tr.policy, tr.coordinator, idx),
            None => format!("traj_{}_{}.csv", tr.policy, tr.coordinator),
        };
        let path = dir.join(name);
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(out, "week,network_volume,limit,lambda")?;
        for (i, &vol) in tr.network_volume.iter().enumerate() {
            let limit = tr.limits.get(i).copied().unwrap_or(f64::NAN);
            writeln!(out, "{},{},{},{}", tr.start_week + i, vol, limit, tr.lambdas[i])?;
        }
        written.push(path);
        if !tr.price_paths.is_empty() {
            let name = match tr.path {
                Some(idx) => format!("prices_{}_{}_path{}.csv", tr.policy, tr.coordinator, idx),
                None => format!("prices_{}_{}.csv", tr.policy, tr.coordinator),
            };
            let path = dir.join(name);
            let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
            crate::coordinator::write_price_paths(&mut out, &tr.price_paths)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// CI-style acceptance thresholds evaluated against a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriteriaFile {
    pub checks: Vec<Criterion>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Criterion {
    /// Dotted path: `table1.<policy>.pct_of_bsht`,
    /// `table2.<policy>.<coordinator>.<m1|m2|m3|m4|reward_pct>`.
    pub metric: String,
    /// One of `>=`, `<=`, `>`, `<`.
    pub op: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub metric: String,
    pub op: String,
    pub threshold: f64,
    pub actual: Option<f64>,
    pub passed: bool,
}

pub fn lookup_metric(report: &BacktestReport, path: &str) -> Option<f64> {
    let parts: Vec<&str> = path.split('.').collect();
    match parts.as_slice() {
        ["table1", policy, field] => {
            let row = report.table1.iter().find(|r| r.policy == *policy)?;
            match *field {
                "pct_of_bsht" => row.pct_of_bsht,
                "cumulative_reward" => Some(row.cumulative_reward),
                _ => None,
            }
        }
        ["table2", policy, coordinator, field] => {
            let row = report
                .table2
                .iter()
                .find(|r| r.policy == *policy && r.coordinator == *coordinator)?;
            match *field {
                "m1" => Some(row.m1),
                "m2" => Some(row.m2),
                "m3" => Some(row.m3),
                "m4" => Some(row.m4),
                "reward_pct" => Some(row.reward_pct_of_unconstrained),
                _ => None,
            }
        }
        _ => None,
    }
}

/// Evaluates every criterion; absent metrics fail their check.
pub fn check_criteria(report: &BacktestReport, criteria: &CriteriaFile) -> Vec<CriterionResult> {
    criteria
        .checks
        .iter()
        .map(|c| {
            let actual = lookup_metric(report, &c.metric);
            let passed = match actual {
                None => false,
                Some(a) => match c.op.as_str() {
                    ">=" => a >= c.value,
                    "<=" => a <= c.value,
                    ">" => a > c.value,
                    "<" => a < c.value,
                    _ => false,
                },
            };
            CriterionResult {
                metric: c.metric.clone(),
                op: c.op.clone(),
                threshold: c.value,
                actual,
                passed,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_hand_example() {
        let m = violation_metrics(&[8.0, 10.0, 12.0], &[10.0, 10.0, 10.0], &[12.0, 12.0, 12.0])
            .unwrap();
        assert!((m.m1 - 100.0 / 15.0).abs() < 0.005, "m1 {}", m.m1); // 6.67%
        assert!((m.m2 - 100.0 / 15.0).abs() < 0.005);
        assert!((m.m3 - 100.0 / 3.0).abs() < 0.005); // 33.3%
        assert!((m.m4 - 100.0 / 3.0).abs() < 0.005);
        assert!(m.m2_defined && m.m4_defined);
    }

    #[test]
    fn metrics_zero_below_limits() {
        let m = violation_metrics(&[1.0, 2.0], &[10.0, 10.0], &[10.0, 10.0]).unwrap();
        assert_eq!((m.m1, m.m2, m.m3, m.m4), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn metrics_flag_empty_reference_filter() {
        let m = violation_metrics(&[12.0], &[10.0], &[1.0]).unwrap();
        assert!(!m.m2_defined);
        assert_eq!(m.m2, 0.0);
        assert_eq!(m.m4, 0.0);
    }

    #[test]
    fn metrics_are_scale_invariant() {
        let vols = [8.0, 10.5, 12.0, 9.9];
        let limits = [10.0, 10.0, 11.0, 8.0];
        let refs = [12.0, 9.5, 10.0, 8.0];
        let base = violation_metrics(&vols, &limits, &refs).unwrap();
        for c in [0.1, 10.0] {
            let sv: Vec<f64> = vols.iter().map(|v| v * c).collect();
            let sl: Vec<f64> = limits.iter().map(|v| v * c).collect();
            let sr: Vec<f64> = refs.iter().map(|v| v * c).collect();
            let scaled = violation_metrics(&sv, &sl, &sr).unwrap();
            assert!((scaled.m1 - base.m1).abs() < 1e-9);
            assert!((scaled.m2 - base.m2).abs() < 1e-9);
            assert!((scaled.m3 - base.m3).abs() < 1e-9);
            assert!((scaled.m4 - base.m4).abs() < 1e-9);
        }
    }

    #[test]
    fn metrics_reject_nonpositive_limits() {
        assert!(violation_metrics(&[1.0], &[0.0], &[1.0]).is_err());
    }
}
