//! Capacity-price coordination: a neural coordinator that forecasts the
//! storage-price path needed to keep the buying population inside capacity
//! limits, the loss it is trained on, and a model-predictive-control
//! baseline that searches dual prices over a mean-path forward simulation.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{domain, Result};
use crate::mlp::{init_params, mlp_forward, Activation, MlpSpec};
use crate::policies::{trailing_mean, BuyPolicy, PolicyCtx};
use crate::sim::{step, SimState};
use crate::world::{ExoProductWeek, ExoWorld, HOLIDAY_WEEK_OF_YEAR, SEASON_PERIOD};

/// A capacity-price forecast `(lambda_t, ..., lambda_{t+L})` emitted at one
/// week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePath {
    pub made_at: usize,
    pub prices: Vec<f64>,
}

/// Architecture of the neural coordinator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordMeta {
    /// Forecast horizon L: the network emits L+1 prices.
    pub horizon: usize,
    pub mlp: MlpSpec,
}

impl CoordMeta {
    pub fn new(horizon: usize, hidden: &[usize], activation: Activation) -> Self {
        let mut sizes = vec![coord_feature_dim(horizon)];
        sizes.extend_from_slice(hidden);
        sizes.push(horizon + 1);
        CoordMeta { horizon, mlp: MlpSpec::new(sizes, activation) }
    }

    pub fn param_len(&self) -> usize {
        self.mlp.param_len()
    }
}

/// Coordinator parameters: metadata plus the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordParams {
    pub meta: CoordMeta,
    pub data: Vec<f64>,
}

impl CoordParams {
    pub fn init(meta: CoordMeta, seed: u64) -> Self {
        let data = init_params(&meta.mlp, seed);
        CoordParams { meta, data }
    }

    pub fn zeroed(meta: CoordMeta) -> Self {
        let n = meta.param_len();
        CoordParams { meta, data: vec![0.0; n] }
    }
}

/// Number of aggregate features for a forecast horizon of L.
pub fn coord_feature_dim(horizon: usize) -> usize {
    // bias, sin, cos, holiday distance
    // + 5 aggregate pairs (onhand, inflight, orders, inbound, demand)
    // + forecast demand pair + expected post-drain inventory
    // + mean price + mean cost
    // + L past prices + L+1 upcoming limits
    4 + 10 + 2 + 1 + 2 + horizon + (horizon + 1)
}

/// Population snapshot the coordinator aggregates over. Slices are indexed
/// by position in the sampled product set, not by world product id.
pub struct CoordInputs<'a, S> {
    pub week: usize,
    pub onhand: &'a [S],
    pub inflight: &'a [S],
    /// Orders placed last week; zeros at the first coordinated week.
    pub last_orders: &'a [(S, S)],
    /// Units that physically arrived last week.
    pub last_inbound: &'a [S],
    pub last_demand: &'a [f64],
    /// Trailing-mean demand per product.
    pub mean_demand: &'a [f64],
    pub prices: &'a [f64],
    pub costs: &'a [f64],
    pub unit_volumes: &'a [f64],
    /// Upcoming limits `K_t..K_{t+L}`, padded by the caller.
    pub capacity_path: &'a [f64],
    /// Applied prices so far this episode, oldest first.
    pub lambda_hist: &'a [S],
}

/// Circular distance from a week-of-year to the holiday week, normalized to
/// [0, 1].
fn holiday_distance(week: usize) -> f64 {
    let woy = (week % SEASON_PERIOD) as i64;
    let holiday = HOLIDAY_WEEK_OF_YEAR as i64;
    let raw = (woy - holiday).rem_euclid(SEASON_PERIOD as i64);
    let circ = raw.min(SEASON_PERIOD as i64 - raw);
    circ as f64 / (SEASON_PERIOD as f64 / 2.0)
}

/// Deterministic population-level feature vector, normalized by the current
/// capacity limit so the coordinator reasons in relative terms.
pub fn coord_featurize<S: Real>(horizon: usize, inp: &CoordInputs<'_, S>) -> Result<Vec<S>> {
    let n = inp.onhand.len();
    if n == 0 {
        return Err(domain("coordinator needs at least one product"));
    }
    for (name, len) in [
        ("inflight", inp.inflight.len()),
        ("last_orders", inp.last_orders.len()),
        ("last_inbound", inp.last_inbound.len()),
        ("last_demand", inp.last_demand.len()),
        ("mean_demand", inp.mean_demand.len()),
        ("prices", inp.prices.len()),
        ("costs", inp.costs.len()),
        ("unit_volumes", inp.unit_volumes.len()),
    ] {
        if len != n {
            return Err(domain(format!("coord input {name} has {len} entries, expected {n}")));
        }
    }
    if inp.capacity_path.len() != horizon + 1 {
        return Err(domain(format!(
            "capacity path has {} entries, expected {}",
            inp.capacity_path.len(),
            horizon + 1
        )));
    }
    let k_now = inp.capacity_path[0];
    if !(k_now > 0.0) || !k_now.is_finite() {
        return Err(domain(format!("capacity limit must be finite and > 0, got {k_now}")));
    }

    let lift = |c: f64| inp.onhand[0].lift(c);
    let mean_volume = inp.unit_volumes.iter().sum::<f64>() / n as f64;
    // unit-denominated capacity equivalent, for unweighted aggregates
    let unit_cap = k_now / mean_volume;

    let mut f: Vec<S> = Vec::with_capacity(coord_feature_dim(horizon));
    let angle = std::f64::consts::TAU * (inp.week % SEASON_PERIOD) as f64 / SEASON_PERIOD as f64;
    f.push(lift(1.0));
    f.push(lift(angle.sin()));
    f.push(lift(angle.cos()));
    f.push(lift(holiday_distance(inp.week)));

    let pair = |f: &mut Vec<S>, values: &dyn Fn(usize) -> S| {
        let mut plain = values(0);
        let mut vol = values(0) * inp.unit_volumes[0];
        for i in 1..n {
            plain = plain + values(i);
            vol = vol + values(i) * inp.unit_volumes[i];
        }
        f.push(plain / unit_cap);
        f.push(vol / k_now);
    };

    pair(&mut f, &|i| inp.onhand[i]);
    pair(&mut f, &|i| inp.inflight[i]);
    pair(&mut f, &|i| inp.last_orders[i].0 + inp.last_orders[i].1);
    pair(&mut f, &|i| inp.last_inbound[i]);
    pair(&mut f, &|i| inp.onhand[i].lift(inp.last_demand[i]));
    pair(&mut f, &|i| inp.onhand[i].lift(inp.mean_demand[i]));

    // expected volume after L weeks of mean drain
    let l = horizon as f64;
    let mut expected = (inp.onhand[0] - inp.mean_demand[0] * l).relu() * inp.unit_volumes[0];
    for i in 1..n {
        expected = expected + (inp.onhand[i] - inp.mean_demand[i] * l).relu() * inp.unit_volumes[i];
    }
    f.push(expected / k_now);

    // demand-weighted mean economics
    let wsum: f64 = inp.mean_demand.iter().sum::<f64>().max(1e-9);
    let wprice: f64 = inp.mean_demand.iter().zip(inp.prices).map(|(d, p)| d * p).sum::<f64>() / wsum;
    let wcost: f64 = inp.mean_demand.iter().zip(inp.costs).map(|(d, c)| d * c).sum::<f64>() / wsum;
    f.push(lift(wprice / 10.0));
    f.push(lift(wcost / 10.0));

    // recent applied prices, oldest first, zero-padded
    for k in (1..=horizon).rev() {
        match inp.lambda_hist.len().checked_sub(k) {
            Some(i) => f.push(inp.lambda_hist[i]),
            None => f.push(lift(0.0)),
        }
    }
    // upcoming limits relative to the current one
    for &k in inp.capacity_path {
        f.push(lift(k / k_now));
    }

    debug_assert_eq!(f.len(), coord_feature_dim(horizon));
    Ok(f)
}

/// Neural price forecast: MLP over aggregate features, softplus heads so
/// prices are nonnegative.
pub fn forecast_prices<S: Real>(meta: &CoordMeta, params: &[S], features: &[S]) -> Result<Vec<S>> {
    let out = mlp_forward(&meta.mlp, params, features)?;
    Ok(out.into_iter().map(|x| x.softplus()).collect())
}

/// Coordinator training loss over one episode:
/// squared one-sided capacity violation, an L1 price-magnitude penalty, and
/// the squared inconsistency of each applied price against every past
/// forecast of it. Early weeks with no forecast history skip their MSE
/// terms.
pub fn coordination_loss<S: Real>(
    volumes: &[S],
    limits: &[f64],
    forecasts: &[Vec<S>],
    history: &[Vec<f64>],
) -> Result<S> {
    let n = volumes.len();
    if n == 0 {
        return Err(domain("coordination_loss needs at least one week"));
    }
    if limits.len() != n || forecasts.len() != n {
        return Err(domain(format!(
            "coordination_loss misaligned: {} volumes, {} limits, {} forecasts",
            n,
            limits.len(),
            forecasts.len()
        )));
    }
    let lift = |c: f64| volumes[0].lift(c);
    let horizon = forecasts[0].len().saturating_sub(1);

    let mut loss = lift(0.0);
    for t in 0..n {
        let viol = (volumes[t] - limits[t]).relu();
        loss = loss + viol * viol;

        // L1 norm of the forecast vector
        for &lam in &forecasts[t] {
            loss = loss + (lam.relu() + (-lam).relu());
        }

        // consistency with past forecasts of this week's price
        let applied = forecasts[t][0];
        for s in 1..=horizon {
            let past: Option<S> = if s <= t {
                forecasts[t - s].get(s).copied()
            } else {
                let back = s - t;
                if back <= history.len() {
                    history[history.len() - back].get(s).map(|&v| lift(v))
                } else {
                    None
                }
            };
            if let Some(prev) = past {
                let diff = applied - prev;
                loss = loss + diff * diff;
            }
        }
    }
    Ok(loss)
}

/// Conditional-mean proxies for the stochastic exogenous processes, used by
/// the MPC forward simulation.
#[derive(Debug, Clone)]
pub struct MeanPaths {
    /// Constant demand forecast per product.
    pub demand: Vec<f64>,
    pub shares_jit: Vec<Vec<f64>>,
    pub shares_llt: Vec<Vec<f64>>,
    pub cap_jit: Vec<f64>,
    pub cap_llt: Vec<f64>,
}

impl MeanPaths {
    /// Empirical means over observed weeks `0..=week`; demand uses the
    /// trailing 12-week mean.
    pub fn from_history(world: &ExoWorld, products: &[usize], week: usize) -> Self {
        let upto = (week + 1).min(world.horizon);
        let mut demand = Vec::with_capacity(products.len());
        let mut shares_jit = Vec::with_capacity(products.len());
        let mut shares_llt = Vec::with_capacity(products.len());
        let mut cap_jit = Vec::with_capacity(products.len());
        let mut cap_llt = Vec::with_capacity(products.len());
        for &p in products {
            let hist = world.demand_history(p, week);
            demand.push(trailing_mean(&hist, 12));
            let mut sj = vec![0.0; world.lead_jit + 1];
            let mut sl = vec![0.0; world.lead_llt + 1];
            let mut cj = 0.0;
            let mut cl = 0.0;
            for t in 0..upto {
                let w = world.week(p, t);
                for (k, &s) in w.arrival_shares_jit.iter().enumerate() {
                    sj[k] += s;
                }
                for (k, &s) in w.arrival_shares_llt.iter().enumerate() {
                    sl[k] += s;
                }
                cj += w.supply_cap_jit;
                cl += w.supply_cap_llt;
            }
            let norm = |v: Vec<f64>| {
                let total: f64 = v.iter().sum();
                v.into_iter().map(|x| x / total).collect::<Vec<f64>>()
            };
            shares_jit.push(norm(sj));
            shares_llt.push(norm(sl));
            cap_jit.push(cj / upto as f64);
            cap_llt.push(cl / upto as f64);
        }
        MeanPaths { demand, shares_jit, shares_llt, cap_jit, cap_llt }
    }
}

/// Dual-search hyperparameters. The ascent step is `eta_scale / mean(K)`;
/// the search stops once the worst weekly violation is below `tol_frac` of
/// its limit, or at `max_iters`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub eta_scale: f64,
    pub tol_frac: f64,
    pub max_iters: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig { eta_scale: 0.5, tol_frac: 0.01, max_iters: 200 }
    }
}

/// Result of one receding-horizon dual search.
#[derive(Debug, Clone)]
pub struct MpcOutcome {
    pub prices: Vec<f64>,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
    pub iterations: usize,
}

/// Everything the dual search needs about the live population at `week`.
pub struct MpcContext<'a> {
    pub world: &'a ExoWorld,
    pub week: usize,
    pub products: &'a [usize],
    pub states: &'a [SimState<f64>],
    /// Recent actions per product (only the feature window's tail matters).
    pub action_tails: &'a [Vec<(f64, f64)>],
    /// Trailing real demand per product (tail of 12 is sufficient).
    pub demand_tails: &'a [Vec<f64>],
    pub mean: &'a MeanPaths,
    /// Limits `K_{week}..K_{week+H-1}` where H is the search horizon.
    pub k_path: &'a [f64],
}

/// Projected subgradient ascent on the dual prices of the storage
/// constraint: repeatedly forward-simulates the (price-reactive) policy over
/// the horizon on mean exogenous paths, then pushes each week's price up by
/// the capacity violation it produced, clamped at zero.
pub fn mpc_dual_search(
    ctx: &MpcContext<'_>,
    policy: &dyn BuyPolicy,
    cfg: &MpcConfig,
    warm_start: Option<&[f64]>,
) -> Result<MpcOutcome> {
    let h = ctx.k_path.len();
    if h == 0 {
        return Err(domain("mpc needs a nonempty capacity path"));
    }
    let n = ctx.products.len();
    if ctx.states.len() != n || ctx.action_tails.len() != n || ctx.demand_tails.len() != n {
        return Err(domain("mpc population slices are misaligned"));
    }
    let mean_k = ctx.k_path.iter().sum::<f64>() / h as f64;
    if !(mean_k > 0.0) {
        return Err(domain("capacity limits must be positive"));
    }
    let eta = cfg.eta_scale / mean_k;

    // sandbox exogenous weeks: real posted economics, mean demand / shares /
    // caps; built once, reused every iteration
    let sandbox: Vec<Vec<ExoProductWeek>> = (0..n)
        .map(|i| {
            let p = ctx.products[i];
            (0..h)
                .map(|s| {
                    let src = ctx.world.week(p, (ctx.week + s).min(ctx.world.horizon - 1));
                    ExoProductWeek {
                        demand: ctx.mean.demand[i],
                        price: src.price,
                        cost_jit: src.cost_jit,
                        cost_llt: src.cost_llt,
                        holding_cost: src.holding_cost,
                        arrival_shares_jit: ctx.mean.shares_jit[i].clone(),
                        arrival_shares_llt: ctx.mean.shares_llt[i].clone(),
                        supply_cap_jit: ctx.mean.cap_jit[i],
                        supply_cap_llt: ctx.mean.cap_llt[i],
                        vendor_jit: src.vendor_jit,
                        vendor_llt: src.vendor_llt,
                    }
                })
                .collect()
        })
        .collect();

    let mut lambda: Vec<f64> = match warm_start {
        Some(init) if init.len() == h => init.iter().map(|&l| l.max(0.0)).collect(),
        _ => vec![0.0; h],
    };

    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..cfg.max_iters {
        iterations += 1;
        // classic diminishing subgradient step
        let eta_k = eta / ((iter + 1) as f64).sqrt();
        let mut volumes = vec![0.0; h];
        for i in 0..n {
            let p = ctx.products[i];
            let mut state = ctx.states[i].clone();
            let mut actions = ctx.action_tails[i].clone();
            let mut demands = ctx.demand_tails[i].clone();
            for s in 0..h {
                let path: Vec<f64> = (s..s + ctx.world.lead_llt + 1)
                    .map(|k| if k < h { lambda[k] } else { lambda[h - 1] })
                    .collect();
                let pctx = PolicyCtx {
                    product: p,
                    week: ctx.week + s,
                    exo: &sandbox[i][s],
                    demand_hist: &demands,
                    state: &state,
                    actions: &actions,
                    price_path: Some(&path),
                    unit_volume: ctx.world.unit_volumes[p],
                };
                let a = policy.order(&pctx)?;
                let (next, _) = step(
                    &state,
                    &sandbox[i][s],
                    (a.qty_jit, a.qty_llt),
                    None,
                    ctx.world.unit_volumes[p],
                )?;
                volumes[s] += next.onhand * ctx.world.unit_volumes[p];
                actions.push((a.qty_jit, a.qty_llt));
                demands.push(sandbox[i][s].demand);
                state = next;
            }
        }

        let worst = volumes
            .iter()
            .zip(ctx.k_path)
            .map(|(&v, &k)| (v - k) / k)
            .fold(f64::NEG_INFINITY, f64::max);
        if worst < cfg.tol_frac {
            converged = true;
            break;
        }
        for s in 0..h {
            lambda[s] = (lambda[s] + eta_k * (volumes[s] - ctx.k_path[s])).max(0.0);
        }
    }

    Ok(MpcOutcome { prices: lambda, converged, iterations })
}

/// Writes price paths as delimited rows `week,offset,lambda`.
pub fn write_price_paths<W: std::io::Write>(out: &mut W, paths: &[PricePath]) -> Result<()> {
    writeln!(out, "week,offset,lambda")?;
    for p in paths {
        for (k, lam) in p.prices.iter().enumerate() {
            writeln!(out, "{},{},{}", p.made_at, k, lam)?;
        }
    }
    Ok(())
}
