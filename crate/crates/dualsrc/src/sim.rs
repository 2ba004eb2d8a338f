//! Endogenous inventory dynamics: weekly steps, episode rollouts and
//! network-volume reductions.
//!
//! A step follows the period structure: orders placed at the start of week
//! `t` are post-processed, capped by vendor supply and spread over the
//! arrival pipeline; arrivals due this week (including the offset-0 share of
//! this week's own orders) join on-hand stock; demand then drains it with
//! lost sales (no backorders); the reward books sales revenue minus purchase
//! cost of everything the week's orders will deliver, minus holding cost on
//! end-of-week stock, and minus the capacity penalty when a price is active.
//!
//! Everything is generic over [`Real`], so rollouts run identically on plain
//! floats and on an autodiff tape.

use std::io::Write;

use crate::autodiff::Real;
use crate::error::{domain, Result};
use crate::world::{compute_arrivals, ExoProductWeek, ExoWorld};

/// Per-product endogenous state: on-hand stock and the in-flight arrival
/// pipelines (entry `k` is due `k` weeks from the current week).
#[derive(Debug, Clone)]
pub struct SimState<S> {
    pub week: usize,
    pub onhand: S,
    pub pipeline_jit: Vec<S>,
    pub pipeline_llt: Vec<S>,
}

impl SimState<f64> {
    /// Fresh start-of-horizon state for one product.
    pub fn fresh(world: &ExoWorld, product: usize) -> Self {
        SimState {
            week: 0,
            onhand: world.init_inventory[product],
            pipeline_jit: vec![0.0; world.lead_jit + 1],
            pipeline_llt: vec![0.0; world.lead_llt + 1],
        }
    }

    /// Copies the state onto a tape as leaf variables.
    pub fn lift<'t>(&self, tape: &'t crate::autodiff::Tape) -> SimState<crate::autodiff::Var<'t>> {
        SimState {
            week: self.week,
            onhand: tape.var(self.onhand),
            pipeline_jit: self.pipeline_jit.iter().map(|&v| tape.var(v)).collect(),
            pipeline_llt: self.pipeline_llt.iter().map(|&v| tape.var(v)).collect(),
        }
    }
}

impl<S: Real> SimState<S> {
    pub fn to_f64(&self) -> SimState<f64> {
        SimState {
            week: self.week,
            onhand: self.onhand.val(),
            pipeline_jit: self.pipeline_jit.iter().map(|s| s.val()).collect(),
            pipeline_llt: self.pipeline_llt.iter().map(|s| s.val()).collect(),
        }
    }

    /// Total units in flight across both channels.
    pub fn inflight_total(&self) -> f64 {
        self.pipeline_jit.iter().chain(&self.pipeline_llt).map(|s| s.val()).sum()
    }
}

/// Everything observable about one simulated week.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome<S> {
    pub reward: S,
    pub sales: S,
    pub onhand_pre: S,
    pub onhand_end: S,
    /// Units the vendor will deliver from this week's JIT order (the
    /// purchase-cost basis).
    pub arrivals_jit: S,
    /// Units the vendor will deliver from this week's LLT order.
    pub arrivals_llt: S,
    pub inflight_total: S,
}

/// Advances one product by one week.
///
/// `lambda` is the storage-capacity price applied to end-of-week inventory;
/// it alters only the reward, never the dynamics.
pub fn step<S: Real>(
    state: &SimState<S>,
    exo: &ExoProductWeek,
    action: (S, S),
    lambda: Option<S>,
    unit_volume: f64,
) -> Result<(SimState<S>, StepOutcome<S>)> {
    if state.pipeline_jit.len() != exo.arrival_shares_jit.len() {
        return Err(domain(format!(
            "jit pipeline has {} slots but shares have {}",
            state.pipeline_jit.len(),
            exo.arrival_shares_jit.len()
        )));
    }
    if state.pipeline_llt.len() != exo.arrival_shares_llt.len() {
        return Err(domain(format!(
            "llt pipeline has {} slots but shares have {}",
            state.pipeline_llt.len(),
            exo.arrival_shares_llt.len()
        )));
    }

    let (q_jit, q_llt) = action;
    let new_jit = compute_arrivals(q_jit, exo.supply_cap_jit, &exo.arrival_shares_jit, &exo.vendor_jit)?;
    let new_llt = compute_arrivals(q_llt, exo.supply_cap_llt, &exo.arrival_shares_llt, &exo.vendor_llt)?;

    // purchase-cost basis: everything this week's orders will deliver
    let arrivals_jit = crate::autodiff::sum(&new_jit);
    let arrivals_llt = crate::autodiff::sum(&new_llt);

    let pipe_jit: Vec<S> = state
        .pipeline_jit
        .iter()
        .zip(&new_jit)
        .map(|(&held, &new)| held + new)
        .collect();
    let pipe_llt: Vec<S> = state
        .pipeline_llt
        .iter()
        .zip(&new_llt)
        .map(|(&held, &new)| held + new)
        .collect();

    let onhand_pre = state.onhand + pipe_jit[0] + pipe_llt[0];
    let onhand_end = (onhand_pre - exo.demand).relu();
    let sales = onhand_pre.cap_below(exo.demand); // min(d, I_pre)

    let mut reward = sales * exo.price
        - arrivals_jit * exo.cost_jit
        - arrivals_llt * exo.cost_llt
        - onhand_end * exo.holding_cost;
    if let Some(price) = lambda {
        reward = reward - price * onhand_end * unit_volume;
    }

    // advance pipelines: slot 0 was consumed, everything shifts one week
    let zero = onhand_pre.lift(0.0);
    let next_jit: Vec<S> = pipe_jit[1..].iter().copied().chain(std::iter::once(zero)).collect();
    let next_llt: Vec<S> = pipe_llt[1..].iter().copied().chain(std::iter::once(zero)).collect();

    let mut inflight = zero;
    for &s in next_jit.iter().chain(&next_llt) {
        inflight = inflight + s;
    }

    let outcome = StepOutcome {
        reward,
        sales,
        onhand_pre,
        onhand_end,
        arrivals_jit,
        arrivals_llt,
        inflight_total: inflight,
    };
    let next = SimState {
        week: state.week + 1,
        onhand: onhand_end,
        pipeline_jit: next_jit,
        pipeline_llt: next_llt,
    };
    Ok((next, outcome))
}

/// What an order policy sees when queried for week `week`.
pub struct RolloutView<'a, S> {
    pub week: usize,
    pub state: &'a SimState<S>,
    /// All actions taken so far in this rollout, oldest first.
    pub actions: &'a [(S, S)],
    /// Capacity-price forecast for weeks `week..=week+L`, when coordinated.
    pub price_path: Option<&'a [f64]>,
}

/// Full-episode result for one product.
#[derive(Debug, Clone)]
pub struct RolloutResult<S> {
    pub steps: Vec<StepOutcome<S>>,
    /// Sum of gamma^(t - start) * R_t over the simulated window.
    pub cumulative: S,
    pub final_state: SimState<S>,
    pub actions: Vec<(S, S)>,
}

/// Rolls one product forward from `start.week` to `end_week`, querying
/// `policy` for each week's order. Rewards are discounted by `gamma` per
/// week elapsed since the start of the window.
///
/// `prices[t - start.week]` is the price path visible to the policy at week
/// `t`; when `penalize` is set, `prices[..][0]` also enters the reward.
pub fn rollout<S: Real, P>(
    world: &ExoWorld,
    product: usize,
    mut policy: P,
    prices: Option<&[Vec<f64>]>,
    penalize: bool,
    gamma: f64,
    start: SimState<S>,
    end_week: usize,
) -> Result<RolloutResult<S>>
where
    P: FnMut(RolloutView<'_, S>) -> Result<(S, S)>,
{
    if start.week >= end_week || end_week > world.horizon {
        return Err(domain(format!(
            "rollout window [{}, {}) is invalid for horizon {}",
            start.week, end_week, world.horizon
        )));
    }
    let start_week = start.week;
    let mut state = start;
    let mut actions: Vec<(S, S)> = Vec::with_capacity(end_week - start_week);
    let mut steps = Vec::with_capacity(end_week - start_week);
    let mut cumulative: Option<S> = None;
    let mut discount = 1.0;

    for t in start_week..end_week {
        let rel = t - start_week;
        let path = prices.map(|p| p[rel].as_slice());
        let view = RolloutView {
            week: t,
            state: &state,
            actions: &actions,
            price_path: path,
        };
        let (q_jit, q_llt) = policy(view)?;
        for (name, q) in [("jit", q_jit.val()), ("llt", q_llt.val())] {
            if !q.is_finite() || q < 0.0 {
                return Err(domain(format!(
                    "policy returned invalid {name} order {q} at week {t}"
                )));
            }
        }

        let lambda = if penalize {
            path.map(|p| q_jit.lift(p[0]))
        } else {
            None
        };
        let exo = world.week(product, t);
        let (next, outcome) = step(&state, exo, (q_jit, q_llt), lambda, world.unit_volumes[product])?;

        let contribution = outcome.reward * discount;
        cumulative = Some(match cumulative {
            None => contribution,
            Some(acc) => acc + contribution,
        });
        discount *= gamma;

        actions.push((q_jit, q_llt));
        steps.push(outcome);
        state = next;
    }

    Ok(RolloutResult {
        steps,
        cumulative: cumulative.expect("window is non-empty"),
        final_state: state,
        actions,
    })
}

/// Network storage volume: sum of per-product on-hand times unit volume.
pub fn network_volume<S: Real>(states: &[SimState<S>], unit_volumes: &[f64]) -> Result<S> {
    if states.len() != unit_volumes.len() {
        return Err(domain(format!(
            "{} states vs {} unit volumes",
            states.len(),
            unit_volumes.len()
        )));
    }
    if states.is_empty() {
        return Err(domain("network_volume needs at least one product"));
    }
    let mut acc = states[0].onhand * unit_volumes[0];
    for (state, &v) in states.iter().zip(unit_volumes).skip(1) {
        acc = acc + state.onhand * v;
    }
    Ok(acc)
}

/// Writes one product's trajectory as delimited rows:
/// `week,product,demand,sales,onhand,arrivals_jit,arrivals_llt,reward,lambda`.
pub fn write_trajectory<S: Real, W: Write>(
    out: &mut W,
    world: &ExoWorld,
    product: usize,
    start_week: usize,
    steps: &[StepOutcome<S>],
    lambdas: Option<&[f64]>,
) -> Result<()> {
    writeln!(out, "week,product,demand,sales,onhand,arrivals_jit,arrivals_llt,reward,lambda")?;
    for (i, s) in steps.iter().enumerate() {
        let t = start_week + i;
        let lambda = lambdas.map(|l| l[i]).unwrap_or(0.0);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            t,
            product,
            world.week(product, t).demand,
            s.sales.val(),
            s.onhand_end.val(),
            s.arrivals_jit.val(),
            s.arrivals_llt.val(),
            s.reward.val(),
            lambda
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ExoProductWeek, VendorConstraints};

    fn week(demand: f64, price: f64, holding: f64) -> ExoProductWeek {
        ExoProductWeek {
            demand,
            price,
            cost_jit: 0.0,
            cost_llt: 0.0,
            holding_cost: holding,
            arrival_shares_jit: vec![1.0],
            arrival_shares_llt: vec![0.0, 1.0],
            supply_cap_jit: 1e9,
            supply_cap_llt: 1e9,
            vendor_jit: VendorConstraints::NONE,
            vendor_llt: VendorConstraints::NONE,
        }
    }

    fn state(onhand: f64) -> SimState<f64> {
        SimState {
            week: 0,
            onhand,
            pipeline_jit: vec![0.0],
            pipeline_llt: vec![0.0, 0.0],
        }
    }

    #[test]
    fn step_books_lost_sales() {
        // onhand 5, demand 8, no orders, p=2, h=1
        let (next, out) = step(&state(5.0), &week(8.0, 2.0, 1.0), (0.0, 0.0), None, 1.0).unwrap();
        assert_eq!(out.sales, 5.0);
        assert_eq!(out.onhand_end, 0.0);
        assert_eq!(out.reward, 10.0);
        assert_eq!(next.week, 1);
    }

    #[test]
    fn null_step_is_zero() {
        let (_, out) = step(&state(0.0), &week(0.0, 2.0, 1.0), (0.0, 0.0), None, 1.0).unwrap();
        assert_eq!(out.reward, 0.0);
        assert_eq!(out.onhand_end, 0.0);
    }

    #[test]
    fn step_applies_capacity_penalty() {
        // onhand 10, demand 4, p=1, h=0.5, lambda=0.1, v=2
        let (_, out) = step(&state(10.0), &week(4.0, 1.0, 0.5), (0.0, 0.0), Some(0.1), 2.0).unwrap();
        assert!((out.reward - (4.0 - 3.0 - 1.2)).abs() < 1e-12, "reward {}", out.reward);
    }

    fn det_world(horizon: usize) -> ExoWorld {
        // constant demand 5, price 1, zero costs, L1=0 single-point shares
        ExoWorld {
            num_products: 1,
            horizon,
            lead_jit: 0,
            lead_llt: 1,
            init_inventory: vec![5.0],
            weeks: vec![vec![week(5.0, 1.0, 0.0); horizon]],
            capacity_limits: vec![1e9; horizon],
            unit_volumes: vec![1.0],
            discount_factor: 0.9,
        }
    }

    #[test]
    fn rollout_with_replenishing_policy() {
        let world = det_world(3);
        let start = SimState::fresh(&world, 0);
        let result = rollout(
            &world,
            0,
            |_view| Ok((5.0, 0.0)),
            None,
            false,
            world.discount_factor,
            start,
            3,
        )
        .unwrap();
        let g = world.discount_factor;
        assert!((result.cumulative - (5.0 + 5.0 * g + 5.0 * g * g)).abs() < 1e-12);
    }

    #[test]
    fn rollout_with_idle_policy_sells_initial_stock_only() {
        let world = det_world(3);
        let start = SimState::fresh(&world, 0);
        let result = rollout(&world, 0, |_v| Ok((0.0, 0.0)), None, false, world.discount_factor, start, 3).unwrap();
        assert!((result.cumulative - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rollout_rejects_negative_orders() {
        let world = det_world(2);
        let start = SimState::fresh(&world, 0);
        let err = rollout(&world, 0, |_v| Ok((-1.0, 0.0)), None, false, 1.0, start, 2);
        assert!(err.is_err());
    }

    #[test]
    fn network_volume_examples() {
        let mk = |onhand: f64| SimState {
            week: 0,
            onhand,
            pipeline_jit: vec![0.0],
            pipeline_llt: vec![0.0],
        };
        assert_eq!(network_volume(&[mk(0.0), mk(0.0)], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(network_volume(&[mk(3.0), mk(4.0)], &[1.0, 2.0]).unwrap(), 11.0);
        assert_eq!(network_volume(&[mk(7.0)], &[1.0]).unwrap(), 7.0);
        assert!(network_volume(&[mk(1.0)], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn reward_decomposition_identity_randomized() {
        let mut rng = crate::rng::Rng::new(21);
        for _ in 0..1000 {
            let l1 = rng.below(3);
            let l2 = l1 + 1 + rng.below(3);
            let exo = ExoProductWeek {
                demand: rng.range(0.0, 20.0),
                price: rng.range(0.1, 10.0),
                cost_jit: rng.range(0.0, 5.0),
                cost_llt: rng.range(0.0, 5.0),
                holding_cost: rng.range(0.0, 1.0),
                arrival_shares_jit: rng.dirichlet(&vec![1.0; l1 + 1]),
                arrival_shares_llt: rng.dirichlet(&vec![1.0; l2 + 1]),
                supply_cap_jit: rng.range(0.0, 30.0),
                supply_cap_llt: rng.range(0.0, 30.0),
                vendor_jit: VendorConstraints {
                    min_order_qty: rng.range(0.0, 8.0),
                    batch_size: rng.range(1.0, 4.0).round(),
                },
                vendor_llt: VendorConstraints::NONE,
            };
            let st = SimState {
                week: 0,
                onhand: rng.range(0.0, 30.0),
                pipeline_jit: (0..=l1).map(|_| rng.range(0.0, 10.0)).collect(),
                pipeline_llt: (0..=l2).map(|_| rng.range(0.0, 10.0)).collect(),
            };
            let action = (rng.range(0.0, 25.0), rng.range(0.0, 25.0));
            let lambda = if rng.uniform() < 0.5 { Some(rng.range(0.0, 2.0)) } else { None };
            let v = rng.range(0.1, 3.0);
            let (_, out) = step(&st, &exo, action, lambda, v).unwrap();

            let penalty = lambda.unwrap_or(0.0) * v * out.onhand_end;
            let residual = out.reward + exo.cost_jit * out.arrivals_jit
                + exo.cost_llt * out.arrivals_llt
                + exo.holding_cost * out.onhand_end
                + penalty
                - exo.price * out.sales;
            assert!(residual.abs() < 1e-9, "residual {residual}");

            // lost-sales clamp
            if exo.demand >= out.onhand_pre {
                assert_eq!(out.sales, out.onhand_pre - out.onhand_end);
            } else {
                assert_eq!(out.sales, exo.demand);
            }
        }
    }

    #[test]
    fn world_is_untouched_by_rollouts() {
        let world = det_world(4);
        let before = world.fingerprint();
        let start = SimState::fresh(&world, 0);
        let _ = rollout(&world, 0, |_v| Ok((3.0, 1.0)), None, false, 1.0, start, 4).unwrap();
        let start = SimState::fresh(&world, 0);
        let _ = rollout(&world, 0, |_v| Ok((0.0, 0.0)), None, false, 1.0, start, 4).unwrap();
        assert_eq!(before, world.fingerprint());
    }

    #[test]
    fn zero_demand_zero_orders_is_inert() {
        let mut world = det_world(5);
        for w in &mut world.weeks[0] {
            w.demand = 0.0;
        }
        let start = SimState::fresh(&world, 0);
        let result = rollout(&world, 0, |_v| Ok((0.0, 0.0)), None, false, 1.0, start, 5).unwrap();
        for s in &result.steps {
            assert_eq!(s.reward, 0.0);
            assert_eq!(s.onhand_end, 5.0);
        }
    }
}
