//! Receding-horizon dual-price search: forward-simulate a price-reactive
//! policy on mean exogenous paths and ascend the storage prices until the
//! plan fits the capacity limits.
//!
//! ```bash
//! cargo run --release --example mpc_prices
//! ```

use dualsrc::coordinator::{mpc_dual_search, MeanPaths, MpcConfig, MpcContext};
use dualsrc::datagen::{generate_world, GenSpec};
use dualsrc::error::Result;
use dualsrc::policies::{BuyPolicy, PolicyCtx};
use dualsrc::sim::SimState;
use dualsrc::world::Action;

/// A hand-written policy that backs off as the current capacity price
/// rises; stands in for the trained network.
struct PriceSensitive;

impl BuyPolicy for PriceSensitive {
    fn name(&self) -> String {
        "price-sensitive".into()
    }

    fn order(&self, ctx: &PolicyCtx<'_>) -> Result<Action> {
        let lambda = ctx.price_path.map(|p| p[0]).unwrap_or(0.0);
        let base = 2.0 * ctx.exo.demand.max(1.0);
        Ok(Action {
            qty_jit: (base - 3.0 * lambda * ctx.unit_volume * base).max(0.0),
            qty_llt: 0.0,
        })
    }
}

fn main() -> Result<()> {
    let spec = GenSpec { num_products: 6, horizon: 30, seed: 23, ..GenSpec::default() };
    let world = generate_world(&spec)?;
    let week = 12;
    let products: Vec<usize> = (0..world.num_products).collect();
    let states: Vec<SimState<f64>> =
        products.iter().map(|&p| SimState::fresh(&world, p)).collect();
    let action_tails = vec![Vec::new(); products.len()];
    let demand_tails: Vec<Vec<f64>> =
        products.iter().map(|&p| world.demand_history(p, week)).collect();
    let mean = MeanPaths::from_history(&world, &products, week);

    // a deliberately tight capacity path over the search horizon
    let expected: f64 = mean
        .demand
        .iter()
        .zip(&world.unit_volumes)
        .map(|(&d, &v)| 1.2 * d * v)
        .sum();
    let k_path = vec![expected; world.lead_llt + 1];

    let ctx = MpcContext {
        world: &world,
        week,
        products: &products,
        states: &states,
        action_tails: &action_tails,
        demand_tails: &demand_tails,
        mean: &mean,
        k_path: &k_path,
    };
    let out = mpc_dual_search(&ctx, &PriceSensitive, &MpcConfig::default(), None)?;
    println!(
        "dual search finished in {} iterations (converged: {})",
        out.iterations, out.converged
    );
    for (s, lambda) in out.prices.iter().enumerate() {
        let marker = if *lambda > 1e-9 { "binding" } else { "slack" };
        println!("  week +{s}: lambda = {lambda:.4} ({marker})");
    }
    Ok(())
}
