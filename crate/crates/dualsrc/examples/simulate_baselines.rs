//! Roll the classical BSHT and Tailored Base-Surge policies through the
//! simulator and export one product's weekly trajectory.
//!
//! ```bash
//! cargo run --release --example simulate_baselines
//! ```

use dualsrc::datagen::{generate_world, GenSpec};
use dualsrc::policies::{bsht_order, tbs_order, TbsConfig};
use dualsrc::sim::{rollout, write_trajectory, SimState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GenSpec { num_products: 5, horizon: 40, seed: 11, ..GenSpec::default() };
    let world = generate_world(&spec)?;
    let product = 0;

    // single-source base-stock on the horizon tip
    let start = SimState::fresh(&world, product);
    let bsht = rollout(
        &world,
        product,
        |view| {
            let a = bsht_order(&world, product, view.week, &view.state.to_f64());
            Ok((a.qty_jit, a.qty_llt))
        },
        None,
        false,
        world.discount_factor,
        start,
        world.horizon,
    )?;

    // dual sourcing: constant-rate discounted LLT orders plus JIT top-ups
    let cfg = TbsConfig::new(0.5, world.lead_llt);
    let start = SimState::fresh(&world, product);
    let tbs = rollout(
        &world,
        product,
        |view| {
            let a = tbs_order(&world, product, view.week, &view.state.to_f64(), &cfg);
            Ok((a.qty_jit, a.qty_llt))
        },
        None,
        false,
        world.discount_factor,
        start,
        world.horizon,
    )?;

    println!("bsht cumulative discounted reward: {:.2}", bsht.cumulative);
    println!("tbs  cumulative discounted reward: {:.2}", tbs.cumulative);

    let path = std::env::temp_dir().join("dualsrc_example_trajectory.csv");
    let mut file = std::fs::File::create(&path)?;
    write_trajectory(&mut file, &world, product, 0, &tbs.steps, None)?;
    println!("wrote per-week trajectory to {}", path.display());
    Ok(())
}
