//! Train a small dual-sourcing buy policy by direct backpropagation through
//! the simulator and watch the objective climb.
//!
//! ```bash
//! cargo run --release --example train_buy_policy
//! ```

use dualsrc::datagen::{generate_world, GenSpec};
use dualsrc::mlp::Activation;
use dualsrc::policies::{FeatureLayout, PolicyMeta};
use dualsrc::training::{train_buy_policy, PriceMode, TrainConfig, WorldSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GenSpec { num_products: 12, horizon: 40, seed: 9, ..GenSpec::default() };
    let world = generate_world(&spec)?;

    let layout = FeatureLayout::for_world(&world);
    let meta = PolicyMeta::new(layout, 4, world.num_products, &[24, 24], Activation::Tanh, false);
    let cfg = TrainConfig {
        batch_size: 6,
        step_size: 0.01,
        max_batches: 150,
        train_horizon: 30,
        seed: 1,
        ..TrainConfig::default()
    };

    let (params, log) = train_buy_policy(
        &WorldSource::Generative { spec: &spec, base: &world },
        &meta,
        &cfg,
        &PriceMode::Unpriced,
        None,
        None,
    )?;

    for chunk in log.history.chunks(25) {
        let mean = chunk.iter().map(|s| s.objective).sum::<f64>() / chunk.len() as f64;
        println!("batches {:>3}..{:>3}: mean objective {mean:.1}", chunk[0].batch, chunk.last().unwrap().batch);
    }
    println!(
        "trained {} parameters over {} batches (converged: {})",
        params.data.len(),
        log.batches,
        log.converged
    );
    Ok(())
}
