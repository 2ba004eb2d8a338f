//! Train a price-aware buy policy, freeze it, then train the neural
//! coordinator to forecast the capacity prices that keep the population
//! inside sampled storage limits.
//!
//! ```bash
//! cargo run --release --example train_coordinator
//! ```

use dualsrc::coordinator::CoordMeta;
use dualsrc::datagen::{generate_world, GenSpec};
use dualsrc::mlp::Activation;
use dualsrc::policies::{FeatureLayout, PolicyMeta};
use dualsrc::training::{
    train_buy_policy, train_coordinator, CapacitySampling, PriceMode, TrainConfig, WorldSource,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GenSpec { num_products: 10, horizon: 40, seed: 17, ..GenSpec::default() };
    let world = generate_world(&spec)?;

    // step 1: a buy policy that has learned to respond to price features
    // (trained against random price paths with the penalized reward)
    let layout = FeatureLayout::for_world(&world);
    let meta = PolicyMeta::new(layout, 3, world.num_products, &[24, 24], Activation::Tanh, false);
    let cfg = TrainConfig {
        batch_size: 5,
        step_size: 0.01,
        max_batches: 120,
        train_horizon: 30,
        seed: 2,
        ..TrainConfig::default()
    };
    let (buy, _) = train_buy_policy(
        &WorldSource::Fixed(&world),
        &meta,
        &cfg,
        &PriceMode::random_default(),
        None,
        None,
    )?;
    println!("buy policy trained ({} params)", buy.data.len());

    // step 2: coordinator against the frozen policy
    let coord_meta = CoordMeta::new(world.lead_llt, &[24, 24], Activation::Tanh);
    let coord_cfg = TrainConfig {
        batch_size: 5,
        step_size: 0.01,
        max_batches: 150,
        train_horizon: 30,
        seed: 3,
        ..TrainConfig::default()
    };
    let (coordinator, log) = train_coordinator(
        &world,
        &buy,
        &coord_meta,
        &coord_cfg,
        &CapacitySampling::default(),
        None,
        None,
    )?;

    let first = &log.history[..10];
    let last = &log.history[log.history.len() - 10..];
    let mean = |s: &[dualsrc::training::BatchStat]| {
        s.iter().map(|b| b.objective).sum::<f64>() / s.len() as f64
    };
    println!("coordination loss: first 10 batches {:.1}, last 10 batches {:.1}", mean(first), mean(last));
    println!("coordinator trained ({} params, {} batches)", coordinator.data.len(), log.batches);
    Ok(())
}
