//! End-to-end comparison on a small world: train the neural policies, grid
//! the TBS scale, and backtest everything against BSHT with violation
//! metrics under sampled capacity paths.
//!
//! ```bash
//! cargo run --release --example backtest_report
//! ```

use dualsrc::backtest::{
    run_backtest, tbs_grid_search, unconstrained_network_volumes, BacktestOptions,
    CoordinatorKind, MeanSource,
};
use dualsrc::coordinator::CoordMeta;
use dualsrc::datagen::{generate_world, GenSpec};
use dualsrc::mlp::Activation;
use dualsrc::policies::{Bsht, BuyPolicy, FeatureLayout, PolicyMeta, RlPolicy, Tbs, TbsConfig};
use dualsrc::training::{
    sample_capacity_paths, train_buy_policy, train_coordinator, CapacitySampling, PriceMode,
    TrainConfig, WorldSource,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GenSpec { num_products: 12, horizon: 50, seed: 31, ..GenSpec::default() };
    let world = generate_world(&spec)?;
    let split = 30;

    let layout = FeatureLayout::for_world(&world);
    let meta = PolicyMeta::new(layout, 3, world.num_products, &[24, 24], Activation::Tanh, false);
    let cfg = TrainConfig {
        batch_size: 6,
        step_size: 0.01,
        max_batches: 200,
        train_horizon: split,
        seed: 4,
        ..TrainConfig::default()
    };
    let (buy, _) = train_buy_policy(
        &WorldSource::Generative { spec: &spec, base: &world },
        &meta,
        &cfg,
        &PriceMode::random_default(),
        None,
        None,
    )?;
    let coord_meta = CoordMeta::new(world.lead_llt, &[24, 24], Activation::Tanh);
    let (coordinator, _) = train_coordinator(
        &world,
        &buy,
        &coord_meta,
        &TrainConfig { max_batches: 150, batch_size: 5, train_horizon: split, seed: 5, ..cfg.clone() },
        &CapacitySampling::default(),
        None,
        None,
    )?;

    let (alpha, _) = tbs_grid_search(&world, split, &[0.0, 0.25, 0.5, 0.75, 1.0])?;
    let bsht = Bsht;
    let tbs = Tbs(TbsConfig::new(alpha, world.lead_llt));
    let rl = RlPolicy::new("dualsrc-rl", buy);
    let policies: Vec<&dyn BuyPolicy> = vec![&bsht, &tbs, &rl];

    let demand_paths: Vec<Vec<f64>> = (0..world.num_products)
        .map(|p| world.weeks[p].iter().map(|w| w.demand).collect())
        .collect();
    let anchor = unconstrained_network_volumes(&world, &rl, &demand_paths, split)?;
    let peak = anchor.iter().cloned().fold(0.0_f64, f64::max);
    let paths = sample_capacity_paths(
        peak,
        world.horizon - split,
        5,
        99,
        &CapacitySampling::default(),
    )?;

    let options = BacktestOptions {
        split,
        price_horizon: world.lead_llt,
        mean_source: MeanSource::Generative(Box::new(spec)),
        reference_policy: Some("dualsrc-rl".into()),
        seed: 0,
    };
    let coordinators = vec![
        CoordinatorKind::Unconstrained,
        CoordinatorKind::Neural(coordinator),
        CoordinatorKind::Mpc(Default::default()),
    ];
    let report = run_backtest(&world, &policies, &coordinators, &paths, &options)?;

    println!("\n% of BSHT (backtest weeks {}..{}):", split, world.horizon);
    for row in &report.table1 {
        println!("  {:<12} {:>8.2}", row.policy, row.pct_of_bsht.unwrap_or(f64::NAN));
    }
    println!("\nviolations for dualsrc-rl across {} capacity paths:", paths.len());
    for row in report.table2.iter().filter(|r| r.policy == "dualsrc-rl") {
        println!(
            "  {:<8} M1 {:>5.1}%  M3 {:>5.1}%  reward {:>6.1}",
            row.coordinator, row.m1, row.m3, row.reward_pct_of_unconstrained
        );
    }
    Ok(())
}
