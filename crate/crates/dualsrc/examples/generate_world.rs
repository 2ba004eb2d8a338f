//! Generate a seeded synthetic world, validate it, and write it to disk.
//!
//! ```bash
//! cargo run --release --example generate_world
//! ```

use dualsrc::datagen::{generate_world, load_world, save_world, GenSpec};
use dualsrc::world::validate_world;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GenSpec {
        num_products: 20,
        horizon: 60,
        seed: 42,
        ..GenSpec::default()
    };

    let world = generate_world(&spec)?;
    let violations = validate_world(&world);
    println!(
        "generated {} products x {} weeks: {} violations",
        world.num_products,
        world.horizon,
        violations.len()
    );

    // a quick look at one product's demand series
    let demands: Vec<f64> = world.weeks[0].iter().map(|w| w.demand).collect();
    let mean = demands.iter().sum::<f64>() / demands.len() as f64;
    let peak = demands.iter().cloned().fold(0.0_f64, f64::max);
    println!("product 0: mean demand {mean:.2}, peak {peak:.2}");
    println!(
        "product 0 economics: price {:.2}, jit cost {:.2}, llt cost {:.2}",
        world.week(0, 0).price,
        world.week(0, 0).cost_jit,
        world.week(0, 0).cost_llt
    );

    let path = std::env::temp_dir().join("dualsrc_example_world.dsw");
    save_world(&path, &world, Some(&spec))?;
    let (reloaded, _) = load_world(&path)?;
    assert_eq!(world, reloaded);
    println!("saved + reloaded {} (round-trip exact)", path.display());
    Ok(())
}
