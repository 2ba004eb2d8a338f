//! Differentiate a full simulated episode with respect to the policy
//! parameters using the scalar tape, and cross-check one coordinate against
//! finite differences.
//!
//! ```bash
//! cargo run --release --example autodiff_rollout
//! ```

use dualsrc::autodiff::{Real, Tape, Var};
use dualsrc::datagen::{generate_world, GenSpec};
use dualsrc::mlp::Activation;
use dualsrc::policies::{rl_rollout, FeatureLayout, PolicyMeta, PolicyParams};
use dualsrc::sim::SimState;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // the tape in isolation: d/dx of softplus(x * x) at x = 1.5
    let tape = Tape::new();
    let x = tape.var(1.5);
    let y = (x * x).softplus();
    let grads = tape.backward(y);
    println!("softplus(x^2) at 1.5 -> value {:.5}, dy/dx {:.5}", y.value(), grads.wrt(x));

    // now through an entire episode; vendor constraints are disabled so the
    // objective is smooth and finite differences agree (with constraints
    // active, the straight-through estimator passes gradient across the flat
    // batch-rounding plateaus where finite differences report zero)
    let mut spec = GenSpec { num_products: 3, horizon: 16, seed: 5, ..GenSpec::default() };
    spec.vendor.moq_frac_max = 0.0;
    spec.vendor.batch_unit_prob = 1.0;
    spec.supply.binding_fraction = 0.0;
    let world = generate_world(&spec)?;
    let mut layout = FeatureLayout::for_world(&world);
    layout.demand_window = 4;
    layout.action_window = 2;
    let meta = PolicyMeta::new(layout, 2, world.num_products, &[8], Activation::Tanh, false);
    let init = PolicyParams::init(meta.clone(), 3);

    let objective = |theta: &[f64]| -> (f64, Vec<f64>) {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = theta.iter().map(|&v| tape.var(v)).collect();
        let start = SimState::fresh(&world, 0).lift(&tape);
        let result = rl_rollout(&world, 0, &meta, &vars, None, false, 0.995, start, 12).unwrap();
        let grads = tape.backward(result.cumulative);
        (result.cumulative.value(), vars.iter().map(|&v| grads.wrt(v)).collect())
    };

    let (value, grad) = objective(&init.data);
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("episode reward {value:.3}, gradient norm {norm:.3} over {} params", grad.len());

    // finite-difference check on the steepest coordinate
    let k = grad
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap();
    let eps = 1e-5;
    let mut plus = init.data.clone();
    plus[k] += eps;
    let mut minus = init.data.clone();
    minus[k] -= eps;
    let fd = (objective(&plus).0 - objective(&minus).0) / (2.0 * eps);
    println!("param {k}: reverse-mode {:.6} vs finite-diff {fd:.6}", grad[k]);
    Ok(())
}
