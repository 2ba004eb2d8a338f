//! Direct-backpropagation training of the buy policy and the neural
//! coordinator, plus capacity-path sampling and binary checkpoints.
//!
//! Buy-policy training maximizes the minibatch sum of discounted episode
//! rewards by differentiating straight through the simulator: each sampled
//! product rolls out on its own tape, per-product gradients are reduced in a
//! fixed order, and the optimizer ascends. Coordinator training holds the
//! buy policy frozen, rolls the sampled population with the coordinator's
//! price forecasts fed back into the policy features, and descends the
//! violation + price-magnitude + forecast-consistency loss.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::coordinator::{
    coord_featurize, forecast_prices, coordination_loss, CoordInputs, CoordMeta, CoordParams,
};
use crate::datagen::{generate_world, GenSpec};
use crate::error::{domain, Error, Result};
use crate::policies::{demand_scale, featurize, rl_order, rl_rollout, trailing_mean, FeatureInputs, PolicyMeta, PolicyParams};
use crate::rng::Rng;
use crate::sim::{network_volume, step, SimState};
use crate::world::ExoWorld;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Adam with default decay rates; the stable choice.
    Adam,
    /// Plain gradient steps, for literal fidelity to the update rule.
    Sgd,
}

/// Shared knobs for both training loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Minibatch size M.
    pub batch_size: usize,
    /// Step size eta.
    pub step_size: f64,
    pub max_batches: usize,
    /// Training window T^Train.
    pub train_horizon: usize,
    /// Discount override; None uses the world's discount factor.
    pub gamma: Option<f64>,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Ordered reductions and stream-derived sampling; bit-identical reruns.
    pub deterministic: bool,
    /// Convergence: stop when the moving-average objective (window
    /// `converge_window`) improves by less than `converge_rel` over
    /// `converge_patience` batches.
    pub converge_window: usize,
    pub converge_patience: usize,
    pub converge_rel: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            step_size: 0.01,
            max_batches: 600,
            train_horizon: 72,
            gamma: None,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            deterministic: true,
            converge_window: 50,
            converge_patience: 200,
            converge_rel: 0.001,
        }
    }
}

impl TrainConfig {
    fn validate(&self, world: &ExoWorld) -> Result<()> {
        if self.batch_size == 0 {
            return Err(domain("batch_size must be >= 1"));
        }
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(domain("step_size must be finite and >= 0"));
        }
        if self.train_horizon == 0 || self.train_horizon > world.horizon {
            return Err(domain(format!(
                "train_horizon {} must lie in [1, {}]",
                self.train_horizon, world.horizon
            )));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(domain("gamma must be in (0, 1]"));
            }
        }
        Ok(())
    }

    fn effective_gamma(&self, world: &ExoWorld) -> f64 {
        self.gamma.unwrap_or(world.discount_factor)
    }
}

/// Capacity prices seen by the policy during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PriceMode {
    /// No price features, unpenalized reward.
    Unpriced,
    /// Random piecewise-constant price paths and the penalized reward, so
    /// the policy learns how to respond to capacity prices before any
    /// coordinator exists.
    RandomPaths {
        /// Price level cap as a multiple of mean unit margin per volume.
        scale: f64,
        /// Probability an episode is left unpriced.
        zero_prob: f64,
        /// Weeks per constant price block.
        block: usize,
    },
}

impl PriceMode {
    pub fn random_default() -> Self {
        PriceMode::RandomPaths { scale: 1.0, zero_prob: 0.3, block: 8 }
    }
}

/// Worlds used per epoch: one fixed path, or a fresh sample from the
/// generator each epoch (epoch 0 reuses the base world).
pub enum WorldSource<'a> {
    Fixed(&'a ExoWorld),
    Generative { spec: &'a GenSpec, base: &'a ExoWorld },
}

impl<'a> WorldSource<'a> {
    pub fn base(&self) -> &ExoWorld {
        match self {
            WorldSource::Fixed(w) => w,
            WorldSource::Generative { base, .. } => base,
        }
    }

    fn world_for_epoch(&self, epoch: u64) -> Result<std::borrow::Cow<'a, ExoWorld>> {
        match self {
            WorldSource::Fixed(w) => Ok(std::borrow::Cow::Borrowed(w)),
            WorldSource::Generative { spec, base } => {
                if epoch == 0 {
                    Ok(std::borrow::Cow::Borrowed(base))
                } else {
                    let mut fresh = (*spec).clone();
                    fresh.seed = spec.seed ^ (0x5eed_0000 + epoch).wrapping_mul(0x9e37_79b9);
                    Ok(std::borrow::Cow::Owned(generate_world(&fresh)?))
                }
            }
        }
    }
}

/// Adam with the usual decay rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One update; `sign` is +1 to ascend, -1 to descend.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, sign: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] += sign * lr * mhat / (vhat.sqrt() + EPS);
        }
    }
}

fn sgd_step(params: &mut [f64], grad: &[f64], lr: f64, sign: f64) {
    for i in 0..params.len() {
        params[i] += sign * lr * grad[i];
    }
}

/// Deterministic shuffled cycling over the product set.
struct Cycler {
    perm: Vec<u32>,
    cursor: usize,
    epoch: u64,
}

impl Cycler {
    fn new(n: usize, rng: &mut Rng) -> Self {
        let mut perm: Vec<u32> = (0..n as u32).collect();
        rng.shuffle(&mut perm);
        Cycler { perm, cursor: 0, epoch: 0 }
    }

    /// Next minibatch of size m; signals when a new epoch begins.
    fn next_batch(&mut self, m: usize, rng: &mut Rng) -> (Vec<usize>, bool) {
        let mut out = Vec::with_capacity(m);
        let mut new_epoch = false;
        for _ in 0..m {
            if self.cursor >= self.perm.len() {
                rng.shuffle(&mut self.perm);
                self.cursor = 0;
                self.epoch += 1;
                new_epoch = true;
            }
            out.push(self.perm[self.cursor] as usize);
            self.cursor += 1;
        }
        (out, new_epoch)
    }
}

/// Callback invoked with checkpoints at abort and completion.
pub type CheckpointSink<'a> = &'a mut dyn FnMut(&Checkpoint) -> Result<()>;

/// Per-batch training diagnostics. Wall time is informational only; it is
/// not part of the deterministic checkpoint state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchStat {
    pub batch: usize,
    pub objective: f64,
    pub grad_norm: f64,
    #[serde(default)]
    pub wall_ms: f64,
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub history: Vec<BatchStat>,
    pub batches: usize,
    pub converged: bool,
}

fn moving_average(history: &[BatchStat], end: usize, window: usize) -> f64 {
    let slice = &history[end - window..end];
    slice.iter().map(|s| s.objective).sum::<f64>() / window as f64
}

fn has_converged(history: &[BatchStat], cfg: &TrainConfig, maximize: bool) -> bool {
    let n = history.len();
    let (w, p) = (cfg.converge_window, cfg.converge_patience);
    if n < w + p {
        return false;
    }
    let now = moving_average(history, n, w);
    let then = moving_average(history, n - p, w);
    let improvement = if maximize { now - then } else { then - now };
    improvement < cfg.converge_rel * then.abs().max(1e-12)
}

/// Random piecewise-constant price path for priced policy training.
fn sample_price_path(
    rng: &mut Rng,
    weeks: usize,
    horizon: usize,
    lambda_ref: f64,
    scale: f64,
    zero_prob: f64,
    block: usize,
) -> Vec<Vec<f64>> {
    let total = weeks + horizon;
    let mut levels = Vec::with_capacity(total);
    if rng.uniform() < zero_prob {
        levels.resize(total, 0.0);
    } else {
        let mut level = 0.0;
        for t in 0..total {
            if t % block.max(1) == 0 {
                let u = rng.uniform();
                level = lambda_ref * scale * u * u;
            }
            levels.push(level);
        }
    }
    (0..weeks).map(|t| levels[t..t + horizon + 1].to_vec()).collect()
}

/// Mean sale margin per unit volume; anchors random price levels.
fn reference_price_level(world: &ExoWorld) -> f64 {
    let mut total = 0.0;
    for p in 0..world.num_products {
        let w = world.week(p, 0);
        total += ((w.price - w.cost_jit) / world.unit_volumes[p]).max(0.0);
    }
    (total / world.num_products as f64).max(1e-6)
}

/// Serializable identity of a checkpointed model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum CheckpointKind {
    Policy { meta: PolicyMeta },
    Coordinator { meta: CoordMeta },
}

/// Everything needed to resume training bit-for-bit: parameters, optimizer
/// moments, batch iterator position, RNG state and the loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub seed: u64,
    pub batch: usize,
    pub epoch: u64,
    pub cursor: usize,
    pub perm: Vec<u32>,
    pub rng_state: [u64; 4],
    pub adam_t: u64,
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub history: Vec<BatchStat>,
}

impl Checkpoint {
    pub fn policy_params(&self) -> Result<PolicyParams> {
        match &self.kind {
            CheckpointKind::Policy { meta } => {
                Ok(PolicyParams { meta: meta.clone(), data: self.params.clone() })
            }
            _ => Err(domain("checkpoint does not hold a buy policy")),
        }
    }

    pub fn coord_params(&self) -> Result<CoordParams> {
        match &self.kind {
            CheckpointKind::Coordinator { meta } => {
                Ok(CoordParams { meta: meta.clone(), data: self.params.clone() })
            }
            _ => Err(domain("checkpoint does not hold a coordinator")),
        }
    }
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    kind: CheckpointKind,
    seed: u64,
    batch: usize,
    epoch: u64,
    cursor: usize,
    perm: Vec<u32>,
    rng_state: [u64; 4],
    adam_t: u64,
    params_len: usize,
    history_len: usize,
}

/// Binary checkpoint: one JSON header line, then little-endian f64 sections
/// (params, Adam moments, objective history, gradient norms).
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    use std::io::Write;
    let header = CheckpointHeader {
        version: CHECKPOINT_FORMAT_VERSION,
        kind: ck.kind.clone(),
        seed: ck.seed,
        batch: ck.batch,
        epoch: ck.epoch,
        cursor: ck.cursor,
        perm: ck.perm.clone(),
        rng_state: ck.rng_state,
        adam_t: ck.adam_t,
        params_len: ck.params.len(),
        history_len: ck.history.len(),
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut out, &header).map_err(|e| domain(format!("header encode: {e}")))?;
    out.write_all(b"\n")?;
    let mut write_f64s = |values: &[f64]| -> Result<()> {
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    write_f64s(&ck.params)?;
    write_f64s(&ck.adam_m)?;
    write_f64s(&ck.adam_v)?;
    let objectives: Vec<f64> = ck.history.iter().map(|s| s.objective).collect();
    let norms: Vec<f64> = ck.history.iter().map(|s| s.grad_norm).collect();
    write_f64s(&objectives)?;
    write_f64s(&norms)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(Error::Parse { offset: 0, message: "missing checkpoint header".into() })?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::Parse { offset: 0, message: format!("bad header: {e}") })?;
    if header.version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Version { found: header.version, expected: CHECKPOINT_FORMAT_VERSION });
    }
    let mut offset = newline + 1;
    let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
        let need = n * 8;
        if offset + need > bytes.len() {
            return Err(Error::Parse {
                offset: offset as u64,
                message: format!("truncated section: need {need} bytes"),
            });
        }
        let out: Vec<f64> = bytes[offset..offset + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += need;
        Ok(out)
    };
    let params = read_f64s(header.params_len)?;
    let adam_m = read_f64s(header.params_len)?;
    let adam_v = read_f64s(header.params_len)?;
    let objectives = read_f64s(header.history_len)?;
    let norms = read_f64s(header.history_len)?;
    let history = objectives
        .into_iter()
        .zip(norms)
        .enumerate()
        .map(|(i, (objective, grad_norm))| BatchStat { batch: i, objective, grad_norm, wall_ms: 0.0 })
        .collect();
    Ok(Checkpoint {
        kind: header.kind,
        seed: header.seed,
        batch: header.batch,
        epoch: header.epoch,
        cursor: header.cursor,
        perm: header.perm,
        rng_state: header.rng_state,
        adam_t: header.adam_t,
        params,
        adam_m,
        adam_v,
        history,
    })
}

/// Mutable training state shared by both loops.
struct Session {
    params: Vec<f64>,
    adam: Adam,
    rng: Rng,
    cycler: Cycler,
    batch: usize,
    history: Vec<BatchStat>,
}

impl Session {
    fn fresh(init: Vec<f64>, num_products: usize, seed: u64) -> Self {
        let n = init.len();
        let mut rng = Rng::stream(seed, 0x7a21);
        let cycler = Cycler::new(num_products, &mut rng);
        Session { params: init, adam: Adam::new(n), rng, cycler, batch: 0, history: Vec::new() }
    }

    fn from_checkpoint(ck: Checkpoint) -> Self {
        let n = ck.params.len();
        let mut adam = Adam::new(n);
        adam.m = ck.adam_m;
        adam.v = ck.adam_v;
        adam.t = ck.adam_t;
        Session {
            params: ck.params,
            adam,
            rng: Rng::from_state(ck.rng_state),
            cycler: Cycler { perm: ck.perm, cursor: ck.cursor, epoch: ck.epoch },
            batch: ck.batch,
            history: ck.history,
        }
    }

    fn checkpoint(&self, kind: CheckpointKind, seed: u64) -> Checkpoint {
        Checkpoint {
            kind,
            seed,
            batch: self.batch,
            epoch: self.cycler.epoch,
            cursor: self.cycler.cursor,
            perm: self.cycler.perm.clone(),
            rng_state: self.rng.state(),
            adam_t: self.adam.t,
            params: self.params.clone(),
            adam_m: self.adam.m.clone(),
            adam_v: self.adam.v.clone(),
            history: self.history.clone(),
        }
    }

    fn apply(&mut self, cfg: &TrainConfig, grad: &[f64], sign: f64) {
        match cfg.optimizer {
            OptimizerKind::Adam => self.adam.step(&mut self.params, grad, cfg.step_size, sign),
            OptimizerKind::Sgd => sgd_step(&mut self.params, grad, cfg.step_size, sign),
        }
    }
}

/// Trains the neural buy policy by direct backpropagation through the
/// simulator (with the capacity penalty folded in under a priced mode).
///
/// Returns the trained parameters and per-batch objective history. On a
/// non-finite objective the run aborts with a checkpoint through
/// `on_checkpoint`.
pub fn train_buy_policy(
    source: &WorldSource<'_>,
    meta: &PolicyMeta,
    cfg: &TrainConfig,
    prices: &PriceMode,
    resume: Option<Checkpoint>,
    mut on_checkpoint: Option<CheckpointSink<'_>>,
) -> Result<(PolicyParams, TrainOutput)> {
    let base = source.base();
    cfg.validate(base)?;
    if base.num_products == 0 {
        return Err(domain("world has no products"));
    }
    if meta.num_products != base.num_products {
        return Err(domain(format!(
            "policy built for {} products, world has {}",
            meta.num_products, base.num_products
        )));
    }

    let mut session = match resume {
        Some(ck) => {
            match &ck.kind {
                CheckpointKind::Policy { meta: saved } if saved == meta => {}
                CheckpointKind::Policy { .. } => {
                    return Err(domain("resume checkpoint was trained with a different policy architecture"));
                }
                _ => return Err(domain("resume checkpoint is not a buy-policy checkpoint")),
            }
            Session::from_checkpoint(ck)
        }
        None => Session::fresh(
            PolicyParams::init(meta.clone(), cfg.seed).data,
            base.num_products,
            cfg.seed,
        ),
    };

    let gamma = cfg.effective_gamma(base);
    let lambda_ref = reference_price_level(base);
    let price_horizon = meta.layout.price_horizon.saturating_sub(1);
    let mut world = source.world_for_epoch(session.cycler.epoch)?;
    let mut converged = false;

    while session.batch < cfg.max_batches {
        let batch_started = std::time::Instant::now();
        let (products, new_epoch) = session.cycler.next_batch(cfg.batch_size, &mut session.rng);
        if new_epoch {
            world = source.world_for_epoch(session.cycler.epoch)?;
        }

        let price_paths: Option<Vec<Vec<f64>>> = match prices {
            PriceMode::Unpriced => None,
            PriceMode::RandomPaths { scale, zero_prob, block } => Some(sample_price_path(
                &mut session.rng,
                cfg.train_horizon,
                price_horizon,
                lambda_ref,
                *scale,
                *zero_prob,
                *block,
            )),
        };
        let penalize = price_paths.is_some();

        let theta = session.params.clone();
        let world_ref: &ExoWorld = &world;
        let per_product: Vec<Result<(f64, Vec<f64>)>> = products
            .par_iter()
            .map(|&p| {
                let tape = Tape::with_capacity(theta.len() + cfg.train_horizon * 6000);
                let vars: Vec<Var<'_>> = theta.iter().map(|&v| tape.var(v)).collect();
                let start = SimState::fresh(world_ref, p).lift(&tape);
                let result = rl_rollout(
                    world_ref,
                    p,
                    meta,
                    &vars,
                    price_paths.as_deref(),
                    penalize,
                    gamma,
                    start,
                    cfg.train_horizon,
                )?;
                let objective = result.cumulative;
                if !objective.value().is_finite() {
                    return Err(Error::Numeric {
                        node: tape.first_nonfinite(),
                        message: format!("non-finite objective for product {p}"),
                    });
                }
                let grads = tape.backward(objective);
                let g: Vec<f64> = vars.iter().map(|&v| grads.wrt(v)).collect();
                Ok((objective.value(), g))
            })
            .collect();

        let mut batch_objective = 0.0;
        let mut grad = vec![0.0; theta.len()];
        for item in per_product {
            match item {
                Ok((obj, g)) => {
                    batch_objective += obj;
                    for (acc, gi) in grad.iter_mut().zip(&g) {
                        *acc += gi;
                    }
                }
                Err(e) => {
                    let ck = session.checkpoint(CheckpointKind::Policy { meta: meta.clone() }, cfg.seed);
                    if let Some(cb) = on_checkpoint.as_deref_mut() {
                        cb(&ck)?;
                    }
                    return Err(e);
                }
            }
        }

        session.apply(cfg, &grad, 1.0);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        session.history.push(BatchStat {
            batch: session.batch,
            objective: batch_objective,
            grad_norm,
            wall_ms: batch_started.elapsed().as_secs_f64() * 1e3,
        });
        session.batch += 1;

        if has_converged(&session.history, cfg, true) {
            converged = true;
            break;
        }
    }

    let ck = session.checkpoint(CheckpointKind::Policy { meta: meta.clone() }, cfg.seed);
    if let Some(cb) = on_checkpoint {
        cb(&ck)?;
    }
    let output = TrainOutput { history: session.history, batches: session.batch, converged };
    Ok((PolicyParams { meta: meta.clone(), data: session.params }, output))
}

/// Capacity-path sampling band: piecewise-constant fractions of a reference
/// peak volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacitySampling {
    pub fraction_min: f64,
    pub fraction_max: f64,
    pub block_weeks: usize,
}

impl Default for CapacitySampling {
    fn default() -> Self {
        CapacitySampling { fraction_min: 0.5, fraction_max: 1.2, block_weeks: 4 }
    }
}

/// One piecewise-constant fraction path.
pub fn fraction_path(rng: &mut Rng, horizon: usize, sampling: &CapacitySampling) -> Vec<f64> {
    let mut out = Vec::with_capacity(horizon);
    let mut level = 0.0;
    for t in 0..horizon {
        if t % sampling.block_weeks.max(1) == 0 {
            level = rng.range(sampling.fraction_min, sampling.fraction_max);
        }
        out.push(level);
    }
    out
}

/// Draws capacity-limit paths as scaled fractions of `peak_volume`
/// (the unconstrained policy's peak network volume). Deterministic under
/// `seed`.
pub fn sample_capacity_paths(
    peak_volume: f64,
    horizon: usize,
    count: usize,
    seed: u64,
    sampling: &CapacitySampling,
) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(domain("need at least one capacity path"));
    }
    if !(peak_volume > 0.0) {
        return Err(domain(format!("peak volume must be positive, got {peak_volume}")));
    }
    let mut rng = Rng::stream(seed, 0xca95);
    Ok((0..count)
        .map(|_| fraction_path(&mut rng, horizon, sampling).into_iter().map(|f| f * peak_volume).collect())
        .collect())
}

/// Result of simulating the sampled population once without prices: weekly
/// network volumes under the frozen policy.
pub fn unpriced_population_volumes(
    world: &ExoWorld,
    products: &[usize],
    buy: &PolicyParams,
    horizon: usize,
    gamma: f64,
) -> Result<Vec<f64>> {
    let per_product: Vec<Result<Vec<f64>>> = products
        .par_iter()
        .map(|&p| {
            let start = SimState::fresh(world, p);
            let result = rl_rollout::<f64>(
                world,
                p,
                &buy.meta,
                &buy.data,
                None,
                false,
                gamma,
                start,
                horizon,
            )?;
            Ok(result.steps.iter().map(|s| s.onhand_end * world.unit_volumes[p]).collect())
        })
        .collect();
    let mut volumes = vec![0.0; horizon];
    for item in per_product {
        let path = item?;
        for (acc, v) in volumes.iter_mut().zip(&path) {
            *acc += v;
        }
    }
    Ok(volumes)
}

/// Trains the neural coordinator against a frozen buy policy:
/// every batch samples a product minibatch and a capacity path anchored to
/// that minibatch's own unconstrained peak, rolls the population with the
/// coordinator's forecasts feeding the policy's price features, and descends
/// the coordination loss.
pub fn train_coordinator(
    world: &ExoWorld,
    buy: &PolicyParams,
    meta: &CoordMeta,
    cfg: &TrainConfig,
    sampling: &CapacitySampling,
    resume: Option<Checkpoint>,
    mut on_checkpoint: Option<CheckpointSink<'_>>,
) -> Result<(CoordParams, TrainOutput)> {
    cfg.validate(world)?;
    if buy.meta.num_products != world.num_products {
        return Err(domain("buy policy does not match world"));
    }
    let horizon = meta.horizon;
    if buy.meta.layout.price_horizon != horizon + 1 {
        return Err(domain(format!(
            "policy consumes {} price slots but coordinator forecasts {}",
            buy.meta.layout.price_horizon,
            horizon + 1
        )));
    }

    let mut session = match resume {
        Some(ck) => {
            match &ck.kind {
                CheckpointKind::Coordinator { meta: saved } if saved == meta => {}
                CheckpointKind::Coordinator { .. } => {
                    return Err(domain("resume checkpoint was trained with a different coordinator architecture"));
                }
                _ => return Err(domain("resume checkpoint is not a coordinator checkpoint")),
            }
            Session::from_checkpoint(ck)
        }
        None => Session::fresh(
            CoordParams::init(meta.clone(), cfg.seed ^ 0xc0).data,
            world.num_products,
            cfg.seed,
        ),
    };

    let gamma = cfg.effective_gamma(world);
    let frozen_buy = buy.clone();
    let t_train = cfg.train_horizon;
    let mut converged = false;

    while session.batch < cfg.max_batches {
        let batch_started = std::time::Instant::now();
        let (products, _) = session.cycler.next_batch(cfg.batch_size, &mut session.rng);

        // anchor this batch's limits to the minibatch's own unconstrained peak
        let reference = unpriced_population_volumes(world, &products, &frozen_buy, t_train, gamma)?;
        let peak = reference.iter().fold(0.0_f64, |a, &b| a.max(b)).max(1e-6);
        let fractions = fraction_path(&mut session.rng, t_train, sampling);
        let limits: Vec<f64> = fractions.iter().map(|f| f * peak).collect();

        let loss_and_grad = coordinator_episode(
            world,
            &products,
            &frozen_buy,
            meta,
            &session.params,
            &limits,
            t_train,
        );
        let (loss, grad) = match loss_and_grad {
            Ok(v) => v,
            Err(e) => {
                let ck = session.checkpoint(CheckpointKind::Coordinator { meta: meta.clone() }, cfg.seed);
                if let Some(cb) = on_checkpoint.as_deref_mut() {
                    cb(&ck)?;
                }
                return Err(e);
            }
        };

        session.apply(cfg, &grad, -1.0);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        session.history.push(BatchStat {
            batch: session.batch,
            objective: loss,
            grad_norm,
            wall_ms: batch_started.elapsed().as_secs_f64() * 1e3,
        });
        session.batch += 1;

        if has_converged(&session.history, cfg, false) {
            converged = true;
            break;
        }
    }

    let ck = session.checkpoint(CheckpointKind::Coordinator { meta: meta.clone() }, cfg.seed);
    if let Some(cb) = on_checkpoint {
        cb(&ck)?;
    }
    let output = TrainOutput { history: session.history, batches: session.batch, converged };
    Ok((CoordParams { meta: meta.clone(), data: session.params }, output))
}

/// One coordinated population episode on a tape: returns the loss value and
/// its gradient with respect to the coordinator parameters.
fn coordinator_episode(
    world: &ExoWorld,
    products: &[usize],
    buy: &PolicyParams,
    meta: &CoordMeta,
    omega: &[f64],
    limits: &[f64],
    t_train: usize,
) -> Result<(f64, Vec<f64>)> {
    let n = products.len();
    let horizon = meta.horizon;
    let tape = Tape::with_capacity(omega.len() + buy.data.len() + n * t_train * 6000);
    let omega_vars: Vec<Var<'_>> = omega.iter().map(|&v| tape.var(v)).collect();
    let theta_vars: Vec<Var<'_>> = buy.data.iter().map(|&v| tape.var(v)).collect();

    let demand_paths: Vec<Vec<f64>> =
        products.iter().map(|&p| world.weeks[p].iter().map(|w| w.demand).collect()).collect();
    let volumes_sub: Vec<f64> = products.iter().map(|&p| world.unit_volumes[p]).collect();

    let mut states: Vec<SimState<Var<'_>>> =
        products.iter().map(|&p| SimState::fresh(world, p).lift(&tape)).collect();
    let mut action_hist: Vec<Vec<(Var<'_>, Var<'_>)>> = vec![Vec::new(); n];
    let mut last_inbound: Vec<Var<'_>> = (0..n).map(|_| tape.var(0.0)).collect();
    let mut lambda_hist: Vec<Var<'_>> = Vec::with_capacity(t_train);
    let mut forecasts: Vec<Vec<Var<'_>>> = Vec::with_capacity(t_train);
    let mut volume_path: Vec<Var<'_>> = Vec::with_capacity(t_train);

    for t in 0..t_train {
        // capacity view for the coordinator, padded past the window end
        let k_path: Vec<f64> = (0..=horizon)
            .map(|k| limits[(t + k).min(limits.len() - 1)])
            .collect();

        let onhand: Vec<Var<'_>> = states.iter().map(|s| s.onhand).collect();
        let inflight: Vec<Var<'_>> = states
            .iter()
            .map(|s| {
                let mut acc = s.pipeline_jit[0];
                for &x in s.pipeline_jit.iter().skip(1).chain(s.pipeline_llt.iter()) {
                    acc = acc + x;
                }
                acc
            })
            .collect();
        let last_orders: Vec<(Var<'_>, Var<'_>)> = (0..n)
            .map(|i| match action_hist[i].last() {
                Some(&a) => a,
                None => (tape.var(0.0), tape.var(0.0)),
            })
            .collect();
        let last_demand: Vec<f64> = (0..n)
            .map(|i| if t > 0 { demand_paths[i][t - 1] } else { 0.0 })
            .collect();
        let mean_demand: Vec<f64> =
            (0..n).map(|i| trailing_mean(&demand_paths[i][..t], 12)).collect();
        let prices_f: Vec<f64> = products.iter().map(|&p| world.week(p, t).price).collect();
        let costs_f: Vec<f64> = products.iter().map(|&p| world.week(p, t).cost_jit).collect();

        let coord_inputs = CoordInputs {
            week: t,
            onhand: &onhand,
            inflight: &inflight,
            last_orders: &last_orders,
            last_inbound: &last_inbound,
            last_demand: &last_demand,
            mean_demand: &mean_demand,
            prices: &prices_f,
            costs: &costs_f,
            unit_volumes: &volumes_sub,
            capacity_path: &k_path,
            lambda_hist: &lambda_hist,
        };
        let coord_features = coord_featurize(horizon, &coord_inputs)?;
        let forecast = forecast_prices(meta, &omega_vars, &coord_features)?;
        lambda_hist.push(forecast[0]);

        for i in 0..n {
            let p = products[i];
            let exo = world.week(p, t);
            let hist = &demand_paths[i][..t];
            let inputs = FeatureInputs {
                week: t,
                demand_hist: hist,
                actions: &action_hist[i],
                onhand: states[i].onhand,
                pipeline_jit: &states[i].pipeline_jit,
                pipeline_llt: &states[i].pipeline_llt,
                price: exo.price,
                cost_jit: exo.cost_jit,
                cost_llt: exo.cost_llt,
                holding_cost: exo.holding_cost,
                unit_volume: world.unit_volumes[p],
                price_path: Some(&forecast),
            };
            let features = featurize(&buy.meta.layout, &inputs)?;
            let action = rl_order(&buy.meta, &theta_vars, p, &features, demand_scale(hist))?;
            let prev_onhand = states[i].onhand;
            let (next, outcome) = step(&states[i], exo, action, None, world.unit_volumes[p])?;
            last_inbound[i] = outcome.onhand_pre - prev_onhand;
            action_hist[i].push(action);
            states[i] = next;
        }

        forecasts.push(forecast);
        volume_path.push(network_volume(&states, &volumes_sub)?);
    }

    let loss = coordination_loss(&volume_path, &limits[..t_train], &forecasts, &[])?;
    if !loss.value().is_finite() {
        return Err(Error::Numeric {
            node: tape.first_nonfinite(),
            message: "non-finite coordinator loss".into(),
        });
    }
    let grads = tape.backward(loss);
    let grad: Vec<f64> = omega_vars.iter().map(|&v| grads.wrt(v)).collect();
    Ok((loss.value(), grad))
}
