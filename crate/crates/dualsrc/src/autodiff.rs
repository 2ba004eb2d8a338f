//! Reverse-mode automatic differentiation over scalars.
//!
//! A [`Tape`] records every arithmetic operation performed on its [`Var`]s
//! during a forward pass; [`Tape::backward`] then propagates adjoints through
//! the recorded graph in one reverse sweep. This is what lets the training
//! loops differentiate a cumulative discounted reward through an entire
//! simulated episode with respect to the policy parameters.
//!
//! Design notes:
//! - One tape per rollout/thread. Tapes are never shared across threads;
//!   gradient accumulation across a minibatch happens outside, in a fixed
//!   order.
//! - Nodes store at most two (parent, local partial) pairs, fixed at forward
//!   time, so the backward sweep is a single cache-friendly reverse loop.
//! - Identical inputs replay to bit-identical gradients.
//!
//! Subgradient conventions, pinned by tests:
//! - `relu` at exactly 0 propagates 0.
//! - `min2(a, b)` and `max2(a, b)` route the gradient to the **first**
//!   argument on ties.
//! - `cap_below` (min against a constant cap) routes ties to the cap, so the
//!   variable receives gradient only strictly below the cap.
//!
//! The same simulator code runs gradient-free by instantiating it with plain
//! `f64` through the [`Real`] trait.

use std::cell::{Cell, RefCell};
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Append-only record of a forward computation.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    first_nonfinite: Cell<Option<u32>>,
}

/// A value recorded on a [`Tape`]. Cheap to copy; arithmetic on `Var`s
/// appends to the owning tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: u32,
    value: f64,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Grads {
    adj: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            first_nonfinite: Cell::new(None),
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(n)),
            first_nonfinite: Cell::new(None),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Creates a leaf variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let index = {
            let mut nodes = self.nodes.borrow_mut();
            let index = nodes.len() as u32;
            nodes.push(Node {
                parents: [index, index],
                partials: [0.0, 0.0],
            });
            index
        };
        if !value.is_finite() && self.first_nonfinite.get().is_none() {
            self.first_nonfinite.set(Some(index));
        }
        Var { tape: self, index, value }
    }

    /// Index of the first node whose forward value was non-finite, if any.
    pub fn first_nonfinite(&self) -> Option<usize> {
        self.first_nonfinite.get().map(|i| i as usize)
    }

    /// Returns a numeric error if any recorded value was non-finite.
    pub fn check_finite(&self) -> Result<()> {
        match self.first_nonfinite() {
            None => Ok(()),
            Some(node) => Err(Error::Numeric {
                node: Some(node),
                message: "non-finite intermediate value".into(),
            }),
        }
    }

    /// Reverse sweep seeding `d output / d output = 1`.
    pub fn backward(&self, output: Var<'_>) -> Grads {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[output.index as usize] = 1.0;
        for i in (0..nodes.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            let p0 = node.parents[0] as usize;
            if p0 != i {
                adj[p0] += node.partials[0] * a;
            }
            let p1 = node.parents[1] as usize;
            if p1 != i {
                adj[p1] += node.partials[1] * a;
            }
        }
        Grads { adj }
    }

    fn push(&self, value: f64, p0: u32, d0: f64, p1: u32, d1: f64) -> Var<'_> {
        let index = {
            let mut nodes = self.nodes.borrow_mut();
            let index = nodes.len() as u32;
            nodes.push(Node {
                parents: [p0, p1],
                partials: [d0, d1],
            });
            index
        };
        if !value.is_finite() && self.first_nonfinite.get().is_none() {
            self.first_nonfinite.set(Some(index));
        }
        Var { tape: self, index, value }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Grads {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj[v.index as usize]
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.value
    }

    pub fn index(self) -> usize {
        self.index as usize
    }

    fn unary(self, value: f64, partial: f64) -> Var<'t> {
        self.tape.push(value, self.index, partial, self.index, 0.0)
    }

    fn binary(self, other: Var<'t>, value: f64, da: f64, db: f64) -> Var<'t> {
        self.tape.push(value, self.index, da, other.index, db)
    }
}

/// Scalar abstraction the simulator, featurizers and networks are written
/// against: instantiated with `f64` for plain evaluation and with [`Var`]
/// for differentiable evaluation.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn val(self) -> f64;

    /// Constant in the same computation context as `self`.
    fn lift(self, c: f64) -> Self;

    /// `max(self, 0)`; propagates 0 at the kink.
    fn relu(self) -> Self;

    /// `min(self, other)`; ties route gradient to `self`.
    fn min2(self, other: Self) -> Self;

    /// `max(self, other)`; ties route gradient to `self`.
    fn max2(self, other: Self) -> Self;

    /// `min(cap, self)` against a constant: gradient reaches `self` only
    /// strictly below the cap.
    fn cap_below(self, cap: f64) -> Self;

    /// Straight-through estimator: forward takes `forward_value`, backward
    /// passes the gradient unchanged where `forward_value > 0` and blocks it
    /// where the forward value is 0.
    fn straight_through(self, forward_value: f64) -> Self;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;

    /// `ln(1 + e^x)`, evaluated stably.
    fn softplus(self) -> Self;
}

fn softplus_f(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid_f(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Real for f64 {
    fn val(self) -> f64 {
        self
    }

    fn lift(self, c: f64) -> f64 {
        c
    }

    fn relu(self) -> f64 {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }

    fn min2(self, other: f64) -> f64 {
        if self <= other {
            self
        } else {
            other
        }
    }

    fn max2(self, other: f64) -> f64 {
        if self >= other {
            self
        } else {
            other
        }
    }

    fn cap_below(self, cap: f64) -> f64 {
        if self < cap {
            self
        } else {
            cap
        }
    }

    fn straight_through(self, forward_value: f64) -> f64 {
        forward_value
    }

    fn exp(self) -> f64 {
        f64::exp(self)
    }

    fn ln(self) -> f64 {
        f64::ln(self)
    }

    fn tanh(self) -> f64 {
        f64::tanh(self)
    }

    fn softplus(self) -> f64 {
        softplus_f(self)
    }
}

impl<'t> Real for Var<'t> {
    fn val(self) -> f64 {
        self.value
    }

    fn lift(self, c: f64) -> Var<'t> {
        self.tape.var(c)
    }

    fn relu(self) -> Var<'t> {
        let on = self.value > 0.0;
        self.unary(if on { self.value } else { 0.0 }, if on { 1.0 } else { 0.0 })
    }

    fn min2(self, other: Var<'t>) -> Var<'t> {
        if self.value <= other.value {
            self.binary(other, self.value, 1.0, 0.0)
        } else {
            self.binary(other, other.value, 0.0, 1.0)
        }
    }

    fn max2(self, other: Var<'t>) -> Var<'t> {
        if self.value >= other.value {
            self.binary(other, self.value, 1.0, 0.0)
        } else {
            self.binary(other, other.value, 0.0, 1.0)
        }
    }

    fn cap_below(self, cap: f64) -> Var<'t> {
        if self.value < cap {
            self
        } else {
            self.unary(cap, 0.0)
        }
    }

    fn straight_through(self, forward_value: f64) -> Var<'t> {
        let pass = forward_value > 0.0;
        self.unary(forward_value, if pass { 1.0 } else { 0.0 })
    }

    fn exp(self) -> Var<'t> {
        let v = self.value.exp();
        self.unary(v, v)
    }

    fn ln(self) -> Var<'t> {
        self.unary(self.value.ln(), 1.0 / self.value)
    }

    fn tanh(self) -> Var<'t> {
        let v = self.value.tanh();
        self.unary(v, 1.0 - v * v)
    }

    fn softplus(self) -> Var<'t> {
        self.unary(softplus_f(self.value), sigmoid_f(self.value))
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.value / rhs.value;
        self.binary(rhs, v, 1.0 / rhs.value, -self.value / (rhs.value * rhs.value))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.unary(self.value + c, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.unary(self.value - c, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(self.value * c, c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self.unary(self.value / c, 1.0 / c)
    }
}

/// Sum of a slice of scalars; 0-lifted when empty is not supported, callers
/// pass at least one element.
pub fn sum<S: Real>(xs: &[S]) -> S {
    assert!(!xs.is_empty(), "sum of empty slice");
    let mut acc = xs[0];
    for &x in &xs[1..] {
        acc = acc + x;
    }
    acc
}

/// Dot product of equal-length slices.
pub fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len(), "dot length mismatch");
    let mut acc = a[0] * b[0];
    for i in 1..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}

/// Identity helper that pins the higher-ranked closure signature expected by
/// [`grad_check`]; wrap closures in this when inference needs a nudge.
pub fn tape_fn<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    f
}

/// Compares the reverse-mode gradient of `f` against central finite
/// differences at `point` and returns the worst scale-floored relative error
/// `|g_ad - g_fd| / max(1, |g_ad|, |g_fd|)`.
///
/// `f` must be smooth near `point`; callers are responsible for avoiding
/// kink points of `relu`/`min`/`max`.
pub fn grad_check<F>(f: F, point: &[f64], eps: f64) -> f64
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let eval = |x: &[f64]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = x.iter().map(|&p| tape.var(p)).collect();
        f(&tape, &vars).value()
    };

    let tape = Tape::new();
    let vars: Vec<Var<'_>> = point.iter().map(|&p| tape.var(p)).collect();
    let out = f(&tape, &vars);
    let grads = tape.backward(out);
    let analytic: Vec<f64> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let mut shifted = point.to_vec();
    let mut worst = 0.0_f64;
    for k in 0..point.len() {
        let orig = shifted[k];
        shifted[k] = orig + eps;
        let plus = eval(&shifted);
        shifted[k] = orig - eps;
        let minus = eval(&shifted);
        shifted[k] = orig;
        let fd = (plus - minus) / (2.0 * eps);
        let denom = 1.0_f64.max(analytic[k].abs()).max(fd.abs());
        worst = worst.max((analytic[k] - fd).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad_of<F>(f: F, x: f64) -> f64
    where
        F: for<'t> Fn(Var<'t>) -> Var<'t>,
    {
        let tape = Tape::new();
        let v = tape.var(x);
        let y = f(v);
        tape.backward(y).wrt(v)
    }

    #[test]
    fn square_gradient() {
        // d/dx (x*x) at 3 = 6
        assert_eq!(grad_of(|x| x * x, 3.0), 6.0);
    }

    #[test]
    fn relu_subgradient_convention() {
        assert_eq!(grad_of(|x| x.relu(), -1.0), 0.0);
        assert_eq!(grad_of(|x| x.relu(), 2.0), 1.0);
        // pinned: zero at the kink
        assert_eq!(grad_of(|x| x.relu(), 0.0), 0.0);
    }

    #[test]
    fn softplus_gradient_at_zero() {
        let tape = Tape::new();
        let x = tape.var(0.0);
        let y = x.softplus();
        assert!((y.value() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((tape.backward(y).wrt(x) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn min_ties_route_to_first_argument() {
        let tape = Tape::new();
        let a = tape.var(2.0);
        let b = tape.var(2.0);
        let y = a.min2(b);
        let g = tape.backward(y);
        assert_eq!(g.wrt(a), 1.0);
        assert_eq!(g.wrt(b), 0.0);
        let y2 = a.max2(b);
        let g2 = tape.backward(y2);
        assert_eq!(g2.wrt(a), 1.0);
        assert_eq!(g2.wrt(b), 0.0);
    }

    #[test]
    fn cap_below_blocks_gradient_at_and_above_cap() {
        let tape = Tape::new();
        let x = tape.var(5.0);
        let capped = x.cap_below(5.0);
        assert_eq!(capped.value(), 5.0);
        assert_eq!(tape.backward(capped).wrt(x), 0.0);

        let y = tape.var(3.0);
        let free = y.cap_below(5.0);
        assert_eq!(free.value(), 3.0);
        assert_eq!(tape.backward(free).wrt(y), 1.0);
    }

    #[test]
    fn straight_through_passes_gradient_when_positive() {
        let tape = Tape::new();
        let x = tape.var(12.0);
        let st = x.straight_through(15.0);
        assert_eq!(st.value(), 15.0);
        assert_eq!(tape.backward(st * 2.0).wrt(x), 2.0);

        let z = tape.var(3.0);
        let blocked = z.straight_through(0.0);
        assert_eq!(blocked.value(), 0.0);
        assert_eq!(tape.backward(blocked * 2.0).wrt(z), 0.0);
    }

    #[test]
    fn fan_out_accumulates() {
        // f(x) = x*x + x, f'(3) = 7
        assert_eq!(grad_of(|x| x * x + x, 3.0), 7.0);
    }

    #[test]
    fn division_and_scalar_ops() {
        // f(x) = (x+1)/(x+2), f'(3) = 1/25
        let g = grad_of(|x| (x + 1.0) / (x + 2.0), 3.0);
        assert!((g - 0.04).abs() < 1e-12);
    }

    #[test]
    fn nonfinite_values_are_flagged_with_provenance() {
        let tape = Tape::new();
        let x = tape.var(0.0);
        let bad = x.ln(); // -inf
        assert_eq!(tape.first_nonfinite(), Some(bad.index()));
        assert!(tape.check_finite().is_err());
    }

    #[test]
    fn grad_check_on_square() {
        // f(x) = x^2 at 1.5
        let err = grad_check(tape_fn(|_, xs| xs[0] * xs[0]), &[1.5], 1e-5);
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn grad_check_on_composite() {
        let err = grad_check(
            tape_fn(|_, xs| (xs[0] * xs[1]).softplus().tanh() + xs[2].exp() * 0.1),
            &[0.7, -1.3, 0.4],
            1e-5,
        );
        assert!(err < 1e-7, "err {err}");
    }

    #[test]
    fn gradients_are_deterministic() {
        let run = || {
            let tape = Tape::new();
            let xs: Vec<_> = (0..50).map(|i| tape.var(0.1 * i as f64 - 2.0)).collect();
            let mut y = xs[0].tanh();
            for &x in &xs[1..] {
                y = (y * x).softplus() - x.relu() * 0.5;
            }
            let g = tape.backward(y);
            xs.iter().map(|&x| g.wrt(x).to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
