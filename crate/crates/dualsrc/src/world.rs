//! Exogenous world model: everything the buy policy cannot influence.
//!
//! An [`ExoWorld`] carries, per product and per week, the demand, economics,
//! vendor constraints, supply caps and stochastic arrival-share profiles of
//! both sourcing channels, plus the network-level storage capacity path. It
//! is the sole source of randomness in a simulation; replaying a world under
//! a different policy leaves it untouched.

use crate::autodiff::Real;
use crate::error::{domain, Result};
use crate::rng::Fnv;

/// Weeks per seasonal cycle; the synthetic generator and the policy
/// featurizers must agree on this period.
pub const SEASON_PERIOD: usize = 52;

/// Week-of-year the synthetic generator places its demand spike on; the
/// coordinator featurizer derives its holiday-distance encoding from the
/// same constant.
pub const HOLIDAY_WEEK_OF_YEAR: usize = 47;

/// Per-channel vendor order constraints: a minimum order quantity and a
/// batch size orders are rounded up to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VendorConstraints {
    pub min_order_qty: f64,
    pub batch_size: f64,
}

impl VendorConstraints {
    /// No minimum, unit batches: the post-processor becomes the identity.
    pub const NONE: VendorConstraints = VendorConstraints {
        min_order_qty: 0.0,
        batch_size: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.min_order_qty >= 0.0) || !self.min_order_qty.is_finite() {
            return Err(domain(format!(
                "min_order_qty must be finite and >= 0, got {}",
                self.min_order_qty
            )));
        }
        if !(self.batch_size >= 1.0) || !self.batch_size.is_finite() {
            return Err(domain(format!(
                "batch_size must be finite and >= 1, got {}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// One product-week of exogenous state: demand, economics, arrival shares,
/// supply caps and vendor constraints for both channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ExoProductWeek {
    pub demand: f64,
    pub price: f64,
    pub cost_jit: f64,
    pub cost_llt: f64,
    pub holding_cost: f64,
    /// Simplex over lead offsets 0..=L1: fraction of a fulfilled JIT order
    /// arriving at each offset.
    pub arrival_shares_jit: Vec<f64>,
    /// Simplex over lead offsets 0..=L2.
    pub arrival_shares_llt: Vec<f64>,
    pub supply_cap_jit: f64,
    pub supply_cap_llt: f64,
    pub vendor_jit: VendorConstraints,
    pub vendor_llt: VendorConstraints,
}

/// All exogenous paths for all products plus the capacity-limit path.
#[derive(Debug, Clone, PartialEq)]
pub struct ExoWorld {
    pub num_products: usize,
    pub horizon: usize,
    /// JIT lead time L1: JIT orders arrive over offsets 0..=L1.
    pub lead_jit: usize,
    /// LLT lead time L2 > L1.
    pub lead_llt: usize,
    pub init_inventory: Vec<f64>,
    /// `weeks[product][week]`.
    pub weeks: Vec<Vec<ExoProductWeek>>,
    /// Per-week storage capacity K_t in volume units.
    pub capacity_limits: Vec<f64>,
    /// Per-product storage volume per unit.
    pub unit_volumes: Vec<f64>,
    /// Weekly discount factor in (0, 1].
    pub discount_factor: f64,
}

impl ExoWorld {
    pub fn week(&self, product: usize, week: usize) -> &ExoProductWeek {
        &self.weeks[product][week]
    }

    /// Demand history `d_0..d_{week-1}` for a product (no lookahead).
    pub fn demand_history(&self, product: usize, week: usize) -> Vec<f64> {
        self.weeks[product][..week].iter().map(|w| w.demand).collect()
    }

    /// Order-insensitive content hash over every numeric field; used to
    /// verify exogeneity (simulation must never mutate the world).
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_u64(self.num_products as u64);
        h.write_u64(self.horizon as u64);
        h.write_u64(self.lead_jit as u64);
        h.write_u64(self.lead_llt as u64);
        h.write_f64(self.discount_factor);
        for &v in self.init_inventory.iter().chain(&self.capacity_limits).chain(&self.unit_volumes) {
            h.write_f64(v);
        }
        for product in &self.weeks {
            for w in product {
                for &v in [w.demand, w.price, w.cost_jit, w.cost_llt, w.holding_cost].iter() {
                    h.write_f64(v);
                }
                for &v in w.arrival_shares_jit.iter().chain(&w.arrival_shares_llt) {
                    h.write_f64(v);
                }
                h.write_f64(w.supply_cap_jit);
                h.write_f64(w.supply_cap_llt);
                h.write_f64(w.vendor_jit.min_order_qty);
                h.write_f64(w.vendor_jit.batch_size);
                h.write_f64(w.vendor_llt.min_order_qty);
                h.write_f64(w.vendor_llt.batch_size);
            }
        }
        h.finish()
    }
}

/// A week's order decision: quantities for the JIT and LLT channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub qty_jit: f64,
    pub qty_llt: f64,
}

impl Action {
    pub const ZERO: Action = Action { qty_jit: 0.0, qty_llt: 0.0 };
}

/// Vendor order post-processor: suppresses uneconomically small orders
/// (below half the minimum order quantity), lifts the rest to the minimum,
/// and rounds up to a batch multiple. Idempotent; output is zero or
/// `>= max(q, min_order_qty)`.
///
/// Order quantities are real-valued, so a batch size of exactly 1 means no
/// batching constraint rather than integer rounding.
pub fn post_process_order(q: f64, vc: &VendorConstraints) -> Result<f64> {
    if !q.is_finite() || q < 0.0 {
        return Err(domain(format!("order quantity must be finite and >= 0, got {q}")));
    }
    vc.validate()?;
    if q == 0.0 || q < 0.5 * vc.min_order_qty {
        return Ok(0.0);
    }
    let lifted = q.max(vc.min_order_qty);
    if vc.batch_size == 1.0 {
        return Ok(lifted);
    }
    let ratio = lifted / vc.batch_size;
    // snap near-integer ratios so that already-aligned quantities round-trip
    let batches = if (ratio - ratio.round()).abs() < 1e-9 {
        ratio.round()
    } else {
        ratio.ceil()
    };
    Ok(batches * vc.batch_size)
}

/// Arrival profile of one order: the vendor fulfils `min(cap, f_p(q))` units
/// and spreads them over lead offsets according to `shares`.
///
/// Generic over [`Real`] so the same computation runs on plain floats and on
/// the autodiff tape; the discontinuous post-processor is bridged with a
/// straight-through estimator and the supply cap uses an exact `min` whose
/// gradient reaches the order only strictly below the cap.
pub fn compute_arrivals<S: Real>(
    q: S,
    cap: f64,
    shares: &[f64],
    vc: &VendorConstraints,
) -> Result<Vec<S>> {
    if shares.is_empty() {
        return Err(domain("arrival shares must be non-empty"));
    }
    if !cap.is_finite() || cap < 0.0 {
        return Err(domain(format!("supply cap must be finite and >= 0, got {cap}")));
    }
    let processed = post_process_order(q.val(), vc)?;
    let fulfilled = q.straight_through(processed).cap_below(cap);
    Ok(shares.iter().map(|&s| fulfilled * s).collect())
}

/// One violated invariant, with coordinates when product/week specific.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub product: Option<usize>,
    pub week: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.product, self.week) {
            (Some(p), Some(w)) => write!(f, "product {p} week {w}: {}", self.message),
            (Some(p), None) => write!(f, "product {p}: {}", self.message),
            (None, Some(w)) => write!(f, "week {w}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

const SHARES_TOL: f64 = 1e-9;

/// Checks every world and product-week invariant; an empty report means the
/// world is well-formed.
pub fn validate_world(w: &ExoWorld) -> Vec<Violation> {
    let mut out = Vec::new();
    let global = |msg: String| Violation { product: None, week: None, message: msg };

    if w.lead_llt <= w.lead_jit {
        out.push(global(format!(
            "lead_llt ({}) must exceed lead_jit ({})",
            w.lead_llt, w.lead_jit
        )));
    }
    if !(w.discount_factor > 0.0 && w.discount_factor <= 1.0) {
        out.push(global(format!(
            "discount_factor must be in (0, 1], got {}",
            w.discount_factor
        )));
    }
    if w.init_inventory.len() != w.num_products {
        out.push(global(format!(
            "init_inventory has {} entries for {} products",
            w.init_inventory.len(),
            w.num_products
        )));
    }
    if w.unit_volumes.len() != w.num_products {
        out.push(global(format!(
            "unit_volumes has {} entries for {} products",
            w.unit_volumes.len(),
            w.num_products
        )));
    }
    if w.weeks.len() != w.num_products {
        out.push(global(format!(
            "weeks has {} products, declared {}",
            w.weeks.len(),
            w.num_products
        )));
    }
    if w.capacity_limits.len() != w.horizon {
        out.push(global(format!(
            "capacity_limits has {} weeks for horizon {}",
            w.capacity_limits.len(),
            w.horizon
        )));
    }

    for (i, &inv) in w.init_inventory.iter().enumerate() {
        if !(inv >= 0.0) || !inv.is_finite() {
            out.push(Violation {
                product: Some(i),
                week: None,
                message: format!("init_inventory must be finite and >= 0, got {inv}"),
            });
        }
    }
    for (i, &v) in w.unit_volumes.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            out.push(Violation {
                product: Some(i),
                week: None,
                message: format!("unit_volume must be finite and > 0, got {v}"),
            });
        }
    }
    for (t, &k) in w.capacity_limits.iter().enumerate() {
        if !(k > 0.0) {
            out.push(Violation {
                product: None,
                week: Some(t),
                message: format!("capacity limit must be > 0, got {k}"),
            });
        }
    }

    for (i, product) in w.weeks.iter().enumerate() {
        if product.len() != w.horizon {
            out.push(Violation {
                product: Some(i),
                week: None,
                message: format!("product has {} weeks, horizon is {}", product.len(), w.horizon),
            });
            continue;
        }
        for (t, pw) in product.iter().enumerate() {
            let here = |msg: String| Violation { product: Some(i), week: Some(t), message: msg };
            for (name, val) in [
                ("demand", pw.demand),
                ("price", pw.price),
                ("cost_jit", pw.cost_jit),
                ("cost_llt", pw.cost_llt),
                ("holding_cost", pw.holding_cost),
                ("supply_cap_jit", pw.supply_cap_jit),
                ("supply_cap_llt", pw.supply_cap_llt),
            ] {
                if !(val >= 0.0) || !val.is_finite() {
                    out.push(here(format!("{name} must be finite and >= 0, got {val}")));
                }
            }
            if pw.cost_llt > pw.cost_jit {
                out.push(here(format!(
                    "cost_llt ({}) must not exceed cost_jit ({})",
                    pw.cost_llt, pw.cost_jit
                )));
            }
            for (name, shares, lead) in [
                ("jit", &pw.arrival_shares_jit, w.lead_jit),
                ("llt", &pw.arrival_shares_llt, w.lead_llt),
            ] {
                if shares.len() != lead + 1 {
                    out.push(here(format!(
                        "arrival_shares_{name} has {} entries, expected {}",
                        shares.len(),
                        lead + 1
                    )));
                    continue;
                }
                if shares.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
                    out.push(here(format!("arrival_shares_{name} has negative or non-finite entry")));
                }
                let sum: f64 = shares.iter().sum();
                if (sum - 1.0).abs() > SHARES_TOL {
                    out.push(here(format!("arrival_shares_{name} sums to {sum}, expected 1")));
                }
            }
            if let Err(e) = pw.vendor_jit.validate() {
                out.push(here(format!("vendor_jit: {e}")));
            }
            if let Err(e) = pw.vendor_llt.validate() {
                out.push(here(format!("vendor_llt: {e}")));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trivial_week() -> ExoProductWeek {
        ExoProductWeek {
            demand: 5.0,
            price: 2.0,
            cost_jit: 1.0,
            cost_llt: 0.8,
            holding_cost: 0.1,
            arrival_shares_jit: vec![1.0, 0.0],
            arrival_shares_llt: vec![0.0, 0.0, 0.0, 1.0],
            supply_cap_jit: 1e9,
            supply_cap_llt: 1e9,
            vendor_jit: VendorConstraints::NONE,
            vendor_llt: VendorConstraints::NONE,
        }
    }

    pub(crate) fn tiny_world(horizon: usize) -> ExoWorld {
        ExoWorld {
            num_products: 1,
            horizon,
            lead_jit: 1,
            lead_llt: 3,
            init_inventory: vec![5.0],
            weeks: vec![vec![trivial_week(); horizon]],
            capacity_limits: vec![1e9; horizon],
            unit_volumes: vec![1.0],
            discount_factor: 1.0,
        }
    }

    #[test]
    fn post_processor_examples() {
        let vc = VendorConstraints { min_order_qty: 10.0, batch_size: 5.0 };
        assert_eq!(post_process_order(0.0, &vc).unwrap(), 0.0);
        assert_eq!(post_process_order(12.0, &vc).unwrap(), 15.0);
        assert_eq!(post_process_order(3.0, &vc).unwrap(), 0.0); // below MOQ/2: suppressed
        assert_eq!(post_process_order(7.0, &vc).unwrap(), 10.0); // lifted to MOQ
        assert!(post_process_order(-1.0, &vc).is_err());
    }

    #[test]
    fn post_processor_idempotent_and_batch_aligned() {
        let mut rng = crate::rng::Rng::new(3);
        for _ in 0..1000 {
            let vc = VendorConstraints {
                min_order_qty: rng.range(0.0, 20.0),
                batch_size: rng.range(1.0, 8.0).round().max(1.0),
            };
            let q = rng.range(0.0, 40.0);
            let once = post_process_order(q, &vc).unwrap();
            let twice = post_process_order(once, &vc).unwrap();
            assert_eq!(once, twice, "q={q} vc={vc:?}");
            if once > 0.0 {
                assert!(once >= q, "never shrinks a kept order");
                assert!(once >= vc.min_order_qty);
                if vc.batch_size > 1.0 {
                    let ratio = once / vc.batch_size;
                    assert!(
                        (ratio - ratio.round()).abs() < 1e-6,
                        "batch aligned: {once} / {}",
                        vc.batch_size
                    );
                }
            }
        }
    }

    #[test]
    fn arrivals_examples() {
        let vc = VendorConstraints::NONE;
        let o = compute_arrivals(10.0, 6.0, &[0.5, 0.5], &vc).unwrap();
        assert_eq!(o, vec![3.0, 3.0]);

        let o = compute_arrivals(0.0, 100.0, &[1.0, 0.0, 0.0], &vc).unwrap();
        assert_eq!(o, vec![0.0, 0.0, 0.0]);

        let vc = VendorConstraints { min_order_qty: 10.0, batch_size: 5.0 };
        let o = compute_arrivals(12.0, 100.0, &[0.2, 0.8], &vc).unwrap();
        assert!((o[0] - 3.0).abs() < 1e-12 && (o[1] - 12.0).abs() < 1e-12, "{o:?}");
    }

    #[test]
    fn arrivals_conserve_and_are_monotone() {
        let mut rng = crate::rng::Rng::new(9);
        for _ in 0..1000 {
            let vc = VendorConstraints {
                min_order_qty: rng.range(0.0, 10.0),
                batch_size: rng.range(1.0, 6.0).round().max(1.0),
            };
            let shares = rng.dirichlet(&[2.0, 1.0, 1.0]);
            let q = rng.range(0.0, 30.0);
            let cap = rng.range(0.0, 30.0);
            let o = compute_arrivals(q, cap, &shares, &vc).unwrap();
            let expected = post_process_order(q, &vc).unwrap().min(cap);
            let total: f64 = o.iter().sum();
            assert!((total - expected).abs() <= 1e-9 * expected.max(1.0), "conservation");

            // monotone in q and cap
            let o_q = compute_arrivals(q + 1.0, cap, &shares, &vc).unwrap();
            let o_c = compute_arrivals(q, cap + 1.0, &shares, &vc).unwrap();
            assert!(o_q.iter().sum::<f64>() >= total - 1e-12);
            assert!(o_c.iter().sum::<f64>() >= total - 1e-12);
        }
    }

    #[test]
    fn validate_passes_well_formed_world() {
        assert!(validate_world(&tiny_world(4)).is_empty());
    }

    #[test]
    fn validate_reports_bad_shares_with_coordinates() {
        let mut w = tiny_world(8);
        w.weeks[0][7].arrival_shares_jit = vec![0.5, 0.4]; // sums to 0.9
        let report = validate_world(&w);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].product, Some(0));
        assert_eq!(report[0].week, Some(7));
    }

    #[test]
    fn validate_reports_discount_violation() {
        let mut w = tiny_world(2);
        w.weeks[0][0].cost_llt = 2.0; // exceeds cost_jit = 1.0
        let report = validate_world(&w);
        assert_eq!(report.len(), 1);
        assert!(report[0].message.contains("cost_llt"));
    }

    #[test]
    fn fingerprint_detects_any_change() {
        let w = tiny_world(4);
        let base = w.fingerprint();
        let mut w2 = w.clone();
        w2.weeks[0][2].demand += 1e-9;
        assert_ne!(base, w2.fingerprint());
        assert_eq!(base, w.fingerprint());
    }
}
