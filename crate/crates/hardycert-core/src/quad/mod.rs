//! Adaptive integration over finite subintervals of (0, ∞) and
//! semi-infinite tails, plus essential-supremum evaluation for q = ∞ norms.
//!
//! The base rule is a nested Gauss–Kronrod 7/15 pair with bisection
//! adaptivity. Divergence is declared, never proven: `Divergent` means the
//! partial integrals crossed the configured threshold while still growing,
//! or refinement toward an endpoint stalled without the local contributions
//! decaying.

mod kronrod;

use crate::expr::{DomainError, Expr};
use kronrod::gauss_kronrod;
use std::collections::BinaryHeap;

/// Tolerances and limits for the adaptive engine.
#[derive(Debug, Clone)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Partial integrals above this magnitude that keep growing by at least
    /// 1% per refinement are declared divergent.
    pub divergence_threshold: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 2000,
            divergence_threshold: 1e12,
        }
    }
}

impl QuadConfig {
    fn tolerance(&self, total: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * total.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadStatus {
    Converged,
    Divergent,
    MaxSubdivisions,
}

/// Outcome of one integral. When `status` is `Converged` the error estimate
/// satisfies `error <= max(abs_tol, rel_tol * |value|)`; when `Divergent`
/// the value is a signed infinity.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub status: QuadStatus,
}

impl QuadResult {
    pub fn converged(&self) -> bool {
        self.status == QuadStatus::Converged
    }

    pub fn divergent(&self) -> bool {
        self.status == QuadStatus::Divergent
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    touches_lo: bool,
    touches_hi: bool,
    frozen: bool,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // frozen segments sink to the bottom of the heap
        (!self.frozen, ordered(self.err)).cmp(&(!other.frozen, ordered(other.err)))
    }
}

fn ordered(v: f64) -> ordered_key::Key {
    ordered_key::Key(v)
}

mod ordered_key {
    #[derive(PartialEq)]
    pub struct Key(pub f64);
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Key {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}

// Endpoint-stall detection: this many peeled-off shells must exist before
// the stall rule may fire, and the last SHELL_WINDOW of them must not be
// decaying. A harmonic endpoint (∫ x^{-1}) produces constant shells and is
// caught here; an integrable x^{-γ}, γ < 1 endpoint decays geometrically
// and is not.
const SHELL_MIN_DEPTH: usize = 50;
const SHELL_WINDOW: usize = 8;
const SHELL_DECAY: f64 = 0.999;

fn shells_stalled(shells: &[f64]) -> bool {
    if shells.len() < SHELL_MIN_DEPTH {
        return false;
    }
    let tail = &shells[shells.len() - SHELL_WINDOW..];
    let sign = tail[0].signum();
    if tail.iter().any(|s| *s == 0.0 || s.signum() != sign) {
        return false;
    }
    tail.windows(2).all(|w| {
        if !w[0].is_finite() || !w[1].is_finite() {
            return true; // overflowing shells count as stalled, not decaying
        }
        (w[1] / w[0]).abs() >= SHELL_DECAY
    })
}

fn adaptive<F>(
    f: &F,
    a: f64,
    b: f64,
    splits: &[f64],
    cfg: &QuadConfig,
) -> Result<QuadResult, DomainError>
where
    F: Fn(f64) -> Result<f64, DomainError>,
{
    assert!(b > a, "integration interval must have positive length");
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;

    let mut edges: Vec<f64> = std::iter::once(a)
        .chain(splits.iter().copied().filter(|s| *s > a && *s < b))
        .chain(std::iter::once(b))
        .collect();
    edges.sort_by(|p, q| p.partial_cmp(q).unwrap());
    edges.dedup();

    for w in edges.windows(2) {
        let (value, err) = gauss_kronrod(f, w[0], w[1])?;
        total += value;
        total_err += err;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value,
            err,
            touches_lo: w[0] == a,
            touches_hi: w[1] == b,
            frozen: false,
        });
    }

    let mut lo_shells: Vec<f64> = Vec::new();
    let mut hi_shells: Vec<f64> = Vec::new();
    let mut prev_total = total;
    let mut subdivisions = 0usize;

    loop {
        if total_err <= cfg.tolerance(total) && total.is_finite() {
            return Ok(QuadResult {
                value: total,
                error: total_err,
                status: QuadStatus::Converged,
            });
        }
        if subdivisions >= cfg.max_subdivisions {
            return Ok(finish_inexact(total, total_err));
        }
        let worst = match heap.pop() {
            Some(s) if !s.frozen => s,
            _ => return Ok(finish_inexact(total, total_err)),
        };

        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // no representable midpoint left; accept this segment as is
            total_err -= worst.err;
            heap.push(Segment {
                err: 0.0,
                frozen: true,
                ..worst
            });
            continue;
        }

        let (lv, le) = gauss_kronrod(f, worst.a, mid)?;
        let (rv, re) = gauss_kronrod(f, mid, worst.b)?;
        subdivisions += 1;

        total = total - worst.value + lv + rv;
        total_err = total_err - worst.err + le + re;
        if !total_err.is_finite() {
            // rebuild from the heap to shed inf - inf artifacts
            total_err = heap.iter().map(|s| s.err).sum::<f64>() + le + re;
        }

        if worst.touches_lo {
            lo_shells.push(rv);
        }
        if worst.touches_hi {
            hi_shells.push(lv);
        }

        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: lv,
            err: le,
            touches_lo: worst.touches_lo,
            touches_hi: false,
            frozen: false,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: rv,
            err: re,
            touches_lo: false,
            touches_hi: worst.touches_hi,
            frozen: false,
        });

        let growing = total.abs() >= 1.01 * prev_total.abs() || !total.is_finite();
        if total.abs() > cfg.divergence_threshold && growing {
            return Ok(divergent(total));
        }
        if (worst.touches_lo && shells_stalled(&lo_shells))
            || (worst.touches_hi && shells_stalled(&hi_shells))
        {
            return Ok(divergent(total));
        }
        prev_total = total;
    }
}

fn finish_inexact(total: f64, total_err: f64) -> QuadResult {
    if !total.is_finite() {
        divergent(total)
    } else {
        QuadResult {
            value: total,
            error: total_err,
            status: QuadStatus::MaxSubdivisions,
        }
    }
}

fn divergent(total: f64) -> QuadResult {
    QuadResult {
        value: if total < 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        },
        error: f64::INFINITY,
        status: QuadStatus::Divergent,
    }
}

/// ∫_a^b f, endpoint singularities permitted.
pub fn integrate_finite<F>(f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<QuadResult, DomainError>
where
    F: Fn(f64) -> Result<f64, DomainError>,
{
    adaptive(&f, a, b, &[], cfg)
}

/// ∫_a^b f with the partition seeded at the given interior points
/// (piecewise breakpoints, roots, and similar known kinks).
pub fn integrate_finite_split<F>(
    f: F,
    a: f64,
    b: f64,
    splits: &[f64],
    cfg: &QuadConfig,
) -> Result<QuadResult, DomainError>
where
    F: Fn(f64) -> Result<f64, DomainError>,
{
    adaptive(&f, a, b, splits, cfg)
}

/// ∫_r^∞ f via the rational substitution x = r + t/(1−t), t ∈ (0, 1),
/// which keeps polynomial-times-exponential integrands smooth. `r = 0`
/// is allowed.
pub fn integrate_tail<F>(f: F, r: f64, cfg: &QuadConfig) -> Result<QuadResult, DomainError>
where
    F: Fn(f64) -> Result<f64, DomainError>,
{
    integrate_tail_split(f, r, &[], cfg)
}

/// Tail integral with known kinks at the given x-coordinates.
pub fn integrate_tail_split<F>(
    f: F,
    r: f64,
    splits: &[f64],
    cfg: &QuadConfig,
) -> Result<QuadResult, DomainError>
where
    F: Fn(f64) -> Result<f64, DomainError>,
{
    assert!(r >= 0.0);
    let g = |t: f64| -> Result<f64, DomainError> {
        let s = 1.0 - t;
        let x = r + t / s;
        let fx = f(x)?;
        Ok(fx / (s * s))
    };
    let t_splits: Vec<f64> = splits
        .iter()
        .filter(|&&x| x > r)
        .map(|&x| {
            let d = x - r;
            d / (1.0 + d)
        })
        .collect();
    adaptive(&g, 0.0, 1.0, &t_splits, cfg)
}

/// An interval (lo, hi) on the half-line; `hi` may be infinite.
#[derive(Debug, Clone, Copy)]
pub struct Region {
    pub lo: f64,
    pub hi: f64,
}

impl Region {
    pub fn new(lo: f64, hi: f64) -> Region {
        assert!(lo >= 0.0 && hi > lo);
        Region { lo, hi }
    }

    pub fn half_line() -> Region {
        Region {
            lo: 0.0,
            hi: f64::INFINITY,
        }
    }
}

// ess-sup sampling parameters: log-spaced grid plus golden-section polish
// around the best local maxima.
const ESS_SUP_SAMPLES: usize = 2048;
const ESS_SUP_REFINE_PEAKS: usize = 5;

/// Weighted L_q norm of `g`: (∫ |v·g|^q)^{1/q} for finite q, and a refined
/// pointwise supremum of |v·g| for q = ∞ (the expressible weights are
/// continuous away from their finitely many breakpoints, which are added
/// to the sample grid).
pub fn lq_norm<F>(
    g: F,
    v: &Expr,
    q: f64,
    region: Region,
    cfg: &QuadConfig,
) -> Result<QuadResult, DomainError>
where
    F: Fn(f64) -> Result<f64, DomainError>,
{
    assert!(q >= 1.0);
    let splits = v.breakpoints();
    if q.is_infinite() {
        let h = |x: f64| -> Result<f64, DomainError> { Ok((v.eval(x)? * g(x)?).abs()) };
        let (sup, _arg) = ess_sup(&h, region, &splits)?;
        return Ok(QuadResult {
            value: sup,
            error: 0.0,
            status: if sup.is_finite() {
                QuadStatus::Converged
            } else {
                QuadStatus::Divergent
            },
        });
    }
    let h = |x: f64| -> Result<f64, DomainError> { Ok((v.eval(x)? * g(x)?).abs().powf(q)) };
    let raw = if region.hi.is_finite() {
        integrate_finite_split(h, region.lo, region.hi, &splits, cfg)?
    } else {
        integrate_tail_split(h, region.lo, &splits, cfg)?
    };
    let value = raw.value.powf(1.0 / q);
    let error = if raw.value > 0.0 && raw.value.is_finite() {
        raw.error * value / (q * raw.value)
    } else {
        raw.error
    };
    Ok(QuadResult {
        value,
        error,
        status: raw.status,
    })
}

/// Pointwise supremum of `h` over a log-spaced sample of the region,
/// polished by golden-section search around the strongest local maxima.
/// Returns the supremum and its argmax. Overflowing samples produce an
/// infinite supremum; other domain errors at isolated samples are skipped.
pub fn ess_sup<F>(
    h: &F,
    region: Region,
    extra_points: &[f64],
) -> Result<(f64, f64), DomainError>
where
    F: Fn(f64) -> Result<f64, DomainError>,
{
    let lo = if region.lo > 0.0 { region.lo } else { 1e-9 };
    let hi = if region.hi.is_finite() {
        region.hi
    } else {
        1e9
    };
    assert!(hi > lo);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut xs: Vec<f64> = (0..ESS_SUP_SAMPLES)
        .map(|i| (llo + (lhi - llo) * i as f64 / (ESS_SUP_SAMPLES - 1) as f64).exp())
        .collect();
    xs.extend(extra_points.iter().copied().filter(|x| *x > lo && *x < hi));
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut vals = Vec::with_capacity(xs.len());
    for &x in &xs {
        match h(x) {
            Ok(v) => vals.push(v),
            Err(e) if e.is_overflow() => return Ok((f64::INFINITY, x)),
            Err(_) => vals.push(f64::NEG_INFINITY), // domain hole: skip
        }
    }

    // local maxima (including the window edges)
    let mut peaks: Vec<usize> = (0..xs.len())
        .filter(|&i| {
            let left = if i == 0 { f64::NEG_INFINITY } else { vals[i - 1] };
            let right = if i + 1 == xs.len() {
                f64::NEG_INFINITY
            } else {
                vals[i + 1]
            };
            vals[i].is_finite() && vals[i] >= left && vals[i] >= right
        })
        .collect();
    peaks.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
    peaks.truncate(ESS_SUP_REFINE_PEAKS);

    let mut best = f64::NEG_INFINITY;
    let mut best_x = lo;
    for &i in &peaks {
        if vals[i] > best {
            best = vals[i];
            best_x = xs[i];
        }
        let bl = if i == 0 { xs[0] } else { xs[i - 1] };
        let br = if i + 1 == xs.len() { xs[xs.len() - 1] } else { xs[i + 1] };
        if br > bl {
            let (v, x) = golden_max(h, bl, br);
            if v > best {
                best = v;
                best_x = x;
            }
        }
    }
    if best == f64::NEG_INFINITY {
        // everything errored; report the first genuine failure
        return Err(h(xs[0]).unwrap_err());
    }
    Ok((best, best_x))
}

/// Golden-section maximization on log axis; domain errors score -inf.
fn golden_max<F>(h: &F, a: f64, b: f64) -> (f64, f64)
where
    F: Fn(f64) -> Result<f64, DomainError>,
{
    let eval = |x: f64| h(x).unwrap_or(f64::NEG_INFINITY);
    let inv_phi = 0.618_033_988_749_894_9;
    let (mut la, mut lb) = (a.ln(), b.ln());
    let mut lc = lb - inv_phi * (lb - la);
    let mut ld = la + inv_phi * (lb - la);
    let mut fc = eval(lc.exp());
    let mut fd = eval(ld.exp());
    for _ in 0..80 {
        if (lb - la).abs() < 1e-13 * (1.0 + la.abs().max(lb.abs())) {
            break;
        }
        if fc >= fd {
            lb = ld;
            ld = lc;
            fd = fc;
            lc = lb - inv_phi * (lb - la);
            fc = eval(lc.exp());
        } else {
            la = lc;
            lc = ld;
            fc = fd;
            ld = la + inv_phi * (lb - la);
            fd = eval(ld.exp());
        }
    }
    let xm = (0.5 * (la + lb)).exp();
    (eval(xm).max(fc).max(fd), xm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn cfg() -> QuadConfig {
        QuadConfig::default()
    }

    fn ok(v: f64) -> Result<f64, DomainError> {
        Ok(v)
    }

    #[test]
    fn linear_on_unit_interval() {
        let r = integrate_finite(|x| ok(x), 0.0, 1.0, &cfg()).unwrap();
        assert!(r.converged());
        assert_relative_eq!(r.value, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn integrable_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let r = integrate_finite(|x| ok(x.powf(-0.5)), 0.0, 1.0, &cfg()).unwrap();
        assert!(r.converged());
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-8);
    }

    #[test]
    fn harmonic_divergence_declared() {
        let r = integrate_finite(|x| ok(1.0 / x), 0.0, 1.0, &cfg()).unwrap();
        assert!(r.divergent());
        assert_eq!(r.value, f64::INFINITY);
    }

    #[test]
    fn strong_divergence_declared() {
        let r = integrate_finite(|x| ok(x.powi(-2)), 0.0, 1.0, &cfg()).unwrap();
        assert!(r.divergent());
    }

    #[test]
    fn near_critical_integrable_singularity_converges() {
        // ∫_0^1 x^{-0.9} dx = 10; slow but integrable
        let r = integrate_finite(|x| ok(x.powf(-0.9)), 0.0, 1.0, &cfg()).unwrap();
        assert!(r.converged(), "status {:?}", r.status);
        assert_relative_eq!(r.value, 10.0, max_relative = 1e-7);
    }

    #[test]
    fn tail_power() {
        let r = integrate_tail(|x| ok(x.powi(-2)), 1.0, &cfg()).unwrap();
        assert!(r.converged());
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn tail_exponential_from_zero() {
        let r = integrate_tail(|x| ok((-x).exp()), 0.0, &cfg()).unwrap();
        assert!(r.converged());
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn tail_harmonic_divergent() {
        let r = integrate_tail(|x| ok(1.0 / x), 1.0, &cfg()).unwrap();
        assert!(r.divergent());
    }

    #[test]
    fn tail_exponential_growth_divergent() {
        let r = integrate_tail(|x| ok((2.0 * x).exp()), 1.0, &cfg()).unwrap();
        assert!(r.divergent());
    }

    #[test]
    fn negative_divergence_keeps_sign() {
        let r = integrate_finite(|x| ok(-1.0 / x), 0.0, 1.0, &cfg()).unwrap();
        assert!(r.divergent());
        assert_eq!(r.value, f64::NEG_INFINITY);
    }

    #[test]
    fn domain_errors_propagate() {
        let e = parse("ln(x-2)").unwrap();
        let err = integrate_finite(|x| e.eval(x), 0.0, 1.0, &cfg());
        assert!(err.is_err());
    }

    #[test]
    fn piecewise_splits_help() {
        let e = parse("piecewise([0,1):1;[1,inf):x^(-2);)").unwrap();
        let r = integrate_finite_split(|x| e.eval(x), 0.0, 3.0, &e.breakpoints(), &cfg()).unwrap();
        assert!(r.converged());
        assert_relative_eq!(r.value, 1.0 + (1.0 - 1.0 / 3.0), max_relative = 1e-10);
    }

    #[test]
    fn splitting_consistency() {
        let mut rng = StdRng::seed_from_u64(7);
        let funcs: Vec<(&str, Box<dyn Fn(f64) -> Result<f64, DomainError>>)> = vec![
            ("smooth", Box::new(|x: f64| Ok((x * 3.0).sin() * (-x).exp()))),
            ("singular", Box::new(|x: f64| Ok(x.powf(-0.4)))),
            ("poly", Box::new(|x: f64| Ok(x * x - x + 0.25))),
        ];
        for (name, f) in &funcs {
            for _ in 0..10 {
                let (a, b) = (0.0, 2.0);
                let m = rng.gen_range(0.1..1.9);
                let whole = integrate_finite(f, a, b, &cfg()).unwrap();
                let left = integrate_finite(f, a, m, &cfg()).unwrap();
                let right = integrate_finite(f, m, b, &cfg()).unwrap();
                assert!(whole.converged() && left.converged() && right.converged());
                let combined_err = 2.0 * (whole.error + left.error + right.error);
                assert!(
                    (whole.value - left.value - right.value).abs() <= combined_err.max(1e-12),
                    "{} split at {} differs: {} vs {} + {}",
                    name,
                    m,
                    whole.value,
                    left.value,
                    right.value
                );
            }
        }
    }

    #[test]
    fn tail_consistency() {
        let mut rng = StdRng::seed_from_u64(11);
        let f = |x: f64| ok(x.powf(-1.7));
        for _ in 0..10 {
            let r = 1.0;
            let big = rng.gen_range(2.0..50.0);
            let whole = integrate_tail(f, r, &cfg()).unwrap();
            let head = integrate_finite(f, r, big, &cfg()).unwrap();
            let tail = integrate_tail(f, big, &cfg()).unwrap();
            assert_relative_eq!(
                whole.value,
                head.value + tail.value,
                max_relative = 1e-7
            );
        }
    }

    #[test]
    fn lq_norm_finite_q() {
        // ||1||_{L_2(0,1)} with v = 1
        let v = parse("1").unwrap();
        let r = lq_norm(|_| ok(1.0), &v, 2.0, Region::new(0.0, 1.0), &cfg()).unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn lq_norm_sup_at_left_edge() {
        // v = e^{-x}, g = 1: sup over (0, inf) is 1, attained as x -> 0+
        let v = parse("exp(-x)").unwrap();
        let r = lq_norm(
            |_| ok(1.0),
            &v,
            f64::INFINITY,
            Region::half_line(),
            &cfg(),
        )
        .unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn lq_norm_sup_interior_peak() {
        // |x e^{-x}| peaks at x = 1 with value 1/e
        let v = parse("exp(-x)").unwrap();
        let r = lq_norm(
            |x| ok(x),
            &v,
            f64::INFINITY,
            Region::half_line(),
            &cfg(),
        )
        .unwrap();
        assert_relative_eq!(r.value, (-1.0f64).exp(), max_relative = 1e-10);
    }

    #[test]
    fn ess_sup_dominates_user_samples() {
        let mut rng = StdRng::seed_from_u64(23);
        let v = parse("exp(-x)*x^2").unwrap();
        let h = |x: f64| Ok((v.eval(x)?).abs());
        let (sup, _) = ess_sup(&h, Region::half_line(), &[]).unwrap();
        for _ in 0..200 {
            let x = rng.gen_range(1e-6..1e3);
            assert!(sup >= h(x).unwrap() * (1.0 - 1e-9));
        }
    }

    #[test]
    fn converged_error_within_tolerance_contract() {
        let c = cfg();
        for f in [
            |x: f64| Ok((-x).exp()),
            |x: f64| Ok(x.powf(-0.3)),
            |x: f64| Ok((10.0 * x).cos()),
        ] {
            let r = integrate_finite(f, 0.0, 5.0, &c).unwrap();
            if r.converged() {
                assert!(r.error <= c.abs_tol.max(c.rel_tol * r.value.abs()));
            }
        }
    }
}
