//! Discretization of the Hardy-type Volterra operator
//! (Tf)(x) = Σ_k a_k(x)·∫_0^x t^k f(t) dt and lower bounds on its
//! L_{p,u} → L_{q,v} norm.
//!
//! The discrete model lives on a log-spaced grid with trapezoid weights;
//! discrete norms are the quadrature-weighted ones, so the reported ratio
//! approximates the continuum ratio of the truncated operator. Estimates
//! are lower bounds on the discrete norm and never claim the continuum
//! best constant; upper bounds always come from the criteria side.

use crate::criteria::{
    sk_constant, doubling_constant, CriteriaError, Exponents, RGrid, VerdictStatus,
};
use crate::expr::{DomainError, Expr};
use crate::quad::{integrate_finite, QuadConfig, QuadStatus};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpNormError {
    #[error("expression domain error: {0}")]
    Domain(#[from] DomainError),
    #[error("criteria error: {0}")]
    Criteria(#[from] CriteriaError),
    #[error("numeric overflow in norm estimation: {0}")]
    Overflow(String),
    #[error("sandwich violation: {0:?}")]
    SandwichViolation(Box<SandwichReport>),
}

/// The operator f ↦ Σ_k a_k(x)·∫_0^x t^k f(t) dt together with the weights
/// and exponents of the source and target spaces.
#[derive(Debug, Clone)]
pub struct OperatorSpec {
    /// a_0, …, a_n.
    pub coeffs: Vec<Expr>,
    pub u: Expr,
    pub v: Expr,
    pub exps: Exponents,
}

impl OperatorSpec {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// Sampled operator on a log grid: dense lower-triangular kernel
/// M[i][j] = Σ_k a_k(x_i)·x_j^k·ω_j for x_j ≤ x_i, plus the diagonal
/// weight samples U and V.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kernel: DMatrix<f64>,
    pub u_diag: Vec<f64>,
    pub v_diag: Vec<f64>,
    pub exps: Exponents,
    /// a_k sampled at the nodes; lets the operator be applied in
    /// O((n+1)·N) by prefix sums, identically to the dense product.
    coeff_rows: Vec<Vec<f64>>,
}

impl DiscreteOperator {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// M·g through the dense kernel.
    pub fn apply_dense(&self, g: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.kernel[(i, j)] * g[j];
            }
            out[i] = acc;
        }
        out
    }

    /// M·g by per-power prefix sums; algebraically the same sum as the
    /// dense product, evaluated in O((n+1)·N).
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for (k, a_row) in self.coeff_rows.iter().enumerate() {
            let mut prefix = 0.0;
            for i in 0..n {
                prefix += self.weights[i] * self.nodes[i].powi(k as i32) * g[i];
                out[i] += a_row[i] * prefix;
            }
        }
        out
    }

    /// Mᵀ·h by suffix sums.
    pub fn apply_transpose(&self, h: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for (k, a_row) in self.coeff_rows.iter().enumerate() {
            let mut suffix = 0.0;
            for j in (0..n).rev() {
                suffix += a_row[j] * h[j];
                out[j] += self.weights[j] * self.nodes[j].powi(k as i32) * suffix;
            }
        }
        out
    }

    /// Weighted discrete p-norm of the source side: (Σ ω_j |U_j g_j|^p)^{1/p}.
    pub fn source_norm(&self, g: &[f64]) -> f64 {
        let p = self.exps.p();
        self.weights
            .iter()
            .zip(&self.u_diag)
            .zip(g)
            .map(|((w, u), gj)| w * (u * gj).abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }

    /// Weighted discrete q-norm of the image side; max_i |V_i h_i| for q = ∞.
    pub fn image_norm(&self, h: &[f64]) -> f64 {
        if self.exps.q_is_infinite() {
            self.v_diag
                .iter()
                .zip(h)
                .map(|(v, hi)| (v * hi).abs())
                .fold(0.0, f64::max)
        } else {
            let q = self.exps.q();
            self.weights
                .iter()
                .zip(&self.v_diag)
                .zip(h)
                .map(|((w, v), hi)| w * (v * hi).abs().powf(q))
                .sum::<f64>()
                .powf(1.0 / q)
        }
    }

    /// The Rayleigh ratio ‖V·(Mg)‖_q / ‖U·g‖_p.
    pub fn ratio(&self, g: &[f64]) -> f64 {
        self.image_norm(&self.apply(g)) / self.source_norm(g)
    }
}

/// Sample the operator on `n_grid` log-spaced nodes over the domain.
pub fn discretize(
    spec: &OperatorSpec,
    n_grid: usize,
    domain: (f64, f64),
) -> Result<DiscreteOperator, DomainError> {
    let (x_min, x_max) = domain;
    assert!(n_grid >= 16 && x_min > 0.0 && x_max > x_min);
    let (llo, lhi) = (x_min.ln(), x_max.ln());
    let nodes: Vec<f64> = (0..n_grid)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n_grid - 1) as f64).exp())
        .collect();
    let mut weights = vec![0.0; n_grid];
    weights[0] = (nodes[1] - nodes[0]) / 2.0;
    weights[n_grid - 1] = (nodes[n_grid - 1] - nodes[n_grid - 2]) / 2.0;
    for i in 1..n_grid - 1 {
        weights[i] = (nodes[i + 1] - nodes[i - 1]) / 2.0;
    }

    let mut coeff_rows = Vec::with_capacity(spec.coeffs.len());
    for a in &spec.coeffs {
        let row: Result<Vec<f64>, DomainError> = nodes.iter().map(|&x| a.eval(x)).collect();
        coeff_rows.push(row?);
    }
    let u_diag: Vec<f64> = nodes
        .iter()
        .map(|&x| spec.u.eval(x))
        .collect::<Result<_, _>>()?;
    let v_diag: Vec<f64> = nodes
        .iter()
        .map(|&x| spec.v.eval(x))
        .collect::<Result<_, _>>()?;

    let kernel = DMatrix::from_fn(n_grid, n_grid, |i, j| {
        if j > i {
            0.0
        } else {
            let mut acc = 0.0;
            for (k, a_row) in coeff_rows.iter().enumerate() {
                acc += a_row[i] * nodes[j].powi(k as i32);
            }
            acc * weights[j]
        }
    });

    Ok(DiscreteOperator {
        nodes,
        weights,
        kernel,
        u_diag,
        v_diag,
        exps: spec.exps,
        coeff_rows,
    })
}

/// A lower bound on the discrete operator norm with the vector attaining
/// it. Reproducible for a fixed seed.
#[derive(Debug, Clone, Serialize)]
pub struct NormEstimate {
    pub lower_bound: f64,
    pub maximizer: Vec<f64>,
    pub iterations: usize,
    /// Best ratio found by each restart (empty for the deterministic
    /// power-iteration and q = ∞ routes).
    pub restart_values: Vec<f64>,
    pub seed: u64,
    /// Set by domain-sweep analyses; `None` when a single domain was used.
    pub truncation_stable: Option<bool>,
}

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITER: usize = 200_000;

/// Largest singular value of W^{1/2}·V·M·U^{-1}·W^{-1/2} by power
/// iteration on the normal matrix, i.e. the p = q = 2 discrete norm.
fn power_iteration(op: &DiscreteOperator, seed: u64) -> Result<(f64, Vec<f64>, usize), OpNormError> {
    let n = op.len();
    let sqw: Vec<f64> = op.weights.iter().map(|w| w.sqrt()).collect();
    let forward = |y: &[f64]| -> Vec<f64> {
        let g: Vec<f64> = (0..n).map(|j| y[j] / (sqw[j] * op.u_diag[j])).collect();
        let mg = op.apply(&g);
        (0..n).map(|i| sqw[i] * op.v_diag[i] * mg[i]).collect()
    };
    let backward = |z: &[f64]| -> Vec<f64> {
        let h: Vec<f64> = (0..n).map(|i| sqw[i] * op.v_diag[i] * z[i]).collect();
        let mth = op.apply_transpose(&h);
        (0..n).map(|j| mth[j] / (sqw[j] * op.u_diag[j])).collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ny = norm(&y);
    y.iter_mut().for_each(|x| *x /= ny);

    let mut sigma = 0.0;
    let mut iterations = 0;
    for it in 0..POWER_MAX_ITER {
        iterations = it + 1;
        let z = backward(&forward(&y));
        let nz = norm(&z);
        if !nz.is_finite() {
            return Err(OpNormError::Overflow("power iteration".into()));
        }
        if nz == 0.0 {
            return Ok((0.0, y, iterations));
        }
        let new_sigma = nz.sqrt();
        let done = (new_sigma - sigma).abs() <= POWER_TOL * new_sigma;
        sigma = new_sigma;
        y.iter_mut().zip(&z).for_each(|(a, b)| *a = b / nz);
        if done {
            break;
        }
    }
    // map back to the source-side sample vector g
    let g: Vec<f64> = (0..n).map(|j| y[j] / (sqw[j] * op.u_diag[j])).collect();
    Ok((sigma, g, iterations))
}

/// Exact q = ∞ discrete norm: per image row, the Hölder-dual source norm
/// of that row functional, maximized over rows.
fn row_dual_qinf(op: &DiscreteOperator) -> (f64, Vec<f64>, usize) {
    let n = op.len();
    let p = op.exps.p();
    let p_conj = op.exps.p_conjugate();
    let mut best = 0.0;
    let mut best_row = 0;
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..=i {
            let m = op.kernel[(i, j)];
            // ω_j |m/ω_j / U_j|^{p'}·... written with the quadrature factor
            // pulled out: Σ_j ω_j |row_j|^{p'} U_j^{-p'} with row_j the
            // kernel before the ω_j factor
            let row = m / op.weights[j];
            acc += op.weights[j] * (row.abs() / op.u_diag[j]).powf(p_conj);
        }
        let dual = acc.powf(1.0 / p_conj);
        let val = op.v_diag[i] * dual;
        if val > best {
            best = val;
            best_row = i;
        }
    }
    // Hölder-optimal source vector for the best row (overall scale is
    // irrelevant to the ratio)
    let _ = p;
    let mut g = vec![0.0; n];
    for j in 0..=best_row {
        let row = op.kernel[(best_row, j)] / op.weights[j];
        g[j] = row.signum() * row.abs().powf(p_conj - 1.0) * op.u_diag[j].powf(-p_conj);
    }
    (best, g, 1)
}

const ASCENT_MAX_ITER: usize = 50_000;

/// Projected ascent on the Rayleigh ratio for one start vector. The ascent
/// direction is the dual-map image of the norm subgradient (the natural
/// gradient in the weighted p-norm geometry, which reduces to the power
/// method at p = q = 2), taken with backtracking toward the current
/// iterate whenever the full step does not improve the ratio.
fn ascent_single(op: &DiscreteOperator, g0: Vec<f64>) -> Result<(f64, Vec<f64>, usize), OpNormError> {
    let n = op.len();
    let p = op.exps.p();
    let p_conj = op.exps.p_conjugate();
    let q = op.exps.q();
    let mut g = g0;
    let d0 = op.source_norm(&g);
    if d0 == 0.0 || !d0.is_finite() {
        return Err(OpNormError::Overflow("degenerate start vector".into()));
    }
    g.iter_mut().for_each(|x| *x /= d0);

    let mut ratio = op.ratio(&g);
    if !ratio.is_finite() {
        return Err(OpNormError::Overflow("ratio overflow".into()));
    }
    let mut iterations = 0;
    let mut stall = 0;
    for it in 0..ASCENT_MAX_ITER {
        iterations = it + 1;
        let z = op.apply(&g);
        let num = op.image_norm(&z);
        if num == 0.0 {
            break;
        }
        // subgradient of the image norm at z
        let s: Vec<f64> = if q.is_infinite() {
            let (mut best_i, mut best) = (0usize, 0.0f64);
            for i in 0..n {
                let val = (op.v_diag[i] * z[i]).abs();
                if val > best {
                    best = val;
                    best_i = i;
                }
            }
            let mut e = vec![0.0; n];
            e[best_i] = op.v_diag[best_i] * z[best_i].signum();
            e
        } else {
            (0..n)
                .map(|i| {
                    op.weights[i]
                        * op.v_diag[i].powf(q)
                        * z[i].abs().powf(q - 1.0)
                        * z[i].signum()
                })
                .collect()
        };
        let y = op.apply_transpose(&s);
        // dual map of the weighted p-norm: the maximizer of <y, d> over
        // the unit sphere ‖U d‖_{p,ω} = 1, up to normalization
        let mut direction: Vec<f64> = (0..n)
            .map(|j| {
                let denom = op.weights[j] * op.u_diag[j].powf(p);
                if denom > 0.0 {
                    y[j].signum() * (y[j].abs() / denom).powf(p_conj - 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let dn = op.source_norm(&direction);
        if dn == 0.0 || !dn.is_finite() {
            break;
        }
        direction.iter_mut().for_each(|x| *x /= dn);

        // backtrack from the full fixed-point step toward the iterate
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..45 {
            let cand: Vec<f64> = g
                .iter()
                .zip(&direction)
                .map(|(gj, dj)| gj + lambda * (dj - gj))
                .collect();
            let dc = op.source_norm(&cand);
            if dc > 0.0 && dc.is_finite() {
                let cand: Vec<f64> = cand.iter().map(|x| x / dc).collect();
                let cr = op.ratio(&cand);
                if cr > ratio {
                    improved = cr > ratio * (1.0 + 1e-13);
                    g = cand;
                    ratio = cr;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-14 {
                break;
            }
        }
        if improved {
            stall = 0;
        } else {
            stall += 1;
            if stall >= 4 {
                break;
            }
        }
    }
    Ok((ratio, g, iterations))
}

/// Projected gradient ascent with seeded random restarts; the generic
/// route for arbitrary exponents. Always a lower bound on the discrete
/// norm.
pub fn ascent_lower_bound(
    op: &DiscreteOperator,
    restarts: usize,
    seed: u64,
) -> Result<NormEstimate, OpNormError> {
    let n = op.len();
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut restart_values = Vec::with_capacity(restarts);
    let mut total_iter = 0;
    for r in 0..restarts.max(1) {
        let restart_seed = seed.wrapping_add((r as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut rng = ChaCha8Rng::seed_from_u64(restart_seed);
        // positive bumps mixed with signed noise explore both the
        // one-signed extremizers and sign-changing candidates
        let g0: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    rng.gen_range(0.1..1.0)
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        let (val, g, iters) = ascent_single(op, g0)?;
        total_iter += iters;
        restart_values.push(val);
        if best.as_ref().map_or(true, |(b, _, _)| val > *b) {
            best = Some((val, g, iters));
        }
    }
    let (lower_bound, maximizer, _) = best.unwrap();
    Ok(NormEstimate {
        lower_bound,
        maximizer,
        iterations: total_iter,
        restart_values,
        seed,
        truncation_stable: None,
    })
}

/// Lower bound on the discrete norm of the operator: power iteration when
/// p = q = 2, the exact row-dual value when q = ∞, projected gradient
/// ascent otherwise.
pub fn norm_lower_bound(
    op: &DiscreteOperator,
    restarts: usize,
    seed: u64,
) -> Result<NormEstimate, OpNormError> {
    if op.u_diag.iter().any(|&u| u <= 0.0 || !u.is_finite()) {
        return Err(OpNormError::Overflow(
            "source weight u must be positive at every node".into(),
        ));
    }
    if op.exps.p() == 2.0 && op.exps.q() == 2.0 {
        let (sigma, g, iterations) = power_iteration(op, seed)?;
        return Ok(NormEstimate {
            lower_bound: sigma,
            maximizer: g,
            iterations,
            restart_values: Vec::new(),
            seed,
            truncation_stable: None,
        });
    }
    if op.exps.q_is_infinite() {
        let (val, g, _) = row_dual_qinf(op);
        return Ok(NormEstimate {
            lower_bound: val,
            maximizer: g,
            iterations: 1,
            restart_values: Vec::new(),
            seed,
            truncation_stable: None,
        });
    }
    ascent_lower_bound(op, restarts, seed)
}

/// Options for [`sandwich_check`].
#[derive(Debug, Clone)]
pub struct SandwichOptions {
    pub n_grid: usize,
    pub domain: (f64, f64),
    pub restarts: usize,
    pub seed: u64,
    /// Slack on the upper-bound consistency test.
    pub tol: f64,
    /// Number of domain doublings used for the divergence-coupling check.
    pub doublings: usize,
    /// Per-doubling growth below this fraction counts as bounded.
    pub growth_threshold: f64,
}

impl Default for SandwichOptions {
    fn default() -> Self {
        SandwichOptions {
            n_grid: 1024,
            domain: (1e-4, 1e4),
            restarts: 8,
            seed: 0x4861_7264,
            tol: 0.02,
            doublings: 3,
            growth_threshold: 0.05,
        }
    }
}

/// Two-sided consistency report: criteria verdicts and upper bound on one
/// side, operator-norm lower bounds on the other.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub sk_status: Vec<VerdictStatus>,
    pub sk_values: Vec<Option<f64>>,
    /// Both hypotheses (local integrability, doubling for degree ≥ 1) hold.
    pub conditions_hold: bool,
    pub doubling_status: Option<VerdictStatus>,
    /// Σ_k (q')^{1/p'} q^{1/q} S_k when every S_k is finite.
    pub upper_bound: Option<f64>,
    pub lower_bound: f64,
    /// (x_min, x_max, estimate) for each domain used.
    pub lower_bounds_by_domain: Vec<(f64, f64, f64)>,
    /// lower ≤ upper·(1+tol), when an upper bound exists.
    pub upper_consistent: Option<bool>,
    /// When asserted: the lower bound grew by at least the growth
    /// threshold on every doubling.
    pub divergence_coupling: Option<bool>,
    pub notes: Vec<String>,
}

/// Check the two-sided relationship between the scanned constants and the
/// operator-norm lower bound: the lower bound must stay below the
/// criteria-side upper bound, and when some S_k is infinite while the
/// hypotheses hold, the lower bound must keep growing as the domain is
/// enlarged.
pub fn sandwich_check(
    spec: &OperatorSpec,
    grid: &RGrid,
    cfg: &QuadConfig,
    opts: &SandwichOptions,
) -> Result<SandwichReport, OpNormError> {
    let n = spec.degree();
    let exps = &spec.exps;
    let mut notes = Vec::new();

    // integrability of u^{-p'}
    let p_conj = exps.p_conjugate();
    let u = spec.u.clone();
    let dens = move |x: f64| -> Result<f64, DomainError> {
        let uv = match u.eval(x) {
            Ok(v) => v,
            Err(e) if e.is_overflow() => return Ok(0.0),
            Err(e) => return Err(e),
        };
        Ok(uv.abs().powf(-p_conj))
    };
    let c21_ok = integrate_finite(&dens, 0.0, grid.r_max, cfg)
        .map(|r| r.status != QuadStatus::Divergent)
        .unwrap_or(false);

    let doubling_status = if n >= 1 && c21_ok {
        Some(doubling_constant(&spec.u, n, exps, grid, cfg)?.status)
    } else {
        None
    };
    let conditions_hold =
        c21_ok && doubling_status.map_or(true, |s| s == VerdictStatus::Finite);

    let mut sk_status = Vec::new();
    let mut sk_values = Vec::new();
    for (k, a_k) in spec.coeffs.iter().enumerate() {
        let verdict = sk_constant(k, a_k, &spec.u, &spec.v, exps, grid, cfg)?;
        sk_status.push(verdict.status);
        sk_values.push(verdict.value);
    }

    let all_finite = sk_status.iter().all(|s| *s == VerdictStatus::Finite);
    let any_infinite = sk_status.iter().any(|s| *s == VerdictStatus::Infinite);
    let upper_bound = all_finite.then(|| {
        exps.upper_bound_factor() * sk_values.iter().map(|v| v.unwrap_or(0.0)).sum::<f64>()
    });

    let op = discretize(spec, opts.n_grid, opts.domain)?;
    let base = norm_lower_bound(&op, opts.restarts, opts.seed)?;
    let mut lower_bounds_by_domain = vec![(opts.domain.0, opts.domain.1, base.lower_bound)];

    let mut divergence_coupling = None;
    if any_infinite {
        if conditions_hold {
            let mut prev = base.lower_bound;
            let mut grew = true;
            for k in 1..=opts.doublings {
                let factor = (1u64 << k) as f64;
                let domain = (opts.domain.0 / factor, opts.domain.1 * factor);
                let op_k = discretize(spec, opts.n_grid, domain)?;
                let est = norm_lower_bound(&op_k, opts.restarts, opts.seed)?;
                lower_bounds_by_domain.push((domain.0, domain.1, est.lower_bound));
                if est.lower_bound < prev * (1.0 + opts.growth_threshold) {
                    grew = false;
                }
                prev = est.lower_bound;
            }
            divergence_coupling = Some(grew);
        } else {
            notes.push(
                "hypotheses unmet (integrability/doubling): unbounded coefficient constants \
                 need not force an unbounded operator norm, so no coupling is asserted"
                    .to_string(),
            );
        }
    }

    let upper_consistent =
        upper_bound.map(|ub| base.lower_bound <= ub * (1.0 + opts.tol));

    let report = SandwichReport {
        sk_status,
        sk_values,
        conditions_hold,
        doubling_status,
        upper_bound,
        lower_bound: base.lower_bound,
        lower_bounds_by_domain,
        upper_consistent,
        divergence_coupling,
        notes,
    };
    if upper_consistent == Some(false) || divergence_coupling == Some(false) {
        return Err(OpNormError::SandwichViolation(Box::new(report)));
    }
    Ok(report)
}
