//! Orthogonal polynomials and quadrature on the sphere `S^{d-1}(sqrt(d))`.
//!
//! The one-coordinate marginal `tau_d` of the uniform measure on
//! `S^{d-1}(sqrt(d))` has density proportional to `(1 - x^2/d)^((d-3)/2)` on
//! `[-sqrt(d), sqrt(d)]`. Gegenbauer polynomials `Q_k^{(d)}` live on `[-d, d]`
//! (argument `sqrt(d) * x`) and are normalized so that `Q_k(d) = 1`, which
//! makes `E[Q_j(sqrt(d) X) Q_k(sqrt(d) X)] = delta_jk / B(d, k)`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::activation::Activation;
use crate::error::{Error, Result};

/// Default number of nodes of the Gauss-Jacobi marginal rule.
pub const DEFAULT_QUAD_NODES: usize = 200;
/// Nodes per panel of the composite rules used around activation kinks.
pub const PANEL_NODES: usize = 24;

/// Probabilists' Hermite polynomial `He_k(x)`.
pub fn hermite_he(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = x * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `k!` as a float.
pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// Exact `B(d, k) = (2k + d - 2)/(d - 2) * binom(k + d - 3, k)`.
pub fn dim_spherical_harmonics_big(d: usize, k: usize) -> Result<BigUint> {
    if d < 3 {
        return Err(Error::UnsupportedDimension { d, min: 3 });
    }
    let mut binom = BigUint::one();
    for i in 1..=k {
        binom *= BigUint::from(d - 3 + i);
        binom /= BigUint::from(i);
    }
    let numer = binom * BigUint::from(2 * k + d - 2);
    Ok(numer / BigUint::from(d - 2))
}

/// Dimension of the degree-`k` spherical harmonics in `d` dimensions.
pub fn dim_spherical_harmonics(d: usize, k: usize) -> Result<u64> {
    dim_spherical_harmonics_big(d, k)?.to_u64().ok_or_else(|| Error::Overflow {
        what: format!("B({d}, {k}) does not fit in 64 bits"),
    })
}

/// `B(d, k)` as a float; exact up to rounding of the final conversion.
pub fn dim_spherical_harmonics_f64(d: usize, k: usize) -> Result<f64> {
    let b = dim_spherical_harmonics_big(d, k)?;
    b.to_f64()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Overflow { what: format!("B({d}, {k}) exceeds f64 range") })
}

/// Gegenbauer polynomials `Q_0..=Q_K` in dimension `d`, evaluated by the
/// three-term recurrence `Q_{k+1}(t) = (a_k t + b_k) Q_k(t) - c_k Q_{k-1}(t)`.
#[derive(Debug, Clone)]
pub struct GegenbauerBasis {
    d: usize,
    max_degree: usize,
    recurrence: Vec<(f64, f64, f64)>,
}

impl GegenbauerBasis {
    pub fn new(d: usize, max_degree: usize) -> Result<Self> {
        if d < 3 {
            return Err(Error::UnsupportedDimension { d, min: 3 });
        }
        let df = d as f64;
        // Classical C_k^{(d-2)/2}(z) rescaled to value one at z = 1, with z = t/d.
        let recurrence = (0..max_degree)
            .map(|k| {
                let k = k as f64;
                let denom = k + df - 2.0;
                ((2.0 * k + df - 2.0) / (denom * df), 0.0, k / denom)
            })
            .collect();
        Ok(GegenbauerBasis { d, max_degree, recurrence })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn recurrence_coefficients(&self) -> &[(f64, f64, f64)] {
        &self.recurrence
    }

    fn check_arg(&self, t: f64) -> Result<()> {
        let d = self.d as f64;
        if !(t.abs() <= d * (1.0 + 1e-12)) {
            return Err(Error::ArgumentOutOfRange { value: t, lo: -d, hi: d });
        }
        Ok(())
    }

    /// `Q_k^{(d)}(t)` for `t` in `[-d, d]`.
    pub fn eval(&self, k: usize, t: f64) -> Result<f64> {
        if k > self.max_degree {
            return Err(Error::DegreeOutOfRange { k, max: self.max_degree });
        }
        self.check_arg(t)?;
        let (mut prev, mut cur) = (0.0, 1.0);
        for &(a, b, c) in &self.recurrence[..k] {
            let next = (a * t + b) * cur - c * prev;
            prev = cur;
            cur = next;
        }
        Ok(cur)
    }

    /// Fills `out[k] = Q_k(t)` for every `k <= min(K, out.len() - 1)`.
    /// No range check; callers guarantee `|t| <= d`.
    pub fn eval_all_into(&self, t: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        out[0] = 1.0;
        let (mut prev, mut cur) = (0.0, 1.0);
        for (k, slot) in out.iter_mut().enumerate().skip(1).take(self.max_degree) {
            let (a, b, c) = self.recurrence[k - 1];
            let next = (a * t + b) * cur - c * prev;
            prev = cur;
            cur = next;
            *slot = cur;
        }
    }

    /// `sum_k coeffs[k] * Q_k(t)` over `k <= min(K, coeffs.len() - 1)`.
    #[inline]
    pub fn series(&self, coeffs: &[f64], t: f64) -> f64 {
        let Some(&c0) = coeffs.first() else { return 0.0 };
        let mut acc = c0;
        let (mut prev, mut cur) = (0.0, 1.0);
        for (k, &ck) in coeffs.iter().enumerate().skip(1).take(self.max_degree) {
            let (a, b, c) = self.recurrence[k - 1];
            let next = (a * t + b) * cur - c * prev;
            prev = cur;
            cur = next;
            acc += ck * cur;
        }
        acc
    }

    /// [`GegenbauerBasis::series`] at every `ts[i]`, written to `out[i]`.
    /// Four independent recurrences run side by side; each result is
    /// bit-identical to the scalar call.
    pub fn series_many(&self, coeffs: &[f64], ts: &[f64], out: &mut [f64]) {
        assert_eq!(ts.len(), out.len(), "series_many: length mismatch");
        let Some(&c0) = coeffs.first() else {
            out.fill(0.0);
            return;
        };
        let terms = (coeffs.len() - 1).min(self.max_degree);
        let mut chunks = ts.chunks_exact(4);
        let mut outs = out.chunks_exact_mut(4);
        for (t, o) in (&mut chunks).zip(&mut outs) {
            let mut acc = [c0; 4];
            let mut prev = [0.0; 4];
            let mut cur = [1.0; 4];
            for k in 1..=terms {
                let (a, b, c) = self.recurrence[k - 1];
                let ck = coeffs[k];
                for l in 0..4 {
                    let next = (a * t[l] + b) * cur[l] - c * prev[l];
                    prev[l] = cur[l];
                    cur[l] = next;
                    acc[l] += ck * cur[l];
                }
            }
            o.copy_from_slice(&acc);
        }
        for (t, o) in chunks.remainder().iter().zip(outs.into_remainder()) {
            *o = self.series(coeffs, *t);
        }
    }
}

/// A quadrature rule for a probability measure on the real line.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Degree up to which polynomials are integrated exactly, if the rule is Gaussian.
    pub exactness: Option<usize>,
}

impl QuadratureRule {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Orthonormal polynomial values `p_0..p_{m-1}` at `x` and `p_m`, `p_m'`,
/// for the monic recurrence `(alpha, beta)` with `beta[0]` the total mass.
fn orthonormal_eval(alpha: &[f64], beta: &[f64], m: usize, x: f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0;
    let mut p = 1.0 / beta[0].sqrt();
    let mut dp_prev = 0.0;
    let mut dp = 0.0;
    let mut sum_sq = p * p;
    for k in 0..m {
        let sb_next = beta[k + 1].sqrt();
        let sb = if k == 0 { 0.0 } else { beta[k].sqrt() };
        let p_next = ((x - alpha[k]) * p - sb * p_prev) / sb_next;
        let dp_next = (p + (x - alpha[k]) * dp - sb * dp_prev) / sb_next;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
        if k + 1 < m {
            sum_sq += p * p;
        }
    }
    (sum_sq, p, dp)
}

/// Gauss rule with `m` nodes from monic recurrence coefficients
/// (`alpha.len() >= m`, `beta.len() >= m + 1`, `beta[0]` the total mass).
///
/// Nodes come from the Jacobi matrix eigenvalues and are polished by Newton
/// steps on the degree-`m` orthonormal polynomial; weights use the
/// Christoffel form `1 / sum_k p_k(x)^2`, which keeps tiny tail weights
/// accurate in relative terms.
pub fn gauss_from_recurrence(alpha: &[f64], beta: &[f64], m: usize) -> Result<QuadratureRule> {
    if m == 0 || alpha.len() < m || beta.len() < m + 1 {
        return Err(Error::InvalidInput("recurrence too short for requested rule".into()));
    }
    let jacobi = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[j].sqrt()
        } else if j + 1 == i {
            beta[i].sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    let mut weights = Vec::with_capacity(m);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (_, p, dp) = orthonormal_eval(alpha, beta, m, *x);
            if dp == 0.0 || !dp.is_finite() {
                break;
            }
            let step = p / dp;
            if !step.is_finite() {
                break;
            }
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1e-300) {
                break;
            }
        }
        let (sum_sq, _, _) = orthonormal_eval(alpha, beta, m, *x);
        weights.push(1.0 / sum_sq);
    }
    if nodes.iter().chain(&weights).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Gauss rule produced non-finite nodes or weights".into()));
    }
    if alpha[..m].iter().all(|&a| a == 0.0) {
        symmetrize(&mut nodes, &mut weights);
    }
    let total: f64 = weights.iter().sum();
    let scale = beta[0] / total;
    weights.iter_mut().for_each(|w| *w *= scale);
    Ok(QuadratureRule { nodes, weights, exactness: Some(2 * m - 1) })
}

fn symmetrize(nodes: &mut [f64], weights: &mut [f64]) {
    let m = nodes.len();
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
}

/// Monic recurrence for the Jacobi weight `(1-z)^a (1+z)^b` on `[-1, 1]`,
/// normalized to total mass one.
pub fn jacobi_recurrence(a: f64, b: f64, m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut alpha = Vec::with_capacity(m + 1);
    let mut beta = Vec::with_capacity(m + 2);
    for k in 0..=m {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        alpha.push(if k == 0 { (b - a) / (a + b + 2.0) } else { (b * b - a * a) / (s * (s + 2.0)) });
    }
    beta.push(1.0);
    for k in 1..=m + 1 {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        let v = if k == 1 {
            // Closed form avoids the 0/0 at a + b = -1 or 0.
            4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + a + b).powi(2) * (3.0 + a + b))
        } else {
            4.0 * kf * (kf + a) * (kf + b) * (kf + a + b) / (s * s * (s + 1.0) * (s - 1.0))
        };
        beta.push(v);
    }
    (alpha, beta)
}

/// `m`-point Gauss-Jacobi rule for `(1-z)^a (1+z)^b`, weights summing to one.
pub fn gauss_jacobi(a: f64, b: f64, m: usize) -> Result<QuadratureRule> {
    let (alpha, beta) = jacobi_recurrence(a, b, m);
    gauss_from_recurrence(&alpha, &beta, m)
}

/// `m`-point Gauss-Legendre rule on `[-1, 1]` with weights summing to one.
pub fn gauss_legendre(m: usize) -> Result<QuadratureRule> {
    gauss_jacobi(0.0, 0.0, m)
}

/// `m`-point Gauss-Hermite rule for the standard Gaussian measure.
pub fn gauss_hermite(m: usize) -> Result<QuadratureRule> {
    let alpha = vec![0.0; m + 1];
    let beta: Vec<f64> = (0..=m + 1).map(|k| if k == 0 { 1.0 } else { k as f64 }).collect();
    gauss_from_recurrence(&alpha, &beta, m)
}

/// Composite Gauss-Legendre rule for the standard Gaussian measure with
/// panel boundaries at every breakpoint; exact to rounding for piecewise
/// polynomial integrands with kinks at those breakpoints.
pub fn gaussian_split_rule(breakpoints: &[f64]) -> Result<QuadratureRule> {
    const HALF_WIDTH: f64 = 40.0;
    const PANEL: f64 = 0.5;
    let gl = gauss_legendre(PANEL_NODES)?;
    let mut cuts = vec![-HALF_WIDTH, HALF_WIDTH];
    cuts.extend(breakpoints.iter().copied().filter(|b| b.abs() < HALF_WIDTH));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for piece in cuts.windows(2) {
        let (l, r) = (piece[0], piece[1]);
        let panels = ((r - l) / PANEL).ceil().max(1.0) as usize;
        let h = (r - l) / panels as f64;
        for p in 0..panels {
            let pl = l + p as f64 * h;
            for (&xi, &wi) in gl.nodes.iter().zip(&gl.weights) {
                let x = pl + 0.5 * h * (xi + 1.0);
                nodes.push(x);
                weights.push(h * wi * norm * (-0.5 * x * x).exp());
            }
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(QuadratureRule { nodes, weights, exactness: None })
}

/// Quadrature for `tau_d`, the law of `<e_1, x>` with `x ~ Unif(S^{d-1}(sqrt(d)))`.
#[derive(Debug, Clone)]
pub struct MarginalQuadrature {
    pub d: usize,
    /// Nodes in `[-sqrt(d), sqrt(d)]`.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Polynomial exactness degree; `None` for composite rules.
    pub exactness: Option<usize>,
}

impl MarginalQuadrature {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Gauss-Jacobi rule when the activation is smooth, otherwise a composite
    /// rule split at its kinks.
    pub fn for_activation(d: usize, act: &Activation, num_nodes: usize) -> Result<Self> {
        let bps = act.breakpoints();
        if bps.is_empty() {
            marginal_quadrature(d, num_nodes)
        } else {
            marginal_quadrature_split(d, &bps)
        }
    }
}

/// Gauss-Jacobi rule for `tau_d`, exact for polynomials of degree `2 m - 1`.
pub fn marginal_quadrature(d: usize, num_nodes: usize) -> Result<MarginalQuadrature> {
    if d < 3 {
        return Err(Error::UnsupportedDimension { d, min: 3 });
    }
    if num_nodes < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 nodes, got {num_nodes}")));
    }
    let a = (d as f64 - 3.0) / 2.0;
    let rule = gauss_jacobi(a, a, num_nodes)?;
    let scale = (d as f64).sqrt();
    Ok(MarginalQuadrature {
        d,
        nodes: rule.nodes.iter().map(|z| z * scale).collect(),
        weights: rule.weights,
        exactness: rule.exactness,
    })
}

/// Composite rule for `tau_d` with panel boundaries at `breakpoints` (given
/// in `x` units). Panels that reach `z = +-1` absorb the endpoint factor
/// `(1 -+ z)^a` into a Gauss-Jacobi rule; the far tails, where the density
/// falls below `e^-60` of its peak, are dropped.
pub fn marginal_quadrature_split(d: usize, breakpoints: &[f64]) -> Result<MarginalQuadrature> {
    if d < 3 {
        return Err(Error::UnsupportedDimension { d, min: 3 });
    }
    let a = (d as f64 - 3.0) / 2.0;
    let sqrt_d = (d as f64).sqrt();
    let z_cut = if a == 0.0 {
        1.0
    } else {
        let z = (1.0 - (-60.0 / a).exp()).sqrt();
        if z > 0.98 { 1.0 } else { z }
    };
    let width = (1.5 / (2.0 * a + 1.0).sqrt()).min(0.25);

    let mut cuts = vec![-z_cut, z_cut];
    cuts.extend(breakpoints.iter().map(|b| b / sqrt_d).filter(|z| z.abs() < z_cut));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let gl = gauss_legendre(PANEL_NODES)?;
    let right_end = gauss_jacobi(a, 0.0, PANEL_NODES)?;
    let left_end = gauss_jacobi(0.0, a, PANEL_NODES)?;

    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for piece in cuts.windows(2) {
        let (l, r) = (piece[0], piece[1]);
        let panels = ((r - l) / width).ceil().max(1.0) as usize;
        let h = (r - l) / panels as f64;
        for p in 0..panels {
            let pl = l + p as f64 * h;
            let pr = if p + 1 == panels { r } else { pl + h };
            if pr >= 1.0 && pl > -1.0 {
                let scale = (1.0 - pl).powf(a + 1.0) / (a + 1.0);
                for (&xi, &wi) in right_end.nodes.iter().zip(&right_end.weights) {
                    let z = pl + (1.0 - pl) * (xi + 1.0) / 2.0;
                    nodes.push(z);
                    weights.push(scale * wi * (1.0 + z).powf(a));
                }
            } else if pl <= -1.0 && pr < 1.0 {
                let scale = (pr + 1.0).powf(a + 1.0) / (a + 1.0);
                for (&xi, &wi) in left_end.nodes.iter().zip(&left_end.weights) {
                    let z = -1.0 + (pr + 1.0) * (xi + 1.0) / 2.0;
                    nodes.push(z);
                    weights.push(scale * wi * (1.0 - z).powf(a));
                }
            } else if pl <= -1.0 && pr >= 1.0 {
                let full = gauss_jacobi(a, a, PANEL_NODES)?;
                nodes.extend(&full.nodes);
                weights.extend(&full.weights);
            } else {
                for (&xi, &wi) in gl.nodes.iter().zip(&gl.weights) {
                    let z = pl + 0.5 * (pr - pl) * (xi + 1.0);
                    nodes.push(z);
                    weights.push((pr - pl) * wi * (1.0 - z * z).powf(a));
                }
            }
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Numerical(format!("composite marginal rule has mass {total}")));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(MarginalQuadrature {
        d,
        nodes: nodes.iter().map(|z| z * sqrt_d).collect(),
        weights,
        exactness: None,
    })
}

/// Extra polynomial exactness demanded beyond `2K` before a Gaussian rule is
/// trusted for coefficient extraction.
const SMOOTHNESS_MARGIN: usize = 8;

/// `xi_{d,k}(sigma) = int sigma(x) Q_k(sqrt(d) x) tau_d(dx)` for `k = 0..=K`.
pub fn gegenbauer_coefficients(
    basis: &GegenbauerBasis,
    sigma: impl Fn(f64) -> f64,
    quad: &MarginalQuadrature,
) -> Result<Vec<f64>> {
    if quad.d != basis.d() {
        return Err(Error::DimensionMismatch(format!(
            "quadrature for d = {} used with basis for d = {}",
            quad.d,
            basis.d()
        )));
    }
    let k_max = basis.max_degree();
    if let Some(have) = quad.exactness {
        let need = 2 * k_max + SMOOTHNESS_MARGIN;
        if have < need {
            return Err(Error::InsufficientQuadrature { have, need });
        }
    }
    let sqrt_d = (basis.d() as f64).sqrt();
    let mut xi = vec![0.0; k_max + 1];
    let mut q = vec![0.0; k_max + 1];
    for (&x, &w) in quad.nodes.iter().zip(&quad.weights) {
        let s = sigma(x);
        if !s.is_finite() {
            return Err(Error::NonFinite { node: x, value: s });
        }
        basis.eval_all_into(sqrt_d * x, &mut q);
        for (acc, &qk) in xi.iter_mut().zip(&q) {
            *acc += w * s * qk;
        }
    }
    Ok(xi)
}

/// Coefficients `mu_k = E[g(G) He_k(G)]`, classical normalization, so that
/// `g = sum_k mu_k He_k / k!`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteSeries {
    pub coefficients: Vec<f64>,
}

impl HermiteSeries {
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        let (mut prev, mut cur) = (0.0, 1.0);
        let mut fact = 1.0;
        for (k, &mu) in self.coefficients.iter().enumerate() {
            if k > 0 {
                let next = x * cur - (k - 1) as f64 * prev;
                prev = cur;
                cur = next;
                fact *= k as f64;
            }
            acc += mu * cur / fact;
        }
        acc
    }

    /// `sum_k mu_k^2 / k!`, the squared `L^2(gamma)` norm of the truncation.
    pub fn norm_sq(&self) -> f64 {
        self.coefficients.iter().enumerate().map(|(k, mu)| mu * mu / factorial(k)).sum()
    }
}

/// Hermite coefficients up to degree `k_max` using a given Gaussian rule.
pub fn hermite_coefficients_with(
    sigma: impl Fn(f64) -> f64,
    k_max: usize,
    rule: &QuadratureRule,
) -> Result<HermiteSeries> {
    let mut mu = vec![0.0; k_max + 1];
    let mut sq = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let s = sigma(x);
        sq += w * s * s;
        if !s.is_finite() || !sq.is_finite() {
            return Err(Error::NonFinite { node: x, value: s });
        }
        let (mut prev, mut cur) = (0.0, 1.0);
        for (k, acc) in mu.iter_mut().enumerate() {
            if k > 0 {
                let next = x * cur - (k - 1) as f64 * prev;
                prev = cur;
                cur = next;
            }
            *acc += w * s * cur;
        }
    }
    if mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::Numerical("divergent Hermite coefficient".into()));
    }
    Ok(HermiteSeries { coefficients: mu })
}

/// Hermite coefficients via a 200-node Gauss-Hermite rule.
pub fn hermite_coefficients(sigma: impl Fn(f64) -> f64, k_max: usize) -> Result<HermiteSeries> {
    hermite_coefficients_with(sigma, k_max, &gauss_hermite(DEFAULT_QUAD_NODES)?)
}

/// Hermite coefficients of an activation, splitting the Gaussian integral at
/// its kinks.
pub fn activation_hermite_coefficients(act: &Activation, k_max: usize) -> Result<HermiteSeries> {
    let bps = act.breakpoints();
    let rule = if bps.is_empty() { gauss_hermite(DEFAULT_QUAD_NODES)? } else { gaussian_split_rule(&bps)? };
    hermite_coefficients_with(|x| act.eval(x), k_max, &rule)
}

/// `xi_{d,k}(sigma) * (B(d,k) k!)^{1/2}` for each `d`, which tends to
/// `mu_k(sigma)` as `d` grows.
pub fn check_mu_xi_limit(act: &Activation, k: usize, d_list: &[usize]) -> Result<Vec<f64>> {
    d_list
        .iter()
        .map(|&d| {
            let basis = GegenbauerBasis::new(d, k)?;
            let quad = MarginalQuadrature::for_activation(d, act, DEFAULT_QUAD_NODES)?;
            let xi = gegenbauer_coefficients(&basis, |x| act.eval(x), &quad)?;
            let b = dim_spherical_harmonics_f64(d, k)?;
            Ok(xi[k] * (b * factorial(k)).sqrt())
        })
        .collect()
}
