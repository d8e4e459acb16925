//! Dot-product kernels `h(<x1, x2>/d)` built from random-feature activations,
//! their per-degree spectra, and cyclic-invariant averages.
//!
//! For `w ~ Unif(S^{d-1})` and `x` on `S^{d-1}(sqrt(d))`, the random-feature
//! kernel `E_w[sigma(<w,x1>) sigma(<w,x2>)]` has eigenvalue `xi_k = c_k^2` on
//! degree-`k` harmonics, where `c_k` is the Gegenbauer coefficient of `sigma`,
//! and `h(s) = sum_k xi_k B(d,k) Q_k(d s)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::specfun::{
    dim_spherical_harmonics_f64, gegenbauer_coefficients, GegenbauerBasis, MarginalQuadrature,
    DEFAULT_QUAD_NODES,
};

/// Default truncation degree of kernel series.
pub const DEFAULT_MAX_DEGREE: usize = 30;
/// Tolerance on `|‖x‖ - sqrt(d)|` for rows passed to matrix builders.
pub const ROW_NORM_TOL: f64 = 1e-8;
/// Inner products `s >= 1 - COINCIDENT` are treated as coincident points and
/// receive the exact diagonal `h(1)`.
const COINCIDENT: f64 = 1e-10;

/// Closed form of the ReLU random-feature kernel,
/// `(sqrt(1 - s^2) + (pi - arccos s) s) / (2 pi)`, valid for every `d`.
pub fn relu_kernel_closed_form(s: f64) -> f64 {
    let s = s.clamp(-1.0, 1.0);
    ((1.0 - s * s).sqrt() + (std::f64::consts::PI - s.acos()) * s) / (2.0 * std::f64::consts::PI)
}

#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    d: usize,
    xi: Vec<f64>,
    multiplicity: Vec<f64>,
    diagonal_exact: f64,
    /// Estimate of `sum_{k > K} xi_k^2 B(d,k)`.
    sq_tail: f64,
    activation_id: String,
    basis: GegenbauerBasis,
    series_coeffs: Vec<f64>,
}

/// Tail traces of the kernel and squared-kernel operators above a level degree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailTraces {
    pub level_degree: usize,
    pub kappa_h: f64,
    pub kappa_m: f64,
}

/// Builds the spectrum of the random-feature kernel of `act` in dimension `d`
/// truncated at degree `max_degree`.
pub fn build_dot_kernel(act: &Activation, d: usize, max_degree: usize) -> Result<KernelSpectrum> {
    // Degrees K+1..=2K are only used for the squared tail of the M operator.
    let extended = 2 * max_degree.max(1);
    let basis = GegenbauerBasis::new(d, extended)?;
    let nodes = DEFAULT_QUAD_NODES.max(2 * extended + 8);
    let quad = MarginalQuadrature::for_activation(d, act, nodes)?;
    let coeffs = gegenbauer_coefficients(&basis, |x| act.eval(x), &quad)?;
    let diagonal = quad.integrate(|x| act.eval(x).powi(2));
    if !(diagonal.is_finite() && diagonal >= 0.0) {
        return Err(Error::Numerical(format!("kernel diagonal computed as {diagonal}")));
    }
    let mut xi = Vec::with_capacity(max_degree + 1);
    let mut sq_tail = 0.0;
    for (k, c) in coeffs.iter().enumerate() {
        let v = c * c;
        if k <= max_degree {
            xi.push(v);
        } else {
            sq_tail += v * v * dim_spherical_harmonics_f64(d, k)?;
        }
    }
    KernelSpectrum::assemble(d, xi, diagonal, sq_tail, act.to_string())
}

impl KernelSpectrum {
    /// Spectrum from explicit eigenvalues, for kernels not given by an activation.
    pub fn from_parts(d: usize, xi: Vec<f64>, diagonal_exact: f64, label: impl Into<String>) -> Result<Self> {
        if xi.iter().any(|v| !v.is_finite()) || !diagonal_exact.is_finite() {
            return Err(Error::InvalidInput("non-finite spectrum".into()));
        }
        Self::assemble(d, xi, diagonal_exact, 0.0, label.into())
    }

    fn assemble(d: usize, mut xi: Vec<f64>, diagonal: f64, sq_tail: f64, activation_id: String) -> Result<Self> {
        if xi.is_empty() {
            return Err(Error::InvalidInput("spectrum needs at least degree 0".into()));
        }
        for (k, v) in xi.iter_mut().enumerate() {
            if *v < 0.0 {
                log::warn!("clamping negative eigenvalue xi_{k} = {v:e} to zero");
                *v = 0.0;
            }
        }
        let max_degree = xi.len() - 1;
        let basis = GegenbauerBasis::new(d, max_degree)?;
        let multiplicity = (0..=max_degree)
            .map(|k| dim_spherical_harmonics_f64(d, k))
            .collect::<Result<Vec<_>>>()?;
        let series_coeffs: Vec<f64> = xi.iter().zip(&multiplicity).map(|(x, b)| x * b).collect();
        let trace: f64 = series_coeffs.iter().sum();
        if trace > diagonal + 1e-9 * diagonal.max(1.0) {
            return Err(Error::Numerical(format!(
                "truncated trace {trace} exceeds diagonal {diagonal}"
            )));
        }
        Ok(KernelSpectrum {
            d,
            xi,
            multiplicity,
            diagonal_exact: diagonal.max(trace),
            sq_tail,
            activation_id,
            basis,
            series_coeffs,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn max_degree(&self) -> usize {
        self.xi.len() - 1
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// `B(d, k)` for `k = 0..=K`.
    pub fn multiplicity(&self) -> &[f64] {
        &self.multiplicity
    }

    pub fn diagonal_exact(&self) -> f64 {
        self.diagonal_exact
    }

    pub fn activation_id(&self) -> &str {
        &self.activation_id
    }

    pub fn basis(&self) -> &GegenbauerBasis {
        &self.basis
    }

    /// `sum_{k<=K} xi_k B(d,k)`.
    pub fn truncated_trace(&self) -> f64 {
        self.series_coeffs.iter().sum()
    }

    /// `diagonal_exact - truncated_trace`, the mass the series leaves out.
    pub fn truncation_gap(&self) -> f64 {
        self.diagonal_exact - self.truncated_trace()
    }

    /// Squared-kernel tail `sum_{k>K} xi_k^2 B(d,k)` (estimated from degrees up to 2K).
    pub fn squared_tail(&self) -> f64 {
        self.sq_tail
    }

    /// Truncated series `h(s)`.
    pub fn kernel_value(&self, s: f64) -> f64 {
        let s = s.clamp(-1.0, 1.0);
        self.basis.series(&self.series_coeffs, self.d as f64 * s)
    }

    /// Kernel between two points with normalized inner product `s`:
    /// the series off the diagonal, `h(1)` exactly for coincident points.
    #[inline]
    pub fn point_value(&self, s: f64) -> f64 {
        if s >= 1.0 - COINCIDENT {
            self.diagonal_exact
        } else {
            self.kernel_value(s)
        }
    }

    /// [`KernelSpectrum::point_value`] at every entry of `s`.
    pub fn point_values(&self, s: &[f64]) -> Vec<f64> {
        let d = self.d as f64;
        let ts: Vec<f64> = s.iter().map(|v| d * v.clamp(-1.0, 1.0)).collect();
        let mut out = vec![0.0; s.len()];
        self.basis.series_many(&self.series_coeffs, &ts, &mut out);
        for (o, &v) in out.iter_mut().zip(s) {
            if v >= 1.0 - COINCIDENT {
                *o = self.diagonal_exact;
            }
        }
        out
    }

    /// Kernel of a pair of points on the sphere.
    pub fn pair_value(&self, x1: &[f64], x2: &[f64]) -> f64 {
        self.point_value(dot(x1, x2) / self.d as f64)
    }

    pub fn tail_traces(&self, level_degree: usize) -> Result<TailTraces> {
        let k_max = self.max_degree();
        if level_degree > k_max {
            return Err(Error::DegreeOutOfRange { k: level_degree, max: k_max });
        }
        let head: f64 = self.series_coeffs[..=level_degree].iter().sum();
        let kappa_m = (level_degree + 1..=k_max)
            .map(|k| self.xi[k] * self.series_coeffs[k])
            .sum();
        Ok(TailTraces { level_degree, kappa_h: (self.diagonal_exact - head).max(0.0), kappa_m })
    }

    /// Text table with columns `k, B, xi, cumulative_trace`.
    pub fn spectrum_table(&self) -> String {
        let mut out = format!(
            "# d={} K={} activation={} diagonal_exact={:e}\nk,B,xi,cumulative_trace\n",
            self.d,
            self.max_degree(),
            self.activation_id,
            self.diagonal_exact
        );
        let mut cum = 0.0;
        for k in 0..=self.max_degree() {
            cum += self.series_coeffs[k];
            out.push_str(&format!("{k},{:e},{:e},{:e}\n", self.multiplicity[k], self.xi[k], cum));
        }
        out
    }

    /// `n x n` kernel matrix of the rows of `x`.
    pub fn kernel_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_rows(x, self.d)?;
        let gram = x * x.transpose();
        let d = self.d as f64;
        Ok(symmetric_from(x.nrows(), |i, j| self.point_value(gram[(i, j)] / d)))
    }

    /// `n1 x n2` matrix `H(x1_i, x2_j)`.
    pub fn cross_matrix(&self, x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_rows(x1, self.d)?;
        check_rows(x2, self.d)?;
        let gram = x1 * x2.transpose();
        let d = self.d as f64;
        Ok(parallel_matrix(x1.nrows(), x2.nrows(), |i, j| self.point_value(gram[(i, j)] / d)))
    }
}

/// Group average of a dot-product kernel over the `d` cyclic coordinate shifts.
#[derive(Debug, Clone)]
pub struct CyclicKernel {
    base: KernelSpectrum,
}

/// `(shift_i x)_j = x_{(j + i) mod d}`.
pub fn cyclic_shift(x: &[f64], i: usize) -> Vec<f64> {
    let d = x.len();
    (0..d).map(|j| x[(j + i) % d]).collect()
}

impl CyclicKernel {
    pub fn new(base: KernelSpectrum) -> Self {
        CyclicKernel { base }
    }

    pub fn base(&self) -> &KernelSpectrum {
        &self.base
    }

    pub fn group_size(&self) -> usize {
        self.base.d
    }

    /// `(1/d) sum_i h(<x1, shift_i x2>/d)`. The summands are added in sorted
    /// order, so shifting `x2` gives a bit-identical result.
    pub fn value(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        let d = self.base.d;
        if x1.len() != d || x2.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "points of length {} and {} for d = {d}",
                x1.len(),
                x2.len()
            )));
        }
        for (row, x) in [x1, x2].into_iter().enumerate() {
            check_norm(row, x, d)?;
        }
        Ok(self.value_unchecked(x1, x2))
    }

    fn value_unchecked(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let d = self.base.d;
        let df = d as f64;
        // sum_m x1[m] x2[(m + i) mod d], read as a window of x2 repeated twice.
        let doubled: Vec<f64> = x2.iter().chain(x2).copied().collect();
        let args: Vec<f64> = (0..d).map(|i| dot4(x1, &doubled[i..i + d]) / df).collect();
        let mut vals = self.base.point_values(&args);
        vals.sort_by(f64::total_cmp);
        vals.iter().sum::<f64>() / df
    }

    pub fn kernel_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_rows(x, self.base.d)?;
        let rows = row_vectors(x);
        Ok(symmetric_from(x.nrows(), |i, j| self.value_unchecked(&rows[i], &rows[j])))
    }

    pub fn cross_matrix(&self, x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_rows(x1, self.base.d)?;
        check_rows(x2, self.base.d)?;
        let (r1, r2) = (row_vectors(x1), row_vectors(x2));
        Ok(parallel_matrix(x1.nrows(), x2.nrows(), |i, j| self.value_unchecked(&r1[i], &r2[j])))
    }
}

/// Either kind of kernel, for code that runs the same pipeline on both.
#[derive(Debug, Clone)]
pub enum Kernel {
    Dot(KernelSpectrum),
    Cyclic(CyclicKernel),
}

impl Kernel {
    pub fn spectrum(&self) -> &KernelSpectrum {
        match self {
            Kernel::Dot(k) => k,
            Kernel::Cyclic(c) => c.base(),
        }
    }

    pub fn kernel_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Kernel::Dot(k) => k.kernel_matrix(x),
            Kernel::Cyclic(c) => c.kernel_matrix(x),
        }
    }

    pub fn cross_matrix(&self, x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Kernel::Dot(k) => k.cross_matrix(x1, x2),
            Kernel::Cyclic(c) => c.cross_matrix(x1, x2),
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Whether `m` is positive semidefinite up to `-tol * trace`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    min_eigenvalue(m) >= -tol * m.trace().abs()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dot product with four interleaved partial sums.
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn check_norm(row: usize, x: &[f64], d: usize) -> Result<()> {
    let norm = dot(x, x).sqrt();
    let expected = (d as f64).sqrt();
    if !((norm - expected).abs() <= ROW_NORM_TOL) {
        return Err(Error::RowNorm { row, norm, expected });
    }
    Ok(())
}

pub(crate) fn check_rows(x: &DMatrix<f64>, d: usize) -> Result<()> {
    if x.ncols() != d {
        return Err(Error::DimensionMismatch(format!("points have {} coordinates, expected {d}", x.ncols())));
    }
    for (row, r) in x.row_iter().enumerate() {
        let v: Vec<f64> = r.iter().copied().collect();
        check_norm(row, &v, d)?;
    }
    Ok(())
}

pub(crate) fn row_vectors(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Symmetric matrix from the upper triangle of `f`, computed in parallel.
pub(crate) fn symmetric_from(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| (i..n).map(|j| f(i, j)).collect()).collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            m[(i, i + off)] = v;
            m[(i + off, i)] = v;
        }
    }
    m
}

fn parallel_matrix(n1: usize, n2: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..n1).into_par_iter().map(|i| (0..n2).map(|j| f(i, j)).collect()).collect();
    DMatrix::from_fn(n1, n2, |i, j| rows[i][j])
}
