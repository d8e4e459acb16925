//! Gradient flow on the empirical risk, solved exactly through one symmetric
//! eigendecomposition `H = V diag(lambda) V^T` of the kernel matrix.
//!
//! With `r = V^T y`: `u(t) = V (1 - e^{-t lambda/n}) r`, train error
//! `(1/n) sum e^{-2 t lambda/n} r^2`, and the fitted function
//! `f_t(x) = h(x)^T a(t)` with `a(t) = V phi(lambda) r`,
//! `phi(lambda) = (1 - e^{-t lambda/n})/lambda`, `phi(0) = t/n`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernels::{symmetric_from, KernelSpectrum, TailTraces};
use crate::oracleflow::MONOTONE_SLACK;
use crate::specfun::dim_spherical_harmonics_f64;
use crate::spheredata::TargetFunction;

/// Plateau-window half width used to flag degenerate exponents.
pub const WINDOW_DELTA: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct FlowSolution {
    eigenvalues: DVector<f64>,
    rotated_response: DVector<f64>,
    eigenbasis: DMatrix<f64>,
}

/// Eigendecomposes `h` and rotates `y` into its eigenbasis.
pub fn solve_flow(h: &DMatrix<f64>, y: &DVector<f64>) -> Result<FlowSolution> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n || y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "kernel matrix {}x{} with {} responses",
            h.nrows(),
            h.ncols(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) || h.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite kernel matrix or responses".into()));
    }
    let scale = h.amax().max(f64::MIN_POSITIVE);
    let asym = (h - h.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::InvalidInput(format!("kernel matrix asymmetric by {asym:e}")));
    }
    let trace = h.trace().abs();
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut eigenvalues = eig.eigenvalues;
    for v in eigenvalues.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-10 * trace {
                return Err(Error::Numerical(format!(
                    "kernel matrix has eigenvalue {v:e} (trace {trace:e})"
                )));
            }
            *v = 0.0;
        }
    }
    let rotated_response = eig.eigenvectors.tr_mul(y);
    Ok(FlowSolution { eigenvalues, rotated_response, eigenbasis: eig.eigenvectors })
}

#[inline]
fn phi(lambda: f64, t: f64, n: f64) -> f64 {
    if lambda == 0.0 {
        t / n
    } else {
        -(-t * lambda / n).exp_m1() / lambda
    }
}

impl FlowSolution {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn rotated_response(&self) -> &DVector<f64> {
        &self.rotated_response
    }

    pub fn eigenbasis(&self) -> &DMatrix<f64> {
        &self.eigenbasis
    }

    /// `(1/n) ‖u(t) - y‖^2`.
    pub fn train_error(&self, t: f64) -> f64 {
        let n = self.n() as f64;
        self.eigenvalues
            .iter()
            .zip(self.rotated_response.iter())
            .map(|(l, r)| (-2.0 * t * l / n).exp() * r * r)
            .sum::<f64>()
            / n
    }

    /// Fitted values on the training set.
    pub fn fitted(&self, t: f64) -> DVector<f64> {
        let n = self.n() as f64;
        let w = DVector::from_iterator(
            self.n(),
            self.eigenvalues
                .iter()
                .zip(self.rotated_response.iter())
                .map(|(l, r)| -(-t * l / n).exp_m1() * r),
        );
        &self.eigenbasis * w
    }

    /// `a(t)` with `f_t(x) = sum_i a_i H(x, x_i)`.
    pub fn coefficients(&self, t: f64) -> DVector<f64> {
        let n = self.n() as f64;
        let w = DVector::from_iterator(
            self.n(),
            self.eigenvalues
                .iter()
                .zip(self.rotated_response.iter())
                .map(|(&l, r)| phi(l, t, n) * r),
        );
        &self.eigenbasis * w
    }

    /// Predictions `cross * a(t)` for a cross-kernel matrix `H(x_test, x_train)`.
    pub fn predict(&self, cross: &DMatrix<f64>, t: f64) -> Result<DVector<f64>> {
        if cross.ncols() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "cross matrix has {} columns, training set has {}",
                cross.ncols(),
                self.n()
            )));
        }
        Ok(cross * self.coefficients(t))
    }
}

/// Mean and standard error of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// `mean (f(x) - f_t(x))^2 + sigma_eps^2` over the test points.
pub fn test_error_mc(
    sol: &FlowSolution,
    cross: &DMatrix<f64>,
    f_test: &DVector<f64>,
    sigma_eps2: f64,
    t: f64,
) -> Result<McEstimate> {
    let m = f_test.len();
    if m == 0 {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    if cross.nrows() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} test targets for {} cross-matrix rows",
            m,
            cross.nrows()
        )));
    }
    let pred = sol.predict(cross, t)?;
    Ok(mc_from_predictions(&pred, f_test, sigma_eps2))
}

pub(crate) fn mc_from_predictions(pred: &DVector<f64>, f_test: &DVector<f64>, sigma_eps2: f64) -> McEstimate {
    let m = f_test.len() as f64;
    let sq: Vec<f64> = pred.iter().zip(f_test.iter()).map(|(p, f)| (f - p).powi(2)).collect();
    let mean = sq.iter().sum::<f64>() / m;
    let var = if sq.len() > 1 {
        sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    McEstimate { mean: mean + sigma_eps2, std_err: (var / m).sqrt() }
}

/// `E_i = E_x[f(x) H(x, x_i)] = sum_k xi^H_k xi^f_k B(d,k) Q_k(sqrt(d) x_{i,1})` for ridge targets.
pub fn build_e_vector(spec: &KernelSpectrum, target: &TargetFunction, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let d = spec.d();
    if x.ncols() != d {
        return Err(Error::DimensionMismatch(format!("points have {} coordinates, kernel has d = {d}", x.ncols())));
    }
    let k_max = spec.max_degree();
    let xi_f = target.ridge_coefficients(d, k_max)?;
    let coeffs: Vec<f64> = (0..=k_max)
        .map(|k| Ok(spec.xi()[k] * xi_f[k] * dim_spherical_harmonics_f64(d, k)?))
        .collect::<Result<_>>()?;
    let sqrt_d = (d as f64).sqrt();
    Ok(DVector::from_iterator(
        x.nrows(),
        x.column(0).iter().map(|&x1| spec.basis().series(&coeffs, (sqrt_d * x1).clamp(-(d as f64), d as f64))),
    ))
}

/// `M_ij = E_x[H(x, x_i) H(x, x_j)] = sum_k xi_k^2 B(d,k) Q_k(<x_i, x_j>)`, the
/// diagonal also carrying the squared-kernel tail beyond the truncation.
pub fn build_m_matrix(spec: &KernelSpectrum, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    crate::kernels::check_rows(x, spec.d())?;
    let coeffs: Vec<f64> = spec.xi().iter().zip(spec.multiplicity()).map(|(x, b)| x * x * b).collect();
    let diag: f64 = coeffs.iter().sum::<f64>() + spec.squared_tail();
    let gram = x * x.transpose();
    let d = spec.d() as f64;
    Ok(symmetric_from(x.nrows(), |i, j| {
        if i == j {
            diag
        } else {
            spec.basis().series(&coeffs, gram[(i, j)].clamp(-d, d))
        }
    }))
}

/// `‖f‖^2 - 2 a^T E + a^T M a + sigma_eps^2` with `a = a(t)`.
pub fn test_error_analytic(
    sol: &FlowSolution,
    e: &DVector<f64>,
    m: &DMatrix<f64>,
    target_norm2: f64,
    sigma_eps2: f64,
    t: f64,
) -> Result<f64> {
    let n = sol.n();
    if e.len() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "E has length {}, M is {}x{}, flow has n = {n}",
            e.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    let a = sol.coefficients(t);
    let ma = m * &a;
    Ok(target_norm2 - 2.0 * a.dot(e) + a.dot(&ma) + sigma_eps2)
}

/// What the train error does in a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainPrediction {
    /// Train error tracks the test plateau (`t kappa_H / n` small).
    TracksTest(f64),
    /// Train error has been driven to zero (`t kappa_H / n` large).
    Zero,
    /// Between the two regimes.
    Transition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauPrediction {
    /// Time exponent window `floor(log t / log d)`.
    pub j: usize,
    /// Sample exponent window `floor(log n / log d + alpha)`.
    pub s: usize,
    pub alpha: usize,
    pub predicted_test: f64,
    pub predicted_train: TrainPrediction,
    /// A window exponent lies within `WINDOW_DELTA` of an integer.
    pub degenerate: bool,
}

/// Predicted plateaus at time `t` with `n` samples for a group of degeneracy `alpha`.
pub fn theoretical_plateaus(
    spec: &KernelSpectrum,
    norms: &[f64],
    sigma_eps2: f64,
    t: f64,
    n: f64,
    alpha: usize,
) -> Result<PlateauPrediction> {
    if !(t > 1.0 && n > 1.0) {
        return Err(Error::InvalidInput(format!("plateau windows need t > 1 and n > 1 (t = {t}, n = {n})")));
    }
    let ld = (spec.d() as f64).ln();
    let et = t.ln() / ld;
    let es = n.ln() / ld + alpha as f64;
    let near_int = |x: f64| (x - x.round()).abs() < WINDOW_DELTA;
    let (j, s) = (et.floor() as usize, es.floor() as usize);
    let level = j.min(s);
    let predicted_test = norms.iter().skip(level + 1).sum::<f64>() + sigma_eps2;
    let TailTraces { kappa_h, .. } = spec.tail_traces(s.min(spec.max_degree()))?;
    let ratio = t * kappa_h / (n * (spec.d() as f64).powi(alpha as i32));
    let predicted_train = if ratio < 0.1 {
        TrainPrediction::TracksTest(predicted_test)
    } else if ratio > 10.0 {
        TrainPrediction::Zero
    } else {
        TrainPrediction::Transition
    };
    Ok(PlateauPrediction { j, s, alpha, predicted_test, predicted_train, degenerate: near_int(et) || near_int(es) })
}

/// Train and test error curves over trials, with the oracle overlay.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurves {
    pub times: Vec<f64>,
    /// `train[trial][i]` at `times[i]`.
    pub train: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
    pub oracle: Vec<f64>,
    pub plateau: Vec<f64>,
    pub metadata: Vec<(String, String)>,
}

fn column_stats(rows: &[Vec<f64>], len: usize) -> (Vec<f64>, Option<Vec<f64>>) {
    let k = rows.len() as f64;
    let mean: Vec<f64> = (0..len).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / k).collect();
    if rows.len() < 2 {
        return (mean, None);
    }
    let std = (0..len)
        .map(|i| (rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / (k - 1.0)).sqrt())
        .collect();
    (mean, Some(std))
}

impl ErrorCurves {
    pub fn trials(&self) -> usize {
        self.train.len()
    }

    /// Mean train error and its sample standard deviation (absent for one trial).
    pub fn train_stats(&self) -> (Vec<f64>, Option<Vec<f64>>) {
        column_stats(&self.train, self.times.len())
    }

    pub fn test_stats(&self) -> (Vec<f64>, Option<Vec<f64>>) {
        column_stats(&self.test, self.times.len())
    }

    /// Checks that every train curve is non-increasing.
    pub fn check_train_monotone(&self) -> Result<()> {
        for (trial, curve) in self.train.iter().enumerate() {
            if let Some(w) = curve.windows(2).find(|w| w[1] > w[0] + MONOTONE_SLACK) {
                return Err(Error::Numerical(format!(
                    "train error of trial {trial} increased from {} to {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::kernels::build_dot_kernel;
    use crate::spheredata::{sample_sphere, stream_rng, Dataset};

    #[test]
    fn identity_kernel() {
        let h = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let sol = solve_flow(&h, &y).unwrap();
        for t in [0.0, 0.7, 5.0] {
            let u = sol.fitted(t);
            let expected = &y * -(-t / 3.0f64).exp_m1();
            assert!((u - expected).amax() < 1e-14);
        }
        assert!((sol.train_error(0.0) - 14.0 / 3.0).abs() < 1e-14);
        assert!(sol.train_error(1e4) < 1e-12);
        assert!((sol.fitted(1e4) - &y).amax() < 1e-12);
        assert!((sol.rotated_response().norm_squared() - 14.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let mut h = DMatrix::identity(2, 2);
        h[(0, 1)] = 0.1;
        let y = DVector::from_vec(vec![1.0, 1.0]);
        assert!(solve_flow(&h, &y).is_err());
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        assert!(matches!(solve_flow(&neg, &y), Err(Error::Numerical(_))));
        assert!(solve_flow(&DMatrix::identity(3, 3), &y).is_err());
    }

    fn small_problem(n: usize, d: usize, seed: u64) -> (KernelSpectrum, Dataset, DMatrix<f64>, FlowSolution) {
        let spec = build_dot_kernel(&Activation::relu(), d, 20).unwrap();
        let ds = Dataset::generate(&TargetFunction::staircase(), n, d, 0.0, seed, 0).unwrap();
        let h = spec.kernel_matrix(&ds.x).unwrap();
        let sol = solve_flow(&h, &ds.y).unwrap();
        (spec, ds, h, sol)
    }

    #[test]
    fn reconstruction_and_energy() {
        let (_, ds, h, sol) = small_problem(40, 10, 1);
        let v = sol.eigenbasis();
        let rebuilt = v * DMatrix::from_diagonal(sol.eigenvalues()) * v.transpose();
        assert!((rebuilt - &h).amax() <= 1e-8 * h.amax());
        assert!((sol.rotated_response().norm_squared() - ds.y.norm_squared()).abs() < 1e-10);
        assert_eq!(sol.train_error(0.0) * 40.0, sol.rotated_response().norm_squared());
    }

    #[test]
    fn phi_form_matches_direct_inverse() {
        let (_, ds, h, sol) = small_problem(25, 8, 2);
        let n = 25.0;
        for t in [0.5, 30.0, 2000.0] {
            let hinv = h.clone().try_inverse().unwrap();
            let direct = &hinv * (&ds.y - sol.eigenbasis() * DMatrix::from_diagonal(&sol.eigenvalues().map(|l| (-t * l / n).exp())) * sol.eigenbasis().transpose() * &ds.y);
            let a = sol.coefficients(t);
            assert!((&a - &direct).amax() <= 1e-8 * direct.amax(), "t = {t}");
        }
    }

    #[test]
    fn predictions() {
        let (spec, ds, h, sol) = small_problem(30, 9, 3);
        let xt = sample_sphere(6, 9, &mut stream_rng(3, 99)).unwrap();
        let cross = spec.cross_matrix(&xt, &ds.x).unwrap();
        assert!(sol.predict(&cross, 0.0).unwrap().amax() == 0.0);
        // Interpolation at late time.
        let late = sol.predict(&h, 1e9).unwrap();
        assert!((late - &ds.y).amax() < 1e-6);
        // First Euler step: (t/n) H_cross y.
        let t = 1e-4;
        let euler = &cross * &ds.y * (t / 30.0);
        let p = sol.predict(&cross, t).unwrap();
        // Second-order term is O(t lambda_max / n) relative to the first.
        let bound = 10.0 * t * sol.eigenvalues().max() / 30.0 * euler.amax();
        assert!((p - &euler).amax() < bound);
    }

    #[test]
    fn train_error_is_monotone() {
        let (_, _, _, sol) = small_problem(50, 10, 4);
        let grid = crate::oracleflow::log_time_grid(1e-2, 1e6, 10).unwrap();
        let errs: Vec<f64> = grid.iter().map(|&t| sol.train_error(t)).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK));
    }

    #[test]
    fn zero_target_has_zero_error() {
        let spec = build_dot_kernel(&Activation::relu(), 8, 10).unwrap();
        let ds = Dataset::generate(&TargetFunction::zero(), 10, 8, 0.0, 0, 0).unwrap();
        let sol = solve_flow(&spec.kernel_matrix(&ds.x).unwrap(), &ds.y).unwrap();
        let xt = sample_sphere(5, 8, &mut stream_rng(0, 1)).unwrap();
        let cross = spec.cross_matrix(&xt, &ds.x).unwrap();
        let f = DVector::zeros(5);
        for t in [0.0, 1.0, 100.0] {
            assert_eq!(test_error_mc(&sol, &cross, &f, 0.0, t).unwrap().mean, 0.0);
        }
        assert!(test_error_mc(&sol, &DMatrix::zeros(0, 10), &DVector::zeros(0), 0.0, 1.0).is_err());
        let e = build_e_vector(&spec, &TargetFunction::zero(), &ds.x).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn e_vector_matches_monte_carlo() {
        // Linear activation, f = x_1: E_i = E_x[x_1 <x, x_i>/d] = x_{i,1}/d.
        let d = 12;
        let spec = build_dot_kernel(&Activation::linear(), d, 6).unwrap();
        let f = TargetFunction::RidgeHermite(vec![0.0, 1.0]);
        let x = sample_sphere(4, d, &mut stream_rng(5, 0)).unwrap();
        let e = build_e_vector(&spec, &f, &x).unwrap();
        for i in 0..4 {
            assert!((e[i] - x[(i, 0)] / d as f64).abs() < 1e-14);
        }
        let n = 1_000_000;
        let z = sample_sphere(n, d, &mut stream_rng(5, 1)).unwrap();
        let proj = &z * x.row(0).transpose() / d as f64;
        let vals: Vec<f64> = z.column(0).iter().zip(proj.iter()).map(|(a, b)| a * b).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((mean - e[0]).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn m_matrix_matches_monte_carlo_for_linear_kernel() {
        // M_ij = E_x[<x,x_i><x,x_j>]/d^2 = <x_i,x_j>/d^2.
        let d = 10;
        let spec = build_dot_kernel(&Activation::linear(), d, 6).unwrap();
        let x = sample_sphere(3, d, &mut stream_rng(6, 0)).unwrap();
        let m = build_m_matrix(&spec, &x).unwrap();
        let exact = &x * x.transpose() / (d * d) as f64;
        assert!((&m - &exact).amax() < 1e-14);
        let n = 400_000;
        let z = sample_sphere(n, d, &mut stream_rng(6, 1)).unwrap();
        let hz = &z * x.transpose() / d as f64;
        let vals: Vec<f64> = (0..n).map(|r| hz[(r, 0)] * hz[(r, 1)]).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((mean - m[(0, 1)]).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn analytic_test_error_at_time_zero() {
        let (spec, ds, _, sol) = small_problem(20, 10, 7);
        let e = build_e_vector(&spec, &ds.target, &ds.x).unwrap();
        let m = build_m_matrix(&spec, &ds.x).unwrap();
        let norm2 = ds.target.norm2(10).unwrap();
        assert_eq!(test_error_analytic(&sol, &e, &m, norm2, 0.3, 0.0).unwrap(), norm2 + 0.3);
        assert!(test_error_analytic(&sol, &e.rows(0, 5).into_owned(), &m, norm2, 0.0, 1.0).is_err());
        assert!(build_e_vector(&spec, &TargetFunction::CyclicCubic, &ds.x).is_err());
    }

    #[test]
    fn plateau_windows() {
        let d = 100usize;
        let spec = build_dot_kernel(&Activation::relu(), d, 30).unwrap();
        let norms = TargetFunction::staircase().degree_norms(d, 30).unwrap();
        let df = d as f64;
        let p = theoretical_plateaus(&spec, &norms, 0.0, df.powf(1.5), df.powf(2.5), 0).unwrap();
        assert_eq!((p.j, p.s), (1, 2));
        assert!((p.predicted_test - norms[2..].iter().sum::<f64>()).abs() < 1e-15);
        assert!(!p.degenerate);
        let c = theoretical_plateaus(&spec, &norms, 0.0, df.powf(1.5), df.powf(2.5), 1).unwrap();
        assert_eq!(c.s, 3);
        assert!(theoretical_plateaus(&spec, &norms, 0.0, df.powf(0.05), df.powf(2.5), 0).unwrap().degenerate);
        assert!(theoretical_plateaus(&spec, &norms, 0.0, 0.5, 10.0, 0).is_err());
        let late = theoretical_plateaus(&spec, &norms, 0.0, df.powf(3.5), df.powf(1.5), 0).unwrap();
        assert_eq!(late.predicted_train, TrainPrediction::Zero);
    }

    #[test]
    fn curve_statistics() {
        let c = ErrorCurves {
            times: vec![1.0, 2.0],
            train: vec![vec![1.0, 0.5], vec![3.0, 0.5]],
            test: vec![vec![2.0, 2.0], vec![2.0, 2.0]],
            oracle: vec![1.0, 1.0],
            plateau: vec![1.0, 1.0],
            metadata: vec![],
        };
        let (mean, std) = c.train_stats();
        assert_eq!(mean, vec![2.0, 0.5]);
        assert_eq!(std.unwrap(), vec![2f64.sqrt(), 0.0]);
        assert!(c.check_train_monotone().is_ok());
        let single = ErrorCurves { train: vec![vec![1.0, 2.0]], ..c };
        assert!(single.train_stats().1.is_none());
        assert!(single.check_train_monotone().is_err());
    }
}
