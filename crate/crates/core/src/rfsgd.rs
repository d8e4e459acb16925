//! Minibatch SGD with heavy-ball momentum on the second layer of a random
//! features model `f(x; a) = sum_i a_i phi_i(x) / sqrt(N)`, with
//! `phi_i(x) = sigma(<w_i, x>)` or its average over cyclic shifts of `x`.
//!
//! The loss is half the batch mean squared error, so in function space one
//! step moves `f` by `-(eta/b) sum_batch H_N(., x_i)(f(x_i) - y_i)` with
//! `H_N = Phi Phi^T / N`. A step therefore advances gradient-flow time by
//! `eta / (1 - beta)` once the momentum has built up.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::kernels::check_rows;
use crate::spheredata::{sample_sphere, stream_rng, TargetFunction};

/// Tolerance on the unit norm of feature directions.
pub const DIRECTION_NORM_TOL: f64 = 1e-10;
/// Train error above this multiple of its initial value aborts a run.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Debug, Clone)]
pub struct RFModel {
    /// `N x d`, rows on the unit sphere.
    w: DMatrix<f64>,
    activation: Activation,
    cyclic: bool,
}

/// Row-major `rows x cols` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `Phi a / sqrt(N)`.
    pub fn predict(&self, a: &[f64]) -> Vec<f64> {
        let scale = 1.0 / (self.cols as f64).sqrt();
        (0..self.rows).map(|i| dot(self.row(i), a) * scale).collect()
    }

    /// `Phi Phi^T / N`.
    pub fn gram(&self) -> DMatrix<f64> {
        let phi = DMatrix::from_row_slice(self.rows, self.cols, &self.data);
        &phi * phi.transpose() / self.cols as f64
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl RFModel {
    /// `n_features` directions drawn uniformly on the unit sphere.
    pub fn sample<R: Rng + ?Sized>(
        n_features: usize,
        d: usize,
        activation: Activation,
        cyclic: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidInput("need at least one feature".into()));
        }
        let w = sample_sphere(n_features, d, rng)? / (d as f64).sqrt();
        Self::from_directions(w, activation, cyclic)
    }

    pub fn from_directions(w: DMatrix<f64>, activation: Activation, cyclic: bool) -> Result<Self> {
        for (row, r) in w.row_iter().enumerate() {
            let norm = r.norm();
            if !((norm - 1.0).abs() <= DIRECTION_NORM_TOL) {
                return Err(Error::RowNorm { row, norm, expected: 1.0 });
            }
        }
        Ok(RFModel { w, activation, cyclic })
    }

    pub fn n_features(&self) -> usize {
        self.w.nrows()
    }

    pub fn d(&self) -> usize {
        self.w.ncols()
    }

    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn directions(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Features of a single point.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        let fm = self.feature_matrix(&DMatrix::from_row_slice(1, x.len(), x))?;
        Ok(fm.data)
    }

    /// Features of every row of `x` (points on `S^{d-1}(sqrt(d))`).
    pub fn feature_matrix(&self, x: &DMatrix<f64>) -> Result<FeatureMatrix> {
        check_rows(x, self.d())?;
        Ok(self.feature_matrix_unchecked(x))
    }

    fn feature_matrix_unchecked(&self, x: &DMatrix<f64>) -> FeatureMatrix {
        let (rows, cols) = (x.nrows(), self.n_features());
        if !self.cyclic {
            // Column j of W X^T holds the features of point j, i.e. a row-major layout.
            let mut z = &self.w * x.transpose();
            z.iter_mut().for_each(|v| *v = self.activation.eval(*v));
            return FeatureMatrix { rows, cols, data: z.as_slice().to_vec() };
        }
        let d = self.d();
        let mut data = Vec::with_capacity(rows * cols);
        let mut shifted = vec![0.0; d];
        let mut vals = vec![0.0; d];
        let w_rows: Vec<Vec<f64>> = self.w.row_iter().map(|r| r.iter().copied().collect()).collect();
        for r in x.row_iter() {
            let xr: Vec<f64> = r.iter().copied().collect();
            for w in &w_rows {
                for (g, val) in vals.iter_mut().enumerate() {
                    for (m, s) in shifted.iter_mut().enumerate() {
                        *s = xr[(m + g) % d];
                    }
                    *val = self.activation.eval(dot(w, &shifted));
                }
                // Sorted summation makes shifted inputs give identical bits.
                vals.sort_by(f64::total_cmp);
                data.push(vals.iter().sum::<f64>() / d as f64);
            }
        }
        FeatureMatrix { rows, cols, data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub steps: usize,
    /// Iterations after which errors are recorded (sorted, `<= steps`).
    pub eval_grid: Vec<usize>,
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidInput(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be >= 1".into()));
        }
        if self.eval_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("eval grid must be strictly increasing".into()));
        }
        if self.eval_grid.last().is_some_and(|&k| k > self.steps) {
            return Err(Error::InvalidInput("eval grid extends past the last step".into()));
        }
        Ok(())
    }

    /// Gradient-flow time reached after `iteration` steps.
    pub fn t_eff(&self, iteration: usize) -> f64 {
        iteration as f64 * self.learning_rate / (1.0 - self.momentum)
    }

    /// Log-spaced integer grid from 1 to `steps` (plus 0), `per_decade` points per decade.
    pub fn log_eval_grid(steps: usize, per_decade: usize) -> Vec<usize> {
        let mut grid = vec![0];
        if steps == 0 {
            return grid;
        }
        let decades = (steps as f64).log10();
        let points = (decades * per_decade as f64).ceil().max(1.0) as usize;
        for i in 0..=points {
            let k = 10f64.powf(decades * i as f64 / points as f64).round() as usize;
            if k > *grid.last().unwrap() && k <= steps {
                grid.push(k);
            }
        }
        if *grid.last().unwrap() != steps {
            grid.push(steps);
        }
        grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub iteration: usize,
    pub t_eff: f64,
    /// Absent in the oracle world, which has no training set.
    pub train_error: Option<f64>,
    pub test_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    /// Final second-layer weights.
    pub weights: Vec<f64>,
}

struct Momentum {
    a: Vec<f64>,
    v: Vec<f64>,
    g: Vec<f64>,
}

impl Momentum {
    fn new(n: usize) -> Self {
        Momentum { a: vec![0.0; n], v: vec![0.0; n], g: vec![0.0; n] }
    }

    /// One step on the batch given by feature rows and responses.
    fn step<'a>(&mut self, rows: impl Iterator<Item = &'a [f64]> + Clone, y: &[f64], eta: f64, beta: f64) {
        let n_feat = self.a.len();
        let scale = 1.0 / (n_feat as f64).sqrt();
        let b = y.len() as f64;
        self.g.iter_mut().for_each(|g| *g = 0.0);
        for (row, &yi) in rows.zip(y) {
            let r = (dot(row, &self.a) * scale - yi) * scale / b;
            for (g, &phi) in self.g.iter_mut().zip(row) {
                *g += r * phi;
            }
        }
        for ((a, v), g) in self.a.iter_mut().zip(self.v.iter_mut()).zip(&self.g) {
            *v = beta * *v + g;
            *a -= eta * *v;
        }
    }
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

fn check_sizes(feats: &FeatureMatrix, y: &[f64], what: &str) -> Result<()> {
    if feats.rows() != y.len() || feats.rows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {} feature rows for {} responses",
            feats.rows(),
            y.len()
        )));
    }
    Ok(())
}

/// Multi-pass SGD on a fixed training set, with batches drawn from shuffled
/// epochs. Errors are computed on the full train set and on the test set
/// (`f_test` noiseless, `sigma_eps2` added).
pub fn sgd_empirical(
    train: &FeatureMatrix,
    y_train: &[f64],
    test: &FeatureMatrix,
    f_test: &[f64],
    sigma_eps2: f64,
    cfg: &SgdConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_sizes(train, y_train, "train")?;
    check_sizes(test, f_test, "test")?;
    if train.cols() != test.cols() {
        return Err(Error::DimensionMismatch("train and test features differ in width".into()));
    }
    let n = train.rows();
    let b = cfg.batch_size.min(n);
    let mut rng = stream_rng(cfg.seed, 0);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut state = Momentum::new(train.cols());
    let initial = mse(&train.predict(&state.a), y_train);
    let mut records = Vec::with_capacity(cfg.eval_grid.len());
    let mut next_eval = cfg.eval_grid.iter().peekable();
    let mut batch_y = Vec::with_capacity(b);
    let mut batch_idx = Vec::with_capacity(b);
    for it in 0..=cfg.steps {
        if next_eval.peek() == Some(&&it) {
            next_eval.next();
            let train_error = mse(&train.predict(&state.a), y_train);
            if !train_error.is_finite() || train_error > DIVERGENCE_FACTOR * initial.max(f64::MIN_POSITIVE) {
                return Err(Error::Diverged { iteration: it, error: train_error, initial });
            }
            let test_error = mse(&test.predict(&state.a), f_test) + sigma_eps2;
            records.push(Record { iteration: it, t_eff: cfg.t_eff(it), train_error: Some(train_error), test_error });
        }
        if it == cfg.steps {
            break;
        }
        if cursor >= n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + b).min(n);
        batch_idx.clear();
        batch_idx.extend_from_slice(&order[cursor..end]);
        cursor = end;
        batch_y.clear();
        batch_y.extend(batch_idx.iter().map(|&i| y_train[i]));
        state.step(batch_idx.iter().map(|&i| train.row(i)), &batch_y, cfg.learning_rate, cfg.momentum);
        if state.a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: it + 1, error: f64::INFINITY, initial });
        }
    }
    Ok(Trajectory { records, weights: state.a })
}

/// One-pass SGD with a fresh batch from the population at every step. Only
/// the test error is recorded.
pub fn sgd_oracle(
    model: &RFModel,
    target: &TargetFunction,
    sigma_eps2: f64,
    test: &FeatureMatrix,
    f_test: &[f64],
    cfg: &SgdConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_sizes(test, f_test, "test")?;
    target.validate(model.d())?;
    if !(sigma_eps2 >= 0.0 && sigma_eps2.is_finite()) {
        return Err(Error::InvalidInput(format!("noise variance {sigma_eps2} must be >= 0")));
    }
    let d = model.d();
    let b = cfg.batch_size;
    // Batches come from a stream never used for dataset generation.
    let mut rng = stream_rng(cfg.seed, u64::MAX);
    let mut state = Momentum::new(model.n_features());
    let initial = mse(&test.predict(&state.a), f_test) + sigma_eps2;
    let mut records = Vec::with_capacity(cfg.eval_grid.len());
    let mut next_eval = cfg.eval_grid.iter().peekable();
    let noise_sd = sigma_eps2.sqrt();
    for it in 0..=cfg.steps {
        if next_eval.peek() == Some(&&it) {
            next_eval.next();
            let test_error = mse(&test.predict(&state.a), f_test) + sigma_eps2;
            if !test_error.is_finite() || test_error > DIVERGENCE_FACTOR * initial.max(f64::MIN_POSITIVE) {
                return Err(Error::Diverged { iteration: it, error: test_error, initial });
            }
            records.push(Record { iteration: it, t_eff: cfg.t_eff(it), train_error: None, test_error });
        }
        if it == cfg.steps {
            break;
        }
        let xb = sample_sphere(b, d, &mut rng)?;
        let mut yb = target.eval(&xb)?;
        if noise_sd > 0.0 {
            for v in yb.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v += noise_sd * e;
            }
        }
        let feats = model.feature_matrix_unchecked(&xb);
        state.step((0..b).map(|i| feats.row(i)), yb.as_slice(), cfg.learning_rate, cfg.momentum);
        if state.a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: it + 1, error: f64::INFINITY, initial });
        }
    }
    Ok(Trajectory { records, weights: state.a })
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration, with the
/// relative residual `‖M v - lambda v‖ / lambda` of the final iterate.
pub fn power_iteration(m: &DMatrix<f64>, iterations: usize) -> Result<(f64, f64)> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!("power iteration on a {}x{} matrix", m.nrows(), m.ncols())));
    }
    let mut rng = stream_rng(0x5eed, 0);
    let mut v = nalgebra::DVector::from_fn(n, |_, _| 1.0 + 0.1 * rng.random::<f64>());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let mv = m * &v;
        lambda = v.dot(&mv);
        let norm = mv.norm();
        if norm == 0.0 {
            return Ok((0.0, 0.0));
        }
        v = mv / norm;
    }
    let mv = m * &v;
    lambda = lambda.max(v.dot(&mv));
    let residual = (mv - &v * lambda).norm() / lambda.abs().max(f64::MIN_POSITIVE);
    Ok((lambda, residual))
}

/// Default step-size constant: `eta = c / lambda_max(H / n)`.
pub const STEP_SIZE_CONSTANT: f64 = 0.5;

/// Step size `c / lambda_max` for the normalized matrix `h_bar` (100 power steps).
pub fn default_step_size(h_bar: &DMatrix<f64>, c: f64) -> Result<f64> {
    let (lambda, residual) = power_iteration(h_bar, 100)?;
    if !(residual <= 1e-3) {
        return Err(Error::Numerical(format!("power iteration did not converge (residual {residual:e})")));
    }
    if !(lambda > 0.0) {
        return Err(Error::Numerical(format!("non-positive top eigenvalue {lambda:e}")));
    }
    Ok(c / lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_dot_kernel, cyclic_shift};
    use crate::spheredata::Dataset;
    use nalgebra::DVector;

    fn model(n_feat: usize, d: usize, cyclic: bool, seed: u64) -> RFModel {
        RFModel::sample(n_feat, d, Activation::relu(), cyclic, &mut stream_rng(seed, 0)).unwrap()
    }

    #[test]
    fn directions_are_unit() {
        let m = model(50, 12, false, 1);
        assert!(m.directions().row_iter().all(|r| (r.norm() - 1.0).abs() < 1e-12));
        let bad = DMatrix::from_element(2, 3, 1.0);
        assert!(RFModel::from_directions(bad, Activation::relu(), false).is_err());
    }

    #[test]
    fn identity_features() {
        let m = RFModel::sample(5, 7, Activation::linear(), false, &mut stream_rng(2, 0)).unwrap();
        let x: Vec<f64> = m.directions().row(0).iter().map(|v| v * 7f64.sqrt()).collect();
        let f = m.features(&x).unwrap();
        assert!((f[0] - 7f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn cyclic_features_are_exactly_invariant() {
        let m = model(20, 9, true, 3);
        let x = sample_sphere(1, 9, &mut stream_rng(3, 1)).unwrap();
        let row: Vec<f64> = x.row(0).iter().copied().collect();
        let base = m.features(&row).unwrap();
        for g in 1..9 {
            assert_eq!(m.features(&cyclic_shift(&row, g)).unwrap(), base);
        }
    }

    #[test]
    fn feature_products_estimate_the_kernel() {
        let d = 10;
        let n_feat = 100_000;
        let m = model(n_feat, d, false, 4);
        let x = sample_sphere(2, d, &mut stream_rng(4, 1)).unwrap();
        let f = m.feature_matrix(&x).unwrap();
        let prods: Vec<f64> = f.row(0).iter().zip(f.row(1)).map(|(a, b)| a * b).collect();
        let mean = prods.iter().sum::<f64>() / n_feat as f64;
        let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n_feat as f64 - 1.0);
        let spec = build_dot_kernel(&Activation::relu(), d, 30).unwrap();
        let s = x.row(0).dot(&x.row(1)) / d as f64;
        assert!((mean - spec.kernel_value(s)).abs() < 3.0 * (var / n_feat as f64).sqrt());
    }

    fn setup(n: usize, d: usize, n_feat: usize) -> (RFModel, Dataset, FeatureMatrix, FeatureMatrix, Vec<f64>) {
        let m = model(n_feat, d, false, 5);
        let ds = Dataset::generate(&TargetFunction::staircase(), n, d, 0.0, 5, 0).unwrap();
        let xt = sample_sphere(50, d, &mut stream_rng(5, 1)).unwrap();
        let ft: Vec<f64> = TargetFunction::staircase().eval(&xt).unwrap().iter().copied().collect();
        let train = m.feature_matrix(&ds.x).unwrap();
        let test = m.feature_matrix(&xt).unwrap();
        (m, ds, train, test, ft)
    }

    #[test]
    fn zero_learning_rate_keeps_initial_errors() {
        let (m, ds, train, test, ft) = setup(20, 8, 200);
        let cfg = SgdConfig { learning_rate: 0.0, batch_size: 5, momentum: 0.9, steps: 30, eval_grid: vec![0, 10, 30], seed: 1 };
        let y: Vec<f64> = ds.y.iter().copied().collect();
        let tr = sgd_empirical(&train, &y, &test, &ft, 0.0, &cfg).unwrap();
        let init = ds.y.norm_squared() / 20.0;
        assert!(tr.records.iter().all(|r| r.train_error == Some(init)));
        assert!(tr.weights.iter().all(|&a| a == 0.0));
        let or = sgd_oracle(&m, &TargetFunction::staircase(), 0.1, &test, &ft, &cfg).unwrap();
        let f2 = ft.iter().map(|v| v * v).sum::<f64>() / 50.0 + 0.1;
        assert!(or.records.iter().all(|r| r.test_error == f2 && r.train_error.is_none()));
    }

    #[test]
    fn full_batch_without_momentum_is_gradient_descent() {
        let n = 20;
        let (_, ds, train, test, ft) = setup(n, 6, 300);
        let eta = 0.7;
        let steps = 40;
        let cfg = SgdConfig { learning_rate: eta, batch_size: n, momentum: 0.0, steps, eval_grid: (0..=steps).collect(), seed: 9 };
        let y: Vec<f64> = ds.y.iter().copied().collect();
        let tr = sgd_empirical(&train, &y, &test, &ft, 0.0, &cfg).unwrap();
        let gram = train.gram();
        let mut u = DVector::zeros(n);
        for rec in &tr.records {
            let gd = (&u - &ds.y).norm_squared() / n as f64;
            assert!((rec.train_error.unwrap() - gd).abs() < 1e-10, "iteration {}", rec.iteration);
            u -= &gram * (&u - &ds.y) * (eta / n as f64);
        }
    }

    #[test]
    fn overparameterized_training_interpolates() {
        let n = 15;
        let (_, ds, train, test, ft) = setup(n, 6, 400);
        let cfg = SgdConfig { learning_rate: 1.0, batch_size: 5, momentum: 0.9, steps: 20_000, eval_grid: vec![0, 20_000], seed: 2 };
        let y: Vec<f64> = ds.y.iter().copied().collect();
        let tr = sgd_empirical(&train, &y, &test, &ft, 0.0, &cfg).unwrap();
        let (first, last) = (tr.records[0].train_error.unwrap(), tr.records[1].train_error.unwrap());
        assert!(last < 1e-3 * first, "{first} -> {last}");
    }

    #[test]
    fn divergence_is_detected() {
        let (_, ds, train, test, ft) = setup(20, 6, 200);
        let cfg = SgdConfig { learning_rate: 500.0, batch_size: 20, momentum: 0.0, steps: 200, eval_grid: (0..=200).step_by(10).collect(), seed: 3 };
        let y: Vec<f64> = ds.y.iter().copied().collect();
        assert!(matches!(sgd_empirical(&train, &y, &test, &ft, 0.0, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn runs_are_deterministic() {
        let (m, ds, train, test, ft) = setup(30, 6, 100);
        let cfg = SgdConfig { learning_rate: 0.1, batch_size: 7, momentum: 0.9, steps: 100, eval_grid: SgdConfig::log_eval_grid(100, 5), seed: 11 };
        let y: Vec<f64> = ds.y.iter().copied().collect();
        assert_eq!(sgd_empirical(&train, &y, &test, &ft, 0.0, &cfg).unwrap(), sgd_empirical(&train, &y, &test, &ft, 0.0, &cfg).unwrap());
        let t = TargetFunction::staircase();
        assert_eq!(sgd_oracle(&m, &t, 0.0, &test, &ft, &cfg).unwrap(), sgd_oracle(&m, &t, 0.0, &test, &ft, &cfg).unwrap());
    }

    #[test]
    fn config_validation() {
        let good = SgdConfig { learning_rate: 0.1, batch_size: 5, momentum: 0.9, steps: 10, eval_grid: vec![0, 10], seed: 0 };
        assert!(good.validate().is_ok());
        assert!(SgdConfig { momentum: 1.0, ..good.clone() }.validate().is_err());
        assert!(SgdConfig { batch_size: 0, ..good.clone() }.validate().is_err());
        assert!(SgdConfig { eval_grid: vec![0, 11], ..good.clone() }.validate().is_err());
        assert!(SgdConfig { learning_rate: -1.0, ..good.clone() }.validate().is_err());
        assert_eq!(good.t_eff(10), 10.0 * 0.1 / (1.0 - 0.9));
        let g = SgdConfig::log_eval_grid(1000, 4);
        assert_eq!((g[0], g[1], *g.last().unwrap()), (0, 1, 1000));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn step_size_examples() {
        let eye = DMatrix::<f64>::identity(6, 6);
        assert!((default_step_size(&eye, STEP_SIZE_CONSTANT).unwrap() - 0.5).abs() < 1e-12);
        let spec = build_dot_kernel(&Activation::relu(), 10, 20).unwrap();
        let x = sample_sphere(40, 10, &mut stream_rng(0, 0)).unwrap();
        let h = spec.kernel_matrix(&x).unwrap() / 40.0;
        let eta = default_step_size(&h, 0.5).unwrap();
        let eta10 = default_step_size(&(&h * 10.0), 0.5).unwrap();
        assert!((eta / eta10 - 10.0).abs() < 1e-8);
    }
}
