//! Uniform samples on `S^{d-1}(sqrt(d))`, target functions with exact degree
//! decompositions, noisy datasets and cyclic augmentation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::activation::{Activation, Atom};
use crate::error::{Error, Result};
use crate::kernels::{check_rows, cyclic_shift};
use crate::specfun::{
    dim_spherical_harmonics_f64, gegenbauer_coefficients, GegenbauerBasis, MarginalQuadrature,
    DEFAULT_QUAD_NODES,
};

/// Independent random stream `stream` of the experiment seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream used for the training set of trial `trial`.
pub fn train_stream(trial: usize) -> u64 {
    2 * trial as u64
}

/// Stream used for the test set of trial `trial`.
pub fn test_stream(trial: usize) -> u64 {
    2 * trial as u64 + 1
}

/// `n` i.i.d. points, Gaussian vectors rescaled to norm `sqrt(d)`.
pub fn sample_sphere<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if d < 3 {
        return Err(Error::UnsupportedDimension { d, min: 3 });
    }
    if n == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let radius = (d as f64).sqrt();
    let mut x = DMatrix::zeros(n, d);
    let mut row = vec![0.0; d];
    for i in 0..n {
        let norm = loop {
            row.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                break norm;
            }
        };
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = v * radius / norm;
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetFunction {
    /// `sum_j a_j He_j(x_1)`.
    RidgeHermite(Vec<f64>),
    /// `(sum x_i + sum x_i x_{i+1} + sum x_i x_{i+1} x_{i+2}) / sqrt(3d)`, indices mod `d`.
    CyclicCubic,
    /// `g(x_1)` for an arbitrary profile.
    CustomRidge(Activation),
}

impl TargetFunction {
    /// `a = (1/2, 1/sqrt(2), 1/sqrt(8))`, degree norms close to `(0.25, 0.5, 0.25)`.
    pub fn staircase() -> Self {
        TargetFunction::RidgeHermite(vec![0.5, 1.0 / 2f64.sqrt(), 1.0 / 8f64.sqrt()])
    }

    pub fn zero() -> Self {
        TargetFunction::RidgeHermite(vec![0.0])
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if d < 3 {
            return Err(Error::UnsupportedDimension { d, min: 3 });
        }
        match self {
            TargetFunction::RidgeHermite(a) if a.is_empty() => {
                Err(Error::InvalidInput("ridge target needs at least one coefficient".into()))
            }
            TargetFunction::RidgeHermite(a) if a.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidInput("non-finite ridge coefficient".into()))
            }
            // Distinct index triples need d >= 4.
            TargetFunction::CyclicCubic if d < 4 => Err(Error::UnsupportedDimension { d, min: 4 }),
            _ => Ok(()),
        }
    }

    /// Profile `g` with `f(x) = g(x_1)`, for ridge targets.
    pub fn ridge_profile(&self) -> Option<Activation> {
        match self {
            TargetFunction::RidgeHermite(a) => Some(Activation::new(
                a.iter().enumerate().map(|(j, &c)| (c, Atom::Hermite(j))).collect(),
            ).ok()?),
            TargetFunction::CustomRidge(g) => Some(g.clone()),
            TargetFunction::CyclicCubic => None,
        }
    }

    /// Invariant under cyclic coordinate shifts (constants included).
    pub fn is_cyclic_invariant(&self) -> bool {
        match self {
            TargetFunction::CyclicCubic => true,
            TargetFunction::RidgeHermite(a) => a.iter().skip(1).all(|&c| c == 0.0),
            TargetFunction::CustomRidge(act) => act.polynomial_degree() == Some(0),
        }
    }

    /// Value at a single point.
    pub fn eval_point(&self, x: &[f64]) -> f64 {
        match self {
            TargetFunction::RidgeHermite(a) => {
                a.iter().enumerate().map(|(j, c)| c * crate::specfun::hermite_he(j, x[0])).sum()
            }
            TargetFunction::CustomRidge(g) => g.eval(x[0]),
            TargetFunction::CyclicCubic => {
                let d = x.len();
                // Summed in sorted order so that shifted inputs give identical bits.
                let mut terms: Vec<f64> = (0..d)
                    .map(|i| {
                        let (a, b, c) = (x[i], x[(i + 1) % d], x[(i + 2) % d]);
                        a + a * b + a * b * c
                    })
                    .collect();
                terms.sort_by(f64::total_cmp);
                terms.iter().sum::<f64>() / (3.0 * d as f64).sqrt()
            }
        }
    }

    pub fn eval(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.validate(x.ncols())?;
        let mut row = vec![0.0; x.ncols()];
        Ok(DVector::from_iterator(
            x.nrows(),
            x.row_iter().map(|r| {
                row.iter_mut().zip(r.iter()).for_each(|(dst, src)| *dst = *src);
                self.eval_point(&row)
            }),
        ))
    }

    /// Gegenbauer coefficients `xi^f_k` of a ridge profile, `k = 0..=k_max`.
    pub fn ridge_coefficients(&self, d: usize, k_max: usize) -> Result<Vec<f64>> {
        self.validate(d)?;
        let g = self.ridge_profile().ok_or_else(|| {
            Error::InvalidInput("Gegenbauer coefficients need a ridge target".into())
        })?;
        let basis = GegenbauerBasis::new(d, k_max)?;
        let quad = MarginalQuadrature::for_activation(d, &g, DEFAULT_QUAD_NODES.max(2 * k_max + 8))?;
        gegenbauer_coefficients(&basis, |x| g.eval(x), &quad)
    }

    /// `‖P_k f‖^2` for `k = 0..=k_max`.
    pub fn degree_norms(&self, d: usize, k_max: usize) -> Result<Vec<f64>> {
        self.validate(d)?;
        match self {
            TargetFunction::CyclicCubic => {
                let df = d as f64;
                let exact = [
                    0.0,
                    1.0 / 3.0,
                    df / (3.0 * (df + 2.0)),
                    df * df / (3.0 * (df + 2.0) * (df + 4.0)),
                ];
                Ok((0..=k_max).map(|k| exact.get(k).copied().unwrap_or(0.0)).collect())
            }
            _ => {
                let xi = self.ridge_coefficients(d, k_max)?;
                xi.iter()
                    .enumerate()
                    .map(|(k, c)| Ok(c * c * dim_spherical_harmonics_f64(d, k)?))
                    .collect()
            }
        }
    }

    /// `‖f‖^2` under the uniform measure.
    pub fn norm2(&self, d: usize) -> Result<f64> {
        self.validate(d)?;
        match self {
            TargetFunction::CyclicCubic => Ok(self.degree_norms(d, 3)?.iter().sum()),
            _ => {
                let g = self.ridge_profile().expect("ridge target");
                let quad = MarginalQuadrature::for_activation(d, &g, DEFAULT_QUAD_NODES)?;
                Ok(quad.integrate(|x| g.eval(x).powi(2)))
            }
        }
    }
}

impl fmt::Display for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetFunction::RidgeHermite(a) => {
                f.write_str("ridge:")?;
                for (i, c) in a.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{c:?}")?;
                }
                Ok(())
            }
            TargetFunction::CyclicCubic => f.write_str("cyclic_cubic"),
            TargetFunction::CustomRidge(g) => write!(f, "custom:{g}"),
        }
    }
}

/// Text forms: `ridge:a0,a1,...`, `staircase`, `zero`, `cyclic_cubic`, `custom:<activation>`.
impl FromStr for TargetFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "staircase" => return Ok(TargetFunction::staircase()),
            "zero" => return Ok(TargetFunction::zero()),
            "cyclic_cubic" => return Ok(TargetFunction::CyclicCubic),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("ridge:") {
            let coeffs = rest
                .split(',')
                .map(|c| {
                    let v: f64 = c.trim().parse().map_err(|_| {
                        Error::InvalidInput(format!("bad ridge coefficient `{c}`"))
                    })?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::InvalidInput(format!("non-finite ridge coefficient `{c}`")))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            return Ok(TargetFunction::RidgeHermite(coeffs));
        }
        if let Some(rest) = s.strip_prefix("custom:") {
            return Ok(TargetFunction::CustomRidge(rest.parse()?));
        }
        Err(Error::InvalidInput(format!("unknown target `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub sigma_eps2: f64,
    pub seed: u64,
    pub stream: u64,
    pub target: TargetFunction,
}

impl Dataset {
    /// `n` noisy samples `y = f(x) + eps`, drawn from stream `stream` of `seed`.
    pub fn generate(
        target: &TargetFunction,
        n: usize,
        d: usize,
        sigma_eps2: f64,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        target.validate(d)?;
        if !(sigma_eps2.is_finite() && sigma_eps2 >= 0.0) {
            return Err(Error::InvalidInput(format!("noise variance {sigma_eps2} must be >= 0")));
        }
        let mut rng = stream_rng(seed, stream);
        let x = sample_sphere(n, d, &mut rng)?;
        let mut y = target.eval(&x)?;
        if sigma_eps2 > 0.0 {
            let sd = sigma_eps2.sqrt();
            for v in y.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v += sd * e;
            }
        }
        Ok(Dataset { x, y, sigma_eps2, seed, stream, target: target.clone() })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Columnar text export: `key=value` header lines, then one row per sample
    /// holding the coordinates followed by the response.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "d={}\nn={}\nsigma_eps2={:?}\nseed={}\nstream={}\ntarget={}\n",
            self.d(),
            self.n(),
            self.sigma_eps2,
            self.seed,
            self.stream,
            self.target
        );
        for (i, row) in self.x.row_iter().enumerate() {
            for v in row.iter() {
                out.push_str(&format!("{v:?} "));
            }
            out.push_str(&format!("{:?}\n", self.y[i]));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut header = std::collections::BTreeMap::new();
        let mut lines = text.lines().enumerate().peekable();
        while let Some(&(i, line)) = lines.peek() {
            let Some((k, v)) = line.split_once('=') else { break };
            if header.insert(k.trim().to_string(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::parse(i + 1, format!("duplicate key `{}`", k.trim())));
            }
            lines.next();
        }
        let get = |key: &str| {
            header.get(key).ok_or_else(|| Error::parse(0, format!("missing header key `{key}`")))
        };
        fn num<T: FromStr>(entry: &(usize, String), key: &str) -> Result<T> {
            entry.1.parse().map_err(|_| Error::parse(entry.0, format!("bad value for `{key}`")))
        }
        let d: usize = num(get("d")?, "d")?;
        let n: usize = num(get("n")?, "n")?;
        let sigma_eps2: f64 = num(get("sigma_eps2")?, "sigma_eps2")?;
        let seed: u64 = num(get("seed")?, "seed")?;
        let stream: u64 = num(get("stream")?, "stream")?;
        let (tline, tstr) = get("target")?;
        let target: TargetFunction =
            tstr.parse().map_err(|e: Error| Error::parse(*tline, e.to_string()))?;
        if let Some(extra) = header.keys().find(|k| {
            !["d", "n", "sigma_eps2", "seed", "stream", "target"].contains(&k.as_str())
        }) {
            return Err(Error::parse(header[extra].0, format!("unknown header key `{extra}`")));
        }
        if d < 3 || n == 0 {
            return Err(Error::parse(0, format!("invalid sizes d = {d}, n = {n}")));
        }
        if !(sigma_eps2.is_finite() && sigma_eps2 >= 0.0) {
            return Err(Error::parse(0, "noise variance must be finite and nonnegative"));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::parse(i + 1, "non-numeric or non-finite entry"))?;
            if vals.len().checked_sub(1) != Some(d) {
                return Err(Error::parse(i + 1, format!("expected d + 1 = {d} + 1 columns, found {}", vals.len())));
            }
            if ys.len() == n {
                return Err(Error::parse(i + 1, format!("more than n = {n} rows")));
            }
            xs.extend_from_slice(&vals[..d]);
            ys.push(vals[d]);
        }
        if ys.len() != n {
            return Err(Error::parse(0, format!("expected {n} rows, found {}", ys.len())));
        }
        let x = DMatrix::from_row_slice(n, d, &xs);
        check_rows(&x, d)?;
        Ok(Dataset { x, y: DVector::from_vec(ys), sigma_eps2, seed, stream, target })
    }
}

/// All `d` cyclic shifts of every row, in shift-major blocks (identity block
/// first), responses repeated. Refuses to build more than `max_rows` rows.
pub fn augment_cyclic(ds: &Dataset, max_rows: usize) -> Result<Dataset> {
    let (n, d) = (ds.n(), ds.d());
    let required = n.checked_mul(d).ok_or(Error::MemoryCap { required: usize::MAX, cap: max_rows })?;
    if required > max_rows {
        return Err(Error::MemoryCap { required, cap: max_rows });
    }
    let rows: Vec<Vec<f64>> = ds.x.row_iter().map(|r| r.iter().copied().collect()).collect();
    let mut x = DMatrix::zeros(required, d);
    let mut y = DVector::zeros(required);
    for g in 0..d {
        for (i, r) in rows.iter().enumerate() {
            let shifted = cyclic_shift(r, g);
            for (j, v) in shifted.into_iter().enumerate() {
                x[(g * n + i, j)] = v;
            }
            y[g * n + i] = ds.y[i];
        }
    }
    Ok(Dataset { x, y, ..ds.clone() })
}
