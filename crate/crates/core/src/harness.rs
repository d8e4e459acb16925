//! Experiment configuration, orchestration and output.
//!
//! A config is flat `key = value` text. Every output file starts with one
//! `# key=value ...` line echoing the resolved config, which [`replay`] reads
//! back to rerun the experiment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::activation::Activation;
use crate::empiricalflow::{
    build_e_vector, build_m_matrix, solve_flow, test_error_analytic, test_error_mc, theoretical_plateaus,
    ErrorCurves, FlowSolution,
};
use crate::error::{Error, Result};
use crate::kernels::{build_dot_kernel, CyclicKernel, Kernel, KernelSpectrum};
use crate::oracleflow::{log_time_grid, oracle_risk, validate_grid};
use crate::rfsgd::{power_iteration, sgd_empirical, sgd_oracle, RFModel, SgdConfig, Trajectory, STEP_SIZE_CONSTANT};
use crate::spheredata::{augment_cyclic, sample_sphere, stream_rng, test_stream, train_stream, Dataset, TargetFunction};

/// Largest augmented sample count `n d` that [`augment_check`] will decompose.
pub const AUGMENT_CAP: usize = 2000;
/// Largest `n` accepted by [`stepsize_report`].
pub const STEPSIZE_MAX_N: usize = 5000;
/// Fresh points at which [`augment_check`] compares the two predictors.
pub const AUGMENT_TEST_POINTS: usize = 20;

/// How the test error of the flow is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestErrorMode {
    /// Average over `test_set_size` fresh points.
    MonteCarlo,
    /// Closed form through the `E` vector and `M` matrix (ridge targets, dot kernel).
    Analytic,
}

impl std::fmt::Display for TestErrorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestErrorMode::MonteCarlo => "mc",
            TestErrorMode::Analytic => "analytic",
        })
    }
}

impl FromStr for TestErrorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(TestErrorMode::MonteCarlo),
            "analytic" => Ok(TestErrorMode::Analytic),
            _ => Err(Error::Config(format!("unknown test error mode {s:?} (expected mc or analytic)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub d: usize,
    /// Explicit sample count; otherwise `round(d^n_exponent)`.
    pub n: Option<usize>,
    pub n_exponent: f64,
    pub activation: Activation,
    pub cyclic: bool,
    pub max_degree: usize,
    pub target: TargetFunction,
    pub sigma_eps2: f64,
    pub trials: usize,
    pub test_set_size: usize,
    pub t_min_exponent: f64,
    /// Defaults to `n_exponent + 1.2`.
    pub t_max_exponent: Option<f64>,
    pub points_per_decade: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub test_error: TestErrorMode,
    pub n_features: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub steps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d: 100,
            n: None,
            n_exponent: 1.5,
            activation: Activation::relu(),
            cyclic: false,
            max_degree: crate::kernels::DEFAULT_MAX_DEGREE,
            target: TargetFunction::staircase(),
            sigma_eps2: 0.0,
            trials: 1,
            test_set_size: 2000,
            t_min_exponent: 0.1,
            t_max_exponent: None,
            points_per_decade: 12,
            seed: 0,
            output: None,
            test_error: TestErrorMode::MonteCarlo,
            n_features: 20_000,
            learning_rate: 0.1,
            batch_size: 50,
            momentum: 0.9,
            steps: 1000,
        }
    }
}

/// Every key a config may set, in echo order.
pub const CONFIG_KEYS: &[&str] = &[
    "d",
    "n",
    "n_exponent",
    "activation",
    "cyclic",
    "K",
    "target",
    "sigma_eps2",
    "trials",
    "test_set_size",
    "t_min_exponent",
    "t_max_exponent",
    "points_per_decade",
    "seed",
    "output",
    "test_error",
    "N",
    "lr",
    "batch",
    "momentum",
    "steps",
];

/// Metadata keys that describe conventions rather than configuration.
const INFO_KEYS: &[&str] = &["mode", "test_includes_noise", "t_eff"];

fn typed<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" {
        Ok(None)
    } else {
        typed(key, value).map(Some)
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment;
    /// unknown and repeated keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(idx + 1, format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::parse(idx + 1, format!("duplicate key {key:?}")));
            }
            cfg.set(key, value).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
            seen.push(key.to_string());
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if value.is_empty() || value.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("{key}: value {value:?} must be non-empty without whitespace")));
        }
        match key {
            "d" => self.d = typed(key, value)?,
            "n" => self.n = optional(key, value)?,
            "n_exponent" => self.n_exponent = typed(key, value)?,
            "activation" => self.activation = typed(key, value)?,
            "cyclic" => self.cyclic = typed(key, value)?,
            "K" => self.max_degree = typed(key, value)?,
            "target" => self.target = typed(key, value)?,
            "sigma_eps2" => self.sigma_eps2 = typed(key, value)?,
            "trials" => self.trials = typed(key, value)?,
            "test_set_size" => self.test_set_size = typed(key, value)?,
            "t_min_exponent" => self.t_min_exponent = typed(key, value)?,
            "t_max_exponent" => self.t_max_exponent = optional(key, value)?,
            "points_per_decade" => self.points_per_decade = typed(key, value)?,
            "seed" => self.seed = typed(key, value)?,
            "output" => self.output = if value == "none" { None } else { Some(PathBuf::from(value)) },
            "test_error" => self.test_error = value.parse()?,
            "N" => self.n_features = typed(key, value)?,
            "lr" => self.learning_rate = typed(key, value)?,
            "batch" => self.batch_size = typed(key, value)?,
            "momentum" => self.momentum = typed(key, value)?,
            "steps" => self.steps = typed(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Config as `(key, value)` pairs that [`ExperimentConfig::set`] accepts.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let auto = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        CONFIG_KEYS
            .iter()
            .map(|&k| {
                let v = match k {
                    "d" => self.d.to_string(),
                    "n" => auto(self.n.map(|n| n.to_string())),
                    "n_exponent" => self.n_exponent.to_string(),
                    "activation" => self.activation.to_string(),
                    "cyclic" => self.cyclic.to_string(),
                    "K" => self.max_degree.to_string(),
                    "target" => self.target.to_string(),
                    "sigma_eps2" => self.sigma_eps2.to_string(),
                    "trials" => self.trials.to_string(),
                    "test_set_size" => self.test_set_size.to_string(),
                    "t_min_exponent" => self.t_min_exponent.to_string(),
                    "t_max_exponent" => auto(self.t_max_exponent.map(|t| t.to_string())),
                    "points_per_decade" => self.points_per_decade.to_string(),
                    "seed" => self.seed.to_string(),
                    "output" => self.output.as_ref().map_or("none".into(), |p| p.display().to_string()),
                    "test_error" => self.test_error.to_string(),
                    "N" => self.n_features.to_string(),
                    "lr" => self.learning_rate.to_string(),
                    "batch" => self.batch_size.to_string(),
                    "momentum" => self.momentum.to_string(),
                    "steps" => self.steps.to_string(),
                    _ => unreachable!("key list and match out of sync"),
                };
                (k.to_string(), v)
            })
            .collect()
    }

    /// Rebuilds a config from echoed pairs, skipping convention keys.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in pairs {
            if !INFO_KEYS.contains(&k.as_str()) {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    /// One-line `key=value` echo.
    pub fn echo(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    }

    pub fn sample_size(&self) -> usize {
        self.n.unwrap_or_else(|| (self.d as f64).powf(self.n_exponent).round() as usize)
    }

    pub fn t_max_exponent(&self) -> f64 {
        self.t_max_exponent.unwrap_or(self.n_exponent + 1.2)
    }

    /// Log-spaced time grid from `d^t_min_exponent` to `d^t_max_exponent`.
    pub fn time_grid(&self) -> Result<Vec<f64>> {
        let d = self.d as f64;
        log_time_grid(d.powf(self.t_min_exponent), d.powf(self.t_max_exponent()), self.points_per_decade)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sgd_config(&self, seed: u64) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            momentum: self.momentum,
            steps: self.steps,
            eval_grid: SgdConfig::log_eval_grid(self.steps, self.points_per_decade),
            seed,
        }
    }

    /// Checks the flow-experiment keys.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, v) in [
            ("n_exponent", self.n_exponent),
            ("t_min_exponent", self.t_min_exponent),
            ("t_max_exponent", self.t_max_exponent()),
            ("sigma_eps2", self.sigma_eps2),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} = {v} is not finite"));
            }
        }
        if self.d < 3 {
            return bad(format!("d = {} (need d >= 3)", self.d));
        }
        if self.sigma_eps2 < 0.0 {
            return bad(format!("sigma_eps2 = {} is negative", self.sigma_eps2));
        }
        if self.sample_size() == 0 {
            return bad("sample size rounds to 0".into());
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.test_set_size == 0 {
            return bad("test_set_size must be >= 1".into());
        }
        if self.max_degree == 0 {
            return bad("K must be >= 1".into());
        }
        if self.time_grid()?.len() < 2 {
            return bad("time grid needs at least 2 points".into());
        }
        self.target.validate(self.d).map_err(|e| Error::Config(e.to_string()))?;
        if self.cyclic && !self.target.is_cyclic_invariant() {
            return bad(format!("cyclic kernel needs a shift-invariant target, got {}", self.target));
        }
        if self.test_error == TestErrorMode::Analytic && (self.cyclic || self.target.ridge_profile().is_none()) {
            return bad("analytic test error needs the dot kernel and a ridge target".into());
        }
        Ok(())
    }

    /// Checks the flow keys plus the SGD keys.
    pub fn validate_rf(&self) -> Result<()> {
        self.validate()?;
        if self.n_features == 0 || self.steps == 0 {
            return Err(Error::Config("N and steps must be >= 1".into()));
        }
        self.sgd_config(0).validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// A validated config with its kernel and the target's degree norms.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub kernel: Kernel,
    pub norms: Vec<f64>,
}

/// Per-trial state of a gradient-flow run.
#[derive(Debug, Clone)]
pub struct FlowTrial {
    pub dataset: Dataset,
    pub x_test: DMatrix<f64>,
    pub f_test: DVector<f64>,
    pub solution: FlowSolution,
    cross: Option<DMatrix<f64>>,
    analytic: Option<(DVector<f64>, DMatrix<f64>, f64)>,
}

impl FlowTrial {
    pub fn train_error(&self, t: f64) -> f64 {
        self.solution.train_error(t)
    }

    /// Test error (noise variance included) in the experiment's mode.
    pub fn test_error(&self, t: f64) -> Result<f64> {
        let s2 = self.dataset.sigma_eps2;
        match (&self.cross, &self.analytic) {
            (Some(cross), _) => Ok(test_error_mc(&self.solution, cross, &self.f_test, s2, t)?.mean),
            (None, Some((e, m, norm2))) => test_error_analytic(&self.solution, e, m, *norm2, s2, t),
            (None, None) => unreachable!("trial built without a test-error method"),
        }
    }
}

/// Draws the test points and noiseless targets of a trial.
pub fn test_points(cfg: &ExperimentConfig, trial: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let x = sample_sphere(cfg.test_set_size, cfg.d, &mut stream_rng(cfg.seed, test_stream(trial)))?;
    let f = cfg.target.eval(&x)?;
    Ok((x, f))
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = build_dot_kernel(&cfg.activation, cfg.d, cfg.max_degree)?;
        let norms = cfg.target.degree_norms(cfg.d, cfg.max_degree)?;
        let kernel = if cfg.cyclic { Kernel::Cyclic(CyclicKernel::new(spec)) } else { Kernel::Dot(spec) };
        Ok(Experiment { cfg, kernel, norms })
    }

    pub fn spectrum(&self) -> &KernelSpectrum {
        self.kernel.spectrum()
    }

    pub fn n(&self) -> usize {
        self.cfg.sample_size()
    }

    /// Degeneracy exponent of the kernel's eigenspaces: the cyclic group has `d` elements.
    pub fn alpha(&self) -> usize {
        usize::from(self.cfg.cyclic)
    }

    pub fn oracle(&self, t: f64) -> Result<f64> {
        oracle_risk(self.spectrum(), &self.norms, self.cfg.sigma_eps2, t)
    }

    /// Predicted test plateau, `NaN` where the windows are undefined (`t <= 1`).
    pub fn plateau(&self, t: f64) -> f64 {
        theoretical_plateaus(self.spectrum(), &self.norms, self.cfg.sigma_eps2, t, self.n() as f64, self.alpha())
            .map_or(f64::NAN, |p| p.predicted_test)
    }

    pub fn dataset(&self, trial: usize) -> Result<Dataset> {
        let c = &self.cfg;
        Dataset::generate(&c.target, self.n(), c.d, c.sigma_eps2, c.seed, train_stream(trial))
    }

    /// Samples trial `trial` and solves its flow.
    pub fn flow_trial(&self, trial: usize) -> Result<FlowTrial> {
        let wrap = |e: Error| Error::Trial { trial, config: self.cfg.echo(), source: Box::new(e) };
        let run = || -> Result<FlowTrial> {
            let dataset = self.dataset(trial)?;
            let h = self.kernel.kernel_matrix(&dataset.x)?;
            let solution = solve_flow(&h, &dataset.y)?;
            let (x_test, f_test) = test_points(&self.cfg, trial)?;
            let (cross, analytic) = match self.cfg.test_error {
                TestErrorMode::MonteCarlo => (Some(self.kernel.cross_matrix(&x_test, &dataset.x)?), None),
                TestErrorMode::Analytic => {
                    let spec = self.spectrum();
                    let e = build_e_vector(spec, &self.cfg.target, &dataset.x)?;
                    let m = build_m_matrix(spec, &dataset.x)?;
                    (None, Some((e, m, self.cfg.target.norm2(self.cfg.d)?)))
                }
            };
            Ok(FlowTrial { dataset, x_test, f_test, solution, cross, analytic })
        };
        run().map_err(wrap)
    }

    /// All trials (in parallel) evaluated over `times`.
    pub fn flow_curves(&self, times: &[f64]) -> Result<ErrorCurves> {
        validate_grid(times)?;
        let per_trial = (0..self.cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let ft = self.flow_trial(trial)?;
                let train: Vec<f64> = times.iter().map(|&t| ft.train_error(t)).collect();
                let test = times
                    .iter()
                    .map(|&t| ft.test_error(t))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| Error::Trial { trial, config: self.cfg.echo(), source: Box::new(e) })?;
                info!("trial {trial} done");
                Ok((train, test))
            })
            .collect::<Result<Vec<_>>>()?;
        let (train, test) = per_trial.into_iter().unzip();
        let oracle = times.iter().map(|&t| self.oracle(t)).collect::<Result<Vec<_>>>()?;
        let plateau = times.iter().map(|&t| self.plateau(t)).collect();
        let mut metadata = vec![("mode".to_string(), "flow".to_string())];
        metadata.extend(self.cfg.to_pairs());
        metadata.push(("test_includes_noise".into(), "true".into()));
        Ok(ErrorCurves { times: times.to_vec(), train, test, oracle, plateau, metadata })
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:e}")
    }
}

fn metadata_line(pairs: &[(String, String)]) -> String {
    let body: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("# {}\n", body.join(" "))
}

/// Parses a `# key=value key=value ...` metadata line.
pub fn parse_metadata(line: &str) -> Result<Vec<(String, String)>> {
    let body = line
        .trim_end_matches(['\n', '\r'])
        .strip_prefix('#')
        .ok_or_else(|| Error::parse(1, "metadata line must start with '#'"))?;
    let mut pairs: Vec<(String, String)> = Vec::new();
    for tok in body.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::parse(1, format!("token {tok:?} is not key=value")))?;
        if k.is_empty() {
            return Err(Error::parse(1, format!("empty key in {tok:?}")));
        }
        if pairs.iter().any(|(seen, _)| seen == k) {
            return Err(Error::parse(1, format!("duplicate key {k:?}")));
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

pub const FLOW_HEADER: &str = "t,train_mean,train_std,test_mean,test_std,oracle,plateau_pred";
pub const RF_HEADER: &str =
    "iteration,t_eff,train_mean,train_std,test_mean,test_std,oracle,plateau_pred,oracle_std,oracle_flow";

/// CSV text for flow curves.
pub fn flow_csv(curves: &ErrorCurves) -> String {
    let mut out = metadata_line(&curves.metadata);
    out.push_str(FLOW_HEADER);
    out.push('\n');
    let (train, train_sd) = curves.train_stats();
    let (test, test_sd) = curves.test_stats();
    let sd = |s: &Option<Vec<f64>>, i: usize| s.as_ref().map_or(f64::NAN, |v| v[i]);
    for i in 0..curves.times.len() {
        let row = [
            curves.times[i],
            train[i],
            sd(&train_sd, i),
            test[i],
            sd(&test_sd, i),
            curves.oracle[i],
            curves.plateau[i],
        ];
        out.push_str(&row.map(fmt_num).join(","));
        out.push('\n');
    }
    out
}

/// One line series for [`svg_plot`].
pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub color: &'a str,
}

/// Line plot with a logarithmic x axis and a linear y axis.
pub fn svg_plot(title: &str, x_label: &str, series: &[Series<'_>]) -> String {
    let (w, h, left, right, top, bottom) = (720.0, 440.0, 70.0, 160.0, 40.0, 50.0);
    let pts = |s: &Series<'_>| -> Vec<(f64, f64)> {
        s.x.iter().zip(s.y).filter(|(x, y)| **x > 0.0 && y.is_finite()).map(|(x, y)| (x.log10(), *y)).collect()
    };
    let all: Vec<(f64, f64)> = series.iter().flat_map(pts).collect();
    let (mut x0, mut x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let mut y1 = all.iter().fold(0.0f64, |m, p| m.max(p.1)) * 1.05;
    if !(x1 > x0) {
        (x0, x1) = (x0.min(0.0) - 1.0, x1.max(0.0) + 1.0);
    }
    if !(y1 > 0.0) {
        y1 = 1.0;
    }
    let (pw, ph) = (w - left - right, h - top - bottom);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - y / y1 * ph;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#, left + pw / 2.0, xml_escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for dec in (x0.ceil() as i64)..=(x1.floor() as i64) {
        let x = sx(dec as f64);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, top + ph, top + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" font-size="12" text-anchor="middle">1e{dec}</text>"#, top + ph + 18.0);
    }
    for i in 0..=4 {
        let v = y1 * i as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" font-size="12" text-anchor="end">{v:.3}</text>"#, left - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 10.0, xml_escape(x_label));
    for (k, ser) in series.iter().enumerate() {
        let p = pts(ser);
        if !p.is_empty() {
            let d: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.8"/>"#, d.join(" "), ser.color);
        }
        let ly = top + 10.0 + 20.0 * k as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/>"#, lx + 25.0, ser.color);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">{}</text>"#, lx + 32.0, ly + 4.0, xml_escape(ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `csv` and `svg` next to each other; a failed write leaves no CSV behind.
fn write_outputs(csv_path: &Path, csv: &str, svg: &str) -> Result<()> {
    let result = fs::write(csv_path, csv).and_then(|_| fs::write(csv_path.with_extension("svg"), svg));
    if let Err(e) = result {
        let _ = fs::remove_file(csv_path);
        return Err(e.into());
    }
    Ok(())
}

/// Runs the flow experiment over the config's grid and writes CSV + SVG if an
/// output path is set.
pub fn run_flow_experiment(cfg: &ExperimentConfig) -> Result<ErrorCurves> {
    let exp = Experiment::new(cfg.clone())?;
    let times = cfg.time_grid()?;
    let curves = exp.flow_curves(&times)?;
    if let Some(path) = &cfg.output {
        let (train, _) = curves.train_stats();
        let (test, _) = curves.test_stats();
        let svg = svg_plot(
            &format!("d={} n={} {}", cfg.d, exp.n(), cfg.activation),
            "t",
            &[
                Series { label: "train", x: &times, y: &train, color: "#1f77b4" },
                Series { label: "test", x: &times, y: &test, color: "#d62728" },
                Series { label: "oracle", x: &times, y: &curves.oracle, color: "#2ca02c" },
            ],
        );
        write_outputs(path, &flow_csv(&curves), &svg)?;
    }
    Ok(curves)
}

/// Random-feature SGD curves over trials, in both worlds.
#[derive(Debug, Clone, PartialEq)]
pub struct RfCurves {
    pub iterations: Vec<usize>,
    pub t_eff: Vec<f64>,
    pub train: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
    /// Oracle-world test error per trial.
    pub oracle_test: Vec<Vec<f64>>,
    /// Gradient-flow oracle risk at `t_eff`.
    pub oracle_flow: Vec<f64>,
    pub plateau: Vec<f64>,
    pub metadata: Vec<(String, String)>,
}

fn stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let len = rows.first().map_or(0, Vec::len);
    let k = rows.len() as f64;
    let mean: Vec<f64> = (0..len).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / k).collect();
    let sd = (0..len)
        .map(|i| {
            if rows.len() < 2 {
                f64::NAN
            } else {
                (rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            }
        })
        .collect();
    (mean, sd)
}

impl RfCurves {
    pub fn train_stats(&self) -> (Vec<f64>, Vec<f64>) {
        stats(&self.train)
    }

    pub fn test_stats(&self) -> (Vec<f64>, Vec<f64>) {
        stats(&self.test)
    }

    pub fn oracle_stats(&self) -> (Vec<f64>, Vec<f64>) {
        stats(&self.oracle_test)
    }
}

fn mix_seed(seed: u64, trial: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (trial as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for the feature directions of trial `trial`.
pub fn feature_stream(trial: usize) -> u64 {
    u64::MAX - 1 - trial as u64
}

/// Empirical and oracle SGD trajectories of one trial. The training set and
/// test points are those of [`Experiment::flow_trial`] for the same trial.
pub fn rf_trial(exp: &Experiment, trial: usize) -> Result<(Trajectory, Trajectory)> {
    let cfg = &exp.cfg;
    let run = || -> Result<(Trajectory, Trajectory)> {
        let model = RFModel::sample(
            cfg.n_features,
            cfg.d,
            cfg.activation.clone(),
            cfg.cyclic,
            &mut stream_rng(cfg.seed, feature_stream(trial)),
        )?;
        let ds = exp.dataset(trial)?;
        let (xt, ft) = test_points(cfg, trial)?;
        let train = model.feature_matrix(&ds.x)?;
        let test = model.feature_matrix(&xt)?;
        let sgd = cfg.sgd_config(mix_seed(cfg.seed, trial));
        let emp = sgd_empirical(&train, ds.y.as_slice(), &test, ft.as_slice(), cfg.sigma_eps2, &sgd)?;
        drop(train);
        let orc = sgd_oracle(&model, &cfg.target, cfg.sigma_eps2, &test, ft.as_slice(), &sgd)?;
        Ok((emp, orc))
    };
    run().map_err(|e| Error::Trial { trial, config: cfg.echo(), source: Box::new(e) })
}

/// Runs every trial (sequentially: each holds its feature matrices in memory)
/// and writes CSV + SVG if an output path is set.
pub fn run_rf_experiment(cfg: &ExperimentConfig) -> Result<RfCurves> {
    cfg.validate_rf()?;
    let exp = Experiment::new(cfg.clone())?;
    let sgd = cfg.sgd_config(0);
    let iterations = sgd.eval_grid.clone();
    let t_eff: Vec<f64> = iterations.iter().map(|&k| sgd.t_eff(k)).collect();
    let (mut train, mut test, mut oracle_test) = (Vec::new(), Vec::new(), Vec::new());
    for trial in 0..cfg.trials {
        let (emp, orc) = rf_trial(&exp, trial)?;
        train.push(emp.records.iter().map(|r| r.train_error.unwrap_or(f64::NAN)).collect());
        test.push(emp.records.iter().map(|r| r.test_error).collect());
        oracle_test.push(orc.records.iter().map(|r| r.test_error).collect());
        info!("rf trial {trial} done");
    }
    let oracle_flow = t_eff.iter().map(|&t| exp.oracle(t)).collect::<Result<Vec<_>>>()?;
    let plateau = t_eff.iter().map(|&t| exp.plateau(t)).collect();
    let mut metadata = vec![("mode".to_string(), "rf".to_string())];
    metadata.extend(cfg.to_pairs());
    metadata.push(("test_includes_noise".into(), "true".into()));
    metadata.push(("t_eff".into(), "iteration*lr/(1-momentum)".into()));
    let curves = RfCurves { iterations, t_eff, train, test, oracle_test, oracle_flow, plateau, metadata };
    if let Some(path) = &cfg.output {
        let (tr, _) = curves.train_stats();
        let (te, _) = curves.test_stats();
        let (or, _) = curves.oracle_stats();
        let svg = svg_plot(
            &format!("RF SGD d={} N={} {}", cfg.d, cfg.n_features, cfg.activation),
            "t_eff",
            &[
                Series { label: "train", x: &curves.t_eff, y: &tr, color: "#1f77b4" },
                Series { label: "test", x: &curves.t_eff, y: &te, color: "#d62728" },
                Series { label: "oracle SGD", x: &curves.t_eff, y: &or, color: "#2ca02c" },
                Series { label: "oracle flow", x: &curves.t_eff, y: &curves.oracle_flow, color: "#7f7f7f" },
            ],
        );
        write_outputs(path, &rf_csv(&curves), &svg)?;
    }
    Ok(curves)
}

/// CSV text for RF curves.
pub fn rf_csv(curves: &RfCurves) -> String {
    let mut out = metadata_line(&curves.metadata);
    out.push_str(RF_HEADER);
    out.push('\n');
    let (tr, tr_sd) = curves.train_stats();
    let (te, te_sd) = curves.test_stats();
    let (or, or_sd) = curves.oracle_stats();
    for i in 0..curves.iterations.len() {
        let nums = [
            curves.t_eff[i],
            tr[i],
            tr_sd[i],
            te[i],
            te_sd[i],
            or[i],
            curves.plateau[i],
            or_sd[i],
            curves.oracle_flow[i],
        ];
        let _ = writeln!(out, "{},{}", curves.iterations[i], nums.map(fmt_num).join(","));
    }
    out
}

/// Outcome of [`augment_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentReport {
    pub n: usize,
    pub d: usize,
    pub times: Vec<f64>,
    /// Max over test points of `|f_inv - f_aug|` at each time.
    pub discrepancy: Vec<f64>,
    pub max_discrepancy: f64,
}

/// Compares the cyclic-kernel flow on `(X, y)` with the dot-kernel flow on
/// the `d`-fold augmented data set, at fresh test points. Both flows average
/// the loss over their own sample count, which makes the time scales agree.
pub fn augment_check(
    d: usize,
    n: usize,
    activation: &Activation,
    max_degree: usize,
    times: &[f64],
    seed: u64,
) -> Result<AugmentReport> {
    let required = n.checked_mul(d).unwrap_or(usize::MAX);
    if required > AUGMENT_CAP {
        return Err(Error::MemoryCap { required, cap: AUGMENT_CAP });
    }
    for &t in times {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput(format!("time {t} must be finite and >= 0")));
        }
    }
    let spec = build_dot_kernel(activation, d, max_degree)?;
    let cyc = CyclicKernel::new(spec.clone());
    let ds = Dataset::generate(&TargetFunction::staircase(), n, d, 0.0, seed, train_stream(0))?;
    let aug = augment_cyclic(&ds, AUGMENT_CAP)?;
    let sol_inv = solve_flow(&cyc.kernel_matrix(&ds.x)?, &ds.y)?;
    let sol_aug = solve_flow(&spec.kernel_matrix(&aug.x)?, &aug.y)?;
    let xt = sample_sphere(AUGMENT_TEST_POINTS, d, &mut stream_rng(seed, test_stream(0)))?;
    let cross_inv = cyc.cross_matrix(&xt, &ds.x)?;
    let cross_aug = spec.cross_matrix(&xt, &aug.x)?;
    let discrepancy = times
        .iter()
        .map(|&t| {
            let a = sol_inv.predict(&cross_inv, t)?;
            let b = sol_aug.predict(&cross_aug, t)?;
            Ok((a - b).amax())
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_discrepancy = discrepancy.iter().copied().fold(0.0, f64::max);
    Ok(AugmentReport { n, d, times: times.to_vec(), discrepancy, max_discrepancy })
}

/// Outcome of [`stepsize_report`]. `bar` quantities are for `H / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepsizeReport {
    pub lambda_bar_dot: f64,
    pub lambda_bar_cyclic: f64,
    pub eta_dot: f64,
    pub eta_cyclic: f64,
    /// Top eigenvalue of the unnormalized cyclic kernel matrix.
    pub lambda_cyclic: f64,
    /// Top eigenvalue of the unnormalized augmented dot-kernel matrix, when `n d` fits the cap.
    pub lambda_augmented: Option<f64>,
}

impl StepsizeReport {
    /// `lambda_augmented / lambda_cyclic`, close to `d`.
    pub fn augmented_ratio(&self) -> Option<f64> {
        self.lambda_augmented.map(|a| a / self.lambda_cyclic)
    }
}

fn top_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    let (lambda, residual) = power_iteration(m, 100)?;
    if residual <= 1e-3 {
        return Ok(lambda);
    }
    // Slow power convergence: fall back to a full decomposition.
    Ok(m.clone().symmetric_eigenvalues().max())
}

/// Top eigenvalues and recommended step sizes for the dot and cyclic kernels
/// on one sampled data set, plus the augmented matrix when small enough.
pub fn stepsize_report(activation: &Activation, max_degree: usize, d: usize, n: usize, seed: u64) -> Result<StepsizeReport> {
    if n == 0 || n > STEPSIZE_MAX_N {
        return Err(Error::InvalidInput(format!("n = {n} outside 1..={STEPSIZE_MAX_N}")));
    }
    let spec = build_dot_kernel(activation, d, max_degree)?;
    let cyc = CyclicKernel::new(spec.clone());
    let x = sample_sphere(n, d, &mut stream_rng(seed, train_stream(0)))?;
    let h_dot = spec.kernel_matrix(&x)?;
    let h_cyc = cyc.kernel_matrix(&x)?;
    let lambda_dot = top_eigenvalue(&h_dot)?;
    let lambda_cyclic = top_eigenvalue(&h_cyc)?;
    let nf = n as f64;
    let lambda_augmented = if n * d <= AUGMENT_CAP {
        let ds = Dataset { x, y: DVector::zeros(n), sigma_eps2: 0.0, seed, stream: train_stream(0), target: TargetFunction::zero() };
        let aug = augment_cyclic(&ds, AUGMENT_CAP)?;
        Some(top_eigenvalue(&spec.kernel_matrix(&aug.x)?)?)
    } else {
        None
    };
    let positive = |l: f64| {
        if l > 0.0 {
            Ok(l)
        } else {
            Err(Error::Numerical(format!("non-positive top eigenvalue {l:e}")))
        }
    };
    let lambda_bar_dot = positive(lambda_dot / nf)?;
    let lambda_bar_cyclic = positive(lambda_cyclic / nf)?;
    Ok(StepsizeReport {
        lambda_bar_dot,
        lambda_bar_cyclic,
        eta_dot: STEP_SIZE_CONSTANT / lambda_bar_dot,
        eta_cyclic: STEP_SIZE_CONSTANT / lambda_bar_cyclic,
        lambda_cyclic,
        lambda_augmented,
    })
}

/// What [`replay`] reran.
#[derive(Debug, Clone, PartialEq)]
pub enum Replayed {
    Flow(ErrorCurves),
    Rf(RfCurves),
}

/// Reruns the experiment echoed on the first line of a CSV file, optionally
/// writing to a different output path.
pub fn replay(csv: &Path, output: Option<PathBuf>) -> Result<(ExperimentConfig, Replayed)> {
    let text = fs::read_to_string(csv)?;
    let first = text.lines().next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let pairs = parse_metadata(first)?;
    let mode = pairs
        .iter()
        .find(|(k, _)| k == "mode")
        .map(|(_, v)| v.clone())
        .ok_or_else(|| Error::parse(1, "metadata has no mode"))?;
    let mut cfg = ExperimentConfig::from_pairs(&pairs)?;
    if output.is_some() {
        cfg.output = output;
    }
    let out = match mode.as_str() {
        "flow" => Replayed::Flow(run_flow_experiment(&cfg)?),
        "rf" => Replayed::Rf(run_rf_experiment(&cfg)?),
        other => return Err(Error::parse(1, format!("unknown mode {other:?}"))),
    };
    Ok((cfg, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.apply_overrides(&["d=10", "n=5", "trials=1", "test_set_size=50", "t_min_exponent=0", "t_max_exponent=1", "points_per_decade=2", "K=12"])
            .unwrap();
        c
    }

    #[test]
    fn config_round_trip() {
        let mut c = tiny();
        c.set("activation", "relu+0.1*he3").unwrap();
        c.set("output", "out.csv").unwrap();
        c.set("sigma_eps2", "0.25").unwrap();
        let text: String = c.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
        let meta = parse_metadata(&format!("# mode=flow {}", c.echo())).unwrap();
        assert_eq!(ExperimentConfig::from_pairs(&meta).unwrap(), c);
    }

    #[test]
    fn config_rejections() {
        assert!(matches!(ExperimentConfig::parse("bogus = 1"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse("d = 10\n\nd = 12"), Err(Error::Parse { line: 3, .. })));
        assert!(ExperimentConfig::parse("d = ten").is_err());
        assert!(ExperimentConfig::parse("just words").is_err());
        let mut c = tiny();
        assert!(c.set("cyclic", "maybe").is_err());
        assert!(c.apply_overrides(&["trials"]).is_err());
        c.set("trials", "0").unwrap();
        assert!(c.validate().unwrap_err().is_config_error());
        let mut c = tiny();
        c.set("cyclic", "true").unwrap();
        assert!(c.validate().is_err());
        c.set("target", "cyclic_cubic").unwrap();
        c.validate().unwrap();
        c.set("test_error", "analytic").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn comments_and_defaults() {
        let c = ExperimentConfig::parse("# header\nd = 20 # inline\n\nn_exponent=1.2\n").unwrap();
        assert_eq!(c.d, 20);
        assert_eq!(c.sample_size(), 36);
        assert!((c.t_max_exponent() - 2.4).abs() < 1e-15);
        assert_eq!(c.test_set_size, 2000);
    }

    #[test]
    fn tiny_flow_csv_shape() {
        let mut c = tiny();
        c.t_max_exponent = Some(0.5);
        c.points_per_decade = 4;
        let curves = Experiment::new(c.clone()).unwrap().flow_curves(&[1.0, 2.0, 3.0]).unwrap();
        let csv = flow_csv(&curves);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("# mode=flow d=10 "));
        assert_eq!(lines[1], FLOW_HEADER);
        assert!(lines[2..].iter().all(|l| l.split(',').count() == 7));
    }

    #[test]
    fn zero_target_gives_zero_errors() {
        let mut c = tiny();
        c.set("target", "zero").unwrap();
        let curves = run_flow_experiment(&c).unwrap();
        for v in curves.train.iter().chain(&curves.test).flatten().chain(&curves.oracle) {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn metadata_parse_errors() {
        assert!(parse_metadata("mode=flow").is_err());
        assert!(parse_metadata("# a=1 a=2").is_err());
        assert!(parse_metadata("# novalue").is_err());
        assert!(parse_metadata("# =3").is_err());
        assert_eq!(parse_metadata("# a=1 b=x=y").unwrap()[1].1, "x=y");
    }

    #[test]
    fn svg_is_well_formed() {
        let x = [1.0, 10.0, 100.0];
        let y = [0.5, 0.25, f64::NAN];
        let s = svg_plot("a<b", "t", &[Series { label: "s", x: &x, y: &y, color: "red" }]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a&lt;b") && s.contains("1e1"));
        let empty = svg_plot("e", "t", &[]);
        assert!(empty.contains("</svg>"));
    }

    #[test]
    fn augment_cap_and_time_zero() {
        let relu = Activation::relu();
        assert!(matches!(augment_check(50, 41, &relu, 10, &[1.0], 0), Err(Error::MemoryCap { .. })));
        let r = augment_check(3, 1, &relu, 12, &[0.0, 1.0, 10.0], 5).unwrap();
        assert_eq!(r.discrepancy[0], 0.0);
        assert!(r.max_discrepancy <= 1e-8, "{}", r.max_discrepancy);
    }

    #[test]
    fn stepsize_homogeneity() {
        let a = stepsize_report(&Activation::relu(), 12, 6, 5, 3).unwrap();
        let b = stepsize_report(&Activation::relu().scaled(2.0), 12, 6, 5, 3).unwrap();
        assert!((b.lambda_bar_dot / a.lambda_bar_dot - 4.0).abs() < 1e-8);
        let ratio = a.augmented_ratio().unwrap();
        assert!((3.0..=9.0).contains(&ratio), "{ratio}");
        assert!(stepsize_report(&Activation::relu(), 12, 6, 0, 3).is_err());
    }
}
