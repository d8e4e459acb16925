//! Closed-form population (oracle) gradient flow. Every degree-`k` component
//! of the target decays as `exp(-t xi_k)`.

use crate::error::{Error, Result};
use crate::kernels::KernelSpectrum;

/// Slack allowed when asserting monotone decay.
pub const MONOTONE_SLACK: f64 = 1e-12;

fn xi_at(spec: &KernelSpectrum, k: usize) -> f64 {
    spec.xi().get(k).copied().unwrap_or(0.0)
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("time {t} must be finite and >= 0")));
    }
    Ok(())
}

/// `R(f_t) = sum_k exp(-2 t xi_k) ‖P_k f‖^2 + sigma_eps^2`. Degrees beyond the
/// spectrum's truncation are treated as unlearnable.
pub fn oracle_risk(spec: &KernelSpectrum, norms: &[f64], sigma_eps2: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(norms
        .iter()
        .enumerate()
        .map(|(k, &nk)| (-2.0 * t * xi_at(spec, k)).exp() * nk)
        .sum::<f64>()
        + sigma_eps2)
}

/// `‖f_t - P_{<=j} f‖^2`.
pub fn oracle_l2_distance(spec: &KernelSpectrum, norms: &[f64], level: usize, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(norms
        .iter()
        .enumerate()
        .map(|(k, &nk)| {
            let decay = (-t * xi_at(spec, k)).exp();
            if k <= level {
                decay * decay * nk
            } else {
                // (1 - e^{-x})^2 without cancellation for small x.
                (-(-t * xi_at(spec, k)).exp_m1()).powi(2) * nk
            }
        })
        .sum())
}

/// `d/dt R` at time `t`, `-2 sum_k xi_k e^{-2 t xi_k} ‖P_k f‖^2`.
pub fn oracle_risk_derivative(spec: &KernelSpectrum, norms: &[f64], t: f64) -> f64 {
    -2.0 * norms
        .iter()
        .enumerate()
        .map(|(k, &nk)| {
            let x = xi_at(spec, k);
            x * (-2.0 * t * x).exp() * nk
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCurve {
    pub times: Vec<f64>,
    pub risk: Vec<f64>,
    pub l2_to_projection: Option<Vec<f64>>,
}

/// Checks that a time grid is non-empty, finite, nonnegative and strictly increasing.
pub fn validate_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    for &t in times {
        check_time(t)?;
    }
    if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!("time grid not increasing at {} -> {}", w[0], w[1])));
    }
    Ok(())
}

/// Log-spaced grid from `t_min` to `t_max` with `per_decade` points per decade
/// (both ends included).
pub fn log_time_grid(t_min: f64, t_max: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max > t_min && t_max.is_finite()) || per_decade == 0 {
        return Err(Error::InvalidInput(format!(
            "invalid log grid [{t_min}, {t_max}] with {per_decade} points per decade"
        )));
    }
    let (lo, hi) = (t_min.log10(), t_max.log10());
    let steps = ((hi - lo) * per_decade as f64).ceil().max(1.0) as usize;
    Ok((0..=steps).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / steps as f64)).collect())
}

/// Oracle risk over a grid, plus the distance to `P_{<=level} f` if requested.
pub fn oracle_curve(
    spec: &KernelSpectrum,
    norms: &[f64],
    sigma_eps2: f64,
    times: &[f64],
    level: Option<usize>,
) -> Result<OracleCurve> {
    validate_grid(times)?;
    let risk = times
        .iter()
        .map(|&t| oracle_risk(spec, norms, sigma_eps2, t))
        .collect::<Result<Vec<_>>>()?;
    if let Some(w) = risk.windows(2).find(|w| w[1] > w[0] + MONOTONE_SLACK) {
        return Err(Error::Numerical(format!("oracle risk increased from {} to {}", w[0], w[1])));
    }
    let l2_to_projection = level
        .map(|j| times.iter().map(|&t| oracle_l2_distance(spec, norms, j, t)).collect())
        .transpose()?;
    Ok(OracleCurve { times: times.to_vec(), risk, l2_to_projection })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::kernels::build_dot_kernel;
    use crate::spheredata::TargetFunction;

    fn staircase_setup(d: usize) -> (KernelSpectrum, Vec<f64>) {
        let spec = build_dot_kernel(&Activation::relu(), d, 30).unwrap();
        let norms = TargetFunction::staircase().degree_norms(d, 30).unwrap();
        (spec, norms)
    }

    #[test]
    fn endpoints() {
        let (spec, norms) = staircase_setup(50);
        let total: f64 = norms.iter().sum();
        assert!((oracle_risk(&spec, &norms, 0.1, 0.0).unwrap() - total - 0.1).abs() < 1e-15);
        assert!((oracle_risk(&spec, &norms, 0.1, 1e12).unwrap() - 0.1).abs() < 1e-12);
        assert!(oracle_risk(&spec, &norms, 0.0, -1.0).is_err());
    }

    #[test]
    fn staircase_plateaus_at_d400() {
        let d = 400.0f64;
        let (spec, norms) = staircase_setup(400);
        let above_one: f64 = norms[2..].iter().sum();
        let r = oracle_risk(&spec, &norms, 0.0, d.powf(1.5)).unwrap();
        assert!((r - above_one).abs() <= 0.1 * above_one, "{r} vs {above_one}");
        let drop = oracle_risk(&spec, &norms, 0.0, d.powf(0.5)).unwrap() - r;
        assert!((drop - 0.5).abs() <= 0.05, "{drop}");
        let total: f64 = norms.iter().sum();
        let dist = oracle_l2_distance(&spec, &norms, 1, d.powf(1.5)).unwrap();
        assert!(dist <= 0.15 * total, "{dist}");
    }

    #[test]
    fn l2_distance_at_time_zero() {
        let (spec, norms) = staircase_setup(30);
        let head: f64 = norms[..=3].iter().sum();
        assert!((oracle_l2_distance(&spec, &norms, 3, 0.0).unwrap() - head).abs() < 1e-15);
        let constant = [0.7];
        assert_eq!(oracle_l2_distance(&spec, &constant, 0, 0.0).unwrap(), 0.7);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let (spec, norms) = staircase_setup(40);
        let h = 1e-6;
        let fd = (oracle_risk(&spec, &norms, 0.0, 0.0).unwrap() - oracle_risk(&spec, &norms, 0.0, h).unwrap()) / h;
        let exact = -oracle_risk_derivative(&spec, &norms, 0.0);
        assert!((fd - exact).abs() <= 1e-6 * exact);
    }

    #[test]
    fn curves() {
        let (spec, norms) = staircase_setup(20);
        let grid = log_time_grid(1.0, 1e6, 12).unwrap();
        assert_eq!(grid.len(), 73);
        assert!((grid[72] - 1e6).abs() < 1e-6);
        let c = oracle_curve(&spec, &norms, 0.0, &grid, Some(1)).unwrap();
        assert!(c.risk.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK));
        assert_eq!(c.l2_to_projection.unwrap().len(), grid.len());

        let single = oracle_curve(&spec, &norms, 0.0, &[3.0], None).unwrap();
        assert_eq!(single.risk, vec![oracle_risk(&spec, &norms, 0.0, 3.0).unwrap()]);
        assert!(oracle_curve(&spec, &norms, 0.0, &[2.0, 1.0], None).is_err());
        assert!(oracle_curve(&spec, &norms, 0.0, &[], None).is_err());
    }

    #[test]
    fn constant_target_decays_to_noise() {
        let spec = build_dot_kernel(&Activation::relu(), 10, 10).unwrap();
        let norms = TargetFunction::RidgeHermite(vec![2.0]).degree_norms(10, 10).unwrap();
        let grid = log_time_grid(0.01, 1e4, 4).unwrap();
        let c = oracle_curve(&spec, &norms, 0.5, &grid, None).unwrap();
        assert!((c.risk[0] - 4.5).abs() < 0.1);
        assert!((c.risk.last().unwrap() - 0.5).abs() < 1e-12);
    }
}
