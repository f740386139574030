//! Lorentzian and power-law least squares.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitModel {
    Lorentzian,
    PowerLaw,
}

/// Lorentzian parameters are `[center, fwhm, amplitude, offset]`; power-law
/// parameters are `[exponent, prefactor]` for y = prefactor·x^exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub params: Vec<f64>,
    pub stderr: Vec<f64>,
    /// √(Σ weighted residual²)
    pub residual_norm: f64,
    pub converged: bool,
    /// Data carry no usable peak (or too few points to constrain it).
    pub degenerate: bool,
    pub iterations: usize,
}

impl FitResult {
    /// Converged and not degenerate.
    pub fn reliable(&self) -> bool {
        self.converged && !self.degenerate
    }

    pub fn center(&self) -> f64 {
        self.params[0]
    }

    pub fn fwhm(&self) -> f64 {
        self.params[1]
    }

    pub fn amplitude(&self) -> f64 {
        self.params[2]
    }

    pub fn offset(&self) -> f64 {
        self.params[3]
    }

    pub fn exponent(&self) -> f64 {
        self.params[0]
    }

    pub fn prefactor(&self) -> f64 {
        self.params[1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.model {
            FitModel::Lorentzian => lorentzian(&Vector4::from_column_slice(&self.params), x),
            FitModel::PowerLaw => self.prefactor() * x.powf(self.exponent()),
        }
    }
}

fn lorentzian(p: &Vector4<f64>, x: f64) -> f64 {
    let hw = p[1] / 2.0;
    p[3] + p[2] * hw * hw / ((x - p[0]).powi(2) + hw * hw)
}

/// ∂model/∂(x0, Γ, A, c)
fn lorentzian_grad(p: &Vector4<f64>, x: f64) -> Vector4<f64> {
    let hw = p[1] / 2.0;
    let dx = x - p[0];
    let den = dx * dx + hw * hw;
    let shape = hw * hw / den;
    Vector4::new(
        p[2] * shape * 2.0 * dx / den,
        p[2] * (hw / den - hw.powi(3) / (den * den)),
        shape,
        1.0,
    )
}

pub const LM_MAX_ITERATIONS: usize = 200;

/// Damped Gauss-Newton (Levenberg-Marquardt) fit of
/// offset + A·(Γ/2)²/((x − x₀)² + (Γ/2)²), started from every data abscissa
/// as x₀ and a few widths. `sigma` weights the residuals when given.
pub fn lorentzian_fit(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<FitResult> {
    let n = x.len();
    if n != y.len() || sigma.is_some_and(|s| s.len() != n) {
        return Err(Error::Domain("fit inputs differ in length".into()));
    }
    if n < 6 {
        return Err(Error::Domain(format!("Lorentzian fit needs at least 6 points, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("fit data must be finite".into()));
    }
    let w: Vec<f64> = match sigma {
        // zero errors would give infinite weight; floor them at the smallest positive one
        Some(s) => {
            let floor = s.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
            let floor = if floor.is_finite() { floor } else { 1.0 };
            s.iter().map(|v| 1.0 / v.max(floor)).collect()
        }
        None => vec![1.0; n],
    };
    let (xmin, xmax) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (xmax - xmin).max(f64::MIN_POSITIVE);
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let yscale = (ymax - ymin).abs().max(ymax.abs()).max(1e-300);

    if ymax - ymin <= 1e-12 * yscale {
        // flat: the peak shape is unidentifiable
        let c = y.iter().sum::<f64>() / n as f64;
        return Ok(FitResult {
            model: FitModel::Lorentzian,
            params: vec![0.5 * (xmin + xmax), span, 0.0, c],
            stderr: vec![f64::INFINITY, f64::INFINITY, 0.0, 0.0],
            residual_norm: weighted_ssr(x, y, &w, &Vector4::new(0.0, span, 0.0, c)).sqrt(),
            converged: true,
            degenerate: true,
            iterations: 0,
        });
    }

    let mut best: Option<(f64, Vector4<f64>, bool, usize)> = None;
    let mut sorted_x = x.to_vec();
    sorted_x.sort_by(f64::total_cmp);
    sorted_x.dedup();
    for &x0 in &sorted_x {
        for frac in [0.05, 0.15, 0.4] {
            let start = Vector4::new(x0, span * frac, ymax - ymin, ymin);
            let (p, ssr, conv, it) = levenberg_marquardt(x, y, &w, start);
            if best.as_ref().is_none_or(|b| ssr < b.0) {
                best = Some((ssr, p, conv, it));
            }
        }
    }
    let (ssr, mut p, converged, iterations) = best.expect("at least one start");
    p[1] = p[1].abs();

    let dof = n.saturating_sub(4).max(1) as f64;
    let mut jtj = Matrix4::zeros();
    for i in 0..n {
        let g = lorentzian_grad(&p, x[i]) * w[i];
        jtj += g * g.transpose();
    }
    let s2 = if sigma.is_some() { 1.0 } else { ssr / dof };
    let (stderr, singular) = match jtj.try_inverse() {
        Some(cov) => ((0..4).map(|k| (cov[(k, k)].max(0.0) * s2).sqrt()).collect::<Vec<_>>(), false),
        None => (vec![f64::INFINITY; 4], true),
    };
    let degenerate = singular
        || !(p[1] > 0.0)
        || p[2].abs() <= 1e-9 * yscale
        || p[1] > 1e3 * span
        || stderr.iter().any(|s| !s.is_finite());
    Ok(FitResult {
        model: FitModel::Lorentzian,
        params: p.iter().copied().collect(),
        stderr,
        residual_norm: ssr.sqrt(),
        converged,
        degenerate,
        iterations,
    })
}

fn weighted_ssr(x: &[f64], y: &[f64], w: &[f64], p: &Vector4<f64>) -> f64 {
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((&xi, &yi), &wi)| ((yi - lorentzian(p, xi)) * wi).powi(2))
        .sum()
}

fn levenberg_marquardt(x: &[f64], y: &[f64], w: &[f64], start: Vector4<f64>) -> (Vector4<f64>, f64, bool, usize) {
    let mut p = start;
    let mut ssr = weighted_ssr(x, y, w, &p);
    let mut lambda = 1e-3;
    for it in 1..=LM_MAX_ITERATIONS {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for i in 0..x.len() {
            let g = lorentzian_grad(&p, x[i]) * w[i];
            let r = (y[i] - lorentzian(&p, x[i])) * w[i];
            jtj += g * g.transpose();
            jtr += g * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let trial_ssr = weighted_ssr(x, y, w, &trial);
            if trial_ssr.is_finite() && trial_ssr <= ssr {
                let rel = (ssr - trial_ssr) / ssr.max(1e-300);
                let small_step = step.iter().zip(trial.iter()).all(|(s, v)| s.abs() <= 1e-12 * v.abs().max(1e-12));
                p = trial;
                ssr = trial_ssr;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if rel < 1e-15 || small_step || ssr == 0.0 {
                    return (p, ssr, true, it);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step at any damping: stationary point
            return (p, ssr, lambda < 1e20, it);
        }
    }
    (p, ssr, false, LM_MAX_ITERATIONS)
}

/// Regression of ln y on ln x over the points with `window.0 <= x <= window.1`.
pub fn powerlaw_fit(x: &[f64], y: &[f64], window: (f64, f64)) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::Domain("fit inputs differ in length".into()));
    }
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(&xi, _)| xi >= window.0 && xi <= window.1)
        .map(|(&a, &b)| (a, b))
        .collect();
    if let Some(bad) = pts.iter().find(|(a, b)| !(*a > 0.0) || !(*b > 0.0)) {
        return Err(Error::Domain(format!("power-law fit needs positive data, got ({}, {})", bad.0, bad.1)));
    }
    if pts.len() < 2 {
        return Err(Error::Domain(format!(
            "power-law fit needs at least 2 points in the window, got {}",
            pts.len()
        )));
    }
    let n = pts.len();
    let design = DMatrix::from_fn(n, 2, |i, k| if k == 0 { pts[i].0.ln() } else { 1.0 });
    let rhs = DVector::from_iterator(n, pts.iter().map(|p| p.1.ln()));
    let normal = design.transpose() * &design;
    let cov = normal
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("power-law fit needs at least two distinct x values".into()))?;
    let beta = &cov * design.transpose() * &rhs;
    let resid = &rhs - &design * &beta;
    let ssr = resid.norm_squared();
    let s2 = if n > 2 { ssr / (n - 2) as f64 } else { 0.0 };
    let se_slope = (cov[(0, 0)] * s2).sqrt();
    let se_log_pref = (cov[(1, 1)] * s2).sqrt();
    let prefactor = beta[1].exp();
    Ok(FitResult {
        model: FitModel::PowerLaw,
        params: vec![beta[0], prefactor],
        stderr: vec![se_slope, prefactor * se_log_pref],
        residual_norm: ssr.sqrt(),
        converged: true,
        degenerate: n == 2,
        iterations: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn synth(x0: f64, g: f64, a: f64, c: f64, xs: &[f64]) -> Vec<f64> {
        let p = Vector4::new(x0, g, a, c);
        xs.iter().map(|&x| lorentzian(&p, x)).collect()
    }

    #[test]
    fn exact_lorentzian_round_trip() {
        let xs: Vec<f64> = (0..41).map(|k| 0.34 + k as f64 * 0.002).collect();
        let ys = synth(0.38, 0.02, 0.3, 0.05, &xs);
        let f = lorentzian_fit(&xs, &ys, None).unwrap();
        assert!(f.reliable());
        for (got, want) in f.params.iter().zip([0.38, 0.02, 0.3, 0.05]) {
            assert!((got - want).abs() < 1e-6, "{:?}", f.params);
        }
    }

    #[test]
    fn flat_data_is_degenerate() {
        let xs: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let f = lorentzian_fit(&xs, &[0.1; 10], None).unwrap();
        assert!(f.degenerate);
        assert!(f.amplitude().abs() < 1e-12);
        assert!(!f.reliable());
    }

    #[test]
    fn too_few_points() {
        assert!(lorentzian_fit(&[1.0, 2.0, 3.0], &[0.0, 1.0, 0.0], None).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = Vector4::new(0.4, 0.03, 0.7, 0.1);
        for x in [0.35, 0.39, 0.41, 0.5] {
            let g = lorentzian_grad(&p, x);
            for k in 0..4 {
                let h = 1e-7 * p[k].abs().max(1e-3);
                let mut up = p;
                let mut dn = p;
                up[k] += h;
                dn[k] -= h;
                let fd = (lorentzian(&up, x) - lorentzian(&dn, x)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-5 * fd.abs().max(1.0), "k={k}");
            }
        }
    }

    #[test]
    fn exact_power_law() {
        let xs = [20.0, 30.0, 40.0, 50.0, 60.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.powf(-5.0)).collect();
        let f = powerlaw_fit(&xs, &ys, (0.0, f64::INFINITY)).unwrap();
        assert!((f.exponent() + 5.0).abs() < 1e-9);
        assert!((f.prefactor() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noisy_power_law_oracle() {
        // 5% multiplicative noise, 12 distances from 20 to 75 µm
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let xs: Vec<f64> = (0..12).map(|k| 20.0 + 5.0 * k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-2.5) * (1.0 + noise.sample(&mut rng))).collect();
        let f = powerlaw_fit(&xs, &ys, (0.0, f64::INFINITY)).unwrap();
        assert!((f.exponent() + 2.5).abs() < 0.1, "{}", f.exponent());
        assert!(f.stderr[0] > 0.0 && f.stderr[0] < 0.1);
    }

    #[test]
    fn power_law_domain_errors() {
        assert!(powerlaw_fit(&[10.0], &[1.0], (0.0, 100.0)).is_err());
        assert!(powerlaw_fit(&[10.0, 20.0], &[1.0, 0.0], (0.0, 100.0)).is_err());
        // points outside the window are ignored, including nonpositive ones
        assert!(powerlaw_fit(&[1.0, 10.0, 20.0], &[-1.0, 1.0, 0.5], (5.0, 100.0)).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn refit_reproduces_parameters(x0 in 0.36..0.43f64, g in 0.005..0.04f64, a in 0.05..0.5f64, c in 0.0..0.1f64) {
            let xs: Vec<f64> = (0..31).map(|k| 0.33 + k as f64 * 0.005).collect();
            // slightly perturbed data, then fit, regenerate and refit
            let ys: Vec<f64> = synth(x0, g, a, c, &xs).iter().enumerate().map(|(i, y)| y * (1.0 + 0.01 * ((i * 7) % 5) as f64 / 5.0)).collect();
            let first = lorentzian_fit(&xs, &ys, None).unwrap();
            prop_assume!(first.reliable());
            let regen: Vec<f64> = xs.iter().map(|&x| first.eval(x)).collect();
            let second = lorentzian_fit(&xs, &regen, None).unwrap();
            for (p, q) in first.params.iter().zip(&second.params) {
                prop_assert!((p - q).abs() <= 0.01 * p.abs().max(1e-3));
            }
        }
    }
}
