//! Field, separation and time scans built from ensemble runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::{AtomicStructure, Branch};
use crate::ensemble::{run_ensemble, EnsembleResult, ShotConfig, Simulator};
use crate::error::{Error, Result};

use super::fit::{lorentzian_fit, powerlaw_fit, FitResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanAxis {
    /// V/cm
    Field,
    /// µm
    Separation,
    /// µs
    Time,
}

impl ScanAxis {
    pub fn column(self) -> &'static str {
        match self {
            ScanAxis::Field => "field_v_per_cm",
            ScanAxis::Separation => "separation_um",
            ScanAxis::Time => "time_us",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub axis: ScanAxis,
    pub values: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Shots that entered each point's average.
    pub shots: Vec<usize>,
    pub config: ShotConfig,
    pub warnings: Vec<String>,
}

impl ScanResult {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Axis value, mean, stderr, shots per row, preceded by `#` header lines
    /// with the config hash and seed. Floats use the shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# config_hash={}\n# seed={}\n", self.config.hash(), self.config.seed);
        out.push_str(&format!("{},mean,stderr,shots\n", self.axis.column()));
        for i in 0..self.len() {
            out.push_str(&format!("{:?},{:?},{:?},{}\n", self.values[i], self.mean[i], self.stderr[i], self.shots[i]));
        }
        out
    }

    fn from_time_series(config: ShotConfig, r: EnsembleResult) -> Self {
        ScanResult {
            axis: ScanAxis::Time,
            shots: vec![r.shots; r.times.len()],
            values: r.times,
            mean: r.mean,
            stderr: r.stderr,
            config,
            warnings: r.warnings,
        }
    }
}

fn check_axis(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Domain(format!("{what} scan needs at least one point")));
    }
    if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(format!("{what} values must be finite and strictly increasing")));
    }
    Ok(())
}

/// One ensemble per configuration. Points share the base seed, so every point
/// sees the same sequence of clouds.
fn run_points(
    configs: Vec<ShotConfig>,
    structure: Option<&AtomicStructure<f64>>,
    shots: usize,
    workers: usize,
) -> Result<Vec<EnsembleResult>> {
    let sims = configs
        .into_iter()
        .map(|c| Simulator::new(c, structure))
        .collect::<Result<Vec<_>>>()?;
    let run = || sims.par_iter().map(|s| run_ensemble(s, shots, 1)).collect::<Result<Vec<_>>>();
    if workers == 1 {
        sims.iter().map(|s| run_ensemble(s, shots, 1)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Resource(format!("thread pool: {e}")))?;
        pool.install(run)
    }
}

fn single_time_scan(
    axis: ScanAxis,
    values: &[f64],
    base: &ShotConfig,
    configs: Vec<ShotConfig>,
    structure: Option<&AtomicStructure<f64>>,
    shots: usize,
    workers: usize,
) -> Result<ScanResult> {
    let results = run_points(configs, structure, shots, workers)?;
    let mut warnings = Vec::new();
    for (v, r) in values.iter().zip(&results) {
        warnings.extend(r.warnings.iter().map(|w| format!("{}={v}: {w}", axis.column())));
    }
    Ok(ScanResult {
        axis,
        values: values.to_vec(),
        mean: results.iter().map(|r| r.mean[0]).collect(),
        stderr: results.iter().map(|r| r.stderr[0]).collect(),
        shots: results.iter().map(|r| r.shots).collect(),
        config: base.clone(),
        warnings,
    })
}

/// Transferred fraction at `t_us` against field.
pub fn field_scan(
    base: &ShotConfig,
    fields: &[f64],
    t_us: f64,
    structure: Option<&AtomicStructure<f64>>,
    shots: usize,
    workers: usize,
) -> Result<ScanResult> {
    check_axis(fields, "field")?;
    let mut base = base.clone();
    base.times_us = vec![t_us];
    let configs = fields
        .iter()
        .map(|&f| {
            let mut c = base.clone();
            c.field_v_per_cm = f;
            c
        })
        .collect();
    single_time_scan(ScanAxis::Field, fields, &base, configs, structure, shots, workers)
}

/// Transferred fraction at `t_us` against separation of the volume centres
/// along the field axis (negative values put the s volume on the +x side).
pub fn position_scan(
    base: &ShotConfig,
    separations: &[f64],
    t_us: f64,
    structure: Option<&AtomicStructure<f64>>,
    shots: usize,
    workers: usize,
) -> Result<ScanResult> {
    check_axis(separations, "separation")?;
    let mut base = base.clone();
    base.times_us = vec![t_us];
    let configs = separations
        .iter()
        .map(|&d| {
            let mut c = base.clone();
            c.set_separation(d);
            c
        })
        .collect();
    single_time_scan(ScanAxis::Separation, separations, &base, configs, structure, shots, workers)
}

/// One time series per separation on the base config's time grid.
pub fn time_scan(
    base: &ShotConfig,
    separations: &[f64],
    structure: Option<&AtomicStructure<f64>>,
    shots: usize,
    workers: usize,
) -> Result<Vec<ScanResult>> {
    if base.times_us.first() != Some(&0.0) {
        return Err(Error::Domain("time scan grid must start at t = 0".into()));
    }
    if separations.is_empty() {
        return Err(Error::Domain("time scan needs at least one separation".into()));
    }
    let configs: Vec<ShotConfig> = separations
        .iter()
        .map(|&d| {
            let mut c = base.clone();
            c.set_separation(d);
            c
        })
        .collect();
    let results = run_points(configs.clone(), structure, shots, workers)?;
    Ok(configs
        .into_iter()
        .zip(results)
        .map(|(c, r)| ScanResult::from_time_series(c, r))
        .collect())
}

pub const RATE_THRESHOLD: f64 = 0.17;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    /// First crossing time in µs; `None` when the curve never reaches the threshold.
    pub tau_us: Option<f64>,
}

impl Rate {
    /// 1/τ in MHz.
    pub fn rate_mhz(&self) -> Option<f64> {
        self.tau_us.map(|t| 1.0 / t)
    }

    pub fn censored(&self) -> bool {
        self.tau_us.is_none()
    }
}

/// First upward crossing of `threshold`, linearly interpolated between the
/// bracketing grid points.
pub fn rate_extraction(scan: &ScanResult, threshold: f64) -> Rate {
    let (t, p) = (&scan.values, &scan.mean);
    if p.first().is_some_and(|&p0| p0 >= threshold) {
        return Rate { tau_us: Some(t[0]).filter(|t0| *t0 > 0.0) };
    }
    let tau = (1..t.len()).find(|&i| p[i] >= threshold).map(|i| {
        let f = (threshold - p[i - 1]) / (p[i] - p[i - 1]);
        t[i - 1] + f * (t[i] - t[i - 1])
    });
    Rate { tau_us: tau }
}

/// Full period of an oscillating curve that starts at a minimum: spacing of
/// the first two maxima, or twice the first maximum when only one is on the
/// grid. Maxima are refined by a parabola through the three grid points.
pub fn oscillation_period(times: &[f64], values: &[f64]) -> Option<f64> {
    let peaks: Vec<f64> = (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .map(|i| {
            let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
            let h = times[i + 1] - times[i];
            let den = a - 2.0 * b + c;
            let shift = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            times[i] + shift * h
        })
        .collect();
    match peaks.as_slice() {
        [] => None,
        [only] => Some(2.0 * (only - times[0])),
        [first, second, ..] => Some(second - first),
    }
}

/// Quadrature width used to turn a centre separation into an effective
/// distance: the Gaussian σ of the s-d relative coordinate along the
/// separation axis, √(σ_s² + σ_d²).
pub fn convolved_width(config: &ShotConfig) -> f64 {
    let a = config.s_volume.widths[0];
    let b = config.d_volume.widths[0];
    (a * a + b * b).sqrt() / 2.0
}

/// √(d² + w²).
pub fn effective_distance(d: f64, w: f64) -> f64 {
    (d * d + w * w).sqrt()
}

/// Independent single-peak Lorentzians for the two branches. Each window is
/// centred on the branch resonance and reaches halfway to the other one.
pub fn fit_branch_peaks(scan: &ScanResult) -> Result<[(Branch, FitResult); 2]> {
    if scan.axis != ScanAxis::Field {
        return Err(Error::Domain("branch peaks need a field scan".into()));
    }
    let stark = &scan.config.stark;
    let f1 = stark.resonance_field(Branch::F1)?;
    let f2 = stark.resonance_field(Branch::F2)?;
    let half = (f2 - f1).abs() / 2.0;
    let fit = |centre: f64| {
        let idx: Vec<usize> = (0..scan.len()).filter(|&i| (scan.values[i] - centre).abs() <= half).collect();
        let x: Vec<f64> = idx.iter().map(|&i| scan.values[i]).collect();
        let y: Vec<f64> = idx.iter().map(|&i| scan.mean[i]).collect();
        let s: Vec<f64> = idx.iter().map(|&i| scan.stderr[i]).collect();
        let weighted = s.iter().any(|v| *v > 0.0);
        lorentzian_fit(&x, &y, weighted.then_some(s.as_slice()))
    };
    Ok([(Branch::F1, fit(f1)?), (Branch::F2, fit(f2)?)])
}

/// Power law through (|d|, mean) for the points with |d| inside `window`.
pub fn wing_fit(scan: &ScanResult, window: (f64, f64)) -> Result<FitResult> {
    let x: Vec<f64> = scan.values.iter().map(|d| d.abs()).collect();
    powerlaw_fit(&x, &scan.mean, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::ReactionLevels;
    use crate::ensemble::{ChannelDipoles, NoiseModel};

    fn dipoles() -> ChannelDipoles {
        let rb = AtomicStructure::<f64>::rubidium85();
        ChannelDipoles::from_structure(&rb, ReactionLevels::rubidium_49s_41d()).unwrap()
    }

    fn synthetic(values: Vec<f64>, mean: Vec<f64>) -> ScanResult {
        let n = values.len();
        ScanResult {
            axis: ScanAxis::Time,
            values,
            mean,
            stderr: vec![0.0; n],
            shots: vec![1; n],
            config: ShotConfig::standard(0.0, dipoles()),
            warnings: vec![],
        }
    }

    #[test]
    fn rate_of_sin_squared() {
        let t: Vec<f64> = (0..=2500).map(|k| k as f64 * 0.01).collect();
        let p: Vec<f64> = t.iter().map(|t| (t / 10.0).sin().powi(2)).collect();
        let r = rate_extraction(&synthetic(t, p), 0.17);
        let exact = 10.0 * 0.17f64.sqrt().asin();
        // linear interpolation on a 0.01 µs grid
        assert!((r.tau_us.unwrap() - exact).abs() < 1e-5);
        assert!((r.rate_mhz().unwrap() - 1.0 / exact).abs() < 1e-6);
    }

    #[test]
    fn period_of_sampled_rabi_curve() {
        let t: Vec<f64> = (0..=60).map(|k| k as f64 * 0.5).collect();
        let p: Vec<f64> = t.iter().map(|t| (std::f64::consts::PI * t / 14.5).sin().powi(2)).collect();
        assert!((oscillation_period(&t, &p).unwrap() - 14.5).abs() < 0.05);
        let short: Vec<f64> = t[..31].to_vec();
        assert!((oscillation_period(&short, &p[..31]).unwrap() - 14.5).abs() < 0.05);
        assert_eq!(oscillation_period(&t[..5], &p[..5]), None);
    }

    #[test]
    fn censored_rate() {
        let r = rate_extraction(&synthetic(vec![0.0, 1.0, 2.0], vec![0.0, 0.1, 0.16]), 0.17);
        assert!(r.censored() && r.rate_mhz().is_none());
    }

    #[test]
    fn time_scan_starts_at_zero() {
        let mut c = ShotConfig::standard(20.0, dipoles());
        c.times_us = vec![0.0, 5.0, 10.0];
        let scans = time_scan(&c, &[20.0, 50.0], None, 20, 1).unwrap();
        for s in &scans {
            assert_eq!(s.mean[0], 0.0);
        }
        c.times_us = vec![1.0, 2.0];
        assert!(time_scan(&c, &[20.0], None, 1, 1).is_err());
    }

    #[test]
    fn coupling_off_is_flat() {
        let mut c = ShotConfig::standard(0.0, dipoles());
        c.dipoles = ChannelDipoles { f1: [0.0, 0.0], f2: [0.0, 0.0] };
        c.noise = NoiseModel::quiet();
        let fields: Vec<f64> = (0..8).map(|k| 0.36 + 0.01 * k as f64).collect();
        let s = field_scan(&c, &fields, 10.0, None, 20, 2).unwrap();
        assert!(s.mean.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn scan_axis_must_increase() {
        let c = ShotConfig::standard(0.0, dipoles());
        assert!(field_scan(&c, &[0.4, 0.38], 10.0, None, 1, 1).is_err());
        assert!(position_scan(&c, &[], 10.0, None, 1, 1).is_err());
    }

    #[test]
    fn scans_independent_of_workers() {
        let c = ShotConfig::standard(0.0, dipoles());
        let d = [-30.0, 0.0, 30.0];
        let a = position_scan(&c, &d, 10.0, None, 30, 1).unwrap();
        let b = position_scan(&c, &d, 10.0, None, 30, 4).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn effective_distance_quadrature() {
        let c = ShotConfig::standard(0.0, dipoles());
        let w = convolved_width(&c);
        assert!((w - (11.6f64.powi(2) + 16.3f64.powi(2)).sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(effective_distance(30.0, 40.0), 50.0);
    }
}
