//! Parallel shot loop and ensemble averaging.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::ensemble::shot::{ShotResult, Simulator};
use crate::error::{Error, Result};

/// Shot failures above this fraction fail the ensemble.
pub const MAX_FAILED_FRACTION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Shots that entered the average.
    pub shots: usize,
    pub failed: usize,
    /// Shots without any s-atom (no fraction defined).
    pub empty: usize,
    pub config_hash: String,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl EnsembleResult {
    /// CSV with `# key=value` header lines and columns
    /// `time_us,mean,stderr,shots`. Floats use the shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# config_hash={}", self.config_hash);
        let _ = writeln!(out, "# seed={}", self.seed);
        let _ = writeln!(out, "# failed={} empty={}", self.failed, self.empty);
        out.push_str("time_us,mean,stderr,shots\n");
        for i in 0..self.times.len() {
            let _ = writeln!(out, "{},{},{},{}", self.times[i], self.mean[i], self.stderr[i], self.shots);
        }
        out
    }

    /// Mean at the grid time closest to `t`.
    pub fn at(&self, t: f64) -> (f64, f64) {
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| k)
            .unwrap_or(0);
        (self.mean[k], self.stderr[k])
    }
}

/// Runs `shots` shots on `workers` threads (0 = all cores). Results are
/// combined in shot-index order, so the worker count never changes them.
pub fn run_ensemble(sim: &Simulator, shots: usize, workers: usize) -> Result<EnsembleResult> {
    if shots == 0 {
        return Err(Error::Config("need at least one shot".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Resource(format!("thread pool: {e}")))?;
    let results: Vec<Result<ShotResult>> =
        pool.install(|| (0..shots as u64).into_par_iter().map(|i| sim.run_shot(i)).collect());
    reduce(sim, results)
}

fn reduce(sim: &Simulator, results: Vec<Result<ShotResult>>) -> Result<EnsembleResult> {
    let cfg = sim.config();
    let total = results.len();
    let n_t = cfg.times_us.len();
    let mut sum = vec![0.0; n_t];
    let mut sum_sq = vec![0.0; n_t];
    let mut used = 0usize;
    let mut failed = 0usize;
    let mut empty = 0usize;
    let mut first_failure = None;
    let mut warnings = Vec::new();
    for r in results {
        match r {
            Ok(shot) => {
                warnings.extend(shot.warnings);
                if shot.atom_counts[0] == 0 {
                    empty += 1;
                    continue;
                }
                used += 1;
                for (k, p) in shot.p_fraction.iter().enumerate() {
                    sum[k] += p;
                    sum_sq[k] += p * p;
                }
            }
            Err(e) => {
                failed += 1;
                first_failure.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if failed as f64 > MAX_FAILED_FRACTION * total as f64 {
        return Err(Error::Ensemble {
            failed,
            total,
            first: first_failure.unwrap_or_default(),
        });
    }
    if failed > 0 {
        warnings.push(format!(
            "{failed} of {total} shots failed and were excluded (first: {})",
            first_failure.unwrap_or_default()
        ));
    }
    let n = used as f64;
    let mut mean = vec![0.0; n_t];
    let mut stderr = vec![0.0; n_t];
    if used > 0 {
        for k in 0..n_t {
            mean[k] = sum[k] / n;
            if used > 1 {
                let var = ((sum_sq[k] - n * mean[k] * mean[k]) / (n - 1.0)).max(0.0);
                stderr[k] = (var / n).sqrt();
            }
        }
    }
    Ok(EnsembleResult {
        times: cfg.times_us.clone(),
        mean,
        stderr,
        shots: used,
        failed,
        empty,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::{AtomicStructure, Branch, ReactionLevels};
    use crate::ensemble::config::{BranchSelection, ChannelDipoles, NoiseModel, ShotConfig, Truncation};
    use crate::hamiltonian::{ClosePairPolicy, ClosePairRule};

    fn dipoles() -> ChannelDipoles {
        let rb = AtomicStructure::<f64>::rubidium85();
        ChannelDipoles::from_structure(&rb, ReactionLevels::rubidium_49s_41d()).unwrap()
    }

    fn sim(c: ShotConfig) -> Simulator {
        Simulator::new(c, None).unwrap()
    }

    #[test]
    fn single_shot_matches_run_shot() {
        let s = sim(ShotConfig::standard(10.0, dipoles()));
        let e = run_ensemble(&s, 1, 1).unwrap();
        let shot = s.run_shot(0).unwrap();
        if shot.atom_counts[0] > 0 {
            assert_eq!(e.mean, shot.p_fraction);
            assert!(e.stderr.iter().all(|x| *x == 0.0));
        } else {
            assert_eq!(e.empty, 1);
        }
    }

    #[test]
    fn worker_count_does_not_change_bytes() {
        let s = sim(ShotConfig::standard(20.0, dipoles()));
        let one = run_ensemble(&s, 64, 1).unwrap().to_csv();
        for w in [2, 3, 8] {
            assert_eq!(run_ensemble(&s, 64, w).unwrap().to_csv(), one);
        }
    }

    #[test]
    fn stderr_scales_as_inverse_sqrt_shots() {
        let mut c = ShotConfig::standard(20.0, dipoles());
        c.times_us = vec![0.0, 10.0];
        let s = sim(c);
        let small = run_ensemble(&s, 200, 0).unwrap();
        let large = run_ensemble(&s, 800, 0).unwrap();
        let ratio = large.stderr[1] / small.stderr[1];
        assert!((ratio - 0.5).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn too_many_failures() {
        let mut c = ShotConfig::standard(0.0, dipoles());
        c.close_pairs = ClosePairRule { floor_um: 1e4, policy: ClosePairPolicy::Reject };
        let err = run_ensemble(&sim(c), 20, 1).unwrap_err();
        assert!(matches!(err, Error::Ensemble { .. }), "{err}");
    }

    #[test]
    fn few_failures_are_excluded() {
        let s = sim(ShotConfig::standard(0.0, dipoles()));
        let mut results: Vec<Result<ShotResult>> = (0..20).map(|i| s.run_shot(i)).collect();
        results[3] = Err(Error::Numerical("injected".into()));
        results[11] = Err(Error::Numerical("injected".into()));
        let r = reduce(&s, results).unwrap();
        assert_eq!(r.failed, 2);
        assert_eq!(r.shots + r.empty, 18);
        assert!(r.warnings.iter().any(|w| w.contains("injected")));
        let mut bad: Vec<Result<ShotResult>> = (0..20).map(|i| s.run_shot(i)).collect();
        for k in 0..3 {
            bad[k] = Err(Error::Numerical("injected".into()));
        }
        assert!(reduce(&s, bad).is_err());
    }

    #[test]
    fn empty_d_volume_ensemble_is_zero() {
        let mut c = ShotConfig::standard(0.0, dipoles());
        c.d_volume.mean_count = 0.0;
        let r = run_ensemble(&sim(c), 50, 0).unwrap();
        assert!(r.mean.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn csv_header() {
        let c = ShotConfig::standard(0.0, dipoles());
        let hash = c.hash();
        let csv = run_ensemble(&sim(c), 4, 1).unwrap().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), format!("# config_hash={hash}"));
        assert_eq!(lines.next().unwrap(), "# seed=1");
        assert!(csv.contains("time_us,mean,stderr,shots\n"));
    }

    #[test]
    fn signal_at_40um_above_baseline() {
        let mut c = ShotConfig::standard(40.0, dipoles());
        c.noise = NoiseModel::quiet();
        c.branches = BranchSelection::Only(Branch::F1);
        c.times_us = vec![10.0];
        let r = run_ensemble(&sim(c.clone()), 200, 0).unwrap();
        c.d_volume.mean_count = 0.0;
        let base = run_ensemble(&sim(c), 200, 0).unwrap();
        assert!(r.mean[0] > base.mean[0] + 3.0 * r.stderr[0], "{} vs {}", r.mean[0], base.mean[0]);
    }

    #[test]
    fn decreases_with_separation() {
        let mut c = ShotConfig::standard(0.0, dipoles());
        c.times_us = vec![10.0];
        let mut prev: Option<(f64, f64)> = None;
        for d in [25.0, 35.0, 45.0, 55.0, 65.0] {
            c.set_separation(d);
            let r = run_ensemble(&sim(c.clone()), 200, 0).unwrap();
            if let Some((m, se)) = prev {
                let tol = 3.0 * (se * se + r.stderr[0] * r.stderr[0]).sqrt();
                assert!(r.mean[0] <= m + tol, "d={d}: {} after {m}", r.mean[0]);
            }
            prev = Some((r.mean[0], r.stderr[0]));
        }
    }

    /// One s-atom on a line, d-atoms spread uniformly along a parallel line:
    /// the short-time transfer averages to ∝ t²/d⁵.
    #[test]
    fn line_average_law() {
        let mut c = ShotConfig::standard(0.0, dipoles());
        c.s_volume.widths = [0.01, 0.01, 0.01];
        c.s_volume.mean_count = 1.0;
        c.d_volume.widths = [0.01, 0.01, 600.0];
        c.d_volume.mean_count = 50.0;
        c.noise = NoiseModel::quiet();
        c.branches = BranchSelection::Only(Branch::F1);
        c.truncation = Truncation::Fixed { s: 1, d: 1000, spectators: 0 };
        // d-d hopping only enters at higher order; without it coincident d-atoms are harmless
        c.exchange = false;
        c.close_pairs = ClosePairRule { floor_um: 0.5, policy: ClosePairPolicy::Cap };
        c.times_us = vec![0.01];
        let ds = [20.0, 30.0, 40.0, 50.0, 60.0];
        let (mut x, mut y) = (vec![], vec![]);
        for d in ds {
            c.set_separation(d);
            let r = run_ensemble(&sim(c.clone()), 400, 0).unwrap();
            x.push(d.ln());
            y.push(r.mean[0].ln());
        }
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
            / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
        assert!((slope + 5.0).abs() < 0.2, "{slope}");
    }
}
