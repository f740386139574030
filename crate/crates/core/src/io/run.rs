//! Experiment dispatch, output files and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atomic::{AtomicStructure, Branch, ReactionLevels};
use crate::dynamics::{beat_period, evolve};
use crate::ensemble::{run_ensemble, ChannelDipoles, ShotConfig, Simulator, Truncation};
use crate::error::{Error, Result};
use crate::experiments::{
    convolved_width, effective_distance, field_scan, fit_branch_peaks, oscillation_period, position_scan,
    powerlaw_fit, rate_extraction, time_scan, wing_fit, FitResult,
};
use crate::hamiltonian::{
    assemble_hamiltonian, build_basis, pair_coupling, AtomSite, BasisOptions, CouplingChannel, Detuning, LevelScheme,
    SiteRole,
};

use super::config::{branch_label, Experiment, RunConfig};

pub const MANIFEST_NAME: &str = "manifest.json";

/// One output file, held in memory until everything has been computed.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileChecksum {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub artifact_version: String,
    pub files: Vec<FileChecksum>,
    pub warnings: Vec<String>,
    /// Seconds since the Unix epoch; the only time-dependent field of a run.
    pub created_unix_s: u64,
}

/// Computes, then writes the outputs and the manifest into `cfg.out_dir`.
pub fn run(cfg: &RunConfig, workers: usize) -> Result<RunManifest> {
    let out = execute(cfg, workers)?;
    write_outputs(&cfg.out_dir, cfg, &out)
}

/// All outputs of the configured experiment, without touching the disk.
pub fn execute(cfg: &RunConfig, workers: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let structure = AtomicStructure::<f64>::rubidium85();
    let levels = ReactionLevels::rubidium_49s_41d();
    let dipoles = ChannelDipoles::from_structure(&structure, levels)?;
    let stark = cfg.stark_model(&structure)?;
    let base = |d: f64| cfg.shot_config(d, stark, dipoles);
    let stem = format!("{}_{}_seed{}", cfg.experiment.name(), branch_label(cfg.branches), cfg.seed);
    let mut artifacts = Vec::new();
    let mut warnings = Vec::new();
    let mut report = report_header(cfg);

    match cfg.experiment {
        Experiment::Pair => {
            let (csv, text) = pair_experiment(cfg, &structure)?;
            artifacts.push(Artifact { name: format!("{stem}.csv"), contents: csv });
            report.push_str(&text);
        }
        Experiment::FieldScan => {
            for &d in &cfg.separations_um {
                let scan = field_scan(&base(d), &cfg.field_grid(), cfg.scan_time_us, Some(&structure), cfg.shots, workers)?;
                warnings.extend(scan.warnings.iter().cloned());
                artifacts.push(Artifact {
                    name: format!("{stem}_d{}um.csv", tag(d)),
                    contents: scan.to_csv(),
                });
                let _ = writeln!(report, "\nseparation {d} µm, t = {} µs", cfg.scan_time_us);
                match fit_branch_peaks(&scan) {
                    Ok(fits) => {
                        for (b, f) in fits.iter() {
                            let _ = writeln!(report, "  {} {}", b.name(), lorentzian_line(f));
                        }
                    }
                    Err(e) => {
                        let _ = writeln!(report, "  peak fits unavailable: {e}");
                    }
                }
            }
        }
        Experiment::PositionScan => {
            let scan = position_scan(
                &base(0.0),
                &cfg.position_grid(),
                cfg.scan_time_us,
                Some(&structure),
                cfg.shots,
                workers,
            )?;
            warnings.extend(scan.warnings.iter().cloned());
            artifacts.push(Artifact { name: format!("{stem}.csv"), contents: scan.to_csv() });
            let _ = writeln!(
                report,
                "\nfield {} V/cm, t = {} µs\nwing power law over {} ≤ |d| ≤ {} µm:",
                cfg.field_v_per_cm, cfg.scan_time_us, cfg.wing_min_um, cfg.wing_max_um
            );
            let _ = writeln!(report, "  {}", outcome(wing_fit(&scan, (cfg.wing_min_um, cfg.wing_max_um))));
        }
        Experiment::TimeScan => {
            let scans = time_scan(&base(0.0), &cfg.separations_um, Some(&structure), cfg.shots, workers)?;
            let w = convolved_width(&base(0.0));
            let mut rates = String::from("separation_um,effective_distance_um,tau_us,rate_mhz\n");
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (&d, scan) in cfg.separations_um.iter().zip(&scans) {
                warnings.extend(scan.warnings.iter().cloned());
                artifacts.push(Artifact {
                    name: format!("{stem}_d{}um.csv", tag(d)),
                    contents: scan.to_csv(),
                });
                let r = rate_extraction(scan, cfg.threshold);
                let d_eff = effective_distance(d, w);
                let show = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
                let _ = writeln!(rates, "{d:?},{d_eff:?},{},{}", show(r.tau_us), show(r.rate_mhz()));
                if let (Some(k), true) = (r.rate_mhz(), d >= cfg.rate_fit_min_um) {
                    xs.push(d_eff);
                    ys.push(k);
                }
            }
            artifacts.push(Artifact { name: format!("{stem}_rates.csv"), contents: rates });
            let _ = writeln!(
                report,
                "\nthreshold {}, effective distance √(d² + {w:.3}²) µm\nrate power law over d ≥ {} µm ({} uncensored points):",
                cfg.threshold,
                cfg.rate_fit_min_um,
                xs.len()
            );
            let _ = writeln!(report, "  {}", outcome(powerlaw_fit(&xs, &ys, (0.0, f64::INFINITY))));
        }
        Experiment::ConvergenceStudy => {
            let (csv, text, warn) = convergence_study(cfg, base(cfg.separation_um), &structure, workers)?;
            artifacts.push(Artifact { name: format!("{stem}.csv"), contents: csv });
            report.push_str(&text);
            warnings.extend(warn);
        }
    }
    if !warnings.is_empty() {
        let _ = writeln!(report, "\n{} warnings (see manifest)", warnings.len());
    }
    artifacts.push(Artifact { name: format!("{stem}_fits.txt"), contents: report });
    Ok(RunOutput { artifacts, warnings })
}

/// `20`, `-7.5` → `20`, `m7.5`
fn tag(d: f64) -> String {
    let s = format!("{}", d.abs());
    if d < 0.0 {
        format!("m{s}")
    } else {
        s
    }
}

fn report_header(cfg: &RunConfig) -> String {
    format!(
        "experiment {}\nconfig_hash {}\nseed {}\nshots {}\n",
        cfg.experiment.name(),
        cfg.hash(),
        cfg.seed,
        cfg.shots
    )
}

fn lorentzian_line(f: &FitResult) -> String {
    format!(
        "center {:.6} ± {:.6} V/cm, FWHM {:.3} ± {:.3} mV/cm, amplitude {:.4} ± {:.4}, offset {:.4}{}",
        f.center(),
        f.stderr[0],
        1e3 * f.fwhm(),
        1e3 * f.stderr[1],
        f.amplitude(),
        f.stderr[2],
        f.offset(),
        if f.reliable() { "" } else { " [unreliable]" }
    )
}

fn outcome(fit: Result<FitResult>) -> String {
    match fit {
        Ok(f) => format!(
            "exponent {:.4} ± {:.4}, prefactor {:.6e}{}",
            f.exponent(),
            f.stderr[0],
            f.prefactor(),
            if f.degenerate { " [two points, no error estimate]" } else { "" }
        ),
        Err(e) => format!("fit unavailable: {e}"),
    }
}

/// Resonant s-d pair at `pair_distance`, separated along the field axis.
fn pair_experiment(cfg: &RunConfig, structure: &AtomicStructure<f64>) -> Result<(String, String)> {
    let branch = match cfg.branches {
        crate::ensemble::BranchSelection::Only(b) => b,
        crate::ensemble::BranchSelection::Both => Branch::F1,
    };
    let channel = CouplingChannel::from_structure(structure, ReactionLevels::rubidium_49s_41d(), branch)?;
    let scheme = std::sync::Arc::new(LevelScheme::scalar(&channel));
    let r = cfg.pair_distance_um;
    let sites = [
        AtomSite::new([0.0, 0.0, 0.0], SiteRole::S),
        AtomSite::new([r, 0.0, 0.0], SiteRole::D),
    ];
    let basis = build_basis(&sites, &scheme, &BasisOptions::default())?;
    let rule = crate::hamiltonian::ClosePairRule {
        floor_um: cfg.close_pair_floor_um,
        policy: cfg.close_pair_policy,
    };
    let problem = assemble_hamiltonian(&sites, scheme, basis, &Detuning::uniform(0.0), &[0.0; 2], &rule, true)?;
    let times = cfg.time_grid();
    let evo = evolve(&problem, &times)?;
    let p = evo.probability_of(&problem.site_upper_mask(0));
    let mut csv = format!("# config_hash={}\n# seed={}\ntime_us,p_fraction\n", cfg.hash(), cfg.seed);
    for (t, v) in times.iter().zip(&p) {
        let _ = writeln!(csv, "{t:?},{v:?}");
    }
    let v = pair_coupling(&sites[0].position, &sites[1].position, channel.mu_s, channel.mu_d, &rule)?;
    let mut text = format!(
        "\npair at {r} µm along the field, branch {}\n  dipoles {:.2} and {:.2} a0 e\n  coupling {:.6} MHz, beat period 1/(2|V|) = {:.4} µs\n",
        branch.name(),
        channel.mu_s,
        channel.mu_d,
        v,
        beat_period(v.abs())
    );
    match oscillation_period(&times, &p) {
        Some(t) => {
            let _ = writeln!(text, "  period read off the grid {t:.4} µs");
        }
        None => text.push_str("  no full oscillation on the time grid\n"),
    }
    Ok((csv, text))
}

fn convergence_study(
    cfg: &RunConfig,
    base: ShotConfig,
    structure: &AtomicStructure<f64>,
    workers: usize,
) -> Result<(String, String, Vec<String>)> {
    let mut fixed = base.clone();
    fixed.truncation = Truncation::Fixed {
        s: cfg.truncation_s,
        d: cfg.truncation_d,
        spectators: cfg.truncation_spectators,
    };
    let mut conv = base;
    conv.truncation = Truncation::Convergence {
        tolerance: cfg.convergence_tolerance,
        cap: cfg.convergence_cap,
    };
    let a = run_ensemble(&Simulator::new(fixed, Some(structure))?, cfg.shots, workers)?;
    let b = run_ensemble(&Simulator::new(conv, Some(structure))?, cfg.shots, workers)?;
    let mut csv = format!(
        "# config_hash={}\n# seed={}\ntime_us,fixed_mean,fixed_stderr,converged_mean,converged_stderr\n",
        cfg.hash(),
        cfg.seed
    );
    let mut worst: f64 = 0.0;
    for k in 0..a.times.len() {
        let _ = writeln!(
            csv,
            "{:?},{:?},{:?},{:?},{:?}",
            a.times[k], a.mean[k], a.stderr[k], b.mean[k], b.stderr[k]
        );
        worst = worst.max((a.mean[k] - b.mean[k]).abs());
    }
    let text = format!(
        "\nseparation {} µm\n  fixed ({} s, {} d, {} spectators) vs convergence (tolerance {}, cap {})\n  largest difference of the mean curves {:.5}\n  shots that hit the cap {}\n",
        cfg.separation_um,
        cfg.truncation_s,
        cfg.truncation_d,
        cfg.truncation_spectators,
        cfg.convergence_tolerance,
        cfg.convergence_cap,
        worst,
        b.warnings.len()
    );
    let mut warnings = a.warnings;
    warnings.extend(b.warnings);
    Ok((csv, text, warnings))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes every artifact and the manifest through temporary files that are
/// renamed once all of them are on disk. On failure nothing is left behind.
pub fn write_outputs(dir: &Path, cfg: &RunConfig, out: &RunOutput) -> Result<RunManifest> {
    let manifest = RunManifest {
        experiment: cfg.experiment.name().to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        files: out
            .artifacts
            .iter()
            .map(|a| FileChecksum {
                name: a.name.clone(),
                sha256: sha256_hex(a.contents.as_bytes()),
            })
            .collect(),
        warnings: out.warnings.clone(),
        created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";

    let created_dir = !dir.exists();
    fs::create_dir_all(dir)?;
    let mut files: Vec<(&str, &str)> = out.artifacts.iter().map(|a| (a.name.as_str(), a.contents.as_str())).collect();
    files.push((MANIFEST_NAME, &manifest_json));

    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let result = (|| -> Result<()> {
        for (name, contents) in &files {
            let tmp = dir.join(format!(".{name}.tmp"));
            staged.push((tmp.clone(), dir.join(name)));
            fs::write(&tmp, contents)?;
        }
        for (tmp, dst) in &staged {
            fs::rename(tmp, dst)?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        for (tmp, dst) in &staged {
            let _ = fs::remove_file(tmp);
            let _ = fs::remove_file(dst);
        }
        if created_dir {
            let _ = fs::remove_dir(dir);
        }
        return Err(e);
    }
    Ok(manifest)
}

/// Reads a written output directory back and checks it against its manifest.
pub fn verify_outputs(dir: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("unreadable manifest: {e}")))?;
    for f in &manifest.files {
        let bytes = fs::read(dir.join(&f.name))?;
        if sha256_hex(&bytes) != f.sha256 {
            return Err(Error::Config(format!("checksum mismatch for {}", f.name)));
        }
    }
    Ok(manifest)
}
