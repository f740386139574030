//! Run configuration as `key = value unit` text.
//!
//! One entry per line, `#` starts a comment. Physical quantities must carry a
//! unit; counts, seeds and switches are bare. Unknown and repeated keys are
//! rejected.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::atomic::{
    AtomicStructure, Branch, EmpiricalStark, PerturbativeStark, PolarizabilityOptions, ReactionLevels, StarkModel,
};
use crate::ensemble::{
    BranchSelection, ChannelDipoles, NoiseModel, ShotConfig, Truncation, CLOUD_LENGTH_UM, D_WIDTH_UM, MEAN_D_ATOMS,
    MEAN_S_ATOMS, SIMULATION_ATOMS, S_WIDTH_UM,
};
use crate::error::{Error, Result};
use crate::hamiltonian::{ClosePairPolicy, ClosePairRule, CouplingMode, DEFAULT_BASIS_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Pair,
    FieldScan,
    PositionScan,
    TimeScan,
    ConvergenceStudy,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Pair,
        Experiment::FieldScan,
        Experiment::PositionScan,
        Experiment::TimeScan,
        Experiment::ConvergenceStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Pair => "pair",
            Experiment::FieldScan => "field-scan",
            Experiment::PositionScan => "position-scan",
            Experiment::TimeScan => "time-scan",
            Experiment::ConvergenceStudy => "convergence-study",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "converge" => Some(Experiment::ConvergenceStudy),
            _ => Experiment::ALL.into_iter().find(|e| e.name() == s),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StarkMode {
    Empirical,
    Perturbative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,

    pub stark_mode: StarkMode,
    pub f1_v_per_cm: f64,
    pub f2_v_per_cm: f64,
    pub stark_slope: f64,
    pub field_v_per_cm: f64,
    pub branches: BranchSelection,
    pub coupling: CouplingMode,
    pub exchange: bool,

    pub s_width_um: f64,
    pub d_width_um: f64,
    pub cloud_length_um: f64,
    pub s_atoms: f64,
    pub d_atoms: f64,
    pub spectators_42p: f64,
    pub spectators_43p: f64,

    pub field_noise_mv_per_cm: f64,
    pub magnetic_mhz: f64,
    pub blackbody_khz: f64,
    pub decay_khz: f64,
    pub position_blur_um: f64,

    pub pair_distance_um: f64,
    pub separation_um: f64,
    pub separations_um: Vec<f64>,
    pub scan_time_us: f64,
    pub t_max_us: f64,
    pub t_step_us: f64,
    pub field_min: f64,
    pub field_max: f64,
    pub field_step: f64,
    pub position_min_um: f64,
    pub position_max_um: f64,
    pub position_step_um: f64,
    pub wing_min_um: f64,
    pub wing_max_um: f64,
    pub rate_fit_min_um: f64,
    pub threshold: f64,

    pub shots: usize,
    pub seed: u64,
    pub basis_cap: usize,
    pub truncation: TruncationKind,
    pub truncation_s: usize,
    pub truncation_d: usize,
    pub truncation_spectators: usize,
    pub convergence_tolerance: f64,
    pub convergence_cap: usize,
    pub close_pair_floor_um: f64,
    pub close_pair_policy: ClosePairPolicy,
    pub max_transfers: Option<usize>,

    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruncationKind {
    Fixed,
    Convergence,
}

impl Default for RunConfig {
    fn default() -> Self {
        let stark = EmpiricalStark::calibrated();
        let noise = NoiseModel::default();
        RunConfig {
            experiment: Experiment::TimeScan,
            stark_mode: StarkMode::Empirical,
            f1_v_per_cm: stark.f1_v_per_cm,
            f2_v_per_cm: stark.f2_v_per_cm,
            stark_slope: stark.slope_mhz_per_v_per_cm,
            field_v_per_cm: stark.f1_v_per_cm,
            branches: BranchSelection::Both,
            coupling: CouplingMode::Scalar,
            exchange: true,
            s_width_um: S_WIDTH_UM,
            d_width_um: D_WIDTH_UM,
            cloud_length_um: CLOUD_LENGTH_UM,
            s_atoms: MEAN_S_ATOMS,
            d_atoms: MEAN_D_ATOMS,
            spectators_42p: 0.0,
            spectators_43p: 0.0,
            field_noise_mv_per_cm: noise.field_noise_mv_per_cm,
            magnetic_mhz: noise.magnetic_mhz,
            blackbody_khz: noise.blackbody_khz,
            decay_khz: noise.decay_khz,
            position_blur_um: noise.position_blur_um,
            pair_distance_um: 40.0,
            separation_um: 20.0,
            separations_um: vec![0.0, 20.0, 30.0, 40.0, 50.0],
            scan_time_us: 10.0,
            t_max_us: 25.0,
            t_step_us: 0.5,
            field_min: 0.34,
            field_max: 0.45,
            field_step: 0.001,
            position_min_um: -80.0,
            position_max_um: 80.0,
            position_step_um: 5.0,
            wing_min_um: 30.0,
            wing_max_um: 80.0,
            rate_fit_min_um: 20.0,
            threshold: 0.17,
            shots: 200,
            seed: 1,
            basis_cap: DEFAULT_BASIS_CAP,
            truncation: TruncationKind::Fixed,
            truncation_s: 2,
            truncation_d: 3,
            truncation_spectators: 0,
            convergence_tolerance: 0.01,
            convergence_cap: 8,
            close_pair_floor_um: 0.5,
            close_pair_policy: ClosePairPolicy::Reject,
            max_transfers: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dim {
    /// µm
    Length,
    /// V/cm
    Field,
    /// mV/cm
    FieldNoise,
    /// MHz
    Frequency,
    /// kHz
    Rate,
    /// µs
    Time,
    /// MHz/(V/cm)
    Slope,
}

impl Dim {
    fn canonical(self) -> &'static str {
        match self {
            Dim::Length => "µm",
            Dim::Field => "V/cm",
            Dim::FieldNoise => "mV/cm",
            Dim::Frequency => "MHz",
            Dim::Rate => "kHz",
            Dim::Time => "µs",
            Dim::Slope => "MHz/(V/cm)",
        }
    }

    /// Factor from `unit` to the canonical unit.
    fn factor(self, unit: &str) -> Option<f64> {
        let f = match (self, unit) {
            (Dim::Length, "µm" | "μm" | "um") => 1.0,
            (Dim::Length, "nm") => 1e-3,
            (Dim::Length, "mm") => 1e3,
            (Dim::Field, "V/cm") => 1.0,
            (Dim::Field, "mV/cm") => 1e-3,
            (Dim::FieldNoise, "mV/cm") => 1.0,
            (Dim::FieldNoise, "V/cm") => 1e3,
            (Dim::Frequency, "MHz") => 1.0,
            (Dim::Frequency, "kHz") => 1e-3,
            (Dim::Frequency, "Hz") => 1e-6,
            (Dim::Frequency, "GHz") => 1e3,
            (Dim::Rate, "kHz") => 1.0,
            (Dim::Rate, "Hz") => 1e-3,
            (Dim::Rate, "MHz") => 1e3,
            (Dim::Time, "µs" | "μs" | "us") => 1.0,
            (Dim::Time, "ns") => 1e-3,
            (Dim::Time, "ms") => 1e3,
            (Dim::Slope, "MHz/(V/cm)" | "MHz*cm/V" | "kHz/(mV/cm)") => 1.0,
            _ => return None,
        };
        Some(f)
    }
}

/// One entry after splitting off the key: either a quantity with unit, a
/// bare number, or a word.
struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Entry<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: format!("{}: {}", self.key, message.into()),
        }
    }

    fn numbers_and_unit(&self) -> Result<(Vec<f64>, Option<&str>)> {
        let tokens: Vec<&str> = self
            .value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        let (unit, nums) = match tokens.split_last() {
            Some((last, rest)) if last.parse::<f64>().is_err() => (Some(*last), rest),
            _ => (None, &tokens[..]),
        };
        let mut out = Vec::with_capacity(nums.len());
        for t in nums {
            let v: f64 = t.parse().map_err(|_| self.err(format!("'{t}' is not a number")))?;
            if !v.is_finite() {
                return Err(self.err("value must be finite"));
            }
            out.push(v);
        }
        if out.is_empty() {
            return Err(self.err("missing value"));
        }
        Ok((out, unit))
    }

    fn quantities(&self, dim: Dim) -> Result<Vec<f64>> {
        let (nums, unit) = self.numbers_and_unit()?;
        let unit = unit.ok_or_else(|| self.err(format!("missing unit (expected {})", dim.canonical())))?;
        let f = dim
            .factor(unit)
            .ok_or_else(|| self.err(format!("unit '{unit}' is not a valid unit here (expected {})", dim.canonical())))?;
        Ok(nums.into_iter().map(|v| if f == 1.0 { v } else { v * f }).collect())
    }

    fn quantity(&self, dim: Dim) -> Result<f64> {
        let v = self.quantities(dim)?;
        if v.len() != 1 {
            return Err(self.err("expected a single value"));
        }
        Ok(v[0])
    }

    fn non_negative(&self, dim: Dim) -> Result<f64> {
        let v = self.quantity(dim)?;
        if v < 0.0 {
            return Err(self.err(format!("must be >= 0, got {v}")));
        }
        Ok(v)
    }

    fn positive(&self, dim: Dim) -> Result<f64> {
        let v = self.quantity(dim)?;
        if !(v > 0.0) {
            return Err(self.err(format!("must be > 0, got {v}")));
        }
        Ok(v)
    }

    fn bare(&self) -> Result<f64> {
        let (nums, unit) = self.numbers_and_unit()?;
        if let Some(u) = unit {
            return Err(self.err(format!("takes no unit, got '{u}'")));
        }
        if nums.len() != 1 {
            return Err(self.err("expected a single value"));
        }
        Ok(nums[0])
    }

    fn count(&self) -> Result<f64> {
        let v = self.bare()?;
        if v < 0.0 {
            return Err(self.err(format!("must be >= 0, got {v}")));
        }
        Ok(v)
    }

    fn integer(&self) -> Result<u64> {
        let v = self.value.trim();
        v.parse::<u64>()
            .map_err(|_| self.err(format!("'{v}' is not a non-negative integer")))
    }

    fn word(&self) -> &str {
        self.value.trim()
    }

    fn switch(&self) -> Result<bool> {
        match self.word() {
            "on" | "true" | "yes" => Ok(true),
            "off" | "false" | "no" => Ok(false),
            w => Err(self.err(format!("expected on/off, got '{w}'"))),
        }
    }
}

/// Parses a configuration document. Keys not mentioned keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen: Vec<(String, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected 'key = value', got '{content}'"),
        })?;
        let key = key.trim();
        if let Some((_, first)) = seen.iter().find(|(k, _)| k == key) {
            return Err(Error::Parse {
                line,
                message: format!("{key}: already set on line {first}"),
            });
        }
        seen.push((key.to_string(), line));
        apply(&mut cfg, &Entry { line, key, value: value.trim() })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply(cfg: &mut RunConfig, e: &Entry) -> Result<()> {
    use Dim::*;
    match e.key {
        "experiment" => {
            cfg.experiment = Experiment::from_name(e.word()).ok_or_else(|| e.err(format!("unknown experiment '{}'", e.word())))?
        }
        "stark_model" => {
            cfg.stark_mode = match e.word() {
                "empirical" => StarkMode::Empirical,
                "perturbative" => StarkMode::Perturbative,
                w => return Err(e.err(format!("expected empirical or perturbative, got '{w}'"))),
            }
        }
        "f1" => cfg.f1_v_per_cm = e.non_negative(Field)?,
        "f2" => cfg.f2_v_per_cm = e.non_negative(Field)?,
        "stark_slope" => cfg.stark_slope = e.positive(Slope)?,
        "field" => cfg.field_v_per_cm = e.non_negative(Field)?,
        "branches" => {
            cfg.branches = match e.word() {
                "both" => BranchSelection::Both,
                "f1" => BranchSelection::Only(Branch::F1),
                "f2" => BranchSelection::Only(Branch::F2),
                w => return Err(e.err(format!("expected both, f1 or f2, got '{w}'"))),
            }
        }
        "coupling" => {
            cfg.coupling = match e.word() {
                "scalar" => CouplingMode::Scalar,
                "tensor" => CouplingMode::Tensor,
                w => return Err(e.err(format!("expected scalar or tensor, got '{w}'"))),
            }
        }
        "exchange" => cfg.exchange = e.switch()?,
        "s_width" => cfg.s_width_um = e.positive(Length)?,
        "d_width" => cfg.d_width_um = e.positive(Length)?,
        "cloud_length" => cfg.cloud_length_um = e.positive(Length)?,
        "s_atoms" => cfg.s_atoms = e.count()?,
        "d_atoms" => cfg.d_atoms = e.count()?,
        "spectators_42p" => cfg.spectators_42p = e.count()?,
        "spectators_43p" => cfg.spectators_43p = e.count()?,
        "atom_preset" => match e.word() {
            "measured" => (cfg.s_atoms, cfg.d_atoms) = (MEAN_S_ATOMS, MEAN_D_ATOMS),
            "simulation" => (cfg.s_atoms, cfg.d_atoms) = (SIMULATION_ATOMS, SIMULATION_ATOMS),
            w => return Err(e.err(format!("expected measured or simulation, got '{w}'"))),
        },
        "field_noise" => cfg.field_noise_mv_per_cm = e.non_negative(FieldNoise)?,
        "magnetic_broadening" => cfg.magnetic_mhz = e.non_negative(Frequency)?,
        "blackbody_rate" => cfg.blackbody_khz = e.non_negative(Rate)?,
        "decay_rate" => cfg.decay_khz = e.non_negative(Rate)?,
        "position_blur" => cfg.position_blur_um = e.non_negative(Length)?,
        "pair_distance" => cfg.pair_distance_um = e.positive(Length)?,
        "separation" => cfg.separation_um = e.quantity(Length)?,
        "separations" => cfg.separations_um = e.quantities(Length)?,
        "scan_time" => cfg.scan_time_us = e.non_negative(Time)?,
        "t_max" => cfg.t_max_us = e.positive(Time)?,
        "t_step" => cfg.t_step_us = e.positive(Time)?,
        "field_min" => cfg.field_min = e.non_negative(Field)?,
        "field_max" => cfg.field_max = e.non_negative(Field)?,
        "field_step" => cfg.field_step = e.positive(Field)?,
        "position_min" => cfg.position_min_um = e.quantity(Length)?,
        "position_max" => cfg.position_max_um = e.quantity(Length)?,
        "position_step" => cfg.position_step_um = e.positive(Length)?,
        "wing_min" => cfg.wing_min_um = e.positive(Length)?,
        "wing_max" => cfg.wing_max_um = e.positive(Length)?,
        "rate_fit_min" => cfg.rate_fit_min_um = e.non_negative(Length)?,
        "threshold" => {
            let v = e.bare()?;
            if !(v > 0.0 && v < 1.0) {
                return Err(e.err(format!("must lie in (0, 1), got {v}")));
            }
            cfg.threshold = v;
        }
        "shots" => {
            cfg.shots = e.integer()? as usize;
            if cfg.shots == 0 {
                return Err(e.err("must be >= 1"));
            }
        }
        "seed" => cfg.seed = e.integer()?,
        "basis_cap" => {
            cfg.basis_cap = e.integer()? as usize;
            if cfg.basis_cap == 0 {
                return Err(e.err("must be >= 1"));
            }
        }
        "truncation" => {
            cfg.truncation = match e.word() {
                "fixed" => TruncationKind::Fixed,
                "convergence" => TruncationKind::Convergence,
                w => return Err(e.err(format!("expected fixed or convergence, got '{w}'"))),
            }
        }
        "truncation_s" => cfg.truncation_s = e.integer()? as usize,
        "truncation_d" => cfg.truncation_d = e.integer()? as usize,
        "truncation_spectators" => cfg.truncation_spectators = e.integer()? as usize,
        "convergence_tolerance" => {
            let v = e.bare()?;
            if !(v > 0.0) {
                return Err(e.err(format!("must be > 0, got {v}")));
            }
            cfg.convergence_tolerance = v;
        }
        "convergence_cap" => cfg.convergence_cap = e.integer()? as usize,
        "close_pair_floor" => cfg.close_pair_floor_um = e.non_negative(Length)?,
        "close_pair_policy" => {
            cfg.close_pair_policy = match e.word() {
                "reject" => ClosePairPolicy::Reject,
                "cap" => ClosePairPolicy::Cap,
                w => return Err(e.err(format!("expected reject or cap, got '{w}'"))),
            }
        }
        "max_transfers" => {
            cfg.max_transfers = match e.word() {
                "none" => None,
                _ => Some(e.integer()? as usize),
            }
        }
        "out_dir" => {
            if e.word().is_empty() {
                return Err(e.err("missing path"));
            }
            cfg.out_dir = PathBuf::from(e.word());
        }
        other => return Err(e.err(format!("unknown key '{other}'"))),
    }
    Ok(())
}

fn cfg_err(msg: String) -> Error {
    Error::Config(msg)
}

impl RunConfig {
    /// Checks that involve more than one key.
    pub fn validate(&self) -> Result<()> {
        if self.stark_mode == StarkMode::Empirical && !(self.f1_v_per_cm < self.f2_v_per_cm) {
            return Err(cfg_err(format!(
                "f1 ({} V/cm) must lie below f2 ({} V/cm)",
                self.f1_v_per_cm, self.f2_v_per_cm
            )));
        }
        if !(self.field_min < self.field_max) {
            return Err(cfg_err("field_min must lie below field_max".into()));
        }
        if !(self.position_min_um < self.position_max_um) {
            return Err(cfg_err("position_min must lie below position_max".into()));
        }
        if !(self.wing_min_um < self.wing_max_um) {
            return Err(cfg_err("wing_min must lie below wing_max".into()));
        }
        if self.t_step_us > self.t_max_us {
            return Err(cfg_err("t_step must not exceed t_max".into()));
        }
        if self.separations_um.is_empty() || self.separations_um.windows(2).any(|w| w[1] <= w[0]) {
            return Err(cfg_err("separations must be strictly increasing".into()));
        }
        if self.truncation_s == 0 || self.truncation_d == 0 {
            return Err(cfg_err("truncation_s and truncation_d must be >= 1".into()));
        }
        if self.convergence_cap < 2 {
            return Err(cfg_err("convergence_cap must be >= 2".into()));
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut q = |k: &str, v: f64, d: Dim| {
            let _ = writeln!(s, "{k} = {v:?} {}", d.canonical());
        };
        q("f1", self.f1_v_per_cm, Dim::Field);
        q("f2", self.f2_v_per_cm, Dim::Field);
        q("stark_slope", self.stark_slope, Dim::Slope);
        q("field", self.field_v_per_cm, Dim::Field);
        q("s_width", self.s_width_um, Dim::Length);
        q("d_width", self.d_width_um, Dim::Length);
        q("cloud_length", self.cloud_length_um, Dim::Length);
        q("field_noise", self.field_noise_mv_per_cm, Dim::FieldNoise);
        q("magnetic_broadening", self.magnetic_mhz, Dim::Frequency);
        q("blackbody_rate", self.blackbody_khz, Dim::Rate);
        q("decay_rate", self.decay_khz, Dim::Rate);
        q("position_blur", self.position_blur_um, Dim::Length);
        q("pair_distance", self.pair_distance_um, Dim::Length);
        q("separation", self.separation_um, Dim::Length);
        q("scan_time", self.scan_time_us, Dim::Time);
        q("t_max", self.t_max_us, Dim::Time);
        q("t_step", self.t_step_us, Dim::Time);
        q("field_min", self.field_min, Dim::Field);
        q("field_max", self.field_max, Dim::Field);
        q("field_step", self.field_step, Dim::Field);
        q("position_min", self.position_min_um, Dim::Length);
        q("position_max", self.position_max_um, Dim::Length);
        q("position_step", self.position_step_um, Dim::Length);
        q("wing_min", self.wing_min_um, Dim::Length);
        q("wing_max", self.wing_max_um, Dim::Length);
        q("rate_fit_min", self.rate_fit_min_um, Dim::Length);
        q("close_pair_floor", self.close_pair_floor_um, Dim::Length);

        let seps: Vec<String> = self.separations_um.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "separations = {} µm", seps.join(", "));
        let _ = writeln!(s, "experiment = {}", self.experiment.name());
        let _ = writeln!(
            s,
            "stark_model = {}",
            match self.stark_mode {
                StarkMode::Empirical => "empirical",
                StarkMode::Perturbative => "perturbative",
            }
        );
        let _ = writeln!(s, "branches = {}", branch_label(self.branches));
        let _ = writeln!(
            s,
            "coupling = {}",
            match self.coupling {
                CouplingMode::Scalar => "scalar",
                CouplingMode::Tensor => "tensor",
            }
        );
        let _ = writeln!(s, "exchange = {}", if self.exchange { "on" } else { "off" });
        let _ = writeln!(s, "s_atoms = {:?}", self.s_atoms);
        let _ = writeln!(s, "d_atoms = {:?}", self.d_atoms);
        let _ = writeln!(s, "spectators_42p = {:?}", self.spectators_42p);
        let _ = writeln!(s, "spectators_43p = {:?}", self.spectators_43p);
        let _ = writeln!(s, "threshold = {:?}", self.threshold);
        let _ = writeln!(s, "shots = {}", self.shots);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "basis_cap = {}", self.basis_cap);
        let _ = writeln!(
            s,
            "truncation = {}",
            match self.truncation {
                TruncationKind::Fixed => "fixed",
                TruncationKind::Convergence => "convergence",
            }
        );
        let _ = writeln!(s, "truncation_s = {}", self.truncation_s);
        let _ = writeln!(s, "truncation_d = {}", self.truncation_d);
        let _ = writeln!(s, "truncation_spectators = {}", self.truncation_spectators);
        let _ = writeln!(s, "convergence_tolerance = {:?}", self.convergence_tolerance);
        let _ = writeln!(s, "convergence_cap = {}", self.convergence_cap);
        let _ = writeln!(
            s,
            "close_pair_policy = {}",
            match self.close_pair_policy {
                ClosePairPolicy::Reject => "reject",
                ClosePairPolicy::Cap => "cap",
            }
        );
        match self.max_transfers {
            Some(m) => {
                let _ = writeln!(s, "max_transfers = {m}");
            }
            None => s.push_str("max_transfers = none\n"),
        }
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        s
    }

    /// SHA-256 of the canonical text without the output directory, hex.
    pub fn hash(&self) -> String {
        let text: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("out_dir"))
            .map(|l| format!("{l}\n"))
            .collect();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn stark_model(&self, structure: &AtomicStructure<f64>) -> Result<StarkModel> {
        Ok(match self.stark_mode {
            StarkMode::Empirical => {
                StarkModel::Empirical(EmpiricalStark::new(self.f1_v_per_cm, self.f2_v_per_cm, self.stark_slope)?)
            }
            StarkMode::Perturbative => StarkModel::Perturbative(PerturbativeStark::from_structure(
                structure,
                &ReactionLevels::rubidium_49s_41d(),
                &PolarizabilityOptions::default(),
            )?),
        })
    }

    pub fn truncation_policy(&self) -> Truncation {
        match self.truncation {
            TruncationKind::Fixed => Truncation::Fixed {
                s: self.truncation_s,
                d: self.truncation_d,
                spectators: self.truncation_spectators,
            },
            TruncationKind::Convergence => Truncation::Convergence {
                tolerance: self.convergence_tolerance,
                cap: self.convergence_cap,
            },
        }
    }

    /// Shot configuration at `separation_um` on the `0..=t_max` grid.
    pub fn shot_config(&self, separation_um: f64, stark: StarkModel, dipoles: ChannelDipoles) -> ShotConfig {
        let mut c = ShotConfig::standard(separation_um, dipoles);
        c.seed = self.seed;
        c.s_volume.widths = [self.s_width_um, self.s_width_um, self.cloud_length_um];
        c.d_volume.widths = [self.d_width_um, self.d_width_um, self.cloud_length_um];
        c.s_volume.mean_count = self.s_atoms;
        c.d_volume.mean_count = self.d_atoms;
        c.spectators = [self.spectators_42p, self.spectators_43p];
        c.branches = self.branches;
        c.stark = stark;
        c.field_v_per_cm = self.field_v_per_cm;
        c.times_us = self.time_grid();
        c.truncation = self.truncation_policy();
        c.noise = NoiseModel {
            field_noise_mv_per_cm: self.field_noise_mv_per_cm,
            magnetic_mhz: self.magnetic_mhz,
            blackbody_khz: self.blackbody_khz,
            decay_khz: self.decay_khz,
            position_blur_um: self.position_blur_um,
        };
        c.coupling = self.coupling;
        c.exchange = self.exchange;
        c.close_pairs = ClosePairRule {
            floor_um: self.close_pair_floor_um,
            policy: self.close_pair_policy,
        };
        c.basis_cap = self.basis_cap;
        c.max_transfers = self.max_transfers;
        c
    }

    /// 0, step, 2·step, … up to t_max.
    pub fn time_grid(&self) -> Vec<f64> {
        grid(0.0, self.t_max_us, self.t_step_us)
    }

    pub fn field_grid(&self) -> Vec<f64> {
        grid(self.field_min, self.field_max, self.field_step)
    }

    pub fn position_grid(&self) -> Vec<f64> {
        grid(self.position_min_um, self.position_max_um, self.position_step_um)
    }
}

/// `lo + k·step` for k = 0, 1, … while within `hi` (plus a relative slack
/// of 1e-9 steps so that an end point hit up to rounding is kept).
fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

pub fn branch_label(b: BranchSelection) -> &'static str {
    match b {
        BranchSelection::Both => "both",
        BranchSelection::Only(Branch::F1) => "f1",
        BranchSelection::Only(Branch::F2) => "f2",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_document_is_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.f1_v_per_cm, 0.38);
        assert_eq!(c.stark_slope, 127.0);
        assert_eq!((c.s_width_um, c.d_width_um), (11.6, 16.3));
        assert_eq!((c.field_noise_mv_per_cm, c.magnetic_mhz), (2.0, 1.4));
        let c = parse_config("# only a comment\n\n   \n").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn overrides_with_units() {
        let c = parse_config("field_noise = 10 mV/cm\nfield = 410 mV/cm\nseparations = 20, 30 40 µm\nblackbody_rate = 6.7 kHz")
            .unwrap();
        assert_eq!(c.field_noise_mv_per_cm, 10.0);
        assert!((c.field_v_per_cm - 0.41).abs() < 1e-15);
        assert_eq!(c.separations_um, vec![20.0, 30.0, 40.0]);
        assert_eq!(c.blackbody_khz, 6.7);
        let c = parse_config("field_noise = 0.01 V/cm\nmagnetic_broadening = 1400 kHz").unwrap();
        assert!((c.field_noise_mv_per_cm - 10.0).abs() < 1e-12);
        assert!((c.magnetic_mhz - 1.4).abs() < 1e-12);
    }

    fn parse_error_line(text: &str) -> (usize, String) {
        match parse_config(text) {
            Err(Error::Parse { line, message }) => (line, message),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_unit_is_rejected() {
        let (line, msg) = parse_error_line("seed = 3\nfield_noise = 10");
        assert_eq!(line, 2);
        assert!(msg.contains("missing unit"), "{msg}");
    }

    #[test]
    fn wrong_unit_is_rejected() {
        let (line, msg) = parse_error_line("field = 0.38 MHz");
        assert_eq!(line, 1);
        assert!(msg.contains("MHz"), "{msg}");
        let (_, msg) = parse_error_line("s_atoms = 12 atoms");
        assert!(msg.contains("takes no unit"), "{msg}");
    }

    #[test]
    fn unknown_and_repeated_keys() {
        let (line, msg) = parse_error_line("\n\nfeild = 0.38 V/cm");
        assert_eq!(line, 3);
        assert!(msg.contains("unknown key"), "{msg}");
        let (line, msg) = parse_error_line("seed = 1\nseed = 2");
        assert_eq!(line, 2);
        assert!(msg.contains("line 1"), "{msg}");
        let (_, msg) = parse_error_line("just words");
        assert!(msg.contains("key = value"), "{msg}");
    }

    #[test]
    fn out_of_range() {
        let (_, msg) = parse_error_line("field_noise = -1 mV/cm");
        assert!(msg.contains(">= 0"), "{msg}");
        assert!(parse_config("shots = 0").is_err());
        assert!(parse_config("threshold = 1.5").is_err());
        assert!(parse_config("f1 = 0.5 V/cm").is_err());
        assert!(parse_config("field = nan V/cm").is_err());
        assert!(parse_config("separations = 30, 20 µm").is_err());
    }

    #[test]
    fn experiment_names() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::from_name(e.name()), Some(e));
        }
        assert_eq!(Experiment::from_name("converge"), Some(Experiment::ConvergenceStudy));
        let c = parse_config("experiment = pair").unwrap();
        assert_eq!(c.experiment, Experiment::Pair);
    }

    #[test]
    fn default_round_trip() {
        let c = RunConfig::default();
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn grids_include_end_points() {
        let c = RunConfig::default();
        let t = c.time_grid();
        assert_eq!((t.len(), t[0], *t.last().unwrap()), (51, 0.0, 25.0));
        let f = c.field_grid();
        assert_eq!(f.len(), 111);
        assert!((f.last().unwrap() - 0.45).abs() < 1e-12);
        let p = c.position_grid();
        assert_eq!((p.len(), p[16]), (33, 0.0));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }

    proptest! {
        #[test]
        fn round_trip(
            noise in 0.0..50.0f64,
            field in 0.0..1.0f64,
            seps in proptest::collection::btree_set(-100i32..100, 1..6),
            shots in 1usize..10_000,
            seed in any::<u64>(),
            atoms in 0.0..40.0f64,
            tensor in any::<bool>(),
            cap in proptest::option::of(1usize..5),
        ) {
            let mut c = RunConfig::default();
            c.field_noise_mv_per_cm = noise;
            c.field_v_per_cm = field;
            c.separations_um = seps.into_iter().map(|s| s as f64 * 1.5).collect();
            c.shots = shots;
            c.seed = seed;
            c.s_atoms = atoms;
            c.coupling = if tensor { CouplingMode::Tensor } else { CouplingMode::Scalar };
            c.max_transfers = cap;
            prop_assert_eq!(parse_config(&c.to_text()).unwrap(), c);
        }
    }
}
