//! The three scan experiments and their fits.

mod fit;
mod scan;

pub use fit::{lorentzian_fit, powerlaw_fit, FitModel, FitResult, LM_MAX_ITERATIONS};
pub use scan::{
    convolved_width, effective_distance, field_scan, fit_branch_peaks, oscillation_period, position_scan, rate_extraction, time_scan,
    wing_fit, Rate, ScanAxis, ScanResult, RATE_THRESHOLD,
};
