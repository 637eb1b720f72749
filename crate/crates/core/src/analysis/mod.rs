//! Image-quality measurements: wavelength relation, region SNR and its
//! frame scaling, and edge-response resolution.

mod edge;
mod linescan;
mod optics;
mod snr;

pub use edge::{fit_edge, fit_edge_from, sigma_summary, EdgeFitResult, EdgeModel, EdgeParams};
pub use linescan::{extract_linescans, fit_linescans, EdgeRegion, Linescan, ProfileAxis};
pub use optics::{confocal_limit, idler_wavelength};
pub use snr::{
    fit_sqrt_scaling, pearson, snr, snr_curve, snr_values, threshold_mask, threshold_mask_values,
    MaskPair, SqrtFitResult,
};
