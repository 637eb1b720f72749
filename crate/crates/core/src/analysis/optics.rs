use crate::error::{Error, Result};

/// Idler wavelength from energy conservation, `1/λi = 1/λp − 1/λs`. Any
/// consistent length unit works.
pub fn idler_wavelength(pump: f64, signal: f64) -> Result<f64> {
    if !(pump > 0.0 && pump.is_finite() && signal.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "invalid pump wavelength {pump}"
        )));
    }
    if signal <= pump {
        return Err(Error::InvalidArgument(format!(
            "signal wavelength {signal} must exceed pump wavelength {pump}"
        )));
    }
    Ok(1.0 / (1.0 / pump - 1.0 / signal))
}

/// 20–80 % edge-response resolution of a confocal microscope, `0.33 λ/NA`,
/// in the unit of `wavelength`. Expects `0 < na <= 1.6`.
pub fn confocal_limit(wavelength: f64, na: f64) -> f64 {
    0.33 * wavelength / na
}
