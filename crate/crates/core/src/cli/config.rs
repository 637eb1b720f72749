use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{EdgeRegion, ProfileAxis};
use crate::coincidence::{DEFAULT_BIN_WIDTH_PS, DEFAULT_WINDOW_PS};
use crate::error::{Error, Result};
use crate::scan::ScanConfig;
use crate::simulator::{make_grating, SamplePattern, SourceModel};
use crate::timetag::Channel;

pub const SCHEMA_VERSION: u32 = 1;

/// Everything a run needs. Every key has a default; unknown keys are
/// rejected so typos fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub scan: ScanConfig,
    pub source: SourceConfig,
    pub sample: SampleConfig,
    pub simulation: SimulationConfig,
    pub channels: ChannelConfig,
    pub coincidence: CoincidenceConfig,
    pub inputs: InputConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            out_dir: PathBuf::from("qscope-out"),
            scan: ScanConfig::default(),
            source: SourceConfig::default(),
            sample: SampleConfig::default(),
            simulation: SimulationConfig::default(),
            channels: ChannelConfig::default(),
            coincidence: CoincidenceConfig::default(),
            inputs: InputConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

/// Source parameters; the seed lives at the top level of [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub pair_rate_hz: f64,
    pub signal_efficiency: f64,
    pub idler_path_efficiency: f64,
    pub signal_dark_rate_hz: f64,
    pub idler_dark_rate_hz: f64,
    pub inter_arm_delay_ps: i64,
    pub jitter_sigma_ps: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        let m = SourceModel::default();
        SourceConfig {
            pair_rate_hz: m.pair_rate_hz,
            signal_efficiency: m.signal_efficiency,
            idler_path_efficiency: m.idler_path_efficiency,
            signal_dark_rate_hz: m.signal_dark_rate_hz,
            idler_dark_rate_hz: m.idler_dark_rate_hz,
            inter_arm_delay_ps: m.inter_arm_delay_ps,
            jitter_sigma_ps: m.jitter_sigma_ps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleConfig {
    /// Square grating filling the scan field.
    Grating {
        square_um: f64,
        gap_um: f64,
        resolution_px: usize,
        blur_sigma_um: f64,
    },
    /// Reflectance map from a CSV file, stretched over the scan field.
    Map { path: PathBuf, blur_sigma_um: f64 },
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig::Grating {
            square_um: 20.0,
            gap_um: 10.0,
            resolution_px: 400,
            blur_sigma_um: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub duration_s: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { duration_s: 10.0 }
    }
}

/// Input channel wired to each logical role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub signal: u16,
    pub idler: u16,
    pub trigger: u16,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            signal: Channel::SIGNAL.0,
            idler: Channel::IDLER.0,
            trigger: Channel::TRIGGER.0,
        }
    }
}

impl ChannelConfig {
    pub fn remap(&self) -> [(Channel, Channel); 3] {
        [
            (Channel(self.signal), Channel::SIGNAL),
            (Channel(self.idler), Channel::IDLER),
            (Channel(self.trigger), Channel::TRIGGER),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoincidenceConfig {
    pub bin_width_ps: i64,
    pub lag_min_ps: i64,
    pub lag_max_ps: i64,
    pub window_ps: i64,
    /// Skip delay estimation and use this delay.
    pub delay_ps: Option<i64>,
    /// Estimated peaks below this significance are reported as a warning.
    pub min_significance: f64,
}

impl Default for CoincidenceConfig {
    fn default() -> Self {
        CoincidenceConfig {
            bin_width_ps: DEFAULT_BIN_WIDTH_PS,
            lag_min_ps: -20_000,
            lag_max_ps: 20_000,
            window_ps: DEFAULT_WINDOW_PS,
            delay_ps: None,
            min_significance: 5.0,
        }
    }
}

/// Stream files for `reconstruct`. Unset paths default to the files
/// `simulate` writes into `out_dir`; `merged` replaces all three.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub merged: Option<PathBuf>,
    pub signal: Option<PathBuf>,
    pub idler: Option<PathBuf>,
    pub triggers: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Directory holding `reconstruct` outputs; defaults to `out_dir`.
    pub images_dir: Option<PathBuf>,
    pub pump_nm: f64,
    pub signal_nm: f64,
    /// Imaging wavelength for confocal limits; defaults to the idler.
    pub wavelength_um: Option<f64>,
    pub numerical_apertures: Vec<f64>,
    pub edge_regions: Vec<EdgeRegion>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        // Falling edges at x = 20 um of the first two square rows of the
        // default 96 px / 100 um grating scan.
        let region = |rows| EdgeRegion {
            axis: ProfileAxis::Rows,
            rows,
            cols: [10, 24],
            count: 10,
        };
        AnalysisConfig {
            images_dir: None,
            pump_nm: 772.3,
            signal_nm: 1435.0,
            wavelength_um: None,
            numerical_apertures: vec![0.3, 0.5],
            edge_regions: vec![region([4, 15]), region([33, 43])],
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn source_model(&self) -> SourceModel {
        let s = &self.source;
        SourceModel {
            pair_rate_hz: s.pair_rate_hz,
            signal_efficiency: s.signal_efficiency,
            idler_path_efficiency: s.idler_path_efficiency,
            signal_dark_rate_hz: s.signal_dark_rate_hz,
            idler_dark_rate_hz: s.idler_dark_rate_hz,
            inter_arm_delay_ps: s.inter_arm_delay_ps,
            jitter_sigma_ps: s.jitter_sigma_ps,
            rng_seed: self.seed,
        }
    }

    pub fn sample_pattern(&self) -> Result<SamplePattern> {
        let (fx, fy) = (self.scan.field_of_view_x_um, self.scan.field_of_view_y_um);
        match &self.sample {
            SampleConfig::Grating {
                square_um,
                gap_um,
                resolution_px,
                blur_sigma_um,
            } => {
                let mut g = make_grating(*square_um, *gap_um, fx.max(fy), *resolution_px)?;
                g.size_x_um = fx.max(fy);
                g.size_y_um = fx.max(fy);
                Ok(g.with_blur(*blur_sigma_um))
            }
            SampleConfig::Map {
                path,
                blur_sigma_um,
            } => {
                let file = std::fs::File::open(path)
                    .map_err(|e| Error::Config(format!("sample.path {}: {e}", path.display())))?;
                Ok(
                    SamplePattern::read_csv(std::io::BufReader::new(file), fx, fy)?
                        .with_blur(*blur_sigma_um),
                )
            }
        }
    }

    pub fn images_dir(&self) -> &Path {
        self.analysis.images_dir.as_deref().unwrap_or(&self.out_dir)
    }

    /// Checks every field that does not require reading input data.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string().replace("invalid argument: ", ""));
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.scan.validate().map_err(cfg)?;
        self.source_model().validate().map_err(cfg)?;
        if !(self.simulation.duration_s.is_finite() && self.simulation.duration_s >= 0.0) {
            return Err(Error::Config("simulation.duration_s must be >= 0".into()));
        }
        match &self.sample {
            SampleConfig::Grating {
                square_um,
                gap_um,
                resolution_px,
                blur_sigma_um,
            } => {
                if !(*square_um > 0.0
                    && *gap_um >= 0.0
                    && *resolution_px > 0
                    && *blur_sigma_um >= 0.0)
                {
                    return Err(Error::Config(
                        "sample: square_um and resolution_px must be positive, gap_um and blur_sigma_um >= 0"
                            .into(),
                    ));
                }
            }
            SampleConfig::Map { blur_sigma_um, .. } => {
                if blur_sigma_um.is_nan() || *blur_sigma_um < 0.0 {
                    return Err(Error::Config("sample.blur_sigma_um must be >= 0".into()));
                }
            }
        }
        let c = &self.coincidence;
        crate::coincidence::CorrelationHistogram::new(c.bin_width_ps, c.lag_min_ps, c.lag_max_ps)
            .map_err(|e| Error::Config(format!("coincidence: {e}")))?;
        if c.window_ps <= 0 {
            return Err(Error::Config(
                "coincidence.window_ps must be positive".into(),
            ));
        }
        let ch = &self.channels;
        if ch.signal == ch.idler || ch.signal == ch.trigger || ch.idler == ch.trigger {
            return Err(Error::Config(
                "channels: signal, idler and trigger must differ".into(),
            ));
        }
        let a = &self.analysis;
        if !(a.pump_nm > 0.0 && a.signal_nm > a.pump_nm) {
            return Err(Error::Config(
                "analysis: need 0 < pump_nm < signal_nm".into(),
            ));
        }
        if a.numerical_apertures
            .iter()
            .any(|na| !(*na > 0.0 && *na <= 1.6))
        {
            return Err(Error::Config(
                "analysis.numerical_apertures must lie in (0, 1.6]".into(),
            ));
        }
        if a.wavelength_um.is_some_and(|l| l.is_nan() || l <= 0.0) {
            return Err(Error::Config(
                "analysis.wavelength_um must be positive".into(),
            ));
        }
        Ok(())
    }
}
