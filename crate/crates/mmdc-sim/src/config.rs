//! Scenario configuration: every simulation parameter with validated
//! defaults, loadable from TOML. A [`ScenarioConfig`] is the single source
//! of truth for one run; unknown keys are rejected so that typos cannot
//! silently fall back to defaults.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::ConfigError;

/// Which mobility-management scheme drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Two mmWave legs plus the MN anchor (the dual-connection scheme).
    Dual,
    /// One mmWave leg plus the MN anchor (the single-connection baseline).
    Single,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Dual => write!(f, "dual"),
            Scheme::Single => write!(f, "single"),
        }
    }
}

/// How blockage rectangles are oriented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationMode {
    AxisAligned,
    Uniform,
}

/// How the number of blockages is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Poisson with mean density x area (a spatial Poisson process).
    Poisson,
    /// Exactly round(density x area), for variance-reduction studies.
    Fixed,
}

/// Which base stations contribute downlink interference.
///
/// With one UE and per-channel transmitter exclusivity, only the serving
/// leg radiates on its carrier, so `Active` reduces to a noise-limited
/// scenario; the other modes model an always-loaded network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceMode {
    /// Only currently transmitting co-channel BSs interfere (default).
    Active,
    /// Every co-channel SN interferes regardless of load.
    CoChannel,
    /// Every SN interferes regardless of carrier.
    AllBs,
}

/// Full scenario parameter set.
///
/// Defaults reproduce the dense-urban 100x100 m scenario: six mmWave SNs on
/// a 50 m grid, one LTE-class MN at the center, a UE shuttling along the
/// street at 10 m/s, and a 1 MB file pushed every 120 ms.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    // --- radio / channel ---
    /// mmWave SN transmit power (dBm).
    pub sn_tx_power_dbm: f64,
    /// MN (LTE-class) transmit power (dBm).
    pub mn_tx_power_dbm: f64,
    /// mmWave bandwidth (Hz).
    pub mmwave_bandwidth_hz: f64,
    /// LTE bandwidth for the MN link (Hz).
    pub lte_bandwidth_hz: f64,
    /// mmWave carrier (GHz), informational; pathloss parameters bake it in.
    pub mmwave_carrier_ghz: f64,
    /// LTE downlink carrier (GHz), informational.
    pub lte_dl_carrier_ghz: f64,
    /// SN array elements (8x8 ULA = 64).
    pub sn_antenna_elements: u32,
    /// UE array elements (4x4 ULA = 16).
    pub ue_antenna_elements: u32,
    /// Aligned beam gain (dB). When unset, derived as
    /// 10*log10(sn_antenna_elements * ue_antenna_elements).
    pub g_main_db: Option<f64>,
    /// Gain toward/from unaligned interferers (dB).
    pub g_side_db: f64,
    /// Thermal noise power spectral density (dBm/Hz).
    pub noise_psd_dbm_hz: f64,
    /// Receiver noise figure (dB).
    pub noise_figure_db: f64,
    /// LOS pathloss: alpha (dB), beta (exponent coefficient), sigma (dB).
    pub pathloss_los: PathlossEntry,
    /// NLOS pathloss parameters.
    pub pathloss_nlos: PathlossEntry,
    /// Shadowing decorrelation distance (m).
    pub decorrelation_distance_m: f64,
    /// SINR below this is outage (dB).
    pub outage_threshold_db: f64,
    /// Minimum link distance before pathloss evaluation (m).
    pub min_link_distance_m: f64,
    /// Which BSs contribute downlink interference.
    pub interference_mode: InterferenceMode,

    // --- topology / mobility ---
    /// Area width (m).
    pub area_width_m: f64,
    /// Area height (m).
    pub area_height_m: f64,
    /// Grid spacing between SN columns (m).
    pub inter_bs_distance_m: f64,
    /// Explicit SN positions; overrides the grid when non-empty.
    pub sn_positions: Vec<[f64; 2]>,
    /// MN position; defaults to the area center when unset.
    pub mn_position: Option<[f64; 2]>,
    /// UE speed (m/s).
    pub ue_speed_mps: f64,
    /// Street waypoints; defaults to the vertical mid-line when empty.
    pub street_waypoints: Vec<[f64; 2]>,
    /// Initial UE offset along the street (m from the first waypoint).
    pub ue_start_offset_m: f64,
    /// Mobility update step (s).
    pub mobility_step_s: f64,

    // --- blockage field ---
    /// Blockage density (blockages/km^2).
    pub blockage_density_per_km2: f64,
    /// Lower bound of blockage x/y dimension (m).
    pub blockage_dim_min_m: f64,
    /// Upper bound of blockage x/y dimension (m).
    pub blockage_dim_max_m: f64,
    pub blockage_orientation: OrientationMode,
    pub blockage_count_mode: CountMode,

    // --- protocol ---
    /// Handover threshold SINR_th (dB).
    pub sinr_threshold_db: f64,
    /// Time-to-trigger (s).
    pub ttt_s: f64,
    /// SRS report period (s).
    pub srs_period_s: f64,
    /// Hysteresis margin for idle-over-serving path switches (dB).
    pub path_switch_hysteresis_db: f64,
    /// Forward the old serving buffer on above-threshold path switches.
    pub forward_on_path_switch: bool,
    /// X2 forwarding delay (s).
    pub x2_delay_s: f64,
    /// RRC reconfiguration round trip charged to a handover (s).
    pub rrc_control_delay_s: f64,

    // --- data plane ---
    /// File size pushed each interval (bytes).
    pub file_size_bytes: u64,
    /// File transmission interval (s).
    pub file_interval_s: f64,
    /// Time of the first file (s).
    pub first_file_at_s: f64,
    /// Per-file delay constraint (s).
    pub delay_constraint_s: f64,
    /// Stop serving a file once its deadline has passed.
    pub abort_on_deadline: bool,
    /// PDCP PDU size (bytes).
    pub pdu_bytes: u32,
    /// RLC buffer capacity per SN (bytes).
    pub rlc_buffer_bytes: u64,
    /// Spectral efficiency factor eta in rate = eta*W*log2(1+SINR).
    pub spectral_efficiency_factor: f64,
    /// Spectral efficiency cap (b/s/Hz).
    pub spectral_efficiency_max: f64,
    /// PDCP reordering enabled.
    pub reorder_enabled: bool,
    /// PDCP reordering window (s).
    pub reorder_window_s: f64,

    // --- run control ---
    pub scheme: Scheme,
    /// Master seed; all named streams derive from it.
    pub seed: u64,
    /// Simulated duration (s).
    pub duration_s: f64,
    /// Count files still in flight at run end as failures.
    pub count_inflight_as_failed: bool,
}

/// One pathloss parameter record (per link condition).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathlossEntry {
    pub alpha_db: f64,
    pub beta: f64,
    pub sigma_db: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            sn_tx_power_dbm: 30.0,
            mn_tx_power_dbm: 46.0,
            mmwave_bandwidth_hz: 1.0e9,
            lte_bandwidth_hz: 20.0e6,
            mmwave_carrier_ghz: 28.0,
            lte_dl_carrier_ghz: 2.1,
            sn_antenna_elements: 64,
            ue_antenna_elements: 16,
            g_main_db: None,
            g_side_db: 0.0,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 5.0,
            pathloss_los: PathlossEntry { alpha_db: 61.4, beta: 2.0, sigma_db: 5.8 },
            pathloss_nlos: PathlossEntry { alpha_db: 72.0, beta: 2.92, sigma_db: 8.7 },
            decorrelation_distance_m: 10.0,
            outage_threshold_db: -5.0,
            min_link_distance_m: 1.0,
            interference_mode: InterferenceMode::Active,

            area_width_m: 100.0,
            area_height_m: 100.0,
            inter_bs_distance_m: 50.0,
            sn_positions: Vec::new(),
            mn_position: None,
            ue_speed_mps: 10.0,
            street_waypoints: Vec::new(),
            ue_start_offset_m: 0.0,
            mobility_step_s: 1.0e-3,

            blockage_density_per_km2: 4000.0,
            blockage_dim_min_m: 1.0,
            blockage_dim_max_m: 2.0,
            blockage_orientation: OrientationMode::AxisAligned,
            blockage_count_mode: CountMode::Poisson,

            sinr_threshold_db: 20.0,
            ttt_s: 0.020,
            srs_period_s: 0.005,
            path_switch_hysteresis_db: 3.0,
            forward_on_path_switch: true,
            x2_delay_s: 1.0e-3,
            rrc_control_delay_s: 10.0e-3,

            file_size_bytes: 1_000_000,
            file_interval_s: 0.120,
            first_file_at_s: 0.0,
            delay_constraint_s: 0.120,
            abort_on_deadline: false,
            pdu_bytes: 1400,
            rlc_buffer_bytes: 100_000_000,
            spectral_efficiency_factor: 0.6,
            spectral_efficiency_max: 7.4,
            reorder_enabled: true,
            reorder_window_s: 0.050,

            scheme: Scheme::Dual,
            seed: 1,
            duration_s: 60.0,
            count_inflight_as_failed: false,
        }
    }
}

impl ScenarioConfig {
    /// Load and validate a config from a TOML file. An empty file yields
    /// the defaults.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
        Self::from_toml(&text)
    }

    /// Parse and validate a config from TOML text.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Aligned beam gain in dB (explicit override or derived from the
    /// antenna element counts).
    pub fn g_main(&self) -> f64 {
        self.g_main_db.unwrap_or_else(|| {
            10.0 * f64::from(self.sn_antenna_elements * self.ue_antenna_elements).log10()
        })
    }

    /// Validate every field, naming the offending one.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(name: &'static str, v: f64) -> Result<(), ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid { field: name, reason: "must be positive and finite" })
            }
        }
        fn non_negative(name: &'static str, v: f64) -> Result<(), ConfigError> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid { field: name, reason: "must be non-negative and finite" })
            }
        }

        positive("sn_tx_power_dbm", self.sn_tx_power_dbm)?;
        positive("mn_tx_power_dbm", self.mn_tx_power_dbm)?;
        positive("mmwave_bandwidth_hz", self.mmwave_bandwidth_hz)?;
        positive("lte_bandwidth_hz", self.lte_bandwidth_hz)?;
        positive("mmwave_carrier_ghz", self.mmwave_carrier_ghz)?;
        positive("lte_dl_carrier_ghz", self.lte_dl_carrier_ghz)?;
        if self.sn_antenna_elements == 0 {
            return Err(ConfigError::Invalid { field: "sn_antenna_elements", reason: "must be >= 1" });
        }
        if self.ue_antenna_elements == 0 {
            return Err(ConfigError::Invalid { field: "ue_antenna_elements", reason: "must be >= 1" });
        }
        if let Some(g) = self.g_main_db {
            if !g.is_finite() {
                return Err(ConfigError::Invalid { field: "g_main_db", reason: "must be finite" });
            }
            if g < self.g_side_db {
                return Err(ConfigError::Invalid { field: "g_main_db", reason: "must be >= g_side_db" });
            }
        }
        if !self.g_side_db.is_finite() {
            return Err(ConfigError::Invalid { field: "g_side_db", reason: "must be finite" });
        }
        if !self.noise_psd_dbm_hz.is_finite() {
            return Err(ConfigError::Invalid { field: "noise_psd_dbm_hz", reason: "must be finite" });
        }
        non_negative("noise_figure_db", self.noise_figure_db)?;
        for (name, e) in [("pathloss_los", &self.pathloss_los), ("pathloss_nlos", &self.pathloss_nlos)] {
            if !(e.beta > 0.0) || !e.alpha_db.is_finite() {
                return Err(ConfigError::Invalid { field: name, reason: "alpha must be finite, beta > 0" });
            }
            if !(e.sigma_db >= 0.0) {
                return Err(ConfigError::Invalid { field: name, reason: "sigma must be >= 0" });
            }
        }
        positive("decorrelation_distance_m", self.decorrelation_distance_m)?;
        if !self.outage_threshold_db.is_finite() {
            return Err(ConfigError::Invalid { field: "outage_threshold_db", reason: "must be finite" });
        }
        positive("min_link_distance_m", self.min_link_distance_m)?;

        positive("area_width_m", self.area_width_m)?;
        positive("area_height_m", self.area_height_m)?;
        positive("inter_bs_distance_m", self.inter_bs_distance_m)?;
        for p in &self.sn_positions {
            if !self.contains(p[0], p[1]) {
                return Err(ConfigError::Invalid { field: "sn_positions", reason: "position outside area bounds" });
            }
        }
        if let Some(p) = self.mn_position {
            if !self.contains(p[0], p[1]) {
                return Err(ConfigError::Invalid { field: "mn_position", reason: "position outside area bounds" });
            }
        }
        positive("ue_speed_mps", self.ue_speed_mps)?;
        if self.street_waypoints.len() == 1 {
            return Err(ConfigError::Invalid { field: "street_waypoints", reason: "need at least two waypoints" });
        }
        for p in &self.street_waypoints {
            if !self.contains(p[0], p[1]) {
                return Err(ConfigError::Invalid { field: "street_waypoints", reason: "waypoint outside area bounds" });
            }
        }
        non_negative("ue_start_offset_m", self.ue_start_offset_m)?;
        positive("mobility_step_s", self.mobility_step_s)?;

        non_negative("blockage_density_per_km2", self.blockage_density_per_km2)?;
        positive("blockage_dim_min_m", self.blockage_dim_min_m)?;
        if !(self.blockage_dim_max_m >= self.blockage_dim_min_m) {
            return Err(ConfigError::Invalid { field: "blockage_dim_max_m", reason: "must be >= blockage_dim_min_m" });
        }

        if !self.sinr_threshold_db.is_finite() {
            return Err(ConfigError::Invalid { field: "sinr_threshold_db", reason: "must be finite" });
        }
        non_negative("ttt_s", self.ttt_s)?;
        positive("srs_period_s", self.srs_period_s)?;
        non_negative("path_switch_hysteresis_db", self.path_switch_hysteresis_db)?;
        non_negative("x2_delay_s", self.x2_delay_s)?;
        non_negative("rrc_control_delay_s", self.rrc_control_delay_s)?;

        if self.file_size_bytes == 0 {
            return Err(ConfigError::Invalid { field: "file_size_bytes", reason: "must be >= 1" });
        }
        positive("file_interval_s", self.file_interval_s)?;
        non_negative("first_file_at_s", self.first_file_at_s)?;
        positive("delay_constraint_s", self.delay_constraint_s)?;
        if self.pdu_bytes == 0 {
            return Err(ConfigError::Invalid { field: "pdu_bytes", reason: "must be >= 1" });
        }
        if self.rlc_buffer_bytes == 0 {
            return Err(ConfigError::Invalid { field: "rlc_buffer_bytes", reason: "must be >= 1" });
        }
        positive("spectral_efficiency_factor", self.spectral_efficiency_factor)?;
        positive("spectral_efficiency_max", self.spectral_efficiency_max)?;
        non_negative("reorder_window_s", self.reorder_window_s)?;

        positive("duration_s", self.duration_s)?;
        Ok(())
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.area_width_m).contains(&x) && (0.0..=self.area_height_m).contains(&y)
    }
}

/// A parameter sweep: the Cartesian product of schemes, densities, file
/// sizes, and seed indices, enumerated in declaration order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Seed that all per-cell master seeds derive from.
    pub global_seed: u64,
    pub schemes: Vec<Scheme>,
    pub densities_per_km2: Vec<f64>,
    pub file_sizes_bytes: Vec<u64>,
    /// Number of seed indices (0..seeds).
    pub seeds: u32,
    /// Output directory for the sweep CSV.
    pub out_dir: Option<String>,
    /// Base scenario applied to every cell before the swept fields.
    pub base: ScenarioConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            global_seed: 1,
            schemes: vec![Scheme::Dual, Scheme::Single],
            densities_per_km2: vec![1000.0, 2000.0, 4000.0, 6000.0],
            file_sizes_bytes: vec![1_000_000],
            seeds: 20,
            out_dir: None,
            base: ScenarioConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let spec: SweepSpec =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schemes.is_empty() {
            return Err(ConfigError::Invalid { field: "schemes", reason: "must not be empty" });
        }
        if self.densities_per_km2.is_empty() {
            return Err(ConfigError::Invalid { field: "densities_per_km2", reason: "must not be empty" });
        }
        if self.file_sizes_bytes.is_empty() {
            return Err(ConfigError::Invalid { field: "file_sizes_bytes", reason: "must not be empty" });
        }
        if self.seeds == 0 {
            return Err(ConfigError::Invalid { field: "seeds", reason: "must be >= 1" });
        }
        for d in &self.densities_per_km2 {
            if !(*d >= 0.0) {
                return Err(ConfigError::Invalid { field: "densities_per_km2", reason: "must be non-negative" });
            }
        }
        self.base.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_yields_defaults() {
        let cfg = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(cfg.blockage_density_per_km2, 4000.0);
        assert_eq!(cfg.sinr_threshold_db, 20.0);
        assert_eq!(cfg.ttt_s, 0.020);
        assert_eq!(cfg.x2_delay_s, 1.0e-3);
        assert_eq!(cfg.rlc_buffer_bytes, 100_000_000);
        assert_eq!(cfg.scheme, Scheme::Dual);
    }

    #[test]
    fn negative_ttt_names_field() {
        let err = ScenarioConfig::from_toml("ttt_s = -5.0").unwrap_err();
        assert!(err.to_string().contains("ttt_s"), "{err}");
    }

    #[test]
    fn scheme_single_selects_baseline() {
        let cfg = ScenarioConfig::from_toml("scheme = \"single\"").unwrap();
        assert_eq!(cfg.scheme, Scheme::Single);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_toml("not_a_real_key = 1").is_err());
    }

    #[test]
    fn derived_beam_gain() {
        let cfg = ScenarioConfig::default();
        assert!((cfg.g_main() - 10.0 * 1024f64.log10()).abs() < 1e-12);
        let over = ScenarioConfig { g_main_db: Some(30.1), ..ScenarioConfig::default() };
        assert_eq!(over.g_main(), 30.1);
    }

    #[test]
    fn config_round_trip() {
        let cfg = ScenarioConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = ScenarioConfig::from_toml(&text).unwrap();
        assert_eq!(toml::to_string(&back).unwrap(), text);
    }

    #[test]
    fn sweep_defaults_cover_table_densities() {
        let spec = SweepSpec::from_toml("").unwrap();
        assert_eq!(spec.densities_per_km2, vec![1000.0, 2000.0, 4000.0, 6000.0]);
        assert_eq!(spec.schemes.len(), 2);
    }
}
