//! Pathloss, spatially correlated shadowing, interference-aware SINR, and
//! the three-way link classification that drives handover decisions.
//!
//! SN links use the 28 GHz log-distance model with separate LOS/NLOS
//! parameters; the MN link uses the LTE macro log-distance model and never
//! enters outage. All the arithmetic here is pure; mutable state is limited
//! to the per-link [`ShadowingState`].

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{InterferenceMode, PathlossEntry};
use crate::geometry::Vec2;

/// Link condition as seen by the mobility controllers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkClass {
    Los,
    Nlos,
    Outage,
}

/// One SN measurement at a reporting instant.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinkReport {
    pub sn: u32,
    pub sinr_db: f64,
    pub class: LinkClass,
    pub report_time: f64,
}

impl LinkReport {
    /// Connectable means not in outage.
    pub fn connectable(&self) -> bool {
        self.class != LinkClass::Outage
    }
}

/// Radio constants shared by every link of one BS class.
#[derive(Debug, Clone, Copy)]
pub struct RadioParams {
    pub tx_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub g_main_db: f64,
    pub g_side_db: f64,
}

impl RadioParams {
    /// Thermal noise power in mW: W * N0 * NF.
    pub fn noise_mw(&self) -> f64 {
        self.bandwidth_hz
            * 10f64.powf(self.noise_psd_dbm_hz / 10.0)
            * 10f64.powf(self.noise_figure_db / 10.0)
    }
}

/// PL(d) = alpha + beta * 10 * log10(d) + xi, d in meters.
pub fn pathloss_db(d_m: f64, params: &PathlossEntry, xi_db: f64) -> f64 {
    debug_assert!(d_m > 0.0, "caller clamps distance to the configured minimum");
    params.alpha_db + params.beta * 10.0 * d_m.log10() + xi_db
}

/// LTE macro model for the MN link: 128.1 + 37.6 * log10(d_km).
pub fn mn_pathloss_db(d_m: f64) -> f64 {
    debug_assert!(d_m > 0.0);
    128.1 + 37.6 * (d_m / 1000.0).log10()
}

/// Per-link spatially correlated shadowing.
///
/// The state tracks a normalized AR(1) process z with unit marginal
/// variance; the dB value is sigma * z so the marginal tracks the sigma of
/// whichever condition (LOS/NLOS) the link currently has.
#[derive(Debug, Clone)]
pub struct ShadowingState {
    z: f64,
    last_pos: Option<Vec2>,
    pub decorrelation_m: f64,
}

impl ShadowingState {
    pub fn new(decorrelation_m: f64) -> Self {
        Self { z: 0.0, last_pos: None, decorrelation_m }
    }

    /// Advance to a new UE position: z' = rho z + sqrt(1-rho^2) N(0,1) with
    /// rho = exp(-dd / decorrelation). The first call draws the stationary
    /// initial value. Exactly one normal variate is consumed per call.
    pub fn update(&mut self, new_pos: Vec2, rng: &mut impl Rng) -> f64 {
        let n: f64 = StandardNormal.sample(rng);
        match self.last_pos {
            None => {
                self.z = n;
            }
            Some(prev) => {
                let dd = prev.distance(new_pos);
                let rho = (-dd / self.decorrelation_m).exp();
                self.z = rho * self.z + (1.0 - rho * rho).sqrt() * n;
            }
        }
        self.last_pos = Some(new_pos);
        self.z
    }

    /// Current normalized value.
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Current shadowing in dB under the given condition sigma.
    pub fn xi_db(&self, sigma_db: f64) -> f64 {
        sigma_db * self.z
    }
}

/// Spec-shaped convenience: update and scale in one call, returning xi in
/// dB for a fixed-sigma link.
pub fn update_shadowing(
    state: &mut ShadowingState,
    new_pos: Vec2,
    sigma_db: f64,
    rng: &mut impl Rng,
) -> f64 {
    sigma_db * state.update(new_pos, rng)
}

/// Everything SINR evaluation needs to know about one candidate/interferer
/// link at the current instant.
#[derive(Debug, Clone, Copy)]
pub struct LinkState {
    pub distance_m: f64,
    pub los: bool,
    pub xi_db: f64,
    pub channel: u8,
}

/// Linear-domain SINR of link `serving` against interference plus thermal
/// noise. The measured link gets `g_main`; interferers get `g_side`, with
/// pathloss condition per link from its `los` flag.
///
/// Interferer selection follows the mode: `Active` counts nobody (one UE,
/// one transmitter per carrier — the BS a candidate would displace does
/// not interfere with it), `CoChannel` counts every co-channel SN as
/// always loaded, `AllBs` ignores the carrier split too.
pub fn sinr_db(
    serving: usize,
    links: &[LinkState],
    radio: &RadioParams,
    los_params: &PathlossEntry,
    nlos_params: &PathlossEntry,
    min_distance_m: f64,
    mode: InterferenceMode,
) -> f64 {
    let pl = |l: &LinkState| {
        let d = l.distance_m.max(min_distance_m);
        let params = if l.los { los_params } else { nlos_params };
        pathloss_db(d, params, l.xi_db)
    };

    let s = &links[serving];
    let signal_mw = 10f64.powf((radio.tx_power_dbm + radio.g_main_db - pl(s)) / 10.0);

    let mut interference_mw = 0.0;
    if mode != InterferenceMode::Active {
        for (k, l) in links.iter().enumerate() {
            if k == serving {
                continue;
            }
            if mode == InterferenceMode::CoChannel && l.channel != s.channel {
                continue;
            }
            interference_mw += 10f64.powf((radio.tx_power_dbm + radio.g_side_db - pl(l)) / 10.0);
        }
    }

    10.0 * (signal_mw / (interference_mw + radio.noise_mw())).log10()
}

/// SINR of the MN link: no interferer (single MN), no beamforming gain.
pub fn mn_sinr_db(distance_m: f64, radio: &RadioParams, min_distance_m: f64) -> f64 {
    let pl = mn_pathloss_db(distance_m.max(min_distance_m));
    let signal_mw = 10f64.powf((radio.tx_power_dbm - pl) / 10.0);
    10.0 * (signal_mw / radio.noise_mw()).log10()
}

/// Outage below the threshold; otherwise LOS or NLOS per geometry.
pub fn classify(sinr_db: f64, los: bool, outage_threshold_db: f64) -> LinkClass {
    if sinr_db < outage_threshold_db {
        LinkClass::Outage
    } else if los {
        LinkClass::Los
    } else {
        LinkClass::Nlos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    const LOS: PathlossEntry = PathlossEntry { alpha_db: 61.4, beta: 2.0, sigma_db: 5.8 };
    const NLOS: PathlossEntry = PathlossEntry { alpha_db: 72.0, beta: 2.92, sigma_db: 8.7 };

    fn radio(nf: f64) -> RadioParams {
        RadioParams {
            tx_power_dbm: 30.0,
            bandwidth_hz: 1.0e9,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: nf,
            g_main_db: 30.1,
            g_side_db: 0.0,
        }
    }

    #[test]
    fn pathloss_hand_values() {
        assert!((pathloss_db(1.0, &LOS, 0.0) - 61.4).abs() < 1e-12);
        assert!((pathloss_db(100.0, &LOS, 0.0) - 101.4).abs() < 1e-12);
        assert!((pathloss_db(50.0, &NLOS, 0.0) - 121.61).abs() < 0.01);
    }

    #[test]
    fn pathloss_increases_with_distance() {
        let mut last = f64::NEG_INFINITY;
        for d in [1.0, 2.0, 5.0, 10.0, 50.0, 100.0, 500.0] {
            let pl = pathloss_db(d, &LOS, 0.0);
            assert!(pl > last);
            last = pl;
        }
    }

    #[test]
    fn shadowing_zero_displacement_keeps_value() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut st = ShadowingState::new(10.0);
        let pos = Vec2::new(5.0, 5.0);
        let z0 = st.update(pos, &mut rng);
        let z1 = st.update(pos, &mut rng);
        assert_eq!(z0, z1, "rho = 1 at zero displacement");
    }

    #[test]
    fn shadowing_large_displacement_decorrelates() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut st = ShadowingState::new(10.0);
        st.update(Vec2::new(0.0, 0.0), &mut rng);
        // 10^6 m >> decorrelation: rho underflows to 0, z' is a fresh draw.
        let z1 = st.update(Vec2::new(1.0e6, 0.0), &mut rng);
        let mut ref_rng = ChaCha12Rng::seed_from_u64(7);
        let _: f64 = StandardNormal.sample(&mut ref_rng);
        let fresh: f64 = StandardNormal.sample(&mut ref_rng);
        assert!((z1 - fresh).abs() < 1e-12);
    }

    #[test]
    fn shadowing_stationary_variance() {
        // AR(1) with rho = exp(-1): sample variance over 1e5 steps stays
        // within 5% of sigma^2.
        let sigma = 5.8;
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let mut st = ShadowingState::new(10.0);
        let mut pos = Vec2::new(0.0, 0.0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            pos.x += 10.0;
            let xi = update_shadowing(&mut st, pos, sigma, &mut rng);
            sum += xi;
            sumsq += xi * xi;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let target = sigma * sigma;
        assert!((var - target).abs() / target < 0.05, "var {var} target {target}");
    }

    #[test]
    fn sinr_single_bs_hand_value() {
        // P=30, Gmain=30.1, PL=101.4 (d=100 LOS), W=1 GHz, NF=0:
        // noise -84 dBm, SINR = 30 + 30.1 - 101.4 + 84 = 42.7 dB.
        let links = [LinkState { distance_m: 100.0, los: true, xi_db: 0.0, channel: 0 }];
        let got = sinr_db(0, &links, &radio(0.0), &LOS, &NLOS, 1.0, InterferenceMode::CoChannel);
        assert!((got - 42.7).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn sinr_equal_interferer_near_zero_db() {
        // One co-channel interferer whose received power equals the serving
        // received power (after the gain difference) and negligible noise.
        let mut r = radio(0.0);
        r.g_side_db = 30.1; // same gain so equal distance => equal rx power
        r.noise_psd_dbm_hz = -300.0;
        let links = [
            LinkState { distance_m: 50.0, los: true, xi_db: 0.0, channel: 0 },
            LinkState { distance_m: 50.0, los: true, xi_db: 0.0, channel: 0 },
        ];
        let got = sinr_db(0, &links, &r, &LOS, &NLOS, 1.0, InterferenceMode::CoChannel);
        assert!(got.abs() < 1e-9, "got {got}");
    }

    #[test]
    fn off_channel_interferer_ignored_by_default() {
        let links = [
            LinkState { distance_m: 100.0, los: true, xi_db: 0.0, channel: 0 },
            LinkState { distance_m: 10.0, los: true, xi_db: 0.0, channel: 1 },
        ];
        let solo = [links[0]];
        let with_off = sinr_db(0, &links, &radio(0.0), &LOS, &NLOS, 1.0, InterferenceMode::CoChannel);
        let alone = sinr_db(0, &solo, &radio(0.0), &LOS, &NLOS, 1.0, InterferenceMode::CoChannel);
        assert_eq!(with_off, alone);
        // With the all-BS flag it does interfere.
        let all = sinr_db(0, &links, &radio(0.0), &LOS, &NLOS, 1.0, InterferenceMode::AllBs);
        assert!(all < alone);
    }

    #[test]
    fn removing_interferer_never_decreases_sinr() {
        let links = [
            LinkState { distance_m: 40.0, los: true, xi_db: 0.0, channel: 0 },
            LinkState { distance_m: 60.0, los: false, xi_db: 1.5, channel: 0 },
            LinkState { distance_m: 80.0, los: true, xi_db: -2.0, channel: 0 },
        ];
        let full = sinr_db(0, &links, &radio(5.0), &LOS, &NLOS, 1.0, InterferenceMode::CoChannel);
        let fewer = [links[0], links[1]];
        let reduced = sinr_db(0, &fewer, &radio(5.0), &LOS, &NLOS, 1.0, InterferenceMode::CoChannel);
        assert!(reduced >= full);
    }

    #[test]
    fn sinr_decreases_with_serving_distance() {
        let mut last = f64::INFINITY;
        for d in [10.0, 20.0, 40.0, 80.0] {
            let links = [LinkState { distance_m: d, los: true, xi_db: 0.0, channel: 0 }];
            let s = sinr_db(0, &links, &radio(5.0), &LOS, &NLOS, 1.0, InterferenceMode::CoChannel);
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn classify_cases() {
        assert_eq!(classify(-20.0, true, -5.0), LinkClass::Outage);
        assert_eq!(classify(10.0, true, -5.0), LinkClass::Los);
        assert_eq!(classify(10.0, false, -5.0), LinkClass::Nlos);
        // Boundary: exactly at the threshold is not outage.
        assert_eq!(classify(-5.0, false, -5.0), LinkClass::Nlos);
    }

    #[test]
    fn mn_link_hand_value() {
        // d = 1000 m => PL = 128.1 dB exactly.
        assert!((mn_pathloss_db(1000.0) - 128.1).abs() < 1e-12);
        // 20 MHz, NF 0: noise = -174 + 73.01 = -100.99 dBm.
        let r = RadioParams {
            tx_power_dbm: 46.0,
            bandwidth_hz: 20.0e6,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 0.0,
            g_main_db: 0.0,
            g_side_db: 0.0,
        };
        let got = mn_sinr_db(1000.0, &r, 1.0);
        let want = 46.0 - 128.1 + 174.0 - 10.0 * (20.0e6f64).log10();
        assert!((got - want).abs() < 1e-9);
    }
}
