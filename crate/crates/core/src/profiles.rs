//! Static scenario data: split profiles, device profiles and the global
//! scenario configuration, plus the structured document they load from.
//!
//! Documents are TOML with four sections: `[scenario]`, `[server]`,
//! `[[clients]]` and `[[split_profiles]]`. Units are part of the key names
//! (`psi_cf_gflops`, `gamma_a_kb`, `p_w`, `f_ghz`, ...). Everything is
//! converted to SI base units (FLOPs, bits, W, Hz, s) on load.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// One binary kilobyte in bits.
pub const BITS_PER_KB: f64 = 8192.0;

/// The bundled default document.
pub const DEFAULT_SCENARIO: &str = include_str!("../data/default_scenario.toml");

/// FLOP and byte costs of the model partitioned at one split point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitProfile {
    pub split_point: u32,
    /// Client forward FLOPs per sample.
    pub psi_cf: f64,
    /// Server forward FLOPs per sample.
    pub psi_sf: f64,
    /// Client backward FLOPs per sample.
    pub psi_cb: f64,
    /// Server backward FLOPs per sample.
    pub psi_sb: f64,
    /// Client-side trainable parameters, bits.
    pub gamma_m: f64,
    /// Smashed data, bits per sample.
    pub gamma_a: f64,
    /// Smashed-data gradients, bits per sample.
    pub gamma_g: f64,
}

impl SplitProfile {
    /// Builds a profile with backward costs derived from `sigma` and gradients
    /// the same size as the smashed data.
    pub fn derived(split_point: u32, psi_cf: f64, psi_sf: f64, gamma_m: f64, gamma_a: f64, sigma: f64) -> Self {
        SplitProfile {
            split_point,
            psi_cf,
            psi_sf,
            psi_cb: sigma * psi_cf,
            psi_sb: sigma * psi_sf,
            gamma_m,
            gamma_a,
            gamma_g: gamma_a,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let u = self.split_point;
        for (name, v) in [
            ("psi_cf", self.psi_cf),
            ("psi_sf", self.psi_sf),
            ("psi_cb", self.psi_cb),
            ("psi_sb", self.psi_sb),
            ("gamma_m", self.gamma_m),
            ("gamma_a", self.gamma_a),
            ("gamma_g", self.gamma_g),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(format!("split_profiles[u={u}].{name}"), v, "must be positive"));
            }
        }
        Ok(())
    }
}

/// A UAV client's radio and compute capabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    /// Transmit power, W.
    pub transmit_power: f64,
    /// Computing frequency, cycles/s.
    pub freq: f64,
    /// Computing intensity, FLOPs/cycle.
    pub intensity: f64,
    /// Energy coefficient, W/(cycle/s)^3.
    pub energy_coeff: f64,
}

impl ClientProfile {
    /// Sustained FLOPs/s, `kappa_k * f_k`.
    pub fn flops_per_s(&self) -> f64 {
        self.intensity * self.freq
    }

    /// Compute power draw, `omega_k * f_k^3`, W.
    pub fn compute_power(&self) -> f64 {
        self.energy_coeff * self.freq.powi(3)
    }
}

/// Base station resources and allocation limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerProfile {
    pub total_power: f64,
    pub freq: f64,
    pub intensity: f64,
    pub uplink_bw: f64,
    pub downlink_bw: f64,
    /// Noise power spectral density, W/Hz.
    pub noise_psd: f64,
    pub alpha_min: f64,
    pub beta_min: f64,
    pub rho_min: f64,
}

impl ServerProfile {
    pub fn flops_per_s(&self) -> f64 {
        self.intensity * self.freq
    }
}

/// Horizontal annulus around the base station a UAV stays in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub inner_m: f64,
    pub outer_m: f64,
}

/// Geometry and mobility shared by all UAVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilitySpec {
    pub bs_position: [f64; 3],
    pub uav_height_m: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub carrier_hz: f64,
}

/// Round-structure and objective constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Number of clients K.
    pub clients: usize,
    /// Local iterations per round I.
    pub local_iterations: usize,
    /// Rounds N.
    pub rounds: usize,
    /// Batch size B in samples.
    pub batch_size: usize,
    /// Backward/forward FLOP ratio.
    pub sigma: f64,
    /// Slot length, s.
    pub slot_s: f64,
    /// Energy weight lambda, s/J.
    pub energy_weight: f64,
    pub split_set: Vec<u32>,
    pub rng_seed: u64,
}

/// A fully validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub server: ServerProfile,
    pub clients: Vec<ClientProfile>,
    pub rings: Vec<Ring>,
    pub mobility: MobilitySpec,
    pub splits: Vec<SplitProfile>,
}

impl Scenario {
    pub fn k(&self) -> usize {
        self.clients.len()
    }

    pub fn split(&self, u: u32) -> Result<&SplitProfile, ConfigError> {
        self.splits
            .iter()
            .find(|p| p.split_point == u)
            .ok_or(ConfigError::UnknownSplit(u))
    }

    /// Replaces the client set and sets every minimum fraction to `1/(5K)`.
    pub fn with_clients(mut self, clients: Vec<ClientProfile>, rings: Vec<Ring>) -> Self {
        assert_eq!(clients.len(), rings.len());
        let k = clients.len();
        self.clients = clients;
        self.rings = rings;
        self.config.clients = k;
        let floor = 1.0 / (5.0 * k as f64);
        self.server.alpha_min = floor;
        self.server.beta_min = floor;
        self.server.rho_min = floor;
        self
    }

    /// Checks every invariant of the profiles and configuration.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        let k = self.clients.len();
        if k == 0 || c.clients != k {
            return Err(ConfigError::invalid("clients", k, "need at least one client"));
        }
        if self.rings.len() != k {
            return Err(ConfigError::invalid("clients.ring", self.rings.len(), "one ring per client"));
        }
        if c.local_iterations == 0 {
            return Err(ConfigError::invalid("scenario.local_iterations", 0, "must be >= 1"));
        }
        if c.batch_size == 0 {
            return Err(ConfigError::invalid("scenario.batch_size", 0, "must be >= 1"));
        }
        if !(c.slot_s > 0.0 && c.slot_s.is_finite()) {
            return Err(ConfigError::invalid("scenario.slot_s", c.slot_s, "must be positive"));
        }
        if !(c.energy_weight >= 0.0 && c.energy_weight.is_finite()) {
            return Err(ConfigError::invalid("scenario.energy_weight_s_per_j", c.energy_weight, "must be >= 0"));
        }
        if !(c.sigma > 0.0 && c.sigma.is_finite()) {
            return Err(ConfigError::invalid("scenario.bp_fp_ratio", c.sigma, "must be positive"));
        }
        if c.split_set.is_empty() {
            return Err(ConfigError::invalid("scenario.split_set", "[]", "must be nonempty"));
        }
        for &u in &c.split_set {
            self.split(u)?;
        }
        for p in &self.splits {
            p.validate()?;
        }

        let s = &self.server;
        for (name, v) in [
            ("server.total_power_w", s.total_power),
            ("server.freq_ghz", s.freq),
            ("server.peak_tflops", s.intensity),
            ("server.uplink_bw_mhz", s.uplink_bw),
            ("server.downlink_bw_mhz", s.downlink_bw),
            ("server.noise_psd_dbm_per_mhz", s.noise_psd),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(name, v, "must be positive"));
            }
        }
        let cap = 1.0 / k as f64;
        for (name, v) in [
            ("server.alpha_min", s.alpha_min),
            ("server.beta_min", s.beta_min),
            ("server.rho_min", s.rho_min),
        ] {
            // tolerate the rounding in 1/(5K) style values
            if !(v >= 0.0 && v <= cap * (1.0 + 1e-12)) {
                return Err(ConfigError::invalid(name, v, format!("must lie in [0, 1/K] = [0, {cap}]")));
            }
        }

        for (i, cl) in self.clients.iter().enumerate() {
            for (name, v) in [
                ("p_w", cl.transmit_power),
                ("f_ghz", cl.freq),
                ("peak_tflops", cl.intensity),
                ("omega_w_per_ghz3", cl.energy_coeff),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::invalid(format!("clients[{i}].{name}"), v, "must be positive"));
                }
            }
            let r = self.rings[i];
            if !(r.inner_m >= 0.0 && r.inner_m < r.outer_m) {
                return Err(ConfigError::invalid(
                    format!("clients[{i}].ring_inner_m"),
                    r.inner_m,
                    format!("must be >= 0 and below ring_outer_m ({})", r.outer_m),
                ));
            }
        }

        let m = &self.mobility;
        if !(m.speed_min >= 0.0 && m.speed_min <= m.speed_max) {
            return Err(ConfigError::invalid("scenario.speed_min_mps", m.speed_min, "must be in [0, speed_max_mps]"));
        }
        if !(m.carrier_hz > 0.0) {
            return Err(ConfigError::invalid("scenario.carrier_ghz", m.carrier_hz, "must be positive"));
        }
        Ok(())
    }

    /// Serializes back into the structured document format.
    pub fn to_document(&self) -> String {
        let doc = ScenarioDoc::from(self);
        toml::to_string_pretty(&doc).expect("scenario document serializes")
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(source: &str) -> Result<Scenario, ConfigError> {
    let doc: ScenarioDoc = toml::from_str(source).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let scenario = doc.into_scenario()?;
    scenario.validate()?;
    Ok(scenario)
}

/// The bundled default scenario.
pub fn builtin_scenario() -> Scenario {
    let s = load_scenario(DEFAULT_SCENARIO).expect("bundled document is valid");
    // The bundled table shrinks the smashed data as the split moves deeper.
    debug_assert!(s.splits.windows(2).all(|w| w[1].gamma_a <= w[0].gamma_a));
    s
}

/// Converts a noise PSD given in dBm/MHz into W/Hz.
pub fn dbm_per_mhz_to_w_per_hz(dbm_per_mhz: f64) -> f64 {
    10f64.powf(dbm_per_mhz / 10.0) * 1e-3 / 1e6
}

fn w_per_hz_to_dbm_per_mhz(w_per_hz: f64) -> f64 {
    10.0 * (w_per_hz * 1e6 / 1e-3).log10()
}

// ----------------------------------------------------------------------------
// document schema

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    scenario: ScenarioSection,
    server: ServerSection,
    clients: Vec<ClientEntry>,
    split_profiles: Vec<SplitEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    local_iterations: usize,
    rounds: usize,
    batch_size: usize,
    bp_fp_ratio: f64,
    slot_s: f64,
    energy_weight_s_per_j: f64,
    split_set: Vec<u32>,
    rng_seed: u64,
    bs_position_m: [f64; 3],
    uav_height_m: f64,
    speed_min_mps: f64,
    speed_max_mps: f64,
    carrier_ghz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServerSection {
    total_power_w: f64,
    freq_ghz: f64,
    peak_tflops: f64,
    uplink_bw_mhz: f64,
    downlink_bw_mhz: f64,
    noise_psd_dbm_per_mhz: f64,
    alpha_min: f64,
    beta_min: f64,
    rho_min: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClientEntry {
    p_w: f64,
    f_ghz: f64,
    peak_tflops: f64,
    omega_w_per_ghz3: f64,
    ring_inner_m: f64,
    ring_outer_m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitEntry {
    u: u32,
    psi_cf_gflops: f64,
    psi_sf_gflops: f64,
    gamma_m_kb: f64,
    gamma_a_kb: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    psi_cb_gflops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    psi_sb_gflops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma_g_kb: Option<f64>,
}

const GIGA: f64 = 1e9;
const TERA: f64 = 1e12;
const MEGA: f64 = 1e6;

impl ScenarioDoc {
    fn into_scenario(self) -> Result<Scenario, ConfigError> {
        let sc = self.scenario;
        let sigma = sc.bp_fp_ratio;
        let k = self.clients.len();
        if sc.speed_max_mps < 0.0 {
            return Err(ConfigError::invalid("scenario.speed_max_mps", sc.speed_max_mps, "must be >= 0"));
        }
        let sv = self.server;
        if !(sv.freq_ghz > 0.0) {
            return Err(ConfigError::invalid("server.freq_ghz", sv.freq_ghz, "must be positive"));
        }
        let server = ServerProfile {
            total_power: sv.total_power_w,
            freq: sv.freq_ghz * GIGA,
            intensity: sv.peak_tflops * TERA / (sv.freq_ghz * GIGA),
            uplink_bw: sv.uplink_bw_mhz * MEGA,
            downlink_bw: sv.downlink_bw_mhz * MEGA,
            noise_psd: dbm_per_mhz_to_w_per_hz(sv.noise_psd_dbm_per_mhz),
            alpha_min: sv.alpha_min,
            beta_min: sv.beta_min,
            rho_min: sv.rho_min,
        };
        let mut clients = Vec::with_capacity(k);
        let mut rings = Vec::with_capacity(k);
        for (i, c) in self.clients.into_iter().enumerate() {
            if !(c.f_ghz > 0.0) {
                return Err(ConfigError::invalid(format!("clients[{i}].f_ghz"), c.f_ghz, "must be positive"));
            }
            let freq = c.f_ghz * GIGA;
            clients.push(ClientProfile {
                transmit_power: c.p_w,
                freq,
                intensity: c.peak_tflops * TERA / freq,
                energy_coeff: c.omega_w_per_ghz3 / GIGA.powi(3),
            });
            rings.push(Ring {
                inner_m: c.ring_inner_m,
                outer_m: c.ring_outer_m,
            });
        }
        let splits = self
            .split_profiles
            .into_iter()
            .map(|e| {
                let mut p = SplitProfile::derived(
                    e.u,
                    e.psi_cf_gflops * GIGA,
                    e.psi_sf_gflops * GIGA,
                    e.gamma_m_kb * BITS_PER_KB,
                    e.gamma_a_kb * BITS_PER_KB,
                    sigma,
                );
                if let Some(v) = e.psi_cb_gflops {
                    p.psi_cb = v * GIGA;
                }
                if let Some(v) = e.psi_sb_gflops {
                    p.psi_sb = v * GIGA;
                }
                if let Some(v) = e.gamma_g_kb {
                    p.gamma_g = v * BITS_PER_KB;
                }
                p
            })
            .collect();
        Ok(Scenario {
            config: ScenarioConfig {
                clients: k,
                local_iterations: sc.local_iterations,
                rounds: sc.rounds,
                batch_size: sc.batch_size,
                sigma,
                slot_s: sc.slot_s,
                energy_weight: sc.energy_weight_s_per_j,
                split_set: sc.split_set,
                rng_seed: sc.rng_seed,
            },
            server,
            clients,
            rings,
            mobility: MobilitySpec {
                bs_position: sc.bs_position_m,
                uav_height_m: sc.uav_height_m,
                speed_min: sc.speed_min_mps,
                speed_max: sc.speed_max_mps,
                carrier_hz: sc.carrier_ghz * GIGA,
            },
            splits,
        })
    }
}

impl From<&Scenario> for ScenarioDoc {
    fn from(s: &Scenario) -> Self {
        let c = &s.config;
        let m = &s.mobility;
        ScenarioDoc {
            scenario: ScenarioSection {
                local_iterations: c.local_iterations,
                rounds: c.rounds,
                batch_size: c.batch_size,
                bp_fp_ratio: c.sigma,
                slot_s: c.slot_s,
                energy_weight_s_per_j: c.energy_weight,
                split_set: c.split_set.clone(),
                rng_seed: c.rng_seed,
                bs_position_m: m.bs_position,
                uav_height_m: m.uav_height_m,
                speed_min_mps: m.speed_min,
                speed_max_mps: m.speed_max,
                carrier_ghz: m.carrier_hz / GIGA,
            },
            server: ServerSection {
                total_power_w: s.server.total_power,
                freq_ghz: s.server.freq / GIGA,
                peak_tflops: s.server.flops_per_s() / TERA,
                uplink_bw_mhz: s.server.uplink_bw / MEGA,
                downlink_bw_mhz: s.server.downlink_bw / MEGA,
                noise_psd_dbm_per_mhz: w_per_hz_to_dbm_per_mhz(s.server.noise_psd),
                alpha_min: s.server.alpha_min,
                beta_min: s.server.beta_min,
                rho_min: s.server.rho_min,
            },
            clients: s
                .clients
                .iter()
                .zip(&s.rings)
                .map(|(cl, r)| ClientEntry {
                    p_w: cl.transmit_power,
                    f_ghz: cl.freq / GIGA,
                    peak_tflops: cl.flops_per_s() / TERA,
                    omega_w_per_ghz3: cl.energy_coeff * GIGA.powi(3),
                    ring_inner_m: r.inner_m,
                    ring_outer_m: r.outer_m,
                })
                .collect(),
            split_profiles: s
                .splits
                .iter()
                .map(|p| {
                    let derived = SplitProfile::derived(p.split_point, p.psi_cf, p.psi_sf, p.gamma_m, p.gamma_a, c.sigma);
                    SplitEntry {
                        u: p.split_point,
                        psi_cf_gflops: p.psi_cf / GIGA,
                        psi_sf_gflops: p.psi_sf / GIGA,
                        gamma_m_kb: p.gamma_m / BITS_PER_KB,
                        gamma_a_kb: p.gamma_a / BITS_PER_KB,
                        psi_cb_gflops: (p.psi_cb != derived.psi_cb).then(|| p.psi_cb / GIGA),
                        psi_sb_gflops: (p.psi_sb != derived.psi_sb).then(|| p.psi_sb / GIGA),
                        gamma_g_kb: (p.gamma_g != derived.gamma_g).then(|| p.gamma_g / BITS_PER_KB),
                    }
                })
                .collect(),
        }
    }
}
