//! Run configuration: every simulation parameter as a named, overridable
//! field, plus the flat `key = value` config-file format.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::kernel::Micros;

/// Buffer-management policy applied to the multi-flow test user's MAC-hs
/// queue. Background single-flow users always get a plain FIFO queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    /// No buffer management: one order-of-arrival list of capacity N.
    Fifo,
    /// Time-Space Priority: RT admission threshold R, head-of-line RT service.
    Tsp,
    /// TSP plus thresholds L/H and credit-based Iub flow control.
    Etsp,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Fifo, Policy::Tsp, Policy::Etsp];

    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Fifo => "fifo",
            Policy::Tsp => "tsp",
            Policy::Etsp => "etsp",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fifo" => Ok(Policy::Fifo),
            "tsp" => Ok(Policy::Tsp),
            "etsp" => Ok(Policy::Etsp),
            other => Err(ConfigError::BadValue {
                key: "policy".into(),
                value: other.into(),
            }),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("malformed line `{0}` (expected `key = value`)")]
    MalformedLine(String),
    #[error("bad value `{value}` for key `{key}`")]
    BadValue { key: String, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One adaptive modulation-and-coding scheme: selection threshold and the
/// transport-block size it carries per TTI.
#[derive(Debug, Clone, PartialEq)]
pub struct McsScheme {
    pub name: String,
    pub sinr_threshold_db: f64,
    pub tbs_bits: u32,
}

/// Full run configuration. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub master_seed: u64,
    /// Session length in seconds.
    pub sim_duration_s: f64,
    /// Total users in the cell including the multi-flow test user.
    pub n_users: u32,
    pub policy: Policy,

    // Air interface
    pub tti_us: Micros,
    pub pdu_size_bits: u32,
    pub hsdsch_codes: u32,
    pub cqi_delay_ttis: u32,
    pub harq_processes: u32,
    pub harq_feedback_delay_us: Micros,
    pub max_harq_tx: u32,
    pub harq_combining_gain_db: f64,
    /// AMC scheme names (parallel to thresholds and block sizes).
    pub mcs_names: Vec<String>,
    pub mcs_thresholds_db: Vec<f64>,
    pub mcs_tbs_bits: Vec<u32>,

    // Link budget and channel
    pub total_nodeb_power_w: f64,
    pub hsdsch_power_fraction: f64,
    pub noise_floor_dbm: f64,
    pub path_loss_const_db: f64,
    pub path_loss_slope_db: f64,
    pub shadow_sigma_db: f64,
    pub shadow_decorr_ms: f64,
    pub test_ue_distance_km: f64,
    pub bg_min_distance_km: f64,
    pub bg_max_distance_km: f64,

    // Transport network
    pub iub_delay_us: Micros,
    pub external_cn_delay_us: Micros,
    /// HS-DSCH frame period; cadence of RNC buffer-occupancy reports.
    pub hs_dsch_frame_ms: u64,

    // Buffer management thresholds (PDUs)
    pub threshold_r: u32,
    pub threshold_l: u32,
    pub threshold_h: u32,
    pub queue_capacity_n: u32,

    // Credit allocation
    pub ewma_alpha: f64,
    pub overflow_k: f64,
    pub lambda_rt_bps: f64,
    pub lambda_nrt_seed_bps: f64,

    // RLC
    pub rlc_am_tx_window: u32,
    pub rlc_max_retx: u32,
    pub status_interval_us: Micros,
    /// Fallback before a NACK may repeat an outstanding copy when no
    /// later-dispatched traffic has been acknowledged in the meantime.
    pub rlc_nack_holdoff_us: Micros,

    // TCP
    pub tcp_mss_bytes: u32,
    pub tcp_header_bytes: u32,
    pub tcp_rwnd_segments: u32,
    pub tcp_initial_cwnd_segments: u32,
    pub tcp_initial_rto_ms: u64,
    pub tcp_min_rto_ms: u64,
    pub tcp_max_rto_ms: u64,

    // VoIP source
    pub voip_packet_interval_ms: u64,
    pub voip_packet_bits: u32,
    pub voip_mean_on_s: f64,
    pub voip_mean_off_s: f64,

    // Metrics
    pub throughput_window_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            sim_duration_s: 120.0,
            n_users: 1,
            policy: Policy::Fifo,

            tti_us: 2_000,
            pdu_size_bits: 320,
            hsdsch_codes: 5,
            cqi_delay_ttis: 3,
            harq_processes: 4,
            harq_feedback_delay_us: 5_000,
            max_harq_tx: 4,
            harq_combining_gain_db: 3.0,
            mcs_names: vec![
                "qpsk-1/4".into(),
                "qpsk-1/2".into(),
                "qpsk-3/4".into(),
                "16qam-1/4".into(),
                "16qam-1/2".into(),
            ],
            mcs_thresholds_db: vec![-2.0, 1.0, 4.0, 7.0, 10.0],
            mcs_tbs_bits: vec![1200, 2400, 3600, 2400, 4800],

            total_nodeb_power_w: 15.0,
            hsdsch_power_fraction: 0.5,
            noise_floor_dbm: -100.0,
            path_loss_const_db: 148.0,
            path_loss_slope_db: 40.0,
            shadow_sigma_db: 8.0,
            shadow_decorr_ms: 50.0,
            test_ue_distance_km: 0.2,
            bg_min_distance_km: 0.1,
            bg_max_distance_km: 1.0,

            iub_delay_us: 20_000,
            external_cn_delay_us: 70_000,
            hs_dsch_frame_ms: 10,

            threshold_r: 10,
            threshold_l: 30,
            threshold_h: 100,
            queue_capacity_n: 150,

            ewma_alpha: 0.7,
            overflow_k: 0.5,
            lambda_rt_bps: 16_000.0,
            // one top-rate transport block per TTI; the estimator converges
            // onto the actually scheduled rate within a few TTIs of activity
            lambda_nrt_seed_bps: 2_400_000.0,

            rlc_am_tx_window: 1024,
            rlc_max_retx: 6,
            status_interval_us: 10_000,
            rlc_nack_holdoff_us: 200_000,

            tcp_mss_bytes: 536,
            tcp_header_bytes: 40,
            tcp_rwnd_segments: 64,
            tcp_initial_cwnd_segments: 1,
            tcp_initial_rto_ms: 3_000,
            tcp_min_rto_ms: 1_000,
            tcp_max_rto_ms: 60_000,

            voip_packet_interval_ms: 20,
            voip_packet_bits: 320,
            voip_mean_on_s: 3.0,
            voip_mean_off_s: 3.0,

            throughput_window_s: 1.0,
        }
    }
}

macro_rules! config_keys {
    ($(($field:ident, $kind:ident)),* $(,)?) => {
        impl RunConfig {
            /// Canonical `key = value` serialization; parses back unchanged.
            pub fn to_config_string(&self) -> String {
                let mut out = String::new();
                $(
                    out.push_str(stringify!($field));
                    out.push_str(" = ");
                    out.push_str(&config_keys!(@fmt self, $field, $kind));
                    out.push('\n');
                )*
                out
            }

            fn set_key(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $(
                        stringify!($field) => config_keys!(@set self, value, $field, $kind),
                    )*
                    _ => return Err(ConfigError::UnknownKey(key.to_string())),
                }
                Ok(())
            }
        }
    };
    (@fmt $self:ident, $field:ident, scalar) => { $self.$field.to_string() };
    (@fmt $self:ident, $field:ident, list) => {
        $self.$field.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    };
    (@set $self:ident, $value:ident, $field:ident, scalar) => {
        $self.$field = $value.parse().map_err(|_| ConfigError::BadValue {
            key: stringify!($field).into(),
            value: $value.into(),
        })?
    };
    (@set $self:ident, $value:ident, $field:ident, list) => {
        $self.$field = $value
            .split(',')
            .map(|v| v.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| ConfigError::BadValue {
                key: stringify!($field).into(),
                value: $value.into(),
            })?
    };
}

config_keys![
    (master_seed, scalar),
    (sim_duration_s, scalar),
    (n_users, scalar),
    (policy, scalar),
    (tti_us, scalar),
    (pdu_size_bits, scalar),
    (hsdsch_codes, scalar),
    (cqi_delay_ttis, scalar),
    (harq_processes, scalar),
    (harq_feedback_delay_us, scalar),
    (max_harq_tx, scalar),
    (harq_combining_gain_db, scalar),
    (mcs_names, list),
    (mcs_thresholds_db, list),
    (mcs_tbs_bits, list),
    (total_nodeb_power_w, scalar),
    (hsdsch_power_fraction, scalar),
    (noise_floor_dbm, scalar),
    (path_loss_const_db, scalar),
    (path_loss_slope_db, scalar),
    (shadow_sigma_db, scalar),
    (shadow_decorr_ms, scalar),
    (test_ue_distance_km, scalar),
    (bg_min_distance_km, scalar),
    (bg_max_distance_km, scalar),
    (iub_delay_us, scalar),
    (external_cn_delay_us, scalar),
    (hs_dsch_frame_ms, scalar),
    (threshold_r, scalar),
    (threshold_l, scalar),
    (threshold_h, scalar),
    (queue_capacity_n, scalar),
    (ewma_alpha, scalar),
    (overflow_k, scalar),
    (lambda_rt_bps, scalar),
    (lambda_nrt_seed_bps, scalar),
    (rlc_am_tx_window, scalar),
    (rlc_max_retx, scalar),
    (status_interval_us, scalar),
    (rlc_nack_holdoff_us, scalar),
    (tcp_mss_bytes, scalar),
    (tcp_header_bytes, scalar),
    (tcp_rwnd_segments, scalar),
    (tcp_initial_cwnd_segments, scalar),
    (tcp_initial_rto_ms, scalar),
    (tcp_min_rto_ms, scalar),
    (tcp_max_rto_ms, scalar),
    (voip_packet_interval_ms, scalar),
    (voip_packet_bits, scalar),
    (voip_mean_on_s, scalar),
    (voip_mean_off_s, scalar),
    (throughput_window_s, scalar),
];

impl RunConfig {
    /// Parse a flat `key = value` config text over the defaults.
    ///
    /// Blank lines and lines starting with `#` are ignored; an unknown key is
    /// a startup error.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        cfg.apply(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `key = value` overrides on top of the current values.
    pub fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::MalformedLine(raw.to_string()))?;
            self.set_key(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n_users < 1 {
            return fail("n_users must be >= 1".into());
        }
        if !(self.sim_duration_s > 0.0) {
            return fail("sim_duration_s must be > 0".into());
        }
        if self.tti_us == 0 || self.pdu_size_bits == 0 {
            return fail("tti_us and pdu_size_bits must be > 0".into());
        }
        if self.threshold_r == 0
            || self.threshold_r > self.threshold_l
            || self.threshold_l > self.threshold_h
            || self.threshold_h > self.queue_capacity_n
        {
            return fail(format!(
                "thresholds must satisfy 0 < R <= L <= H <= N, got R={} L={} H={} N={}",
                self.threshold_r, self.threshold_l, self.threshold_h, self.queue_capacity_n
            ));
        }
        if !(0.0..=1.0).contains(&self.overflow_k) {
            return fail("overflow_k must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.ewma_alpha) {
            return fail("ewma_alpha must lie in [0, 1]".into());
        }
        if self.mcs_names.len() != self.mcs_thresholds_db.len()
            || self.mcs_names.len() != self.mcs_tbs_bits.len()
            || self.mcs_names.is_empty()
        {
            return fail("mcs_names, mcs_thresholds_db and mcs_tbs_bits must be non-empty and equal length".into());
        }
        if self
            .mcs_thresholds_db
            .windows(2)
            .any(|w| !(w[0] < w[1]))
        {
            return fail("mcs_thresholds_db must be strictly increasing".into());
        }
        if self.mcs_tbs_bits.iter().any(|&t| t < self.pdu_size_bits) {
            return fail("every mcs tbs must carry at least one PDU".into());
        }
        if self.tcp_mss_bytes == 0 || self.tcp_rwnd_segments == 0 {
            return fail("tcp_mss_bytes and tcp_rwnd_segments must be > 0".into());
        }
        if self.max_harq_tx == 0 || self.harq_processes == 0 {
            return fail("max_harq_tx and harq_processes must be > 0".into());
        }
        if self.bg_min_distance_km <= 0.0 || self.bg_max_distance_km < self.bg_min_distance_km {
            return fail("background distance range must be positive and ordered".into());
        }
        if self.test_ue_distance_km <= 0.0 {
            return fail("test_ue_distance_km must be > 0".into());
        }
        Ok(())
    }

    pub fn sim_duration_us(&self) -> Micros {
        (self.sim_duration_s * 1e6).round() as Micros
    }

    pub fn tti_s(&self) -> f64 {
        self.tti_us as f64 / 1e6
    }

    /// HS-DSCH transmit power in dBm (total power scaled by the HS-DSCH
    /// fraction).
    pub fn hsdsch_tx_dbm(&self) -> f64 {
        10.0 * (self.total_nodeb_power_w * self.hsdsch_power_fraction * 1e3).log10()
    }

    /// TCP receive window in bytes (RWIND counted in segments).
    pub fn rwnd_bytes(&self) -> u64 {
        u64::from(self.tcp_rwnd_segments) * u64::from(self.tcp_mss_bytes)
    }

    /// On-the-wire size of a full TCP segment in bits.
    pub fn segment_wire_bits(&self) -> u32 {
        (self.tcp_mss_bytes + self.tcp_header_bytes) * 8
    }

    pub fn mcs_schemes(&self) -> Vec<McsScheme> {
        self.mcs_names
            .iter()
            .zip(&self.mcs_thresholds_db)
            .zip(&self.mcs_tbs_bits)
            .map(|((name, &thr), &tbs)| McsScheme {
                name: name.clone(),
                sinr_threshold_db: thr,
                tbs_bits: tbs,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trips_through_config_text() {
        let mut cfg = RunConfig::default();
        cfg.master_seed = 77;
        cfg.n_users = 20;
        cfg.policy = Policy::Etsp;
        cfg.shadow_sigma_db = 7.25;
        cfg.mcs_thresholds_db = vec![-3.5, 0.0, 2.0, 5.0, 9.5];
        let text = cfg.to_config_string();
        let parsed = RunConfig::parse(&text).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = RunConfig::parse("no_such_knob = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(k) if k == "no_such_knob"));
    }

    #[test]
    fn malformed_line_is_an_error() {
        assert!(RunConfig::parse("just words\n").is_err());
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = RunConfig::parse("# comment\n\nmaster_seed = 9\n").unwrap();
        assert_eq!(cfg.master_seed, 9);
    }

    #[test]
    fn threshold_ordering_is_enforced() {
        let mut cfg = RunConfig::default();
        cfg.threshold_l = 120; // L > H
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn policy_parses_case_insensitively() {
        assert_eq!("ETSP".parse::<Policy>().unwrap(), Policy::Etsp);
        assert!("drop-head".parse::<Policy>().is_err());
    }

    #[test]
    fn derived_values_match_hand_arithmetic() {
        let cfg = RunConfig::default();
        // 7.5 W -> 38.75 dBm
        assert!((cfg.hsdsch_tx_dbm() - 38.7506).abs() < 1e-3);
        // 64 segments of 536 bytes
        assert_eq!(cfg.rwnd_bytes(), 34_304);
        // 536 + 40 bytes on the wire
        assert_eq!(cfg.segment_wire_bits(), 4_608);
        assert_eq!(cfg.sim_duration_us(), 120_000_000);
    }
}
