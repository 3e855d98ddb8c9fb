//! Physical-layer abstraction: distance path loss, AR(1) log-normal
//! shadowing, SINR, delayed CQI reporting, AMC transport-block selection and
//! stochastic block-error outcomes with retransmission combining gain.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::{McsScheme, RunConfig};
use crate::kernel::Micros;

/// Block error probability at the CQI selection boundary (the CQI reports the
/// largest block decodable with at least 90% probability).
pub const BLER_AT_SELECTION: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("distance must be positive, got {0} km")]
    NonPositiveDistance(f64),
}

/// Distance path loss in dB: `const + slope * log10(d_km)`.
pub fn path_loss_db(distance_km: f64, const_db: f64, slope_db: f64) -> Result<f64, RadioError> {
    if distance_km <= 0.0 {
        return Err(RadioError::NonPositiveDistance(distance_km));
    }
    Ok(const_db + slope_db * distance_km.log10())
}

/// First-order autoregressive log-normal shadowing in dB.
///
/// Stepped once per TTI; the per-step correlation is solved from the
/// configured decorrelation time so that the lag-k autocorrelation is rho^k
/// and the marginal distribution stays Normal(0, sigma^2).
#[derive(Debug, Clone)]
pub struct Shadowing {
    rho: f64,
    innovation: Normal<f64>,
    value_db: f64,
}

impl Shadowing {
    pub fn new(sigma_db: f64, decorr_ms: f64, tti_us: Micros, rng: &mut impl Rng) -> Self {
        let rho = (-(tti_us as f64 / 1_000.0) / decorr_ms).exp();
        let marginal = Normal::new(0.0, sigma_db).expect("sigma must be finite");
        let innovation =
            Normal::new(0.0, sigma_db * (1.0 - rho * rho).sqrt()).expect("valid innovation");
        // stationary start
        let value_db = marginal.sample(rng);
        Self {
            rho,
            innovation,
            value_db,
        }
    }

    pub fn step(&mut self, rng: &mut impl Rng) -> f64 {
        self.value_db = self.rho * self.value_db + self.innovation.sample(rng);
        self.value_db
    }

    pub fn value_db(&self) -> f64 {
        self.value_db
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// AMC scheme table plus the effective selection ladder.
///
/// The configured table may contain dominated entries (a scheme whose block
/// size does not exceed that of a scheme with a lower threshold, e.g. a
/// 16QAM 1/4 entry duplicating QPSK 1/2 capacity); selection uses only the
/// strictly increasing threshold/TBS subsequence.
#[derive(Debug, Clone)]
pub struct McsTable {
    schemes: Vec<McsScheme>,
    ladder: Vec<usize>,
}

impl McsTable {
    /// Build from schemes sorted by strictly increasing threshold.
    pub fn new(schemes: Vec<McsScheme>) -> Self {
        debug_assert!(schemes
            .windows(2)
            .all(|w| w[0].sinr_threshold_db < w[1].sinr_threshold_db));
        let mut ladder = Vec::new();
        let mut best_tbs = 0u32;
        for (i, s) in schemes.iter().enumerate() {
            if s.tbs_bits > best_tbs {
                ladder.push(i);
                best_tbs = s.tbs_bits;
            }
        }
        Self { schemes, ladder }
    }

    pub fn from_config(cfg: &RunConfig) -> Self {
        Self::new(cfg.mcs_schemes())
    }

    pub fn scheme(&self, idx: usize) -> &McsScheme {
        &self.schemes[idx]
    }

    pub fn schemes(&self) -> &[McsScheme] {
        &self.schemes
    }

    /// Selection ladder indices (strictly increasing threshold and TBS).
    pub fn ladder(&self) -> impl Iterator<Item = (usize, &McsScheme)> {
        self.ladder.iter().map(move |&i| (i, &self.schemes[i]))
    }

    /// Highest-capacity scheme whose threshold does not exceed `sinr_db`
    /// (boundary inclusive); `None` below the lowest threshold.
    pub fn select(&self, sinr_db: f64) -> Option<usize> {
        let mut chosen = None;
        for &i in &self.ladder {
            if sinr_db >= self.schemes[i].sinr_threshold_db {
                chosen = Some(i);
            } else {
                break;
            }
        }
        chosen
    }

    /// Whole PDUs carried by scheme `idx`.
    pub fn pdus_per_block(&self, idx: usize, pdu_size_bits: u32) -> u32 {
        self.schemes[idx].tbs_bits / pdu_size_bits
    }

    pub fn top_rate_bps(&self, tti_s: f64) -> f64 {
        let top = *self.ladder.last().expect("non-empty table");
        f64::from(self.schemes[top].tbs_bits) / tti_s
    }
}

/// Block error probability for a transmission `margin_db` above the selected
/// scheme's threshold: 10% at the boundary, halving per dB of margin, capped
/// at certainty below it.
pub fn block_error_probability(margin_db: f64) -> f64 {
    (BLER_AT_SELECTION * (-margin_db).exp2()).min(1.0)
}

/// Decode outcome of one transport-block transmission attempt.
///
/// Retransmissions gain `combining_gain_db` per prior attempt on top of the
/// current channel (chase-combining approximation); the outcome is a single
/// draw from the harq-error stream.
pub fn transmit_block(
    scheme_threshold_db: f64,
    actual_sinr_db: f64,
    harq_tx_count: u32,
    combining_gain_db: f64,
    rng: &mut impl Rng,
) -> bool {
    debug_assert!(harq_tx_count >= 1);
    let effective = actual_sinr_db + combining_gain_db * f64::from(harq_tx_count - 1);
    let p = block_error_probability(effective - scheme_threshold_db);
    rng.random::<f64>() >= p
}

/// Per-UE radio state: fixed path loss, evolving shadowing, and a short
/// history of per-TTI channel measurements for delayed CQI reporting.
#[derive(Debug, Clone)]
pub struct LinkState {
    pub distance_km: f64,
    path_loss_db: f64,
    tx_dbm: f64,
    noise_floor_dbm: f64,
    shadowing: Shadowing,
    sinr_db: f64,
    cqi_delay_ttis: usize,
    // measured (sinr, selected scheme) per TTI, newest at the back
    history: VecDeque<(f64, Option<usize>)>,
}

impl LinkState {
    pub fn new(cfg: &RunConfig, distance_km: f64, rng: &mut impl Rng) -> Result<Self, RadioError> {
        let path_loss = path_loss_db(distance_km, cfg.path_loss_const_db, cfg.path_loss_slope_db)?;
        let shadowing = Shadowing::new(cfg.shadow_sigma_db, cfg.shadow_decorr_ms, cfg.tti_us, rng);
        let mut link = Self {
            distance_km,
            path_loss_db: path_loss,
            tx_dbm: cfg.hsdsch_tx_dbm(),
            noise_floor_dbm: cfg.noise_floor_dbm,
            shadowing,
            sinr_db: 0.0,
            cqi_delay_ttis: cfg.cqi_delay_ttis as usize,
            history: VecDeque::with_capacity(cfg.cqi_delay_ttis as usize + 1),
        };
        link.sinr_db = link.compute_sinr();
        Ok(link)
    }

    fn compute_sinr(&self) -> f64 {
        self.tx_dbm - self.path_loss_db - self.shadowing.value_db() - self.noise_floor_dbm
    }

    /// Advance shadowing one TTI, measure SINR and record the CQI that the UE
    /// reports for this instant.
    pub fn step_tti(&mut self, table: &McsTable, rng: &mut impl Rng) {
        self.shadowing.step(rng);
        self.sinr_db = self.compute_sinr();
        self.history.push_back((self.sinr_db, table.select(self.sinr_db)));
        if self.history.len() > self.cqi_delay_ttis + 1 {
            self.history.pop_front();
        }
    }

    /// SINR at the current instant (what a transmission actually sees).
    pub fn sinr_db(&self) -> f64 {
        self.sinr_db
    }

    pub fn path_loss(&self) -> f64 {
        self.path_loss_db
    }

    /// CQI available to the scheduler now: the measurement taken exactly
    /// `cqi_delay_ttis` earlier. `None` until enough history exists or while
    /// the channel sits below the lowest scheme threshold.
    pub fn reported_cqi(&self) -> Option<usize> {
        if self.history.len() <= self.cqi_delay_ttis {
            return None;
        }
        self.history.front().and_then(|&(_, cqi)| cqi)
    }

    /// SINR behind the currently reported CQI (test instrumentation).
    pub fn reported_sinr_db(&self) -> Option<f64> {
        if self.history.len() <= self.cqi_delay_ttis {
            return None;
        }
        self.history.front().map(|&(sinr, _)| sinr)
    }
}
