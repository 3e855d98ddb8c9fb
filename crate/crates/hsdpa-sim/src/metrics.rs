//! Per-run metrics capture: the PDU conservation ledger, the test user's
//! throughput series and VoIP delay samples, and the end-of-run summary.

use crate::config::Policy;
use crate::kernel::Micros;

/// Terminal state of a uniquely identified PDU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PduFate {
    InSystem,
    Delivered,
    /// RLC AM gave up after the retransmission budget.
    Discarded,
    /// Lost end-to-end (UM PDU dropped at the Node B, in HARQ, or at
    /// reassembly).
    Lost,
}

/// Exact accounting over one (user, flow): every created PDU ends the run in
/// exactly one state. Stale transitions (e.g. a give-up racing an earlier
/// delivery) keep the first terminal state; contradictory ones are counted
/// as violations.
#[derive(Debug, Default)]
pub struct FlowLedger {
    fates: Vec<PduFate>,
    pub created: u64,
    pub delivered: u64,
    pub discarded: u64,
    pub lost: u64,
    pub violations: u64,
}

impl FlowLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// PDUs are created with consecutive sequence numbers per flow.
    pub fn on_created(&mut self, seq: u64) {
        debug_assert_eq!(seq, self.fates.len() as u64);
        self.fates.push(PduFate::InSystem);
        self.created += 1;
    }

    pub fn on_delivered(&mut self, seq: u64) {
        match self.fates[seq as usize] {
            PduFate::InSystem => {
                self.fates[seq as usize] = PduFate::Delivered;
                self.delivered += 1;
            }
            // duplicate arrival, or a queued copy landing after the
            // transmitter already gave the PDU up; first terminal state wins
            PduFate::Delivered | PduFate::Discarded => {}
            PduFate::Lost => self.violations += 1,
        }
    }

    pub fn on_discarded(&mut self, seq: u64) {
        match self.fates[seq as usize] {
            PduFate::InSystem => {
                self.fates[seq as usize] = PduFate::Discarded;
                self.discarded += 1;
            }
            // a stale NACK can exhaust the budget after delivery; the
            // delivered state stands
            PduFate::Delivered => {}
            _ => self.violations += 1,
        }
    }

    pub fn on_lost(&mut self, seq: u64) {
        match self.fates[seq as usize] {
            PduFate::InSystem => {
                self.fates[seq as usize] = PduFate::Lost;
                self.lost += 1;
            }
            _ => self.violations += 1,
        }
    }

    pub fn in_system(&self) -> u64 {
        self.created - self.delivered - self.discarded - self.lost
    }

    /// Recount fates and check they match the running counters exactly.
    pub fn balanced(&self) -> bool {
        if self.violations != 0 || self.created != self.fates.len() as u64 {
            return false;
        }
        let mut counts = [0u64; 4];
        for f in &self.fates {
            counts[*f as usize] += 1;
        }
        counts[PduFate::InSystem as usize] == self.in_system()
            && counts[PduFate::Delivered as usize] == self.delivered
            && counts[PduFate::Discarded as usize] == self.discarded
            && counts[PduFate::Lost as usize] == self.lost
            && self.created == self.delivered + self.discarded + self.lost + self.in_system()
    }
}

/// Conservation report for one flow, as exposed to tests and the CLI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerReport {
    pub user: usize,
    pub flow: &'static str,
    pub created: u64,
    pub delivered: u64,
    pub discarded: u64,
    pub lost: u64,
    pub in_system: u64,
    pub balanced: bool,
}

/// Test-user session metrics accumulated during a run.
#[derive(Debug)]
pub struct SessionMetrics {
    window_us: Micros,
    duration_us: Micros,
    /// In-order TCP bytes delivered to the application, binned by window.
    bins: Vec<u64>,
    pub app_bytes: u64,
    /// (delivered_at, delay_ms) per delivered VoIP packet.
    pub voip_delays: Vec<(Micros, f64)>,
}

impl SessionMetrics {
    pub fn new(window_us: Micros, duration_us: Micros) -> Self {
        let n_bins = (duration_us.div_ceil(window_us)) as usize;
        Self {
            window_us,
            duration_us,
            bins: vec![0; n_bins.max(1)],
            app_bytes: 0,
            voip_delays: Vec::new(),
        }
    }

    pub fn on_app_bytes(&mut self, now: Micros, bytes: u64) {
        self.app_bytes += bytes;
        let idx = ((now.min(self.duration_us.saturating_sub(1))) / self.window_us) as usize;
        if let Some(b) = self.bins.get_mut(idx) {
            *b += bytes;
        }
    }

    pub fn on_voip_delivery(&mut self, now: Micros, created_at: Micros) {
        let delay_ms = (now - created_at) as f64 / 1e3;
        self.voip_delays.push((now, delay_ms));
    }

    /// Window throughput series in bits/s, one point per window.
    pub fn throughput_series_bps(&self) -> Vec<f64> {
        let w_s = self.window_us as f64 / 1e6;
        self.bins.iter().map(|&b| b as f64 * 8.0 / w_s).collect()
    }

    pub fn session_mean_bps(&self) -> f64 {
        self.app_bytes as f64 * 8.0 / (self.duration_us as f64 / 1e6)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population coefficient of variation; 0 for an empty or all-zero series.
pub fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let m = mean(xs);
    if m == 0.0 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    var.sqrt() / m
}

pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// One row of the experiment summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub policy: Policy,
    pub n_users: u32,
    pub seed: u64,
    pub nrt_throughput_bps: f64,
    pub nrt_throughput_cov: f64,
    pub voip_delay_mean_ms: f64,
    pub voip_delay_p95_ms: f64,
    pub voip_loss_ratio: f64,
    pub voip_samples: u64,
    pub machs_nrt_drops: u64,
    pub machs_rt_drops: u64,
    pub rlc_retx_count: u64,
    pub rlc_giveups: u64,
    pub tcp_timeouts: u64,
    pub tcp_fast_retx: u64,
    pub app_bytes: u64,
}

/// One point of a run's time-series file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub t_s: f64,
    pub window_throughput_bps: f64,
    pub cum_voip_delay_mean_ms: f64,
}

/// A finished run: the summary row plus its time series.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub series: Vec<SeriesPoint>,
}

impl SessionMetrics {
    pub fn series(&self) -> Vec<SeriesPoint> {
        let tput = self.throughput_series_bps();
        let mut out = Vec::with_capacity(tput.len());
        let mut di = 0usize;
        let mut dsum = 0.0;
        for (i, &bps) in tput.iter().enumerate() {
            let t_end = (i as u64 + 1) * self.window_us;
            while di < self.voip_delays.len() && self.voip_delays[di].0 <= t_end {
                dsum += self.voip_delays[di].1;
                di += 1;
            }
            let cum_mean = if di == 0 { 0.0 } else { dsum / di as f64 };
            out.push(SeriesPoint {
                t_s: t_end as f64 / 1e6,
                window_throughput_bps: bps,
                cum_voip_delay_mean_ms: cum_mean,
            });
        }
        out
    }
}

pub fn top_mcs_rate_bps(tbs_bits: u32, tti_us: Micros) -> f64 {
    f64::from(tbs_bits) / (tti_us as f64 / 1e6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::SEC;

    #[test]
    fn ledger_balances_over_normal_lifecycle() {
        let mut l = FlowLedger::new();
        for s in 0..10 {
            l.on_created(s);
        }
        for s in 0..6 {
            l.on_delivered(s);
        }
        l.on_discarded(6);
        l.on_lost(7);
        assert_eq!(l.in_system(), 2);
        assert!(l.balanced());
        // duplicate delivery is benign
        l.on_delivered(3);
        assert_eq!(l.delivered, 6);
        assert!(l.balanced());
        // give-up after delivery keeps the delivered state
        l.on_discarded(4);
        assert_eq!(l.discarded, 1);
        assert!(l.balanced());
    }

    #[test]
    fn contradictory_transition_breaks_the_balance() {
        let mut l = FlowLedger::new();
        l.on_created(0);
        l.on_lost(0);
        l.on_delivered(0);
        assert_eq!(l.violations, 1);
        assert!(!l.balanced());
    }

    #[test]
    fn session_mean_matches_hand_arithmetic() {
        // 1.2 MB over 120 s -> 80 kb/s
        let mut m = SessionMetrics::new(SEC, 120 * SEC);
        let mut t = 0;
        let total: u64 = 1_200_000;
        let chunk = total / 120;
        for _ in 0..120 {
            m.on_app_bytes(t, chunk);
            t += SEC;
        }
        assert!((m.session_mean_bps() - 80_000.0).abs() < 1.0);
        assert_eq!(m.throughput_series_bps().len(), 120);
        assert!((m.throughput_series_bps()[5] - 80_000.0).abs() < 1.0);
    }

    #[test]
    fn series_carries_cumulative_delay_mean() {
        let mut m = SessionMetrics::new(SEC, 3 * SEC);
        m.on_voip_delivery(500_000, 400_000); // 100 ms
        m.on_voip_delivery(1_500_000, 1_300_000); // 200 ms
        let s = m.series();
        assert_eq!(s.len(), 3);
        assert!((s[0].cum_voip_delay_mean_ms - 100.0).abs() < 1e-9);
        assert!((s[1].cum_voip_delay_mean_ms - 150.0).abs() < 1e-9);
        assert!((s[2].cum_voip_delay_mean_ms - 150.0).abs() < 1e-9);
    }

    #[test]
    fn cov_and_percentile_basics() {
        assert_eq!(coefficient_of_variation(&[5.0, 5.0, 5.0]), 0.0);
        assert!(coefficient_of_variation(&[0.0, 10.0]) > 0.9);
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(percentile(&xs, 0.95), 10.0);
        assert_eq!(percentile(&xs, 0.5), 5.0);
    }
}
