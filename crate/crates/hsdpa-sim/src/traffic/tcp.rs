//! Self-contained TCP Reno sender and receiver over the simulated path.
//!
//! The sender models cwnd/ssthresh dynamics, fast retransmit/recovery and
//! RTO with exponential backoff; the receiver delivers the in-order byte
//! stream and emits one cumulative ACK per received segment (no delayed
//! ACKs, no SACK). Sequence numbers are plain byte offsets into an unbounded
//! file, so wrap-around never occurs at desk scale.

use crate::config::RunConfig;
use crate::kernel::{Micros, MS};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpSegment {
    pub seq_start: u64,
    pub len: u32,
    pub is_retx: bool,
}

impl TcpSegment {
    pub fn seq_end(&self) -> u64 {
        self.seq_start + u64::from(self.len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcpPhase {
    SlowStart,
    CongAvoid,
    FastRecovery,
}

#[derive(Debug)]
pub struct TcpSender {
    mss: u64,
    rwnd: u64,
    snd_una: u64,
    snd_nxt: u64,
    /// Highest byte ever sent; bytes below it are retransmissions.
    max_sent: u64,
    cwnd: f64,
    ssthresh: f64,
    phase: TcpPhase,
    dup_acks: u32,
    srtt_us: Option<f64>,
    rttvar_us: f64,
    rto_us: Micros,
    min_rto_us: Micros,
    max_rto_us: Micros,
    // Karn: one un-retransmitted timing sample in flight at a time
    timing: Option<(u64, Micros)>,
    pub timeouts: u64,
    pub fast_retransmits: u64,
}

impl TcpSender {
    pub fn new(cfg: &RunConfig) -> Self {
        let mss = u64::from(cfg.tcp_mss_bytes);
        let rwnd = cfg.rwnd_bytes();
        Self {
            mss,
            rwnd,
            snd_una: 0,
            snd_nxt: 0,
            max_sent: 0,
            cwnd: (u64::from(cfg.tcp_initial_cwnd_segments) * mss) as f64,
            ssthresh: rwnd as f64,
            phase: TcpPhase::SlowStart,
            dup_acks: 0,
            srtt_us: None,
            rttvar_us: 0.0,
            rto_us: cfg.tcp_initial_rto_ms * MS,
            min_rto_us: cfg.tcp_min_rto_ms * MS,
            max_rto_us: cfg.tcp_max_rto_ms * MS,
            timing: None,
            timeouts: 0,
            fast_retransmits: 0,
        }
    }

    pub fn phase(&self) -> TcpPhase {
        self.phase
    }

    pub fn cwnd_bytes(&self) -> f64 {
        self.cwnd
    }

    pub fn cwnd_segments(&self) -> f64 {
        self.cwnd / self.mss as f64
    }

    pub fn ssthresh_bytes(&self) -> f64 {
        self.ssthresh
    }

    pub fn in_flight(&self) -> u64 {
        self.snd_nxt - self.snd_una
    }

    pub fn has_outstanding(&self) -> bool {
        self.snd_nxt > self.snd_una
    }

    pub fn snd_una(&self) -> u64 {
        self.snd_una
    }

    pub fn snd_nxt(&self) -> u64 {
        self.snd_nxt
    }

    pub fn rto(&self) -> Micros {
        self.rto_us
    }

    pub fn srtt_ms(&self) -> Option<f64> {
        self.srtt_us.map(|v| v / 1e3)
    }

    /// Bytes the send window currently permits:
    /// `max(0, min(cwnd, rwnd) - in_flight)`.
    pub fn window_allows(&self) -> u64 {
        let window = (self.cwnd as u64).min(self.rwnd);
        window.saturating_sub(self.in_flight())
    }

    /// Emit as many full-MSS segments as the window allows (the file is
    /// unbounded, so data is always available). After a timeout the send
    /// pointer sits back at `snd_una`, so this also walks the go-back-N
    /// resend of the old window.
    pub fn next_segments(&mut self, now: Micros) -> Vec<TcpSegment> {
        let mut out = Vec::new();
        while self.window_allows() >= self.mss {
            let seg = TcpSegment {
                seq_start: self.snd_nxt,
                len: self.mss as u32,
                is_retx: self.snd_nxt < self.max_sent,
            };
            self.snd_nxt += self.mss;
            self.max_sent = self.max_sent.max(self.snd_nxt);
            // Karn: only fresh, never-retransmitted data may be timed
            if !seg.is_retx && self.timing.is_none() {
                self.timing = Some((seg.seq_end(), now));
            }
            out.push(seg);
        }
        out
    }

    /// Process a cumulative ACK. Returns the fast-retransmit segment when the
    /// third duplicate fires; the caller then pumps `next_segments` either
    /// way.
    pub fn on_ack(&mut self, ack: u64, now: Micros) -> Option<TcpSegment> {
        if ack < self.snd_una {
            return None; // stale, below the window
        }
        if ack == self.snd_una {
            return self.on_dup_ack();
        }

        // new data acknowledged; a stale flight can ack past a rolled-back
        // send pointer
        self.snd_una = ack;
        self.snd_nxt = self.snd_nxt.max(ack);
        self.dup_acks = 0;
        if let Some((seq_end, sent_at)) = self.timing {
            if ack >= seq_end {
                self.rtt_sample((now - sent_at) as f64);
                self.timing = None;
            }
        }
        match self.phase {
            TcpPhase::SlowStart => {
                self.cwnd += self.mss as f64;
                if self.cwnd >= self.ssthresh {
                    self.phase = TcpPhase::CongAvoid;
                }
            }
            TcpPhase::CongAvoid => {
                self.cwnd += self.mss as f64 * self.mss as f64 / self.cwnd;
            }
            TcpPhase::FastRecovery => {
                // Reno deflates and resumes congestion avoidance on the ACK
                // that covers the retransmission
                self.cwnd = self.ssthresh;
                self.phase = TcpPhase::CongAvoid;
            }
        }
        None
    }

    fn on_dup_ack(&mut self) -> Option<TcpSegment> {
        if !self.has_outstanding() {
            return None;
        }
        self.dup_acks += 1;
        if self.phase == TcpPhase::FastRecovery {
            // window inflation for each further duplicate
            self.cwnd += self.mss as f64;
            return None;
        }
        if self.dup_acks == 3 {
            self.enter_loss_recovery();
            self.cwnd = self.ssthresh + 3.0 * self.mss as f64;
            self.phase = TcpPhase::FastRecovery;
            self.fast_retransmits += 1;
            return Some(self.retransmit_head());
        }
        None
    }

    /// RTO expiry for the head of the window: collapse to one segment,
    /// retransmit it, and pull the send pointer back so slow start walks the
    /// whole outstanding window again (holes left by upstream discards make
    /// duplicate-ACK repair impossible once the pipe is silent).
    pub fn on_timeout(&mut self, _now: Micros) -> TcpSegment {
        debug_assert!(self.has_outstanding());
        self.enter_loss_recovery();
        self.cwnd = self.mss as f64;
        self.phase = TcpPhase::SlowStart;
        self.dup_acks = 0;
        self.rto_us = (self.rto_us * 2).min(self.max_rto_us);
        self.timeouts += 1;
        let head = self.retransmit_head();
        self.snd_nxt = self.snd_una + u64::from(head.len);
        head
    }

    fn enter_loss_recovery(&mut self) {
        self.ssthresh = (self.in_flight() as f64 / 2.0).max(2.0 * self.mss as f64);
        self.timing = None; // Karn: retransmission poisons the sample
    }

    fn retransmit_head(&mut self) -> TcpSegment {
        TcpSegment {
            seq_start: self.snd_una,
            len: self.mss.min(self.in_flight()) as u32,
            is_retx: true,
        }
    }

    fn rtt_sample(&mut self, r_us: f64) {
        match self.srtt_us {
            None => {
                self.srtt_us = Some(r_us);
                self.rttvar_us = r_us / 2.0;
            }
            Some(srtt) => {
                self.rttvar_us = 0.75 * self.rttvar_us + 0.25 * (srtt - r_us).abs();
                self.srtt_us = Some(0.875 * srtt + 0.125 * r_us);
            }
        }
        let rto = self.srtt_us.unwrap() + (4.0 * self.rttvar_us).max(1_000.0);
        self.rto_us = (rto as Micros).clamp(self.min_rto_us, self.max_rto_us);
    }
}

/// Receiver side: in-order byte delivery and one cumulative ACK per segment.
#[derive(Debug, Default)]
pub struct TcpReceiver {
    rcv_nxt: u64,
    ooo: BTreeMap<u64, u64>, // start -> end of buffered out-of-order ranges
    pub delivered_bytes: u64,
}

impl TcpReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rcv_nxt(&self) -> u64 {
        self.rcv_nxt
    }

    /// Accept a segment; returns `(ack_to_send, bytes_delivered_in_order)`.
    /// Duplicates are ACKed but not re-delivered.
    pub fn on_segment(&mut self, seq_start: u64, len: u32) -> (u64, u64) {
        let seq_end = seq_start + u64::from(len);
        let before = self.rcv_nxt;
        if seq_start <= self.rcv_nxt {
            if seq_end > self.rcv_nxt {
                self.rcv_nxt = seq_end;
                // drain any now-contiguous buffered ranges
                while let Some((&s, &e)) = self.ooo.first_key_value() {
                    if s > self.rcv_nxt {
                        break;
                    }
                    self.rcv_nxt = self.rcv_nxt.max(e);
                    self.ooo.remove(&s);
                }
            }
        } else {
            // out of order: buffer, merging overlaps
            let mut start = seq_start;
            let mut end = seq_end;
            let overlapping: Vec<u64> = self
                .ooo
                .range(..=end)
                .filter(|(_, &e)| e >= start)
                .map(|(&s, _)| s)
                .collect();
            for s in overlapping {
                let e = self.ooo.remove(&s).unwrap();
                start = start.min(s);
                end = end.max(e);
            }
            self.ooo.insert(start, end);
        }
        let delivered = self.rcv_nxt - before;
        self.delivered_bytes += delivered;
        (self.rcv_nxt, delivered)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::EventQueue;

    fn sender() -> TcpSender {
        TcpSender::new(&RunConfig::default())
    }

    const MSS: u64 = 536;

    #[test]
    fn window_allows_hand_values() {
        let mut s = sender();
        s.cwnd = 2.0 * MSS as f64;
        assert_eq!(s.window_allows(), 1072);
        // window full
        s.snd_nxt = 1072;
        assert_eq!(s.window_allows(), 0);
        // receiver-limited
        let mut r = sender();
        r.cwnd = 10.0 * MSS as f64;
        r.rwnd = MSS;
        assert_eq!(r.window_allows(), 536);
    }

    #[test]
    fn slow_start_doubles_per_ack() {
        let mut s = sender();
        let segs = s.next_segments(0);
        assert_eq!(segs.len(), 1);
        s.on_ack(MSS, 1000);
        assert!((s.cwnd_segments() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn congestion_avoidance_adds_one_segment_per_window() {
        let mut s = sender();
        s.phase = TcpPhase::CongAvoid;
        s.cwnd = 10.0 * MSS as f64;
        s.ssthresh = 5.0 * MSS as f64;
        s.snd_nxt = 10 * MSS;
        for i in 0..10 {
            s.on_ack((i + 1) * MSS, 1000 * (i + 1));
        }
        assert!((s.cwnd_segments() - 11.0).abs() < 0.05, "{}", s.cwnd_segments());
    }

    #[test]
    fn third_duplicate_triggers_fast_retransmit() {
        let mut s = sender();
        s.phase = TcpPhase::CongAvoid;
        s.cwnd = 16.0 * MSS as f64;
        s.snd_nxt = 16 * MSS; // flight = 16 segments
        assert!(s.on_ack(0, 1).is_none());
        assert!(s.on_ack(0, 2).is_none());
        assert_eq!(s.dup_acks, 2);
        let retx = s.on_ack(0, 3).expect("fast retransmit");
        assert!(retx.is_retx);
        assert_eq!(retx.seq_start, 0);
        assert!((s.ssthresh_bytes() - 8.0 * MSS as f64).abs() < 1e-9);
        assert!((s.cwnd_segments() - 11.0).abs() < 1e-9);
        assert_eq!(s.phase(), TcpPhase::FastRecovery);
        assert_eq!(s.fast_retransmits, 1);
    }

    #[test]
    fn further_duplicates_inflate_by_one_segment() {
        let mut s = sender();
        s.phase = TcpPhase::CongAvoid;
        s.cwnd = 16.0 * MSS as f64;
        s.snd_nxt = 16 * MSS;
        for _ in 0..3 {
            s.on_ack(0, 1);
        }
        let before = s.cwnd_segments();
        s.on_ack(0, 2);
        assert!((s.cwnd_segments() - before - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_ack_deflates_to_ssthresh() {
        let mut s = sender();
        s.phase = TcpPhase::FastRecovery;
        s.ssthresh = 8.0 * MSS as f64;
        s.cwnd = 11.0 * MSS as f64;
        s.snd_nxt = 16 * MSS;
        s.on_ack(16 * MSS, 5000);
        assert!((s.cwnd_segments() - 8.0).abs() < 1e-9);
        assert_eq!(s.phase(), TcpPhase::CongAvoid);
    }

    #[test]
    fn timeout_collapses_to_one_segment_and_backs_off() {
        let mut s = sender();
        s.phase = TcpPhase::CongAvoid;
        s.cwnd = 20.0 * MSS as f64;
        s.snd_nxt = 20 * MSS;
        s.max_sent = 20 * MSS;
        s.rto_us = 1_000_000;
        let retx = s.on_timeout(0);
        assert!(retx.is_retx);
        assert!((s.ssthresh_bytes() - 10.0 * MSS as f64).abs() < 1e-9);
        assert!((s.cwnd_segments() - 1.0).abs() < 1e-9);
        assert_eq!(s.phase(), TcpPhase::SlowStart);
        assert_eq!(s.rto(), 2_000_000);
        assert_eq!(s.timeouts, 1);
        // go-back-N: the send pointer sits just past the retransmitted head,
        // and as acks come in the old window is walked again
        assert_eq!(s.snd_nxt, MSS);
        s.on_ack(MSS, 1000);
        let resent = s.next_segments(2000);
        assert_eq!(resent.len(), 2);
        assert!(resent.iter().all(|seg| seg.is_retx));
    }

    #[test]
    fn rto_backoff_caps_at_the_maximum() {
        let mut s = sender();
        s.snd_nxt = MSS;
        s.rto_us = 40_000_000;
        s.on_timeout(0);
        assert_eq!(s.rto(), 60_000_000);
        s.on_timeout(1);
        assert_eq!(s.rto(), 60_000_000);
    }

    #[test]
    fn ssthresh_floor_is_two_segments() {
        let mut s = sender();
        s.snd_nxt = MSS; // tiny flight
        s.on_timeout(0);
        assert!((s.ssthresh_bytes() - 2.0 * MSS as f64).abs() < 1e-9);
    }

    #[test]
    fn stale_ack_below_window_is_ignored() {
        let mut s = sender();
        s.snd_una = 10 * MSS;
        s.snd_nxt = 12 * MSS;
        let cwnd = s.cwnd;
        assert!(s.on_ack(5 * MSS, 0).is_none());
        assert_eq!(s.cwnd, cwnd);
        assert_eq!(s.dup_acks, 0);
    }

    #[test]
    fn flight_never_exceeds_window_across_a_random_script() {
        use rand::Rng;
        let streams = crate::kernel::RngStreams::new(17);
        let mut rng = streams.stream("tcp-script");
        let mut s = sender();
        let mut now = 0;
        for _ in 0..5_000 {
            now += 1000;
            match rng.random_range(0..10u32) {
                0..=5 => {
                    // sends never exceed what the window permits
                    let allowed = s.window_allows();
                    let sent = s.next_segments(now);
                    assert!(sent.len() as u64 * MSS <= allowed);
                    assert!(s.window_allows() < MSS);
                }
                6..=8 => {
                    let upto = if s.has_outstanding() {
                        rng.random_range(s.snd_una..=s.snd_nxt)
                    } else {
                        s.snd_una
                    };
                    s.on_ack(upto / MSS * MSS, now);
                }
                _ => {
                    if s.has_outstanding() {
                        s.on_timeout(now);
                    }
                }
            }
            assert!(s.cwnd >= s.mss as f64);
            assert!(s.ssthresh >= 2.0 * s.mss as f64 || s.ssthresh == s.rwnd as f64);
            assert!(s.snd_una <= s.snd_nxt);
        }
    }

    #[test]
    fn receiver_delivers_prefix_and_dedupes() {
        let mut r = TcpReceiver::new();
        let (ack, d) = r.on_segment(0, 536);
        assert_eq!((ack, d), (536, 536));
        // out of order
        let (ack, d) = r.on_segment(1072, 536);
        assert_eq!((ack, d), (536, 0));
        // fill the hole: both ranges drain
        let (ack, d) = r.on_segment(536, 536);
        assert_eq!((ack, d), (1608, 1072));
        // duplicate
        let (ack, d) = r.on_segment(0, 536);
        assert_eq!((ack, d), (1608, 0));
        assert_eq!(r.delivered_bytes, 1608);
    }

    #[test]
    fn bulk_transfer_over_ideal_pipe_approaches_rwnd_over_rtt() {
        // Classic window-limit check: lossless pipe, 100 ms each way, no
        // bandwidth cap. Goodput must approach rwnd/RTT = 34304 B / 0.2 s.
        #[derive(Debug)]
        enum Ev {
            AtReceiver(TcpSegment),
            AtSender(u64),
        }
        let cfg = RunConfig::default();
        let mut snd = TcpSender::new(&cfg);
        let mut rcv = TcpReceiver::new();
        let mut q: EventQueue<Ev> = EventQueue::new();
        const D: Micros = 100_000;

        for seg in snd.next_segments(0) {
            q.schedule(D, Ev::AtReceiver(seg));
        }
        let horizon = 30 * crate::kernel::SEC;
        let mut delivered_at_10s = 0u64;
        q.run_until(horizon, |q, now, ev| match ev {
            Ev::AtReceiver(seg) => {
                let (ack, _) = rcv.on_segment(seg.seq_start, seg.len);
                q.schedule(now + D, Ev::AtSender(ack));
            }
            Ev::AtSender(ack) => {
                if let Some(retx) = snd.on_ack(ack, now) {
                    q.schedule(now + D, Ev::AtReceiver(retx));
                }
                for seg in snd.next_segments(now) {
                    q.schedule(now + D, Ev::AtReceiver(seg));
                }
                if now <= 10 * crate::kernel::SEC {
                    delivered_at_10s = rcv.delivered_bytes;
                }
            }
        });
        let goodput_bps = (rcv.delivered_bytes - delivered_at_10s) as f64 * 8.0 / 20.0;
        let expect = cfg.rwnd_bytes() as f64 * 8.0 / 0.2;
        assert!(
            (goodput_bps - expect).abs() / expect < 0.02,
            "goodput {goodput_bps} vs {expect}"
        );
        assert_eq!(snd.timeouts, 0);
    }
}
