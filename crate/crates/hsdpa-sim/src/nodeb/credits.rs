//! Per-TTI credit allocation for the enhanced TSP scheme.
//!
//! Every TTI the Node B grants the RNC a number of PDUs it may forward over
//! the Iub for each flow of the multi-flow user. RT credits follow the flow's
//! guaranteed bit rate; NRT credits track the rate the scheduler actually
//! allocates to the user (EWMA-smoothed), attenuated by the queue thresholds
//! L and H and capped by the RNC buffer occupancy so idle periods never bank
//! credit.

use crate::kernel::Micros;

/// RT credits per TTI: `(lambda_rt / pdu_size) * tti`. Fractional values are
/// permitted; the RNC accumulates them across TTIs.
pub fn rt_credits_per_tti(lambda_rt_bps: f64, pdu_size_bits: u32, tti_s: f64) -> f64 {
    debug_assert!(pdu_size_bits > 0 && tti_s > 0.0 && lambda_rt_bps >= 0.0);
    lambda_rt_bps / f64::from(pdu_size_bits) * tti_s
}

/// Maximum NRT grants per TTI given total queue occupancy `n_t`: the full
/// smoothed-rate allowance below L, the fraction `k` of it between L and H
/// inclusive, and nothing above H.
pub fn nrt_max_credits_per_tti(
    n_t: u32,
    l: u32,
    h: u32,
    k: f64,
    lambda_prime_bps: f64,
    pdu_size_bits: u32,
    tti_s: f64,
) -> f64 {
    debug_assert!(0 < l && l <= h);
    debug_assert!((0.0..=1.0).contains(&k));
    let base = lambda_prime_bps / f64::from(pdu_size_bits) * tti_s;
    if n_t < l {
        base
    } else if n_t <= h {
        k * base
    } else {
        0.0
    }
}

/// NRT credits per TTI: the maximum allowance capped by the user's NRT
/// buffer occupancy at the RNC.
pub fn nrt_credits(c_nrt_max: f64, ubs_nrt: u32) -> f64 {
    debug_assert!(c_nrt_max >= 0.0);
    c_nrt_max.min(f64::from(ubs_nrt))
}

/// Exponentially weighted moving average of the user's scheduled bit rate.
#[derive(Debug, Clone)]
pub struct RateEstimator {
    alpha: f64,
    lambda_prime_bps: f64,
    min_seen: f64,
    max_seen: f64,
}

impl RateEstimator {
    /// `seed_bps` acts as the first observation.
    pub fn new(alpha: f64, seed_bps: f64) -> Self {
        Self {
            alpha,
            lambda_prime_bps: seed_bps,
            min_seen: seed_bps,
            max_seen: seed_bps,
        }
    }

    /// `lambda' <- alpha * lambda' + (1 - alpha) * instantaneous`.
    pub fn update(&mut self, lambda_inst_bps: f64) -> f64 {
        debug_assert!(lambda_inst_bps >= 0.0);
        self.min_seen = self.min_seen.min(lambda_inst_bps);
        self.max_seen = self.max_seen.max(lambda_inst_bps);
        self.lambda_prime_bps =
            self.alpha * self.lambda_prime_bps + (1.0 - self.alpha) * lambda_inst_bps;
        debug_assert!(
            self.lambda_prime_bps >= self.min_seen - 1e-9
                && self.lambda_prime_bps <= self.max_seen + 1e-9
        );
        self.lambda_prime_bps
    }

    pub fn value_bps(&self) -> f64 {
        self.lambda_prime_bps
    }
}

/// Per-TTI credit allocation message from the Node B to the RNC; takes
/// effect only after the Iub signaling latency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CreditGrant {
    pub c_rt: f64,
    pub c_nrt: f64,
    pub issued_at: Micros,
    pub effective_at: Micros,
}

/// Composes the RT and NRT credit rules into the per-TTI grant for the
/// multi-flow user.
#[derive(Debug, Clone)]
pub struct CreditAllocator {
    pub estimator: RateEstimator,
    lambda_rt_bps: f64,
    pdu_size_bits: u32,
    tti_s: f64,
    l: u32,
    h: u32,
    k: f64,
    iub_delay_us: Micros,
}

impl CreditAllocator {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: f64,
        lambda_seed_bps: f64,
        lambda_rt_bps: f64,
        pdu_size_bits: u32,
        tti_s: f64,
        l: u32,
        h: u32,
        k: f64,
        iub_delay_us: Micros,
    ) -> Self {
        Self {
            estimator: RateEstimator::new(alpha, lambda_seed_bps),
            lambda_rt_bps,
            pdu_size_bits,
            tti_s,
            l,
            h,
            k,
            iub_delay_us,
        }
    }

    pub fn from_config(cfg: &crate::config::RunConfig) -> Self {
        Self::new(
            cfg.ewma_alpha,
            cfg.lambda_nrt_seed_bps,
            cfg.lambda_rt_bps,
            cfg.pdu_size_bits,
            cfg.tti_s(),
            cfg.threshold_l,
            cfg.threshold_h,
            cfg.overflow_k,
            cfg.iub_delay_us,
        )
    }

    /// Fold the transport-block capacity the scheduler allocated to this
    /// user over the last TTI into the rate estimate (zero when unserved).
    pub fn observe_scheduled_bits(&mut self, bits: u64) {
        self.estimator.update(bits as f64 / self.tti_s);
    }

    /// Issue the grant for this TTI from the current queue occupancy snapshot
    /// and the latest buffer-occupancy report from the RNC.
    pub fn issue_grant(&self, n_t: u32, ubs_report: u32, now: Micros) -> CreditGrant {
        let c_rt = rt_credits_per_tti(self.lambda_rt_bps, self.pdu_size_bits, self.tti_s);
        let c_max = nrt_max_credits_per_tti(
            n_t,
            self.l,
            self.h,
            self.k,
            self.estimator.value_bps(),
            self.pdu_size_bits,
            self.tti_s,
        );
        CreditGrant {
            c_rt,
            c_nrt: nrt_credits(c_max, ubs_report),
            issued_at: now,
            effective_at: now + self.iub_delay_us,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TTI: f64 = 0.002;

    fn close(a: f64, b: f64) -> bool {
        if b == 0.0 {
            a == 0.0
        } else {
            ((a - b) / b).abs() < 1e-12
        }
    }

    #[test]
    fn rt_credits_hand_values() {
        assert!(close(rt_credits_per_tti(16_000.0, 320, TTI), 0.1));
        assert_eq!(rt_credits_per_tti(0.0, 320, TTI), 0.0);
        assert!(close(rt_credits_per_tti(320_000.0, 320, TTI), 2.0));
    }

    #[test]
    fn nrt_max_hand_values() {
        // above H: nothing
        assert_eq!(nrt_max_credits_per_tti(150, 30, 100, 0.5, 480_000.0, 320, TTI), 0.0);
        // below L: full allowance
        assert!(close(
            nrt_max_credits_per_tti(20, 30, 100, 0.5, 480_000.0, 320, TTI),
            3.0
        ));
        // between L and H: attenuated by k
        assert!(close(
            nrt_max_credits_per_tti(50, 30, 100, 0.5, 480_000.0, 320, TTI),
            1.5
        ));
    }

    #[test]
    fn nrt_max_branch_boundaries() {
        let f = |n_t| nrt_max_credits_per_tti(n_t, 30, 100, 0.5, 480_000.0, 320, TTI);
        assert!(close(f(29), 3.0));
        assert!(close(f(30), 1.5)); // L inclusive in the middle branch
        assert!(close(f(100), 1.5)); // H inclusive in the middle branch
        assert_eq!(f(101), 0.0);
    }

    #[test]
    fn nrt_credits_is_min_with_ubs() {
        assert_eq!(nrt_credits(7.0, 100), 7.0);
        assert_eq!(nrt_credits(7.0, 0), 0.0);
        assert_eq!(nrt_credits(7.0, 3), 3.0);
    }

    #[test]
    fn ewma_hand_values() {
        let mut e = RateEstimator::new(0.7, 100_000.0);
        assert!(close(e.update(200_000.0), 130_000.0));
        // fixed point
        let mut f = RateEstimator::new(0.7, 55_000.0);
        assert!(close(f.update(55_000.0), 55_000.0));
        // alpha = 0 passes the instantaneous value through
        let mut g = RateEstimator::new(0.0, 1.0);
        assert_eq!(g.update(42.0), 42.0);
    }

    #[test]
    fn grant_and_signaling_latency() {
        let alloc = CreditAllocator::new(0.7, 160_000.0, 16_000.0, 320, TTI, 30, 100, 0.5, 20_000);
        let g = alloc.issue_grant(0, 0, 1_000_000);
        assert!(close(g.c_rt, 0.1));
        assert_eq!(g.c_nrt, 0.0);
        assert_eq!(g.effective_at - g.issued_at, 20_000);
        // congestion does not touch RT credits
        let g2 = alloc.issue_grant(120, 500, 1_000_000);
        assert!(close(g2.c_rt, 0.1));
        assert_eq!(g2.c_nrt, 0.0);
    }

    proptest! {
        #[test]
        fn nrt_max_non_increasing_in_occupancy(
            lambda in 0.0..3_000_000.0f64,
            k in 0.0..=1.0f64,
            l in 1u32..100,
            span in 0u32..100,
        ) {
            let h = l + span;
            let mut prev = f64::INFINITY;
            for n_t in 0..=(h + 20) {
                let c = nrt_max_credits_per_tti(n_t, l, h, k, lambda, 320, TTI);
                prop_assert!(c <= prev + 1e-12);
                prop_assert!(c >= 0.0);
                prev = c;
            }
        }

        #[test]
        fn grant_equals_manual_composition(
            n_t in 0u32..200,
            ubs in 0u32..2000,
            lambda in 0.0..3_000_000.0f64,
        ) {
            let mut alloc =
                CreditAllocator::new(0.7, 160_000.0, 16_000.0, 320, TTI, 30, 100, 0.5, 20_000);
            alloc.estimator = RateEstimator::new(0.7, lambda);
            let g = alloc.issue_grant(n_t, ubs, 0);
            let c_rt = rt_credits_per_tti(16_000.0, 320, TTI);
            let c_max = nrt_max_credits_per_tti(n_t, 30, 100, 0.5, lambda, 320, TTI);
            prop_assert_eq!(g.c_rt, c_rt);
            prop_assert_eq!(g.c_nrt, nrt_credits(c_max, ubs));
        }

        #[test]
        fn estimator_stays_within_observed_range(
            seed in 0.0..1e6f64,
            inputs in proptest::collection::vec(0.0..1e7f64, 1..50),
        ) {
            let mut e = RateEstimator::new(0.7, seed);
            let mut lo = seed;
            let mut hi = seed;
            for x in inputs {
                lo = lo.min(x);
                hi = hi.max(x);
                let v = e.update(x);
                prop_assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
            }
        }
    }
}
