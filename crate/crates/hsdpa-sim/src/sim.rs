//! End-to-end cell simulation: wires the traffic sources, RNC, Node B and
//! UE receive paths onto the event kernel and runs one 120 s session.
//!
//! Downlink data path: TCP/VoIP sources -> (external + CN delay) -> RNC
//! segmentation and RLC -> (Iub delay, credit-limited under enhanced TSP)
//! -> MAC-hs queue -> Round-Robin TTI scheduling with AMC and HARQ ->
//! UE reassembly -> TCP receiver. ACKs and STATUS reports ride fixed-delay
//! uplink paths with no loss.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::config::{Policy, RunConfig};
use crate::kernel::{EventHandle, EventQueue, Micros, RngStreams, MS};
use crate::metrics::{FlowLedger, LedgerReport, RunOutput, RunSummary, SessionMetrics};
use crate::nodeb::credits::{CreditAllocator, CreditGrant};
use crate::nodeb::harq::{FeedbackOutcome, HarqBank, TransportBlock};
use crate::nodeb::queue::{EnqueueOutcome, MacHsQueue};
use crate::nodeb::scheduler::RoundRobin;
use crate::radio::{transmit_block, LinkState, McsTable};
use crate::rnc::{FlowClass, Pdu, RlcAmTx, RlcUmTx, RncUser, StatusMsg, UserId};
use crate::traffic::tcp::{TcpReceiver, TcpSegment, TcpSender};
use crate::traffic::voip::VoipSource;
use crate::ue::{AmRx, ParentOutcome, UmOutcome, UmRx};

/// One scheduled transmission, for trace-based assertions.
#[derive(Debug, Clone, Copy)]
pub struct TxTraceRecord {
    pub t: Micros,
    pub user: UserId,
    pub mcs_idx: usize,
    pub reported_sinr_db: f64,
    pub current_sinr_db: f64,
    pub is_retx: bool,
}

#[derive(Debug)]
enum Ev {
    Tick,
    SegmentAtRnc { user: UserId, seg: TcpSegment },
    VoipToggle,
    VoipEmit,
    VoipPacketAtRnc { packet_id: u64, created_at: Micros },
    PdusAtNodeB { user: UserId, pdus: Vec<Pdu> },
    BlockAtUe { user: UserId, decoded: bool, pdus: Vec<Pdu> },
    FeedbackAtNodeB { user: UserId, proc_id: usize, ack: bool },
    StatusAtRnc { user: UserId, status: StatusMsg },
    SkipAtUe { user: UserId, seqs: Vec<u64> },
    GrantAtRnc { grant: CreditGrant },
    UbsReportAtNodeB { ubs: u32 },
    AckAtSender { user: UserId, ack: u64 },
    RtoFire { user: UserId },
    StatusSweep,
}

struct UserState {
    link: LinkState,
    queue: MacHsQueue,
    harq: HarqBank,
    rnc: RncUser,
    am_rx: AmRx,
    um_rx: Option<UmRx>,
    tcp_tx: TcpSender,
    tcp_rx: TcpReceiver,
    rto_handle: Option<EventHandle>,
    parent_meta: HashMap<u64, TcpSegment>,
    next_parent: u64,
    nrt_ledger: FlowLedger,
    rt_ledger: Option<FlowLedger>,
}

pub struct Simulation {
    cfg: RunConfig,
    events: EventQueue<Ev>,
    rng_shadow: ChaCha12Rng,
    rng_voip: ChaCha12Rng,
    rng_harq: ChaCha12Rng,
    mcs: McsTable,
    users: Vec<UserState>,
    rr: RoundRobin,
    allocator: CreditAllocator,
    latest_ubs_report: u32,
    voip: VoipSource,
    voip_emit_handle: Option<EventHandle>,
    next_voip_packet: u64,
    session: SessionMetrics,
    scheduled_bits_tti: u64,
    /// The rate estimator starts once the test user's session has data to
    /// schedule; idle ticks before first activity would only wash out the
    /// configured seed.
    estimator_active: bool,
    tx_trace: Option<Vec<TxTraceRecord>>,
    fired_events: u64,
}

impl Simulation {
    pub fn new(cfg: RunConfig) -> Result<Self, crate::config::ConfigError> {
        cfg.validate()?;
        let streams = RngStreams::new(cfg.master_seed);
        let mut rng_shadow = streams.stream("shadowing");
        let mut rng_placement = streams.stream("user-placement");
        let mcs = McsTable::from_config(&cfg);

        let mut users = Vec::with_capacity(cfg.n_users as usize);
        for uid in 0..cfg.n_users as usize {
            let is_test = uid == 0;
            let distance = if is_test {
                cfg.test_ue_distance_km
            } else {
                rng_placement.random_range(cfg.bg_min_distance_km..cfg.bg_max_distance_km)
            };
            let link = LinkState::new(&cfg, distance, &mut rng_shadow)
                .expect("validated distances are positive");
            // background single-flow users get a plain FIFO queue and no
            // flow control regardless of the configured policy
            let policy = if is_test { cfg.policy } else { Policy::Fifo };
            users.push(UserState {
                link,
                queue: MacHsQueue::new(policy, cfg.threshold_r, cfg.queue_capacity_n),
                harq: HarqBank::new(cfg.harq_processes, cfg.max_harq_tx),
                rnc: RncUser::new(
                    RlcAmTx::new(cfg.rlc_am_tx_window, cfg.rlc_max_retx, cfg.rlc_nack_holdoff_us),
                    is_test.then(RlcUmTx::new),
                ),
                am_rx: AmRx::new(),
                um_rx: is_test.then(UmRx::new),
                tcp_tx: TcpSender::new(&cfg),
                tcp_rx: TcpReceiver::new(),
                rto_handle: None,
                parent_meta: HashMap::new(),
                next_parent: 0,
                nrt_ledger: FlowLedger::new(),
                rt_ledger: is_test.then(FlowLedger::new),
            });
        }

        let session = SessionMetrics::new(
            (cfg.throughput_window_s * 1e6).round() as Micros,
            cfg.sim_duration_us(),
        );
        Ok(Self {
            allocator: CreditAllocator::from_config(&cfg),
            voip: VoipSource::new(&cfg),
            rng_shadow,
            rng_voip: streams.stream("voip"),
            rng_harq: streams.stream("harq-error"),
            mcs,
            users,
            rr: RoundRobin::new(),
            latest_ubs_report: 0,
            events: EventQueue::new(),
            voip_emit_handle: None,
            next_voip_packet: 0,
            session,
            scheduled_bits_tti: 0,
            tx_trace: None,
            estimator_active: false,
            fired_events: 0,
            cfg,
        })
    }

    /// Record every scheduled transmission for trace assertions.
    pub fn enable_tx_trace(&mut self) {
        self.tx_trace = Some(Vec::new());
    }

    pub fn tx_trace(&self) -> Option<&[TxTraceRecord]> {
        self.tx_trace.as_deref()
    }

    pub fn fired_events(&self) -> u64 {
        self.fired_events
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn run(&mut self) -> RunOutput {
        self.start();
        let t_end = self.cfg.sim_duration_us();
        while let Some((t, ev)) = self.events.pop_due(t_end) {
            self.handle(t, ev);
            self.fired_events += 1;
        }
        self.events.advance_to(t_end);
        self.finalize()
    }

    fn start(&mut self) {
        self.events.schedule(0, Ev::Tick);
        self.events
            .schedule(self.cfg.status_interval_us, Ev::StatusSweep);
        // the voice conversation starts talking at t = 0
        self.voip_emit_handle = Some(self.events.schedule(0, Ev::VoipEmit));
        let on_dur = self.voip.draw_state_duration(&mut self.rng_voip);
        self.events.schedule(on_dur, Ev::VoipToggle);
        // every FTP download begins at t = 0
        for uid in 0..self.users.len() {
            let segs = self.users[uid].tcp_tx.next_segments(0);
            for seg in segs {
                self.events
                    .schedule(self.cfg.external_cn_delay_us, Ev::SegmentAtRnc { user: uid, seg });
            }
            self.arm_rto(uid, 0);
        }
    }

    fn handle(&mut self, now: Micros, ev: Ev) {
        match ev {
            Ev::Tick => self.on_tick(now),
            Ev::SegmentAtRnc { user, seg } => self.on_segment_at_rnc(now, user, seg),
            Ev::VoipToggle => self.on_voip_toggle(now),
            Ev::VoipEmit => self.on_voip_emit(now),
            Ev::VoipPacketAtRnc {
                packet_id,
                created_at,
            } => self.on_voip_packet_at_rnc(packet_id, created_at),
            Ev::PdusAtNodeB { user, pdus } => self.on_pdus_at_nodeb(user, pdus),
            Ev::BlockAtUe {
                user,
                decoded,
                pdus,
            } => self.on_block_at_ue(now, user, decoded, pdus),
            Ev::FeedbackAtNodeB { user, proc_id, ack } => {
                self.on_feedback_at_nodeb(user, proc_id, ack)
            }
            Ev::StatusAtRnc { user, status } => self.on_status_at_rnc(now, user, status),
            Ev::SkipAtUe { user, seqs } => self.on_skip_at_ue(now, user, seqs),
            Ev::GrantAtRnc { grant } => self.users[0].rnc.set_grant(grant),
            Ev::UbsReportAtNodeB { ubs } => self.latest_ubs_report = ubs,
            Ev::AckAtSender { user, ack } => self.on_ack_at_sender(now, user, ack),
            Ev::RtoFire { user } => self.on_rto_fire(now, user),
            Ev::StatusSweep => self.on_status_sweep(now),
        }
    }

    fn on_tick(&mut self, now: Micros) {
        self.events.schedule(now + self.cfg.tti_us, Ev::Tick);

        for u in &mut self.users {
            u.link.step_tti(&self.mcs, &mut self.rng_shadow);
        }

        if self.cfg.policy == Policy::Etsp {
            let test = &self.users[0];
            self.estimator_active |= !test.queue.is_empty()
                || test.rnc.am.ubs() > 0
                || test.rnc.um.as_ref().is_some_and(|um| um.backlog() > 0)
                || self.scheduled_bits_tti > 0;
            // the instantaneous rate input is the transport-block capacity
            // the scheduler allocated to this user over the TTI that just
            // elapsed (zero on unserved TTIs)
            if self.estimator_active {
                self.allocator.observe_scheduled_bits(self.scheduled_bits_tti);
            }
            self.scheduled_bits_tti = 0;
            let n_t = self.users[0].queue.total() as u32;
            let grant = self.allocator.issue_grant(n_t, self.latest_ubs_report, now);
            self.events
                .schedule(grant.effective_at, Ev::GrantAtRnc { grant });
            if now % (self.cfg.hs_dsch_frame_ms * MS) == 0 {
                let ubs = self.users[0].rnc.am.ubs();
                self.events
                    .schedule(now + self.cfg.iub_delay_us, Ev::UbsReportAtNodeB { ubs });
            }
        }

        for uid in 0..self.users.len() {
            let poll = self.users[uid].rnc.am.poll_stall(now);
            self.handle_giveups(now, uid, poll.gave_up);
            let flow_controlled = uid == 0 && self.cfg.policy == Policy::Etsp;
            let pdus = self.users[uid].rnc.forward_tti(flow_controlled, now);
            if !pdus.is_empty() {
                self.events
                    .schedule(now + self.cfg.iub_delay_us, Ev::PdusAtNodeB { user: uid, pdus });
            }
        }

        self.transmit_tti(now);
    }

    fn handle_giveups(&mut self, now: Micros, uid: UserId, gave_up: Vec<u64>) {
        if gave_up.is_empty() {
            return;
        }
        for &seq in &gave_up {
            self.users[uid].nrt_ledger.on_discarded(seq);
        }
        self.events.schedule(
            now + self.cfg.iub_delay_us,
            Ev::SkipAtUe {
                user: uid,
                seqs: gave_up,
            },
        );
    }

    fn transmit_tti(&mut self, now: Micros) {
        let eligible: Vec<bool> = self
            .users
            .iter()
            .map(|u| {
                u.harq.has_pending_retx()
                    || (!u.queue.is_empty()
                        && u.harq.has_free()
                        && u.link.reported_cqi().is_some())
            })
            .collect();
        let Some(uid) = self.rr.pick(self.users.len(), |i| eligible[i]) else {
            return;
        };

        let gain = self.cfg.harq_combining_gain_db;
        let user = &mut self.users[uid];
        let (pdus, decoded, proc_id, mcs_idx, is_retx) = if user.harq.has_pending_retx() {
            let (pid, block, tx_count) = user.harq.start_retx().expect("pending retx");
            if uid == 0 {
                self.scheduled_bits_tti += u64::from(self.mcs.scheme(block.mcs_idx).tbs_bits);
            }
            let ok = transmit_block(
                self.mcs.scheme(block.mcs_idx).sinr_threshold_db,
                user.link.sinr_db(),
                tx_count,
                gain,
                &mut self.rng_harq,
            );
            (block.pdus, ok, pid, block.mcs_idx, true)
        } else {
            let mcs_idx = user.link.reported_cqi().expect("eligibility checked");
            let max_pdus = self.mcs.pdus_per_block(mcs_idx, self.cfg.pdu_size_bits) as usize;
            let taken = user.queue.dequeue_for_tti(max_pdus);
            debug_assert!(!taken.is_empty());
            if uid == 0 {
                self.scheduled_bits_tti += u64::from(self.mcs.scheme(mcs_idx).tbs_bits);
            }
            let block = TransportBlock {
                pdus: taken.clone(),
                mcs_idx,
                first_tx_at: now,
            };
            let (pid, tx_count) = user.harq.load_new(block);
            let ok = transmit_block(
                self.mcs.scheme(mcs_idx).sinr_threshold_db,
                user.link.sinr_db(),
                tx_count,
                gain,
                &mut self.rng_harq,
            );
            (taken, ok, pid, mcs_idx, false)
        };

        if let Some(trace) = self.tx_trace.as_mut() {
            trace.push(TxTraceRecord {
                t: now,
                user: uid,
                mcs_idx,
                reported_sinr_db: self.users[uid].link.reported_sinr_db().unwrap_or(f64::NAN),
                current_sinr_db: self.users[uid].link.sinr_db(),
                is_retx,
            });
        }

        self.events.schedule(
            now + self.cfg.tti_us,
            Ev::BlockAtUe {
                user: uid,
                decoded,
                pdus,
            },
        );
        self.events.schedule(
            now + self.cfg.tti_us + self.cfg.harq_feedback_delay_us,
            Ev::FeedbackAtNodeB {
                user: uid,
                proc_id,
                ack: decoded,
            },
        );
    }

    fn on_segment_at_rnc(&mut self, now: Micros, uid: UserId, seg: TcpSegment) {
        let wire_bits = (seg.len + self.cfg.tcp_header_bytes) * 8;
        let created_at = now - self.cfg.external_cn_delay_us;
        let user = &mut self.users[uid];
        let was_empty = user.rnc.am.ubs() == 0;
        let parent = user.next_parent;
        user.next_parent += 1;
        user.parent_meta.insert(parent, seg);
        let pdus = user
            .rnc
            .am
            .queue_packet(wire_bits, self.cfg.pdu_size_bits, uid, parent, created_at)
            .expect("segments are never empty");
        for p in pdus {
            user.nrt_ledger.on_created(p.rlc_seq);
        }
        // a buffer going busy triggers an immediate occupancy report, like a
        // capacity request; the periodic reports carry the rest
        if uid == 0 && self.cfg.policy == Policy::Etsp && was_empty {
            let ubs = self.users[0].rnc.am.ubs();
            self.events
                .schedule(now + self.cfg.iub_delay_us, Ev::UbsReportAtNodeB { ubs });
        }
    }

    fn on_voip_toggle(&mut self, now: Micros) {
        self.voip.toggle();
        if self.voip.on {
            self.voip_emit_handle = Some(self.events.schedule(now, Ev::VoipEmit));
        } else if let Some(h) = self.voip_emit_handle.take() {
            self.events.cancel(h);
        }
        let dur = self.voip.draw_state_duration(&mut self.rng_voip);
        self.events.schedule(now + dur, Ev::VoipToggle);
    }

    fn on_voip_emit(&mut self, now: Micros) {
        if !self.voip.on {
            return;
        }
        let packet_id = self.next_voip_packet;
        self.next_voip_packet += 1;
        self.events.schedule(
            now + self.cfg.external_cn_delay_us,
            Ev::VoipPacketAtRnc {
                packet_id,
                created_at: now,
            },
        );
        self.voip_emit_handle = Some(
            self.events
                .schedule(now + self.voip.interval_us, Ev::VoipEmit),
        );
    }

    fn on_voip_packet_at_rnc(&mut self, packet_id: u64, created_at: Micros) {
        let user = &mut self.users[0];
        let um = user.rnc.um.as_mut().expect("test user has a VoIP flow");
        let pdus = um
            .queue_packet(
                self.cfg.voip_packet_bits,
                self.cfg.pdu_size_bits,
                0,
                packet_id,
                created_at,
            )
            .expect("voice packets are never empty");
        let ledger = user.rt_ledger.as_mut().expect("test user ledger");
        for p in pdus {
            ledger.on_created(p.rlc_seq);
        }
    }

    fn on_pdus_at_nodeb(&mut self, uid: UserId, pdus: Vec<Pdu>) {
        let user = &mut self.users[uid];
        for pdu in pdus {
            if user.queue.enqueue(pdu) == EnqueueOutcome::Dropped && pdu.flow == FlowClass::Rt {
                // UM loss is final; AM drops recover through RLC
                user.rt_ledger
                    .as_mut()
                    .expect("RT pdus only exist for the test user")
                    .on_lost(pdu.rlc_seq);
            }
        }
    }

    fn on_block_at_ue(&mut self, now: Micros, uid: UserId, decoded: bool, pdus: Vec<Pdu>) {
        if !decoded {
            return;
        }
        let mut am_outcomes = Vec::new();
        let mut new_gap = false;
        for pdu in pdus {
            match pdu.flow {
                FlowClass::Rt => {
                    let user = &mut self.users[uid];
                    let outs = user.um_rx.as_mut().expect("RT flow").on_pdu(pdu);
                    let ledger = user.rt_ledger.as_mut().expect("test user ledger");
                    for o in outs {
                        match o {
                            UmOutcome::Delivered { created_at, .. } => {
                                ledger.on_delivered(pdu.rlc_seq);
                                self.session.on_voip_delivery(now, created_at);
                            }
                            UmOutcome::Dropped { seqs } => {
                                for s in seqs {
                                    ledger.on_lost(s);
                                }
                            }
                        }
                    }
                }
                FlowClass::Nrt => {
                    let user = &mut self.users[uid];
                    let (accepted, outs, gap) = user.am_rx.on_pdu(pdu);
                    if accepted {
                        user.nrt_ledger.on_delivered(pdu.rlc_seq);
                    }
                    new_gap |= gap;
                    am_outcomes.extend(outs);
                }
            }
        }
        self.process_am_outcomes(now, uid, am_outcomes);
        if new_gap {
            if let Some(status) = self.users[uid].am_rx.take_status() {
                self.events.schedule(
                    now + self.cfg.iub_delay_us,
                    Ev::StatusAtRnc { user: uid, status },
                );
            }
        }
    }

    fn process_am_outcomes(&mut self, now: Micros, uid: UserId, outcomes: Vec<ParentOutcome>) {
        for outcome in outcomes {
            match outcome {
                ParentOutcome::Delivered { parent } => {
                    let user = &mut self.users[uid];
                    let seg = user
                        .parent_meta
                        .remove(&parent)
                        .expect("delivered parent has metadata");
                    let (ack, delivered) = user.tcp_rx.on_segment(seg.seq_start, seg.len);
                    if uid == 0 && delivered > 0 {
                        self.session.on_app_bytes(now, delivered);
                    }
                    let ack_path = self.cfg.external_cn_delay_us + self.cfg.iub_delay_us;
                    self.events
                        .schedule(now + ack_path, Ev::AckAtSender { user: uid, ack });
                }
                ParentOutcome::Broken { parent } => {
                    self.users[uid].parent_meta.remove(&parent);
                }
            }
        }
    }

    fn on_feedback_at_nodeb(&mut self, uid: UserId, proc_id: usize, ack: bool) {
        let user = &mut self.users[uid];
        match user.harq.on_feedback(proc_id, ack) {
            FeedbackOutcome::Acked | FeedbackOutcome::RetxPending => {}
            FeedbackOutcome::GaveUp(block) => {
                for pdu in block.pdus {
                    if pdu.flow == FlowClass::Rt {
                        user.rt_ledger
                            .as_mut()
                            .expect("test user ledger")
                            .on_lost(pdu.rlc_seq);
                    }
                }
            }
        }
    }

    fn on_status_at_rnc(&mut self, now: Micros, uid: UserId, status: StatusMsg) {
        let fx = self.users[uid].rnc.am.on_status(&status, now);
        self.handle_giveups(now, uid, fx.gave_up);
    }

    fn on_skip_at_ue(&mut self, now: Micros, uid: UserId, seqs: Vec<u64>) {
        let outcomes = self.users[uid].am_rx.on_skip(&seqs);
        self.process_am_outcomes(now, uid, outcomes);
    }

    fn on_ack_at_sender(&mut self, now: Micros, uid: UserId, ack: u64) {
        let ext = self.cfg.external_cn_delay_us;
        let user = &mut self.users[uid];
        if let Some(retx) = user.tcp_tx.on_ack(ack, now) {
            self.events
                .schedule(now + ext, Ev::SegmentAtRnc { user: uid, seg: retx });
        }
        for seg in self.users[uid].tcp_tx.next_segments(now) {
            self.events
                .schedule(now + ext, Ev::SegmentAtRnc { user: uid, seg });
        }
        self.arm_rto(uid, now);
    }

    fn on_rto_fire(&mut self, now: Micros, uid: UserId) {
        self.users[uid].rto_handle = None;
        if !self.users[uid].tcp_tx.has_outstanding() {
            return;
        }
        let seg = self.users[uid].tcp_tx.on_timeout(now);
        self.events.schedule(
            now + self.cfg.external_cn_delay_us,
            Ev::SegmentAtRnc { user: uid, seg },
        );
        self.arm_rto(uid, now);
    }

    fn arm_rto(&mut self, uid: UserId, now: Micros) {
        if let Some(h) = self.users[uid].rto_handle.take() {
            self.events.cancel(h);
        }
        if self.users[uid].tcp_tx.has_outstanding() {
            let at = now + self.users[uid].tcp_tx.rto();
            self.users[uid].rto_handle = Some(self.events.schedule(at, Ev::RtoFire { user: uid }));
        }
    }

    fn on_status_sweep(&mut self, now: Micros) {
        self.events
            .schedule(now + self.cfg.status_interval_us, Ev::StatusSweep);
        for uid in 0..self.users.len() {
            if let Some(status) = self.users[uid].am_rx.take_status() {
                self.events.schedule(
                    now + self.cfg.iub_delay_us,
                    Ev::StatusAtRnc { user: uid, status },
                );
            }
        }
    }

    pub fn ledger_report(&self) -> Vec<LedgerReport> {
        let mut out = Vec::new();
        for (uid, u) in self.users.iter().enumerate() {
            out.push(LedgerReport {
                user: uid,
                flow: "nrt",
                created: u.nrt_ledger.created,
                delivered: u.nrt_ledger.delivered,
                discarded: u.nrt_ledger.discarded,
                lost: u.nrt_ledger.lost,
                in_system: u.nrt_ledger.in_system(),
                balanced: u.nrt_ledger.balanced(),
            });
            if let Some(rt) = &u.rt_ledger {
                out.push(LedgerReport {
                    user: uid,
                    flow: "rt",
                    created: rt.created,
                    delivered: rt.delivered,
                    discarded: rt.discarded,
                    lost: rt.lost,
                    in_system: rt.in_system(),
                    balanced: rt.balanced(),
                });
            }
        }
        out
    }

    fn finalize(&mut self) -> RunOutput {
        for report in self.ledger_report() {
            assert!(
                report.balanced,
                "pdu conservation violated for user {} {} flow: {:?}",
                report.user, report.flow, report
            );
        }
        let test = &self.users[0];
        let rt = test.rt_ledger.as_ref().expect("test user ledger");
        let mut delays: Vec<f64> = self.session.voip_delays.iter().map(|&(_, d)| d).collect();
        delays.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let delay_mean = if delays.is_empty() {
            0.0
        } else {
            delays.iter().sum::<f64>() / delays.len() as f64
        };
        let series = self.session.series();
        let tput_series = self.session.throughput_series_bps();
        let summary = RunSummary {
            policy: self.cfg.policy,
            n_users: self.cfg.n_users,
            seed: self.cfg.master_seed,
            nrt_throughput_bps: self.session.session_mean_bps(),
            nrt_throughput_cov: crate::metrics::coefficient_of_variation(&tput_series),
            voip_delay_mean_ms: delay_mean,
            voip_delay_p95_ms: crate::metrics::percentile(&delays, 0.95),
            voip_loss_ratio: if rt.created == 0 {
                0.0
            } else {
                rt.lost as f64 / rt.created as f64
            },
            voip_samples: delays.len() as u64,
            machs_nrt_drops: test.queue.nrt_drops,
            machs_rt_drops: test.queue.rt_drops,
            rlc_retx_count: test.rnc.am.retx_dispatched,
            rlc_giveups: test.rnc.am.giveups,
            tcp_timeouts: test.tcp_tx.timeouts,
            tcp_fast_retx: test.tcp_tx.fast_retransmits,
            app_bytes: self.session.app_bytes,
        };
        debug_assert!(
            summary.nrt_throughput_bps <= self.mcs.top_rate_bps(self.cfg.tti_s()) + 1.0,
            "throughput above the line rate"
        );
        RunOutput { summary, series }
    }
}

/// Run one configuration to completion.
pub fn run_once(cfg: RunConfig) -> Result<RunOutput, crate::config::ConfigError> {
    Ok(Simulation::new(cfg)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(policy: Policy, n_users: u32, seed: u64, secs: f64) -> RunConfig {
        let mut c = RunConfig::default();
        c.policy = policy;
        c.n_users = n_users;
        c.master_seed = seed;
        c.sim_duration_s = secs;
        c
    }

    #[test]
    fn single_user_session_moves_data() {
        let out = run_once(cfg(Policy::Fifo, 1, 1, 10.0)).unwrap();
        assert!(
            out.summary.nrt_throughput_bps > 100_000.0,
            "throughput {}",
            out.summary.nrt_throughput_bps
        );
        assert!(out.summary.voip_samples > 0);
    }

    #[test]
    fn identical_seeds_replay_identically() {
        let a = run_once(cfg(Policy::Etsp, 4, 7, 6.0)).unwrap();
        let b = run_once(cfg(Policy::Etsp, 4, 7, 6.0)).unwrap();
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn different_seeds_diverge() {
        let a = run_once(cfg(Policy::Tsp, 4, 1, 6.0)).unwrap();
        let b = run_once(cfg(Policy::Tsp, 4, 2, 6.0)).unwrap();
        assert_ne!(a.summary.app_bytes, b.summary.app_bytes);
    }

    #[test]
    fn voip_delay_respects_the_fixed_path_floor() {
        for policy in Policy::ALL {
            let mut sim = Simulation::new(cfg(policy, 2, 3, 8.0)).unwrap();
            let _ = sim.run();
            let floor_ms = 90.0 + 2.0; // external + CN + Iub + one TTI
            for &(_, d) in &sim.session.voip_delays {
                assert!(d >= floor_ms, "{policy}: delay {d} below floor");
            }
        }
    }

    #[test]
    fn conservation_holds_under_every_policy() {
        for policy in Policy::ALL {
            let mut sim = Simulation::new(cfg(policy, 5, 11, 8.0)).unwrap();
            let _ = sim.run(); // finalize asserts the ledgers balance
            assert!(sim.ledger_report().iter().all(|r| r.balanced));
        }
    }

    #[test]
    fn scheduled_mcs_always_matches_the_delayed_report() {
        let mut sim = Simulation::new(cfg(Policy::Tsp, 3, 5, 5.0)).unwrap();
        sim.enable_tx_trace();
        let _ = sim.run();
        let trace = sim.tx_trace().unwrap();
        assert!(!trace.is_empty());
        let table = McsTable::from_config(sim.config());
        for rec in trace.iter().filter(|r| !r.is_retx) {
            assert_eq!(
                table.select(rec.reported_sinr_db),
                Some(rec.mcs_idx),
                "at t={} the scheduler used a scheme other than the delayed report",
                rec.t
            );
        }
    }

    #[test]
    fn etsp_credits_throttle_the_nodeb_queue() {
        let mut sim = Simulation::new(cfg(Policy::Etsp, 10, 2, 10.0)).unwrap();
        let out = sim.run();
        // flow control keeps the test queue under the overflow threshold:
        // no NRT drops and no RLC give-ups for the test user
        assert_eq!(out.summary.machs_nrt_drops, 0, "{:?}", out.summary);
        assert_eq!(out.summary.rlc_giveups, 0);
        assert!(out.summary.nrt_throughput_bps > 0.0);
    }
}

