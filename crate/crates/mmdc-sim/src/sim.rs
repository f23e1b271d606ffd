//! The run loop: owns the world state, dispatches events in (time, seq)
//! order, executes controller decisions against the data plane, and
//! assembles per-run metrics plus the optional event trace.
//!
//! Event choreography per reporting instant t (ties broken by schedule
//! order): MOBILITY_STEP < SRS_REPORT < LINK_SERVICE < TRAFFIC_GEN <
//! runtime events (X2_DELIVERY, TTT_EXPIRY, HO_COMPLETE). Link service at
//! t covers the interval since the previous service using the rate/leg
//! snapshot taken then, so control actions at t only affect later
//! intervals. Periodic events are pre-scheduled at setup, which pins their
//! relative order at shared instants.

use std::fmt::Write as _;

use rand_chacha::ChaCha12Rng;

use crate::channel::{
    classify, mn_sinr_db, sinr_db, LinkClass, LinkReport, LinkState, RadioParams, ShadowingState,
};
use crate::config::{ScenarioConfig, Scheme};
use crate::dataplane::{
    link_rate_bps, pdu_count, FileJob, PdcpReceiver, Pdu, Released, RlcBuffer, TrafficStage,
};
use crate::engine::{EventHandle, EventQueue, RngStreams, StreamId};
use crate::error::SimError;
use crate::geometry::{generate_field, is_los, BlockageField, FieldParams, Vec2};
use crate::metrics::{ByteAccounting, RunMetrics};
use crate::network::{build_topology, SnId, StreetPath, Topology, UeState};
use crate::protocol::{
    BaselineController, Controller, ControlAction, ControllerParams, Decision, DualController,
    HoResolution, LegTarget, Observation, Routing, TimerOp,
};

/// Event payloads dispatched by the run loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    MobilityStep,
    SrsReport,
    LinkService,
    TrafficGen,
    X2Delivery(usize),
    HoComplete,
    TttExpiry,
    RunEnd,
}

struct X2Transfer {
    pdus: Vec<Pdu>,
    dst: LegTarget,
}

/// Result of one run.
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// Line-delimited event trace (when requested).
    pub trace: Option<String>,
}

/// Execute one seeded scenario end to end.
pub fn run(cfg: &ScenarioConfig, with_trace: bool) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    let mut world = World::new(cfg, with_trace)?;
    world.prime_queue()?;
    loop {
        let Some(ev) = world.queue.pop() else {
            world.queue.advance_to(cfg.duration_s);
            break;
        };
        let t = ev.time;
        match ev.payload {
            Ev::RunEnd => {
                world.trace_line(t, "RUN_END", String::new());
                break;
            }
            Ev::MobilityStep => world.on_mobility(t),
            Ev::SrsReport => world.on_srs(t),
            Ev::LinkService => world.on_service(t),
            Ev::TrafficGen => world.on_traffic(t),
            Ev::X2Delivery(id) => world.on_x2_delivery(t, id),
            Ev::TttExpiry => world.on_ttt_expiry(t),
            Ev::HoComplete => world.on_ho_complete(t),
        }
    }
    Ok(world.finalize())
}

struct World {
    cfg: ScenarioConfig,
    radio_sn: RadioParams,
    radio_mn: RadioParams,
    topo: Topology,
    channels: Vec<u8>,
    street: StreetPath,
    field: BlockageField,
    ue: UeState,
    shadowing: Vec<ShadowingState>,
    shadow_rngs: Vec<ChaCha12Rng>,

    queue: EventQueue<Ev>,
    controller: Option<Box<dyn Controller>>,
    routing: Routing,
    /// Legs attached before the current controller callback (fallback
    /// forwarding needs them after the controller has detached).
    legs_snapshot: (Option<SnId>, Option<SnId>),
    ttt_handle: Option<EventHandle>,

    last_reports: Vec<LinkReport>,
    mn_sinr: f64,

    buffers: Vec<RlcBuffer>,
    mn_buffer: RlcBuffer,
    stage: TrafficStage,
    pdcp: PdcpReceiver,
    files: Vec<FileJob>,
    next_seq: u64,
    x2_transfers: Vec<Option<X2Transfer>>,

    /// (leg, bits/s) snapshot serving the current inter-report interval.
    snapshot: Vec<(LegTarget, f64)>,
    /// Fractional byte credit per leg (SNs then MN).
    credits: Vec<f64>,
    last_service: f64,

    handover_trials: u64,
    path_switches: u64,
    fallback_events: u64,
    bytes_generated: u64,
    bytes_delivered: u64,
    dropped_primaries: std::collections::BTreeMap<u64, u32>,
    dropped_staged_bytes: u64,
    dup_purged_bytes: u64,
    released_scratch: Vec<Released>,
    trace: Option<String>,
}

impl World {
    fn new(cfg: &ScenarioConfig, with_trace: bool) -> Result<Self, SimError> {
        let topo = build_topology(cfg)?;
        let channels = topo.channels();
        if cfg.scheme == Scheme::Dual && (!channels.contains(&0) || !channels.contains(&1)) {
            return Err(SimError::Scenario(
                "dual scheme needs SNs on both carrier channels".into(),
            ));
        }
        let street = StreetPath::default_street(cfg)?;
        let ue = UeState::new(&street, cfg.ue_start_offset_m, cfg.ue_speed_mps);

        let streams = RngStreams::new(cfg.seed);
        let mut blockage_rng = streams.stream(StreamId::Blockage);
        let field = generate_field(
            &FieldParams {
                density_per_km2: cfg.blockage_density_per_km2,
                bounds: Vec2::new(cfg.area_width_m, cfg.area_height_m),
                dim_range: (cfg.blockage_dim_min_m, cfg.blockage_dim_max_m),
                orientation: cfg.blockage_orientation,
                count_mode: cfg.blockage_count_mode,
            },
            &mut blockage_rng,
        );

        let n = topo.sns.len();
        let shadowing = vec![ShadowingState::new(cfg.decorrelation_distance_m); n];
        let shadow_rngs =
            (0..n).map(|i| streams.stream(StreamId::Shadowing(i as u32))).collect();

        let radio_sn = RadioParams {
            tx_power_dbm: cfg.sn_tx_power_dbm,
            bandwidth_hz: cfg.mmwave_bandwidth_hz,
            noise_psd_dbm_hz: cfg.noise_psd_dbm_hz,
            noise_figure_db: cfg.noise_figure_db,
            g_main_db: cfg.g_main(),
            g_side_db: cfg.g_side_db,
        };
        let radio_mn = RadioParams {
            tx_power_dbm: cfg.mn_tx_power_dbm,
            bandwidth_hz: cfg.lte_bandwidth_hz,
            noise_psd_dbm_hz: cfg.noise_psd_dbm_hz,
            noise_figure_db: cfg.noise_figure_db,
            g_main_db: 0.0,
            g_side_db: 0.0,
        };

        let buffers = (0..n).map(|_| RlcBuffer::new(cfg.rlc_buffer_bytes)).collect();
        // The MN transmit queue is RLC too; the unbounded backlog stays in
        // the lazy staging area.
        let mn_buffer = RlcBuffer::new(cfg.rlc_buffer_bytes);

        let mut trace = None;
        if with_trace {
            let mut s = String::with_capacity(1 << 20);
            s.push_str("# mmdc-trace v1\n");
            trace = Some(s);
        }

        Ok(Self {
            radio_sn,
            radio_mn,
            channels,
            street,
            field,
            ue,
            shadowing,
            shadow_rngs,
            queue: EventQueue::new(),
            controller: None,
            routing: Routing {
                primary: LegTarget::Mn,
                duplicate: None,
                transmitting: vec![],
                pd_active: false,
            },
            legs_snapshot: (None, None),
            ttt_handle: None,
            last_reports: Vec::new(),
            mn_sinr: 0.0,
            buffers,
            mn_buffer,
            stage: TrafficStage::new(),
            pdcp: PdcpReceiver::new(cfg.reorder_enabled, cfg.reorder_window_s),
            files: Vec::new(),
            next_seq: 0,
            x2_transfers: Vec::new(),
            snapshot: Vec::new(),
            credits: vec![0.0; n + 1],
            last_service: 0.0,
            handover_trials: 0,
            path_switches: 0,
            fallback_events: 0,
            bytes_generated: 0,
            bytes_delivered: 0,
            dropped_primaries: std::collections::BTreeMap::new(),
            dropped_staged_bytes: 0,
            dup_purged_bytes: 0,
            released_scratch: Vec::new(),
            trace,
            topo,
            cfg: cfg.clone(),
        })
    }

    /// Pre-schedule the periodic event blocks. Scheduling order fixes the
    /// within-instant processing order for the whole run, and periods are
    /// quantized to whole microseconds on a shared base so coincident
    /// instants (e.g. a traffic tick landing on a service tick) compare
    /// bitwise equal.
    fn prime_queue(&mut self) -> Result<(), SimError> {
        const US: f64 = 1.0e-6;
        let to_us = |s: f64| (s * 1.0e6).round().max(1.0) as u64;
        let end = self.cfg.duration_s;
        let sched = |q: &mut EventQueue<Ev>, t: f64, ev: Ev| {
            q.schedule(t, ev).expect("setup schedules into the future");
        };
        sched(&mut self.queue, end, Ev::RunEnd);

        let step_us = to_us(self.cfg.mobility_step_s);
        let mut k = 1u64;
        while ((k * step_us) as f64) * US < end {
            sched(&mut self.queue, ((k * step_us) as f64) * US, Ev::MobilityStep);
            k += 1;
        }
        let srs_us = to_us(self.cfg.srs_period_s);
        for ev in [Ev::SrsReport, Ev::LinkService] {
            let mut k = 0u64;
            while ((k * srs_us) as f64) * US < end {
                sched(&mut self.queue, ((k * srs_us) as f64) * US, ev);
                k += 1;
            }
        }
        let first_us = (self.cfg.first_file_at_s * 1.0e6).round() as u64;
        let interval_us = to_us(self.cfg.file_interval_s);
        let mut k = 0u64;
        while ((first_us + k * interval_us) as f64) * US < end {
            sched(&mut self.queue, ((first_us + k * interval_us) as f64) * US, Ev::TrafficGen);
            k += 1;
        }
        Ok(())
    }

    // --- event handlers -------------------------------------------------

    fn on_mobility(&mut self, t: f64) {
        self.ue.step(&self.street, self.cfg.mobility_step_s);
        if self.trace.is_some() {
            let p = self.ue.position;
            self.trace_line(t, "MOBILITY_STEP", format!("\"x\":{},\"y\":{}", p.x, p.y));
        }
    }

    fn on_srs(&mut self, t: f64) {
        // Shadowing advances first (one draw per link, id order), then the
        // snapshot of link states feeds every SINR evaluation.
        let ue_pos = self.ue.position;
        let mut links = Vec::with_capacity(self.topo.sns.len());
        for (i, sn) in self.topo.sns.iter().enumerate() {
            self.shadowing[i].update(ue_pos, &mut self.shadow_rngs[i]);
            let los = is_los(sn.position, ue_pos, &self.field);
            let sigma = if los { self.cfg.pathloss_los.sigma_db } else { self.cfg.pathloss_nlos.sigma_db };
            links.push(LinkState {
                distance_m: sn.position.distance(ue_pos),
                los,
                xi_db: self.shadowing[i].xi_db(sigma),
                channel: self.channels[i],
            });
        }

        self.last_reports.clear();
        for i in 0..links.len() {
            let sinr = sinr_db(
                i,
                &links,
                &self.radio_sn,
                &self.cfg.pathloss_los,
                &self.cfg.pathloss_nlos,
                self.cfg.min_link_distance_m,
                self.cfg.interference_mode,
            );
            let class = classify(sinr, links[i].los, self.cfg.outage_threshold_db);
            self.last_reports.push(LinkReport { sn: i as u32, sinr_db: sinr, class, report_time: t });
        }
        self.mn_sinr = mn_sinr_db(
            self.topo.mn.position.distance(ue_pos),
            &self.radio_mn,
            self.cfg.min_link_distance_m,
        );

        if self.trace.is_some() {
            let mut payload = String::from("\"sinr\":[");
            for (i, r) in self.last_reports.iter().enumerate() {
                if i > 0 {
                    payload.push(',');
                }
                let _ = write!(payload, "{}", r.sinr_db);
            }
            let _ = write!(payload, "],\"mn\":{}", self.mn_sinr);
            self.trace_line(t, "SRS_REPORT", payload);
        }

        if self.controller.is_none() {
            self.attach_initial(t);
            return;
        }

        self.legs_snapshot = self.controller.as_ref().unwrap().legs();
        let decision = {
            let obs = Observation {
                reports: &self.last_reports,
                channels: &self.channels,
                mn_sinr_db: self.mn_sinr,
            };
            self.controller.as_mut().unwrap().on_reports(&obs)
        };
        self.execute(t, decision);
    }

    /// First reporting instant: attach legs and build the controller.
    fn attach_initial(&mut self, t: f64) {
        let ctrl: Box<dyn Controller> = match self.cfg.scheme {
            Scheme::Dual => {
                // The two nearest SNs on distinct carriers; the one with the
                // higher initial SINR serves.
                let ue = self.ue.position;
                let nearest = |pred: &dyn Fn(usize) -> bool| -> Option<usize> {
                    let mut best: Option<(usize, f64)> = None;
                    for (i, sn) in self.topo.sns.iter().enumerate() {
                        if !pred(i) {
                            continue;
                        }
                        let d = sn.position.distance(ue);
                        if best.map_or(true, |(_, bd)| d < bd) {
                            best = Some((i, d));
                        }
                    }
                    best.map(|(i, _)| i)
                };
                let first = nearest(&|_| true).expect("topology has SNs");
                let ch = self.channels[first];
                let second = nearest(&|i| self.channels[i] != ch)
                    .expect("dual scheme validated both carriers present");
                let (serving, idle) =
                    if self.last_reports[first].sinr_db >= self.last_reports[second].sinr_db {
                        (first, second)
                    } else {
                        (second, first)
                    };
                Box::new(DualController::new(
                    ControllerParams {
                        sinr_threshold_db: self.cfg.sinr_threshold_db,
                        hysteresis_db: self.cfg.path_switch_hysteresis_db,
                        forward_on_path_switch: self.cfg.forward_on_path_switch,
                    },
                    SnId(serving as u32),
                    SnId(idle as u32),
                ))
            }
            Scheme::Single => {
                let best = self
                    .last_reports
                    .iter()
                    .max_by(|a, b| a.sinr_db.partial_cmp(&b.sinr_db).unwrap())
                    .map(|r| SnId(r.sn))
                    .expect("topology has SNs");
                Box::new(BaselineController::new(best))
            }
        };
        self.controller = Some(ctrl);
        self.routing = self.controller.as_ref().unwrap().routing();
        let (s, i) = self.controller.as_ref().unwrap().legs();
        self.trace_control(t, "ATTACH", &format!(
            "\"serving\":{},\"idle\":{}",
            s.map(|x| x.0 as i64).unwrap_or(-1),
            i.map(|x| x.0 as i64).unwrap_or(-1)
        ));
    }

    fn on_service(&mut self, t: f64) {
        let dt = t - self.last_service;

        if self.cfg.abort_on_deadline {
            self.purge_expired(t);
        }

        // Top up transmit queues with backlog staged at the MN.
        self.feed_stage();

        // Serve the elapsed interval with the snapshot taken at its start.
        let mut received = Vec::new();
        if dt > 0.0 {
            let snapshot = std::mem::take(&mut self.snapshot);
            for &(leg, rate) in &snapshot {
                let slot = self.credit_slot(leg);
                self.credits[slot] += rate * dt / 8.0;
                let budget = self.credits[slot].floor();
                if budget >= 1.0 {
                    let served = self.buffer_mut(leg).serve(budget as u64, &mut received);
                    let _ = served;
                }
                self.credits[slot] -= budget;
            }
            self.snapshot = snapshot;
        }

        let mut released = std::mem::take(&mut self.released_scratch);
        released.clear();
        for pdu in received {
            self.pdcp.receive(t, pdu, &mut released);
        }
        self.pdcp.check_window(t, &mut released);
        let released_bytes: u64 = released.iter().map(|r| u64::from(r.bytes)).sum();
        for rel in &released {
            self.apply_release(t, rel);
        }
        self.released_scratch = released;

        if self.trace.is_some() && released_bytes > 0 {
            self.trace_line(t, "LINK_SERVICE", format!("\"released_bytes\":{released_bytes}"));
        }

        // Space freed: pull more backlog forward, then snapshot the legs
        // and rates that will serve the next interval.
        self.feed_stage();
        self.snapshot = self
            .routing
            .transmitting
            .iter()
            .map(|&leg| (leg, self.leg_rate(leg)))
            .collect();
        self.last_service = t;
    }

    fn apply_release(&mut self, t: f64, rel: &Released) {
        self.bytes_delivered += u64::from(rel.bytes);
        // A sequence rescued by its duplicate is no longer dropped.
        self.dropped_primaries.remove(&rel.seq);
        let f = &mut self.files[rel.file as usize];
        f.delivered_bytes += u64::from(rel.bytes);
        let completed_now = if f.delivered_bytes >= f.size && f.completed.is_none() {
            f.completed = Some(t);
            Some((f.id, t - f.created))
        } else {
            None
        };
        if let Some((id, elapsed)) = completed_now {
            if self.trace.is_some() {
                self.trace_line(t, "FILE_COMPLETE", format!("\"file\":{id},\"elapsed\":{elapsed}"));
            }
        }
    }

    fn on_traffic(&mut self, t: f64) {
        let id = self.files.len() as u32;
        let size = self.cfg.file_size_bytes;
        let pdus = pdu_count(size, self.cfg.pdu_bytes);
        self.files.push(FileJob {
            id,
            size,
            created: t,
            deadline: t + self.cfg.delay_constraint_s,
            first_seq: self.next_seq,
            pdu_count: pdus,
            delivered_bytes: 0,
            completed: None,
        });
        self.stage.push_file(id, self.next_seq, size, self.cfg.pdu_bytes);
        self.next_seq += pdus;
        self.bytes_generated += size;
        // New bytes reach the transmit queue immediately; they are served
        // starting with the next interval.
        self.feed_stage();
        if self.trace.is_some() {
            self.trace_line(t, "TRAFFIC_GEN", format!("\"file\":{id},\"bytes\":{size}"));
        }
    }

    fn on_x2_delivery(&mut self, t: f64, id: usize) {
        let Some(transfer) = self.x2_transfers[id].take() else { return };
        let mut delivered = 0u64;
        let mut dropped = 0u64;
        for pdu in transfer.pdus {
            match self.buffer_mut(transfer.dst).enqueue(pdu) {
                crate::dataplane::Enqueued::Accepted => delivered += u64::from(pdu.bytes),
                crate::dataplane::Enqueued::Dropped => {
                    if !pdu.duplicate {
                        self.dropped_primaries.insert(pdu.seq, pdu.bytes);
                    }
                    dropped += u64::from(pdu.bytes);
                }
            }
        }
        if self.trace.is_some() {
            let dst = leg_label(transfer.dst);
            self.trace_line(
                t,
                "X2_DELIVERY",
                format!("\"dst\":{dst},\"bytes\":{delivered},\"dropped\":{dropped}"),
            );
        }
    }

    fn on_ttt_expiry(&mut self, t: f64) {
        self.ttt_handle = None;
        self.legs_snapshot = self.controller.as_ref().unwrap().legs();
        let decision = {
            let obs = Observation {
                reports: &self.last_reports,
                channels: &self.channels,
                mn_sinr_db: self.mn_sinr,
            };
            self.controller.as_mut().unwrap().on_ttt_expiry(&obs)
        };
        if self.trace.is_some() {
            self.trace_line(t, "TTT_EXPIRY", String::new());
        }
        self.execute(t, decision);
    }

    fn on_ho_complete(&mut self, t: f64) {
        let resolution = {
            let obs = Observation {
                reports: &self.last_reports,
                channels: &self.channels,
                mn_sinr_db: self.mn_sinr,
            };
            self.controller.as_mut().unwrap().on_ho_complete(&obs)
        };
        match resolution {
            HoResolution::Install { serving, idle } => {
                self.end_pd();
                self.trace_control(t, "HO_COMPLETE", &format!(
                    "\"serving\":{},\"idle\":{}",
                    serving.0,
                    idle.map(|x| x.0 as i64).unwrap_or(-1)
                ));
            }
            HoResolution::Retry { target, forward_from } => {
                self.handover_trials += 1;
                self.start_x2(t, LegTarget::Sn(forward_from), LegTarget::Sn(target));
                self.queue
                    .schedule(t + self.cfg.rrc_control_delay_s, Ev::HoComplete)
                    .expect("future");
                self.trace_control(t, "HO_RETRY", &format!(
                    "\"failed\":{},\"target\":{}",
                    forward_from.0, target.0
                ));
            }
            HoResolution::AbortOneLeg { serving, failed_target } => {
                self.end_pd();
                self.start_x2(t, LegTarget::Sn(failed_target), LegTarget::Sn(serving));
                self.trace_control(t, "HO_ABORT", &format!(
                    "\"failed\":{},\"serving\":{}",
                    failed_target.0, serving.0
                ));
            }
            HoResolution::AbortToFallback { failed_target, retained } => {
                self.end_pd();
                self.fallback_events += 1;
                self.start_x2(t, LegTarget::Sn(failed_target), LegTarget::Mn);
                if let Some(r) = retained {
                    self.start_x2(t, LegTarget::Sn(r), LegTarget::Mn);
                }
                self.trace_control(t, "HO_ABORT_FALLBACK", &format!("\"failed\":{}", failed_target.0));
            }
        }
        self.routing = self.controller.as_ref().unwrap().routing();
    }

    // --- decision execution ---------------------------------------------

    fn execute(&mut self, t: f64, decision: Decision) {
        match decision.timer {
            TimerOp::Keep => {}
            TimerOp::Start => {
                debug_assert!(self.ttt_handle.is_none());
                let h = self.queue.schedule(t + self.cfg.ttt_s, Ev::TttExpiry).expect("future");
                self.ttt_handle = Some(h);
            }
            TimerOp::Cancel => {
                if let Some(h) = self.ttt_handle.take() {
                    self.queue.cancel(h);
                }
            }
        }

        let prev_primary = self.routing.primary;
        match decision.action {
            ControlAction::None => return,
            ControlAction::SwitchPath { to, forward_buffer } => {
                self.path_switches += 1;
                if forward_buffer {
                    self.start_x2(t, prev_primary, LegTarget::Sn(to));
                }
                self.trace_control(t, "SWITCH_PATH", &format!(
                    "\"from\":{},\"to\":{},{}",
                    leg_label(prev_primary),
                    to.0,
                    self.leg_sinrs_json()
                ));
            }
            ControlAction::StartHandover { replace, target, duplicate, forward_buffer } => {
                debug_assert!(forward_buffer);
                self.handover_trials += 1;
                // Both current legs push their queued primaries to the
                // incoming target; the retained leg then carries duplicate
                // copies until completion.
                let (serving, idle) = self.controller.as_ref().unwrap().legs();
                if let Some(s) = serving {
                    self.start_x2(t, LegTarget::Sn(s), LegTarget::Sn(target));
                }
                if let Some(i) = idle {
                    if duplicate {
                        self.start_x2(t, LegTarget::Sn(i), LegTarget::Sn(target));
                    }
                }
                self.queue
                    .schedule(t + self.cfg.rrc_control_delay_s, Ev::HoComplete)
                    .expect("future");
                self.trace_control(t, "START_HANDOVER", &format!(
                    "\"replace\":\"{:?}\",\"target\":{},\"pd\":{},{}",
                    replace,
                    target.0,
                    duplicate,
                    self.leg_sinrs_json()
                ));
            }
            ControlAction::FallbackToMn => {
                self.fallback_events += 1;
                // Every leg attached before the decision dumps its backlog
                // to the MN anchor.
                let (serving, idle) = self.legs_snapshot;
                if let Some(s) = serving {
                    self.start_x2(t, LegTarget::Sn(s), LegTarget::Mn);
                }
                if let Some(i) = idle {
                    self.start_x2(t, LegTarget::Sn(i), LegTarget::Mn);
                }
                self.trace_control(t, "FALLBACK_TO_MN", "");
            }
            ControlAction::Recover { serving, idle } => {
                self.handover_trials += 1;
                if prev_primary == LegTarget::Mn {
                    // Fallback recovery: the MN-side queue follows the UE to
                    // the re-established serving leg.
                    self.start_x2(t, LegTarget::Mn, LegTarget::Sn(serving));
                }
                self.trace_control(t, "RECOVER", &format!(
                    "\"serving\":{},\"idle\":{}",
                    serving.0,
                    idle.map(|x| x.0 as i64).unwrap_or(-1)
                ));
            }
        }
        self.routing = self.controller.as_ref().unwrap().routing();
    }

    /// Forward all queued primaries of `from` to `to` over the X2 pipe.
    fn start_x2(&mut self, t: f64, from: LegTarget, to: LegTarget) {
        if from == to {
            return;
        }
        let (pdus, dup_purged) = self.buffer_mut(from).drain_for_forwarding();
        self.dup_purged_bytes += dup_purged;
        if pdus.is_empty() {
            return;
        }
        let bytes: u64 = pdus.iter().map(|p| u64::from(p.bytes)).sum();
        let id = self.x2_transfers.len();
        self.x2_transfers.push(Some(X2Transfer { pdus, dst: to }));
        self.queue.schedule(t + self.cfg.x2_delay_s, Ev::X2Delivery(id)).expect("future");
        if self.trace.is_some() {
            self.trace_line(t, "X2_FORWARD", format!(
                "\"from\":{},\"to\":{},\"bytes\":{bytes}",
                leg_label(from),
                leg_label(to)
            ));
        }
    }

    /// End of a packet-duplication interval: duplicate copies left in any
    /// queue are stale and dropped from bookkeeping.
    fn end_pd(&mut self) {
        for b in &mut self.buffers {
            self.dup_purged_bytes += b.purge_duplicates();
        }
    }

    fn feed_stage(&mut self) {
        let dup = if self.routing.pd_active { self.routing.duplicate } else { None };
        match (self.routing.primary, dup) {
            (LegTarget::Sn(p), Some(LegTarget::Sn(d))) if p != d => {
                let (pb, db) = two_mut(&mut self.buffers, p.0 as usize, d.0 as usize);
                self.stage.feed(pb, Some(db));
            }
            (LegTarget::Sn(p), _) => self.stage.feed(&mut self.buffers[p.0 as usize], None),
            (LegTarget::Mn, _) => self.stage.feed(&mut self.mn_buffer, None),
        }
    }

    fn purge_expired(&mut self, now: f64) {
        let files = &self.files;
        let expired =
            |file: u32| files[file as usize].deadline < now && files[file as usize].completed.is_none();
        for b in self.buffers.iter_mut().chain(std::iter::once(&mut self.mn_buffer)) {
            for p in b.purge_where(&expired) {
                if !p.duplicate {
                    self.dropped_primaries.insert(p.seq, p.bytes);
                } else {
                    self.dup_purged_bytes += u64::from(p.bytes);
                }
            }
        }
        self.dropped_staged_bytes += self.stage.drop_expired(&expired);
    }

    // --- helpers ----------------------------------------------------------

    fn buffer_mut(&mut self, leg: LegTarget) -> &mut RlcBuffer {
        match leg {
            LegTarget::Sn(id) => &mut self.buffers[id.0 as usize],
            LegTarget::Mn => &mut self.mn_buffer,
        }
    }

    fn credit_slot(&self, leg: LegTarget) -> usize {
        match leg {
            LegTarget::Sn(id) => id.0 as usize,
            LegTarget::Mn => self.buffers.len(),
        }
    }

    fn leg_rate(&self, leg: LegTarget) -> f64 {
        match leg {
            LegTarget::Sn(id) => {
                let r = &self.last_reports[id.0 as usize];
                link_rate_bps(
                    r.sinr_db,
                    r.class,
                    self.cfg.mmwave_bandwidth_hz,
                    self.cfg.spectral_efficiency_factor,
                    self.cfg.spectral_efficiency_max,
                )
            }
            LegTarget::Mn => link_rate_bps(
                self.mn_sinr,
                LinkClass::Los,
                self.cfg.lte_bandwidth_hz,
                self.cfg.spectral_efficiency_factor,
                self.cfg.spectral_efficiency_max,
            ),
        }
    }

    fn leg_sinrs_json(&self) -> String {
        let (s, i) = self.controller.as_ref().map(|c| c.legs()).unwrap_or((None, None));
        let fmt = |sn: Option<SnId>| {
            sn.and_then(|id| self.last_reports.get(id.0 as usize))
                .map(|r| r.sinr_db.to_string())
                .unwrap_or_else(|| "null".into())
        };
        format!("\"serving_sinr\":{},\"idle_sinr\":{}", fmt(s), fmt(i))
    }

    fn trace_line(&mut self, t: f64, kind: &str, payload: String) {
        if let Some(tr) = &mut self.trace {
            if payload.is_empty() {
                let _ = writeln!(tr, "{{\"t\":{t},\"ev\":\"{kind}\"}}");
            } else {
                let _ = writeln!(tr, "{{\"t\":{t},\"ev\":\"{kind}\",{payload}}}");
            }
        }
    }

    fn trace_control(&mut self, t: f64, action: &str, payload: &str) {
        let mode = self.controller.as_ref().map(|c| c.mode_label()).unwrap_or("INIT");
        let payload = if payload.is_empty() {
            format!("\"action\":\"{action}\",\"mode\":\"{mode}\"")
        } else {
            format!("\"action\":\"{action}\",\"mode\":\"{mode}\",{payload}")
        };
        self.trace_line(t, "CONTROL", payload);
    }

    fn finalize(mut self) -> RunOutput {
        let t_end = self.cfg.duration_s;

        let mut residual = self.stage.backlog_bytes();
        for b in self.buffers.iter().chain(std::iter::once(&self.mn_buffer)) {
            for p in b.iter() {
                if !p.duplicate {
                    residual += u64::from(p.bytes);
                }
            }
        }
        for t in self.x2_transfers.iter().flatten() {
            for p in &t.pdus {
                if !p.duplicate {
                    residual += u64::from(p.bytes);
                }
            }
        }
        let dropped: u64 =
            self.dropped_primaries.values().map(|&b| u64::from(b)).sum::<u64>() + self.dropped_staged_bytes;

        let dup_enqueued: u64 = self.buffers.iter().map(|b| b.dup_bytes_enqueued).sum();
        let dup_dropped: u64 = self.buffers.iter().map(|b| b.dup_bytes_dropped).sum();

        let bytes = ByteAccounting {
            generated: self.bytes_generated,
            delivered: self.bytes_delivered,
            residual,
            dropped,
            dup_enqueued,
            dup_dropped,
            dup_purged: self.dup_purged_bytes,
        };

        let metrics = RunMetrics {
            scheme: self.cfg.scheme,
            seed: self.cfg.seed,
            density_per_km2: self.cfg.blockage_density_per_km2,
            file_size_bytes: self.cfg.file_size_bytes,
            sim_duration_s: t_end,
            handover_trials: self.handover_trials,
            path_switches: self.path_switches,
            fallback_events: self.fallback_events,
            files: std::mem::take(&mut self.files),
            bytes,
            pdcp_app_deliveries: self.pdcp.app_deliveries,
            pdcp_delivered_unique: self.pdcp.delivered().len(),
            pdcp_suppressed_duplicates: self.pdcp.suppressed_duplicates,
            count_inflight_as_failed: self.cfg.count_inflight_as_failed,
        };

        if let Some(tr) = &mut self.trace {
            let _ = writeln!(tr, "{{\"t\":{t_end},\"ev\":\"SUMMARY\",\"row\":\"{}\"}}", metrics.summary_row());
        }

        RunOutput { metrics, trace: self.trace }
    }
}

fn leg_label(leg: LegTarget) -> String {
    match leg {
        LegTarget::Sn(id) => id.0.to_string(),
        LegTarget::Mn => "\"MN\"".into(),
    }
}

fn two_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}
