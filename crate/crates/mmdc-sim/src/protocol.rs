//! Mobility management: the dual-connection secondary-cell handover
//! controller (threshold cases, TTT, packet duplication, X2 buffer
//! forwarding, MN fallback) and the single-connection TTT baseline.
//!
//! Controllers are synchronous state machines. They never touch the event
//! queue or the data plane directly: each callback returns a [`Decision`]
//! (a control action plus a TTT timer request) that the run loop executes.
//! The run loop stays scheme-agnostic behind the [`Controller`] trait.

use crate::channel::{LinkClass, LinkReport};
use crate::network::SnId;

/// Which of the two mmWave legs a handover replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    Serving,
    Idle,
}

/// Where data is routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegTarget {
    Sn(SnId),
    Mn,
}

/// Decision emitted by a mobility controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlAction {
    None,
    /// Move the data path to the other connected SN (not a handover).
    SwitchPath { to: SnId, forward_buffer: bool },
    /// Replace one leg's SN with `target`; the target becomes the serving
    /// leg on completion.
    StartHandover { replace: Leg, target: SnId, duplicate: bool, forward_buffer: bool },
    /// Both legs dead and nothing connectable: serve via the MN.
    FallbackToMn,
    /// (Re-)attach SN legs after fallback or a one-legged interval;
    /// counted as a handover trial.
    Recover { serving: SnId, idle: Option<SnId> },
}

/// TTT timer request accompanying a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerOp {
    Keep,
    Start,
    Cancel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub action: ControlAction,
    pub timer: TimerOp,
}

impl Decision {
    pub const fn none() -> Self {
        Self { action: ControlAction::None, timer: TimerOp::Keep }
    }

    fn act(action: ControlAction) -> Self {
        Self { action, timer: TimerOp::Keep }
    }
}

/// Outcome of a handover completion check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoResolution {
    /// Target connectable: install it as the serving leg.
    Install { serving: SnId, idle: Option<SnId> },
    /// Target died during execution; immediately try the next candidate
    /// (a fresh handover trial). Bytes parked at the failed target follow.
    Retry { target: SnId, forward_from: SnId },
    /// Target died, no candidate, but the retained leg still works.
    AbortOneLeg { serving: SnId, failed_target: SnId },
    /// Nothing connectable at all: fall back to the MN.
    AbortToFallback { failed_target: SnId, retained: Option<SnId> },
}

/// Data routing implied by the current controller state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Routing {
    /// Where primary copies of new data are enqueued.
    pub primary: LegTarget,
    /// Where duplicate copies go while packet duplication is active.
    pub duplicate: Option<LegTarget>,
    /// Legs currently transmitting to the UE.
    pub transmitting: Vec<LegTarget>,
    pub pd_active: bool,
}

/// A reporting-instant snapshot handed to the controllers: one report per
/// SN (indexed by id) plus the carrier channel map.
pub struct Observation<'a> {
    pub reports: &'a [LinkReport],
    pub channels: &'a [u8],
    pub mn_sinr_db: f64,
}

impl<'a> Observation<'a> {
    pub fn report(&self, sn: SnId) -> &LinkReport {
        &self.reports[sn.0 as usize]
    }

    pub fn channel(&self, sn: SnId) -> u8 {
        self.channels[sn.0 as usize]
    }

    /// Best connectable SN on `channel`, excluding `exclude`; ties resolve
    /// to the lower id.
    pub fn best_candidate_on(&self, channel: u8, exclude: &[SnId]) -> Option<(SnId, f64)> {
        self.best_by(|r| self.channels[r.sn as usize] == channel, exclude)
    }

    /// Best connectable SN on any channel, excluding `exclude`.
    pub fn best_connectable(&self, exclude: &[SnId]) -> Option<(SnId, f64)> {
        self.best_by(|_| true, exclude)
    }

    fn best_by(&self, pred: impl Fn(&LinkReport) -> bool, exclude: &[SnId]) -> Option<(SnId, f64)> {
        let mut best: Option<(SnId, f64)> = None;
        for r in self.reports {
            let id = SnId(r.sn);
            if !r.connectable() || exclude.contains(&id) || !pred(r) {
                continue;
            }
            if best.map_or(true, |(_, s)| r.sinr_db > s) {
                best = Some((id, r.sinr_db));
            }
        }
        best
    }
}

/// Inputs to the pure handover/path-switch decision.
#[derive(Debug, Clone, Copy)]
pub struct DcDecideInputs {
    /// Id of the idle leg (named in switch decisions).
    pub idle_sn: SnId,
    pub serving_sinr_db: f64,
    pub idle_sinr_db: f64,
    /// Best connectable candidate on the serving leg's channel.
    pub serving_target: Option<(SnId, f64)>,
    /// Best connectable candidate on the idle leg's channel.
    pub idle_target: Option<(SnId, f64)>,
    pub sinr_threshold_db: f64,
    /// Extra margin required for an idle-over-serving switch when both legs
    /// are above threshold (0 recovers the literal comparison).
    pub hysteresis_db: f64,
    /// True only when the both-below-threshold condition has persisted for
    /// a full TTT interval.
    pub ttt_satisfied: bool,
    pub forward_on_path_switch: bool,
}

/// The handover decision, straight from the three threshold cases.
///
/// With both legs at or below threshold and TTT satisfied, the leg whose
/// channel offers the better target is handed over (ties go to the idle
/// leg's target); the target always becomes the new serving leg and always
/// receives the forwarded buffer. A serving-only degradation switches the
/// path to the idle leg with buffer forwarding. With both legs above
/// threshold the path moves to the idle leg when it beats serving by the
/// hysteresis margin.
pub fn dc_decide(input: &DcDecideInputs) -> ControlAction {
    let th = input.sinr_threshold_db;
    let s = input.serving_sinr_db;
    let i = input.idle_sinr_db;

    if s <= th && i <= th {
        if !input.ttt_satisfied {
            return ControlAction::None;
        }
        return match (input.serving_target, input.idle_target) {
            (None, None) => ControlAction::None,
            (Some((t, _)), None) => ControlAction::StartHandover {
                replace: Leg::Serving,
                target: t,
                duplicate: true,
                forward_buffer: true,
            },
            (None, Some((t, _))) => ControlAction::StartHandover {
                replace: Leg::Idle,
                target: t,
                duplicate: true,
                forward_buffer: true,
            },
            (Some((st, ss)), Some((it, is_))) => {
                if ss <= is_ {
                    ControlAction::StartHandover {
                        replace: Leg::Idle,
                        target: it,
                        duplicate: true,
                        forward_buffer: true,
                    }
                } else {
                    ControlAction::StartHandover {
                        replace: Leg::Serving,
                        target: st,
                        duplicate: true,
                        forward_buffer: true,
                    }
                }
            }
        };
    }

    if s <= th && i > th {
        return ControlAction::SwitchPath { to: input.idle_sn, forward_buffer: true };
    }

    if s > th && i > th && i > s + input.hysteresis_db {
        return ControlAction::SwitchPath {
            to: input.idle_sn,
            forward_buffer: input.forward_on_path_switch,
        };
    }

    ControlAction::None
}

/// Scheme-agnostic controller interface driven by the run loop.
pub trait Controller {
    /// Called at every reporting instant.
    fn on_reports(&mut self, obs: &Observation<'_>) -> Decision;
    /// Called when the TTT timer fires (reports are the latest stored set).
    fn on_ttt_expiry(&mut self, obs: &Observation<'_>) -> Decision;
    /// Called when a pending handover completes.
    fn on_ho_complete(&mut self, obs: &Observation<'_>) -> HoResolution;
    /// Current data routing.
    fn routing(&self) -> Routing;
    /// (serving, idle) SN ids, when attached.
    fn legs(&self) -> (Option<SnId>, Option<SnId>);
    fn mode_label(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DualMode {
    Dual,
    HoInProgress,
    MnFallback,
}

#[derive(Debug, Clone, Copy)]
struct PendingHo {
    retained: SnId,
    target: SnId,
    /// Channel of the leg being replaced (retries stay on it).
    replaced_channel: u8,
}

/// Controller parameters shared by both schemes.
#[derive(Debug, Clone, Copy)]
pub struct ControllerParams {
    pub sinr_threshold_db: f64,
    pub hysteresis_db: f64,
    pub forward_on_path_switch: bool,
}

/// The dual-connection scheme: two SN legs, path switching, PD handovers,
/// MN fallback.
pub struct DualController {
    params: ControllerParams,
    mode: DualMode,
    serving: SnId,
    idle: Option<SnId>,
    ttt_armed: bool,
    pending: Option<PendingHo>,
}

impl DualController {
    pub fn new(params: ControllerParams, serving: SnId, idle: SnId) -> Self {
        assert_ne!(serving, idle, "dual legs must differ");
        Self { params, mode: DualMode::Dual, serving, idle: Some(idle), ttt_armed: false, pending: None }
    }

    fn timer_op(&mut self, condition: bool) -> TimerOp {
        if condition && !self.ttt_armed {
            self.ttt_armed = true;
            TimerOp::Start
        } else if !condition && self.ttt_armed {
            self.ttt_armed = false;
            TimerOp::Cancel
        } else {
            TimerOp::Keep
        }
    }

    fn legs_vec(&self) -> Vec<SnId> {
        let mut v = vec![self.serving];
        if let Some(i) = self.idle {
            v.push(i);
        }
        v
    }
}

impl Controller for DualController {
    fn on_reports(&mut self, obs: &Observation<'_>) -> Decision {
        match self.mode {
            DualMode::HoInProgress => Decision::none(),
            DualMode::MnFallback => {
                let Some((serving, _)) = obs.best_connectable(&[]) else {
                    return Decision::none();
                };
                let other_ch = 1 - obs.channel(serving);
                let idle = obs.best_candidate_on(other_ch, &[serving]).map(|(id, _)| id);
                self.mode = DualMode::Dual;
                self.serving = serving;
                self.idle = idle;
                Decision::act(ControlAction::Recover { serving, idle })
            }
            DualMode::Dual => {
                let Some(idle) = self.idle else {
                    // One leg after an abort: first refill the idle leg on
                    // the other carrier, else check for fallback.
                    let other_ch = 1 - obs.channel(self.serving);
                    if let Some((cand, _)) = obs.best_candidate_on(other_ch, &[self.serving]) {
                        self.idle = Some(cand);
                        return Decision::act(ControlAction::Recover {
                            serving: self.serving,
                            idle: Some(cand),
                        });
                    }
                    let serving_dead = obs.report(self.serving).class == LinkClass::Outage;
                    if serving_dead && obs.best_connectable(&[self.serving]).is_none() {
                        self.mode = DualMode::MnFallback;
                        let timer = self.timer_op(false);
                        return Decision { action: ControlAction::FallbackToMn, timer };
                    }
                    return Decision::none();
                };

                let s_rep = *obs.report(self.serving);
                let i_rep = *obs.report(idle);

                // Both legs in outage with no candidate anywhere: fall back.
                if s_rep.class == LinkClass::Outage
                    && i_rep.class == LinkClass::Outage
                    && obs.best_connectable(&self.legs_vec()).is_none()
                {
                    self.mode = DualMode::MnFallback;
                    let timer = self.timer_op(false);
                    return Decision { action: ControlAction::FallbackToMn, timer };
                }

                let th = self.params.sinr_threshold_db;
                let condition = s_rep.sinr_db <= th && i_rep.sinr_db <= th;
                let timer = self.timer_op(condition);

                let action = dc_decide(&DcDecideInputs {
                    idle_sn: idle,
                    serving_sinr_db: s_rep.sinr_db,
                    idle_sinr_db: i_rep.sinr_db,
                    serving_target: None,
                    idle_target: None,
                    sinr_threshold_db: th,
                    hysteresis_db: self.params.hysteresis_db,
                    ttt_satisfied: false,
                    forward_on_path_switch: self.params.forward_on_path_switch,
                });

                if let ControlAction::SwitchPath { to, .. } = action {
                    // Swap roles; data path moves to the old idle leg.
                    self.idle = Some(self.serving);
                    self.serving = to;
                }
                Decision { action, timer }
            }
        }
    }

    fn on_ttt_expiry(&mut self, obs: &Observation<'_>) -> Decision {
        self.ttt_armed = false;
        if self.mode != DualMode::Dual {
            return Decision::none();
        }
        let Some(idle) = self.idle else {
            return Decision::none();
        };
        let s_rep = obs.report(self.serving);
        let i_rep = obs.report(idle);
        let th = self.params.sinr_threshold_db;
        if !(s_rep.sinr_db <= th && i_rep.sinr_db <= th) {
            return Decision::none();
        }

        let legs = self.legs_vec();
        let serving_target = obs.best_candidate_on(obs.channel(self.serving), &legs);
        let idle_target = obs.best_candidate_on(obs.channel(idle), &legs);

        let action = dc_decide(&DcDecideInputs {
            idle_sn: idle,
            serving_sinr_db: s_rep.sinr_db,
            idle_sinr_db: i_rep.sinr_db,
            serving_target,
            idle_target,
            sinr_threshold_db: th,
            hysteresis_db: self.params.hysteresis_db,
            ttt_satisfied: true,
            forward_on_path_switch: self.params.forward_on_path_switch,
        });

        if let ControlAction::StartHandover { replace, target, .. } = action {
            let (replaced, retained) = match replace {
                Leg::Serving => (self.serving, idle),
                Leg::Idle => (idle, self.serving),
            };
            self.pending = Some(PendingHo {
                retained,
                target,
                replaced_channel: obs.channel(replaced),
            });
            self.mode = DualMode::HoInProgress;
        }
        Decision::act(action)
    }

    fn on_ho_complete(&mut self, obs: &Observation<'_>) -> HoResolution {
        let ho = self.pending.take().expect("completion without a pending handover");
        if obs.report(ho.target).connectable() {
            self.mode = DualMode::Dual;
            self.serving = ho.target;
            self.idle = Some(ho.retained);
            return HoResolution::Install { serving: ho.target, idle: Some(ho.retained) };
        }

        // Target died during execution. Stay on the replaced leg's channel
        // so the carrier split survives retries.
        if let Some((next, _)) = obs.best_candidate_on(ho.replaced_channel, &[ho.retained, ho.target]) {
            self.pending = Some(PendingHo { retained: ho.retained, target: next, replaced_channel: ho.replaced_channel });
            return HoResolution::Retry { target: next, forward_from: ho.target };
        }
        if obs.report(ho.retained).connectable() {
            self.mode = DualMode::Dual;
            self.serving = ho.retained;
            self.idle = None;
            return HoResolution::AbortOneLeg { serving: ho.retained, failed_target: ho.target };
        }
        self.mode = DualMode::MnFallback;
        self.serving = ho.retained; // remembered for diagnostics only
        self.idle = None;
        HoResolution::AbortToFallback { failed_target: ho.target, retained: Some(ho.retained) }
    }

    fn routing(&self) -> Routing {
        match self.mode {
            DualMode::Dual => Routing {
                primary: LegTarget::Sn(self.serving),
                duplicate: None,
                transmitting: vec![LegTarget::Sn(self.serving)],
                pd_active: false,
            },
            DualMode::HoInProgress => {
                let ho = self.pending.as_ref().expect("in-progress handover has a pending record");
                Routing {
                    primary: LegTarget::Sn(ho.target),
                    duplicate: Some(LegTarget::Sn(ho.retained)),
                    transmitting: vec![LegTarget::Sn(ho.retained)],
                    pd_active: true,
                }
            }
            DualMode::MnFallback => Routing {
                primary: LegTarget::Mn,
                duplicate: None,
                transmitting: vec![LegTarget::Mn],
                pd_active: false,
            },
        }
    }

    fn legs(&self) -> (Option<SnId>, Option<SnId>) {
        match self.mode {
            DualMode::MnFallback => (None, None),
            _ => (Some(self.serving), self.idle),
        }
    }

    fn mode_label(&self) -> &'static str {
        match self.mode {
            DualMode::Dual => "DUAL",
            DualMode::HoInProgress => "HO_IN_PROGRESS",
            DualMode::MnFallback => "MN_FALLBACK",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SingleMode {
    Connected,
    HoInProgress,
    MnFallback,
}

/// The single-connection baseline: one SN leg, handover to any neighbor
/// that beats the serving SINR for a full TTT.
pub struct BaselineController {
    mode: SingleMode,
    serving: Option<SnId>,
    ttt_armed: bool,
    pending_target: Option<SnId>,
}

impl BaselineController {
    pub fn new(serving: SnId) -> Self {
        Self { mode: SingleMode::Connected, serving: Some(serving), ttt_armed: false, pending_target: None }
    }

    fn timer_op(&mut self, condition: bool) -> TimerOp {
        if condition && !self.ttt_armed {
            self.ttt_armed = true;
            TimerOp::Start
        } else if !condition && self.ttt_armed {
            self.ttt_armed = false;
            TimerOp::Cancel
        } else {
            TimerOp::Keep
        }
    }
}

impl Controller for BaselineController {
    fn on_reports(&mut self, obs: &Observation<'_>) -> Decision {
        match self.mode {
            SingleMode::HoInProgress => Decision::none(),
            SingleMode::MnFallback => {
                let Some((serving, _)) = obs.best_connectable(&[]) else {
                    return Decision::none();
                };
                self.mode = SingleMode::Connected;
                self.serving = Some(serving);
                Decision::act(ControlAction::Recover { serving, idle: None })
            }
            SingleMode::Connected => {
                let serving = self.serving.expect("connected baseline has a serving SN");
                let s_rep = obs.report(serving);
                let best = obs.best_connectable(&[serving]);

                if s_rep.class == LinkClass::Outage && best.is_none() {
                    self.mode = SingleMode::MnFallback;
                    self.serving = None;
                    let timer = self.timer_op(false);
                    return Decision { action: ControlAction::FallbackToMn, timer };
                }

                let condition = best.map_or(false, |(_, sinr)| sinr > s_rep.sinr_db);
                let timer = self.timer_op(condition);
                Decision { action: ControlAction::None, timer }
            }
        }
    }

    fn on_ttt_expiry(&mut self, obs: &Observation<'_>) -> Decision {
        self.ttt_armed = false;
        if self.mode != SingleMode::Connected {
            return Decision::none();
        }
        let serving = self.serving.expect("connected baseline has a serving SN");
        let s_rep = obs.report(serving);
        let Some((target, sinr)) = obs.best_connectable(&[serving]) else {
            return Decision::none();
        };
        if sinr <= s_rep.sinr_db {
            return Decision::none();
        }
        self.mode = SingleMode::HoInProgress;
        self.pending_target = Some(target);
        Decision::act(ControlAction::StartHandover {
            replace: Leg::Serving,
            target,
            duplicate: false,
            forward_buffer: true,
        })
    }

    fn on_ho_complete(&mut self, obs: &Observation<'_>) -> HoResolution {
        let target = self.pending_target.take().expect("completion without a pending handover");
        if obs.report(target).connectable() {
            self.mode = SingleMode::Connected;
            self.serving = Some(target);
            return HoResolution::Install { serving: target, idle: None };
        }
        if let Some((next, _)) = obs.best_connectable(&[target]) {
            self.pending_target = Some(next);
            return HoResolution::Retry { target: next, forward_from: target };
        }
        self.mode = SingleMode::MnFallback;
        self.serving = None;
        HoResolution::AbortToFallback { failed_target: target, retained: None }
    }

    fn routing(&self) -> Routing {
        match self.mode {
            SingleMode::Connected => {
                let s = LegTarget::Sn(self.serving.expect("connected baseline has a serving SN"));
                Routing { primary: s, duplicate: None, transmitting: vec![s], pd_active: false }
            }
            SingleMode::HoInProgress => {
                // Break-before-make: new data stages at the target, nothing
                // transmits until completion.
                let t = LegTarget::Sn(self.pending_target.expect("in-progress handover has a target"));
                Routing { primary: t, duplicate: None, transmitting: vec![], pd_active: false }
            }
            SingleMode::MnFallback => Routing {
                primary: LegTarget::Mn,
                duplicate: None,
                transmitting: vec![LegTarget::Mn],
                pd_active: false,
            },
        }
    }

    fn legs(&self) -> (Option<SnId>, Option<SnId>) {
        match self.mode {
            SingleMode::HoInProgress => (self.serving, None),
            _ => (self.serving, None),
        }
    }

    fn mode_label(&self) -> &'static str {
        match self.mode {
            SingleMode::Connected => "SINGLE",
            SingleMode::HoInProgress => "HO_IN_PROGRESS",
            SingleMode::MnFallback => "MN_FALLBACK",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(s: f64, i: f64) -> DcDecideInputs {
        DcDecideInputs {
            idle_sn: SnId(1),
            serving_sinr_db: s,
            idle_sinr_db: i,
            serving_target: None,
            idle_target: None,
            sinr_threshold_db: 20.0,
            hysteresis_db: 0.0,
            ttt_satisfied: false,
            forward_on_path_switch: true,
        }
    }

    #[test]
    fn both_above_switches_to_better_idle() {
        let a = dc_decide(&inputs(25.0, 30.0));
        assert!(matches!(a, ControlAction::SwitchPath { .. }));
        // Not when serving already leads.
        let b = dc_decide(&inputs(30.0, 25.0));
        assert_eq!(b, ControlAction::None);
    }

    #[test]
    fn hysteresis_blocks_marginal_switch() {
        let mut inp = inputs(25.0, 27.0);
        inp.hysteresis_db = 3.0;
        assert_eq!(dc_decide(&inp), ControlAction::None);
        inp.idle_sinr_db = 28.5;
        assert!(matches!(dc_decide(&inp), ControlAction::SwitchPath { .. }));
    }

    #[test]
    fn serving_below_idle_above_switches_with_forwarding() {
        let a = dc_decide(&inputs(15.0, 25.0));
        assert!(matches!(a, ControlAction::SwitchPath { forward_buffer: true, .. }));
    }

    #[test]
    fn both_below_without_ttt_waits() {
        let mut inp = inputs(10.0, 12.0);
        inp.serving_target = Some((SnId(3), 18.0));
        inp.idle_target = Some((SnId(4), 22.0));
        assert_eq!(dc_decide(&inp), ControlAction::None);
    }

    #[test]
    fn both_below_with_ttt_picks_better_target() {
        let mut inp = inputs(10.0, 12.0);
        inp.ttt_satisfied = true;
        inp.serving_target = Some((SnId(3), 18.0));
        inp.idle_target = Some((SnId(4), 22.0));
        let a = dc_decide(&inp);
        assert_eq!(
            a,
            ControlAction::StartHandover {
                replace: Leg::Idle,
                target: SnId(4),
                duplicate: true,
                forward_buffer: true
            }
        );

        inp.serving_target = Some((SnId(3), 22.0));
        inp.idle_target = Some((SnId(4), 18.0));
        let b = dc_decide(&inp);
        assert_eq!(
            b,
            ControlAction::StartHandover {
                replace: Leg::Serving,
                target: SnId(3),
                duplicate: true,
                forward_buffer: true
            }
        );
    }

    #[test]
    fn target_tie_routes_to_idle_leg() {
        let mut inp = inputs(10.0, 12.0);
        inp.ttt_satisfied = true;
        inp.serving_target = Some((SnId(3), 21.0));
        inp.idle_target = Some((SnId(4), 21.0));
        assert!(matches!(
            dc_decide(&inp),
            ControlAction::StartHandover { replace: Leg::Idle, target: SnId(4), .. }
        ));
    }

    #[test]
    fn serving_above_idle_below_is_no_case() {
        let mut inp = inputs(25.0, 10.0);
        inp.ttt_satisfied = true;
        assert_eq!(dc_decide(&inp), ControlAction::None);
    }

    #[test]
    fn no_candidates_means_no_handover() {
        let mut inp = inputs(10.0, 12.0);
        inp.ttt_satisfied = true;
        assert_eq!(dc_decide(&inp), ControlAction::None);
    }
}
