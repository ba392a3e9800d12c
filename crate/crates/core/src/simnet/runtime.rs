//! The simulation runtime: drives the service, terminals, one wearable
//! device, and an adversary through a scenario timeline on a shared
//! millisecond event queue. Every random draw comes from one of three
//! stream-split generators (network, optics, adversary), so a run is a
//! pure function of (scenario, seed) and its trace is byte-stable.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::challenge::{ChallengePayload, Nonce, Sid, Tid, Timestamp};
use crate::continuous::{EndReason, Phase, ReauthEffect, ReauthPolicy, SessionState};
use crate::optics::{
    scan_attempt, AccuracyTable, BucketPolicy, CodeDensity, ScanGeometry, ScanResult,
};
use crate::otp::{HotpCounter, OtpKey};
use crate::protocol::wire::{decode_auth_request, encode_auth_request, AckStatus, Uid};
use crate::protocol::{
    AuthRequest, Credential, DeviceAgent, ScanDecision, Screen, Service, ServiceConfig,
    ServiceFingerprint, Terminal, TerminalDirective, TerminalRegistration, ThrottleConfig, UiMode,
    VerifyOutcome,
};
use crate::scenario::{Action, ReplayKind, ScenarioConfig, ScenarioError, TerminalSpec, UiKind};
use crate::simnet::events::{EventQueue, SimMs};
use crate::simnet::latency::LatencyModel;
use crate::simnet::metrics::{AuthRecord, ExposureEvent, RunMetrics};
use crate::simnet::trace::Trace;

/// Wall-clock seconds at simulation tick zero. Fixed so that runs are
/// reproducible and TOTP windows land identically every time.
pub const SIM_EPOCH_SECS: u64 = 1_700_000_000;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("scenario setup: {0}")]
    Setup(String),
}

fn setup_err(msg: impl Into<String>) -> RunError {
    RunError::Setup(msg.into())
}

/// Everything one run produced. The trace and the metrics are built
/// independently enough that [`RunReport::reconciles`] is a real check.
#[derive(Debug)]
pub struct RunReport {
    pub scenario_name: String,
    pub seed: u64,
    pub duration_ms: SimMs,
    pub trace: Trace,
    pub metrics: RunMetrics,
}

impl RunReport {
    /// Recounts attempts and accepts from the trace text and compares
    /// them with the tallies the metrics kept. A disagreement means an
    /// event was recorded on one side only.
    pub fn reconciles(&self) -> bool {
        let mut auth_lines = 0u64;
        let mut auth_accepts = 0u64;
        let mut adversary_count = 0u64;
        let mut adversary_accepted = 0u64;
        for line in self.trace.lines() {
            let text = line.text.as_str();
            if text.starts_with("auth ") {
                auth_lines += 1;
                if text.contains(" outcome=accept ") {
                    auth_accepts += 1;
                }
            } else if text.starts_with("adversary replay") || text.starts_with("adversary guess") {
                adversary_count += parse_field(text, "count=");
                adversary_accepted += parse_field(text, "accepted=");
            }
        }
        auth_lines == self.metrics.auths.len() as u64
            && adversary_count == self.metrics.adversary_presentations
            && auth_accepts + adversary_accepted == self.metrics.accepts()
    }
}

/// Reads the decimal run after `key` in a trace line; 0 when absent.
fn parse_field(text: &str, key: &str) -> u64 {
    let Some(pos) = text.find(key) else { return 0 };
    text[pos + key.len()..]
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect::<String>()
        .parse()
        .unwrap_or(0)
}

/// Runs a scenario with nearest-bucket optics.
pub fn run(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    run_with_options(cfg, false)
}

/// Runs a scenario. With `strict_optics` the device geometry must sit
/// exactly on a calibrated cell or setup fails.
pub fn run_with_options(cfg: &ScenarioConfig, strict_optics: bool) -> Result<RunReport, RunError> {
    cfg.validate()?;
    let mut sim = Simulation::build(cfg, strict_optics)?;
    sim.run_loop();
    Ok(sim.finish())
}

/// One request in flight toward the service.
struct ArriveCtx {
    request: AuthRequest,
    origin: String,
    /// login | reauth | unlock
    kind: &'static str,
    started_ms: SimMs,
    latency_ms: u64,
}

enum Ev {
    Action(usize),
    LoginScan {
        tid: Tid,
        attempt: u32,
        started_ms: SimMs,
    },
    LoginRefresh {
        tid: Tid,
        gen: u64,
    },
    ReauthDeadline {
        tid: Tid,
    },
    ReauthRetry {
        tid: Tid,
        seq: u64,
        attempt: u32,
        deadline_ms: SimMs,
    },
    LockFire {
        tid: Tid,
        seq: u64,
    },
    GraceFire {
        tid: Tid,
        locked_at_ms: SimMs,
    },
    LockedScan {
        tid: Tid,
        attempt: u32,
        started_ms: SimMs,
    },
    Arrive(Box<ArriveCtx>),
    BatteryTick,
}

struct TermState {
    party: Terminal,
    refresh_ms: SimMs,
    refresh_gen: u64,
}

struct DeviceState {
    id: String,
    uid: Uid,
    agent: DeviceAgent,
    /// Terminal the wearer last approached; kept across walk-aways so
    /// `return` knows where to go back to.
    location: Option<Tid>,
    present: bool,
    battery: crate::simnet::battery::BatteryModel,
    geometry: ScanGeometry,
    retries: u32,
    requests_sent: u64,
    /// Last request line put on the wire; what a snooping adversary
    /// captures.
    last_request: Option<String>,
}

#[derive(Default)]
struct AdversaryState {
    payload: Option<ChallengePayload>,
    request_line: Option<String>,
}

struct Simulation {
    name: String,
    seed: u64,
    duration_ms: SimMs,
    voice_ms: u64,
    capture_ms: u64,
    decode_ms: u64,
    otp_ms: u64,
    latency: LatencyModel,
    optics: AccuracyTable,
    bucket_policy: BucketPolicy,
    timeline: Vec<crate::scenario::TimelineEntry>,
    svc: Service,
    terms: BTreeMap<String, TermState>,
    device: Option<DeviceState>,
    adversary: AdversaryState,
    queue: EventQueue<Ev>,
    rng_latency: ChaCha8Rng,
    rng_optics: ChaCha8Rng,
    rng_adversary: ChaCha8Rng,
    trace: Trace,
    metrics: RunMetrics,
}

impl Simulation {
    fn build(cfg: &ScenarioConfig, strict_optics: bool) -> Result<Self, RunError> {
        let sid = Sid::new(&cfg.service.sid).map_err(|e| setup_err(format!("service sid: {e}")))?;
        let fingerprint = ServiceFingerprint::new(&cfg.service.fingerprint);

        let mut service_config = ServiceConfig::new(sid.clone(), fingerprint.clone());
        service_config.epoch_secs = SIM_EPOCH_SECS;
        service_config.pending_nonce_expiry_secs = cfg.service.nonce_expiry_secs;
        service_config.throttle = cfg.service.throttle.then(ThrottleConfig::default);
        service_config.nonce_seed = cfg.seed;
        let mut svc = Service::new(service_config);

        let mut terms = BTreeMap::new();
        for spec in &cfg.terminals {
            let (registration, party) = Self::build_terminal(spec, &sid)?;
            svc.register_terminal(registration)
                .map_err(|e| setup_err(format!("terminal {}: {e}", spec.tid)))?;
            terms.insert(
                spec.tid.clone(),
                TermState {
                    party,
                    refresh_ms: (spec.refresh_secs * 1000.0).round() as SimMs,
                    refresh_gen: 0,
                },
            );
        }

        let device = match &cfg.device {
            Some(spec) => {
                let uid = Uid::new(&spec.uid).map_err(|e| setup_err(format!("device uid: {e}")))?;
                let k_u = OtpKey::from_base32(&spec.key_b32)
                    .map_err(|e| setup_err(format!("device key: {e}")))?;
                svc.register_user(uid.clone(), k_u.clone())
                    .map_err(|e| setup_err(format!("device uid: {e}")))?;
                let geometry =
                    ScanGeometry::new(spec.distance_cm, spec.angle_deg, spec.code_size_cm)
                        .map_err(|e| setup_err(format!("device geometry: {e}")))?;
                let mut agent = DeviceAgent::new();
                agent
                    .associate(Credential {
                        service_fingerprint: fingerprint.clone(),
                        sid: sid.clone(),
                        service_uri: format!("{}.auth.svc:7100", cfg.service.sid),
                        uid: uid.clone(),
                        k_u,
                    })
                    .map_err(|e| setup_err(format!("device credential: {e}")))?;
                Some(DeviceState {
                    id: spec.id.clone(),
                    uid,
                    agent,
                    location: None,
                    present: false,
                    battery: crate::simnet::battery::BatteryModel::new(spec.battery),
                    geometry,
                    retries: spec.retries,
                    requests_sent: 0,
                    last_request: None,
                })
            }
            None => None,
        };

        let mut sim = Self {
            name: cfg.name.clone(),
            seed: cfg.seed,
            duration_ms: cfg.duration_ms,
            voice_ms: cfg.models.voice_activation_ms,
            capture_ms: cfg.models.capture_autofocus_ms,
            decode_ms: cfg.models.qr_decode_ms,
            otp_ms: cfg.models.otp_generation_ms,
            latency: cfg.models.latency.clone(),
            optics: cfg.models.optics.clone(),
            bucket_policy: if strict_optics {
                BucketPolicy::Strict
            } else {
                BucketPolicy::Nearest
            },
            timeline: cfg.timeline.clone(),
            svc,
            terms,
            device,
            adversary: AdversaryState::default(),
            queue: EventQueue::new(),
            rng_latency: stream_rng(cfg.seed, 1),
            rng_optics: stream_rng(cfg.seed, 2),
            rng_adversary: stream_rng(cfg.seed, 3),
            trace: Trace::new(),
            metrics: RunMetrics::default(),
        };

        sim.trace.push(
            0,
            format!(
                "run {} seed={} duration_ms={}",
                sim.name, sim.seed, sim.duration_ms
            ),
        );

        // Every terminal boots showing a login challenge, then keeps it
        // fresh on its refresh period.
        let tids: Vec<String> = sim.terms.keys().cloned().collect();
        for tid_text in tids {
            let tid = Tid::new(&tid_text).map_err(|e| setup_err(format!("tid: {e}")))?;
            sim.display_challenge(&tid, 0, "login");
            let refresh = sim.terms[&tid_text].refresh_ms;
            if refresh > 0 {
                sim.queue
                    .schedule(refresh, Ev::LoginRefresh { tid, gen: 0 });
            }
        }

        // Strict optics is a setup-time contract: the wearer's geometry
        // must match a calibrated cell before anything runs.
        if strict_optics {
            if let Some(device) = &sim.device {
                for (tid_text, term) in &sim.terms {
                    if let Some(payload) = term.party.displayed() {
                        let bits = payload.content_bits() as u32;
                        sim.optics
                            .resolve(bits, &device.geometry, BucketPolicy::Strict)
                            .map_err(|e| setup_err(format!("strict optics at {tid_text}: {e}")))?;
                    }
                }
            }
        }

        for (idx, entry) in sim.timeline.iter().enumerate() {
            sim.queue.schedule(entry.at_ms, Ev::Action(idx));
        }
        if let Some(device) = &sim.device {
            sim.metrics
                .battery_trajectory
                .push((0, device.battery.level));
            sim.queue.schedule(60_000, Ev::BatteryTick);
        }
        Ok(sim)
    }

    fn build_terminal(
        spec: &TerminalSpec,
        sid: &Sid,
    ) -> Result<(TerminalRegistration, Terminal), RunError> {
        let tid = Tid::new(&spec.tid).map_err(|e| setup_err(format!("tid {}: {e}", spec.tid)))?;
        let policy = spec.continuous.map(|c| ReauthPolicy {
            t_reauth_ms: (c.t_reauth_secs * 1000.0).round() as u64,
            lock_timeout_ms: (c.lock_timeout_secs * 1000.0).round() as u64,
            locked_grace_periods: c.grace_periods,
        });
        let continuous = policy.is_some();
        match spec.ui {
            UiKind::ServiceDriven => Ok((
                TerminalRegistration {
                    tid: tid.clone(),
                    sid: sid.clone(),
                    ui_mode: UiMode::ServiceDriven,
                    k_n: None,
                    nonce_counter: HotpCounter::new(0),
                    reauth_policy: policy,
                },
                Terminal::service_driven(tid, sid.clone(), continuous),
            )),
            UiKind::TerminalDriven => {
                let key_text = spec
                    .nonce_key_b32
                    .as_ref()
                    .expect("validate() requires a nonce key");
                let k_n = OtpKey::from_base32(key_text)
                    .map_err(|e| setup_err(format!("terminal {} nonce key: {e}", spec.tid)))?;
                Ok((
                    TerminalRegistration {
                        tid: tid.clone(),
                        sid: sid.clone(),
                        ui_mode: UiMode::TerminalDriven,
                        k_n: Some(k_n.clone()),
                        nonce_counter: HotpCounter::new(0),
                        reauth_policy: policy,
                    },
                    Terminal::terminal_driven(tid, sid.clone(), continuous, k_n),
                ))
            }
        }
    }

    fn run_loop(&mut self) {
        while let Some((at, ev)) = self.queue.pop() {
            if at > self.duration_ms {
                break;
            }
            match ev {
                Ev::Action(idx) => self.handle_action(at, idx),
                Ev::LoginScan {
                    tid,
                    attempt,
                    started_ms,
                } => self.handle_login_scan(at, &tid, attempt, started_ms),
                Ev::LoginRefresh { tid, gen } => self.handle_login_refresh(at, &tid, gen),
                Ev::ReauthDeadline { tid } => self.handle_reauth_deadline(at, &tid),
                Ev::ReauthRetry {
                    tid,
                    seq,
                    attempt,
                    deadline_ms,
                } => self.handle_reauth_retry(at, &tid, seq, attempt, deadline_ms),
                Ev::LockFire { tid, seq } => self.handle_lock_fire(at, &tid, seq),
                Ev::GraceFire { tid, locked_at_ms } => {
                    self.handle_grace_fire(at, &tid, locked_at_ms)
                }
                Ev::LockedScan {
                    tid,
                    attempt,
                    started_ms,
                } => self.handle_locked_scan(at, &tid, attempt, started_ms),
                Ev::Arrive(ctx) => self.handle_arrive(at, *ctx),
                Ev::BatteryTick => self.handle_battery_tick(at),
            }
        }
    }

    fn finish(mut self) -> RunReport {
        // Sessions still live at the horizon surrender their exposure
        // records; sorted so the report order is stable.
        let mut live: Vec<(String, String, Vec<ExposureEvent>)> = self
            .svc
            .sessions()
            .map(|s| {
                let events = s
                    .exposure()
                    .iter()
                    .map(|e| ExposureEvent {
                        tid: s.tid.as_str().to_string(),
                        uid: s.uid.as_str().to_string(),
                        walk_away_ms: e.walk_away_ms,
                        detect_ms: e.detect_ms,
                    })
                    .collect();
                (
                    s.tid.as_str().to_string(),
                    s.uid.as_str().to_string(),
                    events,
                )
            })
            .collect();
        live.sort_by(|a, b| a.0.cmp(&b.0));
        for (_, _, events) in live {
            self.metrics.exposure.extend(events);
        }
        self.metrics.final_battery = self.device.as_ref().map_or(100.0, |d| d.battery.level);
        self.trace.push(self.duration_ms, "end-of-run");
        RunReport {
            scenario_name: self.name,
            seed: self.seed,
            duration_ms: self.duration_ms,
            trace: self.trace,
            metrics: self.metrics,
        }
    }

    fn wall(&self, now_ms: SimMs) -> u64 {
        SIM_EPOCH_SECS + now_ms / 1000
    }

    fn passes_budget(&self) -> u32 {
        1 + self.device.as_ref().map_or(0, |d| d.retries)
    }

    fn reauth_pipeline_ms(&self) -> u64 {
        self.capture_ms + self.decode_ms + self.otp_ms
    }

    /// Issues (service-driven) or mints (terminal-driven) a challenge
    /// and puts it on the terminal's screen.
    fn display_challenge(&mut self, tid: &Tid, now: SimMs, why: &str) -> ChallengePayload {
        let term = self.terms.get_mut(tid.as_str()).expect("terminal exists");
        let (who, payload) = match term.party.ui_mode() {
            UiMode::ServiceDriven => {
                let payload = self
                    .svc
                    .issue_challenge(tid, now)
                    .expect("registered service-driven terminal");
                term.party
                    .apply(TerminalDirective::Display(payload.clone()));
                ("service", payload)
            }
            UiMode::TerminalDriven => {
                let wall = SIM_EPOCH_SECS + now / 1000;
                ("terminal", term.party.mint_challenge(wall))
            }
        };
        self.trace.push(
            now,
            format!(
                "{} {} display nonce={} kind={}",
                who,
                tid.as_str(),
                payload.nonce.as_str(),
                why
            ),
        );
        payload
    }

    /// One camera pass against whatever the terminal shows. `None`
    /// when nothing is displayed.
    fn roll_optics(&mut self, tid: &Tid) -> Option<(ScanResult, ChallengePayload)> {
        let device = self.device.as_ref()?;
        let payload = self.terms.get(tid.as_str())?.party.displayed()?.clone();
        let density = CodeDensity::for_bits(payload.content_bits() as u32);
        let result = scan_attempt(
            &device.geometry,
            &density,
            &self.optics,
            &mut self.rng_optics,
            self.bucket_policy,
        )
        .expect("geometry validated at setup");
        Some((result, payload))
    }

    /// Encodes, ships, and schedules the arrival of one device request.
    /// `latency_base_ms` carries device-pipeline time that the event
    /// path skipped (the pre-armed re-auth path); `None` means the
    /// metric is simply arrival minus start.
    fn send_device_request(
        &mut self,
        request: &AuthRequest,
        kind: &'static str,
        t_send: SimMs,
        started_ms: SimMs,
        latency_base_ms: Option<u64>,
    ) {
        let line = encode_auth_request(request);
        let request = decode_auth_request(line.trim_end()).expect("wire codec round-trips");
        let device = self.device.as_mut().expect("only the device sends");
        device.last_request = Some(line);
        device.battery.spend_auth();
        device.requests_sent += 1;
        let origin = device.id.clone();
        let net = self.latency.sample(&mut self.rng_latency);
        let arrive = t_send + net;
        let latency_ms = match latency_base_ms {
            Some(base) => base + net,
            None => arrive - started_ms,
        };
        self.queue.schedule(
            arrive,
            Ev::Arrive(Box::new(ArriveCtx {
                request,
                origin,
                kind,
                started_ms,
                latency_ms,
            })),
        );
    }

    /// Runs a decoded payload through the device agent and ships the
    /// response when the agent answers. Returns false when the device
    /// stayed silent.
    fn scan_and_send(
        &mut self,
        payload: &ChallengePayload,
        kind: &'static str,
        now: SimMs,
        t_send: SimMs,
        started_ms: SimMs,
        latency_base_ms: Option<u64>,
    ) -> bool {
        let expected_fp;
        let request;
        {
            let device = self.device.as_mut().expect("scan implies a device");
            let wall = SIM_EPOCH_SECS + t_send / 1000;
            match device.agent.on_scan(payload, wall) {
                ScanDecision::NoMatch(reason) => {
                    let id = device.id.clone();
                    self.metrics.no_matches += 1;
                    self.trace
                        .push(now, format!("device {} no-match {:?}", id, reason));
                    return false;
                }
                ScanDecision::Respond {
                    request: r,
                    expected_fingerprint,
                    ..
                } => {
                    expected_fp = expected_fingerprint;
                    request = r;
                }
            }
        }
        // The device checks the channel's certificate fingerprint
        // before it answers anything.
        if &expected_fp != self.svc.fingerprint() {
            let id = self.device.as_ref().unwrap().id.clone();
            self.trace.push(
                now,
                format!(
                    "device {} fingerprint-mismatch {}",
                    id,
                    payload.tid.as_str()
                ),
            );
            return false;
        }
        self.send_device_request(&request, kind, t_send, started_ms, latency_base_ms);
        true
    }

    fn device_at(&self, tid: &Tid) -> bool {
        self.device
            .as_ref()
            .is_some_and(|d| d.present && d.location.as_ref() == Some(tid))
    }

    fn device_pinned_to(&self, tid: &Tid) -> bool {
        self.device
            .as_ref()
            .is_some_and(|d| d.agent.pinned_terminal() == Some(tid))
    }

    fn handle_action(&mut self, now: SimMs, idx: usize) {
        let action = self.timeline[idx].action.clone();
        match action {
            Action::Login { tid } => {
                let tid = Tid::new(&tid).expect("validated");
                let device = self.device.as_mut().expect("validated");
                device.present = true;
                device.location = Some(tid.clone());
                let id = device.id.clone();
                self.trace
                    .push(now, format!("user login {} device={}", tid.as_str(), id));
                self.queue.schedule(
                    now + self.voice_ms + self.capture_ms,
                    Ev::LoginScan {
                        tid,
                        attempt: 1,
                        started_ms: now,
                    },
                );
            }
            Action::WalkAway => {
                let device = self.device.as_mut().expect("validated");
                device.present = false;
                let location = device.location.clone();
                self.trace.push(now, "user walk-away");
                if let Some(tid) = location {
                    if let Some(session) = self.svc.session_mut(&tid) {
                        session.walk_away(now);
                    }
                }
            }
            Action::Return => {
                let device = self.device.as_mut().expect("validated");
                device.present = true;
                let location = device.location.clone();
                self.trace.push(now, "user return");
                let Some(tid) = location else { return };
                match self.svc.session_mut(&tid) {
                    Some(session) if session.phase() == Phase::Active => {
                        session.returned();
                    }
                    Some(session) if session.phase() == Phase::Locked => {
                        // The lock screen still shows a challenge; the
                        // device re-admits hands-free.
                        self.queue.schedule(
                            now + self.capture_ms,
                            Ev::LockedScan {
                                tid,
                                attempt: 1,
                                started_ms: now,
                            },
                        );
                    }
                    Some(_) => {}
                    None => {
                        // Session died while the user was away. A still
                        // pinned device probes, gets refused, unpins,
                        // and falls back to a fresh login.
                        if self.device_pinned_to(&tid) {
                            self.queue.schedule(
                                now + self.capture_ms,
                                Ev::LockedScan {
                                    tid,
                                    attempt: 1,
                                    started_ms: now,
                                },
                            );
                        }
                    }
                }
            }
            Action::Logout => self.handle_logout(now),
            Action::Capture { tid } => {
                let payload = self
                    .terms
                    .get(&tid)
                    .and_then(|t| t.party.displayed().cloned());
                let request_line = self.device.as_ref().and_then(|d| d.last_request.clone());
                self.trace.push(
                    now,
                    format!(
                        "adversary capture {} payload={} request={}",
                        tid,
                        if payload.is_some() { "yes" } else { "no" },
                        if request_line.is_some() { "yes" } else { "no" }
                    ),
                );
                self.adversary.payload = payload;
                self.adversary.request_line = request_line;
            }
            Action::Replay { kind, count } => match kind {
                ReplayKind::Request => self.adversary_replay_request(now, count),
                ReplayKind::Payload => self.adversary_replay_payload(now, count),
            },
            Action::Guess { count } => self.adversary_guess(now, count),
        }
    }

    fn handle_logout(&mut self, now: SimMs) {
        let Some(device) = self.device.as_mut() else {
            return;
        };
        let location = device.location.clone();
        device.agent.end_continuous();
        let Some(tid) = location else {
            self.trace.push(now, "user logout idle");
            return;
        };
        self.trace
            .push(now, format!("user logout {}", tid.as_str()));
        if let Some(session) = self.svc.end_session(&tid, EndReason::UserLogout, now) {
            self.absorb_exposure(&session);
            self.metrics.user_logouts += 1;
            self.trace.push(
                now,
                format!("service {} session-end reason=user-logout", tid.as_str()),
            );
            self.end_screen_and_reissue(&tid, now);
        } else {
            // One-shot admission: no tracked session, but the screen
            // may still be showing one.
            let term = self.terms.get_mut(tid.as_str()).expect("terminal exists");
            if matches!(term.party.screen(), Screen::Session(_)) {
                self.metrics.user_logouts += 1;
                self.end_screen_and_reissue(&tid, now);
            }
        }
    }

    /// Clears the terminal back to its login screen and restarts the
    /// challenge refresh chain under a new generation.
    fn end_screen_and_reissue(&mut self, tid: &Tid, now: SimMs) {
        let term = self.terms.get_mut(tid.as_str()).expect("terminal exists");
        term.party.apply(TerminalDirective::EndSession);
        term.refresh_gen += 1;
        let gen = term.refresh_gen;
        let refresh = term.refresh_ms;
        self.display_challenge(tid, now, "login");
        if refresh > 0 {
            self.queue.schedule(
                now + refresh,
                Ev::LoginRefresh {
                    tid: tid.clone(),
                    gen,
                },
            );
        }
    }

    fn handle_login_scan(&mut self, now: SimMs, tid: &Tid, attempt: u32, started_ms: SimMs) {
        if !self.device_at(tid) {
            return;
        }
        let Some((result, payload)) = self.roll_optics(tid) else {
            return;
        };
        let id = self.device.as_ref().unwrap().id.clone();
        match result {
            ScanResult::Decoded => {
                self.trace
                    .push(now, format!("device {} scan {} decoded", id, tid.as_str()));
                let t_send = now + self.decode_ms + self.otp_ms;
                self.scan_and_send(&payload, "login", now, t_send, started_ms, None);
            }
            ScanResult::Failed => {
                self.metrics.failed_scans += 1;
                self.trace.push(
                    now,
                    format!(
                        "device {} scan {} failed attempt={}",
                        id,
                        tid.as_str(),
                        attempt
                    ),
                );
                if attempt < self.passes_budget() {
                    self.queue.schedule(
                        now + self.capture_ms,
                        Ev::LoginScan {
                            tid: tid.clone(),
                            attempt: attempt + 1,
                            started_ms,
                        },
                    );
                } else {
                    self.trace.push(
                        now,
                        format!("device {} scan {} exhausted", id, tid.as_str()),
                    );
                }
            }
        }
    }

    fn handle_login_refresh(&mut self, now: SimMs, tid: &Tid, gen: u64) {
        let term = self.terms.get(tid.as_str()).expect("terminal exists");
        if term.refresh_gen != gen {
            return;
        }
        // A session owns the screen; the login chain resumes when the
        // session ends and the generation is bumped.
        if self.svc.session(tid).is_some() {
            return;
        }
        let refresh = term.refresh_ms;
        self.display_challenge(tid, now, "refresh");
        self.queue.schedule(
            now + refresh,
            Ev::LoginRefresh {
                tid: tid.clone(),
                gen,
            },
        );
    }

    fn handle_reauth_deadline(&mut self, now: SimMs, tid: &Tid) {
        let Some(armed) = self.svc.session_mut(tid).and_then(|s| s.arm_deadline(now)) else {
            return;
        };
        let payload = self.display_challenge(tid, now, &format!("reauth seq={}", armed.seq));
        if let Some(session) = self.svc.session_mut(tid) {
            session.record_challenge(payload.clone());
        }
        self.queue.schedule(
            armed.lock_at_ms,
            Ev::LockFire {
                tid: tid.clone(),
                seq: armed.seq,
            },
        );
        self.queue.schedule(
            armed.next_deadline_ms,
            Ev::ReauthDeadline { tid: tid.clone() },
        );

        // A present, pinned device has the challenge pre-armed: its
        // camera was already focused when the deadline hit, so only the
        // network leg remains on the event path. The pipeline time it
        // spent shows up in the latency metric instead.
        if !(self.device_at(tid) && self.device_pinned_to(tid)) {
            return;
        }
        let Some((result, payload)) = self.roll_optics(tid) else {
            return;
        };
        let id = self.device.as_ref().unwrap().id.clone();
        match result {
            ScanResult::Decoded => {
                self.trace
                    .push(now, format!("device {} scan {} decoded", id, tid.as_str()));
                self.scan_and_send(
                    &payload,
                    "reauth",
                    now,
                    now,
                    now,
                    Some(self.reauth_pipeline_ms()),
                );
            }
            ScanResult::Failed => {
                self.metrics.failed_scans += 1;
                self.trace.push(
                    now,
                    format!("device {} scan {} failed attempt=1", id, tid.as_str()),
                );
                if self.passes_budget() > 1 {
                    self.queue.schedule(
                        now + self.capture_ms,
                        Ev::ReauthRetry {
                            tid: tid.clone(),
                            seq: armed.seq,
                            attempt: 2,
                            deadline_ms: now,
                        },
                    );
                }
            }
        }
    }

    fn handle_reauth_retry(
        &mut self,
        now: SimMs,
        tid: &Tid,
        seq: u64,
        attempt: u32,
        deadline_ms: SimMs,
    ) {
        if !(self.device_at(tid) && self.device_pinned_to(tid)) {
            return;
        }
        // Only the challenge slot this retry belongs to is answerable;
        // a newer slot means the chain is stale.
        let still_current = self
            .svc
            .session(tid)
            .is_some_and(|s| s.challenge_seq() == seq && s.phase() != Phase::LoggedOut);
        if !still_current {
            return;
        }
        let Some((result, payload)) = self.roll_optics(tid) else {
            return;
        };
        let id = self.device.as_ref().unwrap().id.clone();
        match result {
            ScanResult::Decoded => {
                self.trace
                    .push(now, format!("device {} scan {} decoded", id, tid.as_str()));
                let t_send = now + self.decode_ms + self.otp_ms;
                let base = self.reauth_pipeline_ms() + (attempt as u64 - 1) * self.capture_ms;
                self.scan_and_send(&payload, "reauth", now, t_send, deadline_ms, Some(base));
            }
            ScanResult::Failed => {
                self.metrics.failed_scans += 1;
                self.trace.push(
                    now,
                    format!(
                        "device {} scan {} failed attempt={}",
                        id,
                        tid.as_str(),
                        attempt
                    ),
                );
                if attempt < self.passes_budget() {
                    self.queue.schedule(
                        now + self.capture_ms,
                        Ev::ReauthRetry {
                            tid: tid.clone(),
                            seq,
                            attempt: attempt + 1,
                            deadline_ms,
                        },
                    );
                } else {
                    self.trace.push(
                        now,
                        format!("device {} scan {} exhausted", id, tid.as_str()),
                    );
                }
            }
        }
    }

    fn handle_lock_fire(&mut self, now: SimMs, tid: &Tid, seq: u64) {
        let Some(session) = self.svc.session_mut(tid) else {
            return;
        };
        if !session.try_lock(seq, now) {
            return;
        }
        let policy = session.policy;
        self.metrics.locks += 1;
        let term = self.terms.get_mut(tid.as_str()).expect("terminal exists");
        term.party.apply(TerminalDirective::Lock);
        self.trace
            .push(now, format!("service {} lock seq={}", tid.as_str(), seq));
        let grace_ms = policy.locked_grace_periods as u64 * policy.t_reauth_ms;
        self.queue.schedule(
            now + grace_ms,
            Ev::GraceFire {
                tid: tid.clone(),
                locked_at_ms: now,
            },
        );
    }

    fn handle_grace_fire(&mut self, now: SimMs, tid: &Tid, locked_at_ms: SimMs) {
        let still_locked = self
            .svc
            .session(tid)
            .is_some_and(|s| s.phase() == Phase::Locked && s.locked_at_ms() == Some(locked_at_ms));
        if !still_locked {
            return;
        }
        let session = self
            .svc
            .end_session(tid, EndReason::LockExpired, now)
            .expect("session checked above");
        self.absorb_exposure(&session);
        self.metrics.grace_logouts += 1;
        self.trace
            .push(now, format!("service {} grace-logout", tid.as_str()));
        self.end_screen_and_reissue(tid, now);
        // A pinned wearer still standing there probes the login screen,
        // gets refused, unpins, and logs back in on its own.
        if self.device_at(tid) && self.device_pinned_to(tid) {
            self.queue.schedule(
                now + self.capture_ms,
                Ev::LockedScan {
                    tid: tid.clone(),
                    attempt: 1,
                    started_ms: now,
                },
            );
        }
    }

    fn handle_locked_scan(&mut self, now: SimMs, tid: &Tid, attempt: u32, started_ms: SimMs) {
        if !(self.device_at(tid) && self.device_pinned_to(tid)) {
            return;
        }
        // Answerable while the session is locked (re-admission) or gone
        // (a probe that will be refused and unpin the device). An
        // active session's deadline chain owns its own scans.
        let kind = match self.svc.session(tid).map(|s| s.phase()) {
            Some(Phase::Locked) => "unlock",
            None => "reauth",
            _ => return,
        };
        let Some((result, payload)) = self.roll_optics(tid) else {
            return;
        };
        let id = self.device.as_ref().unwrap().id.clone();
        match result {
            ScanResult::Decoded => {
                self.trace
                    .push(now, format!("device {} scan {} decoded", id, tid.as_str()));
                let t_send = now + self.decode_ms + self.otp_ms;
                self.scan_and_send(&payload, kind, now, t_send, started_ms, None);
            }
            ScanResult::Failed => {
                self.metrics.failed_scans += 1;
                self.trace.push(
                    now,
                    format!(
                        "device {} scan {} failed attempt={}",
                        id,
                        tid.as_str(),
                        attempt
                    ),
                );
                if attempt < self.passes_budget() {
                    self.queue.schedule(
                        now + self.capture_ms,
                        Ev::LockedScan {
                            tid: tid.clone(),
                            attempt: attempt + 1,
                            started_ms,
                        },
                    );
                } else {
                    self.trace.push(
                        now,
                        format!("device {} scan {} exhausted", id, tid.as_str()),
                    );
                }
            }
        }
    }

    fn handle_arrive(&mut self, now: SimMs, ctx: ArriveCtx) {
        let (ack, outcome) = self.svc.handle_auth_request(&ctx.request, &ctx.origin, now);
        let outcome_label = match &outcome {
            VerifyOutcome::Accepted { .. } => "accept".to_string(),
            VerifyOutcome::Refused(reason) => reason.label().to_string(),
        };
        self.trace.push(
            now,
            format!(
                "auth {} {} uid={} origin={} outcome={} latency={}ms",
                ctx.kind,
                ctx.request.tid.as_str(),
                ctx.request.uid.as_str(),
                ctx.origin,
                outcome_label,
                ctx.latency_ms
            ),
        );
        self.metrics.auths.push(AuthRecord {
            kind: ctx.kind,
            tid: ctx.request.tid.as_str().to_string(),
            uid: ctx.request.uid.as_str().to_string(),
            origin: ctx.origin.clone(),
            started_ms: ctx.started_ms,
            arrived_ms: now,
            latency_ms: ctx.latency_ms,
            outcome: outcome_label,
        });

        if let VerifyOutcome::Accepted {
            uid,
            tid,
            reauth_effect,
            session_started,
        } = &outcome
        {
            let term = self.terms.get_mut(tid.as_str()).expect("terminal exists");
            if *session_started {
                term.party.apply(TerminalDirective::Admit(uid.clone()));
                let t_reauth = self
                    .svc
                    .session(tid)
                    .map(|s| s.policy.t_reauth_ms)
                    .expect("session just started");
                self.trace.push(
                    now,
                    format!(
                        "service {} session-start uid={} t_reauth_ms={}",
                        tid.as_str(),
                        uid.as_str(),
                        t_reauth
                    ),
                );
                let deadline = self
                    .svc
                    .session(tid)
                    .and_then(|s| s.next_deadline_ms())
                    .expect("fresh session has a deadline");
                self.queue
                    .schedule(deadline, Ev::ReauthDeadline { tid: tid.clone() });
            } else {
                match reauth_effect {
                    Some(ReauthEffect::Refreshed) => {}
                    Some(ReauthEffect::Unlocked { next_deadline_ms }) => {
                        self.metrics.unlocks += 1;
                        term.party.apply(TerminalDirective::Unlock);
                        self.trace
                            .push(now, format!("service {} unlock", tid.as_str()));
                        self.queue
                            .schedule(*next_deadline_ms, Ev::ReauthDeadline { tid: tid.clone() });
                    }
                    None => {
                        // One-shot admission: no continuous policy.
                        term.party.apply(TerminalDirective::Admit(uid.clone()));
                        self.trace.push(
                            now,
                            format!(
                                "service {} admit uid={} one-shot",
                                tid.as_str(),
                                uid.as_str()
                            ),
                        );
                    }
                }
            }
        }

        // Deliver the ack to whoever sent the request.
        let deliver_to_device = self.device.as_ref().is_some_and(|d| d.id == ctx.origin);
        if deliver_to_device {
            let wall = self.wall(now);
            let was_pinned_here = self.device_pinned_to(&ctx.request.tid);
            let device = self.device.as_mut().unwrap();
            device.agent.on_ack(&ack, wall);
            let unpinned = device.agent.pinned_terminal().is_none();
            if ack.status == AckStatus::Fail && was_pinned_here && unpinned {
                let id = device.id.clone();
                let tid = ctx.request.tid.clone();
                self.trace
                    .push(now, format!("device {} unpinned {}", id, tid.as_str()));
                // The pin referred to a dead session; scan the login
                // screen afresh.
                if self.device_at(&tid)
                    && self
                        .terms
                        .get(tid.as_str())
                        .is_some_and(|t| t.party.displayed().is_some())
                {
                    self.queue.schedule(
                        now + self.capture_ms,
                        Ev::LoginScan {
                            tid,
                            attempt: 1,
                            started_ms: now,
                        },
                    );
                }
            }
        }
    }

    fn handle_battery_tick(&mut self, now: SimMs) {
        let Some(device) = self.device.as_mut() else {
            return;
        };
        device.battery.spend_standby(1.0);
        self.metrics
            .battery_trajectory
            .push((now / 60_000, device.battery.level));
        self.queue.schedule(now + 60_000, Ev::BatteryTick);
    }

    fn absorb_exposure(&mut self, session: &SessionState) {
        for record in session.exposure() {
            self.metrics.exposure.push(ExposureEvent {
                tid: session.tid.as_str().to_string(),
                uid: session.uid.as_str().to_string(),
                walk_away_ms: record.walk_away_ms,
                detect_ms: record.detect_ms,
            });
        }
    }

    /// Replays the captured wire request verbatim, `count` times in one
    /// burst. The whole burst lands on one trace line.
    fn adversary_replay_request(&mut self, now: SimMs, count: u64) {
        let Some(line) = self.adversary.request_line.clone() else {
            self.trace.push(
                now,
                "adversary replay-request count=0 accepted=0 nothing-captured",
            );
            return;
        };
        let request = decode_auth_request(line.trim_end()).expect("captured line was valid");
        self.adversary_burst(now, "replay-request", count, |_, _| Some(request.clone()));
    }

    /// Forges requests from the captured screen payload with guessed
    /// codes; the nonce is the screen's, the OTP is random.
    fn adversary_replay_payload(&mut self, now: SimMs, count: u64) {
        let Some(payload) = self.adversary.payload.clone() else {
            self.trace.push(
                now,
                "adversary replay-payload count=0 accepted=0 nothing-captured",
            );
            return;
        };
        let uid = self.forged_uid();
        let wall = self.wall(now);
        self.adversary_burst(now, "replay-payload", count, move |rng, _| {
            Some(AuthRequest {
                uid: uid.clone(),
                otp: format!("{:06}", rng.random_range(0..1_000_000u32)),
                sid: payload.sid.clone(),
                tid: payload.tid.clone(),
                nonce: payload.nonce.clone(),
                ts: Timestamp::from_secs(wall).expect("sim time fits"),
                reauth: false,
                lts: 0,
            })
        });
    }

    /// Forges requests with random nonce and random OTP against the
    /// captured terminal (or the first declared one).
    fn adversary_guess(&mut self, now: SimMs, count: u64) {
        let tid = self
            .adversary
            .payload
            .as_ref()
            .map(|p| p.tid.clone())
            .or_else(|| {
                self.terms
                    .keys()
                    .next()
                    .map(|t| Tid::new(t).expect("registered tid is valid"))
            });
        let Some(tid) = tid else {
            self.trace
                .push(now, "adversary guess count=0 accepted=0 no-target");
            return;
        };
        let uid = self.forged_uid();
        let sid = self.svc.config().sid.clone();
        let wall = self.wall(now);
        self.adversary_burst(now, "guess", count, move |rng, _| {
            Some(AuthRequest {
                uid: uid.clone(),
                otp: format!("{:06}", rng.random_range(0..1_000_000u32)),
                sid: sid.clone(),
                tid: tid.clone(),
                nonce: Nonce::new(&format!("{:06}", rng.random_range(0..1_000_000u32)))
                    .expect("six digits"),
                ts: Timestamp::from_secs(wall).expect("sim time fits"),
                reauth: false,
                lts: 0,
            })
        });
    }

    /// The adversary targets the enrolled user when there is one.
    fn forged_uid(&self) -> Uid {
        self.device
            .as_ref()
            .map(|d| d.uid.clone())
            .unwrap_or_else(|| Uid::new("ghost").expect("static uid is valid"))
    }

    /// Processes a burst of adversarial presentations at one instant,
    /// collapsing them to a single trace line with a reason histogram.
    fn adversary_burst(
        &mut self,
        now: SimMs,
        label: &str,
        count: u64,
        mut make: impl FnMut(&mut ChaCha8Rng, u64) -> Option<AuthRequest>,
    ) {
        let mut accepted = 0u64;
        let mut reasons: BTreeMap<&'static str, u64> = BTreeMap::new();
        for i in 0..count {
            let Some(request) = make(&mut self.rng_adversary, i) else {
                break;
            };
            let (_ack, outcome) = self.svc.handle_auth_request(&request, "adversary", now);
            match outcome {
                VerifyOutcome::Accepted { .. } => accepted += 1,
                VerifyOutcome::Refused(reason) => {
                    *reasons.entry(reason.label()).or_default() += 1;
                }
            }
        }
        self.metrics.adversary_presentations += count;
        self.metrics.adversary_accepts += accepted;
        let histogram = reasons
            .iter()
            .map(|(k, v)| format!("{k}:{v}"))
            .collect::<Vec<_>>()
            .join(",");
        self.trace.push(
            now,
            format!(
                "adversary {} count={} accepted={} reasons={}",
                label, count, accepted, histogram
            ),
        );
    }
}

/// Independent generator for one named stream of a seeded run.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    const WALKAWAY: &str = "\
name = walkaway
duration = 30
seed = 7

[service]
sid = 1234
fingerprint = sha256:abc

[terminal T01]
ui = service
continuous = on
t_reauth = 5
lock_timeout = 1

[device alice-glass]
uid = alice
key = GEZDGNBVGY3TQOJQGEZDGNBVGY3TQOJQ
distance = 120
code_size = 30

[models]
latency = local

[timeline]
at 1 login T01
at 13.7 walk_away
at 20 return
at 28 logout
";

    #[test]
    fn walkaway_scenario_locks_unlocks_and_bounds_exposure() {
        let cfg = parse_scenario(WALKAWAY).unwrap();
        let report = run(&cfg).unwrap();

        let logins: Vec<_> = report
            .metrics
            .auths
            .iter()
            .filter(|a| a.kind == "login" && a.accepted())
            .collect();
        assert_eq!(logins.len(), 1, "trace:\n{}", report.trace.render());
        assert_eq!(report.metrics.locks, 1);
        assert_eq!(report.metrics.unlocks, 1);
        assert_eq!(report.metrics.user_logouts, 1);
        assert_eq!(report.metrics.grace_logouts, 0);

        // Walked away at 13.7 s with T=5 s, L=1 s: the lock must land
        // within T+L of the walk-away.
        assert_eq!(report.metrics.exposure.len(), 1);
        let exposure = &report.metrics.exposure[0];
        assert_eq!(exposure.walk_away_ms, 13_700);
        assert!(
            exposure.window_ms() <= 6_000,
            "window {}",
            exposure.window_ms()
        );
        assert!(exposure.window_ms() > 0);
        assert_eq!(exposure.tid, "T01");

        assert!(report.reconciles());
    }

    #[test]
    fn identical_seeds_produce_identical_runs() {
        let cfg = parse_scenario(WALKAWAY).unwrap();
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.trace.render(), b.trace.render());
        assert_eq!(a.metrics, b.metrics);

        let mut other = cfg;
        other.seed = 8;
        let c = run(&other).unwrap();
        assert_ne!(a.trace.render(), c.trace.render());
    }

    #[test]
    fn empty_scenario_is_inert() {
        let cfg = parse_scenario("name = empty\nduration = 5\n").unwrap();
        let report = run(&cfg).unwrap();
        assert_eq!(report.metrics.attempts(), 0);
        assert!(report.trace.count_containing("end-of-run") == 1);
        assert!(report.reconciles());
    }

    #[test]
    fn replayed_requests_are_all_refused() {
        let text = "\
name = replay
duration = 20
seed = 11

[terminal T01]
ui = service
continuous = on
t_reauth = 5
lock_timeout = 1

[device glass]
uid = alice
key = GEZDGNBVGY3TQOJQGEZDGNBVGY3TQOJQ
distance = 120
code_size = 30

[models]
latency = local

[timeline]
at 1 login T01
at 8 capture T01
at 10 replay count=1000
at 11 guess count=500
";
        let cfg = parse_scenario(text).unwrap();
        let report = run(&cfg).unwrap();
        assert_eq!(report.metrics.adversary_presentations, 1_500);
        assert_eq!(report.metrics.adversary_accepts, 0);
        // The attack neither locked nor ended the legitimate session.
        assert_eq!(report.metrics.locks, 0, "trace:\n{}", report.trace.render());
        assert_eq!(report.metrics.grace_logouts, 0);
        assert!(report.reconciles());
    }

    #[test]
    fn reauth_cadence_sits_on_the_grid() {
        let text = "\
name = cadence
duration = 100
seed = 3

[terminal T01]
ui = service
continuous = on
t_reauth = 5
lock_timeout = 1

[device glass]
uid = alice
key = GEZDGNBVGY3TQOJQGEZDGNBVGY3TQOJQ
distance = 120
code_size = 30

[models]
latency = local

[timeline]
at 1 login T01
";
        let cfg = parse_scenario(text).unwrap();
        let report = run(&cfg).unwrap();
        let anchor = report
            .metrics
            .auths
            .iter()
            .find(|a| a.kind == "login" && a.accepted())
            .map(|a| a.arrived_ms)
            .expect("login accepted");
        let reauths: Vec<_> = report
            .metrics
            .auths
            .iter()
            .filter(|a| a.kind == "reauth" && a.accepted())
            .collect();
        assert!(!reauths.is_empty());
        for auth in &reauths {
            let offset = auth.started_ms - anchor;
            assert_eq!(offset % 5_000, 0, "deadline off the grid: {offset}");
        }
        assert_eq!(report.metrics.reauths_per_minute(anchor, 1), vec![12]);
        assert!(report.reconciles());
    }

    #[test]
    fn strict_optics_rejects_uncalibrated_geometry() {
        // A 4-char tid plus the continuous flag puts the payload at
        // exactly 208 bits, the smallest calibrated density.
        let text = "\
name = strict
duration = 10
seed = 1

[terminal KIOSK1]
ui = service
continuous = on

[device glass]
uid = alice
key = GEZDGNBVGY3TQOJQGEZDGNBVGY3TQOJQ
distance = 50
code_size = 30

[timeline]
at 1 login KIOSK1
";
        // Six-char tid: 224 bits, off the ladder.
        let cfg = parse_scenario(text).unwrap();
        let err = run_with_options(&cfg, true).unwrap_err();
        assert!(matches!(err, RunError::Setup(_)));

        let text = text.replace("KIOSK1", "KISK");
        let cfg = parse_scenario(&text).unwrap();
        assert!(run_with_options(&cfg, true).is_ok());

        // Exact density but an uncalibrated distance still fails.
        let mut cfg = parse_scenario(&text).unwrap();
        cfg.device.as_mut().unwrap().distance_cm = 30.0;
        assert!(matches!(
            run_with_options(&cfg, true).unwrap_err(),
            RunError::Setup(_)
        ));
    }
}
