//! Scenario files: the plain-text descriptions the simulator runs.
//! One file holds the parties (service, terminals, one device), the
//! channel models, and a timeline of user and adversary actions. The
//! format is line-oriented sections of `key = value` pairs plus a
//! `[timeline]` of `at <seconds> <action>` directives; parse errors
//! carry their line number.

use crate::optics::AccuracyTable;
use crate::simnet::latency::LatencyModel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
}

fn parse_err(line: usize, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        reason: reason.into(),
    }
}

/// Who draws the challenge on the terminal's screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UiKind {
    #[default]
    ServiceDriven,
    TerminalDriven,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceSpec {
    pub sid: String,
    pub fingerprint: String,
    pub throttle: bool,
    pub nonce_expiry_secs: u64,
}

impl Default for ServiceSpec {
    fn default() -> Self {
        Self {
            sid: "1234".to_string(),
            fingerprint: "sha256:default".to_string(),
            throttle: true,
            nonce_expiry_secs: 120,
        }
    }
}

/// Continuous-authentication policy knobs, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousSpec {
    pub t_reauth_secs: f64,
    pub lock_timeout_secs: f64,
    pub grace_periods: u32,
}

impl Default for ContinuousSpec {
    fn default() -> Self {
        Self {
            t_reauth_secs: 5.0,
            lock_timeout_secs: 1.0,
            grace_periods: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalSpec {
    pub tid: String,
    pub ui: UiKind,
    pub continuous: Option<ContinuousSpec>,
    /// Base-32 nonce key; required for terminal-driven screens.
    pub nonce_key_b32: Option<String>,
    /// Login-screen challenge refresh period.
    pub refresh_secs: f64,
}

impl TerminalSpec {
    pub fn new(tid: impl Into<String>) -> Self {
        Self {
            tid: tid.into(),
            ui: UiKind::ServiceDriven,
            continuous: None,
            nonce_key_b32: None,
            refresh_secs: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub id: String,
    pub uid: String,
    /// Base-32 user key shared with the service.
    pub key_b32: String,
    pub distance_cm: f64,
    pub angle_deg: f64,
    pub code_size_cm: f64,
    /// Extra camera passes after a failed decode.
    pub retries: u32,
    pub battery: f64,
}

impl DeviceSpec {
    pub fn new(id: impl Into<String>, uid: impl Into<String>, key_b32: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            uid: uid.into(),
            key_b32: key_b32.into(),
            distance_cm: 50.0,
            angle_deg: 0.0,
            code_size_cm: 30.0,
            retries: 2,
            battery: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelsSpec {
    pub latency: LatencyModel,
    pub optics: AccuracyTable,
    pub voice_activation_ms: u64,
    pub capture_autofocus_ms: u64,
    pub qr_decode_ms: u64,
    pub otp_generation_ms: u64,
}

impl Default for ModelsSpec {
    fn default() -> Self {
        Self {
            latency: LatencyModel::local(),
            optics: AccuracyTable::bench_defaults(),
            voice_activation_ms: 1_700,
            capture_autofocus_ms: 1_800,
            qr_decode_ms: 200,
            otp_generation_ms: 400,
        }
    }
}

/// What gets replayed: the captured wire request verbatim, or requests
/// forged from the captured screen payload with guessed codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayKind {
    Request,
    Payload,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Login {
        tid: String,
    },
    WalkAway,
    Return,
    Logout,
    /// Adversary snapshots the terminal's screen and the last request
    /// seen on the wire.
    Capture {
        tid: String,
    },
    Replay {
        kind: ReplayKind,
        count: u64,
    },
    /// Forged requests with random nonce and code.
    Guess {
        count: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEntry {
    pub at_ms: u64,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration_ms: u64,
    pub seed: u64,
    pub service: ServiceSpec,
    pub terminals: Vec<TerminalSpec>,
    pub device: Option<DeviceSpec>,
    pub models: ModelsSpec,
    pub timeline: Vec<TimelineEntry>,
}

impl ScenarioConfig {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            duration_ms: 60_000,
            seed: 0,
            service: ServiceSpec::default(),
            terminals: Vec::new(),
            device: None,
            models: ModelsSpec::default(),
            timeline: Vec::new(),
        }
    }

    /// Cross-reference checks a parsed or hand-built scenario.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        for terminal in &self.terminals {
            if terminal.ui == UiKind::TerminalDriven && terminal.nonce_key_b32.is_none() {
                return Err(ScenarioError::Invalid(format!(
                    "terminal {} is terminal-driven but has no nonce_key",
                    terminal.tid
                )));
            }
            if terminal.ui == UiKind::ServiceDriven && terminal.nonce_key_b32.is_some() {
                return Err(ScenarioError::Invalid(format!(
                    "terminal {} is service-driven and must not set nonce_key",
                    terminal.tid
                )));
            }
            if let Some(cont) = &terminal.continuous {
                if cont.t_reauth_secs <= 0.0 || cont.t_reauth_secs.is_nan() {
                    return Err(ScenarioError::Invalid(format!(
                        "terminal {}: t_reauth must be positive",
                        terminal.tid
                    )));
                }
                if cont.lock_timeout_secs < 0.0 {
                    return Err(ScenarioError::Invalid(format!(
                        "terminal {}: lock_timeout must be non-negative",
                        terminal.tid
                    )));
                }
            }
        }
        for entry in &self.timeline {
            let tid = match &entry.action {
                Action::Login { tid } | Action::Capture { tid } => Some(tid),
                _ => None,
            };
            if let Some(tid) = tid {
                if !self.terminals.iter().any(|t| &t.tid == tid) {
                    return Err(ScenarioError::Invalid(format!(
                        "timeline references unknown terminal {tid}"
                    )));
                }
            }
            let needs_device = matches!(
                entry.action,
                Action::Login { .. } | Action::WalkAway | Action::Return | Action::Logout
            );
            if needs_device && self.device.is_none() {
                return Err(ScenarioError::Invalid(
                    "timeline has user actions but no [device] section".to_string(),
                ));
            }
        }
        Ok(())
    }
}

/// Parses a scenario file. Blank lines and `#` comments are ignored.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = ScenarioConfig::new("unnamed");
    let mut section = Section::Preamble;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim().to_string();
        if line.is_empty() {
            continue;
        }

        if let Some(header) = line.strip_prefix('[') {
            let header = header
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line_no, "unterminated section header"))?
                .trim();
            section = parse_section_header(header, line_no, &mut cfg)?;
            continue;
        }

        match &mut section {
            Section::Timeline => {
                let entry = parse_timeline_line(&line, line_no)?;
                cfg.timeline.push(entry);
            }
            _ => {
                let (key, value) = split_key_value(&line, line_no)?;
                apply_key(&mut cfg, &section, &key, &value, line_no)?;
            }
        }
    }

    cfg.timeline.sort_by_key(|e| e.at_ms);
    cfg.validate()?;
    Ok(cfg)
}

enum Section {
    Preamble,
    Service,
    Terminal(usize),
    Device,
    Models,
    Timeline,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_section_header(
    header: &str,
    line_no: usize,
    cfg: &mut ScenarioConfig,
) -> Result<Section, ScenarioError> {
    let mut words = header.split_whitespace();
    match (words.next(), words.next(), words.next()) {
        (Some("service"), None, _) => Ok(Section::Service),
        (Some("terminal"), Some(tid), None) => {
            if cfg.terminals.iter().any(|t| t.tid == tid) {
                return Err(parse_err(line_no, format!("terminal {tid} declared twice")));
            }
            cfg.terminals.push(TerminalSpec::new(tid));
            Ok(Section::Terminal(cfg.terminals.len() - 1))
        }
        (Some("device"), Some(id), None) => {
            if cfg.device.is_some() {
                return Err(parse_err(line_no, "only one [device] section is supported"));
            }
            cfg.device = Some(DeviceSpec::new(id, "", ""));
            Ok(Section::Device)
        }
        (Some("models"), None, _) => Ok(Section::Models),
        (Some("timeline"), None, _) => Ok(Section::Timeline),
        _ => Err(parse_err(line_no, format!("unknown section [{header}]"))),
    }
}

fn split_key_value(line: &str, line_no: usize) -> Result<(String, String), ScenarioError> {
    let (key, value) = line
        .split_once('=')
        .ok_or_else(|| parse_err(line_no, "expected key = value"))?;
    Ok((key.trim().to_string(), value.trim().to_string()))
}

fn parse_num<T: std::str::FromStr>(
    value: &str,
    key: &str,
    line_no: usize,
) -> Result<T, ScenarioError> {
    value
        .parse()
        .map_err(|_| parse_err(line_no, format!("{key} is not a valid number: {value}")))
}

fn parse_switch(value: &str, key: &str, line_no: usize) -> Result<bool, ScenarioError> {
    match value {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        _ => Err(parse_err(
            line_no,
            format!("{key} must be on or off, got {value}"),
        )),
    }
}

fn secs_to_ms(secs: f64) -> u64 {
    (secs * 1000.0).round() as u64
}

fn apply_key(
    cfg: &mut ScenarioConfig,
    section: &Section,
    key: &str,
    value: &str,
    line_no: usize,
) -> Result<(), ScenarioError> {
    let unknown = || parse_err(line_no, format!("unknown key {key} in this section"));
    match section {
        Section::Preamble => match key {
            "name" => cfg.name = value.to_string(),
            "duration" => cfg.duration_ms = secs_to_ms(parse_num(value, key, line_no)?),
            "seed" => cfg.seed = parse_num(value, key, line_no)?,
            _ => return Err(unknown()),
        },
        Section::Service => match key {
            "sid" => cfg.service.sid = value.to_string(),
            "fingerprint" => cfg.service.fingerprint = value.to_string(),
            "throttle" => cfg.service.throttle = parse_switch(value, key, line_no)?,
            "nonce_expiry" => cfg.service.nonce_expiry_secs = parse_num(value, key, line_no)?,
            _ => return Err(unknown()),
        },
        Section::Terminal(i) => {
            let terminal = &mut cfg.terminals[*i];
            match key {
                "ui" => {
                    terminal.ui = match value {
                        "service" => UiKind::ServiceDriven,
                        "terminal" => UiKind::TerminalDriven,
                        _ => {
                            return Err(parse_err(
                                line_no,
                                format!("ui must be service or terminal, got {value}"),
                            ))
                        }
                    }
                }
                "continuous" => {
                    if parse_switch(value, key, line_no)? {
                        terminal
                            .continuous
                            .get_or_insert_with(ContinuousSpec::default);
                    } else {
                        terminal.continuous = None;
                    }
                }
                "t_reauth" => {
                    terminal
                        .continuous
                        .get_or_insert_with(ContinuousSpec::default)
                        .t_reauth_secs = parse_num(value, key, line_no)?;
                }
                "lock_timeout" => {
                    terminal
                        .continuous
                        .get_or_insert_with(ContinuousSpec::default)
                        .lock_timeout_secs = parse_num(value, key, line_no)?;
                }
                "grace_periods" => {
                    terminal
                        .continuous
                        .get_or_insert_with(ContinuousSpec::default)
                        .grace_periods = parse_num(value, key, line_no)?;
                }
                "nonce_key" => terminal.nonce_key_b32 = Some(value.to_string()),
                "refresh" => terminal.refresh_secs = parse_num(value, key, line_no)?,
                _ => return Err(unknown()),
            }
        }
        Section::Device => {
            let device = cfg.device.as_mut().expect("section implies device exists");
            match key {
                "uid" => device.uid = value.to_string(),
                "key" => device.key_b32 = value.to_string(),
                "distance" => device.distance_cm = parse_num(value, key, line_no)?,
                "angle" => device.angle_deg = parse_num(value, key, line_no)?,
                "code_size" => device.code_size_cm = parse_num(value, key, line_no)?,
                "retries" => device.retries = parse_num(value, key, line_no)?,
                "battery" => device.battery = parse_num(value, key, line_no)?,
                _ => return Err(unknown()),
            }
        }
        Section::Models => match key {
            "latency" => {
                cfg.models.latency = parse_latency(value, line_no)?;
            }
            "voice" => cfg.models.voice_activation_ms = secs_to_ms(parse_num(value, key, line_no)?),
            "capture" => {
                cfg.models.capture_autofocus_ms = secs_to_ms(parse_num(value, key, line_no)?)
            }
            "decode" => cfg.models.qr_decode_ms = secs_to_ms(parse_num(value, key, line_no)?),
            "otp" => cfg.models.otp_generation_ms = secs_to_ms(parse_num(value, key, line_no)?),
            _ => return Err(unknown()),
        },
        Section::Timeline => unreachable!("timeline lines handled by the caller"),
    }
    Ok(())
}

/// Either a named profile or `mean,min,max,stddev` in milliseconds.
fn parse_latency(value: &str, line_no: usize) -> Result<LatencyModel, ScenarioError> {
    if let Some(model) = LatencyModel::by_name(value) {
        return Ok(model);
    }
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(parse_err(
            line_no,
            format!("latency must be a profile name or mean,min,max,stddev, got {value}"),
        ));
    }
    let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.parse::<f64>()).collect();
    let nums =
        nums.map_err(|_| parse_err(line_no, format!("latency values are not numbers: {value}")))?;
    LatencyModel::new("custom", nums[0], nums[1], nums[2], nums[3])
        .map_err(|e| parse_err(line_no, e.to_string()))
}

fn parse_timeline_line(line: &str, line_no: usize) -> Result<TimelineEntry, ScenarioError> {
    let mut words = line.split_whitespace();
    if words.next() != Some("at") {
        return Err(parse_err(
            line_no,
            "timeline lines start with `at <seconds>`",
        ));
    }
    let secs: f64 = words
        .next()
        .ok_or_else(|| parse_err(line_no, "missing time after `at`"))?
        .parse()
        .map_err(|_| parse_err(line_no, "time is not a number"))?;
    if secs < 0.0 {
        return Err(parse_err(line_no, "time must be non-negative"));
    }
    let verb = words
        .next()
        .ok_or_else(|| parse_err(line_no, "missing action verb"))?;
    let rest: Vec<&str> = words.collect();

    let kv = |key: &str| -> Option<String> {
        rest.iter()
            .find_map(|w| w.strip_prefix(&format!("{key}=")).map(str::to_string))
    };

    let action = match verb {
        "login" => {
            let tid = rest
                .first()
                .filter(|w| !w.contains('='))
                .ok_or_else(|| parse_err(line_no, "login needs a terminal id"))?;
            Action::Login {
                tid: tid.to_string(),
            }
        }
        "walk_away" => Action::WalkAway,
        "return" => Action::Return,
        "logout" => Action::Logout,
        "capture" => {
            let tid = rest
                .first()
                .filter(|w| !w.contains('='))
                .ok_or_else(|| parse_err(line_no, "capture needs a terminal id"))?;
            Action::Capture {
                tid: tid.to_string(),
            }
        }
        "replay" => {
            let count: u64 = kv("count")
                .ok_or_else(|| parse_err(line_no, "replay needs count=N"))?
                .parse()
                .map_err(|_| parse_err(line_no, "count is not a number"))?;
            let kind = match kv("kind").as_deref() {
                None | Some("request") => ReplayKind::Request,
                Some("payload") => ReplayKind::Payload,
                Some(other) => {
                    return Err(parse_err(
                        line_no,
                        format!("kind must be request or payload, got {other}"),
                    ))
                }
            };
            Action::Replay { kind, count }
        }
        "guess" => {
            let count: u64 = kv("count")
                .ok_or_else(|| parse_err(line_no, "guess needs count=N"))?
                .parse()
                .map_err(|_| parse_err(line_no, "count is not a number"))?;
            Action::Guess { count }
        }
        other => return Err(parse_err(line_no, format!("unknown action {other}"))),
    };

    Ok(TimelineEntry {
        at_ms: secs_to_ms(secs),
        action,
    })
}
