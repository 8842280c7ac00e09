//! Federate abstraction and the simulated-time executor.
//!
//! Federates never touch each other's state: they react to timers and
//! messages and return effects through a [`Ctx`]. Wire channels carry encoded
//! frames through a [`Link`]; local channels carry in-process messages with
//! zero latency (for example a controller reading its own HIL simulator).

use std::net::SocketAddr;

use super::clock::{FederateId, FederationClock};
use super::frame::{decode_frame, encode_frame, MessageFrame};
use super::link::{DropReason, Link, LinkDecision, LinkModel};

pub type ChannelId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload<L> {
    Frame(MessageFrame),
    Local(L),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect<L> {
    Send { channel: ChannelId, payload: Payload<L> },
    Timer { at: f64, key: u64 },
    /// Logged to the event log as an `action` row.
    Action { name: String, detail: String },
    Telemetry { stream: String, value: f64, unit: &'static str },
}

/// Handle given to a federate callback.
#[derive(Debug)]
pub struct Ctx<L> {
    now: f64,
    effects: Vec<Effect<L>>,
}

impl<L> Ctx<L> {
    pub fn new(now: f64) -> Self {
        Ctx { now, effects: Vec::new() }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn send(&mut self, channel: ChannelId, frame: MessageFrame) {
        self.effects.push(Effect::Send { channel, payload: Payload::Frame(frame) });
    }

    pub fn send_local(&mut self, channel: ChannelId, msg: L) {
        self.effects.push(Effect::Send { channel, payload: Payload::Local(msg) });
    }

    /// Schedules `on_timer(key)` at `at`; times before `now` are clamped.
    pub fn timer(&mut self, at: f64, key: u64) {
        self.effects.push(Effect::Timer { at: at.max(self.now), key });
    }

    pub fn action(&mut self, name: &str, detail: impl Into<String>) {
        self.effects.push(Effect::Action { name: name.to_string(), detail: detail.into() });
    }

    pub fn telemetry(&mut self, stream: impl Into<String>, value: f64, unit: &'static str) {
        self.effects.push(Effect::Telemetry { stream: stream.into(), value, unit });
    }

    pub fn into_effects(self) -> Vec<Effect<L>> {
        self.effects
    }
}

pub trait Federate<L>: Send {
    fn id(&self) -> FederateId;
    fn name(&self) -> &str;
    fn init(&mut self, ctx: &mut Ctx<L>) -> Result<(), String>;
    fn on_timer(&mut self, key: u64, ctx: &mut Ctx<L>);
    fn on_message(&mut self, channel: ChannelId, payload: Payload<L>, ctx: &mut Ctx<L>);
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelKind {
    /// Frames travel encoded through a link model; `addr` is the listen
    /// address used in realtime mode (`None` picks an ephemeral port).
    Wire { link: LinkModel, addr: Option<SocketAddr> },
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub name: String,
    pub from: FederateId,
    pub to: FederateId,
    pub kind: ChannelKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Send,
    Recv,
    Drop,
    Action,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Send => "send",
            Direction::Recv => "recv",
            Direction::Drop => "drop",
            Direction::Action => "action",
        }
    }
}

/// One event-log row; `text` is a canonical frame or an action description.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub time: f64,
    pub channel: String,
    pub direction: Direction,
    pub text: String,
}

/// Destination for event-log rows and telemetry samples.
pub trait Recorder {
    fn event(&mut self, row: EventRow);
    fn telemetry(&mut self, time: f64, stream: &str, value: f64, unit: &'static str);
}

/// Recorder that keeps everything in memory.
#[derive(Debug, Default, Clone)]
pub struct MemoryRecorder {
    pub events: Vec<EventRow>,
    pub samples: Vec<(f64, String, f64, &'static str)>,
}

impl Recorder for MemoryRecorder {
    fn event(&mut self, row: EventRow) {
        self.events.push(row);
    }
    fn telemetry(&mut self, time: f64, stream: &str, value: f64, unit: &'static str) {
        self.samples.push((time, stream.to_string(), value, unit));
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RunError {
    #[error("federate `{federate}` failed to initialize: {msg}")]
    Init { federate: String, msg: String },
    #[error("federate `{federate}` sent on channel {channel}, which it does not own")]
    Channel { federate: String, channel: ChannelId },
    #[error("federate `{federate}` sent a local message on wire channel `{channel}`")]
    LocalOnWire { federate: String, channel: String },
    #[error("duplicate federate id {0:?}")]
    DuplicateId(FederateId),
    #[error("channel `{channel}` names unknown federate {federate:?}")]
    UnknownFederate { channel: String, federate: FederateId },
    #[error("frame on channel `{channel}` failed to decode: {msg}")]
    Decode { channel: String, msg: String },
    #[error("transport failure: {0}")]
    Transport(String),
}

pub(crate) fn check_wiring<L>(
    federates: &[Box<dyn Federate<L>>],
    channels: &[ChannelSpec],
) -> Result<(), RunError> {
    let mut ids: Vec<FederateId> = federates.iter().map(|f| f.id()).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(RunError::DuplicateId(w[0]));
    }
    for ch in channels {
        for end in [ch.from, ch.to] {
            if ids.binary_search(&end).is_err() {
                return Err(RunError::UnknownFederate { channel: ch.name.clone(), federate: end });
            }
        }
    }
    Ok(())
}

enum Action<L> {
    Timer { key: u64 },
    Deliver { channel: ChannelId, payload: Delivered<L> },
}

enum Delivered<L> {
    Bytes(Vec<u8>),
    Local(L),
}

/// Runs all federates in simulated time until `until` (inclusive).
pub fn run_simulated<L>(
    mut federates: Vec<Box<dyn Federate<L>>>,
    channels: &[ChannelSpec],
    until: f64,
    recorder: &mut dyn Recorder,
) -> Result<(), RunError> {
    check_wiring(&federates, channels)?;
    federates.sort_by_key(|f| f.id());
    let index_of = |id: FederateId, feds: &[Box<dyn Federate<L>>]| {
        feds.binary_search_by_key(&id, |f| f.id()).expect("wiring checked")
    };
    let mut links: Vec<Option<Link>> = channels
        .iter()
        .map(|c| match &c.kind {
            ChannelKind::Wire { link, .. } => Some(Link::new(link.clone())),
            ChannelKind::Local => None,
        })
        .collect();
    let is_wire: Vec<bool> = links.iter().map(Option::is_some).collect();
    let mut clock: FederationClock<Action<L>> = FederationClock::new();

    let mut dispatch = |fed: &dyn Federate<L>,
                        effects: Vec<Effect<L>>,
                        now: f64,
                        clock: &mut FederationClock<Action<L>>,
                        recorder: &mut dyn Recorder|
     -> Result<(), RunError> {
        for effect in effects {
            match effect {
                Effect::Timer { at, key } => {
                    clock.schedule(at, fed.id(), Action::Timer { key }).expect("timer clamped to now");
                }
                Effect::Action { name, detail } => recorder.event(EventRow {
                    time: now,
                    channel: fed.name().to_string(),
                    direction: Direction::Action,
                    text: if detail.is_empty() { name } else { format!("{name}|{detail}") },
                }),
                Effect::Telemetry { stream, value, unit } => recorder.telemetry(now, &stream, value, unit),
                Effect::Send { channel, payload } => {
                    let spec = channels
                        .get(channel)
                        .filter(|c| c.from == fed.id())
                        .ok_or_else(|| RunError::Channel { federate: fed.name().to_string(), channel })?;
                    match (payload, links[channel].as_mut()) {
                        (Payload::Frame(frame), Some(link)) => {
                            let bytes = encode_frame(&frame);
                            let text = frame.canonical();
                            recorder.event(EventRow {
                                time: now,
                                channel: spec.name.clone(),
                                direction: Direction::Send,
                                text: text.clone(),
                            });
                            match link.send(now) {
                                LinkDecision::Deliver { at, .. } => {
                                    let action = Action::Deliver { channel, payload: Delivered::Bytes(bytes) };
                                    clock.schedule(at, spec.to, action).expect("delivery after send");
                                }
                                LinkDecision::Drop(reason) => recorder.event(EventRow {
                                    time: now,
                                    channel: spec.name.clone(),
                                    direction: Direction::Drop,
                                    text: match reason {
                                        DropReason::Severed => format!("{text}|reason=severed"),
                                        DropReason::Random => format!("{text}|reason=random"),
                                    },
                                }),
                            }
                        }
                        (Payload::Frame(frame), None) => {
                            // local channels may still carry frames, undelayed and unlogged
                            let bytes = encode_frame(&frame);
                            let action = Action::Deliver { channel, payload: Delivered::Bytes(bytes) };
                            clock.schedule(now, spec.to, action).expect("now");
                        }
                        (Payload::Local(msg), None) => {
                            let action = Action::Deliver { channel, payload: Delivered::Local(msg) };
                            clock.schedule(now, spec.to, action).expect("now");
                        }
                        (Payload::Local(_), Some(_)) => {
                            return Err(RunError::LocalOnWire {
                                federate: fed.name().to_string(),
                                channel: spec.name.clone(),
                            })
                        }
                    }
                }
            }
        }
        Ok(())
    };

    for fed in federates.iter_mut() {
        let mut ctx = Ctx::new(0.0);
        fed.init(&mut ctx)
            .map_err(|msg| RunError::Init { federate: fed.name().to_string(), msg })?;
        dispatch(fed.as_ref(), ctx.into_effects(), 0.0, &mut clock, recorder)?;
    }

    while let Some(t) = clock.peek_time() {
        if t > until {
            break;
        }
        let (now, fid, action) = clock.pop().expect("peeked");
        let idx = index_of(fid, &federates);
        let fed = &mut federates[idx];
        let mut ctx = Ctx::new(now);
        match action {
            Action::Timer { key } => fed.on_timer(key, &mut ctx),
            Action::Deliver { channel, payload } => {
                let payload = match payload {
                    Delivered::Local(msg) => Payload::Local(msg),
                    Delivered::Bytes(bytes) => {
                        let frame = decode_frame(&bytes).map_err(|e| RunError::Decode {
                            channel: channels[channel].name.clone(),
                            msg: e.to_string(),
                        })?;
                        if is_wire[channel] {
                            recorder.event(EventRow {
                                time: now,
                                channel: channels[channel].name.clone(),
                                direction: Direction::Recv,
                                text: frame.canonical(),
                            });
                        }
                        Payload::Frame(frame)
                    }
                };
                fed.on_message(channel, payload, &mut ctx);
            }
        }
        dispatch(fed.as_ref(), ctx.into_effects(), now, &mut clock, recorder)?;
    }
    Ok(())
}
