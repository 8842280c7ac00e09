//! Wall-clock executor.
//!
//! Each federate runs on its own thread and sees simulation time as elapsed
//! wall time multiplied by `speedup`. Wire channels are real TCP streams on
//! the configured addresses carrying newline-delimited canonical frames; a
//! per-channel link thread holds each frame until its sampled delivery time.
//! Local channels are in-process queues.

use std::collections::BinaryHeap;
use std::cmp::Reverse;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::clock::FederateId;
use super::frame::{decode_frame, encode_frame};
use super::link::{DropReason, Link, LinkDecision};
use super::runtime::{
    check_wiring, ChannelId, ChannelKind, ChannelSpec, Ctx, Direction, Effect, EventRow, Federate,
    Payload, Recorder, RunError,
};

#[derive(Debug, Clone, Copy)]
struct Pace {
    start: Instant,
    speedup: f64,
}

impl Pace {
    fn sim_now(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * self.speedup
    }

    fn wall_at(&self, sim: f64) -> Instant {
        self.start + Duration::from_secs_f64((sim / self.speedup).max(0.0))
    }

    fn sleep_until(&self, sim: f64) {
        let target = self.wall_at(sim);
        let now = Instant::now();
        if target > now {
            thread::sleep(target - now);
        }
    }
}

type Inbox<L> = Sender<(ChannelId, Payload<L>)>;
type SharedRecorder = Arc<Mutex<dyn Recorder + Send>>;

enum Outlet<L> {
    Wire(Sender<(f64, Vec<u8>, String)>),
    Local(Inbox<L>),
}

/// Runs the federation against the wall clock until simulation time `until`.
pub fn run_realtime<L: Send + 'static>(
    federates: Vec<Box<dyn Federate<L>>>,
    channels: &[ChannelSpec],
    until: f64,
    speedup: f64,
    recorder: SharedRecorder,
) -> Result<(), RunError> {
    check_wiring(&federates, channels)?;
    if !(speedup > 0.0) {
        return Err(RunError::Transport(format!("speedup must be positive, got {speedup}")));
    }

    let mut inboxes: Vec<(FederateId, Inbox<L>, Receiver<(ChannelId, Payload<L>)>)> = federates
        .iter()
        .map(|f| {
            let (tx, rx) = mpsc::channel();
            (f.id(), tx, rx)
        })
        .collect();
    let inbox_of = |id: FederateId, boxes: &[(FederateId, Inbox<L>, Receiver<_>)]| {
        boxes.iter().find(|b| b.0 == id).map(|b| b.1.clone()).expect("wiring checked")
    };

    // Bind every wire listener before anything starts so connects succeed.
    let mut listeners = Vec::new();
    for (id, ch) in channels.iter().enumerate() {
        if let ChannelKind::Wire { addr, .. } = &ch.kind {
            let addr = addr.unwrap_or_else(|| SocketAddr::from(([127, 0, 0, 1], 0)));
            let listener = TcpListener::bind(addr)
                .map_err(|e| RunError::Transport(format!("bind {addr} for `{}`: {e}", ch.name)))?;
            listeners.push((id, listener));
        }
    }

    let pace = Pace { start: Instant::now(), speedup };
    let mut handles = Vec::new();
    let mut outlets: Vec<Option<Outlet<L>>> = (0..channels.len()).map(|_| None).collect();

    for (id, listener) in listeners {
        let ch = channels[id].clone();
        let ChannelKind::Wire { link, .. } = ch.kind.clone() else { unreachable!() };
        let local = listener.local_addr().map_err(|e| RunError::Transport(e.to_string()))?;

        // receiving end
        let inbox = inbox_of(ch.to, &inboxes);
        let rec = recorder.clone();
        let name = ch.name.clone();
        handles.push(thread::spawn(move || {
            let Ok((stream, _)) = listener.accept() else { return };
            for line in BufReader::new(stream).lines() {
                let Ok(line) = line else { break };
                match decode_frame(line.as_bytes()) {
                    Ok(frame) => {
                        rec.lock().unwrap().event(EventRow {
                            time: pace.sim_now(),
                            channel: name.clone(),
                            direction: Direction::Recv,
                            text: frame.canonical(),
                        });
                        if inbox.send((id, Payload::Frame(frame))).is_err() {
                            break;
                        }
                    }
                    Err(e) => log::warn!("channel `{name}`: undecodable frame: {e}"),
                }
            }
        }));

        // sending end: link model plus delayed write
        let stream = TcpStream::connect(local)
            .map_err(|e| RunError::Transport(format!("connect `{}`: {e}", ch.name)))?;
        let (tx, rx) = mpsc::channel::<(f64, Vec<u8>, String)>();
        outlets[id] = Some(Outlet::Wire(tx));
        let rec = recorder.clone();
        let name = ch.name.clone();
        handles.push(thread::spawn(move || {
            let mut stream = stream;
            let mut link = Link::new(link);
            for (sent, bytes, text) in rx {
                match link.send(sent) {
                    LinkDecision::Deliver { at, .. } => {
                        pace.sleep_until(at);
                        if stream.write_all(&bytes).is_err() {
                            break;
                        }
                    }
                    LinkDecision::Drop(reason) => {
                        let why = if reason == DropReason::Severed { "severed" } else { "random" };
                        rec.lock().unwrap().event(EventRow {
                            time: sent,
                            channel: name.clone(),
                            direction: Direction::Drop,
                            text: format!("{text}|reason={why}"),
                        });
                    }
                }
            }
        }));
    }
    for (id, ch) in channels.iter().enumerate() {
        if ch.kind == ChannelKind::Local {
            outlets[id] = Some(Outlet::Local(inbox_of(ch.to, &inboxes)));
        }
    }

    let outlets = Arc::new(outlets);
    let channels: Arc<Vec<ChannelSpec>> = Arc::new(channels.to_vec());
    let (err_tx, err_rx) = mpsc::channel::<RunError>();
    let mut fed_handles = Vec::new();
    for mut fed in federates {
        let pos = inboxes.iter().position(|b| b.0 == fed.id()).expect("inbox");
        let (_, _, rx) = inboxes.swap_remove(pos);
        let outlets = outlets.clone();
        let channels = channels.clone();
        let rec = recorder.clone();
        let err_tx = err_tx.clone();
        fed_handles.push(thread::spawn(move || {
            let mut timers: BinaryHeap<Reverse<(TimeKey, u64, u64)>> = BinaryHeap::new();
            let mut seq = 0u64;
            let mut apply = |fed: &dyn Federate<L>,
                             effects: Vec<Effect<L>>,
                             now: f64,
                             timers: &mut BinaryHeap<Reverse<(TimeKey, u64, u64)>>|
             -> Result<(), RunError> {
                for effect in effects {
                    match effect {
                        Effect::Timer { at, key } => {
                            timers.push(Reverse((TimeKey(at), seq, key)));
                            seq += 1;
                        }
                        Effect::Action { name, detail } => rec.lock().unwrap().event(EventRow {
                            time: now,
                            channel: fed.name().to_string(),
                            direction: Direction::Action,
                            text: if detail.is_empty() { name } else { format!("{name}|{detail}") },
                        }),
                        Effect::Telemetry { stream, value, unit } => {
                            rec.lock().unwrap().telemetry(now, &stream, value, unit)
                        }
                        Effect::Send { channel, payload } => {
                            let spec = channels.get(channel).filter(|c| c.from == fed.id()).ok_or_else(|| {
                                RunError::Channel { federate: fed.name().to_string(), channel }
                            })?;
                            match (&outlets[channel], payload) {
                                (Some(Outlet::Wire(tx)), Payload::Frame(frame)) => {
                                    let text = frame.canonical();
                                    rec.lock().unwrap().event(EventRow {
                                        time: now,
                                        channel: spec.name.clone(),
                                        direction: Direction::Send,
                                        text: text.clone(),
                                    });
                                    let _ = tx.send((now, encode_frame(&frame), text));
                                }
                                (Some(Outlet::Local(tx)), payload) => {
                                    let _ = tx.send((channel, payload));
                                }
                                (Some(Outlet::Wire(_)), Payload::Local(_)) => {
                                    return Err(RunError::LocalOnWire {
                                        federate: fed.name().to_string(),
                                        channel: spec.name.clone(),
                                    })
                                }
                                (None, _) => unreachable!("every channel has an outlet"),
                            }
                        }
                    }
                }
                Ok(())
            };

            let mut ctx = Ctx::new(0.0);
            if let Err(msg) = fed.init(&mut ctx) {
                let _ = err_tx.send(RunError::Init { federate: fed.name().to_string(), msg });
                return;
            }
            if let Err(e) = apply(fed.as_ref(), ctx.into_effects(), 0.0, &mut timers) {
                let _ = err_tx.send(e);
                return;
            }
            let mut last_now = 0.0f64;
            let mut inbox_open = true;
            loop {
                let next_timer = timers.peek().map(|Reverse((t, _, _))| t.0);
                let horizon = next_timer.unwrap_or(f64::INFINITY).min(until);
                let wait = pace.wall_at(horizon).saturating_duration_since(Instant::now());
                let received = if inbox_open {
                    rx.recv_timeout(wait)
                } else {
                    // nobody can send to us any more; behave as a pure timer task
                    thread::sleep(wait);
                    Err(RecvTimeoutError::Timeout)
                };
                let result = match received {
                    Ok((channel, payload)) => {
                        let now = pace.sim_now().max(last_now).min(until);
                        last_now = now;
                        let mut ctx = Ctx::new(now);
                        fed.on_message(channel, payload, &mut ctx);
                        apply(fed.as_ref(), ctx.into_effects(), now, &mut timers)
                    }
                    Err(RecvTimeoutError::Timeout) => match next_timer {
                        Some(t) if t <= until => {
                            let Reverse((_, _, key)) = timers.pop().expect("peeked");
                            let now = t.max(last_now);
                            last_now = now;
                            let mut ctx = Ctx::new(now);
                            fed.on_timer(key, &mut ctx);
                            apply(fed.as_ref(), ctx.into_effects(), now, &mut timers)
                        }
                        _ => break,
                    },
                    Err(RecvTimeoutError::Disconnected) => {
                        inbox_open = false;
                        Ok(())
                    }
                };
                if let Err(e) = result {
                    let _ = err_tx.send(e);
                    break;
                }
            }
        }));
    }
    drop(err_tx);
    drop(inboxes);

    for h in fed_handles {
        h.join().map_err(|_| RunError::Transport("federate thread panicked".into()))?;
    }
    // Federate threads own the last outlet handles; once they are gone the
    // link threads drain, close their streams and the readers see EOF.
    drop(outlets);
    for h in handles {
        let _ = h.join();
    }
    match err_rx.recv() {
        Ok(e) => Err(e),
        Err(_) => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TimeKey(f64);
impl Eq for TimeKey {}
impl PartialOrd for TimeKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for TimeKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::link::{Latency, LinkModel};
    use crate::federation::runtime::MemoryRecorder;
    use crate::federation::MessageFrame;

    struct Ticker;
    struct Sink(Arc<Mutex<Vec<f64>>>);

    impl Federate<()> for Ticker {
        fn id(&self) -> FederateId {
            FederateId(0)
        }
        fn name(&self) -> &str {
            "ticker"
        }
        fn init(&mut self, ctx: &mut Ctx<()>) -> Result<(), String> {
            ctx.timer(0.0, 0);
            Ok(())
        }
        fn on_timer(&mut self, key: u64, ctx: &mut Ctx<()>) {
            ctx.send(0, MessageFrame::PvdResponse { exec_time: ctx.now(), q_resp: key as f64 });
            ctx.timer((key + 1) as f64, key + 1);
        }
        fn on_message(&mut self, _: ChannelId, _: Payload<()>, _: &mut Ctx<()>) {}
    }

    impl Federate<()> for Sink {
        fn id(&self) -> FederateId {
            FederateId(1)
        }
        fn name(&self) -> &str {
            "sink"
        }
        fn init(&mut self, _: &mut Ctx<()>) -> Result<(), String> {
            Ok(())
        }
        fn on_timer(&mut self, _: u64, _: &mut Ctx<()>) {}
        fn on_message(&mut self, _: ChannelId, payload: Payload<()>, _: &mut Ctx<()>) {
            if let Payload::Frame(MessageFrame::PvdResponse { q_resp, .. }) = payload {
                self.0.lock().unwrap().push(q_resp);
            }
        }
    }

    #[test]
    fn frames_cross_tcp_in_order() {
        let got = Arc::new(Mutex::new(Vec::new()));
        let feds: Vec<Box<dyn Federate<()>>> = vec![Box::new(Ticker), Box::new(Sink(got.clone()))];
        let link = LinkModel::new(Latency::Fixed(0.5), 0.0, vec![], 0).unwrap();
        let channels = vec![ChannelSpec {
            name: "tick".into(),
            from: FederateId(0),
            to: FederateId(1),
            kind: ChannelKind::Wire { link, addr: None },
        }];
        let rec: Arc<Mutex<MemoryRecorder>> = Arc::new(Mutex::new(MemoryRecorder::default()));
        // 10 simulated seconds at 50x: 0.2 s of wall time
        run_realtime(feds, &channels, 10.0, 50.0, rec.clone()).unwrap();
        let got = got.lock().unwrap().clone();
        assert!(got.len() >= 8, "{got:?}");
        assert!(got.windows(2).all(|w| w[1] == w[0] + 1.0));
        let sends = rec.lock().unwrap().events.iter().filter(|e| e.direction == Direction::Send).count();
        assert!(sends >= got.len());
    }
}
