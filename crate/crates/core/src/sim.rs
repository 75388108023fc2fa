//! Deterministic discrete-event engine: virtual clock, ordered event queue,
//! seeded random streams and an optional event trace.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::Write;
use std::ops::{Add, AddAssign, Sub};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::SimError;

/// Simulated time in integer nanoseconds.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    /// Rounds to the nearest nanosecond.
    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs * 1e9).round() as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 * 1e-3
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Scales a duration by a real factor, rounding to the nearest nanosecond.
    pub fn mul_f64(self, k: f64) -> SimTime {
        SimTime((self.0 as f64 * k).round() as u64)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl std::ops::Mul<u64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: u64) -> SimTime {
        SimTime(self.0 * rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Time to clock `bytes` onto a link of `bw_bps`, rounded up to a whole nanosecond.
pub fn serialization_time(bytes: u32, bw_bps: u64) -> SimTime {
    debug_assert!(bw_bps > 0);
    let bits = bytes as u128 * 8 * 1_000_000_000;
    let bw = bw_bps as u128;
    SimTime(bits.div_ceil(bw) as u64)
}

/// Event categories, used for tracing and bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    PacketArrival,
    TransmitComplete,
    WindowTick,
    AppMessageArrival,
    Timer,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PacketArrival => "PacketArrival",
            EventKind::TransmitComplete => "TransmitComplete",
            EventKind::WindowTick => "WindowTick",
            EventKind::AppMessageArrival => "AppMessageArrival",
            EventKind::Timer => "Timer",
        }
    }
}

/// Payload carried by an engine event.
pub trait EventPayload {
    fn kind(&self) -> EventKind;
    /// Free-form description written to the trace.
    fn detail(&self) -> String;
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: P,
}

// BinaryHeap is a max-heap; invert so the smallest (fire_at, seq) pops first.
impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}
impl<P> Eq for Event<P> {}
impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Event<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub events_processed: u64,
    pub clock: SimTime,
}

/// Where the event trace goes.
pub enum TraceSink {
    Off,
    /// Hash every trace line without keeping it.
    Hash,
    /// Hash and also write tab-separated lines to `writer`.
    Writer(Box<dyn Write + Send>),
}

struct Tracer {
    sink: TraceSink,
    hasher: Option<Sha256>,
    line: String,
}

impl Tracer {
    fn new(sink: TraceSink) -> Self {
        let hasher = match sink {
            TraceSink::Off => None,
            _ => Some(Sha256::new()),
        };
        Tracer {
            sink,
            hasher,
            line: String::new(),
        }
    }

    fn record<P: EventPayload>(&mut self, ev: &Event<P>) -> Result<(), SimError> {
        let Some(hasher) = self.hasher.as_mut() else {
            return Ok(());
        };
        use std::fmt::Write as _;
        self.line.clear();
        let _ = writeln!(
            self.line,
            "{}\t{}\t{}\t{}",
            ev.fire_at,
            ev.seq,
            ev.payload.kind().as_str(),
            ev.payload.detail()
        );
        hasher.update(self.line.as_bytes());
        if let TraceSink::Writer(w) = &mut self.sink {
            w.write_all(self.line.as_bytes())?;
        }
        Ok(())
    }
}

/// Single-threaded event engine. Each simulation run owns one.
pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Event<P>>,
    processed: u64,
    tracer: Tracer,
}

impl<P: EventPayload> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: EventPayload> Engine<P> {
    pub fn new() -> Self {
        Self::with_trace(TraceSink::Off)
    }

    pub fn with_trace(sink: TraceSink) -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            processed: 0,
            tracer: Tracer::new(sink),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Total events processed over the engine's lifetime.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Enqueues an event. Scheduling before the current clock is an error.
    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> Result<u64, SimError> {
        if fire_at < self.now {
            return Err(SimError::ScheduleInPast {
                at: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event {
            fire_at,
            seq,
            payload,
        });
        Ok(seq)
    }

    /// Schedules `delay` after the current clock; cannot fail.
    pub fn schedule_in(&mut self, delay: SimTime, payload: P) -> u64 {
        let at = self.now + delay;
        self.schedule(at, payload)
            .expect("relative schedule is never in the past")
    }

    pub fn pending(&self) -> impl Iterator<Item = &Event<P>> {
        self.queue.iter()
    }

    pub fn pending_len(&self) -> usize {
        self.queue.len()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|e| e.fire_at)
    }

    /// Processes every event with `fire_at <= end`, in `(fire_at, seq)` order.
    /// The handler may schedule further events and returns `false` to stop early.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> Result<RunSummary, SimError>
    where
        F: FnMut(&mut Engine<P>, Event<P>) -> Result<bool, SimError>,
    {
        let mut count = 0;
        while let Some(head) = self.queue.peek() {
            if head.fire_at > end {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            debug_assert!(ev.fire_at >= self.now, "clock went backwards");
            self.now = ev.fire_at;
            self.tracer.record(&ev)?;
            count += 1;
            self.processed += 1;
            if !handler(self, ev)? {
                break;
            }
        }
        if let TraceSink::Writer(w) = &mut self.tracer.sink {
            w.flush()?;
        }
        Ok(RunSummary {
            events_processed: count,
            clock: self.now,
        })
    }

    /// Hex SHA-256 of all trace lines so far; `None` when tracing is off.
    pub fn trace_hash(&self) -> Option<String> {
        self.tracer
            .hasher
            .as_ref()
            .map(|h| hex::encode(h.clone().finalize()))
    }
}

/// Named RNG stream ids; one per stochastic consumer so that adding a
/// consumer does not perturb the draws of any other.
pub mod streams {
    pub const SPRAY: u64 = 1;
    pub const SIZES: u64 = 2;
    pub const ARRIVALS: u64 = 3;
    pub const RED: u64 = 4;
    pub const SENDER_DROP: u64 = 5;
    pub const RECEIVERS: u64 = 6;
}

/// A reproducible random stream keyed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
