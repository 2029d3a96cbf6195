//! Client-side gateway exposing the OBC as named topics.
//!
//! Telemetry is decoded into [`TopicSample`]s and handed to subscribers in
//! receive order. Commands are encoded and relayed once per
//! [`CommandPublisher::publish_command`] call; resend cadence belongs to the
//! caller.

mod sync;
mod topics;

use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

use crate::nmea::{CodecError, OtterMessage};
use crate::transport::{DirectSender, Endpoint, Listener, TransportError};

pub use sync::{SyncedSample, Synchronizer, DEFAULT_SLOP};
pub use topics::{
    topic_samples, CogSog, GpsFix, GpsTime, ImuSample, TopicName, TopicPayload, TopicSample,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("command rejected: {0}")]
    Command(#[from] CodecError),
}

pub type Consumer = Box<dyn FnMut(&TopicSample) + Send>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubscriptionId(u64);

/// Decode and fan-out half of the gateway. Sans-IO: feed it lines with
/// their receive stamps.
#[derive(Default)]
pub struct Dispatcher {
    subs: Vec<(SubscriptionId, TopicName, Consumer)>,
    syncs: Vec<(Synchronizer, Sender<SyncedSample>)>,
    next_id: u64,
    decode_errors: u64,
    decoded: u64,
    last_error: Option<CodecError>,
}

impl Dispatcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&mut self, topic: TopicName, consumer: Consumer) -> Result<SubscriptionId, ClientError> {
        if topic.is_command() {
            return Err(ClientError::Usage(format!("{topic} is a command topic")));
        }
        let id = SubscriptionId(self.next_id);
        self.next_id += 1;
        self.subs.push((id, topic, consumer));
        Ok(id)
    }

    pub fn unsubscribe(&mut self, id: SubscriptionId) -> bool {
        let before = self.subs.len();
        self.subs.retain(|(sid, _, _)| *sid != id);
        before != self.subs.len()
    }

    /// Registers a synchronizer; matched samples arrive on the returned
    /// channel in pivot-stamp order.
    pub fn synchronize(&mut self, topics: &[TopicName], slop: f64) -> Result<Receiver<SyncedSample>, ClientError> {
        let sync = Synchronizer::new(topics, slop)?;
        let (tx, rx) = mpsc::channel();
        self.syncs.push((sync, tx));
        Ok(rx)
    }

    pub fn decode_errors(&self) -> u64 {
        self.decode_errors
    }

    pub fn decoded(&self) -> u64 {
        self.decoded
    }

    pub fn last_error(&self) -> Option<&CodecError> {
        self.last_error.as_ref()
    }

    /// Decodes one line and dispatches the resulting samples. Corrupt lines
    /// are counted, never fatal. Commands echoed onto the telemetry port are
    /// ignored.
    pub fn ingest(&mut self, line: &str, stamp: f64) -> Vec<TopicSample> {
        let msg = match OtterMessage::decode(line) {
            Ok(m) => m,
            Err(e) => {
                self.decode_errors += 1;
                log::debug!("dropping undecodable line {line:?}: {e}");
                self.last_error = Some(e);
                return Vec::new();
            }
        };
        self.decoded += 1;
        if msg.is_command() {
            return Vec::new();
        }
        let samples = topic_samples(&msg, stamp);
        for sample in &samples {
            self.dispatch(sample);
        }
        samples
    }

    /// Dispatches an already decoded sample (used by replay).
    pub fn dispatch(&mut self, sample: &TopicSample) {
        for (_, topic, consumer) in &mut self.subs {
            if *topic == sample.topic {
                consumer(sample);
            }
        }
        self.syncs.retain_mut(|(sync, tx)| match sync.push(sample) {
            Some(out) => tx.send(out).is_ok(),
            None => true,
        });
    }
}

/// Anything that can carry one encoded command line.
pub trait CommandSink {
    fn send_line(&mut self, line: &str) -> Result<(), TransportError>;
}

impl CommandSink for DirectSender {
    fn send_line(&mut self, line: &str) -> Result<(), TransportError> {
        self.send(line)
    }
}

impl<F: FnMut(&str) -> Result<(), TransportError>> CommandSink for F {
    fn send_line(&mut self, line: &str) -> Result<(), TransportError> {
        self(line)
    }
}

pub struct CommandPublisher<S> {
    sink: S,
    sent: u64,
}

impl<S: CommandSink> CommandPublisher<S> {
    pub fn new(sink: S) -> Self {
        Self { sink, sent: 0 }
    }

    /// Validates, encodes and sends exactly one datagram.
    pub fn publish_command(&mut self, topic: TopicName, payload: &TopicPayload) -> Result<OtterMessage, ClientError> {
        if !topic.is_command() {
            return Err(ClientError::Usage(format!("{topic} is not a command topic")));
        }
        if payload.topic() != topic {
            return Err(ClientError::Usage(format!(
                "payload for {} published on {topic}",
                payload.topic()
            )));
        }
        let msg = payload.to_command().expect("command topic payloads map to commands");
        let line = msg.encode()?;
        self.sink.send_line(&line)?;
        self.sent += 1;
        Ok(msg)
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn sink_mut(&mut self) -> &mut S {
        &mut self.sink
    }
}

/// UDP gateway: listens for telemetry and sends commands to the OBC.
/// Shareable across threads; consumers run on whichever thread calls
/// [`BackseatClient::spin_once`].
pub struct BackseatClient {
    listener: Listener,
    dispatcher: Mutex<Dispatcher>,
    publisher: Mutex<CommandPublisher<DirectSender>>,
}

impl BackseatClient {
    pub fn connect(telemetry: Endpoint, command: Endpoint) -> Result<Self, ClientError> {
        let listener = Listener::bind(telemetry.addr())?;
        let sender = DirectSender::open(command)?;
        Ok(Self {
            listener,
            dispatcher: Mutex::new(Dispatcher::new()),
            publisher: Mutex::new(CommandPublisher::new(sender)),
        })
    }

    pub fn connect_str(telemetry: &str, command: &str) -> Result<Self, ClientError> {
        Self::connect(Endpoint::parse(telemetry)?, Endpoint::parse(command)?)
    }

    pub fn telemetry_addr(&self) -> std::net::SocketAddr {
        self.listener.local_addr()
    }

    pub fn subscribe(&self, topic: TopicName, consumer: Consumer) -> Result<SubscriptionId, ClientError> {
        self.dispatcher.lock().expect("dispatcher poisoned").subscribe(topic, consumer)
    }

    pub fn synchronize(&self, topics: &[TopicName], slop: f64) -> Result<Receiver<SyncedSample>, ClientError> {
        self.dispatcher.lock().expect("dispatcher poisoned").synchronize(topics, slop)
    }

    pub fn publish_command(&self, topic: TopicName, payload: &TopicPayload) -> Result<OtterMessage, ClientError> {
        self.publisher.lock().expect("publisher poisoned").publish_command(topic, payload)
    }

    /// Receives for up to `timeout` and dispatches everything that arrived.
    /// Returns the decoded samples along with their raw lines.
    pub fn spin_once(&self, timeout: Duration) -> Result<Vec<(String, Vec<TopicSample>)>, ClientError> {
        let received = self.listener.poll(timeout)?;
        let mut d = self.dispatcher.lock().expect("dispatcher poisoned");
        Ok(received
            .into_iter()
            .map(|r| {
                let samples = d.ingest(&r.line, r.stamp);
                (r.line, samples)
            })
            .collect())
    }

    pub fn decode_errors(&self) -> u64 {
        self.dispatcher.lock().expect("dispatcher poisoned").decode_errors()
    }

    pub fn close(&self) {
        self.listener.close();
    }
}
