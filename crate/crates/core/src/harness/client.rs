use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use futures::{SinkExt, StreamExt};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tokio::time::{sleep_until, Duration, Instant};
use tokio_tungstenite::tungstenite::Message;

use super::shaper::{NetworkProfile, NetworkShaper};
use super::HarnessError;
use crate::clock::{Clock, Millis};
use crate::protocol::{
    decode_control, decode_pose, encode_control, encode_pose, Control, ControlMessage, PosePacket, Replica, Role,
};
use crate::server::HEARTBEAT_INTERVAL_MS;

/// One received control message, stamped on delivery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub at: Millis,
    pub seq: u64,
    pub body: Control,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaneTotals {
    pub bytes: u64,
    pub frames: u64,
}

impl PlaneTotals {
    fn add(&mut self, bytes: usize) {
        self.bytes += bytes as u64;
        self.frames += 1;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientCounters {
    pub control_in: PlaneTotals,
    pub control_out: PlaneTotals,
    pub pose_in: PlaneTotals,
    pub pose_out: PlaneTotals,
    /// Pose frames discarded by the link shaper.
    pub pose_dropped: u64,
    pub undecodable: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JoinStatus {
    Pending,
    Accepted(u16),
    Rejected(String),
    Gone,
}

/// Everything a client has observed so far.
#[derive(Debug, Clone)]
pub struct ClientView {
    pub name: String,
    pub role: Role,
    pub connection_id: Option<u64>,
    pub replica: Replica,
    pub log: Vec<LogEntry>,
    pub counters: ClientCounters,
    pub room_created: Option<Control>,
    pub disconnected: bool,
}

impl ClientView {
    pub fn participant_id(&self) -> Option<u16> {
        self.replica.participant_id
    }
}

type Outbound = (Instant, Message);

struct Outlet {
    view: Arc<Mutex<ClientView>>,
    egress: mpsc::UnboundedSender<Outbound>,
    shaper: Mutex<NetworkShaper>,
    next_seq: Mutex<u64>,
    closing: AtomicBool,
}

impl Outlet {
    fn push(&self, msg: Message) -> Result<(), HarnessError> {
        if self.closing.load(Ordering::Acquire) {
            return Err(HarnessError::Disconnected(self.view.lock().name.clone()));
        }
        let at = self.shaper.lock().schedule(Instant::now());
        self.egress.send((at, msg)).map_err(|_| HarnessError::Disconnected(self.view.lock().name.clone()))
    }

    fn send_control(&self, body: Control) -> Result<(), HarnessError> {
        let seq = {
            let mut next = self.next_seq.lock();
            *next += 1;
            *next - 1
        };
        let text = encode_control(&ControlMessage::new(seq, body));
        self.view.lock().counters.control_out.add(text.len());
        self.push(Message::text(text))
    }
}

/// A scripted participant talking to the server over a real websocket,
/// behind a [`NetworkShaper`] in each direction.
pub struct SyntheticClient {
    view: Arc<Mutex<ClientView>>,
    outlet: Arc<Outlet>,
    join: watch::Receiver<JoinStatus>,
    tasks: Vec<JoinHandle<()>>,
}

impl SyntheticClient {
    pub async fn connect(
        url: &str,
        name: impl Into<String>,
        role: Role,
        profile: NetworkProfile,
        seed: u64,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, HarnessError> {
        let (socket, _) = tokio_tungstenite::connect_async(url)
            .await
            .map_err(|e| HarnessError::Connect(format!("{url}: {e}")))?;
        let (mut sink, mut stream) = socket.split();
        let view = Arc::new(Mutex::new(ClientView {
            name: name.into(),
            role,
            connection_id: None,
            replica: Replica::new(),
            log: Vec::new(),
            counters: ClientCounters::default(),
            room_created: None,
            disconnected: false,
        }));
        let (join_tx, join) = watch::channel(JoinStatus::Pending);
        let (egress, mut outbound) = mpsc::unbounded_channel::<Outbound>();
        let (inbound_tx, mut inbound) = mpsc::unbounded_channel::<(Instant, Message)>();
        let mut ingress_shaper = NetworkShaper::new(profile, seed ^ 0x9e37_79b9_7f4a_7c15);

        let writer = tokio::spawn(async move {
            while let Some((at, msg)) = outbound.recv().await {
                sleep_until(at).await;
                let closing = matches!(msg, Message::Close(_));
                if sink.send(msg).await.is_err() || closing {
                    break;
                }
            }
            let _ = sink.close().await;
        });

        let reader_view = view.clone();
        let reader = tokio::spawn(async move {
            while let Some(frame) = stream.next().await {
                let Ok(msg) = frame else { break };
                let at = ingress_shaper.schedule(Instant::now());
                match msg {
                    Message::Binary(_) if ingress_shaper.drop_pose() => {
                        reader_view.lock().counters.pose_dropped += 1;
                    }
                    Message::Text(_) | Message::Binary(_) | Message::Close(_) => {
                        let closing = matches!(msg, Message::Close(_));
                        if inbound_tx.send((at, msg)).is_err() || closing {
                            break;
                        }
                    }
                    _ => {}
                }
            }
        });

        let apply_view = view.clone();
        let applier = tokio::spawn(async move {
            while let Some((at, msg)) = inbound.recv().await {
                sleep_until(at).await;
                let mut view = apply_view.lock();
                match msg {
                    Message::Text(text) => {
                        view.counters.control_in.add(text.len());
                        match decode_control(text.as_bytes()) {
                            Ok(ControlMessage { seq, body }) => {
                                match &body {
                                    Control::Hello { connection_id } => view.connection_id = Some(*connection_id),
                                    Control::RoomCreated { .. } => view.room_created = Some(body.clone()),
                                    Control::JoinAccepted { participant_id, .. } => {
                                        let _ = join_tx.send(JoinStatus::Accepted(*participant_id));
                                    }
                                    Control::JoinRejected { reason } => {
                                        let _ = join_tx.send(JoinStatus::Rejected(reason.clone()));
                                    }
                                    _ => {}
                                }
                                view.replica.apply_control(&body);
                                let at = clock.now_ms();
                                view.log.push(LogEntry { at, seq, body });
                            }
                            Err(_) => view.counters.undecodable += 1,
                        }
                    }
                    Message::Binary(bytes) => {
                        view.counters.pose_in.add(bytes.len());
                        match decode_pose(&bytes) {
                            Ok(packet) => view.replica.apply_pose(&packet),
                            Err(_) => view.counters.undecodable += 1,
                        }
                    }
                    _ => break,
                }
            }
            apply_view.lock().disconnected = true;
            join_tx.send_if_modified(|status| {
                let pending = *status == JoinStatus::Pending;
                if pending {
                    *status = JoinStatus::Gone;
                }
                pending
            });
        });

        let outlet = Arc::new(Outlet {
            view: view.clone(),
            egress,
            shaper: Mutex::new(NetworkShaper::new(profile, seed)),
            next_seq: Mutex::new(0),
            closing: AtomicBool::new(false),
        });
        let beat_outlet = outlet.clone();
        let beat = tokio::spawn(async move {
            let mut interval = tokio::time::interval(Duration::from_millis(HEARTBEAT_INTERVAL_MS));
            interval.tick().await;
            loop {
                interval.tick().await;
                if beat_outlet.send_control(Control::Heartbeat).is_err() {
                    break;
                }
            }
        });
        let client = Self { view, outlet, join, tasks: vec![writer, reader, applier, beat] };
        Ok(client)
    }

    pub fn name(&self) -> String {
        self.view.lock().name.clone()
    }

    pub fn send_control(&self, body: Control) -> Result<(), HarnessError> {
        self.outlet.send_control(body)
    }

    /// Sends a pose and applies it locally at once, exactly as the server
    /// will store it after decoding.
    pub fn send_pose(&self, packet: &PosePacket) -> Result<(), HarnessError> {
        let bytes = encode_pose(packet);
        {
            let mut view = self.view.lock();
            view.counters.pose_out.add(bytes.len());
            if let Ok(normalized) = decode_pose(&bytes) {
                view.replica.apply_pose(&normalized);
            }
        }
        self.outlet.push(Message::binary(bytes))
    }

    /// Sends a join request and waits for the verdict.
    pub async fn join(
        &self,
        room_id: Option<String>,
        code: &str,
        display_name: &str,
        timeout: Duration,
    ) -> Result<u16, HarnessError> {
        let mut status = self.join.clone();
        self.send_control(Control::JoinRoom {
            room_id,
            code: code.to_owned(),
            display_name: display_name.to_owned(),
        })?;
        let verdict = tokio::time::timeout(timeout, status.wait_for(|s| *s != JoinStatus::Pending))
            .await
            .map_err(|_| HarnessError::ScenarioTimeout(format!("{display_name} waiting for join")))?
            .map(|s| s.clone())
            .unwrap_or(JoinStatus::Gone);
        match verdict {
            JoinStatus::Accepted(id) => Ok(id),
            JoinStatus::Rejected(reason) => Err(HarnessError::JoinRejected { client: display_name.to_owned(), reason }),
            JoinStatus::Gone | JoinStatus::Pending => Err(HarnessError::Disconnected(display_name.to_owned())),
        }
    }

    /// Waits until some control message satisfies `pred`.
    pub async fn wait_for_control<F>(&self, timeout: Duration, pred: F) -> Result<Control, HarnessError>
    where
        F: Fn(&Control) -> bool,
    {
        let deadline = Instant::now() + timeout;
        loop {
            {
                let view = self.view.lock();
                if let Some(entry) = view.log.iter().find(|e| pred(&e.body)) {
                    return Ok(entry.body.clone());
                }
                if view.disconnected {
                    return Err(HarnessError::Disconnected(view.name.clone()));
                }
            }
            if Instant::now() >= deadline {
                return Err(HarnessError::ScenarioTimeout(format!("{} waiting for a control message", self.name())));
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
    }

    pub fn participant_id(&self) -> Option<u16> {
        self.view.lock().replica.participant_id
    }

    pub fn holds(&self, object_id: u16) -> bool {
        let view = self.view.lock();
        view.replica.participant_id.is_some() && view.replica.holder_of(object_id) == view.replica.participant_id
    }

    pub fn participant_count(&self) -> usize {
        self.view.lock().replica.participants.len()
    }

    pub fn object_scale(&self, object_id: u16) -> Option<f32> {
        self.view.lock().replica.objects.get(&object_id).map(|o| o.transform.scale)
    }

    /// True once [`Self::disconnect`] has been called.
    pub fn is_closing(&self) -> bool {
        self.outlet.closing.load(Ordering::Acquire)
    }

    pub fn is_disconnected(&self) -> bool {
        self.view.lock().disconnected
    }

    pub fn view(&self) -> ClientView {
        self.view.lock().clone()
    }

    /// Closes the socket after everything already queued has been sent.
    pub fn disconnect(&self) {
        let _ = self.outlet.push(Message::Close(None));
        self.outlet.closing.store(true, Ordering::Release);
    }

    /// Waits for the connection to wind down, then stops all tasks.
    pub async fn shutdown(mut self, grace: Duration) {
        self.disconnect();
        let deadline = Instant::now() + grace;
        while !self.is_disconnected() && Instant::now() < deadline {
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        for task in self.tasks.drain(..) {
            task.abort();
        }
        self.view.lock().disconnected = true;
    }
}

impl Drop for SyntheticClient {
    fn drop(&mut self) {
        for task in &self.tasks {
            task.abort();
        }
    }
}
