//! Live remote control: one simulated robot stepped in real time by the policy,
//! steered over a websocket.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use super::eval::{eval_task_config, load_policy};
use super::protocol::{ClientMessage, CommandState, Pose, ServerMessage, Snapshot, TerrainInfo};
use super::HarnessError;
use crate::config::Config;
use crate::net::GaussianPolicy;
use crate::sim::body_frame;
use crate::task::{Env, Termination, ACTION_DIM, OBS_DIM};
use crate::terrain::{HeightField, TerrainSpec};
use crate::util::derive_seed;

pub const CONTROL_HZ: f64 = 50.0;
/// Snapshots go out every this many control ticks (25 Hz).
pub const SNAPSHOT_EVERY: u64 = 2;
/// With a nonzero goal direction the goal sits this far ahead (m).
pub const GOAL_LOOKAHEAD: f64 = 1.0;
pub const MAX_HEIGHT_DELTA: f64 = 0.1;

/// A checked client request, applied at the next control tick.
#[derive(Clone, Debug, PartialEq)]
pub enum Inbound {
    Command {
        seq: u64,
        goal_direction: Option<f64>,
        height_delta: Option<f64>,
        terrain_bool: Option<bool>,
    },
    Reset {
        seq: u64,
    },
    Terrain {
        seq: u64,
        spec: TerrainSpec,
    },
}

/// Clamps out-of-range values and rejects what cannot be clamped.
pub fn validate(msg: ClientMessage) -> Result<Inbound, String> {
    match msg {
        ClientMessage::Command {
            seq,
            goal_direction,
            height_delta,
            terrain_bool,
        } => {
            if goal_direction.is_some_and(|d| !d.is_finite())
                || height_delta.is_some_and(|d| !d.is_finite())
            {
                return Err("command values must be finite".into());
            }
            let terrain_bool = match terrain_bool {
                None => None,
                Some(0) => Some(false),
                Some(1) => Some(true),
                Some(b) => return Err(format!("terrain_bool must be 0 or 1, got {b}")),
            };
            Ok(Inbound::Command {
                seq,
                goal_direction: goal_direction.map(|d| d.clamp(-1.0, 1.0)),
                height_delta: height_delta.map(|d| d.clamp(-MAX_HEIGHT_DELTA, MAX_HEIGHT_DELTA)),
                terrain_bool,
            })
        }
        ClientMessage::Reset { seq } => Ok(Inbound::Reset { seq }),
        ClientMessage::Terrain { seq, terrain } => {
            let spec: TerrainSpec = terrain
                .parse()
                .map_err(|e: crate::terrain::TerrainError| e.to_string())?;
            spec.build(0).map_err(|e| e.to_string())?;
            Ok(Inbound::Terrain { seq, spec })
        }
    }
}

/// The simulation side of the service, without any threads or sockets.
pub struct TeleopSim {
    policy: GaussianPolicy,
    env: Env,
    spec: TerrainSpec,
    field: HeightField,
    seed: u64,
    respawns: u64,
    tick: u64,
    goal_direction: f64,
    height_delta: f64,
    terrain_bool: bool,
    hold_x: f64,
    last_obs: [f64; OBS_DIM],
    applied_seq: Option<u64>,
}

impl TeleopSim {
    pub fn new(
        policy: GaussianPolicy,
        cfg: &Config,
        spec: TerrainSpec,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        let field = spec.build(seed)?;
        let env = Env::new(
            Arc::new(cfg.robot.clone()),
            Arc::new(eval_task_config(cfg)),
            seed,
        );
        let mut sim = Self {
            policy,
            env,
            spec,
            field,
            seed,
            respawns: 0,
            tick: 0,
            goal_direction: 0.0,
            height_delta: 0.0,
            terrain_bool: false,
            hold_x: 0.0,
            last_obs: [0.0; OBS_DIM],
            applied_seq: None,
        };
        sim.respawn();
        sim.terrain_bool = sim.env.episode().terrain_bool;
        sim.last_obs = sim.env.observe_clean();
        Ok(sim)
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn last_observation(&self) -> &[f64; OBS_DIM] {
        &self.last_obs
    }

    fn respawn(&mut self) {
        self.respawns += 1;
        self.env.reset(&self.field, (0, 0));
        self.env.set_terrain_bool(self.terrain_bool);
        let h = self.env.model().nominal_height() + self.height_delta;
        self.env.set_height_target(h);
        self.hold_x = self.env.state().x;
        self.update_goal();
    }

    fn update_goal(&mut self) {
        let x = self.env.state().x;
        let gx = if self.goal_direction.abs() > 1e-9 {
            x + self.goal_direction * GOAL_LOOKAHEAD
        } else {
            self.hold_x
        };
        let terrain = self.env.terrain();
        let gx = gx.clamp(0.3, terrain.extent() - 0.3);
        let gz = terrain.height_at_clamped(gx) + self.env.episode().height_target;
        self.env.set_goal([gx, gz]);
    }

    pub fn apply(&mut self, cmd: Inbound) -> Result<(), HarnessError> {
        match cmd {
            Inbound::Command {
                seq,
                goal_direction,
                height_delta,
                terrain_bool,
            } => {
                if let Some(d) = goal_direction {
                    if d.abs() <= 1e-9 && self.goal_direction.abs() > 1e-9 {
                        self.hold_x = self.env.state().x;
                    }
                    self.goal_direction = d;
                }
                if let Some(h) = height_delta {
                    self.height_delta = h;
                    let target = self.env.model().nominal_height() + h;
                    self.env.set_height_target(target);
                }
                if let Some(b) = terrain_bool {
                    self.terrain_bool = b;
                    self.env.set_terrain_bool(b);
                }
                self.applied_seq = Some(seq);
            }
            Inbound::Reset { seq } => {
                self.respawn();
                self.applied_seq = Some(seq);
            }
            Inbound::Terrain { seq, spec } => {
                self.field = spec.build(derive_seed(self.seed, &[self.respawns]))?;
                self.spec = spec;
                self.respawn();
                self.applied_seq = Some(seq);
            }
        }
        Ok(())
    }

    /// One control tick. Falls respawn the robot; the episode clock is ignored.
    pub fn tick(&mut self) -> Result<(), HarnessError> {
        self.update_goal();
        let obs = self.env.observe();
        let input: Vec<f32> = obs.iter().map(|&v| v as f32).collect();
        let mean = self.policy.mean(&input)?;
        let action: [f64; ACTION_DIM] = std::array::from_fn(|k| mean[k] as f64);
        let out = self.env.step(&action);
        self.last_obs = obs;
        self.tick += 1;
        if matches!(out.done, Some(Termination::Fall | Termination::Diverged)) {
            self.respawn();
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        let s = self.env.state();
        let f = body_frame(self.env.model(), s);
        let ep = self.env.episode();
        Snapshot {
            tick: self.tick,
            t: self.tick as f64 / CONTROL_HZ,
            pose: Pose {
                x: s.x,
                z: s.z,
                pitch: s.pitch,
            },
            joints: s.joint_pos,
            wheel_angles: s.wheel_angle,
            hip: f.hip,
            knees: f.knees,
            wheels: f.wheels,
            contacts: self.env.contacts().to_vec(),
            goal: ep.goal,
            command: CommandState {
                goal_direction: self.goal_direction,
                height_delta: self.height_delta,
                height_target: ep.height_target,
                terrain_bool: ep.terrain_bool as u8,
            },
            observation: self.last_obs.to_vec(),
            terrain: TerrainInfo {
                spec: self.spec.to_string(),
                profile: self.env.terrain().profile().to_vec(),
            },
            applied_seq: self.applied_seq,
        }
    }
}

type Clients = Arc<Mutex<Vec<Sender<Arc<Snapshot>>>>>;

/// A running service. Dropping it stops every thread.
pub struct TeleopHandle {
    port: u16,
    stop: Arc<AtomicBool>,
    ticks: Arc<AtomicU64>,
    threads: Vec<JoinHandle<()>>,
}

impl TeleopHandle {
    pub fn port(&self) -> u16 {
        self.port
    }

    /// Control ticks simulated so far.
    pub fn ticks(&self) -> u64 {
        self.ticks.load(Ordering::Relaxed)
    }

    /// Blocks until the service stops (it only stops through [`TeleopHandle::shutdown`]).
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(("127.0.0.1", self.port));
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for TeleopHandle {
    fn drop(&mut self) {
        if !self.threads.is_empty() {
            self.stop_threads();
        }
    }
}

/// Loads `checkpoint` and serves it on `host:port` (port 0 picks a free one).
pub fn teleop_service(
    checkpoint: &Path,
    host: &str,
    port: u16,
    terrain: TerrainSpec,
    seed: u64,
) -> Result<TeleopHandle, HarnessError> {
    let loaded = load_policy(checkpoint)?;
    let sim = TeleopSim::new(loaded.policy, &loaded.config, terrain, seed)?;
    start_service(sim, host, port)
}

pub fn start_service(sim: TeleopSim, host: &str, port: u16) -> Result<TeleopHandle, HarnessError> {
    let listener = TcpListener::bind((host, port)).map_err(|e| match e.kind() {
        ErrorKind::AddrInUse => HarnessError::PortInUse(port),
        _ => HarnessError::Io(e),
    })?;
    let port = listener.local_addr()?.port();
    let stop = Arc::new(AtomicBool::new(false));
    let ticks = Arc::new(AtomicU64::new(0));
    let clients: Clients = Arc::default();
    let (cmd_tx, cmd_rx) = mpsc::channel();

    let sim_thread = {
        let (stop, ticks, clients) = (stop.clone(), ticks.clone(), clients.clone());
        std::thread::spawn(move || sim_loop(sim, cmd_rx, clients, stop, ticks))
    };
    let accept_thread = {
        let stop = stop.clone();
        std::thread::spawn(move || {
            let mut sessions = Vec::new();
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let (stop, clients, cmd_tx) = (stop.clone(), clients.clone(), cmd_tx.clone());
                sessions.push(std::thread::spawn(move || {
                    session(stream, clients, cmd_tx, stop)
                }));
            }
            for s in sessions {
                let _ = s.join();
            }
        })
    };
    Ok(TeleopHandle {
        port,
        stop,
        ticks,
        threads: vec![sim_thread, accept_thread],
    })
}

fn sim_loop(
    mut sim: TeleopSim,
    commands: Receiver<Inbound>,
    clients: Clients,
    stop: Arc<AtomicBool>,
    ticks: Arc<AtomicU64>,
) {
    let period = Duration::from_secs_f64(1.0 / CONTROL_HZ);
    let mut next = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        while let Ok(cmd) = commands.try_recv() {
            if let Err(e) = sim.apply(cmd) {
                eprintln!("teleop: command failed: {e}");
            }
        }
        if let Err(e) = sim.tick() {
            eprintln!("teleop: tick failed: {e}");
            sim.respawn();
        }
        ticks.store(sim.tick_count(), Ordering::Relaxed);
        if sim.tick_count().is_multiple_of(SNAPSHOT_EVERY) {
            let snap = Arc::new(sim.snapshot());
            let mut list = clients.lock().unwrap_or_else(|p| p.into_inner());
            list.retain(|tx| tx.send(snap.clone()).is_ok());
        }
        next += period;
        let now = Instant::now();
        if next > now {
            std::thread::sleep(next - now);
        } else if now - next > Duration::from_millis(100) {
            // fell far behind; do not try to catch up in a burst
            next = now;
        }
    }
}

struct Outbox {
    seq: u64,
}

impl Outbox {
    fn send(
        &mut self,
        ws: &mut WebSocket<TcpStream>,
        make: impl FnOnce(u64) -> ServerMessage,
    ) -> bool {
        self.seq += 1;
        let text = serde_json::to_string(&make(self.seq)).expect("server messages serialize");
        ws.send(Message::text(text)).is_ok()
    }
}

fn session(stream: TcpStream, clients: Clients, commands: Sender<Inbound>, stop: Arc<AtomicBool>) {
    if stop.load(Ordering::SeqCst) {
        return;
    }
    let _ = stream.set_nodelay(true);
    let Ok(mut ws) = tungstenite::accept(stream) else {
        return;
    };
    if ws
        .get_mut()
        .set_read_timeout(Some(Duration::from_millis(5)))
        .is_err()
    {
        return;
    }
    let (snap_tx, snap_rx) = mpsc::channel();
    clients
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .push(snap_tx);
    let mut out = Outbox { seq: 0 };
    let hello = |seq| ServerMessage::Hello {
        seq,
        control_hz: CONTROL_HZ,
        snapshot_hz: CONTROL_HZ / SNAPSHOT_EVERY as f64,
        obs_dim: OBS_DIM,
    };
    if !out.send(&mut ws, hello) {
        return;
    }
    while !stop.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                if let Err((in_reply_to, message)) = handle_text(text.as_str(), &commands) {
                    let reply = |seq| ServerMessage::Error {
                        seq,
                        in_reply_to,
                        message,
                    };
                    if !out.send(&mut ws, reply) {
                        break;
                    }
                }
            }
            Ok(Message::Binary(_)) => {
                let reply = |seq| ServerMessage::Error {
                    seq,
                    in_reply_to: None,
                    message: "binary frames are not supported; send JSON text".into(),
                };
                if !out.send(&mut ws, reply) {
                    break;
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
        let mut ok = true;
        while let Ok(snap) = snap_rx.try_recv() {
            ok = out.send(&mut ws, |seq| ServerMessage::State {
                seq,
                snapshot: Box::new((*snap).clone()),
            });
            if !ok {
                break;
            }
        }
        if !ok {
            break;
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
}

fn handle_text(text: &str, commands: &Sender<Inbound>) -> Result<(), (Option<u64>, String)> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| (None, format!("malformed JSON: {e}")))?;
    let seq = value.get("seq").and_then(|s| s.as_u64());
    let msg: ClientMessage =
        serde_json::from_value(value).map_err(|e| (seq, format!("bad message: {e}")))?;
    let inbound = validate(msg).map_err(|e| (seq, e))?;
    commands
        .send(inbound)
        .map_err(|_| (seq, "simulation stopped".to_string()))
}
