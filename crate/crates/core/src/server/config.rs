use std::ffi::OsString;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;

use super::http::{router, AppState};
use super::hub::{Hub, HubConfig, DEFAULT_SETTLE_TICKS};
use super::ServerError;
use crate::clock::{Clock, SystemClock};
use crate::content::{load_manifest, resolve_builtin_assets, starter_manifest, AssetStore};
use crate::session::{LobbyConfig, RoomConfig};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_ASSET_CAPACITY_MB: u64 = 1024;

#[derive(Debug, Clone, Parser)]
#[command(name = "molxr-server", about = "Authoritative room server for multiuser molecular XR sessions")]
pub struct ServerArgs {
    #[arg(long, env = "MOLXR_PORT", default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, env = "MOLXR_BIND", default_value = "0.0.0.0")]
    pub bind: IpAddr,
    /// Preset-room manifest (TOML). Defaults to the bundled starter set.
    #[arg(long, env = "MOLXR_MANIFEST")]
    pub manifest: Option<PathBuf>,
    #[arg(long, env = "MOLXR_TICK_HZ", default_value_t = 20)]
    pub tick_hz: u32,
    #[arg(long, env = "MOLXR_MAX_ROOMS", default_value_t = 256)]
    pub max_rooms: usize,
    #[arg(long, env = "MOLXR_ROOM_CAP", default_value_t = 64)]
    pub room_cap: usize,
    /// Mirror of every room event, one JSON object per line.
    #[arg(long, env = "MOLXR_EVENT_LOG")]
    pub event_log: Option<PathBuf>,
    /// Directory of the content-addressed asset store.
    #[arg(long, env = "MOLXR_ASSET_DIR")]
    pub asset_dir: Option<PathBuf>,
    #[arg(long, env = "MOLXR_ASSET_CAPACITY_MB", default_value_t = DEFAULT_ASSET_CAPACITY_MB)]
    pub asset_capacity_mb: u64,
}

#[derive(Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub manifest: Option<PathBuf>,
    pub hub: HubConfig,
    pub event_log: Option<PathBuf>,
    pub asset_dir: Option<PathBuf>,
    pub asset_capacity_bytes: u64,
    pub clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for ServerConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerConfig")
            .field("addr", &self.addr)
            .field("manifest", &self.manifest)
            .field("hub", &self.hub)
            .field("event_log", &self.event_log)
            .field("asset_dir", &self.asset_dir)
            .finish()
    }
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            addr: SocketAddr::new(IpAddr::V4(Ipv4Addr::UNSPECIFIED), DEFAULT_PORT),
            manifest: None,
            hub: HubConfig::default(),
            event_log: None,
            asset_dir: None,
            asset_capacity_bytes: DEFAULT_ASSET_CAPACITY_MB << 20,
            clock: Arc::new(SystemClock),
        }
    }
}

impl ServerConfig {
    /// Loopback on an ephemeral port, for tests and examples.
    pub fn ephemeral() -> Self {
        Self { addr: SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), 0), ..Self::default() }
    }

    pub fn from_args(args: ServerArgs) -> Self {
        Self {
            addr: SocketAddr::new(args.bind, args.port),
            manifest: args.manifest,
            hub: HubConfig {
                tick_hz: args.tick_hz,
                settle_ticks: DEFAULT_SETTLE_TICKS,
                lobby: LobbyConfig {
                    max_rooms: args.max_rooms,
                    room: RoomConfig { participant_cap: args.room_cap, ..RoomConfig::default() },
                },
                ..HubConfig::default()
            },
            event_log: args.event_log,
            asset_dir: args.asset_dir,
            asset_capacity_bytes: args.asset_capacity_mb << 20,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), ServerError> {
        let bad = |m: &str| Err(ServerError::BadConfig(m.to_owned()));
        if !(1..=1000).contains(&self.hub.tick_hz) {
            return bad("tick rate must be between 1 and 1000 Hz");
        }
        if self.hub.lobby.max_rooms == 0 {
            return bad("max rooms must be at least 1");
        }
        if self.hub.lobby.room.participant_cap == 0 {
            return bad("room cap must be at least 1");
        }
        Ok(())
    }
}

/// A listening server. Dropping it does not stop it; call
/// [`RunningServer::shutdown`].
pub struct RunningServer {
    pub local_addr: SocketAddr,
    pub hub: Arc<Hub>,
    pub store: Arc<AssetStore>,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl RunningServer {
    pub fn http_url(&self) -> String {
        format!("http://{}", self.local_addr)
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}/ws", self.local_addr)
    }

    /// Sends `room_closed` to every participant, closes their sockets and
    /// stops serving.
    pub async fn shutdown(self) {
        self.hub.shutdown("server shutting down");
        tokio::time::sleep(Duration::from_millis(100)).await;
        let _ = self.stop.send(true);
        for task in self.tasks {
            let _ = tokio::time::timeout(Duration::from_secs(5), task).await;
        }
    }
}

pub async fn start(config: ServerConfig) -> Result<RunningServer, ServerError> {
    config.validate()?;
    let mut presets = match &config.manifest {
        Some(path) => load_manifest(path).map_err(|e| ServerError::BadConfig(format!("{}: {e}", path.display())))?,
        None => starter_manifest(),
    };
    let asset_dir = config
        .asset_dir
        .clone()
        .unwrap_or_else(|| std::env::temp_dir().join(format!("molxr-assets-{}", std::process::id())));
    let store = Arc::new(
        AssetStore::open(&asset_dir, config.asset_capacity_bytes)
            .map_err(|e| ServerError::BadConfig(format!("asset store {}: {e}", asset_dir.display())))?,
    );
    let store_for_build = store.clone();
    let (presets, unresolved) = tokio::task::spawn_blocking(move || {
        let flagged = resolve_builtin_assets(&mut presets, &store_for_build);
        (presets, flagged)
    })
    .await
    .map_err(|e| ServerError::BadConfig(format!("asset generation: {e}")))?;
    for flagged in &unresolved {
        tracing::warn!(preset = %flagged.preset_id, label = %flagged.label, reason = %flagged.reason, "unresolved preset asset");
    }

    let mut hub = Hub::new(config.hub, config.clock.clone()).with_presets(presets).with_resolver(store.clone());
    if let Some(path) = &config.event_log {
        hub = hub.with_event_log(path)?;
    }
    let hub = Arc::new(hub);

    let listener = TcpListener::bind(config.addr)
        .await
        .map_err(|e| ServerError::BindFailure(format!("{}: {e}", config.addr)))?;
    let local_addr = listener.local_addr().map_err(|e| ServerError::BindFailure(e.to_string()))?;
    let (stop, stopped) = watch::channel(false);
    let app = router(AppState { hub: hub.clone(), store: Some(store.clone()) });

    let mut tasks = Vec::new();
    let mut until_stop = stopped.clone();
    tasks.push(tokio::spawn(async move {
        let shutdown = async move {
            let _ = until_stop.wait_for(|s| *s).await;
        };
        if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
            tracing::error!(error = %e, "server stopped");
        }
    }));

    let ticker_hub = hub.clone();
    let mut ticker_stop = stopped.clone();
    let period = Duration::from_micros(1_000_000 / config.hub.tick_hz as u64);
    tasks.push(tokio::spawn(async move {
        let mut interval = tokio::time::interval(period);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                _ = interval.tick() => { ticker_hub.tick(); }
                _ = ticker_stop.changed() => break,
            }
        }
    }));

    let sweeper_hub = hub.clone();
    let mut sweeper_stop = stopped;
    tasks.push(tokio::spawn(async move {
        let mut interval = tokio::time::interval(Duration::from_secs(1));
        loop {
            tokio::select! {
                _ = interval.tick() => {
                    let now = sweeper_hub.now();
                    sweeper_hub.heartbeat_sweep(now);
                    sweeper_hub.expire_rooms(now);
                }
                _ = sweeper_stop.changed() => break,
            }
        }
    }));

    tracing::info!(addr = %local_addr, "listening");
    Ok(RunningServer { local_addr, hub, store, stop, tasks })
}

pub const EXIT_BAD_CONFIG: i32 = 2;
pub const EXIT_BIND_FAILURE: i32 = 3;

/// Entry point of the server binary. Returns the process exit code.
pub fn serve_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match ServerArgs::try_parse_from(args) {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_BAD_CONFIG } else { 0 };
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .try_init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("molxr-server: {e}");
            return 1;
        }
    };
    runtime.block_on(async move {
        let server = match start(ServerConfig::from_args(args)).await {
            Ok(server) => server,
            Err(e) => {
                eprintln!("molxr-server: {e}");
                return match e {
                    ServerError::BadConfig(_) => EXIT_BAD_CONFIG,
                    ServerError::BindFailure(_) => EXIT_BIND_FAILURE,
                };
            }
        };
        println!("molxr-server listening on {}", server.local_addr);
        wait_for_signal().await;
        tracing::info!("shutting down");
        server.shutdown().await;
        0
    })
}

async fn wait_for_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        if let Ok(mut term) = signal(SignalKind::terminate()) {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = term.recv() => {}
            }
            return;
        }
    }
    let _ = tokio::signal::ctrl_c().await;
}
