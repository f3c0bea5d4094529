//! Server side of a multiuser WebXR room for molecular models.
//!
//! Participants join a room with an invite code that fixes their role
//! (Admin, VR-active or passive), see the same set of GLB models and each
//! other's head-and-hands avatars, and take turns moving objects under a
//! server-granted grab lock. Only transforms cross the wire once a client
//! has its snapshot.
//!
//! ```no_run
//! # async fn demo() {
//! let srv = molxr::server::start(molxr::server::ServerConfig::ephemeral()).await.unwrap();
//! let creds = srv.hub.create_room(Some("demo")).unwrap();
//! println!("join {} with vr code {}", srv.ws_url(), creds.vr_code.as_str());
//! # }
//! ```
//!
//! - [`protocol`]: wire formats for both planes.
//! - [`session`]: rooms, roles, grab locks and the replayable event log.
//! - [`server`]: websocket hub, HTTP endpoints and the `molxr-server` binary.
//! - [`content`]: preset manifests, GLB validation and the asset store.
//! - [`pdb2asset`]: PDB to GLB conversion.
//! - [`harness`]: scripted multi-client scenarios against a live server.

pub mod clock;
pub mod content;
pub mod harness;
pub mod pdb2asset;
pub mod protocol;
pub mod server;
pub mod session;
