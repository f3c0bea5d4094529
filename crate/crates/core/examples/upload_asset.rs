//! Converts a PDB fixture, uploads the GLB with a room's admin token and
//! fetches it back from the content-addressed store.

use molxr::pdb2asset::{pdb_to_glb, MeshStyle};
use molxr::server::{start, ServerConfig, ADMIN_TOKEN_HEADER};

const GLYCINE: &[u8] = include_bytes!("../assets/molecules/glycine.pdb");

#[tokio::main]
async fn main() {
    let srv = start(ServerConfig::ephemeral()).await.unwrap();
    let creds = srv.hub.create_room(Some("empty")).unwrap();
    let glb = pdb_to_glb(GLYCINE, MeshStyle::BallAndStick, 3, "glycine").unwrap();
    println!("glycine: {} byte GLB", glb.len());

    let http = reqwest::Client::new();
    let base = srv.http_url();
    let created = http
        .post(format!("{base}/assets"))
        .header(ADMIN_TOKEN_HEADER, &creds.admin_token)
        .body(glb.clone())
        .send()
        .await
        .unwrap();
    let status = created.status();
    let body: serde_json::Value = created.json().await.unwrap();
    println!("POST /assets -> {status} {body}");

    let url = body["url"].as_str().unwrap();
    let fetched = http.get(format!("{base}{url}")).send().await.unwrap();
    println!("GET {url} -> {} cache-control: {:?}", fetched.status(), fetched.headers()["cache-control"]);
    println!("bytes identical: {}", fetched.bytes().await.unwrap().as_ref() == glb.as_slice());

    let anonymous = http.post(format!("{base}/assets")).body(glb).send().await.unwrap();
    println!("upload without a token -> {}", anonymous.status());
    srv.shutdown().await;
}
