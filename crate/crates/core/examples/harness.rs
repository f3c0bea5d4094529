//! Scenario runner.
//!
//! ```text
//! cargo run --example harness -- run scenarios/canonical.toml --seed 7 --report report.toml
//! cargo run --example harness -- run scenarios/grab_storm.toml --server http://127.0.0.1:8080
//! ```

fn main() {
    std::process::exit(molxr::harness::harness_main(std::env::args_os()));
}
