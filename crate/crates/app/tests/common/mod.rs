#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;

use octx::config::ServiceConfig;
use octx::server::{router, AppState};
use octx_core::net::weights::save_weights;
use octx_core::synthetic::{render, SyntheticSpec};
use octx_core::{Class, OctNet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const BIN: &str = env!("CARGO_BIN_EXE_octx");

pub fn write_weights(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join(format!("net-{seed}.weights"));
    save_weights(&OctNet::build(seed), &path).unwrap();
    path
}

pub fn scan_png(class: Class, seed: u64, side: u32) -> Vec<u8> {
    let img = render(class, SyntheticSpec { side, noise: 0.1 }, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

/// A service on an ephemeral port, driven by its own runtime thread.
pub struct InProcess {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    _runtime: tokio::runtime::Runtime,
}

impl InProcess {
    pub fn start(model: Option<OctNet>, config: ServiceConfig) -> Self {
        let runtime = tokio::runtime::Runtime::new().unwrap();
        let state = Arc::new(AppState::with_model(model, config).unwrap());
        let app = router(state.clone());
        let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let addr = listener.local_addr().unwrap();
        runtime.spawn(async move { axum::serve(listener, app).await.unwrap() });
        Self {
            addr,
            state,
            _runtime: runtime,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }
}

pub fn config(storage: &Path) -> ServiceConfig {
    ServiceConfig {
        storage: storage.to_path_buf(),
        ..ServiceConfig::default()
    }
}

pub fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(std::time::Duration::from_secs(300))
        .build()
        .unwrap()
}

/// `octx serve` as a child process; returns once it reports its address.
pub struct Served {
    pub child: Child,
    pub addr: SocketAddr,
}

impl Served {
    pub fn start(weights: &Path, storage: &Path) -> Self {
        let mut child = Command::new(BIN)
            .args(["serve", "--listen", "127.0.0.1:0", "--weights"])
            .arg(weights)
            .arg("--storage")
            .arg(storage)
            .env("RUST_LOG", "warn")
            .env_remove("OCTX_CONFIG")
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected first line {line:?}"))
            .parse()
            .unwrap();
        Self { child, addr }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    /// SIGKILL: no shutdown hooks run.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
