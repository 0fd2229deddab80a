#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;

use relic_server::{Server, ServerConfig};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub struct Running {
    pub addr: SocketAddr,
    pub base: String,
    stop: Option<oneshot::Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

impl Running {
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub fn ws_url(&self, room: &str) -> String {
        format!("ws://{}/session/{room}", self.addr)
    }

    /// Triggers graceful shutdown and waits for the server to exit.
    pub async fn stop(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.handle.take().unwrap().await.unwrap();
    }
}

pub async fn start(config: ServerConfig) -> Running {
    let server = Server::bind(ServerConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        ..config
    })
    .await
    .unwrap();
    let addr = server.local_addr();
    let (tx, rx) = oneshot::channel();
    let handle = tokio::spawn(async move {
        server
            .run(async {
                let _ = rx.await;
            })
            .await
            .unwrap();
    });
    Running {
        addr,
        base: format!("http://{addr}"),
        stop: Some(tx),
        handle: Some(handle),
    }
}

pub async fn start_in(dir: &Path) -> Running {
    start(ServerConfig {
        data_dir: Some(dir.to_path_buf()),
        ..ServerConfig::default()
    })
    .await
}

pub async fn start_memory() -> Running {
    start(ServerConfig::default()).await
}
