#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;
use std::thread::JoinHandle;

use chrono::DateTime;
use valrank_core::{Clock, Portal};
use valrank_gateway::{Service, ServiceConfig};

pub const STAMP: i64 = 1_700_000_000;

pub fn clock() -> Clock {
    Clock::Fixed(DateTime::from_timestamp(STAMP, 0).unwrap())
}

pub fn config() -> ServiceConfig {
    ServiceConfig {
        read_only: false,
        clock: clock(),
    }
}

/// (id, citations, publications with an impact factor, partners)
pub const F4: [(&str, u32, u32, u32); 4] = [("p1", 100, 10, 2), ("p2", 20, 12, 8), ("p3", 10, 6, 10), ("p4", 0, 0, 0)];

pub const HEADER: &str = "owner,category,year,attr_name,attr_value,evidence_uri\n";

pub fn rows(owner: &str, cit: u32, hif: u32, intl: u32) -> String {
    let mut s = String::new();
    if cit > 0 {
        s += &format!("{owner},citation_record,2018,citations,{cit},\n");
    }
    for _ in 0..hif {
        s += &format!("{owner},publication,2018,impact_factor,1.5,\n");
    }
    if intl > 0 {
        s += &format!("{owner},project,2018,intl_partner_count,{intl},\n");
    }
    s
}

pub fn f4_csv() -> String {
    let mut s = HEADER.to_string();
    for (id, c, h, i) in F4 {
        s += &rows(id, c, h, i);
    }
    s
}

pub const EXPERT: &str = r#"{"id":"e","owner":"p1","label":"expert","weights":{"cit":0.8,"hif":0.1,"intl":0.1}}"#;
pub const CROWD: &str = r#"{"id":"m","owner":"collective","label":"crowd","weights":{"cit":0.1,"hif":0.45,"intl":0.45}}"#;

pub fn person(id: &str) -> String {
    format!(r#"{{"id":"{id}","kind":"person","display_name":"{}"}}"#, id.to_uppercase())
}

/// In-memory service holding the four-person fixture and value systems e, m.
pub fn f4_service(config: ServiceConfig) -> Service {
    let svc = Service::in_memory(Portal::genesis(clock()), ServiceConfig { read_only: false, ..config });
    load_f4(&svc);
    if config.read_only {
        let state = (*svc.state()).clone();
        return Service::in_memory(Portal::new(state, clock()), config);
    }
    svc
}

pub fn load_f4(svc: &Service) {
    for (id, ..) in F4 {
        svc.register(serde_json::from_str(&person(id)).unwrap()).unwrap();
    }
    let report = svc.import(f4_csv().as_bytes(), true).unwrap();
    assert!(report.errors.is_empty());
    svc.create_value_system(serde_json::from_str(EXPERT).unwrap()).unwrap();
    svc.create_value_system(serde_json::from_str(CROWD).unwrap()).unwrap();
}

/// An HTTP server on an ephemeral port, stopped on drop.
pub struct Server {
    pub base: String,
    pub service: Arc<Service>,
    client: reqwest::blocking::Client,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn start(service: Service, token: Option<&str>) -> Self {
        let service = Arc::new(service);
        let router = valrank_gateway::http::router(Arc::clone(&service), token.map(str::to_string));
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = valrank_gateway::http::bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                valrank_gateway::http::serve(listener, router, async {
                    let _ = stopped.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self {
            base: format!("http://{addr}"),
            service,
            client: reqwest::blocking::Client::new(),
            stop: Some(stop),
            thread: Some(thread),
        }
    }

    pub fn get(&self, path: &str) -> (u16, String) {
        let r = self.client.get(format!("{}{path}", self.base)).send().unwrap();
        (r.status().as_u16(), r.text().unwrap())
    }

    pub fn post(&self, path: &str, body: &str) -> (u16, String) {
        self.post_as(path, body, None)
    }

    pub fn post_as(&self, path: &str, body: &str, token: Option<&str>) -> (u16, String) {
        let mut req = self.client.post(format!("{}{path}", self.base)).body(body.to_string());
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let r = req.send().unwrap();
        (r.status().as_u16(), r.text().unwrap())
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn json(body: &str) -> serde_json::Value {
    serde_json::from_str(body).unwrap_or_else(|e| panic!("{e}: {body}"))
}

pub fn code(body: &str) -> String {
    json(body)["code"].as_str().unwrap().to_string()
}

/// Run the `valrank` binary with a fixed `SOURCE_DATE_EPOCH`.
pub fn valrank(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_valrank"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env("SOURCE_DATE_EPOCH", STAMP.to_string())
        .env_remove("VALRANK_TOKEN")
        .output()
        .unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Ordered resource ids of a RankingList body.
pub fn order(body: &str) -> Vec<String> {
    json(body)["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["resource"].as_str().unwrap().to_string())
        .collect()
}
