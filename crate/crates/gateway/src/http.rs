//! HTTP/JSON routes.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State as AxState};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::net::TcpListener;
use valrank_core::{AchievementId, NewResource, PsvDocument, ResourceId, ValueSystemId};

use crate::error::ApiError;
use crate::service::{
    render, AggregateRequest, DecisionRequest, EpochRequest, LeagueInitRequest, QueryRequest, RankingParams,
    Service, SimulateRequest, VerificationRequest, VsRef,
};

#[derive(Clone)]
struct App {
    service: Arc<Service>,
    token: Option<Arc<str>>,
}

type Params = Result<Query<BTreeMap<String, String>>, QueryRejection>;

fn json_response(status: u16, body: String) -> Response {
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, render(&self))
    }
}

fn reply<T: Serialize>(status: u16, r: Result<T, ApiError>) -> Response {
    match r {
        Ok(v) => json_response(status, render(&v)),
        Err(e) => e.into_response(),
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    Ok(serde_json::from_slice(body)?)
}

fn params(p: Params) -> Result<BTreeMap<String, String>, ApiError> {
    p.map(|Query(m)| m)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

fn resource_id(s: &str) -> Result<ResourceId, ApiError> {
    ResourceId::new(s).map_err(|e| valrank_core::DomainError::from(e).into())
}

fn vs_id(s: &str) -> Result<ValueSystemId, ApiError> {
    ValueSystemId::new(s).map_err(|e| valrank_core::DomainError::from(e).into())
}

/// `cit:0.8,hif:0.1` as an unsaved value system document.
fn inline_weights(spec: &str) -> Result<PsvDocument, ApiError> {
    let mut weights = valrank_core::Weights::new();
    for part in spec.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once(':')
            .ok_or_else(|| ApiError::bad_request(format!("weight {part:?} is not indicator:number")))?;
        let id = valrank_core::IndicatorId::new(k).map_err(valrank_core::DomainError::from)?;
        let w: f64 = v
            .parse()
            .map_err(|_| ApiError::bad_request(format!("weight {v:?} is not a number")))?;
        weights.insert(id, w);
    }
    Ok(PsvDocument {
        id: None,
        owner: valrank_core::Owner::Collective,
        label: "ephemeral".into(),
        weights,
    })
}

/// `vs=<id>` or `weights=<indicator:number,...>`.
fn vs_param(m: &BTreeMap<String, String>, vs_key: &str, weights_key: &str) -> Result<Option<VsRef>, ApiError> {
    match (m.get(vs_key), m.get(weights_key)) {
        (Some(_), Some(_)) => Err(ApiError::bad_request(format!("give either {vs_key} or {weights_key}"))),
        (Some(id), None) => Ok(Some(VsRef::Id(vs_id(id)?))),
        (None, Some(w)) => Ok(Some(VsRef::Inline(inline_weights(w)?))),
        (None, None) => Ok(None),
    }
}

impl App {
    fn authorize(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        if self.service.is_read_only() {
            return Err(ApiError::read_only());
        }
        let Some(token) = &self.token else {
            return Ok(());
        };
        let presented = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented == Some(&**token) {
            Ok(())
        } else {
            Err(ApiError::new("UNAUTHORIZED", "a valid bearer token is required for writes"))
        }
    }

    /// Authorize, then run a mutation off the async workers.
    async fn write<T, F>(&self, headers: &HeaderMap, status: u16, f: F) -> Response
    where
        T: Serialize + Send + 'static,
        F: FnOnce(&Service) -> Result<T, ApiError> + Send + 'static,
    {
        if let Err(e) = self.authorize(headers) {
            return e.into_response();
        }
        let service = Arc::clone(&self.service);
        let r = tokio::task::spawn_blocking(move || f(&service))
            .await
            .unwrap_or_else(|e| Err(ApiError::internal(e.to_string())));
        reply(status, r)
    }
}

async fn health(AxState(app): AxState<App>) -> Response {
    reply(200, Ok(app.service.health()))
}

async fn indicators(AxState(app): AxState<App>) -> Response {
    reply(200, Ok(app.service.indicators()))
}

async fn create_resource(AxState(app): AxState<App>, headers: HeaderMap, body: Bytes) -> Response {
    let req: NewResource = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    app.write(&headers, 201, move |s| s.register(req)).await
}

async fn attach(AxState(app): AxState<App>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    let parsed = resource_id(&id).and_then(|owner| Ok((owner, parse_body(&body)?)));
    match parsed {
        Ok((owner, req)) => app.write(&headers, 201, move |s| s.attach(owner, req)).await,
        Err(e) => e.into_response(),
    }
}

async fn verify(AxState(app): AxState<App>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    let parsed = AchievementId::new(id)
        .map_err(|e| ApiError::from(valrank_core::DomainError::from(e)))
        .and_then(|id| Ok((id, parse_body::<VerificationRequest>(&body)?)));
    match parsed {
        Ok((id, req)) => app.write(&headers, 200, move |s| s.verify(id, req)).await,
        Err(e) => e.into_response(),
    }
}

async fn import(AxState(app): AxState<App>, p: Params, headers: HeaderMap, body: Bytes) -> Response {
    let atomic = match params(p) {
        Ok(m) => matches!(m.get("atomic").map(String::as_str), Some("true" | "1")),
        Err(e) => return e.into_response(),
    };
    app.write(&headers, 200, move |s| s.import(&body, atomic)).await
}

async fn create_value_system(AxState(app): AxState<App>, headers: HeaderMap, body: Bytes) -> Response {
    match parse_body::<PsvDocument>(&body) {
        Ok(doc) => app.write(&headers, 201, move |s| s.create_value_system(doc)).await,
        Err(e) => e.into_response(),
    }
}

async fn get_value_system(AxState(app): AxState<App>, Path(id): Path<String>) -> Response {
    reply(200, vs_id(&id).and_then(|id| app.service.value_system(&id)))
}

async fn aggregate(AxState(app): AxState<App>, headers: HeaderMap, body: Bytes) -> Response {
    match parse_body::<AggregateRequest>(&body) {
        Ok(req) => app.write(&headers, 201, move |s| s.aggregate(req)).await,
        Err(e) => e.into_response(),
    }
}

async fn rankings(AxState(app): AxState<App>, p: Params) -> Response {
    let r = params(p).and_then(|m| {
        let vs = vs_param(&m, "vs", "weights")?
            .ok_or_else(|| ApiError::bad_request("vs or weights is required"))?;
        app.service.rankings(RankingParams {
            kind: m.get("kind").cloned().unwrap_or_else(|| "person".into()),
            vs,
            filter: m.get("filter").cloned(),
        })
    });
    reply(200, r)
}

async fn comparisons(AxState(app): AxState<App>, p: Params) -> Response {
    let r = params(p).and_then(|m| {
        let need = |v: Option<VsRef>, name: &str| v.ok_or_else(|| ApiError::bad_request(format!("{name} is required")));
        let a = need(vs_param(&m, "a", "a_weights")?, "a")?;
        let b = need(vs_param(&m, "b", "b_weights")?, "b")?;
        let kind = m.get("kind").map_or("person", String::as_str);
        app.service.compare(kind, a, b)
    });
    reply(200, r)
}

async fn queries(AxState(app): AxState<App>, body: Bytes) -> Response {
    reply(200, parse_body::<QueryRequest>(&body).and_then(|q| app.service.query(q)))
}

async fn decisions(AxState(app): AxState<App>, body: Bytes) -> Response {
    reply(200, parse_body::<DecisionRequest>(&body).and_then(|q| app.service.decide(q)))
}

async fn report(AxState(app): AxState<App>, Path(id): Path<String>, p: Params) -> Response {
    let r = params(p).and_then(|m| {
        let vs = vs_param(&m, "vs", "weights")?;
        app.service.report(&resource_id(&id)?, vs)
    });
    reply(200, r)
}

async fn league(AxState(app): AxState<App>) -> Response {
    reply(200, app.service.league())
}

async fn league_init(AxState(app): AxState<App>, headers: HeaderMap, body: Bytes) -> Response {
    match parse_body::<LeagueInitRequest>(&body) {
        Ok(req) => app.write(&headers, 200, move |s| s.league_init(req)).await,
        Err(e) => e.into_response(),
    }
}

async fn league_epoch(AxState(app): AxState<App>, headers: HeaderMap, body: Bytes) -> Response {
    let req = if body.iter().all(u8::is_ascii_whitespace) {
        Ok(EpochRequest::default())
    } else {
        parse_body::<EpochRequest>(&body)
    };
    match req {
        Ok(req) => app.write(&headers, 200, move |s| s.league_epoch(req)).await,
        Err(e) => e.into_response(),
    }
}

async fn league_simulate(AxState(app): AxState<App>, body: Bytes) -> Response {
    let service = Arc::clone(&app.service);
    let r = match parse_body::<SimulateRequest>(&body) {
        Ok(req) => tokio::task::spawn_blocking(move || service.league_simulate(req))
            .await
            .unwrap_or_else(|e| Err(ApiError::internal(e.to_string()))),
        Err(e) => Err(e),
    };
    reply(200, r)
}

async fn league_audit(AxState(app): AxState<App>, p: Params) -> Response {
    let r = params(p).and_then(|m| {
        let from = match m.get("from_seq") {
            Some(s) => s
                .parse::<u64>()
                .map_err(|_| ApiError::bad_request(format!("from_seq {s:?} is not a number")))?,
            None => 1,
        };
        Ok(app.service.audit_from(from))
    });
    reply(200, r)
}

async fn not_found() -> Response {
    ApiError::new("NOT_FOUND", "no such endpoint").into_response()
}

/// All routes over a shared service. Writes need `token` as a bearer token
/// when one is configured; reads are anonymous.
pub fn router(service: Arc<Service>, token: Option<String>) -> Router {
    let app = App {
        service,
        token: token.map(Into::into),
    };
    Router::new()
        .route("/health", get(health))
        .route("/indicators", get(indicators))
        .route("/resources", post(create_resource))
        .route("/resources/{id}/achievements", post(attach))
        .route("/achievements/{id}/verification", post(verify))
        .route("/imports", post(import))
        .route("/value-systems", post(create_value_system))
        .route("/value-systems/aggregate", post(aggregate))
        .route("/value-systems/{id}", get(get_value_system))
        .route("/rankings", get(rankings))
        .route("/comparisons", get(comparisons))
        .route("/queries", post(queries))
        .route("/decisions", post(decisions))
        .route("/reports/{id}", get(report))
        .route("/league", get(league))
        .route("/league/init", post(league_init))
        .route("/league/epoch", post(league_epoch))
        .route("/league/simulate", post(league_simulate))
        .route("/league/audit", get(league_audit))
        .fallback(not_found)
        .with_state(app)
}

/// Bind a listener; an address in use maps to `PORT_IN_USE`.
pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ApiError> {
    TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            ApiError::new("PORT_IN_USE", format!("{addr} is already in use"))
        } else {
            ApiError::new("IO_ERROR", format!("cannot bind {addr}: {e}"))
        }
    })
}

pub async fn serve(
    listener: TcpListener,
    router: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ApiError> {
    axum::serve(listener, router)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| ApiError::new("IO_ERROR", e.to_string()))
}
