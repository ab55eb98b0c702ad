//! JSON web service. Handlers authenticate, then delegate to the catalogue,
//! orchestrator and range modules, which make every access decision.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, FromRequestParts, Multipart, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use vtank_core::access::Visibility;
use vtank_core::query::{BrushSpec, Coordinate, DashboardQuery};
use vtank_core::range::{RangeParameter, RangeSpec};
use vtank_core::status::DashboardStatus;

use crate::catalogue::{NewMachine, NewSimSetup, NewSimulation};
use crate::error::{Error, ErrorKind};
use crate::inp::InpPhysics;
use crate::model::{HelpKind, Simulation, TaskKind, User};
use crate::pipeline::StatusPost;
use crate::rangerun;
use crate::service::App;

type Shared = Arc<App>;

pub const MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

/// Context saved with an internal error.
#[derive(Debug, Clone)]
struct TicketInfo {
    message: String,
    backtrace: String,
}

pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

pub fn status_of(kind: ErrorKind) -> StatusCode {
    match kind {
        ErrorKind::Validation => StatusCode::BAD_REQUEST,
        ErrorKind::Unauthenticated => StatusCode::UNAUTHORIZED,
        ErrorKind::NotAuthorized | ErrorKind::NotFound => StatusCode::NOT_FOUND,
        ErrorKind::Conflict => StatusCode::CONFLICT,
        ErrorKind::Io | ErrorKind::Solver | ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = status_of(self.0.kind());
        let name = format!("{:?}", self.0.kind()).to_uppercase();
        let mut resp = (code, Json(json!({ "error": name, "message": self.0.to_string() }))).into_response();
        if code == StatusCode::INTERNAL_SERVER_ERROR {
            resp.extensions_mut().insert(TicketInfo {
                message: self.0.to_string(),
                backtrace: std::backtrace::Backtrace::force_capture().to_string(),
            });
        }
        resp
    }
}

type ApiResult<T = Response> = Result<T, ApiError>;

/// Runs catalogue work off the async threads; a panic becomes a 500.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> crate::Result<T> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError),
        Err(e) => Err(ApiError(Error::internal(format!("handler panicked: {e}")))),
    }
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    let v = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    v.strip_prefix("Bearer ").map(|t| t.trim().to_string())
}

/// The authenticated, approved caller.
pub struct Authed(pub User, pub String);

impl FromRequestParts<Shared> for Authed {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, app: &Shared) -> Result<Self, Self::Rejection> {
        let token = bearer(&parts.headers).ok_or(ApiError(Error::Unauthenticated))?;
        let user = app.cat.authenticate(&token)?;
        Ok(Authed(user, token))
    }
}

fn user_view(u: &User) -> Value {
    json!({
        "id": u.id,
        "login": u.login,
        "display_name": u.display_name,
        "approved": u.approved,
        "admin": u.admin,
        "organization_ids": u.organization_ids,
    })
}

/// A simulation as clients see it: without the job callback token.
fn sim_view(s: &Simulation) -> Value {
    let mut v = serde_json::to_value(s).unwrap_or(Value::Null);
    if let Some(o) = v.as_object_mut() {
        o.remove("callback_token");
    }
    v
}

fn sims_view(sims: &[Simulation]) -> Value {
    Value::Array(sims.iter().map(sim_view).collect())
}

fn created(v: impl serde::Serialize) -> Response {
    (StatusCode::CREATED, Json(v)).into_response()
}

fn ok(v: impl serde::Serialize) -> Response {
    Json(v).into_response()
}

/// Writes one ticket file per internal error.
async fn error_tickets(State(app): State<Shared>, req: Request, next: Next) -> Response {
    let method = req.method().to_string();
    let path = req.uri().path().to_string();
    let resp = next.run(req).await;
    if let Some(t) = resp.extensions().get::<TicketInfo>() {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let ticket = json!({
            "id": id,
            "at": app.cat.now(),
            "method": method,
            "path": path,
            "error": t.message,
            "backtrace": t.backtrace,
        });
        let dir = app.config.tickets_dir();
        let res = std::fs::create_dir_all(&dir)
            .and_then(|_| std::fs::write(dir.join(format!("{id}.json")), serde_json::to_vec_pretty(&ticket).unwrap_or_default()));
        match res {
            Ok(()) => log::error!("{method} {path}: {} (ticket {id})", t.message),
            Err(e) => log::error!("{method} {path}: {} (ticket not saved: {e})", t.message),
        }
    }
    resp
}

pub fn router(app: Shared) -> Router {
    Router::new()
        .route("/auth/login", post(login))
        .route("/auth/logout", post(logout))
        .route("/auth/register", post(register))
        .route("/auth/me", get(me))
        .route("/users/{id}/approve", post(approve_user))
        .route("/organizations", get(list_orgs).post(create_org))
        .route("/organizations/{id}/members", post(add_member))
        .route("/organizations/{id}/machines", post(grant_machine))
        .route("/organizations/{id}/simsetups", post(grant_simsetup))
        .route("/machines", get(list_machines).post(add_machine))
        .route("/machines/{id}/enable", post(enable_machine))
        .route("/machines/{id}/disable", post(disable_machine))
        .route("/simsetups", get(list_simsetups).post(add_simsetup))
        .route("/simsetups/{id}/machines", post(support_machine))
        .route("/geometries", get(list_geometries).post(upload_geometry))
        .route("/geometries/{id}", get(get_geometry))
        .route("/geometries/{id}/file", get(geometry_file))
        .route("/geometries/{id}/preview", get(geometry_preview))
        .route("/geometries/{id}/help", post(geometry_help))
        .route("/simulations", get(list_simulations).post(create_simulation))
        .route("/simulations/{id}", get(get_simulation).delete(delete_simulation))
        .route("/simulations/{id}/submit", post(submit_simulation))
        .route("/simulations/{id}/range", post(range_simulation))
        .route("/simulations/{id}/family", get(family))
        .route("/simulations/{id}/results/{*artifact}", get(result_artifact))
        .route("/simulations/{id}/help", post(simulation_help))
        .route("/simulations/{id}/status", post(status_callback))
        .route("/search/simulations", get(search))
        .route("/search/brush", post(brush))
        .route("/search/compare", get(compare))
        .route("/monitor/health", get(health))
        .route("/monitor/consistency", get(consistency))
        .layer(middleware::from_fn_with_state(app.clone(), error_tickets))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(app)
}

/// Serves until the listener fails.
pub async fn serve(app: Shared, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(app)).await
}

// ---- auth and users

#[derive(Deserialize)]
struct LoginBody {
    login: String,
    password: String,
}

async fn login(State(app): State<Shared>, Json(b): Json<LoginBody>) -> ApiResult {
    let s = blocking(move || app.cat.login(&b.login, &b.password)).await?;
    Ok(ok(json!({ "token": s.token, "user_id": s.user_id, "expires_at": s.expires_at })))
}

async fn logout(State(app): State<Shared>, Authed(_, token): Authed) -> ApiResult {
    blocking(move || app.cat.logout(&token)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

#[derive(Deserialize)]
struct RegisterBody {
    login: String,
    #[serde(default)]
    display_name: String,
    password: String,
}

async fn register(State(app): State<Shared>, Json(b): Json<RegisterBody>) -> ApiResult {
    let u = blocking(move || app.cat.register_user(&b.login, &b.display_name, &b.password)).await?;
    Ok(created(user_view(&u)))
}

async fn me(Authed(u, _): Authed) -> ApiResult {
    Ok(ok(user_view(&u)))
}

#[derive(Deserialize, Default)]
struct ApproveBody {
    #[serde(default)]
    admin: bool,
}

async fn approve_user(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>, body: Option<Json<ApproveBody>>) -> ApiResult {
    let admin = body.map(|b| b.0.admin).unwrap_or_default();
    let v = blocking(move || app.cat.approve_user(&u, &id, admin)).await?;
    Ok(ok(user_view(&v)))
}

// ---- organizations, machines, simsetups

#[derive(Deserialize)]
struct NameBody {
    name: String,
}

async fn list_orgs(State(app): State<Shared>, Authed(u, _): Authed) -> ApiResult {
    Ok(ok(app.cat.list_orgs(&u)))
}

async fn create_org(State(app): State<Shared>, Authed(u, _): Authed, Json(b): Json<NameBody>) -> ApiResult {
    Ok(created(blocking(move || app.cat.create_org(&u, &b.name)).await?))
}

#[derive(Deserialize)]
struct UserIdBody {
    user_id: String,
}

#[derive(Deserialize)]
struct MachineIdBody {
    machine_id: String,
}

#[derive(Deserialize)]
struct SimSetupIdBody {
    simsetup_id: String,
}

async fn add_member(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>, Json(b): Json<UserIdBody>) -> ApiResult {
    let v = blocking(move || app.cat.add_member(&u, &id, &b.user_id)).await?;
    Ok(ok(user_view(&v)))
}

async fn grant_machine(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>, Json(b): Json<MachineIdBody>) -> ApiResult {
    Ok(ok(blocking(move || app.cat.grant_machine(&u, &id, &b.machine_id)).await?))
}

async fn grant_simsetup(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>, Json(b): Json<SimSetupIdBody>) -> ApiResult {
    Ok(ok(blocking(move || app.cat.grant_simsetup(&u, &id, &b.simsetup_id)).await?))
}

async fn list_machines(State(app): State<Shared>, Authed(u, _): Authed) -> ApiResult {
    Ok(ok(app.cat.list_machines(&u)))
}

async fn add_machine(State(app): State<Shared>, Authed(u, _): Authed, Json(b): Json<NewMachine>) -> ApiResult {
    Ok(created(blocking(move || app.cat.add_machine(&u, b)).await?))
}

async fn enable_machine(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>) -> ApiResult {
    Ok(ok(blocking(move || app.cat.set_machine_enabled(&u, &id, true)).await?))
}

async fn disable_machine(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>) -> ApiResult {
    Ok(ok(blocking(move || app.cat.set_machine_enabled(&u, &id, false)).await?))
}

async fn list_simsetups(State(app): State<Shared>, Authed(u, _): Authed) -> ApiResult {
    Ok(ok(app.cat.list_simsetups(&u)))
}

async fn add_simsetup(State(app): State<Shared>, Authed(u, _): Authed, Json(b): Json<NewSimSetup>) -> ApiResult {
    Ok(created(blocking(move || app.cat.add_simsetup(&u, b)).await?))
}

async fn support_machine(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>, Json(b): Json<MachineIdBody>) -> ApiResult {
    Ok(ok(blocking(move || app.cat.support_machine(&u, &id, &b.machine_id)).await?))
}

// ---- geometries

async fn upload_geometry(State(app): State<Shared>, Authed(u, _): Authed, mut form: Multipart) -> ApiResult {
    let bad = |e: axum::extract::multipart::MultipartError| ApiError(Error::validation(format!("multipart: {e}")));
    let (mut name, mut org_id, mut file) = (None, None, None);
    while let Some(field) = form.next_field().await.map_err(bad)? {
        match field.name().unwrap_or_default() {
            "name" => name = Some(field.text().await.map_err(bad)?),
            "org_id" => org_id = Some(field.text().await.map_err(bad)?),
            "file" => {
                let filename = field.file_name().unwrap_or("hull.stl").to_string();
                file = Some((filename, field.bytes().await.map_err(bad)?));
            }
            _ => {}
        }
    }
    let (Some(org_id), Some((filename, bytes))) = (org_id, file) else {
        return Err(ApiError(Error::validation("fields org_id and file are required")));
    };
    let name = name.unwrap_or_else(|| filename.clone());
    let (g, task) = blocking(move || {
        let g = app.cat.create_geometry(&u, &org_id, &name, &filename, &bytes)?;
        let task = app.orch.enqueue(TaskKind::ValidateGeometry, &g.id)?;
        Ok((g, task))
    })
    .await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "geometry": g, "task_id": task })))
        .into_response())
}

async fn list_geometries(State(app): State<Shared>, Authed(u, _): Authed) -> ApiResult {
    Ok(ok(app.cat.list_geometries(&u)))
}

async fn get_geometry(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>) -> ApiResult {
    Ok(ok(app.cat.get_geometry(&u, &id)?))
}

fn octets(bytes: Vec<u8>, content_type: &'static str) -> Response {
    ([(header::CONTENT_TYPE, content_type)], bytes).into_response()
}

async fn geometry_file(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>) -> ApiResult {
    let bytes = blocking(move || {
        let g = app.cat.get_geometry(&u, &id)?;
        Ok(app.cat.blobs().get(&g.file_ref)?)
    })
    .await?;
    Ok(octets(bytes, "application/octet-stream"))
}

async fn geometry_preview(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>) -> ApiResult {
    let bytes = blocking(move || {
        let g = app.cat.get_geometry(&u, &id)?;
        let r = g.preview_ref.ok_or_else(|| Error::not_found(format!("preview of {id}")))?;
        Ok(app.cat.blobs().get(&r)?)
    })
    .await?;
    Ok(octets(bytes, "model/stl"))
}

#[derive(Deserialize)]
struct HelpBody {
    text: String,
}

async fn geometry_help(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>, Json(b): Json<HelpBody>) -> ApiResult {
    Ok(created(blocking(move || app.cat.help_request(&u, HelpKind::Geometry, &id, &b.text)).await?))
}

async fn simulation_help(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>, Json(b): Json<HelpBody>) -> ApiResult {
    Ok(created(blocking(move || app.cat.help_request(&u, HelpKind::Simulation, &id, &b.text)).await?))
}

// ---- simulations

#[derive(Deserialize)]
struct CreateSimulationBody {
    name: String,
    org_id: String,
    simsetup_id: String,
    machine_id: String,
    geometry_id: String,
    #[serde(default)]
    visibility: Option<Visibility>,
    #[serde(default)]
    nodes: Option<u32>,
    /// Same shape as the physics block of `lincosim.inp`.
    params: InpPhysics,
}

async fn create_simulation(State(app): State<Shared>, Authed(u, _): Authed, Json(b): Json<CreateSimulationBody>) -> ApiResult {
    let basic = NewSimulation {
        name: b.name,
        org_id: b.org_id,
        simsetup_id: b.simsetup_id,
        machine_id: b.machine_id,
        geometry_id: b.geometry_id,
        visibility: b.visibility.unwrap_or(Visibility::Private),
        nodes: b.nodes,
    };
    let params = (&b.params).into();
    Ok(created(sim_view(&blocking(move || app.cat.create_simulation(&u, basic, params)).await?)))
}

async fn list_simulations(State(app): State<Shared>, Authed(u, _): Authed) -> ApiResult {
    Ok(ok(sims_view(&app.cat.list_simulations(&u))))
}

async fn get_simulation(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>) -> ApiResult {
    Ok(ok(sim_view(&app.cat.get_simulation(&u, &id)?)))
}

async fn delete_simulation(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>) -> ApiResult {
    Ok(ok(sim_view(&blocking(move || app.cat.soft_delete(&u, &id)).await?)))
}

async fn submit_simulation(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>) -> ApiResult {
    let task = blocking(move || app.orch.request_submit(&u, &id)).await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "task_id": task }))).into_response())
}

#[derive(Deserialize)]
struct RangeBody {
    parameter: RangeParameter,
    lo: f64,
    hi: f64,
    count: u32,
    #[serde(default = "yes")]
    submit: bool,
}

fn yes() -> bool {
    true
}

async fn range_simulation(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>, Json(b): Json<RangeBody>) -> ApiResult {
    let spec = RangeSpec { parameter: b.parameter, lo: b.lo, hi: b.hi, count: b.count };
    let (children, tasks) = blocking(move || {
        let children = rangerun::expand(&app.cat, &u, &id, &spec)?;
        let mut tasks = Vec::new();
        if b.submit {
            for c in &children {
                tasks.push(app.orch.request_submit(&u, &c.id)?);
            }
        }
        Ok((children, tasks))
    })
    .await?;
    Ok(created(json!({ "children": sims_view(&children), "task_ids": tasks })))
}

#[derive(Deserialize)]
struct FamilyQuery {
    #[serde(default)]
    y: Option<String>,
}

async fn family(State(app): State<Shared>, Authed(u, _): Authed, Path(id): Path<String>, Query(q): Query<FamilyQuery>) -> ApiResult {
    let y: Coordinate = q.y.as_deref().unwrap_or("total_drag").parse().map_err(Error::from)?;
    let v = blocking(move || {
        let status = rangerun::group_status(&app.cat, &u, &id)?;
        let points = rangerun::family_series(&app.cat, &u, &id, y)?;
        Ok(json!({ "status": status, "y": y.as_str(), "points": points }))
    })
    .await?;
    Ok(ok(v))
}

async fn result_artifact(State(app): State<Shared>, Authed(u, _): Authed, Path((id, artifact)): Path<(String, String)>) -> ApiResult {
    let name = artifact.clone();
    let bytes = blocking(move || app.orch.result_artifact(&u, &id, &artifact)).await?;
    let ct = if name.ends_with(".csv") {
        "text/csv"
    } else if name.ends_with(".json") {
        "application/json"
    } else {
        "application/octet-stream"
    };
    Ok(octets(bytes, ct))
}

/// Job callbacks carry the simulation's own token, not a user session.
async fn status_callback(State(app): State<Shared>, Path(id): Path<String>, headers: HeaderMap, Json(post): Json<StatusPost>) -> ApiResult {
    let token = bearer(&headers).ok_or(ApiError(Error::Unauthenticated))?;
    let applied = blocking(move || {
        app.orch.authorize_callback(&id, &token)?;
        app.orch.status_callback(&id, &post)
    })
    .await?;
    Ok(ok(json!({ "applied": format!("{applied:?}").to_uppercase() })))
}

// ---- search

#[derive(Deserialize)]
struct SearchParams {
    #[serde(default)]
    name: Option<String>,
    /// Comma-separated dashboard statuses.
    #[serde(default)]
    status: Option<String>,
    #[serde(default)]
    org_id: Option<String>,
    #[serde(default)]
    limit: Option<usize>,
    #[serde(default)]
    offset: Option<usize>,
}

pub fn parse_statuses(s: &str) -> crate::Result<std::collections::BTreeSet<DashboardStatus>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| DashboardStatus::parse(x).ok_or_else(|| Error::validation(format!("unknown status {x}"))))
        .collect()
}

async fn search(State(app): State<Shared>, Authed(u, _): Authed, Query(p): Query<SearchParams>) -> ApiResult {
    let q = DashboardQuery {
        name_substring: p.name.filter(|s| !s.is_empty()),
        statuses: p.status.as_deref().map(parse_statuses).transpose()?,
        org_id: p.org_id.filter(|s| !s.is_empty()),
        limit: p.limit.unwrap_or(100),
        offset: p.offset.unwrap_or(0),
    };
    q.validate().map_err(Error::from)?;
    Ok(ok(json!({ "results": app.cat.index().filter(&u.orgs(), &q) })))
}

#[derive(Deserialize)]
struct BrushBody {
    #[serde(default)]
    ids: Option<Vec<String>>,
    intervals: BTreeMap<String, (f64, f64)>,
}

async fn brush(State(app): State<Shared>, Authed(u, _): Authed, Json(b): Json<BrushBody>) -> ApiResult {
    let spec = BrushSpec::from_named(b.intervals.iter().map(|(k, v)| (k.as_str(), *v))).map_err(Error::from)?;
    let orgs = u.orgs();
    let ids = match b.ids {
        Some(ids) => ids,
        None => app.cat.list_simulations(&u).into_iter().map(|s| s.id).collect(),
    };
    Ok(ok(json!({ "ids": app.cat.index().brush(&orgs, &ids, &spec) })))
}

#[derive(Deserialize)]
struct CompareParams {
    ids: String,
    x: String,
    y: String,
}

async fn compare(State(app): State<Shared>, Authed(u, _): Authed, Query(p): Query<CompareParams>) -> ApiResult {
    let x: Coordinate = p.x.parse().map_err(Error::from)?;
    let y: Coordinate = p.y.parse().map_err(Error::from)?;
    let ids: Vec<String> = p.ids.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect();
    let points: Vec<Value> = app
        .cat
        .index()
        .compare_series(&u.orgs(), &ids, x, y)
        .into_iter()
        .map(|(id, xv, yv)| json!({ "id": id, "x": xv, "y": yv }))
        .collect();
    Ok(ok(json!({ "x": x.as_str(), "y": y.as_str(), "points": points })))
}

// ---- monitoring

/// Counts per dashboard status over the whole catalogue.
pub fn health_report(app: &App) -> Value {
    let snap = app.cat.store().snapshot();
    let mut counts: BTreeMap<&str, usize> = DashboardStatus::ALL.iter().map(|s| (s.as_str(), 0)).collect();
    for s in snap.simulations.values() {
        *counts.entry(s.status().as_str()).or_default() += 1;
    }
    json!({
        "status": "ok",
        "simulations": counts,
        "pending_tasks": app.orch.pending_tasks(),
        "machines": snap.machines.len(),
        "enabled_machines": snap.machines.values().filter(|m| m.enabled).count(),
    })
}

async fn health(State(app): State<Shared>, Authed(..): Authed) -> ApiResult {
    Ok(ok(health_report(&app)))
}

async fn consistency(State(app): State<Shared>, Authed(u, _): Authed) -> ApiResult {
    if !u.admin {
        return Err(ApiError(Error::NotAuthorized("admin role required".into())));
    }
    let anomalies = blocking(move || Ok(app.cat.consistency_check(|m, j| app.orch.job_alive(m, j)))).await?;
    Ok(ok(json!({ "anomalies": anomalies })))
}
