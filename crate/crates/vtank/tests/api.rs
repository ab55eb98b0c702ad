mod common;

use std::io;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::{cube_stl, FakeConnector, World};
use vtank::api::router;
use vtank::config::Config;
use vtank::service::App;
use vtank::store::{Backend, Store, Tables};

struct Harness {
    w: World,
    app: Arc<App>,
}

impl Harness {
    fn new() -> Self {
        Self::from_world(World::new())
    }

    fn from_world(w: World) -> Self {
        let config = Config { data_dir: w.dir.path().join("data"), job_exe: Some("vtank".into()), ..Config::default() };
        let app = Arc::new(App::assemble(config, w.cat.clone(), Arc::new(FakeConnector(w.cluster.clone()))).unwrap());
        Self { w, app }
    }

    fn router(&self) -> Router {
        router(self.app.clone())
    }

    async fn raw(&self, req: Request<Body>) -> (StatusCode, Vec<u8>, Option<String>) {
        let resp = self.router().oneshot(req).await.unwrap();
        let status = resp.status();
        let ct = resp.headers().get(header::CONTENT_TYPE).map(|v| v.to_str().unwrap().to_string());
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes, ct)
    }

    async fn call(&self, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let mut b = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            b = b.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let req = match body {
            Some(v) => b.header(header::CONTENT_TYPE, "application/json").body(Body::from(v.to_string())).unwrap(),
            None => b.body(Body::empty()).unwrap(),
        };
        let (status, bytes, _) = self.raw(req).await;
        let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
        (status, v)
    }

    async fn login(&self, login: &str) -> String {
        let (s, v) = self.call(Method::POST, "/auth/login", None, Some(json!({"login": login, "password": "pw"}))).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        v["token"].as_str().unwrap().to_string()
    }

    async fn drain(&self) {
        let orch = self.app.orch.clone();
        tokio::task::spawn_blocking(move || orch.drain().unwrap()).await.unwrap();
    }
}

fn multipart(fields: &[(&str, Option<&str>, &[u8])]) -> (String, Vec<u8>) {
    let boundary = "vtankboundary7MA4YWxk";
    let mut body = Vec::new();
    for (name, filename, data) in fields {
        body.extend_from_slice(format!("--{boundary}\r\n").as_bytes());
        match filename {
            Some(f) => body.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\nContent-Type: application/octet-stream\r\n\r\n")
                    .as_bytes(),
            ),
            None => body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes()),
        }
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

fn sim_body(h: &Harness, geometry_id: &str, velocity: f64) -> Value {
    json!({
        "name": "api-cube",
        "org_id": h.w.org_a.id,
        "simsetup_id": h.w.setup.id,
        "machine_id": h.w.machine.id,
        "geometry_id": geometry_id,
        "params": {
            "mass": 500.0, "cog": [0.5, 0.5, 0.25], "velocity": velocity, "water_temperature": 15.0,
            "inertia": [1.0, 1.0, 1.0], "water_z": 0.5, "wave_height": 0.0, "trim_angle": 0.0
        }
    })
}

#[tokio::test(flavor = "multi_thread")]
async fn auth_flow() {
    let h = Harness::new();
    let (s, _) = h.call(Method::GET, "/auth/me", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = h.call(Method::GET, "/auth/me", Some("forged"), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, v) = h.call(Method::POST, "/auth/register", None, Some(json!({"login": "erin", "password": "pw"}))).await;
    assert_eq!(s, StatusCode::CREATED);
    let erin = v["id"].as_str().unwrap().to_string();
    let (s, _) = h.call(Method::POST, "/auth/register", None, Some(json!({"login": "erin", "password": "x"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = h.call(Method::POST, "/auth/login", None, Some(json!({"login": "erin", "password": "pw"}))).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let alice = h.login("alice").await;
    let (s, _) = h.call(Method::POST, &format!("/users/{erin}/approve"), Some(&alice), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let admin = h.login("admin").await;
    let (s, _) = h.call(Method::POST, &format!("/users/{erin}/approve"), Some(&admin), None).await;
    assert_eq!(s, StatusCode::OK);
    let erin_token = h.login("erin").await;
    let (s, v) = h.call(Method::GET, "/auth/me", Some(&erin_token), None).await;
    assert_eq!((s, v["login"].as_str()), (StatusCode::OK, Some("erin")));
    assert!(v.get("password_hash").is_none());
    let (s, _) = h.call(Method::POST, "/auth/logout", Some(&erin_token), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = h.call(Method::GET, "/auth/me", Some(&erin_token), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
}

#[tokio::test(flavor = "multi_thread")]
async fn simulation_lifecycle_over_http() {
    let h = Harness::new();
    let alice = h.login("alice").await;
    let bob = h.login("bob").await;

    let (ct, body) = multipart(&[("name", None, b"api-hull"), ("org_id", None, h.w.org_a.id.as_bytes()), ("file", Some("hull.stl"), &cube_stl())]);
    let req = Request::post("/geometries")
        .header(header::AUTHORIZATION, format!("Bearer {alice}"))
        .header(header::CONTENT_TYPE, ct)
        .body(Body::from(body))
        .unwrap();
    let (s, bytes, _) = h.raw(req).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    let geo = v["geometry"]["id"].as_str().unwrap().to_string();
    assert_eq!(v["geometry"]["validation"], "PENDING");
    let (s, _) = h.call(Method::POST, "/simulations", Some(&alice), Some(sim_body(&h, &geo, 2.0))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "pending geometry accepted");
    h.drain().await;
    let (s, v) = h.call(Method::GET, &format!("/geometries/{geo}"), Some(&alice), None).await;
    assert_eq!((s, v["validation"].as_str()), (StatusCode::OK, Some("VALID")));
    let (s, _) = h.call(Method::GET, &format!("/geometries/{geo}"), Some(&bob), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let req = Request::get(format!("/geometries/{geo}/file")).header(header::AUTHORIZATION, format!("Bearer {alice}")).body(Body::empty()).unwrap();
    assert_eq!(h.raw(req).await.1, cube_stl());
    let req = Request::get(format!("/geometries/{geo}/preview")).header(header::AUTHORIZATION, format!("Bearer {alice}")).body(Body::empty()).unwrap();
    assert_eq!(h.raw(req).await.0, StatusCode::OK);

    let mut bad = sim_body(&h, &geo, 2.0);
    bad["params"]["mass"] = json!(-1.0);
    let (s, v) = h.call(Method::POST, "/simulations", Some(&alice), Some(bad)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    assert_eq!(v["error"], "VALIDATION");
    let (s, v) = h.call(Method::POST, "/simulations", Some(&alice), Some(sim_body(&h, &geo, 2.0))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    let id = v["id"].as_str().unwrap().to_string();
    let token = h.w.sim(&id).callback_token;
    let (s, _) = h.call(Method::POST, &format!("/simulations/{id}/submit"), Some(&bob), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = h.call(Method::POST, &format!("/simulations/{id}/submit"), Some(&alice), None).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    h.drain().await;
    let (s, _) = h.call(Method::POST, &format!("/simulations/{id}/submit"), Some(&alice), None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let posts = h.w.run_job(&id);
    let (s, _) = h.call(Method::POST, &format!("/simulations/{id}/status"), Some("nope"), Some(json!(posts[0]))).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = h.call(Method::POST, "/simulations/sim-missing/status", Some(&token), Some(json!(posts[0]))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    for p in &posts {
        let (s, v) = h.call(Method::POST, &format!("/simulations/{id}/status"), Some(&token), Some(json!(p))).await;
        assert_eq!((s, v["applied"].as_str()), (StatusCode::OK, Some("APPENDED")));
    }
    let (_, v) = h.call(Method::POST, &format!("/simulations/{id}/status"), Some(&token), Some(json!(posts[1]))).await;
    assert_eq!(v["applied"], "DUPLICATE");
    let late = json!({"step": 3, "message": "late"});
    let (_, v) = h.call(Method::POST, &format!("/simulations/{id}/status"), Some(&token), Some(late)).await;
    assert_eq!(v["applied"], "AFTERTERMINAL");
    h.drain().await;

    let (s, v) = h.call(Method::GET, &format!("/simulations/{id}"), Some(&alice), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status_history"].as_array().map(Vec::len), Some(7), "{v}");
    assert!(v.get("callback_token").is_none(), "token leaked");
    let req = Request::get(format!("/simulations/{id}/results/results/summary.csv"))
        .header(header::AUTHORIZATION, format!("Bearer {alice}"))
        .body(Body::empty())
        .unwrap();
    let (s, bytes, ct) = h.raw(req).await;
    assert_eq!((s, ct.as_deref()), (StatusCode::OK, Some("text/csv")));
    assert_eq!(bytes, std::fs::read(h.w.workdir(&id).join("results/summary.csv")).unwrap());
    let (s, _) = h.call(Method::GET, &format!("/simulations/{id}/results/summary.csv"), Some(&bob), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = h.call(Method::GET, &format!("/simulations/{id}/results/nope.csv"), Some(&alice), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, v) = h.call(Method::GET, "/search/simulations?name=API&status=completed", Some(&alice), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["results"].as_array().unwrap().len(), 1, "{v}");
    let (_, v) = h.call(Method::GET, "/search/simulations?name=API", Some(&bob), None).await;
    assert!(v["results"].as_array().unwrap().is_empty());
    let (s, _) = h.call(Method::GET, "/search/simulations?limit=0", Some(&alice), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = h.call(Method::GET, "/search/simulations?status=BOGUS", Some(&alice), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (_, v) = h.call(Method::POST, "/search/brush", Some(&alice), Some(json!({"intervals": {"total_drag": [0.0, 1e9]}}))).await;
    assert_eq!(v["ids"], json!([id]));
    let (s, _) = h.call(Method::POST, "/search/brush", Some(&alice), Some(json!({"intervals": {"bogus": [0.0, 1.0]}}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (_, v) = h.call(Method::GET, &format!("/search/compare?ids={id}&x=velocity&y=wsa"), Some(&alice), None).await;
    assert_eq!(v["points"][0]["x"], json!(2.0));

    let (s, v) = h.call(Method::GET, "/monitor/health", Some(&alice), None).await;
    assert_eq!((s, v["simulations"]["Completed"].as_u64()), (StatusCode::OK, Some(1)), "{v}");
    let (s, _) = h.call(Method::GET, "/monitor/consistency", Some(&alice), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let admin = h.login("admin").await;
    let (s, v) = h.call(Method::GET, "/monitor/consistency", Some(&admin), None).await;
    assert_eq!((s, v["anomalies"].as_array().map(Vec::len)), (StatusCode::OK, Some(0)), "{v}");

    let (s, v) = h.call(Method::POST, &format!("/simulations/{id}/help"), Some(&alice), Some(json!({"text": "odd drag"}))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    let (s, _) = h.call(Method::DELETE, &format!("/simulations/{id}"), Some(&bob), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = h.call(Method::DELETE, &format!("/simulations/{id}"), Some(&alice), None).await;
    assert_eq!((s, v["deleted"].as_bool()), (StatusCode::OK, Some(true)));
}

#[tokio::test(flavor = "multi_thread")]
async fn range_over_http() {
    let h = Harness::new();
    let alice = h.login("alice").await;
    let (_, v) = h.call(Method::POST, "/simulations", Some(&alice), Some(sim_body(&h, &h.w.geometry.id, 1.0))).await;
    let base = v["id"].as_str().unwrap().to_string();
    let (s, _) = h
        .call(Method::POST, &format!("/simulations/{base}/range"), Some(&alice), Some(json!({"parameter": "velocity", "lo": 3.0, "hi": 1.0, "count": 3})))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, v) = h
        .call(Method::POST, &format!("/simulations/{base}/range"), Some(&alice), Some(json!({"parameter": "velocity", "lo": 1.0, "hi": 3.0, "count": 3})))
        .await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["task_ids"].as_array().unwrap().len(), 3);
    let (s, v) = h.call(Method::GET, &format!("/simulations/{base}/family"), Some(&alice), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(v["message"].as_str().unwrap().contains("INCOMPLETE_FAMILY"));
    h.drain().await;
    for c in v_children(&h, &base) {
        for p in h.w.run_job(&c) {
            h.app.orch.status_callback(&c, &p).unwrap();
        }
    }
    h.drain().await;
    let (s, v) = h.call(Method::GET, &format!("/simulations/{base}/family?y=total_drag"), Some(&alice), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["status"], "Completed");
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 3);
    assert!(pts.windows(2).all(|p| p[0][1].as_f64() < p[1][1].as_f64()));
}

fn v_children(h: &Harness, base: &str) -> Vec<String> {
    vtank::rangerun::children(&h.w.cat, &h.w.alice, base).unwrap().1.into_iter().map(|s| s.id).collect()
}

#[tokio::test(flavor = "multi_thread")]
async fn admin_endpoints_need_admin() {
    let h = Harness::new();
    let alice = h.login("alice").await;
    let admin = h.login("admin").await;
    let (s, _) = h.call(Method::POST, "/organizations", Some(&alice), Some(json!({"name": "rogue"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = h.call(Method::POST, "/organizations", Some(&admin), Some(json!({"name": "org-c"}))).await;
    assert_eq!(s, StatusCode::CREATED);
    let org_c = v["id"].as_str().unwrap().to_string();
    let (s, _) = h.call(Method::POST, &format!("/organizations/{org_c}/members"), Some(&admin), Some(json!({"user_id": h.w.alice.id}))).await;
    assert_eq!(s, StatusCode::OK);
    let machine = json!({"name": "m2", "address": "localhost", "root_folder": "/tmp/m2", "username": "u", "scheduler": "PBS", "nodes_default": 2});
    let (s, _) = h.call(Method::POST, "/machines", Some(&alice), Some(machine.clone())).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = h.call(Method::POST, "/machines", Some(&admin), Some(machine)).await;
    assert_eq!((s, v["enabled"].as_bool()), (StatusCode::CREATED, Some(false)), "{v}");
    let m2 = v["id"].as_str().unwrap().to_string();
    let (s, v) = h.call(Method::POST, &format!("/machines/{m2}/enable"), Some(&admin), None).await;
    assert_eq!((s, v["enabled"].as_bool()), (StatusCode::OK, Some(true)));
    let (s, _) = h.call(Method::POST, &format!("/organizations/{org_c}/machines"), Some(&admin), Some(json!({"machine_id": m2}))).await;
    assert_eq!(s, StatusCode::OK);
    let setup = json!({"name": "two-dof", "dof_mode": "SINK_TRIM_2DOF"});
    let (s, v) = h.call(Method::POST, "/simsetups", Some(&admin), Some(setup)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    let st = v["id"].as_str().unwrap().to_string();
    let (s, _) = h.call(Method::POST, &format!("/simsetups/{st}/machines"), Some(&admin), Some(json!({"machine_id": m2}))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = h.call(Method::POST, &format!("/organizations/{org_c}/simsetups"), Some(&admin), Some(json!({"simsetup_id": st}))).await;
    assert_eq!(s, StatusCode::OK);
    let alice = h.login("alice").await;
    let (_, v) = h.call(Method::GET, "/machines", Some(&alice), None).await;
    assert!(v.as_array().unwrap().iter().any(|m| m["id"] == json!(m2)));
    let (_, v) = h.call(Method::GET, "/simsetups", Some(&alice), None).await;
    assert!(v.as_array().unwrap().iter().any(|m| m["id"] == json!(st)));
    let (_, v) = h.call(Method::GET, "/organizations", Some(&alice), None).await;
    assert_eq!(v.as_array().unwrap().len(), 2);
}

/// Saves succeed until `fail` is set.
struct Switchable(Arc<AtomicBool>);

impl Backend for Switchable {
    fn load(&self) -> io::Result<Option<Tables>> {
        Ok(None)
    }
    fn save(&self, _: &Tables) -> io::Result<()> {
        if self.0.load(Ordering::SeqCst) {
            Err(io::Error::other("disk on fire"))
        } else {
            Ok(())
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn internal_errors_leave_a_ticket() {
    let fail = Arc::new(AtomicBool::new(false));
    let h = Harness::from_world(World::with_store(Store::open(Box::new(Switchable(fail.clone()))).unwrap()));
    let admin = h.login("admin").await;
    fail.store(true, Ordering::SeqCst);
    let (s, v) = h.call(Method::POST, "/organizations", Some(&admin), Some(json!({"name": "doomed"}))).await;
    assert_eq!(s, StatusCode::INTERNAL_SERVER_ERROR);
    assert!(v["message"].as_str().unwrap().contains("disk on fire"));
    let dir = h.app.config.tickets_dir();
    let tickets: Vec<_> = std::fs::read_dir(&dir).unwrap().collect();
    assert_eq!(tickets.len(), 1);
    let t: Value = serde_json::from_slice(&std::fs::read(tickets[0].as_ref().unwrap().path()).unwrap()).unwrap();
    assert_eq!(t["method"], "POST");
    assert_eq!(t["path"], "/organizations");
    assert!(t["error"].as_str().unwrap().contains("disk on fire"));
    assert!(!t["backtrace"].as_str().unwrap().is_empty());
    // Nothing was committed.
    fail.store(false, Ordering::SeqCst);
    assert!(h.w.cat.find_org("doomed").is_err());
    let (s, _) = h.call(Method::GET, "/monitor/health", Some(&admin), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(std::fs::read_dir(&dir).unwrap().count(), 1);
}
