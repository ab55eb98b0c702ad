mod common;

use common::{cube_oracle, cube_stl, free_draft, World};
use vtank::error::Error;
use vtank::model::{GeometryValidation, HelpKind, TaskKind, User};
use vtank::rangerun;
use vtank_core::access::Visibility;
use vtank_core::query::{Coordinate, DashboardQuery};
use vtank_core::range::{RangeParameter, RangeSpec};
use vtank_core::status::{DashboardStatus, StepCode};

#[test]
fn rbac_matrix() {
    let w = World::new();
    let carol = w.cat.register_user("carol", "Carol", "pw").unwrap();
    let carol = w.cat.approve_user(&w.admin, &carol.id, false).unwrap();
    let geo_b = w.cat.create_geometry(&w.bob, &w.org_b.id, "g", "cube.stl", &cube_stl()).unwrap();
    w.cat.validate_geometry(&geo_b.id).unwrap();

    // (owner, public, deleted) for each record.
    let mut records = Vec::new();
    for (owner, org, geo) in [(&w.alice, &w.org_a.id, &w.geometry.id), (&w.bob, &w.org_b.id, &geo_b.id)] {
        for (public, deleted) in [(false, false), (true, false), (false, true), (true, true)] {
            let vis = if public { Visibility::Public } else { Visibility::Private };
            let s = w.new_sim_as(owner, org, geo, &format!("r-{public}-{deleted}"), 2.0, vis);
            if deleted {
                w.cat.soft_delete(owner, &s.id).unwrap();
            }
            records.push((s.id, owner.login.clone(), public, deleted));
        }
    }
    let users: [(&User, Option<&str>); 3] = [(&w.alice, Some("alice")), (&w.bob, Some("bob")), (&carol, None)];
    for (u, member_of) in users {
        let listed: Vec<String> = w.cat.list_simulations(u).into_iter().map(|s| s.id).collect();
        let all = DashboardQuery { statuses: Some(DashboardStatus::ALL.into()), ..Default::default() };
        let searched: Vec<String> = w.cat.index().filter(&u.orgs(), &all).into_iter().map(|d| d.id).collect();
        for (id, owner, public, deleted) in &records {
            let member = member_of == Some(owner.as_str());
            let can_read = member || (*public && !*deleted);
            assert_eq!(w.cat.get_simulation(u, id).is_ok(), can_read, "{} reading {owner} public={public} deleted={deleted}", u.login);
            assert_eq!(listed.contains(id), can_read);
            assert_eq!(searched.contains(id), can_read);
            if !can_read {
                assert!(matches!(w.cat.get_simulation(u, id), Err(Error::NotFound(_))));
            }
            let submit = w.orch.request_submit(u, id);
            if member && !*deleted {
                assert!(submit.is_ok(), "{} submitting own record: {submit:?}", u.login);
            } else {
                assert!(submit.is_err());
            }
            if !member {
                assert!(w.cat.soft_delete(u, id).is_err());
            }
        }
    }
}

#[test]
fn geometries_are_organization_private() {
    let w = World::new();
    assert!(w.cat.get_geometry(&w.alice, &w.geometry.id).is_ok());
    assert!(matches!(w.cat.get_geometry(&w.bob, &w.geometry.id), Err(Error::NotFound(_))));
    assert!(w.cat.list_geometries(&w.bob).is_empty());
    assert!(matches!(w.cat.create_geometry(&w.bob, &w.org_a.id, "x", "x.stl", &cube_stl()), Err(Error::NotAuthorized(_))));
    assert!(matches!(w.cat.create_geometry(&w.alice, &w.org_a.id, "cube", "c.stl", &cube_stl()), Err(Error::Conflict(_))));
}

#[test]
fn invalid_geometry_cannot_be_simulated() {
    let w = World::new();
    let mut stl = cube_stl();
    stl.truncate(84 + 50 * 11);
    stl[80..84].copy_from_slice(&11u32.to_le_bytes());
    let g = w.cat.create_geometry(&w.alice, &w.org_a.id, "holey", "holey.stl", &stl).unwrap();
    let id = w.orch.enqueue(TaskKind::ValidateGeometry, &g.id).unwrap();
    w.orch.drain().unwrap();
    assert!(w.orch.task(&id).unwrap().done);
    let g = w.cat.get_geometry(&w.alice, &g.id).unwrap();
    assert_eq!(g.validation, GeometryValidation::Invalid);
    assert!(g.report.unwrap().boundary_edge_count > 0);
    assert!(g.preview_ref.is_some());
    let basic = vtank::catalogue::NewSimulation {
        name: "s".into(),
        org_id: w.org_a.id.clone(),
        simsetup_id: w.setup.id.clone(),
        machine_id: w.machine.id.clone(),
        geometry_id: g.id.clone(),
        visibility: Visibility::Private,
        nodes: None,
    };
    assert!(matches!(w.cat.create_simulation(&w.alice, basic, common::cube_params(1.0)), Err(Error::Validation(_))));
}

#[test]
fn ungranted_machine_is_refused() {
    let w = World::new();
    let sys = User::system();
    let m = w
        .cat
        .add_machine(
            &sys,
            vtank::catalogue::NewMachine {
                name: "other".into(),
                address: "other.example.org".into(),
                root_folder: "/x".into(),
                username: "u".into(),
                scheduler: vtank_core::jobscript::Scheduler::Pbs,
                nodes_default: 1,
                tasks_per_node: 1,
                walltime: 60,
            },
        )
        .unwrap();
    w.cat.set_machine_enabled(&sys, &m.id, true).unwrap();
    let basic = vtank::catalogue::NewSimulation {
        name: "s".into(),
        org_id: w.org_a.id.clone(),
        simsetup_id: w.setup.id.clone(),
        machine_id: m.id.clone(),
        geometry_id: w.geometry.id.clone(),
        visibility: Visibility::Private,
        nodes: None,
    };
    assert!(matches!(w.cat.create_simulation(&w.alice, basic, common::cube_params(1.0)), Err(Error::NotAuthorized(_))));
    assert!(w.cat.list_machines(&w.alice).iter().all(|x| x.id != m.id));
}

#[test]
fn users_need_approval() {
    let w = World::new();
    let u = w.cat.register_user("dave", "Dave", "secret").unwrap();
    assert!(matches!(w.cat.login("dave", "secret"), Err(Error::Unauthenticated)));
    assert!(matches!(w.cat.approve_user(&w.alice, &u.id, false), Err(Error::NotAuthorized(_))));
    w.cat.approve_user(&w.admin, &u.id, false).unwrap();
    assert!(matches!(w.cat.login("dave", "wrong"), Err(Error::Unauthenticated)));
    let s = w.cat.login("dave", "secret").unwrap();
    assert_eq!(w.cat.authenticate(&s.token).unwrap().login, "dave");
    w.clock.advance(24.0 * 3600.0 + 1.0);
    assert!(w.cat.authenticate(&s.token).is_err());
    assert!(matches!(w.cat.register_user("dave", "D", "x"), Err(Error::Conflict(_))));
}

#[test]
fn help_requests_reach_support() {
    let w = World::new();
    let s = w.new_sim("s", 1.0);
    w.cat.help_request(&w.alice, HelpKind::Simulation, &s.id, "why so slow").unwrap();
    assert!(w.cat.help_request(&w.bob, HelpKind::Simulation, &s.id, "let me in").is_err());
    assert!(w.cat.help_request(&w.alice, HelpKind::Geometry, &w.geometry.id, " ").is_err());
    let sent = w.cat.notifier().sent();
    assert_eq!(sent.len(), 1);
    assert_eq!(sent[0].to, "support");
}

#[test]
fn consistency_check_finds_orphans() {
    let w = World::new();
    let s = w.new_sim("s", 1.0);
    w.cat.apply_status(&s.id, StepCode::SUBMITTED, "by hand").unwrap();
    let a = w.cat.consistency_check(|_, _| Some(true));
    assert_eq!(a.len(), 1);
    assert_eq!(a[0].kind, "RUNNING_WITHOUT_JOB");
    std::fs::remove_file(w.cat.blobs().path(&w.geometry.file_ref)).unwrap();
    let kinds: Vec<String> = w.cat.consistency_check(|_, _| Some(true)).into_iter().map(|a| a.kind).collect();
    assert!(kinds.contains(&"MISSING_GEOMETRY_FILE".to_string()));
}

#[test]
fn velocity_range_drag_increases() {
    let w = World::new();
    let base = w.new_sim("sweep", 1.0);
    let spec = RangeSpec { parameter: RangeParameter::Velocity, lo: 1.0, hi: 5.0, count: 5 };
    let kids = rangerun::expand(&w.cat, &w.alice, &base.id, &spec).unwrap();
    let names: Vec<&str> = kids.iter().map(|k| k.name.as_str()).collect();
    assert_eq!(names, ["sweep_r001", "sweep_r002", "sweep_r003", "sweep_r004", "sweep_r005"]);
    assert!(matches!(w.orch.request_submit(&w.alice, &base.id), Err(Error::Conflict(_))));
    assert!(matches!(rangerun::expand(&w.cat, &w.alice, &base.id, &spec), Err(Error::Conflict(_))));
    assert!(rangerun::expand(&w.cat, &w.bob, &kids[0].id, &spec).is_err());
    for k in &kids {
        w.orch.request_submit(&w.alice, &k.id).unwrap();
    }
    w.orch.drain().unwrap();
    assert_eq!(rangerun::group_status(&w.cat, &w.alice, &base.id).unwrap(), DashboardStatus::Running);
    for (i, k) in kids.iter().enumerate() {
        for p in w.run_job(&k.id) {
            w.orch.status_callback(&k.id, &p).unwrap();
        }
        w.orch.drain().unwrap();
        if i + 1 < kids.len() {
            let e = rangerun::family_series(&w.cat, &w.alice, &base.id, Coordinate::TotalDrag).unwrap_err();
            assert!(e.to_string().contains("INCOMPLETE_FAMILY"), "{e}");
        }
    }
    assert_eq!(rangerun::group_status(&w.cat, &w.alice, &base.id).unwrap(), DashboardStatus::Completed);
    let series = rangerun::family_series(&w.cat, &w.alice, &base.id, Coordinate::TotalDrag).unwrap();
    assert_eq!(series.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    assert!(series.windows(2).all(|p| p[0].1 < p[1].1), "{series:?}");
    for (v, drag) in series {
        let (_, want) = cube_oracle(v, free_draft());
        assert!((drag - want).abs() <= 1e-6 * want, "v={v}: {drag} vs {want}");
    }
}
