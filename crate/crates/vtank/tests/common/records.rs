//! Random simulation populations and brute-force query oracles.

use rand::seq::SliceRandom;
use rand::Rng;
use vtank::model::{Id, Simulation};
use vtank_core::access::Visibility;
use vtank_core::kpi::KpiSummary;
use vtank_core::query::{BrushSpec, Coordinate, DashboardQuery};
use vtank_core::status::{DashboardStatus, StepCode};

use super::World;

pub const FRAGMENTS: [&str; 8] = ["Hull", "kcs", "wigley", "Box", "test", "série", "x", "42"];

/// `n` simulations over both organizations with random names, statuses,
/// KPIs, visibility and deletions.
pub fn populate(w: &World, rng: &mut impl Rng, n: usize) -> Vec<Id> {
    let geo_b = w.cat.create_geometry(&w.bob, &w.org_b.id, "cube-b", "cube.stl", &super::cube_stl()).unwrap();
    let geo_b = w.cat.validate_geometry(&geo_b.id).unwrap();
    let mut ids = Vec::new();
    for i in 0..n {
        if rng.gen_bool(0.7) {
            w.clock.advance(rng.gen_range(0.0..10.0));
        }
        let name: String =
            (0..rng.gen_range(1..4)).map(|_| *FRAGMENTS.choose(rng).unwrap()).collect::<Vec<_>>().join("-") + &format!("{i}");
        let vis = if rng.gen_bool(0.4) { Visibility::Public } else { Visibility::Private };
        let v = rng.gen_range(0.5..8.0);
        let s = if rng.gen_bool(0.5) {
            w.new_sim_as(&w.alice, &w.org_a.id, &w.geometry.id, &name, v, vis)
        } else {
            w.new_sim_as(&w.bob, &w.org_b.id, &geo_b.id, &name, v, vis)
        };
        let mut params = s.params;
        params.mass = rng.gen_range(100.0..900.0);
        params.trim_angle = rng.gen_range(-2.0..2.0);
        w.cat.store().write(|t| {
            t.simulations.get_mut(&s.id).unwrap().params = params;
            Ok(())
        }).unwrap();
        let upd = w.cat.simulation(&s.id).unwrap();
        w.cat.index().upsert(&upd);
        let last: i8 = *[0, 1, 3, 6, 6, 6, -4].choose(rng).unwrap();
        for k in 1..=last.max(0) {
            w.cat.apply_status(&s.id, StepCode::new(k).unwrap(), "x").unwrap();
        }
        if last < 0 {
            w.cat.apply_status(&s.id, StepCode::new(last).unwrap(), "boom").unwrap();
        }
        if last == 6 {
            let k = KpiSummary {
                total_drag: rng.gen_range(0.0..100.0),
                p_max: rng.gen_range(0.0..5000.0),
                p_min: rng.gen_range(-500.0..0.0),
                max_wave_height_on_hull: rng.gen_range(0.0..0.2),
                wsa: rng.gen_range(1.0..5.0),
                final_sink: rng.gen_range(-0.1..0.1),
                final_trim: rng.gen_range(-1.0..1.0),
            };
            w.cat.set_results(&s.id, "none", k).unwrap();
        }
        if rng.gen_bool(0.1) {
            let owner = if s.owner_org_id == w.org_a.id { &w.alice } else { &w.bob };
            w.cat.soft_delete(owner, &s.id).unwrap();
        }
        ids.push(s.id);
    }
    ids
}

pub fn random_query(rng: &mut impl Rng, w: &World) -> DashboardQuery {
    let all = DashboardStatus::ALL;
    DashboardQuery {
        name_substring: rng.gen_bool(0.6).then(|| {
            let f = FRAGMENTS.choose(rng).unwrap();
            let a = rng.gen_range(0..f.chars().count());
            let b = rng.gen_range(a + 1..=f.chars().count());
            let s: String = f.chars().skip(a).take(b - a).collect();
            if rng.gen_bool(0.5) { s.to_uppercase() } else { s }
        }),
        statuses: rng.gen_bool(0.5).then(|| all.iter().copied().filter(|_| rng.gen_bool(0.5)).collect()),
        org_id: match rng.gen_range(0..4) {
            0 => Some(w.org_a.id.clone()),
            1 => Some(w.org_b.id.clone()),
            _ => None,
        },
        limit: rng.gen_range(1..80),
        offset: rng.gen_range(0..40),
    }
}

fn status_of(s: &Simulation) -> DashboardStatus {
    if s.deleted {
        return DashboardStatus::Deleted;
    }
    let v = s.status_history.current().value();
    match v {
        0 => DashboardStatus::Created,
        6 => DashboardStatus::Completed,
        v if v < 0 => DashboardStatus::Error,
        _ => DashboardStatus::Running,
    }
}

fn readable(s: &Simulation, orgs: &[Id]) -> bool {
    let member = orgs.contains(&s.owner_org_id);
    member || (!s.deleted && s.visibility == Visibility::Public)
}

/// The dashboard query answered by sorting and scanning every record.
pub fn oracle_filter(sims: &[Simulation], orgs: &[Id], q: &DashboardQuery) -> Vec<Id> {
    let mut hits: Vec<&Simulation> = sims
        .iter()
        .filter(|s| readable(s, orgs))
        .filter(|s| match &q.statuses {
            Some(set) => set.contains(&status_of(s)),
            None => status_of(s) != DashboardStatus::Deleted,
        })
        .filter(|s| q.org_id.as_ref().is_none_or(|o| *o == s.owner_org_id))
        .filter(|s| q.name_substring.as_ref().is_none_or(|n| s.name.to_lowercase().contains(&n.to_lowercase())))
        .collect();
    hits.sort_by(|a, b| b.created_at.partial_cmp(&a.created_at).unwrap().then(a.id.cmp(&b.id)));
    hits.into_iter().skip(q.offset).take(q.limit).map(|s| s.id.clone()).collect()
}

pub fn coordinate(s: &Simulation, c: Coordinate) -> Option<f64> {
    let k = s.kpis.as_ref();
    match c {
        Coordinate::Velocity => Some(s.params.velocity),
        Coordinate::Mass => Some(s.params.mass),
        Coordinate::TrimAngle => Some(s.params.trim_angle),
        Coordinate::TotalDrag => k.map(|k| k.total_drag),
        Coordinate::Wsa => k.map(|k| k.wsa),
        Coordinate::PMax => k.map(|k| k.p_max),
        Coordinate::PMin => k.map(|k| k.p_min),
        Coordinate::MaxWaveHeight => k.map(|k| k.max_wave_height_on_hull),
        Coordinate::FinalTrim => k.map(|k| k.final_trim),
        Coordinate::FinalSink => k.map(|k| k.final_sink),
    }
}

pub fn random_brush(rng: &mut impl Rng) -> BrushSpec {
    let mut spec = BrushSpec::default();
    let bounds = |c: Coordinate| match c {
        Coordinate::Velocity => (0.5, 8.0),
        Coordinate::Mass => (100.0, 900.0),
        Coordinate::TrimAngle => (-2.0, 2.0),
        Coordinate::TotalDrag => (0.0, 100.0),
        Coordinate::Wsa => (1.0, 5.0),
        Coordinate::PMax => (0.0, 5000.0),
        Coordinate::PMin => (-500.0, 0.0),
        Coordinate::MaxWaveHeight => (0.0, 0.2),
        Coordinate::FinalTrim => (-1.0, 1.0),
        Coordinate::FinalSink => (-0.1, 0.1),
    };
    for _ in 0..rng.gen_range(1..4) {
        let c = *Coordinate::ALL.choose(rng).unwrap();
        let (lo, hi) = bounds(c);
        let a = rng.gen_range(lo..hi);
        let b = rng.gen_range(a..=hi);
        spec.intervals.insert(c, (a, b));
    }
    spec
}

/// Ids, in input order, of readable Completed records inside every interval.
pub fn oracle_brush(sims: &[Simulation], orgs: &[Id], ids: &[Id], spec: &BrushSpec) -> Vec<Id> {
    ids.iter()
        .filter(|id| {
            sims.iter().find(|s| &s.id == *id).is_some_and(|s| {
                readable(s, orgs)
                    && status_of(s) == DashboardStatus::Completed
                    && spec.intervals.iter().all(|(c, (lo, hi))| coordinate(s, *c).is_some_and(|v| *lo <= v && v <= *hi))
            })
        })
        .cloned()
        .collect()
}
