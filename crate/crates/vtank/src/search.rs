//! In-process dashboard index: trigram postings on lower-cased names,
//! status and organization postings, and sorted numeric columns for
//! brushing. Kept in sync by the catalogue on every simulation write.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Bound;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use vtank_core::access::{can_read, Visibility};
use vtank_core::query::{dashboard_order, BrushSpec, Coordinate, DashboardQuery};
use vtank_core::status::DashboardStatus;

use crate::model::{Id, Simulation};

/// What the dashboard needs to know about one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDoc {
    pub id: Id,
    pub name: String,
    pub status: DashboardStatus,
    pub owner_org_id: Id,
    pub visibility: Visibility,
    pub deleted: bool,
    pub created_at: f64,
    pub range_parent_id: Option<Id>,
    pub coords: BTreeMap<Coordinate, f64>,
}

impl SimDoc {
    pub fn from_sim(s: &Simulation) -> Self {
        let mut coords = BTreeMap::new();
        coords.insert(Coordinate::Velocity, s.params.velocity);
        coords.insert(Coordinate::Mass, s.params.mass);
        coords.insert(Coordinate::TrimAngle, s.params.trim_angle);
        if let (Some(k), DashboardStatus::Completed) = (&s.kpis, s.status_history.status()) {
            coords.insert(Coordinate::TotalDrag, k.total_drag);
            coords.insert(Coordinate::Wsa, k.wsa);
            coords.insert(Coordinate::PMax, k.p_max);
            coords.insert(Coordinate::PMin, k.p_min);
            coords.insert(Coordinate::MaxWaveHeight, k.max_wave_height_on_hull);
            coords.insert(Coordinate::FinalTrim, k.final_trim);
            coords.insert(Coordinate::FinalSink, k.final_sink);
        }
        Self {
            id: s.id.clone(),
            name: s.name.clone(),
            status: s.status(),
            owner_org_id: s.owner_org_id.clone(),
            visibility: s.visibility,
            deleted: s.deleted,
            created_at: s.created_at,
            range_parent_id: s.range_parent_id.clone(),
            coords,
        }
    }

    pub fn visible_to(&self, viewer_orgs: &[Id]) -> bool {
        can_read(self.visibility, &self.owner_org_id, viewer_orgs, self.deleted)
    }

    pub fn coord(&self, c: Coordinate) -> Option<f64> {
        self.coords.get(&c).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn trigrams(lower: &str) -> BTreeSet<String> {
    let chars: Vec<char> = lower.chars().collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

#[derive(Default)]
struct Data {
    docs: BTreeMap<Id, SimDoc>,
    grams: HashMap<String, BTreeSet<Id>>,
    by_status: BTreeMap<DashboardStatus, BTreeSet<Id>>,
    by_org: BTreeMap<Id, BTreeSet<Id>>,
    columns: BTreeMap<Coordinate, BTreeSet<(Key, Id)>>,
}

impl Data {
    fn remove(&mut self, id: &str) {
        let Some(old) = self.docs.remove(id) else { return };
        for g in trigrams(&old.name.to_lowercase()) {
            if let Some(set) = self.grams.get_mut(&g) {
                set.remove(id);
                if set.is_empty() {
                    self.grams.remove(&g);
                }
            }
        }
        if let Some(set) = self.by_status.get_mut(&old.status) {
            set.remove(id);
        }
        if let Some(set) = self.by_org.get_mut(&old.owner_org_id) {
            set.remove(id);
        }
        for (c, v) in &old.coords {
            if let Some(col) = self.columns.get_mut(c) {
                col.remove(&(Key(*v), old.id.clone()));
            }
        }
    }

    fn insert(&mut self, doc: SimDoc) {
        self.remove(&doc.id);
        let id = doc.id.clone();
        for g in trigrams(&doc.name.to_lowercase()) {
            self.grams.entry(g).or_default().insert(id.clone());
        }
        self.by_status.entry(doc.status).or_default().insert(id.clone());
        self.by_org.entry(doc.owner_org_id.clone()).or_default().insert(id.clone());
        for (c, v) in &doc.coords {
            self.columns.entry(*c).or_default().insert((Key(*v), id.clone()));
        }
        self.docs.insert(id, doc);
    }
}

#[derive(Default)]
pub struct SearchIndex {
    data: RwLock<Data>,
}

impl SearchIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rebuild<'a>(&self, sims: impl IntoIterator<Item = &'a Simulation>) {
        let mut d = Data::default();
        for s in sims {
            d.insert(SimDoc::from_sim(s));
        }
        *self.data.write().unwrap_or_else(|e| e.into_inner()) = d;
    }

    pub fn upsert(&self, sim: &Simulation) {
        self.data.write().unwrap_or_else(|e| e.into_inner()).insert(SimDoc::from_sim(sim));
    }

    pub fn remove(&self, id: &str) {
        self.data.write().unwrap_or_else(|e| e.into_inner()).remove(id);
    }

    pub fn len(&self) -> usize {
        self.data.read().unwrap_or_else(|e| e.into_inner()).docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &str) -> Option<SimDoc> {
        self.data.read().unwrap_or_else(|e| e.into_inner()).docs.get(id).cloned()
    }

    /// Dashboard filter, RBAC applied first.
    pub fn filter(&self, viewer_orgs: &[Id], q: &DashboardQuery) -> Vec<SimDoc> {
        let d = self.data.read().unwrap_or_else(|e| e.into_inner());
        let statuses: Vec<DashboardStatus> = match &q.statuses {
            Some(s) => s.iter().copied().collect(),
            None => DashboardStatus::ALL.into_iter().filter(|s| *s != DashboardStatus::Deleted).collect(),
        };
        let mut cand: BTreeSet<&Id> = statuses.iter().filter_map(|s| d.by_status.get(s)).flatten().collect();
        if let Some(org) = &q.org_id {
            let in_org = d.by_org.get(org);
            cand.retain(|id| in_org.is_some_and(|s| s.contains(*id)));
        }
        if let Some(needle) = &q.name_substring {
            let grams = trigrams(&needle.to_lowercase());
            for g in &grams {
                match d.grams.get(g) {
                    Some(post) => cand.retain(|id| post.contains(*id)),
                    None => cand.clear(),
                }
            }
        }
        let mut out: Vec<SimDoc> = cand
            .into_iter()
            .map(|id| &d.docs[id])
            .filter(|doc| doc.visible_to(viewer_orgs) && q.matches(&doc.name, doc.status, &doc.owner_org_id))
            .cloned()
            .collect();
        out.sort_by(|a, b| dashboard_order(a.created_at, &a.id, b.created_at, &b.id));
        out.into_iter().skip(q.offset).take(q.limit).collect()
    }

    /// Ids (in input order) of visible Completed simulations inside every
    /// interval of `spec`.
    pub fn brush(&self, viewer_orgs: &[Id], ids: &[Id], spec: &BrushSpec) -> Vec<Id> {
        let d = self.data.read().unwrap_or_else(|e| e.into_inner());
        let mut hit: Option<BTreeSet<&Id>> = None;
        for (c, (lo, hi)) in &spec.intervals {
            let col = d.columns.get(c);
            let ids_in: BTreeSet<&Id> = col
                .map(|col| {
                    col.range((Bound::Included((Key(*lo), Id::new())), Bound::Unbounded))
                        .take_while(|(k, _)| k.0 <= *hi)
                        .map(|(_, id)| id)
                        .collect()
                })
                .unwrap_or_default();
            hit = Some(match hit {
                None => ids_in,
                Some(h) => h.intersection(&ids_in).copied().collect(),
            });
        }
        ids.iter()
            .filter(|id| {
                d.docs.get(*id).is_some_and(|doc| doc.visible_to(viewer_orgs) && doc.status == DashboardStatus::Completed)
                    && hit.as_ref().is_none_or(|h| h.contains(id))
            })
            .cloned()
            .collect()
    }

    /// One `(id, x, y)` point per visible Completed simulation having both
    /// coordinates, sorted by x then id.
    pub fn compare_series(&self, viewer_orgs: &[Id], ids: &[Id], x: Coordinate, y: Coordinate) -> Vec<(Id, f64, f64)> {
        let d = self.data.read().unwrap_or_else(|e| e.into_inner());
        let mut pts: Vec<(Id, f64, f64)> = ids
            .iter()
            .filter_map(|id| d.docs.get(id))
            .filter(|doc| doc.visible_to(viewer_orgs) && doc.status == DashboardStatus::Completed)
            .filter_map(|doc| Some((doc.id.clone(), doc.coord(x)?, doc.coord(y)?)))
            .collect();
        pts.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        pts.dedup_by(|a, b| a.0 == b.0);
        pts
    }
}

/// Direct scan with the same predicates; the reference the index must match.
pub fn scan_filter<'a>(docs: impl IntoIterator<Item = &'a SimDoc>, viewer_orgs: &[Id], q: &DashboardQuery) -> Vec<SimDoc> {
    let mut out: Vec<SimDoc> = docs
        .into_iter()
        .filter(|doc| doc.visible_to(viewer_orgs) && q.matches(&doc.name, doc.status, &doc.owner_org_id))
        .cloned()
        .collect();
    out.sort_by(|a, b| dashboard_order(a.created_at, &a.id, b.created_at, &b.id));
    out.into_iter().skip(q.offset).take(q.limit).collect()
}
