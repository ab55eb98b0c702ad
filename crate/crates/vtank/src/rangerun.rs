//! Range simulations: a base simulation fanned out over one parameter.

use vtank_core::access::can_write;
use vtank_core::query::Coordinate;
use vtank_core::range::{child_name, family_status, RangeSpec};
use vtank_core::status::{DashboardStatus, StatusHistory, StepCode};

use crate::catalogue::{check_new_simulation, new_id, new_token, Catalogue, NewSimulation};
use crate::error::{Error, Result};
use crate::model::{Simulation, User};
use crate::search::SimDoc;

/// Creates one child per sweep value in a single transaction and turns the
/// base into a group header. Children start in Created.
pub fn expand(cat: &Catalogue, user: &User, base_id: &str, spec: &RangeSpec) -> Result<Vec<Simulation>> {
    let base = cat.get_simulation(user, base_id)?;
    if !can_write(&base.owner_org_id, &user.orgs()) {
        return Err(Error::NotAuthorized(format!("simulation {base_id} belongs to another organization")));
    }
    let params = spec.expand(&base.params)?;
    let now = cat.now();
    let basic = NewSimulation {
        name: base.name.clone(),
        org_id: base.owner_org_id.clone(),
        simsetup_id: base.simsetup_id.clone(),
        machine_id: base.machine_id.clone(),
        geometry_id: base.geometry_id.clone(),
        visibility: base.visibility,
        nodes: base.nodes,
    };
    let mut sims = cat.insert_simulations(|t| {
        check_new_simulation(t, user, &basic)?;
        let b = t.simulations.get_mut(base_id).ok_or_else(|| Error::not_found(format!("simulation {base_id}")))?;
        if b.deleted || b.is_group || b.range_parent_id.is_some() || b.status_history.current() != StepCode::CREATED {
            return Err(Error::Conflict(format!("simulation {base_id} cannot be expanded from state {}", b.status().as_str())));
        }
        b.is_group = true;
        b.range = Some(*spec);
        let header = b.clone();
        let mut out = Vec::with_capacity(params.len() + 1);
        for (i, p) in params.into_iter().enumerate() {
            let child = Simulation {
                id: new_id("sim"),
                name: child_name(&base.name, i),
                params: p,
                status_history: StatusHistory::created(now),
                range_parent_id: Some(base_id.to_string()),
                is_group: false,
                range: None,
                results_ref: None,
                kpis: None,
                created_at: now,
                created_by: user.id.clone(),
                callback_token: new_token(),
                ..header.clone()
            };
            t.simulations.insert(child.id.clone(), child.clone());
            out.push(child);
        }
        out.push(header);
        Ok(out)
    })?;
    sims.pop();
    Ok(sims)
}

/// Children of a group header visible to `user`, in sweep order.
pub fn children(cat: &Catalogue, user: &User, parent_id: &str) -> Result<(Simulation, Vec<Simulation>)> {
    let parent = cat.get_simulation(user, parent_id)?;
    let spec = parent.range.ok_or_else(|| Error::validation(format!("simulation {parent_id} is not a range group")))?;
    let mut kids: Vec<Simulation> =
        cat.list_simulations(user).into_iter().filter(|s| s.range_parent_id.as_deref() == Some(parent_id)).collect();
    kids.sort_by(|a, b| spec.parameter.get(&a.params).total_cmp(&spec.parameter.get(&b.params)).then(a.name.cmp(&b.name)));
    Ok((parent, kids))
}

/// Aggregate status of a family.
pub fn group_status(cat: &Catalogue, user: &User, parent_id: &str) -> Result<DashboardStatus> {
    let (_, kids) = children(cat, user, parent_id)?;
    Ok(family_status(kids.iter().map(Simulation::status)))
}

/// `(parameter value, y)` per child, ordered by parameter value. Every
/// child must be Completed with results.
pub fn family_series(cat: &Catalogue, user: &User, parent_id: &str, y: Coordinate) -> Result<Vec<(f64, f64)>> {
    let (parent, kids) = children(cat, user, parent_id)?;
    let spec = parent.range.expect("checked by children()");
    let pending: Vec<String> = kids
        .iter()
        .filter(|s| !s.deleted && (s.status() != DashboardStatus::Completed || s.kpis.is_none()))
        .map(|s| format!("{} ({})", s.name, s.status().as_str()))
        .collect();
    if !pending.is_empty() {
        return Err(Error::Conflict(format!("INCOMPLETE_FAMILY: {}", pending.join(", "))));
    }
    kids.iter()
        .filter(|s| !s.deleted)
        .map(|s| {
            let doc = SimDoc::from_sim(s);
            let v = doc.coord(y).ok_or_else(|| Error::validation(format!("{} has no value for {}", s.name, y.as_str())))?;
            Ok((spec.parameter.get(&s.params), v))
        })
        .collect()
}
