//! Dashboard filters and parallel-coordinates brushing predicates.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use core::cmp::Ordering;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::status::DashboardStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinate {
    Velocity,
    Mass,
    TrimAngle,
    TotalDrag,
    Wsa,
    PMax,
    PMin,
    MaxWaveHeight,
    FinalTrim,
    FinalSink,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("unknown coordinate: {0}")]
    UnknownCoordinate(String),
    #[error("interval for {0} has lo > hi")]
    EmptyInterval(&'static str),
    #[error("limit must be > 0")]
    ZeroLimit,
}

impl Coordinate {
    pub const ALL: [Coordinate; 10] = [
        Self::Velocity,
        Self::Mass,
        Self::TrimAngle,
        Self::TotalDrag,
        Self::Wsa,
        Self::PMax,
        Self::PMin,
        Self::MaxWaveHeight,
        Self::FinalTrim,
        Self::FinalSink,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Velocity => "velocity",
            Self::Mass => "mass",
            Self::TrimAngle => "trim_angle",
            Self::TotalDrag => "total_drag",
            Self::Wsa => "wsa",
            Self::PMax => "p_max",
            Self::PMin => "p_min",
            Self::MaxWaveHeight => "max_wave_height",
            Self::FinalTrim => "final_trim",
            Self::FinalSink => "final_sink",
        }
    }

    /// Whether the value is an input parameter (known before the run).
    pub fn is_input(self) -> bool {
        matches!(self, Self::Velocity | Self::Mass | Self::TrimAngle)
    }
}

impl FromStr for Coordinate {
    type Err = QueryError;
    fn from_str(s: &str) -> Result<Self, QueryError> {
        Self::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| QueryError::UnknownCoordinate(s.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BrushSpec {
    pub intervals: BTreeMap<Coordinate, (f64, f64)>,
}

impl BrushSpec {
    /// Builds a spec from coordinate names.
    pub fn from_named<'a, I: IntoIterator<Item = (&'a str, (f64, f64))>>(items: I) -> Result<Self, QueryError> {
        let mut intervals = BTreeMap::new();
        for (name, iv) in items {
            intervals.insert(name.parse()?, iv);
        }
        let spec = Self { intervals };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        for (c, (lo, hi)) in &self.intervals {
            if !(lo <= hi) {
                return Err(QueryError::EmptyInterval(c.as_str()));
            }
        }
        Ok(())
    }

    /// Every interval must contain the value; a missing value fails.
    pub fn matches(&self, value: impl Fn(Coordinate) -> Option<f64>) -> bool {
        self.intervals.iter().all(|(c, (lo, hi))| value(*c).is_some_and(|v| *lo <= v && v <= *hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardQuery {
    #[serde(default)]
    pub name_substring: Option<String>,
    #[serde(default)]
    pub statuses: Option<BTreeSet<DashboardStatus>>,
    #[serde(default)]
    pub org_id: Option<String>,
    #[serde(default = "default_limit")]
    pub limit: usize,
    #[serde(default)]
    pub offset: usize,
}

fn default_limit() -> usize {
    100
}

impl Default for DashboardQuery {
    fn default() -> Self {
        Self { name_substring: None, statuses: None, org_id: None, limit: default_limit(), offset: 0 }
    }
}

impl DashboardQuery {
    pub fn validate(&self) -> Result<(), QueryError> {
        if self.limit == 0 {
            return Err(QueryError::ZeroLimit);
        }
        Ok(())
    }

    pub fn status_allowed(&self, status: DashboardStatus) -> bool {
        match &self.statuses {
            Some(set) => set.contains(&status),
            None => status != DashboardStatus::Deleted,
        }
    }

    pub fn name_matches(&self, name: &str) -> bool {
        match &self.name_substring {
            Some(s) => contains_ignore_case(name, s),
            None => true,
        }
    }

    pub fn matches(&self, name: &str, status: DashboardStatus, org_id: &str) -> bool {
        self.status_allowed(status)
            && self.org_id.as_deref().is_none_or(|o| o == org_id)
            && self.name_matches(name)
    }
}

pub fn contains_ignore_case(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

/// Dashboard order: newest first, ties by id.
pub fn dashboard_order(a_created: f64, a_id: &str, b_created: f64, b_id: &str) -> Ordering {
    b_created.total_cmp(&a_created).then_with(|| a_id.cmp(b_id))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_coordinate() {
        assert_eq!("bogus".parse::<Coordinate>(), Err(QueryError::UnknownCoordinate("bogus".into())));
        for c in Coordinate::ALL {
            assert_eq!(c.as_str().parse::<Coordinate>().unwrap(), c);
        }
    }

    #[test]
    fn brush_closed_intervals() {
        let b = BrushSpec::from_named([("velocity", (2.0, 4.0))]).unwrap();
        let hits: alloc::vec::Vec<f64> =
            [1.0, 2.0, 3.0, 4.0, 5.0].into_iter().filter(|v| b.matches(|_| Some(*v))).collect();
        assert_eq!(hits, [2.0, 3.0, 4.0]);
        assert!(!b.matches(|_| None));
        assert!(BrushSpec::default().matches(|_| None));
    }

    #[test]
    fn query_defaults_hide_deleted() {
        let q = DashboardQuery::default();
        assert!(!q.matches("a", DashboardStatus::Deleted, "o"));
        assert!(q.matches("a", DashboardStatus::Error, "o"));
        let q = DashboardQuery { name_substring: Some("hull".into()), ..Default::default() };
        assert!(q.matches("WarpedHull_v2", DashboardStatus::Running, "o"));
    }
}
