//! Visibility rule for simulations.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Visibility {
    Private,
    Public,
}

/// Whether a viewer belonging to `viewer_orgs` may read a simulation owned by
/// `owner_org`. Deleted records stay visible to the owner organization only.
pub fn can_read<O: PartialEq>(visibility: Visibility, owner_org: &O, viewer_orgs: &[O], deleted: bool) -> bool {
    let member = viewer_orgs.iter().any(|o| o == owner_org);
    if deleted {
        return member;
    }
    member || visibility == Visibility::Public
}

/// Only members of the owner organization may modify a record.
pub fn can_write<O: PartialEq>(owner_org: &O, viewer_orgs: &[O]) -> bool {
    viewer_orgs.iter().any(|o| o == owner_org)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules() {
        assert!(can_read(Visibility::Public, &1, &[2], false));
        assert!(!can_read(Visibility::Private, &1, &[2], false));
        assert!(can_read(Visibility::Private, &1, &[2, 1], false));
        assert!(!can_read(Visibility::Public, &1, &[2], true));
        assert!(can_read(Visibility::Public, &1, &[1], true));
    }
}
