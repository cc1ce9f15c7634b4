//! Action spaces: which subsets of hypotheses (or of subpopulations) a
//! procedure may choose in each cell.

use crate::trial::{H01, H02, H0C};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    /// Coherent rejection sets over `{H01, H02, H0C}`.
    Testing,
    /// Treatment recommendations over subpopulations `{1, 2}`.
    Decision,
}

/// Ordered actions; index 0 is always the empty action.
///
/// Testing actions are hypothesis bit masks
/// `(none, H01, H02, H0C, H01+H0C, H02+H0C, H01+H02+H0C)`; the incoherent
/// set `{H01, H02}` is left out. Decision actions use bit 1 for
/// subpopulation 1 and bit 2 for subpopulation 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub kind: SpaceKind,
    pub actions: Vec<u8>,
}

impl ActionSpace {
    pub fn testing() -> Self {
        ActionSpace {
            kind: SpaceKind::Testing,
            actions: vec![0, H01, H02, H0C, H01 | H0C, H02 | H0C, H01 | H02 | H0C],
        }
    }

    pub fn decision() -> Self {
        ActionSpace {
            kind: SpaceKind::Decision,
            actions: vec![0, 1, 2, 3],
        }
    }

    pub fn for_kind(kind: SpaceKind) -> Self {
        match kind {
            SpaceKind::Testing => ActionSpace::testing(),
            SpaceKind::Decision => ActionSpace::decision(),
        }
    }

    /// Free variables per cell (every action but the empty one).
    pub fn n_free(&self) -> usize {
        self.actions.len() - 1
    }

    pub fn free_actions(&self) -> &[u8] {
        &self.actions[1..]
    }

    pub fn position(&self, action: u8) -> Option<usize> {
        self.actions.iter().position(|a| *a == action)
    }

    /// Whether the action covers subpopulation `k` (rejects `H0k`, or
    /// recommends treatment to `k`).
    pub fn covers(&self, action: u8, k: usize) -> bool {
        action & (1 << k) != 0
    }

    /// Hypothesis mask an action "claims": the rejected set for testing,
    /// and for decisions the aggregate null whose truth makes the
    /// recommendation an error (`{1} -> H01`, `{2} -> H02`, `{1,2} -> H0C`).
    pub fn claim(&self, action: u8) -> u8 {
        match self.kind {
            SpaceKind::Testing => action,
            SpaceKind::Decision => match action {
                0 => 0,
                1 => H01,
                2 => H02,
                _ => H0C,
            },
        }
    }

    /// Whether choosing `action` at a parameter with true nulls `truth`
    /// is a Type I error. `strict` applies the stronger decision rule that
    /// flags any recommended subpopulation without benefit.
    pub fn is_error(&self, action: u8, truth: u8, strict: bool) -> bool {
        match self.kind {
            SpaceKind::Testing => action & truth != 0,
            SpaceKind::Decision => {
                if strict {
                    (action & 3) & (truth & (H01 | H02)) != 0
                } else {
                    self.claim(action) & truth != 0
                }
            }
        }
    }

    pub fn label(&self, action: u8) -> String {
        match self.kind {
            SpaceKind::Testing => crate::trial::mask_label(action),
            SpaceKind::Decision => match action {
                0 => "none".into(),
                1 => "{1}".into(),
                2 => "{2}".into(),
                _ => "{1,2}".into(),
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SpaceKind::Testing => "testing",
            SpaceKind::Decision => "decision",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::ALL_NULLS;

    #[test]
    fn testing_space_is_coherent() {
        let s = ActionSpace::testing();
        assert_eq!(s.n_free(), 6);
        assert!(!s.actions.contains(&(H01 | H02)));
        for &a in &s.actions[3..] {
            assert!(a & H0C != 0);
        }
    }

    #[test]
    fn error_relevance() {
        let s = ActionSpace::testing();
        for &a in s.free_actions() {
            assert!(s.is_error(a, ALL_NULLS, false));
        }
        assert!(!s.is_error(H01, H02, false));
        assert!(!s.is_error(H01, H02 | H0C, false));
        assert!(s.is_error(H01 | H0C, H02 | H0C, false));
        let d = ActionSpace::decision();
        assert!(d.is_error(2, H02, false));
        assert!(!d.is_error(1, H02, false));
        assert!(!d.is_error(3, H02, false));
        assert!(d.is_error(3, H02, true));
        assert!(!d.is_error(0, ALL_NULLS, false));
    }
}
