use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geology::InfoLevel;

/// Number of enumerated actions: 2 proceed flags x 4 information levels.
pub const N_ACTIONS: usize = 8;

/// Composite decision `(u, eta)`: proceed or defer, plus data quality.
///
/// Canonical order is `(defer, None), (defer, Low), .., (proceed, High)`, so
/// the index is `4 u + eta`. Argmax ties resolve to the lowest index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Action {
    pub proceed: bool,
    pub eta: InfoLevel,
}

impl Action {
    pub const DEFER: Action = Action {
        proceed: false,
        eta: InfoLevel::None,
    };

    pub fn new(proceed: bool, eta: InfoLevel) -> Self {
        Self { proceed, eta }
    }

    pub fn proceed(eta: InfoLevel) -> Self {
        Self::new(true, eta)
    }

    pub fn index(self) -> usize {
        usize::from(self.proceed) * 4 + self.eta.index()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        if i >= N_ACTIONS {
            return None;
        }
        Some(Self {
            proceed: i >= 4,
            eta: InfoLevel::from_index(i % 4)?,
        })
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..N_ACTIONS).filter_map(Action::from_index)
    }

    /// Information actually purchased: deferring nullifies the data order.
    pub fn effective_eta(self) -> InfoLevel {
        if self.proceed {
            self.eta
        } else {
            InfoLevel::None
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", u8::from(self.proceed), self.eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_round_trips() {
        let all: Vec<Action> = Action::all().collect();
        assert_eq!(all.len(), N_ACTIONS);
        assert_eq!(all[0], Action::DEFER);
        assert_eq!(all[7], Action::proceed(InfoLevel::High));
        for (i, a) in all.iter().enumerate() {
            assert_eq!(a.index(), i);
        }
        assert!(Action::from_index(8).is_none());
    }

    #[test]
    fn deferral_nullifies_information() {
        assert_eq!(
            Action::new(false, InfoLevel::High).effective_eta(),
            InfoLevel::None
        );
        assert_eq!(
            Action::proceed(InfoLevel::Med).effective_eta(),
            InfoLevel::Med
        );
    }
}
