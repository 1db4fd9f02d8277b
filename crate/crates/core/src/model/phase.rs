use serde::{Deserialize, Serialize};
use std::fmt;

/// Latent epidemic phase of one region on one day.
///
/// In the four-phase scheme the codes are NE=0, RE=1, SE=2, DE=3. In the
/// two-phase scheme they are NE=0 and E=1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Phase(pub u8);

impl Phase {
    pub const NE: Phase = Phase(0);
    pub const RE: Phase = Phase(1);
    pub const SE: Phase = Phase(2);
    pub const DE: Phase = Phase(3);
    /// Epidemic phase of the two-phase scheme.
    pub const E: Phase = Phase(1);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// How a phase generates relative growth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseKind {
    /// Growth is the daily effect only.
    Static,
    /// Growth has a drift and extra variance; the payload indexes
    /// [`EpidemicDynamics`](crate::model::EpidemicDynamics).
    Dynamic(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseScheme {
    Four,
    Two,
}

impl PhaseScheme {
    pub fn from_count(count: usize) -> Option<Self> {
        match count {
            4 => Some(PhaseScheme::Four),
            2 => Some(PhaseScheme::Two),
            _ => None,
        }
    }

    #[inline]
    pub fn count(self) -> usize {
        match self {
            PhaseScheme::Four => 4,
            PhaseScheme::Two => 2,
        }
    }

    /// Number of phases carrying their own drift and variance.
    #[inline]
    pub fn dynamic_count(self) -> usize {
        match self {
            PhaseScheme::Four => 2,
            PhaseScheme::Two => 1,
        }
    }

    #[inline]
    pub fn kind(self, phase: usize) -> PhaseKind {
        match (self, phase) {
            (PhaseScheme::Four, 1) => PhaseKind::Dynamic(0),
            (PhaseScheme::Four, 3) => PhaseKind::Dynamic(1),
            (PhaseScheme::Two, 1) => PhaseKind::Dynamic(0),
            _ => PhaseKind::Static,
        }
    }

    /// Phase code owning a dynamic slot.
    pub fn dynamic_phase(self, slot: usize) -> Phase {
        match (self, slot) {
            (PhaseScheme::Four, 0) => Phase::RE,
            (PhaseScheme::Four, 1) => Phase::DE,
            (PhaseScheme::Two, 0) => Phase::E,
            _ => panic!("no dynamic slot {slot} in {self:?}"),
        }
    }

    /// Open interval supporting the uniform drift prior of a dynamic slot.
    pub fn drift_support(self, slot: usize) -> (f64, f64) {
        match (self, slot) {
            (PhaseScheme::Four, 0) => (0.0, 2.0),
            (PhaseScheme::Four, 1) => (-2.0, 0.0),
            (PhaseScheme::Two, 0) => (-2.0, 2.0),
            _ => panic!("no dynamic slot {slot} in {self:?}"),
        }
    }

    pub fn name(self, phase: usize) -> &'static str {
        match (self, phase) {
            (PhaseScheme::Four, 0) | (PhaseScheme::Two, 0) => "NE",
            (PhaseScheme::Four, 1) => "RE",
            (PhaseScheme::Four, 2) => "SE",
            (PhaseScheme::Four, 3) => "DE",
            (PhaseScheme::Two, 1) => "E",
            _ => "?",
        }
    }
}

impl fmt::Display for PhaseScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-phase", self.count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dynamic_slots_round_trip() {
        for scheme in [PhaseScheme::Four, PhaseScheme::Two] {
            for slot in 0..scheme.dynamic_count() {
                let p = scheme.dynamic_phase(slot);
                assert_eq!(scheme.kind(p.index()), PhaseKind::Dynamic(slot));
            }
        }
        assert_eq!(PhaseScheme::Four.kind(0), PhaseKind::Static);
        assert_eq!(PhaseScheme::Four.kind(2), PhaseKind::Static);
    }

    #[test]
    fn drift_supports_break_rise_decline_symmetry() {
        let (lo, hi) = PhaseScheme::Four.drift_support(0);
        assert!(lo == 0.0 && hi == 2.0);
        let (lo, hi) = PhaseScheme::Four.drift_support(1);
        assert!(lo == -2.0 && hi == 0.0);
    }
}
