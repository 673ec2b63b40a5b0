use core::fmt;
use core::str::FromStr;

use crate::error::Error;

/// One of the three conductors of a feeder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    /// Canonical position (a = 0, b = 1, c = 2).
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }

    pub fn as_char(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }

    pub fn from_char(c: char) -> Option<Phase> {
        match c.to_ascii_lowercase() {
            'a' => Some(Phase::A),
            'b' => Some(Phase::B),
            'c' => Some(Phase::C),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Phase::from_char(c).ok_or_else(|| Error::schema(alloc::format!("bad phase '{s}'"))),
            _ => Err(Error::schema(alloc::format!("bad phase '{s}'"))),
        }
    }
}

/// Subset of `{a, b, c}`; iteration is always in canonical order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const EMPTY: PhaseSet = PhaseSet(0);
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn single(p: Phase) -> PhaseSet {
        PhaseSet(1 << p.index())
    }

    pub fn from_phases<I: IntoIterator<Item = Phase>>(phases: I) -> PhaseSet {
        phases.into_iter().fold(PhaseSet::EMPTY, |s, p| s.with(p))
    }

    pub fn with(self, p: Phase) -> PhaseSet {
        PhaseSet(self.0 | (1 << p.index()))
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersection(self, other: PhaseSet) -> PhaseSet {
        PhaseSet(self.0 & other.0)
    }

    pub fn union(self, other: PhaseSet) -> PhaseSet {
        PhaseSet(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> + Clone {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Position of `p` in the reduced (canonically ordered) vector.
    pub fn position(self, p: Phase) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        Some(self.iter().take_while(|q| *q != p).count())
    }
}

impl fmt::Debug for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhaseSet({self})")
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for PhaseSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = PhaseSet::EMPTY;
        for c in s.chars() {
            let p = Phase::from_char(c).ok_or_else(|| Error::schema(alloc::format!("bad phase set '{s}'")))?;
            if set.contains(p) {
                return Err(Error::schema(alloc::format!("repeated phase in '{s}'")));
            }
            set = set.with(p);
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_iteration_and_positions() {
        let s: PhaseSet = "ca".parse().unwrap();
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![Phase::A, Phase::C]);
        assert_eq!(s.position(Phase::C), Some(1));
        assert_eq!(s.position(Phase::B), None);
        assert_eq!(s.to_string(), "ac");
    }

    #[test]
    fn subset_rules() {
        let bc: PhaseSet = "bc".parse().unwrap();
        assert!(bc.is_subset(PhaseSet::ABC));
        assert!(!PhaseSet::ABC.is_subset(bc));
        assert!(PhaseSet::EMPTY.is_subset(bc));
        assert!("aa".parse::<PhaseSet>().is_err());
        assert!("x".parse::<PhaseSet>().is_err());
    }
}
