//! Rolling window of all agents' positions that feeds the predictor.

use crate::error::Error;
use crate::geom::Vec2;
use std::collections::VecDeque;

/// The last `L` position slices of all `N` agents, oldest first. Each slice
/// lists robots (`0..M`) then humans (`M..N`).
#[derive(Debug, Clone, PartialEq)]
pub struct PositionHistory {
    capacity: usize,
    num_robots: usize,
    num_agents: usize,
    slices: VecDeque<Vec<Vec2>>,
}

impl PositionHistory {
    /// A warm window holding `capacity` copies of `initial`.
    pub fn filled(capacity: usize, num_robots: usize, initial: Vec<Vec2>) -> Self {
        assert!(capacity >= 1);
        let num_agents = initial.len();
        Self {
            capacity,
            num_robots,
            num_agents,
            slices: std::iter::repeat_n(initial, capacity).collect(),
        }
    }

    /// Builds a window from explicit slices; the last one is the newest.
    pub fn from_slices(num_robots: usize, slices: Vec<Vec<Vec2>>) -> Result<Self, Error> {
        let num_agents = slices.first().map(Vec::len).unwrap_or(0);
        if slices.is_empty() {
            return Err(Error::Invalid("history needs at least one slice".into()));
        }
        if let Some(bad) = slices.iter().find(|s| s.len() != num_agents) {
            return Err(Error::Arity {
                what: "history slice",
                expected: num_agents,
                got: bad.len(),
            });
        }
        Ok(Self {
            capacity: slices.len(),
            num_robots,
            num_agents,
            slices: slices.into(),
        })
    }

    /// Evicts the oldest slice and appends `slice`.
    pub fn push(&mut self, slice: Vec<Vec2>) -> Result<(), Error> {
        if slice.len() != self.num_agents {
            return Err(Error::Arity {
                what: "history slice",
                expected: self.num_agents,
                got: slice.len(),
            });
        }
        if self.slices.len() == self.capacity {
            self.slices.pop_front();
        }
        self.slices.push_back(slice);
        Ok(())
    }

    /// Functional form of [`push`](Self::push).
    pub fn pushed(&self, slice: Vec<Vec2>) -> Result<Self, Error> {
        let mut h = self.clone();
        h.push(slice)?;
        Ok(h)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn num_robots(&self) -> usize {
        self.num_robots
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn num_humans(&self) -> usize {
        self.num_agents - self.num_robots
    }

    pub fn slices(&self) -> impl ExactSizeIterator<Item = &Vec<Vec2>> + DoubleEndedIterator {
        self.slices.iter()
    }

    /// Slice `back` steps before the newest (`0` is the newest).
    pub fn from_back(&self, back: usize) -> Option<&[Vec2]> {
        let n = self.slices.len();
        if back < n {
            Some(&self.slices[n - 1 - back])
        } else {
            None
        }
    }

    pub fn latest(&self) -> &[Vec2] {
        self.slices.back().expect("history is never empty")
    }

    /// Bit pattern of every coordinate, used as a cache key.
    pub fn fingerprint(&self) -> Vec<u64> {
        self.slices
            .iter()
            .flat_map(|s| s.iter().flat_map(|p| [p.x.to_bits(), p.y.to_bits()]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn slice(v: f64) -> Vec<Vec2> {
        vec![Vec2::new(v, 0.0), Vec2::new(0.0, v)]
    }

    #[test]
    fn ring_semantics() {
        let mut h = PositionHistory::from_slices(1, vec![slice(1.0), slice(2.0)]).unwrap();
        h.push(slice(3.0)).unwrap();
        let got: Vec<_> = h.slices().cloned().collect();
        assert_eq!(got, vec![slice(2.0), slice(3.0)]);
    }

    #[test]
    fn wrong_arity_is_rejected() {
        let mut h = PositionHistory::filled(3, 1, slice(0.0));
        let err = h.push(vec![Vec2::ZERO]).unwrap_err();
        assert!(matches!(
            err,
            Error::Arity {
                expected: 2,
                got: 1,
                ..
            }
        ));
        assert_eq!(h.len(), 3);
    }

    #[test]
    fn identical_pushes_give_identical_window() {
        let mut h = PositionHistory::filled(4, 1, slice(9.0));
        for _ in 0..4 {
            h.push(slice(1.5)).unwrap();
        }
        assert!(h.slices().all(|s| *s == slice(1.5)));
    }

    proptest! {
        #[test]
        fn length_stays_at_capacity(cap in 1usize..10, pushes in 0usize..30) {
            let mut h = PositionHistory::filled(cap, 1, slice(0.0));
            for k in 0..pushes {
                h.push(slice(k as f64)).unwrap();
            }
            prop_assert_eq!(h.len(), cap);
            if pushes > 0 {
                prop_assert_eq!(h.latest(), &slice((pushes - 1) as f64)[..]);
            }
        }
    }
}
