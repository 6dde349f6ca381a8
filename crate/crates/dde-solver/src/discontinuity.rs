//! Breaking points of the solution and their bookkeeping.

use serde::{Deserialize, Serialize};

/// A time where the solution or one of its derivatives jumps.
///
/// `order` is the lowest derivative that is discontinuous: 0 for a jump in
/// the value itself (e.g. a step history), 1 for a corner in the first
/// derivative (the generic situation at the initial time), and so on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discontinuity {
    pub t: f64,
    pub order: u32,
}

/// Ordered set of breaking points, strictly increasing in time.
///
/// Seeded from the history function's known jumps plus the initial time
/// (order 1), then extended by the integrator as delayed arguments cross
/// existing entries. Entries whose order exceeds the configured cutoff are
/// never stored: past that smoothness level the stepper no longer cares.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DiscontinuitySet {
    items: Vec<Discontinuity>,
}

impl DiscontinuitySet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Seeds the set with the history jumps and the initial point.
    ///
    /// A history jump that coincides with `t0` keeps its own (lower) order.
    pub fn seed(history_jumps: &[Discontinuity], t0: f64, cutoff: u32) -> Self {
        let mut set = DiscontinuitySet::new();
        for jump in history_jumps {
            set.insert(*jump, 0.0, cutoff);
        }
        set.insert(Discontinuity { t: t0, order: 1 }, 0.0, cutoff);
        set
    }

    /// Inserts a breaking point, keeping the set sorted.
    ///
    /// Points within `tol` of an existing entry are merged (the smaller
    /// order wins); points with order beyond `cutoff` are dropped. Returns
    /// whether a new entry was stored.
    pub fn insert(&mut self, d: Discontinuity, tol: f64, cutoff: u32) -> bool {
        if d.order > cutoff {
            return false;
        }
        match self
            .items
            .binary_search_by(|probe| probe.t.partial_cmp(&d.t).unwrap())
        {
            Ok(i) => {
                self.items[i].order = self.items[i].order.min(d.order);
                false
            }
            Err(i) => {
                let near_left = i > 0 && (d.t - self.items[i - 1].t).abs() <= tol;
                let near_right = i < self.items.len() && (self.items[i].t - d.t).abs() <= tol;
                if near_left {
                    self.items[i - 1].order = self.items[i - 1].order.min(d.order);
                    false
                } else if near_right {
                    self.items[i].order = self.items[i].order.min(d.order);
                    false
                } else {
                    self.items.insert(i, d);
                    true
                }
            }
        }
    }

    pub fn items(&self) -> &[Discontinuity] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Entries inside the open-left interval `(a, b]`.
    pub fn in_range(&self, a: f64, b: f64) -> impl Iterator<Item = &Discontinuity> {
        self.items.iter().filter(move |d| d.t > a && d.t <= b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_contains_history_jumps_and_t0() {
        let jumps = [Discontinuity { t: -1.0, order: 0 }];
        let set = DiscontinuitySet::seed(&jumps, 0.0, 6);
        assert_eq!(set.len(), 2);
        assert_eq!(set.items()[0].t, -1.0);
        assert_eq!(set.items()[0].order, 0);
        assert_eq!(set.items()[1].t, 0.0);
        assert_eq!(set.items()[1].order, 1);
    }

    #[test]
    fn insert_keeps_order_and_dedupes() {
        let mut set = DiscontinuitySet::new();
        assert!(set.insert(Discontinuity { t: 2.0, order: 2 }, 1e-9, 6));
        assert!(set.insert(Discontinuity { t: 1.0, order: 3 }, 1e-9, 6));
        // within tolerance of the existing 2.0 entry: merged, lower order kept
        assert!(!set.insert(
            Discontinuity {
                t: 2.0 + 1e-12,
                order: 1
            },
            1e-9,
            6
        ));
        assert_eq!(set.len(), 2);
        assert_eq!(set.items()[0].t, 1.0);
        assert_eq!(set.items()[1].order, 1);
    }

    #[test]
    fn insert_respects_cutoff() {
        let mut set = DiscontinuitySet::new();
        assert!(!set.insert(Discontinuity { t: 5.0, order: 7 }, 1e-9, 6));
        assert!(set.is_empty());
    }

    #[test]
    fn history_jump_at_t0_keeps_lower_order() {
        let jumps = [Discontinuity { t: 0.0, order: 0 }];
        let set = DiscontinuitySet::seed(&jumps, 0.0, 6);
        assert_eq!(set.len(), 1);
        assert_eq!(set.items()[0].order, 0);
    }
}
