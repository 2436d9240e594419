//! Flat binary sum tree over nonnegative channel weights.

/// Leaves live at `cap..2*cap`; every internal node stores the sum of its two
/// children, recomputed from the children on each update so no drift builds up.
#[derive(Clone, Debug)]
pub struct SumTree {
    cap: usize,
    len: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(len: usize) -> Self {
        let cap = len.max(1).next_power_of_two();
        Self {
            cap,
            len,
            nodes: vec![0.0; 2 * cap],
        }
    }

    pub fn from_weights(weights: &[f64]) -> Self {
        let mut t = Self::new(weights.len());
        t.nodes[t.cap..t.cap + weights.len()].copy_from_slice(weights);
        for k in (1..t.cap).rev() {
            t.nodes[k] = t.nodes[2 * k] + t.nodes[2 * k + 1];
        }
        t
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub fn get(&self, idx: usize) -> f64 {
        self.nodes[self.cap + idx]
    }

    /// Sets a leaf; returns false (and does nothing) when the value is unchanged.
    #[inline]
    pub fn set(&mut self, idx: usize, value: f64) -> bool {
        debug_assert!(idx < self.len && value >= 0.0);
        let mut k = self.cap + idx;
        if self.nodes[k] == value {
            return false;
        }
        self.nodes[k] = value;
        while k > 1 {
            k >>= 1;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
        true
    }

    /// Overwrites the contiguous leaves `start..start + values.len()` and
    /// refreshes each affected ancestor once.
    pub fn set_range(&mut self, start: usize, values: &[f64]) {
        if values.is_empty() {
            return;
        }
        debug_assert!(start + values.len() <= self.len);
        let first = self.cap + start;
        self.nodes[first..first + values.len()].copy_from_slice(values);
        let (mut a, mut b) = (first >> 1, (first + values.len() - 1) >> 1);
        while a >= 1 {
            for k in a..=b {
                self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
            }
            a >>= 1;
            b >>= 1;
        }
    }

    /// Finds the leaf whose cumulative interval contains `u` in `[0, total)`.
    /// Returns the leaf index and the offset of `u` inside that leaf's interval.
    /// Subtrees of zero weight are never entered, so a zero-rate leaf is never returned
    /// while the total is positive.
    #[inline]
    pub fn find(&self, mut u: f64) -> (usize, f64) {
        let mut k = 1;
        while k < self.cap {
            let left = self.nodes[2 * k];
            let right = self.nodes[2 * k + 1];
            if (u < left && left > 0.0) || right <= 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        let leaf = k - self.cap;
        (leaf, u.clamp(0.0, self.nodes[k]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_and_lookup() {
        let mut t = SumTree::from_weights(&[1.0, 0.0, 2.0, 3.0, 0.5]);
        assert_eq!(t.total(), 6.5);
        assert_eq!(t.find(0.5).0, 0);
        assert_eq!(t.find(1.0).0, 2);
        assert_eq!(t.find(2.99).0, 2);
        assert_eq!(t.find(3.0).0, 3);
        assert_eq!(t.find(6.4).0, 4);
        assert!(t.set(1, 4.0));
        assert!(!t.set(1, 4.0));
        assert_eq!(t.total(), 10.5);
        assert_eq!(t.find(1.5).0, 1);
    }

    #[test]
    fn batched_updates_match_single_updates() {
        let w: Vec<f64> = (0..37).map(|i| (i % 5) as f64).collect();
        let mut a = SumTree::from_weights(&w);
        let mut b = a.clone();
        let ups = [(36, 2.5), (0, 1.0), (1, 0.0), (35, 7.0), (20, 0.25)];
        for &(i, v) in &ups {
            a.set(i, v);
        }
        for &(i, v) in &ups {
            b.set_range(i, &[v]);
        }
        assert_eq!(a.nodes, b.nodes);
        a.set(3, 9.0);
        a.set(4, 1.0);
        a.set(5, 2.0);
        b.set_range(3, &[9.0, 1.0, 2.0]);
        assert_eq!(a.nodes, b.nodes);
    }

    #[test]
    fn never_returns_zero_leaf() {
        let t = SumTree::from_weights(&[0.0, 0.0, 0.0, 1.0, 0.0]);
        for k in 0..=10 {
            let (leaf, _) = t.find(k as f64 / 10.0);
            assert_eq!(leaf, 3);
        }
    }
}
