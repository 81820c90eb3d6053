/// Binary sum tree over a growable array of non-negative weights.
///
/// Internal nodes are recomputed from their children on every update rather
/// than adjusted by deltas, so the root never accumulates rounding drift.
#[derive(Clone, Debug, Default)]
pub struct SumTree {
    /// Number of leaves in use.
    len: usize,
    /// Leaf capacity, a power of two.
    width: usize,
    /// `nodes[1]` is the root; leaves live at `width..2 * width`.
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new() -> Self {
        Self { len: 0, width: 1, nodes: vec![0.0; 2] }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, index: usize) -> f64 {
        debug_assert!(index < self.len);
        self.nodes[self.width + index]
    }

    pub fn push(&mut self, weight: f64) {
        if self.len == self.width {
            self.grow();
        }
        self.len += 1;
        self.set(self.len - 1, weight);
    }

    /// Removes the last leaf.
    pub fn pop(&mut self) {
        debug_assert!(self.len > 0);
        self.set(self.len - 1, 0.0);
        self.len -= 1;
    }

    pub fn set(&mut self, index: usize, weight: f64) {
        debug_assert!(index < self.len && weight >= 0.0);
        let mut node = self.width + index;
        self.nodes[node] = weight;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Leaf whose cumulative weight interval contains `mass`, for
    /// `mass` in `[0, total)`. Zero-weight leaves are never returned.
    pub fn find(&self, mass: f64) -> usize {
        let mut node = 1;
        let mut mass = mass;
        while node < self.width {
            let left = self.nodes[2 * node];
            if mass < left || self.nodes[2 * node + 1] <= 0.0 {
                node *= 2;
            } else {
                mass -= left;
                node = 2 * node + 1;
            }
        }
        (node - self.width).min(self.len.saturating_sub(1))
    }

    fn grow(&mut self) {
        let width = self.width * 2;
        let mut nodes = vec![0.0; 2 * width];
        nodes[width..width + self.len].copy_from_slice(&self.nodes[self.width..self.width + self.len]);
        for node in (1..width).rev() {
            nodes[node] = nodes[2 * node] + nodes[2 * node + 1];
        }
        self.width = width;
        self.nodes = nodes;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn find_respects_intervals() {
        let mut t = SumTree::new();
        for w in [1.0, 0.0, 3.0] {
            t.push(w);
        }
        assert_eq!(t.total(), 4.0);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.999), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(3.999), 2);
    }

    proptest! {
        #[test]
        fn total_matches_sum_after_updates(
            weights in proptest::collection::vec(0.0f64..10.0, 1..40),
            updates in proptest::collection::vec((0usize..40, 0.0f64..10.0), 0..40),
            pops in 0usize..5,
        ) {
            let mut t = SumTree::new();
            let mut plain = weights.clone();
            for w in &weights {
                t.push(*w);
            }
            for (i, w) in updates {
                let i = i % plain.len();
                plain[i] = w;
                t.set(i, w);
            }
            for _ in 0..pops.min(plain.len() - 1) {
                plain.pop();
                t.pop();
            }
            let sum: f64 = plain.iter().sum();
            prop_assert!((t.total() - sum).abs() <= 1e-9 * (1.0 + sum));
            for (i, w) in plain.iter().enumerate() {
                prop_assert_eq!(t.get(i), *w);
            }
            // Every positive leaf is reachable at the start of its interval.
            let mut acc = 0.0;
            for (i, w) in plain.iter().enumerate() {
                if *w > 1e-6 {
                    prop_assert_eq!(t.find(acc + 1e-9), i);
                }
                acc += w;
            }
        }
    }
}
