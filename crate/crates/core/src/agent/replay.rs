use rand::Rng;

/// Binary tree of priority sums over a fixed number of leaves.
#[derive(Clone, Debug)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

/// Max counterpart of [`SumTree`] over raw priorities.
#[derive(Clone, Debug)]
struct MaxTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl MaxTree {
    fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        MaxTree {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut k = self.leaves + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k].max(self.nodes[2 * k + 1]);
        }
    }
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        SumTree {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut k = self.leaves + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative range contains `mass`.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if mass < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                mass -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }
}

/// A sampled entry and its importance weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub weight: f64,
}

/// Ring buffer sampled in proportion to `priority^alpha`.
#[derive(Clone, Debug)]
pub struct PrioritizedReplay<X> {
    capacity: usize,
    alpha: f64,
    items: Vec<X>,
    priorities: Vec<f64>,
    next: usize,
    tree: SumTree,
    max: MaxTree,
}

pub const PRIORITY_FLOOR: f64 = 1e-6;

impl<X> PrioritizedReplay<X> {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        PrioritizedReplay {
            capacity,
            alpha,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            priorities: Vec::new(),
            next: 0,
            tree: SumTree::new(capacity),
            max: MaxTree::new(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &X {
        &self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &X> {
        self.items.iter()
    }

    pub fn priority(&self, i: usize) -> f64 {
        self.priorities[i]
    }

    pub fn max_priority(&self) -> f64 {
        if self.is_empty() {
            1.0
        } else {
            self.max.nodes[1]
        }
    }

    /// Stores with the current maximum priority, overwriting the oldest
    /// entry once full. Returns the slot used.
    pub fn push(&mut self, item: X) -> usize {
        let p = self.max_priority();
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(item);
            self.priorities.push(p);
        } else {
            self.items[slot] = item;
            self.priorities[slot] = p;
        }
        self.tree.set(slot, p.powf(self.alpha));
        self.max.set(slot, p);
        self.next = (slot + 1) % self.capacity;
        slot
    }

    pub fn set_priority(&mut self, i: usize, priority: f64) {
        let p = priority.max(PRIORITY_FLOOR);
        self.priorities[i] = p;
        self.tree.set(i, p.powf(self.alpha));
        self.max.set(i, p);
    }

    /// Stratified proportional draw of `k` entries with weights
    /// `(len · P(i))^-beta`, scaled so the largest in the draw is 1.
    pub fn sample(&self, k: usize, beta: f64, rng: &mut impl Rng) -> Vec<Sample> {
        assert!(!self.is_empty(), "sampling from an empty buffer");
        let total = self.tree.total();
        let segment = total / k as f64;
        let n = self.len() as f64;
        let mut out: Vec<Sample> = (0..k)
            .map(|j| {
                let mass = segment * (j as f64 + rng.gen::<f64>());
                let index = self.tree.find(mass.min(total * (1.0 - 1e-12))).min(self.len() - 1);
                let prob = self.tree.get(index) / total;
                Sample {
                    index,
                    weight: (n * prob).powf(-beta),
                }
            })
            .collect();
        let max = out.iter().map(|s| s.weight).fold(0.0, f64::max);
        for s in &mut out {
            s.weight /= max;
        }
        out
    }
}
