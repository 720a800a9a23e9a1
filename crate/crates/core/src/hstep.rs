//! The hierarchical step: the open list is cut into same-size clusters, the
//! agent picks one action per cluster, and the winners are clustered again
//! until a single cluster remains. Its pick goes to the environment.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::environment::{ActionCandidate, BaseState, EnvError, Environment, StateVector, StepOutcome};
use crate::seed;

/// Position in the open list; `None` is a padding slot.
pub type Slot = Option<usize>;

/// One level's partition. Every cluster has exactly `n` slots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClusterSet {
    pub level: usize,
    pub clusters: Vec<Vec<Slot>>,
}

impl ClusterSet {
    pub fn padding(&self) -> usize {
        self.clusters.iter().flatten().filter(|s| s.is_none()).count()
    }
}

const MAX_ITERATIONS: usize = 20;

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = cosine_distance(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Groups `vectors` into `ceil(m / n)` clusters of `n` slots: k-means++
/// seeding and Lloyd iterations under cosine distance, then each centroid
/// in turn claims its `n` nearest unclaimed members. Only the last cluster
/// can hold padding. Members within a cluster keep their input order.
pub fn make_clusters(vectors: &[Vec<f64>], n: usize, seed: u64) -> Vec<Vec<Slot>> {
    let m = vectors.len();
    assert!(m >= 1 && n >= 1, "clustering needs members and a positive size");
    if m <= n {
        let mut c: Vec<Slot> = (0..m).map(Some).collect();
        c.resize(n, None);
        return vec![c];
    }
    let k = m.div_ceil(n);
    let x: Vec<Vec<f64>> = vectors.iter().map(|v| unit(v)).collect();
    let mut rng = seed::rng(seed);

    let mut centroids = vec![x[rng.gen_range(0..m)].clone()];
    let mut dist: Vec<f64> = x.iter().map(|v| cosine_distance(v, &centroids[0]).max(0.0)).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().map(|d| d * d).sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut chosen = m - 1;
            for (i, d) in dist.iter().enumerate() {
                r -= d * d;
                if r <= 0.0 && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..m)
        };
        centroids.push(x[pick].clone());
        for (d, v) in dist.iter_mut().zip(&x) {
            *d = d.min(cosine_distance(v, centroids.last().expect("just pushed")).max(0.0));
        }
    }

    let mut assign = vec![usize::MAX; m];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, v) in x.iter().enumerate() {
            let (j, _) = nearest(v, &centroids);
            if assign[i] != j {
                assign[i] = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let dim = x[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, v) in x.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, e) in sums[assign[i]].iter_mut().zip(v) {
                *s += e;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = unit(&sums[j]);
            }
        }
    }

    let mut free: Vec<usize> = (0..m).collect();
    let mut clusters = Vec::with_capacity(k);
    for c in &centroids {
        let take = n.min(free.len());
        free.sort_by(|&a, &b| {
            cosine_distance(&x[a], c)
                .total_cmp(&cosine_distance(&x[b], c))
                .then(a.cmp(&b))
        });
        let mut members: Vec<usize> = free.drain(..take).collect();
        members.sort_unstable();
        let mut slots: Vec<Slot> = members.into_iter().map(Some).collect();
        slots.resize(n, None);
        clusters.push(slots);
    }
    debug_assert!(free.is_empty());
    clusters
}

/// What a selector sees at one level.
pub struct LevelContext<'a> {
    pub base: &'a Arc<BaseState>,
    pub open: &'a [ActionCandidate],
    pub n_in: usize,
    pub n_cells: usize,
    pub level: usize,
}

impl LevelContext<'_> {
    /// Candidate-slot block of a cluster.
    pub fn encode(&self, cluster: &[Slot]) -> Vec<f64> {
        let pad = ActionCandidate::padding();
        let mut out = Vec::new();
        for s in cluster {
            s.map_or(&pad, |i| &self.open[i]).encode_into(self.n_in, self.n_cells, &mut out);
        }
        out
    }
}

/// Chooses one slot per cluster of a level.
pub trait LevelSelector {
    fn select(&mut self, ctx: &LevelContext<'_>, clusters: &[Vec<Slot>]) -> Vec<usize>;
}

impl<F> LevelSelector for F
where
    F: FnMut(&LevelContext<'_>, &[Vec<Slot>]) -> Vec<usize>,
{
    fn select(&mut self, ctx: &LevelContext<'_>, clusters: &[Vec<Slot>]) -> Vec<usize> {
        self(ctx, clusters)
    }
}

/// Outcome of the tournament over one open list.
#[derive(Clone, Debug)]
pub struct Tournament {
    /// Members entering each level, then the final 1.
    pub level_sizes: Vec<usize>,
    pub queries: usize,
    pub levels: Vec<ClusterSet>,
    pub final_cluster: Vec<Slot>,
    pub final_index: usize,
    pub winner: Slot,
}

/// Runs the elimination levels. `vectors[i]` is the clustering vector of
/// open-list entry `i`; `padding` is the vector used for padding winners.
pub fn tournament(
    ctx_base: &Arc<BaseState>,
    open: &[ActionCandidate],
    vectors: &[Vec<f64>],
    padding: &[f64],
    n: usize,
    n_in: usize,
    n_cells: usize,
    seed: u64,
    selector: &mut dyn LevelSelector,
) -> Tournament {
    let mut members: Vec<Slot> = (0..open.len()).map(Some).collect();
    let mut level_sizes = Vec::new();
    let mut levels = Vec::new();
    let mut queries = 0;
    loop {
        let level = levels.len();
        level_sizes.push(members.len());
        let member_vectors: Vec<Vec<f64>> = members
            .iter()
            .map(|s| s.map_or_else(|| padding.to_vec(), |i| vectors[i].clone()))
            .collect();
        let clusters: Vec<Vec<Slot>> = make_clusters(&member_vectors, n, seed::mix(seed, level as u64))
            .into_iter()
            .map(|c| c.into_iter().map(|s| s.and_then(|p| members[p])).collect())
            .collect();
        let ctx = LevelContext {
            base: ctx_base,
            open,
            n_in,
            n_cells,
            level,
        };
        let picks = selector.select(&ctx, &clusters);
        assert_eq!(picks.len(), clusters.len(), "one pick per cluster");
        queries += clusters.len();
        levels.push(ClusterSet {
            level,
            clusters: clusters.clone(),
        });
        if clusters.len() == 1 {
            level_sizes.push(1);
            let final_index = picks[0];
            let final_cluster = clusters.into_iter().next().expect("one cluster");
            let winner = final_cluster[final_index];
            return Tournament {
                level_sizes,
                queries,
                levels,
                final_cluster,
                final_index,
                winner,
            };
        }
        members = clusters.iter().zip(&picks).map(|(c, &p)| c[p]).collect();
    }
}

/// A full hierarchical decision applied to the environment.
#[derive(Clone, Debug)]
pub struct HStep {
    /// Base state plus the final cluster's candidate block.
    pub state: StateVector,
    /// Chosen slot within the final cluster.
    pub action: usize,
    pub candidate: ActionCandidate,
    pub outcome: StepOutcome,
    pub tournament: Tournament,
}

/// Clusters the open list, runs the tournament, and steps the environment
/// with the winner. `embedding[id]` is the embedding row of primitive `id`.
pub fn hierarchical_step(
    env: &mut Environment,
    embedding: &[Vec<f64>],
    seed: u64,
    selector: &mut dyn LevelSelector,
) -> Result<HStep, EnvError> {
    if env.is_done() {
        return Err(EnvError::EpisodeOver);
    }
    let n = env.config().cluster_size;
    let n_in = env.config().n_in;
    let n_cells = env.config().n_cells();
    let base = Arc::new(env.base_state());
    let open = env.open_list().to_vec();
    let vectors: Vec<Vec<f64>> = open
        .iter()
        .map(|c| c.dense(&embedding[c.primitive.index()], n_in, n_cells))
        .collect();
    let padding = ActionCandidate::padding().dense(&embedding[0], n_in, n_cells);
    let t = tournament(&base, &open, &vectors, &padding, n, n_in, n_cells, seed, selector);
    let ctx = LevelContext {
        base: &base,
        open: &open,
        n_in,
        n_cells,
        level: t.levels.len() - 1,
    };
    let state = StateVector::new(Arc::clone(&base), ctx.encode(&t.final_cluster));
    let candidate = t.winner.map_or_else(ActionCandidate::padding, |i| open[i].clone());
    let outcome = env.step(&candidate)?;
    Ok(HStep {
        state,
        action: t.final_index,
        candidate,
        outcome,
        tournament: t,
    })
}
