//! Dueling Q-network: a shared primitive embedding, an LSTM value stream
//! over the grid cells, and a dense advantage stream over the candidate
//! slots. Forward and backward passes are written out by hand.

mod adam;
mod checkpoint;
mod layers;

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{Adam, AdamSettings};
pub use checkpoint::{Manifest, TensorEntry, MANIFEST};
pub use layers::{Dense, Lstm};

use crate::environment::{StateLayout, StateVector, JOB_LEN};
use crate::scalar::Scalar;
use crate::seed;
use crate::tabular::MetaFeatures;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("{what}: expected length {expected}, got {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("primitive id {0} has no embedding row")]
    UnknownPrimitive(i64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Catalog size; the table has two more rows (blank and unvisited).
    pub n_primitives: usize,
    pub embed_dim: usize,
    pub n_in: usize,
    pub n_cells: usize,
    /// Candidate slots in the advantage input (0 in flat mode).
    pub slots: usize,
    pub n_actions: usize,
    pub lstm_hidden: usize,
    pub value_hidden: Vec<usize>,
    pub advantage_hidden: Vec<usize>,
}

impl NetConfig {
    /// Cluster-sized head reading `n` candidate slots.
    pub fn hierarchical(n_primitives: usize, rows: usize, n_in: usize, n: usize) -> Self {
        NetConfig {
            n_primitives,
            embed_dim: 15,
            n_in,
            n_cells: rows * crate::pipeline::COLUMNS,
            slots: n,
            n_actions: n,
            lstm_hidden: 80,
            value_hidden: vec![256, 128, 32],
            advantage_hidden: vec![256, 128, 64, 32],
        }
    }

    /// One output per enumerated action and no candidate slots.
    pub fn flat(n_primitives: usize, rows: usize, n_in: usize, n_actions: usize) -> Self {
        NetConfig {
            slots: 0,
            n_actions,
            ..Self::hierarchical(n_primitives, rows, n_in, 1)
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::Config(m.to_string()));
        if self.embed_dim == 0 || self.lstm_hidden == 0 || self.n_cells == 0 || self.n_in == 0 {
            return bad("embedding, LSTM, grid and input sizes must be positive");
        }
        if self.n_actions == 0 {
            return bad("at least one action output is required");
        }
        if self.value_hidden.contains(&0) || self.advantage_hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        Ok(())
    }

    /// Embedding row of the unvisited-cell marker.
    pub fn sentinel(&self) -> usize {
        self.n_primitives + 1
    }

    pub fn slot_width(&self) -> usize {
        self.embed_dim + self.n_in + MetaFeatures::LEN
    }

    pub fn value_input(&self) -> usize {
        self.lstm_hidden + StateLayout::CONTEXT
    }

    pub fn advantage_input(&self) -> usize {
        StateLayout::CONTEXT + self.slots * self.slot_width()
    }
}

/// Every trainable tensor. Gradients and optimizer moments use the same
/// shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    /// `(P + 2) × embed_dim`.
    pub embedding: Array2<T>,
    pub lstm: Lstm<T>,
    pub value: Vec<Dense<T>>,
    pub advantage: Vec<Dense<T>>,
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<(usize, usize)> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes.windows(2).map(|w| (w[0], w[1])).collect()
}

impl<T: Scalar> Params<T> {
    pub fn zeros(c: &NetConfig) -> Self {
        Params {
            embedding: Array2::zeros((c.n_primitives + 2, c.embed_dim)),
            lstm: Lstm::zeros(c.embed_dim + c.n_in, c.lstm_hidden),
            value: dims(c.value_input(), &c.value_hidden, 1)
                .into_iter()
                .map(|(i, o)| Dense::zeros(i, o))
                .collect(),
            advantage: dims(c.advantage_input(), &c.advantage_hidden, c.n_actions)
                .into_iter()
                .map(|(i, o)| Dense::zeros(i, o))
                .collect(),
        }
    }

    pub fn random(c: &NetConfig, rng: &mut impl Rng) -> Self {
        let embedding = Array2::from_shape_simple_fn((c.n_primitives + 2, c.embed_dim), || {
            T::of(rng.gen_range(-0.05..=0.05))
        });
        let lstm = Lstm::new(c.embed_dim + c.n_in, c.lstm_hidden, rng);
        let value = dims(c.value_input(), &c.value_hidden, 1)
            .into_iter()
            .map(|(i, o)| Dense::new(i, o, rng))
            .collect();
        let advantage = dims(c.advantage_input(), &c.advantage_hidden, c.n_actions)
            .into_iter()
            .map(|(i, o)| Dense::new(i, o, rng))
            .collect();
        Params {
            embedding,
            lstm,
            value,
            advantage,
        }
    }

    /// Tensor names in storage order.
    pub fn names(&self) -> Vec<String> {
        let mut v = vec!["embedding".to_string(), "lstm.wx".into(), "lstm.wh".into(), "lstm.b".into()];
        for (stream, layers) in [("value", &self.value), ("advantage", &self.advantage)] {
            for i in 0..layers.len() {
                v.push(format!("{stream}.{i}.w"));
                v.push(format!("{stream}.{i}.b"));
            }
        }
        v
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut v = vec![
            self.embedding.shape().to_vec(),
            self.lstm.wx.shape().to_vec(),
            self.lstm.wh.shape().to_vec(),
            self.lstm.b.shape().to_vec(),
        ];
        for d in self.value.iter().chain(&self.advantage) {
            v.push(d.w.shape().to_vec());
            v.push(d.b.shape().to_vec());
        }
        v
    }

    pub fn slices(&self) -> Vec<&[T]> {
        let mut v = vec![
            self.embedding.as_slice().expect("standard layout"),
            self.lstm.wx.as_slice().expect("standard layout"),
            self.lstm.wh.as_slice().expect("standard layout"),
            self.lstm.b.as_slice().expect("standard layout"),
        ];
        for d in self.value.iter().chain(&self.advantage) {
            v.push(d.w.as_slice().expect("standard layout"));
            v.push(d.b.as_slice().expect("standard layout"));
        }
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let Params {
            embedding,
            lstm,
            value,
            advantage,
        } = self;
        let mut v = vec![
            embedding.as_slice_mut().expect("standard layout"),
            lstm.wx.as_slice_mut().expect("standard layout"),
            lstm.wh.as_slice_mut().expect("standard layout"),
            lstm.b.as_slice_mut().expect("standard layout"),
        ];
        for d in value.iter_mut().chain(advantage.iter_mut()) {
            v.push(d.w.as_slice_mut().expect("standard layout"));
            v.push(d.b.as_slice_mut().expect("standard layout"));
        }
        v
    }

    pub fn n_parameters(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }
}

/// Parameter gradients plus the embedding rows the value stream read.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub params: Params<T>,
    pub touched: Vec<bool>,
}

impl<T: Scalar> Gradients<T> {
    pub fn is_finite(&self) -> bool {
        self.params.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Network inputs for a batch of states. The advantage input is built
/// once, so its embedding lookups are constants of the batch.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    size: usize,
    /// Embedding row per (cell, state), time-major.
    cell_rows: Vec<usize>,
    /// Input refs per (cell, state), time-major.
    cell_refs: Array2<T>,
    context: Array2<T>,
    advantage_input: Array2<T>,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }
}

pub struct Output<T> {
    pub v: Array1<T>,
    pub a: Array2<T>,
    pub q: Array2<T>,
}

pub struct Tape<T> {
    lstm: layers::LstmCache<T>,
    value: Vec<Array2<T>>,
    advantage: Vec<Array2<T>>,
}

/// `Q = V + A - mean(A)` row by row.
pub fn dueling<T: Scalar>(v: &Array1<T>, a: &Array2<T>) -> Array2<T> {
    let mean = a.mean_axis(Axis(1)).expect("at least one action");
    let mut q = a.clone();
    for ((mut row, &vi), &mi) in q.rows_mut().into_iter().zip(v).zip(&mean) {
        row.mapv_inplace(|x| x + vi - mi);
    }
    q
}

/// Clipped-quadratic loss with unit threshold.
pub fn huber<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    if x.abs() <= T::one() {
        half * x * x
    } else {
        x.abs() - half
    }
}

pub fn huber_grad<T: Scalar>(x: T) -> T {
    x.max(-T::one()).min(T::one())
}

#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork<T> {
    config: NetConfig,
    pub params: Params<T>,
}

impl<T: Scalar> QNetwork<T> {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self, NetError> {
        config.validate()?;
        let params = Params::random(&config, &mut seed::rng(seed));
        Ok(QNetwork { config, params })
    }

    pub fn zeroed(config: NetConfig) -> Result<Self, NetError> {
        config.validate()?;
        let params = Params::zeros(&config);
        Ok(QNetwork { config, params })
    }

    pub(crate) fn from_parts(config: NetConfig, params: Params<T>) -> Self {
        QNetwork { config, params }
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn embed(&self, row: usize) -> Result<Vec<T>, NetError> {
        if row >= self.params.embedding.nrows() {
            return Err(NetError::UnknownPrimitive(row as i64));
        }
        Ok(self.params.embedding.row(row).to_vec())
    }

    /// The embedding table in 64-bit, one row per id.
    pub fn embedding_rows(&self) -> Vec<Vec<f64>> {
        self.params
            .embedding
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.f64()).collect())
            .collect()
    }

    fn row_of(&self, id: f64) -> Result<usize, NetError> {
        if id < 0.0 {
            return Ok(self.config.sentinel());
        }
        let r = id as usize;
        if r > self.config.n_primitives || id.fract() != 0.0 {
            return Err(NetError::UnknownPrimitive(id as i64));
        }
        Ok(r)
    }

    pub fn batch(&self, states: &[&StateVector]) -> Result<Batch<T>, NetError> {
        self.batch_with(states, &self.params.embedding)
    }

    /// Builds a batch whose advantage-slot embeddings come from `table`.
    pub fn batch_with(&self, states: &[&StateVector], table: &Array2<T>) -> Result<Batch<T>, NetError> {
        let c = &self.config;
        let b = states.len();
        let cells = c.n_cells;
        let mut cell_rows = vec![0; cells * b];
        let mut cell_refs = Array2::zeros((cells * b, c.n_in));
        let mut context = Array2::zeros((b, StateLayout::CONTEXT));
        let mut adv = Array2::zeros((b, c.advantage_input()));
        let sw = StateLayout::slot_width(c.n_in);
        for (k, s) in states.iter().enumerate() {
            let base = &s.base;
            let check = |what, expected, found| {
                if expected == found {
                    Ok(())
                } else {
                    Err(NetError::Shape { what, expected, found })
                }
            };
            check("grid primitives", cells, base.grid_primitives.len())?;
            check("grid inputs", cells * c.n_in, base.grid_inputs.len())?;
            check("job descriptor", JOB_LEN, base.job.len())?;
            check("candidate slots", c.slots * sw, s.candidates.len())?;
            for t in 0..cells {
                cell_rows[t * b + k] = self.row_of(base.grid_primitives[t])?;
                for j in 0..c.n_in {
                    cell_refs[[t * b + k, j]] = T::of(base.grid_inputs[t * c.n_in + j]);
                }
            }
            let ctx = base.context();
            let mut arow = adv.row_mut(k);
            for (j, &v) in ctx.iter().enumerate() {
                context[[k, j]] = T::of(v);
                arow[j] = T::of(v);
            }
            for slot in 0..c.slots {
                let src = &s.candidates[slot * sw..(slot + 1) * sw];
                let dst = StateLayout::CONTEXT + slot * c.slot_width();
                if src[0] >= 0.0 {
                    let row = self.row_of(src[0])?;
                    for d in 0..c.embed_dim {
                        arow[dst + d] = table[[row, d]];
                    }
                }
                for (j, &v) in src[1..].iter().enumerate() {
                    arow[dst + c.embed_dim + j] = T::of(v);
                }
            }
        }
        Ok(Batch {
            size: b,
            cell_rows,
            cell_refs,
            context,
            advantage_input: adv,
        })
    }

    fn lstm_input(&self, batch: &Batch<T>) -> Array2<T> {
        let d = self.config.embed_dim;
        let mut x = Array2::zeros((batch.cell_rows.len(), d + self.config.n_in));
        for (i, &row) in batch.cell_rows.iter().enumerate() {
            x.slice_mut(s![i, ..d]).assign(&self.params.embedding.row(row));
            x.slice_mut(s![i, d..]).assign(&batch.cell_refs.row(i));
        }
        x
    }

    fn value_input(&self, h: &Array2<T>, batch: &Batch<T>) -> Array2<T> {
        let hd = self.config.lstm_hidden;
        let mut x = Array2::zeros((batch.size, self.config.value_input()));
        x.slice_mut(s![.., ..hd]).assign(h);
        x.slice_mut(s![.., hd..]).assign(&batch.context);
        x
    }

    /// Advantage stream only; enough for greedy selection.
    pub fn advantages(&self, batch: &Batch<T>) -> Array2<T> {
        layers::stack_eval(&self.params.advantage, batch.advantage_input.clone())
    }

    pub fn values(&self, batch: &Batch<T>) -> Array1<T> {
        let (h, _) = self.params.lstm.forward(self.lstm_input(batch), batch.size, false);
        let v = layers::stack_eval(&self.params.value, self.value_input(&h, batch));
        v.column(0).to_owned()
    }

    pub fn forward(&self, batch: &Batch<T>) -> Output<T> {
        let v = self.values(batch);
        let a = self.advantages(batch);
        let q = dueling(&v, &a);
        Output { v, a, q }
    }

    /// Smallest magnitude of any hidden rectifier input over the batch.
    pub fn relu_margin(&self, batch: &Batch<T>) -> f64 {
        let (h, _) = self.params.lstm.forward(self.lstm_input(batch), batch.size, false);
        let streams = [
            (&self.params.value, self.value_input(&h, batch)),
            (&self.params.advantage, batch.advantage_input.clone()),
        ];
        let mut margin = f64::INFINITY;
        for (layers, x) in streams {
            let mut cur = x;
            for l in &layers[..layers.len() - 1] {
                cur = l.forward(&cur);
                margin = cur.iter().fold(margin, |m, v| m.min(v.f64().abs()));
                cur.mapv_inplace(|v| v.max(T::zero()));
            }
        }
        margin
    }

    /// Forward pass that records what [`QNetwork::backward`] needs.
    pub fn forward_train(&self, batch: &Batch<T>) -> (Output<T>, Tape<T>) {
        let (h, cache) = self.params.lstm.forward(self.lstm_input(batch), batch.size, true);
        let (v, value) = layers::stack_forward(&self.params.value, self.value_input(&h, batch));
        let (a, advantage) = layers::stack_forward(&self.params.advantage, batch.advantage_input.clone());
        let v = v.column(0).to_owned();
        let q = dueling(&v, &a);
        let tape = Tape {
            lstm: cache.expect("kept"),
            value,
            advantage,
        };
        (Output { v, a, q }, tape)
    }

    /// Gradients of `Σ dq ⊙ Q` for the recorded batch.
    pub fn backward(&self, batch: &Batch<T>, tape: &Tape<T>, dq: &Array2<T>) -> Gradients<T> {
        let c = &self.config;
        let mut g = Params::zeros(c);
        let n = T::of(c.n_actions as f64);
        let dv = dq.sum_axis(Axis(1));
        let mut da = dq.clone();
        for (mut row, &s) in da.rows_mut().into_iter().zip(&dv) {
            row.mapv_inplace(|x| x - s / n);
        }
        layers::stack_backward(&self.params.advantage, &tape.advantage, da, &mut g.advantage);

        let dv = dv.insert_axis(Axis(1));
        let dx = layers::stack_backward(&self.params.value, &tape.value, dv, &mut g.value);
        let dh = dx.slice(s![.., ..c.lstm_hidden]).to_owned();
        let dcells = self.params.lstm.backward(&tape.lstm, dh, &mut g.lstm);
        let mut touched = vec![false; self.params.embedding.nrows()];
        for (i, &row) in batch.cell_rows.iter().enumerate() {
            touched[row] = true;
            let mut dst = g.embedding.row_mut(row);
            dst += &dcells.slice(s![i, ..c.embed_dim]);
        }
        Gradients { params: g, touched }
    }
}
