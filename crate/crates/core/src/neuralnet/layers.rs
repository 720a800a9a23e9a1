use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::Rng;

use crate::scalar::Scalar;

fn uniform<T: Scalar>(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::of(rng.gen_range(-bound..=bound)))
}

/// Fully connected layer `y = x Wᵀ + b` on row-major batches.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    /// `out × in`.
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Dense {
            w: uniform(outputs, inputs, 1.0 / (inputs as f64).sqrt(), rng),
            b: Array1::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            w: Array2::zeros((outputs, inputs)),
            b: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        // packing for a blocked product dominates at a few rows
        if x.nrows() <= 4 {
            let mut y = Array2::zeros((x.nrows(), self.outputs()));
            for (mut yr, xr) in y.rows_mut().into_iter().zip(x.rows()) {
                yr.assign(&(self.w.dot(&xr) + &self.b));
            }
            return y;
        }
        x.dot(&self.w.t()) + &self.b
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, x: &Array2<T>, dy: &Array2<T>, grads: &mut Dense<T>) -> Array2<T> {
        general_mat_mul(T::one(), &dy.t(), x, T::one(), &mut grads.w);
        grads.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w)
    }
}

/// Rectified stack: every layer but the last is followed by max(0, ·).
pub(crate) fn stack_eval<T: Scalar>(layers: &[Dense<T>], x: Array2<T>) -> Array2<T> {
    let mut cur = x;
    for (i, l) in layers.iter().enumerate() {
        cur = l.forward(&cur);
        if i + 1 < layers.len() {
            cur.mapv_inplace(|v| v.max(T::zero()));
        }
    }
    cur
}

/// Like [`stack_eval`] but keeps each layer's input for the backward pass.
pub(crate) fn stack_forward<T: Scalar>(layers: &[Dense<T>], x: Array2<T>) -> (Array2<T>, Vec<Array2<T>>) {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut cur = x;
    for (i, l) in layers.iter().enumerate() {
        let mut y = l.forward(&cur);
        if i + 1 < layers.len() {
            y.mapv_inplace(|v| v.max(T::zero()));
        }
        inputs.push(cur);
        cur = y;
    }
    (cur, inputs)
}

pub(crate) fn stack_backward<T: Scalar>(
    layers: &[Dense<T>],
    inputs: &[Array2<T>],
    mut dy: Array2<T>,
    grads: &mut [Dense<T>],
) -> Array2<T> {
    for i in (0..layers.len()).rev() {
        if i + 1 < layers.len() {
            Zip::from(&mut dy).and(&inputs[i + 1]).for_each(|d, &a| {
                if a <= T::zero() {
                    *d = T::zero();
                }
            });
        }
        dy = layers[i].backward(&inputs[i], &dy, &mut grads[i]);
    }
    dy
}

/// LSTM cell with gate blocks ordered input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm<T> {
    /// `4H × in`.
    pub wx: Array2<T>,
    /// `4H × H`.
    pub wh: Array2<T>,
    pub b: Array1<T>,
}

pub(crate) struct LstmCache<T> {
    batch: usize,
    x: Array2<T>,
    h_prev: Array2<T>,
    c_prev: Array2<T>,
    gates: Array2<T>,
    tanh_c: Array2<T>,
}

fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

impl<T: Scalar> Lstm<T> {
    pub fn new(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((inputs + hidden) as f64).sqrt();
        Lstm {
            wx: uniform(4 * hidden, inputs, bound, rng),
            wh: uniform(4 * hidden, hidden, bound, rng),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Lstm {
            wx: Array2::zeros((4 * hidden, inputs)),
            wh: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.wh.ncols()
    }

    pub fn inputs(&self) -> usize {
        self.wx.ncols()
    }

    /// Runs from a zero state over `x`, whose rows are time-major
    /// (`t * batch + b`). Returns the last hidden state.
    pub(crate) fn forward(&self, x: Array2<T>, batch: usize, keep: bool) -> (Array2<T>, Option<LstmCache<T>>) {
        let hd = self.hidden();
        let steps = x.nrows() / batch;
        let zx = x.dot(&self.wx.t()) + &self.b;
        let mut h = Array2::<T>::zeros((batch, hd));
        let mut c = Array2::<T>::zeros((batch, hd));
        let rows = if keep { steps * batch } else { 0 };
        let mut h_prev = Array2::<T>::zeros((rows, hd));
        let mut c_prev = Array2::<T>::zeros((rows, hd));
        let mut gates = Array2::<T>::zeros((rows, 4 * hd));
        let mut tanh_c = Array2::<T>::zeros((rows, hd));
        for t in 0..steps {
            let span = t * batch..(t + 1) * batch;
            if keep {
                h_prev.slice_mut(s![span.clone(), ..]).assign(&h);
                c_prev.slice_mut(s![span.clone(), ..]).assign(&c);
            }
            let mut z = zx.slice(s![span.clone(), ..]).to_owned();
            general_mat_mul(T::one(), &h, &self.wh.t(), T::one(), &mut z);
            for r in 0..batch {
                let mut zr = z.row_mut(r);
                let zs = zr.as_slice_mut().expect("row-major");
                let hr = h.row_mut(r).into_slice().expect("row-major");
                let cr = c.row_mut(r).into_slice().expect("row-major");
                for j in 0..hd {
                    let i = sigmoid(zs[j]);
                    let f = sigmoid(zs[hd + j]);
                    let g = zs[2 * hd + j].tanh();
                    let o = sigmoid(zs[3 * hd + j]);
                    let cn = f * cr[j] + i * g;
                    let tc = cn.tanh();
                    cr[j] = cn;
                    hr[j] = o * tc;
                    zs[j] = i;
                    zs[hd + j] = f;
                    zs[2 * hd + j] = g;
                    zs[3 * hd + j] = o;
                    if keep {
                        tanh_c[[t * batch + r, j]] = tc;
                    }
                }
            }
            if keep {
                gates.slice_mut(s![span, ..]).assign(&z);
            }
        }
        let cache = keep.then_some(LstmCache {
            batch,
            x,
            h_prev,
            c_prev,
            gates,
            tanh_c,
        });
        (h, cache)
    }

    /// Backpropagates `dL/dh_last` through time. Returns `dL/dx` in the
    /// same time-major layout as the input.
    pub(crate) fn backward(&self, cache: &LstmCache<T>, dh_last: Array2<T>, grads: &mut Lstm<T>) -> Array2<T> {
        let hd = self.hidden();
        let batch = cache.batch;
        let steps = cache.x.nrows() / batch;
        let one = T::one();
        let mut dz = Array2::<T>::zeros((steps * batch, 4 * hd));
        let mut dh = dh_last;
        let mut dc = Array2::<T>::zeros((batch, hd));
        for t in (0..steps).rev() {
            for r in 0..batch {
                let idx = t * batch + r;
                let gr = cache.gates.row(idx);
                let tcr = cache.tanh_c.row(idx);
                let cpr = cache.c_prev.row(idx);
                for j in 0..hd {
                    let (i, f, g, o) = (gr[j], gr[hd + j], gr[2 * hd + j], gr[3 * hd + j]);
                    let tc = tcr[j];
                    let dhv = dh[[r, j]];
                    let dcv = dc[[r, j]] + dhv * o * (one - tc * tc);
                    dc[[r, j]] = dcv * f;
                    dz[[idx, j]] = dcv * g * i * (one - i);
                    dz[[idx, hd + j]] = dcv * cpr[j] * f * (one - f);
                    dz[[idx, 2 * hd + j]] = dcv * i * (one - g * g);
                    dz[[idx, 3 * hd + j]] = dhv * tc * o * (one - o);
                }
            }
            dh = dz.slice(s![t * batch..(t + 1) * batch, ..]).dot(&self.wh);
        }
        general_mat_mul(one, &dz.t(), &cache.x, one, &mut grads.wx);
        general_mat_mul(one, &dz.t(), &cache.h_prev, one, &mut grads.wh);
        grads.b += &dz.sum_axis(Axis(0));
        dz.dot(&self.wx)
    }
}
