//! Mesh-free neural surrogate of a finite element solution.
//!
//! A tanh MLP `u_θ` with a bias-free linear output is multiplied by the
//! distance to the boundary, so the surrogate `d(x) u_θ(x) + h(x)` matches the
//! boundary data `h` exactly for any parameters.

mod checkpoint;
mod train;

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fem::{FeFunction, ScalarField, SpaceFn};
use crate::mesh::{Point, PolygonDomain};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::{train, TrainConfig, TrainReport};

/// Layer widths of the default network: three hidden layers of 40.
pub const DEFAULT_DIMS: [usize; 5] = [2, 40, 40, 40, 1];

/// Layer widths with `hidden` tanh layers of `width` units.
pub fn layer_dims(hidden: usize, width: usize) -> Vec<usize> {
    let mut dims = vec![2];
    dims.extend(std::iter::repeat_n(width, hidden));
    dims.push(1);
    dims
}

#[derive(Clone)]
pub struct SurrogateNet {
    dims: Vec<usize>,
    /// Per layer: row-major `out × in` weights, then `out` biases (absent
    /// for the output layer).
    params: Vec<f64>,
    domain: Arc<PolygonDomain>,
    lift: Option<SpaceFn>,
}

impl std::fmt::Debug for SurrogateNet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SurrogateNet")
            .field("dims", &self.dims)
            .field("num_params", &self.params.len())
            .field("lifted", &self.lift.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    weights: usize,
    bias: Option<usize>,
    rows: usize,
    cols: usize,
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Network("need at least an input and an output layer".into()));
    }
    if dims[0] != 2 || *dims.last().unwrap() != 1 {
        return Err(Error::Network(format!(
            "dims must start with 2 and end with 1, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::Network("zero-width layer".into()));
    }
    Ok(())
}

/// `tanh` through a single `exp`; about twice as fast as the libm routine
/// and accurate to a few ulps in absolute terms, which is all the training
/// needs.
#[inline]
fn tanh(x: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * x).exp() + 1.0)
}

/// Number of trainable parameters; the output layer has no bias.
pub fn param_count(dims: &[usize]) -> usize {
    let l = dims.len() - 1;
    (0..l)
        .map(|i| dims[i] * dims[i + 1] + if i + 1 < l { dims[i + 1] } else { 0 })
        .sum()
}

/// Kaiming-normal weights (variance `2 / fan_in`) and zero biases.
pub fn init_net(dims: &[usize], seed: u64, domain: Arc<PolygonDomain>) -> Result<SurrogateNet> {
    validate_dims(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(param_count(dims));
    let layers = dims.len() - 1;
    for l in 0..layers {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid standard deviation");
        params.extend((0..fan_in * fan_out).map(|_| normal.sample(&mut rng)));
        if l + 1 < layers {
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
    }
    Ok(SurrogateNet {
        dims: dims.to_vec(),
        params,
        domain,
        lift: None,
    })
}

/// Per-point data of a fitting problem: coordinates, boundary distance,
/// lift and target.
#[derive(Debug, Clone)]
pub struct TrainingData {
    points: Array2<f64>,
    distance: Array1<f64>,
    lift: Array1<f64>,
    target: Array1<f64>,
}

impl TrainingData {
    /// Nodal values of `target` at its mesh vertices.
    pub fn from_fe(net: &SurrogateNet, target: &FeFunction) -> Self {
        Self::from_points(net, target.mesh().vertices(), target.values())
    }

    pub fn from_points(net: &SurrogateNet, points: &[Point], target: &[f64]) -> Self {
        assert_eq!(points.len(), target.len());
        let n = points.len();
        let pts = Array2::from_shape_fn((n, 2), |(i, j)| points[i][j]);
        let distance = points.iter().map(|&p| net.domain.boundary_distance(p)).collect();
        let lift = points.iter().map(|&p| net.lift_at(p)).collect();
        Self {
            points: pts,
            distance,
            lift,
            target: Array1::from(target.to_vec()),
        }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }
}

impl SurrogateNet {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn domain(&self) -> &Arc<PolygonDomain> {
        &self.domain
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        self.params = params;
        Ok(())
    }

    /// Boundary lift `h`; `None` for homogeneous data.
    pub fn set_lift(&mut self, lift: Option<SpaceFn>) {
        self.lift = lift;
    }

    fn lift_at(&self, p: Point) -> f64 {
        self.lift.as_ref().map_or(0.0, |h| h(p))
    }

    fn layers(&self) -> Vec<LayerOffsets> {
        let n = self.dims.len() - 1;
        let mut off = 0;
        (0..n)
            .map(|l| {
                let (cols, rows) = (self.dims[l], self.dims[l + 1]);
                let weights = off;
                off += rows * cols;
                let bias = (l + 1 < n).then(|| {
                    let b = off;
                    off += rows;
                    b
                });
                LayerOffsets {
                    weights,
                    bias,
                    rows,
                    cols,
                }
            })
            .collect()
    }

    /// Mutable weights of layer `l` (row-major `out × in`).
    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        let o = self.layers()[l];
        &mut self.params[o.weights..o.weights + o.rows * o.cols]
    }

    /// Mutable biases of hidden layer `l`; the output layer has none.
    pub fn bias_mut(&mut self, l: usize) -> Option<&mut [f64]> {
        let o = self.layers()[l];
        o.bias.map(move |b| &mut self.params[b..b + o.rows])
    }

    /// Hidden activations of every layer and the raw network output.
    fn forward(&self, params: &[f64], x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array1<f64>) {
        let layers = self.layers();
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
        let mut out = Array1::zeros(x.nrows());
        for (l, o) in layers.iter().enumerate() {
            let w = ArrayView2::from_shape((o.rows, o.cols), &params[o.weights..o.weights + o.rows * o.cols])
                .expect("layer shape");
            let input = if l == 0 { x } else { acts[l - 1].view() };
            let mut z = input.dot(&w.t());
            match o.bias {
                Some(b) => {
                    let bias = ArrayView1::from(&params[b..b + o.rows]);
                    z += &bias;
                    z.mapv_inplace(tanh);
                    acts.push(z);
                }
                None => out = z.index_axis_move(Axis(1), 0),
            }
        }
        (acts, out)
    }

    /// Raw network output `u_θ` without the boundary factor.
    pub fn raw(&self, points: &[Point]) -> Vec<f64> {
        let x = Array2::from_shape_fn((points.len(), 2), |(i, j)| points[i][j]);
        self.forward(&self.params, x.view()).1.to_vec()
    }

    /// `d(x) u_θ(x) + h(x)` at each point.
    pub fn evaluate(&self, points: &[Point]) -> Vec<f64> {
        self.raw(points)
            .into_iter()
            .zip(points)
            .map(|(u, &p)| self.domain.boundary_distance(p) * u + self.lift_at(p))
            .collect()
    }

    /// Surrogate values at the data points with the given parameters.
    fn predict(&self, params: &[f64], data: &TrainingData) -> (Vec<Array2<f64>>, Array1<f64>) {
        let (acts, raw) = self.forward(params, data.points.view());
        let pred = &raw * &data.distance + &data.lift;
        (acts, pred)
    }

    /// Mean squared nodal mismatch for `params`.
    pub fn loss_with(&self, params: &[f64], data: &TrainingData) -> f64 {
        let (_, pred) = self.predict(params, data);
        let r = pred - &data.target;
        r.dot(&r) / data.len() as f64
    }

    /// Loss and its exact gradient with respect to every parameter.
    pub fn loss_and_gradient_with(&self, params: &[f64], data: &TrainingData) -> (f64, Vec<f64>) {
        let n = data.len() as f64;
        let (acts, pred) = self.predict(params, data);
        let r = pred - &data.target;
        let loss = r.dot(&r) / n;
        let layers = self.layers();
        let mut grad = vec![0.0; params.len()];
        // d loss / d raw output
        let mut delta: Array2<f64> = (&r * &data.distance * (2.0 / n)).insert_axis(Axis(1));
        for l in (0..layers.len()).rev() {
            let o = layers[l];
            let input = if l == 0 { data.points.view() } else { acts[l - 1].view() };
            if l + 1 < layers.len() {
                // back through tanh: delta currently holds d loss / d activation
                delta.zip_mut_with(&acts[l], |d, &a| *d *= 1.0 - a * a);
                let gb = delta.sum_axis(Axis(0));
                let b = o.bias.expect("hidden layer bias");
                grad[b..b + o.rows].copy_from_slice(gb.as_slice().expect("contiguous"));
            }
            let gw = delta.t().dot(&input);
            grad[o.weights..o.weights + o.rows * o.cols]
                .iter_mut()
                .zip(gw.iter())
                .for_each(|(g, &v)| *g = v);
            if l > 0 {
                let w = ArrayView2::from_shape((o.rows, o.cols), &params[o.weights..o.weights + o.rows * o.cols])
                    .expect("layer shape");
                delta = delta.dot(&w);
            }
        }
        (loss, grad)
    }
}

impl ScalarField for SurrogateNet {
    fn eval_points(&self, points: &[Point]) -> Result<Vec<f64>> {
        let out = self.evaluate(points);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("surrogate produced a non-finite value".into()));
        }
        Ok(out)
    }
}

/// Mean squared mismatch between the surrogate and `target` over all mesh
/// vertices.
pub fn loss(net: &SurrogateNet, target: &FeFunction) -> f64 {
    net.loss_with(net.params(), &TrainingData::from_fe(net, target))
}

/// Gradient of [`loss`] with respect to the trainable parameters.
pub fn gradient(net: &SurrogateNet, target: &FeFunction) -> Vec<f64> {
    net.loss_and_gradient_with(net.params(), &TrainingData::from_fe(net, target))
        .1
}
