//! Feedforward networks as explicit lists of affine layers.
//!
//! A [`Network`] is the weight data; its realization interleaves the affine
//! maps with an activation applied after every layer except the last. The
//! size metric counts every entry of every weight matrix and bias vector,
//! zeros included, and is always recomputed from the layer shapes.

mod format;
mod matrix;

pub use format::{parse_network, write_network, FORMAT_TAG};
pub use matrix::Matrix;

use crate::error::{shape, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    weight: Matrix,
    bias: Vec<f64>,
}

impl Layer {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weight.rows() != bias.len() {
            return Err(shape(format!(
                "weight has {} rows but bias has length {}",
                weight.rows(),
                bias.len()
            )));
        }
        Ok(Layer { weight, bias })
    }

    /// Convenience constructor from dense rows.
    pub fn dense(rows: &[Vec<f64>], bias: Vec<f64>) -> Result<Self> {
        Layer::new(Matrix::from_rows(rows), bias)
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub(crate) fn into_parts(self) -> (Matrix, Vec<f64>) {
        (self.weight, self.bias)
    }

    fn param_count(&self) -> u128 {
        self.out_dim() as u128 * (self.in_dim() as u128 + 1)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub enum Activation {
    #[default]
    Relu,
    /// Any scalar function applied elementwise to hidden layers.
    Custom(fn(f64) -> f64),
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::Custom(f) => f(v),
        }
    }
}

#[inline]
pub fn relu(v: f64) -> f64 {
    Activation::Relu.apply(v)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Metrics {
    pub depth: usize,
    pub dims: Vec<usize>,
    pub size: u128,
}

/// Number of parameters of a network with the given dimensions.
pub fn size_from_dims(dims: &[usize]) -> u128 {
    dims.windows(2)
        .map(|w| w[1] as u128 * (w[0] as u128 + 1))
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(shape("a network needs at least one layer"));
        }
        for (l, w) in layers.windows(2).enumerate() {
            if w[1].in_dim() != w[0].out_dim() {
                return Err(shape(format!(
                    "layer {} expects input width {} but layer {} outputs {}",
                    l + 2,
                    w[1].in_dim(),
                    l + 1,
                    w[0].out_dim()
                )));
            }
        }
        Ok(Network { layers })
    }

    /// Single affine layer `x ↦ Wx + b`.
    pub fn affine(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        Network::new(vec![Layer::new(weight, bias)?])
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn dim_in(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn dim_out(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        dims.push(self.dim_in());
        dims.extend(self.layers.iter().map(Layer::out_dim));
        dims
    }

    pub fn size(&self) -> u128 {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            depth: self.depth(),
            dims: self.dims(),
            size: self.size(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.layers.iter().map(|l| l.weight.nnz()).sum()
    }

    /// ReLU realization; panics on a dimension mismatch.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim_in(), "input length does not match dim_in");
        self.eval_with(Activation::Relu, x)
    }

    pub fn realize(&self, act: Activation, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim_in() {
            return Err(shape(format!(
                "input of length {} for dim_in {}",
                x.len(),
                self.dim_in()
            )));
        }
        Ok(self.eval_with(act, x))
    }

    fn eval_with(&self, act: Activation, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            next.resize(layer.out_dim(), 0.0);
            layer.weight.mul_vec_into(&cur, &mut next);
            for (v, b) in next.iter_mut().zip(&layer.bias) {
                *v += b;
                if l < last {
                    *v = act.apply(*v);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Shape signature used to decide "same architecture".
    pub fn arch(&self) -> ArchSignature {
        ArchSignature { dims: self.dims() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ArchSignature {
    pub dims: Vec<usize>,
}

/// ReLU realization as a free function, mirroring the definition.
pub fn realize(net: &Network, act: Activation, x: &[f64]) -> Result<Vec<f64>> {
    net.realize(act, x)
}

pub fn metrics(net: &Network) -> Metrics {
    net.metrics()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `x ↦ net(Mx + c)`
    Pre,
    /// `x ↦ M net(x) + c`
    Post,
}

/// Absorbs an affine map into the first (pre) or last (post) layer.
pub fn fold_affine(net: &Network, side: Side, m: &Matrix, c: &[f64]) -> Result<Network> {
    if m.rows() != c.len() {
        return Err(shape(format!(
            "affine map has {} rows but offset length {}",
            m.rows(),
            c.len()
        )));
    }
    let mut layers = net.layers.clone();
    match side {
        Side::Pre => {
            if m.rows() != net.dim_in() {
                return Err(shape(format!(
                    "pre-fold maps into {} but dim_in is {}",
                    m.rows(),
                    net.dim_in()
                )));
            }
            let first = &layers[0];
            let w = first.weight.matmul(m);
            let shift = first.weight.mul_vec(c);
            let b = first.bias.iter().zip(shift).map(|(b, s)| b + s).collect();
            layers[0] = Layer::new(w, b)?;
        }
        Side::Post => {
            if m.cols() != net.dim_out() {
                return Err(shape(format!(
                    "post-fold expects {} inputs but dim_out is {}",
                    m.cols(),
                    net.dim_out()
                )));
            }
            let last = layers.len() - 1;
            let w = m.matmul(&layers[last].weight);
            let b = m
                .mul_vec(&layers[last].bias)
                .iter()
                .zip(c)
                .map(|(a, c)| a + c)
                .collect();
            layers[last] = Layer::new(w, b)?;
        }
    }
    Network::new(layers)
}

pub(crate) fn ensure_finite(net: &Network, what: &str) -> Result<()> {
    if net.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!(
            "{what} produced non-finite weights"
        )))
    }
}
