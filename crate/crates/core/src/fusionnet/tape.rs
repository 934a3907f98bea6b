//! A small reverse-mode differentiation tape over flat `f64` vectors.
//!
//! Each operation records its inputs and output value; [`Tape::backward`]
//! walks the record in reverse and accumulates parameter gradients into a
//! [`Gradients`] buffer. Only the operations the fusion network needs are
//! supported.

use crate::error::{Error, Result};

use super::params::{Gradients, ParamId, ParamStore};
use super::softmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    /// `y = W x + b`, `W` stored `(out, in)`.
    Dense { x: NodeId, w: ParamId, b: ParamId },
    Tanh { x: NodeId },
    /// `y = Σ_j softmax(raw)_j · x_j`.
    WeightedAdd {
        inputs: Vec<NodeId>,
        raw: ParamId,
        weights: Vec<f64>,
    },
    /// Concatenated embedding rows; `skip` tokens map to zero rows.
    Embed {
        table: ParamId,
        tokens: Vec<usize>,
        skip: usize,
    },
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    ops: Vec<Op>,
    values: Vec<Vec<f64>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: Vec<f64>, label: &str) -> Result<NodeId> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("layer {label}")));
        }
        self.ops.push(op);
        self.values.push(value);
        Ok(NodeId(self.values.len() - 1))
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn input(&mut self, data: Vec<f64>) -> Result<NodeId> {
        self.push(Op::Input, data, "input")
    }

    pub fn dense(&mut self, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let wt = self.params.get(w);
        let (out, inp) = (wt.shape()[0], wt.shape()[1]);
        let xv = &self.values[x.0];
        if xv.len() != inp {
            return Err(Error::shape(self.params.name(w).to_string(), inp, xv.len()));
        }
        let wd = wt.data();
        let bd = self.params.get(b).data();
        let y: Vec<f64> = (0..out)
            .map(|o| {
                let row = &wd[o * inp..(o + 1) * inp];
                bd[o] + row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let label = self.params.name(w).to_string();
        self.push(Op::Dense { x, w, b }, y, &label)
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let y = self.values[x.0].iter().map(|v| v.tanh()).collect();
        self.push(Op::Tanh { x }, y, "tanh")
    }

    pub fn weighted_add(&mut self, inputs: &[NodeId], raw: ParamId) -> Result<NodeId> {
        let label = self.params.name(raw).to_string();
        let raw_t = self.params.get(raw);
        if inputs.is_empty() || raw_t.len() != inputs.len() {
            return Err(Error::shape(label, raw_t.len(), inputs.len()));
        }
        let width = self.values[inputs[0].0].len();
        if inputs.iter().any(|i| self.values[i.0].len() != width) {
            return Err(Error::shape(label, width, "unequal summand widths"));
        }
        let weights = softmax(raw_t.data());
        let mut y = vec![0.0; width];
        for (inp, &a) in inputs.iter().zip(&weights) {
            for (yv, xv) in y.iter_mut().zip(&self.values[inp.0]) {
                *yv += a * xv;
            }
        }
        self.push(
            Op::WeightedAdd {
                inputs: inputs.to_vec(),
                raw,
                weights,
            },
            y,
            &label,
        )
    }

    pub fn embed(&mut self, table: ParamId, tokens: &[usize], skip: usize) -> Result<NodeId> {
        let t = self.params.get(table);
        let (vocab, dim) = (t.shape()[0], t.shape()[1]);
        let mut y = vec![0.0; tokens.len() * dim];
        for (pos, &tok) in tokens.iter().enumerate() {
            if tok >= vocab {
                return Err(Error::OutOfBounds(format!("token {tok} outside vocabulary of {vocab}")));
            }
            if tok != skip {
                y[pos * dim..(pos + 1) * dim].copy_from_slice(&t.data()[tok * dim..(tok + 1) * dim]);
            }
        }
        let label = self.params.name(table).to_string();
        self.push(
            Op::Embed {
                table,
                tokens: tokens.to_vec(),
                skip,
            },
            y,
            &label,
        )
    }

    /// Back-propagates `seed = ∂L/∂output` and adds parameter gradients into
    /// `grads`.
    pub fn backward(&self, output: NodeId, seed: &[f64], grads: &mut Gradients) {
        let mut adj: Vec<Vec<f64>> = self.values.iter().map(|v| vec![0.0; v.len()]).collect();
        adj[output.0].copy_from_slice(seed);

        for idx in (0..=output.0).rev() {
            let g = std::mem::take(&mut adj[idx]);
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            match &self.ops[idx] {
                Op::Input => {}
                Op::Dense { x, w, b } => {
                    let wt = self.params.get(*w);
                    let inp = wt.shape()[1];
                    let xv = &self.values[x.0];
                    {
                        let gw = grads.get_mut(*w);
                        for (o, &go) in g.iter().enumerate() {
                            for (gwi, xi) in gw[o * inp..(o + 1) * inp].iter_mut().zip(xv) {
                                *gwi += go * xi;
                            }
                        }
                    }
                    for (gb, go) in grads.get_mut(*b).iter_mut().zip(&g) {
                        *gb += go;
                    }
                    let wd = wt.data();
                    let ax = &mut adj[x.0];
                    for (o, &go) in g.iter().enumerate() {
                        for (a, wi) in ax.iter_mut().zip(&wd[o * inp..(o + 1) * inp]) {
                            *a += go * wi;
                        }
                    }
                }
                Op::Tanh { x } => {
                    let y = &self.values[idx];
                    let ax = &mut adj[x.0];
                    for ((a, go), yv) in ax.iter_mut().zip(&g).zip(y) {
                        *a += go * (1.0 - yv * yv);
                    }
                }
                Op::WeightedAdd {
                    inputs,
                    raw,
                    weights,
                } => {
                    // ∂L/∂a_j = <g, x_j>; through softmax: ∂L/∂r_j = a_j (s_j - Σ_k a_k s_k).
                    let dots: Vec<f64> = inputs
                        .iter()
                        .map(|i| self.values[i.0].iter().zip(&g).map(|(x, gv)| x * gv).sum())
                        .collect();
                    let mean: f64 = weights.iter().zip(&dots).map(|(a, s)| a * s).sum();
                    for ((gr, a), s) in grads.get_mut(*raw).iter_mut().zip(weights).zip(&dots) {
                        *gr += a * (s - mean);
                    }
                    for (inp, &a) in inputs.iter().zip(weights) {
                        for (ax, go) in adj[inp.0].iter_mut().zip(&g) {
                            *ax += a * go;
                        }
                    }
                }
                Op::Embed {
                    table,
                    tokens,
                    skip,
                } => {
                    let dim = self.params.get(*table).shape()[1];
                    let gt = grads.get_mut(*table);
                    for (pos, &tok) in tokens.iter().enumerate() {
                        if tok == *skip {
                            continue;
                        }
                        for (gv, go) in gt[tok * dim..(tok + 1) * dim]
                            .iter_mut()
                            .zip(&g[pos * dim..(pos + 1) * dim])
                        {
                            *gv += go;
                        }
                    }
                }
            }
        }
    }
}
