//! Reverse-mode differentiation over a linear tape of 2D operations.
//!
//! A [`Tape`] records values as they are computed. Parameters are registered
//! with [`Tape::param`] and keep their registration order; [`Tape::backward`]
//! returns one gradient per parameter in that order.

use super::tensor::{gemm, matmul, silu, silu_grad, Tensor};
use crate::{Error, Result};
use std::borrow::Cow;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Silu(Var),
    Concat(Vec<Var>),
    /// Row index of the winning point per output element.
    SegmentMax(Var, Vec<usize>),
    Reshape(Var),
    Scale(Var, f64),
    MeanSquaredError(Var, Var),
}

#[derive(Clone, Debug)]
struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    needs_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
    params: Vec<Var>,
}

fn as_matrix(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Cow<'p, Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Constant, false)
    }

    pub fn constant_ref(&mut self, t: &'p Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Constant, false)
    }

    pub fn param(&mut self, t: &'p Tensor) -> Var {
        let v = self.push(Cow::Borrowed(t), Op::Param, true);
        self.params.push(v);
        v
    }

    pub fn param_owned(&mut self, t: Tensor) -> Var {
        let v = self.push(Cow::Owned(t), Op::Param, true);
        self.params.push(v);
        v
    }

    /// `x (n×k) · w (k×m)`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (n, k) = as_matrix(self.value(x));
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 2 || ws[0] != k {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                expected: vec![k, ws.get(1).copied().unwrap_or(0)],
                got: ws,
            });
        }
        let m = ws[1];
        let out = matmul(self.value(x).data(), self.value(w).data(), n, k, m);
        let flag = self.grad_flag(&[x, w]);
        Ok(self.push(
            Cow::Owned(Tensor::matrix(n, m, out)?),
            Op::MatMul(x, w),
            flag,
        ))
    }

    /// Adds a length-`m` bias to every row of `x (n×m)`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (n, m) = as_matrix(self.value(x));
        if self.value(b).len() != m {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                expected: vec![m],
                got: self.value(b).shape().to_vec(),
            });
        }
        let mut out = self.value(x).data().to_vec();
        let bias = self.value(b).data();
        for row in out.chunks_exact_mut(m) {
            row.iter_mut().zip(bias).for_each(|(o, bb)| *o += bb);
        }
        let flag = self.grad_flag(&[x, b]);
        Ok(self.push(
            Cow::Owned(Tensor::matrix(n, m, out)?),
            Op::AddBias(x, b),
            flag,
        ))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let out: Vec<f64> = src.data().iter().map(|&v| silu(v)).collect();
        let t = Tensor::new(src.shape().to_vec(), out).expect("same shape");
        let flag = self.grad_flag(&[x]);
        self.push(Cow::Owned(t), Op::Silu(x), flag)
    }

    /// Column-wise concatenation of matrices sharing their row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let n = parts
            .first()
            .map(|v| self.value(*v).rows())
            .ok_or(Error::EmptyInput("concat"))?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = as_matrix(self.value(*p));
            if r != n {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    expected: vec![n],
                    got: vec![r],
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for p in parts {
                out.extend_from_slice(self.value(*p).row(i));
            }
        }
        let flag = self.grad_flag(parts);
        Ok(self.push(
            Cow::Owned(Tensor::matrix(n, total, out)?),
            Op::Concat(parts.to_vec()),
            flag,
        ))
    }

    /// Column-wise max over row segments: rows `offsets[s]..offsets[s+1]` of `x`
    /// become output row `s`. Ties keep the earliest row.
    pub fn segment_max(&mut self, x: Var, offsets: &[usize]) -> Result<Var> {
        let (n, f) = as_matrix(self.value(x));
        if offsets.len() < 2 || offsets[0] != 0 || *offsets.last().unwrap() != n {
            return Err(Error::ShapeMismatch {
                op: "segment_max",
                expected: vec![n],
                got: offsets.to_vec(),
            });
        }
        let segments = offsets.len() - 1;
        let data = self.value(x).data();
        let mut out = vec![f64::NEG_INFINITY; segments * f];
        let mut arg = vec![0usize; segments * f];
        for s in 0..segments {
            let (lo, hi) = (offsets[s], offsets[s + 1]);
            if hi <= lo {
                return Err(Error::EmptyInput("segment_max: empty segment"));
            }
            let orow = &mut out[s * f..(s + 1) * f];
            let arow = &mut arg[s * f..(s + 1) * f];
            for r in lo..hi {
                for (j, &v) in data[r * f..(r + 1) * f].iter().enumerate() {
                    if r == lo || v > orow[j] {
                        orow[j] = v;
                        arow[j] = r;
                    }
                }
            }
        }
        let flag = self.grad_flag(&[x]);
        Ok(self.push(
            Cow::Owned(Tensor::matrix(segments, f, out)?),
            Op::SegmentMax(x, arg),
            flag,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        let flag = self.grad_flag(&[x]);
        Ok(self.push(Cow::Owned(t), Op::Reshape(x), flag))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let mut t = self.value(x).clone();
        t.scale_in_place(k);
        let flag = self.grad_flag(&[x]);
        self.push(Cow::Owned(t), Op::Scale(x, k), flag)
    }

    /// Mean over all elements of `(pred − target)²`, as a scalar.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(Error::ShapeMismatch {
                op: "mse",
                expected: p.shape().to_vec(),
                got: t.shape().to_vec(),
            });
        }
        if p.is_empty() {
            return Err(Error::EmptyInput("mse"));
        }
        let sum: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let loss = sum / p.len() as f64;
        let flag = self.grad_flag(&[pred, target]);
        Ok(self.push(
            Cow::Owned(Tensor::scalar(loss)),
            Op::MeanSquaredError(pred, target),
            flag,
        ))
    }

    /// Propagates `seed` (shaped like `output`) back to every registered parameter.
    pub fn backward(&self, output: Var, seed: Tensor) -> Result<Vec<Tensor>> {
        if seed.len() != self.value(output).len() {
            return Err(Error::ShapeMismatch {
                op: "backward seed",
                expected: self.value(output).shape().to_vec(),
                got: seed.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed.reshaped(self.value(output).shape().to_vec())?);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Constant => {}
                Op::Param => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(x, w) => {
                    let (n, k) = as_matrix(self.value(*x));
                    let m = self.value(*w).cols();
                    if self.nodes[x.0].needs_grad {
                        // dX = dY · Wᵀ
                        let mut dx = vec![0.0; n * k];
                        let wd = self.value(*w).data();
                        gemm(n, m, k, g.data(), m as isize, 1, wd, 1, m as isize, &mut dx, false);
                        self.accumulate(&mut grads, *x, dx);
                    }
                    if self.nodes[w.0].needs_grad {
                        // dW = Xᵀ · dY
                        let mut dw = vec![0.0; k * m];
                        let xd = self.value(*x).data();
                        gemm(k, n, m, xd, 1, k as isize, g.data(), m as isize, 1, &mut dw, false);
                        self.accumulate(&mut grads, *w, dw);
                    }
                }
                Op::AddBias(x, b) => {
                    let m = self.value(*b).len();
                    if self.nodes[b.0].needs_grad {
                        let mut db = vec![0.0; m];
                        for row in g.data().chunks_exact(m) {
                            db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                        }
                        self.accumulate(&mut grads, *b, db);
                    }
                    if self.nodes[x.0].needs_grad {
                        self.accumulate(&mut grads, *x, g.into_data());
                    }
                }
                Op::Silu(x) => {
                    let xv = self.value(*x).data();
                    let dx = g
                        .data()
                        .iter()
                        .zip(xv)
                        .map(|(gi, xi)| gi * silu_grad(*xi))
                        .collect();
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Concat(parts) => {
                    let n = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for p in parts {
                        let c = self.value(*p).cols();
                        if self.nodes[p.0].needs_grad {
                            let mut dp = Vec::with_capacity(n * c);
                            for i in 0..n {
                                let row = &g.data()[i * total..(i + 1) * total];
                                dp.extend_from_slice(&row[offset..offset + c]);
                            }
                            self.accumulate(&mut grads, *p, dp);
                        }
                        offset += c;
                    }
                }
                Op::SegmentMax(x, arg) => {
                    let f = self.value(*x).cols();
                    let mut dx = vec![0.0; self.value(*x).len()];
                    for (o, (&r, gi)) in arg.iter().zip(g.data()).enumerate() {
                        dx[r * f + o % f] += gi;
                    }
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Reshape(x) => {
                    self.accumulate(&mut grads, *x, g.into_data());
                }
                Op::Scale(x, k) => {
                    let dx = g.data().iter().map(|v| v * k).collect();
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::MeanSquaredError(p, t) => {
                    let gs = g.data()[0];
                    let (pv, tv) = (self.value(*p).data(), self.value(*t).data());
                    let k = 2.0 * gs / pv.len() as f64;
                    let diff: Vec<f64> = pv.iter().zip(tv).map(|(a, b)| k * (a - b)).collect();
                    if self.nodes[t.0].needs_grad {
                        self.accumulate(&mut grads, *t, diff.iter().map(|d| -d).collect());
                    }
                    if self.nodes[p.0].needs_grad {
                        self.accumulate(&mut grads, *p, diff);
                    }
                }
            }
        }

        Ok(self
            .params
            .iter()
            .map(|p| {
                grads[p.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(self.value(*p).shape()))
            })
            .collect())
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Vec<f64>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing
                .data_mut()
                .iter_mut()
                .zip(&delta)
                .for_each(|(a, d)| *a += d),
            slot @ None => {
                *slot = Some(
                    Tensor::new(self.value(v).shape().to_vec(), delta).expect("gradient shape"),
                );
            }
        }
    }
}
