//! Define-by-run reverse-mode differentiation.
//!
//! Every op appends a node to the [`Graph`]; node ids are therefore already a
//! topological order, and [`Graph::backward`] walks them once in reverse.

use super::activation::Activation;
use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Act {
        x: Var,
        kind: Activation,
    },
    /// `y = gamma * xhat + beta`; `xhat = (x - mean) * inv_std`.
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        /// Batch statistics (train) vs frozen statistics (eval).
        batch_stats: bool,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    BroadcastPoints {
        x: Var,
        points: usize,
    },
    ConcatTiled {
        local: Var,
        global: Var,
    },
    LatentDot {
        branch: Var,
        trunk: Var,
        fields: usize,
    },
    Mse {
        pred: Var,
        target: Vec<f64>,
    },
    DotConst {
        x: Var,
        weights: Vec<f64>,
    },
    Sum(Var),
}

/// Batch statistics observed by a train-mode batchnorm, waiting to be
/// folded into running statistics.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub slot: usize,
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
    pub count: usize,
}

/// A recorded computation.
#[derive(Debug, Default)]
pub struct Graph {
    values: Vec<Tensor>,
    grads: Vec<Option<Vec<f64>>>,
    requires: Vec<bool>,
    ops: Vec<Op>,
    params: Vec<(ParamId, Var)>,
    batch_stats: Vec<BatchStats>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, requires: bool) -> Var {
        self.values.push(value);
        self.grads.push(None);
        self.requires.push(requires);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    fn req(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.requires[v.0])
    }

    /// Input that takes no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Input that receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Trainable parameter; its gradient is reported by [`Graph::param_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&(_, v)) = self.params.iter().find(|(p, _)| *p == id) {
            return v;
        }
        let v = self.leaf(store.get(id).clone());
        self.params.push((id, v));
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Gradients of every parameter registered through [`Graph::param`].
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, Option<&[f64]>)> {
        self.params.iter().map(|&(p, v)| (p, self.grad(v)))
    }

    pub(crate) fn record_batch_stats(&mut self, stats: BatchStats) {
        self.batch_stats.push(stats);
    }

    pub fn batch_stats(&self) -> &[BatchStats] {
        &self.batch_stats
    }

    /// `x · W + b` over all leading axes of `x`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        let bs = self.shape(b);
        if ws.len() != 2 || xs.is_empty() || *xs.last().unwrap() != ws[0] {
            return Err(Error::shape("dense", xs, ws));
        }
        if bs != [ws[1]] {
            return Err(Error::shape("dense bias", bs, &ws[1..]));
        }
        let (k, n) = (ws[0], ws[1]);
        let xv = &self.values[x.0];
        let rows = xv.rows();
        let mut out_shape = xs.to_vec();
        *out_shape.last_mut().unwrap() = n;
        let bias = self.values[b.0].data();
        let mut y = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            y.extend_from_slice(bias);
        }
        gemm(rows, k, n, xv.data(), false, self.values[w.0].data(), false, &mut y, true);
        let req = self.req(&[x, w, b]);
        Ok(self.push(Tensor::new(&out_shape, y)?, Op::Linear { x, w, b }, req))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let y: Vec<f64> = self.values[a.0]
            .data()
            .iter()
            .zip(self.values[b.0].data())
            .map(|(p, q)| p + q)
            .collect();
        let t = Tensor::new(self.shape(a), y)?;
        let req = self.req(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), req))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let y: Vec<f64> = self.values[a.0]
            .data()
            .iter()
            .zip(self.values[b.0].data())
            .map(|(p, q)| p * q)
            .collect();
        let t = Tensor::new(self.shape(a), y)?;
        let req = self.req(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), req))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let xv = &self.values[x.0];
        let y: Vec<f64> = xv.data().iter().map(|&v| kind.apply(v)).collect();
        let t = Tensor::new(xv.shape(), y).expect("same shape");
        let req = self.req(&[x]);
        self.push(t, Op::Act { x, kind }, req)
    }

    /// Batch-statistics normalization over every non-channel axis (channel is last).
    ///
    /// Returns the output and the per-channel batch mean and biased variance.
    pub fn batchnorm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let c = self.check_bn_shapes(x, gamma, beta)?;
        let xv = &self.values[x.0];
        let rows = xv.rows();
        if rows < 2 {
            return Err(Error::TooFewStatistics(rows));
        }
        let data = xv.data();
        let mut mean = vec![0.0; c];
        for row in data.chunks_exact(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; c];
        for row in data.chunks_exact(c) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        var.iter_mut().for_each(|s| *s /= rows as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (y, xhat) = self.bn_apply(x, gamma, beta, &mean, &inv_std);
        let req = self.req(&[x, gamma, beta]);
        let shape = self.shape(x).to_vec();
        let out = self.push(
            Tensor::new(&shape, y)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: true,
            },
            req,
        );
        Ok((out, mean, var))
    }

    /// Normalization with frozen statistics.
    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let c = self.check_bn_shapes(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(Error::shape("batchnorm stats", &[c], &[mean.len()]));
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (y, xhat) = self.bn_apply(x, gamma, beta, mean, &inv_std);
        let req = self.req(&[x, gamma, beta]);
        let shape = self.shape(x).to_vec();
        Ok(self.push(
            Tensor::new(&shape, y)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: false,
            },
            req,
        ))
    }

    fn check_bn_shapes(&self, x: Var, gamma: Var, beta: Var) -> Result<usize> {
        let xs = self.shape(x);
        let c = *xs.last().ok_or_else(|| Error::shape("batchnorm", xs, &[]))?;
        for p in [gamma, beta] {
            if self.shape(p) != [c] {
                return Err(Error::shape("batchnorm affine", self.shape(p), &[c]));
            }
        }
        Ok(c)
    }

    fn bn_apply(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        inv_std: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let g = self.values[gamma.0].data();
        let b = self.values[beta.0].data();
        let data = self.values[x.0].data();
        let c = g.len();
        let mut xhat = Vec::with_capacity(data.len());
        let mut y = Vec::with_capacity(data.len());
        for row in data.chunks_exact(c) {
            for j in 0..c {
                let h = (row[j] - mean[j]) * inv_std[j];
                xhat.push(h);
                y.push(g[j] * h + b[j]);
            }
        }
        (y, xhat)
    }

    /// Per-channel max over the point axis of a `[B, N, H]` tensor.
    pub fn maxpool_points(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 3 {
            return Err(Error::shape("maxpool_points", xs, &[0, 0, 0]));
        }
        let (b, n, h) = (xs[0], xs[1], xs[2]);
        if n == 0 {
            return Err(Error::EmptySet("maxpool_points"));
        }
        let data = self.values[x.0].data();
        let mut out = vec![f64::NEG_INFINITY; b * h];
        let mut argmax = vec![0usize; b * h];
        for bi in 0..b {
            let o = &mut out[bi * h..(bi + 1) * h];
            let a = &mut argmax[bi * h..(bi + 1) * h];
            for i in 0..n {
                let row = &data[(bi * n + i) * h..(bi * n + i + 1) * h];
                for j in 0..h {
                    // strict comparison keeps the lowest index on ties
                    if row[j] > o[j] || i == 0 {
                        o[j] = row[j];
                        a[j] = i;
                    }
                }
            }
        }
        let req = self.req(&[x]);
        Ok(self.push(Tensor::new(&[b, h], out)?, Op::MaxPool { x, argmax }, req))
    }

    /// Tile `[B, H]` to `[B, N, H]`.
    pub fn broadcast_points(&mut self, x: Var, points: usize) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 2 {
            return Err(Error::shape("broadcast_points", xs, &[0, 0]));
        }
        let (b, h) = (xs[0], xs[1]);
        let data = self.values[x.0].data();
        let mut y = Vec::with_capacity(b * points * h);
        for bi in 0..b {
            let row = &data[bi * h..(bi + 1) * h];
            for _ in 0..points {
                y.extend_from_slice(row);
            }
        }
        let req = self.req(&[x]);
        Ok(self.push(
            Tensor::new(&[b, points, h], y)?,
            Op::BroadcastPoints { x, points },
            req,
        ))
    }

    /// `[B, N, C] ++ tile([B, G])` along the channel axis.
    pub fn concat_tiled(&mut self, local: Var, global: Var) -> Result<Var> {
        let ls = self.shape(local);
        let gs = self.shape(global);
        if ls.len() != 3 || gs.len() != 2 || ls[0] != gs[0] {
            return Err(Error::shape("concat_tiled", ls, gs));
        }
        let (b, n, c, g) = (ls[0], ls[1], ls[2], gs[1]);
        let lv = self.values[local.0].data();
        let gv = self.values[global.0].data();
        let mut y = Vec::with_capacity(b * n * (c + g));
        for bi in 0..b {
            let grow = &gv[bi * g..(bi + 1) * g];
            for i in 0..n {
                y.extend_from_slice(&lv[(bi * n + i) * c..(bi * n + i + 1) * c]);
                y.extend_from_slice(grow);
            }
        }
        let req = self.req(&[local, global]);
        Ok(self.push(
            Tensor::new(&[b, n, c + g], y)?,
            Op::ConcatTiled { local, global },
            req,
        ))
    }

    /// `out[.., m] = Σ_h branch[.., h] · trunk[.., h * fields + m]`.
    pub fn latent_dot(&mut self, branch: Var, trunk: Var, fields: usize) -> Result<Var> {
        let bs = self.shape(branch);
        let ts = self.shape(trunk);
        let h = *bs.last().unwrap_or(&0);
        if bs.len() != ts.len()
            || bs[..bs.len() - 1] != ts[..ts.len() - 1]
            || *ts.last().unwrap() != h * fields
        {
            return Err(Error::shape("latent_dot", bs, ts));
        }
        let bv = self.values[branch.0].data();
        let tv = self.values[trunk.0].data();
        let rows = self.values[branch.0].rows();
        let mut y = vec![0.0; rows * fields];
        for r in 0..rows {
            let br = &bv[r * h..(r + 1) * h];
            let tr = &tv[r * h * fields..(r + 1) * h * fields];
            let out = &mut y[r * fields..(r + 1) * fields];
            for (hi, &bh) in br.iter().enumerate() {
                let t = &tr[hi * fields..(hi + 1) * fields];
                for m in 0..fields {
                    out[m] += bh * t[m];
                }
            }
        }
        let mut shape = bs.to_vec();
        *shape.last_mut().unwrap() = fields;
        let req = self.req(&[branch, trunk]);
        Ok(self.push(
            Tensor::new(&shape, y)?,
            Op::LatentDot {
                branch,
                trunk,
                fields,
            },
            req,
        ))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let ps = self.shape(pred);
        if ps != target.shape() {
            return Err(Error::shape("mse", ps, target.shape()));
        }
        let n = target.len().max(1) as f64;
        let loss = self.values[pred.0]
            .data()
            .iter()
            .zip(target.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        let req = self.req(&[pred]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Mse {
                pred,
                target: target.data().to_vec(),
            },
            req,
        ))
    }

    /// `Σ w_i x_i` for constant weights.
    pub fn dot_const(&mut self, x: Var, weights: &Tensor) -> Result<Var> {
        let xs = self.shape(x);
        if xs != weights.shape() {
            return Err(Error::shape("dot_const", xs, weights.shape()));
        }
        let s = self.values[x.0]
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum();
        let req = self.req(&[x]);
        Ok(self.push(
            Tensor::scalar(s),
            Op::DotConst {
                x,
                weights: weights.data().to_vec(),
            },
            req,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.values[x.0].data().iter().sum();
        let req = self.req(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), req)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    /// Propagate `d root / d node` to every node that requires a gradient.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.values[root.0].len() != 1 {
            return Err(Error::shape("backward root", self.shape(root), &[]));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[root.0] = Some(vec![1.0]);
        let Graph {
            values,
            grads,
            requires,
            ops,
            ..
        } = self;
        for i in (0..=root.0).rev() {
            if !requires[i] {
                continue;
            }
            let Some(gy) = grads[i].take() else {
                continue;
            };
            backprop_node(&ops[i], &values[i], &gy, values, grads, requires);
            grads[i] = Some(gy);
        }
        Ok(())
    }
}

/// Lazily allocated gradient buffer for `v`, or `None` if it takes no gradient.
fn slot<'a>(
    grads: &'a mut [Option<Vec<f64>>],
    requires: &[bool],
    values: &[Tensor],
    v: Var,
) -> Option<&'a mut Vec<f64>> {
    if !requires[v.0] {
        return None;
    }
    let n = values[v.0].len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
}

fn backprop_node(
    op: &Op,
    y: &Tensor,
    gy: &[f64],
    values: &[Tensor],
    grads: &mut [Option<Vec<f64>>],
    requires: &[bool],
) {
    match op {
        Op::Leaf => {}
        Op::Linear { x, w, b } => {
            let xv = &values[x.0];
            let wv = &values[w.0];
            let (k, n) = (wv.shape()[0], wv.shape()[1]);
            let rows = xv.rows();
            if let Some(gx) = slot(grads, requires, values, *x) {
                gemm(rows, n, k, gy, false, wv.data(), true, gx, true);
            }
            if let Some(gw) = slot(grads, requires, values, *w) {
                gemm(k, rows, n, xv.data(), true, gy, false, gw, true);
            }
            if let Some(gb) = slot(grads, requires, values, *b) {
                for row in gy.chunks_exact(n) {
                    for (a, g) in gb.iter_mut().zip(row) {
                        *a += g;
                    }
                }
            }
        }
        Op::Add(a, b) => {
            for v in [a, b] {
                if let Some(g) = slot(grads, requires, values, *v) {
                    for (s, d) in g.iter_mut().zip(gy) {
                        *s += d;
                    }
                }
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (values[a.0].data(), values[b.0].data());
            if let Some(g) = slot(grads, requires, values, *a) {
                for ((s, d), o) in g.iter_mut().zip(gy).zip(bv) {
                    *s += d * o;
                }
            }
            if let Some(g) = slot(grads, requires, values, *b) {
                for ((s, d), o) in g.iter_mut().zip(gy).zip(av) {
                    *s += d * o;
                }
            }
        }
        Op::Act { x, kind } => {
            let xv = values[x.0].data();
            if let Some(g) = slot(grads, requires, values, *x) {
                for (((s, d), &xi), &yi) in g.iter_mut().zip(gy).zip(xv).zip(y.data()) {
                    *s += d * kind.derivative(xi, yi);
                }
            }
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            batch_stats,
        } => {
            let c = inv_std.len();
            let rows = xhat.len() / c;
            let mut sum_g = vec![0.0; c];
            let mut sum_gx = vec![0.0; c];
            for (grow, hrow) in gy.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                for j in 0..c {
                    sum_g[j] += grow[j];
                    sum_gx[j] += grow[j] * hrow[j];
                }
            }
            if let Some(g) = slot(grads, requires, values, *gamma) {
                for (s, v) in g.iter_mut().zip(&sum_gx) {
                    *s += v;
                }
            }
            if let Some(g) = slot(grads, requires, values, *beta) {
                for (s, v) in g.iter_mut().zip(&sum_g) {
                    *s += v;
                }
            }
            let gam = values[gamma.0].data().to_vec();
            if let Some(gx) = slot(grads, requires, values, *x) {
                let n = rows as f64;
                for ((srow, grow), hrow) in gx
                    .chunks_exact_mut(c)
                    .zip(gy.chunks_exact(c))
                    .zip(xhat.chunks_exact(c))
                {
                    for j in 0..c {
                        let scale = gam[j] * inv_std[j];
                        srow[j] += if *batch_stats {
                            scale * (grow[j] - sum_g[j] / n - hrow[j] * sum_gx[j] / n)
                        } else {
                            scale * grow[j]
                        };
                    }
                }
            }
        }
        Op::MaxPool { x, argmax } => {
            let xs = values[x.0].shape();
            let (n, h) = (xs[1], xs[2]);
            if let Some(g) = slot(grads, requires, values, *x) {
                for (idx, (&a, d)) in argmax.iter().zip(gy).enumerate() {
                    let (bi, j) = (idx / h, idx % h);
                    g[(bi * n + a) * h + j] += d;
                }
            }
        }
        Op::BroadcastPoints { x, points } => {
            let h = values[x.0].shape()[1];
            if let Some(g) = slot(grads, requires, values, *x) {
                for (bi, grow) in g.chunks_exact_mut(h).enumerate() {
                    for i in 0..*points {
                        let src = &gy[(bi * points + i) * h..(bi * points + i + 1) * h];
                        for (s, d) in grow.iter_mut().zip(src) {
                            *s += d;
                        }
                    }
                }
            }
        }
        Op::ConcatTiled { local, global } => {
            let ls = values[local.0].shape();
            let (b, n, c) = (ls[0], ls[1], ls[2]);
            let gdim = values[global.0].shape()[1];
            let w = c + gdim;
            if let Some(g) = slot(grads, requires, values, *local) {
                for r in 0..b * n {
                    for (s, d) in g[r * c..(r + 1) * c].iter_mut().zip(&gy[r * w..r * w + c]) {
                        *s += d;
                    }
                }
            }
            if let Some(g) = slot(grads, requires, values, *global) {
                for bi in 0..b {
                    let grow = &mut g[bi * gdim..(bi + 1) * gdim];
                    for i in 0..n {
                        let r = bi * n + i;
                        for (s, d) in grow.iter_mut().zip(&gy[r * w + c..(r + 1) * w]) {
                            *s += d;
                        }
                    }
                }
            }
        }
        Op::LatentDot {
            branch,
            trunk,
            fields,
        } => {
            let f = *fields;
            let bv = values[branch.0].data();
            let tv = values[trunk.0].data();
            let h = values[branch.0].last_dim();
            let rows = values[branch.0].rows();
            if let Some(g) = slot(grads, requires, values, *branch) {
                for r in 0..rows {
                    let d = &gy[r * f..(r + 1) * f];
                    let tr = &tv[r * h * f..(r + 1) * h * f];
                    for hi in 0..h {
                        let t = &tr[hi * f..(hi + 1) * f];
                        g[r * h + hi] += d.iter().zip(t).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            if let Some(g) = slot(grads, requires, values, *trunk) {
                for r in 0..rows {
                    let d = &gy[r * f..(r + 1) * f];
                    let br = &bv[r * h..(r + 1) * h];
                    let gt = &mut g[r * h * f..(r + 1) * h * f];
                    for (hi, &bh) in br.iter().enumerate() {
                        for m in 0..f {
                            gt[hi * f + m] += d[m] * bh;
                        }
                    }
                }
            }
        }
        Op::Mse { pred, target } => {
            let p = values[pred.0].data();
            let scale = 2.0 * gy[0] / target.len().max(1) as f64;
            if let Some(g) = slot(grads, requires, values, *pred) {
                for ((s, pi), ti) in g.iter_mut().zip(p).zip(target) {
                    *s += scale * (pi - ti);
                }
            }
        }
        Op::DotConst { x, weights } => {
            if let Some(g) = slot(grads, requires, values, *x) {
                for (s, w) in g.iter_mut().zip(weights) {
                    *s += gy[0] * w;
                }
            }
        }
        Op::Sum(x) => {
            if let Some(g) = slot(grads, requires, values, *x) {
                for s in g.iter_mut() {
                    *s += gy[0];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn dense_identity_and_bias_only() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let w = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = g.constant(t(&[2], &[0.0, 0.0]));
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);

        let x = g.constant(t(&[1, 2], &[0.0, 0.0]));
        let w = g.constant(t(&[2, 2], &[0.3, -7.0, 2.5, 9.0]));
        let b = g.constant(t(&[2], &[3.0, -1.0]));
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, -1.0]);
    }

    #[test]
    fn dense_shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[4, 3]));
        let w = g.constant(Tensor::zeros(&[2, 5]));
        let b = g.constant(Tensor::zeros(&[5]));
        let err = g.linear(x, w, b).unwrap_err().to_string();
        assert!(err.contains("[4, 3]") && err.contains("[2, 5]"), "{err}");
    }

    #[test]
    fn maxpool_picks_channel_max() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 2, 2], &[1.0, 5.0, 3.0, 2.0]));
        let y = g.maxpool_points(x).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 5.0]);
        let e = g.constant(Tensor::zeros(&[1, 0, 2]));
        assert!(matches!(g.maxpool_points(e), Err(Error::EmptySet(_))));
    }

    #[test]
    fn maxpool_ties_route_gradient_to_lowest_index() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[1, 3, 1], &[2.0, 2.0, 2.0]));
        let y = g.maxpool_points(x).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn mse_values_and_gradient() {
        let mut g = Graph::new();
        let p = g.leaf(t(&[2], &[1.0, 1.0]));
        let l = g.mse(p, &t(&[2], &[0.0, 0.0])).unwrap();
        assert_eq!(g.value(l).item(), 1.0);
        g.backward(l).unwrap();
        assert_eq!(g.grad(p).unwrap(), &[1.0, 1.0]);

        let p = g.constant(t(&[3], &[0.5, -2.0, 4.0]));
        let l = g.mse(p, &t(&[3], &[0.5, -2.0, 4.0])).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
        assert!(g.mse(p, &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn batchnorm_constant_input() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[3, 4, 2], 7.5));
        let gamma = g.constant(Tensor::full(&[2], 1.0));
        let beta0 = g.constant(Tensor::zeros(&[2]));
        let beta5 = g.constant(Tensor::full(&[2], 5.0));
        let (y, _, var) = g.batchnorm_train(x, gamma, beta0, 1e-5).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
        assert_eq!(var, vec![0.0, 0.0]);
        let (y, _, _) = g.batchnorm_train(x, gamma, beta5, 1e-5).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn batchnorm_needs_two_rows() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 3]));
        let one = g.constant(Tensor::full(&[3], 1.0));
        let zero = g.constant(Tensor::zeros(&[3]));
        assert!(matches!(
            g.batchnorm_train(x, one, zero, 1e-5),
            Err(Error::TooFewStatistics(1))
        ));
    }

    #[test]
    fn latent_dot_hand_value() {
        let mut g = Graph::new();
        let b = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let tr = g.constant(t(&[1, 2], &[0.1, 0.2]));
        let y = g.latent_dot(b, tr, 1).unwrap();
        assert!((g.value(y).item() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[2]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn shared_input_accumulates() {
        // d/dx sum(x * x) = 2x
        let mut g = Graph::new();
        let x = g.leaf(t(&[3], &[1.0, -2.0, 0.5]));
        let y = g.mul(x, x).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, -4.0, 1.0]);
    }
}
