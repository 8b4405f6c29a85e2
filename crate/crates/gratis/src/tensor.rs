//! Dense f64 tensors with tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles; calling
//! [`Tape::backward`] on a scalar fills the gradient buffer of every
//! reachable node that requires gradients. Gradients accumulate across
//! repeated backward calls until [`Tape::zero_grad`] is called.
//!
//! Layout is row-major throughout. There is no broadcasting beyond
//! scalar-with-tensor; shape alignment is always explicit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} elements but buffer has {actual}")]
    ShapeDataMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    DimMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("{op}: index {index} out of range for size {size}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        size: usize,
    },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("{op} expects rank {expected}, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
}

/// Dense row-major tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeDataMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn ones(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![1.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Element access for 2-D tensors.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert_eq!(self.rank(), 2);
        let k = self.shape[1];
        &self.data[i * k..(i + 1) * k]
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type BackwardFn = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    back: Option<BackwardFn>,
    needs_grad: bool,
}

/// Single-threaded recording context for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

// axis helpers: split a shape into (outer, n, inner) strides around `axis`
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, n, inner)
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(
        &mut self,
        value: Tensor,
        parents: Vec<usize>,
        back: Option<BackwardFn>,
    ) -> Var {
        let needs_grad =
            value.requires_grad || parents.iter().any(|&p| self.nodes[p].needs_grad);
        self.nodes.push(Node {
            value,
            parents,
            back,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Register a leaf tensor; gradients flow into it iff `requires_grad` is set.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, vec![], None)
    }

    /// Register a constant (no gradient ever).
    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = false;
        self.push(t, vec![], None)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    /// Gradient of the last backward pass(es) at `v`, if any.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.grad = None;
        }
    }

    /// Reverse sweep from a scalar loss. Accumulates into each reachable
    /// node's grad buffer; repeated calls without `zero_grad` accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: self.nodes[loss.0].value.shape.clone(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            if self.nodes[i].needs_grad {
                if let Some(back) = &self.nodes[i].back {
                    let parent_grads = back(&g);
                    let parents = self.nodes[i].parents.clone();
                    debug_assert_eq!(parent_grads.len(), parents.len());
                    for (p, pg) in parents.into_iter().zip(parent_grads) {
                        if !self.nodes[p].needs_grad {
                            continue;
                        }
                        match &mut grads[p] {
                            Some(acc) => {
                                for (a, b) in acc.iter_mut().zip(&pg) {
                                    *a += b;
                                }
                            }
                            None => grads[p] = Some(pg),
                        }
                    }
                }
                // persist into the node's grad buffer
                if self.nodes[i].value.requires_grad {
                    let len = g.len();
                    let slot = self.nodes[i]
                        .value
                        .grad
                        .get_or_insert_with(|| vec![0.0; len]);
                    for (a, b) in slot.iter_mut().zip(&g) {
                        *a += b;
                    }
                }
            }
        }
        Ok(())
    }

    // ── binary elementwise ──────────────────────────────────────────

    fn check_same_shape(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
    ) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::DimMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check_same_shape("add", a, b)?;
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let data: Vec<f64> = av.data.iter().zip(&bv.data).map(|(x, y)| x + y).collect();
        let out = Tensor::new(av.shape.clone(), data)?;
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|g: &[f64]| vec![g.to_vec(), g.to_vec()])),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check_same_shape("sub", a, b)?;
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let data: Vec<f64> = av.data.iter().zip(&bv.data).map(|(x, y)| x - y).collect();
        let out = Tensor::new(av.shape.clone(), data)?;
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|g: &[f64]| {
                vec![g.to_vec(), g.iter().map(|x| -x).collect()]
            })),
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check_same_shape("mul", a, b)?;
        let av = self.nodes[a.0].value.data.clone();
        let bv = self.nodes[b.0].value.data.clone();
        let data: Vec<f64> = av.iter().zip(&bv).map(|(x, y)| x * y).collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |g: &[f64]| {
                vec![
                    g.iter().zip(&bv).map(|(gi, y)| gi * y).collect(),
                    g.iter().zip(&av).map(|(gi, x)| gi * x).collect(),
                ]
            })),
        ))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check_same_shape("div", a, b)?;
        let av = self.nodes[a.0].value.data.clone();
        let bv = self.nodes[b.0].value.data.clone();
        let data: Vec<f64> = av.iter().zip(&bv).map(|(x, y)| x / y).collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |g: &[f64]| {
                let ga: Vec<f64> = g.iter().zip(&bv).map(|(gi, y)| gi / y).collect();
                let gb: Vec<f64> = g
                    .iter()
                    .zip(av.iter().zip(&bv))
                    .map(|(gi, (x, y))| -gi * x / (y * y))
                    .collect();
                vec![ga, gb]
            })),
        ))
    }

    // ── scalar ops ──────────────────────────────────────────────────

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let av = &self.nodes[a.0].value;
        let data: Vec<f64> = av.data.iter().map(|x| x + s).collect();
        let out = Tensor::new(av.shape.clone(), data).expect("shape preserved");
        self.push(
            out,
            vec![a.0],
            Some(Box::new(|g: &[f64]| vec![g.to_vec()])),
        )
    }

    pub fn mul_scalar(&mut self, a: Var, s: f64) -> Var {
        let av = &self.nodes[a.0].value;
        let data: Vec<f64> = av.data.iter().map(|x| x * s).collect();
        let out = Tensor::new(av.shape.clone(), data).expect("shape preserved");
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &[f64]| {
                vec![g.iter().map(|x| x * s).collect()]
            })),
        )
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.mul_scalar(a, -1.0)
    }

    /// Forward identity whose gradient does not propagate to the input.
    pub fn stop_grad(&mut self, a: Var) -> Var {
        let mut t = self.nodes[a.0].value.clone();
        t.requires_grad = false;
        t.grad = None;
        self.push(t, vec![], None)
    }

    // ── unary elementwise ───────────────────────────────────────────

    fn unary(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var {
        let av = self.nodes[a.0].value.data.clone();
        let data: Vec<f64> = av.iter().map(|&x| f(x)).collect();
        let outd = data.clone();
        let out = Tensor::new(self.shape(a).to_vec(), data).expect("shape preserved");
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &[f64]| {
                vec![g
                    .iter()
                    .zip(av.iter().zip(&outd))
                    .map(|(gi, (&x, &y))| gi * df(x, y))
                    .collect()]
            })),
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(
            a,
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            },
            |_, y| y * (1.0 - y),
        )
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.ln(), |x, _| 1.0 / x)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.exp(), |_, y| y)
    }

    // ── matmul ──────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
            return Err(TensorError::DimMismatch {
                op: "matmul",
                lhs: ash,
                rhs: bsh,
            });
        }
        let (m, k, n) = (ash[0], ash[1], bsh[1]);
        let ad = self.nodes[a.0].value.data.clone();
        let bd = self.nodes[b.0].value.data.clone();
        let data = matmul_raw(&ad, &bd, m, k, n);
        let out = Tensor::new(vec![m, n], data)?;
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |g: &[f64]| {
                // dA = dC·Bᵀ, dB = Aᵀ·dC
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * bd[p * n + j];
                        }
                        da[i * k + p] = s;
                    }
                }
                let mut db = vec![0.0; k * n];
                for p in 0..k {
                    for j in 0..n {
                        let mut s = 0.0;
                        for i in 0..m {
                            s += ad[i * k + p] * g[i * n + j];
                        }
                        db[p * n + j] = s;
                    }
                }
                vec![da, db]
            })),
        ))
    }

    // ── softmax / log-softmax ───────────────────────────────────────

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange {
                op: "softmax",
                axis,
                rank: shape.len(),
            });
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let x = &self.nodes[a.0].value.data;
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for r in 0..inner {
                let idx = |t: usize| (o * n + t) * inner + r;
                let mut mx = f64::NEG_INFINITY;
                for t in 0..n {
                    mx = mx.max(x[idx(t)]);
                }
                let mut sum = 0.0;
                for t in 0..n {
                    let e = (x[idx(t)] - mx).exp();
                    y[idx(t)] = e;
                    sum += e;
                }
                for t in 0..n {
                    y[idx(t)] /= sum;
                }
            }
        }
        let yd = y.clone();
        let out = Tensor::new(shape, y)?;
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &[f64]| {
                let mut dx = vec![0.0; g.len()];
                for o in 0..outer {
                    for r in 0..inner {
                        let idx = |t: usize| (o * n + t) * inner + r;
                        let mut dot = 0.0;
                        for t in 0..n {
                            dot += g[idx(t)] * yd[idx(t)];
                        }
                        for t in 0..n {
                            dx[idx(t)] = yd[idx(t)] * (g[idx(t)] - dot);
                        }
                    }
                }
                vec![dx]
            })),
        ))
    }

    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange {
                op: "log_softmax",
                axis,
                rank: shape.len(),
            });
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let x = &self.nodes[a.0].value.data;
        let mut y = vec![0.0; x.len()];
        let mut soft = vec![0.0; x.len()];
        for o in 0..outer {
            for r in 0..inner {
                let idx = |t: usize| (o * n + t) * inner + r;
                let mut mx = f64::NEG_INFINITY;
                for t in 0..n {
                    mx = mx.max(x[idx(t)]);
                }
                let mut sum = 0.0;
                for t in 0..n {
                    sum += (x[idx(t)] - mx).exp();
                }
                let lse = mx + sum.ln();
                for t in 0..n {
                    y[idx(t)] = x[idx(t)] - lse;
                    soft[idx(t)] = (x[idx(t)] - lse).exp();
                }
            }
        }
        let out = Tensor::new(shape, y)?;
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &[f64]| {
                let mut dx = vec![0.0; g.len()];
                for o in 0..outer {
                    for r in 0..inner {
                        let idx = |t: usize| (o * n + t) * inner + r;
                        let mut gsum = 0.0;
                        for t in 0..n {
                            gsum += g[idx(t)];
                        }
                        for t in 0..n {
                            dx[idx(t)] = g[idx(t)] - soft[idx(t)] * gsum;
                        }
                    }
                }
                vec![dx]
            })),
        ))
    }

    // ── reductions ──────────────────────────────────────────────────

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].value.data.iter().sum();
        let n = self.nodes[a.0].value.numel();
        let out = Tensor::scalar(s);
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &[f64]| vec![vec![g[0]; n]])),
        )
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.numel();
        let s = self.sum_all(a);
        self.mul_scalar(s, 1.0 / n as f64)
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange {
                op: "sum_axis",
                axis,
                rank: shape.len(),
            });
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let x = &self.nodes[a.0].value.data;
        let mut y = vec![0.0; outer * inner];
        for o in 0..outer {
            for t in 0..n {
                for r in 0..inner {
                    y[o * inner + r] += x[(o * n + t) * inner + r];
                }
            }
        }
        let mut out_shape: Vec<usize> = shape
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != axis)
            .map(|(_, &d)| d)
            .collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let out = Tensor::new(out_shape, y)?;
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &[f64]| {
                let mut dx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for t in 0..n {
                        for r in 0..inner {
                            dx[(o * n + t) * inner + r] = g[o * inner + r];
                        }
                    }
                }
                vec![dx]
            })),
        ))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let n = self.shape(a)[axis];
        let s = self.sum_axis(a, axis)?;
        Ok(self.mul_scalar(s, 1.0 / n as f64))
    }

    // ── shape ops ───────────────────────────────────────────────────

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[a.0].value.numel() {
            return Err(TensorError::ShapeDataMismatch {
                shape,
                expected: numel,
                actual: self.nodes[a.0].value.numel(),
            });
        }
        let out = Tensor::new(shape, self.nodes[a.0].value.data.clone())?;
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(|g: &[f64]| vec![g.to_vec()])),
        ))
    }

    pub fn transpose2(&mut self, a: Var) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 {
            return Err(TensorError::RankMismatch {
                op: "transpose2",
                expected: 2,
                shape,
            });
        }
        let (m, n) = (shape[0], shape[1]);
        let x = &self.nodes[a.0].value.data;
        let mut y = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                y[j * m + i] = x[i * n + j];
            }
        }
        let out = Tensor::new(vec![n, m], y)?;
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &[f64]| {
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        dx[i * n + j] = g[j * m + i];
                    }
                }
                vec![dx]
            })),
        ))
    }

    /// Axis permutation for arbitrary rank; `perm[k]` is the source axis
    /// that becomes output axis `k`.
    pub fn permute_axes(&mut self, a: Var, perm: &[usize]) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        let rank = shape.len();
        if perm.len() != rank || {
            let mut seen = vec![false; rank];
            perm.iter().any(|&p| {
                if p >= rank || seen[p] {
                    true
                } else {
                    seen[p] = true;
                    false
                }
            })
        } {
            return Err(TensorError::DimMismatch {
                op: "permute_axes",
                lhs: shape,
                rhs: perm.to_vec(),
            });
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let in_strides = strides(&shape);
        let out_strides = strides(&out_shape);
        let x = &self.nodes[a.0].value.data;
        let n = x.len();
        // map each output linear index to its input linear index
        let mut src_of = vec![0usize; n];
        for (lin, slot) in src_of.iter_mut().enumerate() {
            let mut rem = lin;
            let mut src = 0;
            for k in 0..rank {
                let c = rem / out_strides[k];
                rem %= out_strides[k];
                src += c * in_strides[perm[k]];
            }
            *slot = src;
        }
        let y: Vec<f64> = src_of.iter().map(|&s| x[s]).collect();
        let out = Tensor::new(out_shape, y)?;
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &[f64]| {
                let mut dx = vec![0.0; n];
                for (lin, &s) in src_of.iter().enumerate() {
                    dx[s] += g[lin];
                }
                vec![dx]
            })),
        ))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let first = self.shape(parts[0]).to_vec();
        if axis >= first.len() {
            return Err(TensorError::AxisOutOfRange {
                op: "concat",
                axis,
                rank: first.len(),
            });
        }
        let mut axis_total = 0;
        for &p in parts {
            let sh = self.shape(p);
            if sh.len() != first.len()
                || sh
                    .iter()
                    .enumerate()
                    .any(|(i, &d)| i != axis && d != first[i])
            {
                return Err(TensorError::DimMismatch {
                    op: "concat",
                    lhs: first,
                    rhs: sh.to_vec(),
                });
            }
            axis_total += sh[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let (outer, _, inner) = axis_split(&out_shape, axis);
        let mut y = vec![0.0; outer * axis_total * inner];
        let mut sizes = Vec::with_capacity(parts.len());
        let mut offset = 0;
        for &p in parts {
            let sh = self.shape(p).to_vec();
            let np = sh[axis];
            let x = &self.nodes[p.0].value.data;
            for o in 0..outer {
                for t in 0..np {
                    for r in 0..inner {
                        y[(o * axis_total + offset + t) * inner + r] =
                            x[(o * np + t) * inner + r];
                    }
                }
            }
            sizes.push(np);
            offset += np;
        }
        let out = Tensor::new(out_shape, y)?;
        let parent_ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(
            out,
            parent_ids,
            Some(Box::new(move |g: &[f64]| {
                let mut grads = Vec::with_capacity(sizes.len());
                let mut offset = 0;
                for &np in &sizes {
                    let mut dx = vec![0.0; outer * np * inner];
                    for o in 0..outer {
                        for t in 0..np {
                            for r in 0..inner {
                                dx[(o * np + t) * inner + r] =
                                    g[(o * axis_total + offset + t) * inner + r];
                            }
                        }
                    }
                    grads.push(dx);
                    offset += np;
                }
                grads
            })),
        ))
    }

    // ── indexing ────────────────────────────────────────────────────

    /// Select rows of a 2-D tensor; repeated indices are allowed and the
    /// backward pass scatter-adds.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 {
            return Err(TensorError::RankMismatch {
                op: "gather_rows",
                expected: 2,
                shape,
            });
        }
        let (m, k) = (shape[0], shape[1]);
        for &i in idx {
            if i >= m {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    size: m,
                });
            }
        }
        let x = &self.nodes[a.0].value.data;
        let mut y = Vec::with_capacity(idx.len() * k);
        for &i in idx {
            y.extend_from_slice(&x[i * k..(i + 1) * k]);
        }
        let out = Tensor::new(vec![idx.len(), k], y)?;
        let idx = idx.to_vec();
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &[f64]| {
                let mut dx = vec![0.0; m * k];
                for (r, &i) in idx.iter().enumerate() {
                    for c in 0..k {
                        dx[i * k + c] += g[r * k + c];
                    }
                }
                vec![dx]
            })),
        ))
    }

    /// Pick one element per row of a 2-D tensor; output is [n, 1].
    pub fn pick(&mut self, a: Var, cols: &[usize]) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 || shape[0] != cols.len() {
            return Err(TensorError::DimMismatch {
                op: "pick",
                lhs: shape,
                rhs: vec![cols.len()],
            });
        }
        let (n, c) = (shape[0], shape[1]);
        for &j in cols {
            if j >= c {
                return Err(TensorError::IndexOutOfRange {
                    op: "pick",
                    index: j,
                    size: c,
                });
            }
        }
        let x = &self.nodes[a.0].value.data;
        let y: Vec<f64> = cols.iter().enumerate().map(|(i, &j)| x[i * c + j]).collect();
        let out = Tensor::new(vec![n, 1], y)?;
        let cols = cols.to_vec();
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &[f64]| {
                let mut dx = vec![0.0; n * c];
                for (i, &j) in cols.iter().enumerate() {
                    dx[i * c + j] = g[i];
                }
                vec![dx]
            })),
        ))
    }

    /// Tile a [1, k] row into an [n, k] matrix; backward sums over rows.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 || shape[0] != 1 {
            return Err(TensorError::RankMismatch {
                op: "repeat_rows",
                expected: 2,
                shape,
            });
        }
        let k = shape[1];
        let x = self.nodes[a.0].value.data.clone();
        let mut y = Vec::with_capacity(n * k);
        for _ in 0..n {
            y.extend_from_slice(&x);
        }
        let out = Tensor::new(vec![n, k], y)?;
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(move |g: &[f64]| {
                let mut dx = vec![0.0; k];
                for r in 0..n {
                    for c in 0..k {
                        dx[c] += g[r * k + c];
                    }
                }
                vec![dx]
            })),
        ))
    }

    /// Multiply each row of `a` [m, k] by the matching scalar in `s` [m, 1].
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var, TensorError> {
        let ash = self.shape(a).to_vec();
        let ssh = self.shape(s).to_vec();
        if ash.len() != 2 || ssh != vec![ash[0], 1] {
            return Err(TensorError::DimMismatch {
                op: "scale_rows",
                lhs: ash,
                rhs: ssh,
            });
        }
        let (m, k) = (ash[0], ash[1]);
        let ad = self.nodes[a.0].value.data.clone();
        let sd = self.nodes[s.0].value.data.clone();
        let mut y = vec![0.0; m * k];
        for i in 0..m {
            for c in 0..k {
                y[i * k + c] = ad[i * k + c] * sd[i];
            }
        }
        let out = Tensor::new(vec![m, k], y)?;
        Ok(self.push(
            out,
            vec![a.0, s.0],
            Some(Box::new(move |g: &[f64]| {
                let mut da = vec![0.0; m * k];
                let mut ds = vec![0.0; m];
                for i in 0..m {
                    for c in 0..k {
                        da[i * k + c] = g[i * k + c] * sd[i];
                        ds[i] += g[i * k + c] * ad[i * k + c];
                    }
                }
                vec![da, ds]
            })),
        ))
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf_grad(tape: &mut Tape, shape: Vec<usize>, data: Vec<f64>) -> Var {
        tape.leaf(Tensor::new(shape, data).unwrap().with_grad())
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let a = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let c = tape.matmul(i2, a).unwrap();
        assert_eq!(tape.value(c).data, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_annihilating() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap());
        let b = tape.constant(Tensor::new(vec![2, 1], vec![0.0, 5.0]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data, vec![0.0, 0.0]);
    }

    #[test]
    fn matmul_against_scalar_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let av = tape.constant(Tensor::new(vec![3, 2], a.clone()).unwrap());
        let bv = tape.constant(Tensor::new(vec![2, 4], b.clone()).unwrap());
        let c = tape.matmul(av, bv).unwrap();
        // independent element-by-element triple loop
        for i in 0..3 {
            for j in 0..4 {
                let mut s = 0.0;
                for p in 0..2 {
                    s += a[i * 2 + p] * b[p * 4 + j];
                }
                assert!((tape.value(c).data[i * 4 + j] - s).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::zeros(vec![2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_uniform_and_stability() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(vec![3], vec![0.0, 0.0, 0.0]).unwrap());
        let s = tape.softmax(a, 0).unwrap();
        for v in &tape.value(s).data {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let b = tape.constant(Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap());
        let s2 = tape.softmax(b, 0).unwrap();
        assert!((tape.value(s2).data[0] - 1.0).abs() < 1e-12);
        assert!(tape.value(s2).data[1].abs() < 1e-12);
    }

    #[test]
    fn softmax_against_scalar_oracle() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let s = tape.softmax(a, 0).unwrap();
        let exps: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).collect();
        let z: f64 = exps.iter().sum();
        for (got, e) in tape.value(s).data.iter().zip(&exps) {
            assert!((got - e / z).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_slices_sum_to_one_along_axis() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..24).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(vec![2, 3, 4], data).unwrap());
        for axis in 0..3 {
            let s = tape.softmax(a, axis).unwrap();
            let t = tape.value(s);
            let (outer, n, inner) = super::axis_split(&t.shape, axis);
            for o in 0..outer {
                for r in 0..inner {
                    let sum: f64 = (0..n).map(|k| t.data[(o * n + k) * inner + r]).sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut tape = Tape::new();
        let x = leaf_grad(&mut tape, vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let loss = tape.sum_all(x);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_square_sum() {
        let mut tape = Tape::new();
        let x = leaf_grad(&mut tape, vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn backward_accumulates_until_zeroed() {
        let mut tape = Tape::new();
        let x = leaf_grad(&mut tape, vec![2], vec![1.0, 2.0]);
        let loss = tape.sum_all(x);
        tape.backward(loss).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 2.0]);
        tape.zero_grad();
        assert!(tape.grad(x).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = leaf_grad(&mut tape, vec![2], vec![1.0, 2.0]);
        assert!(matches!(
            tape.backward(x),
            Err(TensorError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn reshape_round_trip_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![2, 3], (0..6).map(|i| i as f64).collect()).unwrap());
        let r = tape.reshape(x, vec![3, 2]).unwrap();
        let back = tape.reshape(r, vec![2, 3]).unwrap();
        assert_eq!(tape.value(back).data, tape.value(x).data);
        assert_eq!(tape.value(back).shape, tape.value(x).shape);
    }

    #[test]
    fn permute_axes_round_trip() {
        let mut tape = Tape::new();
        let x = tape
            .constant(Tensor::new(vec![2, 3, 4], (0..24).map(|i| i as f64).collect()).unwrap());
        let p = tape.permute_axes(x, &[2, 0, 1]).unwrap();
        assert_eq!(tape.shape(p), &[4, 2, 3]);
        let back = tape.permute_axes(p, &[1, 2, 0]).unwrap();
        assert_eq!(tape.value(back).data, tape.value(x).data);
    }

    #[test]
    fn stop_grad_blocks_flow() {
        let mut tape = Tape::new();
        let x = leaf_grad(&mut tape, vec![2], vec![3.0, 4.0]);
        let d = tape.stop_grad(x);
        let y = tape.mul(x, d).unwrap();
        let loss = tape.sum_all(y);
        tape.backward(loss).unwrap();
        // d(x * const)/dx = const
        assert_eq!(tape.grad(x).unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn gather_rows_scatter_adds() {
        let mut tape = Tape::new();
        let x = leaf_grad(&mut tape, vec![3, 2], vec![1.0; 6]);
        let g = tape.gather_rows(x, &[0, 0, 2]).unwrap();
        let loss = tape.sum_all(g);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 2.0, 0.0, 0.0, 1.0, 1.0]);
    }
}
