use super::gemm::gemm;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

/// A recorded value: shape, row-major values, gradient after backward.
#[derive(Clone, Debug)]
pub struct DiffTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    id: usize,
}

impl DiffTensor {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape.clone(), self.values.clone()).expect("node shape is consistent")
    }
}

/// Per-sample complex linear maps for [`Tape::mix_complex`].
///
/// Sample `b`, input `j` uses the `rows_out × rows_in` complex matrix whose
/// row-major real and imaginary parts sit at offset
/// `(b * inputs + j) * rows_out * rows_in` of `re` and `im`.
#[derive(Clone, Debug)]
pub struct MixMaps {
    pub batch: usize,
    pub inputs: usize,
    pub rows_out: usize,
    pub rows_in: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MixMaps {
    fn block(&self, b: usize, j: usize) -> (&[f64], &[f64]) {
        let sz = self.rows_out * self.rows_in;
        let off = (b * self.inputs + j) * sz;
        (&self.re[off..off + sz], &self.im[off..off + sz])
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Affine(Var, Var, Var),
    Act(Var, Activation),
    Concat(Var, Var),
    L2Scale { x: Var, target: f64, norms: Vec<f64> },
    Mse(Var, Var),
    Sum(Var),
    Add(Var, Var),
    Scale(Var, f64),
    Reshape(Var),
    MixComplex { inputs: Vec<Var>, maps: Box<MixMaps> },
}

#[derive(Debug)]
struct Node {
    tensor: DiffTensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; receives a gradient on backward.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push_tensor(t, Op::Leaf, true)
    }

    /// Constant leaf; never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_tensor(t, Op::Leaf, false)
    }

    pub fn get(&self, v: Var) -> &DiffTensor {
        &self.nodes[v.0].tensor
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].tensor.values
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].tensor.shape
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].tensor.grad.as_deref()
    }

    fn push_tensor(&mut self, t: Tensor, op: Op, requires_grad: bool) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), op, requires_grad)
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            tensor: DiffTensor {
                shape,
                values,
                grad: None,
                id,
            },
            op,
            requires_grad,
        });
        Var(id)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::Dimension(format!("{op}: expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), false, self.value(b), false, &mut out, 0.0);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    /// `x · w + b`, with `b` broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, d_in) = self.dims2(x, "affine")?;
        let (d_in2, d_out) = self.dims2(w, "affine")?;
        if d_in != d_in2 {
            return Err(Error::shape("affine", self.shape(x), self.shape(w)));
        }
        if self.get(b).values.len() != d_out {
            return Err(Error::shape("affine", self.shape(w), self.shape(b)));
        }
        let mut out = Vec::with_capacity(batch * d_out);
        for _ in 0..batch {
            out.extend_from_slice(self.value(b));
        }
        gemm(batch, d_in, d_out, self.value(x), false, self.value(w), false, &mut out, 1.0);
        let rg = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(vec![batch, d_out], out, Op::Affine(x, w, b), rg))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let out = match kind {
            Activation::Relu => self.value(x).iter().map(|&v| v.max(0.0)).collect(),
            Activation::Tanh => self.value(x).iter().map(|&v| v.tanh()).collect(),
        };
        let shape = self.shape(x).to_vec();
        let rg = self.needs(x);
        self.push(shape, out, Op::Act(x, kind), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    /// Columns of `x` followed by columns of `y`.
    pub fn concat_rows(&mut self, x: Var, y: Var) -> Result<Var> {
        let (bx, a) = self.dims2(x, "concat_rows")?;
        let (by, c) = self.dims2(y, "concat_rows")?;
        if bx != by {
            return Err(Error::shape("concat_rows", self.shape(x), self.shape(y)));
        }
        let mut out = Vec::with_capacity(bx * (a + c));
        for r in 0..bx {
            out.extend_from_slice(&self.value(x)[r * a..(r + 1) * a]);
            out.extend_from_slice(&self.value(y)[r * c..(r + 1) * c]);
        }
        let rg = self.needs(x) || self.needs(y);
        Ok(self.push(vec![bx, a + c], out, Op::Concat(x, y), rg))
    }

    /// Rescales every row to L2 norm `target`.
    pub fn l2_normalize_scale(&mut self, x: Var, target: f64) -> Result<Var> {
        let (batch, d) = self.dims2(x, "l2_normalize_scale")?;
        if !(target > 0.0) {
            return Err(Error::DegenerateInput(format!("target norm {target} must be positive")));
        }
        let xs = self.value(x);
        let mut norms = Vec::with_capacity(batch);
        let mut out = Vec::with_capacity(batch * d);
        for r in 0..batch {
            let row = &xs[r * d..(r + 1) * d];
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::DegenerateInput(format!(
                    "row {r} has norm {n}; cannot normalize"
                )));
            }
            let s = target / n;
            out.extend(row.iter().map(|v| v * s));
            norms.push(n);
        }
        let rg = self.needs(x);
        Ok(self.push(vec![batch, d], out, Op::L2Scale { x, target, norms }, rg))
    }

    /// Mean of squared differences over every element.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::shape("mse_loss", self.shape(pred), self.shape(target)));
        }
        let p = self.value(pred);
        let t = self.value(target);
        let n = p.len().max(1) as f64;
        let s: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let rg = self.needs(pred) || self.needs(target);
        Ok(self.push(vec![], vec![s / n], Op::Mse(pred, target), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.needs(x);
        self.push(vec![], vec![s], Op::Sum(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("add", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(shape, out, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * c).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.needs(x);
        self.push(shape, out, Op::Scale(x, c), rg)
    }

    /// Same values under a new shape with equal element count.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(Error::shape("reshape", self.shape(x), &shape));
        }
        let out = self.value(x).to_vec();
        let rg = self.needs(x);
        Ok(self.push(shape, out, Op::Reshape(x), rg))
    }

    /// Per-sample complex mixing `y_b = Σ_j G_{b,j} x_{j,b} + offset_b`.
    ///
    /// Every input row packs a `rows_in × cols` complex matrix as all real
    /// parts (row-major) followed by all imaginary parts; the output row packs
    /// `rows_out × cols` the same way. `offset` is a constant (e.g. noise).
    pub fn mix_complex(&mut self, inputs: &[Var], maps: MixMaps, offset: Option<&Tensor>) -> Result<Var> {
        let in_w = 2 * maps.rows_in * maps.cols;
        let out_w = 2 * maps.rows_out * maps.cols;
        let blk = maps.rows_out * maps.rows_in;
        if inputs.len() != maps.inputs || maps.re.len() != maps.batch * maps.inputs * blk || maps.im.len() != maps.re.len() {
            return Err(Error::Dimension(format!(
                "mix_complex: {} inputs against maps for {} inputs, batch {}",
                inputs.len(),
                maps.inputs,
                maps.batch
            )));
        }
        for &x in inputs {
            if self.shape(x) != [maps.batch, in_w] {
                return Err(Error::shape("mix_complex", self.shape(x), &[maps.batch, in_w]));
            }
        }
        let mut out = match offset {
            Some(t) if t.shape() == [maps.batch, out_w] => t.data().to_vec(),
            Some(t) => return Err(Error::shape("mix_complex offset", t.shape(), &[maps.batch, out_w])),
            None => vec![0.0; maps.batch * out_w],
        };
        let (ro, ri, nc) = (maps.rows_out, maps.rows_in, maps.cols);
        for (j, &x) in inputs.iter().enumerate() {
            let xs = self.value(x);
            for b in 0..maps.batch {
                let (gr, gi) = maps.block(b, j);
                let xrow = &xs[b * in_w..(b + 1) * in_w];
                let (xr, xi) = xrow.split_at(ri * nc);
                let orow = &mut out[b * out_w..(b + 1) * out_w];
                let (yr, yi) = orow.split_at_mut(ro * nc);
                for r in 0..ro {
                    for p in 0..ri {
                        let (a, c) = (gr[r * ri + p], gi[r * ri + p]);
                        for s in 0..nc {
                            let (u, v) = (xr[p * nc + s], xi[p * nc + s]);
                            yr[r * nc + s] += a * u - c * v;
                            yi[r * nc + s] += a * v + c * u;
                        }
                    }
                }
            }
        }
        let rg = inputs.iter().any(|&x| self.needs(x));
        Ok(self.push(
            vec![maps.batch, out_w],
            out,
            Op::MixComplex {
                inputs: inputs.to_vec(),
                maps: Box::new(maps),
            },
            rg,
        ))
    }

    /// Populates gradients of every node reachable from the scalar `loss`.
    ///
    /// Trainable leaves not reachable from `loss` get a zero gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let ln = &self.nodes[loss.0].tensor;
        if ln.values.len() != 1 {
            return Err(Error::NonScalarLoss(ln.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            node.tensor.grad = match g {
                Some(g) if node.requires_grad => Some(g),
                None if node.requires_grad && matches!(node.op, Op::Leaf) => {
                    Some(vec![0.0; node.tensor.values.len()])
                }
                _ => None,
            };
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = &node.tensor.values;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.needs(*a) {
                    let da = slot(grads, *a, m * k);
                    gemm(m, n, k, g, false, self.value(*b), true, da, 1.0);
                }
                if self.needs(*b) {
                    let db = slot(grads, *b, k * n);
                    gemm(k, m, n, self.value(*a), true, g, false, db, 1.0);
                }
            }
            Op::Affine(x, w, b) => {
                let (batch, d_in) = (self.shape(*x)[0], self.shape(*x)[1]);
                let d_out = self.shape(*w)[1];
                if self.needs(*x) {
                    let dx = slot(grads, *x, batch * d_in);
                    gemm(batch, d_out, d_in, g, false, self.value(*w), true, dx, 1.0);
                }
                if self.needs(*w) {
                    let dw = slot(grads, *w, d_in * d_out);
                    gemm(d_in, batch, d_out, self.value(*x), true, g, false, dw, 1.0);
                }
                if self.needs(*b) {
                    let db = slot(grads, *b, d_out);
                    for row in g.chunks_exact(d_out) {
                        for (acc, v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                }
            }
            Op::Act(x, kind) => {
                let dx = slot(grads, *x, out.len());
                match kind {
                    Activation::Relu => {
                        for ((acc, gi), y) in dx.iter_mut().zip(g).zip(out) {
                            if *y > 0.0 {
                                *acc += gi;
                            }
                        }
                    }
                    Activation::Tanh => {
                        for ((acc, gi), y) in dx.iter_mut().zip(g).zip(out) {
                            *acc += gi * (1.0 - y * y);
                        }
                    }
                }
            }
            Op::Concat(x, y) => {
                let a = self.shape(*x)[1];
                let c = self.shape(*y)[1];
                let batch = self.shape(*x)[0];
                if self.needs(*x) {
                    let dx = slot(grads, *x, batch * a);
                    for r in 0..batch {
                        for (acc, v) in dx[r * a..(r + 1) * a].iter_mut().zip(&g[r * (a + c)..r * (a + c) + a]) {
                            *acc += v;
                        }
                    }
                }
                if self.needs(*y) {
                    let dy = slot(grads, *y, batch * c);
                    for r in 0..batch {
                        let src = &g[r * (a + c) + a..(r + 1) * (a + c)];
                        for (acc, v) in dy[r * c..(r + 1) * c].iter_mut().zip(src) {
                            *acc += v;
                        }
                    }
                }
            }
            Op::L2Scale { x, target, norms } => {
                // y = t·u with u = x/‖x‖, so dx = (t/‖x‖)(g − u(u·g)).
                let d = self.shape(*x)[1];
                let dx = slot(grads, *x, out.len());
                for (r, &n) in norms.iter().enumerate() {
                    let y = &out[r * d..(r + 1) * d];
                    let gr = &g[r * d..(r + 1) * d];
                    let ug: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>() / target;
                    let s = target / n;
                    for ((acc, gi), yi) in dx[r * d..(r + 1) * d].iter_mut().zip(gr).zip(y) {
                        *acc += s * (gi - yi / target * ug);
                    }
                }
            }
            Op::Mse(p, t) => {
                let pv = self.value(*p);
                let tv = self.value(*t);
                let c = 2.0 * g[0] / pv.len().max(1) as f64;
                if self.needs(*p) {
                    let dp = slot(grads, *p, pv.len());
                    for ((acc, a), b) in dp.iter_mut().zip(pv).zip(tv) {
                        *acc += c * (a - b);
                    }
                }
                if self.needs(*t) {
                    let dt = slot(grads, *t, tv.len());
                    for ((acc, a), b) in dt.iter_mut().zip(pv).zip(tv) {
                        *acc -= c * (a - b);
                    }
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                slot(grads, *x, n).iter_mut().for_each(|acc| *acc += g[0]);
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.needs(v) {
                        for (acc, gi) in slot(grads, v, g.len()).iter_mut().zip(g) {
                            *acc += gi;
                        }
                    }
                }
            }
            Op::Scale(x, c) => {
                for (acc, gi) in slot(grads, *x, g.len()).iter_mut().zip(g) {
                    *acc += c * gi;
                }
            }
            Op::Reshape(x) => {
                for (acc, gi) in slot(grads, *x, g.len()).iter_mut().zip(g) {
                    *acc += gi;
                }
            }
            Op::MixComplex { inputs, maps } => {
                // dx_j = G_jᴴ dy, written out in real/imaginary parts.
                let (ro, ri, nc) = (maps.rows_out, maps.rows_in, maps.cols);
                let in_w = 2 * ri * nc;
                let out_w = 2 * ro * nc;
                for (j, &x) in inputs.iter().enumerate() {
                    if !self.needs(x) {
                        continue;
                    }
                    let dx = slot(grads, x, maps.batch * in_w);
                    for b in 0..maps.batch {
                        let (gr, gi) = maps.block(b, j);
                        let (dyr, dyi) = g[b * out_w..(b + 1) * out_w].split_at(ro * nc);
                        let (dxr, dxi) = dx[b * in_w..(b + 1) * in_w].split_at_mut(ri * nc);
                        for r in 0..ro {
                            for p in 0..ri {
                                let (a, c) = (gr[r * ri + p], gi[r * ri + p]);
                                for s in 0..nc {
                                    let (u, v) = (dyr[r * nc + s], dyi[r * nc + s]);
                                    dxr[p * nc + s] += a * u + c * v;
                                    dxi[p * nc + s] += a * v - c * u;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}
