//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive applied to its variables. Values are
//! computed eagerly as operations are recorded; [`Tape::backward`] then walks
//! the record in reverse and accumulates parameter gradients into a
//! [`GradBuffer`]. Node indices are assigned in recording order, so the
//! reverse of the record is a valid reverse topological order.

use super::{DiffError, GradBuffer, ParamId, ParamStore, Tensor};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the
/// cross-entropy loss.
pub const PROB_CLAMP: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Row { param: ParamId, row: usize },
    Affine { w: Var, x: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Concat(Var, Var),
    Dot(Var, Var),
    Sum(Var),
    Stack(Vec<Var>),
    Pick(Var, usize),
    Softmax(Var),
    WeightedSum { weights: Vec<Var>, vectors: Vec<Var> },
    Mse { preds: Vec<Var>, targets: Vec<f64> },
    Bce { probs: Vec<Var>, labels: Vec<f64> },
    BceLogits { logits: Vec<Var>, labels: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
}

/// Recording of a single forward computation over a [`ParamStore`].
pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
    consumed: bool,
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
            consumed: false,
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a single-element variable.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    fn len_of(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    fn require_vector(&self, op: &'static str, v: Var) -> Result<usize, DiffError> {
        let shape = &self.nodes[v.0].shape;
        if shape.len() != 1 {
            return Err(DiffError::RankMismatch {
                op,
                expected: 1,
                found: shape.len(),
            });
        }
        Ok(shape[0])
    }

    fn require_scalar(&self, op: &'static str, v: Var) -> Result<(), DiffError> {
        if self.len_of(v) != 1 {
            return Err(DiffError::NotScalar {
                op,
                len: self.len_of(v),
            });
        }
        Ok(())
    }

    fn require_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), DiffError> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa != sb {
            return Err(DiffError::ShapeMismatch {
                op,
                expected: sa.clone(),
                found: sb.clone(),
            });
        }
        Ok(())
    }

    /// Records a constant (no gradient flows into it).
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Constant)
    }

    pub fn constant_scalar(&mut self, x: f64) -> Var {
        self.push(vec![], vec![x], Op::Constant)
    }

    /// The whole parameter as a variable. Recorded once per tape.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let p = self.store.get(id);
        let v = self.push(
            p.value.shape().to_vec(),
            p.value.data().to_vec(),
            Op::Param(id),
        );
        self.param_nodes[id.0] = Some(v);
        v
    }

    /// Row `row` of a rank-2 parameter table. Gradients land in that row only.
    pub fn lookup(&mut self, table: ParamId, row: usize) -> Result<Var, DiffError> {
        let p = self.store.get(table);
        if p.value.rank() != 2 {
            return Err(DiffError::RankMismatch {
                op: "lookup",
                expected: 2,
                found: p.value.rank(),
            });
        }
        let rows = p.value.shape()[0];
        if row >= rows {
            return Err(DiffError::IndexOutOfBounds {
                op: "lookup",
                index: row,
                len: rows,
            });
        }
        let value = p.value.row(row).to_vec();
        Ok(self.push(vec![value.len()], value, Op::Row { param: table, row }))
    }

    /// `w · x + b` for `w: [out × in]`, `x: [in]`, `b: [out]`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var, DiffError> {
        let ws = self.nodes[w.0].shape.clone();
        if ws.len() != 2 {
            return Err(DiffError::RankMismatch {
                op: "affine",
                expected: 2,
                found: ws.len(),
            });
        }
        let (out, inp) = (ws[0], ws[1]);
        let xn = self.require_vector("affine", x)?;
        if xn != inp {
            return Err(DiffError::ShapeMismatch {
                op: "affine",
                expected: vec![inp],
                found: vec![xn],
            });
        }
        let bn = self.require_vector("affine", b)?;
        if bn != out {
            return Err(DiffError::ShapeMismatch {
                op: "affine",
                expected: vec![out],
                found: vec![bn],
            });
        }
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        let bv = &self.nodes[b.0].value;
        let y: Vec<f64> = (0..out)
            .map(|o| {
                let row = &wv[o * inp..(o + 1) * inp];
                bv[o] + row.iter().zip(xv).map(|(a, c)| a * c).sum::<f64>()
            })
            .collect();
        Ok(self.push(vec![out], y, Op::Affine { w, x, b }))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, DiffError> {
        self.require_same_shape(name, a, b)?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(shape, value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.nodes[a.0].value.iter().map(|x| f(*x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(shape, value, op)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| k * x, Op::Scale(a, k))
    }

    /// Adds a constant to every element.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::Offset(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// Concatenation of two vectors.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let n = self.require_vector("concat", a)?;
        let m = self.require_vector("concat", b)?;
        let mut value = Vec::with_capacity(n + m);
        value.extend_from_slice(&self.nodes[a.0].value);
        value.extend_from_slice(&self.nodes[b.0].value);
        Ok(self.push(vec![n + m], value, Op::Concat(a, b)))
    }

    /// Inner product of two vectors, as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.require_vector("dot", a)?;
        self.require_same_shape("dot", a, b)?;
        let s = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push(vec![], vec![s], Op::Dot(a, b)))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(vec![], vec![s], Op::Sum(a))
    }

    /// Packs scalars into a vector.
    pub fn stack(&mut self, scalars: &[Var]) -> Result<Var, DiffError> {
        let mut value = Vec::with_capacity(scalars.len());
        for &s in scalars {
            self.require_scalar("stack", s)?;
            value.push(self.nodes[s.0].value[0]);
        }
        Ok(self.push(vec![scalars.len()], value, Op::Stack(scalars.to_vec())))
    }

    /// Element `index` of a vector, as a scalar.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var, DiffError> {
        let n = self.require_vector("pick", a)?;
        if index >= n {
            return Err(DiffError::IndexOutOfBounds {
                op: "pick",
                index,
                len: n,
            });
        }
        let x = self.nodes[a.0].value[index];
        Ok(self.push(vec![], vec![x], Op::Pick(a, index)))
    }

    /// Max-shifted softmax of a vector.
    pub fn softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        let n = self.require_vector("softmax", a)?;
        if n == 0 {
            return Err(DiffError::EmptyInput("softmax"));
        }
        let value = softmax_values(&self.nodes[a.0].value);
        Ok(self.push(vec![n], value, Op::Softmax(a)))
    }

    /// Softmax over a set of scalar scores, one weight per score.
    pub fn softmax_over_set(&mut self, scores: &[Var]) -> Result<Vec<Var>, DiffError> {
        if scores.is_empty() {
            return Err(DiffError::EmptyInput("softmax_over_set"));
        }
        let stacked = self.stack(scores)?;
        let probs = self.softmax(stacked)?;
        (0..scores.len()).map(|i| self.pick(probs, i)).collect()
    }

    /// `Σ weights[i] · vectors[i]`.
    pub fn weighted_sum(&mut self, weights: &[Var], vectors: &[Var]) -> Result<Var, DiffError> {
        if weights.is_empty() {
            return Err(DiffError::EmptyInput("weighted_sum"));
        }
        if weights.len() != vectors.len() {
            return Err(DiffError::LengthMismatch {
                op: "weighted_sum",
                left: weights.len(),
                right: vectors.len(),
            });
        }
        let d = self.require_vector("weighted_sum", vectors[0])?;
        let mut value = vec![0.0; d];
        for (&w, &v) in weights.iter().zip(vectors) {
            self.require_scalar("weighted_sum", w)?;
            self.require_same_shape("weighted_sum", vectors[0], v)?;
            let wv = self.nodes[w.0].value[0];
            for (acc, x) in value.iter_mut().zip(&self.nodes[v.0].value) {
                *acc += wv * x;
            }
        }
        Ok(self.push(
            vec![d],
            value,
            Op::WeightedSum {
                weights: weights.to_vec(),
                vectors: vectors.to_vec(),
            },
        ))
    }

    /// `(1 / 2n) Σ (pred − target)²`.
    pub fn mse_loss(&mut self, preds: &[Var], targets: &[f64]) -> Result<Var, DiffError> {
        if preds.len() != targets.len() {
            return Err(DiffError::LengthMismatch {
                op: "mse_loss",
                left: preds.len(),
                right: targets.len(),
            });
        }
        if preds.is_empty() {
            return Err(DiffError::EmptyInput("mse_loss"));
        }
        let mut total = 0.0;
        for (&p, t) in preds.iter().zip(targets) {
            self.require_scalar("mse_loss", p)?;
            let e = self.nodes[p.0].value[0] - t;
            total += e * e;
        }
        let loss = total / (2.0 * preds.len() as f64);
        Ok(self.push(
            vec![],
            vec![loss],
            Op::Mse {
                preds: preds.to_vec(),
                targets: targets.to_vec(),
            },
        ))
    }

    /// Summed negative log-likelihood of binary labels under `probs`.
    pub fn bce_loss(&mut self, probs: &[Var], labels: &[f64]) -> Result<Var, DiffError> {
        if probs.len() != labels.len() {
            return Err(DiffError::LengthMismatch {
                op: "bce_loss",
                left: probs.len(),
                right: labels.len(),
            });
        }
        if probs.is_empty() {
            return Err(DiffError::EmptyInput("bce_loss"));
        }
        let mut total = 0.0;
        for (&p, &y) in probs.iter().zip(labels) {
            self.require_scalar("bce_loss", p)?;
            let pc = clamp_prob(self.nodes[p.0].value[0]);
            total -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        }
        Ok(self.push(
            vec![],
            vec![total],
            Op::Bce {
                probs: probs.to_vec(),
                labels: labels.to_vec(),
            },
        ))
    }

    /// [`Tape::bce_loss`] of `sigmoid(logits)`, evaluated in log space so
    /// `ln(1 − p)` does not cancel for confident predictions. Clamping
    /// matches `bce_loss` exactly: outside the clamp band the term is
    /// constant and contributes no gradient.
    pub fn bce_with_logits_loss(&mut self, logits: &[Var], labels: &[f64]) -> Result<Var, DiffError> {
        if logits.len() != labels.len() {
            return Err(DiffError::LengthMismatch {
                op: "bce_with_logits_loss",
                left: logits.len(),
                right: labels.len(),
            });
        }
        if logits.is_empty() {
            return Err(DiffError::EmptyInput("bce_with_logits_loss"));
        }
        let mut total = 0.0;
        for (&z, &y) in logits.iter().zip(labels) {
            self.require_scalar("bce_with_logits_loss", z)?;
            let z = self.nodes[z.0].value[0];
            total += match clamped_logit(z) {
                Some(pc) => -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln()),
                None => softplus(z) - y * z,
            };
        }
        Ok(self.push(
            vec![],
            vec![total],
            Op::BceLogits {
                logits: logits.to_vec(),
                labels: labels.to_vec(),
            },
        ))
    }

    /// Accumulates `d loss / d θ` for every parameter reached from `loss`
    /// into `grads`. A tape can be differentiated once.
    pub fn backward(&mut self, loss: Var, grads: &mut GradBuffer) -> Result<(), DiffError> {
        if self.consumed {
            return Err(DiffError::AlreadyBackpropagated);
        }
        self.require_scalar("backward", loss)?;
        assert_eq!(grads.grads.len(), self.store.len(), "gradient buffer layout");
        self.consumed = true;

        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        adj[loss.0] = vec![1.0];

        for idx in (0..=loss.0).rev() {
            let g = std::mem::take(&mut adj[idx]);
            if g.is_empty() {
                continue;
            }
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    for (dst, src) in grads.grads[id.0].iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
                Op::Row { param, row } => {
                    let d = g.len();
                    let dst = &mut grads.grads[param.0][row * d..(row + 1) * d];
                    for (a, b) in dst.iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                Op::Affine { w, x, b } => {
                    let (out, inp) = (self.nodes[w.0].shape[0], self.nodes[w.0].shape[1]);
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    {
                        let gx = slot(&mut adj, *x, inp);
                        for o in 0..out {
                            let go = g[o];
                            if go == 0.0 {
                                continue;
                            }
                            let row = &wv[o * inp..(o + 1) * inp];
                            for (acc, wi) in gx.iter_mut().zip(row) {
                                *acc += go * wi;
                            }
                        }
                    }
                    {
                        let gw = slot(&mut adj, *w, out * inp);
                        for o in 0..out {
                            let go = g[o];
                            if go == 0.0 {
                                continue;
                            }
                            let row = &mut gw[o * inp..(o + 1) * inp];
                            for (acc, xi) in row.iter_mut().zip(xv) {
                                *acc += go * xi;
                            }
                        }
                    }
                    add_into(slot(&mut adj, *b, out), &g);
                }
                Op::Add(a, b) => {
                    add_into(slot(&mut adj, *a, g.len()), &g);
                    add_into(slot(&mut adj, *b, g.len()), &g);
                }
                Op::Sub(a, b) => {
                    add_into(slot(&mut adj, *a, g.len()), &g);
                    let gb = slot(&mut adj, *b, g.len());
                    for (acc, gi) in gb.iter_mut().zip(&g) {
                        *acc -= gi;
                    }
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let ga = slot(&mut adj, *a, g.len());
                    for ((acc, gi), y) in ga.iter_mut().zip(&g).zip(bv) {
                        *acc += gi * y;
                    }
                    let gb = slot(&mut adj, *b, g.len());
                    for ((acc, gi), x) in gb.iter_mut().zip(&g).zip(av) {
                        *acc += gi * x;
                    }
                }
                Op::Scale(a, k) => {
                    let ga = slot(&mut adj, *a, g.len());
                    for (acc, gi) in ga.iter_mut().zip(&g) {
                        *acc += k * gi;
                    }
                }
                Op::Offset(a) => add_into(slot(&mut adj, *a, g.len()), &g),
                Op::Tanh(a) => {
                    let ga = slot(&mut adj, *a, g.len());
                    for ((acc, gi), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                        *acc += gi * (1.0 - y * y);
                    }
                }
                Op::Relu(a) => {
                    let av = &self.nodes[a.0].value;
                    let ga = slot(&mut adj, *a, g.len());
                    for ((acc, gi), x) in ga.iter_mut().zip(&g).zip(av) {
                        if *x > 0.0 {
                            *acc += gi;
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let ga = slot(&mut adj, *a, g.len());
                    for ((acc, gi), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                        *acc += gi * y * (1.0 - y);
                    }
                }
                Op::Concat(a, b) => {
                    let n = self.nodes[a.0].value.len();
                    add_into(slot(&mut adj, *a, n), &g[..n]);
                    let m = g.len() - n;
                    add_into(slot(&mut adj, *b, m), &g[n..]);
                }
                Op::Dot(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let ga = slot(&mut adj, *a, av.len());
                    for (acc, y) in ga.iter_mut().zip(bv) {
                        *acc += g[0] * y;
                    }
                    let gb = slot(&mut adj, *b, bv.len());
                    for (acc, x) in gb.iter_mut().zip(av) {
                        *acc += g[0] * x;
                    }
                }
                Op::Sum(a) => {
                    let n = self.nodes[a.0].value.len();
                    slot(&mut adj, *a, n).iter_mut().for_each(|acc| *acc += g[0]);
                }
                Op::Stack(items) => {
                    for (&s, gi) in items.iter().zip(&g) {
                        slot(&mut adj, s, 1)[0] += gi;
                    }
                }
                Op::Pick(a, i) => {
                    let n = self.nodes[a.0].value.len();
                    slot(&mut adj, *a, n)[*i] += g[0];
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let inner: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                    let ga = slot(&mut adj, *a, y.len());
                    for ((acc, gi), yi) in ga.iter_mut().zip(&g).zip(y) {
                        *acc += yi * (gi - inner);
                    }
                }
                Op::WeightedSum { weights, vectors } => {
                    for (&w, &v) in weights.iter().zip(vectors) {
                        let wv = self.nodes[w.0].value[0];
                        let vv = &self.nodes[v.0].value;
                        let gw: f64 = g.iter().zip(vv).map(|(gi, x)| gi * x).sum();
                        slot(&mut adj, w, 1)[0] += gw;
                        let gv = slot(&mut adj, v, vv.len());
                        for (acc, gi) in gv.iter_mut().zip(&g) {
                            *acc += wv * gi;
                        }
                    }
                }
                Op::Mse { preds, targets } => {
                    let n = preds.len() as f64;
                    for (&p, t) in preds.iter().zip(targets) {
                        let e = self.nodes[p.0].value[0] - t;
                        slot(&mut adj, p, 1)[0] += g[0] * e / n;
                    }
                }
                Op::Bce { probs, labels } => {
                    for (&p, &y) in probs.iter().zip(labels) {
                        let raw = self.nodes[p.0].value[0];
                        let pc = clamp_prob(raw);
                        if pc != raw {
                            continue;
                        }
                        let d = -y / pc + (1.0 - y) / (1.0 - pc);
                        slot(&mut adj, p, 1)[0] += g[0] * d;
                    }
                }
                Op::BceLogits { logits, labels } => {
                    for (&z, &y) in logits.iter().zip(labels) {
                        let zv = self.nodes[z.0].value[0];
                        if clamped_logit(zv).is_none() {
                            slot(&mut adj, z, 1)[0] += g[0] * (sigmoid(zv) - y);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn slot(adj: &mut [Vec<f64>], v: Var, len: usize) -> &mut Vec<f64> {
    let s = &mut adj[v.0];
    if s.is_empty() {
        s.resize(len, 0.0);
    }
    s
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `ln(1 + eˣ)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// The clamped probability when `sigmoid(z)` falls outside the clamp band.
fn clamped_logit(z: f64) -> Option<f64> {
    let p = sigmoid(z);
    (clamp_prob(p) != p).then(|| clamp_prob(p))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_values(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Records `build` on a fresh tape, backpropagates, and adds the gradient
/// into each parameter's `grad`. Returns the loss value.
pub fn accumulate_gradients<F>(store: &mut ParamStore, build: F) -> Result<f64, DiffError>
where
    F: FnOnce(&mut Tape<'_>) -> Result<Var, DiffError>,
{
    let mut buffer = GradBuffer::zeros_like(store);
    let value = {
        let mut tape = Tape::new(store);
        let loss = build(&mut tape)?;
        tape.backward(loss, &mut buffer)?;
        tape.scalar(loss)
    };
    store.accumulate(&buffer, 1.0);
    Ok(value)
}
