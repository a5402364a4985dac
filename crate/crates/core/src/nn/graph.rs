//! Reverse-mode differentiation over vector-valued nodes.
//!
//! A [`Graph`] records every operation applied during one forward pass.
//! Parameters are referenced in place from a [`ParamStore`], so building a
//! graph never copies weight matrices.

use super::params::{Gradients, ParamId, ParamStore};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<F> {
    Input,
    MatVec { w: ParamId, x: NodeId },
    AddParam { x: NodeId, b: ParamId },
    Embed { table: ParamId, row: usize },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, F),
    OneMinus(NodeId),
    ScaleBy { v: NodeId, s: NodeId },
    Sigmoid(NodeId),
    Tanh(NodeId),
    Log { x: NodeId, floor: F },
    Pow { x: NodeId, p: F },
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    Pick { x: NodeId, index: usize },
    Sum(NodeId),
    Dot(NodeId, NodeId),
    Min(NodeId, NodeId),
    WeightedSum { w: NodeId, items: Vec<NodeId> },
    MeanOf(Vec<NodeId>),
    DotEach { items: Vec<NodeId>, query: NodeId },
    ScatterAdd { x: NodeId, index: Vec<usize> },
    PadZeros(NodeId),
    GruGates { gi: NodeId, gh: NodeId, h: NodeId },
    AttnScores {
        keys: Vec<NodeId>,
        query: NodeId,
        coverage: NodeId,
        w_cov: ParamId,
        v: ParamId,
    },
}

#[derive(Debug, Clone)]
struct Node<F> {
    op: Op<F>,
    value: Vec<F>,
    cache: Vec<F>,
}

fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

pub struct Graph<'p, F> {
    params: &'p ParamStore<F>,
    nodes: Vec<Node<F>>,
}

impl<'p, F: Scalar> Graph<'p, F> {
    pub fn new(params: &'p ParamStore<F>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore<F> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[F] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> F {
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, op: Op<F>, value: Vec<F>) -> NodeId {
        self.push_cached(op, value, Vec::new())
    }

    fn push_cached(&mut self, op: Op<F>, value: Vec<F>, cache: Vec<F>) -> NodeId {
        self.nodes.push(Node { op, value, cache });
        NodeId(self.nodes.len() - 1)
    }

    fn map(&mut self, x: NodeId, op: Op<F>, f: impl Fn(F) -> F) -> NodeId {
        let v = self.value(x).iter().map(|&a| f(a)).collect();
        self.push(op, v)
    }

    fn zip(&mut self, a: NodeId, b: NodeId, op: Op<F>, f: impl Fn(F, F) -> F) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.len(), vb.len(), "elementwise op on mismatched lengths");
        let v = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        self.push(op, v)
    }

    pub fn input(&mut self, value: Vec<F>) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn constant(&mut self, x: F) -> NodeId {
        self.input(vec![x])
    }

    pub fn zeros(&mut self, n: usize) -> NodeId {
        self.input(vec![F::zero(); n])
    }

    /// `W x` for a `rows x cols` parameter.
    pub fn matvec(&mut self, w: ParamId, x: NodeId) -> NodeId {
        let p = self.params.get(w);
        let xv = self.value(x);
        assert_eq!(p.cols, xv.len(), "matvec shape mismatch for {}", p.name);
        let mut out = vec![F::zero(); p.rows];
        for (o, row) in out.iter_mut().zip(p.data.chunks_exact(p.cols)) {
            let mut acc = F::zero();
            for (&a, &b) in row.iter().zip(xv) {
                acc += a * b;
            }
            *o = acc;
        }
        self.push(Op::MatVec { w, x }, out)
    }

    pub fn add_param(&mut self, x: NodeId, b: ParamId) -> NodeId {
        let bv = &self.params.get(b).data;
        let xv = self.value(x);
        assert_eq!(bv.len(), xv.len(), "bias shape mismatch");
        let v = xv.iter().zip(bv).map(|(&a, &c)| a + c).collect();
        self.push(Op::AddParam { x, b }, v)
    }

    /// Row `row` of a `rows x cols` table.
    pub fn embed(&mut self, table: ParamId, row: usize) -> NodeId {
        let p = self.params.get(table);
        let v = p.data[row * p.cols..(row + 1) * p.cols].to_vec();
        self.push(Op::Embed { table, row }, v)
    }

    /// A parameter vector as a node.
    pub fn param(&mut self, b: ParamId) -> NodeId {
        let n = self.params.get(b).data.len();
        let z = self.zeros(n);
        self.add_param(z, b)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn min(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, Op::Min(a, b), |x, y| if x <= y { x } else { y })
    }

    pub fn scale(&mut self, a: NodeId, k: F) -> NodeId {
        self.map(a, Op::Scale(a, k), |x| x * k)
    }

    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::OneMinus(a), |x| F::one() - x)
    }

    /// `s * v` where `s` is a one-element node.
    pub fn scale_by(&mut self, v: NodeId, s: NodeId) -> NodeId {
        let k = self.scalar(s);
        self.map(v, Op::ScaleBy { v, s }, |x| x * k)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Tanh(a), |x| x.tanh())
    }

    /// `ln(max(x, floor))`; no gradient flows through clamped entries.
    pub fn log(&mut self, x: NodeId, floor: F) -> NodeId {
        self.map(x, Op::Log { x, floor }, |a| a.max(floor).ln())
    }

    /// `x^p` for non-negative `x`.
    pub fn pow(&mut self, x: NodeId, p: F) -> NodeId {
        self.map(x, Op::Pow { x, p }, |a| a.powf(p))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = softmax(self.value(a));
        self.push(Op::Softmax(a), v)
    }

    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let m = x.iter().copied().fold(F::neg_infinity(), F::max);
        let lse = m + x.iter().map(|&v| (v - m).exp()).sum::<F>().ln();
        let v = x.iter().map(|&v| v - lse).collect();
        self.push(Op::LogSoftmax(a), v)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut v = Vec::new();
        for &p in parts {
            v.extend_from_slice(self.value(p));
        }
        self.push(Op::Concat(parts.to_vec()), v)
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(x)[start..start + len].to_vec();
        self.push(Op::Slice { x, start }, v)
    }

    pub fn pick(&mut self, x: NodeId, index: usize) -> NodeId {
        let v = vec![self.value(x)[index]];
        self.push(Op::Pick { x, index }, v)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = vec![self.value(x).iter().copied().sum()];
        self.push(Op::Sum(x), v)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = vec![self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .sum()];
        self.push(Op::Dot(a, b), v)
    }

    /// `sum_k w[k] * items[k]`.
    pub fn weighted_sum(&mut self, w: NodeId, items: &[NodeId]) -> NodeId {
        let wv = self.value(w);
        assert_eq!(wv.len(), items.len());
        let mut out = vec![F::zero(); self.value(items[0]).len()];
        for (k, &it) in items.iter().enumerate() {
            let s = wv[k];
            for (o, &x) in out.iter_mut().zip(self.value(it)) {
                *o += s * x;
            }
        }
        self.push(
            Op::WeightedSum {
                w,
                items: items.to_vec(),
            },
            out,
        )
    }

    /// Elementwise mean of equally sized nodes.
    pub fn mean_of(&mut self, items: &[NodeId]) -> NodeId {
        let n = F::from_usize(items.len()).unwrap();
        let mut out = vec![F::zero(); self.value(items[0]).len()];
        for &it in items {
            for (o, &x) in out.iter_mut().zip(self.value(it)) {
                *o += x;
            }
        }
        for o in &mut out {
            *o /= n;
        }
        self.push(Op::MeanOf(items.to_vec()), out)
    }

    /// `[items[0]·query, items[1]·query, ...]`.
    pub fn dot_each(&mut self, items: &[NodeId], query: NodeId) -> NodeId {
        let q = self.value(query);
        let out = items
            .iter()
            .map(|&it| self.value(it).iter().zip(q).map(|(&a, &b)| a * b).sum())
            .collect();
        self.push(
            Op::DotEach {
                items: items.to_vec(),
                query,
            },
            out,
        )
    }

    /// `out[index[i]] += x[i]` into a zero vector of length `len`.
    pub fn scatter_add(&mut self, x: NodeId, index: &[usize], len: usize) -> NodeId {
        let mut out = vec![F::zero(); len];
        for (&i, &v) in index.iter().zip(self.value(x)) {
            out[i] += v;
        }
        self.push(
            Op::ScatterAdd {
                x,
                index: index.to_vec(),
            },
            out,
        )
    }

    /// Extends `x` with zeros to length `len`.
    pub fn pad_zeros(&mut self, x: NodeId, len: usize) -> NodeId {
        let mut v = self.value(x).to_vec();
        assert!(len >= v.len());
        v.resize(len, F::zero());
        self.push(Op::PadZeros(x), v)
    }

    /// Gated recurrent unit update from precomputed input and hidden
    /// projections (`gi`, `gh`, each `3h`, gate order r, z, n).
    pub fn gru_gates(&mut self, gi: NodeId, gh: NodeId, h: NodeId) -> NodeId {
        let (giv, ghv, hv) = (self.value(gi), self.value(gh), self.value(h));
        let n_h = hv.len();
        assert_eq!(giv.len(), 3 * n_h);
        let mut cache = vec![F::zero(); 3 * n_h];
        let mut out = vec![F::zero(); n_h];
        for k in 0..n_h {
            let r = sigmoid(giv[k] + ghv[k]);
            let z = sigmoid(giv[n_h + k] + ghv[n_h + k]);
            let n = (giv[2 * n_h + k] + r * ghv[2 * n_h + k]).tanh();
            cache[k] = r;
            cache[n_h + k] = z;
            cache[2 * n_h + k] = n;
            out[k] = (F::one() - z) * n + z * hv[k];
        }
        self.push_cached(Op::GruGates { gi, gh, h }, out, cache)
    }

    /// Additive attention energies
    /// `e_i = sum_k v[k] * tanh(keys_i[k] + query[k] + w_cov[k] * coverage[i])`.
    pub fn attn_scores(
        &mut self,
        keys: &[NodeId],
        query: NodeId,
        coverage: NodeId,
        w_cov: ParamId,
        v: ParamId,
    ) -> NodeId {
        let q = self.value(query);
        let c = self.value(coverage);
        let wc = &self.params.get(w_cov).data;
        let vv = &self.params.get(v).data;
        let a = q.len();
        assert_eq!(c.len(), keys.len());
        let mut cache = vec![F::zero(); keys.len() * a];
        let mut out = vec![F::zero(); keys.len()];
        for (i, &kid) in keys.iter().enumerate() {
            let kv = self.value(kid);
            let mut e = F::zero();
            for k in 0..a {
                let u = (kv[k] + q[k] + wc[k] * c[i]).tanh();
                cache[i * a + k] = u;
                e += vv[k] * u;
            }
            out[i] = e;
        }
        self.push_cached(
            Op::AttnScores {
                keys: keys.to_vec(),
                query,
                coverage,
                w_cov,
                v,
            },
            out,
            cache,
        )
    }

    /// Accumulates `seed * d(root)/d(params)` into `grads`. `root` must be a
    /// one-element node.
    pub fn backward(&self, root: NodeId, seed: F, grads: &mut Gradients<F>) {
        assert_eq!(self.value(root).len(), 1, "backward from a non-scalar node");
        let mut g: Vec<Vec<F>> = vec![Vec::new(); root.0 + 1];
        g[root.0] = vec![seed];
        for i in (0..=root.0).rev() {
            let dy = std::mem::take(&mut g[i]);
            if dy.is_empty() {
                continue;
            }
            let node = &self.nodes[i];
            self.backprop_node(node, &dy, &mut g, grads);
        }
    }

    fn backprop_node(&self, node: &Node<F>, dy: &[F], g: &mut [Vec<F>], grads: &mut Gradients<F>) {
        let y = &node.value;
        match &node.op {
            Op::Input => {}
            Op::MatVec { w, x } => {
                let p = self.params.get(*w);
                let xv = self.value(*x);
                let gw = grads.slot(*w);
                for (r, &d) in dy.iter().enumerate() {
                    if d == F::zero() {
                        continue;
                    }
                    for (gwv, &xj) in gw[r * p.cols..(r + 1) * p.cols].iter_mut().zip(xv) {
                        *gwv += d * xj;
                    }
                }
                let gx = acc(g, *x, p.cols);
                for (r, &d) in dy.iter().enumerate() {
                    if d == F::zero() {
                        continue;
                    }
                    for (gxj, &wv) in gx.iter_mut().zip(&p.data[r * p.cols..(r + 1) * p.cols]) {
                        *gxj += d * wv;
                    }
                }
            }
            Op::AddParam { x, b } => {
                for (gb, &d) in grads.slot(*b).iter_mut().zip(dy) {
                    *gb += d;
                }
                add_into(acc(g, *x, dy.len()), dy);
            }
            Op::Embed { table, row } => {
                let cols = self.params.get(*table).cols;
                let gt = &mut grads.slot(*table)[row * cols..(row + 1) * cols];
                for (gv, &d) in gt.iter_mut().zip(dy) {
                    *gv += d;
                }
            }
            Op::Add(a, b) => {
                add_into(acc(g, *a, dy.len()), dy);
                add_into(acc(g, *b, dy.len()), dy);
            }
            Op::Sub(a, b) => {
                add_into(acc(g, *a, dy.len()), dy);
                for (gv, &d) in acc(g, *b, dy.len()).iter_mut().zip(dy) {
                    *gv -= d;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                for ((gv, &d), &o) in acc(g, *a, dy.len()).iter_mut().zip(dy).zip(bv) {
                    *gv += d * o;
                }
                for ((gv, &d), &o) in acc(g, *b, dy.len()).iter_mut().zip(dy).zip(av) {
                    *gv += d * o;
                }
            }
            Op::Min(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let n = dy.len();
                for k in 0..n {
                    if av[k] <= bv[k] {
                        acc(g, *a, n)[k] += dy[k];
                    } else {
                        acc(g, *b, n)[k] += dy[k];
                    }
                }
            }
            Op::Scale(a, k) => {
                for (gv, &d) in acc(g, *a, dy.len()).iter_mut().zip(dy) {
                    *gv += d * *k;
                }
            }
            Op::OneMinus(a) => {
                for (gv, &d) in acc(g, *a, dy.len()).iter_mut().zip(dy) {
                    *gv -= d;
                }
            }
            Op::ScaleBy { v, s } => {
                let k = self.scalar(*s);
                let vv = self.value(*v);
                let ds: F = dy.iter().zip(vv).map(|(&d, &x)| d * x).sum();
                for (gv, &d) in acc(g, *v, dy.len()).iter_mut().zip(dy) {
                    *gv += d * k;
                }
                acc(g, *s, 1)[0] += ds;
            }
            Op::Sigmoid(a) => {
                for ((gv, &d), &o) in acc(g, *a, dy.len()).iter_mut().zip(dy).zip(y) {
                    *gv += d * o * (F::one() - o);
                }
            }
            Op::Tanh(a) => {
                for ((gv, &d), &o) in acc(g, *a, dy.len()).iter_mut().zip(dy).zip(y) {
                    *gv += d * (F::one() - o * o);
                }
            }
            Op::Log { x, floor } => {
                let xv = self.value(*x);
                for ((gv, &d), &o) in acc(g, *x, dy.len()).iter_mut().zip(dy).zip(xv) {
                    if o > *floor {
                        *gv += d / o;
                    }
                }
            }
            Op::Pow { x, p } => {
                let xv = self.value(*x);
                let p = *p;
                for ((gv, &d), &o) in acc(g, *x, dy.len()).iter_mut().zip(dy).zip(xv) {
                    if p != F::zero() && o > F::zero() {
                        *gv += d * p * o.powf(p - F::one());
                    }
                }
            }
            Op::Softmax(a) => {
                let dot: F = dy.iter().zip(y).map(|(&d, &o)| d * o).sum();
                for ((gv, &d), &o) in acc(g, *a, dy.len()).iter_mut().zip(dy).zip(y) {
                    *gv += o * (d - dot);
                }
            }
            Op::LogSoftmax(a) => {
                let total: F = dy.iter().copied().sum();
                for ((gv, &d), &o) in acc(g, *a, dy.len()).iter_mut().zip(dy).zip(y) {
                    *gv += d - o.exp() * total;
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    add_into(acc(g, p, n), &dy[off..off + n]);
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                let n = self.value(*x).len();
                add_into(&mut acc(g, *x, n)[*start..start + dy.len()], dy);
            }
            Op::Pick { x, index } => {
                let n = self.value(*x).len();
                acc(g, *x, n)[*index] += dy[0];
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                for gv in acc(g, *x, n) {
                    *gv += dy[0];
                }
            }
            Op::Dot(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                for (gv, &o) in acc(g, *a, av.len()).iter_mut().zip(bv) {
                    *gv += dy[0] * o;
                }
                for (gv, &o) in acc(g, *b, bv.len()).iter_mut().zip(av) {
                    *gv += dy[0] * o;
                }
            }
            Op::WeightedSum { w, items } => {
                let wv = self.value(*w);
                let mut gw = vec![F::zero(); items.len()];
                for (k, &it) in items.iter().enumerate() {
                    let iv = self.value(it);
                    gw[k] = dy.iter().zip(iv).map(|(&d, &x)| d * x).sum();
                    let s = wv[k];
                    for (gv, &d) in acc(g, it, iv.len()).iter_mut().zip(dy) {
                        *gv += s * d;
                    }
                }
                add_into(acc(g, *w, items.len()), &gw);
            }
            Op::MeanOf(items) => {
                let n = F::from_usize(items.len()).unwrap();
                for &it in items {
                    for (gv, &d) in acc(g, it, dy.len()).iter_mut().zip(dy) {
                        *gv += d / n;
                    }
                }
            }
            Op::DotEach { items, query } => {
                let q = self.value(*query);
                let mut gq = vec![F::zero(); q.len()];
                for (k, &it) in items.iter().enumerate() {
                    let d = dy[k];
                    if d == F::zero() {
                        continue;
                    }
                    let iv = self.value(it);
                    for ((gqv, &x), (gi, &qv)) in gq
                        .iter_mut()
                        .zip(iv)
                        .zip(acc(g, it, q.len()).iter_mut().zip(q))
                    {
                        *gqv += d * x;
                        *gi += d * qv;
                    }
                }
                add_into(acc(g, *query, q.len()), &gq);
            }
            Op::ScatterAdd { x, index } => {
                let gx = acc(g, *x, index.len());
                for (gv, &i) in gx.iter_mut().zip(index) {
                    *gv += dy[i];
                }
            }
            Op::PadZeros(x) => {
                let n = self.value(*x).len();
                add_into(acc(g, *x, n), &dy[..n]);
            }
            Op::GruGates { gi, gh, h } => {
                let n_h = dy.len();
                let c = &node.cache;
                let hv = self.value(*h);
                let ghv = self.value(*gh);
                let mut dgi = vec![F::zero(); 3 * n_h];
                let mut dgh = vec![F::zero(); 3 * n_h];
                let mut dh = vec![F::zero(); n_h];
                for k in 0..n_h {
                    let (r, z, n) = (c[k], c[n_h + k], c[2 * n_h + k]);
                    let d = dy[k];
                    dh[k] = d * z;
                    let dz = d * (hv[k] - n) * z * (F::one() - z);
                    let dn = d * (F::one() - z) * (F::one() - n * n);
                    let dr = dn * ghv[2 * n_h + k] * r * (F::one() - r);
                    dgi[k] = dr;
                    dgh[k] = dr;
                    dgi[n_h + k] = dz;
                    dgh[n_h + k] = dz;
                    dgi[2 * n_h + k] = dn;
                    dgh[2 * n_h + k] = dn * r;
                }
                add_into(acc(g, *gi, 3 * n_h), &dgi);
                add_into(acc(g, *gh, 3 * n_h), &dgh);
                add_into(acc(g, *h, n_h), &dh);
            }
            Op::AttnScores {
                keys,
                query,
                coverage,
                w_cov,
                v,
            } => {
                let a = self.value(*query).len();
                let cv = self.value(*coverage);
                let wc = &self.params.get(*w_cov).data;
                let vv = &self.params.get(*v).data;
                let u = &node.cache;
                let mut gq = vec![F::zero(); a];
                let mut gc = vec![F::zero(); keys.len()];
                let mut gwc = vec![F::zero(); a];
                let mut gv = vec![F::zero(); a];
                for (i, &kid) in keys.iter().enumerate() {
                    let d = dy[i];
                    if d == F::zero() {
                        continue;
                    }
                    let gk = acc(g, kid, a);
                    for k in 0..a {
                        let uik = u[i * a + k];
                        gv[k] += d * uik;
                        let dpre = d * vv[k] * (F::one() - uik * uik);
                        gk[k] += dpre;
                        gq[k] += dpre;
                        gwc[k] += dpre * cv[i];
                        gc[i] += dpre * wc[k];
                    }
                }
                add_into(acc(g, *query, a), &gq);
                add_into(acc(g, *coverage, keys.len()), &gc);
                add_into(grads.slot(*w_cov), &gwc);
                add_into(grads.slot(*v), &gv);
            }
        }
    }
}

fn acc<F: Scalar>(g: &mut [Vec<F>], id: NodeId, n: usize) -> &mut Vec<F> {
    let slot = &mut g[id.0];
    if slot.is_empty() {
        *slot = vec![F::zero(); n];
    }
    slot
}

fn add_into<F: Scalar>(dst: &mut [F], src: &[F]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Numerically stable softmax.
pub fn softmax<F: Scalar>(x: &[F]) -> Vec<F> {
    let m = x.iter().copied().fold(F::neg_infinity(), F::max);
    let e: Vec<F> = x.iter().map(|&v| (v - m).exp()).collect();
    let s: F = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}
