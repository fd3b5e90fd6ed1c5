//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The tape records a directed acyclic graph of tensor operations with
//! eagerly computed values. A single backward sweep in reverse creation
//! order accumulates vector-Jacobian products, yielding exact gradients
//! with respect to every leaf. The operation set is the closure of what
//! the point-cloud networks and the residual loss need: elementwise
//! arithmetic, `tanh`, dense contractions, per-channel affine transforms,
//! batch reductions, max-pooling with stored argmax, concatenation, and
//! row gathering.
//!
//! Spatial derivatives of network outputs are obtained by propagating
//! Taylor components *forward* through tape ops (see [`crate::jet`]), so
//! one reverse sweep differentiates the full physics-informed loss —
//! including the PDE-residual terms — with respect to the parameters.

use ndarray::{Array2, ArrayD, Axis, Ix2, Ix3, IxDyn};
use std::sync::Arc;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Square(Var),
    Sqrt(Var),
    Recip(Var),
    /// `(.., ci) × (co, ci) -> (.., co)` over the trailing axis.
    MatVec {
        x: Var,
        w: Var,
    },
    /// `(.., ci, k) × (co, ci, k) -> (.., co)`: the KAN edge contraction.
    ContractKan {
        basis: Var,
        coeffs: Var,
    },
    /// Stacks equally shaped tensors along a new trailing axis.
    StackLast(Vec<Var>),
    /// `(.., c) + (c,)` broadcast over leading axes.
    AddChan {
        x: Var,
        c: Var,
    },
    /// `(.., c) * (c,)` broadcast over leading axes.
    MulChan {
        x: Var,
        c: Var,
    },
    /// Mean over every leading axis, producing `(c,)`.
    MeanRows(Var),
    /// `(b, n, c) -> (b, n, c)`: per-(b,c) max over the point axis,
    /// broadcast back to every point. Argmax indices are fixed at forward
    /// time; the reduction is exact under point duplication.
    MaxPoolBroadcast {
        x: Var,
        argmax: Arc<Array2<usize>>,
    },
    /// Keeps row `n` of `d[b, n, c]` only where `n` is the argmax of the
    /// referenced pooling node; all other rows become zero. This is how
    /// spatial-derivative components flow through the symmetric function:
    /// the pooled feature depends on the winning point's coordinates only.
    ArgmaxGate {
        d: Var,
        argmax: Arc<Array2<usize>>,
    },
    /// Concatenation along the trailing (channel) axis.
    ConcatChan(Var, Var),
    /// Selects one channel of `(b, n, c)`, producing `(b, n)`.
    SelectChan {
        x: Var,
        chan: usize,
    },
    /// Gathers `(b, n)` rows of a `(b, n, ..)` tensor into `(k, ..)`.
    GatherRows {
        x: Var,
        rows: Arc<Vec<(usize, usize)>>,
    },
    /// Mean of all entries, producing a 0-d scalar.
    MeanAll(Var),
}

struct Node {
    value: ArrayD<f64>,
    op: Op,
}

/// Records tensor operations and their values.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node adjoints produced by [`Tape::backward`].
pub struct Gradients {
    adjoints: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    /// Gradient of the backward root with respect to `v`, if any path
    /// reached it.
    pub fn get(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.adjoints[v.0].as_ref()
    }
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

    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: ArrayD<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(ndarray::arr0(value).into_dyn())
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Var {
        self.leaf(ArrayD::zeros(IxDyn(shape)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(self.value(a).shape(), self.value(b).shape());
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(self.value(a).shape(), self.value(b).shape());
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(self.value(a).shape(), self.value(b).shape());
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn offset(&mut self, a: Var, s: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x + s);
        self.push(v, Op::Offset(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::sqrt);
        self.push(v, Op::Sqrt(a))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::recip);
        self.push(v, Op::Recip(a))
    }

    /// Contraction with a weight matrix over the trailing axis.
    pub fn matvec(&mut self, x: Var, w: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let w2 = wv.view().into_dimensionality::<Ix2>().expect("weight is 2-d");
        let ci = w2.ncols();
        let co = w2.nrows();
        assert_eq!(
            xv.shape().last(),
            Some(&ci),
            "matvec input trailing axis must match weight columns"
        );
        let lead: usize = xv.len() / ci;
        let x2 = flatten_to_2d(xv, lead, ci);
        let out2 = x2.dot(&w2.t());
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = co;
        let out = out2
            .into_shape_with_order(IxDyn(&shape))
            .expect("shape matches");
        self.push(out, Op::MatVec { x, w })
    }

    /// KAN edge contraction: `out[.., o] = Σ_{j,i} coeffs[o,j,i]·basis[..,j,i]`.
    pub fn contract_kan(&mut self, basis: Var, coeffs: Var) -> Var {
        let bv = &self.nodes[basis.0].value;
        let cv = &self.nodes[coeffs.0].value;
        let c3 = cv.view().into_dimensionality::<Ix3>().expect("coeffs are 3-d");
        let (co, ci, k) = c3.dim();
        let bshape = bv.shape();
        assert!(
            bshape.len() >= 2 && bshape[bshape.len() - 2] == ci && bshape[bshape.len() - 1] == k,
            "basis trailing axes must be (d_input, degree+1)"
        );
        let lead: usize = bv.len() / (ci * k);
        let b2 = flatten_to_2d(bv, lead, ci * k);
        let c2 = flatten_to_2d(cv, co, ci * k);
        let out2 = b2.dot(&c2.t());
        let mut shape = bshape[..bshape.len() - 2].to_vec();
        shape.push(co);
        let out = out2
            .into_shape_with_order(IxDyn(&shape))
            .expect("shape matches");
        self.push(out, Op::ContractKan { basis, coeffs })
    }

    pub fn stack_last(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let base_shape = self.value(parts[0]).shape().to_vec();
        let k = parts.len();
        let mut shape = base_shape.clone();
        shape.push(k);
        let mut out = ArrayD::zeros(IxDyn(&shape));
        for (i, &p) in parts.iter().enumerate() {
            debug_assert_eq!(self.value(p).shape(), &base_shape[..]);
            out.index_axis_mut(Axis(shape.len() - 1), i)
                .assign(&self.nodes[p.0].value);
        }
        self.push(out, Op::StackLast(parts.to_vec()))
    }

    pub fn add_chan(&mut self, x: Var, c: Var) -> Var {
        let v = {
            let xv = &self.nodes[x.0].value;
            let cv = &self.nodes[c.0].value;
            debug_assert_eq!(xv.shape().last(), cv.shape().first());
            xv + cv
        };
        self.push(v, Op::AddChan { x, c })
    }

    pub fn mul_chan(&mut self, x: Var, c: Var) -> Var {
        let v = {
            let xv = &self.nodes[x.0].value;
            let cv = &self.nodes[c.0].value;
            debug_assert_eq!(xv.shape().last(), cv.shape().first());
            xv * cv
        };
        self.push(v, Op::MulChan { x, c })
    }

    /// Mean over all leading axes: `(.., c) -> (c,)`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let c = *xv.shape().last().expect("non-scalar");
        let rows = xv.len() / c;
        let x2 = flatten_to_2d(xv, rows, c);
        let mean = x2.mean_axis(Axis(0)).expect("rows >= 1");
        self.push(mean.into_dyn(), Op::MeanRows(x))
    }

    /// Max over the point axis of `(b, n, c)`, broadcast back to `(b, n, c)`.
    pub fn max_pool_broadcast(&mut self, x: Var) -> Var {
        let xv = self.nodes[x.0]
            .value
            .view()
            .into_dimensionality::<Ix3>()
            .expect("pooling input is (b, n, c)");
        let (b, n, c) = xv.dim();
        assert!(n >= 1);
        let mut argmax = Array2::<usize>::zeros((b, c));
        let mut out = ArrayD::zeros(IxDyn(&[b, n, c]));
        for bi in 0..b {
            for ci in 0..c {
                let mut best = 0usize;
                let mut best_v = xv[[bi, 0, ci]];
                for ni in 1..n {
                    let v = xv[[bi, ni, ci]];
                    if v > best_v {
                        best_v = v;
                        best = ni;
                    }
                }
                argmax[[bi, ci]] = best;
                for ni in 0..n {
                    out[[bi, ni, ci]] = best_v;
                }
            }
        }
        self.push(
            out,
            Op::MaxPoolBroadcast {
                x,
                argmax: Arc::new(argmax),
            },
        )
    }

    /// Argmax indices stored by a [`Tape::max_pool_broadcast`] node.
    pub fn pool_argmax(&self, pool: Var) -> Arc<Array2<usize>> {
        match &self.nodes[pool.0].op {
            Op::MaxPoolBroadcast { argmax, .. } => Arc::clone(argmax),
            _ => panic!("var is not a max-pool node"),
        }
    }

    /// Gates rows of `d` by the argmax pattern of a pooling node.
    pub fn argmax_gate(&mut self, d: Var, pool: Var) -> Var {
        let argmax = self.pool_argmax(pool);
        let dv = self.nodes[d.0]
            .value
            .view()
            .into_dimensionality::<Ix3>()
            .expect("gate input is (b, n, c)");
        let (b, n, c) = dv.dim();
        let mut out = ArrayD::zeros(IxDyn(&[b, n, c]));
        for bi in 0..b {
            for ci in 0..c {
                let win = argmax[[bi, ci]];
                out[[bi, win, ci]] = dv[[bi, win, ci]];
            }
        }
        let _ = n;
        self.push(out, Op::ArgmaxGate { d, argmax })
    }

    pub fn concat_chan(&mut self, a: Var, b: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let last = av.ndim() - 1;
        let v = ndarray::concatenate(Axis(last), &[av.view(), bv.view()])
            .expect("leading axes must agree");
        self.push(v, Op::ConcatChan(a, b))
    }

    pub fn select_chan(&mut self, x: Var, chan: usize) -> Var {
        let xv = &self.nodes[x.0].value;
        let last = xv.ndim() - 1;
        let v = xv.index_axis(Axis(last), chan).to_owned();
        self.push(v, Op::SelectChan { x, chan })
    }

    /// Gathers `(b, n)` rows; `x` may be `(b, n)` or `(b, n, c)`.
    pub fn gather_rows(&mut self, x: Var, rows: Arc<Vec<(usize, usize)>>) -> Var {
        let xv = &self.nodes[x.0].value;
        let k = rows.len();
        let v = match xv.ndim() {
            2 => {
                let x2 = xv.view().into_dimensionality::<Ix2>().unwrap();
                let mut out = ArrayD::zeros(IxDyn(&[k]));
                for (i, &(b, n)) in rows.iter().enumerate() {
                    out[[i]] = x2[[b, n]];
                }
                out
            }
            3 => {
                let x3 = xv.view().into_dimensionality::<Ix3>().unwrap();
                let c = x3.dim().2;
                let mut out = ArrayD::zeros(IxDyn(&[k, c]));
                for (i, &(b, n)) in rows.iter().enumerate() {
                    for ci in 0..c {
                        out[[i, ci]] = x3[[b, n, ci]];
                    }
                }
                out
            }
            d => panic!("gather_rows expects rank 2 or 3, got {d}"),
        };
        self.push(v, Op::GatherRows { x, rows })
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let m = self.nodes[x.0].value.mean().expect("non-empty");
        self.push(ndarray::arr0(m).into_dyn(), Op::MeanAll(x))
    }

    /// Sum of scalars (used to assemble loss terms).
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Var {
        let mut acc = parts[0];
        for &p in &parts[1..] {
            acc = self.add(acc, p);
        }
        acc
    }

    /// Reverse sweep from `root`, which must be scalar (0-d).
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(
            self.value(root).ndim(),
            0,
            "backward root must be a scalar"
        );
        let mut adj: Vec<Option<ArrayD<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[root.0] = Some(ndarray::arr0(1.0).into_dyn());
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.push_adjoint(i, &g, &mut adj);
            adj[i] = Some(g);
        }
        Gradients { adjoints: adj }
    }

    fn push_adjoint(&self, i: usize, g: &ArrayD<f64>, adj: &mut [Option<ArrayD<f64>>]) {
        let acc = |adj: &mut [Option<ArrayD<f64>>], v: Var, delta: ArrayD<f64>| {
            match &mut adj[v.0] {
                Some(a) => *a += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(adj, *a, g.clone());
                acc(adj, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(adj, *a, g.clone());
                acc(adj, *b, -g);
            }
            Op::Mul(a, b) => {
                acc(adj, *a, g * &self.nodes[b.0].value);
                acc(adj, *b, g * &self.nodes[a.0].value);
            }
            Op::Scale(a, s) => acc(adj, *a, g.mapv(|x| x * s)),
            Op::Offset(a) => acc(adj, *a, g.clone()),
            Op::Tanh(a) => {
                let y = &self.nodes[i].value;
                acc(adj, *a, g * &y.mapv(|t| 1.0 - t * t));
            }
            Op::Square(a) => {
                acc(adj, *a, g * &self.nodes[a.0].value.mapv(|x| 2.0 * x));
            }
            Op::Sqrt(a) => {
                let y = &self.nodes[i].value;
                acc(adj, *a, g * &y.mapv(|s| 0.5 / s));
            }
            Op::Recip(a) => {
                let y = &self.nodes[i].value;
                acc(adj, *a, g * &y.mapv(|r| -r * r));
            }
            Op::MatVec { x, w } => {
                let wv = self.nodes[w.0].value.view().into_dimensionality::<Ix2>().unwrap();
                let (co, ci) = wv.dim();
                let lead = g.len() / co;
                let g2 = flatten_to_2d(g, lead, co);
                let xv = &self.nodes[x.0].value;
                let x2 = flatten_to_2d(xv, lead, ci);
                let dx = g2.dot(&wv);
                let dw = g2.t().dot(&x2);
                acc(
                    adj,
                    *x,
                    dx.into_shape_with_order(IxDyn(xv.shape())).unwrap(),
                );
                acc(adj, *w, dw.into_dyn());
            }
            Op::ContractKan { basis, coeffs } => {
                let cv = self.nodes[coeffs.0].value.view().into_dimensionality::<Ix3>().unwrap();
                let (co, ci, k) = cv.dim();
                let lead = g.len() / co;
                let g2 = flatten_to_2d(g, lead, co);
                let bv = &self.nodes[basis.0].value;
                let b2 = flatten_to_2d(bv, lead, ci * k);
                let c2 = flatten_to_2d(&self.nodes[coeffs.0].value, co, ci * k);
                let dbasis = g2.dot(&c2);
                let dcoeffs = g2.t().dot(&b2);
                acc(
                    adj,
                    *basis,
                    dbasis.into_shape_with_order(IxDyn(bv.shape())).unwrap(),
                );
                acc(
                    adj,
                    *coeffs,
                    dcoeffs.into_shape_with_order(IxDyn(&[co, ci, k])).unwrap(),
                );
            }
            Op::StackLast(parts) => {
                let last = g.ndim() - 1;
                for (idx, &p) in parts.iter().enumerate() {
                    acc(adj, p, g.index_axis(Axis(last), idx).to_owned());
                }
            }
            Op::AddChan { x, c } => {
                acc(adj, *x, g.clone());
                acc(adj, *c, sum_to_channel(g));
            }
            Op::MulChan { x, c } => {
                let cv = &self.nodes[c.0].value;
                acc(adj, *x, g * cv);
                let xv = &self.nodes[x.0].value;
                acc(adj, *c, sum_to_channel(&(g * xv)));
            }
            Op::MeanRows(x) => {
                let xv = &self.nodes[x.0].value;
                let c = *xv.shape().last().unwrap();
                let rows = (xv.len() / c) as f64;
                let scaled = g.mapv(|v| v / rows);
                let mut dx = ArrayD::zeros(IxDyn(xv.shape()));
                dx += &scaled;
                acc(adj, *x, dx);
            }
            Op::MaxPoolBroadcast { x, argmax } => {
                let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
                let (b, n, c) = g3.dim();
                let mut dx = ArrayD::zeros(IxDyn(&[b, n, c]));
                for bi in 0..b {
                    for ci in 0..c {
                        let win = argmax[[bi, ci]];
                        let mut s = 0.0;
                        for ni in 0..n {
                            s += g3[[bi, ni, ci]];
                        }
                        dx[[bi, win, ci]] += s;
                    }
                }
                acc(adj, *x, dx);
            }
            Op::ArgmaxGate { d, argmax } => {
                let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
                let (b, _n, c) = g3.dim();
                let mut dd = ArrayD::zeros(g.raw_dim());
                for bi in 0..b {
                    for ci in 0..c {
                        let win = argmax[[bi, ci]];
                        dd[[bi, win, ci]] = g3[[bi, win, ci]];
                    }
                }
                acc(adj, *d, dd);
            }
            Op::ConcatChan(a, b) => {
                let last = g.ndim() - 1;
                let ca = *self.nodes[a.0].value.shape().last().unwrap();
                let total = g.shape()[last];
                let ga = g.slice_axis(Axis(last), ndarray::Slice::from(0..ca)).to_owned();
                let gb = g
                    .slice_axis(Axis(last), ndarray::Slice::from(ca..total))
                    .to_owned();
                acc(adj, *a, ga);
                acc(adj, *b, gb);
            }
            Op::SelectChan { x, chan } => {
                let xv = &self.nodes[x.0].value;
                let mut dx = ArrayD::zeros(IxDyn(xv.shape()));
                let last = xv.ndim() - 1;
                dx.index_axis_mut(Axis(last), *chan).assign(g);
                acc(adj, *x, dx);
            }
            Op::GatherRows { x, rows } => {
                let xv = &self.nodes[x.0].value;
                let mut dx = ArrayD::zeros(IxDyn(xv.shape()));
                match xv.ndim() {
                    2 => {
                        for (i, &(b, n)) in rows.iter().enumerate() {
                            dx[[b, n]] += g[[i]];
                        }
                    }
                    3 => {
                        let c = xv.shape()[2];
                        for (i, &(b, n)) in rows.iter().enumerate() {
                            for ci in 0..c {
                                dx[[b, n, ci]] += g[[i, ci]];
                            }
                        }
                    }
                    _ => unreachable!(),
                }
                acc(adj, *x, dx);
            }
            Op::MeanAll(x) => {
                let xv = &self.nodes[x.0].value;
                let s = g.first().copied().unwrap_or(0.0) / xv.len() as f64;
                acc(adj, *x, ArrayD::from_elem(IxDyn(xv.shape()), s));
            }
        }
    }
}

/// Sums a `(.., c)` tensor over every leading axis into `(c,)`.
fn sum_to_channel(x: &ArrayD<f64>) -> ArrayD<f64> {
    let c = *x.shape().last().expect("non-scalar");
    let rows = x.len() / c;
    flatten_to_2d(x, rows, c).sum_axis(Axis(0)).into_dyn()
}

fn flatten_to_2d(x: &ArrayD<f64>, rows: usize, cols: usize) -> Array2<f64> {
    debug_assert_eq!(x.len(), rows * cols);
    x.as_standard_layout()
        .to_owned()
        .into_shape_with_order((rows, cols))
        .expect("element count matches")
}
