//! Taylor components of tape tensors with respect to point coordinates.
//!
//! A [`Jet`] carries, next to a tensor value, its first and pure second
//! derivatives along each point's own `x` and `y` coordinate:
//! `(v, ∂v/∂x, ∂v/∂y, ∂²v/∂x², ∂²v/∂y²)`. Mixed derivatives never enter
//! the residual loss, so they are not carried. Each component is an
//! ordinary tape node, which means a single reverse sweep through the
//! jet-built graph differentiates expressions *containing* spatial
//! derivatives with respect to the network parameters.
//!
//! Components that are identically zero are represented structurally as
//! `None` rather than as zero tensors.

use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct Jet {
    pub v: Var,
    pub dx: Option<Var>,
    pub dy: Option<Var>,
    pub dxx: Option<Var>,
    pub dyy: Option<Var>,
}

impl Jet {
    /// A spatially constant tensor.
    pub fn constant(v: Var) -> Self {
        Jet {
            v,
            dx: None,
            dy: None,
            dxx: None,
            dyy: None,
        }
    }

    fn comps(&self) -> [Option<Var>; 4] {
        [self.dx, self.dy, self.dxx, self.dyy]
    }

    fn from_comps(v: Var, c: [Option<Var>; 4]) -> Self {
        Jet {
            v,
            dx: c[0],
            dy: c[1],
            dxx: c[2],
            dyy: c[3],
        }
    }

    /// Applies the same linear tape operation to the value and every
    /// present derivative component.
    pub fn map_linear(&self, tape: &mut Tape, mut f: impl FnMut(&mut Tape, Var) -> Var) -> Self {
        let v = f(tape, self.v);
        let c = self.comps().map(|opt| opt.map(|x| f(tape, x)));
        Jet::from_comps(v, c)
    }
}

fn add_opt(tape: &mut Tape, a: Option<Var>, b: Option<Var>) -> Option<Var> {
    match (a, b) {
        (Some(x), Some(y)) => Some(tape.add(x, y)),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    }
}

fn mul_opt(tape: &mut Tape, a: Option<Var>, b: Var) -> Option<Var> {
    a.map(|x| tape.mul(x, b))
}

pub fn add(tape: &mut Tape, a: &Jet, b: &Jet) -> Jet {
    let v = tape.add(a.v, b.v);
    let mut c = [None; 4];
    let (ac, bc) = (a.comps(), b.comps());
    for i in 0..4 {
        c[i] = add_opt(tape, ac[i], bc[i]);
    }
    Jet::from_comps(v, c)
}

pub fn scale(tape: &mut Tape, a: &Jet, s: f64) -> Jet {
    a.map_linear(tape, |t, x| t.scale(x, s))
}

/// Adds a constant; only the value component changes.
pub fn offset(tape: &mut Tape, a: &Jet, s: f64) -> Jet {
    let mut out = *a;
    out.v = tape.offset(a.v, s);
    out
}

/// Product rule with pure second derivatives:
/// `(fg)_xx = f_xx·g + 2 f_x·g_x + f·g_xx`.
pub fn mul(tape: &mut Tape, a: &Jet, b: &Jet) -> Jet {
    let v = tape.mul(a.v, b.v);
    let first = |tape: &mut Tape, da: Option<Var>, db: Option<Var>| {
        let t1 = mul_opt(tape, da, b.v);
        let t2 = mul_opt(tape, db, a.v);
        add_opt(tape, t1, t2)
    };
    let dx = first(tape, a.dx, b.dx);
    let dy = first(tape, a.dy, b.dy);
    let second = |tape: &mut Tape,
                  da: Option<Var>,
                  db: Option<Var>,
                  daa: Option<Var>,
                  dbb: Option<Var>| {
        let t1 = mul_opt(tape, daa, b.v);
        let t2 = mul_opt(tape, dbb, a.v);
        let cross = match (da, db) {
            (Some(x), Some(y)) => {
                let m = tape.mul(x, y);
                Some(tape.scale(m, 2.0))
            }
            _ => None,
        };
        let s = add_opt(tape, t1, t2);
        add_opt(tape, s, cross)
    };
    let dxx = second(tape, a.dx, b.dx, a.dxx, b.dxx);
    let dyy = second(tape, a.dy, b.dy, a.dyy, b.dyy);
    Jet {
        v,
        dx,
        dy,
        dxx,
        dyy,
    }
}

/// `tanh` with chain rule: `y' = s·f'`, `y'' = s·f'' − 2·y·s·(f')²`
/// where `s = 1 − y²`.
pub fn tanh(tape: &mut Tape, a: &Jet) -> Jet {
    let y = tape.tanh(a.v);
    let y2 = tape.square(y);
    let neg = tape.scale(y2, -1.0);
    let s = tape.offset(neg, 1.0);
    let first = |tape: &mut Tape, d: Option<Var>| mul_opt(tape, d, s);
    let dx = first(tape, a.dx);
    let dy = first(tape, a.dy);
    let ys = tape.mul(y, s);
    let second = |tape: &mut Tape, d: Option<Var>, dd: Option<Var>| {
        let lin = mul_opt(tape, dd, s);
        let quad = d.map(|dv| {
            let d2 = tape.square(dv);
            let m = tape.mul(d2, ys);
            tape.scale(m, -2.0)
        });
        add_opt(tape, lin, quad)
    };
    let dxx = second(tape, a.dx, a.dxx);
    let dyy = second(tape, a.dy, a.dyy);
    Jet {
        v: y,
        dx,
        dy,
        dxx,
        dyy,
    }
}

/// Per-channel affine transform with spatially constant scale and shift
/// (batch-normalization application): derivative components only scale.
pub fn channel_affine(tape: &mut Tape, a: &Jet, scale: Var, shift: Option<Var>) -> Jet {
    let scaled = tape.mul_chan(a.v, scale);
    let v = match shift {
        Some(b) => tape.add_chan(scaled, b),
        None => scaled,
    };
    let c = a.comps().map(|opt| opt.map(|x| tape.mul_chan(x, scale)));
    Jet::from_comps(v, c)
}

/// Max over the point axis, broadcast back. Derivative components survive
/// only at the winning point of each `(batch, channel)` slot.
pub fn max_pool_broadcast(tape: &mut Tape, a: &Jet) -> Jet {
    let pooled = tape.max_pool_broadcast(a.v);
    let c = a
        .comps()
        .map(|opt| opt.map(|x| tape.argmax_gate(x, pooled)));
    Jet::from_comps(pooled, c)
}

/// Channel concatenation; absent components are materialized as zeros so
/// both sides stay aligned.
pub fn concat_chan(tape: &mut Tape, a: &Jet, b: &Jet) -> Jet {
    let v = tape.concat_chan(a.v, b.v);
    let (ac, bc) = (a.comps(), b.comps());
    let mut c = [None; 4];
    for i in 0..4 {
        c[i] = match (ac[i], bc[i]) {
            (None, None) => None,
            (x, y) => {
                let ashape = tape.value(a.v).shape().to_vec();
                let bshape = tape.value(b.v).shape().to_vec();
                let xa = x.unwrap_or_else(|| tape.zeros(&ashape));
                let xb = y.unwrap_or_else(|| tape.zeros(&bshape));
                Some(tape.concat_chan(xa, xb))
            }
        };
    }
    Jet::from_comps(v, c)
}
