use rand::Rng;

use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParamStore};
use crate::Scalar;

/// `y = W x + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<F: Scalar, R: Rng>(
        store: &mut ParamStore<F>,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let scale = (6.0 / (input + output) as f64).sqrt();
        Linear {
            w: store.add_uniform(format!("{name}.w"), output, input, scale, rng),
            b: store.add_zeros(format!("{name}.b"), output, 1),
        }
    }

    pub fn forward<F: Scalar>(&self, g: &mut Graph<'_, F>, x: NodeId) -> NodeId {
        let y = g.matvec(self.w, x);
        g.add_param(y, self.b)
    }
}

/// Single-layer gated recurrent unit.
#[derive(Debug, Clone, Copy)]
pub struct Gru {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub hidden: usize,
}

impl Gru {
    pub fn new<F: Scalar, R: Rng>(
        store: &mut ParamStore<F>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        Gru {
            w_ih: store.add_uniform(format!("{name}.w_ih"), 3 * hidden, input, k, rng),
            w_hh: store.add_uniform(format!("{name}.w_hh"), 3 * hidden, hidden, k, rng),
            b_ih: store.add_uniform(format!("{name}.b_ih"), 3 * hidden, 1, k, rng),
            b_hh: store.add_uniform(format!("{name}.b_hh"), 3 * hidden, 1, k, rng),
            hidden,
        }
    }

    pub fn step<F: Scalar>(&self, g: &mut Graph<'_, F>, x: NodeId, h: NodeId) -> NodeId {
        let gi = g.matvec(self.w_ih, x);
        let gi = g.add_param(gi, self.b_ih);
        let gh = g.matvec(self.w_hh, h);
        let gh = g.add_param(gh, self.b_hh);
        g.gru_gates(gi, gh, h)
    }

    /// Runs over `xs` from a zero state, returning every hidden state.
    pub fn run<F: Scalar>(&self, g: &mut Graph<'_, F>, xs: &[NodeId]) -> Vec<NodeId> {
        let mut h = g.zeros(self.hidden);
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            h = self.step(g, x, h);
            out.push(h);
        }
        out
    }
}
