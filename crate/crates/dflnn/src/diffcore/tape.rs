use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::Real;

/// One recorded node: a span into the shared edge arena. Leaves own empty
/// spans; fused linear combinations own one edge per live operand.
#[derive(Clone, Copy)]
struct Span {
    start: u32,
    len: u32,
}

#[derive(Default)]
struct Nodes {
    spans: Vec<Span>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

/// Reverse-mode tape. Records first-order nodes; one backward sweep yields
/// the gradient of a scalar output with respect to every leaf.
///
/// Arithmetic between constants folds away and records nothing, so zero
/// tangents introduced by forward-mode seeding cost nothing downstream.
/// Dot products record a single n-ary node via [`Real::linear_comb`].
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Nodes>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Nodes {
                spans: Vec::with_capacity(n),
                parents: Vec::with_capacity(2 * n),
                partials: Vec::with_capacity(2 * n),
            }),
        }
    }

    /// Register an independent variable (a parameter).
    pub fn leaf(&self, val: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.spans.len() as u32;
        let start = nodes.parents.len() as u32;
        nodes.spans.push(Span { start, len: 0 });
        Var {
            val,
            node: Some((self, idx)),
        }
    }

    /// Register one leaf per value, in order. Leaf `i` owns node index `i`
    /// on a fresh tape.
    pub fn leaves(&self, vals: &[f64]) -> Vec<Var<'_>> {
        vals.iter().map(|&v| self.leaf(v)).collect()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.borrow().spans.len()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.borrow().parents.len()
    }

    /// Drop all recorded nodes but keep the allocations.
    pub fn clear(&mut self) {
        let nodes = self.nodes.get_mut();
        nodes.spans.clear();
        nodes.parents.clear();
        nodes.partials.clear();
    }

    /// Adjoints of every node with respect to `output`, by one backward sweep.
    pub fn adjoints(&self, output: Var<'_>) -> Vec<f64> {
        let mut adj = Vec::new();
        self.adjoints_into(output, &mut adj);
        adj
    }

    /// As [`Tape::adjoints`], reusing the buffer's allocation.
    pub fn adjoints_into(&self, output: Var<'_>, adj: &mut Vec<f64>) {
        let nodes = self.nodes.borrow();
        adj.clear();
        adj.resize(nodes.spans.len(), 0.0);
        let Some((tape, idx)) = output.node else {
            return; // constant output: zero gradient everywhere
        };
        debug_assert!(std::ptr::eq(tape, self), "output from a foreign tape");
        adj[idx as usize] = 1.0;
        for i in (0..nodes.spans.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let span = nodes.spans[i];
            let lo = span.start as usize;
            let hi = lo + span.len as usize;
            for e in lo..hi {
                adj[nodes.parents[e] as usize] += a * nodes.partials[e];
            }
        }
    }

    /// Gradient of `output` with respect to the first `leaf_count` leaves.
    pub fn gradient(&self, output: Var<'_>, leaf_count: usize) -> Vec<f64> {
        let mut adj = self.adjoints(output);
        adj.truncate(leaf_count);
        adj
    }

    fn push1(&self, parent: u32, partial: f64) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.spans.len() as u32;
        let start = nodes.parents.len() as u32;
        nodes.parents.push(parent);
        nodes.partials.push(partial);
        nodes.spans.push(Span { start, len: 1 });
        idx
    }

    fn push2(&self, p0: u32, d0: f64, p1: u32, d1: f64) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.spans.len() as u32;
        let start = nodes.parents.len() as u32;
        nodes.parents.push(p0);
        nodes.partials.push(d0);
        nodes.parents.push(p1);
        nodes.partials.push(d1);
        nodes.spans.push(Span { start, len: 2 });
        idx
    }
}

/// A scalar tracked on a [`Tape`]. Constants (from [`Real::constant`]) carry
/// no tape link and fold through arithmetic for free.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    val: f64,
    node: Option<(&'t Tape, u32)>,
}

impl<'t> Var<'t> {
    #[inline]
    pub fn value(&self) -> f64 {
        self.val
    }

    #[inline]
    fn is_const(&self) -> bool {
        self.node.is_none()
    }

    #[inline]
    fn tape(&self) -> Option<&'t Tape> {
        self.node.map(|(t, _)| t)
    }

    #[inline]
    fn unary(self, val: f64, partial: f64) -> Self {
        match self.node {
            None => Var { val, node: None },
            Some((tape, idx)) => Var {
                val,
                node: Some((tape, tape.push1(idx, partial))),
            },
        }
    }

    #[inline]
    fn binary(self, rhs: Self, val: f64, pa: f64, pb: f64) -> Self {
        match (self.node, rhs.node) {
            (None, None) => Var { val, node: None },
            (Some((tape, ia)), None) => Var {
                val,
                node: Some((tape, tape.push1(ia, pa))),
            },
            (None, Some((tape, ib))) => Var {
                val,
                node: Some((tape, tape.push1(ib, pb))),
            },
            (Some((tape, ia)), Some((tape_b, ib))) => {
                debug_assert!(std::ptr::eq(tape, tape_b), "vars from different tapes");
                Var {
                    val,
                    node: Some((tape, tape.push2(ia, pa, ib, pb))),
                }
            }
        }
    }
}

// Structural identities (`x + 0 = x`, `x * 0 = 0`, `x * 1 = x`) fold without
// recording a node. They hold as functions, not just at the current value,
// so the pruned gradient contributions are exactly zero. Forward-mode
// tangent seeds are constants, which makes dead tangent chains free.

impl<'t> Add for Var<'t> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        if self.is_const() && self.val == 0.0 {
            return rhs;
        }
        if rhs.is_const() && rhs.val == 0.0 {
            return self;
        }
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        if rhs.is_const() && rhs.val == 0.0 {
            return self;
        }
        if self.is_const() && self.val == 0.0 {
            return -rhs;
        }
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        if self.is_const() {
            if self.val == 0.0 {
                return Var::constant(0.0);
            }
            if self.val == 1.0 {
                return rhs;
            }
        }
        if rhs.is_const() {
            if rhs.val == 0.0 {
                return Var::constant(0.0);
            }
            if rhs.val == 1.0 {
                return self;
            }
        }
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        if self.is_const() && self.val == 0.0 {
            return Var::constant(0.0);
        }
        if rhs.is_const() && rhs.val == 1.0 {
            return self;
        }
        let val = self.val / rhs.val;
        self.binary(rhs, val, 1.0 / rhs.val, -val / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

const FRAC_2_SQRT_PI: f64 = 1.128_379_167_095_512_6;

impl<'t> Real for Var<'t> {
    #[inline]
    fn constant(c: f64) -> Self {
        Var { val: c, node: None }
    }

    #[inline]
    fn primal(&self) -> f64 {
        self.val
    }

    #[inline]
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }

    #[inline]
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    #[inline]
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }

    #[inline]
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }

    #[inline]
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }

    #[inline]
    fn erf(self) -> Self {
        let p = FRAC_2_SQRT_PI * (-self.val * self.val).exp();
        self.unary(libm::erf(self.val), p)
    }

    /// One n-ary node for the whole sum of products; constant operands
    /// contribute to the value but record no edge.
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut tape: Option<&'t Tape> = None;
        let mut val = 0.0;
        for i in 0..a.len() {
            val += a[i].val * b[i].val;
            if tape.is_none() {
                tape = a[i].tape().or_else(|| b[i].tape());
            }
        }
        let Some(tape) = tape else {
            return Var { val, node: None };
        };
        let mut nodes = tape.nodes.borrow_mut();
        let idx = nodes.spans.len() as u32;
        let start = nodes.parents.len() as u32;
        for i in 0..a.len() {
            let (x, y) = (a[i], b[i]);
            if let Some((_, ix)) = x.node {
                if y.val != 0.0 {
                    nodes.parents.push(ix);
                    nodes.partials.push(y.val);
                }
            }
            if let Some((_, iy)) = y.node {
                if x.val != 0.0 {
                    nodes.parents.push(iy);
                    nodes.partials.push(x.val);
                }
            }
        }
        let len = nodes.parents.len() as u32 - start;
        if len == 0 {
            return Var { val, node: None };
        }
        nodes.spans.push(Span { start, len });
        Var {
            val,
            node: Some((tape, idx)),
        }
    }
}
