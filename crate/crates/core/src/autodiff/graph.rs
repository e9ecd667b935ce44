//! Append-only computation graph over vector-valued nodes.
//!
//! Every node has a static length. Binary element-wise ops broadcast an
//! operand of length 1. Parameter nodes have no storage of their own; they
//! read the parameter vector directly and write gradients straight into the
//! gradient buffer.

use super::real::Real;

pub type NodeId = usize;

/// Where a parameter node finds its values. With a selector, the input at
/// that offset holds the index of the parameter set to use.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamRef {
    pub sets: Vec<usize>,
    pub selector: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Const(usize),
    Input(usize),
    Param(ParamRef),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Exp(NodeId),
    Square(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Sum(NodeId),
    Softmax(NodeId),
    StopGradient(NodeId),
    Concat(Vec<NodeId>),
    /// Row-major `rows x cols` matrix times a vector of length `cols`.
    MatVec {
        m: NodeId,
        x: NodeId,
        rows: usize,
        cols: usize,
    },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Const(_) => "const",
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Exp(_) => "exp",
            Op::Square(_) => "square",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Sum(_) => "sum",
            Op::Softmax(_) => "softmax",
            Op::StopGradient(_) => "stop_gradient",
            Op::Concat(_) => "concat",
            Op::MatVec { .. } => "matvec",
        }
    }

    fn operands(&self) -> Vec<NodeId> {
        match self {
            Op::Const(_) | Op::Input(_) | Op::Param(_) => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
            Op::Exp(a)
            | Op::Square(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Sum(a)
            | Op::Softmax(a)
            | Op::StopGradient(a) => vec![*a],
            Op::Concat(xs) => xs.clone(),
            Op::MatVec { m, x, .. } => vec![*m, *x],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub len: usize,
    offset: usize,
    grad: bool,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("input vector has {got} values, graph reads {need}")]
    UnboundInput { need: usize, got: usize },
    #[error("qualifier value {value} has no parameter set (known: 0..{known})")]
    UnknownQualifier { value: f64, known: usize },
    #[error("division by zero at node {0}")]
    DivByZero(NodeId),
    #[error("non-finite value at node {0}")]
    NonFinite(NodeId),
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consts: Vec<f64>,
    storage: usize,
    n_inputs: usize,
    output: Option<NodeId>,
}

/// Per-evaluation buffers. One per thread.
#[derive(Clone, Debug)]
pub struct Workspace<T> {
    values: Vec<T>,
    adj: Vec<f64>,
    param_base: Vec<usize>,
}

impl<T: Real> Workspace<T> {
    pub fn new(g: &Graph) -> Self {
        let mut values = vec![T::zero(); g.storage];
        for n in &g.nodes {
            if let Op::Const(start) = n.op {
                for j in 0..n.len {
                    values[n.offset + j] = T::from_f64(g.consts[start + j]);
                }
            }
        }
        Workspace {
            values,
            adj: vec![0.0; g.storage],
            param_base: vec![0; g.nodes.len()],
        }
    }
}

fn broadcast_len(la: usize, lb: usize) -> usize {
    assert!(
        la == lb || la == 1 || lb == 1,
        "operand lengths {la} and {lb} do not broadcast"
    );
    la.max(lb)
}

#[inline]
fn at<T: Copy>(v: &[T], j: usize) -> T {
    if v.len() == 1 {
        v[0]
    } else {
        v[j]
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, len: usize) -> NodeId {
        let grad = match &op {
            Op::Param(_) => true,
            Op::Const(_) | Op::Input(_) | Op::StopGradient(_) => false,
            other => other.operands().iter().any(|&o| self.nodes[o].grad),
        };
        let offset = if matches!(op, Op::Param(_)) {
            usize::MAX
        } else {
            let o = self.storage;
            self.storage += len;
            o
        };
        for o in op.operands() {
            assert!(o < self.nodes.len(), "operand {o} does not precede node");
        }
        self.nodes.push(Node {
            op,
            len,
            offset,
            grad,
        });
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len_of(&self, id: NodeId) -> usize {
        self.nodes[id].len
    }

    /// Number of input values the graph reads.
    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn output(&self) -> NodeId {
        self.output.expect("graph output not set")
    }

    pub fn set_output(&mut self, id: NodeId) {
        self.output = Some(id);
    }

    /// True when gradients can flow from a parameter into this node.
    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id].grad
    }

    pub fn constant(&mut self, values: &[f64]) -> NodeId {
        let start = self.consts.len();
        self.consts.extend_from_slice(values);
        self.push(Op::Const(start), values.len())
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(&[v])
    }

    pub fn input(&mut self, offset: usize, len: usize) -> NodeId {
        self.n_inputs = self.n_inputs.max(offset + len);
        self.push(Op::Input(offset), len)
    }

    pub fn param(&mut self, p: ParamRef, len: usize) -> NodeId {
        assert!(!p.sets.is_empty());
        if let Some(s) = p.selector {
            self.n_inputs = self.n_inputs.max(s + 1);
        }
        self.push(Op::Param(p), len)
    }

    fn binary(&mut self, a: NodeId, b: NodeId, f: fn(NodeId, NodeId) -> Op) -> NodeId {
        let len = broadcast_len(self.nodes[a].len, self.nodes[b].len);
        self.push(f(a, b), len)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Add)
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Sub)
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Mul)
    }
    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Div)
    }
    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Exp(a), self.nodes[a].len)
    }
    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Square(a), self.nodes[a].len)
    }
    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sigmoid(a), self.nodes[a].len)
    }
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Relu(a), self.nodes[a].len)
    }
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a), 1)
    }
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Softmax(a), self.nodes[a].len)
    }
    pub fn stop_gradient(&mut self, a: NodeId) -> NodeId {
        self.push(Op::StopGradient(a), self.nodes[a].len)
    }
    pub fn concat(&mut self, xs: &[NodeId]) -> NodeId {
        let len = xs.iter().map(|&x| self.nodes[x].len).sum();
        self.push(Op::Concat(xs.to_vec()), len)
    }
    pub fn matvec(&mut self, m: NodeId, x: NodeId, rows: usize, cols: usize) -> NodeId {
        assert_eq!(self.nodes[m].len, rows * cols);
        assert_eq!(self.nodes[x].len, cols);
        self.push(Op::MatVec { m, x, rows, cols }, rows)
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let one = self.scalar(1.0);
        self.sub(one, a)
    }

    #[inline]
    fn value<'a, T>(&self, id: NodeId, values: &'a [T], params: &'a [T], base: &[usize]) -> &'a [T] {
        let n = &self.nodes[id];
        if let Op::Param(_) = n.op {
            &params[base[id]..base[id] + n.len]
        } else {
            &values[n.offset..n.offset + n.len]
        }
    }

    /// Marks the parameter indices (out of `n`) that a forward pass on
    /// `inputs` reads. Sets not chosen by a selector are left unmarked.
    pub fn params_read(&self, inputs: &[f64], n: usize) -> Vec<bool> {
        let mut read = vec![false; n];
        for node in &self.nodes {
            if let Op::Param(p) = &node.op {
                let set = match p.selector {
                    None => Some(0),
                    Some(s) => inputs.get(s).map(|&v| v as usize).filter(|&k| k < p.sets.len()),
                };
                let sets = match set {
                    Some(k) => &p.sets[k..k + 1],
                    // unresolvable selector: be conservative
                    None => &p.sets[..],
                };
                for &start in sets {
                    read[start..start + node.len].iter_mut().for_each(|r| *r = true);
                }
            }
        }
        read
    }

    pub fn forward<T: Real>(&self, ws: &mut Workspace<T>, inputs: &[f64], params: &[T]) -> Result<(), GraphError> {
        if inputs.len() < self.n_inputs {
            return Err(GraphError::UnboundInput {
                need: self.n_inputs,
                got: inputs.len(),
            });
        }
        let Workspace {
            values, param_base, ..
        } = ws;
        for (i, n) in self.nodes.iter().enumerate() {
            if let Op::Param(p) = &n.op {
                let set = match p.selector {
                    None => 0,
                    Some(s) => {
                        let v = inputs[s];
                        if v < 0.0 || v.fract() != 0.0 || v as usize >= p.sets.len() {
                            return Err(GraphError::UnknownQualifier {
                                value: v,
                                known: p.sets.len(),
                            });
                        }
                        v as usize
                    }
                };
                param_base[i] = p.sets[set];
                continue;
            }
            if let Op::Const(_) = n.op {
                continue;
            }
            let (before, after) = values.split_at_mut(n.offset);
            let out = &mut after[..n.len];
            let val = |id: NodeId| self.value(id, before, params, param_base);
            match &n.op {
                Op::Const(_) | Op::Param(_) => unreachable!(),
                Op::Input(o) => {
                    for (j, v) in out.iter_mut().enumerate() {
                        *v = T::from_f64(inputs[o + j]);
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (val(*a), val(*b));
                    for (j, v) in out.iter_mut().enumerate() {
                        *v = at(a, j) + at(b, j);
                    }
                }
                Op::Sub(a, b) => {
                    let (a, b) = (val(*a), val(*b));
                    for (j, v) in out.iter_mut().enumerate() {
                        *v = at(a, j) - at(b, j);
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (val(*a), val(*b));
                    for (j, v) in out.iter_mut().enumerate() {
                        *v = at(a, j) * at(b, j);
                    }
                }
                Op::Div(a, b) => {
                    let (a, b) = (val(*a), val(*b));
                    for (j, v) in out.iter_mut().enumerate() {
                        let d = at(b, j);
                        if d == T::zero() {
                            return Err(GraphError::DivByZero(i));
                        }
                        *v = at(a, j) / d;
                    }
                }
                Op::Exp(a) => {
                    for (v, x) in out.iter_mut().zip(val(*a)) {
                        *v = x.exp();
                    }
                }
                Op::Square(a) => {
                    for (v, x) in out.iter_mut().zip(val(*a)) {
                        *v = *x * *x;
                    }
                }
                Op::Sigmoid(a) => {
                    for (v, x) in out.iter_mut().zip(val(*a)) {
                        *v = sigmoid(*x);
                    }
                }
                Op::Relu(a) => {
                    for (v, x) in out.iter_mut().zip(val(*a)) {
                        *v = if *x > T::zero() { *x } else { T::zero() };
                    }
                }
                Op::Sum(a) => {
                    out[0] = val(*a).iter().fold(T::zero(), |s, x| s + *x);
                }
                Op::Softmax(a) => {
                    let x = val(*a);
                    let m = x.iter().copied().fold(x[0], |m, v| if v > m { v } else { m });
                    let mut total = T::zero();
                    for (v, xi) in out.iter_mut().zip(x) {
                        *v = (*xi - m).exp();
                        total = total + *v;
                    }
                    for v in out.iter_mut() {
                        *v = *v / total;
                    }
                }
                Op::StopGradient(a) => out.copy_from_slice(val(*a)),
                Op::Concat(xs) => {
                    let mut k = 0;
                    for &x in xs {
                        let src = val(x);
                        out[k..k + src.len()].copy_from_slice(src);
                        k += src.len();
                    }
                }
                Op::MatVec { m, x, cols, .. } => {
                    let (m, x) = (val(*m), val(*x));
                    for (r, v) in out.iter_mut().enumerate() {
                        *v = dot(&m[r * cols..(r + 1) * cols], x);
                    }
                }
            }
        }
        let out = self.output();
        if self.value(out, values, params, param_base).iter().any(|v| !v.is_finite()) {
            return Err(GraphError::NonFinite(out));
        }
        Ok(())
    }

    pub fn output_values<'a, T: Real>(&self, ws: &'a Workspace<T>) -> &'a [T] {
        let n = &self.nodes[self.output()];
        &ws.values[n.offset..n.offset + n.len]
    }

    /// Values of an arbitrary non-parameter node after `forward`.
    pub fn node_values<'a, T: Real>(&self, ws: &'a Workspace<T>, id: NodeId) -> &'a [T] {
        let n = &self.nodes[id];
        assert!(!matches!(n.op, Op::Param(_)), "parameter nodes have no storage");
        &ws.values[n.offset..n.offset + n.len]
    }

    /// Accumulates `seed · d(output)/d(params)` into `grad`. Requires a
    /// preceding `forward` on the same workspace.
    pub fn backward(&self, ws: &mut Workspace<f64>, params: &[f64], seed: &[f64], grad: &mut [f64]) {
        let out = self.output();
        let Workspace {
            values,
            adj,
            param_base,
        } = ws;
        adj.fill(0.0);
        if !self.nodes[out].grad {
            return;
        }
        let on = &self.nodes[out];
        adj[on.offset..on.offset + on.len].copy_from_slice(seed);
        let mut g = Vec::new();

        for i in (0..self.nodes.len()).rev() {
            let n = &self.nodes[i];
            if !n.grad || matches!(n.op, Op::Param(_)) {
                continue;
            }
            g.clear();
            g.extend_from_slice(&adj[n.offset..n.offset + n.len]);
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            let val = |id: NodeId| self.value(id, values, params, param_base);
            let y = &values[n.offset..n.offset + n.len];
            let mut acc = |id: NodeId, f: &dyn Fn(usize) -> f64| {
                let t = &self.nodes[id];
                if !t.grad {
                    return;
                }
                let target = if let Op::Param(_) = t.op {
                    &mut grad[param_base[id]..param_base[id] + t.len]
                } else {
                    &mut adj[t.offset..t.offset + t.len]
                };
                // broadcast operands of element-wise ops collect every lane
                if target.len() == 1 && n.len > 1 && !matches!(n.op, Op::Concat(_)) {
                    target[0] += (0..n.len).map(f).sum::<f64>();
                } else {
                    for (j, t) in target.iter_mut().enumerate() {
                        *t += f(j);
                    }
                }
            };
            match &n.op {
                Op::Const(_) | Op::Input(_) | Op::Param(_) | Op::StopGradient(_) => {}
                Op::Add(a, b) => {
                    acc(*a, &|j| g[j]);
                    acc(*b, &|j| g[j]);
                }
                Op::Sub(a, b) => {
                    acc(*a, &|j| g[j]);
                    acc(*b, &|j| -g[j]);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    acc(*a, &|j| g[j] * at(bv, j));
                    acc(*b, &|j| g[j] * at(av, j));
                }
                Op::Div(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    acc(*a, &|j| g[j] / at(bv, j));
                    acc(*b, &|j| -g[j] * at(av, j) / (at(bv, j) * at(bv, j)));
                }
                Op::Exp(a) => acc(*a, &|j| g[j] * y[j]),
                Op::Square(a) => {
                    let x = val(*a);
                    acc(*a, &|j| g[j] * 2.0 * x[j]);
                }
                Op::Sigmoid(a) => acc(*a, &|j| g[j] * y[j] * (1.0 - y[j])),
                Op::Relu(a) => {
                    let x = val(*a);
                    acc(*a, &|j| if x[j] > 0.0 { g[j] } else { 0.0 });
                }
                Op::Sum(a) => acc(*a, &|_| g[0]),
                Op::Softmax(a) => {
                    let gy: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                    acc(*a, &|j| y[j] * (g[j] - gy));
                }
                Op::Concat(xs) => {
                    let mut k = 0;
                    for &x in xs {
                        let len = self.nodes[x].len;
                        acc(x, &|j| g[k + j]);
                        k += len;
                    }
                }
                Op::MatVec { m, x, rows, cols } => {
                    let (mv, xv) = (val(*m), val(*x));
                    let (rows, cols) = (*rows, *cols);
                    if self.nodes[*m].grad {
                        let t = &self.nodes[*m];
                        let target = if let Op::Param(_) = t.op {
                            &mut grad[param_base[*m]..param_base[*m] + rows * cols]
                        } else {
                            &mut adj[t.offset..t.offset + rows * cols]
                        };
                        for r in 0..rows {
                            let gr = g[r];
                            if gr != 0.0 {
                                for (t, xc) in target[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                                    *t += gr * xc;
                                }
                            }
                        }
                    }
                    if self.nodes[*x].grad {
                        let t = &self.nodes[*x];
                        let target = if let Op::Param(_) = t.op {
                            &mut grad[param_base[*x]..param_base[*x] + cols]
                        } else {
                            &mut adj[t.offset..t.offset + cols]
                        };
                        for r in 0..rows {
                            let gr = g[r];
                            if gr != 0.0 {
                                for (t, m) in target.iter_mut().zip(&mv[r * cols..(r + 1) * cols]) {
                                    *t += gr * m;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Logistic function. For moderately negative `x` the value is computed as
/// `1 - S(-x)`, which makes `S(x) + S(-x)` exactly one there (`1 - y` is
/// exact for `y` in `[0.5, 1]`). Far in the tail the direct form keeps the
/// tiny value, and with it the gradient, from rounding to zero.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else if x >= T::from_f64(-30.0) {
        T::one() - T::one() / (T::one() + x.exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // four partial sums let the compiler keep several lanes busy
    let mut s = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            s[k] = s[k] + a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut tail = T::zero();
    for j in chunks * 4..a.len() {
        tail = tail + a[j] * b[j];
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval1(build: impl Fn(&mut Graph, NodeId) -> NodeId, x: f64) -> (f64, f64) {
        let mut g = Graph::new();
        let p = g.param(ParamRef { sets: vec![0], selector: None }, 1);
        let out = build(&mut g, p);
        g.set_output(out);
        let mut ws = Workspace::new(&g);
        g.forward(&mut ws, &[], &[x]).unwrap();
        let y = g.output_values(&ws)[0];
        let mut grad = [0.0];
        g.backward(&mut ws, &[x], &[1.0], &mut grad);
        (y, grad[0])
    }

    #[test]
    fn concat_of_scalars_routes_each_lane() {
        let mut g = Graph::new();
        let a = g.param(ParamRef { sets: vec![0], selector: None }, 1);
        let b = g.param(ParamRef { sets: vec![1], selector: None }, 1);
        let c = g.param(ParamRef { sets: vec![2], selector: None }, 1);
        let cat = g.concat(&[a, b, c]);
        let w = g.constant(&[1.0, 10.0, 100.0]);
        let out = g.mul(cat, w);
        let out = g.sum(out);
        g.set_output(out);
        let mut ws = Workspace::new(&g);
        let p = [0.1, 0.2, 0.3];
        g.forward(&mut ws, &[], &p).unwrap();
        let mut grad = [0.0; 3];
        g.backward(&mut ws, &p, &[1.0], &mut grad);
        assert_eq!(grad, [1.0, 10.0, 100.0]);
    }

    #[test]
    fn sigmoid_values_and_slope() {
        assert_eq!(eval1(|g, p| g.sigmoid(p), 0.0), (0.5, 0.25));
        let (y, _) = eval1(|g, p| g.sigmoid(p), 5.0);
        assert!((y - 0.993307).abs() < 1e-6);
    }

    #[test]
    fn relu_and_square() {
        assert_eq!(eval1(|g, p| g.relu(p), -3.0).0, 0.0);
        assert_eq!(eval1(|g, p| g.square(p), 3.0), (9.0, 6.0));
    }

    #[test]
    fn chain_through_product() {
        // S(w * x) with x = 2 at w = 0: d/dw = S'(0) * 2 = 0.5
        let (_, d) = eval1(
            |g, w| {
                let x = g.scalar(2.0);
                let z = g.mul(w, x);
                g.sigmoid(z)
            },
            0.0,
        );
        assert_eq!(d, 0.5);
    }

    #[test]
    fn stop_gradient_blocks() {
        let (y, d) = eval1(
            |g, p| {
                let s = g.stop_gradient(p);
                g.square(s)
            },
            3.0,
        );
        assert_eq!((y, d), (9.0, 0.0));
    }

    #[test]
    fn division_by_zero_is_reported() {
        let mut g = Graph::new();
        let a = g.scalar(1.0);
        let z = g.scalar(0.0);
        let d = g.div(a, z);
        g.set_output(d);
        let mut ws = Workspace::<f64>::new(&g);
        assert_eq!(g.forward(&mut ws, &[], &[]), Err(GraphError::DivByZero(d)));
    }

    #[test]
    fn missing_input_is_reported() {
        let mut g = Graph::new();
        let x = g.input(0, 3);
        g.set_output(x);
        let mut ws = Workspace::<f64>::new(&g);
        assert!(matches!(
            g.forward(&mut ws, &[1.0], &[]),
            Err(GraphError::UnboundInput { need: 3, got: 1 })
        ));
    }

    #[test]
    fn qualified_parameters_follow_selector() {
        let mut g = Graph::new();
        let p = g.param(ParamRef { sets: vec![0, 1, 2], selector: Some(0) }, 1);
        let c = g.stop_gradient(p);
        g.set_output(c);
        let mut ws = Workspace::<f64>::new(&g);
        g.forward(&mut ws, &[2.0], &[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(g.output_values(&ws), &[30.0]);
        assert!(matches!(
            g.forward(&mut ws, &[3.0], &[10.0, 20.0, 30.0]),
            Err(GraphError::UnknownQualifier { .. })
        ));
    }

    #[test]
    fn matvec_gradients() {
        let mut g = Graph::new();
        let m = g.param(ParamRef { sets: vec![0], selector: None }, 6);
        let x = g.param(ParamRef { sets: vec![6], selector: None }, 3);
        let y = g.matvec(m, x, 2, 3);
        let s = g.sum(y);
        g.set_output(s);
        let params = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 1.0, -1.0, 2.0];
        let mut ws = Workspace::new(&g);
        g.forward(&mut ws, &[], &params).unwrap();
        assert_eq!(g.output_values(&ws), &[(1.0 - 2.0 + 6.0) + (4.0 - 5.0 + 12.0)]);
        let mut grad = [0.0; 9];
        g.backward(&mut ws, &params, &[1.0], &mut grad);
        assert_eq!(grad, [1.0, -1.0, 2.0, 1.0, -1.0, 2.0, 5.0, 7.0, 9.0]);
    }
}
