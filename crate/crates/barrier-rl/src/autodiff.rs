//! Minimal reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Tape`] is built once (define-then-run): every node's shape is checked
//! at construction time, named inputs are registered up front, and the node
//! list is a topological order by construction. [`Tape::forward`] binds input
//! values and caches every intermediate; [`Tape::backward`] walks the list in
//! exact reverse order and accumulates adjoints, returning the gradient of
//! the scalar output with respect to each registered input.
//!
//! The op set is deliberately small: what a multi-step model rollout and a
//! log-barrier objective need, nothing more. Arrays are dense, row-major,
//! 64-bit; there is no broadcasting beyond matrix-vector products and the
//! bias row in `affine`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::{self, outer, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds, exposed for per-op test sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Input,
    Add,
    Mul,
    MatMul,
    Tanh,
    Exp,
    Log,
    Sum,
    Max,
    Affine,
    GaussianLogPdf,
    Softplus,
}

pub const ALL_OP_KINDS: [OpKind; 12] = [
    OpKind::Input,
    OpKind::Add,
    OpKind::Mul,
    OpKind::MatMul,
    OpKind::Tanh,
    OpKind::Exp,
    OpKind::Log,
    OpKind::Sum,
    OpKind::Max,
    OpKind::Affine,
    OpKind::GaussianLogPdf,
    OpKind::Softplus,
];

#[derive(Clone, Debug)]
enum Op {
    /// Named leaf bound at forward time.
    Input { name: String },
    /// Unnamed leaf with a fixed value (an input pre-bound at construction).
    Const,
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Softplus(NodeId),
    /// Full reduction to a scalar.
    Sum(NodeId),
    /// Elementwise maximum; at exact ties the adjoint routes to the first operand.
    Max(NodeId, NodeId),
    /// y = x @ w + b, with b broadcast across rows.
    Affine { x: NodeId, w: NodeId, b: NodeId },
    /// Elementwise log N(x; mean, exp(log_var)).
    GaussianLogPdf { x: NodeId, mean: NodeId, log_var: NodeId },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Input { .. } | Op::Const => OpKind::Input,
            Op::Add(..) => OpKind::Add,
            Op::Mul(..) => OpKind::Mul,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Tanh(..) => OpKind::Tanh,
            Op::Exp(..) => OpKind::Exp,
            Op::Log(..) => OpKind::Log,
            Op::Softplus(..) => OpKind::Softplus,
            Op::Sum(..) => OpKind::Sum,
            Op::Max(..) => OpKind::Max,
            Op::Affine { .. } => OpKind::Affine,
            Op::GaussianLogPdf { .. } => OpKind::GaussianLogPdf,
        }
    }
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Option<Tensor>,
    adjoint: Option<Tensor>,
}

pub type Bindings = BTreeMap<String, Tensor>;

pub struct Tape {
    nodes: Vec<Node>,
    inputs: BTreeMap<String, NodeId>,
    output: Option<NodeId>,
    forward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), inputs: BTreeMap::new(), output: None, forward_done: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op_kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.keys().map(|s| s.as_str())
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Option<Tensor>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, shape, value, adjoint: None });
        self.forward_done = false;
        id
    }

    /// Register a named input with a fixed shape.
    pub fn input(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        if self.inputs.contains_key(name) {
            return Err(Error::DuplicateInput(name.to_string()));
        }
        let id = self.push(Op::Input { name: name.to_string() }, shape.to_vec(), None);
        self.inputs.insert(name.to_string(), id);
        Ok(id)
    }

    /// A leaf with a fixed value; participates in forward but receives no adjoint.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(Op::Const, shape, Some(value))
    }

    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.same_shape(a, b, "add")?;
        Ok(self.push(Op::Add(a, b), shape, None))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.same_shape(a, b, "mul")?;
        Ok(self.push(Op::Mul(a, b), shape, None))
    }

    /// Multiply every element by a constant. Sugar over `mul` with a filled constant.
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let shape = self.nodes[a.0].shape.clone();
        let k = self.constant(Tensor::filled(&shape, c));
        self.mul(a, k)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = &self.nodes[a.0].shape;
        let sb = &self.nodes[b.0].shape;
        let shape = match (sa.len(), sb.len()) {
            (2, 2) if sa[1] == sb[0] => vec![sa[0], sb[1]],
            (2, 1) if sa[1] == sb[0] => vec![sa[0]],
            (1, 2) if sa[0] == sb[0] => vec![sb[1]],
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "matmul on {sa:?} x {sb:?}"
                )))
            }
        };
        Ok(self.push(Op::MatMul(a, b), shape, None))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let shape = self.nodes[a.0].shape.clone();
        self.push(Op::Tanh(a), shape, None)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let shape = self.nodes[a.0].shape.clone();
        self.push(Op::Exp(a), shape, None)
    }

    /// Natural log. Evaluating at x <= 0 is an immediate forward-time error.
    pub fn log(&mut self, a: NodeId) -> NodeId {
        let shape = self.nodes[a.0].shape.clone();
        self.push(Op::Log(a), shape, None)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let shape = self.nodes[a.0].shape.clone();
        self.push(Op::Softplus(a), shape, None)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a), vec![], None)
    }

    pub fn max(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.same_shape(a, b, "max")?;
        Ok(self.push(Op::Max(a, b), shape, None))
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let sx = &self.nodes[x.0].shape;
        let sw = &self.nodes[w.0].shape;
        let sb = &self.nodes[b.0].shape;
        if sw.len() != 2 || sb.len() != 1 || sb[0] != sw[1] {
            return Err(Error::ShapeMismatch(format!(
                "affine weight/bias shapes {sw:?} / {sb:?}"
            )));
        }
        let shape = match sx.len() {
            2 if sx[1] == sw[0] => vec![sx[0], sw[1]],
            1 if sx[0] == sw[0] => vec![sw[1]],
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "affine input {sx:?} vs weight {sw:?}"
                )))
            }
        };
        Ok(self.push(Op::Affine { x, w, b }, shape, None))
    }

    /// Elementwise Gaussian log-density, log N(x; mean, exp(log_var)).
    pub fn gaussian_logpdf(&mut self, x: NodeId, mean: NodeId, log_var: NodeId) -> Result<NodeId> {
        let shape = self.same_shape(x, mean, "gaussian_logpdf")?;
        if self.nodes[log_var.0].shape != shape {
            return Err(Error::ShapeMismatch(format!(
                "gaussian_logpdf log_var shape {:?} vs {shape:?}",
                self.nodes[log_var.0].shape
            )));
        }
        Ok(self.push(Op::GaussianLogPdf { x, mean, log_var }, shape, None))
    }

    /// Smooth clamp into `[lo, hi]`; matches [`tensor::softclamp`] bit for bit.
    pub fn softclamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        let hi2 = hi - std::f64::consts::LN_2;
        let shape = self.nodes[a.0].shape.clone();
        let hi_t = self.constant(Tensor::filled(&shape, hi2));
        let lo_t = self.constant(Tensor::filled(&shape, lo));
        // hi2 - softplus(hi2 - x)
        let d = self.sub(hi_t, a)?;
        let sp = self.softplus(d);
        let y = self.sub(hi_t, sp)?;
        // lo + softplus(y - lo)
        let d2 = self.sub(y, lo_t)?;
        let sp2 = self.softplus(d2);
        self.add(lo_t, sp2)
    }

    /// Logistic sigmoid as exp(-softplus(-x)); matches [`tensor::sigmoid`].
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let neg = self.scale(a, -1.0)?;
        let sp = self.softplus(neg);
        let nsp = self.scale(sp, -1.0)?;
        Ok(self.exp(nsp))
    }

    pub fn set_output(&mut self, id: NodeId) {
        self.output = Some(id);
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<Vec<usize>> {
        let sa = &self.nodes[a.0].shape;
        let sb = &self.nodes[b.0].shape;
        if sa != sb {
            return Err(Error::ShapeMismatch(format!("{what} on {sa:?} vs {sb:?}")));
        }
        Ok(sa.clone())
    }

    /// Run the forward pass with the given input bindings and return the
    /// output node's value. All intermediate values are cached.
    pub fn forward(&mut self, bindings: &Bindings) -> Result<Tensor> {
        let out = self.output.ok_or(Error::NoOutput)?;
        // Bind inputs first so shape errors surface before any compute.
        for (name, id) in &self.inputs {
            let value = bindings
                .get(name)
                .ok_or_else(|| Error::UnboundInput(name.clone()))?;
            if value.shape() != self.nodes[id.0].shape {
                return Err(Error::ShapeMismatch(format!(
                    "input `{name}` registered as {:?}, bound with {:?}",
                    self.nodes[id.0].shape,
                    value.shape()
                )));
            }
            self.nodes[id.0].value = Some(value.clone());
        }
        for i in 0..self.nodes.len() {
            let value = self.eval_node(i)?;
            self.nodes[i].value = Some(value);
        }
        self.forward_done = true;
        Ok(self.nodes[out.0].value.clone().expect("forward value cached"))
    }

    fn eval_node(&self, i: usize) -> Result<Tensor> {
        let val = |id: NodeId| -> &Tensor {
            self.nodes[id.0].value.as_ref().expect("operand evaluated before consumer")
        };
        let node = &self.nodes[i];
        Ok(match &node.op {
            Op::Input { name } => match &node.value {
                Some(v) => v.clone(),
                None => return Err(Error::UnboundInput(name.clone())),
            },
            Op::Const => node.value.clone().expect("constant has a value"),
            Op::Add(a, b) => val(*a).add(val(*b))?,
            Op::Mul(a, b) => val(*a).mul(val(*b))?,
            Op::MatMul(a, b) => val(*a).matmul(val(*b))?,
            Op::Tanh(a) => val(*a).map(f64::tanh),
            Op::Exp(a) => val(*a).map(f64::exp),
            Op::Log(a) => {
                let v = val(*a);
                if let Some(&bad) = v.data().iter().find(|&&x| x <= 0.0) {
                    return Err(Error::LogDomain(bad));
                }
                v.map(f64::ln)
            }
            Op::Softplus(a) => val(*a).map(tensor::softplus),
            Op::Sum(a) => Tensor::scalar(val(*a).sum()),
            Op::Max(a, b) => val(*a).zip_map(val(*b), f64::max)?,
            Op::Affine { x, w, b } => tensor::affine(val(*x), val(*w), val(*b))?,
            Op::GaussianLogPdf { x, mean, log_var } => {
                let (xv, mv, lv) = (val(*x), val(*mean), val(*log_var));
                let mut out = Vec::with_capacity(xv.len());
                for k in 0..xv.len() {
                    let d = xv.data()[k] - mv.data()[k];
                    let l = lv.data()[k];
                    out.push(-0.5 * (LN_2PI + l + d * d * (-l).exp()));
                }
                Tensor::from_vec(xv.shape(), out)?
            }
        })
    }

    /// Gradient of the scalar output with respect to every registered input.
    pub fn backward(&mut self) -> Result<BTreeMap<String, Tensor>> {
        let out = self.output.ok_or(Error::NoOutput)?;
        self.backward_from(out)
    }

    /// Backward pass seeded at an arbitrary scalar node. Used when one tape
    /// carries several scalar functionals (e.g. reward and cost heads of the
    /// same rollout).
    pub fn backward_from(&mut self, seed: NodeId) -> Result<BTreeMap<String, Tensor>> {
        if !self.forward_done {
            return Err(Error::BackwardBeforeForward);
        }
        let seed_shape = &self.nodes[seed.0].shape;
        if !seed_shape.is_empty() {
            return Err(Error::NotScalar(seed_shape.clone()));
        }
        for node in &mut self.nodes {
            node.adjoint = None;
        }
        self.nodes[seed.0].adjoint = Some(Tensor::scalar(1.0));

        for i in (0..=seed.0).rev() {
            let Some(grad) = self.nodes[i].adjoint.clone() else { continue };
            self.propagate(i, &grad)?;
        }

        let mut grads = BTreeMap::new();
        for (name, id) in &self.inputs {
            let g = match &self.nodes[id.0].adjoint {
                Some(a) => a.clone(),
                None => Tensor::zeros(&self.nodes[id.0].shape),
            };
            grads.insert(name.clone(), g);
        }
        self.forward_done = true;
        Ok(grads)
    }

    fn accumulate(&mut self, target: NodeId, delta: Tensor) -> Result<()> {
        // Constants are gradient sinks; skipping them avoids wasted matmuls
        // on frozen model parameters and noise tensors in rollout tapes.
        if matches!(self.nodes[target.0].op, Op::Const) {
            return Ok(());
        }
        match &mut self.nodes[target.0].adjoint {
            Some(a) => a.add_assign(&delta)?,
            slot @ None => *slot = Some(delta),
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, grad: &Tensor) -> Result<()> {
        let val = |id: NodeId| -> Tensor {
            self.nodes[id.0].value.clone().expect("forward value cached")
        };
        let own = self.nodes[i].value.clone().expect("forward value cached");
        match self.nodes[i].op.clone() {
            Op::Input { .. } | Op::Const => {}
            Op::Add(a, b) => {
                self.accumulate(a, grad.clone())?;
                self.accumulate(b, grad.clone())?;
            }
            Op::Mul(a, b) => {
                let ga = grad.mul(&val(b))?;
                let gb = grad.mul(&val(a))?;
                self.accumulate(a, ga)?;
                self.accumulate(b, gb)?;
            }
            Op::MatMul(a, b) => {
                let (ga, gb) = matmul_backward(&val(a), &val(b), grad)?;
                self.accumulate(a, ga)?;
                self.accumulate(b, gb)?;
            }
            Op::Tanh(a) => {
                let g = grad.zip_map(&own, |g, y| g * (1.0 - y * y))?;
                self.accumulate(a, g)?;
            }
            Op::Exp(a) => {
                let g = grad.mul(&own)?;
                self.accumulate(a, g)?;
            }
            Op::Log(a) => {
                let g = grad.zip_map(&val(a), |g, x| g / x)?;
                self.accumulate(a, g)?;
            }
            Op::Softplus(a) => {
                let g = grad.zip_map(&val(a), |g, x| g * tensor::sigmoid(x))?;
                self.accumulate(a, g)?;
            }
            Op::Sum(a) => {
                let shape = self.nodes[a.0].shape.clone();
                let g = Tensor::filled(&shape, grad.item());
                self.accumulate(a, g)?;
            }
            Op::Max(a, b) => {
                // At exact ties the full adjoint routes to the first operand.
                let (va, vb) = (val(a), val(b));
                let ga = grad.zip_map(&va.zip_map(&vb, |x, y| if x >= y { 1.0 } else { 0.0 })?, |g, m| g * m)?;
                let gb = grad.zip_map(&va.zip_map(&vb, |x, y| if x >= y { 0.0 } else { 1.0 })?, |g, m| g * m)?;
                self.accumulate(a, ga)?;
                self.accumulate(b, gb)?;
            }
            Op::Affine { x, w, b } => {
                let (xv, wv) = (val(x), val(w));
                match xv.rank() {
                    2 => {
                        let gx = grad.matmul(&wv.transpose()?)?;
                        let gw = xv.transpose()?.matmul(grad)?;
                        let gb = grad.col_sum()?;
                        self.accumulate(x, gx)?;
                        self.accumulate(w, gw)?;
                        self.accumulate(b, gb)?;
                    }
                    1 => {
                        let gx = wv.matmul(grad)?;
                        let gw = outer(xv.data(), grad.data());
                        self.accumulate(x, gx)?;
                        self.accumulate(w, gw)?;
                        self.accumulate(b, grad.clone())?;
                    }
                    _ => unreachable!(),
                }
            }
            Op::GaussianLogPdf { x, mean, log_var } => {
                let (xv, mv, lv) = (val(x), val(mean), val(log_var));
                let mut gx = Vec::with_capacity(xv.len());
                let mut gm = Vec::with_capacity(xv.len());
                let mut gl = Vec::with_capacity(xv.len());
                for k in 0..xv.len() {
                    let d = xv.data()[k] - mv.data()[k];
                    let inv_var = (-lv.data()[k]).exp();
                    let g = grad.data()[k];
                    gx.push(g * (-d * inv_var));
                    gm.push(g * (d * inv_var));
                    gl.push(g * 0.5 * (d * d * inv_var - 1.0));
                }
                self.accumulate(x, Tensor::from_vec(xv.shape(), gx)?)?;
                self.accumulate(mean, Tensor::from_vec(xv.shape(), gm)?)?;
                self.accumulate(log_var, Tensor::from_vec(xv.shape(), gl)?)?;
            }
        }
        Ok(())
    }

    pub fn value(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].value.as_ref()
    }

    pub fn adjoint(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].adjoint.as_ref()
    }
}

const LN_2PI: f64 = 1.8378770664093453;

fn matmul_backward(a: &Tensor, b: &Tensor, grad: &Tensor) -> Result<(Tensor, Tensor)> {
    match (a.rank(), b.rank()) {
        (2, 2) => Ok((grad.matmul(&b.transpose()?)?, a.transpose()?.matmul(grad)?)),
        (2, 1) => {
            // y = A v: gA = outer(g, v), gv = A^T g
            let ga = outer(grad.data(), b.data());
            let gb = a.transpose()?.matmul(grad)?;
            Ok((ga, gb))
        }
        (1, 2) => {
            // y = v^T B: gv = B g, gB = outer(v, g)
            let ga = b.matmul(grad)?;
            let gb = outer(a.data(), grad.data());
            Ok((ga, gb))
        }
        _ => unreachable!("matmul operand ranks checked at construction"),
    }
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// One coordinate that failed the finite-difference comparison.
#[derive(Clone, Debug)]
pub struct GradCheckFailure {
    pub input: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub pass: bool,
    pub max_rel_err: f64,
    /// (input name, coordinate) of the worst relative error.
    pub worst: Option<(String, usize)>,
    pub failures: Vec<GradCheckFailure>,
    pub coords_checked: usize,
}

/// Absolute floor below which a gradient difference always passes.
pub const GRAD_ABS_FLOOR: f64 = 1e-8;

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(GRAD_ABS_FLOOR);
    (a - b).abs() / scale
}

/// Compare a full analytic gradient against a numeric one, coordinate-wise.
/// A coordinate passes when the difference is under the absolute floor or the
/// relative error is within `tol`.
pub fn compare_gradients(
    input: &str,
    analytic: &[f64],
    numeric: &[f64],
    tol: f64,
    report: &mut GradCheckReport,
) {
    for (idx, (&ad, &fd)) in analytic.iter().zip(numeric).enumerate() {
        let rel = relative_error(ad, fd);
        report.coords_checked += 1;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = Some((input.to_string(), idx));
        }
        let ok = (ad - fd).abs() <= GRAD_ABS_FLOOR || rel <= tol;
        if !ok {
            report.pass = false;
            report.failures.push(GradCheckFailure {
                input: input.to_string(),
                index: idx,
                analytic: ad,
                numeric: fd,
                rel_err: rel,
            });
        }
    }
}

/// Check the tape's backward gradients against central finite differences of
/// its forward pass, coordinate by coordinate over every registered input.
pub fn grad_check(tape: &mut Tape, bindings: &Bindings, h: f64, tol: f64) -> Result<GradCheckReport> {
    assert!(h > 0.0, "finite-difference step must be positive");
    tape.forward(bindings)?;
    let grads = tape.backward()?;

    let mut report =
        GradCheckReport { pass: true, max_rel_err: 0.0, worst: None, failures: Vec::new(), coords_checked: 0 };

    let names: Vec<String> = bindings.keys().cloned().collect();
    for name in &names {
        let base = bindings[name].clone();
        let mut numeric = Vec::with_capacity(base.len());
        for k in 0..base.len() {
            let mut plus = bindings.clone();
            let mut t = base.clone();
            t.data_mut()[k] += h;
            plus.insert(name.clone(), t);
            let f_plus = tape.forward(&plus)?.item();

            let mut minus = bindings.clone();
            let mut t = base.clone();
            t.data_mut()[k] -= h;
            minus.insert(name.clone(), t);
            let f_minus = tape.forward(&minus)?.item();

            numeric.push((f_plus - f_minus) / (2.0 * h));
        }
        let analytic = grads.get(name).expect("gradient for every registered input");
        compare_gradients(name, analytic.data(), &numeric, tol, &mut report);
    }
    // restore caches to the unperturbed point
    tape.forward(bindings)?;
    tape.backward()?;
    Ok(report)
}
