//! Wengert tape: forward ops are recorded in topological order, then
//! replayed in reverse to accumulate gradients.

use super::tensor::Tensor;
use super::LOG_FLOOR;

/// Index of a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Leaf: parameter or constant input.
    Input,
    Matmul(NodeId, NodeId),
    /// a · bᵀ
    MatmulNt(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// matrix + broadcast 1×k bias row
    AddBias(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Relu(NodeId),
    RowSoftmax(NodeId),
    /// ln with inputs clamped to LOG_FLOOR
    Log(NodeId),
    Exp(NodeId),
    RowSum(NodeId),
    SumAll(NodeId),
    GatherRows(NodeId, Vec<usize>),
    /// only the mask is needed for the reverse pass
    MaskedAssign(NodeId, Tensor),
    L2NormalizeRows(NodeId),
    Scale(NodeId, f64),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `id`; nodes unreachable from the loss get
    /// an all-zero gradient of the node's shape.
    pub fn wrt(&self, id: NodeId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[id.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

/// Records primitive operations for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        debug_assert!(value.all_finite(), "forward pass produced a non-finite value");
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op });
        id
    }

    /// Register a leaf tensor (parameter or constant).
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Input)
    }

    /// Register a 1×1 constant.
    pub fn constant(&mut self, v: f64) -> NodeId {
        self.input(Tensor::scalar(v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::Matmul(a, b))
    }

    /// a · bᵀ
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_nt(self.value(b));
        self.push(v, Op::MatmulNt(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).add(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// a − b, composed from add and scale.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    /// Add a 1×k bias row to every row of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let v = self.value(a).add_bias(self.value(bias));
        self.push(v, Op::AddBias(a, bias))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).hadamard(self.value(b));
        self.push(v, Op::Mul(a, b))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).relu();
        self.push(v, Op::Relu(a))
    }

    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).row_softmax();
        self.push(v, Op::RowSoftmax(a))
    }

    /// ln with the clamping floor.
    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).ln_clamped();
        self.push(v, Op::Log(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).exp();
        self.push(v, Op::Exp(a))
    }

    /// Per-row sum → rows×1.
    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).row_sum();
        self.push(v, Op::RowSum(a))
    }

    /// Sum of all entries → 1×1.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum_all());
        self.push(v, Op::SumAll(a))
    }

    /// Mean of all entries → 1×1, composed from sum and scale.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Select rows by index (repeats allowed).
    pub fn gather_rows(&mut self, a: NodeId, indices: Vec<usize>) -> NodeId {
        let v = self.value(a).gather_rows(&indices);
        self.push(v, Op::GatherRows(a, indices))
    }

    /// Entries where `mask` is nonzero are replaced by `value`.
    pub fn masked_assign(&mut self, a: NodeId, mask: Tensor, value: f64) -> NodeId {
        let v = self.value(a).masked_assign(&mask, value);
        self.push(v, Op::MaskedAssign(a, mask))
    }

    pub fn l2_normalize_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).l2_normalize_rows();
        self.push(v, Op::L2NormalizeRows(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c))
    }

    /// Reverse pass from a scalar loss node.
    ///
    /// Panics with a contract error if `loss` is not 1×1. The tape is in
    /// topological order by construction, so one reverse sweep visits each
    /// node exactly once.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert!(
            self.value(loss).is_scalar(),
            "contract error: backward needs a 1x1 loss node, got {}x{}",
            self.value(loss).rows(),
            self.value(loss).cols()
        );
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            let up = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(&self.nodes[i].op, &self.nodes[i].value, &up, &mut grads);
            grads[i] = Some(up);
        }

        Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        }
    }

    fn accumulate(&self, op: &Op, out: &Tensor, up: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut add_to = |id: NodeId, g: Tensor| match &mut grads[id.0] {
            Some(acc) => *acc = acc.add(&g),
            slot @ None => *slot = Some(g),
        };

        match op {
            Op::Input => {}
            Op::Matmul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                add_to(*a, up.matmul_nt(bv));
                add_to(*b, av.transpose().matmul(up));
            }
            Op::MatmulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                add_to(*a, up.matmul(bv));
                add_to(*b, up.transpose().matmul(av));
            }
            Op::Add(a, b) => {
                add_to(*a, up.clone());
                add_to(*b, up.clone());
            }
            Op::AddBias(a, bias) => {
                add_to(*a, up.clone());
                let mut bg = Tensor::zeros(1, up.cols());
                for r in 0..up.rows() {
                    for (g, &u) in bg.row_mut(0).iter_mut().zip(up.row(r)) {
                        *g += u;
                    }
                }
                add_to(*bias, bg);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                add_to(*a, up.hadamard(bv));
                add_to(*b, up.hadamard(av));
            }
            Op::Relu(a) => {
                let av = self.value(*a);
                add_to(*a, up.hadamard(&av.map(|v| if v > 0.0 { 1.0 } else { 0.0 })));
            }
            Op::RowSoftmax(a) => {
                // dx_i = y_i (dy_i − Σ_j dy_j y_j) per row
                let mut g = up.hadamard(out);
                for r in 0..g.rows() {
                    let dot: f64 = g.row(r).iter().sum();
                    for c in 0..g.cols() {
                        let y = out.at(r, c);
                        g.set(r, c, y * (up.at(r, c) - dot));
                    }
                }
                add_to(*a, g);
            }
            Op::Log(a) => {
                // zero slope inside the clamp region
                let av = self.value(*a);
                let g = up.hadamard(&av.map(|v| if v > LOG_FLOOR { 1.0 / v } else { 0.0 }));
                add_to(*a, g);
            }
            Op::Exp(a) => add_to(*a, up.hadamard(out)),
            Op::RowSum(a) => {
                let av = self.value(*a);
                let mut g = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    let u = up.at(r, 0);
                    for c in 0..av.cols() {
                        g.set(r, c, u);
                    }
                }
                add_to(*a, g);
            }
            Op::SumAll(a) => {
                let av = self.value(*a);
                let u = up.scalar_value();
                add_to(*a, Tensor::zeros(av.rows(), av.cols()).map(|_| u));
            }
            Op::GatherRows(a, indices) => {
                let av = self.value(*a);
                let mut g = Tensor::zeros(av.rows(), av.cols());
                for (r, &i) in indices.iter().enumerate() {
                    for c in 0..av.cols() {
                        g.set(i, c, g.at(i, c) + up.at(r, c));
                    }
                }
                add_to(*a, g);
            }
            Op::MaskedAssign(a, mask) => {
                add_to(*a, up.hadamard(&mask.map(|m| if m != 0.0 { 0.0 } else { 1.0 })));
            }
            Op::L2NormalizeRows(a) => {
                let av = self.value(*a);
                let mut g = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    let norm = av.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                    let n = norm.max(LOG_FLOOR);
                    if norm > LOG_FLOOR {
                        let dot: f64 = out.row(r).iter().zip(up.row(r)).map(|(&y, &u)| y * u).sum();
                        for c in 0..av.cols() {
                            g.set(r, c, (up.at(r, c) - out.at(r, c) * dot) / n);
                        }
                    } else {
                        for c in 0..av.cols() {
                            g.set(r, c, up.at(r, c) / n);
                        }
                    }
                }
                add_to(*a, g);
            }
            Op::Scale(a, c) => add_to(*a, up.scale(*c)),
        }
    }
}
