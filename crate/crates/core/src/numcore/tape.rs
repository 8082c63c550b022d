//! Reverse-mode gradient accumulation over an explicit op graph.
//!
//! A [`Tape`] records matrix operations as they execute; [`Tape::backward`]
//! then walks the recording in reverse and accumulates gradients for every
//! node that (transitively) depends on a parameter. Constants entered with
//! [`Tape::leaf`] are skipped during the backward pass, so multiplying by a
//! large fixed adjacency costs nothing extra at train time.

use super::matrix::{self, Matrix, LOG_CLAMP};
use crate::error::{Error, Result};

pub type NodeId = usize;

enum Op {
    Leaf,
    /// out = a · b
    MatMul(NodeId, NodeId),
    /// out = a + b, same shape
    Add(NodeId, NodeId),
    /// out[i][j] = a[i][j] + bias[0][j]
    AddRowBias(NodeId, NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    /// Row-wise Kronecker product: out[i][p·cb + q] = a[i][p] · b[i][q]
    RowKron(NodeId, NodeId),
    /// Elementwise product, same shape
    MulElem(NodeId, NodeId),
    /// Scalar: mean over `rows` of −ln(clamp(probs[row][label]))
    CrossEntropy {
        probs: NodeId,
        rows: Vec<usize>,
        labels: Vec<usize>,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`NodeId`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to the node's value, if the node
    /// participates in the differentiated subgraph.
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Matrix> {
        self.grads.get_mut(id).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enter a constant. No gradient will be computed for it.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Enter a trainable parameter. Backward will produce its gradient.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.nodes.len() - 1
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = matrix::matmul(self.value(a), self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn add_row_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::Shape {
                op: "add_row_bias",
                left: av.shape_str(),
                right: bv.shape_str(),
            });
        }
        let mut out = av.clone();
        for i in 0..out.rows() {
            for j in 0..out.cols() {
                out.set(i, j, out.get(i, j) + bv.get(0, j));
            }
        }
        let rg = self.requires(a) || self.requires(bias);
        Ok(self.push(out, Op::AddRowBias(a, bias), rg))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = matrix::relu(self.value(a));
        let rg = self.requires(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let value = matrix::softmax_rows(self.value(a));
        let rg = self.requires(a);
        self.push(value, Op::SoftmaxRows(a), rg)
    }

    pub fn row_kron(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::Shape {
                op: "row_kron",
                left: av.shape_str(),
                right: bv.shape_str(),
            });
        }
        let (n, ca, cb) = (av.rows(), av.cols(), bv.cols());
        let mut out = Matrix::zeros(n, ca * cb);
        for i in 0..n {
            for p in 0..ca {
                for q in 0..cb {
                    out.set(i, p * cb + q, av.get(i, p) * bv.get(i, q));
                }
            }
        }
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(out, Op::RowKron(a, b), rg))
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).mul_elem(self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::MulElem(a, b), rg))
    }

    /// Mean cross-entropy over the given rows; `labels[i]` pairs with
    /// `rows[i]`. Produces a 1x1 node.
    pub fn cross_entropy(
        &mut self,
        probs: NodeId,
        rows: &[usize],
        labels: &[usize],
    ) -> Result<NodeId> {
        if rows.len() != labels.len() {
            return Err(Error::Alignment(format!(
                "cross_entropy: {} rows vs {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let loss = matrix::cross_entropy_rows(self.value(probs), rows, labels)?;
        let value = Matrix::new(1, 1, vec![loss])?;
        let rg = self.requires(probs);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                probs,
                rows: rows.to_vec(),
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    /// Accumulate gradients of the scalar node `loss` with respect to every
    /// parameter node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_node = &self.nodes[loss];
        if loss_node.value.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                left: loss_node.value.shape_str(),
                right: "1x1 scalar".to_string(),
            });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss] = Some(Matrix::new(1, 1, vec![1.0])?);

        for id in (0..=loss).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: NodeId, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires(*a) {
                    let delta = matrix::matmul(g, &self.value(*b).transpose())?;
                    accumulate(&mut grads[*a], delta);
                }
                if self.requires(*b) {
                    let delta = matrix::matmul(&self.value(*a).transpose(), g)?;
                    accumulate(&mut grads[*b], delta);
                }
            }
            Op::Add(a, b) => {
                if self.requires(*a) {
                    accumulate(&mut grads[*a], g.clone());
                }
                if self.requires(*b) {
                    accumulate(&mut grads[*b], g.clone());
                }
            }
            Op::AddRowBias(a, bias) => {
                if self.requires(*a) {
                    accumulate(&mut grads[*a], g.clone());
                }
                if self.requires(*bias) {
                    let mut delta = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            delta.set(0, j, delta.get(0, j) + g.get(i, j));
                        }
                    }
                    accumulate(&mut grads[*bias], delta);
                }
            }
            Op::Relu(a) => {
                if self.requires(*a) {
                    let x = self.value(*a);
                    let mut delta = g.clone();
                    for i in 0..delta.rows() {
                        for j in 0..delta.cols() {
                            if x.get(i, j) <= 0.0 {
                                delta.set(i, j, 0.0);
                            }
                        }
                    }
                    accumulate(&mut grads[*a], delta);
                }
            }
            Op::SoftmaxRows(a) => {
                if self.requires(*a) {
                    let s = &self.nodes[id].value;
                    let mut delta = Matrix::zeros(s.rows(), s.cols());
                    for i in 0..s.rows() {
                        let dot: f64 = (0..s.cols()).map(|k| g.get(i, k) * s.get(i, k)).sum();
                        for j in 0..s.cols() {
                            delta.set(i, j, s.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                    accumulate(&mut grads[*a], delta);
                }
            }
            Op::RowKron(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (ca, cb) = (av.cols(), bv.cols());
                if self.requires(*a) {
                    let mut delta = Matrix::zeros(av.rows(), ca);
                    for i in 0..av.rows() {
                        for p in 0..ca {
                            let mut acc = 0.0;
                            for q in 0..cb {
                                acc += g.get(i, p * cb + q) * bv.get(i, q);
                            }
                            delta.set(i, p, acc);
                        }
                    }
                    accumulate(&mut grads[*a], delta);
                }
                if self.requires(*b) {
                    let mut delta = Matrix::zeros(bv.rows(), cb);
                    for i in 0..bv.rows() {
                        for q in 0..cb {
                            let mut acc = 0.0;
                            for p in 0..ca {
                                acc += g.get(i, p * cb + q) * av.get(i, p);
                            }
                            delta.set(i, q, acc);
                        }
                    }
                    accumulate(&mut grads[*b], delta);
                }
            }
            Op::MulElem(a, b) => {
                if self.requires(*a) {
                    accumulate(&mut grads[*a], g.mul_elem(self.value(*b))?);
                }
                if self.requires(*b) {
                    accumulate(&mut grads[*b], g.mul_elem(self.value(*a))?);
                }
            }
            Op::CrossEntropy {
                probs,
                rows,
                labels,
            } => {
                if self.requires(*probs) {
                    let p = self.value(*probs);
                    let upstream = g.get(0, 0);
                    let scale = -upstream / rows.len() as f64;
                    let mut delta = Matrix::zeros(p.rows(), p.cols());
                    for (&r, &label) in rows.iter().zip(labels) {
                        let pv = p.get(r, label);
                        // Where the clamp is active the loss is locally
                        // constant in the probability.
                        if pv > LOG_CLAMP {
                            delta.set(r, label, delta.get(r, label) + scale / pv);
                        }
                    }
                    accumulate(&mut grads[*probs], delta);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Matrix>, delta: Matrix) {
    match slot {
        Some(g) => g.add_assign(&delta),
        None => *slot = Some(delta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_gradient_is_indicator() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::from_rows(&[vec![-1.0, 2.0]]).unwrap());
        let y = tape.relu(x);
        // Reduce to a scalar through a fixed weight of ones.
        let w = tape.leaf(Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap());
        let s = tape.matmul(y, w).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn matmul_gradient_contract() {
        // loss = sum(a·b) via ones vectors; da = ones·b^T, db = a^T·ones.
        let mut tape = Tape::new();
        let a = tape.param(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let b = tape.param(Matrix::from_rows(&[vec![5.0], vec![6.0]]).unwrap());
        let prod = tape.matmul(a, b).unwrap();
        let ones = tape.leaf(Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap());
        let s = tape.matmul(ones, prod).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[5.0, 6.0, 5.0, 6.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn leaf_constants_get_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::identity(2));
        let w = tape.param(Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
        let prod = tape.matmul(a, w).unwrap();
        let ones = tape.leaf(Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap());
        let s = tape.matmul(ones, prod).unwrap();
        let grads = tape.backward(s).unwrap();
        assert!(grads.get(a).is_none());
        assert!(grads.get(w).is_some());
    }

    #[test]
    fn softmax_cross_entropy_composite_gradient() {
        // d(CE ∘ softmax)/dlogits = (softmax - onehot) / n on selected rows.
        let mut tape = Tape::new();
        let logits = tape.param(Matrix::from_rows(&[vec![0.2, -0.4], vec![1.0, 1.5]]).unwrap());
        let probs = tape.softmax_rows(logits);
        let loss = tape.cross_entropy(probs, &[0, 1], &[1, 0]).unwrap();
        let grads = tape.backward(loss).unwrap();
        let p = tape.value(probs);
        let g = grads.get(logits).unwrap();
        let n = 2.0;
        assert!((g.get(0, 0) - p.get(0, 0) / n).abs() < 1e-12);
        assert!((g.get(0, 1) - (p.get(0, 1) - 1.0) / n).abs() < 1e-12);
        assert!((g.get(1, 0) - (p.get(1, 0) - 1.0) / n).abs() < 1e-12);
        assert!((g.get(1, 1) - p.get(1, 1) / n).abs() < 1e-12);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::zeros(2, 2));
        assert!(tape.backward(x).is_err());
    }
}
