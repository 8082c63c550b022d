//! Per-view GCN classifiers and the cross-view fusion head.
//!
//! Each view gets a stack of graph-convolution layers (ReLU(Ã·H·W + b),
//! dropout on layer outputs while training) followed by a two-layer MLP
//! head that emits class distributions. Multi-view models combine the
//! per-view distributions into a flattened outer-product vector and feed it
//! to a small fully connected head ([`VcdnHead`]) that learns cross-view
//! label correlations.

pub mod checkpoint;

use crate::error::{Error, Result};
use crate::numcore::rng::uniform;
use crate::numcore::tape::{NodeId, Tape};
use crate::numcore::{matmul, relu, Matrix, ParamStore, SeededRng};

/// Layer-size plan for one view's classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDims {
    pub input: usize,
    pub gcn_hidden: Vec<usize>,
    pub head_hidden: usize,
    pub classes: usize,
}

impl ModelDims {
    /// Default plan: three graph layers at 200/200/100 units, a 64-unit
    /// head, two classes.
    pub fn standard(input: usize) -> Self {
        Self {
            input,
            gcn_hidden: vec![200, 200, 100],
            head_hidden: 64,
            classes: 2,
        }
    }

    pub fn with_hidden(input: usize, gcn_hidden: Vec<usize>, head_hidden: usize) -> Self {
        Self {
            input,
            gcn_hidden,
            head_hidden,
            classes: 2,
        }
    }

    fn gcn_chain(&self) -> Vec<usize> {
        let mut chain = vec![self.input];
        chain.extend_from_slice(&self.gcn_hidden);
        chain
    }

    fn validate(&self) -> Result<()> {
        if self.input == 0 || self.gcn_hidden.is_empty() || self.head_hidden == 0 {
            return Err(Error::Config(format!("invalid model dims {self:?}")));
        }
        if self.classes < 2 {
            return Err(Error::Config("need at least 2 classes".to_string()));
        }
        Ok(())
    }
}

/// Bindings from parameter names to their tape nodes for one forward pass;
/// empty when the network was entered as frozen constants.
pub type ParamBindings = Vec<(String, NodeId)>;

pub struct GcnClassifier {
    store: ParamStore,
    dims: ModelDims,
    dropout: f64,
}

/// Glorot-uniform weights, zero biases; deterministic given the rng.
pub fn init_classifier(
    dims: &ModelDims,
    dropout: f64,
    rng: &mut SeededRng,
) -> Result<GcnClassifier> {
    dims.validate()?;
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::Config(format!("dropout {dropout} outside [0, 1)")));
    }
    let mut store = ParamStore::new();
    let chain = dims.gcn_chain();
    for l in 0..chain.len() - 1 {
        store.insert(&format!("gcn{l}.w"), glorot(chain[l], chain[l + 1], rng)?)?;
        store.insert(&format!("gcn{l}.b"), Matrix::zeros(1, chain[l + 1]))?;
    }
    let last = *chain.last().unwrap();
    store.insert("head0.w", glorot(last, dims.head_hidden, rng)?)?;
    store.insert("head0.b", Matrix::zeros(1, dims.head_hidden))?;
    store.insert("head1.w", glorot(dims.head_hidden, dims.classes, rng)?)?;
    store.insert("head1.b", Matrix::zeros(1, dims.classes))?;
    Ok(GcnClassifier {
        store,
        dims: dims.clone(),
        dropout,
    })
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Result<Matrix> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| (2.0 * uniform(rng) - 1.0) * bound)
        .collect();
    Matrix::new(fan_in, fan_out, data)
}

impl GcnClassifier {
    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub(crate) fn new_zeroed(dims: ModelDims, dropout: f64) -> Result<Self> {
        let mut rng = crate::numcore::seeded_rng(0);
        init_classifier(&dims, dropout, &mut rng)
    }

    /// Record the graph-convolution stack on a tape. Dropout masks are
    /// drawn from `rng` only when `training` is set. When `trainable` is
    /// false the weights enter as constants and receive no gradients.
    pub fn build_hidden(
        &self,
        tape: &mut Tape,
        x: NodeId,
        a_norm: NodeId,
        training: bool,
        rng: &mut SeededRng,
        trainable: bool,
    ) -> Result<(NodeId, ParamBindings)> {
        let mut bindings = ParamBindings::new();
        let mut h = x;
        let layers = self.dims.gcn_hidden.len();
        for l in 0..layers {
            let w = self.enter(tape, &format!("gcn{l}.w"), trainable, &mut bindings);
            let b = self.enter(tape, &format!("gcn{l}.b"), trainable, &mut bindings);
            let hw = tape.matmul(h, w)?;
            let mixed = tape.matmul(a_norm, hw)?;
            let biased = tape.add_row_bias(mixed, b)?;
            h = tape.relu(biased);
            if training && self.dropout > 0.0 {
                let mask = self.dropout_mask(tape.value(h).shape(), rng)?;
                let mask_id = tape.leaf(mask);
                h = tape.mul_elem(h, mask_id)?;
            }
        }
        Ok((h, bindings))
    }

    /// Record the MLP head on a tape: softmax(ReLU(h·W0 + b0)·W1 + b1).
    pub fn build_probs(
        &self,
        tape: &mut Tape,
        hidden: NodeId,
        trainable: bool,
    ) -> Result<(NodeId, ParamBindings)> {
        let mut bindings = ParamBindings::new();
        let w0 = self.enter(tape, "head0.w", trainable, &mut bindings);
        let b0 = self.enter(tape, "head0.b", trainable, &mut bindings);
        let w1 = self.enter(tape, "head1.w", trainable, &mut bindings);
        let b1 = self.enter(tape, "head1.b", trainable, &mut bindings);
        let z0 = tape.matmul(hidden, w0)?;
        let z0 = tape.add_row_bias(z0, b0)?;
        let a0 = tape.relu(z0);
        let z1 = tape.matmul(a0, w1)?;
        let z1 = tape.add_row_bias(z1, b1)?;
        Ok((tape.softmax_rows(z1), bindings))
    }

    fn enter(
        &self,
        tape: &mut Tape,
        name: &str,
        trainable: bool,
        bindings: &mut ParamBindings,
    ) -> NodeId {
        let value = self.store.get(name).expect("parameter exists").clone();
        if trainable {
            let id = tape.param(value);
            bindings.push((name.to_string(), id));
            id
        } else {
            tape.leaf(value)
        }
    }

    fn dropout_mask(&self, shape: (usize, usize), rng: &mut SeededRng) -> Result<Matrix> {
        let keep = 1.0 - self.dropout;
        let data: Vec<f64> = (0..shape.0 * shape.1)
            .map(|_| if uniform(rng) < keep { 1.0 / keep } else { 0.0 })
            .collect();
        Matrix::new(shape.0, shape.1, data)
    }

    /// Hidden representation after the graph-convolution stack.
    pub fn gcn_forward(
        &self,
        x: &Matrix,
        a_norm: &Matrix,
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<Matrix> {
        let mut tape = Tape::new();
        let x_id = tape.leaf(x.clone());
        let a_id = tape.leaf(a_norm.clone());
        let (h, _) = self.build_hidden(&mut tape, x_id, a_id, training, rng, false)?;
        Ok(tape.value(h).clone())
    }

    /// Class distributions from a hidden representation.
    pub fn classify(&self, hidden: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let h = tape.leaf(hidden.clone());
        let (p, _) = self.build_probs(&mut tape, h, false)?;
        Ok(tape.value(p).clone())
    }

    /// Deterministic inference: distributions for every row of `x`.
    pub fn predict_probs(&self, x: &Matrix, a_norm: &Matrix) -> Result<Matrix> {
        let mut rng = crate::numcore::seeded_rng(0);
        let h = self.gcn_forward(x, a_norm, false, &mut rng)?;
        self.classify(&h)
    }

    /// The same layer stack with no neighbor mixing: ReLU(X·W + b) per
    /// layer. With an edgeless graph (Ã = I) the graph stack reduces to
    /// exactly this.
    pub fn mlp_forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for l in 0..self.dims.gcn_hidden.len() {
            let w = self.store.get(&format!("gcn{l}.w")).unwrap();
            let b = self.store.get(&format!("gcn{l}.b")).unwrap();
            let mut z = matmul(&h, w)?;
            for i in 0..z.rows() {
                for j in 0..z.cols() {
                    z.set(i, j, z.get(i, j) + b.get(0, j));
                }
            }
            h = relu(&z);
        }
        Ok(h)
    }
}

/// Flattened outer product of per-view class distributions, row-major with
/// the first view's index slowest: for two views the entry at a1·c + a2 is
/// y1[a1]·y2[a2]; a third view nests once more. This ordering defines the
/// fusion head's input wiring and must not change.
pub fn vcdn_tensor(dists: &[Matrix]) -> Result<Matrix> {
    if !(2..=3).contains(&dists.len()) {
        return Err(Error::Config(format!(
            "vcdn_tensor expects 2 or 3 views, got {}",
            dists.len()
        )));
    }
    for d in dists {
        check_distribution(d)?;
    }
    let mut out = dists[0].clone();
    for d in &dists[1..] {
        out = row_kron(&out, d)?;
    }
    Ok(out)
}

fn check_distribution(d: &Matrix) -> Result<()> {
    for i in 0..d.rows() {
        let sum: f64 = d.row(i).iter().sum();
        if (sum - 1.0).abs() > 1e-6 || d.row(i).iter().any(|&v| v < 0.0) {
            return Err(Error::NotADistribution {
                row: i,
                rows: d.rows(),
                sum,
            });
        }
    }
    Ok(())
}

fn row_kron(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::Shape {
            op: "row_kron",
            left: a.shape_str(),
            right: b.shape_str(),
        });
    }
    let (n, ca, cb) = (a.rows(), a.cols(), b.cols());
    let mut out = Matrix::zeros(n, ca * cb);
    for i in 0..n {
        for p in 0..ca {
            for q in 0..cb {
                out.set(i, p * cb + q, a.get(i, p) * b.get(i, q));
            }
        }
    }
    Ok(out)
}

/// Cross-view fusion head: a fully connected net from the flattened
/// outer-product vector (length classes^views) through one hidden layer of
/// the same width to class logits.
pub struct VcdnHead {
    store: ParamStore,
    view_count: usize,
    classes: usize,
}

pub fn init_vcdn(view_count: usize, classes: usize, rng: &mut SeededRng) -> Result<VcdnHead> {
    if !(2..=3).contains(&view_count) {
        return Err(Error::Config(format!(
            "fusion head supports 2 or 3 views, got {view_count}"
        )));
    }
    let input = classes.pow(view_count as u32);
    let mut store = ParamStore::new();
    store.insert("fc0.w", glorot(input, input, rng)?)?;
    store.insert("fc0.b", Matrix::zeros(1, input))?;
    store.insert("fc1.w", glorot(input, classes, rng)?)?;
    store.insert("fc1.b", Matrix::zeros(1, classes))?;
    Ok(VcdnHead {
        store,
        view_count,
        classes,
    })
}

impl VcdnHead {
    pub fn view_count(&self) -> usize {
        self.view_count
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub(crate) fn new_zeroed(view_count: usize, classes: usize) -> Result<Self> {
        let mut rng = crate::numcore::seeded_rng(0);
        init_vcdn(view_count, classes, &mut rng)
    }

    pub fn build_forward(
        &self,
        tape: &mut Tape,
        c_vec: NodeId,
        trainable: bool,
    ) -> Result<(NodeId, ParamBindings)> {
        let expected = self.classes.pow(self.view_count as u32);
        if tape.value(c_vec).cols() != expected {
            return Err(Error::Shape {
                op: "vcdn_forward",
                left: tape.value(c_vec).shape_str(),
                right: format!("n x {expected}"),
            });
        }
        let mut bindings = ParamBindings::new();
        let enter = |tape: &mut Tape, name: &str, bindings: &mut ParamBindings| {
            let value = self.store.get(name).expect("parameter exists").clone();
            if trainable {
                let id = tape.param(value);
                bindings.push((name.to_string(), id));
                id
            } else {
                tape.leaf(value)
            }
        };
        let w0 = enter(tape, "fc0.w", &mut bindings);
        let b0 = enter(tape, "fc0.b", &mut bindings);
        let w1 = enter(tape, "fc1.w", &mut bindings);
        let b1 = enter(tape, "fc1.b", &mut bindings);
        let z0 = tape.matmul(c_vec, w0)?;
        let z0 = tape.add_row_bias(z0, b0)?;
        let a0 = tape.relu(z0);
        let z1 = tape.matmul(a0, w1)?;
        let z1 = tape.add_row_bias(z1, b1)?;
        Ok((tape.softmax_rows(z1), bindings))
    }

    /// Deterministic inference over a batch of flattened tensors.
    pub fn forward(&self, c_vec: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let c = tape.leaf(c_vec.clone());
        let (p, _) = self.build_forward(&mut tape, c, false)?;
        Ok(tape.value(p).clone())
    }
}
