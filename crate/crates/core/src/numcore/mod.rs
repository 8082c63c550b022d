//! Minimal dense-matrix kernel with reverse-mode gradients: just enough to
//! train every network in this crate, in plain f64, deterministically.

pub mod matrix;
pub mod optim;
pub mod rng;
pub mod tape;

pub use matrix::{cross_entropy, cross_entropy_rows, matmul, relu, softmax_rows, Matrix};
pub use optim::ParamStore;
pub use rng::{derive_seed, seeded_rng, standard_normal, uniform, SeededRng};
pub use tape::{Gradients, NodeId, Tape};
