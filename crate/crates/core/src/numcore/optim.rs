//! Named parameter storage with Adam update state.

use std::collections::BTreeMap;

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

struct ParamEntry {
    name: String,
    value: Matrix,
    first_moment: Matrix,
    second_moment: Matrix,
}

/// Named parameter matrices plus per-parameter Adam moment accumulators and
/// a step counter that advances by exactly one per [`ParamStore::adam_step`].
#[derive(Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: BTreeMap<String, usize>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Matrix) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter '{name}'")));
        }
        let (r, c) = value.shape();
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            first_moment: Matrix::zeros(r, c),
            second_moment: Matrix::zeros(r, c),
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.index.get(name).map(|&i| &self.entries[i].value)
    }

    /// Replace a parameter's value (checkpoint loading). Moments reset.
    pub fn set(&mut self, name: &str, value: Matrix) -> Result<()> {
        let &i = self
            .index
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))?;
        let entry = &mut self.entries[i];
        if entry.value.shape() != value.shape() {
            return Err(Error::Shape {
                op: "ParamStore::set",
                left: entry.value.shape_str(),
                right: value.shape_str(),
            });
        }
        let (r, c) = value.shape();
        entry.value = value;
        entry.first_moment = Matrix::zeros(r, c);
        entry.second_moment = Matrix::zeros(r, c);
        Ok(())
    }

    /// Parameter names in insertion order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over every parameter in the store. `grads` must
    /// supply exactly one gradient per parameter, shape-matched.
    pub fn adam_step(&mut self, grads: &BTreeMap<String, Matrix>, lr: f64) -> Result<()> {
        if grads.len() != self.entries.len() {
            return Err(Error::Config(format!(
                "adam_step: {} gradients for {} parameters",
                grads.len(),
                self.entries.len()
            )));
        }
        for entry in &self.entries {
            let g = grads
                .get(&entry.name)
                .ok_or_else(|| Error::Config(format!("missing gradient for '{}'", entry.name)))?;
            if g.shape() != entry.value.shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    left: entry.value.shape_str(),
                    right: g.shape_str(),
                });
            }
            if !g.all_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of parameter '{}'", entry.name),
                });
            }
        }

        self.step += 1;
        let t = self.step as f64;
        let bias1 = 1.0 - ADAM_BETA1.powf(t);
        let bias2 = 1.0 - ADAM_BETA2.powf(t);

        for entry in &mut self.entries {
            let g = &grads[&entry.name];
            let (rows, cols) = entry.value.shape();
            for i in 0..rows {
                for j in 0..cols {
                    let gij = g.get(i, j);
                    let m = ADAM_BETA1 * entry.first_moment.get(i, j) + (1.0 - ADAM_BETA1) * gij;
                    let v =
                        ADAM_BETA2 * entry.second_moment.get(i, j) + (1.0 - ADAM_BETA2) * gij * gij;
                    entry.first_moment.set(i, j, m);
                    entry.second_moment.set(i, j, v);
                    let m_hat = m / bias1;
                    let v_hat = v / bias2;
                    let updated = entry.value.get(i, j) - lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    entry.value.set(i, j, updated);
                }
            }
            if !entry.value.all_finite() {
                return Err(Error::NonFinite {
                    context: format!("parameter '{}' after adam_step", entry.name),
                });
            }
        }
        Ok(())
    }

    /// Snapshot of all parameter values, for freeze assertions and tests.
    pub fn snapshot(&self) -> BTreeMap<String, Matrix> {
        self.entries
            .iter()
            .map(|e| (e.name.clone(), e.value.clone()))
            .collect()
    }
}
