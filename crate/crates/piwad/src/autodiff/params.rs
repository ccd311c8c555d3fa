//! Named parameter arrays with per-parameter Adam state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tape::{NodeId, Tape};
use crate::error::{PiwadError, Result};

/// Gradients keyed by parameter name, row-major.
pub type GradientMap = BTreeMap<String, Vec<f64>>;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamParams {
    /// Settings used for the WGAN-GP critic/generator pair.
    pub fn wgan() -> Self {
        AdamParams {
            learning_rate: 1e-4,
            beta1: 0.0,
            beta2: 0.9,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param {
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
    moment1: Vec<f64>,
    moment2: Vec<f64>,
    step: u64,
}

/// Named parameter arrays plus their Adam optimizer state.
///
/// Shapes are fixed at insertion; moments start at zero.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, rows: usize, cols: usize, value: Vec<f64>) -> Result<()> {
        if value.len() != rows * cols {
            return Err(PiwadError::shape(
                format!("param {name}"),
                format!("{rows}x{cols}"),
                format!("len {}", value.len()),
            ));
        }
        if self.params.contains_key(name) {
            return Err(PiwadError::Config(format!(
                "parameter {name} already exists; shapes are immutable after creation"
            )));
        }
        let n = value.len();
        self.params.insert(
            name.to_string(),
            Param {
                rows,
                cols,
                value,
                moment1: vec![0.0; n],
                moment2: vec![0.0; n],
                step: 0,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| PiwadError::Config(format!("unknown parameter {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Overwrite a parameter's values in place (same shape).
    pub fn set_value(&mut self, name: &str, value: &[f64]) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| PiwadError::Config(format!("unknown parameter {name}")))?;
        if value.len() != p.value.len() {
            return Err(PiwadError::shape(
                format!("param {name}"),
                format!("len {}", p.value.len()),
                format!("len {}", value.len()),
            ));
        }
        p.value.copy_from_slice(value);
        Ok(())
    }

    /// Bind every parameter onto a tape as a leaf node.
    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        let mut by_name = BTreeMap::new();
        for (name, p) in &self.params {
            let id = tape.leaf(p.rows, p.cols, p.value.clone());
            by_name.insert(name.clone(), id);
        }
        Bindings { by_name }
    }

    /// One Adam update over every entry of `grads`.
    ///
    /// Keys in `grads` must exist in the store with matching lengths.
    pub fn adam_step(&mut self, grads: &GradientMap, hp: &AdamParams) -> Result<()> {
        if hp.learning_rate <= 0.0 {
            return Err(PiwadError::Config(format!(
                "adam learning rate must be positive, got {}",
                hp.learning_rate
            )));
        }
        for (name, g) in grads {
            let p = self
                .params
                .get_mut(name)
                .ok_or_else(|| PiwadError::Config(format!("gradient for unknown parameter {name}")))?;
            if g.len() != p.value.len() {
                return Err(PiwadError::shape(
                    format!("gradient for {name}"),
                    format!("len {}", p.value.len()),
                    format!("len {}", g.len()),
                ));
            }
            p.step += 1;
            let t = p.step as i32;
            let bc1 = 1.0 - hp.beta1.powi(t);
            let bc2 = 1.0 - hp.beta2.powi(t);
            for i in 0..g.len() {
                p.moment1[i] = hp.beta1 * p.moment1[i] + (1.0 - hp.beta1) * g[i];
                p.moment2[i] = hp.beta2 * p.moment2[i] + (1.0 - hp.beta2) * g[i] * g[i];
                let m_hat = p.moment1[i] / bc1;
                let v_hat = p.moment2[i] / bc2;
                p.value[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
            }
        }
        Ok(())
    }
}

/// Tape leaves for a bound parameter set, keyed by name.
#[derive(Debug, Clone)]
pub struct Bindings {
    by_name: BTreeMap<String, NodeId>,
}

impl Bindings {
    /// Point a name at a different node (used by gradient checks to route a
    /// probed parameter through an externally built leaf).
    pub fn insert_binding(&mut self, name: &str, node: NodeId) {
        self.by_name.insert(name.to_string(), node);
    }

    pub fn node(&self, name: &str) -> NodeId {
        *self
            .by_name
            .get(name)
            .unwrap_or_else(|| panic!("no binding for parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.by_name.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Extract gradient values of the scalar `output` w.r.t. every bound
    /// parameter, keyed by name.
    pub fn gradients(&self, tape: &mut Tape, output: NodeId) -> Result<GradientMap> {
        let ids: Vec<NodeId> = self.by_name.values().copied().collect();
        let grads = tape.grad_nodes(output, &ids)?;
        Ok(self
            .by_name
            .keys()
            .cloned()
            .zip(grads.iter().map(|g| tape.value(*g).to_vec()))
            .collect())
    }
}
