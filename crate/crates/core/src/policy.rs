//! Learned explicit control laws behind one interface.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nnfs::{ReluNet, ReluNetFile};
use crate::quifs::{QuifsFile, QuifsModel};

/// A state-feedback law `x ↦ u`.
pub trait Policy: Sync {
    fn action(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl Policy for QuifsModel {
    fn action(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.eval(x)
    }
}

impl Policy for ReluNet {
    fn action(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "state has {} entries, expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self.eval(x))
    }
}

/// Constant control, useful as a stress baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantPolicy(pub Vec<f64>);

impl Policy for ConstantPolicy {
    fn action(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

#[derive(Clone, Debug)]
pub enum PolicyModel {
    Quifs(QuifsModel),
    Relu {
        net: ReluNet,
        spec_hash: Option<String>,
    },
}

impl PolicyModel {
    /// Reads either artifact; a `layer_dims` key marks a network.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Dependency(format!("cannot read policy {}: {e}", path.display()))
        })?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("layer_dims").is_some() {
            let file: ReluNetFile = serde_json::from_value(value)?;
            let spec_hash = file
                .training_meta
                .as_ref()
                .and_then(|m| m.spec_hash.clone());
            Ok(PolicyModel::Relu {
                net: ReluNet::from_file(&file)?,
                spec_hash,
            })
        } else {
            let file: QuifsFile = serde_json::from_value(value)?;
            Ok(PolicyModel::Quifs(QuifsModel::from_file(file)?))
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PolicyModel::Quifs(_) => "quifs",
            PolicyModel::Relu { .. } => "relu",
        }
    }

    pub fn spec_hash(&self) -> Option<&str> {
        match self {
            PolicyModel::Quifs(q) => q.spec_hash.as_deref(),
            PolicyModel::Relu { spec_hash, .. } => spec_hash.as_deref(),
        }
    }

    /// Errors unless the embedded hash equals `expected`.
    pub fn check_spec(&self, expected: &str) -> Result<()> {
        match self.spec_hash() {
            Some(h) if h == expected => Ok(()),
            Some(h) => Err(Error::HashMismatch {
                expected: expected.into(),
                found: h.into(),
            }),
            None => Err(Error::HashMismatch {
                expected: expected.into(),
                found: "<none>".into(),
            }),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            PolicyModel::Quifs(q) => q.d,
            PolicyModel::Relu { net, .. } => net.input_dim(),
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            PolicyModel::Quifs(q) => q.m,
            PolicyModel::Relu { net, .. } => net.output_dim(),
        }
    }
}

impl Policy for PolicyModel {
    fn action(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            PolicyModel::Quifs(q) => q.action(x),
            PolicyModel::Relu { net, .. } => net.action(x),
        }
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn action(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).action(x)
    }
}
