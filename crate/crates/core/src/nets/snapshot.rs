//! JSON weight snapshots: one entry per layer with an explicit shape header.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Arch, Linear, Mlp, SpectralState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSnapshot {
    /// `[rows, cols]` of the weight matrix.
    pub shape: [usize; 2],
    /// Row-major weight entries.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_u: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSnapshot {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_units: usize,
    pub num_layers: usize,
    pub residual: bool,
    pub layers: Vec<LayerSnapshot>,
}

impl Mlp {
    pub fn to_snapshot(&self) -> MlpSnapshot {
        MlpSnapshot {
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            hidden_units: self.hidden_units,
            num_layers: self.num_layers,
            residual: self.residual,
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| LayerSnapshot {
                    shape: [l.weight.nrows(), l.weight.ncols()],
                    weight: l.weight.iter().copied().collect(),
                    bias: l.bias.iter().copied().collect(),
                    spectral_u: self.spectral.as_ref().map(|s| s[i].u().to_vec()),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snap: &MlpSnapshot) -> Result<Self> {
        let arch = Arch {
            units: snap.hidden_units,
            layers: snap.num_layers,
        };
        let mut net = Mlp::zeros(snap.input_dim, snap.output_dim, arch, snap.residual)?;
        if snap.layers.len() != net.layers.len() {
            return Err(Error::Argument(format!(
                "snapshot has {} layers, architecture needs {}",
                snap.layers.len(),
                net.layers.len()
            )));
        }
        let mut spectral = Vec::new();
        for (i, (layer, s)) in net.layers.iter_mut().zip(&snap.layers).enumerate() {
            let want = layer.weight.dim();
            if (s.shape[0], s.shape[1]) != want || s.bias.len() != want.0 {
                return Err(Error::Argument(format!(
                    "layer {i}: snapshot shape {:?} does not match {want:?}",
                    s.shape
                )));
            }
            let weight = Array2::from_shape_vec(want, s.weight.clone())
                .map_err(|e| Error::Argument(format!("layer {i}: {e}")))?;
            *layer = Linear {
                weight,
                bias: Array2::from_shape_vec((1, want.0), s.bias.clone()).expect("bias shape"),
            };
            if let Some(u) = &s.spectral_u {
                spectral.push(SpectralState::from_u(Array1::from(u.clone())));
            }
        }
        if !spectral.is_empty() {
            if spectral.len() != net.layers.len() {
                return Err(Error::Argument("spectral state missing on some layers".into()));
            }
            for (st, l) in spectral.iter_mut().zip(&net.layers) {
                st.power_iterate(&l.weight);
            }
            net.spectral = Some(spectral);
        }
        Ok(net)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_snapshot())?;
        crate::io::write_atomic(path, text.as_bytes())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot(&serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_is_exact() {
        let net = Mlp::new(2, 3, Arch { units: 7, layers: 2 }, true, 11).unwrap();
        let text = serde_json::to_string(&net.to_snapshot()).unwrap();
        let back = Mlp::from_snapshot(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn mismatched_shape_is_rejected() {
        let net = Mlp::new(1, 1, Arch { units: 3, layers: 1 }, true, 0).unwrap();
        let mut snap = net.to_snapshot();
        snap.layers[1].shape = [3, 2];
        assert!(Mlp::from_snapshot(&snap).is_err());
    }
}
