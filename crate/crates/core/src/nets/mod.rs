//! Networks and their optimizer.

mod adam;
mod mlp;
mod snapshot;
mod spectral;

pub use adam::AdamState;
pub use mlp::{Arch, LayerParams, Linear, Mlp};
pub use snapshot::{LayerSnapshot, MlpSnapshot};
pub use spectral::{spectral_normalize, SpectralState, SIGMA_FLOOR};
