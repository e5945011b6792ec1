use ndarray::Array2;

use crate::error::{Error, Result};

/// Uniform, endpoint-inclusive tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    bounds: Vec<(f64, f64)>,
    counts: Vec<usize>,
    points: Array2<f64>,
}

impl Mesh {
    /// `counts[k]` points across `bounds[k]`; points are ordered with the
    /// first coordinate varying slowest.
    pub fn uniform(bounds: &[(f64, f64)], counts: &[usize]) -> Result<Self> {
        if bounds.len() != counts.len() || bounds.is_empty() {
            return Err(Error::Argument(format!(
                "mesh needs one count per dimension ({} bounds, {} counts)",
                bounds.len(),
                counts.len()
            )));
        }
        if let Some(c) = counts.iter().find(|&&c| c < 2) {
            return Err(Error::Argument(format!(
                "mesh needs at least 2 points per dimension, got {c}"
            )));
        }
        if let Some((a, b)) = bounds.iter().find(|(a, b)| !(a.is_finite() && b > a)) {
            return Err(Error::Argument(format!("empty interval ({a}, {b})")));
        }
        let axes: Vec<Vec<f64>> = bounds
            .iter()
            .zip(counts)
            .map(|(&(a, b), &n)| linspace(a, b, n))
            .collect();
        let total: usize = counts.iter().product();
        let dims = counts.len();
        let mut points = Array2::zeros((total, dims));
        for row in 0..total {
            let mut rem = row;
            for k in (0..dims).rev() {
                points[[row, k]] = axes[k][rem % counts[k]];
                rem /= counts[k];
            }
        }
        Ok(Mesh {
            bounds: bounds.to_vec(),
            counts: counts.to_vec(),
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// `(b − a)/(n − 1)` along dimension `k`.
    pub fn spacing(&self, k: usize) -> f64 {
        let (a, b) = self.bounds[k];
        (b - a) / (self.counts[k] - 1) as f64
    }

    /// One row per point.
    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    /// Same bounds, `factor`× the points per dimension.
    pub fn refined(&self, factor: usize) -> Self {
        let counts: Vec<usize> = self.counts.iter().map(|c| c * factor).collect();
        Mesh::uniform(&self.bounds, &counts).expect("refining a valid mesh")
    }

    /// Content hash of the point coordinates, for cache keys.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for c in &self.counts {
            h.update((*c as u64).to_le_bytes());
        }
        for x in self.points.iter() {
            h.update(x.to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|i| if i == n - 1 { b } else { a + h * i as f64 }).collect()
}
