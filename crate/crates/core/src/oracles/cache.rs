//! Cache files: one JSON header line followed by little-endian `f64` data in
//! row-major order.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problems::{Mesh, Problem};

const FORMAT: &str = "deqgan-f64le-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheHeader {
    pub format: String,
    pub problem: String,
    pub method: String,
    pub tol: f64,
    pub constants: Vec<(String, f64)>,
    pub mesh: String,
    pub rows: usize,
    pub cols: usize,
}

impl CacheHeader {
    pub fn new(problem: &Problem, method: &str, tol: f64, mesh: &Mesh) -> Self {
        CacheHeader {
            format: FORMAT.into(),
            problem: problem.key.to_string(),
            method: method.into(),
            tol,
            constants: problem
                .constants()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            mesh: mesh.fingerprint(),
            rows: mesh.len(),
            cols: problem.output_dim(),
        }
    }

    fn key_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.mesh.as_bytes());
        for (k, v) in &self.constants {
            h.update(k.as_bytes());
            h.update(v.to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn path_in(&self, dir: &Path) -> PathBuf {
        dir.join(format!(
            "{}-{}-tol{:e}-{}.bin",
            self.problem,
            self.method,
            self.tol,
            self.key_hash()
        ))
    }

    fn same_key(&self, other: &CacheHeader) -> bool {
        self.format == other.format
            && self.problem == other.problem
            && self.method == other.method
            && self.tol == other.tol
            && self.constants == other.constants
            && self.mesh == other.mesh
    }
}

pub fn write_cache(path: &Path, header: &CacheHeader, data: &Array2<f64>) -> Result<()> {
    let mut header = header.clone();
    (header.rows, header.cols) = data.dim();
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for x in data.iter() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    crate::io::write_atomic(path, &bytes)
}

/// Reads a cache file, checking it was produced for `expected`'s key.
pub fn read_cache(path: &Path, expected: &CacheHeader) -> Result<(CacheHeader, Array2<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |why: &str| Error::Solver(format!("cache {}: {why}", path.display()));
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("missing header"))?;
    let header: CacheHeader = serde_json::from_slice(&bytes[..split])?;
    if !header.same_key(expected) {
        return Err(corrupt(
            "header does not match the requested problem, tolerance or mesh",
        ));
    }
    let body = &bytes[split + 1..];
    if body.len() != 8 * header.rows * header.cols {
        return Err(corrupt("data length does not match header shape"));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let data = Array2::from_shape_vec((header.rows, header.cols), values).map_err(|e| corrupt(&e.to_string()))?;
    Ok((header, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ProblemKey;

    #[test]
    fn round_trip_and_key_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = Problem::preset(ProblemKey::Nas);
        let mesh = p.mesh(&[4]).unwrap();
        let h = CacheHeader::new(&p, "rk45", 1e-10, &mesh);
        let data = Array2::from_shape_fn((4, 2), |(i, j)| (i * 2 + j) as f64 / 3.0);
        let path = h.path_in(dir.path());
        write_cache(&path, &h, &data).unwrap();
        assert_eq!(read_cache(&path, &h).unwrap().1, data);

        let mut other = p.clone();
        other.set_constant("x0", 2.0).unwrap();
        let h2 = CacheHeader::new(&other, "rk45", 1e-10, &mesh);
        assert_ne!(h2.path_in(dir.path()), path);
        assert!(read_cache(&path, &h2).is_err());
    }
}
