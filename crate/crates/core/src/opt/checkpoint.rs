//! Resumable optimizer checkpoint, little-endian:
//!
//! ```text
//! offset      size     field
//! 0           4        magic "TIDE"
//! 4           4        u32 version (1)
//! 8           4        u32 nx
//! 12          4        u32 ny
//! 16          4n       f32 params, row-major (n = nx * ny)
//! 16+4n       8n       f64 first moments
//! 16+12n      8n       f64 second moments
//! 16+20n      8        u64 step
//! 24+20n      8        u64 PRNG seed
//! 32+20n      8        u64 PRNG draws (32-bit outputs consumed)
//! ```
//!
//! The PRNG is PCG32 (`rand_pcg::Pcg32::seed_from_u64(seed)`), restored by
//! advancing `draws` outputs.

use std::fs;
use std::path::Path;

use crate::formats::FormatError;

pub const MAGIC: &[u8; 4] = b"TIDE";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub nx: usize,
    pub ny: usize,
    pub params: Vec<f32>,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub rng_seed: u64,
    pub rng_draws: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.nx * self.ny;
        assert!(
            self.params.len() == n && self.first_moment.len() == n && self.second_moment.len() == n,
            "checkpoint arrays must have nx * ny entries"
        );
        let mut out = Vec::with_capacity(40 + 20 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.nx as u32).to_le_bytes());
        out.extend_from_slice(&(self.ny as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for m in self.first_moment.iter().chain(&self.second_moment) {
            out.extend_from_slice(&m.to_le_bytes());
        }
        for w in [self.step, self.rng_seed, self.rng_draws] {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self, FormatError> {
        let bad = |message: String| FormatError::Invalid {
            path: path.to_path_buf(),
            message,
        };
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a TIDE checkpoint".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let (nx, ny) = (u32_at(8) as usize, u32_at(12) as usize);
        let n = nx * ny;
        let expected = 40 + 20 * n;
        if n == 0 || bytes.len() != expected {
            return Err(bad(format!(
                "{nx}x{ny} checkpoint needs {expected} bytes, file has {}",
                bytes.len()
            )));
        }
        let params = (0..n)
            .map(|i| f32::from_le_bytes(bytes[16 + 4 * i..20 + 4 * i].try_into().unwrap()))
            .collect();
        let f64s = |start: usize| -> Vec<f64> {
            (0..n)
                .map(|i| f64::from_le_bytes(bytes[start + 8 * i..start + 8 * i + 8].try_into().unwrap()))
                .collect()
        };
        let tail = 16 + 20 * n;
        Ok(Self {
            nx,
            ny,
            params,
            first_moment: f64s(16 + 4 * n),
            second_moment: f64s(16 + 12 * n),
            step: u64_at(tail),
            rng_seed: u64_at(tail + 8),
            rng_draws: u64_at(tail + 16),
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        fs::write(path, self.to_bytes()).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        let bytes = fs::read(path).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(path, &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            nx: 3,
            ny: 2,
            params: vec![0.0, 1.0, 2.5, -0.25, 4.0, 1e-3],
            first_moment: vec![0.1, -0.2, 0.3, 1e-30, 0.0, 5.0],
            second_moment: vec![1e-40, 2.0, 3.0, 4.0, 5.0, 6.0],
            step: 17,
            rng_seed: u64::MAX,
            rng_draws: 34,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tide");
        sample().write(&path).unwrap();
        assert_eq!(Checkpoint::read(&path).unwrap(), sample());
    }

    #[test]
    fn layout_and_rejection() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"TIDE");
        assert_eq!(bytes.len(), 40 + 20 * 6);
        let p = Path::new("x");
        assert!(Checkpoint::from_bytes(p, &bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[4] = 2;
        assert!(Checkpoint::from_bytes(p, &wrong).is_err());
        assert!(Checkpoint::from_bytes(p, b"TDSF").is_err());
    }
}
