//! Correlated message synthesis: near-sparse coefficients in a random
//! orthonormal basis, rescaled into `[-q_max, q_max]`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QncError, Result};
use crate::linalg::{norm1, norm2, random_orthogonal};

/// One realization of the sensor messages together with their sparse model.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageEnsemble {
    /// Orthonormal sparsifying transform, `x = phi * s`.
    pub phi: DMatrix<f64>,
    /// Exactly `k`-sparse part of the coefficients.
    pub s_k: DVector<f64>,
    /// Near-sparse coefficients.
    pub s: DVector<f64>,
    /// Messages, one per node.
    pub x: DVector<f64>,
    pub k: usize,
    /// l1 distance between `s` and `s_k`.
    pub eps_k: f64,
    pub q_max: f64,
}

impl MessageEnsemble {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `eps_k / ||s_k||_1`.
    pub fn eps_k_ratio(&self) -> f64 {
        self.eps_k / self.s_k.lp_norm(1)
    }

    /// l2 distance between `s` and `s_k`, kept for diagnostics.
    pub fn tail_l2(&self) -> f64 {
        (&self.s - &self.s_k).norm()
    }

    pub fn to_file(&self) -> EnsembleFile {
        EnsembleFile {
            n: self.n(),
            k: self.k,
            eps_k: self.eps_k,
            q_max: self.q_max,
            phi: self.phi.transpose().as_slice().to_vec(),
            s_k: self.s_k.as_slice().to_vec(),
            s: self.s.as_slice().to_vec(),
            x: self.x.as_slice().to_vec(),
        }
    }

    pub fn from_file(f: EnsembleFile) -> Result<Self> {
        let n = f.n;
        if f.phi.len() != n * n || f.s.len() != n || f.s_k.len() != n || f.x.len() != n {
            return Err(QncError::InvalidParameters(
                "ensemble file has inconsistent lengths".into(),
            ));
        }
        Ok(MessageEnsemble {
            phi: DMatrix::from_row_slice(n, n, &f.phi),
            s_k: DVector::from_vec(f.s_k),
            s: DVector::from_vec(f.s),
            x: DVector::from_vec(f.x),
            k: f.k,
            eps_k: f.eps_k,
            q_max: f.q_max,
        })
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(w, &self.to_file())?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::from_file(serde_json::from_reader(r)?)
    }
}

/// On-disk form of a [`MessageEnsemble`]; `phi` is stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub n: usize,
    pub k: usize,
    pub eps_k: f64,
    pub q_max: f64,
    pub phi: Vec<f64>,
    pub s_k: Vec<f64>,
    pub s: Vec<f64>,
    pub x: Vec<f64>,
}

/// Draws a message ensemble.
///
/// The `k` nonzeros of `s_k` are uniform on `(-1/2, 1/2)` at uniformly chosen
/// positions. A zero-mean uniform perturbation on all `n` entries is scaled so
/// that `||s - s_k||_1 = eps_k_rel * ||s_k||_1` exactly. The messages
/// `x = phi * s` (with `phi` a random orthonormal matrix) are then rescaled so
/// that `max |x_v| = q_max`, and `s`, `s_k` are rescaled by the same factor.
pub fn generate_messages(
    n: usize,
    k: usize,
    eps_k_rel: f64,
    q_max: f64,
    seed: u64,
) -> Result<MessageEnsemble> {
    if k == 0 || k > n {
        return Err(QncError::InvalidParameters(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if !(eps_k_rel >= 0.0 && eps_k_rel.is_finite()) {
        return Err(QncError::InvalidParameters(format!("eps_k_rel must be >= 0, got {eps_k_rel}")));
    }
    if !(q_max > 0.0 && q_max.is_finite()) {
        return Err(QncError::InvalidParameters(format!("q_max must be positive, got {q_max}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let support = index::sample(&mut rng, n, k).into_vec();
    let mut s_k = DVector::zeros(n);
    let mut attempts = 0;
    while s_k.iter().filter(|v: &&f64| **v != 0.0).count() != k {
        attempts += 1;
        if attempts > 100 {
            return Err(QncError::Degenerate("could not draw nonzero support values".into()));
        }
        for &i in &support {
            s_k[i] = rng.gen_range(-0.5..0.5);
        }
    }

    let mut s = s_k.clone();
    if eps_k_rel > 0.0 {
        let noise: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let scale = eps_k_rel * norm1(s_k.as_slice()) / norm1(&noise);
        for (si, w) in s.iter_mut().zip(&noise) {
            *si += scale * w;
        }
    }

    let phi = random_orthogonal(n, &mut rng);
    let x = &phi * &s;
    let peak = x.amax();
    if peak == 0.0 {
        return Err(QncError::Degenerate("messages vanish".into()));
    }
    let c = q_max / peak;
    let s_k = s_k * c;
    let s = s * c;
    let x = x * c;
    let eps_k = eps_k_rel * norm1(s_k.as_slice());
    Ok(MessageEnsemble {
        phi,
        s_k,
        s,
        x,
        k,
        eps_k,
        q_max,
    })
}

/// `20 log10 ||x - x_hat||_2`; negative infinity when the vectors coincide.
pub fn error_db(x: &[f64], x_hat: &[f64]) -> f64 {
    assert_eq!(x.len(), x_hat.len(), "error_db needs equal lengths");
    let diff: Vec<f64> = x.iter().zip(x_hat).map(|(a, b)| a - b).collect();
    let e = norm2(&diff);
    if e == 0.0 {
        f64::NEG_INFINITY
    } else {
        20.0 * e.log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_sparse_ensemble() {
        let m = generate_messages(100, 5, 0.0, 10.0, 1).unwrap();
        assert_eq!(m.s, m.s_k);
        assert_eq!(m.s_k.iter().filter(|v| **v != 0.0).count(), 5);
        assert!((m.x.amax() - 10.0).abs() < 1e-12);
        assert_eq!(m.eps_k, 0.0);
    }

    #[test]
    fn near_sparse_ratio_is_exact() {
        let m = generate_messages(100, 25, 0.2, 10.0, 2).unwrap();
        let ratio = (&m.s - &m.s_k).lp_norm(1) / m.s_k.lp_norm(1);
        assert!((ratio - 0.2).abs() < 1e-12, "{ratio}");
        assert!((m.eps_k_ratio() - 0.2).abs() < 1e-12);
        assert!(m.tail_l2() > 0.0);
    }

    #[test]
    fn phi_is_orthonormal_and_round_trips() {
        let m = generate_messages(30, 3, 0.02, 10.0, 3).unwrap();
        let gram = m.phi.transpose() * &m.phi;
        assert!((gram - DMatrix::identity(30, 30)).amax() < 1e-10);
        let s_back = m.phi.transpose() * &m.x;
        assert!((s_back - &m.s).amax() < 1e-10);
        assert!(m.x.amax() <= 10.0 * (1.0 + 1e-12));
    }

    #[test]
    fn error_db_values() {
        assert_eq!(error_db(&[1.0, 2.0], &[1.0, 2.0]), f64::NEG_INFINITY);
        assert!((error_db(&[0.1, 0.0], &[0.0, 0.0]) + 20.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_sparsity() {
        assert!(generate_messages(10, 0, 0.0, 10.0, 0).is_err());
        assert!(generate_messages(10, 11, 0.0, 10.0, 0).is_err());
        assert!(generate_messages(10, 2, -0.1, 10.0, 0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let m = generate_messages(8, 2, 0.002, 10.0, 4).unwrap();
        let text = serde_json::to_string(&m.to_file()).unwrap();
        let back = MessageEnsemble::from_file(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
