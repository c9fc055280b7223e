//! Small dense helpers shared by the coding, source and decoder modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Haar-distributed orthogonal matrix: QR of an i.i.d. standard-normal matrix
/// with the signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal<R: Rng + ?Sized>(size: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(size, size, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..size {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Standard-normal vector scaled to unit Euclidean norm.
pub fn random_unit_vector<R: Rng + ?Sized>(size: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::<f64>::from_fn(size, |_, _| rng.sample(StandardNormal));
        let norm = v.norm();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Thin SVD `M = U diag(sigma) V^T` with `min(rows, cols)` singular triplets.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl ThinSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.sigma) * &self.v_t
    }
}

/// Thin SVD computed on the tall orientation of `m`, checked by reconstruction.
///
/// nalgebra's bidiagonal SVD occasionally loses accuracy on wide inputs, so
/// wide matrices are transposed first. If the reconstruction error is still
/// large the factorization is retried on power-of-two rescalings (which are
/// exact) and the most accurate attempt is kept.
pub fn thin_svd(m: &DMatrix<f64>) -> ThinSvd {
    let wide = m.nrows() < m.ncols();
    let tall = if wide { m.transpose() } else { m.clone() };
    let scale_ref = tall.amax().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale_ref * (tall.nrows().max(tall.ncols()) as f64);
    let mut best: Option<(f64, ThinSvd)> = None;
    for exp in [0, 10, -10, 23, -23] {
        let c = 2f64.powi(exp);
        let svd = (&tall * c).svd(true, true);
        let f = ThinSvd {
            u: svd.u.expect("requested U"),
            sigma: svd.singular_values / c,
            v_t: svd.v_t.expect("requested V^T"),
        };
        let err = (f.reconstruct() - &tall).amax();
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, f));
        }
        if err <= tol {
            break;
        }
    }
    let (_, f) = best.expect("at least one attempt");
    if wide {
        ThinSvd {
            u: f.v_t.transpose(),
            sigma: f.sigma,
            v_t: f.u.transpose(),
        }
    } else {
        f
    }
}
