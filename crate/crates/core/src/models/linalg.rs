use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::ModelError;

/// Cholesky factor of a symmetric positive-definite matrix together with the
/// diagonal jitter that was needed to obtain it.
#[derive(Clone, Debug)]
pub struct FactoredSpd {
    pub matrix: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl FactoredSpd {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `vᵀ A⁻¹ v` via one triangular solve: `‖L⁻¹ v‖²`.
    pub fn quad_form_inv(&self, v: &[f64]) -> f64 {
        quad_form_inv(&self.chol, v)
    }

    pub fn pivots(&self) -> Vec<f64> {
        self.chol.l_dirty().diagonal().iter().copied().collect()
    }
}

pub fn quad_form_inv(chol: &Cholesky<f64, Dyn>, v: &[f64]) -> f64 {
    let mut z = DVector::from_column_slice(v);
    chol.l_dirty().solve_lower_triangular_mut(&mut z);
    z.norm_squared()
}

/// Factorizes `a`, adding jitter `1e-10·tr(A)/q`, ×10 per step up to
/// `1e-2·tr(A)/q`, only when the plain factorization fails.
pub fn factor_with_jitter(a: DMatrix<f64>) -> Result<FactoredSpd, ModelError> {
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(FactoredSpd {
            matrix: a,
            chol,
            jitter: 0.0,
        });
    }
    let q = a.nrows().max(1) as f64;
    let scale = (a.trace() / q).abs().max(f64::MIN_POSITIVE);
    let mut jitter = 1e-10 * scale;
    let cap = 1e-2 * scale * (1.0 + 1e-9);
    while jitter <= cap {
        let mut shifted = a.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(shifted.clone()) {
            return Ok(FactoredSpd {
                matrix: shifted,
                chol,
                jitter,
            });
        }
        jitter *= 10.0;
    }
    Err(ModelError::NotPositiveDefinite { jitter: jitter / 10.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_semidefinite() {
        // rank one, trace 2
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = factor_with_jitter(a).unwrap();
        assert!(f.jitter > 0.0);
        assert!(f.pivots().iter().all(|p| *p > 0.0));
    }

    #[test]
    fn indefinite_fails() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            factor_with_jitter(a),
            Err(ModelError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn quad_form_matches_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = factor_with_jitter(a.clone()).unwrap();
        let v = [1.0, -2.0];
        let inv = a.try_inverse().unwrap();
        let dv = DVector::from_column_slice(&v);
        let direct = (dv.transpose() * inv * dv)[0];
        assert!((f.quad_form_inv(&v) - direct).abs() < 1e-14);
    }
}
