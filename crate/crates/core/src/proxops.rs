//! Proximal maps used by the solver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Entrywise soft threshold `sign(a) * max(|a| - mu, 0)`.
pub fn shrink(a: &DMatrix<f64>, mu: f64) -> Result<DMatrix<f64>> {
    if !(mu >= 0.0) {
        return Err(Error::param("mu", format!("shrinkage amount must be nonnegative, got {mu}")));
    }
    Ok(a.map(|x| shrink_scalar(x, mu)))
}

#[inline]
pub fn shrink_scalar(x: f64, mu: f64) -> f64 {
    x.signum() * (x.abs() - mu).max(0.0)
}

/// Per-singular-value weights in `[0, 1]`, nondecreasing in the index so
/// that larger singular values are penalized less.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::param("weights", format!("{w} outside [0, 1]")));
        }
        if weights.windows(2).any(|p| p[1] < p[0]) {
            return Err(Error::param("weights", "must be nondecreasing"));
        }
        Ok(Self(weights))
    }

    pub fn ones(len: usize) -> Self {
        Self(vec![1.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Thin SVD `M = A diag(sigma) B^T`, singular values nonincreasing.
#[derive(Debug, Clone)]
pub struct SvdTriple {
    pub left: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub right: DMatrix<f64>,
}

impl SvdTriple {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.left * DMatrix::from_diagonal(&self.singular_values) * self.right.transpose()
    }
}

/// Thin SVD through nalgebra's bidiagonalization, sorted descending.
pub fn thin_svd(m: &DMatrix<f64>) -> Result<SvdTriple> {
    check_finite(m)?;
    let svd = nalgebra::linalg::SVD::try_new(m.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Svd("did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    Ok(SvdTriple {
        left: u.select_columns(order.iter()),
        singular_values: DVector::from_iterator(order.len(), order.iter().map(|&i| svd.singular_values[i])),
        right: vt.select_rows(order.iter()).transpose(),
    })
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Svd("matrix has non-finite entries".into()))
    }
}

/// Singular values of `m` (nonincreasing) and the matching right (or left,
/// for wide matrices) singular vectors, from the eigendecomposition of the
/// small Gram matrix.
struct GramSvd {
    singular_values: Vec<f64>,
    /// Eigenvectors of the Gram matrix, one column per singular value.
    vectors: DMatrix<f64>,
    tall: bool,
}

fn gram_svd(m: &DMatrix<f64>) -> Result<GramSvd> {
    check_finite(m)?;
    let tall = m.nrows() >= m.ncols();
    let gram = if tall { m.tr_mul(m) } else { m * m.transpose() };
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, 0)
        .ok_or_else(|| Error::Svd("Gram eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    Ok(GramSvd {
        singular_values: order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect(),
        vectors: eig.eigenvectors.select_columns(order.iter()),
        tall,
    })
}

/// Singular values of `m`, nonincreasing.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(gram_svd(m)?.singular_values)
}

/// Result of [`weighted_svt`] together with the singular values of its input.
#[derive(Debug, Clone)]
pub struct SvtOutput {
    pub matrix: DMatrix<f64>,
    pub input_singular_values: Vec<f64>,
}

/// `A diag(shrink(sigma_i, w_i * tau)) B^T` where `A diag(sigma) B^T` is the
/// SVD of `m`. With nondecreasing weights this is the proximal map of
/// `tau * ||.||_{W,*}`.
///
/// Computed as `M B diag(s_i / sigma_i) B^T` (or `A diag(s_i / sigma_i) A^T M`
/// for wide `M`) from the Gram eigendecomposition, so only the small factor is
/// ever formed.
pub fn weighted_svt(m: &DMatrix<f64>, weights: &WeightVector, tau: f64) -> Result<SvtOutput> {
    let k = m.nrows().min(m.ncols());
    if weights.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for a matrix with {k} singular values",
            weights.len()
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    let g = gram_svd(m)?;
    let scale: Vec<f64> = g
        .singular_values
        .iter()
        .zip(weights.as_slice())
        .map(|(&s, &w)| if s > 0.0 { shrink_scalar(s, w * tau) / s } else { 0.0 })
        .collect();
    let v = &g.vectors;
    let mut scaled = v.clone();
    for (j, &f) in scale.iter().enumerate() {
        scaled.column_mut(j).scale_mut(f);
    }
    let projector = scaled * v.transpose();
    let matrix = if g.tall { m * projector } else { projector * m };
    Ok(SvtOutput {
        matrix,
        input_singular_values: g.singular_values,
    })
}

/// Scale of the Gaussian weight rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErfScale {
    Fixed(f64),
    /// Mean of the singular values being weighted.
    Adaptive,
}

/// `w_i = exp(-sigma_i^2 / scale^2)`.
pub fn erf_weights(singular_values: &[f64], scale: ErfScale) -> Result<WeightVector> {
    if singular_values.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::param("singular_values", "must be nonnegative"));
    }
    let sigma = match scale {
        ErfScale::Fixed(s) if !(s > 0.0) => {
            return Err(Error::param("erf_sigma", format!("must be positive, got {s}")))
        }
        ErfScale::Fixed(s) => s,
        ErfScale::Adaptive => {
            let mean = singular_values.iter().sum::<f64>() / singular_values.len().max(1) as f64;
            if mean == 0.0 {
                return Ok(WeightVector::ones(singular_values.len()));
            }
            mean
        }
    };
    let w = singular_values
        .iter()
        .map(|s| (-(s * s) / (sigma * sigma)).exp())
        .collect();
    WeightVector::new(w)
}

/// `sum_i w_i sigma_i(m)`.
pub fn weighted_nuclear_norm(m: &DMatrix<f64>, weights: &WeightVector) -> Result<f64> {
    let s = singular_values(m)?;
    if weights.len() != s.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} singular values",
            weights.len(),
            s.len()
        )));
    }
    Ok(s.iter().zip(weights.as_slice()).map(|(s, w)| s * w).sum())
}
