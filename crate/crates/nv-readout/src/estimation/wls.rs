//! Weighted linear least squares via QR of the weighted design matrix.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub struct WlsFit {
    pub params: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub r_squared: f64,
}

/// Solve min Σ wᵢ(yᵢ − (A·x)ᵢ)² with weights wᵢ = 1/σᵢ².
///
/// The design is row-scaled by √w and factored A_w = QR; the covariance is
/// (A_wᵀA_w)⁻¹ = R⁻¹R⁻ᵀ. R² is the weighted coefficient of determination.
pub fn solve(design: &DMatrix<f64>, y: &DVector<f64>, weights: &DVector<f64>) -> Result<WlsFit> {
    let (m, n) = design.shape();
    if y.len() != m || weights.len() != m {
        return Err(Error::Domain("design, data and weights disagree in length".into()));
    }
    if m < n {
        return Err(Error::Underdetermined { needed: n, got: m });
    }
    for &w in weights.iter() {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::Domain(format!("weights must be positive and finite, got {w}")));
        }
    }

    let sqrt_w = weights.map(f64::sqrt);
    let mut a_w = design.clone();
    for i in 0..m {
        for j in 0..n {
            a_w[(i, j)] *= sqrt_w[i];
        }
    }
    let y_w = y.component_mul(&sqrt_w);

    let qr = a_w.qr();
    let q = qr.q();
    let r = qr.r();
    for i in 0..n {
        if r[(i, i)].abs() < 1e-12 {
            return Err(Error::Degenerate("design matrix is rank deficient".into()));
        }
    }
    let qty = q.transpose() * &y_w;
    let params = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Degenerate("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Degenerate("triangular inverse failed".into()))?;
    let covariance = &r_inv * r_inv.transpose();

    let fitted = design * &params;
    let w_total: f64 = weights.iter().sum();
    let y_mean_w = weights.dot(y) / w_total;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..m {
        ss_res += weights[i] * (y[i] - fitted[i]).powi(2);
        ss_tot += weights[i] * (y[i] - y_mean_w).powi(2);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    Ok(WlsFit {
        params: params.iter().cloned().collect(),
        covariance,
        r_squared,
    })
}
