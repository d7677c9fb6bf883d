//! Cubic radial basis interpolant with a linear tail.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `s(x) = Σ_i γ_i ‖x − x_i‖³ + βᵀx + β₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfModel {
    centers: Vec<Vec<f64>>,
    gamma: Vec<f64>,
    beta: Vec<f64>,
    beta0: f64,
    center_error: f64,
}

fn cubic(a: &[f64], b: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    r2 * r2.sqrt()
}

impl RbfModel {
    /// Interpolates `values` at `centers` (all of the same dimension).
    pub fn fit(centers: &[Vec<f64>], values: &[f64]) -> Result<Self> {
        let n = centers.len();
        if n != values.len() {
            return Err(Error::Shape(format!("{n} centers but {} values", values.len())));
        }
        let dim = centers.first().map_or(0, Vec::len);
        if n < dim + 1 {
            return Err(Error::SingularRbf(format!(
                "{n} centers cannot determine a linear tail in dimension {dim}"
            )));
        }
        if centers.iter().any(|c| c.len() != dim) {
            return Err(Error::Shape("centers differ in dimension".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("RBF values must be finite"));
        }
        for i in 0..n {
            for j in 0..i {
                if centers[i] == centers[j] {
                    return Err(Error::SingularRbf(format!("centers {j} and {i} coincide")));
                }
            }
        }
        let m = n + dim + 1;
        let a = DMatrix::from_fn(m, m, |r, c| match (r < n, c < n) {
            (true, true) => cubic(&centers[r], &centers[c]),
            (true, false) => tail(&centers[r], c - n),
            (false, true) => tail(&centers[c], r - n),
            (false, false) => 0.0,
        });
        let rhs = DVector::from_fn(m, |r, _| if r < n { values[r] } else { 0.0 });
        let lu = a.clone().full_piv_lu();
        let mut x = lu
            .solve(&rhs)
            .ok_or_else(|| Error::SingularRbf("interpolation matrix is singular".into()))?;
        let residual = &rhs - &a * &x;
        if let Some(dx) = lu.solve(&residual) {
            x += dx;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularRbf("non-finite coefficients".into()));
        }
        let mut model = Self {
            centers: centers.to_vec(),
            gamma: x.rows(0, n).iter().copied().collect(),
            beta: x.rows(n, dim).iter().copied().collect(),
            beta0: x[n + dim],
            center_error: 0.0,
        };
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let err = centers
            .iter()
            .zip(values)
            .map(|(c, v)| (model.predict(c) - v).abs())
            .fold(0.0, f64::max);
        if !(err <= 1e-6 * scale) {
            return Err(Error::SingularRbf(format!(
                "interpolation residual {err:.3e} at the centers"
            )));
        }
        model.center_error = err;
        Ok(model)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let radial: f64 = self
            .centers
            .iter()
            .zip(&self.gamma)
            .map(|(c, g)| g * cubic(x, c))
            .sum();
        let linear: f64 = self.beta.iter().zip(x).map(|(b, x)| b * x).sum();
        radial + linear + self.beta0
    }

    /// Largest `|s(x_i) − g_i|` over the centers at fit time.
    pub fn center_error(&self) -> f64 {
        self.center_error
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn tail(&self) -> (&[f64], f64) {
        (&self.beta, self.beta0)
    }
}

fn tail(x: &[f64], k: usize) -> f64 {
    if k < x.len() {
        x[k]
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_reproduces_linear() {
        let centers = vec![
            vec![0.1, 0.2],
            vec![0.5, 0.1],
            vec![0.3, 0.6],
            vec![0.0, 0.0],
            vec![0.8, 0.1],
            vec![0.2, 0.3],
        ];
        let g = |x: &[f64]| 2.0 - 3.0 * x[0] + 0.5 * x[1];
        let values: Vec<f64> = centers.iter().map(|c| g(c)).collect();
        let m = RbfModel::fit(&centers, &values).unwrap();
        assert!(m.center_error() <= 1e-12);
        assert!(m.gamma().iter().all(|v| v.abs() < 1e-10));
        for x in [[0.4, 0.4], [0.05, 0.9], [0.7, 0.2]] {
            assert!((m.predict(&x) - g(&x)).abs() < 1e-10);
        }
    }

    #[test]
    fn duplicate_centers_are_singular() {
        let centers = vec![vec![0.1], vec![0.4], vec![0.1]];
        assert!(matches!(
            RbfModel::fit(&centers, &[1.0, 2.0, 3.0]),
            Err(Error::SingularRbf(_))
        ));
    }

    #[test]
    fn collinear_centers_cannot_fix_plane() {
        let centers = vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![1.0, 1.0]];
        assert!(RbfModel::fit(&centers, &[1.0, 2.0, 3.0]).is_err());
    }
}
