//! Exact Gaussian-process regression with a squared-exponential kernel.

use crate::error::{Error, Result};

pub const DEFAULT_LENGTH_SCALE: f64 = 0.5;
pub const DEFAULT_NOISE: f64 = 1e-4;
const JITTER: f64 = 1e-8;
const MIN_SIGNAL_VARIANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub prior_mean: f64,
}

impl KernelParams {
    /// Length-scale 0.5 per axis, signal variance from the spread of the
    /// observed values, noise 1e-4 and a constant prior mean at their mean.
    pub fn from_observations(dims: usize, values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        KernelParams {
            length_scales: vec![DEFAULT_LENGTH_SCALE; dims],
            signal_variance: var.max(MIN_SIGNAL_VARIANCE),
            noise_variance: DEFAULT_NOISE,
            prior_mean: mean,
        }
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }
}

/// A fitted posterior: Cholesky factor of K + σ²I and the weights
/// α = (K + σ²I)⁻¹ (y − μ).
#[derive(Debug, Clone)]
pub struct GpModel {
    points: Vec<Vec<f64>>,
    params: KernelParams,
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

pub fn gp_fit(points: &[Vec<f64>], values: &[f64], params: KernelParams) -> Result<GpModel> {
    let n = points.len();
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if values.len() != n {
        return Err(Error::Shape {
            expected: n,
            found: values.len(),
        });
    }
    if !(params.noise_variance > 0.0) {
        return Err(Error::invalid("noise variance must be positive"));
    }
    let dims = params.length_scales.len();
    if let Some(p) = points.iter().find(|p| p.len() != dims) {
        return Err(Error::Shape {
            expected: dims,
            found: p.len(),
        });
    }
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = params.kernel(&points[i], &points[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] += params.noise_variance;
    }
    let chol = match cholesky(&k, n) {
        Some(l) => l,
        None => {
            for i in 0..n {
                k[i * n + i] += JITTER;
            }
            cholesky(&k, n).ok_or(Error::NotPositiveDefinite)?
        }
    };
    let centered: Vec<f64> = values.iter().map(|v| v - params.prior_mean).collect();
    let alpha = cholesky_solve(&chol, n, &centered);
    Ok(GpModel {
        points: points.to_vec(),
        params,
        chol,
        alpha,
    })
}

pub fn gp_predict(model: &GpModel, x: &[f64]) -> (f64, f64) {
    model.predict(x)
}

impl GpModel {
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Posterior mean and standard deviation of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.points.len();
        let ks: Vec<f64> = self
            .points
            .iter()
            .map(|p| self.params.kernel(p, x))
            .collect();
        let mean =
            self.params.prior_mean + ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        let v = forward_substitute(&self.chol, n, &ks);
        let var = self.params.kernel(x, x) - v.iter().map(|t| t * t).sum::<f64>();
        (mean, var.max(0.0).sqrt())
    }
}

/// Lower-triangular factor of a row-major symmetric matrix, or `None`.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn forward_substitute(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let y = forward_substitute(l, n, b);
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(noise: f64) -> KernelParams {
        KernelParams {
            length_scales: vec![0.5, 0.5],
            signal_variance: 0.04,
            noise_variance: noise,
            prior_mean: 0.7,
        }
    }

    #[test]
    fn interpolates_observations() {
        let pts = vec![vec![0.1, 0.2], vec![0.8, 0.5], vec![0.4, 0.9]];
        let ys = [0.71, 0.93, 0.55];
        let m = gp_fit(&pts, &ys, params(1e-10)).unwrap();
        for (p, y) in pts.iter().zip(ys) {
            let (mean, std) = m.predict(p);
            assert!((mean - y).abs() < 1e-6);
            assert!(std <= 1e-3);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let pts = vec![vec![0.1, 0.2], vec![0.3, 0.1]];
        let m = gp_fit(&pts, &[0.9, 0.8], params(1e-4)).unwrap();
        let (mean, std) = m.predict(&[6.0, 6.0]);
        assert!((mean - 0.7).abs() < 1e-3);
        assert!((std - 0.2).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(gp_fit(&[], &[], params(1e-4)).is_err());
        assert!(gp_fit(&[vec![0.0, 0.0]], &[1.0], params(0.0)).is_err());
        assert!(gp_fit(&[vec![0.0]], &[1.0], params(1e-4)).is_err());
    }

    #[test]
    fn duplicated_points_stay_positive_definite() {
        let pts = vec![vec![0.5, 0.5]; 4];
        let m = gp_fit(&pts, &[0.6, 0.6, 0.61, 0.59], params(1e-4)).unwrap();
        assert!(m.predict(&[0.5, 0.5]).1 >= 0.0);
    }
}
