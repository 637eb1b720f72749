//! Edge-response resolution fit.
//!
//! A linescan across a reflectance step blurred by a Gaussian point spread
//! of width σ follows
//!
//! ```text
//! f(x) = A · erf((x − c) / (√2 σ)) + B
//! ```
//!
//! which is fitted by Poisson-weighted nonlinear least squares
//! (Levenberg–Marquardt with Marquardt diagonal scaling).

use nalgebra::{Matrix4, Vector4};
use serde::Serialize;

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const GRADIENT_TOL: f64 = 1e-8;
const STEP_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-14;
/// σ lower bound as a fraction of the sample spacing.
const SIGMA_FLOOR_SAMPLES: f64 = 0.01;
/// Below this fraction of the spacing σ is not constrained by the data.
const UNRESOLVED_SAMPLES: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeParams {
    pub amplitude: f64,
    pub offset: f64,
    pub center_um: f64,
    pub sigma_um: f64,
}

impl EdgeParams {
    fn from_vec(v: &Vector4<f64>) -> Self {
        EdgeParams {
            amplitude: v[0],
            offset: v[1],
            center_um: v[2],
            sigma_um: v[3],
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.amplitude, self.offset, self.center_um, self.sigma_um]
    }

    /// Model value at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude
            * libm::erf((x - self.center_um) / (std::f64::consts::SQRT_2 * self.sigma_um))
            + self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeFitResult {
    pub params: EdgeParams,
    pub std_errors: EdgeParams,
    /// Euclidean norm of the weighted residuals.
    pub residual_norm: f64,
    pub reduced_chi_squared: f64,
    /// Largest cosine between the residual vector and a Jacobian column.
    pub relative_gradient: f64,
    pub iterations: usize,
    /// σ ended on (or near) its lower bound, under a tenth of the sample
    /// spacing: the step is sharper than the sampling resolves.
    pub sharper_than_sampling: bool,
}

/// Weighted least-squares problem for one linescan.
#[derive(Debug, Clone)]
pub struct EdgeModel {
    x: Vec<f64>,
    y: Vec<f64>,
    weight: Vec<f64>,
    sigma_floor: f64,
}

impl EdgeModel {
    /// Poisson weights `1/sqrt(max(count, 1))`.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 6 {
            return Err(Error::InvalidArgument(format!(
                "edge fit needs at least 6 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidArgument("non-finite linescan value".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument(
                "linescan positions must increase".into(),
            ));
        }
        let mut spacings: Vec<f64> = points.windows(2).map(|w| w[1].0 - w[0].0).collect();
        spacings.sort_by(f64::total_cmp);
        let spacing = spacings[spacings.len() / 2];
        Ok(EdgeModel {
            x: points.iter().map(|p| p.0).collect(),
            y: points.iter().map(|p| p.1).collect(),
            weight: points.iter().map(|p| 1.0 / p.1.max(1.0).sqrt()).collect(),
            sigma_floor: SIGMA_FLOOR_SAMPLES * spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    /// Weighted residuals `w_i (f(x_i) − y_i)` for parameters `[A, B, c, σ]`.
    pub fn residuals(&self, p: &[f64; 4]) -> Vec<f64> {
        let params = EdgeParams {
            amplitude: p[0],
            offset: p[1],
            center_um: p[2],
            sigma_um: p[3],
        };
        self.x
            .iter()
            .zip(&self.y)
            .zip(&self.weight)
            .map(|((&x, &y), &w)| w * (params.eval(x) - y))
            .collect()
    }

    /// Analytic Jacobian of [`residuals`](Self::residuals), one row per point.
    pub fn jacobian(&self, p: &[f64; 4]) -> Vec<[f64; 4]> {
        let [a, _, c, s] = *p;
        let two_over_sqrt_pi = std::f64::consts::FRAC_2_SQRT_PI;
        self.x
            .iter()
            .zip(&self.weight)
            .map(|(&x, &w)| {
                let z = (x - c) / (std::f64::consts::SQRT_2 * s);
                let g = two_over_sqrt_pi * (-z * z).exp();
                [
                    w * libm::erf(z),
                    w,
                    -w * a * g / (std::f64::consts::SQRT_2 * s),
                    -w * a * g * z / s,
                ]
            })
            .collect()
    }

    /// Starting point: half the data range for A, mid-range for B, the
    /// half-level crossing for c and a quarter of the 10–90 % rise distance
    /// for σ.
    pub fn initial_guess(&self) -> [f64; 4] {
        let min = self.y.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let third = (self.len() / 3).max(1);
        let head = self.y[..third].iter().sum::<f64>() / third as f64;
        let tail = self.y[self.len() - third..].iter().sum::<f64>() / third as f64;
        let rising = tail >= head;
        let half_range = (max - min) / 2.0;
        let a = if rising { half_range } else { -half_range };
        let b = (max + min) / 2.0;

        let mid = (self.x[0] + self.x[self.len() - 1]) / 2.0;
        let c = self.crossing_near(b, mid).unwrap_or(mid);
        let level = |frac: f64| {
            if rising {
                min + frac * (max - min)
            } else {
                max - frac * (max - min)
            }
        };
        let sigma = match (
            self.crossing_near(level(0.1), c),
            self.crossing_near(level(0.9), c),
        ) {
            (Some(x10), Some(x90)) => (x90 - x10).abs() / 4.0,
            _ => 0.0,
        };
        let spacing = self.sigma_floor / SIGMA_FLOOR_SAMPLES;
        [a, b, c, sigma.max(spacing / 2.0)]
    }

    /// Linearly interpolated crossing of `level` closest to `near`.
    fn crossing_near(&self, level: f64, near: f64) -> Option<f64> {
        self.x
            .windows(2)
            .zip(self.y.windows(2))
            .filter_map(|(xs, ys)| {
                let (d0, d1) = (ys[0] - level, ys[1] - level);
                if d0 == 0.0 {
                    Some(xs[0])
                } else if d0 * d1 < 0.0 {
                    Some(xs[0] + (xs[1] - xs[0]) * d0 / (d0 - d1))
                } else {
                    None
                }
            })
            .min_by(|a, b| (a - near).abs().total_cmp(&(b - near).abs()))
    }

    fn normal_equations(&self, p: &[f64; 4]) -> (Matrix4<f64>, Vector4<f64>, f64, f64) {
        let r = self.residuals(p);
        let jac = self.jacobian(p);
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        let mut col_norms = [0.0; 4];
        for (row, &ri) in jac.iter().zip(&r) {
            let v = Vector4::from(*row);
            jtj += v * v.transpose();
            jtr += v * ri;
            for k in 0..4 {
                col_norms[k] += row[k] * row[k];
            }
        }
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut rel = 0.0f64;
        for k in 0..4 {
            let mut g = jtr[k];
            // σ pinned on its floor with the gradient pushing further down
            if k == 3 && p[3] <= self.sigma_floor && g > 0.0 {
                g = 0.0;
            }
            let denom = col_norms[k].sqrt() * r_norm;
            if denom > 0.0 {
                rel = rel.max(g.abs() / denom);
            }
        }
        (jtj, jtr, r_norm, rel)
    }

    fn result(&self, p: &[f64; 4], iterations: usize) -> EdgeFitResult {
        let (jtj, _, r_norm, rel) = self.normal_equations(p);
        let dof = self.len().saturating_sub(4);
        let chi2 = if dof > 0 {
            r_norm * r_norm / dof as f64
        } else {
            0.0
        };
        let scale = if dof > 0 { chi2 } else { 1.0 };
        let errs = jtj
            .try_inverse()
            .map(|cov| Vector4::from_fn(|k, _| (cov[(k, k)] * scale).max(0.0).sqrt()))
            .unwrap_or_else(|| Vector4::repeat(f64::NAN));
        EdgeFitResult {
            params: EdgeParams::from_vec(&Vector4::from(*p)),
            std_errors: EdgeParams::from_vec(&errs),
            residual_norm: r_norm,
            reduced_chi_squared: chi2,
            relative_gradient: rel,
            iterations,
            sharper_than_sampling: p[3]
                < self.sigma_floor * (UNRESOLVED_SAMPLES / SIGMA_FLOOR_SAMPLES),
        }
    }
}

/// Fits the erf edge model to `(position_um, counts)` points.
pub fn fit_edge(points: &[(f64, f64)]) -> Result<EdgeFitResult> {
    let model = EdgeModel::new(points)?;
    fit_edge_from(&model, model.initial_guess())
}

pub fn fit_edge_from(model: &EdgeModel, start: [f64; 4]) -> Result<EdgeFitResult> {
    let floor = model.sigma_floor;
    let clamp = |mut p: [f64; 4]| {
        p[3] = p[3].max(floor);
        p
    };
    let cost_of = |p: &[f64; 4]| model.residuals(p).iter().map(|v| v * v).sum::<f64>();
    let data_norm: f64 = model
        .y
        .iter()
        .zip(&model.weight)
        .map(|(y, w)| (y * w).powi(2))
        .sum::<f64>()
        .sqrt();

    let mut p = clamp(start);
    let mut cost = cost_of(&p);
    let mut mu = 1e-3;
    for iteration in 1..=MAX_ITERATIONS {
        let (jtj, jtr, r_norm, rel) = model.normal_equations(&p);
        if rel <= GRADIENT_TOL || r_norm <= 1e-12 * data_norm {
            return Ok(model.result(&p, iteration - 1));
        }
        let diag_max = jtj.diagonal().max();
        let mut accepted = None;
        while mu < 1e20 {
            let mut damped = jtj;
            for k in 0..4 {
                damped[(k, k)] += mu * jtj[(k, k)].max(1e-12 * diag_max);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-jtr))) else {
                mu *= 4.0;
                continue;
            };
            let trial = clamp([
                p[0] + step[0],
                p[1] + step[1],
                p[2] + step[2],
                p[3] + step[3],
            ]);
            let trial_cost = cost_of(&trial);
            if trial_cost.is_finite() && trial_cost < cost {
                mu = (mu / 3.0).max(1e-12);
                accepted = Some((trial, trial_cost));
                break;
            }
            mu *= 4.0;
        }
        let Some((trial, trial_cost)) = accepted else {
            // No descent left at machine precision.
            return converged_or_error(model, &p, iteration);
        };
        let step_norm = (0..4)
            .map(|k| (trial[k] - p[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let drop = (cost - trial_cost) / cost;
        p = trial;
        cost = trial_cost;
        if step_norm <= STEP_TOL * (p_norm + STEP_TOL) || drop <= COST_TOL {
            return converged_or_error(model, &p, iteration);
        }
    }
    let best = model.result(&p, MAX_ITERATIONS);
    Err(Error::FitDidNotConverge {
        iterations: MAX_ITERATIONS,
        gradient: best.relative_gradient,
        best: Box::new(best),
    })
}

/// Accepts a stalled fit when it sits at a stationary point up to rounding.
fn converged_or_error(model: &EdgeModel, p: &[f64; 4], iterations: usize) -> Result<EdgeFitResult> {
    let res = model.result(p, iterations);
    if res.relative_gradient <= 1e-6 || res.residual_norm <= 1e-9 * (1.0 + res.params.offset.abs())
    {
        Ok(res)
    } else {
        Err(Error::FitDidNotConverge {
            iterations,
            gradient: res.relative_gradient,
            best: Box::new(res),
        })
    }
}

/// Mean and sample standard deviation of the fitted σ values.
pub fn sigma_summary(fits: &[EdgeFitResult]) -> Option<(f64, f64)> {
    if fits.is_empty() {
        return None;
    }
    let n = fits.len() as f64;
    let mean = fits.iter().map(|f| f.params.sigma_um).sum::<f64>() / n;
    let var = if fits.len() > 1 {
        fits.iter()
            .map(|f| (f.params.sigma_um - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}
