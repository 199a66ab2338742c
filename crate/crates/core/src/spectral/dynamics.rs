use nalgebra::DVector;

use super::{eig_sym, SpectralReport};
use crate::kernels::KernelMatrix;
use crate::{Error, Result};

/// Closed-form kernel gradient flow `du/dt = H (y - u)`, `u(0) = 0`, whose
/// residual is `y - u(t) = exp(-H t) y`.
#[derive(Debug, Clone)]
pub struct KernelFlow {
    report: SpectralReport,
    coeffs: DVector<f64>,
    y: Vec<f64>,
}

impl KernelFlow {
    pub fn new(h: &KernelMatrix, y: &[f64]) -> Result<Self> {
        Self::from_report(eig_sym(h, None)?, y)
    }

    pub fn from_report(report: SpectralReport, y: &[f64]) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("labels must be finite"));
        }
        let coeffs = report.project(y)?;
        Ok(Self {
            report,
            coeffs,
            y: y.to_vec(),
        })
    }

    pub fn report(&self) -> &SpectralReport {
        &self.report
    }

    /// Per-mode coefficients `(v_i . y) exp(-lambda_i t)`; negative
    /// eigenvalues from round-off are treated as zero.
    pub fn modes(&self, t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("time {t} must be non-negative")));
        }
        Ok(self
            .coeffs
            .iter()
            .zip(&self.report.eigenvalues)
            .map(|(c, &l)| c * (-l.max(0.0) * t).exp())
            .collect())
    }

    pub fn residual(&self, t: f64) -> Result<Vec<f64>> {
        let modes = DVector::from_vec(self.modes(t)?);
        Ok((&self.report.eigenvectors * modes).as_slice().to_vec())
    }

    pub fn residual_norm(&self, t: f64) -> Result<f64> {
        // The eigenvectors are orthonormal, so the norm is that of the modes.
        Ok(self.modes(t)?.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    pub fn output(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.y.iter().zip(self.residual(t)?).map(|(y, r)| y - r).collect())
    }

    /// Smallest `t` with `||y - u(t)|| <= fraction ||y||`, found by bisection.
    /// `None` if the residual never gets that small (mass in the null space).
    pub fn time_to_fraction(&self, fraction: f64) -> Result<Option<f64>> {
        let target = fraction * self.coeffs.norm();
        let floor: f64 = self
            .coeffs
            .iter()
            .zip(&self.report.eigenvalues)
            .filter(|(_, &l)| l <= 0.0)
            .map(|(c, _)| c * c)
            .sum::<f64>()
            .sqrt();
        if floor > target {
            return Ok(None);
        }
        if self.residual_norm(0.0)? <= target {
            return Ok(Some(0.0));
        }
        let mut hi = 1.0 / self.report.lambda_max().max(f64::MIN_POSITIVE);
        while self.residual_norm(hi)? > target {
            hi *= 2.0;
            if !hi.is_finite() {
                return Ok(None);
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.residual_norm(mid)? > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        Ok(Some(hi))
    }
}

pub struct Dynamics {
    pub times: Vec<f64>,
    pub residuals: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

pub fn kernel_dynamics(h: &KernelMatrix, y: &[f64], times: &[f64]) -> Result<Dynamics> {
    let flow = KernelFlow::new(h, y)?;
    let mut residuals = Vec::with_capacity(times.len());
    let mut outputs = Vec::with_capacity(times.len());
    for &t in times {
        let r = flow.residual(t)?;
        outputs.push(y.iter().zip(&r).map(|(a, b)| a - b).collect());
        residuals.push(r);
    }
    Ok(Dynamics {
        times: times.to_vec(),
        residuals,
        outputs,
    })
}

/// Integrates `du/dt = H (y - u)` from `u = 0` with classical RK4 and
/// returns the residual `y - u` at each of the non-decreasing `times`.
/// Each interval is split into equal steps no longer than `max_step`.
pub fn gradient_flow(h: &KernelMatrix, y: &[f64], times: &[f64], max_step: f64) -> Result<Vec<Vec<f64>>> {
    if y.len() != h.dim() {
        return Err(Error::invalid("label length does not match the kernel"));
    }
    if !(max_step > 0.0) {
        return Err(Error::invalid("step must be positive"));
    }
    if times.iter().any(|&t| !(t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("times must be non-negative and non-decreasing"));
    }
    let hm = h.entries();
    // The residual r = y - u obeys dr/dt = -H r.
    let f = |r: &DVector<f64>| -(hm * r);
    let mut r = DVector::from_column_slice(y);
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let span = t - now;
        if span > 0.0 {
            let steps = (span / max_step).ceil() as usize;
            let dt = span / steps as f64;
            for _ in 0..steps {
                let k1 = f(&r);
                let k2 = f(&(&r + &k1 * (0.5 * dt)));
                let k3 = f(&(&r + &k2 * (0.5 * dt)));
                let k4 = f(&(&r + &k3 * dt));
                r += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            }
            now = t;
        }
        out.push(r.as_slice().to_vec());
    }
    Ok(out)
}
