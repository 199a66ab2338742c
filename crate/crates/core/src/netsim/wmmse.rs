//! Weighted MMSE power control for the single-antenna interference channel.
//!
//! With `v_k = sqrt(p_k)` and real gains `g_ki = |h_ki|` the algorithm cycles
//! through the receiver, MSE-weight and transmitter updates. Each update is
//! the exact block minimizer of the weighted MSE objective, so the weighted
//! sum rate never decreases. The transmitter update is a clamped scalar
//! quadratic minimizer, which keeps `p_k` in `[0, 1]` exactly.

use super::{sum_rate_unchecked, NetworkInstance, PowerAllocation};
use crate::{Error, Result};

pub const DEFAULT_WMMSE_ITERS: usize = 100;
pub const DEFAULT_WMMSE_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct WmmseResult {
    pub power: PowerAllocation,
    /// Weighted sum rate at the start point and after every iteration.
    pub trace: Vec<f64>,
}

impl WmmseResult {
    pub fn objective(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }
}

pub fn wmmse(inst: &NetworkInstance, max_iters: usize, tol: f64) -> Result<WmmseResult> {
    if max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    let k = inst.users();
    let g: Vec<f64> = inst.channels().iter().map(|c| c.norm()).collect();
    let g2 = inst.gains();
    let alpha = inst.weights();
    let sigma2 = inst.noise();

    let mut v = vec![1.0; k];
    let mut u = vec![0.0; k];
    let mut omega = vec![0.0; k];
    let mut p: Vec<f64> = v.iter().map(|x| x * x).collect();
    let mut trace = vec![sum_rate_unchecked(inst, &p)];

    for _ in 0..max_iters {
        for rx in 0..k {
            let received: f64 = (0..k).map(|tx| g2[rx * k + tx] * v[tx] * v[tx]).sum::<f64>()
                + sigma2[rx];
            u[rx] = g[rx * k + rx] * v[rx] / received;
            let mse = 1.0 - u[rx] * g[rx * k + rx] * v[rx];
            omega[rx] = 1.0 / mse.max(f64::MIN_POSITIVE);
        }
        for tx in 0..k {
            let denom: f64 = (0..k)
                .map(|rx| alpha[rx] * omega[rx] * u[rx] * u[rx] * g2[rx * k + tx])
                .sum();
            let num = alpha[tx] * omega[tx] * u[tx] * g[tx * k + tx];
            v[tx] = if denom > 0.0 {
                (num / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        for (pk, vk) in p.iter_mut().zip(&v) {
            *pk = (vk * vk).min(1.0);
        }
        let prev = *trace.last().unwrap();
        let obj = sum_rate_unchecked(inst, &p);
        trace.push(obj);
        if (obj - prev).abs() <= tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(WmmseResult {
        power: PowerAllocation::new(p)?,
        trace,
    })
}
