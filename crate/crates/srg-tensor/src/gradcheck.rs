//! Central finite-difference comparison for analytic gradients.
//!
//! Values are f32 with f64 accumulation, so the difference quotient carries
//! rounding noise of roughly `f32::EPSILON·|loss| / (2·eps)`. A probe passes
//! on relative error, on absolute error when both sides are tiny, or on a
//! retry at a shifted step size: a smaller step separates artifacts near
//! ReLU/max kinks, a larger one averages out loss quantization. Genuine
//! backward-rule bugs are systematic and fail at every step size.

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckCfg {
    pub eps: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for GradCheckCfg {
    fn default() -> Self {
        GradCheckCfg {
            eps: 1e-3,
            rel_tol: 1e-2,
            abs_tol: 1e-4,
        }
    }
}

#[derive(Debug)]
pub struct ProbeFailure {
    pub param: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Default)]
pub struct GradCheckReport {
    pub probes: usize,
    pub failures: Vec<ProbeFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn agree(analytic: f64, numeric: f64, cfg: &GradCheckCfg) -> bool {
    let diff = (analytic - numeric).abs();
    if diff <= cfg.abs_tol {
        return true;
    }
    diff / analytic.abs().max(numeric.abs()) < cfg.rel_tol
}

/// Central difference of `loss` w.r.t. one parameter element.
pub fn finite_diff<F>(params: &mut [Tensor], loss: &F, param: usize, element: usize, eps: f64) -> f64
where
    F: Fn(&[Tensor]) -> f32,
{
    let original = params[param].data()[element];
    params[param].data_mut()[element] = (original as f64 + eps) as f32;
    let plus = loss(params) as f64;
    params[param].data_mut()[element] = (original as f64 - eps) as f32;
    let minus = loss(params) as f64;
    params[param].data_mut()[element] = original;
    (plus - minus) / (2.0 * eps)
}

/// Compare analytic gradients against finite differences at the given probe
/// positions. `params` are perturbed in place and restored.
pub fn check_probes<F>(
    params: &mut [Tensor],
    analytic: &[Tensor],
    loss: F,
    probes: &[(usize, usize)],
    cfg: &GradCheckCfg,
) -> GradCheckReport
where
    F: Fn(&[Tensor]) -> f32,
{
    let mut report = GradCheckReport::default();
    for &(pi, ei) in probes {
        report.probes += 1;
        let a = analytic[pi].data()[ei] as f64;
        let n = finite_diff(params, &loss, pi, ei, cfg.eps);
        if agree(a, n, cfg) {
            continue;
        }
        let retried = [cfg.eps / 8.0, cfg.eps * 8.0]
            .iter()
            .any(|&eps| agree(a, finite_diff(params, &loss, pi, ei, eps), cfg));
        if retried {
            continue;
        }
        report.failures.push(ProbeFailure {
            param: pi,
            element: ei,
            analytic: a,
            numeric: n,
        });
    }
    report
}
