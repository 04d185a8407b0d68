//! Central finite-difference verification of analytic gradients.

use crate::{Graph, Result, Tensor, Var};

/// Denominator floor for the relative error, so that components whose true
/// gradient is zero are judged on absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct FdReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Flat index of the worst component.
    pub worst: usize,
    pub passed: bool,
}

/// Compares `d f / d x` from a backward pass against central differences
/// with step `h`. `f` must build a scalar from the leaf it is handed and be
/// deterministic. Errors raised by `f` count as a failed check.
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, h: f64, tol: f64) -> FdReport
where
    F: for<'g> Fn(&'g Graph<f64>, Var<'g, f64>) -> Result<Var<'g, f64>>,
{
    let eval = |t: &Tensor<f64>| -> Option<f64> {
        let g = Graph::new();
        let v = g.constant(t.clone());
        f(&g, v).ok().map(|y| y.value().item())
    };
    let analytic = (|| {
        let g = Graph::new();
        let v = g.param(x.clone());
        let y = f(&g, v).ok()?;
        let grads = g.backward(y).ok()?;
        Some(grads.wrt(v).to_f64_vec())
    })();
    let Some(analytic) = analytic else {
        return failed(x.numel());
    };
    let mut numeric = Vec::with_capacity(x.numel());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = eval(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = eval(&probe);
        probe.data_mut()[i] = orig;
        match (plus, minus) {
            (Some(p), Some(m)) => numeric.push((p - m) / (2.0 * h)),
            _ => return failed(x.numel()),
        }
    }
    compare(analytic, numeric, tol)
}

/// Builds a report from precomputed gradients; used to check arbitrary
/// gradient sources, including deliberately corrupted ones.
pub fn compare(analytic: Vec<f64>, numeric: Vec<f64>, tol: f64) -> FdReport {
    let mut max_rel_err: f64 = 0.0;
    let mut max_abs_err: f64 = 0.0;
    let mut worst = 0;
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(REL_ERR_FLOOR);
        max_abs_err = max_abs_err.max(abs);
        if rel > max_rel_err || rel.is_nan() {
            max_rel_err = rel;
            worst = i;
        }
    }
    let passed = analytic.len() == numeric.len() && max_rel_err <= tol && max_rel_err.is_finite();
    FdReport {
        analytic,
        numeric,
        max_rel_err,
        max_abs_err,
        worst,
        passed,
    }
}

fn failed(n: usize) -> FdReport {
    FdReport {
        analytic: vec![f64::NAN; n],
        numeric: vec![f64::NAN; n],
        max_rel_err: f64::INFINITY,
        max_abs_err: f64::INFINITY,
        worst: 0,
        passed: false,
    }
}
