use super::{zero_grads, ParamRef, Tape, Var};
use crate::error::Result;

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, flat entry) of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub entries: usize,
    pub failures: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Entries whose analytic and numeric gradients are both below this magnitude
/// are compared by absolute difference.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Checks every entry of `params` with central differences of step `h`.
///
/// `f` must build a scalar loss on the tape it is handed and be deterministic.
/// Parameter gradients are zeroed first and hold the analytic gradient when
/// this returns.
pub fn finite_diff_check<F>(mut f: F, params: &[ParamRef], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape) -> Result<Var>,
{
    zero_grads(params);
    let mut tape = Tape::new();
    let loss = f(&mut tape)?;
    tape.backward(loss)?;
    drop(tape);

    let eval = |f: &mut F| -> Result<f64> {
        let mut t = Tape::new();
        let l = f(&mut t)?;
        Ok(t.scalar(l))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries: 0,
        failures: 0,
        tol,
    };
    for (pi, p) in params.iter().enumerate() {
        let n = p.numel();
        for k in 0..n {
            let original = p.borrow().value.data()[k];
            p.borrow_mut().value.data_mut()[k] = original + h;
            let plus = eval(&mut f)?;
            p.borrow_mut().value.data_mut()[k] = original - h;
            let minus = eval(&mut f)?;
            p.borrow_mut().value.data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let analytic = p.borrow().grad.data()[k];
            let err = relative_error(analytic, numeric);
            report.entries += 1;
            if err > tol {
                report.failures += 1;
            }
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err.max(report.max_rel_error);
                report.worst = Some((pi, k));
            }
        }
    }
    Ok(report)
}
