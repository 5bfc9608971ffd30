use super::{Matrix, Tape, Var};
use crate::error::{Error, Result};

/// Denominator floor for [`relative_error`]. Below this magnitude the
/// comparison degrades gracefully to an absolute one, because central
/// differences at `eps = 1e-6` carry roughly `1e-10` of round-off.
pub const REL_ERR_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_relative_error: f64,
    /// Leaf position and entry index of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    /// Analytic and numeric derivative at `worst`.
    pub worst_values: (f64, f64),
    pub entries_checked: usize,
}

/// Compares tape gradients of `loss` against central finite differences for
/// every entry of every leaf in `leaves`.
///
/// The tape is restored to its original leaf values on return.
pub fn finite_difference_check(
    tape: &mut Tape,
    leaves: &[Var],
    loss: Var,
    eps: f64,
) -> Result<FdReport> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let grads = tape.backward(loss)?;
    let mut report = FdReport {
        max_relative_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        entries_checked: 0,
    };
    for (li, &leaf) in leaves.iter().enumerate() {
        let original = tape.value(leaf).clone();
        let (rows, cols) = original.shape();
        let analytic = grads
            .get(leaf)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(rows, cols));
        for idx in 0..original.len() {
            let mut plus = original.clone();
            plus.as_mut_slice()[idx] += eps;
            tape.set_leaf(leaf, plus)?;
            tape.replay()?;
            let f_plus = tape.value(loss)[(0, 0)];

            let mut minus = original.clone();
            minus.as_mut_slice()[idx] -= eps;
            tape.set_leaf(leaf, minus)?;
            tape.replay()?;
            let f_minus = tape.value(loss)[(0, 0)];

            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let err = relative_error(analytic.as_slice()[idx], numeric);
            report.entries_checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some((li, idx));
                report.worst_values = (analytic.as_slice()[idx], numeric);
            }
        }
        tape.set_leaf(leaf, original)?;
    }
    tape.replay()?;
    Ok(report)
}
