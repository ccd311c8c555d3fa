//! Central finite-difference verification of tape gradients.

use super::tape::{NodeId, Tape};
use crate::error::{PiwadError, Result};

/// Outcome of a finite-difference sweep over one input vector.
#[derive(Debug, Clone)]
pub struct FiniteDiffReport {
    /// Max over smooth coordinates of
    /// `|analytic - central| / (|analytic| + |central| + 1e-12)`.
    pub max_rel_error: f64,
    /// Per-coordinate relative error (NaN for flagged coordinates).
    pub per_coord: Vec<f64>,
    /// Coordinates where the one-sided slopes disagree (a kink under the
    /// probe), reported instead of counted as failures.
    pub non_smooth: Vec<usize>,
}

/// Compare the tape gradient of `build` against central differences at
/// `point`.
///
/// `build` must construct a scalar output from the single leaf it is given;
/// it is re-invoked on perturbed copies of `point`, so it must be a pure
/// function of the leaf value.
pub fn finite_diff_check<F>(build: F, point: &[f64], step: f64) -> Result<FiniteDiffReport>
where
    F: Fn(&mut Tape, NodeId) -> NodeId,
{
    if step <= 0.0 {
        return Err(PiwadError::Config(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }

    let eval = |xs: &[f64]| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(1, xs.len(), xs.to_vec());
        let out = build(&mut tape, x);
        let (r, c) = tape.shape(out);
        if r != 1 || c != 1 {
            return Err(PiwadError::Config(format!(
                "finite_diff_check requires a scalar output, got {r}x{c}"
            )));
        }
        let v = tape.scalar_value(out);
        if !v.is_finite() {
            return Err(PiwadError::Numeric(format!(
                "non-finite function value {v} during finite-difference check"
            )));
        }
        Ok(v)
    };

    let f0 = eval(point)?;

    let analytic = {
        let mut tape = Tape::new();
        let x = tape.leaf(1, point.len(), point.to_vec());
        let out = build(&mut tape, x);
        let g = tape.grad_nodes(out, &[x])?[0];
        tape.value(g).to_vec()
    };
    for (i, g) in analytic.iter().enumerate() {
        if !g.is_finite() {
            return Err(PiwadError::Numeric(format!(
                "non-finite analytic gradient at coordinate {i}"
            )));
        }
    }

    let mut per_coord = vec![f64::NAN; point.len()];
    let mut non_smooth = Vec::new();
    let mut max_rel = 0.0f64;

    for i in 0..point.len() {
        let mut plus = point.to_vec();
        plus[i] += step;
        let mut minus = point.to_vec();
        minus[i] -= step;
        let fp = eval(&plus)?;
        let fm = eval(&minus)?;

        let forward = (fp - f0) / step;
        let backward = (f0 - fm) / step;
        // One-sided slopes disagreeing beyond O(step) curvature means the
        // probe straddles a kink; report it rather than fail on it.
        if (forward - backward).abs() / (forward.abs() + backward.abs() + 1.0) > 1e-3 {
            non_smooth.push(i);
            continue;
        }

        let central = (fp - fm) / (2.0 * step);
        let rel = (analytic[i] - central).abs() / (analytic[i].abs() + central.abs() + 1e-12);
        per_coord[i] = rel;
        max_rel = max_rel.max(rel);
    }

    Ok(FiniteDiffReport {
        max_rel_error: max_rel,
        per_coord,
        non_smooth,
    })
}
