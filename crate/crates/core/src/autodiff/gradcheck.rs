//! Central finite-difference audit of tape gradients.

use super::params::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_SCALE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    /// `max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf, floor)`.
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error <= self.tolerance)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

fn evaluate<F>(params: &ParamStore, build: &F) -> Result<f64>
where
    F: Fn(&mut Tape<'_>) -> Result<NodeId>,
{
    let mut tape = Tape::new(params);
    let loss = build(&mut tape)?;
    Ok(tape.value(loss).item())
}

/// Compares the tape gradient of the scalar produced by `build` with
/// central differences of width `2 * step`, for every entry of every
/// parameter in `only` (all parameters when `None`).
///
/// `build` must be deterministic; it is evaluated twice at the
/// unperturbed point and a mismatch is reported as an error.
pub fn grad_check<F>(
    params: &ParamStore,
    build: F,
    step: f64,
    tolerance: f64,
    only: Option<&[ParamId]>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<NodeId>,
{
    let analytic = {
        let mut tape = Tape::new(params);
        let loss = build(&mut tape)?;
        tape.backward(loss)?
    };
    let first = evaluate(params, &build)?;
    let second = evaluate(params, &build)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Determinism { first, second });
    }

    let ids: Vec<ParamId> = match only {
        Some(ids) => ids.to_vec(),
        None => params.ids().collect(),
    };
    let mut work = params.clone();
    let mut report = GradCheckReport {
        step,
        tolerance,
        params: Vec::with_capacity(ids.len()),
    };
    for id in ids {
        let n = params.value(id).len();
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = params.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = orig + step;
            let plus = evaluate(&work, &build)?;
            work.value_mut(id).data_mut()[i] = orig - step;
            let minus = evaluate(&work, &build)?;
            work.value_mut(id).data_mut()[i] = orig;
            *slot = (plus - minus) / (2.0 * step);
        }
        let zeros = vec![0.0; n];
        let a = analytic.get(id).map_or(&zeros[..], |t| t.data());
        let inf = |xs: &[f64]| xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let scale = inf(a).max(inf(&numeric)).max(GRAD_SCALE_FLOOR);
        let max_diff = a
            .iter()
            .zip(&numeric)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        report.params.push(ParamCheck {
            name: params.get(id).name.clone(),
            entries: n,
            max_rel_error: max_diff / scale,
        });
    }
    Ok(report)
}
