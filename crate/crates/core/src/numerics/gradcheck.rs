//! Central finite differences, used as an independent check on [`super::Tape`].

use super::{NumericsError, ParamSet};

/// Magnitude below which a gradient component is compared absolutely rather
/// than relatively. Relative error is undefined when both sides vanish.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `(f(p + eps·e) - f(p - eps·e)) / (2·eps)` for every coordinate of every path.
///
/// `f` must be deterministic; each call receives a full parameter set with a
/// single coordinate perturbed.
pub fn finite_difference_gradient<F>(mut f: F, params: &ParamSet, eps: f64) -> ParamSet
where
    F: FnMut(&ParamSet) -> f64,
{
    let mut work = params.clone();
    let mut out = params.zeros_like();
    let paths: Vec<String> = params.paths().map(str::to_string).collect();
    for path in &paths {
        let n = params.get(path).expect("path from same set").len();
        for i in 0..n {
            let orig = params.get(path).expect("path from same set").data()[i];
            work.get_mut(path).expect("cloned set").data_mut()[i] = orig + eps;
            let plus = f(&work);
            work.get_mut(path).expect("cloned set").data_mut()[i] = orig - eps;
            let minus = f(&work);
            work.get_mut(path).expect("cloned set").data_mut()[i] = orig;
            out.get_mut(path).expect("zeros_like keeps paths").data_mut()[i] = (plus - minus) / (2.0 * eps);
        }
    }
    out
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Worst elementwise relative error per path and overall.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub per_path: Vec<(String, f64)>,
    pub max: f64,
    pub worst_path: Option<String>,
}

pub fn max_relative_error(analytic: &ParamSet, numeric: &ParamSet) -> Result<GradCheckReport, NumericsError> {
    let mut per_path = Vec::with_capacity(analytic.len());
    let mut max = 0.0;
    let mut worst_path = None;
    for (path, a) in analytic.iter() {
        let n = numeric.get(path)?;
        if n.shape() != a.shape() {
            return Err(NumericsError::ParamMismatch(format!(
                "{path}: {:?} vs {:?}",
                a.shape(),
                n.shape()
            )));
        }
        let worst = a
            .data()
            .iter()
            .zip(n.data())
            .map(|(&x, &y)| relative_error(x, y))
            .fold(0.0, f64::max);
        if worst > max || worst_path.is_none() {
            max = f64::max(max, worst);
            worst_path = Some(path.to_string());
        }
        per_path.push((path.to_string(), worst));
    }
    Ok(GradCheckReport {
        per_path,
        max,
        worst_path,
    })
}
