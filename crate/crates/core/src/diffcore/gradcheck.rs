use super::{DiffError, GradBuffer, ParamStore, Tape, Var};

/// Gradients smaller than this are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// `(analytic, numeric)` at the worst coordinate.
    pub worst_values: Option<(f64, f64)>,
    pub coordinates: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

fn evaluate<F>(store: &ParamStore, loss: &mut F) -> Result<f64, DiffError>
where
    F: FnMut(&mut Tape<'_>) -> Result<Var, DiffError>,
{
    let mut tape = Tape::new(store);
    let v = loss(&mut tape)?;
    Ok(tape.scalar(v))
}

/// Compares reverse-mode gradients of `loss` against central differences
/// `(f(θ + h eᵢ) − f(θ − h eᵢ)) / 2h` over every parameter coordinate.
///
/// `loss` must be deterministic. Parameter values are restored on return.
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    h: f64,
    mut loss: F,
) -> Result<GradCheckReport, DiffError>
where
    F: FnMut(&mut Tape<'_>) -> Result<Var, DiffError>,
{
    let mut analytic = GradBuffer::zeros_like(store);
    {
        let mut tape = Tape::new(store);
        let v = loss(&mut tape)?;
        tape.backward(v, &mut analytic)?;
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: None,
        coordinates: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).value.len();
        for i in 0..n {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + h;
            let plus = evaluate(store, &mut loss);
            store.get_mut(id).value.data_mut()[i] = orig - h;
            let minus = evaluate(store, &mut loss);
            store.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * h);
            let a = analytic.get(id)[i];
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((store.get(id).name.clone(), i));
                report.worst_values = Some((a, numeric));
            }
        }
    }
    Ok(report)
}
