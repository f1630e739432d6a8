//! Central finite-difference checks of [`Tape::backward`].

use super::{Result, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic| + |numeric|, 1e-4)`.
    pub max_rel_error: f64,
    /// `(input, flat index)` where the largest error occurred.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compare reverse-mode gradients of a scalar function against central
/// differences with step `h`.
///
/// `build` records the function on a fresh tape given one [`Var`] per input
/// and returns the loss. It is called once for the analytic pass and twice
/// per input element.
pub fn gradcheck<F>(inputs: &[Tensor], h: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok((tape, vars, loss))
    };

    let (tape, vars, loss) = eval(inputs)?;
    let grads = tape.backward(loss)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut work = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let zeros = Tensor::zeros(inputs[i].shape());
        let analytic = grads.get(*v).unwrap_or(&zeros);
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let (t, _, l) = eval(&work)?;
            let plus = t.value(l).item();
            work[i].data_mut()[j] = orig - h;
            let (t, _, l) = eval(&work)?;
            let minus = t.value(l).item();
            work[i].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[j];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-4);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (i, j);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
