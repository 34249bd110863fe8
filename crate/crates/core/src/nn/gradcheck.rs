//! Central finite-difference checks of tape gradients.

use super::{Graph, ParamSet, Result, Tape, Var};

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare tape gradients of `loss` against central differences at the given
/// flat coordinates `(block, element)`, returning the worst relative error.
///
/// `loss` must be a deterministic function of the parameters.
pub fn max_relative_error<F>(params: &ParamSet, coords: &[(usize, usize)], h: f64, floor: f64, loss: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let l = loss(&mut tape, &vars)?;
    let grads = tape.backward(l)?;
    let analytic: Vec<_> = vars.iter().map(|v| grads.wrt(*v)).collect();

    let eval = |ps: &ParamSet| -> Result<f64> {
        let mut t = Tape::new();
        let vs = ps.bind(&mut t);
        let l = loss(&mut t, &vs)?;
        Ok(t.value(&l).item())
    };

    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for &(block, elem) in coords {
        let orig = probe.tensors()[block].data()[elem];
        probe.tensors_mut()[block].data_mut()[elem] = orig + h;
        let up = eval(&probe)?;
        probe.tensors_mut()[block].data_mut()[elem] = orig - h;
        let down = eval(&probe)?;
        probe.tensors_mut()[block].data_mut()[elem] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[block].data()[elem], numeric, floor));
    }
    Ok(worst)
}

/// Every coordinate of every block.
pub fn all_coords(params: &ParamSet) -> Vec<(usize, usize)> {
    params.tensors().iter().enumerate().flat_map(|(b, t)| (0..t.len()).map(move |e| (b, e))).collect()
}
