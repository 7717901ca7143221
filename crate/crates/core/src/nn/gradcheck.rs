//! Central finite-difference check of [`Mlp::backward`].

use alloc::vec::Vec;

use super::{Mlp, NnError};

/// Magnitude floor in the relative-error denominator, so entries whose true
/// gradient is (near) zero are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Offender {
    pub layer: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Worst parameter of each layer.
    pub per_layer: Vec<Offender>,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

fn probe(net: &Mlp, input: &[f64], output_grad: &[f64]) -> Result<f64, NnError> {
    Ok(net.forward(input)?.iter().zip(output_grad).map(|(y, g)| y * g).sum())
}

/// Numeric gradient of `<net(input), output_grad>` by central differences.
pub fn numeric_gradient(
    net: &Mlp,
    input: &[f64],
    output_grad: &[f64],
    h: f64,
) -> Result<Vec<f64>, NnError> {
    let mut work = net.clone();
    let mut out = Vec::with_capacity(net.num_params());
    for k in 0..net.num_params() {
        let base = net.params()[k];
        work.params_mut()[k] = base + h;
        let up = probe(&work, input, output_grad)?;
        work.params_mut()[k] = base - h;
        let down = probe(&work, input, output_grad)?;
        work.params_mut()[k] = base;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Compares `analytic` against central differences.
pub fn compare(
    net: &Mlp,
    input: &[f64],
    output_grad: &[f64],
    analytic: &[f64],
    h: f64,
) -> Result<GradCheckReport, NnError> {
    let numeric = numeric_gradient(net, input, output_grad, h)?;
    if analytic.len() != numeric.len() {
        return Err(NnError::ParamCount { expected: numeric.len(), got: analytic.len() });
    }
    let mut per_layer = Vec::with_capacity(net.n_layers());
    for layer in 0..net.n_layers() {
        let mut worst: Option<Offender> = None;
        for index in net.layer_range(layer) {
            let rel_error = relative_error(analytic[index], numeric[index]);
            if worst.as_ref().is_none_or(|w| rel_error > w.rel_error) {
                worst = Some(Offender {
                    layer,
                    index,
                    analytic: analytic[index],
                    numeric: numeric[index],
                    rel_error,
                });
            }
        }
        per_layer.extend(worst);
    }
    let max_rel_error = per_layer.iter().map(|o| o.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, per_layer })
}

/// Checks the network's own backward pass.
pub fn check(net: &Mlp, input: &[f64], output_grad: &[f64], h: f64) -> Result<GradCheckReport, NnError> {
    let analytic = net.backward(input, output_grad)?;
    compare(net, input, output_grad, &analytic, h)
}
