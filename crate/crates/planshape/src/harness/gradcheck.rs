//! Finite-difference check of the MLP backward pass on random networks.

use planshape_core::nn::gradcheck::{self, GradCheckReport, Offender};
use planshape_core::nn::{Activation, InitScheme, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOLERANCE: f64 = 1e-4;
pub const STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub nets: usize,
    pub max_rel_error: f64,
    /// Worst parameter per layer position over all networks.
    pub per_layer: Vec<Offender>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "gradcheck: {} networks, max relative error {:.3e} ({})\n",
            self.nets,
            self.max_rel_error,
            if self.passed() { "pass" } else { "FAIL" }
        );
        for o in &self.per_layer {
            out.push_str(&format!(
                "  layer {}: param {} analytic {:.6e} numeric {:.6e} rel {:.3e}\n",
                o.layer, o.index, o.analytic, o.numeric, o.rel_error
            ));
        }
        out
    }
}

/// Smallest |pre-activation| over the hidden layers of a ReLU network.
fn kink_margin(net: &Mlp, input: &[f64]) -> f64 {
    let sizes = net.sizes();
    let mut x = input.to_vec();
    let mut margin = f64::INFINITY;
    for l in 0..net.n_layers() - 1 {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        let p = &net.params()[net.layer_range(l)];
        let z: Vec<f64> = (0..fan_out)
            .map(|o| p[fan_in * fan_out + o] + (0..fan_in).map(|i| p[o * fan_in + i] * x[i]).sum::<f64>())
            .collect();
        margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
        x = z.iter().map(|&v| v.max(0.0)).collect();
    }
    margin
}

/// Random small network, input and output gradient.
///
/// Biases are randomised and ReLU inputs are resampled until every hidden
/// pre-activation is well clear of the kink at zero, where central
/// differences measure a one-sided slope rather than the derivative.
pub fn random_case(rng: &mut ChaCha8Rng) -> (Mlp, Vec<f64>, Vec<f64>) {
    let depth = rng.gen_range(1..=3);
    let mut sizes = vec![rng.gen_range(1..=6)];
    for _ in 0..depth {
        sizes.push(rng.gen_range(1..=8));
    }
    let activation = if rng.gen_bool(0.5) { Activation::Tanh } else { Activation::Relu };
    let mut net = Mlp::new(&sizes, activation, InitScheme::orthogonal(activation, 1.0), rng).expect("valid sizes");
    for l in 0..net.n_layers() {
        let range = net.layer_range(l);
        let bias_start = range.start + sizes[l] * sizes[l + 1];
        for b in &mut net.params_mut()[bias_start..range.end] {
            *b = rng.gen_range(-0.5..0.5);
        }
    }
    let input = loop {
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if activation != Activation::Relu || kink_margin(&net, &x) > 100.0 * STEP {
            break x;
        }
    };
    let out_grad = (0..*sizes.last().unwrap()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (net, input, out_grad)
}

/// Checks `n` random networks. `flip_sign` negates the analytic gradient,
/// which must make the suite fail.
pub fn run_suite(n: usize, seed: u64, flip_sign: bool) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_layer: Vec<Offender> = Vec::new();
    let mut max_rel_error: f64 = 0.0;
    for _ in 0..n {
        let (net, input, og) = random_case(&mut rng);
        let mut analytic = net.backward(&input, &og).expect("shapes match");
        if flip_sign {
            analytic.iter_mut().for_each(|g| *g = -*g);
        }
        let report: GradCheckReport =
            gradcheck::compare(&net, &input, &og, &analytic, STEP).expect("shapes match");
        max_rel_error = max_rel_error.max(report.max_rel_error);
        for o in report.per_layer {
            match per_layer.get_mut(o.layer) {
                Some(w) if o.rel_error > w.rel_error => *w = o,
                Some(_) => {}
                None => per_layer.push(o),
            }
        }
    }
    SuiteReport { nets: n, max_rel_error, per_layer }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flipped_sign_fails() {
        assert!(!run_suite(5, 1, true).passed());
    }
}
