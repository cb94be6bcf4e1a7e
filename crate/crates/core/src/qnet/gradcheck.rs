use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Gradients, Layer, LossKind, Mode, NetError, NetworkSpec, QNetwork};

/// Central-difference perturbation.
pub const PERTURBATION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub parameters: usize,
    /// Coordinates whose ±perturbation crossed a relu, max-pool or loss-clamp
    /// boundary; finite differences are meaningless there.
    pub skipped_at_kinks: usize,
    pub within_tolerance: bool,
}

/// Relative error `|a − n| / max(|a|, |n|)`, zero when both are negligible.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

struct Problem {
    input: Vec<f64>,
    actions: Vec<usize>,
    targets: Vec<f64>,
    batch: usize,
    loss: LossKind,
}

impl Problem {
    fn evaluate(&self, net: &QNetwork<f64>) -> Result<(f64, Vec<f64>, Vec<u32>, Gradients<f64>), NetError> {
        let pass = net.forward(&self.input, self.batch, Mode::Train)?;
        let outputs = net.spec().outputs;
        let preds: Vec<f64> = self.actions.iter().enumerate().map(|(k, &a)| pass.output()[k * outputs + a]).collect();
        let lv = self.loss.batch(&preds, &self.targets)?;
        let mut g = vec![0.0; pass.output().len()];
        for (k, &a) in self.actions.iter().enumerate() {
            g[k * outputs + a] = lv.grad[k];
        }
        let mut sig = pass.kink_signature(&net.params().layers);
        if let LossKind::SquaredLogError { shift } = self.loss {
            sig.extend(preds.iter().map(|&p| u32::from(p > -shift)));
        }
        let grads = net.backward(&pass, &g);
        Ok((lv.loss, preds, sig, grads))
    }
}

/// Compares backprop gradients against central finite differences on a
/// randomly initialized network of the given architecture, in double
/// precision, with batch-norm in training mode.
pub fn gradient_check(spec: &NetworkSpec, batch: usize, seed: u64, tolerance: f64) -> Result<GradCheckReport, NetError> {
    gradient_check_with_loss(spec, batch, seed, tolerance, LossKind::default())
}

/// As [`gradient_check`], regressing onto the targets with `loss`.
pub fn gradient_check_with_loss(
    spec: &NetworkSpec,
    batch: usize,
    seed: u64,
    tolerance: f64,
    loss: LossKind,
) -> Result<GradCheckReport, NetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = QNetwork::<f64>::new(spec.clone(), &mut rng)?;
    // move biases and batch-norm affine terms off their trivial initial values
    for l in &mut net.params_mut().layers {
        match l {
            Layer::Conv { bias, .. } | Layer::Dense { bias, .. } => {
                bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1))
            }
            Layer::BatchNorm { gamma, beta, .. } => {
                gamma.iter_mut().for_each(|g| *g = rng.gen_range(0.5..1.5));
                beta.iter_mut().for_each(|b| *b = rng.gen_range(-0.2..0.2));
            }
            _ => {}
        }
    }
    let input: Vec<f64> = (0..batch * spec.input_len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let actions: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..spec.outputs)).collect();
    let targets: Vec<f64> = (0..batch).map(|_| rng.gen_range(-0.5..1.5)).collect();
    let problem = Problem { input, actions, targets, batch, loss };

    let (_, _, base_sig, analytic) = problem.evaluate(&net)?;
    let mut max_rel: f64 = 0.0;
    let mut skipped = 0;
    let mut total = 0;
    for (k, tensor) in analytic.tensors.iter().enumerate() {
        for i in 0..tensor.len() {
            total += 1;
            let orig = net.params().trainable()[k][i];
            let mut values = [0.0; 4];
            let mut crossed = false;
            for (slot, offset) in [2.0, 1.0, -1.0, -2.0].into_iter().enumerate() {
                net.params_mut().trainable_mut()[k][i] = orig + offset * PERTURBATION;
                let (loss, _, sig, _) = problem.evaluate(&net)?;
                values[slot] = loss;
                crossed |= sig != base_sig;
            }
            net.params_mut().trainable_mut()[k][i] = orig;
            if crossed {
                skipped += 1;
                continue;
            }
            // Fourth-order central stencil.
            let numeric = (-values[0] + 8.0 * values[1] - 8.0 * values[2] + values[3]) / (12.0 * PERTURBATION);
            let re = relative_error(tensor[i], numeric);
            max_rel = max_rel.max(re);
        }
    }
    Ok(GradCheckReport {
        max_relative_error: max_rel,
        parameters: total,
        skipped_at_kinks: skipped,
        within_tolerance: max_rel < tolerance,
    })
}
