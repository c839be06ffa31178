use super::arch::{ArchError, Architecture, ConvShape};
use super::gemm::gemm;
use crate::rng::Rng;

/// Training objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Loss {
    /// Mean over the batch of the summed squared error of every output.
    Regression,
    /// `lambda` times the squared error of all but the last output, plus
    /// `1 - lambda` times the logistic cross-entropy of the last output
    /// (a logit) against a `{0, 1}` target. Averaged over the batch.
    BehaviorCloning { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("parameter vector has {actual} entries, architecture needs {expected}")]
    ThetaLength { expected: usize, actual: usize },
    #[error("parameter {index} is not finite")]
    NonFinite { index: usize },
    #[error("{what}: expected {expected} values, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
}

#[derive(Clone, Copy, Debug)]
struct Span {
    weights: usize,
    bias: usize,
}

/// Offsets of each layer's weights and biases inside `theta`.
#[derive(Clone, Debug)]
struct Layout {
    convs: Vec<(ConvShape, Span)>,
    flat: usize,
    dense1: Span,
    dense2: Span,
    total: usize,
}

impl Layout {
    fn new(arch: &Architecture) -> Result<Self, ArchError> {
        arch.validate()?;
        let mut at = 0;
        let mut take = |n: usize| {
            let s = at;
            at += n;
            s
        };
        let convs = arch
            .conv_shapes()?
            .into_iter()
            .map(|s| {
                let weights = take(s.out_channels * s.patch_len());
                let bias = take(s.out_channels);
                (s, Span { weights, bias })
            })
            .collect();
        let flat = arch.flat_len()?;
        let dense1 = Span {
            weights: take(flat * arch.hidden),
            bias: take(arch.hidden),
        };
        let dense2 = Span {
            weights: take(arch.hidden * arch.outputs),
            bias: take(arch.outputs),
        };
        Ok(Self {
            convs,
            flat,
            dense1,
            dense2,
            total: at,
        })
    }
}

/// Network parameters together with the architecture they belong to.
#[derive(Clone, Debug)]
pub struct Model {
    arch: Architecture,
    layout: Layout,
    theta: Vec<f64>,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.theta == other.theta
    }
}

/// Deterministic initialization: weights uniform in `±sqrt(6 / fan_in)` for
/// layers followed by ReLU and `±sqrt(3 / fan_in)` for the output layer,
/// biases zero. Each first-layer filter is then shifted to zero mean.
pub fn init_model(arch: &Architecture, seed: u64) -> Result<Model, ModelError> {
    let layout = Layout::new(arch)?;
    let mut theta = vec![0.0; layout.total];
    let mut rng = Rng::new(seed);
    let mut fill = |theta: &mut [f64], at: usize, len: usize, fan_in: usize, gain: f64| {
        let bound = (gain / fan_in as f64).sqrt();
        for w in &mut theta[at..at + len] {
            *w = rng.range(-bound, bound);
        }
    };
    for (l, (s, span)) in layout.convs.iter().enumerate() {
        let len = s.out_channels * s.patch_len();
        fill(&mut theta, span.weights, len, s.patch_len(), 6.0);
        if l == 0 {
            // First-layer filters start as pure contrast detectors, so the
            // large constant level of a depth image does not swamp them.
            for f in theta[span.weights..span.weights + len].chunks_exact_mut(s.patch_len()) {
                let mean = f.iter().sum::<f64>() / f.len() as f64;
                f.iter_mut().for_each(|w| *w -= mean);
            }
        }
    }
    fill(
        &mut theta,
        layout.dense1.weights,
        layout.flat * arch.hidden,
        layout.flat,
        6.0,
    );
    fill(
        &mut theta,
        layout.dense2.weights,
        arch.hidden * arch.outputs,
        arch.hidden,
        3.0,
    );
    Ok(Model {
        arch: arch.clone(),
        layout,
        theta,
    })
}

/// Intermediate values kept for the backward pass.
struct Tape {
    batch: usize,
    /// Unfolded patches per conv stage, `patch_len × (batch · out_pixels)`.
    cols: Vec<Vec<f64>>,
    /// Post-ReLU conv outputs in channel-major `[C][B][H][W]` layout.
    acts: Vec<Vec<f64>>,
    flat: Vec<f64>,
    hidden: Vec<f64>,
    out: Vec<f64>,
}

fn im2col(x: &[f64], s: &ConvShape, batch: usize) -> Vec<f64> {
    let p = s.out_pixels();
    let row_len = batch * p;
    let mut cols = vec![0.0; s.patch_len() * row_len];
    for c in 0..s.in_channels {
        for ki in 0..s.kernel {
            for kj in 0..s.kernel {
                let row = (c * s.kernel + ki) * s.kernel + kj;
                let dst = &mut cols[row * row_len..(row + 1) * row_len];
                for b in 0..batch {
                    let plane = &x[(c * batch + b) * s.in_h * s.in_w..][..s.in_h * s.in_w];
                    for oy in 0..s.out_h {
                        let src = &plane[(oy * s.stride + ki) * s.in_w + kj..];
                        let d = &mut dst[b * p + oy * s.out_w..][..s.out_w];
                        for (ox, v) in d.iter_mut().enumerate() {
                            *v = src[ox * s.stride];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(dcols: &[f64], s: &ConvShape, batch: usize) -> Vec<f64> {
    let p = s.out_pixels();
    let row_len = batch * p;
    let mut dx = vec![0.0; s.in_channels * batch * s.in_h * s.in_w];
    for c in 0..s.in_channels {
        for ki in 0..s.kernel {
            for kj in 0..s.kernel {
                let row = (c * s.kernel + ki) * s.kernel + kj;
                let src = &dcols[row * row_len..(row + 1) * row_len];
                for b in 0..batch {
                    let plane = &mut dx[(c * batch + b) * s.in_h * s.in_w..][..s.in_h * s.in_w];
                    for oy in 0..s.out_h {
                        let base = (oy * s.stride + ki) * s.in_w + kj;
                        let g = &src[b * p + oy * s.out_w..][..s.out_w];
                        for (ox, v) in g.iter().enumerate() {
                            plane[base + ox * s.stride] += v;
                        }
                    }
                }
            }
        }
    }
    dx
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn relu_mask(grad: &mut [f64], act: &[f64]) {
    for (g, a) in grad.iter_mut().zip(act) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

fn add_row_bias(m: &mut [f64], cols: usize, bias: &[f64]) {
    for (row, b) in m.chunks_exact_mut(cols).zip(bias) {
        for v in row {
            *v += b;
        }
    }
}

fn add_col_bias(m: &mut [f64], bias: &[f64]) {
    for row in m.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn row_sums(m: &[f64], cols: usize, out: &mut [f64]) {
    for (row, o) in m.chunks_exact(cols).zip(out) {
        *o = row.iter().sum();
    }
}

fn col_sums(m: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for row in m.chunks_exact(out.len()) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-(g ln σ(z) + (1-g) ln(1-σ(z)))`, computed stably.
fn logistic_ce(z: f64, g: f64) -> f64 {
    z.max(0.0) - g * z + (-z.abs()).exp().ln_1p()
}

impl Model {
    pub fn from_parts(arch: Architecture, theta: Vec<f64>) -> Result<Self, ModelError> {
        let layout = Layout::new(&arch)?;
        if theta.len() != layout.total {
            return Err(ModelError::ThetaLength {
                expected: layout.total,
                actual: theta.len(),
            });
        }
        if let Some(index) = theta.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { index });
        }
        Ok(Self {
            arch,
            layout,
            theta,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub(crate) fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Replaces the parameters; the length must match.
    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<(), ModelError> {
        *self = Self::from_parts(self.arch.clone(), theta)?;
        Ok(())
    }

    fn check_input(&self, input: &[f64], batch: usize) -> Result<(), ModelError> {
        let expected = batch * self.arch.input_len();
        if input.len() != expected {
            return Err(ModelError::Shape {
                what: "input",
                expected,
                actual: input.len(),
            });
        }
        Ok(())
    }

    /// Outputs for a batch of `batch` inputs laid out sample-major
    /// (`[B][C][H][W]`); returns `[B][outputs]`.
    pub fn forward(&self, input: &[f64], batch: usize) -> Result<Vec<f64>, ModelError> {
        self.check_input(input, batch)?;
        Ok(self.run(input, batch).out)
    }

    fn run(&self, input: &[f64], batch: usize) -> Tape {
        let t = &self.theta;
        let arch = &self.arch;
        let mut cols_all = Vec::with_capacity(self.layout.convs.len());
        let mut acts = Vec::with_capacity(self.layout.convs.len());
        let flat = if self.layout.convs.is_empty() {
            input.to_vec()
        } else {
            let hw = arch.height * arch.width;
            let c_in = arch.in_channels;
            let mut x = vec![0.0; input.len()];
            for b in 0..batch {
                for c in 0..c_in {
                    x[(c * batch + b) * hw..][..hw]
                        .copy_from_slice(&input[(b * c_in + c) * hw..][..hw]);
                }
            }
            for (s, span) in &self.layout.convs {
                let cols = im2col(&x, s, batch);
                let n = batch * s.out_pixels();
                let mut z = vec![0.0; s.out_channels * n];
                let w = &t[span.weights..span.weights + s.out_channels * s.patch_len()];
                gemm(
                    s.out_channels,
                    s.patch_len(),
                    n,
                    w,
                    false,
                    &cols,
                    false,
                    0.0,
                    &mut z,
                );
                add_row_bias(&mut z, n, &t[span.bias..span.bias + s.out_channels]);
                relu(&mut z);
                cols_all.push(cols);
                acts.push(z.clone());
                x = z;
            }
            let (s, _) = self.layout.convs.last().unwrap();
            let p = s.out_pixels();
            let f = self.layout.flat;
            let mut flat = vec![0.0; batch * f];
            for c in 0..s.out_channels {
                for b in 0..batch {
                    flat[b * f + c * p..][..p].copy_from_slice(&x[(c * batch + b) * p..][..p]);
                }
            }
            flat
        };

        let (f, h, o) = (self.layout.flat, arch.hidden, arch.outputs);
        let d1 = self.layout.dense1;
        let mut hidden = vec![0.0; batch * h];
        gemm(
            batch,
            f,
            h,
            &flat,
            false,
            &t[d1.weights..d1.weights + f * h],
            false,
            0.0,
            &mut hidden,
        );
        add_col_bias(&mut hidden, &t[d1.bias..d1.bias + h]);
        relu(&mut hidden);

        let d2 = self.layout.dense2;
        let mut out = vec![0.0; batch * o];
        gemm(
            batch,
            h,
            o,
            &hidden,
            false,
            &t[d2.weights..d2.weights + h * o],
            false,
            0.0,
            &mut out,
        );
        add_col_bias(&mut out, &t[d2.bias..d2.bias + o]);

        Tape {
            batch,
            cols: cols_all,
            acts,
            flat,
            hidden,
            out,
        }
    }

    fn check_targets(&self, targets: &[f64], batch: usize) -> Result<(), ModelError> {
        let expected = batch * self.arch.outputs;
        if targets.len() != expected {
            return Err(ModelError::Shape {
                what: "targets",
                expected,
                actual: targets.len(),
            });
        }
        Ok(())
    }

    /// Batch loss and its derivative with respect to the outputs.
    fn loss_grad(&self, out: &[f64], targets: &[f64], batch: usize, loss: Loss) -> (f64, Vec<f64>) {
        let o = self.arch.outputs;
        let scale = 1.0 / batch as f64;
        let mut total = 0.0;
        let mut grad = vec![0.0; out.len()];
        let (lambda, logit) = match loss {
            Loss::Regression => (1.0, None),
            Loss::BehaviorCloning { lambda } => (lambda, Some(o - 1)),
        };
        for (b, (y, t)) in out.chunks_exact(o).zip(targets.chunks_exact(o)).enumerate() {
            for j in 0..o {
                let g = &mut grad[b * o + j];
                if Some(j) == logit {
                    total += (1.0 - lambda) * logistic_ce(y[j], t[j]);
                    *g = (1.0 - lambda) * (sigmoid(y[j]) - t[j]) * scale;
                } else {
                    let d = y[j] - t[j];
                    total += lambda * d * d;
                    *g = 2.0 * lambda * d * scale;
                }
            }
        }
        (total * scale, grad)
    }

    /// Batch loss without gradients.
    pub fn loss(
        &self,
        input: &[f64],
        targets: &[f64],
        batch: usize,
        loss: Loss,
    ) -> Result<f64, ModelError> {
        self.check_input(input, batch)?;
        self.check_targets(targets, batch)?;
        let out = self.run(input, batch).out;
        Ok(self.loss_grad(&out, targets, batch, loss).0)
    }

    /// Batch loss and `dLoss/dtheta`.
    pub fn backward(
        &self,
        input: &[f64],
        targets: &[f64],
        batch: usize,
        loss: Loss,
    ) -> Result<(f64, Vec<f64>), ModelError> {
        self.check_input(input, batch)?;
        self.check_targets(targets, batch)?;
        let tape = self.run(input, batch);
        let (value, dy) = self.loss_grad(&tape.out, targets, batch, loss);
        Ok((value, self.gradient(&tape, &dy)))
    }

    fn gradient(&self, tape: &Tape, dy: &[f64]) -> Vec<f64> {
        let t = &self.theta;
        let batch = tape.batch;
        let (f, h, o) = (self.layout.flat, self.arch.hidden, self.arch.outputs);
        let mut grad = vec![0.0; t.len()];

        let d2 = self.layout.dense2;
        gemm(
            h,
            batch,
            o,
            &tape.hidden,
            true,
            dy,
            false,
            0.0,
            &mut grad[d2.weights..d2.weights + h * o],
        );
        col_sums(dy, &mut grad[d2.bias..d2.bias + o]);
        let mut dh = vec![0.0; batch * h];
        gemm(
            batch,
            o,
            h,
            dy,
            false,
            &t[d2.weights..d2.weights + h * o],
            true,
            0.0,
            &mut dh,
        );
        relu_mask(&mut dh, &tape.hidden);

        let d1 = self.layout.dense1;
        gemm(
            f,
            batch,
            h,
            &tape.flat,
            true,
            &dh,
            false,
            0.0,
            &mut grad[d1.weights..d1.weights + f * h],
        );
        col_sums(&dh, &mut grad[d1.bias..d1.bias + h]);
        if self.layout.convs.is_empty() {
            return grad;
        }
        let mut dflat = vec![0.0; batch * f];
        gemm(
            batch,
            h,
            f,
            &dh,
            false,
            &t[d1.weights..d1.weights + f * h],
            true,
            0.0,
            &mut dflat,
        );

        let last = self.layout.convs.len() - 1;
        let (s, _) = &self.layout.convs[last];
        let p = s.out_pixels();
        let mut dz = vec![0.0; s.out_channels * batch * p];
        for c in 0..s.out_channels {
            for b in 0..batch {
                dz[(c * batch + b) * p..][..p].copy_from_slice(&dflat[b * f + c * p..][..p]);
            }
        }
        relu_mask(&mut dz, &tape.acts[last]);

        for l in (0..=last).rev() {
            let (s, span) = &self.layout.convs[l];
            let n = batch * s.out_pixels();
            let k = s.patch_len();
            let oc = s.out_channels;
            gemm(
                oc,
                n,
                k,
                &dz,
                false,
                &tape.cols[l],
                true,
                0.0,
                &mut grad[span.weights..span.weights + oc * k],
            );
            row_sums(&dz, n, &mut grad[span.bias..span.bias + oc]);
            if l == 0 {
                break;
            }
            let mut dcols = vec![0.0; k * n];
            gemm(
                k,
                oc,
                n,
                &t[span.weights..span.weights + oc * k],
                true,
                &dz,
                false,
                0.0,
                &mut dcols,
            );
            dz = col2im(&dcols, s, batch);
            relu_mask(&mut dz, &tape.acts[l - 1]);
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::arch::ConvSpec;

    pub(crate) fn toy(outputs: usize) -> Architecture {
        Architecture {
            in_channels: 3,
            height: 8,
            width: 8,
            convs: vec![
                ConvSpec {
                    out_channels: 4,
                    kernel: 3,
                    stride: 2,
                },
                ConvSpec {
                    out_channels: 5,
                    kernel: 2,
                    stride: 1,
                },
            ],
            hidden: 6,
            outputs,
        }
    }

    fn random_vec(n: usize, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        (0..n).map(|_| rng.range(lo, hi)).collect()
    }

    fn randomized(arch: &Architecture, seed: u64) -> Model {
        let mut m = init_model(arch, seed).unwrap();
        let n = m.theta().len();
        // Non-zero biases so every bias path carries gradient.
        m.set_theta(random_vec(n, seed + 100, -0.5, 0.5)).unwrap();
        m
    }

    fn max_rel_error(
        model: &Model,
        input: &[f64],
        targets: &[f64],
        batch: usize,
        loss: Loss,
    ) -> f64 {
        let (_, analytic) = model.backward(input, targets, batch, loss).unwrap();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for (i, &a) in analytic.iter().enumerate() {
            let mut plus = model.clone();
            plus.theta_mut()[i] += eps;
            let mut minus = model.clone();
            minus.theta_mut()[i] -= eps;
            let numeric = (plus.loss(input, targets, batch, loss).unwrap()
                - minus.loss(input, targets, batch, loss).unwrap())
                / (2.0 * eps);
            let denom = a.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((a - numeric).abs() / denom);
        }
        worst
    }

    #[test]
    fn regression_gradient_matches_finite_differences() {
        let arch = toy(3);
        let model = randomized(&arch, 1);
        let input = random_vec(2 * arch.input_len(), 2, 0.0, 1.0);
        let targets = random_vec(6, 3, -1.0, 1.0);
        let err = max_rel_error(&model, &input, &targets, 2, Loss::Regression);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn bc_gradient_matches_finite_differences() {
        let arch = toy(7);
        let model = randomized(&arch, 4);
        let input = random_vec(3 * arch.input_len(), 5, 0.0, 1.0);
        let mut targets = random_vec(21, 6, -1.0, 1.0);
        targets[6] = 1.0;
        targets[13] = 0.0;
        targets[20] = 1.0;
        let err = max_rel_error(
            &model,
            &input,
            &targets,
            3,
            Loss::BehaviorCloning { lambda: 0.9 },
        );
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn zero_model_outputs_zero() {
        let arch = Architecture::regressor(32);
        let mut m = init_model(&arch, 0).unwrap();
        let n = m.theta().len();
        m.set_theta(vec![0.0; n]).unwrap();
        let input = random_vec(arch.input_len(), 9, 0.0, 1.0);
        assert!(m.forward(&input, 1).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_seeded() {
        let arch = Architecture::regressor(64);
        assert_eq!(init_model(&arch, 5).unwrap(), init_model(&arch, 5).unwrap());
        assert_ne!(init_model(&arch, 5).unwrap(), init_model(&arch, 6).unwrap());
        assert_eq!(
            init_model(&arch, 5).unwrap().theta().len(),
            arch.param_count()
        );
    }

    #[test]
    fn first_layer_ignores_constant_input() {
        let arch = Architecture::regressor(16);
        let m = init_model(&arch, 3).unwrap();
        let a = m.forward(&vec![0.2; arch.input_len()], 1).unwrap();
        let b = m.forward(&vec![-0.7; arch.input_len()], 1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn batch_rows_are_independent() {
        let arch = toy(3);
        let m = randomized(&arch, 7);
        let input = random_vec(3 * arch.input_len(), 8, 0.0, 1.0);
        let all = m.forward(&input, 3).unwrap();
        let one = m
            .forward(&input[arch.input_len()..2 * arch.input_len()], 1)
            .unwrap();
        for (a, b) in all[3..6].iter().zip(&one) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let m = init_model(&toy(3), 0).unwrap();
        assert!(matches!(
            m.forward(&[0.0; 10], 1),
            Err(ModelError::Shape { .. })
        ));
        let input = vec![0.0; 192];
        assert!(m.backward(&input, &[0.0; 2], 1, Loss::Regression).is_err());
    }

    #[test]
    fn confident_correct_logit_costs_nothing() {
        assert!(logistic_ce(40.0, 1.0) < 1e-15);
        assert!(logistic_ce(-40.0, 0.0) < 1e-15);
        assert!((logistic_ce(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
