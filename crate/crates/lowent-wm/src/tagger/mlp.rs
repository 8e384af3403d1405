//! Single-hidden-layer perceptron with a hand-written backward pass.
//!
//! The head maps a feature vector through one ReLU hidden layer to a single
//! output: a sigmoid probability for classification, a raw value for
//! regression. Parameters live in one flat buffer (`w1` row-major, then
//! `b1`, `w2`, `b2`) so the optimizer and finite-difference checks can
//! address every coordinate uniformly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Prng;

/// Output nonlinearity of the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    /// Sigmoid output trained with binary cross-entropy.
    Sigmoid,
    /// Linear output trained with squared error.
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    input_dim: usize,
    hidden_dim: usize,
    output: OutputKind,
    /// Flat parameters: `w1` (hidden x input, row-major) | `b1` | `w2` | `b2`.
    params: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy with predictions clamped to
/// `[1e-12, 1 - 1e-12]` so saturated outputs stay finite.
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::input(format!(
            "bce_loss needs matching non-empty slices, got {} and {}",
            predictions.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (&p, &y) in predictions.iter().zip(labels) {
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(total / predictions.len() as f64)
}

impl MlpHead {
    /// Xavier-uniform initialization from an explicit RNG.
    pub fn new(input_dim: usize, hidden_dim: usize, output: OutputKind, rng: &mut Prng) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::config("mlp dims must be >= 1"));
        }
        let n = hidden_dim * input_dim + hidden_dim + hidden_dim + 1;
        let mut params = Vec::with_capacity(n);
        let limit1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        for _ in 0..hidden_dim * input_dim {
            params.push((rng.next_f64() * 2.0 - 1.0) * limit1);
        }
        params.extend(std::iter::repeat(0.0).take(hidden_dim));
        let limit2 = (6.0 / (hidden_dim + 1) as f64).sqrt();
        for _ in 0..hidden_dim {
            params.push((rng.next_f64() * 2.0 - 1.0) * limit2);
        }
        params.push(0.0);
        Ok(MlpHead { input_dim, hidden_dim, output, params })
    }

    pub fn from_params(
        input_dim: usize,
        hidden_dim: usize,
        output: OutputKind,
        params: Vec<f64>,
    ) -> Result<Self> {
        let expect = hidden_dim * input_dim + 2 * hidden_dim + 1;
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::config("mlp dims must be >= 1"));
        }
        if params.len() != expect {
            return Err(Error::format(format!(
                "expected {expect} parameters, got {}",
                params.len()
            )));
        }
        Ok(MlpHead { input_dim, hidden_dim, output, params })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_kind(&self) -> OutputKind {
        self.output
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param(&self, i: usize) -> f64 {
        self.params[i]
    }

    /// Sets one parameter coordinate; used by finite-difference checks.
    pub fn set_param(&mut self, i: usize, value: f64) {
        self.params[i] = value;
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let (h, d) = (self.hidden_dim, self.input_dim);
        let w1 = &self.params[..h * d];
        let b1 = &self.params[h * d..h * d + h];
        let w2 = &self.params[h * d + h..h * d + 2 * h];
        let b2 = self.params[h * d + 2 * h];
        (w1, b1, w2, b2)
    }

    /// Forward pass for one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::input(format!(
                "feature vector has {} dims, head expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let (w1, b1, w2, b2) = self.split();
        let mut z2 = b2;
        for j in 0..self.hidden_dim {
            let mut z1 = b1[j];
            let row = &w1[j * self.input_dim..(j + 1) * self.input_dim];
            for (w, xi) in row.iter().zip(x) {
                z1 += w * xi;
            }
            if z1 > 0.0 {
                z2 += w2[j] * z1;
            }
        }
        Ok(match self.output {
            OutputKind::Sigmoid => sigmoid(z2),
            OutputKind::Linear => z2,
        })
    }

    /// Mean loss over a batch plus the gradient of that loss with respect
    /// to every parameter, in flat-buffer order. The loss is binary
    /// cross-entropy for sigmoid heads and mean squared error for linear
    /// heads; weight decay is applied by the optimizer, never here.
    pub fn loss_and_grads(&self, xs: &[&[f64]], ys: &[f64]) -> Result<(f64, Vec<f64>)> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::input(format!(
                "batch needs matching non-empty inputs and targets, got {} and {}",
                xs.len(),
                ys.len()
            )));
        }
        let (h, d) = (self.hidden_dim, self.input_dim);
        let (w1, b1, w2, b2) = self.split();
        let mut grads = vec![0.0; self.params.len()];
        let inv_n = 1.0 / xs.len() as f64;
        let mut loss = 0.0;
        let mut z1 = vec![0.0; h];

        for (x, &y) in xs.iter().zip(ys) {
            if x.len() != d {
                return Err(Error::input(format!(
                    "feature vector has {} dims, head expects {d}",
                    x.len()
                )));
            }
            let mut z2 = b2;
            for j in 0..h {
                let mut z = b1[j];
                let row = &w1[j * d..(j + 1) * d];
                for (w, xi) in row.iter().zip(*x) {
                    z += w * xi;
                }
                z1[j] = z;
                if z > 0.0 {
                    z2 += w2[j] * z;
                }
            }
            // dL/dz2 for the mean loss over the batch.
            let dz2 = match self.output {
                OutputKind::Sigmoid => {
                    let p = sigmoid(z2);
                    let pc = p.clamp(1e-12, 1.0 - 1e-12);
                    loss -= (y * pc.ln() + (1.0 - y) * (1.0 - pc).ln()) * inv_n;
                    (p - y) * inv_n
                }
                OutputKind::Linear => {
                    let err = z2 - y;
                    loss += err * err * inv_n;
                    2.0 * err * inv_n
                }
            };
            let (gw1, rest) = grads.split_at_mut(h * d);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(h);
            gb2[0] += dz2;
            for j in 0..h {
                if z1[j] > 0.0 {
                    gw2[j] += dz2 * z1[j];
                    let dz1 = dz2 * w2[j];
                    gb1[j] += dz1;
                    let grow = &mut gw1[j * d..(j + 1) * d];
                    for (g, xi) in grow.iter_mut().zip(*x) {
                        *g += dz1 * xi;
                    }
                }
            }
        }
        Ok((loss, grads))
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64, param_count: usize) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// One update: `theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}

/// On-disk form of a head: explicit dims plus flat row-major weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpHeadRepr {
    /// `[input_dim, hidden_dim, 1]`.
    pub dims: Vec<usize>,
    /// `w1` row-major (hidden x input).
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl From<&MlpHead> for MlpHeadRepr {
    fn from(head: &MlpHead) -> Self {
        let (w1, b1, w2, b2) = head.split();
        MlpHeadRepr {
            dims: vec![head.input_dim, head.hidden_dim, 1],
            w1: w1.to_vec(),
            b1: b1.to_vec(),
            w2: w2.to_vec(),
            b2,
        }
    }
}

impl TryFrom<MlpHeadRepr> for MlpHead {
    type Error = Error;

    fn try_from(repr: MlpHeadRepr) -> Result<MlpHead> {
        if repr.dims.len() != 3 || repr.dims[2] != 1 {
            return Err(Error::format(format!(
                "expected dims [input, hidden, 1], got {:?}",
                repr.dims
            )));
        }
        let (d, h) = (repr.dims[0], repr.dims[1]);
        if repr.w1.len() != h * d || repr.b1.len() != h || repr.w2.len() != h {
            return Err(Error::format("weight shapes do not match dims".to_string()));
        }
        let mut params = repr.w1;
        params.extend(repr.b1);
        params.extend(repr.w2);
        params.push(repr.b2);
        MlpHead::from_params(d, h, OutputKind::Sigmoid, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_matches_hand_values() {
        assert!(bce_loss(&[1.0], &[1.0]).unwrap() < 1e-11);
        assert!((bce_loss(&[0.5], &[1.0]).unwrap() - 2.0_f64.ln()).abs() <= 1e-12);
        assert!((bce_loss(&[0.5], &[0.0]).unwrap() - 2.0_f64.ln()).abs() <= 1e-12);
        let batch = bce_loss(&[0.8, 0.3], &[1.0, 0.0]).unwrap();
        let expected = -(0.8_f64.ln() + 0.7_f64.ln()) / 2.0;
        assert!((batch - expected).abs() <= 1e-12);
        assert!((batch - 0.2899).abs() <= 1e-4);
    }

    #[test]
    fn bce_is_finite_at_saturation() {
        let l = bce_loss(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!(l.is_finite());
        assert!(l > 20.0);
    }

    #[test]
    fn forward_is_deterministic_and_bounded_for_sigmoid() {
        let mut rng = Prng::seeded(8);
        let head = MlpHead::new(6, 10, OutputKind::Sigmoid, &mut rng).unwrap();
        let x = [0.5, -0.25, 0.0, 1.0, -1.0, 0.125];
        let p1 = head.forward(&x).unwrap();
        let p2 = head.forward(&x).unwrap();
        assert_eq!(p1, p2);
        assert!(p1 > 0.0 && p1 < 1.0);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = Prng::seeded(314);
        for kind in [OutputKind::Sigmoid, OutputKind::Linear] {
            let mut head = MlpHead::new(5, 7, kind, &mut rng).unwrap();
            let xs_store: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..5).map(|_| rng.next_f64() * 2.0 - 1.0).collect())
                .collect();
            let xs: Vec<&[f64]> = xs_store.iter().map(Vec::as_slice).collect();
            let ys: Vec<f64> = (0..6).map(|i| (i % 2) as f64).collect();
            let (_, grads) = head.loss_and_grads(&xs, &ys).unwrap();
            let step = 1e-6;
            for probe in 0..10 {
                let i = (rng.next_below(head.param_count() as u64)) as usize;
                let orig = head.param(i);
                head.set_param(i, orig + step);
                let (lp, _) = head.loss_and_grads(&xs, &ys).unwrap();
                head.set_param(i, orig - step);
                let (lm, _) = head.loss_and_grads(&xs, &ys).unwrap();
                head.set_param(i, orig);
                let numeric = (lp - lm) / (2.0 * step);
                let denom = grads[i].abs().max(numeric.abs()).max(1e-8);
                let rel = (grads[i] - numeric).abs() / denom;
                assert!(
                    rel < 1e-4,
                    "probe {probe} coord {i}: analytic {} vs numeric {numeric} (rel {rel})",
                    grads[i]
                );
            }
        }
    }

    #[test]
    fn adamw_with_zero_lr_leaves_parameters_unchanged() {
        let mut rng = Prng::seeded(77);
        let mut head = MlpHead::new(4, 5, OutputKind::Sigmoid, &mut rng).unwrap();
        let before = head.params().to_vec();
        let mut opt = AdamW::new(0.0, 2e-5, head.param_count());
        let xs_store = vec![vec![0.1, 0.2, 0.3, 0.4]];
        let xs: Vec<&[f64]> = xs_store.iter().map(Vec::as_slice).collect();
        let (_, grads) = head.loss_and_grads(&xs, &[1.0]).unwrap();
        opt.step(head.params_mut(), &grads);
        assert_eq!(head.params(), before.as_slice());
    }

    #[test]
    fn repr_round_trip_preserves_forward() {
        let mut rng = Prng::seeded(12);
        let head = MlpHead::new(8, 6, OutputKind::Sigmoid, &mut rng).unwrap();
        let repr: MlpHeadRepr = (&head).into();
        let json = serde_json::to_string(&repr).unwrap();
        let back: MlpHead = serde_json::from_str::<MlpHeadRepr>(&json)
            .unwrap()
            .try_into()
            .unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64) / 8.0 - 0.5).collect();
        assert_eq!(head.forward(&x).unwrap(), back.forward(&x).unwrap());
    }
}
