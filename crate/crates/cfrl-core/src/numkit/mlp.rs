//! Multilayer perceptron with hand-derived backpropagation.
//!
//! Layers are dense `out = act(W x + b)`. The backward pass recomputes the
//! forward activations and returns gradients for every weight and bias plus
//! the gradient with respect to the input, for a loss whose gradient at the
//! network output is supplied by the caller.

use serde::{Deserialize, Serialize};

use super::linalg::{Matrix, Vector};
use super::rng::{content_hash, Rng};
use super::NumError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative as a function of the pre-activation value.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, NumError> {
        match tag {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Identity),
            _ => Err(NumError::Deserialize(format!("unknown activation tag {tag}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `[out_dim x in_dim]`.
    pub weight: Matrix,
    pub bias: Vector,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Gradients (or any other per-parameter quantity) shaped like an `MlpParams`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<(Matrix, Vector)>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGrads {
            layers: params
                .layers
                .iter()
                .map(|l| (Matrix::zeros(l.weight.rows, l.weight.cols), Vector::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in w.data.iter_mut().zip(&ow.data) {
                *x += y;
            }
            for (x, y) in b.0.iter_mut().zip(&ob.0) {
                *x += y;
            }
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        for (w, b) in self.layers.iter_mut() {
            for x in w.data.iter_mut() {
                *x *= s;
            }
            for x in b.0.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|(w, b)| w.is_finite() && b.is_finite())
    }
}

const MAGIC: &[u8; 4] = b"MLPB";
const FORMAT_VERSION: u32 = 1;

impl MlpParams {
    /// Build a network with the given layer dims. Hidden layers use
    /// `hidden_act`, the last layer `output_act`. Weights are initialized
    /// uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero.
    pub fn new(dims: &[usize], hidden_act: Activation, output_act: Activation, rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for k in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[k], dims[k + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut weight = Matrix::zeros(fan_out, fan_in);
            for w in weight.data.iter_mut() {
                *w = rng.uniform(-bound, bound);
            }
            let activation = if k + 1 == dims.len() - 1 { output_act } else { hidden_act };
            layers.push(Layer { weight, bias: Vector::zeros(fan_out), activation });
        }
        MlpParams { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows
    }

    fn check_chain(&self) -> Result<(), NumError> {
        for pair in self.layers.windows(2) {
            if pair[0].weight.rows != pair[1].weight.cols {
                return Err(NumError::DimMismatch {
                    what: "layer chain".to_string(),
                    expected: pair[0].weight.rows,
                    got: pair[1].weight.cols,
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &Vector) -> Result<Vector, NumError> {
        input.check_finite("mlp input")?;
        if input.len() != self.input_dim() {
            return Err(NumError::DimMismatch {
                what: "mlp input".to_string(),
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut x = input.clone();
        for layer in &self.layers {
            let mut pre = layer.weight.matvec(&x)?;
            for (p, b) in pre.0.iter_mut().zip(layer.bias.as_slice()) {
                *p = layer.activation.apply(*p + b);
            }
            x = pre;
        }
        Ok(x)
    }

    /// Backprop: gradients for every parameter and for the input, given the
    /// loss gradient at the network output.
    pub fn backward(&self, input: &Vector, output_grad: &Vector) -> Result<(MlpGrads, Vector), NumError> {
        if output_grad.len() != self.output_dim() {
            return Err(NumError::DimMismatch {
                what: "output grad".to_string(),
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }
        if input.len() != self.input_dim() {
            return Err(NumError::DimMismatch {
                what: "mlp input".to_string(),
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        // Forward, keeping pre-activations and layer inputs.
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_acts = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            layer_inputs.push(x.clone());
            let mut pre = layer.weight.matvec(&x)?;
            for (p, b) in pre.0.iter_mut().zip(layer.bias.as_slice()) {
                *p += b;
            }
            x = Vector(pre.0.iter().map(|&p| layer.activation.apply(p)).collect());
            pre_acts.push(pre);
        }

        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = output_grad.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            // delta through the activation.
            for (d, &p) in delta.0.iter_mut().zip(pre_acts[k].as_slice()) {
                *d *= layer.activation.derivative(p);
            }
            let inp = &layer_inputs[k];
            let (gw, gb) = &mut grads.layers[k];
            for r in 0..layer.weight.rows {
                let dr = delta.0[r];
                gb.0[r] = dr;
                let row = &mut gw.data[r * layer.weight.cols..(r + 1) * layer.weight.cols];
                for (g, &xi) in row.iter_mut().zip(inp.as_slice()) {
                    *g = dr * xi;
                }
            }
            delta = layer.weight.matvec_transposed(&delta)?;
        }
        Ok((grads, delta))
    }

    // --- serialization ---

    /// Versioned little-endian binary: magic, version, layer count, per-layer
    /// (out, in, activation tag) headers, then the raw f64 payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            out.extend_from_slice(&(layer.weight.rows as u32).to_le_bytes());
            out.extend_from_slice(&(layer.weight.cols as u32).to_le_bytes());
            out.push(layer.activation.tag());
        }
        for layer in &self.layers {
            for &w in &layer.weight.data {
                out.extend_from_slice(&w.to_le_bytes());
            }
            for &b in layer.bias.as_slice() {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NumError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(NumError::Deserialize("bad magic".to_string()));
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(NumError::Deserialize(format!("unsupported version {version}")));
        }
        let n_layers = cur.u32()? as usize;
        let mut headers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = cur.u32()? as usize;
            let cols = cur.u32()? as usize;
            let act = Activation::from_tag(cur.u8()?)?;
            headers.push((rows, cols, act));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (rows, cols, activation) in headers {
            let mut weight = Matrix::zeros(rows, cols);
            for w in weight.data.iter_mut() {
                *w = cur.f64()?;
            }
            let mut bias = Vector::zeros(rows);
            for b in bias.0.iter_mut() {
                *b = cur.f64()?;
            }
            layers.push(Layer { weight, bias, activation });
        }
        if cur.pos != bytes.len() {
            return Err(NumError::Deserialize("trailing bytes".to_string()));
        }
        let params = MlpParams { layers };
        params.check_chain()?;
        Ok(params)
    }

    /// Human-readable dump for debugging; not the canonical format.
    pub fn to_json_debug(&self) -> String {
        serde_json::to_string_pretty(self).expect("MlpParams serializes")
    }

    pub fn content_hash(&self) -> u64 {
        content_hash(&self.to_bytes())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NumError> {
        if self.pos + n > self.bytes.len() {
            return Err(NumError::Deserialize("truncated input".to_string()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NumError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NumError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NumError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_layer(weight: Matrix, bias: Vector, activation: Activation) -> MlpParams {
        MlpParams { layers: vec![Layer { weight, bias, activation }] }
    }

    #[test]
    fn zero_weights_pass_bias_through() {
        let net = single_layer(Matrix::zeros(2, 3), Vector(vec![0.5, -1.5]), Activation::Identity);
        let out = net.forward(&Vector(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out, Vector(vec![0.5, -1.5]));
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let net = single_layer(Matrix::identity(3), Vector::zeros(3), Activation::Identity);
        let x = Vector(vec![0.1, -0.2, 0.3]);
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn forward_matches_independent_oracle() {
        // 2-3-1 net with fixed params; expected value computed by a scripted
        // straight-line pass (tanh hidden, identity output).
        let net = MlpParams {
            layers: vec![
                Layer {
                    weight: Matrix::from_rows(vec![
                        vec![0.3, -0.1],
                        vec![-0.5, 0.8],
                        vec![0.2, 0.4],
                    ]),
                    bias: Vector(vec![0.1, -0.2, 0.0]),
                    activation: Activation::Tanh,
                },
                Layer {
                    weight: Matrix::from_rows(vec![vec![1.5, -0.7, 0.25]]),
                    bias: Vector(vec![0.05]),
                    activation: Activation::Identity,
                },
            ],
        };
        let out = net.forward(&Vector(vec![0.5, -0.2])).unwrap();
        // h = tanh([0.27, -0.61, 0.02]); y = 1.5*h0 - 0.7*h1 + 0.25*h2 + 0.05
        let h = [0.27f64.tanh(), (-0.61f64).tanh(), 0.02f64.tanh()];
        let expected = 1.5 * h[0] - 0.7 * h[1] + 0.25 * h[2] + 0.05;
        assert!((out.0[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_non_finite_input() {
        let net = single_layer(Matrix::identity(2), Vector::zeros(2), Activation::Identity);
        assert!(net.forward(&Vector(vec![f64::NAN, 0.0])).is_err());
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let net = single_layer(
            Matrix::from_rows(vec![vec![0.2, -0.3], vec![0.7, 0.1]]),
            Vector::zeros(2),
            Activation::Identity,
        );
        let input = Vector(vec![1.5, -2.0]);
        let ograd = Vector(vec![0.4, -1.0]);
        let (grads, _) = net.backward(&input, &ograd).unwrap();
        let (gw, gb) = &grads.layers[0];
        for r in 0..2 {
            for c in 0..2 {
                assert!((gw.get(r, c) - ograd.0[r] * input.0[c]).abs() < 1e-15);
            }
            assert!((gb.0[r] - ograd.0[r]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut rng = Rng::seed_from(1);
        let net = MlpParams::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng);
        let (grads, igrad) = net
            .backward(&Vector(vec![0.1, 0.2, 0.3]), &Vector::zeros(2))
            .unwrap();
        assert!(grads.layers.iter().all(|(w, b)| {
            w.data.iter().all(|&x| x == 0.0) && b.0.iter().all(|&x| x == 0.0)
        }));
        assert!(igrad.0.iter().all(|&x| x == 0.0));
    }

    /// Central finite differences over every parameter of a network; the
    /// independent oracle for the analytic backward pass.
    pub(crate) fn finite_diff_check(net: &MlpParams, input: &Vector, ograd: &Vector, tol: f64) {
        let h = 1e-5;
        let loss = |p: &MlpParams| -> f64 {
            let out = p.forward(input).unwrap();
            out.0.iter().zip(&ograd.0).map(|(y, g)| y * g).sum()
        };
        let (grads, _) = net.backward(input, ograd).unwrap();
        for (k, layer) in net.layers.iter().enumerate() {
            for idx in 0..layer.weight.data.len() + layer.bias.len() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                let analytic = if idx < layer.weight.data.len() {
                    plus.layers[k].weight.data[idx] += h;
                    minus.layers[k].weight.data[idx] -= h;
                    grads.layers[k].0.data[idx]
                } else {
                    let bi = idx - layer.weight.data.len();
                    plus.layers[k].bias.0[bi] += h;
                    minus.layers[k].bias.0[bi] -= h;
                    grads.layers[k].1 .0[bi]
                };
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (analytic - numeric).abs() / denom < tol,
                    "layer {k} idx {idx}: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences_on_random_net() {
        let mut rng = Rng::seed_from(42);
        let net = MlpParams::new(&[4, 8, 3], Activation::Tanh, Activation::Identity, &mut rng);
        let input = Vector((0..4).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let ograd = Vector((0..3).map(|_| rng.uniform(-1.0, 1.0)).collect());
        finite_diff_check(&net, &input, &ograd, 1e-4);
    }

    #[test]
    fn bytes_round_trip_is_bit_exact() {
        let mut rng = Rng::seed_from(5);
        let net = MlpParams::new(&[3, 5, 2], Activation::Relu, Activation::Tanh, &mut rng);
        let bytes = net.to_bytes();
        let back = MlpParams::from_bytes(&bytes).unwrap();
        assert_eq!(net, back);
        assert_eq!(bytes, back.to_bytes());
    }

    #[test]
    fn from_bytes_rejects_garbage() {
        assert!(MlpParams::from_bytes(b"nope").is_err());
        let mut bytes = MlpParams::new(
            &[2, 2],
            Activation::Relu,
            Activation::Identity,
            &mut Rng::seed_from(0),
        )
        .to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(MlpParams::from_bytes(&bytes).is_err());
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let mut rng = Rng::seed_from(11);
        let net = MlpParams::new(&[5, 7, 2], Activation::Relu, Activation::Tanh, &mut rng);
        let x = Vector((0..5).map(|_| rng.normal()).collect());
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert!(a.0.iter().zip(&b.0).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
