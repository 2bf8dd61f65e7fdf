use serde::{Deserialize, Serialize};

use super::tape::{Bindings, Tape, Var};
use super::tensor::{gemm, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::rng::SplitRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::Tanh => v.tanh(),
        }
    }

    fn apply_tape(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Layer widths including the input width: `[in, h1, ..., out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(
        layer_widths: Vec<usize>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let spec = Self {
            layer_widths,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `input → hidden… → output` with relu hidden units.
    pub fn relu_net(input: usize, hidden: &[usize], output: usize, out_act: Activation) -> Result<Self> {
        let mut w = vec![input];
        w.extend_from_slice(hidden);
        w.push(output);
        Self::new(w, Activation::Relu, out_act)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::config("an MLP needs an input and at least one layer"));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::config("layer widths must be positive"));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

pub fn weight_name(layer: usize) -> String {
    format!("l{layer}.weight")
}

pub fn bias_name(layer: usize) -> String {
    format!("l{layer}.bias")
}

fn scoped(prefix: &str, name: String) -> String {
    if prefix.is_empty() {
        name
    } else {
        format!("{prefix}/{name}")
    }
}

/// Glorot-uniform weights, zero biases. Weights are stored `[in, out]`.
pub fn init_params(spec: &MlpSpec, rng: &mut SplitRng) -> ParamSet {
    let mut p = ParamSet::new();
    for l in 0..spec.num_layers() {
        let (fan_in, fan_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.uniform_in(-limit, limit))
            .collect();
        p.insert(weight_name(l), Tensor::matrix(fan_in, fan_out, w).expect("sized"));
        p.insert(bias_name(l), Tensor::new(vec![fan_out], vec![0.0; fan_out]).expect("sized"));
    }
    p
}

fn check_params(spec: &MlpSpec, params: &ParamSet) -> Result<()> {
    for l in 0..spec.num_layers() {
        let (i, o) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
        let w = params
            .get(&weight_name(l))
            .ok_or_else(|| Error::config(format!("missing {}", weight_name(l))))?;
        let b = params
            .get(&bias_name(l))
            .ok_or_else(|| Error::config(format!("missing {}", bias_name(l))))?;
        if w.rows() != i || w.cols() != o || b.len() != o {
            return Err(Error::config(format!(
                "layer {l}: expected weight [{i},{o}] and bias [{o}], got {:?} and {:?}",
                w.shape(),
                b.shape()
            )));
        }
    }
    Ok(())
}

/// Forward pass on a batch (`[rows, in]`) or a single 1-D input.
pub fn mlp_forward(spec: &MlpSpec, params: &ParamSet, input: &Tensor) -> Result<Tensor> {
    check_params(spec, params)?;
    if input.cols() != spec.input_width() {
        return Err(Error::config(format!(
            "input width {} does not match MLP input {}",
            input.cols(),
            spec.input_width()
        )));
    }
    let rows = input.rows();
    let mut x = input.values().to_vec();
    for l in 0..spec.num_layers() {
        let (i, o) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
        let w = params.get(&weight_name(l)).expect("checked");
        let b = params.get(&bias_name(l)).expect("checked");
        let mut y = vec![0.0; rows * o];
        gemm(rows, i, o, &x, false, w.values(), false, &mut y, false);
        let act = spec.activation(l);
        for r in 0..rows {
            for (v, bb) in y[r * o..(r + 1) * o].iter_mut().zip(b.values()) {
                *v = act.apply(*v + bb);
            }
        }
        x = y;
    }
    let shape = if input.shape().len() == 1 {
        vec![spec.output_width()]
    } else {
        vec![rows, spec.output_width()]
    };
    Tensor::new(shape, x)
}

/// Record a forward pass on `tape`, reading parameters `prefix/l{i}.weight` etc.
pub fn mlp_forward_tape(
    tape: &mut Tape,
    spec: &MlpSpec,
    bindings: &Bindings,
    prefix: &str,
    input: Var,
) -> Result<Var> {
    if tape.value(input).cols() != spec.input_width() {
        return Err(Error::config(format!(
            "input width {} does not match MLP input {}",
            tape.value(input).cols(),
            spec.input_width()
        )));
    }
    let mut x = input;
    for l in 0..spec.num_layers() {
        let w = bindings.get(&scoped(prefix, weight_name(l)))?;
        let b = bindings.get(&scoped(prefix, bias_name(l)))?;
        let y = tape.affine(x, w, b)?;
        x = spec.activation(l).apply_tape(tape, y);
    }
    Ok(x)
}

/// An MLP together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: ParamSet,
}

impl Mlp {
    pub fn new(spec: MlpSpec, rng: &mut SplitRng) -> Result<Self> {
        spec.validate()?;
        let params = init_params(&spec, rng);
        Ok(Self { spec, params })
    }

    pub fn from_parts(spec: MlpSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        check_params(&spec, &params)?;
        Ok(Self { spec, params })
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        mlp_forward(&self.spec, &self.params, input)
    }

    /// Set every parameter to zero.
    pub fn zeroed(mut self) -> Self {
        for (_, t) in self.params.iter_mut() {
            t.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(params: &mut ParamSet, name: &str, vals: &[f64]) {
        let t = params.get_mut(name).unwrap();
        t.values_mut().copy_from_slice(vals);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = MlpSpec::new(vec![2, 2], Activation::Relu, Activation::Identity).unwrap();
        let mut p = init_params(&spec, &mut SplitRng::seed_from_u64(0));
        set(&mut p, "l0.weight", &[1.0, 0.0, 0.0, 1.0]);
        set(&mut p, "l0.bias", &[0.0, 0.0]);
        let out = mlp_forward(&spec, &p, &Tensor::row_vector(&[1.0, 2.0])).unwrap();
        assert_eq!(out.values(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_output_clips_negative() {
        let spec = MlpSpec::new(vec![2, 2], Activation::Relu, Activation::Relu).unwrap();
        let mut p = init_params(&spec, &mut SplitRng::seed_from_u64(0));
        set(&mut p, "l0.weight", &[1.0, 0.0, 0.0, 1.0]);
        set(&mut p, "l0.bias", &[0.0, 0.0]);
        let out = mlp_forward(&spec, &p, &Tensor::row_vector(&[-3.0, 4.0])).unwrap();
        assert_eq!(out.values(), &[0.0, 4.0]);
    }

    #[test]
    fn two_layer_tanh_hand_evaluation() {
        // hidden_j = tanh(0.5 + 0.5) = tanh(1); out = 0.5·tanh(1)·2
        let spec = MlpSpec::new(vec![2, 2, 1], Activation::Tanh, Activation::Identity).unwrap();
        let mut p = init_params(&spec, &mut SplitRng::seed_from_u64(0));
        set(&mut p, "l0.weight", &[0.5; 4]);
        set(&mut p, "l1.weight", &[0.5; 2]);
        let out = mlp_forward(&spec, &p, &Tensor::row_vector(&[1.0, 1.0])).unwrap();
        let want = 1.0f64.tanh() * 0.5 * 2.0;
        assert!((out.values()[0] - want).abs() < 1e-15);
        assert!((want - 0.761_594_155_955_764_9).abs() < 1e-15);
    }

    #[test]
    fn width_mismatch_is_config_error() {
        let spec = MlpSpec::new(vec![3, 4, 1], Activation::Relu, Activation::Identity).unwrap();
        let p = init_params(&spec, &mut SplitRng::seed_from_u64(0));
        let r = mlp_forward(&spec, &p, &Tensor::row_vector(&[1.0, 2.0]));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn spec_requires_a_layer() {
        assert!(MlpSpec::new(vec![3], Activation::Relu, Activation::Identity).is_err());
        assert!(MlpSpec::new(vec![3, 0], Activation::Relu, Activation::Identity).is_err());
    }

    #[test]
    fn forward_is_bit_reproducible_and_matches_tape() {
        let spec = MlpSpec::new(vec![3, 8, 8, 2], Activation::Tanh, Activation::Identity).unwrap();
        let p = init_params(&spec, &mut SplitRng::seed_from_u64(5));
        let x = Tensor::matrix(2, 3, vec![0.1, -0.4, 0.9, 1.2, 0.0, -0.3]).unwrap();
        let a = mlp_forward(&spec, &p, &x).unwrap();
        let b = mlp_forward(&spec, &p, &x).unwrap();
        assert_eq!(a, b);
        let mut tape = Tape::new();
        let bind = tape.bind_constants(&p);
        let xi = tape.constant(x.clone());
        let y = mlp_forward_tape(&mut tape, &spec, &bind, "", xi).unwrap();
        assert_eq!(tape.value(y).values(), a.values());
    }

    #[test]
    fn glorot_bounds_hold() {
        let spec = MlpSpec::new(vec![10, 30], Activation::Relu, Activation::Identity).unwrap();
        let p = init_params(&spec, &mut SplitRng::seed_from_u64(1));
        let lim = (6.0f64 / 40.0).sqrt();
        assert!(p.get("l0.weight").unwrap().values().iter().all(|v| v.abs() <= lim));
        assert!(p.get("l0.bias").unwrap().values().iter().all(|v| *v == 0.0));
    }
}
