//! The four SR-Reward losses and the training step.
//!
//! All bootstrap and regression targets are computed from current values and
//! enter the graph as constants: the Bellman target (including `φ(s,a)`), the
//! next-state features for the predictor, the decay factors and the decayed
//! expert rewards for negative samples.

use serde::{Deserialize, Serialize};

use super::{alpha_from_distance, concat_rows, euclidean, l1_normalize_rows, SRHyper, SRModel};
use crate::dataset::{sample_batch, Batch, DemoDataset};
use crate::error::{Error, Result};
use crate::nnkit::{
    eval_with_grads, grad_check_against, mlp_forward, mlp_forward_tape, AdamState, Bindings, ParamSet, Tape,
    Tensor, Var,
};
use crate::rng::SplitRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bellman: f64,
    pub prediction: f64,
    pub magnitude: f64,
    pub neg_sample: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(bellman: f64, prediction: f64, magnitude: f64, neg_sample: f64) -> Self {
        Self {
            bellman,
            prediction,
            magnitude,
            neg_sample,
            total: bellman + prediction + magnitude + neg_sample,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.bellman, self.prediction, self.magnitude, self.neg_sample, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Perturbed copies of a batch, one per row, with what the losses saw.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeBatch {
    pub s: Tensor,
    pub a: Tensor,
    pub alpha: Vec<f64>,
    /// Model reward `r̃` at the perturbed pair.
    pub reward: Vec<f64>,
    /// Regression target `α · r` for `r̃`.
    pub decayed: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub breakdown: LossBreakdown,
    /// Model reward `r` on the batch pairs.
    pub reward: Vec<f64>,
    pub negatives: Option<NegativeBatch>,
}

/// Adam state over the merged `enc/`, `sr/`, `pred/` parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SROptimizer {
    pub adam: AdamState,
}

impl SROptimizer {
    pub fn new(model: &SRModel, lr: f64) -> Self {
        Self {
            adam: AdamState::new(&merged_params(model), lr),
        }
    }
}

const ENC: &str = "enc";
const SR: &str = "sr";
const PRED: &str = "pred";

fn merged_params(model: &SRModel) -> ParamSet {
    ParamSet::merged([
        (ENC, &model.encoder.params),
        (SR, &model.sr_head.params),
        (PRED, &model.predictor.params),
    ])
}

fn write_back(model: &mut SRModel, merged: &ParamSet) {
    model.encoder.params = merged.extract(ENC);
    model.sr_head.params = merged.extract(SR);
    model.predictor.params = merged.extract(PRED);
}

/// Stop-gradient quantities; computed once and reused as constants.
#[derive(Debug, Clone)]
struct Targets {
    bellman: Tensor,
    next_phi: Tensor,
    alpha: Vec<f64>,
    neg_target: Option<Tensor>,
}

struct Graph {
    total: Var,
    bellman: Var,
    prediction: Var,
    magnitude: Var,
    neg_sample: Option<Var>,
    reward: Var,
    neg_reward: Option<Var>,
    targets: Targets,
}

fn encode_tape(tape: &mut Tape, model: &SRModel, b: &Bindings, states: &Tensor) -> Result<Var> {
    let x = tape.constant(states.clone());
    let h = mlp_forward_tape(tape, &model.encoder.spec, b, ENC, x)?;
    Ok(tape.l1_normalize_rows(h))
}

fn build_graph(
    tape: &mut Tape,
    b: &Bindings,
    model: &SRModel,
    batch: &Batch,
    negatives: Option<(&Tensor, &Tensor)>,
    fixed: Option<&Targets>,
    hyper: &SRHyper,
) -> Result<Graph> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let n = batch.len();
    let phi_s = encode_tape(tape, model, b, &batch.s)?;
    let a = tape.constant(batch.a.clone());
    let phi_sa = tape.concat_cols(phi_s, a)?;
    let m = mlp_forward_tape(tape, &model.sr_head.spec, b, SR, phi_sa)?;
    let reward = tape.l2_norm_rows(m);

    let mut neg_phi_sa = None;
    let mut neg_reward = None;
    if let Some((s_neg, a_neg)) = negatives {
        if s_neg.rows() != n || a_neg.rows() != n {
            return Err(Error::contract("negative batch size differs from batch"));
        }
        let phi = encode_tape(tape, model, b, s_neg)?;
        let an = tape.constant(a_neg.clone());
        let x = tape.concat_cols(phi, an)?;
        let mn = mlp_forward_tape(tape, &model.sr_head.spec, b, SR, x)?;
        neg_phi_sa = Some(x);
        neg_reward = Some(tape.l2_norm_rows(mn));
    }

    let targets = match fixed {
        Some(t) => t.clone(),
        None => {
            let mut next_phi = model.encoder.forward(&batch.s_next)?;
            let cols = next_phi.cols();
            l1_normalize_rows(next_phi.values_mut(), cols);
            let next_in = concat_rows(&next_phi, &batch.a_next)?;
            let m_next = mlp_forward(&model.sr_head.spec, &model.target_sr_head, &next_in)?;
            let cur = tape.value(phi_sa);
            let d = cur.cols();
            let mut bell = cur.values().to_vec();
            for i in 0..n {
                let k = if batch.terminal[i] { 0.0 } else { hyper.gamma };
                for (o, v) in bell[i * d..(i + 1) * d].iter_mut().zip(m_next.row(i)) {
                    *o += k * v;
                }
            }
            let (alpha, neg_target) = match neg_phi_sa {
                Some(x) => {
                    let (cur, neg) = (tape.value(phi_sa), tape.value(x));
                    let r = tape.value(reward).values();
                    let alpha: Vec<f64> = (0..n)
                        .map(|i| alpha_from_distance(euclidean(cur.row(i), neg.row(i)), hyper.sigma))
                        .collect();
                    let tgt: Vec<f64> = alpha.iter().zip(r).map(|(al, r)| al * r).collect();
                    (alpha, Some(Tensor::matrix(n, 1, tgt)?))
                }
                None => (Vec::new(), None),
            };
            Targets {
                bellman: Tensor::matrix(n, d, bell)?,
                next_phi,
                alpha,
                neg_target,
            }
        }
    };

    let bell_t = tape.constant(targets.bellman.clone());
    let bellman = tape.mse(m, bell_t)?;

    let pred = mlp_forward_tape(tape, &model.predictor.spec, b, PRED, phi_sa)?;
    let next_t = tape.constant(targets.next_phi.clone());
    let prediction = tape.mse(pred, next_t)?;

    let excess = tape.add_scalar(reward, -1.0);
    let excess = tape.relu(excess);
    let excess = tape.square(excess);
    let magnitude = tape.mean(excess);

    let neg_sample = match (neg_reward, &targets.neg_target) {
        (Some(rn), Some(t)) => {
            let t = tape.constant(t.clone());
            Some(tape.mse(rn, t)?)
        }
        _ => None,
    };

    let mut total = bellman;
    if hyper.prediction_loss {
        total = tape.add(total, prediction)?;
    }
    if hyper.magnitude_loss {
        total = tape.add(total, magnitude)?;
    }
    if let Some(ns) = neg_sample {
        total = tape.add(total, ns)?;
    }
    Ok(Graph {
        total,
        bellman,
        prediction,
        magnitude,
        neg_sample,
        reward,
        neg_reward,
        targets,
    })
}

fn draw_negatives(batch: &Batch, beta: f64, rng: &mut SplitRng) -> Result<(Tensor, Tensor)> {
    let perturb = |t: &Tensor, rng: &mut SplitRng| {
        let v = t.values().iter().map(|x| x + beta * rng.normal()).collect();
        Tensor::matrix(t.rows(), t.cols(), v)
    };
    let mut s = Vec::with_capacity(batch.len());
    let mut a = Vec::with_capacity(batch.len());
    // Row by row so each (s̃, ã) pair uses consecutive draws.
    for i in 0..batch.len() {
        s.push(perturb(&Tensor::row_vector(batch.s.row(i)), rng)?.into_values());
        a.push(perturb(&Tensor::row_vector(batch.a.row(i)), rng)?.into_values());
    }
    Ok((Tensor::from_rows(&s)?, Tensor::from_rows(&a)?))
}

struct Evaluated {
    output: LossOutput,
    grads: ParamSet,
    targets: Targets,
}

fn evaluate(
    model: &SRModel,
    batch: &Batch,
    negatives: Option<(&Tensor, &Tensor)>,
    hyper: &SRHyper,
) -> Result<Evaluated> {
    let params = merged_params(model);
    let mut captured = None;
    let (_, grads) = eval_with_grads(&params, |tape, b| {
        let g = build_graph(tape, b, model, batch, negatives, None, hyper)?;
        let val = |v: Var| tape.value(v).values()[0];
        let breakdown = LossBreakdown::new(
            val(g.bellman),
            if hyper.prediction_loss { val(g.prediction) } else { 0.0 },
            if hyper.magnitude_loss { val(g.magnitude) } else { 0.0 },
            g.neg_sample.map_or(0.0, val),
        );
        let reward = tape.value(g.reward).values().to_vec();
        let negs = match (negatives, g.neg_reward, &g.targets.neg_target) {
            (Some((s, a)), Some(rn), Some(t)) => Some(NegativeBatch {
                s: s.clone(),
                a: a.clone(),
                alpha: g.targets.alpha.clone(),
                reward: tape.value(rn).values().to_vec(),
                decayed: t.values().to_vec(),
            }),
            _ => None,
        };
        captured = Some((
            LossOutput {
                breakdown,
                reward,
                negatives: negs,
            },
            g.targets,
        ));
        Ok(g.total)
    })?;
    let (output, targets) = captured.expect("closure ran");
    Ok(Evaluated {
        output,
        grads,
        targets,
    })
}

/// Loss terms on `batch` with explicitly supplied negative samples.
pub fn compute_losses_with(
    model: &SRModel,
    batch: &Batch,
    negatives: Option<(&Tensor, &Tensor)>,
    hyper: &SRHyper,
) -> Result<LossOutput> {
    Ok(evaluate(model, batch, negatives, hyper)?.output)
}

/// Loss terms on `batch`; negatives are drawn from `rng` when enabled.
pub fn compute_losses(model: &SRModel, batch: &Batch, hyper: &SRHyper, rng: &mut SplitRng) -> Result<LossOutput> {
    let negs = if hyper.negative_sampling {
        Some(draw_negatives(batch, hyper.beta, rng)?)
    } else {
        None
    };
    compute_losses_with(model, batch, negs.as_ref().map(|(s, a)| (s, a)), hyper)
}

/// One Adam step on the total loss followed by the Polyak target update.
pub fn train_step(
    model: &mut SRModel,
    opt: &mut SROptimizer,
    batch: &Batch,
    hyper: &SRHyper,
    rng: &mut SplitRng,
) -> Result<LossOutput> {
    let negs = if hyper.negative_sampling {
        Some(draw_negatives(batch, hyper.beta, rng)?)
    } else {
        None
    };
    let ev = evaluate(model, batch, negs.as_ref().map(|(s, a)| (s, a)), hyper)?;
    let mut grads = ev.grads;
    if !ev.output.breakdown.is_finite() || !grads.all_finite() {
        return Err(Error::Training {
            msg: "non-finite SR loss or gradient".into(),
            breakdown: Some(ev.output.breakdown),
        });
    }
    if hyper.freeze_encoder {
        for (name, g) in grads.iter_mut() {
            if name.starts_with("enc/") {
                g.values_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    let mut params = merged_params(model);
    opt.adam.step(&mut params, &grads)?;
    write_back(model, &params);
    model
        .target_sr_head
        .polyak_toward(&model.sr_head.params, hyper.target_update)?;
    Ok(ev.output)
}

/// Run `hyper.pretrain_steps` training steps on uniformly sampled batches.
pub fn pretrain(
    model: &mut SRModel,
    opt: &mut SROptimizer,
    ds: &DemoDataset,
    hyper: &SRHyper,
    rng: &mut SplitRng,
) -> Result<Vec<LossBreakdown>> {
    hyper.validate()?;
    let mut trace = Vec::with_capacity(hyper.pretrain_steps);
    for _ in 0..hyper.pretrain_steps {
        let batch = Batch::from_transitions(&sample_batch(ds, hyper.batch_size, rng)?)?;
        trace.push(train_step(model, opt, &batch, hyper, rng)?.breakdown);
    }
    Ok(trace)
}

/// Finite-difference check of the total-loss gradient with stop-gradient
/// targets held at their values for `model`. Returns the worst relative error.
pub fn grad_check_total_loss(
    model: &SRModel,
    batch: &Batch,
    negatives: Option<(&Tensor, &Tensor)>,
    hyper: &SRHyper,
    eps: f64,
) -> Result<f64> {
    let ev = evaluate(model, batch, negatives, hyper)?;
    let targets = ev.targets;
    let f = |tape: &mut Tape, b: &Bindings| {
        Ok(build_graph(tape, b, model, batch, negatives, Some(&targets), hyper)?.total)
    };
    grad_check_against(&ev.grads, f, &merged_params(model), eps)
}
