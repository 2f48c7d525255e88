use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::eval::{all_prompts, evaluate_policy, EvalMetrics};
use super::pairs::{build_pairs, PairSummary};
use super::Recipe;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::gate::{gate_step, GateState};
use crate::judge::{score_rollout_group, PreferencePair, SyntheticJudge, TaskSpec};
use crate::objectives::{DpoLoss, GrpoLoss, HybridLoss, RolloutGroup, SftLoss};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::seqmodel::{
    backprop, grad_of_scalar, sample_group, DifferentiableLoss, LossEval, Modality, PolicyParams,
    ReferenceSnapshot,
};

/// One row of the metric log. Optional fields are omitted when the recipe
/// does not produce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub prompt_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_semantic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_acoustic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_raw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_t: Option<f64>,
    /// Weight on the SFT term (1 - lambda for hybrids, 1 for SFT).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sft_weight: Option<f64>,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_sft: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_surrogate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dpo_delta: Option<f64>,
    pub grad_norm: f64,
    pub grad_norm_text: f64,
    pub grad_norm_speech: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalMetrics>,
}

impl StepRecord {
    fn blank(step: usize, prompt_id: usize) -> Self {
        Self {
            step,
            prompt_id,
            rewards: None,
            mean_semantic: None,
            mean_acoustic: None,
            v_t: None,
            g_t: None,
            lambda_raw: None,
            lambda_t: None,
            sft_weight: None,
            loss: 0.0,
            loss_sft: None,
            loss_surrogate: None,
            loss_kl: None,
            dpo_delta: None,
            grad_norm: 0.0,
            grad_norm_text: 0.0,
            grad_norm_speech: 0.0,
            eval: None,
        }
    }

    fn all_finite(&self) -> bool {
        let opt = [
            self.mean_semantic,
            self.mean_acoustic,
            self.v_t,
            self.g_t,
            self.lambda_raw,
            self.lambda_t,
            self.sft_weight,
            self.loss_sft,
            self.loss_surrogate,
            self.loss_kl,
            self.dpo_delta,
        ];
        opt.iter().flatten().all(|x| x.is_finite())
            && self.rewards.iter().flatten().all(|x| x.is_finite())
            && [self.loss, self.grad_norm, self.grad_norm_text, self.grad_norm_speech]
                .iter()
                .all(|x| x.is_finite())
    }
}

/// Base policy: fresh initialization followed by `train.base_steps` SFT
/// steps on oracle demonstrations, cycling through prompts in id order.
pub fn base_policy(cfg: &ExperimentConfig, task: &TaskSpec) -> Result<PolicyParams> {
    let mut params = PolicyParams::init(&cfg.model)?;
    let demos = all_prompts(task)
        .into_iter()
        .map(|id| task.oracle_demo(id))
        .collect::<Result<Vec<_>>>()?;
    for s in 0..cfg.train.base_steps {
        let g = grad_of_scalar(&params, &SftLoss { demo: &demos[s % demos.len()] })?;
        params.descend(&g, cfg.train.base_learning_rate);
    }
    Ok(params)
}

/// Mutable training state with a single owner. The reference policy is
/// frozen at construction; the behavior policy is refreshed on schedule.
pub struct Trainer<'a> {
    cfg: &'a ExperimentConfig,
    task: &'a TaskSpec,
    params: PolicyParams,
    reference: ReferenceSnapshot,
    behavior: ReferenceSnapshot,
    gate: GateState,
    step: usize,
    pairs: BTreeMap<usize, PreferencePair>,
    pair_summary: Option<PairSummary>,
    order: Vec<usize>,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a ExperimentConfig, task: &'a TaskSpec, init: PolicyParams) -> Result<Self> {
        cfg.validate()?;
        task.validate()?;
        if init.config.text_vocab != task.vocab.text_size
            || init.config.speech_vocab != task.vocab.speech_size
        {
            return Err(Error::ShapeMismatch(
                "initial policy vocabulary does not match the task".into(),
            ));
        }
        init.check_finite()?;
        let reference = ReferenceSnapshot::new(&init);
        let mut pairs = BTreeMap::new();
        let mut pair_summary = None;
        let mut order = all_prompts(task);
        if cfg.train.recipe.uses_pairs() {
            let (built, summary) = build_pairs(
                &init,
                task,
                &order,
                &cfg.judge,
                cfg.train.sampling(),
                cfg.judge.pair_candidates,
                cfg.train.seed,
            )?;
            if built.is_empty() {
                return Err(Error::Config(
                    "no preference pairs survived the margin; lower judge.margin_delta".into(),
                ));
            }
            pairs = built.into_iter().collect();
            order = pairs.keys().copied().collect();
            pair_summary = Some(summary);
        }
        Ok(Self {
            cfg,
            task,
            behavior: reference.clone(),
            reference,
            params: init,
            gate: GateState::default(),
            step: 0,
            pairs,
            pair_summary,
            order,
        })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn into_params(self) -> PolicyParams {
        self.params
    }

    pub fn reference(&self) -> &ReferenceSnapshot {
        &self.reference
    }

    pub fn pair_summary(&self) -> Option<PairSummary> {
        self.pair_summary
    }

    pub fn gate_state(&self) -> GateState {
        self.gate
    }

    /// Prompt for `step`: a fresh seeded shuffle of the prompt set each epoch.
    pub fn prompt_for(&self, step: usize) -> usize {
        let n = self.order.len();
        let mut perm = self.order.clone();
        perm.shuffle(&mut stream_rng(
            self.cfg.train.seed,
            Stream::DataOrder,
            &[(step / n) as u64],
        ));
        perm[step % n]
    }

    /// One update on `prompt_id`.
    pub fn train_step(&mut self, prompt_id: usize) -> Result<StepRecord> {
        let cfg = self.cfg;
        let recipe = cfg.train.recipe;
        let step = self.step;
        let prompt = self.task.prompt(prompt_id)?;
        let demo = self.task.oracle_demo(prompt_id)?;
        let mut rec = StepRecord::blank(step, prompt_id);

        let group = if recipe.uses_rollouts() {
            let seed = derive_seed(cfg.train.seed, Stream::Rollout, &[step as u64]);
            let members = sample_group(
                self.behavior.params(),
                &prompt.tokens,
                cfg.train.group_size,
                cfg.train.sampling(),
                seed,
            )?;
            let judge = SyntheticJudge {
                task: self.task,
                cfg: cfg.judge.clone(),
            };
            let key = derive_seed(cfg.train.seed, Stream::JudgeNoise, &[step as u64]);
            let (scores, rewards) = score_rollout_group(&judge, &members, key)?;
            let g = scores.len() as f64;
            rec.mean_semantic = Some(scores.iter().map(|s| s.semantic).sum::<f64>() / g);
            rec.mean_acoustic = Some(scores.iter().map(|s| s.acoustic).sum::<f64>() / g);
            rec.rewards = Some(rewards.clone());
            Some(RolloutGroup {
                prompt: prompt.tokens.clone(),
                members,
                rewards,
                behavior: self.behavior.clone(),
            })
        } else {
            None
        };

        let grpo_cfg = &cfg.objectives.grpo;
        let mut next_gate = self.gate;
        let eval: LossEval = match recipe {
            Recipe::SftOnly => {
                let e = SftLoss { demo: &demo }.evaluate(&self.params)?;
                rec.loss_sft = Some(e.value);
                rec.sft_weight = Some(1.0);
                e
            }
            Recipe::GrpoFull | Recipe::GrpoText => {
                let (parts, e) = GrpoLoss {
                    group: group.as_ref().expect("rollouts"),
                    reference: &self.reference,
                    cfg: grpo_cfg,
                    mask_rule: recipe.mask_rule(),
                }
                .evaluate_parts(&self.params)?;
                rec.loss_surrogate = Some(parts.surrogate);
                rec.loss_kl = Some(parts.kl);
                e
            }
            Recipe::DpoFull | Recipe::DpoText => {
                let pair = self
                    .pairs
                    .get(&prompt_id)
                    .ok_or_else(|| Error::Config(format!("no preference pair for prompt {prompt_id}")))?;
                let loss = DpoLoss {
                    chosen: &pair.chosen,
                    rejected: &pair.rejected,
                    reference: &self.reference,
                    cfg: &cfg.objectives.dpo,
                    mask_rule: recipe.mask_rule(),
                };
                rec.dpo_delta = Some(crate::objectives::dpo_delta(
                    &self.params,
                    &self.reference,
                    &pair.chosen,
                    &pair.rejected,
                    recipe.mask_rule(),
                )?);
                loss.evaluate(&self.params)?
            }
            Recipe::HybridDynamic | Recipe::HybridFixed(_) => {
                let group = group.as_ref().expect("rollouts");
                let lambda = match recipe {
                    Recipe::HybridFixed(l) => l,
                    _ => {
                        let (l, state, d) = gate_step(self.gate, &group.rewards, &cfg.gate)?;
                        next_gate = state;
                        rec.v_t = Some(d.v_t);
                        rec.g_t = Some(d.g_t);
                        rec.lambda_raw = Some(d.lambda_raw);
                        rec.lambda_t = Some(l);
                        l
                    }
                };
                let (parts, e) = HybridLoss {
                    demo: &demo,
                    group,
                    reference: &self.reference,
                    cfg: grpo_cfg,
                    lambda,
                }
                .evaluate_parts(&self.params)?;
                rec.sft_weight = Some(1.0 - lambda);
                rec.loss_sft = Some(parts.sft);
                rec.loss_surrogate = Some(parts.grpo.surrogate);
                rec.loss_kl = Some(parts.grpo.kl);
                e
            }
        };

        let grad = backprop(&self.params, &eval.grads, |_| true);
        rec.loss = eval.value;
        rec.grad_norm = grad.norm();
        rec.grad_norm_text = backprop(&self.params, &eval.grads, |m| m == Modality::Text).norm();
        rec.grad_norm_speech = backprop(&self.params, &eval.grads, |m| m == Modality::Speech).norm();
        if !rec.all_finite() || !grad.is_finite() {
            let diag = serde_json::to_string(&rec).unwrap_or_default();
            return Err(Error::NonFinite(format!("training aborted at step {step}: {diag}")));
        }

        self.params.descend(&grad, cfg.train.learning_rate);
        self.gate = next_gate;
        self.step += 1;
        if self.step.is_multiple_of(cfg.train.refresh_interval) {
            self.behavior = ReferenceSnapshot::new(&self.params);
        }
        if cfg.train.eval_interval > 0 && self.step.is_multiple_of(cfg.train.eval_interval) {
            rec.eval = Some(self.evaluate()?);
        }
        Ok(rec)
    }

    pub fn evaluate(&self) -> Result<EvalMetrics> {
        evaluate_policy(&self.params, self.task, &all_prompts(self.task), &self.cfg.judge)
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub params: PolicyParams,
    pub records: Vec<StepRecord>,
    /// `lambda_t` per step; empty for non-dynamic recipes.
    pub lambda_trajectory: Vec<f64>,
    pub initial_eval: EvalMetrics,
    pub final_eval: EvalMetrics,
    pub pair_summary: Option<PairSummary>,
}

/// Runs `train.steps` steps from `init`, passing each record and the
/// post-update parameters to `sink` as soon as they are produced.
pub fn train_loop_with(
    cfg: &ExperimentConfig,
    task: &TaskSpec,
    init: PolicyParams,
    sink: &mut dyn FnMut(&StepRecord, &PolicyParams) -> Result<()>,
) -> Result<RunArtifact> {
    let mut trainer = Trainer::new(cfg, task, init)?;
    let initial_eval = trainer.evaluate()?;
    let mut records = Vec::with_capacity(cfg.train.steps);
    for step in 0..cfg.train.steps {
        let prompt = trainer.prompt_for(step);
        let rec = trainer.train_step(prompt)?;
        sink(&rec, trainer.params())?;
        records.push(rec);
    }
    let final_eval = trainer.evaluate()?;
    let pair_summary = trainer.pair_summary();
    let lambda_trajectory = records.iter().filter_map(|r| r.lambda_t).collect();
    Ok(RunArtifact {
        params: trainer.into_params(),
        records,
        lambda_trajectory,
        initial_eval,
        final_eval,
        pair_summary,
    })
}

pub fn train_loop(cfg: &ExperimentConfig, task: &TaskSpec, init: PolicyParams) -> Result<RunArtifact> {
    train_loop_with(cfg, task, init, &mut |_, _| Ok(()))
}

/// Task generation, base policy, and training in one call.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(TaskSpec, PolicyParams, RunArtifact)> {
    cfg.validate()?;
    let task = TaskSpec::generate(&cfg.model, &cfg.task)?;
    let base = base_policy(cfg, &task)?;
    let artifact = train_loop(cfg, &task, base.clone())?;
    Ok((task, base, artifact))
}
