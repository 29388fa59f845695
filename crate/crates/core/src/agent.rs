//! Gaussian-policy REINFORCE controller over the 7-dim action
//! `[α_t, α_s, blur, compress, brightness, contrast, noise]`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::degrade::DegradationParams;
use crate::error::{Error, Result};
use crate::micrograd::{
    load_checkpoint, relu_vec, relu_vec_backward, save_checkpoint, sigmoid, take_tensor, AdamState, Linear, Tensor,
};

pub const STATE_DIM: usize = 10;
pub const ACTION_DIM: usize = 7;
pub const HIDDEN: usize = 32;
pub const LOG_STD_MIN: f64 = -3.0;
pub const LOG_STD_MAX: f64 = 1.0;
/// Std of the output-layer init; keeps the initial policy near N(0, 1).
const HEAD_INIT_STD: f64 = 0.01;

/// Normalized student metrics and the teacher-minus-student gap.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub m_s: [f64; 5],
    pub gap: [f64; 5],
}

impl State {
    pub fn to_vec(&self) -> Vec<f64> {
        self.m_s.iter().chain(&self.gap).copied().collect()
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != STATE_DIM {
            return Err(Error::State(format!("state needs {STATE_DIM} components, got {}", v.len())));
        }
        let mut s = State::default();
        s.m_s.copy_from_slice(&v[..5]);
        s.gap.copy_from_slice(&v[5..]);
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(Error::State(format!("non-finite state {self:?}")));
        }
        Ok(())
    }
}

/// Squashed action handed to the trainer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub alpha_t: f64,
    pub alpha_s: f64,
    pub d: DegradationParams,
}

impl Action {
    /// `softmax(raw[0..2])` loss weights and `sigmoid(raw[2..7])` degradation knobs.
    pub fn from_raw(raw: &[f64; ACTION_DIM]) -> Self {
        let m = raw[0].max(raw[1]);
        let (e0, e1) = ((raw[0] - m).exp(), (raw[1] - m).exp());
        let alpha_t = e0 / (e0 + e1);
        let alpha_s = 1.0 - alpha_t;
        let mut d = [0.0; 5];
        for k in 0..5 {
            d[k] = sigmoid(raw[2 + k]);
        }
        Action {
            alpha_t,
            alpha_s,
            d: DegradationParams::from_array(d).expect("sigmoid output lies in [0, 1]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    pub mean: [f64; ACTION_DIM],
    pub log_std: [f64; ACTION_DIM],
}

/// MLP `10 → 32 → 32 → 14` with ReLU hidden layers; the head emits seven
/// means followed by seven log-standard-deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub l1: Linear,
    pub l2: Linear,
    pub head: Linear,
}

struct PolicyCache {
    x: Vec<f64>,
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    head: Vec<f64>,
}

pub const POLICY_PARAM_NAMES: [&str; 6] = [
    "agent.l1.weight",
    "agent.l1.bias",
    "agent.l2.weight",
    "agent.l2.bias",
    "agent.head.weight",
    "agent.head.bias",
];

impl PolicyParams {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l1 = Linear::he(STATE_DIM, HIDDEN, &mut rng);
        let l2 = Linear::he(HIDDEN, HIDDEN, &mut rng);
        let head = Linear {
            weight: Tensor::randn(&[2 * ACTION_DIM, HIDDEN], HEAD_INIT_STD, &mut rng),
            bias: Tensor::zeros(&[2 * ACTION_DIM]),
        };
        Self { l1, l2, head }
    }

    /// Random hidden layers with an all-zero head.
    pub fn with_zero_head(seed: u64) -> Self {
        let mut p = Self::new(seed);
        p.head = Linear::zeros(HIDDEN, 2 * ACTION_DIM);
        p
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.l1.weight, &self.l1.bias, &self.l2.weight, &self.l2.bias, &self.head.weight, &self.head.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.l1.weight,
            &mut self.l1.bias,
            &mut self.l2.weight,
            &mut self.l2.bias,
            &mut self.head.weight,
            &mut self.head.bias,
        ]
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.params().iter().map(|t| t.len()).sum();
        if flat.len() != total {
            return Err(Error::Shape(format!("{} values for {total} parameters", flat.len())));
        }
        let mut off = 0;
        for t in self.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|t| t.is_finite())
    }

    fn forward_cached(&self, s: &State) -> Result<(PolicyOutput, PolicyCache)> {
        s.validate()?;
        let x = s.to_vec();
        let z1 = self.l1.forward(&x)?;
        let h1 = relu_vec(&z1);
        let z2 = self.l2.forward(&h1)?;
        let h2 = relu_vec(&z2);
        let head = self.head.forward(&h2)?;
        let mut out = PolicyOutput { mean: [0.0; ACTION_DIM], log_std: [0.0; ACTION_DIM] };
        for k in 0..ACTION_DIM {
            out.mean[k] = head[k];
            out.log_std[k] = head[ACTION_DIM + k].clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
        Ok((out, PolicyCache { x, z1, h1, z2, h2, head }))
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        POLICY_PARAM_NAMES.iter().zip(self.params()).map(|(n, t)| (n.to_string(), t.clone())).collect()
    }

    pub fn from_named(records: &[(String, Tensor)]) -> Result<Self> {
        let mut p = Self::with_zero_head(0);
        for (name, slot) in POLICY_PARAM_NAMES.iter().zip(p.params_mut()) {
            *slot = take_tensor(records, name, slot.shape())?;
        }
        Ok(p)
    }
}

pub fn policy_forward(params: &PolicyParams, s: &State) -> Result<PolicyOutput> {
    params.forward_cached(s).map(|(o, _)| o)
}

/// Diagonal-Gaussian log-density of `raw` in pre-squash space.
pub fn log_density(raw: &[f64; ACTION_DIM], mean: &[f64; ACTION_DIM], log_std: &[f64; ACTION_DIM]) -> f64 {
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    (0..ACTION_DIM)
        .map(|k| {
            let z = (raw[k] - mean[k]) / log_std[k].exp();
            -0.5 * z * z - log_std[k] - half_ln_2pi
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSample {
    pub raw: [f64; ACTION_DIM],
    pub action: Action,
    pub log_prob: f64,
}

/// `raw = mean + exp(log_std)·ε` with ε drawn from a ChaCha8 stream keyed by `noise_seed`.
pub fn sample_action(mean: &[f64; ACTION_DIM], log_std: &[f64; ACTION_DIM], noise_seed: u64) -> ActionSample {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut raw = [0.0; ACTION_DIM];
    for k in 0..ACTION_DIM {
        let eps: f64 = StandardNormal.sample(&mut rng);
        raw[k] = mean[k] + log_std[k].exp() * eps;
    }
    ActionSample { raw, action: Action::from_raw(&raw), log_prob: log_density(&raw, mean, log_std) }
}

/// `log π(raw | s)` recomputed from the current parameters.
pub fn log_prob(params: &PolicyParams, s: &State, raw: &[f64; ACTION_DIM]) -> Result<f64> {
    let out = policy_forward(params, s)?;
    Ok(log_density(raw, &out.mean, &out.log_std))
}

/// Gradient of `log π(raw | s)` with respect to every policy parameter,
/// in [`PolicyParams::params`] order.
pub fn grad_log_prob(params: &PolicyParams, s: &State, raw: &[f64; ACTION_DIM]) -> Result<Vec<Tensor>> {
    let (out, c) = params.forward_cached(s)?;
    let mut g_head = vec![0.0; 2 * ACTION_DIM];
    for k in 0..ACTION_DIM {
        let var = (2.0 * out.log_std[k]).exp();
        let diff = raw[k] - out.mean[k];
        g_head[k] = diff / var;
        let pre = c.head[ACTION_DIM + k];
        // clamp blocks the gradient outside its range
        if (LOG_STD_MIN..=LOG_STD_MAX).contains(&pre) {
            g_head[ACTION_DIM + k] = diff * diff / var - 1.0;
        }
    }
    let gh = params.head.backward(&c.h2, &g_head)?;
    let g2 = relu_vec_backward(&gh.input, &c.z2);
    let gl2 = params.l2.backward(&c.h1, &g2)?;
    let g1 = relu_vec_backward(&gl2.input, &c.z1);
    let gl1 = params.l1.backward(&c.x, &g1)?;
    Ok(vec![gl1.weight, gl1.bias, gl2.weight, gl2.bias, gh.weight, gh.bias])
}

/// `R^k = Σ_{i=0..=p} r^{k+i}`, truncated at the end of the sequence.
pub fn returns_window(rewards: &[f64], p: usize) -> Vec<f64> {
    (0..rewards.len())
        .map(|k| rewards[k..rewards.len().min(k + p + 1)].iter().sum())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub state: State,
    pub raw: [f64; ACTION_DIM],
    pub log_prob: f64,
    pub reward: f64,
}

/// Append-only record of one episode; drained by [`Agent::update`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, state: State, sample: &ActionSample, reward: f64) {
        self.steps.push(TrajectoryStep { state, raw: sample.raw, log_prob: sample.log_prob, reward });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

/// Score-function ascent direction `mean_k ∇log π(a_k|s_k)·R̃_k`, where
/// `R̃` are windowed returns, optionally centred by their mean.
pub fn policy_gradient(params: &PolicyParams, traj: &Trajectory, p: usize, baseline: bool) -> Result<Vec<Tensor>> {
    if traj.is_empty() {
        return Err(Error::Trajectory("cannot update from an empty trajectory".into()));
    }
    let mut returns = returns_window(&traj.rewards(), p);
    if baseline {
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        for r in &mut returns {
            *r -= mean;
        }
    }
    let mut total: Vec<Tensor> = params.params().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let scale = 1.0 / traj.len() as f64;
    for (step, ret) in traj.steps.iter().zip(&returns) {
        if *ret == 0.0 {
            continue;
        }
        let grads = grad_log_prob(params, &step.state, &step.raw)?;
        for (acc, mut g) in total.iter_mut().zip(grads) {
            g.scale(ret * scale);
            acc.add_assign(&g)?;
        }
    }
    Ok(total)
}

/// One REINFORCE ascent step through Adam.
pub fn agent_update(
    params: &mut PolicyParams,
    adam: &mut AdamState,
    traj: &Trajectory,
    p: usize,
    lr: f64,
    baseline: bool,
) -> Result<()> {
    let mut g = policy_gradient(params, traj, p, baseline)?;
    // Adam descends, so negate to ascend on expected return
    for t in &mut g {
        t.scale(-1.0);
    }
    adam.update(&mut params.params_mut(), &g, lr)?;
    if !params.is_finite() {
        return Err(Error::Numerics("agent parameters after update".into()));
    }
    Ok(())
}

/// Policy parameters plus optimizer state and update settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub params: PolicyParams,
    pub adam: AdamState,
    pub lr: f64,
    pub p: usize,
    pub baseline: bool,
}

impl Agent {
    pub fn new(seed: u64, lr: f64, p: usize, baseline: bool) -> Self {
        Self { params: PolicyParams::new(seed), adam: AdamState::new(), lr, p, baseline }
    }

    pub fn act(&self, s: &State, noise_seed: u64) -> Result<ActionSample> {
        let out = policy_forward(&self.params, s)?;
        Ok(sample_action(&out.mean, &out.log_std, noise_seed))
    }

    /// Updates from `traj` and drains it.
    pub fn update(&mut self, traj: &mut Trajectory) -> Result<()> {
        agent_update(&mut self.params, &mut self.adam, traj, self.p, self.lr, self.baseline)?;
        traj.steps.clear();
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(&self.params.named_tensors(), path)
    }

    pub fn load_params(path: impl AsRef<Path>) -> Result<PolicyParams> {
        PolicyParams::from_named(&load_checkpoint(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::micrograd::grad_check;

    fn state(v: f64) -> State {
        State { m_s: [v; 5], gap: [-v; 5] }
    }

    #[test]
    fn zero_head_gives_standard_normal() {
        let p = PolicyParams::with_zero_head(1);
        for s in [state(0.1), state(0.9)] {
            let out = policy_forward(&p, &s).unwrap();
            assert_eq!(out.mean, [0.0; 7]);
            assert_eq!(out.log_std, [0.0; 7]);
        }
    }

    #[test]
    fn forward_is_deterministic_and_rejects_nan() {
        let p = PolicyParams::new(2);
        assert_eq!(policy_forward(&p, &state(0.3)).unwrap(), policy_forward(&p, &state(0.3)).unwrap());
        let mut bad = state(0.3);
        bad.gap[2] = f64::NAN;
        assert!(matches!(policy_forward(&p, &bad), Err(Error::State(_))));
    }

    #[test]
    fn forward_matches_hand_rolled_mlp() {
        let p = PolicyParams::new(3);
        let s = state(0.4);
        let x = s.to_vec();
        let dense = |w: &Tensor, b: &Tensor, x: &[f64], relu: bool| -> Vec<f64> {
            let (o, i) = (w.shape()[0], w.shape()[1]);
            (0..o)
                .map(|r| {
                    let mut acc = b.data()[r];
                    for c in 0..i {
                        acc += w.data()[r * i + c] * x[c];
                    }
                    if relu { acc.max(0.0) } else { acc }
                })
                .collect()
        };
        let h1 = dense(&p.l1.weight, &p.l1.bias, &x, true);
        let h2 = dense(&p.l2.weight, &p.l2.bias, &h1, true);
        let y = dense(&p.head.weight, &p.head.bias, &h2, false);
        let out = policy_forward(&p, &s).unwrap();
        for k in 0..7 {
            assert!((out.mean[k] - y[k]).abs() < 1e-12);
            assert!((out.log_std[k] - y[7 + k].clamp(-3.0, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_sample_equals_mean() {
        let mean = [0.3, -0.2, 1.0, -1.0, 0.0, 2.0, -2.0];
        let s = sample_action(&mean, &[-10.0; 7], 5);
        for k in 0..7 {
            assert!((s.raw[k] - mean[k]).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_raw_action() {
        let a = Action::from_raw(&[0.0; 7]);
        assert_eq!((a.alpha_t, a.alpha_s), (0.5, 0.5));
        assert_eq!(a.d.to_array(), [0.5; 5]);
    }

    #[test]
    fn unit_gaussian_log_prob_at_mean() {
        let lp = log_density(&[0.0; 7], &[0.0; 7], &[0.0; 7]);
        let expected = 7.0 * (-0.5 * (2.0 * std::f64::consts::PI).ln());
        assert!((lp - expected).abs() < 1e-12);
        assert!((lp + 6.4326).abs() < 1e-4);
    }

    #[test]
    fn returns_window_cases() {
        let r = returns_window(&[1.0; 6], 4);
        assert_eq!(r, vec![5.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!(returns_window(&[0.5, -1.0, 2.0], 0), vec![0.5, -1.0, 2.0]);
        assert_eq!(returns_window(&[0.0; 4], 4), vec![0.0; 4]);
        assert!(returns_window(&[], 4).is_empty());
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        let mut p = PolicyParams::new(0);
        let mut adam = AdamState::new();
        let r = agent_update(&mut p, &mut adam, &Trajectory::new(), 4, 0.01, true);
        assert!(matches!(r, Err(Error::Trajectory(_))));
    }

    #[test]
    fn uniform_returns_cancel_under_baseline() {
        let mut p = PolicyParams::new(4);
        let before = p.clone();
        let mut traj = Trajectory::new();
        for k in 0..5 {
            let s = state(0.1 * k as f64);
            let out = policy_forward(&p, &s).unwrap();
            traj.push(s, &sample_action(&out.mean, &out.log_std, k), 0.7);
        }
        // p = 0 makes every return equal to its reward
        agent_update(&mut p, &mut AdamState::new(), &traj, 0, 0.01, true).unwrap();
        let drift = p.flat_params().iter().zip(before.flat_params()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-9, "drift {drift}");
    }

    #[test]
    fn grad_log_prob_matches_fd() {
        let p = PolicyParams::new(6);
        let s = state(0.35);
        let out = policy_forward(&p, &s).unwrap();
        let raw = sample_action(&out.mean, &out.log_std, 3).raw;
        let analytic: Vec<f64> = grad_log_prob(&p, &s, &raw).unwrap().iter().flat_map(|t| t.data().to_vec()).collect();
        let rep = grad_check(
            |flat| {
                let mut q = p.clone();
                q.set_flat_params(flat).unwrap();
                (log_prob(&q, &s, &raw).unwrap(), analytic.clone())
            },
            &p.flat_params(),
            1e-4,
        );
        assert!(rep.passed(), "{}", rep.max_rel_error);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        let a = Agent::new(8, 0.01, 4, true);
        a.save(&path).unwrap();
        assert_eq!(Agent::load_params(&path).unwrap(), a.params);
    }
}
