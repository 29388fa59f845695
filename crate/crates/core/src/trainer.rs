//! The training loop: pretraining against the teacher, curriculum episodes
//! driven by the agent, evaluation and the CSV artefacts around them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agent::{Action, ActionSample, Agent, State, Trajectory, ACTION_DIM};
use crate::config::TrainConfig;
use crate::degrade::{degrade_pair, derive_seed, gaussian_blur, DegradationParams};
use crate::error::{Error, Result};
use crate::fusenet::{
    image_to_tensor, loss_self_learning, loss_total, teacher_guidance_from_features, tensor_to_image, FeaturePyramid,
    StudentNet, Teacher,
};
use crate::imgio::{load_pgm, require_same_dims, save_pgm, Image};
use crate::metrics::{
    avg_gradient, edge_intensity, entropy, iqa_star, metric_vector, spatial_frequency, std_dev, viff_fusion,
    MetricVector, RunningNormalizer,
};
use crate::micrograd::{AdamState, Tensor};

// Sub-seed tags; every random draw in a run descends from `config.seed`.
const TAG_STUDENT_INIT: u64 = 11;
const TAG_AGENT_INIT: u64 = 12;
const TAG_PRETRAIN: u64 = 13;
const TAG_EPISODE: u64 = 14;
const TAG_ACTION: u64 = 15;
const TAG_DEGRADE: u64 = 16;
const TAG_SYNTH: u64 = 17;

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub stem: String,
    pub ir: Image,
    pub vi: Image,
}

fn pgm_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name.ends_with(".pgm") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Loads every `<stem>_ir.pgm` / `<stem>_vi.pgm` pair, sorted by stem.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::Dataset(format!("{} is not a directory", dir.display())));
    }
    let names = pgm_names(dir)?;
    let mut samples = Vec::new();
    for name in &names {
        if let Some(stem) = name.strip_suffix("_vi.pgm") {
            if !names.iter().any(|n| n == &format!("{stem}_ir.pgm")) {
                return Err(Error::Dataset(format!("{name} has no infrared partner")));
            }
        }
        let Some(stem) = name.strip_suffix("_ir.pgm") else { continue };
        let vi_path = dir.join(format!("{stem}_vi.pgm"));
        if !vi_path.is_file() {
            return Err(Error::Dataset(format!("{name} has no visible partner")));
        }
        let ir = load_pgm(dir.join(name))?;
        let vi = load_pgm(&vi_path)?;
        require_same_dims(&ir, &vi)?;
        samples.push(Sample { stem: stem.to_string(), ir, vi });
    }
    if samples.is_empty() {
        return Err(Error::Dataset(format!("no image pairs in {}", dir.display())));
    }
    Ok(samples)
}

fn soft_disc(r2: f64, radius: f64) -> f64 {
    let q = r2 / (radius * radius);
    (-q * q).exp()
}

/// One synthetic pair: a textured visible image with dark regions and an
/// infrared image whose warm blobs sit inside those regions.
pub fn synthetic_pair(size: usize, seed: u64) -> Result<(Image, Image)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let white = Image::from_fn(size, size, |_, _| rng.random::<f64>())?;
    let texture = gaussian_blur(&white, 0.34);
    let (fx, fy, ph) = (rng.random_range(0.5..1.5), rng.random_range(0.5..1.5), rng.random_range(0.0..std::f64::consts::TAU));
    let n_regions = rng.random_range(1..=3);
    let regions: Vec<(f64, f64, f64)> = (0..n_regions)
        .map(|_| {
            let r = rng.random_range(s / 8.0..s / 5.0);
            (rng.random_range(r..s - r), rng.random_range(r..s - r), r)
        })
        .collect();
    let tau = std::f64::consts::TAU;
    let low = |i: usize, j: usize| (tau * (fx * j as f64 / s + fy * i as f64 / s) + ph).sin();
    let dark = |i: usize, j: usize| {
        regions
            .iter()
            .map(|&(cy, cx, r)| soft_disc((i as f64 - cy).powi(2) + (j as f64 - cx).powi(2), r))
            .fold(0.0, f64::max)
    };
    let blobs = |i: usize, j: usize| {
        regions
            .iter()
            .map(|&(cy, cx, r)| {
                let sig = r / 2.0;
                (-((i as f64 - cy).powi(2) + (j as f64 - cx).powi(2)) / (2.0 * sig * sig)).exp()
            })
            .fold(0.0, f64::max)
    };
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
    let vi = Image::from_fn(size, size, |i, j| {
        let t = texture.get(i, j) - 0.5;
        q((0.55 + 0.12 * low(i, j) + 1.6 * t) * (1.0 - 0.8 * dark(i, j)))
    })?;
    let ir = Image::from_fn(size, size, |i, j| q(0.25 + 0.08 * low(j, i) + 0.65 * blobs(i, j)))?;
    Ok((ir, vi))
}

/// Writes `n_pairs` synthetic pairs named `pairNNN_{ir,vi}.pgm`.
pub fn make_synthetic_dataset(out_dir: impl AsRef<Path>, n_pairs: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    if size < 16 || !size.is_multiple_of(16) {
        return Err(Error::Value(format!("synthetic size must be a multiple of 16, got {size}")));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let base = derive_seed(seed, TAG_SYNTH);
    let mut written = Vec::with_capacity(2 * n_pairs);
    for k in 0..n_pairs {
        let (ir, vi) = synthetic_pair(size, derive_seed(base, k as u64))?;
        for (img, tag) in [(&ir, "ir"), (&vi, "vi")] {
            let path = out_dir.join(format!("pair{k:03}_{tag}.pgm"));
            save_pgm(img, &path, 255)?;
            written.push(path);
        }
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// state and reward
// ---------------------------------------------------------------------------

fn folded_pair(
    norm: &mut RunningNormalizer,
    student_fused: &Image,
    teacher_fused: &Image,
    ir: &Image,
    vi: &Image,
) -> Result<(MetricVector, MetricVector)> {
    require_same_dims(student_fused, teacher_fused)?;
    let mt = metric_vector(teacher_fused, ir, vi)?;
    let ms = metric_vector(student_fused, ir, vi)?;
    norm.observe(&mt);
    norm.observe(&ms);
    Ok((norm.apply(&ms), norm.apply(&mt)))
}

/// Normalized student metrics followed by the teacher-minus-student gap.
pub fn build_state(
    norm: &mut RunningNormalizer,
    student_fused: &Image,
    teacher_fused: &Image,
    ir: &Image,
    vi: &Image,
) -> Result<State> {
    let (ns, nt) = folded_pair(norm, student_fused, teacher_fused, ir, vi)?;
    let (s, t) = (ns.to_array(), nt.to_array());
    let mut gap = [0.0; 5];
    for k in 0..5 {
        gap[k] = t[k] - s[k];
    }
    Ok(State { m_s: s, gap })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reward {
    pub r: f64,
    pub e_student: f64,
    pub e_teacher: f64,
}

/// Mean of the normalized fusion VIF and IQA* scores.
pub fn evaluation_score(normalized: &MetricVector) -> f64 {
    0.5 * (normalized.vif + normalized.iqa)
}

/// `E(student) − E(teacher)` under the shared normalizer.
pub fn compute_reward(
    student_fused: &Image,
    teacher_fused: &Image,
    ir: &Image,
    vi: &Image,
    norm: &mut RunningNormalizer,
) -> Result<Reward> {
    let (ns, nt) = folded_pair(norm, student_fused, teacher_fused, ir, vi)?;
    let (e_student, e_teacher) = (evaluation_score(&ns), evaluation_score(&nt));
    Ok(Reward { r: e_student - e_teacher, e_student, e_teacher })
}

// ---------------------------------------------------------------------------
// student updates
// ---------------------------------------------------------------------------

/// Student weights with their optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentState {
    pub net: StudentNet,
    pub adam: AdamState,
}

impl StudentState {
    pub fn new(net: StudentNet) -> Self {
        Self { net, adam: AdamState::new() }
    }
}

/// One training crop with its teacher fusion.
#[derive(Debug, Clone)]
pub struct Crop {
    pub ir: Image,
    pub vi: Image,
    pub teacher: Image,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub l_t: f64,
    pub l_s: f64,
    pub l_a: f64,
}

/// How a step treats the self-learning branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepAction {
    pub alpha_t: f64,
    pub alpha_s: f64,
    pub degradation: DegradationParams,
    /// `false` skips the degraded forward pass entirely (pretraining).
    pub self_learning: bool,
}

impl StepAction {
    pub const PRETRAIN: StepAction = StepAction {
        alpha_t: 1.0,
        alpha_s: 0.0,
        degradation: DegradationParams::IDENTITY,
        self_learning: false,
    };

    pub fn from_action(a: &Action) -> Self {
        Self { alpha_t: a.alpha_t, alpha_s: a.alpha_s, degradation: a.d, self_learning: true }
    }
}

struct ElementGrads {
    losses: StepLosses,
    grads: Vec<Tensor>,
}

fn element_grads(
    net: &StudentNet,
    pyr: &FeaturePyramid,
    crop: &Crop,
    act: &StepAction,
    degrade_seed: u64,
) -> Result<ElementGrads> {
    let cache_o = net.forward_tensors(&image_to_tensor(&crop.ir), &image_to_tensor(&crop.vi))?;
    let teacher_features = pyr.forward(&image_to_tensor(&crop.teacher))?.features;
    let (l_t, g_lt) = teacher_guidance_from_features(pyr, cache_o.output(), &teacher_features)?;
    let mut g_o = g_lt;
    g_o.scale(act.alpha_t);
    if !act.self_learning {
        let l_a = loss_total(l_t, 0.0, act.alpha_t, act.alpha_s)?;
        let grads = net.backward(&cache_o, &g_o)?;
        return Ok(ElementGrads { losses: StepLosses { l_t, l_s: 0.0, l_a }, grads });
    }
    // L_t always sees the original inputs; only the self-learning branch is degraded
    let (ir_d, vi_d) = degrade_pair(&crop.ir, &crop.vi, &act.degradation, degrade_seed);
    let cache_d = net.forward_tensors(&image_to_tensor(&ir_d), &image_to_tensor(&vi_d))?;
    let (l_s, mut g_a, mut g_b) = loss_self_learning(cache_o.output(), cache_d.output())?;
    let l_a = loss_total(l_t, l_s, act.alpha_t, act.alpha_s)?;
    g_a.scale(act.alpha_s);
    g_b.scale(act.alpha_s);
    g_o.add_assign(&g_a)?;
    let mut grads = net.backward(&cache_o, &g_o)?;
    for (acc, g) in grads.iter_mut().zip(net.backward(&cache_d, &g_b)?) {
        acc.add_assign(&g)?;
    }
    Ok(ElementGrads { losses: StepLosses { l_t, l_s, l_a }, grads })
}

/// Batch-mean losses and one Adam step on the student. Batch elements run
/// in parallel; the reduction is sequential in batch order.
pub fn student_step(
    student: &mut StudentState,
    pyr: &FeaturePyramid,
    batch: &[Crop],
    act: &StepAction,
    lr: f64,
    degrade_seed: u64,
) -> Result<StepLosses> {
    if batch.is_empty() {
        return Err(Error::Dataset("empty batch".into()));
    }
    let net = &student.net;
    let per: Vec<ElementGrads> = batch
        .par_iter()
        .enumerate()
        .map(|(i, crop)| element_grads(net, pyr, crop, act, derive_seed(degrade_seed, i as u64)))
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut grads: Vec<Tensor> = net.params().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut losses = StepLosses { l_t: 0.0, l_s: 0.0, l_a: 0.0 };
    for e in &per {
        losses.l_t += e.losses.l_t * scale;
        losses.l_s += e.losses.l_s * scale;
        losses.l_a += e.losses.l_a * scale;
        for (acc, g) in grads.iter_mut().zip(&e.grads) {
            acc.add_assign(g)?;
        }
    }
    for g in &mut grads {
        g.scale(scale);
    }
    if !(losses.l_t.is_finite() && losses.l_s.is_finite() && losses.l_a.is_finite()) {
        return Err(Error::Numerics(format!("student losses {losses:?}")));
    }
    student.adam.update(&mut student.net.params_mut(), &grads, lr)?;
    if student.net.params().iter().any(|t| !t.is_finite()) {
        return Err(Error::Numerics("student parameters after update".into()));
    }
    Ok(losses)
}

// ---------------------------------------------------------------------------
// training context
// ---------------------------------------------------------------------------

/// Dataset, teacher fusions and the frozen pyramid shared by every step.
#[derive(Debug, Clone)]
pub struct TrainContext {
    pub config: TrainConfig,
    pub samples: Vec<Sample>,
    pub teacher_fused: Vec<Image>,
    pub pyramid: FeaturePyramid,
    /// Side of the square training crops.
    pub crop: usize,
}

impl TrainContext {
    pub fn new(config: TrainConfig, samples: Vec<Sample>, teacher: &Teacher) -> Result<Self> {
        config.validate()?;
        if samples.is_empty() {
            return Err(Error::Dataset("empty dataset".into()));
        }
        let smallest = samples.iter().map(|s| s.ir.height().min(s.ir.width())).min().unwrap_or(0);
        let crop = config.crop.min(smallest / 16 * 16);
        if crop < 16 {
            return Err(Error::Dimension(format!("images must be at least 16x16, smallest side is {smallest}")));
        }
        let teacher_fused = samples
            .par_iter()
            .map(|s| teacher.fuse(&s.stem, &s.ir, &s.vi))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, samples, teacher_fused, pyramid: FeaturePyramid::default(), crop })
    }

    pub fn from_config(config: &TrainConfig) -> Result<Self> {
        let samples = load_dataset(&config.dataset_dir)?;
        Self::new(config.clone(), samples, &Teacher::parse(&config.teacher))
    }

    pub fn batch_size(&self) -> usize {
        self.config.batch_size.min(self.samples.len())
    }

    fn crop_at(&self, idx: usize, top: usize, left: usize) -> Result<Crop> {
        let (s, c) = (&self.samples[idx], self.crop);
        Ok(Crop {
            ir: s.ir.crop(top, left, c, c)?,
            vi: s.vi.crop(top, left, c, c)?,
            teacher: self.teacher_fused[idx].crop(top, left, c, c)?,
        })
    }

    /// Crop of sample `idx` at a random position.
    pub fn random_crop(&self, idx: usize, rng: &mut ChaCha8Rng) -> Result<Crop> {
        let s = &self.samples[idx];
        let top = rng.random_range(0..=s.ir.height() - self.crop);
        let left = rng.random_range(0..=s.ir.width() - self.crop);
        self.crop_at(idx, top, left)
    }

    /// Centre crop of the episode's probe sample.
    pub fn probe(&self, epoch: usize) -> Result<Crop> {
        let idx = epoch % self.samples.len();
        let s = &self.samples[idx];
        self.crop_at(idx, (s.ir.height() - self.crop) / 2, (s.ir.width() - self.crop) / 2)
    }
}

// ---------------------------------------------------------------------------
// pretraining
// ---------------------------------------------------------------------------

/// Teacher-guidance-only training; returns the mean `L_t` of every epoch.
pub fn pretrain(ctx: &TrainContext, student: &mut StudentState, epochs: usize) -> Result<Vec<f64>> {
    let base = derive_seed(ctx.config.seed, TAG_PRETRAIN);
    let b = ctx.batch_size();
    let mut means = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base, epoch as u64));
        let mut order: Vec<usize> = (0..ctx.samples.len()).collect();
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for (k, chunk) in order.chunks(b).enumerate() {
            let batch = chunk.iter().map(|&i| ctx.random_crop(i, &mut rng)).collect::<Result<Vec<_>>>()?;
            let losses = student_step(student, &ctx.pyramid, &batch, &StepAction::PRETRAIN, ctx.config.student_lr, 0)
                .map_err(|e| name_step(e, "pretrain", epoch, k))?;
            sum += losses.l_t * batch.len() as f64;
            count += batch.len();
        }
        means.push(sum / count as f64);
    }
    Ok(means)
}

fn name_step(e: Error, phase: &str, epoch: usize, step: usize) -> Error {
    match e {
        Error::Numerics(m) => Error::Numerics(format!("{phase} epoch {epoch} step {step}: {m}")),
        other => other,
    }
}

pub fn initial_student(config: &TrainConfig) -> StudentState {
    StudentState::new(StudentNet::new(derive_seed(config.seed, TAG_STUDENT_INIT)))
}

// ---------------------------------------------------------------------------
// episodes
// ---------------------------------------------------------------------------

/// Anything that can choose actions and learn from a finished episode.
pub trait ActionPolicy {
    fn act(&mut self, state: &State, noise_seed: u64) -> Result<ActionSample>;
    fn update(&mut self, trajectory: &mut Trajectory) -> Result<()>;
}

impl ActionPolicy for Agent {
    fn act(&mut self, state: &State, noise_seed: u64) -> Result<ActionSample> {
        Agent::act(self, state, noise_seed)
    }

    fn update(&mut self, trajectory: &mut Trajectory) -> Result<()> {
        Agent::update(self, trajectory)
    }
}

/// Always emits the same raw action and never learns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPolicy {
    pub raw: [f64; ACTION_DIM],
}

impl ActionPolicy for FixedPolicy {
    fn act(&mut self, _state: &State, _noise_seed: u64) -> Result<ActionSample> {
        Ok(ActionSample { raw: self.raw, action: Action::from_raw(&self.raw), log_prob: 0.0 })
    }

    fn update(&mut self, trajectory: &mut Trajectory) -> Result<()> {
        trajectory.steps.clear();
        Ok(())
    }
}

pub const LOG_HEADER: &str = "epoch,step,alpha_t,alpha_s,blur,compress,brightness,contrast,noise,l_t,l_s,l_a,reward,\
e_student,e_teacher,ms_ag,ms_ei,ms_vif,ms_sd,ms_iqa,gap_ag,gap_ei,gap_vif,gap_sd,gap_iqa";

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub step: usize,
    pub alpha_t: f64,
    pub alpha_s: f64,
    pub degradation: DegradationParams,
    pub losses: StepLosses,
    pub reward: Reward,
    pub state: State,
}

impl LogRow {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{}", self.epoch, self.step);
        let values = [self.alpha_t, self.alpha_s]
            .into_iter()
            .chain(self.degradation.to_array())
            .chain([self.losses.l_t, self.losses.l_s, self.losses.l_a])
            .chain([self.reward.r, self.reward.e_student, self.reward.e_teacher])
            .chain(self.state.m_s)
            .chain(self.state.gap);
        for v in values {
            let _ = write!(s, ",{v}");
        }
        s
    }
}

pub fn write_log(path: impl AsRef<Path>, rows: &[LogRow]) -> Result<()> {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    write_creating_dirs(path.as_ref(), s.as_bytes())
}

fn write_creating_dirs(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Student fusion of a crop, clamped to an image.
fn student_fuse(net: &StudentNet, crop: &Crop) -> Result<Image> {
    let cache = net.forward_tensors(&image_to_tensor(&crop.ir), &image_to_tensor(&crop.vi))?;
    tensor_to_image(cache.output())
}

/// Runs `steps_per_episode` steps, then lets `policy` learn from the
/// trajectory. Returns the trajectory as it was before the update.
pub fn run_episode(
    ctx: &TrainContext,
    student: &mut StudentState,
    policy: &mut dyn ActionPolicy,
    norm: &mut RunningNormalizer,
    epoch: usize,
    log: &mut Vec<LogRow>,
) -> Result<Trajectory> {
    let cfg = &ctx.config;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(cfg.seed, TAG_EPISODE), epoch as u64));
    let probe = ctx.probe(epoch)?;
    let b = ctx.batch_size();
    let mut traj = Trajectory::new();
    for step in 0..cfg.steps_per_episode {
        let global = (epoch * cfg.steps_per_episode + step) as u64;
        let mut order: Vec<usize> = (0..ctx.samples.len()).collect();
        order.shuffle(&mut rng);
        let batch = order[..b].iter().map(|&i| ctx.random_crop(i, &mut rng)).collect::<Result<Vec<_>>>()?;

        let fused = student_fuse(&student.net, &probe)?;
        let state = build_state(norm, &fused, &probe.teacher, &probe.ir, &probe.vi)?;
        let sample = policy.act(&state, derive_seed(derive_seed(cfg.seed, TAG_ACTION), global))?;
        let act = StepAction::from_action(&sample.action);
        let losses = student_step(
            student,
            &ctx.pyramid,
            &batch,
            &act,
            cfg.student_lr,
            derive_seed(derive_seed(cfg.seed, TAG_DEGRADE), global),
        )
        .map_err(|e| name_step(e, "train", epoch, step))?;

        let fused = student_fuse(&student.net, &probe)?;
        let reward = compute_reward(&fused, &probe.teacher, &probe.ir, &probe.vi, norm)?;
        if !reward.r.is_finite() {
            return Err(Error::Numerics(format!("train epoch {epoch} step {step}: reward {}", reward.r)));
        }
        traj.push(state, &sample, reward.r);
        log.push(LogRow {
            epoch,
            step,
            alpha_t: act.alpha_t,
            alpha_s: act.alpha_s,
            degradation: act.degradation,
            losses,
            reward,
            state,
        });
    }
    let finished = traj.clone();
    if !traj.is_empty() {
        policy.update(&mut traj)?;
    }
    Ok(finished)
}

// ---------------------------------------------------------------------------
// full runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub pretrain_lt: Vec<f64>,
    pub rows: Vec<LogRow>,
    pub student: StudentNet,
    pub agent: Agent,
}

pub const PRETRAIN_CKPT: &str = "student_pretrain.ckpt";
pub const STUDENT_CKPT: &str = "student.ckpt";
pub const AGENT_CKPT: &str = "agent.ckpt";

/// Pretrains and writes `student_pretrain.ckpt` into `out_dir`.
pub fn run_pretrain(config: &TrainConfig) -> Result<(StudentNet, Vec<f64>)> {
    let ctx = TrainContext::from_config(config)?;
    let mut student = initial_student(config);
    let means = pretrain(&ctx, &mut student, config.pretrain_epochs)?;
    fs::create_dir_all(&config.out_dir)?;
    student.net.save(config.out_dir.join(PRETRAIN_CKPT))?;
    Ok((student.net, means))
}

/// Pretraining followed by `train_epochs` curriculum episodes. Writes the
/// three checkpoints into `out_dir` and the step log to `log_path`.
pub fn train(config: &TrainConfig) -> Result<TrainReport> {
    let ctx = TrainContext::from_config(config)?;
    train_with_context(&ctx)
}

pub fn train_with_context(ctx: &TrainContext) -> Result<TrainReport> {
    let config = &ctx.config;
    let mut student = initial_student(config);
    let pretrain_lt = pretrain(ctx, &mut student, config.pretrain_epochs)?;
    fs::create_dir_all(&config.out_dir)?;
    student.net.save(config.out_dir.join(PRETRAIN_CKPT))?;
    // the curriculum phase starts from fresh optimizer moments
    let mut student = StudentState::new(student.net);
    let mut agent = Agent::new(
        derive_seed(config.seed, TAG_AGENT_INIT),
        config.agent_lr,
        config.p,
        config.baseline_enabled,
    );
    let mut norm = RunningNormalizer::new();
    let mut rows = Vec::new();
    for epoch in 0..config.train_epochs {
        run_episode(ctx, &mut student, &mut agent, &mut norm, epoch, &mut rows)?;
    }
    student.net.save(config.out_dir.join(STUDENT_CKPT))?;
    agent.save(config.out_dir.join(AGENT_CKPT))?;
    write_log(&config.log_path, &rows)?;
    Ok(TrainReport { pretrain_lt, rows, student: student.net, agent })
}

// ---------------------------------------------------------------------------
// evaluation and metrics tables
// ---------------------------------------------------------------------------

pub const METRICS_HEADER: &str = "path,ag,sf,ei,en,sd,viff,iqa";

/// One row of a metrics table; `viff` is absent when no sources are known.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub path: String,
    pub ag: f64,
    pub sf: f64,
    pub ei: f64,
    pub en: f64,
    pub sd: f64,
    pub viff: Option<f64>,
    pub iqa: f64,
}

impl MetricsRow {
    pub fn compute(path: String, img: &Image, sources: Option<(&Image, &Image)>) -> Result<Self> {
        let viff = match sources {
            Some((ir, vi)) => Some(viff_fusion(ir, vi, img)?),
            None => None,
        };
        Ok(Self {
            path,
            ag: avg_gradient(img),
            sf: spatial_frequency(img),
            ei: edge_intensity(img),
            en: entropy(img),
            sd: std_dev(img),
            viff,
            iqa: iqa_star(img),
        })
    }

    pub fn to_csv(&self) -> String {
        let viff = self.viff.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.path, self.ag, self.sf, self.ei, self.en, self.sd, viff, self.iqa
        )
    }

    /// Column-wise arithmetic mean; `viff` is averaged over rows that have it.
    pub fn mean(rows: &[MetricsRow], path: &str) -> Self {
        let n = rows.len().max(1) as f64;
        let avg = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let viffs: Vec<f64> = rows.iter().filter_map(|r| r.viff).collect();
        Self {
            path: path.to_string(),
            ag: avg(|r| r.ag),
            sf: avg(|r| r.sf),
            ei: avg(|r| r.ei),
            en: avg(|r| r.en),
            sd: avg(|r| r.sd),
            viff: (!viffs.is_empty()).then(|| viffs.iter().sum::<f64>() / viffs.len() as f64),
            iqa: avg(|r| r.iqa),
        }
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

/// Parses a table written by [`metrics_csv`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Parse("metrics table header mismatch".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}")));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Parse(format!("expected 8 fields: {line}")));
            }
            Ok(MetricsRow {
                path: f[0].to_string(),
                ag: num(f[1])?,
                sf: num(f[2])?,
                ei: num(f[3])?,
                en: num(f[4])?,
                sd: num(f[5])?,
                viff: if f[6].is_empty() { None } else { Some(num(f[6])?) },
                iqa: num(f[7])?,
            })
        })
        .collect()
}

/// Fusion model used by [`evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Fuser {
    Student(Box<StudentNet>),
    Teacher(Teacher),
}

impl Fuser {
    /// `"rule"` selects the rule teacher; anything else is a student checkpoint.
    pub fn from_arg(ckpt: &str) -> Result<Self> {
        if ckpt == "rule" {
            Ok(Fuser::Teacher(Teacher::Rule))
        } else {
            Ok(Fuser::Student(Box::new(StudentNet::load(ckpt)?)))
        }
    }

    pub fn fuse(&self, sample: &Sample) -> Result<Image> {
        match self {
            Fuser::Student(net) => net.forward(&sample.ir, &sample.vi),
            Fuser::Teacher(t) => t.fuse(&sample.stem, &sample.ir, &sample.vi),
        }
    }
}

/// Fuses every pair in `data_dir`, writes `<stem>.pgm` files and
/// `metrics.csv` (per-image rows plus a final `mean` row) into `out_dir`.
pub fn evaluate(fuser: &Fuser, data_dir: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let samples = load_dataset(data_dir)?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let mut rows = samples
        .par_iter()
        .map(|s| {
            let fused = fuser.fuse(s)?;
            let name = format!("{}.pgm", s.stem);
            save_pgm(&fused, out_dir.join(&name), 255)?;
            MetricsRow::compute(name, &fused, Some((&s.ir, &s.vi)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = MetricsRow::mean(&rows, "mean");
    rows.push(mean);
    fs::write(out_dir.join("metrics.csv"), metrics_csv(&rows))?;
    Ok(rows)
}

fn source_stem(name: &str) -> &str {
    let stem = name.strip_suffix(".pgm").unwrap_or(name);
    stem.strip_suffix("_ir").or_else(|| stem.strip_suffix("_vi")).unwrap_or(stem)
}

/// Metrics of every `.pgm` in `data_dir`. VIFF is filled in when
/// `<stem>_ir.pgm` and `<stem>_vi.pgm` exist in `sources_dir`.
pub fn metrics_table(data_dir: impl AsRef<Path>, sources_dir: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let (data_dir, sources_dir) = (data_dir.as_ref(), sources_dir.as_ref());
    let names = pgm_names(data_dir)?;
    names
        .par_iter()
        .map(|name| {
            let img = load_pgm(data_dir.join(name))?;
            let stem = source_stem(name);
            let ir_path = sources_dir.join(format!("{stem}_ir.pgm"));
            let vi_path = sources_dir.join(format!("{stem}_vi.pgm"));
            let sources = if ir_path.is_file() && vi_path.is_file() {
                let (ir, vi) = (load_pgm(ir_path)?, load_pgm(vi_path)?);
                (ir.same_dims(&img) && vi.same_dims(&img)).then_some((ir, vi))
            } else {
                None
            };
            MetricsRow::compute(name.clone(), &img, sources.as_ref().map(|(a, b)| (a, b)))
        })
        .collect()
}
