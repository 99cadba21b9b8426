//! The optimization loop: cycle forward passes, alternating
//! generator/discriminator Adam updates under any loss preset, the
//! two-phase learning-rate schedule, checkpointing, and resume.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::make_toy_dataset;
use crate::error::{Error, Result};
use crate::image::{ImageTensor, PairedSample, ValueRange};
use crate::losses::{self, ForwardBundle, LossReport};
use crate::networks::{
    build_discriminator, build_generator, Discriminator, DiscriminatorSpec, Generator,
    GeneratorSpec, NetworkProfile,
};
use crate::nn::{Adam, Archive, Feat, ParameterStore, Tape, TensorData};
use crate::presets::{LossPreset, LossTerm, LossWeights, PresetName};

pub const CHECKPOINT_KIND: &str = "train-state";

/// Full training configuration; the config file is the source of truth
/// and CLI flags override individual fields. Unknown keys are rejected so
/// misspelled overrides fail loudly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub preset: PresetName,
    pub weights: LossWeights,
    pub epochs_total: usize,
    pub epochs_constant_lr: usize,
    pub base_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Fixed at 1; kept explicit so configs are self-describing.
    pub batch_size: usize,
    pub seed: u64,
    /// Save a checkpoint every N completed epochs (0 = only at the end).
    pub checkpoint_every: usize,
    /// Emit a sample image grid every N completed epochs (0 = never).
    pub sample_every: usize,
    pub profile: NetworkProfile,
    pub shuffle_each_epoch: bool,
    /// Feed the discriminators from a buffer of past generated images
    /// instead of only the current ones. Off by default; when on, the
    /// logged loss report still scores the current images.
    pub history_buffer: bool,
    pub history_capacity: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            preset: PresetName::CdGan,
            weights: LossWeights::default(),
            epochs_total: 200,
            epochs_constant_lr: 100,
            base_lr: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 1,
            seed: 0,
            checkpoint_every: 0,
            sample_every: 0,
            profile: NetworkProfile::Test,
            shuffle_each_epoch: false,
            history_buffer: false,
            history_capacity: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size != 1 {
            return Err(Error::Config("batch_size is fixed at 1".into()));
        }
        if self.epochs_total == 0 {
            return Err(Error::Config("epochs_total must be >= 1".into()));
        }
        if self.epochs_constant_lr > self.epochs_total {
            return Err(Error::Config(
                "epochs_constant_lr must be <= epochs_total".into(),
            ));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::Config("base_lr must be positive".into()));
        }
        self.weights.validate()?;
        Ok(())
    }

    pub fn loss_preset(&self) -> LossPreset {
        let mut p = crate::presets::preset(self.preset);
        p.weights = self.weights;
        p
    }
}

/// Learning rate for a given epoch: constant for the first
/// `epochs_constant_lr` epochs, then linearly decaying to 0 at
/// `epochs_total`. The closed endpoint is the limit value 0.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch > cfg.epochs_total {
        return Err(Error::EpochOutOfRange {
            epoch,
            max: cfg.epochs_total,
        });
    }
    if epoch < cfg.epochs_constant_lr {
        return Ok(cfg.base_lr);
    }
    let span = cfg.epochs_total - cfg.epochs_constant_lr;
    if span == 0 {
        return Ok(if epoch < cfg.epochs_total { cfg.base_lr } else { 0.0 });
    }
    Ok(cfg.base_lr * (cfg.epochs_total - epoch) as f64 / span as f64)
}

/// Translation direction for inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    A2B,
    B2A,
}

impl Direction {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "a2b" => Ok(Direction::A2B),
            "b2a" => Ok(Direction::B2A),
            other => Err(Error::Config(format!("unknown direction `{other}` (a2b|b2a)"))),
        }
    }
}

/// Buffer of past generated images; queries swap in an old image half the
/// time once the buffer is full.
struct ImagePool {
    capacity: usize,
    images: Vec<Feat>,
}

impl ImagePool {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            images: Vec::new(),
        }
    }

    fn query(&mut self, img: Feat, rng: &mut ChaCha8Rng) -> Feat {
        if self.capacity == 0 {
            return img;
        }
        if self.images.len() < self.capacity {
            self.images.push(img.clone());
            return img;
        }
        if rng.gen_bool(0.5) {
            let idx = rng.gen_range(0..self.images.len());
            std::mem::replace(&mut self.images[idx], img)
        } else {
            img
        }
    }
}

/// Everything the loop owns: the four networks, their optimizer moments,
/// progress counters, and the RNG that drives shuffling and the pools.
pub struct TrainState {
    pub epoch: usize,
    pub step: u64,
    pub g_ab: Generator,
    pub g_ba: Generator,
    pub d_a: Discriminator,
    pub d_b: Discriminator,
    pub opt_g_ab: Adam,
    pub opt_g_ba: Adam,
    pub opt_d_a: Adam,
    pub opt_d_b: Adam,
    rng: ChaCha8Rng,
    pool_a: ImagePool,
    pool_b: ImagePool,
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(stream)
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let gen_spec = GeneratorSpec::standard(cfg.profile);
        let disc_spec = DiscriminatorSpec::standard(cfg.profile);
        Ok(Self {
            epoch: 0,
            step: 0,
            g_ab: build_generator(&gen_spec, derive_seed(cfg.seed, 0))?,
            g_ba: build_generator(&gen_spec, derive_seed(cfg.seed, 1))?,
            d_a: build_discriminator(&disc_spec, derive_seed(cfg.seed, 2))?,
            d_b: build_discriminator(&disc_spec, derive_seed(cfg.seed, 3))?,
            opt_g_ab: Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
            opt_g_ba: Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
            opt_d_a: Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
            opt_d_b: Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 4)),
            pool_a: ImagePool::new(if cfg.history_buffer { cfg.history_capacity } else { 0 }),
            pool_b: ImagePool::new(if cfg.history_buffer { cfg.history_capacity } else { 0 }),
        })
    }

    /// Serializes networks, optimizer moments, counters, RNG, and pools
    /// into a checkpoint archive.
    pub fn save(&mut self, path: &Path, cfg: &TrainConfig) -> Result<()> {
        let mut tensors = ParameterStore::default();
        tensors.absorb("g_ab/", self.g_ab.parameter_store());
        tensors.absorb("g_ba/", self.g_ba.parameter_store());
        tensors.absorb("d_a/", self.d_a.parameter_store());
        tensors.absorb("d_b/", self.d_b.parameter_store());
        self.opt_g_ab.export_state("opt_g_ab/", &mut tensors);
        self.opt_g_ba.export_state("opt_g_ba/", &mut tensors);
        self.opt_d_a.export_state("opt_d_a/", &mut tensors);
        self.opt_d_b.export_state("opt_d_b/", &mut tensors);
        for (pool, prefix) in [(&self.pool_a, "pool_a/"), (&self.pool_b, "pool_b/")] {
            for (i, img) in pool.images.iter().enumerate() {
                tensors.insert(
                    &format!("{prefix}{i:04}"),
                    TensorData {
                        shape: img.shape().to_vec(),
                        data: img.iter().copied().collect(),
                    },
                );
            }
        }
        let manifest = serde_json::json!({
            "kind": CHECKPOINT_KIND,
            "epoch": self.epoch,
            "step": self.step,
            "config": cfg,
            "generator_spec": self.g_ab.spec,
            "discriminator_spec": self.d_a.spec,
            "rng": {
                "seed": self.rng.get_seed().to_vec(),
                "word_pos": self.rng.get_word_pos().to_string(),
            },
        });
        Archive { manifest, tensors }.save(path)
    }

    /// Restores a checkpoint saved by [`TrainState::save`].
    pub fn load(path: &Path) -> Result<(TrainState, TrainConfig)> {
        let archive = Archive::load(path)?;
        let manifest = &archive.manifest;
        if manifest["kind"].as_str() != Some(CHECKPOINT_KIND) {
            return Err(Error::Checkpoint(format!(
                "{} is not a {CHECKPOINT_KIND} checkpoint",
                path.display()
            )));
        }
        let cfg: TrainConfig = serde_json::from_value(manifest["config"].clone())
            .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let gen_spec: GeneratorSpec = serde_json::from_value(manifest["generator_spec"].clone())
            .map_err(|e| Error::Checkpoint(format!("generator spec: {e}")))?;
        let disc_spec: DiscriminatorSpec =
            serde_json::from_value(manifest["discriminator_spec"].clone())
                .map_err(|e| Error::Checkpoint(format!("discriminator spec: {e}")))?;

        let mut state = TrainState {
            epoch: manifest["epoch"].as_u64().unwrap_or(0) as usize,
            step: manifest["step"].as_u64().unwrap_or(0),
            g_ab: build_generator(&gen_spec, derive_seed(cfg.seed, 0))?,
            g_ba: build_generator(&gen_spec, derive_seed(cfg.seed, 1))?,
            d_a: build_discriminator(&disc_spec, derive_seed(cfg.seed, 2))?,
            d_b: build_discriminator(&disc_spec, derive_seed(cfg.seed, 3))?,
            opt_g_ab: Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
            opt_g_ba: Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
            opt_d_a: Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
            opt_d_b: Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
            rng: restore_rng(&manifest["rng"])?,
            pool_a: restore_pool(&archive.tensors, "pool_a/", &cfg),
            pool_b: restore_pool(&archive.tensors, "pool_b/", &cfg),
        };
        state.g_ab.load_parameter_store(&archive.tensors.extract("g_ab/"))?;
        state.g_ba.load_parameter_store(&archive.tensors.extract("g_ba/"))?;
        state.d_a.load_parameter_store(&archive.tensors.extract("d_a/"))?;
        state.d_b.load_parameter_store(&archive.tensors.extract("d_b/"))?;
        state.opt_g_ab.import_state("opt_g_ab/", &archive.tensors)?;
        state.opt_g_ba.import_state("opt_g_ba/", &archive.tensors)?;
        state.opt_d_a.import_state("opt_d_a/", &archive.tensors)?;
        state.opt_d_b.import_state("opt_d_b/", &archive.tensors)?;
        Ok((state, cfg))
    }
}

fn restore_rng(value: &serde_json::Value) -> Result<ChaCha8Rng> {
    let seed_vec: Vec<u8> = value["seed"]
        .as_array()
        .ok_or_else(|| Error::Checkpoint("rng seed missing".into()))?
        .iter()
        .map(|v| v.as_u64().unwrap_or(0) as u8)
        .collect();
    let mut seed = [0u8; 32];
    if seed_vec.len() != 32 {
        return Err(Error::Checkpoint("rng seed must be 32 bytes".into()));
    }
    seed.copy_from_slice(&seed_vec);
    let mut rng = ChaCha8Rng::from_seed(seed);
    let word_pos: u128 = value["word_pos"]
        .as_str()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Checkpoint("rng word_pos missing".into()))?;
    rng.set_word_pos(word_pos);
    Ok(rng)
}

fn restore_pool(tensors: &ParameterStore, prefix: &str, cfg: &TrainConfig) -> ImagePool {
    let mut pool = ImagePool::new(if cfg.history_buffer { cfg.history_capacity } else { 0 });
    for (_, tensor) in tensors.extract(prefix).iter() {
        if tensor.shape.len() == 3 {
            if let Ok(img) = Feat::from_shape_vec(
                (tensor.shape[0], tensor.shape[1], tensor.shape[2]),
                tensor.data.clone(),
            ) {
                pool.images.push(img);
            }
        }
    }
    pool
}

/// The four generated images of one cycle pass.
pub struct CycleImages {
    pub syn_a: Feat,
    pub syn_b: Feat,
    pub cyc_a: Feat,
    pub cyc_b: Feat,
}

/// Runs both mappings and their compositions through arbitrary
/// image-to-image functions: syn_b = f_ab(real_a), syn_a = f_ba(real_b),
/// cyc_a = f_ba(syn_b), cyc_b = f_ab(syn_a).
pub fn cycle_with<FA, FB>(f_ab: FA, f_ba: FB, real_a: &Feat, real_b: &Feat) -> Result<CycleImages>
where
    FA: Fn(&Feat) -> Result<Feat>,
    FB: Fn(&Feat) -> Result<Feat>,
{
    let syn_b = f_ab(real_a)?;
    let syn_a = f_ba(real_b)?;
    let cyc_a = f_ba(&syn_b)?;
    let cyc_b = f_ab(&syn_a)?;
    Ok(CycleImages {
        syn_a,
        syn_b,
        cyc_a,
        cyc_b,
    })
}

/// Inference-mode cycle pass through the state's generators.
pub fn forward_cycle(state: &TrainState, pair: &PairedSample) -> Result<CycleImages> {
    cycle_with(
        |x| state.g_ab.infer(x),
        |x| state.g_ba.infer(x),
        pair.image_a.data(),
        pair.image_b.data(),
    )
}

/// All forwards of one optimization step, with the tapes needed to
/// backpropagate each of them, plus the loss report for the sample.
pub(crate) struct StepContext {
    real_a: Feat,
    real_b: Feat,
    syn_a: Feat,
    syn_b: Feat,
    cyc: Option<CycTensors>,
    t_ab1: Tape,
    t_ba1: Tape,
    d_a_syn: Option<(Feat, Tape)>,
    d_b_syn: Option<(Feat, Tape)>,
    d_a_real: Option<(Feat, Tape)>,
    d_b_real: Option<(Feat, Tape)>,
    pub(crate) report: LossReport,
}

struct CycTensors {
    cyc_a: Feat,
    cyc_b: Feat,
    t_ba2: Tape,
    t_ab2: Tape,
    d_a_cyc: Option<(Feat, Tape)>,
    d_b_cyc: Option<(Feat, Tape)>,
}

impl StepContext {
    /// Runs every forward pass the preset needs and evaluates the
    /// combined objective. Fails before any parameter is touched if a
    /// term comes out non-finite.
    pub(crate) fn prepare(state: &TrainState, pair: &PairedSample, cfg: &TrainConfig) -> Result<StepContext> {
        use LossTerm::*;
        let preset = cfg.loss_preset();
        let real_a = pair.image_a.data().clone();
        let real_b = pair.image_b.data().clone();

        let (syn_b, t_ab1) = state.g_ab.forward(&real_a)?;
        let (syn_a, t_ba1) = state.g_ba.forward(&real_b)?;

        let cyc = if preset.needs_cycle() {
            let (cyc_a, t_ba2) = state.g_ba.forward(&syn_b)?;
            let (cyc_b, t_ab2) = state.g_ab.forward(&syn_a)?;
            let d_a_cyc = if preset.active(CdA) {
                Some(state.d_a.forward(&cyc_a)?)
            } else {
                None
            };
            let d_b_cyc = if preset.active(CdB) {
                Some(state.d_b.forward(&cyc_b)?)
            } else {
                None
            };
            Some(CycTensors {
                cyc_a,
                cyc_b,
                t_ba2,
                t_ab2,
                d_a_cyc,
                d_b_cyc,
            })
        } else {
            None
        };

        let d_a_syn = if preset.active(AdvA) {
            Some(state.d_a.forward(&syn_a)?)
        } else {
            None
        };
        let d_b_syn = if preset.active(AdvB) {
            Some(state.d_b.forward(&syn_b)?)
        } else {
            None
        };
        let d_a_real = if preset.active(AdvA) || preset.active(CdA) {
            Some(state.d_a.forward(&real_a)?)
        } else {
            None
        };
        let d_b_real = if preset.active(AdvB) || preset.active(CdB) {
            Some(state.d_b.forward(&real_b)?)
        } else {
            None
        };

        let bundle = ForwardBundle {
            real_a: Some(&real_a),
            real_b: Some(&real_b),
            syn_a: Some(&syn_a),
            syn_b: Some(&syn_b),
            cyc_a: cyc.as_ref().map(|c| &c.cyc_a),
            cyc_b: cyc.as_ref().map(|c| &c.cyc_b),
            d_a_real: d_a_real.as_ref().map(|(m, _)| m),
            d_a_syn: d_a_syn.as_ref().map(|(m, _)| m),
            d_a_cyc: cyc.as_ref().and_then(|c| c.d_a_cyc.as_ref()).map(|(m, _)| m),
            d_b_real: d_b_real.as_ref().map(|(m, _)| m),
            d_b_syn: d_b_syn.as_ref().map(|(m, _)| m),
            d_b_cyc: cyc.as_ref().and_then(|c| c.d_b_cyc.as_ref()).map(|(m, _)| m),
        };
        let report = losses::total_objective(&preset, &bundle)?;

        Ok(StepContext {
            real_a,
            real_b,
            syn_a,
            syn_b,
            cyc,
            t_ab1,
            t_ba1,
            d_a_syn,
            d_b_syn,
            d_a_real,
            d_b_real,
            report,
        })
    }
}

fn accumulate(acc: &mut Option<Feat>, grad: Feat) {
    match acc {
        None => *acc = Some(grad),
        Some(a) => *a += &grad,
    }
}

fn scaled_l1_grad(x: &Feat, y: &Feat, weight: f64) -> Result<Feat> {
    Ok(losses::l1_loss_grad(x, y)?.mapv_into(|v| v * weight))
}

/// Accumulates d(total_generator)/d(theta) into both generators' gradient
/// buffers. Gradients flow through the discriminators into the generated
/// images, but no parameter is updated here.
pub(crate) fn accumulate_generator_gradients(state: &mut TrainState, ctx: &StepContext, cfg: &TrainConfig) -> Result<()> {
    use LossTerm::*;
    let preset = cfg.loss_preset();
    let w = &preset.weights;
    state.g_ab.net_mut().zero_grad();
    state.g_ba.net_mut().zero_grad();

    let mut g_syn_a: Option<Feat> = None;
    let mut g_syn_b: Option<Feat> = None;

    if let Some(cyc) = &ctx.cyc {
        let mut g_cyc_a: Option<Feat> = None;
        let mut g_cyc_b: Option<Feat> = None;
        if preset.active(CycA) {
            accumulate(&mut g_cyc_a, scaled_l1_grad(&cyc.cyc_a, &ctx.real_a, w.lambda_a)?);
        }
        if preset.active(CycB) {
            accumulate(&mut g_cyc_b, scaled_l1_grad(&cyc.cyc_b, &ctx.real_b, w.lambda_b)?);
        }
        if preset.active(CsA) {
            accumulate(&mut g_cyc_a, scaled_l1_grad(&cyc.cyc_a, &ctx.syn_a, w.omega_a)?);
            accumulate(&mut g_syn_a, scaled_l1_grad(&ctx.syn_a, &cyc.cyc_a, w.omega_a)?);
        }
        if preset.active(CsB) {
            accumulate(&mut g_cyc_b, scaled_l1_grad(&cyc.cyc_b, &ctx.syn_b, w.omega_b)?);
            accumulate(&mut g_syn_b, scaled_l1_grad(&ctx.syn_b, &cyc.cyc_b, w.omega_b)?);
        }
        if let Some((map, tape)) = &cyc.d_a_cyc {
            let g = losses::mean_square_to_grad(map, 1.0);
            accumulate(&mut g_cyc_a, state.d_a.net_mut().backward(tape, &g)?);
        }
        if let Some((map, tape)) = &cyc.d_b_cyc {
            let g = losses::mean_square_to_grad(map, 1.0);
            accumulate(&mut g_cyc_b, state.d_b.net_mut().backward(tape, &g)?);
        }
        if let Some(g) = g_cyc_a {
            accumulate(&mut g_syn_b, state.g_ba.net_mut().backward(&cyc.t_ba2, &g)?);
        }
        if let Some(g) = g_cyc_b {
            accumulate(&mut g_syn_a, state.g_ab.net_mut().backward(&cyc.t_ab2, &g)?);
        }
    }

    if let Some((map, tape)) = &ctx.d_a_syn {
        let g = losses::mean_square_to_grad(map, 1.0);
        accumulate(&mut g_syn_a, state.d_a.net_mut().backward(tape, &g)?);
    }
    if let Some((map, tape)) = &ctx.d_b_syn {
        let g = losses::mean_square_to_grad(map, 1.0);
        accumulate(&mut g_syn_b, state.d_b.net_mut().backward(tape, &g)?);
    }
    if preset.active(SynA) {
        accumulate(&mut g_syn_a, scaled_l1_grad(&ctx.syn_a, &ctx.real_a, w.mu_a)?);
    }
    if preset.active(SynB) {
        accumulate(&mut g_syn_b, scaled_l1_grad(&ctx.syn_b, &ctx.real_b, w.mu_b)?);
    }

    if let Some(g) = g_syn_b {
        state.g_ab.net_mut().backward(&ctx.t_ab1, &g)?;
    }
    if let Some(g) = g_syn_a {
        state.g_ba.net_mut().backward(&ctx.t_ba1, &g)?;
    }
    Ok(())
}

/// One Adam step on both generators against the combined generator
/// objective.
pub(crate) fn generator_update(state: &mut TrainState, ctx: &StepContext, cfg: &TrainConfig, lr: f64) -> Result<()> {
    accumulate_generator_gradients(state, ctx, cfg)?;
    state.opt_g_ab.step(state.g_ab.net_mut(), lr);
    state.opt_g_ba.step(state.g_ba.net_mut(), lr);
    Ok(())
}

/// One Adam step on a discriminator. Generated inputs are detached: their
/// gradients stop at the discriminator input.
fn discriminator_update(
    disc: &mut Discriminator,
    opt: &mut Adam,
    lr: f64,
    real: &(Feat, Tape),
    syn: Option<&(Feat, Tape)>,
    cyc: Option<&(Feat, Tape)>,
) -> Result<()> {
    disc.net_mut().zero_grad();
    // the real map appears once per active adversarial loss
    let mut real_grad = Feat::zeros(real.0.dim());
    if syn.is_some() {
        real_grad += &losses::mean_square_to_grad(&real.0, 1.0);
    }
    if cyc.is_some() {
        real_grad += &losses::mean_square_to_grad(&real.0, 1.0);
    }
    disc.net_mut().backward(&real.1, &real_grad)?;
    if let Some((map, tape)) = syn {
        disc.net_mut().backward(tape, &losses::mean_square_to_grad(map, 0.0))?;
    }
    if let Some((map, tape)) = cyc {
        disc.net_mut().backward(tape, &losses::mean_square_to_grad(map, 0.0))?;
    }
    opt.step(disc.net_mut(), lr);
    Ok(())
}

/// Scores either the prepared forward (reused; the discriminator has not
/// changed since `prepare`) or a pool-buffered image when the history
/// buffer is enabled.
fn pooled_scores<'a>(
    disc: &Discriminator,
    pool: &mut ImagePool,
    rng: &mut ChaCha8Rng,
    current: Option<(&Feat, &'a (Feat, Tape))>,
    fresh_slot: &'a mut Option<(Feat, Tape)>,
) -> Result<Option<&'a (Feat, Tape)>> {
    match current {
        None => Ok(None),
        Some((img, prepared)) => {
            if pool.capacity == 0 {
                Ok(Some(prepared))
            } else {
                let pooled = pool.query(img.clone(), rng);
                *fresh_slot = Some(disc.forward(&pooled)?);
                Ok(fresh_slot.as_ref())
            }
        }
    }
}

pub(crate) fn discriminator_phase(state: &mut TrainState, ctx: &StepContext, _cfg: &TrainConfig, lr: f64) -> Result<()> {
    // Domain A
    if let Some(real) = &ctx.d_a_real {
        let syn_current = ctx.d_a_syn.as_ref().map(|s| (&ctx.syn_a, s));
        let cyc_current = ctx
            .cyc
            .as_ref()
            .and_then(|c| c.d_a_cyc.as_ref().map(|s| (&c.cyc_a, s)));
        let (mut syn_slot, mut cyc_slot) = (None, None);
        let syn = pooled_scores(&state.d_a, &mut state.pool_a, &mut state.rng, syn_current, &mut syn_slot)?;
        let cyc = pooled_scores(&state.d_a, &mut state.pool_a, &mut state.rng, cyc_current, &mut cyc_slot)?;
        discriminator_update(&mut state.d_a, &mut state.opt_d_a, lr, real, syn, cyc)?;
    }
    // Domain B
    if let Some(real) = &ctx.d_b_real {
        let syn_current = ctx.d_b_syn.as_ref().map(|s| (&ctx.syn_b, s));
        let cyc_current = ctx
            .cyc
            .as_ref()
            .and_then(|c| c.d_b_cyc.as_ref().map(|s| (&c.cyc_b, s)));
        let (mut syn_slot, mut cyc_slot) = (None, None);
        let syn = pooled_scores(&state.d_b, &mut state.pool_b, &mut state.rng, syn_current, &mut syn_slot)?;
        let cyc = pooled_scores(&state.d_b, &mut state.pool_b, &mut state.rng, cyc_current, &mut cyc_slot)?;
        discriminator_update(&mut state.d_b, &mut state.opt_d_b, lr, real, syn, cyc)?;
    }
    Ok(())
}

/// One optimization step on one sample: generators first, then each
/// discriminator, returning the loss report for the (pre-update) sample.
pub fn train_step(state: &mut TrainState, pair: &PairedSample, cfg: &TrainConfig) -> Result<LossReport> {
    let lr = lr_at_epoch(cfg, state.epoch)?;
    let ctx = StepContext::prepare(state, pair, cfg)?;
    generator_update(state, &ctx, cfg, lr)?;
    discriminator_phase(state, &ctx, cfg, lr)?;
    state.step += 1;
    Ok(ctx.report)
}

/// One logged step of a training run.
#[derive(Debug, Clone)]
pub struct LogRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub report: LossReport,
}

/// On-disk layout of a training run.
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    /// Fresh run directory; a stale log from an earlier run is removed so
    /// re-running a configuration reproduces its outputs byte for byte.
    pub fn create(root: &Path, cfg: &TrainConfig) -> Result<Self> {
        let dir = Self::open(root, cfg)?;
        let log = dir.log_path();
        if log.exists() {
            std::fs::remove_file(&log)?;
        }
        Ok(dir)
    }

    /// Run directory for a resumed run; the existing log is kept and
    /// appended to.
    pub fn open(root: &Path, cfg: &TrainConfig) -> Result<Self> {
        std::fs::create_dir_all(root.join("checkpoints"))?;
        std::fs::create_dir_all(root.join("samples"))?;
        let cfg_text = toml::to_string_pretty(cfg)
            .map_err(|e| Error::Config(format!("config snapshot: {e}")))?;
        std::fs::write(root.join("config.toml"), cfg_text)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn checkpoint_path(&self, epoch: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("epoch_{epoch:04}.ckpt"))
    }

    pub fn log_path(&self) -> PathBuf {
        self.root.join("log.tsv")
    }

    fn append_log(&self, records: &[LogRecord]) -> Result<()> {
        let path = self.log_path();
        let fresh = !path.exists();
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)?;
        if fresh {
            writeln!(file, "{}", LossReport::log_header())?;
        }
        for r in records {
            writeln!(file, "{}", r.report.log_line(r.step, r.epoch, r.lr))?;
        }
        Ok(())
    }

    fn emit_samples(&self, state: &TrainState, pairs: &[PairedSample], epoch: usize) -> Result<()> {
        let path = self.root.join("samples").join(format!("epoch_{epoch:04}.png"));
        emit_sample_grid(state, pairs, &path)
    }
}

/// Writes a grid of [real_a | translated | real_b] rows for the first few
/// pairs.
pub fn emit_sample_grid(state: &TrainState, pairs: &[PairedSample], path: &Path) -> Result<()> {
    let count = pairs.len().min(4);
    if count == 0 {
        return Ok(());
    }
    let (_, h, w) = pairs[0].image_a.shape();
    let mut canvas = image::RgbImage::new((3 * w) as u32, (count * h) as u32);
    for (row, pair) in pairs.iter().take(count).enumerate() {
        let syn_b = infer(state, &pair.image_a, Direction::A2B)?;
        for (col, img) in [&pair.image_a, &syn_b, &pair.image_b].into_iter().enumerate() {
            let (bytes, _) = img.denormalized();
            let data = bytes.data();
            for y in 0..h {
                for x in 0..w {
                    let px = image::Rgb([
                        data[(0, y, x)].round() as u8,
                        data[(1, y, x)].round() as u8,
                        data[(2, y, x)].round() as u8,
                    ]);
                    canvas.put_pixel((col * w + x) as u32, (row * h + y) as u32, px);
                }
            }
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    canvas.save(path)?;
    Ok(())
}

/// Runs the remaining epochs of `state` over the training set. Returns
/// one record per step; when `run_dir` is given, also appends the log,
/// saves checkpoints per policy, and emits sample grids.
pub fn train_loop(
    state: &mut TrainState,
    cfg: &TrainConfig,
    train_set: &[PairedSample],
    run_dir: Option<&RunDir>,
) -> Result<Vec<LogRecord>> {
    if train_set.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    cfg.validate()?;
    let mut log = Vec::new();
    while state.epoch < cfg.epochs_total {
        let lr = lr_at_epoch(cfg, state.epoch)?;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        if cfg.shuffle_each_epoch {
            for i in (1..order.len()).rev() {
                let j = state.rng.gen_range(0..=i);
                order.swap(i, j);
            }
        }
        let mut epoch_records = Vec::with_capacity(order.len());
        for idx in order {
            let report = train_step(state, &train_set[idx], cfg)?;
            epoch_records.push(LogRecord {
                step: state.step,
                epoch: state.epoch,
                lr,
                report,
            });
        }
        state.epoch += 1;
        if let Some(dir) = run_dir {
            dir.append_log(&epoch_records)?;
            let last = state.epoch == cfg.epochs_total;
            if last || (cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0) {
                state.save(&dir.checkpoint_path(state.epoch), cfg)?;
            }
            if cfg.sample_every > 0 && (state.epoch % cfg.sample_every == 0 || last) {
                dir.emit_samples(state, train_set, state.epoch)?;
            }
        }
        log.extend(epoch_records);
    }
    Ok(log)
}

/// Fresh end-to-end training run.
pub fn train(cfg: &TrainConfig, train_set: &[PairedSample], run_root: Option<&Path>) -> Result<(TrainState, Vec<LogRecord>)> {
    let run_dir = match run_root {
        Some(root) => Some(RunDir::create(root, cfg)?),
        None => None,
    };
    let mut state = TrainState::new(cfg)?;
    let log = train_loop(&mut state, cfg, train_set, run_dir.as_ref())?;
    Ok((state, log))
}

/// Continues a checkpointed run to `cfg.epochs_total`.
pub fn resume(checkpoint: &Path, train_set: &[PairedSample], run_root: Option<&Path>) -> Result<(TrainState, Vec<LogRecord>, TrainConfig)> {
    let (mut state, cfg) = TrainState::load(checkpoint)?;
    let run_dir = match run_root {
        Some(root) => Some(RunDir::open(root, &cfg)?),
        None => None,
    };
    let log = train_loop(&mut state, &cfg, train_set, run_dir.as_ref())?;
    Ok((state, log, cfg))
}

/// Single generator pass in the requested direction; input and output are
/// signed-unit images.
pub fn infer(state: &TrainState, img: &ImageTensor, direction: Direction) -> Result<ImageTensor> {
    if img.range() != ValueRange::SignedUnit {
        return Err(Error::Config(
            "infer expects a signed-unit image; normalize byte images first".into(),
        ));
    }
    let out = match direction {
        Direction::A2B => state.g_ab.infer(img.data())?,
        Direction::B2A => state.g_ba.infer(img.data())?,
    };
    ImageTensor::new(out, ValueRange::SignedUnit)
}

/// Convenience constructor for the synthetic dataset the desk-scale runs
/// use: 64 x 64 pairs by default.
pub fn toy_train_set(n: usize, size: usize, seed: u64) -> Result<Vec<PairedSample>> {
    make_toy_dataset(n, size, seed)
}
