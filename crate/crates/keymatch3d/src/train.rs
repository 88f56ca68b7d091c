//! Siamese training: both views of a rendered pair go through the same
//! parameters, the sampling layer labels correspondences, the multi-task
//! loss produces per-keypoint gradients, and the summed gradients of both
//! branches drive one SGD-with-momentum step.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::depthsynth::{DatasetManifest, NetworkInput, RenderedPair};
use crate::error::{Error, Result};
use crate::loss::{multitask_loss, LossConfig};
use crate::net::{
    backward_from_keypoints, extract_keypoints, save_checkpoint, ModelParams, NetConfig,
    SelectionMode,
};
use crate::sampling::{run_sampling_layer, SamplingConfig};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub iterations: u64,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Keypoints per image (t).
    pub keypoints: usize,
    pub nms_radius: Option<f64>,
    pub sampling: SamplingConfig,
    pub loss: LossConfig,
    pub net: NetConfig,
    pub seed: u64,
    pub checkpoint_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 1e-3,
            momentum: 0.9,
            keypoints: 16,
            nms_radius: Some(crate::net::FEATURE_STRIDE as f64),
            sampling: SamplingConfig::default(),
            loss: LossConfig::default(),
            net: NetConfig::default(),
            seed: 0,
            checkpoint_interval: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 {
            return Err(Error::config("learning rate must be >= 0"));
        }
        if self.keypoints == 0 {
            return Err(Error::config("keypoints per image must be >= 1"));
        }
        self.sampling.validate()?;
        self.loss.validate()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub iter: u64,
    pub total: f64,
    pub lc: f64,
    pub ls0: f64,
    pub ls1: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub mean_pos_score: f64,
}

pub type TrainLog = Vec<LogRecord>;

pub fn log_to_csv(log: &TrainLog) -> String {
    let mut s = String::from("iter,total,lc,ls0,ls1,npos,nneg,mean_pos_score\n");
    for r in log {
        let _ = writeln!(
            s,
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{},{},{:.9e}",
            r.iter, r.total, r.lc, r.ls0, r.ls1, r.n_pos, r.n_neg, r.mean_pos_score
        );
    }
    s
}

/// SGD momentum buffers, one per parameter buffer in checkpoint order.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn zeros(params: &ModelParams) -> Self {
        Self {
            velocity: params.buffers().iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// One training step on one rendered pair. Updates `params` and `sgd` in
/// place and returns the log record (iteration index left at 0).
pub fn train_step(
    params: &mut ModelParams,
    sgd: &mut SgdState,
    pair: &RenderedPair,
    d_min: f64,
    d_max: f64,
    cfg: &TrainConfig,
    step_seed: u64,
) -> Result<LogRecord> {
    cfg.validate()?;
    let input_a = NetworkInput::normalize_depth(&pair.depth_a, d_min, d_max)?;
    let input_b = NetworkInput::normalize_depth(&pair.depth_b, d_min, d_max)?;

    let mut rng = ChaCha8Rng::seed_from_u64(step_seed);
    let (kps_a, cache_a) = extract_keypoints(
        params,
        &input_a,
        cfg.keypoints,
        SelectionMode::TopScore,
        cfg.nms_radius,
        &mut rng,
    )?;
    let (kps_b, cache_b) = extract_keypoints(
        params,
        &input_b,
        cfg.keypoints,
        SelectionMode::TopScore,
        cfg.nms_radius,
        &mut rng,
    )?;

    let batch = run_sampling_layer(
        &kps_a,
        &kps_b,
        &pair.depth_a,
        &pair.depth_b,
        &pair.pose_a,
        &pair.pose_b,
        &pair.intrinsics,
        &cfg.sampling,
    )?;
    let out = multitask_loss(&batch, &kps_a.keypoints, &kps_b.keypoints, &cfg.loss)?;
    if !out.total.is_finite() {
        return Err(Error::domain(format!(
            "non-finite loss at training step: total={} lc={} ls0={} ls1={} n_pos={} n_neg={} pairs={:?}",
            out.total, out.contrastive, out.score0, out.score1, batch.n_pos, batch.n_neg,
            batch.pairs
        )));
    }

    // shared weights: gradients from the two branches accumulate
    let mut grads =
        backward_from_keypoints(params, &cache_a, &out.desc_grads0, &out.score_grads0)?;
    let grads_b = backward_from_keypoints(params, &cache_b, &out.desc_grads1, &out.score_grads1)?;
    grads.add(&grads_b);

    let grad_bufs = grads.buffers();
    let lr = cfg.learning_rate;
    let mu = cfg.momentum;
    for ((pbuf, vbuf), gbuf) in params
        .buffers_mut()
        .into_iter()
        .zip(sgd.velocity.iter_mut())
        .zip(grad_bufs)
    {
        for ((p, v), g) in pbuf.iter_mut().zip(vbuf.iter_mut()).zip(gbuf) {
            *v = mu * *v + g;
            *p -= lr * *v;
        }
    }

    let pos_scores: Vec<f64> = kps_a
        .keypoints
        .iter()
        .zip(&batch.l0)
        .chain(kps_b.keypoints.iter().zip(&batch.l1))
        .filter(|(_, &l)| l)
        .map(|(k, _)| k.s)
        .collect();
    let mean_pos_score = if pos_scores.is_empty() {
        0.0
    } else {
        pos_scores.iter().sum::<f64>() / pos_scores.len() as f64
    };

    Ok(LogRecord {
        iter: 0,
        total: out.total,
        lc: out.contrastive,
        ls0: out.score0,
        ls1: out.score1,
        n_pos: batch.n_pos,
        n_neg: batch.n_neg,
        mean_pos_score,
    })
}

/// Deterministic per-epoch pair order derived from (seed, epoch).
fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5u64.wrapping_shl(32).wrapping_add(epoch));
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Rounds params and momentum to f32 so the in-memory state matches what a
/// checkpoint stores; a resumed run then continues bit-identically.
fn quantize_to_f32(params: &mut ModelParams, sgd: &mut SgdState) {
    for buf in params.buffers_mut() {
        for v in buf.iter_mut() {
            *v = *v as f32 as f64;
        }
    }
    for buf in sgd.velocity.iter_mut() {
        for v in buf.iter_mut() {
            *v = *v as f32 as f64;
        }
    }
}

/// Loads the dataset's rendered pairs into memory.
pub fn load_pairs(dir: &Path, manifest: &DatasetManifest) -> Result<Vec<RenderedPair>> {
    let mut pairs = Vec::with_capacity(manifest.pairs.len());
    for (i, pref) in manifest.pairs.iter().enumerate() {
        pairs.push(RenderedPair {
            depth_a: manifest.load_depth(dir, &pref.depth_a)?,
            depth_b: manifest.load_depth(dir, &pref.depth_b)?,
            pose_a: *manifest.pose_a(i),
            pose_b: *manifest.pose_b(i),
            intrinsics: manifest.intrinsics,
        });
    }
    Ok(pairs)
}

/// Full training run. Iterates the dataset in seeded shuffled order,
/// checkpoints every `checkpoint_interval` iterations into `out_dir`, and
/// returns the final parameters with the per-iteration log. `resume`
/// restarts mid-run from (params, momentum, start iteration); the result
/// is identical to the uninterrupted run.
pub fn train(
    dataset_dir: &Path,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    resume: Option<(ModelParams, SgdState, u64)>,
) -> Result<(ModelParams, TrainLog)> {
    cfg.validate()?;
    let manifest = DatasetManifest::read(dataset_dir)?;
    let pairs = load_pairs(dataset_dir, &manifest)?;
    if pairs.is_empty() {
        return Err(Error::config("dataset has no pairs"));
    }

    let (mut params, mut sgd, start_iter) = match resume {
        Some((p, s, it)) => (p, s, it),
        None => {
            let p = ModelParams::init(cfg.net, cfg.seed);
            let s = SgdState::zeros(&p);
            (p, s, 0)
        }
    };

    let n = pairs.len();
    let mut log: TrainLog = Vec::with_capacity((cfg.iterations - start_iter) as usize);
    for iter in start_iter..cfg.iterations {
        let epoch = iter / n as u64;
        let order = epoch_order(cfg.seed, epoch, n);
        let pair = &pairs[order[(iter % n as u64) as usize]];
        let step_seed = cfg.seed ^ (iter + 1).wrapping_mul(0x2545f4914f6cdd1d);
        let mut rec = train_step(
            &mut params,
            &mut sgd,
            pair,
            manifest.d_min,
            manifest.d_max,
            cfg,
            step_seed,
        )?;
        rec.iter = iter;
        log.push(rec);

        let done = iter + 1 == cfg.iterations;
        if cfg.checkpoint_interval > 0 && ((iter + 1) % cfg.checkpoint_interval == 0 || done) {
            // keep in-memory state equal to the stored f32 snapshot
            quantize_to_f32(&mut params, &mut sgd);
            if let Some(dir) = out_dir {
                let name = if done {
                    "checkpoint_final.kmnp".to_string()
                } else {
                    format!("checkpoint_{:06}.kmnp", iter + 1)
                };
                save_checkpoint(&dir.join(name), &params, Some(&sgd.velocity))?;
            }
        }
    }
    if cfg.iterations == 0 {
        // contract: zero iterations returns the initial parameters
        if let Some(dir) = out_dir {
            save_checkpoint(&dir.join("checkpoint_final.kmnp"), &params, Some(&sgd.velocity))?;
        }
    }
    if let Some(dir) = out_dir {
        let path = dir.join("train_log.csv");
        std::fs::write(&path, log_to_csv(&log)).map_err(|e| Error::io(path, e))?;
    }
    Ok((params, log))
}
