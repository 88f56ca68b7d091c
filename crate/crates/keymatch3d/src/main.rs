//! Command-line front end for the keymatch3d pipeline: synthesize training
//! pairs, train the detector/descriptor, build a descriptor repository,
//! evaluate nearest-neighbor matching, and render match visualizations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use keymatch3d::config::{render_kv, KvConfig};
use keymatch3d::depthsynth::{
    synthesize_dataset, DatasetManifest, DepthImage, NoiseParams, PairGenConfig, TriangleMesh,
};
use keymatch3d::eval::{
    build_repository, evaluate, match_keypoints, render_matches, Repository,
    TAU_EVAL_NOISE_FREE,
};
use keymatch3d::geometry::{CameraIntrinsics, RigidTransform};
use keymatch3d::loss::LossConfig;
use keymatch3d::net::{extract_keypoints, load_checkpoint, NetConfig, SelectionMode};
use keymatch3d::sampling::{lift_keypoints, DepthLookup, SamplingConfig};
use keymatch3d::train::{train, TrainConfig};
use keymatch3d::{Error, Result};

#[derive(Parser)]
#[command(name = "keymatch3d", version, about = "Keypoint detection and view-invariant description on depth images", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing); receives a config.resolved copy.
    #[arg(long)]
    out: PathBuf,
    /// Run seed; overrides the config file and KEYMATCH3D_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (1 = deterministic reference path).
    #[arg(long, default_value_t = 1)]
    threads: u32,
}

#[derive(Subcommand)]
enum Command {
    /// Render a dataset of depth-image training pairs.
    SynthPairs {
        #[command(flatten)]
        common: Common,
        /// Number of pairs; overrides the config file.
        #[arg(long)]
        pairs: Option<u64>,
        /// Mesh: "procedural" or a path to an OBJ file; overrides the config file.
        #[arg(long)]
        mesh: Option<String>,
    },
    /// Train the detector/descriptor network on a synthesized dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory; overrides the config file.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Training iterations; overrides the config file.
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Build a 3D-tagged descriptor repository from dataset views.
    BuildRepo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Number of repository views (taken from the start of the dataset).
        #[arg(long)]
        views: Option<u32>,
    },
    /// Match test views against a repository and report accuracy.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        repo: Option<PathBuf>,
        /// Keypoint selection: top-score or random.
        #[arg(long)]
        mode: Option<String>,
        /// 3D true-match threshold in meters.
        #[arg(long)]
        tau_eval: Option<f64>,
    },
    /// Render the matches between the two views of one dataset pair.
    Match {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset pair index.
        #[arg(long)]
        pair: Option<u64>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // --help/--version print and succeed; real usage errors exit 1
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn load_config(common: &Common) -> Result<KvConfig> {
    match &common.config {
        Some(path) => KvConfig::load(path),
        None => KvConfig::parse("", None),
    }
}

/// Seed priority: --seed flag, then KEYMATCH3D_SEED, then the config file.
fn resolve_seed(common: &Common, cfg: &mut KvConfig) -> Result<u64> {
    let from_cfg = cfg.get_or("seed", 0u64)?;
    if let Some(s) = common.seed {
        return Ok(s);
    }
    match std::env::var("KEYMATCH3D_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|e| Error::config(format!("KEYMATCH3D_SEED: {e}"))),
        Err(_) => Ok(from_cfg),
    }
}

fn prepare_out(common: &Common) -> Result<()> {
    if common.threads != 1 {
        return Err(Error::config("only --threads 1 is supported"));
    }
    std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))
}

fn write_resolved(out: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let path = out.join("config.resolved");
    std::fs::write(&path, render_kv(pairs)).map_err(|e| Error::io(path, e))
}

fn required_path(flag: Option<PathBuf>, cfg: &mut KvConfig, key: &str) -> Result<PathBuf> {
    flag.or_else(|| cfg.get(key).map(PathBuf::from))
        .ok_or_else(|| Error::config(format!("missing required setting {key} (config key or --{key} flag)")))
}

/// All views of a dataset in order: pair 0 view a, pair 0 view b, pair 1
/// view a, ...
fn dataset_views(
    dir: &Path,
    manifest: &DatasetManifest,
) -> Result<Vec<(DepthImage, RigidTransform)>> {
    let mut views = Vec::with_capacity(2 * manifest.pairs.len());
    for (i, p) in manifest.pairs.iter().enumerate() {
        views.push((manifest.load_depth(dir, &p.depth_a)?, *manifest.pose_a(i)));
        views.push((manifest.load_depth(dir, &p.depth_b)?, *manifest.pose_b(i)));
    }
    Ok(views)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::SynthPairs {
            common,
            pairs,
            mesh,
        } => cmd_synth_pairs(common, pairs, mesh),
        Command::Train {
            common,
            dataset,
            iterations,
        } => cmd_train(common, dataset, iterations),
        Command::BuildRepo {
            common,
            dataset,
            checkpoint,
            views,
        } => cmd_build_repo(common, dataset, checkpoint, views),
        Command::Eval {
            common,
            dataset,
            checkpoint,
            repo,
            mode,
            tau_eval,
        } => cmd_eval(common, dataset, checkpoint, repo, mode, tau_eval),
        Command::Match {
            common,
            dataset,
            checkpoint,
            pair,
        } => cmd_match(common, dataset, checkpoint, pair),
    }
}

fn cmd_synth_pairs(common: Common, pairs: Option<u64>, mesh: Option<String>) -> Result<()> {
    prepare_out(&common)?;
    let mut cfg = load_config(&common)?;
    let seed = resolve_seed(&common, &mut cfg)?;

    let mesh_spec = mesh
        .or_else(|| cfg.get("mesh"))
        .unwrap_or_else(|| "procedural-scene".into());
    let subdivisions = cfg.get_or("mesh_subdivisions", 2u32)?;
    let mesh_seed = cfg.get_or("mesh_seed", seed)?;
    let mesh_radius = cfg.get_or("mesh_radius", 0.15f64)?;
    let width = cfg.get_or("width", 64u32)?;
    let height = cfg.get_or("height", 64u32)?;
    let fx = cfg.get_or("fx", 120.0f64)?;
    let fy = cfg.get_or("fy", 120.0f64)?;
    let cx = cfg.get_or("cx", (width as f64 - 1.0) / 2.0)?;
    let cy = cfg.get_or("cy", (height as f64 - 1.0) / 2.0)?;
    let pair_count = match pairs {
        Some(p) => p,
        None => cfg.get_or("pairs", 500u64)?,
    };
    let max_angle_deg = cfg.get_or("max_angle_deg", 20.0f64)?;
    let max_translation_frac = cfg.get_or("max_translation_frac", 0.15f64)?;
    let min_overlap = cfg.get_or("min_overlap", 0.2f64)?;
    let noise_on = match cfg.get("noise").as_deref() {
        None | Some("off") => false,
        Some("on") => true,
        Some(other) => return Err(Error::config(format!("noise must be on|off, got {other}"))),
    };
    let noise = if noise_on {
        let d = NoiseParams::default();
        Some(NoiseParams {
            sigma_base: cfg.get_or("noise_sigma_base", d.sigma_base)?,
            sigma_quadratic: cfg.get_or("noise_sigma_quadratic", d.sigma_quadratic)?,
            dropout_prob: cfg.get_or("noise_dropout_prob", d.dropout_prob)?,
            edge_shadow_width: cfg.get_or("noise_edge_shadow_width", d.edge_shadow_width)?,
        })
    } else {
        None
    };
    cfg.reject_unknown()?;

    let mesh_obj = match mesh_spec.as_str() {
        "procedural" => TriangleMesh::procedural(mesh_seed, subdivisions, mesh_radius),
        "procedural-scene" => {
            TriangleMesh::procedural_scene(mesh_seed, subdivisions, mesh_radius)
        }
        path => TriangleMesh::load_obj(Path::new(path))?,
    };
    let intrinsics = CameraIntrinsics::new(fx, fy, cx, cy, width, height)?;
    let gen_cfg = PairGenConfig {
        max_angle: max_angle_deg.to_radians(),
        max_translation_frac,
        min_overlap,
        noise,
    };
    let manifest =
        synthesize_dataset(&mesh_obj, intrinsics, pair_count, gen_cfg, seed, &common.out)?;

    let mut resolved = vec![
        ("mesh", mesh_spec.clone()),
        ("mesh_subdivisions", subdivisions.to_string()),
        ("mesh_seed", mesh_seed.to_string()),
        ("mesh_radius", mesh_radius.to_string()),
        ("width", width.to_string()),
        ("height", height.to_string()),
        ("fx", fx.to_string()),
        ("fy", fy.to_string()),
        ("cx", cx.to_string()),
        ("cy", cy.to_string()),
        ("pairs", pair_count.to_string()),
        ("seed", seed.to_string()),
        ("max_angle_deg", max_angle_deg.to_string()),
        ("max_translation_frac", max_translation_frac.to_string()),
        ("min_overlap", min_overlap.to_string()),
        ("noise", if noise_on { "on" } else { "off" }.to_string()),
    ];
    if let Some(n) = &manifest.noise {
        resolved.push(("noise_sigma_base", n.sigma_base.to_string()));
        resolved.push(("noise_sigma_quadratic", n.sigma_quadratic.to_string()));
        resolved.push(("noise_dropout_prob", n.dropout_prob.to_string()));
        resolved.push(("noise_edge_shadow_width", n.edge_shadow_width.to_string()));
    }
    write_resolved(&common.out, &resolved)?;
    println!(
        "synthesized {pair_count} pairs into {} (depth range [{:.4}, {:.4}] m)",
        common.out.display(),
        manifest.d_min,
        manifest.d_max
    );
    Ok(())
}

fn parse_lookup(s: &str) -> Result<DepthLookup> {
    match s {
        "nearest" => Ok(DepthLookup::Nearest),
        "bilinear" => Ok(DepthLookup::Bilinear),
        other => Err(Error::config(format!(
            "depth_lookup must be nearest|bilinear, got {other}"
        ))),
    }
}

fn cmd_train(
    common: Common,
    dataset: Option<PathBuf>,
    iterations: Option<u64>,
) -> Result<()> {
    prepare_out(&common)?;
    let mut cfg = load_config(&common)?;
    let seed = resolve_seed(&common, &mut cfg)?;
    let dataset = required_path(dataset, &mut cfg, "dataset")?;
    let d = TrainConfig::default();
    let nd = NetConfig::default();
    let iterations = match iterations {
        Some(i) => i,
        None => cfg.get_or("iterations", d.iterations)?,
    };
    let lookup = parse_lookup(&cfg.get("depth_lookup").unwrap_or_else(|| "nearest".into()))?;
    let tc = TrainConfig {
        iterations,
        learning_rate: cfg.get_or("learning_rate", d.learning_rate)?,
        momentum: cfg.get_or("momentum", d.momentum)?,
        keypoints: cfg.get_or("keypoints", d.keypoints)?,
        nms_radius: cfg.get_parsed("nms_radius")?,
        sampling: SamplingConfig {
            tau_pos: cfg.get_or("tau_pos", SamplingConfig::default().tau_pos)?,
            depth_lookup: lookup,
        },
        loss: LossConfig {
            lambda_c: cfg.get_or("lambda_c", 1.0)?,
            lambda_s: cfg.get_or("lambda_s", 1.0)?,
            margin: cfg.get_or("margin", 1.0)?,
            gamma: cfg.get_or("gamma", 1.0)?,
        },
        net: NetConfig {
            descriptor_dim: cfg.get_or("descriptor_dim", nd.descriptor_dim)?,
            roi_size: cfg.get_or("roi_size", nd.roi_size)?,
            pool_size: cfg.get_or("pool_size", nd.pool_size)?,
            keypoints_per_image: cfg.get_or("keypoints", d.keypoints)? as u32,
        },
        seed,
        checkpoint_interval: cfg.get_or("checkpoint_interval", d.checkpoint_interval)?,
    };
    cfg.reject_unknown()?;

    write_resolved(
        &common.out,
        &[
            ("dataset", dataset.display().to_string()),
            ("iterations", tc.iterations.to_string()),
            ("learning_rate", tc.learning_rate.to_string()),
            ("momentum", tc.momentum.to_string()),
            ("keypoints", tc.keypoints.to_string()),
            (
                "nms_radius",
                tc.nms_radius.map(|v| v.to_string()).unwrap_or_else(|| "none".into()),
            ),
            ("tau_pos", tc.sampling.tau_pos.to_string()),
            (
                "depth_lookup",
                match tc.sampling.depth_lookup {
                    DepthLookup::Nearest => "nearest".into(),
                    DepthLookup::Bilinear => "bilinear".into(),
                },
            ),
            ("lambda_c", tc.loss.lambda_c.to_string()),
            ("lambda_s", tc.loss.lambda_s.to_string()),
            ("margin", tc.loss.margin.to_string()),
            ("gamma", tc.loss.gamma.to_string()),
            ("descriptor_dim", tc.net.descriptor_dim.to_string()),
            ("roi_size", tc.net.roi_size.to_string()),
            ("pool_size", tc.net.pool_size.to_string()),
            ("seed", tc.seed.to_string()),
            ("checkpoint_interval", tc.checkpoint_interval.to_string()),
        ],
    )?;

    let (_, log) = train(&dataset, &tc, Some(&common.out), None)?;
    let last = log.last().map(|r| r.total).unwrap_or(f64::NAN);
    println!(
        "trained {} iterations; final loss {last:.6}; outputs in {}",
        log.len(),
        common.out.display()
    );
    Ok(())
}

fn cmd_build_repo(
    common: Common,
    dataset: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    views_flag: Option<u32>,
) -> Result<()> {
    prepare_out(&common)?;
    let mut cfg = load_config(&common)?;
    let _ = resolve_seed(&common, &mut cfg)?; // deterministic; seed unused
    let dataset = required_path(dataset, &mut cfg, "dataset")?;
    let checkpoint = required_path(checkpoint, &mut cfg, "checkpoint")?;
    let views_n = match views_flag {
        Some(v) => v,
        None => cfg.get_or("views", keymatch3d::eval::DEFAULT_REPOSITORY_VIEWS)?,
    };
    let t = cfg.get_or("keypoints", 16usize)?;
    cfg.reject_unknown()?;

    let (params, _) = load_checkpoint(&checkpoint)?;
    let manifest = DatasetManifest::read(&dataset)?;
    let mut views = dataset_views(&dataset, &manifest)?;
    views.truncate(views_n as usize);
    let repo = build_repository(
        &params,
        &views,
        &manifest.intrinsics,
        manifest.d_min,
        manifest.d_max,
        t,
    )?;
    let path = common.out.join("repository.kmrp");
    repo.save(&path)?;
    write_resolved(
        &common.out,
        &[
            ("dataset", dataset.display().to_string()),
            ("checkpoint", checkpoint.display().to_string()),
            ("views", views_n.to_string()),
            ("keypoints", t.to_string()),
        ],
    )?;
    println!(
        "repository with {} entries from {} views written to {}",
        repo.len(),
        views.len(),
        path.display()
    );
    Ok(())
}

fn cmd_eval(
    common: Common,
    dataset: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    repo_flag: Option<PathBuf>,
    mode_flag: Option<String>,
    tau_flag: Option<f64>,
) -> Result<()> {
    prepare_out(&common)?;
    let mut cfg = load_config(&common)?;
    let seed = resolve_seed(&common, &mut cfg)?;
    let dataset = required_path(dataset, &mut cfg, "dataset")?;
    let checkpoint = required_path(checkpoint, &mut cfg, "checkpoint")?;
    let repo_path = required_path(repo_flag, &mut cfg, "repo")?;
    let tau_eval = match tau_flag {
        Some(v) => v,
        None => cfg.get_or("tau_eval", TAU_EVAL_NOISE_FREE)?,
    };
    let mode_str = mode_flag
        .or_else(|| cfg.get("mode"))
        .unwrap_or_else(|| "top-score".into());
    let mode = match mode_str.as_str() {
        "top-score" => SelectionMode::TopScore,
        "random" => SelectionMode::Random,
        other => {
            return Err(Error::config(format!(
                "mode must be top-score|random, got {other}"
            )))
        }
    };
    let t = cfg.get_or("keypoints", 16usize)?;
    // test views are taken from the end of the dataset, so they are
    // disjoint from a repository built from the start whenever
    // views + test_views <= total
    let test_n = cfg.get_or("test_views", 20u32)?;
    cfg.reject_unknown()?;

    let (params, _) = load_checkpoint(&checkpoint)?;
    let manifest = DatasetManifest::read(&dataset)?;
    let mut views = dataset_views(&dataset, &manifest)?;
    let skip = views.len().saturating_sub(test_n as usize);
    views.drain(..skip);
    let repo = Repository::load(&repo_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (total, csv) = evaluate(
        &params,
        &views,
        &manifest.intrinsics,
        manifest.d_min,
        manifest.d_max,
        t,
        &repo,
        tau_eval,
        mode,
        &mut rng,
    )?;
    let csv_path = common.out.join("results.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    write_resolved(
        &common.out,
        &[
            ("dataset", dataset.display().to_string()),
            ("checkpoint", checkpoint.display().to_string()),
            ("repo", repo_path.display().to_string()),
            ("tau_eval", tau_eval.to_string()),
            ("mode", mode_str.clone()),
            ("keypoints", t.to_string()),
            ("test_views", test_n.to_string()),
            ("seed", seed.to_string()),
        ],
    )?;
    println!(
        "matched {} queries over {} views: {} true, accuracy {:.4}",
        total.records.len(),
        views.len(),
        total.true_matches(),
        total.accuracy()
    );
    Ok(())
}

fn cmd_match(
    common: Common,
    dataset: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    pair_flag: Option<u64>,
) -> Result<()> {
    prepare_out(&common)?;
    let mut cfg = load_config(&common)?;
    let _ = resolve_seed(&common, &mut cfg)?;
    let dataset = required_path(dataset, &mut cfg, "dataset")?;
    let checkpoint = required_path(checkpoint, &mut cfg, "checkpoint")?;
    let pair_idx = match pair_flag {
        Some(p) => p,
        None => cfg.get_or("pair", 0u64)?,
    } as usize;
    let t = cfg.get_or("keypoints", 16usize)?;
    let tau_eval = cfg.get_or("tau_eval", TAU_EVAL_NOISE_FREE)?;
    cfg.reject_unknown()?;

    let (params, _) = load_checkpoint(&checkpoint)?;
    let manifest = DatasetManifest::read(&dataset)?;
    if pair_idx >= manifest.pairs.len() {
        return Err(Error::domain(format!(
            "pair {pair_idx} out of range (dataset has {})",
            manifest.pairs.len()
        )));
    }
    let pref = &manifest.pairs[pair_idx];
    let depth_a = manifest.load_depth(&dataset, &pref.depth_a)?;
    let depth_b = manifest.load_depth(&dataset, &pref.depth_b)?;
    let pose_a = *manifest.pose_a(pair_idx);
    let pose_b = *manifest.pose_b(pair_idx);

    // view a acts as a one-view repository; view b's keypoints query it
    let scfg = SamplingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let input_a =
        keymatch3d::depthsynth::NetworkInput::normalize_depth(&depth_a, manifest.d_min, manifest.d_max)?;
    let (kps_a, _) = extract_keypoints(
        &params,
        &input_a,
        t,
        SelectionMode::TopScore,
        None,
        &mut rng,
    )?;
    let lifted_a = lift_keypoints(&kps_a, &depth_a, &pose_a, &manifest.intrinsics, &scfg);
    let mut repo = Repository {
        dim: params.cfg.descriptor_dim,
        descriptors: Vec::new(),
        world: Vec::new(),
        view_ids: Vec::new(),
    };
    let mut repo_px = Vec::new();
    for (kp, w) in kps_a.keypoints.iter().zip(&lifted_a) {
        if let Some(w) = w {
            repo.descriptors.push(kp.f.clone());
            repo.world.push(*w);
            repo.view_ids.push(0);
            repo_px.push(kp.x);
        }
    }
    let input_b =
        keymatch3d::depthsynth::NetworkInput::normalize_depth(&depth_b, manifest.d_min, manifest.d_max)?;
    let (kps_b, _) = extract_keypoints(
        &params,
        &input_b,
        t,
        SelectionMode::TopScore,
        None,
        &mut rng,
    )?;
    let lifted_b = lift_keypoints(&kps_b, &depth_b, &pose_b, &manifest.intrinsics, &scfg);
    let result = match_keypoints(&kps_b.keypoints, &lifted_b, &repo, tau_eval)?;
    let lines: Vec<_> = result
        .records
        .iter()
        .filter(|r| r.is_true)
        .map(|r| (repo_px[r.repo_index], r.query_px))
        .collect();

    let img_path = common.out.join(format!("match_{pair_idx:05}.ppm"));
    render_matches(&img_path, &depth_a, &depth_b, &lines)?;
    write_resolved(
        &common.out,
        &[
            ("dataset", dataset.display().to_string()),
            ("checkpoint", checkpoint.display().to_string()),
            ("pair", pair_idx.to_string()),
            ("keypoints", t.to_string()),
            ("tau_eval", tau_eval.to_string()),
        ],
    )?;
    println!(
        "pair {pair_idx}: {} queries, {} true matches, accuracy {:.4}; wrote {}",
        result.records.len(),
        result.true_matches(),
        result.accuracy(),
        img_path.display()
    );
    Ok(())
}
