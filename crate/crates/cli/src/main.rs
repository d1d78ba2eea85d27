use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use consdepth::attention::{spatial_attention, temporal_attention, FeatureMap, SpatialAttentionConfig, DEFAULT_SIGMA};
use consdepth::fusion::{fuse_pointcloud, write_ply};
use consdepth::geometry::{
    depth_consistency_pair, warp_backward, warp_round_trip, DepthMap, Grid, ImageGrid, Intrinsics, Pose,
};
use consdepth::io::{load_manifest, save_sequence, write_image_png, write_pgm};
use consdepth::loss::{
    auto_mask, cycle_mask, geometric_loss, gradcheck, motion_loss, motion_mask, photometric_loss, reference_loss,
    smoothness_loss, total_loss, LossComponents, LossKind, LossWeights, PhotometricConfig, CYCLE_PERCENTILE,
    MOTION_THRESHOLD,
};
use consdepth::sequence::{FrameSample, FrameSequence};
use consdepth::synth::{noise_factors, Preset, SyntheticSequence, TrajectoryKind, TrajectorySpec};
use consdepth::tcm::{evaluate_sequence_multi, DEFAULT_OUTLIER_FRACTION};

const SCHEMA: u32 = 1;

#[derive(Parser)]
#[command(name = "consdepth", version, about = "Consistent multi-frame depth toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence and write it with a manifest.
    Synth(SynthArgs),
    /// Warp one frame into another and report the reconstruction error.
    Warp(WarpArgs),
    /// Evaluate every training loss on one target frame and its neighbors.
    Losses(LossArgs),
    /// Spatial and temporal attention maps for one query pixel, as PGM heatmaps.
    Attn(AttnArgs),
    /// Temporal consistency of the predictions.
    Tcm(TcmArgs),
    /// Fuse predicted depth into a PLY point cloud.
    Fuse(FuseArgs),
    /// Finite-difference check of analytic loss gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Gt,
    Pred,
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// boxes, tilted or street.
    #[arg(long, default_value = "boxes")]
    preset: String,
    /// static, translate-x, translate-z, arc or wander.
    #[arg(long, default_value = "translate-x")]
    trajectory: String,
    #[arg(long, default_value_t = 7)]
    frames: usize,
    /// Per-frame motion in meters (radians for arc).
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    #[arg(long, default_value_t = 320)]
    width: usize,
    #[arg(long, default_value_t = 96)]
    height: usize,
    /// Focal length in pixels; defaults to half the width.
    #[arg(long)]
    focal: Option<f64>,
    /// Amplitude of per-frame multiplicative noise on the predictions.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct WarpArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Frame position in the manifest.
    #[arg(long)]
    target: usize,
    #[arg(long)]
    source: usize,
    /// Target depth used for the warp.
    #[arg(long, value_enum, default_value = "gt")]
    depth: Source,
    #[arg(long, value_enum, default_value = "gt")]
    pose: Source,
    /// Directory for the warped image and its validity mask.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct LossArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Frame position in the manifest; its neighbors are the sources.
    #[arg(long)]
    target: usize,
    #[arg(long, value_enum, default_value = "pred")]
    pose: Source,
    /// Depth acting as the single-frame teacher for the motion and reference terms.
    #[arg(long, value_enum, default_value = "gt")]
    teacher: Source,
    #[arg(long, default_value_t = PhotometricConfig::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = LossWeights::default().lambda_s)]
    lambda_s: f64,
    #[arg(long, default_value_t = LossWeights::default().lambda_geo)]
    lambda_geo: f64,
    #[arg(long, default_value_t = LossWeights::default().lambda_m)]
    lambda_m: f64,
    #[arg(long, default_value_t = CYCLE_PERCENTILE)]
    percentile: f64,
    #[arg(long, default_value_t = MOTION_THRESHOLD)]
    motion_threshold: f64,
    #[arg(long)]
    table: bool,
}

#[derive(clap::Args)]
struct AttnArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    target: usize,
    /// Integer downsampling factor to the attention resolution.
    #[arg(long, default_value_t = 8)]
    scale: usize,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Ball-query radius in coarse pixels.
    #[arg(long)]
    radius: Option<f64>,
    /// Query pixel `u,v` on the coarse grid; defaults to the center.
    #[arg(long, value_parser = parse_pixel)]
    query: Option<(usize, usize)>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct TcmArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Window sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "3")]
    frames: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_OUTLIER_FRACTION)]
    outlier_fraction: f64,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long)]
    table: bool,
}

#[derive(clap::Args)]
struct FuseArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Frame position whose camera frames the cloud.
    #[arg(long, default_value_t = 0)]
    reference: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, value_enum, default_value = "pred")]
    pose: Source,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct GradcheckArgs {
    /// geometric, photometric, smoothness, motion, reference or all.
    #[arg(long, default_value = "all")]
    loss: String,
    #[arg(long, default_value_t = 8)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_pixel(s: &str) -> Result<(usize, usize), String> {
    let (u, v) = s.split_once(',').ok_or("expected u,v")?;
    Ok((u.trim().parse().map_err(|_| "bad u")?, v.trim().parse().map_err(|_| "bad v")?))
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<consdepth::Error> for Failure {
    fn from(e: consdepth::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Run = Result<(), Failure>;

fn usage(flag: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{flag}: {msg}"))
}

/// Maps a validation error of a flag value to a usage failure naming the flag.
fn flag<T>(name: &str, r: consdepth::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| usage(name, e))
}

/// One `key=value` line.
struct Record(Vec<String>);

impl Record {
    fn new(command: &str) -> Self {
        Record(vec![format!("schema={SCHEMA}"), format!("command={command}")])
    }
    fn int(mut self, k: &str, v: usize) -> Self {
        self.0.push(format!("{k}={v}"));
        self
    }
    fn float(mut self, k: &str, v: f64) -> Self {
        self.0.push(format!("{k}={v:.6}"));
        self
    }
    fn sci(mut self, k: &str, v: f64) -> Self {
        self.0.push(format!("{k}={v:.6e}"));
        self
    }
    fn text(mut self, k: &str, v: impl std::fmt::Display) -> Self {
        self.0.push(format!("{k}={v}"));
        self
    }
    fn print(self) {
        println!("{}", self.0.join(" "));
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Warp(a) => warp(a),
        Command::Losses(a) => losses(a),
        Command::Attn(a) => attn(a),
        Command::Tcm(a) => tcm(a),
        Command::Fuse(a) => fuse(a),
        Command::Gradcheck(a) => grad(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            eprintln!("run 'consdepth --help' for usage");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> Result<FrameSequence, Failure> {
    Ok(load_manifest(path)?)
}

fn frame<'a>(seq: &'a FrameSequence, name: &str, i: usize) -> Result<&'a FrameSample, Failure> {
    seq.frames()
        .get(i)
        .ok_or_else(|| Failure::Data(format!("{name}: frame {i} outside a sequence of {} frames", seq.len())))
}

fn pose_of(f: &FrameSample, which: Source, i: usize) -> Result<Pose, Failure> {
    match which {
        Source::Gt => Ok(f.gt_pose),
        Source::Pred => f
            .pred_pose
            .ok_or_else(|| Failure::Data(format!("frame {i} has no predicted pose; the manifest lacks pred_poses"))),
    }
}

fn depth_of(f: &FrameSample, which: Source) -> &DepthMap {
    match which {
        Source::Gt => &f.gt_depth,
        Source::Pred => &f.pred_depth,
    }
}

fn create_dir(dir: &Path) -> Run {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))
}

fn synth(a: SynthArgs) -> Run {
    let preset: Preset = flag("--preset", a.preset.parse())?;
    let kind: TrajectoryKind = flag("--trajectory", a.trajectory.parse())?;
    if a.frames == 0 {
        return Err(usage("--frames", "must be at least 1"));
    }
    if a.width == 0 || a.height == 0 {
        return Err(usage("--width/--height", "must be positive"));
    }
    let focal = a.focal.unwrap_or(a.width as f64 / 2.0);
    let k = flag("--focal", Intrinsics::centered(focal, a.width, a.height))?;
    let factors = flag("--noise", noise_factors(a.frames, a.noise, a.seed))?;
    let spec = TrajectorySpec {
        kind,
        k: a.frames,
        step: a.step,
        seed: a.seed,
    };
    let seq = flag("--step", SyntheticSequence::render(&preset.scene(), &spec, &k, a.width, a.height))?;
    let frames = seq.frame_sequence(&factors)?;
    let manifest = save_sequence(&a.out, &frames)?;
    Record::new("synth")
        .text("preset", preset)
        .text("trajectory", kind)
        .int("frames", a.frames)
        .int("width", a.width)
        .int("height", a.height)
        .float("noise", a.noise)
        .text("seed", a.seed)
        .text("manifest", manifest.display())
        .print();
    Ok(())
}

fn warp(a: WarpArgs) -> Run {
    let seq = load(&a.manifest)?;
    let t = frame(&seq, "--target", a.target)?;
    let s = frame(&seq, "--source", a.source)?;
    let t_to_s = Pose::relative(&pose_of(t, a.pose, a.target)?, &pose_of(s, a.pose, a.source)?);
    let (img, valid) = warp_backward(&s.image, depth_of(t, a.depth), &t_to_s, seq.intrinsics())?;
    let ch = img.channels();
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, ok) in valid.iter().enumerate() {
        if *ok {
            let (x, y) = (&img.as_slice()[i * ch..(i + 1) * ch], &t.image.as_slice()[i * ch..(i + 1) * ch]);
            sum += x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() / ch as f64;
            n += 1;
        }
    }
    let mut rec = Record::new("warp")
        .int("target", a.target)
        .int("source", a.source)
        .int("valid_pixels", n)
        .float("valid_fraction", valid.coverage())
        .float("mae", if n == 0 { 0.0 } else { sum / n as f64 });
    if let Some(dir) = &a.out_dir {
        create_dir(dir)?;
        let image = dir.join(format!("warped_{:04}_from_{:04}.png", a.target, a.source));
        let mask = dir.join(format!("valid_{:04}_from_{:04}.pgm", a.target, a.source));
        write_image_png(&image, &img)?;
        write_pgm(&mask, &valid.map(|&b| if b { 1.0 } else { 0.0 }), 0.0, 1.0)?;
        rec = rec.text("image", image.display()).text("mask", mask.display());
    }
    rec.print();
    Ok(())
}

fn losses(a: LossArgs) -> Run {
    let cfg = flag("--alpha", PhotometricConfig::with_alpha(a.alpha))?;
    let weights = flag("--lambda-s/--lambda-geo/--lambda-m", LossWeights::new(a.lambda_s, a.lambda_geo, a.lambda_m))?;
    if !(a.percentile > 0.0 && a.percentile <= 1.0) {
        return Err(usage("--percentile", format!("must be in (0, 1], got {}", a.percentile)));
    }
    if !(a.motion_threshold.is_finite() && a.motion_threshold > 0.0) {
        return Err(usage("--motion-threshold", format!("must be > 0, got {}", a.motion_threshold)));
    }
    let seq = load(&a.manifest)?;
    let t = frame(&seq, "--target", a.target)?;
    let k = seq.intrinsics();
    let sources: Vec<usize> = [a.target.checked_sub(1), Some(a.target + 1)]
        .into_iter()
        .flatten()
        .filter(|&s| s < seq.len())
        .collect();
    if sources.is_empty() {
        return Err(Failure::Data("losses need at least two frames".into()));
    }
    let c2w_t = pose_of(t, a.pose, a.target)?;
    let d_t = &t.pred_depth;
    let teacher = depth_of(t, a.teacher);
    let mut warped = Vec::new();
    let mut per_source = Vec::new();
    for &si in &sources {
        let s = &seq.frames()[si];
        let t_to_s = Pose::relative(&c2w_t, &pose_of(s, a.pose, si)?);
        warped.push(warp_backward(&s.image, d_t, &t_to_s, k)?);
        let (round, round_valid) = warp_round_trip(&t.image, d_t, &s.pred_depth, &t_to_s, k)?;
        let m_cycle = cycle_mask(&t.image, &round, &round_valid, &cfg, a.percentile)?;
        per_source.push((depth_consistency_pair(d_t, &s.pred_depth, &t_to_s, k)?, m_cycle));
    }
    let raw: Vec<ImageGrid> = sources.iter().map(|&s| seq.frames()[s].image.clone()).collect();
    let m_auto = auto_mask(&t.image, &raw, &warped, &cfg)?;
    let m_motion = motion_mask(d_t, teacher, a.motion_threshold)?;
    let photometric = photometric_loss(&t.image, &warped, &m_motion, &m_auto, &cfg)?;
    let smoothness = smoothness_loss(d_t, &t.image)?;
    let mut geometric = 0.0;
    for (pair, m_cycle) in &per_source {
        geometric += geometric_loss(pair, &m_motion, &m_auto, m_cycle)?.scalar / per_source.len() as f64;
    }
    let motion = motion_loss(d_t, teacher, &m_motion)?;
    let reference = reference_loss(d_t, teacher)?;
    let c = LossComponents {
        photometric: photometric.scalar,
        smoothness: smoothness.scalar,
        geometric,
        motion: motion.scalar,
        reference: reference.scalar,
    };
    let total = total_loss(&c, &weights);
    Record::new("losses")
        .int("target", a.target)
        .text("sources", sources.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","))
        .float("photometric", c.photometric)
        .float("smoothness", c.smoothness)
        .float("geometric", c.geometric)
        .float("motion", c.motion)
        .float("reference", c.reference)
        .float("total", total)
        .float("auto_mask_coverage", m_auto.coverage())
        .float("motion_mask_coverage", m_motion.coverage())
        .print();
    if a.table {
        println!();
        println!("{:<12} {:>12} {:>10}", "term", "value", "weight");
        for (name, v, w) in [
            ("photometric", c.photometric, 1.0),
            ("smoothness", c.smoothness, weights.lambda_s),
            ("geometric", c.geometric, weights.lambda_geo),
            ("motion", c.motion, weights.lambda_m),
            ("reference", c.reference, 1.0),
        ] {
            println!("{name:<12} {v:>12.6} {w:>10.4}");
        }
        println!("{:<12} {:>12.6}", "total", total);
    }
    Ok(())
}

/// Block means over `f × f` cells; depth cells average their valid pixels and are
/// invalid when none is.
fn coarse_depth(d: &DepthMap, f: usize) -> consdepth::Result<DepthMap> {
    let (w, h) = (d.width() / f, d.height() / f);
    let mut vals = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let xs: Vec<f64> = (0..f * f).filter_map(|i| d.get(u * f + i % f, v * f + i / f)).collect();
            vals.push(if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 });
        }
    }
    DepthMap::from_values(w, h, vals)
}

fn coarse_features(img: &ImageGrid, f: usize) -> consdepth::Result<FeatureMap> {
    let n = (f * f) as f64;
    FeatureMap::from_fn(img.width() / f, img.height() / f, img.channels(), |u, v, c| {
        (0..f * f).map(|i| img.get(u * f + i % f, v * f + i / f, c)).sum::<f64>() / n
    })
}

fn attn(a: AttnArgs) -> Run {
    let cfg = flag("--sigma/--radius", SpatialAttentionConfig::new(a.sigma, a.radius))?;
    if a.scale == 0 {
        return Err(usage("--scale", "must be at least 1"));
    }
    let seq = load(&a.manifest)?;
    let t = frame(&seq, "--target", a.target)?;
    let (w, h) = (seq.width() / a.scale, seq.height() / a.scale);
    if w == 0 || h == 0 {
        return Err(usage("--scale", format!("{} leaves no coarse pixels", a.scale)));
    }
    let (qu, qv) = a.query.unwrap_or((w / 2, h / 2));
    if qu >= w || qv >= h {
        return Err(usage("--query", format!("({qu}, {qv}) outside the {w}x{h} coarse grid")));
    }
    let q = qv * w + qu;
    let k = seq.intrinsics().downsampled(a.scale)?;
    let spatial = spatial_attention(&coarse_depth(&t.pred_depth, a.scale)?, &k, &cfg)?;
    let keys: Vec<usize> = (0..seq.len()).filter(|&i| i != a.target && i.abs_diff(a.target) <= 1).collect();
    let query = coarse_features(&t.image, a.scale)?;
    let key_maps = keys
        .iter()
        .map(|&i| coarse_features(&seq.frames()[i].image, a.scale))
        .collect::<consdepth::Result<Vec<_>>>()?;
    let mut rec = Record::new("attn")
        .int("target", a.target)
        .int("coarse_width", w)
        .int("coarse_height", h)
        .int("query_u", qu)
        .int("query_v", qv)
        .float("sigma", a.sigma)
        .float("spatial_row_mean", spatial.row(q).iter().sum::<f64>() / spatial.n_key() as f64);
    let temporal = if key_maps.is_empty() {
        None
    } else {
        let refs: Vec<&FeatureMap> = key_maps.iter().collect();
        let m = temporal_attention(&query, &refs)?;
        let row = m.row(q);
        let (best, wmax) = row.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (j, &x)| if x > b.1 { (j, x) } else { b });
        rec = rec
            .text("keys", keys.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","))
            .float("temporal_max_weight", wmax)
            .int("temporal_argmax_frame", keys[best / (w * h)])
            .int("temporal_argmax_u", best % (w * h) % w)
            .int("temporal_argmax_v", best % (w * h) / w);
        Some(row.to_vec())
    };
    if let Some(dir) = &a.out_dir {
        create_dir(dir)?;
        let path = dir.join(format!("spatial_{:04}.pgm", a.target));
        write_pgm(&path, &Grid::from_vec(w, h, spatial.row(q).to_vec())?, 0.0, 1.0)?;
        rec = rec.text("spatial_map", path.display());
        if let Some(row) = &temporal {
            let hi = row.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            for (n, &key) in keys.iter().enumerate() {
                let path = dir.join(format!("temporal_{:04}_to_{key:04}.pgm", a.target));
                write_pgm(&path, &Grid::from_vec(w, h, row[n * w * h..(n + 1) * w * h].to_vec())?, 0.0, hi)?;
                rec = rec.text(&format!("temporal_map_{key}"), path.display());
            }
        }
    }
    rec.print();
    Ok(())
}

fn tcm(a: TcmArgs) -> Run {
    if !(0.0..1.0).contains(&a.outlier_fraction) {
        return Err(usage("--outlier-fraction", format!("must be in [0, 1), got {}", a.outlier_fraction)));
    }
    if a.stride == 0 {
        return Err(usage("--stride", "must be at least 1"));
    }
    if let Some(&k) = a.frames.iter().find(|&&k| k < 2) {
        return Err(usage("--frames", format!("window size must be at least 2, got {k}")));
    }
    let seq = load(&a.manifest)?;
    if let Some(&k) = a.frames.iter().find(|&&k| k > seq.len()) {
        return Err(Failure::Data(format!("--frames: window of {k} exceeds the {} frames in the manifest", seq.len())));
    }
    let reports = evaluate_sequence_multi(&seq, &a.frames, a.outlier_fraction, a.stride)?;
    for r in &reports {
        Record::new("tcm")
            .int("k", r.k)
            .float("abs_err", r.abs_err)
            .float("sq_err", r.sq_err)
            .float("rmse", r.rmse)
            .int("n_tracks", r.n_tracks)
            .float("outlier_fraction", r.outlier_fraction_applied)
            .print();
    }
    if a.table {
        println!();
        println!("{:>3} {:>10} {:>10} {:>10} {:>10}", "k", "Abs Err", "Sq Err", "RMSE", "tracks");
        for r in &reports {
            println!("{:>3} {:>10.6} {:>10.6} {:>10.6} {:>10}", r.k, r.abs_err, r.sq_err, r.rmse, r.n_tracks);
        }
    }
    Ok(())
}

fn fuse(a: FuseArgs) -> Run {
    if a.stride == 0 {
        return Err(usage("--stride", "must be at least 1"));
    }
    let seq = load(&a.manifest)?;
    frame(&seq, "--reference", a.reference)?;
    let cloud = fuse_pointcloud(&seq, a.reference, matches!(a.pose, Source::Gt), a.stride)?;
    write_ply(&cloud, &a.out)?;
    Record::new("fuse")
        .int("reference", a.reference)
        .int("stride", a.stride)
        .int("points", cloud.len())
        .text("ply", a.out.display())
        .print();
    Ok(())
}

fn grad(a: GradcheckArgs) -> Run {
    let kinds = if a.loss == "all" {
        LossKind::ALL.to_vec()
    } else {
        vec![flag("--loss", a.loss.parse())?]
    };
    if a.size < 4 {
        return Err(usage("--size", format!("must be at least 4, got {}", a.size)));
    }
    for kind in kinds {
        let r = gradcheck(kind, a.size, a.seed)?;
        Record::new("gradcheck")
            .text("loss", kind)
            .int("size", a.size)
            .text("seed", a.seed)
            .int("checked", r.checked)
            .int("active", r.active)
            .sci("max_rel_err", r.max_rel_err)
            .print();
    }
    Ok(())
}
