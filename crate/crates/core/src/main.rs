#![allow(clippy::neg_cmp_op_on_partial_ord)]

use clap::{Args, Parser, Subcommand};
use fisheye_motion::io::{self, CameraConfig, IoError, LabelsFile, RunConfig};
use fisheye_motion::pipeline::{
    evaluate_detection, evaluate_frame, segment, write_pgm, FlowField, SegmentationResult,
};
use fisheye_motion::sim::{generate, presets, SceneSpec, SimError};
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fisheye-motion",
    version,
    about = "Moving object detection for fisheye cameras"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene with ground-truth labels.
    Simulate(SimulateArgs),
    /// Compute per-frame motion likelihoods and segmentations.
    Detect(Box<DetectArgs>),
    /// Score segmentations against labels.
    Eval(EvalArgs),
    /// Render a likelihood CSV as a PGM image.
    Render(RenderArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Bundled scene name.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    preset: Option<String>,
    /// Scene description (JSON).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Pixel noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
struct DetectArgs {
    /// Directory produced by `simulate`; supplies camera, poses and correspondences.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    camera: Option<PathBuf>,
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long)]
    correspondences: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    cell_size: Option<usize>,
    /// Maximum range in meters; `none` disables range gating.
    #[arg(long)]
    max_range: Option<String>,
    #[arg(long)]
    min_region: Option<usize>,
    #[arg(long)]
    render_cap: Option<f64>,
    /// Fusion weights `e,d,h,p`.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    lambda_h: Option<f64>,
    #[arg(long)]
    lambda_p: Option<f64>,
    #[arg(long)]
    min_baseline: Option<f64>,
    #[arg(long)]
    adaptive_lambda_p: bool,
    #[arg(long)]
    kp: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory with `segmentation_NNNN.json` files.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Write the report as JSON here instead of printing it.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    likelihood: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.02)]
    cap: f64,
    #[arg(long, default_value_t = 5)]
    cell_size: usize,
}

#[derive(Debug)]
enum Failure {
    Io(String),
    Config(String),
    Parse(String),
    EmptyFrames(String),
    Validation(String),
    Mismatch(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 3,
            Failure::Parse(_) => 4,
            Failure::EmptyFrames(_) => 5,
            Failure::Validation(_) => 6,
            Failure::Mismatch(_) => 7,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Io(m) => write!(f, "{m}"),
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Parse(m) => write!(f, "parse error: {m}"),
            Failure::EmptyFrames(m) => write!(f, "no frames: {m}"),
            Failure::Validation(m) => write!(f, "validation error: {m}"),
            Failure::Mismatch(m) => write!(f, "{m}"),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Open { .. } => Failure::Config(e.to_string()),
            IoError::Config { .. } => Failure::Config(e.to_string()),
            IoError::Parse { .. } => Failure::Parse(e.to_string()),
            IoError::Write { .. } => Failure::Io(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Detect(a) => detect(a),
        Command::Eval(a) => eval(a),
        Command::Render(a) => render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut spec: SceneSpec = match (&args.preset, &args.spec) {
        (Some(name), _) => presets::preset(name).ok_or_else(|| {
            Failure::Config(format!(
                "unknown preset `{name}` (available: {})",
                presets::PRESET_NAMES.join(", ")
            ))
        })?,
        (None, Some(path)) => io::read_json(path).map_err(|e| match e {
            IoError::Parse { .. } => Failure::Validation(e.to_string()),
            other => other.into(),
        })?,
        (None, None) => unreachable!("clap requires one of --preset/--spec"),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(sigma) = args.noise {
        spec.noise_sigma = sigma;
    }
    if let Some(frames) = args.frames {
        spec.frames = frames;
    }
    let scene = generate(&spec).map_err(|e| match e {
        SimError::Invalid { .. } => Failure::Validation(e.to_string()),
        SimError::EmptyScene { .. } => Failure::EmptyFrames(e.to_string()),
    })?;
    let min_baseline = fisheye_motion::ConstraintConfig::default().min_baseline;
    io::write_scene(&args.out, &scene, min_baseline)?;
    println!(
        "{}: {} frame pairs written to {}",
        spec.name,
        scene.frames.len(),
        args.out.display()
    );
    Ok(())
}

fn resolve(
    flag: Option<PathBuf>,
    from_config: Option<PathBuf>,
    input: Option<&Path>,
    file: &str,
    what: &str,
) -> Result<PathBuf, Failure> {
    flag.or(from_config)
        .or_else(|| input.map(|d| d.join(file)))
        .ok_or_else(|| Failure::Config(format!("no {what} given (use --{what} or --input)")))
}

fn detect(args: Box<DetectArgs>) -> Result<(), Failure> {
    let mut run = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let c = &mut run.constraints;
    let p = &mut run.pipeline;
    if let Some(v) = args.threshold {
        p.threshold = v;
    }
    if let Some(v) = args.cell_size {
        p.cell_size = v;
    }
    if let Some(v) = &args.max_range {
        p.max_range = match v.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|_| {
                Failure::Config(format!("--max-range expects meters or `none`, got `{s}`"))
            })?),
        };
    }
    if let Some(v) = args.min_region {
        p.min_region = v;
    }
    if let Some(v) = args.render_cap {
        p.render_cap = v;
    }
    if let Some(w) = &args.weights {
        c.weights = w
            .as_slice()
            .try_into()
            .map_err(|_| Failure::Config(format!("--weights expects 4 values, got {}", w.len())))?;
    }
    if let Some(v) = args.lambda_h {
        c.lambda_h = v;
    }
    if let Some(v) = args.lambda_p {
        c.lambda_p = v;
    }
    if let Some(v) = args.min_baseline {
        c.min_baseline = v;
    }
    if args.adaptive_lambda_p {
        c.adaptive_lambda_p = true;
    }
    if let Some(v) = args.kp {
        c.adaptive_gain = v;
    }
    run.validate().map_err(Failure::Config)?;

    let input = args.input.as_deref();
    let camera_path = resolve(
        args.camera,
        run.camera.clone(),
        input,
        io::CAMERA_FILE,
        "camera",
    )?;
    let poses_path = resolve(
        args.poses,
        run.poses.clone(),
        input,
        io::POSES_FILE,
        "poses",
    )?;
    let corr_path = resolve(
        args.correspondences,
        run.correspondences.clone(),
        input,
        io::CORRESPONDENCES_FILE,
        "correspondences",
    )?;
    let out = args
        .out
        .or(run.output.clone())
        .ok_or_else(|| Failure::Config("no output directory given (use --out)".into()))?;

    for path in [&camera_path, &poses_path, &corr_path] {
        if !path.is_file() {
            return Err(Failure::Config(format!(
                "input file not found: {}",
                path.display()
            )));
        }
    }
    let camera_cfg = CameraConfig::load(&camera_path)?;
    let camera = camera_cfg.intrinsics();
    let road = camera_cfg.road();
    let poses = io::read_poses(&poses_path)?;
    let correspondences = io::read_correspondences(&corr_path)?;
    if correspondences.is_empty() {
        return Err(Failure::EmptyFrames(format!(
            "{} has no rows",
            corr_path.display()
        )));
    }

    std::fs::create_dir_all(&out)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", out.display())))?;
    let (w, h) = (camera.width as usize, camera.height as usize);
    for (&frame, pairs) in &correspondences {
        let (prev, curr) = match (poses.get(&(frame - 1)), poses.get(&frame)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Failure::Config(format!(
                    "{} lacks poses for frames {} and {}",
                    poses_path.display(),
                    frame - 1,
                    frame
                )))
            }
        };
        let flow = FlowField::from_correspondences(w, h, pairs.iter().copied());
        let grid = evaluate_frame(
            &flow,
            &camera,
            prev,
            curr,
            &road,
            &run.constraints,
            &run.pipeline,
        );
        let seg = segment(&grid, run.pipeline.threshold, run.pipeline.min_region);

        io::write_likelihood(&out.join(format!("likelihood_{frame:04}.csv")), &grid)?;
        io::write_json(&out.join(format!("segmentation_{frame:04}.json")), &seg)?;
        let map_path = out.join(format!("map_{frame:04}.pgm"));
        let file = std::fs::File::create(&map_path)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", map_path.display())))?;
        write_pgm(
            &grid,
            run.pipeline.render_cap,
            std::io::BufWriter::new(file),
        )
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", map_path.display())))?;
        println!(
            "frame {frame}: {} regions, {} cells",
            seg.regions.len(),
            seg.detected_cells()
        );
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let labels: LabelsFile = io::read_json(&args.labels)?;
    let entries = std::fs::read_dir(&args.predictions)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", args.predictions.display())))?;
    let mut files: Vec<(usize, PathBuf)> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let name = p.file_name()?.to_str()?;
            let frame = name
                .strip_prefix("segmentation_")?
                .strip_suffix(".json")?
                .parse()
                .ok()?;
            Some((frame, p))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::EmptyFrames(format!(
            "no segmentation files in {}",
            args.predictions.display()
        )));
    }
    let predicted: Vec<usize> = files.iter().map(|(k, _)| *k).collect();
    let labelled: Vec<usize> = labels.frames.iter().map(|f| f.frame).collect();
    if predicted != labelled {
        return Err(Failure::Mismatch(format!(
            "predicted frames {predicted:?} do not match labelled frames {labelled:?}"
        )));
    }
    let predictions = files
        .iter()
        .map(|(_, p)| io::read_json::<SegmentationResult>(p))
        .collect::<Result<Vec<_>, _>>()?;
    let report = evaluate_detection(&predictions, &labels.frames)
        .map_err(|e| Failure::Mismatch(e.to_string()))?;
    println!("{report}");
    match &args.json {
        Some(path) => io::write_json(path, &report)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        ),
    }
    Ok(())
}

fn render(args: RenderArgs) -> Result<(), Failure> {
    if !(args.cap > 0.0) || args.cell_size == 0 {
        return Err(Failure::Config(
            "--cap and --cell-size must be positive".into(),
        ));
    }
    let grid = io::read_likelihood(&args.likelihood, args.cell_size)?;
    let file = std::fs::File::create(&args.out)
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", args.out.display())))?;
    write_pgm(&grid, args.cap, std::io::BufWriter::new(file))
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", args.out.display())))
}
