use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use idfuse::bundle::{read_id_map, write_id_map, SceneBundle};
use idfuse::disambiguation::{DEFAULT_TAU_D, DEFAULT_TAU_N, DEFAULT_VOXEL_SIZE};
use idfuse::pipeline::{evaluation_report, run_pipeline, MergeOrder, PipelineConfig, PipelineOutput, DEFAULT_MAX_INSTANCES};
use idfuse::ply::export_cloud;
use idfuse::synthetic::{generate_bundle, CorruptionSpec, Preset, SceneConfig, SceneSpec};
use idfuse::InstanceMap;

const EXIT_DATA: u8 = 1;
const EXIT_USAGE: u8 = 2;

/// Fuse view-inconsistent 2D instance maps into globally unique 3D instances.
#[derive(Parser, Debug)]
#[command(name = "idfuse", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic scene and write it as a bundle.
    Generate(GenerateArgs),
    /// Run the full pipeline on a bundle.
    Run(RunArgs),
    /// Score instance maps against a bundle's ground truth.
    Eval(EvalArgs),
    /// Run the pipeline and write the labeled point cloud as PLY.
    Export(ExportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    /// 10 objects, 20 views, alias and fragmentation 0.3, seed 7.
    Golden,
    /// The golden setup with one large slab object.
    LargeObject,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OrderArg {
    Timestamp,
    Shuffled,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Matching radius in meters.
    #[arg(long, default_value_t = DEFAULT_TAU_D)]
    tau_d: f64,
    /// Matched-point count above which masks always merge.
    #[arg(long, default_value_t = DEFAULT_TAU_N)]
    tau_n: usize,
    #[arg(long, default_value_t = DEFAULT_VOXEL_SIZE)]
    voxel_size: f64,
    /// Number of rendered ID slots.
    #[arg(long, default_value_t = DEFAULT_MAX_INSTANCES)]
    max_instances: u32,
    /// Order in which masks enter the first comparison round.
    #[arg(long, value_enum, default_value_t = OrderArg::Timestamp)]
    order: OrderArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    corruption: CorruptionArgs,
}

/// Corruption knobs. `run` uses them only when a bundle has no rendered maps.
#[derive(Args, Debug)]
struct CorruptionArgs {
    #[arg(long, default_value_t = 0.0)]
    alias_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    fragment_rate: f64,
    #[arg(long, default_value_t = 0)]
    boundary_noise: usize,
    #[arg(long, default_value_t = 0.0)]
    semantic_noise: f64,
}

impl CorruptionArgs {
    fn spec(&self, max_instances: u32) -> CorruptionSpec {
        CorruptionSpec {
            alias_rate: self.alias_rate,
            fragment_rate: self.fragment_rate,
            boundary_noise_px: self.boundary_noise,
            semantic_noise_rate: self.semantic_noise,
            max_instances,
            ..CorruptionSpec::default()
        }
    }
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            tau_d: self.tau_d,
            tau_n: self.tau_n,
            voxel_size: self.voxel_size,
            max_instances: self.max_instances,
            order: match self.order {
                OrderArg::Timestamp => MergeOrder::Timestamp,
                OrderArg::Shuffled => MergeOrder::Shuffled,
            },
            seed: self.seed,
            corruption: self.corruption.spec(self.max_instances),
        }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Output bundle directory.
    #[arg(long)]
    out: PathBuf,
    /// Scene description (TOML). Without it a random scene is drawn.
    #[arg(long, conflicts_with = "preset")]
    scene: Option<PathBuf>,
    /// Built-in scene with its own corruption settings; overrides the
    /// scene and corruption flags.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long, default_value_t = 10)]
    objects: usize,
    #[arg(long, default_value_t = 20)]
    views: usize,
    #[arg(long, default_value_t = 20)]
    classes: u32,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 96)]
    height: usize,
    #[arg(long, default_value_t = 90.0)]
    focal: f64,
    /// Make the first object a large slab.
    #[arg(long)]
    large_object: bool,
    /// Scene and corruption seed (overrides the scene file's seed).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_MAX_INSTANCES)]
    max_instances: u32,
    #[command(flatten)]
    corruption: CorruptionArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    bundle: PathBuf,
    /// Output directory for maps, cloud, merge log and report.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    bundle: PathBuf,
    /// Directory with `corrected_NNNN.bin` maps from `run`; defaults to the
    /// bundle's own instance maps.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    bundle: PathBuf,
    /// Output PLY file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn generate(args: &GenerateArgs) -> Result<()> {
    if let Some(preset) = args.preset {
        let preset = match preset {
            PresetArg::Golden => Preset::Golden,
            PresetArg::LargeObject => Preset::LargeObject,
        };
        let (spec, corruption) = preset.scene()?;
        return write_generated(&spec, &corruption, &args.out);
    }
    let mut spec = match &args.scene {
        Some(path) => SceneSpec::load(path)?,
        None => SceneSpec::random(&SceneConfig {
            num_objects: args.objects,
            num_views: args.views,
            num_classes: args.classes,
            width: args.width,
            height: args.height,
            focal: args.focal,
            seed: args.seed.unwrap_or(0),
            large_object: args.large_object,
            ..SceneConfig::default()
        })?,
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    write_generated(&spec, &args.corruption.spec(args.max_instances), &args.out)
}

fn write_generated(spec: &SceneSpec, corruption: &CorruptionSpec, out: &Path) -> Result<()> {
    let bundle = generate_bundle(spec, corruption)?;
    bundle.save(out)?;
    write(&out.join("scene.toml"), spec.to_toml())?;
    info!("wrote {} views to {}", bundle.num_views(), out.display());
    Ok(())
}

fn pipeline(bundle_dir: &Path, args: &PipelineArgs) -> Result<PipelineOutput> {
    let config = args.config();
    config.validate()?;
    let bundle = SceneBundle::load(bundle_dir)?;
    Ok(run_pipeline(&bundle, &config)?)
}

fn run(args: &RunArgs) -> Result<()> {
    let out = pipeline(&args.bundle, &args.pipeline)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for (n, map) in out.corrected.maps.iter().enumerate() {
        write_id_map(&args.out.join(format!("corrected_{n:04}.bin")), map)?;
    }
    if let Some(maps) = &out.semantic_maps {
        for (n, map) in maps.iter().enumerate() {
            write_id_map(&args.out.join(format!("semantic_pred_{n:04}.bin")), map)?;
        }
        let classes: String = out.classes.iter().map(|(u, c)| format!("{u} {c}\n")).collect();
        write(&args.out.join("instance_classes.txt"), classes)?;
    }
    export_cloud(&out.cloud, &args.out.join("cloud.ply"))?;
    write(&args.out.join("merge_log.txt"), out.merge_log())?;
    let report = out.report.to_text();
    write(&args.out.join("report.txt"), &report)?;
    write(&args.out.join("report.json"), out.report.to_json())?;
    print!("{report}");
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let bundle = SceneBundle::load(&args.bundle)?;
    if !bundle.has_gt_instance() {
        return Err(idfuse::Error::Consistency("bundle has no ground-truth instance maps".into()).into());
    }
    let pred: Vec<InstanceMap> = match &args.pred {
        Some(dir) => (0..bundle.num_views())
            .map(|n| read_id_map(&dir.join(format!("corrected_{n:04}.bin"))))
            .collect::<idfuse::Result<_>>()?,
        None => bundle.views.iter().map(|v| v.instance.clone()).collect(),
    };
    let gt: Vec<InstanceMap> = bundle.views.iter().map(|v| v.gt_instance.clone().expect("checked")).collect();
    let semantic = match &args.pred {
        Some(dir) if bundle.has_gt_semantic() && dir.join("semantic_pred_0000.bin").exists() => {
            let maps: Vec<InstanceMap> = (0..bundle.num_views())
                .map(|n| read_id_map(&dir.join(format!("semantic_pred_{n:04}.bin"))))
                .collect::<idfuse::Result<_>>()?;
            let gt_sem: Vec<InstanceMap> = bundle.views.iter().map(|v| v.gt_semantic.clone().expect("checked")).collect();
            Some((maps, gt_sem))
        }
        _ => None,
    };
    let report = evaluation_report(
        &pred,
        &gt,
        semantic.as_ref().map(|(p, g)| (p.as_slice(), g.as_slice(), bundle.num_classes())),
    )?
    .to_text();
    if let Some(path) = &args.out {
        write(path, &report)?;
    }
    print!("{report}");
    Ok(())
}

fn export(args: &ExportArgs) -> Result<()> {
    let out = pipeline(&args.bundle, &args.pipeline)?;
    export_cloud(&out.cloud, &args.out)?;
    info!("wrote {} points to {}", out.cloud.len(), args.out.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Export(a) => export(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<idfuse::Error>() {
        Some(e) if !e.is_data_error() => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.workers {
        Some(0) => Err(anyhow::Error::new(idfuse::Error::InvalidInput(
            "--workers must be at least 1".into(),
        ))),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building worker pool")
            .and_then(|pool| pool.install(|| dispatch(&cli))),
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
