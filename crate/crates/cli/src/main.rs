//! `twinspect` command-line front end.
//!
//! Every subcommand option can also come from a JSON config file passed with
//! `--config`: the file holds one object per subcommand, keyed by the
//! subcommand name, with the long flag names in snake_case as keys. Flags
//! given on the command line win over the file.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use twinspect::Exec;

#[derive(Parser, Debug)]
#[command(name = "twinspect", version, about = "RGB-D inspection against a rendered digital twin")]
struct Cli {
    /// JSON file with per-subcommand defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render RGB and depth PNGs of a mesh at a pose.
    Render(RenderArgs),
    /// Compare a captured frame (or every frame of a dataset) against the twin.
    Inspect(InspectArgs),
    /// Score inspection reports against dataset ground truth (mean IoU per category).
    Evaluate(EvaluateArgs),
    /// Refine a pose with ICP against a depth image.
    Refine(RefineArgs),
    /// Time the init / render / write phases over repeated runs.
    BenchRender(BenchRenderArgs),
    /// Refine many seeded perturbations of a ground-truth pose and report ADD.
    BenchIcp(BenchIcpArgs),
    /// Validate a dataset and print its label counts.
    DatasetValidate(DatasetValidateArgs),
    /// Generate a synthetic defect dataset from a mesh.
    Synth(SynthArgs),
    /// Write a built-in test mesh with a matching pose and camera file.
    Fixture(FixtureArgs),
}

/// Fills every unset field of `self` from `file`.
trait Overlay: Sized {
    fn overlay(&mut self, file: Self);
}

macro_rules! overlay {
    ($t:ty { $($f:ident),+ $(,)? }) => {
        impl Overlay for $t {
            fn overlay(&mut self, file: Self) {
                $(if self.$f.is_none() {
                    self.$f = file.$f;
                })+
            }
        }
    };
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderArgs {
    /// Mesh file (.obj or .ply), mm.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Pose JSON: {"cam_R_m2c": [...9], "cam_t_m2c": [...3]}.
    #[arg(long)]
    pub pose: Option<PathBuf>,
    /// Camera JSON: {"cam_K": [...9], "depth_scale", "width", "height"}.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// mm per depth PNG unit; defaults to the camera file's value.
    #[arg(long)]
    pub depth_scale: Option<f64>,
}
overlay!(RenderArgs { mesh, pose, intrinsics, out, depth_scale });

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpFlags {
    /// point_to_point or point_to_plane.
    #[arg(long)]
    pub icp_method: Option<String>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Correspondence gate, mm.
    #[arg(long)]
    pub max_correspondence_distance: Option<f64>,
    #[arg(long)]
    pub convergence_rmse_delta: Option<f64>,
    #[arg(long)]
    pub sample_count: Option<usize>,
    #[arg(long)]
    pub normal_k: Option<usize>,
    /// Seed for model surface sampling.
    #[arg(long)]
    pub icp_seed: Option<u64>,
}
overlay!(IcpFlags {
    icp_method,
    max_iterations,
    max_correspondence_distance,
    convergence_rmse_delta,
    sample_count,
    normal_k,
    icp_seed,
});

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InspectArgs {
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Captured colour PNG (single-frame mode).
    #[arg(long)]
    pub rgb: Option<PathBuf>,
    /// Captured 16-bit depth PNG (single-frame mode).
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Initial pose JSON (single-frame mode).
    #[arg(long)]
    pub pose: Option<PathBuf>,
    /// Inspect every frame of this dataset, starting from its recorded poses.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Perturb each dataset pose by up to this rotation, degrees.
    #[arg(long)]
    pub perturb_deg: Option<f64>,
    /// Perturb each dataset pose by up to this translation, mm.
    #[arg(long)]
    pub perturb_mm: Option<f64>,
    #[arg(long)]
    pub perturb_seed: Option<u64>,
    /// Refine the pose with ICP before comparing.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub refine: Option<bool>,
    /// Depth threshold, mm.
    #[arg(long)]
    pub depth_tau: Option<f64>,
    /// Colour threshold, ΔE76.
    #[arg(long)]
    pub color_tau: Option<f64>,
    /// Radius of the square opening/closing structuring element, px.
    #[arg(long)]
    pub clean_radius: Option<u32>,
    /// Smallest region kept, px.
    #[arg(long)]
    pub min_area: Option<usize>,
    /// Scene name recorded in a single-frame report.
    #[arg(long)]
    pub scene: Option<String>,
    /// Frame id recorded in a single-frame report.
    #[arg(long)]
    pub frame_id: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub icp: IcpFlags,
}
overlay!(InspectArgs {
    mesh,
    rgb,
    depth,
    intrinsics,
    pose,
    dataset,
    perturb_deg,
    perturb_mm,
    perturb_seed,
    refine,
    depth_tau,
    color_tau,
    clean_radius,
    min_area,
    scene,
    frame_id,
    out,
});

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    /// Directory of inspection report JSON files (searched recursively).
    #[arg(long)]
    pub reports: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(EvaluateArgs { reports, dataset, out });

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineArgs {
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    #[arg(long)]
    pub pose: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub icp: IcpFlags,
}
overlay!(RefineArgs { mesh, depth, intrinsics, pose, out });

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchRenderArgs {
    /// Mesh to load in the init phase; the built-in convex mesh if absent.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub pose: Option<PathBuf>,
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub skip_write: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(BenchRenderArgs { mesh, pose, intrinsics, runs, warmup, skip_write, out });

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchIcpArgs {
    /// The built-in convex mesh if absent.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Ground-truth pose.
    #[arg(long)]
    pub pose: Option<PathBuf>,
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub max_rotation_deg: Option<f64>,
    #[arg(long)]
    pub max_translation_mm: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gaussian depth noise, mm.
    #[arg(long)]
    pub noise_sigma_mm: Option<f64>,
    #[arg(long)]
    pub noise_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub icp: IcpFlags,
}
overlay!(BenchIcpArgs {
    mesh,
    pose,
    intrinsics,
    count,
    max_rotation_deg,
    max_translation_mm,
    seed,
    noise_sigma_mm,
    noise_seed,
    out,
});

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetValidateArgs {
    #[arg(long)]
    pub root: Option<PathBuf>,
}
overlay!(DatasetValidateArgs { root });

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthArgs {
    /// Mesh with named components; the built-in motor if absent.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// existence, deformation or color.
    #[arg(long)]
    pub defect_type: Option<String>,
    #[arg(long)]
    pub component: Option<String>,
    #[arg(long)]
    pub magnitude: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// JSON array of poses; the built-in waypoints if absent.
    #[arg(long)]
    pub poses: Option<PathBuf>,
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    #[arg(long)]
    pub noise_sigma_mm: Option<f64>,
    #[arg(long)]
    pub depth_scale: Option<f64>,
    #[arg(long)]
    pub scene: Option<String>,
    #[arg(long)]
    pub bump_radius_mm: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(SynthArgs {
    mesh,
    defect_type,
    component,
    magnitude,
    seed,
    frames,
    poses,
    intrinsics,
    noise_sigma_mm,
    depth_scale,
    scene,
    bump_radius_mm,
    out,
});

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureArgs {
    /// convex or motor.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(FixtureArgs { name, out });

const ICP_KEYS: [&str; 7] = [
    "icp_method",
    "max_iterations",
    "max_correspondence_distance",
    "convergence_rmse_delta",
    "sample_count",
    "normal_k",
    "icp_seed",
];

/// Overlays the config section `section` onto `args`, reading only the keys
/// that `keep` accepts.
fn overlay_keys<T: Overlay + serde::de::DeserializeOwned>(
    args: &mut T,
    config: Option<&serde_json::Value>,
    section: &str,
    keep: impl Fn(&str) -> bool,
) -> anyhow::Result<()> {
    let Some(v) = config.and_then(|c| c.get(section)) else {
        return Ok(());
    };
    let Some(obj) = v.as_object() else {
        return Err(commands::usage(format!("config section {section:?} must be an object")));
    };
    let subset: serde_json::Map<String, serde_json::Value> = obj
        .iter()
        .filter(|(k, _)| keep(k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let file: T = serde_json::from_value(subset.into())
        .map_err(|e| commands::usage(format!("config section {section:?}: {e}")))?;
    args.overlay(file);
    Ok(())
}

fn overlay_section<T: Overlay + serde::de::DeserializeOwned>(
    args: &mut T,
    config: Option<&serde_json::Value>,
    section: &str,
) -> anyhow::Result<()> {
    overlay_keys(args, config, section, |_| true)
}

/// For commands that also take ICP flags: the ICP keys share the section.
fn overlay_with_icp<T: Overlay + serde::de::DeserializeOwned>(
    args: &mut T,
    icp: impl FnOnce(&mut T) -> &mut IcpFlags,
    config: Option<&serde_json::Value>,
    section: &str,
) -> anyhow::Result<()> {
    overlay_keys(args, config, section, |k| !ICP_KEYS.contains(&k))?;
    overlay_keys(icp(args), config, section, |k| ICP_KEYS.contains(&k))
}

fn read_config(path: &std::path::Path) -> anyhow::Result<serde_json::Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| commands::usage(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| commands::usage(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(commands::usage(format!("{}: config must be a JSON object", path.display())));
    }
    Ok(v)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = cli.config.as_deref().map(read_config).transpose()?;
    let config = config.as_ref();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Render(mut a) => {
            overlay_section(&mut a, config, "render")?;
            commands::render(a)
        }
        Command::Inspect(mut a) => {
            overlay_with_icp(&mut a, |a| &mut a.icp, config, "inspect")?;
            commands::inspect(a, exec)
        }
        Command::Evaluate(mut a) => {
            overlay_section(&mut a, config, "evaluate")?;
            commands::evaluate(a)
        }
        Command::Refine(mut a) => {
            overlay_with_icp(&mut a, |a| &mut a.icp, config, "refine")?;
            commands::refine(a, exec)
        }
        Command::BenchRender(mut a) => {
            overlay_section(&mut a, config, "bench-render")?;
            commands::bench_render(a, exec)
        }
        Command::BenchIcp(mut a) => {
            overlay_with_icp(&mut a, |a| &mut a.icp, config, "bench-icp")?;
            commands::bench_icp(a, exec)
        }
        Command::DatasetValidate(mut a) => {
            overlay_section(&mut a, config, "dataset-validate")?;
            commands::dataset_validate(a)
        }
        Command::Synth(mut a) => {
            overlay_section(&mut a, config, "synth")?;
            commands::synth(a)
        }
        Command::Fixture(mut a) => {
            overlay_section(&mut a, config, "fixture")?;
            commands::fixture(a)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
