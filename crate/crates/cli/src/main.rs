use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polyreg::config::{parse_entries, parse_override, Entry, SEED_ENV};
use polyreg::pipeline::{evaluate_rows, parse_transforms_csv};
use polyreg::{io, synth, Error, FrameRange, GroundTruthSet, PipelineConfig, RegistrationConfig, Result, SceneParams};

#[derive(Parser)]
#[command(name = "polyreg", version, about = "Infrared-visible video registration from blob polygons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register an infrared sequence onto a visible one.
    Register(RegisterArgs),
    /// Render a synthetic infrared/visible scene with ground truth.
    Synth(SynthArgs),
    /// Score a transform CSV against ground-truth point pairs.
    Eval(EvalArgs),
}

#[derive(Args)]
struct RegisterArgs {
    /// Directory of visible frames.
    #[arg(long)]
    vis: Option<PathBuf>,
    /// Directory of infrared frames.
    #[arg(long)]
    ir: Option<PathBuf>,
    /// Synthetic scene spec to generate and register instead of directories.
    #[arg(long)]
    synth: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inclusive frame index range, e.g. 0:99.
    #[arg(long)]
    frames: Option<String>,
    /// Write overlay images of warped infrared over visible foreground.
    #[arg(long)]
    overlays: bool,
    /// Ground-truth point pairs for the evaluation report.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Group label written in the evaluation report.
    #[arg(long, default_value = "run")]
    label: String,
    /// Configuration override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene spec file (scene.* keys); defaults apply when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory; receives vis/, ir/, gt.txt and scene.cfg.
    #[arg(long)]
    out: PathBuf,
    /// Scene key override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Transform CSV written by `register`.
    #[arg(long)]
    transforms: PathBuf,
    /// Ground-truth point pairs.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "run")]
    label: String,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn overrides(raw: &[String]) -> Result<Vec<Entry>> {
    raw.iter().map(|s| parse_override(s)).collect()
}

fn register(a: RegisterArgs) -> Result<()> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let cfg = PipelineConfig {
        input: PipelineConfig::input_from(a.vis, a.ir, a.synth)?,
        out_dir: a.out,
        frames: a.frames.as_deref().map(str::parse::<FrameRange>).transpose()?,
        overlays: a.overlays,
        ground_truth: a.gt,
        label: a.label,
        registration: RegistrationConfig::load(a.config.as_deref(), &overrides(&a.overrides)?, env_seed.as_deref())?,
    };
    let summary = polyreg::run_pipeline(&cfg)?;
    let s = summary.final_state;
    match s.best_transform {
        Some(t) => {
            let m = t.to_row_major();
            println!(
                "{} frames; best transform from frame {} (BR {:.4}): [{:.6} {:.6} {:.4}; {:.6} {:.6} {:.4}]",
                summary.rows.len(),
                s.frame_of_best,
                s.best_br,
                m[0],
                m[1],
                m[2],
                m[3],
                m[4],
                m[5]
            );
        }
        None => println!("{} frames; no transform was accepted", summary.rows.len()),
    }
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let mut entries = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            parse_entries(&text, p)?
        }
        None => Vec::new(),
    };
    entries.extend(overrides(&a.overrides)?);
    let params = SceneParams::from_entries(&entries)?;
    let spec = polyreg::SceneSpec::layout(&params).map_err(|e| Error::Config(e.to_string()))?;
    let seq = synth::generate_sequence(&spec)?;
    io::save_frames(&a.out.join("vis"), &seq.vis_frames())?;
    io::save_frames(&a.out.join("ir"), &seq.ir_frames())?;
    io::write_text(&a.out.join("gt.txt"), &seq.ground_truth(|_| true).to_text())?;
    io::write_text(&a.out.join("scene.cfg"), &params.to_text())?;
    println!("wrote {} frame pairs to {}", seq.frames.len(), a.out.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.transforms).map_err(|e| Error::Io {
        path: a.transforms.clone(),
        source: e,
    })?;
    let rows = parse_transforms_csv(&text, &a.transforms)?;
    let gt = GroundTruthSet::load(&a.gt)?;
    let doc = polyreg::eval::report(&evaluate_rows(&rows, &gt, &a.label)?);
    match &a.out {
        Some(p) => io::write_text(p, &doc),
        None => {
            print!("{doc}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Register(a) => register(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Eval(a) => eval_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("polyreg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
