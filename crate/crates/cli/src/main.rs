use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use speckle_puf::config::ExperimentConfig;
use speckle_puf::device::ImageMeta;
use speckle_puf::io::{format_keys, json_bytes, read_keys, read_pgm, sha256_hex, ArtifactRecord, ArtifactWriter};
use speckle_puf::keys::{BinaryKey, FhdStats};
use speckle_puf::modes::{approx_mode_count, v_number};
use speckle_puf::pipeline::{
    finish, rc_eval, rc_train, report_fig3, report_fig4, run_pipeline, write_entropy, write_nist, Lab, Manifest,
    Pipeline, RcModel, SweepReport,
};

#[derive(Parser)]
#[command(name = "speckle-puf", version, about = "Multimode-waveguide optical PUF simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (JSON); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, overriding the config's.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory, overriding the config's.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, value_name = "N", env = "SPECKLE_PUF_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the V-number and approximate mode count of the configured fiber.
    Modes {
        /// Wavelength in nm; the fiber's reference wavelength by default.
        #[arg(long)]
        wavelength: Option<f64>,
    },
    /// Render one speckle image per device (the `speckle` pipeline).
    Simulate,
    /// Extract keys: the class key sets, or one key per given PGM image.
    Enroll {
        #[arg(long, num_args = 1.., value_name = "PGM")]
        images: Vec<PathBuf>,
    },
    /// Fractional Hamming distance statistics of the three classes.
    Stats,
    /// Min- and conditional entropy of generated keys or of key files.
    Entropy {
        #[arg(long, num_args = 1.., value_name = "FILE")]
        keys: Vec<PathBuf>,
    },
    /// Randomness test subset on generated keys or on key files.
    Nist {
        #[arg(long, num_args = 1.., value_name = "FILE")]
        keys: Vec<PathBuf>,
    },
    /// Reservoir computer.
    Rc {
        #[command(subcommand)]
        action: RcAction,
    },
    /// CSV tables from earlier runs.
    Report {
        #[command(subcommand)]
        figure: Figure,
    },
    /// Run a named pipeline.
    Run {
        #[arg(value_parser = parse_pipeline)]
        pipeline: Pipeline,
    },
}

#[derive(Subcommand)]
enum RcAction {
    /// Train the readout of one sweep trial.
    Train {
        #[arg(long)]
        defects: Option<usize>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Test level in dB; training uses every sweep level at or above it.
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Test a trained readout on its trial's held-out stream.
    Eval {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
    },
    /// Error surface over defect counts and SNR levels.
    Sweep,
}

#[derive(Subcommand)]
enum Figure {
    /// Three-class FHD histogram from a stats report.
    Fig3 {
        #[arg(long, value_name = "PATH")]
        stats: Option<PathBuf>,
    },
    /// Error surface table from a sweep report.
    Fig4 {
        #[arg(long, value_name = "PATH")]
        sweep: Option<PathBuf>,
    },
}

fn parse_pipeline(s: &str) -> Result<Pipeline, String> {
    s.parse().map_err(|e: speckle_puf::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn input_record(path: &Path, bytes: &[u8]) -> ArtifactRecord {
    ArtifactRecord { path: path.display().to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 }
}

fn summary(m: &Manifest, out: &Path) {
    println!("{}: {} artifacts in {}", m.pipeline, m.artifacts.len() + 1, out.display());
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    let out = g.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let pipeline = |p: Pipeline| -> anyhow::Result<()> {
        let m = run_pipeline(&cfg, p, &out)?;
        summary(&m, &out);
        Ok(())
    };

    match cli.command {
        Command::Modes { wavelength } => {
            let f = &cfg.fiber;
            let wl = wavelength.unwrap_or(f.wavelength_ref_nm);
            let v = v_number(f, wl)?;
            println!("core radius      {} um", f.core_radius_um);
            println!("numerical apert. {}", f.numerical_aperture());
            println!("wavelength       {wl} nm");
            println!("V-number         {v:.2}");
            println!("modes (V^2/2)    {:.0}", approx_mode_count(v));
            Ok(())
        }
        Command::Simulate => pipeline(Pipeline::Speckle),
        Command::Enroll { images } if images.is_empty() => pipeline(Pipeline::Enroll),
        Command::Enroll { images } => {
            let cfg = cfg.resolve()?;
            let hasher = cfg.hash.hasher(cfg.modes.grid_size)?;
            let mut keys = Vec::new();
            let mut inputs = Vec::new();
            for p in &images {
                let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
                inputs.push(input_record(p, &bytes));
                let meta = ImageMeta { device_seed: 0, wavelength_nm: 0.0, snr_db: None, noise_seed: 0 };
                let img = read_pgm(p)?.into_image(meta)?;
                keys.push(hasher.hash(&img).with_context(|| format!("hashing {}", p.display()))?);
            }
            let mut w = ArtifactWriter::new(&out)?;
            w.write("keys/images.keys", format_keys(&keys).as_bytes())?;
            let m = finish(w, &cfg, "enroll-images", inputs, Vec::new())?;
            summary(&m, &out);
            Ok(())
        }
        Command::Stats => pipeline(Pipeline::Stats),
        Command::Entropy { keys } if keys.is_empty() => pipeline(Pipeline::Entropy),
        Command::Nist { keys } if keys.is_empty() => pipeline(Pipeline::Nist),
        Command::Entropy { keys } => analyze_keys(&cfg, &keys, &out, false),
        Command::Nist { keys } => analyze_keys(&cfg, &keys, &out, true),
        Command::Rc { action: RcAction::Sweep } => pipeline(Pipeline::RcSweep),
        Command::Rc { action: RcAction::Train { defects, trial, snr } } => {
            let lab = Lab::new(&cfg)?;
            let sweep = &lab.config().reservoir;
            let defects = defects.unwrap_or(lab.config().population.params.defect_count);
            let snr = snr.unwrap_or_else(|| sweep.snr_levels_db.iter().copied().fold(f64::INFINITY, f64::min));
            let model = rc_train(&lab, defects, trial, snr)?;
            let mut w = ArtifactWriter::new(&out)?;
            w.write("rc_model.json", &json_bytes(&model))?;
            let m = finish(w, lab.config(), "rc-train", Vec::new(), vec![model.seeds])?;
            summary(&m, &out);
            Ok(())
        }
        Command::Rc { action: RcAction::Eval { model } } => {
            let bytes = fs::read(&model).with_context(|| format!("reading {}", model.display()))?;
            let rc: RcModel = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", model.display()))?;
            let lab = Lab::new(&cfg)?;
            let e = rc_eval(&lab, &rc)?;
            println!("test error {:.4} over {} frames at {} dB", e.test_error, e.test_frames, e.snr_db);
            let mut w = ArtifactWriter::new(&out)?;
            w.write("rc_eval.json", &json_bytes(&e))?;
            let m = finish(w, lab.config(), "rc-eval", vec![input_record(&model, &bytes)], vec![rc.seeds])?;
            summary(&m, &out);
            Ok(())
        }
        Command::Report { figure } => {
            let cfg = cfg.resolve()?;
            let (name, file, input) = match figure {
                Figure::Fig3 { stats } => ("fig3", "fig3.csv", stats.unwrap_or_else(|| out.join("stats.json"))),
                Figure::Fig4 { sweep } => ("fig4", "fig4.csv", sweep.unwrap_or_else(|| out.join("sweep.json"))),
            };
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let table = if name == "fig3" {
                report_fig3(&stats_from_json(&bytes).with_context(|| format!("parsing {}", input.display()))?)?
            } else {
                let r: SweepReport =
                    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", input.display()))?;
                report_fig4(&r.cells)?
            };
            let mut w = ArtifactWriter::new(&out)?;
            w.write(file, &table)?;
            let m = finish(w, &cfg, &format!("report-{name}"), vec![input_record(&input, &bytes)], Vec::new())?;
            summary(&m, &out);
            Ok(())
        }
        Command::Run { pipeline: p } => pipeline(p),
    }
}

fn analyze_keys(cfg: &ExperimentConfig, files: &[PathBuf], out: &Path, nist: bool) -> anyhow::Result<()> {
    let cfg = cfg.resolve()?;
    let (keys, inputs) = load_keys(files)?;
    let mut w = ArtifactWriter::new(out)?;
    if nist {
        let r = write_nist(&mut w, &keys)?;
        println!("{} of {} tests passed on {} bits", r.passed(), r.tests.len(), r.n_bits);
    } else {
        let r = write_entropy(&mut w, &keys)?;
        println!("h_min {:.4}  h_cond {:.4}  ({} bits)", r.h_min, r.h_cond, r.n_bits);
    }
    let m = finish(w, &cfg, if nist { "nist" } else { "entropy" }, inputs, Vec::new())?;
    summary(&m, out);
    Ok(())
}

fn load_keys(files: &[PathBuf]) -> anyhow::Result<(Vec<BinaryKey>, Vec<ArtifactRecord>)> {
    let mut keys = Vec::new();
    let mut inputs = Vec::new();
    for f in files {
        keys.extend(read_keys(f).with_context(|| format!("reading keys from {}", f.display()))?);
        inputs.push(input_record(f, &fs::read(f)?));
    }
    Ok((keys, inputs))
}

/// Class statistics from a stats report object or a plain array; classes
/// that are absent are left for the report to name.
fn stats_from_json(bytes: &[u8]) -> anyhow::Result<Vec<FhdStats>> {
    let v: serde_json::Value = serde_json::from_slice(bytes)?;
    if v.is_array() {
        return Ok(serde_json::from_value(v)?);
    }
    ["intra", "inter_i", "inter_ii"]
        .iter()
        .filter_map(|k| v.get(*k))
        .map(|s| Ok(serde_json::from_value(s.clone())?))
        .collect()
}
