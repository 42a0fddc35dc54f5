//! Experiment pipelines. Each turns a config into a staged artifact set and
//! a `manifest.json` that records the resolved config and every seed.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{entropy_report, nist_subset, BitStream, EntropyReport, TestReport};
use crate::config::ExperimentConfig;
use crate::device::{new_device, Challenge, PufDevice, SpeckleImage};
use crate::io::{csv_table, encode_pgm, format_keys, json_bytes, num, sha256_hex, ArtifactRecord, ArtifactWriter};
use crate::keys::{class_stats, fhd, overlap_margin, BinaryKey, ClassMode, FhdStats, GaborHasher, HISTOGRAM_BINS};
use crate::modes::ModeFamily;
use crate::reservoir::{sweep_error_surface, trial_seeds, ReadoutModel, SweepCell, SweepConfig, Trial, TrialSeeds};
use crate::{Error, Result};

pub const TOOL: &str = "speckle-puf";

/// Published entropy figures `(method, h_conditional, h_min)` listed next to
/// the simulated row.
pub const REFERENCE_ENTROPY: [(&str, f64, f64); 3] =
    [("Waveguide-PUF", 0.99, 0.929), ("SRAM-PUF", 1.0, 0.937), ("Zigurat", 0.99, 0.928)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Speckle,
    Enroll,
    Stats,
    Entropy,
    Nist,
    RcSweep,
}

impl Pipeline {
    pub const ALL: [Pipeline; 6] =
        [Pipeline::Speckle, Pipeline::Enroll, Pipeline::Stats, Pipeline::Entropy, Pipeline::Nist, Pipeline::RcSweep];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Speckle => "speckle",
            Pipeline::Enroll => "enroll",
            Pipeline::Stats => "stats",
            Pipeline::Entropy => "entropy",
            Pipeline::Nist => "nist",
            Pipeline::RcSweep => "rc-sweep",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<_> = Pipeline::ALL.iter().map(|p| p.name()).collect();
            Error::InvalidConfig(format!("unknown pipeline '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

/// One extracted key and where it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRecord {
    pub group: usize,
    pub device_seed: u64,
    pub wavelength_nm: f64,
    pub noise_seed: u64,
    pub key: BinaryKey,
}

/// Keys of the three distance classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Enrollment {
    /// Re-measurements of the first device at the base wavelength.
    pub intra: Vec<KeyRecord>,
    /// Every device across the challenge wavelengths, one group per device.
    pub inter_i: Vec<KeyRecord>,
    /// Every device at the base wavelength.
    pub inter_ii: Vec<KeyRecord>,
}

fn groups(records: &[KeyRecord]) -> Vec<Vec<BinaryKey>> {
    let mut out: Vec<Vec<BinaryKey>> = Vec::new();
    for r in records {
        if out.len() <= r.group {
            out.resize(r.group + 1, Vec::new());
        }
        out[r.group].push(r.key);
    }
    out
}

impl Enrollment {
    pub fn records(&self, mode: ClassMode) -> &[KeyRecord] {
        match mode {
            ClassMode::Intra => &self.intra,
            ClassMode::InterI => &self.inter_i,
            ClassMode::InterII => &self.inter_ii,
        }
    }

    pub fn stats(&self, mode: ClassMode) -> Result<FhdStats> {
        class_stats(&groups(self.records(mode)), mode)
    }
}

/// Mean FHD between the base-wavelength key and the detuned key of a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningRow {
    pub offset_nm: f64,
    pub mean_fhd: f64,
    pub std_fhd: f64,
    pub devices: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub intra: FhdStats,
    pub inter_i: FhdStats,
    pub inter_ii: FhdStats,
    /// `min(inter_II) - max(intra)`.
    pub overlap_margin: f64,
    pub detuning: Vec<DetuningRow>,
}

impl ClassReport {
    pub fn classes(&self) -> [&FhdStats; 3] {
        [&self.intra, &self.inter_i, &self.inter_ii]
    }
}

/// Resolved config with the shared mode family and hasher.
pub struct Lab {
    cfg: ExperimentConfig,
    family: Arc<ModeFamily<f64>>,
    hasher: GaborHasher,
}

impl Lab {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let cfg = cfg.resolve()?;
        let family = Arc::new(ModeFamily::new(cfg.fiber, cfg.modes.max_modes, cfg.grid())?);
        let hasher = cfg.hash.hasher(cfg.modes.grid_size)?;
        Ok(Self { cfg, family, hasher })
    }

    /// The resolved config.
    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn family(&self) -> &Arc<ModeFamily<f64>> {
        &self.family
    }

    pub fn hasher(&self) -> &GaborHasher {
        &self.hasher
    }

    pub fn device(&self, seed: u64) -> Result<PufDevice<f64>> {
        new_device(Arc::clone(&self.family), &self.cfg.population.params, seed)
    }

    pub fn response(&self, device: &PufDevice<f64>, wavelength_nm: f64, noise_seed: u64) -> Result<SpeckleImage<f64>> {
        device.respond(&Challenge::plane_wave(wavelength_nm), &self.cfg.detector_spec(noise_seed))
    }

    /// Keys for `(wavelength, noise seed)` challenges of each device, in job
    /// order; the group of a key is the index of its job.
    pub fn keys(&self, jobs: &[(u64, Vec<(f64, u64)>)]) -> Result<Vec<KeyRecord>> {
        let per_device: Vec<Vec<KeyRecord>> = jobs
            .par_iter()
            .enumerate()
            .map(|(group, (seed, challenges))| {
                let dev = self.device(*seed)?;
                challenges
                    .iter()
                    .map(|&(wl, noise)| {
                        let key = self.hasher.hash(&self.response(&dev, wl, noise)?)?;
                        Ok(KeyRecord { group, device_seed: *seed, wavelength_nm: wl, noise_seed: noise, key })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(per_device.into_iter().flatten().collect())
    }

    fn base_noise(&self) -> u64 {
        self.cfg.noise_seeds()[0]
    }

    pub fn enroll(&self) -> Result<Enrollment> {
        let c = &self.cfg;
        let base = c.challenges.base_nm;
        let n0 = self.base_noise();
        let intra_jobs = [(c.device_seeds()[0], c.noise_seeds().iter().map(|&n| (base, n)).collect())];
        let inter_i_jobs: Vec<_> = c
            .device_seeds()
            .iter()
            .map(|&s| (s, c.challenges.wavelengths_nm.iter().map(|&w| (w, n0)).collect()))
            .collect();
        let mut inter_ii = self.keys(&c.device_seeds().iter().map(|&s| (s, vec![(base, n0)])).collect::<Vec<_>>())?;
        for r in &mut inter_ii {
            r.group = 0;
        }
        Ok(Enrollment { intra: self.keys(&intra_jobs)?, inter_i: self.keys(&inter_i_jobs)?, inter_ii })
    }

    /// Inter-I distance against detuning from the base wavelength.
    pub fn detuning(&self) -> Result<Vec<DetuningRow>> {
        let c = &self.cfg;
        let base = c.challenges.base_nm;
        let n0 = self.base_noise();
        let devices = c.challenges.offset_devices.min(c.device_seeds().len());
        let wls: Vec<(f64, u64)> =
            std::iter::once(base).chain(c.challenges.offsets_nm.iter().map(|d| base + d)).map(|w| (w, n0)).collect();
        let jobs: Vec<_> = c.device_seeds()[..devices].iter().map(|&s| (s, wls.clone())).collect();
        let keys = groups(&self.keys(&jobs)?);
        Ok(c.challenges
            .offsets_nm
            .iter()
            .enumerate()
            .map(|(j, &offset_nm)| {
                let d: Vec<f64> = keys.iter().map(|k| fhd(&k[0], &k[j + 1])).collect();
                let n = d.len() as f64;
                let mean = d.iter().sum::<f64>() / n;
                let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                DetuningRow { offset_nm, mean_fhd: mean, std_fhd: var.sqrt(), devices }
            })
            .collect())
    }

    pub fn class_report(&self, enrollment: &Enrollment) -> Result<ClassReport> {
        let intra = enrollment.stats(ClassMode::Intra)?;
        let inter_ii = enrollment.stats(ClassMode::InterII)?;
        Ok(ClassReport {
            overlap_margin: overlap_margin(&intra, &inter_ii),
            inter_i: enrollment.stats(ClassMode::InterI)?,
            intra,
            inter_ii,
            detuning: self.detuning()?,
        })
    }

    /// One key per analysis device at the base wavelength.
    pub fn analysis_keys(&self) -> Result<Vec<BinaryKey>> {
        let c = &self.cfg;
        let jobs: Vec<_> =
            c.key_seeds().iter().map(|&s| (s, vec![(c.challenges.base_nm, self.base_noise())])).collect();
        Ok(self.keys(&jobs)?.into_iter().map(|r| r.key).collect())
    }

    pub fn sweep(&self) -> Result<Vec<SweepCell>> {
        sweep_error_surface(&self.family, &self.cfg.population.params, &self.cfg.reservoir, self.cfg.seed)
    }

    pub fn sweep_trials(&self) -> Vec<TrialSeeds> {
        let r = &self.cfg.reservoir;
        r.defect_counts.iter().flat_map(|&d| (0..r.trials).map(move |t| trial_seeds(self.cfg.seed, d, t))).collect()
    }

    pub fn trial(&self, seeds: &TrialSeeds, sweep: &SweepConfig) -> Result<Trial<f64>> {
        Trial::new(&self.family, &self.cfg.population.params, sweep, seeds)
    }
}

/// Every seed a run derived, alongside the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedSeeds {
    pub master: u64,
    pub devices: Vec<u64>,
    pub noise: Vec<u64>,
    pub analysis_keys: Vec<u64>,
    pub hash: u64,
    pub reservoir_trials: Vec<TrialSeeds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub pipeline: String,
    /// SHA-256 of the resolved config as serialized below.
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub seeds: DerivedSeeds,
    pub inputs: Vec<ArtifactRecord>,
    pub artifacts: Vec<ArtifactRecord>,
    /// The only field that differs between identical runs.
    pub created_unix_s: u64,
}

/// Writes `manifest.json` for the staged artifacts and commits them all.
pub fn finish(
    mut w: ArtifactWriter,
    cfg: &ExperimentConfig,
    pipeline: &str,
    inputs: Vec<ArtifactRecord>,
    reservoir_trials: Vec<TrialSeeds>,
) -> Result<Manifest> {
    let manifest = Manifest {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        pipeline: pipeline.into(),
        config_sha256: sha256_hex(cfg.to_json().as_bytes()),
        config: cfg.clone(),
        seeds: DerivedSeeds {
            master: cfg.seed,
            devices: cfg.device_seeds().to_vec(),
            noise: cfg.noise_seeds().to_vec(),
            analysis_keys: cfg.key_seeds().to_vec(),
            hash: cfg.hash.hash_seed,
            reservoir_trials,
        },
        inputs,
        artifacts: w.records().to_vec(),
        created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    w.write("manifest.json", &json_bytes(&manifest))?;
    w.commit()?;
    Ok(manifest)
}

/// File name of a response image.
pub fn image_name(device_seed: u64, wavelength_nm: f64, noise_seed: u64) -> String {
    format!("dev{device_seed}_wl{}_n{noise_seed}.pgm", num(wavelength_nm))
}

/// Runs `pipeline` and writes its artifacts under `out`. On error the files
/// written so far keep their `.partial` suffix.
pub fn run_pipeline(cfg: &ExperimentConfig, pipeline: Pipeline, out: &Path) -> Result<Manifest> {
    let lab = Lab::new(cfg)?;
    let mut w = ArtifactWriter::new(out)?;
    let mut trials = Vec::new();
    match pipeline {
        Pipeline::Speckle => write_speckle(&lab, &mut w)?,
        Pipeline::Enroll => write_enrollment(&mut w, &lab.enroll()?)?,
        Pipeline::Stats => {
            let enrollment = lab.enroll()?;
            write_enrollment(&mut w, &enrollment)?;
            write_class_report(&mut w, &lab.class_report(&enrollment)?)?;
        }
        Pipeline::Entropy => {
            let keys = lab.analysis_keys()?;
            w.write("keys/analysis.keys", format_keys(&keys).as_bytes())?;
            write_entropy(&mut w, &keys)?;
        }
        Pipeline::Nist => {
            let keys = lab.analysis_keys()?;
            w.write("keys/analysis.keys", format_keys(&keys).as_bytes())?;
            write_nist(&mut w, &keys)?;
        }
        Pipeline::RcSweep => {
            trials = lab.sweep_trials();
            write_sweep(&mut w, &lab.config().reservoir, &lab.sweep()?)?;
        }
    }
    finish(w, lab.config(), pipeline.name(), Vec::new(), trials)
}

fn write_speckle(lab: &Lab, w: &mut ArtifactWriter) -> Result<()> {
    let c = lab.config();
    let base = c.challenges.base_nm;
    let n0 = c.noise_seeds()[0];
    let frames: Vec<(String, Vec<u8>, f64)> = c
        .device_seeds()
        .par_iter()
        .map(|&s| {
            let img = lab.response(&lab.device(s)?, base, n0)?;
            Ok((image_name(s, base, n0), encode_pgm(&img, c.detector.quantization), img.mean()))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for ((name, bytes, mean), &s) in frames.iter().zip(c.device_seeds()) {
        w.write(&format!("images/{name}"), bytes)?;
        let snr = c.detector.snr_db.map(num).unwrap_or_default();
        rows.push(vec![format!("images/{name}"), s.to_string(), num(base), snr, n0.to_string(), num(*mean)]);
    }
    w.write(
        "images.csv",
        &csv_table(&["file", "device_seed", "wavelength_nm", "snr_db", "noise_seed", "mean_intensity"], rows)?,
    )
}

fn write_enrollment(w: &mut ArtifactWriter, e: &Enrollment) -> Result<()> {
    let mut rows = Vec::new();
    for mode in [ClassMode::Intra, ClassMode::InterI, ClassMode::InterII] {
        let recs = e.records(mode);
        let keys: Vec<BinaryKey> = recs.iter().map(|r| r.key).collect();
        w.write(&format!("keys/{}.keys", mode.name()), format_keys(&keys).as_bytes())?;
        rows.extend(recs.iter().map(|r| {
            vec![
                mode.name().to_string(),
                r.group.to_string(),
                r.device_seed.to_string(),
                num(r.wavelength_nm),
                r.noise_seed.to_string(),
                r.key.to_string(),
            ]
        }));
    }
    w.write("keys.csv", &csv_table(&["class", "group", "device_seed", "wavelength_nm", "noise_seed", "key"], rows)?)
}

fn write_class_report(w: &mut ArtifactWriter, r: &ClassReport) -> Result<()> {
    w.write("stats.json", &json_bytes(r))?;
    let rows = r.classes().into_iter().map(|s| {
        vec![s.mode.name().to_string(), num(s.mean), num(s.std), num(s.min), num(s.max), s.pair_count.to_string()]
    });
    w.write("stats.csv", &csv_table(&["class", "mean", "std", "min", "max", "pairs"], rows)?)?;
    w.write("fig3.csv", &report_fig3(&r.classes().map(Clone::clone))?)?;
    let rows =
        r.detuning.iter().map(|d| vec![num(d.offset_nm), num(d.mean_fhd), num(d.std_fhd), d.devices.to_string()]);
    w.write("detuning.csv", &csv_table(&["offset_nm", "mean_fhd", "std_fhd", "devices"], rows)?)
}

/// 64-bin histogram of the three classes, as the fraction of each class's
/// pairs falling in `[k/64, (k+1)/64)`.
pub fn report_fig3(stats: &[FhdStats]) -> Result<Vec<u8>> {
    let find = |mode: ClassMode| {
        stats
            .iter()
            .find(|s| s.mode == mode)
            .ok_or_else(|| Error::InsufficientData(format!("class {} missing from stats", mode.name())))
    };
    let classes = [find(ClassMode::Intra)?, find(ClassMode::InterI)?, find(ClassMode::InterII)?];
    for s in classes {
        if s.histogram.len() != HISTOGRAM_BINS {
            return Err(Error::Format {
                kind: "stats",
                detail: format!("{} has {} bins", s.mode.name(), s.histogram.len()),
            });
        }
    }
    let bins = HISTOGRAM_BINS as f64;
    let rows = (0..HISTOGRAM_BINS).map(|k| {
        let mut row = vec![num(k as f64 / bins), num((k + 1) as f64 / bins)];
        row.extend(classes.iter().map(|s| num(s.histogram[k] as f64 / s.pair_count as f64)));
        row
    });
    csv_table(&["bin_lo", "bin_hi", "intra", "inter_I", "inter_II"], rows)
}

pub fn report_fig4(cells: &[SweepCell]) -> Result<Vec<u8>> {
    let rows = cells
        .iter()
        .map(|c| vec![c.defects.to_string(), num(c.snr_db), num(c.mean_error), num(c.std_error), c.trials.to_string()]);
    csv_table(&["defects", "snr_db", "mean_error", "std_error", "trials"], rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sweep: SweepConfig,
    pub cells: Vec<SweepCell>,
}

pub fn write_sweep(w: &mut ArtifactWriter, sweep: &SweepConfig, cells: &[SweepCell]) -> Result<()> {
    w.write("sweep.json", &json_bytes(&SweepReport { sweep: sweep.clone(), cells: cells.to_vec() }))?;
    w.write("fig4.csv", &report_fig4(cells)?)
}

pub fn table1(report: &EntropyReport) -> Result<Vec<u8>> {
    let mut rows = vec![vec!["simulated".into(), "this run".into(), num(report.h_cond), num(report.h_min)]];
    rows.extend(
        REFERENCE_ENTROPY.iter().map(|(m, hc, hm)| vec![m.to_string(), "reference".into(), num(*hc), num(*hm)]),
    );
    csv_table(&["method", "source", "h_conditional", "h_minimum"], rows)
}

pub fn write_entropy(w: &mut ArtifactWriter, keys: &[BinaryKey]) -> Result<EntropyReport> {
    let report = entropy_report(&BitStream::from_keys(keys))?;
    w.write("entropy.json", &json_bytes(&report))?;
    w.write("table1.csv", &table1(&report)?)?;
    Ok(report)
}

pub fn write_nist(w: &mut ArtifactWriter, keys: &[BinaryKey]) -> Result<TestReport> {
    let stream = BitStream::from_keys(keys);
    let report = nist_subset(&stream);
    w.write("nist.json", &json_bytes(&report))?;
    let rows = report.tests.iter().map(|t| {
        let result = match t.pass {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "skipped",
        };
        vec![
            t.name.clone(),
            t.statistic.map(num).unwrap_or_default(),
            t.p_value.map(num).unwrap_or_default(),
            result.into(),
        ]
    });
    w.write("nist.csv", &csv_table(&["test", "statistic", "p_value", "result"], rows)?)?;
    w.write("table1.csv", &table1(&entropy_report(&stream)?)?)?;
    Ok(report)
}

/// Trained readout of one sweep trial, enough to rebuild and test it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcModel {
    pub seeds: TrialSeeds,
    pub sweep: SweepConfig,
    pub snr_db: f64,
    pub model: ReadoutModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcEvaluation {
    pub seeds: TrialSeeds,
    pub snr_db: f64,
    pub test_frames: usize,
    pub test_error: f64,
}

pub fn rc_train(lab: &Lab, defects: usize, trial: usize, snr_db: f64) -> Result<RcModel> {
    let sweep = lab.config().reservoir.clone();
    let seeds = trial_seeds(lab.config().seed, defects, trial);
    let model = lab.trial(&seeds, &sweep)?.train(snr_db)?;
    Ok(RcModel { seeds, sweep, snr_db, model })
}

pub fn rc_eval(lab: &Lab, m: &RcModel) -> Result<RcEvaluation> {
    let t = lab.trial(&m.seeds, &m.sweep)?;
    Ok(RcEvaluation {
        seeds: m.seeds,
        snr_db: m.snr_db,
        test_frames: t.test_stream.len(),
        test_error: t.test(&m.model, m.snr_db)?,
    })
}
