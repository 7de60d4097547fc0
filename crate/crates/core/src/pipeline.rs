//! Frame simulation, dataset generation, and BER experiments.

use std::fmt::Write as _;

use rand::RngCore;
use rayon::prelude::*;

use crate::channel::{mrc_gain_diagonal, sample_pathset, EffectiveChannel, GainFallback};
use crate::config::{Config, DetectorKind};
use crate::detector::{count_bit_errors, map_bits, mld_detect, mrc_combine, BerReport, Constellation};
use crate::error::{Error, Result};
use crate::modem::{demodulate_slice, PulsePair};
use crate::neural::{train_cv, Architecture, SampleRecord, TrainReport, TrainedDetector};
use crate::numerics::{sample_gaussian_complex, stream_id, CVector, Rng, C64};

/// Which family of frame streams a simulation draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Train,
    Test,
}

impl Purpose {
    pub fn tag(self) -> &'static str {
        match self {
            Purpose::Train => "train-frame",
            Purpose::Test => "test-frame",
        }
    }

    pub fn stream(self, frame: usize) -> u64 {
        stream_id(self.tag(), frame as u64)
    }
}

/// Noise variance for unit-energy symbols and unit-power links.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// One simulated frame, kept separable in signal and unit-variance noise so
/// that every SNR reuses the same bits, channels, and noise shape.
#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub frame: usize,
    /// Transmitted class per antenna and grid index.
    pub classes: Vec<Vec<usize>>,
    /// Noiseless MRC output per antenna.
    pub z_signal: Vec<CVector>,
    /// MRC output for unit-variance receiver noise.
    pub z_noise: Vec<CVector>,
    pub gains: Vec<Vec<f64>>,
}

impl FrameOutcome {
    /// `z_t` at noise standard deviation `sigma`.
    pub fn combined(&self, antenna: usize, sigma: f64) -> CVector {
        self.z_signal[antenna].iter().zip(&self.z_noise[antenna]).map(|(s, n)| s + n * sigma).collect()
    }
}

/// Simulates frame `index` of the given stream family.
pub fn simulate_frame(cfg: &Config, purpose: Purpose, index: usize) -> Result<FrameOutcome> {
    let run = || -> Result<FrameOutcome> {
        let s = &cfg.system;
        let (mn, nt, nr) = (s.grid_size(), s.nt, s.nr);
        let profile = cfg.profile()?;
        let constellation = Constellation::qam(s.q)?;
        let pulses = PulsePair::identity(s.m);
        let mut rng = Rng::new(s.seed, purpose.stream(index));

        let bits_per_grid = mn * constellation.bits_per_symbol();
        let mut x = Vec::with_capacity(nt);
        let mut classes = Vec::with_capacity(nt);
        for _ in 0..nt {
            let bits = random_bits(&mut rng, bits_per_grid);
            let (symbols, cls) = map_bits(&bits, &constellation)?;
            x.push(symbols);
            classes.push(cls);
        }

        let mut links: Vec<Vec<EffectiveChannel>> = Vec::with_capacity(nr);
        for _ in 0..nr {
            let row = (0..nt)
                .map(|_| EffectiveChannel::new(sample_pathset(&mut rng, &profile, s.m, s.n)?, pulses.clone()))
                .collect::<Result<Vec<_>>>()?;
            links.push(row);
        }

        let mut y_signal = Vec::with_capacity(nr);
        let mut y_noise = Vec::with_capacity(nr);
        for row in &links {
            let mut acc = vec![C64::new(0.0, 0.0); mn];
            for (op, xt) in row.iter().zip(&x) {
                for (a, v) in acc.iter_mut().zip(op.apply(xt)?) {
                    *a += v;
                }
            }
            y_signal.push(acc);
            let noise = (0..mn).map(|_| sample_gaussian_complex(&mut rng, 1.0)).collect::<Result<Vec<_>>>()?;
            y_noise.push(demodulate_slice(&noise, s.m, s.n, &pulses));
        }

        let mut z_signal = Vec::with_capacity(nt);
        let mut z_noise = Vec::with_capacity(nt);
        let mut gains = Vec::with_capacity(nt);
        for t in 0..nt {
            let column: Vec<&EffectiveChannel> = links.iter().map(|row| &row[t]).collect();
            z_signal.push(mrc_combine(&y_signal, &column)?);
            z_noise.push(mrc_combine(&y_noise, &column)?);
            let paths: Vec<_> = column.iter().map(|op| op.paths()).collect();
            gains.push(mrc_gain_diagonal(&paths, &pulses, GainFallback::Disabled)?);
        }
        Ok(FrameOutcome { frame: index, classes, z_signal, z_noise, gains })
    };
    run().map_err(|e| e.in_frame(index))
}

fn random_bits(rng: &mut Rng, count: usize) -> Vec<bool> {
    let mut bits = Vec::with_capacity(count);
    while bits.len() < count {
        let word = rng.next_u64();
        let take = (count - bits.len()).min(64);
        bits.extend((0..take).map(|i| (word >> i) & 1 == 1));
    }
    bits
}

/// Frames `0..count` of one stream family, simulated in parallel.
pub fn simulate_frames(cfg: &Config, purpose: Purpose, count: usize) -> Result<Vec<FrameOutcome>> {
    cfg.validate()?;
    (0..count).into_par_iter().map(|i| simulate_frame(cfg, purpose, i)).collect()
}

/// Labelled per-symbol records and the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: Config,
    pub snr_db: f64,
    pub frames: usize,
    pub records: Vec<SampleRecord>,
}

pub const DATASET_CSV_HEADER: &str = "frame,antenna,grid_index,re,im,label";

impl Dataset {
    pub fn features(&self) -> Vec<[f64; 2]> {
        self.records.iter().map(|r| r.features).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Comment header with the configuration snapshot, then one CSV row per record.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# dataset_snr_db = {:?}", self.snr_db);
        let _ = writeln!(out, "# dataset_frames = {}", self.frames);
        for line in self.config.to_toml_string().lines() {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str(DATASET_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{:.16e},{:.16e},{}",
                r.frame, r.antenna, r.grid_index, r.features[0], r.features[1], r.label
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut snr_db = None;
        let mut frames = None;
        let mut toml_text = String::new();
        let mut lines = text.lines();
        let mut header_seen = false;
        for line in lines.by_ref() {
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.strip_prefix(' ').unwrap_or(rest);
                if let Some(v) = rest.strip_prefix("dataset_snr_db = ") {
                    snr_db = Some(v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("snr_db: {e}")))?);
                } else if let Some(v) = rest.strip_prefix("dataset_frames = ") {
                    frames = Some(v.trim().parse::<usize>().map_err(|e| Error::Parse(format!("frames: {e}")))?);
                } else {
                    toml_text.push_str(rest);
                    toml_text.push('\n');
                }
            } else if line.trim() == DATASET_CSV_HEADER {
                header_seen = true;
                break;
            } else {
                return Err(Error::Parse(format!("unexpected dataset line `{line}`")));
            }
        }
        if !header_seen {
            return Err(Error::Parse("dataset is missing its column header".into()));
        }
        let config = Config::from_toml_str(&toml_text)?;
        let snr_db = snr_db.ok_or_else(|| Error::Parse("dataset header lacks snr_db".into()))?;
        let q = config.system.q;
        let mut records = Vec::new();
        for (row, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Parse(format!("dataset row {row}: expected 6 fields")));
            }
            let int = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Parse(format!("dataset row {row}: {e}")));
            let float = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("dataset row {row}: {e}")));
            let label = int(f[5])?;
            if label >= q {
                return Err(Error::InvalidClass { class: label, order: q });
            }
            let features = [float(f[3])?, float(f[4])?];
            if !features.iter().all(|v| v.is_finite()) {
                return Err(Error::Parse(format!("dataset row {row}: non-finite feature")));
            }
            records.push(SampleRecord { features, label, frame: int(f[0])?, antenna: int(f[1])?, grid_index: int(f[2])?, snr_db });
        }
        let frames = frames.unwrap_or_else(|| records.iter().map(|r| r.frame + 1).max().unwrap_or(0));
        Ok(Dataset { config, snr_db, frames, records })
    }
}

/// MRC outputs of training frames at one SNR as labelled records.
pub fn generate_dataset(cfg: &Config, snr_db: f64, n_frames: usize) -> Result<Dataset> {
    let frames = simulate_frames(cfg, Purpose::Train, n_frames)?;
    Ok(dataset_from_frames(cfg, &frames, snr_db))
}

pub fn dataset_from_frames(cfg: &Config, frames: &[FrameOutcome], snr_db: f64) -> Dataset {
    let sigma = noise_variance(snr_db).sqrt();
    let mut records = Vec::with_capacity(frames.len() * cfg.system.nt * cfg.system.grid_size());
    for fr in frames {
        for t in 0..fr.classes.len() {
            for (k, (z, &label)) in fr.combined(t, sigma).iter().zip(&fr.classes[t]).enumerate() {
                records.push(SampleRecord { features: [z.re, z.im], label, frame: fr.frame, antenna: t, grid_index: k, snr_db });
            }
        }
    }
    Dataset { config: cfg.clone(), snr_db, frames: frames.len(), records }
}

/// Test frames shared by every detector so comparisons are paired.
#[derive(Debug, Clone)]
pub struct TestBank {
    cfg: Config,
    frames: Vec<FrameOutcome>,
}

impl TestBank {
    pub fn simulate(cfg: &Config) -> Result<Self> {
        Self::with_frames(cfg, cfg.test_frames())
    }

    pub fn with_frames(cfg: &Config, count: usize) -> Result<Self> {
        Ok(TestBank { cfg: cfg.clone(), frames: simulate_frames(cfg, Purpose::Test, count)? })
    }

    pub fn frames(&self) -> &[FrameOutcome] {
        &self.frames
    }

    pub fn symbols(&self) -> u64 {
        self.frames.iter().map(|f| f.classes.iter().map(Vec::len).sum::<usize>() as u64).sum()
    }

    fn report(&self, detector: &str, snr_db: f64, symbols: u64, bit_errors: u64) -> BerReport {
        let s = &self.cfg.system;
        BerReport {
            detector: detector.into(),
            snr_db,
            fading_m: self.cfg.channel.m,
            nt: s.nt,
            nr: s.nr,
            q: s.q,
            symbols,
            bit_errors,
        }
    }

    /// Tallies `decide(frame, antenna, z)` over every frame at each SNR.
    fn tally<F>(&self, name: &str, snrs: &[f64], decide: F) -> Result<Vec<BerReport>>
    where
        F: Fn(&FrameOutcome, usize, &[C64]) -> Result<Vec<usize>> + Sync,
    {
        let constellation = Constellation::qam(self.cfg.system.q)?;
        snrs.iter()
            .map(|&snr| {
                let sigma = noise_variance(snr).sqrt();
                let (symbols, errors) = self
                    .frames
                    .par_iter()
                    .map(|fr| -> Result<(u64, u64)> {
                        let mut acc = (0u64, 0u64);
                        for t in 0..fr.classes.len() {
                            let z = fr.combined(t, sigma);
                            let decided = decide(fr, t, &z).map_err(|e| e.in_frame(fr.frame))?;
                            acc.0 += decided.len() as u64;
                            acc.1 += count_bit_errors(&fr.classes[t], &decided, &constellation)?;
                        }
                        Ok(acc)
                    })
                    .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
                Ok(self.report(name, snr, symbols, errors))
            })
            .collect()
    }

    pub fn mld_reports(&self, snrs: &[f64]) -> Result<Vec<BerReport>> {
        let constellation = Constellation::qam(self.cfg.system.q)?;
        self.tally("mld", snrs, |fr, t, z| mld_detect(z, &fr.gains[t], &constellation))
    }

    pub fn nn_reports(&self, det: &TrainedDetector, snrs: &[f64]) -> Result<Vec<BerReport>> {
        if det.model.q() != self.cfg.system.q {
            return Err(Error::Config(format!(
                "checkpoint was trained for Q = {} but the configuration uses Q = {}",
                det.model.q(),
                self.cfg.system.q
            )));
        }
        let name = det.model.architecture().name();
        self.tally(name, snrs, |_, _, z| {
            let features: Vec<[f64; 2]> = z.iter().map(|v| [v.re, v.im]).collect();
            det.predict(&features)
        })
    }

    /// Symbol decisions of both detectors at one SNR, for paired comparisons.
    pub fn decisions(&self, det: Option<&TrainedDetector>, snr_db: f64) -> Result<Vec<usize>> {
        let constellation = Constellation::qam(self.cfg.system.q)?;
        let sigma = noise_variance(snr_db).sqrt();
        let mut out = Vec::new();
        for fr in &self.frames {
            for t in 0..fr.classes.len() {
                let z = fr.combined(t, sigma);
                out.extend(match det {
                    None => mld_detect(&z, &fr.gains[t], &constellation)?,
                    Some(d) => d.predict(&z.iter().map(|v| [v.re, v.im]).collect::<Vec<_>>())?,
                });
            }
        }
        Ok(out)
    }

    pub fn transmitted(&self) -> Vec<usize> {
        self.frames.iter().flat_map(|f| f.classes.iter().flatten().copied()).collect()
    }
}

/// MLD BER over `cfg.test_frames()` test frames at each SNR.
pub fn run_mld_ber(cfg: &Config, snrs: &[f64]) -> Result<Vec<BerReport>> {
    TestBank::simulate(cfg)?.mld_reports(snrs)
}

/// BER of a trained network on fresh test frames.
pub fn run_nn_eval(det: &TrainedDetector, cfg: &Config, snrs: &[f64]) -> Result<Vec<BerReport>> {
    TestBank::simulate(cfg)?.nn_reports(det, snrs)
}

/// Everything a full run produces.
#[derive(Debug, Clone)]
pub struct ExperimentBundle {
    pub dataset: Dataset,
    pub detectors: Vec<(TrainedDetector, TrainReport)>,
    pub reports: Vec<BerReport>,
}

/// Train-SNR dataset, cross-validated training of every selected network,
/// then MLD and network BER on shared test frames.
pub fn run_full_experiment(cfg: &Config) -> Result<ExperimentBundle> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let dataset =
        generate_dataset(cfg, cfg.training.snr_db, cfg.training.frames).map_err(|e| e.in_stage("dataset"))?;
    let features = dataset.features();
    let labels = dataset.labels();
    let kinds = cfg.detectors().map_err(|e| e.in_stage("config"))?;
    let mut detectors = Vec::new();
    for kind in &kinds {
        if let DetectorKind::Network(arch) = *kind {
            let trained = train_cv(arch, cfg.system.q, &features, &labels, &cfg.train_config())
                .map_err(|e| e.in_stage(format!("train-{arch}")))?;
            detectors.push(trained);
        }
    }
    let bank = TestBank::simulate(cfg).map_err(|e| e.in_stage("test-frames"))?;
    let mut reports = Vec::new();
    for kind in &kinds {
        match *kind {
            DetectorKind::Mld => reports.extend(bank.mld_reports(&cfg.eval.snr_db).map_err(|e| e.in_stage("eval-mld"))?),
            DetectorKind::Network(arch) => {
                let (det, _) = detectors
                    .iter()
                    .find(|(d, _)| d.model.architecture() == arch)
                    .expect("trained above");
                reports.extend(bank.nn_reports(det, &cfg.eval.snr_db).map_err(|e| e.in_stage(format!("eval-{arch}")))?);
            }
        }
    }
    Ok(ExperimentBundle { dataset, detectors, reports })
}

/// Architecture of every network detector in `cfg`.
pub fn network_architectures(cfg: &Config) -> Result<Vec<Architecture>> {
    Ok(cfg
        .detectors()?
        .into_iter()
        .filter_map(|k| match k {
            DetectorKind::Network(a) => Some(a),
            DetectorKind::Mld => None,
        })
        .collect())
}
