//! Seeded Monte-Carlo harness: ambiguity-aware NMSE, SER, sweeps and their
//! persistence.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::identifiability::{require_pakron, require_tucker, Dims};
use crate::receivers::{pakron, tucker, zf_oracle, ReceiverKind, ReceiverOutput};
use crate::seed::{derive_seed, hash_name};
use crate::signal::{
    add_noise, design_scattering, gen_channels, gen_symbols, synthesize_received, ChannelSet,
    ReceivedTensor, ScatteringDesign, SymbolBlock,
};
use crate::tensor::{c64, ComplexMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    Global,
    PerColumn,
}

/// `‖truth − α·est‖² / ‖truth‖²` with the least-squares `α` fitted either per
/// column or once for the whole matrix.
pub fn nmse_aligned(truth: &ComplexMatrix, estimate: &ComplexMatrix, mode: Alignment) -> Result<f64> {
    if truth.shape() != estimate.shape() {
        return Err(Error::Dimension(format!(
            "truth {:?} and estimate {:?} differ in shape",
            truth.shape(),
            estimate.shape()
        )));
    }
    let energy = truth.norm_squared();
    if energy == 0.0 {
        return Err(Error::Numerical("NMSE undefined for an all-zero truth".into()));
    }
    let fit = |t: &[c64], e: &[c64]| -> c64 {
        let den: f64 = e.iter().map(|v| v.norm_sqr()).sum();
        if den == 0.0 {
            return c64::new(0.0, 0.0);
        }
        let num: c64 = e.iter().zip(t).map(|(e, t)| e.conj() * t).sum();
        num / den
    };
    let err = match mode {
        Alignment::Global => {
            let a = fit(truth.as_slice(), estimate.as_slice());
            (truth - estimate * a).norm_squared()
        }
        Alignment::PerColumn => truth
            .column_iter()
            .zip(estimate.column_iter())
            .map(|(t, e)| {
                let a = fit(t.as_slice(), e.as_slice());
                (t - e * a).norm_squared()
            })
            .sum(),
    };
    Ok(err / energy)
}

/// Fraction of mismatched decisions, reference row excluded.
pub fn ser(tx: &SymbolBlock, detected: &[Vec<usize>]) -> Result<f64> {
    if detected.len() != tx.indices.len()
        || detected.iter().zip(&tx.indices).any(|(d, t)| d.len() != t.len())
    {
        return Err(Error::Dimension("detected symbols do not match the transmitted grid".into()));
    }
    let data = &tx.indices[1..];
    let total: usize = data.iter().map(Vec::len).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let wrong = data
        .iter()
        .zip(&detected[1..])
        .flat_map(|(t, d)| t.iter().zip(d))
        .filter(|(a, b)| a != b)
        .count();
    Ok(wrong as f64 / total as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub snr_db: f64,
    pub receiver: String,
    pub nmse_h: f64,
    pub nmse_g: f64,
    pub ser: f64,
    pub iters: usize,
    pub wall_ms: f64,
    #[serde(default)]
    pub converged: bool,
}

/// CSV row; the header is `seed,snr_db,receiver,nmse_h,nmse_g,ser,iters,wall_ms`.
#[derive(Serialize)]
struct CsvRow<'a> {
    seed: u64,
    snr_db: f64,
    receiver: &'a str,
    nmse_h: f64,
    nmse_g: f64,
    ser: f64,
    iters: usize,
    wall_ms: f64,
}

/// One generated instance: the truth plus the received tensor.
#[derive(Clone, Debug)]
pub struct Instance {
    pub channels: ChannelSet,
    pub design: ScatteringDesign,
    pub symbols: SymbolBlock,
    pub received: ReceivedTensor,
}

/// Seed for the channels, design and symbols of trial `trial`. Shared by all
/// receivers and SNR points so that comparisons are paired.
pub fn instance_seed(master: u64, trial: usize) -> u64 {
    derive_seed(&[master, trial as u64])
}

pub fn noise_seed(master: u64, snr_index: usize, trial: usize) -> u64 {
    derive_seed(&[master, hash_name("noise"), snr_index as u64, trial as u64])
}

/// Seed of the receiver's random initialization.
pub fn receiver_seed(cfg: &SystemConfig, snr_index: usize, receiver: ReceiverKind, trial: usize) -> u64 {
    derive_seed(&[
        cfg.seed,
        snr_index as u64,
        hash_name(receiver.name()),
        trial as u64,
        cfg.solver.init_seed,
    ])
}

pub fn noiseless_instance(cfg: &SystemConfig, seed: u64) -> Result<Instance> {
    let channels = gen_channels(cfg, derive_seed(&[seed, hash_name("channels")]))?;
    let design = design_scattering(cfg, derive_seed(&[seed, hash_name("design")]))?;
    let symbols = gen_symbols(cfg, derive_seed(&[seed, hash_name("symbols")]))?;
    let received = synthesize_received(&channels, &design, &symbols)?;
    Ok(Instance {
        channels,
        design,
        symbols,
        received,
    })
}

/// Runs `receiver` on `inst` and scores it. `H` is scored in the `HS` basis,
/// where its ambiguity is a column scaling; since `S` is unitary the
/// normalization is unchanged.
pub fn score(
    inst: &Instance,
    receiver: ReceiverKind,
    cfg: &SystemConfig,
    rx_seed: u64,
    snr_db: f64,
    reported_seed: u64,
) -> Result<TrialResult> {
    let out = run_receiver(inst, receiver, cfg, rx_seed)?;
    let hs_true = &inst.channels.h * &inst.design.s;
    let nmse_h = nmse_aligned(&hs_true, &out.hs_hat, Alignment::PerColumn)?;
    let nmse_g = nmse_aligned(&inst.channels.gbar, &out.gbar_hat, Alignment::PerColumn)?;
    let detected = out
        .detected
        .as_ref()
        .ok_or_else(|| Error::Numerical("receiver produced no decisions".into()))?;
    let ser = ser(&inst.symbols, detected)?;
    if !nmse_h.is_finite() || !nmse_g.is_finite() {
        return Err(Error::Numerical(format!("{receiver}: non-finite NMSE")));
    }
    Ok(TrialResult {
        seed: reported_seed,
        snr_db,
        receiver: receiver.name().into(),
        nmse_h,
        nmse_g,
        ser,
        iters: out.iterations,
        wall_ms: if cfg.timing { out.wall_time * 1e3 } else { 0.0 },
        converged: out.converged,
    })
}

pub fn run_receiver(
    inst: &Instance,
    receiver: ReceiverKind,
    cfg: &SystemConfig,
    rx_seed: u64,
) -> Result<ReceiverOutput> {
    let c = inst.symbols.constellation;
    match receiver {
        ReceiverKind::Pakron => pakron(&inst.received, &inst.design, &cfg.solver, rx_seed, &c),
        ReceiverKind::Tucker => tucker(&inst.received, &inst.design, &cfg.solver, rx_seed, &c),
        ReceiverKind::ZfOracle => zf_oracle(&inst.received, &inst.channels, &inst.design, &c),
    }
}

/// One seeded trial: generate, add noise (unless `cfg.noiseless`), run,
/// resolve and score.
pub fn run_trial(
    cfg: &SystemConfig,
    snr_index: usize,
    receiver: ReceiverKind,
    trial: usize,
) -> Result<TrialResult> {
    let snr_db = *cfg
        .snr_db
        .get(snr_index)
        .ok_or_else(|| Error::Config(format!("snr index {snr_index} out of range")))?;
    let mut inst = noiseless_instance(cfg, instance_seed(cfg.seed, trial))?;
    if !cfg.noiseless {
        inst.received = add_noise(&inst.received, snr_db, noise_seed(cfg.seed, snr_index, trial));
    }
    let rx_seed = receiver_seed(cfg, snr_index, receiver, trial);
    score(&inst, receiver, cfg, rx_seed, snr_db, rx_seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub snr_db: f64,
    pub receiver: String,
    /// Completed trials the statistics are computed over.
    pub runs: usize,
    pub failures: usize,
    pub not_converged: usize,
    pub mean_nmse_h: f64,
    pub median_nmse_h: f64,
    pub mean_nmse_g: f64,
    pub median_nmse_g: f64,
    pub mean_ser: f64,
    pub median_ser: f64,
    pub mean_iters: f64,
    pub mean_wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub snr_db: f64,
    pub receiver: String,
    pub trial: usize,
    pub category: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SystemConfig,
    pub receivers: Vec<String>,
    pub runs: usize,
    pub aggregates: Vec<Aggregate>,
    pub failures: Vec<TrialFailure>,
    #[serde(skip)]
    pub trials: Vec<TrialResult>,
}

impl SweepReport {
    pub fn aggregate(&self, snr_db: f64, receiver: ReceiverKind) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.snr_db == snr_db && a.receiver == receiver.name())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for t in &self.trials {
            out.serialize(CsvRow {
                seed: t.seed,
                snr_db: t.snr_db,
                receiver: &t.receiver,
                nmse_h: t.nmse_h,
                nmse_g: t.nmse_g,
                ser: t.ser,
                iters: t.iters,
                wall_ms: t.wall_ms,
            })?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `trials.csv` and `report.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join("trials.csv"))?)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        Ok(())
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    if s.len() % 2 == 1 {
        s[mid]
    } else {
        0.5 * (s[mid - 1] + s[mid])
    }
}

fn check_receivers(cfg: &SystemConfig, receivers: &[ReceiverKind]) -> Result<()> {
    if cfg.ignore_identifiability {
        return Ok(());
    }
    let d = Dims::from(cfg);
    for r in receivers {
        match r {
            ReceiverKind::Pakron => require_pakron(d)?,
            ReceiverKind::Tucker => require_tucker(d)?,
            ReceiverKind::ZfOracle => {}
        }
    }
    Ok(())
}

/// Runs every (SNR, receiver, trial) cell on a pool of `jobs` threads
/// (`0` = rayon default). Results do not depend on scheduling.
pub fn run_sweep(cfg: &SystemConfig, receivers: &[ReceiverKind], jobs: usize) -> Result<SweepReport> {
    cfg.validate_sweep()?;
    if receivers.is_empty() {
        return Err(Error::Config("no receivers requested".into()));
    }
    check_receivers(cfg, receivers)?;
    let cells: Vec<(usize, ReceiverKind, usize)> = (0..cfg.snr_db.len())
        .flat_map(|s| {
            receivers
                .iter()
                .flat_map(move |&r| (0..cfg.runs).map(move |t| (s, r, t)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<TrialResult>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(s, r, t)| run_trial(cfg, s, r, t))
            .collect()
    });

    let mut trials = Vec::new();
    let mut failures = Vec::new();
    let mut aggregates = Vec::new();
    let mut it = cells.iter().zip(outcomes);
    for (s, &snr_db) in cfg.snr_db.iter().enumerate() {
        for &r in receivers {
            let mut cell = Vec::new();
            let mut failed = 0;
            for (&(cs, cr, trial), outcome) in it.by_ref().take(cfg.runs) {
                debug_assert_eq!((cs, cr), (s, r));
                match outcome {
                    Ok(t) => cell.push(t),
                    Err(e) => {
                        failed += 1;
                        failures.push(TrialFailure {
                            snr_db,
                            receiver: r.name().into(),
                            trial,
                            category: e.category().into(),
                            message: e.to_string(),
                        });
                    }
                }
            }
            let col = |f: fn(&TrialResult) -> f64| cell.iter().map(f).collect::<Vec<_>>();
            let (h, g, e) = (col(|t| t.nmse_h), col(|t| t.nmse_g), col(|t| t.ser));
            aggregates.push(Aggregate {
                snr_db,
                receiver: r.name().into(),
                runs: cell.len(),
                failures: failed,
                not_converged: cell.iter().filter(|t| !t.converged).count(),
                mean_nmse_h: mean(&h),
                median_nmse_h: median(&h),
                mean_nmse_g: mean(&g),
                median_nmse_g: median(&g),
                mean_ser: mean(&e),
                median_ser: median(&e),
                mean_iters: mean(&col(|t| t.iters as f64)),
                mean_wall_ms: mean(&col(|t| t.wall_ms)),
            });
            trials.extend(cell);
        }
    }
    Ok(SweepReport {
        config: cfg.clone(),
        receivers: receivers.iter().map(|r| r.name().to_string()).collect(),
        runs: cfg.runs,
        aggregates,
        failures,
        trials,
    })
}
