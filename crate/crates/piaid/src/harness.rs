//! Seeded, reproducible Monte-Carlo SER experiments.
//!
//! One trial draws a network realization, builds the transceivers every
//! requested scheme needs, then sweeps the Es/N0 grid re-using the same
//! channels, symbols and noise across schemes and grid points (common random
//! numbers). Trials are independent work items: each derives its RNG streams
//! from `(master seed, trial index, substream)`, so results are bit-identical
//! for a given seed regardless of worker count, and error counts aggregate
//! with plain integer addition.

use crate::detect::{
    self, detect_stream, DetectError, ReceivedStream, SlotId, Stage1Method, StrongInterferer,
    QPSK_ALPHABET,
};
use crate::ia::{self, EffectiveGains, IaError, IaOptions, IaSolution};
use crate::netgen::{
    generate_topology, scale_powers_to_esn0, standard_complex, EsN0Mode, NetworkInstance,
    NoiseModel, SystemConfig,
};
use crate::pia::{build_cost_matrix, feasible_alpha, select_pia_set, CostMatrix, PiaError, PiaSet};
use crate::{CMat, CVec, Complex64};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rayon::prelude::*;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Config(#[from] crate::netgen::ConfigError),
    #[error(transparent)]
    Pia(#[from] PiaError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error("trial {trial}: alignment failed after {attempts} attempt(s): {last}")]
    IaFailure {
        trial: u64,
        attempts: u32,
        last: IaError,
    },
}

/// Transmission/detection schemes compared by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Cost-optimal alignment set, exhaustive stage-I interference detection.
    PiaidExhaustive,
    /// Cost-optimal alignment set, SDR successive interference detection.
    PiaidSdrSid,
    /// Random feasible alignment set, exhaustive stage-I detection.
    RandomizedPia,
    /// Full-network leakage minimization, one-stage detection.
    IterativeIa,
    /// Max-SINR transceivers, one-stage detection.
    MaxSinr,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::PiaidExhaustive,
        Scheme::PiaidSdrSid,
        Scheme::RandomizedPia,
        Scheme::IterativeIa,
        Scheme::MaxSinr,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Scheme::PiaidExhaustive => "piaid-exhaustive",
            Scheme::PiaidSdrSid => "piaid-sdr-sid",
            Scheme::RandomizedPia => "randomized-pia",
            Scheme::IterativeIa => "iterative-ia",
            Scheme::MaxSinr => "max-sinr",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .iter()
            .find(|sch| sch.id() == s)
            .copied()
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

/// Declarative description of one SER-versus-Es/N0 experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub system: SystemConfig,
    pub esn0_grid_db: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub trials: u64,
    pub seed: u64,
    pub resample_on_ia_failure: bool,
    pub esn0_mode: EsN0Mode,
    /// Alignment solver settings for the partial-alignment schemes.
    pub ia_opts: IaOptions,
    /// Solver settings for the full-network leakage baseline.
    pub baseline_ia_opts: IaOptions,
    /// Alternating iterations of the max-SINR baseline.
    pub max_sinr_iters: usize,
}

impl ExperimentSpec {
    pub fn new(
        system: SystemConfig,
        esn0_grid_db: Vec<f64>,
        schemes: Vec<Scheme>,
        trials: u64,
        seed: u64,
    ) -> Self {
        Self {
            system,
            esn0_grid_db,
            schemes,
            trials,
            seed,
            resample_on_ia_failure: true,
            esn0_mode: EsN0Mode::NetworkAverage,
            ia_opts: IaOptions::default(),
            baseline_ia_opts: IaOptions {
                max_iters: 300,
                stall_rel: Some(1e-5),
                restarts: 1,
                ..IaOptions::default()
            },
            max_sinr_iters: 50,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.system.validate()?;
        if self.trials < 1 {
            return Err(HarnessError::BadSpec("trials must be >= 1".into()));
        }
        if self.esn0_grid_db.is_empty() {
            return Err(HarnessError::BadSpec("Es/N0 grid must be non-empty".into()));
        }
        if self.esn0_grid_db.len() > MAX_GRID_POINTS {
            return Err(HarnessError::BadSpec(format!(
                "Es/N0 grid limited to {MAX_GRID_POINTS} points"
            )));
        }
        if self.schemes.is_empty() {
            return Err(HarnessError::BadSpec("scheme list must be non-empty".into()));
        }
        let mut seen = Vec::new();
        for s in &self.schemes {
            if seen.contains(s) {
                return Err(HarnessError::BadSpec(format!("duplicate scheme `{s}`")));
            }
            seen.push(*s);
        }
        Ok(())
    }
}

/// One (scheme, Es/N0) cell of a [`SerReport`].
#[derive(Debug, Clone)]
pub struct SerRow {
    pub scheme: Scheme,
    pub esn0_db: f64,
    /// Completed trials behind this estimate.
    pub trials: u64,
    /// Symbol errors over `trials * K * D` decisions.
    pub errors: u64,
    pub ser: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone)]
pub struct SerReport {
    pub rows: Vec<SerRow>,
    /// Network realizations redrawn because alignment did not converge.
    pub resampled_instances: u64,
    /// Trials abandoned entirely (no transceiver after all attempts).
    pub failed_trials: u64,
    /// Symbol decisions per trial per scheme (K * D).
    pub decisions_per_trial: u64,
}

impl SerReport {
    pub fn row(&self, scheme: Scheme, esn0_db: f64) -> Option<&SerRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.esn0_db == esn0_db)
    }
}

/// 95% Wilson score interval for `errors` successes in `n` Bernoulli trials.
pub fn wilson_interval(errors: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054_f64;
    let n = n as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Nearest-rank percentile of an ascending-sorted sample set.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

// --- RNG stream layout -----------------------------------------------------

const SUB_TOPOLOGY: u64 = 0;
const SUB_RANDOM_PIA: u64 = 1;
const SUB_IA_OPT: u64 = 2;
const SUB_IA_RAND: u64 = 3;
const SUB_IA_FULL: u64 = 4;
const SUB_MAX_SINR: u64 = 5;
const SUB_SYMBOLS: u64 = 6;
const SUB_AUX: u64 = 7;
const SUBSTREAMS: u64 = 8;
const SLOTS: u64 = 256;
const MAX_GRID_POINTS: usize = SLOTS as usize;
const MAX_RESAMPLES: u32 = 20;
/// Powers are assigned at this reference point; grid points re-scale from it.
const REF_ESN0_DB: f64 = 0.0;

fn trial_rng(seed: u64, trial: u64, substream: u64, slot: u64) -> ChaCha8Rng {
    debug_assert!(substream < SUBSTREAMS && slot < SLOTS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((trial * SUBSTREAMS + substream) * SLOTS + slot);
    rng
}

// --- Per-trial execution ---------------------------------------------------

struct Prepared {
    instance: NetworkInstance,
    pia_opt: Option<(PiaSet, IaSolution)>,
    pia_rand: Option<(PiaSet, IaSolution)>,
    full: Option<IaSolution>,
    resamples: u32,
}

#[derive(Clone, Copy, Default)]
struct Needs {
    pia_opt: bool,
    pia_rand: bool,
    full: bool,
    max_sinr: bool,
}

impl Needs {
    fn of(schemes: &[Scheme]) -> Self {
        let mut n = Needs::default();
        for s in schemes {
            match s {
                Scheme::PiaidExhaustive | Scheme::PiaidSdrSid => n.pia_opt = true,
                Scheme::RandomizedPia => n.pia_rand = true,
                Scheme::IterativeIa => n.full = true,
                Scheme::MaxSinr => n.max_sinr = true,
            }
        }
        n
    }
}

/// Uniformly random circulant-shift feasible alignment set.
fn random_pia_set<R: Rng + ?Sized>(
    users: usize,
    alpha: usize,
    costs: &CostMatrix,
    rng: &mut R,
) -> PiaSet {
    if alpha == 0 {
        return PiaSet::from_alignment(vec![Vec::new(); users], 0, costs);
    }
    let shift = rng.random_range(1..=(users - alpha));
    PiaSet::circulant(users, alpha, shift, costs)
}

fn empty_sets(users: usize, costs: &CostMatrix) -> PiaSet {
    PiaSet::from_alignment(vec![Vec::new(); users], 0, costs)
}

fn prepare_trial(spec: &ExperimentSpec, trial: u64, needs: Needs) -> Result<Prepared, HarnessError> {
    let k = spec.system.users;
    let alpha = if k == 1 {
        0
    } else {
        feasible_alpha(
            spec.system.tx_antennas,
            spec.system.rx_antennas,
            spec.system.streams,
            k,
        )?
    };
    let max_attempts = if spec.resample_on_ia_failure {
        MAX_RESAMPLES
    } else {
        0
    };
    let mut last_failure = None;
    for attempt in 0..=max_attempts {
        let mut rng = trial_rng(spec.seed, trial, SUB_TOPOLOGY, attempt as u64);
        let instance = generate_topology(&spec.system, &mut rng);
        let instance = scale_powers_to_esn0(&instance, REF_ESN0_DB, spec.esn0_mode);
        let costs = build_cost_matrix(&instance);

        let attempt_result = (|| -> Result<Prepared, IaError> {
            let pia_opt = if needs.pia_opt {
                let set = if alpha == 0 {
                    empty_sets(k, &costs)
                } else {
                    select_pia_set(&costs, alpha).expect("alpha <= K-1 by construction")
                };
                let mut ia_rng = trial_rng(spec.seed, trial, SUB_IA_OPT, attempt as u64);
                let sol = ia::solve_alignment(&instance, &set, &spec.ia_opts, &mut ia_rng)?;
                Some((set, sol))
            } else {
                None
            };
            let pia_rand = if needs.pia_rand {
                let mut set_rng = trial_rng(spec.seed, trial, SUB_RANDOM_PIA, attempt as u64);
                let set = random_pia_set(k, alpha, &costs, &mut set_rng);
                let mut ia_rng = trial_rng(spec.seed, trial, SUB_IA_RAND, attempt as u64);
                let sol = ia::solve_alignment(&instance, &set, &spec.ia_opts, &mut ia_rng)?;
                Some((set, sol))
            } else {
                None
            };
            let full = if needs.full {
                let aligned: Vec<Vec<usize>> = (0..k)
                    .map(|rx| (0..k).filter(|&i| i != rx).collect())
                    .collect();
                let mut ia_rng = trial_rng(spec.seed, trial, SUB_IA_FULL, attempt as u64);
                Some(ia::minimize_leakage(
                    &instance,
                    &aligned,
                    &spec.baseline_ia_opts,
                    &mut ia_rng,
                )?)
            } else {
                None
            };
            Ok(Prepared {
                instance,
                pia_opt,
                pia_rand,
                full,
                resamples: attempt,
            })
        })();

        match attempt_result {
            Ok(p) => return Ok(p),
            Err(e) => last_failure = Some(e),
        }
    }
    Err(HarnessError::IaFailure {
        trial,
        attempts: max_attempts + 1,
        last: last_failure.expect("failure recorded"),
    })
}

/// Symbols and noise shared by every scheme and grid point of one trial.
struct TrialDraw {
    /// QPSK alphabet indices, `symbols[user][stream]`.
    symbols: Vec<Vec<usize>>,
    /// Receiver noise vectors with covariance 2 I_N.
    noise: Vec<CVec>,
}

fn draw_symbols_noise<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> TrialDraw {
    let symbols = (0..cfg.users)
        .map(|_| (0..cfg.streams).map(|_| rng.random_range(0..4)).collect())
        .collect();
    let noise_model = NoiseModel;
    let noise = (0..cfg.users)
        .map(|_| noise_model.sample(rng, cfg.rx_antennas))
        .collect();
    TrialDraw { symbols, noise }
}

/// A transceiver plus the residual-set structure its receiver assumes.
struct SchemeView<'a> {
    equalizers: &'a [CMat],
    heff: &'a EffectiveGains,
    /// Strong residual interferers per receiver (empty for one-stage schemes).
    strong: Option<&'a PiaSet>,
    method: Stage1Method,
}

/// Detect every stream of one scheme at one grid point; returns one error bit
/// per (user, stream).
fn detect_trial_streams(
    view: &SchemeView<'_>,
    instance: &NetworkInstance,
    power_factor: f64,
    draw: &TrialDraw,
) -> Result<Vec<u8>, DetectError> {
    let cfg = &instance.config;
    let k = cfg.users;
    let d = cfg.streams;
    let mut bits = Vec::with_capacity(k * d);
    for rx in 0..k {
        // Amplitudes sqrt(P_i L_ki · factor) seen by this receiver.
        let amp: Vec<f64> = (0..k)
            .map(|tx| (instance.rx_power(rx, tx) * power_factor).sqrt())
            .collect();
        for l in 0..d {
            let u_col = view.equalizers[rx].column(l);
            let mut y: Complex64 = u_col.dotc(&draw.noise[rx]);
            for tx in 0..k {
                for s in 0..d {
                    y += view.heff.gain(rx, tx, l, s)
                        * QPSK_ALPHABET[draw.symbols[tx][s]]
                        * amp[tx];
                }
            }
            let strong = match view.strong {
                Some(set) => {
                    let mut list = Vec::with_capacity(set.strong[rx].len() * d);
                    for &tx in &set.strong[rx] {
                        for s in 0..d {
                            list.push(StrongInterferer {
                                gain: view.heff.gain(rx, tx, l, s) * amp[tx],
                                slot: SlotId { user: tx, stream: s },
                            });
                        }
                    }
                    list
                }
                None => Vec::new(),
            };
            let weak_power: f64 = match view.strong {
                Some(set) => set.weak[rx]
                    .iter()
                    .map(|&tx| instance.rx_power(rx, tx) * power_factor)
                    .sum(),
                None => (0..k)
                    .filter(|&tx| tx != rx)
                    .map(|tx| instance.rx_power(rx, tx) * power_factor)
                    .sum(),
            };
            let stream = ReceivedStream {
                y,
                direct_gain: view.heff.gain(rx, rx, l, l) * amp[rx],
                strong,
                weak_power,
            };
            let outcome = detect_stream(&stream, view.method)?;
            let truth = draw.symbols[rx][l];
            bits.push(u8::from(detect::qpsk_index(outcome.symbol) != truth));
        }
    }
    Ok(bits)
}

/// Error bits for every requested scheme at every grid point of one trial:
/// `out[scheme][esn0][k*D+l]`.
fn execute_trial(
    spec: &ExperimentSpec,
    trial: u64,
) -> Result<Option<Vec<Vec<Vec<u8>>>>, HarnessError> {
    let needs = Needs::of(&spec.schemes);
    let prepared = match prepare_trial(spec, trial, needs) {
        Ok(p) => p,
        Err(HarnessError::IaFailure { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    execute_prepared(spec, trial, &prepared).map(Some)
}

fn execute_prepared(
    spec: &ExperimentSpec,
    trial: u64,
    prepared: &Prepared,
) -> Result<Vec<Vec<Vec<u8>>>, HarnessError> {
    let mut sym_rng = trial_rng(spec.seed, trial, SUB_SYMBOLS, 0);
    let draw = draw_symbols_noise(&spec.system, &mut sym_rng);
    let mut out = vec![Vec::with_capacity(spec.esn0_grid_db.len()); spec.schemes.len()];
    for (ei, &esn0) in spec.esn0_grid_db.iter().enumerate() {
        let factor = 10f64.powf((esn0 - REF_ESN0_DB) / 10.0);
        // Max-SINR transceivers depend on the operating point.
        let max_sinr = if spec.schemes.contains(&Scheme::MaxSinr) {
            let mut scaled = prepared.instance.clone();
            for p in &mut scaled.tx_power {
                *p *= factor;
            }
            let mut ms_rng = trial_rng(spec.seed, trial, SUB_MAX_SINR, ei as u64);
            Some(max_sinr_transceiver(
                &scaled,
                spec.max_sinr_iters,
                &mut ms_rng,
            ))
        } else {
            None
        };
        for (si, scheme) in spec.schemes.iter().enumerate() {
            let view = match scheme {
                Scheme::PiaidExhaustive | Scheme::PiaidSdrSid => {
                    let (set, sol) = prepared.pia_opt.as_ref().expect("prepared");
                    SchemeView {
                        equalizers: &sol.equalizers,
                        heff: &sol.heff,
                        strong: Some(set),
                        method: if *scheme == Scheme::PiaidExhaustive {
                            Stage1Method::Exhaustive
                        } else {
                            Stage1Method::SdrSid
                        },
                    }
                }
                Scheme::RandomizedPia => {
                    let (set, sol) = prepared.pia_rand.as_ref().expect("prepared");
                    SchemeView {
                        equalizers: &sol.equalizers,
                        heff: &sol.heff,
                        strong: Some(set),
                        method: Stage1Method::Exhaustive,
                    }
                }
                Scheme::IterativeIa => {
                    let sol = prepared.full.as_ref().expect("prepared");
                    SchemeView {
                        equalizers: &sol.equalizers,
                        heff: &sol.heff,
                        strong: None,
                        method: Stage1Method::Exhaustive,
                    }
                }
                Scheme::MaxSinr => {
                    let (u, _v, heff) = max_sinr.as_ref().expect("prepared");
                    SchemeView {
                        equalizers: u,
                        heff,
                        strong: None,
                        method: Stage1Method::Exhaustive,
                    }
                }
            };
            let bits = detect_trial_streams(&view, &prepared.instance, factor, &draw)?;
            out[si].push(bits);
        }
    }
    Ok(out)
}

/// Run a single trial of one scheme and return its error bits per grid point
/// and stream (`out[esn0][k*D+l]`), or `None` when the trial had to be
/// abandoned (no transceiver after the resampling budget).
pub fn run_trial(
    spec: &ExperimentSpec,
    trial_index: u64,
    scheme: Scheme,
) -> Result<Option<Vec<Vec<u8>>>, HarnessError> {
    let mut single = spec.clone();
    single.schemes = vec![scheme];
    single.validate()?;
    Ok(execute_trial(&single, trial_index)?.map(|mut per_scheme| per_scheme.remove(0)))
}

struct Accum {
    /// errors[scheme][esn0]
    errors: Vec<Vec<u64>>,
    resamples: u64,
    failed: u64,
    completed: u64,
}

impl Accum {
    fn zero(schemes: usize, grid: usize) -> Self {
        Self {
            errors: vec![vec![0; grid]; schemes],
            resamples: 0,
            failed: 0,
            completed: 0,
        }
    }

    fn merge(mut self, other: Accum) -> Accum {
        for (a, b) in self.errors.iter_mut().zip(other.errors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.resamples += other.resamples;
        self.failed += other.failed;
        self.completed += other.completed;
        self
    }
}

/// Estimate the SER of every requested scheme over the Es/N0 grid.
pub fn estimate_ser(spec: &ExperimentSpec) -> Result<SerReport, HarnessError> {
    spec.validate()?;
    let needs = Needs::of(&spec.schemes);
    let schemes = spec.schemes.len();
    let grid = spec.esn0_grid_db.len();
    let accum = (0..spec.trials)
        .into_par_iter()
        .map(|trial| -> Result<Accum, HarnessError> {
            let mut acc = Accum::zero(schemes, grid);
            match prepare_trial(spec, trial, needs) {
                Ok(prepared) => {
                    acc.resamples += prepared.resamples as u64;
                    let bits = execute_prepared(spec, trial, &prepared)?;
                    for (si, per_esn0) in bits.iter().enumerate() {
                        for (ei, streams) in per_esn0.iter().enumerate() {
                            acc.errors[si][ei] += streams.iter().map(|&b| b as u64).sum::<u64>();
                        }
                    }
                    acc.completed = 1;
                }
                Err(HarnessError::IaFailure { .. }) => {
                    acc.failed = 1;
                    acc.resamples += MAX_RESAMPLES as u64;
                }
                Err(e) => return Err(e),
            }
            Ok(acc)
        })
        .try_reduce(|| Accum::zero(schemes, grid), |a, b| Ok(a.merge(b)));
    let accum = accum?;

    let decisions_per_trial = (spec.system.users * spec.system.streams) as u64;
    let mut rows = Vec::with_capacity(schemes * grid);
    for (si, scheme) in spec.schemes.iter().enumerate() {
        for (ei, &esn0_db) in spec.esn0_grid_db.iter().enumerate() {
            let errors = accum.errors[si][ei];
            let decisions = accum.completed * decisions_per_trial;
            let ser = if decisions > 0 {
                errors as f64 / decisions as f64
            } else {
                0.0
            };
            let (ci_lo, ci_hi) = wilson_interval(errors, decisions);
            rows.push(SerRow {
                scheme: *scheme,
                esn0_db,
                trials: accum.completed,
                errors,
                ser,
                ci_lo,
                ci_hi,
            });
        }
    }
    Ok(SerReport {
        rows,
        resampled_instances: accum.resamples,
        failed_trials: accum.failed,
        decisions_per_trial,
    })
}

/// Write the SER report in the sweep CSV schema.
pub fn write_ser_csv<W: Write>(report: &SerReport, mut out: W) -> io::Result<()> {
    writeln!(out, "# piaid-csv v1 sweep")?;
    writeln!(out, "scheme,esn0_db,trials,errors,ser,ci_lo,ci_hi")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{:.6e},{:.6e},{:.6e}",
            r.scheme, r.esn0_db, r.trials, r.errors, r.ser, r.ci_lo, r.ci_hi
        )?;
    }
    Ok(())
}

// --- Max-SINR baseline -----------------------------------------------------

/// Alternating max-SINR transceiver design: each receive vector is the MMSE
/// direction for its stream in the forward network, each transmit vector the
/// analogous direction in the reciprocal network. Returns equalizers,
/// precoders and the resulting effective gains.
pub fn max_sinr_transceiver<R: Rng + ?Sized>(
    instance: &NetworkInstance,
    iters: usize,
    rng: &mut R,
) -> (Vec<CMat>, Vec<CMat>, EffectiveGains) {
    let cfg = &instance.config;
    let k = cfg.users;
    let d = cfg.streams;
    let m = cfg.tx_antennas;
    let n = cfg.rx_antennas;

    let mut precoders: Vec<CMat> = (0..k)
        .map(|_| {
            let g = CMat::from_fn(m, d, |_, _| standard_complex(rng));
            g.qr().q()
        })
        .collect();
    let mut equalizers: Vec<CMat> = vec![CMat::zeros(n, d); k];

    for _ in 0..iters.max(1) {
        // Forward: receive vectors.
        for rx in 0..k {
            for l in 0..d {
                let mut cov = CMat::identity(n, n) * Complex64::new(crate::netgen::NOISE_POWER, 0.0);
                for tx in 0..k {
                    let power = instance.rx_power(rx, tx);
                    for s in 0..d {
                        if tx == rx && s == l {
                            continue;
                        }
                        let t = &instance.fading[rx][tx] * precoders[tx].column(s);
                        cov += (&t * t.adjoint()) * Complex64::new(power, 0.0);
                    }
                }
                let target = (&instance.fading[rx][rx] * precoders[rx].column(l))
                    * Complex64::new(instance.rx_power(rx, rx).sqrt(), 0.0);
                let u = cov
                    .clone()
                    .lu()
                    .solve(&target)
                    .unwrap_or_else(|| target.clone());
                let nrm = u.norm();
                if nrm > 0.0 {
                    equalizers[rx].set_column(l, &(u / Complex64::new(nrm, 0.0)));
                }
            }
        }
        // Reverse: transmit vectors in the reciprocal network.
        for tx in 0..k {
            for s in 0..d {
                let mut cov = CMat::identity(m, m) * Complex64::new(crate::netgen::NOISE_POWER, 0.0);
                for rx in 0..k {
                    let power = instance.rx_power(rx, tx);
                    for l in 0..d {
                        if rx == tx && l == s {
                            continue;
                        }
                        let t = instance.fading[rx][tx].ad_mul(&equalizers[rx].column(l).into_owned());
                        cov += (&t * t.adjoint()) * Complex64::new(power, 0.0);
                    }
                }
                let target = instance.fading[tx][tx].ad_mul(&equalizers[tx].column(s).into_owned())
                    * Complex64::new(instance.rx_power(tx, tx).sqrt(), 0.0);
                let v = cov
                    .clone()
                    .lu()
                    .solve(&target)
                    .unwrap_or_else(|| target.clone());
                let nrm = v.norm();
                if nrm > 0.0 {
                    precoders[tx].set_column(s, &(v / Complex64::new(nrm, 0.0)));
                }
            }
        }
    }
    let heff = ia::effective_gains(&equalizers, &precoders, instance);
    (equalizers, precoders, heff)
}

/// Per-stream SINR of `(rx, l)` for given transceivers; the quantity the
/// max-SINR receive update maximizes.
pub fn stream_sinr(
    instance: &NetworkInstance,
    equalizer_col: &CVec,
    precoders: &[CMat],
    rx: usize,
    l: usize,
) -> f64 {
    let cfg = &instance.config;
    let mut interference = crate::netgen::NOISE_POWER * equalizer_col.norm_squared();
    let mut signal = 0.0;
    for tx in 0..cfg.users {
        let power = instance.rx_power(rx, tx);
        for s in 0..cfg.streams {
            let g = equalizer_col.dotc(&(&instance.fading[rx][tx] * precoders[tx].column(s)));
            let p = power * g.norm_sqr();
            if tx == rx && s == l {
                signal = p;
            } else {
                interference += p;
            }
        }
    }
    signal / interference
}

/// Scheme-independent one-instance baseline: build the requested one-stage
/// transceiver and detect every stream of the given symbols/noise draw with
/// minimum-distance detection only.
pub fn baseline_one_stage<R: Rng + ?Sized>(
    instance: &NetworkInstance,
    transceiver: BaselineTransceiver,
    draw_symbols: &[Vec<usize>],
    noise: &[CVec],
    opts: &IaOptions,
    max_sinr_iters: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Complex64>>, HarnessError> {
    let cfg = &instance.config;
    let k = cfg.users;
    let (equalizers, heff) = match transceiver {
        BaselineTransceiver::IterativeIa => {
            let aligned: Vec<Vec<usize>> = (0..k)
                .map(|rx| (0..k).filter(|&i| i != rx).collect())
                .collect();
            let sol = ia::minimize_leakage(instance, &aligned, opts, rng).map_err(|e| {
                HarnessError::IaFailure {
                    trial: 0,
                    attempts: 1,
                    last: e,
                }
            })?;
            (sol.equalizers, sol.heff)
        }
        BaselineTransceiver::MaxSinr => {
            let (u, _v, heff) = max_sinr_transceiver(instance, max_sinr_iters, rng);
            (u, heff)
        }
    };
    let draw = TrialDraw {
        symbols: draw_symbols.to_vec(),
        noise: noise.to_vec(),
    };
    let view = SchemeView {
        equalizers: &equalizers,
        heff: &heff,
        strong: None,
        method: Stage1Method::Exhaustive,
    };
    let bits = detect_trial_streams(&view, instance, 1.0, &draw)?;
    // Re-run detection to surface the decisions themselves.
    let mut decisions = vec![Vec::with_capacity(cfg.streams); k];
    let mut it = bits.iter();
    for rx in 0..k {
        for l in 0..cfg.streams {
            let _ = it.next();
            // Decisions are recomputed cheaply from the same streams.
            let amp: Vec<f64> = (0..k)
                .map(|tx| instance.rx_power(rx, tx).sqrt())
                .collect();
            let u_col = equalizers[rx].column(l);
            let mut y: Complex64 = u_col.dotc(&noise[rx]);
            for tx in 0..k {
                for s in 0..cfg.streams {
                    y += heff.gain(rx, tx, l, s) * QPSK_ALPHABET[draw_symbols[tx][s]] * amp[tx];
                }
            }
            let stream = ReceivedStream {
                y,
                direct_gain: heff.gain(rx, rx, l, l) * amp[rx],
                strong: Vec::new(),
                weak_power: 0.0,
            };
            decisions[rx].push(detect_stream(&stream, Stage1Method::Exhaustive)?.symbol);
        }
    }
    Ok(decisions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineTransceiver {
    IterativeIa,
    MaxSinr,
}

// --- Interference window and scaling experiments ----------------------------

#[derive(Debug, Clone)]
pub struct WindowPoint {
    pub p2_db: f64,
    pub trials: u64,
    pub errors: u64,
    pub ser: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Single-interferer two-stage detection SER versus interference power.
///
/// Per grid point: `y = a·h1·x1 + a·10^(p2/20)·h2·x2 + z` with CN(0,1)
/// fading, QPSK symbols, noise far below the signal (`esn0_db`), and stage I
/// always detecting the interferer. The curve exhibits the window of
/// unfavorable interference power around 0 dB: detection fails neither for
/// very weak nor for very strong interference.
pub fn interference_window_curve(
    p2_grid_db: &[f64],
    trials: u64,
    esn0_db: f64,
    seed: u64,
) -> Vec<WindowPoint> {
    assert!(!p2_grid_db.is_empty() && p2_grid_db.len() <= MAX_GRID_POINTS);
    let a1 = (crate::netgen::NOISE_POWER * 10f64.powf(esn0_db / 10.0)).sqrt();
    p2_grid_db
        .iter()
        .enumerate()
        .map(|(pi, &p2_db)| {
            let a2 = a1 * 10f64.powf(p2_db / 20.0);
            let errors: u64 = (0..trials)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = trial_rng(seed, trial, SUB_AUX, pi as u64);
                    let h1 = standard_complex(&mut rng);
                    let h2 = standard_complex(&mut rng);
                    let x1 = rng.random_range(0..4);
                    let x2 = rng.random_range(0..4);
                    let z = standard_complex(&mut rng) * crate::netgen::NOISE_POWER.sqrt();
                    let g1 = h1 * a1;
                    let g2 = h2 * a2;
                    let stream = ReceivedStream {
                        y: g1 * QPSK_ALPHABET[x1] + g2 * QPSK_ALPHABET[x2] + z,
                        direct_gain: g1,
                        strong: vec![StrongInterferer {
                            gain: g2,
                            slot: SlotId { user: 1, stream: 0 },
                        }],
                        weak_power: 0.0,
                    };
                    let out = detect_stream(&stream, Stage1Method::Exhaustive)
                        .expect("single interferer within enumeration cap");
                    u64::from(detect::qpsk_index(out.symbol) != x1)
                })
                .sum();
            let ser = errors as f64 / trials as f64;
            let (ci_lo, ci_hi) = wilson_interval(errors, trials);
            WindowPoint {
                p2_db,
                trials,
                errors,
                ser,
                ci_lo,
                ci_hi,
            }
        })
        .collect()
}

pub fn write_window_csv<W: Write>(points: &[WindowPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "# piaid-csv v1 window")?;
    writeln!(out, "p2_db,trials,errors,ser,ci_lo,ci_hi")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{:.6e},{:.6e},{:.6e}",
            p.p2_db, p.trials, p.errors, p.ser, p.ci_lo, p.ci_hi
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ScalingPoint {
    pub ratio_db: f64,
    pub trials: u64,
    pub errors: u64,
    pub ser: f64,
}

#[derive(Debug, Clone)]
pub struct ScalingReport {
    /// Weak branch: SER versus ρ = P_i L_ki / (P_k L_kk), one-stage receiver.
    pub weak: Vec<ScalingPoint>,
    /// Strong branch: SER versus 1/ρ, two-stage receiver.
    pub strong: Vec<ScalingPoint>,
    pub weak_slope: f64,
    pub strong_slope: f64,
}

/// Empirical check of the asymptotic per-link SER orders with a single
/// residual interferer in the interference-limited regime: on the weak branch
/// SER scales like ρ, on the strong branch like 1/ρ, so both log-log slopes
/// against the grid ratio are ≈ 1.
pub fn single_interferer_scaling(
    ratio_grid_db: &[f64],
    trials: u64,
    esn0_db: f64,
    seed: u64,
) -> ScalingReport {
    assert!(!ratio_grid_db.is_empty() && ratio_grid_db.len() <= 32);
    let a1 = (crate::netgen::NOISE_POWER * 10f64.powf(esn0_db / 10.0)).sqrt();
    let run_branch = |strong_branch: bool| -> Vec<ScalingPoint> {
        ratio_grid_db
            .iter()
            .enumerate()
            .map(|(pi, &ratio_db)| {
                // Weak branch: interferer `ratio_db` below the signal, treated
                // as noise. Strong branch: interferer `-ratio_db` above the
                // signal, detected in stage I.
                let rel_db = if strong_branch { -ratio_db } else { ratio_db };
                let a2 = a1 * 10f64.powf(rel_db / 20.0);
                let slot = 32 + if strong_branch { 64 } else { 0 } + pi;
                let errors: u64 = (0..trials)
                    .into_par_iter()
                    .map(|trial| {
                        let mut rng = trial_rng(seed, trial, SUB_AUX, slot as u64);
                        let h1 = standard_complex(&mut rng);
                        let h2 = standard_complex(&mut rng);
                        let x1 = rng.random_range(0..4);
                        let x2 = rng.random_range(0..4);
                        let z = standard_complex(&mut rng) * crate::netgen::NOISE_POWER.sqrt();
                        let g1 = h1 * a1;
                        let g2 = h2 * a2;
                        let strong = if strong_branch {
                            vec![StrongInterferer {
                                gain: g2,
                                slot: SlotId { user: 1, stream: 0 },
                            }]
                        } else {
                            Vec::new()
                        };
                        let stream = ReceivedStream {
                            y: g1 * QPSK_ALPHABET[x1] + g2 * QPSK_ALPHABET[x2] + z,
                            direct_gain: g1,
                            strong,
                            weak_power: 0.0,
                        };
                        let out = detect_stream(&stream, Stage1Method::Exhaustive)
                            .expect("single interferer within enumeration cap");
                        u64::from(detect::qpsk_index(out.symbol) != x1)
                    })
                    .sum();
                ScalingPoint {
                    ratio_db,
                    trials,
                    errors,
                    ser: errors as f64 / trials as f64,
                }
            })
            .collect()
    };
    let weak = run_branch(false);
    let strong = run_branch(true);
    let slope = |points: &[ScalingPoint]| -> f64 {
        // Log-log least squares; zero-error points take the continuity
        // correction 0.5 / trials.
        let pts: Vec<(f64, f64)> = points
            .iter()
            .map(|p| {
                let ser = if p.errors == 0 {
                    0.5 / p.trials as f64
                } else {
                    p.ser
                };
                (10f64.powf(p.ratio_db / 10.0).ln(), ser.ln())
            })
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    };
    let weak_slope = slope(&weak);
    let strong_slope = slope(&strong);
    ScalingReport {
        weak,
        strong,
        weak_slope,
        strong_slope,
    }
}

// --- Per-instance SER distribution (CDF mode) -------------------------------

#[derive(Debug, Clone)]
pub struct CdfReport {
    pub esn0_db: f64,
    pub instances: u64,
    pub symbols_per_instance: u32,
    /// Ascending per-stream SER samples for each scheme.
    pub samples: Vec<(Scheme, Vec<f64>)>,
    pub resampled_instances: u64,
    pub failed_instances: u64,
}

/// Per-realization SER samples: each network instance runs an inner loop of
/// symbol vectors at one operating point, yielding one SER sample per data
/// stream. The empirical CDF over instances separates schemes by their SER
/// percentiles.
pub fn ser_cdf(
    spec: &ExperimentSpec,
    esn0_db: f64,
    instances: u64,
    symbols_per_instance: u32,
) -> Result<CdfReport, HarnessError> {
    let mut point_spec = spec.clone();
    point_spec.esn0_grid_db = vec![esn0_db];
    point_spec.validate()?;
    if symbols_per_instance == 0 {
        return Err(HarnessError::BadSpec(
            "symbols_per_instance must be >= 1".into(),
        ));
    }
    let needs = Needs::of(&point_spec.schemes);
    let schemes = point_spec.schemes.len();
    let streams = point_spec.system.users * point_spec.system.streams;

    struct InstanceOut {
        samples: Vec<Vec<f64>>,
        resamples: u64,
        failed: bool,
    }

    let per_instance: Result<Vec<InstanceOut>, HarnessError> = (0..instances)
        .into_par_iter()
        .map(|trial| -> Result<InstanceOut, HarnessError> {
            match prepare_trial(&point_spec, trial, needs) {
                Ok(prepared) => {
                    let factor = 10f64.powf((esn0_db - REF_ESN0_DB) / 10.0);
                    let mut scaled = prepared.instance.clone();
                    for p in &mut scaled.tx_power {
                        *p *= factor;
                    }
                    let max_sinr = if point_spec.schemes.contains(&Scheme::MaxSinr) {
                        let mut ms_rng = trial_rng(point_spec.seed, trial, SUB_MAX_SINR, 0);
                        Some(max_sinr_transceiver(
                            &scaled,
                            point_spec.max_sinr_iters,
                            &mut ms_rng,
                        ))
                    } else {
                        None
                    };
                    let mut counts = vec![vec![0u32; streams]; schemes];
                    let mut sym_rng = trial_rng(point_spec.seed, trial, SUB_SYMBOLS, 0);
                    for _ in 0..symbols_per_instance {
                        let draw = draw_symbols_noise(&point_spec.system, &mut sym_rng);
                        for (si, scheme) in point_spec.schemes.iter().enumerate() {
                            let view = match scheme {
                                Scheme::PiaidExhaustive | Scheme::PiaidSdrSid => {
                                    let (set, sol) = prepared.pia_opt.as_ref().expect("prepared");
                                    SchemeView {
                                        equalizers: &sol.equalizers,
                                        heff: &sol.heff,
                                        strong: Some(set),
                                        method: if *scheme == Scheme::PiaidExhaustive {
                                            Stage1Method::Exhaustive
                                        } else {
                                            Stage1Method::SdrSid
                                        },
                                    }
                                }
                                Scheme::RandomizedPia => {
                                    let (set, sol) = prepared.pia_rand.as_ref().expect("prepared");
                                    SchemeView {
                                        equalizers: &sol.equalizers,
                                        heff: &sol.heff,
                                        strong: Some(set),
                                        method: Stage1Method::Exhaustive,
                                    }
                                }
                                Scheme::IterativeIa => {
                                    let sol = prepared.full.as_ref().expect("prepared");
                                    SchemeView {
                                        equalizers: &sol.equalizers,
                                        heff: &sol.heff,
                                        strong: None,
                                        method: Stage1Method::Exhaustive,
                                    }
                                }
                                Scheme::MaxSinr => {
                                    let (u, _v, heff) = max_sinr.as_ref().expect("prepared");
                                    SchemeView {
                                        equalizers: u,
                                        heff,
                                        strong: None,
                                        method: Stage1Method::Exhaustive,
                                    }
                                }
                            };
                            let bits =
                                detect_trial_streams(&view, &prepared.instance, factor, &draw)?;
                            for (c, b) in counts[si].iter_mut().zip(bits) {
                                *c += b as u32;
                            }
                        }
                    }
                    let samples = counts
                        .into_iter()
                        .map(|per_stream| {
                            per_stream
                                .into_iter()
                                .map(|c| c as f64 / symbols_per_instance as f64)
                                .collect()
                        })
                        .collect();
                    Ok(InstanceOut {
                        samples,
                        resamples: prepared.resamples as u64,
                        failed: false,
                    })
                }
                Err(HarnessError::IaFailure { .. }) => Ok(InstanceOut {
                    samples: vec![Vec::new(); schemes],
                    resamples: MAX_RESAMPLES as u64,
                    failed: true,
                }),
                Err(e) => Err(e),
            }
        })
        .collect();
    let per_instance = per_instance?;

    let mut samples: Vec<(Scheme, Vec<f64>)> = point_spec
        .schemes
        .iter()
        .map(|s| (*s, Vec::new()))
        .collect();
    let mut resampled = 0;
    let mut failed = 0;
    for inst in per_instance {
        resampled += inst.resamples;
        if inst.failed {
            failed += 1;
            continue;
        }
        for (si, per_stream) in inst.samples.into_iter().enumerate() {
            samples[si].1.extend(per_stream);
        }
    }
    for (_, v) in &mut samples {
        v.sort_by(f64::total_cmp);
    }
    Ok(CdfReport {
        esn0_db,
        instances,
        symbols_per_instance,
        samples,
        resampled_instances: resampled,
        failed_instances: failed,
    })
}

/// Write per-instance SER samples in the CDF CSV schema. `instance_id` here
/// numbers (instance, stream) sample rows in their deterministic order.
pub fn write_cdf_csv<W: Write>(report: &CdfReport, mut out: W) -> io::Result<()> {
    writeln!(out, "# piaid-csv v1 cdf")?;
    writeln!(out, "scheme,esn0_db,instance_id,ser_sample")?;
    for (scheme, samples) in &report.samples {
        for (id, s) in samples.iter().enumerate() {
            writeln!(out, "{},{},{},{:.6e}", scheme, report.esn0_db, id, s)?;
        }
    }
    Ok(())
}
