//! Random network generation: node geometry, long-term path gains, MIMO
//! fading realizations and the receive Es/N0 normalization.
//!
//! The channel between transmitter `i` and receiver `k` is
//! `sqrt(P_i L_ki) H_ki` where `L_ki = ω d_ki^(−γ)` combines log-normal
//! shadowing `ω` and distance-based path loss, and the entries of `H_ki` are
//! i.i.d. CN(0,1). Receiver noise is circularly symmetric AWGN with
//! covariance `2·I_N` (unit variance per real dimension).

use crate::{CMat, CVec, Complex64, RMat};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

/// Total complex noise power per receive antenna: `E[z z†] = 2 I_N`.
pub const NOISE_POWER: f64 = 2.0;

/// Effective minimum tx–rx separation in meters. Distances below this are
/// clamped before evaluating the path-loss law, which is singular at d = 0.
pub const MIN_LINK_DISTANCE_M: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("user count must be at least 1, got {0}")]
    TooFewUsers(usize),
    #[error("antenna counts must be at least 1 (M={m}, N={n})")]
    NoAntennas { m: usize, n: usize },
    #[error("streams per user must satisfy 1 <= D <= min(M,N), got D={d} with M={m}, N={n}")]
    BadStreamCount { d: usize, m: usize, n: usize },
    #[error("path-loss exponent must be positive, got {0}")]
    BadPathLossExponent(f64),
    #[error("area dimensions must be positive, got {0} x {1} m")]
    BadArea(f64, f64),
    #[error("shadowing standard deviation must be non-negative, got {0} dB")]
    BadShadowing(f64),
}

/// Static system parameters of a K-user MIMO interference network.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of transmit/receive pairs (K).
    pub users: usize,
    /// Antennas per transmitter (M).
    pub tx_antennas: usize,
    /// Antennas per receiver (N).
    pub rx_antennas: usize,
    /// Independent data streams per user (D).
    pub streams: usize,
    /// Deployment rectangle width in meters.
    pub area_width_m: f64,
    /// Deployment rectangle height in meters.
    pub area_height_m: f64,
    /// Path-loss exponent γ.
    pub path_loss_exponent: f64,
    /// Log-normal shadowing standard deviation in dB.
    pub shadowing_sigma_db: f64,
    /// Master RNG seed for experiments built on this configuration.
    pub seed: u64,
}

impl SystemConfig {
    /// Default simulation profile: 5 users, 3x2 antennas, single QPSK stream,
    /// 2 km x 1 km area, γ = 6, σ_ω = 12 dB.
    pub fn default_profile() -> Self {
        Self {
            users: 5,
            tx_antennas: 3,
            rx_antennas: 2,
            streams: 1,
            area_width_m: 2000.0,
            area_height_m: 1000.0,
            path_loss_exponent: 6.0,
            shadowing_sigma_db: 12.0,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.users < 1 {
            return Err(ConfigError::TooFewUsers(self.users));
        }
        if self.tx_antennas < 1 || self.rx_antennas < 1 {
            return Err(ConfigError::NoAntennas {
                m: self.tx_antennas,
                n: self.rx_antennas,
            });
        }
        if self.streams < 1 || self.streams > self.tx_antennas.min(self.rx_antennas) {
            return Err(ConfigError::BadStreamCount {
                d: self.streams,
                m: self.tx_antennas,
                n: self.rx_antennas,
            });
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(ConfigError::BadPathLossExponent(self.path_loss_exponent));
        }
        if !(self.area_width_m > 0.0 && self.area_height_m > 0.0) {
            return Err(ConfigError::BadArea(self.area_width_m, self.area_height_m));
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return Err(ConfigError::BadShadowing(self.shadowing_sigma_db));
        }
        Ok(())
    }

    /// RNG seeded from this configuration's master seed.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// How `scale_powers_to_esn0` interprets the target receive Es/N0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsN0Mode {
    /// One common transmit power, chosen so the network mean of the
    /// per-receiver Es/N0 (in dB) equals the target.
    NetworkAverage,
    /// Per-user transmit powers, each chosen so its own desired link hits the
    /// target exactly.
    PerReceiver,
}

/// One realization of the network: geometry, path gains, powers, fading.
#[derive(Debug, Clone)]
pub struct NetworkInstance {
    pub config: SystemConfig,
    /// Transmitter coordinates in meters.
    pub positions_tx: Vec<[f64; 2]>,
    /// Receiver coordinates in meters.
    pub positions_rx: Vec<[f64; 2]>,
    /// Long-term path gains, `path_gain[(k, i)] = L_ki` (receiver k, transmitter i).
    pub path_gain: RMat,
    /// Linear transmit powers `P_i`.
    pub tx_power: Vec<f64>,
    /// MIMO fading matrices, `fading[k][i]` is the N x M matrix `H_ki`.
    pub fading: Vec<Vec<CMat>>,
}

impl NetworkInstance {
    /// Average receive power of the link from transmitter `i` at receiver `k`,
    /// `P_i L_ki`.
    #[inline]
    pub fn rx_power(&self, k: usize, i: usize) -> f64 {
        self.tx_power[i] * self.path_gain[(k, i)]
    }
}

/// Draw one CN(0,1) sample (unit total variance, split evenly over re/im).
#[inline]
pub fn standard_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * scale, im * scale)
}

/// Receiver AWGN with covariance `2 I_N`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoiseModel;

impl NoiseModel {
    /// Draw one length-`n` noise vector with `E[z z†] = 2 I_n`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> CVec {
        CVec::from_fn(n, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im)
        })
    }
}

/// Generate positions, path gains and fading per the channel model.
///
/// Positions are uniform over the deployment rectangle; `L_ki = ω d_ki^(−γ)`
/// with `ω = 10^(x/10)`, `x ~ N(0, σ_ω²)` drawn independently per link; fading
/// entries are i.i.d. CN(0,1). Transmit powers are initialized to 1 and are
/// assigned afterwards with [`scale_powers_to_esn0`].
///
/// The configuration must be valid (see [`SystemConfig::validate`]); the draw
/// order is fixed so a given RNG stream always yields the same instance.
pub fn generate_topology<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> NetworkInstance {
    debug_assert!(config.validate().is_ok());
    let k = config.users;
    let draw_pos = |rng: &mut R| -> [f64; 2] {
        [
            rng.random::<f64>() * config.area_width_m,
            rng.random::<f64>() * config.area_height_m,
        ]
    };
    let positions_tx: Vec<[f64; 2]> = (0..k).map(|_| draw_pos(rng)).collect();
    let positions_rx: Vec<[f64; 2]> = (0..k).map(|_| draw_pos(rng)).collect();

    let shadow = Normal::new(0.0, config.shadowing_sigma_db).expect("valid sigma");
    let mut path_gain = RMat::zeros(k, k);
    for rx in 0..k {
        for tx in 0..k {
            let dx = positions_rx[rx][0] - positions_tx[tx][0];
            let dy = positions_rx[rx][1] - positions_tx[tx][1];
            let d = (dx * dx + dy * dy).sqrt().max(MIN_LINK_DISTANCE_M);
            let omega = 10f64.powf(shadow.sample(rng) / 10.0);
            path_gain[(rx, tx)] = omega * d.powf(-config.path_loss_exponent);
        }
    }

    let fading = (0..k)
        .map(|_rx| {
            (0..k)
                .map(|_tx| {
                    CMat::from_fn(config.rx_antennas, config.tx_antennas, |_, _| {
                        standard_complex(rng)
                    })
                })
                .collect()
        })
        .collect();

    NetworkInstance {
        config: config.clone(),
        positions_tx,
        positions_rx,
        path_gain,
        tx_power: vec![1.0; k],
        fading,
    }
}

/// Receive Es/N0 in dB of the desired link of user `k` (0-based):
/// `10 log10(P_k L_kk / 2)` — average symbol energy of the desired link over
/// the total complex noise power.
pub fn receive_esn0_db(instance: &NetworkInstance, k: usize) -> f64 {
    10.0 * (instance.rx_power(k, k) / NOISE_POWER).log10()
}

/// Re-assign transmit powers so the receive Es/N0 hits `target_db`.
///
/// `NetworkAverage` keeps all powers equal (the simulation default) and is
/// exact for the network mean of [`receive_esn0_db`]; `PerReceiver` gives
/// every desired link the target exactly. Either way the relative
/// interference profile `P_i L_ki / (P_k L_kk)` does not depend on the
/// target, so re-scaling to a different target is a uniform power scale.
pub fn scale_powers_to_esn0(
    instance: &NetworkInstance,
    target_db: f64,
    mode: EsN0Mode,
) -> NetworkInstance {
    let k = instance.config.users;
    let mut out = instance.clone();
    match mode {
        EsN0Mode::NetworkAverage => {
            let mean_db: f64 = (0..k)
                .map(|u| 10.0 * (instance.path_gain[(u, u)] / NOISE_POWER).log10())
                .sum::<f64>()
                / k as f64;
            let p = 10f64.powf((target_db - mean_db) / 10.0);
            out.tx_power = vec![p; k];
        }
        EsN0Mode::PerReceiver => {
            let target = 10f64.powf(target_db / 10.0);
            out.tx_power = (0..k)
                .map(|u| NOISE_POWER * target / instance.path_gain[(u, u)])
                .collect();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> SystemConfig {
        SystemConfig {
            users: 3,
            tx_antennas: 2,
            rx_antennas: 2,
            streams: 1,
            area_width_m: 2000.0,
            area_height_m: 1000.0,
            path_loss_exponent: 6.0,
            shadowing_sigma_db: 12.0,
            seed: 7,
        }
    }

    #[test]
    fn path_loss_law_identity_cases() {
        // L = ω d^(−γ) with ω = 1: unit distance gives 1, d = 2 gives 2^−6.
        let gamma = 6.0;
        let l = |d: f64| 1.0 * d.powf(-gamma);
        assert_eq!(l(1.0), 1.0);
        assert_eq!(l(2.0), 0.015625);
    }

    #[test]
    fn default_profile_is_valid() {
        let cfg = SystemConfig::default_profile();
        assert_eq!(cfg.shadowing_sigma_db, 12.0);
        assert_eq!(cfg.path_loss_exponent, 6.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let mut cfg = toy_config();
        cfg.users = 0;
        assert!(matches!(cfg.validate(), Err(ConfigError::TooFewUsers(0))));
        let mut cfg = toy_config();
        cfg.streams = 3;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::BadStreamCount { .. })
        ));
        let mut cfg = toy_config();
        cfg.path_loss_exponent = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = toy_config();
        cfg.area_height_m = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn receive_esn0_inverts_the_definition() {
        let cfg = toy_config();
        let mut rng = cfg.rng();
        let mut inst = generate_topology(&cfg, &mut rng);
        // Force P_k L_kk to chosen values on user 0.
        inst.tx_power = vec![1.0; 3];
        inst.path_gain[(0, 0)] = 2.0;
        assert!((receive_esn0_db(&inst, 0) - 0.0).abs() < 1e-12);
        inst.path_gain[(0, 0)] = 200.0;
        assert!((receive_esn0_db(&inst, 0) - 20.0).abs() < 1e-12);
        // Operating point used by the CDF experiments: ~25 dB.
        inst.path_gain[(0, 0)] = 632.45;
        assert!((receive_esn0_db(&inst, 0) - 25.0).abs() < 1e-3);
    }

    #[test]
    fn scaling_hits_target_and_is_idempotent() {
        let cfg = toy_config();
        let mut rng = cfg.rng();
        let inst = generate_topology(&cfg, &mut rng);
        let scaled = scale_powers_to_esn0(&inst, 25.0, EsN0Mode::NetworkAverage);
        let mean: f64 =
            (0..3).map(|k| receive_esn0_db(&scaled, k)).sum::<f64>() / 3.0;
        assert!((mean - 25.0).abs() < 1e-9, "mean = {mean}");
        let again = scale_powers_to_esn0(&scaled, 25.0, EsN0Mode::NetworkAverage);
        for k in 0..3 {
            assert!((again.tx_power[k] - scaled.tx_power[k]).abs() <= 1e-12 * scaled.tx_power[k]);
        }

        let per_rx = scale_powers_to_esn0(&inst, 10.0, EsN0Mode::PerReceiver);
        for k in 0..3 {
            assert!((receive_esn0_db(&per_rx, k) - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scaling_preserves_interference_profile() {
        let cfg = toy_config();
        let mut rng = cfg.rng();
        let inst = generate_topology(&cfg, &mut rng);
        let a = scale_powers_to_esn0(&inst, 5.0, EsN0Mode::NetworkAverage);
        // Doubling every path gain and re-scaling leaves the ratios unchanged.
        let mut doubled = inst.clone();
        doubled.path_gain *= 2.0;
        let b = scale_powers_to_esn0(&doubled, 5.0, EsN0Mode::NetworkAverage);
        for k in 0..3 {
            for i in 0..3 {
                let ra = a.rx_power(k, i) / a.rx_power(k, k);
                let rb = b.rx_power(k, i) / b.rx_power(k, k);
                assert!((ra - rb).abs() <= 1e-12 * ra.abs().max(1.0));
            }
        }
    }

    #[test]
    fn equal_direct_gains_give_p_equals_two_over_l() {
        let cfg = toy_config();
        let mut rng = cfg.rng();
        let mut inst = generate_topology(&cfg, &mut rng);
        for k in 0..3 {
            inst.path_gain[(k, k)] = 0.125;
        }
        let scaled = scale_powers_to_esn0(&inst, 0.0, EsN0Mode::NetworkAverage);
        for k in 0..3 {
            assert!((scaled.tx_power[k] - NOISE_POWER / 0.125).abs() < 1e-9);
        }
    }

    #[test]
    fn coincident_nodes_have_finite_gain() {
        let mut cfg = toy_config();
        cfg.shadowing_sigma_db = 0.0;
        let mut rng = cfg.rng();
        let mut inst = generate_topology(&cfg, &mut rng);
        // Re-derive one gain with a forced zero distance: the clamp keeps it finite.
        inst.positions_rx[0] = inst.positions_tx[0];
        let regen = {
            let d: f64 = 0.0;
            let d = d.max(MIN_LINK_DISTANCE_M);
            d.powf(-cfg.path_loss_exponent)
        };
        assert!(regen.is_finite() && regen > 0.0);
    }

    #[test]
    fn fading_statistics_match_unit_complex_gaussian() {
        let cfg = SystemConfig {
            users: 4,
            seed: 99,
            ..toy_config()
        };
        let mut rng = cfg.rng();
        let mut sum_sq = 0.0;
        let mut sum_re = 0.0;
        let mut sum_im = 0.0;
        let mut count = 0usize;
        while count < 120_000 {
            let inst = generate_topology(&cfg, &mut rng);
            for row in &inst.fading {
                for h in row {
                    for e in h.iter() {
                        sum_sq += e.norm_sqr();
                        sum_re += e.re;
                        sum_im += e.im;
                        count += 1;
                    }
                }
            }
        }
        let n = count as f64;
        assert!((sum_sq / n - 1.0).abs() < 0.02, "mean |h|^2 = {}", sum_sq / n);
        assert!((sum_re / n).abs() < 0.02);
        assert!((sum_im / n).abs() < 0.02);
    }

    #[test]
    fn noise_covariance_is_two_i() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = NoiseModel;
        let n = 2;
        let mut acc = CMat::zeros(n, n);
        let draws = 200_000;
        for _ in 0..draws {
            let z = noise.sample(&mut rng, n);
            acc += &z * z.adjoint();
        }
        acc /= Complex64::new(draws as f64, 0.0);
        for r in 0..n {
            for c in 0..n {
                let expected = if r == c { 2.0 } else { 0.0 };
                assert!(
                    (acc[(r, c)].re - expected).abs() < 0.05 && acc[(r, c)].im.abs() < 0.05,
                    "cov[{r},{c}] = {}",
                    acc[(r, c)]
                );
            }
        }
    }

    #[test]
    fn path_gains_deterministic_given_stream() {
        let cfg = toy_config();
        let a = generate_topology(&cfg, &mut cfg.rng());
        let b = generate_topology(&cfg, &mut cfg.rng());
        assert_eq!(a.path_gain, b.path_gain);
        assert!(a.path_gain.iter().all(|&l| l > 0.0));
        assert_eq!(a.fading[2][1], b.fading[2][1]);
    }
}
