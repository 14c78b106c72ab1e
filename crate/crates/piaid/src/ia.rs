//! Precoder/equalizer computation for a partial alignment set, via
//! alternating leakage minimization restricted to the aligned links.
//!
//! For an alignment set `A` the transceivers must satisfy
//! `U_k† H_ki V_i = 0` for every aligned pair `(k, i ∈ A_k)` while the direct
//! links `U_k† H_kk V_k` stay diagonal with full stream rank. The solver
//! alternates two closed-form updates: with precoders fixed, each `U_k` is
//! the set of least-dominant eigenvectors of the aligned-interference
//! covariance seen at receiver k; with equalizers fixed, each `V_i` is the
//! analogous minimizer over the receivers that align transmitter i. Both
//! half-steps minimize the same weighted leakage functional over orthonormal
//! frames, so the leakage is non-increasing; when the set is feasible it
//! converges to zero and the direct links are then rotated diagonal via an
//! SVD of the effective per-user channel.
//!
//! The feasibility solve alternates on the unit-weight subspace leakage —
//! the set of exact nulls does not depend on link weights, and power weights
//! spanning many orders of magnitude stall the alternation — while
//! convergence is declared on the power-normalized residual
//! `Σ max(P_iL_ki/P_kL_kk, 1)·‖U_k†H_kiV_i‖² < tol`, which bounds both the
//! raw subspace leakage and the per-entry power-weighted gains. The
//! full-network baseline solve instead minimizes the power-normalized
//! leakage directly: it cannot reach zero, and suppressing the strongest
//! links first is the point of that transceiver.

use crate::netgen::NetworkInstance;
use crate::pia::PiaSet;
use crate::{CMat, Complex64};
use nalgebra::SymmetricEigen;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IaError {
    #[error("leakage {best_leakage:e} did not reach tolerance {tol:e} after {restarts} restarts")]
    ConvergenceFailure {
        best_leakage: f64,
        tol: f64,
        restarts: usize,
    },
    #[error("effective direct channel of user {user} is rank deficient (smallest singular value {sigma_min:e})")]
    RankDeficient { user: usize, sigma_min: f64 },
}

/// Solver knobs. Defaults: leakage tolerance 1e-8 (normalized units), 2000
/// alternating iterations, 5 random restarts.
#[derive(Debug, Clone)]
pub struct IaOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
    /// Record the per-half-step leakage trace of the returned solve.
    pub track_history: bool,
    /// Stop a solve once the objective has improved by less than this
    /// relative amount over a trailing window. `None` (the default) runs to
    /// convergence or `max_iters`.
    pub stall_rel: Option<f64>,
}

impl Default for IaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 2000,
            restarts: 5,
            track_history: false,
            stall_rel: None,
        }
    }
}

const STALL_PATIENCE: usize = 50;
const RANK_TOL: f64 = 1e-10;

/// Unit-power effective channel gains, `gains[k][i]` a D x D matrix with
/// entry `(l, d) = u_k^l† H_ki v_i^d`.
#[derive(Debug, Clone)]
pub struct EffectiveGains {
    pub gains: Vec<Vec<CMat>>,
}

impl EffectiveGains {
    #[inline]
    pub fn gain(&self, k: usize, i: usize, l: usize, d: usize) -> Complex64 {
        self.gains[k][i][(l, d)]
    }
}

#[derive(Debug, Clone)]
pub struct IaSolution {
    /// Per-user M x D precoders with orthonormal columns.
    pub precoders: Vec<CMat>,
    /// Per-user N x D equalizers with orthonormal columns.
    pub equalizers: Vec<CMat>,
    /// Final normalized aligned-interference leakage.
    pub leakage: f64,
    /// Effective gains after direct-link diagonalization.
    pub heff: EffectiveGains,
    /// Alternating iterations spent in the returned restart.
    pub iterations: usize,
    /// Restarts consumed (1 = first attempt succeeded).
    pub restarts_used: usize,
    /// Per-half-step leakage trace when requested.
    pub history: Option<Vec<f64>>,
}

/// Effective gains `u_k^l† H_ki v_i^d` for all users and streams.
pub fn effective_gains(
    equalizers: &[CMat],
    precoders: &[CMat],
    instance: &NetworkInstance,
) -> EffectiveGains {
    let k = instance.config.users;
    let gains = (0..k)
        .map(|rx| {
            (0..k)
                .map(|tx| equalizers[rx].adjoint() * &instance.fading[rx][tx] * &precoders[tx])
                .collect()
        })
        .collect();
    EffectiveGains { gains }
}

/// Rotate the D-dimensional transmit/receive subspaces of one user so its
/// effective direct channel becomes diagonal with non-negative entries in
/// descending order. Aligned-link nulls are preserved because both sides are
/// rotated by unitary matrices. Scalar effective channels (D = 1) are already
/// diagonal and are left untouched apart from the rank check.
pub fn diagonalize_direct(
    equalizer: &CMat,
    precoder: &CMat,
    h_direct: &CMat,
    user: usize,
) -> Result<(CMat, CMat), IaError> {
    let g = equalizer.adjoint() * h_direct * precoder;
    let d = g.nrows();
    if d == 1 {
        let sigma = g[(0, 0)].norm();
        if sigma < RANK_TOL {
            return Err(IaError::RankDeficient {
                user,
                sigma_min: sigma,
            });
        }
        return Ok((equalizer.clone(), precoder.clone()));
    }
    let svd = g.svd(true, true);
    let sigma = &svd.singular_values;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let sigma_min = sigma[*order.last().expect("d >= 1")];
    if sigma_min < RANK_TOL {
        return Err(IaError::RankDeficient { user, sigma_min });
    }
    let x = svd.u.expect("u requested");
    let y = svd.v_t.expect("v_t requested").adjoint();
    let mut xs = CMat::zeros(d, d);
    let mut ys = CMat::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        xs.column_mut(dst).copy_from(&x.column(src));
        ys.column_mut(dst).copy_from(&y.column(src));
    }
    Ok((equalizer * xs, precoder * ys))
}

/// Solve the alignment constraints for `pia_set`, returning the first restart
/// that reaches `opts.tol` (its direct links diagonalized), or the failure
/// describing the best attempt.
///
/// With an empty alignment set there is nothing to null and the transceivers
/// are the dominant singular pairs of the direct channels.
pub fn solve_alignment<R: Rng + ?Sized>(
    instance: &NetworkInstance,
    pia_set: &PiaSet,
    opts: &IaOptions,
    rng: &mut R,
) -> Result<IaSolution, IaError> {
    if pia_set.alpha == 0 {
        return solve_unaligned(instance);
    }
    let mut best_leakage = f64::INFINITY;
    let mut rank_failure = None;
    for restart in 1..=opts.restarts.max(1) {
        let run = alternate(instance, &pia_set.aligned, opts, WeightMode::Unit, rng);
        if run.leakage < best_leakage {
            best_leakage = run.leakage;
        }
        if run.leakage < opts.tol {
            match finalize(instance, run, restart) {
                Ok(sol) => return Ok(sol),
                Err(e) => {
                    // Converged but with a dead direct link: try another start.
                    rank_failure = Some(e);
                    continue;
                }
            }
        }
    }
    if let Some(e) = rank_failure {
        return Err(e);
    }
    Err(IaError::ConvergenceFailure {
        best_leakage,
        tol: opts.tol,
        restarts: opts.restarts.max(1),
    })
}

/// Minimize leakage over the given (possibly infeasible) alignment sets and
/// return the best transceivers found, without a convergence gate. Used for
/// the full-network leakage-minimization baseline, where residual leakage is
/// expected. Runs a single start and honors `opts.stall_rel`.
pub fn minimize_leakage<R: Rng + ?Sized>(
    instance: &NetworkInstance,
    aligned: &[Vec<usize>],
    opts: &IaOptions,
    rng: &mut R,
) -> Result<IaSolution, IaError> {
    if aligned.iter().all(|a| a.is_empty()) {
        return solve_unaligned(instance);
    }
    let run = alternate(instance, aligned, opts, WeightMode::NormalizedPower, rng);
    finalize(instance, run, 1)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum WeightMode {
    Unit,
    NormalizedPower,
}

struct RunState {
    precoders: Vec<CMat>,
    equalizers: Vec<CMat>,
    leakage: f64,
    iterations: usize,
    history: Option<Vec<f64>>,
}

fn finalize(
    instance: &NetworkInstance,
    run: RunState,
    restarts_used: usize,
) -> Result<IaSolution, IaError> {
    let users = instance.config.users;
    let mut equalizers = run.equalizers;
    let mut precoders = run.precoders;
    for k in 0..users {
        let (u, v) = diagonalize_direct(&equalizers[k], &precoders[k], &instance.fading[k][k], k)?;
        equalizers[k] = u;
        precoders[k] = v;
    }
    let heff = effective_gains(&equalizers, &precoders, instance);
    Ok(IaSolution {
        precoders,
        equalizers,
        leakage: run.leakage,
        heff,
        iterations: run.iterations,
        restarts_used,
        history: run.history,
    })
}

fn solve_unaligned(instance: &NetworkInstance) -> Result<IaSolution, IaError> {
    let cfg = &instance.config;
    let mut precoders = Vec::with_capacity(cfg.users);
    let mut equalizers = Vec::with_capacity(cfg.users);
    for k in 0..cfg.users {
        let h = &instance.fading[k][k];
        let svd = h.clone().svd(true, true);
        let sigma = &svd.singular_values;
        let mut order: Vec<usize> = (0..sigma.len()).collect();
        order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
        let sigma_min = sigma[order[cfg.streams - 1]];
        if sigma_min < RANK_TOL {
            return Err(IaError::RankDeficient { user: k, sigma_min });
        }
        let u_full = svd.u.expect("u requested");
        let v_full = svd.v_t.expect("v_t requested").adjoint();
        let mut u = CMat::zeros(cfg.rx_antennas, cfg.streams);
        let mut v = CMat::zeros(cfg.tx_antennas, cfg.streams);
        for (dst, &src) in order.iter().take(cfg.streams).enumerate() {
            u.column_mut(dst).copy_from(&u_full.column(src));
            v.column_mut(dst).copy_from(&v_full.column(src));
        }
        equalizers.push(u);
        precoders.push(v);
    }
    let heff = effective_gains(&equalizers, &precoders, instance);
    Ok(IaSolution {
        precoders,
        equalizers,
        leakage: 0.0,
        heff,
        iterations: 0,
        restarts_used: 1,
        history: None,
    })
}

fn alternate<R: Rng + ?Sized>(
    instance: &NetworkInstance,
    aligned: &[Vec<usize>],
    opts: &IaOptions,
    mode: WeightMode,
    rng: &mut R,
) -> RunState {
    let cfg = &instance.config;
    let users = cfg.users;
    let d = cfg.streams;

    // aligners[i] = receivers that align transmitter i.
    let mut aligners = vec![Vec::new(); users];
    for (k, a) in aligned.iter().enumerate() {
        for &i in a {
            aligners[i].push(k);
        }
    }
    let power_weight = |k: usize, i: usize| -> f64 {
        (instance.rx_power(k, i) / instance.rx_power(k, k)).max(1.0)
    };
    let weight = |k: usize, i: usize| -> f64 {
        match mode {
            WeightMode::Unit => 1.0,
            WeightMode::NormalizedPower => power_weight(k, i),
        }
    };

    let mut precoders: Vec<CMat> = (0..users)
        .map(|_| random_orthonormal(cfg.tx_antennas, d, rng))
        .collect();
    let mut equalizers: Vec<CMat> = vec![CMat::zeros(cfg.rx_antennas, d); users];

    // Exact power-normalized residual of the current iterate; the convergence
    // criterion of the feasibility solve.
    let normalized_leakage = |u: &[CMat], v: &[CMat]| -> f64 {
        let mut total = 0.0;
        for (k, a) in aligned.iter().enumerate() {
            for &i in a {
                let m = u[k].adjoint() * (&instance.fading[k][i] * &v[i]);
                total += power_weight(k, i) * m.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        total
    };

    let mut history = opts.track_history.then(Vec::new);
    let mut objective = f64::INFINITY;
    let mut converged_leakage = None;
    let mut best = f64::INFINITY;
    let mut last_progress = 0usize;
    let mut iterations = 0usize;

    let zero = Complex64::new(0.0, 0.0);
    let mut t_rx = CMat::zeros(cfg.rx_antennas, d);
    let mut t_tx = CMat::zeros(cfg.tx_antennas, d);
    let mut cov_rx = CMat::zeros(cfg.rx_antennas, cfg.rx_antennas);
    let mut cov_tx = CMat::zeros(cfg.tx_antennas, cfg.tx_antennas);

    for iter in 1..=opts.max_iters {
        iterations = iter;
        // Equalizer half-step.
        let mut leak_u = 0.0;
        for k in 0..users {
            if aligned[k].is_empty() {
                continue;
            }
            cov_rx.fill(zero);
            for &i in &aligned[k] {
                instance.fading[k][i].mul_to(&precoders[i], &mut t_rx);
                accumulate_outer(&mut cov_rx, &t_rx, weight(k, i));
            }
            leak_u += smallest_eigvecs_into(&cov_rx, d, &mut equalizers[k]);
        }
        if let Some(h) = history.as_mut() {
            h.push(leak_u.max(0.0));
        }

        // Precoder half-step.
        let mut leak_v = 0.0;
        for i in 0..users {
            if aligners[i].is_empty() {
                continue;
            }
            cov_tx.fill(zero);
            for &k in &aligners[i] {
                instance.fading[k][i].ad_mul_to(&equalizers[k], &mut t_tx);
                accumulate_outer(&mut cov_tx, &t_tx, weight(k, i));
            }
            leak_v += smallest_eigvecs_into(&cov_tx, d, &mut precoders[i]);
        }
        objective = leak_v.max(0.0);
        if let Some(h) = history.as_mut() {
            h.push(objective);
        }

        match mode {
            WeightMode::Unit => {
                // The unit objective lower-bounds the normalized residual
                // (weights are >= 1), so the exact residual is only worth
                // evaluating once the bound clears the tolerance.
                if objective < opts.tol {
                    let exact = normalized_leakage(&equalizers, &precoders);
                    if exact < opts.tol {
                        converged_leakage = Some(exact);
                        break;
                    }
                }
            }
            WeightMode::NormalizedPower => {
                if objective < opts.tol {
                    converged_leakage = Some(objective);
                    break;
                }
            }
        }

        // Windowed stall exit, only when the caller asked for one: stop once
        // the objective has not improved by a relative `stall_rel` within
        // STALL_PATIENCE iterations. Alternating minimization crosses long
        // near-flat saddles before its terminal geometric phase, so without
        // an explicit rule the run goes the full `max_iters`.
        if let Some(rel) = opts.stall_rel {
            if objective < best * (1.0 - rel) {
                best = objective;
                last_progress = iter;
            } else if iter - last_progress >= STALL_PATIENCE {
                break;
            }
        }
    }

    // Receivers with nothing to null point their frame at the direct link.
    for k in 0..users {
        if aligned[k].is_empty() {
            equalizers[k] = matched_equalizer(&instance.fading[k][k], &precoders[k]);
        }
    }

    let leakage = converged_leakage.unwrap_or_else(|| match mode {
        WeightMode::Unit => normalized_leakage(&equalizers, &precoders),
        WeightMode::NormalizedPower => objective,
    });

    RunState {
        precoders,
        equalizers,
        leakage,
        iterations,
        history,
    }
}

/// Orthonormal receive frame spanning the image of the direct link (QR of
/// `H v`); used where a receiver has no alignment constraints.
fn matched_equalizer(h: &CMat, v: &CMat) -> CMat {
    let image = h * v;
    image.qr().q()
}

fn random_orthonormal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(rows, cols, |_, _| crate::netgen::standard_complex(rng));
    g.qr().q()
}

fn accumulate_outer(cov: &mut CMat, t: &CMat, w: f64) {
    let scale = Complex64::new(w, 0.0);
    let n = t.nrows();
    for r in 0..n {
        for c in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for s in 0..t.ncols() {
                acc += t[(r, s)] * t[(c, s)].conj();
            }
            cov[(r, c)] += scale * acc;
        }
    }
}

/// Write the `d` least-dominant eigenvectors of the Hermitian `cov` into
/// `out` and return the sum of their eigenvalues (the minimized leakage).
///
/// The alternation spends nearly all its time here on 2x2 and 3x3 matrices,
/// so those sizes use closed forms (quadratic / trigonometric characteristic
/// roots with adjugate-based eigenvectors) and fall back to the general
/// solver only near eigenvalue degeneracies.
fn smallest_eigvecs_into(cov: &CMat, d: usize, out: &mut CMat) -> f64 {
    let n = cov.nrows();
    match n {
        1 => {
            out[(0, 0)] = Complex64::new(1.0, 0.0);
            cov[(0, 0)].re
        }
        2 if std::env::var_os("PIAID_GENERIC_EIG").is_none() => eig2_smallest(cov, d, out),
        3 if std::env::var_os("PIAID_GENERIC_EIG").is_none() => match eig3_smallest(cov, d, out) {
            Some(leak) => leak,
            None => smallest_eigvecs_generic(cov, d, out),
        },
        _ => smallest_eigvecs_generic(cov, d, out),
    }
}

fn smallest_eigvecs_generic(cov: &CMat, d: usize, out: &mut CMat) -> f64 {
    let n = cov.nrows();
    let herm = CMat::from_fn(n, n, |r, c| (cov[(r, c)] + cov[(c, r)].conj()) * 0.5);
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });
    let mut leak = 0.0;
    for (dst, &src) in order.iter().take(d).enumerate() {
        out.column_mut(dst).copy_from(&eig.eigenvectors.column(src));
        leak += eig.eigenvalues[src];
    }
    leak
}

fn eig2_smallest(cov: &CMat, d: usize, out: &mut CMat) -> f64 {
    let a = cov[(0, 0)].re;
    let c = cov[(1, 1)].re;
    let b = (cov[(0, 1)] + cov[(1, 0)].conj()) * 0.5;
    let mid = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b.norm_sqr()).sqrt();
    let lo = mid - disc;
    let hi = mid + disc;

    // Null direction of (A - lo I): (b, lo - a) or (lo - c, b*), whichever is
    // better conditioned; a vanishing discriminant means A is (near) scalar.
    let cand1 = (b, Complex64::new(lo - a, 0.0));
    let cand2 = (Complex64::new(lo - c, 0.0), b.conj());
    let n1 = cand1.0.norm_sqr() + cand1.1.norm_sqr();
    let n2 = cand2.0.norm_sqr() + cand2.1.norm_sqr();
    let (x, y, nn) = if n1 >= n2 {
        (cand1.0, cand1.1, n1)
    } else {
        (cand2.0, cand2.1, n2)
    };
    let (x, y) = if nn.sqrt() > 1e-30 + 1e-15 * disc.max(a.abs() + c.abs()) {
        let inv = 1.0 / nn.sqrt();
        (x * inv, y * inv)
    } else {
        (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    };
    out[(0, 0)] = x;
    out[(1, 0)] = y;
    if d == 1 {
        return lo;
    }
    // The orthogonal complement in C^2 is the other eigenvector.
    out[(0, 1)] = -y.conj();
    out[(1, 1)] = x.conj();
    lo + hi
}

/// Closed-form 3x3 Hermitian eigen-pairs; `None` requests the generic
/// fallback when eigenvalues are too degenerate for the adjugate trick.
fn eig3_smallest(cov: &CMat, d: usize, out: &mut CMat) -> Option<f64> {
    let h01 = (cov[(0, 1)] + cov[(1, 0)].conj()) * 0.5;
    let h02 = (cov[(0, 2)] + cov[(2, 0)].conj()) * 0.5;
    let h12 = (cov[(1, 2)] + cov[(2, 1)].conj()) * 0.5;
    let d0 = cov[(0, 0)].re;
    let d1 = cov[(1, 1)].re;
    let d2 = cov[(2, 2)].re;
    let scale = d0.abs() + d1.abs() + d2.abs() + h01.norm() + h02.norm() + h12.norm();

    let q = (d0 + d1 + d2) / 3.0;
    let b00 = d0 - q;
    let b11 = d1 - q;
    let b22 = d2 - q;
    let p2 = (b00 * b00 + b11 * b11 + b22 * b22) / 6.0
        + (h01.norm_sqr() + h02.norm_sqr() + h12.norm_sqr()) / 3.0;
    let p = p2.sqrt();
    if p <= 1e-14 * scale.max(1e-300) {
        // Nearly scalar matrix: any orthonormal frame is eigen.
        for c in 0..d {
            for r in 0..3 {
                out[(r, c)] = Complex64::new(if r == c { 1.0 } else { 0.0 }, 0.0);
            }
        }
        return Some(q * d as f64);
    }
    // det(A - qI), cofactor expansion along row 0; real for Hermitian input.
    let det = b00 * (b11 * b22 - h12.norm_sqr())
        - (h01.conj() * (h01 * b22 - h02 * h12.conj())).re
        + (h02.conj() * (h01 * h12 - h02 * b11)).re;
    let r = (det / (2.0 * p * p * p)).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let lam_max = q + 2.0 * p * phi.cos();
    let lam_min = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let lam_mid = 3.0 * q - lam_max - lam_min;

    // Adjugate eigenvectors lose eps/gap accuracy; near-degenerate spectra go
    // to the generic solver instead.
    let gap_scale = 1e-4 * scale.max(1e-300);
    if d >= 1 && (lam_mid - lam_min) < gap_scale {
        return None;
    }
    if d >= 2 && (lam_max - lam_mid) < gap_scale {
        return None;
    }

    let herm = [
        [Complex64::new(d0, 0.0), h01, h02],
        [h01.conj(), Complex64::new(d1, 0.0), h12],
        [h02.conj(), h12.conj(), Complex64::new(d2, 0.0)],
    ];
    let mut leak = 0.0;
    for (col, lam) in [lam_min, lam_mid].iter().take(d).enumerate() {
        let v = adjugate_null(&herm, *lam, scale)?;
        for rix in 0..3 {
            out[(rix, col)] = v[rix];
        }
        leak += lam;
    }
    if d == 2 {
        // Orthogonality holds analytically; one Gram-Schmidt pass tidies the
        // rounding.
        let dot: Complex64 = (0..3).map(|r| out[(r, 0)].conj() * out[(r, 1)]).sum();
        for r in 0..3 {
            let corr = out[(r, 0)] * dot;
            out[(r, 1)] -= corr;
        }
        let nrm: f64 = (0..3).map(|r| out[(r, 1)].norm_sqr()).sum::<f64>().sqrt();
        if nrm < 1e-8 {
            return None;
        }
        for r in 0..3 {
            out[(r, 1)] /= nrm;
        }
    }
    Some(leak)
}

/// Unit-norm right null vector of (H - lam I) for a 3x3 Hermitian H with a
/// simple eigenvalue lam, read off the largest column of the adjugate.
fn adjugate_null(h: &[[Complex64; 3]; 3], lam: f64, scale: f64) -> Option<[Complex64; 3]> {
    let m = |r: usize, c: usize| -> Complex64 {
        if r == c {
            h[r][c] - Complex64::new(lam, 0.0)
        } else {
            h[r][c]
        }
    };
    let mut best: Option<([Complex64; 3], f64)> = None;
    for col in 0..3 {
        // adj(M) column `col` entries: cofactors C_{col,row}.
        let mut v = [Complex64::new(0.0, 0.0); 3];
        for row in 0..3 {
            let r1 = (col + 1) % 3;
            let r2 = (col + 2) % 3;
            let c1 = (row + 1) % 3;
            let c2 = (row + 2) % 3;
            v[row] = m(r1, c1) * m(r2, c2) - m(r1, c2) * m(r2, c1);
        }
        let nn = v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if best.as_ref().map_or(true, |(_, bn)| nn > *bn) {
            best = Some((v, nn));
        }
    }
    let (v, nn) = best.expect("three candidate columns");
    let nrm = nn.sqrt();
    if nrm <= 1e-24 * scale * scale {
        return None;
    }
    let inv = 1.0 / nrm;
    Some([v[0] * inv, v[1] * inv, v[2] * inv])
}

/// Raw (unweighted) aligned-subspace leakage `Σ_k Σ_{i∈A_k} ‖U_k†H_kiV_i‖²`;
/// independent check of a solution against its alignment set.
pub fn raw_leakage(solution: &IaSolution, instance: &NetworkInstance, pia_set: &PiaSet) -> f64 {
    let mut total = 0.0;
    for (k, a) in pia_set.aligned.iter().enumerate() {
        for &i in a {
            let m =
                solution.equalizers[k].adjoint() * &instance.fading[k][i] * &solution.precoders[i];
            total += m.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    total
}
