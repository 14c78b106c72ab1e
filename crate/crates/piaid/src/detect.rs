//! Two-stage per-stream receivers.
//!
//! After the decorrelator, one data stream sees a scalar observation
//! `y = g·x + Σ_q g_q·x_q + ζ + n`: desired symbol `x` with gain `g`, the
//! strong residual interferers `q` (received at least as strongly as the
//! desired link), weak residual interference `ζ` and noise. Stage I detects
//! the *aggregate* strong interference from its finite constellation — either
//! exhaustively over all symbol combinations or with the SDR successive
//! detector — and subtracts it; stage II then slices the desired QPSK symbol
//! with the minimum-distance sign rule.

use crate::sdp::{self, SdpSolution};
use crate::{Complex64, RMat};
use thiserror::Error;

/// Unit-energy QPSK alphabet, in the fixed enumeration order used wherever
/// symbol combinations are enumerated or ties broken.
pub const QPSK_ALPHABET: [Complex64; 4] = {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    [
        Complex64::new(a, a),
        Complex64::new(a, -a),
        Complex64::new(-a, a),
        Complex64::new(-a, -a),
    ]
};

/// Index of the alphabet point nearest to `z` (sign rule; exact for alphabet
/// points).
#[inline]
pub fn qpsk_index(z: Complex64) -> usize {
    match (z.re >= 0.0, z.im >= 0.0) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

/// Largest number of strong-interference symbol slots the exhaustive stage-I
/// detector will enumerate (4^slots candidates).
pub const MAX_EXHAUSTIVE_SLOTS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("{0} strong interference slots exceed the exhaustive enumeration cap {MAX_EXHAUSTIVE_SLOTS}")]
    TooManyInterferers(usize),
    #[error(transparent)]
    Sdp(#[from] sdp::SdpError),
}

/// Identity of one interfering data stream: user index and stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotId {
    pub user: usize,
    pub stream: usize,
}

/// One strong interferer term `gain · x_slot` in the post-decorrelator model.
/// The gain carries the full `sqrt(P_i L_ki) · H_ki^{ld}` factor.
#[derive(Debug, Clone, Copy)]
pub struct StrongInterferer {
    pub gain: Complex64,
    pub slot: SlotId,
}

/// Post-decorrelator observation of one data stream.
#[derive(Debug, Clone)]
pub struct ReceivedStream {
    /// Scalar observation `y_k^l`.
    pub y: Complex64,
    /// Desired-symbol gain `sqrt(P_k L_kk) · H_kk^{ll}`.
    pub direct_gain: Complex64,
    /// Strong residual interferers, in deterministic slot order.
    pub strong: Vec<StrongInterferer>,
    /// Total receive power of the weak residual interferers (diagnostic).
    pub weak_power: f64,
}

/// Stage-I algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage1Method {
    Exhaustive,
    SdrSid,
}

#[derive(Debug, Clone)]
pub struct DetectorOutcome {
    /// Detected aggregate strong interference (0 when stage I is skipped).
    pub interference_estimate: Complex64,
    /// Detected QPSK symbol for the desired stream.
    pub symbol: Complex64,
    /// False when there was no strong interference to detect.
    pub stage1_used: bool,
    pub method: Stage1Method,
}

/// Stage I by exhaustive nearest-neighbor search: the estimate is the member
/// of `{Σ_q gain_q · s_q : s ∈ alphabet^slots}` closest to `y`. Ties keep the
/// first candidate in lexicographic symbol order.
pub fn stage1_exhaustive(stream: &ReceivedStream) -> Result<Complex64, DetectError> {
    let slots = stream.strong.len();
    if slots == 0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if slots > MAX_EXHAUSTIVE_SLOTS {
        return Err(DetectError::TooManyInterferers(slots));
    }
    let combos = 4usize.pow(slots as u32);
    let mut best = Complex64::new(0.0, 0.0);
    let mut best_dist = f64::INFINITY;
    for combo in 0..combos {
        let mut candidate = Complex64::new(0.0, 0.0);
        let mut digits = combo;
        // Slot 0 owns the most significant digit so candidates enumerate in
        // lexicographic symbol order.
        for q in (0..slots).rev() {
            candidate += stream.strong[q].gain * QPSK_ALPHABET[digits % 4];
            digits /= 4;
        }
        let dist = (stream.y - candidate).norm_sqr();
        if dist < best_dist {
            best_dist = dist;
            best = candidate;
        }
    }
    Ok(best)
}

/// Stage II minimum-distance QPSK detection of the desired symbol after the
/// stage-I estimate is subtracted. The sign rule maps boundary zeros to the
/// positive half-plane.
pub fn stage2_min_distance(stream: &ReceivedStream, interference_estimate: Complex64) -> Complex64 {
    let ratio = (stream.y - interference_estimate) / stream.direct_gain;
    QPSK_ALPHABET[qpsk_index(ratio)]
}

/// Strategy for reading a binary candidate out of a non-rank-one relaxation
/// solution. The shipped implementation scores the dominant eigenvectors;
/// randomized rounding or rank-1 approximation would slot in here.
pub trait CandidateExtraction {
    /// Produce the `±1` vector (length n−1) used as the detector decision.
    fn extract(&self, solution: &SdpSolution, w: &RMat) -> Vec<f64>;
}

/// Dominant-eigenvector extraction: take the `λ = (n−1)/2` leading
/// eigenvectors of the solution, map each to a sign vector, and keep the one
/// with the smallest quadratic cost. Ties keep the earlier eigenvector.
#[derive(Debug, Clone, Copy, Default)]
pub struct DominantEigenvectors;

impl CandidateExtraction for DominantEigenvectors {
    fn extract(&self, solution: &SdpSolution, w: &RMat) -> Vec<f64> {
        let n = solution.s.nrows();
        let lambda = (n - 1) / 2;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..lambda.min(n) {
            let col = solution.eigenvectors.column(e);
            let x = sdp::sign_pattern(col.as_slice(), n - 1);
            let mut s = x.clone();
            s.push(1.0);
            let mut cost = 0.0;
            for r in 0..n {
                let mut row = 0.0;
                for c in 0..n {
                    row += w[(r, c)] * s[c];
                }
                cost += s[r] * row;
            }
            if best.as_ref().map_or(true, |(b, _)| cost < *b) {
                best = Some((cost, x));
            }
        }
        best.expect("at least one eigenvector candidate").1
    }
}

#[derive(Debug, Clone)]
pub struct SdrSidOptions {
    pub gap_tol: f64,
    pub rank1_tol: f64,
}

impl Default for SdrSidOptions {
    fn default() -> Self {
        Self {
            gap_tol: sdp::DEFAULT_GAP_TOL,
            rank1_tol: sdp::DEFAULT_RANK1_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdrSidOutcome {
    /// Detected aggregate strong interference `Σ gain_q · x̂_q`.
    pub interference_estimate: Complex64,
    /// Committed symbols in commit order.
    pub committed: Vec<(SlotId, Complex64)>,
    /// Number of relaxations solved.
    pub sdp_solves: usize,
    /// True when a rank-one solution ended the loop early.
    pub rank1_shortcut: bool,
}

/// SDR successive interference detection.
///
/// Each pass relaxes the binary least-squares detection of the active symbols
/// to an SDP. A rank-one solution decides every active symbol at once;
/// otherwise the extraction strategy picks a sign vector, the active symbol
/// with the largest channel magnitude is committed, cancelled from the
/// observation (with its full power-weighted gain), and the loop repeats on
/// the shrunk active set.
pub fn sdr_sid<E: CandidateExtraction>(
    stream: &ReceivedStream,
    opts: &SdrSidOptions,
    extraction: &E,
) -> Result<SdrSidOutcome, DetectError> {
    let total = stream.strong.len();
    let mut outcome = SdrSidOutcome {
        interference_estimate: Complex64::new(0.0, 0.0),
        committed: Vec::with_capacity(total),
        sdp_solves: 0,
        rank1_shortcut: false,
    };
    if total == 0 {
        return Ok(outcome);
    }

    // Active-set state; symbol scale is folded into the channel row so the
    // binary variables are exactly ±1.
    let mut active: Vec<usize> = (0..total).collect();
    let mut y = stream.y;
    let scale = std::f64::consts::FRAC_1_SQRT_2;

    while !active.is_empty() {
        let lambda = active.len();
        let h: Vec<Complex64> = active
            .iter()
            .map(|&q| stream.strong[q].gain * scale)
            .collect();
        let problem = sdp::assemble_w(&h, y);
        let solution = sdp::solve(&problem, opts.gap_tol)?;
        outcome.sdp_solves += 1;

        let commit_all = sdp::extract_rank1(&solution, opts.rank1_tol);
        let x_r = match &commit_all {
            Some(x) => x.clone(),
            None => extraction.extract(&solution, &problem.w),
        };
        debug_assert_eq!(x_r.len(), 2 * lambda);

        let slot_symbol = |pos: usize| -> Complex64 {
            Complex64::new(x_r[pos] * scale, x_r[lambda + pos] * scale)
        };

        if commit_all.is_some() {
            outcome.rank1_shortcut = true;
            for (pos, &q) in active.iter().enumerate() {
                let sym = slot_symbol(pos);
                outcome.interference_estimate += stream.strong[q].gain * sym;
                outcome.committed.push((stream.strong[q].slot, sym));
            }
            break;
        }

        // Commit the active symbol with the largest channel magnitude; the
        // first index wins ties.
        let (pos, &q) = active
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| {
                stream.strong[a]
                    .gain
                    .norm_sqr()
                    .total_cmp(&stream.strong[b].gain.norm_sqr())
            })
            .expect("active set non-empty");
        let sym = slot_symbol(pos);
        outcome.interference_estimate += stream.strong[q].gain * sym;
        outcome.committed.push((stream.strong[q].slot, sym));
        y -= stream.strong[q].gain * sym;
        active.remove(pos);
    }
    Ok(outcome)
}

/// Run the selected stage-I method followed by stage-II minimum-distance
/// detection. With no strong interferers this degenerates to conventional
/// one-stage detection.
pub fn detect_stream(
    stream: &ReceivedStream,
    method: Stage1Method,
) -> Result<DetectorOutcome, DetectError> {
    let stage1_used = !stream.strong.is_empty();
    let interference_estimate = if !stage1_used {
        Complex64::new(0.0, 0.0)
    } else {
        match method {
            Stage1Method::Exhaustive => stage1_exhaustive(stream)?,
            Stage1Method::SdrSid => {
                sdr_sid(stream, &SdrSidOptions::default(), &DominantEigenvectors)?
                    .interference_estimate
            }
        }
    };
    let symbol = stage2_min_distance(stream, interference_estimate);
    Ok(DetectorOutcome {
        interference_estimate,
        symbol,
        stage1_used,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::standard_complex;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

    fn stream(
        y: Complex64,
        direct: Complex64,
        strong: Vec<StrongInterferer>,
    ) -> ReceivedStream {
        ReceivedStream {
            y,
            direct_gain: direct,
            strong,
            weak_power: 0.0,
        }
    }

    fn slot(user: usize) -> SlotId {
        SlotId { user, stream: 0 }
    }

    #[test]
    fn exhaustive_empty_strong_set_returns_zero() {
        let s = stream(
            Complex64::new(0.3, -0.2),
            Complex64::new(1.0, 0.0),
            Vec::new(),
        );
        assert_eq!(stage1_exhaustive(&s).unwrap(), Complex64::new(0.0, 0.0));
        let out = detect_stream(&s, Stage1Method::Exhaustive).unwrap();
        assert!(!out.stage1_used);
    }

    #[test]
    fn exhaustive_exact_corner() {
        let g = Complex64::new(1.3, -0.4);
        let sent = g * QPSK_ALPHABET[0];
        let s = stream(sent, Complex64::new(1.0, 0.0), vec![StrongInterferer { gain: g, slot: slot(1) }]);
        assert!((stage1_exhaustive(&s).unwrap() - sent).norm() < 1e-15);
    }

    #[test]
    fn exhaustive_cap_enforced() {
        let strong: Vec<StrongInterferer> = (0..11)
            .map(|u| StrongInterferer { gain: Complex64::new(1.0, 0.0), slot: slot(u) })
            .collect();
        let s = stream(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), strong);
        assert!(matches!(
            stage1_exhaustive(&s),
            Err(DetectError::TooManyInterferers(11))
        ));
    }

    #[test]
    fn exhaustive_attains_candidate_minimum() {
        // Independent check: the returned point is in the candidate set and
        // no enumerated candidate is closer.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let gains: Vec<Complex64> = (0..2).map(|_| standard_complex(&mut rng) * 3.0).collect();
            let y = standard_complex(&mut rng) * 2.0;
            let s = stream(
                y,
                Complex64::new(1.0, 0.0),
                gains
                    .iter()
                    .enumerate()
                    .map(|(u, &g)| StrongInterferer { gain: g, slot: slot(u) })
                    .collect(),
            );
            let got = stage1_exhaustive(&s).unwrap();
            let mut best = f64::INFINITY;
            let mut in_set = false;
            for a in 0..4 {
                for b in 0..4 {
                    let cand = gains[0] * QPSK_ALPHABET[a] + gains[1] * QPSK_ALPHABET[b];
                    best = best.min((y - cand).norm_sqr());
                    if (cand - got).norm() < 1e-12 {
                        in_set = true;
                    }
                }
            }
            assert!(in_set, "estimate must be an enumerated candidate");
            assert!((y - got).norm_sqr() <= best + 1e-12);
        }
    }

    #[test]
    fn two_interferers_recovered_at_high_power() {
        // Strong interference far above the (absent) desired signal: the
        // exhaustive detector recovers the exact aggregate almost surely.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 10_000;
        let mut hits = 0;
        let strong_gain = |rng: &mut ChaCha8Rng| loop {
            let g = standard_complex(rng) * 30.0;
            if g.norm() >= 3.0 {
                return g;
            }
        };
        for _ in 0..trials {
            let gains: Vec<Complex64> = (0..2).map(|_| strong_gain(&mut rng)).collect();
            let truth: Complex64 = gains
                .iter()
                .map(|g| g * QPSK_ALPHABET[rng.random_range(0..4)])
                .sum();
            let noise = standard_complex(&mut rng) * 0.1;
            let s = stream(
                truth + noise,
                Complex64::new(1.0, 0.0),
                gains
                    .iter()
                    .enumerate()
                    .map(|(u, &g)| StrongInterferer { gain: g, slot: slot(u) })
                    .collect(),
            );
            if (stage1_exhaustive(&s).unwrap() - truth).norm() < 1e-9 {
                hits += 1;
            }
        }
        assert!(hits as f64 / trials as f64 >= 0.999, "hits {hits}");
    }

    #[test]
    fn stage2_sign_rule_examples() {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let s = stream(
            Complex64::new(0.3, 0.4),
            Complex64::new(1.0, 0.0),
            Vec::new(),
        );
        assert_eq!(
            stage2_min_distance(&s, Complex64::new(0.0, 0.0)),
            Complex64::new(a, a)
        );
        let s = stream(
            Complex64::new(-0.1, -2.0),
            Complex64::new(1.0, 0.0),
            Vec::new(),
        );
        assert_eq!(
            stage2_min_distance(&s, Complex64::new(0.0, 0.0)),
            Complex64::new(-a, -a)
        );
        // Boundary: zero real part slices to the positive branch.
        let s = stream(
            Complex64::new(0.0, 1.0),
            Complex64::new(1.0, 0.0),
            Vec::new(),
        );
        assert_eq!(
            stage2_min_distance(&s, Complex64::new(0.0, 0.0)),
            Complex64::new(a, a)
        );
    }

    #[test]
    fn sdr_matches_exhaustive_on_strong_single_interferer() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let opts = SdrSidOptions::default();
        let trials = 10_000;
        let mut agree = 0;
        for _ in 0..trials {
            // Interference ~20 dB above the signal-plus-noise level.
            let g = standard_complex(&mut rng) * 10.0;
            let interference = g * QPSK_ALPHABET[rng.random_range(0..4)];
            let signal = standard_complex(&mut rng) * QPSK_ALPHABET[rng.random_range(0..4)];
            let noise = standard_complex(&mut rng);
            let s = stream(
                interference + signal + noise,
                Complex64::new(1.0, 0.0),
                vec![StrongInterferer { gain: g, slot: slot(1) }],
            );
            let ex = stage1_exhaustive(&s).unwrap();
            let sd = sdr_sid(&s, &opts, &DominantEigenvectors).unwrap();
            if (ex - sd.interference_estimate).norm() < 1e-9 {
                agree += 1;
            }
            assert!(sd.sdp_solves <= s.strong.len());
        }
        assert!(agree as f64 / trials as f64 >= 0.99, "agree {agree}");
    }

    #[test]
    fn sdr_commits_larger_gain_first() {
        // Two interferers with |g2| > |g1| and a noisy observation that keeps
        // the relaxation away from rank one: the first commit must be slot 2.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let opts = SdrSidOptions::default();
        let mut checked = 0;
        for _ in 0..200 {
            let g1 = standard_complex(&mut rng) * 2.0;
            let g2 = standard_complex(&mut rng) * 6.0;
            if g2.norm() <= g1.norm() {
                continue;
            }
            let x1 = QPSK_ALPHABET[rng.random_range(0..4)];
            let x2 = QPSK_ALPHABET[rng.random_range(0..4)];
            let noise = standard_complex(&mut rng) * 1.5;
            let s = stream(
                g1 * x1 + g2 * x2 + noise,
                Complex64::new(1.0, 0.0),
                vec![
                    StrongInterferer { gain: g1, slot: slot(1) },
                    StrongInterferer { gain: g2, slot: slot(2) },
                ],
            );
            let out = sdr_sid(&s, &opts, &DominantEigenvectors).unwrap();
            // Two solves mean the first relaxation was not rank one, so a
            // single symbol was committed and the loop re-solved.
            if out.sdp_solves != 2 {
                continue;
            }
            checked += 1;
            assert_eq!(out.committed[0].0.user, 2, "largest gain commits first");
            assert_eq!(out.committed.len(), 2);
        }
        assert!(checked > 20, "need two-pass cases, got {checked}");
    }

    #[test]
    fn sdr_rank1_shortcut_on_clean_observation() {
        // Noise-free observation with one dominant interferer: the first
        // relaxation is rank one and the loop ends after a single solve.
        let g = Complex64::new(5.0, 1.0);
        let x = QPSK_ALPHABET[2];
        let s = stream(
            g * x,
            Complex64::new(1.0, 0.0),
            vec![StrongInterferer { gain: g, slot: slot(1) }],
        );
        let out = sdr_sid(&s, &SdrSidOptions::default(), &DominantEigenvectors).unwrap();
        assert!(out.rank1_shortcut);
        assert_eq!(out.sdp_solves, 1);
        assert!((out.interference_estimate - g * x).norm() < 1e-6);
        assert_eq!(out.committed.len(), 1);
        assert!((out.committed[0].1 - x).norm() < 1e-12);
    }

    #[test]
    fn detect_stream_clean_channel_recovers_symbol() {
        for &sym in &QPSK_ALPHABET {
            let g = Complex64::new(0.7, -1.1);
            let s = stream(g * sym, g, Vec::new());
            let out = detect_stream(&s, Stage1Method::Exhaustive).unwrap();
            assert_eq!(out.symbol, sym);
            assert!(!out.stage1_used);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn stage2_always_returns_alphabet_point(re in -1e6f64..1e6, im in -1e6f64..1e6,
                                                 gre in -10f64..10.0, gim in -10f64..10.0) {
            prop_assume!(gre.abs() + gim.abs() > 1e-3);
            let s = stream(
                Complex64::new(re, im),
                Complex64::new(gre, gim),
                Vec::new(),
            );
            let sym = stage2_min_distance(&s, Complex64::new(0.0, 0.0));
            prop_assert!(QPSK_ALPHABET.contains(&sym));
        }

        #[test]
        fn detectors_are_scale_equivariant(seed in 0u64..100_000, sre in -3f64..3.0, sim in -3f64..3.0) {
            prop_assume!(sre.abs() + sim.abs() > 1e-2);
            let scale = Complex64::new(sre, sim);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gains: Vec<Complex64> = (0..2).map(|_| standard_complex(&mut rng) * 2.0).collect();
            let direct = standard_complex(&mut rng);
            prop_assume!(direct.norm() > 1e-3);
            let y = standard_complex(&mut rng) * 3.0;
            let base = stream(
                y,
                direct,
                gains.iter().enumerate().map(|(u, &g)| StrongInterferer { gain: g, slot: slot(u) }).collect(),
            );
            let scaled = stream(
                y * scale,
                direct * scale,
                gains.iter().enumerate().map(|(u, &g)| StrongInterferer { gain: g * scale, slot: slot(u) }).collect(),
            );
            for method in [Stage1Method::Exhaustive, Stage1Method::SdrSid] {
                let a = detect_stream(&base, method).unwrap();
                let b = detect_stream(&scaled, method).unwrap();
                prop_assert_eq!(a.symbol, b.symbol);
            }
        }
    }
}
