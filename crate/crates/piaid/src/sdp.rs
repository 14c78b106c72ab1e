//! Small dense semidefinite programs of the MAXCUT form
//! `min tr(W S)  s.t.  diag(S) = 1, S ⪰ 0`,
//! solved by a primal-dual interior-point method.
//!
//! These arise from relaxing a binary least-squares detection problem: with
//! `s = [x_R; 1]`, `x_R ∈ {±1}^(n−1)`, the residual satisfies
//! `sᵀ W s = ‖y_R − H_R x_R‖² − ‖y_R‖²`, so the SDP optimum lower-bounds the
//! exact binary minimum and is tight whenever the optimal `S` is rank one.
//!
//! Problems here are tiny (n = 2DQ+1, typically below ~21), so everything is
//! dense and a direct factorization per iteration is the fastest option.
//!
//! The dual is `max 1ᵀy  s.t.  Z = W − Diag(y) ⪰ 0`. Iterates keep
//! `diag(S) = 1` and the dual slack definition exact, so the duality gap is
//! `tr(Z S)` throughout. Search directions follow the standard
//! linearization of `Z S = σμ I` with a Mehrotra-style centering parameter.

use crate::{Complex64, RMat, RVec};
use nalgebra::{Cholesky, SymmetricEigen};
use thiserror::Error;

/// Default relative duality-gap tolerance for [`solve`].
pub const DEFAULT_GAP_TOL: f64 = 1e-7;
/// Default eigenvalue-ratio threshold below which a solution counts as rank
/// one for [`extract_rank1`].
pub const DEFAULT_RANK1_TOL: f64 = 1e-6;

const MAX_ITERS: usize = 200;
const MAX_DIM: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("dimension {0} outside supported dense range 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("cost matrix must be symmetric")]
    NotSymmetric,
    #[error("interior point iteration failed to reach gap {gap_tol:e} (last relative gap {last_gap:e})")]
    NumericalFailure { gap_tol: f64, last_gap: f64 },
}

/// A `min tr(WS), diag(S)=1, S ⪰ 0` problem instance.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub w: RMat,
}

impl SdpProblem {
    pub fn new(w: RMat) -> Result<Self, SdpError> {
        let n = w.nrows();
        if n == 0 || n > MAX_DIM || w.ncols() != n {
            return Err(SdpError::BadDimension(n));
        }
        let scale = w.amax().max(1.0);
        for r in 0..n {
            for c in (r + 1)..n {
                if (w[(r, c)] - w[(c, r)]).abs() > 1e-9 * scale {
                    return Err(SdpError::NotSymmetric);
                }
            }
        }
        Ok(Self { w })
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }
}

/// Assemble the detection cost matrix from a complex channel row `h_q` and
/// observation `y`.
///
/// The complex model `y = h_qᵀ x + n` with `x ∈ {±1} + j{±1}` (any symbol
/// scale must already be folded into `h_q`) expands into the real form
/// `y_R = H_R x_R + n_R` with `H_R = [Re h ᵀ, −Im h ᵀ; Im h ᵀ, Re h ᵀ]`, and
/// the cost matrix is `W = [H_RᵀH_R, −H_Rᵀy_R; −y_RᵀH_R, 0]`.
pub fn assemble_w(h_q: &[Complex64], y: Complex64) -> SdpProblem {
    let m = h_q.len();
    assert!(m >= 1, "need at least one interference symbol");
    let mut h_r = RMat::zeros(2, 2 * m);
    for (j, h) in h_q.iter().enumerate() {
        h_r[(0, j)] = h.re;
        h_r[(0, m + j)] = -h.im;
        h_r[(1, j)] = h.im;
        h_r[(1, m + j)] = h.re;
    }
    let y_r = RVec::from_vec(vec![y.re, y.im]);
    let n = 2 * m + 1;
    let mut w = RMat::zeros(n, n);
    let gram = h_r.transpose() * &h_r;
    let coupling = h_r.transpose() * &y_r;
    w.view_mut((0, 0), (2 * m, 2 * m)).copy_from(&gram);
    for j in 0..2 * m {
        w[(j, n - 1)] = -coupling[j];
        w[(n - 1, j)] = -coupling[j];
    }
    SdpProblem { w }
}

/// Solved SDP with its eigendecomposition (descending eigenvalues, sign of
/// each eigenvector normalized so its largest-magnitude entry is positive).
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub s: RMat,
    /// `tr(W S)` of the returned primal solution.
    pub objective: f64,
    /// `1ᵀ y` of the dual solution.
    pub dual_objective: f64,
    /// Relative duality gap `tr(ZS) / (1 + |primal| + |dual|)`.
    pub duality_gap: f64,
    pub eigenvalues: RVec,
    pub eigenvectors: RMat,
    pub iterations: usize,
}

/// Solve `min tr(WS), diag(S)=1, S ⪰ 0` to the given relative duality gap.
///
/// The cost matrix is normalized to unit maximum entry internally — the
/// optimal `S` does not depend on a positive scaling of `W`, and receiver
/// gains squared into `W` can span enormous ranges — and the objective is
/// scaled back on return.
pub fn solve(problem: &SdpProblem, gap_tol: f64) -> Result<SdpSolution, SdpError> {
    let w_scale = problem.w.amax();
    if w_scale > 0.0 && w_scale.is_finite() {
        let scaled = SdpProblem {
            w: &problem.w / w_scale,
        };
        let mut sol = solve_normalized(&scaled, gap_tol)?;
        sol.objective *= w_scale;
        sol.dual_objective *= w_scale;
        Ok(sol)
    } else {
        solve_normalized(problem, gap_tol)
    }
}

fn solve_normalized(problem: &SdpProblem, gap_tol: f64) -> Result<SdpSolution, SdpError> {
    let n = problem.dim();
    let w = &problem.w;
    if n == 1 {
        // S = [1] is the only feasible point.
        let s = RMat::from_element(1, 1, 1.0);
        return Ok(finish(w, s, w[(0, 0)], 0.0, 0));
    }

    let mut s = RMat::identity(n, n);
    // Strictly diagonally dominant start keeps Z = W − Diag(y) positive definite.
    let mut y = RVec::from_fn(n, |i, _| {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)].abs()).sum();
        w[(i, i)] - off - 1.0
    });
    let mut z = dual_slack(w, &y);
    let mut last_gap = f64::INFINITY;

    for iter in 0..MAX_ITERS {
        let gap = frob_inner(&z, &s);
        let primal = frob_inner(w, &s);
        let dual = y.sum();
        let rel_gap = gap / (1.0 + primal.abs() + dual.abs());
        last_gap = rel_gap;
        if rel_gap <= gap_tol && gap >= -gap_tol {
            return Ok(finish(w, s, primal, rel_gap.max(0.0), iter));
        }

        let mu = gap / n as f64;
        let Some(chol_z) = Cholesky::new(z.clone()) else {
            break;
        };
        let z_inv = chol_z.inverse();
        // Schur-product system matrix for Δy: M = Z^{-1} ∘ S (positive definite).
        let m_mat = z_inv.component_mul(&s);
        let Some(chol_m) = Cholesky::new(m_mat) else {
            break;
        };

        let direction = |sigma: f64| -> (RVec, RMat) {
            let rhs = RVec::from_fn(n, |i, _| 1.0 - sigma * mu * z_inv[(i, i)]);
            let dy = chol_m.solve(&rhs);
            // ΔS = σμ Z^{-1} − S + Z^{-1} Diag(Δy) S, symmetrized.
            let mut zd = z_inv.clone();
            for c in 0..n {
                for r in 0..n {
                    zd[(r, c)] *= dy[c];
                }
            }
            let raw = &z_inv * (sigma * mu) - &s + zd * &s;
            let ds = (&raw + raw.transpose()) * 0.5;
            (dy, ds)
        };

        // Predictor to size the centering parameter.
        let (dy_aff, ds_aff) = direction(0.0);
        let dz_aff = RMat::from_fn(n, n, |r, c| if r == c { -dy_aff[r] } else { 0.0 });
        let ap_aff = max_psd_step(&s, &ds_aff);
        let ad_aff = max_psd_step(&z, &dz_aff);
        let gap_aff = frob_inner(&(&z + &dz_aff * ad_aff), &(&s + &ds_aff * ap_aff));
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3).max(1e-6);

        let (dy, ds) = direction(sigma);
        let dz = RMat::from_fn(n, n, |r, c| if r == c { -dy[r] } else { 0.0 });
        let ap = 0.95 * max_psd_step(&s, &ds);
        let ad = 0.95 * max_psd_step(&z, &dz);
        if ap <= 1e-14 && ad <= 1e-14 {
            break;
        }
        s += &ds * ap.min(1.0);
        y += &dy * ad.min(1.0);
        z = dual_slack(w, &y);
    }

    Err(SdpError::NumericalFailure { gap_tol, last_gap })
}

/// Recover the binary vector when the solution is (numerically) rank one.
///
/// Returns the sign pattern of the dominant eigenvector's first n−1 entries,
/// normalized by its last entry so the answer is invariant to the arbitrary
/// overall sign of an eigenvector. `None` when the second eigenvalue is not
/// below `rank1_tol` times the first.
pub fn extract_rank1(solution: &SdpSolution, rank1_tol: f64) -> Option<Vec<f64>> {
    let n = solution.s.nrows();
    if n < 2 {
        return Some(Vec::new());
    }
    let l1 = solution.eigenvalues[0];
    let l2 = solution.eigenvalues[1];
    if l1 <= 0.0 || l2 / l1 >= rank1_tol {
        return None;
    }
    let r = solution.eigenvectors.column(0);
    let last = r[n - 1];
    if last.abs() < 1e-12 {
        return None;
    }
    Some(sign_pattern(r.as_slice(), n - 1))
}

/// Sign rule shared by the rank-one extraction and the dominant-eigenvector
/// candidates: entry p maps to +1 iff `r[p] / r[last] >= 0`.
pub(crate) fn sign_pattern(r: &[f64], len: usize) -> Vec<f64> {
    let last_nonneg = r[r.len() - 1] >= 0.0;
    (0..len)
        .map(|p| {
            let agree = (r[p] >= 0.0) == last_nonneg;
            if agree {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

fn dual_slack(w: &RMat, y: &RVec) -> RMat {
    let mut z = w.clone();
    for i in 0..w.nrows() {
        z[(i, i)] -= y[i];
    }
    z
}

fn frob_inner(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest step α (capped at 1) keeping `P + α D` positive definite, found by
/// backtracking on Cholesky feasibility.
fn max_psd_step(p: &RMat, d: &RMat) -> f64 {
    let mut alpha = 1.0;
    for _ in 0..60 {
        if Cholesky::new(p + d * alpha).is_some() {
            return alpha;
        }
        alpha *= 0.75;
    }
    0.0
}

fn finish(w: &RMat, s: RMat, objective: f64, rel_gap: f64, iterations: usize) -> SdpSolution {
    let n = s.nrows();
    let eig = SymmetricEigen::new(s.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = RVec::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let mut eigenvectors = RMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        // Deterministic sign: largest-magnitude entry positive.
        let lead = col
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| {
                a.abs()
                    .total_cmp(&b.abs())
                    .then_with(|| ib.cmp(ia))
            })
            .map(|(_, &v)| v)
            .unwrap_or(1.0);
        let flip = if lead < 0.0 { -1.0 } else { 1.0 };
        eigenvectors.column_mut(dst).copy_from(&(col * flip));
    }
    let dual_objective = objective - rel_gap * (1.0 + objective.abs());
    let _ = w;
    SdpSolution {
        s,
        objective,
        dual_objective,
        duality_gap: rel_gap,
        eigenvalues,
        eigenvectors,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

    fn random_symmetric(n: usize, rng: &mut impl Rng) -> RMat {
        let mut w = RMat::zeros(n, n);
        for r in 0..n {
            for c in r..n {
                let v = rng.random::<f64>() * 2.0 - 1.0;
                w[(r, c)] = v;
                w[(c, r)] = v;
            }
        }
        w
    }

    fn binary_minimum(w: &RMat) -> f64 {
        let n = w.nrows();
        let mut best = f64::INFINITY;
        for bits in 0..(1u32 << n) {
            let s: Vec<f64> = (0..n)
                .map(|i| if bits & (1 << i) != 0 { 1.0 } else { -1.0 })
                .collect();
            let mut v = 0.0;
            for r in 0..n {
                for c in 0..n {
                    v += s[r] * w[(r, c)] * s[c];
                }
            }
            best = best.min(v);
        }
        best
    }

    fn check_feasible(sol: &SdpSolution) {
        let n = sol.s.nrows();
        for i in 0..n {
            assert!((sol.s[(i, i)] - 1.0).abs() < 1e-7, "diag {}", sol.s[(i, i)]);
        }
        let min_eig = sol.eigenvalues[n - 1];
        assert!(min_eig >= -1e-8, "min eigenvalue {min_eig}");
    }

    #[test]
    fn assemble_single_tap_zero_observation() {
        let p = assemble_w(&[Complex64::new(1.0, 0.0)], Complex64::new(0.0, 0.0));
        let expect = RMat::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.w, expect);
    }

    #[test]
    fn assemble_quadratic_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let m = 2;
            let h: Vec<Complex64> = (0..m)
                .map(|_| crate::netgen::standard_complex(&mut rng))
                .collect();
            let y = crate::netgen::standard_complex(&mut rng);
            let p = assemble_w(&h, y);
            for bits in 0..(1u32 << (2 * m)) {
                let xr: Vec<f64> = (0..2 * m)
                    .map(|i| if bits & (1 << i) != 0 { 1.0 } else { -1.0 })
                    .collect();
                let mut s = xr.clone();
                s.push(1.0);
                let mut quad = 0.0;
                for r in 0..2 * m + 1 {
                    for c in 0..2 * m + 1 {
                        quad += s[r] * p.w[(r, c)] * s[c];
                    }
                }
                let x_c: Vec<Complex64> = (0..m)
                    .map(|j| Complex64::new(xr[j], xr[m + j]))
                    .collect();
                let resid = y - h.iter().zip(&x_c).map(|(a, b)| a * b).sum::<Complex64>();
                let expect = resid.norm_sqr() - y.norm_sqr();
                assert!(
                    (quad - expect).abs() < 1e-10,
                    "identity violated: {quad} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn assemble_argmin_matches_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let h: Vec<Complex64> = (0..2)
                .map(|_| crate::netgen::standard_complex(&mut rng))
                .collect();
            let y = crate::netgen::standard_complex(&mut rng) * 2.0;
            let p = assemble_w(&h, y);
            let mut best_quad = (f64::INFINITY, 0u32);
            let mut best_ls = (f64::INFINITY, 0u32);
            for bits in 0..16u32 {
                let xr: Vec<f64> = (0..4)
                    .map(|i| if bits & (1 << i) != 0 { 1.0 } else { -1.0 })
                    .collect();
                let mut s = xr.clone();
                s.push(1.0);
                let mut quad = 0.0;
                for r in 0..5 {
                    for c in 0..5 {
                        quad += s[r] * p.w[(r, c)] * s[c];
                    }
                }
                let x_c = [
                    Complex64::new(xr[0], xr[2]),
                    Complex64::new(xr[1], xr[3]),
                ];
                let resid = (y - h[0] * x_c[0] - h[1] * x_c[1]).norm();
                if quad < best_quad.0 {
                    best_quad = (quad, bits);
                }
                if resid < best_ls.0 {
                    best_ls = (resid, bits);
                }
            }
            assert_eq!(best_quad.1, best_ls.1);
        }
    }

    #[test]
    fn zero_cost_solves_to_identity_objective() {
        let p = SdpProblem::new(RMat::zeros(4, 4)).unwrap();
        let sol = solve(&p, 1e-7).unwrap();
        assert!(sol.objective.abs() < 1e-7);
        check_feasible(&sol);
    }

    #[test]
    fn relaxation_lower_bounds_binary_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in [3usize, 5, 7, 9, 11, 13] {
            for _ in 0..8 {
                let w = random_symmetric(n, &mut rng);
                let p = SdpProblem::new(w.clone()).unwrap();
                let sol = solve(&p, 1e-9).unwrap();
                let binary = binary_minimum(&w);
                assert!(
                    sol.objective <= binary + 1e-6,
                    "n={n}: sdp {} > binary {}",
                    sol.objective,
                    binary
                );
                assert!(sol.duality_gap <= 1e-7);
                check_feasible(&sol);
            }
        }
    }

    #[test]
    fn unique_binary_optimum_recovers_rank_one() {
        // W = −ssᵀ for binary s: the only maximizer of sᵀSs over feasible S
        // is S = ssᵀ, so the solved S must be rank one and extraction must
        // return s normalized by its last entry.
        let s_true = [1.0, -1.0, 1.0, 1.0, -1.0];
        let n = s_true.len();
        let w = RMat::from_fn(n, n, |r, c| -s_true[r] * s_true[c]);
        let sol = solve(&SdpProblem::new(w).unwrap(), 1e-9).unwrap();
        assert!(sol.eigenvalues[1] / sol.eigenvalues[0] < 1e-6);
        let x = extract_rank1(&sol, DEFAULT_RANK1_TOL).expect("rank one");
        // Last entry of s_true is -1, so extraction flips the sign.
        let expect: Vec<f64> = s_true[..n - 1].iter().map(|v| -v).collect();
        assert_eq!(x, expect);
    }

    #[test]
    fn extraction_rules() {
        let make = |s: &[f64]| {
            let n = s.len();
            let sm = RMat::from_fn(n, n, |r, c| s[r] * s[c]);
            let p = SdpProblem::new(sm.clone()).unwrap();
            let eig = SymmetricEigen::new(sm.clone());
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let _ = p;
            SdpSolution {
                s: sm,
                objective: 0.0,
                dual_objective: 0.0,
                duality_gap: 0.0,
                eigenvalues: RVec::from_fn(n, |i, _| eig.eigenvalues[order[i]]),
                eigenvectors: RMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]),
                iterations: 0,
            }
        };
        let sol = make(&[1.0, -1.0, 1.0]);
        assert_eq!(extract_rank1(&sol, 1e-6).unwrap(), vec![1.0, -1.0]);
        // Antipodal input gives the same answer.
        let sol = make(&[-1.0, 1.0, -1.0]);
        assert_eq!(extract_rank1(&sol, 1e-6).unwrap(), vec![1.0, -1.0]);
        // Identity is far from rank one.
        let eye = RMat::identity(3, 3);
        let sol = SdpSolution {
            s: eye.clone(),
            objective: 0.0,
            dual_objective: 0.0,
            duality_gap: 0.0,
            eigenvalues: RVec::from_vec(vec![1.0, 1.0, 1.0]),
            eigenvectors: eye,
            iterations: 0,
        };
        assert!(extract_rank1(&sol, 1e-6).is_none());
    }

    #[test]
    fn rejects_bad_problems() {
        let mut w = RMat::zeros(2, 2);
        w[(0, 1)] = 1.0;
        assert!(matches!(
            SdpProblem::new(w),
            Err(SdpError::NotSymmetric)
        ));
        assert!(matches!(
            SdpProblem::new(RMat::zeros(0, 0)),
            Err(SdpError::BadDimension(0))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn solver_feasibility_invariants(seed in 0u64..1_000_000, n in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_symmetric(n, &mut rng);
            let sol = solve(&SdpProblem::new(w).unwrap(), 1e-7).unwrap();
            for i in 0..n {
                prop_assert!((sol.s[(i, i)] - 1.0).abs() < 1e-7);
            }
            prop_assert!(sol.eigenvalues[n - 1] >= -1e-8);
            prop_assert!(sol.duality_gap <= 1e-7);
        }
    }
}
