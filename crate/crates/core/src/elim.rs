//! Gaussian elimination with parameters: partition the sample set by pivot
//! location and reduce each piece to echelon form while keeping the solved
//! rows' coefficients bounded by 2^k after k steps.
//!
//! Pieces are point sets, not semialgebraic descriptions; coefficients are
//! evaluated pointwise and |C| below a zero threshold counts as zero.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{kernel_basis_eps, least_norm_solve_eps};
use crate::tol::{EQUIV_RESIDUAL, PIVOT_ZERO};

/// Relative SVD cutoff for the dense oracle: machine-level, so only genuine
/// zero structure is cut, matching the elimination's pivot-zero threshold.
const ORACLE_REL_CUTOFF: f64 = 1e-13;

/// Parametric linear system Σ_j C_ij(x) X_j = g_i(x) over a finite sample set.
#[derive(Clone)]
pub struct ParamLinearSystem {
    pub n_eqs: usize,
    pub n_unknowns: usize,
    eval: Arc<dyn Fn(&[f64]) -> (DMatrix<f64>, DVector<f64>) + Send + Sync>,
}

impl std::fmt::Debug for ParamLinearSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamLinearSystem")
            .field("n_eqs", &self.n_eqs)
            .field("n_unknowns", &self.n_unknowns)
            .finish()
    }
}

impl ParamLinearSystem {
    pub fn new<F>(n_eqs: usize, n_unknowns: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> (DMatrix<f64>, DVector<f64>) + Send + Sync + 'static,
    {
        ParamLinearSystem { n_eqs, n_unknowns, eval: Arc::new(eval) }
    }

    pub fn eval(&self, x: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let (c, g) = (self.eval)(x);
        assert_eq!(c.nrows(), self.n_eqs);
        assert_eq!(c.ncols(), self.n_unknowns);
        assert_eq!(g.len(), self.n_eqs);
        (c, g)
    }
}

/// Reduced data at one sample point:
/// X_{π i} + Σ_{j>k} Ã_ij X_{π j} = g̃_i (i ≤ k) and 0 = b̃_i (the rest).
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    /// k × (M−k) solved-row coefficients, |entry| ≤ 2^k.
    pub atilde: DMatrix<f64>,
    /// Solved-row right-hand sides.
    pub gtilde: DVector<f64>,
    /// Residual right-hand sides of the vacated rows.
    pub btilde: DVector<f64>,
}

/// One piece of the sample-set partition with its equivalent reduced system.
#[derive(Debug, Clone)]
pub struct EchelonPiece {
    /// Indices into the sample list.
    pub points: Vec<usize>,
    /// Echelon depth k.
    pub depth: usize,
    /// Unknown permutation: slot i of the reduced system is `X_{perm[i]}`.
    pub perm: Vec<usize>,
    /// Per-point reduced tables, parallel to `points`.
    pub tables: Vec<ReducedSystem>,
}

/// A system in k-echelon form on a point set, mid-elimination.
#[derive(Debug, Clone)]
pub struct EchelonState {
    /// Indices into the sample list.
    pub points: Vec<usize>,
    /// Echelon depth k so far.
    pub depth: usize,
    pub perm: Vec<usize>,
    /// Per point: solved rows A (k×(M−k)), their rhs b, live rows C, rhs g.
    state: Vec<(DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>)>,
}

impl EchelonState {
    /// The 0-echelon start: every system is trivially in 0-echelon form.
    pub fn initial(sys: &ParamLinearSystem, samples: &[Vec<f64>]) -> EchelonState {
        EchelonState {
            points: (0..samples.len()).collect(),
            depth: 0,
            perm: (0..sys.n_unknowns).collect(),
            state: samples
                .iter()
                .map(|x| {
                    let (c, g) = sys.eval(x);
                    (DMatrix::zeros(0, sys.n_unknowns), DVector::zeros(0), c, g)
                })
                .collect(),
        }
    }
}

/// One elimination round: split the piece by each point's first row-major
/// maximal pivot, finish the all-zero group as echelon, and push every pivot
/// group to (k+1)-echelon form with the bound |Ã| ≤ 2^{k+1}.
pub fn echelon_step(piece: EchelonState) -> (Vec<EchelonState>, Vec<EchelonPiece>) {
    let k = piece.depth;
    let (live_rows, live_cols) = match piece.state.first() {
        Some((_, _, c, _)) => (c.nrows(), c.ncols()),
        None => (0, 0),
    };
    if live_rows == 0 || live_cols == 0 {
        return (Vec::new(), vec![finish_piece(piece)]);
    }

    let mut groups: BTreeMap<Option<(usize, usize)>, Vec<usize>> = BTreeMap::new();
    for (local, _) in piece.points.iter().enumerate() {
        let c = &piece.state[local].2;
        let mut best: Option<(usize, usize)> = None;
        let mut best_mag = 0.0f64;
        for i in 0..live_rows {
            for j in 0..live_cols {
                let mag = c[(i, j)].abs();
                if mag > best_mag {
                    best_mag = mag;
                    best = Some((i, j));
                }
            }
        }
        if best_mag <= PIVOT_ZERO {
            best = None;
        }
        groups.entry(best).or_default().push(local);
    }

    let mut continued = Vec::new();
    let mut finished = Vec::new();
    for (pivot, locals) in groups {
        let sub_points: Vec<usize> = locals.iter().map(|&l| piece.points[l]).collect();
        match pivot {
            None => {
                finished.push(finish_piece(EchelonState {
                    points: sub_points,
                    depth: k,
                    perm: piece.perm.clone(),
                    state: locals.iter().map(|&l| clone_state(&piece.state[l])).collect(),
                }));
            }
            Some((pi, pj)) => {
                let mut perm = piece.perm.clone();
                // Unknown swap: live column pj becomes live column 0,
                // i.e. global slot k+pj ↔ slot k.
                perm.swap(k, k + pj);
                let mut state: Vec<(DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>)> =
                    Vec::with_capacity(locals.len());
                for &l in &locals {
                    let (a, b, c, g) = clone_state(&piece.state[l]);
                    state.push(pivot_step(a, b, c, g, pi, pj));
                }
                continued.push(EchelonState { points: sub_points, depth: k + 1, perm, state });
            }
        }
    }
    (continued, finished)
}

/// Partition the samples and reduce the system on each piece.
///
/// At most min(N, M) rounds; each point lands in exactly one piece; ties in
/// the pivot choice go to the first row-major pair.
pub fn eliminate(sys: &ParamLinearSystem, samples: &[Vec<f64>]) -> Vec<EchelonPiece> {
    if samples.is_empty() {
        return Vec::new();
    }
    let mut done: Vec<EchelonPiece> = Vec::new();
    let mut work = vec![EchelonState::initial(sys, samples)];
    while let Some(piece) = work.pop() {
        let (continued, finished) = echelon_step(piece);
        work.extend(continued);
        done.extend(finished);
    }
    // Deterministic output order: by first point index.
    done.sort_by_key(|p| p.points.first().copied().unwrap_or(usize::MAX));
    done
}

fn clone_state(
    s: &(DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>),
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    (s.0.clone(), s.1.clone(), s.2.clone(), s.3.clone())
}

/// One pivot round at a fixed location (pi, pj) of the live block.
fn pivot_step(
    a: DMatrix<f64>,
    b: DVector<f64>,
    mut c: DMatrix<f64>,
    mut g: DVector<f64>,
    pi: usize,
    pj: usize,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let k = a.nrows();
    let live_rows = c.nrows();
    let live_cols = c.ncols();

    c.swap_rows(0, pi);
    g.swap_rows(0, pi);
    c.swap_columns(0, pj);
    let mut a = a;
    if k > 0 {
        // A's columns are the live unknowns, same local indexing as C's.
        a.swap_columns(0, pj);
    }

    // Normalize every live row by the pivot value; afterwards all |C| ≤ 1.
    let pivot = c[(0, 0)];
    for i in 0..live_rows {
        for j in 0..live_cols {
            c[(i, j)] /= pivot;
        }
        g[i] /= pivot;
    }

    // Eliminate the pivot column from the solved rows.  The solved rows keep
    // |Ã| ≤ 2^k + 2^k = 2^{k+1} because the pivot row's entries are ≤ 1.
    let mut new_a = DMatrix::zeros(k + 1, live_cols - 1);
    let mut new_b = DVector::zeros(k + 1);
    for i in 0..k {
        let factor = a[(i, 0)];
        for j in 1..live_cols {
            new_a[(i, j - 1)] = a[(i, j)] - factor * c[(0, j)];
        }
        new_b[i] = b[i] - factor * g[0];
    }
    // The pivot row becomes solved row k: X_{π(k)} + Σ C_{0j} X = g_0.
    for j in 1..live_cols {
        new_a[(k, j - 1)] = c[(0, j)];
    }
    new_b[k] = g[0];
    debug_assert!(
        new_a.amax() <= (1u64 << (k + 1)) as f64,
        "step bound 2^{} violated: {}",
        k + 1,
        new_a.amax()
    );

    // Eliminate the pivot column from the remaining live rows.
    let mut new_c = DMatrix::zeros(live_rows - 1, live_cols - 1);
    let mut new_g = DVector::zeros(live_rows - 1);
    for i in 1..live_rows {
        let factor = c[(i, 0)];
        for j in 1..live_cols {
            new_c[(i - 1, j - 1)] = c[(i, j)] - factor * c[(0, j)];
        }
        new_g[i - 1] = g[i] - factor * g[0];
    }

    (new_a, new_b, new_c, new_g)
}

fn finish_piece(piece: EchelonState) -> EchelonPiece {
    let tables = piece
        .state
        .into_iter()
        .map(|(a, b, _c, g)| {
            // In echelon form all live C rows vanish; their rhs are the
            // residuals b̃.
            ReducedSystem { atilde: a, gtilde: b, btilde: g }
        })
        .collect();
    EchelonPiece { points: piece.points, depth: piece.depth, perm: piece.perm, tables }
}

impl EchelonPiece {
    /// Largest |Ã| entry across the piece (must be ≤ 2^depth).
    pub fn max_coeff(&self) -> f64 {
        self.tables
            .iter()
            .map(|t| t.atilde.amax())
            .fold(0.0, f64::max)
    }

    /// True when every point's residual rows vanish.
    pub fn consistent_at(&self, local: usize, scale: f64) -> bool {
        self.tables[local].btilde.amax() <= EQUIV_RESIDUAL * scale.max(1.0)
    }

    /// Full solution vector from the free unknowns at one point.
    pub fn solve_with_free(&self, local: usize, free: &[f64]) -> DVector<f64> {
        let t = &self.tables[local];
        let k = self.depth;
        let m = self.perm.len();
        let mut x = DVector::zeros(m);
        for (j, &v) in free.iter().enumerate() {
            x[self.perm[k + j]] = v;
        }
        for i in (0..k).rev() {
            let mut v = t.gtilde[i];
            for j in 0..(m - k) {
                v -= t.atilde[(i, j)] * free[j];
            }
            x[self.perm[i]] = v;
        }
        x
    }

    /// Residual of the reduced rows at a candidate solution.
    pub fn residual(&self, local: usize, x: &DVector<f64>) -> f64 {
        let t = &self.tables[local];
        let k = self.depth;
        let m = self.perm.len();
        let mut worst = t.btilde.amax();
        for i in 0..k {
            let mut v = x[self.perm[i]] - t.gtilde[i];
            for j in 0..(m - k) {
                v += t.atilde[(i, j)] * x[self.perm[k + j]];
            }
            worst = worst.max(v.abs());
        }
        worst
    }
}

/// Per-point equivalence report against the dense oracle.
#[derive(Debug, Clone, Default)]
pub struct EquivalenceReport {
    pub checked_points: usize,
    pub worst_forward: f64,
    pub worst_backward: f64,
    pub rank_mismatches: Vec<Vec<f64>>,
    pub witnesses: Vec<(Vec<f64>, f64)>,
    pub passed: bool,
}

/// Verifies that at every sample the reduced system has the same solution
/// set as the original: dense-oracle solutions satisfy the reduced rows and
/// reduced parametrizations satisfy the original, at relative residual
/// ≤ 1e-8; inconsistencies must agree too.
pub fn verify_equivalence(
    sys: &ParamLinearSystem,
    pieces: &[EchelonPiece],
    samples: &[Vec<f64>],
) -> Result<EquivalenceReport> {
    let mut owner: Vec<Option<(usize, usize)>> = vec![None; samples.len()];
    for (pi, piece) in pieces.iter().enumerate() {
        for (local, &s) in piece.points.iter().enumerate() {
            if owner[s].is_some() {
                return Err(Error::InvalidArgument(format!(
                    "sample {s} covered by two pieces"
                )));
            }
            owner[s] = Some((pi, local));
        }
    }
    let mut report = EquivalenceReport { passed: true, ..Default::default() };
    for (s, x) in samples.iter().enumerate() {
        let Some((pi, local)) = owner[s] else {
            return Err(Error::InvalidArgument(format!("sample {s} not covered")));
        };
        let piece = &pieces[pi];
        let (c, g) = sys.eval(x);
        // Backward-error denominator: |Cx − g| is compared against
        // coefficient·solution + data magnitudes.
        let rel = |resid: f64, sol: &DVector<f64>| {
            resid / (c.amax() * (1.0 + sol.amax()) + g.amax()).max(1.0)
        };
        let scale = c.amax().max(g.amax()).max(1.0);
        let dense = least_norm_solve_eps(&c, &DVector::from(g.clone()), ORACLE_REL_CUTOFF);
        let dense_rel = rel((&c * &dense - &g).amax(), &dense);
        let orig_consistent = dense_rel <= EQUIV_RESIDUAL;
        let red_consistent = piece.consistent_at(local, scale);
        if orig_consistent != red_consistent {
            report.passed = false;
            report.witnesses.push((x.clone(), dense_rel));
            continue;
        }
        report.checked_points += 1;
        if !orig_consistent {
            continue;
        }

        // Rank agreement: reduced free-variable count vs dense kernel.
        let kernel = kernel_basis_eps(&c, ORACLE_REL_CUTOFF);
        if kernel.ncols() != sys.n_unknowns - piece.depth {
            report.passed = false;
            report.rank_mismatches.push(x.clone());
            continue;
        }

        // Forward: dense solution (plus kernel perturbations) satisfies the
        // reduced rows.
        let mut fwd = rel(piece.residual(local, &dense), &dense);
        for j in 0..kernel.ncols() {
            let pert = &dense + kernel.column(j).into_owned();
            fwd = fwd.max(rel(piece.residual(local, &pert), &pert));
        }
        report.worst_forward = report.worst_forward.max(fwd);
        if fwd > EQUIV_RESIDUAL {
            report.passed = false;
            report.witnesses.push((x.clone(), fwd));
        }

        // Backward: reduced parametrization satisfies the original.
        let free_dim = sys.n_unknowns - piece.depth;
        let mut probes: Vec<Vec<f64>> = vec![vec![0.0; free_dim]];
        for j in 0..free_dim {
            let mut p = vec![0.0; free_dim];
            p[j] = 1.0;
            probes.push(p);
        }
        for p in probes {
            let sol = piece.solve_with_free(local, &p);
            let back = rel((&c * &sol - &g).amax(), &sol);
            report.worst_backward = report.worst_backward.max(back);
            if back > EQUIV_RESIDUAL {
                report.passed = false;
                report.witnesses.push((x.clone(), back));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples_1d(lo: f64, hi: f64, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64])
            .collect()
    }

    #[test]
    fn empty_system_single_piece() {
        let sys = ParamLinearSystem::new(0, 3, |_| (DMatrix::zeros(0, 3), DVector::zeros(0)));
        let samples = samples_1d(-1.0, 1.0, 5);
        let pieces = eliminate(&sys, &samples);
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].depth, 0);
        assert_eq!(pieces[0].points.len(), 5);
    }

    #[test]
    fn scalar_system_partitions_by_vanishing() {
        // 1×1 system C = x on E = {−1, 0, 1}
        let sys = ParamLinearSystem::new(1, 1, |x| {
            (DMatrix::from_element(1, 1, x[0]), DVector::from_element(1, x[0] * x[0]))
        });
        let samples = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let pieces = eliminate(&sys, &samples);
        assert_eq!(pieces.len(), 2);
        // Ordering is by first point index: {−1, 1} comes first.
        let echelon: Vec<&EchelonPiece> = pieces.iter().filter(|p| p.depth == 0).collect();
        let solved: Vec<&EchelonPiece> = pieces.iter().filter(|p| p.depth == 1).collect();
        assert_eq!(echelon.len(), 1);
        assert_eq!(echelon[0].points, vec![1]); // x = 0
        assert_eq!(solved.len(), 1);
        assert_eq!(solved[0].points, vec![0, 2]);
        // residual at x=0 is g(0) = 0 → still consistent
        assert!(echelon[0].consistent_at(0, 1.0));
        // at x=±1 the solved row reads X = x²/x = x
        let x_sol = solved[0].solve_with_free(0, &[]);
        assert!((x_sol[0] - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn diag_system_three_pieces() {
        // diag(x, x−1)·X = (1, 1) over a grid containing 0 and 1.
        let sys = ParamLinearSystem::new(2, 2, |x| {
            let t = x[0];
            (
                DMatrix::from_row_slice(2, 2, &[t, 0.0, 0.0, t - 1.0]),
                DVector::from_vec(vec![1.0, 1.0]),
            )
        });
        let samples = samples_1d(0.0, 1.0, 5); // {0, .25, .5, .75, 1}
        let pieces = eliminate(&sys, &samples);
        // Hand enumeration of the max-pivot cases: t=0 (first diagonal entry
        // vanishes), t=1 (second vanishes), t=.25 (second dominates first),
        // t∈{.5,.75} (first dominates, tie at .5 broken row-major).
        assert_eq!(pieces.len(), 4, "got {} pieces", pieces.len());
        let mut sets: Vec<Vec<usize>> = pieces.iter().map(|p| p.points.clone()).collect();
        sets.sort();
        assert_eq!(sets, vec![vec![0], vec![1], vec![2, 3], vec![4]]);
        let sizes: Vec<usize> = pieces.iter().map(|p| p.points.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 5);
        let rep = verify_equivalence(&sys, &pieces, &samples).unwrap();
        assert!(rep.passed, "equivalence failed: {rep:?}");
    }

    #[test]
    fn inconsistent_row_flagged() {
        // 0·X = 1: inconsistent everywhere.
        let sys = ParamLinearSystem::new(1, 1, |_| {
            (DMatrix::zeros(1, 1), DVector::from_element(1, 1.0))
        });
        let samples = samples_1d(-1.0, 1.0, 3);
        let pieces = eliminate(&sys, &samples);
        assert_eq!(pieces.len(), 1);
        assert!(!pieces[0].consistent_at(0, 1.0));
        let rep = verify_equivalence(&sys, &pieces, &samples).unwrap();
        assert!(rep.passed); // both sides agree the system is inconsistent
    }

    #[test]
    fn coefficient_bound_holds_exactly() {
        // Random-ish parametric systems; check |Ã| ≤ 2^k after elimination.
        let mut seed = 42u64;
        for trial in 0..40 {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let n = 1 + (seed >> 13) as usize % 5;
            let m = 1 + (seed >> 29) as usize % 5;
            let coeffs: Vec<f64> = (0..n * m * 3)
                .map(|i| {
                    let mut s = seed.wrapping_add((i as u64).wrapping_mul(0x9E3779B97F4A7C15));
                    s ^= s >> 33;
                    s = s.wrapping_mul(0xFF51AFD7ED558CCD);
                    ((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
                })
                .collect();
            let cf = coeffs.clone();
            let sys = ParamLinearSystem::new(n, m, move |x: &[f64]| {
                let t = x[0];
                let c = DMatrix::from_fn(n, m, |i, j| {
                    let b = 3 * (i * m + j);
                    cf[b] + cf[b + 1] * t + cf[b + 2] * t * t
                });
                let g = DVector::from_fn(n, |i, _| (i as f64 + 1.0) * t);
                (c, g)
            });
            let samples = samples_1d(-1.0, 1.0, 50);
            let pieces = eliminate(&sys, &samples);
            let covered: usize = pieces.iter().map(|p| p.points.len()).sum();
            assert_eq!(covered, 50, "trial {trial}: partition must cover");
            for p in &pieces {
                assert!(p.depth <= n.min(m), "depth bound violated");
                let bound = (1u64 << p.depth) as f64;
                assert!(
                    p.max_coeff() <= bound,
                    "trial {trial}: |Ã| = {} > 2^{}",
                    p.max_coeff(),
                    p.depth
                );
            }
            let rep = verify_equivalence(&sys, &pieces, &samples).unwrap();
            assert!(rep.passed, "trial {trial}: {:?}", rep.witnesses.first());
        }
    }

    #[test]
    fn echelon_step_splits_scalar_system() {
        // one inner round of the 1×1 system C = x on {−1, 0, 1}
        let sys = ParamLinearSystem::new(1, 1, |x| {
            (DMatrix::from_element(1, 1, x[0]), DVector::from_element(1, x[0]))
        });
        let samples = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let (continued, finished) = echelon_step(EchelonState::initial(&sys, &samples));
        assert_eq!(finished.len(), 1);
        assert_eq!(finished[0].points, vec![1]);
        assert_eq!(finished[0].depth, 0);
        assert_eq!(continued.len(), 1);
        assert_eq!(continued[0].depth, 1);
        assert_eq!(continued[0].points, vec![0, 2]);
    }

    #[test]
    fn underdetermined_rank_agreement() {
        // One equation, three unknowns: X₁ + t·X₂ − X₃ = t.
        let sys = ParamLinearSystem::new(1, 3, |x| {
            (
                DMatrix::from_row_slice(1, 3, &[1.0, x[0], -1.0]),
                DVector::from_element(1, x[0]),
            )
        });
        let samples = samples_1d(-1.0, 1.0, 11);
        let pieces = eliminate(&sys, &samples);
        let rep = verify_equivalence(&sys, &pieces, &samples).unwrap();
        assert!(rep.passed);
        for p in &pieces {
            assert_eq!(p.depth, 1); // rank 1 everywhere
        }
    }
}
