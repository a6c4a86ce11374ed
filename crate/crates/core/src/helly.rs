//! Representative selection for finite seminorm families: O(1)-many members
//! whose maximum dominates the whole family up to a constant, after reducing
//! the common null space.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::kernel_basis;
use crate::tol::{SELECTION_PLATEAU, SELECTION_SAFETY};

/// How a member matrix turns a vector into a seminorm value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeminormMode {
    /// p(v) = |M v|₂
    Euclidean,
    /// p(v) = max_i |(M v)_i|
    MaxAbs,
}

/// Finite family of seminorms p_ω on ℝ^D, each given by a matrix.
#[derive(Debug, Clone)]
pub struct SeminormFamily {
    pub dim: usize,
    pub members: Vec<DMatrix<f64>>,
    pub mode: SeminormMode,
}

impl SeminormFamily {
    pub fn new(dim: usize, members: Vec<DMatrix<f64>>, mode: SeminormMode) -> Result<Self> {
        for m in &members {
            if m.ncols() != dim {
                return Err(Error::DimensionMismatch(
                    "seminorm matrix width must equal the family dimension".into(),
                ));
            }
        }
        Ok(SeminormFamily { dim, members, mode })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn value(&self, omega: usize, v: &DVector<f64>) -> f64 {
        let w = &self.members[omega] * v;
        match self.mode {
            SeminormMode::Euclidean => w.norm(),
            SeminormMode::MaxAbs => w.amax(),
        }
    }

    pub fn sup(&self, v: &DVector<f64>) -> f64 {
        (0..self.len()).map(|i| self.value(i, v)).fold(0.0, f64::max)
    }
}

/// Outcome of the null-space reduction.
#[derive(Debug, Clone)]
pub struct NullSpaceReduction {
    /// ≤ D member indices whose kernels intersect to the common null space.
    pub basis_members: Vec<usize>,
    /// Orthonormal basis of the common null space H.
    pub null_basis: DMatrix<f64>,
    /// Orthonormal basis Q of H^⊥; quotient coordinates are Qᵀv.
    pub complement: DMatrix<f64>,
    /// Family on the complement where every member is a norm: the basis
    /// members' rows are stacked onto each p_ω.
    pub quotient: SeminormFamily,
}

/// Computes H = ∩ ker p_ω, picks ≤ D members realizing the intersection, and
/// returns the family restricted to H^⊥ with the realizers' rows stacked on
/// so that every quotient member is a norm.
pub fn null_space_reduce(fam: &SeminormFamily) -> Result<NullSpaceReduction> {
    let d = fam.dim;
    // Greedy kernel intersection: each accepted member strictly drops the
    // running dimension, so at most D are accepted.
    let mut running: DMatrix<f64> = DMatrix::identity(d, d); // basis of current H
    let mut basis_members = Vec::new();
    for (i, m) in fam.members.iter().enumerate() {
        if running.ncols() == 0 {
            break;
        }
        let restricted = m * &running;
        let ker = kernel_basis(&restricted);
        if ker.ncols() < running.ncols() {
            basis_members.push(i);
            running = &running * &ker;
        }
    }
    let null_basis = running;

    // H^⊥ via the kernel of the projection onto H.
    let complement = if null_basis.ncols() == 0 {
        DMatrix::identity(d, d)
    } else {
        kernel_basis(&null_basis.transpose())
    };

    let qdim = complement.ncols();
    let stacked_rows: usize = basis_members
        .iter()
        .map(|&i| fam.members[i].nrows())
        .sum();
    let quotient_members: Vec<DMatrix<f64>> = fam
        .members
        .iter()
        .map(|m| {
            let mut q = DMatrix::zeros(m.nrows() + stacked_rows, qdim);
            q.view_mut((0, 0), (m.nrows(), qdim)).copy_from(&(m * &complement));
            let mut at = m.nrows();
            for &b in &basis_members {
                let mb = &fam.members[b] * &complement;
                q.view_mut((at, 0), (mb.nrows(), qdim)).copy_from(&mb);
                at += mb.nrows();
            }
            q
        })
        .collect();
    let quotient = SeminormFamily::new(qdim, quotient_members, fam.mode)?;
    Ok(NullSpaceReduction { basis_members, null_basis, complement, quotient })
}

/// Selected representatives with the empirically verified constant.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub indices: Vec<usize>,
    pub constant: f64,
    pub count: usize,
}

/// Deterministic unit-sphere sample (seeded Gaussian, normalized).
pub fn sphere_samples(dim: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            loop {
                let v = DVector::from_fn(dim, |_, _| {
                    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                });
                let n = v.norm();
                if n > 1e-12 {
                    return v / n;
                }
            }
        })
        .collect()
}

/// Options for the greedy selection.
#[derive(Debug, Clone)]
pub struct SelectionOptions {
    pub sphere_count: usize,
    pub seed: u64,
    /// Cap on the selection size; defaults to 3^D.
    pub max_selected: Option<usize>,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions { sphere_count: 10_000, seed: 0x57A7, max_selected: None }
    }
}

/// Greedy selection on the unit balls: repeatedly add the member that most
/// shrinks the sampled sup-ratio, stop at the plateau or the cap.
///
/// The family must already consist of norms (run null_space_reduce first).
pub fn select_representatives(
    fam: &SeminormFamily,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    if fam.is_empty() {
        return Err(Error::InvalidArgument("cannot select from an empty family".into()));
    }
    let cap = opts
        .max_selected
        .unwrap_or_else(|| 3usize.saturating_pow(fam.dim as u32))
        .max(1);
    let samples = sphere_samples(fam.dim, opts.sphere_count, opts.seed);

    // Precompute the value table [member][sample].
    let table: Vec<Vec<f64>> = (0..fam.len())
        .map(|w| samples.iter().map(|v| fam.value(w, v)).collect())
        .collect();
    let sup: Vec<f64> = (0..samples.len())
        .map(|s| (0..fam.len()).map(|w| table[w][s]).fold(0.0, f64::max))
        .collect();

    let ratio_with = |selected: &[usize]| -> f64 {
        let mut worst: f64 = 1.0;
        for s in 0..samples.len() {
            if sup[s] <= 0.0 {
                continue;
            }
            let best = selected
                .iter()
                .map(|&w| table[w][s])
                .fold(0.0, f64::max);
            if best <= 0.0 {
                return f64::INFINITY;
            }
            worst = worst.max(sup[s] / best);
        }
        worst
    };

    let mut selected: Vec<usize> = Vec::new();
    let mut current = f64::INFINITY;
    while selected.len() < cap {
        let mut best: Option<(f64, usize)> = None;
        for w in 0..fam.len() {
            if selected.contains(&w) {
                continue;
            }
            let mut trial = selected.clone();
            trial.push(w);
            let r = ratio_with(&trial);
            if best.is_none_or(|(br, _)| r + 1e-15 < br) {
                best = Some((r, w));
            }
        }
        let Some((r, w)) = best else { break };
        // Plateau: relative improvement below the threshold (once finite).
        if current.is_finite() && (current - r) < SELECTION_PLATEAU * current {
            break;
        }
        selected.push(w);
        current = r;
        if current <= 1.0 + 1e-12 {
            break;
        }
    }
    // The constant is estimated on the training sample; when it is not the
    // exact ratio 1 (full coverage), pad it so a fresh sample of the same
    // sphere cannot trip the verifier on sampling noise.
    let current = current.max(1.0);
    let constant = if current > 1.0 + 1e-9 {
        current * (1.0 + SELECTION_SAFETY)
    } else {
        current
    };
    Ok(SelectionResult { constant, count: selected.len(), indices: selected })
}

/// Outcome of the independent domination check.
#[derive(Debug, Clone)]
pub struct DominationReport {
    pub worst_ratio: f64,
    pub witness: Option<Vec<f64>>,
    pub passed: bool,
}

/// Draws fresh unit vectors and checks sup_ω p_ω(v) ≤ C·max_selected p(v).
pub fn verify_domination(
    fam: &SeminormFamily,
    sel: &SelectionResult,
    samples: usize,
    seed: u64,
) -> DominationReport {
    let vs = sphere_samples(fam.dim, samples, seed);
    let mut worst = 1.0f64;
    let mut witness = None;
    for v in &vs {
        let sup = fam.sup(v);
        if sup <= 0.0 {
            continue;
        }
        let best = sel
            .indices
            .iter()
            .map(|&w| fam.value(w, v))
            .fold(0.0, f64::max);
        if best <= 0.0 {
            // Selected members all vanish where the family does not.
            return DominationReport {
                worst_ratio: f64::INFINITY,
                witness: Some(v.iter().cloned().collect()),
                passed: false,
            };
        }
        let r = sup / best;
        if r > worst {
            worst = r;
            witness = Some(v.iter().cloned().collect());
        }
    }
    DominationReport { worst_ratio: worst, witness, passed: worst <= sel.constant * (1.0 + 1e-6) }
}
