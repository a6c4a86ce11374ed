//! Axis bundles: per x̄ on the strip axis, the affine set of jet pairs
//! (P⃗, Q⃗) whose strip-equation defect, weighted by y^{|α|−m}, decays along
//! a y-probe ladder shrinking to the axis.

use nalgebra::{DMatrix, DVector};

use crate::bundle::{AffineFiber, FiberKind, SampledBundle};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fit::decay_fit;
use crate::jet::{derivative_functional, JetBasis, JetSpace, JetVector};
use crate::linalg::{from_columns, kernel_basis, least_norm_solve, span_basis};
use crate::patch::{shifted_field, FieldPiece};
use crate::puiseux::PuiseuxPoly;
use crate::tol::{DEFECT_FLOOR, EXPONENT_MARGIN, RANK_REL_CUTOFF};

use super::WedgeNormalForm;

/// Which curve of a strip the change of variables flattens onto the axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// ȳ = ψ_s − y (top curve).
    Plus,
    /// ȳ = y − ψ_{s−1} (bottom curve).
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => -1.0,
            Side::Minus => 1.0,
        }
    }
}

/// Data of one strip side after the change of variables: the solved system
/// in solved shape G_i = Σ_j A_ij F_j + B_i on 0 < ȳ < gap(x̄).
#[derive(Clone)]
pub struct AxisBundleSpec {
    pub m: usize,
    /// Strip index (1-based) and side this spec came from.
    pub strip: usize,
    pub side: Side,
    /// Free component count j_max = D − k and solved count i_max = k.
    pub free: usize,
    pub solved: usize,
    /// Original component index of each free slot / solved slot.
    pub free_comps: Vec<usize>,
    pub solved_comps: Vec<usize>,
    /// Ā_ij evaluators in (x, ȳ) coordinates (solved × free).
    pub a_bar: Vec<Vec<FieldPiece>>,
    /// B̄_i evaluators in (x, ȳ) coordinates.
    pub b_bar: Vec<FieldPiece>,
    /// Strip width series gap(x) = ψ_s − ψ_{s−1}.
    pub gap: PuiseuxPoly<f64>,
    /// Touched curve index (s for Plus, s−1 for Minus).
    pub curve: usize,
    /// Evaluation ladder in x̄.
    pub x_ladder: Vec<f64>,
    /// y-probe ladder, relative to gap(x̄).
    pub y_probes_rel: Vec<f64>,
}

impl std::fmt::Debug for AxisBundleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AxisBundleSpec")
            .field("strip", &self.strip)
            .field("side", &self.side)
            .field("free", &self.free)
            .field("solved", &self.solved)
            .finish()
    }
}

/// Flips the sign of the second argument: A♭(x, u) = A(x, −u).
fn flip_y(field: FieldPiece) -> FieldPiece {
    FieldPiece::from_fn(None, move |x, u, a, b| {
        let v = field.partial(x, -u, a, b);
        if b % 2 == 0 {
            v
        } else {
            -v
        }
    })
}

impl WedgeNormalForm {
    /// The axis data of one strip side, with the blowup-respecting change
    /// of variables ȳ = ±(y − ψ) folded into the evaluators.
    pub fn axis_spec(&self, strip: usize, side: Side, x_ladder: Vec<f64>) -> AxisBundleSpec {
        let sys = &self.strips[strip - 1];
        let d = self.components;
        let k = sys.k;
        let free_comps: Vec<usize> = (k..d).map(|j| sys.perm[j]).collect();
        let solved_comps: Vec<usize> = (0..k).map(|i| sys.perm[i]).collect();
        let curves = self.ladder.curves.clone();
        let to_axis = |e: &Expr| -> FieldPiece {
            let raw = FieldPiece::from_expr(None, e.clone(), curves.clone());
            match side {
                // ȳ = y − ψ_{s−1}: shift by +ψ_{s−1}.
                Side::Minus => shifted_field(&raw, self.ladder.curves[strip - 1].clone()),
                // ȳ = ψ_s − y: A(x, ψ_s − ȳ) = A♭(x, ȳ − ψ_s) with the flip
                // applied before the shift.
                Side::Plus => {
                    shifted_field(&flip_y(raw), self.ladder.curves[strip].scale(-1.0))
                }
            }
        };
        // G_i = Σ_j Ā_ij F_j + B̄_i with Ā = −A^s, B̄ = φ^s, composed with the
        // change of variables.
        let a_bar: Vec<Vec<FieldPiece>> = sys
            .coeffs
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| {
                        let f = to_axis(e);
                        FieldPiece::from_fn(None, move |x, u, a, b| -f.partial(x, u, a, b))
                    })
                    .collect()
            })
            .collect();
        let b_bar: Vec<FieldPiece> = sys.rhs.iter().map(to_axis).collect();
        let curve = match side {
            Side::Plus => strip,
            Side::Minus => strip - 1,
        };
        AxisBundleSpec {
            m: self.m,
            strip,
            side,
            free: d - k,
            solved: k,
            free_comps,
            solved_comps,
            a_bar,
            b_bar,
            gap: self.gap(strip),
            curve,
            x_ladder,
            y_probes_rel: default_y_probes(),
        }
    }
}

/// Relative y-probe ladder inside (0, gap): (2/3)·2^{−t}.
pub fn default_y_probes() -> Vec<f64> {
    (0..8).map(|t| (2.0 / 3.0) * 0.5f64.powi(t)).collect()
}

/// Affine rows of the defect functional at one probe height.
pub(crate) struct ProbeRows {
    pub scale: f64,
    pub mat: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

/// Rows over flat (P⃗,Q⃗) coordinates: for each |α| ≤ m and each solved i,
/// y^{|α|−m}·∂^α{Σ_j Ā_ij P_j + B̄_i − Q_i}(x̄, y).
pub(crate) fn probe_rows(spec: &AxisBundleSpec, xbar: f64, y: f64) -> ProbeRows {
    let m = spec.m;
    let basis = JetBasis::get(2, m);
    let scalar_dim = basis.len();
    let slots = spec.free + spec.solved;
    let ncols = slots * scalar_dim;
    let base = [xbar, 0.0];
    let at = [xbar, y];

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for i in 0..spec.solved {
        for alpha in basis.indices.iter() {
            let weight = y.powi(alpha.order() as i32 - m as i32);
            let mut row = vec![0.0; ncols];
            // −Q_i term: derivative functional on slot (free + i).
            let wq = derivative_functional::<f64>(2, m, &base, alpha, &at)
                .expect("functional");
            for (p, &v) in wq.iter().enumerate() {
                row[(spec.free + i) * scalar_dim + p] -= weight * v;
            }
            // Σ_j ∂^α(Ā_ij · P_j) via Leibniz.
            for j in 0..spec.free {
                for (ib, beta) in basis.indices.iter().enumerate() {
                    let Some(rest) = alpha.checked_sub(beta) else { continue };
                    let _ = ib;
                    let comb = crate::jet::multi_binomial(alpha, beta) as f64;
                    let aij = spec.a_bar[i][j].partial(
                        xbar,
                        y,
                        beta.0[0] as usize,
                        beta.0[1] as usize,
                    );
                    if aij == 0.0 {
                        continue;
                    }
                    let wp = derivative_functional::<f64>(2, m, &base, &rest, &at)
                        .expect("functional");
                    for (p, &v) in wp.iter().enumerate() {
                        row[j * scalar_dim + p] += weight * comb * aij * v;
                    }
                }
            }
            // B̄_i constant.
            let bi = spec.b_bar[i].partial(xbar, y, alpha.0[0] as usize, alpha.0[1] as usize);
            rows.push(row);
            rhs.push(weight * bi);
        }
    }
    let nr = rows.len();
    let norm = (nr.max(1) as f64).sqrt();
    ProbeRows {
        scale: y,
        mat: DMatrix::from_fn(nr, ncols, |r, c| rows[r][c] / norm),
        rhs: DVector::from_iterator(nr, rhs.iter().map(|v| v / norm)),
    }
}

/// Builds the sampled axis bundle over {(x̄, 0)} ∪ {(0,0)}: per x̄ the fiber
/// is the affine set of pairs whose defect ladder decays; the origin carries
/// the zero fiber.
pub fn build_axis_bundle(spec: &AxisBundleSpec) -> Result<SampledBundle> {
    if spec.y_probes_rel.len() < 6 {
        return Err(Error::InvalidArgument(
            "axis probe ladder needs at least 6 heights".into(),
        ));
    }
    let m = spec.m;
    let slots = spec.free + spec.solved;
    let space = JetSpace::new(2, m, slots)?;
    let scalar_dim = JetBasis::get(2, m).len();
    let flat_dim = slots * scalar_dim;

    let mut points = Vec::new();
    let mut fibers = Vec::new();
    for &xbar in &spec.x_ladder {
        let base = vec![xbar, 0.0];
        if spec.solved == 0 {
            points.push(base.clone());
            fibers.push(AffineFiber::full(space, &base));
            continue;
        }
        let gap = spec.gap.eval(xbar);
        let ladder: Vec<ProbeRows> = spec
            .y_probes_rel
            .iter()
            .map(|rel| probe_rows(spec, xbar, rel * gap))
            .collect();

        // Candidate offset and directions from the finest half of the ladder.
        let half = ladder.len() / 2;
        let fine_rows: usize = ladder[half..].iter().map(|p| p.mat.nrows()).sum();
        let mut stacked = DMatrix::zeros(fine_rows, flat_dim);
        let mut stacked_rhs = DVector::zeros(fine_rows);
        let mut at = 0;
        for p in &ladder[half..] {
            stacked
                .view_mut((at, 0), (p.mat.nrows(), flat_dim))
                .copy_from(&p.mat);
            stacked_rhs.rows_mut(at, p.mat.nrows()).copy_from(&(-&p.rhs));
            at += p.mat.nrows();
        }
        let v_star = least_norm_solve(&stacked, &stacked_rhs);
        let null = kernel_basis(&stacked);

        let scales: Vec<f64> = ladder.iter().map(|p| p.scale).collect();
        let feasible = |v: &DVector<f64>| -> bool {
            let defects: Vec<f64> = ladder
                .iter()
                .map(|p| (&p.mat * v + &p.rhs).norm())
                .collect();
            match decay_fit(&scales, &defects) {
                Some(f) => {
                    f.certifies(0.0, EXPONENT_MARGIN) || f.final_value <= DEFECT_FLOOR
                }
                None => true,
            }
        };
        if !feasible(&v_star) {
            points.push(base.clone());
            fibers.push(AffineFiber::empty());
            continue;
        }
        let mut kept: Vec<DVector<f64>> = Vec::new();
        for c in 0..null.ncols() {
            let dir = null.column(c).into_owned();
            if feasible(&(&v_star + &dir)) && feasible(&(&v_star - &dir)) {
                kept.push(dir);
            }
        }
        let span = span_basis(&from_columns(flat_dim, &kept), RANK_REL_CUTOFF);
        let offset = JetVector::from_flat(base.clone(), m, slots, v_star.as_slice())?;
        let generators = (0..span.ncols())
            .map(|c| JetVector::from_flat(base.clone(), m, slots, span.column(c).as_slice()))
            .collect::<Result<Vec<_>>>()?;
        let kind = if span.ncols() == flat_dim {
            FiberKind::Full
        } else {
            FiberKind::Proper
        };
        points.push(base);
        fibers.push(AffineFiber { kind, offset: Some(offset), generators });
    }

    // H((0,0)) = {0}.
    points.push(vec![0.0, 0.0]);
    fibers.push(AffineFiber::point(JetVector::zero(vec![0.0, 0.0], m, slots)));

    SampledBundle::new(space, points, fibers)
}
