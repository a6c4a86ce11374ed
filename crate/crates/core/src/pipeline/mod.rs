//! The 2-D engine: from a wedge normal form, build axis bundles and trace
//! functionals, assemble the ξ constraint system, solve the selection
//! problem, synthesize strip fields, and patch into a verified section.

mod axis;
mod constraints;
mod heights;
mod solve;
mod synth;
mod trace;

pub use axis::{build_axis_bundle, AxisBundleSpec, Side};
pub use constraints::{assemble_constraints, ConstraintRow, TraceConstraintSystem};
pub use heights::{select_sample_heights, HeightSelection};
pub use solve::{solve_selection, SelectionSolution};
pub use synth::{
    synthesize_section, verify_section, verify_section_bundle, SectionReport, SynthesizedSection,
};
pub use trace::{build_trace_functionals, AffineMap, TraceFunctionals};

use crate::error::{Error, Result};

pub(crate) fn axis_binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}
use crate::expr::Expr;
use crate::fit::geometric_ladder;
use crate::puiseux::{curve_ladder_validate, CurveLadder, PuiseuxPoly};

/// One strip's solved linear system F_{π i} + Σ_{j>k} A_ij F_{π j} = φ_i
/// between two consecutive ladder curves.
#[derive(Debug, Clone)]
pub struct StripSystem {
    /// Number of solved components (echelon depth of the strip system).
    pub k: usize,
    /// Component permutation: slot i of the solved system is `F_{perm[i]}`.
    pub perm: Vec<usize>,
    /// k × (D−k) coefficient evaluators.
    pub coeffs: Vec<Vec<Expr>>,
    /// k right-hand-side evaluators.
    pub rhs: Vec<Expr>,
}

/// One linear row on the y-derivative traces along a curve:
/// Σ_{j,l} θ_{jl}(x) · ∂_y^l F_j(x, ψ(x)) = g(x).
#[derive(Debug, Clone)]
pub struct CurveRow {
    /// Sparse coefficients ((component, derivative order), series).
    pub theta: Vec<(usize, usize, PuiseuxPoly<f64>)>,
    pub g: PuiseuxPoly<f64>,
}

/// Wedge normal form: ladder curves, per-strip solved systems, per-curve
/// trace rows, and the origin condition H((0,0)) = {0}.
#[derive(Debug, Clone)]
pub struct WedgeNormalForm {
    pub m: usize,
    pub components: usize,
    pub ladder: CurveLadder,
    /// strips[s−1] sits between ψ_{s−1} and ψ_s.
    pub strips: Vec<StripSystem>,
    /// `curve_rows[s]` holds the rows on curve ψ_s, s = 0..=s_max.
    pub curve_rows: Vec<Vec<CurveRow>>,
    pub origin_zero: bool,
}

impl WedgeNormalForm {
    pub fn new(
        m: usize,
        components: usize,
        ladder: CurveLadder,
        strips: Vec<StripSystem>,
        curve_rows: Vec<Vec<CurveRow>>,
        origin_zero: bool,
    ) -> Result<Self> {
        if strips.len() != ladder.strip_count() {
            return Err(Error::IndexMismatch(format!(
                "{} strips for {} ladder gaps",
                strips.len(),
                ladder.strip_count()
            )));
        }
        if curve_rows.len() != ladder.curves.len() {
            return Err(Error::IndexMismatch(format!(
                "{} curve-row lists for {} curves",
                curve_rows.len(),
                ladder.curves.len()
            )));
        }
        for strip in &strips {
            if strip.k > components {
                return Err(Error::IndexMismatch("strip depth exceeds D".into()));
            }
            if strip.perm.len() != components {
                return Err(Error::IndexMismatch("strip permutation arity".into()));
            }
            if strip.coeffs.len() != strip.k || strip.rhs.len() != strip.k {
                return Err(Error::IndexMismatch("strip system shape".into()));
            }
            for row in &strip.coeffs {
                if row.len() != components - strip.k {
                    return Err(Error::IndexMismatch("strip coefficient row width".into()));
                }
            }
        }
        for rows in &curve_rows {
            for row in rows {
                for (j, l, _) in &row.theta {
                    if *j >= components || *l > m {
                        return Err(Error::IndexMismatch(format!(
                            "curve row references component {j}, order {l}"
                        )));
                    }
                }
            }
        }
        let (ok, _) = curve_ladder_validate(&ladder);
        if !ok {
            return Err(Error::InvalidArgument("ladder curves not strictly ordered".into()));
        }
        Ok(WedgeNormalForm { m, components, ladder, strips, curve_rows, origin_zero })
    }

    pub fn strip_count(&self) -> usize {
        self.strips.len()
    }

    pub fn curve_count(&self) -> usize {
        self.ladder.curves.len()
    }

    /// Default evaluation ladder: 24 points, geometric ratio 2^{−1/2},
    /// starting at δ/2.
    pub fn default_x_ladder(&self) -> Vec<f64> {
        geometric_ladder(self.ladder.delta * 0.5, 0.5f64.sqrt(), 24)
    }

    /// Gap series ψ_s − ψ_{s−1} of strip s (1-indexed).
    pub fn gap(&self, s: usize) -> PuiseuxPoly<f64> {
        self.ladder.curves[s].sub(&self.ladder.curves[s - 1])
    }

    /// Certifies the blowup discipline of the strip evaluators on a probe
    /// grid: |∂^α A|, |∂^α φ| ≤ C·min(|y−ψ_{s−1}|, |y−ψ_s|)^{−|α|}.
    /// Returns the worst constant seen.
    pub fn verify_blowup_bounds(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        let xs = geometric_ladder(self.ladder.delta * 0.4, 0.5, 6);
        for (s_idx, strip) in self.strips.iter().enumerate() {
            let s = s_idx + 1;
            let lo = &self.ladder.curves[s - 1];
            let hi = &self.ladder.curves[s];
            let mut exprs: Vec<&Expr> = Vec::new();
            for row in &strip.coeffs {
                exprs.extend(row.iter());
            }
            exprs.extend(strip.rhs.iter());
            if exprs.is_empty() {
                continue;
            }
            let fields: Vec<crate::patch::FieldPiece> = exprs
                .iter()
                .map(|e| {
                    crate::patch::FieldPiece::from_expr(
                        None,
                        (*e).clone(),
                        self.ladder.curves.clone(),
                    )
                })
                .collect();
            for &x in &xs {
                let y0 = lo.eval(x);
                let y1 = hi.eval(x);
                let gap = y1 - y0;
                for frac in [0.2, 0.5, 0.8] {
                    let y = y0 + frac * gap;
                    let dist = (y - y0).min(y1 - y);
                    for f in &fields {
                        for a in 0..=self.m {
                            for b in 0..=(self.m - a) {
                                let v = f.partial(x, y, a, b).abs();
                                if !v.is_finite() {
                                    return Err(Error::Numerical(format!(
                                        "strip {s} evaluator blew up at ({x}, {y})"
                                    )));
                                }
                                let c = v * dist.powi((a + b) as i32);
                                worst = worst.max(c);
                            }
                        }
                    }
                }
            }
        }
        Ok(worst)
    }
}

/// Derives a wedge normal form from raw per-strip jet-constraint rows by
/// running the parametric elimination at probe points to fix the pivot
/// order, then reproducing the solved system symbolically.
///
/// Inputs: per strip, a list of raw rows (coefficients per component, rhs)
/// as expressions; per curve, trace rows as Puiseux data (taken as-is).
pub fn normal_form_from_rows(
    m: usize,
    components: usize,
    ladder: CurveLadder,
    strip_rows: Vec<Vec<(Vec<Expr>, Expr)>>,
    curve_rows: Vec<Vec<CurveRow>>,
) -> Result<WedgeNormalForm> {
    use crate::elim::{eliminate, ParamLinearSystem};
    use nalgebra::{DMatrix, DVector};

    let mut strips = Vec::new();
    for (s_idx, rows) in strip_rows.iter().enumerate() {
        let s = s_idx + 1;
        if rows.is_empty() {
            strips.push(StripSystem {
                k: 0,
                perm: (0..components).collect(),
                coeffs: vec![],
                rhs: vec![],
            });
            continue;
        }
        // Probe the strip mid-line to fix pivots.
        let lo = ladder.curves[s - 1].clone();
        let hi = ladder.curves[s].clone();
        let curves = ladder.curves.clone();
        let rows_cl = rows.clone();
        let n = rows.len();
        let sys = ParamLinearSystem::new(n, components, move |p: &[f64]| {
            let x = p[0];
            let y = 0.5 * (lo.eval(x) + hi.eval(x));
            let c = DMatrix::from_fn(n, components, |i, j| rows_cl[i].0[j].eval(x, y, &curves));
            let g = DVector::from_fn(n, |i, _| rows_cl[i].1.eval(x, y, &curves));
            (c, g)
        });
        let samples: Vec<Vec<f64>> = geometric_ladder(ladder.delta * 0.4, 0.7, 12)
            .into_iter()
            .map(|x| vec![x])
            .collect();
        let pieces = eliminate(&sys, &samples);
        // Use the piece covering the most probe points (the strip's generic
        // stratum); finitely many bad x are excluded by shrinking δ.
        let piece = pieces
            .iter()
            .max_by_key(|p| p.points.len())
            .ok_or_else(|| Error::InvalidArgument("no elimination pieces".into()))?;
        // Reproduce the solved system symbolically following the same pivot
        // order on the permuted unknowns.
        let k = piece.depth;
        let perm = piece.perm.clone();
        // Symbolic Gaussian elimination with the pivot sequence implied by
        // the permutation: unknown order perm[0], perm[1], ...
        let mut a: Vec<Vec<Expr>> = rows
            .iter()
            .map(|(coeffs, _)| (0..components).map(|j| coeffs[perm[j]].clone()).collect())
            .collect();
        let mut b: Vec<Expr> = rows.iter().map(|(_, r)| r.clone()).collect();
        for step in 0..k {
            // Pivot row: the one with the symbolically nonzero coefficient at
            // column `step`; probe numerically to pick it.
            let x0 = samples[piece.points[piece.points.len() / 2]][0];
            let y0 = {
                let lo = &ladder.curves[s - 1];
                let hi = &ladder.curves[s];
                0.5 * (lo.eval(x0) + hi.eval(x0))
            };
            let mut best = step;
            let mut best_mag = 0.0;
            for (r, row) in a.iter().enumerate().skip(step) {
                let mag = row[step].eval(x0, y0, &ladder.curves).abs();
                if mag > best_mag {
                    best_mag = mag;
                    best = r;
                }
            }
            if best_mag <= 1e-12 {
                return Err(Error::Numerical(format!(
                    "strip {s}: symbolic pivot vanished at column {step}"
                )));
            }
            a.swap(step, best);
            b.swap(step, best);
            // Normalize the pivot row.
            let piv = a[step][step].clone();
            for j in 0..components {
                a[step][j] = Expr::div(a[step][j].clone(), piv.clone());
            }
            b[step] = Expr::div(b[step].clone(), piv.clone());
            // Eliminate the column from every other row.
            for r in 0..a.len() {
                if r == step {
                    continue;
                }
                let factor = a[r][step].clone();
                for j in 0..components {
                    a[r][j] = Expr::sub(
                        a[r][j].clone(),
                        Expr::mul(factor.clone(), a[step][j].clone()),
                    );
                }
                b[r] = Expr::sub(b[r].clone(), Expr::mul(factor, b[step].clone()));
            }
        }
        let coeffs: Vec<Vec<Expr>> = (0..k)
            .map(|i| (k..components).map(|j| a[i][j].clone()).collect())
            .collect();
        let rhs: Vec<Expr> = (0..k).map(|i| b[i].clone()).collect();
        strips.push(StripSystem { k, perm, coeffs, rhs });
    }
    WedgeNormalForm::new(m, components, ladder, strips, curve_rows, true)
}
