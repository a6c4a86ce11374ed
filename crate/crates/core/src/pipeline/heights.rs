//! Representative sample heights: per x̄, the probe heights whose defect
//! seminorms dominate the whole y-ladder family, selected with the Helly
//! machinery and fitted to Puiseux form across x̄.

use nalgebra::DMatrix;

use crate::bundle::SampledBundle;
use crate::error::{Error, Result};
use crate::helly::{
    null_space_reduce, select_representatives, verify_domination, SelectionOptions,
    SeminormFamily, SeminormMode,
};
use crate::puiseux::PuiseuxPoly;

use super::axis::{probe_rows, AxisBundleSpec};

/// Hard cap on the verified domination constant: the selection only needs
/// *some* finite constant depending on the problem shape, so any empirical
/// value below this passes.
const DOMINATION_CAP: f64 = 100.0;

/// Selected heights with their Puiseux description and diagnostics.
#[derive(Debug, Clone)]
pub struct HeightSelection {
    /// Relative positions inside (0, gap), one per σ.
    pub rel: Vec<f64>,
    /// y_σ as series: rel_σ · gap(x).
    pub series: Vec<PuiseuxPoly<f64>>,
    /// Worst verified domination constant across the ladder.
    pub domination_c: f64,
    /// Per-derivative-order constants sup |y_σ^{(a)}(x)|·x^{a−1}.
    pub y1_constants: Vec<f64>,
}

/// Selects σ_max representative heights per x̄ via the seminorm family
/// |||(P⃗,Q⃗,t)|||_{α,i,y} on ℝ·H(x̄,0), merges the per-x̄ picks into a
/// common relative ladder, and re-verifies domination everywhere.
pub fn select_sample_heights(
    spec: &AxisBundleSpec,
    axis: &SampledBundle,
) -> Result<HeightSelection> {
    if spec.solved == 0 {
        // No strip equations: every seminorm vanishes identically and any
        // single height represents the (trivial) family.
        return finish_selection(spec, vec![spec.y_probes_rel[0]], 1.0);
    }

    let mut merged: Vec<usize> = Vec::new();
    let mut worst_c = 1.0f64;
    for (idx, &xbar) in spec.x_ladder.iter().enumerate() {
        let fiber = &axis.fibers[idx];
        if fiber.is_empty() {
            continue;
        }
        let gap = spec.gap.eval(xbar);
        // Coordinates on ℝ·H(x̄,0): (c, t) ↦ t·offset + Σ c_i gen_i.
        let gens = fiber.generator_matrix();
        let offset = fiber.offset_flat().expect("non-empty fiber");
        let g = gens.ncols();
        let members: Vec<DMatrix<f64>> = spec
            .y_probes_rel
            .iter()
            .map(|rel| {
                let pr = probe_rows(spec, xbar, rel * gap);
                // rows × (g + 1): defect of t·offset + G c at this height.
                let mut m = DMatrix::zeros(pr.mat.nrows(), g + 1);
                m.view_mut((0, 0), (pr.mat.nrows(), g))
                    .copy_from(&(&pr.mat * &gens));
                let off_col = &pr.mat * &offset + &pr.rhs;
                m.set_column(g, &off_col);
                m
            })
            .collect();
        let fam = SeminormFamily::new(g + 1, members, SeminormMode::MaxAbs)?;
        let red = null_space_reduce(&fam)?;
        if red.quotient.dim == 0 {
            // All probe seminorms vanish on the fiber line; keep the first
            // height as the trivial representative.
            if merged.is_empty() {
                merged.push(0);
            }
            continue;
        }
        let opts = SelectionOptions { sphere_count: 2000, ..Default::default() };
        let sel = select_representatives(&red.quotient, &opts)?;
        let rep = verify_domination(&red.quotient, &sel, 4000, 0xD0u64.wrapping_add(idx as u64));
        if !rep.worst_ratio.is_finite() || rep.worst_ratio > DOMINATION_CAP {
            return Err(Error::DominationFailed {
                worst_ratio: rep.worst_ratio,
                witness: rep.witness.unwrap_or_default(),
            });
        }
        worst_c = worst_c.max(rep.worst_ratio.max(sel.constant));
        for w in sel.indices {
            if !merged.contains(&w) {
                merged.push(w);
            }
        }
    }
    if merged.is_empty() {
        merged.push(0);
    }
    merged.sort_unstable();
    let rel: Vec<f64> = merged.iter().map(|&i| spec.y_probes_rel[i]).collect();
    finish_selection(spec, rel, worst_c)
}

fn finish_selection(
    spec: &AxisBundleSpec,
    rel: Vec<f64>,
    domination_c: f64,
) -> Result<HeightSelection> {
    // (Y2): strictly inside (0, gap) ⊂ (0, ψ ≤ x̄).
    for &r in &rel {
        if !(0.0 < r && r < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "height fraction {r} must sit strictly inside (0, 1)"
            )));
        }
    }
    let series: Vec<PuiseuxPoly<f64>> = rel.iter().map(|&r| spec.gap.scale(r)).collect();
    // (Y1): |y_σ^{(a)}(x̄)| ≤ C·x̄^{1−a}; with y_σ a positive multiple of the
    // gap (leading order ≥ 1) the constants are finite — report them.
    let m = spec.m;
    let mut y1 = Vec::new();
    for a in 0..=(m + 2) {
        let mut c: f64 = 0.0;
        for s in &series {
            let ds = s.nth_derivative(a);
            for &x in &spec.x_ladder {
                c = c.max(ds.eval(x).abs() * x.powi(a as i32 - 1));
            }
        }
        y1.push(c);
    }
    if let Some(lead) = series.first().and_then(|s| s.leading_order().ok()) {
        if lead < num_rational::Ratio::new(1, 1) {
            return Err(Error::InvalidArgument(
                "height series grows slower than x; (Y1) bounds fail".into(),
            ));
        }
    }
    Ok(HeightSelection { rel, series, domination_c, y1_constants: y1 })
}
