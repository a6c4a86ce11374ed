//! Trace functionals on 1-D jet tuples: the exact annihilators λ of the
//! axis fibers' trace span, and the bounded-decay functionals μ built from
//! the strip data at the selected heights, plus the origin-flatness maps.

use nalgebra::{DMatrix, DVector};

use crate::bundle::SampledBundle;
use crate::error::Result;
use crate::jet::JetBasis;
use crate::linalg::kernel_basis;

use super::axis::AxisBundleSpec;
use super::heights::HeightSelection;

/// Affine functional on 𝔭^{free+solved}: weights over the Taylor
/// coordinates a_l of every slot, plus a constant.
#[derive(Debug, Clone)]
pub struct AffineMap {
    /// `weights[slot][l]` multiplies the coefficient of y^l of that slot.
    pub weights: Vec<Vec<f64>>,
    pub constant: f64,
    pub label: String,
}

impl AffineMap {
    pub fn apply(&self, taylor: &[Vec<f64>]) -> f64 {
        let mut acc = self.constant;
        for (ws, cs) in self.weights.iter().zip(taylor) {
            for (w, c) in ws.iter().zip(cs) {
                acc += w * c;
            }
        }
        acc
    }

    /// Same functional on a tuple of one-variable jets.
    pub fn apply_jets(&self, jets: &[crate::jet::OneDJet<f64>]) -> f64 {
        let taylor: Vec<Vec<f64>> = jets.iter().map(|j| j.coeffs.clone()).collect();
        self.apply(&taylor)
    }
}

/// λ and μ functionals per ladder point, plus the heights they came from.
#[derive(Debug, Clone)]
pub struct TraceFunctionals {
    pub strip: usize,
    pub side: super::axis::Side,
    /// Original component index per slot (free slots then solved slots).
    pub slot_comps: Vec<usize>,
    /// Touched curve index.
    pub curve: usize,
    /// Sign ε of the change of variables (∂_ȳ = ε ∂_y).
    pub sign: f64,
    pub heights: HeightSelection,
    /// Per x̄-ladder entry: exact functionals annihilating the fiber traces.
    pub lambdas: Vec<Vec<AffineMap>>,
    /// Per x̄-ladder entry: bounded/decaying functionals (μ^# + flatness).
    pub mus: Vec<Vec<AffineMap>>,
}

/// Builds λ (trace-span annihilators of the axis fibers) and μ (height
/// defect functionals plus the x̄^{a−m}-weighted flatness maps).
pub fn build_trace_functionals(
    spec: &AxisBundleSpec,
    axis: &SampledBundle,
    heights: &HeightSelection,
) -> Result<TraceFunctionals> {
    let m = spec.m;
    let slots = spec.free + spec.solved;
    let basis = JetBasis::get(2, m);
    let scalar_dim = basis.len();
    // Positions of the pure-y multi-indices (0, l) inside the scalar basis.
    let pure_y: Vec<usize> = (0..=m)
        .map(|l| {
            basis
                .position(&crate::jet::MultiIndex(vec![0, l as u32]))
                .expect("pure-y index")
        })
        .collect();

    let mut lambdas = Vec::new();
    let mut mus = Vec::new();
    for (idx, &xbar) in spec.x_ladder.iter().enumerate() {
        let fiber = &axis.fibers[idx];
        // λ: annihilators of the restriction of the fiber to 1-D traces.
        let mut lams = Vec::new();
        if !fiber.is_empty() {
            let gens = fiber.generator_matrix();
            let offset = fiber.offset_flat().expect("offset");
            // Trace matrix: rows = generators restricted to (slot, l) coords.
            let tdim = slots * (m + 1);
            let restrict = |v: &DVector<f64>| -> DVector<f64> {
                DVector::from_fn(tdim, |r, _| {
                    let slot = r / (m + 1);
                    let l = r % (m + 1);
                    v[slot * scalar_dim + pure_y[l]]
                })
            };
            let mut rows = DMatrix::zeros(gens.ncols(), tdim);
            for c in 0..gens.ncols() {
                rows.set_row(c, &restrict(&gens.column(c).into_owned()).transpose());
            }
            let ann = kernel_basis(&rows);
            let off_t = restrict(&offset);
            for c in 0..ann.ncols() {
                let w = ann.column(c);
                let mut weights = vec![vec![0.0; m + 1]; slots];
                for r in 0..tdim {
                    weights[r / (m + 1)][r % (m + 1)] = w[r];
                }
                let constant = -w.dot(&off_t);
                lams.push(AffineMap {
                    weights,
                    constant,
                    label: format!("lambda[{}] strip {} {:?}", c, spec.strip, spec.side),
                });
            }
        }
        lambdas.push(lams);

        // μ^#_{a,σ,i}: height-defect functionals.
        let mut ms = Vec::new();
        for (sigma, ys) in heights.series.iter().enumerate() {
            let y = ys.eval(xbar);
            for i in 0..spec.solved {
                for a in 0..=m {
                    let scale = y.powi(a as i32 - m as i32);
                    let mut weights = vec![vec![0.0; m + 1]; slots];
                    // −∂_y^a q_i(y): q_i sits at slot free + i.
                    for l in a..=m {
                        let fall: f64 = ((l - a + 1)..=l).map(|v| v as f64).product::<f64>().max(1.0);
                        weights[spec.free + i][l] -= scale * fall * y.powi((l - a) as i32);
                    }
                    // Σ_j ∂_y^a (Ā_ij p_j)(y) by Leibniz.
                    for j in 0..spec.free {
                        for r in 0..=a {
                            let comb = super::axis_binom(a, r);
                            let aij = spec.a_bar[i][j].partial(xbar, y, 0, r);
                            if aij == 0.0 {
                                continue;
                            }
                            let d = a - r;
                            for l in d..=m {
                                let fall: f64 =
                                    ((l - d + 1)..=l).map(|v| v as f64).product::<f64>().max(1.0);
                                weights[j][l] += scale * comb * aij * fall * y.powi((l - d) as i32);
                            }
                        }
                    }
                    let constant = scale * spec.b_bar[i].partial(xbar, y, 0, a);
                    ms.push(AffineMap {
                        weights,
                        constant,
                        label: format!("mu#[a={a},sigma={sigma},i={i}]"),
                    });
                }
            }
        }
        // Flatness maps x̄^{a−m}·∂_y^a p(0) = x̄^{a−m}·a!·a_a for every slot.
        for slot in 0..slots {
            for a in 0..=m {
                let fact: f64 = (1..=a).map(|v| v as f64).product::<f64>().max(1.0);
                let mut weights = vec![vec![0.0; m + 1]; slots];
                weights[slot][a] = xbar.powi(a as i32 - m as i32) * fact;
                ms.push(AffineMap {
                    weights,
                    constant: 0.0,
                    label: format!("flat[slot={slot},a={a}]"),
                });
            }
        }
        mus.push(ms);
    }

    let mut slot_comps = spec.free_comps.clone();
    slot_comps.extend(spec.solved_comps.iter().copied());
    Ok(TraceFunctionals {
        strip: spec.strip,
        side: spec.side,
        slot_comps,
        curve: spec.curve,
        sign: spec.side.sign(),
        heights: heights.clone(),
        lambdas,
        mus,
    })
}
