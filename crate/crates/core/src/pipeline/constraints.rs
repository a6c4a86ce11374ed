//! Assembly of the ξ constraint system: exact rows from the curve systems
//! and the λ annihilators, asymptotic rows from the μ functionals, and the
//! Taylor-link rows coupling consecutive curves.

use std::collections::HashSet;

use crate::error::{Error, Result};

use super::trace::TraceFunctionals;
use super::WedgeNormalForm;

/// One linear row on the flat ξ vector at a fixed x.
#[derive(Debug, Clone)]
pub struct ConstraintRow {
    pub weights: Vec<f64>,
    pub rhs: f64,
    pub label: String,
}

/// Rows of all three kinds at one ladder point.
#[derive(Debug, Clone)]
pub struct XRows {
    pub x: f64,
    pub exact: Vec<ConstraintRow>,
    pub asym: Vec<ConstraintRow>,
    pub links: Vec<ConstraintRow>,
}

/// The unknowns ξ^s_{jl}(x) with their per-x row instantiations.
#[derive(Debug, Clone)]
pub struct TraceConstraintSystem {
    pub m: usize,
    pub components: usize,
    pub curve_count: usize,
    pub n_unknowns: usize,
    pub xs: Vec<f64>,
    pub per_x: Vec<XRows>,
}

impl TraceConstraintSystem {
    /// Flat index of ξ^{curve}_{comp, l}.
    pub fn index(&self, curve: usize, comp: usize, l: usize) -> usize {
        flat_index(self.m, self.components, curve, comp, l)
    }
}

pub(crate) fn flat_index(
    m: usize,
    components: usize,
    curve: usize,
    comp: usize,
    l: usize,
) -> usize {
    (curve * components + comp) * (m + 1) + l
}

/// Instantiates exact, asymptotic, and Taylor-link rows at every ladder x.
pub fn assemble_constraints(
    nf: &WedgeNormalForm,
    tfs: &[TraceFunctionals],
    xs: &[f64],
) -> Result<TraceConstraintSystem> {
    let m = nf.m;
    let d = nf.components;
    let curve_count = nf.curve_count();
    let n_unknowns = curve_count * d * (m + 1);

    for tf in tfs {
        for ls in tf.lambdas.iter().chain(tf.mus.iter()) {
            let _ = ls;
        }
        if tf.lambdas.len() != xs.len() || tf.mus.len() != xs.len() {
            return Err(Error::IndexMismatch(
                "trace functionals were built on a different ladder".into(),
            ));
        }
        if tf.slot_comps.len() > d {
            return Err(Error::IndexMismatch("slot map exceeds component count".into()));
        }
    }

    let mut per_x = Vec::with_capacity(xs.len());
    for (xi, &x) in xs.iter().enumerate() {
        let mut exact = Vec::new();
        let mut asym = Vec::new();
        let mut links = Vec::new();

        // Curve rows Σ θ^{si}_{jl}(x) ξ^s_{jl} = g^{si}(x).
        for (curve, rows) in nf.curve_rows.iter().enumerate() {
            for (ri, row) in rows.iter().enumerate() {
                let mut weights = vec![0.0; n_unknowns];
                for (j, l, theta) in &row.theta {
                    weights[flat_index(m, d, curve, *j, *l)] += theta.eval(x);
                }
                exact.push(ConstraintRow {
                    weights,
                    rhs: row.g.eval(x),
                    label: format!("curve[{curve}].{ri}"),
                });
            }
        }

        // λ and μ rows, translated from 𝔭-coordinates a_l = ε^l ξ / l!.
        let mut flat_seen: HashSet<(usize, usize, usize)> = HashSet::new();
        for tf in tfs {
            let curve = tf.curve;
            let translate = |map: &super::trace::AffineMap| -> (Vec<f64>, f64) {
                let mut weights = vec![0.0; n_unknowns];
                for (slot, ws) in map.weights.iter().enumerate() {
                    let comp = tf.slot_comps[slot];
                    let mut fact = 1.0f64;
                    for (l, w) in ws.iter().enumerate() {
                        if l > 0 {
                            fact *= l as f64;
                        }
                        if *w != 0.0 {
                            weights[flat_index(m, d, curve, comp, l)] +=
                                w * tf.sign.powi(l as i32) / fact;
                        }
                    }
                }
                (weights, -map.constant)
            };
            for lam in &tf.lambdas[xi] {
                let (weights, rhs) = translate(lam);
                exact.push(ConstraintRow { weights, rhs, label: lam.label.clone() });
            }
            for mu in &tf.mus[xi] {
                if let Some(rest) = mu.label.strip_prefix("flat[slot=") {
                    // Dedup flatness rows shared by the two strip-sides
                    // touching the same curve.
                    let parts: Vec<&str> = rest.trim_end_matches(']').split(",a=").collect();
                    let slot: usize = parts[0].parse().unwrap_or(0);
                    let a: usize = parts.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
                    let comp = tf.slot_comps[slot];
                    if !flat_seen.insert((curve, comp, a)) {
                        continue;
                    }
                }
                let (weights, rhs) = translate(mu);
                asym.push(ConstraintRow { weights, rhs, label: mu.label.clone() });
            }
        }

        // Taylor links between consecutive curves, scaled by gap^{l−m} so the objective reads
        // them as |mismatch|/gap^{m−l}.
        for s in 1..=nf.strip_count() {
            let gap = nf.gap(s).eval(x);
            if !(gap > 0.0) {
                return Err(Error::Numerical(format!("gap of strip {s} vanished at x = {x}")));
            }
            for comp in 0..d {
                for l in 0..=m {
                    let scale = gap.powi((m - l) as i32);
                    let mut weights = vec![0.0; n_unknowns];
                    weights[flat_index(m, d, s, comp, l)] = 1.0 / scale;
                    let mut fact = 1.0f64;
                    for k in 0..=(m - l) {
                        if k > 0 {
                            fact *= k as f64;
                        }
                        weights[flat_index(m, d, s - 1, comp, l + k)] -=
                            gap.powi(k as i32) / (fact * scale);
                    }
                    links.push(ConstraintRow {
                        weights,
                        rhs: 0.0,
                        label: format!("link[s={s},j={comp},l={l}]"),
                    });
                }
            }
        }

        per_x.push(XRows { x, exact, asym, links });
    }

    Ok(TraceConstraintSystem { m, components: d, curve_count, n_unknowns, xs: xs.to_vec(), per_x })
}
