//! Section synthesis: strip-side fields from the ξ fits, dependent
//! components from the strip systems, cusp patching per strip, gluing, and
//! the wedge extension, all followed by numerical certification.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fit::geometric_ladder;
use crate::jet::{Jet, JetVector};
use crate::patch::{
    chain_table, cm_verify, compatibility_check, make_cutoff, patch_cusp, wedge_extend,
    CmReport, CmVerifyOptions, CuspRegion, FieldPiece, WindowProfile,
};
use crate::puiseux::PuiseuxPoly;

use super::constraints::flat_index;
use super::solve::SelectionSolution;
use super::WedgeNormalForm;

fn binom(n: usize, k: usize) -> f64 {
    super::axis_binom(n, k)
}

/// F(x, y) = Σ_l c_l(x) · (y − ψ(x))^l / l! with Puiseux coefficients; the
/// canonical strip-side field whose y-derivative traces on ψ are the c_l.
pub fn poly_in_y_field(coeffs: Vec<PuiseuxPoly<f64>>, curve: PuiseuxPoly<f64>) -> FieldPiece {
    let max_prec = 2 * coeffs.len() + 12;
    // Precompute coefficient derivative series.
    let coeff_derivs: Arc<Vec<Vec<PuiseuxPoly<f64>>>> = Arc::new(
        coeffs
            .iter()
            .map(|c| {
                let mut row = Vec::with_capacity(max_prec + 1);
                let mut cur = c.clone();
                for _ in 0..=max_prec {
                    row.push(cur.clone());
                    cur = cur.derivative();
                }
                row
            })
            .collect(),
    );
    let curve = Arc::new(curve);
    let lmax = coeffs.len().saturating_sub(1);
    FieldPiece::from_fn(None, move |x, y, a, b| {
        if x <= 0.0 {
            return 0.0;
        }
        let psi_d = curve.eval_derivs(x, a.max(1));
        let u0 = y - psi_d[0];
        // u = y − ψ(x): ∂_x^k u = −ψ^{(k)}, ∂_y u = 1.
        let mut u_derivs = vec![0.0; a + 1];
        u_derivs[0] = u0;
        for k in 1..=a {
            u_derivs[k] = -psi_d[k];
        }
        let mut acc = 0.0;
        for l in b..=lmax {
            let q = l - b;
            // 1/l! · l!/(l−b)! = 1/(l−b)! = 1/q!
            let qfact: f64 = (1..=q).map(|v| v as f64).product::<f64>().max(1.0);
            // f(u) = u^q and its derivatives at u0.
            let f_derivs: Vec<f64> = (0..=(a.min(q)))
                .map(|j| {
                    let fall: f64 = ((q - j + 1)..=q).map(|v| v as f64).product::<f64>().max(1.0);
                    fall * u0.powi((q - j) as i32)
                })
                .collect();
            let table = chain_table(&f_derivs, &u_derivs, a.min(q));
            for i in 0..=a {
                let p = a - i; // x-order applied to u^q
                if p > q {
                    continue;
                }
                let du = table[0][p];
                let ci = coeff_derivs[l][i].eval(x);
                acc += binom(a, i) * ci * du / qfact;
            }
        }
        acc
    })
}

/// Pointwise product with Leibniz partials.
pub fn field_mul(a: FieldPiece, b: FieldPiece) -> FieldPiece {
    FieldPiece::from_fn(None, move |x, y, da, db| {
        let mut acc = 0.0;
        for i in 0..=da {
            for j in 0..=db {
                acc += binom(da, i)
                    * binom(db, j)
                    * a.partial(x, y, i, j)
                    * b.partial(x, y, da - i, db - j);
            }
        }
        acc
    })
}

pub fn field_add(a: FieldPiece, b: FieldPiece) -> FieldPiece {
    FieldPiece::from_fn(None, move |x, y, da, db| {
        a.partial(x, y, da, db) + b.partial(x, y, da, db)
    })
}

pub fn field_scale(a: FieldPiece, s: f64) -> FieldPiece {
    FieldPiece::from_fn(None, move |x, y, da, db| s * a.partial(x, y, da, db))
}

/// Certified output of the synthesizer.
#[derive(Debug)]
pub struct SynthesizedSection {
    /// Per-component fields on the wedge Ω_{δ'}.
    pub omega_fields: Vec<FieldPiece>,
    /// Per-component extensions to a disc.
    pub disc_fields: Vec<FieldPiece>,
    pub delta_prime: f64,
    pub cm_reports: Vec<CmReport>,
    /// C^m certification of the disc extensions (probes span the continued
    /// regions below the axis and above the diagonal too).
    pub disc_cm_reports: Vec<CmReport>,
    pub section_report: SectionReport,
    /// Worst |∂_y^l F_j(x, ψ_s(x)) − ξ fit| over the sample ladder.
    pub trace_roundtrip_worst: f64,
    pub fmin_slope: Option<f64>,
    pub certified: bool,
}

/// Builds strip fields from the ξ fits, patches and glues them, extends to a
/// disc, and certifies the result.
pub fn synthesize_section(
    nf: &WedgeNormalForm,
    sol: &SelectionSolution,
) -> Result<SynthesizedSection> {
    if let Some(reason) = &sol.nonexistence {
        return Err(Error::Solver(format!(
            "selection reports section nonexistence: {reason}"
        )));
    }
    let m = nf.m;
    let d = nf.components;
    let profile = make_cutoff(m, 2 * (m + 1))?;

    let fit_series = |curve: usize, comp: usize, l: usize| -> PuiseuxPoly<f64> {
        sol.fits[flat_index(m, d, curve, comp, l)].series.clone()
    };

    // Per strip, per component: the patched strip field.
    let mut strip_fields: Vec<Vec<FieldPiece>> = Vec::with_capacity(nf.strip_count());
    let mut delta_prime = nf.ladder.delta;
    for s in 1..=nf.strip_count() {
        let sys = &nf.strips[s - 1];
        let region = CuspRegion::new(
            nf.ladder.curves[s - 1].clone(),
            nf.ladder.curves[s].clone(),
            nf.ladder.delta,
        )?;

        // Free components: polynomial-in-y fields anchored to each side.
        let side_field = |curve: usize, comp: usize| -> FieldPiece {
            let coeffs: Vec<PuiseuxPoly<f64>> =
                (0..=m).map(|l| fit_series(curve, comp, l)).collect();
            poly_in_y_field(coeffs, nf.ladder.curves[curve].clone())
        };

        let mut minus_fields: Vec<Option<FieldPiece>> = vec![None; d];
        let mut plus_fields: Vec<Option<FieldPiece>> = vec![None; d];
        for slot in sys.k..d {
            let comp = sys.perm[slot];
            minus_fields[comp] = Some(side_field(s - 1, comp));
            plus_fields[comp] = Some(side_field(s, comp));
        }
        // Dependent components from the solved system.
        for i in 0..sys.k {
            let comp = sys.perm[i];
            for (fields, _side) in [(&mut minus_fields, 0), (&mut plus_fields, 1)] {
                let mut g = FieldPiece::from_expr(
                    None,
                    sys.rhs[i].clone(),
                    nf.ladder.curves.clone(),
                );
                for (jj, coeff) in sys.coeffs[i].iter().enumerate() {
                    let free_comp = sys.perm[sys.k + jj];
                    let a_f = FieldPiece::from_expr(
                        None,
                        coeff.clone(),
                        nf.ladder.curves.clone(),
                    );
                    let prod = field_mul(
                        a_f,
                        fields[free_comp].clone().expect("free field built"),
                    );
                    g = field_add(g, field_scale(prod, -1.0));
                }
                fields[comp] = Some(g);
            }
        }

        let mut patched = Vec::with_capacity(d);
        for comp in 0..d {
            let fp = plus_fields[comp].clone().expect("plus side");
            let fm = minus_fields[comp].clone().expect("minus side");
            let compat = compatibility_check(&fp, &fm, &region, m);
            if !compat.passed {
                let bad: Vec<usize> = compat
                    .per_l
                    .iter()
                    .filter(|(_, _, _, ok)| !ok)
                    .map(|(l, _, _, _)| *l)
                    .collect();
                return Err(Error::NotCompatible(format!(
                    "strip {s}, component {comp}: Taylor link fails at l = {bad:?}"
                )));
            }
            let (field, cert_delta) = patch_cusp(&fp, &fm, &region, &profile, &compat)?;
            delta_prime = delta_prime.min(cert_delta);
            patched.push(field);
        }
        strip_fields.push(patched);
    }

    // Glue strips: dispatch by the ladder curves.
    let curves = Arc::new(nf.ladder.curves.clone());
    let strips_arc = Arc::new(strip_fields);
    let omega_fields: Vec<FieldPiece> = (0..d)
        .map(|comp| {
            let curves = curves.clone();
            let strips = strips_arc.clone();
            FieldPiece::from_fn(None, move |x, y, a, b| {
                if x <= 0.0 {
                    return 0.0;
                }
                let mut s = strips.len();
                for cand in 1..curves.len() {
                    if y <= curves[cand].eval(x) {
                        s = cand;
                        break;
                    }
                }
                let s = s.min(strips.len()).max(1);
                strips[s - 1][comp].partial(x, y, a, b)
            })
        })
        .collect();

    // Extend each component to a disc.
    let window = WindowProfile::new(2 * (m + 1));
    let mut disc_fields = Vec::with_capacity(d);
    let mut disc_radius = delta_prime;
    for f in &omega_fields {
        let (ext, r) = wedge_extend(f, m, delta_prime, &window)?;
        disc_radius = disc_radius.min(r);
        disc_fields.push(ext);
    }

    // Certification.
    let flat_probes: Vec<(f64, f64)> = geometric_ladder(delta_prime * 0.4, 0.5, 8)
        .into_iter()
        .flat_map(|x| {
            (1..=nf.strip_count())
                .map(|s| {
                    let lo = nf.ladder.curves[s - 1].eval(x);
                    let hi = nf.ladder.curves[s].eval(x);
                    (x, 0.5 * (lo + hi))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let interior: Vec<(f64, f64)> = (1..=3)
        .flat_map(|i| {
            let x = delta_prime * (0.3 + 0.15 * i as f64);
            (1..=nf.strip_count())
                .map(|s| {
                    let lo = nf.ladder.curves[s - 1].eval(x);
                    let hi = nf.ladder.curves[s].eval(x);
                    (x, 0.5 * (lo + hi))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    // Step lengths respect the strip geometry: the blend's derivatives blow
    // up like (distance to the nearest curve)^{−|α|}.
    let interior_steps: Vec<f64> = interior
        .iter()
        .map(|&(x, y)| {
            nf.ladder
                .curves
                .iter()
                .map(|c| (y - c.eval(x)).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let strip_opts = CmVerifyOptions {
        interior_steps: Some(interior_steps),
        ..CmVerifyOptions::default()
    };
    let cm_reports: Vec<CmReport> = omega_fields
        .iter()
        .map(|f| cm_verify(f, m, &flat_probes, &interior, &strip_opts))
        .collect();

    // Disc certification: flatness along rays through all three regions of
    // the extension, interior cross-checks well inside each region.
    let disc_flat: Vec<(f64, f64)> = geometric_ladder(disc_radius * 0.4, 0.5, 8)
        .into_iter()
        .flat_map(|x| [(x, -0.4 * x), (x, 0.45 * x), (x, 1.4 * x)])
        .collect();
    let xi0 = disc_radius * 0.5;
    let disc_interior = vec![(xi0, -0.3 * xi0), (xi0, 0.45 * xi0), (xi0, 1.3 * xi0)];
    let disc_cm_reports: Vec<CmReport> = disc_fields
        .iter()
        .map(|f| cm_verify(f, m, &disc_flat, &disc_interior, &CmVerifyOptions::default()))
        .collect();

    let sample_xs: Vec<f64> = geometric_ladder(delta_prime * 0.4, 0.5f64.sqrt(), 10);
    let section_report = verify_section(nf, &omega_fields, &sample_xs);

    // Trace round-trip against the fits.
    let mut roundtrip: f64 = 0.0;
    for &x in sample_xs.iter().take(6) {
        for (curve, psi) in nf.ladder.curves.iter().enumerate() {
            let yc = psi.eval(x);
            for comp in 0..d {
                for l in 0..=m {
                    let field_trace = omega_fields[comp].partial(x, yc, 0, l);
                    let fit_trace = fit_series(curve, comp, l).eval(x);
                    roundtrip = roundtrip.max((field_trace - fit_trace).abs());
                }
            }
        }
    }

    let certified = cm_reports.iter().all(|r| r.passed)
        && disc_cm_reports.iter().all(|r| r.passed)
        && section_report.passed;
    Ok(SynthesizedSection {
        omega_fields,
        disc_fields,
        delta_prime: disc_radius,
        cm_reports,
        disc_cm_reports,
        section_report,
        trace_roundtrip_worst: roundtrip,
        fmin_slope: sol.fmin_fit.map(|f| f.slope),
        certified,
    })
}

/// Residual report of a candidate section against the normal form.
#[derive(Debug, Clone)]
pub struct SectionReport {
    pub worst_curve_residual: f64,
    pub worst_strip_residual: f64,
    /// Per-component origin-flatness verdicts.
    pub flat_passed: Vec<bool>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks the strip rows, the curve rows, and origin flatness of a field
/// family against the normal form.
pub fn verify_section(
    nf: &WedgeNormalForm,
    fields: &[FieldPiece],
    sample_xs: &[f64],
) -> SectionReport {
    let m = nf.m;
    let tolerance = 1e-6;
    let mut worst_curve: f64 = 0.0;
    for &x in sample_xs {
        for (curve, rows) in nf.curve_rows.iter().enumerate() {
            let yc = nf.ladder.curves[curve].eval(x);
            for row in rows {
                let mut acc = -row.g.eval(x);
                for (j, l, theta) in &row.theta {
                    acc += theta.eval(x) * fields[*j].partial(x, yc, 0, *l);
                }
                worst_curve = worst_curve.max(acc.abs());
            }
        }
    }

    let mut worst_strip: f64 = 0.0;
    for &x in sample_xs {
        for s in 1..=nf.strip_count() {
            let sys = &nf.strips[s - 1];
            if sys.k == 0 {
                continue;
            }
            let lo = nf.ladder.curves[s - 1].eval(x);
            let hi = nf.ladder.curves[s].eval(x);
            for frac in [0.35, 0.65] {
                let y = lo + frac * (hi - lo);
                for i in 0..sys.k {
                    let mut acc = fields[sys.perm[i]].partial(x, y, 0, 0)
                        - sys.rhs[i].eval(x, y, &nf.ladder.curves);
                    for (jj, coeff) in sys.coeffs[i].iter().enumerate() {
                        acc += coeff.eval(x, y, &nf.ladder.curves)
                            * fields[sys.perm[sys.k + jj]].partial(x, y, 0, 0);
                    }
                    worst_strip = worst_strip.max(acc.abs());
                }
            }
        }
    }

    let probes: Vec<(f64, f64)> = geometric_ladder(nf.ladder.delta * 0.3, 0.5, 8)
        .into_iter()
        .map(|x| {
            let lo = nf.ladder.curves[0].eval(x);
            let hi = nf.ladder.curves[1].eval(x);
            (x, 0.5 * (lo + hi))
        })
        .collect();
    let flat_passed: Vec<bool> = fields
        .iter()
        .map(|f| {
            if !nf.origin_zero {
                return true;
            }
            let rep = cm_verify(f, m, &probes, &[], &CmVerifyOptions::default());
            rep.flat_passed
        })
        .collect();

    let passed = worst_curve <= tolerance
        && worst_strip <= tolerance
        && flat_passed.iter().all(|p| *p);
    SectionReport {
        worst_curve_residual: worst_curve,
        worst_strip_residual: worst_strip,
        flat_passed,
        tolerance,
        passed,
    }
}

/// Membership distances of a field's jets in a sampled bundle's fibers.
pub fn verify_section_bundle(
    bundle: &crate::bundle::SampledBundle,
    fields: &[FieldPiece],
) -> Result<Vec<f64>> {
    let space = bundle.space;
    if fields.len() != space.components {
        return Err(Error::DimensionMismatch(
            "one field per bundle component required".into(),
        ));
    }
    if space.vars != 2 {
        return Err(Error::InvalidArgument(
            "field membership checks run on planar bundles".into(),
        ));
    }
    let basis = crate::jet::JetBasis::get(2, space.order);
    let mut out = Vec::with_capacity(bundle.len());
    for (p, fiber) in bundle.points.iter().zip(&bundle.fibers) {
        let comps: Vec<Jet<f64>> = fields
            .iter()
            .map(|f| {
                let coeffs: Vec<f64> = basis
                    .indices
                    .iter()
                    .map(|alpha| {
                        let fact = alpha.factorial() as f64;
                        f.partial(p[0], p[1], alpha.0[0] as usize, alpha.0[1] as usize) / fact
                    })
                    .collect();
                Jet::new(p.clone(), space.order, coeffs).expect("jet from partials")
            })
            .collect();
        let jet = JetVector::new(comps)?;
        out.push(fiber.distance_to(&jet));
    }
    Ok(out)
}
