//! Fixture files: JSON documents describing bundles, parametric systems,
//! seminorm families, wedge normal forms, and field pieces.  Parsing is
//! strict (unknown fields rejected) and re-emission is canonical, so
//! parse → emit → parse is the identity.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use whitney_core::elim::ParamLinearSystem;
use whitney_core::nalgebra::{DMatrix, DVector};
use whitney_core::expr::Expr;
use whitney_core::helly::{SeminormFamily, SeminormMode};
use whitney_core::jet::JetSpace;
use whitney_core::patch::{CuspRegion, FieldPiece};
use whitney_core::pipeline::{CurveRow, StripSystem, WedgeNormalForm};
use whitney_core::puiseux::{CurveLadder, PuiseuxPoly};
use whitney_core::{AffineFiber, SampledBundle};

/// One Puiseux term: coeff · x^{num/den}; the coefficient is carried as a
/// decimal string so fixtures stay exact and byte-stable.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PuiseuxTerm {
    pub num: i64,
    pub den: u32,
    pub coeff: String,
}

pub fn parse_series(terms: &[PuiseuxTerm]) -> Result<PuiseuxPoly<f64>> {
    let mut den = 1i64;
    for t in terms {
        if t.den == 0 {
            bail!("Puiseux term has zero denominator");
        }
        den = lcm(den, t.den as i64);
    }
    let mut flat: Vec<(i64, f64)> = Vec::with_capacity(terms.len());
    for t in terms {
        let c: f64 = t
            .coeff
            .parse()
            .with_context(|| format!("non-canonical Puiseux coefficient {:?}", t.coeff))?;
        flat.push((t.num * (den / t.den as i64), c));
    }
    Ok(PuiseuxPoly::new(den as u32, &flat))
}

pub fn emit_series(p: &PuiseuxPoly<f64>) -> Vec<PuiseuxTerm> {
    p.coeffs
        .iter()
        .map(|(q, c)| PuiseuxTerm { num: *q, den: p.ram, coeff: format!("{c}") })
        .collect()
}

fn lcm(a: i64, b: i64) -> i64 {
    fn gcd(mut a: i64, mut b: i64) -> i64 {
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a.max(1)
    }
    a / gcd(a, b) * b
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    #[serde(default = "default_order")]
    pub m: usize,
    #[serde(default = "default_one")]
    pub n: usize,
    #[serde(default = "default_one")]
    pub d: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    /// Residual tolerance for `check`.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_order() -> usize {
    1
}
fn default_one() -> usize {
    1
}
fn default_delta() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FiberSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empty: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<Vec<ConstraintSpec>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StripSpec {
    pub k: usize,
    pub perm: Vec<usize>,
    pub coeffs: Vec<Vec<String>>,
    pub rhs: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CurveRowSpec {
    pub theta: Vec<ThetaTerm>,
    pub g: Vec<PuiseuxTerm>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ThetaTerm {
    pub j: usize,
    pub l: usize,
    pub series: Vec<PuiseuxTerm>,
}

/// Payload variants per fixture kind.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    SampledBundle {
        points: Vec<Vec<f64>>,
        fibers: Vec<FiberSpec>,
    },
    ParamSystem {
        n_eqs: usize,
        n_unknowns: usize,
        coeffs: Vec<Vec<String>>,
        rhs: Vec<String>,
        samples: Vec<Vec<f64>>,
    },
    SeminormFamily {
        dim: usize,
        mode: String,
        members: Vec<Vec<Vec<f64>>>,
    },
    WedgeNormalForm {
        curves: Vec<Vec<PuiseuxTerm>>,
        strips: Vec<StripSpec>,
        curve_rows: Vec<Vec<CurveRowSpec>>,
    },
    FieldPiece {
        exprs: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        curves: Vec<Vec<PuiseuxTerm>>,
    },
    CuspRegion {
        psi_minus: Vec<PuiseuxTerm>,
        psi_plus: Vec<PuiseuxTerm>,
    },
}

/// A parsed fixture document.
///
/// `deny_unknown_fields` cannot ride along with a flattened tagged enum, so
/// unknown top-level keys pass the parser; the semantic checks in
/// `validate` carry the schema discipline.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FixtureSpec {
    pub meta: Meta,
    #[serde(flatten)]
    pub payload: Payload,
}

impl FixtureSpec {
    pub fn parse(text: &str) -> Result<FixtureSpec> {
        let spec: FixtureSpec =
            serde_json::from_str(text).context("fixture schema violation")?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<FixtureSpec> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read fixture {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in fixture {}", path.display()))
    }

    /// Canonical emission; parse ∘ emit is the identity.
    pub fn emit(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("fixture serialization");
        s.push('\n');
        s
    }

    fn validate(&self) -> Result<()> {
        match &self.payload {
            Payload::SampledBundle { points, fibers } => {
                if points.len() != fibers.len() {
                    bail!("sampled-bundle needs one fiber per point");
                }
                for (i, p) in points.iter().enumerate() {
                    if p.len() != self.meta.n {
                        bail!("point {i} has arity {} but meta.n = {}", p.len(), self.meta.n);
                    }
                    for q in &points[..i] {
                        if q == p {
                            bail!("duplicate point entry {p:?}");
                        }
                    }
                }
                for (i, f) in fibers.iter().enumerate() {
                    let ways = [f.full.is_some(), f.empty.is_some(), f.constraints.is_some()];
                    if ways.iter().filter(|w| **w).count() != 1 {
                        bail!("fiber {i} must set exactly one of full/empty/constraints");
                    }
                }
            }
            Payload::ParamSystem { n_eqs, n_unknowns, coeffs, rhs, samples } => {
                if coeffs.len() != *n_eqs || rhs.len() != *n_eqs {
                    bail!("param-system row count mismatch");
                }
                for row in coeffs {
                    if row.len() != *n_unknowns {
                        bail!("param-system coefficient row width mismatch");
                    }
                    for e in row {
                        Expr::parse(e)?;
                    }
                }
                for e in rhs {
                    Expr::parse(e)?;
                }
                if samples.is_empty() {
                    bail!("param-system needs sample points");
                }
            }
            Payload::SeminormFamily { dim, mode, members } => {
                if !matches!(mode.as_str(), "euclidean" | "max-abs") {
                    bail!("unknown seminorm mode {mode:?}");
                }
                for (i, m) in members.iter().enumerate() {
                    for row in m {
                        if row.len() != *dim {
                            bail!("member {i} row width != dim");
                        }
                    }
                }
            }
            Payload::WedgeNormalForm { curves, strips, curve_rows } => {
                if curves.len() < 2 {
                    bail!("wedge-normal-form needs at least two ladder curves");
                }
                if strips.len() != curves.len() - 1 {
                    bail!("wedge-normal-form needs one strip per gap");
                }
                if curve_rows.len() != curves.len() {
                    bail!("wedge-normal-form needs one row list per curve");
                }
                for c in curves {
                    parse_series(c)?;
                }
                for s in strips {
                    for row in &s.coeffs {
                        for e in row {
                            Expr::parse(e)?;
                        }
                    }
                    for e in &s.rhs {
                        Expr::parse(e)?;
                    }
                }
                for rows in curve_rows {
                    for r in rows {
                        parse_series(&r.g)?;
                        for t in &r.theta {
                            parse_series(&t.series)?;
                            if t.j >= self.meta.d || t.l > self.meta.m {
                                bail!("curve row references (j={}, l={})", t.j, t.l);
                            }
                        }
                    }
                }
            }
            Payload::FieldPiece { exprs, curves } => {
                if exprs.is_empty() {
                    bail!("field-piece needs at least one expression");
                }
                for e in exprs {
                    Expr::parse(e)?;
                }
                for c in curves {
                    parse_series(c)?;
                }
            }
            Payload::CuspRegion { psi_minus, psi_plus } => {
                parse_series(psi_minus)?;
                parse_series(psi_plus)?;
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        match std::env::var("WS_SEED") {
            Ok(v) => v.parse().unwrap_or(self.meta.seed),
            Err(_) => self.meta.seed,
        }
    }

    pub fn to_bundle(&self) -> Result<SampledBundle> {
        let Payload::SampledBundle { points, fibers } = &self.payload else {
            bail!("fixture is not a sampled-bundle");
        };
        let space = JetSpace::new(self.meta.n, self.meta.m, self.meta.d)?;
        let fibers = points
            .iter()
            .zip(fibers)
            .map(|(p, f)| {
                if f.empty == Some(true) {
                    return Ok(AffineFiber::empty());
                }
                if f.full == Some(true) {
                    return Ok(AffineFiber::full(space, p));
                }
                let rows: Vec<(Vec<f64>, f64)> = f
                    .constraints
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|c| {
                        if c.coeffs.len() != space.flat_dim() {
                            bail!(
                                "constraint row width {} != flat dim {}",
                                c.coeffs.len(),
                                space.flat_dim()
                            );
                        }
                        Ok((c.coeffs.clone(), c.rhs))
                    })
                    .collect::<Result<_>>()?;
                Ok(AffineFiber::from_constraints(space, p, &rows))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SampledBundle::new(space, points.clone(), fibers)?)
    }

    pub fn to_param_system(&self) -> Result<(ParamLinearSystem, Vec<Vec<f64>>)> {
        let Payload::ParamSystem { n_eqs, n_unknowns, coeffs, rhs, samples } = &self.payload
        else {
            bail!("fixture is not a param-system");
        };
        let (ne, nu) = (*n_eqs, *n_unknowns);
        let coeff_exprs: Vec<Vec<Expr>> = coeffs
            .iter()
            .map(|row| row.iter().map(|e| Expr::parse(e)).collect::<whitney_core::Result<_>>())
            .collect::<whitney_core::Result<_>>()?;
        let rhs_exprs: Vec<Expr> = rhs
            .iter()
            .map(|e| Expr::parse(e))
            .collect::<whitney_core::Result<_>>()?;
        let sys = ParamLinearSystem::new(ne, nu, move |x: &[f64]| {
            let xv = x[0];
            let yv = x.get(1).copied().unwrap_or(0.0);
            let c = DMatrix::from_fn(ne, nu, |i, j| {
                coeff_exprs[i][j].eval(xv, yv, &[])
            });
            let g = DVector::from_fn(ne, |i, _| rhs_exprs[i].eval(xv, yv, &[]));
            (c, g)
        });
        Ok((sys, samples.clone()))
    }

    pub fn to_family(&self) -> Result<SeminormFamily> {
        let Payload::SeminormFamily { dim, mode, members } = &self.payload else {
            bail!("fixture is not a seminorm-family");
        };
        let mode = match mode.as_str() {
            "euclidean" => SeminormMode::Euclidean,
            _ => SeminormMode::MaxAbs,
        };
        let mats = members
            .iter()
            .map(|m| {
                let rows = m.len();
                DMatrix::from_fn(rows, *dim, |i, j| m[i][j])
            })
            .collect();
        Ok(SeminormFamily::new(*dim, mats, mode)?)
    }

    pub fn to_normal_form(&self) -> Result<WedgeNormalForm> {
        let Payload::WedgeNormalForm { curves, strips, curve_rows } = &self.payload else {
            bail!("fixture is not a wedge-normal-form");
        };
        let ladder = CurveLadder::new(
            curves.iter().map(|c| parse_series(c)).collect::<Result<_>>()?,
            self.meta.delta,
        )?;
        let strips = strips
            .iter()
            .map(|s| {
                Ok(StripSystem {
                    k: s.k,
                    perm: s.perm.clone(),
                    coeffs: s
                        .coeffs
                        .iter()
                        .map(|row| {
                            row.iter()
                                .map(|e| Expr::parse(e))
                                .collect::<whitney_core::Result<_>>()
                        })
                        .collect::<whitney_core::Result<_>>()?,
                    rhs: s
                        .rhs
                        .iter()
                        .map(|e| Expr::parse(e))
                        .collect::<whitney_core::Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = curve_rows
            .iter()
            .map(|rs| {
                rs.iter()
                    .map(|r| {
                        Ok(CurveRow {
                            theta: r
                                .theta
                                .iter()
                                .map(|t| Ok((t.j, t.l, parse_series(&t.series)?)))
                                .collect::<Result<_>>()?,
                            g: parse_series(&r.g)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WedgeNormalForm::new(
            self.meta.m,
            self.meta.d,
            ladder,
            strips,
            rows,
            true,
        )?)
    }

    pub fn to_fields(&self) -> Result<Vec<FieldPiece>> {
        let Payload::FieldPiece { exprs, curves } = &self.payload else {
            bail!("fixture is not a field-piece");
        };
        let curve_list: Vec<PuiseuxPoly<f64>> =
            curves.iter().map(|c| parse_series(c)).collect::<Result<_>>()?;
        exprs
            .iter()
            .map(|e| {
                Ok(FieldPiece::from_expr(None, Expr::parse(e)?, curve_list.clone()))
            })
            .collect()
    }

    pub fn to_region(&self) -> Result<CuspRegion> {
        let Payload::CuspRegion { psi_minus, psi_plus } = &self.payload else {
            bail!("fixture is not a cusp-region");
        };
        Ok(CuspRegion::new(
            parse_series(psi_minus)?,
            parse_series(psi_plus)?,
            self.meta.delta,
        )?)
    }
}
