//! Arithmetic of m-jets of functions ℝⁿ→ℝ^D at base points.
//!
//! A jet stores the Taylor coefficients ∂^αP(base)/α! of a polynomial of
//! degree ≤ m, densely, in graded-lex multi-index order.  Multiplication is
//! multiply-then-truncate relative to the base point, which in Taylor form
//! is a plain truncated convolution of the coefficient arrays.

use crate::error::{Error, Result};
use crate::scalar::Coeff;
use once_cell::sync::Lazy;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Shape of a jet space: functions ℝ^vars → ℝ^components truncated at `order`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JetSpace {
    pub vars: usize,
    pub order: usize,
    pub components: usize,
}

impl JetSpace {
    pub fn new(vars: usize, order: usize, components: usize) -> Result<Self> {
        if vars == 0 || components == 0 {
            return Err(Error::InvalidArgument(
                "jet space needs vars >= 1 and components >= 1".into(),
            ));
        }
        Ok(JetSpace { vars, order, components })
    }

    pub fn scalar(self) -> JetSpace {
        JetSpace { components: 1, ..self }
    }

    /// C(vars + order, vars): dimension of the scalar polynomial space.
    pub fn scalar_dim(&self) -> usize {
        JetBasis::get(self.vars, self.order).len()
    }

    /// Dimension of 𝒫^D in flat coordinates.
    pub fn flat_dim(&self) -> usize {
        self.components * self.scalar_dim()
    }
}

/// Exponent tuple α of a partial derivative ∂^α.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(vars: usize) -> Self {
        MultiIndex(vec![0; vars])
    }

    pub fn unit(vars: usize, axis: usize) -> Self {
        let mut e = vec![0; vars];
        e[axis] = 1;
        MultiIndex(e)
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn vars(&self) -> usize {
        self.0.len()
    }

    /// Componentwise sum α + β.
    pub fn plus(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Componentwise difference, or None when any entry would go negative.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    /// α! as u64 (desk-scale orders only).
    pub fn factorial(&self) -> u64 {
        self.0.iter().map(|&a| factorial(a as u64)).product()
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MultiIndex {
    /// Graded-lex: compare by total order first, then lexicographically.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.order(), &self.0).cmp(&(other.order(), &other.0))
    }
}

pub fn factorial(n: u64) -> u64 {
    (1..=n).product::<u64>().max(1)
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Π over coordinates of C(αᵢ, βᵢ).
pub fn multi_binomial(a: &MultiIndex, b: &MultiIndex) -> u64 {
    a.0.iter()
        .zip(&b.0)
        .map(|(&ai, &bi)| binomial(ai as u64, bi as u64))
        .product()
}

/// Π over coordinates of αᵢ!/(αᵢ−βᵢ)! — the falling factorial of ∂^β on x^α.
pub fn multi_falling(a: &MultiIndex, b: &MultiIndex) -> u64 {
    a.0.iter()
        .zip(&b.0)
        .map(|(&ai, &bi)| {
            if bi > ai {
                0
            } else {
                ((ai - bi + 1)..=ai).map(|v| v as u64).product::<u64>().max(1)
            }
        })
        .product()
}

/// Enumeration of all multi-indices with |α| ≤ order, graded-lex, with a
/// position lookup.  Shared per (vars, order) through a global cache.
#[derive(Debug)]
pub struct JetBasis {
    pub vars: usize,
    pub order: usize,
    pub indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
}

static BASIS_CACHE: Lazy<Mutex<HashMap<(usize, usize), Arc<JetBasis>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

impl JetBasis {
    pub fn get(vars: usize, order: usize) -> Arc<JetBasis> {
        let mut cache = BASIS_CACHE.lock().unwrap();
        cache
            .entry((vars, order))
            .or_insert_with(|| Arc::new(JetBasis::build(vars, order)))
            .clone()
    }

    fn build(vars: usize, order: usize) -> JetBasis {
        let mut indices = Vec::new();
        for grade in 0..=order as u32 {
            let mut current = vec![0u32; vars];
            compositions(grade, 0, &mut current, &mut indices);
        }
        let lookup = indices
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, mi)| (mi, i))
            .collect();
        JetBasis { vars, order, indices, lookup }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn position(&self, mi: &MultiIndex) -> Option<usize> {
        self.lookup.get(mi).copied()
    }
}

/// All ways to place `total` across slots `at..`, in lex order.
fn compositions(total: u32, at: usize, current: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    let vars = current.len();
    if at == vars - 1 {
        current[at] = total;
        out.push(MultiIndex(current.clone()));
        current[at] = 0;
        return;
    }
    // Lex order on the tuple itself: larger leading entries first would be
    // "revlex"; plain lex ascends, so iterate descending on this slot.
    for v in (0..=total).rev() {
        current[at] = v;
        compositions(total - v, at + 1, current, out);
        current[at] = 0;
    }
}

/// Scalar m-jet at a base point: Taylor coefficients ∂^αP(base)/α!.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet<T: Coeff> {
    pub vars: usize,
    pub order: usize,
    pub base: Vec<T>,
    pub coeffs: Vec<T>,
}

impl<T: Coeff> Jet<T> {
    pub fn new(base: Vec<T>, order: usize, coeffs: Vec<T>) -> Result<Self> {
        let vars = base.len();
        let dim = JetBasis::get(vars, order).len();
        if coeffs.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {dim} coefficients for vars={vars}, order={order}, got {}",
                coeffs.len()
            )));
        }
        Ok(Jet { vars, order, base, coeffs })
    }

    pub fn zero(base: Vec<T>, order: usize) -> Self {
        let vars = base.len();
        let dim = JetBasis::get(vars, order).len();
        Jet { vars, order, base, coeffs: vec![T::zero(); dim] }
    }

    pub fn constant(base: Vec<T>, order: usize, value: T) -> Self {
        let mut jet = Self::zero(base, order);
        jet.coeffs[0] = value;
        jet
    }

    pub fn basis(&self) -> Arc<JetBasis> {
        JetBasis::get(self.vars, self.order)
    }

    /// Jet of the polynomial Σ c_μ x^μ (absolute coordinates), re-expanded
    /// about `base` and truncated at `order`.
    pub fn from_polynomial(base: Vec<T>, order: usize, terms: &[(MultiIndex, T)]) -> Result<Self> {
        let vars = base.len();
        let basis = JetBasis::get(vars, order);
        let mut jet = Self::zero(base.clone(), order);
        for (mu, c) in terms {
            if mu.vars() != vars {
                return Err(Error::DimensionMismatch(
                    "monomial exponent arity differs from base arity".into(),
                ));
            }
            // x^μ = Π (u_i + b_i)^{μ_i}; expand binomially, keep |β| ≤ order.
            for beta in basis.indices.iter() {
                if let Some(rest) = mu.checked_sub(beta) {
                    let mut term = c.clone() * T::from_u64(multi_binomial(mu, beta));
                    for (i, &r) in rest.0.iter().enumerate() {
                        for _ in 0..r {
                            term = term * base[i].clone();
                        }
                    }
                    let pos = basis.position(beta).unwrap();
                    jet.coeffs[pos] = jet.coeffs[pos].clone() + term;
                }
            }
        }
        Ok(jet)
    }

    fn check_compatible(&self, other: &Jet<T>) -> Result<()> {
        if self.vars != other.vars || self.order != other.order {
            return Err(Error::SpaceMismatch(format!(
                "({}, {}) vs ({}, {})",
                self.vars, self.order, other.vars, other.order
            )));
        }
        if self.base != other.base {
            return Err(Error::BaseMismatch(
                "jets must share a base point for ring operations".into(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Jet<T>) -> Result<Jet<T>> {
        self.check_compatible(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.clone() + b.clone())
            .collect();
        Ok(Jet { vars: self.vars, order: self.order, base: self.base.clone(), coeffs })
    }

    pub fn sub(&self, other: &Jet<T>) -> Result<Jet<T>> {
        self.check_compatible(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.clone() - b.clone())
            .collect();
        Ok(Jet { vars: self.vars, order: self.order, base: self.base.clone(), coeffs })
    }

    pub fn scale(&self, s: T) -> Jet<T> {
        let coeffs = self.coeffs.iter().map(|c| c.clone() * s.clone()).collect();
        Jet { vars: self.vars, order: self.order, base: self.base.clone(), coeffs }
    }

    /// Ring multiplication P ⊙ Q: multiply as polynomials about the shared
    /// base, discard degrees > order.  In Taylor form this is a truncated
    /// convolution.
    pub fn multiply(&self, other: &Jet<T>) -> Result<Jet<T>> {
        self.check_compatible(other)?;
        let basis = self.basis();
        let mut out = vec![T::zero(); basis.len()];
        for (ia, alpha) in basis.indices.iter().enumerate() {
            if self.coeffs[ia].is_zero_coeff() {
                continue;
            }
            for (ib, beta) in basis.indices.iter().enumerate() {
                if alpha.order() + beta.order() > self.order as u32 {
                    continue;
                }
                if other.coeffs[ib].is_zero_coeff() {
                    continue;
                }
                let gamma = alpha.plus(beta);
                let pos = basis.position(&gamma).unwrap();
                out[pos] =
                    out[pos].clone() + self.coeffs[ia].clone() * other.coeffs[ib].clone();
            }
        }
        Ok(Jet { vars: self.vars, order: self.order, base: self.base.clone(), coeffs: out })
    }

    /// Re-expand the identical polynomial about a new base point.
    pub fn rebase(&self, newbase: &[T]) -> Result<Jet<T>> {
        if newbase.len() != self.vars {
            return Err(Error::DimensionMismatch(format!(
                "rebase target has arity {}, jet has {}",
                newbase.len(),
                self.vars
            )));
        }
        let basis = self.basis();
        let shift: Vec<T> = newbase
            .iter()
            .zip(&self.base)
            .map(|(n, b)| n.clone() - b.clone())
            .collect();
        let mut out = vec![T::zero(); basis.len()];
        // c'_β = Σ_{α ≥ β} c_α · C(α,β) · (b'−b)^{α−β}
        for (ib, beta) in basis.indices.iter().enumerate() {
            let mut acc = T::zero();
            for (ia, alpha) in basis.indices.iter().enumerate() {
                if let Some(diff) = alpha.checked_sub(beta) {
                    let mut term =
                        self.coeffs[ia].clone() * T::from_u64(multi_binomial(alpha, beta));
                    for (i, &d) in diff.0.iter().enumerate() {
                        for _ in 0..d {
                            term = term * shift[i].clone();
                        }
                    }
                    acc = acc + term;
                }
            }
            out[ib] = acc;
        }
        Ok(Jet { vars: self.vars, order: self.order, base: newbase.to_vec(), coeffs: out })
    }

    /// Exact derivative ∂^αP evaluated at an arbitrary point.
    pub fn query(&self, alpha: &MultiIndex, point: &[T]) -> Result<T> {
        let w = derivative_functional(self.vars, self.order, &self.base, alpha, point)?;
        let mut acc = T::zero();
        for (wi, ci) in w.iter().zip(&self.coeffs) {
            acc = acc + wi.clone() * ci.clone();
        }
        Ok(acc)
    }

    /// P evaluated at a point.
    pub fn evaluate(&self, point: &[T]) -> Result<T> {
        self.query(&MultiIndex::zero(self.vars), point)
    }
}

/// Weights w with ∂^αP(point) = w · coeffs for jets based at `base`.
///
/// ∂^α u^γ = γ!/(γ−α)! u^{γ−α}, with u = point − base.
pub fn derivative_functional<T: Coeff>(
    vars: usize,
    order: usize,
    base: &[T],
    alpha: &MultiIndex,
    point: &[T],
) -> Result<Vec<T>> {
    if alpha.order() > order as u32 {
        return Err(Error::OrderExceeded { got: alpha.order(), max: order as u32 });
    }
    if point.len() != vars || base.len() != vars || alpha.vars() != vars {
        return Err(Error::DimensionMismatch("derivative functional arity".into()));
    }
    let basis = JetBasis::get(vars, order);
    let u: Vec<T> = point
        .iter()
        .zip(base)
        .map(|(p, b)| p.clone() - b.clone())
        .collect();
    let mut w = vec![T::zero(); basis.len()];
    for (ig, gamma) in basis.indices.iter().enumerate() {
        if let Some(diff) = gamma.checked_sub(alpha) {
            let mut term = T::from_u64(multi_falling(gamma, alpha));
            for (i, &d) in diff.0.iter().enumerate() {
                for _ in 0..d {
                    term = term * u[i].clone();
                }
            }
            w[ig] = term;
        }
    }
    Ok(w)
}

/// D-tuple of scalar jets sharing a base point: an element of ℛ_x^D.
#[derive(Debug, Clone, PartialEq)]
pub struct JetVector<T: Coeff> {
    pub comps: Vec<Jet<T>>,
}

impl<T: Coeff> JetVector<T> {
    pub fn new(comps: Vec<Jet<T>>) -> Result<Self> {
        if comps.is_empty() {
            return Err(Error::InvalidArgument("jet vector needs >= 1 component".into()));
        }
        let first = &comps[0];
        for c in &comps[1..] {
            if c.base != first.base || c.vars != first.vars || c.order != first.order {
                return Err(Error::BaseMismatch(
                    "jet vector components must share base and space".into(),
                ));
            }
        }
        Ok(JetVector { comps })
    }

    pub fn zero(base: Vec<T>, order: usize, components: usize) -> Self {
        JetVector {
            comps: (0..components).map(|_| Jet::zero(base.clone(), order)).collect(),
        }
    }

    pub fn base(&self) -> &[T] {
        &self.comps[0].base
    }

    pub fn order(&self) -> usize {
        self.comps[0].order
    }

    pub fn vars(&self) -> usize {
        self.comps[0].vars
    }

    pub fn components(&self) -> usize {
        self.comps.len()
    }

    pub fn space(&self) -> JetSpace {
        JetSpace {
            vars: self.vars(),
            order: self.order(),
            components: self.components(),
        }
    }

    pub fn sub(&self, other: &JetVector<T>) -> Result<JetVector<T>> {
        if self.components() != other.components() {
            return Err(Error::DimensionMismatch("component counts differ".into()));
        }
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<_>>()?;
        Ok(JetVector { comps })
    }

    /// Module action Q ⊙ (P₁,…,P_D).
    pub fn mul_scalar_jet(&self, q: &Jet<T>) -> Result<JetVector<T>> {
        let comps = self
            .comps
            .iter()
            .map(|p| q.multiply(p))
            .collect::<Result<_>>()?;
        Ok(JetVector { comps })
    }

    pub fn rebase(&self, newbase: &[T]) -> Result<JetVector<T>> {
        let comps = self
            .comps
            .iter()
            .map(|c| c.rebase(newbase))
            .collect::<Result<_>>()?;
        Ok(JetVector { comps })
    }

    /// Flat coordinates: component-major concatenation of Taylor coefficients.
    pub fn flat(&self) -> Vec<T> {
        self.comps.iter().flat_map(|c| c.coeffs.iter().cloned()).collect()
    }

    pub fn from_flat(base: Vec<T>, order: usize, components: usize, flat: &[T]) -> Result<Self> {
        let dim = JetBasis::get(base.len(), order).len();
        if flat.len() != dim * components {
            return Err(Error::DimensionMismatch(format!(
                "flat length {} != {} * {}",
                flat.len(),
                components,
                dim
            )));
        }
        let comps = (0..components)
            .map(|d| Jet::new(base.clone(), order, flat[d * dim..(d + 1) * dim].to_vec()))
            .collect::<Result<_>>()?;
        Ok(JetVector { comps })
    }
}

impl JetVector<f64> {
    /// Whitney difference quotient between jets at distinct base points:
    /// max over components of |∂^α(P_k−Q_k)(P.base)| / |P.base−Q.base|^{m−|α|}.
    pub fn whitney_quotient(&self, other: &JetVector<f64>, alpha: &MultiIndex) -> Result<f64> {
        let m = self.order() as u32;
        if alpha.order() > m {
            return Err(Error::OrderExceeded { got: alpha.order(), max: m });
        }
        if self.components() != other.components() {
            return Err(Error::DimensionMismatch("component counts differ".into()));
        }
        let dist: f64 = self
            .base()
            .iter()
            .zip(other.base())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist == 0.0 {
            return Err(Error::BaseMismatch(
                "whitney quotient needs distinct base points".into(),
            ));
        }
        let denom = dist.powi((m - alpha.order()) as i32);
        let mut worst = 0.0f64;
        for (p, q) in self.comps.iter().zip(&other.comps) {
            let diff = p.query(alpha, &p.base)? - q.query(alpha, &p.base)?;
            worst = worst.max(diff.abs() / denom);
        }
        Ok(worst)
    }
}

/// m-jet at 0 of a one-variable function, tagged with the parameter x̄ it
/// was taken at; an element of 𝔭 in Taylor form (`coeffs[l]` = p^{(l)}(0)/l!).
#[derive(Debug, Clone, PartialEq)]
pub struct OneDJet<T: Coeff> {
    pub param: T,
    pub coeffs: Vec<T>,
}

impl<T: Coeff> OneDJet<T> {
    pub fn new(param: T, coeffs: Vec<T>) -> Self {
        OneDJet { param, coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// d^a/dy^a p evaluated at y.
    pub fn derivative_at(&self, a: usize, y: T) -> T {
        let mut acc = T::zero();
        for (l, c) in self.coeffs.iter().enumerate() {
            if l < a {
                continue;
            }
            let fall = ((l - a + 1)..=l).map(|v| v as u64).product::<u64>().max(1);
            let mut term = c.clone() * T::from_u64(fall);
            for _ in 0..(l - a) {
                term = term * y.clone();
            }
            acc = acc + term;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn graded_lex_enumeration() {
        let b = JetBasis::get(2, 2);
        let expect: Vec<MultiIndex> = [
            [0, 0], // grade 0
            [1, 0],
            [0, 1], // grade 1, lex descending on first slot per our convention
            [2, 0],
            [1, 1],
            [0, 2],
        ]
        .iter()
        .map(|v| mi(v))
        .collect();
        assert_eq!(b.indices, expect);
        assert_eq!(b.len(), 6);
    }

    #[test]
    fn scalar_dims_match_binomial() {
        for n in 1..=3usize {
            for m in 0..=4usize {
                let dim = JetBasis::get(n, m).len();
                assert_eq!(dim as u64, binomial((n + m) as u64, n as u64));
            }
        }
    }

    #[test]
    fn unit_of_ring() {
        // (1, P) → P
        let base = vec![0.3, -1.2];
        let one = Jet::constant(base.clone(), 3, 1.0);
        let p = Jet::new(base, 3, (0..10).map(|i| i as f64 * 0.7 - 2.0).collect()).unwrap();
        let prod = one.multiply(&p).unwrap();
        assert_eq!(prod, p);
    }

    #[test]
    fn degree_two_truncated_at_order_one() {
        // base 0, m=1, a=b=x → 0
        let x = Jet::new(vec![0.0], 1, vec![0.0, 1.0]).unwrap();
        let sq = x.multiply(&x).unwrap();
        assert_eq!(sq.coeffs, vec![0.0, 0.0]);
    }

    #[test]
    fn multiply_matches_symbolic_oracle() {
        // base (1,0), m=2, a = x², b = y+1: the product x²y + x² re-expanded
        // about (1,0) and truncated at degree 2.
        let base = vec![1.0, 0.0];
        let a = Jet::from_polynomial(base.clone(), 2, &[(mi(&[2, 0]), 1.0)]).unwrap();
        let b = Jet::from_polynomial(
            base.clone(),
            2,
            &[(mi(&[0, 1]), 1.0), (mi(&[0, 0]), 1.0)],
        )
        .unwrap();
        let got = a.multiply(&b).unwrap();
        // Oracle: expand x²(y+1) about (1,0) symbolically (u = x−1, v = y):
        //   (1 + 2u + u²)(1 + v) → 1 + 2u + v + u² + 2uv after truncation.
        let basis = JetBasis::get(2, 2);
        let coeff = |j: &Jet<f64>, idx: &[u32]| j.coeffs[basis.position(&mi(idx)).unwrap()];
        assert_eq!(coeff(&got, &[0, 0]), 1.0);
        assert_eq!(coeff(&got, &[1, 0]), 2.0);
        assert_eq!(coeff(&got, &[0, 1]), 1.0);
        assert_eq!(coeff(&got, &[2, 0]), 1.0);
        assert_eq!(coeff(&got, &[1, 1]), 2.0);
        assert_eq!(coeff(&got, &[0, 2]), 0.0);
    }

    #[test]
    fn rebase_identity_and_linear() {
        let p = Jet::new(vec![0.5], 3, vec![1.0, -2.0, 0.25, 3.0]).unwrap();
        let same = p.rebase(&[0.5]).unwrap();
        assert_eq!(same, p);

        // P = x at base 0, rebased to 1 → constant 1, slope 1.
        let x = Jet::new(vec![0.0], 1, vec![0.0, 1.0]).unwrap();
        let at1 = x.rebase(&[1.0]).unwrap();
        assert_eq!(at1.coeffs, vec![1.0, 1.0]);
    }

    #[test]
    fn rebase_round_trip() {
        let p = Jet::new(vec![0.2, -0.7], 3, (0..10).map(|i| (i as f64).sin()).collect())
            .unwrap();
        let away = p.rebase(&[1.3, 2.1]).unwrap();
        let back = away.rebase(&[0.2, -0.7]).unwrap();
        for (a, b) in p.coeffs.iter().zip(&back.coeffs) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn query_constant_and_base() {
        let c = Jet::constant(vec![1.0, 2.0], 2, 7.5);
        assert_eq!(c.query(&mi(&[0, 0]), &[1.0, 2.0]).unwrap(), 7.5);
        assert_eq!(c.query(&mi(&[1, 0]), &[5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(c.query(&mi(&[0, 2]), &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn query_order_exceeded_errors() {
        let c = Jet::constant(vec![0.0], 1, 1.0);
        assert!(c.query(&mi(&[2]), &[0.0]).is_err());
    }

    #[test]
    fn query_matches_finite_differences() {
        // random jet vs central differences of its evaluation
        let p = Jet::new(vec![0.1, -0.3], 3, (0..10).map(|i| ((i * 7 + 3) % 11) as f64 * 0.13 - 0.5).collect()).unwrap();
        let at = [0.4, 0.2];
        let h = 1e-4;
        // ∂_x via 5-point rule
        let f = |x: f64, y: f64| p.evaluate(&[x, y]).unwrap();
        let dx = (f(at[0] - h, at[1]) - 8.0 * f(at[0] - h / 2.0, at[1])
            + 8.0 * f(at[0] + h / 2.0, at[1])
            - f(at[0] + h, at[1]))
            / (6.0 * h);
        let exact = p.query(&mi(&[1, 0]), &at).unwrap();
        assert!((dx - exact).abs() < 1e-6, "{dx} vs {exact}");
    }

    #[test]
    fn product_rule_exact_in_rational_mode() {
        type Q = BigRational;
        let base: Vec<Q> = vec![Q::from_ratio(1, 3)];
        let f = Jet::<Q>::from_polynomial(
            base.clone(),
            4,
            &[(mi(&[2]), Q::from_ratio(3, 7)), (mi(&[0]), Q::from_ratio(-1, 2))],
        )
        .unwrap();
        let g = Jet::<Q>::from_polynomial(
            base.clone(),
            4,
            &[(mi(&[1]), Q::from_ratio(5, 11)), (mi(&[2]), Q::from_ratio(2, 9))],
        )
        .unwrap();
        // deg f + deg g = 4 ≤ order, so ⊙ equals the exact polynomial product.
        let prod = f.multiply(&g).unwrap();
        // Oracle: J_x(FG) from the exact product polynomial.
        // FG = (3/7 x² − 1/2)(5/11 x + 2/9 x²)
        let fg = [
            (mi(&[3]), Q::from_ratio(15, 77)),
            (mi(&[4]), Q::from_ratio(6, 63)),
            (mi(&[1]), Q::from_ratio(-5, 22)),
            (mi(&[2]), Q::from_ratio(-2, 18)),
        ];
        let oracle = Jet::<Q>::from_polynomial(base, 4, &fg).unwrap();
        assert_eq!(prod, oracle);
    }

    #[test]
    fn whitney_quotient_basics() {
        // same polynomial rebased → 0 for all α
        let p = Jet::new(vec![0.0], 2, vec![1.0, 2.0, 3.0]).unwrap();
        let q = p.rebase(&[0.5]).unwrap();
        let pv = JetVector::new(vec![p]).unwrap();
        let qv = JetVector::new(vec![q]).unwrap();
        for a in 0..=2u32 {
            let w = pv.whitney_quotient(&qv, &mi(&[a])).unwrap();
            assert!(w < 1e-12, "alpha={a}: {w}");
        }

        // m=1, P=0 at 0, Q=1 at 1, α=0 → 1
        let p0 = Jet::zero(vec![0.0], 1);
        let q1 = Jet::constant(vec![1.0], 1, 1.0);
        let w = JetVector::new(vec![p0])
            .unwrap()
            .whitney_quotient(&JetVector::new(vec![q1]).unwrap(), &mi(&[0]))
            .unwrap();
        assert_eq!(w, 1.0);
    }

    #[test]
    fn whitney_quotient_of_x_squared_is_order_one() {
        // jets of f(x)=x² at 0 and h: quotient for α=0 is O(1) as h→0
        for k in 1..=6 {
            let h = 0.5f64.powi(k);
            let at0 = Jet::from_polynomial(vec![0.0], 1, &[(mi(&[2]), 1.0)]).unwrap();
            let ath = Jet::from_polynomial(vec![h], 1, &[(mi(&[2]), 1.0)]).unwrap();
            let w = JetVector::new(vec![at0])
                .unwrap()
                .whitney_quotient(&JetVector::new(vec![ath]).unwrap(), &mi(&[0]))
                .unwrap();
            // |P₀(0) − P_h(0)| / h = |0 − (h² − 2h·h)| / h = h
            assert!(w <= 1.0, "quotient blew up: {w}");
        }
    }

    #[test]
    fn whitney_quotient_coincident_bases_error() {
        let p = JetVector::new(vec![Jet::zero(vec![0.0], 1)]).unwrap();
        let q = JetVector::new(vec![Jet::constant(vec![0.0], 1, 1.0)]).unwrap();
        assert!(p.whitney_quotient(&q, &mi(&[0])).is_err());
    }

    #[test]
    fn one_d_jet_derivative() {
        // p(y) = 1 + 2y + 3y² (Taylor coeffs) → p'(y) = 2 + 6y
        let p = OneDJet::new(0.5, vec![1.0, 2.0, 3.0]);
        assert_eq!(p.derivative_at(1, 0.0), 2.0);
        assert_eq!(p.derivative_at(1, 1.0), 8.0);
        assert_eq!(p.derivative_at(2, 9.9), 6.0);
    }
}
