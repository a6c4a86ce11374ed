//! Truncated Puiseux-series arithmetic for one-variable semialgebraic data.
//!
//! A series is Σ c_q x^{q/N} with a fixed ramification index N, finitely many
//! terms, and an optional truncation bound (the largest exponent numerator
//! still trusted).  All arithmetic is exact on the retained terms.

use num_rational::Ratio;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::Coeff;

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn lcm(a: i64, b: i64) -> i64 {
    a / gcd(a, b) * b
}

#[derive(Debug, Clone, PartialEq)]
pub struct PuiseuxPoly<T: Coeff = f64> {
    /// Ramification index N.
    pub ram: u32,
    /// Exponent numerator q ↦ coefficient of x^{q/N}.
    pub coeffs: BTreeMap<i64, T>,
    /// Largest numerator retained; `None` means the series is exact.
    pub trunc: Option<i64>,
}

impl<T: Coeff> PuiseuxPoly<T> {
    pub fn new(ram: u32, terms: &[(i64, T)]) -> Self {
        let mut coeffs = BTreeMap::new();
        for (q, c) in terms {
            if !c.is_zero_coeff() {
                let entry = coeffs.entry(*q).or_insert_with(T::zero);
                *entry = entry.clone() + c.clone();
            }
        }
        coeffs.retain(|_, c: &mut T| !c.is_zero_coeff());
        let mut p = PuiseuxPoly { ram: ram.max(1), coeffs, trunc: None };
        p.canonicalize();
        p
    }

    pub fn zero() -> Self {
        PuiseuxPoly { ram: 1, coeffs: BTreeMap::new(), trunc: None }
    }

    pub fn constant(c: T) -> Self {
        Self::new(1, &[(0, c)])
    }

    /// The monomial c·x^{q/N}.
    pub fn monomial(ram: u32, q: i64, c: T) -> Self {
        Self::new(ram, &[(q, c)])
    }

    /// The identity series x.
    pub fn identity() -> Self {
        Self::monomial(1, 1, T::one())
    }

    pub fn with_trunc(mut self, trunc_num: i64, trunc_ram: u32) -> Self {
        // Express the bound in units of the current ramification.
        let l = lcm(self.ram as i64, trunc_ram as i64);
        let scale_self = l / self.ram as i64;
        let bound = trunc_num * (l / trunc_ram as i64);
        self.rescale(scale_self);
        self.trunc = Some(bound);
        self.drop_beyond_trunc();
        self.canonicalize();
        self
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn rescale(&mut self, k: i64) {
        if k == 1 {
            return;
        }
        self.ram = (self.ram as i64 * k) as u32;
        self.coeffs = self.coeffs.iter().map(|(q, c)| (q * k, c.clone())).collect();
        self.trunc = self.trunc.map(|t| t * k);
    }

    fn drop_beyond_trunc(&mut self) {
        if let Some(t) = self.trunc {
            self.coeffs.retain(|q, _| *q <= t);
        }
    }

    /// Reduce the ramification by the gcd of N and all exponent numerators.
    fn canonicalize(&mut self) {
        self.coeffs.retain(|_, c| !c.is_zero_coeff());
        let mut g = self.ram as i64;
        for q in self.coeffs.keys() {
            g = gcd(g, *q);
        }
        if let Some(t) = self.trunc {
            g = gcd(g, t);
        }
        if g > 1 {
            self.ram = (self.ram as i64 / g) as u32;
            self.coeffs = self.coeffs.iter().map(|(q, c)| (q / g, c.clone())).collect();
            self.trunc = self.trunc.map(|t| t / g);
        }
    }

    fn common_ram(a: &Self, b: &Self) -> (Self, Self) {
        let l = lcm(a.ram as i64, b.ram as i64);
        let mut a = a.clone();
        let mut b = b.clone();
        a.rescale(l / a.ram as i64);
        b.rescale(l / b.ram as i64);
        (a, b)
    }

    pub fn add(&self, other: &Self) -> Self {
        let (a, b) = Self::common_ram(self, other);
        let mut coeffs = a.coeffs.clone();
        for (q, c) in &b.coeffs {
            let entry = coeffs.entry(*q).or_insert_with(T::zero);
            *entry = entry.clone() + c.clone();
        }
        let trunc = match (a.trunc, b.trunc) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (Some(x), None) | (None, Some(x)) => Some(x),
            (None, None) => None,
        };
        let mut out = PuiseuxPoly { ram: a.ram, coeffs, trunc };
        out.drop_beyond_trunc();
        out.canonicalize();
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(T::zero() - T::one()))
    }

    pub fn scale(&self, s: T) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(q, c)| (*q, c.clone() * s.clone()))
            .collect();
        let mut out = PuiseuxPoly { ram: self.ram, coeffs, trunc: self.trunc };
        out.canonicalize();
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = Self::common_ram(self, other);
        // Truncation of a product: each operand's tail shifts by the other's
        // leading order.
        let ord = |p: &Self| p.coeffs.keys().next().copied();
        let trunc = match (a.trunc, b.trunc, ord(&b), ord(&a)) {
            (Some(ta), Some(tb), Some(ob), Some(oa)) => Some((ta + ob).min(tb + oa)),
            (Some(ta), None, Some(ob), _) => Some(ta + ob),
            (None, Some(tb), _, Some(oa)) => Some(tb + oa),
            _ => None,
        };
        let mut coeffs: BTreeMap<i64, T> = BTreeMap::new();
        for (qa, ca) in &a.coeffs {
            for (qb, cb) in &b.coeffs {
                let q = qa + qb;
                if let Some(t) = trunc {
                    if q > t {
                        continue;
                    }
                }
                let entry = coeffs.entry(q).or_insert_with(T::zero);
                *entry = entry.clone() + ca.clone() * cb.clone();
            }
        }
        let mut out = PuiseuxPoly { ram: a.ram, coeffs, trunc };
        out.canonicalize();
        out
    }

    /// Termwise d/dx; the constant term drops, every exponent shifts by 1.
    pub fn derivative(&self) -> Self {
        let n = self.ram as i64;
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(q, _)| **q != 0)
            .map(|(q, c)| (*q - n, c.clone() * T::from_ratio(*q, n)))
            .collect();
        let mut out = PuiseuxPoly {
            ram: self.ram,
            coeffs,
            trunc: self.trunc.map(|t| t - n),
        };
        out.canonicalize();
        out
    }

    pub fn nth_derivative(&self, k: usize) -> Self {
        let mut cur = self.clone();
        for _ in 0..k {
            cur = cur.derivative();
        }
        cur
    }

    /// Smallest exponent q/N with nonzero coefficient.
    pub fn leading_order(&self) -> Result<Ratio<i64>> {
        let q = self.coeffs.keys().next().ok_or(Error::ZeroSeries)?;
        Ok(Ratio::new(*q, self.ram as i64))
    }

    pub fn leading_coeff(&self) -> Option<&T> {
        self.coeffs.values().next()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.ram as f64;
        let mut acc = 0.0;
        for (q, c) in &self.coeffs {
            let e = *q as f64 / n;
            let p = if e == 0.0 {
                1.0
            } else if x == 0.0 {
                if e > 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                x.powf(e)
            };
            acc += c.to_f64() * p;
        }
        acc
    }

    /// Values of d^k/dx^k for k = 0..=max_order at x.
    pub fn eval_derivs(&self, x: f64, max_order: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(max_order + 1);
        let mut cur = self.clone();
        for k in 0..=max_order {
            out.push(cur.eval(x));
            if k < max_order {
                cur = cur.derivative();
            }
        }
        out
    }
}

/// Strictly ordered ladder of critical curves 0 = ψ₀ < ψ₁ < ⋯ < ψ_smax = x
/// on (0, δ).
#[derive(Debug, Clone)]
pub struct CurveLadder {
    pub curves: Vec<PuiseuxPoly<f64>>,
    pub delta: f64,
}

impl CurveLadder {
    pub fn new(curves: Vec<PuiseuxPoly<f64>>, delta: f64) -> Result<Self> {
        if curves.len() < 2 {
            return Err(Error::InvalidArgument(
                "curve ladder needs at least the two boundary curves".into(),
            ));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument("ladder radius must be positive".into()));
        }
        if !curves[0].is_zero() {
            return Err(Error::InvalidArgument("first ladder curve must be 0".into()));
        }
        let last = curves.last().unwrap();
        if last != &PuiseuxPoly::identity() {
            return Err(Error::InvalidArgument("last ladder curve must be x".into()));
        }
        Ok(CurveLadder { curves, delta })
    }

    pub fn strip_count(&self) -> usize {
        self.curves.len() - 1
    }
}

/// Checks strict ordering of the ladder: leading orders first, then a dense
/// scan on (0, δ].  Returns validity plus the largest validated radius.
pub fn curve_ladder_validate(ladder: &CurveLadder) -> (bool, f64) {
    let sample_count = 512;
    let mut delta_ok = ladder.delta;
    for w in ladder.curves.windows(2) {
        let diff = w[1].sub(&w[0]);
        if diff.is_zero() {
            return (false, 0.0);
        }
        match diff.leading_coeff() {
            Some(c) if *c > 0.0 => {}
            _ => return (false, 0.0),
        }
        // Dense scan for the largest prefix where the gap stays positive.
        let mut largest = 0.0f64;
        let mut violated = false;
        for j in 1..=sample_count {
            let x = ladder.delta * j as f64 / sample_count as f64;
            if diff.eval(x) > 0.0 && !violated {
                largest = x;
            } else {
                violated = true;
            }
        }
        if largest == 0.0 {
            return (false, 0.0);
        }
        delta_ok = delta_ok.min(largest);
    }
    (true, delta_ok)
}

/// Tolerated growth of the envelope across the two finest y-decades before a
/// candidate exponent is rejected.
const DECADE_STABILITY_TOL: f64 = 0.25;

/// Uniformity exponent of a sampled F(x, y) → 0: the smallest integer N ≤ cap
/// with per-x sup |F|/y^{1/N} stable across the two finest y-decades, plus
/// the per-x envelope A(x) at that N.
pub fn uniformity_exponent(
    xs: &[f64],
    ys: &[f64],
    vals: &[Vec<f64>],
    cap: u32,
) -> Result<(u32, Vec<f64>)> {
    if xs.is_empty() || ys.len() < 4 || vals.len() != xs.len() {
        return Err(Error::InvalidArgument("uniformity grid too small".into()));
    }
    for row in vals {
        if row.len() != ys.len() {
            return Err(Error::InvalidArgument("ragged uniformity grid".into()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("grid values must be finite".into()));
        }
    }
    let mut order: Vec<usize> = (0..ys.len()).collect();
    order.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
    let y_min = ys[order[0]];
    if y_min <= 0.0 {
        return Err(Error::InvalidArgument("grid y values must be positive".into()));
    }
    let decade1: Vec<usize> = order.iter().copied().filter(|&j| ys[j] <= y_min * 10.0).collect();
    let decade2: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&j| ys[j] > y_min * 10.0 && ys[j] <= y_min * 100.0)
        .collect();
    if decade2.is_empty() {
        return Err(Error::InvalidArgument(
            "grid must span more than two y-decades".into(),
        ));
    }

    // Precondition: per-x limits to 0 as y → 0.
    for (i, row) in vals.iter().enumerate() {
        let overall = row.iter().cloned().fold(0.0f64, f64::max);
        let fine = decade1.iter().map(|&j| row[j]).fold(0.0f64, f64::max);
        if overall > 1e-10 && fine > 0.6 * overall {
            return Err(Error::InvalidArgument(format!(
                "F(x, ·) does not tend to 0 at x = {}",
                xs[i]
            )));
        }
    }

    for n in 1..=cap {
        let inv = 1.0 / n as f64;
        let mut stable = true;
        'rows: for row in vals {
            let env = |j: usize| row[j] / ys[j].powf(inv);
            let s1 = decade1.iter().map(|&j| env(j)).fold(0.0f64, f64::max);
            let s2 = decade2.iter().map(|&j| env(j)).fold(0.0f64, f64::max);
            if s2 <= 1e-300 {
                if s1 > 1e-12 {
                    stable = false;
                }
                continue 'rows;
            }
            if s1 > (1.0 + DECADE_STABILITY_TOL) * s2 {
                stable = false;
                break;
            }
        }
        if stable {
            let inv = 1.0 / n as f64;
            let envelope = vals
                .iter()
                .map(|row| {
                    (0..ys.len())
                        .map(|j| row[j] / ys[j].powf(inv))
                        .fold(0.0f64, f64::max)
                })
                .collect();
            return Ok((n, envelope));
        }
    }
    Err(Error::NoUniformityExponent {
        cap,
        detail: "envelope keeps growing across the finest decades".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    type Q = BigRational;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    #[test]
    fn add_zero_is_identity() {
        let a = PuiseuxPoly::<f64>::new(2, &[(1, 1.0), (3, -0.5)]);
        let z = PuiseuxPoly::zero();
        assert_eq!(a.add(&z), a);
    }

    #[test]
    fn ramification_collapse() {
        // x^{1/2} · x^{1/2} = x, canonical form has N = 1
        let h = PuiseuxPoly::<f64>::monomial(2, 1, 1.0);
        let p = h.mul(&h);
        assert_eq!(p.ram, 1);
        assert_eq!(p.coeffs.len(), 1);
        assert_eq!(p.coeffs[&1], 1.0);
    }

    #[test]
    fn square_of_sum_matches_symbolic_expansion() {
        // (x^{1/2} + x)² = x + 2x^{3/2} + x²
        let s = PuiseuxPoly::<Q>::new(2, &[(1, q(1, 1)), (2, q(1, 1))]);
        let sq = s.mul(&s);
        let expect = PuiseuxPoly::<Q>::new(2, &[(2, q(1, 1)), (3, q(2, 1)), (4, q(1, 1))]);
        assert_eq!(sq, expect);
    }

    #[test]
    fn derivative_power_rule() {
        // d/dx x^{3/2} = (3/2) x^{1/2}
        let p = PuiseuxPoly::<Q>::monomial(2, 3, q(1, 1));
        let d = p.derivative();
        assert_eq!(d, PuiseuxPoly::<Q>::monomial(2, 1, q(3, 2)));

        let c = PuiseuxPoly::<Q>::constant(q(4, 1));
        assert!(c.derivative().is_zero());
    }

    #[test]
    fn derivative_drops_leading_order_by_one() {
        let mut seed = 9u64;
        for _ in 0..100 {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let ram = 1 + (seed >> 33) % 5;
            let q0 = 1 + (seed >> 17) % 9;
            let p = PuiseuxPoly::<f64>::new(
                ram as u32,
                &[(q0 as i64, 1.25), (q0 as i64 + 3, -0.5)],
            );
            let lead = p.leading_order().unwrap();
            let dlead = p.derivative().leading_order().unwrap();
            assert_eq!(dlead, lead - Ratio::new(1, 1));
        }
    }

    #[test]
    fn leading_orders() {
        let x = PuiseuxPoly::<f64>::identity();
        assert_eq!(x.leading_order().unwrap(), Ratio::new(1, 1));
        let p = PuiseuxPoly::<f64>::new(3, &[(5, 1.0), (6, -1.0)]);
        assert_eq!(p.leading_order().unwrap(), Ratio::new(5, 3));
        assert!(PuiseuxPoly::<f64>::zero().leading_order().is_err());
    }

    #[test]
    fn product_orders_add() {
        let mut seed = 5u64;
        for _ in 0..50 {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let a = PuiseuxPoly::<f64>::new(2, &[((seed % 7) as i64 + 1, 2.0)]);
            let b = PuiseuxPoly::<f64>::new(3, &[((seed % 5) as i64 + 2, -1.5)]);
            let ab = a.mul(&b);
            assert_eq!(
                ab.leading_order().unwrap(),
                a.leading_order().unwrap() + b.leading_order().unwrap()
            );
        }
    }

    #[test]
    fn ring_axioms_exact_rationals() {
        let a = PuiseuxPoly::<Q>::new(2, &[(1, q(1, 3)), (4, q(-2, 7))]);
        let b = PuiseuxPoly::<Q>::new(3, &[(2, q(5, 2))]);
        let c = PuiseuxPoly::<Q>::new(1, &[(0, q(1, 1)), (2, q(3, 4))]);
        // commutativity, associativity, distributivity
        assert_eq!(a.mul(&b), b.mul(&a));
        assert_eq!(a.mul(&b.mul(&c)), a.mul(&b).mul(&c));
        assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
        assert_eq!(a.add(&b), b.add(&a));
    }

    #[test]
    fn truncation_tracks_product_tails() {
        let a = PuiseuxPoly::<f64>::new(1, &[(1, 1.0)]).with_trunc(3, 1);
        let b = PuiseuxPoly::<f64>::new(1, &[(2, 1.0)]).with_trunc(5, 1);
        let ab = a.mul(&b);
        // tails: ta + ord b = 3 + 2 = 5, tb + ord a = 5 + 1 = 6 → 5
        assert_eq!(ab.ram, 1);
        assert_eq!(ab.trunc, Some(5));
    }

    #[test]
    fn ladder_validation() {
        let zero = PuiseuxPoly::zero();
        let x = PuiseuxPoly::identity();
        let half = PuiseuxPoly::new(1, &[(1, 0.5)]);
        let l = CurveLadder::new(vec![zero.clone(), half, x.clone()], 1.0).unwrap();
        let (ok, d) = curve_ladder_validate(&l);
        assert!(ok);
        assert!((d - 1.0).abs() < 1e-12);

        // (0, x², x): valid only below the crossover x² < x
        let xsq = PuiseuxPoly::new(1, &[(2, 1.0)]);
        let l2 = CurveLadder::new(vec![zero.clone(), xsq, x.clone()], 2.0).unwrap();
        let (ok2, d2) = curve_ladder_validate(&l2);
        assert!(ok2);
        assert!(d2 < 1.0 && d2 > 0.5, "refined delta {d2}");

        // validate/refine idempotence
        let l2r = CurveLadder::new(l2.curves.clone(), d2).unwrap();
        let (ok3, d3) = curve_ladder_validate(&l2r);
        assert!(ok3);
        assert!((d3 - d2).abs() < 1e-12);

        // duplicate curves are invalid
        let l3 = CurveLadder::new(vec![zero, x.clone(), x], 1.0).unwrap();
        assert!(!curve_ladder_validate(&l3).0);
    }

    #[test]
    fn uniformity_exponent_basic() {
        let xs: Vec<f64> = (1..=16).map(|i| i as f64 / 16.0).collect();
        let ys: Vec<f64> = (0..64)
            .map(|j| 10f64.powf(-6.0 + 6.0 * j as f64 / 63.0))
            .collect();
        // F = y → N = 1, A ≡ 1
        let vals: Vec<Vec<f64>> = xs.iter().map(|_| ys.clone()).collect();
        let (n, a) = uniformity_exponent(&xs, &ys, &vals, 16).unwrap();
        assert_eq!(n, 1);
        assert!(a.iter().all(|v| (v - 1.0).abs() < 1e-9));

        // F = y^{1/3} → N = 3
        let vals3: Vec<Vec<f64>> = xs
            .iter()
            .map(|_| ys.iter().map(|y| y.powf(1.0 / 3.0)).collect())
            .collect();
        let (n3, _) = uniformity_exponent(&xs, &ys, &vals3, 16).unwrap();
        assert_eq!(n3, 3);

        // F = x·y^{1/2} → N = 2, A(x) = x
        let vals2: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| ys.iter().map(|y| x * y.sqrt()).collect())
            .collect();
        let (n2, a2) = uniformity_exponent(&xs, &ys, &vals2, 16).unwrap();
        assert_eq!(n2, 2);
        for (x, ax) in xs.iter().zip(&a2) {
            assert!((ax - x).abs() <= 0.05 * x, "A({x}) = {ax}");
        }
    }

    #[test]
    fn uniformity_rejects_non_vanishing_data() {
        let xs = vec![0.5];
        let ys: Vec<f64> = (0..32).map(|j| 10f64.powf(-4.0 + 4.0 * j as f64 / 31.0)).collect();
        let vals = vec![vec![1.0; ys.len()]];
        assert!(uniformity_exponent(&xs, &ys, &vals, 16).is_err());
    }
}
