//! Ladder fits: log-log decay exponents and truncated Puiseux models.
//!
//! Finite data cannot certify a little-o; the house rule is a log-log slope
//! fit over a geometric ladder with a margin above the target exponent.

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use std::collections::BTreeSet;

use crate::linalg::least_norm_solve;
use crate::puiseux::PuiseuxPoly;
use crate::tol::{LOG_FLOOR, PUISEUX_FIT_TOL};

/// Result of a log-log slope fit of values against scales.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    /// Fitted exponent; +∞ when every value sat below the log floor.
    pub slope: f64,
    /// Points that entered the fit.
    pub used: usize,
    /// Value at the finest scale.
    pub final_value: f64,
    /// Largest value over the ladder.
    pub max_value: f64,
}

impl DecayFit {
    /// o(scale^target) surrogate: slope must clear the target by `margin`.
    pub fn certifies(&self, target: f64, margin: f64) -> bool {
        self.slope > target + margin
    }
}

/// Least-squares slope of ln(value) against ln(scale).
///
/// Values at or below the log floor are treated as exact zeros: they are
/// dropped from the fit, and if fewer than two genuine values remain the
/// ladder counts as identically zero (slope +∞).
pub fn decay_fit(scales: &[f64], values: &[f64]) -> Option<DecayFit> {
    assert_eq!(scales.len(), values.len());
    let pts: Vec<(f64, f64)> = scales
        .iter()
        .zip(values)
        .filter(|(s, v)| s.is_finite() && v.is_finite() && **s > 0.0)
        .map(|(s, v)| (*s, v.abs()))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let max_value = pts.iter().map(|p| p.1).fold(0.0f64, f64::max);
    let final_value = pts.iter().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap().1;
    let live: Vec<(f64, f64)> = pts.iter().copied().filter(|(_, v)| *v > LOG_FLOOR).collect();
    if live.len() < 2 {
        return Some(DecayFit { slope: f64::INFINITY, used: live.len(), final_value, max_value });
    }
    let n = live.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (s, v) in &live {
        let x = s.ln();
        let y = v.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    Some(DecayFit { slope, used: live.len(), final_value, max_value })
}

/// A fitted Puiseux model with its residual diagnostics.
#[derive(Debug, Clone)]
pub struct PuiseuxFit {
    pub series: PuiseuxPoly<f64>,
    /// Relative l2 residual over the samples.
    pub rel_residual: f64,
    pub exponents: Vec<Ratio<i64>>,
}

/// Fits samples (x, v) to Σ c_e x^e with exponents on the rational grid
/// {q/N : N ≤ max_den} ∩ [min_exp, max_exp].
///
/// Works by peeling: estimate the leading exponent of the current residual
/// from a log-log slope over the smallest x's, snap it to the grid, refit all
/// chosen columns jointly, repeat until the relative residual clears the
/// threshold or the term cap is hit.
pub fn fit_puiseux(
    xs: &[f64],
    vs: &[f64],
    max_den: i64,
    min_exp: Ratio<i64>,
    max_exp: Ratio<i64>,
    max_terms: usize,
) -> PuiseuxFit {
    assert_eq!(xs.len(), vs.len());
    let scale = vs.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    if scale <= LOG_FLOOR {
        return PuiseuxFit {
            series: PuiseuxPoly::zero(),
            rel_residual: 0.0,
            exponents: vec![],
        };
    }

    let column = |e: Ratio<i64>| -> DVector<f64> {
        let ef = *e.numer() as f64 / *e.denom() as f64;
        DVector::from_iterator(xs.len(), xs.iter().map(|x| x.powf(ef)))
    };
    let snap = |slope: f64| -> Option<Ratio<i64>> {
        let mut best: Option<(f64, Ratio<i64>)> = None;
        for den in 1..=max_den {
            let num = (slope * den as f64).round() as i64;
            let cand = Ratio::new(num, den);
            if cand < min_exp || cand > max_exp {
                continue;
            }
            let err = (slope - num as f64 / den as f64).abs();
            if best.is_none_or(|(e, _)| err + 1e-12 < e) {
                best = Some((err, cand));
            }
        }
        best.map(|(_, e)| e)
    };

    let mut dict: BTreeSet<Ratio<i64>> = BTreeSet::new();
    for den in 1..=max_den {
        let lo = (min_exp * Ratio::new(den, 1)).ceil().to_integer();
        let hi = (max_exp * Ratio::new(den, 1)).floor().to_integer();
        for num in lo..=hi {
            dict.insert(Ratio::new(num, den));
        }
    }
    let dict: Vec<Ratio<i64>> = dict.into_iter().collect();

    // Smallest quarter of the samples drives the leading-exponent estimates.
    let mut by_x: Vec<usize> = (0..xs.len()).collect();
    by_x.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let head = &by_x[..(by_x.len() / 4).max(3).min(by_x.len())];

    let target = DVector::from_column_slice(vs);
    let rel = |r: &DVector<f64>| r.norm() / (scale * (xs.len() as f64).sqrt());
    let refit = |chosen: &[Ratio<i64>]| -> (DVector<f64>, DVector<f64>) {
        if chosen.is_empty() {
            return (DVector::zeros(0), target.clone());
        }
        let a = DMatrix::from_columns(
            &chosen.iter().map(|&e| column(e)).collect::<Vec<_>>(),
        );
        let coeffs = least_norm_solve(&a, &target);
        let resid = &target - &a * &coeffs;
        (coeffs, resid)
    };

    let mut chosen: Vec<Ratio<i64>> = Vec::new();
    let mut best_coeffs = DVector::zeros(0);
    let mut best_resid = target.clone();
    while chosen.len() < max_terms {
        if rel(&best_resid) < PUISEUX_FIT_TOL {
            break;
        }
        // Peel: snap the residual's leading exponent to the grid.
        let head_scales: Vec<f64> = head.iter().map(|&i| xs[i]).collect();
        let head_vals: Vec<f64> = head.iter().map(|&i| best_resid[i]).collect();
        let peeled = decay_fit(&head_scales, &head_vals)
            .filter(|f| f.slope.is_finite())
            .and_then(|f| snap(f.slope))
            .filter(|e| !chosen.contains(e));
        let candidate = match peeled {
            Some(e) => Some(e),
            None => {
                // Fallback: pick the grid exponent whose joint refit shrinks
                // the residual most, earlier exponent on ties.
                let mut best: Option<(f64, Ratio<i64>)> = None;
                for &e in &dict {
                    if chosen.contains(&e) {
                        continue;
                    }
                    let mut trial = chosen.clone();
                    trial.push(e);
                    trial.sort();
                    let (_, r) = refit(&trial);
                    let score = r.norm();
                    if best.is_none_or(|(s, _)| score + 1e-15 < s) {
                        best = Some((score, e));
                    }
                }
                best.map(|(_, e)| e)
            }
        };
        let Some(e) = candidate else { break };
        chosen.push(e);
        chosen.sort();
        let (coeffs, resid) = refit(&chosen);
        best_coeffs = coeffs;
        best_resid = resid;
    }

    let rel_residual = rel(&best_resid);
    let mut lcm_den = 1i64;
    for e in &chosen {
        lcm_den = lcm_den / gcd(lcm_den, *e.denom()) * e.denom();
    }
    let terms: Vec<(i64, f64)> = chosen
        .iter()
        .zip(best_coeffs.iter())
        .map(|(e, &c)| ((e.numer() * (lcm_den / e.denom())), c))
        .collect();
    PuiseuxFit {
        series: PuiseuxPoly::new(lcm_den as u32, &terms),
        rel_residual,
        exponents: chosen,
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// Geometric ladder start·ratio^k, k = 0..count.
pub fn geometric_ladder(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * ratio.powi(k as i32)).collect()
}
