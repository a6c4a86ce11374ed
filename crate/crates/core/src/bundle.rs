//! Affine jet-fibers over finite point clouds and their Glaeser refinement.
//!
//! The ε–δ refinement condition is replaced by a desk-scale surrogate: per
//! point, the minimized Whitney defect of a candidate jet is measured over a
//! shrinking radius ladder and must decay with a fitted exponent above a
//! threshold.  Fibers shrink to the affine hull of the candidates that pass.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fit::{decay_fit, geometric_ladder};
use crate::jet::{derivative_functional, JetBasis, JetSpace, JetVector};
use crate::linalg::{
    affine_distance, from_columns, kernel_basis, least_norm_solve, max_principal_angle,
    project_out, span_basis,
};
use crate::tol::{
    DECAY_SLOPE_MIN, DEFECT_FLOOR, MEMBERSHIP_TOL, PINNED_DEFECT_REL_FLOOR, RANK_REL_CUTOFF,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiberKind {
    Empty,
    Full,
    Proper,
}

/// Coset f(x) + I(x) of a jet module, stored as offset + orthonormal
/// generator span in flat coordinates.
#[derive(Debug, Clone)]
pub struct AffineFiber {
    pub kind: FiberKind,
    pub offset: Option<JetVector<f64>>,
    pub generators: Vec<JetVector<f64>>,
}

impl AffineFiber {
    pub fn empty() -> Self {
        AffineFiber { kind: FiberKind::Empty, offset: None, generators: Vec::new() }
    }

    /// The whole module 𝒫^D at a base point.
    pub fn full(space: JetSpace, base: &[f64]) -> Self {
        let dim = space.flat_dim();
        let offset = JetVector::zero(base.to_vec(), space.order, space.components);
        let generators = (0..dim)
            .map(|i| {
                let mut flat = vec![0.0; dim];
                flat[i] = 1.0;
                JetVector::from_flat(base.to_vec(), space.order, space.components, &flat)
                    .expect("standard basis jet")
            })
            .collect();
        AffineFiber { kind: FiberKind::Full, offset: Some(offset), generators }
    }

    /// Single-jet fiber {offset}.
    pub fn point(offset: JetVector<f64>) -> Self {
        AffineFiber { kind: FiberKind::Proper, offset: Some(offset), generators: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.kind == FiberKind::Empty
    }

    /// Generator count; 0 for empty and point fibers.
    pub fn dim(&self) -> usize {
        self.generators.len()
    }

    pub fn space(&self) -> Option<JetSpace> {
        self.offset.as_ref().map(|o| o.space())
    }

    pub fn offset_flat(&self) -> Option<DVector<f64>> {
        self.offset.as_ref().map(|o| DVector::from_vec(o.flat()))
    }

    pub fn generator_matrix(&self) -> DMatrix<f64> {
        let rows = self
            .offset
            .as_ref()
            .map(|o| o.space().flat_dim())
            .unwrap_or(0);
        let cols: Vec<DVector<f64>> = self
            .generators
            .iter()
            .map(|g| DVector::from_vec(g.flat()))
            .collect();
        from_columns(rows, &cols)
    }

    /// Distance from a jet to the fiber; +∞ for the empty fiber.
    pub fn distance_to(&self, jet: &JetVector<f64>) -> f64 {
        match (&self.kind, &self.offset) {
            (FiberKind::Empty, _) | (_, None) => f64::INFINITY,
            (_, Some(offset)) => {
                let v = DVector::from_vec(jet.flat());
                let o = DVector::from_vec(offset.flat());
                affine_distance(&o, &self.generator_matrix(), &v)
            }
        }
    }

    /// Fiber cut out by linear rows on the flat jet coordinates: offset is
    /// the min-norm solution, generators an orthonormal kernel basis, empty
    /// when the rows are inconsistent.
    pub fn from_constraints(
        space: JetSpace,
        base: &[f64],
        rows: &[(Vec<f64>, f64)],
    ) -> AffineFiber {
        let dim = space.flat_dim();
        if rows.is_empty() {
            return AffineFiber::full(space, base);
        }
        let a = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i].0[j]);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        let x = least_norm_solve(&a, &b);
        let resid = (&a * &x - &b).norm();
        let scale = b.norm().max(a.norm()).max(1.0);
        if resid > 1e-9 * scale {
            return AffineFiber::empty();
        }
        let kernel = kernel_basis(&a);
        let offset = JetVector::from_flat(
            base.to_vec(),
            space.order,
            space.components,
            x.as_slice(),
        )
        .expect("offset jet from solve");
        let generators = (0..kernel.ncols())
            .map(|j| {
                JetVector::from_flat(
                    base.to_vec(),
                    space.order,
                    space.components,
                    kernel.column(j).as_slice(),
                )
                .expect("kernel jet")
            })
            .collect::<Vec<_>>();
        let kind = if kernel.ncols() == dim { FiberKind::Full } else { FiberKind::Proper };
        AffineFiber { kind, offset: Some(offset), generators }
    }

    /// Extends the generator span until it is closed under ⊙-multiplication
    /// by every monomial of degree ≤ m at `base`.  The offset is unchanged.
    pub fn module_closure(&self, base: &[f64]) -> Result<AffineFiber> {
        if self.is_empty() {
            return Err(Error::EmptyFiber);
        }
        let offset = self.offset.clone().expect("non-empty fiber has offset");
        let space = offset.space();
        if self.kind == FiberKind::Full {
            return Ok(self.clone());
        }
        let basis = JetBasis::get(space.vars, space.order);
        let mut gens: Vec<JetVector<f64>> = self.generators.clone();
        loop {
            let mut extended = gens.clone();
            for g in &gens {
                for mu in basis.indices.iter().filter(|mu| mu.order() >= 1) {
                    let mut mono = crate::jet::Jet::zero(base.to_vec(), space.order);
                    mono.coeffs[basis.position(mu).unwrap()] = 1.0;
                    extended.push(g.mul_scalar_jet(&mono)?);
                }
            }
            let cols: Vec<DVector<f64>> = extended
                .iter()
                .map(|g| DVector::from_vec(g.flat()))
                .collect();
            let mat = from_columns(space.flat_dim(), &cols);
            let span = span_basis(&mat, RANK_REL_CUTOFF);
            if span.ncols() == gens.len() {
                let generators = (0..span.ncols())
                    .map(|j| {
                        JetVector::from_flat(
                            base.to_vec(),
                            space.order,
                            space.components,
                            span.column(j).as_slice(),
                        )
                        .expect("span jet")
                    })
                    .collect();
                let kind = if span.ncols() == space.flat_dim() {
                    FiberKind::Full
                } else {
                    FiberKind::Proper
                };
                return Ok(AffineFiber { kind, offset: Some(offset), generators });
            }
            gens = (0..span.ncols())
                .map(|j| {
                    JetVector::from_flat(
                        base.to_vec(),
                        space.order,
                        space.components,
                        span.column(j).as_slice(),
                    )
                    .expect("span jet")
                })
                .collect();
        }
    }
}

/// Finite point cloud with one fiber per point.
#[derive(Debug, Clone)]
pub struct SampledBundle {
    pub space: JetSpace,
    pub points: Vec<Vec<f64>>,
    pub fibers: Vec<AffineFiber>,
}

impl SampledBundle {
    pub fn new(space: JetSpace, points: Vec<Vec<f64>>, fibers: Vec<AffineFiber>) -> Result<Self> {
        if points.len() != fibers.len() {
            return Err(Error::DimensionMismatch(
                "one fiber per point required".into(),
            ));
        }
        for p in &points {
            if p.len() != space.vars {
                return Err(Error::DimensionMismatch("point arity".into()));
            }
        }
        Ok(SampledBundle { space, points, fibers })
    }

    /// Restriction ℋ|_{E'}: sublist selection.
    pub fn restrict(&self, indices: &[usize]) -> SampledBundle {
        SampledBundle {
            space: self.space,
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
            fibers: indices.iter().map(|&i| self.fibers[i].clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Knobs for the discretized refinement.
#[derive(Debug, Clone)]
pub struct RefinementParams {
    /// Neighbour count per ball; defaults to 2·dim(𝒫^D)+1.
    pub neighbors: Option<usize>,
    pub radius_start: f64,
    pub radius_ratio: f64,
    pub radius_count: usize,
    pub decay_slope_min: f64,
    pub defect_floor: f64,
    /// Offsets moving less than this count as unchanged between iterations.
    pub offset_tol: f64,
}

impl Default for RefinementParams {
    fn default() -> Self {
        RefinementParams {
            neighbors: None,
            radius_start: 0.5,
            radius_ratio: 0.5,
            radius_count: 8,
            decay_slope_min: DECAY_SLOPE_MIN,
            defect_floor: DEFECT_FLOOR,
            offset_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RefinementReport {
    pub iterations: usize,
    pub emptied_points: Vec<usize>,
    pub fiber_dims_before: Vec<usize>,
    pub fiber_dims_after: Vec<usize>,
    /// Fitted decay exponent of each point's refined offset defect.
    pub decay_fits: Vec<Option<f64>>,
    /// Points whose seminorm minimization was ill-conditioned and whose
    /// fibers were left unchanged.
    pub flagged_points: Vec<usize>,
    pub stable: bool,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Linear data of one ball: defect rows as an affine map of the candidate
/// coordinates after the neighbour freedoms are minimized out.
struct RadiusData {
    scale: f64,
    u: DMatrix<f64>,
    w: DVector<f64>,
}

impl RadiusData {
    fn defect(&self, c: &DVector<f64>) -> f64 {
        (&self.u * c + &self.w).norm()
    }
}

/// Builds the minimized Whitney-defect map for one center and one radius.
///
/// Rows cover every ordered pair among {center} ∪ neighbours, every |α| ≤ m
/// and every component; the neighbours' fiber coordinates are projected out
/// so the remaining map depends on the center candidate alone.
fn radius_data(
    bundle: &SampledBundle,
    center: usize,
    nbrs: &[usize],
    radius: f64,
) -> Option<RadiusData> {
    let space = bundle.space;
    let m = space.order as u32;
    let basis = JetBasis::get(space.vars, space.order);
    let scalar_dim = basis.len();

    // Entities: 0 = center, then neighbours; each has an offset and a span.
    let mut offsets: Vec<DVector<f64>> = Vec::with_capacity(nbrs.len() + 1);
    let mut spans: Vec<DMatrix<f64>> = Vec::with_capacity(nbrs.len() + 1);
    let mut bases: Vec<&[f64]> = Vec::with_capacity(nbrs.len() + 1);
    for &idx in std::iter::once(&center).chain(nbrs) {
        let f = &bundle.fibers[idx];
        offsets.push(f.offset_flat()?);
        spans.push(f.generator_matrix());
        bases.push(&bundle.points[idx]);
    }
    let g_center = spans[0].ncols();
    let col_starts: Vec<usize> = {
        let mut acc = 0;
        let mut v = Vec::new();
        for s in &spans[1..] {
            v.push(acc);
            acc += s.ncols();
        }
        v.push(acc);
        v
    };
    let n_other = *col_starts.last().unwrap();

    let entities = offsets.len();
    let mut rows_c: Vec<Vec<f64>> = Vec::new();
    let mut rows_o: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();

    for i in 0..entities {
        for j in 0..entities {
            if i == j {
                continue;
            }
            let d = dist(bases[i], bases[j]);
            if d == 0.0 {
                continue;
            }
            for alpha in basis.indices.iter() {
                let denom = d.powi((m - alpha.order()) as i32);
                // ∂^α at the base of entity i, applied to both jets.
                let wi = derivative_functional::<f64>(
                    space.vars,
                    space.order,
                    bases[i],
                    alpha,
                    bases[i],
                )
                .ok()?;
                let wj = derivative_functional::<f64>(
                    space.vars,
                    space.order,
                    bases[j],
                    alpha,
                    bases[i],
                )
                .ok()?;
                for comp in 0..space.components {
                    let block = comp * scalar_dim;
                    let mut row_c = vec![0.0; g_center];
                    let mut row_o = vec![0.0; n_other];
                    let mut cst = 0.0;
                    // + entity i, − entity j
                    for (ent, w, sign) in [(i, &wi, 1.0), (j, &wj, -1.0)] {
                        let off = &offsets[ent];
                        let span = &spans[ent];
                        let mut dot_off = 0.0;
                        for (k, &wk) in w.iter().enumerate() {
                            dot_off += wk * off[block + k];
                        }
                        cst += sign * dot_off / denom;
                        for col in 0..span.ncols() {
                            let mut dot = 0.0;
                            for (k, &wk) in w.iter().enumerate() {
                                dot += wk * span[(block + k, col)];
                            }
                            let val = sign * dot / denom;
                            if ent == 0 {
                                row_c[col] += val;
                            } else {
                                row_o[col_starts[ent - 1] + col] += val;
                            }
                        }
                    }
                    rows_c.push(row_c);
                    rows_o.push(row_o);
                    rhs.push(cst);
                }
            }
        }
    }

    if rows_c.is_empty() {
        return None;
    }
    let nrows = rows_c.len();
    let norm = (nrows as f64).sqrt();
    let mc = DMatrix::from_fn(nrows, g_center, |r, c| rows_c[r][c] / norm);
    let mo = DMatrix::from_fn(nrows, n_other, |r, c| rows_o[r][c] / norm);
    let v = DVector::from_iterator(nrows, rhs.iter().map(|x| x / norm));

    // Project out the neighbours' freedom: q(c) = |Π(M_c c + v)|².
    let q = span_basis(&mo, RANK_REL_CUTOFF);
    let u = &mc - &q * (q.transpose() * &mc);
    let w = project_out(&q, &v);
    Some(RadiusData { scale: radius, u, w })
}

/// One bulk-synchronous Glaeser refinement pass.
pub fn glaeser_refine_once(
    bundle: &SampledBundle,
    params: &RefinementParams,
) -> Result<(SampledBundle, RefinementReport)> {
    let space = bundle.space;
    let k_nbrs = params.neighbors.unwrap_or(2 * space.flat_dim() + 1);
    let radii = geometric_ladder(params.radius_start, params.radius_ratio, params.radius_count);

    let mut report = RefinementReport {
        fiber_dims_before: bundle.fibers.iter().map(|f| f.dim()).collect(),
        ..Default::default()
    };
    let mut new_fibers = Vec::with_capacity(bundle.len());

    for center in 0..bundle.len() {
        let fiber = &bundle.fibers[center];
        if fiber.is_empty() {
            report.emptied_points.push(center);
            report.decay_fits.push(None);
            new_fibers.push(AffineFiber::empty());
            continue;
        }

        // Distance-sorted other points.
        let mut others: Vec<(usize, f64)> = (0..bundle.len())
            .filter(|&i| i != center)
            .map(|i| (i, dist(&bundle.points[center], &bundle.points[i])))
            .filter(|(_, d)| *d > 0.0)
            .collect();
        others.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

        let mut ladder: Vec<RadiusData> = Vec::new();
        for &r in &radii {
            // Only radii whose ball is free of empty fibers carry information;
            // in the shrinking-δ limit an empty neighbour at positive distance
            // eventually leaves the ball.
            let in_ball: Vec<(usize, f64)> =
                others.iter().copied().filter(|(_, d)| *d <= r).collect();
            if in_ball.is_empty() {
                continue;
            }
            if in_ball.iter().any(|(i, _)| bundle.fibers[*i].is_empty()) {
                continue;
            }
            let nbrs: Vec<usize> = in_ball.iter().take(k_nbrs).map(|(i, _)| *i).collect();
            if let Some(rd) = radius_data(bundle, center, &nbrs, r) {
                ladder.push(rd);
            }
        }

        if ladder.len() < 3 {
            // Not enough shrinking-ball data to certify anything; leave the
            // fiber alone; isolated points stay untouched.
            report.decay_fits.push(None);
            new_fibers.push(fiber.clone());
            continue;
        }

        if fiber.dim() == 0 {
            // Already pinned to a single jet.  A pin carries the O(δ) bias of
            // the data that produced it, so it is only discarded when its
            // defect ladder is catastrophically inconsistent, not merely at
            // the bias scale.
            let c0 = DVector::zeros(0);
            let defects: Vec<f64> = ladder.iter().map(|rd| rd.defect(&c0)).collect();
            let scales: Vec<f64> = ladder.iter().map(|rd| rd.scale).collect();
            let fit = decay_fit(&scales, &defects);
            let offset_scale = 1.0
                + fiber
                    .offset_flat()
                    .map(|o| o.amax())
                    .unwrap_or(0.0);
            let keep = match fit {
                Some(f) => {
                    f.slope > params.decay_slope_min
                        || f.final_value <= PINNED_DEFECT_REL_FLOOR * offset_scale
                }
                None => true,
            };
            report.decay_fits.push(fit.map(|f| f.slope));
            if keep {
                new_fibers.push(fiber.clone());
            } else {
                report.emptied_points.push(center);
                new_fibers.push(AffineFiber::empty());
            }
            continue;
        }

        // Candidate offset from the finest ball, probe directions from its
        // defect quadratic.
        let finest = ladder.last().unwrap();
        let g = finest.u.ncols();
        let c_star = least_norm_solve(&finest.u, &(-&finest.w));
        if c_star.iter().any(|v| !v.is_finite()) {
            report.flagged_points.push(center);
            report.decay_fits.push(None);
            new_fibers.push(fiber.clone());
            continue;
        }

        let scales: Vec<f64> = ladder.iter().map(|rd| rd.scale).collect();
        let feasibility = |probe: &DVector<f64>| -> Option<f64> {
            let defects: Vec<f64> = ladder.iter().map(|rd| rd.defect(probe)).collect();
            let fit = decay_fit(&scales, &defects)?;
            let pass = fit.slope > params.decay_slope_min
                || fit.final_value <= params.defect_floor;
            pass.then_some(fit.slope)
        };

        let offset_fit = feasibility(&c_star);
        report.decay_fits.push(offset_fit);
        if offset_fit.is_none() {
            // The least-squares optimum itself cannot decay: nothing survives.
            report.emptied_points.push(center);
            new_fibers.push(AffineFiber::empty());
            continue;
        }

        // Eigen-directions of the finest defect quadratic.
        let dirs: DMatrix<f64> = if g == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let work = if finest.u.nrows() < g {
                let mut p = DMatrix::zeros(g, g);
                p.view_mut((0, 0), (finest.u.nrows(), g)).copy_from(&finest.u);
                p
            } else {
                finest.u.clone()
            };
            let svd = work.svd(false, true);
            svd.v_t.expect("svd v_t").transpose()
        };

        let mut kept: Vec<DVector<f64>> = Vec::new();
        for j in 0..dirs.ncols() {
            let v = dirs.column(j).into_owned();
            let plus = &c_star + &v;
            let minus = &c_star - &v;
            if feasibility(&plus).is_some() && feasibility(&minus).is_some() {
                kept.push(v);
            }
        }

        // Rebuild the fiber in flat coordinates.
        let offset0 = fiber.offset_flat().expect("proper fiber offset");
        let gen0 = fiber.generator_matrix();
        let new_offset_flat = &offset0 + &gen0 * &c_star;
        let flat_dim = space.flat_dim();
        let new_gens_flat: Vec<DVector<f64>> = kept.iter().map(|v| &gen0 * v).collect();
        let span = span_basis(&from_columns(flat_dim, &new_gens_flat), RANK_REL_CUTOFF);

        let base = bundle.points[center].clone();
        let offset_jet = JetVector::from_flat(
            base.clone(),
            space.order,
            space.components,
            new_offset_flat.as_slice(),
        )?;
        let generators: Vec<JetVector<f64>> = (0..span.ncols())
            .map(|j| {
                JetVector::from_flat(
                    base.clone(),
                    space.order,
                    space.components,
                    span.column(j).as_slice(),
                )
            })
            .collect::<Result<_>>()?;
        let kind = if span.ncols() == flat_dim { FiberKind::Full } else { FiberKind::Proper };
        new_fibers.push(AffineFiber { kind, offset: Some(offset_jet), generators });
    }

    report.fiber_dims_after = new_fibers.iter().map(|f| f.dim()).collect();
    report.iterations = 1;
    let refined = SampledBundle::new(space, bundle.points.clone(), new_fibers)?;
    Ok((refined, report))
}

/// Repeats refinement until a pass changes nothing (dims, spans, offsets) or
/// the iteration cap is reached.
pub fn iterate_to_stability(
    bundle: &SampledBundle,
    lstar_cap: usize,
    params: &RefinementParams,
) -> Result<(SampledBundle, RefinementReport)> {
    if lstar_cap == 0 {
        return Err(Error::InvalidArgument("iteration cap must be >= 1".into()));
    }
    let mut current = bundle.clone();
    let mut last_report = RefinementReport::default();
    for iter in 1..=lstar_cap {
        let (next, mut report) = glaeser_refine_once(&current, params)?;
        report.iterations = iter;
        let unchanged = bundles_agree(&current, &next, params.offset_tol);
        current = next;
        last_report = report;
        if unchanged {
            last_report.stable = true;
            break;
        }
    }
    last_report.emptied_points = current
        .fibers
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_empty())
        .map(|(i, _)| i)
        .collect();
    Ok((current, last_report))
}

fn bundles_agree(a: &SampledBundle, b: &SampledBundle, offset_tol: f64) -> bool {
    for (fa, fb) in a.fibers.iter().zip(&b.fibers) {
        if fa.is_empty() != fb.is_empty() {
            return false;
        }
        if fa.is_empty() {
            continue;
        }
        if fa.dim() != fb.dim() {
            return false;
        }
        let (oa, ob) = (fa.offset_flat().unwrap(), fb.offset_flat().unwrap());
        let ga = fa.generator_matrix();
        let gb = fb.generator_matrix();
        // Offsets may drift along the span; compare their gap transverse to it.
        if project_out(&ga, &(&ob - &oa)).norm() > offset_tol.max(1e-12 * oa.norm()) {
            return false;
        }
        if max_principal_angle(&ga, &gb) > 1e-6 {
            return false;
        }
    }
    true
}

/// Finiteness certificate: every (or sampled) k#-tuple admits
/// jets bounded by M with Whitney quotients bounded by M, decided by a
/// least-squares feasibility solve per tuple.
pub fn finiteness_certificate(bundle: &SampledBundle, m_bound: f64, khash: usize) -> bool {
    if bundle.fibers.iter().any(|f| f.is_empty()) {
        return false;
    }
    if bundle.is_empty() {
        return true;
    }
    let n = bundle.len();
    let k = khash.max(1).min(n);

    let tuple_count_exhaustive = {
        let mut c: u128 = 1;
        for i in 0..k {
            c = c.saturating_mul((n - i) as u128) / (i as u128 + 1);
        }
        c
    };
    const TUPLE_BUDGET: u128 = 10_000;

    let tuples: Vec<Vec<usize>> = if tuple_count_exhaustive <= TUPLE_BUDGET {
        combinations(n, k)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
        let pool: Vec<usize> = (0..n).collect();
        (0..TUPLE_BUDGET as usize)
            .map(|_| {
                let mut t = pool
                    .choose_multiple(&mut rng, k)
                    .copied()
                    .collect::<Vec<usize>>();
                t.sort_unstable();
                t
            })
            .collect()
    };

    tuples.iter().all(|t| tuple_feasible(bundle, t, m_bound))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn tuple_feasible(bundle: &SampledBundle, tuple: &[usize], m_bound: f64) -> bool {
    let space = bundle.space;
    let basis = JetBasis::get(space.vars, space.order);
    let scalar_dim = basis.len();

    let offsets: Vec<DVector<f64>> = tuple
        .iter()
        .map(|&i| bundle.fibers[i].offset_flat().expect("non-empty"))
        .collect();
    let spans: Vec<DMatrix<f64>> = tuple
        .iter()
        .map(|&i| bundle.fibers[i].generator_matrix())
        .collect();
    let col_start: Vec<usize> = {
        let mut acc = 0;
        let mut v = Vec::new();
        for s in &spans {
            v.push(acc);
            acc += s.ncols();
        }
        v.push(acc);
        v
    };
    let n_unknowns = *col_start.last().unwrap();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut push_row = |coeffs: Vec<(usize, Vec<f64>)>, cst: f64| {
        let mut row = vec![0.0; n_unknowns];
        for (ent, partial) in coeffs {
            for (c, v) in partial.into_iter().enumerate() {
                row[col_start[ent] + c] += v;
            }
        }
        rows.push(row);
        rhs.push(cst);
    };

    // Derivative-magnitude rows: ∂^αP_i(x_i) = α!·coeff.
    for (e, &i) in tuple.iter().enumerate() {
        let base = &bundle.points[i];
        let _ = base;
        for (pos, alpha) in basis.indices.iter().enumerate() {
            let fact = alpha.factorial() as f64;
            for comp in 0..space.components {
                let idx = comp * scalar_dim + pos;
                let cst = offsets[e][idx] * fact / m_bound;
                let partial: Vec<f64> = (0..spans[e].ncols())
                    .map(|c| spans[e][(idx, c)] * fact / m_bound)
                    .collect();
                push_row(vec![(e, partial)], cst);
            }
        }
    }

    // Whitney quotient rows over ordered pairs.
    let mval = space.order as u32;
    for (ei, &i) in tuple.iter().enumerate() {
        for (ej, &j) in tuple.iter().enumerate() {
            if ei == ej {
                continue;
            }
            let d = dist(&bundle.points[i], &bundle.points[j]);
            if d == 0.0 {
                continue;
            }
            for alpha in basis.indices.iter() {
                let denom = d.powi((mval - alpha.order()) as i32) * m_bound;
                let wi = derivative_functional::<f64>(
                    space.vars,
                    space.order,
                    &bundle.points[i],
                    alpha,
                    &bundle.points[i],
                )
                .expect("functional");
                let wj = derivative_functional::<f64>(
                    space.vars,
                    space.order,
                    &bundle.points[j],
                    alpha,
                    &bundle.points[i],
                )
                .expect("functional");
                for comp in 0..space.components {
                    let block = comp * scalar_dim;
                    let mut cst = 0.0;
                    let mut parts: Vec<(usize, Vec<f64>)> = Vec::new();
                    for (ent, w, sign) in [(ei, &wi, 1.0), (ej, &wj, -1.0)] {
                        let mut dot_off = 0.0;
                        for (k, &wk) in w.iter().enumerate() {
                            dot_off += wk * offsets[ent][block + k];
                        }
                        cst += sign * dot_off / denom;
                        let partial: Vec<f64> = (0..spans[ent].ncols())
                            .map(|c| {
                                let mut dot = 0.0;
                                for (k, &wk) in w.iter().enumerate() {
                                    dot += wk * spans[ent][(block + k, c)];
                                }
                                sign * dot / denom
                            })
                            .collect();
                        parts.push((ent, partial));
                    }
                    push_row(parts, cst);
                }
            }
        }
    }

    let a = DMatrix::from_fn(rows.len(), n_unknowns, |r, c| rows[r][c]);
    let b = DVector::from_iterator(rhs.len(), rhs.iter().map(|v| -v));
    let x = least_norm_solve(&a, &b);
    let achieved = &a * &x - &b;
    achieved.iter().all(|v| v.abs() <= 1.0 + 1e-6)
}

/// Membership distances of an explicit field's jets in every fiber; the
/// survival check for sections under refinement.
pub fn section_membership(bundle: &SampledBundle, jets: &[JetVector<f64>]) -> Vec<f64> {
    bundle
        .fibers
        .iter()
        .zip(jets)
        .map(|(f, j)| f.distance_to(j))
        .collect()
}

/// True when every membership distance is within the house tolerance.
pub fn section_survives(bundle: &SampledBundle, jets: &[JetVector<f64>]) -> bool {
    section_membership(bundle, jets)
        .iter()
        .all(|d| *d <= MEMBERSHIP_TOL)
}
