use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, SupportedConeT, ZeroConeT};

fn main() {
    // replicate the per-x LP at x = 2.44e-4 of the m=2 fixture: 9 unknowns,
    // 2 exact rows, flatness rows with x^{a-2} weights, link rows /gap^{2-l}
    let x: f64 = 0.0002441406250000006;
    let gap = 0.5 * x;
    let n = 9usize; // (curve, l): idx = curve*3 + l
    let idx = |c: usize, l: usize| c * 3 + l;
    let mut exact: Vec<(Vec<f64>, f64)> = vec![];
    let mut row = vec![0.0; n];
    row[idx(1, 0)] = 1.0;
    exact.push((row, 0.5 * x.powi(3)));
    let mut row = vec![0.0; n];
    row[idx(1, 1)] = 1.0;
    exact.push((row, x * x));
    let mut asym: Vec<(Vec<f64>, f64)> = vec![];
    for c in 0..3 {
        for a in 0..3usize {
            let mut w = vec![0.0; n];
            w[idx(c, a)] = x.powi(a as i32 - 2);
            asym.push((w, 0.0));
        }
    }
    for s in 1..=2usize {
        for l in 0..3usize {
            let scale = gap.powi(2 - l as i32);
            let mut w = vec![0.0; n];
            w[idx(s, l)] = 1.0 / scale;
            let mut fact = 1.0;
            for k in 0..=(2 - l) {
                if k > 0 { fact *= k as f64; }
                w[idx(s - 1, l + k)] -= gap.powi(k as i32) / (fact * scale);
            }
            asym.push((w, 0.0));
        }
    }
    let na = asym.len();
    let nvars = n + na;
    let ne = exact.len();
    let mut rows: Vec<Vec<f64>> = vec![];
    let mut b: Vec<f64> = vec![];
    for (w, rhs) in &exact {
        let mut r = vec![0.0; nvars];
        r[..n].copy_from_slice(w);
        rows.push(r);
        b.push(*rhs);
    }
    for (r, (w, rhs)) in asym.iter().enumerate() {
        let mut up = vec![0.0; nvars];
        up[..n].copy_from_slice(w);
        up[n + r] = -1.0;
        rows.push(up);
        b.push(*rhs);
        let mut lo = vec![0.0; nvars];
        for (c, v) in w.iter().enumerate() { lo[c] = -v; }
        lo[n + r] = -1.0;
        rows.push(lo);
        b.push(-*rhs);
    }
    let nrows = rows.len();
    let mut colptr = vec![0]; let mut rowval = vec![]; let mut nzval = vec![];
    for c in 0..nvars {
        for (r, rr) in rows.iter().enumerate() {
            if rr[c] != 0.0 { rowval.push(r); nzval.push(rr[c]); }
        }
        colptr.push(rowval.len());
    }
    let a = CscMatrix::new(nrows, nvars, colptr, rowval, nzval);
    let p = CscMatrix::zeros((nvars, nvars));
    let mut q = vec![0.0; nvars];
    for e in q.iter_mut().skip(n) { *e = 1.0; }
    let cones: Vec<SupportedConeT<f64>> = vec![ZeroConeT(ne), NonnegativeConeT(2 * na)];
    for (name, settings) in [
        ("tight 1e-11", DefaultSettings { verbose: false, tol_gap_abs: 1e-11, tol_gap_rel: 1e-11, tol_feas: 1e-11, ..DefaultSettings::default() }),
        ("default", DefaultSettings { verbose: false, ..DefaultSettings::default() }),
    ] {
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings);
        solver.solve();
        println!("{name}: status {:?} obj {:.3e}", solver.solution.status, solver.solution.obj_val);
    }
}
