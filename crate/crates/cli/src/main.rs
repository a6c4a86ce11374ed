//! Batch front end: parse fixture files, dispatch pipeline stages, emit
//! reports.  Exit codes: 0 pass, 2 mathematical failure, 1 usage/IO error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use whitney_cli::fixture::{self, FixtureSpec};
use whitney_cli::report::RunReport;

use whitney_core::bundle::{iterate_to_stability, RefinementParams};
use whitney_core::elim::{eliminate, verify_equivalence};
use whitney_core::fit::geometric_ladder;
use whitney_core::helly::{
    null_space_reduce, select_representatives, verify_domination, SelectionOptions,
};
use whitney_core::patch::{cm_verify, compatibility_check, make_cutoff, patch_cusp, CmVerifyOptions};
use whitney_core::pipeline::{
    assemble_constraints, build_axis_bundle, build_trace_functionals, select_sample_heights,
    solve_selection, synthesize_section, verify_section, verify_section_bundle, Side,
};

#[derive(Parser)]
#[command(name = "whitney", version, about = "Jet-bundle refinement and wedge-section synthesis")]
struct Cli {
    /// Write the JSON report here (the text table always goes to stdout).
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iterated Glaeser refinement of a sampled bundle.
    Refine {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 8)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Parametric Gaussian elimination plus dense-oracle equivalence.
    Eliminate {
        #[arg(long)]
        input: PathBuf,
        /// Cap on the number of sample points used.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Seminorm reduction, greedy selection, and domination check.
    Helly {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        sphere_samples: usize,
    },
    /// Compatibility check and cusp patching of two field pieces.
    Patch {
        #[arg(long)]
        plus: PathBuf,
        #[arg(long)]
        minus: PathBuf,
        #[arg(long)]
        region: PathBuf,
    },
    /// Full wedge pipeline: axis bundles → heights → constraints →
    /// selection → synthesis → certification.
    Synthesize {
        #[arg(long)]
        input: PathBuf,
        /// Ladder length (points on the geometric x-ladder).
        #[arg(long, default_value_t = 24)]
        ladder: usize,
        /// Write the ξ fits and certification summary here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Residuals of a candidate field against a bundle or normal form.
    Check {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        field: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap would exit 2; usage errors are exit 1 here.
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(pass) => {
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let started = Instant::now();
    let mut rep = match &cli.command {
        Command::Refine { input, max_iter, tol } => cmd_refine(input, *max_iter, *tol)?,
        Command::Eliminate { input, samples } => cmd_eliminate(input, *samples)?,
        Command::Helly { input, sphere_samples } => cmd_helly(input, *sphere_samples)?,
        Command::Patch { plus, minus, region } => cmd_patch(plus, minus, region)?,
        Command::Synthesize { input, ladder, out } => {
            cmd_synthesize(input, *ladder, out.as_deref())?
        }
        Command::Check { bundle, field } => cmd_check(bundle, field)?,
    };
    rep.wall_ms = started.elapsed().as_millis();
    print!("{}", rep.to_table());
    if let Some(path) = &cli.report {
        std::fs::write(path, rep.to_json())
            .with_context(|| format!("cannot write report {}", path.display()))?;
    }
    Ok(rep.report.pass)
}

fn cmd_refine(input: &Path, max_iter: usize, tol: f64) -> Result<RunReport> {
    let spec = FixtureSpec::load(input)?;
    let mut rep = RunReport::new("refine", &input.display().to_string(), spec.seed());
    let bundle = spec.to_bundle()?;
    let params = RefinementParams {
        radius_start: spec.meta.delta * 0.5,
        offset_tol: tol,
        radius_count: 10,
        ..Default::default()
    };
    let (refined, report) = iterate_to_stability(&bundle, max_iter, &params)?;
    rep.stage(
        "refine.iterations",
        report.stable,
        json!({ "iterations": report.iterations, "stable": report.stable }),
    );
    rep.stage(
        "refine.fibers",
        report.emptied_points.is_empty(),
        json!({
            "emptied_points": report.emptied_points,
            "dims": refined.fibers.iter().map(|f| f.dim()).collect::<Vec<_>>(),
        }),
    );
    Ok(rep)
}

fn cmd_eliminate(input: &Path, samples: Option<usize>) -> Result<RunReport> {
    let spec = FixtureSpec::load(input)?;
    let mut rep = RunReport::new("eliminate", &input.display().to_string(), spec.seed());
    let (sys, mut pts) = spec.to_param_system()?;
    if let Some(cap) = samples {
        pts.truncate(cap);
    }
    let pieces = eliminate(&sys, &pts);
    let max_depth = pieces.iter().map(|p| p.depth).max().unwrap_or(0);
    let bound_ok = pieces
        .iter()
        .all(|p| p.max_coeff() <= (1u64 << p.depth) as f64);
    rep.stage(
        "eliminate.partition",
        bound_ok && max_depth <= sys.n_eqs.min(sys.n_unknowns),
        json!({
            "pieces": pieces.iter().map(|p| p.points.len()).collect::<Vec<_>>(),
            "depths": pieces.iter().map(|p| p.depth).collect::<Vec<_>>(),
            "coefficient_bound_ok": bound_ok,
        }),
    );
    let eq = verify_equivalence(&sys, &pieces, &pts)?;
    rep.stage(
        "eliminate.equivalence",
        eq.passed,
        json!({
            "worst_forward": eq.worst_forward,
            "worst_backward": eq.worst_backward,
            "witnesses": eq.witnesses.len(),
        }),
    );
    Ok(rep)
}

fn cmd_helly(input: &Path, sphere_samples: usize) -> Result<RunReport> {
    let spec = FixtureSpec::load(input)?;
    let seed = spec.seed();
    let mut rep = RunReport::new("helly", &input.display().to_string(), seed);
    let fam = spec.to_family()?;
    let red = null_space_reduce(&fam)?;
    rep.stage(
        "helly.null_space",
        true,
        json!({
            "null_dim": red.null_basis.ncols(),
            "basis_members": red.basis_members,
        }),
    );
    let opts = SelectionOptions { sphere_count: sphere_samples, seed, ..Default::default() };
    let sel = select_representatives(&red.quotient, &opts)?;
    rep.stage(
        "helly.selection",
        true,
        json!({ "selected": sel.indices, "constant": sel.constant }),
    );
    let dom = verify_domination(&red.quotient, &sel, sphere_samples, seed ^ 0xFE3D);
    rep.stage(
        "helly.domination",
        dom.passed,
        json!({ "worst_ratio": dom.worst_ratio, "witness": dom.witness }),
    );
    Ok(rep)
}

fn cmd_patch(plus: &Path, minus: &Path, region: &Path) -> Result<RunReport> {
    let plus_spec = FixtureSpec::load(plus)?;
    let minus_spec = FixtureSpec::load(minus)?;
    let region_spec = FixtureSpec::load(region)?;
    let mut rep = RunReport::new("patch", &plus.display().to_string(), plus_spec.seed());
    let m = region_spec.meta.m;
    let fp = plus_spec
        .to_fields()?
        .into_iter()
        .next()
        .context("plus fixture carries no field")?;
    let fm = minus_spec
        .to_fields()?
        .into_iter()
        .next()
        .context("minus fixture carries no field")?;
    let reg = region_spec.to_region()?;
    let compat = compatibility_check(&fp, &fm, &reg, m);
    rep.stage(
        "patch.compatibility",
        compat.passed,
        json!({
            "per_l": compat
                .per_l
                .iter()
                .map(|(l, slope, target, ok)| json!({"l": l, "slope": slope, "target": target, "pass": ok}))
                .collect::<Vec<_>>(),
        }),
    );
    if !compat.passed {
        return Ok(rep);
    }
    let profile = make_cutoff(m, 2 * (m + 1))?;
    let (field, delta) = patch_cusp(&fp, &fm, &reg, &profile, &compat)?;
    rep.stage("patch.blend", true, json!({ "delta_certified": delta }));
    let probes: Vec<(f64, f64)> = geometric_ladder(delta * 0.5, 0.5, 8)
        .into_iter()
        .map(|x| (x, 0.5 * (reg.psi_minus.eval(x) + reg.psi_plus.eval(x))))
        .collect();
    let cm = cm_verify(&field, m, &probes, &[], &CmVerifyOptions::default());
    rep.stage(
        "patch.cm_verify",
        cm.passed,
        json!({
            "flat_failures": cm
                .flat_fits
                .iter()
                .filter(|f| !f.passed)
                .map(|f| json!({"alpha": f.alpha, "slope": f.slope, "target": f.target}))
                .collect::<Vec<_>>(),
        }),
    );
    Ok(rep)
}

fn cmd_synthesize(
    input: &Path,
    ladder: usize,
    out: Option<&std::path::Path>,
) -> Result<RunReport> {
    let spec = FixtureSpec::load(input)?;
    let mut rep = RunReport::new("synthesize", &input.display().to_string(), spec.seed());
    let nf = spec.to_normal_form()?;
    let xs = geometric_ladder(nf.ladder.delta * 0.5, 0.5f64.sqrt(), ladder.max(6));

    let worst_blowup = nf.verify_blowup_bounds()?;
    rep.stage("synthesize.blowup_bounds", true, json!({ "worst_constant": worst_blowup }));

    let mut tfs = Vec::new();
    let mut worst_domination: f64 = 1.0;
    for s in 1..=nf.strip_count() {
        for side in [Side::Minus, Side::Plus] {
            let spec_ab = nf.axis_spec(s, side, xs.clone());
            let axis = build_axis_bundle(&spec_ab)?;
            let heights = select_sample_heights(&spec_ab, &axis)?;
            worst_domination = worst_domination.max(heights.domination_c);
            tfs.push(build_trace_functionals(&spec_ab, &axis, &heights)?);
        }
    }
    rep.stage(
        "synthesize.heights",
        true,
        json!({ "worst_domination_constant": worst_domination }),
    );

    let sys = assemble_constraints(&nf, &tfs, &xs)?;
    let sol = solve_selection(&sys)?;
    rep.stage(
        "synthesize.selection",
        sol.nonexistence.is_none(),
        json!({
            "fmin_slope": sol.fmin_fit.map(|f| f.slope),
            "fit_worst_residual": sol.fit_worst_residual,
            "infeasible_at": sol.infeasible_at,
            "nonexistence": sol.nonexistence,
        }),
    );
    if sol.nonexistence.is_some() {
        return Ok(rep);
    }

    let synth = synthesize_section(&nf, &sol)?;
    rep.stage(
        "synthesize.certification",
        synth.certified,
        json!({
            "delta_prime": synth.delta_prime,
            "curve_residual": synth.section_report.worst_curve_residual,
            "strip_residual": synth.section_report.worst_strip_residual,
            "trace_roundtrip": synth.trace_roundtrip_worst,
        }),
    );
    if let Some(path) = out {
        let fits: Vec<serde_json::Value> = sol
            .fits
            .iter()
            .map(|f| {
                json!({
                    "series": fixture::emit_series(&f.series),
                    "rel_residual": f.rel_residual,
                })
            })
            .collect();
        let doc = json!({
            "xi_fits": fits,
            "delta_prime": synth.delta_prime,
            "certified": synth.certified,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(rep)
}

fn cmd_check(bundle: &Path, field: &Path) -> Result<RunReport> {
    let bundle_spec = FixtureSpec::load(bundle)?;
    let field_spec = FixtureSpec::load(field)?;
    let mut rep = RunReport::new("check", &bundle.display().to_string(), bundle_spec.seed());
    let fields = field_spec.to_fields()?;
    let tol = bundle_spec.meta.tol;
    match &bundle_spec.payload {
        fixture::Payload::SampledBundle { .. } => {
            let b = bundle_spec.to_bundle()?;
            let dists = verify_section_bundle(&b, &fields)?;
            let worst = dists.iter().cloned().fold(0.0f64, f64::max);
            rep.stage(
                "check.membership",
                worst <= tol,
                json!({ "worst_distance": worst, "distances": dists }),
            );
        }
        fixture::Payload::WedgeNormalForm { .. } => {
            let nf = bundle_spec.to_normal_form()?;
            let xs = geometric_ladder(nf.ladder.delta * 0.4, 0.5f64.sqrt(), 10);
            let sr = verify_section(&nf, &fields, &xs);
            rep.stage(
                "check.section",
                sr.passed && sr.worst_curve_residual <= tol,
                json!({
                    "curve_residual": sr.worst_curve_residual,
                    "strip_residual": sr.worst_strip_residual,
                    "flat_passed": sr.flat_passed,
                }),
            );
        }
        _ => anyhow::bail!("check needs a sampled-bundle or wedge-normal-form fixture"),
    }
    Ok(rep)
}
