//! Named pipelines. Each returns its tables, series, metrics and checks;
//! solver errors propagate unchanged.

use pmlab_core::audit::{default_battery, key_lemma_scan, AuditSetup};
use pmlab_core::coeffs::split_blocks;
use pmlab_core::error::{LabError, Result};
use pmlab_core::geometry::ParabolicCube;
use pmlab_core::hodge::{build_chi, inf_sup, solve_hodge, test_battery, Side, Torus};
use pmlab_core::lab::{conservation_defect, run_lab, BoundaryLab, LabConfig};
use pmlab_core::measure::*;
use pmlab_core::resolvent::stack_lambdas;
use pmlab_core::setf_sawtooth::*;

use crate::config::{KappaSection, Resolved};
use crate::output::{num, opt, Check, RunOutput, Table};

fn measure_setup(r: &Resolved) -> MeasureSetup {
    let g = &r.config.grid;
    MeasureSetup { h: g.h, min_cells: g.min_cells, lmax_factor: g.lmax_factor, xext_factor: g.xext_factor }
}

fn measure_estimate(r: &Resolved, out: &mut RunOutput) -> Result<MeasureEstimate> {
    let m = parabolic_measure(&r.coeffs, &r.config.cube.cube(), &measure_setup(r))?;
    out.metric("total_mass", m.total());
    out.metric("truncation_loss", m.truncation_loss);
    out.metric("clip_mass", m.clip_mass);
    out.metric("max_step_residual", m.max_residual);
    out.metric("pole", m.pole);
    out.metric("cube", m.cube);
    let k = poisson_kernel(&m);
    let d = &k.density;
    let mut t = Table::new("kernel", &["x", "t", "density"]);
    for j in 0..d.nx() {
        for n in 0..d.nt() {
            if m.cube.dilate(4.0).contains_half_open(d.x(j), d.t(n)) {
                t.push("measure::poisson_kernel", vec![num(d.x(j)), num(d.t(n)), num(d.data[[j, n]])]);
            }
        }
    }
    out.tables.push(t);
    Ok(m)
}

fn doubling_part(r: &Resolved, m: &MeasureEstimate, out: &mut RunOutput) -> Result<()> {
    let scales: Vec<f64> = (0..=r.depth).map(|i| m.cube.r / (1u32 << i) as f64).collect();
    let d = doubling_check(m, &scales)?;
    let mut t = Table::new("doubling", &["r", "omega", "omega_double", "c"]);
    for row in &d.rows {
        t.push("measure::doubling_check", vec![num(row.r), num(row.omega), num(row.omega_double), opt(row.c)]);
    }
    out.series.push(("doubling".into(), d.rows.iter().filter_map(|x| x.c.map(|c| (x.r, c))).collect()));
    out.tables.push(t);
    out.metric("doubling_max_c", d.max_c);
    out.metric("doubling_skipped", d.skipped);
    let min_c = d.rows.iter().filter_map(|x| x.c).fold(f64::INFINITY, f64::min);
    out.checks.push(Check::at_least("doubling_c_min", "doubling of the parabolic measure: c >= 1", min_c, 1.0));
    out.checks.push(Check::at_most("doubling_c_max", "doubling of the parabolic measure: c bounded", d.max_c, r.config.tolerances.doubling_max));
    Ok(())
}

fn ainfty_part(r: &Resolved, m: &MeasureEstimate, out: &mut RunOutput) {
    let scan = ainfty_scan(m, r.depth, &default_deltas());
    let mut t = Table::new("ainfty", &["delta", "eps"]);
    for row in &scan.rows {
        t.push("measure::ainfty_scan", vec![num(row.delta), num(row.eps)]);
    }
    out.series.push(("ainfty".into(), scan.rows.iter().map(|x| (x.delta, x.eps)).collect()));
    out.tables.push(t);
    out.metric("ainfty_probes", scan.probes);
    let tol = &r.config.tolerances;
    let e = scan.eps_at(tol.ainfty_delta);
    out.metric("ainfty_eps_at_delta", e);
    out.checks.push(Check::at_most("ainfty_eps", "A-infinity probe: small sets carry small measure", e, tol.ainfty_eps_max));
}

fn bp_part(r: &Resolved, m: &MeasureEstimate, out: &mut RunOutput) -> Result<()> {
    let (reports, best) = bp_scan(&poisson_kernel(m), &m.cube, r.depth)?;
    let mut t = Table::new("bp", &["p", "ratio", "flagged"]);
    for b in &reports {
        t.push("measure::bp_scan", vec![num(b.p), num(b.ratio), b.flagged.to_string()]);
    }
    out.series.push(("bp".into(), reports.iter().map(|b| (b.p, b.ratio)).collect()));
    out.tables.push(t);
    out.metric("bp_best_p", best);
    let worst = reports.first().map(|b| b.ratio).unwrap_or(f64::INFINITY);
    out.checks.push(Check::at_most("bp_ratio", "reverse Hoelder for the Poisson kernel at the smallest exponent", worst, r.config.tolerances.bp_max));
    Ok(())
}

pub fn measure(r: &Resolved) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let m = measure_estimate(r, &mut out)?;
    let tol = &r.config.tolerances;
    out.checks.push(Check::at_least("total_mass", "probability measure: total mass near 1", m.total(), tol.total_mass_min));
    out.checks.push(Check::at_most("total_mass_upper", "probability measure: total mass at most 1", m.total(), 1.0 + 1e-9));
    doubling_part(r, &m, &mut out)?;
    ainfty_part(r, &m, &mut out);
    bp_part(r, &m, &mut out)?;
    Ok(out)
}

pub fn doubling(r: &Resolved) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let m = measure_estimate(r, &mut out)?;
    doubling_part(r, &m, &mut out)?;
    Ok(out)
}

pub fn ainfty(r: &Resolved) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let m = measure_estimate(r, &mut out)?;
    ainfty_part(r, &m, &mut out);
    Ok(out)
}

pub fn bp(r: &Resolved) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let m = measure_estimate(r, &mut out)?;
    bp_part(r, &m, &mut out)?;
    Ok(out)
}

fn lab_cube(r: &Resolved) -> ParabolicCube {
    let l = &r.config.lab;
    ParabolicCube::new(l.x0, l.t0, l.r)
}

fn lab_config(r: &Resolved, cube: ParabolicCube, h: f64, set_f: bool, squares: bool) -> LabConfig {
    let mut cfg = LabConfig::new(cube, h);
    cfg.per_decade = r.config.lab.per_decade;
    cfg.set_f = set_f;
    cfg.squares = squares;
    cfg
}

pub fn hodge(r: &Resolved) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let cube = lab_cube(r);
    let h = r.config.grid.lab_h;
    let cfg = lab_config(r, cube, h, false, false);
    let blocks = split_blocks(&r.coeffs);
    let torus = Torus::around(&cube, h, cfg.x_half, cfg.t_half)?;
    let chi = build_chi(&cube, &torus)?;
    let pair = solve_hodge(&blocks, &chi)?;
    let mut t = Table::new("energy", &["field", "grad_part", "half_part", "energy_over_cube", "residual"]);
    for (name, e, c, res) in [
        ("phi", &pair.energy_phi, pair.c_e_phi, pair.residual_phi),
        ("phi_tilde", &pair.energy_phi_tilde, pair.c_e_phi_tilde, pair.residual_phi_tilde),
    ] {
        t.push("hodge::solve_hodge", vec![name.into(), num(e.grad_part), num(e.half_part), num(c), num(res)]);
    }
    out.tables.push(t);
    let battery = test_battery(&torus, 8, r.seed);
    let mut t = Table::new("inf_sup", &["side", "delta", "beta", "min_coercivity"]);
    let mut beta_min = f64::INFINITY;
    for side in [Side::Forward, Side::Adjoint] {
        let s = inf_sup(&blocks, side, &battery, 0.5);
        beta_min = beta_min.min(s.beta);
        t.push("hodge::inf_sup", vec![format!("{side:?}").to_lowercase(), num(s.delta), num(s.beta), num(s.min_coercivity)]);
    }
    out.tables.push(t);
    let lambdas = stack_lambdas(h, cfg.stack_top * cube.r, cfg.per_decade);
    let defect = conservation_defect(&blocks, &torus, &lambdas, cfg.m)?;
    out.metric("chi_slope_constant", chi.slope_constant);
    out.metric("c_e_phi", pair.c_e_phi);
    out.metric("c_e_phi_tilde", pair.c_e_phi_tilde);
    out.metric("inf_sup_beta_min", beta_min);
    out.metric("conservation_defect", defect);
    let tol = &r.config.tolerances;
    let res = pair.residual_phi.max(pair.residual_phi_tilde);
    out.checks.push(Check::at_most("hodge_residual", "Hodge pair solves its parallel equations", res, tol.hodge_residual));
    out.checks.push(Check::at_least("inf_sup_beta", "inf-sup constant of the parallel operators is positive", beta_min, f64::MIN_POSITIVE));
    out.checks.push(Check::at_most("conservation", "resolvent stack reproduces constants", defect, tol.conservation));
    Ok(out)
}

pub fn squares(r: &Resolved) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let cube = lab_cube(r);
    let lab = run_lab(&split_blocks(&r.coeffs), &lab_config(r, cube, r.config.grid.lab_h, false, true))?;
    let mut t = Table::new("squares", &["kind", "r", "x0", "t0", "value", "ratio", "quadrature_error"]);
    let mut worst: f64 = 0.0;
    for s in &lab.squares {
        t.push(
            "squares::square_suite",
            vec![s.kind.label().into(), num(s.cube.r), num(s.cube.x0), num(s.cube.t0), num(s.value), num(s.ratio), num(s.quadrature_error)],
        );
        worst = if s.ratio.is_finite() { worst.max(s.ratio) } else { f64::INFINITY };
    }
    out.tables.push(t);
    out.metric("stack_size", lab.lambdas.len());
    out.metric("square_ratio_max", worst);
    out.checks.push(Check::at_most("square_ratio", "square-function Carleson ratios bounded", worst, r.config.tolerances.square_ratio_max));
    Ok(out)
}

/// F from a lab, either at a fixed κ₀ or calibrated to a target density.
fn set_f(r: &Resolved, lab: &BoundaryLab, out: &mut RunOutput) -> Result<SetFReport> {
    let crit = lab.criteria.as_ref().ok_or_else(|| LabError::MissingInput("criterion fields".into()))?;
    let rep = match r.config.kappa {
        KappaSection::Fixed { value } => {
            let rep = build_f(&lab.config.cube, value, crit);
            out.checks.push(Check::at_most("density", "good set F has small complement", rep.density, r.config.tolerances.density_max));
            rep
        }
        KappaSection::Calibrate { target } => {
            let cal = calibrate_kappa0(&lab.config.cube, crit, target)?;
            out.metric("kappa_grid_index", cal.grid_index);
            out.metric("target", target);
            out.checks.push(Check::at_most("density", "good set F has small complement", cal.density, target));
            cal.report
        }
    };
    out.metric("kappa0", rep.kappa0);
    out.metric("density", rep.density);
    out.metric("cells", rep.cells);
    let mut t = Table::new("exclusions", &["criterion", "nodes"]);
    for (i, c) in rep.exclusions.iter().enumerate() {
        t.push("setf_sawtooth::build_f", vec![["i", "ii", "iii", "iv", "v"][i].into(), c.to_string()]);
    }
    out.tables.push(t);
    Ok(rep)
}

pub fn setf(r: &Resolved) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let cube = lab_cube(r);
    let lab = run_lab(&split_blocks(&r.coeffs), &lab_config(r, cube, r.config.grid.lab_h, true, false))?;
    set_f(r, &lab, &mut out)?;
    Ok(out)
}

pub fn sawtooth(r: &Resolved) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let cube = lab_cube(r);
    let h = r.config.grid.lab_h;
    let lab = run_lab(&split_blocks(&r.coeffs), &lab_config(r, cube, h, true, false))?;
    let f = set_f(r, &lab, &mut out)?;
    let bound = tech_mass_bound(&cube);
    let mut t = Table::new("tech_mass", &["eta", "eps", "tech_mass", "bound", "ratio"]);
    let mut worst: f64 = 0.0;
    for &eta in &r.config.sawtooth.eta {
        for &e in &r.config.sawtooth.eps_over_r {
            let m = tech_mass(&f.mask, &cube, eta, e * cube.r);
            worst = worst.max(m / bound);
            t.push("setf_sawtooth::tech_mass", vec![num(eta), num(e * cube.r), num(m), num(bound), num(m / bound)]);
        }
    }
    out.tables.push(t);
    let eta = r.config.sawtooth.eta[r.config.sawtooth.eta.len() / 2];
    let eps = r.config.sawtooth.eps_over_r[r.config.sawtooth.eps_over_r.len() / 2] * cube.r;
    let psi = build_cutoff_psi(&f.mask, &cube, eta, eps)?;
    let sample = psi.sample(&PsiLattice::around(&cube, h / 2.0));
    let rep = verify_psi_derivatives(&psi, &f.mask, &sample);
    let mut t = Table::new("psi_derivatives", &["alpha", "beta", "gamma", "c_tilde", "carleson_p1", "carleson_p2"]);
    for b in &rep.bounds {
        let [a, bb, g] = b.multi;
        t.push(
            "setf_sawtooth::verify_psi_derivatives",
            vec![a.to_string(), bb.to_string(), g.to_string(), num(b.c_tilde), num(b.carleson_p1), num(b.carleson_p2)],
        );
    }
    out.tables.push(t);
    out.metric("psi_eta", eta);
    out.metric("psi_eps", eps);
    out.metric("psi_min", rep.min);
    out.metric("psi_max", rep.max);
    out.metric("psi_support_nodes", rep.support_nodes);
    out.metric("tech_mass_ratio_max", worst);
    let slack = r.config.tolerances.tech_mass_slack;
    out.checks.push(Check::at_most("tech_mass", "mass of the E-sets against log 8 times 8|cube|", worst, slack));
    out.checks.push(Check::at_most("psi_off_support", "derivatives of the cutoff live on the E-sets", rep.off_support as f64, 0.0));
    out.checks.push(Check::at_most("psi_plateau", "cutoff is flat on its plateau", rep.plateau_violations as f64, 0.0));
    if let Some(theta) = &lab.theta {
        let th = verify_theta_bounds(theta, &lab.lambdas, &f);
        out.metric("theta", &th);
    }
    Ok(out)
}

pub fn audit(r: &Resolved) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let a = &r.config.audit;
    let cube = ParabolicCube::new(a.x0, a.t0, a.r);
    let lab = run_lab(&split_blocks(&r.coeffs), &lab_config(r, cube, a.lab_h, true, false))?;
    let f = set_f(r, &lab, &mut out)?;
    let setup = AuditSetup { h: r.config.grid.audit_h, ..Default::default() };
    let scan = key_lemma_scan(&r.coeffs, &cube, &a.eta, &a.eps, &default_battery(r.seed), &f.mask, &setup, &[cube, cube.dilate(0.5)])?;
    let mut t = Table::new(
        "key_lemma",
        &["coeffs", "set", "r", "eta", "eps", "j_ratio", "carl2_ratio", "grad_ratio", "residual", "closure", "sandwich_ok", "carl2_ok", "skipped"],
    );
    for row in &scan.rows {
        t.push(
            "audit::key_lemma_scan",
            vec![
                row.coeffs.clone(),
                row.set.clone(),
                num(row.r),
                num(row.eta),
                num(row.eps),
                num(row.j_ratio),
                num(row.carl2_ratio),
                num(row.grad_ratio),
                num(row.residual),
                num(row.closure),
                row.sandwich_ok.to_string(),
                row.carl2_ok.to_string(),
                row.skipped.to_string(),
            ],
        );
    }
    out.tables.push(t);
    let mut t = Table::new("gradient", &["set", "r", "ratio"]);
    for (set, g) in &scan.gradient {
        for x in g {
            t.push("audit::key_lemma_scan", vec![set.clone(), num(x.cube.r), num(x.ratio)]);
        }
    }
    out.tables.push(t);
    let live: Vec<_> = scan.rows.iter().filter(|x| !x.skipped).collect();
    out.series.push(("j_ratio".into(), live.iter().map(|x| (x.eps, x.j_ratio)).collect()));
    out.metric("max_step_residual", scan.max_step_residual);
    out.metric("rows", scan.rows.len());
    out.metric("skipped", scan.rows.len() - live.len());
    let bad = live.iter().filter(|x| !(x.sandwich_ok && x.carl2_ok)).count();
    out.checks.push(Check::at_least("audited_rows", "at least one resolved cutoff", live.len() as f64, 1.0));
    out.checks.push(Check::at_most("sandwich_and_carl2", "J between the ellipticity bounds and dominates the lambda-derivative part", bad as f64, 0.0));
    Ok(out)
}

pub fn run(name: &str, r: &Resolved) -> Result<RunOutput> {
    match name {
        "measure" => measure(r),
        "ainfty" => ainfty(r),
        "doubling" => doubling(r),
        "bp" => bp(r),
        "hodge" => hodge(r),
        "squares" => squares(r),
        "setf" => setf(r),
        "sawtooth" => sawtooth(r),
        "audit" => audit(r),
        other => Err(LabError::BadParameter(format!("unknown pipeline `{other}`"))),
    }
}
