//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when a
//! criterion outside `KNOWN_UNATTAINABLE` fails.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pmlab_core::audit::*;
use pmlab_core::coeffs::{builtin_families, make_coefficients, params, split_blocks, CoefficientField};
use pmlab_core::field::{BoundaryField, Field2};
use pmlab_core::fracalc::*;
use pmlab_core::geometry::{build_grid, BoundaryMask, ParabolicCube, Point3};
use pmlab_core::hodge::Torus;
use pmlab_core::lab::{conservation_defect, run_lab, BoundaryLab, LabConfig};
use pmlab_core::maximal::*;
use pmlab_core::measure::*;
use pmlab_core::pde_solver::{pole_indices, solve_adjoint_row, solve_forward};
use pmlab_core::resolvent::stack_lambdas;
use pmlab_core::setf_sawtooth::*;

/// Criteria that cannot be met at desk scale; see the decisions log.
const KNOWN_UNATTAINABLE: &[usize] = &[5, 6];

struct Verdict {
    id: usize,
    pass: bool,
    detail: String,
}

fn ratio(a: f64, b: f64) -> f64 {
    let (lo, hi) = (a.abs().min(b.abs()), a.abs().max(b.abs()));
    if hi <= 1e-14 {
        1.0
    } else if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn lab(c: &CoefficientField, cube: ParabolicCube, h: f64, set_f: bool, squares: bool) -> BoundaryLab {
    let mut cfg = LabConfig::new(cube, h);
    cfg.set_f = set_f;
    cfg.squares = squares;
    run_lab(&split_blocks(c), &cfg).unwrap()
}

fn c1() -> Verdict {
    let t = Instant::now();
    let a = make_coefficients("identity", &params(&[])).unwrap();
    let cube = ParabolicCube::new(0.0, 1.0 / 16.0, 1.0 / 16.0);
    let setup = MeasureSetup { h: 1.0 / 64.0, min_cells: 8, ..Default::default() };
    let grid = measure_grid(&cube, &setup).unwrap();
    let m = parabolic_measure_on(&a, &cube, &grid).unwrap();
    let k = poisson_kernel(&m);
    let big = cube.dilate(4.0);
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..k.density.nx() {
        for n in 0..k.density.nt() {
            let (x, s) = (k.density.x(j), k.density.t(n));
            if big.contains_half_open(x, s) {
                let p = m.pole;
                let o = common::boxed_heat_poisson_kernel(p.lambda, p.x, p.t, x, s - 0.5 * grid.k, grid.lmax, grid.xext);
                num += (k.density.data[[j, n]] - o).abs();
                den += o;
            }
        }
    }
    let rel = num / den;
    let secs = t.elapsed().as_secs_f64();
    Verdict { id: 1, pass: rel <= 0.05 && secs <= 300.0, detail: format!("rel L1 {rel:.4e} over Δ_1/4, {secs:.1} s") }
}

fn c2() -> Verdict {
    let cube = ParabolicCube::new(0.0, 0.0, 0.25);
    let h = 1.0 / 16.0;
    let torus = Torus::around(&cube, h, 8.0, 64.0).unwrap();
    let lambdas = stack_lambdas(h, 4.0 * cube.r, 32);
    let mut worst: f64 = 0.0;
    for c in builtin_families() {
        worst = worst.max(conservation_defect(&split_blocks(&c), &torus, &lambdas, 2).unwrap());
    }
    Verdict { id: 2, pass: worst <= 1e-8, detail: format!("max |P_λ1 - 1| {worst:.2e} over {} λ x 4 families", lambdas.len()) }
}

struct SetFRun {
    family: String,
    h: f64,
    kappa0: Option<f64>,
    density: f64,
    mask: Option<BoundaryMask>,
    cube: ParabolicCube,
}

fn calibrate(lab: &BoundaryLab) -> (Option<f64>, f64, Option<BoundaryMask>) {
    match calibrate_kappa0(&lab.config.cube, lab.criteria.as_ref().unwrap(), 1e-3) {
        Ok(c) => (Some(c.kappa0), c.density, Some(c.report.mask)),
        Err(_) => (None, 1.0, None),
    }
}

fn setf_runs() -> Vec<SetFRun> {
    let cube = ParabolicCube::new(0.0, 0.0, 1.0 / 16.0);
    let mut out = Vec::new();
    for c in builtin_families() {
        for h in [1.0 / 32.0, 1.0 / 64.0] {
            let l = lab(&c, cube, h, true, false);
            let (kappa0, density, mask) = calibrate(&l);
            out.push(SetFRun { family: c.name.clone(), h, kappa0, density, mask, cube });
        }
    }
    out
}

fn c3(runs: &[SetFRun], extra: &[(ParabolicCube, &BoundaryMask)]) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut sets: Vec<(ParabolicCube, &BoundaryMask)> =
        runs.iter().filter_map(|r| r.mask.as_ref().map(|m| (r.cube, m))).collect();
    sets.extend_from_slice(extra);
    for (cube, f) in sets {
        for eta in [0.25, 0.5, 0.75] {
            for eps in [cube.r / 16.0, cube.r / 8.0, cube.r / 5.0] {
                worst = worst.max(tech_mass(f, &cube, eta, eps) / tech_mass_bound(&cube));
                count += 1;
            }
        }
    }
    Verdict { id: 3, pass: count > 0 && worst <= 1.05, detail: format!("max tech_mass / (log 8 · 8|Δ|) = {worst:.4} over {count} (F, η, ε)") }
}

fn c4(runs: &[SetFRun]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for fam in runs.iter().map(|r| r.family.clone()).collect::<std::collections::BTreeSet<_>>() {
        let coarse = runs.iter().find(|r| r.family == fam && r.h == 1.0 / 32.0).unwrap();
        let fine = runs.iter().find(|r| r.family == fam && r.h == 1.0 / 64.0).unwrap();
        let ok = match (coarse.kappa0, fine.kappa0) {
            (Some(a), Some(b)) => fine.density <= 1e-3 && kappa_stable(a, b),
            _ => false,
        };
        pass &= ok;
        parts.push(format!("{fam} κ₀ {:?}->{:?} density {:.1e}", coarse.kappa0, fine.kappa0, fine.density));
    }
    Verdict { id: 4, pass, detail: parts.join("; ") }
}

/// Grid pairs (h, h/2) in units of r; the checker cells need h ≤ r_c / 4.
fn c5_grids(name: &str) -> [f64; 2] {
    if name == "checker" {
        [4.0, 8.0]
    } else {
        [2.0, 4.0]
    }
}

fn c5() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["identity", "skew", "checker"] {
        let c = builtin_families().into_iter().find(|c| c.name == name).unwrap();
        let mut finest = Vec::new();
        let (mut worst_ref, mut worst_scale): (f64, f64) = (1.0, 1.0);
        for r in [1.0 / 8.0, 1.0 / 4.0] {
            let cube = ParabolicCube::new(0.0, 0.0, r);
            let [a, b] = c5_grids(name).map(|d| lab(&c, cube, r / d, false, true).squares);
            for (x, y) in a.iter().zip(&b) {
                let q = ratio(x.ratio, y.ratio);
                worst_ref = worst_ref.max(q);
                pass &= q <= 2.0 && y.ratio.is_finite();
            }
            finest.push(b);
        }
        for (x, y) in finest[0].iter().zip(&finest[1]) {
            let q = ratio(x.ratio, y.ratio);
            worst_scale = worst_scale.max(q);
            pass &= q <= 4.0;
        }
        let fine: Vec<String> = finest[0].iter().map(|s| format!("{}={:.3e}", s.kind.label(), s.ratio)).collect();
        parts.push(format!("{name} refinement x{worst_ref:.3} scale x{worst_scale:.3} [{}]", fine.join(" ")));
    }
    Verdict { id: 5, pass, detail: parts.join("; ") }
}

struct AuditRuns {
    rows: Vec<ScanRow>,
    gradient: Vec<(String, String, Vec<GradientRatio>)>,
    f_masks: Vec<(ParabolicCube, BoundaryMask)>,
    h: f64,
}

fn audit_runs() -> AuditRuns {
    let h = 1.0 / 64.0;
    let cube = ParabolicCube::new(0.0, 0.5, 0.25);
    let setup = AuditSetup { h, ..Default::default() };
    let mut rows = Vec::new();
    let mut gradient = Vec::new();
    let mut f_masks = Vec::new();
    for name in ["identity", "skew"] {
        let c = builtin_families().into_iter().find(|c| c.name == name).unwrap();
        let l = lab(&c, cube, 1.0 / 16.0, true, false);
        let (_, _, mask) = calibrate(&l);
        let mask = mask.expect("κ₀ calibration for the audit set");
        let res = key_lemma_scan(&c, &cube, &[0.5], &[2.0 * h, 3.0 * h], &default_battery(7), &mask, &setup, &[cube, cube.dilate(0.5)])
            .unwrap();
        rows.extend(res.rows);
        gradient.extend(res.gradient.into_iter().map(|(s, g)| (name.to_string(), s, g)));
        f_masks.push((cube, mask));
    }
    AuditRuns { rows, gradient, f_masks, h }
}

fn c6(a: &AuditRuns) -> Verdict {
    let mut bounded = true;
    let mut worst_scale: f64 = 1.0;
    for (_, _, g) in &a.gradient {
        bounded &= g.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0);
        worst_scale = worst_scale.max(ratio(g[0].ratio, g[1].ratio));
    }
    let r = 0.25;
    let trend_attainable = 32.0 * a.h < r / 4.0;
    let mut info = Vec::new();
    for (fam, set, _) in &a.gradient {
        let rows: Vec<ScanRow> = a.rows.iter().filter(|x| &x.coeffs == fam).cloned().collect();
        if let Some(q) = epsilon_trend(&rows, set, 0.5, 2.0 * a.h, 3.0 * a.h) {
            info.push(format!("{fam}/{set} {q:.3}"));
        }
    }
    let pass = bounded && worst_scale <= 4.0 && trend_attainable;
    Verdict {
        id: 6,
        pass,
        detail: format!(
            "bounded {bounded}, worst scale ratio {worst_scale:.3}; ε-trend 8h vs 32h {} (needs r > 128h, have r = {}h); J ratio ε=2h/3h: {}",
            if trend_attainable { "checked" } else { "unattainable" },
            r / a.h,
            info.join(", ")
        ),
    }
}

struct MeasureRun {
    family: String,
    m: MeasureEstimate,
    grid: pmlab_core::geometry::Grid,
}

fn measure_runs() -> Vec<MeasureRun> {
    let r0 = 1.0 / 32.0;
    let cube = ParabolicCube::new(0.0, 4.0 * r0 * r0, r0);
    let setup = MeasureSetup { h: 1.0 / 64.0, min_cells: 4, ..Default::default() };
    let grid = measure_grid(&cube, &setup).unwrap();
    builtin_families()
        .into_iter()
        .map(|c| MeasureRun { family: c.name.clone(), m: parabolic_measure_on(&c, &cube, &grid).unwrap(), grid: grid.clone() })
        .collect()
}

fn c7(runs: &[MeasureRun]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for run in runs {
        let r0 = run.m.cube.r;
        let t = doubling_check(&run.m, &[r0, r0 / 2.0]).unwrap();
        let cs: Vec<f64> = t.rows.iter().filter_map(|r| r.c).collect();
        let stable = cs.len() == 2 && cs.iter().all(|&c| c >= 1.0) && ratio(cs[0], cs[1]) <= 2.0;
        pass &= stable;
        let mut s = format!("{} c {:.3}/{:.3}", run.family, cs.first().unwrap_or(&f64::NAN), cs.get(1).unwrap_or(&f64::NAN));
        if run.family == "identity" {
            let p = run.m.pole;
            let g = &run.grid;
            let oracle = |q: &ParabolicCube| {
                common::quad2(
                    |y, s| common::boxed_heat_poisson_kernel(p.lambda, p.x, p.t, y, s, g.lmax, g.xext),
                    q.x_range(),
                    q.t_range(),
                    8,
                    4,
                )
            };
            for row in &t.rows {
                let q = ParabolicCube::new(run.m.cube.x0, run.m.cube.t0, row.r);
                let co = oracle(&q.dilate(2.0)) / oracle(&q);
                let ok = row.c.map(|c| (c / co - 1.0).abs() <= 0.2).unwrap_or(false);
                pass &= ok;
                s.push_str(&format!(" (oracle {co:.3})"));
            }
        }
        parts.push(s);
    }
    Verdict { id: 7, pass, detail: parts.join("; ") }
}

fn c8(runs: &[MeasureRun]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for run in runs {
        let scan = ainfty_scan(&run.m, 2, &default_deltas());
        let monotone = scan.rows.windows(2).all(|w| w[0].eps <= w[1].eps);
        let e3 = scan.eps_at(1e-3);
        let (reports, best) = bp_scan(&poisson_kernel(&run.m), &run.m.cube, 2).unwrap();
        let rh = best.and_then(|p| reports.iter().find(|r| r.p == p)).map(|r| r.ratio);
        let ok = monotone && e3 <= 0.5 && rh.map(|v| v.is_finite() && v <= 10.0).unwrap_or(false);
        pass &= ok;
        parts.push(format!("{} ε(1e-3) {e3:.3} monotone {monotone} RH p={best:?} ratio {:.4}", run.family, rh.unwrap_or(f64::NAN)));
    }
    Verdict { id: 8, pass, detail: parts.join("; ") }
}

fn duality_gap() -> f64 {
    let g = build_grid(1.0 / 16.0, 1.0, 1.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for c in builtin_families() {
        let pole = Point3 { lambda: 0.25, x: 0.125, t: 0.375 };
        let row = solve_adjoint_row(&c, pole, &g).unwrap();
        let (ip, jp, np) = pole_indices(&g, pole).unwrap();
        for _ in 0..20 {
            let vals = Array2::from_shape_fn((g.nx, g.nt), |_| rng.gen_range(-1.0..1.0));
            let mut f = BoundaryField::on_grid(&g, |_, _| 0.0);
            f.data = vals;
            let u = solve_forward(&c, &f, &g).unwrap();
            let dual: f64 = f.data.indexed_iter().map(|((j, n), v)| row.mass(j, n) * v).sum();
            worst = worst.max((u.data[[np, jp, ip]] - dual).abs());
        }
    }
    worst
}

fn residual_order() -> (f64, f64, f64) {
    let a = make_coefficients("identity", &params(&[])).unwrap();
    let cube = ParabolicCube::new(0.0, 0.5, 0.25);
    let eps = cube.r / 5.0;
    let mut res = Vec::new();
    for h in [cube.r / 10.0, cube.r / 20.0] {
        let grid = audit_grid(&cube, &AuditSetup { h, ..Default::default() }).unwrap();
        let f = BoundaryMask { x_origin: -grid.xext, t_origin: 0.0, h, k: grid.k, mask: Array2::from_elem((grid.nx, grid.nt), true) };
        let psi = build_cutoff_psi(&f, &cube, 0.5, eps).unwrap();
        let data = [battery_data(BatterySet::HalfBoundary, &grid, &cube)];
        let (out, _) = audit_stream(&a, &grid, &cube, &data, &[psi], &f, &[]).unwrap();
        res.push((out[0].0[0].identity_residual, h));
    }
    (res[0].0, res[1].0, res[0].1)
}

fn c9(a: &AuditRuns) -> Verdict {
    let gap = duality_gap();
    let closure = a.rows.iter().filter(|r| !r.skipped).all(|r| r.closure <= 2.0 * r.residual * ParabolicCube::new(0.0, 0.5, r.r).measure() + 1e-15);
    let carl2 = a.rows.iter().filter(|r| !r.skipped).all(|r| r.carl2_ok && r.sandwich_ok);
    let (rc, rf, hc) = residual_order();
    let q = rc / rf;
    let order_ok = (1.4..=2.6).contains(&q) && rc <= 10.0 * hc;
    Verdict {
        id: 9,
        pass: gap <= 1e-8 && closure && carl2 && order_ok,
        detail: format!(
            "duality gap {gap:.2e}; closure {closure}; carl2 ≤ J/κ and sandwich {carl2} on {} runs; residual {rc:.3e} -> {rf:.3e} (ratio {q:.3})",
            a.rows.iter().filter(|r| !r.skipped).count()
        ),
    }
}

fn random(nx: usize, nt: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((nx, nt), |_| rng.gen_range(-1.0..1.0))
}

fn c10() -> Verdict {
    let nt = 128;
    let mut spectral: f64 = 0.0;
    let k = 1.0 / nt as f64;
    for mode in [1.0, 3.0, 7.0, 20.0] {
        let tau0 = 2.0 * PI * mode;
        let mut v = Field2::from_fn(0.0, 0.0, 0.1, k, 3, nt, |x, t| (tau0 * t).cos() * (1.0 + x));
        v.periodic_t = true;
        let hh = hilbert_t(&hilbert_t(&v));
        spectral = spectral.max(hh.data.iter().zip(v.data.iter()).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max));
        let mut ex = ComplexSignal::from_real(&v);
        for n in 0..nt {
            for j in 0..3 {
                ex.data[[j, n]] = Complex64::new(0.0, tau0 * n as f64 * k).exp();
            }
        }
        let comp = half_derivative_c(&hilbert_c(&half_derivative_c(&ex)));
        let dt = dt_c(&ex);
        spectral = spectral.max(comp.data.iter().zip(dt.data.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
    }
    let (h, kk) = (0.125, 0.125 * 0.125);
    let wrap = |d: Array2<f64>| {
        let (nx, nt) = d.dim();
        let mut f = Field2::zeros(-2.0, -0.25, h, kk, nx, nt);
        f.data = d;
        f
    };
    let mut mismatches = 0usize;
    let g = random(32, 32, 1);
    let m = maximal_parabolic(&wrap(g.clone()));
    let it = maximal_iterated(&wrap(g.clone()));
    let bi = common::brute_iterated(&g);
    let d = max_diff(&wrap(g.clone()));
    for j in 0..32 {
        for n in 0..32 {
            let b = common::brute_hl(&g, h, kk, j, n);
            mismatches += ((m.values.data[[j, n]] - b).abs() > 1e-12 * b.max(1.0)) as usize;
            mismatches += ((it.values.data[[j, n]] - bi[[j, n]]).abs() > 1e-12) as usize;
            let b = common::brute_max_diff(&g, h, kk, j, n);
            mismatches += ((d.values.data[[j, n]] - b).abs() > 1e-12 * b.max(1.0)) as usize;
        }
    }
    let lambdas: Vec<f64> = (1..=6).map(|i| i as f64 * h).collect();
    let layers: Vec<Array2<f64>> = (0..6).map(|i| random(32, 32, 11 + i)).collect();
    let mut s = NtStream::new(&lambdas, &wrap(Array2::zeros((32, 32))));
    layers.iter().for_each(|l| s.push(l));
    let (ns, ntl) = s.finish();
    let w = layer_weights(&lambdas);
    for j in 0..32 {
        for n in 0..32 {
            let (bs, bt) = common::brute_nt(&layers, &lambdas, &w, h, kk, j, n);
            mismatches += (ns.values.data[[j, n]] != bs) as usize;
            mismatches += ((ntl.values.data[[j, n]] - bt).abs() > 1e-12) as usize;
        }
    }
    Verdict {
        id: 10,
        pass: spectral <= 1e-10 && mismatches == 0,
        detail: format!("spectral identities max error {spectral:.2e}; brute-force mismatches {mismatches} over 5 operators on 32x32"),
    }
}

fn main() {
    let start = Instant::now();
    let mut out = Vec::new();
    let mut timed = |name: &str, v: Verdict| {
        eprintln!("[{:>7.1} s] criterion {} ({name}) done", start.elapsed().as_secs_f64(), v.id);
        out.push(v);
    };
    timed("heat oracle", c1());
    timed("conservation", c2());
    let runs = setf_runs();
    let audit = audit_runs();
    let extra: Vec<(ParabolicCube, &BoundaryMask)> = audit.f_masks.iter().map(|(c, m)| (*c, m)).collect();
    timed("tech mass", c3(&runs, &extra));
    timed("κ₀ calibration", c4(&runs));
    timed("square functions", c5());
    timed("Carleson endpoint", c6(&audit));
    let measures = measure_runs();
    timed("doubling", c7(&measures));
    timed("A∞ / B_p", c8(&measures));
    timed("algebraic closures", c9(&audit));
    timed("operator micro-suite", c10());
    out.sort_by_key(|v| v.id);
    let mut unexpected = Vec::new();
    for v in &out {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let known = !v.pass && KNOWN_UNATTAINABLE.contains(&v.id);
        println!("{tag} criterion {:>2}: {}{}", v.id, v.detail, if known { " [known unattainable]" } else { "" });
        if !v.pass && !known {
            unexpected.push(v.id);
        }
    }
    println!("acceptance finished in {:.1} s", start.elapsed().as_secs_f64());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
