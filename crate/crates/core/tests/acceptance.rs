//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so criteria execute one after
//! another and the reported runtimes are not shared with other tests.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use paraell::interpolation::{param_scale_identity, sobolev_scale_identity};
use paraell::rofunc::{matuszewska, MatuszewskaConfig, ROFunction};
use paraell::spaces::{equivalence_band, equivalence_ratio, Spectrum, TorusGrid};
use paraell::strip::{
    collocation_for, estimate_scan, find_resonance, fredholm_probe, solve, ModeData, NormalProxy, StripGeometry,
};
use paraell::symbols::{
    check_parameter_ellipticity, lopatinskii_matrix, root_split, symbol_a0, symbol_b0, tau_polynomial_a, Angle,
    BVProblem, BoundaryComponent, DiffExpression, ScanConfig, Term, Tolerances,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_spectrum(grid: &TorusGrid, rng: &mut ChaCha8Rng) -> Spectrum {
    let coeffs = (0..grid.len())
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    Spectrum::new(grid.clone(), coeffs).unwrap()
}

/// Smoothness families with Sobolev orders bracketing their indices.
fn families() -> Vec<(ROFunction, f64, f64)> {
    vec![
        (ROFunction::power(2.0), 1.0, 3.0),
        (ROFunction::power(0.5), 0.0, 1.0),
        (ROFunction::power_log(2.0, 1.0), 1.0, 3.0),
        (ROFunction::power_log(1.0, 1.0), 0.0, 2.0),
        (ROFunction::oscillating(2.0, 0.3), 1.0, 3.0),
    ]
}

fn interpolation_identity() -> Outcome {
    let grid = TorusGrid::new(&[32, 32]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for (alpha, s0, s1) in families() {
        for _ in 0..20 {
            let u = random_spectrum(&grid, &mut rng);
            worst = worst.max(sobolev_scale_identity(&u, &alpha, s0, s1).unwrap().relerr);
        }
    }
    outcome(worst <= 1e-12, format!("max relerr {worst:.2e} (tol 1e-12)"))
}

fn parameter_identity() -> Outcome {
    let grid = TorusGrid::new(&[32, 32]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for (alpha, s0, s1) in families() {
        for _ in 0..20 {
            let u = random_spectrum(&grid, &mut rng);
            for p in [1.0, 10.0, 100.0, 1000.0] {
                worst = worst.max(param_scale_identity(&u, &alpha, s0, s1, p).unwrap().relerr);
            }
        }
    }
    outcome(worst <= 1e-12, format!("max relerr {worst:.2e} (tol 1e-12)"))
}

fn equivalence_band_check() -> Outcome {
    let grid = TorusGrid::new(&[32, 32]).unwrap();
    let ps = [1.0, 10.0, 100.0, 1000.0];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pass = true;
    let mut detail = Vec::new();
    for alpha in [ROFunction::power(0.5), ROFunction::power(1.0), ROFunction::power_log(1.0, 1.0)] {
        let (c2, lo, hi) = equivalence_band(&grid, &alpha, &ps).unwrap();
        let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
        for _ in 0..50 {
            let u = random_spectrum(&grid, &mut rng);
            for p in ps {
                let r = equivalence_ratio(&u, &alpha, p).unwrap();
                rmin = rmin.min(r);
                rmax = rmax.max(r);
            }
        }
        pass &= lo <= rmin && rmax <= hi;
        detail.push(format!("{}: [{rmin:.3}, {rmax:.3}] in [{lo:.3}, {hi:.3}] (c2 {c2:.3})", alpha.id()));
    }
    outcome(pass, detail.join("; "))
}

fn matuszewska_estimator() -> Outcome {
    let cfg = MatuszewskaConfig::default();
    let mut power_err: f64 = 0.0;
    for s in [-2.0, 0.0, 0.5, 3.0] {
        let ix = matuszewska(&ROFunction::power(s), &cfg).unwrap();
        power_err = power_err.max((ix.sigma0 - s).abs()).max((ix.sigma1 - s).abs());
    }
    let osc = matuszewska(&ROFunction::oscillating(1.0, 0.3), &cfg).unwrap();
    let osc_err = (osc.sigma0 - 0.7).abs().max((osc.sigma1 - 1.3).abs());
    let mut shift_err: f64 = 0.0;
    for f in [ROFunction::power_log(1.0, 2.0), ROFunction::oscillating(0.5, 0.2), ROFunction::power(-1.0)] {
        let base = matuszewska(&f, &cfg).unwrap();
        for a in [-1.5, 0.25, 2.0] {
            let ix = matuszewska(&f.with_power_shift(a), &cfg).unwrap();
            shift_err = shift_err.max((ix.sigma0 - base.sigma0 - a).abs()).max((ix.sigma1 - base.sigma1 - a).abs());
        }
    }
    outcome(
        power_err <= 1e-6 && osc_err <= 0.05 && shift_err <= 1e-6,
        format!(
            "power err {power_err:.1e} (tol 1e-6), oscillating ({:.3}, {:.3}) err {osc_err:.3} (tol 0.05), shift err {shift_err:.1e} (tol 1e-6)",
            osc.sigma0, osc.sigma1
        ),
    )
}

fn ellipticity_verdicts() -> Outcome {
    let cfg = ScanConfig::default();
    let robin = BVProblem::helmholtz_robin();
    let up = check_parameter_ellipticity(&robin, &Angle::ray(FRAC_PI_2), &cfg);
    let mut pass = up.verdict && up.min_symbol_modulus >= 0.9;
    let mut margins = Vec::new();
    for angle in [Angle::ray(0.0), Angle::new(-PI / 6.0, PI / 6.0).unwrap(), Angle::new(0.0, FRAC_PI_2).unwrap()] {
        let r = check_parameter_ellipticity(&robin, &angle, &cfg);
        pass &= !r.verdict && r.min_symbol_modulus.min(r.min_lopatinskii_sigma) < cfg.tolerances.tol_a;
        margins.push(r.min_symbol_modulus.min(r.min_lopatinskii_sigma));
    }
    let dirichlet = check_parameter_ellipticity(&BVProblem::helmholtz_dirichlet(), &Angle::ray(FRAC_PI_2), &cfg);
    pass &= dirichlet.verdict && (dirichlet.min_lopatinskii_sigma - 1.0).abs() <= 1e-9;
    outcome(
        pass,
        format!(
            "robin pi/2: verdict {} margin {:.4}; robin on angles with R+: margins {:.1e}/{:.1e}/{:.1e}; dirichlet sigma_min {:.12}",
            up.verdict, up.min_symbol_modulus, margins[0], margins[1], margins[2], dirichlet.min_lopatinskii_sigma
        ),
    )
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Symbol `(λ² − |ξ|²)(2λ² − |ξ|²)` with random operators of orders 1 and 3
/// on both circles of the strip.
fn random_q2_problem(rng: &mut ChaCha8Rng) -> BVProblem {
    let mut interior = Vec::new();
    for (mu, a) in [([4, 0], 1.0), ([2, 2], 2.0), ([0, 4], 1.0)] {
        interior.push(Term::new(4, &mu, c(a, 0.0)));
    }
    interior.push(Term::new(2, &[2, 0], c(-3.0, 0.0)));
    interior.push(Term::new(2, &[0, 2], c(-3.0, 0.0)));
    interior.push(Term::new(0, &[0, 0], c(2.0, 0.0)));
    let mut random_op = |m: u32| {
        let mut terms = Vec::new();
        for r in 0..=m {
            for a in 0..=r {
                terms.push(Term::new(r, &[a, r - a], c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
            }
        }
        DiffExpression { order: m, terms }
    };
    let boundary = [("bottom", [0.0, 1.0], [0.0, 0.0]), ("top", [0.0, -1.0], [0.0, 1.0])]
        .into_iter()
        .map(|(name, normal, point)| BoundaryComponent {
            name: name.into(),
            normal: normal.to_vec(),
            point: point.to_vec(),
            ops: vec![random_op(1), random_op(3)],
        })
        .collect();
    BVProblem::new(2, DiffExpression { order: 4, terms: interior }, boundary).unwrap()
}

fn root_split_balance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let problems = [BVProblem::helmholtz_dirichlet(), BVProblem::helmholtz_robin(), random_q2_problem(&mut rng)];
    let tol = Tolerances::default();
    let (mut balanced, mut worst) = (0, 0.0f64);
    for i in 0..1000 {
        let p = &problems[i % problems.len()];
        let comp = &p.boundary[rng.gen_range(0..p.boundary.len())];
        let x = [rng.gen_range(0.0..2.0 * PI), comp.point[1]];
        // a point of the unit sphere on a ray inside the upper half plane
        let w = rng.gen_range(0.0..FRAC_PI_2);
        let xi_t = [w.cos() * if rng.gen() { 1.0 } else { -1.0 }, 0.0];
        let lambda = C64::from_polar(w.sin(), rng.gen_range(0.2..PI - 0.2));
        let split = tau_polynomial_a(p, &x, &xi_t, &comp.normal, lambda, &tol).and_then(|poly| root_split(&poly, &tol));
        if let Ok(s) = split {
            let q = p.q as usize;
            if s.tau_plus.len() == q && s.tau_minus.len() == q && s.residual < 1e-8 {
                balanced += 1;
            }
            worst = worst.max(s.residual);
        }
    }
    outcome(balanced == 1000, format!("{balanced}/1000 balanced, max residual {worst:.1e} (tol 1e-8)"))
}

fn relerr(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn homogeneity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = random_q2_problem(&mut rng);
    let tol = Tolerances::default();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = [rng.gen_range(0.0..6.0), rng.gen_range(0.0..1.0)];
        let xi = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let l = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let t: f64 = rng.gen_range(0.1..5.0);
        let txi = [t * xi[0], t * xi[1]];
        worst = worst.max(relerr(symbol_a0(&p, &x, &txi, l * t), symbol_a0(&p, &x, &xi, l) * t.powi(4)));
        for comp in &p.boundary {
            for (j, op) in comp.ops.iter().enumerate() {
                let b = symbol_b0(comp, j, &x, &xi, l) * t.powi(op.order as i32);
                worst = worst.max(relerr(symbol_b0(comp, j, &x, &txi, l * t), b));
            }
        }
        // roots scale with (ξ, λ); the Lopatinskii determinant with degree Σm_j − q(q−1)/2
        let comp = &p.boundary[rng.gen_range(0..2)];
        let xt = [rng.gen_range(-1.0..1.0), 0.0];
        let l = C64::from_polar(rng.gen_range(0.1..1.0), rng.gen_range(0.3..PI - 0.3));
        let split = |s: f64| {
            let poly = tau_polynomial_a(&p, &comp.point, &[s * xt[0], 0.0], &comp.normal, l * s, &tol).unwrap();
            let mut r = root_split(&poly, &tol).unwrap();
            r.tau_plus.sort_by(|a, b| a.re.total_cmp(&b.re));
            r
        };
        for (a, b) in split(1.0).tau_plus.iter().zip(&split(t).tau_plus) {
            worst = worst.max(relerr(*b, *a * t));
        }
        let m = lopatinskii_matrix(&p, comp, &comp.point, &xt, l, &tol).unwrap();
        let mt = lopatinskii_matrix(&p, comp, &comp.point, &[t * xt[0], 0.0], l * t, &tol).unwrap();
        worst = worst.max(relerr(mt.det, m.det * t.powi(3)));
    }
    outcome(worst <= 1e-10, format!("max relerr {worst:.1e} over 100 inputs (tol 1e-10)"))
}

fn plateau() -> Outcome {
    let p = BVProblem::helmholtz_dirichlet();
    let g = StripGeometry::new(32, 64).unwrap();
    let lambdas = [4.0, 8.0, 16.0, 32.0, 64.0];
    let ratio = |v: &[f64]| v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min);
    let mut pass = true;
    let mut detail = Vec::new();
    for phi in [ROFunction::power(0.0), ROFunction::power_log(0.0, 1.0)] {
        let up = estimate_scan(&p, &phi, &Angle::ray(FRAC_PI_2), &lambdas, &g, NormalProxy::default()).unwrap();
        let mins: Vec<f64> = up.rows.iter().map(|r| r.sigma_min).collect();
        let maxs: Vec<f64> = up.rows.iter().map(|r| r.sigma_max).collect();
        let real = estimate_scan(&p, &phi, &Angle::ray(0.0), &lambdas, &g, NormalProxy::default()).unwrap();
        let decay = real.rows[4].sigma_min / real.rows[0].sigma_min;
        let (rmin, rmax) = (ratio(&mins), ratio(&maxs));
        pass &= rmin <= 3.0 && rmax <= 3.0 && decay <= 0.1;
        detail.push(format!("{}: min ratio {rmin:.3}, max ratio {rmax:.3} (tol 3), arg 0 decay {decay:.2e} (tol 0.1)", phi.id()));
    }
    outcome(pass, detail.join("; "))
}

fn fredholm_index() -> Outcome {
    let p = BVProblem::helmholtz_dirichlet();
    let g = StripGeometry::new(32, 64).unwrap();
    // first Dirichlet resonance of mode k = 1 is λ² = 1 + π²
    let resonance = find_resonance(&p, 1, c(3.3, 0.0), &g).unwrap();
    let probes = [
        c(0.0, 2.0),
        c(0.0, 10.0),
        c(1.0, 1.0),
        c(-2.0, 0.5),
        C64::from_polar(5.0, FRAC_PI_4),
        C64::from_polar(20.0, 3.0 * FRAC_PI_4),
        c(0.5, 0.0),
        c(2.0, -3.0),
        c(7.0, 0.1),
        resonance,
    ];
    let mut pass = (resonance.norm_sqr() - (1.0 + PI * PI)).abs() < 1e-6;
    let mut dims = Vec::new();
    for (i, &l) in probes.iter().enumerate() {
        let r = fredholm_probe(&p, l, &g).unwrap();
        pass &= r.dim_ker == r.dim_coker;
        if i == probes.len() - 1 {
            pass &= r.dim_ker >= 1;
        }
        dims.push(format!("({},{})", r.dim_ker, r.dim_coker));
    }
    outcome(pass, format!("resonance {:.10}, dims {}", resonance.re, dims.join(" ")))
}

/// Maximum nodal error of the strip solve for `u = e^{−ix₁} x₂^a` at `λ = 2i`.
fn mms_error(n: usize, a: f64) -> (f64, f64) {
    let p = BVProblem::helmholtz_dirichlet();
    let g = StripGeometry::new(4, n).unwrap();
    let colloc = collocation_for(&p, &g).unwrap();
    let lambda = c(0.0, 2.0);
    let f = colloc
        .interior_nodes()
        .iter()
        .map(|z| c(a * (a - 1.0) * z.powf(a - 2.0), 0.0) + (lambda * lambda - 1.0) * z.powf(a))
        .collect();
    let sol = solve(&p, lambda, &[ModeData { k: 1, f, g: vec![c(0.0, 0.0), c(1.0, 0.0)] }], &g).unwrap();
    let err = colloc.nodes().iter().zip(&sol.modes[0].1).map(|(x, v)| (v - x.powf(a)).norm()).fold(0.0, f64::max);
    (err, sol.residual)
}

fn manufactured_solution() -> Outcome {
    let (e64, r64) = mms_error(64, 2.0);
    let (e128, r128) = mms_error(128, 2.0);
    // x₂^{3/2} keeps truncation error above roundoff so refinement is visible
    let (f64_, _) = mms_error(64, 1.5);
    let (f128, _) = mms_error(128, 1.5);
    outcome(
        e64 < 1e-6 && e128 < 1e-6 && r64 < 1e-8 && r128 < 1e-8 && f128 < f64_,
        format!(
            "x^2: relerr {e64:.1e} (N=64), {e128:.1e} (N=128), residuals {r64:.1e}/{r128:.1e}; x^1.5: {f64_:.2e} -> {f128:.2e}"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<u64>); 10] = [
        ("1 interpolation identity", interpolation_identity, Some(5)),
        ("2 parameter-dependent identity", parameter_identity, Some(5)),
        ("3 norm-equivalence band", equivalence_band_check, Some(10)),
        ("4 Matuszewska estimator", matuszewska_estimator, Some(5)),
        ("5 ellipticity verdicts", ellipticity_verdicts, Some(10)),
        ("6 root split", root_split_balance, None),
        ("7 uniform estimate plateau", plateau, Some(60)),
        ("8 Fredholm zero index", fredholm_index, Some(20)),
        ("9 homogeneity and scaling", homogeneity, None),
        ("10 manufactured solution", manufactured_solution, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let in_time = limit.map_or(true, |s| elapsed <= Duration::from_secs(s));
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = limit.map_or_else(String::new, |s| format!(" / {s}s"));
        println!(
            "{} criterion {name}: {} [{:.2}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
