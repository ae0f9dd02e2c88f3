//! Closed-form oracle checks.

use toric_kstab::curvature::weighted_scalar_curvature;
use toric_kstab::polytope::examples::{interval, simplex, square};
use toric_kstab::potentials::{guillemin_potential, make_pl, probe_grid};
use toric_kstab::stability::{boundary_norm, extremal_affine, futaki};
use toric_kstab::{AffineFunction, LabelledPolytope, Quadrature, QuadratureScheme, Result};

struct Case {
    name: &'static str,
    polytope: LabelledPolytope,
    weight: AffineFunction,
    s: f64,
    futaki_u0: Option<f64>,
}

fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "interval",
            polytope: interval(),
            weight: AffineFunction::constant(1, 1.0),
            s: 4.0,
            futaki_u0: Some(1.0),
        },
        Case {
            name: "interval f=1+x",
            polytope: interval(),
            weight: AffineFunction::new(vec![1.0], 1.0),
            s: 8.0,
            futaki_u0: Some(std::f64::consts::LN_2),
        },
        Case {
            name: "square",
            polytope: square(),
            weight: AffineFunction::constant(2, 1.0),
            s: 4.0,
            futaki_u0: Some(8.0),
        },
        Case {
            name: "simplex",
            polytope: simplex(),
            weight: AffineFunction::constant(2, 1.0),
            s: 12.0,
            futaki_u0: None,
        },
    ]
}

fn report(name: &str, err: f64, tol: f64) -> bool {
    let ok = err <= tol;
    println!(
        "{} {name}: error {err:e} (tol {tol:e})",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

fn check_case(c: &Case, scheme: &QuadratureScheme) -> Result<bool> {
    let q = Quadrature::new(&c.polytope, scheme)?;
    let s = extremal_affine(&q, &c.weight)?.affine;
    let m = c.polytope.dim();
    let mut ok = report(
        &format!("extremal {}", c.name),
        s.gradient
            .iter()
            .fold((s.constant - c.s).abs(), |e, g| e.max(g.abs())),
        1e-7,
    );
    let u0 = guillemin_potential(&c.polytope);
    let mut worst: f64 = 0.0;
    for x in probe_grid(&c.polytope, 10) {
        worst = worst.max((weighted_scalar_curvature(&u0, &c.weight, &x)? - c.s).abs());
    }
    ok &= report(&format!("abreu {}", c.name), worst, 1e-8);
    if let Some(expected) = c.futaki_u0 {
        let fine = Quadrature::new(&c.polytope, &QuadratureScheme::fine())?;
        let s = extremal_affine(&fine, &c.weight)?.affine;
        ok &= report(
            &format!("solution identity {}", c.name),
            (futaki(&fine, &c.weight, &s, &u0)? - expected).abs(),
            1e-6,
        );
    }
    let phi = AffineFunction::new((0..m).map(|i| 0.7 - 0.3 * i as f64).collect(), -1.1);
    let sup = c
        .polytope
        .vertices()
        .iter()
        .map(|v| phi.eval(v).abs())
        .fold(0.0, f64::max);
    ok &= report(
        &format!("futaki of affine {}", c.name),
        futaki(&q, &c.weight, &s, &phi)?.abs(),
        1e-9 * (1.0 + sup),
    );
    Ok(ok)
}

fn check_pl(scheme: &QuadratureScheme) -> Result<bool> {
    let sq = square();
    let q = Quadrature::new(&sq, scheme)?;
    let one = AffineFunction::constant(2, 1.0);
    let s = extremal_affine(&q, &one)?.affine;
    let v = make_pl(vec![
        AffineFunction::constant(2, 0.0),
        AffineFunction::coordinate(2, 0),
    ])?;
    let mut ok = report(
        "crease futaki square",
        (futaki(&q, &one, &s, &v)? - 2.0).abs(),
        1e-8,
    );
    ok &= report(
        "crease bnorm square",
        (boundary_norm(&sq, &q, &one, &v)? - 3.0).abs(),
        1e-8,
    );

    let iv = interval();
    let q = Quadrature::new(&iv, scheme)?;
    let f = AffineFunction::new(vec![1.0], 1.0);
    let s = extremal_affine(&q, &f)?.affine;
    let v = make_pl(vec![
        AffineFunction::constant(1, 0.0),
        AffineFunction::new(vec![1.0], -0.5),
    ])?;
    ok &= report(
        "crease futaki interval f=1+x",
        (futaki(&q, &f, &s, &v)? - 1.0 / 3.0).abs(),
        1e-8,
    );
    ok &= report(
        "crease bnorm interval f=1+x",
        (boundary_norm(&iv, &q, &f, &v)? - 0.25).abs(),
        1e-8,
    );
    Ok(ok)
}

/// Print one line per check; true when all pass.
pub fn run(scheme: &QuadratureScheme) -> bool {
    let mut all = true;
    for c in cases() {
        match check_case(&c, scheme) {
            Ok(ok) => all &= ok,
            Err(e) => {
                println!("FAIL {}: {e}", c.name);
                all = false;
            }
        }
    }
    match check_pl(scheme) {
        Ok(ok) => all &= ok,
        Err(e) => {
            println!("FAIL crease checks: {e}");
            all = false;
        }
    }
    all
}
