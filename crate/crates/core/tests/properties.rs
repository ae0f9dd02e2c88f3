#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;

use toric_kstab::curvature::facet_sample_points;
use toric_kstab::energy::EnergyContext;
use toric_kstab::polytope::examples::{interval, simplex, square};
use toric_kstab::potentials::{
    certify_convexity, guillemin_potential, make_pl, normalize, PROBE_RESOLUTION,
};
use toric_kstab::stability::{
    boundary_norm, extremal_affine, futaki, l1_norm, stability_scan, ScanConfig,
};
use toric_kstab::{
    build_polytope, facet_measure, AffineFunction, LabelledPolytope, PLConvexFunction, Polynomial,
    Quadrature, QuadratureScheme,
};

fn one(m: usize) -> AffineFunction {
    AffineFunction::constant(m, 1.0)
}

/// Polygon circumscribed about the unit circle around `centre`, with rescaled labels.
fn polygon(angles: &[f64], scales: &[f64], centre: [f64; 2]) -> LabelledPolytope {
    let labels = angles
        .iter()
        .zip(scales)
        .map(|(&t, &s)| {
            let n = [t.cos(), t.sin()];
            AffineFunction::new(
                vec![s * n[0], s * n[1]],
                s * (1.0 - n[0] * centre[0] - n[1] * centre[1]),
            )
        })
        .collect();
    build_polytope(labels, None).unwrap()
}

fn arb_polygon() -> impl Strategy<Value = LabelledPolytope> {
    (3usize..=6)
        .prop_flat_map(|k| {
            (
                prop::collection::vec(-0.2f64..0.2, k),
                prop::collection::vec(0.3f64..3.0, k),
                (-2.0f64..2.0, -2.0f64..2.0),
                0.0f64..(2.0 * PI),
            )
        })
        .prop_map(|(jitter, scales, (cx, cy), rot)| {
            let k = jitter.len();
            let angles: Vec<f64> = jitter
                .iter()
                .enumerate()
                .map(|(j, d)| rot + (j as f64 + d) * 2.0 * PI / k as f64)
                .collect();
            polygon(&angles, &scales, [cx, cy])
        })
}

/// Interior point as a convex combination of vertices with weights bounded below.
fn interior_point(p: &LabelledPolytope, w: &[f64]) -> Vec<f64> {
    let verts = p.vertices();
    let total: f64 = w.iter().take(verts.len()).sum();
    let mut x = vec![0.0; p.dim()];
    for (v, wi) in verts.iter().zip(w) {
        x.iter_mut().zip(v).for_each(|(a, b)| *a += wi * b / total);
    }
    x
}

fn sorted_vertices(p: &LabelledPolytope) -> Vec<Vec<f64>> {
    let mut v = p.vertices().to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn arb_pl(m: usize) -> impl Strategy<Value = PLConvexFunction> {
    prop::collection::vec(
        (prop::collection::vec(-1.0f64..1.0, m), -0.5f64..0.5),
        2..=4,
    )
    .prop_map(|pieces| {
        make_pl(
            pieces
                .into_iter()
                .map(|(g, c)| AffineFunction::new(g, c))
                .collect(),
        )
        .unwrap()
    })
}

struct Setup {
    polytope: LabelledPolytope,
    quadrature: Quadrature,
    weight: AffineFunction,
    extremal: AffineFunction,
}

fn setup(p: LabelledPolytope, f: AffineFunction) -> Setup {
    let quadrature = Quadrature::new(&p, &QuadratureScheme::default()).unwrap();
    let extremal = extremal_affine(&quadrature, &f).unwrap().affine;
    Setup {
        polytope: p,
        quadrature,
        weight: f,
        extremal,
    }
}

fn weighted_square() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| setup(square(), AffineFunction::new(vec![0.2, -0.1], 1.0)))
}

/// `C` with `‖v‖_b >= C ∫ v dμ`, estimated once from a fixed batch of crease functions.
fn taming_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let s = weighted_square();
        let x0 = s.polytope.basepoint();
        (0..32)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / 32.0;
                let v = make_pl(vec![
                    AffineFunction::constant(2, 0.0),
                    AffineFunction::new(vec![t.cos(), t.sin()], 0.0),
                ])
                .unwrap();
                let v = normalize(&v, x0);
                boundary_norm(&s.polytope, &s.quadrature, &s.weight, &v).unwrap()
                    / l1_norm(&s.quadrature, &v).unwrap()
            })
            .fold(f64::INFINITY, f64::min)
            * 0.5
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn vertex_set_is_label_order_independent(p in arb_polygon(), shift in 0usize..6) {
        let mut labels = p.labels().to_vec();
        let n = labels.len();
        labels.rotate_left(shift % n);
        labels.reverse();
        let q = build_polytope(labels, None).unwrap();
        let (a, b) = (sorted_vertices(&p), sorted_vertices(&q));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(x.iter().zip(y).all(|(s, t)| (s - t).abs() <= 10.0 * p.eps()));
        }
    }

    #[test]
    fn weighted_normals_cancel(p in arb_polygon()) {
        let mut sum = [0.0; 2];
        for (i, l) in p.labels().iter().enumerate() {
            let sigma = facet_measure(&p, i).unwrap().total;
            sum[0] += sigma * l.gradient[0];
            sum[1] += sigma * l.gradient[1];
        }
        prop_assert!(max_abs(&sum) < 1e-10, "{sum:?}");
    }

    #[test]
    fn facet_samples_lie_on_their_facet(p in arb_polygon()) {
        for (i, li) in p.labels().iter().enumerate() {
            for x in facet_sample_points(&p, i, 5) {
                prop_assert!(li.eval(&x).abs() <= 10.0 * p.eps());
                for (j, lj) in p.labels().iter().enumerate() {
                    if j != i {
                        prop_assert!(lj.eval(&x) > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn polynomials_integrate_independently_of_refinement(p in arb_polygon(), a in 0i32..4, b in 0i32..3) {
        let h = |x: &[f64]| x[0].powi(a) * x[1].powi(b);
        let coarse = Quadrature::new(&p, &QuadratureScheme::new(6, 0, 0)).unwrap();
        let fine = Quadrature::new(&p, &QuadratureScheme::new(6, 2, 1)).unwrap();
        let (u, v) = (coarse.integrate_interior(&one(2), 0, h).unwrap(), fine.integrate_interior(&one(2), 0, h).unwrap());
        let scale = fine.integrate_interior(&one(2), 0, |x| h(x).abs()).unwrap().max(1e-300);
        prop_assert!((u - v).abs() <= 1e-12 * scale, "{u} vs {v}");
        let (u, v) = (coarse.integrate_boundary(&one(2), 0, h).unwrap(), fine.integrate_boundary(&one(2), 0, h).unwrap());
        let scale = fine.integrate_boundary(&one(2), 0, |x| h(x).abs()).unwrap().max(1e-300);
        prop_assert!((u - v).abs() <= 1e-12 * scale, "{u} vs {v}");
    }

    #[test]
    fn stokes_identity(p in arb_polygon(), c in prop::collection::vec(-1.0f64..1.0, 4)) {
        let q = Quadrature::new(&p, &QuadratureScheme::new(6, 1, 0)).unwrap();
        let field = |x: &[f64]| [c[0] * x[0] * x[0] * x[1] + c[1] * x[1].powi(3), c[2] * x[0] * x[1] * x[1] + c[3] * x[0].powi(2)];
        let div = |x: &[f64]| 2.0 * c[0] * x[0] * x[1] + 2.0 * c[2] * x[0] * x[1];
        let mut lhs = 0.0;
        for l in p.labels() {
            let scale = l.normal_norm();
            lhs += q
                .integrate_boundary(&one(2), 0, |x| {
                    if l.eval(x).abs() <= 1e-9 * scale {
                        let v = field(x);
                        v[0] * l.gradient[0] + v[1] * l.gradient[1]
                    } else {
                        0.0
                    }
                })
                .unwrap();
        }
        let rhs = -q.integrate_interior(&one(2), 0, div).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn integrals_do_not_depend_on_fan_order(p in arb_polygon(), shift in 1usize..6) {
        let mut labels = p.labels().to_vec();
        let n = labels.len();
        labels.rotate_left(shift % n);
        let q = build_polytope(labels, None).unwrap();
        let sch = QuadratureScheme::new(6, 1, 1);
        let f = AffineFunction::new(vec![0.01, 0.02], 1.0);
        let h = |x: &[f64]| (0.3 * x[0] - 0.2 * x[1]).exp();
        let a = Quadrature::new(&p, &sch).unwrap().integrate_interior(&f, 5, h).unwrap();
        let b = Quadrature::new(&q, &sch).unwrap().integrate_interior(&f, 5, h).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jet_identities(
        p in arb_polygon(),
        w in prop::collection::vec(0.05f64..1.0, 6),
        c in prop::collection::vec(-0.02f64..0.02, 3),
    ) {
        let u = guillemin_potential(&p).perturbed(
            &Polynomial::from_terms(2, [(vec![4, 0], c[0].abs()), (vec![2, 2], c[1].abs()), (vec![1, 3], c[2])]).unwrap(),
        );
        let x = interior_point(&p, &w);
        let Ok(j) = u.jet(&x) else { return Err(TestCaseError::reject("not convex at x")) };
        let m = 2;
        let mm = m * m;
        let mat = |a: &[f64], b: &[f64]| -> Vec<f64> {
            (0..mm).map(|r| (0..m).map(|k| a[(r / m) * m + k] * b[k * m + r % m]).sum()).collect()
        };
        let hg = mat(&j.h, &j.g);
        for r in 0..m {
            for s in 0..m {
                prop_assert!((hg[r * m + s] - if r == s { 1.0 } else { 0.0 }).abs() < 1e-10, "{hg:?}");
            }
        }
        for k in 0..m {
            let rhs = mat(&mat(&j.h, j.g3_block(k)), &j.h);
            let scale = 1.0 + max_abs(j.h1_block(k));
            for r in 0..mm {
                prop_assert!((j.h1_block(k)[r] + rhs[r]).abs() <= 1e-10 * scale);
            }
            for l in 0..m {
                let a = mat(&mat(j.h1_block(l), j.g3_block(k)), &j.h);
                let b = mat(&mat(&j.h, j.g4_block(k, l)), &j.h);
                let c = mat(&mat(&j.h, j.g3_block(k)), j.h1_block(l));
                let scale = 1.0 + max_abs(j.h2_block(k, l));
                for r in 0..mm {
                    prop_assert!((j.h2_block(k, l)[r] + a[r] + b[r] + c[r]).abs() <= 1e-8 * scale);
                }
            }
        }
    }

    #[test]
    fn inverse_hessian_matches_differences(p in arb_polygon(), w in prop::collection::vec(0.05f64..1.0, 6)) {
        let u = guillemin_potential(&p);
        let x = interior_point(&p, &w);
        let j = u.jet(&x).unwrap();
        let step = 1e-5;
        for k in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += step;
            xm[k] -= step;
            let (hp, hm) = (u.jet(&xp).unwrap().h, u.jet(&xm).unwrap().h);
            let scale = max_abs(j.h1_block(k)).max(max_abs(&j.h));
            for r in 0..4 {
                let fd = (hp[r] - hm[r]) / (2.0 * step);
                prop_assert!((fd - j.h1_block(k)[r]).abs() <= 1e-6 * scale, "{fd} vs {}", j.h1_block(k)[r]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn guillemin_inverse_hessian_degenerates_linearly_on_facets(p in arb_polygon()) {
        let u = guillemin_potential(&p);
        for (i, l) in p.labels().iter().enumerate() {
            let n2 = l.normal_norm().powi(2);
            for xi in facet_sample_points(&p, i, 2) {
                let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
                    .iter()
                    .map(|&t| {
                        let x: Vec<f64> = xi.iter().zip(&l.gradient).map(|(a, g)| a + t * g / n2).collect();
                        let h = u.jet(&x).unwrap().h;
                        let hu = [h[0] * l.gradient[0] + h[1] * l.gradient[1], h[2] * l.gradient[0] + h[3] * l.gradient[1]];
                        max_abs(&hu) / l.eval(&x)
                    })
                    .collect();
                prop_assert!(ratios.iter().all(|r| r.is_finite()));
                prop_assert!((ratios[2] - ratios[1]).abs() <= 0.1 * ratios[2], "{ratios:?}");
            }
        }
    }

    #[test]
    fn normalization_is_idempotent_and_kills_affines(
        v in arb_pl(2),
        phi in (prop::collection::vec(-2.0f64..2.0, 2), -2.0f64..2.0),
        probes in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 4), 8),
    ) {
        let p = square();
        let x0 = p.basepoint();
        let once = normalize(&v, x0);
        let twice = normalize(&once, x0);
        let phi = AffineFunction::new(phi.0, phi.1);
        let shifted = normalize(&make_pl(v.pieces().iter().map(|a| a.add(&phi)).collect()).unwrap(), x0);
        for w in &probes {
            let x = interior_point(&p, w);
            let scale = 1e-13 * (1.0 + v.eval(&x).abs() + phi.eval(&x).abs());
            prop_assert!((twice.eval(&x) - once.eval(&x)).abs() <= scale);
            prop_assert!((shifted.eval(&x) - once.eval(&x)).abs() <= scale);
        }
    }

    #[test]
    fn futaki_is_unchanged_by_normalization(v in arb_pl(2)) {
        let s = weighted_square();
        let a = futaki(&s.quadrature, &s.weight, &s.extremal, &v).unwrap();
        let b = futaki(&s.quadrature, &s.weight, &s.extremal, &normalize(&v, s.polytope.basepoint())).unwrap();
        let sup = s.polytope.vertices().iter().map(|x| v.eval(x).abs()).fold(0.0, f64::max);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + sup), "{a} vs {b}");
    }

    #[test]
    fn boundary_norm_is_a_seminorm(v in arb_pl(2), w in arb_pl(2), lambda in 0.01f64..10.0) {
        let s = weighted_square();
        let x0 = s.polytope.basepoint();
        let (v, w) = (normalize(&v, x0), normalize(&w, x0));
        let norm = |g: &PLConvexFunction| boundary_norm(&s.polytope, &s.quadrature, &s.weight, g).unwrap();
        let scaled = make_pl(v.pieces().iter().map(|a| a.scaled(lambda)).collect()).unwrap();
        let sum = make_pl(v.pieces().iter().flat_map(|a| w.pieces().iter().map(move |b| a.add(b))).collect()).unwrap();
        let (nv, nw) = (norm(&v), norm(&w));
        prop_assert!(nv >= 0.0 && nw >= 0.0);
        prop_assert!((norm(&scaled) - lambda * nv).abs() <= 1e-10 * (1.0 + lambda * nv));
        prop_assert!(norm(&sum) <= nv + nw + 1e-10 * (1.0 + nv + nw));
    }

    #[test]
    fn boundary_norm_tames_the_l1_norm(v in arb_pl(2)) {
        let s = weighted_square();
        let v = normalize(&v, s.polytope.basepoint());
        let b = boundary_norm(&s.polytope, &s.quadrature, &s.weight, &v).unwrap();
        prop_assume!(b > 1e-10);
        let l1 = l1_norm(&s.quadrature, &v).unwrap();
        prop_assert!(b >= taming_constant() * l1, "{b} < {} * {l1}", taming_constant());
    }
}

#[test]
fn scan_is_deterministic() {
    let s = weighted_square();
    let config = ScanConfig::with_total(2, 80, 5);
    let a = stability_scan(&s.polytope, &s.quadrature, &s.weight, &s.extremal, &config).unwrap();
    let b = stability_scan(&s.polytope, &s.quadrature, &s.weight, &s.extremal, &config).unwrap();
    assert_eq!(a, b);
    let min = a
        .samples
        .iter()
        .map(|x| x.ratio)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(a.lambda_hat, Some(min));
    assert!(a
        .samples
        .iter()
        .all(|x| x.bnorm > 0.0 && x.ratio == x.futaki / x.bnorm));
}

fn energy_cases() -> &'static [(LabelledPolytope, EnergyContext)] {
    static C: OnceLock<Vec<(LabelledPolytope, EnergyContext)>> = OnceLock::new();
    C.get_or_init(|| {
        let sch = QuadratureScheme::new(6, 2, 2);
        let mut out = Vec::new();
        for p in [interval(), square(), simplex()] {
            let m = p.dim();
            for f in [
                one(m),
                AffineFunction::new((0..m).map(|i| 0.3 - 0.1 * i as f64).collect(), 1.0),
            ] {
                let ctx = EnergyContext::new(&p, &f, &sch).unwrap();
                out.push((p.clone(), ctx));
            }
        }
        out
    })
}

fn perturbation(m: usize, c: &[f64]) -> Polynomial {
    let basis = Polynomial::monomial_basis(m, 2, 4);
    Polynomial::from_terms(m, basis.into_iter().zip(c.iter().copied())).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn energy_gradient_matches_differences(case in 0usize..6, c in prop::collection::vec(-0.05f64..0.05, 12)) {
        let (p, ctx) = &energy_cases()[case];
        let m = p.dim();
        let u = guillemin_potential(p).perturbed(&perturbation(m, &c));
        prop_assume!(certify_convexity(&u, p, PROBE_RESOLUTION).is_ok());
        let basis = Polynomial::monomial_basis(m, 2, 3);
        let g = ctx.gradient(&u, &basis).unwrap();
        let h = 1e-5;
        for (i, e) in basis.iter().enumerate() {
            let b = Polynomial::monomial(e.clone());
            let ep = ctx.energy(&u.perturbed(&b.scaled(h))).unwrap().total;
            let em = ctx.energy(&u.perturbed(&b.scaled(-h))).unwrap().total;
            let fd = (ep - em) / (2.0 * h);
            prop_assert!((g[i] - fd).abs() <= 1e-5 * fd.abs().max(1.0), "{e:?}: {} vs {fd}", g[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(25))]

    #[test]
    fn energy_decomposes_and_ignores_affines(
        case in 0usize..6,
        c in prop::collection::vec(-0.05f64..0.05, 12),
        phi in (prop::collection::vec(-3.0f64..3.0, 3), -3.0f64..3.0),
    ) {
        let (p, ctx) = &energy_cases()[case];
        let m = p.dim();
        let u = guillemin_potential(p).perturbed(&perturbation(m, &c));
        prop_assume!(certify_convexity(&u, p, PROBE_RESOLUTION).is_ok());
        let e = ctx.energy(&u).unwrap();
        prop_assert_eq!(e.total, e.futaki - e.entropy);
        let phi = AffineFunction::new(phi.0[..m].to_vec(), phi.1);
        let shifted = ctx.energy(&u.add_affine(&phi)).unwrap();
        prop_assert!((shifted.total - e.total).abs() <= 1e-10 * (1.0 + e.total.abs()), "{} vs {}", shifted.total, e.total);
    }
}

fn solved_cases() -> &'static [(LabelledPolytope, EnergyContext, f64)] {
    static C: OnceLock<Vec<(LabelledPolytope, EnergyContext, f64)>> = OnceLock::new();
    C.get_or_init(|| {
        [
            (interval(), one(1)),
            (interval(), AffineFunction::new(vec![1.0], 1.0)),
            (square(), one(2)),
        ]
        .into_iter()
        .map(|(p, f)| {
            let ctx = EnergyContext::new(&p, &f, &QuadratureScheme::default()).unwrap();
            let base = ctx.energy(&guillemin_potential(&p)).unwrap().total;
            (p, ctx, base)
        })
        .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn guillemin_potential_minimizes_the_energy(case in 0usize..3, c in prop::collection::vec(-0.1f64..0.1, 12)) {
        let (p, ctx, base) = &solved_cases()[case];
        let u = guillemin_potential(p).perturbed(&perturbation(p.dim(), &c));
        prop_assume!(certify_convexity(&u, p, PROBE_RESOLUTION).is_ok());
        let e = ctx.energy(&u).unwrap().total;
        prop_assert!(e >= base - 1e-8, "{e} < {base}");
    }
}
