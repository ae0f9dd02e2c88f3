//! Weighted relative K-energy and its minimization.
//!
//! ```text
//! E(u) = F(u) - ∫_△ log(det Hess u / det Hess u_0) dμ/f^{2m-1}
//! ```
//!
//! For `u = u_0 + P` the log-det ratio is `log det(I + L_0⁻¹ Hess P L_0⁻ᵀ)`
//! with `Hess u_0 = L_0 L_0ᵀ`, which stays bounded up to `∂△`.
//!
//! The first variation along `b` is
//! `F(b) - ∫ tr(H^u Hess b) dμ/f^{2m-1} = ∫ (s_{u,f} - s) b dμ/f^{2m+1}`.
//! [`EnergyContext::gradient`] uses the left-hand form, which is the exact
//! derivative of the discretized energy.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::curvature::{abreu_residual_norm, weighted_curvature_from_jet};
use crate::error::{Error, Result};
use crate::polytope::{validate_weight, AffineFunction, LabelledPolytope};
use crate::potentials::{certify_convexity, Polynomial, SymplecticPotential, PROBE_RESOLUTION};
use crate::quadrature::{Quadrature, QuadratureScheme};
use crate::stability::{extremal_affine, futaki, solution_futaki_value};

/// `E = futaki - entropy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyValue {
    pub total: f64,
    pub futaki: f64,
    pub entropy: f64,
}

/// Cached quadrature and extremal affine function for one `(△, L, f)`.
#[derive(Debug, Clone)]
pub struct EnergyContext {
    polytope: LabelledPolytope,
    quadrature: Quadrature,
    weight: AffineFunction,
    extremal: AffineFunction,
}

/// Value and row-major Hessian of every basis monomial at `x`, via a power table.
struct BasisJet {
    values: Vec<f64>,
    hessians: Vec<f64>,
}

fn basis_jet(exponents: &[Vec<u32>], x: &[f64]) -> BasisJet {
    let m = x.len();
    let top = exponents.iter().flatten().copied().max().unwrap_or(0) as usize;
    let mut pows = vec![1.0; m * (top + 1)];
    for (d, xd) in x.iter().enumerate() {
        for e in 1..=top {
            pows[d * (top + 1) + e] = pows[d * (top + 1) + e - 1] * xd;
        }
    }
    let pw = |d: usize, e: u32, drop: u32| -> f64 {
        if drop > e {
            0.0
        } else {
            let f = (0..drop).map(|k| (e - k) as f64).product::<f64>();
            f * pows[d * (top + 1) + (e - drop) as usize]
        }
    };
    let mut values = Vec::with_capacity(exponents.len());
    let mut hessians = vec![0.0; exponents.len() * m * m];
    for (b, e) in exponents.iter().enumerate() {
        values.push((0..m).map(|d| pw(d, e[d], 0)).product());
        for i in 0..m {
            for j in i..m {
                let v: f64 = (0..m)
                    .map(|d| pw(d, e[d], (d == i) as u32 + (d == j) as u32))
                    .product();
                hessians[b * m * m + i * m + j] = v;
                hessians[b * m * m + j * m + i] = v;
            }
        }
    }
    BasisJet { values, hessians }
}

fn not_convex(e: Error) -> Error {
    match e {
        Error::NodeEvaluationFailure { point } => Error::NotConvexAt { point },
        e => e,
    }
}

fn cholesky(g: &[f64], m: usize) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    DMatrix::from_row_slice(m, m, g).cholesky()
}

impl EnergyContext {
    pub fn new(
        p: &LabelledPolytope,
        f: &AffineFunction,
        scheme: &QuadratureScheme,
    ) -> Result<Self> {
        validate_weight(p, f)?;
        let quadrature = Quadrature::new(p, scheme)?;
        let extremal = extremal_affine(&quadrature, f)?.affine;
        Ok(Self {
            polytope: p.clone(),
            quadrature,
            weight: f.clone(),
            extremal,
        })
    }

    pub fn polytope(&self) -> &LabelledPolytope {
        &self.polytope
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    pub fn weight(&self) -> &AffineFunction {
        &self.weight
    }

    pub fn extremal(&self) -> &AffineFunction {
        &self.extremal
    }

    fn require_canonical(u: &SymplecticPotential) -> Result<()> {
        if u.is_canonical() {
            Ok(())
        } else {
            Err(Error::NotAdmissible(
                "the K-energy needs the Guillemin part".into(),
            ))
        }
    }

    /// `E(u)` without a convexity certificate; non-convexity at a node is an error.
    pub fn energy(&self, u: &SymplecticPotential) -> Result<EnergyValue> {
        Self::require_canonical(u)?;
        let q = &self.quadrature;
        let m = q.dim();
        let fut = futaki(q, &self.weight, &self.extremal, u)?;
        let perturbation = u.perturbation();
        let entropy = q
            .integrate_interior(&self.weight, (2 * m - 1) as i32, |x| {
                let Some(l0) = cholesky(&u.canonical_hessian(x), m) else {
                    return f64::NAN;
                };
                let l = l0.l();
                let p2 = DMatrix::from_row_slice(m, m, &perturbation.hessian(x));
                let Some(left) = l.solve_lower_triangular(&p2) else {
                    return f64::NAN;
                };
                let Some(mt) = l.solve_lower_triangular(&left.transpose()) else {
                    return f64::NAN;
                };
                let a = DMatrix::identity(m, m) + (&mt + mt.transpose()) * 0.5;
                match a.cholesky() {
                    Some(c) => 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
                    None => f64::NAN,
                }
            })
            .map_err(not_convex)?;
        Ok(EnergyValue {
            total: fut - entropy,
            futaki: fut,
            entropy,
        })
    }

    /// Components of `dE` along each basis monomial (exponent vectors).
    pub fn gradient(&self, u: &SymplecticPotential, basis: &[Vec<u32>]) -> Result<Vec<f64>> {
        Self::require_canonical(u)?;
        let q = &self.quadrature;
        let m = q.dim();
        let f = &self.weight;
        let s = &self.extremal;
        let interior = q
            .integrate_interior_vec(f, (2 * m + 1) as i32, basis.len(), |x, out| {
                let Some(c) = cholesky(&u.hessian(x), m) else {
                    out.fill(f64::NAN);
                    return;
                };
                let h = c.inverse();
                let jet = basis_jet(basis, x);
                let f2 = f.eval(x).powi(2);
                let sx = s.eval(x);
                for (b, o) in out.iter_mut().enumerate() {
                    let hb = &jet.hessians[b * m * m..(b + 1) * m * m];
                    let tr: f64 = (0..m * m).map(|k| h[(k / m, k % m)] * hb[k]).sum();
                    *o = sx * jet.values[b] + f2 * tr;
                }
            })
            .map_err(not_convex)?;
        let boundary = q.integrate_boundary_vec(f, (2 * m - 1) as i32, basis.len(), |x, out| {
            out.copy_from_slice(&basis_jet(basis, x).values);
        })?;
        Ok(boundary
            .iter()
            .zip(interior)
            .map(|(b, i)| 2.0 * b - i)
            .collect())
    }

    /// Second variation `∫ tr(H B H C) dμ/f^{2m-1}` over pairs of basis Hessians.
    pub fn second_variation(
        &self,
        u: &SymplecticPotential,
        basis: &[Vec<u32>],
    ) -> Result<DMatrix<f64>> {
        Self::require_canonical(u)?;
        let q = &self.quadrature;
        let m = q.dim();
        let mm = m * m;
        let n = basis.len();
        let pairs = n * (n + 1) / 2;
        let flat = q
            .integrate_interior_vec(&self.weight, (2 * m - 1) as i32, pairs, |x, out| {
                let Some(c) = cholesky(&u.hessian(x), m) else {
                    out.fill(f64::NAN);
                    return;
                };
                let h = c.inverse();
                let jet = basis_jet(basis, x);
                let mut hb = vec![0.0; n * mm];
                for b in 0..n {
                    let bh = &jet.hessians[b * mm..(b + 1) * mm];
                    for r in 0..m {
                        for col in 0..m {
                            hb[b * mm + r * m + col] =
                                (0..m).map(|t| h[(r, t)] * bh[t * m + col]).sum();
                        }
                    }
                }
                let mut idx = 0;
                for i in 0..n {
                    let a = &hb[i * mm..(i + 1) * mm];
                    for j in i..n {
                        let b = &hb[j * mm..(j + 1) * mm];
                        let mut v = 0.0;
                        for r in 0..m {
                            for col in 0..m {
                                v += a[r * m + col] * b[col * m + r];
                            }
                        }
                        out[idx] = v;
                        idx += 1;
                    }
                }
            })
            .map_err(not_convex)?;
        let mut out = DMatrix::zeros(n, n);
        let mut idx = 0;
        for i in 0..n {
            for j in i..n {
                out[(i, j)] = flat[idx];
                out[(j, i)] = flat[idx];
                idx += 1;
            }
        }
        Ok(out)
    }

    /// `∫ (s_{u,f} - s) b dμ/f^{2m+1}` from the curvature directly.
    pub fn curvature_gradient(
        &self,
        u: &SymplecticPotential,
        basis: &[Vec<u32>],
    ) -> Result<Vec<f64>> {
        let q = &self.quadrature;
        let m = q.dim();
        let f = &self.weight;
        q.integrate_interior_vec(f, (2 * m + 1) as i32, basis.len(), |x, out| {
            match u.jet(x) {
                Ok(jet) => {
                    let d = weighted_curvature_from_jet(&jet, f, x) - self.extremal.eval(x);
                    for (o, v) in out.iter_mut().zip(basis_jet(basis, x).values) {
                        *o = d * v;
                    }
                }
                Err(_) => out.fill(f64::NAN),
            }
        })
    }

    /// Weighted Abreu residual of `u` against the extremal affine function.
    pub fn residual(&self, u: &SymplecticPotential) -> Result<f64> {
        abreu_residual_norm(&self.quadrature, u, &self.weight, &self.extremal)
    }

    /// `m ∫ dμ/f^{2m-1}`.
    pub fn solution_futaki_value(&self) -> Result<f64> {
        solution_futaki_value(&self.quadrature, &self.weight)
    }
}

/// `E(u)` after certifying convexity of `u`.
pub fn k_energy(
    p: &LabelledPolytope,
    f: &AffineFunction,
    u: &SymplecticPotential,
    scheme: &QuadratureScheme,
) -> Result<EnergyValue> {
    certify_convexity(u, p, PROBE_RESOLUTION)?;
    EnergyContext::new(p, f, scheme)?.energy(u)
}

/// `dE` along each monomial in `basis` (exponent vectors).
pub fn k_energy_gradient(
    p: &LabelledPolytope,
    f: &AffineFunction,
    u: &SymplecticPotential,
    basis: &[Vec<u32>],
    scheme: &QuadratureScheme,
) -> Result<Vec<f64>> {
    certify_convexity(u, p, PROBE_RESOLUTION)?;
    EnergyContext::new(p, f, scheme)?.gradient(u, basis)
}

/// `(1 - t) u_1 + t u_2` for potentials sharing the canonical flag.
pub fn interpolate(
    u1: &SymplecticPotential,
    u2: &SymplecticPotential,
    t: f64,
) -> SymplecticPotential {
    u1.with_perturbation(
        u1.perturbation()
            .scaled(1.0 - t)
            .add(&u2.perturbation().scaled(t)),
    )
}

/// Smallest discrete second difference of `E` at `steps + 1` equispaced points on `[u_1, u_2]`.
pub fn k_energy_convexity_check(
    ctx: &EnergyContext,
    u1: &SymplecticPotential,
    u2: &SymplecticPotential,
    steps: usize,
) -> Result<f64> {
    if u1.is_canonical() != u2.is_canonical() {
        return Err(Error::InvalidInput(
            "segment endpoints differ in the canonical flag".into(),
        ));
    }
    let steps = steps.max(2);
    let energies = (0..=steps)
        .map(|i| {
            let u = interpolate(u1, u2, i as f64 / steps as f64);
            certify_convexity(&u, ctx.polytope(), PROBE_RESOLUTION)?;
            ctx.energy(&u).map(|e| e.total)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(energies
        .windows(3)
        .map(|w| w[0] - 2.0 * w[1] + w[2])
        .fold(f64::INFINITY, f64::min))
}

/// Descent settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    pub residual_tol: f64,
    pub gradient_tol: f64,
    pub initial_step: f64,
    pub backtracking: f64,
    pub min_step: f64,
    /// Highest monomial degree in the perturbation basis (lowest is 2).
    pub degree: u32,
    /// Measure the gradient in the second-variation metric at each iterate.
    pub preconditioned: bool,
    /// Recorded for reproducibility; the descent itself is deterministic.
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            residual_tol: 1e-5,
            gradient_tol: 1e-7,
            initial_step: 1.0,
            backtracking: 0.5,
            min_step: 1e-12,
            degree: 6,
            preconditioned: true,
            seed: 0,
        }
    }
}

/// Why the descent stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    ResidualConverged,
    GradientConverged,
    /// No step above the minimum decreased `E`; the best iterate is returned.
    Stalled,
    /// Iteration budget exhausted; the best iterate is returned.
    MaxItersExceeded,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ResidualConverged => "residual_converged",
            Termination::GradientConverged => "gradient_converged",
            Termination::Stalled => "stalled",
            Termination::MaxItersExceeded => "max_iters_exceeded",
        }
    }

    pub fn converged(&self) -> bool {
        matches!(
            self,
            Termination::ResidualConverged | Termination::GradientConverged
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iter: usize,
    pub energy: f64,
    pub residual: f64,
    pub gradient_norm: f64,
    /// Step accepted to reach this iterate (0 for the start).
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub potential: SymplecticPotential,
    pub energy: EnergyValue,
    pub history: Vec<IterateRecord>,
    /// Perturbation of each accepted iterate, aligned with `history`.
    pub iterates: Vec<Polynomial>,
    pub termination: Termination,
    /// `F(u)` at the final iterate.
    pub final_futaki: f64,
    /// `m ∫ dμ/f^{2m-1}`.
    pub expected_futaki: f64,
}

impl MinimizeResult {
    pub fn iterations(&self) -> usize {
        self.history.last().map_or(0, |r| r.iter)
    }

    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.residual)
    }

    pub fn identity_gap(&self) -> f64 {
        (self.final_futaki - self.expected_futaki).abs()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Backtracking gradient descent on the perturbation coefficients of
/// monomials of degree `2..=degree`; other terms of `initial` stay frozen.
pub fn minimize_k_energy(
    ctx: &EnergyContext,
    initial: &SymplecticPotential,
    options: &MinimizeOptions,
) -> Result<MinimizeResult> {
    let p = ctx.polytope();
    let m = p.dim();
    certify_convexity(initial, p, PROBE_RESOLUTION)?;
    let exponents = Polynomial::monomial_basis(m, 2, options.degree.max(2));
    let mut frozen = initial.perturbation().clone();
    let mut coeffs: Vec<f64> = exponents
        .iter()
        .map(|e| initial.perturbation().coeff(e))
        .collect();
    for (e, c) in exponents.iter().zip(&coeffs) {
        frozen.add_term(e, -c);
    }
    let assemble = |c: &[f64]| {
        let mut poly = frozen.clone();
        for (e, ci) in exponents.iter().zip(c) {
            poly.add_term(e, *ci);
        }
        initial.with_perturbation(poly)
    };

    let mut u = assemble(&coeffs);
    let mut energy = ctx.energy(&u)?;
    let mut grad = ctx.gradient(&u, &exponents)?;
    let mut residual = ctx.residual(&u)?;
    let mut iterates = vec![u.perturbation().clone()];
    let mut history = vec![IterateRecord {
        iter: 0,
        energy: energy.total,
        residual,
        gradient_norm: norm(&grad),
        step: 0.0,
    }];
    let mut step = options.initial_step;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut termination = Termination::MaxItersExceeded;

    for iter in 1..=options.max_iters + 1 {
        let gnorm = norm(&grad);
        if residual < options.residual_tol {
            termination = Termination::ResidualConverged;
            break;
        }
        if gnorm < options.gradient_tol {
            termination = Termination::GradientConverged;
            break;
        }
        if iter > options.max_iters {
            break;
        }
        let direction = if options.preconditioned {
            let q = ctx.second_variation(&u, &exponents)?;
            match q.cholesky() {
                Some(c) => {
                    step = options.initial_step;
                    c.solve(&nalgebra::DVector::from_column_slice(&grad))
                        .as_slice()
                        .to_vec()
                }
                None => grad.clone(),
            }
        } else {
            // Barzilai–Borwein initial step.
            if let Some((pc, pg)) = &prev {
                let ds: Vec<f64> = coeffs.iter().zip(pc).map(|(a, b)| a - b).collect();
                let dg: Vec<f64> = grad.iter().zip(pg).map(|(a, b)| a - b).collect();
                let sy: f64 = ds.iter().zip(&dg).map(|(a, b)| a * b).sum();
                if sy > 0.0 {
                    step = ds.iter().map(|x| x * x).sum::<f64>() / sy;
                }
            }
            grad.clone()
        };
        let slope: f64 = grad.iter().zip(&direction).map(|(g, d)| g * d).sum();
        let mut t = step;
        let mut accepted = None;
        let mut blocked_by_convexity = false;
        while t >= options.min_step {
            let trial: Vec<f64> = coeffs
                .iter()
                .zip(&direction)
                .map(|(c, d)| c - t * d)
                .collect();
            let v = assemble(&trial);
            if certify_convexity(&v, p, PROBE_RESOLUTION).is_err() {
                blocked_by_convexity = true;
                t *= options.backtracking;
                continue;
            }
            match ctx.energy(&v) {
                Ok(e) if e.total <= energy.total - 1e-4 * t * slope => {
                    accepted = Some((trial, v, e));
                    break;
                }
                Ok(_) => blocked_by_convexity = false,
                Err(Error::NotConvexAt { .. }) => blocked_by_convexity = true,
                Err(e) => return Err(e),
            }
            t *= options.backtracking;
        }
        let Some((trial, v, e)) = accepted else {
            if blocked_by_convexity {
                return Err(Error::LostConvexity {
                    min_step: options.min_step,
                });
            }
            termination = Termination::Stalled;
            break;
        };
        prev = Some((
            std::mem::replace(&mut coeffs, trial),
            std::mem::replace(&mut grad, ctx.gradient(&v, &exponents)?),
        ));
        u = v;
        energy = e;
        residual = ctx.residual(&u)?;
        step = t;
        iterates.push(u.perturbation().clone());
        history.push(IterateRecord {
            iter,
            energy: energy.total,
            residual,
            gradient_norm: norm(&grad),
            step: t,
        });
    }

    let final_futaki = energy.futaki;
    Ok(MinimizeResult {
        potential: u,
        energy,
        history,
        iterates,
        termination,
        final_futaki,
        expected_futaki: ctx.solution_futaki_value()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::examples::*;
    use crate::potentials::guillemin_potential;

    fn one(m: usize) -> AffineFunction {
        AffineFunction::constant(m, 1.0)
    }

    fn ctx(p: &LabelledPolytope, f: &AffineFunction) -> EnergyContext {
        EnergyContext::new(p, f, &QuadratureScheme::default()).unwrap()
    }

    #[test]
    fn energy_of_guillemin_potential() {
        let iv = interval();
        let e = ctx(&iv, &one(1)).energy(&guillemin_potential(&iv)).unwrap();
        assert_eq!(e.entropy, 0.0);
        assert!((e.total - 1.0).abs() < 1e-6);
        let sq = square();
        let c = ctx(&sq, &one(2));
        let u = guillemin_potential(&sq);
        let e = EnergyContext::new(&sq, &one(2), &QuadratureScheme::fine())
            .unwrap()
            .energy(&u)
            .unwrap();
        assert!((e.total - 8.0).abs() < 1e-6, "{e:?}");
        let base = c.energy(&u).unwrap();
        let shifted = c
            .energy(&u.add_affine(&AffineFunction::new(vec![0.3, -1.2], 2.0)))
            .unwrap();
        assert!((shifted.total - base.total).abs() < 1e-10);
    }

    #[test]
    fn gradient_vanishes_at_solutions() {
        let iv = interval();
        let u = guillemin_potential(&iv);
        let basis = Polynomial::monomial_basis(1, 2, 6);
        for f in [one(1), AffineFunction::new(vec![1.0], 1.0)] {
            let g = ctx(&iv, &f).gradient(&u, &basis).unwrap();
            assert!(g.iter().all(|x| x.abs() < 1e-9), "{g:?}");
        }
    }

    #[test]
    fn gradient_matches_differences_and_curvature_form() {
        let sq = square();
        let f = AffineFunction::new(vec![0.1, 0.2], 1.0);
        let c = ctx(&sq, &f);
        let u = guillemin_potential(&sq).perturbed(
            &Polynomial::from_terms(2, [(vec![4, 0], 0.1), (vec![1, 3], 0.02)]).unwrap(),
        );
        let basis = Polynomial::monomial_basis(2, 2, 3);
        let g = c.gradient(&u, &basis).unwrap();
        let strong = c.curvature_gradient(&u, &basis).unwrap();
        let h = 1e-5;
        for (i, e) in basis.iter().enumerate() {
            let b = Polynomial::monomial(e.clone());
            let ep = c.energy(&u.perturbed(&b.scaled(h))).unwrap().total;
            let em = c.energy(&u.perturbed(&b.scaled(-h))).unwrap().total;
            let fd = (ep - em) / (2.0 * h);
            assert!(
                (g[i] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                "{i}: {} vs {fd}",
                g[i]
            );
            assert!(
                (g[i] - strong[i]).abs() <= 1e-4 * fd.abs().max(1.0),
                "{i}: {} vs {}",
                g[i],
                strong[i]
            );
        }
    }

    #[test]
    fn convexity_along_segments() {
        let iv = interval();
        let c = ctx(&iv, &one(1));
        let u0 = guillemin_potential(&iv);
        let u2 = u0.perturbed(&Polynomial::from_terms(1, [(vec![2], 0.05)]).unwrap());
        assert!(k_energy_convexity_check(&c, &u0, &u2, 8).unwrap() >= -1e-12);
        assert_eq!(k_energy_convexity_check(&c, &u0, &u0, 4).unwrap(), 0.0);
        let aff = u0.add_affine(&AffineFunction::new(vec![2.0], 1.0));
        assert!(k_energy_convexity_check(&c, &u0, &aff, 4).unwrap().abs() < 1e-10);
    }

    #[test]
    fn minimizer_stops_immediately_at_solution() {
        let iv = interval();
        let c = ctx(&iv, &one(1));
        let r =
            minimize_k_energy(&c, &guillemin_potential(&iv), &MinimizeOptions::default()).unwrap();
        assert_eq!(r.iterations(), 0);
        assert_eq!(r.termination, Termination::ResidualConverged);
        assert!(r.final_residual() < 1e-8);
    }

    #[test]
    fn minimizer_recovers_weighted_interval_solution() {
        let iv = interval();
        let f = AffineFunction::new(vec![1.0], 1.0);
        let c = ctx(&iv, &f);
        let start = guillemin_potential(&iv)
            .perturbed(&Polynomial::from_terms(1, [(vec![3], 0.1), (vec![4], -0.1)]).unwrap());
        let r = minimize_k_energy(&c, &start, &MinimizeOptions::default()).unwrap();
        assert!(
            r.termination.converged(),
            "{:?} {:?}",
            r.termination,
            r.history.last()
        );
        assert!(r.final_residual() < 1e-5);
        assert!((r.final_futaki - std::f64::consts::LN_2).abs() < 1e-4);
        assert!(r.history.windows(2).all(|w| w[1].energy <= w[0].energy));
    }
}
