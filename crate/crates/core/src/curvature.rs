//! Weighted Abreu operator and the boundary identities it relies on.
//!
//! For a symplectic potential `u` with `H = Hess(u)⁻¹` and positive affine
//! weight `f` with gradient `w`, the weighted scalar curvature is
//!
//! ```text
//! s_{u,f} = -f^{2m+1} Σ_ij (H_ij / f^{2m-1})_{,ij}
//!         = -f² Σ H_ij,ij + 2p f Σ w_i H_ij,j - p(p+1) Σ H_ij w_i w_j,   p = 2m-1
//! ```
//!
//! evaluated from the analytic jet rather than by differencing.

use crate::error::{Error, Result};
use crate::polytope::{AffineFunction, LabelledPolytope};
use crate::potentials::{PotentialJet, ScalarField, SymplecticPotential};
use crate::quadrature::Quadrature;

/// Pointwise curvature data.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureSample {
    pub point: Vec<f64>,
    pub weighted: f64,
    pub unweighted: f64,
    /// Condition number of `Hess(u)` at the point.
    pub condition: f64,
}

/// `s_{u,f}` from a precomputed jet.
pub fn weighted_curvature_from_jet(jet: &PotentialJet, f: &AffineFunction, x: &[f64]) -> f64 {
    let m = jet.dim;
    let p = (2 * m - 1) as f64;
    let fv = f.eval(x);
    let w = &f.gradient;
    let div = jet.h_divergence();
    let first: f64 = w.iter().zip(&div).map(|(a, b)| a * b).sum();
    let mut quad = 0.0;
    for i in 0..m {
        for j in 0..m {
            quad += jet.h[i * m + j] * w[i] * w[j];
        }
    }
    -fv * fv * jet.h_double_divergence() + 2.0 * p * fv * first - p * (p + 1.0) * quad
}

/// `s_u = -Σ H_ij,ij`.
pub fn scalar_curvature_from_jet(jet: &PotentialJet) -> f64 {
    -jet.h_double_divergence()
}

pub fn weighted_scalar_curvature(
    u: &SymplecticPotential,
    f: &AffineFunction,
    x: &[f64],
) -> Result<f64> {
    Ok(weighted_curvature_from_jet(&u.jet(x)?, f, x))
}

pub fn curvature_sample(
    u: &SymplecticPotential,
    f: &AffineFunction,
    x: &[f64],
) -> Result<CurvatureSample> {
    let jet = u.jet(x)?;
    Ok(CurvatureSample {
        point: x.to_vec(),
        weighted: weighted_curvature_from_jet(&jet, f, x),
        unweighted: scalar_curvature_from_jet(&jet),
        condition: jet.condition(),
    })
}

/// Inward offsets at which facet limits are sampled.
pub const BOUNDARY_OFFSETS: [f64; 3] = [1e-3, 1e-4, 1e-5];

/// Quadratic extrapolation to `t = 0` through three samples.
fn extrapolate(ts: &[f64; 3], vals: &[Vec<f64>; 3]) -> Vec<f64> {
    let lag: Vec<f64> = (0..3)
        .map(|i| {
            (0..3)
                .filter(|&j| j != i)
                .map(|j| (0.0 - ts[j]) / (ts[i] - ts[j]))
                .product()
        })
        .collect();
    (0..vals[0].len())
        .map(|c| (0..3).map(|i| lag[i] * vals[i][c]).sum())
        .collect()
}

/// Worst boundary-condition residuals observed on one facet.
#[derive(Debug, Clone, PartialEq)]
pub struct FacetResidual {
    pub facet: usize,
    pub samples: usize,
    /// `max ‖H(ξ) u_j‖`.
    pub degeneracy: f64,
    /// `max ‖dH(ξ)(u_j, u_j) - 2 u_j‖`.
    pub derivative: f64,
}

impl FacetResidual {
    pub fn max(&self) -> f64 {
        self.degeneracy.max(self.derivative)
    }
}

/// Deterministic points strictly inside the facet simplices of facet `j`.
pub fn facet_sample_points(p: &LabelledPolytope, j: usize, count: usize) -> Vec<Vec<f64>> {
    let simplices = p.facet_simplices(j);
    let golden = 0.618_033_988_749_894_8;
    (0..count.max(1))
        .map(|s| {
            let simplex = &simplices[s % simplices.len()];
            let lam: Vec<f64> = (0..simplex.len())
                .map(|i| 1.0 + (((s + 1) * (i + 1)) as f64 * golden).fract())
                .collect();
            let total: f64 = lam.iter().sum();
            let mut x = vec![0.0; p.dim()];
            for (l, v) in lam.iter().zip(simplex) {
                for d in 0..x.len() {
                    x[d] += l / total * v[d];
                }
            }
            x
        })
        .collect()
}

/// Check `H(u_j, ·) = 0` and `dH(u_j, u_j) = 2u_j` on every facet by
/// extrapolating along the inward normal.
pub fn boundary_condition_residuals(
    u: &SymplecticPotential,
    p: &LabelledPolytope,
    samples_per_facet: usize,
) -> Result<Vec<FacetResidual>> {
    let m = p.dim();
    let mut out = Vec::with_capacity(p.labels().len());
    for (j, label) in p.labels().iter().enumerate() {
        let n = label.normal_norm();
        let uj = &label.gradient;
        let points = facet_sample_points(p, j, samples_per_facet);
        let mut res = FacetResidual {
            facet: j,
            samples: points.len(),
            degeneracy: 0.0,
            derivative: 0.0,
        };
        for xi in &points {
            let mut hv: [Vec<f64>; 3] = Default::default();
            let mut dv: [Vec<f64>; 3] = Default::default();
            for (slot, t) in BOUNDARY_OFFSETS.iter().enumerate() {
                let x: Vec<f64> = xi.iter().zip(uj).map(|(a, b)| a + t * b / n).collect();
                let jet = u.jet(&x)?;
                hv[slot] = (0..m)
                    .map(|a| (0..m).map(|b| jet.h[a * m + b] * uj[b]).sum())
                    .collect();
                dv[slot] = (0..m)
                    .map(|k| {
                        let blk = jet.h1_block(k);
                        let mut s = 0.0;
                        for a in 0..m {
                            for b in 0..m {
                                s += blk[a * m + b] * uj[a] * uj[b];
                            }
                        }
                        s - 2.0 * uj[k]
                    })
                    .collect();
            }
            let norm = |v: Vec<f64>| v.iter().map(|c| c * c).sum::<f64>().sqrt();
            res.degeneracy = res
                .degeneracy
                .max(norm(extrapolate(&BOUNDARY_OFFSETS, &hv)));
            res.derivative = res
                .derivative
                .max(norm(extrapolate(&BOUNDARY_OFFSETS, &dv)));
        }
        out.push(res);
    }
    Ok(out)
}

/// Tolerance below which boundary conditions count as satisfied.
pub const BOUNDARY_CONDITION_TOL: f64 = 1e-6;

/// The three terms of the integration-by-parts identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbpTerms {
    /// `∫ Σ (ψ H_ij)_{,ij} φ dμ`.
    pub divergence: f64,
    /// `∫ Σ ψ H_ij φ_{,ij} dμ`.
    pub hessian: f64,
    /// `2 ∫_{∂△} φ ψ dσ`.
    pub boundary: f64,
}

impl IbpTerms {
    pub fn residual(&self) -> f64 {
        (self.divergence - self.hessian + self.boundary).abs()
    }
}

/// Evaluate both sides of `∫ (ψH)_{,ij} φ = ∫ ψ H φ_{,ij} - 2∫_∂ φψ dσ`.
/// The boundary conditions of `u` are verified first.
pub fn integration_by_parts_terms(
    p: &LabelledPolytope,
    q: &Quadrature,
    u: &SymplecticPotential,
    phi: &dyn ScalarField,
    psi: &dyn ScalarField,
) -> Result<IbpTerms> {
    let worst = boundary_condition_residuals(u, p, 4)?
        .iter()
        .map(FacetResidual::max)
        .fold(0.0, f64::max);
    if !(worst < BOUNDARY_CONDITION_TOL) {
        return Err(Error::BoundaryConditions(format!(
            "extrapolated residual {worst:e}"
        )));
    }
    let m = p.dim();
    let one = AffineFunction::constant(m, 1.0);
    let terms = q.integrate_interior_vec(&one, 0, 2, |x, out| {
        let jet = match u.jet(x) {
            Ok(j) => j,
            Err(_) => {
                out.fill(f64::NAN);
                return;
            }
        };
        let psi_v = psi.value(x);
        let psi_g = psi.gradient(x);
        let psi_h = psi.hessian(x);
        let phi_h = phi.hessian(x);
        let div = jet.h_divergence();
        let mut dd = psi_v * jet.h_double_divergence();
        let mut hh = 0.0;
        for i in 0..m {
            dd += 2.0 * psi_g[i] * div[i];
            for j in 0..m {
                dd += psi_h[i * m + j] * jet.h[i * m + j];
                hh += jet.h[i * m + j] * phi_h[i * m + j];
            }
        }
        out[0] = dd * phi.value(x);
        out[1] = psi_v * hh;
    })?;
    let boundary = 2.0 * q.integrate_boundary(&one, 0, |x| phi.value(x) * psi.value(x))?;
    Ok(IbpTerms {
        divergence: terms[0],
        hessian: terms[1],
        boundary,
    })
}

/// `|∫ Σ(ψH)_{,ij} φ dμ − ∫ Σ ψH_ij φ_{,ij} dμ + 2∫_{∂△} φψ dσ|`.
pub fn integration_by_parts_residual(
    p: &LabelledPolytope,
    q: &Quadrature,
    u: &SymplecticPotential,
    phi: &dyn ScalarField,
    psi: &dyn ScalarField,
) -> Result<f64> {
    integration_by_parts_terms(p, q, u, phi, psi).map(|t| t.residual())
}

/// `(∫ (s_{u,f} - target)² dμ/f^{2m+1})^{1/2}` over the interior nodes of `q`.
pub fn abreu_residual_norm(
    q: &Quadrature,
    u: &SymplecticPotential,
    f: &AffineFunction,
    target: &AffineFunction,
) -> Result<f64> {
    let k = (2 * q.dim() + 1) as i32;
    let sq = q.integrate_interior(f, k, |x| match u.jet(x) {
        Ok(jet) => {
            let d = weighted_curvature_from_jet(&jet, f, x) - target.eval(x);
            d * d
        }
        Err(_) => f64::NAN,
    })?;
    Ok(sq.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::examples::*;
    use crate::potentials::{guillemin_potential, probe_grid, Polynomial, WeightPower};
    use crate::quadrature::QuadratureScheme;

    fn one(m: usize) -> AffineFunction {
        AffineFunction::constant(m, 1.0)
    }

    #[test]
    fn guillemin_curvatures() {
        let f1 = AffineFunction::new(vec![1.0], 1.0);
        let u = guillemin_potential(&interval());
        for x in [0.01, 0.25, 0.5, 0.9, 0.999] {
            assert!((weighted_scalar_curvature(&u, &one(1), &[x]).unwrap() - 4.0).abs() < 1e-9);
            assert!((weighted_scalar_curvature(&u, &f1, &[x]).unwrap() - 8.0).abs() < 1e-9);
        }
        let s = simplex();
        let u = guillemin_potential(&s);
        for x in probe_grid(&s, 6) {
            let c = curvature_sample(&u, &one(2), &x).unwrap();
            assert!((c.weighted - 12.0).abs() < 1e-9, "{x:?}: {}", c.weighted);
            assert_eq!(c.weighted, c.unweighted);
        }
        let sq = square();
        let u = guillemin_potential(&sq);
        for x in probe_grid(&sq, 6) {
            assert!((weighted_scalar_curvature(&u, &one(2), &x).unwrap() - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn weighted_matches_divergence_form_by_differences() {
        // -f^{2m+1} Σ ∂_i∂_j (H_ij / f^{2m-1}) by central differences of H.
        let p = square();
        let u = guillemin_potential(&p).perturbed(
            &Polynomial::from_terms(2, [(vec![4, 0], 0.1), (vec![2, 2], 0.05)]).unwrap(),
        );
        let f = AffineFunction::new(vec![0.2, -0.3], 1.0);
        let h = 1e-4;
        let field = |x: &[f64], i: usize, j: usize| -> f64 {
            u.jet(x).unwrap().h[i * 2 + j] / f.eval(x).powi(3)
        };
        for x in [[0.1, 0.2], [-0.5, 0.3], [0.6, -0.6]] {
            let mut dd = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let shift = |di: f64, dj: f64| {
                        let mut y = x.to_vec();
                        y[i] += di;
                        y[j] += dj;
                        field(&y, i, j)
                    };
                    dd += if i == j {
                        (shift(h, 0.0) - 2.0 * field(&x, i, j) + shift(-h, 0.0)) / (h * h)
                    } else {
                        (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4.0 * h * h)
                    };
                }
            }
            let fd = -f.eval(&x).powi(5) * dd;
            let exact = weighted_scalar_curvature(&u, &f, &x).unwrap();
            assert!(
                (fd - exact).abs() <= 1e-5 * exact.abs().max(1.0),
                "{fd} vs {exact}"
            );
        }
    }

    #[test]
    fn boundary_conditions_hold_for_guillemin_and_perturbations() {
        for p in [interval(), square(), simplex()] {
            let u = guillemin_potential(&p);
            for r in boundary_condition_residuals(&u, &p, 5).unwrap() {
                assert!(r.max() < 1e-6, "{r:?}");
            }
        }
        let sq = square();
        let u = guillemin_potential(&sq).perturbed(&Polynomial::monomial(vec![2, 0]));
        for r in boundary_condition_residuals(&u, &sq, 5).unwrap() {
            assert!(r.max() < 1e-6, "{r:?}");
        }
        // without the Guillemin part the conditions fail
        let bare = SymplecticPotential::new(
            &sq,
            false,
            Polynomial::from_terms(2, [(vec![2, 0], 1.0), (vec![0, 2], 1.0)]).unwrap(),
        )
        .unwrap();
        let worst = boundary_condition_residuals(&bare, &sq, 2)
            .unwrap()
            .iter()
            .map(FacetResidual::max)
            .fold(0.0, f64::max);
        assert!(worst > 0.1);
    }

    #[test]
    fn interval_integration_by_parts() {
        let p = interval();
        let q = Quadrature::new(&p, &QuadratureScheme::default()).unwrap();
        let u = guillemin_potential(&p);
        let phi = Polynomial::monomial(vec![2]);
        let t = integration_by_parts_terms(&p, &q, &u, &phi, &one(1)).unwrap();
        assert!((t.hessian - 2.0 / 3.0).abs() < 1e-12);
        assert!((t.divergence - (2.0 / 3.0 - 2.0)).abs() < 1e-10);
        assert!(t.residual() < 1e-8);
    }

    #[test]
    fn simplex_integration_by_parts() {
        let p = simplex();
        let q = Quadrature::new(&p, &QuadratureScheme::default()).unwrap();
        let u = guillemin_potential(&p);
        let psi = WeightPower {
            weight: one(2),
            power: 3,
        };
        let phi = Polynomial::monomial(vec![1, 1]);
        assert!(integration_by_parts_residual(&p, &q, &u, &phi, &psi).unwrap() < 1e-7);
        let bare = SymplecticPotential::new(
            &p,
            false,
            Polynomial::from_terms(2, [(vec![2, 0], 1.0), (vec![0, 2], 1.0)]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            integration_by_parts_residual(&p, &q, &bare, &phi, &psi),
            Err(Error::BoundaryConditions(_))
        ));
    }

    #[test]
    fn abreu_residuals() {
        let p = interval();
        let q = Quadrature::new(&p, &QuadratureScheme::default()).unwrap();
        let u = guillemin_potential(&p);
        assert!(
            abreu_residual_norm(&q, &u, &one(1), &AffineFunction::constant(1, 4.0)).unwrap() < 1e-9
        );
        let f = AffineFunction::new(vec![1.0], 1.0);
        assert!(abreu_residual_norm(&q, &u, &f, &AffineFunction::constant(1, 8.0)).unwrap() < 1e-9);
        let sq = square();
        let q = Quadrature::new(&sq, &QuadratureScheme::default()).unwrap();
        let v = guillemin_potential(&sq)
            .perturbed(&Polynomial::from_terms(2, [(vec![4, 0], 0.1)]).unwrap());
        assert!(
            abreu_residual_norm(&q, &v, &one(2), &AffineFunction::constant(2, 4.0)).unwrap() > 1e-3
        );
    }
}
