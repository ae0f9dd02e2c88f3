//! Symplectic potentials, PL convex functions and the normalization `π`.
//!
//! A [`SymplecticPotential`] is `u = u_0 + P` where `u_0 = ½ Σ L_j log L_j`
//! is the Guillemin potential (optional) and `P` a polynomial. Derivatives of
//! `u_0` are closed-form, so the full jet up to fourth order, and from it the
//! inverse Hessian `H = G⁻¹` with its first two derivatives, is exact up to
//! rounding.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::{AffineFunction, LabelledPolytope};

/// One term `coeff · x^exponents`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

/// Multivariate polynomial, stored as a list of distinct monomials.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<Monomial>,
}

#[inline]
fn falling(a: u32, b: u32) -> f64 {
    (0..b).map(|i| f64::from(a - i)).product()
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn from_terms(
        dim: usize,
        terms: impl IntoIterator<Item = (Vec<u32>, f64)>,
    ) -> Result<Self> {
        let mut p = Self::zero(dim);
        for (e, c) in terms {
            if e.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "monomial exponents {e:?} do not match dimension {dim}"
                )));
            }
            p.add_term(&e, c);
        }
        Ok(p)
    }

    /// The single monomial `x^exponents`.
    pub fn monomial(exponents: Vec<u32>) -> Self {
        let dim = exponents.len();
        Self {
            dim,
            terms: vec![Monomial {
                exponents,
                coeff: 1.0,
            }],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.exponents.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn add_term(&mut self, exponents: &[u32], coeff: f64) {
        match self.terms.iter_mut().find(|t| t.exponents == exponents) {
            Some(t) => t.coeff += coeff,
            None => self.terms.push(Monomial {
                exponents: exponents.to_vec(),
                coeff,
            }),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for t in &other.terms {
            out.add_term(&t.exponents, t.coeff);
        }
        out
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| Monomial {
                    exponents: t.exponents.clone(),
                    coeff: t.coeff * k,
                })
                .collect(),
        }
    }

    pub fn add_affine(&self, a: &AffineFunction) -> Self {
        let mut out = self.clone();
        out.add_term(&vec![0; self.dim], a.constant);
        for (i, g) in a.gradient.iter().enumerate() {
            let mut e = vec![0; self.dim];
            e[i] = 1;
            out.add_term(&e, *g);
        }
        out
    }

    /// Coefficient of `x^exponents` (zero if absent).
    pub fn coeff(&self, exponents: &[u32]) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.exponents == exponents)
            .map(|t| t.coeff)
            .sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * t.exponents
                        .iter()
                        .zip(x)
                        .map(|(e, xi)| xi.powi(*e as i32))
                        .product::<f64>()
            })
            .sum()
    }

    /// Partial derivative along the coordinate indices in `idx` (any order).
    pub fn derivative(&self, x: &[f64], idx: &[usize]) -> f64 {
        let mut beta = [0u32; 8];
        for &i in idx {
            beta[i] += 1;
        }
        self.terms
            .iter()
            .map(|t| {
                let mut v = t.coeff;
                for (d, (&a, xd)) in t.exponents.iter().zip(x).enumerate() {
                    let b = beta[d];
                    if b > a {
                        return 0.0;
                    }
                    v *= falling(a, b) * xd.powi((a - b) as i32);
                }
                v
            })
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| self.derivative(x, &[i])).collect()
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let m = self.dim;
        let mut h = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let v = self.derivative(x, &[i, j]);
                h[i * m + j] = v;
                h[j * m + i] = v;
            }
        }
        h
    }

    /// All monomials `x^α` with `lo <= |α| <= hi` in graded lexicographic order.
    pub fn monomial_basis(dim: usize, lo: u32, hi: u32) -> Vec<Vec<u32>> {
        fn rec(dim: usize, total: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if cur.len() == dim - 1 {
                cur.push(total);
                out.push(cur.clone());
                cur.pop();
                return;
            }
            for a in (0..=total).rev() {
                cur.push(a);
                rec(dim, total - a, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        for deg in lo..=hi {
            rec(dim, deg, &mut Vec::new(), &mut out);
        }
        out
    }
}

/// Scalar fields with second derivatives, used as test functions and weights.
pub trait ScalarField: Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Row-major `m × m`.
    fn hessian(&self, x: &[f64]) -> Vec<f64>;
}

impl ScalarField for Polynomial {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        Polynomial::gradient(self, x)
    }
    fn hessian(&self, x: &[f64]) -> Vec<f64> {
        Polynomial::hessian(self, x)
    }
}

impl ScalarField for AffineFunction {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn gradient(&self, _: &[f64]) -> Vec<f64> {
        self.gradient.clone()
    }
    fn hessian(&self, _: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim() * self.dim()]
    }
}

/// `ψ = f^{-power}` for a positive affine `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPower {
    pub weight: AffineFunction,
    pub power: i32,
}

impl ScalarField for WeightPower {
    fn value(&self, x: &[f64]) -> f64 {
        self.weight.eval(x).powi(-self.power)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let p = f64::from(self.power);
        let s = -p * self.weight.eval(x).powi(-self.power - 1);
        self.weight.gradient.iter().map(|w| s * w).collect()
    }
    fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let p = f64::from(self.power);
        let s = p * (p + 1.0) * self.weight.eval(x).powi(-self.power - 2);
        let w = &self.weight.gradient;
        w.iter()
            .flat_map(|a| w.iter().map(move |b| s * a * b))
            .collect()
    }
}

/// Derivative data of a potential at an interior point. Tensors are flat,
/// row-major: `g3[(k*m + i)*m + j] = G_{ij,k}`, `h2[((k*m + l)*m + i)*m + j] = H_{ij,kl}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialJet {
    pub dim: usize,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub g: Vec<f64>,
    pub g3: Vec<f64>,
    pub g4: Vec<f64>,
    pub h: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

#[inline]
fn matmul(a: &[f64], b: &[f64], m: usize, out: &mut [f64]) {
    for i in 0..m {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..m {
                s += a[i * m + k] * b[k * m + j];
            }
            out[i * m + j] = s;
        }
    }
}

/// `a · b · c` for `m × m` blocks.
fn triple(a: &[f64], b: &[f64], c: &[f64], m: usize) -> Vec<f64> {
    let mut ab = vec![0.0; m * m];
    let mut out = vec![0.0; m * m];
    matmul(a, b, m, &mut ab);
    matmul(&ab, c, m, &mut out);
    out
}

impl PotentialJet {
    /// `H_{ij,k}` as an `m × m` block.
    pub fn h1_block(&self, k: usize) -> &[f64] {
        let m2 = self.dim * self.dim;
        &self.h1[k * m2..(k + 1) * m2]
    }

    pub fn g3_block(&self, k: usize) -> &[f64] {
        let m2 = self.dim * self.dim;
        &self.g3[k * m2..(k + 1) * m2]
    }

    pub fn h2_block(&self, k: usize, l: usize) -> &[f64] {
        let m2 = self.dim * self.dim;
        let o = (k * self.dim + l) * m2;
        &self.h2[o..o + m2]
    }

    pub fn g4_block(&self, k: usize, l: usize) -> &[f64] {
        let m2 = self.dim * self.dim;
        let o = (k * self.dim + l) * m2;
        &self.g4[o..o + m2]
    }

    /// `Σ_j H_{ij,j}` for each `i`.
    pub fn h_divergence(&self) -> Vec<f64> {
        let m = self.dim;
        (0..m)
            .map(|i| (0..m).map(|j| self.h1_block(j)[i * m + j]).sum())
            .collect()
    }

    /// `Σ_{ij} H_{ij,ij}`.
    pub fn h_double_divergence(&self) -> f64 {
        let m = self.dim;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += self.h2_block(i, j)[i * m + j];
            }
        }
        s
    }

    /// Condition number of `G`.
    pub fn condition(&self) -> f64 {
        let e =
            SymmetricEigen::new(DMatrix::from_row_slice(self.dim, self.dim, &self.g)).eigenvalues;
        let (lo, hi) = e.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
            (lo.min(*v), hi.max(v.abs()))
        });
        hi / lo
    }
}

/// Guillemin part plus a polynomial perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticPotential {
    labels: Vec<AffineFunction>,
    eps: f64,
    canonical: bool,
    perturbation: Polynomial,
}

/// The Guillemin potential `u_0 = ½ Σ L_j log L_j` of `p`.
pub fn guillemin_potential(p: &LabelledPolytope) -> SymplecticPotential {
    SymplecticPotential {
        labels: p.labels().to_vec(),
        eps: p.eps(),
        canonical: true,
        perturbation: Polynomial::zero(p.dim()),
    }
}

impl SymplecticPotential {
    pub fn new(p: &LabelledPolytope, canonical: bool, perturbation: Polynomial) -> Result<Self> {
        if perturbation.dim() != p.dim() {
            return Err(Error::InvalidInput(format!(
                "perturbation has dimension {} != {}",
                perturbation.dim(),
                p.dim()
            )));
        }
        Ok(Self {
            labels: p.labels().to_vec(),
            eps: p.eps(),
            canonical,
            perturbation,
        })
    }

    pub fn dim(&self) -> usize {
        self.perturbation.dim()
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    pub fn perturbation(&self) -> &Polynomial {
        &self.perturbation
    }

    pub fn with_perturbation(&self, perturbation: Polynomial) -> Self {
        Self {
            perturbation,
            ..self.clone()
        }
    }

    /// `u + P`.
    pub fn perturbed(&self, extra: &Polynomial) -> Self {
        self.with_perturbation(self.perturbation.add(extra))
    }

    pub fn add_affine(&self, a: &AffineFunction) -> Self {
        self.with_perturbation(self.perturbation.add_affine(a))
    }

    /// Value at an interior point.
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.perturbation.eval(x);
        if self.canonical {
            for l in &self.labels {
                let t = l.eval(x);
                v += 0.5 * t * t.ln();
            }
        }
        v
    }

    /// Continuous extension to `△`: `L log L` terms vanish where `L = 0`.
    pub fn boundary_value(&self, x: &[f64]) -> f64 {
        let mut v = self.perturbation.eval(x);
        if self.canonical {
            for l in &self.labels {
                let t = l.eval(x);
                if t > self.eps {
                    v += 0.5 * t * t.ln();
                }
            }
        }
        v
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.perturbation.gradient(x);
        if self.canonical {
            for l in &self.labels {
                let s = 0.5 * (l.eval(x).ln() + 1.0);
                for (gi, ui) in g.iter_mut().zip(&l.gradient) {
                    *gi += s * ui;
                }
            }
        }
        g
    }

    /// `Hess(u)` at an interior point, row-major.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let mut g = self.perturbation.hessian(x);
        if self.canonical {
            for l in &self.labels {
                let s = 0.5 / l.eval(x);
                let u = &l.gradient;
                for i in 0..m {
                    for j in 0..m {
                        g[i * m + j] += s * u[i] * u[j];
                    }
                }
            }
        }
        g
    }

    /// Hessian of the Guillemin part alone.
    pub fn canonical_hessian(&self, x: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let mut g = vec![0.0; m * m];
        for l in &self.labels {
            let s = 0.5 / l.eval(x);
            for i in 0..m {
                for j in 0..m {
                    g[i * m + j] += s * l.gradient[i] * l.gradient[j];
                }
            }
        }
        g
    }

    /// `H`, `H_{,k}` and `H_{,kl}` from label sums over `w_i = H u_i`.
    ///
    /// `H` is inverted in coordinates adapted to the smallest well-separated
    /// labels with a diagonal rescaling, so each `w_i` carries relative accuracy
    /// of order `L_i` near `∂△`; the `1/L^3` terms of `H_{,kl}` then cancel
    /// without amplifying rounding.
    fn inverse_jet(
        &self,
        x: &[f64],
        p3: &[f64],
        p4: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let m = self.dim();
        let m2 = m * m;
        let not_convex = || Error::NotConvexAt { point: x.to_vec() };
        let labels: &[AffineFunction] = if self.canonical { &self.labels } else { &[] };
        let t: Vec<f64> = labels.iter().map(|l| l.eval(x)).collect();

        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
        let mut basis: Vec<usize> = Vec::with_capacity(m);
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(m);
        // Well-separated normals first, then anything independent.
        for min_sine in [0.5, 1e-8] {
            for &i in &order {
                if basis.len() == m {
                    break;
                }
                if basis.contains(&i) {
                    continue;
                }
                let mut r = labels[i].gradient.clone();
                for q in &ortho {
                    let d: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
                    r.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
                }
                let n = r.iter().map(|a| a * a).sum::<f64>().sqrt();
                if n > min_sine * labels[i].normal_norm() {
                    ortho.push(r.into_iter().map(|a| a / n).collect());
                    basis.push(i);
                }
            }
        }
        let binv = if basis.len() == m {
            let b = DMatrix::from_fn(m, m, |r, c| labels[basis[r]].gradient[c]);
            b.try_inverse().ok_or_else(not_convex)?
        } else {
            basis.clear();
            DMatrix::identity(m, m)
        };
        let bt = binv.transpose();
        // a_i = B^{-T} u_i, exactly e_r for the adapted labels.
        let a: Vec<nalgebra::DVector<f64>> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| match basis.iter().position(|&b| b == i) {
                Some(r) => nalgebra::DVector::from_fn(m, |c, _| if c == r { 1.0 } else { 0.0 }),
                None => &bt * nalgebra::DVector::from_column_slice(&l.gradient),
            })
            .collect();
        let p2 = DMatrix::from_row_slice(m, m, &self.perturbation.hessian(x));
        let mut gy = &bt * p2 * &binv;
        for (ai, ti) in a.iter().zip(&t) {
            gy += ai * ai.transpose() * (0.5 / ti);
        }
        let scale: Vec<f64> = (0..m)
            .map(|i| gy[(i, i)].max(f64::MIN_POSITIVE).sqrt())
            .collect();
        let scaled = DMatrix::from_fn(m, m, |i, j| gy[(i, j)] / (scale[i] * scale[j]));
        let minv = scaled.cholesky().ok_or_else(not_convex)?.inverse();
        let hy = DMatrix::from_fn(m, m, |i, j| {
            0.5 * (minv[(i, j)] + minv[(j, i)]) / (scale[i] * scale[j])
        });
        let hm = &binv * &hy * &bt;
        let mut h = vec![0.0; m2];
        for i in 0..m {
            for j in 0..m {
                h[i * m + j] = 0.5 * (hm[(i, j)] + hm[(j, i)]);
            }
        }
        let z: Vec<nalgebra::DVector<f64>> = a.iter().map(|ai| &hy * ai).collect();
        let w: Vec<Vec<f64>> = z
            .iter()
            .map(|zi| (&binv * zi).as_slice().to_vec())
            .collect();
        let c = |i: usize, r: usize| a[i].dot(&z[r]);

        let mut h1 = vec![0.0; m * m2];
        for k in 0..m {
            let blk = &mut h1[k * m2..(k + 1) * m2];
            for (q, v) in triple(&h, &p3[k * m2..(k + 1) * m2], &h, m)
                .into_iter()
                .enumerate()
            {
                blk[q] = -v;
            }
            for (i, l) in labels.iter().enumerate() {
                let s = 0.5 * l.gradient[k] / (t[i] * t[i]);
                for r in 0..m {
                    for q in 0..m {
                        blk[r * m + q] += s * w[i][r] * w[i][q];
                    }
                }
            }
        }
        // y[l][i] = H_{,l} u_i
        let y: Vec<Vec<Vec<f64>>> = (0..m)
            .map(|l| {
                let hp = {
                    let mut out = vec![0.0; m2];
                    matmul(&h, &p3[l * m2..(l + 1) * m2], m, &mut out);
                    out
                };
                (0..labels.len())
                    .map(|i| {
                        let mut v: Vec<f64> = (0..m)
                            .map(|r| -(0..m).map(|q| hp[r * m + q] * w[i][q]).sum::<f64>())
                            .collect();
                        for (rr, lr) in labels.iter().enumerate() {
                            let s = 0.5 * lr.gradient[l] / (t[rr] * t[rr]) * c(rr, i);
                            v.iter_mut().zip(&w[rr]).for_each(|(a, b)| *a += s * b);
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let mut h2 = vec![0.0; m2 * m2];
        for k in 0..m {
            let hp3k = {
                let mut out = vec![0.0; m2];
                matmul(&h, &p3[k * m2..(k + 1) * m2], m, &mut out);
                out
            };
            for l in 0..m {
                // X = H G_{,k} H_{,l}
                let mut xm = vec![0.0; m2];
                matmul(&hp3k, &h1[l * m2..(l + 1) * m2], m, &mut xm);
                for (i, lab) in labels.iter().enumerate() {
                    let s = -0.5 * lab.gradient[k] / (t[i] * t[i]);
                    for r in 0..m {
                        for q in 0..m {
                            xm[r * m + q] += s * w[i][r] * y[l][i][q];
                        }
                    }
                }
                let mut quartic = triple(&h, &p4[(k * m + l) * m2..(k * m + l + 1) * m2], &h, m);
                for (i, lab) in labels.iter().enumerate() {
                    let s = lab.gradient[k] * lab.gradient[l] / (t[i] * t[i] * t[i]);
                    for r in 0..m {
                        for q in 0..m {
                            quartic[r * m + q] += s * w[i][r] * w[i][q];
                        }
                    }
                }
                let o = (k * m + l) * m2;
                for r in 0..m {
                    for q in 0..m {
                        h2[o + r * m + q] = -(xm[r * m + q] + xm[q * m + r] + quartic[r * m + q]);
                    }
                }
            }
        }
        Ok((h1, h2, h))
    }

    /// Full jet at an interior point.
    pub fn jet(&self, x: &[f64]) -> Result<PotentialJet> {
        let m = self.dim();
        let m2 = m * m;
        if self.canonical && self.labels.iter().any(|l| l.eval(x) <= self.eps) {
            return Err(Error::BoundaryEvaluation { point: x.to_vec() });
        }
        let p = &self.perturbation;
        let mut g = p.hessian(x);
        let mut g3 = vec![0.0; m * m2];
        let mut g4 = vec![0.0; m2 * m2];
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    g3[(k * m + i) * m + j] = p.derivative(x, &[k, i, j]);
                    for l in 0..m {
                        g4[((k * m + l) * m + i) * m + j] = p.derivative(x, &[k, l, i, j]);
                    }
                }
            }
        }
        let (p3, p4) = (g3.clone(), g4.clone());
        if self.canonical {
            for lab in &self.labels {
                let t = lab.eval(x);
                let u = &lab.gradient;
                let (s2, s3, s4) = (0.5 / t, -0.5 / (t * t), 1.0 / (t * t * t));
                for i in 0..m {
                    for j in 0..m {
                        let uij = u[i] * u[j];
                        g[i * m + j] += s2 * uij;
                        for k in 0..m {
                            g3[(k * m + i) * m + j] += s3 * u[k] * uij;
                            for l in 0..m {
                                g4[((k * m + l) * m + i) * m + j] += s4 * u[k] * u[l] * uij;
                            }
                        }
                    }
                }
            }
        }
        let (h1, h2, h) = self.inverse_jet(x, &p3, &p4)?;
        Ok(PotentialJet {
            dim: m,
            value: self.value(x),
            gradient: self.gradient(x),
            g,
            g3,
            g4,
            h,
            h1,
            h2,
        })
    }
}

/// Jet of `u` at `x`; see [`SymplecticPotential::jet`].
pub fn potential_jet(u: &SymplecticPotential, x: &[f64]) -> Result<PotentialJet> {
    u.jet(x)
}

/// Evaluate `u` on `∂△` with `0 log 0 = 0`.
pub fn boundary_value(u: &SymplecticPotential, x: &[f64]) -> f64 {
    u.boundary_value(x)
}

/// Probe points for convexity certificates: a Chebyshev-graded tensor grid on
/// the bounding box, restricted to the interior of `p`.
pub fn probe_grid(p: &LabelledPolytope, resolution: usize) -> Vec<Vec<f64>> {
    let m = p.dim();
    let (lo, hi) = p.bounding_box();
    let nodes: Vec<f64> = (0..resolution)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::PI * (i as f64 + 0.5) / resolution as f64).cos()))
        .collect();
    let margin = 1e-9 * (1.0 + p.diameter());
    let mut out = Vec::new();
    let mut idx = vec![0usize; m];
    loop {
        let x: Vec<f64> = (0..m)
            .map(|d| lo[d] + nodes[idx[d]] * (hi[d] - lo[d]))
            .collect();
        if p.min_label(&x) > margin {
            out.push(x);
        }
        let mut d = 0;
        loop {
            if d == m {
                return out;
            }
            idx[d] += 1;
            if idx[d] < resolution {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Evidence that `Hess(u)` is positive definite on a probe grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityCertificate {
    pub resolution: usize,
    pub probes: usize,
    /// Smallest eigenvalue of `Hess(u)` seen on the grid.
    pub min_eigenvalue: f64,
}

/// Default probe resolution per axis.
pub const PROBE_RESOLUTION: usize = 32;
/// Smallest accepted Hessian eigenvalue on the probe grid.
pub const CONVEXITY_MARGIN: f64 = 1e-8;

pub fn certify_convexity(
    u: &SymplecticPotential,
    p: &LabelledPolytope,
    resolution: usize,
) -> Result<ConvexityCertificate> {
    let m = p.dim();
    let probes = probe_grid(p, resolution);
    let mut min_eig = f64::INFINITY;
    for x in &probes {
        let g = u.hessian(x);
        let lam = SymmetricEigen::new(DMatrix::from_row_slice(m, m, &g))
            .eigenvalues
            .min();
        if !(lam > CONVEXITY_MARGIN) {
            return Err(Error::NotConvexAt { point: x.clone() });
        }
        min_eig = min_eig.min(lam);
    }
    Ok(ConvexityCertificate {
        resolution,
        probes: probes.len(),
        min_eigenvalue: min_eig,
    })
}

/// Maximum of finitely many affine pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct PLConvexFunction {
    pieces: Vec<AffineFunction>,
}

pub fn make_pl(pieces: Vec<AffineFunction>) -> Result<PLConvexFunction> {
    let dim = pieces
        .first()
        .map(AffineFunction::dim)
        .ok_or_else(|| Error::InvalidInput("PL function needs at least one piece".into()))?;
    if pieces.iter().any(|p| p.dim() != dim) {
        return Err(Error::InvalidInput(
            "PL pieces have mixed dimensions".into(),
        ));
    }
    Ok(PLConvexFunction { pieces })
}

impl PLConvexFunction {
    pub fn pieces(&self) -> &[AffineFunction] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].dim()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.eval(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices of pieces attaining the max at `x` (relative tolerance `1e-12`).
    pub fn active(&self, x: &[f64]) -> Vec<usize> {
        let vals: Vec<f64> = self.pieces.iter().map(|p| p.eval(x)).collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-12 * (1.0 + max.abs());
        (0..vals.len()).filter(|&i| vals[i] >= max - tol).collect()
    }

    /// Average gradient of the active pieces: a subgradient at `x`.
    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let act = self.active(x);
        let mut g = vec![0.0; self.dim()];
        for &i in &act {
            for (gi, pi) in g.iter_mut().zip(&self.pieces[i].gradient) {
                *gi += pi;
            }
        }
        g.iter_mut().for_each(|v| *v /= act.len() as f64);
        g
    }

    pub fn sub_affine(&self, a: &AffineFunction) -> Self {
        Self {
            pieces: self.pieces.iter().map(|p| p.sub(a)).collect(),
        }
    }

    /// Pieces with exact duplicates removed (ties on a set of positive measure
    /// would otherwise be integrated twice).
    pub(crate) fn distinct_pieces(&self) -> Vec<AffineFunction> {
        let mut out: Vec<AffineFunction> = Vec::new();
        for p in &self.pieces {
            let scale = 1.0 + p.constant.abs() + p.normal_norm();
            let dup = out.iter().any(|q| {
                (q.constant - p.constant).abs() <= 1e-14 * scale
                    && q.gradient
                        .iter()
                        .zip(&p.gradient)
                        .all(|(a, b)| (a - b).abs() <= 1e-14 * scale)
            });
            if !dup {
                out.push(p.clone());
            }
        }
        out
    }
}

/// Projection `π` onto functions with `v >= v(x_0) = 0`, modulo affines.
pub trait Normalize: Sized {
    fn normalize(&self, x0: &[f64]) -> Self;
}

impl Normalize for AffineFunction {
    fn normalize(&self, _: &[f64]) -> Self {
        AffineFunction::constant(self.dim(), 0.0)
    }
}

fn supporting_affine(value: f64, grad: Vec<f64>, x0: &[f64]) -> AffineFunction {
    let c = value - grad.iter().zip(x0).map(|(g, x)| g * x).sum::<f64>();
    AffineFunction::new(grad, c)
}

impl Normalize for PLConvexFunction {
    fn normalize(&self, x0: &[f64]) -> Self {
        self.sub_affine(&supporting_affine(self.eval(x0), self.subgradient(x0), x0))
    }
}

impl Normalize for Polynomial {
    fn normalize(&self, x0: &[f64]) -> Self {
        self.add_affine(
            &supporting_affine(self.eval(x0), Polynomial::gradient(self, x0), x0).scaled(-1.0),
        )
    }
}

impl Normalize for SymplecticPotential {
    fn normalize(&self, x0: &[f64]) -> Self {
        self.add_affine(&supporting_affine(self.value(x0), self.gradient(x0), x0).scaled(-1.0))
    }
}

/// `π(v)` with the basepoint `x0`.
pub fn normalize<T: Normalize>(v: &T, x0: &[f64]) -> T {
    v.normalize(x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::examples::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn interval_guillemin_jet() {
        let u = guillemin_potential(&interval());
        let j = u.jet(&[0.5]).unwrap();
        assert!((j.g[0] - 2.0).abs() < 1e-14);
        assert!((j.h[0] - 0.5).abs() < 1e-15);
        assert!(j.h1[0].abs() < 1e-14);
        // H = 2x(1-x): H' = 2 - 4x, H'' = -4
        for x in [0.1, 0.3, 0.77, 1e-4] {
            let j = u.jet(&[x]).unwrap();
            assert!((j.h[0] - 2.0 * x * (1.0 - x)).abs() < 1e-14);
            assert!((j.h1[0] - (2.0 - 4.0 * x)).abs() < 1e-10);
            assert!((j.h2[0] + 4.0).abs() < 1e-8, "x={x}: {}", j.h2[0]);
        }
    }

    #[test]
    fn square_and_simplex_inverse_hessians() {
        let u = guillemin_potential(&square());
        let x = [0.3, -0.6];
        let j = u.jet(&x).unwrap();
        assert!(close(&j.h, &[1.0 - 0.09, 0.0, 0.0, 1.0 - 0.36], 1e-14));

        let u = guillemin_potential(&simplex());
        let x = [1.0 / 3.0, 1.0 / 3.0];
        let j = u.jet(&x).unwrap();
        assert!(close(
            &j.h,
            &[4.0 / 9.0, -2.0 / 9.0, -2.0 / 9.0, 4.0 / 9.0],
            1e-14
        ));
        let x = [0.2, 0.5];
        let j = u.jet(&x).unwrap();
        let want = [2.0 * 0.2 * 0.8, -2.0 * 0.1, -2.0 * 0.1, 2.0 * 0.5 * 0.5];
        assert!(close(&j.h, &want, 1e-14));
    }

    #[test]
    fn h_times_g_is_identity() {
        let p = square();
        let u = guillemin_potential(&p).perturbed(
            &Polynomial::from_terms(2, [(vec![4, 0], 0.1), (vec![1, 2], 0.05)]).unwrap(),
        );
        let j = u.jet(&[0.2, 0.4]).unwrap();
        let mut prod = vec![0.0; 4];
        matmul(&j.h, &j.g, 2, &mut prod);
        assert!(close(&prod, &[1.0, 0.0, 0.0, 1.0], 1e-12));
    }

    #[test]
    fn jet_rejects_boundary_and_nonconvex() {
        let p = interval();
        let u = guillemin_potential(&p);
        assert!(matches!(
            u.jet(&[0.0]),
            Err(Error::BoundaryEvaluation { .. })
        ));
        let bad = u.perturbed(&Polynomial::from_terms(1, [(vec![2], -10.0)]).unwrap());
        assert!(matches!(bad.jet(&[0.5]), Err(Error::NotConvexAt { .. })));
        assert!(certify_convexity(&bad, &p, 32).is_err());
        assert!(certify_convexity(&u, &p, 32).is_ok());
    }

    #[test]
    fn boundary_values() {
        let u = guillemin_potential(&interval());
        assert_eq!(u.boundary_value(&[0.0]), 0.0);
        assert_eq!(u.boundary_value(&[1.0]), 0.0);
        let u = guillemin_potential(&square());
        assert!((u.boundary_value(&[1.0, 0.0]) - std::f64::consts::LN_2).abs() < 1e-15);
        let v = u.perturbed(&Polynomial::monomial(vec![2, 0]));
        assert!((v.boundary_value(&[1.0, 0.0]) - (std::f64::consts::LN_2 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn normalization_examples() {
        let a = AffineFunction::new(vec![1.0, -2.0], 3.0);
        assert_eq!(normalize(&a, &[0.0, 0.0]), AffineFunction::constant(2, 0.0));

        let x2 = Polynomial::monomial(vec![2]);
        let n = normalize(&x2, &[0.0]);
        for x in [-1.0, -0.3, 0.5, 1.0] {
            assert!((n.eval(&[x]) - x * x).abs() < 1e-15);
        }

        let tent = make_pl(vec![
            AffineFunction::new(vec![1.0], 0.0),
            AffineFunction::new(vec![-1.0], 1.0),
        ])
        .unwrap();
        let n = normalize(&tent, &[0.5]);
        for x in [0.0, 0.2, 0.5, 0.9, 1.0] {
            assert!((n.eval(&[x]) - (tent.eval(&[x]) - 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn pl_examples() {
        let crease = make_pl(vec![
            AffineFunction::constant(2, 0.0),
            AffineFunction::coordinate(2, 0),
        ])
        .unwrap();
        assert_eq!(crease.eval(&[0.5, 0.1]), 0.5);
        assert_eq!(crease.eval(&[-0.5, 0.1]), 0.0);
        let phi = AffineFunction::new(vec![0.5, 1.0], 2.0);
        let single = make_pl(vec![phi.clone()]).unwrap();
        assert_eq!(single.eval(&[0.2, 0.4]), phi.eval(&[0.2, 0.4]));
        assert!(make_pl(vec![]).is_err());
    }

    #[test]
    fn normalized_potential_vanishes_at_basepoint() {
        let p = square();
        let u = guillemin_potential(&p)
            .perturbed(&Polynomial::from_terms(2, [(vec![3, 0], 0.1)]).unwrap());
        let n = normalize(&u, p.basepoint());
        assert!(n.value(p.basepoint()).abs() < 1e-15);
        assert!(n.gradient(p.basepoint()).iter().all(|g| g.abs() < 1e-15));
        for x in probe_grid(&p, 8) {
            assert!(n.value(&x) >= -1e-14);
        }
    }

    #[test]
    fn monomial_basis_counts() {
        assert_eq!(Polynomial::monomial_basis(2, 2, 6).len(), 25);
        assert_eq!(
            Polynomial::monomial_basis(1, 0, 3),
            vec![vec![0], vec![1], vec![2], vec![3]]
        );
        assert_eq!(Polynomial::monomial_basis(3, 2, 2).len(), 6);
    }
}
