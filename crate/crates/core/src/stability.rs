//! Extremal affine function, Donaldson–Futaki invariant and stability scans.
//!
//! With `p = 2m - 1`, the Donaldson–Futaki invariant of a convex `v` is
//!
//! ```text
//! F(v) = 2 ∫_{∂△} v dσ/f^p - ∫_△ s v dμ/f^{p+2}
//! ```
//!
//! where `s` is the weighted extremal affine function, the unique affine
//! function making `F` vanish on affines. A scan evaluates `F(v)/‖v‖_b` over
//! creases and random PL maxima; the minimum `λ̂` is an upper estimate of the
//! best uniform-stability constant.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::{AffineFunction, LabelledPolytope};
use crate::potentials::{
    make_pl, probe_grid, Normalize, PLConvexFunction, Polynomial, SymplecticPotential,
};
use crate::quadrature::{compensated_sum, weighted_moments, Quadrature, QuadratureScheme};

/// Functions that can be fed to [`futaki`] and [`boundary_norm`].
pub trait TestFunction: Sync {
    /// Value at an interior point.
    fn value(&self, x: &[f64]) -> f64;

    /// Value on `∂△` (continuous extension).
    fn boundary_value(&self, x: &[f64]) -> f64 {
        self.value(x)
    }

    /// `∫_△ factor · v dμ/f^k`.
    fn integrate_interior(
        &self,
        q: &Quadrature,
        f: &AffineFunction,
        k: i32,
        factor: &(dyn Fn(&[f64]) -> f64 + Sync),
    ) -> Result<f64> {
        q.integrate_interior(f, k, |x| factor(x) * self.value(x))
    }

    /// `∫_{∂△} v dσ/f^k`.
    fn integrate_boundary(&self, q: &Quadrature, f: &AffineFunction, k: i32) -> Result<f64> {
        q.integrate_boundary(f, k, |x| self.boundary_value(x))
    }
}

impl TestFunction for AffineFunction {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
}

impl TestFunction for Polynomial {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
}

impl TestFunction for SymplecticPotential {
    fn value(&self, x: &[f64]) -> f64 {
        SymplecticPotential::value(self, x)
    }

    fn boundary_value(&self, x: &[f64]) -> f64 {
        SymplecticPotential::boundary_value(self, x)
    }
}

impl TestFunction for PLConvexFunction {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }

    /// Exact piecewise integration: each piece over the cells clipped to the
    /// region where it attains the max.
    fn integrate_interior(
        &self,
        q: &Quadrature,
        f: &AffineFunction,
        k: i32,
        factor: &(dyn Fn(&[f64]) -> f64 + Sync),
    ) -> Result<f64> {
        let pieces = self.distinct_pieces();
        let parts = pieces
            .iter()
            .enumerate()
            .map(|(i, piece)| {
                let region = dominance_region(&pieces, i);
                q.integrate_interior_clipped(f, k, &region, |x| factor(x) * piece.eval(x))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(compensated_sum(parts))
    }

    fn integrate_boundary(&self, q: &Quadrature, f: &AffineFunction, k: i32) -> Result<f64> {
        let pieces = self.distinct_pieces();
        let parts = pieces
            .iter()
            .enumerate()
            .map(|(i, piece)| {
                let region = dominance_region(&pieces, i);
                q.integrate_boundary_clipped(f, k, &region, |x| piece.eval(x))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(compensated_sum(parts))
    }
}

/// Half-spaces `φ_i - φ_l >= 0` for `l != i`.
fn dominance_region(pieces: &[AffineFunction], i: usize) -> Vec<AffineFunction> {
    pieces
        .iter()
        .enumerate()
        .filter(|(l, _)| *l != i)
        .map(|(_, other)| pieces[i].sub(other))
        .collect()
}

/// Solution of the extremal affine Gram system.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalAffineSolution {
    /// `s = a_0 + Σ a_j x_j`.
    pub affine: AffineFunction,
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// `‖Gram·a - rhs‖`.
    pub residual: f64,
    pub condition: f64,
}

impl ExtremalAffineSolution {
    /// Coefficients `(a_0, a_1, ..., a_m)`.
    pub fn coefficients(&self) -> Vec<f64> {
        std::iter::once(self.affine.constant)
            .chain(self.affine.gradient.iter().copied())
            .collect()
    }
}

/// Largest accepted Gram condition number.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Weighted extremal affine function of `(△, L, f)`.
pub fn extremal_affine(q: &Quadrature, f: &AffineFunction) -> Result<ExtremalAffineSolution> {
    let moments = weighted_moments(q, f)?;
    let gram = moments.gram();
    let rhs = moments.rhs();
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let condition = eig.max() / eig.min();
    if !(eig.min() > 0.0) || condition > MAX_GRAM_CONDITION {
        return Err(Error::IllConditionedGram { condition });
    }
    let chol = gram
        .clone()
        .cholesky()
        .ok_or(Error::IllConditionedGram { condition })?;
    let a = chol.solve(&rhs);
    let residual = (&gram * &a - &rhs).norm();
    let affine = AffineFunction::new(a.iter().skip(1).copied().collect(), a[0]);
    Ok(ExtremalAffineSolution {
        affine,
        gram,
        rhs,
        residual,
        condition,
    })
}

/// Convenience wrapper building the quadrature for `scheme`.
pub fn extremal_affine_for(
    p: &LabelledPolytope,
    f: &AffineFunction,
    scheme: &QuadratureScheme,
) -> Result<ExtremalAffineSolution> {
    crate::polytope::validate_weight(p, f)?;
    extremal_affine(&Quadrature::new(p, scheme)?, f)
}

/// Interior and boundary parts of the Futaki invariant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FutakiParts {
    /// `∫_{∂△} v dσ/f^{2m-1}`.
    pub boundary: f64,
    /// `∫_△ s v dμ/f^{2m+1}`.
    pub interior: f64,
}

impl FutakiParts {
    pub fn value(&self) -> f64 {
        2.0 * self.boundary - self.interior
    }
}

pub fn futaki_parts<V: TestFunction + ?Sized>(
    q: &Quadrature,
    f: &AffineFunction,
    s: &AffineFunction,
    v: &V,
) -> Result<FutakiParts> {
    let m = q.dim() as i32;
    let boundary = v.integrate_boundary(q, f, 2 * m - 1)?;
    let interior = v.integrate_interior(q, f, 2 * m + 1, &|x| s.eval(x))?;
    Ok(FutakiParts { boundary, interior })
}

/// `F(v) = 2∫_{∂△} v dσ/f^{2m-1} - ∫_△ s v dμ/f^{2m+1}`.
pub fn futaki<V: TestFunction + ?Sized>(
    q: &Quadrature,
    f: &AffineFunction,
    s: &AffineFunction,
    v: &V,
) -> Result<f64> {
    futaki_parts(q, f, s, v).map(|p| p.value())
}

/// Probe resolution used to confirm `v >= 0` before taking the boundary norm.
pub const NORMALIZATION_PROBES: usize = 16;

/// `‖v‖_b = ∫_{∂△} v dσ/f^{2m-1}` for normalized `v` (`v >= 0 = v(x0)`).
pub fn boundary_norm<V: TestFunction + ?Sized>(
    p: &LabelledPolytope,
    q: &Quadrature,
    f: &AffineFunction,
    v: &V,
) -> Result<f64> {
    let at_base = v.value(p.basepoint());
    if at_base.abs() > 1e-12 {
        return Err(Error::NotNormalized(format!("v(x0) = {at_base:e}")));
    }
    let min = probe_grid(p, NORMALIZATION_PROBES)
        .iter()
        .map(|x| v.value(x))
        .fold(f64::INFINITY, f64::min);
    if min < -1e-10 {
        return Err(Error::NotNormalized(format!(
            "minimum {min:e} on probe grid"
        )));
    }
    let m = q.dim() as i32;
    v.integrate_boundary(q, f, 2 * m - 1)
}

/// `∫_△ v dμ`.
pub fn l1_norm<V: TestFunction + ?Sized>(q: &Quadrature, v: &V) -> Result<f64> {
    v.integrate_interior(q, &AffineFunction::constant(q.dim(), 1.0), 0, &|_| 1.0)
}

/// `m ∫_△ dμ/f^{2m-1}`: the Futaki invariant of any solution of the weighted Abreu equation.
pub fn solution_futaki_value(q: &Quadrature, f: &AffineFunction) -> Result<f64> {
    let m = q.dim();
    Ok(m as f64 * q.integrate_interior(f, (2 * m - 1) as i32, |_| 1.0)?)
}

/// Futaki–Mabuchi pairing on affine functions: `∫ φ̃_1 φ̃_2 dμ/f^{2m+1}` with
/// each `φ_i` centred to weighted mean zero.
pub fn futaki_mabuchi_form(
    q: &Quadrature,
    f: &AffineFunction,
    phi1: &AffineFunction,
    phi2: &AffineFunction,
) -> Result<f64> {
    let k = (2 * q.dim() + 1) as i32;
    let mass = q.integrate_interior(f, k, |_| 1.0)?;
    let mean1 = q.integrate_interior(f, k, |x| phi1.eval(x))? / mass;
    let mean2 = q.integrate_interior(f, k, |x| phi2.eval(x))? / mass;
    q.integrate_interior(f, k, |x| (phi1.eval(x) - mean1) * (phi2.eval(x) - mean2))
}

/// Which family a scan sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Crease,
    RandomMax,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Crease => "crease",
            Family::RandomMax => "random_max",
        }
    }
}

/// Scan parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Directions on the sphere grid.
    pub directions: usize,
    /// Offsets per direction (the first one places the crease through `x0`).
    pub offsets: usize,
    /// Number of random PL maxima.
    pub random_count: usize,
    /// Affine pieces per random maximum.
    pub pieces: usize,
    pub seed: u64,
}

impl ScanConfig {
    /// A config with about `total` samples for dimension `m`.
    pub fn with_total(m: usize, total: usize, seed: u64) -> Self {
        let directions = match m {
            1 => 2,
            2 => 24,
            _ => 48,
        };
        let offsets = (if m == 1 { 10 } else { 5 }).min(total / directions).max(1);
        let creases = (directions * offsets).min(total);
        Self {
            directions,
            offsets,
            random_count: total - creases,
            pieces: 3,
            seed,
        }
    }

    pub fn total(&self) -> usize {
        self.directions * self.offsets + self.random_count
    }
}

/// One evaluated scan sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSample {
    pub id: usize,
    pub family: Family,
    pub params: String,
    pub futaki: f64,
    pub bnorm: f64,
    pub ratio: f64,
    pub function: PLConvexFunction,
}

/// Result of a stability scan.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub config: ScanConfig,
    pub scheme: QuadratureScheme,
    pub extremal: AffineFunction,
    /// Samples with `‖v‖_b >= 1e-10`, in generation order.
    pub samples: Vec<ScanSample>,
    /// Samples dropped because their boundary norm vanished.
    pub skipped: usize,
    /// `min F/‖·‖_b`; an upper estimate of the stability constant.
    pub lambda_hat: Option<f64>,
    /// Index into `samples` of the minimizer.
    pub argmin: Option<usize>,
}

impl StabilityReport {
    pub fn minimizer(&self) -> Option<&ScanSample> {
        self.argmin.map(|i| &self.samples[i])
    }
}

/// Unit directions: `±1` in 1-d, an angle grid in 2-d, a Fibonacci sphere otherwise.
pub fn direction_grid(m: usize, n: usize) -> Vec<Vec<f64>> {
    match m {
        1 => (0..n)
            .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }])
            .collect(),
        2 => (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    let mut v = vec![0.0; m];
                    v[0] = r * t.cos();
                    v[1] = r * t.sin();
                    v[2] = z;
                    v
                })
                .collect()
        }
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Crease `max(0, <a, x - x0> - c)`.
pub fn crease(a: &[f64], x0: &[f64], c: f64) -> PLConvexFunction {
    let m = a.len();
    let shift: f64 = a.iter().zip(x0).map(|(ai, xi)| ai * xi).sum();
    make_pl(vec![
        AffineFunction::constant(m, 0.0),
        AffineFunction::new(a.to_vec(), -shift - c),
    ])
    .expect("two pieces")
}

fn generate_samples(
    p: &LabelledPolytope,
    config: &ScanConfig,
) -> Vec<(Family, String, PLConvexFunction)> {
    let m = p.dim();
    let x0 = p.basepoint();
    let diam = p.diameter();
    let mut out = Vec::new();
    for a in direction_grid(m, config.directions) {
        let reach = p
            .vertices()
            .iter()
            .map(|v| {
                a.iter()
                    .zip(v)
                    .zip(x0)
                    .map(|((ai, vi), xi)| ai * (vi - xi))
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        for j in 0..config.offsets {
            let c = j as f64 / config.offsets as f64 * reach;
            if j > 0 && c < 0.05 * diam {
                continue;
            }
            out.push((
                Family::Crease,
                format!("a={}|c={c}", fmt_vec(&a)),
                crease(&a, x0, c),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = p.bounding_box();
    for r in 0..config.random_count {
        let pieces: Vec<AffineFunction> = (0..config.pieces.max(1))
            .map(|_| {
                let g: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let y: Vec<f64> = (0..m).map(|d| rng.gen_range(lo[d]..=hi[d])).collect();
                let c = -g.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
                AffineFunction::new(g, c)
            })
            .collect();
        let v = make_pl(pieces).expect("nonempty").normalize(x0);
        out.push((
            Family::RandomMax,
            format!("draw={r}|pieces={}", config.pieces.max(1)),
            v,
        ));
    }
    out
}

/// Minimum boundary norm for a sample to enter the ratio list.
pub const MIN_BOUNDARY_NORM: f64 = 1e-10;

/// Evaluate `F(v)/‖v‖_b` over creases and seeded random PL maxima.
pub fn stability_scan(
    p: &LabelledPolytope,
    q: &Quadrature,
    f: &AffineFunction,
    s: &AffineFunction,
    config: &ScanConfig,
) -> Result<StabilityReport> {
    let m = q.dim() as i32;
    let candidates = generate_samples(p, config);
    let evaluated: Vec<Option<ScanSample>> = candidates
        .into_par_iter()
        .enumerate()
        .map(|(id, (family, params, v))| {
            let parts = futaki_parts(q, f, s, &v)?;
            let bnorm = v.integrate_boundary(q, f, 2 * m - 1)?;
            if bnorm < MIN_BOUNDARY_NORM {
                return Ok(None);
            }
            let futaki = parts.value();
            Ok(Some(ScanSample {
                id,
                family,
                params,
                futaki,
                bnorm,
                ratio: futaki / bnorm,
                function: v,
            }))
        })
        .collect::<Result<_>>()?;
    let skipped = evaluated.iter().filter(|e| e.is_none()).count();
    let samples: Vec<ScanSample> = evaluated.into_iter().flatten().collect();
    let argmin = samples
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.ratio.total_cmp(&b.1.ratio))
        .map(|(i, _)| i);
    Ok(StabilityReport {
        config: config.clone(),
        scheme: *q.scheme(),
        extremal: s.clone(),
        lambda_hat: argmin.map(|i| samples[i].ratio),
        argmin,
        samples,
        skipped,
    })
}
