//! Weighted integration over `△` and `∂△`.
//!
//! The polytope is fanned from its vertex centroid over recursively fanned
//! facets, uniformly refined by Kuhn subdivision, and then graded: cells
//! touching `∂△` are subdivided again `grade` times so integrands with
//! `L log L` behaviour near the boundary are resolved. Every cell carries a
//! collapsed (Duffy) Gauss–Legendre rule.
//!
//! Node values are computed in parallel but always summed in node order with
//! Neumaier compensation, so results do not depend on the worker count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::{simplex_volume, AffineFunction, LabelledPolytope};

/// Rule orders and mesh controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureScheme {
    /// Polynomial exactness degree of the interior rule on each cell.
    pub interior_order: usize,
    /// Polynomial exactness degree of the facet rule.
    pub boundary_order: usize,
    /// Uniform refinement levels (each splits a `k`-simplex into `2^k`).
    pub refine: usize,
    /// Extra refinement levels applied only to cells touching the boundary.
    pub grade: usize,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        Self {
            interior_order: 6,
            boundary_order: 6,
            refine: 3,
            grade: 3,
        }
    }
}

impl QuadratureScheme {
    pub fn new(interior_order: usize, refine: usize, grade: usize) -> Self {
        Self {
            interior_order,
            boundary_order: interior_order,
            refine,
            grade,
        }
    }

    /// Deeper boundary grading for `L log L` integrands at the `1e-7` level.
    pub fn fine() -> Self {
        Self::new(8, 3, 6)
    }

    /// The default for dimension `m`; three-dimensional meshes use one uniform
    /// and two graded levels fewer, which keeps node counts near one million.
    pub fn for_dim(m: usize) -> Self {
        if m >= 3 {
            Self::new(6, 2, 1)
        } else {
            Self::default()
        }
    }
}

/// Nodes per parallel work unit in vector-valued integration.
const VEC_CHUNK: usize = 512;

/// A simplex given by its vertex coordinates in `R^m`.
pub type Simplex = Vec<Vec<f64>>;

/// Fan triangulation of a polytope and its facets.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub cells: Vec<Simplex>,
    /// Facet simplices, indexed by label.
    pub facet_cells: Vec<Vec<Simplex>>,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = CompensatedSum::default();
    values.into_iter().for_each(|v| s.add(v));
    s.value()
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = x;
                p0 = 1.0;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Rule on the reference `k`-simplex `{ξ >= 0, Σξ <= 1}` exact to degree `order`.
/// Weights sum to `1/k!`.
pub fn reference_rule(k: usize, order: usize) -> Vec<(Vec<f64>, f64)> {
    if k == 0 {
        return vec![(Vec::new(), 1.0)];
    }
    let n = ((order + k).div_ceil(2)).max(1);
    let (t, w) = gauss_legendre(n);
    let mut out = Vec::with_capacity(n.pow(k as u32));
    let mut idx = vec![0usize; k];
    loop {
        let mut xi = vec![0.0; k];
        let mut rest = 1.0;
        let mut weight = 1.0;
        for d in 0..k {
            let td = t[idx[d]];
            xi[d] = rest * td;
            weight *= w[idx[d]] * rest;
            rest *= 1.0 - td;
        }
        out.push((xi, weight));
        let mut d = 0;
        loop {
            if d == k {
                return out;
            }
            idx[d] += 1;
            if idx[d] < n {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Children of a `k`-simplex under one Kuhn (Freudenthal) subdivision, as
/// barycentric coordinates of their vertices.
fn kuhn_children(k: usize) -> Vec<Vec<Vec<f64>>> {
    if k == 0 {
        return vec![vec![vec![1.0]]];
    }
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    // Kuhn simplex 2 >= y_1 >= ... >= y_k >= 0 in doubled coordinates,
    // barycentric λ_0 = 1 - y_1/2, λ_j = (y_j - y_{j+1})/2.
    let to_bary = |y: &[f64]| {
        let mut l = vec![0.0; k + 1];
        l[0] = 1.0 - y[0] / 2.0;
        for j in 1..=k {
            let next = if j < k { y[j] } else { 0.0 };
            l[j] = (y[j - 1] - next) / 2.0;
        }
        l
    };
    let mut out = Vec::new();
    for cube in 0..(1usize << k) {
        let base: Vec<f64> = (0..k).map(|d| ((cube >> d) & 1) as f64).collect();
        for p in perms(k) {
            let mut pts = vec![base.clone()];
            let mut cur = base.clone();
            for &d in &p {
                cur[d] += 1.0;
                pts.push(cur.clone());
            }
            let c: Vec<f64> = (0..k)
                .map(|d| pts.iter().map(|q| q[d]).sum::<f64>() / (k + 1) as f64)
                .collect();
            let inside = c[0] < 2.0 && c[k - 1] > 0.0 && c.windows(2).all(|w| w[0] > w[1]);
            if inside {
                out.push(pts.iter().map(|q| to_bary(q)).collect());
            }
        }
    }
    debug_assert_eq!(out.len(), 1 << k);
    out
}

fn subdivide(cell: &Simplex, children: &[Vec<Vec<f64>>]) -> Vec<Simplex> {
    let dim = cell[0].len();
    children
        .iter()
        .map(|child| {
            child
                .iter()
                .map(|lam| {
                    let mut x = vec![0.0; dim];
                    for (l, v) in lam.iter().zip(cell) {
                        for d in 0..dim {
                            x[d] += l * v[d];
                        }
                    }
                    x
                })
                .collect()
        })
        .collect()
}

/// Fan triangulation of `p` from its vertex centroid.
pub fn triangulate(p: &LabelledPolytope) -> Result<Triangulation> {
    let cells = p.face_simplices(&[]);
    let facet_cells: Vec<Vec<Simplex>> = (0..p.labels().len())
        .map(|i| p.facet_simplices(i))
        .collect();
    let scale = p.diameter().max(1e-300);
    for c in &cells {
        let v = simplex_volume(c);
        if v <= 1e-13 * scale.powi(p.dim() as i32) {
            return Err(Error::DegenerateSimplex { volume: v });
        }
    }
    Ok(Triangulation { cells, facet_cells })
}

/// Flat node storage.
#[derive(Debug, Clone, Default)]
struct NodeSet {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl NodeSet {
    fn push_cell(&mut self, cell: &Simplex, rule: &[(Vec<f64>, f64)], scale: f64) {
        let k = cell.len() - 1;
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        let vol = simplex_volume(cell) * fact * scale;
        let dim = cell[0].len();
        for (xi, w) in rule {
            for d in 0..dim {
                let mut x = cell[0][d];
                for (j, c) in xi.iter().enumerate() {
                    x += c * (cell[j + 1][d] - cell[0][d]);
                }
                self.points.push(x);
            }
            self.weights.push(w * vol);
        }
    }

    fn len(&self) -> usize {
        self.weights.len()
    }
}

/// Precomputed nodes for one polytope and scheme.
#[derive(Debug, Clone)]
pub struct Quadrature {
    dim: usize,
    scheme: QuadratureScheme,
    eps: f64,
    cells: Vec<Simplex>,
    /// Refined facet cells as `(label, density, simplex)`.
    facet_cells: Vec<(usize, f64, Simplex)>,
    interior: NodeSet,
    boundary: NodeSet,
    interior_rule: Vec<(Vec<f64>, f64)>,
    boundary_rule: Vec<(Vec<f64>, f64)>,
}

fn refine_cells(
    mut cells: Vec<Simplex>,
    refine: usize,
    grade: usize,
    touches_boundary: impl Fn(&Simplex) -> bool,
) -> Vec<Simplex> {
    if cells.is_empty() {
        return cells;
    }
    let children = kuhn_children(cells[0].len() - 1);
    for _ in 0..refine {
        cells = cells.iter().flat_map(|c| subdivide(c, &children)).collect();
    }
    for _ in 0..grade {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                if touches_boundary(&c) {
                    subdivide(&c, &children)
                } else {
                    vec![c]
                }
            })
            .collect();
    }
    cells
}

impl Quadrature {
    pub fn new(p: &LabelledPolytope, scheme: &QuadratureScheme) -> Result<Self> {
        let tri = triangulate(p)?;
        let m = p.dim();
        let tol = 1e3 * p.eps();
        let labels = p.labels();
        let cells = refine_cells(tri.cells, scheme.refine, scheme.grade, |c| {
            c.iter().any(|v| labels.iter().any(|l| l.eval(v) <= tol))
        });
        let mut facet_cells = Vec::new();
        for (i, fc) in tri.facet_cells.into_iter().enumerate() {
            let density = 1.0 / labels[i].normal_norm();
            let refined = refine_cells(fc, scheme.refine, scheme.grade, |c| {
                c.iter().any(|v| {
                    labels
                        .iter()
                        .enumerate()
                        .any(|(j, l)| j != i && l.eval(v) <= tol)
                })
            });
            facet_cells.extend(refined.into_iter().map(|c| (i, density, c)));
        }
        let interior_rule = reference_rule(m, scheme.interior_order);
        let boundary_rule = reference_rule(m - 1, scheme.boundary_order);
        let mut interior = NodeSet::default();
        for c in &cells {
            interior.push_cell(c, &interior_rule, 1.0);
        }
        let mut boundary = NodeSet::default();
        for (_, density, c) in &facet_cells {
            boundary.push_cell(c, &boundary_rule, *density);
        }
        Ok(Self {
            dim: m,
            scheme: *scheme,
            eps: p.eps(),
            cells,
            facet_cells,
            interior,
            boundary,
            interior_rule,
            boundary_rule,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scheme(&self) -> &QuadratureScheme {
        &self.scheme
    }

    pub fn interior_node_count(&self) -> usize {
        self.interior.len()
    }

    pub fn boundary_node_count(&self) -> usize {
        self.boundary.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Interior nodes `(point, weight)` in fixed order; weights include the cell volume.
    pub fn interior_nodes(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.interior
            .points
            .chunks_exact(self.dim)
            .zip(self.interior.weights.iter().copied())
    }

    /// Boundary nodes `(point, weight)`; weights include the `dσ` density.
    pub fn boundary_nodes(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.boundary
            .points
            .chunks_exact(self.dim)
            .zip(self.boundary.weights.iter().copied())
    }

    /// `∫_△ h dμ / f^k`.
    pub fn integrate_interior<H>(&self, f: &AffineFunction, k: i32, h: H) -> Result<f64>
    where
        H: Fn(&[f64]) -> f64 + Sync,
    {
        sum_nodes(&self.interior, self.dim, |x| h(x) / f.eval(x).powi(k))
    }

    /// `∫_{∂△} h dσ / f^k`.
    pub fn integrate_boundary<H>(&self, f: &AffineFunction, k: i32, h: H) -> Result<f64>
    where
        H: Fn(&[f64]) -> f64 + Sync,
    {
        sum_nodes(&self.boundary, self.dim, |x| h(x) / f.eval(x).powi(k))
    }

    /// Vector-valued `∫_△ h dμ / f^k`, component-wise.
    pub fn integrate_interior_vec<H>(
        &self,
        f: &AffineFunction,
        k: i32,
        len: usize,
        h: H,
    ) -> Result<Vec<f64>>
    where
        H: Fn(&[f64], &mut [f64]) + Sync,
    {
        sum_nodes_vec(&self.interior, self.dim, f, k, len, h)
    }

    /// Vector-valued `∫_{∂△} h dσ / f^k`, component-wise.
    pub fn integrate_boundary_vec<H>(
        &self,
        f: &AffineFunction,
        k: i32,
        len: usize,
        h: H,
    ) -> Result<Vec<f64>>
    where
        H: Fn(&[f64], &mut [f64]) + Sync,
    {
        sum_nodes_vec(&self.boundary, self.dim, f, k, len, h)
    }

    /// `∫_{△ ∩ {g >= 0 ∀g}} h dμ / f^k` with the cells clipped exactly by the half-spaces.
    pub fn integrate_interior_clipped<H>(
        &self,
        f: &AffineFunction,
        k: i32,
        halfspaces: &[AffineFunction],
        h: H,
    ) -> Result<f64>
    where
        H: Fn(&[f64]) -> f64 + Sync,
    {
        let tol = 1e3 * self.eps;
        let parts: Vec<f64> = self
            .cells
            .par_iter()
            .map(|c| {
                let mut nodes = NodeSet::default();
                for piece in clip_simplex(c, halfspaces, tol) {
                    nodes.push_cell(&piece, &self.interior_rule, 1.0);
                }
                sum_nodes_seq(&nodes, self.dim, |x| h(x) / f.eval(x).powi(k))
            })
            .collect::<Result<_>>()?;
        Ok(compensated_sum(parts))
    }

    /// Boundary counterpart of [`Self::integrate_interior_clipped`].
    pub fn integrate_boundary_clipped<H>(
        &self,
        f: &AffineFunction,
        k: i32,
        halfspaces: &[AffineFunction],
        h: H,
    ) -> Result<f64>
    where
        H: Fn(&[f64]) -> f64 + Sync,
    {
        let tol = 1e3 * self.eps;
        let parts: Vec<f64> = self
            .facet_cells
            .par_iter()
            .map(|(_, density, c)| {
                let mut nodes = NodeSet::default();
                for piece in clip_simplex(c, halfspaces, tol) {
                    nodes.push_cell(&piece, &self.boundary_rule, *density);
                }
                sum_nodes_seq(&nodes, self.dim, |x| h(x) / f.eval(x).powi(k))
            })
            .collect::<Result<_>>()?;
        Ok(compensated_sum(parts))
    }
}

fn sum_nodes<H: Fn(&[f64]) -> f64 + Sync>(nodes: &NodeSet, dim: usize, h: H) -> Result<f64> {
    let vals: Vec<f64> = nodes
        .points
        .par_chunks_exact(dim)
        .zip(nodes.weights.par_iter())
        .map(|(x, w)| w * h(x))
        .collect();
    let mut s = CompensatedSum::default();
    for (i, v) in vals.into_iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NodeEvaluationFailure {
                point: nodes.points[i * dim..(i + 1) * dim].to_vec(),
            });
        }
        s.add(v);
    }
    Ok(s.value())
}

fn sum_nodes_seq<H: Fn(&[f64]) -> f64>(nodes: &NodeSet, dim: usize, h: H) -> Result<f64> {
    let mut s = CompensatedSum::default();
    for (x, w) in nodes.points.chunks_exact(dim).zip(&nodes.weights) {
        let v = w * h(x);
        if !v.is_finite() {
            return Err(Error::NodeEvaluationFailure { point: x.to_vec() });
        }
        s.add(v);
    }
    Ok(s.value())
}

fn sum_nodes_vec<H>(
    nodes: &NodeSet,
    dim: usize,
    f: &AffineFunction,
    k: i32,
    len: usize,
    h: H,
) -> Result<Vec<f64>>
where
    H: Fn(&[f64], &mut [f64]) + Sync,
{
    // Fixed chunks summed in order keep the result independent of the thread count.
    let partials: Vec<std::result::Result<Vec<CompensatedSum>, usize>> = nodes
        .points
        .par_chunks(dim * VEC_CHUNK)
        .zip(nodes.weights.par_chunks(VEC_CHUNK))
        .enumerate()
        .map(|(c, (pts, ws))| {
            let mut sums = vec![CompensatedSum::default(); len];
            let mut buf = vec![0.0; len];
            for (i, (x, w)) in pts.chunks_exact(dim).zip(ws).enumerate() {
                h(x, &mut buf);
                let s = w / f.eval(x).powi(k);
                for (acc, b) in sums.iter_mut().zip(&buf) {
                    let v = b * s;
                    if !v.is_finite() {
                        return Err(c * VEC_CHUNK + i);
                    }
                    acc.add(v);
                }
            }
            Ok(sums)
        })
        .collect();
    let mut sums = vec![CompensatedSum::default(); len];
    for part in partials {
        match part {
            Ok(p) => {
                for (s, v) in sums.iter_mut().zip(p) {
                    s.add(v.value());
                }
            }
            Err(i) => {
                return Err(Error::NodeEvaluationFailure {
                    point: nodes.points[i * dim..(i + 1) * dim].to_vec(),
                })
            }
        }
    }
    Ok(sums.iter().map(CompensatedSum::value).collect())
}

/// Split `cell` along the hyperplanes of `halfspaces`, keeping the pieces on
/// the nonnegative side. Works for simplices of any dimension embedded in `R^m`.
pub fn clip_simplex(cell: &Simplex, halfspaces: &[AffineFunction], tol: f64) -> Vec<Simplex> {
    let mut current = vec![cell.clone()];
    for g in halfspaces {
        let mut next = Vec::new();
        let mut stack = current;
        while let Some(s) = stack.pop() {
            let vals: Vec<f64> = s.iter().map(|v| g.eval(v)).collect();
            if vals.iter().all(|v| *v >= -tol) {
                next.push(s);
                continue;
            }
            if vals.iter().all(|v| *v <= tol) {
                continue;
            }
            let a = vals.iter().position(|v| *v > tol).expect("positive vertex");
            let b = vals
                .iter()
                .position(|v| *v < -tol)
                .expect("negative vertex");
            let t = vals[a] / (vals[a] - vals[b]);
            let cut: Vec<f64> = s[a]
                .iter()
                .zip(&s[b])
                .map(|(x, y)| x + t * (y - x))
                .collect();
            let mut left = s.clone();
            left[a] = cut.clone();
            let mut right = s;
            right[b] = cut;
            stack.push(left);
            stack.push(right);
        }
        current = next;
    }
    current
}

/// Moments feeding the extremal affine Gram system.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentData {
    /// `∫ dμ/f^{2m+1}`.
    pub interior_mass: f64,
    /// `∫ x_i dμ/f^{2m+1}`.
    pub interior_first: Vec<f64>,
    /// `∫ x_i x_j dμ/f^{2m+1}`, row-major `m × m`.
    pub interior_second: Vec<f64>,
    /// `∫ dσ/f^{2m-1}`.
    pub boundary_mass: f64,
    /// `∫ x_i dσ/f^{2m-1}`.
    pub boundary_first: Vec<f64>,
    pub scheme: QuadratureScheme,
    pub interior_nodes: usize,
    pub boundary_nodes: usize,
}

impl MomentData {
    /// `(m+1) × (m+1)` Gram matrix in the basis `{1, x_1, ..., x_m}`.
    pub fn gram(&self) -> DMatrix<f64> {
        let m = self.interior_first.len();
        DMatrix::from_fn(m + 1, m + 1, |r, c| match (r, c) {
            (0, 0) => self.interior_mass,
            (0, j) => self.interior_first[j - 1],
            (i, 0) => self.interior_first[i - 1],
            (i, j) => self.interior_second[(i - 1) * m + (j - 1)],
        })
    }

    /// Right-hand side `2 ∫ φ dσ/f^{2m-1}` for `φ ∈ {1, x_i}`.
    pub fn rhs(&self) -> DVector<f64> {
        let m = self.interior_first.len();
        DVector::from_fn(m + 1, |r, _| {
            2.0 * if r == 0 {
                self.boundary_mass
            } else {
                self.boundary_first[r - 1]
            }
        })
    }
}

/// All moments for the weight `f`, computed with one set of nodes.
pub fn weighted_moments(q: &Quadrature, f: &AffineFunction) -> Result<MomentData> {
    let m = q.dim();
    let p_int = (2 * m + 1) as i32;
    let p_bd = (2 * m - 1) as i32;
    let len = 1 + m + m * m;
    let interior = q.integrate_interior_vec(f, p_int, len, |x, out| {
        out[0] = 1.0;
        for i in 0..m {
            out[1 + i] = x[i];
            for j in 0..m {
                out[1 + m + i * m + j] = x[i] * x[j];
            }
        }
    })?;
    let boundary_mass = q.integrate_boundary(f, p_bd, |_| 1.0)?;
    let boundary_first = (0..m)
        .map(|i| q.integrate_boundary(f, p_bd, |x| x[i]))
        .collect::<Result<Vec<_>>>()?;
    let data = MomentData {
        interior_mass: interior[0],
        interior_first: interior[1..=m].to_vec(),
        interior_second: interior[1 + m..].to_vec(),
        boundary_mass,
        boundary_first,
        scheme: *q.scheme(),
        interior_nodes: q.interior_node_count(),
        boundary_nodes: q.boundary_node_count(),
    };
    if data.gram().cholesky().is_none() {
        return Err(Error::IllConditionedGram {
            condition: f64::INFINITY,
        });
    }
    Ok(data)
}

/// One-shot `∫_△ h dμ/f^k` building nodes for `scheme`.
pub fn integrate_interior<H>(
    p: &LabelledPolytope,
    f: &AffineFunction,
    k: i32,
    h: H,
    scheme: &QuadratureScheme,
) -> Result<f64>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    Quadrature::new(p, scheme)?.integrate_interior(f, k, h)
}

/// One-shot `∫_{∂△} h dσ/f^k`.
pub fn integrate_boundary<H>(
    p: &LabelledPolytope,
    f: &AffineFunction,
    k: i32,
    h: H,
    scheme: &QuadratureScheme,
) -> Result<f64>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    Quadrature::new(p, scheme)?.integrate_boundary(f, k, h)
}
