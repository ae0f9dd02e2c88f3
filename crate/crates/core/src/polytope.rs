//! Compact convex simple labelled polytopes `{x : L_i(x) >= 0}`.
//!
//! A [`LabelledPolytope`] is built from its affine labels by exhaustive
//! vertex enumeration: every `m`-subset of labels is solved as a square
//! linear system and feasible solutions are kept. Polytopes in this crate are
//! tiny (`m <= 3`, a handful of facets), so `d choose m` solves are cheap.
//!
//! Each facet `F_i = {L_i = 0}` carries the measure `dσ` characterised by
//! `dL_i ∧ dσ = -dμ`, which is Euclidean `(m-1)`-measure scaled by `1/|u_i|`
//! where `u_i = dL_i` is the inward normal.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine function `x -> <gradient, x> + constant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineFunction {
    pub gradient: Vec<f64>,
    pub constant: f64,
}

impl AffineFunction {
    pub fn new(gradient: Vec<f64>, constant: f64) -> Self {
        Self { gradient, constant }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self::new(vec![0.0; dim], value)
    }

    /// The coordinate function `x_i`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut g = vec![0.0; dim];
        g[i] = 1.0;
        Self::new(g, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.gradient
            .iter()
            .zip(x)
            .fold(self.constant, |acc, (g, xi)| acc + g * xi)
    }

    pub fn normal_norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(
            self.gradient.iter().map(|g| g * k).collect(),
            self.constant * k,
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(
            self.gradient
                .iter()
                .zip(&other.gradient)
                .map(|(a, b)| a + b)
                .collect(),
            self.constant + other.constant,
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(-1.0))
    }

    pub fn is_constant(&self) -> bool {
        self.gradient.iter().all(|g| *g == 0.0)
    }
}

/// Half-space / facet bookkeeping for one label.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub label: usize,
    pub vertices: Vec<usize>,
}

/// Compact convex simple polytope with affine labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledPolytope {
    dim: usize,
    labels: Vec<AffineFunction>,
    vertices: Vec<Vec<f64>>,
    /// Sorted label indices vanishing at each vertex.
    active: Vec<Vec<usize>>,
    facets: Vec<Facet>,
    basepoint: Vec<f64>,
    eps: f64,
}

/// Density of `dσ` on one facet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetMeasure {
    pub facet: usize,
    /// `1/|u_i|`, applied to Euclidean `(m-1)`-measure.
    pub density: f64,
    /// Total σ-measure of the facet.
    pub total: f64,
}

/// A weight that passed [`validate_weight`].
#[derive(Debug, Clone, PartialEq)]
pub struct CheckedWeight {
    pub weight: AffineFunction,
    pub min: f64,
    pub max: f64,
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Solve `L_i(x) = 0` for the labels in `idx`; `None` if the normals are dependent.
fn solve_subset(labels: &[AffineFunction], idx: &[usize], dim: usize) -> Option<Vec<f64>> {
    let a = DMatrix::from_fn(dim, dim, |r, c| labels[idx[r]].gradient[c]);
    let b = DVector::from_fn(dim, |r, _| -labels[idx[r]].constant);
    let scale: f64 = idx.iter().map(|&i| labels[i].normal_norm()).product();
    let lu = a.clone().lu();
    if lu.determinant().abs() <= 1e-12 * scale {
        return None;
    }
    lu.solve(&b).map(|x| x.iter().copied().collect())
}

/// Dimension of the affine hull of `points`.
pub(crate) fn affine_rank(points: &[&[f64]], tol: f64) -> usize {
    if points.len() < 2 {
        return 0;
    }
    let dim = points[0].len();
    let m = DMatrix::from_fn(points.len() - 1, dim, |r, c| {
        points[r + 1][c] - points[0][c]
    });
    m.svd(false, false)
        .singular_values
        .iter()
        .filter(|s| **s > tol)
        .count()
}

/// Build a labelled polytope from its labels, enumerating vertices and facets.
pub fn build_polytope(
    labels: Vec<AffineFunction>,
    basepoint: Option<Vec<f64>>,
) -> Result<LabelledPolytope> {
    let dim = labels
        .first()
        .map(AffineFunction::dim)
        .ok_or_else(|| Error::InvalidInput("no labels".into()))?;
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if let Some(i) = labels.iter().position(|l| l.dim() != dim) {
        return Err(Error::InvalidInput(format!(
            "label {i} has dimension {} != {dim}",
            labels[i].dim()
        )));
    }
    if labels.len() < dim + 1 {
        return Err(Error::InvalidInput(format!(
            "need at least {} labels in dimension {dim}, got {}",
            dim + 1,
            labels.len()
        )));
    }
    if let Some(i) = labels.iter().position(|l| {
        !(l.normal_norm() > 0.0)
            || l.gradient.iter().any(|g| !g.is_finite())
            || !l.constant.is_finite()
    }) {
        return Err(Error::InvalidInput(format!(
            "label {i} has a zero or non-finite normal"
        )));
    }

    let max_c = labels.iter().map(|l| l.constant.abs()).fold(0.0, f64::max);
    let max_u = labels
        .iter()
        .map(AffineFunction::normal_norm)
        .fold(0.0, f64::max);
    let scale = 1.0 + max_c + max_u;
    let eps = 1e-12 * scale;

    let normal_rank = {
        let rows: Vec<&[f64]> = labels.iter().map(|l| l.gradient.as_slice()).collect();
        let m = DMatrix::from_fn(rows.len(), dim, |r, c| rows[r][c]);
        m.svd(false, false)
            .singular_values
            .iter()
            .filter(|s| **s > 1e-12 * max_u)
            .count()
    };
    if normal_rank < dim {
        return Err(Error::Unbounded {
            direction: null_direction(&labels, dim),
        });
    }

    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for idx in subsets(labels.len(), dim) {
        let Some(x) = solve_subset(&labels, &idx, dim) else {
            continue;
        };
        if labels.iter().any(|l| l.eval(&x) < -eps) {
            continue;
        }
        let dup = vertices
            .iter()
            .any(|v| v.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-9 * scale));
        if !dup {
            vertices.push(x);
        }
    }

    if vertices.is_empty() {
        return Err(diagnose_empty(&labels));
    }

    let active: Vec<Vec<usize>> = vertices
        .iter()
        .map(|v| {
            (0..labels.len())
                .filter(|&i| labels[i].eval(v).abs() <= eps)
                .collect()
        })
        .collect();

    // Bounded iff every edge leaving every vertex ends at another vertex.
    for act in active.iter().filter(|a| a.len() == dim) {
        let a = DMatrix::from_fn(dim, dim, |r, c| labels[act[r]].gradient[c]);
        let inv = a.try_inverse().ok_or(Error::EmptyInterior)?;
        for k in 0..dim {
            let dir: Vec<f64> = (0..dim).map(|r| inv[(r, k)]).collect();
            let blocked = labels
                .iter()
                .enumerate()
                .filter(|(j, _)| !act.contains(j))
                .any(|(_, l)| {
                    l.gradient.iter().zip(&dir).map(|(g, d)| g * d).sum::<f64>() < -1e-12 * max_u
                });
            if !blocked {
                return Err(Error::Unbounded { direction: dir });
            }
        }
    }

    {
        let refs: Vec<&[f64]> = vertices.iter().map(Vec::as_slice).collect();
        if affine_rank(&refs, 1e-9 * scale) < dim {
            return Err(Error::EmptyInterior);
        }
    }
    for (v, act) in vertices.iter().zip(&active) {
        if act.len() != dim {
            return Err(Error::NotSimple {
                vertex: v.clone(),
                facets: act.len(),
            });
        }
    }

    let mut facets = Vec::with_capacity(labels.len());
    for i in 0..labels.len() {
        let verts: Vec<usize> = (0..vertices.len())
            .filter(|&v| active[v].contains(&i))
            .collect();
        let refs: Vec<&[f64]> = verts.iter().map(|&v| vertices[v].as_slice()).collect();
        if verts.len() < dim || affine_rank(&refs, 1e-9 * scale) + 1 < dim {
            return Err(Error::RedundantLabel {
                index: i,
                reason: "zero set does not meet the polytope in a facet".into(),
            });
        }
        facets.push(Facet {
            label: i,
            vertices: verts,
        });
    }

    let basepoint = match basepoint {
        Some(x0) => {
            if x0.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "basepoint has dimension {} != {dim}",
                    x0.len()
                )));
            }
            if labels.iter().any(|l| !(l.eval(&x0) > eps)) {
                return Err(Error::InvalidBasepoint(x0));
            }
            x0
        }
        None => centroid(vertices.iter().map(Vec::as_slice)),
    };

    Ok(LabelledPolytope {
        dim,
        labels,
        vertices,
        active,
        facets,
        basepoint,
        eps,
    })
}

fn null_direction(labels: &[AffineFunction], dim: usize) -> Vec<f64> {
    let m = DMatrix::from_fn(labels.len().max(dim), dim, |r, c| {
        labels.get(r).map_or(0.0, |l| l.gradient[c])
    });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let (imin, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc },
            );
    (0..dim).map(|c| vt[(imin, c)]).collect()
}

/// No feasible vertex: blame a label whose removal leaves a valid polytope,
/// otherwise report an empty interior.
fn diagnose_empty(labels: &[AffineFunction]) -> Error {
    if labels.len() > labels[0].dim() + 1 {
        for i in 0..labels.len() {
            let rest: Vec<AffineFunction> = labels
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, l)| l.clone())
                .collect();
            if build_polytope(rest, None).is_ok() {
                return Error::RedundantLabel {
                    index: i,
                    reason: "label is never active on the polytope cut out by the others".into(),
                };
            }
        }
    }
    Error::EmptyInterior
}

pub(crate) fn centroid<'a>(points: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for p in points {
        if sum.is_empty() {
            sum = vec![0.0; p.len()];
        }
        for (s, x) in sum.iter_mut().zip(p) {
            *s += x;
        }
        n += 1;
    }
    sum.iter_mut().for_each(|s| *s /= n as f64);
    sum
}

impl LabelledPolytope {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[AffineFunction] {
        &self.labels
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn basepoint(&self) -> &[f64] {
        &self.basepoint
    }

    /// Geometric tolerance `1e-12 * (1 + max|c_i| + max|u_i|)`.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Labels vanishing at vertex `v`.
    pub fn active_labels(&self, v: usize) -> &[usize] {
        &self.active[v]
    }

    pub fn with_basepoint(&self, x0: Vec<f64>) -> Result<Self> {
        build_polytope(self.labels.clone(), Some(x0))
    }

    /// Smallest label value at `x` (positive in the interior).
    pub fn min_label(&self, x: &[f64]) -> f64 {
        self.labels
            .iter()
            .map(|l| l.eval(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains_interior(&self, x: &[f64]) -> bool {
        self.labels.iter().all(|l| l.eval(x) > self.eps)
    }

    /// Largest distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt(),
                );
            }
        }
        d
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for v in &self.vertices {
            for k in 0..self.dim {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// True when the normals at every vertex form a `Z`-basis of the lattice.
    pub fn is_delzant(&self) -> bool {
        self.active.iter().all(|act| {
            let integral = act.iter().all(|&i| {
                self.labels[i]
                    .gradient
                    .iter()
                    .all(|g| (g - g.round()).abs() < 1e-12)
            });
            let a = DMatrix::from_fn(self.dim, self.dim, |r, c| self.labels[act[r]].gradient[c]);
            integral && (a.determinant().abs() - 1.0).abs() < 1e-9
        })
    }

    /// Fan triangulation of the face cut out by the labels in `face`
    /// (`face` empty means the whole polytope). Each simplex is listed by its
    /// vertex coordinates; the apex of every cone is the face's vertex centroid.
    /// Proper faces that are already simplices are kept whole.
    pub fn face_simplices(&self, face: &[usize]) -> Vec<Vec<Vec<f64>>> {
        let verts: Vec<usize> = (0..self.vertices.len())
            .filter(|&v| face.iter().all(|i| self.active[v].contains(i)))
            .collect();
        let face_dim = self.dim - face.len();
        if face_dim == 0 || (!face.is_empty() && verts.len() == face_dim + 1) {
            // Coordinate order keeps refinement independent of label order.
            let mut s: Vec<Vec<f64>> = verts.iter().map(|&v| self.vertices[v].clone()).collect();
            s.sort_by(|a, b| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            return vec![s];
        }
        let apex = centroid(verts.iter().map(|&v| self.vertices[v].as_slice()));
        let mut out = Vec::new();
        for j in 0..self.labels.len() {
            if face.contains(&j) {
                continue;
            }
            let mut sub: Vec<usize> = face.to_vec();
            sub.push(j);
            sub.sort_unstable();
            let sub_verts = verts
                .iter()
                .filter(|&&v| self.active[v].contains(&j))
                .count();
            // In a simple polytope a label set is a face of the expected
            // dimension exactly when enough vertices share it.
            if sub_verts < face_dim {
                continue;
            }
            for mut s in self.face_simplices(&sub) {
                s.insert(0, apex.clone());
                out.push(s);
            }
        }
        out
    }

    /// The `(m-1)`-simplices covering facet `i`.
    pub fn facet_simplices(&self, i: usize) -> Vec<Vec<Vec<f64>>> {
        self.face_simplices(&[i])
    }
}

/// `k`-dimensional volume of the simplex spanned by `verts` (`k = verts.len() - 1`).
pub fn simplex_volume(verts: &[Vec<f64>]) -> f64 {
    let k = verts.len() - 1;
    if k == 0 {
        return 1.0;
    }
    let dim = verts[0].len();
    let e = DMatrix::from_fn(dim, k, |r, c| verts[c + 1][r] - verts[0][r]);
    let gram = e.transpose() * &e;
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    gram.determinant().max(0.0).sqrt() / fact
}

/// Measure `dσ` carried by facet `i`.
pub fn facet_measure(p: &LabelledPolytope, i: usize) -> Result<FacetMeasure> {
    let label = p
        .labels
        .get(i)
        .ok_or_else(|| Error::InvalidInput(format!("facet index {i} out of range")))?;
    let density = 1.0 / label.normal_norm();
    let euclid: f64 = p.facet_simplices(i).iter().map(|s| simplex_volume(s)).sum();
    Ok(FacetMeasure {
        facet: i,
        density,
        total: euclid * density,
    })
}

/// Accept `f` iff it is positive at every vertex.
pub fn validate_weight(p: &LabelledPolytope, f: &AffineFunction) -> Result<CheckedWeight> {
    if f.dim() != p.dim {
        return Err(Error::InvalidInput(format!(
            "weight has dimension {} != {}",
            f.dim(),
            p.dim
        )));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in &p.vertices {
        let value = f.eval(v);
        if !(value > 0.0) {
            return Err(Error::NonPositiveWeight {
                vertex: v.clone(),
                value,
            });
        }
        min = min.min(value);
        max = max.max(value);
    }
    Ok(CheckedWeight {
        weight: f.clone(),
        min,
        max,
    })
}

/// Ready-made polytopes used throughout the tests and the self-test.
pub mod examples {
    use super::*;

    /// `[0, 1]` with labels `x` and `1 - x`.
    pub fn interval() -> LabelledPolytope {
        build_polytope(
            vec![
                AffineFunction::new(vec![1.0], 0.0),
                AffineFunction::new(vec![-1.0], 1.0),
            ],
            None,
        )
        .expect("interval")
    }

    /// `[-1, 1]^2` with labels `1 ± x_i`.
    pub fn square() -> LabelledPolytope {
        build_polytope(
            vec![
                AffineFunction::new(vec![1.0, 0.0], 1.0),
                AffineFunction::new(vec![-1.0, 0.0], 1.0),
                AffineFunction::new(vec![0.0, 1.0], 1.0),
                AffineFunction::new(vec![0.0, -1.0], 1.0),
            ],
            None,
        )
        .expect("square")
    }

    /// Standard simplex with labels `x_1, x_2, 1 - x_1 - x_2`.
    pub fn simplex() -> LabelledPolytope {
        build_polytope(
            vec![
                AffineFunction::new(vec![1.0, 0.0], 0.0),
                AffineFunction::new(vec![0.0, 1.0], 0.0),
                AffineFunction::new(vec![-1.0, -1.0], 1.0),
            ],
            None,
        )
        .expect("simplex")
    }

    /// `[-1, 1]^3`.
    pub fn cube() -> LabelledPolytope {
        let mut labels = Vec::new();
        for k in 0..3 {
            for s in [1.0, -1.0] {
                let mut g = vec![0.0; 3];
                g[k] = s;
                labels.push(AffineFunction::new(g, 1.0));
            }
        }
        build_polytope(labels, None).expect("cube")
    }
}
