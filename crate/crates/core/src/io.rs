//! JSON spec files and CSV outputs.
//!
//! Numbers in CSV use Rust's shortest round-trip formatting, which does not
//! depend on the locale.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::MinimizeResult;
use crate::error::{Error, Result};
use crate::polytope::{build_polytope, validate_weight, AffineFunction, LabelledPolytope};
use crate::potentials::{make_pl, Monomial, PLConvexFunction, Polynomial, SymplecticPotential};
use crate::stability::StabilityReport;

/// `{"normal": [..], "offset": c}` for `x -> <normal, x> + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl From<&AffineSpec> for AffineFunction {
    fn from(s: &AffineSpec) -> Self {
        AffineFunction::new(s.normal.clone(), s.offset)
    }
}

impl From<&AffineFunction> for AffineSpec {
    fn from(a: &AffineFunction) -> Self {
        AffineSpec {
            normal: a.gradient.clone(),
            offset: a.constant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeSpec {
    pub dim: usize,
    pub labels: Vec<AffineSpec>,
    pub weight: AffineSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basepoint: Option<Vec<f64>>,
}

impl PolytopeSpec {
    /// Build and validate the polytope and its weight.
    pub fn build(&self) -> Result<(LabelledPolytope, AffineFunction)> {
        let bad = self
            .labels
            .iter()
            .map(|l| l.normal.len())
            .chain(std::iter::once(self.weight.normal.len()))
            .chain(self.basepoint.as_ref().map(Vec::len))
            .find(|&len| len != self.dim);
        if let Some(len) = bad {
            return Err(Error::InvalidInput(format!(
                "vector of length {len} in a dimension {} spec",
                self.dim
            )));
        }
        let p = build_polytope(
            self.labels.iter().map(AffineFunction::from).collect(),
            self.basepoint.clone(),
        )?;
        let f = AffineFunction::from(&self.weight);
        validate_weight(&p, &f)?;
        Ok((p, f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub canonical: bool,
    #[serde(default)]
    pub perturbation: Vec<Monomial>,
}

impl PotentialSpec {
    pub fn build(&self, p: &LabelledPolytope) -> Result<SymplecticPotential> {
        let poly = Polynomial::from_terms(
            p.dim(),
            self.perturbation
                .iter()
                .map(|t| (t.exponents.clone(), t.coeff)),
        )?;
        SymplecticPotential::new(p, self.canonical, poly)
    }

    pub fn from_potential(u: &SymplecticPotential) -> Self {
        Self {
            canonical: u.is_canonical(),
            perturbation: u.perturbation().terms().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PLSpec {
    pub pieces: Vec<AffineSpec>,
}

impl PLSpec {
    pub fn build(&self, dim: usize) -> Result<PLConvexFunction> {
        if let Some(p) = self.pieces.iter().find(|p| p.normal.len() != dim) {
            return Err(Error::InvalidInput(format!(
                "piece of dimension {} != {dim}",
                p.normal.len()
            )));
        }
        make_pl(self.pieces.iter().map(AffineFunction::from).collect())
    }
}

/// Parse a JSON spec, mapping syntax and schema errors to `InvalidInput`.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Read and parse a JSON spec file.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    parse_json(&text)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("spec types serialize")
}

pub const SCAN_HEADER: &str = "sample_id,family,params,futaki,bnorm,ratio";
pub const HISTORY_HEADER: &str = "iter,energy,residual,step";

/// Scan samples, one row each.
pub fn scan_csv(report: &StabilityReport) -> String {
    let mut out = String::from(SCAN_HEADER);
    out.push('\n');
    for s in &report.samples {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.id,
            s.family.as_str(),
            s.params,
            s.futaki,
            s.bnorm,
            s.ratio
        )
        .unwrap();
    }
    out
}

/// Iterate history of a descent run.
pub fn history_csv(result: &MinimizeResult) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in &result.history {
        writeln!(out, "{},{},{},{}", r.iter, r.energy, r.residual, r.step).unwrap();
    }
    out
}

/// Columns `x1..xm,value`.
pub fn grid_csv(dim: usize, rows: &[(Vec<f64>, f64)]) -> String {
    let mut out = (1..=dim)
        .map(|i| format!("x{i}"))
        .collect::<Vec<_>>()
        .join(",");
    out.push_str(",value\n");
    for (x, v) in rows {
        for xi in x {
            write!(out, "{xi},").unwrap();
        }
        writeln!(out, "{v}").unwrap();
    }
    out
}
