//! Problem files.
//!
//! A problem file is TOML (or JSON, chosen by the `.json` extension) with the
//! keys `horizon`, `x0`, `maximize` (default false), `drift`, `diffusion`,
//! `running_cost`, `terminal_cost` and `constraints`. Each polynomial is a
//! list of `[i, j, coeff]` triplets meaning `coeff * x^i u^j`; duplicate
//! exponents are summed. Unknown keys are rejected.
//!
//! ```toml
//! horizon = 1.0
//! x0 = 0.0
//! drift = [[0, 1, 1.0]]          # f = u
//! diffusion = [[0, 0, 1.0]]      # g = 1
//! running_cost = [[2, 0, 1.0], [0, 2, 1.0]]
//! terminal_cost = []
//! constraints = []               # each entry is a triplet list, b_l >= 0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures;
use crate::poly::Polynomial;
use crate::relaxation::ProblemSpec;

/// Integer or float coefficient (`1` and `1.0` are both accepted).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    pub fn value(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(f) => f,
        }
    }
}

pub type Triplet = (u32, u32, Number);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub horizon: f64,
    pub x0: f64,
    #[serde(default)]
    pub maximize: bool,
    pub drift: Vec<Triplet>,
    pub diffusion: Vec<Triplet>,
    #[serde(default)]
    pub running_cost: Vec<Triplet>,
    #[serde(default)]
    pub terminal_cost: Vec<Triplet>,
    #[serde(default)]
    pub constraints: Vec<Vec<Triplet>>,
}

fn poly(triplets: &[Triplet]) -> Polynomial {
    Polynomial::from_terms(triplets.iter().map(|&(i, j, c)| (i, j, c.value())))
}

fn triplets(p: &Polynomial) -> Vec<Triplet> {
    p.terms().map(|((i, j), c)| (i, j, Number::Float(c))).collect()
}

impl ProblemFile {
    pub fn to_spec(&self) -> Result<ProblemSpec> {
        if let Some(&(_, j, _)) = self.terminal_cost.iter().find(|t| t.1 > 0) {
            return Err(Error::Validation(format!(
                "terminal_cost may only contain x powers, found u^{j}"
            )));
        }
        let spec = ProblemSpec {
            drift: poly(&self.drift),
            diffusion: poly(&self.diffusion),
            running_cost: poly(&self.running_cost),
            terminal_cost: poly(&self.terminal_cost),
            constraints: self.constraints.iter().map(|c| poly(c)).collect(),
            horizon: self.horizon,
            x0: self.x0,
            maximize: self.maximize,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_spec(spec: &ProblemSpec) -> Self {
        Self {
            horizon: spec.horizon,
            x0: spec.x0,
            maximize: spec.maximize,
            drift: triplets(&spec.drift),
            diffusion: triplets(&spec.diffusion),
            running_cost: triplets(&spec.running_cost),
            terminal_cost: triplets(&spec.terminal_cost),
            constraints: spec.constraints.iter().map(triplets).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

pub fn parse_problem_str(text: &str, format: Format) -> Result<ProblemSpec> {
    let file: ProblemFile = match format {
        Format::Toml => toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?,
        Format::Json => serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?,
    };
    file.to_spec()
}

pub fn parse_problem(path: &Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_problem_str(&text, Format::from_path(path))
        .map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
}

/// Loaded problem plus the exact bytes it came from (for digests).
#[derive(Clone, Debug)]
pub struct ProblemSource {
    /// Built-in fixture name or file path as given.
    pub name: String,
    pub text: String,
    pub format: Format,
    pub spec: ProblemSpec,
}

/// Resolves a built-in fixture name (`lqr`, `cubic`, `fisheries`) or a path.
pub fn load_problem(name_or_path: &str) -> Result<ProblemSource> {
    if let Some(text) = fixtures::source(name_or_path) {
        return Ok(ProblemSource {
            name: name_or_path.to_string(),
            text: text.to_string(),
            format: Format::Toml,
            spec: parse_problem_str(text, Format::Toml)?,
        });
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::Parse(format!(
            "'{name_or_path}' is neither a built-in problem ({}) nor an existing file",
            fixtures::NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path)?;
    let format = Format::from_path(path);
    let spec = parse_problem(path)?;
    Ok(ProblemSource {
        name: name_or_path.to_string(),
        text,
        format,
        spec,
    })
}
