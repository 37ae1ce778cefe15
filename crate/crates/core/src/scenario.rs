//! Scenario files: TOML with a mandatory `schema_version`, unknown keys
//! rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{Side, Window};
use crate::func::{FunctionSpec, PolyMap, Polynomial};
use crate::manifold::{GammaSpec, GraphPortion, LambdaSpec, TangentCurve};
use crate::normal_form::{validate_map, MapSpec, NormalFormMap, SpectrumPair, Violation};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error in `{field}`: {constraint}")]
    Schema { field: String, constraint: String },
}

fn schema(field: impl Into<String>, constraint: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema {
        field: field.into(),
        constraint: constraint.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraSpec {
    pub spec_a: Vec<f64>,
    pub spec_b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

/// A planar contact fixture: the graph `y = curve(x)` against the graph
/// `y = target(x)` (the x-axis by default), anchored at `x = anchor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactFixtureSpec {
    pub name: String,
    pub curve: FunctionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<FunctionSpec>,
    #[serde(default)]
    pub anchor: f64,
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
    #[serde(default)]
    pub side: Side,
    /// Each entry lists the two components of a polynomial map of the plane.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diffeos: Vec<Vec<FunctionSpec>>,
}

fn default_domain() -> [f64; 2] {
    [-1.0, 1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Settings {
    /// Bound on `|α^k ∇φ|` used by the transversality scan.
    pub epsilon: f64,
    /// Target C¹ distance for the λ-lemma check.
    pub rho: f64,
    /// Radius of the excluded ball around the origin in the λ-lemma check.
    pub exclusion: f64,
    /// Outer radius of the region sampled in the λ-lemma check.
    pub region: f64,
    pub n_max: u32,
    pub k_min: u32,
    pub k_max: u32,
    /// Iteration count for the `iterate` command.
    pub iterate_k: u32,
    pub depth: u32,
    pub contact_window: [f64; 2],
    pub resonance_tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            rho: 1e-3,
            exclusion: 0.01,
            region: 0.5,
            n_max: 40,
            k_min: 1,
            k_max: 40,
            iterate_k: 3,
            depth: 6,
            contact_window: [1e-4, 1e-2],
            resonance_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<String>>,
}

/// The file as written, echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectra: Option<SpectraSpec>,
    #[serde(default)]
    pub settings: Settings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contact: Vec<ContactFixtureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<OutputSpec>,
}

#[derive(Debug, Clone)]
pub struct ContactFixture {
    pub name: String,
    pub curve: crate::func::Field,
    pub target: crate::func::Field,
    pub anchor: f64,
    pub domain: (f64, f64),
    pub side: Side,
    pub diffeos: Vec<PolyMap>,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub map: Option<NormalFormMap>,
    pub gamma: Option<TangentCurve>,
    pub lambda: Option<GraphPortion>,
    pub spectra: Option<SpectrumPair>,
    pub contact: Vec<ContactFixture>,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.file.name
    }
    pub fn settings(&self) -> &Settings {
        &self.file.settings
    }
    pub fn window(&self) -> Window {
        let [h_min, h_max] = self.file.settings.contact_window;
        Window { h_min, h_max }
    }
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// The key named in a serde message such as "unknown field `betaz`".
fn quoted_name(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let end = start + msg[start..].find('`')?;
    Some(&msg[start..end])
}

pub fn parse_scenario(src: &str) -> Result<Scenario, ScenarioError> {
    let table: toml::Table = toml::from_str(src).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(src, s.start));
        ScenarioError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    if !table.contains_key("schema_version") {
        return Err(schema("schema_version", "is required"));
    }
    let file: ScenarioFile = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().to_string();
        let field = quoted_name(&msg).unwrap_or("<root>").to_string();
        let constraint = if msg.starts_with("unknown field") {
            "unknown key".to_string()
        } else {
            msg
        };
        ScenarioError::Schema { field, constraint }
    })?;
    validate(file)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let src = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&src)
}

fn violation_field(v: &Violation) -> (String, String) {
    match v {
        Violation::NonHyperbolic { what, .. } => (what.clone(), v.to_string()),
        _ => ("map".into(), v.to_string()),
    }
}

fn validate(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(schema(
            "schema_version",
            format!("must be {SCHEMA_VERSION}, found {}", file.schema_version),
        ));
    }
    let s = &file.settings;
    for (field, value) in [
        ("settings.rho", s.rho),
        ("settings.exclusion", s.exclusion),
        ("settings.region", s.region),
        ("settings.resonance_tol", s.resonance_tol),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(schema(field, "must be positive"));
        }
    }
    if !(s.epsilon >= 0.0 && s.epsilon.is_finite()) {
        return Err(schema("settings.epsilon", "must be non-negative"));
    }
    if s.exclusion >= s.region {
        return Err(schema("settings.exclusion", "must be below settings.region"));
    }
    if s.k_min > s.k_max {
        return Err(schema("settings.k_min", "must not exceed settings.k_max"));
    }
    if s.n_max < 2 {
        return Err(schema("settings.n_max", "must be at least 2"));
    }
    if s.depth > crate::horseshoe::MAX_DEPTH {
        return Err(schema(
            "settings.depth",
            format!("must be at most {}", crate::horseshoe::MAX_DEPTH),
        ));
    }
    let [h_min, h_max] = s.contact_window;
    if !(h_min >= 1e-6 && h_max > h_min) {
        return Err(schema(
            "settings.contact_window",
            "needs 1e-6 <= h_min < h_max",
        ));
    }

    let map = match &file.map {
        Some(m) => {
            if !(m.alpha > 0.0 && m.alpha < 1.0) {
                return Err(schema("alpha", "must be in (0,1)"));
            }
            let nf = validate_map(m).map_err(|e| {
                let (field, constraint) = violation_field(&e.violations[0]);
                schema(field, constraint)
            })?;
            Some(nf)
        }
        None => None,
    };
    let p = map.as_ref().map(|m| m.p());
    let gamma = match &file.gamma {
        Some(g) => {
            if let Some(p) = p {
                if g.a_point.len() != p {
                    return Err(schema("gamma.A", format!("needs {p} coordinates")));
                }
            }
            Some(TangentCurve::from_spec(g).map_err(|e| schema("gamma", e.to_string()))?)
        }
        None => None,
    };
    let lambda = match &file.lambda {
        Some(l) => {
            if let Some(p) = p {
                if l.t_box.len() != p {
                    return Err(schema("lambda.t_box", format!("needs {p} intervals")));
                }
            }
            Some(GraphPortion::from_spec(l).map_err(|e| schema("lambda", e.to_string()))?)
        }
        None => None,
    };
    let spectra = match &file.spectra {
        Some(sp) => Some(
            SpectrumPair::new(
                sp.spec_a.clone(),
                sp.spec_b.clone(),
                sp.tol.unwrap_or(s.resonance_tol),
            )
            .map_err(|e| {
                let (_, constraint) = violation_field(&e.violations[0]);
                schema("spectra", constraint)
            })?,
        ),
        None => None,
    };
    let mut contact = Vec::new();
    for (i, c) in file.contact.iter().enumerate() {
        let field = |f: &str| format!("contact[{i}].{f}");
        let curve = c.curve.to_field(1).map_err(|e| schema(field("curve"), e.to_string()))?;
        let target = match &c.target {
            Some(t) => t.to_field(1).map_err(|e| schema(field("target"), e.to_string()))?,
            None => crate::func::Field::zero(1),
        };
        if !(c.domain[0] < c.anchor && c.anchor < c.domain[1]) {
            return Err(schema(field("anchor"), "must lie inside the domain"));
        }
        let mut diffeos = Vec::new();
        for (j, comps) in c.diffeos.iter().enumerate() {
            if comps.len() != 2 {
                return Err(schema(
                    format!("contact[{i}].diffeos[{j}]"),
                    "needs two components",
                ));
            }
            let polys = comps
                .iter()
                .map(|f| match f.to_field(2) {
                    Ok(crate::func::Field::Poly(p)) => Ok(p),
                    Ok(_) => Err("must be polynomial".to_string()),
                    Err(e) => Err(e.to_string()),
                })
                .collect::<Result<Vec<Polynomial>, _>>()
                .map_err(|e| schema(format!("contact[{i}].diffeos[{j}]"), e))?;
            diffeos.push(
                PolyMap::new(polys)
                    .map_err(|e| schema(format!("contact[{i}].diffeos[{j}]"), e.to_string()))?,
            );
        }
        contact.push(ContactFixture {
            name: c.name.clone(),
            curve,
            target,
            anchor: c.anchor,
            domain: (c.domain[0], c.domain[1]),
            side: c.side,
            diffeos,
        });
    }
    Ok(Scenario {
        file,
        map,
        gamma,
        lambda,
        spectra,
        contact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
name = "tiny"

[map]
n = 2
p = 1
betas = [2.0]
alpha = 0.5
"#;

    #[test]
    fn minimal_parses() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.map.as_ref().unwrap().betas(), &[2.0]);
        assert_eq!(s.settings().k_max, 40);
    }

    #[test]
    fn alpha_out_of_range() {
        let src = MINIMAL.replace("alpha = 0.5", "alpha = 1.5");
        assert_eq!(
            parse_scenario(&src).unwrap_err(),
            ScenarioError::Schema {
                field: "alpha".into(),
                constraint: "must be in (0,1)".into()
            }
        );
    }

    #[test]
    fn unknown_key() {
        let src = MINIMAL.replace("betas = [2.0]", "betas = [2.0]\nbetaz = 1");
        match parse_scenario(&src).unwrap_err() {
            ScenarioError::Schema { field, .. } => assert_eq!(field, "betaz"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn missing_version() {
        let src = MINIMAL.replace("schema_version = 1", "");
        assert!(matches!(
            parse_scenario(&src),
            Err(ScenarioError::Schema { field, .. }) if field == "schema_version"
        ));
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_scenario("schema_version = 1\nname = \n") {
            Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
