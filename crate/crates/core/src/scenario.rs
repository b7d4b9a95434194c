//! Scenario files: named membranes, forms and maps, a computation, and a list
//! of checks. Rationals are written as strings `"p/q"`, complex numbers as
//! `[re, im]`, and polynomials as lists of `[exponents, re]` or
//! `[exponents, re, im]` terms.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::combinatorics::{ObserverPermutations, Permutation};
use crate::error::{Error, Result};
use crate::exact::{format_rational, parse_rational, ExactScalar, Rational};
use crate::forms::{CoefficientFunction, DifferentialForm, Field};
use crate::integrate::{iterated_integral, Engine, EngineConfig, IntegralResult};
use crate::membranes::{catalog, compose, push_forward, reparametrize, Grid, Membrane, Reparametrization};
use crate::poly::{Poly, PolyMap};
use crate::verify::{self, CheckContext, CheckReport, HomotopyFamily, Verdict};

/// A rational written as a string or an integer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Integer(i64),
    Text(String),
}

impl Number {
    pub fn to_rational(&self, path: &str) -> Result<Rational> {
        match self {
            Number::Integer(i) => Ok(Rational::from_integer((*i).into())),
            Number::Text(t) => parse_rational(t).map_err(|e| Error::validation(path, e.to_string())),
        }
    }
}

impl From<&Rational> for Number {
    fn from(r: &Rational) -> Self {
        Number::Text(format_rational(r))
    }
}

/// A real number, or a complex number as `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarSpec {
    Complex([Number; 2]),
    Real(Number),
}

impl ScalarSpec {
    pub fn to_exact(&self, path: &str) -> Result<ExactScalar> {
        match self {
            ScalarSpec::Real(r) => Ok(ExactScalar::real(r.to_rational(path)?)),
            ScalarSpec::Complex([re, im]) => Ok(ExactScalar::new(
                re.to_rational(&format!("{path}[0]"))?,
                im.to_rational(&format!("{path}[1]"))?,
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TermSpec {
    Complex(Vec<u32>, Number, Number),
    Real(Vec<u32>, Number),
}

pub type PolySpec = Vec<TermSpec>;

fn build_poly(spec: &PolySpec, nvars: usize, path: &str) -> Result<Poly> {
    let mut p = Poly::zero(nvars);
    for (k, term) in spec.iter().enumerate() {
        let tp = format!("{path}[{k}]");
        let (e, c) = match term {
            TermSpec::Real(e, re) => (e, ExactScalar::real(re.to_rational(&tp)?)),
            TermSpec::Complex(e, re, im) => (e, ExactScalar::new(re.to_rational(&tp)?, im.to_rational(&tp)?)),
        };
        if e.len() != nvars {
            return Err(Error::validation(
                tp,
                format!("exponent vector has {} entries, expected {nvars}", e.len()),
            ));
        }
        p.add_term(e.clone(), c);
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MembraneSpec {
    Constant {
        point: Vec<ScalarSpec>,
    },
    Identity {},
    Polynomial {
        components: Vec<PolySpec>,
    },
    Piecewise {
        breaks: Vec<Vec<Number>>,
        cells: Vec<Vec<PolySpec>>,
    },
    /// `x₀ + ∏_ν t_ν²(1 − t_ν)² · P(t)`.
    Bump {
        base: Vec<ScalarSpec>,
        profile: Vec<PolySpec>,
    },
    ProductOfPaths {
        paths: Vec<PolySpec>,
    },
    Torus {
        base: Vec<f64>,
        radius: f64,
    },
    /// Left-to-right product of closed membranes.
    Compose {
        of: Vec<String>,
    },
    Reparametrized {
        membrane: String,
        map: String,
    },
    Pushforward {
        membrane: String,
        map: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormTermSpec {
    pub index: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<PolySpec>,
    /// `|x_k|²` with 1-based `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_sq: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    /// Ambient dimension; defaults to the scenario's `d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub degree: usize,
    pub terms: Vec<FormTermSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub source_dim: usize,
    pub components: Vec<PolySpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    /// One polynomial in `(t, u)` per observer.
    pub paths: Vec<PolySpec>,
}

/// Explicit permutation arrays, or `"all"` for a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoSpec {
    Explicit(Vec<Vec<usize>>),
    Keyword(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeSpec {
    pub membrane: String,
    pub forms: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<Vec<usize>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum CheckKind {
    Reparametrization {
        membrane: String,
        map: String,
        forms: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<RhoSpec>,
    },
    Naturality {
        map: String,
        membrane: String,
        forms: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<RhoSpec>,
    },
    Shuffle {
        membrane: String,
        forms_a: Vec<String>,
        forms_b: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<RhoSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho_prime: Option<RhoSpec>,
    },
    Composition {
        membranes: Vec<String>,
        forms: Vec<String>,
    },
    Vanishing {
        alphas: Vec<String>,
        forms: Vec<String>,
    },
    ClassicalReduction {
        membrane: String,
        forms: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<RhoSpec>,
    },
    Homotopy {
        family: String,
        forms: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<RhoSpec>,
        u_samples: Vec<Number>,
    },
    /// Quadrature and Monte-Carlo against the exact engine.
    CrossEngine {
        membrane: String,
        forms: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<RhoSpec>,
    },
}

impl CheckKind {
    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::Reparametrization { .. } => "reparametrization",
            CheckKind::Naturality { .. } => "naturality",
            CheckKind::Shuffle { .. } => "shuffle",
            CheckKind::Composition { .. } => "composition",
            CheckKind::Vanishing { .. } => "vanishing",
            CheckKind::ClassicalReduction { .. } => "classical_reduction",
            CheckKind::Homotopy { .. } => "homotopy",
            CheckKind::CrossEngine { .. } => "cross_engine",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSpec {
    #[serde(flatten)]
    pub kind: CheckKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_order: Option<usize>,
    /// `"fail"` marks a negative control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Verdict>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inject_sign_flip: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default)]
    pub field: Field,
    pub n: usize,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub membranes: BTreeMap<String, MembraneSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub forms: BTreeMap<String, FormSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub maps: BTreeMap<String, MapSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub families: BTreeMap<String, FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compute: Option<ComputeSpec>,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckSpec>,
}

/// A named list of scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub suite: String,
    pub scenarios: Vec<Scenario>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

impl Suite {
    /// Accepts either a suite document or a single scenario, which becomes a one-element suite.
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if value.get("scenarios").is_some() {
            serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))
        } else {
            let s: Scenario = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
            Ok(Suite {
                suite: s.id.clone(),
                scenarios: vec![s],
            })
        }
    }
}

/// Command-line overrides applied on top of a scenario's own settings.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub engine: Option<Engine>,
    pub seed: Option<u64>,
    pub mc_samples: Option<usize>,
    pub quad_order: Option<usize>,
    pub tolerance: Option<f64>,
    pub inject_sign_flip: bool,
}

impl RunOptions {
    fn apply(&self, mut cfg: EngineConfig) -> EngineConfig {
        if let Some(e) = self.engine {
            cfg.engine = e;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.mc_samples {
            cfg.mc_samples = n;
        }
        if let Some(q) = self.quad_order {
            cfg.quad_order = q;
        }
        cfg
    }
}

/// A validated scenario with its leaf objects built.
pub struct Prepared<'a> {
    scenario: &'a Scenario,
    forms: HashMap<String, DifferentialForm>,
    maps: HashMap<String, PolyMap>,
    families: HashMap<String, HomotopyFamily>,
    membranes: Mutex<HashMap<String, Membrane>>,
}

fn rho_from_images(images: &[Vec<usize>], n: usize, s: usize, path: &str) -> Result<ObserverPermutations> {
    if images.len() != n {
        return Err(Error::validation(
            path,
            format!("expected {n} permutations, got {}", images.len()),
        ));
    }
    let perms = images
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let item = format!("{path}[{k}]");
            if p.len() != s {
                return Err(Error::validation(
                    &item,
                    format!("expected a permutation of {s} letters, got {p:?}"),
                ));
            }
            Permutation::new(p.clone()).map_err(|e| Error::validation(&item, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    ObserverPermutations::new(perms).map_err(|e| Error::validation(path, e.to_string()))
}

fn expand_rho(spec: &Option<RhoSpec>, n: usize, s: usize, path: &str) -> Result<Vec<ObserverPermutations>> {
    match spec {
        None => Ok(vec![ObserverPermutations::identity(n, s)]),
        Some(RhoSpec::Explicit(images)) => Ok(vec![rho_from_images(images, n, s, path)?]),
        Some(RhoSpec::Keyword(k)) if k == "all" => Ok(ObserverPermutations::all(n, s)),
        Some(RhoSpec::Keyword(k)) => Err(Error::validation(
            path,
            format!("unknown keyword `{k}`, expected \"all\""),
        )),
    }
}

impl<'a> Prepared<'a> {
    /// Checks references, dimensions and permutation arrays, and builds forms,
    /// maps, families and every membrane that does not depend on another.
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        let sc = scenario;
        if sc.n == 0 {
            return Err(Error::validation("n", "membrane dimension must be at least 1"));
        }
        let mut forms = HashMap::new();
        for (name, f) in &sc.forms {
            let path = format!("forms.{name}");
            let dim = f.dim.unwrap_or(sc.d);
            let mut w =
                DifferentialForm::zero(dim, f.degree, sc.field).map_err(|e| Error::validation(&path, e.to_string()))?;
            for (k, t) in f.terms.iter().enumerate() {
                let tp = format!("{path}.terms[{k}]");
                let coeff = match (&t.poly, t.abs_sq) {
                    (Some(p), None) => CoefficientFunction::Polynomial(build_poly(p, dim, &format!("{tp}.poly"))?),
                    (None, Some(k)) if (1..=dim).contains(&k) => CoefficientFunction::abs_sq(dim, k - 1),
                    (None, Some(k)) => {
                        return Err(Error::validation(&tp, format!("abs_sq variable {k} outside 1..={dim}")))
                    }
                    _ => return Err(Error::validation(&tp, "give exactly one of `poly` and `abs_sq`")),
                };
                w.add_term(t.index.clone(), coeff)
                    .map_err(|e| Error::validation(&tp, e.to_string()))?;
            }
            forms.insert(name.clone(), w);
        }
        let mut maps = HashMap::new();
        for (name, m) in &sc.maps {
            let path = format!("maps.{name}");
            let comps = m
                .components
                .iter()
                .enumerate()
                .map(|(k, p)| build_poly(p, m.source_dim, &format!("{path}.components[{k}]")))
                .collect::<Result<Vec<_>>>()?;
            maps.insert(name.clone(), PolyMap::new(m.source_dim, comps));
        }
        let mut families = HashMap::new();
        for (name, f) in &sc.families {
            let path = format!("families.{name}");
            let paths = f
                .paths
                .iter()
                .enumerate()
                .map(|(k, p)| build_poly(p, 2, &format!("{path}.paths[{k}]")))
                .collect::<Result<Vec<_>>>()?;
            let fam = HomotopyFamily::new(paths).map_err(|e| Error::validation(&path, e.to_string()))?;
            families.insert(name.clone(), fam);
        }
        let prepared = Prepared {
            scenario,
            forms,
            maps,
            families,
            membranes: Mutex::new(HashMap::new()),
        };
        for (name, spec) in &sc.membranes {
            let path = format!("membranes.{name}");
            match spec {
                MembraneSpec::Compose { of } => {
                    for (k, m) in of.iter().enumerate() {
                        prepared.require_membrane(m, &format!("{path}.of[{k}]"))?;
                    }
                    if of.is_empty() {
                        return Err(Error::validation(format!("{path}.of"), "need at least one membrane"));
                    }
                }
                MembraneSpec::Reparametrized { membrane, map } | MembraneSpec::Pushforward { membrane, map } => {
                    prepared.require_membrane(membrane, &format!("{path}.membrane"))?;
                    prepared.require_map(map, &format!("{path}.map"))?;
                }
                leaf => {
                    let g = prepared.build_leaf(leaf, &path)?;
                    prepared
                        .membranes
                        .lock()
                        .expect("membrane cache")
                        .insert(name.clone(), g);
                }
            }
        }
        if let Some(c) = &sc.compute {
            prepared.require_membrane(&c.membrane, "compute.membrane")?;
            for (k, f) in c.forms.iter().enumerate() {
                prepared.require_form(f, &format!("compute.forms[{k}]"))?;
            }
            if let Some(s) = sc.s {
                if s != c.forms.len() {
                    return Err(Error::validation(
                        "s",
                        format!("s = {s} but compute lists {} forms", c.forms.len()),
                    ));
                }
            }
            if let Some(images) = &c.rho {
                rho_from_images(images, sc.n, c.forms.len(), "rho")?;
            }
        }
        for (i, check) in sc.checks.iter().enumerate() {
            prepared.validate_check(&check.kind, &format!("checks[{i}]"))?;
        }
        Ok(prepared)
    }

    fn require_membrane(&self, name: &str, path: &str) -> Result<()> {
        if self.scenario.membranes.contains_key(name) {
            Ok(())
        } else {
            Err(Error::validation(path, format!("unknown membrane `{name}`")))
        }
    }

    fn require_form(&self, name: &str, path: &str) -> Result<()> {
        if self.forms.contains_key(name) {
            Ok(())
        } else {
            Err(Error::validation(path, format!("unknown form `{name}`")))
        }
    }

    fn require_forms(&self, names: &[String], path: &str) -> Result<()> {
        for (k, f) in names.iter().enumerate() {
            self.require_form(f, &format!("{path}[{k}]"))?;
        }
        Ok(())
    }

    fn require_map(&self, name: &str, path: &str) -> Result<()> {
        if self.maps.contains_key(name) {
            Ok(())
        } else {
            Err(Error::validation(path, format!("unknown map `{name}`")))
        }
    }

    fn validate_check(&self, kind: &CheckKind, path: &str) -> Result<()> {
        let n = self.scenario.n;
        let rho_check = |rho: &Option<RhoSpec>, s: usize, p: &str| expand_rho(rho, n, s, p).map(|_| ());
        match kind {
            CheckKind::Reparametrization {
                membrane,
                map,
                forms,
                rho,
            } => {
                self.require_membrane(membrane, &format!("{path}.membrane"))?;
                self.require_map(map, &format!("{path}.map"))?;
                self.require_forms(forms, &format!("{path}.forms"))?;
                rho_check(rho, forms.len(), &format!("{path}.rho"))
            }
            CheckKind::Naturality {
                map,
                membrane,
                forms,
                rho,
            } => {
                self.require_membrane(membrane, &format!("{path}.membrane"))?;
                self.require_map(map, &format!("{path}.map"))?;
                self.require_forms(forms, &format!("{path}.forms"))?;
                rho_check(rho, forms.len(), &format!("{path}.rho"))
            }
            CheckKind::Shuffle {
                membrane,
                forms_a,
                forms_b,
                rho,
                rho_prime,
            } => {
                self.require_membrane(membrane, &format!("{path}.membrane"))?;
                self.require_forms(forms_a, &format!("{path}.forms_a"))?;
                self.require_forms(forms_b, &format!("{path}.forms_b"))?;
                rho_check(rho, forms_a.len(), &format!("{path}.rho"))?;
                rho_check(rho_prime, forms_b.len(), &format!("{path}.rho_prime"))
            }
            CheckKind::Composition { membranes, forms } => {
                if membranes.len() != 2 {
                    return Err(Error::validation(
                        format!("{path}.membranes"),
                        "expected exactly two membranes",
                    ));
                }
                for (k, m) in membranes.iter().enumerate() {
                    self.require_membrane(m, &format!("{path}.membranes[{k}]"))?;
                }
                self.require_forms(forms, &format!("{path}.forms"))
            }
            CheckKind::Vanishing { alphas, forms } => {
                for (k, m) in alphas.iter().enumerate() {
                    self.require_membrane(m, &format!("{path}.alphas[{k}]"))?;
                }
                if forms.len() > alphas.len() || alphas.is_empty() {
                    return Err(Error::validation(format!("{path}.forms"), "need 1 ≤ r and s ≤ r"));
                }
                self.require_forms(forms, &format!("{path}.forms"))
            }
            CheckKind::ClassicalReduction { membrane, forms, rho } => {
                self.require_membrane(membrane, &format!("{path}.membrane"))?;
                self.require_forms(forms, &format!("{path}.forms"))?;
                if n != 1 {
                    return Err(Error::validation(path.to_string(), "classical reduction needs n = 1"));
                }
                rho_check(rho, forms.len(), &format!("{path}.rho"))
            }
            CheckKind::Homotopy {
                family,
                forms,
                rho,
                u_samples,
            } => {
                if !self.families.contains_key(family) {
                    return Err(Error::validation(
                        format!("{path}.family"),
                        format!("unknown family `{family}`"),
                    ));
                }
                self.require_forms(forms, &format!("{path}.forms"))?;
                for (k, u) in u_samples.iter().enumerate() {
                    u.to_rational(&format!("{path}.u_samples[{k}]"))?;
                }
                rho_check(rho, forms.len(), &format!("{path}.rho"))
            }
            CheckKind::CrossEngine { membrane, forms, rho } => {
                self.require_membrane(membrane, &format!("{path}.membrane"))?;
                self.require_forms(forms, &format!("{path}.forms"))?;
                rho_check(rho, forms.len(), &format!("{path}.rho"))
            }
        }
    }

    fn build_leaf(&self, spec: &MembraneSpec, path: &str) -> Result<Membrane> {
        let sc = self.scenario;
        let (n, d, field) = (sc.n, sc.d, sc.field);
        let wrap = |e: Error| match e {
            Error::Validation { .. } => e,
            other => Error::validation(path, other.to_string()),
        };
        let point = |pts: &[ScalarSpec], p: &str| -> Result<Vec<ExactScalar>> {
            if pts.len() != d {
                return Err(Error::validation(
                    p,
                    format!("expected {d} coordinates, got {}", pts.len()),
                ));
            }
            pts.iter()
                .enumerate()
                .map(|(k, v)| v.to_exact(&format!("{p}[{k}]")))
                .collect()
        };
        let g = match spec {
            MembraneSpec::Constant { point: pts } => catalog::constant(n, point(pts, &format!("{path}.point"))?, field),
            MembraneSpec::Identity {} => {
                if n != d {
                    return Err(Error::validation(
                        path,
                        format!("identity needs n = d, got n = {n}, d = {d}"),
                    ));
                }
                Membrane::polynomial(field, n, (0..n).map(|i| Poly::var(n, i)).collect())
            }
            MembraneSpec::Polynomial { components } => {
                let comps = components
                    .iter()
                    .enumerate()
                    .map(|(k, p)| build_poly(p, n, &format!("{path}.components[{k}]")))
                    .collect::<Result<Vec<_>>>()?;
                if comps.len() != d {
                    return Err(Error::validation(
                        format!("{path}.components"),
                        format!("expected {d} components"),
                    ));
                }
                Membrane::polynomial(field, n, comps)
            }
            MembraneSpec::Piecewise { breaks, cells } => {
                if breaks.len() != n {
                    return Err(Error::validation(
                        format!("{path}.breaks"),
                        format!("expected {n} axes"),
                    ));
                }
                let axes = breaks
                    .iter()
                    .enumerate()
                    .map(|(a, b)| {
                        b.iter()
                            .enumerate()
                            .map(|(k, v)| v.to_rational(&format!("{path}.breaks[{a}][{k}]")))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let cells = cells
                    .iter()
                    .enumerate()
                    .map(|(c, comps)| {
                        comps
                            .iter()
                            .enumerate()
                            .map(|(k, p)| build_poly(p, n, &format!("{path}.cells[{c}][{k}]")))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                Membrane::piecewise_polynomial(field, Grid::new(axes), cells)
            }
            MembraneSpec::Bump { base, profile } => {
                let x0 = point(base, &format!("{path}.base"))?;
                let prof = profile
                    .iter()
                    .enumerate()
                    .map(|(k, p)| build_poly(p, n, &format!("{path}.profile[{k}]")))
                    .collect::<Result<Vec<_>>>()?;
                catalog::bump(n, x0, prof, field)
            }
            MembraneSpec::ProductOfPaths { paths } => {
                if paths.len() != n || d != n {
                    return Err(Error::validation(
                        format!("{path}.paths"),
                        format!("expected {n} paths and d = n"),
                    ));
                }
                let paths = paths
                    .iter()
                    .enumerate()
                    .map(|(k, p)| build_poly(p, 1, &format!("{path}.paths[{k}]")))
                    .collect::<Result<Vec<_>>>()?;
                catalog::product_of_paths(paths, field)
            }
            MembraneSpec::Torus { base, radius } => {
                if d != 2 * n || field != Field::Real {
                    return Err(Error::validation(path, "torus needs a real target with d = 2n"));
                }
                catalog::torus(n, base.clone(), *radius)
            }
            _ => unreachable!("composite membranes are built on demand"),
        };
        g.map_err(wrap)
    }

    /// Builds (and caches) a membrane by name; composite constructions may fail here.
    pub fn membrane(&self, name: &str) -> Result<Membrane> {
        self.membrane_depth(name, 0)
    }

    fn membrane_depth(&self, name: &str, depth: usize) -> Result<Membrane> {
        if depth > 64 {
            return Err(Error::validation(
                format!("membranes.{name}"),
                "membrane definitions are cyclic",
            ));
        }
        if let Some(g) = self.membranes.lock().expect("membrane cache").get(name) {
            return Ok(g.clone());
        }
        let spec = self
            .scenario
            .membranes
            .get(name)
            .ok_or_else(|| Error::validation("membranes", format!("unknown membrane `{name}`")))?;
        let g = match spec {
            MembraneSpec::Compose { of } => {
                let mut acc = self.membrane_depth(&of[0], depth + 1)?;
                for m in &of[1..] {
                    acc = compose(&acc, &self.membrane_depth(m, depth + 1)?)?;
                }
                acc
            }
            MembraneSpec::Reparametrized { membrane, map } => {
                let phi = Reparametrization::polynomial(self.maps[map].clone())?;
                reparametrize(&self.membrane_depth(membrane, depth + 1)?, &phi)?
            }
            MembraneSpec::Pushforward { membrane, map } => {
                push_forward(&self.maps[map], &self.membrane_depth(membrane, depth + 1)?)?
            }
            leaf => self.build_leaf(leaf, &format!("membranes.{name}"))?,
        };
        self.membranes
            .lock()
            .expect("membrane cache")
            .insert(name.to_string(), g.clone());
        Ok(g)
    }

    pub fn forms(&self, names: &[String]) -> Vec<DifferentialForm> {
        names.iter().map(|n| self.forms[n].clone()).collect()
    }

    pub fn compute(&self, opts: &RunOptions) -> Result<IntegralResult> {
        let c = self
            .scenario
            .compute
            .as_ref()
            .ok_or_else(|| Error::validation("compute", "scenario has no compute section"))?;
        let g = self.membrane(&c.membrane)?;
        let forms = self.forms(&c.forms);
        let rho = match &c.rho {
            Some(images) => rho_from_images(images, self.scenario.n, forms.len(), "rho")?,
            None => ObserverPermutations::identity(self.scenario.n, forms.len()),
        };
        let cfg = opts.apply(self.scenario.engine.clone());
        iterated_integral(&g, &forms, &rho, &cfg)
    }

    /// Runs every check; failures to build or evaluate become error records.
    pub fn run_checks(&self, opts: &RunOptions) -> Vec<CheckReport> {
        let mut out = Vec::new();
        for spec in &self.scenario.checks {
            out.extend(self.run_check(spec, opts));
        }
        out
    }

    fn context(&self, spec: &CheckSpec, opts: &RunOptions) -> CheckContext {
        let mut cfg = self.scenario.engine.clone();
        if let Some(e) = spec.engine {
            cfg.engine = e;
        }
        if let Some(q) = spec.quad_order {
            cfg.quad_order = q;
        }
        let cfg = opts.apply(cfg);
        let mut ctx = CheckContext::new(self.scenario.id.clone(), cfg);
        if let Some(t) = opts.tolerance.or(spec.tolerance) {
            ctx.tolerance = t;
        }
        ctx.inject_sign_flip = spec.inject_sign_flip || opts.inject_sign_flip;
        ctx.expected = spec.expect.unwrap_or(Verdict::Pass);
        ctx
    }

    fn run_check(&self, spec: &CheckSpec, opts: &RunOptions) -> Vec<CheckReport> {
        let ctx = self.context(spec, opts);
        let n = self.scenario.n;
        let name = spec.kind.name();
        let err = |case: &str, e: Error| CheckReport::error(&ctx.id, name, case, ctx.cfg.engine, ctx.expected, &e);
        let one = |r: Result<CheckReport>| vec![r.unwrap_or_else(|e| err("", e))];
        let sweep = |rhos: Result<Vec<ObserverPermutations>>,
                     f: &dyn Fn(&ObserverPermutations) -> Result<CheckReport>| {
            match rhos {
                Ok(list) => list
                    .iter()
                    .map(|rho| match f(rho) {
                        Ok(mut r) => {
                            if !r.case.contains("rho") {
                                r.case = format!("rho={rho} {}", r.case).trim_end().to_string();
                            }
                            r
                        }
                        Err(e) => err(&format!("rho={rho}"), e),
                    })
                    .collect(),
                Err(e) => vec![err("", e)],
            }
        };
        match &spec.kind {
            CheckKind::Reparametrization {
                membrane,
                map,
                forms,
                rho,
            } => {
                let forms = self.forms(forms);
                let rhos = expand_rho(rho, n, forms.len(), "rho");
                sweep(rhos, &|rho| {
                    let g = self.membrane(membrane)?;
                    let phi = Reparametrization::polynomial(self.maps[map].clone())?;
                    verify::check_reparametrization(&ctx, &g, &phi, &forms, rho)
                })
            }
            CheckKind::Naturality {
                map,
                membrane,
                forms,
                rho,
            } => {
                let forms = self.forms(forms);
                let rhos = expand_rho(rho, n, forms.len(), "rho");
                sweep(rhos, &|rho| {
                    let g = self.membrane(membrane)?;
                    verify::check_naturality(&ctx, &self.maps[map], &g, &forms, rho)
                })
            }
            CheckKind::Shuffle {
                membrane,
                forms_a,
                forms_b,
                rho,
                rho_prime,
            } => {
                let (fa, fb) = (self.forms(forms_a), self.forms(forms_b));
                let pairs = expand_rho(rho, n, fa.len(), "rho").and_then(|a| {
                    let b = expand_rho(rho_prime, n, fb.len(), "rho_prime")?;
                    Ok(a.iter()
                        .flat_map(|x| b.iter().map(move |y| (x.clone(), y.clone())))
                        .collect::<Vec<_>>())
                });
                match pairs {
                    Ok(pairs) => pairs
                        .iter()
                        .map(|(a, b)| {
                            self.membrane(membrane)
                                .and_then(|g| verify::check_shuffle(&ctx, &g, &fa, &fb, a, b))
                                .unwrap_or_else(|e| err(&format!("rho={a} rho'={b}"), e))
                        })
                        .collect(),
                    Err(e) => vec![err("", e)],
                }
            }
            CheckKind::Composition { membranes, forms } => {
                let forms = self.forms(forms);
                one(self.membrane(&membranes[0]).and_then(|g1| {
                    let g2 = self.membrane(&membranes[1])?;
                    verify::check_composition(&ctx, &g1, &g2, &forms)
                }))
            }
            CheckKind::Vanishing { alphas, forms } => {
                let forms = self.forms(forms);
                one(alphas
                    .iter()
                    .map(|a| self.membrane(a))
                    .collect::<Result<Vec<_>>>()
                    .and_then(|al| verify::check_vanishing(&ctx, &al, &forms)))
            }
            CheckKind::ClassicalReduction { membrane, forms, rho } => {
                let forms = self.forms(forms);
                let rhos = expand_rho(rho, 1, forms.len(), "rho");
                sweep(rhos, &|rho| {
                    let g = self.membrane(membrane)?;
                    verify::check_classical_reduction(&ctx, &g, &forms, rho.observer(1))
                })
            }
            CheckKind::Homotopy {
                family,
                forms,
                rho,
                u_samples,
            } => {
                let forms = self.forms(forms);
                let fam = &self.families[family];
                let us: Result<Vec<Rational>> = u_samples.iter().map(|u| u.to_rational("u_samples")).collect();
                let rhos = expand_rho(rho, n, forms.len(), "rho");
                sweep(rhos, &|rho| {
                    verify::check_homotopy_invariance(&ctx, fam, &forms, rho, us.as_ref().map_err(Clone::clone)?)
                })
            }
            CheckKind::CrossEngine { membrane, forms, rho } => {
                let forms = self.forms(forms);
                let rhos = match expand_rho(rho, n, forms.len(), "rho") {
                    Ok(r) => r,
                    Err(e) => return vec![err("", e)],
                };
                let mut out = Vec::new();
                for engine in [Engine::Quadrature, Engine::MonteCarlo] {
                    let mut c = ctx.clone();
                    c.cfg.engine = engine;
                    if let Some(t) = opts.tolerance.or(spec.tolerance) {
                        c.tolerance = t;
                    }
                    for rho in &rhos {
                        let r = self
                            .membrane(membrane)
                            .and_then(|g| verify::check_cross_engine(&c, &g, &forms, rho))
                            .unwrap_or_else(|e| {
                                CheckReport::error(&c.id, name, &format!("rho={rho}"), engine, c.expected, &e)
                            });
                        out.push(r);
                    }
                }
                out
            }
        }
    }
}

/// Built-in scenario sources, by file name.
pub const BUILTIN_SCENARIOS: &[(&str, &str)] = &[
    ("two-thirds.json", include_str!("../scenarios/two-thirds.json")),
    ("volume-square.json", include_str!("../scenarios/volume-square.json")),
    (
        "classical-reduction.json",
        include_str!("../scenarios/classical-reduction.json"),
    ),
    ("shuffle.json", include_str!("../scenarios/shuffle.json")),
    ("composition.json", include_str!("../scenarios/composition.json")),
    (
        "composition-path.json",
        include_str!("../scenarios/composition-path.json"),
    ),
    ("vanishing.json", include_str!("../scenarios/vanishing.json")),
    (
        "reparametrization.json",
        include_str!("../scenarios/reparametrization.json"),
    ),
    ("naturality.json", include_str!("../scenarios/naturality.json")),
    ("homotopy.json", include_str!("../scenarios/homotopy.json")),
];

/// Names accepted by `verify` in place of a file.
pub const BUILTIN_SUITES: &[&str] = &["paper-identities"];

pub fn builtin_suite(name: &str) -> Option<Suite> {
    match name {
        "paper-identities" => Some(Suite {
            suite: name.to_string(),
            scenarios: BUILTIN_SCENARIOS
                .iter()
                .map(|(file, text)| Scenario::parse(text).unwrap_or_else(|e| panic!("built-in scenario {file}: {e}")))
                .collect(),
        }),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub scenarios: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn all_as_expected(&self) -> bool {
        self.scenarios.iter().all(CheckReport::as_expected)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self) -> String {
        let count = |v: Verdict| self.scenarios.iter().filter(|r| r.verdict == v).count();
        let unexpected = self.scenarios.iter().filter(|r| !r.as_expected()).count();
        format!(
            "{}: {} records, {} pass, {} fail, {} error, {} unexpected",
            self.suite,
            self.scenarios.len(),
            count(Verdict::Pass),
            count(Verdict::Fail),
            count(Verdict::Error),
            unexpected
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.scenarios {
            let verdict = match (r.verdict, r.as_expected()) {
                (Verdict::Pass, _) => "PASS",
                (Verdict::Fail, true) => "XFAIL",
                (Verdict::Fail, false) => "FAIL",
                (Verdict::Error, _) => "ERROR",
            };
            out.push_str(&format!(
                "{verdict:<6} {:<24} {:<20} {:<10} {}\n",
                r.id,
                r.check,
                r.engine.to_string(),
                r.case
            ));
            if r.verdict == Verdict::Error {
                out.push_str(&format!("       {}\n", r.message));
            } else {
                out.push_str(&format!(
                    "       lhs = {}  rhs = {}  deviation = {:.3e}  tolerance = {:.3e}\n",
                    r.lhs, r.rhs, r.deviation, r.tolerance
                ));
            }
        }
        out.push_str(&self.summary());
        out.push('\n');
        out
    }
}

/// Validates and runs every scenario of a suite. Validation errors abort the run.
pub fn run_suite(suite: &Suite, opts: &RunOptions) -> Result<SuiteReport> {
    let prepared = suite.scenarios.iter().map(Prepared::new).collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    for p in &prepared {
        records.extend(p.run_checks(opts));
    }
    Ok(SuiteReport {
        suite: suite.suite.clone(),
        scenarios: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_scenarios_round_trip() {
        for (file, text) in BUILTIN_SCENARIOS {
            let s = Scenario::parse(text).unwrap_or_else(|e| panic!("{file}: {e}"));
            let again = Scenario::parse(&s.to_json()).unwrap();
            assert_eq!(s, again, "{file}");
            assert_eq!(s.to_json(), again.to_json(), "{file}");
            Prepared::new(&s).unwrap_or_else(|e| panic!("{file}: {e}"));
        }
    }

    #[test]
    fn malformed_rho_names_the_field() {
        let text = r#"{
            "id": "bad", "n": 1, "d": 1,
            "membranes": {"g": {"kind": "identity"}},
            "forms": {"dx": {"degree": 1, "terms": [{"index": [1], "poly": [[[0], "1"]]}]}},
            "compute": {"membrane": "g", "forms": ["dx", "dx"], "rho": [[1, 1]]}
        }"#;
        let s = Scenario::parse(text).unwrap();
        let err = Prepared::new(&s).err().unwrap();
        assert!(err.to_string().contains("rho[0]"), "{err}");
    }

    #[test]
    fn unknown_reference_is_a_validation_error() {
        let text = r#"{
            "id": "bad", "n": 1, "d": 1,
            "compute": {"membrane": "missing", "forms": []}
        }"#;
        let s = Scenario::parse(text).unwrap();
        assert!(matches!(Prepared::new(&s), Err(Error::Validation { .. })));
    }

    #[test]
    fn complex_scalars_and_terms_parse() {
        let v: ScalarSpec = serde_json::from_str(r#"["1/2", "-3"]"#).unwrap();
        assert_eq!(
            v.to_exact("x").unwrap(),
            ExactScalar::new(Rational::new(1.into(), 2.into()), Rational::from_integer((-3).into()))
        );
        let t: PolySpec = serde_json::from_str(r#"[[[1, 0], "2"], [[0, 1], "0", "1"]]"#).unwrap();
        let p = build_poly(&t, 2, "p").unwrap();
        assert!(!p.is_real());
        assert!(build_poly(&t, 3, "p").is_err());
    }
}
