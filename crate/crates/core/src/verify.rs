//! Machine checks of the identities satisfied by iterated integrals, with
//! structured pass/fail reports.

use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{parity, rho_shuffles, shuffle_sign, ObserverPermutations, Permutation};
use crate::error::{Error, Result};
use crate::exact::{ExactScalar, Rational};
use crate::forms::{pullback_form, DifferentialForm, Field, Scalar};
use crate::integrate::{iterated_integral, Engine, EngineConfig, IntegralResult};
use crate::membranes::{
    catalog, compose, expand_vanishing_chain, push_forward, reparametrize, Membrane, Reparametrization,
};
use crate::poly::{Poly, PolyMap};

/// Default relative tolerance for the quadrature engine.
pub const QUADRATURE_TOL: f64 = 1e-8;
/// Monte-Carlo comparisons pass within this many combined standard errors.
pub const MC_SIGMAS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    #[default]
    Pass,
    Fail,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub id: String,
    pub check: String,
    /// Parameters distinguishing records of one sweep, e.g. `rho=(2,1)`.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub case: String,
    pub lhs: String,
    pub rhs: String,
    pub deviation: f64,
    pub rel_deviation: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub expected: Verdict,
    pub engine: Engine,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub message: String,
}

impl CheckReport {
    pub fn error(id: &str, check: &str, case: &str, engine: Engine, expected: Verdict, err: &Error) -> Self {
        CheckReport {
            id: id.to_string(),
            check: check.to_string(),
            case: case.to_string(),
            lhs: String::new(),
            rhs: String::new(),
            deviation: 0.0,
            rel_deviation: 0.0,
            tolerance: 0.0,
            verdict: Verdict::Error,
            expected,
            engine,
            message: err.to_string(),
        }
    }

    /// Whether the outcome matches what the scenario expects.
    pub fn as_expected(&self) -> bool {
        self.verdict != Verdict::Error && self.verdict == self.expected
    }
}

/// A value together with an absolute error bound carried through sums and products.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub value: Scalar,
    pub err: f64,
}

impl Estimate {
    pub fn exact(v: ExactScalar) -> Self {
        Estimate {
            value: Scalar::Exact(v),
            err: 0.0,
        }
    }

    pub fn zero_for(engine: Engine) -> Self {
        match engine {
            Engine::Exact => Self::exact(ExactScalar::zero()),
            _ => Estimate {
                value: Scalar::Float(Complex64::new(0.0, 0.0)),
                err: 0.0,
            },
        }
    }

    pub fn add(&self, other: &Estimate) -> Estimate {
        Estimate {
            value: self.value.add(&other.value),
            err: self.err + other.err,
        }
    }

    pub fn mul(&self, other: &Estimate) -> Estimate {
        Estimate {
            value: self.value.mul(&other.value),
            err: self.value.norm() * other.err + other.value.norm() * self.err + self.err * other.err,
        }
    }

    pub fn scale_int(&self, k: i64) -> Estimate {
        Estimate {
            value: self.value.scale_int(k),
            err: self.err * k.unsigned_abs() as f64,
        }
    }
}

impl From<IntegralResult> for Estimate {
    fn from(r: IntegralResult) -> Self {
        Estimate {
            value: r.value,
            err: r.error_estimate,
        }
    }
}

/// Shared settings of one check invocation.
#[derive(Clone, Debug)]
pub struct CheckContext {
    pub id: String,
    pub cfg: EngineConfig,
    /// Relative tolerance for the quadrature engine.
    pub tolerance: f64,
    /// Negates the first nonzero term of the summed side, as a negative control.
    pub inject_sign_flip: bool,
    pub expected: Verdict,
}

impl CheckContext {
    pub fn new(id: impl Into<String>, cfg: EngineConfig) -> Self {
        CheckContext {
            id: id.into(),
            cfg,
            tolerance: QUADRATURE_TOL,
            inject_sign_flip: false,
            expected: Verdict::Pass,
        }
    }

    fn integral(&self, g: &Membrane, forms: &[DifferentialForm], rho: &ObserverPermutations) -> Result<Estimate> {
        iterated_integral(g, forms, rho, &self.cfg).map(Estimate::from)
    }

    fn sum(&self, terms: Vec<Estimate>) -> Estimate {
        let mut terms = terms;
        if self.inject_sign_flip {
            if let Some(t) = terms.iter_mut().find(|t| !t.value.is_zero()) {
                *t = t.scale_int(-1);
            }
        }
        terms
            .iter()
            .fold(Estimate::zero_for(self.cfg.engine), |acc, t| acc.add(t))
    }

    /// Builds the report comparing `lhs` with `rhs` under the engine's error model.
    pub fn judge(&self, check: &str, case: String, lhs: &Estimate, rhs: &Estimate) -> CheckReport {
        let (deviation, tolerance, pass) = compare(lhs, rhs, self.cfg.engine, self.tolerance);
        let scale = lhs.value.norm().max(rhs.value.norm());
        let verdict = if pass { Verdict::Pass } else { Verdict::Fail };
        CheckReport {
            id: self.id.clone(),
            check: check.to_string(),
            case,
            lhs: lhs.value.to_string(),
            rhs: rhs.value.to_string(),
            deviation,
            rel_deviation: if scale > 0.0 { deviation / scale } else { deviation },
            tolerance,
            verdict,
            expected: self.expected,
            engine: self.cfg.engine,
            message: String::new(),
        }
    }
}

/// `(|lhs − rhs|, tolerance used, pass)`.
pub fn compare(lhs: &Estimate, rhs: &Estimate, engine: Engine, tol: f64) -> (f64, f64, bool) {
    if let (Scalar::Exact(a), Scalar::Exact(b)) = (&lhs.value, &rhs.value) {
        let d = a - b;
        return (d.to_complex64().norm(), 0.0, d.is_zero());
    }
    let dev = (lhs.value.to_complex64() - rhs.value.to_complex64()).norm();
    let used = match engine {
        Engine::MonteCarlo => MC_SIGMAS * (lhs.err * lhs.err + rhs.err * rhs.err).sqrt(),
        _ => tol * 1f64.max(lhs.value.norm()).max(rhs.value.norm()),
    };
    (dev, used, dev <= used)
}

/// `∫^ρ_g` versus `∫^ρ_{g∘φ}`.
pub fn check_reparametrization(
    ctx: &CheckContext,
    g: &Membrane,
    phi: &Reparametrization,
    forms: &[DifferentialForm],
    rho: &ObserverPermutations,
) -> Result<CheckReport> {
    let gp = reparametrize(g, phi)?;
    let lhs = ctx.integral(g, forms, rho)?;
    let rhs = ctx.sum(vec![ctx.integral(&gp, forms, rho)?]);
    Ok(ctx.judge("reparametrization", format!("rho={rho}"), &lhs, &rhs))
}

/// `∫_{F∘g} ω₁⋯ω_s` versus `∫_g (F*ω₁)⋯(F*ω_s)`.
pub fn check_naturality(
    ctx: &CheckContext,
    map: &PolyMap,
    g: &Membrane,
    forms: &[DifferentialForm],
    rho: &ObserverPermutations,
) -> Result<CheckReport> {
    let fg = push_forward(map, g)?;
    let pulled = forms
        .iter()
        .map(|w| pullback_form(map, w))
        .collect::<Result<Vec<_>>>()?;
    let lhs = ctx.integral(&fg, forms, rho)?;
    let rhs = ctx.sum(vec![ctx.integral(g, &pulled, rho)?]);
    Ok(ctx.judge("naturality", format!("rho={rho}"), &lhs, &rhs))
}

/// `∫^ρ(ω₁…ω_s)·∫^{ρ′}(ω_{s+1}…ω_{s+s′})` versus the signed sum over `Sh(ρ, ρ′)`.
pub fn check_shuffle(
    ctx: &CheckContext,
    g: &Membrane,
    forms_a: &[DifferentialForm],
    forms_b: &[DifferentialForm],
    rho: &ObserverPermutations,
    rho_prime: &ObserverPermutations,
) -> Result<CheckReport> {
    let lhs = ctx
        .integral(g, forms_a, rho)?
        .mul(&ctx.integral(g, forms_b, rho_prime)?);
    let all: Vec<DifferentialForm> = forms_a.iter().chain(forms_b).cloned().collect();
    let mut terms = Vec::new();
    for sigma in rho_shuffles(rho, rho_prime)? {
        let sign = shuffle_sign(&sigma, rho, rho_prime) as i64;
        terms.push(ctx.integral(g, &all, &sigma)?.scale_int(sign));
    }
    let rhs = ctx.sum(terms);
    Ok(ctx.judge("shuffle", format!("rho={rho} rho'={rho_prime}"), &lhs, &rhs))
}

/// `∫_{g₁g₂} ω₁…ω_s` versus `Σ_j (∫_{g₁}ω₁…ω_j)(∫_{g₂}ω_{j+1}…ω_s)`.
pub fn check_composition(
    ctx: &CheckContext,
    g1: &Membrane,
    g2: &Membrane,
    forms: &[DifferentialForm],
) -> Result<CheckReport> {
    let n = g1.n();
    let s = forms.len();
    let g = compose(g1, g2)?;
    let lhs = ctx.integral(&g, forms, &ObserverPermutations::identity(n, s))?;
    let mut terms = Vec::new();
    for j in 0..=s {
        let a = ctx.integral(g1, &forms[..j], &ObserverPermutations::identity(n, j))?;
        let b = ctx.integral(g2, &forms[j..], &ObserverPermutations::identity(n, s - j))?;
        terms.push(a.mul(&b));
    }
    let rhs = ctx.sum(terms);
    Ok(ctx.judge("composition", format!("s={s}"), &lhs, &rhs))
}

/// `∫_{(α₁−1)⋯(α_r−1)} ω₁⋯ω_s` versus `0` for `s < r` and `∏_j ∫_{α_j}ω_j` for `s = r`.
pub fn check_vanishing(ctx: &CheckContext, alphas: &[Membrane], forms: &[DifferentialForm]) -> Result<CheckReport> {
    let (r, s) = (alphas.len(), forms.len());
    if s > r {
        return Err(Error::validation(
            "forms",
            format!("vanishing needs s ≤ r, got s={s}, r={r}"),
        ));
    }
    let n = alphas.first().map(Membrane::n).unwrap_or(1);
    let rho = ObserverPermutations::identity(n, s);
    let chain = expand_vanishing_chain(alphas)?;
    let mut terms = Vec::new();
    for (c, g) in chain.terms() {
        terms.push(ctx.integral(g, forms, &rho)?.scale_int(*c));
    }
    let lhs = ctx.sum(terms);
    let rhs = if s < r {
        Estimate::zero_for(ctx.cfg.engine)
    } else {
        let one = ObserverPermutations::identity(n, 1);
        let mut acc = match ctx.cfg.engine {
            Engine::Exact => Estimate::exact(ExactScalar::from_int(1)),
            _ => Estimate {
                value: Scalar::Float(Complex64::new(1.0, 0.0)),
                err: 0.0,
            },
        };
        for (a, w) in alphas.iter().zip(forms) {
            acc = acc.mul(&ctx.integral(a, std::slice::from_ref(w), &one)?);
        }
        acc
    };
    Ok(ctx.judge("vanishing", format!("r={r} s={s}"), &lhs, &rhs))
}

/// For a path: `∫^ρ_g ω₁⋯ω_s` versus `parity(ρ)·∫_g ω_{ρ(1)}⋯ω_{ρ(s)}`.
pub fn check_classical_reduction(
    ctx: &CheckContext,
    g: &Membrane,
    forms: &[DifferentialForm],
    rho: &Permutation,
) -> Result<CheckReport> {
    if g.n() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "classical reduction needs n = 1, got n = {}",
            g.n()
        )));
    }
    let s = forms.len();
    let lhs = ctx.integral(g, forms, &ObserverPermutations::new(vec![rho.clone()])?)?;
    let reordered: Vec<DifferentialForm> = (1..=s).map(|k| forms[rho.apply(k) - 1].clone()).collect();
    let rhs = ctx.integral(g, &reordered, &ObserverPermutations::identity(1, s))?;
    let rhs = ctx.sum(vec![rhs.scale_int(parity(rho) as i64)]);
    Ok(ctx.judge("classical_reduction", format!("rho={rho}"), &lhs, &rhs))
}

/// The value reported by every engine: `∫` with `cfg`, against the exact engine.
pub fn check_cross_engine(
    ctx: &CheckContext,
    g: &Membrane,
    forms: &[DifferentialForm],
    rho: &ObserverPermutations,
) -> Result<CheckReport> {
    let exact = iterated_integral(
        g,
        forms,
        rho,
        &EngineConfig {
            engine: Engine::Exact,
            ..ctx.cfg.clone()
        },
    )?;
    let other = ctx.sum(vec![ctx.integral(g, forms, rho)?]);
    let exact = Estimate {
        value: Scalar::Float(exact.value.to_complex64()),
        err: 0.0,
    };
    Ok(ctx.judge("cross_engine", format!("rho={rho}"), &exact, &other))
}

/// Factor-path homotopies `γ_ν(t, u)`, each a polynomial in `(t, u)` with fixed endpoints.
/// The slice at `u` is the product membrane `t ↦ (γ₁(t₁,u), …, γ_n(t_n,u))` in `ℂⁿ`.
#[derive(Clone, Debug, PartialEq)]
pub struct HomotopyFamily {
    paths: Vec<Poly>,
}

impl HomotopyFamily {
    pub fn new(paths: Vec<Poly>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidFamily("need at least one factor path".into()));
        }
        for (nu, p) in paths.iter().enumerate() {
            if p.nvars() != 2 {
                return Err(Error::InvalidFamily(format!(
                    "path {} must be a polynomial in (t, u)",
                    nu + 1
                )));
            }
            for end in [ExactScalar::zero(), ExactScalar::from_int(1)] {
                if p.restrict(0, &end).degree_in(1) > 0 {
                    return Err(Error::InvalidFamily(format!(
                        "path {} moves its endpoint t = {end} with u",
                        nu + 1
                    )));
                }
            }
        }
        Ok(HomotopyFamily { paths })
    }

    pub fn n(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self) -> &[Poly] {
        &self.paths
    }

    pub fn slice(&self, u: &Rational) -> Result<Membrane> {
        let uv = ExactScalar::real(u.clone());
        let paths = self
            .paths
            .iter()
            .map(|p| {
                let r = p.restrict(1, &uv);
                Poly::from_terms(1, r.terms().map(|(e, c)| (vec![e[0]], c.clone())))
            })
            .collect();
        catalog::product_of_paths(paths, Field::Complex)
    }
}

/// Values of `∫^ρ_{g_u}` across `u_samples`; passes when the largest pairwise
/// deviation is within tolerance.
pub fn check_homotopy_invariance(
    ctx: &CheckContext,
    family: &HomotopyFamily,
    forms: &[DifferentialForm],
    rho: &ObserverPermutations,
    u_samples: &[Rational],
) -> Result<CheckReport> {
    if u_samples.is_empty() {
        return Err(Error::validation("u_samples", "need at least one sample"));
    }
    let mut values = Vec::new();
    for u in u_samples {
        values.push(ctx.integral(&family.slice(u)?, forms, rho)?);
    }
    if ctx.inject_sign_flip {
        if let Some(v) = values.iter_mut().find(|v| !v.value.is_zero()) {
            *v = v.scale_int(-1);
        }
    }
    let mut worst = (0, 0, -1.0);
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let d = (values[i].value.to_complex64() - values[j].value.to_complex64()).norm();
            let exact_differs = matches!((&values[i].value, &values[j].value),
                (Scalar::Exact(a), Scalar::Exact(b)) if a != b);
            let d = if exact_differs && d == 0.0 {
                f64::MIN_POSITIVE
            } else {
                d
            };
            if d > worst.2 {
                worst = (i, j, d);
            }
        }
    }
    let (i, j) = (worst.0, worst.1);
    let case = format!(
        "u={} vs u={}",
        crate::exact::format_rational(&u_samples[i]),
        crate::exact::format_rational(&u_samples[j])
    );
    Ok(ctx.judge("homotopy", case, &values[i], &values[j]))
}
