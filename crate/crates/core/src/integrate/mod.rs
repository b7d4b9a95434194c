//! Evaluation engines for `∫^ρ_g ω₁⋯ω_s`.
//!
//! Every engine computes `wedge_sign(ρ) · ∫_{D_ρ} ∏_σ f_σ(t^σ) dt`, where
//! `f_σ` is the pullback density of `ω_σ` and `t^σ = (t_1^σ, …, t_n^σ)`.
//! Along observer `ν` the region is the order simplex
//! `0 < t_ν^{ρ_ν(1)} < ⋯ < t_ν^{ρ_ν(s)} < 1`. Piecewise membranes are handled
//! by splitting each observer chain according to which grid interval every
//! variable falls in; inside one interval the variables again form an order
//! simplex, and the integrand is smooth.

mod exact_engine;
mod gauss;
mod montecarlo;
mod quadrature;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{wedge_sign, ObserverPermutations};
use crate::error::{Error, Result};
use crate::exact::ExactScalar;
use crate::forms::{pullback, Density, DifferentialForm, Field, Scalar};
use crate::membranes::{Membrane, MembraneChain};

pub use exact_engine::{exact_engine_integrate, simplex_monomial};
pub use gauss::gauss_legendre;
pub use montecarlo::montecarlo_integrate;
pub use quadrature::quadrature_integrate;

/// Largest `s·n` accepted by the quadrature engine.
pub const MAX_QUADRATURE_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Exact,
    Quadrature,
    MonteCarlo,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Exact => "exact",
            Engine::Quadrature => "quadrature",
            Engine::MonteCarlo => "montecarlo",
        })
    }
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Engine::Exact),
            "quadrature" => Ok(Engine::Quadrature),
            "montecarlo" => Ok(Engine::MonteCarlo),
            other => Err(Error::InvalidConfig(format!("unknown engine `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub engine: Engine,
    pub quad_order: usize,
    /// Each smooth cell is split into this many equal pieces per axis.
    pub subdivision: usize,
    pub mc_samples: usize,
    pub seed: u64,
    /// When set, membranes and forms must live over this field.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<Field>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            engine: Engine::Exact,
            quad_order: 8,
            subdivision: 1,
            mc_samples: 100_000,
            seed: 42,
            field: None,
        }
    }
}

impl EngineConfig {
    pub fn exact() -> Self {
        EngineConfig::default()
    }

    pub fn quadrature(q: usize) -> Self {
        EngineConfig {
            engine: Engine::Quadrature,
            quad_order: q,
            ..Default::default()
        }
    }

    pub fn montecarlo(samples: usize, seed: u64) -> Self {
        EngineConfig {
            engine: Engine::MonteCarlo,
            mc_samples: samples,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.quad_order == 0 {
            return Err(Error::InvalidConfig("quad_order must be at least 1".into()));
        }
        if self.subdivision == 0 {
            return Err(Error::InvalidConfig("subdivision must be at least 1".into()));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidConfig("mc_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineMetadata {
    pub engine: Engine,
    pub points: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_order: Option<usize>,
}

impl EngineMetadata {
    fn for_config(cfg: &EngineConfig, points: u64) -> Self {
        EngineMetadata {
            engine: cfg.engine,
            points,
            seed: (cfg.engine == Engine::MonteCarlo).then_some(cfg.seed),
            quad_order: (cfg.engine == Engine::Quadrature).then_some(cfg.quad_order),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegralResult {
    pub value: Scalar,
    pub error_estimate: f64,
    pub metadata: EngineMetadata,
}

impl IntegralResult {
    pub fn exact(value: ExactScalar) -> Self {
        IntegralResult {
            value: Scalar::Exact(value),
            error_estimate: 0.0,
            metadata: EngineMetadata {
                engine: Engine::Exact,
                points: 0,
                seed: None,
                quad_order: None,
            },
        }
    }
}

fn empty_result(cfg: &EngineConfig) -> IntegralResult {
    let value = match cfg.engine {
        Engine::Exact => Scalar::Exact(ExactScalar::from_int(1)),
        _ => Scalar::Float(Complex64::new(1.0, 0.0)),
    };
    IntegralResult {
        value,
        error_estimate: 0.0,
        metadata: EngineMetadata::for_config(cfg, 0),
    }
}

fn check_inputs(
    g: &Membrane,
    forms: &[DifferentialForm],
    rho: &ObserverPermutations,
    cfg: &EngineConfig,
) -> Result<()> {
    cfg.validate()?;
    if rho.n() != g.n() {
        return Err(Error::DimensionMismatch(format!(
            "rho has {} observers, membrane dimension is {}",
            rho.n(),
            g.n()
        )));
    }
    if rho.s() != forms.len() {
        return Err(Error::DimensionMismatch(format!(
            "rho orders {} events but {} forms were given",
            rho.s(),
            forms.len()
        )));
    }
    if let Some(field) = cfg.field {
        if g.field() != field {
            return Err(Error::FieldMismatch(format!(
                "{} membrane in a {} computation",
                g.field(),
                field
            )));
        }
    }
    Ok(())
}

/// `∫^ρ_g ω₁⋯ω_s` with the configured engine.
pub fn iterated_integral(
    g: &Membrane,
    forms: &[DifferentialForm],
    rho: &ObserverPermutations,
    cfg: &EngineConfig,
) -> Result<IntegralResult> {
    check_inputs(g, forms, rho, cfg)?;
    let densities = forms.iter().map(|w| pullback(g, w)).collect::<Result<Vec<_>>>()?;
    integrate_densities(&densities, rho, cfg)
}

/// `wedge_sign(ρ) · ∫_{D_ρ} ∏_σ f_σ(t^σ) dt` for precomputed densities sharing one grid.
pub fn integrate_densities(
    densities: &[Density],
    rho: &ObserverPermutations,
    cfg: &EngineConfig,
) -> Result<IntegralResult> {
    cfg.validate()?;
    if densities.is_empty() {
        return Ok(empty_result(cfg));
    }
    if rho.s() != densities.len() {
        return Err(Error::DimensionMismatch(format!(
            "rho orders {} events but {} densities were given",
            rho.s(),
            densities.len()
        )));
    }
    let grid = densities[0].grid();
    if densities.iter().any(|d| d.grid() != grid) || grid.n() != rho.n() {
        return Err(Error::DimensionMismatch(
            "densities must share one grid matching rho".into(),
        ));
    }
    let sign = wedge_sign(rho);
    match cfg.engine {
        Engine::Exact => {
            let v = exact_engine::integrate_event_product(densities, rho)?;
            let v = if sign < 0 { -v } else { v };
            Ok(IntegralResult::exact(v))
        }
        Engine::Quadrature => {
            let sn = rho.s() * rho.n();
            if sn > MAX_QUADRATURE_DIM {
                return Err(Error::InvalidConfig(format!(
                    "quadrature is limited to s·n ≤ {MAX_QUADRATURE_DIM}, got {sn}"
                )));
            }
            let (v, err, points) = quadrature::integrate_event_product(densities, rho, cfg.quad_order, cfg.subdivision);
            Ok(IntegralResult {
                value: Scalar::Float(v * sign as f64),
                error_estimate: err,
                metadata: EngineMetadata::for_config(cfg, points),
            })
        }
        Engine::MonteCarlo => {
            let (v, err) = montecarlo::integrate_event_product(densities, rho, cfg.mc_samples, cfg.seed);
            Ok(IntegralResult {
                value: Scalar::Float(v * sign as f64),
                error_estimate: err,
                metadata: EngineMetadata::for_config(cfg, cfg.mc_samples as u64),
            })
        }
    }
}

/// `Σ_k c_k ∫^ρ_{g_k} ω₁⋯ω_s`; error estimates add in absolute value.
pub fn chain_integral(
    chain: &MembraneChain,
    forms: &[DifferentialForm],
    rho: &ObserverPermutations,
    cfg: &EngineConfig,
) -> Result<IntegralResult> {
    let mut total = match cfg.engine {
        Engine::Exact => Scalar::zero_exact(),
        _ => Scalar::Float(Complex64::new(0.0, 0.0)),
    };
    let mut err = 0.0;
    let mut points = 0;
    for (c, g) in chain.terms() {
        let r = iterated_integral(g, forms, rho, cfg)?;
        total = total.add(&r.value.scale_int(*c));
        err += r.error_estimate * c.unsigned_abs() as f64;
        points += r.metadata.points;
    }
    Ok(IntegralResult {
        value: total,
        error_estimate: err,
        metadata: EngineMetadata::for_config(cfg, points),
    })
}

/// Compensated (Neumaier) accumulator for complex sums.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct KahanSum {
    re: f64,
    re_c: f64,
    im: f64,
    im_c: f64,
}

fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl KahanSum {
    pub(crate) fn add(&mut self, z: Complex64) {
        neumaier(&mut self.re, &mut self.re_c, z.re);
        neumaier(&mut self.im, &mut self.im_c, z.im);
    }

    pub(crate) fn total(&self) -> Complex64 {
        Complex64::new(self.re + self.re_c, self.im + self.im_c)
    }
}

/// Nondecreasing maps `{1..s} → {0..m-1}`, in lexicographic order.
pub(crate) fn interval_assignments(s: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, s: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == s {
            out.push(cur.clone());
            return;
        }
        for j in start..m {
            cur.push(j);
            rec(j, s, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, s, m, &mut Vec::new(), &mut out);
    out
}

/// Cell of each event for one choice of per-observer interval assignments.
/// `assignments[ν][k]` is the interval of `t_ν^{ρ_ν(k+1)}`.
pub(crate) fn event_cells(
    grid: &crate::membranes::Grid,
    rho: &ObserverPermutations,
    assignments: &[&Vec<usize>],
) -> Vec<usize> {
    let n = rho.n();
    let inv = rho.inverse();
    (1..=rho.s())
        .map(|sigma| {
            let coords: Vec<usize> = (0..n)
                .map(|nu| assignments[nu][inv.observer(nu + 1).apply(sigma) - 1])
                .collect();
            grid.cell_index(&coords)
        })
        .collect()
}

/// Mixed-radix enumeration of the Cartesian product of index ranges.
pub(crate) fn for_each_product(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    if sizes.contains(&0) {
        return;
    }
    let mut idx = vec![0; sizes.len()];
    loop {
        f(&idx);
        let mut k = sizes.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::CoefficientFunction;
    use crate::membranes::catalog;
    use crate::poly::Poly;

    fn q(n: i64, d: i64) -> ExactScalar {
        ExactScalar::from_ratio(n, d)
    }

    fn path_forms() -> (Membrane, Vec<DifferentialForm>) {
        let g = catalog::identity(1);
        let dx = DifferentialForm::coordinate_volume(1, 1, Field::Real).unwrap();
        let two_x = DifferentialForm::monomial(
            1,
            vec![1],
            CoefficientFunction::Polynomial(Poly::var(1, 0).scale(&q(2, 1))),
            Field::Real,
        )
        .unwrap();
        (g, vec![dx, two_x])
    }

    #[test]
    fn two_thirds_and_minus_one_third() {
        let (g, forms) = path_forms();
        let id = ObserverPermutations::identity(1, 2);
        let swap = ObserverPermutations::from_images(vec![vec![2, 1]]).unwrap();
        let a = iterated_integral(&g, &forms, &id, &EngineConfig::exact()).unwrap();
        assert_eq!(a.value, Scalar::Exact(q(2, 3)));
        let b = iterated_integral(&g, &forms, &swap, &EngineConfig::exact()).unwrap();
        assert_eq!(b.value, Scalar::Exact(q(-1, 3)));
        let c = iterated_integral(&g, &forms, &swap, &EngineConfig::quadrature(8)).unwrap();
        assert!((c.value.to_complex64().re + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cube_volumes() {
        for n in 1..=3 {
            let g = catalog::identity(n);
            let vol = DifferentialForm::coordinate_volume(n, n, Field::Real).unwrap();
            let r = iterated_integral(
                &g,
                &[vol],
                &ObserverPermutations::identity(n, 1),
                &EngineConfig::exact(),
            )
            .unwrap();
            assert_eq!(r.value, Scalar::Exact(q(1, 1)));
        }
        let g = catalog::identity(2);
        let vol = DifferentialForm::coordinate_volume(2, 2, Field::Real).unwrap();
        let rho = ObserverPermutations::identity(2, 2);
        let forms = [vol.clone(), vol];
        let r = iterated_integral(&g, &forms, &rho, &EngineConfig::exact()).unwrap();
        assert_eq!(r.value, Scalar::Exact(q(1, 4)));
        let r = iterated_integral(&g, &forms, &rho, &EngineConfig::quadrature(8)).unwrap();
        assert!((r.value.to_complex64().re - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empty_product_is_one() {
        let g = catalog::identity(2);
        let rho = ObserverPermutations::identity(2, 0);
        for cfg in [
            EngineConfig::exact(),
            EngineConfig::quadrature(4),
            EngineConfig::montecarlo(10, 1),
        ] {
            let r = iterated_integral(&g, &[], &rho, &cfg).unwrap();
            assert_eq!(r.value.to_complex64(), Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn constant_membrane_integrates_to_zero() {
        let g = catalog::constant(1, vec![q(1, 2), q(1, 3)], Field::Real).unwrap();
        let x = Poly::var(2, 0);
        let w = DifferentialForm::monomial(2, vec![2], CoefficientFunction::Polynomial(x), Field::Real).unwrap();
        let r = iterated_integral(&g, &[w], &ObserverPermutations::identity(1, 1), &EngineConfig::exact()).unwrap();
        assert_eq!(r.value, Scalar::zero_exact());
    }

    #[test]
    fn exact_engine_rejects_callbacks() {
        let g = catalog::torus(1, vec![0.0, 0.0], 1.0).unwrap();
        let w = DifferentialForm::coordinate_volume(2, 1, Field::Real).unwrap();
        let err = iterated_integral(&g, &[w], &ObserverPermutations::identity(1, 1), &EngineConfig::exact());
        assert!(matches!(err, Err(Error::NotPolynomial(_))));
    }

    #[test]
    fn quadrature_dimension_cap() {
        let g = catalog::identity(3);
        let vol = DifferentialForm::coordinate_volume(3, 3, Field::Real).unwrap();
        let forms = vec![vol; 3];
        let err = iterated_integral(
            &g,
            &forms,
            &ObserverPermutations::identity(3, 3),
            &EngineConfig::quadrature(2),
        );
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn assignments_are_nondecreasing() {
        let a = interval_assignments(2, 3);
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|v| v[0] <= v[1]));
    }
}
