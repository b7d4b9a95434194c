//! Plain Monte-Carlo estimate over `I^{sn}` with a seeded generator.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::KahanSum;
use crate::combinatorics::{indicator_unchecked, DomainDescriptor, ObserverPermutations};
use crate::forms::Density;

const CHUNK: usize = 4096;

/// Mean and standard error of `f(t)·1_{D_ρ}(t)` for `samples` uniform points.
/// The generator is consumed sequentially, so results do not depend on threading.
pub fn montecarlo_integrate(
    integrand: impl Fn(&[f64]) -> Complex64 + Sync,
    rho: &ObserverPermutations,
    samples: usize,
    seed: u64,
) -> (Complex64, f64) {
    let dim = rho.n() * rho.s();
    let domain = DomainDescriptor::new(rho.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<f64> = (0..samples * dim).map(|_| rng.gen::<f64>()).collect();
    let values: Vec<Complex64> = points
        .par_chunks(dim.max(1))
        .take(samples)
        .map(|t| {
            if dim == 0 || indicator_unchecked(&domain, t) {
                integrand(t)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let sum = ordered_sum(&values, |v| v);
    let mean = sum / samples as f64;
    let sq = ordered_sum(&values, |v| Complex64::new((v - mean).norm_sqr(), 0.0)).re;
    let var = if samples > 1 { sq / (samples - 1) as f64 } else { 0.0 };
    (mean, (var / samples as f64).sqrt())
}

fn ordered_sum(values: &[Complex64], f: impl Fn(Complex64) -> Complex64 + Sync) -> Complex64 {
    let partials: Vec<Complex64> = values
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = KahanSum::default();
            for &v in chunk {
                acc.add(f(v));
            }
            acc.total()
        })
        .collect();
    let mut acc = KahanSum::default();
    for p in partials {
        acc.add(p);
    }
    acc.total()
}

pub(crate) fn integrate_event_product(
    densities: &[Density],
    rho: &ObserverPermutations,
    samples: usize,
    seed: u64,
) -> (Complex64, f64) {
    let n = rho.n();
    montecarlo_integrate(
        |t: &[f64]| {
            let mut v = Complex64::new(1.0, 0.0);
            for (sigma, d) in densities.iter().enumerate() {
                v *= d.eval(&t[sigma * n..(sigma + 1) * n]);
            }
            v
        },
        rho,
        samples,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_volume_and_replay() {
        let rho = ObserverPermutations::identity(1, 2);
        let one = |_: &[f64]| Complex64::new(1.0, 0.0);
        let (v, se) = montecarlo_integrate(one, &rho, 20_000, 7);
        assert!((v.re - 0.5).abs() < 4.0 * se);
        let (w, se2) = montecarlo_integrate(one, &rho, 20_000, 7);
        assert_eq!(v.re.to_bits(), w.re.to_bits());
        assert_eq!(se.to_bits(), se2.to_bits());
    }
}
