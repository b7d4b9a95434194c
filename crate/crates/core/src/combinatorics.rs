//! Permutations, shuffle sets, index maps and ordered domains.
//!
//! Conventions used throughout the crate:
//!
//! * Permutations are 1-indexed, in one-line notation: `images[k-1] = p(k)`.
//!   Composition is right to left, `(p ∘ q)(k) = p(q(k))`.
//! * For an observer tuple `rho = (ρ_1, …, ρ_n)`, observer `ν` sees the events
//!   in the order `ρ_ν(1), ρ_ν(2), …, ρ_ν(s)`; the ordered domain is
//!   `D_ρ = { t : 0 < t_ν^{ρ_ν(1)} < … < t_ν^{ρ_ν(s)} < 1 for every ν }`.
//! * Points of `I^{sn}` are stored event-major: `t_ν^σ` lives at index
//!   `(σ-1)·n + (ν-1)`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    /// Validates one-line notation. The empty permutation (s = 0) is accepted
    /// so that length-zero integrals have an index.
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let s = images.len();
        let mut seen = vec![false; s];
        for (k, &v) in images.iter().enumerate() {
            if v == 0 || v > s {
                return Err(Error::InvalidPermutation(format!(
                    "image {v} at position {} is outside 1..={s}",
                    k + 1
                )));
            }
            if seen[v - 1] {
                return Err(Error::InvalidPermutation(format!("image {v} repeated")));
            }
            seen[v - 1] = true;
        }
        Ok(Permutation { images })
    }

    pub fn identity(s: usize) -> Self {
        Permutation {
            images: (1..=s).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    /// `p(k)` for `1 ≤ k ≤ s`.
    pub fn apply(&self, k: usize) -> usize {
        self.images[k - 1]
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(k, &v)| v == k + 1)
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.size()];
        for (k, &v) in self.images.iter().enumerate() {
            inv[v - 1] = k + 1;
        }
        Permutation { images: inv }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.size(), other.size(), "composing permutations of different sizes");
        Permutation {
            images: other.images.iter().map(|&k| self.images[k - 1]).collect(),
        }
    }

    pub fn inversions(&self) -> usize {
        inversion_count(&self.images)
    }

    /// Every permutation of `s` letters in lexicographic order.
    pub fn all(s: usize) -> Vec<Permutation> {
        let mut current: Vec<usize> = (1..=s).collect();
        let mut out = vec![Permutation {
            images: current.clone(),
        }];
        while next_lexicographic(&mut current) {
            out.push(Permutation {
                images: current.clone(),
            });
        }
        out
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, v) in self.images.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

fn inversion_count<T: Ord>(seq: &[T]) -> usize {
    let mut count = 0;
    for i in 0..seq.len() {
        for j in i + 1..seq.len() {
            if seq[i] > seq[j] {
                count += 1;
            }
        }
    }
    count
}

fn next_lexicographic(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Sign of a permutation, `(-1)^{#inversions}`.
pub fn parity(p: &Permutation) -> i8 {
    if p.inversions().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// The tuple `(ρ_1, …, ρ_n)`, one permutation per observer, all of size `s`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObserverPermutations {
    perms: Vec<Permutation>,
}

impl ObserverPermutations {
    pub fn new(perms: Vec<Permutation>) -> Result<Self> {
        let Some(first) = perms.first() else {
            return Err(Error::InvalidPermutation("need at least one observer".into()));
        };
        let s = first.size();
        if let Some((nu, p)) = perms.iter().enumerate().find(|(_, p)| p.size() != s) {
            return Err(Error::InvalidPermutation(format!(
                "observer {} has {} events, expected {s}",
                nu + 1,
                p.size()
            )));
        }
        Ok(ObserverPermutations { perms })
    }

    pub fn from_images(images: Vec<Vec<usize>>) -> Result<Self> {
        let perms = images.into_iter().map(Permutation::new).collect::<Result<Vec<_>>>()?;
        Self::new(perms)
    }

    pub fn identity(n: usize, s: usize) -> Self {
        ObserverPermutations {
            perms: vec![Permutation::identity(s); n.max(1)],
        }
    }

    /// The same permutation for every one of `n` observers.
    pub fn uniform(n: usize, p: Permutation) -> Self {
        ObserverPermutations {
            perms: vec![p; n.max(1)],
        }
    }

    pub fn n(&self) -> usize {
        self.perms.len()
    }

    pub fn s(&self) -> usize {
        self.perms[0].size()
    }

    pub fn perms(&self) -> &[Permutation] {
        &self.perms
    }

    /// `ρ_ν` for `1 ≤ ν ≤ n`.
    pub fn observer(&self, nu: usize) -> &Permutation {
        &self.perms[nu - 1]
    }

    pub fn is_identity(&self) -> bool {
        self.perms.iter().all(Permutation::is_identity)
    }

    pub fn inverse(&self) -> ObserverPermutations {
        ObserverPermutations {
            perms: self.perms.iter().map(Permutation::inverse).collect(),
        }
    }

    pub fn to_images(&self) -> Vec<Vec<usize>> {
        self.perms.iter().map(|p| p.images.clone()).collect()
    }

    /// Every tuple in `Per(s)^n`, observer 1 varying slowest.
    pub fn all(n: usize, s: usize) -> Vec<ObserverPermutations> {
        let per = Permutation::all(s);
        cartesian(&vec![per; n])
            .into_iter()
            .map(|perms| ObserverPermutations { perms })
            .collect()
    }
}

impl fmt::Display for ObserverPermutations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, p) in self.perms.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "]")
    }
}

fn cartesian<T: Clone>(factors: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for factor in factors {
        let mut next = Vec::with_capacity(out.len() * factor.len());
        for prefix in &out {
            for item in factor {
                let mut v = prefix.clone();
                v.push(item.clone());
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// The ordered region `D_ρ ⊂ I^{sn}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainDescriptor {
    pub n: usize,
    pub s: usize,
    pub rho: ObserverPermutations,
}

impl DomainDescriptor {
    pub fn new(rho: ObserverPermutations) -> Self {
        DomainDescriptor {
            n: rho.n(),
            s: rho.s(),
            rho,
        }
    }

    pub fn standard(n: usize, s: usize) -> Self {
        Self::new(ObserverPermutations::identity(n, s))
    }

    /// Position of `t_ν^σ` in an event-major point (both 1-based).
    pub fn coordinate(&self, sigma: usize, nu: usize) -> usize {
        (sigma - 1) * self.n + (nu - 1)
    }
}

/// The `(s, s′)`-shuffles: permutations of `s + s′` letters increasing on
/// `1..=s` and on `s+1..=s+s′`, in lexicographic order of the first block.
pub fn shuffles(s: usize, s_prime: usize) -> Vec<Permutation> {
    let total = s + s_prime;
    let mut out = Vec::new();
    let mut chosen: Vec<usize> = Vec::with_capacity(s);
    fn rec(start: usize, total: usize, s: usize, chosen: &mut Vec<usize>, out: &mut Vec<Permutation>) {
        if chosen.len() == s {
            let mut images = chosen.clone();
            images.extend((1..=total).filter(|v| !chosen.contains(v)));
            out.push(Permutation { images });
            return;
        }
        let remaining = s - chosen.len();
        for v in start..=total + 1 - remaining {
            chosen.push(v);
            rec(v + 1, total, s, chosen, out);
            chosen.pop();
        }
    }
    rec(1, total, s, &mut chosen, &mut out);
    out
}

/// The block permutation `(ρ, ρ′)` on `s + s′` letters.
pub fn block_sum(rho: &Permutation, rho_prime: &Permutation) -> Permutation {
    let s = rho.size();
    let mut images = rho.images.clone();
    images.extend(rho_prime.images.iter().map(|&v| v + s));
    Permutation { images }
}

/// Per-observer shuffle set for one observer: all `σ = (ρ, ρ′) ∘ τ⁻¹` with `τ`
/// an `(s, s′)`-shuffle. In one-line notation these are exactly the
/// interleavings of the viewing orders `(ρ(1), …, ρ(s))` and
/// `(s+ρ′(1), …, s+ρ′(s′))`.
pub fn observer_shuffles(rho: &Permutation, rho_prime: &Permutation) -> Vec<Permutation> {
    let hat = block_sum(rho, rho_prime);
    shuffles(rho.size(), rho_prime.size())
        .iter()
        .map(|tau| hat.compose(&tau.inverse()))
        .collect()
}

/// Membership test for one observer: the events of each factor keep their
/// viewing order inside `σ`, i.e. `σ⁻¹(ρ(1)) < … < σ⁻¹(ρ(s))` and
/// `σ⁻¹(s+ρ′(1)) < … < σ⁻¹(s+ρ′(s′))`.
pub fn in_observer_shuffle(sigma: &Permutation, rho: &Permutation, rho_prime: &Permutation) -> bool {
    let s = rho.size();
    if sigma.size() != s + rho_prime.size() {
        return false;
    }
    let pos = sigma.inverse();
    let first = rho.images.iter().map(|&e| pos.apply(e));
    let second = rho_prime.images.iter().map(|&e| pos.apply(s + e));
    is_increasing(first) && is_increasing(second)
}

fn is_increasing(mut it: impl Iterator<Item = usize>) -> bool {
    let Some(mut prev) = it.next() else {
        return true;
    };
    for v in it {
        if v <= prev {
            return false;
        }
        prev = v;
    }
    true
}

/// `Sh(ρ, ρ′) = ∏_ν Sh(ρ_ν, ρ′_ν)`, observer 1 varying slowest.
pub fn rho_shuffles(rho: &ObserverPermutations, rho_prime: &ObserverPermutations) -> Result<Vec<ObserverPermutations>> {
    if rho.n() != rho_prime.n() {
        return Err(Error::DimensionMismatch(format!(
            "rho has {} observers, rho_prime has {}",
            rho.n(),
            rho_prime.n()
        )));
    }
    let factors: Vec<Vec<Permutation>> = rho
        .perms
        .iter()
        .zip(&rho_prime.perms)
        .map(|(a, b)| observer_shuffles(a, b))
        .collect();
    Ok(cartesian(&factors)
        .into_iter()
        .map(|perms| ObserverPermutations { perms })
        .collect())
}

pub fn in_rho_shuffle(
    sigma: &ObserverPermutations,
    rho: &ObserverPermutations,
    rho_prime: &ObserverPermutations,
) -> bool {
    sigma.n() == rho.n()
        && rho.n() == rho_prime.n()
        && sigma
            .perms
            .iter()
            .zip(rho.perms.iter().zip(&rho_prime.perms))
            .all(|(sg, (a, b))| in_observer_shuffle(sg, a, b))
}

/// Orientation sign of the shuffle `σ ∈ Sh(ρ, ρ′)`: the product over observers
/// of the parity of the underlying `(s, s′)`-shuffle `τ_ν = σ_ν⁻¹ ∘ (ρ_ν, ρ′_ν)`.
pub fn shuffle_sign(sigma: &ObserverPermutations, rho: &ObserverPermutations, rho_prime: &ObserverPermutations) -> i8 {
    sigma
        .perms
        .iter()
        .zip(rho.perms.iter().zip(&rho_prime.perms))
        .map(|(sg, (a, b))| parity(&sg.inverse().compose(&block_sum(a, b))))
        .product()
}

/// Superscripts `(ρ_1(σ), …, ρ_n(σ))` selected by the index map `φ_{σ,ρ}`.
pub fn phi_index(sigma: usize, rho: &ObserverPermutations) -> Result<Vec<usize>> {
    if sigma == 0 || sigma > rho.s() {
        return Err(Error::OutOfRange(format!("event {sigma} outside 1..={}", rho.s())));
    }
    Ok(rho.perms.iter().map(|p| p.apply(sigma)).collect())
}

/// Whether an event-major point lies in the open region `D_ρ`.
pub fn indicator(d: &DomainDescriptor, point: &[f64]) -> Result<bool> {
    if point.len() != d.n * d.s {
        return Err(Error::DimensionMismatch(format!(
            "point has {} coordinates, expected {}",
            point.len(),
            d.n * d.s
        )));
    }
    Ok(indicator_unchecked(d, point))
}

pub(crate) fn indicator_unchecked(d: &DomainDescriptor, point: &[f64]) -> bool {
    for nu in 1..=d.n {
        let p = d.rho.observer(nu);
        let mut prev = 0.0;
        for k in 1..=d.s {
            let t = point[d.coordinate(p.apply(k), nu)];
            if t <= prev {
                return false;
            }
            prev = t;
        }
        if prev >= 1.0 {
            return false;
        }
    }
    true
}

/// Parity of the rearrangement of `dt_1^{ρ_1(1)} … dt_n^{ρ_n(1)} dt_1^{ρ_1(2)} … dt_n^{ρ_n(s)}`
/// into event-major order.
pub fn wedge_sign(rho: &ObserverPermutations) -> i8 {
    let n = rho.n();
    let seq: Vec<usize> = (1..=rho.s())
        .flat_map(|sigma| (1..=n).map(move |nu| (sigma, nu)))
        .map(|(sigma, nu)| (rho.observer(nu).apply(sigma) - 1) * n + (nu - 1))
        .collect();
    if inversion_count(&seq).is_multiple_of(2) {
        1
    } else {
        -1
    }
}
