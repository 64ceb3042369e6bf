//! Resonant normal forms: enumeration of resonant degrees, the algebra of
//! triangular resonant maps (composition, inversion, cocycle products), the
//! coefficient-band and adaptedness checks, and the derivative estimates the
//! normalization machinery guarantees.
//!
//! Composition and inversion are closed in the resonant class; that closure
//! is a structural fact (substituted monomials keep their exponent weight),
//! so the algebra is implemented over a generic coefficient ring and the
//! identities can be tested in exact rational complex arithmetic.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Coefficient ring of a resonant map.
pub trait NfScalar: Clone + PartialEq + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn inv(&self) -> Option<Self>;
    fn from_integer(n: i64) -> Self;
    fn is_zero(&self) -> bool;
    /// Approximate modulus, used by band and norm checks.
    fn modulus(&self) -> f64;
}

impl NfScalar for Complex64 {
    fn zero() -> Self {
        Complex64::default()
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn inv(&self) -> Option<Self> {
        if self.norm() < 1e-300 {
            None
        } else {
            Some(Complex64::new(1.0, 0.0) / self)
        }
    }
    fn from_integer(n: i64) -> Self {
        Complex64::new(n as f64, 0.0)
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn modulus(&self) -> f64 {
        self.norm()
    }
}

/// Exact complex numbers with rational real and imaginary parts.
pub type ExactComplex = num_complex::Complex<BigRational>;

impl NfScalar for ExactComplex {
    fn zero() -> Self {
        ExactComplex::new(BigRational::zero(), BigRational::zero())
    }
    fn one() -> Self {
        ExactComplex::new(BigRational::one(), BigRational::zero())
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn inv(&self) -> Option<Self> {
        if Zero::is_zero(self) {
            None
        } else {
            Some(<Self as NfScalar>::one() / self.clone())
        }
    }
    fn from_integer(n: i64) -> Self {
        ExactComplex::new(BigRational::from_integer(BigInt::from(n)), BigRational::zero())
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn modulus(&self) -> f64 {
        let re = self.re.to_f64().unwrap_or(f64::NAN);
        let im = self.im.to_f64().unwrap_or(f64::NAN);
        (re * re + im * im).sqrt()
    }
}

/// Exponent vector with graded lexicographic ordering.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn unit(k: usize, i: usize) -> Self {
        let mut e = vec![0; k];
        e[i] = 1;
        Monomial(e)
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

/// Sparse polynomial in k variables over the coefficient ring T.
#[derive(Clone, Debug)]
pub struct MPoly<T> {
    pub k: usize,
    pub terms: BTreeMap<Monomial, T>,
}

impl<T: NfScalar> MPoly<T> {
    pub fn zero(k: usize) -> Self {
        Self {
            k,
            terms: BTreeMap::new(),
        }
    }

    pub fn add_term(&mut self, mono: Monomial, c: T) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(mono);
        match entry {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let v = o.get().add(&c);
                if v.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = v;
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.k);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m = Monomial(ma.0.iter().zip(&mb.0).map(|(a, b)| a + b).collect());
                out.add_term(m, ca.mul(cb));
            }
        }
        out
    }

    pub fn scaled(&self, s: &T) -> Self {
        let mut out = Self::zero(self.k);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c.mul(s));
        }
        out
    }

    pub fn substitute(&self, subs: &[MPoly<T>]) -> Self {
        let mut out = Self::zero(self.k);
        for (m, c) in &self.terms {
            let mut term = MPoly::zero(self.k);
            term.add_term(Monomial(vec![0; self.k]), c.clone());
            for (v, e) in m.0.iter().enumerate() {
                for _ in 0..*e {
                    term = term.mul(&subs[v]);
                }
            }
            out = out.add(&term);
        }
        out
    }

    pub fn partial(&self, var: usize) -> Self {
        let mut out = Self::zero(self.k);
        for (m, c) in &self.terms {
            if m.0[var] > 0 {
                let mut e = m.0.clone();
                e[var] -= 1;
                out.add_term(Monomial(e), c.mul(&T::from_integer(m.0[var] as i64)));
            }
        }
        out
    }

    pub fn eval(&self, z: &[T]) -> T {
        let mut acc = T::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (v, e) in m.0.iter().enumerate() {
                for _ in 0..*e {
                    t = t.mul(&z[v]);
                }
            }
            acc = acc.add(&t);
        }
        acc
    }

    /// Largest coefficient modulus.
    pub fn coeff_norm(&self) -> f64 {
        self.terms.values().map(|c| c.modulus()).fold(0.0, f64::max)
    }
}

/// The i-resonant degree sets R_i together with their combinatorial data.
#[derive(Clone, Debug)]
pub struct ResonanceSet {
    pub k: usize,
    pub lambda: Vec<f64>,
    /// sets[i] holds R_{i+1} (0-based component index i in 0..k-1), each a
    /// graded-lex sorted list of exponent vectors of length k.
    pub sets: Vec<Vec<Vec<u32>>>,
    /// Total number of resonant degrees.
    pub delta: usize,
    /// lambda_1 / lambda_k.
    pub theta: f64,
    /// 1-based indices i with 2 lambda_k <= lambda_i.
    pub i_set: Vec<usize>,
}

impl ResonanceSet {
    pub fn contains(&self, comp: usize, alpha: &[u32]) -> bool {
        self.sets[comp].binary_search_by(|a| {
            Monomial(a.clone()).cmp(&Monomial(alpha.to_vec()))
        }).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.delta == 0
    }
}

/// All alpha in N^k with alpha_j = 0 for j < first_free and
/// 2 <= |alpha| <= max_total, in graded-lex order.
fn enumerate_alphas(k: usize, first_free: usize, max_total: u32) -> Vec<Vec<u32>> {
    fn rec(tail: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
        if pos == tail.len() {
            if tail.iter().sum::<u32>() >= 2 {
                out.push(tail.clone());
            }
            return;
        }
        for e in 0..=remaining {
            tail[pos] = e;
            rec(tail, pos + 1, remaining - e, out);
        }
        tail[pos] = 0;
    }
    let mut tails = Vec::new();
    let mut tail = vec![0u32; k - first_free];
    rec(&mut tail, 0, max_total, &mut tails);
    let mut full: Vec<Vec<u32>> = tails
        .into_iter()
        .map(|t| {
            let mut a = vec![0u32; first_free];
            a.extend(t);
            a
        })
        .collect();
    full.sort_by(|a, b| Monomial(a.clone()).cmp(&Monomial(b.clone())));
    full.dedup();
    full
}

/// Enumerate the resonant degree sets for exponents lambda_1 >= ... >=
/// lambda_k > 0, accepting the resonance equation within `eps_res`.
/// Exhaustive over |alpha| <= ceil(theta) + 1.
pub fn enumerate_resonances(lambda: &[f64], eps_res: f64) -> ResonanceSet {
    let k = lambda.len();
    assert!(k >= 1);
    assert!(lambda.windows(2).all(|w| w[0] >= w[1]) && lambda[k - 1] > 0.0);
    assert!(eps_res > 0.0 && eps_res < lambda[k - 1] / 4.0);
    let theta = lambda[0] / lambda[k - 1];
    let cap = theta.ceil() as u32 + 1;
    let mut sets = Vec::new();
    let mut delta = 0;
    for i in 0..k.saturating_sub(1) {
        // components are 0-based; alpha_1..alpha_(i+1) = 0 in 1-based terms
        let mut set = Vec::new();
        for alpha in enumerate_alphas(k, i + 1, cap) {
            let weight: f64 = alpha
                .iter()
                .zip(lambda)
                .map(|(a, l)| *a as f64 * l)
                .sum();
            if (weight - lambda[i]).abs() <= eps_res {
                set.push(alpha);
            }
        }
        delta += set.len();
        sets.push(set);
    }
    let i_set = (1..k)
        .filter(|&i| 2.0 * lambda[k - 1] <= lambda[i - 1] + 1e-12)
        .collect();
    ResonanceSet {
        k,
        lambda: lambda.to_vec(),
        sets,
        delta,
        theta,
        i_set,
    }
}

/// Exact enumeration when the exponents are logs of rationals r_i > 1 (so
/// lambda_i = log r_i): the resonance equation r_i = prod r_j^(alpha_j) is
/// decided in exact rational arithmetic.
pub fn enumerate_resonances_exact(ratios: &[BigRational]) -> ResonanceSet {
    let k = ratios.len();
    let lambda: Vec<f64> = ratios
        .iter()
        .map(|r| r.to_f64().expect("ratio fits in f64").ln())
        .collect();
    assert!(lambda.windows(2).all(|w| w[0] >= w[1]) && lambda[k - 1] > 0.0);
    let theta = lambda[0] / lambda[k - 1];
    let cap = theta.ceil() as u32 + 1;
    let mut sets = Vec::new();
    let mut delta = 0;
    for i in 0..k.saturating_sub(1) {
        let mut set = Vec::new();
        for alpha in enumerate_alphas(k, i + 1, cap) {
            let mut prod = BigRational::one();
            for (a, r) in alpha.iter().zip(ratios) {
                for _ in 0..*a {
                    prod *= r;
                }
            }
            if prod == ratios[i] {
                set.push(alpha);
            }
        }
        delta += set.len();
        sets.push(set);
    }
    let two_lk = ratios[k - 1].clone() * ratios[k - 1].clone();
    let i_set = (1..k).filter(|&i| two_lk <= ratios[i - 1]).collect();
    ResonanceSet {
        k,
        lambda,
        sets,
        delta,
        theta,
        i_set,
    }
}

/// A triangular resonant map A + N: diagonal linear part and a normal part
/// supported on the resonant degrees, last component linear.
#[derive(Clone, Debug, PartialEq)]
pub struct ResonantMap<T> {
    pub k: usize,
    pub diag: Vec<T>,
    /// normal[i] lists (alpha, coefficient) for component i; the last
    /// component has none.
    pub normal: Vec<Vec<(Vec<u32>, T)>>,
}

impl<T: NfScalar> ResonantMap<T> {
    pub fn linear(diag: Vec<T>) -> Self {
        let k = diag.len();
        Self {
            k,
            diag,
            normal: vec![Vec::new(); k],
        }
    }

    pub fn identity(k: usize) -> Self {
        Self::linear(vec![T::one(); k])
    }

    pub fn new(diag: Vec<T>, normal: Vec<Vec<(Vec<u32>, T)>>, res: &ResonanceSet) -> Result<Self> {
        let k = diag.len();
        assert_eq!(normal.len(), k);
        for (i, terms) in normal.iter().enumerate() {
            for (alpha, _) in terms {
                let ok = i < k - 1 && res.contains(i, alpha);
                if !ok {
                    return Err(Error::Parse(format!(
                        "monomial {alpha:?} is not {}-resonant",
                        i + 1
                    )));
                }
            }
        }
        let mut map = Self { k, diag, normal };
        map.sort_normal();
        Ok(map)
    }

    fn sort_normal(&mut self) {
        for terms in &mut self.normal {
            terms.sort_by(|a, b| Monomial(a.0.clone()).cmp(&Monomial(b.0.clone())));
        }
    }

    pub fn is_identity(&self) -> bool {
        self.diag.iter().all(|a| a.sub(&T::one()).is_zero())
            && self.normal.iter().all(|n| n.is_empty())
    }

    /// Component i as a sparse polynomial.
    pub fn component(&self, i: usize) -> MPoly<T> {
        let mut p = MPoly::zero(self.k);
        p.add_term(Monomial::unit(self.k, i), self.diag[i].clone());
        for (alpha, c) in &self.normal[i] {
            p.add_term(Monomial(alpha.clone()), c.clone());
        }
        p
    }

    pub fn components(&self) -> Vec<MPoly<T>> {
        (0..self.k).map(|i| self.component(i)).collect()
    }

    /// Max coefficient modulus of the normal part of component i.
    pub fn normal_norm(&self, i: usize) -> f64 {
        self.normal[i]
            .iter()
            .map(|(_, c)| c.modulus())
            .fold(0.0, f64::max)
    }

    pub fn eval(&self, z: &[T]) -> Vec<T> {
        (0..self.k).map(|i| self.component(i).eval(z)).collect()
    }
}

/// Classify the terms of polynomial components back into a resonant map;
/// any monomial that is neither the matching diagonal nor i-resonant is a
/// closure violation.
fn classify<T: NfScalar>(comps: Vec<MPoly<T>>, res: &ResonanceSet) -> Result<ResonantMap<T>> {
    let k = comps.len();
    let mut diag = vec![T::zero(); k];
    let mut normal = vec![Vec::new(); k];
    for (i, comp) in comps.into_iter().enumerate() {
        for (mono, c) in comp.terms {
            if mono.total_degree() == 1 && mono.0[i] == 1 {
                diag[i] = c;
            } else if i < k - 1 && res.contains(i, &mono.0) {
                normal[i].push((mono.0, c));
            } else if !c.is_zero() {
                return Err(Error::ClosureViolation(format!(
                    "component {}: {:?}",
                    i + 1,
                    mono.0
                )));
            }
        }
    }
    let mut map = ResonantMap { k, diag, normal };
    map.sort_normal();
    Ok(map)
}

/// Exact composition r1 after r2, truncated to nothing: the resonant class
/// is closed, so any surviving non-resonant monomial is reported as a bug.
pub fn compose_resonant<T: NfScalar>(
    r1: &ResonantMap<T>,
    r2: &ResonantMap<T>,
    res: &ResonanceSet,
) -> Result<ResonantMap<T>> {
    let subs = r2.components();
    let comps: Vec<MPoly<T>> = (0..r1.k)
        .map(|i| r1.component(i).substitute(&subs))
        .collect();
    classify(comps, res)
}

/// Exact inverse by back-substitution in triangular order (last variable
/// first). compose_resonant(r, invert_resonant(r)) is the identity,
/// coefficient for coefficient.
pub fn invert_resonant<T: NfScalar>(
    r: &ResonantMap<T>,
    res: &ResonanceSet,
) -> Result<ResonantMap<T>> {
    let k = r.k;
    let mut inv_comps: Vec<MPoly<T>> = vec![MPoly::zero(k); k];
    for i in (0..k).rev() {
        let ai_inv = r.diag[i].inv().ok_or(Error::SingularDiagonal)?;
        // z_i = (w_i - N_i(z_{i+1..k})) / a_i, with the later z_j already
        // expressed in w.
        let mut n_of_z = MPoly::zero(k);
        for (alpha, c) in &r.normal[i] {
            let mut term = MPoly::zero(k);
            term.add_term(Monomial(vec![0; k]), c.clone());
            for (j, e) in alpha.iter().enumerate() {
                for _ in 0..*e {
                    term = term.mul(&inv_comps[j]);
                }
            }
            n_of_z = n_of_z.add(&term);
        }
        let mut zi = MPoly::zero(k);
        zi.add_term(Monomial::unit(k, i), T::one());
        zi = zi.add(&n_of_z.scaled(&T::from_integer(-1)));
        inv_comps[i] = zi.scaled(&ai_inv);
    }
    classify(inv_comps, res)
}

/// A finite resonant cocycle: per-step maps sharing one resonance structure,
/// a band width epsilon and an adaptedness constant M.
#[derive(Clone, Debug)]
pub struct CocycleSpec {
    pub steps: Vec<ResonantMap<Complex64>>,
    pub res: ResonanceSet,
    pub epsilon: f64,
    pub m_const: f64,
}

impl CocycleSpec {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Ordered composition of the first n step maps (step 0 applied first).
/// Every prefix diagonal must stay inside the band
/// [e^(-m lambda_i - m eps), e^(-m lambda_i + m eps)].
pub fn cocycle_product(spec: &CocycleSpec, n: usize) -> Result<ResonantMap<Complex64>> {
    assert!(n >= 1 && n <= spec.len());
    let mut prod = spec.steps[0].clone();
    check_band(&prod, &spec.res, spec.epsilon, 1)?;
    for m in 1..n {
        prod = compose_resonant(&spec.steps[m], &prod, &spec.res)?;
        check_band(&prod, &spec.res, spec.epsilon, m + 1)?;
    }
    Ok(prod)
}

fn check_band(
    map: &ResonantMap<Complex64>,
    res: &ResonanceSet,
    eps: f64,
    m: usize,
) -> Result<()> {
    let slack = 1.0 + 1e-9;
    for (i, a) in map.diag.iter().enumerate() {
        let lo = (-(m as f64) * (res.lambda[i] + eps)).exp();
        let hi = (-(m as f64) * (res.lambda[i] - eps)).exp();
        let v = a.norm();
        if v < lo / slack || v > hi * slack {
            return Err(Error::BandViolation { step: m, index: i });
        }
    }
    Ok(())
}

/// Definition of adaptedness: for every n (both signs), the composed normal
/// norms obey ||N_{i,n}|| <= M e^(-n lambda_i + |n| eps).
pub fn adaptedness_check(spec: &CocycleSpec) -> Result<()> {
    let slack = 1.0 + 1e-9;
    for n in 1..=spec.len() {
        let prod = cocycle_product(spec, n)?;
        let inv = invert_resonant(&prod, &spec.res)?;
        for i in 0..spec.res.k.saturating_sub(1) {
            let nf = n as f64;
            let fwd_bound = spec.m_const * (-nf * spec.res.lambda[i] + nf * spec.epsilon).exp();
            if prod.normal_norm(i) > fwd_bound * slack {
                return Err(Error::AdaptednessFailure { step: n, index: i });
            }
            let bwd_bound = spec.m_const * (nf * spec.res.lambda[i] + nf * spec.epsilon).exp();
            if inv.normal_norm(i) > bwd_bound * slack {
                return Err(Error::AdaptednessFailure { step: n, index: i });
            }
        }
    }
    Ok(())
}

/// Four derivative/inclusion estimates for an adapted cocycle at time n,
/// sampled at low-discrepancy points of the unit polydisc.
#[derive(Clone, Copy, Debug)]
pub struct CocycleEstimates {
    pub ok: [bool; 4],
    /// Tightest slack observed per item (bound minus value; negative means a
    /// violation).
    pub margins: [f64; 4],
}

impl CocycleEstimates {
    pub fn all_ok(&self) -> bool {
        self.ok.iter().all(|b| *b)
    }
}

fn halton(index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Low-discrepancy point of the polydisc D^k(r): per complex coordinate,
/// area-uniform disc mapping of a Halton pair.
fn halton_polydisc(index: u64, k: usize, r: f64) -> Vec<Complex64> {
    const BASES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    (0..k)
        .map(|j| {
            let u = halton(index + 1, BASES[2 * j]);
            let v = halton(index + 1, BASES[2 * j + 1]);
            Complex64::from_polar(r * u.sqrt(), std::f64::consts::TAU * v)
        })
        .collect()
}

pub fn cocycle_estimates_check(
    spec: &CocycleSpec,
    n: usize,
    samples: usize,
) -> Result<CocycleEstimates> {
    adaptedness_check(spec)?;
    let res = &spec.res;
    let k = res.k;
    let nf = n as f64;
    let eps = spec.epsilon;
    let theta = res.theta;
    let m_prime = [res.delta as f64 + 1.0, theta, theta * (theta - 1.0)]
        .into_iter()
        .fold(1.0f64, f64::max)
        * spec.m_const;

    let rn = cocycle_product(spec, n)?;
    let rn_inv = invert_resonant(&rn, res)?;
    let comps = rn.components();
    let d_zk: Vec<MPoly<Complex64>> = comps.iter().map(|c| c.partial(k - 1)).collect();
    let d2_zk: Vec<MPoly<Complex64>> = d_zk.iter().map(|c| c.partial(k - 1)).collect();
    let jac: Vec<Vec<MPoly<Complex64>>> = comps
        .iter()
        .map(|c| (0..k).map(|v| c.partial(v)).collect())
        .collect();

    let r = 1.0;
    let out_bound = m_prime * (-nf * res.lambda[k - 1] + nf * eps).exp() * r;
    let in_radius = (-nf * res.lambda[0] - nf * eps).exp() / m_prime * r;
    let lam_km1 = if k >= 2 { res.lambda[k - 2] } else { res.lambda[0] };
    let item2_bound = m_prime * (-nf * lam_km1 + nf * eps).exp();
    let item3_lower = (-nf * res.lambda[k - 1] - nf * eps).exp();
    let item3_upper = if k >= 2 {
        item2_bound.max((-nf * res.lambda[k - 1] + nf * eps).exp())
    } else {
        (-nf * res.lambda[k - 1] + nf * eps).exp()
    };
    let item4_bound = m_prime * (-2.0 * nf * res.lambda[k - 1] + nf * eps).exp();

    let mut margins = [f64::INFINITY; 4];
    for s in 0..samples as u64 {
        let z = halton_polydisc(s, k, r);
        // item 1, outer inclusion
        let img = rn.eval(&z);
        let img_norm = img.iter().map(|c| c.norm()).fold(0.0, f64::max);
        margins[0] = margins[0].min(out_bound - img_norm);
        // item 1, inner inclusion via the inverse
        let w = halton_polydisc(s, k, in_radius);
        let pre = rn_inv.eval(&w);
        let pre_norm = pre.iter().map(|c| c.norm()).fold(0.0, f64::max);
        margins[0] = margins[0].min(r - pre_norm);
        // item 2: rows 1..k-1 of the Jacobian
        if k >= 2 {
            let mut worst = 0.0f64;
            for row in jac.iter().take(k - 1) {
                for entry in row {
                    worst = worst.max(entry.eval(&z).norm());
                }
            }
            margins[1] = margins[1].min(item2_bound - worst);
        }
        // item 3: last-variable derivative column
        let col: Vec<f64> = d_zk.iter().map(|p| p.eval(&z).norm()).collect();
        margins[2] = margins[2]
            .min(col[k - 1] - item3_lower)
            .min(item3_upper - col.iter().fold(0.0f64, |a, b| a.max(*b)));
        // item 4: second derivative in the last variable
        let worst2 = d2_zk
            .iter()
            .map(|p| p.eval(&z).norm())
            .fold(0.0f64, f64::max);
        margins[3] = margins[3].min(item4_bound - worst2);
    }
    let tol = -1e-12;
    Ok(CocycleEstimates {
        ok: [
            margins[0] >= tol,
            margins[1] >= tol,
            margins[2] >= tol,
            margins[3] >= tol,
        ],
        margins,
    })
}

/// floor(n lambda_k / lambda_1): the fractional time at which the slowest
/// contraction catches up with the fastest.
pub fn fractional_time(n: u64, lambda1: f64, lambdak: f64) -> u64 {
    assert!(lambda1 > 0.0 && lambdak > 0.0 && lambdak <= lambda1);
    (n as f64 * lambdak / lambda1).floor() as u64
}

/// Serialize a resonant map as `a_i = re,im; c_i[alpha] = re,im; ...`.
pub fn to_text(map: &ResonantMap<Complex64>) -> String {
    let mut parts = Vec::new();
    for i in 0..map.k {
        parts.push(format!("a_{} = {},{}", i + 1, map.diag[i].re, map.diag[i].im));
        for (alpha, c) in &map.normal[i] {
            let idx: Vec<String> = alpha.iter().map(|e| e.to_string()).collect();
            parts.push(format!("c_{}[{}] = {},{}", i + 1, idx.join(","), c.re, c.im));
        }
    }
    parts.join("; ")
}

/// Parse the serialization produced by [`to_text`].
pub fn from_text(text: &str, res: &ResonanceSet) -> Result<ResonantMap<Complex64>> {
    let k = res.k;
    let mut diag = vec![Complex64::default(); k];
    let mut normal = vec![Vec::new(); k];
    for part in text.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (lhs, rhs) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected '=' in '{part}'")))?;
        let rhs = rhs.trim();
        let (re, im) = rhs
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("expected 're,im' in '{rhs}'")))?;
        let c = Complex64::new(
            re.trim().parse().map_err(|_| Error::Parse(format!("bad float '{re}'")))?,
            im.trim().parse().map_err(|_| Error::Parse(format!("bad float '{im}'")))?,
        );
        let lhs = lhs.trim();
        if let Some(rest) = lhs.strip_prefix("a_") {
            let i: usize = rest
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad index '{rest}'")))?;
            diag[i - 1] = c;
        } else if let Some(rest) = lhs.strip_prefix("c_") {
            let (i_str, idx_str) = rest
                .split_once('[')
                .ok_or_else(|| Error::Parse(format!("expected '[' in '{lhs}'")))?;
            let i: usize = i_str
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad index '{i_str}'")))?;
            let idx_str = idx_str
                .trim()
                .strip_suffix(']')
                .ok_or_else(|| Error::Parse(format!("expected ']' in '{lhs}'")))?;
            let alpha: Vec<u32> = idx_str
                .split(',')
                .map(|e| {
                    e.trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad exponent '{e}'")))
                })
                .collect::<Result<_>>()?;
            normal[i - 1].push((alpha, c));
        } else {
            return Err(Error::Parse(format!("unknown entry '{lhs}'")));
        }
    }
    ResonantMap::new(diag, normal, res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const LOG2: f64 = std::f64::consts::LN_2;

    fn res_42() -> ResonanceSet {
        enumerate_resonances(&[2.0 * LOG2, LOG2], 1e-9)
    }

    pub(crate) fn random_resonant(
        res: &ResonanceSet,
        eps: f64,
        c_max: f64,
        rng: &mut impl Rng,
    ) -> ResonantMap<Complex64> {
        let k = res.k;
        let diag: Vec<Complex64> = (0..k)
            .map(|i| {
                let band = rng.gen_range(-1.0..1.0) * eps;
                Complex64::from_polar(
                    (-res.lambda[i] + band).exp(),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let mut normal = vec![Vec::new(); k];
        for i in 0..k.saturating_sub(1) {
            for alpha in &res.sets[i] {
                let c = Complex64::from_polar(
                    rng.gen_range(0.0..c_max) * (-res.lambda[i]).exp(),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                );
                normal[i].push((alpha.clone(), c));
            }
        }
        ResonantMap::new(diag, normal, res).unwrap()
    }

    #[test]
    fn resonance_enumeration_examples() {
        // lambda = (log 4, log 2): R_1 = {(0,2)}
        let r = res_42();
        assert_eq!(r.sets[0], vec![vec![0, 2]]);
        assert_eq!(r.delta, 1);
        assert!((r.theta - 2.0).abs() < 1e-12);
        assert_eq!(r.i_set, vec![1]);

        // lambda = (log 3, log 2): empty
        let r = enumerate_resonances(&[(3.0f64).ln(), LOG2], 1e-9);
        assert!(r.sets[0].is_empty());
        assert_eq!(r.delta, 0);

        // ratio < 2: I empty forces emptiness
        let r = enumerate_resonances(&[1.0, 0.9], 1e-9);
        assert!(r.i_set.is_empty());
        assert!(r.is_empty());
    }

    #[test]
    fn exact_enumeration_matches_float() {
        let ratios = vec![
            BigRational::from_integer(4.into()),
            BigRational::from_integer(2.into()),
        ];
        let exact = enumerate_resonances_exact(&ratios);
        let float = res_42();
        assert_eq!(exact.sets, float.sets);
        assert_eq!(exact.i_set, float.i_set);

        // three exponents log 8 >= log 4 >= log 2: R_1 = {(0,1,1),(0,0,3)},
        // R_2 = {(0,0,2)}
        let ratios = vec![
            BigRational::from_integer(8.into()),
            BigRational::from_integer(4.into()),
            BigRational::from_integer(2.into()),
        ];
        let r = enumerate_resonances_exact(&ratios);
        assert_eq!(r.sets[0], vec![vec![0, 1, 1], vec![0, 0, 3]]);
        assert_eq!(r.sets[1], vec![vec![0, 0, 2]]);
        assert_eq!(r.delta, 3);
    }

    #[test]
    fn resonance_invariants() {
        let r = enumerate_resonances(&[(6.0f64).ln(), (3.0f64).ln(), LOG2], 1e-9);
        for (i, set) in r.sets.iter().enumerate() {
            for alpha in set {
                let total: u32 = alpha.iter().sum();
                assert!(total >= 2);
                assert!(alpha[..=i].iter().all(|e| *e == 0));
                assert!((total as f64) <= r.theta + 1e-9);
                let weight: f64 = alpha.iter().zip(&r.lambda).map(|(a, l)| *a as f64 * l).sum();
                assert!((weight - r.lambda[i]).abs() <= 1e-9);
            }
            if !set.is_empty() {
                assert!(r.i_set.contains(&(i + 1)));
            }
        }
    }

    fn exact_map_42(c1: (i64, i64)) -> (ResonantMap<ExactComplex>, ResonanceSet) {
        let ratios = vec![
            BigRational::from_integer(4.into()),
            BigRational::from_integer(2.into()),
        ];
        let res = enumerate_resonances_exact(&ratios);
        let q = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        let diag = vec![
            ExactComplex::new(q(1, 4), q(0, 1)),
            ExactComplex::new(q(1, 2), q(0, 1)),
        ];
        let normal = vec![
            vec![(vec![0, 2], ExactComplex::new(q(c1.0, 8), q(c1.1, 8)))],
            vec![],
        ];
        (ResonantMap::new(diag, normal, &res).unwrap(), res)
    }

    #[test]
    fn hand_composition_oracle() {
        // R1 = (a z1 + c z2^2, b z2), R2 = (a' z1 + c' z2^2, b' z2):
        // (R1 o R2)_1 = a a' z1 + (a c' + c b'^2) z2^2
        let res = res_42();
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let mk = |a: Complex64, cc: Complex64, b: Complex64| {
            ResonantMap::new(
                vec![a, b],
                vec![vec![(vec![0, 2], cc)], vec![]],
                &res,
            )
            .unwrap()
        };
        let r1 = mk(c(0.25, 0.1), c(0.03, -0.02), c(0.5, 0.0));
        let r2 = mk(c(0.24, -0.05), c(-0.01, 0.04), c(0.45, 0.15));
        let comp = compose_resonant(&r1, &r2, &res).unwrap();
        let (a, cc, b) = (r1.diag[0], r1.normal[0][0].1, r1.diag[1]);
        let (a2, cc2, b2) = (r2.diag[0], r2.normal[0][0].1, r2.diag[1]);
        assert!((comp.diag[0] - a * a2).norm() < 1e-15);
        assert!((comp.diag[1] - b * b2).norm() < 1e-15);
        let expected = a * cc2 + cc * b2 * b2;
        assert!((comp.normal[0][0].1 - expected).norm() < 1e-15);
    }

    #[test]
    fn composition_with_identity() {
        let res = res_42();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = random_resonant(&res, 0.01, 0.3, &mut rng);
        let id = ResonantMap::identity(2);
        let left = compose_resonant(&id, &r, &res).unwrap();
        let right = compose_resonant(&r, &id, &res).unwrap();
        assert_eq!(left, r);
        assert_eq!(right, r);
    }

    #[test]
    fn hand_inverse_oracle() {
        // R = (a z1 + c z2^2, b z2): R^{-1} = (z1/a - c/(a b^2) z2^2, z2/b)
        let (r, res) = exact_map_42((3, -2));
        let inv = invert_resonant(&r, &res).unwrap();
        let a = &r.diag[0];
        let b = &r.diag[1];
        let c = &r.normal[0][0].1;
        let nf_inv = |x: &ExactComplex| NfScalar::inv(x).unwrap();
        let zero = |x: &ExactComplex| NfScalar::is_zero(x);
        assert!(zero(&inv.diag[0].sub(&nf_inv(a))));
        assert!(zero(&inv.diag[1].sub(&nf_inv(b))));
        let expected = c
            .mul(&nf_inv(a))
            .mul(&nf_inv(&b.mul(b)))
            .mul(&ExactComplex::from_integer(-1));
        assert!(zero(&inv.normal[0][0].1.sub(&expected)));
        // and the exact inverse law
        let comp = compose_resonant(&r, &inv, &res).unwrap();
        assert!(comp.is_identity());
        let comp = compose_resonant(&inv, &r, &res).unwrap();
        assert!(comp.is_identity());
    }

    #[test]
    fn closure_and_associativity_random_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ratios = vec![
            BigRational::from_integer(4.into()),
            BigRational::from_integer(2.into()),
        ];
        let res = enumerate_resonances_exact(&ratios);
        let rand_exact = |rng: &mut ChaCha8Rng| {
            let q = |rng: &mut ChaCha8Rng| {
                BigRational::new(rng.gen_range(-8i64..8).into(), rng.gen_range(1i64..9).into())
            };
            let nonzero_q = |rng: &mut ChaCha8Rng| {
                BigRational::new(rng.gen_range(1i64..8).into(), rng.gen_range(1i64..9).into())
            };
            let diag = vec![
                ExactComplex::new(nonzero_q(rng), q(rng)),
                ExactComplex::new(nonzero_q(rng), q(rng)),
            ];
            let normal = vec![
                vec![(vec![0u32, 2], ExactComplex::new(q(rng), q(rng)))],
                vec![],
            ];
            ResonantMap::new(diag, normal, &res).unwrap()
        };
        for _ in 0..200 {
            let r1 = rand_exact(&mut rng);
            let r2 = rand_exact(&mut rng);
            let r3 = rand_exact(&mut rng);
            // closure holds exactly (no ClosureViolation) and is associative
            let ab = compose_resonant(&r1, &r2, &res).unwrap();
            let bc = compose_resonant(&r2, &r3, &res).unwrap();
            let left = compose_resonant(&ab, &r3, &res).unwrap();
            let right = compose_resonant(&r1, &bc, &res).unwrap();
            assert_eq!(left, right);
            // exact inverse round trip
            let inv = invert_resonant(&r1, &res).unwrap();
            assert!(compose_resonant(&r1, &inv, &res).unwrap().is_identity());
        }
    }

    #[test]
    fn cocycle_bands_and_inverse_law() {
        let res = res_42();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eps = 0.01;
        let steps: Vec<ResonantMap<Complex64>> =
            (0..6).map(|_| random_resonant(&res, eps, 0.2, &mut rng)).collect();
        let spec = CocycleSpec {
            steps: steps.clone(),
            res: res.clone(),
            epsilon: eps,
            m_const: 4.0,
        };
        for n in 1..=6 {
            let prod = cocycle_product(&spec, n).unwrap();
            for i in 0..2 {
                let v = prod.diag[i].norm();
                let nf = n as f64;
                assert!(v >= (-(nf) * (res.lambda[i] + eps)).exp() * (1.0 - 1e-9));
                assert!(v <= (-(nf) * (res.lambda[i] - eps)).exp() * (1.0 + 1e-9));
            }
            // inverse of the product equals reversed composition of inverses
            let inv = invert_resonant(&prod, &res).unwrap();
            let mut alt = invert_resonant(&steps[0], &res).unwrap();
            for step in steps.iter().take(n).skip(1) {
                let si = invert_resonant(step, &res).unwrap();
                alt = compose_resonant(&alt, &si, &res).unwrap();
            }
            let close = |x: &Complex64, y: &Complex64| (x - y).norm() < 1e-9 * x.norm().max(1.0);
            let diff_ok = inv.diag.iter().zip(&alt.diag).all(|(x, y)| close(x, y))
                && inv.normal[0]
                    .iter()
                    .zip(&alt.normal[0])
                    .all(|((ia, ic), (ja, jc))| ia == ja && close(ic, jc));
            assert!(diff_ok, "inverse law failed at n={n}");
        }
    }

    #[test]
    fn fixed_linear_cocycle_powers() {
        let res = res_42();
        let a = ResonantMap::linear(vec![
            Complex64::new(0.25, 0.0),
            Complex64::new(0.5, 0.0),
        ]);
        let spec = CocycleSpec {
            steps: vec![a; 5],
            res,
            epsilon: 1e-6,
            m_const: 1.0,
        };
        let p = cocycle_product(&spec, 5).unwrap();
        assert!((p.diag[0].norm() - 0.25f64.powi(5)).abs() < 1e-15);
        assert!((p.diag[1].norm() - 0.5f64.powi(5)).abs() < 1e-15);
        assert_eq!(cocycle_product(&spec, 1).unwrap(), spec_step(&spec));
    }

    fn spec_step(spec: &CocycleSpec) -> ResonantMap<Complex64> {
        spec.steps[0].clone()
    }

    #[test]
    fn inflated_coefficients_fail_adaptedness() {
        let res = res_42();
        let diag = vec![Complex64::new(0.25, 0.0), Complex64::new(0.5, 0.0)];
        let normal = vec![(vec![0u32, 2], Complex64::new(50.0, 0.0))];
        let bad = ResonantMap::new(diag, vec![normal, vec![]], &res).unwrap();
        let spec = CocycleSpec {
            steps: vec![bad; 3],
            res,
            epsilon: 0.01,
            m_const: 1.0,
        };
        assert!(matches!(
            adaptedness_check(&spec),
            Err(Error::AdaptednessFailure { .. })
        ));
        assert!(matches!(
            cocycle_estimates_check(&spec, 2, 10),
            Err(Error::AdaptednessFailure { .. })
        ));
    }

    #[test]
    fn estimates_hold_for_linear_cocycle() {
        let res = res_42();
        let a = ResonantMap::linear(vec![
            Complex64::new(0.25, 0.1),
            Complex64::new(0.45, -0.1),
        ]);
        let spec = CocycleSpec {
            steps: vec![a; 5],
            res,
            epsilon: 0.22,
            m_const: 1.0,
        };
        let rep = cocycle_estimates_check(&spec, 5, 200).unwrap();
        assert!(rep.all_ok(), "margins {:?}", rep.margins);
        // linear: items 2 and 4 have slack equal to the full bound
        assert!(rep.margins[3] > 0.0);
    }

    #[test]
    fn estimates_hold_for_random_adapted_cocycles() {
        let res = res_42();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..20 {
            let eps = 0.01;
            let steps: Vec<ResonantMap<Complex64>> =
                (0..5).map(|_| random_resonant(&res, eps, 0.15, &mut rng)).collect();
            let spec = CocycleSpec {
                steps,
                res: res.clone(),
                epsilon: eps,
                m_const: 4.0,
            };
            let rep = cocycle_estimates_check(&spec, 5, 300).unwrap();
            assert!(rep.all_ok(), "trial {trial}: margins {:?}", rep.margins);
        }
    }

    #[test]
    fn fractional_time_examples() {
        assert_eq!(fractional_time(10, 2.0 * LOG2, LOG2), 5);
        assert_eq!(fractional_time(0, 2.0 * LOG2, LOG2), 0);
        assert_eq!(fractional_time(7, 1.0, 0.3), 2);
    }

    #[test]
    fn fractional_time_bracket() {
        // lambda_k n / lambda_1 - 1 < q_n <= lambda_k n / lambda_1, monotone in n
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..1000 {
            let l1: f64 = rng.gen_range(0.1..3.0);
            let lk = l1 * rng.gen_range(0.01..1.0);
            let n = rng.gen_range(0u64..1000);
            let q = fractional_time(n, l1, lk) as f64;
            let x = n as f64 * lk / l1;
            assert!(q <= x + 1e-9);
            assert!(q > x - 1.0 - 1e-9);
            assert!(fractional_time(n + 1, l1, lk) >= fractional_time(n, l1, lk));
        }
    }

    #[test]
    fn serialization_round_trip() {
        let res = res_42();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = random_resonant(&res, 0.01, 0.3, &mut rng);
        let text = to_text(&r);
        let back = from_text(&text, &res).unwrap();
        for (a, b) in r.diag.iter().zip(&back.diag) {
            assert!((a - b).norm() < 1e-15);
        }
        for ((ia, ic), (ja, jc)) in r.normal[0].iter().zip(&back.normal[0]) {
            assert_eq!(ia, ja);
            assert!((ic - jc).norm() < 1e-15);
        }
    }
}
