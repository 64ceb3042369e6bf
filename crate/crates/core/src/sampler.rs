//! Equilibrium-measure sampling by random inverse iteration.
//!
//! The equilibrium measure is approximated by pulling back a point mass along
//! uniformly random preimage branches. Preimage fibers are solved exactly for
//! rational maps on CP^1 and for skew products / products on CP^2 (staged
//! univariate solves); general CP^2 maps are refused.

use std::io::Write;

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hompoly::HomPoly;
use crate::map::{Family, ProjectiveMap};
use crate::projective::{fs_distance, HomogeneousPoint};
use crate::roots::UniPoly;

/// Chordal residual each polished preimage must satisfy.
const RESIDUAL_TOL: f64 = 1e-9;
/// Preimages closer than this are treated as a coalesced (near-critical) fiber.
const SEPARATION_TOL: f64 = 1e-7;
/// Stream attempts per walk slot before giving up on the seed point.
const MAX_WALK_ATTEMPTS: u64 = 8;
/// Branch redraws within one walk before the walk aborts.
const MAX_WALK_RETRIES: usize = 64;

/// Recommended minimum pullback depth before samples are representative.
pub const BURN_IN_DEPTH: usize = 20;

fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Weighted sample cloud standing in for an invariant measure.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure {
    points: Vec<HomogeneousPoint>,
    weights: Vec<f64>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
pub struct Provenance {
    pub seed_point: HomogeneousPoint,
    pub depth: usize,
    pub rng_seed: u64,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<HomogeneousPoint>, weights: Vec<f64>, provenance: Provenance) -> Self {
        debug_assert_eq!(points.len(), weights.len());
        debug_assert!((kahan_sum(&weights) - 1.0).abs() < 1e-12);
        Self {
            points,
            weights,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[HomogeneousPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total weight within chordal distance `r` of `x`.
    pub fn ball_mass(&self, x: &HomogeneousPoint, r: f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| fs_distance(p, x) < r)
            .map(|(_, w)| w)
            .sum()
    }

    /// Image cloud under f (weights preserved).
    pub fn pushforward(&self, f: &ProjectiveMap) -> Result<EmpiricalMeasure> {
        let points = self
            .points
            .iter()
            .map(|p| f.evaluate(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(EmpiricalMeasure::new(
            points,
            self.weights.clone(),
            self.provenance.clone(),
        ))
    }

    /// CSV export: `re_0,im_0,...,re_k,im_k,weight`, one normalized point per
    /// row.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let k = self.points.first().map(|p| p.k()).unwrap_or(1);
        let mut header = String::new();
        for i in 0..=k {
            header.push_str(&format!("re_{i},im_{i},"));
        }
        header.push_str("weight");
        writeln!(out, "{header}")?;
        for (p, w) in self.points.iter().zip(&self.weights) {
            let mut row = String::new();
            for z in p.coords() {
                row.push_str(&format!("{},{},", z.re, z.im));
            }
            row.push_str(&format!("{w}"));
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

/// Preimage fiber of a point: d^k points with multiplicities and per-point
/// chordal residuals |f(x) - y|.
#[derive(Clone, Debug)]
pub struct PreimageSet {
    pub points: Vec<(HomogeneousPoint, usize)>,
    pub residuals: Vec<f64>,
}

impl PreimageSet {
    pub fn total_multiplicity(&self) -> usize {
        self.points.iter().map(|(_, m)| m).sum()
    }
}

/// View a homogeneous polynomial in the two variables (vi, vj) as a
/// univariate polynomial in x = z_vi after setting z_vj = 1.
pub fn binary_form_to_unipoly(poly: &HomPoly, vi: usize, vj: usize) -> UniPoly {
    let d = poly.degree() as usize;
    let mut coeffs = vec![Complex64::default(); d + 1];
    for (idx, c) in poly.terms() {
        debug_assert_eq!((idx[vi] + idx[vj]) as usize, d, "form must be binary in (vi, vj)");
        coeffs[idx[vi] as usize] += c;
    }
    UniPoly::new(coeffs)
}

/// Projective roots of a binary form, as normalized coordinate pairs
/// (z_vi, z_vj). Roots at [1 : 0] come from the degree drop of the
/// dehomogenization; large finite roots are polished in the flipped chart.
fn binary_roots(form: &UniPoly, nominal_degree: usize) -> Vec<(Complex64, Complex64)> {
    let one = Complex64::new(1.0, 0.0);
    let eff = form.effective_degree(1e-12);
    let flipped = UniPoly::new(form.coeffs.iter().rev().cloned().collect());
    let mut out = Vec::with_capacity(nominal_degree);
    for r in form.roots() {
        if r.norm() <= 1.0 {
            out.push((r, one));
        } else {
            let w = flipped.polish(1.0 / r);
            out.push((one, w));
        }
    }
    for _ in eff..nominal_degree {
        out.push((one, Complex64::default()));
    }
    out
}

fn check_separation(points: &[HomogeneousPoint]) -> Result<()> {
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if fs_distance(&points[i], &points[j]) < SEPARATION_TOL {
                return Err(Error::DegenerateFiber);
            }
        }
    }
    Ok(())
}

/// Coefficients of component `comp` of `f` as a univariate polynomial in z1,
/// with (z0, z2) frozen at the given base values.
fn fiber_polynomial(f: &ProjectiveMap, base0: Complex64, base2: Complex64) -> UniPoly {
    let d = f.degree() as usize;
    let mut coeffs = vec![Complex64::default(); d + 1];
    for (idx, c) in f.components()[1].terms() {
        let term = c * base0.powu(idx[0] as u32) * base2.powu(idx[2] as u32);
        coeffs[idx[1] as usize] += term;
    }
    UniPoly::new(coeffs)
}

fn solve_fiber_roots(f: &ProjectiveMap, y: &HomogeneousPoint) -> Result<Vec<(Complex64, Complex64)>> {
    let yc = y.coords();
    if yc[0].norm().max(yc[2].norm()) < 1e-8 {
        // y at the totally invariant fiber point [0:1:0]
        return Err(Error::DegenerateFiber);
    }
    let base_form = {
        let p0 = binary_form_to_unipoly(&f.components()[0], 0, 2);
        let p2 = binary_form_to_unipoly(&f.components()[2], 0, 2);
        p0.scaled(yc[2]).add(&p2.scaled(-yc[0]))
    };
    Ok(binary_roots(&base_form, f.degree() as usize))
}

/// All preimages of y under f, with multiplicity. Fibers over (near-)critical
/// values, where roots coalesce below the separation tolerance, are refused.
pub fn preimages(f: &ProjectiveMap, y: &HomogeneousPoint) -> Result<PreimageSet> {
    let mut pts: Vec<HomogeneousPoint> = Vec::new();
    match f.family() {
        Family::RationalK1 => {
            let yc = y.coords();
            let a = binary_form_to_unipoly(&f.components()[0], 0, 1);
            let b = binary_form_to_unipoly(&f.components()[1], 0, 1);
            let cross = a.scaled(yc[1]).add(&b.scaled(-yc[0]));
            for (z, w) in binary_roots(&cross, f.degree() as usize) {
                pts.push(HomogeneousPoint::normalize(&[z, w])?);
            }
        }
        Family::SkewProductK2 | Family::ProductK2 => {
            for (b0, b2) in solve_fiber_roots(f, y)? {
                let scale = pick_fiber_scale(f, y, b0, b2)?;
                let mut fiber = fiber_polynomial(f, b0, b2);
                fiber.coeffs[0] -= scale * y.coords()[1];
                let roots = fiber.roots();
                if roots.len() != f.degree() as usize {
                    return Err(Error::DegenerateFiber);
                }
                for z1 in roots {
                    pts.push(HomogeneousPoint::normalize(&[b0, z1, b2])?);
                }
            }
        }
        Family::GeneralK2 => return Err(Error::UnsupportedFamily),
    }
    check_separation(&pts)?;
    let mut residuals = Vec::with_capacity(pts.len());
    for p in &pts {
        let img = f.evaluate(p)?;
        let res = fs_distance(&img, y);
        if res > RESIDUAL_TOL {
            return Err(Error::DegenerateFiber);
        }
        residuals.push(res);
    }
    Ok(PreimageSet {
        points: pts.into_iter().map(|p| (p, 1)).collect(),
        residuals,
    })
}

/// The lift scale c with F(x) = c * y on the fiber over base root (b0, b2).
fn pick_fiber_scale(
    f: &ProjectiveMap,
    y: &HomogeneousPoint,
    b0: Complex64,
    b2: Complex64,
) -> Result<Complex64> {
    let yc = y.coords();
    let base = [b0, Complex64::default(), b2];
    let p0 = f.components()[0].eval(&base);
    let p2 = f.components()[2].eval(&base);
    if yc[0].norm() >= yc[2].norm() {
        Ok(p0 / yc[0])
    } else {
        Ok(p2 / yc[2])
    }
}

/// One preimage of y drawn uniformly among the d^k branches. Staged for the
/// CP^2 families: uniform base root, then uniform fiber root.
pub fn random_preimage(
    f: &ProjectiveMap,
    y: &HomogeneousPoint,
    rng: &mut impl Rng,
) -> Result<HomogeneousPoint> {
    match f.family() {
        Family::RationalK1 => {
            let set = preimages(f, y)?;
            let i = rng.gen_range(0..set.points.len());
            Ok(set.points[i].0)
        }
        Family::SkewProductK2 | Family::ProductK2 => {
            let bases = solve_fiber_roots(f, y)?;
            let (b0, b2) = bases[rng.gen_range(0..bases.len())];
            let scale = pick_fiber_scale(f, y, b0, b2)?;
            let mut fiber = fiber_polynomial(f, b0, b2);
            fiber.coeffs[0] -= scale * y.coords()[1];
            let roots = fiber.roots();
            if roots.len() != f.degree() as usize {
                return Err(Error::DegenerateFiber);
            }
            let z1 = roots[rng.gen_range(0..roots.len())];
            let p = HomogeneousPoint::normalize(&[b0, z1, b2])?;
            let img = f.evaluate(&p)?;
            if fs_distance(&img, y) > RESIDUAL_TOL {
                return Err(Error::DegenerateFiber);
            }
            Ok(p)
        }
        Family::GeneralK2 => Err(Error::UnsupportedFamily),
    }
}

/// Sample the equilibrium measure: `count` independent walks of `depth`
/// uniform preimage choices starting at `a`, equal weights. Deterministic
/// given the seed; each walk owns the ChaCha stream of its index. Walks that
/// keep hitting degenerate fibers back up one level and redraw; a walk that
/// exhausts its retries is replaced from a fresh stream, and the run fails
/// with `ExceptionalSeed` when more than 1% of walks abort that way.
pub fn sample_equilibrium(
    f: &ProjectiveMap,
    a: &HomogeneousPoint,
    depth: usize,
    count: usize,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    let one_walk = |stream: u64| -> Option<HomogeneousPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut stack: Vec<HomogeneousPoint> = vec![*a];
        let mut retries = 0usize;
        while stack.len() <= depth {
            let y = *stack.last().expect("stack never empty");
            match random_preimage(f, &y, &mut rng) {
                Ok(x) => stack.push(x),
                Err(_) => {
                    retries += 1;
                    if retries > MAX_WALK_RETRIES {
                        return None;
                    }
                    if stack.len() > 1 {
                        stack.pop();
                    }
                }
            }
        }
        stack.last().copied()
    };

    let results = crate::par::map_collect((0..count as u64).collect(), |slot| {
        for attempt in 0..MAX_WALK_ATTEMPTS {
            let stream = slot + attempt * count as u64;
            if let Some(p) = one_walk(stream) {
                return (p, attempt);
            }
        }
        (*a, MAX_WALK_ATTEMPTS)
    });

    let aborted: u64 = results.iter().map(|(_, attempts)| attempts).sum();
    if aborted as f64 > (count as f64 * 0.01).max(1.0) {
        return Err(Error::ExceptionalSeed);
    }
    if results.iter().any(|(_, att)| *att >= MAX_WALK_ATTEMPTS) {
        return Err(Error::ExceptionalSeed);
    }
    let points: Vec<HomogeneousPoint> = results.into_iter().map(|(p, _)| p).collect();
    let w = 1.0 / count as f64;
    Ok(EmpiricalMeasure::new(
        points,
        vec![w; count],
        Provenance {
            seed_point: *a,
            depth,
            rng_seed: seed,
        },
    ))
}

/// Forward orbit x, f(x), ..., f^n(x) (n+1 points).
pub fn forward_orbit(
    f: &ProjectiveMap,
    x: &HomogeneousPoint,
    n: usize,
) -> Result<Vec<HomogeneousPoint>> {
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(*x);
    for _ in 0..n {
        let next = f.evaluate(orbit.last().expect("nonempty"))?;
        orbit.push(next);
    }
    Ok(orbit)
}

/// A generic-looking seed point for inverse iteration, derived from a seed.
pub fn generic_seed_point(k: usize, seed: u64) -> HomogeneousPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5_5a5a_dead_beef);
    let coord = |rng: &mut ChaCha8Rng| {
        Complex64::new(rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9))
    };
    match k {
        1 => HomogeneousPoint::affine1(coord(&mut rng) + Complex64::new(0.3, 0.2)),
        _ => HomogeneousPoint::affine2(
            coord(&mut rng) + Complex64::new(0.3, 0.2),
            coord(&mut rng) + Complex64::new(-0.2, 0.4),
        ),
    }
}
