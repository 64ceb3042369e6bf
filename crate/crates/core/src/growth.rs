//! Fubini-Study volumes of parametrized holomorphic discs, the degree growth
//! bound for bounded discs, Green potentials and the pullback identity they
//! satisfy.
//!
//! With omega normalized to total mass 1, the area form pulled back along a
//! curve t -> [G_0(t) : ... : G_k(t)] has density
//! (|G'|^2 |G|^2 - |<G, G'>|^2) / (pi |G|^4). Iterated maps are never
//! composed symbolically here: the orbit of each quadrature node is pushed
//! through the lift derivative chain with per-step renormalization, which the
//! density is invariant under.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::map::ProjectiveMap;
use crate::roots::UniPoly;

/// Relative disagreement between full and half resolution beyond which a
/// quadrature is reported unstable.
const RICHARDSON_TOL: f64 = 0.05;
/// Quadrature slack accepted on the growth-bound ratio.
pub const EPS_QUAD: f64 = 0.05;
/// Cauchy tolerance of the Green potential iteration.
const GREEN_TOL: f64 = 1e-10;

/// Tensor-product midpoint rule in polar coordinates on the disc D(r).
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    pub r: f64,
    pub radial: usize,
    pub angular: usize,
    nodes: Vec<(Complex64, f64)>,
}

impl QuadratureGrid {
    pub fn polar(radial: usize, angular: usize, r: f64) -> Self {
        assert!(radial >= 1 && angular >= 1 && r > 0.0);
        let dr = r / radial as f64;
        let dth = std::f64::consts::TAU / angular as f64;
        let mut nodes = Vec::with_capacity(radial * angular);
        for i in 0..radial {
            let rho = (i as f64 + 0.5) * dr;
            let w = rho * dr * dth;
            for j in 0..angular {
                let th = (j as f64 + 0.5) * dth;
                nodes.push((Complex64::from_polar(rho, th), w));
            }
        }
        Self {
            r,
            radial,
            angular,
            nodes,
        }
    }

    /// Default resolution used by the sweeps.
    pub fn standard(r: f64) -> Self {
        Self::polar(256, 256, r)
    }

    pub fn half(&self) -> Self {
        Self::polar((self.radial / 2).max(1), (self.angular / 2).max(1), self.r)
    }

    pub fn nodes(&self) -> &[(Complex64, f64)] {
        &self.nodes
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|(_, w)| w).sum()
    }
}

/// A parametrized holomorphic disc D(radius) -> CP^k with polynomial
/// components (l = 1 throughout; surfaces are not quadratured).
#[derive(Clone, Debug)]
pub struct PolydiscMap {
    pub l: usize,
    pub radius: f64,
    k: usize,
    comps: Vec<UniPoly>,
    derivs: Vec<UniPoly>,
    /// Index of the chart domain { |z_j| >= max |z_i| / 2 } containing the
    /// image, when one was certified.
    pub bounded_chart: Option<usize>,
}

impl PolydiscMap {
    pub fn from_components(k: usize, comps: Vec<UniPoly>, radius: f64) -> Self {
        assert_eq!(comps.len(), k + 1);
        let derivs = comps.iter().map(|c| c.derivative()).collect();
        let mut disc = Self {
            l: 1,
            radius,
            k,
            comps,
            derivs,
            bounded_chart: None,
        };
        disc.bounded_chart = disc.find_bounded_chart();
        disc
    }

    /// Affine disc t -> [center + scale t : 1] in the standard CP^1 chart.
    pub fn affine_disc_k1(center: Complex64, scale: Complex64, radius: f64) -> Self {
        Self::from_components(
            1,
            vec![
                UniPoly::new(vec![center, scale]),
                UniPoly::constant(Complex64::new(1.0, 0.0)),
            ],
            radius,
        )
    }

    /// Affine line disc t -> [c0 + a0 t : c1 + a1 t : 1] in the standard CP^2
    /// chart.
    pub fn affine_disc_k2(
        c0: Complex64,
        a0: Complex64,
        c1: Complex64,
        a1: Complex64,
        radius: f64,
    ) -> Self {
        Self::from_components(
            2,
            vec![
                UniPoly::new(vec![c0, a0]),
                UniPoly::new(vec![c1, a1]),
                UniPoly::constant(Complex64::new(1.0, 0.0)),
            ],
            radius,
        )
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn components(&self) -> &[UniPoly] {
        &self.comps
    }

    pub fn lift(&self, t: Complex64) -> Vec<Complex64> {
        self.comps.iter().map(|c| c.eval(t)).collect()
    }

    pub fn lift_derivative(&self, t: Complex64) -> Vec<Complex64> {
        self.derivs.iter().map(|c| c.eval(t)).collect()
    }

    /// Search for a covering chart containing the image of the full domain
    /// disc, sampling a polar grid plus the boundary circle.
    fn find_bounded_chart(&self) -> Option<usize> {
        let mut ok = vec![true; self.k + 1];
        let grid = QuadratureGrid::polar(24, 48, self.radius);
        let boundary: Vec<Complex64> = (0..128)
            .map(|i| Complex64::from_polar(self.radius, std::f64::consts::TAU * i as f64 / 128.0))
            .collect();
        for t in grid.nodes().iter().map(|(t, _)| *t).chain(boundary) {
            let z = self.lift(t);
            let max = z.iter().map(|c| c.norm()).fold(0.0, f64::max);
            if max <= 0.0 {
                return None;
            }
            for (j, c) in z.iter().enumerate() {
                if c.norm() < 0.5 * max {
                    ok[j] = false;
                }
            }
        }
        ok.iter().position(|b| *b)
    }
}

/// Pullback area density of f^m along the disc at parameter t: the orbit of
/// the lift is pushed through the map m times, the tangent vector through the
/// lift Jacobian, both renormalized each step.
fn pullback_density(f: &ProjectiveMap, m: usize, eta: &PolydiscMap, t: Complex64) -> f64 {
    let mut y = eta.lift(t);
    let mut v = eta.lift_derivative(t);
    let scale = y.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale < 1e-300 {
        return 0.0;
    }
    for c in y.iter_mut() {
        *c /= scale;
    }
    for c in v.iter_mut() {
        *c /= scale;
    }
    for _ in 0..m {
        let jac = f.lift_jacobian(&y);
        let fy = f.eval_lift(&y);
        let s = fy.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if s < 1e-300 {
            return 0.0;
        }
        let mut nv = vec![Complex64::default(); y.len()];
        for (i, row) in jac.iter().enumerate() {
            let mut acc = Complex64::default();
            for (e, vv) in row.iter().zip(&v) {
                acc += e * vv;
            }
            nv[i] = acc / s;
        }
        v = nv;
        y = fy.into_iter().map(|c| c / s).collect();
    }
    let ny: f64 = y.iter().map(|c| c.norm_sqr()).sum();
    let nv: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    let inner: Complex64 = y.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
    ((nv * ny - inner.norm_sqr()) / (std::f64::consts::PI * ny * ny)).max(0.0)
}

fn integrate(f: &ProjectiveMap, m: usize, eta: &PolydiscMap, grid: &QuadratureGrid) -> f64 {
    let densities = crate::par::map_collect(grid.nodes().to_vec(), |(t, w)| {
        w * pullback_density(f, m, eta, t)
    });
    densities.iter().sum()
}

/// Fubini-Study volume (with multiplicity) of f^m composed with the disc,
/// integrated over D(grid.r). A Richardson comparison against half
/// resolution guards the quadrature.
pub fn polydisc_volume(
    f: &ProjectiveMap,
    m: usize,
    eta: &PolydiscMap,
    grid: &QuadratureGrid,
) -> Result<f64> {
    if eta.l != 1 {
        return Err(Error::Unsupported("only l = 1 discs are quadratured".into()));
    }
    if grid.r > eta.radius + 1e-12 {
        return Err(Error::Unsupported(
            "integration radius exceeds the disc domain".into(),
        ));
    }
    let full = integrate(f, m, eta, grid);
    let coarse = integrate(f, m, eta, &grid.half());
    let rel = (full - coarse).abs() / full.abs().max(1e-9);
    if rel > RICHARDSON_TOL {
        return Err(Error::QuadratureUnstable { rel_change: rel });
    }
    Ok(full)
}

#[derive(Clone, Copy, Debug)]
pub struct GrowthCheck {
    pub volume: f64,
    pub bound: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// The growth bound Vol(f^m o eta | D(1)) <= d^(l m) for a bounded disc
/// defined on D(2). `pass` allows the quadrature slack.
pub fn growth_check(
    f: &ProjectiveMap,
    m: usize,
    eta: &PolydiscMap,
    grid: &QuadratureGrid,
) -> Result<GrowthCheck> {
    if eta.bounded_chart.is_none() {
        return Err(Error::NotBounded);
    }
    if eta.radius < 2.0 - 1e-12 {
        return Err(Error::NotBounded);
    }
    let unit = QuadratureGrid::polar(grid.radial, grid.angular, 1.0);
    let volume = polydisc_volume(f, m, eta, &unit)?;
    let bound = (f.degree() as f64).powi((eta.l * m) as i32);
    let ratio = volume / bound;
    Ok(GrowthCheck {
        volume,
        bound,
        ratio,
        pass: ratio <= 1.0 + EPS_QUAD,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct GreenValue {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Green potential of the lift: lim d^(-n) log ||F^n(z)|| with sup-norm
/// renormalization each step. Stops on a Cauchy difference below 1e-10 or at
/// `n_iter`; persistent failure of the increments to contract like 2/d is an
/// error.
pub fn green_potential(f: &ProjectiveMap, lift: &[Complex64], n_iter: usize) -> Result<GreenValue> {
    assert!(n_iter >= 1);
    let sup = lift.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if sup < 1e-300 {
        return Err(Error::ZeroVector);
    }
    let mut y: Vec<Complex64> = lift.iter().map(|c| c / sup).collect();
    let mut g = sup.ln();
    let d = f.degree() as f64;
    let mut prev_diff: Option<f64> = None;
    let mut violations = 0usize;
    let mut log_scale_max: f64 = 0.0;
    for n in 0..n_iter {
        let fy = f.eval_lift(&y);
        let s = fy.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if s < 1e-300 {
            return Err(Error::IndeterminatePoint);
        }
        let diff = s.ln() / d.powi(n as i32 + 1);
        g += diff;
        y = fy.into_iter().map(|c| c / s).collect();
        let ad = diff.abs();
        log_scale_max = log_scale_max.max(s.ln().abs());
        // The increment is d^(-n-1) log ||F(y_n)|| with y_n on the unit
        // sup-sphere, so it is bounded by C d^(-n): persistent growth means
        // the iteration is corrupted. Short runs of non-contraction are
        // normal when log ||F(y_n)|| passes near zero, so only long ones
        // (of increments that still matter) count.
        if let Some(p) = prev_diff {
            if ad > (2.0 / d) * p + 1e-15 && ad > GREEN_TOL {
                violations += 1;
                if violations >= 8 {
                    return Err(Error::NonConvergent);
                }
            } else {
                violations = 0;
            }
        }
        prev_diff = Some(ad);
        // Certified tail bound: the remaining increments sum to at most
        // C d^(-n-1) / (d - 1) with C the sup of |log ||F|| | on the sphere
        // (estimated from the trajectory, with margin). A single small
        // increment is not a stopping criterion.
        let c_bound = 2.0 * log_scale_max.max(1.0);
        if c_bound / d.powi(n as i32 + 1) / (d - 1.0) < GREEN_TOL {
            return Ok(GreenValue {
                value: g,
                converged: true,
                iterations: n + 1,
            });
        }
    }
    Ok(GreenValue {
        value: g,
        converged: false,
        iterations: n_iter,
    })
}

/// The continuous potential phi with T = omega - dd^c phi, evaluated at a
/// lift: log of the Euclidean norm minus the Green potential.
pub fn fs_potential(f: &ProjectiveMap, lift: &[Complex64]) -> Result<f64> {
    let l2 = lift.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().ln();
    let g = green_potential(f, lift, 200)?;
    Ok(l2 - g.value)
}

/// log of the Euclidean norm of F^m(lift), accumulated with per-step
/// renormalization so nothing overflows.
fn log_norm_iterate(f: &ProjectiveMap, lift: &[Complex64], m: usize) -> Result<f64> {
    let d = f.degree() as f64;
    let sup = lift.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if sup < 1e-300 {
        return Err(Error::ZeroVector);
    }
    let mut y: Vec<Complex64> = lift.iter().map(|c| c / sup).collect();
    let mut log_scale = sup.ln(); // F^q(lift) = exp(log_scale) * y
    for _ in 0..m {
        let fy = f.eval_lift(&y);
        let s = fy.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if s < 1e-300 {
            return Err(Error::IndeterminatePoint);
        }
        log_scale = d * log_scale + s.ln();
        y = fy.into_iter().map(|c| c / s).collect();
    }
    Ok(log_scale + y.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().ln())
}

/// Residual of the pullback identity
/// f^m* omega = d^m T + dd^c (phi o f^m)
/// integrated against the disc: the d^m T term uses the smooth approximation
/// T_N = d^(-N) f^N* omega with N = m + 6, and the dd^c term is evaluated by
/// Stokes on the boundary circle with a finite-difference radial derivative
/// of phi o f^m.
pub fn pullback_identity_residual(
    f: &ProjectiveMap,
    m: usize,
    eta: &PolydiscMap,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let lhs = polydisc_volume(f, m, eta, grid)?;
    let vol_n = polydisc_volume(f, m + 6, eta, grid)?;
    let d = f.degree() as f64;
    let green_term = vol_n / d.powi(6);

    let r = grid.r;
    let h = 1e-4 * r;
    let dm = d.powi(m as i32);
    let n_theta = 1024;
    let phi_m = |t: Complex64| -> Result<f64> {
        let lift = eta.lift(t);
        // phi(f^m x) = log ||F^m x||_2 - d^m G(x)
        let l2 = log_norm_iterate(f, &lift, m)?;
        let g = green_potential(f, &lift, 400)?;
        Ok(l2 - dm * g.value)
    };
    let thetas: Vec<f64> = (0..n_theta)
        .map(|i| std::f64::consts::TAU * (i as f64 + 0.5) / n_theta as f64)
        .collect();
    let derivs = crate::par::map_collect(thetas, |th| {
        let out = Complex64::from_polar(r + h, th);
        let inn = Complex64::from_polar(r - h, th);
        match (phi_m(out), phi_m(inn)) {
            (Ok(a), Ok(b)) => Ok((a - b) / (2.0 * h)),
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    });
    let mut sum = 0.0;
    for d in derivs {
        sum += d?;
    }
    // boundary term of dd^c u over the disc: (r / 2 pi) * integral of du/drho
    let ddc_term = sum * r / n_theta as f64;
    Ok((lhs - green_term - ddc_term).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin_map;
    use num_complex::Complex64 as C;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn re(x: f64) -> C {
        C::new(x, 0.0)
    }

    #[test]
    fn grid_weight_is_disc_area() {
        for r in [0.3, 1.0, 2.0] {
            let g = QuadratureGrid::polar(64, 64, r);
            let area = std::f64::consts::PI * r * r;
            assert!((g.total_weight() - area).abs() < 1e-10 * area);
        }
    }

    #[test]
    fn chart_disc_area_closed_form() {
        // chordal radius rho: euclidean chart radius s = rho / sqrt(1 - rho^2),
        // normalized FS area = rho^2.
        let rho: f64 = 0.1;
        let s = rho / (1.0 - rho * rho).sqrt();
        let f = builtin_map("power2_k1").unwrap();
        let eta = PolydiscMap::affine_disc_k1(re(0.0), re(s), 1.0);
        let grid = QuadratureGrid::standard(1.0);
        let vol = polydisc_volume(&f, 0, &eta, &grid).unwrap();
        assert!(
            (vol - rho * rho).abs() < 1e-6,
            "area {vol} vs closed form {}",
            rho * rho
        );
    }

    #[test]
    fn composition_consistency() {
        let f = builtin_map("power2_k1").unwrap();
        let eta = PolydiscMap::affine_disc_k1(re(0.5), re(0.25), 1.0);
        let grid = QuadratureGrid::standard(1.0);
        let direct = polydisc_volume(&f, 1, &eta, &grid).unwrap();
        // compose f with the disc symbolically and integrate with m = 0
        let comps: Vec<UniPoly> = f
            .components()
            .iter()
            .map(|p| p.restrict_to_curve(eta.components()))
            .collect();
        let composed = PolydiscMap::from_components(1, comps, 1.0);
        let indirect = polydisc_volume(&f, 0, &composed, &grid).unwrap();
        assert!(
            (direct - indirect).abs() < 1e-9 * direct.max(1.0),
            "direct {direct} vs composed {indirect}"
        );
    }

    #[test]
    fn constant_disc_has_no_volume() {
        let f = builtin_map("power2_k1").unwrap();
        let eta = PolydiscMap::from_components(
            1,
            vec![UniPoly::constant(re(0.4)), UniPoly::constant(re(1.0))],
            2.0,
        );
        let grid = QuadratureGrid::polar(64, 64, 1.0);
        for m in [0, 1, 3] {
            assert_eq!(polydisc_volume(&f, m, &eta, &grid).unwrap(), 0.0);
        }
    }

    #[test]
    fn volume_monotone_in_radius() {
        let f = builtin_map("chebyshev2").unwrap();
        let eta = PolydiscMap::affine_disc_k1(re(0.3), re(0.5), 2.0);
        let mut last = 0.0;
        for r in [0.25, 0.5, 1.0] {
            let grid = QuadratureGrid::polar(128, 128, r);
            let v = polydisc_volume(&f, 2, &eta, &grid).unwrap();
            assert!(v >= last - 1e-12, "volume decreased: {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn growth_bound_on_power_map() {
        let f = builtin_map("power2_k1").unwrap();
        let eta = PolydiscMap::affine_disc_k1(re(0.3), re(0.5), 2.0);
        assert!(eta.bounded_chart.is_some());
        let grid = QuadratureGrid::standard(1.0);
        for m in 0..=6 {
            let g = growth_check(&f, m, &eta, &grid).unwrap();
            assert!(g.pass, "m={m}: ratio {}", g.ratio);
        }
    }

    #[test]
    fn growth_bound_on_cp2_line() {
        let f = builtin_map("power2_k2").unwrap();
        let eta = PolydiscMap::affine_disc_k2(re(0.2), re(0.4), re(0.3), re(-0.3), 2.0);
        assert!(eta.bounded_chart.is_some());
        let grid = QuadratureGrid::standard(1.0);
        for m in 0..=5 {
            let g = growth_check(&f, m, &eta, &grid).unwrap();
            assert!(g.pass, "m={m}: ratio {}", g.ratio);
        }
    }

    #[test]
    fn unbounded_disc_is_refused() {
        // image sweeps across several charts: no certificate
        let f = builtin_map("power2_k1").unwrap();
        let eta = PolydiscMap::affine_disc_k1(re(0.0), re(2.0), 2.0);
        assert!(eta.bounded_chart.is_none());
        let grid = QuadratureGrid::polar(32, 32, 1.0);
        assert!(matches!(
            growth_check(&f, 1, &eta, &grid),
            Err(Error::NotBounded)
        ));
    }

    #[test]
    fn green_power_map_closed_form() {
        let f = builtin_map("power2_k1").unwrap();
        // G = max(log |z|, log |w|)
        let g = green_potential(&f, &[re(1.0), re(1.0)], 100).unwrap();
        assert!(g.value.abs() < 1e-12);
        let g = green_potential(&f, &[re(2.0), re(1.0)], 100).unwrap();
        assert!((g.value - (2.0f64).ln()).abs() < 1e-8);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let z = C::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let w = C::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            if z.norm().max(w.norm()) < 0.1 {
                continue;
            }
            let g = green_potential(&f, &[z, w], 100).unwrap();
            let exact = z.norm().ln().max(w.norm().ln());
            assert!((g.value - exact).abs() < 1e-8, "G({z},{w}) = {} vs {exact}", g.value);
        }
    }

    #[test]
    fn green_functional_equation_and_homogeneity() {
        for name in ["power2_k1", "chebyshev2", "skew2_k2"] {
            let f = builtin_map(name).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let d = f.degree() as f64;
            for _ in 0..100 {
                let lift: Vec<C> = (0..=f.k())
                    .map(|_| C::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)))
                    .collect();
                if lift.iter().map(|c| c.norm()).fold(0.0, f64::max) < 0.2 {
                    continue;
                }
                let g = green_potential(&f, &lift, 300).unwrap();
                let fg = green_potential(&f, &f.eval_lift(&lift), 300).unwrap();
                assert!(
                    (fg.value - d * g.value).abs() < 1e-8,
                    "{name}: G(F z) = {} vs d G(z) = {}",
                    fg.value,
                    d * g.value
                );
                let c = C::new(rng.gen_range(0.2..2.0), rng.gen_range(-1.0..1.0));
                let scaled: Vec<C> = lift.iter().map(|z| z * c).collect();
                let gs = green_potential(&f, &scaled, 300).unwrap();
                assert!((gs.value - (g.value + c.norm().ln())).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn green_increments_contract() {
        let f = builtin_map("chebyshev2").unwrap();
        // contraction ratio <= 1/d + 0.1 on average: just assert convergence
        // well before the iteration cap and no NonConvergent error.
        let g = green_potential(&f, &[C::new(0.3, 0.9), re(1.0)], 200).unwrap();
        assert!(g.converged);
        assert!(g.iterations < 80, "took {} iterations", g.iterations);
    }

    #[test]
    fn pullback_identity_power_map() {
        let f = builtin_map("power2_k1").unwrap();
        let eta = PolydiscMap::affine_disc_k1(re(0.3), re(0.35), 1.0);
        let grid = QuadratureGrid::standard(1.0);
        for m in [0usize, 1, 2] {
            let res = pullback_identity_residual(&f, m, &eta, &grid).unwrap();
            let tol = 0.02 * (f.degree() as f64).powi(m as i32).max(1.0);
            assert!(res < tol, "m={m}: residual {res} vs tol {tol}");
        }
    }

    #[test]
    fn pullback_identity_constant_disc() {
        let f = builtin_map("power2_k1").unwrap();
        let eta = PolydiscMap::from_components(
            1,
            vec![UniPoly::constant(re(0.4)), UniPoly::constant(re(1.0))],
            1.0,
        );
        let grid = QuadratureGrid::polar(32, 32, 0.5);
        let res = pullback_identity_residual(&f, 1, &eta, &grid).unwrap();
        assert!(res < 1e-10, "residual {res}");
    }
}
