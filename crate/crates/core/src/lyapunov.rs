//! Lyapunov spectrum estimation along sampled orbits.
//!
//! The derivative cocycle is accumulated through chart Jacobians with a QR
//! (Gram-Schmidt) re-orthonormalization at every step; the exponents are the
//! time averages of the log diagonal entries of the triangular factors.
//! Charts are kept sticky along the orbit (switch only when the current chart
//! coordinate drops below a threshold), and consecutive steps always share
//! the junction chart, so the products telescope exactly.
//!
//! Orbits are generated backward, by uniform random inverse iteration from
//! cloud points, and the cocycle is accumulated forward along the reversed
//! orbit. The equilibrium measure lives on a repeller: a forward orbit
//! computed in doubles drifts off the support at rate d per step and falls
//! into a superattracting critical cycle after ~50/log2(d) steps, while the
//! backward orbit is re-solved onto the support at every step. Uniform
//! branch choice is the natural-extension distribution of the equilibrium
//! measure (its Jacobian is constant).

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::map::{chart_jacobian_between, jacobian_density, ChartJacobian, ProjectiveMap};
use crate::sampler::EmpiricalMeasure;

/// Default modulus threshold below which the sticky chart is abandoned for
/// the max-modulus one.
pub const CHART_SWITCH_THRESHOLD: f64 = 0.5;

/// Orbits whose chart Jacobian determinant drops below this are considered to
/// have hit the critical set and are dropped (and counted).
const CRITICAL_DET_TOL: f64 = 1e-12;

/// Estimated exponents, descending, with across-orbit standard errors.
#[derive(Clone, Debug)]
pub struct LyapunovSpectrum {
    pub lambda: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_steps: usize,
    pub n_orbits: usize,
    pub dropped_orbits: usize,
}

impl LyapunovSpectrum {
    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    /// Smallest exponent and its standard error.
    pub fn smallest(&self) -> (f64, f64) {
        (
            *self.lambda.last().expect("nonempty spectrum"),
            *self.stderr.last().expect("nonempty spectrum"),
        )
    }

    /// Group exponents within `tau` nats into multiplicity clusters,
    /// returning (cluster mean, multiplicity) pairs in descending order.
    pub fn clusters(&self, tau: f64) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &l in &self.lambda {
            match out.last_mut() {
                Some((mean, m)) if (*mean - l).abs() <= tau => {
                    *mean = (*mean * *m as f64 + l) / (*m as f64 + 1.0);
                    *m += 1;
                }
                _ => out.push((l, 1)),
            }
        }
        out
    }

    /// Multiplicity p of the smallest exponent under clustering tolerance
    /// `tau` (feeds the multiplicity-refined dimension bound).
    pub fn smallest_multiplicity(&self, tau: f64) -> usize {
        self.clusters(tau).last().map(|(_, m)| *m).unwrap_or(1)
    }
}

/// Orthonormal frame with running log sums: the state of the QR cocycle.
#[derive(Clone, Debug)]
pub struct CocycleAccumulator {
    pub q: [[Complex64; 2]; 2],
    pub log_sums: [f64; 2],
    pub k: usize,
}

impl CocycleAccumulator {
    pub fn identity(k: usize) -> Self {
        let mut q = [[Complex64::default(); 2]; 2];
        for (i, row) in q.iter_mut().enumerate().take(k) {
            row[i] = Complex64::new(1.0, 0.0);
        }
        Self {
            q,
            log_sums: [0.0; 2],
            k,
        }
    }

    /// Push the frame through the matrix and re-orthonormalize (modified
    /// Gram-Schmidt). Returns false when a column collapses (critical hit).
    pub fn step(&mut self, jac: &ChartJacobian) -> bool {
        let k = self.k;
        let m = &jac.matrix;
        // b_j = M q_j (columns)
        let mut b = [[Complex64::default(); 2]; 2];
        for j in 0..k {
            for i in 0..k {
                for l in 0..k {
                    b[i][j] += m[i][l] * self.q[l][j];
                }
            }
        }
        // column 0
        let r00 = (b[0][0].norm_sqr() + b[1][0].norm_sqr()).sqrt();
        if r00 < 1e-300 {
            return false;
        }
        for i in 0..k {
            self.q[i][0] = b[i][0] / r00;
        }
        self.log_sums[0] += r00.ln();
        if k == 2 {
            let r01 = self.q[0][0].conj() * b[0][1] + self.q[1][0].conj() * b[1][1];
            let mut v = [b[0][1] - r01 * self.q[0][0], b[1][1] - r01 * self.q[1][0]];
            // second projection pass: keeps the frame orthonormal to machine
            // precision even when the step matrix is ill conditioned
            let r01b = self.q[0][0].conj() * v[0] + self.q[1][0].conj() * v[1];
            v[0] -= r01b * self.q[0][0];
            v[1] -= r01b * self.q[1][0];
            let r11 = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            if r11 < 1e-300 {
                return false;
            }
            v[0] /= r11;
            v[1] /= r11;
            self.q[0][1] = v[0];
            self.q[1][1] = v[1];
            self.log_sums[1] += r11.ln();
        }
        true
    }

    /// Max deviation of the frame from orthonormality.
    pub fn orthonormality_defect(&self) -> f64 {
        let k = self.k;
        let mut defect: f64 = 0.0;
        for i in 0..k {
            let mut norm = 0.0;
            for l in 0..k {
                norm += self.q[l][i].norm_sqr();
            }
            defect = defect.max((norm.sqrt() - 1.0).abs());
        }
        if k == 2 {
            let inner = self.q[0][0].conj() * self.q[0][1] + self.q[1][0].conj() * self.q[1][1];
            defect = defect.max(inner.norm());
        }
        defect
    }
}

fn sticky_chart(p: &crate::projective::HomogeneousPoint, current: usize, threshold: f64) -> usize {
    if p.coords()[current].norm() >= threshold {
        current
    } else {
        p.chart()
    }
}

/// Estimate the Lyapunov spectrum from `n_orbits` orbits of `n_steps` steps
/// started at cloud points. See [`lyapunov_spectrum_with_threshold`].
pub fn lyapunov_spectrum(
    f: &ProjectiveMap,
    cloud: &EmpiricalMeasure,
    n_steps: usize,
    n_orbits: usize,
    seed: u64,
) -> Result<LyapunovSpectrum> {
    lyapunov_spectrum_with_threshold(f, cloud, n_steps, n_orbits, seed, CHART_SWITCH_THRESHOLD)
}

/// Spectrum estimation with an explicit chart-switch threshold (exposed so
/// the chart-independence of the estimate can be tested).
pub fn lyapunov_spectrum_with_threshold(
    f: &ProjectiveMap,
    cloud: &EmpiricalMeasure,
    n_steps: usize,
    n_orbits: usize,
    seed: u64,
    chart_threshold: f64,
) -> Result<LyapunovSpectrum> {
    assert!(n_steps >= 1 && n_orbits >= 1);
    assert!(!cloud.is_empty());
    let k = f.k();

    let one_orbit = |orbit_idx: u64| -> Option<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x517c_c1b7_2722_0a95);
        rng.set_stream(orbit_idx);
        // backward orbit x_0, x_{-1}, ..., x_{-n} by inverse iteration
        let mut backward = Vec::with_capacity(n_steps + 1);
        backward.push(cloud.points()[rng.gen_range(0..cloud.len())]);
        let mut retries = 0usize;
        while backward.len() <= n_steps {
            let y = *backward.last().expect("nonempty");
            match crate::sampler::random_preimage(f, &y, &mut rng) {
                Ok(x) => backward.push(x),
                Err(_) => {
                    retries += 1;
                    if retries > 64 {
                        return None;
                    }
                    if backward.len() > 1 {
                        backward.pop();
                    }
                }
            }
        }
        // forward cocycle along the reversed orbit
        let mut acc = CocycleAccumulator::identity(k);
        let mut chart = backward[n_steps].chart();
        for q in (0..n_steps).rev() {
            let source = &backward[q + 1];
            let target_point = &backward[q];
            let target = sticky_chart(target_point, chart, chart_threshold);
            let jac = chart_jacobian_between(f, source, chart, target).ok()?;
            if jac.det().norm() < CRITICAL_DET_TOL {
                return None;
            }
            if !acc.step(&jac) {
                return None;
            }
            chart = target;
        }
        let mut lambdas: Vec<f64> = (0..k).map(|i| acc.log_sums[i] / n_steps as f64).collect();
        lambdas.sort_by(|a, b| b.partial_cmp(a).expect("finite exponents"));
        Some(lambdas)
    };

    let results = crate::par::map_collect((0..n_orbits as u64).collect(), one_orbit);
    let kept: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    let dropped = n_orbits - kept.len();
    if kept.is_empty() {
        return Err(Error::CriticalOrbit);
    }
    let m = kept.len() as f64;
    let mut lambda = vec![0.0; k];
    let mut stderr = vec![0.0; k];
    for i in 0..k {
        let mean = kept.iter().map(|l| l[i]).sum::<f64>() / m;
        let var = if kept.len() > 1 {
            kept.iter().map(|l| (l[i] - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        lambda[i] = mean;
        stderr[i] = (var / m).sqrt();
    }
    Ok(LyapunovSpectrum {
        lambda,
        stderr,
        n_steps,
        n_orbits: kept.len(),
        dropped_orbits: dropped,
    })
}

/// |mean of log Jac f over the cloud - 2 * sum of exponents|: the residual of
/// the exponent-Jacobian integral identity.
pub fn jacobian_identity_residual(
    f: &ProjectiveMap,
    cloud: &EmpiricalMeasure,
    spectrum: &LyapunovSpectrum,
) -> Result<f64> {
    let mut acc = 0.0;
    let mut wsum = 0.0;
    let mut critical = 0usize;
    for (p, w) in cloud.points().iter().zip(cloud.weights()) {
        let jac = jacobian_density(f, p)?;
        if jac < 1e-300 {
            critical += 1;
            continue;
        }
        acc += w * jac.ln();
        wsum += w;
    }
    let frac = critical as f64 / cloud.len() as f64;
    if frac > 0.01 {
        return Err(Error::NonIntegrable(100.0 * frac));
    }
    let mean = acc / wsum;
    let two_sum: f64 = 2.0 * spectrum.lambda.iter().sum::<f64>();
    Ok((mean - two_sum).abs())
}

/// Briend-Duval lower bound check: the smallest exponent of the equilibrium
/// measure must be at least log sqrt(d). Returns (ok within 3 sigma, margin).
pub fn briend_duval_check(spectrum: &LyapunovSpectrum, d: u16) -> (bool, f64) {
    let bound = 0.5 * (d as f64).ln();
    let (lk, se) = spectrum.smallest();
    (lk >= bound - 3.0 * se, lk - bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin_map;
    use crate::projective::HomogeneousPoint;
    use crate::sampler::sample_equilibrium;
    use num_complex::Complex64 as C;

    const LOG2: f64 = std::f64::consts::LN_2;

    fn cloud_for(name: &str, count: usize) -> (crate::map::ProjectiveMap, EmpiricalMeasure) {
        let f = builtin_map(name).unwrap();
        let a = if f.k() == 1 {
            HomogeneousPoint::affine1(C::new(0.37, 0.21))
        } else {
            HomogeneousPoint::affine2(C::new(0.37, 0.21), C::new(-0.4, 0.33))
        };
        let cloud = sample_equilibrium(&f, &a, 25, count, 17).unwrap();
        (f, cloud)
    }

    #[test]
    fn power_map_exponent_is_log2() {
        let (f, cloud) = cloud_for("power2_k1", 500);
        let s = lyapunov_spectrum(&f, &cloud, 400, 40, 3).unwrap();
        assert_eq!(s.k(), 1);
        assert!(
            (s.lambda[0] - LOG2).abs() < 0.02 * LOG2,
            "lambda = {} vs log2 = {LOG2}",
            s.lambda[0]
        );
    }

    #[test]
    fn cp2_power_map_double_exponent() {
        let (f, cloud) = cloud_for("power2_k2", 500);
        let s = lyapunov_spectrum(&f, &cloud, 300, 30, 3).unwrap();
        assert_eq!(s.k(), 2);
        for l in &s.lambda {
            assert!((l - LOG2).abs() < 0.02 * LOG2, "lambda = {l}");
        }
        assert_eq!(s.smallest_multiplicity(0.02), 2);
    }

    #[test]
    fn chebyshev_exponent_matches_arcsine_oracle() {
        // oracle: integral of log |f'| = log |2x| against the arcsine density
        // on [-2, 2], computed by quadrature in the angle variable.
        let n = 200_000;
        let mut oracle = 0.0;
        for i in 0..n {
            let th = std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
            oracle += (2.0 * (2.0 * th.cos()).abs()).ln();
        }
        oracle /= n as f64;
        assert!((oracle - LOG2).abs() < 1e-3, "oracle sanity: {oracle}");

        let (f, cloud) = cloud_for("chebyshev2", 1000);
        let s = lyapunov_spectrum(&f, &cloud, 1000, 60, 3).unwrap();
        assert!(
            (s.lambda[0] - oracle).abs() < 0.02 * LOG2,
            "lambda = {} vs oracle {oracle}",
            s.lambda[0]
        );
    }

    #[test]
    fn frame_stays_orthonormal() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let (f, cloud) = cloud_for("skew2_k2", 200);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut backward = vec![cloud.points()[0]];
        while backward.len() <= 200 {
            let y = *backward.last().unwrap();
            backward.push(crate::sampler::random_preimage(&f, &y, &mut rng).unwrap());
        }
        let mut acc = CocycleAccumulator::identity(2);
        let mut chart = backward[200].chart();
        for q in (0..200).rev() {
            let target = sticky_chart(&backward[q], chart, CHART_SWITCH_THRESHOLD);
            let jac = chart_jacobian_between(&f, &backward[q + 1], chart, target).unwrap();
            assert!(acc.step(&jac));
            assert!(acc.orthonormality_defect() < 1e-10);
            chart = target;
        }
    }

    #[test]
    fn doubling_steps_keeps_estimate() {
        let (f, cloud) = cloud_for("chebyshev2", 500);
        let s1 = lyapunov_spectrum(&f, &cloud, 500, 50, 3).unwrap();
        let s2 = lyapunov_spectrum(&f, &cloud, 1000, 50, 3).unwrap();
        let joint = (s1.stderr[0].powi(2) + s2.stderr[0].powi(2)).sqrt();
        assert!((s1.lambda[0] - s2.lambda[0]).abs() < 3.0 * joint.max(1e-4));
    }

    #[test]
    fn chart_threshold_does_not_matter_on_power_maps() {
        let (f, cloud) = cloud_for("power2_k1", 300);
        let a = lyapunov_spectrum_with_threshold(&f, &cloud, 300, 20, 3, 0.5).unwrap();
        let b = lyapunov_spectrum_with_threshold(&f, &cloud, 300, 20, 3, 0.6).unwrap();
        assert!((a.lambda[0] - b.lambda[0]).abs() < 1e-6);
    }

    #[test]
    fn identity_residual_examples() {
        // single fixed point of z^2 at z = 1 with lambda = log 2: exact
        let f = builtin_map("power2_k1").unwrap();
        let fixed = HomogeneousPoint::affine1(C::new(1.0, 0.0));
        let cloud = EmpiricalMeasure::new(
            vec![fixed],
            vec![1.0],
            crate::sampler::Provenance {
                seed_point: fixed,
                depth: 0,
                rng_seed: 0,
            },
        );
        let spectrum = LyapunovSpectrum {
            lambda: vec![LOG2],
            stderr: vec![0.0],
            n_steps: 1,
            n_orbits: 1,
            dropped_orbits: 0,
        };
        let r = jacobian_identity_residual(&f, &cloud, &spectrum).unwrap();
        assert!(r < 1e-12, "residual {r}");

        // equilibrium cloud: residual below 0.02
        let (f, cloud) = cloud_for("power2_k1", 2000);
        let s = lyapunov_spectrum(&f, &cloud, 400, 40, 3).unwrap();
        let r = jacobian_identity_residual(&f, &cloud, &s).unwrap();
        assert!(r < 0.02, "residual {r}");

        let (f, cloud) = cloud_for("power2_k2", 2000);
        let s = lyapunov_spectrum(&f, &cloud, 300, 30, 3).unwrap();
        let r = jacobian_identity_residual(&f, &cloud, &s).unwrap();
        assert!(r < 0.05, "residual {r}");
    }

    #[test]
    fn briend_duval_examples() {
        let spec = |l: f64| LyapunovSpectrum {
            lambda: vec![l],
            stderr: vec![0.0],
            n_steps: 1,
            n_orbits: 1,
            dropped_orbits: 0,
        };
        let (ok, margin) = briend_duval_check(&spec(LOG2), 2);
        assert!(ok);
        assert!((margin - 0.5 * LOG2).abs() < 1e-12);

        let (ok, margin) = briend_duval_check(&spec(0.5 * LOG2), 2);
        assert!(ok);
        assert!(margin.abs() < 1e-12);

        let (ok, _) = briend_duval_check(&spec(0.5), 4);
        assert!(!ok);
    }
}
