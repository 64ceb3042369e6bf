//! Dimension and local-entropy estimators over sample clouds, and the
//! closed-form dimension bounds they are compared against.
//!
//! The pointwise r -> 0 limits are replaced by log-log regression over a
//! geometric radius ladder, with the fit window chosen as the longest
//! stretch where every ball keeps enough samples and the local slope is
//! stable. Ball counting is a brute-force distance scan (clouds here stay at
//! or below 1e5 points).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::map::ProjectiveMap;
use crate::projective::{fs_distance, HomogeneousPoint};
use crate::sampler::EmpiricalMeasure;

/// Minimum samples a ball must hold to take part in a fit.
const MIN_BALL_COUNT: usize = 20;
/// Admissible relative variation of the local slope inside a fit window.
const SLOPE_VARIATION: f64 = 0.25;
/// Target expected count when auto-selecting the dynamical-ball depth.
const MIN_DYNBALL_COUNT: usize = 30;

/// Geometric radius ladder r_j = r_max * rho^j, j = 0..=levels.
#[derive(Clone, Debug)]
pub struct RadiusLadder {
    radii: Vec<f64>,
}

impl RadiusLadder {
    pub fn new(r_max: f64, rho: f64, levels: usize) -> Result<Self> {
        if !(r_max > 0.0 && r_max <= 1.0 && rho > 0.0 && rho < 1.0) {
            return Err(Error::Parse(
                "ladder needs 0 < r_max <= 1 and 0 < rho < 1".into(),
            ));
        }
        let radii: Vec<f64> = (0..=levels).map(|j| r_max * rho.powi(j as i32)).collect();
        Ok(Self { radii })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }
}

impl Default for RadiusLadder {
    fn default() -> Self {
        Self::new(0.1, 0.8, 20).expect("default ladder is valid")
    }
}

/// A log-log regression estimate of a dimension-like quantity.
#[derive(Clone, Debug)]
pub struct DimensionEstimate {
    pub slope: f64,
    pub ci95: f64,
    pub n_centers: usize,
    pub ladder: RadiusLadder,
    /// Fit window into the ladder (inclusive indices).
    pub fit_lo: usize,
    pub fit_hi: usize,
    /// Min/max slope over contiguous length-5 sub-windows: conservative
    /// stand-ins for the lower/upper pointwise dimension.
    pub slope_min5: f64,
    pub slope_max5: f64,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    // 95% CI half-width of the slope
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (ym + slope * (x - xm))).powi(2))
        .sum();
    let dof = (xs.len().max(3) - 2) as f64;
    let ci95 = 1.96 * (ss_res / dof / sxx).sqrt();
    (slope, ci95)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Masses and counts per ladder radius, then the windowed log-log fit shared
/// by the pointwise and correlation estimators.
fn fit_ladder(
    ladder: &RadiusLadder,
    masses: &[f64],
    counts: &[usize],
    n_centers: usize,
) -> Result<DimensionEstimate> {
    let radii = ladder.radii();
    let valid: Vec<bool> = masses
        .iter()
        .zip(counts)
        .map(|(m, c)| *m > 0.0 && *c >= MIN_BALL_COUNT)
        .collect();
    let log_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let log_m: Vec<f64> = masses.iter().map(|m| if *m > 0.0 { m.ln() } else { f64::NAN }).collect();

    let window_ok = |lo: usize, hi: usize| -> bool {
        if (lo..=hi).any(|j| !valid[j]) {
            return false;
        }
        let slopes: Vec<f64> = (lo..hi)
            .map(|j| (log_m[j] - log_m[j + 1]) / (log_r[j] - log_r[j + 1]))
            .collect();
        let med = median(&mut slopes.clone());
        let tol = SLOPE_VARIATION * med.abs().max(0.2);
        slopes.iter().all(|s| (s - med).abs() <= tol)
    };

    let mut best: Option<(usize, usize)> = None;
    for lo in 0..radii.len() {
        for hi in (lo + 2)..radii.len() {
            if window_ok(lo, hi) {
                let len = hi - lo;
                if best.map(|(a, b)| b - a).unwrap_or(0) < len {
                    best = Some((lo, hi));
                }
            }
        }
    }
    let (lo, hi) = best.ok_or(Error::EmptyBall)?;
    let xs = &log_r[lo..=hi];
    let ys = &log_m[lo..=hi];
    let (slope, ci95) = least_squares(xs, ys);

    let mut min5 = slope;
    let mut max5 = slope;
    if hi - lo + 1 >= 5 {
        min5 = f64::MAX;
        max5 = f64::MIN;
        for start in lo..=(hi - 4) {
            let (s, _) = least_squares(&log_r[start..start + 5], &log_m[start..start + 5]);
            min5 = min5.min(s);
            max5 = max5.max(s);
        }
    }
    Ok(DimensionEstimate {
        slope,
        ci95,
        n_centers,
        ladder: ladder.clone(),
        fit_lo: lo,
        fit_hi: hi,
        slope_min5: min5,
        slope_max5: max5,
    })
}

/// Pointwise dimension at `x`: least-squares slope of log ball mass against
/// log radius over the stable window of the ladder.
pub fn local_dimension(
    cloud: &EmpiricalMeasure,
    x: &HomogeneousPoint,
    ladder: &RadiusLadder,
) -> Result<DimensionEstimate> {
    let mut dw: Vec<(f64, f64)> = cloud
        .points()
        .iter()
        .zip(cloud.weights())
        .map(|(p, w)| (fs_distance(p, x), *w))
        .collect();
    dw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let radii = ladder.radii();
    let mut masses = vec![0.0; radii.len()];
    let mut counts = vec![0usize; radii.len()];
    for (j, r) in radii.iter().enumerate() {
        let cut = dw.partition_point(|(d, _)| d < r);
        counts[j] = cut;
        masses[j] = dw[..cut].iter().map(|(_, w)| w).sum();
    }
    fit_ladder(ladder, &masses, &counts, 1)
}

/// Per-center local dimension estimates at `n_centers` cloud points chosen
/// by the seed. Centers whose fit fails (not enough samples at any radius)
/// are skipped.
pub fn local_dimension_centers(
    cloud: &EmpiricalMeasure,
    ladder: &RadiusLadder,
    n_centers: usize,
    seed: u64,
) -> Vec<(usize, DimensionEstimate)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2545_f491_4f6c_dd1d);
    let centers: Vec<(usize, HomogeneousPoint)> = (0..n_centers)
        .map(|id| (id, cloud.points()[rng.gen_range(0..cloud.len())]))
        .collect();
    let estimates = crate::par::map_collect(centers, |(id, c)| {
        local_dimension(cloud, &c, ladder).ok().map(|e| (id, e))
    });
    estimates.into_iter().flatten().collect()
}

/// Median slope across centers with its standard error.
pub fn aggregate_centers(centers: &[(usize, DimensionEstimate)]) -> Result<(f64, f64, usize)> {
    let mut slopes: Vec<f64> = centers.iter().map(|(_, e)| e.slope).collect();
    if slopes.is_empty() {
        return Err(Error::EmptyBall);
    }
    let n = slopes.len();
    let med = median(&mut slopes);
    let mean = slopes.iter().sum::<f64>() / n as f64;
    let var = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    let se = (var / n as f64).sqrt();
    Ok((med, se, n))
}

/// Median local dimension over seeded cloud centers, with its spread.
pub fn local_dimension_median(
    cloud: &EmpiricalMeasure,
    ladder: &RadiusLadder,
    n_centers: usize,
    seed: u64,
) -> Result<(f64, f64, usize)> {
    aggregate_centers(&local_dimension_centers(cloud, ladder, n_centers, seed))
}

/// Correlation dimension: slope of the pair-correlation integral C(r). The
/// cloud is subsampled so that at most ~1e7 pairs are scanned.
pub fn correlation_dimension(
    cloud: &EmpiricalMeasure,
    ladder: &RadiusLadder,
    seed: u64,
) -> Result<DimensionEstimate> {
    let max_pairs: usize = 10_000_000;
    let m = cloud
        .len()
        .min(((2.0 * max_pairs as f64).sqrt()) as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x94d0_49bb_1331_11eb);
    let mut idx: Vec<usize> = (0..cloud.len()).collect();
    for i in 0..m {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    let sub: Vec<HomogeneousPoint> = idx[..m].iter().map(|&i| cloud.points()[i]).collect();

    let radii = ladder.radii();
    // count pairs per level, in parallel over the first index
    let rows = crate::par::map_collect((0..m).collect(), |i| {
        let mut row = vec![0usize; radii.len()];
        for j in (i + 1)..m {
            let d = fs_distance(&sub[i], &sub[j]);
            for (l, r) in radii.iter().enumerate() {
                if d < *r {
                    row[l] += 1;
                } else {
                    break;
                }
            }
        }
        row
    });
    let mut counts = vec![0usize; radii.len()];
    for row in rows {
        for (l, c) in row.iter().enumerate() {
            counts[l] += c;
        }
    }
    let total_pairs = m * (m - 1) / 2;
    let masses: Vec<f64> = counts.iter().map(|c| *c as f64 / total_pairs as f64).collect();
    fit_ladder(ladder, &masses, &counts, m)
}

/// Weights and counts of the dynamical balls B_q(x, xi) for q = 0..=n:
/// cloud points whose first q iterates stay xi-close to those of x.
pub fn dynamical_ball_masses(
    f: &ProjectiveMap,
    cloud: &EmpiricalMeasure,
    x: &HomogeneousPoint,
    xi: f64,
    n: usize,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut masses = Vec::with_capacity(n + 1);
    let mut counts = Vec::with_capacity(n + 1);
    let mut center = *x;
    let mut survivors: Vec<(HomogeneousPoint, f64)> = cloud
        .points()
        .iter()
        .zip(cloud.weights())
        .filter(|(p, _)| fs_distance(p, &center) < xi)
        .map(|(p, w)| (*p, *w))
        .collect();
    masses.push(survivors.iter().map(|(_, w)| w).sum());
    counts.push(survivors.len());
    for _ in 0..n {
        center = f.evaluate(&center)?;
        let mut next = Vec::with_capacity(survivors.len());
        for (p, w) in survivors {
            let fp = f.evaluate(&p)?;
            if fs_distance(&fp, &center) < xi {
                next.push((fp, w));
            }
        }
        survivors = next;
        masses.push(survivors.iter().map(|(_, w)| w).sum());
        counts.push(survivors.len());
    }
    Ok((masses, counts))
}

/// Brin-Katok local entropy at finite scale: -(1/n) log of the weight of the
/// n-dynamical ball of radius xi at x.
pub fn brin_katok_entropy(
    f: &ProjectiveMap,
    cloud: &EmpiricalMeasure,
    x: &HomogeneousPoint,
    xi: f64,
    n: usize,
) -> Result<f64> {
    assert!(n >= 1 && xi > 0.0);
    let (masses, _) = dynamical_ball_masses(f, cloud, x, xi, n)?;
    let mass = masses[n];
    if mass <= 0.0 {
        return Err(Error::EmptyDynamicalBall {
            lower_bound: (cloud.len() as f64).ln() / n as f64,
        });
    }
    Ok(-mass.ln() / n as f64)
}

/// Entropy as the decay rate of dynamical-ball mass: least-squares slope of
/// -log mass against q, using depths where the ball still holds enough
/// samples. This removes the additive log(1/xi) bias of the fixed-n
/// estimator, which at feasible sample sizes dominates the direct formula.
pub fn entropy_decay_rate(
    f: &ProjectiveMap,
    cloud: &EmpiricalMeasure,
    x: &HomogeneousPoint,
    xi: f64,
    n_max: usize,
) -> Result<f64> {
    let (masses, counts) = dynamical_ball_masses(f, cloud, x, xi, n_max)?;
    let q_hi = counts
        .iter()
        .rposition(|c| *c >= MIN_DYNBALL_COUNT)
        .unwrap_or(0);
    if q_hi < 1 {
        return Err(Error::EmptyDynamicalBall {
            lower_bound: (cloud.len() as f64).ln() / n_max.max(1) as f64,
        });
    }
    let xs: Vec<f64> = (0..=q_hi).map(|q| q as f64).collect();
    let ys: Vec<f64> = masses[..=q_hi].iter().map(|m| -m.ln()).collect();
    let (slope, _) = least_squares(&xs, &ys);
    Ok(slope)
}

/// Entropy decay rate averaged over seeded cloud centers, with its standard
/// error. The mean (not the median) is used: per-center few-step slopes
/// fluctuate with the local derivative along the orbit, and only their
/// Birkhoff-style average is centered on the entropy when the invariant
/// density is far from uniform.
pub fn entropy_rate_mean(
    f: &ProjectiveMap,
    cloud: &EmpiricalMeasure,
    xi: f64,
    n_max: usize,
    n_centers: usize,
    seed: u64,
) -> Result<(f64, f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xda94_2042_e4dd_58b5);
    let centers: Vec<HomogeneousPoint> = (0..n_centers)
        .map(|_| cloud.points()[rng.gen_range(0..cloud.len())])
        .collect();
    let rates = crate::par::map_collect(centers, |c| {
        entropy_decay_rate(f, cloud, &c, xi, n_max).ok()
    });
    let rates: Vec<f64> = rates.into_iter().flatten().collect();
    if rates.is_empty() {
        return Err(Error::EmptyDynamicalBall {
            lower_bound: (cloud.len() as f64).ln() / n_max.max(1) as f64,
        });
    }
    let n = rates.len();
    let mean = rates.iter().sum::<f64>() / n as f64;
    let var = rates.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    Ok((mean, (var / n as f64).sqrt(), n))
}

/// Inputs of the dimension bound formulas.
#[derive(Clone, Copy, Debug)]
pub struct BoundInputs {
    pub d: u16,
    pub k: usize,
    /// Multiplicity of the smallest exponent.
    pub p: usize,
    pub lambda1: f64,
    pub lambdak: f64,
    pub entropy: f64,
}

impl BoundInputs {
    pub fn new(d: u16, k: usize, p: usize, lambda1: f64, lambdak: f64, entropy: f64) -> Result<Self> {
        let ok = d >= 2
            && k >= 1
            && (1..=k).contains(&p)
            && lambdak > 0.0
            && lambdak <= lambda1
            && entropy >= 0.0
            && entropy <= k as f64 * (d as f64).ln() + 1e-9;
        if !ok {
            return Err(Error::Parse(format!(
                "invalid bound inputs: d={d} k={k} p={p} l1={lambda1} lk={lambdak} h={entropy}"
            )));
        }
        Ok(Self {
            d,
            k,
            p,
            lambda1,
            lambdak,
            entropy,
        })
    }

    /// Entropy too small for the (k-p) log d split; the bound formula is
    /// still returned but its second term is negative.
    pub fn entropy_deficient(&self) -> bool {
        self.entropy < (self.k - self.p) as f64 * (self.d as f64).ln()
    }
}

/// The pointwise dimension lower bound
/// log d^(k-p) / lambda_1 + (h - log d^(k-p)) / lambda_k.
pub fn dimension_lower_bound(b: &BoundInputs) -> f64 {
    let log_d = (b.d as f64).ln();
    let front = (b.k - b.p) as f64 * log_d;
    front / b.lambda1 + (b.entropy - front) / b.lambdak
}

#[derive(Clone, Copy, Debug)]
pub struct DerivedBounds {
    /// log d^(k-1)/lambda_1 + log d/lambda_k.
    pub equilibrium_bound: f64,
    /// log d * (multiplicity-weighted sum of 1/lambda_i).
    pub conjecture: f64,
    /// lambda_1 >= (1 - 1/k) log sqrt(d).
    pub exponent_ok: bool,
    /// phi(h) = [(1 + 1/k) log d^(k-1) - h] / 2.
    pub phi: f64,
}

/// The equilibrium-measure corollary bound, the conjectured exact dimension,
/// the large-entropy exponent bound flag and the phi margin.
pub fn derived_bounds(b: &BoundInputs) -> DerivedBounds {
    let k = b.k as f64;
    let log_d = (b.d as f64).ln();
    let equilibrium_bound = (k - 1.0) * log_d / b.lambda1 + log_d / b.lambdak;
    let conjecture = log_d * ((b.k - b.p) as f64 / b.lambda1 + b.p as f64 / b.lambdak);
    let exponent_ok = b.lambda1 >= (1.0 - 1.0 / k) * (b.d as f64).sqrt().ln();
    let phi = 0.5 * ((1.0 + 1.0 / k) * (k - 1.0) * log_d - b.entropy);
    DerivedBounds {
        equilibrium_bound,
        conjecture,
        exponent_ok,
        phi,
    }
}
