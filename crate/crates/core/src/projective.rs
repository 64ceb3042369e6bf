//! Points of CP^k in homogeneous coordinates and the chordal metric.
//!
//! Points are stored max-modulus normalized: the largest coordinate modulus
//! is 1. The distance is the chordal metric |p ^ q| / (|p| |q|), which is
//! bi-Lipschitz equivalent to the geodesic Fubini-Study distance and bounded
//! by 1.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Two points are the same projective point when their chordal distance is
/// below this tolerance.
pub const EQUALITY_TOL: f64 = 1e-10;

/// Coordinates below this threshold on a raw input vector are treated as zero.
const UNDERFLOW_TOL: f64 = 1e-280;

/// A point of CP^k, k <= 2, as k+1 homogeneous coordinates with max modulus 1.
#[derive(Clone, Copy, Debug)]
pub struct HomogeneousPoint {
    coords: [Complex64; 3],
    k: usize,
}

impl HomogeneousPoint {
    /// Normalize a raw coordinate vector (length k+1, k = 1 or 2) so that the
    /// largest coordinate modulus is 1. The scaling factor is real positive,
    /// so phases are preserved.
    pub fn normalize(raw: &[Complex64]) -> Result<Self> {
        let k = raw.len() - 1;
        assert!(k == 1 || k == 2, "only CP^1 and CP^2 are supported");
        let max = raw.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(max > UNDERFLOW_TOL) {
            return Err(Error::ZeroVector);
        }
        let mut coords = [Complex64::default(); 3];
        for (c, z) in coords.iter_mut().zip(raw) {
            *c = z / max;
        }
        Ok(Self { coords, k })
    }

    /// Affine point x of CP^1 as [x : 1].
    pub fn affine1(x: Complex64) -> Self {
        Self::normalize(&[x, Complex64::new(1.0, 0.0)]).expect("finite affine point")
    }

    /// Affine point (x, y) of CP^2 as [x : y : 1].
    pub fn affine2(x: Complex64, y: Complex64) -> Self {
        Self::normalize(&[x, y, Complex64::new(1.0, 0.0)]).expect("finite affine point")
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords[..=self.k]
    }

    /// Index of the max-modulus coordinate (first one on ties); the chart
    /// used to affinize at this point.
    pub fn chart(&self) -> usize {
        let mut best = 0;
        let mut best_mod = self.coords[0].norm();
        for (i, z) in self.coords().iter().enumerate().skip(1) {
            if z.norm() > best_mod {
                best = i;
                best_mod = z.norm();
            }
        }
        best
    }

    /// Affine coordinates in chart `j`: the k values z_i / z_j, i != j.
    /// Returns None if the chart coordinate is zero.
    pub fn in_chart(&self, j: usize) -> Option<Vec<Complex64>> {
        let zj = self.coords[j];
        if zj.norm() < UNDERFLOW_TOL {
            return None;
        }
        Some(
            self.coords()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .map(|(_, z)| z / zj)
                .collect(),
        )
    }

    /// Squared Euclidean norm of the normalized lift. In the max-modulus
    /// chart this equals 1 + |u|^2 with u the affine coordinates.
    pub fn lift_norm_sq(&self) -> f64 {
        self.coords().iter().map(|z| z.norm_sqr()).sum()
    }
}

impl PartialEq for HomogeneousPoint {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && fs_distance(self, other) < EQUALITY_TOL
    }
}

/// Chordal distance |p ^ q| / (|p| |q|) in [0, 1]. Computed from the wedge
/// components directly so that nearby points do not lose digits to
/// cancellation.
pub fn fs_distance(p: &HomogeneousPoint, q: &HomogeneousPoint) -> f64 {
    assert_eq!(p.k, q.k, "points live on different projective spaces");
    let a = p.coords();
    let b = q.coords();
    let mut wedge_sq = 0.0;
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            wedge_sq += (a[i] * b[j] - a[j] * b[i]).norm_sqr();
        }
    }
    let norms_sq = p.lift_norm_sq() * q.lift_norm_sq();
    (wedge_sq / norms_sq).sqrt().min(1.0)
}
