//! Univariate complex polynomials and their roots.
//!
//! Roots come from the eigenvalues of the companion matrix (complex
//! shifted Hessenberg QR with deflation) followed by Newton polishing on the
//! original polynomial. Degrees up to 8 are supported, which covers the map
//! catalog.

use num_complex::Complex64;

/// Dense univariate polynomial, coefficients in ascending degree order.
#[derive(Clone, Debug)]
pub struct UniPoly {
    pub coeffs: Vec<Complex64>,
}

pub const MAX_ROOT_DEGREE: usize = 8;

/// Residual target for Newton polishing, relative to the coefficient scale.
const POLISH_TOL: f64 = 1e-12;

impl UniPoly {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![] }
    }

    pub fn constant(c: Complex64) -> Self {
        Self { coeffs: vec![c] }
    }

    /// Largest coefficient modulus (0 for the empty polynomial).
    pub fn scale(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Degree after trimming coefficients negligible relative to the scale.
    pub fn effective_degree(&self, rel_tol: f64) -> usize {
        let cut = self.scale() * rel_tol;
        self.coeffs
            .iter()
            .rposition(|c| c.norm() > cut)
            .unwrap_or(0)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::default();
        for c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    pub fn derivative(&self) -> UniPoly {
        if self.coeffs.len() <= 1 {
            return UniPoly::zero();
        }
        UniPoly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * i as f64)
                .collect(),
        )
    }

    pub fn add(&self, other: &UniPoly) -> UniPoly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![Complex64::default(); n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            out[i] += c;
        }
        UniPoly::new(out)
    }

    pub fn mul(&self, other: &UniPoly) -> UniPoly {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return UniPoly::zero();
        }
        let mut out = vec![Complex64::default(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        UniPoly::new(out)
    }

    pub fn scaled(&self, s: Complex64) -> UniPoly {
        UniPoly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// All roots of the polynomial, with the effective degree determined by
    /// trimming tiny leading coefficients (relative tolerance 1e-12). The
    /// number of trimmed leading coefficients is the multiplicity "at
    /// infinity" for callers solving dehomogenized binary forms; it equals
    /// `nominal_degree - roots.len()` for a vector of nominal length.
    pub fn roots(&self) -> Vec<Complex64> {
        let deg = self.effective_degree(1e-12);
        if deg == 0 {
            return vec![];
        }
        assert!(
            deg <= MAX_ROOT_DEGREE,
            "root solving supports degree <= {MAX_ROOT_DEGREE}"
        );
        let c = &self.coeffs[..=deg];
        let mut roots = match deg {
            1 => vec![-c[0] / c[1]],
            2 => quadratic_roots(c[0], c[1], c[2]),
            _ => companion_eigenvalues(c),
        };
        for r in roots.iter_mut() {
            *r = self.polish(*r);
        }
        roots
    }

    /// A few Newton steps on the full polynomial; returns the improved root
    /// (or the input if Newton stalls, e.g. near a multiple root).
    pub fn polish(&self, mut z: Complex64) -> Complex64 {
        let deriv = self.derivative();
        let scale = self.scale().max(f64::MIN_POSITIVE);
        let mut best = z;
        let mut best_res = self.eval(z).norm();
        for _ in 0..20 {
            let f = self.eval(z);
            if f.norm() <= POLISH_TOL * scale {
                return z;
            }
            let df = deriv.eval(z);
            if df.norm() < 1e-300 {
                break;
            }
            z -= f / df;
            let res = self.eval(z).norm();
            if res < best_res {
                best = z;
                best_res = res;
            } else {
                break;
            }
        }
        best
    }
}

/// Numerically stable quadratic formula.
fn quadratic_roots(c0: Complex64, c1: Complex64, c2: Complex64) -> Vec<Complex64> {
    let disc = (c1 * c1 - 4.0 * c2 * c0).sqrt();
    // Pick the sign that avoids cancellation in -b -+ sqrt(disc).
    let q = if (c1 + disc).norm() >= (c1 - disc).norm() {
        -0.5 * (c1 + disc)
    } else {
        -0.5 * (c1 - disc)
    };
    if q.norm() > 0.0 {
        vec![q / c2, c0 / q]
    } else {
        // c1 = disc = 0: double root at 0 shifted by nothing.
        let r = (-c0 / c2).sqrt();
        vec![r, -r]
    }
}

/// Eigenvalues of the companion matrix of a polynomial with coefficients
/// `c[0..=n]`, `c[n] != 0`, via shifted Hessenberg QR with Givens rotations.
fn companion_eigenvalues(c: &[Complex64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let lead = c[n];
    // Companion matrix: subdiagonal ones, last column -c[i]/c[n].
    let mut h = vec![vec![Complex64::default(); n]; n];
    for i in 1..n {
        h[i][i - 1] = Complex64::new(1.0, 0.0);
    }
    for i in 0..n {
        h[i][n - 1] = -c[i] / lead;
    }
    hessenberg_qr_eigenvalues(&mut h)
}

/// Eigenvalues of a complex upper Hessenberg matrix by the shifted QR
/// iteration. Matrices here are at most 8x8, so no balancing or fancy
/// deflation strategies are needed.
fn hessenberg_qr_eigenvalues(h: &mut [Vec<Complex64>]) -> Vec<Complex64> {
    let n = h.len();
    let mut eigs = Vec::with_capacity(n);
    let mut hi = n; // active block is 0..hi
    let mut iters_since_deflation = 0usize;
    let max_total_iters = 200 * n;
    let mut total = 0usize;

    while hi > 0 {
        if hi == 1 {
            eigs.push(h[0][0]);
            hi = 0;
            continue;
        }
        // Deflate when a subdiagonal entry is negligible.
        let mut deflated = false;
        for m in (1..hi).rev() {
            let tiny = f64::EPSILON * (h[m - 1][m - 1].norm() + h[m][m].norm()).max(1e-300);
            if h[m][m - 1].norm() <= tiny {
                if m == hi - 1 {
                    eigs.push(h[hi - 1][hi - 1]);
                    hi -= 1;
                    iters_since_deflation = 0;
                    deflated = true;
                }
                break;
            }
        }
        if deflated {
            continue;
        }
        if hi == 2 || (total >= max_total_iters) {
            // Solve the trailing 2x2 directly (also the bail-out path).
            let a = h[hi - 2][hi - 2];
            let b = h[hi - 2][hi - 1];
            let cc = h[hi - 1][hi - 2];
            let d = h[hi - 1][hi - 1];
            for r in quadratic_roots(a * d - b * cc, -(a + d), Complex64::new(1.0, 0.0)) {
                eigs.push(r);
            }
            hi -= 2;
            iters_since_deflation = 0;
            continue;
        }

        // Wilkinson shift from the trailing 2x2 block (exceptional ad-hoc
        // shift every 12 stalled iterations).
        let shift = if iters_since_deflation > 0 && iters_since_deflation % 12 == 0 {
            h[hi - 1][hi - 1] + Complex64::new(1.0, 0.5) * h[hi - 1][hi - 2].norm()
        } else {
            wilkinson_shift(
                h[hi - 2][hi - 2],
                h[hi - 2][hi - 1],
                h[hi - 1][hi - 2],
                h[hi - 1][hi - 1],
            )
        };

        // One implicit QR sweep via explicit Givens rotations on H - shift I.
        for i in 0..hi {
            h[i][i] -= shift;
        }
        let mut rotations = Vec::with_capacity(hi - 1);
        for m in 0..hi - 1 {
            let (cs, sn) = givens(h[m][m], h[m + 1][m]);
            apply_givens_left(h, m, cs, sn, hi);
            rotations.push((cs, sn));
        }
        for (m, (cs, sn)) in rotations.into_iter().enumerate() {
            apply_givens_right(h, m, cs, sn, hi);
        }
        for i in 0..hi {
            h[i][i] += shift;
        }
        iters_since_deflation += 1;
        total += 1;
    }
    eigs
}

fn wilkinson_shift(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    // Eigenvalue of [[a, b], [c, d]] closest to d.
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - 4.0 * det).sqrt();
    let l1 = 0.5 * (tr + disc);
    let l2 = 0.5 * (tr - disc);
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Givens rotation zeroing the second component of (a, b).
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64) {
    let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if norm < 1e-300 {
        return (1.0, Complex64::default());
    }
    if a.norm() < 1e-300 {
        return (0.0, Complex64::new(1.0, 0.0));
    }
    let cs = a.norm() / norm;
    let phase = a / a.norm();
    let sn = phase * b.conj() / norm;
    (cs, sn)
}

fn apply_givens_left(h: &mut [Vec<Complex64>], m: usize, cs: f64, sn: Complex64, hi: usize) {
    for j in 0..hi {
        let x = h[m][j];
        let y = h[m + 1][j];
        h[m][j] = cs * x + sn * y;
        h[m + 1][j] = -sn.conj() * x + cs * y;
    }
}

fn apply_givens_right(h: &mut [Vec<Complex64>], m: usize, cs: f64, sn: Complex64, hi: usize) {
    for row in h.iter_mut().take(hi) {
        let x = row[m];
        let y = row[m + 1];
        row[m] = cs * x + sn.conj() * y;
        row[m + 1] = -sn * x + cs * y;
    }
}
