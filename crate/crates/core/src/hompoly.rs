//! Sparse homogeneous polynomials in k+1 variables (k <= 2) over complex
//! doubles: the coordinate components of projective maps.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Exponent vector; only the first `nvars` entries are meaningful.
pub type MIdx = [u16; 3];

/// A homogeneous polynomial of fixed degree. Terms are kept sorted in graded
/// lexicographic order with no duplicates and no exact-zero coefficients
/// (except that the zero polynomial keeps an empty term list).
#[derive(Clone, Debug)]
pub struct HomPoly {
    nvars: usize,
    degree: u16,
    terms: Vec<(MIdx, Complex64)>,
}

fn grlex(a: &MIdx, b: &MIdx) -> std::cmp::Ordering {
    let da: u32 = a.iter().map(|&e| e as u32).sum();
    let db: u32 = b.iter().map(|&e| e as u32).sum();
    da.cmp(&db).then_with(|| a.cmp(b))
}

impl HomPoly {
    pub fn new(nvars: usize, degree: u16, mut terms: Vec<(MIdx, Complex64)>) -> Result<Self> {
        assert!((2..=3).contains(&nvars));
        for (idx, _) in &terms {
            let total: u32 = idx[..nvars].iter().map(|&e| e as u32).sum();
            if total != degree as u32 || idx[nvars..].iter().any(|&e| e != 0) {
                return Err(Error::Parse(format!(
                    "monomial {:?} is not homogeneous of degree {degree}",
                    &idx[..nvars]
                )));
            }
        }
        terms.sort_by(|a, b| grlex(&a.0, &b.0));
        // merge duplicates
        let mut merged: Vec<(MIdx, Complex64)> = Vec::with_capacity(terms.len());
        for (idx, c) in terms {
            match merged.last_mut() {
                Some((last, acc)) if *last == idx => *acc += c,
                _ => merged.push((idx, c)),
            }
        }
        merged.retain(|(_, c)| c.norm() != 0.0);
        Ok(Self {
            nvars,
            degree,
            terms: merged,
        })
    }

    pub fn zero(nvars: usize, degree: u16) -> Self {
        Self {
            nvars,
            degree,
            terms: vec![],
        }
    }

    /// Single monomial c * z^idx.
    pub fn monomial(nvars: usize, idx: MIdx, c: Complex64) -> Self {
        let degree: u32 = idx[..nvars].iter().map(|&e| e as u32).sum();
        Self::new(nvars, degree as u16, vec![(idx, c)]).expect("monomial is homogeneous")
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> u16 {
        self.degree
    }

    pub fn terms(&self) -> &[(MIdx, Complex64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sum of coefficient moduli; the natural scale of values on the unit
    /// polydisc.
    pub fn coeff_norm(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.norm()).sum()
    }

    /// True if the polynomial does not involve variable `var`.
    pub fn independent_of(&self, var: usize) -> bool {
        self.terms.iter().all(|(idx, _)| idx[var] == 0)
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        debug_assert_eq!(z.len(), self.nvars);
        if self.degree <= 8 {
            // power-table path for the catalog degrees
            let d = self.degree as usize;
            let mut pows = [[Complex64::new(1.0, 0.0); 9]; 3];
            for (v, zv) in z.iter().enumerate() {
                for p in 1..=d {
                    pows[v][p] = pows[v][p - 1] * zv;
                }
            }
            let mut acc = Complex64::default();
            for (idx, c) in &self.terms {
                let mut t = *c;
                for v in 0..self.nvars {
                    t *= pows[v][idx[v] as usize];
                }
                acc += t;
            }
            acc
        } else {
            let mut acc = Complex64::default();
            for (idx, c) in &self.terms {
                let mut t = *c;
                for v in 0..self.nvars {
                    t *= z[v].powu(idx[v] as u32);
                }
                acc += t;
            }
            acc
        }
    }

    pub fn partial(&self, var: usize) -> HomPoly {
        let mut terms = Vec::new();
        for (idx, c) in &self.terms {
            if idx[var] > 0 {
                let mut nidx = *idx;
                nidx[var] -= 1;
                terms.push((nidx, c * idx[var] as f64));
            }
        }
        HomPoly::new(self.nvars, self.degree.saturating_sub(1), terms)
            .expect("derivative of homogeneous is homogeneous")
    }

    pub fn add(&self, other: &HomPoly) -> HomPoly {
        debug_assert_eq!(self.degree, other.degree);
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        HomPoly::new(self.nvars, self.degree, terms).expect("sum of homogeneous same degree")
    }

    pub fn mul(&self, other: &HomPoly) -> HomPoly {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ia, ca) in &self.terms {
            for (ib, cb) in &other.terms {
                let idx = [ia[0] + ib[0], ia[1] + ib[1], ia[2] + ib[2]];
                terms.push((idx, ca * cb));
            }
        }
        HomPoly::new(self.nvars, self.degree + other.degree, terms).expect("product homogeneous")
    }

    pub fn scaled(&self, s: Complex64) -> HomPoly {
        let terms = self.terms.iter().map(|(i, c)| (*i, c * s)).collect();
        HomPoly::new(self.nvars, self.degree, terms).expect("scaling preserves homogeneity")
    }

    /// Substitute the polynomials `subs` (one per variable, all of one common
    /// degree) for the variables. Used to compose projective maps.
    pub fn compose(&self, subs: &[HomPoly]) -> HomPoly {
        debug_assert_eq!(subs.len(), self.nvars);
        let sub_deg = subs[0].degree;
        let one = HomPoly::monomial(self.nvars, [0, 0, 0], Complex64::new(1.0, 0.0));
        let mut acc = HomPoly::zero(self.nvars, self.degree * sub_deg);
        for (idx, c) in &self.terms {
            let mut t = one.scaled(*c);
            for (v, sub) in subs.iter().enumerate() {
                for _ in 0..idx[v] {
                    t = t.mul(sub);
                }
            }
            acc = acc.add(&t);
        }
        acc
    }

    /// Restrict to a line in the variables: substitute univariate polynomials
    /// for each coordinate, producing a univariate polynomial in t.
    pub fn restrict_to_curve(&self, curve: &[crate::roots::UniPoly]) -> crate::roots::UniPoly {
        use crate::roots::UniPoly;
        let mut acc = UniPoly::zero();
        for (idx, c) in &self.terms {
            let mut t = UniPoly::constant(*c);
            for (v, comp) in curve.iter().enumerate() {
                for _ in 0..idx[v] {
                    t = t.mul(comp);
                }
            }
            acc = acc.add(&t);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;

    fn re(x: f64) -> C {
        C::new(x, 0.0)
    }

    #[test]
    fn rejects_inhomogeneous() {
        let r = HomPoly::new(2, 2, vec![([2, 0, 0], re(1.0)), ([1, 0, 0], re(1.0))]);
        assert!(r.is_err());
    }

    #[test]
    fn eval_and_partial() {
        // z^2 - 2 w^2 on C^2
        let p = HomPoly::new(2, 2, vec![([2, 0, 0], re(1.0)), ([0, 2, 0], re(-2.0))]).unwrap();
        assert!((p.eval(&[re(2.0), re(1.0)]) - re(2.0)).norm() < 1e-15);
        let dz = p.partial(0);
        assert!((dz.eval(&[re(2.0), re(1.0)]) - re(4.0)).norm() < 1e-15);
        let dw = p.partial(1);
        assert!((dw.eval(&[re(2.0), re(1.0)]) - re(-4.0)).norm() < 1e-15);
    }

    #[test]
    fn compose_square_map() {
        // components of f = [z^2 : w^2]; f o f = [z^4 : w^4]
        let p0 = HomPoly::monomial(2, [2, 0, 0], re(1.0));
        let p1 = HomPoly::monomial(2, [0, 2, 0], re(1.0));
        let q0 = p0.compose(&[p0.clone(), p1.clone()]);
        assert_eq!(q0.degree(), 4);
        assert_eq!(q0.terms().len(), 1);
        assert_eq!(q0.terms()[0].0, [4, 0, 0]);
    }
}
