//! Endomorphisms of CP^k given by homogeneous polynomial components, their
//! evaluation, chart Jacobians and the Jacobian density of the Fubini-Study
//! volume form.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hompoly::HomPoly;
use crate::projective::HomogeneousPoint;

/// Structural family of a map; preimage solving is staged accordingly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Any rational map on CP^1.
    RationalK1,
    /// CP^2 skew product over the [z0 : z2] line: components 0 and 2 depend
    /// on (z0, z2) only, component 1 may involve everything.
    SkewProductK2,
    /// CP^2 product: component 0 in (z0, z2), component 1 in (z1, z2),
    /// component 2 in z2 only.
    ProductK2,
    /// General CP^2 map; accepted by the catalog but preimages are refused.
    GeneralK2,
}

impl Family {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rational_k1" => Ok(Family::RationalK1),
            "skew_product_k2" => Ok(Family::SkewProductK2),
            "product_k2" => Ok(Family::ProductK2),
            "general_k2" => Ok(Family::GeneralK2),
            other => Err(Error::Parse(format!("unknown family '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::RationalK1 => "rational_k1",
            Family::SkewProductK2 => "skew_product_k2",
            Family::ProductK2 => "product_k2",
            Family::GeneralK2 => "general_k2",
        }
    }
}

/// An endomorphism f = [P_0 : ... : P_k] of CP^k with homogeneous degree-d
/// components and no common zero besides the origin.
#[derive(Clone, Debug)]
pub struct ProjectiveMap {
    name: String,
    k: usize,
    degree: u16,
    family: Family,
    components: Vec<HomPoly>,
    partials: Vec<Vec<HomPoly>>,
    coeff_scale: f64,
}

impl ProjectiveMap {
    pub fn new(
        name: impl Into<String>,
        k: usize,
        degree: u16,
        family: Family,
        components: Vec<HomPoly>,
    ) -> Result<Self> {
        let name = name.into();
        let fail = |reason: &str| Error::InvalidMap {
            name: name.clone(),
            reason: reason.into(),
        };
        if !(k == 1 || k == 2) {
            return Err(fail("only k = 1, 2 supported"));
        }
        if degree < 2 {
            return Err(fail("degree must be >= 2"));
        }
        if components.len() != k + 1 {
            return Err(fail("need k+1 components"));
        }
        for c in &components {
            if c.nvars() != k + 1 || c.degree() != degree || c.is_zero() {
                return Err(fail("components must be nonzero homogeneous of the map degree"));
            }
        }
        match (k, family) {
            (1, Family::RationalK1) => {}
            (2, Family::SkewProductK2) => {
                if !components[0].independent_of(1) || !components[2].independent_of(1) {
                    return Err(fail("skew product base components must not involve z1"));
                }
            }
            (2, Family::ProductK2) => {
                let ok = components[0].independent_of(1)
                    && components[1].independent_of(0)
                    && components[2].independent_of(0)
                    && components[2].independent_of(1);
                if !ok {
                    return Err(fail("product components must split variables"));
                }
            }
            (2, Family::GeneralK2) => {}
            _ => return Err(fail("family does not match the dimension")),
        }
        let partials = components
            .iter()
            .map(|p| (0..=k).map(|v| p.partial(v)).collect())
            .collect();
        let coeff_scale = components.iter().map(|c| c.coeff_norm()).fold(0.0, f64::max);
        let map = Self {
            name,
            k,
            degree,
            family,
            components,
            partials,
            coeff_scale,
        };
        map.check_no_common_zero()?;
        Ok(map)
    }

    /// Probabilistic properness check: the components must not vanish
    /// simultaneously at random witness points; for the solvable families the
    /// base binary forms are additionally checked exactly through their roots.
    fn check_no_common_zero(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidMap {
            name: self.name.clone(),
            reason,
        };
        let tol = 1e-9 * self.coeff_scale;
        let solvable = self.degree as usize <= crate::roots::MAX_ROOT_DEGREE;
        if self.k == 1 && solvable {
            self.binary_pair_proper(0, 1, tol)
                .map_err(|_| fail("components share a projective zero".into()))?;
        }
        if self.k == 2 && solvable && matches!(self.family, Family::SkewProductK2 | Family::ProductK2)
        {
            // Base components as binary forms in (z0, z2).
            self.binary_pair_proper(0, 2, tol)
                .map_err(|_| fail("base components share a projective zero".into()))?;
            // On the fiber over z0 = z2 = 0 only the z1^d monomial survives.
            let e1 = self.components[1]
                .terms()
                .iter()
                .find(|(idx, _)| idx[1] == self.degree)
                .map(|(_, c)| c.norm())
                .unwrap_or(0.0);
            if e1 <= tol {
                return Err(fail("component 1 needs a z1^d term (common zero at [0:1:0])".into()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15);
        for _ in 0..200 {
            let z: Vec<Complex64> = (0..=self.k)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let norm = z.iter().map(|c| c.norm()).fold(0.0, f64::max);
            if norm < 0.1 {
                continue;
            }
            let zn: Vec<Complex64> = z.iter().map(|c| c / norm).collect();
            let vmax = self
                .components
                .iter()
                .map(|p| p.eval(&zn).norm())
                .fold(0.0, f64::max);
            if vmax <= tol {
                return Err(fail(format!("components vanish simultaneously near {zn:?}")));
            }
        }
        Ok(())
    }

    /// Checks that components i and j, viewed as binary forms in (z_i', z_j'),
    /// have no common projective root: evaluate one at the roots of the other.
    fn binary_pair_proper(&self, vi: usize, vj: usize, tol: f64) -> Result<()> {
        let a = crate::sampler::binary_form_to_unipoly(&self.components[vi], vi, vj);
        let b = crate::sampler::binary_form_to_unipoly(&self.components[vj], vi, vj);
        let d = self.degree as usize;
        // finite roots of a (in z_vi / z_vj), plus a root at infinity when the
        // degree drops
        for r in a.roots() {
            let pt = [r, Complex64::new(1.0, 0.0)];
            let val = b.eval(pt[0]);
            let scale = b.scale() * r.norm().powi(d as i32).max(1.0);
            if val.norm() <= tol.max(1e-12 * scale) {
                return Err(Error::DegenerateFiber);
            }
        }
        if a.effective_degree(1e-12) < d {
            // a vanishes at [1 : 0]; b must not
            let lead = b.coeffs.get(d).map(|c| c.norm()).unwrap_or(0.0);
            if lead <= tol {
                return Err(Error::DegenerateFiber);
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn degree(&self) -> u16 {
        self.degree
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn components(&self) -> &[HomPoly] {
        &self.components
    }

    /// Topological degree d^k.
    pub fn topological_degree(&self) -> u64 {
        (self.degree as u64).pow(self.k as u32)
    }

    /// Degree (d-1)(k+1) of the critical hypersurface.
    pub fn critical_degree(&self) -> u64 {
        (self.degree as u64 - 1) * (self.k as u64 + 1)
    }

    /// Evaluate the homogeneous lift F at a raw coordinate vector.
    pub fn eval_lift(&self, z: &[Complex64]) -> Vec<Complex64> {
        self.components.iter().map(|p| p.eval(z)).collect()
    }

    /// Jacobian matrix of the lift, rows = components, columns = variables.
    pub fn lift_jacobian(&self, z: &[Complex64]) -> Vec<Vec<Complex64>> {
        self.partials
            .iter()
            .map(|row| row.iter().map(|p| p.eval(z)).collect())
            .collect()
    }

    /// Apply the map to a projective point.
    pub fn evaluate(&self, p: &HomogeneousPoint) -> Result<HomogeneousPoint> {
        let w = self.eval_lift(p.coords());
        let wmax = w.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if wmax <= 1e-12 * self.coeff_scale {
            return Err(Error::IndeterminatePoint);
        }
        HomogeneousPoint::normalize(&w)
    }

    /// Forward composition f o f o ... (n times) as a projective map, by
    /// symbolic substitution. Degrees grow as d^n; intended for small n.
    /// Properness is inherited from the factors, so the composed map skips
    /// the witness validation (whose thresholds lose meaning at degree d^n).
    pub fn iterate(&self, n: u32) -> Result<ProjectiveMap> {
        let mut comps = self.components.clone();
        for _ in 1..n {
            comps = comps.iter().map(|p| p.compose(&self.components)).collect();
        }
        let partials = comps
            .iter()
            .map(|p| (0..=self.k).map(|v| p.partial(v)).collect())
            .collect();
        let coeff_scale = comps.iter().map(|c| c.coeff_norm()).fold(0.0, f64::max);
        Ok(ProjectiveMap {
            name: format!("{}^{}", self.name, n),
            k: self.k,
            degree: self.degree.pow(n),
            family: if self.k == 1 { Family::RationalK1 } else { Family::GeneralK2 },
            components: comps,
            partials,
            coeff_scale,
        })
    }
}

/// Derivative of the affinized map between explicit charts, together with the
/// chart bookkeeping needed to multiply these along an orbit.
#[derive(Clone, Copy, Debug)]
pub struct ChartJacobian {
    pub matrix: [[Complex64; 2]; 2],
    pub k: usize,
    pub source_chart: usize,
    pub target_chart: usize,
}

impl ChartJacobian {
    pub fn det(&self) -> Complex64 {
        match self.k {
            1 => self.matrix[0][0],
            _ => self.matrix[0][0] * self.matrix[1][1] - self.matrix[0][1] * self.matrix[1][0],
        }
    }

    /// Ordered product other * self (apply self first). Requires matching
    /// charts at the junction.
    pub fn then(&self, other: &ChartJacobian) -> ChartJacobian {
        assert_eq!(self.target_chart, other.source_chart, "chart mismatch along orbit");
        let mut m = [[Complex64::default(); 2]; 2];
        for i in 0..self.k {
            for j in 0..self.k {
                for l in 0..self.k {
                    m[i][j] += other.matrix[i][l] * self.matrix[l][j];
                }
            }
        }
        ChartJacobian {
            matrix: m,
            k: self.k,
            source_chart: self.source_chart,
            target_chart: other.target_chart,
        }
    }
}

/// Chart Jacobian of `f` at `p`, affinizing source and target by their
/// max-modulus coordinates.
pub fn chart_jacobian(f: &ProjectiveMap, p: &HomogeneousPoint) -> Result<ChartJacobian> {
    let image = f.evaluate(p)?;
    chart_jacobian_between(f, p, p.chart(), image.chart())
}

/// Chart Jacobian with the charts chosen by the caller (the cocycle code
/// keeps charts sticky along an orbit). The target chart coordinate must be
/// usable: its modulus at the image must be at least `0.5` relative to the
/// max, otherwise the chart is rejected.
pub fn chart_jacobian_between(
    f: &ProjectiveMap,
    p: &HomogeneousPoint,
    source_chart: usize,
    target_chart: usize,
) -> Result<ChartJacobian> {
    let k = f.k();
    let z = p.coords();
    let mut w = f.eval_lift(z);
    let wmax = w.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if wmax <= 1e-12 * f.coeff_scale {
        return Err(Error::IndeterminatePoint);
    }
    if w[target_chart].norm() < 0.5 * wmax {
        return Err(Error::ChartDegenerate);
    }
    let mut m = f.lift_jacobian(z);
    for wi in w.iter_mut() {
        *wi /= wmax;
    }
    for row in m.iter_mut() {
        for e in row.iter_mut() {
            *e /= wmax;
        }
    }
    // d(w_i / w_t) applied to the chart directions at p: rows i != t,
    // columns l != s. The source chart coordinate is held fixed (= its
    // value at p), which is the affinization z_l = u_l * z_s.
    let zs = z[source_chart];
    let wt = w[target_chart];
    let mut matrix = [[Complex64::default(); 2]; 2];
    let rows: Vec<usize> = (0..=k).filter(|&i| i != target_chart).collect();
    let cols: Vec<usize> = (0..=k).filter(|&l| l != source_chart).collect();
    for (ri, &i) in rows.iter().enumerate() {
        for (ci, &l) in cols.iter().enumerate() {
            // chain rule for u_l -> z = (…, u_l zs, …)
            let dwi = m[i][l] * zs;
            let dwt = m[target_chart][l] * zs;
            matrix[ri][ci] = (dwi * wt - w[i] * dwt) / (wt * wt);
        }
    }
    Ok(ChartJacobian {
        matrix,
        k,
        source_chart,
        target_chart,
    })
}

/// The density Jac f of f^* omega^k against omega^k at p: the squared
/// modulus of the chart Jacobian determinant times the ratio of Fubini-Study
/// volume densities of the two charts. Vanishes exactly on the critical set.
pub fn jacobian_density(f: &ProjectiveMap, p: &HomogeneousPoint) -> Result<f64> {
    let jac = chart_jacobian(f, p)?;
    let image = f.evaluate(p)?;
    let k = f.k() as i32;
    // (1 + |u|^2) at a max-normalized lift equals the squared Euclidean norm
    // of the lift divided by |z_chart|^2.
    let s = p.lift_norm_sq() / p.coords()[jac.source_chart].norm_sqr();
    let t = image.lift_norm_sq() / image.coords()[jac.target_chart].norm_sqr();
    Ok(jac.det().norm_sqr() * (s / t).powi(k + 1))
}
