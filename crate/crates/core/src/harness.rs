//! Configuration-driven experiment pipeline: sample -> exponents -> entropy
//! -> dimension -> bounds -> growth, with every stage writing its CSV so a
//! run can be resumed from any checkpoint, and a final machine-readable
//! verification report.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;

use crate::catalog;
use crate::dimension::{
    self, derived_bounds, dimension_lower_bound, BoundInputs, RadiusLadder,
};
use crate::error::{Error, Result};
use crate::growth::{growth_check, GrowthCheck, PolydiscMap, QuadratureGrid};
use crate::lyapunov::{self, LyapunovSpectrum};
use crate::map::ProjectiveMap;
use crate::projective::HomogeneousPoint;
use crate::sampler::{self, EmpiricalMeasure};

/// Exponent clustering tolerance (nats) used to detect multiplicities.
pub const TAU_RES: f64 = 0.02;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub lyapunov: LyapunovSection,
    #[serde(default)]
    pub dimension: DimensionSection,
    #[serde(default)]
    pub growth: GrowthSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    /// Single map name, or use `names` for a multi-row report.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub names: Vec<String>,
    /// Path to a catalog file; the built-in catalog when absent.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
}

impl MapSection {
    pub fn resolved_names(&self) -> Result<Vec<String>> {
        let mut names = self.names.clone();
        if let Some(n) = &self.name {
            names.insert(0, n.clone());
        }
        if names.is_empty() {
            return Err(Error::Parse("config names no map (set map.name)".into()));
        }
        Ok(names)
    }

    pub fn load(&self, name: &str) -> Result<ProjectiveMap> {
        match &self.catalog {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                catalog::load_map(name, &text)
            }
            None => catalog::builtin_map(name),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub depth: usize,
    pub count: usize,
    pub seed: u64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            depth: 30,
            count: 100_000,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovSection {
    pub n_steps: usize,
    pub n_orbits: usize,
}

impl Default for LyapunovSection {
    fn default() -> Self {
        Self {
            n_steps: 1000,
            n_orbits: 100,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DimensionSection {
    pub r_max: f64,
    pub rho: f64,
    pub levels: usize,
    pub n_centers: usize,
    /// Dynamical ball radius for the entropy stage. When absent it is picked
    /// per dimension (0.05 on CP^1, 0.09 on CP^2, where balls must hold more
    /// mass to survive several depths).
    pub xi: Option<f64>,
    /// Maximum dynamical-ball depth; the fit stops where counts thin out.
    pub entropy_n: usize,
    pub entropy_centers: usize,
}

impl DimensionSection {
    pub fn effective_xi(&self, k: usize) -> f64 {
        self.xi.unwrap_or(if k == 1 { 0.05 } else { 0.09 })
    }
}

impl Default for DimensionSection {
    fn default() -> Self {
        Self {
            r_max: 0.1,
            rho: 0.8,
            levels: 20,
            n_centers: 50,
            xi: None,
            entropy_n: 12,
            entropy_centers: 20,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthSection {
    pub enabled: bool,
    pub m_max: usize,
    /// Disc names from [`builtin_discs`]; all discs of the right dimension
    /// when empty.
    pub discs: Vec<String>,
    pub grid: usize,
}

impl Default for GrowthSection {
    fn default() -> Self {
        Self {
            enabled: true,
            m_max: 6,
            discs: Vec::new(),
            grid: 256,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn ladder(&self) -> Result<RadiusLadder> {
        RadiusLadder::new(self.dimension.r_max, self.dimension.rho, self.dimension.levels)
    }
}

/// The bounded test discs shipped with the harness, per ambient dimension.
pub fn builtin_discs(k: usize) -> Vec<(String, PolydiscMap)> {
    let c = Complex64::new;
    match k {
        1 => vec![
            (
                "disc_a".into(),
                PolydiscMap::affine_disc_k1(c(0.3, 0.0), c(0.5, 0.0), 2.0),
            ),
            (
                "disc_b".into(),
                PolydiscMap::affine_disc_k1(c(-0.2, 0.1), c(0.0, 0.4), 2.0),
            ),
            (
                "disc_c".into(),
                PolydiscMap::affine_disc_k1(c(0.0, 0.0), c(0.6, 0.0), 2.0),
            ),
        ],
        _ => vec![
            (
                "line_a".into(),
                PolydiscMap::affine_disc_k2(c(0.2, 0.0), c(0.4, 0.0), c(0.3, 0.0), c(-0.3, 0.0), 2.0),
            ),
            (
                "line_b".into(),
                PolydiscMap::affine_disc_k2(c(0.1, -0.2), c(0.0, 0.35), c(-0.25, 0.1), c(0.3, 0.2), 2.0),
            ),
            (
                "line_c".into(),
                PolydiscMap::affine_disc_k2(c(0.0, 0.0), c(0.5, 0.0), c(0.4, 0.0), c(0.0, 0.0), 2.0),
            ),
        ],
    }
}

/// One verified map: every estimated quantity, the bound formulas evaluated
/// at the estimates, and the comparison verdicts.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub map: String,
    pub k: usize,
    pub d: u16,
    /// (lambda_i, stderr_i), descending, k entries.
    pub lambda: Vec<(f64, f64)>,
    pub entropy: f64,
    pub entropy_se: f64,
    pub dim_local_median: f64,
    pub dim_local_se: f64,
    pub dim_corr: f64,
    pub multiplicity_p: usize,
    pub bound_dim: f64,
    pub bound_equilibrium: f64,
    pub conjecture: f64,
    pub verdict_dim: bool,
    pub verdict_equilibrium: bool,
    pub verdict_exponent: bool,
    pub growth_pass: usize,
    pub growth_total: usize,
    pub identity_residual: f64,
    pub identity_sigma: f64,
    pub briend_duval_margin: f64,
    pub briend_duval_ok: bool,
    pub lattes_consistent: bool,
}

#[derive(Clone, Debug, Default)]
pub struct VerificationReport {
    pub rows: Vec<ReportRow>,
}

/// Standard error of the theorem bound at the estimate, by first-order
/// propagation, combined with the dimension spread. Unit-tested against a
/// hand-computed case.
pub fn propagated_sigma(
    b: &BoundInputs,
    se_l1: f64,
    se_lk: f64,
    se_h: f64,
    se_dim: f64,
) -> f64 {
    let log_d = (b.d as f64).ln();
    let front = (b.k - b.p) as f64 * log_d;
    let d_l1 = -front / (b.lambda1 * b.lambda1);
    let d_lk = -(b.entropy - front) / (b.lambdak * b.lambdak);
    let d_h = 1.0 / b.lambdak;
    ((d_l1 * se_l1).powi(2) + (d_lk * se_lk).powi(2) + (d_h * se_h).powi(2) + se_dim.powi(2))
        .sqrt()
}

/// Same propagation for the equilibrium corollary bound (no entropy term).
pub fn propagated_sigma_cor_a(b: &BoundInputs, se_l1: f64, se_lk: f64, se_dim: f64) -> f64 {
    let log_d = (b.d as f64).ln();
    let d_l1 = -(b.k as f64 - 1.0) * log_d / (b.lambda1 * b.lambda1);
    let d_lk = -log_d / (b.lambdak * b.lambdak);
    ((d_l1 * se_l1).powi(2) + (d_lk * se_lk).powi(2) + se_dim.powi(2)).sqrt()
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Sample a cloud, retrying with a fresh generic seed point when the walk
/// abort rate flags the point as exceptional.
pub fn sample_stage(
    f: &ProjectiveMap,
    depth: usize,
    count: usize,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    let mut last = Error::ExceptionalSeed;
    for attempt in 0..3 {
        let a = sampler::generic_seed_point(f.k(), seed.wrapping_add(attempt * 7919));
        match sampler::sample_equilibrium(f, &a, depth, count, seed) {
            Ok(cloud) => return Ok(cloud),
            Err(e @ Error::ExceptionalSeed) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Sample stage: cloud plus its CSV.
pub fn run_sample_stage(
    config: &ExperimentConfig,
    name: &str,
    f: &ProjectiveMap,
) -> Result<EmpiricalMeasure> {
    let out = &config.output.dir;
    fs::create_dir_all(out)?;
    let seed = config.sampler.seed;
    let cloud = stage(
        "sample",
        sample_stage(f, config.sampler.depth, config.sampler.count, seed),
    )?;
    let mut w = fs::File::create(out.join(format!("{name}.cloud.csv")))?;
    cloud.write_csv(&mut w)?;
    Ok(cloud)
}

/// Exponent stage: spectrum, integral-identity residual and the smallest
/// exponent margin, plus the CSV.
pub fn run_lyapunov_stage(
    config: &ExperimentConfig,
    name: &str,
    f: &ProjectiveMap,
    cloud: &EmpiricalMeasure,
) -> Result<(LyapunovSpectrum, f64, f64, bool)> {
    let out = &config.output.dir;
    fs::create_dir_all(out)?;
    let seed = config.sampler.seed;
    let spectrum = stage(
        "lyapunov",
        lyapunov::lyapunov_spectrum(
            f,
            cloud,
            config.lyapunov.n_steps,
            config.lyapunov.n_orbits,
            seed ^ 0x1,
        ),
    )?;
    let identity_residual = stage(
        "lyapunov",
        lyapunov::jacobian_identity_residual(f, cloud, &spectrum),
    )?;
    let (bd_ok, bd_margin) = lyapunov::briend_duval_check(&spectrum, f.degree());
    write_spectrum_csv(out, name, &spectrum, identity_residual, bd_margin)?;
    Ok((spectrum, identity_residual, bd_margin, bd_ok))
}

/// Entropy stage: dynamical-ball decay rate with spread, plus the CSV.
pub fn run_entropy_stage(
    config: &ExperimentConfig,
    name: &str,
    f: &ProjectiveMap,
    cloud: &EmpiricalMeasure,
) -> Result<(f64, f64)> {
    let out = &config.output.dir;
    fs::create_dir_all(out)?;
    let xi = config.dimension.effective_xi(f.k());
    let (entropy, entropy_se, _) = stage(
        "entropy",
        dimension::entropy_rate_mean(
            f,
            cloud,
            xi,
            config.dimension.entropy_n,
            config.dimension.entropy_centers,
            config.sampler.seed ^ 0x2,
        ),
    )?;
    write_entropy_csv(out, name, config, xi, entropy, entropy_se)?;
    Ok((entropy, entropy_se))
}

/// Dimension stage: per-center local estimates, their median, and the
/// correlation dimension, plus the CSV.
pub fn run_dimension_stage(
    config: &ExperimentConfig,
    name: &str,
    cloud: &EmpiricalMeasure,
) -> Result<(f64, f64, f64)> {
    let out = &config.output.dir;
    fs::create_dir_all(out)?;
    let seed = config.sampler.seed;
    let ladder = config.ladder()?;
    let centers = dimension::local_dimension_centers(
        cloud,
        &ladder,
        config.dimension.n_centers,
        seed ^ 0x3,
    );
    let corr = stage(
        "dimension",
        dimension::correlation_dimension(cloud, &ladder, seed ^ 0x4),
    )?;
    write_dimension_csv(out, name, &centers, &corr)?;
    let (dim_med, dim_se, _) = stage("dimension", dimension::aggregate_centers(&centers))?;
    Ok((dim_med, dim_se, corr.slope))
}

/// Growth stage: the bound sweep over the configured discs, plus the CSV.
/// Returns (passed, total).
pub fn run_growth_stage(
    config: &ExperimentConfig,
    name: &str,
    f: &ProjectiveMap,
) -> Result<(usize, usize)> {
    if !config.growth.enabled {
        return Ok((0, 0));
    }
    let out = &config.output.dir;
    fs::create_dir_all(out)?;
    let all_discs = builtin_discs(f.k());
    let selected: Vec<(String, PolydiscMap)> = if config.growth.discs.is_empty() {
        all_discs
    } else {
        all_discs
            .into_iter()
            .filter(|(n, _)| config.growth.discs.contains(n))
            .collect()
    };
    let grid = QuadratureGrid::polar(config.growth.grid, config.growth.grid, 1.0);
    let mut growth_rows: Vec<(String, usize, GrowthCheck)> = Vec::new();
    for (disc_name, disc) in &selected {
        for m in 0..=config.growth.m_max {
            let g = stage("growth", growth_check(f, m, disc, &grid))?;
            growth_rows.push((disc_name.clone(), m, g));
        }
    }
    write_growth_csv(out, name, &growth_rows)?;
    let growth_pass = growth_rows.iter().filter(|(_, _, g)| g.pass).count();
    Ok((growth_pass, growth_rows.len()))
}

/// Run the full pipeline for every configured map, writing stage CSVs and
/// returning the report. Deterministic for a fixed config.
pub fn run_verify(config: &ExperimentConfig) -> Result<VerificationReport> {
    let out = &config.output.dir;
    fs::create_dir_all(out)?;
    let mut report = VerificationReport::default();
    for name in config.map.resolved_names()? {
        let row = run_one_map(config, &name)?;
        report.rows.push(row);
    }
    emit_report(&report, out)?;
    Ok(report)
}

fn run_one_map(config: &ExperimentConfig, name: &str) -> Result<ReportRow> {
    let f = stage("load", config.map.load(name))?;
    let k = f.k();
    let d = f.degree();
    let log_d = (d as f64).ln();

    let cloud = run_sample_stage(config, name, &f)?;
    let (spectrum, identity_residual, bd_margin, bd_ok) =
        run_lyapunov_stage(config, name, &f, &cloud)?;
    let (entropy, entropy_se) = run_entropy_stage(config, name, &f, &cloud)?;
    let (dim_med, dim_se, dim_corr) = run_dimension_stage(config, name, &cloud)?;

    // bounds
    let p = spectrum.smallest_multiplicity(TAU_RES);
    let h_capped = entropy.clamp(0.0, k as f64 * log_d);
    let b = stage(
        "bounds",
        BoundInputs::new(d, k, p, spectrum.lambda[0], spectrum.lambda[k - 1], h_capped),
    )?;
    let bound_dim = dimension_lower_bound(&b);
    let cv = derived_bounds(&b);
    let sigma_dim_bound = propagated_sigma(
        &b,
        spectrum.stderr[0],
        spectrum.stderr[k - 1],
        entropy_se,
        dim_se,
    );
    let sigma_equilibrium = propagated_sigma_cor_a(&b, spectrum.stderr[0], spectrum.stderr[k - 1], dim_se);

    let (growth_pass, growth_total) = run_growth_stage(config, name, &f)?;

    let half_log_d = 0.5 * (d as f64).ln();
    let (lk, lk_se) = spectrum.smallest();
    Ok(ReportRow {
        map: name.to_string(),
        k,
        d,
        lambda: spectrum
            .lambda
            .iter()
            .zip(&spectrum.stderr)
            .map(|(l, s)| (*l, *s))
            .collect(),
        entropy,
        entropy_se,
        dim_local_median: dim_med,
        dim_local_se: dim_se,
        dim_corr,
        multiplicity_p: p,
        bound_dim,
        bound_equilibrium: cv.equilibrium_bound,
        conjecture: cv.conjecture,
        verdict_dim: dim_med >= bound_dim - 3.0 * sigma_dim_bound,
        verdict_equilibrium: dim_med >= cv.equilibrium_bound - 3.0 * sigma_equilibrium,
        verdict_exponent: cv.exponent_ok,
        growth_pass,
        growth_total,
        identity_residual,
        identity_sigma: sigma_identity(&spectrum),
        briend_duval_margin: bd_margin,
        briend_duval_ok: bd_ok,
        lattes_consistent: (lk - half_log_d).abs() <= 0.03 * half_log_d + 3.0 * lk_se,
    })
}

fn sigma_identity(spectrum: &LyapunovSpectrum) -> f64 {
    2.0 * spectrum
        .stderr
        .iter()
        .map(|s| s * s)
        .sum::<f64>()
        .sqrt()
}

fn write_spectrum_csv(
    out: &Path,
    name: &str,
    s: &LyapunovSpectrum,
    identity_residual: f64,
    bd_margin: f64,
) -> Result<()> {
    let mut w = fs::File::create(out.join(format!("{name}.spectrum.csv")))?;
    writeln!(
        w,
        "map,i,lambda,stderr,n_steps,n_orbits,identity_residual,briend_duval_margin"
    )?;
    for (i, (l, se)) in s.lambda.iter().zip(&s.stderr).enumerate() {
        writeln!(
            w,
            "{name},{},{:.12},{:.12},{},{},{:.12},{:.12}",
            i + 1,
            l,
            se,
            s.n_steps,
            s.n_orbits,
            identity_residual,
            bd_margin
        )?;
    }
    Ok(())
}

fn write_entropy_csv(
    out: &Path,
    name: &str,
    config: &ExperimentConfig,
    xi: f64,
    entropy: f64,
    se: f64,
) -> Result<()> {
    let mut w = fs::File::create(out.join(format!("{name}.entropy.csv")))?;
    writeln!(w, "map,xi,n_max,entropy,stderr,n_centers")?;
    writeln!(
        w,
        "{name},{xi},{},{entropy:.12},{se:.12},{}",
        config.dimension.entropy_n, config.dimension.entropy_centers
    )?;
    Ok(())
}

fn write_dimension_csv(
    out: &Path,
    name: &str,
    centers: &[(usize, dimension::DimensionEstimate)],
    corr: &dimension::DimensionEstimate,
) -> Result<()> {
    let mut w = fs::File::create(out.join(format!("{name}.dimension.csv")))?;
    writeln!(w, "quantity,center_id,slope,ci95,fit_lo,fit_hi")?;
    for (id, est) in centers {
        writeln!(
            w,
            "local,{id},{:.12},{:.12},{},{}",
            est.slope, est.ci95, est.fit_lo, est.fit_hi
        )?;
    }
    writeln!(
        w,
        "correlation,,{:.12},{:.12},{},{}",
        corr.slope, corr.ci95, corr.fit_lo, corr.fit_hi
    )?;
    Ok(())
}

fn write_growth_csv(
    out: &Path,
    name: &str,
    rows: &[(String, usize, GrowthCheck)],
) -> Result<()> {
    let mut w = fs::File::create(out.join(format!("{name}.growth.csv")))?;
    writeln!(w, "map,l,m,volume,bound,ratio,pass,disc")?;
    for (disc, m, g) in rows {
        writeln!(
            w,
            "{name},1,{m},{:.12},{:.12},{:.12},{},{disc}",
            g.volume, g.bound, g.ratio, g.pass
        )?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Write `report.csv` (fixed columns, one row per map) and a human summary
/// `report.md` into the directory.
pub fn emit_report(report: &VerificationReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = fs::File::create(dir.join("report.csv"))?;
    writeln!(
        csv,
        "map,k,d,lambda1,lambda1_se,lambda2,lambda2_se,entropy,dim_local_median,dim_corr,\
         bound_thmA,bound_corA,conjecture,verdict_thmA,verdict_corA,verdict_corC1,growth_pass,growth_total"
    )?;
    for r in &report.rows {
        let l1 = r.lambda.first().copied();
        let l2 = r.lambda.get(1).copied();
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{}",
            r.map,
            r.k,
            r.d,
            fmt_opt(l1.map(|x| x.0)),
            fmt_opt(l1.map(|x| x.1)),
            fmt_opt(l2.map(|x| x.0)),
            fmt_opt(l2.map(|x| x.1)),
            r.entropy,
            r.dim_local_median,
            r.dim_corr,
            r.bound_dim,
            r.bound_equilibrium,
            r.conjecture,
            verdict(r.verdict_dim),
            verdict(r.verdict_equilibrium),
            verdict(r.verdict_exponent),
            r.growth_pass,
            r.growth_total
        )?;
    }

    let mut md = fs::File::create(dir.join("report.md"))?;
    writeln!(md, "# Verification report\n")?;
    writeln!(
        md,
        "Dimension lower bound, corollary values and growth checks per map.\n\
         Raw data: `<map>.cloud.csv`, `<map>.spectrum.csv`, `<map>.entropy.csv`,\n\
         `<map>.dimension.csv`, `<map>.growth.csv` in this directory.\n"
    )?;
    for r in &report.rows {
        writeln!(md, "## {}\n", r.map)?;
        writeln!(md, "- k = {}, d = {}, topological degree {}", r.k, r.d, (r.d as u64).pow(r.k as u32))?;
        for (i, (l, se)) in r.lambda.iter().enumerate() {
            writeln!(md, "- lambda_{} = {:.4} +- {:.4}", i + 1, l, se)?;
        }
        writeln!(
            md,
            "- entropy (dynamical-ball decay rate) = {:.4} +- {:.4}",
            r.entropy, r.entropy_se
        )?;
        writeln!(
            md,
            "- median local dimension = {:.4} +- {:.4}; correlation dimension = {:.4}",
            r.dim_local_median, r.dim_local_se, r.dim_corr
        )?;
        writeln!(
            md,
            "- exponent multiplicity p = {} (clustering tolerance {TAU_RES})",
            r.multiplicity_p
        )?;
        writeln!(
            md,
            "- dimension bound = {:.4}, equilibrium corollary = {:.4}, conjectured value = {:.4}",
            r.bound_dim, r.bound_equilibrium, r.conjecture
        )?;
        writeln!(
            md,
            "- verdicts: bound {}, corollary {}, exponent bound {}",
            verdict(r.verdict_dim),
            verdict(r.verdict_equilibrium),
            verdict(r.verdict_exponent)
        )?;
        writeln!(
            md,
            "- exponent-Jacobian identity residual = {:.4} (sigma {:.4}); smallest-exponent margin over log sqrt(d) = {:.4} ({})",
            r.identity_residual,
            r.identity_sigma,
            r.briend_duval_margin,
            if r.briend_duval_ok { "ok" } else { "VIOLATED" }
        )?;
        writeln!(md, "- growth checks passed: {}/{}", r.growth_pass, r.growth_total)?;
        if r.lattes_consistent {
            writeln!(
                md,
                "- exponents sit at log sqrt(d): Lattes-consistent (not certified from coefficients)"
            )?;
        }
        writeln!(md)?;
    }
    Ok(())
}

fn verdict(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Read a cloud back from its CSV export (the stage-isolation path for the
/// command-line tools).
pub fn read_cloud_csv(path: &Path) -> Result<EmpiricalMeasure> {
    let file = fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty cloud csv".into()))??;
    let ncols = header.split(',').count();
    let k = match ncols {
        5 => 1,
        7 => 2,
        _ => return Err(Error::Parse(format!("unexpected cloud header '{header}'"))),
    };
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| Error::Parse(format!("bad float '{v}'"))))
            .collect::<Result<_>>()?;
        if vals.len() != ncols {
            return Err(Error::Parse("ragged cloud csv".into()));
        }
        let mut coords = Vec::with_capacity(k + 1);
        for i in 0..=k {
            coords.push(Complex64::new(vals[2 * i], vals[2 * i + 1]));
        }
        points.push(HomogeneousPoint::normalize(&coords)?);
        weights.push(vals[ncols - 1]);
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        for w in weights.iter_mut() {
            *w /= total;
        }
    }
    let p0 = *points.first().ok_or_else(|| Error::Parse("cloud csv has no rows".into()))?;
    Ok(EmpiricalMeasure::new(
        points,
        weights,
        sampler::Provenance {
            seed_point: p0,
            depth: 0,
            rng_seed: 0,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml("[map]\nname = \"power2_k1\"\n").unwrap();
        assert_eq!(cfg.map.resolved_names().unwrap(), vec!["power2_k1"]);
        assert_eq!(cfg.sampler.depth, 30);
        assert_eq!(cfg.lyapunov.n_steps, 1000);
        assert_eq!(cfg.growth.m_max, 6);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(ExperimentConfig::from_toml("[map]\nname = \"x\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn unknown_map_fails_at_load_stage() {
        let cfg = ExperimentConfig::from_toml(
            "[map]\nname = \"no_such_map\"\n[output]\ndir = \"/tmp/cpk-test-load\"\n",
        )
        .unwrap();
        match run_verify(&cfg) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "load"),
            other => panic!("expected load-stage error, got {other:?}"),
        }
    }

    #[test]
    fn propagated_sigma_hand_case() {
        // d=2, k=2, p=1, l1=0.7, lk=0.5, h=1.2:
        // front = log 2, dl1 = -log2/0.49, dlk = -(1.2-log2)/0.25, dh = 2
        let b = BoundInputs::new(2, 2, 1, 0.7, 0.5, 1.2).unwrap();
        let log2 = std::f64::consts::LN_2;
        let d_l1 = -log2 / 0.49;
        let d_lk = -(1.2 - log2) / 0.25;
        let d_h = 2.0;
        let by_hand = ((d_l1 * 0.01f64).powi(2)
            + (d_lk * 0.02f64).powi(2)
            + (d_h * 0.03f64).powi(2)
            + 0.04f64.powi(2))
        .sqrt();
        let got = propagated_sigma(&b, 0.01, 0.02, 0.03, 0.04);
        assert!((got - by_hand).abs() < 1e-12);
    }

    #[test]
    fn report_csv_shape() {
        let dir = std::env::temp_dir().join("cpk-report-shape");
        let report = VerificationReport { rows: vec![] };
        emit_report(&report, &dir).unwrap();
        let text = fs::read_to_string(dir.join("report.csv")).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert_eq!(header.split(',').count(), 18);
        assert!(lines.next().is_none());
    }
}
