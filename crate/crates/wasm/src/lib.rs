//! Browser bindings for the CP^1 maps of the catalog: sample equilibrium
//! measure clouds, evaluate the Green potential on a grid, and trace the
//! log-log ball-mass curve behind the local dimension estimate.

use num_complex::Complex64;
use wasm_bindgen::prelude::*;

use cpk_core::catalog;
use cpk_core::dimension::{local_dimension, RadiusLadder};
use cpk_core::growth::green_potential;
use cpk_core::harness::sample_stage;
use cpk_core::sampler::EmpiricalMeasure;

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Names of the CP^1 maps available to the demo, as a JSON array.
#[wasm_bindgen]
pub fn catalog_names() -> String {
    let names: Vec<String> = catalog::parse_catalog(catalog::BUILTIN_CATALOG)
        .expect("builtin catalog parses")
        .iter()
        .filter(|m| m.k() == 1)
        .map(|m| m.name().to_string())
        .collect();
    serde_json::to_string(&names).expect("names serialize")
}

fn sample(map: &str, depth: u32, count: u32, seed: u32) -> Result<(cpk_core::ProjectiveMap, EmpiricalMeasure), JsValue> {
    let f = catalog::builtin_map(map).map_err(err)?;
    if f.k() != 1 {
        return Err(err("the demo draws CP^1 maps only"));
    }
    let cloud = sample_stage(&f, depth as usize, count as usize, seed as u64).map_err(err)?;
    Ok((f, cloud))
}

/// Equilibrium measure cloud in the affine chart: interleaved re, im of
/// z_0 / z_1 per sample. Points too close to infinity are dropped.
#[wasm_bindgen]
pub fn sample_cloud(map: &str, depth: u32, count: u32, seed: u32) -> Result<Vec<f64>, JsValue> {
    let (_, cloud) = sample(map, depth, count, seed)?;
    let mut out = Vec::with_capacity(2 * cloud.len());
    for p in cloud.points() {
        if let Some(u) = p.in_chart(1) {
            if u[0].norm() < 1e6 {
                out.push(u[0].re);
                out.push(u[0].im);
            }
        }
    }
    Ok(out)
}

/// Green potential G(x + iy, 1) on a grid over [x0, x1] x [y0, y1],
/// row-major with ny rows of nx values.
#[wasm_bindgen]
pub fn green_field(
    map: &str,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    nx: u32,
    ny: u32,
) -> Result<Vec<f64>, JsValue> {
    let f = catalog::builtin_map(map).map_err(err)?;
    if f.k() != 1 {
        return Err(err("the demo draws CP^1 maps only"));
    }
    let mut out = Vec::with_capacity((nx * ny) as usize);
    for j in 0..ny {
        let y = y0 + (y1 - y0) * (j as f64 + 0.5) / ny as f64;
        for i in 0..nx {
            let x = x0 + (x1 - x0) * (i as f64 + 0.5) / nx as f64;
            let lift = [Complex64::new(x, y), Complex64::new(1.0, 0.0)];
            let g = green_potential(&f, &lift, 200).map_err(err)?;
            out.push(g.value);
        }
    }
    Ok(out)
}

/// Ball-mass curve behind the pointwise dimension at a sampled center:
/// JSON with the radii, masses, fitted slope and fit window.
#[wasm_bindgen]
pub fn dimension_curve(map: &str, depth: u32, count: u32, seed: u32) -> Result<String, JsValue> {
    let (_, cloud) = sample(map, depth, count, seed)?;
    let ladder = RadiusLadder::default();
    let center = cloud.points()[cloud.len() / 2];
    let est = local_dimension(&cloud, &center, &ladder).map_err(err)?;
    let radii = ladder.radii();
    let masses: Vec<f64> = radii.iter().map(|r| cloud.ball_mass(&center, *r)).collect();
    let u = center.in_chart(1).map(|u| (u[0].re, u[0].im)).unwrap_or((f64::NAN, f64::NAN));
    let json = serde_json::json!({
        "radii": radii,
        "masses": masses,
        "slope": est.slope,
        "ci95": est.ci95,
        "fit_lo": est.fit_lo,
        "fit_hi": est.fit_hi,
        "slope_min5": est.slope_min5,
        "slope_max5": est.slope_max5,
        "center": { "re": u.0, "im": u.1 },
    });
    Ok(json.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_lists_k1_maps() {
        let names: Vec<String> = serde_json::from_str(&catalog_names()).unwrap();
        assert!(names.contains(&"power2_k1".to_string()));
        assert!(names.contains(&"lattes4_k1".to_string()));
        assert!(!names.contains(&"power2_k2".to_string()));
    }

    #[test]
    fn cloud_and_curve_roundtrip() {
        let pts = sample_cloud("power2_k1", 22, 2000, 5).unwrap();
        assert_eq!(pts.len() % 2, 0);
        assert!(pts.len() >= 2 * 1900);
        // all on the unit circle
        let on_circle = pts
            .chunks(2)
            .filter(|c| ((c[0] * c[0] + c[1] * c[1]).sqrt() - 1.0).abs() < 0.01)
            .count();
        assert!(on_circle as f64 > 0.99 * (pts.len() / 2) as f64);

        let curve = dimension_curve("power2_k1", 22, 20000, 5).unwrap();
        let v: serde_json::Value = serde_json::from_str(&curve).unwrap();
        let slope = v["slope"].as_f64().unwrap();
        assert!((slope - 1.0).abs() < 0.25, "slope {slope}");
    }

    #[test]
    fn green_field_matches_closed_form() {
        // power map: G(z, 1) = max(log |z|, 0)
        let vals = green_field("power2_k1", -2.0, 2.0, -2.0, 2.0, 8, 8).unwrap();
        assert_eq!(vals.len(), 64);
        for (idx, v) in vals.iter().enumerate() {
            let i = idx % 8;
            let j = idx / 8;
            let x = -2.0 + 4.0 * (i as f64 + 0.5) / 8.0;
            let y = -2.0 + 4.0 * (j as f64 + 0.5) / 8.0;
            let exact = (x * x + y * y).sqrt().ln().max(0.0);
            assert!((v - exact).abs() < 1e-8, "G({x},{y}) = {v} vs {exact}");
        }
    }
}
