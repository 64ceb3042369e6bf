//! The map catalog: a block-structured text format describing projective
//! maps with exact decimal or rational coefficient literals.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hompoly::HomPoly;
use crate::map::{Family, ProjectiveMap};

/// The catalog shipped with the crate.
pub const BUILTIN_CATALOG: &str = include_str!("builtin_maps.cat");

/// Parse one decimal or rational literal ("0.1", "-2", "3/2").
fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad rational numerator '{num}'")))?;
        let d: f64 = den
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad rational denominator '{den}'")))?;
        if d == 0.0 {
            return Err(Error::Parse("rational with zero denominator".into()));
        }
        Ok(n / d)
    } else {
        s.parse()
            .map_err(|_| Error::Parse(format!("bad numeric literal '{s}'")))
    }
}

/// Coefficient literal: `re` or `re,im`.
fn parse_coeff(s: &str) -> Result<Complex64> {
    match s.split_once(',') {
        Some((re, im)) => Ok(Complex64::new(parse_number(re)?, parse_number(im)?)),
        None => Ok(Complex64::new(parse_number(s)?, 0.0)),
    }
}

/// One `(i,j,k):coeff` pair.
fn parse_term(s: &str, nvars: usize) -> Result<([u16; 3], Complex64)> {
    let s = s.trim();
    let open = s
        .strip_prefix('(')
        .ok_or_else(|| Error::Parse(format!("term '{s}' must start with a multi-index")))?;
    let (idx_str, rest) = open
        .split_once(')')
        .ok_or_else(|| Error::Parse(format!("unclosed multi-index in '{s}'")))?;
    let coeff_str = rest
        .trim()
        .strip_prefix(':')
        .ok_or_else(|| Error::Parse(format!("missing ':' before coefficient in '{s}'")))?;
    let exps: Vec<u16> = idx_str
        .split(',')
        .map(|e| {
            e.trim()
                .parse::<u16>()
                .map_err(|_| Error::Parse(format!("bad exponent '{e}'")))
        })
        .collect::<Result<_>>()?;
    if exps.len() != nvars {
        return Err(Error::Parse(format!(
            "multi-index ({idx_str}) must have {nvars} entries"
        )));
    }
    let mut idx = [0u16; 3];
    idx[..nvars].copy_from_slice(&exps);
    Ok((idx, parse_coeff(coeff_str)?))
}

#[derive(Default)]
struct Block {
    name: Option<String>,
    k: Option<usize>,
    d: Option<u16>,
    family: Option<String>,
    components: Vec<(usize, String)>,
}

impl Block {
    fn build(self) -> Result<ProjectiveMap> {
        let name = self.name.ok_or_else(|| Error::Parse("block missing 'name'".into()))?;
        let missing = |what: &str| Error::Parse(format!("map '{name}' missing '{what}'"));
        let k = self.k.ok_or_else(|| missing("k"))?;
        let d = self.d.ok_or_else(|| missing("d"))?;
        let family = Family::parse(&self.family.ok_or_else(|| missing("family"))?)?;
        let nvars = k + 1;
        let mut comps: Vec<Option<HomPoly>> = vec![None; nvars];
        for (i, text) in self.components {
            if i >= nvars {
                return Err(Error::Parse(format!(
                    "map '{name}' has component_{i} but k = {k}"
                )));
            }
            let terms = text
                .split(';')
                .filter(|t| !t.trim().is_empty())
                .map(|t| parse_term(t, nvars))
                .collect::<Result<Vec<_>>>()?;
            comps[i] = Some(HomPoly::new(nvars, d, terms)?);
        }
        let components = comps
            .into_iter()
            .enumerate()
            .map(|(i, c)| c.ok_or_else(|| missing(&format!("component_{i}"))))
            .collect::<Result<Vec<_>>>()?;
        ProjectiveMap::new(name, k, d, family, components)
    }
}

/// Parse a whole catalog. Blocks are separated by blank lines; `#` starts a
/// comment line.
pub fn parse_catalog(text: &str) -> Result<Vec<ProjectiveMap>> {
    let mut maps = Vec::new();
    let mut block: Option<Block> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            if let Some(b) = block.take() {
                maps.push(b.build()?);
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected 'key = value'", lineno + 1)))?;
        let key = key.trim();
        let value = value.trim().to_string();
        let b = block.get_or_insert_with(Block::default);
        match key {
            "name" => b.name = Some(value),
            "k" => {
                b.k = Some(value.parse().map_err(|_| {
                    Error::Parse(format!("line {}: bad k '{value}'", lineno + 1))
                })?)
            }
            "d" => {
                b.d = Some(value.parse().map_err(|_| {
                    Error::Parse(format!("line {}: bad d '{value}'", lineno + 1))
                })?)
            }
            "family" => b.family = Some(value),
            _ if key.starts_with("component_") => {
                let i: usize = key["component_".len()..]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad component key '{key}'")))?;
                b.components.push((i, value));
            }
            _ => return Err(Error::Parse(format!("line {}: unknown key '{key}'", lineno + 1))),
        }
    }
    if let Some(b) = block.take() {
        maps.push(b.build()?);
    }
    Ok(maps)
}

/// Load one map by name from catalog text.
pub fn load_map(name: &str, catalog_text: &str) -> Result<ProjectiveMap> {
    parse_catalog(catalog_text)?
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| Error::Parse(format!("map '{name}' not found in catalog")))
}

/// Load one map by name from the built-in catalog.
pub fn builtin_map(name: &str) -> Result<ProjectiveMap> {
    load_map(name, BUILTIN_CATALOG)
}

/// Names in the built-in catalog, in file order.
pub fn builtin_names() -> Vec<String> {
    parse_catalog(BUILTIN_CATALOG)
        .expect("builtin catalog parses")
        .into_iter()
        .map(|m| m.name().to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_catalog_is_valid() {
        let maps = parse_catalog(BUILTIN_CATALOG).unwrap();
        assert_eq!(maps.len(), 8);
        let names: Vec<&str> = maps.iter().map(|m| m.name()).collect();
        assert!(names.contains(&"power2_k1"));
        assert!(names.contains(&"chebyshev2"));
        assert!(names.contains(&"lattes4_k1"));
        assert!(names.contains(&"skew2_k2"));
    }

    #[test]
    fn load_named_maps() {
        let f = builtin_map("power2_k1").unwrap();
        assert_eq!((f.k(), f.degree()), (1, 2));
        let t = builtin_map("chebyshev2").unwrap();
        assert_eq!(t.components()[0].terms().len(), 2);
        assert!(builtin_map("no_such_map").is_err());
    }

    #[test]
    fn malformed_blocks_error() {
        let missing_component = "name = broken\nk = 1\nd = 2\nfamily = rational_k1\ncomponent_0 = (2,0):1\n";
        assert!(matches!(parse_catalog(missing_component), Err(Error::Parse(_))));

        let bad_term = "name = broken\nk = 1\nd = 2\nfamily = rational_k1\ncomponent_0 = 2,0:1\ncomponent_1 = (0,2):1\n";
        assert!(parse_catalog(bad_term).is_err());
    }

    #[test]
    fn rational_and_complex_literals() {
        let text = "name = t\nk = 1\nd = 2\nfamily = rational_k1\ncomponent_0 = (2,0):1; (0,2):1/4,-1/2\ncomponent_1 = (0,2):1\n";
        let maps = parse_catalog(text).unwrap();
        let c = maps[0].components()[0]
            .terms()
            .iter()
            .find(|(i, _)| *i == [0, 2, 0])
            .unwrap()
            .1;
        assert_eq!(c, Complex64::new(0.25, -0.5));
    }
}
