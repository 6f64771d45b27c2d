//! Model selection for the commands that need a moment functional, and the
//! small text formats the CLI accepts.

use std::collections::BTreeMap;
use std::path::Path;

use bifree_core::fock::{make_bisemicircular, make_circular_pair, FockModel};
use bifree_core::{BElement, CPMap, CPMapJson, Complex64, MomentFunctional, Monomial, Polynomial};
use serde::Deserialize;

/// `{"d": int, "left": [CPMap, ...], "right": [CPMap, ...]}`, with an
/// optional map from symbol name to family.
#[derive(Debug, Deserialize)]
pub struct ModelSpec {
    pub d: usize,
    #[serde(default)]
    pub left: Vec<CPMapJson>,
    #[serde(default)]
    pub right: Vec<CPMapJson>,
    #[serde(default)]
    pub families: BTreeMap<String, String>,
}

/// Builds the model named by `source`: a preset name or a path to a JSON
/// model spec.
///
/// Presets: `semicircular` (S1 and D1 with identity covariance over M_d),
/// `flip` (S1 and D1 over M₂ with the flip map), `circular` (the circular
/// pair cl, cl*, cr, cr*).
pub fn load_model(source: &str, d: usize) -> Result<FockModel, String> {
    match source {
        "semicircular" => make_bisemicircular(vec![CPMap::identity(d)], vec![CPMap::identity(d)])
            .map_err(|e| e.to_string()),
        "flip" => {
            make_bisemicircular(vec![CPMap::flip()], vec![CPMap::flip()]).map_err(|e| e.to_string())
        }
        "circular" => Ok(make_circular_pair()),
        path => {
            let text = std::fs::read_to_string(Path::new(path))
                .map_err(|e| format!("cannot read model {path:?}: {e}"))?;
            let spec: ModelSpec =
                serde_json::from_str(&text).map_err(|e| format!("bad model spec: {e}"))?;
            from_spec(&spec)
        }
    }
}

pub fn from_spec(spec: &ModelSpec) -> Result<FockModel, String> {
    let conv = |list: &[CPMapJson]| {
        list.iter()
            .map(|j| CPMap::try_from(j).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()
    };
    let left = conv(&spec.left)?;
    let right = conv(&spec.right)?;
    if left.iter().chain(&right).any(|m| m.dim() != spec.d) {
        return Err(format!(
            "every covariance map must have dimension {}",
            spec.d
        ));
    }
    let mut m = make_bisemicircular(left, right).map_err(|e| e.to_string())?;
    for (name, fam) in &spec.families {
        m.set_family(name, fam).map_err(|e| e.to_string())?;
    }
    Ok(m)
}

/// `identity`, `flip`, or a path to a CPMap JSON file.
pub fn load_cp_map(source: &str, d: usize) -> Result<CPMap, String> {
    match source {
        "identity" => Ok(CPMap::identity(d)),
        "flip" => Ok(CPMap::flip()),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read map {path:?}: {e}"))?;
            let j: CPMapJson =
                serde_json::from_str(&text).map_err(|e| format!("bad CP map: {e}"))?;
            CPMap::try_from(&j).map_err(|e| e.to_string())
        }
    }
}

/// Parses sums such as `S1`, `0.5*S1 S1 + 2*D1 - 1`. Coefficients are real.
pub fn parse_polynomial(text: &str) -> Result<Polynomial, String> {
    let mut terms = Vec::new();
    for (sign, raw) in split_terms(text) {
        let t = raw.trim();
        if t.is_empty() {
            return Err(format!("empty term in {text:?}"));
        }
        let (coef, word) = match t.split_once('*') {
            Some((c, w)) => {
                let c = c
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad coefficient {c:?}"))?;
                (c, w.trim())
            }
            None => match t.parse::<f64>() {
                Ok(c) => (c, ""),
                Err(_) => (1.0, t),
            },
        };
        terms.push((Complex64::new(sign * coef, 0.0), Monomial::parse(word)));
    }
    if terms.is_empty() {
        return Err(format!("empty polynomial {text:?}"));
    }
    Ok(Polynomial::from_terms(terms))
}

/// Splits at top-level `+` and `-`, leaving exponents such as `1e-3` intact.
fn split_terms(text: &str) -> Vec<(f64, &str)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut sign = 1.0;
    let mut start = 0;
    for (i, &c) in bytes.iter().enumerate() {
        if c != b'+' && c != b'-' {
            continue;
        }
        let exponent =
            i >= 2 && matches!(bytes[i - 1], b'e' | b'E') && bytes[i - 2].is_ascii_digit();
        if exponent {
            continue;
        }
        let before = text[start..i].trim();
        if !before.is_empty() {
            out.push((sign, before));
            sign = 1.0;
        }
        if c == b'-' {
            sign = -sign;
        }
        start = i + 1;
    }
    out.push((sign, text[start..].trim()));
    out.retain(|(_, t)| !t.is_empty());
    out
}

pub fn format_polynomial(p: &Polynomial) -> String {
    let parts: Vec<String> = p
        .terms()
        .iter()
        .map(|(c, m)| {
            let coef = if c.im == 0.0 {
                format!("{}", c.re)
            } else {
                format!("({}{:+}i)", c.re, c.im)
            };
            format!("{coef}*{m}")
        })
        .collect();
    if parts.is_empty() {
        "0".into()
    } else {
        parts.join(" + ")
    }
}

/// `[[re, ...], ...]` rows of a BElement for CSV output.
pub fn flatten(b: &BElement) -> Vec<(usize, usize, f64, f64)> {
    let d = b.dim();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let z = b.entry(i, j);
            out.push((i + 1, j + 1, z.re, z.im));
        }
    }
    out
}

pub fn check_symbols(m: &FockModel, word: &Monomial) -> Result<(), String> {
    for f in word.factors() {
        if let bifree_core::Factor::Gen(n) = f {
            m.lookup(n).map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sums() {
        let p = parse_polynomial("0.5*S1 S1 + 2*D1 - 1").unwrap();
        assert_eq!(p.terms().len(), 3);
        assert_eq!(p.terms()[0].0, Complex64::new(0.5, 0.0));
        assert_eq!(p.terms()[0].1, Monomial::parse("S1 S1"));
        assert_eq!(p.terms()[2].0, Complex64::new(-1.0, 0.0));
        assert!(p.terms()[2].1.is_empty());
    }

    #[test]
    fn exponents_and_leading_signs() {
        let p = parse_polynomial("-1e-3*S1 + 2.5E+1").unwrap();
        assert_eq!(p.terms()[0].0, Complex64::new(-1e-3, 0.0));
        assert_eq!(p.terms()[1].0, Complex64::new(25.0, 0.0));
        assert!(parse_polynomial("x*S1").is_err());
        assert!(parse_polynomial(" ").is_err());
    }

    #[test]
    fn bare_word_has_unit_coefficient() {
        let p = parse_polynomial("S1").unwrap();
        assert_eq!(
            p.terms(),
            &[(Complex64::new(1.0, 0.0), Monomial::gen("S1"))]
        );
    }

    #[test]
    fn presets_load() {
        assert_eq!(load_model("flip", 1).unwrap().dim(), 2);
        assert_eq!(load_model("semicircular", 3).unwrap().dim(), 3);
        assert!(load_model("/nonexistent.json", 1).is_err());
    }
}
