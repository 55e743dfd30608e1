//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use susy_core::operator::MIN_OPERATOR_POINTS;
use susy_core::{Complex64, Tolerances};

use crate::CliError;

/// Highest truncation rank chosen when `K` is absent.
pub const DEFAULT_K_CAP: usize = 200;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub d: f64,
    pub n_points: usize,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub transformation: TransformationSpec,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(rename = "K", default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub oracle: OracleSpec,
    /// Test hook: skip the factorization-energy collision check.
    #[serde(default)]
    pub force_past_collision_guard: bool,
}

fn default_n_max() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialSpec {
    #[default]
    Zero,
    Constant(f64),
    /// `x,re,im` table on the run grid.
    Samples(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformationSpec {
    Exp {
        a: f64,
    },
    /// `A exp(i k x) + B exp(-i k x)`, coefficients as `[re, im]`.
    Combination {
        k: f64,
        a: [f64; 2],
        b: [f64; 2],
    },
    /// `x,re,im` table of `u`; needs a top-level `alpha`.
    Samples {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(rename = "r_HLLd")]
    pub r_hlld: f64,
    pub r_map: f64,
    pub r_herm_h01: f64,
    pub r_eig: f64,
    pub r_herm_h0: f64,
    /// Smallest accepted `1 - |overlap|` between the three `Phi_n` sources.
    pub phi_overlap: f64,
    /// Absolute agreement of quadrature and closed-form overlaps, scaled by `1/sqrt(d)`.
    pub overlap_abs: f64,
    /// Two-sided agreement of the cosine-series identities.
    pub identity: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        let t = Tolerances::default();
        ToleranceSpec {
            r_hlld: t.r_hlld,
            r_map: t.r_map,
            r_herm_h01: t.r_herm_h01,
            r_eig: t.r_eig,
            r_herm_h0: t.r_herm_h0,
            phi_overlap: 2e-3,
            overlap_abs: 1e-8,
            identity: 1e-6,
        }
    }
}

impl ToleranceSpec {
    pub fn report(&self) -> Tolerances {
        Tolerances {
            r_hlld: self.r_hlld,
            r_map: self.r_map,
            r_herm_h01: self.r_herm_h01,
            r_eig: self.r_eig,
            r_herm_h0: self.r_herm_h0,
        }
    }

    fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("r_HLLd", self.r_hlld),
            ("r_map", self.r_map),
            ("r_herm_h01", self.r_herm_h01),
            ("r_eig", self.r_eig),
            ("r_herm_h0", self.r_herm_h0),
            ("phi_overlap", self.phi_overlap),
            ("overlap_abs", self.overlap_abs),
            ("identity", self.identity),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    /// `Phi_n` levels compared, `n = 1..=levels`.
    pub levels: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec { levels: 4 }
    }
}

/// A validated configuration with defaults filled in and paths resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub raw: RunConfig,
    pub k: usize,
    pub potential: Potential,
    pub transformation: Family,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Zero,
    Constant(f64),
    Samples(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Exp { a: f64 },
    Combination { k: f64, a: Complex64, b: Complex64 },
    Samples { path: PathBuf, alpha: f64 },
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn finite(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must be finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    /// Reads `path`; relative paths inside resolve against its directory.
    pub fn load(path: &Path, output_override: Option<&Path>) -> Result<Resolved, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_json(&text)?.resolve(base, output_override)
    }

    pub fn resolve(self, base: &Path, output_override: Option<&Path>) -> Result<Resolved, CliError> {
        let c = &self;
        if finite("d", c.d)? <= 0.0 {
            return Err(invalid(format!("d must be positive, got {}", c.d)));
        }
        if c.n_points.is_multiple_of(2) {
            return Err(invalid(format!("n_points must be odd, got {}", c.n_points)));
        }
        if c.n_points < MIN_OPERATOR_POINTS {
            return Err(invalid(format!("n_points must be at least {MIN_OPERATOR_POINTS}, got {}", c.n_points)));
        }
        let limit = c.n_points / 4;
        // The partner carries one level more than h.
        if c.n_max == 0 || c.n_max + 1 > limit {
            return Err(invalid(format!("n_max must lie in 1..={}, got {}", limit - 1, c.n_max)));
        }
        let k = c.k.unwrap_or_else(|| DEFAULT_K_CAP.min(c.n_points / 10));
        if k == 0 || k + 1 > limit {
            return Err(invalid(format!("K must lie in 1..={}, got {k}", limit - 1)));
        }
        if k < c.n_max {
            return Err(invalid(format!("K = {k} is below n_max = {}", c.n_max)));
        }
        for (name, v) in c.tolerances.named() {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        if c.oracle.levels == 0 || c.oracle.levels > c.n_max {
            return Err(invalid(format!("oracle levels must lie in 1..={}, got {}", c.n_max, c.oracle.levels)));
        }

        let potential = match &c.potential {
            PotentialSpec::Zero => Potential::Zero,
            PotentialSpec::Constant(v) => Potential::Constant(finite("constant potential", *v)?),
            PotentialSpec::Samples(p) => Potential::Samples(base.join(p)),
        };
        let shift = match potential {
            Potential::Constant(v) => v,
            _ => 0.0,
        };
        let family_alpha = |alpha: f64| -> Result<(), CliError> {
            match c.alpha {
                Some(given) if (given - alpha).abs() > 1e-12 * alpha.abs().max(1.0) => Err(invalid(format!(
                    "alpha = {given} conflicts with the value {alpha} fixed by the transformation"
                ))),
                _ => Ok(()),
            }
        };
        let transformation = match &c.transformation {
            TransformationSpec::Exp { a } => {
                let a = finite("a", *a)?;
                family_alpha(a * a + shift)?;
                Family::Exp { a }
            }
            TransformationSpec::Combination { k, a, b } => {
                let k = finite("k", *k)?;
                let (a, b) = (Complex64::new(a[0], a[1]), Complex64::new(b[0], b[1]));
                if !(a.is_finite() && b.is_finite()) {
                    return Err(invalid("combination coefficients must be finite"));
                }
                family_alpha(k * k + shift)?;
                Family::Combination { k, a, b }
            }
            TransformationSpec::Samples { path } => {
                let alpha = c.alpha.ok_or_else(|| invalid("the samples family needs alpha"))?;
                Family::Samples { path: base.join(path), alpha: finite("alpha", alpha)? }
            }
        };

        let output_dir = match (output_override, &c.output_dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => base.join(p),
            (None, None) => return Err(invalid("no output_dir in the config and no --output-dir given")),
        };
        check_writable(&output_dir)?;
        Ok(Resolved { k, potential, transformation, output_dir, raw: self })
    }
}

/// The nearest existing ancestor must be a writable directory.
fn check_writable(dir: &Path) -> Result<(), CliError> {
    let mut probe = Some(dir);
    while let Some(p) = probe {
        if let Ok(meta) = std::fs::metadata(p) {
            if !meta.is_dir() {
                return Err(invalid(format!("{} is not a directory", p.display())));
            }
            if meta.permissions().readonly() {
                return Err(invalid(format!("{} is not writable", p.display())));
            }
            return Ok(());
        }
        probe = p.parent().filter(|q| !q.as_os_str().is_empty());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> &'static str {
        r#"{"d": 1.0, "n_points": 2001, "transformation": {"family": "exp", "a": 1.3}, "output_dir": "out"}"#
    }

    #[test]
    fn defaults_are_filled_in() {
        let r = RunConfig::from_json(desk()).unwrap().resolve(Path::new("/tmp/base"), None).unwrap();
        assert_eq!(r.k, 200);
        assert_eq!(r.raw.n_max, 8);
        assert_eq!(r.raw.oracle.levels, 4);
        assert_eq!(r.potential, Potential::Zero);
        assert_eq!(r.output_dir, Path::new("/tmp/base/out"));
        assert_eq!(r.raw.tolerances, ToleranceSpec::default());
        let small = desk().replace("2001", "401");
        assert_eq!(RunConfig::from_json(&small).unwrap().resolve(Path::new("."), None).unwrap().k, 40);
    }

    #[test]
    fn override_wins() {
        let r = RunConfig::from_json(desk()).unwrap().resolve(Path::new("/b"), Some(Path::new("/o"))).unwrap();
        assert_eq!(r.output_dir, Path::new("/o"));
    }

    #[test]
    fn rejections() {
        let bad = [
            desk().replace("2001", "2000"),
            desk().replace("2001", "15"),
            desk().replace("\"d\": 1.0", "\"d\": -1.0"),
            desk().replace("}, \"output_dir\"", "}, \"n_max\": 500, \"output_dir\""),
            desk().replace("}, \"output_dir\"", "}, \"K\": 0, \"output_dir\""),
            desk().replace("}, \"output_dir\"", "}, \"alpha\": 2.0, \"output_dir\""),
            desk().replace("}, \"output_dir\"", "}, \"bogus\": 1, \"output_dir\""),
            desk().replace("}, \"output_dir\"", "}, \"tolerances\": {\"r_map\": 0.0}, \"output_dir\""),
            desk().replace("\"a\": 1.3", "\"a\": 1.3, \"b\": 2"),
            desk().replace("\"family\": \"exp\", \"a\": 1.3", "\"family\": \"samples\", \"path\": \"u.csv\""),
        ];
        for text in bad {
            let r = RunConfig::from_json(&text).and_then(|c| c.resolve(Path::new("."), None));
            assert!(matches!(r, Err(CliError::Config(_))), "{text}");
        }
        let no_dir = r#"{"d": 1.0, "n_points": 2001, "transformation": {"family": "exp", "a": 1.3}}"#;
        assert!(RunConfig::from_json(no_dir).unwrap().resolve(Path::new("."), None).is_err());
    }

    #[test]
    fn constant_potential_shifts_alpha() {
        let text =
            desk().replace("\"output_dir\"", "\"potential\": {\"constant\": 2.0}, \"alpha\": 3.69, \"output_dir\"");
        assert!(RunConfig::from_json(&text).unwrap().resolve(Path::new("."), None).is_ok());
    }
}
