//! Experiment configuration: `key = value` files overridden by CLI flags.

use crate::cls;
use crate::error::{Error, Result};
use crate::hdiv_proj::{SolveOpts, Variant};
use crate::source::default_quad_degree;
use std::path::{Path, PathBuf};

pub const DEFAULT_SEED: u64 = 20240917;

/// Keys accepted in config files, the same names as the CLI flags.
pub const KEYS: &[&str] = &[
    "mesh",
    "degree",
    "variant",
    "field",
    "refine",
    "quad-degree",
    "tol-feas",
    "seed",
    "out",
    "p-sweep",
    "no-assert",
    "samples",
    "corrupt-sigma",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Generator spec or mesh file path.
    pub mesh: String,
    pub degree: usize,
    pub variant: Variant,
    pub field: String,
    /// Number of uniform refinements of `mesh`.
    pub refine: usize,
    /// `None` picks the default for each degree.
    pub quad_degree: Option<usize>,
    pub tol_feas: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Inclusive degree range.
    pub p_sweep: Option<(usize, usize)>,
    pub no_assert: bool,
    /// Random fields per degree in `check-project`.
    pub samples: usize,
    /// Fault injection: perturb `sigma_a` at this vertex.
    pub corrupt_sigma: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mesh: "cube-kuhn:refined=1".into(),
            degree: 1,
            variant: Variant::Canonical,
            field: "trig".into(),
            refine: 0,
            quad_degree: None,
            tol_feas: cls::TOL_FEAS,
            seed: DEFAULT_SEED,
            out: None,
            p_sweep: None,
            no_assert: false,
            samples: 20,
            corrupt_sigma: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse(format!("bad value '{v}' for '{key}'")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "" | "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse(format!("bad value '{v}' for '{key}'"))),
    }
}

/// `a..b` (inclusive), or a single degree.
pub fn parse_range(s: &str) -> Result<(usize, usize)> {
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (num::<usize>("p-sweep", a.trim())?, num::<usize>("p-sweep", b.trim().trim_start_matches('='))?),
        None => {
            let a = num::<usize>("p-sweep", s.trim())?;
            (a, a)
        }
    };
    if a > b {
        return Err(Error::Parse(format!("empty degree range '{s}'")));
    }
    Ok((a, b))
}

impl ExperimentConfig {
    /// Defaults suited to each subcommand.
    pub fn for_command(cmd: &str) -> Self {
        let mut c = ExperimentConfig::default();
        match cmd {
            "convergence" => {
                c.mesh = "cube-kuhn".into();
                c.refine = 3;
                c.field = "trig-low".into();
            }
            "equivalence" => {
                c.mesh = "cube-kuhn".into();
                c.refine = 1;
            }
            "single-tet" => {
                c.mesh = "reftet".into();
                c.field = "trig-low".into();
                c.p_sweep = Some((0, 6));
            }
            "mixed" => {
                c.mesh = "cube-kuhn:bc=N".into();
                c.refine = 1;
                c.field = "trig-n".into();
            }
            _ => {}
        }
        c
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "mesh" => self.mesh = v.into(),
            "degree" => self.degree = num(key, v)?,
            "variant" => self.variant = v.parse()?,
            "field" => self.field = v.into(),
            "refine" => self.refine = num(key, v)?,
            "quad-degree" => self.quad_degree = Some(num(key, v)?),
            "tol-feas" => self.tol_feas = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "out" => self.out = Some(v.into()),
            "p-sweep" => self.p_sweep = Some(parse_range(v)?),
            "no-assert" => self.no_assert = flag(key, v)?,
            "samples" => self.samples = num(key, v)?,
            "corrupt-sigma" => self.corrupt_sigma = Some(num(key, v)?),
            _ => return Err(Error::Parse(format!("unknown config key '{key}' (known: {})", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse(format!("line {}: expected 'key = value'", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&std::fs::read_to_string(path)?)
    }

    /// Degrees to run: the sweep if given, else `degree`.
    pub fn degrees(&self) -> Vec<usize> {
        match self.p_sweep {
            Some((a, b)) => (a..=b).collect(),
            None => vec![self.degree],
        }
    }

    pub fn quad(&self, p: usize) -> usize {
        self.quad_degree.unwrap_or_else(|| default_quad_degree(p))
    }

    pub fn solve_opts(&self) -> SolveOpts {
        SolveOpts { tol_feas: self.tol_feas, assert: !self.no_assert, ..SolveOpts::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant == Variant::Alternative && self.degrees().contains(&0) {
            return Err(Error::Invalid("the alternative variant needs p >= 1".into()));
        }
        if !(self.tol_feas > 0.0) {
            return Err(Error::Invalid(format!("tol-feas must be positive, got {}", self.tol_feas)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let mut c = ExperimentConfig::default();
        c.apply_text("# run\nmesh = reftet\ndegree = 3  # high\np-sweep = 1..4\nno-assert = true\n").unwrap();
        assert_eq!(c.mesh, "reftet");
        assert_eq!(c.degree, 3);
        assert_eq!(c.degrees(), vec![1, 2, 3, 4]);
        assert!(c.no_assert);
        c.set("degree", "2").unwrap();
        c.set("p-sweep", "2").unwrap();
        assert_eq!(c.degrees(), vec![2]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = ExperimentConfig::default();
        assert!(c.apply_text("colour = red").is_err());
        assert!(c.apply_text("degree").is_err());
        assert!(c.set("degree", "-1").is_err());
        assert!(c.set("p-sweep", "4..1").is_err());
        c.set("variant", "alternative").unwrap();
        c.degree = 0;
        assert!(c.validate().is_err());
        c.degree = 1;
        assert!(c.validate().is_ok());
    }
}
