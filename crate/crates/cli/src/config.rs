//! Flat `key = value` problem configuration with a canonical text form.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use cmc_core::donaldson::Mutant;
use cmc_core::solver::SolverConfig;
use num_complex::Complex64;

use crate::format::{fmt_complex, fmt_f64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    TorusPatch,
    DiskPatch,
    Bolza,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::TorusPatch => "torus-patch",
            BackendKind::DiskPatch => "disk-patch",
            BackendKind::Bolza => "bolza",
        }
    }
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "torus-patch" => Ok(BackendKind::TorusPatch),
            "disk-patch" => Ok(BackendKind::DiskPatch),
            "bolza" => Ok(BackendKind::Bolza),
            other => Err(format!("unknown backend '{other}' (expected torus-patch, disk-patch or bolza)")),
        }
    }
}

/// Representative of the `(0,2)` class.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaSpec {
    Zero,
    /// `b = b₀ ρ²`, so that `|β|_g = |b₀|` everywhere.
    Constant(Complex64),
    /// Binary field dump with weight `(0,2)`.
    File(PathBuf),
    /// Bolza basis element `k` with a complex coefficient.
    Basis(usize, Complex64),
}

impl FromStr for BetaSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "zero" {
            return Ok(BetaSpec::Zero);
        }
        if let Some(v) = s.strip_prefix("const:") {
            return parse_complex(v).map(BetaSpec::Constant);
        }
        if let Some(p) = s.strip_prefix("file:") {
            if p.is_empty() {
                return Err("file: needs a path".into());
            }
            return Ok(BetaSpec::File(PathBuf::from(p)));
        }
        if let Some(rest) = s.strip_prefix("basis:") {
            let (k, coeff) = rest.split_once(':').ok_or("basis spec is basis:<index>:<re>+<im>i")?;
            let k = k.parse::<usize>().map_err(|e| format!("basis index '{k}': {e}"))?;
            return Ok(BetaSpec::Basis(k, parse_complex(coeff)?));
        }
        Err(format!("'{s}' is not one of zero | const:<b> | file:<path> | basis:<k>:<re>+<im>i"))
    }
}

impl BetaSpec {
    fn canonical(&self) -> String {
        match self {
            BetaSpec::Zero => "zero".into(),
            BetaSpec::Constant(b) => format!("const:{}", fmt_complex(*b)),
            BetaSpec::File(p) => format!("file:{}", p.display()),
            BetaSpec::Basis(k, c) => format!("basis:{k}:{}", fmt_complex(*c)),
        }
    }
}

/// Gauge shift `ψ₀` added to the class representative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GaugeSpec {
    None,
    /// `ψ₀(z) = w (1 + z) bump(|z − z₀| / R)` with a chart-adapted centre
    /// and radius, so `ψ₀` vanishes near every boundary or side pairing.
    Bump(Complex64),
}

impl FromStr for GaugeSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(GaugeSpec::None),
            _ => match s.strip_prefix("bump:") {
                Some(v) => parse_complex(v).map(GaugeSpec::Bump),
                None => Err(format!("'{s}' is not one of none | bump:<re>+<im>i")),
            },
        }
    }
}

impl GaugeSpec {
    fn canonical(&self) -> String {
        match self {
            GaugeSpec::None => "none".into(),
            GaugeSpec::Bump(w) => format!("bump:{}", fmt_complex(*w)),
        }
    }
}

/// Parses `a`, `bi`, `a+bi` or `a-bi` (exponents allowed).
pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let bad = || format!("'{s}' is not a complex number (expected <re>+<im>i)");
    let s = s.trim();
    let z = match s.strip_suffix('i') {
        None => Complex64::new(s.parse::<f64>().map_err(|_| bad())?, 0.0),
        Some(body) => {
            // split at the last sign that is not part of an exponent
            let bytes = body.as_bytes();
            let split = (1..bytes.len()).rev().find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
            let (re, im) = match split {
                Some(i) => (body[..i].parse::<f64>().map_err(|_| bad())?, &body[i..]),
                None => (0.0, body),
            };
            let im = match im {
                "" | "+" => 1.0,
                "-" => -1.0,
                v => v.parse::<f64>().map_err(|_| bad())?,
            };
            Complex64::new(re, im)
        }
    };
    if z.is_finite() {
        Ok(z)
    } else {
        Err(bad())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub backend: BackendKind,
    pub n: usize,
    pub r0: f64,
    pub k: i32,
    pub c: f64,
    pub beta: BetaSpec,
    pub gauge: GaugeSpec,
    /// Target volume `T` of the constrained problem.
    pub target: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub mutant: Mutant,
    pub max_r_gauss: f64,
    pub max_r_codazzi: f64,
    pub lanczos_steps: usize,
    pub solver: SolverConfig,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            backend: BackendKind::DiskPatch,
            n: 64,
            r0: 0.5,
            k: -1,
            c: 0.0,
            beta: BetaSpec::Zero,
            gauge: GaugeSpec::None,
            target: None,
            seed: 0,
            out: PathBuf::from("cmc-out"),
            mutant: Mutant::None,
            max_r_gauss: 1e-6,
            max_r_codazzi: 1e-6,
            lanczos_steps: 200,
            solver: SolverConfig::default(),
        }
    }
}

/// Keys in canonical order.
pub const KEYS: &[&str] = &[
    "backend",
    "n",
    "r0",
    "k",
    "c",
    "beta",
    "gauge",
    "target",
    "seed",
    "out",
    "mutant",
    "max_r_gauss",
    "max_r_codazzi",
    "lanczos_steps",
    "tol_grad",
    "abs_tol_grad",
    "tol_step",
    "max_newton",
    "cg_tol",
    "cg_max",
    "continuation_steps",
    "min_continuation_step",
    "gauss_bonnet_precheck",
];

fn num<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("'{value}': {e}"))
}

fn finite(value: &str) -> Result<f64, String> {
    let v: f64 = num(value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{value}' is not finite"))
    }
}

fn mutant_name(m: Mutant) -> &'static str {
    match m {
        Mutant::None => "none",
        Mutant::VolumeSign => "volume-sign",
        Mutant::CouplingSign => "coupling-sign",
        Mutant::HessianNodalSign => "hessian-nodal-sign",
    }
}

impl ProblemConfig {
    /// Sets one key from its text value; the error names the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        let r: Result<(), String> = (|| {
            match key {
                "backend" => self.backend = value.parse()?,
                "n" => self.n = num(value)?,
                "r0" => self.r0 = finite(value)?,
                "k" => self.k = num(value)?,
                "c" => self.c = finite(value)?,
                "beta" => self.beta = value.parse()?,
                "gauge" => self.gauge = value.parse()?,
                "target" => self.target = if value == "none" { None } else { Some(finite(value)?) },
                "seed" => self.seed = num(value)?,
                "out" => self.out = PathBuf::from(value),
                "mutant" => self.mutant = value.parse().map_err(|e: cmc_core::CmcError| e.to_string())?,
                "max_r_gauss" => self.max_r_gauss = finite(value)?,
                "max_r_codazzi" => self.max_r_codazzi = finite(value)?,
                "lanczos_steps" => self.lanczos_steps = num(value)?,
                "tol_grad" => self.solver.tol_grad = finite(value)?,
                "abs_tol_grad" => self.solver.abs_tol_grad = finite(value)?,
                "tol_step" => self.solver.tol_step = finite(value)?,
                "max_newton" => self.solver.max_newton = num(value)?,
                "cg_tol" => self.solver.cg_tol = finite(value)?,
                "cg_max" => self.solver.cg_max = num(value)?,
                "continuation_steps" => self.solver.continuation_steps = num(value)?,
                "min_continuation_step" => self.solver.min_continuation_step = finite(value)?,
                "gauss_bonnet_precheck" => self.solver.gauss_bonnet_precheck = num(value)?,
                _ => return Err("unknown key".into()),
            }
            Ok(())
        })();
        r.map_err(|e| format!("key '{key}': {e}"))
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(format!("line {}: key '{key}' given twice", i + 1));
            }
            self.set(key, value).map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<ProblemConfig, String> {
        let mut c = ProblemConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    fn value(&self, key: &str) -> String {
        let s = &self.solver;
        match key {
            "backend" => self.backend.as_str().into(),
            "n" => self.n.to_string(),
            "r0" => fmt_f64(self.r0),
            "k" => self.k.to_string(),
            "c" => fmt_f64(self.c),
            "beta" => self.beta.canonical(),
            "gauge" => self.gauge.canonical(),
            "target" => self.target.map_or("none".into(), fmt_f64),
            "seed" => self.seed.to_string(),
            "out" => self.out.display().to_string(),
            "mutant" => mutant_name(self.mutant).into(),
            "max_r_gauss" => fmt_f64(self.max_r_gauss),
            "max_r_codazzi" => fmt_f64(self.max_r_codazzi),
            "lanczos_steps" => self.lanczos_steps.to_string(),
            "tol_grad" => fmt_f64(s.tol_grad),
            "abs_tol_grad" => fmt_f64(s.abs_tol_grad),
            "tol_step" => fmt_f64(s.tol_step),
            "max_newton" => s.max_newton.to_string(),
            "cg_tol" => fmt_f64(s.cg_tol),
            "cg_max" => s.cg_max.to_string(),
            "continuation_steps" => s.continuation_steps.to_string(),
            "min_continuation_step" => fmt_f64(s.min_continuation_step),
            "gauss_bonnet_precheck" => s.gauss_bonnet_precheck.to_string(),
            _ => unreachable!("key list and value table agree"),
        }
    }

    /// Every key in canonical order with canonical values.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.value(key));
        }
        out
    }

    /// Canonical pairs, for embedding in reports.
    pub fn pairs(&self) -> Vec<(String, String)> {
        KEYS.iter().map(|k| (k.to_string(), self.value(k))).collect()
    }

    /// `λ = k + c²`.
    pub fn lambda(&self) -> f64 {
        self.k as f64 + self.c * self.c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_forms() {
        let c = |re, im| Complex64::new(re, im);
        assert_eq!(parse_complex("0.1+0i").unwrap(), c(0.1, 0.0));
        assert_eq!(parse_complex("0.3-0.2i").unwrap(), c(0.3, -0.2));
        assert_eq!(parse_complex("-2").unwrap(), c(-2.0, 0.0));
        assert_eq!(parse_complex("2i").unwrap(), c(0.0, 2.0));
        assert_eq!(parse_complex("-i").unwrap(), c(0.0, -1.0));
        assert_eq!(parse_complex("1e-3-4.5e+2i").unwrap(), c(1e-3, -450.0));
        assert!(parse_complex("1+").is_err());
        assert!(parse_complex("x").is_err());
        assert!(parse_complex("nan").is_err());
    }

    #[test]
    fn beta_specs() {
        assert_eq!("zero".parse::<BetaSpec>().unwrap(), BetaSpec::Zero);
        assert_eq!("basis:0:0.1+0i".parse::<BetaSpec>().unwrap(), BetaSpec::Basis(0, Complex64::new(0.1, 0.0)));
        assert_eq!("const:0.5".parse::<BetaSpec>().unwrap(), BetaSpec::Constant(Complex64::new(0.5, 0.0)));
        assert!("basis:x:1".parse::<BetaSpec>().is_err());
        assert!("bogus".parse::<BetaSpec>().is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let text = "backend = bolza\nn = 48\nc = 0.5\nbeta = basis:0:0.1+0i\ntarget = 12.5\nseed = 7\ncg_tol = 1e-9\n";
        let a = ProblemConfig::parse(text).unwrap();
        let canon = a.canonical();
        let b = ProblemConfig::parse(&canon).unwrap();
        assert_eq!(a, b);
        assert_eq!(canon, b.canonical());
        assert_eq!(canon.lines().count(), KEYS.len());
    }

    #[test]
    fn diagnostics_name_line_and_key() {
        let e = ProblemConfig::parse("n = 32\nbeta = basis:1\n").unwrap_err();
        assert!(e.starts_with("line 2: key 'beta'"), "{e}");
        let e = ProblemConfig::parse("bogus = 1").unwrap_err();
        assert!(e.contains("unknown key"), "{e}");
        let e = ProblemConfig::parse("n = 1\nn = 2").unwrap_err();
        assert!(e.contains("twice"), "{e}");
        assert!(ProblemConfig::parse("just words").is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let c = ProblemConfig::parse("# header\n\nn = 16 # trailing\n").unwrap();
        assert_eq!(c.n, 16);
    }
}
