//! Run configuration: a flat `key = value` file whose keys double as
//! command-line flag names, validation, and conversion to a [`SolveSpec`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BcKind, Face, FaceBc};
use crate::operator::global_eigen_bounds;
use crate::precond::{iteration_bound_warning, PrecondSettings, PreconditionerKind};
use crate::problem::{PoissonProblem, STANDARD_BOUNDS, STANDARD_FACE_KINDS};
use crate::runner::SolveSpec;

/// Boundary condition of one face: kind plus constant data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceSetting {
    pub kind: BcKind,
    pub value: f64,
}

impl FaceSetting {
    fn to_value_string(self) -> String {
        format!("{}:{}", self.kind, self.value)
    }
}

impl FromStr for FaceSetting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, value) = match s.split_once(':') {
            Some((k, v)) => (k.trim(), v.trim().parse::<f64>().map_err(|_| format!("bad boundary value '{v}'"))?),
            None => (s.trim(), 0.0),
        };
        let kind = match kind {
            "dirichlet" => BcKind::Dirichlet,
            "neumann" => BcKind::Neumann,
            other => return Err(format!("unknown boundary kind '{other}' (expected dirichlet or neumann)")),
        };
        Ok(FaceSetting { kind, value })
    }
}

/// Config keys for the six faces, ordered x−, x+, y−, y+, z−, z+.
pub const FACE_KEYS: [&str; 6] = ["bc-xlo", "bc-xhi", "bc-ylo", "bc-yhi", "bc-zlo", "bc-zhi"];
pub const DOMAIN_KEYS: [&str; 3] = ["domain-x", "domain-y", "domain-z"];

/// Every recognized key, in canonical order.
pub const KEYS: [&str; 24] = [
    "mesh",
    "decomp",
    "solver",
    "tol",
    "max-iter",
    "prec-iters",
    "prec-tol",
    "prec-max-iter",
    "rescale-min",
    "rescale-max",
    "residual-csv",
    "report-json",
    "repeats",
    "comm-timeout",
    "domain-x",
    "domain-y",
    "domain-z",
    "bc-xlo",
    "bc-xhi",
    "bc-ylo",
    "bc-yhi",
    "bc-zlo",
    "bc-zhi",
    // Accepted for symmetry with the flag of the same name; ignored inside files.
    "config",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mesh: [usize; 3],
    pub decomp: [usize; 3],
    pub solver: String,
    pub tol: f64,
    pub max_iter: usize,
    pub prec_iters: usize,
    /// Inner Bi-CGSTAB tolerance; the kind's default when absent.
    pub prec_tol: Option<f64>,
    pub prec_max_iter: usize,
    pub rescale_min: f64,
    pub rescale_max: f64,
    pub domain: [[f64; 2]; 3],
    pub bcs: [FaceSetting; 6],
    pub residual_csv: Option<PathBuf>,
    pub report_json: Option<PathBuf>,
    pub repeats: usize,
    /// Seconds a rank waits on a peer before failing.
    pub comm_timeout: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PrecondSettings::default();
        RunConfig {
            mesh: [256; 3],
            decomp: [1; 3],
            solver: PreconditionerKind::GlobalNoCommChebyshev.solver_name().into(),
            tol: 1e-10,
            max_iter: 10_000,
            prec_iters: p.cheb_iters,
            prec_tol: None,
            prec_max_iter: p.inner_max_iter,
            rescale_min: p.rescale_min,
            rescale_max: p.rescale_max,
            domain: STANDARD_BOUNDS,
            bcs: STANDARD_FACE_KINDS.map(|kind| FaceSetting { kind, value: 0.0 }),
            residual_csv: None,
            report_json: None,
            repeats: 1,
            comm_timeout: crate::comm::DEFAULT_TIMEOUT.as_secs_f64(),
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str, n: usize) -> Result<Vec<T>> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(Error::Config(format!("{key} expects {n} comma-separated values, got '{value}'")));
    }
    parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse '{p}'"))))
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(Error::Config(format!("line {}: unknown config key '{k}'", n + 1)));
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl RunConfig {
    /// Loads a config file: either `key = value` text or a JSON run report
    /// whose embedded `config` object is reused.
    pub fn load_pairs(path: &Path) -> Result<BTreeMap<String, String>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        if text.trim_start().starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("config {}: invalid JSON: {e}", path.display())))?;
            let cfg = v.get("config").cloned().unwrap_or(v);
            let cfg: RunConfig = serde_json::from_value(cfg)
                .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
            Ok(cfg.to_pairs())
        } else {
            parse_key_values(&text)
        }
    }

    /// Builds a config from defaults plus the given keys.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = RunConfig::default();
        for (k, v) in pairs {
            let v = v.as_str();
            match k.as_str() {
                "mesh" => c.mesh = parse_list::<usize>(k, v, 3)?.try_into().unwrap(),
                "decomp" => c.decomp = parse_list::<usize>(k, v, 3)?.try_into().unwrap(),
                "solver" => c.solver = v.trim().to_string(),
                "tol" => c.tol = parse_one(k, v)?,
                "max-iter" => c.max_iter = parse_one(k, v)?,
                "prec-iters" => c.prec_iters = parse_one(k, v)?,
                "prec-tol" => c.prec_tol = Some(parse_one(k, v)?),
                "prec-max-iter" => c.prec_max_iter = parse_one(k, v)?,
                "rescale-min" => c.rescale_min = parse_one(k, v)?,
                "rescale-max" => c.rescale_max = parse_one(k, v)?,
                "residual-csv" => c.residual_csv = (!v.is_empty()).then(|| PathBuf::from(v)),
                "report-json" => c.report_json = (!v.is_empty()).then(|| PathBuf::from(v)),
                "repeats" => c.repeats = parse_one(k, v)?,
                "comm-timeout" => c.comm_timeout = parse_one(k, v)?,
                "config" => {}
                key => {
                    if let Some(d) = DOMAIN_KEYS.iter().position(|d| *d == key) {
                        c.domain[d] = parse_list::<f64>(k, v, 2)?.try_into().unwrap();
                    } else if let Some(f) = FACE_KEYS.iter().position(|f| *f == key) {
                        c.bcs[f] = v.parse().map_err(|e| Error::Config(format!("{key}: {e}")))?;
                    } else {
                        return Err(Error::Config(format!("unknown config key '{key}'")));
                    }
                }
            }
        }
        Ok(c)
    }

    /// The canonical key/value form; `from_pairs(to_pairs())` is lossless.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("mesh", list(&self.mesh));
        put("decomp", list(&self.decomp));
        put("solver", self.solver.clone());
        put("tol", self.tol.to_string());
        put("max-iter", self.max_iter.to_string());
        put("prec-iters", self.prec_iters.to_string());
        if let Some(t) = self.prec_tol {
            put("prec-tol", t.to_string());
        }
        put("prec-max-iter", self.prec_max_iter.to_string());
        put("rescale-min", self.rescale_min.to_string());
        put("rescale-max", self.rescale_max.to_string());
        if let Some(p) = &self.residual_csv {
            put("residual-csv", p.display().to_string());
        }
        if let Some(p) = &self.report_json {
            put("report-json", p.display().to_string());
        }
        put("repeats", self.repeats.to_string());
        put("comm-timeout", self.comm_timeout.to_string());
        for (d, key) in DOMAIN_KEYS.iter().enumerate() {
            put(key, format!("{},{}", self.domain[d][0], self.domain[d][1]));
        }
        for (f, key) in FACE_KEYS.iter().enumerate() {
            put(key, self.bcs[f].to_value_string());
        }
        m
    }

    pub fn to_text(&self) -> String {
        let pairs = self.to_pairs();
        let mut out = String::new();
        for key in KEYS {
            if let Some(v) = pairs.get(key) {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        out
    }

    pub fn kind(&self) -> Result<PreconditionerKind> {
        if let Ok(kind) = self.solver.parse::<PreconditionerKind>() {
            return Ok(kind);
        }
        // The same inexact preconditioner under the non-flexible outer solver.
        if let Some(rest) = self.solver.strip_prefix("bicgs-") {
            if let Ok(kind) = format!("fbicgs-{rest}").parse::<PreconditionerKind>() {
                return Err(Error::Config(format!(
                    "solver {}: {} is not a fixed preconditioner and needs the flexible outer solver ({})",
                    self.solver,
                    kind.name(),
                    kind.solver_name()
                )));
            }
        }
        self.solver.parse()
    }

    pub fn precond_settings(&self) -> PrecondSettings {
        PrecondSettings {
            cheb_iters: self.prec_iters,
            rescale_min: self.rescale_min,
            rescale_max: self.rescale_max,
            inner_tol: self.prec_tol,
            inner_max_iter: self.prec_max_iter,
            bounds_override: None,
        }
    }

    pub fn problem(&self) -> Result<PoissonProblem> {
        let bcs = self.bcs.map(|s| match s.kind {
            BcKind::Dirichlet => FaceBc::dirichlet(s.value),
            BcKind::Neumann => FaceBc::neumann(s.value),
        });
        PoissonProblem::standard_with(self.mesh, self.domain, bcs)
    }

    /// Checks everything a worker would trip over and returns the solve
    /// plus any warnings. Errors are single-line diagnostics.
    pub fn validate(&self) -> Result<(SolveSpec, Vec<String>)> {
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max-iter must be at least 1".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.prec_tol.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("prec-tol must be positive".into()));
        }
        if self.prec_max_iter == 0 {
            return Err(Error::Config("prec-max-iter must be at least 1".into()));
        }
        if !(self.rescale_min >= 1.0 && self.rescale_min.is_finite()) {
            return Err(Error::Config(format!("rescale-min must be at least 1, got {}", self.rescale_min)));
        }
        if !(self.rescale_max > 0.0 && self.rescale_max <= 1.0) {
            return Err(Error::Config(format!("rescale-max must be in (0, 1], got {}", self.rescale_max)));
        }
        if !(self.comm_timeout > 0.0 && self.comm_timeout.is_finite()) {
            return Err(Error::Config("comm-timeout must be positive".into()));
        }
        if self.mesh.contains(&0) {
            return Err(Error::Config("mesh extents must be at least 1".into()));
        }
        if self.decomp.contains(&0) {
            return Err(Error::Config("decomp entries must be at least 1".into()));
        }
        let kind = self.kind()?;
        let problem = self.problem()?;
        let bounds = global_eigen_bounds(problem.grid())
            .map_err(|e| Error::Config(format!("operator is not solvable: {e}")))?;
        let mut spec = SolveSpec::new(problem, kind);
        spec.ranks_per_dim = self.decomp;
        spec.precond = self.precond_settings();
        spec.tol = self.tol;
        spec.max_iter = self.max_iter;
        spec.comm_timeout = Duration::from_secs_f64(self.comm_timeout);
        let decomps = spec.decompositions()?;
        if matches!(kind, PreconditionerKind::GlobalChebyshev | PreconditionerKind::GlobalNoCommChebyshev) {
            crate::chebyshev::rescale_bounds(bounds, self.rescale_min, self.rescale_max)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        let mut warnings = Vec::new();
        if let Some(w) = iteration_bound_warning(kind, self.prec_iters, &decomps[0]) {
            warnings.push(w);
        }
        for face in Face::ALL {
            let s = self.bcs[face.index()];
            if s.kind == BcKind::Neumann && self.mesh[face.axis.index()] == 1 && s.value != 0.0 {
                warnings.push(format!("face {face}: Neumann data on a single-node axis"));
            }
        }
        Ok((spec, warnings))
    }
}
