//! Run configuration: defaults, a `key=value` file and flag overrides all go
//! through [`RunConfig::set`].

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use qtasep::exact::ExactEvalConfig;
use qtasep::fredholm::NystromConfig;
use qtasep::quadrature::VerticalLine;
use qtasep::{Method, ModelParams};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub q: f64,
    /// Overrides the length of `rates`; a single rate is then repeated.
    pub n_particles: Option<usize>,
    pub rates: Vec<f64>,
    /// One value means half-stationary data `(α, 0, ..., 0)`.
    pub alpha: Vec<f64>,
    pub time: f64,
    pub zeta: Vec<Complex64>,
    pub methods: Vec<Method>,
    pub trajectories: u64,
    pub seed: u64,
    pub nodes_circle: usize,
    pub nodes_line: usize,
    pub trunc_height: f64,
    pub eps: f64,
    pub lambda_window: (i64, i64),
    /// Allowed pairwise deviation in `compare`, on top of `sigmas` times the
    /// summed error estimates.
    pub tolerance: f64,
    pub sigmas: f64,
    pub draws: usize,
    /// Write `runtime_ms`; turn off for byte-reproducible output.
    pub timing: bool,
    pub check: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            q: 0.4,
            n_particles: None,
            rates: vec![1.0],
            alpha: vec![0.0],
            time: 1.0,
            zeta: vec![Complex64::new(-0.2, 0.0), Complex64::new(-0.8, 0.0)],
            methods: vec![Method::Pmf, Method::Fredholm],
            trajectories: 10_000,
            seed: 1,
            nodes_circle: 64,
            nodes_line: 257,
            trunc_height: 12.0,
            eps: 0.5,
            lambda_window: (-50, 150),
            tolerance: 1e-5,
            sigmas: 3.0,
            draws: 100,
            timing: true,
            check: false,
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}={value}: {why}"))
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| bad(key, value, e))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(bad(key, value, "empty list"));
    }
    Ok(items)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Apply one `key=value` setting. Keys match the long flag names;
    /// underscores and dashes are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let k = key.trim().replace('_', "-");
        match k.as_str() {
            "q" => self.q = parse(&k, value)?,
            "n-particles" => self.n_particles = Some(parse(&k, value)?),
            "rates" => self.rates = parse_list(&k, value)?,
            "alpha" => self.alpha = parse_list(&k, value)?,
            "time" => self.time = parse(&k, value)?,
            "zeta" => self.zeta = parse_list(&k, value)?,
            "methods" => self.methods = parse_list(&k, value)?,
            "trajectories" => self.trajectories = parse(&k, value)?,
            "seed" => self.seed = parse(&k, value)?,
            "nodes-circle" => self.nodes_circle = parse(&k, value)?,
            "nodes-line" => self.nodes_line = parse(&k, value)?,
            "trunc-height" => self.trunc_height = parse(&k, value)?,
            "eps" => self.eps = parse(&k, value)?,
            "lambda-window" => {
                let (lo, hi) = value.split_once(':').ok_or_else(|| bad(&k, value, "expected lo:hi"))?;
                let (lo, hi) = (parse(&k, lo)?, parse(&k, hi)?);
                if lo > hi {
                    return Err(bad(&k, value, "lo > hi"));
                }
                self.lambda_window = (lo, hi);
            }
            "tolerance" => self.tolerance = parse(&k, value)?,
            "sigmas" => self.sigmas = parse(&k, value)?,
            "draws" => self.draws = parse(&k, value)?,
            "timing" => self.timing = parse_bool(&k, value)?,
            "check" => self.check = parse_bool(&k, value)?,
            _ => return Err(CliError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Apply a file of `key=value` lines; blank lines and `#` comments are
    /// skipped.
    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{}:{}: expected key=value", path.display(), no + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Every setting as it is written to the output header.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("q", self.q.to_string()),
            ("n-particles", self.n().to_string()),
            ("rates", join(&self.rates)),
            ("alpha", join(&self.alpha)),
            ("time", self.time.to_string()),
            ("zeta", join(&self.zeta)),
            ("methods", join(&self.methods)),
            ("trajectories", self.trajectories.to_string()),
            ("seed", self.seed.to_string()),
            ("nodes-circle", self.nodes_circle.to_string()),
            ("nodes-line", self.nodes_line.to_string()),
            ("trunc-height", self.trunc_height.to_string()),
            ("eps", self.eps.to_string()),
            ("lambda-window", format!("{}:{}", self.lambda_window.0, self.lambda_window.1)),
            ("tolerance", self.tolerance.to_string()),
            ("sigmas", self.sigmas.to_string()),
            ("draws", self.draws.to_string()),
            ("timing", self.timing.to_string()),
            ("check", self.check.to_string()),
        ]
    }

    pub fn n(&self) -> usize {
        self.n_particles.unwrap_or(self.rates.len())
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let n = self.n();
        let rates = match self.rates.len() {
            1 => vec![self.rates[0]; n],
            len if len == n => self.rates.clone(),
            len => {
                return Err(CliError::Config(format!("{len} rates given for {n} particles")));
            }
        };
        let params = match self.alpha.len() {
            1 => ModelParams::half_stationary(self.q, rates, self.alpha[0], self.time)?,
            _ => ModelParams::new(self.q, rates, self.alpha.clone(), self.time)?,
        };
        Ok(params)
    }

    pub fn exact(&self) -> ExactEvalConfig {
        ExactEvalConfig {
            circle_nodes: self.nodes_circle,
            line_nodes: self.nodes_line,
            line_half_height: self.trunc_height,
            line_offset: self.eps,
            lambda_window: self.lambda_window,
            ..ExactEvalConfig::default()
        }
    }

    pub fn nystrom(&self) -> Result<NystromConfig, CliError> {
        let line = VerticalLine::new(self.eps, self.trunc_height, self.nodes_line)
            .map_err(|e| CliError::Config(format!("s-line: {e}")))?;
        Ok(NystromConfig {
            contour_nodes: self.nodes_circle,
            s_line: line,
            ..NystromConfig::default()
        })
    }
}
