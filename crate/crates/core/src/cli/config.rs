use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::CliError;
use crate::model::{
    NoiseModel, RegressorSignal, Scenario, TunerGains, TunerVariant, DEFAULT_STEP_DETERMINISTIC,
    DEFAULT_STEP_STOCHASTIC,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Simulate,
    MonteCarlo,
    Covariance,
    VerifyIdentity,
    Pe,
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "simulate" => Ok(RunMode::Simulate),
            "montecarlo" => Ok(RunMode::MonteCarlo),
            "covariance" => Ok(RunMode::Covariance),
            "verify-identity" => Ok(RunMode::VerifyIdentity),
            "pe" => Ok(RunMode::Pe),
            other => Err(format!(
                "unknown mode `{other}` (expected simulate, montecarlo, covariance, verify-identity or pe)"
            )),
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Simulate => "simulate",
            RunMode::MonteCarlo => "montecarlo",
            RunMode::Covariance => "covariance",
            RunMode::VerifyIdentity => "verify-identity",
            RunMode::Pe => "pe",
        })
    }
}

/// Every key the config format accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "mode",
    "name",
    "variant",
    "p",
    "phat0",
    "dphat0",
    "M",
    "M1",
    "M2",
    "M3",
    "regressor",
    "level",
    "amplitude",
    "omega",
    "phase",
    "growth",
    "signal_seed",
    "hold",
    "scale",
    "n",
    "sigma_w",
    "seed",
    "T",
    "h",
    "trials",
    "stride",
    "identity_t",
    "draws",
    "fd_step",
    "tolerance",
    "window",
    "out",
    "plot",
];

/// Parsed scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub mode: Option<RunMode>,
    pub name: String,
    /// Absent for `pe` runs, which only need the regressor.
    pub scenario: Option<Scenario>,
    pub regressor: RegressorSignal,
    pub horizon: f64,
    pub trials: Option<usize>,
    pub stride: Option<usize>,
    pub identity_t: Option<f64>,
    pub draws: usize,
    pub fd_step: f64,
    pub tolerance: f64,
    pub window: Option<f64>,
    pub out: Option<String>,
    pub plot: bool,
}

fn err(key: &str, msg: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.to_string(),
        message: msg.into(),
    }
}

/// Scalar with optional `pi` factor: `2`, `pi`, `pi/3`, `2*pi`, `-0.5*pi/2`.
fn parse_scalar(key: &str, raw: &str) -> Result<f64, CliError> {
    let s = raw.trim();
    let bad = || err(key, format!("cannot parse `{s}` as a number"));
    if let Ok(v) = s.parse::<f64>() {
        return Ok(v);
    }
    let (body, divisor) = match s.split_once('/') {
        Some((b, d)) => (b.trim(), d.trim().parse::<f64>().map_err(|_| bad())?),
        None => (s, 1.0),
    };
    let (sign, body) = match body.strip_prefix('-') {
        Some(rest) => (-1.0, rest.trim()),
        None => (1.0, body),
    };
    let factor = match body.split_once('*') {
        Some((c, p)) if p.trim() == "pi" => c.trim().parse::<f64>().map_err(|_| bad())?,
        None if body == "pi" => 1.0,
        _ => return Err(bad()),
    };
    Ok(sign * factor * PI / divisor)
}

fn parse_vector(key: &str, raw: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',').map(|v| parse_scalar(key, v)).collect()
}

/// Semicolon-separated rows, or a single scalar meaning `c·I`.
fn parse_matrix(key: &str, raw: &str, n: usize) -> Result<DMatrix<f64>, CliError> {
    let rows: Vec<Vec<f64>> = raw.split(';').map(|r| parse_vector(key, r)).collect::<Result<_, _>>()?;
    if rows.len() == 1 && rows[0].len() == 1 {
        return Ok(DMatrix::identity(n, n) * rows[0][0]);
    }
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(err(key, format!("expected a {n}x{n} matrix or a scalar")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key).ok_or_else(|| err(key, "required key is missing"))
    }

    fn scalar(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.get(key).map(|v| parse_scalar(key, v)).transpose()
    }

    fn count(&self, key: &str) -> Result<Option<usize>, CliError> {
        self.get(key)
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| err(key, format!("`{v}` is not a nonnegative integer")))
            })
            .transpose()
    }

    fn seed(&self, key: &str) -> Result<Option<u64>, CliError> {
        self.get(key)
            .map(|v| {
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| err(key, format!("`{v}` is not a u64 seed")))
            })
            .transpose()
    }

    fn vector(&self, key: &str, n: usize) -> Result<Option<DVector<f64>>, CliError> {
        let Some(raw) = self.get(key) else { return Ok(None) };
        let v = parse_vector(key, raw)?;
        if v.len() != n {
            return Err(err(key, format!("expected {n} components, got {}", v.len())));
        }
        Ok(Some(DVector::from_vec(v)))
    }
}

/// Amplitude, frequency and phase vectors.
type SinusoidParts = (Vec<f64>, Vec<f64>, Vec<f64>);

fn parse_regressor(e: &Entries) -> Result<RegressorSignal, CliError> {
    let kind = e.require("regressor")?;
    let vec_of = |key: &str| -> Result<Vec<f64>, CliError> { parse_vector(key, e.require(key)?) };
    let sinusoid_parts = || -> Result<SinusoidParts, CliError> {
        let a = vec_of("amplitude")?;
        let w = vec_of("omega")?;
        let phase = match e.get("phase") {
            Some(raw) => parse_vector("phase", raw)?,
            None => vec![0.0; a.len()],
        };
        if w.len() != a.len() {
            return Err(err("omega", "length must match amplitude"));
        }
        if phase.len() != a.len() {
            return Err(err("phase", "length must match amplitude"));
        }
        Ok((a, w, phase))
    };
    let r = match kind.trim() {
        "step" => RegressorSignal::step(vec_of("level")?),
        "sinusoid" => {
            let (a, w, p) = sinusoid_parts()?;
            RegressorSignal::sinusoid(a, w, p)
        }
        "expsinusoid" => {
            let (a, w, p) = sinusoid_parts()?;
            let growth = e
                .scalar("growth")?
                .ok_or_else(|| err("growth", "required key is missing"))?;
            if !(growth >= 0.0) {
                return Err(err("growth", "must be nonnegative"));
            }
            RegressorSignal::exp_sinusoid(a, w, p, growth)
        }
        "pseudorandom" => {
            let n = e
                .count("n")?
                .ok_or_else(|| err("n", "pseudorandom regressor needs its dimension"))?;
            let hold = e.scalar("hold")?.unwrap_or(0.1);
            if !(hold > 0.0) {
                return Err(err("hold", "must be positive"));
            }
            let scale = e.scalar("scale")?.unwrap_or(1.0);
            if !(scale >= 0.0) {
                return Err(err("scale", "must be nonnegative"));
            }
            RegressorSignal::pseudo_random(n, e.seed("signal_seed")?.unwrap_or(1), hold, scale)
        }
        other => {
            return Err(err(
                "regressor",
                format!("unknown regressor `{other}` (step, sinusoid, expsinusoid, pseudorandom)"),
            ))
        }
    };
    r.validate().map_err(|e| err("regressor", e.to_string()))?;
    Ok(r)
}

fn parse_variant(raw: &str) -> Result<TunerVariant, CliError> {
    match raw.trim() {
        "velocity" | "gradient" => Ok(TunerVariant::Velocity),
        "normalized" => Ok(TunerVariant::NormalizedVelocity),
        "accel" | "acceleration" => Ok(TunerVariant::Acceleration),
        other => Err(err(
            "variant",
            format!("unknown variant `{other}` (velocity, normalized, accel)"),
        )),
    }
}

/// Parses config text. `mode_hint` (from the command line) decides which keys
/// are required when the file has no `mode` key.
pub fn parse_config(text: &str, mode_hint: Option<RunMode>) -> Result<ScenarioConfig, CliError> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(line, format!("line {} is not `key = value`", lineno + 1)));
        };
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(err(key, "unknown key"));
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(err(key, "duplicate key"));
        }
    }
    let e = Entries { map };

    let file_mode = e
        .get("mode")
        .map(|m| m.trim().parse::<RunMode>().map_err(|msg| err("mode", msg)))
        .transpose()?;
    let mode = mode_hint.or(file_mode);
    let regressor = parse_regressor(&e)?;
    let n = regressor.dim();

    let horizon = e.scalar("T")?.ok_or_else(|| err("T", "required key is missing"))?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(err("T", "horizon must be positive"));
    }
    let default_step = if mode == Some(RunMode::MonteCarlo) {
        DEFAULT_STEP_STOCHASTIC
    } else {
        DEFAULT_STEP_DETERMINISTIC
    };
    let step = e.scalar("h")?.unwrap_or(default_step);
    if !(step > 0.0 && step <= horizon) {
        return Err(err("h", format!("step must satisfy 0 < h <= T, got {step}")));
    }

    let scenario = if mode == Some(RunMode::Pe) && e.get("variant").is_none() {
        None
    } else {
        let variant = parse_variant(e.require("variant")?)?;
        let p = e.vector("p", n)?.ok_or_else(|| err("p", "required key is missing"))?;
        let phat0 = e
            .vector("phat0", n)?
            .ok_or_else(|| err("phat0", "required key is missing"))?;
        let dphat0 = e.vector("dphat0", n)?.unwrap_or_else(|| DVector::zeros(n));
        if !variant.is_second_order() && e.get("dphat0").is_some() {
            return Err(err("dphat0", "only meaningful for the accel variant"));
        }
        let gains = if variant.is_second_order() {
            for key in ["M"] {
                if e.get(key).is_some() {
                    return Err(err(key, "accel variant takes M1, M2, M3"));
                }
            }
            let m = |key: &str| parse_matrix(key, e.require(key)?, n);
            TunerGains::acceleration(m("M1")?, m("M2")?, m("M3")?)
        } else {
            for key in ["M1", "M2", "M3"] {
                if e.get(key).is_some() {
                    return Err(err(key, "velocity variants take M"));
                }
            }
            TunerGains::velocity(parse_matrix("M", e.require("M")?, n)?)
        }
        .map_err(|x| err("M", x.to_string()))?;
        let sigma_w = e.scalar("sigma_w")?.unwrap_or(0.0);
        if !(sigma_w >= 0.0 && sigma_w.is_finite()) {
            return Err(err("sigma_w", "must be nonnegative"));
        }
        let s = Scenario {
            p,
            phat0,
            dphat0,
            gains,
            regressor: regressor.clone(),
            noise: NoiseModel::white(sigma_w, e.seed("seed")?.unwrap_or(0)),
            horizon,
            step,
            variant,
        };
        s.validate().map_err(|x| match x {
            crate::Error::InvalidScenario { field, reason } => err(field, reason),
            other => err("scenario", other.to_string()),
        })?;
        Some(s)
    };

    let trials = e.count("trials")?;
    if matches!(trials, Some(t) if t < 2) {
        return Err(err("trials", "need at least 2 trials"));
    }
    let stride = e.count("stride")?;
    if stride == Some(0) {
        return Err(err("stride", "must be positive"));
    }
    let window = e.scalar("window")?;
    if matches!(window, Some(w) if !(w > 0.0)) {
        return Err(err("window", "must be positive"));
    }
    if mode == Some(RunMode::Pe) && window.is_none() {
        return Err(err("window", "required key is missing"));
    }
    let plot = match e.get("plot").map(str::trim) {
        None | Some("false") | Some("0") => false,
        Some("true") | Some("1") => true,
        Some(other) => return Err(err("plot", format!("expected true/false, got `{other}`"))),
    };
    let draws = e.count("draws")?.unwrap_or(10);
    if draws == 0 {
        return Err(err("draws", "must be positive"));
    }

    Ok(ScenarioConfig {
        mode: file_mode,
        name: e.get("name").unwrap_or("run").to_string(),
        scenario,
        regressor,
        horizon,
        trials,
        stride,
        identity_t: e.scalar("identity_t")?,
        draws,
        fd_step: e.scalar("fd_step")?.unwrap_or(crate::analysis::DEFAULT_FD_STEP),
        tolerance: e.scalar("tolerance")?.unwrap_or(1e-6),
        window,
        out: e.get("out").map(str::to_string),
        plot,
    })
}
