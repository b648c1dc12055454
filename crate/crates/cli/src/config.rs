//! Flat `key = value` experiment files.
//!
//! Keys are dotted (`stream.kind`), `#` starts a comment, blank lines are ignored. Every key
//! is validated: unknown and repeated keys are errors carrying their line number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nonconvex_da::{Convention, Regularizer, TrigTerm};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: Option<usize>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, message: message.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Da,
    Bda,
    Exp3Grid,
    Uniform,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Da => "da",
            Algorithm::Bda => "bda",
            Algorithm::Exp3Grid => "exp3_grid",
            Algorithm::Uniform => "uniform",
        }
    }

    pub fn is_bandit(self) -> bool {
        matches!(self, Algorithm::Bda | Algorithm::Exp3Grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Trig,
    Drifting,
    FiniteSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub kind: StreamKind,
    pub convention: Convention,
    pub seed: u64,
    pub offset: f64,
    /// Explicit terms; `None` selects the seeded reference terms.
    pub terms: Option<Vec<TrigTerm<f64>>>,
    pub rate: f64,
    pub drift_exponent: f64,
    pub components: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Exact,
    Unbiased,
    Biased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Trig,
    Components,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub noise: NoiseKind,
    pub sigma: f64,
    pub harmonics: usize,
    pub bias_scale: f64,
    pub bias_decay: f64,
}

/// Overrides of the per-algorithm schedule defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScheduleSpec {
    pub eta_coefficient: Option<f64>,
    pub p: Option<f64>,
    pub delta_coefficient: Option<f64>,
    pub w: Option<f64>,
    pub epsilon_coefficient: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub grid_n: usize,
    pub regularizer: Regularizer<f64>,
    pub stream: StreamSpec,
    pub channel: ChannelSpec,
    pub schedule: ScheduleSpec,
    /// Arms per axis of the EXP3 lattice.
    pub exp3_arms: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub checkpoint_start: usize,
    pub checkpoint_ratio: f64,
    pub output: PathBuf,
    pub energy_diagnostics: bool,
    pub diagnostics_center: Option<Vec<f64>>,
    pub diagnostics_radius: Option<f64>,
    pub windows: Vec<usize>,
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return err(Some(line), format!("expected `key = value`, found `{content}`"));
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                return err(Some(line), format!("invalid key `{key}`"));
            }
            if value.is_empty() {
                return err(Some(line), format!("missing value for `{key}`"));
            }
            if let Some((first, _)) = map.insert(key.to_string(), (line, value.to_string())) {
                return err(Some(line), format!("duplicate key `{key}` (first set on line {first})"));
            }
        }
        Ok(Entries { map })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .or_else(|_| err(Some(line), format!("cannot parse `{v}` for `{key}`"))),
        }
    }

    fn get_list<T: FromStr>(&mut self, key: &str) -> Result<Option<(usize, Vec<T>)>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => {
                let items: Result<Vec<T>, _> = v.split(',').map(|s| s.trim().parse()).collect();
                items
                    .map(|x| Some((line, x)))
                    .or_else(|_| err(Some(line), format!("cannot parse list `{v}` for `{key}`")))
            }
        }
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|(l, _)| *l)
    }

    fn finish(self) -> Result<(), ConfigError> {
        let mut rest: Vec<_> = self.map.into_iter().collect();
        rest.sort_by_key(|(_, (l, _))| *l);
        match rest.first() {
            Some((k, (l, _))) => err(Some(*l), format!("unknown key `{k}`")),
            None => Ok(()),
        }
    }
}

/// Parses `a..b` (half-open) or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range start `{a}`"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range end `{b}`"))?;
        if b <= a {
            return Err(format!("empty seed range `{text}`"));
        }
        return Ok((a..b).collect());
    }
    let seeds: Result<Vec<u64>, _> = text.split(',').map(|s| s.trim().parse()).collect();
    let seeds = seeds.map_err(|_| format!("bad seed list `{text}`"))?;
    if seeds.is_empty() {
        return Err("no seeds".into());
    }
    Ok(seeds)
}

/// Parses `amplitude:k1,k2,..:phase; ...`.
fn parse_terms(text: &str, dim: usize) -> Result<Vec<TrigTerm<f64>>, String> {
    text.split(';')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| {
            let parts: Vec<&str> = t.split(':').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(format!("term `{t}` is not `amplitude:frequency:phase`"));
            }
            let amplitude: f64 = parts[0].parse().map_err(|_| format!("bad amplitude in `{t}`"))?;
            let frequency: Result<Vec<i32>, _> = parts[1].split(',').map(|k| k.trim().parse()).collect();
            let frequency = frequency.map_err(|_| format!("bad frequency in `{t}`"))?;
            if frequency.len() != dim {
                return Err(format!("term `{t}` needs {dim} frequency entries"));
            }
            let phase: f64 = parts[2].parse().map_err(|_| format!("bad phase in `{t}`"))?;
            Ok(TrigTerm { amplitude, frequency, phase })
        })
        .collect()
}

fn non_negative(e: &Entries, key: &str, v: Option<f64>) -> Result<(), ConfigError> {
    match v {
        Some(x) if !(x >= 0.0) || !x.is_finite() => err(e.line_of(key), format!("`{key}` must be finite and non-negative, got {x}")),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut e = Entries::parse(text)?;

        let (line, alg) = e.take("algorithm").ok_or(ConfigError { line: None, message: "missing key `algorithm`".into() })?;
        let algorithm = match alg.as_str() {
            "da" => Algorithm::Da,
            "bda" => Algorithm::Bda,
            "exp3_grid" => Algorithm::Exp3Grid,
            "uniform" => Algorithm::Uniform,
            other => return err(Some(line), format!("unknown algorithm `{other}` (da, bda, exp3_grid, uniform)")),
        };

        let dim_line = e.line_of("domain.dim");
        let dim: usize = e.get("domain.dim")?.unwrap_or(1);
        if dim == 0 {
            return err(dim_line, "`domain.dim` must be at least 1");
        }
        let mut bound = |key: &str, default: f64| -> Result<Vec<f64>, ConfigError> {
            match e.get_list::<f64>(key)? {
                None => Ok(vec![default; dim]),
                Some((_, v)) if v.len() == 1 => Ok(vec![v[0]; dim]),
                Some((line, v)) if v.len() == dim => {
                    let _ = line;
                    Ok(v)
                }
                Some((line, v)) => err(Some(line), format!("`{key}` has {} entries for dimension {dim}", v.len())),
            }
        };
        let lower = bound("domain.lower", 0.0)?;
        let upper = bound("domain.upper", 1.0)?;
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return err(None, "every axis needs finite bounds with lower < upper");
        }

        let n_line = e.line_of("grid.n");
        let grid_n = match e.get::<usize>("grid.n")? {
            Some(n) if n > 0 => n,
            Some(_) => return err(n_line, "`grid.n` must be positive"),
            None => match dim {
                1 => 1024,
                2 => 64,
                3 => 16,
                _ => return err(None, "`grid.n` is required for dimension above 3"),
            },
        };

        let reg_line = e.line_of("regularizer.kind");
        let gamma_line = e.line_of("regularizer.gamma");
        let kind: Option<String> = e.get("regularizer.kind")?;
        let gamma: Option<f64> = e.get("regularizer.gamma")?;
        let regularizer = match kind.as_deref().unwrap_or("negentropy") {
            "negentropy" => Regularizer::Negentropy,
            "quadratic" => Regularizer::Quadratic,
            "burg" => Regularizer::Burg,
            "tsallis" => Regularizer::tsallis(gamma.unwrap_or(0.5)).or_else(|x| err(gamma_line, x.to_string()))?,
            other => return err(reg_line, format!("unknown regularizer `{other}`")),
        };
        if gamma.is_some() && !matches!(regularizer, Regularizer::Tsallis { .. }) {
            return err(gamma_line, "`regularizer.gamma` applies only to tsallis");
        }
        if algorithm != Algorithm::Da && kind.is_some() && regularizer != Regularizer::Negentropy {
            return err(reg_line, format!("{} uses the logit map; only negentropy is allowed", algorithm.name()));
        }

        let sk_line = e.line_of("stream.kind");
        let stream_kind = match e.get::<String>("stream.kind")?.as_deref().unwrap_or("trig") {
            "trig" => StreamKind::Trig,
            "drifting" => StreamKind::Drifting,
            "finite_sum" => StreamKind::FiniteSum,
            other => return err(sk_line, format!("unknown stream kind `{other}` (trig, drifting, finite_sum)")),
        };
        let conv_line = e.line_of("stream.convention");
        let convention = match e.get::<String>("stream.convention")?.as_deref() {
            None if algorithm.is_bandit() => Convention::Payoff,
            None => Convention::Loss,
            Some("loss") => Convention::Loss,
            Some("payoff") => Convention::Payoff,
            Some(other) => return err(conv_line, format!("unknown convention `{other}` (loss, payoff)")),
        };
        let seed = e.get("stream.seed")?.unwrap_or(2021);
        let offset = e.get("stream.offset")?.unwrap_or(0.0);
        let terms_line = e.line_of("stream.terms");
        let terms = match e.take("stream.terms") {
            None => None,
            Some((line, v)) => Some(parse_terms(&v, dim).or_else(|m| err(Some(line), m))?),
        };
        let rate_line = e.line_of("stream.rate");
        let rate: Option<f64> = e.get("stream.rate")?;
        let de_line = e.line_of("stream.drift_exponent");
        let drift_exponent: Option<f64> = e.get("stream.drift_exponent")?;
        let comp_line = e.line_of("stream.components");
        let components: Option<usize> = e.get("stream.components")?;
        match stream_kind {
            StreamKind::Drifting => {
                if rate.is_none() {
                    return err(sk_line, "drifting streams need `stream.rate`");
                }
            }
            _ => {
                if rate.is_some() {
                    return err(rate_line, "`stream.rate` applies only to drifting streams");
                }
                if drift_exponent.is_some() {
                    return err(de_line, "`stream.drift_exponent` applies only to drifting streams");
                }
            }
        }
        if stream_kind == StreamKind::FiniteSum {
            if terms.is_some() {
                return err(terms_line, "`stream.terms` does not apply to finite_sum streams");
            }
            if components == Some(0) {
                return err(comp_line, "`stream.components` must be positive");
            }
        } else if components.is_some() {
            return err(comp_line, "`stream.components` applies only to finite_sum streams");
        }
        let stream = StreamSpec {
            kind: stream_kind,
            convention,
            seed,
            offset,
            terms,
            rate: rate.unwrap_or(0.0),
            drift_exponent: drift_exponent.unwrap_or(0.5),
            components: components.unwrap_or(8),
        };
        non_negative(&e, "stream.drift_exponent", Some(stream.drift_exponent))?;

        let ck_line = e.line_of("channel.kind");
        let channel_kind: Option<String> = e.get("channel.kind")?;
        let kind = match channel_kind.as_deref() {
            None | Some("exact") => ChannelKind::Exact,
            Some("unbiased") => ChannelKind::Unbiased,
            Some("biased") => ChannelKind::Biased,
            Some("bandit") if algorithm.is_bandit() => ChannelKind::Exact,
            Some(other) => return err(ck_line, format!("channel `{other}` is not available for {}", algorithm.name())),
        };
        if algorithm != Algorithm::Da && !matches!(channel_kind.as_deref(), None | Some("bandit")) {
            return err(ck_line, format!("{} observes realized values only; use `channel.kind = bandit`", algorithm.name()));
        }
        let noise_line = e.line_of("channel.noise");
        let noise = match e.get::<String>("channel.noise")?.as_deref() {
            None | Some("trig") => NoiseKind::Trig,
            Some("components") => NoiseKind::Components,
            Some(other) => return err(noise_line, format!("unknown noise `{other}` (trig, components)")),
        };
        if noise == NoiseKind::Components && stream.kind != StreamKind::FiniteSum {
            return err(noise_line, "component noise needs a finite_sum stream");
        }
        let channel = ChannelSpec {
            kind,
            noise,
            sigma: e.get("channel.sigma")?.unwrap_or(0.5),
            harmonics: e.get("channel.harmonics")?.unwrap_or(3),
            bias_scale: e.get("channel.bias_scale")?.unwrap_or(0.0),
            bias_decay: e.get("channel.bias_decay")?.unwrap_or(0.5),
        };
        for (k, v) in [("channel.sigma", channel.sigma), ("channel.bias_scale", channel.bias_scale), ("channel.bias_decay", channel.bias_decay)] {
            non_negative(&e, k, Some(v))?;
        }

        let schedule = ScheduleSpec {
            eta_coefficient: e.get("schedule.eta_coefficient")?,
            p: e.get("schedule.p")?,
            delta_coefficient: e.get("schedule.delta_coefficient")?,
            w: e.get("schedule.w")?,
            epsilon_coefficient: e.get("schedule.epsilon_coefficient")?,
            b: e.get("schedule.b")?,
        };
        for (k, v) in [("schedule.p", schedule.p), ("schedule.w", schedule.w), ("schedule.b", schedule.b)] {
            if let Some(x) = v {
                if !(x >= 0.0) || !x.is_finite() {
                    return err(None, format!("`{k}` must be finite and non-negative, got {x}"));
                }
            }
        }
        for (k, v) in [
            ("schedule.eta_coefficient", schedule.eta_coefficient),
            ("schedule.delta_coefficient", schedule.delta_coefficient),
            ("schedule.epsilon_coefficient", schedule.epsilon_coefficient),
        ] {
            if let Some(x) = v {
                if !(x > 0.0) || !x.is_finite() {
                    return err(None, format!("`{k}` must be positive, got {x}"));
                }
            }
        }
        if schedule.epsilon_coefficient.is_some_and(|x| x > 1.0) {
            return err(None, "`schedule.epsilon_coefficient` must be at most 1");
        }

        let arms_line = e.line_of("exp3.arms");
        let exp3_arms = match e.get::<usize>("exp3.arms")? {
            Some(0) => return err(arms_line, "`exp3.arms` must be positive"),
            Some(m) => m,
            None => match dim {
                1 => 32,
                2 => 8,
                _ => 4,
            },
        };

        let h_line = e.line_of("horizon");
        let horizon = match e.get::<usize>("horizon")? {
            None => return err(None, "missing key `horizon`"),
            Some(0) => return err(h_line, "`horizon` must be at least 1"),
            Some(t) => t,
        };
        let seeds = match e.take("seeds") {
            None => vec![0],
            Some((line, v)) => parse_seeds(&v).or_else(|m| err(Some(line), m))?,
        };
        let cs_line = e.line_of("checkpoints.start");
        let checkpoint_start = e.get("checkpoints.start")?.unwrap_or(100);
        if checkpoint_start == 0 {
            return err(cs_line, "`checkpoints.start` must be positive");
        }
        let cr_line = e.line_of("checkpoints.ratio");
        let checkpoint_ratio: f64 = e.get("checkpoints.ratio")?.unwrap_or(1.3);
        if !(checkpoint_ratio > 1.0) || !checkpoint_ratio.is_finite() {
            return err(cr_line, "`checkpoints.ratio` must exceed 1");
        }
        let output = PathBuf::from(e.get::<String>("output")?.unwrap_or_else(|| "out".into()));

        let en_line = e.line_of("diagnostics.energy");
        let energy_diagnostics = e.get("diagnostics.energy")?.unwrap_or(false);
        if energy_diagnostics && algorithm != Algorithm::Da {
            return err(en_line, "energy diagnostics apply only to da");
        }
        let diagnostics_center = match e.get_list::<f64>("diagnostics.center")? {
            None => None,
            Some((line, v)) if v.len() != dim => return err(Some(line), format!("`diagnostics.center` needs {dim} entries")),
            Some((_, v)) => Some(v),
        };
        let diagnostics_radius: Option<f64> = e.get("diagnostics.radius")?;
        if diagnostics_radius.is_some_and(|r| !(r > 0.0)) {
            return err(None, "`diagnostics.radius` must be positive");
        }
        let windows = match e.get_list::<usize>("windows")? {
            None => Vec::new(),
            Some((line, v)) => {
                if v.iter().any(|w| *w == 0 || *w > horizon) {
                    return err(Some(line), format!("window lengths must lie in 1..={horizon}"));
                }
                v
            }
        };

        e.finish()?;
        Ok(ExperimentConfig {
            algorithm,
            dim,
            lower,
            upper,
            grid_n,
            regularizer,
            stream,
            channel,
            schedule,
            exp3_arms,
            horizon,
            seeds,
            checkpoint_start,
            checkpoint_ratio,
            output,
            energy_diagnostics,
            diagnostics_center,
            diagnostics_radius,
            windows,
        })
    }
}
