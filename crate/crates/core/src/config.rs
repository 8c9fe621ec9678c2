//! Line-based `key = value` run configuration.
//!
//! `#` starts a comment. Physical keys `b` and `alpha` are mandatory, the
//! rest fall back to defaults. Numbers may be written as plain decimals or
//! as a ratio `p/q`.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::scenario::{self, Scheme};

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_WALKERS: u64 = 1_000_000;
pub const DEFAULT_SAMPLES: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub b: f64,
    pub alpha: f64,
    pub e_i: f64,
    pub e_max: f64,
    pub n_e: usize,
    pub n_z: usize,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub scheme: Scheme,
    pub seed: u64,
    pub n_walkers: u64,
    pub n_samples: u64,
    /// Depths at which spectra are written; empty means `{0+, b/3, b}`.
    pub spectrum_depths: Vec<f64>,
    /// Incoming energy pairs for the collision oracle.
    pub pairs: Vec<(f64, f64)>,
    pub out: Option<PathBuf>,
}

impl Config {
    pub fn new(b: f64, alpha: f64) -> Self {
        Config {
            b,
            alpha,
            e_i: 1.0,
            e_max: scenario::DEFAULT_E_MAX,
            n_e: scenario::DEFAULT_N_E,
            n_z: scenario::DEFAULT_N_Z,
            damping: scenario::DEFAULT_DAMPING,
            tol: scenario::DEFAULT_TOL,
            max_iter: scenario::DEFAULT_MAX_ITER,
            scheme: Scheme::default(),
            seed: DEFAULT_SEED,
            n_walkers: DEFAULT_WALKERS,
            n_samples: DEFAULT_SAMPLES,
            spectrum_depths: Vec::new(),
            pairs: vec![(1.0, 1.0), (1.0, 4.0), (0.5, 2.0)],
            out: None,
        }
    }

    /// Depths for spectrum output, with the defaults resolved against `b`.
    pub fn resolved_spectrum_depths(&self) -> Vec<f64> {
        if self.spectrum_depths.is_empty() {
            vec![0.0, self.b / 3.0, self.b]
        } else {
            self.spectrum_depths.clone()
        }
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |reason: String| Error::config(key, reason);
        match key {
            "b" => self.b = parse_number(value).map_err(bad)?,
            "alpha" => self.alpha = parse_number(value).map_err(bad)?,
            "e_i" => self.e_i = parse_number(value).map_err(bad)?,
            "e_max" => self.e_max = parse_number(value).map_err(bad)?,
            "n_e" => self.n_e = parse_int(value).map_err(bad)?,
            "n_z" => self.n_z = parse_int(value).map_err(bad)?,
            "damping" => self.damping = parse_number(value).map_err(bad)?,
            "tol" => self.tol = parse_number(value).map_err(bad)?,
            "max_iter" => self.max_iter = parse_int(value).map_err(bad)?,
            "scheme" => self.scheme = value.parse().map_err(bad)?,
            "seed" => self.seed = parse_int(value).map_err(bad)?,
            "n_walkers" => self.n_walkers = parse_int(value).map_err(bad)?,
            "n_samples" => self.n_samples = parse_int(value).map_err(bad)?,
            "spectrum_depths" => {
                self.spectrum_depths = split_list(value)
                    .map(parse_number)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(bad)?
            }
            "pairs" => {
                self.pairs = split_list(value)
                    .map(parse_pair)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(bad)?
            }
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(bad("unknown key".into())),
        }
        Ok(())
    }

    /// Renders every key, so that parsing the output reproduces `self`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "b = {:?}", self.b);
        let _ = writeln!(s, "alpha = {:?}", self.alpha);
        let _ = writeln!(s, "e_i = {:?}", self.e_i);
        let _ = writeln!(s, "e_max = {:?}", self.e_max);
        let _ = writeln!(s, "n_e = {}", self.n_e);
        let _ = writeln!(s, "n_z = {}", self.n_z);
        let _ = writeln!(s, "damping = {:?}", self.damping);
        let _ = writeln!(s, "tol = {:?}", self.tol);
        let _ = writeln!(s, "max_iter = {}", self.max_iter);
        let _ = writeln!(s, "scheme = {}", self.scheme.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "n_walkers = {}", self.n_walkers);
        let _ = writeln!(s, "n_samples = {}", self.n_samples);
        if !self.spectrum_depths.is_empty() {
            let _ = writeln!(s, "spectrum_depths = {}", join(&self.spectrum_depths));
        }
        let pairs: Vec<String> = self.pairs.iter().map(|(a, b)| format!("{a:?}:{b:?}")).collect();
        let _ = writeln!(s, "pairs = {}", pairs.join(", "));
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", out.display());
        }
        s
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_number(value: &str) -> std::result::Result<f64, String> {
    let parsed = match value.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| format!("cannot parse `{value}` as a number"))?;
            let q: f64 = q.trim().parse().map_err(|_| format!("cannot parse `{value}` as a number"))?;
            p / q
        }
        None => value.parse().map_err(|_| format!("cannot parse `{value}` as a number"))?,
    };
    if parsed.is_finite() {
        Ok(parsed)
    } else {
        Err(format!("`{value}` is not finite"))
    }
}

fn parse_int<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    let cleaned = value.replace('_', "");
    cleaned
        .parse()
        .map_err(|_| format!("cannot parse `{value}` as a non-negative integer"))
}

fn parse_pair(value: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = value
        .split_once(':')
        .ok_or_else(|| format!("expected `e1:e2`, got `{value}`"))?;
    Ok((parse_number(a.trim())?, parse_number(b.trim())?))
}

pub fn parse_config(text: &str) -> Result<Config> {
    let mut config = Config::new(f64::NAN, f64::NAN);
    let mut seen: Vec<(String, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            reason: format!("expected `key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if let Some((_, first)) = seen.iter().find(|(k, _)| k == key) {
            return Err(Error::Parse {
                line,
                reason: format!("duplicate key `{key}` (first set on line {first})"),
            });
        }
        config.set(key, value).map_err(|e| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
        seen.push((key.to_string(), line));
    }
    for key in ["b", "alpha"] {
        if !seen.iter().any(|(k, _)| k == key) {
            return Err(Error::config(key, "missing"));
        }
    }
    Ok(config)
}
