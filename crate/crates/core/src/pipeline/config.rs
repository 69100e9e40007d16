//! Flat `key = value` run configuration with typed accessors.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stft::{StftConfig, Window};

/// Parsed configuration file. Keys are dotted lowercase identifiers; values
/// are free-form strings interpreted by the typed getters.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Parse `key = value` lines. Blank lines and lines starting with `#`
    /// are ignored; duplicate keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty()
                || !key
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
            {
                return Err(Error::Config(format!("line {}: bad key {key:?}", lineno + 1)));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key {key:?}: {v:?} is not a number"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key {key:?}: {v:?} is not an integer"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key {key:?}: {v:?} is not an integer"))),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.values.get(key).map(String::as_str) {
            None => Ok(default),
            Some("true") | Some("yes") | Some("1") => Ok(true),
            Some("false") | Some("no") | Some("0") => Ok(false),
            Some(v) => Err(Error::Config(format!("key {key:?}: {v:?} is not a boolean"))),
        }
    }

    /// Whitespace-separated list of numbers.
    /// Numbers separated by whitespace and/or commas.
    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.values.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|tok| !tok.is_empty())
                .map(|tok| {
                    tok.parse().map_err(|_| {
                        Error::Config(format!("key {key:?}: {tok:?} is not a number"))
                    })
                })
                .collect(),
        }
    }

    /// A 3-vector such as a position, written as `x y z`.
    pub fn vec3(&self, key: &str) -> Result<Option<[f64; 3]>> {
        let Some(v) = self.values.get(key) else {
            return Ok(None);
        };
        let parts = self.f64_list_or(key, &[])?;
        if parts.len() != 3 {
            return Err(Error::Config(format!("key {key:?}: {v:?} is not an 'x y z' triple")));
        }
        Ok(Some([parts[0], parts[1], parts[2]]))
    }

    /// Indexed positions `prefix.0`, `prefix.1`, ... with no gaps.
    pub fn positions(&self, prefix: &str) -> Result<Vec<[f64; 3]>> {
        let mut out = Vec::new();
        loop {
            match self.vec3(&format!("{prefix}.{}", out.len()))? {
                Some(p) => out.push(p),
                None => break,
            }
        }
        Ok(out)
    }

    /// STFT settings under `{prefix}.window`, `{prefix}.hop`, `{prefix}.fft`,
    /// `{prefix}.window_fn`, falling back to the given default.
    pub fn stft_or(&self, prefix: &str, default: StftConfig) -> Result<StftConfig> {
        let window_key = format!("{prefix}.window");
        let window_len = self.usize_or(&window_key, default.window_length)?;
        // An overridden window drags the FFT default along with it.
        let fft_default = if self.values.contains_key(&window_key) {
            window_len.next_power_of_two()
        } else {
            default.fft_size
        };
        let hop = self.usize_or(&format!("{prefix}.hop"), default.hop)?;
        let fft_len = self.usize_or(&format!("{prefix}.fft"), fft_default)?;
        let window = match self.get(&format!("{prefix}.window_fn")) {
            None => default.window,
            Some("hann") => Window::Hann,
            Some("sqrt_hann") => Window::SqrtHann,
            Some(other) => {
                return Err(Error::Config(format!("unknown window function {other:?}")))
            }
        };
        StftConfig::new(window_len, hop, fft_len.max(window_len), window)
    }
}
