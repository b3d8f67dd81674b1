//! Scenario configuration.
//!
//! Files are flat `key = value` text with dotted sections (a TOML subset),
//! for example:
//!
//! ```text
//! m_t = 2
//! n = 16
//! snr_db = [0, 10, 20, 30]
//! channel.model = "geometric"
//! channel.paths = 3
//! solver.delta = 1e-6
//! ```
//!
//! Every key is optional; missing keys take the documented defaults and
//! unknown keys are rejected. `key=value` overrides are applied after the
//! file is parsed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Rayleigh,
    Geometric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSpec {
    pub model: ChannelKind,
    /// Number of propagation paths for the geometric model.
    pub paths: usize,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            model: ChannelKind::Rayleigh,
            paths: 3,
        }
    }
}

/// How the rotation matrix `P` and the coding matrix `W` are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    /// i.i.d. uniform phases from the trial seed.
    Random,
    /// Deterministic DFT rows; `Ψ` becomes the first `M_T·N` columns of the
    /// `K`-point DFT.
    Dft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverKnobs {
    /// Stop when successive normalized residuals differ by at most `delta`.
    pub delta: f64,
    pub max_iters: usize,
    pub init_seed: u64,
    /// Project the PAKRON Stage-I `Ω` estimate onto Kronecker-structured
    /// matrices before Stage II. Off reproduces the plain two-stage pipeline.
    pub structure_projection: bool,
}

impl Default for SolverKnobs {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            max_iters: 500,
            init_seed: 0,
            structure_projection: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Transmit antennas.
    pub m_t: usize,
    /// Receive antennas.
    pub m_r: usize,
    /// Surface elements.
    pub n: usize,
    /// Fully connected groups; must divide `n`.
    pub q: usize,
    /// Blocks per frame.
    pub k: usize,
    /// Symbol slots per block.
    pub t: usize,
    /// Frames.
    pub i: usize,
    pub snr_db: Vec<f64>,
    /// PSK order, a power of two.
    pub modulation_order: usize,
    pub channel: ChannelSpec,
    pub design: DesignKind,
    /// Master seed; every trial seed is derived from it.
    pub seed: u64,
    /// Monte-Carlo runs per (SNR, receiver) cell.
    pub runs: usize,
    pub noiseless: bool,
    /// Run sweeps even when an identifiability inequality fails.
    pub ignore_identifiability: bool,
    /// Record wall-clock times. Off (the default) keeps outputs bit-reproducible.
    pub timing: bool,
    pub solver: SolverKnobs,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            m_t: 2,
            m_r: 4,
            n: 16,
            q: 2,
            k: 32,
            t: 4,
            i: 2,
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            modulation_order: 4,
            channel: ChannelSpec::default(),
            design: DesignKind::Random,
            seed: 1,
            runs: 100,
            noiseless: false,
            ignore_identifiability: false,
            timing: false,
            solver: SolverKnobs::default(),
        }
    }
}

impl SystemConfig {
    /// Parses a config file body and applies `key=value` overrides.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        Self::deserialize(toml::Value::Table(table)).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_file(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, overrides)
    }

    /// Flat `key = value` rendering that [`SystemConfig::parse`] reads back.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// `N / Q`.
    pub fn group_size(&self) -> usize {
        self.n / self.q
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("m_t", self.m_t),
            ("m_r", self.m_r),
            ("n", self.n),
            ("q", self.q),
            ("k", self.k),
            ("t", self.t),
            ("i", self.i),
        ];
        for (name, v) in extents {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !self.n.is_multiple_of(self.q) {
            return Err(Error::Config(format!(
                "q = {} does not divide n = {}",
                self.q, self.n
            )));
        }
        if self.t < self.m_t {
            return Err(Error::Config(format!(
                "t = {} must be at least m_t = {}",
                self.t, self.m_t
            )));
        }
        if self.modulation_order < 2 || !self.modulation_order.is_power_of_two() {
            return Err(Error::Config(format!(
                "modulation_order = {} is not a power of two >= 2",
                self.modulation_order
            )));
        }
        if self.channel.model == ChannelKind::Geometric {
            if self.channel.paths == 0 {
                return Err(Error::Config("channel.paths must be at least 1".into()));
            }
            if perfect_square_root(self.n).is_none() {
                return Err(Error::Config(format!(
                    "geometric channels need a square planar surface, n = {} is not a perfect square",
                    self.n
                )));
            }
        }
        if let Some(bad) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return Err(Error::Config(format!("snr_db entry {bad} is not finite")));
        }
        if self.solver.delta.is_nan() || self.solver.delta < 0.0 {
            return Err(Error::Config("solver.delta must be non-negative".into()));
        }
        if self.solver.max_iters == 0 {
            return Err(Error::Config("solver.max_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// Checks that also apply to sweeps.
    pub fn validate_sweep(&self) -> Result<()> {
        self.validate()?;
        if self.snr_db.is_empty() {
            return Err(Error::Config("snr_db must list at least one SNR".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn perfect_square_root(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

fn apply_override(table: &mut toml::Table, ov: &str) -> Result<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override `{ov}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = parse_value(raw);
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(Error::Parse(format!("empty key segment in `{key}`")));
        }
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Parse(format!("`{part}` in `{key}` is not a section")))?;
    }
    Err(Error::Parse(format!("override `{ov}` has an empty key")))
}

/// TOML literal if it parses as one; bare comma lists become arrays and
/// anything else a string.
fn parse_value(raw: &str) -> toml::Value {
    let attempt = |s: &str| {
        toml::from_str::<toml::Table>(&format!("v = {s}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
    };
    attempt(raw)
        .or_else(|| raw.contains(',').then(|| attempt(&format!("[{raw}]"))).flatten())
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
