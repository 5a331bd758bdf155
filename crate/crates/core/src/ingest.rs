//! Acceleration signals: loading, windowing and a synthetic engine model.
//!
//! The synthetic model stands in for recorded engine-head vibration. A
//! four-stroke inline four fires one cylinder every half crankshaft turn in
//! the order 1-3-4-2. Every firing contributes an exponentially damped
//! sinusoid burst scaled by the cylinder's transfer-path gain; a misfiring
//! cylinder's bursts are further scaled by `misfire_attenuation`. White
//! Gaussian noise is added on top.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Engine condition class. Variant order is the reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    C1mis,
    C2mis,
    C3mis,
    C4mis,
    Normal,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::C1mis,
        Condition::C2mis,
        Condition::C3mis,
        Condition::C4mis,
        Condition::Normal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::C1mis => "C1mis",
            Condition::C2mis => "C2mis",
            Condition::C3mis => "C3mis",
            Condition::C4mis => "C4mis",
            Condition::Normal => "Normal",
        }
    }

    /// Cylinder number (1-based) that misfires under this condition.
    pub fn misfiring_cylinder(self) -> Option<u8> {
        match self {
            Condition::C1mis => Some(1),
            Condition::C2mis => Some(2),
            Condition::C3mis => Some(3),
            Condition::C4mis => Some(4),
            Condition::Normal => None,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 24_000.0;
pub const DEFAULT_WINDOW_LEN: usize = 8192;

/// Cylinder firing sequence of the simulated inline four.
pub const FIRING_ORDER: [u8; 4] = [1, 3, 4, 2];

#[derive(Debug, Clone, PartialEq)]
pub struct RawSignal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    condition: Option<Condition>,
    source_id: String,
}

impl RawSignal {
    pub fn new(
        samples: Vec<f64>,
        sample_rate_hz: f64,
        condition: Option<Condition>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("signal has no samples".into()));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(RawSignal {
            samples,
            sample_rate_hz,
            condition,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn condition(&self) -> Option<Condition> {
        self.condition
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }
}

/// A fixed-length slice of a signal, labelled with the signal's condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow {
    samples: Vec<f64>,
    condition: Option<Condition>,
}

impl SignalWindow {
    pub fn new(samples: Vec<f64>, condition: Option<Condition>) -> Self {
        SignalWindow { samples, condition }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn condition(&self) -> Option<Condition> {
        self.condition
    }
}

/// Reads a headerless one-column text signal.
pub fn load_signal(
    path: impl AsRef<Path>,
    condition: Option<Condition>,
    sample_rate_hz: f64,
) -> Result<RawSignal> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: f64 = trimmed.parse().map_err(|_| Error::ParseSample {
            path: path.to_path_buf(),
            line: i + 1,
            text: trimmed.to_string(),
        })?;
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(Error::EmptySignal(path.to_path_buf()));
    }
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    RawSignal::new(samples, sample_rate_hz, condition, source_id)
}

/// Writes samples one per line, LF-terminated, in shortest round-trip form.
pub fn write_signal(path: impl AsRef<Path>, samples: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for x in samples {
        writeln!(out, "{x}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Cuts `signal` into windows starting at 0, hop, 2*hop, ...; a trailing
/// partial window is dropped.
pub fn window_signal(signal: &RawSignal, window_len: usize, hop: usize) -> Result<Vec<SignalWindow>> {
    if window_len < 2 {
        return Err(Error::InvalidArgument(format!(
            "window length must be >= 2, got {window_len}"
        )));
    }
    if hop == 0 {
        return Err(Error::InvalidArgument("hop must be >= 1".into()));
    }
    let n = signal.len();
    if n < window_len {
        return Ok(Vec::new());
    }
    let count = (n - window_len) / hop + 1;
    Ok((0..count)
        .map(|i| {
            let start = i * hop;
            SignalWindow::new(
                signal.samples[start..start + window_len].to_vec(),
                signal.condition,
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSimConfig {
    pub rpm: f64,
    pub sample_rate_hz: f64,
    pub n_samples: usize,
    pub burst_amplitude: f64,
    pub burst_decay_s: f64,
    pub burst_freq_hz: f64,
    /// Amplitude multiplier applied to the misfiring cylinder's bursts.
    pub misfire_attenuation: f64,
    pub noise_sigma: f64,
    /// Sensor transfer-path gain for cylinders 1..=4.
    pub cylinder_gains: [f64; 4],
    pub seed: u64,
}

impl Default for EngineSimConfig {
    fn default() -> Self {
        EngineSimConfig {
            rpm: 1500.0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            n_samples: DEFAULT_WINDOW_LEN,
            burst_amplitude: 2.5,
            burst_decay_s: 0.002,
            burst_freq_hz: 3000.0,
            misfire_attenuation: 0.1,
            noise_sigma: 0.15,
            cylinder_gains: [1.0, 0.8, 0.6, 0.4],
            seed: 0,
        }
    }
}

impl EngineSimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("rpm", self.rpm)?;
        positive("sample_rate_hz", self.sample_rate_hz)?;
        positive("burst_decay_s", self.burst_decay_s)?;
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.misfire_attenuation) {
            return Err(Error::InvalidConfig(format!(
                "misfire_attenuation must lie in [0, 1), got {}",
                self.misfire_attenuation
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !self.burst_amplitude.is_finite() || !self.burst_freq_hz.is_finite() {
            return Err(Error::InvalidConfig("burst parameters must be finite".into()));
        }
        if self.cylinder_gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidConfig("cylinder gains must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Firings per second: two per crankshaft revolution on a four-stroke four.
    pub fn firing_rate_hz(&self) -> f64 {
        self.rpm / 60.0 * 2.0
    }

    /// Samples between consecutive firings (480 at the defaults).
    pub fn firing_interval_samples(&self) -> f64 {
        self.sample_rate_hz / self.firing_rate_hz()
    }
}

/// One firing event inside a generated signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Firing {
    /// Onset in (possibly fractional) samples from the start of the signal.
    pub onset: f64,
    pub cylinder: u8,
}

/// Every firing whose onset falls inside the signal, in time order.
pub fn firing_schedule(config: &EngineSimConfig) -> Vec<Firing> {
    let interval = config.firing_interval_samples();
    let n = config.n_samples as f64;
    (0..)
        .map(|i| Firing {
            onset: i as f64 * interval,
            cylinder: FIRING_ORDER[i % FIRING_ORDER.len()],
        })
        .take_while(|f| f.onset < n)
        .collect()
}

/// Generates one synthetic engine-head acceleration record.
pub fn synth_engine_signal(config: &EngineSimConfig, condition: Condition) -> Result<RawSignal> {
    config.validate()?;
    let n = config.n_samples;
    let fs = config.sample_rate_hz;
    let omega = 2.0 * std::f64::consts::PI * config.burst_freq_hz;
    let mut samples = vec![0.0; n];

    for firing in firing_schedule(config) {
        let mut amplitude =
            config.burst_amplitude * config.cylinder_gains[usize::from(firing.cylinder - 1)];
        if condition.misfiring_cylinder() == Some(firing.cylinder) {
            amplitude *= config.misfire_attenuation;
        }
        if amplitude == 0.0 {
            continue;
        }
        let first = firing.onset.ceil() as usize;
        for (k, sample) in samples.iter_mut().enumerate().skip(first) {
            let t = (k as f64 - firing.onset) / fs;
            *sample += amplitude * (-t / config.burst_decay_s).exp() * (omega * t).sin();
        }
    }

    if config.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let noise = Normal::new(0.0, config.noise_sigma)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for sample in &mut samples {
            *sample += noise.sample(&mut rng);
        }
    }

    RawSignal::new(
        samples,
        fs,
        Some(condition),
        format!("{}_seed{}", condition, config.seed),
    )
}
