//! Flat `key = value` run configuration.
//!
//! Every key has a default; a config file and then `--set` flags override
//! them. The merged values are parsed and validated up front, and the
//! canonical `key=value` listing is hashed into the digest embedded in every
//! output. The listing holds every key except `seed` and the `net.*`
//! transport keys, with values in their parsed form, so the digest names the
//! experiment rather than where or with which seed it ran.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use hdqkd_core::modes::{synthesize_state, ModeLabel};
use hdqkd_core::protocol::max_tolerated_error;
use hdqkd_core::{Encoding, Grid, ProtocolConfig, SourceParams, Waists};
use sha2::{Digest, Sha256};

/// Keys with their defaults, the calibrated values also listed in
/// `configs/paper.cfg`.
const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "1"),
    ("grid.n", "512"),
    ("grid.extent", "5"),
    ("waist.source", "1"),
    ("waist.smf", "1"),
    ("encoding", "phase_only"),
    ("image.half_width", "3"),
    ("image.pixels", "128"),
    ("source.rep_rate", "2e6"),
    ("source.tau_x", "25"),
    ("source.tau_bx", "4"),
    ("source.p_x", "1"),
    ("source.q_bx", "calibrate"),
    ("source.eta", "0.1"),
    ("source.dark_rate", "100"),
    ("g2.target", "0.1"),
    ("g2.calibration_gate_ns", "11"),
    ("g2.calibration_pulses", "10000000"),
    ("g2.gates_ns", "0,11"),
    ("g2.n_pulses", "10000000"),
    ("g2.bin_ns", "1"),
    ("lifetime.bin_ns", "0.5"),
    ("channel.model", "crosstalk"),
    ("channel.transmittance", "1"),
    ("channel.dark_click_prob", "fit"),
    ("protocol.d", "3"),
    ("protocol.n_rounds", "1000000"),
    ("protocol.disclosure_fraction", "0.1"),
    ("protocol.abort_threshold", "max"),
    ("protocol.min_disclosed", "10"),
    ("sweep.points", "201"),
    ("net.addr", "127.0.0.1:7878"),
    ("net.connect_timeout_s", "10"),
];

/// Invalid configuration. Maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Yield {
    Fixed(f64),
    /// Bisect the biexciton yield until the gated `g2(0)` hits `g2.target`.
    Calibrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// Outcome distributions from the simulated crosstalk matrix (d = 3).
    Crosstalk,
    /// Perfect decoding.
    Ideal,
    /// Every outcome equally likely, whatever was sent.
    Depolarizing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DarkClicks {
    Fixed(f64),
    /// Fit to the measured error rates and key rate.
    Fit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Config {
    pub target: f64,
    pub calibration_gate_ns: f64,
    pub calibration_pulses: u64,
    pub gates_ns: Vec<f64>,
    pub n_pulses: u64,
    pub bin_ns: f64,
    pub lifetime_bin_ns: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: Grid,
    pub waists: Waists,
    pub encoding: Encoding,
    pub image_half_width: f64,
    pub image_pixels: usize,
    /// Source parameters; `q_bx` holds 0 when it is to be calibrated.
    pub source: SourceParams,
    pub q_bx: Yield,
    pub g2: G2Config,
    pub channel: ChannelKind,
    pub transmittance: f64,
    pub dark_clicks: DarkClicks,
    pub protocol: ProtocolConfig,
    pub sweep_points: usize,
    pub addr: String,
    pub connect_timeout_s: f64,
    canonical: BTreeMap<String, String>,
}

/// Raw key/value pairs, before parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig(BTreeMap<String, String>);

impl Default for RawConfig {
    fn default() -> Self {
        Self(DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
    }
}

impl RawConfig {
    /// Applies `key = value` lines. `#` starts a comment; blank lines are
    /// ignored; a key may appear once per text.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("{origin}:{}: expected `key = value`, got `{line}`", no + 1));
            };
            let k = k.trim();
            if let Some(prev) = seen.insert(k.to_string(), no + 1) {
                return err(format!("{origin}:{}: `{k}` already set on line {prev}", no + 1));
            }
            self.set(k, v.trim()).map_err(|e| ConfigError(format!("{origin}:{}: {}", no + 1, e.0)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// A `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let Some((k, v)) = assignment.split_once('=') else {
            return err(format!("override `{assignment}` must have the form key=value"));
        };
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.0.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => {
                let prefix = key.split('.').next().unwrap_or(key);
                let similar: Vec<_> = DEFAULTS.iter().map(|(k, _)| *k).filter(|k| k.starts_with(prefix)).collect();
                if similar.is_empty() {
                    err(format!("unknown key `{key}`"))
                } else {
                    err(format!("unknown key `{key}` (known keys with this prefix: {})", similar.join(", ")))
                }
            }
        }
    }

    fn get(&self, key: &str) -> &str {
        &self.0[key]
    }

    /// Parses and validates every field.
    pub fn parse(&self) -> Result<RunConfig> {
        let mut canonical = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            canonical.insert(k.to_string(), v);
        };

        let seed: u64 = self.num("seed")?;

        let n: usize = self.num("grid.n")?;
        let extent: f64 = self.num("grid.extent")?;
        let grid = Grid::new(n, extent).map_err(|e| ConfigError(format!("grid.n/grid.extent: {e}")))?;
        let waists = Waists { source: self.positive("waist.source")?, smf: self.positive("waist.smf")? };
        let encoding: Encoding =
            self.get("encoding").parse().map_err(|e: String| ConfigError(format!("encoding: {e}")))?;
        // Catches waists too wide for the window before anything runs.
        for label in ModeLabel::all() {
            synthesize_state(grid, waists.source, label, encoding)
                .map_err(|e| ConfigError(format!("waist.source = {} on this grid: {e}", waists.source)))?;
        }
        put("grid.n", n.to_string());
        put("grid.extent", extent.to_string());
        put("waist.source", waists.source.to_string());
        put("waist.smf", waists.smf.to_string());
        put("encoding", encoding.as_str().into());

        let image_half_width = self.positive("image.half_width")?;
        let image_pixels: usize = self.num("image.pixels")?;
        if image_pixels < 4 || !image_pixels.is_multiple_of(2) {
            return err(format!("image.pixels = {image_pixels} must be even and at least 4"));
        }
        put("image.half_width", image_half_width.to_string());
        put("image.pixels", image_pixels.to_string());

        let q_bx = match self.get("source.q_bx") {
            "calibrate" => Yield::Calibrate,
            _ => Yield::Fixed(self.num("source.q_bx")?),
        };
        let source = SourceParams {
            rep_rate: self.num("source.rep_rate")?,
            tau_x: self.num("source.tau_x")?,
            tau_bx: self.num("source.tau_bx")?,
            p_x: self.num("source.p_x")?,
            q_bx: match q_bx {
                Yield::Fixed(q) => q,
                Yield::Calibrate => 0.0,
            },
            eta: self.num("source.eta")?,
            dark_rate: self.num("source.dark_rate")?,
        };
        source.validate().map_err(|e| ConfigError(format!("source.*: {e}")))?;
        put("source.rep_rate", source.rep_rate.to_string());
        put("source.tau_x", source.tau_x.to_string());
        put("source.tau_bx", source.tau_bx.to_string());
        put("source.p_x", source.p_x.to_string());
        put(
            "source.q_bx",
            match q_bx {
                Yield::Fixed(q) => q.to_string(),
                Yield::Calibrate => "calibrate".into(),
            },
        );
        put("source.eta", source.eta.to_string());
        put("source.dark_rate", source.dark_rate.to_string());

        let gates_ns = self
            .get("g2.gates_ns")
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| {
                ConfigError(format!("g2.gates_ns = `{}`: expected comma-separated numbers", self.get("g2.gates_ns")))
            })?;
        if gates_ns.iter().any(|g| !(*g >= 0.0 && *g < source.period_ns())) {
            return err(format!("g2.gates_ns: every gate must lie in [0, {} ns)", source.period_ns()));
        }
        let g2 = G2Config {
            target: self.num("g2.target")?,
            calibration_gate_ns: self.num("g2.calibration_gate_ns")?,
            calibration_pulses: self.num("g2.calibration_pulses")?,
            gates_ns,
            n_pulses: self.num("g2.n_pulses")?,
            bin_ns: self.positive("g2.bin_ns")?,
            lifetime_bin_ns: self.positive("lifetime.bin_ns")?,
        };
        if !(g2.target >= 0.0 && g2.target.is_finite()) {
            return err(format!("g2.target = {} must be non-negative", g2.target));
        }
        if !(g2.calibration_gate_ns >= 0.0 && g2.calibration_gate_ns < source.period_ns()) {
            return err(format!(
                "g2.calibration_gate_ns = {} must lie in [0, {} ns)",
                g2.calibration_gate_ns,
                source.period_ns()
            ));
        }
        if g2.n_pulses == 0 || g2.calibration_pulses == 0 {
            return err("g2.n_pulses and g2.calibration_pulses must be at least 1");
        }
        put("g2.target", g2.target.to_string());
        put("g2.calibration_gate_ns", g2.calibration_gate_ns.to_string());
        put("g2.calibration_pulses", g2.calibration_pulses.to_string());
        put("g2.gates_ns", g2.gates_ns.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        put("g2.n_pulses", g2.n_pulses.to_string());
        put("g2.bin_ns", g2.bin_ns.to_string());
        put("lifetime.bin_ns", g2.lifetime_bin_ns.to_string());

        let d: usize = self.num("protocol.d")?;
        let e_max = max_tolerated_error(d).map_err(|e| ConfigError(format!("protocol.d: {e}")))?;
        let abort_threshold = match self.get("protocol.abort_threshold") {
            "max" => e_max,
            _ => self.num("protocol.abort_threshold")?,
        };
        let protocol = ProtocolConfig {
            d,
            n_rounds: self.num("protocol.n_rounds")?,
            disclosure_fraction: self.num("protocol.disclosure_fraction")?,
            abort_threshold,
            min_disclosed: self.num("protocol.min_disclosed")?,
        };
        protocol.validate().map_err(|e| ConfigError(format!("protocol.*: {e}")))?;
        put("protocol.d", d.to_string());
        put("protocol.n_rounds", protocol.n_rounds.to_string());
        put("protocol.disclosure_fraction", protocol.disclosure_fraction.to_string());
        put("protocol.abort_threshold", abort_threshold.to_string());
        put("protocol.min_disclosed", protocol.min_disclosed.to_string());

        let channel = match self.get("channel.model") {
            "crosstalk" => ChannelKind::Crosstalk,
            "ideal" => ChannelKind::Ideal,
            "depolarizing" => ChannelKind::Depolarizing,
            other => return err(format!("channel.model = `{other}`: expected crosstalk, ideal or depolarizing")),
        };
        if channel == ChannelKind::Crosstalk && d != 3 {
            return err(format!("channel.model = crosstalk simulates d = 3, but protocol.d = {d}"));
        }
        let transmittance: f64 = self.num("channel.transmittance")?;
        if !(0.0..=1.0).contains(&transmittance) {
            return err(format!("channel.transmittance = {transmittance} must lie in [0, 1]"));
        }
        let dark_clicks = match self.get("channel.dark_click_prob") {
            "fit" => DarkClicks::Fit,
            _ => {
                let p: f64 = self.num("channel.dark_click_prob")?;
                if !(0.0..1.0).contains(&p) {
                    return err(format!("channel.dark_click_prob = {p} must lie in [0, 1)"));
                }
                DarkClicks::Fixed(p)
            }
        };
        put("channel.model", self.get("channel.model").into());
        put("channel.transmittance", transmittance.to_string());
        put(
            "channel.dark_click_prob",
            match dark_clicks {
                DarkClicks::Fixed(p) => p.to_string(),
                DarkClicks::Fit => "fit".into(),
            },
        );

        let sweep_points: usize = self.num("sweep.points")?;
        if sweep_points < 2 {
            return err(format!("sweep.points = {sweep_points} must be at least 2"));
        }
        put("sweep.points", sweep_points.to_string());

        let addr = self.get("net.addr").to_string();
        match addr.rsplit_once(':') {
            Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => {}
            _ => return err(format!("net.addr = `{addr}`: expected host:port")),
        }
        let connect_timeout_s = self.positive("net.connect_timeout_s")?;

        Ok(RunConfig {
            seed,
            grid,
            waists,
            encoding,
            image_half_width,
            image_pixels,
            source,
            q_bx,
            g2,
            channel,
            transmittance,
            dark_clicks,
            protocol,
            sweep_points,
            addr,
            connect_timeout_s,
            canonical,
        })
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse().map_err(|_| {
            ConfigError(format!(
                "{key} = `{v}`: expected {}",
                std::any::type_name::<T>().rsplit("::").next().unwrap_or("a number")
            ))
        })
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v: f64 = self.num(key)?;
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            err(format!("{key} = {v} must be positive"))
        }
    }
}

impl RunConfig {
    /// Canonical listing of the experiment keys, in key order.
    pub fn canonical_text(&self) -> String {
        self.canonical.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// SHA-256 of [`canonical_text`](Self::canonical_text), hex.
    pub fn digest(&self) -> String {
        Sha256::digest(self.canonical_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
