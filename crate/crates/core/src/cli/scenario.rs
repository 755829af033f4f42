// SPDX-License-Identifier: Apache-2.0
//! Scenario files: strict JSON with unit-suffixed keys.
//!
//! Frequencies and rates are given as ordinary frequencies (f = w/2pi) in the
//! unit named by the key suffix; conversion to rad/ns happens here.

#![allow(non_snake_case)]

use crate::cloaking::Miscalibration;
use crate::model::{DissipationSpec, DriveSpec, Envelope, Port, SystemSpec, Waveform};
use crate::transmon::TransmonParams;
use crate::units::{ghz, mhz};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt;

/// Configuration problem; maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn khz(f: f64) -> f64 {
    mhz(f * 1e-3)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub paper_ref: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tone: Option<ToneBlock>,
    pub protocol: ProtocolBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TlsRwa,
    TransmonCosine,
    TransmonPurcell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_q_GHz: Option<f64>,
    pub omega_r_GHz: f64,
    pub g_MHz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub E_C_GHz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub E_J_GHz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charge_cutoff: Option<usize>,
    pub cavity_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_f_GHz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub J_MHz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_dim: Option<usize>,
    #[serde(default)]
    pub kappa_MHz: f64,
    #[serde(default)]
    pub kappa_f_MHz: f64,
    #[serde(default)]
    pub gamma_kHz: f64,
    #[serde(default)]
    pub gamma_phi_kHz: f64,
    #[serde(default)]
    pub n_th: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveformKind {
    #[default]
    Sine,
    Cosine,
    ComplexRwa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveBlock {
    /// Drive amplitude; sweep protocols take it from the protocol block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps1_MHz: Option<f64>,
    /// Defaults to the protocol's natural frequency (bare cavity or readout).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega1_GHz: Option<f64>,
    #[serde(default)]
    pub phi1_rad: f64,
    #[serde(default)]
    pub waveform: WaveformKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_on_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_off_ns: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToneKind {
    None,
    #[default]
    Exact,
    ClosedForm,
    Truncated,
    Ansatz,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneBlock {
    #[serde(default)]
    pub strategy: ToneKind,
    #[serde(default)]
    pub omega_r_offset_MHz: f64,
    #[serde(default)]
    pub delta_phi: f64,
    #[serde(default)]
    pub delta_eps: f64,
    /// Ansatz amplitude and phase; defaults to the closed-form seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub A_MHz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_rad: Option<f64>,
    /// Duration used by export-tone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end_ns: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorBlock {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
}

fn default_rtol() -> f64 {
    1e-9
}

fn default_atol() -> f64 {
    1e-11
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: None, formats: default_formats() }
    }
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// A number or a list of numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Values {
    One(f64),
    Many(Vec<f64>),
}

impl Values {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Values::One(x) => vec![*x],
            Values::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateBlock {
    #[serde(default = "default_tg")]
    pub t_g_ns: f64,
    pub eps_g_MHz: f64,
    pub d_g: f64,
    /// Phase in units of 2 pi.
    pub phi_g_turns: f64,
}

fn default_tg() -> f64 {
    25.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateSweepKind {
    DriveAmplitude,
    CavityFrequencyOffset,
    PhaseOffset,
    AmplitudeOffset,
    AnsatzFrequency,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    #[default]
    Displaced,
    /// Displaced by the field of a cavity at the dressed readout frequency.
    Pointer,
    Lab,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolBlock {
    VacuumRabi {
        horizon_ns: f64,
        n_times: usize,
        #[serde(default)]
        snapshot_periods: Vec<f64>,
        #[serde(default = "default_wigner_extent")]
        wigner_extent: f64,
        #[serde(default = "default_wigner_points")]
        wigner_points: usize,
        #[serde(default = "default_true")]
        cancel: bool,
    },
    Spectrum {
        eps1_MHz: Values,
        center_GHz: f64,
        span_MHz: f64,
        points: usize,
    },
    RamseySweep {
        eps1_MHz: Values,
        t_prep_ns: f64,
        t_settle_ns: f64,
        window_ns: f64,
        #[serde(default = "default_dt")]
        dt_ns: f64,
        #[serde(default)]
        frame: FrameKind,
        /// Also run with the exact tone.
        #[serde(default = "default_true")]
        cancel: bool,
    },
    GateSweep {
        gate: GateBlock,
        sweep: GateSweepKind,
        #[serde(default)]
        eps1_MHz: Option<Values>,
        /// Offsets (MHz for the cavity frequency, relative otherwise).
        #[serde(default)]
        offsets: Option<Values>,
        /// Drive frequencies for the ansatz sweep.
        #[serde(default)]
        omega1_GHz: Option<Values>,
        #[serde(default = "default_true")]
        cancel: bool,
        #[serde(default)]
        uncancelled: bool,
    },
    GateOptimize {
        gate: GateBlock,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    ArmRelease {
        release_eps_MHz: f64,
        #[serde(default)]
        release_phi_rad: f64,
        t_arm_ns: f64,
        t_end_ns: f64,
        #[serde(default = "default_dt")]
        dt_ns: f64,
        #[serde(default = "default_eta")]
        eta: f64,
    },
    ReadoutHistograms {
        release_eps_MHz: f64,
        t_arm_ns: f64,
        t_int_ns: Values,
        n_shots: usize,
        #[serde(default = "default_bins")]
        bins: usize,
        #[serde(default = "default_eta")]
        eta: f64,
    },
    Calibration {
        t_prep_ns: f64,
        t_settle_ns: f64,
        window_ns: f64,
        #[serde(default = "default_dt")]
        dt_ns: f64,
        /// Seed offset from the analytic optimum: relative amplitude change
        /// and phase shift (rad).
        seed_offset: [f64; 2],
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    CloakingCheck {
        t_end_ns: f64,
        n_times: usize,
    },
}

fn default_true() -> bool {
    true
}

fn default_dt() -> f64 {
    0.25
}

fn default_eta() -> f64 {
    1.0
}

fn default_bins() -> usize {
    100
}

fn default_max_iter() -> usize {
    400
}

fn default_wigner_extent() -> f64 {
    3.0
}

fn default_wigner_points() -> usize {
    61
}

impl ProtocolBlock {
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolBlock::VacuumRabi { .. } => "vacuum_rabi",
            ProtocolBlock::Spectrum { .. } => "spectrum",
            ProtocolBlock::RamseySweep { .. } => "ramsey_sweep",
            ProtocolBlock::GateSweep { .. } => "gate_sweep",
            ProtocolBlock::GateOptimize { .. } => "gate_optimize",
            ProtocolBlock::ArmRelease { .. } => "arm_release",
            ProtocolBlock::ReadoutHistograms { .. } => "readout_histograms",
            ProtocolBlock::Calibration { .. } => "calibration",
            ProtocolBlock::CloakingCheck { .. } => "cloaking_check",
        }
    }
}

const UNIT_SUFFIXES: [&str; 7] = ["GHz", "MHz", "kHz", "ns", "rad", "turns", "dim"];

/// Rewrites serde's unknown-field message into a unit-suffix diagnostic when
/// the offending key differs from an expected one only after the last '_'.
fn diagnose(msg: &str) -> String {
    let Some(rest) = msg.strip_prefix("unknown field `") else { return msg.to_string() };
    let Some(end) = rest.find('`') else { return msg.to_string() };
    let key = &rest[..end];
    let expected: Vec<&str> = rest.split('`').skip(2).step_by(2).collect();
    let stem = |k: &str| k.rsplit_once('_').map(|(a, _)| a.to_string()).unwrap_or_default();
    if let Some(good) = expected.iter().find(|e| {
        let s = stem(e);
        !s.is_empty() && s == stem(key) && UNIT_SUFFIXES.iter().any(|u| e.ends_with(u))
    }) {
        return format!("malformed unit suffix in key `{key}` (expected `{good}`); {msg}");
    }
    msg.to_string()
}

fn serde_diag(e: &serde_json::Error) -> String {
    let inner = e.to_string();
    let base = match inner.rfind(" at line ") {
        Some(p) => &inner[..p],
        None => &inner,
    };
    let d = diagnose(base);
    if e.line() > 0 {
        format!("{d} (line {}, column {})", e.line(), e.column())
    } else {
        d
    }
}

impl Scenario {
    /// Strict parse with line/column diagnostics.
    pub fn parse(text: &str) -> Result<Scenario, ConfigError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ConfigError(serde_diag(&e)))?;
        s.check()?;
        Ok(s)
    }

    /// Parses, applies `key=value` overrides and re-validates.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Scenario, ConfigError> {
        let s = Self::parse(text)?;
        if overrides.is_empty() {
            return Ok(s);
        }
        let mut v = serde_json::to_value(&s).map_err(|e| ConfigError(e.to_string()))?;
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        let s: Scenario = serde_json::from_value(v).map_err(|e| ConfigError(serde_diag(&e)))?;
        s.check()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical (key-sorted, compact) JSON form.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("scenario serializes");
        super::output::sha256_hex(canonical_json(&v).as_bytes())
    }

    fn check(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        if self.name.is_empty() || self.paper_ref.is_empty() {
            return bad("name and paper_ref must be non-empty".into());
        }
        let sys = &self.system;
        let need = |v: Option<f64>, k: &str| -> Result<f64, ConfigError> { v.ok_or_else(|| ConfigError(format!("system.{k} is required for model {:?}", sys.model))) };
        match sys.model {
            ModelKind::TlsRwa => {
                need(sys.omega_q_GHz, "omega_q_GHz")?;
            }
            ModelKind::TransmonCosine | ModelKind::TransmonPurcell => {
                need(sys.E_C_GHz, "E_C_GHz")?;
                need(sys.E_J_GHz, "E_J_GHz")?;
                if sys.model == ModelKind::TransmonPurcell {
                    need(sys.omega_f_GHz, "omega_f_GHz")?;
                    need(sys.J_MHz, "J_MHz")?;
                }
            }
        }
        if sys.cavity_dim < 2 {
            return bad("system.cavity_dim must be >= 2".into());
        }
        let needs_drive = matches!(
            self.protocol,
            ProtocolBlock::VacuumRabi { .. } | ProtocolBlock::Calibration { .. } | ProtocolBlock::CloakingCheck { .. }
        );
        if needs_drive && self.drive.as_ref().and_then(|d| d.eps1_MHz).is_none() {
            return bad(format!("protocol {} needs drive.eps1_MHz", self.protocol.kind()));
        }
        if self.output.formats.is_empty() {
            return bad("output.formats must not be empty".into());
        }
        Ok(())
    }

    pub fn system_spec(&self) -> Result<SystemSpec, ConfigError> {
        let s = &self.system;
        let diss = DissipationSpec {
            kappa: mhz(s.kappa_MHz),
            kappa_f: mhz(s.kappa_f_MHz),
            gamma: khz(s.gamma_kHz),
            gamma_phi: khz(s.gamma_phi_kHz),
            n_th: s.n_th,
        };
        let tp = || -> Result<TransmonParams, ConfigError> {
            TransmonParams::new(s.E_C_GHz.unwrap_or(0.0), s.E_J_GHz.unwrap_or(0.0)).map_err(|e| ConfigError(format!("system: {e}")))
        };
        let levels = s.levels.unwrap_or(3);
        let mut spec = match s.model {
            ModelKind::TlsRwa => SystemSpec::tls_rwa(ghz(s.omega_q_GHz.unwrap_or(0.0)), ghz(s.omega_r_GHz), mhz(s.g_MHz), s.cavity_dim, diss),
            ModelKind::TransmonCosine => SystemSpec::transmon_cosine(tp()?, ghz(s.omega_r_GHz), mhz(s.g_MHz), levels, s.cavity_dim, diss),
            ModelKind::TransmonPurcell => SystemSpec::transmon_purcell(
                tp()?,
                ghz(s.omega_r_GHz),
                ghz(s.omega_f_GHz.unwrap_or(0.0)),
                mhz(s.g_MHz),
                mhz(s.J_MHz.unwrap_or(0.0)),
                levels,
                (s.cavity_dim, s.filter_dim.unwrap_or(s.cavity_dim)),
                diss,
            ),
        };
        if let Some(c) = s.charge_cutoff {
            spec.charge_cutoff = c;
        }
        spec.validate().map_err(|e| ConfigError(format!("system: {e}")))?;
        Ok(spec)
    }

    /// Drive at amplitude `eps1_MHz` (ordinary MHz) on `port`, carrier from
    /// the block or `default_omega1` (rad/ns).
    pub fn drive_spec(&self, eps1_MHz: f64, port: Port, default_omega1: f64) -> DriveSpec {
        let d = self.drive.clone().unwrap_or(DriveBlock { eps1_MHz: Some(eps1_MHz), omega1_GHz: None, phi1_rad: 0.0, waveform: WaveformKind::Sine, t_on_ns: None, t_off_ns: None });
        let eps = mhz(eps1_MHz);
        let envelope = match (d.t_on_ns, d.t_off_ns) {
            (None, None) => Envelope::Constant(eps),
            (a, b) => Envelope::Window { amp: eps, t_on: a.unwrap_or(0.0), t_off: b.unwrap_or(f64::INFINITY) },
        };
        DriveSpec {
            port,
            envelope,
            carrier: d.omega1_GHz.map(ghz).unwrap_or(default_omega1),
            phase: d.phi1_rad,
            waveform: match d.waveform {
                WaveformKind::Sine => Waveform::Sine,
                WaveformKind::Cosine => Waveform::Cosine,
                WaveformKind::ComplexRwa => Waveform::ComplexRwa,
            },
        }
    }

    pub fn miscalibration(&self) -> Miscalibration {
        let t = self.tone.clone().unwrap_or_default();
        Miscalibration { omega_r_offset: mhz(t.omega_r_offset_MHz), delta_phi: t.delta_phi, delta_eps: t.delta_eps }
    }
}

/// Sets `path=value`. A path without dots must name a unique key anywhere in
/// the scenario.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| ConfigError(format!("override `{spec}` is not key=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let segments: Vec<String> = if path.contains('.') {
        path.split('.').map(str::to_string).collect()
    } else {
        let mut found = Vec::new();
        find_key(root, path, &mut Vec::new(), &mut found);
        match found.len() {
            0 => return Err(ConfigError(format!("override key `{path}` not present in the scenario"))),
            1 => found.remove(0),
            _ => return Err(ConfigError(format!("override key `{path}` is ambiguous; use a dotted path"))),
        }
    };
    let mut cur = root;
    for (k, seg) in segments.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| ConfigError(format!("override path `{path}`: `{seg}` is not inside an object")))?;
        if k + 1 == segments.len() {
            obj.insert(seg.clone(), value);
            return Ok(());
        }
        cur = obj.entry(seg.clone()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(ConfigError(format!("empty override path in `{spec}`")))
}

fn find_key(v: &Value, key: &str, path: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    if let Value::Object(m) = v {
        for (k, child) in m {
            path.push(k.clone());
            if k == key {
                out.push(path.clone());
            }
            find_key(child, key, path, out);
            path.pop();
        }
    }
}

/// Compact JSON with object keys sorted recursively.
pub fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let body: Vec<String> = keys.iter().map(|k| format!("{}:{}", Value::String((*k).clone()), canonical_json(&m[*k]))).collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(a) => format!("[{}]", a.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}
