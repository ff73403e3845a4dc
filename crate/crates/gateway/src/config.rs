// SPDX-License-Identifier: Apache-2.0

//! Gateway configuration, loaded from TOML. Every field has a default, so an
//! empty file is a valid sim-mode config that still needs TLS material.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use teleop_core::arm::{ArmCalibration, DEFAULT_MAX_STEP_DEG};
use teleop_core::fusion::{Fuser, FusionConfig};
use teleop_core::head::HeadControlConfig;
use teleop_core::input::KeyboardConfig;
use teleop_core::pedal::PedalConfig;
use teleop_core::runtime::{validate_fuser, CameraConfig};
use teleop_core::sim::{BaseGeometry, OmniBase, SimConfig};
use teleop_core::video::{PrepareOptions, DEFAULT_JPEG_QUALITY};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Sim,
    Hardware,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sim" => Ok(Mode::Sim),
            "hardware" => Ok(Mode::Hardware),
            other => Err(format!("unknown mode {other:?}, expected sim or hardware")),
        }
    }
}

/// Where a byte stream comes from: `none`, `simulated` or `serial:<path>`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InputSource {
    #[default]
    None,
    Simulated,
    Serial(PathBuf),
}

impl FromStr for InputSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(InputSource::None),
            "simulated" => Ok(InputSource::Simulated),
            _ => match s.strip_prefix("serial:") {
                Some(p) if !p.is_empty() => Ok(InputSource::Serial(PathBuf::from(p))),
                _ => Err(format!("bad source {s:?}, expected none, simulated or serial:<path>")),
            },
        }
    }
}

impl TryFrom<String> for InputSource {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<InputSource> for String {
    fn from(s: InputSource) -> String {
        s.to_string()
    }
}

impl fmt::Display for InputSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSource::None => f.write_str("none"),
            InputSource::Simulated => f.write_str("simulated"),
            InputSource::Serial(p) => write!(f, "serial:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LeaderSources {
    pub left: InputSource,
    pub right: InputSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmSettings {
    pub left: ArmCalibration,
    pub right: ArmCalibration,
    /// Per-tick joint step limit for the followers, degrees.
    pub max_step_deg: f64,
}

impl Default for ArmSettings {
    fn default() -> Self {
        ArmSettings {
            left: ArmCalibration::default(),
            right: ArmCalibration::default(),
            max_step_deg: DEFAULT_MAX_STEP_DEG,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VideoSettings {
    #[serde(flatten)]
    pub prepare: PrepareOptions,
    /// Per-client delivery rate cap.
    pub fps: f64,
    pub jpeg_quality: u8,
}

impl Default for VideoSettings {
    fn default() -> Self {
        VideoSettings {
            prepare: PrepareOptions::default(),
            fps: 30.0,
            jpeg_quality: DEFAULT_JPEG_QUALITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen_addr: IpAddr,
    /// 0 picks a free port.
    pub listen_port: u16,
    pub tls_cert_path: Option<PathBuf>,
    pub tls_key_path: Option<PathBuf>,
    /// Generate a throwaway certificate at startup. Development only.
    pub self_signed: bool,
    pub mode: Mode,
    pub pedal_source: InputSource,
    /// Script for a simulated pedal source; without one the source only
    /// sends keepalives.
    pub pedal_script: Option<PathBuf>,
    pub leader_sources: LeaderSources,
    pub fusion: FusionConfig,
    pub pedals: PedalConfig,
    pub geometry: BaseGeometry,
    pub arms: ArmSettings,
    pub head: HeadControlConfig,
    pub keyboard: KeyboardConfig,
    pub camera: CameraConfig,
    pub video: VideoSettings,
    /// A new episode file is written here per run.
    pub record_dir: Option<PathBuf>,
    /// Static operator client assets served at `/`.
    pub client_dir: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            listen_addr: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            listen_port: 8443,
            tls_cert_path: None,
            tls_key_path: None,
            self_signed: false,
            mode: Mode::Sim,
            pedal_source: InputSource::None,
            pedal_script: None,
            leader_sources: LeaderSources::default(),
            fusion: FusionConfig::default(),
            pedals: PedalConfig::default(),
            geometry: BaseGeometry::default(),
            arms: ArmSettings::default(),
            head: HeadControlConfig::default(),
            keyboard: KeyboardConfig::default(),
            camera: CameraConfig::default(),
            video: VideoSettings::default(),
            record_dir: None,
            client_dir: None,
        }
    }
}

impl GatewayConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn fuser(&self) -> Fuser {
        Fuser {
            fusion: self.fusion,
            pedals: self.pedals,
            left_calibration: self.arms.left.clone(),
            right_calibration: self.arms.right.clone(),
            max_step_deg: self.arms.max_step_deg,
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            geometry: self.geometry,
            ..SimConfig::default()
        }
    }

    /// Full check, TLS included.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.into()));
        match (&self.tls_cert_path, &self.tls_key_path, self.self_signed) {
            (Some(_), Some(_), false) | (None, None, true) => {}
            (Some(_), Some(_), true) => return invalid("give either TLS paths or self_signed, not both"),
            (None, None, false) => return invalid("TLS is required: set tls_cert_path and tls_key_path, or self_signed"),
            _ => return invalid("tls_cert_path and tls_key_path go together"),
        }
        self.validate_services()
    }

    /// Everything except TLS material.
    pub fn validate_services(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        validate_fuser(&self.fuser()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        OmniBase::new(self.geometry).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.head.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.mode == Mode::Hardware {
            let sources = [&self.pedal_source, &self.leader_sources.left, &self.leader_sources.right];
            if sources.iter().any(|s| **s == InputSource::Simulated) {
                return invalid("hardware mode takes serial sources only".into());
            }
        }
        if self.pedal_script.is_some() && self.pedal_source != InputSource::Simulated {
            return invalid("pedal_script needs pedal_source = \"simulated\"".into());
        }
        let v = &self.video;
        if v.prepare.max_width == 0 || v.prepare.max_height == 0 {
            return invalid("video cap must be non-zero".into());
        }
        if !(v.fps.is_finite() && v.fps > 0.0 && v.fps <= 120.0) {
            return invalid(format!("video fps {} outside (0, 120]", v.fps));
        }
        if !(1..=100).contains(&v.jpeg_quality) {
            return invalid(format!("jpeg_quality {} outside 1..=100", v.jpeg_quality));
        }
        Ok(())
    }
}
