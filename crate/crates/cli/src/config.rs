//! Option resolution. Flags win over `LAKEE_*` environment variables (clap
//! reads both), which win over the config file, which wins over defaults.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use lakee_core::curve::CurveProfile;
use serde::Deserialize;

use crate::{CliError, GlobalArgs};

/// Keys accepted in the config file; all optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub profile: Option<String>,
    pub seed: Option<u64>,
    pub delta_t: Option<u64>,
    pub rotate: Option<bool>,
    pub keystore: Option<PathBuf>,
    pub listen: Option<SocketAddr>,
    pub point_bits: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

pub struct Settings {
    pub curve: Arc<CurveProfile>,
    pub seed: Option<u64>,
    pub delta_t: Duration,
    pub rotate: bool,
    pub keystore: Option<PathBuf>,
    pub listen: SocketAddr,
    pub point_bits: Option<usize>,
}

pub const DEFAULT_PROFILE: &str = "ed448";

/// `toy`, `ed448`, or a path to a curve description file.
pub fn load_profile(name: &str) -> Result<Arc<CurveProfile>, CliError> {
    if let Some(curve) = CurveProfile::by_name(name) {
        return Ok(curve);
    }
    let path = Path::new(name);
    if path.exists() {
        return CurveProfile::from_config_file(path)
            .map(Arc::new)
            .map_err(|e| CliError::Usage(format!("profile {name}: {e}")));
    }
    Err(CliError::Usage(format!("unknown profile `{name}` (expected toy, ed448 or a profile file)")))
}

impl Settings {
    pub fn resolve(args: &GlobalArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let profile = args
            .profile
            .clone()
            .or(file.profile)
            .unwrap_or_else(|| DEFAULT_PROFILE.to_string());
        let delta_t = args.delta_t.or(file.delta_t).unwrap_or(30);
        if delta_t == 0 {
            return Err(CliError::Usage("--delta-t must be positive".into()));
        }
        Ok(Settings {
            curve: load_profile(&profile)?,
            seed: args.seed.or(file.seed),
            delta_t: Duration::from_secs(delta_t),
            rotate: args.rotate.or(file.rotate).unwrap_or(false),
            keystore: args.keystore.clone().or(file.keystore),
            listen: args
                .listen
                .or(file.listen)
                .unwrap_or_else(|| SocketAddr::from(([0, 0, 0, 0], lakee_core::transport::DEFAULT_PORT))),
            point_bits: args.point_bits.or(file.point_bits),
        })
    }

    pub fn keystore_path(&self) -> Result<&Path, CliError> {
        self.keystore
            .as_deref()
            .ok_or_else(|| CliError::Usage("--keystore is required".into()))
    }
}
