use std::fs;
use std::path::Path;

use mosi_core::metrics::EvalMode;
use mosi_core::{Error, PropagatorConfig, Result};
use serde::Deserialize;

/// Fixed default so reports are reproducible without `--seed`.
pub const DEFAULT_SEED: u64 = 0;

/// Optional TOML file. Every key overrides a built-in default and is in turn
/// overridden by the matching command-line flag.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub mos: MosSection,
    pub mosi: MosiSection,
    pub propagator: PropagatorSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MosSection {
    pub tolerance: Option<usize>,
    pub mode: Option<EvalMode>,
    pub sr_thresholds: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MosiSection {
    pub fp_floor: Option<f64>,
    pub thresholds: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagatorSection {
    pub tau_motion: Option<f64>,
    pub tau_iou: Option<f64>,
    pub tau_match: Option<f64>,
    pub tau_new: Option<f64>,
    pub topk_fraction: Option<f64>,
    pub topk_iou_floor: Option<f64>,
}

impl PropagatorSection {
    pub fn apply(&self, cfg: &mut PropagatorConfig) {
        let pairs = [
            (&mut cfg.tau_motion, self.tau_motion),
            (&mut cfg.tau_iou, self.tau_iou),
            (&mut cfg.tau_match, self.tau_match),
            (&mut cfg.tau_new, self.tau_new),
            (&mut cfg.topk_fraction, self.topk_fraction),
            (&mut cfg.topk_iou_floor, self.topk_iou_floor),
        ];
        for (slot, v) in pairs {
            if let Some(v) = v {
                *slot = v;
            }
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Missing(path.to_path_buf()),
            _ => Error::Io {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        toml::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse_and_override() {
        let cfg: FileConfig = toml::from_str(
            "workers = 3\n[mosi]\nfp_floor = 0.4\n[propagator]\ntau_new = 0.2\n[mos]\nmode = \"foreground_background\"\n",
        )
        .unwrap();
        assert_eq!(cfg.workers, Some(3));
        assert_eq!(cfg.mosi.fp_floor, Some(0.4));
        assert_eq!(cfg.mos.mode, Some(EvalMode::ForegroundBackground));
        let mut p = PropagatorConfig::default();
        cfg.propagator.apply(&mut p);
        assert_eq!(p.tau_new, 0.2);
        assert_eq!(p.tau_motion, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("wokers = 3\n").is_err());
    }
}
