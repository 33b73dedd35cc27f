//! Run directories and artifact writers. Every file goes through an
//! atomic write so partially written artifacts never appear, and
//! every run ends with a manifest echoing its fully resolved config.

use std::path::{Path, PathBuf};

use cadenza::codec;
use cadenza::container;
use cadenza::schedule::LatentClip;
use ndarray::ArrayD;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Environment variable naming the parent of auto-created run
/// directories.
pub const RUN_ROOT_ENV: &str = "CADENZA_RUN_ROOT";

pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Resolve and create the run directory: an explicit --run-dir
    /// wins, otherwise `<run-root>/<command>` with the root from
    /// --run-root, the environment, or `runs`. An existing non-empty
    /// directory is refused unless `force` is set.
    pub fn create(
        explicit: Option<PathBuf>,
        run_root: Option<PathBuf>,
        command: &str,
        force: bool,
    ) -> CliResult<Self> {
        let path = explicit.unwrap_or_else(|| {
            run_root
                .or_else(|| std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("runs"))
                .join(command)
        });
        std::fs::create_dir_all(&path)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))?;
        if !force && path.read_dir()?.next().is_some() {
            return Err(CliError::runtime(format!(
                "run directory {} is not empty; pass --force to write into it",
                path.display()
            )));
        }
        Ok(RunDir { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_tensor(&self, name: &str, tensor: &ArrayD<f64>) -> CliResult {
        container::write_tensor(&self.file(name), tensor)
            .map_err(|e| CliError::runtime(format!("writing {name}: {e}")))
    }

    pub fn write_clip(&self, name: &str, clip: &LatentClip) -> CliResult {
        self.write_tensor(name, &clip.data.clone().into_dyn())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::runtime(format!("serializing {name}: {e}")))?;
        text.push('\n');
        container::write_atomic(&self.file(name), text.as_bytes())
            .map_err(|e| CliError::runtime(format!("writing {name}: {e}")))
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult {
        container::write_atomic(&self.file(name), text.as_bytes())
            .map_err(|e| CliError::runtime(format!("writing {name}: {e}")))
    }

    pub fn write_wav(&self, name: &str, samples: &[f64], sample_rate: u32) -> CliResult {
        codec::write_wav_pcm16(&self.file(name), samples, sample_rate)
            .map_err(|e| CliError::runtime(format!("writing {name}: {e}")))
    }

    /// Echo the resolved config, making the run self-describing: the
    /// manifest is a valid config file for an identical rerun.
    pub fn write_manifest(&self, command: &str, resolved: toml::Table) -> CliResult {
        let mut doc = toml::Table::new();
        doc.insert(
            "command".to_string(),
            toml::Value::String(command.to_string()),
        );
        doc.insert(command.to_string(), toml::Value::Table(resolved));
        let text = toml::to_string_pretty(&doc)
            .map_err(|e| CliError::runtime(format!("serializing manifest: {e}")))?;
        self.write_text("manifest.toml", &text)
    }
}

/// Read a rank-3 clip tensor written by [`RunDir::write_clip`].
pub fn read_clip(path: &Path) -> CliResult<LatentClip> {
    let tensor = container::read_tensor(path)
        .map_err(|e| CliError::runtime(format!("reading {}: {e}", path.display())))?;
    let data = tensor.into_dimensionality::<ndarray::Ix3>().map_err(|_| {
        CliError::runtime(format!("{}: clip tensors must be rank 3", path.display()))
    })?;
    Ok(LatentClip::toy(data))
}
