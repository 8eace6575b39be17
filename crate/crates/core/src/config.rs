//! Server configuration and session assembly.
//!
//! Settings arrive in layers (defaults, config file, environment, flags);
//! each layer is a [`ConfigLayer`] of optional values and later layers win.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Backend, DatasetSpec, MockEngine, ParaViewEngine, ParaViewOptions, SharedEngine};
use crate::tools::{Manager, SessionContext, SessionLog, ToolRegistry, SESSION_LOG_FILE};

pub const DEFAULT_SCREENSHOT_DIR: &str = "./screenshots";
pub const DEFAULT_LOG_FILE: &str = "vizbridge.log";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("the paraview backend requires a pvserver url (--pvserver-url or VIZBRIDGE_PVSERVER_URL)")]
    MissingPvserverUrl,
    #[error("mock_dataset is only supported by the mock backend")]
    MockDatasetNeedsMock,
    #[error("cannot read config file {}: {reason}", path.display())]
    File { path: PathBuf, reason: String },
    #[error("cannot prepare {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot start engine: {0}")]
    Engine(String),
}

/// One source of settings; unset fields defer to earlier layers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub backend: Option<Backend>,
    pub pvserver_url: Option<String>,
    pub screenshot_dir: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    pub mock_dataset: Option<PathBuf>,
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let file_err = |reason: String| ConfigError::File {
            path: path.to_path_buf(),
            reason,
        };
        let text = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))
    }

    /// `other` wins wherever it is set.
    pub fn overlay(self, other: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            backend: other.backend.or(self.backend),
            pvserver_url: other.pvserver_url.or(self.pvserver_url),
            screenshot_dir: other.screenshot_dir.or(self.screenshot_dir),
            log_path: other.log_path.or(self.log_path),
            mock_dataset: other.mock_dataset.or(self.mock_dataset),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServerConfig {
    pub backend: Backend,
    pub pvserver_url: Option<String>,
    pub screenshot_dir: PathBuf,
    /// Diagnostic log; defaults to `vizbridge.log` in the screenshot directory.
    pub log_path: PathBuf,
    /// FieldSpec JSON loaded and made active at startup (mock only).
    pub mock_dataset: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig::resolve(ConfigLayer::default()).unwrap_or_else(|_| unreachable!())
    }
}

impl ServerConfig {
    /// Fills defaults and checks cross-field rules.
    pub fn resolve(layer: ConfigLayer) -> Result<Self, ConfigError> {
        let backend = layer.backend.unwrap_or(Backend::Mock);
        if backend == Backend::Paraview && layer.pvserver_url.as_deref().is_none_or(str::is_empty) {
            return Err(ConfigError::MissingPvserverUrl);
        }
        if backend != Backend::Mock && layer.mock_dataset.is_some() {
            return Err(ConfigError::MockDatasetNeedsMock);
        }
        let screenshot_dir = layer.screenshot_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_SCREENSHOT_DIR));
        let log_path = layer.log_path.unwrap_or_else(|| screenshot_dir.join(DEFAULT_LOG_FILE));
        Ok(ServerConfig {
            backend,
            pvserver_url: layer.pvserver_url,
            screenshot_dir,
            log_path,
            mock_dataset: layer.mock_dataset,
        })
    }

    pub fn session_log_path(&self) -> PathBuf {
        self.screenshot_dir.join(SESSION_LOG_FILE)
    }

    pub fn build_engine(&self) -> Result<SharedEngine, ConfigError> {
        match self.backend {
            Backend::Mock => Ok(SharedEngine::new(MockEngine::new())),
            Backend::Paraview => {
                let url = self.pvserver_url.clone().ok_or(ConfigError::MissingPvserverUrl)?;
                let engine = ParaViewEngine::connect(&ParaViewOptions::new(url))
                    .map_err(|e| ConfigError::Engine(e.to_string()))?;
                Ok(SharedEngine::new(engine))
            }
        }
    }

    /// Creates the screenshot directory, opens the session log and preloads
    /// the mock dataset as the active source.
    pub fn build_manager(&self, engine: SharedEngine) -> Result<Manager, ConfigError> {
        fs::create_dir_all(&self.screenshot_dir).map_err(|source| ConfigError::Io {
            path: self.screenshot_dir.clone(),
            source,
        })?;
        let log_path = self.session_log_path();
        let log = SessionLog::to_file(&log_path).map_err(|source| ConfigError::Io { path: log_path, source })?;
        let mut manager = Manager::new(
            ToolRegistry::curated(),
            SessionContext::new(engine, self.screenshot_dir.clone(), log),
        );
        if let Some(path) = &self.mock_dataset {
            let source = manager
                .engine()
                .lock()
                .load_dataset(&DatasetSpec::Path(path.clone()))
                .map_err(|e| ConfigError::Engine(e.to_string()))?;
            log::info!("preloaded {} as {}", path.display(), source.id);
            manager.set_active(Some(source.id));
        }
        Ok(manager)
    }
}
