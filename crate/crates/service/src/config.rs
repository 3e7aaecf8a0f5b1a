use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use declutter_core::mask::MaskFilter;
use declutter_core::segmentation::SegmenterBackend;
use declutter_core::SuggestionPolicy;
use declutter_models::InpaintOptions;
use figment::providers::{Env, Format, Serialized, Yaml};
use figment::Figment;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Everything the service and the command-line front end need to run.
///
/// Loaded from built-in defaults, then an optional YAML file, then
/// `DECLUTTER_*` environment variables (nested keys joined with `__`, for
/// example `DECLUTTER_SEGMENTATION__URL`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Trained score model; the pinned untrained tiny model when absent.
    pub score_checkpoint: Option<PathBuf>,
    /// Trained inpainting model; the pinned untrained tiny model when absent.
    pub inpaint_checkpoint: Option<PathBuf>,
    pub segmentation: SegmenterBackend,
    pub mask_filter: MaskFilter,
    /// Area fraction below which camera tricks are suggested.
    pub area_threshold: f64,
    /// Frame-edge margin as a fraction of the shorter image side.
    pub boundary_margin: f64,
    /// Generated pixels with a confidence value at or below this are kept.
    pub accept_threshold: f32,
    pub max_iterations: usize,
    pub min_accept_fraction: f64,
    pub store_path: PathBuf,
    /// Uploads with a longer side than this are rejected.
    pub max_image_side: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let policy = SuggestionPolicy::default();
        let inpaint = InpaintOptions::default();
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            score_checkpoint: None,
            inpaint_checkpoint: None,
            segmentation: SegmenterBackend::default(),
            mask_filter: MaskFilter::default(),
            area_threshold: policy.area_threshold,
            boundary_margin: policy.boundary_margin,
            accept_threshold: inpaint.accept_threshold,
            max_iterations: inpaint.max_iterations,
            min_accept_fraction: inpaint.min_accept_fraction,
            store_path: PathBuf::from("sessions"),
            max_image_side: 4096,
        }
    }
}

impl ServiceConfig {
    pub fn load(yaml: Option<&Path>) -> Result<Self> {
        let mut figment = Figment::from(Serialized::defaults(Self::default()));
        if let Some(path) = yaml {
            if !path.exists() {
                return Err(Error::Config(format!("{} does not exist", path.display())));
            }
            figment = figment.merge(Yaml::file(path));
        }
        let config: Self = figment
            .merge(Env::prefixed("DECLUTTER_").split("__"))
            .extract()
            .map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.policy()?;
        self.inpaint_options().validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.max_image_side == 0 {
            return Err(Error::Config("max_image_side must be positive".into()));
        }
        Ok(())
    }

    pub fn policy(&self) -> Result<SuggestionPolicy> {
        SuggestionPolicy::new(self.area_threshold, self.boundary_margin).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn inpaint_options(&self) -> InpaintOptions {
        InpaintOptions {
            max_iterations: self.max_iterations,
            accept_threshold: self.accept_threshold,
            min_accept_fraction: self.min_accept_fraction,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use figment::Jail;

    #[test]
    fn defaults_validate() {
        let c = ServiceConfig::default();
        assert_eq!(c.max_iterations, 5);
        c.validate().unwrap();
    }

    #[test]
    fn yaml_then_environment() {
        Jail::expect_with(|jail| {
            jail.create_file(
                "service.yaml",
                "max_iterations: 3\nstore_path: /tmp/s\nsegmentation:\n  kind: external-model\n  url: http://seg:9000/v1\n",
            )?;
            jail.set_env("DECLUTTER_AREA_THRESHOLD", "0.2");
            let c = ServiceConfig::load(Some(Path::new("service.yaml"))).unwrap();
            assert_eq!(c.max_iterations, 3);
            assert_eq!(c.area_threshold, 0.2);
            assert_eq!(c.store_path, PathBuf::from("/tmp/s"));
            match c.segmentation {
                SegmenterBackend::ExternalModel(ext) => assert_eq!(ext.url, "http://seg:9000/v1"),
                other => panic!("unexpected backend {other:?}"),
            }
            jail.set_env("DECLUTTER_MAX_ITERATIONS", "0");
            assert!(ServiceConfig::load(Some(Path::new("service.yaml"))).is_err());
            Ok(())
        });
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(ServiceConfig::load(Some(Path::new("/nonexistent/declutter.yaml"))).is_err());
    }
}
