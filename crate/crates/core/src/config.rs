//! Pipeline configuration: every tunable threshold in one place, with a flat
//! `key=value` text representation used by the CLI `--config` flag.

use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    BadLine { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for {key}: {value:?}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
}

/// Correspondence sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    /// Number of correspondences drawn per stage.
    pub n: usize,
    /// Fraction of eligible pixels kept, ranked by score.
    pub top_frac: f64,
}

/// RANSAC parameters for fundamental-matrix estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    /// Inlier threshold on the symmetric epipolar distance, in pixels.
    pub threshold: f64,
    /// Desired confidence for the adaptive iteration bound.
    pub confidence: f64,
    pub max_iters: usize,
}

/// Triangulation validity filters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangulationConfig {
    /// Minimum cosine statistic between the baseline-perpendicular component
    /// and the first ray; smaller means near-parallel rays (epipole area).
    pub min_ray_cos: f64,
    /// Depths beyond this many length units are treated as invalid.
    pub max_depth: f64,
}

/// Visual-odometry pipeline parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoConfig {
    /// Pairs whose mean flow magnitude falls below this use PnP instead of
    /// the epipolar route.
    pub min_flow_px: f64,
    /// Minimum number of valid triangulated samples for a scale fit.
    pub min_tri_samples: usize,
}

/// PnP (depth-based pose) parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpConfig {
    /// RANSAC reprojection threshold in pixels.
    pub threshold: f64,
    pub min_inliers: usize,
    /// Number of depth-lifted pixels fed to the solver.
    pub sample_n: usize,
    pub max_iters: usize,
}

/// Loss weights of the training objective and its photometric constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w31: f64,
    pub w32: f64,
    /// SSIM/L1 mixing factor of the photometric flow loss.
    pub alpha: f64,
    /// Flow smoothness weight inside the photometric flow loss.
    pub beta: f64,
}

/// Evaluation-metric parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    /// Depth cap in meters for depth evaluation.
    pub depth_cap: f64,
    pub min_depth: f64,
    pub median_scaling: bool,
    /// Start-frame stride of the odometry evaluation.
    pub kitti_step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub sampling: SamplingConfig,
    pub ransac: RansacConfig,
    pub triangulation: TriangulationConfig,
    pub vo: VoConfig,
    pub pnp: PnpConfig,
    pub loss: LossWeights,
    pub metrics: MetricsConfig,
    /// Distance assigned where a forward-backward or epipolar distance is
    /// undefined (out-of-bounds target, degenerate line).
    pub distance_cap: f64,
    /// Range-map mass below which a pixel counts as occluded.
    pub occlusion_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig {
                n: 6000,
                top_frac: 0.2,
            },
            ransac: RansacConfig {
                threshold: 0.1,
                confidence: 0.99,
                max_iters: 2000,
            },
            triangulation: TriangulationConfig {
                min_ray_cos: 0.001,
                max_depth: 1e4,
            },
            vo: VoConfig {
                min_flow_px: 2.0,
                min_tri_samples: 20,
            },
            pnp: PnpConfig {
                threshold: 1.0,
                min_inliers: 6,
                sample_n: 6000,
                max_iters: 300,
            },
            loss: LossWeights {
                w1: 1.0,
                w2: 1.0,
                w3: 1.0,
                w4: 0.1,
                w31: 1.0,
                w32: 1.0,
                alpha: 0.85,
                beta: 0.1,
            },
            metrics: MetricsConfig {
                depth_cap: 80.0,
                min_depth: 1e-3,
                median_scaling: true,
                kitti_step: 1,
            },
            distance_cap: 1e3,
            occlusion_threshold: 0.75,
        }
    }
}

impl PipelineConfig {
    /// Applies `key=value` lines on top of the current values. Empty lines
    /// and lines starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line,
                text: trimmed.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            match self.apply_kv(key, value) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
                Err(()) => {
                    return Err(ConfigError::BadValue {
                        line,
                        key: key.to_string(),
                        value: value.to_string(),
                    })
                }
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    fn apply_kv(&mut self, key: &str, value: &str) -> Result<bool, ()> {
        fn f(v: &str) -> Result<f64, ()> {
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(()),
            }
        }
        fn u(v: &str) -> Result<usize, ()> {
            v.parse::<usize>().map_err(|_| ())
        }
        fn b(v: &str) -> Result<bool, ()> {
            match v {
                "true" | "on" | "1" => Ok(true),
                "false" | "off" | "0" => Ok(false),
                _ => Err(()),
            }
        }
        match key {
            "sample.n" => self.sampling.n = u(value)?,
            "sample.top_frac" => self.sampling.top_frac = f(value)?,
            "ransac.threshold" => self.ransac.threshold = f(value)?,
            "ransac.confidence" => self.ransac.confidence = f(value)?,
            "ransac.max_iters" => self.ransac.max_iters = u(value)?,
            "tri.min_ray_cos" => self.triangulation.min_ray_cos = f(value)?,
            "tri.max_depth" => self.triangulation.max_depth = f(value)?,
            "vo.min_flow_px" => self.vo.min_flow_px = f(value)?,
            "vo.min_tri_samples" => self.vo.min_tri_samples = u(value)?,
            "pnp.threshold" => self.pnp.threshold = f(value)?,
            "pnp.min_inliers" => self.pnp.min_inliers = u(value)?,
            "pnp.sample_n" => self.pnp.sample_n = u(value)?,
            "pnp.max_iters" => self.pnp.max_iters = u(value)?,
            "loss.w1" => self.loss.w1 = f(value)?,
            "loss.w2" => self.loss.w2 = f(value)?,
            "loss.w3" => self.loss.w3 = f(value)?,
            "loss.w4" => self.loss.w4 = f(value)?,
            "loss.w31" => self.loss.w31 = f(value)?,
            "loss.w32" => self.loss.w32 = f(value)?,
            "loss.alpha" => self.loss.alpha = f(value)?,
            "loss.beta" => self.loss.beta = f(value)?,
            "metrics.depth_cap" => self.metrics.depth_cap = f(value)?,
            "metrics.min_depth" => self.metrics.min_depth = f(value)?,
            "metrics.median_scaling" => self.metrics.median_scaling = b(value)?,
            "metrics.kitti_step" => self.metrics.kitti_step = u(value)?,
            "distance_cap" => self.distance_cap = f(value)?,
            "occlusion.threshold" => self.occlusion_threshold = f(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Serializes every key with its current value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("sample.n", self.sampling.n.to_string());
        kv("sample.top_frac", self.sampling.top_frac.to_string());
        kv("ransac.threshold", self.ransac.threshold.to_string());
        kv("ransac.confidence", self.ransac.confidence.to_string());
        kv("ransac.max_iters", self.ransac.max_iters.to_string());
        kv("tri.min_ray_cos", self.triangulation.min_ray_cos.to_string());
        kv("tri.max_depth", self.triangulation.max_depth.to_string());
        kv("vo.min_flow_px", self.vo.min_flow_px.to_string());
        kv("vo.min_tri_samples", self.vo.min_tri_samples.to_string());
        kv("pnp.threshold", self.pnp.threshold.to_string());
        kv("pnp.min_inliers", self.pnp.min_inliers.to_string());
        kv("pnp.sample_n", self.pnp.sample_n.to_string());
        kv("pnp.max_iters", self.pnp.max_iters.to_string());
        kv("loss.w1", self.loss.w1.to_string());
        kv("loss.w2", self.loss.w2.to_string());
        kv("loss.w3", self.loss.w3.to_string());
        kv("loss.w4", self.loss.w4.to_string());
        kv("loss.w31", self.loss.w31.to_string());
        kv("loss.w32", self.loss.w32.to_string());
        kv("loss.alpha", self.loss.alpha.to_string());
        kv("loss.beta", self.loss.beta.to_string());
        kv("metrics.depth_cap", self.metrics.depth_cap.to_string());
        kv("metrics.min_depth", self.metrics.min_depth.to_string());
        kv(
            "metrics.median_scaling",
            self.metrics.median_scaling.to_string(),
        );
        kv("metrics.kitti_step", self.metrics.kitti_step.to_string());
        kv("distance_cap", self.distance_cap.to_string());
        kv("occlusion.threshold", self.occlusion_threshold.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = PipelineConfig::default();
        let parsed = PipelineConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(cfg, parsed);
    }

    #[test]
    fn overrides_apply() {
        let cfg =
            PipelineConfig::from_text("ransac.threshold = 0.5\n# comment\n\nsample.n=100").unwrap();
        assert_eq!(cfg.ransac.threshold, 0.5);
        assert_eq!(cfg.sampling.n, 100);
        assert_eq!(cfg.ransac.confidence, 0.99);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(
            PipelineConfig::from_text("nope=1"),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(
            PipelineConfig::from_text("just text"),
            Err(ConfigError::BadLine { .. })
        ));
        assert!(matches!(
            PipelineConfig::from_text("loss.w1=abc"),
            Err(ConfigError::BadValue { .. })
        ));
    }
}
