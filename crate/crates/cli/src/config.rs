//! Run configuration: JSON file, command-line flags, or both.

use std::path::{Path, PathBuf};

use brokerage_core::harness::{AlgoSpec, SweepConfig};
use brokerage_core::instances::InstanceSpec;
use brokerage_core::learners::FeedbackKind;
use serde::{Deserialize, Serialize};

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "BROKERAGE_LAB_OUT";
/// Price posted by `fixed` when none is given.
pub const DEFAULT_FIXED_PRICE: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn fail<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// The JSON config file. Every field is optional here so that flags can
/// fill in or override it; [`RunConfig::resolve`] enforces completeness.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algo: Option<String>,
    pub feedback: Option<String>,
    pub dim: Option<usize>,
    pub horizons: Option<Vec<u64>>,
    pub seeds: Option<u64>,
    pub instance: Option<InstanceSpec>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub master_seed: Option<u64>,
    pub fixed_price: Option<f64>,
}

/// A validated run.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedRun {
    pub sweep: SweepConfig,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("invalid config {}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        RunConfig {
            algo: over.algo.or(self.algo),
            feedback: over.feedback.or(self.feedback),
            dim: over.dim.or(self.dim),
            horizons: over.horizons.or(self.horizons),
            seeds: over.seeds.or(self.seeds),
            instance: over.instance.or(self.instance),
            out_dir: over.out_dir.or(self.out_dir),
            workers: over.workers.or(self.workers),
            master_seed: over.master_seed.or(self.master_seed),
            fixed_price: over.fixed_price.or(self.fixed_price),
        }
    }

    /// Fills defaults, applies the output override and validates.
    pub fn resolve(self, env_out: Option<PathBuf>) -> Result<ResolvedRun, ConfigError> {
        let Some(algo_name) = self.algo else { return fail("algo is required") };
        let algo = match algo_name.as_str() {
            "biave" => AlgoSpec::Biave,
            "exbis" => AlgoSpec::Exbis,
            "oracle" => AlgoSpec::Oracle,
            "uniform" => AlgoSpec::Uniform,
            "fixed" => AlgoSpec::Fixed { price: self.fixed_price.unwrap_or(DEFAULT_FIXED_PRICE) },
            other => return fail(format!("unknown algo '{other}' (expected biave, exbis, oracle, fixed or uniform)")),
        };
        if self.fixed_price.is_some() && !matches!(algo, AlgoSpec::Fixed { .. }) {
            return fail("fixed_price only applies to algo fixed");
        }
        let feedback = match self.feedback.as_deref() {
            Some("full") => FeedbackKind::Full,
            Some("limited") => FeedbackKind::Limited,
            Some(other) => return fail(format!("unknown feedback '{other}' (expected full or limited)")),
            None => return fail("feedback is required"),
        };
        let Some(horizons) = self.horizons else { return fail("horizons is required") };
        let instance = self.instance.unwrap_or(match feedback {
            FeedbackKind::Full => InstanceSpec::LatticeFull { signs: None },
            FeedbackKind::Limited => InstanceSpec::LatticeLimited { signs: None },
        });
        let workers = match self.workers {
            Some(w) => w,
            None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        };
        let sweep = SweepConfig {
            algo,
            feedback,
            dim: self.dim.unwrap_or(1),
            horizons,
            seeds: self.seeds.unwrap_or(1),
            instance,
            master_seed: self.master_seed.unwrap_or(0),
            workers,
        };
        sweep.check().map_err(|e| match e {
            brokerage_core::Error::Config(m) => ConfigError(m),
            other => ConfigError(other.to_string()),
        })?;
        let out_dir = env_out.or(self.out_dir).unwrap_or_else(|| PathBuf::from("results"));
        Ok(ResolvedRun { sweep, out_dir })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig {
            algo: Some("biave".into()),
            feedback: Some("full".into()),
            horizons: Some(vec![256, 512]),
            workers: Some(1),
            ..Default::default()
        }
    }

    #[test]
    fn defaults_fill_in() {
        let r = base().resolve(None).unwrap();
        assert_eq!(r.sweep.dim, 1);
        assert_eq!(r.sweep.seeds, 1);
        assert_eq!(r.sweep.instance, InstanceSpec::LatticeFull { signs: None });
        assert_eq!(r.out_dir, PathBuf::from("results"));
    }

    #[test]
    fn env_overrides_out_dir() {
        let cfg = RunConfig { out_dir: Some("a".into()), ..base() };
        assert_eq!(cfg.resolve(Some("b".into())).unwrap().out_dir, PathBuf::from("b"));
    }

    #[test]
    fn mismatched_feedback_is_rejected() {
        let cfg = RunConfig { algo: Some("exbis".into()), ..base() };
        assert_eq!(cfg.resolve(None).unwrap_err().0, "exbis requires limited feedback");
    }

    #[test]
    fn explicit_messages() {
        assert_eq!(RunConfig { algo: None, ..base() }.resolve(None).unwrap_err().0, "algo is required");
        let e = RunConfig { algo: Some("greedy".into()), ..base() }.resolve(None).unwrap_err();
        assert!(e.0.contains("unknown algo 'greedy'"));
        let e = RunConfig { seeds: Some(0), ..base() }.resolve(None).unwrap_err();
        assert_eq!(e.0, "seeds must be at least 1");
    }

    #[test]
    fn overlay_prefers_flags() {
        let file = RunConfig { dim: Some(2), seeds: Some(5), ..base() };
        let flags = RunConfig { seeds: Some(7), ..Default::default() };
        let merged = file.overlay(flags);
        assert_eq!((merged.dim, merged.seeds), (Some(2), Some(7)));
    }

    #[test]
    fn config_json_parses() {
        let json = r#"{"algo":"exbis","feedback":"limited","dim":1,"horizons":[1024,2048],"seeds":2,
            "instance":{"constructor":"lattice-limited","params":{}},"out_dir":"out","workers":1,"master_seed":3}"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        let r = cfg.resolve(None).unwrap();
        assert_eq!(r.sweep.algo, AlgoSpec::Exbis);
        assert_eq!(r.sweep.master_seed, 3);
        assert!(serde_json::from_str::<RunConfig>(r#"{"algorithm":"biave"}"#).is_err());
    }
}
