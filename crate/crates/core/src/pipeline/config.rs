use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dgi::{DgiConfig, EpsMode};
use crate::error::{Error, Result};
use crate::forest::{ForestConfig, Scenario};
use crate::graph::FeatureView;
use crate::ingest::{EllipticPaths, SynthSpec};
use crate::util::derive_seed;

pub const DEFAULT_TRAIN_COUNT: usize = 34;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Elliptic(EllipticPaths),
    Synthetic(SynthSpec),
}

/// Fully resolved run configuration. Stage seeds derive from `seed`.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub data: DataSource,
    pub view: FeatureView,
    pub scenario: Scenario,
    pub dgi: DgiConfig,
    pub forest: ForestConfig,
    pub output_dir: PathBuf,
    pub train_count: usize,
    pub seed: u64,
}

impl PipelineConfig {
    /// Small synthetic setup that runs end to end in seconds.
    pub fn synthetic(output_dir: impl Into<PathBuf>, seed: u64) -> Self {
        let mut raw = RawConfig::default();
        raw.set("synth.num_timesteps", "6");
        raw.set("output_dir", &output_dir.into().display().to_string());
        raw.set("seed", &seed.to_string());
        raw.set("train_count", "4");
        raw.resolve().expect("built-in synthetic config resolves")
    }

    /// Key/value form written next to artifacts.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.data {
            DataSource::Elliptic(p) => {
                kv("data.features", p.features.display().to_string());
                kv("data.classes", p.classes.display().to_string());
                kv("data.edgelist", p.edgelist.display().to_string());
            }
            DataSource::Synthetic(sp) => {
                kv("synth.num_timesteps", sp.num_timesteps.to_string());
                kv("synth.nodes_per_step", sp.nodes_per_step.to_string());
                kv("synth.feature_dim", sp.feature_dim.to_string());
                kv("synth.illicit_fraction", sp.illicit_fraction.to_string());
                kv("synth.edge_density", sp.edge_density.to_string());
                kv("synth.unknown_fraction", sp.unknown_fraction.to_string());
                kv("synth.shift", sp.shift.to_string());
                kv("synth.seed", sp.seed.to_string());
            }
        }
        kv("view", self.view.to_string());
        kv("scenario", self.scenario.to_string());
        kv("epochs", self.dgi.epochs_per_graph.to_string());
        kv("learning_rate", self.dgi.learning_rate.to_string());
        kv(
            "eps_mode",
            match self.dgi.eps_mode {
                EpsMode::Learnable => "learnable".to_string(),
                EpsMode::Fixed(v) => format!("fixed:{v}"),
            },
        );
        kv("hidden_dim", self.dgi.hidden_dim.to_string());
        kv("trees", self.forest.n_trees.to_string());
        kv("train_count", self.train_count.to_string());
        kv("seed", self.seed.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        s
    }
}

/// Unresolved `key = value` settings from a file plus overrides.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "data.dir",
    "data.features",
    "data.classes",
    "data.edgelist",
    "synth.num_timesteps",
    "synth.nodes_per_step",
    "synth.feature_dim",
    "synth.illicit_fraction",
    "synth.edge_density",
    "synth.unknown_fraction",
    "synth.shift",
    "synth.seed",
    "view",
    "scenario",
    "epochs",
    "learning_rate",
    "eps_mode",
    "hidden_dim",
    "trees",
    "train_count",
    "seed",
    "output_dir",
];

impl RawConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set_checked(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn set_checked(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        self.set(key, value);
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))),
        }
    }

    pub fn resolve(&self) -> Result<PipelineConfig> {
        let seed: u64 = self.parsed("seed", 0)?;
        let has_elliptic = ["data.dir", "data.features", "data.classes", "data.edgelist"]
            .iter()
            .any(|k| self.get(k).is_some());
        let data = if has_elliptic {
            let base = self.get("data.dir").map(EllipticPaths::in_dir);
            let pick = |key: &str, fallback: Option<&PathBuf>| -> Result<PathBuf> {
                self.get(key)
                    .map(PathBuf::from)
                    .or_else(|| fallback.cloned())
                    .ok_or_else(|| Error::Config(format!("{key} is required without data.dir")))
            };
            DataSource::Elliptic(EllipticPaths {
                features: pick("data.features", base.as_ref().map(|b| &b.features))?,
                classes: pick("data.classes", base.as_ref().map(|b| &b.classes))?,
                edgelist: pick("data.edgelist", base.as_ref().map(|b| &b.edgelist))?,
            })
        } else {
            let d = SynthSpec::default();
            let spec = SynthSpec {
                num_timesteps: self.parsed("synth.num_timesteps", d.num_timesteps)?,
                nodes_per_step: self.parsed("synth.nodes_per_step", d.nodes_per_step)?,
                feature_dim: self.parsed("synth.feature_dim", d.feature_dim)?,
                illicit_fraction: self.parsed("synth.illicit_fraction", d.illicit_fraction)?,
                edge_density: self.parsed("synth.edge_density", d.edge_density)?,
                unknown_fraction: self.parsed("synth.unknown_fraction", d.unknown_fraction)?,
                shift: self.parsed("synth.shift", d.shift)?,
                seed: self.parsed("synth.seed", seed)?,
            };
            spec.validate()?;
            DataSource::Synthetic(spec)
        };
        let scenario: Scenario = self.parsed("scenario", Scenario::AfDne)?;
        let default_view = match scenario {
            Scenario::LfDne => FeatureView::Local,
            _ => FeatureView::All,
        };
        let view: FeatureView = self.parsed("view", default_view)?;
        let eps_mode = match self.get("eps_mode").unwrap_or("fixed") {
            "fixed" => EpsMode::Fixed(0.0),
            "learnable" => EpsMode::Learnable,
            other => match other.strip_prefix("fixed:").and_then(|v| v.parse().ok()) {
                Some(v) => EpsMode::Fixed(v),
                None => return Err(Error::Config(format!("eps_mode: cannot parse {other:?}"))),
            },
        };
        let dd = DgiConfig::default();
        let dgi = DgiConfig {
            epochs_per_graph: self.parsed("epochs", dd.epochs_per_graph)?,
            learning_rate: self.parsed("learning_rate", dd.learning_rate)?,
            seed: derive_seed(seed, "dgi", 0),
            eps_mode,
            hidden_dim: self.parsed("hidden_dim", dd.hidden_dim)?,
        };
        dgi.validate()?;
        let forest = ForestConfig {
            n_trees: self.parsed("trees", ForestConfig::default().n_trees)?,
            seed: derive_seed(seed, "forest", 0),
            ..ForestConfig::default()
        };
        if forest.n_trees == 0 {
            return Err(Error::Config("trees must be at least 1".into()));
        }
        // synthetic data keeps the 34-of-49 proportion unless told otherwise
        let default_split = match &data {
            DataSource::Synthetic(sp) if sp.num_timesteps > 1 => {
                ((sp.num_timesteps as f64 * 34.0 / 49.0).round() as usize).clamp(1, sp.num_timesteps - 1)
            }
            _ => DEFAULT_TRAIN_COUNT,
        };
        let train_count = self.parsed("train_count", default_split)?;
        let output_dir = PathBuf::from(self.get("output_dir").unwrap_or("out"));
        Ok(PipelineConfig {
            data,
            view,
            scenario,
            dgi,
            forest,
            output_dir,
            train_count,
            seed,
        })
    }
}
