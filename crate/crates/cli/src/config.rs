//! Run configuration files.
//!
//! Same line-oriented family as dataset manifests: UTF-8, `#` comments,
//! one `key = value` per line. Unknown keys are rejected so config drift
//! fails loudly. `source` is the only repeatable key. Command-line flags
//! (`--seed`, `--out`, `--threads`) override file values, and every command
//! echoes the fully resolved configuration into its output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use surfclass::data::{CleanseThresholds, PreprocessConfig, SourceSpec, Split};
use surfclass::network::{
    build_fastinf, build_multivis, build_surfnet, LayerState, MultiVisPlan, NetworkSpec,
    NetworkState, FASTINF_CHANNELS, SURFNET_CHANNELS,
};
use surfclass::synth::{DefectStyle, GeneratorConfig, ShapeKind};
use surfclass::train::TrainConfig;

const KNOWN_KEYS: &[&str] = &[
    "network",
    "input_side",
    "class_count",
    "surfnet_channels",
    "fastinf_channels",
    "multivis_lane_a",
    "multivis_lane_b",
    "multivis_lane_c",
    "multivis_merge",
    "bn_momentum",
    "bn_epsilon",
    "batch_size",
    "base_lr",
    "lr_step_epochs",
    "lr_multiplier",
    "weight_decay",
    "max_epochs",
    "seed",
    "rmsprop_alpha",
    "rmsprop_eps",
    "scale_min",
    "scale_max",
    "train_manifest",
    "eval_manifest",
    "eval_split",
    "checkpoint",
    "kfold",
    "source",
    "cleanse_min_mean",
    "cleanse_max_mean",
    "cleanse_min_std",
    "balance_quota",
    "rotation_angles",
    "datagen_defect",
    "datagen_nondefect",
    "datagen_test_defect",
    "datagen_test_nondefect",
    "datagen_size",
    "datagen_split",
    "gen_base",
    "gen_noise",
    "gen_streak",
    "gen_strength",
    "gen_shape_size",
    "gen_count",
    "gen_edge_bias",
    "gen_styles",
    "gen_kinds",
    "bench_networks",
    "out_dir",
    "threads",
];

/// Raw parsed file: single-valued keys plus the repeatable `source` list.
#[derive(Debug, Default, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    sources: Vec<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected `key = value`", path.display(), lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                bail!(
                    "{}:{}: unknown config key `{key}`",
                    path.display(),
                    lineno + 1
                );
            }
            if key == "source" {
                cfg.sources.push(value.to_string());
            } else if cfg.values.insert(key.to_string(), value.to_string()).is_some() {
                bail!(
                    "{}:{}: duplicate config key `{key}`",
                    path.display(),
                    lineno + 1
                );
            }
        }
        Ok(cfg)
    }

    /// Applies command-line overrides (flags win over the file).
    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<&Path>, threads: Option<usize>) {
        if let Some(s) = seed {
            self.values.insert("seed".into(), s.to_string());
        }
        if let Some(o) = out {
            self.values
                .insert("out_dir".into(), o.to_string_lossy().into_owned());
        }
        if let Some(t) = threads {
            self.values.insert("threads".into(), t.to_string());
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| anyhow!("missing required config key `{key}`"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| anyhow!("config key `{key}` has invalid value `{v}`")),
        }
    }

    fn parse_required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.require(key)?;
        v.parse()
            .map_err(|_| anyhow!("config key `{key}` has invalid value `{v}`"))
    }

    fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| anyhow!("config key `{key}` has invalid entry `{s}`"))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn parse_pair_f32(&self, key: &str, default: (f32, f32)) -> Result<(f32, f32)> {
        match self.parse_list::<f32>(key)? {
            None => Ok(default),
            Some(v) if v.len() == 2 => Ok((v[0], v[1])),
            Some(v) => bail!("config key `{key}` needs two values, got {}", v.len()),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed", 0u64)
    }

    pub fn threads(&self) -> Result<usize> {
        self.parse("threads", 0usize)
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require("out_dir")?))
    }

    pub fn train_manifest(&self) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require("train_manifest")?))
    }

    pub fn eval_manifest(&self) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require("eval_manifest")?))
    }

    pub fn checkpoint(&self) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require("checkpoint")?))
    }

    pub fn eval_split(&self) -> Result<Split> {
        match self.get("eval_split").unwrap_or("test") {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => bail!("eval_split must be train or test, got `{other}`"),
        }
    }

    pub fn kfold(&self) -> Result<usize> {
        self.parse("kfold", 10usize)
    }

    pub fn input_side(&self) -> Result<usize> {
        self.parse("input_side", 128usize)
    }

    pub fn class_count(&self) -> Result<usize> {
        self.parse("class_count", 2usize)
    }

    /// Builds the configured network with a freshly initialized state.
    pub fn build_network(&self, seed: u64) -> Result<(NetworkSpec, NetworkState)> {
        let side = self.input_side()?;
        let classes = self.class_count()?;
        let name = self.require("network")?;
        let (spec, mut state) = match name {
            "surfnet" => {
                let channels = self
                    .parse_list::<usize>("surfnet_channels")?
                    .unwrap_or_else(|| SURFNET_CHANNELS.to_vec());
                build_surfnet(&channels, side, classes, seed)?
            }
            "fastinf" => {
                let channels = self
                    .parse_list::<usize>("fastinf_channels")?
                    .unwrap_or_else(|| FASTINF_CHANNELS.to_vec());
                build_fastinf(&channels, side, classes, seed)?
            }
            "multivis" => {
                let plan = self.multivis_plan()?;
                build_multivis(&plan, side, classes, seed)?
            }
            other => bail!("unknown network `{other}` (expected surfnet, fastinf or multivis)"),
        };
        let momentum: f32 = self.parse("bn_momentum", surfclass::network::BN_MOMENTUM)?;
        let epsilon: f32 = self.parse("bn_epsilon", surfclass::network::BN_EPSILON)?;
        for lane in state.lanes.iter_mut() {
            for layer in lane.iter_mut() {
                if let LayerState::Block(b) = layer {
                    b.bn.momentum = momentum;
                    b.bn.epsilon = epsilon;
                }
            }
        }
        if let Some(m) = state.merge.as_mut() {
            m.bn.momentum = momentum;
            m.bn.epsilon = epsilon;
        }
        Ok((spec, state))
    }

    pub fn multivis_plan(&self) -> Result<MultiVisPlan> {
        let default = MultiVisPlan::default();
        let lane = |key: &str, d: [usize; 5]| -> Result<[usize; 5]> {
            match self.parse_list::<usize>(key)? {
                None => Ok(d),
                Some(v) => v
                    .try_into()
                    .map_err(|_| anyhow!("config key `{key}` needs 5 entries")),
            }
        };
        let lane_c = match self.parse_list::<usize>("multivis_lane_c")? {
            None => default.lane_c,
            Some(v) => v
                .try_into()
                .map_err(|_| anyhow!("config key `multivis_lane_c` needs 3 entries"))?,
        };
        Ok(MultiVisPlan {
            lane_a: lane("multivis_lane_a", default.lane_a)?,
            lane_b: lane("multivis_lane_b", default.lane_b)?,
            lane_c,
            merge_channels: self.parse("multivis_merge", default.merge_channels)?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            batch_size: self.parse("batch_size", d.batch_size)?,
            base_lr: self.parse("base_lr", d.base_lr)?,
            lr_step_epochs: self.parse("lr_step_epochs", d.lr_step_epochs)?,
            lr_multiplier: self.parse("lr_multiplier", d.lr_multiplier)?,
            weight_decay: self.parse("weight_decay", d.weight_decay)?,
            max_epochs: self.parse("max_epochs", d.max_epochs)?,
            seed: self.seed()?,
            rmsprop_alpha: self.parse("rmsprop_alpha", d.rmsprop_alpha)?,
            rmsprop_eps: self.parse("rmsprop_eps", d.rmsprop_eps)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preprocess(&self) -> Result<PreprocessConfig> {
        let side = self.input_side()?;
        let d = PreprocessConfig::for_side(side);
        let pre = PreprocessConfig {
            target_side: side,
            scale_min: self.parse("scale_min", d.scale_min)?,
            scale_max: self.parse("scale_max", d.scale_max)?,
        };
        if pre.scale_min > pre.scale_max {
            bail!(
                "scale_min {} must not exceed scale_max {}",
                pre.scale_min,
                pre.scale_max
            );
        }
        Ok(pre)
    }

    pub fn cleanse_thresholds(&self) -> Result<CleanseThresholds> {
        let d = CleanseThresholds::default();
        let t = CleanseThresholds {
            min_mean: self.parse("cleanse_min_mean", d.min_mean)?,
            max_mean: self.parse("cleanse_max_mean", d.max_mean)?,
            min_std: self.parse("cleanse_min_std", d.min_std)?,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn balance_quota(&self) -> Result<Option<usize>> {
        Ok(match self.get("balance_quota") {
            None => None,
            Some(v) => Some(
                v.parse()
                    .map_err(|_| anyhow!("balance_quota has invalid value `{v}`"))?,
            ),
        })
    }

    pub fn rotation_angles(&self) -> Result<Option<Vec<u32>>> {
        self.parse_list::<u32>("rotation_angles")
    }

    pub fn sources(&self) -> Result<Vec<SourceSpec>> {
        if self.sources.is_empty() {
            bail!("prep requires at least one `source = dir,label,material,split` line");
        }
        self.sources
            .iter()
            .map(|line| {
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                if fields.len() != 4 {
                    bail!("source `{line}` needs 4 comma-separated fields: dir,label,material,split");
                }
                let split = match fields[3] {
                    "train" => Split::Train,
                    "test" => Split::Test,
                    other => bail!("source split must be train or test, got `{other}`"),
                };
                Ok(SourceSpec {
                    dir: PathBuf::from(fields[0]),
                    label: fields[1].to_string(),
                    material: fields[2].to_string(),
                    split,
                })
            })
            .collect()
    }

    pub fn datagen_counts(&self) -> Result<(usize, usize)> {
        let defect: usize = self.parse_required("datagen_defect")?;
        let nondefect: usize = self.parse_required("datagen_nondefect")?;
        if defect + nondefect == 0 {
            bail!("datagen needs at least one image");
        }
        Ok((defect, nondefect))
    }

    /// Optional held-out counts; non-zero values add a test split to the
    /// generated corpus under a derived seed.
    pub fn datagen_test_counts(&self) -> Result<(usize, usize)> {
        Ok((
            self.parse("datagen_test_defect", 0usize)?,
            self.parse("datagen_test_nondefect", 0usize)?,
        ))
    }

    pub fn generator(&self) -> Result<GeneratorConfig> {
        let size: usize = self.parse("datagen_size", 64usize)?;
        let split = match self.get("datagen_split").unwrap_or("train") {
            "train" => Split::Train,
            "test" => Split::Test,
            other => bail!("datagen_split must be train or test, got `{other}`"),
        };
        let d = GeneratorConfig::for_side(size);
        let styles = match self.get("gen_styles") {
            None => d.styles.clone(),
            Some(v) => v
                .split(',')
                .map(|s| match s.trim() {
                    "dark-blotch" => Ok(DefectStyle::DarkBlotch),
                    "bright-blotch" => Ok(DefectStyle::BrightBlotch),
                    "speckle" => Ok(DefectStyle::Speckle),
                    "scratch-line" => Ok(DefectStyle::ScratchLine),
                    other => bail!("unknown defect style `{other}`"),
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let kinds = match self.get("gen_kinds") {
            None => d.kinds.clone(),
            Some(v) => v
                .split(',')
                .map(|s| match s.trim() {
                    "rectangle" => Ok(ShapeKind::Rectangle),
                    "ellipse" => Ok(ShapeKind::Ellipse),
                    "stripe" => Ok(ShapeKind::DiagonalStripe),
                    "polygon" => Ok(ShapeKind::ConcavePolygon),
                    other => bail!("unknown shape kind `{other}`"),
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let shape_size = match self.parse_list::<usize>("gen_shape_size")? {
            None => d.shape_size,
            Some(v) if v.len() == 2 => (v[0], v[1]),
            Some(_) => bail!("gen_shape_size needs two values"),
        };
        let count_range = match self.parse_list::<usize>("gen_count")? {
            None => d.count_range,
            Some(v) if v.len() == 2 => (v[0], v[1]),
            Some(_) => bail!("gen_count needs two values"),
        };
        Ok(GeneratorConfig {
            size,
            split,
            base_range: self.parse_pair_f32("gen_base", d.base_range)?,
            noise_range: self.parse_pair_f32("gen_noise", d.noise_range)?,
            streak_range: self.parse_pair_f32("gen_streak", d.streak_range)?,
            blur_radius: d.blur_radius,
            strength_range: self.parse_pair_f32("gen_strength", d.strength_range)?,
            shape_size,
            count_range,
            edge_bias_prob: self.parse("gen_edge_bias", d.edge_bias_prob)?,
            styles,
            kinds,
        })
    }

    /// Copy of this config with the `network` key replaced; used by the
    /// benchmark to build each network from one file.
    pub fn clone_with_network(&self, network: &str) -> Result<RunConfig> {
        if !matches!(network, "surfnet" | "fastinf" | "multivis") {
            bail!("unknown network `{network}` in bench_networks");
        }
        let mut cfg = self.clone();
        cfg.values.insert("network".into(), network.to_string());
        Ok(cfg)
    }

    pub fn bench_networks(&self) -> Result<Vec<String>> {
        Ok(match self.get("bench_networks") {
            None => vec!["fastinf".into(), "surfnet".into(), "multivis".into()],
            Some(v) => v.split(',').map(|s| s.trim().to_string()).collect(),
        })
    }

    /// Writes the fully resolved configuration (file values plus applied
    /// overrides) into the output directory.
    pub fn echo_resolved(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)
            .with_context(|| format!("cannot create {}", out_dir.display()))?;
        let mut text = String::from("# surfclass resolved run config (flags already applied)\n");
        for (key, value) in &self.values {
            writeln!(text, "{key} = {value}").unwrap();
        }
        for source in &self.sources {
            writeln!(text, "source = {source}").unwrap();
        }
        let path = out_dir.join("config.resolved.txt");
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}
