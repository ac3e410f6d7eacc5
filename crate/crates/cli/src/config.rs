//! Flat key-value configuration files.
//!
//! Format: one `key = value` pair per line, `#` starts a comment, blank
//! lines ignored. Unknown keys are hard errors (a typo in a sweep config
//! must not silently fall back to a default), reported with their line
//! number. Every key is optional; defaults are documented in the README.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use rlul_core::nn::ArchSpec;
use rlul_core::optim::{OptimizerKind, OptimizerSpec};
use rlul_core::rng::derive_seed;
use rlul_core::train::TrainConfig;
use rlul_core::unlearn::UnlearnConfig;

/// Raw parse of a config file: key -> (value, line number).
#[derive(Debug)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
    consumed: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {line_no}: expected 'key = value', got '{line}'");
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                bail!("config line {line_no}: empty key");
            }
            if let Some((_, first_line)) = entries.get(&key) {
                bail!("config line {line_no}: key '{key}' already set on line {first_line}");
            }
            entries.insert(key, (value, line_no));
        }
        Ok(RawConfig {
            entries,
            consumed: Default::default(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.consumed.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get_string(&self, key: &str) -> Option<String> {
        self.raw(key).map(|s| s.to_string())
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(value) => {
                let line = self.entries[key].1;
                value
                    .parse::<T>()
                    .map(Some)
                    .map_err(|e| anyhow!("config line {line}: field '{key}': {e}"))
            }
        }
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some("true") => Ok(Some(true)),
            Some("false") => Ok(Some(false)),
            Some(other) => {
                let line = self.entries[key].1;
                bail!("config line {line}: field '{key}': expected true or false, got '{other}'")
            }
        }
    }

    pub fn get_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(value) => {
                let line = self.entries[key].1;
                value
                    .split(',')
                    .map(|item| {
                        item.trim()
                            .parse::<T>()
                            .map_err(|e| anyhow!("config line {line}: field '{key}': {e}"))
                    })
                    .collect::<Result<Vec<T>>>()
                    .map(Some)
            }
        }
    }

    /// Error out if any key was never consumed by a typed getter.
    pub fn finish(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        let unknown: Vec<String> = self
            .entries
            .iter()
            .filter(|(k, _)| !consumed.contains(*k))
            .map(|(k, (_, line))| format!("'{k}' (line {line})"))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            bail!("unknown config key(s): {}", unknown.join(", "))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// IDX file pairs under `dir`.
    Idx {
        dir: PathBuf,
        train_images: String,
        train_labels: String,
        test_images: String,
        test_labels: String,
        /// Optional seeded subsample of the training set (CI profile).
        train_subset: Option<usize>,
    },
    /// Seeded Gaussian blobs, split into train and test.
    Synth {
        n: usize,
        test_n: usize,
        d: usize,
        k: usize,
        separation: f64,
    },
}

/// Which dataset the certification probe runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeSelector {
    Test,
    TrainSample,
    Removed,
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub optimizers: Vec<OptimizerKind>,
    pub rates: Vec<f64>,
    pub sizes: Vec<usize>,
    pub table1_sizes: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
}

/// Everything a command needs, resolved from a config file plus overrides.
#[derive(Debug, Clone)]
pub struct WorkbenchConfig {
    pub seed: u64,
    pub data: DataSource,
    pub arch_kind: String,
    pub hidden: usize,
    pub train: TrainConfig,
    pub unlearn: UnlearnConfig,
    pub probe_every: usize,
    pub certify_threshold: f64,
    pub probe_selector: ProbeSelector,
    pub probe_sample: usize,
    pub members_sample: Option<usize>,
    pub certify_requests: Option<PathBuf>,
    pub sweep: SweepSettings,
    pub out_dir: PathBuf,
}

fn optimizer_from(raw: &RawConfig, prefix: &str, default_kind: OptimizerKind, default_rate: f64) -> Result<OptimizerSpec> {
    let kind: OptimizerKind = raw
        .get_parsed::<String>(&format!("{prefix}.optimizer"))?
        .map(|s| s.parse())
        .transpose()
        .map_err(|e| anyhow!("field '{prefix}.optimizer': {e}"))?
        .unwrap_or(default_kind);
    let mut spec = OptimizerSpec::new(kind, default_rate);
    if let Some(rate) = raw.get_parsed::<f64>(&format!("{prefix}.rate"))? {
        spec.learning_rate = rate;
    }
    if let Some(v) = raw.get_parsed::<f64>(&format!("{prefix}.adam.beta1"))? {
        spec.adam_beta1 = v;
    }
    if let Some(v) = raw.get_parsed::<f64>(&format!("{prefix}.adam.beta2"))? {
        spec.adam_beta2 = v;
    }
    if let Some(v) = raw.get_parsed::<f64>(&format!("{prefix}.adam.eps"))? {
        spec.adam_eps = v;
    }
    if let Some(v) = raw.get_parsed::<f64>(&format!("{prefix}.adadelta.rho"))? {
        spec.adadelta_rho = v;
    }
    if let Some(v) = raw.get_parsed::<f64>(&format!("{prefix}.adadelta.eps"))? {
        spec.adadelta_eps = v;
    }
    Ok(spec)
}

impl WorkbenchConfig {
    /// Resolve a config file. `seed_override` comes from `--seed`,
    /// `out_override` from `--out`; `data_dir_env` is RLUL_DATA_DIR.
    pub fn resolve(
        raw: &RawConfig,
        seed_override: Option<u64>,
        out_override: Option<PathBuf>,
        data_dir_env: Option<String>,
    ) -> Result<Self> {
        let seed = seed_override
            .or(raw.get_parsed::<u64>("seed")?)
            .unwrap_or(42);

        // Dataset.
        let data_kind = raw.get_string("data.kind").unwrap_or_else(|| "idx".to_string());
        let data = match data_kind.as_str() {
            "idx" => {
                let dir = raw
                    .get_string("data.dir")
                    .or(data_dir_env)
                    .unwrap_or_else(|| "data/mnist".to_string());
                DataSource::Idx {
                    dir: PathBuf::from(dir),
                    train_images: raw
                        .get_string("data.train_images")
                        .unwrap_or_else(|| "train-images-idx3-ubyte".to_string()),
                    train_labels: raw
                        .get_string("data.train_labels")
                        .unwrap_or_else(|| "train-labels-idx1-ubyte".to_string()),
                    test_images: raw
                        .get_string("data.test_images")
                        .unwrap_or_else(|| "t10k-images-idx3-ubyte".to_string()),
                    test_labels: raw
                        .get_string("data.test_labels")
                        .unwrap_or_else(|| "t10k-labels-idx1-ubyte".to_string()),
                    train_subset: raw.get_parsed::<usize>("data.train_subset")?,
                }
            }
            "synth" => DataSource::Synth {
                n: raw.get_parsed::<usize>("data.synth.n")?.unwrap_or(2000),
                test_n: raw.get_parsed::<usize>("data.synth.test_n")?.unwrap_or(500),
                d: raw.get_parsed::<usize>("data.synth.d")?.unwrap_or(16),
                k: raw.get_parsed::<usize>("data.synth.k")?.unwrap_or(10),
                separation: raw
                    .get_parsed::<f64>("data.synth.separation")?
                    .unwrap_or(6.0),
            },
            other => bail!("field 'data.kind': expected idx or synth, got '{other}'"),
        };

        // Architecture.
        let arch_kind = raw
            .get_string("arch.kind")
            .unwrap_or_else(|| "mlp1".to_string());
        if arch_kind != "mlp1" && arch_kind != "softmax_linear" {
            bail!("field 'arch.kind': expected mlp1 or softmax_linear, got '{arch_kind}'");
        }
        let hidden = raw.get_parsed::<usize>("arch.hidden")?.unwrap_or(256);

        // Training.
        let train = TrainConfig {
            epochs: raw.get_parsed::<usize>("train.epochs")?.unwrap_or(15),
            batch_size: raw.get_parsed::<usize>("train.batch_size")?.unwrap_or(64),
            optimizer: optimizer_from(raw, "train", OptimizerKind::AdaDelta, 1.0)?,
            seed: raw
                .get_parsed::<u64>("train.seed")?
                .unwrap_or_else(|| derive_seed(seed, 1)),
            shuffle_each_epoch: raw.get_bool("train.shuffle")?.unwrap_or(true),
        };

        // Unlearning.
        let num_classes = match &data {
            DataSource::Idx { .. } => 10,
            DataSource::Synth { k, .. } => *k,
        };
        let unlearn_optimizer = optimizer_from(
            raw,
            "unlearn",
            OptimizerKind::AdaDelta,
            UnlearnConfig::DEFAULT_UNLEARN_RATE,
        )?;
        let retrain_threshold_l = match raw.get_string("unlearn.retrain_threshold") {
            None => None,
            Some(s) if s == "none" => None,
            Some(s) => Some(s.parse::<usize>().map_err(|e| {
                anyhow!("field 'unlearn.retrain_threshold': expected integer or none: {e}")
            })?),
        };
        let unlearn = UnlearnConfig {
            k_prime: raw
                .get_parsed::<usize>("unlearn.k_prime")?
                .unwrap_or(num_classes - 1),
            optimizer: unlearn_optimizer,
            retrain_threshold_l,
            replay_count_r: raw.get_parsed::<usize>("unlearn.replay")?.unwrap_or(0),
            seed: raw
                .get_parsed::<u64>("unlearn.seed")?
                .unwrap_or_else(|| derive_seed(seed, 2)),
            single_point_updates: raw.get_bool("unlearn.single_point_updates")?.unwrap_or(false),
        };
        let probe_every = raw.get_parsed::<usize>("unlearn.probe_every")?.unwrap_or(0);

        // Certification.
        let certify_threshold = raw.get_parsed::<f64>("certify.threshold")?.unwrap_or(0.05);
        let probe_selector = match raw
            .get_string("certify.probe")
            .unwrap_or_else(|| "test".to_string())
            .as_str()
        {
            "test" => ProbeSelector::Test,
            "train_sample" => ProbeSelector::TrainSample,
            "removed" => ProbeSelector::Removed,
            other => bail!("field 'certify.probe': expected test, train_sample, or removed, got '{other}'"),
        };
        let probe_sample = raw.get_parsed::<usize>("certify.probe_sample")?.unwrap_or(1000);
        let members_sample = raw.get_parsed::<usize>("certify.members_sample")?;
        let certify_requests = raw.get_string("certify.requests").map(PathBuf::from);

        // Sweep.
        let sweep_optimizers = match raw.get_list::<String>("sweep.optimizers")? {
            Some(names) => names
                .iter()
                .map(|n| n.parse::<OptimizerKind>())
                .collect::<rlul_core::Result<Vec<_>>>()
                .map_err(|e| anyhow!("field 'sweep.optimizers': {e}"))?,
            None => vec![OptimizerKind::AdaDelta, OptimizerKind::Adam, OptimizerKind::Sgd],
        };
        let sweep = SweepSettings {
            optimizers: sweep_optimizers,
            rates: raw
                .get_list::<f64>("sweep.rates")?
                .unwrap_or_else(|| vec![0.001, 0.0003, 0.0001]),
            sizes: raw
                .get_list::<usize>("sweep.sizes")?
                .unwrap_or_else(|| (1..=8).map(|i| i * 50).collect()),
            table1_sizes: raw
                .get_list::<usize>("sweep.table1_sizes")?
                .unwrap_or_else(|| vec![100, 600]),
            repetitions: raw.get_parsed::<usize>("sweep.repetitions")?.unwrap_or(1),
            seed: raw
                .get_parsed::<u64>("sweep.seed")?
                .unwrap_or_else(|| derive_seed(seed, 3)),
        };

        let out_dir = out_override
            .or_else(|| raw.get_string("out.dir").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));

        raw.finish()?;

        Ok(WorkbenchConfig {
            seed,
            data,
            arch_kind,
            hidden,
            train,
            unlearn,
            probe_every,
            certify_threshold,
            probe_selector,
            probe_sample,
            members_sample,
            certify_requests,
            sweep,
            out_dir,
        })
    }

    pub fn arch(&self, input_dim: usize, classes: usize) -> ArchSpec {
        match self.arch_kind.as_str() {
            "softmax_linear" => ArchSpec::SoftmaxLinear {
                input_dim,
                classes,
            },
            _ => ArchSpec::Mlp1 {
                input_dim,
                hidden: self.hidden,
                classes,
            },
        }
    }

    /// Seed for the seeded training-set subsample (CI profile).
    pub fn subset_seed(&self) -> u64 {
        derive_seed(self.seed, 4)
    }
}

/// Parse a request-list file: newline-delimited indices, '#' comments.
pub fn parse_request_list(text: &str) -> Result<Vec<usize>> {
    let mut indices = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let value: usize = line
            .parse()
            .map_err(|e| anyhow!("request list line {}: {e}", idx + 1))?;
        indices.push(value);
    }
    Ok(indices)
}

pub fn load_request_list(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading request list {}", path.display()))?;
    parse_request_list(&text)
}
