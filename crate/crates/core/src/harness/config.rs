//! Flat key=value experiment configuration files.
//!
//! Keys carry section prefixes (`system.M=4`, `train.adam_epochs=8`,
//! `sweep.snr_grid_db=0,2,4`). Lines starting with `#` and blank lines are
//! ignored. The format is diff-friendly and parsed without dependencies.

use std::collections::BTreeMap;
use std::path::Path;

use crate::channel::SystemConfig;
use crate::harness::Scheme;
use crate::training::TrainConfig;
use crate::{Error, Result};

/// Everything one experiment needs: system dimensions, training knobs, the
/// evaluated scheme, the SNR grid and the Monte-Carlo stopping rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub train: TrainConfig,
    pub scheme: Scheme,
    pub snr_grid_db: Vec<f64>,
    pub min_bit_errors: u64,
    pub max_blocks: u64,
    pub seed: u64,
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.train.validate()?;
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("snr grid must be nonempty".into()));
        }
        if self.snr_grid_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("snr grid must be strictly increasing".into()));
        }
        if self.min_bit_errors == 0 {
            return Err(Error::Config("min_bit_errors must be >= 1".into()));
        }
        if self.max_blocks == 0 {
            return Err(Error::Config("max_blocks must be >= 1".into()));
        }
        Ok(())
    }

    /// Parse from flat key=value text. The training SNR defaults to the
    /// midpoint of the SNR grid when not given explicitly.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Self::from_map(&map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        fn get<T: std::str::FromStr>(
            map: &BTreeMap<String, String>,
            key: &str,
        ) -> Result<Option<T>> {
            match map.get(key) {
                None => Ok(None),
                Some(v) => v
                    .parse::<T>()
                    .map(Some)
                    .map_err(|_| Error::Parse(format!("bad value '{v}' for {key}"))),
            }
        }
        fn require<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
            get(map, key)?.ok_or_else(|| Error::Config(format!("missing key {key}")))
        }

        let m: usize = require(map, "system.M")?;
        let n: usize = require(map, "system.N")?;
        let t_tau: usize = require(map, "system.T_tau")?;
        let t_d: usize = require(map, "system.T_d")?;
        let l: usize = require(map, "system.L")?;
        let system = SystemConfig::symmetric(m, n, t_tau, t_d, l, 0.0)?;

        let snr_grid_db: Vec<f64> = match map.get("sweep.snr_grid_db") {
            None => return Err(Error::Config("missing key sweep.snr_grid_db".into())),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad snr grid entry '{s}'")))
                })
                .collect::<Result<_>>()?,
        };

        let seed: u64 = get(map, "seed")?.unwrap_or(1);
        let defaults = TrainConfig::default();
        let grid_mid = (snr_grid_db.first().unwrap_or(&0.0)
            + snr_grid_db.last().unwrap_or(&0.0))
            / 2.0;
        let train = TrainConfig {
            learning_rate: get(map, "train.learning_rate")?.unwrap_or(defaults.learning_rate),
            batch_size: get(map, "train.batch_size")?.unwrap_or(defaults.batch_size),
            adam_epochs: get(map, "train.adam_epochs")?.unwrap_or(defaults.adam_epochs),
            sgd_epochs: get(map, "train.sgd_epochs")?.unwrap_or(defaults.sgd_epochs),
            batches_per_epoch: get(map, "train.batches_per_epoch")?
                .unwrap_or(defaults.batches_per_epoch),
            train_snr_db: get(map, "train.train_snr_db")?.unwrap_or(grid_mid),
            seed,
            zeta_ratio: get(map, "train.zeta_ratio")?.unwrap_or(defaults.zeta_ratio),
            eval_every: get(map, "train.eval_every")?.unwrap_or(defaults.eval_every),
            probe_blocks: get(map, "train.probe_blocks")?.unwrap_or(defaults.probe_blocks),
            hidden: (
                get(map, "train.hidden1")?.unwrap_or(defaults.hidden.0),
                get(map, "train.hidden2")?.unwrap_or(defaults.hidden.1),
            ),
        };

        let scheme: Scheme = require(map, "scheme")?;
        let ec = ExperimentConfig {
            system,
            train,
            scheme,
            snr_grid_db,
            min_bit_errors: get(map, "sweep.min_bit_errors")?.unwrap_or(300),
            max_blocks: get(map, "sweep.max_blocks")?.unwrap_or(2_000_000),
            seed,
            output_dir: map.get("output_dir").cloned(),
        };
        ec.validate()?;
        Ok(ec)
    }

    /// Canonical key=value rendering (manifest payload).
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let grid = self
            .snr_grid_db
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",");
        let mut kv = vec![
            ("system.M".into(), self.system.num_users.to_string()),
            ("system.N".into(), self.system.num_rx_antennas.to_string()),
            ("system.T_tau".into(), self.system.pilot_len.to_string()),
            ("system.T_d".into(), self.system.data_len.to_string()),
            ("system.L".into(), self.system.codebook_size.to_string()),
            ("scheme".into(), self.scheme.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("sweep.snr_grid_db".into(), grid),
            ("sweep.min_bit_errors".into(), self.min_bit_errors.to_string()),
            ("sweep.max_blocks".into(), self.max_blocks.to_string()),
            ("train.learning_rate".into(), self.train.learning_rate.to_string()),
            ("train.batch_size".into(), self.train.batch_size.to_string()),
            ("train.adam_epochs".into(), self.train.adam_epochs.to_string()),
            ("train.sgd_epochs".into(), self.train.sgd_epochs.to_string()),
            (
                "train.batches_per_epoch".into(),
                self.train.batches_per_epoch.to_string(),
            ),
            ("train.train_snr_db".into(), self.train.train_snr_db.to_string()),
            ("train.zeta_ratio".into(), self.train.zeta_ratio.to_string()),
            ("train.eval_every".into(), self.train.eval_every.to_string()),
            ("train.probe_blocks".into(), self.train.probe_blocks.to_string()),
            ("train.hidden1".into(), self.train.hidden.0.to_string()),
            ("train.hidden2".into(), self.train.hidden.1.to_string()),
        ];
        if let Some(dir) = &self.output_dir {
            kv.push(("output_dir".into(), dir.clone()));
        }
        kv
    }

    /// FNV-1a hash of the canonical rendering, recorded in manifests.
    pub fn config_hash(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for (k, v) in self.to_key_values() {
            for b in k.bytes().chain([b'=']).chain(v.bytes()).chain([b'\n']) {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x1000_0000_01b3);
            }
        }
        hash
    }
}
