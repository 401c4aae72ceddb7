//! Benchmark configuration: defaults, `key=value` files and flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use auxlsm::bloom::BloomConfig;
use auxlsm::workload::{KeyDist, OpKind, WorkloadSpec, MESSAGE_MIN};
use auxlsm::{
    CcMethod, DatasetConfig, LookupOptions, RepairMode, StrategyConfig, StrategyKind, ValidationMethod,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Which optional lookup and filter optimizations are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Optimizations {
    pub batch: bool,
    pub scursor: bool,
    pub bbf: bool,
    pub pid: bool,
}

impl Optimizations {
    pub const ALL: Optimizations = Optimizations {
        batch: true,
        scursor: true,
        bbf: true,
        pid: true,
    };
    pub const NONE: Optimizations = Optimizations {
        batch: false,
        scursor: false,
        bbf: false,
        pid: false,
    };
}

impl FromStr for Optimizations {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut o = Optimizations::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "none" => {}
                "all" => o = Optimizations::ALL,
                "batch" => o.batch = true,
                "scursor" => o.scursor = true,
                "bbf" => o.bbf = true,
                "pid" => o.pid = true,
                other => return Err(format!("unknown optimization `{other}` (batch, scursor, bbf, pid, all, none)")),
            }
        }
        Ok(o)
    }
}

impl fmt::Display for Optimizations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.batch, "batch"),
            (self.scursor, "scursor"),
            (self.bbf, "bbf"),
            (self.pid, "pid"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub strategy: StrategyKind,
    pub repair: RepairMode,
    pub cc: CcMethod,
    pub size_ratio: f64,
    pub max_mergeable_bytes: u64,
    pub memory_budget_bytes: usize,
    pub page_size: usize,
    pub cache_bytes: usize,
    /// `None` uses the default of the selected Bloom filter layout.
    pub bloom_bits_per_key: Option<f64>,
    pub batch_bytes: usize,
    pub opt: Optimizations,
    pub validation: ValidationMethod,
    pub index_only: bool,
    /// Clear the page cache before every query.
    pub cold_cache: bool,
    pub op_kind: OpKind,
    pub records: u64,
    pub update_ratio: f64,
    pub delete_ratio: f64,
    pub dist: KeyDist,
    pub seed: u64,
    pub message_len: (usize, usize),
    pub selectivities: Vec<f64>,
    pub queries_per_selectivity: usize,
    /// Records between full repairs; 0 means a tenth of `records`.
    pub repair_interval: u64,
    pub threads: usize,
    /// Data directory; a temporary one when unset.
    pub dir: Option<PathBuf>,
    /// CSV destination; stdout when unset.
    pub out: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            strategy: StrategyKind::Validation,
            repair: RepairMode::None,
            cc: CcMethod::Lock,
            size_ratio: 1.2,
            max_mergeable_bytes: 64 << 20,
            memory_budget_bytes: 8 << 20,
            page_size: 128 << 10,
            cache_bytes: 4 << 20,
            bloom_bits_per_key: None,
            batch_bytes: 16 << 20,
            opt: Optimizations::ALL,
            validation: ValidationMethod::Direct,
            index_only: false,
            cold_cache: false,
            op_kind: OpKind::Upsert,
            records: 200_000,
            update_ratio: 0.0,
            delete_ratio: 0.0,
            dist: KeyDist::Uniform,
            seed: 0,
            message_len: (MESSAGE_MIN, MESSAGE_MIN + 100),
            selectivities: vec![0.00001, 0.0001, 0.001, 0.01, 0.1, 0.2],
            queries_per_selectivity: 10,
            repair_interval: 0,
            threads: 1,
            dir: None,
            out: None,
        }
    }
}

fn parse<T: FromStr>(field: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.trim().parse().map_err(|e| bad(field, format!("`{v}`: {e}")))
}

fn parse_bool(field: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(bad(field, format!("`{other}` is not a boolean"))),
    }
}

impl BenchConfig {
    /// Sets one field from its textual form. Keys use underscores; dashes
    /// are accepted too so flag names work as keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let field = key.trim().replace('-', "_");
        let f = field.as_str();
        let v = value.trim();
        match f {
            "strategy" => self.strategy = v.parse().map_err(core_error)?,
            "repair" => self.repair = v.parse().map_err(core_error)?,
            "cc" => self.cc = v.parse().map_err(core_error)?,
            "size_ratio" => self.size_ratio = parse(f, v)?,
            "max_mergeable_bytes" => self.max_mergeable_bytes = parse(f, v)?,
            "memory_budget_bytes" => self.memory_budget_bytes = parse(f, v)?,
            "page_size" => self.page_size = parse(f, v)?,
            "cache_bytes" => self.cache_bytes = parse(f, v)?,
            "bloom_bits_per_key" => self.bloom_bits_per_key = Some(parse(f, v)?),
            "batch_bytes" => self.batch_bytes = parse(f, v)?,
            "opt" => self.opt = v.parse().map_err(|e: String| bad(f, e))?,
            "validation" => {
                self.validation = match v {
                    "none" => ValidationMethod::None,
                    "direct" => ValidationMethod::Direct,
                    "timestamp" => ValidationMethod::Timestamp,
                    _ => return Err(bad(f, format!("`{v}` (none, direct, timestamp)"))),
                }
            }
            "index_only" => self.index_only = parse_bool(f, v)?,
            "cold_cache" => self.cold_cache = parse_bool(f, v)?,
            "op_kind" => {
                self.op_kind = match v {
                    "upsert" => OpKind::Upsert,
                    "insert" => OpKind::Insert,
                    _ => return Err(bad(f, format!("`{v}` (upsert, insert)"))),
                }
            }
            "records" => self.records = parse(f, v)?,
            "update_ratio" => self.update_ratio = parse(f, v)?,
            "delete_ratio" => self.delete_ratio = parse(f, v)?,
            "dist" => self.dist = v.parse().map_err(core_error)?,
            "seed" => self.seed = parse(f, v)?,
            "message_min" => self.message_len.0 = parse(f, v)?,
            "message_max" => self.message_len.1 = parse(f, v)?,
            "selectivities" => {
                self.selectivities = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse::<f64>(f, s))
                    .collect::<Result<_, _>>()?
            }
            "queries_per_selectivity" => self.queries_per_selectivity = parse(f, v)?,
            "repair_interval" => self.repair_interval = parse(f, v)?,
            "threads" => self.threads = parse(f, v)?,
            "dir" => self.dir = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            _ => return Err(bad(f, "unknown key")),
        }
        Ok(())
    }

    /// Applies a `key=value` file. Blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("config", format!("{}: {e}", path.display())))?;
        self.apply_str(&text)
    }

    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(bad("config", format!("line {}: expected key=value", n + 1)));
            };
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [("update_ratio", self.update_ratio), ("delete_ratio", self.delete_ratio)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(name, format!("{v} is outside [0, 1]")));
            }
        }
        if self.update_ratio + self.delete_ratio > 1.0 {
            return Err(bad("delete_ratio", "update_ratio + delete_ratio exceeds 1"));
        }
        if let Some(s) = self.selectivities.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
            return Err(bad("selectivities", format!("{s} is outside (0, 1]")));
        }
        if self.threads == 0 {
            return Err(bad("threads", "must be at least 1"));
        }
        if self.batch_bytes == 0 {
            return Err(bad("batch_bytes", "must be positive"));
        }
        if self.message_len.0 > self.message_len.1 {
            return Err(bad("message_min", "exceeds message_max"));
        }
        if self.index_only && self.validation == ValidationMethod::Direct {
            return Err(bad("validation", "index-only queries need `timestamp` or `none`"));
        }
        self.strategy_config().validate().map_err(core_error)?;
        Ok(())
    }

    pub fn strategy_config(&self) -> StrategyConfig {
        let mut s = match self.strategy {
            StrategyKind::Eager => StrategyConfig::eager(),
            StrategyKind::Validation => StrategyConfig::validation(self.repair),
            StrategyKind::MutableBitmap => StrategyConfig::mutable_bitmap(self.cc),
        };
        s.repair = self.repair;
        s.cc = self.cc;
        s
    }

    pub fn dataset_config(&self, root: &Path) -> DatasetConfig {
        let mut c = DatasetConfig::new(root, auxlsm::workload::Tweet::schema(), self.strategy_config());
        c.memory_budget_bytes = self.memory_budget_bytes;
        c.page_size = self.page_size;
        c.cache_bytes = self.cache_bytes;
        c.size_ratio = self.size_ratio;
        c.max_mergeable_bytes = self.max_mergeable_bytes;
        c.bloom = if self.opt.bbf {
            BloomConfig::blocked()
        } else {
            BloomConfig::standard()
        };
        if let Some(b) = self.bloom_bits_per_key {
            c.bloom.bits_per_key = b;
        }
        c
    }

    pub fn lookup_options(&self) -> LookupOptions {
        LookupOptions {
            batch_bytes: self.batch_bytes,
            batching: self.opt.batch,
            stateful_cursor: self.opt.scursor,
            propagate_component_ids: self.opt.pid,
            preserve_key_order: false,
        }
    }

    pub fn workload(&self) -> WorkloadSpec {
        WorkloadSpec {
            op_kind: self.op_kind,
            total_records: self.records,
            update_ratio: self.update_ratio,
            delete_ratio: self.delete_ratio,
            key_dist: self.dist,
            seed: self.seed,
            message_len: self.message_len,
        }
    }

    pub fn repair_every(&self) -> u64 {
        match self.repair_interval {
            0 => (self.records / 10).max(1),
            n => n,
        }
    }
}

/// Maps a core configuration error onto the bench error type, keeping the
/// field name.
pub fn core_error(e: auxlsm::Error) -> ConfigError {
    match e {
        auxlsm::Error::Config { field, reason } => ConfigError { field, reason },
        other => bad("config", other.to_string()),
    }
}
