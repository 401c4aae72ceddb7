use std::path::PathBuf;
use std::str::FromStr;

use crate::bloom::BloomConfig;
use crate::component::DEFAULT_PAGE_SIZE;
use crate::error::{Error, Result};
use crate::record::DatasetSchema;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Eager,
    Validation,
    MutableBitmap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RepairMode {
    None,
    Merge,
    Standalone,
    MergeBloomOpt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CcMethod {
    Lock,
    SideFile,
}

/// How secondary indexes are kept under the mutable-bitmap strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SecondaryMaintenance {
    Eager,
    Validation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UniquenessIndex {
    Primary,
    PrimaryKey,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub repair: RepairMode,
    pub cc: CcMethod,
    pub mb_secondary: SecondaryMaintenance,
    pub uniqueness: UniquenessIndex,
}

impl StrategyConfig {
    pub fn eager() -> Self {
        StrategyConfig {
            kind: StrategyKind::Eager,
            repair: RepairMode::None,
            cc: CcMethod::Lock,
            mb_secondary: SecondaryMaintenance::Validation,
            uniqueness: UniquenessIndex::PrimaryKey,
        }
    }

    pub fn validation(repair: RepairMode) -> Self {
        StrategyConfig {
            kind: StrategyKind::Validation,
            repair,
            ..StrategyConfig::eager()
        }
    }

    pub fn mutable_bitmap(cc: CcMethod) -> Self {
        StrategyConfig {
            kind: StrategyKind::MutableBitmap,
            cc,
            ..StrategyConfig::eager()
        }
    }

    /// Whether index entries carry timestamps.
    pub fn timestamped(&self) -> bool {
        self.kind != StrategyKind::Eager
    }

    /// Whether secondary indexes may hold stale entries.
    pub fn lazy_secondaries(&self) -> bool {
        match self.kind {
            StrategyKind::Eager => false,
            StrategyKind::Validation => true,
            StrategyKind::MutableBitmap => self.mb_secondary == SecondaryMaintenance::Validation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != StrategyKind::Validation && self.repair != RepairMode::None {
            return Err(Error::config(
                "repair",
                "repair applies only to the validation strategy",
            ));
        }
        Ok(())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eager" => Ok(StrategyKind::Eager),
            "validation" => Ok(StrategyKind::Validation),
            "mutable-bitmap" | "mutable_bitmap" | "mb" => Ok(StrategyKind::MutableBitmap),
            _ => Err(Error::config("strategy", format!("unknown strategy `{s}`"))),
        }
    }
}

impl FromStr for RepairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RepairMode::None),
            "merge" => Ok(RepairMode::Merge),
            "standalone" => Ok(RepairMode::Standalone),
            "merge-bloom" | "merge_bloom" => Ok(RepairMode::MergeBloomOpt),
            _ => Err(Error::config("repair", format!("unknown repair mode `{s}`"))),
        }
    }
}

impl FromStr for CcMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lock" => Ok(CcMethod::Lock),
            "sidefile" | "side-file" => Ok(CcMethod::SideFile),
            _ => Err(Error::config("cc", format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub root: PathBuf,
    pub schema: DatasetSchema,
    pub strategy: StrategyConfig,
    /// Joint memory budget over all trees, in key + payload bytes.
    pub memory_budget_bytes: usize,
    pub page_size: usize,
    pub cache_bytes: usize,
    /// Bloom filters of the primary and primary key indexes.
    pub bloom: BloomConfig,
    pub size_ratio: f64,
    pub max_mergeable_bytes: u64,
    /// Flush and merge inline once the budget is reached.
    pub auto_maintenance: bool,
    /// Memory for the repair sorter before it spills runs to disk.
    pub sort_memory_bytes: usize,
}

impl DatasetConfig {
    pub fn new(root: impl Into<PathBuf>, schema: DatasetSchema, strategy: StrategyConfig) -> Self {
        DatasetConfig {
            root: root.into(),
            schema,
            strategy,
            memory_budget_bytes: 8 << 20,
            page_size: DEFAULT_PAGE_SIZE,
            cache_bytes: 4 << 20,
            bloom: BloomConfig::standard(),
            size_ratio: 1.2,
            max_mergeable_bytes: 64 << 20,
            auto_maintenance: true,
            sort_memory_bytes: 64 << 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        if self.memory_budget_bytes == 0 {
            return Err(Error::config("memory_budget_bytes", "must be positive"));
        }
        if self.page_size < 64 {
            return Err(Error::config("page_size", "must be at least 64 bytes"));
        }
        if !(self.size_ratio > 0.0) {
            return Err(Error::config("size_ratio", "must be positive"));
        }
        if !(self.bloom.bits_per_key > 0.0) {
            return Err(Error::config("bloom_bits_per_key", "must be positive"));
        }
        Ok(())
    }
}
