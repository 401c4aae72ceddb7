//! An LSM storage engine for a dataset partition: a primary index, a primary
//! key index and secondary indexes, maintained by one of three strategies.
//!
//! * Eager: every write looks up the old record and keeps secondary indexes
//!   and range filters exact.
//! * Validation: writes are blind; queries validate secondary hits against
//!   the primary key index by timestamp, and repair cleans stale entries.
//! * Mutable-bitmap: disk-resident old versions are deleted in place through
//!   a validity bitmap, so range filters only ever cover live records.

pub mod bitmap;
pub mod bloom;
pub mod component;
pub mod concurrency;
pub mod dataset;
pub mod error;
mod ingest;
pub mod oracle;
pub mod pager;
pub mod query;
pub mod record;
pub mod repair;
pub mod tree;
pub mod types;
pub mod workload;

#[cfg(test)]
mod testutil;

pub use dataset::{
    CcMethod, Dataset, DatasetConfig, RepairMode, SecondaryMaintenance, StrategyConfig,
    StrategyKind, UniquenessIndex,
};
pub use error::{Error, Result};
pub use query::{FetchKey, KeyRange, LookupOptions, QueryMetrics, QueryResult, ValidationMethod};
pub use record::{DatasetSchema, FieldType, Record, Value};
pub use types::{ComponentId, FilterRange, IndexEntry, IndexKey, PrimaryKey, RangeFilter, Timestamp};
