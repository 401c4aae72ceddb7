//! Python bindings: datasets, record operations, secondary queries, repair
//! and the synthetic tweet workload.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

use auxlsm_core::bloom::BloomConfig;
use auxlsm_core::oracle::{verify, Oracle, VerifyPlan};
use auxlsm_core::pager::IoStats;
use auxlsm_core::repair;
use auxlsm_core::workload::{gen_query_set, gen_stream, KeyDist, OpKind, Operation, Tweet, WorkloadSpec};
use auxlsm_core::{
    Dataset, DatasetConfig, DatasetSchema, FieldType, FilterRange, KeyRange, LookupOptions, PrimaryKey, QueryMetrics,
    Record, StrategyConfig, StrategyKind, ValidationMethod, Value,
};

fn to_py_err(e: auxlsm_core::Error) -> PyErr {
    use auxlsm_core::Error;
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (Error::Config { .. } | Error::Schema(_) | Error::Usage(_)) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn field_type(name: &str) -> PyResult<FieldType> {
    match name {
        "int" => Ok(FieldType::Int),
        "str" => Ok(FieldType::Str),
        "bytes" => Ok(FieldType::Bytes),
        _ => Err(PyValueError::new_err(format!("unknown field type `{name}` (int, str, bytes)"))),
    }
}

fn to_value(ty: FieldType, obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    Ok(match ty {
        FieldType::Int => Value::Int(obj.extract()?),
        FieldType::Str => Value::Str(obj.extract()?),
        FieldType::Bytes => Value::Bytes(obj.downcast::<PyBytes>()?.as_bytes().to_vec()),
    })
}

fn from_value(py: Python<'_>, v: &Value) -> PyObject {
    match v {
        Value::Int(i) => i.into_py(py),
        Value::Str(s) => s.into_py(py),
        Value::Bytes(b) => PyBytes::new_bound(py, b).into_py(py),
    }
}

/// `(key, [values...])`
fn record_to_py(py: Python<'_>, r: &Record) -> PyObject {
    let values = PyList::new_bound(py, r.fields.iter().map(|v| from_value(py, v)));
    (r.key.0, values).into_py(py)
}

fn metrics_to_py<'py>(py: Python<'py>, m: &QueryMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("pages_read", m.pages_read)?;
    d.set_item("pages_scanned", m.pages_scanned)?;
    d.set_item("cache_hits", m.cache_hits)?;
    d.set_item("bloom_tests", m.bloom_tests)?;
    d.set_item("components_accessed", m.components_accessed)?;
    d.set_item("wasted_fetches", m.wasted_fetches)?;
    d.set_item("candidates", m.candidates)?;
    Ok(d)
}

fn io_to_py<'py>(py: Python<'py>, s: &IoStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("pages_read", s.pages_read)?;
    d.set_item("pages_scanned", s.pages_scanned)?;
    d.set_item("pages_written", s.pages_written)?;
    d.set_item("cache_hits", s.cache_hits)?;
    d.set_item("bloom_tests", s.bloom_tests)?;
    Ok(d)
}

fn strategy(kind: &str, repair: &str, cc: &str) -> PyResult<StrategyConfig> {
    let kind: StrategyKind = kind.parse().map_err(to_py_err)?;
    let repair = repair.parse().map_err(to_py_err)?;
    let cc = cc.parse().map_err(to_py_err)?;
    let mut s = match kind {
        StrategyKind::Eager => StrategyConfig::eager(),
        StrategyKind::Validation => StrategyConfig::validation(repair),
        StrategyKind::MutableBitmap => StrategyConfig::mutable_bitmap(cc),
    };
    s.repair = repair;
    s.validate().map_err(to_py_err)?;
    Ok(s)
}

fn validation(name: &str) -> PyResult<ValidationMethod> {
    match name {
        "none" => Ok(ValidationMethod::None),
        "direct" => Ok(ValidationMethod::Direct),
        "timestamp" => Ok(ValidationMethod::Timestamp),
        _ => Err(PyValueError::new_err(format!("unknown validation `{name}` (none, direct, timestamp)"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn workload_spec(
    records: u64,
    update_ratio: f64,
    delete_ratio: f64,
    dist: &str,
    seed: u64,
    op_kind: &str,
    message_len: Option<(usize, usize)>,
) -> PyResult<WorkloadSpec> {
    let op_kind = match op_kind {
        "upsert" => OpKind::Upsert,
        "insert" => OpKind::Insert,
        _ => return Err(PyValueError::new_err(format!("unknown op_kind `{op_kind}` (upsert, insert)"))),
    };
    let mut spec = WorkloadSpec {
        op_kind,
        total_records: records,
        update_ratio,
        delete_ratio,
        key_dist: dist.parse::<KeyDist>().map_err(to_py_err)?,
        seed,
        ..WorkloadSpec::default()
    };
    if let Some(m) = message_len {
        spec.message_len = m;
    }
    spec.validate().map_err(to_py_err)?;
    Ok(spec)
}

/// An LSM dataset: primary index, primary key index and secondary indexes.
#[pyclass(name = "Dataset", module = "auxlsm")]
struct PyDataset {
    inner: Dataset,
}

impl PyDataset {
    fn schema(&self) -> &DatasetSchema {
        self.inner.schema()
    }

    fn values(&self, values: &Bound<'_, PyAny>) -> PyResult<Vec<Value>> {
        let items: Vec<Bound<'_, PyAny>> = values.iter()?.collect::<PyResult<_>>()?;
        let fields = &self.schema().fields;
        if items.len() != fields.len() {
            return Err(PyValueError::new_err(format!(
                "expected {} values, got {}",
                fields.len(),
                items.len()
            )));
        }
        fields.iter().zip(&items).map(|(f, v)| to_value(f.ty, v)).collect()
    }

    /// Secondary index position and key range for `field` in `[lo, hi]`.
    fn secondary_range(&self, field: &str, lo: &Bound<'_, PyAny>, hi: &Bound<'_, PyAny>) -> PyResult<(usize, KeyRange)> {
        let schema = self.schema();
        let pos = schema.field_index(field).map_err(to_py_err)?;
        let index = schema
            .secondary_keys
            .iter()
            .position(|&p| p == pos)
            .ok_or_else(|| PyValueError::new_err(format!("field `{field}` has no secondary index")))?;
        let ty = schema.fields[pos].ty;
        let range = KeyRange::new(to_value(ty, lo)?.key_bytes(), to_value(ty, hi)?.key_bytes());
        Ok((index, range))
    }
}

#[pymethods]
impl PyDataset {
    /// Creates a dataset at `path`. `fields` is a list of `(name, type)` with
    /// type one of `int`, `str`, `bytes`.
    #[new]
    #[pyo3(signature = (
        path, fields, secondary = Vec::new(), filter = None, strategy = "validation", repair = "none",
        cc = "lock", page_size = 4096, memory_budget_bytes = 1 << 20, cache_bytes = 4 << 20,
        bloom = "standard", auto_maintenance = true
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        path: PathBuf,
        fields: Vec<(String, String)>,
        secondary: Vec<String>,
        filter: Option<String>,
        strategy: &str,
        repair: &str,
        cc: &str,
        page_size: usize,
        memory_budget_bytes: usize,
        cache_bytes: usize,
        bloom: &str,
        auto_maintenance: bool,
    ) -> PyResult<Self> {
        let defs: Vec<(&str, FieldType)> = fields
            .iter()
            .map(|(n, t)| Ok((n.as_str(), field_type(t)?)))
            .collect::<PyResult<_>>()?;
        let mut schema = DatasetSchema::new(defs);
        for s in &secondary {
            schema = schema.with_secondary(s).map_err(to_py_err)?;
        }
        if let Some(f) = &filter {
            schema = schema.with_filter(f).map_err(to_py_err)?;
        }
        Self::open(path, schema, strategy, repair, cc, page_size, memory_budget_bytes, cache_bytes, bloom, auto_maintenance)
    }

    /// A dataset of synthetic tweets `(user_id, creation_time, message_text)`
    /// indexed on `user_id` and filtered on `creation_time`.
    #[staticmethod]
    #[pyo3(signature = (
        path, strategy = "validation", repair = "none", cc = "lock", page_size = 128 << 10,
        memory_budget_bytes = 8 << 20, cache_bytes = 4 << 20, bloom = "standard", auto_maintenance = true
    ))]
    #[allow(clippy::too_many_arguments)]
    fn tweets(
        path: PathBuf,
        strategy: &str,
        repair: &str,
        cc: &str,
        page_size: usize,
        memory_budget_bytes: usize,
        cache_bytes: usize,
        bloom: &str,
        auto_maintenance: bool,
    ) -> PyResult<Self> {
        Self::open(path, Tweet::schema(), strategy, repair, cc, page_size, memory_budget_bytes, cache_bytes, bloom, auto_maintenance)
    }

    #[getter]
    fn strategy(&self) -> String {
        format!("{:?}", self.inner.strategy().kind)
    }

    #[getter]
    fn fields(&self) -> Vec<String> {
        self.schema().fields.iter().map(|f| f.name.clone()).collect()
    }

    /// Inserts unless the key exists; returns whether it was inserted.
    fn insert(&self, key: u64, values: &Bound<'_, PyAny>) -> PyResult<bool> {
        let rec = Record::new(key, self.values(values)?);
        self.inner.insert(rec).map_err(to_py_err)
    }

    fn upsert(&self, key: u64, values: &Bound<'_, PyAny>) -> PyResult<()> {
        let rec = Record::new(key, self.values(values)?);
        self.inner.upsert(rec).map_err(to_py_err)
    }

    /// Returns whether the strategy reports a record was deleted.
    fn delete(&self, key: u64) -> PyResult<bool> {
        self.inner.delete(key).map_err(to_py_err)
    }

    fn get(&self, py: Python<'_>, key: u64) -> PyResult<Option<PyObject>> {
        let rec = self.inner.get(key).map_err(to_py_err)?;
        Ok(rec.map(|r| PyList::new_bound(py, r.fields.iter().map(|v| from_value(py, v))).into_py(py)))
    }

    /// Secondary range query on `field` over `[lo, hi]`. Returns
    /// `(records, metrics)`; with `index_only`, records are `(secondary
    /// key bytes, primary key)` pairs.
    #[pyo3(signature = (
        field, lo, hi, validation = "direct", index_only = false, batching = true,
        stateful_cursor = true, propagate_component_ids = true
    ))]
    #[allow(clippy::too_many_arguments)]
    fn query<'py>(
        &self,
        py: Python<'py>,
        field: &str,
        lo: &Bound<'py, PyAny>,
        hi: &Bound<'py, PyAny>,
        validation: &str,
        index_only: bool,
        batching: bool,
        stateful_cursor: bool,
        propagate_component_ids: bool,
    ) -> PyResult<(PyObject, Bound<'py, PyDict>)> {
        let (index, range) = self.secondary_range(field, lo, hi)?;
        let method = self::validation(validation)?;
        let opts = LookupOptions {
            batching,
            stateful_cursor,
            propagate_component_ids,
            ..LookupOptions::default()
        };
        if index_only {
            let res = py
                .allow_threads(|| self.inner.query_index_only(index, &range, method, &opts))
                .map_err(to_py_err)?;
            let items = PyList::new_bound(
                py,
                res.items.iter().map(|(sk, pk)| -> PyObject { (PyBytes::new_bound(py, sk), pk.0).into_py(py) }),
            );
            return Ok((items.into_py(py), metrics_to_py(py, &res.metrics)?));
        }
        let res = py
            .allow_threads(|| self.inner.query_secondary(index, &range, method, &opts))
            .map_err(to_py_err)?;
        let mut items = res.items;
        items.sort_by_key(|r| r.key);
        let list = PyList::new_bound(py, items.iter().map(|r| record_to_py(py, r)));
        Ok((list.into_py(py), metrics_to_py(py, &res.metrics)?))
    }

    /// Primary index scan of records whose filter field lies in `[lo, hi]`,
    /// optionally restricted to a secondary range. Returns `(records,
    /// metrics)`.
    #[pyo3(signature = (lo, hi, field = None, key_lo = None, key_hi = None))]
    fn filtered_scan<'py>(
        &self,
        py: Python<'py>,
        lo: i64,
        hi: i64,
        field: Option<&str>,
        key_lo: Option<&Bound<'py, PyAny>>,
        key_hi: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<(PyObject, Bound<'py, PyDict>)> {
        let secondary = match (field, key_lo, key_hi) {
            (Some(f), Some(l), Some(h)) => Some(self.secondary_range(f, l, h)?),
            (None, None, None) => None,
            _ => return Err(PyValueError::new_err("field, key_lo and key_hi go together")),
        };
        let filter = FilterRange::new(lo, hi);
        let res = py
            .allow_threads(|| self.inner.filtered_scan(filter, secondary.as_ref().map(|(i, r)| (*i, r))))
            .map_err(to_py_err)?;
        let mut items = res.items;
        items.sort_by_key(|r| r.key);
        let list = PyList::new_bound(py, items.iter().map(|r| record_to_py(py, r)));
        Ok((list.into_py(py), metrics_to_py(py, &res.metrics)?))
    }

    fn flush(&self, py: Python<'_>) -> PyResult<()> {
        py.allow_threads(|| self.inner.flush()).map_err(to_py_err)
    }

    fn merge(&self, py: Python<'_>) -> PyResult<()> {
        py.allow_threads(|| self.inner.merge()).map_err(to_py_err)
    }

    /// Flushes and merges until the merge policy is satisfied.
    fn settle(&self, py: Python<'_>) -> PyResult<()> {
        py.allow_threads(|| self.inner.settle()).map_err(to_py_err)
    }

    /// Standalone repair of every secondary component (validation strategy).
    /// Returns one statistics dict per repaired component.
    fn repair_all<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let stats = py.allow_threads(|| repair::repair_all(&self.inner)).map_err(to_py_err)?;
        stats
            .iter()
            .map(|s| {
                let d = PyDict::new_bound(py);
                d.set_item("entries_seen", s.entries_seen)?;
                d.set_item("keys_sorted", s.keys_sorted)?;
                d.set_item("invalid", s.invalid)?;
                d.set_item("co_sequential", s.co_sequential)?;
                d.set_item("pk_components_searched", s.pk_components_searched)?;
                d.set_item("pk_components_pruned", s.pk_components_pruned)?;
                d.set_item("pk_io", io_to_py(py, &s.pk_io)?)?;
                d.set_item("elapsed_s", s.elapsed.as_secs_f64())?;
                Ok(d)
            })
            .collect()
    }

    /// Disk component count per index.
    fn component_counts(&self) -> Vec<(String, usize)> {
        self.inner.component_counts()
    }

    /// Page cache totals since creation.
    fn io_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        io_to_py(py, &self.inner.cache().totals())
    }

    /// Page activity of write-path lookups.
    fn ingest_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        io_to_py(py, &self.inner.ingest_stats())
    }

    fn clear_cache(&self) {
        self.inner.cache().clear();
    }

    /// Applies a generated tweet workload; the dataset must use the tweet
    /// schema. Returns how many operations took effect.
    #[pyo3(signature = (
        records, update_ratio = 0.0, delete_ratio = 0.0, dist = "uniform", seed = 0,
        op_kind = "upsert", message_len = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn apply_workload(
        &self,
        py: Python<'_>,
        records: u64,
        update_ratio: f64,
        delete_ratio: f64,
        dist: &str,
        seed: u64,
        op_kind: &str,
        message_len: Option<(usize, usize)>,
    ) -> PyResult<u64> {
        if *self.schema() != Tweet::schema() {
            return Err(PyValueError::new_err("workloads need a dataset created with Dataset.tweets"));
        }
        let spec = workload_spec(records, update_ratio, delete_ratio, dist, seed, op_kind, message_len)?;
        py.allow_threads(|| -> auxlsm_core::Result<u64> {
            let mut applied = 0;
            for op in gen_stream(&spec)? {
                applied += self.inner.apply_operation(&op)? as u64;
            }
            Ok(applied)
        })
        .map_err(to_py_err)
    }
}

impl PyDataset {
    #[allow(clippy::too_many_arguments)]
    fn open(
        path: PathBuf,
        schema: DatasetSchema,
        strategy_name: &str,
        repair: &str,
        cc: &str,
        page_size: usize,
        memory_budget_bytes: usize,
        cache_bytes: usize,
        bloom: &str,
        auto_maintenance: bool,
    ) -> PyResult<Self> {
        let mut cfg = DatasetConfig::new(path, schema, strategy(strategy_name, repair, cc)?);
        cfg.page_size = page_size;
        cfg.memory_budget_bytes = memory_budget_bytes;
        cfg.cache_bytes = cache_bytes;
        cfg.auto_maintenance = auto_maintenance;
        cfg.bloom = match bloom {
            "standard" => BloomConfig::standard(),
            "blocked" => BloomConfig::blocked(),
            _ => return Err(PyValueError::new_err(format!("unknown bloom `{bloom}` (standard, blocked)"))),
        };
        Ok(PyDataset {
            inner: Dataset::create(cfg).map_err(to_py_err)?,
        })
    }
}

fn op_tuple(py: Python<'_>, op: &str, r: &Record) -> PyObject {
    let values = PyList::new_bound(py, r.fields.iter().map(|v| from_value(py, v)));
    (op, r.key.0, values).into_py(py)
}

/// Generates a tweet workload as a list of `(op, key, values)` where `op` is
/// `insert`, `upsert` or `delete` and `values` is `None` for deletes.
#[pyfunction]
#[pyo3(signature = (
    records, update_ratio = 0.0, delete_ratio = 0.0, dist = "uniform", seed = 0, op_kind = "upsert",
    message_len = None
))]
#[allow(clippy::too_many_arguments)]
fn workload(
    py: Python<'_>,
    records: u64,
    update_ratio: f64,
    delete_ratio: f64,
    dist: &str,
    seed: u64,
    op_kind: &str,
    message_len: Option<(usize, usize)>,
) -> PyResult<Vec<PyObject>> {
    let spec = workload_spec(records, update_ratio, delete_ratio, dist, seed, op_kind, message_len)?;
    let ops = gen_stream(&spec).map_err(to_py_err)?;
    Ok(ops
        .map(|op| -> PyObject {
            match op {
                Operation::Insert(t) => op_tuple(py, "insert", &t.to_record()),
                Operation::Upsert(t) => op_tuple(py, "upsert", &t.to_record()),
                Operation::Delete(k) => ("delete", k.0, py.None()).into_py(py),
            }
        })
        .collect())
}

/// Replays a tweet workload into a fresh dataset at `path` and into a
/// reference model, then compares every query path. Returns the list of
/// mismatches; empty means the engine agreed everywhere.
#[pyfunction]
#[pyo3(signature = (
    path, strategy = "validation", repair = "none", cc = "lock", records = 10_000, update_ratio = 0.0,
    delete_ratio = 0.0, dist = "uniform", seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn verify_workload(
    py: Python<'_>,
    path: PathBuf,
    strategy: &str,
    repair: &str,
    cc: &str,
    records: u64,
    update_ratio: f64,
    delete_ratio: f64,
    dist: &str,
    seed: u64,
) -> PyResult<Vec<String>> {
    let st = self::strategy(strategy, repair, cc)?;
    let spec = workload_spec(records, update_ratio, delete_ratio, dist, seed, "upsert", Some((16, 64)))?;
    py.allow_threads(|| -> auxlsm_core::Result<Vec<String>> {
        let mut cfg = DatasetConfig::new(path, Tweet::schema(), st);
        cfg.page_size = 4096;
        cfg.memory_budget_bytes = 256 << 10;
        let ds = Dataset::create(cfg)?;
        let mut oracle = Oracle::new(Tweet::schema());
        for op in gen_stream(&spec)? {
            ds.apply_operation(&op)?;
            oracle.apply(&op);
        }
        let mut ranges = Vec::new();
        for sel in [0.001, 0.01, 0.1] {
            for (lo, hi) in gen_query_set(sel, 2, seed)? {
                ranges.push((0, KeyRange::int(lo, hi)));
            }
        }
        let n = records as i64;
        let plan = VerifyPlan {
            keys: oracle.keys().chain((0..50).map(PrimaryKey)).collect(),
            ranges,
            filters: vec![FilterRange::new(0, n / 10), FilterRange::new(i64::MIN, i64::MAX)],
            lookup: vec![LookupOptions::default(), LookupOptions::naive()],
        };
        verify(&ds, &oracle, &plan)
    })
    .map_err(to_py_err)
}

#[pymodule]
#[pyo3(name = "auxlsm")]
fn auxlsm_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(workload, m)?)?;
    m.add_function(wrap_pyfunction!(verify_workload, m)?)?;
    m.add("USER_ID_MAX", auxlsm_core::workload::USER_ID_MAX)?;
    Ok(())
}
