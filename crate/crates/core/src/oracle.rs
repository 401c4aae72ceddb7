//! Reference model: a plain map of live records, queried by brute force.

use std::collections::BTreeMap;

use crate::dataset::{Dataset, StrategyConfig};
use crate::error::Result;
use crate::query::{KeyRange, LookupOptions, ValidationMethod};
use crate::record::{DatasetSchema, Record};
use crate::types::{FilterRange, PrimaryKey};
use crate::workload::Operation;

#[derive(Clone, Debug)]
pub struct Oracle {
    schema: DatasetSchema,
    records: BTreeMap<PrimaryKey, Record>,
}

impl Oracle {
    pub fn new(schema: DatasetSchema) -> Self {
        Oracle {
            schema,
            records: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, rec: Record) -> bool {
        if self.records.contains_key(&rec.key) {
            return false;
        }
        self.records.insert(rec.key, rec);
        true
    }

    pub fn upsert(&mut self, rec: Record) {
        self.records.insert(rec.key, rec);
    }

    pub fn delete(&mut self, key: PrimaryKey) -> bool {
        self.records.remove(&key).is_some()
    }

    pub fn apply(&mut self, op: &Operation) -> bool {
        match op {
            Operation::Insert(t) => self.insert(t.to_record()),
            Operation::Upsert(t) => {
                self.upsert(t.to_record());
                true
            }
            Operation::Delete(k) => self.delete(*k),
        }
    }

    pub fn get(&self, key: PrimaryKey) -> Option<&Record> {
        self.records.get(&key)
    }

    pub fn keys(&self) -> impl DoubleEndedIterator<Item = PrimaryKey> + '_ {
        self.records.keys().copied()
    }

    pub fn records(&self) -> impl Iterator<Item = &Record> {
        self.records.values()
    }

    /// Records whose secondary key `index` lies in `range`, by primary key.
    pub fn secondary_range(&self, index: usize, range: &KeyRange) -> Vec<Record> {
        self.records
            .values()
            .filter(|r| range.contains(&self.schema.secondary_key(index, r)))
            .cloned()
            .collect()
    }

    /// `(secondary key, primary key)` pairs in index order.
    pub fn index_only(&self, index: usize, range: &KeyRange) -> Vec<(Vec<u8>, PrimaryKey)> {
        let mut v: Vec<_> = self
            .records
            .values()
            .map(|r| (self.schema.secondary_key(index, r), r.key))
            .filter(|(sk, _)| range.contains(sk))
            .collect();
        v.sort();
        v
    }

    pub fn filtered_scan(&self, filter: FilterRange, secondary: Option<(usize, &KeyRange)>) -> Vec<Record> {
        self.records
            .values()
            .filter(|r| match self.schema.extract_filter_key(r).ok().flatten() {
                Some(v) => filter.contains(v),
                None => true,
            })
            .filter(|r| secondary.is_none_or(|(i, kr)| kr.contains(&self.schema.secondary_key(i, r))))
            .cloned()
            .collect()
    }
}

/// What [`verify`] compares between a dataset and an oracle.
#[derive(Clone, Debug, Default)]
pub struct VerifyPlan {
    /// Keys for point lookups, live or not.
    pub keys: Vec<PrimaryKey>,
    /// Secondary index ranges.
    pub ranges: Vec<(usize, KeyRange)>,
    /// Range-filter predicates for primary scans.
    pub filters: Vec<FilterRange>,
    /// Lookup option sets every secondary query runs under.
    pub lookup: Vec<LookupOptions>,
}

/// Validation methods that return exact answers under a strategy.
pub fn exact_methods(strategy: &StrategyConfig) -> Vec<ValidationMethod> {
    let mut v = vec![ValidationMethod::Direct, ValidationMethod::Timestamp];
    if !strategy.lazy_secondaries() {
        v.push(ValidationMethod::None);
    }
    v
}

fn first_divergence<T: PartialEq + std::fmt::Debug>(
    what: &str,
    got: &[T],
    want: &[T],
    key: impl Fn(&T) -> String,
) -> Option<String> {
    if got == want {
        return None;
    }
    let i = got.iter().zip(want).position(|(a, b)| a != b).unwrap_or(got.len().min(want.len()));
    let at = got.get(i).or(want.get(i)).map(&key).unwrap_or_default();
    Some(format!(
        "{what}: {} results, oracle {}; first divergence at position {i}, key {at}",
        got.len(),
        want.len()
    ))
}

/// Runs every query path of `ds` and reports mismatches against `oracle`.
/// An empty result means the two agree.
pub fn verify(ds: &Dataset, oracle: &Oracle, plan: &VerifyPlan) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for &k in &plan.keys {
        let got = ds.get(k)?;
        if got.as_ref() != oracle.get(k) {
            out.push(format!("get({k}): engine {:?}, oracle {:?}", got.is_some(), oracle.get(k).is_some()));
        }
    }
    let rkey = |r: &Record| r.key.to_string();
    let default_opts = [LookupOptions::default()];
    let lookups = if plan.lookup.is_empty() { &default_opts[..] } else { &plan.lookup[..] };
    for (index, range) in &plan.ranges {
        let want = oracle.secondary_range(*index, range);
        let want_pairs = oracle.index_only(*index, range);
        for opts in lookups {
            for method in exact_methods(&ds.strategy()) {
                let mut got = ds.query_secondary(*index, range, method, opts)?.items;
                got.sort_by_key(|r| r.key);
                let what = format!("secondary {index} {range:?} {method:?} {opts:?}");
                out.extend(first_divergence(&what, &got, &want, rkey));
                if method != ValidationMethod::Direct {
                    let mut pairs = ds.query_index_only(*index, range, method, opts)?.items;
                    pairs.sort();
                    let what = format!("index-only {index} {range:?} {method:?}");
                    out.extend(first_divergence(&what, &pairs, &want_pairs, |p| p.1.to_string()));
                }
            }
        }
        for f in &plan.filters {
            let mut got = ds.filtered_scan(*f, Some((*index, range)))?.items;
            got.sort_by_key(|r| r.key);
            let want = oracle.filtered_scan(*f, Some((*index, range)));
            out.extend(first_divergence(&format!("scan {f:?} + secondary {index}"), &got, &want, rkey));
        }
    }
    for f in &plan.filters {
        let mut got = ds.filtered_scan(*f, None)?.items;
        got.sort_by_key(|r| r.key);
        let want = oracle.filtered_scan(*f, None);
        out.extend(first_divergence(&format!("scan {f:?}"), &got, &want, rkey));
    }
    Ok(out)
}
