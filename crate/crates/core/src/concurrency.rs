//! Protocols that let mutable-bitmap writers keep deleting while the primary
//! and primary key components they touch are being merged.
//!
//! Lock method: the builder takes a shared lock on each key, re-checks the
//! live bitmap and copies only valid entries, advancing `scanned_key`. A
//! writer that deletes a key at or below `scanned_key` also marks the copy.
//!
//! Side-file method: the builder scans bitmap snapshots taken while writers
//! are drained. Writers log deletes to the side-file; catch-up replays the
//! sorted log on the new component. Once the log is closed writers mark the
//! new component directly.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use parking_lot::Mutex;

use crate::bitmap::{Mutability, ValidityBitmap};
use crate::component::DiskComponent;
use crate::dataset::{CcMethod, Dataset, KeyGuard};
use crate::error::{Error, Result};
use crate::tree::{LsmTree, MergePlan, SourcedEntry};
use crate::types::{IndexEntry, PrimaryKey};

/// Test instrumentation points of a build.
pub trait BuildHooks: Send + Sync {
    /// After links are installed (and, for side-file builds, snapshots taken).
    fn after_initialize(&self) {}
    /// Before the builder examines `key`; no locks are held.
    fn before_copy(&self, _key: PrimaryKey) {}
    /// After `key` was copied and its lock released.
    fn after_copy(&self, _key: PrimaryKey) {}
    /// Between the scan and catch-up of a side-file build.
    fn before_catch_up(&self) {}
}

#[derive(Debug)]
struct LinkState {
    scanned_key: Option<PrimaryKey>,
    copied: HashMap<PrimaryKey, u64>,
    order: Vec<PrimaryKey>,
    side_file: Vec<PrimaryKey>,
    closed: bool,
}

/// Old-to-new pointer installed on every input of an in-progress build.
#[derive(Debug)]
pub struct BuildLink {
    method: CcMethod,
    state: Mutex<LinkState>,
    /// Bits of the new component, sized to the input entry total.
    new_bits: ValidityBitmap,
}

impl BuildLink {
    fn new(method: CcMethod, capacity: u64) -> Self {
        BuildLink {
            method,
            state: Mutex::new(LinkState {
                scanned_key: None,
                copied: HashMap::new(),
                order: Vec::new(),
                side_file: Vec::new(),
                closed: false,
            }),
            new_bits: ValidityBitmap::new(capacity, Mutability::Mutable),
        }
    }

    pub fn method(&self) -> CcMethod {
        self.method
    }

    pub fn scanned_key(&self) -> Option<PrimaryKey> {
        self.state.lock().scanned_key
    }

    /// Keys currently logged in the side-file.
    pub fn side_file(&self) -> Vec<PrimaryKey> {
        self.state.lock().side_file.clone()
    }

    pub fn side_file_closed(&self) -> bool {
        self.state.lock().closed
    }

    fn record_copy(&self, key: PrimaryKey, ordinal: u64) {
        let mut s = self.state.lock();
        s.copied.insert(key, ordinal);
        s.order.push(key);
        if s.scanned_key.is_none_or(|k| key > k) {
            s.scanned_key = Some(key);
        }
    }

    fn mark_copy(&self, s: &LinkState, key: PrimaryKey) -> Result<()> {
        if let Some(&ord) = s.copied.get(&key) {
            self.new_bits.set_invalid(ord)?;
        }
        Ok(())
    }

    /// Writer side of a delete whose old version lies in an input.
    fn on_delete(&self, key: PrimaryKey) -> Result<()> {
        let mut s = self.state.lock();
        match self.method {
            CcMethod::Lock => {
                if s.scanned_key.is_some_and(|k| key <= k) {
                    self.mark_copy(&s, key)?;
                }
            }
            CcMethod::SideFile => {
                if s.closed {
                    self.mark_copy(&s, key)?;
                } else {
                    s.side_file.push(key);
                }
            }
        }
        Ok(())
    }

    /// Try to append after close: fails deterministically.
    pub fn try_append(&self, key: PrimaryKey) -> bool {
        let mut s = self.state.lock();
        if s.closed {
            return false;
        }
        s.side_file.push(key);
        true
    }

    /// Closes the side-file and replays its sorted contents.
    fn catch_up(&self) -> Result<usize> {
        let mut s = self.state.lock();
        s.closed = true;
        let mut keys = std::mem::take(&mut s.side_file);
        keys.sort_unstable();
        keys.dedup();
        for &k in &keys {
            self.mark_copy(&s, k)?;
        }
        Ok(keys.len())
    }

    fn copied_order(&self) -> Vec<PrimaryKey> {
        self.state.lock().order.clone()
    }
}

/// Marks the disk-resident version at `ordinal` of primary key component
/// `component` deleted, following any in-progress build.
pub fn invalidate(
    _ds: &Dataset,
    component: &Arc<DiskComponent>,
    ordinal: u64,
    key: PrimaryKey,
) -> Result<()> {
    component.bitmap_set_invalid(ordinal)?;
    let link = component.successor.lock().clone();
    if let Some(link) = link {
        link.on_delete(key)?;
    }
    Ok(())
}

/// Outcome of a protocol-driven merge.
#[derive(Debug)]
pub struct BuildReport {
    pub primary: Arc<DiskComponent>,
    pub pk: Arc<DiskComponent>,
    pub side_file_keys: usize,
}

/// Merges aligned primary key and primary components of a mutable-bitmap
/// dataset using the configured protocol.
pub fn merge_mutable(
    ds: &Dataset,
    pk_parts: &[Arc<DiskComponent>],
    primary_parts: &[Arc<DiskComponent>],
) -> Result<BuildReport> {
    let aligned = pk_parts.len() == primary_parts.len()
        && pk_parts
            .iter()
            .zip(primary_parts)
            .all(|(a, b)| a.id() == b.id() && a.entry_count() == b.entry_count());
    if !aligned {
        return Err(Error::Build(
            "primary and primary key components are not aligned".into(),
        ));
    }
    let started = Instant::now();
    let (pk, primary) = (ds.pk_index(), ds.primary());
    let _g1 = pk.lock_merges();
    let _g2 = primary.lock_merges();
    let pk_plan = pk.plan_merge(pk_parts)?;
    let pr_plan = primary.plan_merge(primary_parts)?;
    let capacity = primary_parts.iter().map(|c| c.entry_count()).sum();
    let method = ds.strategy().cc;
    let link = Arc::new(BuildLink::new(method, capacity));
    let hooks = ds.build_hooks();

    let install_links = || {
        for c in pk_parts.iter().chain(primary_parts) {
            *c.successor.lock() = Some(link.clone());
        }
    };

    let new_primary = match method {
        CcMethod::Lock => {
            install_links();
            if let Some(h) = &hooks {
                h.after_initialize();
            }
            let held: RefCell<Option<KeyGuard<'_>>> = RefCell::new(None);
            let mut keep = |item: &SourcedEntry| -> Result<bool> {
                let key = item.entry.pk();
                if let Some(h) = &hooks {
                    h.before_copy(key);
                }
                let guard = ds.locks().shared(key);
                let valid = match item.ordinal {
                    Some(ord) if !item.entry.anti_matter => {
                        pr_plan.parts[item.source].bitmap_is_valid(ord)?
                    }
                    _ => true,
                };
                if valid {
                    *held.borrow_mut() = Some(guard);
                }
                Ok(valid)
            };
            let copied = |ord: u64, e: &IndexEntry| -> Result<()> {
                link.record_copy(e.pk(), ord);
                held.borrow_mut().take();
                if let Some(h) = &hooks {
                    h.after_copy(e.pk());
                }
                Ok(())
            };
            let bitmaps = vec![None; pr_plan.parts.len()];
            primary.run_merge(&pr_plan, bitmaps, &mut keep, None, copied)?
        }
        CcMethod::SideFile => {
            let snapshots: Vec<Option<Arc<ValidityBitmap>>> = {
                let _x = ds.dataset_exclusive();
                install_links();
                primary_parts
                    .iter()
                    .map(|c| c.bitmap().map(|b| Arc::new(b.snapshot())))
                    .collect()
            };
            if let Some(h) = &hooks {
                h.after_initialize();
            }
            let copied = |ord: u64, e: &IndexEntry| -> Result<()> {
                link.record_copy(e.pk(), ord);
                if let Some(h) = &hooks {
                    h.after_copy(e.pk());
                }
                Ok(())
            };
            let mut keep = |item: &SourcedEntry| -> Result<bool> {
                if let Some(h) = &hooks {
                    h.before_copy(item.entry.pk());
                }
                Ok(true)
            };
            primary.run_merge(&pr_plan, snapshots, &mut keep, None, copied)?
        }
    };
    let new_pk = build_follower(pk, &pk_plan, &link.copied_order())?;
    if new_pk.entry_count() != new_primary.entry_count() {
        return Err(Error::Build(format!(
            "primary key merge produced {} entries, primary {}",
            new_pk.entry_count(),
            new_primary.entry_count()
        )));
    }
    if method == CcMethod::SideFile {
        if let Some(h) = &hooks {
            h.before_catch_up();
        }
    }

    let _x = ds.dataset_exclusive();
    let side_file_keys = if method == CcMethod::SideFile {
        link.catch_up()?
    } else {
        0
    };
    let n = new_primary.entry_count();
    let exact = Arc::new(ValidityBitmap::from_bytes(
        &link.new_bits.to_bytes(n),
        n,
        Mutability::Mutable,
    )?);
    new_primary.attach_bitmap(exact.clone())?;
    new_pk.attach_bitmap(exact)?;
    new_primary.persist_bitmap()?;
    new_pk.persist_bitmap()?;
    pk.install_merge(&pk_plan, new_pk.clone())?;
    primary.install_merge(&pr_plan, new_primary.clone())?;
    drop(_x);
    let elapsed = started.elapsed();
    pk.emit_merge(&pk_plan, &new_pk, elapsed);
    primary.emit_merge(&pr_plan, &new_primary, elapsed);
    Ok(BuildReport {
        primary: new_primary,
        pk: new_pk,
        side_file_keys,
    })
}

/// Builds the primary key component holding exactly the keys the primary
/// build copied, in the same order, so both share ordinals.
fn build_follower(
    tree: &LsmTree,
    plan: &MergePlan,
    order: &[PrimaryKey],
) -> Result<Arc<DiskComponent>> {
    let mut next = 0usize;
    let mut keep = |item: &SourcedEntry| -> Result<bool> {
        if order.get(next) == Some(&item.entry.pk()) {
            next += 1;
            Ok(true)
        } else {
            Ok(false)
        }
    };
    let bitmaps = vec![None; plan.parts.len()];
    tree.run_merge(plan, bitmaps, &mut keep, None, |_, _| Ok(()))
}

#[cfg(test)]
mod tests;
