use std::collections::HashMap;

use parking_lot::{Condvar, Mutex};

use crate::types::PrimaryKey;

#[derive(Default)]
struct Holders {
    shared: u32,
    exclusive: bool,
}

/// Record-level shared/exclusive locks keyed by primary key.
#[derive(Default)]
pub struct LockTable {
    table: Mutex<HashMap<PrimaryKey, Holders>>,
    released: Condvar,
}

impl std::fmt::Debug for LockTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LockTable")
            .field("held", &self.table.lock().len())
            .finish()
    }
}

impl LockTable {
    pub fn new() -> Self {
        LockTable::default()
    }

    pub fn exclusive(&self, key: PrimaryKey) -> KeyGuard<'_> {
        let mut t = self.table.lock();
        loop {
            let h = t.entry(key).or_default();
            if !h.exclusive && h.shared == 0 {
                h.exclusive = true;
                break;
            }
            self.released.wait(&mut t);
        }
        KeyGuard {
            table: self,
            key,
            exclusive: true,
        }
    }

    pub fn shared(&self, key: PrimaryKey) -> KeyGuard<'_> {
        let mut t = self.table.lock();
        loop {
            let h = t.entry(key).or_default();
            if !h.exclusive {
                h.shared += 1;
                break;
            }
            self.released.wait(&mut t);
        }
        KeyGuard {
            table: self,
            key,
            exclusive: false,
        }
    }

    fn release(&self, key: PrimaryKey, exclusive: bool) {
        let mut t = self.table.lock();
        if let Some(h) = t.get_mut(&key) {
            if exclusive {
                h.exclusive = false;
            } else {
                h.shared -= 1;
            }
            if !h.exclusive && h.shared == 0 {
                t.remove(&key);
            }
        }
        drop(t);
        self.released.notify_all();
    }

    /// Number of keys with at least one holder.
    pub fn held(&self) -> usize {
        self.table.lock().len()
    }
}

pub struct KeyGuard<'a> {
    table: &'a LockTable,
    key: PrimaryKey,
    exclusive: bool,
}

impl Drop for KeyGuard<'_> {
    fn drop(&mut self) {
        self.table.release(self.key, self.exclusive);
    }
}
