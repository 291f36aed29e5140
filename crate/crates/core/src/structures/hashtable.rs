//! Fixed-size hash set: an array of independent sorted lists.

use std::rc::Rc;

use crate::error::Result;
use crate::simcore::Machine;

use super::list::{CaList, LazyList};

pub const BUCKETS: usize = 128;

pub fn bucket_of(key: u64) -> usize {
    (key % BUCKETS as u64) as usize
}

#[derive(Debug, Clone)]
pub struct HashTable<L> {
    buckets: Rc<[L]>,
}

impl<L> HashTable<L> {
    pub fn bucket(&self, key: u64) -> &L {
        &self.buckets[bucket_of(key)]
    }

    pub fn buckets(&self) -> &[L] {
        &self.buckets
    }
}

impl HashTable<CaList> {
    pub fn create(m: &mut Machine) -> Result<Self> {
        let buckets = (0..BUCKETS).map(|_| CaList::create(m)).collect::<Result<Vec<_>>>()?;
        Ok(HashTable { buckets: buckets.into() })
    }

    pub fn keys(&self, m: &Machine) -> Vec<u64> {
        let mut out: Vec<u64> = self.buckets.iter().flat_map(|b| b.keys(m)).collect();
        out.sort_unstable();
        out
    }

    pub fn check(&self, m: &Machine) -> std::result::Result<(), String> {
        self.buckets.iter().try_for_each(|b| b.check(m))
    }
}

impl HashTable<LazyList> {
    pub fn create(m: &mut Machine) -> Result<Self> {
        let buckets = (0..BUCKETS).map(|_| LazyList::create(m)).collect::<Result<Vec<_>>>()?;
        Ok(HashTable { buckets: buckets.into() })
    }

    pub fn keys(&self, m: &Machine) -> Vec<u64> {
        let mut out: Vec<u64> = self.buckets.iter().flat_map(|b| b.keys(m)).collect();
        out.sort_unstable();
        out
    }

    pub fn check(&self, m: &Machine) -> std::result::Result<(), String> {
        self.buckets.iter().try_for_each(|b| b.check(m))
    }
}
