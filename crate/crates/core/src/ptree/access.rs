//! Access batches: raw access sequences, coalescing of per-key runs into one
//! effective access each, and routing of effective outcomes back to the
//! original accesses.

use super::node::{Payload, TreeNode};
use crate::batch::Batch;
use crate::{Error, Item};
use std::sync::{Arc, OnceLock};

/// Direct pointer to an item's leaf; stays valid until a structural batch
/// operation removes that item.
pub struct ItemHandle<K> {
    pub(crate) leaf: Arc<TreeNode<K>>,
}

impl<K> Clone for ItemHandle<K> {
    fn clone(&self) -> Self {
        ItemHandle { leaf: self.leaf.clone() }
    }
}

impl<K: Item> ItemHandle<K> {
    pub fn key(&self) -> &K {
        self.leaf.key().expect("handle to a non-leaf")
    }

    pub fn payload(&self) -> Payload {
        self.leaf.payload().expect("handle to a non-leaf")
    }

    pub fn set_payload(&self, p: Payload) {
        self.leaf.set_payload(p);
    }
}

impl<K> PartialEq for ItemHandle<K> {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.leaf, &other.leaf)
    }
}

impl<K> std::fmt::Debug for ItemHandle<K> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ItemHandle@{:p}", Arc::as_ptr(&self.leaf))
    }
}

/// One requested access.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RawOp {
    Search,
    Update(Payload),
    Insert(Payload),
    Delete,
}

#[derive(Clone, Debug)]
pub struct RawAccess<K> {
    pub key: K,
    pub op: RawOp,
}

/// What an effective access does when the key is present.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresentEff {
    Keep,
    Set(Payload),
    Remove,
}

/// Outcome of an effective access: the key's state just before the batch,
/// plus a handle to its leaf in the final tree (when it survives and the
/// tree issues handles).
#[derive(Clone, Debug)]
pub struct EffOutcome<K> {
    pub was_present: bool,
    pub prior_payload: Option<Payload>,
    pub handle: Option<ItemHandle<K>>,
}

/// One coalesced access: the combined effect of a key's raw access run.
pub struct EffAccess<K> {
    pub key: K,
    /// payload to insert when the key is absent (None: leave absent)
    pub absent_eff: Option<Payload>,
    pub present_eff: PresentEff,
    pub(crate) slot: Arc<OnceLock<EffOutcome<K>>>,
}

impl<K: Clone> Clone for EffAccess<K> {
    fn clone(&self) -> Self {
        EffAccess {
            key: self.key.clone(),
            absent_eff: self.absent_eff,
            present_eff: self.present_eff,
            slot: self.slot.clone(),
        }
    }
}

impl<K: Item> EffAccess<K> {
    pub fn outcome(&self) -> Option<&EffOutcome<K>> {
        self.slot.get()
    }

    pub(crate) fn set_outcome(&self, o: EffOutcome<K>) {
        self.slot.set(o).ok().expect("effective access executed twice");
    }

    /// True iff this access structurally changes the tree given the key's
    /// prior presence.
    pub fn mutates(&self, present: bool) -> bool {
        if present {
            matches!(self.present_eff, PresentEff::Remove)
        } else {
            self.absent_eff.is_some()
        }
    }
}

impl<K: std::fmt::Debug> std::fmt::Debug for EffAccess<K> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EffAccess({:?}, absent:{:?}, present:{:?})", self.key, self.absent_eff, self.present_eff)
    }
}

impl<K: PartialEq> PartialEq for EffAccess<K> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<K: Eq> Eq for EffAccess<K> {}

impl<K: PartialOrd> PartialOrd for EffAccess<K> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.key.partial_cmp(&other.key)
    }
}

impl<K: Ord> Ord for EffAccess<K> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

/// Item-sorted batch of effective accesses to distinct keys.
pub type AccessBatch<K> = Batch<EffAccess<K>>;

/// Result of one original access under sequential replay semantics.
#[derive(Clone, Debug)]
pub struct AccessResult<K> {
    /// the key was present when this access ran
    pub found: bool,
    /// payload observed (searches and updates on present keys)
    pub payload: Option<Payload>,
    /// the access changed state (insert on absent, delete/update on present)
    pub applied: bool,
    pub handle: Option<ItemHandle<K>>,
}

/// A coalesced plan: the effective access batch plus the bookkeeping needed
/// to tag every original access afterwards.
pub struct AccessPlan<K> {
    pub batch: AccessBatch<K>,
    pub(crate) effs: Vec<EffAccess<K>>,
    raws: Vec<RawAccess<K>>,
    /// per effective access, the half-open range of raws it covers
    groups: Vec<(usize, usize)>,
}

impl<K: Item> AccessPlan<K> {
    pub fn is_empty(&self) -> bool {
        self.effs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.effs.len()
    }

    /// Net tree-size change once outcomes are recorded.
    pub(crate) fn size_delta(&self) -> i64 {
        let mut d = 0i64;
        for e in &self.effs {
            let out = e.outcome().expect("plan not executed yet");
            if out.was_present {
                if matches!(e.present_eff, PresentEff::Remove) {
                    d -= 1;
                }
            } else if e.absent_eff.is_some() {
                d += 1;
            }
        }
        d
    }
}

/// Coalesces an item-sorted access sequence (duplicate keys allowed, applied
/// in order) into one effective access per distinct key.
pub fn coalesce<K: Item>(raws: Vec<RawAccess<K>>) -> Result<AccessPlan<K>, Error> {
    for i in 1..raws.len() {
        if raws[i - 1].key > raws[i].key {
            return Err(Error::Unsorted(i));
        }
    }
    let mut effs: Vec<EffAccess<K>> = Vec::new();
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < raws.len() {
        let mut j = i + 1;
        while j < raws.len() && raws[j].key == raws[i].key {
            j += 1;
        }
        // simulate the run's effect for both prior states of the key
        let mut absent_eff: Option<Payload> = None;
        let mut present_eff = PresentEff::Keep;
        for r in &raws[i..j] {
            match &r.op {
                RawOp::Search => {}
                RawOp::Update(p) => {
                    if absent_eff.is_some() {
                        absent_eff = Some(*p);
                    }
                    if !matches!(present_eff, PresentEff::Remove) {
                        present_eff = PresentEff::Set(*p);
                    }
                }
                RawOp::Insert(p) => {
                    if absent_eff.is_none() {
                        absent_eff = Some(*p);
                    }
                    if matches!(present_eff, PresentEff::Remove) {
                        present_eff = PresentEff::Set(*p);
                    }
                }
                RawOp::Delete => {
                    absent_eff = None;
                    present_eff = PresentEff::Remove;
                }
            }
        }
        effs.push(EffAccess {
            key: raws[i].key.clone(),
            absent_eff,
            present_eff,
            slot: Arc::new(OnceLock::new()),
        });
        groups.push((i, j));
        i = j;
    }
    let batch = Batch::from_sorted(effs.clone())?;
    Ok(AccessPlan { batch, effs, raws, groups })
}

/// Replays each key's access run against its recorded prior state, tagging
/// every original access with its sequential-semantics result.
pub fn route_results<K: Item>(plan: &AccessPlan<K>) -> Vec<AccessResult<K>> {
    let mut out: Vec<Option<AccessResult<K>>> = vec![None; plan.raws.len()];
    for (e, (lo, hi)) in plan.effs.iter().zip(plan.groups.iter()) {
        let outcome = e.outcome().expect("plan not executed yet");
        let mut present = outcome.was_present;
        let mut payload = outcome.prior_payload;
        for idx in *lo..*hi {
            let r = &plan.raws[idx];
            let res = match &r.op {
                RawOp::Search => AccessResult {
                    found: present,
                    payload: if present { payload } else { None },
                    applied: false,
                    handle: if present { outcome.handle.clone() } else { None },
                },
                RawOp::Update(p) => {
                    let applied = present;
                    if present {
                        payload = Some(*p);
                    }
                    AccessResult {
                        found: present,
                        payload: if applied { Some(*p) } else { None },
                        applied,
                        handle: if present { outcome.handle.clone() } else { None },
                    }
                }
                RawOp::Insert(p) => {
                    let applied = !present;
                    if applied {
                        present = true;
                        payload = Some(*p);
                    }
                    AccessResult {
                        found: !applied,
                        payload,
                        applied,
                        handle: outcome.handle.clone(),
                    }
                }
                RawOp::Delete => {
                    let applied = present;
                    present = false;
                    payload = None;
                    AccessResult { found: applied, payload: None, applied, handle: None }
                }
            };
            out[idx] = Some(res);
        }
    }
    out.into_iter().map(|r| r.expect("every raw access routed")).collect()
}
