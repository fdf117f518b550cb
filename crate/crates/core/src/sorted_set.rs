//! Persistent sorted sets over batch-parallel 2-3 trees. Every operation
//! treats the smaller set as an input batch of searches, insertions, or
//! deletions against the larger one, runs it persistently, and returns a new
//! handle; published structure is never mutated.

use crate::ptree::{coalesce, PTree, RawAccess, RawOp};
use crate::runtime::Ctx;
use crate::{Error, Item};

/// Immutable finished sorted instance; operations return fresh handles and
/// share structure where possible.
pub struct SetHandle<K> {
    tree: PTree<K>,
}

impl<K> Clone for SetHandle<K> {
    fn clone(&self) -> Self {
        SetHandle { tree: self.tree.clone() }
    }
}

impl<K: Item> SetHandle<K> {
    pub fn from_sorted(ctx: &Ctx, keys: Vec<K>) -> Result<Self, Error> {
        Ok(SetHandle { tree: PTree::from_sorted_keys(ctx, keys, false)? })
    }

    pub fn empty() -> Self {
        SetHandle { tree: PTree::empty(false) }
    }

    pub fn size(&self) -> usize {
        self.tree.size()
    }

    pub fn keys(&self) -> Vec<K> {
        self.tree.keys()
    }

    pub fn tree(&self) -> &PTree<K> {
        &self.tree
    }

    pub fn serialize_csv(&self) -> String {
        self.tree.serialize_csv()
    }

    pub fn validate(&self) -> crate::ptree::ValidationReport {
        self.tree.validate(true)
    }

    /// Items common to both sets.
    pub async fn intersection(&self, ctx: &Ctx, other: &SetHandle<K>) -> SetHandle<K> {
        let (small, large) = order(self, other);
        if small.size() == 0 {
            return SetHandle::empty();
        }
        let plan = batch_plan(small, RawOp::Search);
        let _probe = large.tree.execute_persistent(ctx, &plan).await;
        let found: Vec<K> = plan_hits(&plan);
        SetHandle {
            tree: PTree::from_sorted_keys(ctx, found, false).expect("sorted subset"),
        }
    }

    /// Items in either set.
    pub async fn union(&self, ctx: &Ctx, other: &SetHandle<K>) -> SetHandle<K> {
        let (small, large) = order(self, other);
        if small.size() == 0 {
            return large.clone();
        }
        let plan = batch_plan(small, RawOp::Insert(0));
        let tree = large.tree.execute_persistent(ctx, &plan).await;
        SetHandle { tree }
    }

    /// Items of `self` not in `other`.
    pub async fn difference(&self, ctx: &Ctx, other: &SetHandle<K>) -> SetHandle<K> {
        if self.size() == 0 || other.size() == 0 {
            return self.clone();
        }
        if other.size() <= self.size() {
            let plan = batch_plan(other, RawOp::Delete);
            let tree = self.tree.execute_persistent(ctx, &plan).await;
            SetHandle { tree }
        } else {
            // self is the smaller side: self \ other = self \ (self ∩ other)
            let common = self.intersection(ctx, other).await;
            if common.size() == 0 {
                return self.clone();
            }
            let plan = batch_plan(&common, RawOp::Delete);
            let tree = self.tree.execute_persistent(ctx, &plan).await;
            SetHandle { tree }
        }
    }
}

fn order<'a, K: Item>(a: &'a SetHandle<K>, b: &'a SetHandle<K>) -> (&'a SetHandle<K>, &'a SetHandle<K>) {
    if a.size() <= b.size() {
        (a, b)
    } else {
        (b, a)
    }
}

fn batch_plan<K: Item>(src: &SetHandle<K>, op: RawOp) -> crate::ptree::AccessPlan<K> {
    let raws: Vec<RawAccess<K>> =
        src.keys().into_iter().map(|key| RawAccess { key, op: op.clone() }).collect();
    coalesce(raws).expect("set keys are sorted")
}

fn plan_hits<K: Item>(plan: &crate::ptree::AccessPlan<K>) -> Vec<K> {
    plan.effs
        .iter()
        .filter(|e| e.outcome().expect("plan executed").was_present)
        .map(|e| e.key.clone())
        .collect()
}
