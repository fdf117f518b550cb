//! Structural validator for quiescent trees: 2-3 shape, equal leaf depth,
//! sorted order, bound agreement, empty inboxes, and exact recomputation of
//! every non-root spine node's spine structure.

use super::node::TreeNode;
use super::seq::NodeRef;
use crate::Item;
use std::sync::Arc;

/// Violations found by [`validate`]; empty means the tree is valid.
#[derive(Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: &str, msg: String) {
        if self.violations.len() < 64 {
            self.violations.push(format!("at {path}: {msg}"));
        }
    }
}

pub(crate) fn validate<K: Item>(
    root: &Option<NodeRef<K>>,
    expected_size: usize,
    sorted: bool,
) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let Some(root) = root else {
        if expected_size != 0 {
            rep.violations.push(format!("empty tree but recorded size {expected_size}"));
        }
        return rep;
    };
    let mut items: Vec<K> = Vec::new();
    walk(root, "root", &mut rep, &mut items);
    if items.len() != expected_size {
        rep.violations
            .push(format!("leaf count {} differs from recorded size {}", items.len(), expected_size));
    }
    if sorted {
        for i in 1..items.len() {
            if items[i - 1] >= items[i] {
                rep.violations.push(format!("leaf items not strictly increasing at rank {i}"));
                break;
            }
        }
    }
    // spine structure of every non-root spine node
    check_spine(root, true, &mut rep);
    check_spine(root, false, &mut rep);
    rep
}

fn walk<K: Item>(v: &NodeRef<K>, path: &str, rep: &mut ValidationReport, items: &mut Vec<K>) {
    if let Some(q) = v.join_aux.lock().as_ref() {
        // a finished tree has no queued trees anywhere
        if !q.inbox.debug_is_empty() {
            rep.push(path, "nonempty inbox on a quiescent node".into());
        }
    }
    {
        let q = v.queued.lock();
        if q.joined.is_some() || q.overflow.is_some() {
            rep.push(path, "node still carries queued-tree state".into());
        }
    }
    if v.is_leaf() {
        if v.height() != 0 {
            rep.push(path, format!("leaf with height {}", v.height()));
        }
        let key = v.key().unwrap().clone();
        let st = v.state.lock();
        if st.first.as_ref() != Some(&key) || st.last.as_ref() != Some(&key) {
            rep.push(path, "leaf bounds do not equal its item".into());
        }
        items.push(key);
        return;
    }
    let kids = v.kids();
    if kids.len() < 2 {
        rep.push(path, format!("internal node with {} children (unfilled blank?)", kids.len()));
        return;
    }
    for (i, k) in kids.iter().enumerate() {
        if k.height() + 1 != v.height() {
            rep.push(path, format!("child {i} height {} under height {}", k.height(), v.height()));
        }
    }
    let first_before = items.len();
    for (i, k) in kids.iter().enumerate() {
        walk(k, &format!("{path}.{i}"), rep, items);
    }
    let st = v.state.lock();
    if items.len() > first_before {
        if st.first.as_ref() != Some(&items[first_before]) {
            rep.push(path, format!("first {:?} does not match leftmost leaf", st.first));
        }
        if st.last.as_ref() != items.last() {
            rep.push(path, format!("last {:?} does not match rightmost leaf", st.last));
        }
    }
}

/// Writes by-definition spine structures into every non-root spine node of
/// a freshly built tree, making it finished.
pub(crate) fn set_initial_spines<K: Item>(root: &NodeRef<K>) {
    for left in [true, false] {
        let mut cur = root.clone();
        while !cur.is_leaf() {
            let kids = cur.kids();
            let child = if left { kids.first().unwrap().clone() } else { kids.last().unwrap().clone() };
            let s = spine_by_definition(&child, left);
            child.state.lock().spine = s;
            cur = child;
        }
    }
}

/// Recomputed spine structure of `v` from scratch: child counts along the
/// given spine, least-significant bit at the leaf.
pub(crate) fn spine_by_definition<K: Item>(v: &NodeRef<K>, left: bool) -> u64 {
    let mut acc = 0u64;
    let mut cur = v.clone();
    while !cur.is_leaf() {
        let kids = cur.kids();
        acc += (kids.len() as u64 - 2) << (cur.height() - 1);
        cur = if left { kids.first().unwrap().clone() } else { kids.last().unwrap().clone() };
    }
    acc
}

fn check_spine<K: Item>(root: &NodeRef<K>, left: bool, rep: &mut ValidationReport) {
    let mut cur = root.clone();
    let mut depth = 0;
    while !cur.is_leaf() {
        let kids = cur.kids();
        let child = if left { kids.first().unwrap().clone() } else { kids.last().unwrap().clone() };
        let expect = spine_by_definition(&child, left);
        let got = child.spine();
        if got != expect {
            rep.push(
                &format!("{}-spine depth {}", if left { "left" } else { "right" }, depth + 1),
                format!("stored spine {got:#b} but recomputed {expect:#b}"),
            );
        }
        cur = child;
        depth += 1;
    }
}

/// Indented structural dump for failure triage.
pub(crate) fn debug_dump<K: Item>(root: &Option<NodeRef<K>>) -> String {
    let mut out = String::new();
    fn rec<K: Item>(v: &Arc<TreeNode<K>>, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        if v.is_leaf() {
            out.push_str(&format!("{pad}leaf {:?}\n", v.key().unwrap()));
            return;
        }
        out.push_str(&format!(
            "{pad}node h={} spine={:#b} first={:?} last={:?}\n",
            v.height(),
            v.spine(),
            v.first(),
            v.last()
        ));
        for k in v.kids() {
            rec(&k, depth + 1, out);
        }
    }
    match root {
        None => out.push_str("(empty)\n"),
        Some(r) => rec(r, 0, &mut out),
    }
    out
}
