//! Spine-structure arithmetic. The spine structure of a node is the integer
//! Σ (c_k − 2)·2^(k−1) over the child counts c_k along its left or right
//! spine, counted from the leaf upward; it predicts in O(1) whether a join
//! overflows and what the join's spine structures are, without building it.

use super::node::TreeNode;
use crate::Item;
use std::sync::Arc;

/// Left spine structure of a root node, from its children's spine fields.
pub fn lspine<K: Item>(x: &Arc<TreeNode<K>>) -> u64 {
    if x.height() == 0 {
        return 0;
    }
    let st = x.state.lock();
    let left = st.left.as_ref().expect("internal node without left child");
    left.spine() + if st.mid.is_some() { left.weight() } else { 0 }
}

/// Right spine structure of a root node, from its children's spine fields.
pub fn rspine<K: Item>(x: &Arc<TreeNode<K>>) -> u64 {
    if x.height() == 0 {
        return 0;
    }
    let st = x.state.lock();
    let right = st.right.as_ref().expect("internal node without right child");
    right.spine() + if st.mid.is_some() { right.weight() } else { 0 }
}

/// Outcome of joining two 2-3 trees, computed from weights and spine
/// structures alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JoinShape {
    /// true iff the join is taller than both operands
    pub overflow: bool,
    /// left spine structure of the join
    pub lj: u64,
    /// right spine structure of the join
    pub rj: u64,
}

/// Determines whether the join X+Y overflows and computes its spine
/// structures, given the operands' weights and spine structures. Requires
/// `xw >= yw`; [`join_spines_any`] wraps the symmetric case.
pub fn join_spines(xw: u64, lx: u64, rx: u64, yw: u64, ly: u64, ry: u64) -> JoinShape {
    assert!(xw >= yw, "join_spines requires the left operand to be at least as tall");
    assert!(xw.is_power_of_two() && yw.is_power_of_two());
    if xw == yw {
        // equal heights always overflow under a fresh 2-child root
        return JoinShape { overflow: true, lj: lx, rj: ry };
    }
    // X taller: Y is pushed down X's right spine
    let overflow = rx + yw >= xw;
    let r_prime = rx - rx % yw + yw + ry;
    let rj = if overflow { r_prime % xw } else { r_prime };
    // the join's right child weight: xw if the root split, else xw/2
    let jr_weight = if overflow { xw } else { xw / 2 };
    let lj = lx % (xw / 2) + (rj - rj % jr_weight);
    let _ = ly;
    JoinShape { overflow, lj, rj }
}

/// `join_spines` for operands in either height order.
pub fn join_spines_any(xw: u64, lx: u64, rx: u64, yw: u64, ly: u64, ry: u64) -> JoinShape {
    if xw >= yw {
        join_spines(xw, lx, rx, yw, ly, ry)
    } else {
        // mirror image: X is pushed down Y's left spine
        let overflow = ly + xw >= yw;
        let l_prime = ly - ly % xw + xw + lx;
        let lj = if overflow { l_prime % yw } else { l_prime };
        let jl_weight = if overflow { yw } else { yw / 2 };
        let rj = ry % (yw / 2) + (lj - lj % jl_weight);
        let _ = rx;
        JoinShape { overflow, lj, rj }
    }
}
