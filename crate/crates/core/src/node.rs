//! Addressing of sets in a binary set system.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::MAX_DEPTH;

/// A set in the binary set system, addressed by its distance from the root
/// and its left-to-right position at that scale.
///
/// The derived ordering is lexicographic by scale, then index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub scale: u32,
    pub index: u64,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { scale: 0, index: 0 };

    pub fn new(scale: u32, index: u64) -> Result<Self> {
        if scale > MAX_DEPTH {
            return Err(Error::Domain(format!(
                "scale {scale} exceeds the supported maximum {MAX_DEPTH}"
            )));
        }
        if index >= 1u64 << scale {
            return Err(Error::Domain(format!(
                "index {index} out of range for scale {scale} (must be < 2^{scale})"
            )));
        }
        Ok(NodeId { scale, index })
    }

    /// Constructor for callers that already hold the invariant.
    pub(crate) const fn at(scale: u32, index: u64) -> Self {
        NodeId { scale, index }
    }

    pub fn left(self) -> NodeId {
        NodeId::at(self.scale + 1, self.index << 1)
    }

    pub fn right(self) -> NodeId {
        NodeId::at(self.scale + 1, (self.index << 1) | 1)
    }

    pub fn parent(self) -> Option<NodeId> {
        (self.scale > 0).then(|| NodeId::at(self.scale - 1, self.index >> 1))
    }

    /// True if this node is the left child of its parent. The root is neither.
    pub fn is_left_child(self) -> bool {
        self.scale > 0 && self.index & 1 == 0
    }

    /// Ancestor of this node at `scale`, which must not exceed `self.scale`.
    pub fn ancestor_at(self, scale: u32) -> NodeId {
        debug_assert!(scale <= self.scale);
        NodeId::at(scale, self.index >> (self.scale - scale))
    }

    /// Position of the node in breadth-first (lexicographic) order: `2^scale - 1 + index`.
    pub fn linear_index(self) -> u64 {
        (1u64 << self.scale) - 1 + self.index
    }

    /// Interval `[index / 2^scale, (index + 1) / 2^scale)` covered by this node in `[0, 1)`.
    pub fn unit_interval(self) -> (f64, f64) {
        let width = (-(self.scale as f64)).exp2();
        (self.index as f64 * width, (self.index + 1) as f64 * width)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.scale, self.index)
    }
}

/// All nodes at scales `0..depth`, in lexicographic order.
pub fn interior_nodes(depth: u32) -> impl Iterator<Item = NodeId> {
    (0..depth).flat_map(|s| (0..1u64 << s).map(move |i| NodeId::at(s, i)))
}
