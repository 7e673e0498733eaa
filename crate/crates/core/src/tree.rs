//! Product coefficient trees and the transforms between leaf masses and coefficients.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::measure::{LeafMeasure, SparseLeafMeasure};
use crate::node::{interior_nodes, NodeId};
use crate::MAX_DEPTH;

/// Product coefficient of a parent with children of mass `mass_left` and `mass_right`.
///
/// Solves `mass_left = (1 + a) / 2 * (mass_left + mass_right)`. A parent of mass zero
/// gets coefficient 0.
pub fn coefficient_from_masses(mass_left: f64, mass_right: f64) -> Result<f64> {
    Split::from_masses(mass_left, mass_right).map(|s| s.coefficient)
}

/// One stored coefficient together with the conditional masses of the two children.
///
/// `left_share` and `right_share` are `(1 + a) / 2` and `(1 - a) / 2`. When the split is
/// built from masses they are computed as `left / (left + right)` directly, which keeps the
/// smaller share at full relative precision even when `a` is within a few ulps of +-1.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Split {
    coefficient: f64,
    left_share: f64,
    right_share: f64,
}

impl Split {
    fn from_masses(left: f64, right: f64) -> Result<Self> {
        for m in [left, right] {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::Domain(format!(
                    "child mass {m} must be finite and non-negative"
                )));
            }
        }
        let parent = left + right;
        if parent == 0.0 {
            return Ok(Split::from_coefficient(0.0));
        }
        Ok(Split {
            coefficient: (left - right) / parent,
            left_share: left / parent,
            right_share: right / parent,
        })
    }

    fn from_coefficient(a: f64) -> Self {
        Split {
            coefficient: a,
            left_share: 0.5 * (1.0 + a),
            right_share: 0.5 * (1.0 - a),
        }
    }

    fn share(&self, left: bool) -> f64 {
        if left {
            self.left_share
        } else {
            self.right_share
        }
    }
}

/// A finite-depth measure in product form: the total mass plus one coefficient per
/// non-leaf node at scales `0..depth`.
///
/// Storage is sparse; an absent node has coefficient 0.
#[derive(Debug, Clone)]
pub struct CoefficientTree {
    depth: u32,
    total_mass: f64,
    splits: BTreeMap<NodeId, Split>,
}

/// Two trees are equal when depth, total mass and every coefficient agree; explicit zeros
/// and absent entries are the same.
impl PartialEq for CoefficientTree {
    fn eq(&self, other: &Self) -> bool {
        self.depth == other.depth
            && self.total_mass == other.total_mass
            && self
                .splits
                .keys()
                .chain(other.splits.keys())
                .all(|&n| self.coefficient(n) == other.coefficient(n))
    }
}

impl CoefficientTree {
    /// Builds a tree from explicit coefficients.
    ///
    /// Node addresses must lie at scales below `depth` and values must be finite. The
    /// `[-1, 1]` bound and zero-measure convention are not enforced here; see [`validate`].
    ///
    /// [`validate`]: CoefficientTree::validate
    pub fn new(
        depth: u32,
        total_mass: f64,
        coefficients: impl IntoIterator<Item = (NodeId, f64)>,
    ) -> Result<Self> {
        check_depth(depth)?;
        if !total_mass.is_finite() {
            return Err(Error::InvalidMeasure(format!("total mass {total_mass} is not finite")));
        }
        let mut splits = BTreeMap::new();
        for (node, a) in coefficients {
            NodeId::new(node.scale, node.index)?;
            if node.scale >= depth {
                return Err(Error::Domain(format!(
                    "node {node} is not a non-leaf node of a depth-{depth} tree"
                )));
            }
            if !a.is_finite() {
                return Err(Error::Domain(format!("coefficient at {node} is not finite")));
            }
            splits.insert(node, Split::from_coefficient(a));
        }
        Ok(CoefficientTree {
            depth,
            total_mass,
            splits,
        })
    }

    /// The naive measure scaled to `total_mass`: every coefficient 0.
    pub fn uniform(depth: u32, total_mass: f64) -> Result<Self> {
        Self::new(depth, total_mass, std::iter::empty())
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn coefficient(&self, node: NodeId) -> f64 {
        self.splits.get(&node).map_or(0.0, |s| s.coefficient)
    }

    /// Stored coefficients in lexicographic node order.
    pub fn coefficients(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.splits.iter().map(|(&n, s)| (n, s.coefficient))
    }

    /// Number of stored entries, including explicit zeros.
    pub fn stored_len(&self) -> usize {
        self.splits.len()
    }

    /// Dense coefficient vector over all non-leaf nodes, lexicographic order.
    pub fn dense_coefficients(&self) -> Vec<f64> {
        interior_nodes(self.depth).map(|n| self.coefficient(n)).collect()
    }

    /// Copy with the total mass replaced.
    pub fn with_total_mass(&self, total_mass: f64) -> Result<Self> {
        if !total_mass.is_finite() {
            return Err(Error::InvalidMeasure(format!("total mass {total_mass} is not finite")));
        }
        Ok(CoefficientTree {
            total_mass,
            ..self.clone()
        })
    }

    /// Bottom-up transform from dense leaf masses.
    pub fn from_leaves(leaves: &LeafMeasure) -> Result<Self> {
        check_positive_total(leaves.total())?;
        let mut splits = BTreeMap::new();
        let mut level: Vec<f64> = leaves.masses().to_vec();
        for scale in (0..leaves.depth()).rev() {
            let parents: Vec<f64> = level
                .chunks_exact(2)
                .enumerate()
                .map(|(i, pair)| {
                    let parent = pair[0] + pair[1];
                    if parent > 0.0 {
                        let split = Split::from_masses(pair[0], pair[1])?;
                        splits.insert(NodeId::at(scale, i as u64), split);
                    }
                    Ok(parent)
                })
                .collect::<Result<_>>()?;
            level = parents;
        }
        Ok(CoefficientTree {
            depth: leaves.depth(),
            total_mass: leaves.total(),
            splits,
        })
    }

    /// Bottom-up transform from sparse leaf masses; only nodes of positive mass get an entry.
    pub fn from_sparse(leaves: &SparseLeafMeasure) -> Result<Self> {
        check_positive_total(leaves.total())?;
        let mut splits = BTreeMap::new();
        let mut level: BTreeMap<u64, f64> = leaves.masses().clone();
        for scale in (0..leaves.depth()).rev() {
            let mut pairs: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
            for (&i, &m) in &level {
                let entry = pairs.entry(i >> 1).or_insert((0.0, 0.0));
                if i & 1 == 0 {
                    entry.0 = m;
                } else {
                    entry.1 = m;
                }
            }
            level = BTreeMap::new();
            for (p, (l, r)) in pairs {
                splits.insert(NodeId::at(scale, p), Split::from_masses(l, r)?);
                level.insert(p, l + r);
            }
        }
        Ok(CoefficientTree {
            depth: leaves.depth(),
            total_mass: leaves.total(),
            splits,
        })
    }

    /// Top-down evaluation of the partial product measure at `target_depth`.
    pub fn reconstruct_leaves(&self, target_depth: u32) -> Result<LeafMeasure> {
        if target_depth > self.depth {
            return Err(Error::Depth {
                requested: target_depth,
                available: self.depth,
            });
        }
        self.check_bounds()?;
        if target_depth >= 24 {
            log::warn!(
                "reconstructing {} dense leaves at depth {target_depth}",
                1u64 << target_depth
            );
        }
        let mut level = vec![self.total_mass];
        for scale in 0..target_depth {
            let mut next = Vec::with_capacity(level.len() * 2);
            for (i, &m) in level.iter().enumerate() {
                match self.splits.get(&NodeId::at(scale, i as u64)) {
                    Some(s) => {
                        next.push(s.left_share * m);
                        next.push(s.right_share * m);
                    }
                    None => {
                        next.push(0.5 * m);
                        next.push(0.5 * m);
                    }
                }
            }
            level = next;
        }
        LeafMeasure::new(target_depth, level)
    }

    /// Mass of one node: the product of the branch shares along its root path.
    pub fn node_mass(&self, node: NodeId) -> Result<f64> {
        NodeId::new(node.scale, node.index)?;
        if node.scale > self.depth {
            return Err(Error::Domain(format!(
                "node {node} lies below the depth-{} tree",
                self.depth
            )));
        }
        let mut mass = self.total_mass;
        for scale in 0..node.scale {
            let ancestor = node.ancestor_at(scale);
            let left = node.ancestor_at(scale + 1).is_left_child();
            mass *= match self.splits.get(&ancestor) {
                Some(s) => s.share(left),
                None => 0.5,
            };
        }
        Ok(mass)
    }

    /// Product coefficients of the unit point mass at `x`: +-1 along the dyadic path of
    /// `x`, 0 elsewhere.
    pub fn dirac(x: f64, depth: u32) -> Result<Self> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::Domain(format!("point {x} must lie in [0, 1)")));
        }
        check_depth(depth)?;
        let coefficients = (0..depth).map(|n| {
            // Scaling by a power of two is exact, so the floors are exact dyadic digits.
            let index = (x * (n as f64).exp2()).floor() as u64;
            let digits = (x * ((n + 1) as f64).exp2()).floor() as u64;
            let a = if digits.is_multiple_of(2) { 1.0 } else { -1.0 };
            (NodeId::at(n, index), a)
        });
        Self::new(depth, 1.0, coefficients)
    }

    /// Reports every violated constraint; an empty list means the tree is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.total_mass <= 0.0 {
            out.push(Violation::NonPositiveTotal(self.total_mass));
        }
        for (&node, s) in &self.splits {
            if !(-1.0..=1.0).contains(&s.coefficient) {
                out.push(Violation::OutOfBounds {
                    node,
                    value: s.coefficient,
                });
            }
        }
        // Zero-measure convention: a nonzero coefficient must not sit under a zero half.
        for (&node, s) in &self.splits {
            if s.coefficient == 0.0 {
                continue;
            }
            let under_zero_half = (0..node.scale).any(|scale| {
                let ancestor = node.ancestor_at(scale);
                let branch_left = node.ancestor_at(scale + 1).is_left_child();
                self.splits
                    .get(&ancestor)
                    .is_some_and(|s| s.share(branch_left) == 0.0)
            });
            if under_zero_half {
                out.push(Violation::ZeroMeasureConvention {
                    node,
                    value: s.coefficient,
                });
            }
        }
        out
    }

    fn check_bounds(&self) -> Result<()> {
        match self.splits.iter().find(|(_, s)| !(-1.0..=1.0).contains(&s.coefficient)) {
            Some((&node, s)) => Err(Error::InvalidCoefficient {
                node,
                value: s.coefficient,
            }),
            None => Ok(()),
        }
    }
}

/// A constraint broken by a [`CoefficientTree`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    OutOfBounds { node: NodeId, value: f64 },
    ZeroMeasureConvention { node: NodeId, value: f64 },
    NonPositiveTotal(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfBounds { node, value } => {
                write!(f, "bound violation at {node}: coefficient {value} outside [-1, 1]")
            }
            Violation::ZeroMeasureConvention { node, value } => write!(
                f,
                "convention violation at {node}: coefficient {value} under a zero-mass half"
            ),
            Violation::NonPositiveTotal(m) => write!(f, "total mass {m} is not positive"),
        }
    }
}

/// Product coefficients of a parent with `n` ordered children.
#[derive(Debug, Clone, PartialEq)]
pub struct NaryCoefficients {
    values: Vec<f64>,
}

impl NaryCoefficients {
    /// Solves `mass_i = (1 + x_i) / n * parent` with `sum x_i = 0`. An all-zero parent gets
    /// all-zero coefficients.
    pub fn from_masses(child_masses: &[f64]) -> Result<Self> {
        let n = child_masses.len();
        if n < 2 {
            return Err(Error::Domain(format!("need at least 2 children, got {n}")));
        }
        if let Some(&m) = child_masses.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::Domain(format!(
                "child mass {m} must be finite and non-negative"
            )));
        }
        let parent: f64 = child_masses.iter().sum();
        let values = if parent == 0.0 {
            vec![0.0; n]
        } else {
            child_masses
                .iter()
                .map(|&m| n as f64 * m / parent - 1.0)
                .collect()
        };
        Ok(NaryCoefficients { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn check_depth(depth: u32) -> Result<()> {
    if depth > MAX_DEPTH {
        return Err(Error::Shape(format!(
            "depth {depth} exceeds the supported maximum {MAX_DEPTH}"
        )));
    }
    Ok(())
}

fn check_positive_total(total: f64) -> Result<()> {
    if total > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidMeasure(format!(
            "total mass {total} must be positive"
        )))
    }
}
