//! Leaf-scale masses of a finite-depth measure.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::node::NodeId;
use crate::MAX_DEPTH;

/// Dense leaf masses: `2^depth` non-negative cells, left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafMeasure {
    depth: u32,
    masses: Vec<f64>,
    total: f64,
}

impl LeafMeasure {
    /// Builds a leaf measure from `2^depth` masses. The total may be zero; operations that
    /// need a positive measure check it themselves.
    pub fn new(depth: u32, masses: Vec<f64>) -> Result<Self> {
        check_depth(depth)?;
        let expected = 1usize
            .checked_shl(depth)
            .filter(|_| depth < usize::BITS)
            .ok_or_else(|| Error::Shape(format!("depth {depth} too large for dense storage")))?;
        if masses.len() != expected {
            return Err(Error::Shape(format!(
                "depth {depth} needs {expected} leaf masses, got {}",
                masses.len()
            )));
        }
        check_masses(masses.iter().copied().enumerate())?;
        let total = masses.iter().sum();
        Ok(LeafMeasure { depth, masses, total })
    }

    /// Builds from a power-of-two-length vector, inferring the depth.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        let n = masses.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Shape(format!(
                "leaf count {n} is not a power of two; resample with ingest::series_to_measure"
            )));
        }
        Self::new(n.trailing_zeros(), masses)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn into_masses(self) -> Vec<f64> {
        self.masses
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn to_sparse(&self) -> SparseLeafMeasure {
        SparseLeafMeasure {
            depth: self.depth,
            masses: self
                .masses
                .iter()
                .enumerate()
                .filter(|(_, &m)| m != 0.0)
                .map(|(i, &m)| (i as u64, m))
                .collect(),
            total: self.total,
        }
    }
}

/// Leaf masses stored only where nonzero; absent cells have mass 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseLeafMeasure {
    depth: u32,
    masses: BTreeMap<u64, f64>,
    total: f64,
}

impl SparseLeafMeasure {
    pub fn new(depth: u32, masses: BTreeMap<u64, f64>) -> Result<Self> {
        check_depth(depth)?;
        let limit = 1u64 << depth;
        if let Some((&i, _)) = masses.iter().find(|(&i, _)| i >= limit) {
            return Err(Error::Shape(format!("leaf index {i} out of range at depth {depth}")));
        }
        check_masses(masses.iter().map(|(&i, &m)| (i as usize, m)))?;
        let masses: BTreeMap<u64, f64> = masses.into_iter().filter(|&(_, m)| m != 0.0).collect();
        let total = masses.values().sum();
        Ok(SparseLeafMeasure { depth, masses, total })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Nonzero cells, keyed by leaf index.
    pub fn masses(&self) -> &BTreeMap<u64, f64> {
        &self.masses
    }

    pub fn mass(&self, index: u64) -> f64 {
        self.masses.get(&index).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Number of stored (nonzero) cells.
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn leaf_node(&self, index: u64) -> NodeId {
        NodeId::at(self.depth, index)
    }

    pub fn to_dense(&self) -> Result<LeafMeasure> {
        if self.depth >= 40 {
            return Err(Error::Shape(format!(
                "depth {} too large for dense storage",
                self.depth
            )));
        }
        let mut dense = vec![0.0; 1usize << self.depth];
        for (&i, &m) in &self.masses {
            dense[i as usize] = m;
        }
        LeafMeasure::new(self.depth, dense)
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

fn check_masses(masses: impl Iterator<Item = (usize, f64)>) -> Result<()> {
    for (i, m) in masses {
        if !m.is_finite() || m < 0.0 {
            return Err(Error::Domain(format!(
                "leaf mass {m} at cell {i} must be finite and non-negative"
            )));
        }
    }
    Ok(())
}
