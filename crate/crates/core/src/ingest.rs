//! Converting raw data into leaf measures and coefficient trees.
//!
//! Time series become step functions on the dyadic cells of `[0, 1)`. Point clouds are binned
//! into the cells of a hypercube halved one dimension at a time. Feature systems split every
//! node by the next predicate in the list.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{LeafMeasure, SparseLeafMeasure};
use crate::node::NodeId;
use crate::tree::CoefficientTree;
use crate::MAX_DEPTH;

/// Places a series on the `2^depth` leaf cells of `[0, 1)`.
///
/// The series is read as a step function with equal-width bins, and each cell receives the
/// mass of the bins it overlaps in proportion to the overlap. A series of exactly `2^depth`
/// values is placed unchanged; longer series are summed within cells; shorter series are
/// spread over cells. The total mass is preserved.
pub fn series_to_measure(values: &[f64], depth: u32) -> Result<LeafMeasure> {
    if values.is_empty() {
        return Err(Error::InvalidMeasure("series is empty".into()));
    }
    if depth > 30 {
        return Err(Error::Shape(format!("depth {depth} too large for a dense series")));
    }
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::Domain(format!(
            "series value {v} at position {i} must be finite and non-negative"
        )));
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidMeasure("series is identically zero".into()));
    }

    // Work in units of 1 / (len * cells): bin j spans [j*cells, (j+1)*cells) and
    // cell k spans [k*len, (k+1)*len).
    let len = values.len() as u128;
    let cells = 1u128 << depth;
    let mut masses = vec![0.0; cells as usize];
    let mut bin = 0u128;
    for (k, mass) in masses.iter_mut().enumerate() {
        let (lo, hi) = (k as u128 * len, (k as u128 + 1) * len);
        while (bin + 1) * cells <= lo {
            bin += 1;
        }
        let mut j = bin;
        while j < len && j * cells < hi {
            let overlap = hi.min((j + 1) * cells) - lo.max(j * cells);
            // cells is a power of two, so the fraction is exact.
            *mass += values[j as usize] * (overlap as f64 / cells as f64);
            j += 1;
        }
    }
    LeafMeasure::new(depth, masses)
}

/// Axis-aligned bounds of a cell, in unit-cube coordinates.
///
/// Cells are half-open `[lo, hi)` in each dimension, except that a cell touching the upper
/// face of the cube is closed there.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub closed_hi: Vec<bool>,
}

/// Whether `point` lies in `cell` under the half-open convention.
pub fn boundary_assignment(point: &[f64], cell: &CellBounds) -> bool {
    point.len() == cell.lo.len()
        && point.iter().enumerate().all(|(j, &x)| {
            cell.lo[j] <= x && (x < cell.hi[j] || (cell.closed_hi[j] && x <= cell.hi[j]))
        })
}

/// A binary set system on a box in `R^d`, generated by halving cells along the dimensions
/// in `dim_order`, cycling, for `depth` levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypercubeSystem {
    bounds: Vec<(f64, f64)>,
    /// Zero-based dimension indices.
    dim_order: Vec<usize>,
    depth: u32,
}

impl HypercubeSystem {
    /// `dim_order` holds zero-based dimension indices; `None` means `0, 1, ..., d-1`.
    pub fn new(bounds: Vec<(f64, f64)>, dim_order: Option<Vec<usize>>, depth: u32) -> Result<Self> {
        let d = bounds.len();
        if d == 0 {
            return Err(Error::Config("hypercube needs at least one dimension".into()));
        }
        if let Some((j, b)) = bounds
            .iter()
            .enumerate()
            .find(|(_, (lo, hi))| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(Error::Config(format!(
                "bounds {b:?} of dimension {} must be finite with min < max",
                j + 1
            )));
        }
        let dim_order = dim_order.unwrap_or_else(|| (0..d).collect());
        if dim_order.is_empty() {
            return Err(Error::Config("dimension order is empty".into()));
        }
        if let Some(j) = dim_order.iter().find(|&&j| j >= d) {
            return Err(Error::Config(format!(
                "dimension {} in order is outside 1..={d}",
                j + 1
            )));
        }
        if depth > MAX_DEPTH {
            return Err(Error::Shape(format!(
                "depth {depth} exceeds the supported maximum {MAX_DEPTH}"
            )));
        }
        Ok(HypercubeSystem {
            bounds,
            dim_order,
            depth,
        })
    }

    /// The unit cube `[0, 1]^dim` with the default order.
    pub fn unit(dim: usize, depth: u32) -> Result<Self> {
        Self::new(vec![(0.0, 1.0); dim], None, depth)
    }

    /// Bounds fitted to the per-dimension min and max of `points`.
    pub fn fit(points: &[Vec<f64>], dim_order: Option<Vec<usize>>, depth: u32) -> Result<Self> {
        let mut systems = Self::fit_common(&[points], dim_order, depth, false)?;
        Ok(systems.remove(0))
    }

    /// Fits several datasets at once: each gets its own translation, all share one scale per
    /// dimension, chosen as large as possible while every dataset fits in the unit cube.
    ///
    /// With `median_align`, translations send every dataset's per-dimension median to the
    /// same point of the cube; otherwise they send its minimum to 0.
    pub fn fit_common(
        datasets: &[&[Vec<f64>]],
        dim_order: Option<Vec<usize>>,
        depth: u32,
        median_align: bool,
    ) -> Result<Vec<Self>> {
        let dim = check_datasets(datasets)?;
        let mut anchors = vec![vec![0.0; dim]; datasets.len()];
        let mut below = vec![0.0f64; dim];
        let mut above = vec![0.0f64; dim];
        for (k, points) in datasets.iter().enumerate() {
            for j in 0..dim {
                let mut column: Vec<f64> = points.iter().map(|p| p[j]).collect();
                column.sort_by(f64::total_cmp);
                let (min, max) = (column[0], column[column.len() - 1]);
                let anchor = if median_align { median(&column) } else { min };
                anchors[k][j] = anchor;
                below[j] = below[j].max(anchor - min);
                above[j] = above[j].max(max - anchor);
            }
        }
        datasets
            .iter()
            .zip(&anchors)
            .map(|(points, anchor)| {
                let bounds = (0..dim)
                    .map(|j| {
                        let span = below[j] + above[j];
                        // Degenerate dimension: centre the constant value in a unit box.
                        let (span, pad) = if span > 0.0 { (span, 0.0) } else { (1.0, 0.5) };
                        let mut lo = anchor[j] - below[j] - pad;
                        let mut hi = lo + span;
                        for p in points.iter() {
                            lo = lo.min(p[j]);
                            hi = hi.max(p[j]);
                        }
                        (lo, hi)
                    })
                    .collect();
                Self::new(bounds, dim_order.clone(), depth)
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Zero-based dimension split at each level, cycling.
    pub fn dim_order(&self) -> &[usize] {
        &self.dim_order
    }

    /// Dimension halved when splitting a node at `scale`.
    pub fn split_dim(&self, scale: u32) -> usize {
        self.dim_order[scale as usize % self.dim_order.len()]
    }

    /// Affine map of `point` into the unit cube. Errors if the point lies outside the bounds.
    pub fn normalize(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point has {} coordinates, system has {}",
                point.len(),
                self.dim()
            )));
        }
        point
            .iter()
            .zip(&self.bounds)
            .map(|(&x, &(lo, hi))| {
                if !(lo..=hi).contains(&x) {
                    return Err(Error::Domain(format!(
                        "coordinate {x} outside bounds [{lo}, {hi}]"
                    )));
                }
                Ok(((x - lo) / (hi - lo)).clamp(0.0, 1.0))
            })
            .collect()
    }

    /// Number of halvings of each dimension among the first `levels` splits.
    fn splits_per_dim(&self, levels: u32) -> Vec<u32> {
        let mut counts = vec![0u32; self.dim()];
        for s in 0..levels {
            counts[self.split_dim(s)] += 1;
        }
        counts
    }

    /// Leaf index of a point already in unit coordinates.
    pub fn unit_leaf_index(&self, unit: &[f64]) -> u64 {
        let totals = self.splits_per_dim(self.depth);
        let per_dim: Vec<u64> = unit
            .iter()
            .zip(&totals)
            .map(|(&u, &t)| {
                let cells = 1u64 << t;
                // Half-open cells with the last one closed.
                ((u * (t as f64).exp2()).floor() as u64).min(cells - 1)
            })
            .collect();
        let mut used = vec![0u32; self.dim()];
        let mut index = 0u64;
        for s in 0..self.depth {
            let j = self.split_dim(s);
            used[j] += 1;
            let bit = (per_dim[j] >> (totals[j] - used[j])) & 1;
            index = (index << 1) | bit;
        }
        index
    }

    /// Leaf cell containing `point` (raw coordinates).
    pub fn leaf_index(&self, point: &[f64]) -> Result<u64> {
        Ok(self.unit_leaf_index(&self.normalize(point)?))
    }

    /// Bounds of the cell of `node`, in unit coordinates.
    pub fn cell_bounds(&self, node: NodeId) -> Result<CellBounds> {
        if node.scale > self.depth {
            return Err(Error::Domain(format!(
                "node {node} is deeper than the system depth {}",
                self.depth
            )));
        }
        let mut lo_idx = vec![0u64; self.dim()];
        let mut counts = vec![0u32; self.dim()];
        for s in 0..node.scale {
            let j = self.split_dim(s);
            let bit = (node.index >> (node.scale - 1 - s)) & 1;
            lo_idx[j] = (lo_idx[j] << 1) | bit;
            counts[j] += 1;
        }
        let mut cell = CellBounds {
            lo: Vec::with_capacity(self.dim()),
            hi: Vec::with_capacity(self.dim()),
            closed_hi: Vec::with_capacity(self.dim()),
        };
        for (&i, &c) in lo_idx.iter().zip(&counts) {
            let width = (-(c as f64)).exp2();
            cell.lo.push(i as f64 * width);
            cell.hi.push((i + 1) as f64 * width);
            cell.closed_hi.push(i + 1 == 1u64 << c);
        }
        Ok(cell)
    }
}

fn check_datasets(datasets: &[&[Vec<f64>]]) -> Result<usize> {
    let dim = datasets
        .iter()
        .find_map(|d| d.first())
        .map(Vec::len)
        .ok_or_else(|| Error::Domain("no points to fit".into()))?;
    for points in datasets {
        if points.is_empty() {
            return Err(Error::Domain("cannot fit an empty dataset".into()));
        }
        if let Some((i, p)) = points
            .iter()
            .enumerate()
            .find(|(_, p)| p.len() != dim || p.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Domain(format!(
                "point {i} has {} coordinates (expected {dim} finite values)",
                p.len()
            )));
        }
    }
    Ok(dim)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Counting measure: each point adds mass 1 to its leaf cell. Only occupied cells are stored.
pub fn points_to_measure(points: &[Vec<f64>], system: &HypercubeSystem) -> Result<SparseLeafMeasure> {
    if points.is_empty() {
        return Err(Error::InvalidMeasure("no points".into()));
    }
    let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        let leaf = system.leaf_index(p).map_err(|e| match e {
            Error::Domain(msg) | Error::Shape(msg) => Error::Domain(format!("point {i}: {msg}")),
            other => other,
        })?;
        *counts.entry(leaf).or_insert(0.0) += 1.0;
    }
    SparseLeafMeasure::new(system.depth(), counts)
}

/// Occupied leaf cells with per-class point counts, for a point cloud with two classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCells {
    depth: u32,
    classes: Vec<String>,
    counts: BTreeMap<u64, [u64; 2]>,
}

impl LabeledCells {
    /// Bins labelled points. Classes are ordered by `class_a` if given (that label is class A),
    /// otherwise lexicographically. More than two distinct labels is a config error.
    pub fn new(
        points: &[Vec<f64>],
        labels: &[String],
        system: &HypercubeSystem,
        class_a: Option<&str>,
    ) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        let mut classes: Vec<String> = labels
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if classes.len() > 2 {
            return Err(Error::Config(format!(
                "knot labels need at most two classes, found {}: {}",
                classes.len(),
                classes.join(", ")
            )));
        }
        if let Some(a) = class_a {
            match classes.iter().position(|c| c == a) {
                Some(pos) => classes.swap(0, pos),
                None => classes.insert(0, a.to_string()),
            }
            classes.truncate(2);
        }
        let mut counts: BTreeMap<u64, [u64; 2]> = BTreeMap::new();
        for (i, (p, label)) in points.iter().zip(labels).enumerate() {
            let leaf = system
                .leaf_index(p)
                .map_err(|e| Error::Domain(format!("point {i}: {e}")))?;
            let class = classes.iter().position(|c| c == label).ok_or_else(|| {
                Error::Config(format!("label '{label}' is not one of the two classes"))
            })?;
            counts.entry(leaf).or_insert([0, 0])[class] += 1;
        }
        Ok(LabeledCells {
            depth: system.depth(),
            classes,
            counts,
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Occupied leaf cells with `[class A, class B]` counts.
    pub fn counts(&self) -> &BTreeMap<u64, [u64; 2]> {
        &self.counts
    }

    /// The unlabelled counting measure.
    pub fn measure(&self) -> Result<SparseLeafMeasure> {
        SparseLeafMeasure::new(
            self.depth,
            self.counts
                .iter()
                .map(|(&i, c)| (i, (c[0] + c[1]) as f64))
                .collect(),
        )
    }
}

/// Comparison used by a threshold predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl Comparator {
    fn apply(self, x: f64, c: f64) -> bool {
        match self {
            Comparator::Lt => x < c,
            Comparator::Le => x <= c,
            Comparator::Gt => x > c,
            Comparator::Ge => x >= c,
            Comparator::Eq => x == c,
            Comparator::Ne => x != c,
        }
    }

    fn complement(self) -> Comparator {
        match self {
            Comparator::Lt => Comparator::Ge,
            Comparator::Le => Comparator::Gt,
            Comparator::Gt => Comparator::Le,
            Comparator::Ge => Comparator::Lt,
            Comparator::Eq => Comparator::Ne,
            Comparator::Ne => Comparator::Eq,
        }
    }
}

/// `row[column] <op> value`, as read from a JSON feature config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub name: String,
    pub column: usize,
    pub op: Comparator,
    pub value: f64,
}

type PredicateFn = dyn Fn(&[f64]) -> std::result::Result<bool, String> + Send + Sync;

#[derive(Clone)]
enum Predicate {
    Threshold { column: usize, op: Comparator, value: f64 },
    Custom(Arc<PredicateFn>),
}

/// A named boolean function on data points.
#[derive(Clone)]
pub struct Feature {
    name: String,
    predicate: Predicate,
}

impl fmt::Debug for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.predicate {
            Predicate::Threshold { column, op, value } => format!("col{column} {op:?} {value}"),
            Predicate::Custom(_) => "custom".to_string(),
        };
        f.debug_struct("Feature")
            .field("name", &self.name)
            .field("predicate", &kind)
            .finish()
    }
}

impl Feature {
    pub fn threshold(name: impl Into<String>, column: usize, op: Comparator, value: f64) -> Self {
        Feature {
            name: name.into(),
            predicate: Predicate::Threshold { column, op, value },
        }
    }

    pub fn custom<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> std::result::Result<bool, String> + Send + Sync + 'static,
    {
        Feature {
            name: name.into(),
            predicate: Predicate::Custom(Arc::new(f)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn evaluate(&self, row: &[f64]) -> Result<bool> {
        let outcome = match &self.predicate {
            Predicate::Threshold { column, op, value } => row
                .get(*column)
                .map(|&x| op.apply(x, *value))
                .ok_or_else(|| format!("column {column} missing from a row of {} values", row.len())),
            Predicate::Custom(f) => f(row),
        };
        outcome.map_err(|message| Error::Predicate {
            predicate: self.name.clone(),
            message,
        })
    }
}

/// Ordered features `F_1, F_2, ...`; a node at level `i` splits into `F_{i+1} ∩ S` (left)
/// and its complement within `S` (right).
#[derive(Debug, Clone)]
pub struct FeatureSystem {
    features: Vec<Feature>,
}

#[derive(Deserialize)]
struct FeatureConfig {
    features: Vec<ThresholdSpec>,
}

impl FeatureSystem {
    /// Rejects an empty list and a threshold listed together with its own complement.
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Config("feature system needs at least one predicate".into()));
        }
        for (i, a) in features.iter().enumerate() {
            for b in &features[i + 1..] {
                if let (
                    Predicate::Threshold { column: ca, op: oa, value: va },
                    Predicate::Threshold { column: cb, op: ob, value: vb },
                ) = (&a.predicate, &b.predicate)
                {
                    if ca == cb && va == vb && oa.complement() == *ob {
                        return Err(Error::Config(format!(
                            "features '{}' and '{}' are complements of each other",
                            a.name, b.name
                        )));
                    }
                }
            }
        }
        Ok(FeatureSystem { features })
    }

    /// Parses `{"features": [{"name", "column", "op", "value"}, ...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: FeatureConfig = serde_json::from_str(text)?;
        Self::new(
            config
                .features
                .into_iter()
                .map(|t| Feature::threshold(t.name, t.column, t.op, t.value))
                .collect(),
        )
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn depth(&self) -> u32 {
        self.features.len() as u32
    }

    /// Leaf index of a row: bit `i` (from the top) is 0 when `F_{i+1}` holds.
    pub fn leaf_index(&self, row: &[f64]) -> Result<u64> {
        self.features.iter().try_fold(0u64, |index, f| {
            Ok((index << 1) | u64::from(!f.evaluate(row)?))
        })
    }
}

/// Coefficients of the counting measure on the binary set system generated by `system`.
pub fn feature_system_measure(points: &[Vec<f64>], system: &FeatureSystem) -> Result<CoefficientTree> {
    if points.is_empty() {
        return Err(Error::InvalidMeasure("no points".into()));
    }
    if system.depth() > MAX_DEPTH {
        return Err(Error::Shape(format!(
            "{} features exceed the supported depth {MAX_DEPTH}",
            system.depth()
        )));
    }
    let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
    for p in points {
        *counts.entry(system.leaf_index(p)?).or_insert(0.0) += 1.0;
    }
    CoefficientTree::from_sparse(&SparseLeafMeasure::new(system.depth(), counts)?)
}
