//! Multiscale variance, the multi-scale variance norm, distances and inference by averaging.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::node::{interior_nodes, NodeId};
use crate::tree::CoefficientTree;

/// `sum_s 2^-s * sum_{scale(S) = s} a_S^2`, with its per-scale terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleWeightedNorm {
    pub value: f64,
    pub per_scale_terms: Vec<f64>,
}

impl ScaleWeightedNorm {
    fn from_terms(per_scale_terms: Vec<f64>) -> Self {
        ScaleWeightedNorm {
            value: per_scale_terms.iter().sum(),
            per_scale_terms,
        }
    }

    /// Sum of the terms for scales `0..=max_scale`.
    pub fn truncated(&self, max_scale: u32) -> f64 {
        self.per_scale_terms
            .iter()
            .take(max_scale as usize + 1)
            .sum()
    }
}

/// Degree-2 approximation to the variance of the partial product measure. This is the
/// lowest-order term only; it is exact for measures whose coefficients live on one scale.
pub fn variance_degree2(tree: &CoefficientTree) -> ScaleWeightedNorm {
    let mut sums = vec![0.0; tree.depth() as usize];
    for (node, a) in tree.coefficients() {
        sums[node.scale as usize] += a * a;
    }
    ScaleWeightedNorm::from_terms(
        sums.into_iter()
            .enumerate()
            .map(|(s, sum)| sum * scale_weight(s as u32))
            .collect(),
    )
}

/// Variance of the single-node measure `(1 + a h_S) dy` for a node at `scale`: `a^2 / 2^scale`.
pub fn single_scale_variance(a: f64, scale: u32) -> Result<f64> {
    if !(-1.0..=1.0).contains(&a) {
        return Err(Error::Domain(format!("coefficient {a} outside [-1, 1]")));
    }
    Ok(a * a * scale_weight(scale))
}

/// Distance induced by the multi-scale variance norm. Absent coefficients count as 0.
///
/// Trees of different total mass are compared on coefficients alone, with a warning.
pub fn norm_distance(a: &CoefficientTree, b: &CoefficientTree) -> Result<f64> {
    if a.depth() != b.depth() {
        return Err(Error::Shape(format!(
            "depth mismatch: {} vs {}",
            a.depth(),
            b.depth()
        )));
    }
    if a.total_mass() != b.total_mass() {
        log::warn!(
            "comparing measures of different total mass ({} vs {}); distance uses coefficients only",
            a.total_mass(),
            b.total_mass()
        );
    }
    let nodes: BTreeSet<NodeId> = a
        .coefficients()
        .chain(b.coefficients())
        .map(|(n, _)| n)
        .collect();
    let sq: f64 = nodes
        .into_iter()
        .map(|n| {
            let d = a.coefficient(n) - b.coefficient(n);
            d * d * scale_weight(n.scale)
        })
        .sum();
    Ok(sq.sqrt())
}

/// Infers a measure from samples by averaging coefficients node-wise; the total mass is the
/// mean of the sample total masses.
///
/// The result may break the zero-measure convention even when every input satisfies it;
/// use [`CoefficientTree::validate`] to detect that.
pub fn average_coefficients(trees: &[CoefficientTree]) -> Result<CoefficientTree> {
    let first = trees
        .first()
        .ok_or_else(|| Error::Domain("cannot average an empty list of trees".into()))?;
    if let Some(t) = trees.iter().find(|t| t.depth() != first.depth()) {
        return Err(Error::Shape(format!(
            "depth mismatch: {} vs {}",
            first.depth(),
            t.depth()
        )));
    }
    let n = trees.len() as f64;
    let nodes: BTreeSet<NodeId> = trees
        .iter()
        .flat_map(|t| t.coefficients().map(|(n, _)| n))
        .collect();
    let coefficients: Vec<(NodeId, f64)> = nodes
        .into_iter()
        .map(|node| {
            let sum: f64 = trees.iter().map(|t| t.coefficient(node)).sum();
            (node, sum / n)
        })
        .collect();
    let total = trees.iter().map(CoefficientTree::total_mass).sum::<f64>() / n;
    CoefficientTree::new(first.depth(), total, coefficients)
}

/// Flattens coefficients of scales `0..=max_scale` in lexicographic order, each weighted by
/// `2^(-s/2)`, so the Euclidean norm equals the truncated multi-scale variance norm.
pub fn weighted_feature_vector(tree: &CoefficientTree, max_scale: u32) -> Result<Vec<f64>> {
    if max_scale >= tree.depth() {
        return Err(Error::Shape(format!(
            "max scale {max_scale} requires a tree of depth > {max_scale}, got {}",
            tree.depth()
        )));
    }
    Ok(interior_nodes(max_scale + 1)
        .map(|n| tree.coefficient(n) * scale_weight(n.scale).sqrt())
        .collect())
}

/// Node addresses labelling the columns of [`weighted_feature_vector`].
pub fn feature_columns(max_scale: u32) -> Vec<NodeId> {
    interior_nodes(max_scale + 1).collect()
}

fn scale_weight(scale: u32) -> f64 {
    (-(scale as f64)).exp2()
}
