//! The dyadic Gaussian multiscale noise model.
//!
//! For a depth-`n` tree, every non-leaf node `S` (scales `0..n`) draws `b_S = σ_S Z_S` with
//! `Z_S` standard normal. The noise function on a leaf cell is
//! `exp(sum over ancestors S of (b_S h_S - σ_S² / 2))`, its `dy`-integral is the
//! normalization `E`, and a noisy measure is the pointwise product of a measure's leaf
//! masses with the noise function.

pub mod gaussian;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::measure::LeafMeasure;
use crate::node::{interior_nodes, NodeId};
use crate::tree::CoefficientTree;

/// Largest depth for which noise fields are materialized densely.
pub const MAX_NOISE_DEPTH: u32 = 24;

/// `2 ln 2`, the bound on `sup σ²` for a non-degenerate limit measure.
pub const KAHANE_BOUND: f64 = 2.0 * std::f64::consts::LN_2;

/// Noise standard deviations `σ_S` for the non-leaf nodes of a depth-`depth` tree.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseParams {
    depth: u32,
    sigmas: Sigmas,
}

#[derive(Debug, Clone, PartialEq)]
enum Sigmas {
    /// One σ per scale `0..depth`.
    PerScale(Vec<f64>),
    /// Per node; absent nodes have σ = 0.
    PerNode(BTreeMap<NodeId, f64>),
}

impl NoiseParams {
    /// Scale-dependent model: one σ for every scale in `0..depth`.
    pub fn per_scale(depth: u32, sigmas: Vec<f64>) -> Result<Self> {
        check_noise_depth(depth)?;
        if sigmas.len() != depth as usize {
            return Err(Error::Config(format!(
                "per-scale noise needs {depth} sigmas, got {}",
                sigmas.len()
            )));
        }
        check_sigmas(sigmas.iter().copied())?;
        Ok(NoiseParams {
            depth,
            sigmas: Sigmas::PerScale(sigmas),
        })
    }

    /// The same σ at every node.
    pub fn constant(depth: u32, sigma: f64) -> Result<Self> {
        Self::per_scale(depth, vec![sigma; depth as usize])
    }

    pub fn per_node(depth: u32, sigmas: BTreeMap<NodeId, f64>) -> Result<Self> {
        check_noise_depth(depth)?;
        if let Some(node) = sigmas.keys().find(|n| n.scale >= depth) {
            return Err(Error::Config(format!(
                "noise parameter for {node} lies outside the non-leaf nodes of depth {depth}"
            )));
        }
        check_sigmas(sigmas.values().copied())?;
        Ok(NoiseParams {
            depth,
            sigmas: Sigmas::PerNode(sigmas),
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn is_per_scale(&self) -> bool {
        matches!(self.sigmas, Sigmas::PerScale(_))
    }

    pub fn sigma(&self, node: NodeId) -> f64 {
        match &self.sigmas {
            Sigmas::PerScale(v) => v.get(node.scale as usize).copied().unwrap_or(0.0),
            Sigmas::PerNode(m) => m.get(&node).copied().unwrap_or(0.0),
        }
    }

    /// `sup σ_S²` over all nodes (0 for a depth-0 model).
    pub fn max_sigma_squared(&self) -> f64 {
        let max = match &self.sigmas {
            Sigmas::PerScale(v) => v.iter().copied().fold(0.0, f64::max),
            Sigmas::PerNode(m) => m.values().copied().fold(0.0, f64::max),
        };
        max * max
    }

    /// Parses `{"mode": "per-scale" | "per-node", "depth": n, "sigmas": {...}}`. Per-scale
    /// keys are scales (`"0"`, `"1"`, ...); per-node keys are `"scale:index"`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ParamsDocument = serde_json::from_str(text)?;
        match doc.mode.as_str() {
            "per-scale" => {
                let mut sigmas = vec![None; doc.depth as usize];
                for (key, sigma) in &doc.sigmas {
                    let scale: usize = key
                        .parse()
                        .map_err(|_| Error::Config(format!("bad scale key '{key}'")))?;
                    let slot = sigmas.get_mut(scale).ok_or_else(|| {
                        Error::Config(format!("scale {scale} outside 0..{}", doc.depth))
                    })?;
                    *slot = Some(*sigma);
                }
                let sigmas = sigmas
                    .into_iter()
                    .enumerate()
                    .map(|(s, v)| v.ok_or_else(|| Error::Config(format!("missing sigma for scale {s}"))))
                    .collect::<Result<Vec<_>>>()?;
                Self::per_scale(doc.depth, sigmas)
            }
            "per-node" => {
                let mut sigmas = BTreeMap::new();
                for (key, sigma) in &doc.sigmas {
                    sigmas.insert(parse_node_key(key)?, *sigma);
                }
                Self::per_node(doc.depth, sigmas)
            }
            other => Err(Error::Config(format!(
                "unknown noise mode '{other}' (expected per-scale or per-node)"
            ))),
        }
    }

    pub fn to_json(&self) -> String {
        let (mode, sigmas) = match &self.sigmas {
            Sigmas::PerScale(v) => (
                "per-scale",
                v.iter().enumerate().map(|(s, &x)| (s.to_string(), x)).collect(),
            ),
            Sigmas::PerNode(m) => (
                "per-node",
                m.iter()
                    .map(|(n, &x)| (format!("{}:{}", n.scale, n.index), x))
                    .collect(),
            ),
        };
        let doc = ParamsDocument {
            mode: mode.into(),
            depth: self.depth,
            sigmas,
        };
        serde_json::to_string_pretty(&doc).expect("params are serializable")
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsDocument {
    mode: String,
    depth: u32,
    sigmas: BTreeMap<String, f64>,
}

fn parse_node_key(key: &str) -> Result<NodeId> {
    let bad = || Error::Config(format!("bad node key '{key}' (expected scale:index)"));
    let (s, i) = key.split_once(':').ok_or_else(bad)?;
    NodeId::new(s.trim().parse().map_err(|_| bad())?, i.trim().parse().map_err(|_| bad())?)
}

fn check_noise_depth(depth: u32) -> Result<()> {
    if depth > MAX_NOISE_DEPTH {
        return Err(Error::Shape(format!(
            "noise depth {depth} exceeds the supported maximum {MAX_NOISE_DEPTH}"
        )));
    }
    Ok(())
}

fn check_sigmas(mut sigmas: impl Iterator<Item = f64>) -> Result<()> {
    match sigmas.find(|s| !s.is_finite() || *s < 0.0) {
        Some(s) => Err(Error::Config(format!("sigma {s} must be finite and non-negative"))),
        None => Ok(()),
    }
}

/// Outcome of the `sup σ² < 2 ln 2` test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KahaneCheck {
    pub holds: bool,
    /// `2 ln 2 - sup σ²`; positive when the condition holds.
    pub margin: f64,
}

pub fn check_kahane(params: &NoiseParams) -> KahaneCheck {
    let margin = KAHANE_BOUND - params.max_sigma_squared();
    KahaneCheck {
        holds: margin > 0.0,
        margin,
    }
}

/// Whether every `|a_S| <= 1 - ε` and every `σ_S² < ε / 2`. `ε` must lie in `(0, 1]`.
pub fn check_perturbation(tree: &CoefficientTree, params: &NoiseParams, epsilon: f64) -> Result<bool> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Domain(format!("epsilon {epsilon} must lie in (0, 1]")));
    }
    let coefficients_ok = tree.coefficients().all(|(_, a)| a.abs() <= 1.0 - epsilon);
    Ok(coefficients_ok && params.max_sigma_squared() < epsilon / 2.0)
}

/// One realization of the noise function on the leaf cells of a depth-`n` tree.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    depth: u32,
    log_multipliers: Vec<f64>,
    normalization: f64,
    normalization_by_scale: Vec<f64>,
}

impl NoiseField {
    /// Builds the field from given standard normals `z(S)`.
    pub fn from_normals(params: &NoiseParams, mut z: impl FnMut(NodeId) -> f64) -> Self {
        let depth = params.depth();
        let mut level = vec![0.0f64];
        let mut normalization_by_scale = vec![1.0];
        for scale in 0..depth {
            let mut next = Vec::with_capacity(level.len() * 2);
            for (i, &acc) in level.iter().enumerate() {
                let node = NodeId::new(scale, i as u64).expect("index below 2^scale");
                let sigma = params.sigma(node);
                let b = sigma * z(node);
                let drift = 0.5 * sigma * sigma;
                next.push(acc + b - drift);
                next.push(acc - b - drift);
            }
            level = next;
            normalization_by_scale.push(integrate(&level, scale + 1));
        }
        let normalization = *normalization_by_scale.last().expect("at least the root level");
        NoiseField {
            depth,
            log_multipliers: level,
            normalization,
            normalization_by_scale,
        }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// `log N` on each leaf cell, left to right.
    pub fn log_multipliers(&self) -> &[f64] {
        &self.log_multipliers
    }

    /// `E = ∫ N dy`, the un-normalized total mass.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// `∫ N_s dy` for the partial fields using scales `0..s`, for `s = 0..=depth`.
    pub fn normalization_by_scale(&self) -> &[f64] {
        &self.normalization_by_scale
    }

    /// The probability measure `N dy / E` on the leaf cells.
    pub fn normalized_measure(&self) -> LeafMeasure {
        let width = (-(self.depth as f64)).exp2();
        let masses = self
            .log_multipliers
            .iter()
            .map(|&l| l.exp() * width / self.normalization)
            .collect();
        LeafMeasure::new(self.depth, masses).expect("noise masses are positive")
    }
}

fn integrate(log_values: &[f64], scale: u32) -> f64 {
    let width = (-(scale as f64)).exp2();
    log_values.iter().map(|&l| l.exp()).sum::<f64>() * width
}

/// Samples a noise field; the draw for node `S` depends only on `(seed, S)`.
pub fn sample_noise_field(params: &NoiseParams, seed: u64) -> NoiseField {
    NoiseField::from_normals(params, |node| gaussian::standard_normal(seed, node.linear_index()))
}

/// The noisy measure `μ(X) N p dy / E` at leaf scale, where `p dy` is the tree's measure.
pub fn noisy_leaves(tree: &CoefficientTree, field: &NoiseField) -> Result<LeafMeasure> {
    if tree.depth() != field.depth() {
        return Err(Error::Shape(format!(
            "tree depth {} does not match noise depth {}",
            tree.depth(),
            field.depth()
        )));
    }
    let leaves = tree.reconstruct_leaves(tree.depth())?;
    let masses = leaves
        .masses()
        .iter()
        .zip(field.log_multipliers())
        .map(|(&m, &l)| if m == 0.0 { 0.0 } else { m * l.exp() / field.normalization() })
        .collect();
    LeafMeasure::new(tree.depth(), masses)
}

/// Coefficients of one noisy realization of `tree`. The total mass is reset to the tree's
/// total mass; coefficients do not depend on that scalar.
pub fn apply_noise(tree: &CoefficientTree, params: &NoiseParams, seed: u64) -> Result<CoefficientTree> {
    warn_if_outside_guarantees(tree, params);
    apply_noise_quiet(tree, params, seed)
}

fn apply_noise_quiet(tree: &CoefficientTree, params: &NoiseParams, seed: u64) -> Result<CoefficientTree> {
    let field = sample_noise_field(params, seed);
    let noisy = noisy_leaves(tree, &field)?;
    CoefficientTree::from_leaves(&noisy)?.with_total_mass(tree.total_mass())
}

fn warn_if_outside_guarantees(tree: &CoefficientTree, params: &NoiseParams) {
    let kahane = check_kahane(params);
    if !kahane.holds {
        log::warn!(
            "sup sigma^2 = {} is not below 2 ln 2; the infinite-depth limit may degenerate",
            params.max_sigma_squared()
        );
    }
    let max_a = tree.coefficients().map(|(_, a)| a.abs()).fold(0.0, f64::max);
    let epsilon = 1.0 - max_a;
    if epsilon <= 0.0 || params.max_sigma_squared() >= epsilon / 2.0 {
        log::warn!(
            "perturbation condition fails (max |a| = {max_a}, sup sigma^2 = {}); finite-depth results are still defined",
            params.max_sigma_squared()
        );
    }
}

/// Key of Monte Carlo sample `index` under `seed`.
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    gaussian::derive_key(seed, index)
}

/// Sample mean and variance of one quantity across Monte Carlo samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub count: u64,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
}

impl SampleSummary {
    pub fn stderr(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }
}

/// Running mean and centred second moment (Welford), mergeable with Chan's formula.
#[derive(Debug, Clone)]
struct Moments {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(width: usize) -> Self {
        Moments {
            count: 0,
            mean: vec![0.0; width],
            m2: vec![0.0; width],
        }
    }

    fn push(&mut self, values: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(values) {
            let delta = x - *mean;
            *mean += delta / n;
            *m2 += delta * (x - *mean);
        }
    }

    fn merge(mut self, other: Moments) -> Moments {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        self
    }

    fn summary(&self, i: usize) -> SampleSummary {
        SampleSummary {
            count: self.count,
            mean: self.mean[i],
            variance: self.m2[i] / (self.count - 1) as f64,
        }
    }
}

/// Samples are processed in blocks of this many; block boundaries depend only on the sample
/// count, so the merged statistics do not depend on the thread count.
const BLOCK: u64 = 256;

fn monte_carlo<F>(n_samples: u64, width: usize, seed: u64, sample: F) -> Result<Moments>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    let blocks: Vec<(u64, u64)> = (0..n_samples.div_ceil(BLOCK))
        .map(|b| (b * BLOCK, ((b + 1) * BLOCK).min(n_samples)))
        .collect();
    let partials = blocks
        .into_par_iter()
        .map(|(start, end)| {
            let mut m = Moments::new(width);
            for i in start..end {
                m.push(&sample(sample_seed(seed, i))?);
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(partials.into_iter().fold(Moments::new(width), Moments::merge))
}

/// Monte Carlo statistics of one noisy coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeStats {
    pub node: NodeId,
    pub original: f64,
    pub summary: SampleSummary,
}

/// Per-node mean and variance of noisy coefficients over `n_samples` realizations, for every
/// non-leaf node in lexicographic order. Sample `i` uses [`sample_seed`]`(seed, i)`.
pub fn noisy_coefficient_stats(
    tree: &CoefficientTree,
    params: &NoiseParams,
    n_samples: u64,
    seed: u64,
) -> Result<Vec<NodeStats>> {
    if n_samples < 2 {
        return Err(Error::Domain(format!("need at least 2 samples, got {n_samples}")));
    }
    if tree.depth() != params.depth() {
        return Err(Error::Shape(format!(
            "tree depth {} does not match noise depth {}",
            tree.depth(),
            params.depth()
        )));
    }
    warn_if_outside_guarantees(tree, params);
    let nodes: Vec<NodeId> = interior_nodes(tree.depth()).collect();
    let moments = monte_carlo(n_samples, nodes.len(), seed, |s| {
        Ok(apply_noise_quiet(tree, params, s)?.dense_coefficients())
    })?;
    Ok(nodes
        .iter()
        .enumerate()
        .map(|(i, &node)| NodeStats {
            node,
            original: tree.coefficient(node),
            summary: moments.summary(i),
        })
        .collect())
}

/// Distribution of the un-normalized total mass `∫ N_s dy` at each partial depth
/// `s = 0..=depth`, over `n_samples` fields. Each has expectation 1.
pub fn normalization_stats(params: &NoiseParams, n_samples: u64, seed: u64) -> Result<Vec<SampleSummary>> {
    if n_samples < 2 {
        return Err(Error::Domain(format!("need at least 2 samples, got {n_samples}")));
    }
    let width = params.depth() as usize + 1;
    let moments = monte_carlo(n_samples, width, seed, |s| {
        Ok(sample_noise_field(params, s).normalization_by_scale().to_vec())
    })?;
    Ok((0..width).map(|i| moments.summary(i)).collect())
}

/// CSV report: `node,scale,index,original,mean,variance,stderr`, where `node` is the
/// lexicographic position.
pub fn stats_to_csv(stats: &[NodeStats]) -> String {
    let mut s = String::from("node,scale,index,original,mean,variance,stderr\n");
    for st in stats {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            st.node.linear_index(),
            st.node.scale,
            st.node.index,
            fmt_f64(st.original),
            fmt_f64(st.summary.mean),
            fmt_f64(st.summary.variance),
            fmt_f64(st.summary.stderr()),
        );
    }
    s
}
