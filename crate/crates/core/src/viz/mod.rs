//! Pseudo-welding curves and day wheels built from coefficient trees.

mod svg;

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ingest::LabeledCells;
use crate::io::fmt_f64;
use crate::node::{interior_nodes, NodeId};
use crate::tree::CoefficientTree;

pub use svg::{render_curve_svg, render_wheel_svg, write_svg, Colormap, CurveStyle, WheelStyle};

/// Class content of the cell behind a knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    OnlyA,
    OnlyB,
    Mixed,
    Empty,
    Endpoint,
    /// No label information was supplied.
    Unlabeled,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::OnlyA => "onlyA",
            Category::OnlyB => "onlyB",
            Category::Mixed => "mixed",
            Category::Empty => "empty",
            Category::Endpoint => "endpoint",
            Category::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-node categories derived from labelled cells. Nodes with no points are [`Category::Empty`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLabels {
    depth: u32,
    classes: Vec<String>,
    occupied: BTreeMap<NodeId, Category>,
}

impl NodeLabels {
    pub fn get(&self, node: NodeId) -> Category {
        self.occupied.get(&node).copied().unwrap_or(Category::Empty)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Class names, class A first.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }
}

/// Categorizes every node by the classes of the points in its cell.
pub fn knot_labels(cells: &LabeledCells) -> NodeLabels {
    let depth = cells.depth();
    let mut flags: BTreeMap<NodeId, (bool, bool)> = BTreeMap::new();
    for (&leaf, counts) in cells.counts() {
        let (has_a, has_b) = (counts[0] > 0, counts[1] > 0);
        if !(has_a || has_b) {
            continue;
        }
        let leaf = NodeId::new(depth, leaf).expect("leaf index below 2^depth");
        for scale in 0..=depth {
            let entry = flags.entry(leaf.ancestor_at(scale)).or_insert((false, false));
            entry.0 |= has_a;
            entry.1 |= has_b;
        }
    }
    let occupied = flags
        .into_iter()
        .map(|(node, flags)| {
            let category = match flags {
                (true, false) => Category::OnlyA,
                (false, true) => Category::OnlyB,
                (true, true) => Category::Mixed,
                (false, false) => Category::Empty,
            };
            (node, category)
        })
        .collect();
    NodeLabels {
        depth,
        classes: cells.classes().to_vec(),
        occupied,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knot {
    pub x: f64,
    pub y: f64,
    /// Node whose segment split created the knot; `None` for the two endpoints.
    pub node: Option<NodeId>,
    pub category: Category,
}

/// Piecewise linear curve from `(0, 0)` to `(1, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeldCurve {
    pub max_scale: u32,
    pub knots: Vec<Knot>,
    /// Class names used for the knot categories, if labels were supplied.
    pub classes: Vec<String>,
}

impl WeldCurve {
    pub fn min_segment_length(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .fold(f64::INFINITY, f64::min)
    }

    /// Knot dump: `x,y,scale,index,category`; endpoints have empty scale and index.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,scale,index,category\n");
        for k in &self.knots {
            let (scale, index) = match k.node {
                Some(n) => (n.scale.to_string(), n.index.to_string()),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(s, "{},{},{scale},{index},{}", fmt_f64(k.x), fmt_f64(k.y), k.category);
        }
        s
    }
}

/// Builds the pseudo-welding curve through scale `max_scale`.
///
/// Stage `s` visits the current segments left to right; the segment belonging to node
/// `(s, i)` is replaced by two segments meeting at its midpoint displaced along the
/// segment's left normal by `a_(s,i) * 2^-s * |segment| / 2`.
pub fn pseudo_welding_curve(
    tree: &CoefficientTree,
    max_scale: u32,
    labels: Option<&NodeLabels>,
) -> Result<WeldCurve> {
    if max_scale >= tree.depth() {
        return Err(Error::Shape(format!(
            "max scale {max_scale} requires a tree of depth > {max_scale}, got {}",
            tree.depth()
        )));
    }
    if max_scale > 24 {
        return Err(Error::Shape(format!("max scale {max_scale} is too large to draw")));
    }
    if let Some(l) = labels {
        if l.depth() != tree.depth() {
            return Err(Error::Shape(format!(
                "labels have depth {}, tree has depth {}",
                l.depth(),
                tree.depth()
            )));
        }
    }
    let endpoint = |x: f64| Knot {
        x,
        y: 0.0,
        node: None,
        category: Category::Endpoint,
    };
    let mut knots = vec![endpoint(0.0), endpoint(1.0)];
    for scale in 0..=max_scale {
        let weight = 0.5 * (-(scale as f64)).exp2();
        let mut next = Vec::with_capacity(2 * knots.len() - 1);
        for (i, pair) in knots.windows(2).enumerate() {
            let (p, q) = (pair[0], pair[1]);
            let node = NodeId::new(scale, i as u64).expect("segment count is 2^scale");
            let (dx, dy) = (q.x - p.x, q.y - p.y);
            let c = tree.coefficient(node) * weight;
            next.push(p);
            next.push(Knot {
                x: 0.5 * (p.x + q.x) - c * dy,
                y: 0.5 * (p.y + q.y) + c * dx,
                node: Some(node),
                category: labels.map_or(Category::Unlabeled, |l| l.get(node)),
            });
        }
        next.push(*knots.last().expect("curve has endpoints"));
        knots = next;
    }
    Ok(WeldCurve {
        max_scale,
        knots,
        classes: labels.map(|l| l.classes().to_vec()).unwrap_or_default(),
    })
}

/// One annular sector (or, at scale 0, the central disk) of a day wheel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelSector {
    pub node: NodeId,
    /// Coefficient clamped to `[-1, 1]`.
    pub value: f64,
}

/// Scale-`s` coefficients on a ring of `2^s` equal sectors, scale 0 in the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct DayWheel {
    pub max_scale: u32,
    pub sectors: Vec<WheelSector>,
}

pub fn day_wheel(tree: &CoefficientTree, max_scale: u32) -> Result<DayWheel> {
    if max_scale >= tree.depth() {
        return Err(Error::Shape(format!(
            "max scale {max_scale} requires a tree of depth > {max_scale}, got {}",
            tree.depth()
        )));
    }
    if max_scale > 16 {
        return Err(Error::Shape(format!("max scale {max_scale} is too large to draw")));
    }
    let sectors = interior_nodes(max_scale + 1)
        .map(|node| WheelSector {
            node,
            value: tree.coefficient(node).clamp(-1.0, 1.0),
        })
        .collect();
    Ok(DayWheel { max_scale, sectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::HypercubeSystem;

    fn n(s: u32, i: u64) -> NodeId {
        NodeId::new(s, i).unwrap()
    }

    #[test]
    fn zero_tree_gives_collinear_knots() {
        let t = CoefficientTree::uniform(5, 1.0).unwrap();
        let c = pseudo_welding_curve(&t, 3, None).unwrap();
        assert_eq!(c.knots.len(), 17);
        for (k, knot) in c.knots.iter().enumerate() {
            assert_eq!(knot.y, 0.0);
            assert_eq!(knot.x, k as f64 / 16.0);
        }
    }

    #[test]
    fn single_root_coefficient() {
        let t = CoefficientTree::new(2, 1.0, [(n(0, 0), 1.0)]).unwrap();
        let c = pseudo_welding_curve(&t, 0, None).unwrap();
        assert_eq!(c.knots.len(), 3);
        assert_eq!((c.knots[1].x, c.knots[1].y), (0.5, 0.5));
        assert_eq!(c.knots[1].node, Some(NodeId::ROOT));
        let t = CoefficientTree::new(2, 1.0, [(n(0, 0), -1.0)]).unwrap();
        let c = pseudo_welding_curve(&t, 0, None).unwrap();
        assert_eq!((c.knots[1].x, c.knots[1].y), (0.5, -0.5));
    }

    #[test]
    fn second_stage_uses_segment_normals() {
        // Root raises the midpoint to (0.5, 0.5); node (1, 0) then pushes the midpoint of
        // the segment (0,0)-(0.5,0.5) along its left normal (-0.5, 0.5) scaled by 1 * 1/4.
        let t = CoefficientTree::new(3, 1.0, [(n(0, 0), 1.0), (n(1, 0), 1.0)]).unwrap();
        let c = pseudo_welding_curve(&t, 1, None).unwrap();
        assert_eq!(c.knots.len(), 5);
        assert_eq!((c.knots[1].x, c.knots[1].y), (0.25 - 0.125, 0.25 + 0.125));
        assert_eq!((c.knots[3].x, c.knots[3].y), (0.75, 0.25));
    }

    #[test]
    fn curve_errors() {
        let t = CoefficientTree::uniform(2, 1.0).unwrap();
        assert!(matches!(pseudo_welding_curve(&t, 2, None), Err(Error::Shape(_))));
        assert!(matches!(day_wheel(&t, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn labels_categories() {
        let sys = HypercubeSystem::unit(1, 2).unwrap();
        let pts = vec![vec![0.1], vec![0.3], vec![0.35], vec![0.8]];
        let labels: Vec<String> = ["g", "g", "v", "v"].iter().map(|s| s.to_string()).collect();
        let cells = LabeledCells::new(&pts, &labels, &sys, None).unwrap();
        let l = knot_labels(&cells);
        assert_eq!(l.get(n(0, 0)), Category::Mixed);
        assert_eq!(l.get(n(1, 0)), Category::Mixed);
        assert_eq!(l.get(n(1, 1)), Category::OnlyB);
        assert_eq!(l.get(n(2, 0)), Category::OnlyA);
        assert_eq!(l.get(n(2, 1)), Category::Mixed);
        assert_eq!(l.get(n(2, 2)), Category::Empty);

        let tree = CoefficientTree::from_sparse(&cells.measure().unwrap()).unwrap();
        let c = pseudo_welding_curve(&tree, 1, Some(&l)).unwrap();
        let cats: Vec<Category> = c.knots.iter().map(|k| k.category).collect();
        assert_eq!(
            cats,
            vec![Category::Endpoint, Category::Mixed, Category::Mixed, Category::OnlyB, Category::Endpoint]
        );
        assert!(c.to_csv().lines().nth(1).unwrap().ends_with(",,endpoint"));
    }

    #[test]
    fn wheel_examples() {
        let w = day_wheel(&CoefficientTree::uniform(6, 1.0).unwrap(), 5).unwrap();
        assert_eq!(w.sectors.len(), 63);
        assert!(w.sectors.iter().all(|s| s.value == 0.0));

        let w = day_wheel(&CoefficientTree::dirac(0.0, 4).unwrap(), 3).unwrap();
        for s in &w.sectors {
            let expected = if s.node.index == 0 { 1.0 } else { 0.0 };
            assert_eq!(s.value, expected, "{}", s.node);
        }

        let w = day_wheel(&CoefficientTree::new(2, 1.0, [(n(1, 1), 1.7)]).unwrap(), 1).unwrap();
        assert_eq!(w.sectors[2].value, 1.0);
    }
}
