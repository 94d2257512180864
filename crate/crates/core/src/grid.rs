//! Uniform discretization of the waveguide ω × (−X, X) and the time window [0, T].
//!
//! Space fields live on the full tensor grid (boundary nodes included) and are
//! stored axial-major: `index = j * n1 + i`, with `i` the transverse node and
//! `j` the axial node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A boundary node of the cross-section together with its outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryNode {
    pub index: usize,
    pub normal: f64,
}

/// Discretized cross-section ω. Only the interval case (dimension 1) is built;
/// the dimension field is carried so rectangular sections fit the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub dimension: usize,
    pub extent: f64,
    pub nodes: usize,
    pub boundary: Vec<BoundaryNode>,
}

impl CrossSection {
    pub fn interval(extent: f64, nodes: usize) -> Result<Self> {
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::config("grid.extent", format!("must be positive, got {extent}")));
        }
        if nodes < 3 {
            return Err(Error::config("grid.nodes", format!("need at least 3 nodes, got {nodes}")));
        }
        Ok(CrossSection {
            dimension: 1,
            extent,
            nodes,
            boundary: vec![
                BoundaryNode { index: 0, normal: -1.0 },
                BoundaryNode { index: nodes - 1, normal: 1.0 },
            ],
        })
    }

    pub fn spacing(&self) -> f64 {
        self.extent / (self.nodes - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        // Pin the last node to the extent exactly.
        if i == self.nodes - 1 {
            self.extent
        } else {
            i as f64 * self.spacing()
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| self.coord(i)).collect()
    }

    /// Lebesgue measure |ω|.
    pub fn measure(&self) -> f64 {
        self.extent
    }

    pub fn contains_closure(&self, x: f64) -> bool {
        (0.0..=self.extent).contains(&x)
    }

    pub fn boundary_node(&self, index: usize) -> Option<BoundaryNode> {
        self.boundary.iter().copied().find(|b| b.index == index)
    }
}

/// Observation part γ* of the lateral boundary, as cross-section node indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubBoundary {
    nodes: Vec<usize>,
}

impl SubBoundary {
    pub fn new(cs: &CrossSection, nodes: Vec<usize>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Contract("observation sub-boundary is empty".into()));
        }
        if let Some(&bad) = nodes.iter().find(|&&n| cs.boundary_node(n).is_none()) {
            return Err(Error::Contract(format!("node {bad} is not a boundary node of the cross-section")));
        }
        let mut nodes = nodes;
        nodes.sort_unstable();
        nodes.dedup();
        Ok(SubBoundary { nodes })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn contains(&self, index: usize) -> bool {
        self.nodes.binary_search(&index).is_ok()
    }
}

/// Picks γ* = {x' ∈ γ : (x' − x'₀)·ν'(x') ≥ 0} for an exterior center x'₀.
pub fn select_observation_boundary(cs: &CrossSection, x0: f64) -> Result<SubBoundary> {
    if cs.contains_closure(x0) {
        return Err(Error::InvalidCenter {
            center: x0,
            lo: 0.0,
            hi: cs.extent,
        });
    }
    let nodes = cs
        .boundary
        .iter()
        .filter(|b| (cs.coord(b.index) - x0) * b.normal >= 0.0)
        .map(|b| b.index)
        .collect();
    SubBoundary::new(cs, nodes)
}

/// Tensor grid ω_h × {−X … X} × {0 … T}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveguideGrid {
    pub cross_section: CrossSection,
    pub half_length: f64,
    pub axis_nodes: usize,
    pub horizon: f64,
    pub steps: usize,
}

impl WaveguideGrid {
    pub fn new(cs: CrossSection, half_length: f64, axis_nodes: usize, horizon: f64, steps: usize) -> Result<Self> {
        if !(half_length > 0.0) || !half_length.is_finite() {
            return Err(Error::config("grid.half_length", format!("must be positive, got {half_length}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::config("grid.horizon", format!("must be positive, got {horizon}")));
        }
        if axis_nodes < 3 {
            return Err(Error::config("grid.axis_nodes", format!("need at least 3 nodes, got {axis_nodes}")));
        }
        if axis_nodes % 2 == 0 {
            return Err(Error::config(
                "grid.axis_nodes",
                format!("must be odd so that x_n = 0 is a grid node, got {axis_nodes}"),
            ));
        }
        if steps < 3 {
            return Err(Error::config("grid.steps", format!("need at least 3 time steps, got {steps}")));
        }
        Ok(WaveguideGrid {
            cross_section: cs,
            half_length,
            axis_nodes,
            horizon,
            steps,
        })
    }

    /// Same space grid with a different time discretization.
    pub fn with_time(&self, horizon: f64, steps: usize) -> Result<Self> {
        WaveguideGrid::new(self.cross_section.clone(), self.half_length, self.axis_nodes, horizon, steps)
    }

    pub fn n1(&self) -> usize {
        self.cross_section.nodes
    }

    pub fn nn(&self) -> usize {
        self.axis_nodes
    }

    pub fn len(&self) -> usize {
        self.n1() * self.nn()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h1(&self) -> f64 {
        self.cross_section.spacing()
    }

    pub fn hn(&self) -> f64 {
        2.0 * self.half_length / (self.axis_nodes - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n1() + i
    }

    #[inline]
    pub fn split(&self, k: usize) -> (usize, usize) {
        (k % self.n1(), k / self.n1())
    }

    pub fn x1(&self, i: usize) -> f64 {
        self.cross_section.coord(i)
    }

    pub fn xn(&self, j: usize) -> f64 {
        let mid = (self.axis_nodes - 1) / 2;
        (j as f64 - mid as f64) * self.hn()
    }

    /// Index of the axial node x_n = 0.
    pub fn axial_center(&self) -> usize {
        (self.axis_nodes - 1) / 2
    }

    pub fn time(&self, m: usize) -> f64 {
        if m == self.steps {
            self.horizon
        } else {
            m as f64 * self.dt()
        }
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.n1() || j + 1 == self.nn()
    }

    pub fn transverse_weight(&self, i: usize) -> f64 {
        trapezoid_weight(i, self.n1(), self.h1())
    }

    pub fn axial_weight(&self, j: usize) -> f64 {
        trapezoid_weight(j, self.nn(), self.hn())
    }

    /// Tensor trapezoidal quadrature weight of node (i, j).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.transverse_weight(i) * self.axial_weight(j)
    }

    /// Evaluates `f(x1, xn)` at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.nn() {
            let xn = self.xn(j);
            for i in 0..self.n1() {
                out.push(f(self.x1(i), xn));
            }
        }
        out
    }
}

/// Composite trapezoid weight of node `k` out of `n` with spacing `h`.
pub fn trapezoid_weight(k: usize, n: usize, h: f64) -> f64 {
    if k == 0 || k + 1 == n {
        0.5 * h
    } else {
        h
    }
}
