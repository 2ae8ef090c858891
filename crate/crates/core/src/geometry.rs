//! Node layout, links, the localization grid and wall-aware adjacency.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{DflError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

pub type NodeId = u32;
pub type Channel = u8;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeLayout {
    nodes: BTreeMap<NodeId, Point>,
}

impl NodeLayout {
    pub fn new(nodes: impl IntoIterator<Item = (NodeId, Point)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, p) in nodes {
            if !p.is_finite() {
                return Err(DflError::Config(format!("node {id} has a non-finite coordinate")));
            }
            if map.insert(id, p).is_some() {
                return Err(DflError::Config(format!("duplicate node id {id}")));
            }
        }
        Ok(NodeLayout { nodes: map })
    }

    pub fn get(&self, id: NodeId) -> Option<Point> {
        self.nodes.get(&id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Every directed (tx, rx, channel) link, ordered by (tx, rx, channel).
    pub fn links(&self, channels: &[Channel]) -> Result<Vec<LinkGeometry>> {
        let mut channels = channels.to_vec();
        channels.sort_unstable();
        channels.dedup();
        let mut out = Vec::with_capacity(self.len() * self.len().saturating_sub(1) * channels.len());
        for (&tx, &tx_pos) in &self.nodes {
            for (&rx, &rx_pos) in &self.nodes {
                if tx == rx {
                    continue;
                }
                for &channel in &channels {
                    out.push(LinkGeometry::new(LinkId { tx, rx, channel }, tx_pos, rx_pos)?);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId {
    pub tx: NodeId,
    pub rx: NodeId,
    pub channel: Channel,
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}@{}", self.tx, self.rx, self.channel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub id: LinkId,
    pub tx: Point,
    pub rx: Point,
    pub length: f64,
}

impl LinkGeometry {
    pub fn new(id: LinkId, tx: Point, rx: Point) -> Result<Self> {
        if id.tx == id.rx {
            return Err(DflError::Config(format!("link {id} has tx == rx")));
        }
        let length = tx.distance(&rx);
        if !(length > 0.0) {
            return Err(DflError::Config(format!("link {id} has zero length")));
        }
        Ok(LinkGeometry { id, tx, rx, length })
    }
}

/// `d(p, tx) + d(p, rx) - d(tx, rx)`, clamped at zero against rounding.
pub fn excess_path_length(point: Point, link: &LinkGeometry) -> f64 {
    (point.distance(&link.tx) + point.distance(&link.rx) - link.length).max(0.0)
}

/// Largest excess path length over the in-area pixels; the sentinel is excluded.
pub fn max_excess_path_length(grid: &Grid, link: &LinkGeometry) -> Result<f64> {
    if grid.is_empty() {
        return Err(DflError::Config("grid has no in-area pixels".into()));
    }
    Ok(grid
        .points()
        .iter()
        .map(|p| excess_path_length(*p, link))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WallSet {
    segments: Vec<Segment>,
}

impl WallSet {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        for s in &segments {
            if !s.a.is_finite() || !s.b.is_finite() {
                return Err(DflError::Config("wall segment has a non-finite endpoint".into()));
            }
            if s.a == s.b {
                return Err(DflError::Config("wall segment endpoints coincide".into()));
            }
        }
        Ok(WallSet { segments })
    }

    pub fn empty() -> Self {
        WallSet::default()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

fn orientation(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn within_box(a: Point, b: Point, c: Point) -> bool {
    c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
}

/// Closed-segment intersection. Touching and collinear overlap count.
fn segments_intersect(p: Point, q: Point, a: Point, b: Point) -> bool {
    let d1 = orientation(a, b, p);
    let d2 = orientation(a, b, q);
    let d3 = orientation(p, q, a);
    let d4 = orientation(p, q, b);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && within_box(a, b, p))
        || (d2 == 0.0 && within_box(a, b, q))
        || (d3 == 0.0 && within_box(p, q, a))
        || (d4 == 0.0 && within_box(p, q, b))
}

pub fn segment_intersects_wall(p: Point, q: Point, walls: &WallSet) -> bool {
    walls
        .segments
        .iter()
        .any(|w| segments_intersect(p, q, w.a, w.b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }
}

/// A regular lattice of in-area pixels `0..P` plus the out-of-area sentinel `P`.
///
/// Pixels are stored row-major: index `iy * nx + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<Point>,
    entrance: Vec<bool>,
    spacing: f64,
    nx: usize,
    ny: usize,
}

impl Grid {
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, k: usize) -> Option<Point> {
        self.points.get(k).copied()
    }

    /// Number of in-area pixels, `P`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the out-of-area sentinel.
    pub fn sentinel(&self) -> usize {
        self.points.len()
    }

    /// `P + 1`.
    pub fn num_states(&self) -> usize {
        self.points.len() + 1
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn is_entrance(&self, k: usize) -> bool {
        self.entrance.get(k).copied().unwrap_or(false)
    }

    pub fn entrances(&self) -> impl Iterator<Item = usize> + '_ {
        self.entrance
            .iter()
            .enumerate()
            .filter_map(|(k, &e)| e.then_some(k))
    }

    pub fn nearest(&self, p: Point) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, q) in self.points.iter().enumerate() {
            let d = q.distance(&p);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// Pairs of lattice-adjacent pixels (horizontal then vertical).
    pub fn lattice_edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let k = iy * self.nx + ix;
                if ix + 1 < self.nx {
                    edges.push((k, k + 1));
                }
                if iy + 1 < self.ny {
                    edges.push((k, k + self.nx));
                }
            }
        }
        edges
    }
}

fn lattice_count(extent: f64, spacing: f64) -> usize {
    (extent / spacing + 1e-9).floor() as usize + 1
}

pub fn build_grid(bounds: Bounds, spacing: f64, walls: &WallSet, entrances: &[Point]) -> Result<Grid> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(DflError::Config(format!("grid spacing must be positive, got {spacing}")));
    }
    if !(bounds.width() > 0.0 && bounds.height() > 0.0) {
        return Err(DflError::Config("grid bounds are degenerate".into()));
    }
    if spacing > bounds.width() || spacing > bounds.height() {
        return Err(DflError::Config(format!(
            "grid spacing {spacing} m exceeds the bounds {} x {} m",
            bounds.width(),
            bounds.height()
        )));
    }
    let nx = lattice_count(bounds.width(), spacing);
    let ny = lattice_count(bounds.height(), spacing);
    let mut points = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            points.push(Point::new(
                bounds.min_x + ix as f64 * spacing,
                bounds.min_y + iy as f64 * spacing,
            ));
        }
    }
    let mut grid = Grid {
        entrance: vec![false; points.len()],
        points,
        spacing,
        nx,
        ny,
    };
    for e in entrances {
        if !e.is_finite() {
            return Err(DflError::Config("entrance coordinate is not finite".into()));
        }
        let k = grid.nearest(*e);
        grid.entrance[k] = true;
    }
    if entrances.is_empty() && !walls.is_empty() && is_enclosed(&grid, bounds, walls) {
        return Err(DflError::Config(
            "walls enclose the area but no entrance-exit location was declared".into(),
        ));
    }
    Ok(grid)
}

/// True when no pixel has a straight, wall-free path to just outside the bounds.
fn is_enclosed(grid: &Grid, bounds: Bounds, walls: &WallSet) -> bool {
    let margin = grid.spacing;
    !grid.points.iter().any(|p| {
        let exits = [
            Point::new(bounds.min_x - margin, p.y),
            Point::new(bounds.max_x + margin, p.y),
            Point::new(p.x, bounds.min_y - margin),
            Point::new(p.x, bounds.max_y + margin),
        ];
        exits.iter().any(|q| !segment_intersects_wall(*p, *q, walls))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborMode {
    /// Walls block moves and only entrance-exit pixels connect to the sentinel.
    Walls,
    /// Ignore walls and entrance-exit flags: every pixel connects to the sentinel.
    NoWalls,
}

/// Symmetric, irreflexive adjacency over the `P + 1` states.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    lists: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        for (k, list) in lists.iter().enumerate() {
            for &w in list {
                if w >= n || w == k {
                    return Err(DflError::Input(format!("invalid neighbor {w} of state {k}")));
                }
                if !lists[w].contains(&k) {
                    return Err(DflError::Input(format!("adjacency {k}->{w} is not symmetric")));
                }
            }
        }
        Ok(Adjacency { lists })
    }

    pub fn num_states(&self) -> usize {
        self.lists.len()
    }

    pub fn of(&self, k: usize) -> &[usize] {
        &self.lists[k]
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        self.lists[a].contains(&b)
    }
}

pub fn neighbors(grid: &Grid, walls: &WallSet, max_step: f64, mode: NeighborMode) -> Adjacency {
    let p = grid.len();
    let mut lists = vec![Vec::new(); p + 1];
    for k in 0..p {
        for w in (k + 1)..p {
            let (a, b) = (grid.points[k], grid.points[w]);
            let d = a.distance(&b);
            if d > 0.0 && d <= max_step + 1e-12 {
                if mode == NeighborMode::Walls && segment_intersects_wall(a, b, walls) {
                    continue;
                }
                lists[k].push(w);
                lists[w].push(k);
            }
        }
    }
    for k in 0..p {
        if mode == NeighborMode::NoWalls || grid.entrance[k] {
            lists[k].push(p);
            lists[p].push(k);
        }
    }
    Adjacency { lists }
}
