//! Immutable per-deployment context built from a [`SiteConfig`].

use crate::config::SiteConfig;
use crate::error::{DflError, Result};
use crate::geometry::{
    build_grid, neighbors, Adjacency, Grid, LinkGeometry, LinkId, NeighborMode, NodeLayout, Point,
    Segment, WallSet,
};
use crate::rss_model::{Alphabet, DeltaTable};

#[derive(Debug, Clone)]
pub struct Site {
    config: SiteConfig,
    hash: String,
    layout: NodeLayout,
    links: Vec<LinkGeometry>,
    walls: WallSet,
    grid: Grid,
    alphabet: Alphabet,
    deltas: DeltaTable,
    max_deltas: Vec<f64>,
}

impl Site {
    pub fn new(config: SiteConfig) -> Result<Self> {
        config.validate()?;
        let layout = NodeLayout::new(config.nodes.iter().map(|n| (n.id, Point::new(n.x, n.y))))?;
        let links = layout.links(&config.channels)?;
        let walls = WallSet::new(
            config
                .walls
                .iter()
                .map(|[a, b]| Segment { a: Point::new(a[0], a[1]), b: Point::new(b[0], b[1]) })
                .collect(),
        )?;
        let entrances: Vec<Point> = config.entrances.iter().map(|e| Point::new(e[0], e[1])).collect();
        let grid = build_grid(config.grid.bounds, config.grid.spacing_m, &walls, &entrances)?;
        let alphabet = Alphabet::new(config.alphabet.min_dbm, config.alphabet.max_dbm)?;
        let deltas = DeltaTable::new(&grid, &links);
        let max_deltas = deltas.max_per_link();
        Ok(Site {
            hash: config.hash(),
            config,
            layout,
            links,
            walls,
            grid,
            alphabet,
            deltas,
            max_deltas,
        })
    }

    pub fn config(&self) -> &SiteConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn layout(&self) -> &NodeLayout {
        &self.layout
    }

    pub fn links(&self) -> &[LinkGeometry] {
        &self.links
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn link_index(&self, id: LinkId) -> Option<usize> {
        self.links.binary_search_by(|l| l.id.cmp(&id)).ok()
    }

    pub fn walls(&self) -> &WallSet {
        &self.walls
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn deltas(&self) -> &DeltaTable {
        &self.deltas
    }

    /// Largest in-area excess path length per link.
    pub fn max_deltas(&self) -> &[f64] {
        &self.max_deltas
    }

    pub fn adjacency(&self, mode: NeighborMode) -> Adjacency {
        neighbors(&self.grid, &self.walls, self.config.motion.max_step_m, mode)
    }

    /// Coordinate of a state index; `None` for the sentinel.
    pub fn pixel_point(&self, k: usize) -> Option<Point> {
        self.grid.point(k)
    }

    pub fn check_node_ids(&self, ids: &[u32]) -> Result<()> {
        for id in ids {
            if self.layout.get(*id).is_none() {
                return Err(DflError::Input(format!("unknown node id {id}")));
            }
        }
        Ok(())
    }
}
