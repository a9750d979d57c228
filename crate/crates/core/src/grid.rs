//! Cell raster, masking, region extraction and layout hashing.
//!
//! Coordinates use a bottom-left origin: `x` grows east, `y` grows north.
//! Cells are stored row-major with `index = y * width + x`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest accepted grid side.
pub const MIN_SIDE: usize = 4;

/// A cell position. Components are signed so that off-grid positions
/// (a base cell hanging over the outline) can be represented and rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellCoord {
    pub x: i32,
    pub y: i32,
}

impl CellCoord {
    pub const fn new(x: i32, y: i32) -> Self {
        CellCoord { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        CellCoord::new(self.x + dx, self.y + dy)
    }

    /// Key used for the y-major, then x ordering of cells.
    pub fn row_major_key(self) -> (i32, i32) {
        (self.y, self.x)
    }

    pub fn neighbors4(self) -> [CellCoord; 4] {
        [
            self.offset(1, 0),
            self.offset(-1, 0),
            self.offset(0, 1),
            self.offset(0, -1),
        ]
    }
}

impl fmt::Display for CellCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Identifier of a placed wall. Ids start at 1 and follow placement order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WallId(pub u32);

impl WallId {
    /// Zero-based slot in a wall list.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for WallId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("grid {width}x{height} is smaller than the {MIN_SIDE}x{MIN_SIDE} minimum")]
    TooSmall { width: usize, height: usize },
    #[error("masked cell {0} lies outside the grid")]
    MaskOutOfBounds(CellCoord),
    #[error("every cell is masked")]
    NoFreeCell,
}

/// Grid dimensions and the cells excluded from the plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub masked: BTreeSet<CellCoord>,
}

impl GridSpec {
    pub fn new(width: usize, height: usize) -> Self {
        GridSpec {
            width,
            height,
            masked: BTreeSet::new(),
        }
    }

    pub fn with_mask(mut self, cells: impl IntoIterator<Item = CellCoord>) -> Self {
        self.masked.extend(cells);
        self
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, c: CellCoord) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.width < MIN_SIDE || self.height < MIN_SIDE {
            return Err(GridError::TooSmall {
                width: self.width,
                height: self.height,
            });
        }
        if let Some(&c) = self.masked.iter().find(|&&c| !self.contains(c)) {
            return Err(GridError::MaskOutOfBounds(c));
        }
        if self.masked.len() >= self.cell_count() {
            return Err(GridError::NoFreeCell);
        }
        Ok(())
    }

    /// Number of cells that are not masked.
    pub fn free_cell_count(&self) -> usize {
        self.cell_count() - self.masked.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Free,
    Masked,
    WallHard(WallId),
    WallSoft(WallId),
}

impl CellState {
    pub fn is_wall(self) -> bool {
        matches!(self, CellState::WallHard(_) | CellState::WallSoft(_))
    }

    pub fn wall_id(self) -> Option<WallId> {
        match self {
            CellState::WallHard(id) | CellState::WallSoft(id) => Some(id),
            _ => None,
        }
    }
}

/// Per-state cell counts; always sums to `W * H`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellCounts {
    pub free: usize,
    pub masked: usize,
    pub hard: usize,
    pub soft: usize,
}

impl CellCounts {
    pub fn total(&self) -> usize {
        self.free + self.masked + self.hard + self.soft
    }

    pub fn walls(&self) -> usize {
        self.hard + self.soft
    }
}

/// Dense raster of cell states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutGrid {
    spec: GridSpec,
    cells: Vec<CellState>,
}

impl LayoutGrid {
    pub fn new(spec: GridSpec) -> Result<Self, GridError> {
        spec.validate()?;
        let mut cells = vec![CellState::Free; spec.cell_count()];
        for c in &spec.masked {
            cells[c.y as usize * spec.width + c.x as usize] = CellState::Masked;
        }
        Ok(LayoutGrid { spec, cells })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn height(&self) -> usize {
        self.spec.height
    }

    pub fn contains(&self, c: CellCoord) -> bool {
        self.spec.contains(c)
    }

    pub fn index(&self, c: CellCoord) -> usize {
        debug_assert!(self.contains(c));
        c.y as usize * self.spec.width + c.x as usize
    }

    pub fn coord(&self, index: usize) -> CellCoord {
        CellCoord::new(
            (index % self.spec.width) as i32,
            (index / self.spec.width) as i32,
        )
    }

    /// State of `c`, or `None` when `c` is off the grid.
    pub fn get(&self, c: CellCoord) -> Option<CellState> {
        self.contains(c).then(|| self.cells[self.index(c)])
    }

    pub(crate) fn set(&mut self, c: CellCoord, state: CellState) {
        let i = self.index(c);
        debug_assert!(self.cells[i] != CellState::Masked, "masked cells are immutable");
        self.cells[i] = state;
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn counts(&self) -> CellCounts {
        let mut counts = CellCounts::default();
        for s in &self.cells {
            match s {
                CellState::Free => counts.free += 1,
                CellState::Masked => counts.masked += 1,
                CellState::WallHard(_) => counts.hard += 1,
                CellState::WallSoft(_) => counts.soft += 1,
            }
        }
        counts
    }

    /// Stable 64-bit FNV-1a digest over `(W, H, cells)`.
    pub fn layout_hash(&self) -> u64 {
        let mut h = FnvHasher::default();
        h.write(&(self.spec.width as u32).to_le_bytes());
        h.write(&(self.spec.height as u32).to_le_bytes());
        for s in &self.cells {
            let (tag, id) = match *s {
                CellState::Free => (0u8, 0u32),
                CellState::Masked => (1, 0),
                CellState::WallHard(w) => (2, w.0),
                CellState::WallSoft(w) => (3, w.0),
            };
            h.write(&[tag]);
            h.write(&id.to_le_bytes());
        }
        h.finish()
    }

    /// 4-connected components of free cells, ordered by their smallest cell.
    pub fn free_regions(&self) -> Vec<Region> {
        self.label_free_regions().0
    }

    /// Like [`free_regions`](Self::free_regions), also returning a per-cell
    /// region index (`usize::MAX` for non-free cells).
    pub fn label_free_regions(&self) -> (Vec<Region>, Vec<usize>) {
        let mut labels = vec![usize::MAX; self.cells.len()];
        let mut regions = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..self.cells.len() {
            if self.cells[start] != CellState::Free || labels[start] != usize::MAX {
                continue;
            }
            let label = regions.len();
            labels[start] = label;
            queue.push_back(start);
            let mut cells = Vec::new();
            while let Some(i) = queue.pop_front() {
                let c = self.coord(i);
                cells.push(c);
                for n in c.neighbors4() {
                    if !self.contains(n) {
                        continue;
                    }
                    let j = self.index(n);
                    if self.cells[j] == CellState::Free && labels[j] == usize::MAX {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
            regions.push(Region::from_cells(cells));
        }
        (regions, labels)
    }
}

/// A 4-connected set of free cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    cells: Vec<CellCoord>,
    min: CellCoord,
    max: CellCoord,
}

impl Region {
    /// Builds a region from its cells; `cells` must be non-empty.
    pub fn from_cells(mut cells: Vec<CellCoord>) -> Self {
        assert!(!cells.is_empty(), "a region holds at least one cell");
        cells.sort_by_key(|c| c.row_major_key());
        cells.dedup();
        let (mut min, mut max) = (cells[0], cells[0]);
        for c in &cells {
            min.x = min.x.min(c.x);
            min.y = min.y.min(c.y);
            max.x = max.x.max(c.x);
            max.y = max.y.max(c.y);
        }
        Region { cells, min, max }
    }

    /// Cells sorted y-major, then x.
    pub fn cells(&self) -> &[CellCoord] {
        &self.cells
    }

    pub fn area(&self) -> usize {
        self.cells.len()
    }

    /// Lexicographically smallest cell (y-major, then x).
    pub fn first_cell(&self) -> CellCoord {
        self.cells[0]
    }

    /// `(min, max)` corners of the bounding box, inclusive.
    pub fn bounding_box(&self) -> (CellCoord, CellCoord) {
        (self.min, self.max)
    }

    pub fn contains(&self, c: CellCoord) -> bool {
        self.cells
            .binary_search_by_key(&c.row_major_key(), |p| p.row_major_key())
            .is_ok()
    }

    /// Mean cell position.
    pub fn centroid(&self) -> (f64, f64) {
        let n = self.cells.len() as f64;
        let (sx, sy) = self
            .cells
            .iter()
            .fold((0.0, 0.0), |(sx, sy), c| (sx + c.x as f64, sy + c.y as f64));
        (sx / n, sy / n)
    }
}
