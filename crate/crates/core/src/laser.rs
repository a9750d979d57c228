//! Laser-wall placement engine.
//!
//! A wall has a hard base of three cells (the anchor plus one step in each of
//! its two directions). From each base end a ray marches outward, turning free
//! cells soft, until it reaches the outline, a masked cell, a hard cell, or a
//! soft cell owned by a wall whose infiltration is at least as strong. Soft
//! cells of strictly weaker walls are captured: the crossed cell changes owner
//! and the remainder of the victim's ray beyond it reverts to free space.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellCoord, CellState, GridError, GridSpec, LayoutGrid, Region, WallId};

/// Highest infiltration rate.
pub const MAX_INFILTRATION: u8 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::N => (0, 1),
            Direction::E => (1, 0),
            Direction::S => (0, -1),
            Direction::W => (-1, 0),
        }
    }

    pub fn step(self, c: CellCoord, n: i32) -> CellCoord {
        let (dx, dy) = self.delta();
        c.offset(dx * n, dy * n)
    }

    /// Quarter turn counter-clockwise: N -> W -> S -> E -> N.
    pub fn rotate_ccw(self) -> Self {
        match self {
            Direction::N => Direction::W,
            Direction::W => Direction::S,
            Direction::S => Direction::E,
            Direction::E => Direction::N,
        }
    }

    pub fn rotate_cw(self) -> Self {
        self.rotate_ccw().rotate_ccw().rotate_ccw()
    }

    /// Mirror across the vertical axis (E <-> W).
    pub fn flip_horizontal(self) -> Self {
        match self {
            Direction::E => Direction::W,
            Direction::W => Direction::E,
            d => d,
        }
    }

    /// Mirror across the horizontal axis (N <-> S).
    pub fn flip_vertical(self) -> Self {
        match self {
            Direction::N => Direction::S,
            Direction::S => Direction::N,
            d => d,
        }
    }

    pub fn opposite(self) -> Self {
        self.rotate_ccw().rotate_ccw()
    }
}

use Direction::{E, N, S, W};

const SHAPE_TABLE: [(Direction, Direction); 6] = [(W, E), (S, N), (N, E), (N, W), (S, E), (S, W)];

/// One of the six library walls: two straight and four angled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct WallShape(u8);

impl WallShape {
    pub const COUNT: usize = 6;

    pub fn new(id: u8) -> Option<Self> {
        ((id as usize) < Self::COUNT).then_some(WallShape(id))
    }

    pub fn all() -> impl Iterator<Item = WallShape> {
        (0..Self::COUNT as u8).map(WallShape)
    }

    pub fn id(self) -> u8 {
        self.0
    }

    /// `(d1, d2)`: the directions of segment 1 and segment 2.
    pub fn directions(self) -> (Direction, Direction) {
        SHAPE_TABLE[self.0 as usize]
    }

    /// Looks up the shape whose direction set is `{a, b}`, in either order.
    pub fn from_directions(a: Direction, b: Direction) -> Option<Self> {
        SHAPE_TABLE
            .iter()
            .position(|&(d1, d2)| (d1, d2) == (a, b) || (d1, d2) == (b, a))
            .map(|i| WallShape(i as u8))
    }

    pub fn is_straight(self) -> bool {
        self.0 < 2
    }
}

impl TryFrom<u8> for WallShape {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        WallShape::new(v).ok_or_else(|| format!("wall shape {v} is not in 0..6"))
    }
}

impl From<WallShape> for u8 {
    fn from(s: WallShape) -> u8 {
        s.0
    }
}

/// The intent of a wall placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WallSpec {
    pub wall_id: WallId,
    pub shape: WallShape,
    pub anchor: CellCoord,
    pub infiltration: u8,
}

impl WallSpec {
    pub fn new(wall_id: u32, shape: WallShape, anchor: CellCoord, infiltration: u8) -> Self {
        assert!(infiltration <= MAX_INFILTRATION, "infiltration must be 0..=9");
        WallSpec {
            wall_id: WallId(wall_id),
            shape,
            anchor,
            infiltration,
        }
    }

    /// Base cells in the order anchor, anchor + d1, anchor + d2.
    pub fn base_cells(&self) -> [CellCoord; 3] {
        let (d1, d2) = self.shape.directions();
        [self.anchor, d1.step(self.anchor, 1), d2.step(self.anchor, 1)]
    }
}

/// The realized geometry of a wall.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacedWall {
    spec: WallSpec,
    rays: [Vec<CellCoord>; 2],
}

impl PlacedWall {
    pub fn spec(&self) -> &WallSpec {
        &self.spec
    }

    pub fn id(&self) -> WallId {
        self.spec.wall_id
    }

    pub fn infiltration(&self) -> u8 {
        self.spec.infiltration
    }

    pub fn base_cells(&self) -> [CellCoord; 3] {
        self.spec.base_cells()
    }

    /// Soft cells of ray 1 (along d1) and ray 2 (along d2), ordered outward.
    pub fn rays(&self) -> &[Vec<CellCoord>; 2] {
        &self.rays
    }

    pub fn radiation_points(&self) -> [CellCoord; 2] {
        let b = self.base_cells();
        [b[1], b[2]]
    }

    /// Last soft cell of each ray, or its radiation point when the ray is empty.
    pub fn endpoints(&self) -> [CellCoord; 2] {
        let rad = self.radiation_points();
        [
            self.rays[0].last().copied().unwrap_or(rad[0]),
            self.rays[1].last().copied().unwrap_or(rad[1]),
        ]
    }

    /// Anchor, two radiation points, two endpoints.
    pub fn keypoints(&self) -> [CellCoord; 5] {
        let rad = self.radiation_points();
        let end = self.endpoints();
        [self.spec.anchor, rad[0], rad[1], end[0], end[1]]
    }

    pub fn soft_len(&self) -> usize {
        self.rays[0].len() + self.rays[1].len()
    }

    /// Every cell the wall currently owns.
    pub fn cells(&self) -> impl Iterator<Item = CellCoord> + '_ {
        self.base_cells()
            .into_iter()
            .chain(self.rays[0].iter().copied())
            .chain(self.rays[1].iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    #[error("base cell {0} is outside the grid")]
    OutOfBounds(CellCoord),
    #[error("base cell {0} is occupied by a wall")]
    CollidesWall(CellCoord),
    #[error("base cell {0} is masked")]
    CollidesMask(CellCoord),
    #[error("wall id {got} placed out of order (expected {expected})")]
    OutOfOrder { expected: WallId, got: WallId },
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::OutOfBounds(_) => "out_of_bounds",
            Violation::CollidesWall(_) => "collides_wall",
            Violation::CollidesMask(_) => "collides_mask",
            Violation::OutOfOrder { .. } => "out_of_order",
        }
    }
}

/// Checks that all three base cells are on the grid and free.
pub fn validate_placement(grid: &LayoutGrid, spec: &WallSpec) -> Result<(), Violation> {
    let base = spec.base_cells();
    if let Some(&c) = base.iter().find(|&&c| !grid.contains(c)) {
        return Err(Violation::OutOfBounds(c));
    }
    for c in base {
        match grid.get(c) {
            Some(CellState::Free) => {}
            Some(CellState::Masked) => return Err(Violation::CollidesMask(c)),
            _ => return Err(Violation::CollidesWall(c)),
        }
    }
    Ok(())
}

/// One victim ray shortened by a stronger wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutEvent {
    pub victim: WallId,
    /// 0 for the ray along d1, 1 for the ray along d2.
    pub ray: usize,
    pub cells_freed: usize,
    pub cells_captured: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CutReport {
    pub events: Vec<CutEvent>,
}

impl CutReport {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    fn record(&mut self, victim: WallId, ray: usize, freed: usize) {
        if let Some(e) = self
            .events
            .iter_mut()
            .find(|e| e.victim == victim && e.ray == ray)
        {
            e.cells_freed += freed;
            e.cells_captured += 1;
        } else {
            self.events.push(CutEvent {
                victim,
                ray,
                cells_freed: freed,
                cells_captured: 1,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResimulateError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("wall {index} cannot be placed: {violation}")]
    Failed { index: usize, violation: Violation },
}

/// A grid together with the walls placed on it, in placement order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    grid: LayoutGrid,
    walls: Vec<PlacedWall>,
}

impl Layout {
    pub fn new(spec: GridSpec) -> Result<Self, GridError> {
        Ok(Layout {
            grid: LayoutGrid::new(spec)?,
            walls: Vec::new(),
        })
    }

    pub fn grid(&self) -> &LayoutGrid {
        &self.grid
    }

    pub fn walls(&self) -> &[PlacedWall] {
        &self.walls
    }

    pub fn wall(&self, id: WallId) -> &PlacedWall {
        &self.walls[id.index()]
    }

    pub fn next_wall_id(&self) -> WallId {
        WallId(self.walls.len() as u32 + 1)
    }

    pub fn layout_hash(&self) -> u64 {
        self.grid.layout_hash()
    }

    pub fn validate_placement(&self, spec: &WallSpec) -> Result<(), Violation> {
        if spec.wall_id != self.next_wall_id() {
            return Err(Violation::OutOfOrder {
                expected: self.next_wall_id(),
                got: spec.wall_id,
            });
        }
        validate_placement(&self.grid, spec)
    }

    /// Places a wall in place. On error the layout is untouched.
    pub fn place_wall(&mut self, spec: WallSpec) -> Result<CutReport, Violation> {
        self.validate_placement(&spec)?;
        let id = spec.wall_id;
        for c in spec.base_cells() {
            self.grid.set(c, CellState::WallHard(id));
        }
        let (d1, d2) = spec.shape.directions();
        let mut report = CutReport::default();
        let rays = [
            self.march(&spec, d1, &mut report),
            self.march(&spec, d2, &mut report),
        ];
        self.walls.push(PlacedWall { spec, rays });
        Ok(report)
    }

    /// Functional form of [`place_wall`](Self::place_wall).
    pub fn with_wall(&self, spec: WallSpec) -> Result<(Layout, CutReport), Violation> {
        let mut next = self.clone();
        let report = next.place_wall(spec)?;
        Ok((next, report))
    }

    fn march(&mut self, spec: &WallSpec, dir: Direction, report: &mut CutReport) -> Vec<CellCoord> {
        let id = spec.wall_id;
        let mut ray = Vec::new();
        let mut c = dir.step(spec.anchor, 2);
        while let Some(state) = self.grid.get(c) {
            match state {
                CellState::Free => {}
                CellState::WallSoft(victim) if self.wall(victim).infiltration() < spec.infiltration => {
                    self.capture(victim, c, report);
                }
                _ => break,
            }
            self.grid.set(c, CellState::WallSoft(id));
            ray.push(c);
            c = dir.step(c, 1);
        }
        ray
    }

    /// Removes `cell` from the victim's ray and frees the part beyond it.
    fn capture(&mut self, victim: WallId, cell: CellCoord, report: &mut CutReport) {
        let wall = &mut self.walls[victim.index()];
        let (ray, pos) = wall
            .rays
            .iter()
            .enumerate()
            .find_map(|(r, cells)| cells.iter().position(|&p| p == cell).map(|i| (r, i)))
            .expect("soft cell is owned by a ray of its wall");
        let beyond = wall.rays[ray].split_off(pos);
        for &p in &beyond[1..] {
            self.grid.set(p, CellState::Free);
        }
        report.record(victim, ray, beyond.len() - 1);
    }
}

/// Replays `walls` in order on a fresh grid.
pub fn resimulate(spec: &GridSpec, walls: &[WallSpec]) -> Result<Layout, ResimulateError> {
    let mut layout = Layout::new(spec.clone())?;
    for (index, w) in walls.iter().enumerate() {
        layout
            .place_wall(*w)
            .map_err(|violation| ResimulateError::Failed { index, violation })?;
    }
    Ok(layout)
}

/// Area and bounding-box aspect ratio of a room.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomMetrics {
    pub area: usize,
    pub proportion: f64,
}

pub fn room_metrics(region: &Region) -> RoomMetrics {
    let (min, max) = region.bounding_box();
    let bw = (max.x - min.x + 1) as f64;
    let bh = (max.y - min.y + 1) as f64;
    RoomMetrics {
        area: region.area(),
        proportion: bw.max(bh) / bw.min(bh),
    }
}

/// Labeled rooms (room `k` created by wall `k`) and the unlabeled rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoomMap {
    rooms: Vec<Region>,
    residual: Option<Region>,
}

impl RoomMap {
    /// Starting map: no rooms, the whole free space as residual. `None` when
    /// the free cells do not form exactly one region.
    pub fn initial(grid: &LayoutGrid) -> Option<Self> {
        let mut regions = grid.free_regions();
        (regions.len() == 1).then(|| RoomMap {
            rooms: Vec::new(),
            residual: regions.pop(),
        })
    }

    pub fn rooms(&self) -> &[Region] {
        &self.rooms
    }

    /// Room by 1-based id.
    pub fn room(&self, id: usize) -> &Region {
        &self.rooms[id - 1]
    }

    pub fn residual(&self) -> Option<&Region> {
        self.residual.as_ref()
    }

    /// Labeled rooms followed by the residual (as the last room).
    pub fn all_rooms(&self) -> Vec<Region> {
        self.rooms.iter().chain(&self.residual).cloned().collect()
    }

    pub fn total_area(&self) -> usize {
        self.rooms.iter().chain(&self.residual).map(Region::area).sum()
    }
}

/// How the new room is chosen between the two halves of a split residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoomAssignment {
    /// The half with fewer cells.
    Smaller,
    /// The half whose area is closest to the target; ties go to the smaller half.
    ClosestArea(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionReject {
    #[error("an accepted room was merged, split or consumed")]
    RoomDestroyed,
    #[error("the residual did not split into exactly two regions")]
    NoSplit,
}

impl PartitionReject {
    pub fn code(&self) -> &'static str {
        match self {
            PartitionReject::RoomDestroyed => "room_destroyed",
            PartitionReject::NoSplit => "no_split",
        }
    }
}

/// Relabels free space after wall `new_wall` was placed.
///
/// Every accepted room must survive as exactly one region that holds no other
/// room or residual cells; the residual must fall apart into exactly two
/// regions. One of those becomes room `new_wall` (chosen by `rule`, ties by
/// smallest cell), the other the new residual.
pub fn room_partition(
    grid: &LayoutGrid,
    prev: &RoomMap,
    new_wall: WallId,
    rule: RoomAssignment,
) -> Result<RoomMap, PartitionReject> {
    debug_assert_eq!(new_wall.0 as usize, prev.rooms.len() + 1);
    let residual = prev.residual.as_ref().ok_or(PartitionReject::NoSplit)?;

    // Old owner per cell: room index, `n_rooms` for the residual.
    const NONE: usize = usize::MAX;
    let n_rooms = prev.rooms.len();
    let mut owner = vec![NONE; grid.cells().len()];
    for (label, region) in prev.rooms.iter().chain([residual]).enumerate() {
        for &c in region.cells() {
            owner[grid.index(c)] = label;
        }
    }

    let regions = grid.free_regions();
    let mut origin = Vec::with_capacity(regions.len());
    for region in &regions {
        let mut label = NONE;
        for &c in region.cells() {
            match owner[grid.index(c)] {
                NONE => {}
                l if label == NONE => label = l,
                l if l != label => return Err(PartitionReject::RoomDestroyed),
                _ => {}
            }
        }
        origin.push(label);
    }

    let mut rooms = Vec::with_capacity(n_rooms + 1);
    for j in 0..n_rooms {
        let mut matches = regions.iter().zip(&origin).filter(|(_, &o)| o == j);
        match (matches.next(), matches.next()) {
            (Some((r, _)), None) => rooms.push(r.clone()),
            _ => return Err(PartitionReject::RoomDestroyed),
        }
    }
    if origin.contains(&NONE) {
        return Err(PartitionReject::NoSplit);
    }
    let halves: Vec<&Region> = regions
        .iter()
        .zip(&origin)
        .filter(|(_, &o)| o == n_rooms)
        .map(|(r, _)| r)
        .collect();
    let [a, b] = halves[..] else {
        return Err(PartitionReject::NoSplit);
    };
    // `a` has the smaller first cell, so it wins remaining ties.
    let pick_b = match rule {
        RoomAssignment::Smaller => b.area() < a.area(),
        RoomAssignment::ClosestArea(target) => {
            let da = a.area().abs_diff(target);
            let db = b.area().abs_diff(target);
            db < da || (db == da && b.area() < a.area())
        }
    };
    let (room, rest) = if pick_b { (b, a) } else { (a, b) };
    rooms.push(room.clone());
    Ok(RoomMap {
        rooms,
        residual: Some(rest.clone()),
    })
}

/// Symmetric room-connection matrix over 1-based room ids.
#[derive(Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    n: usize,
    bits: Vec<bool>,
}

impl AdjacencyMatrix {
    pub fn new(n: usize) -> Self {
        AdjacencyMatrix {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Whether rooms `a` and `b` (1-based) touch through a wall.
    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.bits[(a - 1) * self.n + (b - 1)]
    }

    pub fn connect_pair(&mut self, a: usize, b: usize) {
        self.bits[(a - 1) * self.n + (b - 1)] = true;
        self.bits[(b - 1) * self.n + (a - 1)] = true;
    }

    /// Connected pairs `(a, b)` with `a < b`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..=self.n).flat_map(move |a| {
            (a + 1..=self.n).filter_map(move |b| self.connected(a, b).then_some((a, b)))
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.bits.chunks(self.n.max(1)).take(self.n).map(|r| r.iter().map(|&b| b as u8).collect()).collect()
    }
}

impl fmt::Debug for AdjacencyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

/// Rooms `i` and `j` are adjacent when some wall cell has 4-neighbors in both.
pub fn adjacency_matrix(grid: &LayoutGrid, rooms: &[Region]) -> AdjacencyMatrix {
    let mut m = AdjacencyMatrix::new(rooms.len());
    let mut label = vec![0usize; grid.cells().len()];
    for (i, r) in rooms.iter().enumerate() {
        for &c in r.cells() {
            label[grid.index(c)] = i + 1;
        }
    }
    for (idx, state) in grid.cells().iter().enumerate() {
        if !state.is_wall() {
            continue;
        }
        let mut seen = [0usize; 4];
        let mut k = 0;
        for n in grid.coord(idx).neighbors4() {
            if grid.contains(n) {
                let l = label[grid.index(n)];
                if l != 0 && !seen[..k].contains(&l) {
                    seen[k] = l;
                    k += 1;
                }
            }
        }
        for a in 0..k {
            for b in a + 1..k {
                m.connect_pair(seen[a], seen[b]);
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: i32, y: i32) -> CellCoord {
        CellCoord::new(x, y)
    }

    fn shape(id: u8) -> WallShape {
        WallShape::new(id).unwrap()
    }

    fn empty(w: usize, h: usize) -> Layout {
        Layout::new(GridSpec::new(w, h)).unwrap()
    }

    fn soft_cells(layout: &Layout, id: u32) -> Vec<CellCoord> {
        let mut v: Vec<_> = layout
            .grid()
            .cells()
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == CellState::WallSoft(WallId(id)))
            .map(|(i, _)| layout.grid().coord(i))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn shape_table() {
        assert_eq!(WallShape::all().count(), 6);
        for s in WallShape::all() {
            let (a, b) = s.directions();
            assert_ne!(a, b);
            if s.is_straight() {
                assert_eq!(a.opposite(), b);
            } else {
                assert_eq!(a.rotate_ccw() == b || a.rotate_cw() == b, true);
            }
            assert_eq!(WallShape::from_directions(b, a), Some(s));
        }
        assert_eq!(WallShape::from_directions(N, N), None);
    }

    #[test]
    fn validation() {
        let l = empty(5, 5);
        let spec = WallSpec::new(1, shape(0), c(2, 2), 0);
        assert_eq!(l.validate_placement(&spec), Ok(()));
        let spec = WallSpec::new(1, shape(0), c(0, 2), 0);
        assert_eq!(
            l.validate_placement(&spec),
            Err(Violation::OutOfBounds(c(-1, 2)))
        );

        let mut l = empty(5, 5);
        l.place_wall(WallSpec::new(1, shape(1), c(2, 2), 5)).unwrap();
        for s in WallShape::all() {
            assert_eq!(
                l.validate_placement(&WallSpec::new(2, s, c(2, 2), 3)),
                Err(Violation::CollidesWall(c(2, 2)))
            );
        }
        assert!(matches!(
            l.validate_placement(&WallSpec::new(3, shape(0), c(0, 0), 3)),
            Err(Violation::OutOfOrder { .. })
        ));

        let masked = Layout::new(GridSpec::new(5, 5).with_mask([c(3, 2)])).unwrap();
        assert_eq!(
            masked.validate_placement(&WallSpec::new(1, shape(0), c(2, 2), 0)),
            Err(Violation::CollidesMask(c(3, 2)))
        );
    }

    #[test]
    fn vertical_wall_on_5x5() {
        let mut l = empty(5, 5);
        let report = l.place_wall(WallSpec::new(1, shape(1), c(2, 2), 5)).unwrap();
        assert!(report.is_empty());
        let w = &l.walls()[0];
        assert_eq!(w.base_cells(), [c(2, 2), c(2, 1), c(2, 3)]);
        assert_eq!(w.rays(), &[vec![c(2, 0)], vec![c(2, 4)]]);
        assert_eq!(w.endpoints(), [c(2, 0), c(2, 4)]);
        assert_eq!(
            w.keypoints(),
            [c(2, 2), c(2, 1), c(2, 3), c(2, 0), c(2, 4)]
        );
        let areas: Vec<_> = l.grid().free_regions().iter().map(Region::area).collect();
        assert_eq!(areas, vec![10, 10]);
    }

    #[test]
    fn stronger_wall_cuts_weaker_ray() {
        let mut l = empty(7, 7);
        l.place_wall(WallSpec::new(1, shape(1), c(3, 3), 2)).unwrap();
        assert_eq!(soft_cells(&l, 1), vec![c(3, 0), c(3, 1), c(3, 5), c(3, 6)]);

        let report = l.place_wall(WallSpec::new(2, shape(0), c(5, 5), 5)).unwrap();
        assert_eq!(
            report.events,
            vec![CutEvent {
                victim: WallId(1),
                ray: 1,
                cells_freed: 1,
                cells_captured: 1
            }]
        );
        assert_eq!(l.grid().get(c(3, 6)), Some(CellState::Free));
        assert_eq!(l.grid().get(c(3, 5)), Some(CellState::WallSoft(WallId(2))));
        let b = &l.walls()[1];
        assert_eq!(b.rays()[0], vec![c(3, 5), c(2, 5), c(1, 5), c(0, 5)]);
        assert_eq!(b.endpoints(), [c(0, 5), c(6, 5)]);
        let a = &l.walls()[0];
        assert_eq!(a.rays()[1], Vec::<CellCoord>::new());
        assert_eq!(a.endpoints()[1], c(3, 4));

        let regions = l.grid().free_regions();
        let areas: Vec<_> = regions.iter().map(Region::area).collect();
        assert_eq!(areas, vec![15, 15, 7]);
        assert_eq!(regions[2].first_cell(), c(0, 6));
    }

    #[test]
    fn weaker_ray_is_blocked() {
        let mut l = empty(7, 7);
        l.place_wall(WallSpec::new(1, shape(1), c(3, 3), 5)).unwrap();
        let report = l.place_wall(WallSpec::new(2, shape(0), c(5, 1), 3)).unwrap();
        assert!(report.is_empty());
        let b = &l.walls()[1];
        assert!(b.rays()[0].is_empty());
        assert_eq!(b.endpoints(), [c(4, 1), c(6, 1)]);
    }

    #[test]
    fn equal_infiltration_blocks() {
        let mut l = empty(7, 7);
        l.place_wall(WallSpec::new(1, shape(1), c(3, 3), 4)).unwrap();
        let report = l.place_wall(WallSpec::new(2, shape(0), c(5, 5), 4)).unwrap();
        assert!(report.is_empty());
        assert_eq!(l.walls()[1].rays()[0], Vec::<CellCoord>::new());
    }

    #[test]
    fn capture_frees_victim_tail() {
        let mut l = empty(12, 7);
        l.place_wall(WallSpec::new(1, shape(0), c(2, 3), 1)).unwrap();
        assert_eq!(l.walls()[0].rays()[1].len(), 8);
        let report = l.place_wall(WallSpec::new(2, shape(1), c(9, 1), 6)).unwrap();
        assert_eq!(
            report.events,
            vec![CutEvent {
                victim: WallId(1),
                ray: 1,
                cells_freed: 2,
                cells_captured: 1
            }]
        );
        assert_eq!(l.walls()[0].rays()[1].last(), Some(&c(8, 3)));
        assert_eq!(l.walls()[1].rays()[1], vec![c(9, 3), c(9, 4), c(9, 5), c(9, 6)]);
        assert_eq!(l.grid().get(c(10, 3)), Some(CellState::Free));
        assert_eq!(l.grid().get(c(11, 3)), Some(CellState::Free));
    }

    #[test]
    fn resimulate_matches_incremental() {
        let specs = [
            WallSpec::new(1, shape(1), c(3, 3), 2),
            WallSpec::new(2, shape(0), c(5, 5), 5),
        ];
        let mut inc = empty(7, 7);
        for s in specs {
            inc.place_wall(s).unwrap();
        }
        let spec = GridSpec::new(7, 7);
        let replay = resimulate(&spec, &specs).unwrap();
        assert_eq!(replay.layout_hash(), inc.layout_hash());
        assert_eq!(replay, inc);
        assert_eq!(
            resimulate(&spec, &specs).unwrap().layout_hash(),
            replay.layout_hash()
        );
        assert_eq!(resimulate(&spec, &[]).unwrap(), empty(7, 7));
        let bad = [specs[0], WallSpec::new(2, shape(0), c(3, 3), 1)];
        assert!(matches!(
            resimulate(&spec, &bad),
            Err(ResimulateError::Failed { index: 1, .. })
        ));
    }

    #[test]
    fn partition_first_wall_ties_to_smallest_cell() {
        let mut l = empty(5, 5);
        let prev = RoomMap::initial(l.grid()).unwrap();
        l.place_wall(WallSpec::new(1, shape(1), c(2, 2), 5)).unwrap();
        for rule in [RoomAssignment::Smaller, RoomAssignment::ClosestArea(7)] {
            let rooms = room_partition(l.grid(), &prev, WallId(1), rule).unwrap();
            assert!(rooms.room(1).contains(c(0, 0)));
            assert_eq!(rooms.residual().unwrap().area(), 10);
        }
    }

    #[test]
    fn partition_l_wall() {
        // Shape 2 (N,E) at (1,1): hard (1,1),(1,2),(2,1); rays north and east.
        let mut l = empty(5, 5);
        let prev = RoomMap::initial(l.grid()).unwrap();
        l.place_wall(WallSpec::new(1, shape(2), c(1, 1), 0)).unwrap();
        let rooms = room_partition(l.grid(), &prev, WallId(1), RoomAssignment::Smaller).unwrap();
        assert_eq!(rooms.room(1).area(), 9);
        assert!(rooms.room(1).contains(c(0, 0)));
        assert_eq!(rooms.residual().unwrap().area(), 9);
        assert_eq!(room_metrics(rooms.room(1)).proportion, 1.0);
    }

    #[test]
    fn partition_assignment_rules() {
        // Vertical wall at x=3 on 10x6: left 18 cells, right 36.
        let mut l = empty(10, 6);
        let prev = RoomMap::initial(l.grid()).unwrap();
        l.place_wall(WallSpec::new(1, shape(1), c(3, 2), 0)).unwrap();
        let small = room_partition(l.grid(), &prev, WallId(1), RoomAssignment::Smaller).unwrap();
        assert_eq!(small.room(1).area(), 18);
        let close = room_partition(l.grid(), &prev, WallId(1), RoomAssignment::ClosestArea(30)).unwrap();
        assert_eq!(close.room(1).area(), 36);
        // Equidistant: the smaller half wins.
        let tie = room_partition(l.grid(), &prev, WallId(1), RoomAssignment::ClosestArea(27)).unwrap();
        assert_eq!(tie.room(1).area(), 18);
    }

    #[test]
    fn partition_rejects_no_split() {
        // Both rays die on masked cells; the free space stays connected via (2,5).
        let spec = GridSpec::new(6, 6).with_mask([c(2, 0), c(2, 4)]);
        let mut l = Layout::new(spec).unwrap();
        let prev = RoomMap::initial(l.grid()).unwrap();
        l.place_wall(WallSpec::new(1, shape(1), c(2, 2), 0)).unwrap();
        assert_eq!(l.walls()[0].soft_len(), 0);
        assert_eq!(
            room_partition(l.grid(), &prev, WallId(1), RoomAssignment::Smaller),
            Err(PartitionReject::NoSplit)
        );
    }

    #[test]
    fn partition_rejects_merged_room() {
        let mut l = empty(7, 7);
        let prev = RoomMap::initial(l.grid()).unwrap();
        l.place_wall(WallSpec::new(1, shape(1), c(3, 3), 2)).unwrap();
        let rooms = room_partition(l.grid(), &prev, WallId(1), RoomAssignment::Smaller).unwrap();
        assert!(rooms.room(1).contains(c(0, 0)));
        // The cut frees (3,6) and joins room 1's top row with the residual.
        l.place_wall(WallSpec::new(2, shape(0), c(5, 5), 5)).unwrap();
        assert_eq!(
            room_partition(l.grid(), &rooms, WallId(2), RoomAssignment::Smaller),
            Err(PartitionReject::RoomDestroyed)
        );
    }

    #[test]
    fn metrics() {
        let rect: Vec<_> = (0..2).flat_map(|y| (0..5).map(move |x| c(x, y))).collect();
        let m = room_metrics(&Region::from_cells(rect));
        assert_eq!((m.area, m.proportion), (10, 2.5));
        let m = room_metrics(&Region::from_cells(vec![c(3, 3)]));
        assert_eq!((m.area, m.proportion), (1, 1.0));
    }

    #[test]
    fn adjacency() {
        let mut l = empty(5, 5);
        let prev = RoomMap::initial(l.grid()).unwrap();
        l.place_wall(WallSpec::new(1, shape(1), c(2, 2), 5)).unwrap();
        let rooms = room_partition(l.grid(), &prev, WallId(1), RoomAssignment::Smaller).unwrap();
        let m = adjacency_matrix(l.grid(), &rooms.all_rooms());
        assert_eq!(m.to_rows(), vec![vec![0, 1], vec![1, 0]]);

        let single = adjacency_matrix(l.grid(), &rooms.all_rooms()[..1]);
        assert_eq!(single.to_rows(), vec![vec![0]]);

        let mut l = empty(7, 7);
        l.place_wall(WallSpec::new(1, shape(1), c(3, 3), 2)).unwrap();
        l.place_wall(WallSpec::new(2, shape(0), c(5, 5), 5)).unwrap();
        let regions = l.grid().free_regions();
        let m = adjacency_matrix(l.grid(), &regions);
        // regions: bottom-left, bottom-right, top strip
        assert!(m.connected(1, 2));
        assert!(m.connected(1, 3));
        assert!(m.connected(2, 3));
        assert_eq!(m.pairs().count(), 3);
    }
}
