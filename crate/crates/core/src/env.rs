//! Single-agent one-shot planning environment.
//!
//! Each step places one laser-wall. A placement that is geometrically invalid,
//! that does not split the residual into exactly two regions, or that leaves a
//! room outside its area/proportion limits is rejected: the reward is -1 and
//! the state is left exactly as it was. Accepted non-final walls earn 0; the
//! final wall closes the episode with `R - M`, where `M` counts the desired
//! adjacencies the layout misses.
//!
//! Action ids are cell-major: `id = (y * W + x) * 60 + shape * 10 + infiltration`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellCoord, CellState, LayoutGrid, Region, WallId};
use crate::laser::{
    adjacency_matrix, room_metrics, room_partition, AdjacencyMatrix, Layout, PartitionReject,
    RoomAssignment, RoomMap, RoomMetrics, Violation, WallShape, WallSpec, MAX_INFILTRATION,
};
use crate::palette;
use crate::scenario::{Scenario, ScenarioIssue};

pub const INFILTRATION_LEVELS: usize = MAX_INFILTRATION as usize + 1;
pub const ACTIONS_PER_CELL: usize = WallShape::COUNT * INFILTRATION_LEVELS;
/// Bumped whenever the action id layout changes.
pub const ACTION_CODEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid scenario: {0:?}")]
    Scenario(Vec<ScenarioIssue>),
    #[error("action {action} is outside 0..{count}")]
    OutOfRange { action: i64, count: usize },
    #[error("the episode is over; call reset")]
    EpisodeOver,
    #[error("no episode has been started; call reset")]
    NotReset,
}

/// A decoded placement action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementAction {
    pub anchor: CellCoord,
    pub shape: WallShape,
    pub infiltration: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionCodec {
    width: usize,
    height: usize,
}

impl ActionCodec {
    pub fn new(width: usize, height: usize) -> Self {
        ActionCodec { width, height }
    }

    pub fn action_count(&self) -> usize {
        self.width * self.height * ACTIONS_PER_CELL
    }

    pub fn decode(&self, id: i64) -> Result<PlacementAction, EnvError> {
        if id < 0 || id as u64 >= self.action_count() as u64 {
            return Err(EnvError::OutOfRange {
                action: id,
                count: self.action_count(),
            });
        }
        let id = id as usize;
        let cell = id / ACTIONS_PER_CELL;
        let rest = id % ACTIONS_PER_CELL;
        Ok(PlacementAction {
            anchor: CellCoord::new((cell % self.width) as i32, (cell / self.width) as i32),
            shape: WallShape::new((rest / INFILTRATION_LEVELS) as u8).expect("shape < 6"),
            infiltration: (rest % INFILTRATION_LEVELS) as u8,
        })
    }

    /// Inverse of [`decode`](Self::decode); `None` for off-grid anchors or bad rates.
    pub fn encode(&self, action: &PlacementAction) -> Option<u32> {
        let a = action.anchor;
        if a.x < 0 || a.y < 0 || a.x as usize >= self.width || a.y as usize >= self.height {
            return None;
        }
        if action.infiltration > MAX_INFILTRATION {
            return None;
        }
        let cell = a.y as usize * self.width + a.x as usize;
        Some(
            (cell * ACTIONS_PER_CELL
                + action.shape.id() as usize * INFILTRATION_LEVELS
                + action.infiltration as usize) as u32,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsMode {
    #[default]
    Features,
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub obs: ObsMode,
    /// Whether the observation carries the context vector.
    pub context: bool,
    /// Room slots in the context vector; `None` uses the scenario's room count.
    pub n_max: Option<usize>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            obs: ObsMode::Features,
            context: true,
            n_max: None,
        }
    }
}

/// Observation sizes for a scenario/config pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsDims {
    /// Length of the feature vector (0 in image mode).
    pub features: usize,
    /// `(height, width, 3)`; present in image mode.
    pub image: Option<(usize, usize, usize)>,
    /// Length of the context vector (0 when context is off).
    pub context: usize,
    /// Room slots used for the context layout.
    pub n_max: usize,
}

impl ObsDims {
    pub fn new(scenario: &Scenario, config: &EnvConfig) -> Self {
        let n_max = config.n_max.unwrap_or(scenario.n_rooms).max(scenario.n_rooms);
        let slots = n_max - 1;
        let (features, image) = match config.obs {
            ObsMode::Features => (slots * 30 + pairs(slots) * 25, None),
            ObsMode::Image => (0, Some((scenario.grid.height, scenario.grid.width, 3))),
        };
        ObsDims {
            features,
            image,
            context: if config.context { 2 * n_max + 2 * pairs(n_max) } else { 0 },
            n_max,
        }
    }

    /// Number of area entries (desired + current) in the context vector.
    pub fn context_areas(&self) -> usize {
        if self.context == 0 {
            0
        } else {
            2 * self.n_max
        }
    }

    pub fn context_adjacency(&self) -> usize {
        self.context - self.context_areas()
    }

    pub fn image_len(&self) -> usize {
        self.image.map_or(0, |(h, w, c)| h * w * c)
    }
}

fn pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutObs {
    Features(Vec<f32>),
    /// Row-major `H x W x 3` bytes, top row (largest `y`) first.
    Image(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub layout: LayoutObs,
    pub context: Vec<f32>,
}

impl Observation {
    pub fn features(&self) -> &[f32] {
        match &self.layout {
            LayoutObs::Features(v) => v,
            LayoutObs::Image(_) => &[],
        }
    }

    pub fn image(&self) -> &[u8] {
        match &self.layout {
            LayoutObs::Image(v) => v,
            LayoutObs::Features(_) => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintFailure {
    AreaBelowMinimum,
    AreaThreshold,
    Proportion,
}

/// Checks a room against the area and proportion constraints.
pub fn evaluate_room(
    metrics: &RoomMetrics,
    room_id: usize,
    scenario: &Scenario,
) -> Result<(), ConstraintFailure> {
    if metrics.area < scenario.a_min {
        return Err(ConstraintFailure::AreaBelowMinimum);
    }
    if metrics.area.abs_diff(scenario.desired_area(room_id)) > scenario.a_th {
        return Err(ConstraintFailure::AreaThreshold);
    }
    if scenario.proportion_enabled && metrics.proportion > scenario.p_star {
        return Err(ConstraintFailure::Proportion);
    }
    Ok(())
}

/// `R - M` and `M`, the number of desired adjacencies absent from `achieved`.
pub fn terminal_reward(achieved: &AdjacencyMatrix, scenario: &Scenario) -> (f64, usize) {
    let missed = scenario
        .desired_adjacencies
        .iter()
        .filter(|&&(a, b)| !achieved.connected(a, b))
        .count();
    (scenario.reward_r - missed as f64, missed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    Placement(Violation),
    Partition(PartitionReject),
    Constraint { room: usize, failure: ConstraintFailure },
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::Placement(v) => v.code(),
            RejectReason::Partition(p) => p.code(),
            RejectReason::Constraint { failure, .. } => match failure {
                ConstraintFailure::AreaBelowMinimum => "area_below_minimum",
                ConstraintFailure::AreaThreshold => "area_threshold",
                ConstraintFailure::Proportion => "proportion",
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub accepted: bool,
    pub reject_reason: Option<RejectReason>,
    /// Set on the terminating step.
    pub missed_adjacencies: Option<usize>,
    pub rooms_so_far: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResetInfo {
    pub seed: u64,
    pub n_rooms: usize,
    pub free_cells: usize,
}

/// One line of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub agent_id: Option<usize>,
    pub action: i64,
    pub accepted: bool,
    pub reason: Option<String>,
    pub reward: f64,
    /// Layout hash after the step, 16 hex digits.
    pub hash: String,
}

/// Writes records as JSON lines.
pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn hash_hex(hash: u64) -> String {
    format!("{hash:016x}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Idle,
    Running,
    Terminated,
    Truncated,
}

/// Outcome of a tentative placement.
struct Accepted {
    layout: Layout,
    rooms: RoomMap,
}

#[derive(Debug, Clone)]
pub struct LayoutEnv {
    scenario: Scenario,
    config: EnvConfig,
    dims: ObsDims,
    codec: ActionCodec,
    fresh: Layout,
    fresh_rooms: RoomMap,
    layout: Layout,
    rooms: RoomMap,
    steps: usize,
    rejected: usize,
    seed: u64,
    episode_return: f64,
    status: Status,
    trace: Vec<TraceRecord>,
}

impl LayoutEnv {
    pub fn new(scenario: Scenario, config: EnvConfig) -> Result<Self, EnvError> {
        scenario.validate().map_err(EnvError::Scenario)?;
        let fresh = Layout::new(scenario.grid.clone()).expect("validated grid");
        let fresh_rooms = RoomMap::initial(fresh.grid()).expect("validated connectivity");
        Ok(LayoutEnv {
            dims: ObsDims::new(&scenario, &config),
            codec: ActionCodec::new(scenario.grid.width, scenario.grid.height),
            layout: fresh.clone(),
            rooms: fresh_rooms.clone(),
            fresh,
            fresh_rooms,
            scenario,
            config,
            steps: 0,
            rejected: 0,
            seed: 0,
            episode_return: 0.0,
            status: Status::Idle,
            trace: Vec::new(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn dims(&self) -> ObsDims {
        self.dims
    }

    pub fn codec(&self) -> ActionCodec {
        self.codec
    }

    pub fn action_count(&self) -> usize {
        self.codec.action_count()
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn rooms(&self) -> &RoomMap {
        &self.rooms
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn rejected_count(&self) -> usize {
        self.rejected
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    pub fn is_terminated(&self) -> bool {
        self.status == Status::Terminated
    }

    pub fn is_truncated(&self) -> bool {
        self.status == Status::Truncated
    }

    pub fn is_done(&self) -> bool {
        matches!(self.status, Status::Terminated | Status::Truncated)
    }

    pub fn layout_hash(&self) -> u64 {
        self.layout.layout_hash()
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Rooms as they stand: labeled rooms, plus the residual once terminated.
    pub fn current_rooms(&self) -> Vec<Region> {
        if self.is_terminated() {
            self.rooms.all_rooms()
        } else {
            self.rooms.rooms().to_vec()
        }
    }

    pub fn reset(&mut self, seed: u64) -> (Observation, ResetInfo) {
        self.layout = self.fresh.clone();
        self.rooms = self.fresh_rooms.clone();
        self.steps = 0;
        self.rejected = 0;
        self.seed = seed;
        self.episode_return = 0.0;
        self.status = Status::Running;
        self.trace.clear();
        let info = ResetInfo {
            seed,
            n_rooms: self.scenario.n_rooms,
            free_cells: self.scenario.free_cells(),
        };
        (self.observe(), info)
    }

    pub fn step(&mut self, action: i64) -> Result<StepResult, EnvError> {
        match self.status {
            Status::Idle => return Err(EnvError::NotReset),
            Status::Terminated | Status::Truncated => return Err(EnvError::EpisodeOver),
            Status::Running => {}
        }
        let decoded = self.codec.decode(action)?;
        self.steps += 1;
        let wall_id = self.layout.next_wall_id();
        let spec = WallSpec::new(wall_id.0, decoded.shape, decoded.anchor, decoded.infiltration);
        let is_final = wall_id.0 as usize == self.scenario.n_walls();

        let (reward, reject_reason, missed) = match self.try_place(spec, is_final) {
            Err(reason) => {
                self.rejected += 1;
                (-1.0, Some(reason), None)
            }
            Ok(next) => {
                self.layout = next.layout;
                self.rooms = next.rooms;
                if is_final {
                    self.status = Status::Terminated;
                    let adj = adjacency_matrix(self.layout.grid(), &self.rooms.all_rooms());
                    let (r, m) = terminal_reward(&adj, &self.scenario);
                    (r, None, Some(m))
                } else {
                    (0.0, None, None)
                }
            }
        };
        if self.status == Status::Running && self.steps >= self.scenario.max_steps {
            self.status = Status::Truncated;
        }
        self.episode_return += reward;
        self.trace.push(TraceRecord {
            t: self.steps,
            agent_id: None,
            action,
            accepted: reject_reason.is_none(),
            reason: reject_reason.map(|r| r.code().to_string()),
            reward,
            hash: hash_hex(self.layout_hash()),
        });
        Ok(StepResult {
            obs: self.observe(),
            reward,
            terminated: self.is_terminated(),
            truncated: self.is_truncated(),
            info: StepInfo {
                accepted: reject_reason.is_none(),
                reject_reason,
                missed_adjacencies: missed,
                rooms_so_far: self.current_rooms().len(),
            },
        })
    }

    fn try_place(&self, spec: WallSpec, is_final: bool) -> Result<Accepted, RejectReason> {
        let (layout, _cuts) = self.layout.with_wall(spec).map_err(RejectReason::Placement)?;
        let k = spec.wall_id.0 as usize;
        let rule = RoomAssignment::ClosestArea(self.scenario.desired_area(k));
        let rooms = room_partition(layout.grid(), &self.rooms, spec.wall_id, rule)
            .map_err(RejectReason::Partition)?;
        let check = |room: usize, region: &Region| {
            evaluate_room(&room_metrics(region), room, &self.scenario)
                .map_err(|failure| RejectReason::Constraint { room, failure })
        };
        // The new room first, then earlier rooms a cut may have reshaped.
        check(k, rooms.room(k))?;
        for (i, region) in rooms.rooms()[..k - 1].iter().enumerate() {
            if region != self.rooms.room(i + 1) {
                check(i + 1, region)?;
            }
        }
        if is_final {
            check(self.scenario.n_rooms, rooms.residual().expect("residual after split"))?;
        }
        Ok(Accepted { layout, rooms })
    }

    pub fn observe(&self) -> Observation {
        let layout = match self.config.obs {
            ObsMode::Features => LayoutObs::Features(self.feature_vector()),
            ObsMode::Image => LayoutObs::Image(self.image()),
        };
        let context = if self.config.context {
            self.context_vector()
        } else {
            Vec::new()
        };
        Observation { layout, context }
    }

    /// Per wall slot: 10 normalized keypoint coordinates and 20 keypoint to
    /// corner distances; then 25 keypoint distances per wall pair. Empty slots
    /// are zero.
    pub fn feature_vector(&self) -> Vec<f32> {
        feature_vector(&self.layout, self.dims.n_max - 1)
    }

    pub fn image(&self) -> Vec<u8> {
        rgb_image(&self.layout)
    }

    pub fn context_vector(&self) -> Vec<f32> {
        let rooms = self.current_rooms();
        let slots: Vec<Option<&Region>> = rooms.iter().map(Some).collect();
        context_vector(&self.scenario, self.dims.n_max, self.layout.grid(), &slots)
    }
}

/// Desired areas, current areas (both as fractions of the free cells), then
/// desired and current adjacency flags. `rooms[i]` fills slot `i + 1`.
pub fn context_vector(
    scenario: &Scenario,
    n_max: usize,
    grid: &LayoutGrid,
    rooms: &[Option<&Region>],
) -> Vec<f32> {
    let free = scenario.free_cells() as f32;
    let mut v = Vec::with_capacity(2 * n_max + 2 * pairs(n_max));
    let mut areas = vec![0f32; n_max];
    for (slot, &a) in areas.iter_mut().zip(&scenario.desired_areas) {
        *slot = a as f32 / free;
    }
    v.extend_from_slice(&areas);

    areas.fill(0.0);
    for (slot, r) in areas.iter_mut().zip(rooms) {
        *slot = r.map_or(0.0, |r| r.area() as f32 / free);
    }
    v.extend_from_slice(&areas);

    let mut desired = AdjacencyFlags::new(n_max);
    for &(a, b) in &scenario.desired_adjacencies {
        desired.set(a, b);
    }
    v.extend_from_slice(&desired.0);

    let present: Vec<usize> = (0..rooms.len()).filter(|&i| rooms[i].is_some()).collect();
    let regions: Vec<Region> = present.iter().map(|&i| rooms[i].unwrap().clone()).collect();
    let achieved = adjacency_matrix(grid, &regions);
    let mut current = AdjacencyFlags::new(n_max);
    for (a, b) in achieved.pairs() {
        current.set(present[a - 1] + 1, present[b - 1] + 1);
    }
    v.extend_from_slice(&current.0);
    v
}

/// Upper-triangle flags `(1,2), (1,3), ..., (n-1,n)`.
struct AdjacencyFlags(Vec<f32>, usize);

impl AdjacencyFlags {
    fn new(n: usize) -> Self {
        AdjacencyFlags(vec![0.0; pairs(n)], n)
    }

    fn set(&mut self, a: usize, b: usize) {
        let (i, j) = (a.min(b) - 1, a.max(b) - 1);
        let n = self.1;
        let index = i * (2 * n - i - 1) / 2 + (j - i - 1);
        self.0[index] = 1.0;
    }
}

pub fn feature_vector(layout: &Layout, wall_slots: usize) -> Vec<f32> {
    let grid = layout.grid();
    let (sx, sy) = ((grid.width() - 1) as f32, (grid.height() - 1) as f32);
    let diag = (sx * sx + sy * sy).sqrt();
    let corners = [(0.0, 0.0), (sx, 0.0), (0.0, sy), (sx, sy)];
    let mut v = vec![0f32; wall_slots * 30 + pairs(wall_slots) * 25];
    let keypoints: Vec<[(f32, f32); 5]> = layout
        .walls()
        .iter()
        .take(wall_slots)
        .map(|w| w.keypoints().map(|c| (c.x as f32, c.y as f32)))
        .collect();
    let dist = |a: (f32, f32), b: (f32, f32)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() / diag;
    for (slot, kps) in keypoints.iter().enumerate() {
        let out = &mut v[slot * 30..slot * 30 + 30];
        for (i, &(x, y)) in kps.iter().enumerate() {
            out[2 * i] = x / sx;
            out[2 * i + 1] = y / sy;
        }
        for (i, &p) in kps.iter().enumerate() {
            for (j, &c) in corners.iter().enumerate() {
                out[10 + 4 * i + j] = dist(p, c);
            }
        }
    }
    let mut offset = wall_slots * 30;
    for i in 0..wall_slots {
        for j in i + 1..wall_slots {
            if let (Some(a), Some(b)) = (keypoints.get(i), keypoints.get(j)) {
                for (p, &ka) in a.iter().enumerate() {
                    for (q, &kb) in b.iter().enumerate() {
                        v[offset + 5 * p + q] = dist(ka, kb);
                    }
                }
            }
            offset += 25;
        }
    }
    v
}

pub fn rgb_image(layout: &Layout) -> Vec<u8> {
    let grid = layout.grid();
    let (w, h) = (grid.width(), grid.height());
    let mut out = Vec::with_capacity(w * h * 3);
    for row in 0..h {
        let y = (h - 1 - row) as i32;
        for x in 0..w as i32 {
            let color = match grid.get(CellCoord::new(x, y)).expect("in bounds") {
                CellState::Free => palette::FREE,
                CellState::Masked => palette::MASKED,
                CellState::WallHard(WallId(k)) => palette::wall_hard(k),
                CellState::WallSoft(WallId(k)) => palette::wall_soft(k),
            };
            out.extend_from_slice(&color);
        }
    }
    out
}
