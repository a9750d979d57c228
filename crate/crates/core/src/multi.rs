//! Dynamic multi-agent environment: every wall is an agent that transforms its
//! own spec on its turn. After each transform the whole layout is replayed in
//! the fixed placement order, so one move can reshape every room.
//!
//! Ownership is recomputed on the replayed grid: in agent order, each agent
//! takes the smallest free region touching its wall that no earlier agent has
//! taken. The single region left over is the residual room.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    context_vector, evaluate_room, feature_vector, hash_hex, rgb_image, terminal_reward, EnvConfig,
    LayoutObs, ObsDims, ObsMode, Observation, TraceRecord,
};
use crate::grid::{CellCoord, Region};
use crate::laser::{
    adjacency_matrix, resimulate, room_metrics, Direction, Layout, ResimulateError, Violation,
    WallShape, WallSpec, MAX_INFILTRATION,
};
use crate::scenario::{Scenario, ScenarioIssue};

pub const AGENT_ACTIONS: usize = 22;
pub const MAX_INIT_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentAction {
    RotateBaseCw,
    RotateBaseCcw,
    RotateSegmentCw(u8),
    RotateSegmentCcw(u8),
    Move(Direction),
    FlipHorizontal,
    FlipVertical,
    SetInfiltration(u8),
}

impl AgentAction {
    /// Maps ids `0..22` to actions; segments are numbered 1 (first direction) and 2.
    pub fn from_id(id: usize) -> Option<Self> {
        use AgentAction::*;
        Some(match id {
            0 => RotateBaseCw,
            1 => RotateBaseCcw,
            2 => RotateSegmentCw(1),
            3 => RotateSegmentCcw(1),
            4 => RotateSegmentCw(2),
            5 => RotateSegmentCcw(2),
            6 => Move(Direction::W),
            7 => Move(Direction::E),
            8 => Move(Direction::N),
            9 => Move(Direction::S),
            10 => FlipHorizontal,
            11 => FlipVertical,
            12..=21 => SetInfiltration((id - 12) as u8),
            _ => return None,
        })
    }

    pub fn id(self) -> usize {
        use AgentAction::*;
        match self {
            RotateBaseCw => 0,
            RotateBaseCcw => 1,
            RotateSegmentCw(s) => 2 + 2 * (s as usize - 1),
            RotateSegmentCcw(s) => 3 + 2 * (s as usize - 1),
            Move(Direction::W) => 6,
            Move(Direction::E) => 7,
            Move(Direction::N) => 8,
            Move(Direction::S) => 9,
            FlipHorizontal => 10,
            FlipVertical => 11,
            SetInfiltration(r) => 12 + r as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MultiError {
    #[error("invalid scenario: {0:?}")]
    Scenario(Vec<ScenarioIssue>),
    #[error("no valid initial layout after {0} rejected samples")]
    InitFailure(usize),
    #[error("it is agent {expected}'s turn, not agent {got}'s")]
    WrongTurn { expected: usize, got: usize },
    #[error("agent action {0} is outside 0..22")]
    OutOfRange(i64),
    #[error("the episode is over; call reset")]
    EpisodeOver,
    #[error("no episode has been started; call reset")]
    NotReset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("both segments would point the same way")]
    IllegalShape,
}

/// Rewrites a spec; the result is not checked against any grid.
pub fn apply_transform(spec: WallSpec, action: AgentAction) -> Result<WallSpec, TransformError> {
    let (d1, d2) = spec.shape.directions();
    let reshape = |a: Direction, b: Direction| {
        WallShape::from_directions(a, b).ok_or(TransformError::IllegalShape)
    };
    let mut out = spec;
    match action {
        AgentAction::RotateBaseCw => out.shape = reshape(d1.rotate_cw(), d2.rotate_cw())?,
        AgentAction::RotateBaseCcw => out.shape = reshape(d1.rotate_ccw(), d2.rotate_ccw())?,
        AgentAction::RotateSegmentCw(1) => out.shape = reshape(d1.rotate_cw(), d2)?,
        AgentAction::RotateSegmentCcw(1) => out.shape = reshape(d1.rotate_ccw(), d2)?,
        AgentAction::RotateSegmentCw(_) => out.shape = reshape(d1, d2.rotate_cw())?,
        AgentAction::RotateSegmentCcw(_) => out.shape = reshape(d1, d2.rotate_ccw())?,
        AgentAction::Move(d) => out.anchor = d.step(spec.anchor, 1),
        AgentAction::FlipHorizontal => {
            out.shape = reshape(d1.flip_horizontal(), d2.flip_horizontal())?
        }
        AgentAction::FlipVertical => out.shape = reshape(d1.flip_vertical(), d2.flip_vertical())?,
        AgentAction::SetInfiltration(r) => out.infiltration = r.min(MAX_INFILTRATION),
    }
    Ok(out)
}

/// Which free region each agent owns on a replayed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Ownership {
    /// All free regions, ordered by first cell.
    pub regions: Vec<Region>,
    /// Index into `regions` per agent.
    pub owned: Vec<Option<usize>>,
    /// Unowned regions each agent could choose from when its turn to pick came.
    pub candidates: Vec<Vec<usize>>,
}

impl Ownership {
    pub fn compute(layout: &Layout) -> Self {
        let grid = layout.grid();
        let (regions, labels) = grid.label_free_regions();
        let mut taken = vec![false; regions.len()];
        let mut owned = Vec::with_capacity(layout.walls().len());
        let mut candidates = Vec::with_capacity(layout.walls().len());
        for wall in layout.walls() {
            let mut touching: Vec<usize> = wall
                .cells()
                .flat_map(CellCoord::neighbors4)
                .filter(|&c| grid.contains(c))
                .map(|c| labels[grid.index(c)])
                .filter(|&l| l != usize::MAX && !taken[l])
                .collect();
            touching.sort_unstable();
            touching.dedup();
            let pick = touching.iter().copied().min_by_key(|&r| (regions[r].area(), r));
            if let Some(r) = pick {
                taken[r] = true;
            }
            owned.push(pick);
            candidates.push(touching);
        }
        Ownership {
            regions,
            owned,
            candidates,
        }
    }

    pub fn owned_region(&self, agent: usize) -> Option<&Region> {
        self.owned[agent - 1].map(|r| &self.regions[r])
    }

    /// Regions no agent owns.
    pub fn unowned(&self) -> Vec<&Region> {
        (0..self.regions.len())
            .filter(|i| !self.owned.contains(&Some(*i)))
            .map(|i| &self.regions[i])
            .collect()
    }

    /// Owned rooms in agent order followed by the residual, if the layout has
    /// exactly one region per room.
    pub fn rooms(&self) -> Option<Vec<Region>> {
        let mut rooms: Vec<Region> = self
            .owned
            .iter()
            .map(|o| o.map(|r| self.regions[r].clone()))
            .collect::<Option<_>>()?;
        match self.unowned()[..] {
            [residual] => rooms.push(residual.clone()),
            _ => return None,
        }
        Some(rooms)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStepResult {
    pub obs: Observation,
    /// One reward per agent.
    pub rewards: Vec<f64>,
    pub terminated: bool,
    pub truncated: bool,
    pub accepted: bool,
    pub reject_reason: Option<&'static str>,
    /// Agent whose turn is next (1-based).
    pub next_turn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Idle,
    Running,
    Terminated,
    Truncated,
}

#[derive(Debug, Clone)]
pub struct MultiEnv {
    scenario: Scenario,
    config: EnvConfig,
    dims: ObsDims,
    specs: Vec<WallSpec>,
    layout: Layout,
    ownership: Ownership,
    turn: usize,
    steps: usize,
    status: Status,
    trace: Vec<TraceRecord>,
}

impl MultiEnv {
    pub fn new(scenario: Scenario, config: EnvConfig) -> Result<Self, MultiError> {
        scenario.validate().map_err(MultiError::Scenario)?;
        let layout = Layout::new(scenario.grid.clone()).expect("validated grid");
        Ok(MultiEnv {
            dims: ObsDims::new(&scenario, &config),
            ownership: Ownership::compute(&layout),
            layout,
            scenario,
            config,
            specs: Vec::new(),
            turn: 1,
            steps: 0,
            status: Status::Idle,
            trace: Vec::new(),
        })
    }

    pub fn n_agents(&self) -> usize {
        self.scenario.n_walls()
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn specs(&self) -> &[WallSpec] {
        &self.specs
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn ownership(&self) -> &Ownership {
        &self.ownership
    }

    pub fn turn(&self) -> usize {
        self.turn
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn layout_hash(&self) -> u64 {
        self.layout.layout_hash()
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn is_done(&self) -> bool {
        matches!(self.status, Status::Terminated | Status::Truncated)
    }

    /// Places `n_rooms - 1` random walls in agent order, resampling invalid specs.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<Observation>, MultiError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (self.scenario.grid.width as i32, self.scenario.grid.height as i32);
        let mut layout = Layout::new(self.scenario.grid.clone()).expect("validated grid");
        let mut specs = Vec::with_capacity(self.n_agents());
        let mut rejected = 0;
        while specs.len() < self.n_agents() {
            let spec = WallSpec::new(
                specs.len() as u32 + 1,
                WallShape::new(rng.gen_range(0..WallShape::COUNT as u8)).expect("shape < 6"),
                CellCoord::new(rng.gen_range(0..w), rng.gen_range(0..h)),
                rng.gen_range(0..=MAX_INFILTRATION),
            );
            if layout.place_wall(spec).is_ok() {
                specs.push(spec);
            } else {
                rejected += 1;
                if rejected >= MAX_INIT_REJECTIONS {
                    return Err(MultiError::InitFailure(rejected));
                }
            }
        }
        self.ownership = Ownership::compute(&layout);
        self.layout = layout;
        self.specs = specs;
        self.turn = 1;
        self.steps = 0;
        self.status = Status::Running;
        self.trace.clear();
        Ok(vec![self.observe(); self.n_agents()])
    }

    pub fn step(&mut self, agent_id: usize, action: i64) -> Result<MultiStepResult, MultiError> {
        match self.status {
            Status::Idle => return Err(MultiError::NotReset),
            Status::Terminated | Status::Truncated => return Err(MultiError::EpisodeOver),
            Status::Running => {}
        }
        if agent_id != self.turn {
            return Err(MultiError::WrongTurn {
                expected: self.turn,
                got: agent_id,
            });
        }
        let act = usize::try_from(action)
            .ok()
            .and_then(AgentAction::from_id)
            .ok_or(MultiError::OutOfRange(action))?;
        self.steps += 1;
        let n = self.n_agents();
        let mut rewards = vec![0.0; n];

        let outcome = apply_transform(self.specs[agent_id - 1], act)
            .map_err(|_| "illegal_shape")
            .and_then(|spec| {
                let mut specs = self.specs.clone();
                specs[agent_id - 1] = spec;
                match resimulate(&self.scenario.grid, &specs) {
                    Ok(layout) => Ok((specs, layout)),
                    Err(ResimulateError::Failed { violation, .. }) => Err(violation.code()),
                    Err(ResimulateError::Grid(_)) => Err(Violation::OutOfBounds(spec.anchor).code()),
                }
            });
        let reject_reason = match outcome {
            Err(code) => {
                rewards[agent_id - 1] = -1.0;
                Some(code)
            }
            Ok((specs, layout)) => {
                self.ownership = Ownership::compute(&layout);
                self.specs = specs;
                self.layout = layout;
                if let Some(r) = self.solved_reward() {
                    rewards.fill(r);
                    self.status = Status::Terminated;
                }
                None
            }
        };
        if self.status == Status::Running && self.steps >= self.scenario.max_steps {
            self.status = Status::Truncated;
        }
        self.turn = agent_id % n + 1;
        self.trace.push(TraceRecord {
            t: self.steps,
            agent_id: Some(agent_id),
            action,
            accepted: reject_reason.is_none(),
            reason: reject_reason.map(str::to_string),
            reward: rewards[agent_id - 1],
            hash: hash_hex(self.layout_hash()),
        });
        Ok(MultiStepResult {
            obs: self.observe(),
            rewards,
            terminated: self.status == Status::Terminated,
            truncated: self.status == Status::Truncated,
            accepted: reject_reason.is_none(),
            reject_reason,
            next_turn: self.turn,
        })
    }

    /// `Some(R)` when every room passes its constraints and no desired
    /// adjacency is missed.
    fn solved_reward(&self) -> Option<f64> {
        let rooms = self.ownership.rooms()?;
        for (i, room) in rooms.iter().enumerate() {
            evaluate_room(&room_metrics(room), i + 1, &self.scenario).ok()?;
        }
        let (reward, missed) = terminal_reward(
            &adjacency_matrix(self.layout.grid(), &rooms),
            &self.scenario,
        );
        (missed == 0).then_some(reward)
    }

    /// Shared observation; room slots follow agent order with the residual last.
    pub fn observe(&self) -> Observation {
        let layout = match self.config.obs {
            ObsMode::Features => LayoutObs::Features(feature_vector(&self.layout, self.dims.n_max - 1)),
            ObsMode::Image => LayoutObs::Image(rgb_image(&self.layout)),
        };
        let context = if self.config.context {
            let mut slots: Vec<Option<&Region>> =
                (1..=self.n_agents()).map(|k| self.ownership.owned_region(k)).collect();
            let unowned = self.ownership.unowned();
            slots.push(if unowned.len() == 1 { Some(unowned[0]) } else { None });
            context_vector(&self.scenario, self.dims.n_max, self.layout.grid(), &slots)
        } else {
            Vec::new()
        };
        Observation { layout, context }
    }
}
