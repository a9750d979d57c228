//! Design scenarios: targets, constraint constants and the JSON file format.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellCoord, GridError, GridSpec, LayoutGrid};

pub const DEFAULT_P_STAR: f64 = 5.0;
pub const DEFAULT_A_MIN: usize = 10;
pub const DEFAULT_A_TH: usize = 4;
pub const DEFAULT_MAX_STEPS: usize = 200;

/// File suffix for scenario files.
pub const FILE_EXTENSION: &str = ".scenario.json";

/// The design context an episode is played against.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub grid: GridSpec,
    pub n_rooms: usize,
    /// Target area per room, indexed by room id - 1. One cell is one m².
    pub desired_areas: Vec<usize>,
    pub proportion_enabled: bool,
    pub p_star: f64,
    pub a_min: usize,
    pub a_th: usize,
    /// Unordered 1-based room pairs that should share a wall.
    pub desired_adjacencies: Vec<(usize, usize)>,
    pub reward_r: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioIssue {
    #[error("grid: {0}")]
    Grid(#[from] GridError),
    #[error("at least 2 rooms are required, got {0}")]
    TooFewRooms(usize),
    #[error("{got} desired areas given for {expected} rooms")]
    AreaCountMismatch { expected: usize, got: usize },
    #[error("room {room}: desired area {area} is below the minimum {a_min}")]
    AreaBelowMinimum { room: usize, area: usize, a_min: usize },
    #[error("adjacency ({0}, {1}) names a room outside 1..=n_rooms")]
    AdjacencyIdOutOfRange(usize, usize),
    #[error("adjacency ({0}, {0}) joins a room to itself")]
    SelfAdjacency(usize),
    #[error("adjacency ({0}, {1}) is listed twice")]
    DuplicateAdjacency(usize, usize),
    #[error("desired areas plus wall bases need {needed} cells, only {free} are free")]
    Overfull { needed: usize, free: usize },
    #[error("reward_R {reward} must exceed the {desired} desired adjacencies")]
    RewardTooSmall { reward: f64, desired: usize },
    #[error("p_star {0} must be at least 1")]
    ProportionLimit(f64),
    #[error("max_steps {max_steps} is below the {walls} walls an episode needs")]
    MaxStepsTooSmall { max_steps: usize, walls: usize },
    #[error("the free cells form {0} disconnected regions")]
    DisconnectedFloor(usize),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error{}: {message}", key.as_ref().map(|k| format!(" at key `{k}`")).unwrap_or_default())]
    Parse {
        key: Option<String>,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {}", join_issues(.0))]
    Invalid(Vec<ScenarioIssue>),
    #[error("unknown scenario `{name}` (builtins: {})", builtin_names().join(", "))]
    UnknownName { name: String },
}

fn join_issues(issues: &[ScenarioIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Scenario {
    /// Number of walls an episode places.
    pub fn n_walls(&self) -> usize {
        self.n_rooms - 1
    }

    pub fn desired_area(&self, room_id: usize) -> usize {
        self.desired_areas[room_id - 1]
    }

    pub fn free_cells(&self) -> usize {
        self.grid.free_cell_count()
    }

    /// Checks every scenario invariant, collecting all problems.
    pub fn validate(&self) -> Result<(), Vec<ScenarioIssue>> {
        let mut issues = Vec::new();
        let grid_ok = match LayoutGrid::new(self.grid.clone()) {
            Ok(g) => {
                let regions = g.free_regions().len();
                if regions != 1 {
                    issues.push(ScenarioIssue::DisconnectedFloor(regions));
                }
                true
            }
            Err(e) => {
                issues.push(e.into());
                false
            }
        };
        if self.n_rooms < 2 {
            issues.push(ScenarioIssue::TooFewRooms(self.n_rooms));
        }
        if self.desired_areas.len() != self.n_rooms {
            issues.push(ScenarioIssue::AreaCountMismatch {
                expected: self.n_rooms,
                got: self.desired_areas.len(),
            });
        }
        for (i, &area) in self.desired_areas.iter().enumerate() {
            if area < self.a_min {
                issues.push(ScenarioIssue::AreaBelowMinimum {
                    room: i + 1,
                    area,
                    a_min: self.a_min,
                });
            }
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in &self.desired_adjacencies {
            if a == 0 || b == 0 || a > self.n_rooms || b > self.n_rooms {
                issues.push(ScenarioIssue::AdjacencyIdOutOfRange(a, b));
            } else if a == b {
                issues.push(ScenarioIssue::SelfAdjacency(a));
            } else if !seen.insert((a.min(b), a.max(b))) {
                issues.push(ScenarioIssue::DuplicateAdjacency(a, b));
            }
        }
        if grid_ok {
            let needed = self.desired_areas.iter().sum::<usize>() + 3 * self.n_rooms.saturating_sub(1);
            if needed > self.free_cells() {
                issues.push(ScenarioIssue::Overfull {
                    needed,
                    free: self.free_cells(),
                });
            }
        }
        if !(self.reward_r > self.desired_adjacencies.len() as f64) {
            issues.push(ScenarioIssue::RewardTooSmall {
                reward: self.reward_r,
                desired: self.desired_adjacencies.len(),
            });
        }
        if !(self.p_star >= 1.0) {
            issues.push(ScenarioIssue::ProportionLimit(self.p_star));
        }
        if self.max_steps < self.n_rooms.saturating_sub(1) {
            issues.push(ScenarioIssue::MaxStepsTooSmall {
                max_steps: self.max_steps,
                walls: self.n_rooms.saturating_sub(1),
            });
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&ScenarioFile::from(self)).expect("scenario serializes");
        s.push('\n');
        s
    }

    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            key: None,
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        check_keys(&value, TOP_KEYS, "")?;
        check_keys(&value["grid"], GRID_KEYS, "grid.")?;
        let file: ScenarioFile = serde_json::from_value(value).map_err(|e| ScenarioError::Parse {
            key: None,
            line: 0,
            column: 0,
            message: e.to_string(),
        })?;
        let scenario = Scenario::from(file);
        scenario.validate().map_err(ScenarioError::Invalid)?;
        Ok(scenario)
    }
}

const TOP_KEYS: &[&str] = &[
    "name",
    "grid",
    "n_rooms",
    "desired_areas",
    "proportion_enabled",
    "p_star",
    "a_min",
    "a_th",
    "desired_adjacencies",
    "reward_R",
    "max_steps",
];
const GRID_KEYS: &[&str] = &["width", "height", "masked"];

fn check_keys(value: &serde_json::Value, keys: &[&str], prefix: &str) -> Result<(), ScenarioError> {
    let parse = |key: String, message: String| ScenarioError::Parse {
        key: Some(key),
        line: 0,
        column: 0,
        message,
    };
    let Some(obj) = value.as_object() else {
        let what = if prefix.is_empty() { "document".to_string() } else { prefix.trim_end_matches('.').to_string() };
        return Err(parse(what, "expected a JSON object".into()));
    };
    if let Some(missing) = keys.iter().find(|k| !obj.contains_key(**k)) {
        return Err(parse(format!("{prefix}{missing}"), "missing key".into()));
    }
    if let Some(extra) = obj.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(parse(format!("{prefix}{extra}"), "unknown key".into()));
    }
    Ok(())
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({}x{}, {} rooms, areas {:?})",
            self.name, self.grid.width, self.grid.height, self.n_rooms, self.desired_areas
        )
    }
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    width: usize,
    height: usize,
    masked: Vec<[i32; 2]>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    name: String,
    grid: GridFile,
    n_rooms: usize,
    desired_areas: Vec<usize>,
    proportion_enabled: bool,
    p_star: f64,
    a_min: usize,
    a_th: usize,
    desired_adjacencies: Vec<[usize; 2]>,
    #[serde(rename = "reward_R")]
    reward_r: f64,
    max_steps: usize,
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            name: s.name.clone(),
            grid: GridFile {
                width: s.grid.width,
                height: s.grid.height,
                masked: s.grid.masked.iter().map(|c| [c.x, c.y]).collect(),
            },
            n_rooms: s.n_rooms,
            desired_areas: s.desired_areas.clone(),
            proportion_enabled: s.proportion_enabled,
            p_star: s.p_star,
            a_min: s.a_min,
            a_th: s.a_th,
            desired_adjacencies: s.desired_adjacencies.iter().map(|&(a, b)| [a, b]).collect(),
            reward_r: s.reward_r,
            max_steps: s.max_steps,
        }
    }
}

impl From<ScenarioFile> for Scenario {
    fn from(f: ScenarioFile) -> Self {
        Scenario {
            name: f.name,
            grid: GridSpec::new(f.grid.width, f.grid.height)
                .with_mask(f.grid.masked.into_iter().map(|[x, y]| CellCoord::new(x, y))),
            n_rooms: f.n_rooms,
            desired_areas: f.desired_areas,
            proportion_enabled: f.proportion_enabled,
            p_star: f.p_star,
            a_min: f.a_min,
            a_th: f.a_th,
            desired_adjacencies: f.desired_adjacencies.into_iter().map(|[a, b]| (a, b)).collect(),
            reward_r: f.reward_r,
            max_steps: f.max_steps,
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    Scenario::from_json(&fs::read_to_string(path)?)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    fs::write(path, scenario.to_json())?;
    Ok(())
}

fn table_scenario(
    index: usize,
    proportion_enabled: bool,
    areas: &[usize],
    adjacencies: &[(usize, usize)],
) -> Scenario {
    Scenario {
        name: format!("scenario{index}"),
        grid: GridSpec::new(20, 20),
        n_rooms: areas.len(),
        desired_areas: areas.to_vec(),
        proportion_enabled,
        p_star: DEFAULT_P_STAR,
        a_min: DEFAULT_A_MIN,
        a_th: DEFAULT_A_TH,
        desired_adjacencies: adjacencies.to_vec(),
        reward_r: if proportion_enabled { 400.0 } else { 200.0 },
        max_steps: DEFAULT_MAX_STEPS,
    }
}

/// The six reference scenarios on an unmasked 20x20 plan.
pub fn builtin_scenarios() -> Vec<Scenario> {
    vec![
        table_scenario(1, true, &[110, 92, 57, 52], &[(1, 2), (2, 3), (2, 4), (1, 3)]),
        table_scenario(2, true, &[83, 78, 60, 44, 33], &[(1, 2), (1, 5), (3, 4)]),
        table_scenario(3, false, &[111, 75, 38, 34, 30, 21], &[(3, 4), (1, 6), (1, 4)]),
        table_scenario(
            4,
            true,
            &[65, 60, 48, 36, 30, 28, 23],
            &[(2, 3), (1, 5), (6, 7), (3, 4)],
        ),
        table_scenario(
            5,
            false,
            &[85, 64, 64, 50, 41, 32, 32, 28],
            &[(2, 8), (4, 6), (1, 7), (2, 7)],
        ),
        table_scenario(
            6,
            false,
            &[63, 60, 58, 50, 34, 33, 27, 27, 26],
            &[(3, 9), (8, 9), (3, 6), (7, 8), (5, 7), (1, 8)],
        ),
    ]
}

/// Small 10x10, three-room scenario used for quick training runs.
pub fn mini3() -> Scenario {
    Scenario {
        name: "mini3".into(),
        grid: GridSpec::new(10, 10),
        n_rooms: 3,
        desired_areas: vec![40, 30, 20],
        proportion_enabled: false,
        p_star: DEFAULT_P_STAR,
        a_min: DEFAULT_A_MIN,
        a_th: DEFAULT_A_TH,
        desired_adjacencies: vec![(1, 2)],
        reward_r: 200.0,
        max_steps: DEFAULT_MAX_STEPS,
    }
}

pub fn builtin_names() -> Vec<String> {
    let mut names: Vec<String> = builtin_scenarios().into_iter().map(|s| s.name).collect();
    names.push("mini3".into());
    names
}

pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    if name == "mini3" {
        return Some(mini3());
    }
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

/// Resolves a builtin name or a path to a scenario file.
pub fn resolve_scenario(name_or_path: &str) -> Result<Scenario, ScenarioError> {
    if let Some(s) = builtin_scenario(name_or_path) {
        return Ok(s);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        return load_scenario(path);
    }
    Err(ScenarioError::UnknownName {
        name: name_or_path.to_string(),
    })
}
