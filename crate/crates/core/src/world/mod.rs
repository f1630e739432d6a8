//! The cyclic grid world: one disc-shaped agent on an `N x N` torus.
//!
//! States are integer coordinates reduced modulo `N`. Stepping past an edge
//! re-enters from the opposite edge, so each axis is a copy of the cyclic
//! group of order `N`. Observations are grayscale `B x B` images rendered on
//! demand; they are never persisted.

mod io;
mod render;

pub use io::{
    load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION,
};
pub use render::Observation;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world spec: {0}")]
    InvalidSpec(String),
    #[error("state ({x}, {y}) outside a {n}x{n} grid")]
    StateOutOfRange { x: usize, y: usize, n: usize },
    #[error("unknown action code {0}")]
    UnknownAction(u8),
    #[error("random walk needs at least one step")]
    EmptyWalk,
    #[error("unrecognized format: expected magic {expected:?}, found {found:?}")]
    UnrecognizedFormat { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported dataset version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated dataset: {0}")]
    Truncated(String),
    #[error("corrupt dataset record {index}: {reason}")]
    CorruptRecord { index: usize, reason: String },
    #[error("dataset has no transitions")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WorldError>;

/// Grid size, observation size and agent radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldSpec {
    grid_size: usize,
    image_size: usize,
    agent_radius: f32,
}

impl WorldSpec {
    pub const DEFAULT_GRID: usize = 10;
    pub const DEFAULT_IMAGE: usize = 32;
    pub const DEFAULT_RADIUS: f32 = 4.0;

    pub fn new(grid_size: usize, image_size: usize, agent_radius: f32) -> Result<Self> {
        if grid_size < 2 || grid_size > u16::MAX as usize {
            return Err(WorldError::InvalidSpec(format!(
                "grid size must be in [2, {}], got {grid_size}",
                u16::MAX
            )));
        }
        if image_size < 4 || image_size > u16::MAX as usize {
            return Err(WorldError::InvalidSpec(format!(
                "image size must be in [4, {}], got {image_size}",
                u16::MAX
            )));
        }
        if !(agent_radius > 0.0 && (agent_radius as f64) < image_size as f64 / 2.0) {
            return Err(WorldError::InvalidSpec(format!(
                "agent radius must be in (0, {}), got {agent_radius}",
                image_size as f64 / 2.0
            )));
        }
        Ok(Self {
            grid_size,
            image_size,
            agent_radius,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn agent_radius(&self) -> f32 {
        self.agent_radius
    }

    /// Number of pixels in one observation.
    pub fn pixels(&self) -> usize {
        self.image_size * self.image_size
    }

    pub fn num_states(&self) -> usize {
        self.grid_size * self.grid_size
    }

    pub fn state(&self, x: usize, y: usize) -> Result<WorldState> {
        WorldState::new(x, y, self.grid_size)
    }

    /// All states in row-major order (`y` outer, `x` inner).
    pub fn states(&self) -> impl Iterator<Item = WorldState> + '_ {
        all_states(self.grid_size)
    }

    pub fn contains(&self, s: WorldState) -> bool {
        s.x < self.grid_size && s.y < self.grid_size
    }

    pub fn step(&self, s: WorldState, a: MoveAction) -> WorldState {
        step(self.grid_size, s, a)
    }

    pub fn render(&self, s: WorldState) -> Observation {
        render::render(self, s)
    }
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            grid_size: Self::DEFAULT_GRID,
            image_size: Self::DEFAULT_IMAGE,
            agent_radius: Self::DEFAULT_RADIUS,
        }
    }
}

/// Agent position on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorldState {
    pub x: usize,
    pub y: usize,
}

impl WorldState {
    pub fn new(x: usize, y: usize, n: usize) -> Result<Self> {
        if x >= n || y >= n {
            return Err(WorldError::StateOutOfRange { x, y, n });
        }
        Ok(Self { x, y })
    }

    /// Row-major index in `[0, n*n)`.
    pub fn index(&self, n: usize) -> usize {
        self.y * n + self.x
    }

    pub fn from_index(index: usize, n: usize) -> Self {
        Self {
            x: index % n,
            y: index / n,
        }
    }
}

impl fmt::Display for WorldState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

pub fn all_states(n: usize) -> impl Iterator<Item = WorldState> {
    (0..n * n).map(move |i| WorldState::from_index(i, n))
}

/// The four moves. Left/Right translate `x`, Up/Down translate `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MoveAction {
    Left,
    Right,
    Up,
    Down,
}

/// Which factor of `G = G_x x G_y` an action generates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl MoveAction {
    pub const ALL: [MoveAction; 4] = [
        MoveAction::Left,
        MoveAction::Right,
        MoveAction::Up,
        MoveAction::Down,
    ];

    pub fn code(self) -> u8 {
        match self {
            MoveAction::Left => 0,
            MoveAction::Right => 1,
            MoveAction::Up => 2,
            MoveAction::Down => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or(WorldError::UnknownAction(code))
    }

    pub fn axis(self) -> Axis {
        match self {
            MoveAction::Left | MoveAction::Right => Axis::X,
            MoveAction::Up | MoveAction::Down => Axis::Y,
        }
    }

    /// +1 for Right/Up, -1 for Left/Down.
    pub fn direction(self) -> i8 {
        match self {
            MoveAction::Right | MoveAction::Up => 1,
            MoveAction::Left | MoveAction::Down => -1,
        }
    }

    pub fn inverse(self) -> Self {
        match self {
            MoveAction::Left => MoveAction::Right,
            MoveAction::Right => MoveAction::Left,
            MoveAction::Up => MoveAction::Down,
            MoveAction::Down => MoveAction::Up,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MoveAction::Left => "left",
            MoveAction::Right => "right",
            MoveAction::Up => "up",
            MoveAction::Down => "down",
        }
    }
}

impl fmt::Display for MoveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MoveAction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Ok(MoveAction::Left),
            "right" => Ok(MoveAction::Right),
            "up" => Ok(MoveAction::Up),
            "down" => Ok(MoveAction::Down),
            other => Err(format!("unknown action '{other}'")),
        }
    }
}

/// One move on an `n x n` torus.
pub fn step(n: usize, s: WorldState, a: MoveAction) -> WorldState {
    let inc = |v: usize| (v + 1) % n;
    let dec = |v: usize| (v + n - 1) % n;
    match a {
        MoveAction::Left => WorldState {
            x: dec(s.x),
            y: s.y,
        },
        MoveAction::Right => WorldState {
            x: inc(s.x),
            y: s.y,
        },
        MoveAction::Up => WorldState {
            x: s.x,
            y: inc(s.y),
        },
        MoveAction::Down => WorldState {
            x: s.x,
            y: dec(s.y),
        },
    }
}

/// Whether moving `a` from `s` crosses the edge of the grid.
pub fn wraps(n: usize, s: WorldState, a: MoveAction) -> bool {
    match a {
        MoveAction::Left => s.x == 0,
        MoveAction::Right => s.x == n - 1,
        MoveAction::Up => s.y == n - 1,
        MoveAction::Down => s.y == 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    pub state: WorldState,
    pub action: MoveAction,
    pub next_state: WorldState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    pub spec: WorldSpec,
    pub records: Vec<Transition>,
    pub seed: u64,
}

impl TransitionDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// True when consecutive records chain into a single trajectory.
    pub fn is_trajectory(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[0].next_state == w[1].state)
    }

    /// The first `n` records as a new dataset.
    pub fn prefix(&self, n: usize) -> TransitionDataset {
        TransitionDataset {
            spec: self.spec,
            records: self.records[..n.min(self.records.len())].to_vec(),
            seed: self.seed,
        }
    }
}

/// Uniform random walk of `steps` transitions from a seeded start state.
pub fn random_walk(spec: &WorldSpec, steps: usize, seed: u64) -> Result<TransitionDataset> {
    if steps == 0 {
        return Err(WorldError::EmptyWalk);
    }
    let n = spec.grid_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = WorldState {
        x: rng.random_range(0..n),
        y: rng.random_range(0..n),
    };
    let records = (0..steps)
        .map(|_| {
            let action = MoveAction::ALL[rng.random_range(0..4)];
            let next_state = step(n, state, action);
            let t = Transition {
                state,
                action,
                next_state,
            };
            state = next_state;
            t
        })
        .collect();
    Ok(TransitionDataset {
        spec: *spec,
        records,
        seed,
    })
}
