//! Exact group machinery for the torus `G = Z_N x Z_N`: group elements,
//! world actions (canonical and permuted), tabulated representations and
//! latent actions, and the equivariance and disentanglement checks.

mod permuted;
mod probe;

pub use permuted::{
    count_permuted_worlds, enumerate_permuted_worlds, same_training_set, sweep_observations,
};
pub use probe::{linear_collapse_probe, CollapseReport};

use crate::world::{Axis, MoveAction, WorldState};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("representation table for N={table} cannot be checked against a world with N={world}")]
    Coverage { table: usize, world: usize },
    #[error("state {state} missing from representation table")]
    MissingState { state: WorldState },
    #[error("state {state} outside the {n}x{n} grid")]
    StateOutOfRange { state: WorldState, n: usize },
    #[error("latent of dimension {found} where {expected} was expected")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite latent value")]
    NonFinite,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("count overflows for N={n}, n={factors}")]
    Overflow { n: usize, factors: usize },
}

pub type Result<T> = std::result::Result<T, GroupError>;

/// An element `(k_x, k_y)` of `Z_N x Z_N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupElement {
    pub shift_x: usize,
    pub shift_y: usize,
    n: usize,
}

impl GroupElement {
    pub fn new(shift_x: i64, shift_y: i64, n: usize) -> Self {
        let m = n as i64;
        Self {
            shift_x: shift_x.rem_euclid(m) as usize,
            shift_y: shift_y.rem_euclid(m) as usize,
            n,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(0, 0, n)
    }

    /// The generator a move corresponds to.
    pub fn generator(a: MoveAction, n: usize) -> Self {
        let d = a.direction() as i64;
        match a.axis() {
            Axis::X => Self::new(d, 0, n),
            Axis::Y => Self::new(0, d, n),
        }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "elements of different groups");
        Self::new(
            (self.shift_x + other.shift_x) as i64,
            (self.shift_y + other.shift_y) as i64,
            self.n,
        )
    }

    pub fn inverse(&self) -> Self {
        Self::new(-(self.shift_x as i64), -(self.shift_y as i64), self.n)
    }

    pub fn elements(n: usize) -> impl Iterator<Item = Self> {
        (0..n * n).map(move |i| Self::new((i % n) as i64, (i / n) as i64, n))
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}) mod {}", self.shift_x, self.shift_y, self.n)
    }
}

/// How the group moves world states: a successor permutation per axis.
/// The canonical world uses `i -> i + 1 mod N` on both axes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WorldAction {
    pi_x: Vec<usize>,
    pi_y: Vec<usize>,
    inv_x: Vec<usize>,
    inv_y: Vec<usize>,
}

fn invert(p: &[usize], name: &str) -> Result<Vec<usize>> {
    let n = p.len();
    let mut inv = vec![usize::MAX; n];
    for (i, &v) in p.iter().enumerate() {
        if v >= n || inv[v] != usize::MAX {
            return Err(GroupError::InvalidPermutation(format!(
                "{name} = {p:?} is not a bijection on 0..{n}"
            )));
        }
        inv[v] = i;
    }
    Ok(inv)
}

fn iterate(p: &[usize], mut v: usize, k: usize) -> usize {
    for _ in 0..k {
        v = p[v];
    }
    v
}

impl WorldAction {
    pub fn new(pi_x: Vec<usize>, pi_y: Vec<usize>) -> Result<Self> {
        if pi_x.len() != pi_y.len() || pi_x.len() < 2 {
            return Err(GroupError::InvalidPermutation(format!(
                "axis permutations of lengths {} and {}",
                pi_x.len(),
                pi_y.len()
            )));
        }
        let inv_x = invert(&pi_x, "pi_x")?;
        let inv_y = invert(&pi_y, "pi_y")?;
        Ok(Self {
            pi_x,
            pi_y,
            inv_x,
            inv_y,
        })
    }

    pub fn canonical(n: usize) -> Self {
        let succ: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
        Self::new(succ.clone(), succ).expect("canonical successor is a bijection")
    }

    pub fn grid_size(&self) -> usize {
        self.pi_x.len()
    }

    pub fn pi_x(&self) -> &[usize] {
        &self.pi_x
    }

    pub fn pi_y(&self) -> &[usize] {
        &self.pi_y
    }

    /// Both successors are single `N`-cycles, so `Z_N x Z_N` acts faithfully.
    pub fn is_cyclic(&self) -> bool {
        let single_cycle = |p: &[usize]| {
            let mut v = 0;
            for k in 1..=p.len() {
                v = p[v];
                if v == 0 {
                    return k == p.len();
                }
            }
            false
        };
        single_cycle(&self.pi_x) && single_cycle(&self.pi_y)
    }

    pub fn is_canonical(&self) -> bool {
        *self == Self::canonical(self.grid_size())
    }

    pub fn step(&self, s: WorldState, a: MoveAction) -> WorldState {
        match a {
            MoveAction::Right => WorldState {
                x: self.pi_x[s.x],
                y: s.y,
            },
            MoveAction::Left => WorldState {
                x: self.inv_x[s.x],
                y: s.y,
            },
            MoveAction::Up => WorldState {
                x: s.x,
                y: self.pi_y[s.y],
            },
            MoveAction::Down => WorldState {
                x: s.x,
                y: self.inv_y[s.y],
            },
        }
    }

    /// `g . s`: `pi_x` applied `k_x` times and `pi_y` applied `k_y` times.
    pub fn act(&self, g: &GroupElement, s: WorldState) -> WorldState {
        WorldState {
            x: iterate(&self.pi_x, s.x, g.shift_x),
            y: iterate(&self.pi_y, s.y, g.shift_y),
        }
    }
}

/// Values of `f = h . b` on every state of an `N x N` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationTable {
    n: usize,
    dim: usize,
    values: Vec<f64>,
}

impl RepresentationTable {
    pub fn from_fn<F>(n: usize, dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(WorldState) -> Vec<f64>,
    {
        let mut values = Vec::with_capacity(n * n * dim);
        for i in 0..n * n {
            let v = f(WorldState::from_index(i, n));
            if v.len() != dim {
                return Err(GroupError::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            values.extend(v);
        }
        Self::from_flat(n, dim, values)
    }

    /// Rows in state-index order (`y * N + x`).
    pub fn from_flat(n: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != n * n * dim {
            return Err(GroupError::DimensionMismatch {
                expected: n * n * dim.max(1),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GroupError::NonFinite);
        }
        Ok(Self { n, dim, values })
    }

    /// From explicit `(state, latent)` pairs; every state must appear.
    pub fn from_entries<I>(n: usize, dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (WorldState, Vec<f64>)>,
    {
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; n * n];
        for (s, v) in entries {
            if s.x >= n || s.y >= n {
                return Err(GroupError::StateOutOfRange { state: s, n });
            }
            if v.len() != dim {
                return Err(GroupError::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            rows[s.index(n)] = Some(v);
        }
        let mut values = Vec::with_capacity(n * n * dim);
        for (i, r) in rows.into_iter().enumerate() {
            match r {
                Some(v) => values.extend(v),
                None => {
                    return Err(GroupError::MissingState {
                        state: WorldState::from_index(i, n),
                    })
                }
            }
        }
        Self::from_flat(n, dim, values)
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, s: WorldState) -> &[f64] {
        let i = s.index(self.n);
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Permute latent coordinates: output coordinate `i` is input `order[i]`.
    pub fn permute_dims(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.dim || order.iter().any(|&i| i >= self.dim) {
            return Err(GroupError::DimensionMismatch {
                expected: self.dim,
                found: order.len(),
            });
        }
        let values = self
            .rows()
            .flat_map(|r| order.iter().map(move |&i| r[i]))
            .collect();
        Self::from_flat(self.n, self.dim, values)
    }

    /// Variance of each latent coordinate over the states.
    pub fn dim_variances(&self) -> Vec<f64> {
        let count = (self.n * self.n) as f64;
        (0..self.dim)
            .map(|d| {
                let mean = self.rows().map(|r| r[d]).sum::<f64>() / count;
                self.rows().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / count
            })
            .collect()
    }
}

/// `g ._Z z` for the four generators.
pub trait LatentAction {
    fn dim(&self) -> usize;

    fn act(&self, a: MoveAction, z: &[f64]) -> Vec<f64>;

    /// Apply `word[0]` first.
    fn act_word(&self, word: &[MoveAction], z: &[f64]) -> Vec<f64> {
        word.iter().fold(z.to_vec(), |acc, &a| self.act(a, &acc))
    }
}

impl<T: LatentAction + ?Sized> LatentAction for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn act(&self, a: MoveAction, z: &[f64]) -> Vec<f64> {
        (**self).act(a, z)
    }
}

/// Every generator acts as the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityAction {
    pub dim: usize,
}

impl LatentAction for IdentityAction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn act(&self, _: MoveAction, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn checked_act<L: LatentAction>(latent: &L, a: MoveAction, z: &[f64]) -> Result<Vec<f64>> {
    let out = latent.act(a, z);
    if out.len() != z.len() {
        return Err(GroupError::DimensionMismatch {
            expected: z.len(),
            found: out.len(),
        });
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(GroupError::NonFinite);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivarianceReport {
    /// `max_{s, a} || a ._Z f(s) - f(a ._W s) ||_2`.
    pub residual: f64,
    /// Where the maximum is attained.
    pub witness: (WorldState, MoveAction),
}

pub fn equivariance_residual<L: LatentAction>(
    table: &RepresentationTable,
    world: &WorldAction,
    latent: &L,
) -> Result<EquivarianceReport> {
    let n = world.grid_size();
    if table.grid_size() != n {
        return Err(GroupError::Coverage {
            table: table.grid_size(),
            world: n,
        });
    }
    if latent.dim() != table.dim() {
        return Err(GroupError::DimensionMismatch {
            expected: table.dim(),
            found: latent.dim(),
        });
    }
    let mut report = EquivarianceReport {
        residual: 0.0,
        witness: (WorldState { x: 0, y: 0 }, MoveAction::Left),
    };
    for i in 0..n * n {
        let s = WorldState::from_index(i, n);
        for a in MoveAction::ALL {
            let moved = checked_act(latent, a, table.get(s))?;
            let r = dist(&moved, table.get(world.step(s, a)));
            if r > report.residual {
                report = EquivarianceReport {
                    residual: r,
                    witness: (s, a),
                };
            }
        }
    }
    Ok(report)
}

fn validate_partition(dim: usize, split: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; dim];
    for part in split {
        if part.is_empty() {
            return Err(GroupError::InvalidPartition("empty subspace".into()));
        }
        for &d in part {
            if d >= dim {
                return Err(GroupError::InvalidPartition(format!(
                    "dimension {d} outside a {dim}-dimensional latent"
                )));
            }
            if std::mem::replace(&mut seen[d], true) {
                return Err(GroupError::InvalidPartition(format!(
                    "dimension {d} listed twice"
                )));
            }
        }
    }
    if let Some(d) = seen.iter().position(|s| !s) {
        return Err(GroupError::InvalidPartition(format!(
            "dimension {d} not covered"
        )));
    }
    Ok(())
}

/// For each subspace `Z_i` of `split`, the largest change any foreign
/// generator makes to its coordinates, over every latent in the table.
///
/// Subspace 0 belongs to the `x` factor and subspace 1 to the `y` factor;
/// further subspaces belong to neither and must be fixed by all generators.
pub fn disentanglement_check<L: LatentAction>(
    table: &RepresentationTable,
    latent: &L,
    split: &[Vec<usize>],
) -> Result<Vec<f64>> {
    validate_partition(table.dim(), split)?;
    if latent.dim() != table.dim() {
        return Err(GroupError::DimensionMismatch {
            expected: table.dim(),
            found: latent.dim(),
        });
    }
    let owner = |i: usize| match i {
        0 => Some(Axis::X),
        1 => Some(Axis::Y),
        _ => None,
    };
    let mut violations = vec![0.0f64; split.len()];
    for z in table.rows() {
        for a in MoveAction::ALL {
            let moved = checked_act(latent, a, z)?;
            for (i, part) in split.iter().enumerate() {
                if owner(i) == Some(a.axis()) {
                    continue;
                }
                let change = part
                    .iter()
                    .map(|&d| (moved[d] - z[d]).abs())
                    .fold(0.0, f64::max);
                violations[i] = violations[i].max(change);
            }
        }
    }
    Ok(violations)
}
