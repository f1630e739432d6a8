//! Closed-form reference representations: the trivial representation and
//! the 4-dimensional linear representation `f(x, y) = (e^{2i pi x/N}, e^{2i pi y/N})`
//! with its block-rotation action.
//!
//! Latents are real 4-vectors laid out as `(Re z_x, Im z_x, Re z_y, Im z_y)`.

use crate::group::{LatentAction, RepresentationTable};
use crate::world::{Axis, MoveAction, WorldState};
use std::f64::consts::TAU;
use thiserror::Error;

pub type Matrix4 = [[f64; 4]; 4];
pub type Block2 = [[f64; 2]; 2];

pub const IDENTITY4: Matrix4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("expected a latent of dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("entry ({row}, {col}) of a {block:?}-block matrix must be {expected}, found {found}")]
    Structure {
        block: Axis,
        row: usize,
        col: usize,
        expected: f64,
        found: f64,
    },
}

/// First row/column of the 2x2 block an axis owns.
pub fn block_offset(axis: Axis) -> usize {
    match axis {
        Axis::X => 0,
        Axis::Y => 2,
    }
}

pub fn matmul4(a: &Matrix4, b: &Matrix4) -> Matrix4 {
    let mut out = [[0.0; 4]; 4];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (0..4).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

pub fn matvec4(m: &Matrix4, z: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn det2(b: &Block2) -> f64 {
    b[0][0] * b[1][1] - b[0][1] * b[1][0]
}

pub fn rotation(angle: f64) -> Block2 {
    let (s, c) = angle.sin_cos();
    [[c, -s], [s, c]]
}

/// A 4x4 matrix acting on one factor: the active 2x2 diagonal block is free,
/// the other block is exactly the identity and everything off-block is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionMatrix {
    entries: Matrix4,
    block: Axis,
}

impl ActionMatrix {
    pub fn identity(block: Axis) -> Self {
        Self {
            entries: IDENTITY4,
            block,
        }
    }

    pub fn from_block(block: Axis, active: Block2) -> Self {
        let mut entries = IDENTITY4;
        let o = block_offset(block);
        for r in 0..2 {
            for c in 0..2 {
                entries[o + r][o + c] = active[r][c];
            }
        }
        Self { entries, block }
    }

    /// Validate the frozen structure of a full matrix.
    pub fn from_entries(block: Axis, entries: Matrix4) -> Result<Self, AnalyticError> {
        let m = Self { entries, block };
        for r in 0..4 {
            for c in 0..4 {
                if m.is_trainable(r, c) {
                    continue;
                }
                let expected = IDENTITY4[r][c];
                let found = entries[r][c];
                if found != expected {
                    return Err(AnalyticError::Structure {
                        block,
                        row: r,
                        col: c,
                        expected,
                        found,
                    });
                }
            }
        }
        Ok(m)
    }

    pub fn entries(&self) -> &Matrix4 {
        &self.entries
    }

    pub fn block(&self) -> Axis {
        self.block
    }

    pub fn is_trainable(&self, row: usize, col: usize) -> bool {
        let o = block_offset(self.block);
        (o..o + 2).contains(&row) && (o..o + 2).contains(&col)
    }

    pub fn trainable_mask(&self) -> [[bool; 4]; 4] {
        let mut m = [[false; 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.is_trainable(r, c);
            }
        }
        m
    }

    pub fn active_block(&self) -> Block2 {
        let o = block_offset(self.block);
        [
            [self.entries[o][o], self.entries[o][o + 1]],
            [self.entries[o + 1][o], self.entries[o + 1][o + 1]],
        ]
    }

    pub fn determinant(&self) -> f64 {
        det2(&self.active_block())
    }

    /// Rotation angle read off the active block, in `(-pi, pi]`.
    pub fn angle(&self) -> f64 {
        let b = self.active_block();
        b[1][0].atan2(b[0][0])
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>, AnalyticError> {
        apply(self, z)
    }

    /// `self^k` (same block, so the structure is preserved).
    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::identity(self.block);
        for _ in 0..k {
            acc.entries = matmul4(&acc.entries, &self.entries);
        }
        acc
    }
}

/// `m * z`.
pub fn apply(m: &ActionMatrix, z: &[f64]) -> Result<Vec<f64>, AnalyticError> {
    if z.len() != 4 {
        return Err(AnalyticError::DimensionMismatch {
            expected: 4,
            found: z.len(),
        });
    }
    Ok(matvec4(&m.entries, z))
}

/// `+2 pi / N` for Right/Up, `-2 pi / N` for Left/Down.
pub fn ideal_angle(a: MoveAction, n: usize) -> f64 {
    a.direction() as f64 * TAU / n as f64
}

pub fn ideal_matrix(a: MoveAction, n: usize) -> ActionMatrix {
    ActionMatrix::from_block(a.axis(), rotation(ideal_angle(a, n)))
}

/// The 4-dimensional linear representation on an `N x N` torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalyticLsb {
    n: usize,
}

impl AnalyticLsb {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "grid size must be positive");
        Self { n }
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn encode(&self, s: WorldState) -> [f64; 4] {
        let (sx, cx) = (TAU * s.x as f64 / self.n as f64).sin_cos();
        let (sy, cy) = (TAU * s.y as f64 / self.n as f64).sin_cos();
        [cx, sx, cy, sy]
    }

    pub fn table(&self) -> RepresentationTable {
        RepresentationTable::from_fn(self.n, 4, |s| self.encode(s).to_vec())
            .expect("finite by construction")
    }

    /// The matching linear action: one ideal matrix per move.
    pub fn action(&self) -> MatrixAction {
        MatrixAction::new(MoveAction::ALL.map(|a| ideal_matrix(a, self.n)))
    }
}

/// Every state mapped to the zero vector.
pub fn trivial_representation(n: usize, dim: usize) -> RepresentationTable {
    RepresentationTable::from_fn(n, dim, |_| vec![0.0; dim]).expect("finite by construction")
}

/// A linear latent action given by one 4x4 matrix per move, indexed by
/// action code.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixAction {
    matrices: [Matrix4; 4],
}

impl MatrixAction {
    pub fn new(matrices: [ActionMatrix; 4]) -> Self {
        Self {
            matrices: matrices.map(|m| m.entries),
        }
    }

    /// Arbitrary matrices, without the block structure enforced.
    pub fn from_raw(matrices: [Matrix4; 4]) -> Self {
        Self { matrices }
    }

    pub fn matrix(&self, a: MoveAction) -> &Matrix4 {
        &self.matrices[a.code() as usize]
    }
}

impl LatentAction for MatrixAction {
    fn dim(&self) -> usize {
        4
    }

    fn act(&self, a: MoveAction, z: &[f64]) -> Vec<f64> {
        matvec4(self.matrix(a), z)
    }
}
