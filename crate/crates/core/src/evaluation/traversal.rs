use super::{EvalError, Result};
use crate::autodiff::Tensor;
use crate::models::Model;
use crate::world::{Observation, WorldState};
use std::f64::consts::TAU;
use std::io::Write;

/// Range swept along a single latent coordinate.
pub const SWEEP_RANGE: (f64, f64) = (-2.0, 2.0);
/// Phase range swept around a latent pair; the end point is excluded.
pub const PHASE_RANGE: (f64, f64) = (0.0, TAU);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Traversal {
    /// Sweep coordinate `i` over [`SWEEP_RANGE`].
    Dim(usize),
    /// Sweep the phase of coordinates `(2i, 2i+1)` at the radius of the base
    /// point.
    Phase(usize),
}

/// Latent points along a traversal. Every other coordinate stays at `base`.
fn traversal_points(base: &[f64], t: Traversal, steps: usize) -> Result<Vec<Vec<f64>>> {
    let z_dim = base.len();
    match t {
        Traversal::Dim(i) => {
            if i >= z_dim {
                return Err(EvalError::InvalidDim { index: i, z_dim });
            }
            let (lo, hi) = SWEEP_RANGE;
            Ok((0..steps)
                .map(|j| {
                    let frac = if steps > 1 {
                        j as f64 / (steps - 1) as f64
                    } else {
                        0.0
                    };
                    let mut z = base.to_vec();
                    z[i] = lo + frac * (hi - lo);
                    z
                })
                .collect())
        }
        Traversal::Phase(p) => {
            if 2 * p + 1 >= z_dim {
                return Err(EvalError::InvalidPair { index: p, z_dim });
            }
            let radius = base[2 * p].hypot(base[2 * p + 1]);
            Ok((0..steps)
                .map(|j| {
                    let phi =
                        PHASE_RANGE.0 + (PHASE_RANGE.1 - PHASE_RANGE.0) * j as f64 / steps as f64;
                    let mut z = base.to_vec();
                    z[2 * p] = radius * phi.cos();
                    z[2 * p + 1] = radius * phi.sin();
                    z
                })
                .collect())
        }
    }
}

/// Decoded frames along one traversal, starting from the encoding of the
/// state at the origin.
pub fn latent_traversal(model: &Model, t: Traversal, steps: usize) -> Result<Vec<Observation>> {
    if steps == 0 {
        return Err(EvalError::InvalidConfig(
            "a traversal needs at least one step".into(),
        ));
    }
    let base = model.encode_state(WorldState { x: 0, y: 0 })?;
    let points = traversal_points(&base, t, steps)?;
    let z = Tensor::from_rows(&points).map_err(crate::models::ModelError::from)?;
    Ok(model.decode(&z)?)
}

/// One traversal per latent pair for models with action matrices (the pair
/// structure is what makes them linear), one per coordinate otherwise.
pub fn traversal_grid(model: &Model, steps: usize) -> Result<Vec<Vec<Observation>>> {
    let kinds: Vec<Traversal> = if model.latent_action().is_some() {
        (0..model.z_dim() / 2).map(Traversal::Phase).collect()
    } else {
        (0..model.z_dim()).map(Traversal::Dim).collect()
    };
    kinds
        .into_iter()
        .map(|t| latent_traversal(model, t, steps))
        .collect()
}

/// Total circular displacement `(dx, dy)` of the intensity centroid along a
/// sequence of frames, in pixels. Each consecutive step is taken the short
/// way around the torus. Blank frames are skipped.
pub fn centroid_displacement(frames: &[Observation]) -> (f64, f64) {
    let short = |d: f64, size: f64| {
        let w = d.rem_euclid(size);
        if w > size / 2.0 {
            size - w
        } else {
            w
        }
    };
    let centres: Vec<(f64, f64, f64)> = frames
        .iter()
        .filter_map(|f| f.toroidal_centroid().map(|(x, y)| (x, y, f.size() as f64)))
        .collect();
    centres.windows(2).fold((0.0, 0.0), |(dx, dy), w| {
        let size = w[0].2;
        (
            dx + short(w[1].0 - w[0].0, size),
            dy + short(w[1].1 - w[0].1, size),
        )
    })
}

/// Binary PGM (P5, 8-bit): each inner list is one row of frames.
pub fn write_pgm_grid<W: Write>(rows: &[Vec<Observation>], mut w: W) -> Result<()> {
    let Some(first) = rows.iter().flatten().next() else {
        return Err(EvalError::EmptyInput);
    };
    let b = first.size();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    if rows.iter().flatten().any(|o| o.size() != b) {
        return Err(EvalError::InvalidConfig("frames of different sizes".into()));
    }
    let (width, height) = (cols * b, rows.len() * b);
    let mut raster = vec![0u8; width * height];
    for (r, frames) in rows.iter().enumerate() {
        for (c, frame) in frames.iter().enumerate() {
            for y in 0..b {
                for x in 0..b {
                    let v = (frame.get(y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
                    raster[(r * b + y) * width + c * b + x] = v;
                }
            }
        }
    }
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(&raster)?;
    Ok(())
}
