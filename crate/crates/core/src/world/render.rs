use super::{WorldSpec, WorldState};

/// Subsamples per pixel side; coverage is estimated on a 4x4 lattice.
const SUB: usize = 4;

/// A `size x size` grayscale image, row-major, intensities in `[0, 1]`.
/// Row index follows `y`, column index follows `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    size: usize,
    pixels: Vec<f64>,
}

impl Observation {
    pub fn new(size: usize, pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), size * size, "observation buffer size");
        Self { size, pixels }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.size + col]
    }

    pub fn mass(&self) -> f64 {
        self.pixels.iter().sum()
    }

    /// Bit pattern of every pixel, for exact multiset comparisons.
    pub fn bits(&self) -> Vec<u64> {
        self.pixels.iter().map(|p| p.to_bits()).collect()
    }

    /// Intensity-weighted centroid `(x, y)` in continuous pixel coordinates
    /// (pixel `j` spans `[j, j+1)`), using circular means so a disc straddling
    /// an edge is located correctly. `None` for a blank image.
    pub fn toroidal_centroid(&self) -> Option<(f64, f64)> {
        let b = self.size as f64;
        let tau = std::f64::consts::TAU;
        let (mut cx, mut sx, mut cy, mut sy, mut total) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for row in 0..self.size {
            for col in 0..self.size {
                let w = self.get(row, col);
                if w <= 0.0 {
                    continue;
                }
                let ax = tau * (col as f64 + 0.5) / b;
                let ay = tau * (row as f64 + 0.5) / b;
                cx += w * ax.cos();
                sx += w * ax.sin();
                cy += w * ay.cos();
                sy += w * ay.sin();
                total += w;
            }
        }
        if total <= 0.0 {
            return None;
        }
        let to_pixels = |s: f64, c: f64| s.atan2(c).rem_euclid(tau) * b / tau;
        Some((to_pixels(sx, cx), to_pixels(sy, cy)))
    }
}

/// Disc centre of `s`, in quarter-pixel units. Centres snap to the sampling
/// lattice, so every state covers the same number of subsamples.
fn centre_quarters(coord: usize, n: usize, b: usize) -> i64 {
    // round((coord + 0.5) * b / n * SUB)
    let num = (2 * coord + 1) * SUB * b * 2 + 2 * n;
    (num / (4 * n)) as i64
}

pub(super) fn render(spec: &WorldSpec, s: WorldState) -> Observation {
    let n = spec.grid_size();
    let b = spec.image_size();
    let period = (SUB * b) as f64;
    let r = spec.agent_radius() as f64 * SUB as f64;
    let r2 = r * r;
    let cx = centre_quarters(s.x, n, b) as f64;
    let cy = centre_quarters(s.y, n, b) as f64;

    let wrap = |d: f64| {
        let d = d.rem_euclid(period);
        if d >= period / 2.0 {
            d - period
        } else {
            d
        }
    };

    // Offsets along each axis depend on one coordinate only.
    let offsets = |c: f64| -> Vec<f64> {
        (0..SUB * b)
            .map(|q| {
                let d = wrap(q as f64 + 0.5 - c);
                d * d
            })
            .collect()
    };
    let dx2 = offsets(cx);
    let dy2 = offsets(cy);

    let norm = (SUB * SUB) as f64;
    let mut pixels = vec![0.0; b * b];
    for row in 0..b {
        for col in 0..b {
            let mut hits = 0u32;
            for sy in 0..SUB {
                let ddy = dy2[row * SUB + sy];
                if ddy >= r2 {
                    continue;
                }
                for sx in 0..SUB {
                    if ddy + dx2[col * SUB + sx] < r2 {
                        hits += 1;
                    }
                }
            }
            pixels[row * b + col] = hits as f64 / norm;
        }
    }
    Observation { size: b, pixels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::all_states;

    #[test]
    fn edge_states_render_differently() {
        let spec = WorldSpec::new(10, 32, 4.0).unwrap();
        let a = spec.render(WorldState { x: 0, y: 0 });
        let b = spec.render(WorldState { x: 9, y: 0 });
        assert_ne!(a, b);
        assert_eq!(a, spec.render(WorldState { x: 0, y: 0 }));
    }

    #[test]
    fn disc_has_interior_background_and_rim() {
        let spec = WorldSpec::default();
        let o = spec.render(WorldState { x: 3, y: 6 });
        assert!(o.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert!(o.pixels().contains(&1.0));
        assert!(o.pixels().contains(&0.0));
        assert!(o.pixels().iter().any(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn mass_is_constant_across_states() {
        for (n, b, r) in [(10, 32, 4.0f32), (6, 8, 1.5), (7, 20, 3.3), (16, 32, 2.0)] {
            let spec = WorldSpec::new(n, b, r).unwrap();
            let m0 = spec.render(WorldState { x: 0, y: 0 }).mass();
            for s in all_states(n) {
                assert_eq!(spec.render(s).mass(), m0, "n={n} b={b} r={r} s={s}");
            }
        }
    }

    #[test]
    fn render_is_injective_up_to_n16() {
        for n in 2..=16 {
            let spec = WorldSpec::new(n, 32, 4.0).unwrap();
            let mut seen = std::collections::HashSet::new();
            for s in all_states(n) {
                assert!(
                    seen.insert(spec.render(s).bits()),
                    "collision at n={n} s={s}"
                );
            }
        }
    }

    #[test]
    fn centroid_tracks_wrapped_disc() {
        let spec = WorldSpec::default();
        let (x0, y0) = spec
            .render(WorldState { x: 0, y: 0 })
            .toroidal_centroid()
            .unwrap();
        assert!(
            (x0 - 1.5).abs() < 0.3 && (y0 - 1.5).abs() < 0.3,
            "{x0} {y0}"
        );
        let (x5, _) = spec
            .render(WorldState { x: 5, y: 0 })
            .toroidal_centroid()
            .unwrap();
        assert!((x5 - 17.5).abs() < 0.3, "{x5}");
    }
}
