use super::{EvalError, Result};
use crate::analytic::{ideal_angle, rotation, ActionMatrix, Block2, Matrix4};
use crate::models::Model;
use crate::world::{Axis, MoveAction};
use serde::Serialize;
use std::f64::consts::{PI, TAU};
use std::io::Write;

/// Comparison of one learned action matrix with its ideal rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionReport {
    pub action: MoveAction,
    pub block: Block2,
    /// `atan2(block[1][0], block[0][0])`, in `(-pi, pi]`.
    pub angle: f64,
    /// Ideal angle in the orientation the encoder picked for this axis.
    pub ideal_angle: f64,
    /// `+1` if the axis turns the standard way, `-1` if mirrored.
    pub orientation: i8,
    pub angle_error: f64,
    /// Mean squared difference over all 16 entries.
    pub mse: f64,
    /// Mean squared difference over the 4 active-block entries.
    pub block_mse: f64,
    pub determinant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixReport {
    pub grid_size: usize,
    /// Sorted by action code.
    pub actions: Vec<ActionReport>,
}

impl MatrixReport {
    pub fn max_angle_error(&self) -> f64 {
        self.actions
            .iter()
            .map(|r| r.angle_error)
            .fold(0.0, f64::max)
    }

    pub fn max_mse(&self) -> f64 {
        self.actions.iter().map(|r| r.mse).fold(0.0, f64::max)
    }

    pub fn max_block_mse(&self) -> f64 {
        self.actions.iter().map(|r| r.block_mse).fold(0.0, f64::max)
    }

    pub fn get(&self, a: MoveAction) -> Option<&ActionReport> {
        self.actions.iter().find(|r| r.action == a)
    }
}

fn wrap_angle(theta: f64) -> f64 {
    // (-pi, pi]
    let w = PI - (PI - theta).rem_euclid(TAU);
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

fn entry_mse(a: &Matrix4, b: &Matrix4) -> f64 {
    let mut s = 0.0;
    for r in 0..4 {
        for c in 0..4 {
            s += (a[r][c] - b[r][c]).powi(2);
        }
    }
    s / 16.0
}

fn block_mse(a: &Block2, b: &Block2) -> f64 {
    let mut s = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            s += (a[r][c] - b[r][c]).powi(2);
        }
    }
    s / 4.0
}

fn ideal_for(m: &ActionMatrix, angle: f64) -> ActionMatrix {
    ActionMatrix::from_block(m.block(), rotation(angle))
}

/// Compares learned matrices with the ideal rotations by `+-2 pi / N`.
///
/// An encoder may lay an axis out clockwise, in which case Right/Up rotate
/// by `-2 pi / N`; that is the same representation seen in a mirror. The
/// orientation of each axis is picked to minimise the block error of its
/// actions (ties go to the standard orientation).
pub fn analyze_action_matrices(
    matrices: &[(MoveAction, ActionMatrix)],
    grid_size: usize,
) -> MatrixReport {
    let orientation = |axis: Axis| -> i8 {
        let cost = |sign: f64| -> f64 {
            matrices
                .iter()
                .filter(|(a, _)| a.axis() == axis)
                .map(|(a, m)| {
                    let ideal = rotation(sign * ideal_angle(*a, grid_size));
                    block_mse(&m.active_block(), &ideal)
                })
                .sum()
        };
        if cost(-1.0) < cost(1.0) {
            -1
        } else {
            1
        }
    };
    let signs = [orientation(Axis::X), orientation(Axis::Y)];

    let mut actions: Vec<ActionReport> = matrices
        .iter()
        .map(|(a, m)| {
            let sign = match a.axis() {
                Axis::X => signs[0],
                Axis::Y => signs[1],
            };
            let ideal_angle = sign as f64 * ideal_angle(*a, grid_size);
            let ideal = ideal_for(m, ideal_angle);
            let angle = wrap_angle(m.angle());
            ActionReport {
                action: *a,
                block: m.active_block(),
                angle,
                ideal_angle,
                orientation: sign,
                angle_error: wrap_angle(angle - ideal_angle).abs(),
                mse: entry_mse(m.entries(), ideal.entries()),
                block_mse: block_mse(&m.active_block(), &ideal.active_block()),
                determinant: m.determinant(),
            }
        })
        .collect();
    actions.sort_by_key(|r| r.action.code());
    MatrixReport { grid_size, actions }
}

/// [`analyze_action_matrices`] on the four matrices of a trained model.
pub fn analyze_matrices(model: &Model, grid_size: usize) -> Result<MatrixReport> {
    let mut mats = Vec::with_capacity(4);
    for a in MoveAction::ALL {
        mats.push((
            a,
            model.action_matrix(a).ok_or(EvalError::NoActionMatrices)?,
        ));
    }
    Ok(analyze_action_matrices(&mats, grid_size))
}

/// Determinant of the active block of `m^k` for `k = 1..=max_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftCurve {
    pub determinant: f64,
    pub samples: Vec<(u32, f64)>,
}

impl DriftCurve {
    /// `|log det(m^k)|` per sample; infinite once the determinant has
    /// overflowed or underflowed.
    pub fn log_magnitudes(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|(_, d)| d.abs().ln().abs())
            .collect()
    }

    pub fn overflowed(&self) -> bool {
        self.samples.iter().any(|(_, d)| d.is_infinite())
    }
}

/// Uses `det(A^k) = det(A)^k`, so large `k` costs nothing and overflow shows
/// up as an infinite determinant rather than an error.
pub fn determinant_drift(m: &ActionMatrix, max_k: u32) -> Result<DriftCurve> {
    if max_k == 0 {
        return Err(EvalError::InvalidConfig("max_k must be at least 1".into()));
    }
    let det = m.determinant();
    let samples = (1..=max_k)
        .map(|k| {
            let d = det.powi(k as i32);
            (k, d)
        })
        .collect();
    Ok(DriftCurve {
        determinant: det,
        samples,
    })
}

#[derive(Serialize)]
struct MatrixRow<'a> {
    action: &'a str,
    angle: f64,
    ideal_angle: f64,
    angle_error: f64,
    mse: f64,
    block_mse: f64,
    determinant: f64,
    b00: f64,
    b01: f64,
    b10: f64,
    b11: f64,
}

pub fn write_matrix_report_csv<W: Write>(report: &MatrixReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in &report.actions {
        out.serialize(MatrixRow {
            action: r.action.name(),
            angle: r.angle,
            ideal_angle: r.ideal_angle,
            angle_error: r.angle_error,
            mse: r.mse,
            block_mse: r.block_mse,
            determinant: r.determinant,
            b00: r.block[0][0],
            b01: r.block[0][1],
            b10: r.block[1][0],
            b11: r.block[1][1],
        })?;
    }
    out.flush()?;
    Ok(())
}

/// One row per `k` with a determinant column per curve; `curves` pairs a
/// column label with its curve. All curves must cover the same `k`.
pub fn write_drift_csv<W: Write>(curves: &[(&str, &DriftCurve)], w: W) -> Result<()> {
    let Some((_, first)) = curves.first() else {
        return Err(EvalError::EmptyInput);
    };
    let ks: Vec<u32> = first.samples.iter().map(|s| s.0).collect();
    if curves
        .iter()
        .any(|(_, c)| !c.samples.iter().map(|s| s.0).eq(ks.iter().copied()))
    {
        return Err(EvalError::InvalidConfig(
            "drift curves cover different k".into(),
        ));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["k"];
    header.extend(curves.iter().map(|(name, _)| *name));
    out.write_record(&header)?;
    for (i, k) in ks.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(curves.iter().map(|(_, c)| c.samples[i].1.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::ideal_matrix;
    use proptest::prelude::*;

    fn ideal_set(n: usize) -> Vec<(MoveAction, ActionMatrix)> {
        MoveAction::ALL
            .iter()
            .map(|&a| (a, ideal_matrix(a, n)))
            .collect()
    }

    #[test]
    fn ideal_matrices_are_exact() {
        let r = analyze_action_matrices(&ideal_set(10), 10);
        assert_eq!(r.actions.len(), 4);
        for row in &r.actions {
            assert!(row.mse < 1e-30 && row.block_mse < 1e-30);
            assert!(row.angle_error < 1e-12);
            assert!((row.determinant - 1.0).abs() < 1e-12);
            assert_eq!(row.orientation, 1);
        }
        let right = r.get(MoveAction::Right).unwrap();
        assert!((right.angle - TAU / 10.0).abs() < 1e-12);
    }

    #[test]
    fn six_by_six_angle_is_a_third_of_pi() {
        let r = analyze_action_matrices(&ideal_set(6), 6);
        assert!((r.get(MoveAction::Up).unwrap().angle - PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mirrored_axis_is_recognised() {
        let n = 10;
        let mut mats = ideal_set(n);
        // Flip the y axis: Up now turns clockwise.
        for (a, m) in mats.iter_mut() {
            if a.axis() == Axis::Y {
                *m = ActionMatrix::from_block(Axis::Y, rotation(-ideal_angle(*a, n)));
            }
        }
        let r = analyze_action_matrices(&mats, n);
        let up = r.get(MoveAction::Up).unwrap();
        assert_eq!(up.orientation, -1);
        assert!(up.mse < 1e-30);
        assert_eq!(r.get(MoveAction::Left).unwrap().orientation, 1);
    }

    #[test]
    fn errors_match_a_hand_computation() {
        let n = 10;
        let theta = TAU / 10.0 + 0.03;
        let learned = ActionMatrix::from_block(
            Axis::X,
            [[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]],
        );
        let r = analyze_action_matrices(&[(MoveAction::Right, learned)], n);
        let row = &r.actions[0];
        assert!((row.angle_error - 0.03).abs() < 1e-12);
        let ideal = TAU / 10.0;
        let d = [
            theta.cos() - ideal.cos(),
            -theta.sin() + ideal.sin(),
            theta.sin() - ideal.sin(),
            theta.cos() - ideal.cos(),
        ];
        let sq: f64 = d.iter().map(|v| v * v).sum();
        assert!((row.block_mse - sq / 4.0).abs() < 1e-15);
        assert!((row.mse - sq / 16.0).abs() < 1e-15);
    }

    #[test]
    fn angle_is_never_minus_pi() {
        let m = ActionMatrix::from_block(Axis::X, [[-1.0, 0.0], [-0.0, -1.0]]);
        let r = analyze_action_matrices(&[(MoveAction::Right, m)], 2);
        assert_eq!(r.actions[0].angle, PI);
    }

    #[test]
    fn ideal_drift_is_flat() {
        for a in MoveAction::ALL {
            let c = determinant_drift(&ideal_matrix(a, 10), 10_000).unwrap();
            assert_eq!(c.samples.len(), 10_000);
            assert!(c.samples.iter().all(|(_, d)| (d - 1.0).abs() <= 1e-9));
        }
    }

    #[test]
    fn point_nine_nine_nine_decays_to_one_over_e() {
        let m = ActionMatrix::from_block(Axis::X, [[0.999, 0.0], [0.0, 1.0]]);
        let c = determinant_drift(&m, 1000).unwrap();
        let (k, d) = c.samples[999];
        assert_eq!(k, 1000);
        assert!((d - 0.367_695_424_770_9).abs() < 1e-9, "{d}");
    }

    #[test]
    fn drift_matches_explicit_powers() {
        let m = ActionMatrix::from_block(Axis::Y, [[0.81, -0.6], [0.59, 0.8]]);
        let c = determinant_drift(&m, 40).unwrap();
        for &(k, d) in &c.samples {
            let explicit = m.pow(k).determinant();
            assert!(
                (d - explicit).abs() <= 1e-12 * explicit.abs().max(1.0),
                "k={k}"
            );
        }
    }

    #[test]
    fn overflow_is_infinite_not_a_panic() {
        let m = ActionMatrix::from_block(Axis::X, [[1.5, 0.0], [0.0, 1.5]]);
        let c = determinant_drift(&m, 2000).unwrap();
        assert!(c.overflowed());
        assert_eq!(c.samples.last().unwrap().1, f64::INFINITY);
        assert!(determinant_drift(&m, 0).is_err());
    }

    #[test]
    fn csv_has_one_row_per_action() {
        let r = analyze_action_matrices(&ideal_set(10), 10);
        let mut buf = Vec::new();
        write_matrix_report_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("action,angle,"));
    }

    #[test]
    fn drift_csv_is_wide() {
        let learned = ActionMatrix::from_block(Axis::X, [[0.0, -1.01], [1.0, 0.0]]);
        let a = determinant_drift(&learned, 3).unwrap();
        let b = determinant_drift(&ideal_matrix(MoveAction::Right, 10), 3).unwrap();
        let mut buf = Vec::new();
        write_drift_csv(&[("learned", &a), ("ideal", &b)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "k,learned,ideal");
        assert!(lines[1].starts_with("1,1.01,"));
        let short = determinant_drift(&learned, 2).unwrap();
        assert!(write_drift_csv(&[("a", &a), ("b", &short)], Vec::new()).is_err());
        assert!(write_drift_csv(&[], Vec::new()).is_err());
    }

    fn arb_block() -> impl Strategy<Value = Block2> {
        prop::array::uniform2(prop::array::uniform2(-1.5f64..1.5))
    }

    proptest! {
        #[test]
        fn report_ignores_listing_order(blocks in prop::array::uniform4(arb_block()), rot in 0usize..4) {
            let mats: Vec<_> = MoveAction::ALL
                .iter()
                .zip(blocks)
                .map(|(&a, b)| (a, ActionMatrix::from_block(a.axis(), b)))
                .collect();
            let mut shuffled = mats.clone();
            shuffled.rotate_left(rot);
            shuffled.reverse();
            prop_assert_eq!(
                analyze_action_matrices(&mats, 10),
                analyze_action_matrices(&shuffled, 10)
            );
        }

        #[test]
        fn report_fields_stay_in_range(blocks in prop::array::uniform4(arb_block())) {
            let mats: Vec<_> = MoveAction::ALL
                .iter()
                .zip(blocks)
                .map(|(&a, b)| (a, ActionMatrix::from_block(a.axis(), b)))
                .collect();
            for r in analyze_action_matrices(&mats, 7).actions {
                prop_assert!(r.angle > -PI && r.angle <= PI);
                prop_assert!(r.mse >= 0.0 && r.block_mse >= 0.0);
                prop_assert!(r.angle_error <= PI);
            }
        }

        #[test]
        fn log_drift_grows_linearly(det in 0.5f64..1.5) {
            prop_assume!((det - 1.0).abs() > 1e-3);
            let m = ActionMatrix::from_block(Axis::X, [[det, 0.0], [0.0, 1.0]]);
            let c = determinant_drift(&m, 200).unwrap();
            let logs = c.log_magnitudes();
            for w in logs.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
            for (i, l) in logs.iter().enumerate() {
                let expect = (i + 1) as f64 * det.ln().abs();
                prop_assert!((l - expect).abs() <= 1e-9 * expect);
            }
        }
    }
}
