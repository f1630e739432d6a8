use super::forest::{train_decision_forest, Features, ForestConfig};
use super::{EvalError, Result};
use crate::autodiff::NoiseSource;
use crate::group::RepresentationTable;
use crate::world::TransitionDataset;
use serde::Serialize;
use std::io::Write;

/// Noise stream for the fold shuffle; tree streams start at 1.
const FOLD_STREAM: u64 = 0;
/// Well clear of any tree stream.
const LABEL_STREAM: u64 = 1 << 40;

/// A named state encoder, given as a lookup table over grid states.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub name: String,
    pub table: RepresentationTable,
}

impl Representation {
    pub fn new(name: impl Into<String>, table: RepresentationTable) -> Self {
        Self {
            name: name.into(),
            table,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub sizes: Vec<usize>,
    pub depths: Vec<usize>,
    pub folds: usize,
    pub trees: usize,
    pub seed: u64,
    /// Permute the labels before cross-validation (chance-level control).
    pub shuffle_labels: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            sizes: vec![1000, 10_000],
            depths: (1..=10).collect(),
            folds: 10,
            trees: 100,
            seed: 0,
            shuffle_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkResult {
    pub representation: String,
    pub size: usize,
    pub max_depth: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub folds_used: usize,
    /// Folds whose training part held a single class.
    pub folds_skipped: usize,
}

/// `table(s_t) ++ table(s_{t+1})` per record, labelled with the action code.
pub fn inverse_features(
    table: &RepresentationTable,
    data: &TransitionDataset,
) -> Result<(Features, Vec<u8>)> {
    if data.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if table.grid_size() != data.spec.grid_size() {
        return Err(EvalError::InvalidConfig(format!(
            "table covers a {0}x{0} grid, data a {1}x{1} grid",
            table.grid_size(),
            data.spec.grid_size()
        )));
    }
    let d = table.dim();
    let mut values = Vec::with_capacity(data.len() * 2 * d);
    let mut labels = Vec::with_capacity(data.len());
    for t in &data.records {
        values.extend_from_slice(table.get(t.state));
        values.extend_from_slice(table.get(t.next_state));
        labels.push(t.action.code());
    }
    Ok((Features::new(2 * d, values)?, labels))
}

/// Fold index of each sample: a seeded shuffle dealt round-robin, so fold
/// sizes differ by at most one.
pub fn fold_assignment(len: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    NoiseSource::stream(seed, FOLD_STREAM).shuffle(&mut order);
    let mut fold = vec![0; len];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// k-fold accuracies of one representation at one dataset size, for every
/// depth in `cfg.depths`. Each fold grows one forest at the deepest depth
/// and reads shallower depths off it by truncation.
fn cross_validate(
    x: &Features,
    labels: &[u8],
    cfg: &BenchmarkConfig,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let max_depth = *cfg.depths.iter().max().expect("depths checked non-empty");
    let fold = fold_assignment(labels.len(), cfg.folds, cfg.seed);
    let mut per_depth = vec![Vec::with_capacity(cfg.folds); cfg.depths.len()];
    let mut skipped = 0;
    for k in 0..cfg.folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] != k).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] == k).collect();
        let train_y: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
        if train_y.iter().all(|&l| l == train_y[0]) {
            log::warn!("fold {k}: single-class training split, skipped");
            skipped += 1;
            continue;
        }
        let forest = train_decision_forest(
            &x.select(&train),
            &train_y,
            ForestConfig {
                trees: cfg.trees,
                max_depth,
                seed: cfg.seed.wrapping_add(k as u64),
                bootstrap: true,
            },
        )?;
        let test_x = x.select(&test);
        let test_y: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
        for (slot, &d) in per_depth.iter_mut().zip(&cfg.depths) {
            slot.push(forest.accuracy(&test_x, &test_y, d));
        }
    }
    Ok((per_depth, skipped))
}

/// Inverse-model benchmark: predict `a_t` from `(s_t, s_{t+1})` encoded by
/// each representation, for every dataset size (a prefix of `data`) and
/// every depth. Rows come out grouped by representation, then size, then
/// depth in the order given.
pub fn inverse_model_benchmark(
    representations: &[Representation],
    data: &TransitionDataset,
    cfg: &BenchmarkConfig,
) -> Result<Vec<BenchmarkResult>> {
    if representations.is_empty() || cfg.sizes.is_empty() || cfg.depths.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if cfg.folds < 2 {
        return Err(EvalError::InvalidConfig("need at least 2 folds".into()));
    }
    for &size in &cfg.sizes {
        if size > data.len() {
            return Err(EvalError::InsufficientData(format!(
                "size {size} requested but the dataset has {} records",
                data.len()
            )));
        }
        if size / cfg.folds < 10 {
            return Err(EvalError::InsufficientData(format!(
                "size {size} leaves fewer than 10 samples in some of {} folds",
                cfg.folds
            )));
        }
    }

    let mut out = Vec::new();
    for rep in representations {
        for &size in &cfg.sizes {
            let (x, mut labels) = inverse_features(&rep.table, &data.prefix(size))?;
            if cfg.shuffle_labels {
                NoiseSource::stream(cfg.seed, LABEL_STREAM).shuffle(&mut labels);
            }
            let (per_depth, skipped) = cross_validate(&x, &labels, cfg)?;
            for (accs, &d) in per_depth.iter().zip(&cfg.depths) {
                let (mean, std) = mean_std(accs);
                log::info!("{} n={size} depth={d}: {mean:.4} +- {std:.4}", rep.name);
                out.push(BenchmarkResult {
                    representation: rep.name.clone(),
                    size,
                    max_depth: d,
                    mean_accuracy: mean,
                    std_accuracy: std,
                    folds_used: accs.len(),
                    folds_skipped: skipped,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_benchmark_csv<W: Write>(rows: &[BenchmarkResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
