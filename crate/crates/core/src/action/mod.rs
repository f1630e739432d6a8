//! Learning the latent group action on a frozen representation: one MLP
//! maps `(z_t, onehot(a_t))` to `z_{t+1}`.

use crate::autodiff::{
    AdamConfig, AdamState, Checkpoint, CheckpointError, DiffError, NoiseSource, Parameter, Tape,
    Tensor, Var,
};
use crate::group::{LatentAction, RepresentationTable};
use crate::models::MlpLayout;
use crate::world::{MoveAction, TransitionDataset};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ActionError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training diverged at step {step}: {source}")]
    Diverged { step: u64, source: DiffError },
    #[error("no transitions to train on")]
    EmptyDataset,
    #[error("table covers a {table}x{table} grid but transitions live on {data}x{data}")]
    Coverage { table: usize, data: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("not an action-MLP checkpoint: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, ActionError>;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for ActionConfig {
    fn default() -> Self {
        Self {
            // The loss is still falling well past 30 epochs on a folded 2-d code.
            epochs: 300,
            batch_size: 128,
            learning_rate: 1e-3,
            hidden: vec![64, 64],
            seed: 0,
        }
    }
}

/// `(z_dim + 4) -> 64 -> 64 -> z_dim` with relu hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionMlp {
    z_dim: usize,
    layout: MlpLayout,
    params: Vec<Parameter>,
}

const MARKER: &str = "meta.action_mlp";

fn input_row(z: &[f64], a: MoveAction) -> Vec<f64> {
    let mut row = z.to_vec();
    let mut onehot = [0.0; 4];
    onehot[a.code() as usize] = 1.0;
    row.extend_from_slice(&onehot);
    row
}

impl ActionMlp {
    pub fn new(z_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut sizes = vec![z_dim + 4];
        sizes.extend_from_slice(hidden);
        sizes.push(z_dim);
        let mut params = Vec::new();
        let layout = MlpLayout::init(
            "action_mlp",
            &sizes,
            &mut params,
            &mut NoiseSource::stream(seed, 0),
        );
        Self {
            z_dim,
            layout,
            params,
        }
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn layout(&self) -> &MlpLayout {
        &self.layout
    }

    /// Predicted next latent for each `(z, a)` pair.
    pub fn predict_batch(&self, z: &[&[f64]], actions: &[MoveAction]) -> Result<Vec<Vec<f64>>> {
        let rows: Vec<Vec<f64>> = z
            .iter()
            .zip(actions)
            .map(|(z, &a)| input_row(z, a))
            .collect();
        let x = Tensor::from_rows(&rows)?;
        let y = self.layout.infer(&self.params, &x)?;
        Ok(y.data()
            .chunks_exact(self.z_dim)
            .map(<[f64]>::to_vec)
            .collect())
    }

    pub fn predict(&self, z: &[f64], a: MoveAction) -> Result<Vec<f64>> {
        Ok(self.predict_batch(&[z], &[a])?.remove(0))
    }

    /// Mean squared prediction error over the transitions.
    pub fn evaluate(&self, table: &RepresentationTable, data: &TransitionDataset) -> Result<f64> {
        check_coverage(table, data)?;
        let z: Vec<&[f64]> = data.records.iter().map(|t| table.get(t.state)).collect();
        let actions: Vec<MoveAction> = data.records.iter().map(|t| t.action).collect();
        let pred = self.predict_batch(&z, &actions)?;
        let mut total = 0.0;
        for (p, t) in pred.iter().zip(&data.records) {
            total += p
                .iter()
                .zip(table.get(t.next_state))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        }
        Ok(total / (data.len() * self.z_dim) as f64)
    }

    pub fn as_latent_action(&self) -> MlpAction<'_> {
        MlpAction { mlp: self }
    }

    pub fn to_checkpoint(&self, history: &[f64]) -> Checkpoint {
        let mut c = Checkpoint::new();
        for p in &self.params {
            c.insert(p.name.clone(), p.value.clone());
        }
        c.set_scalar(MARKER, 1.0);
        c.set_scalar("meta.z_dim", self.z_dim as f64);
        let sizes: Vec<f64> = self.layout.sizes.iter().map(|&s| s as f64).collect();
        c.insert(
            "meta.sizes",
            Tensor::new(vec![sizes.len()], sizes).expect("sizes"),
        );
        if !history.is_empty() {
            c.insert(
                "meta.history",
                Tensor::new(vec![history.len()], history.to_vec()).expect("history"),
            );
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<(Self, Vec<f64>)> {
        if !c.contains(MARKER) {
            return Err(ActionError::Malformed("missing action-MLP marker".into()));
        }
        let z_dim = c.get_scalar("meta.z_dim")? as usize;
        let sizes = c.get("meta.sizes")?.data().to_vec();
        if sizes.len() < 2
            || sizes[0] as usize != z_dim + 4
            || *sizes.last().unwrap() as usize != z_dim
        {
            return Err(ActionError::Malformed(format!("layer sizes {sizes:?}")));
        }
        let hidden: Vec<usize> = sizes[1..sizes.len() - 1]
            .iter()
            .map(|&v| v as usize)
            .collect();
        let mut mlp = Self::new(z_dim, &hidden, 0);
        for p in &mut mlp.params {
            let shape = p.value.shape().to_vec();
            p.value = c.get_shaped(&p.name, &shape)?.clone();
        }
        let history = match c.get("meta.history") {
            Ok(t) => t.data().to_vec(),
            Err(_) => Vec::new(),
        };
        Ok((mlp, history))
    }
}

/// An [`ActionMlp`] viewed as a latent group action.
#[derive(Debug, Clone, Copy)]
pub struct MlpAction<'a> {
    mlp: &'a ActionMlp,
}

impl LatentAction for MlpAction<'_> {
    fn dim(&self) -> usize {
        self.mlp.z_dim
    }

    fn act(&self, a: MoveAction, z: &[f64]) -> Vec<f64> {
        self.mlp
            .predict(z, a)
            .unwrap_or_else(|_| vec![f64::NAN; self.mlp.z_dim])
    }
}

fn check_coverage(table: &RepresentationTable, data: &TransitionDataset) -> Result<()> {
    if data.is_empty() {
        return Err(ActionError::EmptyDataset);
    }
    if table.grid_size() != data.spec.grid_size() {
        return Err(ActionError::Coverage {
            table: table.grid_size(),
            data: data.spec.grid_size(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ActionRun {
    pub mlp: ActionMlp,
    /// Batch losses in order.
    pub history: Vec<f64>,
}

/// Fit an [`ActionMlp`] to the transitions, reading latents from the frozen
/// table. The table is only ever read.
pub fn train_action_mlp(
    table: &RepresentationTable,
    data: &TransitionDataset,
    cfg: &ActionConfig,
) -> Result<ActionRun> {
    check_coverage(table, data)?;
    if cfg.epochs == 0
        || cfg.batch_size == 0
        || cfg.learning_rate.is_nan()
        || cfg.learning_rate <= 0.0
    {
        return Err(ActionError::InvalidConfig(format!("{cfg:?}")));
    }
    let mut mlp = ActionMlp::new(table.dim(), &cfg.hidden, cfg.seed);
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &mlp.params,
    );
    let mut order_src = NoiseSource::stream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::new();
    let mut step = 0u64;
    let width = table.dim() + 4;
    for _ in 0..cfg.epochs {
        order_src.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let mut x = Vec::with_capacity(chunk.len() * width);
            let mut y = Vec::with_capacity(chunk.len() * table.dim());
            for &i in chunk {
                let t = &data.records[i];
                x.extend(input_row(table.get(t.state), t.action));
                y.extend_from_slice(table.get(t.next_state));
            }
            let diverged = |source| ActionError::Diverged { step, source };
            let mut tape = Tape::new();
            let vars: Vec<Var> = mlp
                .params
                .iter()
                .map(|p| tape.param(p.value.clone()))
                .collect();
            let xv = tape.constant(Tensor::matrix(chunk.len(), width, x)?);
            let yv = tape.constant(Tensor::matrix(chunk.len(), table.dim(), y)?);
            let pred = mlp.layout.record(&mut tape, &vars, xv).map_err(diverged)?;
            let loss = tape.mse(pred, yv).map_err(diverged)?;
            history.push(tape.value(loss).item());
            let mut grads = tape.backward(loss).map_err(diverged)?;
            let grads: Vec<Tensor> = vars
                .iter()
                .map(|v| grads.take(*v).expect("every layer feeds the loss"))
                .collect();
            adam.step(&mut mlp.params, &grads).map_err(diverged)?;
            step += 1;
        }
    }
    Ok(ActionRun { mlp, history })
}

/// How a latent action handles moves across the edge of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrapReport {
    /// `(state, action)` pairs whose move wraps around.
    pub cases: usize,
    /// Predictions closer to the wrapped target than to the straight-line
    /// continuation past the edge.
    pub correct_side: usize,
    /// Predictions whose nearest table entry is the wrapped target.
    pub nearest_state: usize,
}

impl WrapReport {
    pub fn correct_side_rate(&self) -> f64 {
        self.correct_side as f64 / self.cases as f64
    }

    pub fn nearest_state_rate(&self) -> f64 {
        self.nearest_state as f64 / self.cases as f64
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Checks every wrapping move. For state `s` and action `a`, the straight-line
/// continuation is `2 z(s) - z(s')` where `s'` is the state `a` came from.
pub fn wrap_report<L: LatentAction>(table: &RepresentationTable, latent: &L) -> WrapReport {
    let n = table.grid_size();
    let mut report = WrapReport {
        cases: 0,
        correct_side: 0,
        nearest_state: 0,
    };
    for s in crate::world::all_states(n) {
        for a in MoveAction::ALL {
            if !crate::world::wraps(n, s, a) {
                continue;
            }
            report.cases += 1;
            let z = table.get(s);
            let pred = latent.act(a, z);
            let target = crate::world::step(n, s, a);
            let behind = table.get(crate::world::step(n, s, a.inverse()));
            let straight: Vec<f64> = z.iter().zip(behind).map(|(z, b)| 2.0 * z - b).collect();
            if dist2(&pred, table.get(target)) < dist2(&pred, &straight) {
                report.correct_side += 1;
            }
            let nearest = crate::world::all_states(n)
                .min_by(|p, q| dist2(&pred, table.get(*p)).total_cmp(&dist2(&pred, table.get(*q))))
                .expect("grid is non-empty");
            if nearest == target {
                report.nearest_state += 1;
            }
        }
    }
    report
}
