//! Trainable models on rendered observations: a plain auto-encoder, a VAE
//! with an annealed KL weight (CCI-VAE variant), and the Forward-VAE whose
//! latent transitions are four learned block matrices.
//!
//! All three share one MLP encoder/decoder shape: `B^2 -> 256 -> 128 -> 2z`
//! (or `z` for the auto-encoder) and `z -> 128 -> 256 -> B^2` with a sigmoid
//! on the output.

mod mlp;
mod train;

pub use mlp::MlpLayout;
pub use train::{
    forward_term, loss_gradcheck, train, train_autoencoder, train_cci_vae, train_forward_vae,
    write_log_csv, LogRow, TrainingRun,
};

use crate::analytic::{ActionMatrix, Matrix4, MatrixAction, IDENTITY4};
use crate::autodiff::{
    kernels, Checkpoint, CheckpointError, DiffError, NoiseSource, Parameter, Tensor,
};
use crate::group::{GroupError, RepresentationTable};
use crate::world::{MoveAction, Observation, TransitionDataset, WorldSpec, WorldState};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("training diverged at step {step} (epoch {epoch}): {source}")]
    Diverged {
        step: u64,
        epoch: usize,
        source: DiffError,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(
        "dataset is not a trajectory: record {0} does not start where the previous record ends"
    )]
    NotTrajectory(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("world spec mismatch: model trained on {model:?}, given {given:?}")]
    SpecMismatch { model: WorldSpec, given: WorldSpec },
    #[error("expected a {expected} checkpoint, found {found}")]
    WrongKind { expected: String, found: String },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Autoencoder,
    CciVae,
    ForwardVae,
}

impl ModelKind {
    pub fn code(self) -> u8 {
        match self {
            ModelKind::Autoencoder => 0,
            ModelKind::CciVae => 1,
            ModelKind::ForwardVae => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ModelKind::Autoencoder),
            1 => Some(ModelKind::CciVae),
            2 => Some(ModelKind::ForwardVae),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Autoencoder => "ae",
            ModelKind::CciVae => "cci-vae",
            ModelKind::ForwardVae => "forward-vae",
        }
    }

    pub fn is_variational(self) -> bool {
        !matches!(self, ModelKind::Autoencoder)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hidden layer widths of the encoder and decoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![256, 128],
            decoder_hidden: vec![128, 256],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub kl_weight_initial: f64,
    pub kl_anneal_factor: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Forward-VAE only: keep the inactive block and off-block entries of
    /// every action matrix fixed.
    pub freeze_blocks: bool,
    pub architecture: Architecture,
}

impl TrainingConfig {
    pub const AUTOENCODER_EPOCHS: usize = 11;
    pub const CCI_VAE_EPOCHS: usize = 11;
    pub const FORWARD_VAE_EPOCHS: usize = 35;

    pub fn for_kind(kind: ModelKind) -> Self {
        let epochs = match kind {
            ModelKind::Autoencoder => Self::AUTOENCODER_EPOCHS,
            ModelKind::CciVae => Self::CCI_VAE_EPOCHS,
            ModelKind::ForwardVae => Self::FORWARD_VAE_EPOCHS,
        };
        Self {
            epochs,
            ..Self::default()
        }
    }

    /// KL weight for the batch after `batches` updates.
    pub fn gamma(&self, batches: u64) -> f64 {
        self.kl_weight_initial * self.kl_anneal_factor.powi(batches as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.kl_weight_initial > 0.0 && self.kl_weight_initial.is_finite()) {
            return bad("initial KL weight must be positive");
        }
        if !(self.kl_anneal_factor > 0.0 && self.kl_anneal_factor <= 1.0) {
            return bad("KL anneal factor must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: Self::CCI_VAE_EPOCHS,
            batch_size: 128,
            kl_weight_initial: 1.0,
            kl_anneal_factor: 0.995,
            learning_rate: 1e-3,
            seed: 0,
            freeze_blocks: true,
            architecture: Architecture::default(),
        }
    }
}

/// Encoder, decoder and (for the Forward-VAE) the action matrices, with all
/// weights in one ordered parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    kind: ModelKind,
    spec: WorldSpec,
    z_dim: usize,
    freeze_blocks: bool,
    params: Vec<Parameter>,
    encoder: MlpLayout,
    decoder: MlpLayout,
    actions: Option<usize>,
}

const ACTIONS_PARAM: &str = "actions";

fn action_mask(freeze: bool) -> Vec<bool> {
    let mut mask = Vec::with_capacity(64);
    for a in MoveAction::ALL {
        let probe = ActionMatrix::identity(a.axis());
        for r in 0..4 {
            for c in 0..4 {
                mask.push(!freeze || probe.is_trainable(r, c));
            }
        }
    }
    mask
}

impl Model {
    pub fn new(
        kind: ModelKind,
        spec: WorldSpec,
        z_dim: usize,
        arch: &Architecture,
        freeze_blocks: bool,
        seed: u64,
    ) -> Result<Self> {
        if z_dim == 0 {
            return Err(ModelError::InvalidConfig(
                "latent dimension must be positive".into(),
            ));
        }
        if kind == ModelKind::ForwardVae && z_dim != 4 {
            return Err(ModelError::InvalidConfig(format!(
                "the Forward-VAE latent has 4 dimensions, not {z_dim}"
            )));
        }
        let mut src = NoiseSource::stream(seed, 0);
        let mut params = Vec::new();
        let enc_out = if kind.is_variational() {
            2 * z_dim
        } else {
            z_dim
        };
        let sizes = |first: usize, hidden: &[usize], last: usize| {
            let mut v = vec![first];
            v.extend_from_slice(hidden);
            v.push(last);
            v
        };
        let encoder = MlpLayout::init(
            "encoder",
            &sizes(spec.pixels(), &arch.encoder_hidden, enc_out),
            &mut params,
            &mut src,
        );
        let decoder = MlpLayout::init(
            "decoder",
            &sizes(z_dim, &arch.decoder_hidden, spec.pixels()),
            &mut params,
            &mut src,
        );
        // A deterministic decoder started far from the data saturates the
        // sigmoid at zero and never recovers, so the auto-encoder starts at
        // the mean image intensity instead.
        if kind == ModelKind::Autoencoder {
            let p = mean_intensity(&spec).clamp(1e-6, 1.0 - 1e-6);
            let logit = (p / (1.0 - p)).ln();
            let last = &mut params[decoder.offset + 2 * (decoder.layers() - 1) + 1];
            last.value.data_mut().iter_mut().for_each(|b| *b = logit);
        }
        let actions = (kind == ModelKind::ForwardVae).then(|| {
            let mut data = Vec::with_capacity(64);
            for a in MoveAction::ALL {
                let m = ActionMatrix::identity(a.axis());
                for (r, row) in IDENTITY4.iter().enumerate() {
                    for (c, &v) in row.iter().enumerate() {
                        let noise = if m.is_trainable(r, c) {
                            src.uniform(-0.01, 0.01)
                        } else {
                            0.0
                        };
                        data.push(v + noise);
                    }
                }
            }
            let t = Tensor::new(vec![4, 4, 4], data).expect("action tensor shape");
            params.push(Parameter::masked(
                ACTIONS_PARAM,
                t,
                action_mask(freeze_blocks),
            ));
            params.len() - 1
        });
        Ok(Self {
            kind,
            spec,
            z_dim,
            freeze_blocks,
            params,
            encoder,
            decoder,
            actions,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn freeze_blocks(&self) -> bool {
        self.freeze_blocks
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn encoder(&self) -> &MlpLayout {
        &self.encoder
    }

    pub fn decoder(&self) -> &MlpLayout {
        &self.decoder
    }

    pub(crate) fn actions_index(&self) -> Option<usize> {
        self.actions
    }

    /// The `[4, 4, 4]` action tensor, indexed by action code.
    pub fn action_tensor(&self) -> Option<&Tensor> {
        self.actions.map(|i| &self.params[i].value)
    }

    pub fn action_matrices(&self) -> Option<[Matrix4; 4]> {
        let t = self.action_tensor()?;
        let mut out = [[[0.0; 4]; 4]; 4];
        for (k, m) in out.iter_mut().enumerate() {
            for (r, row) in m.iter_mut().enumerate() {
                row.copy_from_slice(&t.data()[k * 16 + r * 4..k * 16 + r * 4 + 4]);
            }
        }
        Some(out)
    }

    /// The learned matrix for `a`, if its frozen structure is intact.
    pub fn action_matrix(&self, a: MoveAction) -> Option<ActionMatrix> {
        let m = self.action_matrices()?[a.code() as usize];
        ActionMatrix::from_entries(a.axis(), m).ok()
    }

    pub fn latent_action(&self) -> Option<MatrixAction> {
        self.action_matrices().map(MatrixAction::from_raw)
    }

    /// Overwrite the action matrices (frozen entries included).
    pub fn set_action_matrices(&mut self, mats: [Matrix4; 4]) -> Result<()> {
        let i = self.actions.ok_or_else(|| ModelError::WrongKind {
            expected: ModelKind::ForwardVae.to_string(),
            found: self.kind.to_string(),
        })?;
        let data = mats
            .iter()
            .flat_map(|m| m.iter().flatten().copied())
            .collect();
        self.params[i].value = Tensor::new(vec![4, 4, 4], data)?;
        Ok(())
    }

    /// Whether every frozen action entry still equals identity/zero exactly.
    pub fn frozen_entries_intact(&self) -> bool {
        let Some(mats) = self.action_matrices() else {
            return true;
        };
        MoveAction::ALL.iter().all(|&a| {
            let probe = ActionMatrix::identity(a.axis());
            let m = &mats[a.code() as usize];
            (0..16).all(|i| {
                let (r, c) = (i / 4, i % 4);
                probe.is_trainable(r, c) || m[r][c].to_bits() == IDENTITY4[r][c].to_bits()
            })
        })
    }

    fn observation_matrix(&self, obs: &[Observation]) -> Result<Tensor> {
        if let Some(o) = obs.iter().find(|o| o.size() != self.spec.image_size()) {
            return Err(ModelError::InvalidConfig(format!(
                "observation of size {} for a model on {}-pixel images",
                o.size(),
                self.spec.image_size()
            )));
        }
        let rows: Vec<&[f64]> = obs.iter().map(|o| o.pixels()).collect();
        Ok(Tensor::from_rows(&rows)?)
    }

    /// Latent means (the auto-encoder's code) for a batch of observations.
    pub fn encode_observations(&self, obs: &[Observation]) -> Result<Tensor> {
        let x = self.observation_matrix(obs)?;
        let h = self.encoder.infer(&self.params, &x)?;
        Ok(kernels::columns(&h, 0, self.z_dim)?)
    }

    /// Encoder means on the rendering of every state.
    pub fn encode_table(&self) -> Result<RepresentationTable> {
        let obs: Vec<Observation> = self.spec.states().map(|s| self.spec.render(s)).collect();
        let z = self.encode_observations(&obs)?;
        Ok(RepresentationTable::from_flat(
            self.spec.grid_size(),
            self.z_dim,
            z.into_data(),
        )?)
    }

    pub fn encode_state(&self, s: WorldState) -> Result<Vec<f64>> {
        Ok(self
            .encode_observations(&[self.spec.render(s)])?
            .into_data())
    }

    /// Decode latent rows `[k, z_dim]` into `k` observations.
    pub fn decode(&self, z: &Tensor) -> Result<Vec<Observation>> {
        let (_, d) = z.dims2("decode")?;
        if d != self.z_dim {
            return Err(ModelError::InvalidConfig(format!(
                "latents of width {d} for a {}-dimensional model",
                self.z_dim
            )));
        }
        let y = kernels::sigmoid(&self.decoder.infer(&self.params, z)?);
        let b = self.spec.image_size();
        Ok((0..z.shape()[0])
            .map(|i| Observation::new(b, y.row(i).to_vec()))
            .collect())
    }

    pub fn to_checkpoint(&self, history: &[LogRow]) -> Checkpoint {
        let mut c = Checkpoint::new();
        for p in &self.params {
            c.insert(p.name.clone(), p.value.clone());
        }
        c.set_scalar("meta.kind", self.kind.code() as f64);
        c.set_scalar("meta.z_dim", self.z_dim as f64);
        c.set_scalar("meta.grid_size", self.spec.grid_size() as f64);
        c.set_scalar("meta.image_size", self.spec.image_size() as f64);
        c.set_scalar("meta.agent_radius", self.spec.agent_radius() as f64);
        c.set_scalar("meta.freeze_blocks", self.freeze_blocks as u8 as f64);
        let sizes = |l: &MlpLayout| {
            let v: Vec<f64> = l.sizes.iter().map(|&s| s as f64).collect();
            Tensor::new(vec![v.len()], v).expect("sizes")
        };
        c.insert("meta.encoder_sizes", sizes(&self.encoder));
        c.insert("meta.decoder_sizes", sizes(&self.decoder));
        if !history.is_empty() {
            let data = history.iter().flat_map(LogRow::to_array).collect();
            let t = Tensor::matrix(history.len(), LogRow::WIDTH, data).expect("history shape");
            c.insert("meta.history", t);
        }
        c
    }

    /// Rebuild a model (and its loss history) from a checkpoint.
    pub fn from_checkpoint(c: &Checkpoint) -> Result<(Self, Vec<LogRow>)> {
        let malformed = |m: String| ModelError::Malformed(m);
        let int = |name: &str| -> Result<usize> {
            let v = c.get_scalar(name)?;
            if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                return Err(malformed(format!("{name} = {v}")));
            }
            Ok(v as usize)
        };
        let kind = ModelKind::from_code(int("meta.kind")? as u8)
            .ok_or_else(|| malformed("unknown model kind".into()))?;
        let spec = WorldSpec::new(
            int("meta.grid_size")?,
            int("meta.image_size")?,
            c.get_scalar("meta.agent_radius")? as f32,
        )
        .map_err(|e| malformed(e.to_string()))?;
        let z_dim = int("meta.z_dim")?;
        let freeze = int("meta.freeze_blocks")? != 0;
        let hidden = |name: &str| -> Result<Vec<usize>> {
            let t = c.get(name)?;
            if t.len() < 2 {
                return Err(malformed(format!("{name} lists fewer than two sizes")));
            }
            Ok(t.data()[1..t.len() - 1]
                .iter()
                .map(|&v| v as usize)
                .collect())
        };
        let arch = Architecture {
            encoder_hidden: hidden("meta.encoder_sizes")?,
            decoder_hidden: hidden("meta.decoder_sizes")?,
        };
        let mut model = Model::new(kind, spec, z_dim, &arch, freeze, 0)?;
        for p in &mut model.params {
            let shape = p.value.shape().to_vec();
            p.value = c.get_shaped(&p.name, &shape)?.clone();
        }
        let history = match c.get("meta.history") {
            Ok(t) => {
                let (_, w) = t.dims2("history")?;
                if w != LogRow::WIDTH {
                    return Err(malformed(format!("history rows of width {w}")));
                }
                t.data().chunks_exact(w).map(LogRow::from_slice).collect()
            }
            Err(CheckpointError::Missing(_)) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        Ok((model, history))
    }

    pub fn save(&self, history: &[LogRow], path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(self.to_checkpoint(history).save(path)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<(Self, Vec<LogRow>)> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// A copy with every weight rounded through `f32`, as a checkpoint
    /// round trip would leave it.
    pub fn rounded(&self) -> Self {
        let mut m = self.clone();
        for p in &mut m.params {
            for v in p.value.data_mut() {
                *v = *v as f32 as f64;
            }
        }
        m
    }
}

/// Average pixel intensity over every rendered state.
fn mean_intensity(spec: &WorldSpec) -> f64 {
    let total: f64 = spec.states().map(|s| spec.render(s).mass()).sum();
    total / (spec.num_states() * spec.pixels()) as f64
}

/// Encoder means for every state of `spec`, which must describe the world the
/// model was trained on.
pub fn encode_states(model: &Model, spec: &WorldSpec) -> Result<RepresentationTable> {
    if model.spec() != spec {
        return Err(ModelError::SpecMismatch {
            model: *model.spec(),
            given: *spec,
        });
    }
    model.encode_table()
}

/// Variance of each latent-mean coordinate over the states visited by the
/// dataset (each record's starting state).
pub fn latent_variances(model: &Model, data: &TransitionDataset) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let table = encode_states(model, &data.spec)?;
    let d = model.z_dim();
    let count = data.len() as f64;
    let mut mean = vec![0.0; d];
    for t in &data.records {
        for (m, v) in mean.iter_mut().zip(table.get(t.state)) {
            *m += v / count;
        }
    }
    let mut var = vec![0.0; d];
    for t in &data.records {
        for ((s, v), m) in var.iter_mut().zip(table.get(t.state)).zip(&mean) {
            *s += (v - m) * (v - m) / count;
        }
    }
    Ok(var)
}
