use super::{Model, ModelError, ModelKind, Result, TrainingConfig};
use crate::autodiff::{
    gradcheck, kernels, AdamConfig, AdamState, DiffError, GradCheckReport, NoiseSource, Tape,
    Tensor, Var,
};
use crate::world::TransitionDataset;
use serde::Serialize;
use std::io::Write;

/// One row of the training log, written after every batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRow {
    /// Batches completed before this one.
    pub step: u64,
    pub recon: f64,
    pub kl: f64,
    pub forward: f64,
    pub gamma: f64,
    pub total: f64,
}

impl LogRow {
    pub const WIDTH: usize = 6;

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.step as f64,
            self.recon,
            self.kl,
            self.forward,
            self.gamma,
            self.total,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            step: v[0] as u64,
            recon: v[1],
            kl: v[2],
            forward: v[3],
            gamma: v[4],
            total: v[5],
        }
    }
}

pub fn write_log_csv<W: Write>(rows: &[LogRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub model: Model,
    pub history: Vec<LogRow>,
}

impl TrainingRun {
    pub fn checkpoint(&self) -> crate::autodiff::Checkpoint {
        self.model.to_checkpoint(&self.history)
    }
}

/// One training batch. `obs_next` is present for the Forward-VAE.
#[derive(Debug, Clone)]
pub(crate) struct Batch {
    pub obs: Tensor,
    pub obs_next: Option<Tensor>,
    pub actions: Vec<usize>,
}

pub(crate) struct LossVars {
    pub recon: Var,
    pub kl: Option<Var>,
    pub forward: Option<Var>,
    pub total: Var,
}

/// `mse(A(a_t) z_t, z_{t+1})`.
pub fn forward_term(
    tape: &mut Tape,
    mats: Var,
    actions: &[usize],
    z: Var,
    z_next: Var,
) -> std::result::Result<Var, DiffError> {
    let pred = tape.select_matvec(mats, actions, z)?;
    tape.mse(pred, z_next)
}

/// Record the loss of `model` on `batch`. `vars` hold the model's
/// parameters in order; `noise` drives the reparameterisation.
pub(crate) fn record_loss(
    model: &Model,
    tape: &mut Tape,
    vars: &[Var],
    batch: &Batch,
    noise: Option<Tensor>,
    gamma: f64,
) -> std::result::Result<LossVars, DiffError> {
    let rows = batch.obs.shape()[0];
    let z_dim = model.z_dim();
    let target = tape.constant(batch.obs.clone());
    let input = match &batch.obs_next {
        Some(next) => tape.constant(kernels::vstack(&[&batch.obs, next])?),
        None => target,
    };
    let h = model.encoder().record(tape, vars, input)?;

    let (code, kl, mu_all) = if model.kind().is_variational() {
        let mu_all = tape.columns(h, 0, z_dim)?;
        let lv_all = tape.columns(h, z_dim, z_dim)?;
        let (mu, lv) = if batch.obs_next.is_some() {
            (tape.rows(mu_all, 0, rows)?, tape.rows(lv_all, 0, rows)?)
        } else {
            (mu_all, lv_all)
        };
        let noise = noise.unwrap_or_else(|| Tensor::zeros(&[rows, z_dim]));
        let z = tape.reparameterize(mu, lv, noise)?;
        let kl = tape.kl_to_standard_normal(mu, lv)?;
        (z, Some(kl), Some((mu, mu_all)))
    } else {
        (h, None, None)
    };

    let logits = model.decoder().record(tape, vars, code)?;
    let recon_img = tape.sigmoid(logits);
    // Squared error summed over pixels, averaged over the batch.
    let pixel_mean = tape.mse(recon_img, target)?;
    let recon = tape.scale(pixel_mean, model.spec().pixels() as f64)?;

    let forward = match (model.actions_index(), &mu_all) {
        (Some(ai), Some((mu, mu_all))) if batch.obs_next.is_some() => {
            let next = tape.rows(*mu_all, rows, rows)?;
            Some(forward_term(tape, vars[ai], &batch.actions, *mu, next)?)
        }
        _ => None,
    };

    let mut total = recon;
    if let Some(kl) = kl {
        let weighted = tape.scale(kl, gamma)?;
        total = tape.add(total, weighted)?;
    }
    if let Some(f) = forward {
        total = tape.add(total, f)?;
    }
    Ok(LossVars {
        recon,
        kl,
        forward,
        total,
    })
}

/// Finite-difference check of the full training loss of `model` on one batch
/// made of every record of `data`, with reparameterisation noise drawn from
/// `noise_seed` and KL weight `gamma`. Every parameter entry is perturbed, so
/// keep the model small.
pub fn loss_gradcheck(
    model: &Model,
    data: &TransitionDataset,
    gamma: f64,
    noise_seed: u64,
    h: f64,
) -> Result<GradCheckReport> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let spec = *model.spec();
    let rows = |next: bool| {
        let px: Vec<Vec<f64>> = data
            .records
            .iter()
            .map(|t| {
                spec.render(if next { t.next_state } else { t.state })
                    .into_pixels()
            })
            .collect();
        Tensor::from_rows(&px)
    };
    let batch = Batch {
        obs: rows(false)?,
        obs_next: (model.kind() == ModelKind::ForwardVae)
            .then(|| rows(true))
            .transpose()?,
        actions: data
            .records
            .iter()
            .map(|t| t.action.code() as usize)
            .collect(),
    };
    let n = data.len() * model.z_dim();
    let noise = model
        .kind()
        .is_variational()
        .then(|| {
            Tensor::matrix(
                data.len(),
                model.z_dim(),
                NoiseSource::new(noise_seed).normals(n),
            )
        })
        .transpose()?;
    let inputs: Vec<Tensor> = model.params().iter().map(|p| p.value.clone()).collect();
    Ok(gradcheck(&inputs, h, |tape: &mut Tape, vars: &[Var]| {
        Ok(record_loss(model, tape, vars, &batch, noise.clone(), gamma)?.total)
    })?)
}

/// Train `model` in place on `data`, calling `on_row` after every batch.
pub fn train<F: FnMut(&LogRow)>(
    model: &mut Model,
    data: &TransitionDataset,
    cfg: &TrainingConfig,
    mut on_row: F,
) -> Result<Vec<LogRow>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if data.spec != *model.spec() {
        return Err(ModelError::SpecMismatch {
            model: *model.spec(),
            given: data.spec,
        });
    }
    let forward = model.kind() == ModelKind::ForwardVae;
    if forward {
        if let Some(i) =
            (1..data.len()).find(|&i| data.records[i - 1].next_state != data.records[i].state)
        {
            return Err(ModelError::NotTrajectory(i));
        }
    }

    let spec = *model.spec();
    let n = spec.grid_size();
    let pixels = spec.pixels();
    let renders: Vec<Vec<f64>> = spec
        .states()
        .map(|s| spec.render(s).into_pixels())
        .collect();

    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
        model.params(),
    );
    let mut order_src = NoiseSource::stream(cfg.seed, 1);
    let mut noise_src = NoiseSource::stream(cfg.seed, 2);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs * data.len().div_ceil(cfg.batch_size));
    let mut step = 0u64;

    for epoch in 0..cfg.epochs {
        order_src.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let rows = chunk.len();
            let mut obs = Vec::with_capacity(rows * pixels);
            let mut obs_next = Vec::with_capacity(if forward { rows * pixels } else { 0 });
            let mut actions = Vec::with_capacity(rows);
            for &i in chunk {
                let t = &data.records[i];
                obs.extend_from_slice(&renders[t.state.index(n)]);
                if forward {
                    obs_next.extend_from_slice(&renders[t.next_state.index(n)]);
                }
                actions.push(t.action.code() as usize);
            }
            let batch = Batch {
                obs: Tensor::matrix(rows, pixels, obs)?,
                obs_next: forward.then(|| Tensor::matrix(rows, pixels, obs_next).expect("batch")),
                actions,
            };
            let noise = model
                .kind()
                .is_variational()
                .then(|| {
                    Tensor::matrix(rows, model.z_dim(), noise_src.normals(rows * model.z_dim()))
                })
                .transpose()?;
            let gamma = if model.kind().is_variational() {
                cfg.gamma(step)
            } else {
                0.0
            };

            let diverged = |source: DiffError| ModelError::Diverged {
                step,
                epoch,
                source,
            };
            let mut tape = Tape::new();
            let vars: Vec<Var> = model
                .params()
                .iter()
                .map(|p| tape.param(p.value.clone()))
                .collect();
            let loss =
                record_loss(model, &mut tape, &vars, &batch, noise, gamma).map_err(diverged)?;
            let value = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
            let row = LogRow {
                step,
                recon: tape.value(loss.recon).item(),
                kl: value(loss.kl),
                forward: value(loss.forward),
                gamma,
                total: tape.value(loss.total).item(),
            };
            let mut grads = tape.backward(loss.total).map_err(diverged)?;
            let grads: Vec<Tensor> = vars
                .iter()
                .zip(model.params())
                .map(|(v, p)| {
                    grads
                        .take(*v)
                        .unwrap_or_else(|| Tensor::zeros(p.value.shape()))
                })
                .collect();
            adam.step(model.params_mut(), &grads).map_err(diverged)?;

            on_row(&row);
            history.push(row);
            step += 1;
        }
        if let Some(last) = history.last() {
            log::info!(
                "{} epoch {}/{}: recon {:.5} kl {:.4} forward {:.5} gamma {:.3e}",
                model.kind(),
                epoch + 1,
                cfg.epochs,
                last.recon,
                last.kl,
                last.forward,
                last.gamma
            );
        }
    }
    Ok(history)
}

fn run(
    kind: ModelKind,
    z_dim: usize,
    data: &TransitionDataset,
    cfg: &TrainingConfig,
) -> Result<TrainingRun> {
    cfg.validate()?;
    let mut model = Model::new(
        kind,
        data.spec,
        z_dim,
        &cfg.architecture,
        cfg.freeze_blocks,
        cfg.seed,
    )?;
    let history = train(&mut model, data, cfg, |_| {})?;
    Ok(TrainingRun { model, history })
}

/// Reconstruction-only baseline with a 2-dimensional code.
pub fn train_autoencoder(data: &TransitionDataset, cfg: &TrainingConfig) -> Result<TrainingRun> {
    run(ModelKind::Autoencoder, 2, data, cfg)
}

pub fn train_cci_vae(
    data: &TransitionDataset,
    cfg: &TrainingConfig,
    z_dim: usize,
) -> Result<TrainingRun> {
    run(ModelKind::CciVae, z_dim, data, cfg)
}

pub fn train_forward_vae(data: &TransitionDataset, cfg: &TrainingConfig) -> Result<TrainingRun> {
    run(ModelKind::ForwardVae, 4, data, cfg)
}
