use crate::args::*;
use crate::echo::{self, UsageError};
use anyhow::{bail, Context, Result};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use symlab::action::{train_action_mlp, wrap_report, ActionConfig, ActionMlp};
use symlab::analytic::{ideal_matrix, ActionMatrix, AnalyticLsb, MatrixAction};
use symlab::autodiff::Checkpoint;
use symlab::evaluation::{
    analyze_matrices, determinant_drift, inverse_model_benchmark, traversal_grid,
    write_benchmark_csv, write_drift_csv, write_matrix_report_csv, write_pgm_grid, BenchmarkConfig,
    Representation,
};
use symlab::group::{
    count_permuted_worlds, disentanglement_check, enumerate_permuted_worlds, equivariance_residual,
    linear_collapse_probe, same_training_set, LatentAction, RepresentationTable, WorldAction,
};
use symlab::models::{
    encode_states, latent_variances, train, write_log_csv, Model, ModelKind, TrainingConfig,
};
use symlab::world::{
    load_dataset, random_walk, save_dataset, MoveAction, TransitionDataset, WorldSpec,
};

/// Run one command. `Ok(false)` means it ran but a check it performs failed.
pub fn run(command: &Command, echo_path: Option<&Path>) -> Result<bool> {
    if let Command::Replay { path } = command {
        let replayed = echo::read(path)?;
        log::info!("replaying {}", path.display());
        return run(&replayed, echo_path);
    }
    let ok = match command {
        Command::Gen(a) => gen(a),
        Command::Train(t) => train_model(t),
        Command::LearnAction(a) => learn_action(a),
        Command::Verify(VerifyCommand::Sb(a)) => verify_sb(a),
        Command::Verify(VerifyCommand::Theorems(a)) => verify_theorems(a),
        Command::Eval(EvalCommand::Inverse(a)) => eval_inverse(a),
        Command::Eval(EvalCommand::Matrices(a)) => eval_matrices(a),
        Command::Eval(EvalCommand::Drift(a)) => eval_drift(a),
        Command::Eval(EvalCommand::Traverse(a)) => eval_traverse(a),
        Command::ReproduceAll(a) => reproduce_all(a),
        Command::Replay { .. } => unreachable!(),
    }?;
    echo::write(command, echo_path)?;
    Ok(ok)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_data(path: &Path) -> Result<TransitionDataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_model(path: &Path) -> Result<Model> {
    let (model, _) =
        Model::load(path).with_context(|| format!("loading model {}", path.display()))?;
    Ok(model)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn gen(a: &GenArgs) -> Result<bool> {
    let spec = WorldSpec::new(
        a.world.n as usize,
        a.world.image_size as usize,
        a.world.radius,
    )
    .map_err(|e| UsageError(e.to_string()))?;
    let data = random_walk(&spec, a.steps as usize, a.seed)?;
    save_dataset(&data, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let mut counts = [0usize; 4];
    for t in &data.records {
        counts[t.action.code() as usize] += 1;
    }
    println!(
        "wrote {} transitions on a {n}x{n} grid ({b}x{b} px) to {}",
        data.len(),
        a.out.display(),
        n = spec.grid_size(),
        b = spec.image_size()
    );
    println!(
        "actions: left {} right {} up {} down {}",
        counts[0], counts[1], counts[2], counts[3]
    );
    Ok(true)
}

fn train_model(t: &TrainCommand) -> Result<bool> {
    let (choice, a) = t.parts();
    let kind = match choice {
        ModelChoice::ForwardVae => ModelKind::ForwardVae,
        ModelChoice::CciVae => ModelKind::CciVae,
        ModelChoice::Ae => ModelKind::Autoencoder,
    };
    let protocol_z = match kind {
        ModelKind::ForwardVae => 4,
        ModelKind::CciVae => 4,
        ModelKind::Autoencoder => 2,
    };
    let z_dim = a.z_dim.unwrap_or(protocol_z);
    if kind == ModelKind::ForwardVae && z_dim != 4 {
        return Err(UsageError("forward-vae needs --z-dim 4 (two 2-d blocks)".into()).into());
    }
    if z_dim == 0 {
        return Err(UsageError("--z-dim must be positive".into()).into());
    }
    let off_protocol = match kind {
        ModelKind::CciVae => !matches!(z_dim, 2 | 4),
        _ => z_dim != protocol_z,
    };
    if off_protocol {
        println!("note: z-dim {z_dim} is off-protocol for {kind}; treat results as exploration");
    }
    let mut cfg = TrainingConfig::for_kind(kind);
    if let Some(e) = a.epochs {
        if e == 0 {
            return Err(UsageError("--epochs must be positive".into()).into());
        }
        cfg.epochs = e;
    }
    cfg.seed = a.seed;
    cfg.freeze_blocks = !a.unfreeze_blocks;

    let data = load_data(&a.data)?;
    let mut model = Model::new(
        kind,
        data.spec,
        z_dim,
        &cfg.architecture,
        cfg.freeze_blocks,
        cfg.seed,
    )?;
    let history = train(&mut model, &data, &cfg, |_| {})
        .with_context(|| format!("training {kind} aborted"))?;
    model
        .save(&history, &a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    let log_path = a
        .log
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".log.csv"));
    write_log_csv(&history, create(&log_path)?)?;

    let last = history.last().expect("at least one batch");
    println!(
        "{kind}: {} epochs, {} batches; final recon {:.4} kl {:.4} forward {:.6}",
        cfg.epochs,
        history.len(),
        last.recon,
        last.kl,
        last.forward
    );
    let var = latent_variances(&model, &data)?;
    println!("latent variances: {}", fmt_list(&var));
    if kind == ModelKind::ForwardVae {
        print_matrix_report(&model)?;
    }
    println!("checkpoint {}; log {}", a.out.display(), log_path.display());
    Ok(true)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn print_matrix_report(model: &Model) -> Result<()> {
    let report = analyze_matrices(model, model.spec().grid_size())?;
    for r in &report.actions {
        println!(
            "{:>5}: angle {:+.4} ideal {:+.4} error {:.4} mse {:.2e} block mse {:.2e} det {:.5}",
            r.action.name(),
            r.angle,
            r.ideal_angle,
            r.angle_error,
            r.mse,
            r.block_mse,
            r.determinant
        );
    }
    println!(
        "max angle error {:.4}, max mse {:.2e}, frozen entries intact: {}",
        report.max_angle_error(),
        report.max_mse(),
        model.frozen_entries_intact()
    );
    Ok(())
}

fn learn_action(a: &LearnActionArgs) -> Result<bool> {
    let model = load_model(&a.repr)?;
    let data = load_data(&a.data)?;
    let table = encode_states(&model, &data.spec)?;
    let cfg = ActionConfig {
        epochs: a.epochs,
        seed: a.seed,
        ..ActionConfig::default()
    };
    let baseline = ActionMlp::new(table.dim(), &cfg.hidden, cfg.seed).evaluate(&table, &data)?;
    let run = train_action_mlp(&table, &data, &cfg)?;
    let trained = run.mlp.evaluate(&table, &data)?;
    let wraps = wrap_report(&table, &run.mlp.as_latent_action());
    run.mlp
        .to_checkpoint(&run.history)
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "prediction mse: trained {trained:.6}, untrained {baseline:.6} ({:.2}%)",
        100.0 * trained / baseline
    );
    println!(
        "wrap-around moves: {}/{} on the correct side, {}/{} nearest the wrapped state",
        wraps.correct_side, wraps.cases, wraps.nearest_state, wraps.cases
    );
    println!("checkpoint {}", a.out.display());
    Ok(true)
}

/// Even dims split in halves (x then y); an odd leftover gets its own subspace.
fn default_split(dim: usize) -> Vec<Vec<usize>> {
    let h = dim / 2;
    let mut split = vec![(0..h).collect::<Vec<_>>(), (h..2 * h).collect()];
    if dim % 2 == 1 {
        split.push(vec![dim - 1]);
    }
    split.retain(|p| !p.is_empty());
    split
}

enum Latent {
    Matrices(Box<MatrixAction>),
    Mlp(ActionMlp),
}

fn verify_sb(a: &VerifySbArgs) -> Result<bool> {
    let (table, n) = if a.repr == "analytic" {
        if a.n < 2 {
            return Err(UsageError("--n must be at least 2".into()).into());
        }
        (AnalyticLsb::new(a.n).table(), a.n)
    } else {
        let model = load_model(Path::new(&a.repr))?;
        (model.encode_table()?, model.spec().grid_size())
    };
    let latent = match &a.action {
        Some(p) => Latent::Mlp(load_action(p)?),
        None if a.repr == "analytic" => Latent::Matrices(Box::new(AnalyticLsb::new(n).action())),
        None => {
            let model = load_model(Path::new(&a.repr))?;
            let m = model.latent_action().ok_or_else(|| {
                UsageError(format!(
                    "{} has no action matrices; pass --action",
                    model.kind()
                ))
            })?;
            Latent::Matrices(Box::new(m))
        }
    };
    let residual = match &latent {
        Latent::Matrices(m) => report_sb(&table, n, m.as_ref())?,
        Latent::Mlp(m) => report_sb(&table, n, &m.as_latent_action())?,
    };
    Ok(a.tol.is_none_or(|t| residual <= t))
}

fn report_sb<L: LatentAction>(table: &RepresentationTable, n: usize, latent: &L) -> Result<f64> {
    if latent.dim() != table.dim() {
        bail!(
            "latent action acts on {} dims but the representation has {}",
            latent.dim(),
            table.dim()
        );
    }
    let eq = equivariance_residual(table, &WorldAction::canonical(n), latent)?;
    let split = default_split(table.dim());
    let dis = disentanglement_check(table, latent, &split)?;
    let (s, act) = eq.witness;
    println!(
        "equivariance residual {:.3e} (worst at state ({}, {}), action {})",
        eq.residual,
        s.x,
        s.y,
        act.name()
    );
    for (part, v) in split.iter().zip(&dis) {
        println!("subspace {part:?}: foreign-generator change {v:.3e}");
    }
    Ok(eq.residual)
}

fn load_action(path: &Path) -> Result<ActionMlp> {
    let c = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let (mlp, _) = ActionMlp::from_checkpoint(&c)
        .with_context(|| format!("{} is not an action checkpoint", path.display()))?;
    Ok(mlp)
}

fn verify_theorems(a: &TheoremArgs) -> Result<bool> {
    let n = a.n as usize;
    let mut ok = true;
    let k = count_permuted_worlds(n, 2)?;
    println!("k_{{W,G}}={k} (2 * {n}! - 1)");

    let spec = WorldSpec::new(n, a.image_size, a.image_size as f32 / (3.0 * n as f32))
        .map_err(|e| UsageError(e.to_string()))?;
    let canonical = WorldAction::canonical(n);
    let lsb = AnalyticLsb::new(n);
    let (table, action) = (lsb.table(), lsb.action());
    let base = equivariance_residual(&table, &canonical, &action)?;
    println!("canonical world: analytic residual {:.3e}", base.residual);
    ok &= base.residual <= 1e-9;

    let worlds = enumerate_permuted_worlds(n, a.worlds);
    if worlds.len() < a.worlds {
        println!("only {} permuted worlds exist for N = {n}", worlds.len());
        ok = false;
    }
    for (i, w) in worlds.iter().enumerate() {
        let same = same_training_set(&spec, &canonical, w);
        let r = equivariance_residual(&table, w, &action)?;
        let (s, act) = r.witness;
        println!(
            "world {i}: x-order {:?} y-order {:?}; same observations {same}; residual {:.4} at ({}, {}) {}",
            w.pi_x(),
            w.pi_y(),
            r.residual,
            s.x,
            s.y,
            act.name()
        );
        ok &= same && r.residual > 0.5;
    }

    let probe = linear_collapse_probe(a.probe_n, a.probe_maps);
    println!(
        "linear probe (N = {}, {} maps, {} grid points): best nonconstant residual {:.4} at a = {:.2}, b = {:.2}",
        probe.grid_size,
        probe.maps,
        probe.grid_points,
        probe.best_nonconstant_residual,
        probe.best_action.0,
        probe.best_action.1
    );
    println!(
        "identity escape {:.2e}, constant escape {:.2e}, identity forced (bound {}): {}",
        probe.identity_escape_residual,
        probe.constant_escape_residual,
        probe.bound,
        probe.identity_forced
    );
    if let Some((ga, gb)) = probe.iterated_condition_gap {
        println!(
            "iterated condition holds without one-step equivariance at a = {ga:.2}, b = {gb:.2}"
        );
    }
    ok &= probe.identity_forced;
    println!(
        "{}",
        if ok {
            "all demonstrations hold"
        } else {
            "a demonstration failed"
        }
    );
    Ok(ok)
}

fn parse_depths(s: &str) -> Result<Vec<usize>> {
    let bad = || UsageError(format!("bad --depths '{s}': use LO:HI or a comma list"));
    let depths: Vec<usize> = if let Some((lo, hi)) = s.split_once(':') {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad().into());
        }
        (lo..=hi).collect()
    } else {
        s.split(',')
            .map(|d| d.trim().parse().map_err(|_| bad()))
            .collect::<std::result::Result<_, _>>()?
    };
    if depths.is_empty() {
        return Err(bad().into());
    }
    Ok(depths)
}

fn load_representation(spec_str: &str, data: &TransitionDataset) -> Result<Representation> {
    let (name, path) = spec_str
        .split_once('=')
        .ok_or_else(|| UsageError(format!("--repr '{spec_str}' is not NAME=PATH")))?;
    let table = if path == "analytic" {
        AnalyticLsb::new(data.spec.grid_size()).table()
    } else {
        encode_states(&load_model(Path::new(path))?, &data.spec)
            .with_context(|| format!("encoding with {path}"))?
    };
    Ok(Representation::new(name, table))
}

fn eval_inverse(a: &InverseArgs) -> Result<bool> {
    let depths = parse_depths(&a.depths)?;
    if a.folds < 2 || a.trees == 0 {
        return Err(UsageError("need --folds >= 2 and --trees >= 1".into()).into());
    }
    let data = load_data(&a.data)?;
    let reps = a
        .reprs
        .iter()
        .map(|r| load_representation(r, &data))
        .collect::<Result<Vec<_>>>()?;
    let cfg = BenchmarkConfig {
        sizes: a.sizes.clone(),
        depths,
        folds: a.folds,
        trees: a.trees,
        seed: a.seed,
        shuffle_labels: a.shuffle_labels,
    };
    let rows = inverse_model_benchmark(&reps, &data, &cfg)?;
    write_benchmark_csv(&rows, create(&a.out)?)?;
    let deepest = *cfg.depths.iter().max().expect("nonempty");
    for r in rows.iter().filter(|r| r.max_depth == deepest) {
        println!(
            "{:<12} n={:<6} depth {:>2}: accuracy {:.4} +- {:.4}",
            r.representation, r.size, r.max_depth, r.mean_accuracy, r.std_accuracy
        );
    }
    println!("{} rows written to {}", rows.len(), a.out.display());
    Ok(true)
}

fn eval_matrices(a: &MatricesArgs) -> Result<bool> {
    let model = load_model(&a.model)?;
    print_matrix_report(&model)?;
    if let Some(out) = &a.out {
        let report = analyze_matrices(&model, model.spec().grid_size())?;
        write_matrix_report_csv(&report, create(out)?)?;
    }
    Ok(true)
}

fn eval_drift(a: &DriftArgs) -> Result<bool> {
    let model = load_model(&a.model)?;
    let action = match a.action {
        ActionChoice::Left => MoveAction::Left,
        ActionChoice::Right => MoveAction::Right,
        ActionChoice::Up => MoveAction::Up,
        ActionChoice::Down => MoveAction::Down,
    };
    let learned: ActionMatrix = model
        .action_matrix(action)
        .ok_or_else(|| UsageError(format!("{} has no action matrices", model.kind())))?;
    let ideal = ideal_matrix(action, model.spec().grid_size());
    let lc = determinant_drift(&learned, a.max_k)?;
    let ic = determinant_drift(&ideal, a.max_k)?;
    write_drift_csv(&[("learned", &lc), ("ideal", &ic)], create(&a.out)?)?;
    let last = lc.samples.last().expect("max_k >= 1");
    println!(
        "{}: det {:.6}; det after {} steps {:.4e} (ideal 1)",
        action.name(),
        lc.determinant,
        last.0,
        last.1
    );
    Ok(true)
}

fn eval_traverse(a: &TraverseArgs) -> Result<bool> {
    let model = load_model(&a.model)?;
    let grid = traversal_grid(&model, a.steps as usize)?;
    write_pgm_grid(&grid, create(&a.out)?)?;
    println!(
        "{} traversals of {} frames written to {}",
        grid.len(),
        a.steps,
        a.out.display()
    );
    Ok(true)
}

fn reproduce_all(a: &ReproduceArgs) -> Result<bool> {
    if a.epoch_divisor == 0 {
        return Err(UsageError("--epoch-divisor must be positive".into()).into());
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let p = |name: &str| a.out.join(name);
    let epochs = |full: usize| Some((full / a.epoch_divisor).max(1));
    let mut ok = true;
    let mut step = |name: &str, c: Command| -> Result<()> {
        println!("== {name}");
        ok &= run(&c, Some(&p(&format!("{name}.run.json"))))?;
        Ok(())
    };

    let data = p("data.sbdt");
    step(
        "gen",
        Command::Gen(GenArgs {
            world: WorldArgs {
                n: 10,
                image_size: 32,
                radius: 4.0,
            },
            steps: 15_000,
            seed: a.data_seed,
            out: data.clone(),
        }),
    )?;
    let models = [
        (
            "forward-vae",
            ModelChoice::ForwardVae,
            None,
            TrainingConfig::FORWARD_VAE_EPOCHS,
        ),
        (
            "cci-vae4",
            ModelChoice::CciVae,
            Some(4),
            TrainingConfig::CCI_VAE_EPOCHS,
        ),
        (
            "cci-vae2",
            ModelChoice::CciVae,
            Some(2),
            TrainingConfig::CCI_VAE_EPOCHS,
        ),
        (
            "ae",
            ModelChoice::Ae,
            None,
            TrainingConfig::AUTOENCODER_EPOCHS,
        ),
    ];
    for (name, choice, z_dim, full) in models {
        let args = TrainArgs {
            data: data.clone(),
            epochs: epochs(full),
            z_dim,
            seed: a.seed,
            unfreeze_blocks: false,
            out: p(&format!("{name}.sbmc")),
            log: None,
        };
        let t = match choice {
            ModelChoice::ForwardVae => TrainCommand::ForwardVae(args),
            ModelChoice::CciVae => TrainCommand::CciVae(args),
            ModelChoice::Ae => TrainCommand::Ae(args),
        };
        step(&format!("train-{name}"), Command::Train(t))?;
    }
    step(
        "learn-action",
        Command::LearnAction(LearnActionArgs {
            repr: p("cci-vae2.sbmc"),
            data: data.clone(),
            epochs: epochs(ActionConfig::default().epochs).unwrap(),
            seed: a.seed,
            out: p("action-cci-vae2.sbmc"),
        }),
    )?;
    let sb = |repr: String, action: Option<PathBuf>| {
        Command::Verify(VerifyCommand::Sb(VerifySbArgs {
            repr,
            action,
            n: 10,
            tol: None,
        }))
    };
    step("verify-analytic", sb("analytic".into(), None))?;
    step(
        "verify-forward-vae",
        sb(p("forward-vae.sbmc").display().to_string(), None),
    )?;
    step(
        "verify-cci-vae2",
        sb(
            p("cci-vae2.sbmc").display().to_string(),
            Some(p("action-cci-vae2.sbmc")),
        ),
    )?;
    step(
        "verify-theorems",
        Command::Verify(VerifyCommand::Theorems(TheoremArgs {
            n: 3,
            worlds: 3,
            image_size: 16,
            probe_n: 4,
            probe_maps: 64,
        })),
    )?;
    step(
        "eval-matrices",
        Command::Eval(EvalCommand::Matrices(MatricesArgs {
            model: p("forward-vae.sbmc"),
            out: Some(p("matrices.csv")),
        })),
    )?;
    step(
        "eval-drift",
        Command::Eval(EvalCommand::Drift(DriftArgs {
            model: p("forward-vae.sbmc"),
            max_k: 1000,
            action: ActionChoice::Right,
            out: p("drift.csv"),
        })),
    )?;
    for name in ["forward-vae", "cci-vae4", "ae"] {
        step(
            &format!("traverse-{name}"),
            Command::Eval(EvalCommand::Traverse(TraverseArgs {
                model: p(&format!("{name}.sbmc")),
                steps: 9,
                out: p(&format!("traverse-{name}.pgm")),
            })),
        )?;
    }
    let reprs = vec![
        "analytic=analytic".to_string(),
        format!("forward-vae={}", p("forward-vae.sbmc").display()),
        format!("cci-vae2={}", p("cci-vae2.sbmc").display()),
        format!("ae={}", p("ae.sbmc").display()),
    ];
    for (name, shuffle) in [("inverse", false), ("inverse-shuffled", true)] {
        step(
            &format!("eval-{name}"),
            Command::Eval(EvalCommand::Inverse(InverseArgs {
                data: data.clone(),
                reprs: reprs.clone(),
                sizes: a.sizes.clone(),
                depths: "1:10".into(),
                folds: 10,
                trees: a.trees,
                seed: a.seed,
                shuffle_labels: shuffle,
                out: p(&format!("{name}.csv")),
            })),
        )?;
    }
    println!("artifacts in {}", a.out.display());
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_specs() {
        assert_eq!(parse_depths("1:10").unwrap(), (1..=10).collect::<Vec<_>>());
        assert_eq!(parse_depths("3").unwrap(), vec![3]);
        assert_eq!(parse_depths("2, 4,8").unwrap(), vec![2, 4, 8]);
        for bad in ["", "5:2", "a:3", "1,,2"] {
            let e = parse_depths(bad).unwrap_err();
            assert!(e.downcast_ref::<UsageError>().is_some(), "{bad}");
        }
    }

    #[test]
    fn splits() {
        assert_eq!(default_split(4), vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(default_split(2), vec![vec![0], vec![1]]);
        assert_eq!(default_split(3), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(default_split(1), vec![vec![0]]);
    }

    #[test]
    fn suffixes_append() {
        assert_eq!(
            with_suffix(Path::new("a/m.sbmc"), ".log.csv"),
            PathBuf::from("a/m.sbmc.log.csv")
        );
    }
}
