use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use reel_core::learn::{
    evaluate_rollout_mse, load_cds, preprocess as run_preprocess, raw_dataset, save_cds, select_learning_rate,
    train as run_train, CompressedDataset, PreprocessConfig, Sketching, ThetaInit, TrainConfig, LR_GRID, CDS_MAGIC,
};
use reel_core::model::{build_model, DecomposableModel, ModelKind, SimConfig};
use reel_core::sim::{self, DATASET_MAGIC};
use reel_core::sketch::ProjectionKind;
use reel_core::spectral::BetaRule;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError};
use crate::{plot, CompressArgs, TrainArgs};

fn parse_model(s: &str) -> Result<ModelKind, CliError> {
    s.parse()
        .map_err(|_| CliError::Usage(format!("unknown model '{s}' (expected heat, sintering, sintering-lite or nanovoid)")))
}

fn config_of(text: &str) -> Result<SimConfig, CliError> {
    Ok(SimConfig::from_toml_str(text)?)
}

pub fn preset(model: &str, size: usize) -> Result<(), CliError> {
    let cfg = SimConfig::preset(parse_model(model)?, size);
    cfg.validate()?;
    print!("{}", cfg.to_toml_string());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    config: Option<&Path>,
    model: Option<&str>,
    size: usize,
    steps: Option<usize>,
    seed: Option<u64>,
    dt: Option<f64>,
    out: &Path,
    png: Option<&Path>,
) -> Result<(), CliError> {
    let mut cfg = match (config, model) {
        (Some(p), _) => SimConfig::load(p)?,
        (None, Some(m)) => SimConfig::preset(parse_model(m)?, size),
        (None, None) => return Err(CliError::Usage("either --config or --model is required".into())),
    };
    if let Some(s) = steps {
        cfg.steps = s;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = dt {
        cfg.dt = d;
    }
    cfg.validate()?;
    let start = Instant::now();
    let traj = sim::simulate(&cfg)?;
    let elapsed = start.elapsed();
    sim::save(&traj, out)?;
    let bytes = std::fs::metadata(out).map_err(|e| io_err(out, e))?.len();
    println!(
        "{} {}x{}: {} steps in {:.2} s, wrote {} ({bytes} bytes)",
        cfg.model,
        cfg.nx,
        cfg.ny,
        cfg.steps,
        elapsed.as_secs_f64(),
        out.display()
    );
    if let Some(dir) = png {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let last = traj.states.last().expect("simulate returns at least one state");
        for (name, field) in last.names().iter().zip(last.fields()) {
            let p = dir.join(format!("{name}.png"));
            plot::field_png(field, &p)?;
        }
        println!("snapshots in {}", dir.display());
    }
    Ok(())
}

pub fn beta_rule(args: &CompressArgs) -> Result<BetaRule, CliError> {
    let rule = match (args.beta, args.keep_top, args.percentile) {
        (Some(b), _, _) => BetaRule::Fixed(b),
        (_, Some(q), _) => BetaRule::keep_top(q).map_err(|e| CliError::Usage(e.to_string()))?,
        (_, _, Some(p)) => BetaRule::Percentile(p),
        _ => BetaRule::Percentile(90.0),
    };
    rule.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(rule)
}

fn preprocess_config(args: &CompressArgs) -> Result<PreprocessConfig, CliError> {
    if !(args.ratio > 0.0 && args.ratio <= 1.0) {
        return Err(CliError::Usage(format!("--ratio must be in (0, 1], got {}", args.ratio)));
    }
    Ok(PreprocessConfig {
        beta: beta_rule(args)?,
        sketching: Sketching::Gaussian {
            ratio: args.ratio,
            seed: args.proj_seed,
        },
        lambda: args.lambda.unwrap_or(1.0),
    })
}

fn load_trajectory(path: &Path) -> Result<(sim::Trajectory, Box<dyn DecomposableModel>), CliError> {
    let traj = sim::load(path)?;
    let model = build_model(&traj.config()?)?;
    Ok((traj, model))
}

fn describe(cds: &CompressedDataset) -> String {
    let beta = match cds.beta {
        None => "none".to_string(),
        Some(BetaRule::Fixed(b)) => format!("fixed {b}"),
        Some(BetaRule::Percentile(p)) => format!("percentile {p}"),
    };
    format!(
        "{} steps, d={}, n_val={}, n_freq={}, ratio={}, beta {beta}, lambda={}, seeds {}/{}",
        cds.n_steps(),
        cds.val_spec.d,
        cds.val_spec.n,
        cds.freq_spec.n,
        cds.ratio,
        cds.lambda,
        cds.val_spec.seed,
        cds.freq_spec.seed
    )
}

pub fn preprocess(dataset: &Path, args: &CompressArgs, out: &Path) -> Result<(), CliError> {
    let cfg = preprocess_config(args)?;
    let (traj, model) = load_trajectory(dataset)?;
    let start = Instant::now();
    let cds = run_preprocess(&traj, model.as_ref(), &cfg)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    save_cds(&cds, out)?;
    println!("preprocessed in {ms:.1} ms: {}", describe(&cds));
    println!("wrote {}", out.display());
    Ok(())
}

fn magic(path: &Path) -> Result<[u8; 4], CliError> {
    let mut f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut b = [0u8; 4];
    f.read_exact(&mut b)
        .map_err(|_| CliError::data(format!("{}: file too short to be a dataset", path.display())))?;
    Ok(b)
}

#[derive(Serialize, Deserialize)]
pub struct ThetaFile {
    pub model: String,
    pub theta: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct ParamRow {
    name: String,
    learned: f64,
    truth: f64,
    initial: f64,
    rel_err: f64,
}

#[derive(Serialize)]
struct MseRow {
    field: String,
    mse: f64,
}

#[derive(Serialize)]
struct RunReport {
    dataset: String,
    mode: String,
    model: String,
    steps: usize,
    ratio: f64,
    n_val: usize,
    n_freq: usize,
    beta: String,
    lambda: f64,
    projection_seeds: [u64; 2],
    train_seed: u64,
    lr: f64,
    lr_search: Vec<(f64, f64)>,
    epochs: usize,
    batch: usize,
    preprocess_ms: Option<f64>,
    mean_epoch_ms: f64,
    final_loss: f64,
    params: Vec<ParamRow>,
    rollout_ic_seeds: Vec<u64>,
    rollout_steps: usize,
    rollout_diverged: Vec<u64>,
    rollout_mse: Vec<MseRow>,
    config: String,
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let kind = magic(&args.dataset)?;
    let mut preprocess_ms = None;
    let (cds, model) = if &kind == CDS_MAGIC {
        if args.baseline {
            return Err(CliError::Usage(
                "--baseline trains on a trajectory file, not a compressed dataset".into(),
            ));
        }
        let cds = load_cds(&args.dataset)?;
        let model = build_model(&config_of(&cds.config_text)?)?;
        (cds, model)
    } else if &kind == DATASET_MAGIC {
        let (traj, model) = load_trajectory(&args.dataset)?;
        let cds = if args.baseline {
            raw_dataset(&traj, model.as_ref())?
        } else {
            let cfg = preprocess_config(&args.compress)?;
            let start = Instant::now();
            let cds = run_preprocess(&traj, model.as_ref(), &cfg)?;
            preprocess_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            cds
        };
        (cds, model)
    } else {
        return Err(CliError::data(format!(
            "{}: not a trajectory or compressed dataset (magic {:?})",
            args.dataset.display(),
            String::from_utf8_lossy(&kind)
        )));
    };
    let lambda = args.compress.lambda.unwrap_or(cds.lambda);
    let base = TrainConfig {
        lr: args.lr.unwrap_or(0.0),
        epochs: args.epochs as usize,
        batch_size: args.batch as usize,
        lambda,
        init: ThetaInit::Random,
        seed: args.seed,
    };
    let mut lr_search = Vec::new();
    let lr = match args.lr {
        Some(lr) => lr,
        None => {
            let (lr, outcomes) = select_learning_rate(&cds, model.as_ref(), &base, &LR_GRID, args.probe_epochs)?;
            lr_search = outcomes
                .into_iter()
                .map(|(r, l)| (r, l.unwrap_or(f64::INFINITY)))
                .collect();
            lr
        }
    };
    let cfg = TrainConfig { lr, ..base };
    let res = run_train(&cds, model.as_ref(), &cfg)?;

    let names = model.param_names().to_vec();
    let mut rows = Vec::with_capacity(res.loss_history.len());
    for (e, ((loss, ms), th)) in res
        .loss_history
        .iter()
        .zip(&res.epoch_ms)
        .zip(&res.theta_history)
        .enumerate()
    {
        rows.push((e + 1, *loss, *ms, th.clone()));
    }
    let mut header = vec!["epoch".to_string(), "loss".into(), "wall_ms".into()];
    header.extend(names.iter().cloned());
    let write_csv = |w: &mut dyn Write| -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&header)?;
        for (e, loss, ms, th) in &rows {
            let mut rec = vec![e.to_string(), format!("{loss:e}"), format!("{ms:.4}")];
            rec.extend(th.iter().map(|v| format!("{v:e}")));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    };
    match &args.csv {
        Some(p) => {
            let mut f = std::fs::File::create(p).map_err(|e| io_err(p, e))?;
            write_csv(&mut f).map_err(|e| io_err(p, e))?;
        }
        None => write_csv(&mut std::io::stdout().lock()).map_err(CliError::data)?,
    }

    let truth = model.true_theta();
    let params: Vec<ParamRow> = names
        .iter()
        .enumerate()
        .map(|(j, n)| ParamRow {
            name: n.clone(),
            learned: res.theta[j],
            truth: truth[j],
            initial: res.theta_init[j],
            rel_err: ((res.theta[j] - truth[j]) / truth[j]).abs(),
        })
        .collect();

    let ic_seeds: Vec<u64> = (0..args.eval_ics as u64).map(|k| 1_000_000 + k).collect();
    let (mse, diverged) = if ic_seeds.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let rep = evaluate_rollout_mse(&res.theta, model.as_ref(), &ic_seeds, args.rollout_steps)?;
        (
            rep.fields
                .iter()
                .zip(&rep.mse)
                .map(|(f, m)| MseRow {
                    field: f.clone(),
                    mse: *m,
                })
                .collect(),
            rep.diverged,
        )
    };

    let mode = if args.baseline { "baseline" } else { "reel" };
    let mean_epoch_ms = res.epoch_ms.iter().sum::<f64>() / res.epoch_ms.len() as f64;
    let final_loss = *res.loss_history.last().expect("epochs >= 1");
    // human summary goes to stderr when the CSV occupies stdout
    let mut summary = String::new();
    summary += &format!("{mode} training on {}: {}\n", args.dataset.display(), describe(&cds));
    if let Some(ms) = preprocess_ms {
        summary += &format!("preprocessing {ms:.1} ms\n");
    }
    summary += &format!(
        "lr {lr:e}, {} epochs, mean epoch {mean_epoch_ms:.3} ms, final loss {final_loss:.4e}\n",
        args.epochs
    );
    for p in &params {
        summary += &format!(
            "  {:<10} {:>12.6} (true {:>10.6}, rel err {:.2e})\n",
            p.name, p.learned, p.truth, p.rel_err
        );
    }
    for m in &mse {
        summary += &format!("  rollout mse {:<6} {:.4e}\n", m.field, m.mse);
    }
    if !diverged.is_empty() {
        summary += &format!("  {} rollouts diverged (seeds {:?})\n", diverged.len(), diverged);
    }
    if args.csv.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }

    if let Some(p) = &args.theta_out {
        let tf = ThetaFile {
            model: model.kind().id().to_string(),
            theta: names.iter().cloned().zip(res.theta.iter().copied()).collect(),
        };
        write_file(p, &toml::to_string(&tf).map_err(CliError::data)?)?;
    }
    if let Some(p) = &args.report {
        let report = RunReport {
            dataset: args.dataset.display().to_string(),
            mode: mode.into(),
            model: model.kind().id().into(),
            steps: cds.n_steps(),
            ratio: cds.ratio,
            n_val: cds.val_spec.n,
            n_freq: cds.freq_spec.n,
            beta: match cds.beta {
                None => "none".into(),
                Some(BetaRule::Fixed(b)) => format!("fixed {b}"),
                Some(BetaRule::Percentile(q)) => format!("percentile {q}"),
            },
            lambda,
            projection_seeds: match cds.val_spec.kind {
                ProjectionKind::Gaussian => [cds.val_spec.seed, cds.freq_spec.seed],
                ProjectionKind::Identity => [0, 0],
            },
            train_seed: args.seed,
            lr,
            lr_search,
            epochs: args.epochs as usize,
            batch: args.batch as usize,
            preprocess_ms,
            mean_epoch_ms,
            final_loss,
            params,
            rollout_ic_seeds: ic_seeds,
            rollout_steps: args.rollout_steps,
            rollout_diverged: diverged,
            rollout_mse: mse,
            config: cds.config_text.clone(),
        };
        write_file(p, &toml::to_string(&report).map_err(CliError::data)?)?;
    }
    if let Some(p) = &args.png {
        plot::loss_png(&res.loss_history, p)?;
    }
    Ok(())
}

pub fn eval(
    theta: &Path,
    config: &Path,
    rollout_steps: usize,
    n_ics: usize,
    ic_seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(theta).map_err(|e| io_err(theta, e))?;
    let tf: ThetaFile = toml::from_str(&text).map_err(|e| io_err(theta, e))?;
    let cfg = SimConfig::load(config)?;
    let model = build_model(&cfg)?;
    if tf.model != model.kind().id() {
        return Err(CliError::data(format!(
            "{}: parameters are for model '{}', configuration is '{}'",
            theta.display(),
            tf.model,
            model.kind()
        )));
    }
    let th = model
        .param_names()
        .iter()
        .map(|n| {
            tf.theta
                .get(n)
                .copied()
                .ok_or_else(|| CliError::data(format!("{}: missing parameter '{n}'", theta.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(extra) = tf.theta.keys().find(|k| !model.param_names().contains(k)) {
        return Err(CliError::data(format!("{}: unknown parameter '{extra}'", theta.display())));
    }
    let seeds: Vec<u64> = (0..n_ics as u64).map(|k| ic_seed + k).collect();
    let rep = evaluate_rollout_mse(&th, model.as_ref(), &seeds, rollout_steps)?;
    let write = |w: &mut dyn Write| -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["field", "mse", "n_ics", "n_diverged"])?;
        for (f, m) in rep.fields.iter().zip(&rep.mse) {
            wr.write_record([
                f.clone(),
                format!("{m:e}"),
                rep.n_ics.to_string(),
                rep.diverged.len().to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    };
    match out {
        Some(p) => {
            let mut f = std::fs::File::create(p).map_err(|e| io_err(p, e))?;
            write(&mut f).map_err(|e| io_err(p, e))?;
        }
        None => write(&mut std::io::stdout().lock()).map_err(CliError::data)?,
    }
    if !rep.diverged.is_empty() {
        eprintln!(
            "{} of {} rollouts diverged and are excluded (seeds {:?})",
            rep.diverged.len(),
            rep.n_ics,
            rep.diverged
        );
        if rep.diverged.len() == rep.n_ics {
            return Err(CliError::Divergence("every rollout diverged".into()));
        }
    }
    Ok(())
}
