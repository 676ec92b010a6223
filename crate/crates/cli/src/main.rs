//! Command-line pipeline: synthesize populations, train, predict, evaluate,
//! and plot loss curves.

mod config;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;
use connectogen::checkpoint::{config_digest, Checkpoint, Manifest};
use connectogen::eval::{evaluate_predictions, ReportMetadata};
use connectogen::population::{
    infer_dimensions, load_population, load_source_features, split_train_test,
    synthesize_population, write_labels_csv, write_population_csv, write_predictions_csv,
};
use connectogen::training::{predict_with, read_loss_log, train_with_observer, write_loss_log};

#[derive(Parser)]
#[command(
    name = "connectogen",
    about = "Joint prediction of multiple target brain graphs from a single source graph",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-view population CSV plus mode labels.
    Synth {
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Number of subjects.
        #[arg(long)]
        n: usize,
        /// Regions per graph.
        #[arg(long, default_value_t = 35)]
        r: usize,
        /// Number of target domains.
        #[arg(long)]
        m: usize,
        /// Gaussian mixture modes in the source distribution.
        #[arg(long, default_value_t = 2)]
        modes: usize,
        /// Gaussian noise scale added to target features.
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train on a population directory, writing checkpoints and a loss log.
    Train {
        /// Directory holding population.csv.
        #[arg(long)]
        data: PathBuf,
        /// key = value run configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Fraction of subjects used for training; the rest is held out.
        #[arg(long, default_value_t = 0.9)]
        train_fraction: f64,
        /// Also dump the learned similarity matrices and cluster labels as CSV.
        #[arg(long, default_value_t = false)]
        dump_similarity: bool,
    },
    /// Predict target graphs for the source rows of a CSV.
    Predict {
        /// Checkpoint file.
        #[arg(long)]
        model: PathBuf,
        /// Population-format CSV; only its S rows are read.
        #[arg(long)]
        source: PathBuf,
        /// Output CSV of predicted target rows.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the held-out split of a population.
    Evaluate {
        /// Checkpoint file.
        #[arg(long)]
        model: PathBuf,
        /// Directory holding population.csv (the same data train saw).
        #[arg(long)]
        data: PathBuf,
        /// Output directory for report.txt and report.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot every loss-log column as an SVG curve.
    Report {
        /// Loss log CSV written by train.
        #[arg(long)]
        losslog: PathBuf,
        /// Output directory for the SVG files.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

/// Validation problems exit 1; numeric breakdowns exit 2.
fn classify(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<connectogen::Error>() {
        Some(core) if core.is_numerical() => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            n,
            r,
            m,
            modes,
            noise,
            seed,
        } => cmd_synth(&out, n, r, m, modes, noise, seed),
        Command::Train {
            data,
            config,
            out,
            train_fraction,
            dump_similarity,
        } => cmd_train(&data, config.as_deref(), &out, train_fraction, dump_similarity),
        Command::Predict { model, source, out } => cmd_predict(&model, &source, &out),
        Command::Evaluate { model, data, out } => cmd_evaluate(&model, &data, &out),
        Command::Report { losslog, out } => cmd_report(&losslog, &out),
    }
}

fn cmd_synth(
    out: &Path,
    n: usize,
    r: usize,
    m: usize,
    modes: usize,
    noise: f64,
    seed: u64,
) -> Result<()> {
    println!("resolved config:");
    println!("  n = {n}\n  r = {r}\n  m = {m}\n  modes = {modes}\n  noise = {noise}\n  seed = {seed}");
    std::fs::create_dir_all(out)?;
    let synthetic = synthesize_population(seed, n, r, m, modes, noise)?;
    write_population_csv(&synthetic.population, &out.join("population.csv"))?;
    write_labels_csv(
        &synthetic.population,
        &synthetic.mode_labels,
        &out.join("labels.csv"),
    )?;
    println!(
        "wrote {} subjects x ({} + 1) domains to {}",
        n,
        m,
        out.join("population.csv").display()
    );
    Ok(())
}

fn cmd_train(
    data: &Path,
    config_path: Option<&Path>,
    out: &Path,
    train_fraction: f64,
    dump_similarity: bool,
) -> Result<()> {
    let run_config = match config_path {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let rendered = run_config.render();
    let digest = config_digest(&rendered);
    println!("resolved config (digest {digest}):");
    print!("{rendered}");
    println!("train_fraction = {train_fraction}");

    let csv_path = data.join("population.csv");
    let (r, m) = infer_dimensions(&csv_path)?;
    let population = load_population(&csv_path, r, m)?;
    println!(
        "loaded {} subjects, r = {r}, m = {m}",
        population.n_subjects()
    );
    let (train_pop, test_pop) = split_train_test(&population, train_fraction, run_config.training.seed)?;
    println!(
        "split: {} train / {} test subjects",
        train_pop.n_subjects(),
        test_pop.n_subjects()
    );

    std::fs::create_dir_all(out)?;
    let manifest_for = |iteration: u64| Manifest {
        r,
        f: population.feature_len(),
        m,
        c: run_config.training.c,
        seed: run_config.training.seed,
        iteration,
        metric: run_config.training.centrality_metric.to_string(),
        train_fraction,
        config_digest: digest.clone(),
        layers: Vec::new(),
    };
    let interval = run_config.training.checkpoint_interval;
    let state = train_with_observer(
        &train_pop,
        &run_config.training,
        &run_config.weights,
        |state| {
            if interval > 0 && state.iteration % interval == 0 {
                let path = out.join(format!("model_iter{:06}.ckpt", state.iteration));
                Checkpoint::from_store(manifest_for(state.iteration), &state.store).save(&path)?;
                log::info!("checkpoint written to {}", path.display());
            }
            Ok(())
        },
    )?;

    write_loss_log(&state.loss_log, &out.join("loss_log.csv"))?;
    Checkpoint::from_store(manifest_for(state.iteration), &state.store)
        .save(&out.join("model.ckpt"))?;
    if dump_similarity {
        let subjects = train_pop.subjects();
        write_similarity_csv(subjects, state.source_similarity.matrix(), &out.join("similarity_S.csv"))?;
        for (i, sim) in state.target_similarities.iter().enumerate() {
            write_similarity_csv(
                subjects,
                sim.matrix(),
                &out.join(format!("similarity_T{}.csv", i + 1)),
            )?;
        }
        let mut text = String::from("subject_id,cluster\n");
        for (subject, label) in subjects.iter().zip(&state.clusters.labels) {
            text.push_str(&format!("{subject},{label}\n"));
        }
        std::fs::write(out.join("clusters.csv"), text)?;
        println!("similarity matrices and cluster labels dumped to {}", out.display());
    }
    if let Some(last) = state.loss_log.last() {
        println!(
            "finished {} iterations: L_D = {:.4}, L_G = {:.4}",
            state.iteration, last.l_d, last.l_g
        );
    } else {
        println!("finished with 0 iterations (setup only)");
    }
    println!("model: {}", out.join("model.ckpt").display());
    Ok(())
}

fn write_similarity_csv(
    subjects: &[String],
    matrix: &connectogen::Tensor,
    path: &Path,
) -> Result<()> {
    let mut text = String::from("subject_id");
    for s in subjects {
        text.push(',');
        text.push_str(s);
    }
    text.push('\n');
    for (i, s) in subjects.iter().enumerate() {
        text.push_str(s);
        for &v in matrix.row(i) {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_predict(model: &Path, source: &Path, out: &Path) -> Result<()> {
    let checkpoint = Checkpoint::load(model)?;
    let manifest = &checkpoint.manifest;
    println!("resolved config:");
    println!(
        "  model r = {}, m = {}, c = {}, metric = {}, iteration = {}",
        manifest.r, manifest.m, manifest.c, manifest.metric, manifest.iteration
    );
    let (store, model_set) = checkpoint.restore_model()?;
    let (subjects, features) = load_source_features(source, manifest.r)?;
    let predictions = predict_with(&model_set, &store, &features)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_predictions_csv(&subjects, &predictions, out)?;
    println!(
        "predicted {} target domains for {} subjects -> {}",
        predictions.len(),
        subjects.len(),
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(model: &Path, data: &Path, out: &Path) -> Result<()> {
    let checkpoint = Checkpoint::load(model)?;
    let manifest = checkpoint.manifest.clone();
    println!("resolved config:");
    println!(
        "  model r = {}, m = {}, c = {}, metric = {}, seed = {}, train_fraction = {}",
        manifest.r, manifest.m, manifest.c, manifest.metric, manifest.seed, manifest.train_fraction
    );
    let csv_path = data.join("population.csv");
    let (r, m) = infer_dimensions(&csv_path)?;
    if r != manifest.r || m != manifest.m {
        bail!(
            "data has r = {r}, m = {m} but the checkpoint was trained with r = {}, m = {}",
            manifest.r,
            manifest.m
        );
    }
    let population = load_population(&csv_path, r, m)?;
    let (_, test_pop) = split_train_test(&population, manifest.train_fraction, manifest.seed)?;
    let (store, model_set) = checkpoint.restore_model()?;
    let predictions = predict_with(&model_set, &store, &test_pop.source().features)?;
    let report = evaluate_predictions(
        &test_pop,
        &predictions,
        ReportMetadata {
            seed: manifest.seed,
            config_digest: manifest.config_digest.clone(),
            training_metric: manifest.metric.clone(),
        },
    )?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.txt"), report.render_text())?;
    std::fs::write(out.join("report.csv"), report.render_csv())?;
    print!("{}", report.render_text());
    println!("reports: {}", out.display());
    Ok(())
}

fn cmd_report(losslog: &Path, out: &Path) -> Result<()> {
    let rows = read_loss_log(losslog)?;
    println!("resolved config:");
    println!("  losslog = {} ({} iterations)", losslog.display(), rows.len());
    if rows.is_empty() {
        bail!("loss log {} has no data rows", losslog.display());
    }
    std::fs::create_dir_all(out)?;
    let iterations: Vec<u64> = rows.iter().map(|r| r.iteration).collect();
    let columns: [(&str, fn(&connectogen::training::LossRow) -> f64); 11] = [
        ("L_D", |r| r.l_d),
        ("L_adv", |r| r.l_adv),
        ("L_gdc", |r| r.l_gdc),
        ("L_gp", |r| r.l_gp),
        ("L_G", |r| r.l_g),
        ("L_wass_G", |r| r.l_wass_g),
        ("L_top", |r| r.l_top),
        ("L_loc", |r| r.l_loc),
        ("L_glb", |r| r.l_glb),
        ("L_rec", |r| r.l_rec),
        ("L_inf", |r| r.l_inf),
    ];
    for (name, extract) in columns {
        let values: Vec<f64> = rows.iter().map(extract).collect();
        let path = out.join(format!("loss_{name}.svg"));
        std::fs::write(&path, svg::line_plot(name, &iterations, &values))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!("wrote 11 loss-curve SVGs to {}", out.display());
    Ok(())
}
