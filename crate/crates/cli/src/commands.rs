//! Command implementations.
//!
//! A checkpoint is a sealed deletion session: `train` (and `oracle`) store
//! the final model together with a freshly initialized deletion optimizer
//! and the session PRNG; `unlearn` resumes that state machine, serves its
//! request list, and stores the advanced session. Serving an empty request
//! list therefore rewrites the checkpoint byte-for-byte.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use rlul_core::certify::{certify, probe_distribution};
use rlul_core::data::{load_idx, synth_blobs, Dataset};
use rlul_core::experiments::{run_fig2, run_table1, SweepSpec};
use rlul_core::nn::accuracy;
use rlul_core::optim::OptimizerState;
use rlul_core::rng::{derive_seed, rng_from_seed, sample_without_replacement};
use rlul_core::train::{retrain_oracle, train_with_eval, TrainOutput};
use rlul_core::unlearn::{RemovalRequest, StreamProbe, StreamSession, UnlearnConfig};

use crate::checkpoint::Checkpoint;
use crate::config::{load_request_list, DataSource, ProbeSelector, WorkbenchConfig};
use crate::csv_out;

/// Load the configured (train, test) pair.
pub fn load_datasets(cfg: &WorkbenchConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.data {
        DataSource::Idx {
            dir,
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_subset,
        } => {
            let train_set = load_idx(&dir.join(train_images), &dir.join(train_labels))
                .with_context(|| format!("loading training data from {}", dir.display()))?;
            let test_set = load_idx(&dir.join(test_images), &dir.join(test_labels))
                .with_context(|| format!("loading test data from {}", dir.display()))?;
            let train_set = match train_subset {
                Some(count) => subsample(&train_set, *count, cfg.subset_seed())?,
                None => train_set,
            };
            Ok((train_set, test_set))
        }
        DataSource::Synth {
            n,
            test_n,
            d,
            k,
            separation,
        } => {
            let train_set = synth_blobs(derive_seed(cfg.seed, 40), *n, *d, *k, *separation)?;
            let test_set = synth_blobs(derive_seed(cfg.seed, 41), *test_n, *d, *k, *separation)?;
            Ok((train_set, test_set))
        }
    }
}

fn subsample(dataset: &Dataset, count: usize, seed: u64) -> Result<Dataset> {
    if count >= dataset.len() {
        return Ok(dataset.clone());
    }
    let pool: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = rng_from_seed(seed);
    let mut picked = sample_without_replacement(&mut rng, &pool, count);
    picked.sort_unstable();
    Ok(dataset.subset(&picked)?)
}

fn ensure_out_dir(cfg: &WorkbenchConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating output directory {}", cfg.out_dir.display()))?;
    Ok(cfg.out_dir.clone())
}

/// Seal a finished training run into a deletion-session checkpoint.
fn seal_session(cfg: &WorkbenchConfig, output: &TrainOutput) -> Checkpoint {
    Checkpoint {
        model: output.model.clone(),
        optimizer_spec: cfg.unlearn.optimizer,
        opt_state: OptimizerState::new(cfg.unlearn.optimizer.kind, output.model.param_count()),
        rng: rng_from_seed(cfg.unlearn.seed),
        per_sample_updates: output.cost.per_sample_updates,
    }
}

pub fn cmd_train(cfg: &WorkbenchConfig) -> Result<()> {
    let out_dir = ensure_out_dir(cfg)?;
    let (train_set, test_set) = load_datasets(cfg)?;
    let arch = cfg.arch(train_set.dim(), train_set.num_classes);

    let output = train_with_eval(&train_set, Some(&test_set), arch, &cfg.train)?;
    let test_acc = accuracy(&output.model, &test_set)?;

    let ckpt_path = out_dir.join("model.ckpt");
    seal_session(cfg, &output).save(&ckpt_path)?;
    csv_out::write_train_metrics(&out_dir.join("train_metrics.csv"), &output.epoch_records)?;

    println!(
        "trained {} on n={} for {} epochs: test accuracy {:.4}, {} sample updates, checkpoint {}",
        cfg.arch_kind,
        train_set.len(),
        cfg.train.epochs,
        test_acc,
        output.cost.per_sample_updates,
        ckpt_path.display()
    );
    Ok(())
}

pub fn cmd_oracle(cfg: &WorkbenchConfig, requests_path: &Path) -> Result<()> {
    let out_dir = ensure_out_dir(cfg)?;
    let (train_set, test_set) = load_datasets(cfg)?;
    let arch = cfg.arch(train_set.dim(), train_set.num_classes);

    let mut removed = load_request_list(requests_path)?;
    removed.sort_unstable();
    removed.dedup();

    let output = retrain_oracle(&train_set, &removed, arch, &cfg.train)?;
    let test_acc = accuracy(&output.model, &test_set)?;

    let ckpt_path = out_dir.join("oracle.ckpt");
    seal_session(cfg, &output).save(&ckpt_path)?;
    csv_out::write_train_metrics(&out_dir.join("oracle_metrics.csv"), &output.epoch_records)?;

    println!(
        "oracle retrained without {} points: test accuracy {:.4}, {} sample updates, checkpoint {}",
        removed.len(),
        test_acc,
        output.cost.per_sample_updates,
        ckpt_path.display()
    );
    Ok(())
}

pub fn cmd_unlearn(cfg: &WorkbenchConfig, ckpt_path: &Path, requests_path: &Path) -> Result<()> {
    let out_dir = ensure_out_dir(cfg)?;
    let (train_set, test_set) = load_datasets(cfg)?;
    let ckpt = Checkpoint::load(ckpt_path)?;
    if ckpt.model.arch != cfg.arch(train_set.dim(), train_set.num_classes) {
        bail!("checkpoint architecture does not match the configured architecture");
    }

    let indices = load_request_list(requests_path)?;
    let requests: Vec<RemovalRequest> =
        indices.iter().map(|&index| RemovalRequest { index }).collect();

    // Resume the sealed session: its optimizer spec, accumulators, and rng.
    let session_config = UnlearnConfig {
        optimizer: ckpt.optimizer_spec,
        ..cfg.unlearn.clone()
    };
    let probe = if cfg.probe_every > 0 {
        Some(StreamProbe {
            eval: &test_set,
            every: cfg.probe_every,
        })
    } else {
        None
    };
    let mut session = StreamSession::new(
        ckpt.model,
        ckpt.opt_state,
        &train_set,
        session_config,
        Some(cfg.train),
        probe,
    )
    .map_err(anyhow::Error::from)?
    .with_rng(ckpt.rng);

    let mut events = Vec::with_capacity(requests.len());
    for &request in &requests {
        events.push(session.step(request)?);
    }

    let test_acc = accuracy(&session.model, &test_set)?;
    let cost = session.cost();
    let updated = Checkpoint {
        model: session.model.clone(),
        optimizer_spec: ckpt.optimizer_spec,
        opt_state: session.opt_state.clone(),
        rng: session.rng().clone(),
        per_sample_updates: ckpt.per_sample_updates + cost.per_sample_updates,
    };
    let out_path = out_dir.join("unlearned.ckpt");
    updated.save(&out_path)?;
    csv_out::write_event_log(&out_dir.join("unlearn_events.csv"), &events)?;

    println!(
        "served {} removal requests ({} sample updates): test accuracy {:.4}, checkpoint {}",
        events.len(),
        cost.per_sample_updates,
        test_acc,
        out_path.display()
    );
    Ok(())
}

pub fn cmd_certify(cfg: &WorkbenchConfig, unlearned_path: &Path, oracle_path: &Path) -> Result<()> {
    let out_dir = ensure_out_dir(cfg)?;
    let (train_set, test_set) = load_datasets(cfg)?;
    let unlearned = Checkpoint::load(unlearned_path)?;
    let oracle = Checkpoint::load(oracle_path)?;

    let Some(requests_path) = &cfg.certify_requests else {
        bail!("certify requires 'certify.requests' (the request list the checkpoints served)");
    };
    let mut removed = load_request_list(requests_path)?;
    removed.sort_unstable();
    removed.dedup();
    if removed.is_empty() {
        bail!("certify request list is empty");
    }
    let removed_points = train_set.subset(&removed)?;

    // Still-member sample, disjoint from the removed indices.
    let removed_set: std::collections::BTreeSet<usize> = removed.iter().copied().collect();
    let survivors: Vec<usize> =
        (0..train_set.len()).filter(|i| !removed_set.contains(i)).collect();
    let member_count = cfg.members_sample.unwrap_or(removed.len()).min(survivors.len());
    if member_count == 0 {
        bail!("no surviving points available for the member sample");
    }
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 5));
    let mut member_indices = sample_without_replacement(&mut rng, &survivors, member_count);
    member_indices.sort_unstable();
    let still_members = train_set.subset(&member_indices)?;

    let probe = match cfg.probe_selector {
        ProbeSelector::Test => test_set.clone(),
        ProbeSelector::Removed => removed_points.clone(),
        ProbeSelector::TrainSample => {
            subsample(&train_set, cfg.probe_sample, derive_seed(cfg.seed, 6))?
        }
    };

    let report = certify(
        &unlearned.model,
        &oracle.model,
        &probe,
        &removed_points,
        &still_members,
        cfg.certify_threshold,
    )?;

    csv_out::write_certification(
        &out_dir.join("certification.txt"),
        &out_dir.join("certification.csv"),
        &report,
    )?;
    csv_out::write_probe_distribution(
        &out_dir.join("probe_unlearned.csv"),
        &probe_distribution(&unlearned.model, &probe)?,
    )?;
    csv_out::write_probe_distribution(
        &out_dir.join("probe_oracle.csv"),
        &probe_distribution(&oracle.model, &probe)?,
    )?;

    println!(
        "certification: cosine_divergence={} norm_gap={} delta_hat={} mia_unlearned={} mia_oracle={} verdict={}",
        report.cosine_divergence,
        report.norm_gap,
        report.delta_hat,
        report.mia_advantage_unlearned,
        report.mia_advantage_oracle,
        report.verdict.name()
    );
    Ok(())
}

pub fn cmd_sweep(cfg: &WorkbenchConfig, workers: Option<usize>) -> Result<()> {
    let out_dir = ensure_out_dir(cfg)?;
    let (train_set, test_set) = load_datasets(cfg)?;
    let arch = cfg.arch(train_set.dim(), train_set.num_classes);

    let run = || -> Result<()> {
        // Table rows at the configured sizes.
        let unlearn_base = UnlearnConfig {
            seed: cfg.sweep.seed,
            ..cfg.unlearn.clone()
        };
        let table = run_table1(
            &train_set,
            &test_set,
            arch,
            &cfg.train,
            &unlearn_base,
            &cfg.sweep.table1_sizes,
        )?;
        csv_out::write_table1(&out_dir.join("table1.csv"), &table.rows)?;
        println!(
            "table1: baseline accuracy {:.4}, {} rows -> {}",
            table.baseline_accuracy,
            table.rows.len(),
            out_dir.join("table1.csv").display()
        );

        // Optimizer x rate sweep.
        let spec = SweepSpec {
            optimizers: cfg.sweep.optimizers.clone(),
            rates: cfg.sweep.rates.clone(),
            removal_sizes: cfg.sweep.sizes.clone(),
            repetitions: cfg.sweep.repetitions,
            seed: cfg.sweep.seed,
        };
        let fig2 = run_fig2(&train_set, &test_set, arch, &cfg.train, &spec)?;
        for kind in &spec.optimizers {
            let cells: Vec<&rlul_core::experiments::Fig2Cell> =
                fig2.cells.iter().filter(|c| c.optimizer == *kind).collect();
            let path = out_dir.join(format!("fig2_{}.csv", kind.name()));
            csv_out::write_fig2(&path, &cells)?;
            println!("sweep {}: {} cells -> {}", kind.name(), cells.len(), path.display());
        }
        Ok(())
    };

    match workers {
        Some(count) if count > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(count)
            .build()
            .context("building worker pool")?
            .install(run),
        _ => run(),
    }
}
