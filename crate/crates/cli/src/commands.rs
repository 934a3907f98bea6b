//! One function per subcommand.

use std::fs::File;
use std::io::{BufWriter, Write};

use kaap_core::fmt::{fmt_f64, to_json_string};
use kaap_core::fusionnet::{
    evaluate, synthetic_dataset, train as fit, FusionConfig, FusionNet, Optimizer, SyntheticConfig, TrainConfig,
    Variant,
};
use kaap_core::kselect::{select_k, SelectKConfig};
use kaap_core::labelfuse::{fuse_label, read_records, threshold_filter, write_fused, write_sweep};
use kaap_core::predictor::Emotion;
use kaap_core::report::{explain as explain_sample, write_pgm, write_text_attribution, ExplainConfig};
use kaap_core::{Error, Modality, ModalityMask, Predictor, ToyModel};
use serde::Serialize;

use crate::io::{ensure_dir, load_model, load_sample, load_samples, parse_class, write_bytes};
use crate::validate::{run_validation, ValidateConfig};
use crate::{CliError, CliResult, ExplainArgs, LabelfuseArgs, OptimizerArg, PredictArgs, SelectkArgs, TrainArgs, ValidateArgs};

fn create(path: &std::path::Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Writes `report.json`, `image_map.pgm`, `speech_map.pgm` and
/// `text_map.csv` into the output directory.
pub fn explain(args: &ExplainArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let sample = load_sample(&args.sample)?;
    let config = ExplainConfig {
        k_image: args.k_image,
        k_speech: args.k_speech,
        k_text: args.k_text,
        target_override: args.target.as_deref().map(parse_class).transpose()?,
        ..Default::default()
    };
    let explanation = explain_sample(&model, &sample, &config)?;
    let report = explanation.report()?;

    ensure_dir(&args.out)?;
    let mut json = to_json_string(&report).map_err(Error::from)?;
    json.push('\n');
    write_bytes(&args.out.join("report.json"), json.as_bytes())?;

    let side = explanation.image.shape[0];
    let mut pgm = Vec::new();
    write_pgm(&mut pgm, side, side, &explanation.image.values)?;
    write_bytes(&args.out.join("image_map.pgm"), &pgm)?;

    let mut strip = Vec::new();
    write_pgm(&mut strip, explanation.speech.values.len(), 1, &explanation.speech.values)?;
    write_bytes(&args.out.join("speech_map.pgm"), &strip)?;

    let mut csv = Vec::new();
    write_text_attribution(&mut csv, sample.text(), &explanation.text)?;
    write_bytes(&args.out.join("text_map.csv"), &csv)?;

    let imp = &report.modality_importance;
    println!(
        "target {} | image {} | speech {} | text {}",
        Emotion::from_index(report.target_class)?,
        fmt_f64(imp.image),
        fmt_f64(imp.speech),
        fmt_f64(imp.text)
    );
    Ok(())
}

pub fn validate(args: &ValidateArgs) -> CliResult<()> {
    let cfg = ValidateConfig {
        seed: args.seed,
        games: args.games,
        additive: args.additive,
        differential: args.differential,
        gap_games: args.gap_games,
        mutate: args.mutate,
    };
    let report = run_validation(&cfg)?;
    if let Some(path) = &args.report {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            ensure_dir(dir)?;
        }
        let mut json = to_json_string(&report).map_err(Error::from)?;
        json.push('\n');
        write_bytes(path, json.as_bytes())?;
    }
    for s in &report.suites {
        println!(
            "{:<20} {} max |diff| {} (tolerance {})",
            s.name,
            if s.passed { "PASS" } else { "FAIL" },
            fmt_f64(s.max_abs_diff),
            fmt_f64(s.tolerance)
        );
    }
    let h = &report.gap_histogram;
    println!("kp3_vs_shapley gaps: max {} mean {}", fmt_f64(h.max_gap), fmt_f64(h.mean_gap));
    let failed: Vec<_> = report.suites.iter().filter(|s| !s.passed).collect();
    if failed.is_empty() {
        return Ok(());
    }
    for s in &failed {
        eprintln!(
            "{}: instance {} differs by {}: {}",
            s.name,
            s.worst_instance,
            fmt_f64(s.max_abs_diff),
            s.worst_detail
        );
    }
    Err(CliError::Breach(failed.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")))
}

#[derive(Serialize)]
struct TrainSummary {
    variant: Variant,
    epochs_run: usize,
    stopped_early: bool,
    train_accuracy: f64,
    holdout_accuracy: Option<f64>,
    /// Holdout accuracy with only one modality present.
    holdout_unimodal: Option<[f64; 3]>,
}

/// Writes `checkpoint.json` and `training.jsonl` (one record per epoch).
pub fn train(args: &TrainArgs) -> CliResult<()> {
    let variant: Variant = args.variant.parse()?;
    let data_cfg = SyntheticConfig {
        seed: args.seed,
        samples: args.samples + args.holdout,
        ..Default::default()
    };
    let data = synthetic_dataset(&data_cfg)?;
    let (train_set, holdout) = data.split_at(args.samples);
    let holdout = (!holdout.is_empty()).then_some(holdout);

    let mut net = FusionNet::new(FusionConfig {
        seed: args.seed,
        d: args.d,
        variant,
        image_shape: data_cfg.image_shape,
        speech_shape: data_cfg.speech_shape,
        text_len: data_cfg.text_len,
        vocab: data_cfg.vocab,
        ..Default::default()
    })?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        batch_size: args.batch_size,
        optimizer: match args.optimizer {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::Adam => Optimizer::adam(),
        },
        patience: (args.patience > 0).then_some(args.patience),
        seed: args.seed,
    };
    let report = fit(&mut net, train_set, holdout, &cfg)?;

    ensure_dir(&args.out)?;
    let mut log = create(&args.out.join("training.jsonl"))?;
    for record in &report.epochs {
        let line = to_json_string(record).map_err(Error::from)?;
        writeln!(log, "{line}").map_err(|e| CliError::io(&args.out, e))?;
    }
    log.flush().map_err(|e| CliError::io(&args.out, e))?;
    ToyModel::Fusion(Box::new(net.clone())).save(args.out.join("checkpoint.json"))?;

    let (holdout_accuracy, holdout_unimodal) = match holdout {
        Some(h) => {
            let mut uni = [0.0; 3];
            for (u, m) in uni.iter_mut().zip(Modality::ALL) {
                *u = evaluate(&net, h, ModalityMask::only(m))?.accuracy;
            }
            (Some(evaluate(&net, h, ModalityMask::ALL)?.accuracy), Some(uni))
        }
        None => (None, None),
    };
    let summary = TrainSummary {
        variant,
        epochs_run: report.epochs.len(),
        stopped_early: report.stopped_early,
        train_accuracy: report.final_accuracy(),
        holdout_accuracy,
        holdout_unimodal,
    };
    println!("{}", to_json_string(&summary).map_err(Error::from)?);
    Ok(())
}

/// CSV `modality,k,dice,selected`, one row per adjacent pair of
/// granularities.
pub fn selectk(args: &SelectkArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let samples = load_samples(&args.samples)?;
    let cfg = SelectKConfig {
        k_max: args.k_max,
        threshold: args.threshold,
        q: args.q,
        target_override: args.target.as_deref().map(parse_class).transpose()?,
    };
    let modalities = if args.modality.is_empty() { Modality::ALL.to_vec() } else { args.modality.clone() };
    let mut out = String::from("modality,k,dice,selected\n");
    for m in modalities {
        let curve = select_k(&model, &samples, m, &cfg)?;
        for (k, d) in &curve.points {
            out.push_str(&format!("{m},{k},{},{}\n", fmt_f64(*d), *k == curve.selected_k));
        }
        println!("{m}: selected k = {}", curve.selected_k);
    }
    write_bytes(&args.out, out.as_bytes())
}

/// Writes `fused.csv` (filtered at `--tau`) and `sweep.csv`.
pub fn labelfuse(args: &LabelfuseArgs) -> CliResult<()> {
    let file = File::open(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let records = read_records(file)?;
    let fused: Vec<_> = records.iter().map(fuse_label).collect();
    let outcome = threshold_filter(&fused, args.tau)?;
    let sweep = args
        .sweep
        .iter()
        .map(|&t| threshold_filter(&fused, t).map(|o| o.report))
        .collect::<kaap_core::Result<Vec<_>>>()?;

    ensure_dir(&args.out)?;
    let mut buf = Vec::new();
    write_fused(&mut buf, &records, &fused, &outcome.kept)?;
    write_bytes(&args.out.join("fused.csv"), &buf)?;
    let mut buf = Vec::new();
    write_sweep(&mut buf, &sweep)?;
    write_bytes(&args.out.join("sweep.csv"), &buf)?;
    for skipped in &outcome.report.skipped {
        log::info!("class {skipped} has no records and was skipped");
    }
    println!("kept {} of {} records at tau {}", outcome.kept_indices().len(), records.len(), args.tau);
    Ok(())
}

#[derive(Serialize)]
struct Prediction {
    probs: [f64; 4],
    label: Emotion,
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let sample = load_sample(&args.sample)?;
    let mask = match &args.keep {
        None => ModalityMask::ALL,
        Some(ms) => {
            let mut mask = ModalityMask::NONE;
            for &m in ms {
                mask.set(m, true);
            }
            mask
        }
    };
    let p = model.predict_masked(&sample, mask)?;
    let out = Prediction {
        probs: p.0,
        label: Emotion::from_index(p.argmax())?,
    };
    println!("{}", to_json_string(&out).map_err(Error::from)?);
    Ok(())
}
