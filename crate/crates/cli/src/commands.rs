use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use alpharec::corpus::{
    filter_and_index, merge_datasets, parse_interactions, split_dataset, DatasetSplit, SplitConfig, SplitOrder,
};
use alpharec::embed::{load_matrix, shuffle_rows_with_permutation, write_matrix, EmbeddingMatrix};
use alpharec::eval::{
    evaluate_output, strategy_baseline, zero_shot_evaluate, EvalOptions, HeldOut, RankingMetrics, StrategyKind,
};
use alpharec::graph::build_graph;
use alpharec::intent::{
    intent_evaluate, intent_rank, intent_rank_repropagated, make_intent_cases, project_query, BlendScope,
    IntentQuerySet,
};
use alpharec::model::{full_forward, load_checkpoint, save_checkpoint, Model, ModelKind};
use alpharec::synth::{generate, make_domain_pair, SynthConfig};
use alpharec::train::{
    fit, log_to_jsonl, tune_temperature, LossKind, MixStrategy, ModelSpec, NegativePools, TrainConfig, TrainData,
};
use alpharec::Matrix;
use serde::Serialize;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Ingest(a) => ingest(&a),
        Command::Split(a) => split(&a),
        Command::Synth(a) => synth(&a),
        Command::ProbeTrain(a) => train(&a, true),
        Command::Train(a) => train(&a, false),
        Command::Eval(a) => eval(&a),
        Command::Baseline(a) => baseline(&a),
        Command::ZeroShotEval(a) => zero_shot(&a),
        Command::IntentEval(a) => intent_eval(&a),
        Command::IntentRank(a) => intent_rank_cmd(&a),
        Command::ExportReps(a) => export_reps(&a),
        Command::ShuffleEmbeddings(a) => shuffle(&a),
    }
}

fn out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(rec: &mut Recorder, path: PathBuf, text: &str) -> CliResult<()> {
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    rec.output(path);
    Ok(())
}

fn load_split(rec: &mut Recorder, dir: &Path) -> CliResult<DatasetSplit> {
    rec.input(dir)?;
    Ok(DatasetSplit::read_dir(dir)?)
}

/// Loads a matrix and reorders it to the split's item indices.
fn load_aligned(rec: &mut Recorder, path: &Path, split: &DatasetSplit) -> CliResult<EmbeddingMatrix> {
    rec.input(path)?;
    Ok(load_matrix(path)?.align_to(&split.id_maps.items)?)
}

fn load_model(rec: &mut Recorder, path: &Path) -> CliResult<Model<f32>> {
    rec.input(path)?;
    Ok(load_checkpoint(path)?)
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    dataset: &'a str,
    k: usize,
    recall: f64,
    ndcg: f64,
    hit_ratio: f64,
    n_users: usize,
}

fn write_metrics(rec: &mut Recorder, out: &Path, dataset: &str, m: &RankingMetrics) -> CliResult<()> {
    let file = MetricsFile {
        dataset,
        k: m.k,
        recall: m.recall,
        ndcg: m.ndcg,
        hit_ratio: m.hit_ratio,
        n_users: m.n_users_evaluated,
    };
    let text = serde_json::to_string_pretty(&file).expect("metrics serialize") + "\n";
    write_text(rec, out.join("metrics.json"), &text)
}

fn ingest(a: &IngestArgs) -> CliResult<()> {
    let mut rec = Recorder::new("ingest", a, &[]);
    rec.input(&a.input)?;
    let data = filter_and_index(&parse_interactions(&a.input)?, a.min_interactions)?;
    out_dir(&a.out)?;
    data.write_tsv(&a.out)?;
    for f in ["indexed.tsv", "idmap.users.tsv", "idmap.items.tsv"] {
        rec.output(a.out.join(f));
    }
    rec.finish(&a.out)
}

fn split(a: &SplitArgs) -> CliResult<()> {
    let mut rec = Recorder::new("split", a, &[a.seed]);
    rec.input(&a.input)?;
    let data = filter_and_index(&parse_interactions(&a.input)?, a.min_interactions)?;
    let cfg = SplitConfig {
        ratios: [a.ratios[0], a.ratios[1], a.ratios[2]],
        seed: a.seed,
        order: match a.order {
            OrderArg::Random => SplitOrder::Random,
            OrderArg::Chronological => SplitOrder::Chronological,
        },
    };
    let s = split_dataset(&data, &cfg)?;
    out_dir(&a.out)?;
    s.write_dir(&a.out)?;
    for f in ["train.tsv", "val.tsv", "test.tsv", "idmap.users.tsv", "idmap.items.tsv"] {
        rec.output(a.out.join(f));
    }
    rec.finish(&a.out)
}

fn synth(a: &SynthArgs) -> CliResult<()> {
    let cfg = SynthConfig {
        n_users: a.n_users,
        n_items: a.n_items,
        d_latent: a.d_latent,
        d_lang: a.d_lang,
        interactions_per_user: a.interactions_per_user,
        noise_sigma: a.noise_sigma,
        nonlinear: a.nonlinear,
        gen_temperature: a.gen_temperature,
        seed: a.seed,
    };
    let mut seeds = vec![a.seed];
    seeds.extend(a.pair_seed);
    let mut rec = Recorder::new("synth", a, &seeds);
    out_dir(&a.out)?;
    let files = ["interactions.tsv", "items.arec", "truth.json"];
    match a.pair_seed {
        None => {
            generate(&cfg)?.write_dir(&a.out)?;
            files.iter().for_each(|f| rec.output(a.out.join(f)));
        }
        Some(seed_b) => {
            let (da, db) = make_domain_pair(&cfg, a.seed, seed_b)?;
            for (name, d) in [("a", da), ("b", db)] {
                let dir = a.out.join(name);
                d.write_dir(&dir)?;
                files.iter().for_each(|f| rec.output(dir.join(f)));
            }
        }
    }
    rec.finish(&a.out)
}

#[derive(Serialize)]
struct TrainSummary {
    model: ModelKind,
    layers: usize,
    temperature: f64,
    best_epoch: usize,
    best_val_recall20: Option<f64>,
    epochs_run: usize,
    stopped_early: bool,
}

fn train(a: &TrainArgs, probe_only: bool) -> CliResult<()> {
    let command = if probe_only { "probe-train" } else { "train" };
    let kind = match (probe_only, a.model, a.no_mlp) {
        (true, ModelArg::Probe | ModelArg::Alpharec, _) => ModelKind::Probe,
        (true, ModelArg::Id, _) => return Err(CliError::Usage("probe-train cannot train an ID model".into())),
        (false, ModelArg::Id, true) => return Err(CliError::Usage("--no-mlp applies to language models only".into())),
        (false, ModelArg::Id, false) => ModelKind::Id,
        (false, ModelArg::Probe, _) | (false, ModelArg::Alpharec, true) => ModelKind::Probe,
        (false, ModelArg::Alpharec, false) => ModelKind::AlphaRec,
    };
    let needs_features = kind != ModelKind::Id;
    if needs_features && a.features.len() != a.splits.len() {
        return Err(CliError::Usage(format!(
            "{} --split given but {} --features; language models need one matrix per split",
            a.splits.len(),
            a.features.len()
        )));
    }
    if kind == ModelKind::Id && a.splits.len() > 1 {
        return Err(CliError::Usage("ID models train on a single split".into()));
    }
    let layers = a.layers.unwrap_or(if probe_only { 0 } else { 2 });
    let mut rec = Recorder::new(command, a, &[a.seed]);

    let mut splits = Vec::new();
    let mut feats = Vec::new();
    for (k, dir) in a.splits.iter().enumerate() {
        let s = load_split(&mut rec, dir)?.with_tag(k);
        if needs_features {
            feats.push(load_aligned(&mut rec, &a.features[k], &s)?);
        }
        splits.push(s);
    }
    let (split, pools) = if splits.len() == 1 {
        let s = splits.pop().expect("one split");
        let pools = NegativePools::single(&s);
        (s, pools)
    } else {
        let mixed = merge_datasets(splits)?;
        (mixed.union_split(), NegativePools::from_mixed(&mixed))
    };
    let features = if needs_features {
        Some(EmbeddingMatrix::concat(&feats.iter().collect::<Vec<_>>())?)
    } else {
        None
    };
    let data = TrainData {
        split: &split,
        features: features.as_ref(),
        pools,
    };
    let spec = ModelSpec {
        kind,
        hidden_dim: a.hidden_dim,
        out_dim: a.out_dim,
        leaky_slope: a.leaky_slope,
    };
    let cfg = TrainConfig {
        temperature: a.tau,
        n_negatives: a.negatives,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        max_epochs: a.max_epochs,
        eval_every: a.eval_every,
        patience: a.patience,
        layers,
        loss: match a.loss {
            LossArg::Infonce => LossKind::InfoNce,
            LossArg::Bpr => LossKind::Bpr,
        },
        mix: match a.mix {
            MixArg::Pooled => MixStrategy::Pooled,
            MixArg::Alternate => MixStrategy::Alternate,
        },
        seed: a.seed,
        ..Default::default()
    };
    let (tau, run) = if a.tau_grid.is_empty() {
        (a.tau, fit::<f32>(&spec, &data, &cfg)?)
    } else {
        tune_temperature::<f32>(&spec, &data, &cfg, &a.tau_grid)?
    };

    out_dir(&a.out)?;
    let ckpt = a.out.join("model.ckpt");
    save_checkpoint(&run.model, &ckpt)?;
    rec.output(ckpt);
    write_text(&mut rec, a.out.join("train_log.jsonl"), &log_to_jsonl(&run.log))?;
    let summary = TrainSummary {
        model: kind,
        layers,
        temperature: tau,
        best_epoch: run.best_epoch,
        best_val_recall20: run.best_val_recall,
        epochs_run: run.log.len(),
        stopped_early: run.stopped_early,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_text(&mut rec, a.out.join("summary.json"), &text)?;
    rec.finish(&a.out)
}

fn features_for(
    rec: &mut Recorder,
    model: &Model<f32>,
    path: Option<&PathBuf>,
    split: &DatasetSplit,
) -> CliResult<Option<Matrix<f32>>> {
    match (model.kind(), path) {
        (ModelKind::Id, _) => Ok(None),
        (_, Some(p)) => Ok(Some(load_aligned(rec, p, split)?.to_matrix())),
        (kind, None) => Err(CliError::Usage(format!("a {kind} checkpoint needs --features"))),
    }
}

fn eval(a: &EvalArgs) -> CliResult<()> {
    let mut rec = Recorder::new("eval", a, &[]);
    let model = load_model(&mut rec, &a.model)?;
    let split = load_split(&mut rec, &a.split)?;
    let x = features_for(&mut rec, &model, a.features.as_ref(), &split)?;
    let out = full_forward(&model, x.as_ref(), &build_graph(&split))?;
    let held_out = match a.held_out {
        HeldOutArg::Validation => HeldOut::Validation,
        HeldOutArg::Test => HeldOut::Test,
    };
    let opts = EvalOptions {
        k: a.k,
        mask_validation: a.mask_validation,
    };
    let m = evaluate_output(&out, &split, held_out, &opts)?;
    out_dir(&a.out)?;
    write_metrics(&mut rec, &a.out, &dataset_name(&a.split), &m)?;
    rec.finish(&a.out)
}

fn baseline(a: &BaselineArgs) -> CliResult<()> {
    let mut rec = Recorder::new("baseline", a, &[a.seed]);
    let split = load_split(&mut rec, &a.split)?;
    let kind = match a.kind {
        StrategyArg::Random => StrategyKind::Random,
        StrategyArg::Pop => StrategyKind::Pop,
    };
    let m = strategy_baseline(kind, &split, a.k, a.seed);
    out_dir(&a.out)?;
    write_metrics(&mut rec, &a.out, &dataset_name(&a.split), &m)?;
    rec.finish(&a.out)
}

fn zero_shot(a: &ZeroShotArgs) -> CliResult<()> {
    let mut rec = Recorder::new("zero-shot-eval", a, &[]);
    let model = load_model(&mut rec, &a.model)?;
    let split = load_split(&mut rec, &a.split)?;
    let feats = load_aligned(&mut rec, &a.features, &split)?;
    let layers = a.layers.unwrap_or(model.layers);
    let opts = EvalOptions {
        k: a.k,
        ..Default::default()
    };
    let m = zero_shot_evaluate(&model, &split, &feats, layers, &opts)?;
    out_dir(&a.out)?;
    write_metrics(&mut rec, &a.out, &dataset_name(&a.split), &m)?;
    rec.finish(&a.out)
}

fn scope(s: ScopeArg) -> BlendScope {
    match s {
        ScopeArg::LayerZero => BlendScope::LayerZero,
        ScopeArg::Repropagate => BlendScope::Repropagate,
    }
}

fn intent_eval(a: &IntentEvalArgs) -> CliResult<()> {
    let mut rec = Recorder::new("intent-eval", a, &[a.seed]);
    let model = load_model(&mut rec, &a.model)?;
    let split = load_split(&mut rec, &a.split)?;
    let feats = load_aligned(&mut rec, &a.features, &split)?;
    let queries = load_aligned(&mut rec, &a.queries, &split)?;
    let queries = IntentQuerySet::new(queries, split.n_items(), feats.dim())?;
    let cases = make_intent_cases(&split, a.seed);
    let m = intent_evaluate(
        &model,
        &feats.to_matrix(),
        &build_graph(&split),
        &split,
        &queries,
        &cases,
        a.alpha,
        a.k,
        scope(a.scope),
    )?;
    out_dir(&a.out)?;
    write_metrics(&mut rec, &a.out, &dataset_name(&a.split), &m)?;
    rec.finish(&a.out)
}

fn intent_rank_cmd(a: &IntentRankArgs) -> CliResult<()> {
    let mut rec = Recorder::new("intent-rank", a, &[]);
    let model = load_model(&mut rec, &a.model)?;
    let split = load_split(&mut rec, &a.split)?;
    let feats = load_aligned(&mut rec, &a.features, &split)?;
    let queries = load_aligned(&mut rec, &a.queries, &split)?;
    let user = split
        .id_maps
        .users
        .index_of(&a.user)
        .ok_or_else(|| alpharec::Error::Invalid(format!("unknown user id {:?}", a.user)))?;
    if a.query_row >= queries.rows() {
        return Err(alpharec::Error::Invalid(format!("query row {} out of range", a.query_row)).into());
    }
    let g = build_graph(&split);
    let out = full_forward(&model, Some(&feats.to_matrix()), &g)?;
    let q = project_query(&model, queries.row(a.query_row))?;
    let mask = &split.train[user];
    let top = match a.scope {
        ScopeArg::LayerZero => intent_rank(&out, user, &q, a.alpha, mask, a.k)?,
        ScopeArg::Repropagate => intent_rank_repropagated(&out, &g, user, &q, a.alpha, mask, a.k)?,
    };
    let mut tsv = String::from("rank\titem\titem_index\n");
    for (r, &i) in top.iter().enumerate() {
        let id = split.id_maps.items.id_of(i).unwrap_or("");
        writeln!(tsv, "{}\t{id}\t{i}", r + 1).expect("write to string");
    }
    out_dir(&a.out)?;
    write_text(&mut rec, a.out.join("topk.tsv"), &tsv)?;
    rec.finish(&a.out)
}

fn reps_tsv(m: &Matrix<f32>) -> String {
    let mut out = String::new();
    for (r, row) in m.row_iter().enumerate() {
        let values: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{r}\t{}", values.join(",")).expect("write to string");
    }
    out
}

fn export_reps(a: &ExportArgs) -> CliResult<()> {
    let mut rec = Recorder::new("export-reps", a, &[]);
    let model = load_model(&mut rec, &a.model)?;
    let split = load_split(&mut rec, &a.split)?;
    let x = features_for(&mut rec, &model, a.features.as_ref(), &split)?;
    let out = full_forward(&model, x.as_ref(), &build_graph(&split))?;
    out_dir(&a.out)?;
    write_text(&mut rec, a.out.join("reps.users.tsv"), &reps_tsv(&out.users))?;
    write_text(&mut rec, a.out.join("reps.items.tsv"), &reps_tsv(&out.items))?;
    rec.finish(&a.out)
}

fn shuffle(a: &ShuffleArgs) -> CliResult<()> {
    let mut rec = Recorder::new("shuffle-embeddings", a, &[a.seed]);
    rec.input(&a.input)?;
    let (shuffled, perm) = shuffle_rows_with_permutation(&load_matrix(&a.input)?, a.seed);
    out_dir(&a.out)?;
    let name = a.input.file_name().map(PathBuf::from).unwrap_or_else(|| "items.arec".into());
    let path = a.out.join(name);
    write_matrix(&shuffled, &path)?;
    rec.output(path);
    let mut tsv = String::new();
    for (r, p) in perm.iter().enumerate() {
        writeln!(tsv, "{r}\t{p}").expect("write to string");
    }
    write_text(&mut rec, a.out.join("permutation.tsv"), &tsv)?;
    rec.finish(&a.out)
}
