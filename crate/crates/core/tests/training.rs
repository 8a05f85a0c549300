mod common;

use alpharec::corpus::merge_datasets;
use alpharec::model::{checkpoint_bytes, ModelKind};
use alpharec::synth::{generate, make_domain_pair, SynthConfig};
use alpharec::train::{
    fit, log_to_jsonl, tune_temperature, EpochLog, MixStrategy, ModelSpec, NegativePools, TrainConfig, TrainData,
};
use common::prepare;

fn small() -> SynthConfig {
    SynthConfig {
        n_users: 120,
        n_items: 80,
        d_latent: 4,
        d_lang: 16,
        interactions_per_user: 20,
        ..Default::default()
    }
}

fn quick(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        n_negatives: 32,
        batch_size: 128,
        learning_rate: 1e-3,
        max_epochs,
        patience: 5,
        ..Default::default()
    }
}

fn spec(kind: ModelKind) -> ModelSpec {
    ModelSpec { kind, hidden_dim: 32, out_dim: 16, ..Default::default() }
}

fn strip_time(log: &[EpochLog]) -> Vec<EpochLog> {
    log.iter().map(|e| EpochLog { seconds: 0.0, ..e.clone() }).collect()
}

#[test]
fn loss_falls_over_the_first_five_epochs() {
    let mut mean = [0.0f64; 5];
    let seeds = [1u64, 2, 3];
    for &s in &seeds {
        let d = generate(&SynthConfig { seed: s, ..small() }).unwrap();
        let (split, feats) = prepare(&d, 0);
        let run = fit::<f32>(
            &spec(ModelKind::AlphaRec),
            &TrainData::new(&split, Some(&feats)),
            &TrainConfig { patience: 50, eval_every: 50, seed: s, ..quick(5) },
        )
        .unwrap();
        for (m, e) in mean.iter_mut().zip(&run.log) {
            *m += e.loss / seeds.len() as f64;
        }
    }
    assert!(mean.windows(2).all(|w| w[1] < w[0]), "{mean:?}");
}

#[test]
fn selected_checkpoint_has_the_best_validation_recall() {
    let d = generate(&small()).unwrap();
    let (split, feats) = prepare(&d, 0);
    let run = fit::<f32>(&spec(ModelKind::Probe), &TrainData::new(&split, Some(&feats)), &quick(60)).unwrap();
    let best = run.best_val_recall.unwrap();
    for e in &run.log {
        assert!(e.recall20_val.unwrap() <= best);
    }
    assert_eq!(run.log[run.best_epoch - 1].recall20_val, Some(best));
    if run.stopped_early {
        assert_eq!(run.log.len(), run.best_epoch + 5);
    }
}

#[test]
fn repeated_fits_are_identical_across_thread_counts() {
    let d = generate(&small()).unwrap();
    let (split, feats) = prepare(&d, 0);
    let data = TrainData::new(&split, Some(&feats));
    let run_with = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit::<f32>(&spec(ModelKind::AlphaRec), &data, &quick(4)).unwrap())
    };
    let a = run_with(1);
    let b = run_with(3);
    assert_eq!(checkpoint_bytes(&a.model), checkpoint_bytes(&b.model));
    assert_eq!(log_to_jsonl(&strip_time(&a.log)), log_to_jsonl(&strip_time(&b.log)));
}

#[test]
fn id_and_bpr_variants_train() {
    let d = generate(&small()).unwrap();
    let (split, feats) = prepare(&d, 0);
    let data = TrainData::new(&split, Some(&feats));
    let cfg = TrainConfig { loss: alpharec::train::LossKind::Bpr, layers: 0, ..quick(3) };
    let run = fit::<f32>(&spec(ModelKind::Id), &data, &cfg).unwrap();
    assert!(run.log.iter().all(|e| e.loss.is_finite()));
}

#[test]
fn temperature_search_keeps_the_best_run() {
    let d = generate(&small()).unwrap();
    let (split, feats) = prepare(&d, 0);
    let data = TrainData::new(&split, Some(&feats));
    let grid = [0.1, 0.5];
    let (tau, best) = tune_temperature::<f32>(&spec(ModelKind::Probe), &data, &quick(5), &grid).unwrap();
    for t in grid {
        let run = fit::<f32>(&spec(ModelKind::Probe), &data, &TrainConfig { temperature: t, ..quick(5) }).unwrap();
        assert!(run.best_val_recall <= best.best_val_recall);
        if t == tau {
            assert_eq!(run.best_val_recall, best.best_val_recall);
        }
    }
}

#[test]
fn mixed_training_runs_with_both_strategies() {
    let (a, b) = make_domain_pair(&small(), 4, 5).unwrap();
    let (sa, fa) = prepare(&a, 0);
    let (sb, fb) = prepare(&b, 1);
    let mixed = merge_datasets(vec![sa, sb]).unwrap();
    let union = mixed.union_split();
    let feats = alpharec::embed::EmbeddingMatrix::concat(&[&fa, &fb]).unwrap();
    let data = TrainData {
        split: &union,
        features: Some(&feats),
        pools: NegativePools::from_mixed(&mixed),
    };
    for mix in [MixStrategy::Pooled, MixStrategy::Alternate] {
        let run = fit::<f32>(&spec(ModelKind::AlphaRec), &data, &TrainConfig { mix, ..quick(2) }).unwrap();
        assert_eq!(run.log.len(), 2);
    }
}
