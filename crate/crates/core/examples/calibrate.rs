//! Scratch calibration run for picking pipeline defaults. Not part of the
//! test suite.

use std::time::Instant;

use hemocyte_core::eval::{
    evaluate_detector, run_experiment, scene_patches, ExperimentConfig, ExperimentId,
};
use hemocyte_core::gbm::labelset_is_abnormal;
use hemocyte_core::heads::HeadsConfig;
use hemocyte_core::synth::{generate_scene, plan_dataset, DatasetConfig};
use hemocyte_core::{train_detector, DetectorConfig, FeatureExtractor};

fn main() {
    let epochs: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(12);

    let t0 = Instant::now();
    let cfg = DatasetConfig::default();
    let scenes: Vec<_> = plan_dataset(&cfg)
        .iter()
        .map(|s| generate_scene(s).unwrap())
        .collect();
    println!("scenes: {} in {:?}", scenes.len(), t0.elapsed());

    let t1 = Instant::now();
    let patches: Vec<_> = scenes.iter().flat_map(|s| scene_patches(s, 30)).collect();
    let single = patches.iter().filter(|p| !p.multi).count();
    let multi = patches.len() - single;
    let abnormal = patches
        .iter()
        .filter(|p| labelset_is_abnormal(p.labels))
        .count();
    println!(
        "patches: {} ({} single, {} multi), abnormal rate {:.3}, ratio {:.4} (target {:.4}), in {:?}",
        patches.len(),
        single,
        multi,
        abnormal as f64 / patches.len() as f64,
        single as f64 / multi as f64,
        1080.0 / 1389.0,
        t1.elapsed()
    );
    for t in hemocyte_core::CellType::ALL {
        let pos = patches.iter().filter(|p| p.labels.contains(t)).count();
        print!("{}={} ", t.name(), pos);
    }
    println!();

    let extractor = FeatureExtractor::new(7);
    let ecfg = ExperimentConfig {
        folds: 5,
        fold_seed: 5,
        heads: HeadsConfig { epochs, batch_size: 8, seed: 23, ..HeadsConfig::default() },
        ..ExperimentConfig::default()
    };

    for id in [ExperimentId::ModelA, ExperimentId::ModelAStar, ExperimentId::ModelB] {
        let t = Instant::now();
        let report = run_experiment(id, &patches, &extractor, &ecfg).unwrap();
        println!(
            "{}: exact_match {:.4} gbm {:?} in {:?}",
            id.name(),
            report.mean_exact_match,
            report.mean_gbm_accuracy,
            t.elapsed()
        );
        print!("  auc:");
        for t in hemocyte_core::CellType::ALL {
            match report.mean_auc[t.index()] {
                Some(v) => print!(" {:.4}", v),
                None => print!(" none"),
            }
        }
        println!();
        let min_fold_auc: f64 = report
            .per_fold
            .iter()
            .flat_map(|f| f.auc.iter().filter_map(|a| *a))
            .fold(f64::INFINITY, f64::min);
        let undefined = report
            .per_fold
            .iter()
            .flat_map(|f| f.auc.iter())
            .filter(|a| a.is_none())
            .count();
        println!("  min fold auc {min_fold_auc:.4}, undefined cells {undefined}");
    }

    let t2 = Instant::now();
    let train_refs: Vec<_> = scenes[..100].iter().map(|s| (&s.image, &s.mask)).collect();
    let det = train_detector(&train_refs, &DetectorConfig { seed: 11, ..DetectorConfig::default() }).unwrap();
    println!("detector trained in {:?}", t2.elapsed());
    let t3 = Instant::now();
    let eval_refs: Vec<_> = scenes[scenes.len() - 30..]
        .iter()
        .map(|s| (&s.image, &s.mask))
        .collect();
    let det_eval = evaluate_detector(&det, &eval_refs, 0.5).unwrap();
    println!("detector AP {:.4} in {:?}", det_eval.ap, t3.elapsed());
    let (tp, fp, fn_) = det_eval.per_scene.iter().fold((0, 0, 0), |acc, s| {
        (
            acc.0 + s.true_positives,
            acc.1 + s.false_positives,
            acc.2 + s.false_negatives,
        )
    });
    println!("detector totals: tp {tp} fp {fp} fn {fn_}");
    println!("total {:?}", t0.elapsed());
}
