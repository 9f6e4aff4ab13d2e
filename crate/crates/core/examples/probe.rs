//! Scratch probe: single-head training speed vs feature scale. Not part of
//! the test suite.

use std::time::Instant;

use hemocyte_core::eval::scene_patches;
use hemocyte_core::heads::{roc_auc, train_heads, HeadsConfig};
use hemocyte_core::synth::{generate_scene, plan_dataset, DatasetConfig};
use hemocyte_core::{CellType, FeatureExtractor, FeatureVector, LabelSet};

fn main() {
    let scale: f64 = 1.0;
    let lr: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1e-5);
    let epochs: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(20);

    let cfg = DatasetConfig::default();
    let scenes: Vec<_> = plan_dataset(&cfg).iter().take(120).map(|s| generate_scene(s).unwrap()).collect();
    let patches: Vec<_> = scenes.iter().flat_map(|s| scene_patches(s, 30)).collect();
    println!("patches: {}", patches.len());

    let extractor = FeatureExtractor::new(7);
    let raw: Vec<FeatureVector> = patches.iter().map(|p| extractor.extract_features(&p.patch).unwrap()).collect();
    let mean_abs: f64 = raw.iter().flat_map(|f| f.values().iter().map(|v| v.abs())).sum::<f64>()
        / (raw.len() * 2048) as f64;
    println!("mean |feature| = {mean_abs:.4}, scale {scale}");

    let features: Vec<FeatureVector> = raw
        .iter()
        .map(|f| FeatureVector::new(f.values().iter().map(|v| v * scale).collect()).unwrap())
        .collect();
    let labels: Vec<LabelSet> = patches.iter().map(|p| p.labels).collect();

    let t = Instant::now();
    let fit = train_heads(
        &features,
        &labels,
        &HeadsConfig { epochs, batch_size: 8, learning_rate: lr, seed: 23, ..HeadsConfig::default() },
    )
    .unwrap();
    println!("trained {epochs} epochs in {:?}", t.elapsed());
    for ct in CellType::ALL {
        let scores: Vec<f64> = features.iter().map(|f| fit.heads[ct.index()].prob(f.values())).collect();
        let pos: Vec<bool> = labels.iter().map(|l| l.contains(ct)).collect();
        let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s_scores: Vec<f64> = scores.iter().zip(&patches).filter(|(_, p)| !p.multi).map(|(s, _)| *s).collect();
        let s_pos: Vec<bool> = pos.iter().zip(&patches).filter(|(_, p)| !p.multi).map(|(s, _)| *s).collect();
        let m_scores: Vec<f64> = scores.iter().zip(&patches).filter(|(_, p)| p.multi).map(|(s, _)| *s).collect();
        let m_pos: Vec<bool> = pos.iter().zip(&patches).filter(|(_, p)| p.multi).map(|(s, _)| *s).collect();
        println!(
            "{:>17}: train auc {:.4} (single {:.4}, multi {:.4})  prob range [{:.3}, {:.3}]",
            ct.name(),
            roc_auc(&scores, &pos).unwrap(),
            roc_auc(&s_scores, &s_pos).map(|v| v).unwrap_or(f64::NAN),
            roc_auc(&m_scores, &m_pos).map(|v| v).unwrap_or(f64::NAN),
            lo,
            hi
        );
    }
}
