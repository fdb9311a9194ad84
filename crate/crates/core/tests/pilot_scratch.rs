// temporary calibration pilot; removed before release
use causalpanel::discovery::{run_pcmci, DiscoveryConfig};
use causalpanel::synth::{builtin_topcat_like, generate};
use std::collections::BTreeSet;
use std::time::Instant;

#[test]
#[ignore]
fn pilot_precision_recall() {
    let spec = builtin_topcat_like();
    let config = DiscoveryConfig::default();
    let knowledge = spec.tier_knowledge();
    let mut precs = Vec::new();
    let mut recs = Vec::new();
    for seed in 0..3u64 {
        let t0 = Instant::now();
        let (panel, truth) = generate(&spec, seed).unwrap();
        let graph = run_pcmci(&panel, &knowledge, &config).unwrap();
        let found: BTreeSet<_> = graph.edge_keys().cloned().collect();
        let real: BTreeSet<_> = truth.edge_keys().cloned().collect();
        let tp = found.intersection(&real).count();
        let precision = tp as f64 / found.len() as f64;
        let recall = tp as f64 / real.len() as f64;
        println!(
            "seed {seed}: {} found, {} true, tp {tp}, precision {precision:.3}, recall {recall:.3}, {:?}",
            found.len(),
            real.len(),
            t0.elapsed()
        );
        println!("  false positives:");
        for k in found.difference(&real) {
            let a = graph.annotation(k).unwrap();
            println!("    {:?} score {:.4} p {:.2e}", k, a.score, a.p_value);
        }
        println!("  misses:");
        for k in real.difference(&found) {
            println!("    {k:?}");
        }
        precs.push(precision);
        recs.push(recall);
    }
    println!(
        "mean precision {:.3}, mean recall {:.3}",
        precs.iter().sum::<f64>() / precs.len() as f64,
        recs.iter().sum::<f64>() / recs.len() as f64
    );
}

#[test]
#[ignore]
fn pilot_regional_signs() {
    let spec = builtin_topcat_like();
    let config = DiscoveryConfig::default();
    let knowledge = spec.tier_knowledge();
    for seed in 0..5u64 {
        let (panel, _) = generate(&spec, seed).unwrap();
        let (west, east) = causalpanel::panel::split_by_region(&panel).unwrap();
        let gw = run_pcmci(&west, &knowledge, &config).unwrap();
        let ge = run_pcmci(&east, &knowledge, &config).unwrap();
        let key = (
            "treatment".to_string(),
            1,
            "Outcome death".to_string(),
        );
        println!(
            "seed {seed}: west {:?} east {:?}",
            gw.annotation(&key).map(|a| (a.score, a.p_value)),
            ge.annotation(&key).map(|a| (a.score, a.p_value)),
        );
    }
}
