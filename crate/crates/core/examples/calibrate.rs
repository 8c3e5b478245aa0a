//! SNR sweep used to pick the signal levels of the end-to-end test suite.
//!
//! `cargo run --release --example calibrate -- <preset> <estimator> <mean> <trials> <seeds> <snr>...`
//! with preset `visual|rowcol|sequential`, estimator `toeplitz|shrinkage`,
//! mean `instant|optimistic|confidence`. Prints overall accuracy, accuracy
//! over the first five trials, and the mean confidence of correct and wrong
//! decisions for each SNR.

use umm_core::covariance::{CovarianceConfig, EstimatorKind};
use umm_core::decoder::{Decoder, DecoderConfig, MeanStrategy};
use umm_core::synth::{generate_session, SynthConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 6 {
        eprintln!("usage: calibrate <preset> <estimator> <mean> <trials> <seeds> <snr>...");
        std::process::exit(2);
    }
    let preset = match args[0].as_str() {
        "visual" => SynthConfig::visual_random,
        "rowcol" => SynthConfig::row_column,
        "sequential" => SynthConfig::sequential,
        other => panic!("unknown preset {other}"),
    };
    let kind = match args[1].as_str() {
        "toeplitz" => EstimatorKind::BlockToeplitz,
        "shrinkage" => EstimatorKind::Shrinkage,
        other => panic!("unknown estimator {other}"),
    };
    let mean_strategy = match args[2].as_str() {
        "instant" => MeanStrategy::Instant,
        "optimistic" => MeanStrategy::Optimistic,
        "confidence" => MeanStrategy::ConfidenceWeighted,
        other => panic!("unknown mean strategy {other}"),
    };
    let trials: usize = args[3].parse().unwrap();
    let seeds: u64 = args[4].parse().unwrap();
    let config = DecoderConfig {
        mean_strategy,
        covariance: CovarianceConfig {
            kind,
            ..CovarianceConfig::default()
        },
        ..DecoderConfig::default()
    };
    for snr in &args[5..] {
        let snr: f64 = snr.parse().unwrap();
        let (mut correct, mut total, mut early_correct, mut early_total) = (0, 0, 0, 0);
        let (mut c_ok, mut n_ok, mut c_bad, mut n_bad) = (0.0, 0, 0.0, 0);
        let mut flagged = 0;
        for seed in 0..seeds {
            let mut cfg = preset(seed);
            cfg.snr = snr;
            cfg.n_trials = trials;
            let mut decoder = Decoder::new(config).unwrap();
            for (i, record) in generate_session(&cfg).unwrap().iter().enumerate() {
                let d = decoder.classify(&record.trial).unwrap();
                let ok = Some(d.chosen) == record.true_symbol;
                correct += ok as usize;
                total += 1;
                if i < 5 {
                    early_correct += ok as usize;
                    early_total += 1;
                }
                if ok {
                    c_ok += d.confidence;
                    n_ok += 1;
                } else {
                    c_bad += d.confidence;
                    n_bad += 1;
                }
                flagged += d.degenerate as usize;
            }
        }
        println!(
            "snr={snr:.3} acc={:.4} first5={:.4} conf_ok={:.3} conf_wrong={:.3} flagged={flagged}",
            correct as f64 / total as f64,
            early_correct as f64 / early_total as f64,
            c_ok / n_ok.max(1) as f64,
            c_bad / n_bad.max(1) as f64,
        );
    }
}
