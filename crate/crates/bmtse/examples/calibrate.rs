//! Quick learnability calibration for the synthetic task: trains the
//! compact model on the default generator and prints per-epoch
//! validation SI-SDRi plus the final test metrics.
//!
//! Usage: cargo run --release --example calibrate [epochs] [lr] [alpha_beta] [seed]

use bmtse::losses::LossWeights;
use bmtse::model::ModelConfig;
use bmtse::synth::{make_split, SynthConfig};
use bmtse::train::{evaluate_model, train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2e-3);
    let ab: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);

    let synth_cfg = SynthConfig { seed, ..SynthConfig::default() };
    let t0 = std::time::Instant::now();
    let split = make_split(&synth_cfg).unwrap();
    eprintln!(
        "dataset: {}/{}/{} trials in {:.1}s",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        t0.elapsed().as_secs_f64()
    );

    let model_cfg = ModelConfig::compact(synth_cfg.n_subjects);
    let train_cfg = TrainConfig {
        lr,
        epochs,
        seed,
        weights: LossWeights {
            alpha: ab,
            beta: ab,
            ..LossWeights::default()
        },
        ..TrainConfig::default()
    };

    let t1 = std::time::Instant::now();
    let outcome = train(&model_cfg, &train_cfg, &split).unwrap();
    let train_secs = t1.elapsed().as_secs_f64();
    eprintln!("trained {} steps in {train_secs:.1}s", outcome.log.len());

    // per-epoch loss means
    for epoch in 0..epochs {
        let rows: Vec<_> = outcome.log.iter().filter(|r| r.epoch == epoch).collect();
        let mean = |f: fn(&bmtse::train::LogRow) -> f64| {
            rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64
        };
        eprintln!(
            "epoch {epoch:2}: total {:8.3} sisdr {:8.3} sid {:5.3} aad {:5.3}",
            mean(|r| r.total),
            mean(|r| r.sisdr),
            mean(|r| r.sid),
            mean(|r| r.aad)
        );
    }
    eprintln!(
        "best val si_sdri {:.2} dB at epoch {}",
        outcome.best_val_si_sdri, outcome.best_epoch
    );

    let model = outcome.checkpoint.to_model::<f32>().unwrap();
    let report = evaluate_model(&model, &split.val, train_cfg.batch_size, false).unwrap();
    eprintln!(
        "val: si_sdri {:.2} dB, si_sdr {:.2} dB, stoi {:.3}, estoi {:.3}, sid {:.2}, aad {:.2}",
        report.si_sdri_db, report.si_sdr_db, report.stoi, report.estoi, report.sid_acc, report.aad_acc
    );
    eprintln!("total wall time {:.1}s", t0.elapsed().as_secs_f64());
}
