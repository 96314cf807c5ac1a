use fump::config::{MetricRadii, ScenarioConfig, TrainConfig};
use fump::datagen::{curate_longtail, generate_record, SceneRecord};
use fump::trainer::{evaluate, train};
use fump::uttd::StateMode;
use std::time::Instant;

fn main() {
    let scenario = ScenarioConfig::default();
    let records: Vec<SceneRecord> = (0..2000u64).map(|s| generate_record(s, &scenario).unwrap()).collect();
    let scenes: Vec<_> = records.iter().map(|r| r.scene().unwrap()).collect();
    let held_records: Vec<SceneRecord> = (100_000..100_300u64).map(|s| generate_record(s, &scenario).unwrap()).collect();
    let heldout: Vec<_> = held_records.iter().map(|r| r.scene().unwrap()).collect();
    let (lt_records, lt_report) = curate_longtail(&held_records, 3, 5, f64::INFINITY).unwrap();
    let longtail: Vec<_> = lt_records.iter().map(|r| r.scene().unwrap()).collect();
    println!("longtail: {} scenes, clusters {:?}, noise {}", longtail.len(), lt_report.cluster_sizes, lt_report.noise_count);
    let radii = MetricRadii::default();

    for seed in [0u64, 1] {
        let t = Instant::now();
        let mut fump_cfg = TrainConfig::default();
        fump_cfg.seed = seed;
        fump_cfg.epochs = 5;
        let fump_out = train(&fump_cfg, &scenes).unwrap();
        let mut base_cfg = fump_cfg.clone();
        base_cfg.flags.joint_motion = false;
        base_cfg.flags.use_memory = false;
        let base_out = train(&base_cfg, &scenes).unwrap();
        let f_all = evaluate(&fump_out.checkpoint, &heldout, StateMode::Predicted, false, &radii).unwrap();
        let b_all = evaluate(&base_out.checkpoint, &heldout, StateMode::Predicted, false, &radii).unwrap();
        let f_lt = evaluate(&fump_out.checkpoint, &longtail, StateMode::Predicted, false, &radii).unwrap();
        let b_lt = evaluate(&base_out.checkpoint, &longtail, StateMode::Predicted, false, &radii).unwrap();
        let rel_all = (b_all.l2.avg - f_all.l2.avg) / b_all.l2.avg;
        let rel_lt = (b_lt.l2.avg - f_lt.l2.avg) / b_lt.l2.avg;
        println!("seed {seed}: fump L2 {:.4} vs base {:.4} | lt: fump {:.4} base {:.4} | rel_all {:.3} rel_lt {:.3} | first-loss {:.1} last-loss {:.1} | {:.0}s",
            f_all.l2.avg, b_all.l2.avg, f_lt.l2.avg, b_lt.l2.avg, rel_all, rel_lt,
            fump_out.losses.first().unwrap().total, fump_out.losses.last().unwrap().total,
            t.elapsed().as_secs_f64());
    }
}
