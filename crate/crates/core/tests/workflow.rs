//! End-to-end flows through the public API, with every hand-off going
//! through files the way the CLI does: synthesize → write artifacts →
//! read back → train → checkpoint → predict → score.

use pulseforge_core::model::{
    read_checkpoint, write_checkpoint, ModelCheckpoint, StFormerConfig, StFormerParams,
};
use pulseforge_core::mstmap::{build_mstmap, read_mstmap, sliding_windows, write_mstmap, WindowSpec};
use pulseforge_core::pipeline::{
    evaluate, predict_hr, pretrain_selfsup, read_eval_report, write_eval_report, HrPrediction,
    PredictConfig, PredictInput, PredictMode, TrainConfig,
};
use pulseforge_core::signal::{read_waveform_csv, write_waveform_csv};
use pulseforge_core::synth::{
    gen_pulse, gen_roi_stats, read_manifest, write_manifest, ManifestRow, SynthSpec,
};
use pulseforge_core::loss::LossConfig;

#[test]
fn baseline_workflow_survives_a_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let hrs = [55.0, 72.0, 96.0, 120.0];

    // Synthesize and persist one map + ground-truth waveform per sample.
    let mut manifest = Vec::new();
    for (i, &hr) in hrs.iter().enumerate() {
        let spec = SynthSpec {
            hr_bpm: hr,
            duration_s: 12.0,
            snr_db: 20.0,
            seed: i as u64,
            ..SynthSpec::default()
        };
        let stats = gen_roi_stats(&spec, 3).unwrap();
        let map = build_mstmap(&stats, spec.fs).unwrap();
        let map_path = dir.path().join(format!("s{i}.mstm"));
        write_mstmap(&map, &map_path).unwrap();
        let pulse = gen_pulse(&spec).unwrap();
        write_waveform_csv(&pulse.waveform, &dir.path().join(format!("s{i}.gt.csv"))).unwrap();
        manifest.push(ManifestRow {
            sample_id: format!("s{i}"),
            path: format!("s{i}.mstm"),
            hr_bpm: hr,
            fs: spec.fs,
            duration_s: spec.duration_s,
            seed: i as u64,
        });
    }
    let manifest_path = dir.path().join("manifest.csv");
    write_manifest(&manifest, &manifest_path).unwrap();

    // Read everything back and predict with the model-free baseline.
    let rows = read_manifest(&manifest_path).unwrap();
    assert_eq!(rows.len(), hrs.len());
    let mut preds = Vec::new();
    let mut gt = Vec::new();
    for row in &rows {
        let map = read_mstmap(&dir.path().join(&row.path)).unwrap();
        let p = predict_hr(
            &row.sample_id,
            &PredictInput::Map(&map),
            None,
            PredictMode::Baseline,
            &PredictConfig::default(),
        )
        .unwrap();
        preds.push(p);
        gt.push((row.sample_id.clone(), row.hr_bpm));

        let wave = read_waveform_csv(&dir.path().join(format!("{}.gt.csv", row.sample_id)))
            .unwrap();
        assert_eq!(wave.len(), 360, "12 s at 30 Hz");
    }

    let report = evaluate(&preds, &gt).unwrap();
    assert!(
        report.rmse <= 3.0,
        "baseline rmse {} on clean 20 dB samples",
        report.rmse
    );

    let report_path = dir.path().join("report.csv");
    write_eval_report(&report, &report_path).unwrap();
    assert_eq!(read_eval_report(&report_path).unwrap(), report);
}

#[test]
fn pretrained_checkpoint_round_trips_into_identical_predictions() {
    let dir = tempfile::tempdir().unwrap();

    // A handful of 3-second windows from two synthetic subjects.
    let mut windows = Vec::new();
    for seed in 0..2u64 {
        let spec = SynthSpec {
            hr_bpm: 66.0 + 24.0 * seed as f64,
            duration_s: 9.0,
            snr_db: 15.0,
            seed,
            ..SynthSpec::default()
        };
        let stats = gen_roi_stats(&spec, 3).unwrap();
        let map = build_mstmap(&stats, spec.fs).unwrap();
        windows.extend(sliding_windows(&map, &WindowSpec::new(90, 60).unwrap()).unwrap());
    }
    assert_eq!(windows.len(), 8, "two maps of 270 frames at 90/60");

    let model_cfg = StFormerConfig::toy(windows[0].combos(), 90);
    let params = StFormerParams::init(&model_cfg, 3).unwrap();
    let train_cfg = TrainConfig {
        lr: 1e-3,
        batch_size: 8,
        epochs: 2,
        seed: 5,
        ..TrainConfig::default()
    };
    let (trained, trace) =
        pretrain_selfsup(&windows, params, &model_cfg, &LossConfig::default(), &train_cfg)
            .unwrap();
    assert_eq!(trace.len(), 2 * 5, "5 loss components over 2 steps");

    // Checkpoint round trip must preserve every tensor bit-for-bit.
    let ckpt_path = dir.path().join("model.rppg");
    let ckpt = ModelCheckpoint::StFormer {
        config: model_cfg.clone(),
        params: trained,
    };
    write_checkpoint(&ckpt, &ckpt_path).unwrap();
    let loaded = read_checkpoint(&ckpt_path).unwrap();

    // Same map through the original and reloaded checkpoints.
    let spec = SynthSpec {
        hr_bpm: 80.0,
        duration_s: 10.0,
        snr_db: 15.0,
        seed: 9,
        ..SynthSpec::default()
    };
    let stats = gen_roi_stats(&spec, 3).unwrap();
    let map = build_mstmap(&stats, spec.fs).unwrap();
    let cfg = PredictConfig {
        window_step: 30,
        ..PredictConfig::default()
    };
    let predict = |c: &ModelCheckpoint| -> HrPrediction {
        predict_hr("s", &PredictInput::Map(&map), Some(c), PredictMode::Solution1, &cfg).unwrap()
    };
    let a = predict(&ckpt);
    let b = predict(&loaded);
    assert_eq!(a, b, "reloaded checkpoint must predict identically");
    // (300 − 90) / 30 + 1 = 8 windows.
    assert_eq!(a.window_hrs.len(), 8);
}
