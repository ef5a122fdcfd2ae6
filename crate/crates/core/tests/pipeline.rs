//! Generate, train, discover and score through the on-disk formats.

use uncle_core::datagen::io::{read_dataset, read_truth, write_dataset, write_truth};
use uncle_core::datagen::{gen_tvsem, GroundTruth};
use uncle_core::discovery::{dynamic_graph, read_strengths, write_strengths, PerturbationConfig, Summary};
use uncle_core::metrics::{evaluate_dynamic, EvalReport};
use uncle_core::model::{checkpoint, train, ModelConfig, Preset};

#[test]
fn tvsem_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let (data, truth) = gen_tvsem(800, 3).unwrap();
    let data_path = dir.path().join("data.csv");
    write_dataset(&data_path, &data).unwrap();
    let truth_path = write_truth(dir.path(), &truth).unwrap();
    let data = read_dataset(&data_path).unwrap();
    let truth = read_truth(&truth_path).unwrap();
    assert!(matches!(truth, GroundTruth::Dynamic(ref s) if s.len() == 2));

    let mut cfg = ModelConfig::from_preset(Preset::Tvsem, 2);
    cfg.recon_epochs = 100;
    cfg.joint_epochs = 400;
    let (model, history) = train(&data, &cfg).unwrap();
    assert_eq!(history.len(), 500);
    let ckpt = dir.path().join("model.ckpt");
    checkpoint::save(&model, &ckpt).unwrap();
    let model = checkpoint::load(&ckpt).unwrap();

    let g = dynamic_graph(&model, &data, &PerturbationConfig::default()).unwrap();
    let bin = dir.path().join("strengths.bin");
    write_strengths(&bin, &g).unwrap();
    let g2 = read_strengths(&bin).unwrap();
    assert_eq!(g, g2);

    let report = evaluate_dynamic(&g2, &truth).unwrap();
    assert!((0.0..=1.0).contains(&report.auroc));
    let back = EvalReport::from_kv(&report.to_kv()).unwrap();
    assert_eq!(back.to_kv(), report.to_kv());

    let mean = g2.summarize(Summary::Mean, None).unwrap();
    assert_eq!(mean.n(), 2);
    assert!(g2.strengths().iter().all(|&v| v >= 0.0));
}
