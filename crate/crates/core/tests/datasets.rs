use std::io::Write;

use abelnet::beliefnet::BeliefNet;
use abelnet::container::{load_checkpoint, load_model, save_checkpoint, save_model, Checkpoint, ModelBundle};
use abelnet::datasets::{load_digits_csv, load_idx, load_spikes_csv, synth_spikes, DIGITS_THRESHOLD};
use abelnet::discriminator::{Head, MlpDiscriminator};
use abelnet::metrics::pearson;
use abelnet::numcore::RngStream;
use abelnet::optim::{OptimizerKind, OptimizerState};
use abelnet::Error;

fn file_with(bytes: &[u8]) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(bytes).unwrap();
    f
}

#[test]
fn idx_from_disk() {
    let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
    bytes.extend((0..1568).map(|i| (i % 256) as u8));
    let f = file_with(&bytes);
    let t = load_idx(f.path()).unwrap();
    assert_eq!(t.shape, vec![2, 28, 28]);
    assert_eq!(t.data.len(), 1568);

    bytes.truncate(100);
    let f = file_with(&bytes);
    assert!(matches!(load_idx(f.path()), Err(Error::Idx { .. })));
    assert!(matches!(load_idx("/nonexistent/idx"), Err(Error::Io { .. })));
}

#[test]
fn digits_from_disk() {
    let row: Vec<String> = (0..64).map(|i| (i % 17).to_string()).chain(["7".to_string()]).collect();
    let text = format!("{}\n{}\n", row.join(","), row.join(","));
    let f = file_with(text.as_bytes());
    let ds = load_digits_csv(f.path(), DIGITS_THRESHOLD).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.labels().unwrap(), &[7, 7]);
    let expected = (0..64).filter(|i| i % 17 > 8).count();
    assert_eq!(ds.samples()[0].count_ones(), expected);
}

#[test]
fn reference_digits_file() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/digits.csv");
    let ds = load_digits_csv(path, DIGITS_THRESHOLD).unwrap();
    assert_eq!(ds.len(), 1797);
    assert_eq!(ds.width(), 64);
    let labels = ds.labels().unwrap();
    assert!(labels.iter().all(|&l| l <= 9));
    assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 178);
}

#[test]
fn spikes_from_disk() {
    let f = file_with(b"1,0,0\n0,1,0\n0,0,0\n");
    let s = load_spikes_csv(f.path()).unwrap();
    assert_eq!((s.frames(), s.neurons()), (3, 3));
    let f = file_with(b"");
    assert!(load_spikes_csv(f.path()).is_err());
}

#[test]
fn synthetic_rates_concentrate() {
    let s = synth_spikes(50, 100_000, 0.01, 0.0, 3).unwrap();
    for r in s.firing_rates() {
        assert!((r - 0.01).abs() <= 0.002, "rate {r}");
    }
}

#[test]
fn shared_drive_correlates_neurons() {
    let s = synth_spikes(10, 50_000, 0.02, 0.05, 4).unwrap();
    let independent = synth_spikes(10, 50_000, 0.02, 0.0, 4).unwrap();
    assert!(s.mean_pairwise_correlation() > 0.05);
    assert!(independent.mean_pairwise_correlation().abs() < 0.01);
    // Cross-check one pair against a direct computation.
    let col = |j: usize| -> Vec<f64> { s.spikes().iter().map(|f| f.get(j) as u8 as f64).collect() };
    let (a, b) = (col(0), col(1));
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    let direct = cov / (va * vb).sqrt();
    assert!((pearson(&a, &b).unwrap() - direct).abs() < 1e-12);
    assert!(direct > 0.0);
}

#[test]
fn model_and_checkpoint_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(2, 0);
    let net = BeliefNet::dense(&[5, 6, 4], &mut rng).unwrap();
    let disc = MlpDiscriminator::random(&[4, 8, 1], Head::Sigmoid, &mut rng).unwrap();
    let bundle = ModelBundle {
        net: net.clone(),
        disc: Some(disc.clone()),
    };
    let path = dir.path().join("model.bin");
    save_model(&path, &bundle).unwrap();
    assert_eq!(load_model(&path).unwrap(), bundle);

    let ck = Checkpoint {
        gen_opt: OptimizerState::for_params(OptimizerKind::Adam, &net),
        disc_opt: OptimizerState::for_params(OptimizerKind::Sgd, &disc),
        net,
        disc,
        t: 12,
    };
    let path = dir.path().join("ck.bin");
    save_checkpoint(&path, &ck).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ck);
    assert!(load_checkpoint(dir.path().join("model.bin")).is_err());
}
