use spectral_dns::checkpoint::{read_manifest, read_rank_file, rank_file, CheckpointError};
use spectral_dns::config::RunConfig;
use spectral_dns::driver::run;
use spectral_dns::mesh::DecompositionKind;
use spectral_dns::Error;

fn base(dir: &std::path::Path) -> RunConfig {
    RunConfig { m: 5, nu: 0.01, dt: 0.01, t_end: 0.2, diag_interval: 5, checkpoint_dir: Some(dir.to_path_buf()), ..Default::default() }
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    for (kind, ranks, p1) in [(DecompositionKind::Serial, 1, 1), (DecompositionKind::Pencil, 4, 2)] {
        let tmp = tempfile::tempdir().unwrap();
        let full = run(&RunConfig { checkpoint_dir: None, decomposition: kind, ranks, p1, ..base(tmp.path()) }).unwrap();
        let half = RunConfig { t_end: 0.1, decomposition: kind, ranks, p1, ..base(tmp.path()) };
        run(&half).unwrap();
        let manifest = read_manifest(tmp.path()).unwrap();
        assert_eq!(manifest.step, 10);
        assert_eq!(manifest.files.len(), ranks);
        let resumed = run(&RunConfig { resume: Some(tmp.path().to_path_buf()), checkpoint_dir: None, ..half.clone() }.with_end(0.2)).unwrap();
        let (a, b) = (full.last(), resumed.last());
        assert_eq!(a.step, 20);
        assert_eq!(b.step, 20);
        assert!((a.kinetic_energy - b.kinetic_energy).abs() <= 1e-12, "{kind:?}");
    }
}

trait WithEnd {
    fn with_end(self, t: f64) -> Self;
}

impl WithEnd for RunConfig {
    fn with_end(self, t_end: f64) -> Self {
        RunConfig { t_end, ..self }
    }
}

#[test]
fn written_block_roundtrips_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig { t_end: 0.02, ..base(tmp.path()) };
    run(&cfg).unwrap();
    let (h, u) = read_rank_file::<f64>(&rank_file(tmp.path(), 0)).unwrap();
    assert_eq!(h.step, 2);
    let bytes = spectral_dns::checkpoint::encode(&h, &u);
    assert_eq!(bytes, std::fs::read(rank_file(tmp.path(), 0)).unwrap());
}

#[test]
fn resume_with_wrong_size_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    run(&RunConfig { t_end: 0.01, ..base(tmp.path()) }).unwrap();
    let err = run(&RunConfig { m: 4, resume: Some(tmp.path().to_path_buf()), checkpoint_dir: None, ..base(tmp.path()) }).unwrap_err();
    assert!(matches!(err, Error::Checkpoint(CheckpointError::Mismatch(ref m)) if m.contains("N is 32")), "{err}");
}

#[test]
fn missing_checkpoint_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let err = run(&RunConfig { resume: Some(tmp.path().join("nope")), checkpoint_dir: None, ..base(tmp.path()) }).unwrap_err();
    assert!(matches!(err, Error::Checkpoint(CheckpointError::Io { .. })), "{err}");
}
