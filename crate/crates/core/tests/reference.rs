use stokes_ocp::bench::{
    compute_reference, error_vs_reference, example3, prolong_control, restrict_control, BenchError, ReferenceSolution,
};
use stokes_ocp::ocp::PdasConfig;
use stokes_ocp::stokes::TimeGrid;

fn tiny() -> ReferenceSolution {
    let ex = example3();
    let (r, kkt) = compute_reference(&ex, 4, 4, &PdasConfig::for_beta(ex.spec.beta)).unwrap();
    assert!(r.converged && kkt.unwrap().passed);
    r
}

#[test]
fn save_load_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ref.bin");
    let r = tiny();
    r.save(&path).unwrap();
    let back = ReferenceSolution::load(&path).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.checksum(), r.checksum());

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[3] ^= 1;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(ReferenceSolution::load(&path), Err(BenchError::Checksum { .. })));
    bytes.truncate(bytes.len() - 8);
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(ReferenceSolution::load(&path), Err(BenchError::Length { .. })));
}

#[test]
fn nesting_and_transfer() {
    let r = tiny();
    assert!(r.check_nested(2, 2).is_ok());
    let msg = r.check_nested(8, 4).unwrap_err().to_string();
    assert!(msg.contains("n = 8") && msg.contains("n = 4"), "{msg}");
    assert!(r.check_nested(4, 3).is_err());

    // the reference has zero error against itself, and restriction of a
    // prolonged field is the identity
    let grid = TimeGrid::uniform(r.t_final, 4).unwrap();
    assert_eq!(error_vs_reference(4, &grid, &r.control, &r).unwrap(), 0.0);
    let coarse = restrict_control(&r.control, (4, 4), (2, 2), r.t_final).unwrap();
    let fine = prolong_control(&coarse, (2, 2), (4, 4), r.t_final).unwrap();
    let again = restrict_control(&fine, (4, 4), (2, 2), r.t_final).unwrap();
    for (a, b) in coarse.iter().zip(&again) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}
