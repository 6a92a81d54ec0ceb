use bondforest_bench::{dataset, default_dataset, forest};

#[test]
fn fixtures_are_deterministic() {
    let a = dataset(200);
    let b = dataset(200);
    assert_eq!(a.fingerprint(), b.fingerprint());
    assert_eq!(default_dataset().n_rows(), 934);
    assert_eq!(forest(&a, 5).to_json().unwrap(), forest(&b, 5).to_json().unwrap());
}
