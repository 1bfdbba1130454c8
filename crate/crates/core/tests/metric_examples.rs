mod common;

#[test]
fn worked_examples_hold_exactly() {
    let failed: Vec<&str> = common::metric_examples().into_iter().filter(|(_, ok)| !ok).map(|(n, _)| n).collect();
    assert!(failed.is_empty(), "{failed:?}");
}
