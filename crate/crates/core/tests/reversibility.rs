mod common;

#[test]
fn path_weights_are_reversible() {
    for (lo, hi) in [("0/1", "1/1"), ("0/1", "1/3"), ("-1/2", "2/1"), ("-1/0", "1/0")] {
        let spec = common::wedge(lo, hi);
        let t = common::reversibility(&spec, 5.0, 6);
        assert!(t.paths > 0);
        assert_eq!(t.violations, 0, "{lo}..{hi}: {} of {} paths", t.violations, t.paths);
    }
}
