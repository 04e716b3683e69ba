use vulnloc_demo::{contrastive, contrastive_summary, gate_summary, gates, tokenize};

#[test]
fn tokenize_returns_a_json_list() {
    assert_eq!(tokenize("a<=b && c;"), r#"["a","<=","b","&&","c",";"]"#);
    assert_eq!(tokenize(""), "[]");
}

#[test]
fn gate_histogram_counts_every_draw() {
    let s = gate_summary(0.8, 0.1, 20_000, 3).unwrap();
    assert_eq!(s.histogram.iter().sum::<usize>(), 20_000);
    assert!((s.above_half - 0.8).abs() < 0.02);
    // At low temperature the mass sits in the two end bins.
    assert!(s.histogram[0] + s.histogram[9] > 18_000);
    assert_eq!(gate_summary(0.8, 0.1, 100, 3).unwrap(), gate_summary(0.8, 0.1, 100, 3).unwrap());
    assert!(gate_summary(1.0, 0.5, 10, 0).is_err());
    assert!(gates(0.5, 0.5, 10, 1).unwrap().contains("\"histogram\""));
}

#[test]
fn contrastive_matches_the_worked_example() {
    let s = contrastive_summary(&[[1.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]], 1, 0.5, 0).unwrap();
    assert!((s.scl - 0.2539).abs() < 1e-4);
    // A single cluster makes both losses coincide.
    assert_eq!(s.scl, s.cscl);
    assert_eq!(s.clusters, vec![0, 0, 0]);
    assert!(contrastive("[[1, 0, 1], [0, 1, 1]]", 2, 0.5, 0).unwrap().contains("\"cscl\":0"));
}
