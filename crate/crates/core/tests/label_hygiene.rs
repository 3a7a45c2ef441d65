mod common;

use common::Built;
use specfi::pipeline::{PipelineConfig, Variant};
use specfi::synthetic;

#[test]
fn non_static_variants_ignore_train_labels() {
    let labeled = Built::new(synthetic::dataset().unwrap());
    let stripped = Built::new(synthetic::dataset().unwrap().without_train_labels());
    // The train index ids and graph are label free either way.
    assert_eq!(labeled.train.ids(), stripped.train.ids());
    for variant in Variant::ALL.into_iter().filter(|v| !v.label_dependent()) {
        let config = PipelineConfig { variant, runs: 2, n_hypotheticals: 3, ..Default::default() };
        let a = labeled.run(&config);
        let b = stripped.run(&config);
        assert_eq!(a.examples, b.examples, "{variant}");
        assert!(a.to_json().unwrap() == b.to_json().unwrap(), "{variant}");
    }
}

#[test]
fn static_variant_reads_labels() {
    let labeled = Built::new(synthetic::dataset().unwrap());
    let stripped = Built::new(synthetic::dataset().unwrap().without_train_labels());
    let config = PipelineConfig { variant: Variant::Static, runs: 1, n_hypotheticals: 2, ..Default::default() };
    let a = labeled.run(&config);
    assert!(a.label_dependent);
    assert!(!a.examples.is_empty());
    let b = stripped.run(&config);
    assert_ne!(a.examples, b.examples);
}
