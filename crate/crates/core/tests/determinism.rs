mod common;

use common::Built;
use specfi::pipeline::{PipelineConfig, Variant};
use specfi::synthetic;

#[test]
fn full_runs_are_byte_identical() {
    for variant in [Variant::SpecfiDr, Variant::SpecfiCs] {
        let config = PipelineConfig { variant, base_seed: 7, ..Default::default() };
        let a = Built::new(synthetic::dataset().unwrap()).run(&config).to_json().unwrap();
        let b = Built::new(synthetic::dataset().unwrap()).run(&config).to_json().unwrap();
        assert!(a == b, "{variant} artifacts differ");
    }
}

#[test]
fn seed_changes_hypotheticals() {
    let built = Built::new(synthetic::dataset().unwrap());
    let base = PipelineConfig { variant: Variant::SpecfiDr, runs: 1, n_hypotheticals: 2, ..Default::default() };
    let a = built.run(&base);
    let b = built.run(&PipelineConfig { base_seed: 1, ..base });
    assert_ne!(a.runs[0].hypotheticals, b.runs[0].hypotheticals);
    assert_ne!(a.config_digest, b.config_digest);
}
