use std::collections::BTreeSet;
use std::path::PathBuf;

use mcce::concepts::{Dataset, OutputSpace};
use mcce::evaluation::icace;
use mcce::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn load(samples: &str, pairs: Option<&str>) -> mcce::Result<Dataset> {
    Dataset::load(
        &fixture("schema.json"),
        &fixture(samples),
        pairs.map(fixture).as_deref(),
    )
}

#[test]
fn three_samples_one_pair() {
    let ds = load("samples.jsonl", Some("pairs.jsonl")).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.pairs().len(), 1);
    assert_eq!(ds.embedding_dim(), 3);
    assert_eq!(ds.output_dim(), 2);
    assert_eq!(ds.visible_width(), 5);
    assert_eq!(icace(&ds.pairs()[0], &ds).unwrap(), vec![-1.0, 2.0]);
}

#[test]
fn dangling_pair_names_the_id() {
    let err = load("samples.jsonl", Some("pairs_dangling.jsonl")).unwrap_err();
    assert!(matches!(&err, Error::DanglingId(id) if id == "r9"), "{err}");
    assert!(err.to_string().contains("r9"));
}

#[test]
fn ragged_embedding_is_refused() {
    let err = load("samples_ragged.jsonl", None).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("samples_ragged.jsonl:2"), "{msg}");
    assert!(msg.contains("ragged"), "{msg}");
}

#[test]
fn unknown_level_reports_line() {
    let err = load("samples_bad_level.jsonl", None).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains(":2:") && msg.contains("superb"), "{msg}");
}

#[test]
fn write_then_load_is_bit_identical() {
    let ds = load("samples.jsonl", Some("pairs.jsonl")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (s, m, p) = (dir.path().join("s.json"), dir.path().join("m.jsonl"), dir.path().join("p.jsonl"));
    ds.write(&s, &m, &p).unwrap();
    let again = Dataset::load(&s, &m, Some(&p)).unwrap();
    assert_eq!(again.samples(), ds.samples());
    assert_eq!(again.pairs(), ds.pairs());
    for (a, b) in again.samples().iter().zip(ds.samples()) {
        assert_eq!(ds.encode_sample(a).unwrap(), ds.encode_sample(b).unwrap());
    }
}

#[test]
fn masking_and_space_views_leave_data_alone() {
    let ds = load("samples.jsonl", Some("pairs.jsonl")).unwrap();
    let hidden: BTreeSet<String> = ["food".to_string()].into();
    let masked = ds.mask(&hidden).unwrap();
    assert_eq!(masked.visible_width(), 2);
    assert_eq!(masked.samples(), ds.samples());
    assert!(matches!(masked.label(&ds.samples()[0], "food"), Err(Error::HiddenAttribute(_))));

    let prob = ds.in_space(OutputSpace::Probability).unwrap();
    for s in prob.samples() {
        assert!((s.output.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(prob.in_space(OutputSpace::Logit).is_err());
}
