//! The bundled scene fixture and its golden segmentation.
//!
//! Set `GAPART_BLESS=1` to regenerate the fixture files.

mod common;

use gapart::grouping::{FilterParams, GroupingParams};
use gapart::io::{self, blob, ply};
use gapart::pipeline::{self, PartsDoc, ProposalsDoc};

const SEED: u64 = 7;

fn oracle_doc() -> ProposalsDoc {
    let dir = common::fixture_dir();
    let cloud = ply::read_ply(&dir.join("cloud.ply")).unwrap();
    let pred = blob::prediction_from_blob(&blob::read_blob(&dir.join("pred.bin"), &dir.join("pred.json")).unwrap()).unwrap();
    let proposals = common::oracle_segment(&cloud, &pred, &GroupingParams::default(), &FilterParams::default());
    ProposalsDoc { num_points: cloud.len(), proposals }
}

#[test]
fn bless() {
    if std::env::var_os("GAPART_BLESS").is_none() {
        return;
    }
    let dir = common::fixture_dir();
    std::fs::create_dir_all(&dir).unwrap();
    let scene = common::scene(SEED);
    common::write_scene(&dir, &scene);
    let doc = oracle_doc();
    io::write_json(&dir.join("segment_golden.json"), &doc).unwrap();
    io::write_json(&dir.join("gt_parts.json"), &common::gt_parts_for(&scene, &doc)).unwrap();
}

#[test]
fn golden_is_oracle_output() {
    let golden: ProposalsDoc = io::read_json(&common::fixture_dir().join("segment_golden.json")).unwrap();
    assert_eq!(golden, oracle_doc());
}

#[test]
fn golden_recovers_instances() {
    let scene = common::scene(SEED);
    let golden: ProposalsDoc = io::read_json(&common::fixture_dir().join("segment_golden.json")).unwrap();
    let mut sets: Vec<Vec<usize>> = golden.proposals.iter().map(|p| p.point_indices.clone()).collect();
    sets.sort();
    assert_eq!(sets, common::expected_partition(&scene, FilterParams::default().fg_thresh));
}

#[test]
fn library_segment_matches_golden() {
    let dir = common::fixture_dir();
    let cloud = ply::read_ply(&dir.join("cloud.ply")).unwrap();
    let pred = blob::prediction_from_blob(&blob::read_blob(&dir.join("pred.bin"), &dir.join("pred.json")).unwrap()).unwrap();
    let doc = pipeline::segment(&cloud, &pred, &GroupingParams::default(), &FilterParams::default()).unwrap();
    let golden: ProposalsDoc = io::read_json(&dir.join("segment_golden.json")).unwrap();
    assert_eq!(doc, golden);
}

#[test]
fn gt_parts_cover_golden() {
    let dir = common::fixture_dir();
    let parts: PartsDoc = io::read_json(&dir.join("gt_parts.json")).unwrap();
    let golden: ProposalsDoc = io::read_json(&dir.join("segment_golden.json")).unwrap();
    assert_eq!(parts.parts.len(), golden.proposals.len());
    for (part, p) in parts.parts.iter().zip(&golden.proposals) {
        assert_eq!(part.label, p.semantic_label);
    }
}
