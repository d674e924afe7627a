//! Replays the run-config and point-list fuzz corpora plus byte mutations.

use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use sigrf_cli::config::RunConfig;
use sigrf_cli::points::{parse_point_list, MAX_POINT_DIM};

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty());
    files.into_iter().map(|p| fs::read(p).unwrap()).collect()
}

fn run_config(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else { return false };
    match RunConfig::from_json(text) {
        Ok(cfg) => {
            let json = serde_json::to_string(&cfg).unwrap();
            assert_eq!(RunConfig::from_json(&json).unwrap(), cfg);
            true
        }
        Err(_) => false,
    }
}

fn point_list(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else { return false };
    match parse_point_list(text) {
        Ok(points) => {
            let d = points[0].len();
            assert!((1..=MAX_POINT_DIM).contains(&d));
            assert!(points.iter().all(|p| p.len() == d && p.iter().all(|x| x.is_finite())));
            true
        }
        Err(_) => false,
    }
}

#[test]
fn corpora_replay() {
    let ok = corpus("run_config").iter().filter(|s| run_config(s)).count();
    assert_eq!(ok, 6);
    let ok = corpus("point_list").iter().filter(|s| point_list(s)).count();
    assert_eq!(ok, 2);
}

fn mutate(seed: &[u8], edits: &[(usize, u8, u8)]) -> Vec<u8> {
    let mut v = seed.to_vec();
    for &(pos, byte, op) in edits {
        if v.is_empty() {
            v.push(byte);
            continue;
        }
        let i = pos % v.len();
        match op % 3 {
            0 => v[i] = byte,
            1 => v.insert(i, byte),
            _ => {
                v.remove(i);
            }
        }
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn mutated_configs_never_panic(k in any::<usize>(), edits in prop::collection::vec(any::<(usize, u8, u8)>(), 0..6)) {
        let seeds = corpus("run_config");
        run_config(&mutate(&seeds[k % seeds.len()], &edits));
    }

    #[test]
    fn mutated_point_lists_never_panic(k in any::<usize>(), edits in prop::collection::vec(any::<(usize, u8, u8)>(), 0..6)) {
        let seeds = corpus("point_list");
        point_list(&mutate(&seeds[k % seeds.len()], &edits));
    }
}
