//! Replays the checked-in seeds, plus cheap byte-level mutations of each, so
//! the checks run on a stable toolchain without libFuzzer.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn(&[u8]) -> bool;

const TARGETS: [(&str, Check); 7] = [
    ("vocab_file", wordbag_fuzz::vocab_file),
    ("alphabet_file", wordbag_fuzz::alphabet_file),
    ("arpa_model", wordbag_fuzz::arpa_model),
    ("dataset_jsonl", wordbag_fuzz::dataset_jsonl),
    ("pseudolabel_jsonl", wordbag_fuzz::pseudolabel_jsonl),
    ("checkpoint", wordbag_fuzz::checkpoint),
    ("config", wordbag_fuzz::config),
];

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("corpus")
        .join(target);
    let mut paths: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    paths.iter().map(|p| fs::read(p).unwrap()).collect()
}

fn mutate(r: &mut ChaCha8Rng, seed: &[u8]) -> Vec<u8> {
    let mut out = seed.to_vec();
    for _ in 0..r.gen_range(1..=4) {
        let at = r.gen_range(0..=out.len());
        match r.gen_range(0..4) {
            0 if at < out.len() => out[at] = r.gen(),
            1 if at < out.len() => {
                out.remove(at);
            }
            2 => out.insert(at, b"0 -\n:\",.e9<>"[r.gen_range(0..12)]),
            _ => out.truncate(at),
        }
    }
    out
}

#[test]
fn every_seed_parses() {
    for (name, check) in TARGETS {
        let seeds = seeds(name);
        assert!(!seeds.is_empty(), "{name}");
        for (i, seed) in seeds.iter().enumerate() {
            assert!(check(seed), "{name} seed {i} rejected");
        }
    }
}

#[test]
fn seeds_and_mutations_hold() {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    for (name, check) in TARGETS {
        for seed in seeds(name) {
            for _ in 0..300 {
                check(&mutate(&mut r, &seed));
            }
        }
    }
}
