mod common;

use vitjoint::cost::count_flops;
use vitjoint::model::{build_supernet, extract_subnet, forward, ArchConfig, ModelWeights, PresetLibrary};
use vitjoint::numerics::{OpCounter, PrecisionMode};
use vitjoint::tome::token_schedule;

use common::{paired_image, reference_logits, rng};

fn model(preset: &str, seed: u64) -> ModelWeights {
    let lib = PresetLibrary::builtin();
    let supernet = build_supernet(lib.space_of(preset).unwrap(), seed).unwrap();
    extract_subnet(&supernet, lib.arch(preset).unwrap()).unwrap()
}

fn random_image(arch: &ArchConfig, seed: u64) -> Vec<f32> {
    use rand::Rng;
    let mut r = rng(seed);
    (0..arch.image_len()).map(|_| r.random::<f32>()).collect()
}

#[test]
fn unmerged_forward_is_bit_identical_to_reference() {
    for (preset, seed) in [("toy", 1), ("fine", 2)] {
        let m = model(preset, seed);
        for i in 0..3 {
            let img = random_image(&m.arch, 10 + i);
            let out = forward(&m, &[&img], 0, PrecisionMode::Single, &mut OpCounter::disabled()).unwrap();
            let expected = reference_logits(&m, &img);
            let got = out.logits.row(0);
            assert!(
                got.iter().zip(&expected).all(|(a, b)| a.to_bits() == b.to_bits()),
                "{preset}: {got:?} vs {expected:?}"
            );
        }
    }
}

#[test]
fn token_counts_follow_schedule() {
    let m = model("toy", 3);
    let img = random_image(&m.arch, 4);
    for r in [0, 1, 2, 4, 5, 8, 12] {
        let out = forward(&m, &[&img], r, PrecisionMode::Single, &mut OpCounter::disabled()).unwrap();
        assert_eq!(
            out.trace.tokens_per_layer,
            token_schedule(m.arch.num_tokens(), m.arch.depth, r),
            "r = {r}"
        );
    }
}

#[test]
fn mac_count_equals_analytic_flops() {
    for preset in ["toy", "fine", "autof-t-toy"] {
        let m = model(preset, 5);
        let img = random_image(&m.arch, 6);
        for r in [0, 1, 2, 5, 15] {
            let mut counter = OpCounter::enabled();
            let out = forward(&m, &[&img, &img], r, PrecisionMode::Single, &mut counter).unwrap();
            let per_image = count_flops(&m.arch, r, m.arch.image_size);
            assert_eq!(out.trace.mac_count, 2 * per_image, "{preset} r = {r}");
            assert_eq!(counter.mac_count(), 2 * per_image);
        }
    }
}

#[test]
fn merging_identical_pairs_is_exact() {
    let lib = PresetLibrary::builtin();
    let space = lib.space("toy").unwrap();
    let arch = ArchConfig::uniform(32, 8, 1, 64, 2, 4, 4.0, 5);
    let mut m = extract_subnet(&build_supernet(space, 7).unwrap(), &arch).unwrap();
    let n = arch.num_tokens();
    for t in (2..n).step_by(2) {
        let prev = m.weights.pos_embed.row(t - 1).to_vec();
        m.weights.pos_embed.row_mut(t).copy_from_slice(&prev);
    }
    let mut r = rng(8);
    for _ in 0..5 {
        let img = paired_image(&arch, &mut r);
        let plain = forward(&m, &[&img], 0, PrecisionMode::Single, &mut OpCounter::disabled()).unwrap();
        let merged = forward(&m, &[&img], n / 2, PrecisionMode::Single, &mut OpCounter::disabled()).unwrap();
        assert_eq!(merged.trace.tokens_per_layer, vec![n, n / 2 + 1, n / 2 + 1]);
        let dev = plain
            .logits
            .data()
            .iter()
            .zip(merged.logits.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(dev < 1e-4, "deviation {dev}");
    }
    // Unpaired content must not survive merging unchanged.
    let img = random_image(&arch, 9);
    let plain = forward(&m, &[&img], 0, PrecisionMode::Single, &mut OpCounter::disabled()).unwrap();
    let merged = forward(&m, &[&img], n / 2, PrecisionMode::Single, &mut OpCounter::disabled()).unwrap();
    let dev = plain
        .logits
        .data()
        .iter()
        .zip(merged.logits.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(dev > 1e-4, "unpaired deviation {dev}");
}

#[test]
fn forward_is_deterministic_and_batch_independent() {
    let m = model("toy", 9);
    let a = random_image(&m.arch, 1);
    let b = random_image(&m.arch, 2);
    for p in [PrecisionMode::Single, PrecisionMode::Half] {
        let both = forward(&m, &[&a, &b], 4, p, &mut OpCounter::disabled()).unwrap();
        let only_b = forward(&m, &[&b], 4, p, &mut OpCounter::disabled()).unwrap();
        assert_eq!(both.logits.row(1), only_b.logits.row(0));
        assert_eq!(both, forward(&m, &[&a, &b], 4, p, &mut OpCounter::disabled()).unwrap());
    }
}

#[test]
fn half_precision_stays_close() {
    let m = model("toy", 11);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let img = random_image(&m.arch, 100 + i);
        let s = forward(&m, &[&img], 0, PrecisionMode::Single, &mut OpCounter::disabled()).unwrap();
        let h = forward(&m, &[&img], 0, PrecisionMode::Half, &mut OpCounter::disabled()).unwrap();
        worst = worst.max(common::relative_deviation(s.logits.row(0), h.logits.row(0)));
    }
    assert!(worst < 2e-2, "{worst}");
}

#[test]
fn rejects_bad_inputs() {
    let m = model("toy", 1);
    let empty: [&[f32]; 0] = [];
    assert!(forward(&m, &empty, 0, PrecisionMode::Single, &mut OpCounter::disabled()).is_err());
    let short = vec![0.0f32; 10];
    assert!(forward(&m, &[&short], 0, PrecisionMode::Single, &mut OpCounter::disabled()).is_err());
}
