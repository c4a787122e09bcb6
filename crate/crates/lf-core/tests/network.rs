//! Forward-pass semantics, determinism, and the parameter-count delta laws.

mod common;

use common::{assert_close, conv_oracle, random_tensor, rng};
use lf_core::net::{
    build_plan, count_macs, count_params, forward_eval, forward_taped, init_model, zero_model,
    BottleneckKernel, NetworkConfig,
};
use lf_core::tape::Tape;
use lf_core::tensor::{Activation, Mode, ModeTensor, Padding};
use rand::Rng;

fn tablefit(u0: usize, v0: usize, n_out: usize) -> NetworkConfig {
    NetworkConfig::preset("tablefit", u0, v0, n_out).unwrap()
}

#[test]
fn zero_network_outputs_zero() {
    let mut cfg = tablefit(2, 2, 7);
    cfg.n_cb = 2;
    cfg.n_s = 2;
    cfg.growth = 4;
    cfg.bottleneck_channels = 4;
    let plan = build_plan(&cfg).unwrap();
    let state = zero_model::<f64>(&cfg).unwrap();
    let x = random_tensor(&mut rng(1), 2, 2, 6, 6, 1);
    let y = forward_eval(&cfg, &plan, &state, &x, None).unwrap();
    assert_eq!((y.u, y.v, y.w, y.h, y.c), (1, 1, 6, 6, 7));
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn default_preset_output_shape_64x64() {
    let cfg = tablefit(2, 2, 60);
    let plan = build_plan(&cfg).unwrap();
    let state = init_model::<f32>(&cfg, 5).unwrap();
    let x64: ModeTensor<f32> = {
        let mut r = rng(2);
        let data = (0..2 * 2 * 64 * 64)
            .map(|_| r.random_range(0.0f32..1.0))
            .collect();
        ModeTensor::new(2, 2, 64, 64, 1, data).unwrap()
    };
    let y = forward_eval(&cfg, &plan, &state, &x64, None).unwrap();
    assert_eq!((y.u, y.v, y.w, y.h, y.c), (1, 1, 64, 64, 60));
}

#[test]
fn head_collapses_angular_extent_for_both_tasks() {
    for (u0, v0, n_out) in [(2, 2, 60), (3, 3, 72)] {
        let mut cfg = tablefit(u0, v0, n_out);
        cfg.n_cb = 1;
        cfg.n_s = 1;
        cfg.growth = 2;
        cfg.bottleneck_channels = 2;
        let plan = build_plan(&cfg).unwrap();
        let state = init_model::<f64>(&cfg, 3).unwrap();
        let x = random_tensor(&mut rng(4), u0, v0, 5, 5, 1);
        let y = forward_eval(&cfg, &plan, &state, &x, None).unwrap();
        assert_eq!((y.u, y.v, y.c), (1, 1, n_out));
    }
}

/// Linear single-block config against an explicit composition of its four
/// convolutions evaluated with the direct-summation oracle.
#[test]
fn tiny_linear_network_matches_oracle_composition() {
    let cfg = NetworkConfig {
        u0: 2,
        v0: 2,
        n_out: 3,
        n_cb: 1,
        n_s: 1,
        n_a: 1,
        growth: 1,
        connect_spatial: false,
        connect_angular: false,
        connect_image: false,
        bottleneck_kernel: BottleneckKernel::K3x3,
        bottleneck_channels: 2,
        activation: Activation::Identity,
        preset: "custom".into(),
    };
    let plan = build_plan(&cfg).unwrap();
    let state = init_model::<f64>(&cfg, 77).unwrap();
    let x = random_tensor(&mut rng(78), 2, 2, 6, 5, 1);
    let got = forward_eval(&cfg, &plan, &state, &x, None).unwrap();

    let layer = |id: &str| {
        &state
            .layers()
            .iter()
            .find(|(lid, _)| lid == id)
            .unwrap()
            .1
    };
    let s1 = conv_oracle(
        &x.reshaped(Mode::Spatial),
        layer("block1.spatial1"),
        Padding::SameZero,
    );
    let a1 = conv_oracle(
        &s1.reshaped(Mode::Angular),
        layer("block1.angular1"),
        Padding::SameZero,
    );
    let bn = conv_oracle(
        &a1.reshaped(Mode::Spatial),
        layer("bottleneck"),
        Padding::SameZero,
    );
    let head = conv_oracle(&bn.reshaped(Mode::Angular), layer("head"), Padding::Valid);
    let want = head.reshaped(Mode::Native4d);
    assert_close(&got, &want, 1e-12);
}

#[test]
fn eval_and_taped_forward_agree_bitwise() {
    let mut r = rng(91);
    for &(s, a, i) in &[
        (true, true, true),
        (false, true, true),
        (true, false, true),
        (true, true, false),
        (false, false, false),
    ] {
        let mut cfg = tablefit(2, 2, 5);
        cfg.n_cb = 2;
        cfg.n_s = 3;
        cfg.n_a = 2;
        cfg.growth = 3;
        cfg.bottleneck_channels = 4;
        cfg.connect_spatial = s;
        cfg.connect_angular = a;
        cfg.connect_image = i;
        let plan = build_plan(&cfg).unwrap();
        let state = init_model::<f64>(&cfg, 1234).unwrap();
        let x = random_tensor(&mut r, 2, 2, 5, 4, 1);

        let eval = forward_eval(&cfg, &plan, &state, &x, None).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf_tensor(x.clone());
        let fwd = forward_taped(&cfg, &plan, &state, &mut tape, xid).unwrap();
        let taped = tape.tensor(fwd.output).unwrap();
        assert_eq!(eval.data(), taped.data(), "toggles ({s},{a},{i})");
        assert!(tape.replay_matches().unwrap());
    }
}

#[test]
fn forward_is_deterministic() {
    let mut cfg = tablefit(2, 2, 6);
    cfg.n_cb = 2;
    cfg.n_s = 2;
    cfg.growth = 4;
    cfg.bottleneck_channels = 4;
    let plan = build_plan(&cfg).unwrap();
    let state = init_model::<f32>(&cfg, 42).unwrap();
    let x = {
        let mut r = rng(5);
        let data = (0..2 * 2 * 8 * 8)
            .map(|_| r.random_range(0.0f32..1.0))
            .collect();
        ModeTensor::<f32>::new(2, 2, 8, 8, 1, data).unwrap()
    };
    let y1 = forward_eval(&cfg, &plan, &state, &x, None).unwrap();
    let y2 = forward_eval(&cfg, &plan, &state, &x, None).unwrap();
    assert_eq!(y1.data(), y2.data());
}

#[test]
fn init_is_seed_deterministic() {
    let cfg = tablefit(2, 2, 60);
    let a = init_model::<f32>(&cfg, 9).unwrap();
    let b = init_model::<f32>(&cfg, 9).unwrap();
    let c = init_model::<f32>(&cfg, 10).unwrap();
    for ((_, ka), (_, kb)) in a.layers().iter().zip(b.layers()) {
        assert_eq!(ka.weights, kb.weights);
    }
    assert!(a
        .layers()
        .iter()
        .zip(c.layers())
        .any(|((_, ka), (_, kc))| ka.weights != kc.weights));
}

fn total(cfg: &NetworkConfig) -> u64 {
    count_params(cfg).unwrap().total
}

#[test]
fn ns_sweep_differences_follow_the_delta_law() {
    for kernel in [BottleneckKernel::K3x3, BottleneckKernel::K1x1] {
        let mut base = tablefit(2, 2, 60);
        base.bottleneck_kernel = kernel;
        base.bottleneck_channels = match kernel {
            BottleneckKernel::K3x3 => 32,
            BottleneckKernel::K1x1 => 96,
        };
        let at = |n_s: usize| {
            let mut cfg = base.clone();
            cfg.n_s = n_s;
            total(&cfg)
        };
        let expected = [110_784u64, 166_080, 221_376, 276_672, 331_968];
        for s in 1..=5usize {
            let diff = at(s + 1) - at(s);
            assert_eq!(diff, expected[s - 1], "n_s {s} -> {} ({:?})", s + 1, kernel);
            assert_eq!(diff, 55_296 * s as u64 + 55_488);
        }
    }
}

#[test]
fn na_sweep_increments_are_constant() {
    let at = |n_a: usize| {
        let mut cfg = tablefit(2, 2, 60);
        cfg.n_a = n_a;
        total(&cfg)
    };
    assert_eq!(at(2) - at(1), 55_488);
    assert_eq!(at(3) - at(2), 55_488);
    assert_eq!(55_488, 6 * (9 * 32 * 32 + 32));
}

#[test]
fn ncb_sweep_second_differences() {
    let at = |n_cb: usize| {
        let mut cfg = tablefit(2, 2, 60);
        cfg.n_cb = n_cb;
        total(&cfg)
    };
    let totals: Vec<u64> = (1..=7).map(at).collect();
    let first: Vec<u64> = totals.windows(2).map(|w| w[1] - w[0]).collect();
    let second: Vec<u64> = first.windows(2).map(|w| w[1] - w[0]).collect();
    for (i, d2) in second.iter().enumerate() {
        assert_eq!(*d2, 9_216, "second difference at n_cb {}", i + 3);
    }
}

#[test]
fn connection_toggle_deltas_are_additive() {
    let with = |s: bool, a: bool, i: bool| {
        let mut cfg = tablefit(2, 2, 60);
        cfg.connect_spatial = s;
        cfg.connect_angular = a;
        cfg.connect_image = i;
        total(&cfg)
    };
    let none = with(false, false, false);
    let d_s = with(true, false, false) - none;
    let d_a = with(false, true, false) - none;
    let d_i = with(false, false, true) - none;
    assert_eq!(d_i, 2_016);
    assert_eq!(d_s, 552_960);
    assert_eq!(d_a, 184_320);
    assert_eq!(with(true, true, false) - none, d_s + d_a);
    assert_eq!(with(false, true, true) - none, d_a + d_i);
    assert_eq!(with(true, false, true) - none, d_s + d_i);
    assert_eq!(with(true, true, true) - none, d_s + d_a + d_i);
    assert_eq!(with(true, true, true) - none, 739_296);
}

#[test]
fn mac_audit_matches_instrumented_forward() {
    let mut cfg = tablefit(2, 2, 8);
    cfg.n_cb = 2;
    cfg.n_s = 2;
    cfg.growth = 4;
    cfg.bottleneck_channels = 4;
    let plan = build_plan(&cfg).unwrap();
    let state = init_model::<f64>(&cfg, 6).unwrap();
    let x = random_tensor(&mut rng(7), 2, 2, 9, 11, 1);
    let mut counted = 0u128;
    forward_eval(&cfg, &plan, &state, &x, Some(&mut counted)).unwrap();
    let report = count_macs(&cfg, 9, 11).unwrap();
    assert_eq!(counted, report.total);
}
