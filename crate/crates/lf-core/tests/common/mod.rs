//! Helpers shared by the integration suites.

use lf_core::tensor::{ConvKernel, ModeTensor, Padding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(
    rng: &mut ChaCha8Rng,
    u: usize,
    v: usize,
    w: usize,
    h: usize,
    c: usize,
) -> ModeTensor<f64> {
    let data = (0..u * v * w * h * c)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    ModeTensor::new(u, v, w, h, c, data).unwrap()
}

/// Direct-summation convolution, written from the definition. Used as the
/// independent oracle wherever a forward pass needs checking.
pub fn conv_oracle(t: &ModeTensor<f64>, k: &ConvKernel<f64>, padding: Padding) -> ModeTensor<f64> {
    let angular = k.ka_u > 1 || k.ka_v > 1;
    let (pad_u, pad_v, pad_w, pad_h);
    let (mut ou, mut ov, mut ow, mut oh);
    match padding {
        Padding::SameZero => {
            pad_u = (k.ka_u - 1) / 2;
            pad_v = (k.ka_v - 1) / 2;
            pad_w = (k.ks_w - 1) / 2;
            pad_h = (k.ks_h - 1) / 2;
            ou = t.u;
            ov = t.v;
            ow = t.w;
            oh = t.h;
        }
        Padding::Valid => {
            pad_u = 0;
            pad_v = 0;
            pad_w = 0;
            pad_h = 0;
            ou = t.u - k.ka_u + 1;
            ov = t.v - k.ka_v + 1;
            ow = t.w - k.ks_w + 1;
            oh = t.h - k.ks_h + 1;
        }
    }
    if angular {
        ow = t.w;
        oh = t.h;
    } else {
        ou = t.u;
        ov = t.v;
    }

    let mut out = ModeTensor::zeros(ou, ov, ow, oh, k.c_out).reshape_mode(t.mode);
    for u in 0..ou {
        for v in 0..ov {
            for x in 0..ow {
                for y in 0..oh {
                    for co in 0..k.c_out {
                        let mut acc = k.bias[co];
                        for au in 0..k.ka_u {
                            for av in 0..k.ka_v {
                                for kx in 0..k.ks_w {
                                    for ky in 0..k.ks_h {
                                        for ci in 0..k.c_in {
                                            let su = u as isize + au as isize - pad_u as isize;
                                            let sv = v as isize + av as isize - pad_v as isize;
                                            let sx = x as isize + kx as isize - pad_w as isize;
                                            let sy = y as isize + ky as isize - pad_h as isize;
                                            let inside = su >= 0
                                                && su < t.u as isize
                                                && sv >= 0
                                                && sv < t.v as isize
                                                && sx >= 0
                                                && sx < t.w as isize
                                                && sy >= 0
                                                && sy < t.h as isize;
                                            if inside {
                                                acc += t.get(
                                                    su as usize,
                                                    sv as usize,
                                                    sx as usize,
                                                    sy as usize,
                                                    ci,
                                                ) * k.weights
                                                    [k.widx(au, av, kx, ky, ci, co)];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        out.set(u, v, x, y, co, acc);
                    }
                }
            }
        }
    }
    out
}

pub fn assert_close(a: &ModeTensor<f64>, b: &ModeTensor<f64>, tol: f64) {
    assert_eq!((a.u, a.v, a.w, a.h, a.c), (b.u, b.v, b.w, b.h, b.c));
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        let err = (x - y).abs() / y.abs().max(1.0);
        assert!(err <= tol, "element {i}: {x} vs {y} (rel {err:.3e})");
    }
}
