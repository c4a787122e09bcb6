//! Property tests over the data transformations: round trips, photo
//! consistency, and interpolation exactness.

use lf_core::data::{
    assemble_dense, chroma_angular_upsample, decode_sai_grid, extract_sparse, make_pattern,
    rgb_to_ycbcr, synth_lf, ycbcr_to_rgb, ColorSpace, GridLayout, LightField, Plane, Task,
    ViewPattern,
};
use lf_core::tensor::{Mode, ModeTensor};
use proptest::prelude::*;

fn small_tensor() -> impl Strategy<Value = ModeTensor<f64>> {
    (1usize..=3, 1usize..=3, 1usize..=4, 1usize..=4, 1usize..=3).prop_flat_map(
        |(u, v, w, h, c)| {
            proptest::collection::vec(-10.0f64..10.0, u * v * w * h * c).prop_map(
                move |data| ModeTensor::new(u, v, w, h, c, data).unwrap(),
            )
        },
    )
}

fn mode_walk() -> impl Strategy<Value = Vec<Mode>> {
    proptest::collection::vec(
        prop_oneof![
            Just(Mode::Native4d),
            Just(Mode::Spatial),
            Just(Mode::Angular)
        ],
        0..6,
    )
}

proptest! {
    #[test]
    fn reshape_walks_never_change_values(t in small_tensor(), walk in mode_walk()) {
        let mut current = t.clone();
        for mode in walk {
            current = current.reshape_mode(mode);
            prop_assert_eq!(current.data(), t.data());
        }
        let back = current.reshape_mode(Mode::Native4d);
        prop_assert_eq!(back.data(), t.data());
    }

    #[test]
    fn color_round_trip(values in proptest::collection::vec(0.0f32..=1.0, 3 * 12)) {
        let lf = LightField::new(1, 1, 4, 3, ColorSpace::Rgb, values).unwrap();
        let back = ycbcr_to_rgb(&rgb_to_ycbcr(&lf).unwrap()).unwrap();
        for (a, b) in lf.data.iter().zip(&back.data) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_decode_inverts_encode(
        rows in 1usize..=3,
        cols in 1usize..=3,
        vw in 1usize..=4,
        vh in 1usize..=4,
        seed in 0u64..1000,
        interleaved in proptest::bool::ANY,
    ) {
        let mut lf = LightField::zeros(rows, cols, vw, vh, ColorSpace::YOnly);
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        for v in lf.data.iter_mut() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            *v = (state >> 40) as f32 / (1u64 << 24) as f32;
        }
        // encode oracle: place each view where the layout says its samples live
        let (iw, ih) = (cols * vw, rows * vh);
        let mut img = Plane::zeros(iw, ih, 1);
        let layout = if interleaved { GridLayout::Interleaved } else { GridLayout::Tiled };
        for r in 0..rows {
            for c in 0..cols {
                for x in 0..vw {
                    for y in 0..vh {
                        let (ix, iy) = match layout {
                            GridLayout::Tiled => (c * vw + x, r * vh + y),
                            GridLayout::Interleaved => (x * cols + c, y * rows + r),
                        };
                        img.set(ix, iy, 0, lf.get(r, c, x, y, 0));
                    }
                }
            }
        }
        let decoded = decode_sai_grid(&img, rows, cols, layout).unwrap();
        prop_assert_eq!(decoded, lf);
    }

    #[test]
    fn extract_assemble_round_trip_on_random_fields(seed in 0u64..500, task in prop_oneof![Just(Task::From2x2To8x8), Just(Task::From3x3To9x9)]) {
        let pattern = make_pattern(task);
        let mut lf = LightField::zeros(pattern.rows, pattern.cols, 3, 3, ColorSpace::YOnly);
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        for v in lf.data.iter_mut() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            *v = (state >> 40) as f32 / (1u64 << 24) as f32;
        }
        let (input, targets) = extract_sparse(&lf, &pattern).unwrap();
        let back = assemble_dense(&input, &targets, &pattern).unwrap();
        prop_assert_eq!(back, lf);
    }

    #[test]
    fn photo_consistency_for_integer_disparity(
        d in 0i32..=2,
        rows in 2usize..=4,
        cols in 2usize..=4,
        seed in 0u64..200,
    ) {
        let mut tex = Plane::zeros(40, 40, 1);
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        for v in tex.data.iter_mut() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            *v = (state >> 40) as f32 / (1u64 << 24) as f32;
        }
        let lf = synth_lf(&tex, d as f64, rows, cols, 8, 8).unwrap();
        // view(r, c)[x, y] == view(r', c')[x + d (c - c'), y + d (r - r')]
        for r in 0..rows {
            for c in 0..cols {
                for r2 in 0..rows {
                    for c2 in 0..cols {
                        for x in 0..8 {
                            for y in 0..8 {
                                let dx = x as i64 + d as i64 * (c as i64 - c2 as i64);
                                let dy = y as i64 + d as i64 * (r as i64 - r2 as i64);
                                if (0..8).contains(&dx) && (0..8).contains(&dy) {
                                    prop_assert_eq!(
                                        lf.get(r, c, x, y, 0),
                                        lf.get(r2, c2, dx as usize, dy as usize, 0)
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn chroma_interpolation_is_exact_at_nodes(seed in 0u64..300) {
        let pattern = make_pattern(Task::From3x3To9x9);
        let mut planes = Vec::new();
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        for _ in 0..9 {
            let mut p = Plane::zeros(3, 3, 2);
            for v in p.data.iter_mut() {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                *v = (state >> 40) as f32 / (1u64 << 24) as f32;
            }
            planes.push(p);
        }
        let dense = chroma_angular_upsample(&planes, &pattern).unwrap();
        prop_assert_eq!(dense.len(), 81);
        for (i, &(r, c)) in pattern.inputs.iter().enumerate() {
            prop_assert_eq!(&dense[r * 9 + c], &planes[i]);
        }
    }
}

#[test]
fn custom_pattern_validation() {
    assert!(ViewPattern::from_lattice(8, 8, &[0, 9], &[0, 7]).is_err());
    assert!(ViewPattern::from_lattice(8, 8, &[], &[0]).is_err());
    let p = ViewPattern::from_lattice(4, 4, &[0, 3], &[0, 3]).unwrap();
    assert_eq!(p.n_out(), 12);
}
