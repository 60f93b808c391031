mod common;

use lumistack_core::optics::{label_depths, LensGeometry};
use lumistack_core::render::{extended_focus, refocus};
use lumistack_core::tomography::{
    backproject_row, backproject_row_logged, reconstruct_slab, slopes_from_depths,
};
use lumistack_core::{CaptureMeta, DepthMap, FocalStack, FocusMap, Image};
use proptest::prelude::*;

const DEPTH_CHOICES: [f64; 5] = [0.3, 0.45, 0.7, 1.2, 4.0];

type ScanlineCase = (usize, usize, Vec<f64>, Vec<u16>, Vec<Vec<f32>>, f64);

fn scanline_case() -> impl Strategy<Value = ScanlineCase> {
    (1usize..20, 0usize..5, 1usize..5, 0.5f64..40.0).prop_flat_map(|(w, half_u, k, a)| {
        (
            Just(w),
            Just(2 * half_u + 1),
            prop::collection::vec(prop::sample::select(DEPTH_CHOICES.to_vec()), k),
            prop::collection::vec(1..=k as u16, w),
            prop::collection::vec(prop::collection::vec(0.0f32..1.0, w), k),
            Just(a),
        )
    })
}

proptest! {
    #[test]
    fn scatter_matches_gather_oracle((_w, u_n, depths, labels, rows, a) in scanline_case()) {
        let f = 0.05;
        let plan = slopes_from_depths(&depths, f, a).unwrap();
        let reference = depths.iter().cloned().fold(f64::MIN, f64::max);
        let slopes: Vec<f64> = depths.iter().map(|&d| a * common::alpha_route_angle(f, reference, d).tan()).collect();
        for (l, s) in slopes.iter().enumerate() {
            let planned = plan.label_slope(l as u16 + 1).unwrap();
            prop_assert!((planned - s).abs() <= 1e-9 * s.abs().max(1.0));
        }
        // paint with the planned slopes so both sides round identical positions
        let planned: Vec<f64> = (1..=depths.len() as u16).map(|l| plan.label_slope(l).unwrap()).collect();
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let epi = backproject_row(&refs, &labels, &plan, u_n, 1).unwrap();
        let expect = common::gather_painter(&rows, &labels, &depths, &planned, u_n);
        prop_assert!(epi.fully_written());
        prop_assert_eq!(epi.data(), expect.as_slice());
    }

    #[test]
    fn nearest_splat_wins((w, u_n, depths, labels, rows, a) in scanline_case()) {
        let plan = slopes_from_depths(&depths, 0.05, a).unwrap();
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let mut log = Vec::new();
        let epi = backproject_row_logged(&refs, &labels, &plan, u_n, 1, Some(&mut log)).unwrap();
        prop_assert!(log.windows(2).all(|p| p[0].entry <= p[1].entry));
        let half = (u_n / 2) as i32;
        for ev in &log {
            let final_depth = plan.entries()[epi.owner(ev.x, ev.u) as usize - 1].depth_m;
            prop_assert!(final_depth <= plan.entries()[ev.entry].depth_m);
        }
        for u in -half..=half {
            for x in 0..w {
                prop_assert!(epi.is_written(x, u));
            }
        }
    }

    #[test]
    fn stack_order_does_not_change_the_slab(seed in 0u64..1000) {
        let (w, h) = (9, 3);
        let depths = [0.4, 1.5, 0.8];
        let images: Vec<Image> = (0..3)
            .map(|k| Image::from_fn(w, h, 1, |x, y, _| lumistack_core::synth::hash_noise(x as u64, y as u64, seed * 3 + k)).unwrap())
            .collect();
        let labels: Vec<u16> = (0..w * h).map(|p| (lumistack_core::synth::hash_noise(p as u64, 0, seed) * 3.0) as u16 + 1).collect();
        let slab_of = |perm: [usize; 3]| {
            let imgs = perm.iter().map(|&i| images[i].clone()).collect();
            let meta = perm.iter().map(|&i| CaptureMeta::with_distance(depths[i], 0.05)).collect();
            let stack = FocalStack::new(imgs, meta).unwrap();
            let mut inverse = [0u16; 3];
            for (pos, &i) in perm.iter().enumerate() {
                inverse[i] = pos as u16 + 1;
            }
            let fm = FocusMap::new(w, h, 3, labels.iter().map(|&l| inverse[l as usize - 1]).collect()).unwrap();
            let dm = DepthMap::from_labels(&fm, label_depths(stack.meta(), None).unwrap()).unwrap();
            reconstruct_slab(&stack, &fm, &dm, 0.05, 6.0, 5).unwrap().data().to_vec()
        };
        let base = slab_of([0, 1, 2]);
        prop_assert_eq!(&base, &slab_of([2, 0, 1]));
        prop_assert_eq!(&base, &slab_of([1, 2, 0]));
    }
}

#[test]
fn single_aperture_sample_is_extended_focus() {
    let (w, h) = (12, 5);
    let images: Vec<Image> = (0..3)
        .map(|k| Image::from_fn(w, h, 3, |x, y, c| ((x * 3 + y * 5 + c + k * 7) % 11) as f32 / 10.0).unwrap())
        .collect();
    let meta = [0.5, 1.0, 2.0].iter().map(|&d| CaptureMeta::with_distance(d, 0.05)).collect();
    let stack = FocalStack::new(images, meta).unwrap();
    let fm = FocusMap::new(w, h, 3, (0..w * h).map(|p| (p % 7 % 3) as u16 + 1).collect()).unwrap();
    let dm = DepthMap::from_labels(&fm, vec![0.5, 1.0, 2.0]).unwrap();
    let slab = reconstruct_slab(&stack, &fm, &dm, 0.05, 25.0, 1).unwrap();
    assert_eq!(slab.data(), extended_focus(&stack, &fm).unwrap().data());
}

#[test]
fn one_sharp_image_survives_projection() {
    let img = Image::from_fn(17, 4, 1, |x, y, _| ((x * x + y) % 13) as f32 / 12.0).unwrap();
    let stack = FocalStack::new(vec![img.clone()], vec![CaptureMeta::with_distance(1.0, 0.05)]).unwrap();
    let fm = FocusMap::constant(17, 4, 1, 1).unwrap();
    let dm = DepthMap::from_labels(&fm, vec![1.0]).unwrap();
    let slab = reconstruct_slab(&stack, &fm, &dm, 0.05, 3.0, 33).unwrap();
    assert_eq!(refocus(&slab, 0.0), img);
}

#[test]
fn projection_angle_zero_at_reference() {
    let g = LensGeometry::new(0.05, 0.7).unwrap();
    assert_eq!(g.parallax(0.7).unwrap(), 0.0);
}
