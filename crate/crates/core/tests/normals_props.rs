use proptest::prelude::*;

use rangekit::normals::compute_normals;
use rangekit::projection::RangeImage;

type Pixels = Vec<Option<([f32; 3], f32)>>;

/// A bumpy surface in front of the sensor with some holes, so that both valid
/// normals and rejected neighbors occur.
fn surface(w: usize, h: usize) -> impl Strategy<Value = Pixels> {
    prop::collection::vec(
        prop::option::weighted(0.9, (prop::array::uniform3(-0.2f32..0.2), 0.0f32..1.0)),
        w * h,
    )
    .prop_map(move |noise| {
        noise
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                n.map(|(d, r)| {
                    let (u, v) = ((i % w) as f32, (i / w) as f32);
                    ([6.0 + d[0], u * 0.3 + d[1], -v * 0.3 + d[2]], r)
                })
            })
            .collect()
    })
}

fn bits(img: &rangekit::NormalImage, i: usize) -> Option<[u32; 3]> {
    img.valid()[i].then(|| img.normals()[i].map(f32::to_bits))
}

proptest! {
    #[test]
    fn change_stays_local(
        (w, h, px, wraps) in (3usize..12, 3usize..10).prop_flat_map(|(w, h)| (Just(w), Just(h), surface(w, h), any::<bool>())),
        target in any::<prop::sample::Index>(),
        moved in prop::array::uniform3(-3.0f32..3.0),
    ) {
        let before = RangeImage::from_pixels(w, h, wraps, &px).unwrap();
        let k = target.index(w * h);
        let mut changed = px.clone();
        let base = changed[k].map_or([6.0, 0.0, 0.0], |(p, _)| p);
        changed[k] = Some(([base[0] + moved[0], base[1] + moved[1], base[2] + moved[2]], 0.5));
        let after = RangeImage::from_pixels(w, h, wraps, &changed).unwrap();
        let (na, nb) = (compute_normals(&before), compute_normals(&after));
        let (u0, v0) = (k % w, k / w);
        for v in 0..h {
            for u in 0..w {
                let left = if wraps { (u0 + w - 1) % w } else { u0.wrapping_sub(1) };
                let references = (u == u0 && v == v0) || (u == left && v == v0) || (u == u0 && v + 1 == v0);
                if !references {
                    prop_assert_eq!(bits(&na, v * w + u), bits(&nb, v * w + u), "pixel ({}, {})", u, v);
                }
            }
        }
    }

    #[test]
    fn normals_face_the_sensor_and_are_unit(
        (w, h, px) in (2usize..16, 2usize..10).prop_flat_map(|(w, h)| (Just(w), Just(h), surface(w, h))),
    ) {
        let img = RangeImage::from_pixels(w, h, true, &px).unwrap();
        let n = compute_normals(&img);
        for i in 0..w * h {
            if !n.valid()[i] {
                prop_assert_eq!(n.normals()[i], [0.0; 3]);
                continue;
            }
            let (c, p) = (n.normals()[i].map(f64::from), img.xyz()[i].map(f64::from));
            let len = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            prop_assert!((len - 1.0).abs() <= 1e-5);
            prop_assert!(-(c[0] * p[0] + c[1] * p[1] + c[2] * p[2]) >= 0.0);
        }
    }

    #[test]
    fn normals_are_deterministic(
        (w, h, px) in (2usize..16, 2usize..10).prop_flat_map(|(w, h)| (Just(w), Just(h), surface(w, h))),
    ) {
        let img = RangeImage::from_pixels(w, h, false, &px).unwrap();
        let (a, b) = (compute_normals(&img), compute_normals(&img));
        for i in 0..w * h {
            prop_assert_eq!(bits(&a, i), bits(&b, i));
        }
    }
}
