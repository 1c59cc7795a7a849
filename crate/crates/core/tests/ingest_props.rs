use proptest::prelude::*;

use d2c::ingest::{drawing_from_svg, drawing_segments, drawing_to_svg, segments_to_svg, Point2, Segment, ViewBox};
use d2c::svg::{SvgKind, ViewLabel, DRAWING_LEN, UNUSED};

fn unit_point() -> impl Strategy<Value = (f64, f64)> {
    (0.0..=1.0f64, 0.0..=1.0f64)
}

#[derive(Debug, Clone)]
enum Shape {
    Line([(f64, f64); 2]),
    Cubic([(f64, f64); 4]),
}

fn shape() -> impl Strategy<Value = Shape> {
    prop_oneof![
        [unit_point(), unit_point()].prop_map(Shape::Line),
        [unit_point(), unit_point(), unit_point(), unit_point()].prop_map(Shape::Cubic),
    ]
}

// Points are drawn as fractions of the viewBox so every segment lies inside it.
fn doc() -> impl Strategy<Value = (Vec<Segment>, ViewBox)> {
    (prop::collection::vec(shape(), 1..25), -50.0..50.0f64, -50.0..50.0f64, 50.0..400.0f64, 50.0..400.0f64).prop_map(
        |(shapes, x0, y0, w, h)| {
            let at = |(u, v): (f64, f64)| Point2::new(x0 + u * w, y0 + v * h);
            let segs = shapes
                .into_iter()
                .map(|s| match s {
                    Shape::Line([a, b]) => Segment::Line { start: at(a), end: at(b) },
                    Shape::Cubic([a, c1, c2, b]) => Segment::Cubic { start: at(a), c1: at(c1), c2: at(c2), end: at(b) },
                })
                .collect();
            (segs, ViewBox::new(x0, y0, w, h))
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tokens_are_well_formed((segs, vb) in doc()) {
        let d = drawing_from_svg(&segments_to_svg(&segs, vb), ViewLabel::Front).unwrap();
        prop_assert_eq!(d.tokens().len(), DRAWING_LEN);
        prop_assert_eq!(d.view(), ViewLabel::Front);
        for t in d.content() {
            let mask = t.kind.usage_mask();
            for (used, b) in mask.iter().zip(t.params.0) {
                let ok = if *used { b < 256 } else { b == UNUSED };
                prop_assert!(ok);
            }
        }
        prop_assert!(d.tokens()[d.content_len()..].iter().all(|t| t.kind == SvgKind::Eos));
    }

    #[test]
    fn permutation_invariant((segs, vb) in doc(), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let base = drawing_from_svg(&segments_to_svg(&segs, vb), ViewLabel::Top).unwrap();
        let mut shuffled = segs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let perm = drawing_from_svg(&segments_to_svg(&shuffled, vb), ViewLabel::Top).unwrap();
        prop_assert_eq!(base, perm);
    }

    #[test]
    fn reingest_is_identity((segs, vb) in doc()) {
        let d = drawing_from_svg(&segments_to_svg(&segs, vb), ViewLabel::Isometric).unwrap();
        let again = drawing_from_svg(&drawing_to_svg(&d), ViewLabel::Isometric).unwrap();
        prop_assert_eq!(drawing_segments(&again), drawing_segments(&d));
        prop_assert_eq!(again, d);
    }
}

#[test]
fn rejects_malformed_documents() {
    assert!(drawing_from_svg("<svg", ViewLabel::Front).is_err());
    let bad_path = r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 10 10"><path d="M 0 0 Q 1 1 2 2"/></svg>"#;
    assert!(drawing_from_svg(bad_path, ViewLabel::Front).is_err());
}

#[test]
fn empty_drawing_is_all_padding() {
    let svg = r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 10 10"></svg>"#;
    match drawing_from_svg(svg, ViewLabel::Right) {
        Ok(d) => assert_eq!(d.content_len(), 0),
        Err(e) => assert!(!e.to_string().is_empty()),
    }
}
