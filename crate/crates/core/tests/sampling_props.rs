use fmpinn::sampling::{eval_grid, sample_boundary, sample_interior, stream_rng, BoxDomain, SampleBatch, Stream};
use proptest::prelude::*;

/// Kolmogorov-Smirnov distance between samples and the uniform law on [lo, hi].
fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = (x - lo) / (hi - lo);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn interior_marginals_are_uniform() {
    let dom = BoxDomain::new(vec![-1.0, 0.0, 2.0], vec![1.0, 1.0, 5.0]).unwrap();
    let pts = sample_interior(10_000, &dom, &mut stream_rng(3, Stream::Batches)).unwrap();
    for k in 0..3 {
        let col: Vec<f64> = pts.iter_rows().map(|x| x[k]).collect();
        let ks = ks_uniform(col, dom.lo()[k], dom.hi()[k]);
        assert!(ks <= 0.02, "axis {k}: KS {ks}");
    }
}

#[test]
fn unit_interval_mean_is_near_one_half() {
    let dom = BoxDomain::cube(1, 0.0, 1.0).unwrap();
    let pts = sample_interior(1000, &dom, &mut stream_rng(0, Stream::Batches)).unwrap();
    let mean = pts.iter_rows().map(|x| x[0]).sum::<f64>() / 1000.0;
    assert!((mean - 0.5).abs() <= 0.05, "{mean}");
}

#[test]
fn consecutive_batches_differ() {
    let dom = BoxDomain::cube(2, 0.0, 1.0).unwrap();
    let mut rng = stream_rng(1, Stream::Batches);
    let a = SampleBatch::draw(&dom, 50, 20, &mut rng).unwrap();
    let b = SampleBatch::draw(&dom, 50, 20, &mut rng).unwrap();
    assert_ne!(a.interior.as_slice(), b.interior.as_slice());
    assert_ne!(a.boundary.as_slice(), b.boundary.as_slice());
    assert!(b.stream_position > a.stream_position);
}

#[test]
fn streams_are_independent() {
    let dom = BoxDomain::cube(2, 0.0, 1.0).unwrap();
    let a = sample_interior(10, &dom, &mut stream_rng(1, Stream::Batches)).unwrap();
    let b = sample_interior(10, &dom, &mut stream_rng(1, Stream::Test)).unwrap();
    assert_ne!(a.as_slice(), b.as_slice());
}

#[test]
fn three_dimensional_slice_pins_one_axis() {
    let dom = BoxDomain::cube(3, 0.0, 1.0).unwrap();
    let g = eval_grid(&dom, 1.0 / 16.0, &[(2, 0.3125)]).unwrap();
    assert_eq!(g.rows(), 17 * 17);
    assert!(g.iter_rows().all(|x| x[2] == 0.3125));
}

fn boxes() -> impl Strategy<Value = BoxDomain> {
    prop::collection::vec((-5.0..5.0f64, 0.1..3.0f64), 1..=4).prop_map(|axes| {
        let lo = axes.iter().map(|a| a.0).collect();
        let hi = axes.iter().map(|a| a.0 + a.1).collect();
        BoxDomain::new(lo, hi).unwrap()
    })
}

proptest! {
    #[test]
    fn interior_points_lie_strictly_inside(dom in boxes(), seed in any::<u64>(), n in 1usize..200) {
        let pts = sample_interior(n, &dom, &mut stream_rng(seed, Stream::Batches)).unwrap();
        prop_assert_eq!(pts.rows(), n);
        for x in pts.iter_rows() {
            prop_assert!(dom.contains_strictly(x));
        }
    }

    #[test]
    fn boundary_points_pin_exactly_one_coordinate(dom in boxes(), seed in any::<u64>(), n in 1usize..200) {
        let pts = sample_boundary(n, &dom, &mut stream_rng(seed, Stream::Batches)).unwrap();
        for x in pts.iter_rows() {
            prop_assert!(dom.contains(x));
            prop_assert_eq!(dom.pinned_coordinates(x), 1);
        }
    }

    #[test]
    fn same_seed_same_batch(dom in boxes(), seed in any::<u64>()) {
        let a = SampleBatch::draw(&dom, 30, 10, &mut stream_rng(seed, Stream::Batches)).unwrap();
        let b = SampleBatch::draw(&dom, 30, 10, &mut stream_rng(seed, Stream::Batches)).unwrap();
        prop_assert_eq!(a.interior.as_slice(), b.interior.as_slice());
        prop_assert_eq!(a.boundary.as_slice(), b.boundary.as_slice());
    }
}
