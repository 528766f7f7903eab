use gapcomp::completion::{gradient_step, random_mask, svp_complete, SvpParams};
use gapcomp::lowrank::{random_dense, random_tucker};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unit_step_writes_observations(
        dims in prop::collection::vec(1usize..7, 2..=4),
        seed in any::<u64>(),
        cr in 1.0f64..5.0,
    ) {
        let x = random_dense(&dims, seed).unwrap();
        let xhat = random_dense(&dims, seed ^ 7).unwrap();
        let n: usize = dims.iter().product();
        let mask = random_mask(&dims, cr.min(n as f64), seed).unwrap();
        let step = gradient_step(&xhat, &x, &mask.indices, 1.0);
        for (i, observed) in mask.flags().into_iter().enumerate() {
            let want = if observed { x.as_slice()[i] } else { xhat.as_slice()[i] };
            prop_assert_eq!(step.as_slice()[i], want);
        }
    }

    #[test]
    fn mask_is_sorted_unique_in_range(
        dims in prop::collection::vec(1usize..9, 1..=4),
        seed in any::<u64>(),
        cr in 1.0f64..10.0,
    ) {
        let n: usize = dims.iter().product();
        let cr = cr.min(n as f64);
        let m = random_mask(&dims, cr, seed).unwrap();
        prop_assert_eq!(m.len(), (n as f64 / cr).floor() as usize);
        prop_assert!(m.indices.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(m.indices.iter().all(|&i| i < n));
        prop_assert_eq!(m, random_mask(&dims, cr, seed).unwrap());
    }

    #[test]
    fn traces_and_determinism(seed in any::<u64>(), iters in 1usize..15) {
        let x = random_tucker(&[8, 7, 6], &[2, 2, 2], seed).unwrap();
        let mask = random_mask(x.dims(), 2.0, seed).unwrap();
        let mut params = SvpParams::new(vec![3, 3, 3]);
        params.max_iters = iters;
        params.trace = true;
        let a = svp_complete(&x, &mask, &params, Some(&x)).unwrap();
        let b = svp_complete(&x, &mask, &params, Some(&x)).unwrap();
        prop_assert_eq!(&a, &b);
        let t = a.trace.as_ref().unwrap();
        prop_assert_eq!(t.masked_relative.len(), a.iterations);
        prop_assert_eq!(t.chebyshev.len(), a.iterations);
        if a.converged {
            prop_assert!(t.masked_relative.last() <= t.masked_relative.first());
        }
    }
}

#[test]
fn exact_caps_recover_the_desk_instance() {
    let x = random_tucker(&[30, 30, 10, 16], &[3, 3, 2, 3], 8).unwrap();
    let mask = random_mask(x.dims(), 4.0, 8).unwrap();
    let out = svp_complete(&x, &mask, &SvpParams::new(vec![3, 3, 2, 3]), None).unwrap();
    assert!(out.converged);
    let full = x.relative_error(&out.completion).unwrap();
    assert!(
        full <= 10.0 * out.masked_error,
        "full {full:e} masked {:e}",
        out.masked_error
    );
}
