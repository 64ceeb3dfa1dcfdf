mod common;

use common::{falloff, random_glances, random_kernels, render_brute};
use glancevad::splatting::{init_kernels, kernel_value, render, update_kernels, KernelFamily, KernelTrack};
use glancevad::types::{GaussianKernel, RngSeed};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn render_invariants_over_random_tracks() {
    let mut rng = RngSeed(21).rng();
    for case in 0..1000 {
        let len = rng.random_range(1..=32);
        let family = KernelFamily::ALL[case % 3];
        let kernels = random_kernels(&mut rng, len);
        let track = KernelTrack::from_kernels(kernels.clone(), family).unwrap();
        let out = render(&track).unwrap();

        for (t, (&x, y)) in out.as_slice().iter().zip(render_brute(&kernels, family)).enumerate() {
            assert!((0.0..=1.0).contains(&x), "case {case}: {x} at {t}");
            assert!((x - y).abs() <= 1e-12, "case {case}: {x} vs brute {y} at {t}");
        }

        // Raising any severity never lowers the rendered track.
        let i = rng.random_range(0..len);
        let mut raised = kernels.clone();
        raised[i].severity = rng.random_range(raised[i].severity..=1.0);
        let higher = render(&KernelTrack::from_kernels(raised, family).unwrap()).unwrap();
        for (a, b) in out.as_slice().iter().zip(higher.as_slice()) {
            assert!(b >= a, "case {case}: severity raise lowered {a} to {b}");
        }

        // A lone kernel is symmetric about its center and decays away from it.
        let mu = rng.random_range(0..len);
        let lone = GaussianKernel::new(mu, 1.0, rng.random_range(0.01..0.5)).unwrap();
        let v = |t| kernel_value(&lone, t, len, family).unwrap();
        for k in 1..len {
            if mu >= k && mu + k < len {
                assert!((v(mu - k) - v(mu + k)).abs() <= 1e-12, "case {case}: asymmetric at offset {k}");
            }
            if mu + k < len {
                assert!(v(mu + k) <= v(mu + k - 1), "case {case}: rising right of center");
            }
            if mu >= k {
                assert!(v(mu - k) <= v(mu - k + 1), "case {case}: rising left of center");
            }
        }
        assert_eq!(v(mu), 1.0);
    }
}

#[test]
fn glance_targets_are_one_at_glances() {
    let mut rng = RngSeed(22).rng();
    for case in 0..300 {
        let len = rng.random_range(1..=64);
        let g = random_glances(&mut rng, len);
        for family in KernelFamily::ALL {
            let init = init_kernels(&g, len, rng.random_range(0.01..0.5), family).unwrap();
            let rendered = render(&update_kernels(&init, &[], &g)).unwrap();
            for &s in g.snippets() {
                assert_eq!(rendered[s], 1.0, "case {case} family {family}");
            }
        }
    }
}

#[test]
fn heavier_families_dominate_in_the_tail() {
    // Laplace exceeds Normal only beyond two radii: exp(-d/r) > exp(-d^2/2r^2)
    // iff d > 2r. Cauchy exceeds Laplace at every positive distance.
    for r in [0.02, 0.05, 0.1, 0.3] {
        for i in 1..400 {
            let d = i as f64 * r / 50.0;
            let (n, l, c) = (
                falloff(KernelFamily::Normal, d, r),
                falloff(KernelFamily::Laplace, d, r),
                falloff(KernelFamily::Cauchy, d, r),
            );
            if l > 0.0 {
                assert!(c > l, "cauchy {c} <= laplace {l} at d={d}, r={r}");
            }
            if d > 2.0 * r && n > 0.0 {
                assert!(l > n, "laplace {l} <= normal {n} at d={d}, r={r}");
            }
        }
    }
    // And the library agrees with the reference falloffs.
    for family in KernelFamily::ALL {
        let k = GaussianKernel::new(0, 1.0, 0.1).unwrap();
        for t in 0..100 {
            let want = falloff(family, t as f64 / 100.0, 0.1);
            assert!((kernel_value(&k, t, 100, family).unwrap() - want).abs() < 1e-15);
        }
    }
}

proptest! {
    #[test]
    fn clamp_saturates_overlaps(len in 2usize..40, r in 0.2f64..1.0) {
        // Every kernel on at a large radius: raw sums exceed one everywhere.
        let kernels: Vec<_> = (0..len).map(|mu| GaussianKernel::new(mu, 1.0, r).unwrap()).collect();
        for family in KernelFamily::ALL {
            let out = render(&KernelTrack::from_kernels(kernels.clone(), family).unwrap()).unwrap();
            prop_assert!(out.as_slice().iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn silent_track_renders_zero(len in 1usize..40, r in 0.01f64..1.0) {
        let kernels: Vec<_> = (0..len).map(|mu| GaussianKernel::new(mu, 0.0, r).unwrap()).collect();
        let out = render(&KernelTrack::from_kernels(kernels, KernelFamily::Normal).unwrap()).unwrap();
        prop_assert!(out.as_slice().iter().all(|&x| x == 0.0));
    }
}
