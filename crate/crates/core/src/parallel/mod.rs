//! Time-parallel square-root Rauch–Tung–Striebel smoother: filtering and
//! smoothing as two associative scans.

mod elements;
mod scan;

pub use elements::{
    combine_filtering, combine_smoothing, make_filtering_element, make_smoothing_element,
    FilteringElement, SmoothingElement,
};
pub use scan::{associative_scan, ScanDirection, ScanStats};

use crate::error::Result;
use crate::pool::WorkPool;
use crate::prior::TransitionModel;
use crate::sequential::{check_aligned, RtsOutput};
use crate::statespace::{AffineObservation, GaussianSqrt};

#[derive(Debug, Clone, PartialEq)]
pub struct ParaRtsOutput {
    pub marginals: RtsOutput,
    pub filter_stats: ScanStats,
    pub smoother_stats: ScanStats,
}

/// Parallel filter and smoother for `N` steps.
///
/// `transitions[n]` maps grid index `n` to `n + 1`; `observations[n]` applies
/// at index `n + 1`. The returned marginals cover indices `0..=N`.
pub fn para_rts(
    pool: &WorkPool,
    init: &GaussianSqrt,
    transitions: &[TransitionModel],
    observations: &[AffineObservation],
) -> Result<ParaRtsOutput> {
    check_aligned(init, transitions, observations)?;
    let steps = transitions.len();

    let indices: Vec<usize> = (0..steps).collect();
    let elements = pool.try_map(&indices, |_, &n| {
        make_filtering_element(&transitions[n], &observations[n], (n == 0).then_some(init))
    })?;
    let (prefixes, filter_stats) =
        associative_scan(pool, combine_filtering, elements, ScanDirection::Forward)?;

    let mut filtered = Vec::with_capacity(steps + 1);
    filtered.push(init.clone());
    filtered.extend(prefixes.iter().map(FilteringElement::marginal));

    // smoothing elements for indices 1..=N; index 0 is folded in afterwards
    let smoothing = pool.try_map(&indices, |_, &k| {
        let n = k + 1;
        if n == steps {
            Ok(SmoothingElement::terminal(&filtered[n]))
        } else {
            make_smoothing_element(&filtered[n], &transitions[n])
        }
    })?;
    let (suffixes, smoother_stats) =
        associative_scan(pool, combine_smoothing, smoothing, ScanDirection::Reverse)?;

    let first = make_smoothing_element(&filtered[0], &transitions[0])?;
    let first = combine_smoothing(&first, &SmoothingElement::terminal(&suffixes[0].marginal()))?;
    let mut smoothed = Vec::with_capacity(steps + 1);
    smoothed.push(first.marginal());
    smoothed.extend(suffixes.iter().map(SmoothingElement::marginal));

    Ok(ParaRtsOutput {
        marginals: RtsOutput { filtered, smoothed },
        filter_stats,
        smoother_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::linalg::LowerTriangularSqrt;
    use crate::sequential::seq_rts;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn transition(rng: &mut ChaCha8Rng, n: usize) -> TransitionModel {
        TransitionModel {
            phi: random(rng, n, n) * 0.5 + DMatrix::identity(n, n),
            q_sqrt: LowerTriangularSqrt::from_lower_part(&(random(rng, n, n) * 0.3 + DMatrix::identity(n, n))),
            h: 1.0,
        }
    }

    fn observation(rng: &mut ChaCha8Rng, m: usize, n: usize) -> AffineObservation {
        AffineObservation::new(random(rng, m, n), DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    fn random_element(rng: &mut ChaCha8Rng, n: usize) -> FilteringElement {
        let m = rng.gen_range(1..n);
        make_filtering_element(&transition(rng, n), &observation(rng, m, n), None).unwrap()
    }

    fn assert_filter_close(x: &FilteringElement, y: &FilteringElement, tol: f64) {
        assert!((&x.a - &y.a).amax() <= tol, "A");
        assert!((&x.b - &y.b).amax() <= tol, "b");
        assert!((x.c_sqrt.product() - y.c_sqrt.product()).amax() <= tol, "C");
        assert!((&x.eta - &y.eta).amax() <= tol, "eta");
        let jx = &x.j_sqrt * x.j_sqrt.transpose();
        let jy = &y.j_sqrt * y.j_sqrt.transpose();
        assert!((jx - jy).amax() <= tol, "J");
    }

    #[test]
    fn vacuous_element() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tr = transition(&mut rng, 3);
        let obs = AffineObservation::new(DMatrix::zeros(1, 3), DVector::zeros(1)).unwrap();
        let e = make_filtering_element(&tr, &obs, None).unwrap();
        assert_eq!(e.a, tr.phi);
        assert_eq!(e.b, DVector::zeros(3));
        assert!((e.c_sqrt.product() - tr.q_sqrt.product()).amax() < 1e-15);
        assert_eq!(e.eta, DVector::zeros(3));
        assert_eq!(e.j_sqrt, DMatrix::zeros(3, 3));

        let bad = AffineObservation::new(DMatrix::zeros(1, 3), DVector::from_vec(vec![1.0])).unwrap();
        assert_eq!(make_filtering_element(&tr, &bad, None), Err(Error::DegenerateObservation));
    }

    #[test]
    fn scalar_element() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let tr = TransitionModel { phi: one.clone(), q_sqrt: LowerTriangularSqrt::identity(1), h: 1.0 };
        let obs = AffineObservation::new(one, DVector::zeros(1)).unwrap();
        let e = make_filtering_element(&tr, &obs, None).unwrap();
        assert!(e.a[(0, 0)].abs() < 1e-15);
        assert!(e.b[0].abs() < 1e-15);
        assert!(e.c_sqrt.product()[(0, 0)].abs() < 1e-15);
        assert!(((&e.j_sqrt * e.j_sqrt.transpose())[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn element_matches_dense_conditional() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let tr = transition(&mut rng, 4);
            let obs = observation(&mut rng, 2, 4);
            let e = make_filtering_element(&tr, &obs, None).unwrap();
            let q = tr.q_sqrt.product();
            let s = &obs.h * &q * obs.h.transpose();
            let s_inv = s.try_inverse().unwrap();
            let k = &q * obs.h.transpose() * &s_inv;
            let eye = DMatrix::identity(4, 4);
            let a = (&eye - &k * &obs.h) * &tr.phi;
            let b = &k * &obs.d;
            let c = &q - &k * &obs.h * &q;
            let j = tr.phi.transpose() * obs.h.transpose() * &s_inv * &obs.h * &tr.phi;
            let eta = tr.phi.transpose() * obs.h.transpose() * &s_inv * &obs.d;
            assert!((e.a - a).amax() < 1e-10);
            assert!((e.b - b).amax() < 1e-10);
            assert!((e.c_sqrt.product() - c).amax() < 1e-10);
            assert!((&e.j_sqrt * e.j_sqrt.transpose() - j).amax() < 1e-10);
            assert!((e.eta - eta).amax() < 1e-10);
        }
    }

    #[test]
    fn filtering_identity_is_two_sided() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let id = FilteringElement::identity(4);
        for _ in 0..10 {
            let a = random_element(&mut rng, 4);
            assert_filter_close(&combine_filtering(&id, &a).unwrap(), &a, 1e-12);
            assert_filter_close(&combine_filtering(&a, &id).unwrap(), &a, 1e-12);
        }
    }

    #[test]
    fn filtering_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let (a, b, c) = (random_element(&mut rng, 3), random_element(&mut rng, 3), random_element(&mut rng, 3));
            let left = combine_filtering(&combine_filtering(&a, &b).unwrap(), &c).unwrap();
            let right = combine_filtering(&a, &combine_filtering(&b, &c).unwrap()).unwrap();
            assert_filter_close(&left, &right, 1e-9);
        }
    }

    #[test]
    fn smoothing_element_cases() {
        let n = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = GaussianSqrt {
            mean: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
            cov_sqrt: LowerTriangularSqrt::from_lower_part(&random(&mut rng, n, n)),
        };
        let still = TransitionModel { phi: DMatrix::identity(n, n), q_sqrt: LowerTriangularSqrt::zeros(n), h: 1.0 };
        let e = make_smoothing_element(&f, &still).unwrap();
        assert!((e.e - DMatrix::identity(n, n)).amax() < 1e-12);
        assert!(e.g.amax() < 1e-12);
        assert!(e.l_sqrt.product().amax() < 1e-12);

        let term = SmoothingElement::terminal(&f);
        assert_eq!(term.e, DMatrix::zeros(n, n));
        assert_eq!(term.marginal(), f);

        let tr = transition(&mut rng, n);
        let e = make_smoothing_element(&f, &tr).unwrap();
        let p = f.cov();
        let gain = &p * tr.phi.transpose() * (&tr.phi * &p * tr.phi.transpose() + tr.q_sqrt.product()).try_inverse().unwrap();
        assert!((e.e - gain).amax() < 1e-10);
    }

    #[test]
    fn smoothing_identity_and_associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 3;
        let elem = |rng: &mut ChaCha8Rng| SmoothingElement {
            e: random(rng, n, n),
            g: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
            l_sqrt: LowerTriangularSqrt::from_lower_part(&random(rng, n, n)),
        };
        let id = SmoothingElement::identity(n);
        for _ in 0..20 {
            let (a, b, c) = (elem(&mut rng), elem(&mut rng), elem(&mut rng));
            let ia = combine_smoothing(&id, &a).unwrap();
            let ai = combine_smoothing(&a, &id).unwrap();
            for x in [&ia, &ai] {
                assert!((&x.e - &a.e).amax() < 1e-14);
                assert!((&x.g - &a.g).amax() < 1e-14);
                assert!((x.l_sqrt.product() - a.l_sqrt.product()).amax() < 1e-13);
            }
            let l = combine_smoothing(&combine_smoothing(&a, &b).unwrap(), &c).unwrap();
            let r = combine_smoothing(&a, &combine_smoothing(&b, &c).unwrap()).unwrap();
            assert!((&l.e - &r.e).amax() < 1e-10);
            assert!((&l.g - &r.g).amax() < 1e-10);
            assert!((l.l_sqrt.product() - r.l_sqrt.product()).amax() < 1e-10);
        }
    }

    fn random_model(rng: &mut ChaCha8Rng, n: usize, steps: usize) -> (GaussianSqrt, Vec<TransitionModel>, Vec<AffineObservation>) {
        let init = GaussianSqrt {
            mean: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
            cov_sqrt: LowerTriangularSqrt::from_lower_part(&random(rng, n, n)),
        };
        let trs = (0..steps).map(|_| transition(rng, n)).collect();
        let obs = (0..steps).map(|_| observation(rng, 1, n)).collect();
        (init, trs, obs)
    }

    #[test]
    fn prefixes_equal_sequential_filter_and_suffixes_equal_smoother() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for steps in [1, 2, 3, 5, 8, 16] {
            let (init, trs, obs) = random_model(&mut rng, 3, steps);
            let seq = seq_rts(&init, &trs, &obs).unwrap();
            let par = para_rts(&WorkPool::sequential(), &init, &trs, &obs).unwrap();
            for (p, s) in par.marginals.filtered.iter().zip(&seq.filtered) {
                assert!((&p.mean - &s.mean).amax() < 1e-8);
                assert!((p.cov() - s.cov()).amax() < 1e-8);
            }
            for (p, s) in par.marginals.smoothed.iter().zip(&seq.smoothed) {
                assert!((&p.mean - &s.mean).amax() < 1e-8, "steps={steps}");
                assert!((p.cov() - s.cov()).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn single_step_filter_equals_smoother_at_end() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (init, trs, obs) = random_model(&mut rng, 2, 1);
        let par = para_rts(&WorkPool::sequential(), &init, &trs, &obs).unwrap();
        assert_eq!(par.marginals.filtered[1], par.marginals.smoothed[1]);
        assert_eq!(par.filter_stats.combine_invocations, 0);
    }

    #[test]
    fn scan_of_elements_equals_fold() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let elems: Vec<FilteringElement> = (0..16).map(|_| random_element(&mut rng, 3)).collect();
        let (scanned, _) = associative_scan(&WorkPool::new(2).unwrap(), combine_filtering, elems.clone(), ScanDirection::Forward).unwrap();
        let mut acc = elems[0].clone();
        for (k, e) in elems.iter().enumerate().skip(1) {
            acc = combine_filtering(&acc, e).unwrap();
            let scale = acc.a.amax().max(acc.b.amax()).max(acc.eta.amax()).max(1.0);
            assert_filter_close(&scanned[k], &acc, 1e-9 * scale);
        }
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (init, trs, obs) = random_model(&mut rng, 3, 37);
        let a = para_rts(&WorkPool::sequential(), &init, &trs, &obs).unwrap();
        let b = para_rts(&WorkPool::new(4).unwrap(), &init, &trs, &obs).unwrap();
        assert_eq!(a, b);
    }
}
