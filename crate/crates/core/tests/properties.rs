//! Property tests for structural invariants.

use ndarray::Array2;
use num_complex::Complex64 as C;
use proptest::prelude::*;
use vibronic_mpo::basis::{hs_inner, OperatorBasis};
use vibronic_mpo::bcf::lindblad_bcf;
use vibronic_mpo::linalg::{adjoint, identity, max_abs_diff};
use vibronic_mpo::model::{thermal_occupancy, ModeSpec, NetworkSpec};
use vibronic_mpo::mpo::{Mpo, SiteTensor};
use vibronic_mpo::observables::{lineshape, populations, reduced_electronic, trace_distance, FrequencyGrid, Window};
use vibronic_mpo::propagator::{local_generator, CompressionMode, LocalChannelTable, Propagator, Sidedness, StepConfig};
use vibronic_mpo::state::{InitialElectronic, VibronicState};
use vibronic_mpo::units::{angular_to_cm1, cm1_to_angular, cm1_to_nm, nm_to_cm1};

fn mpo_strategy() -> impl Strategy<Value = Mpo> {
    (1usize..=5, 1usize..=6)
        .prop_flat_map(|(m, bond)| (Just(bond), prop::collection::vec(1usize..=3, m)))
        .prop_flat_map(|(bond, levels)| {
            let shapes: Vec<(usize, usize, usize)> = levels
                .iter()
                .enumerate()
                .map(|(i, &l)| (if i == 0 { 1 } else { bond }, l * l, if i + 1 == levels.len() { 1 } else { bond }))
                .collect();
            let sizes: Vec<usize> = shapes.iter().map(|&(a, p, b)| a * p * b).collect();
            let data = sizes.iter().map(|&n| prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)).collect::<Vec<_>>();
            (Just(shapes), data)
        })
        .prop_map(|(shapes, data)| {
            let sites = shapes
                .iter()
                .zip(data)
                .map(|(&(dl, p, dr), d)| {
                    let mut t = SiteTensor::zeros(dl, p, dr);
                    t.data = d.into_iter().map(|(re, im)| C::new(re, im)).collect();
                    t
                })
                .collect();
            Mpo { sites }
        })
}

fn density_strategy(n: usize) -> impl Strategy<Value = Array2<C>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n).prop_map(move |v| {
        let a = Array2::from_shape_fn((n, n), |(i, j)| C::new(v[i * n + j].0, v[i * n + j].1));
        let mut rho = a.dot(&adjoint(&a)) + identity(n).mapv(|z| z * 1e-3);
        let tr: C = rho.diag().iter().sum();
        rho.mapv_inplace(|z| z / tr);
        rho
    })
}

fn mode_strategy() -> impl Strategy<Value = ModeSpec> {
    (100.0f64..2000.0, 0.0f64..0.5, 1e-4f64..0.05, 0.0f64..500.0, 2usize..=5)
        .prop_map(|(w, s, g, t, nb)| ModeSpec::new(w, s, g, t, nb))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn basis_is_orthonormal_hermitian_and_traceless(n in 2usize..=7) {
        let b = OperatorBasis::new(n).unwrap();
        let els = b.elements();
        prop_assert_eq!(els.len(), n * n);
        for (i, x) in els.iter().enumerate() {
            prop_assert!(max_abs_diff(x, &adjoint(x)) < 1e-14);
            if i > 0 {
                prop_assert!(x.diag().iter().sum::<C>().norm() < 1e-14);
            }
            for (j, y) in els.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((hs_inner(x, y) - want).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn basis_expansion_round_trips(rho in density_strategy(4)) {
        let b = OperatorBasis::new(4).unwrap();
        let back = b.reconstruct(&b.expand(&rho).unwrap()).unwrap();
        prop_assert!(max_abs_diff(&back, &rho) < 1e-13);
    }

    #[test]
    fn compression_error_is_bounded(o in mpo_strategy(), chi in 1usize..=4) {
        let (c, rep) = o.compress(chi);
        prop_assert!(rep.per_bond_truncation.iter().all(|&e| e >= 0.0));
        prop_assert!(c.max_bond() <= chi);
        let full = o.to_dense();
        let diff: f64 = full.iter().zip(c.to_dense()).map(|(x, y)| (x - y).norm_sqr()).sum();
        let scale: f64 = full.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!(diff <= rep.bound() + 1e-12 * scale, "{} > {}", diff, rep.bound());
    }

    #[test]
    fn addition_is_linear(a in mpo_strategy()) {
        let b = a.scaled(C::new(0.3, -0.7)).adjoint();
        let (ca, cb) = (C::new(1.5, 0.2), C::new(-0.4, 0.9));
        let sum = Mpo::add(&a, &b, ca, cb).unwrap().to_dense();
        let (da, db) = (a.to_dense(), b.to_dense());
        for k in 0..sum.len() {
            prop_assert!((sum[k] - (ca * da[k] + cb * db[k])).norm() < 1e-12);
        }
    }

    #[test]
    fn adjoint_is_an_involution(a in mpo_strategy()) {
        let twice = a.adjoint().adjoint().to_dense();
        let once = a.to_dense();
        for k in 0..once.len() {
            prop_assert!((twice[k] - once[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn trace_distance_is_a_metric(r1 in density_strategy(3), r2 in density_strategy(3), r3 in density_strategy(3)) {
        let d12 = trace_distance(&r1, &r2).unwrap();
        let d21 = trace_distance(&r2, &r1).unwrap();
        let d13 = trace_distance(&r1, &r3).unwrap();
        let d23 = trace_distance(&r2, &r3).unwrap();
        prop_assert!(trace_distance(&r1, &r1).unwrap() < 1e-12);
        prop_assert!((d12 - d21).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d12));
        prop_assert!(d13 <= d12 + d23 + 1e-12);
    }

    #[test]
    fn population_blocks_keep_the_trace(mode in mode_strategy(), dt in 0.1f64..2.0) {
        let basis = OperatorBasis::new(mode.n_levels).unwrap();
        let spec = NetworkSpec::chain(1, 0.0, 0.0, vec![mode.clone()]);
        let table = LocalChannelTable::build(&spec, dt).unwrap();
        let w = table.channel(0, Sidedness::Both);
        // Trace row: the x₁ coefficient of the output equals that of the input.
        for j in 0..basis.dim() {
            let want = if j == 0 { 1.0 } else { 0.0 };
            prop_assert!((w[[0, j]] - want).norm() < 1e-10);
        }
        let g = local_generator(&mode, Sidedness::Neither, &basis);
        prop_assert!(g.iter().all(|z| z.is_finite()));
    }

    #[test]
    fn dynamics_keep_hermiticity_and_population_sums(
        j12 in -600.0f64..600.0, j23 in -600.0f64..600.0, mode in mode_strategy(), chi in 2usize..=6,
    ) {
        let mut spec = NetworkSpec::chain(3, 10000.0, 0.0, vec![mode]);
        spec.couplings_cm1[0][1] = j12;
        spec.couplings_cm1[1][0] = j12;
        spec.couplings_cm1[1][2] = j23;
        spec.couplings_cm1[2][1] = j23;
        let cfg = StepConfig { dt_fs: 0.5, chi, tau: 1e-12, compression: CompressionMode::Pairwise, identity_weight: 1.0 };
        let prop = Propagator::new(&spec, cfg).unwrap();
        let mut st = VibronicState::init_product_state(&spec, &InitialElectronic::Site(0)).unwrap();
        let mut last = 0.0;
        for _ in 0..20 {
            prop.step(&mut st).unwrap();
            let re = reduced_electronic(&st);
            // Hermitian up to the certified truncation distance.
            let slack = 2.0 * st.trace_factor() * st.ledger.distance_bound() + 1e-11;
            prop_assert!(max_abs_diff(&re, &adjoint(&re)) <= slack);
            let sum: f64 = populations(&st).iter().sum();
            prop_assert!((sum - st.trace().re).abs() < 1e-12);
            let cum = st.ledger.cumulative();
            prop_assert!(cum >= last);
            last = cum;
            prop_assert!(st.max_bond() <= chi);
        }
    }

    #[test]
    fn thermal_occupancy_grows_with_temperature(w in 50.0f64..3000.0, t1 in 0.0f64..500.0, dt in 0.1f64..500.0) {
        let a = thermal_occupancy(w, t1).unwrap();
        let b = thermal_occupancy(w, t1 + dt).unwrap();
        prop_assert!(a >= 0.0 && b > a);
        prop_assert_eq!(thermal_occupancy(w, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn unit_conversions_round_trip(x in 1.0f64..1e5) {
        prop_assert!((angular_to_cm1(cm1_to_angular(x)) - x).abs() < 1e-10 * x);
        prop_assert!((cm1_to_nm(nm_to_cm1(x)) - x).abs() < 1e-10 * x);
    }

    #[test]
    fn bcf_starts_real_part_positive(modes in prop::collection::vec(mode_strategy(), 1..4)) {
        let c0 = lindblad_bcf(&modes, 0.0);
        prop_assert!(c0.re >= 0.0);
        // The imaginary part of C(0) vanishes: the ± terms cancel.
        prop_assert!(c0.im.abs() < 1e-12 * c0.re.max(1e-300));
        let late = lindblad_bcf(&modes, 1e5);
        prop_assert!(late.norm() <= c0.norm());
    }

    #[test]
    fn lineshape_is_peak_normalized(w0 in 500.0f64..1500.0, decay in 20.0f64..200.0) {
        let dt = 1.0;
        let coh: Vec<C> = (0..400)
            .map(|k| {
                let t = k as f64 * dt;
                C::new(0.0, -cm1_to_angular(w0) * t).exp() * (-t / decay).exp()
            })
            .collect();
        let grid = FrequencyGrid { start_cm1: 0.0, stop_cm1: 2000.0, points: 801 };
        let ls = lineshape(&coh, dt, &grid, Window::None).unwrap();
        let max = ls.intensity.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((max - 1.0).abs() < 1e-12);
        prop_assert!((ls.peak_cm1() - w0).abs() <= 2.5 + 1e-9);
    }
}
