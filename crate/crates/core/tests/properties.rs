//! Randomized invariants across the condensate, geometry, forward-map and counting layers.

use std::f64::consts::PI;
use std::sync::OnceLock;

use galvo_core::condensate::{chemical_potential, ellipsoidal_point, tf_density, TrapConfig};
use galvo_core::config::{AngularFrequency, Length, Quantity};
use galvo_core::counting::{estimate_means, simulate_counts, DetectionConfig};
use galvo_core::kernel::{KernelMode, KernelSettings, ResponseKernel};
use galvo_core::nanowire::{u_factor, NanowireConfig};
use galvo_core::quadrature::GaussLegendre;
use galvo_core::spectra::{
    asymmetry, scan, transferred_atoms, transferred_atoms_many, NoiseSpectrumModel, Regime, ScanAxis,
};
use proptest::prelude::*;

fn wire() -> NanowireConfig {
    NanowireConfig::new(2e-6, 4e-6, 10e-9, 2.0 * PI * 50e6).unwrap()
}

fn kernels() -> &'static [ResponseKernel; 2] {
    static K: OnceLock<[ResponseKernel; 2]> = OnceLock::new();
    K.get_or_init(|| {
        let trap = TrapConfig::new(2.0 * PI * 500.0, 2.0 * PI * 109.0, 1e4, 1e-4).unwrap();
        [KernelMode::Approx1D, KernelMode::Exact3D].map(|mode| {
            ResponseKernel::build(&trap, &wire(), &KernelSettings { mode, ..KernelSettings::default() }).unwrap()
        })
    })
}

fn trap_strategy() -> impl Strategy<Value = TrapConfig> {
    (50.0..2000.0f64, 0.05..1.0f64, 2.0..7.0f64).prop_map(|(fr, aspect, log_n)| {
        TrapConfig::new(2.0 * PI * fr, 2.0 * PI * fr * aspect, 10f64.powf(log_n), 1e-4).unwrap()
    })
}

fn lorentzian_strategy() -> impl Strategy<Value = NoiseSpectrumModel> {
    (-2.0..2.0f64, 0.05..1.5f64, 0.1..10.0f64).prop_map(|(c, w, p)| {
        let bw = kernels()[0].bandwidth();
        NoiseSpectrumModel::Lorentzian { center: c * bw, half_width: w * bw, power: p * 1e-9 }
    })
}

fn broad_lorentzian() -> impl Strategy<Value = NoiseSpectrumModel> {
    (-2.0..2.0f64, 0.2..1.5f64, 0.1..10.0f64).prop_map(|(c, w, p)| {
        let bw = kernels()[0].bandwidth();
        NoiseSpectrumModel::Lorentzian { center: c * bw, half_width: w * bw, power: p * 1e-9 }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tf_density_integrates_to_atom_number(trap in trap_strategy()) {
        let cond = chemical_potential(&trap).unwrap();
        let gl = GaussLegendre::new(12);
        let mut total = 0.0;
        for (rho, w) in gl.on_interval(0.0, 1.0) {
            for (ct, wc) in gl.on_interval(-1.0, 1.0) {
                let phi = 0.3;
                let r = ellipsoidal_point(&cond, rho, ct, phi);
                total += w * wc * 2.0 * PI * rho * rho * tf_density(r, &cond, &trap);
            }
        }
        total *= cond.b * cond.b * cond.c;
        prop_assert!((total / trap.atom_number - 1.0).abs() < 1e-10, "ratio {}", total / trap.atom_number);
    }

    #[test]
    fn chemical_potential_scaling(trap in trap_strategy(), k in 0.1..10.0f64, kr in 0.5..2.0f64, kz in 0.5..2.0f64) {
        let mu = chemical_potential(&trap).unwrap().mu;
        let more = chemical_potential(&trap.with_atom_number(trap.atom_number * k)).unwrap().mu;
        prop_assert!((more / mu / k.powf(0.4) - 1.0).abs() < 1e-12);
        let squeezed = TrapConfig::new(trap.omega_r * kr, trap.omega_z * kz, trap.atom_number, 1e-4).unwrap();
        let ratio = chemical_potential(&squeezed).unwrap().mu / mu;
        prop_assert!((ratio / (kz.powf(0.4) * kr.powf(0.8)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aspect_ratio_follows_trap(trap in trap_strategy()) {
        let c = chemical_potential(&trap).unwrap();
        prop_assert!((c.b / c.c - trap.omega_z / trap.omega_r).abs() < 1e-14);
    }

    #[test]
    fn geometry_factor_symmetries(x in -2.0..2.0f64, y in -0.8..3.0f64, z in -2.0..2.0f64, l in 0.2..3.0f64) {
        let u = u_factor([x, y, z], l).unwrap();
        let mirrored_x = u_factor([-x, y, z], l).unwrap();
        let mirrored_z = u_factor([x, y, -z], l).unwrap();
        let scale = u.norm().max(1e-300);
        prop_assert!((mirrored_x - u.conj()).norm() <= 1e-10 * scale);
        prop_assert!((mirrored_z - u).norm() <= 1e-10 * scale);
    }

    #[test]
    fn kernel_peaks_at_zero_lag(tau in -40.0..40.0f64) {
        for k in kernels() {
            let t = tau / k.bandwidth();
            prop_assert!(k.time_domain(t).norm() <= k.d0() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn forward_map_is_nonnegative(m in lorentzian_strategy(), big in -4.0..4.0f64, tlog in 0.0..2.5f64) {
        for k in kernels() {
            let omega = big * k.bandwidth();
            let t = 10f64.powf(tlog) / k.bandwidth();
            for regime in [Regime::LongTime, Regime::Full] {
                let n = transferred_atoms(&m, k, t, omega, regime).unwrap();
                prop_assert!(n >= -1e-9 * transferred_atoms(&m, k, t, m_center(&m), regime).unwrap().abs(), "{n}");
            }
        }
    }

    #[test]
    fn asymmetry_is_antisymmetric(m in lorentzian_strategy(), temp in 0.0..2.0f64) {
        let k = &kernels()[0];
        let model = NoiseSpectrumModel::DetailedBalance {
            base: Box::new(match m {
                NoiseSpectrumModel::Lorentzian { half_width, power, .. } =>
                    NoiseSpectrumModel::Lorentzian { center: 0.0, half_width, power },
                other => other,
            }),
            temperature: temp * k.mu / galvo_core::constants::BOLTZMANN,
        };
        let axis = ScanAxis::symmetric(3.0 * k.bandwidth(), 21, &wire(), &Default::default()).unwrap();
        let s = scan(&model, k, 1.0, &axis, Regime::LongTime, wire().omega_cnt).unwrap();
        let a = asymmetry(&s).unwrap();
        let n = a.len();
        for i in 0..n {
            prop_assert_eq!(a[i], -a[n - 1 - i]);
        }
    }

    #[test]
    fn quantities_round_trip(x in -1e6..1e6f64) {
        let q: Length = Quantity::new(x);
        let back: Length = Quantity::parse(&q.to_string()).unwrap();
        prop_assert_eq!(back.si, x);
        let w: AngularFrequency = Quantity::new(x);
        let back: AngularFrequency = Quantity::parse(&w.to_string()).unwrap();
        prop_assert_eq!(back.si, x);
    }
}

fn m_center(m: &NoiseSpectrumModel) -> f64 {
    match m {
        NoiseSpectrumModel::Lorentzian { center, .. } => *center,
        _ => 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn forward_map_is_linear(a in broad_lorentzian(), b in broad_lorentzian(),
                             alpha in 0.0..3.0f64, beta in 0.0..3.0f64, big in -3.0..3.0f64) {
        let k = &kernels()[0];
        let omega = big * k.bandwidth();
        let t = 20.0 / k.bandwidth();
        for regime in [Regime::LongTime, Regime::Full] {
            let na = transferred_atoms(&a, k, t, omega, regime).unwrap();
            let nb = transferred_atoms(&b, k, t, omega, regime).unwrap();
            let (ca, cb) = match (&a, &b) {
                (NoiseSpectrumModel::Lorentzian { center: c1, half_width: w1, power: p1 },
                 NoiseSpectrumModel::Lorentzian { center: c2, half_width: w2, power: p2 }) =>
                    ((*c1, *w1, *p1), (*c2, *w2, *p2)),
                _ => unreachable!(),
            };
            // αS₁ + βS₂ expressed as a tabulated density on a fine grid.
            let grid: Vec<f64> = (0..=2400).map(|i| (-12.0 + 24.0 * i as f64 / 2400.0) * k.bandwidth()).collect();
            let lor = |(c, w, p): (f64, f64, f64), o: f64| p * 2.0 * w / ((o - c).powi(2) + w * w);
            let values: Vec<f64> = grid.iter().map(|&o| alpha * lor(ca, o) + beta * lor(cb, o)).collect();
            let mix = NoiseSpectrumModel::Tabulated { omega: grid, values };
            let nm = transferred_atoms(&mix, k, t, omega, regime).unwrap();
            let expect = alpha * na + beta * nb;
            prop_assert!((nm - expect).abs() <= 2e-3 * expect.abs().max(1e-6 * (na + nb)),
                "{regime}: {nm} vs {expect}");
        }
    }

    #[test]
    fn count_estimator_is_unbiased(eff in 0.05..1.0f64, seed in any::<u64>(), level in 0.5..50.0f64) {
        let k = &kernels()[0];
        let model = NoiseSpectrumModel::Flat { s0: level / (k.n_det * 1.0) };
        let axis = ScanAxis::symmetric(k.bandwidth(), 5, &wire(), &Default::default()).unwrap();
        let s = scan(&model, k, 1.0, &axis, Regime::LongTime, wire().omega_cnt).unwrap();
        let shots = 400;
        let det = DetectionConfig { efficiency: eff, shots, seed };
        let est = estimate_means(simulate_counts(&s, &det).unwrap().counts.as_ref().unwrap()).unwrap();
        for (m, truth) in est.mean_atoms.iter().zip(&s.mean_atoms) {
            let sigma = (truth / eff / shots as f64).sqrt();
            prop_assert!((m - truth).abs() < 5.0 * sigma, "{m} vs {truth} ± {sigma}");
        }
    }

    #[test]
    fn counts_are_seed_deterministic(seed in any::<u64>()) {
        let k = &kernels()[0];
        let model = NoiseSpectrumModel::Flat { s0: 5.0 / k.n_det };
        let axis = ScanAxis::symmetric(k.bandwidth(), 7, &wire(), &Default::default()).unwrap();
        let s = scan(&model, k, 1.0, &axis, Regime::LongTime, wire().omega_cnt).unwrap();
        let det = DetectionConfig { efficiency: 0.5, shots: 3, seed };
        let a = simulate_counts(&s, &det).unwrap();
        let b = simulate_counts(&s, &det).unwrap();
        prop_assert_eq!(a.counts, b.counts);
    }

    #[test]
    fn full_regime_approaches_long_time(m in lorentzian_strategy(), big in -1.0..1.5f64) {
        let k = &kernels()[0];
        let omega = big * k.bandwidth();
        let gap = |t: f64| {
            let full = transferred_atoms_many(&m, k, t, &[omega], Regime::Full).unwrap()[0];
            let long = transferred_atoms_many(&m, k, t, &[omega], Regime::LongTime).unwrap()[0];
            (full - long).abs() / long.abs().max(1e-300)
        };
        let short = gap(5.0 / k.bandwidth());
        let long = gap(500.0 / k.bandwidth());
        prop_assert!(long <= short + 1e-6, "gap {short} -> {long}");
    }
}
