//! Cross-module invariants checked on random inputs.

use proptest::prelude::*;

use qcva::crca::{self, CrcaAnsatz, RotationTarget};
use qcva::cva_circuit::{self, CvaConstants, IdealTables, Rotation, StatePrep, TimeRotationOrder};
use qcva::discretize::{self, BinningOptions, Instance, ScalingOverrides};
use qcva::elf::{self, ElfSchedule, EstimationState};
use qcva::market::{self, DiscountCurve, HazardCurve, MarketSpec};
use qcva::mps::{self, MpsModel};
use qcva::resource::{self, HardwareModel, QuantumModel};
use qcva::rls::{self, McxConvention, TruthTable};

fn permutation(width: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..1usize << width).collect::<Vec<_>>()).prop_shuffle()
}

fn unit_table(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, len)
}

fn normalised(w: Vec<f64>) -> Vec<f64> {
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // ---- reversible logic ----

    #[test]
    fn synthesis_realises_every_permutation(perm in (1..=7usize).prop_flat_map(permutation)) {
        let c = rls::synthesize(&perm).unwrap();
        prop_assert_eq!(c.permutation(), perm.clone());
        for (x, y) in perm.iter().enumerate() {
            prop_assert_eq!(c.apply(x as u64) as usize, *y);
        }
    }

    #[test]
    fn embedded_truth_table_is_a_bijection_writing_f(values in unit_table(8), bits in 1..=5usize) {
        let tt = TruthTable::from_unit_values(&values, bits).unwrap();
        let perm = tt.embed();
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            prop_assert!(!seen[p]);
            seen[p] = true;
        }
        for x in 0..8usize {
            // output register starts at 0 and ends holding f(x)
            prop_assert_eq!(perm[x << bits] as u64, ((x as u64) << bits) | tt.table[x]);
        }
        let c = rls::synthesize(&perm).unwrap();
        prop_assert!(c.cnot_equivalent_count(McxConvention::CleanAncillaChain) <= c.cnot_equivalent_count(McxConvention::DirtyAncillaChain));
    }

    // ---- market ----

    #[test]
    fn discount_curve_is_decreasing_for_nonnegative_forwards(fwd in prop::collection::vec(0.0..0.1f64, 2..6)) {
        let times: Vec<f64> = (1..=fwd.len()).map(|k| k as f64).collect();
        let zeros: Vec<f64> = (0..fwd.len()).map(|k| fwd[..=k].iter().sum::<f64>() / times[k]).collect();
        let curve = DiscountCurve::new(times.clone(), zeros.clone()).unwrap();
        for (t, z) in times.iter().zip(&zeros) {
            prop_assert!((curve.zero_rate(*t) - z).abs() < 1e-12);
        }
        let mut last = 1.0;
        for k in 1..=40 {
            let d = curve.discount(k as f64 * 0.2);
            prop_assert!(d <= last + 1e-15 && d > 0.0);
            last = d;
        }
    }

    #[test]
    fn survival_is_monotone_and_bounded(h in prop::collection::vec(0.0..0.5f64, 1..5), t in 0.0..20.0f64, dt in 0.0..5.0f64) {
        let curve = HazardCurve { pillar_times: (1..=h.len()).map(|k| 2.0 * k as f64).collect(), hazards: h };
        let (s0, s1) = (curve.survival(t), curve.survival(t + dt));
        prop_assert!((0.0..=1.0).contains(&s0) && s1 <= s0 + 1e-15);
        prop_assert!((curve.default_prob(t, t + dt) - (s0 - s1)).abs() < 1e-12);
    }

    #[test]
    fn normal_cdf_is_monotone_and_symmetric(x in -8.0..8.0f64, dx in 0.0..1.0f64) {
        prop_assert!(market::norm_cdf(x + dx) >= market::norm_cdf(x));
        prop_assert!((market::norm_cdf(x) + market::norm_cdf(-x) - 1.0).abs() < 1e-14);
    }

    // ---- discretisation ----

    #[test]
    fn discretised_tables_are_probabilities(seed in 0..1000u64, n in 1..=4usize) {
        let inst = Instance::simulate(&MarketSpec::default(), &DiscountCurve::flat(0.0), 2, 2000, seed, BinningOptions::default()).unwrap();
        let (dist, f) = inst.discretize(n, ScalingOverrides::default()).unwrap();
        prop_assert!((dist.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(dist.probs.iter().all(|p| *p >= 0.0));
        for t in [&f.v_tilde, &f.p_tilde, &f.q_tilde] {
            prop_assert!(t.iter().all(|x| (0.0..=1.0).contains(x)));
        }
        let cva = discretize::cva_discrete(&dist, &f).unwrap();
        let pi = discretize::pi_expectation(&dist, &f).unwrap();
        prop_assert!((cva - f.prefactor(2) * pi).abs() <= 1e-12 * cva.abs().max(1e-20));
    }

    // ---- MPS ----

    #[test]
    fn mps_probabilities_normalise_and_compile(n in 2..=7usize, seed in 0..1000u64) {
        let mut m = MpsModel::random(n, 2, seed).unwrap();
        m.normalize();
        let p = m.probabilities().unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let c = mps::compile_mps(&m).unwrap();
        prop_assert!((c.fidelity_vs_mps.unwrap() - 1.0).abs() < 1e-9);
        prop_assert_eq!(c.cnot_count, 3 * (n - 1));
    }

    #[test]
    fn full_bond_tt_svd_is_exact(amps in prop::collection::vec(-1.0..1.0f64, 16)) {
        let z = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assume!(z > 1e-3);
        let amps: Vec<f64> = amps.iter().map(|a| a / z).collect();
        let m = MpsModel::from_amplitudes(&amps, 4).unwrap();
        let back = m.dense_amplitudes().unwrap();
        for (a, b) in amps.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    // ---- CRCA ----

    #[test]
    fn crca_blocks_stay_in_range(values in unit_table(4), theta in prop::collection::vec(-3.2..3.2f64, 64)) {
        let ansatz = CrcaAnsatz::new(2, 1).unwrap();
        let th = &theta[..ansatz.n_params()];
        let f = ansatz.f_tilde(th).unwrap();
        prop_assert!(f.iter().all(|x| (-1e-12..=1.0 + 1e-12).contains(x)));
        let target = RotationTarget::new(values.clone()).unwrap();
        let e = crca::crca_error(&f, &target).unwrap();
        prop_assert!(e.epsilon_spectral <= 2.0 + 1e-12);
        // the one-norm real error is bounded by twice the spectral block error
        prop_assert!(e.one_norm <= 2.0 * e.epsilon_spectral + 1e-12);
        prop_assert!(crca::crca_error(&values, &target).unwrap().epsilon_spectral < 1e-12);
    }

    // ---- assembled circuit ----

    #[test]
    fn error_bound_holds_for_random_rotations(
        w in prop::collection::vec(0.01..1.0f64, 16),
        v in unit_table(16),
        q in unit_table(4),
        p in unit_table(4),
        theta in prop::collection::vec(-3.2..3.2f64, 64),
    ) {
        let ideal = IdealTables { probs: normalised(w), v: v.clone(), q: q.clone(), p: p.clone() };
        let consts = CvaConstants { m: 2, recovery: 0.4, c_v: 1.0, c_p: 1.0, c_q: 1.0 };
        let exact = |t: &Vec<f64>| Rotation::Exact(t.clone());
        let prep = StatePrep::Exact(ideal.probs.clone());
        let asm = cva_circuit::assemble(&prep, &exact(&v), &exact(&q), &exact(&p), 2, consts, TimeRotationOrder::default()).unwrap();
        let pi = cva_circuit::pi_expectation(&asm).unwrap();
        prop_assert!((pi - ideal.pi_ideal(2)).abs() < 1e-12);

        // replace the payoff rotation with an arbitrary ansatz realisation
        let ansatz = CrcaAnsatz::new(4, 1).unwrap();
        let fv = ansatz.f_tilde(&theta[..ansatz.n_params()]).unwrap();
        let asm2 = cva_circuit::assemble(&prep, &exact(&fv), &exact(&q), &exact(&p), 2, consts, TimeRotationOrder::default()).unwrap();
        let eps_pi = (cva_circuit::pi_expectation(&asm2).unwrap() - pi).abs();
        let eps_v = crca::crca_error(&fv, &RotationTarget::new(v).unwrap()).unwrap().epsilon_spectral;
        prop_assert!(eps_pi <= 2.0 * eps_v + 1e-12);
    }

    // ---- ELF ----

    #[test]
    fn likelihood_is_a_distribution(theta in 0.0..std::f64::consts::PI, layers in 0..6usize, f in 0.0..=1.0f64, angles in prop::collection::vec(0.0..6.3f64, 12)) {
        let x = ElfSchedule::new(angles[..2 * layers].to_vec()).unwrap();
        let (l0, l1) = (elf::likelihood(theta, &x, f, 0), elf::likelihood(theta, &x, f, 1));
        prop_assert!((0.0..=1.0).contains(&l0) && (0.0..=1.0).contains(&l1));
        prop_assert!((l0 + l1 - 1.0).abs() < 1e-12);
        prop_assert!(elf::fisher_information(theta, &x, f) >= 0.0);
        let g = ElfSchedule::grover(layers);
        prop_assert!((elf::delta(theta, &g) - ((2 * layers + 1) as f64 * theta).cos()).abs() < 1e-10);
    }

    #[test]
    fn bayes_update_keeps_a_proper_belief(mu in 0.2..2.9f64, sigma in 0.01..0.5f64, d in 0..2u8, layers in 0..4usize) {
        let s = EstimationState::new(mu, sigma).unwrap();
        let next = elf::bayes_update(&s, d, &ElfSchedule::grover(layers), 0.9);
        prop_assert!(next.sigma > 0.0 && next.sigma.is_finite());
        prop_assert!((0.0..=std::f64::consts::PI).contains(&next.mu));
        prop_assert!(next.eta_hat().abs() <= 1.0);
    }

    // ---- resource model ----

    #[test]
    fn runtime_decreases_with_looser_error(re in 1e-7..1e-2f64, factor in 1.1..10.0f64, d in 5..25usize) {
        let hw = HardwareModel { distance: d, ..HardwareModel::default() };
        let q = QuantumModel::new(&hw, resource::elf_footprint(2, 2, 42), 0.06).unwrap();
        prop_assert!(q.seconds(re * factor).unwrap() <= q.seconds(re).unwrap());
        prop_assert!(resource::logical_error_rate(1e-3, d + 1) < resource::logical_error_rate(1e-3, d));
    }
}
