use proptest::prelude::*;
use specdim::gauge::{compare, default_s_grid, Ordering};
use specdim::halfline::{self, HalfLineOperator, Potential, PotentialSpec};
use specdim::rank_one::{self, RankOnePerturbation};
use specdim::sparse_barrier::{BarrierProfile, BetaSpec, ProfileSpec};
use specdim::trend::TrendConfig;
use specdim::{GaugeFunction, SpectralMeasure};

fn atoms_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-4.0f64..4.0, 0.05f64..1.0), 1..24).prop_map(|mut v| {
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        v.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-2);
        let s: f64 = v.iter().map(|a| a.1).sum();
        v.into_iter().map(|(e, w)| (e, w / s)).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transfer_stays_unimodular(table in prop::collection::vec(-5.0f64..5.0, 1..64), e in -4.0f64..4.0, n in 1usize..5000) {
        let spec = PotentialSpec::Table { values: table, tail: 0.0 };
        let h = HalfLineOperator::new(Potential::from_spec(&spec).unwrap(), 0.0).unwrap();
        let det = halfline::transfer(&h, e, n).det();
        prop_assert!((det - 1.0).abs() < 1e-9, "det = {det}");
    }

    #[test]
    fn rank_one_conserves_mass(atoms in atoms_strategy(), lambda in -5.0f64..5.0) {
        prop_assume!(lambda.abs() > 1e-3);
        let p = RankOnePerturbation::new(SpectralMeasure::atomic(&atoms).unwrap(), lambda).unwrap();
        let spec = rank_one::perturbed_spectrum(&p).unwrap();
        prop_assert_eq!(spec.len(), atoms.len());
        let mass: f64 = spec.iter().map(|s| s.1).sum();
        prop_assert!((mass - 1.0).abs() < 1e-10);
        let oracle = rank_one::rank_one_matrix_oracle(&atoms, lambda).unwrap();
        for (a, b) in spec.iter().zip(&oracle) {
            prop_assert!((a.0 - b.0).abs() < 1e-9);
        }
    }

    #[test]
    fn power_comparison_is_antisymmetric(a in 0.05f64..2.0, b in 0.05f64..2.0) {
        prop_assume!((a - b).abs() > 0.05);
        let (ra, rb) = (GaugeFunction::power(a).unwrap(), GaugeFunction::power(b).unwrap());
        let cfg = TrendConfig::default();
        let ab = compare(&ra, &rb, &default_s_grid(), &cfg).unwrap();
        let ba = compare(&rb, &ra, &default_s_grid(), &cfg).unwrap();
        let want = if a < b { Ordering::Precedes } else { Ordering::Succeeds };
        prop_assert_eq!(ab, want);
        prop_assert_eq!(ba, if want == Ordering::Precedes { Ordering::Succeeds } else { Ordering::Precedes });
    }

    #[test]
    fn exp_power_profiles_are_subadditive(a in 1.0f64..3.0, x in 0.0f64..80.0, y in 0.0f64..80.0) {
        let p = BarrierProfile::new(ProfileSpec { beta: BetaSpec::ExpPower { a }, eta: 1.0 }).unwrap();
        prop_assert!(p.subadditive(x, y, 1e-9));
    }

    #[test]
    fn stieltjes_is_herglotz(atoms in atoms_strategy(), re in -6.0f64..6.0, im in 1e-3f64..5.0) {
        let mu = SpectralMeasure::atomic(&atoms).unwrap();
        let f = specdim::borel::borel_transform(&mu, num_complex::Complex64::new(re, im)).unwrap().value;
        prop_assert!(f.im > 0.0);
        // Im F(x + i y) <= mass / y
        prop_assert!(f.im <= 1.0 / im * (1.0 + 1e-12));
    }
}
