mod common;

use common::catalog_dir;
use metaimpute::dataset::{Catalog, Dataset};
use metaimpute::missingness::{
    eligible_rows, induce, tune_probabilities, Mechanism, MechanismSpec, MissingnessMask, Pattern,
};
use metaimpute::Matrix;
use proptest::prelude::*;

fn bh() -> Dataset {
    Catalog::load_dir(catalog_dir()).unwrap().find("BH").unwrap().load().unwrap()
}

fn check_structure(ds: &Dataset, spec: &MechanismSpec, mask: &MissingnessMask) {
    let vulnerable = ds.vulnerable_indices();
    let eligible = eligible_rows(ds, spec);
    for r in 0..ds.rows() {
        for c in ds.permanent_indices() {
            assert!(!mask.is_missing(r, c), "permanent column {c} masked");
        }
        let lost = vulnerable.iter().filter(|&&c| mask.is_missing(r, c)).count();
        if lost > 0 {
            assert!(eligible[r], "ineligible row {r} masked");
        }
        if spec.pattern == Pattern::Uniform {
            assert!(lost == 0 || lost == vulnerable.len(), "uniform row {r} partly masked");
        }
    }
}

#[test]
fn structural_invariants_on_many_masks() {
    let ds = bh();
    let mut draws = 0;
    for kind in Mechanism::ALL {
        for pattern in Pattern::ALL {
            let tuned = tune_probabilities(&ds, kind, pattern, 0.15, 0.01, 3).unwrap();
            for seed in 0..170 {
                let mask = induce(&ds, &tuned.spec, seed).unwrap();
                check_structure(&ds, &tuned.spec, &mask);
                draws += 1;
            }
        }
    }
    assert!(draws >= 1000);
}

#[test]
fn charles_river_never_masked() {
    let ds = bh();
    let chas = ds.column_index("CHAS").unwrap();
    let spec = MechanismSpec::mcar(Pattern::Uniform, 1.0, 1.0);
    for seed in 0..100 {
        let mask = induce(&ds, &spec, seed).unwrap();
        assert!((0..ds.rows()).all(|r| !mask.is_missing(r, chas)));
    }
}

#[test]
fn mcar_row_flag_rate_matches_probability() {
    // Flag count per mask is Binomial(n, p_m); the mean over 1000 draws should
    // sit within 4 standard errors of n·p_m.
    let ds = bh();
    let (n, p) = (ds.rows() as f64, 0.3);
    let spec = MechanismSpec::mcar(Pattern::Uniform, p, 1.0);
    let draws = 1000;
    let total: usize = (0..draws).map(|s| induce(&ds, &spec, s).unwrap().flagged_rows()).sum();
    let mean = total as f64 / draws as f64;
    let se = (n * p * (1.0 - p) / draws as f64).sqrt();
    assert!((mean - n * p).abs() < 4.0 * se, "mean {mean} vs {}", n * p);
}

#[test]
fn mcar_uniform_tuning_matches_closed_form() {
    // Fraction = p_m · v / c, so the tuned p_m should be near target · c / v.
    let ds = bh();
    let (v, c) = (ds.vulnerable_indices().len() as f64, ds.cols() as f64);
    let tuned = tune_probabilities(&ds, Mechanism::Mcar, Pattern::Uniform, 0.16, 0.005, 1).unwrap();
    let expected = 0.16 * c / v;
    assert!((tuned.spec.p_m - expected).abs() < 0.03, "p_m {} vs {expected}", tuned.spec.p_m);
}

#[test]
fn boston_mcar_random_reaches_reference_fraction() {
    let ds = bh();
    let tuned = tune_probabilities(&ds, Mechanism::Mcar, Pattern::Random, 0.158, 0.005, 7).unwrap();
    assert!(tuned.shortfall.is_none());
    assert!((tuned.achieved - 0.158).abs() <= 0.02);
}

#[test]
fn unreachable_target_reports_shortfall() {
    let ds = bh();
    let tuned = tune_probabilities(&ds, Mechanism::Mnar, Pattern::Uniform, 0.6, 0.005, 1).unwrap();
    assert!(tuned.shortfall.unwrap() > 0.0);
    assert_eq!((tuned.spec.p_m, tuned.spec.p_p), (1.0, 1.0));
}

fn toy() -> Dataset {
    let values = Matrix::from_fn(40, 6, |r, c| ((r * 13 + c * 7) % 17) as f64 + 0.1 * c as f64);
    Dataset::numeric("toy", values, &[2, 3, 4, 5]).unwrap()
}

fn spec_strategy() -> impl Strategy<Value = MechanismSpec> {
    (0usize..3, any::<bool>(), 0.0f64..=1.0, 0.0f64..=1.0, 0usize..4, 0usize..4).prop_map(
        |(k, uniform, p_m, p_p, a, b)| {
            let kind = Mechanism::ALL[k];
            let triggers = match kind {
                Mechanism::Mcar => None,
                Mechanism::Mar => Some((0, 1)),
                Mechanism::Mnar => {
                    let (a, b) = (2 + a, 2 + (a + 1 + b % 3) % 4);
                    Some((a.min(b), a.max(b)))
                }
            };
            MechanismSpec {
                kind,
                pattern: if uniform { Pattern::Uniform } else { Pattern::Random },
                p_m,
                p_p,
                triggers,
            }
        },
    )
}

proptest! {
    #[test]
    fn induced_masks_respect_structure(spec in spec_strategy(), seed in any::<u64>()) {
        let ds = toy();
        let mask = induce(&ds, &spec, seed).unwrap();
        check_structure(&ds, &spec, &mask);
        prop_assert_eq!(&mask, &induce(&ds, &spec, seed).unwrap());
    }

    #[test]
    fn mask_csv_round_trips(spec in spec_strategy(), seed in any::<u64>()) {
        let ds = toy();
        let mask = induce(&ds, &spec, seed).unwrap();
        let text = mask.to_csv(&ds.column_names()).unwrap();
        let (header, back) = MissingnessMask::from_csv(&text).unwrap();
        prop_assert_eq!(header, ds.column_names());
        prop_assert_eq!(back.digest(), mask.digest());
    }
}
