use gfdeconv::estimators::{read_model_csv, write_model_csv, ClassicalSample};
use gfdeconv::gf::{default_test_set, weak_distance, GeneralizedFunction};
use gfdeconv::grid::Grid;
use gfdeconv::sim::{sample_classical, sample_model, DistributionSpec, ModelSpec, RegressionSpec};
use gfdeconv::study::{run_ladder, ClassicalDesign, SystemDesign};
use proptest::prelude::*;

fn bump_model() -> ModelSpec {
    ModelSpec::new(
        RegressionSpec::GaussianBump {
            amplitude: 1.0,
            center: 0.0,
            width: 1.0,
        },
        Some(DistributionSpec::Laplace { b: 1.0 }),
    )
}

#[test]
fn model_csv_round_trip_preserves_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let data = sample_model(&bump_model(), 800, 21).unwrap();
    write_model_csv(&path, &data).unwrap();
    let back = read_model_csv(&path).unwrap();
    assert_eq!(back, data);

    let design = SystemDesign::new(bump_model());
    let (a, _) = design.solve(&data).unwrap();
    let (b, _) = design.solve(&back).unwrap();
    let tests = default_test_set(1);
    assert_eq!(weak_distance(&a.g_hat, &b.g_hat, &tests).unwrap(), 0.0);
}

#[test]
fn estimate_survives_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let design = ClassicalDesign::new(
        DistributionSpec::Gaussian { sigma: 1.0 },
        DistributionSpec::Laplace { b: 1.0 },
    );
    let z: Vec<f64> = sample_classical(&design.signal, &design.error, 500, 3)
        .unwrap()
        .iter()
        .map(|s: &ClassicalSample| s.z)
        .collect();
    let g = design.estimate(&z).unwrap();
    let path = dir.path().join("g.json");
    g.write_json(&path).unwrap();
    let back = GeneralizedFunction::read_json(&path).unwrap();
    assert!(weak_distance(&g, &back, &default_test_set(1)).unwrap() < 1e-12);
}

#[test]
fn system_estimate_improves_with_n() {
    let design = SystemDesign::new(bump_model());
    let tests = default_test_set(1);
    let rows = run_ladder(&[300, 6000], 8, 5, |n, s| {
        design.replicate(n, s, &tests).map(|o| o.weak_distance)
    })
    .unwrap();
    assert!(rows.iter().all(|r| r.rejected == 0));
    assert!(rows[1].median_weak_distance.unwrap() < rows[0].median_weak_distance.unwrap());
}

#[test]
fn exact_deconvolution_matches_truth() {
    for error in [
        DistributionSpec::Laplace { b: 0.5 },
        DistributionSpec::Uniform { a: 1.0 },
        DistributionSpec::Triangular { a: 1.0 },
    ] {
        let d = ClassicalDesign::new(DistributionSpec::Gaussian { sigma: 1.0 }, error.clone());
        let wd = weak_distance(&d.estimate_exact().unwrap(), &d.truth().unwrap(), &default_test_set(1)).unwrap();
        assert!(wd < 1e-3, "{error:?}: {wd}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulation_depends_only_on_seed(seed in any::<u64>(), n in 1usize..200) {
        let a = sample_model(&bump_model(), n, seed).unwrap();
        let b = sample_model(&bump_model(), n, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for s in &a {
            let l = s.latent.as_ref().unwrap();
            prop_assert!((s.z[0] - l.x_star[0] - l.u[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_dual_is_an_involution(points in 3u32..9, half_width in 1.0f64..50.0) {
        let g = Grid::new(1, half_width, 1 << points).unwrap();
        let back = g.dual().dual();
        prop_assert!((back.half_width() - g.half_width()).abs() < 1e-9 * half_width);
        prop_assert_eq!(back.points(), g.points());
    }
}
