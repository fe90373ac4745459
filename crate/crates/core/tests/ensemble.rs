use thermal_cqed::config::RunConfig;
use thermal_cqed::ensemble::{run_ensemble, run_single, with_workers, Normalization};
use thermal_cqed::error::Error;

fn config(toml: &str) -> RunConfig {
    RunConfig::from_toml_str(toml).unwrap()
}

fn ensemble(cfg: &RunConfig) -> thermal_cqed::Result<thermal_cqed::ensemble::EnsembleResult> {
    let model = cfg.build_model()?;
    let sweep = cfg.build_sweep(&model)?;
    let spec = cfg.ensemble_spec()?;
    with_workers(0, || run_ensemble(&model, &sweep, &spec))?
}

#[test]
fn uncoupled_atoms_leave_the_normalized_spectrum_at_unity() {
    // CP shifts still act on the atom, but with no coupling the cavity never notices.
    let cfg = config(
        "seed = 3\n[cavity]\ng_max_ghz = 0.0\n[sweep]\ndelta_cl_ghz = [-20.0, -5.0, 0.0, 5.0, 20.0]\n\
         [ensemble]\nsampler = \"liad\"\ncount = 40\n",
    );
    let res = ensemble(&cfg).unwrap();
    assert!(res.excluded.is_empty());
    for s in &res.spectrum {
        assert!((s.mean_photon - 1.0).abs() < 1e-9, "{s:?}");
        assert!(s.std_error < 1e-9, "{s:?}");
        assert_eq!(s.n_samples, 40);
    }
}

#[test]
fn raw_spectrum_is_normalized_spectrum_times_baseline() {
    let base = "seed = 8\n[sweep]\npoints = 3\n[ensemble]\nsampler = \"liad\"\ncount = 60\n";
    let norm = ensemble(&config(base)).unwrap();
    let mut raw_cfg = config(base);
    raw_cfg.sweep.normalization = Normalization::Raw;
    let raw = ensemble(&raw_cfg).unwrap();
    assert_eq!(raw.baseline, norm.baseline);
    for ((r, n), b) in raw.spectrum.iter().zip(&norm.spectrum).zip(&norm.baseline) {
        assert!(
            (r.mean_photon - n.mean_photon * b).abs() <= 1e-12 * r.mean_photon,
            "{r:?} {n:?}"
        );
        assert!(
            (r.std_error - n.std_error * b).abs() <= 1e-9 * r.std_error,
            "{r:?} {n:?}"
        );
    }
    assert!(norm.interacting > 0, "no atom reached the mode");
}

#[test]
fn standard_error_shrinks_as_inverse_root_count() {
    // Few LIAD atoms reach the mode, so one ensemble's SE is noisy; pool SE^2 over seeds.
    let mean_var = |count: usize| {
        let seeds = 1..=8u64;
        let n = seeds.clone().count() as f64;
        seeds
            .map(|seed| {
                let cfg = config(&format!(
                    "seed = {seed}\n[sweep]\ndelta_cl_ghz = [0.0]\n[ensemble]\nsampler = \"liad\"\ncount = {count}\n"
                ));
                ensemble(&cfg).unwrap().spectrum[0].std_error.powi(2)
            })
            .sum::<f64>()
            / n
    };
    let ratio = (mean_var(800) / mean_var(400)).sqrt();
    let expected = 0.5f64.sqrt();
    assert!(
        (ratio - expected).abs() <= 0.15 * expected,
        "pooled SE ratio {ratio:.3}"
    );
}

#[test]
fn ensemble_with_failing_trajectories_is_rejected() {
    let cfg = config(
        "[sweep]\npoints = 3\nphoton_cutoff = 1\ndrive_over_kappa = 2.0\n[ensemble]\nsampler = \"liad\"\ncount = 20\n",
    );
    match ensemble(&cfg) {
        Err(Error::TooManyFailures {
            failed,
            total,
            first,
        }) => {
            assert_eq!(total, 20);
            assert!(failed > 0);
            assert!(first.contains("cutoff"), "{first}");
        }
        other => panic!(
            "expected TooManyFailures, got {:?}",
            other.map(|r| r.spectrum)
        ),
    }
}

#[test]
fn single_sweep_with_failing_points_is_rejected() {
    let cfg = config("[sweep]\npoints = 5\nphoton_cutoff = 1\ndrive_over_kappa = 2.0\n");
    let model = cfg.build_model().unwrap();
    let sweep = cfg.build_sweep(&model).unwrap();
    let err = run_single(&model, &sweep, &cfg.single_trajectory()).unwrap_err();
    assert!(
        matches!(err, Error::TooManyFailures { .. } | Error::Cutoff { .. }),
        "{err}"
    );
}

#[test]
fn invalid_sweeps_are_configuration_errors() {
    let cfg = config("[sweep]\ndelta_cl_ghz = [1.0, 0.0]\n");
    let model = cfg.build_model().unwrap();
    let sweep = cfg.build_sweep(&model);
    let err = match sweep {
        Err(e) => e,
        Ok(s) => run_single(&model, &s, &cfg.single_trajectory()).unwrap_err(),
    };
    assert!(matches!(err, Error::Config(_)), "{err}");
}
