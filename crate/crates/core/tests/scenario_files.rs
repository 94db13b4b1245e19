use std::path::PathBuf;

use proptest::prelude::*;
use punctual::cli_io::{parse_scenario, serialize_scenario, KernelSpec, ModelName, ModelSpec, Scenario, SimSpec};
use punctual::Error;

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn canonical_exit_scenario_round_trips_byte_identically() {
    let text = std::fs::read_to_string(scenarios_dir().join("radial2d_exit.toml")).unwrap();
    let s = parse_scenario(&text).unwrap();
    assert_eq!(s.model.name, ModelName::Radial2d);
    let exit = s.exit.as_ref().unwrap();
    assert_eq!(exit.eps_values, vec![0.15, 0.1, 0.07]);
    assert_eq!(serialize_scenario(&s).unwrap(), text);
}

#[test]
fn every_shipped_scenario_parses_and_round_trips() {
    let mut n = 0;
    for entry in std::fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let s = parse_scenario(&std::fs::read_to_string(&path).unwrap())
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let again = parse_scenario(&serialize_scenario(&s).unwrap()).unwrap();
            assert_eq!(again, s, "{}", path.display());
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn type_mismatch_and_missing_field_have_context() {
    let base = "[model]\nname = \"quad1d\"\n\n[kernel]\nkind = \"gaussian_isotropic\"\ns = 1.0\n";
    let e = parse_scenario(&base.replace("s = 1.0", "s = \"wide\"")).unwrap_err();
    assert!(matches!(e, Error::Scenario(_)));
    assert!(e.to_string().contains("line"), "{e}");
    let e = parse_scenario(&format!("{base}\n[sim]\nx0 = [0.5]\neps = 0.1\ndt = 0.01\n")).unwrap_err();
    assert!(e.to_string().contains("t_max"), "{e}");
    let e = parse_scenario(&format!("{base}\n[sim]\nx0 = [0.5, 0.1]\neps = 0.1\ndt = 0.01\nt_max = 1.0\n")).unwrap_err();
    assert!(e.to_string().contains("sim.x0"), "{e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn sim_blocks_round_trip(seed in any::<u64>(), x in -1.5f64..1.5, eps in 1e-4f64..1.0, dt in 1e-4f64..0.1, n in 1usize..1000, s in 0.1f64..3.0) {
        let sc = Scenario {
            seed,
            output_dir: "o".into(),
            model: ModelSpec { name: ModelName::Quad1d, kappa: None, fd_step: None },
            kernel: KernelSpec::GaussianIsotropic { s },
            singularities: Default::default(),
            coeff: Default::default(),
            classify: None,
            sim: Some(SimSpec { x0: vec![x], eps, dt, t_max: 10.0, absorb_tube: 1e-5, n_paths: n, stride: 1, stops: vec![] }),
            quasipotential: None,
            exit: None,
        };
        let text = serialize_scenario(&sc).unwrap();
        let back = parse_scenario(&text).unwrap();
        prop_assert_eq!(&back, &sc);
        prop_assert_eq!(serialize_scenario(&back).unwrap(), text);
    }
}
