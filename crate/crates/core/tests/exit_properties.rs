mod common;

use common::field;
use proptest::prelude::*;
use punctual::domain::Domain;
use punctual::exit::{check_attracting, excursion_decomposition, run_exit_experiment, ExitOptions};
use punctual::model::FitnessModel;
use punctual::sde::{simulate, SimConfig, StopKind, StopRule};

#[test]
fn excursions_become_rarer_as_noise_drops() {
    let f = field(FitnessModel::radial2d());
    let d = Domain::Ball { center: vec![0.15, 0.0], radius: 0.6 };
    let rule = StopRule::new("exit", StopKind::ExitDomain { domain: d.clone() }, true);
    let mut rates = Vec::new();
    for eps in [0.15, 0.1, 0.07] {
        let (mut count, mut time) = (0usize, 0.0);
        for i in 0..40 {
            let mut cfg = SimConfig::new(eps, 1e-2, 100.0);
            cfg.seed = 5;
            cfg.path_index = i;
            let t = simulate(&f, &[0.05, 0.0], &cfg, std::slice::from_ref(&rule)).unwrap();
            count += excursion_decomposition(&t, &[0.0, 0.0], 0.1, 0.25, Some(&d)).unwrap().len();
            time += t.times.last().unwrap();
        }
        rates.push(count as f64 / time);
    }
    assert!(rates[0] > rates[1] && rates[1] > rates[2], "{rates:?}");
}

#[test]
fn deterministic_inflow_has_no_excursion() {
    let f = field(FitnessModel::radial2d());
    let t = simulate(&f, &[0.5, 0.0], &SimConfig::new(0.0, 1e-2, 60.0), &[]).unwrap();
    let ex = excursion_decomposition(&t, &[0.0, 0.0], 0.1, 0.2, None).unwrap();
    assert_eq!(ex.len(), 1);
    assert!(ex[0].tau.is_some());
}

#[test]
fn unit_threshold_is_exceeded_by_almost_all_paths() {
    let f = field(FitnessModel::quad1d());
    let d = Domain::Interval { lo: -0.8, hi: 0.8 };
    let v_bar = 1.0;
    let opts = ExitOptions { n_paths: 200, t_max_cap: 50.0, ..Default::default() };
    let r = run_exit_experiment(&f, &d, &[0.1], &[0.1], &SimConfig::new(0.1, 1e-2, 1.0), &opts, v_bar, &[-0.8], v_bar)
        .unwrap();
    let s = &r.per_eps[0];
    assert!(s.frac_exceeding_threshold >= 0.95, "{}", s.frac_exceeding_threshold);
    assert_eq!(s.censored + s.uncensored, s.n_paths);
    assert!(s.exit_times.iter().all(|t| t.time >= 0.0 && (t.censored == (t.time == s.t_max) || !t.censored)));
}

#[test]
fn attracting_checks() {
    let f = field(FitnessModel::radial2d());
    assert!(check_attracting(&f, &Domain::Ball { center: vec![0.15, 0.0], radius: 0.6 }, 16, 30.0).unwrap().attracting);
    assert!(!check_attracting(&f, &Domain::Ball { center: vec![1.0, 0.0], radius: 0.5 }, 16, 30.0).unwrap().attracting);
    let band = field(FitnessModel::band1d(0.5));
    assert!(!check_attracting(&band, &Domain::Interval { lo: -0.5, hi: 0.5 }, 4, 20.0).unwrap().attracting);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signed_distance_is_one_lipschitz(
        ax in -2.0f64..2.0, ay in -2.0f64..2.0, bx in -2.0f64..2.0, by in -2.0f64..2.0, r in 0.1f64..1.5,
    ) {
        let domains = [
            Domain::Ball { center: vec![0.15, 0.0], radius: r },
            Domain::Polygon { vertices: vec![[-r, -r], [r, -0.5 * r], [0.5 * r, r], [-r, 0.8 * r]] },
        ];
        let dist = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
        for d in &domains {
            let (sa, sb) = (d.signed_distance(&[ax, ay]), d.signed_distance(&[bx, by]));
            prop_assert!((sa - sb).abs() <= dist + 1e-12);
        }
    }
}
