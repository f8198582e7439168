use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rsbandit::environments::{load_ihdp_with_layout, IhdpDataset, IhdpLayout, IhdpRecord};
use rsbandit::harness::{aggregate, emit_csv, run_experiment, run_experiment_in, Environment};
use rsbandit::{Algorithm, ExperimentConfig};

fn cfg(algorithm: Algorithm, rounds: usize, replications: usize) -> ExperimentConfig {
    ExperimentConfig {
        algorithm,
        rounds,
        replications,
        seed: 31,
        mc_samples: 2_000,
        ..ExperimentConfig::default()
    }
}

#[test]
fn replay_recovers_change_rounds() {
    for algorithm in [Algorithm::RsConservative, Algorithm::RsGreedy, Algorithm::FeasibleGreedy] {
        let c = cfg(algorithm, 3_000, 4);
        let first = run_experiment(&c).unwrap();
        let second = run_experiment(&c).unwrap();
        for (a, b) in first.iter().zip(&second) {
            let rounds = |m: &rsbandit::RunMetrics| -> Vec<usize> {
                (1..=m.rounds()).filter(|t| m.policy_changed[t - 1]).collect()
            };
            assert_eq!(rounds(a), rounds(b));
            assert_eq!(rounds(a).len(), a.change_count);
        }
        assert_eq!(first, second);
    }
}

#[test]
fn feasible_algorithms_play_plausible_arms() {
    for algorithm in [
        Algorithm::LinUcb,
        Algorithm::GreedyLs,
        Algorithm::FeasibleConservative,
        Algorithm::FeasibleGreedy,
    ] {
        for m in run_experiment(&cfg(algorithm, 2_000, 5)).unwrap() {
            if m.truth_always_inside == Some(true) {
                assert_eq!(m.infeasible_plays, 0, "{algorithm} replication {}", m.replication);
            }
        }
    }
}

#[test]
fn rarely_switching_plays_are_nearly_always_plausible() {
    // The angle tolerance lets boundaries sit slightly outside their plausible
    // cones, so a handful of plays may fall outside the plausible arm set.
    for algorithm in [Algorithm::RsConservative, Algorithm::RsGreedy] {
        for m in run_experiment(&cfg(algorithm, 2_000, 5)).unwrap() {
            assert!(m.infeasible_plays * 100 <= m.rounds(), "{algorithm}: {} infeasible plays", m.infeasible_plays);
        }
    }
}

#[test]
fn empirical_regret_within_bound() {
    for algorithm in [Algorithm::LinUcb, Algorithm::RsGreedy, Algorithm::FeasibleConservative] {
        for m in run_experiment(&cfg(algorithm, 1_000, 10)).unwrap() {
            if m.truth_always_inside == Some(true) {
                assert!(m.final_regret() <= m.regret_bound);
            }
        }
    }
}

#[test]
fn per_step_regret_falls() {
    // CLUCB's pessimistic budget keeps it on the baseline arm over this horizon.
    let learners = Algorithm::ALL
        .into_iter()
        .filter(|a| !matches!(a, Algorithm::UniformRandom | Algorithm::Clucb));
    for algorithm in learners {
        let runs = run_experiment(&cfg(algorithm, 2_000, 10)).unwrap();
        let s = aggregate(&runs).unwrap();
        let curve = &s.series("per_step_regret").unwrap().mean;
        let (early, last) = (curve[99], curve[curve.len() - 1]);
        assert!(last < early, "{algorithm}: {last} at the end vs {early} at round 100");
    }
}

#[test]
fn greedy_least_squares_learns() {
    let runs = run_experiment(&ExperimentConfig {
        algorithm: Algorithm::GreedyLs,
        seed: 3,
        ..ExperimentConfig::default()
    })
    .unwrap();
    let s = aggregate(&runs).unwrap();
    let curve = &s.series("per_step_regret").unwrap().mean;
    assert!(s.final_per_step_regret.value < 0.02);
    assert!(curve[999] < curve[99] && curve[9_999] < curve[999]);
}

#[test]
fn csv_files_round_trip() {
    let runs = run_experiment(&cfg(Algorithm::RsGreedy, 50, 2)).unwrap();
    let s = aggregate(&runs).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_csv(std::slice::from_ref(&s), dir.path()).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("per_round.csv")).unwrap();
    let mut recovered: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in reader.records() {
        let row = row.unwrap();
        assert_eq!(&row[0], "rs_greedy");
        recovered.entry(row[2].to_string()).or_default().push(row[3].parse().unwrap());
    }
    for series in &s.series {
        assert_eq!(recovered[series.metric], series.mean);
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("algo,metric,value,ci_low,ci_high\n"));
    assert!(summary.contains("rs_greedy,total_changes,"));
}

/// IHDP-format data with a known nonlinear response surface.
fn surrogate_ihdp(realizations: usize, subjects: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut out = String::from("realization,subject,treatment,y_factual,y_cfactual,mu0,mu1");
    for j in 1..=25 {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for r in 1..=realizations {
        let w = DVector::from_fn(25, |_, _| rng.gen_range(-0.5..0.5));
        for i in 1..=subjects {
            let x = DVector::from_fn(25, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mu0 = (x.dot(&w) * 0.5).exp().min(5.0);
            let mu1 = x.dot(&w) + 1.0;
            let t = rng.gen_bool(0.3);
            let (f, cf) = if t { (mu1, mu0) } else { (mu0, mu1) };
            out.push_str(&format!("{r},{i},{},{f},{cf},{mu0},{mu1}", u8::from(t)));
            for v in x.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    out
}

#[test]
fn ihdp_pipeline_runs_on_surrogate_file() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(surrogate_ihdp(3, 120).as_bytes()).unwrap();
    file.flush().unwrap();
    let layout = IhdpLayout {
        realizations: 3,
        subjects: 120,
    };
    let data = load_ihdp_with_layout(file.path(), layout).unwrap();
    assert_eq!(data.context_dim(), 26);
    let env = Environment::Ihdp(data);
    let base = ExperimentConfig {
        replications: 3,
        rounds: 240,
        ..ExperimentConfig::ihdp(file.path())
    };
    let mut regret = BTreeMap::new();
    for algorithm in Algorithm::ALL {
        let runs = run_experiment_in(&ExperimentConfig { algorithm, ..base.clone() }, &env).unwrap();
        for m in &runs {
            assert_eq!(m.truth_always_inside, None);
            assert!(m.instantaneous_regret.iter().all(|r| *r >= 0.0));
        }
        regret.insert(algorithm, aggregate(&runs).unwrap().final_per_step_regret.value);
    }
    assert!(regret[&Algorithm::GreedyLs] < regret[&Algorithm::UniformRandom]);
}

#[test]
fn ihdp_dataset_from_memory() {
    let record = IhdpRecord {
        subject: 1,
        covariates: DVector::zeros(25),
        treatment: true,
        y_factual: 1.0,
        y_cfactual: 0.0,
        mu0: 0.0,
        mu1: 1.0,
    };
    let data = IhdpDataset::from_realizations(BTreeMap::from([(1, vec![record])])).unwrap();
    let runs = run_experiment_in(
        &ExperimentConfig {
            algorithm: Algorithm::LinUcb,
            replications: 2,
            rounds: 30,
            sigma: 0.0,
            ..ExperimentConfig::ihdp("unused.csv")
        },
        &Environment::Ihdp(data),
    )
    .unwrap();
    assert_eq!(runs.len(), 2);
    assert!(runs.iter().all(|m| m.baseline_arm == 1));
}
