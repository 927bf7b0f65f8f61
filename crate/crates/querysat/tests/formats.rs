//! Round trips through the on-disk formats.

use proptest::prelude::*;
use querysat::bench::{cactus, BenchRecord, BenchStatus};
use querysat::checkpoint::Checkpoint;
use querysat::dimacs::{parse_dimacs, read_dimacs, write_dimacs};
use querysat_core::model::{Architecture, Model, ModelConfig};
use querysat_core::train::evaluate;
use querysat_core::{CnfFormula, FactorGraph};

fn formula() -> impl Strategy<Value = CnfFormula> {
    (1usize..=30).prop_flat_map(|n| {
        let clause = prop::collection::btree_map(1..=n as i32, any::<bool>(), 1..=n.min(6))
            .prop_map(|m| m.into_iter().map(|(v, neg)| if neg { -v } else { v }).collect::<Vec<i32>>());
        prop::collection::vec(clause, 0..40).prop_map(move |cs| {
            let refs: Vec<&[i32]> = cs.iter().map(Vec::as_slice).collect();
            CnfFormula::from_ints(n, &refs).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn dimacs_round_trips(f in formula()) {
        let text = write_dimacs(&f);
        prop_assert_eq!(parse_dimacs(&text).unwrap(), f.clone());
        let spread: String = text
            .lines()
            .map(|l| if l.starts_with('p') { format!("c spread over lines\n{l}\n") } else { l.replace(' ', "\n") + "\n" })
            .collect();
        prop_assert_eq!(parse_dimacs(&spread).unwrap(), f);
    }
}

#[test]
fn dimacs_files_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let f = CnfFormula::from_ints(3, &[&[1, -2], &[2, 3], &[-1, -3]]).unwrap();
    let path = dir.path().join("f.cnf");
    std::fs::write(&path, write_dimacs(&f)).unwrap();
    assert_eq!(read_dimacs(&path).unwrap(), f);
    let err = read_dimacs(&dir.path().join("missing.cnf")).unwrap_err().to_string();
    assert!(err.contains("missing.cnf"), "{err}");
}

#[test]
fn saved_models_evaluate_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ModelConfig::desk(Architecture::QuerySat);
    config.feature_maps = 8;
    let model = Model::new(config, 4).unwrap();
    let path = dir.path().join("m.qsc");
    Checkpoint::model_only(model.clone()).save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap().model;
    assert_eq!(loaded, model);

    let formulas = [
        CnfFormula::from_ints(3, &[&[1, 2], &[-1, 3], &[-2, -3]]).unwrap(),
        CnfFormula::from_ints(4, &[&[1, -4], &[2, 3, 4], &[-1, -2]]).unwrap(),
    ];
    let graphs: Vec<FactorGraph> = formulas.iter().map(FactorGraph::new).collect();
    let a = evaluate(&model, &graphs, 8, 1000, 3, None).unwrap();
    let b = evaluate(&loaded, &graphs, 8, 1000, 3, None).unwrap();
    assert_eq!(a, b);
}

/// Reference cactus: per solver, solved times sorted ascending, prefix sums.
fn cactus_oracle(records: &[BenchRecord], solver: &str) -> Vec<(usize, f64)> {
    let mut times: Vec<f64> = records
        .iter()
        .filter(|r| r.solver == solver && matches!(r.status, BenchStatus::Sat | BenchStatus::Unsat))
        .map(|r| r.seconds)
        .collect();
    times.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    times
        .iter()
        .enumerate()
        .map(|(i, t)| {
            acc += t;
            (i + 1, acc)
        })
        .collect()
}

#[test]
fn cactus_matches_sorted_prefix_sums() {
    let statuses = [
        BenchStatus::Sat,
        BenchStatus::Timeout,
        BenchStatus::Unsat,
        BenchStatus::Sat,
        BenchStatus::Unknown,
    ];
    let mut records = Vec::new();
    for (s, solver) in ["gsat", "dpll", "querysat"].iter().enumerate() {
        for i in 0..25 {
            records.push(BenchRecord {
                instance: i,
                solver: solver.to_string(),
                status: statuses[(i * 7 + s) % statuses.len()],
                seconds: ((i * 37 + s * 11) % 19) as f64 * 0.125,
                work: i as u64,
                exit_step: None,
            });
        }
    }
    let points = cactus(&records);
    for solver in ["gsat", "dpll", "querysat"] {
        let got: Vec<(usize, f64)> = points
            .iter()
            .filter(|p| p.solver == solver)
            .map(|p| (p.solved_count, p.cumulative_seconds))
            .collect();
        assert_eq!(got, cactus_oracle(&records, solver), "{solver}");
    }
}
