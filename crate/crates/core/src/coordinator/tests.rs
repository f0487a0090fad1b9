use std::sync::Arc;

use super::*;
use crate::dataset::CsvTable;
use crate::datasite::{ApprovalPolicy, Datasite};
use crate::params::{DataParams, ModelParams};
use crate::rng::StreamRng;

fn table(rows: usize, seed: u64, header: &str) -> CsvTable {
    let mut rng = StreamRng::new(seed, 0);
    let mut text = format!("{header}\n");
    for _ in 0..rows {
        let a = rng.unit() * 10.0;
        let b = rng.unit() * 10.0;
        let y = u8::from(a + b + rng.unit() * 2.0 > 11.0);
        text.push_str(&format!("{a:.3},{b:.3},{y}\n"));
    }
    CsvTable::from_reader(text.as_bytes()).unwrap()
}

fn site(rows: usize, seed: u64) -> Arc<Datasite> {
    Arc::new(Datasite::new(
        format!("s{seed}"),
        table(rows, seed, "a,b,y"),
        ApprovalPolicy::AutoApprove,
    ))
}

fn plan(train: &[&str], model: ModelParams) -> FederationPlan {
    let mut silos: Vec<SiloSpec> = train
        .iter()
        .map(|id| SiloSpec {
            id: id.to_string(),
            address: String::new(),
            weight: None,
            role: SiloRole::Train,
        })
        .collect();
    silos.push(SiloSpec {
        id: "test".into(),
        address: String::new(),
        weight: None,
        role: SiloRole::Eval,
    });
    FederationPlan {
        silos,
        model_params: model,
        data_params: DataParams {
            target_column: "y".into(),
            ignored_columns: vec![],
            positive_label: "1".into(),
            label_names: vec!["0".into(), "1".into()],
        },
        strategy: AggregationStrategy::Uniform,
        weight_fill: WeightFillMode::Equal,
        timeout_secs: Some(30.0),
    }
}

fn schedule(base: u32, inc: u32, rounds: u32) -> ModelParams {
    ModelParams {
        n_base_estimators: base,
        n_incremental_estimators: inc,
        incremental_rounds: rounds,
        sample_fraction: 1.0,
        seed: 11,
    }
}

fn transport(train: &[(&str, usize)]) -> InProcessTransport {
    let mut t = InProcessTransport::new().with("test", site(80, 999));
    for (i, (id, rows)) in train.iter().enumerate() {
        t.insert(*id, site(*rows, i as u64 + 1));
    }
    t
}

fn run(p: &FederationPlan, t: &InProcessTransport) -> Result<FederationOutcome, CoordinatorError> {
    run_federation(p, t, RunOptions::default(), &mut |_| {})
}

#[test]
fn global_size_follows_the_schedule() {
    let t = transport(&[("a", 60), ("b", 60), ("c", 60)]);
    let p = plan(&["a", "b", "c"], schedule(20, 5, 2));
    let out = run(&p, &t).unwrap();
    let sizes: Vec<usize> = out.reports.iter().map(|r| r.global_trees).collect();
    assert_eq!(sizes, [20, 25, 30]);
    for (k, r) in out.reports.iter().enumerate() {
        for s in &r.silos {
            assert_eq!(s.status, SiloStatus::Ok);
            assert_eq!(s.trees, Some(20 + 5 * k));
        }
        let taken: usize = r.silos.iter().filter_map(|s| s.selected).sum();
        assert_eq!(taken, r.global_trees);
    }
    assert_eq!(out.forest.len(), 30);
    assert!(out.metrics.accuracy > 0.6, "{:?}", out.metrics);
}

#[test]
fn federation_is_deterministic() {
    let t = transport(&[("a", 50), ("b", 50)]);
    let p = plan(&["a", "b"], schedule(10, 3, 1));
    let x = run(&p, &t).unwrap();
    let t = transport(&[("a", 50), ("b", 50)]);
    let y = run(&p, &t).unwrap();
    assert_eq!(x.forest, y.forest);
    assert_eq!(x.metrics, y.metrics);
}

#[test]
fn proportional_fill_uses_reported_samples() {
    let t = transport(&[("a", 800), ("b", 200)]);
    let mut p = plan(&["a", "b"], schedule(10, 0, 0));
    p.weight_fill = WeightFillMode::Proportional;
    let out = run(&p, &t).unwrap();
    let w: Vec<f64> = out.reports[0]
        .silos
        .iter()
        .map(|s| s.weight.unwrap())
        .collect();
    assert!(
        (w[0] - 0.8).abs() < 1e-12 && (w[1] - 0.2).abs() < 1e-12,
        "{w:?}"
    );
}

#[test]
fn equal_fill_over_five_silos() {
    let ids = ["a", "b", "c", "d", "e"];
    let t = transport(&ids.map(|i| (i, 30)));
    let out = run(&plan(&ids, schedule(10, 0, 0)), &t).unwrap();
    for s in &out.reports[0].silos {
        assert!((s.weight.unwrap() - 0.2).abs() < 1e-12);
    }
}

#[test]
fn unreachable_silo_renormalizes_survivors() {
    // "c" is in the plan but not reachable.
    let t = transport(&[("a", 40), ("b", 40)]);
    let out = run(&plan(&["a", "b", "c"], schedule(10, 2, 1)), &t).unwrap();
    for r in &out.reports {
        assert_eq!(r.silos[2].status, SiloStatus::Failed);
        assert_eq!(r.silos[2].weight, None);
        assert_eq!(r.silos[0].weight, Some(0.5));
        assert_eq!(r.silos[1].weight, Some(0.5));
    }
    assert_eq!(out.forest.len(), 12);
}

#[test]
fn weighted_strategy_renormalizes_declared_survivors() {
    let t = transport(&[("a", 40), ("b", 40)]);
    let mut p = plan(&["a", "b", "c"], schedule(20, 0, 0));
    p.strategy = AggregationStrategy::Weighted;
    for (s, w) in p.silos.iter_mut().zip([0.5, 0.3, 0.2]) {
        s.weight = Some(w);
    }
    let out = run(&p, &t).unwrap();
    let w = out.reports[0].silos[0].weight.unwrap();
    assert!((w - 0.625).abs() < 1e-12, "{w}");
}

#[test]
fn no_reachable_train_silo() {
    let t = transport(&[]);
    let err = run(&plan(&["a"], schedule(5, 0, 0)), &t).unwrap_err();
    assert!(matches!(err, CoordinatorError::NoSuccessfulClients(0)));
}

#[test]
fn missing_eval_silo() {
    let t = InProcessTransport::new().with("a", site(40, 1));
    let err = run(&plan(&["a"], schedule(5, 0, 0)), &t).unwrap_err();
    assert!(
        matches!(err, CoordinatorError::EvalSiloUnavailable(_)),
        "{err}"
    );
}

#[test]
fn eval_schema_mismatch() {
    let other = Arc::new(Datasite::new(
        "odd",
        table(30, 5, "c,d,y"),
        ApprovalPolicy::AutoApprove,
    ));
    let t = InProcessTransport::new()
        .with("a", site(40, 1))
        .with("test", other);
    let err = run(&plan(&["a"], schedule(5, 0, 0)), &t).unwrap_err();
    assert!(matches!(err, CoordinatorError::SchemaMismatch(_)), "{err}");
}

#[test]
fn concat_keeps_every_tree() {
    let t = transport(&[("a", 40), ("b", 40)]);
    let p = plan(&["a", "b"], schedule(6, 0, 0));
    let out = run_federation(&p, &t, RunOptions { concat: true }, &mut |_| {}).unwrap();
    assert_eq!(out.forest.len(), 12);
}

#[test]
fn reports_stream_as_rounds_finish() {
    let t = transport(&[("a", 40)]);
    let mut seen = Vec::new();
    run_federation(
        &plan(&["a"], schedule(4, 2, 3)),
        &t,
        RunOptions::default(),
        &mut |r| seen.push(serde_json::to_string(r).unwrap()),
    )
    .unwrap();
    assert_eq!(seen.len(), 4);
    assert!(seen[3].contains("\"global_trees\":10"));
}
