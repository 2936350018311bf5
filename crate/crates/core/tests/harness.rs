mod support;

use std::fs;
use std::path::Path;

use nasprune::harness::{
    emit_plot_data, layer_drop_baseline, layer_drop_config, read_history, run_experiment, write_history, ExperimentConfig, HistoryRecord,
};
use nasprune::pareto::ObjectiveVector;
use nasprune::space::{SearchSpace, SpaceKind};
use nasprune::tasks::SyntheticTask;
use nasprune::trainer::TrainConfig;
use nasprune::transformer::{ModelDims, SuperNetwork};
use nasprune::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::ks_uniform;

fn small_config(methods: &str, extra: &str) -> ExperimentConfig {
    let text = format!(
        r#"{{"task":"majority","space":"MEDIUM","methods":[{methods}],"seeds":[0,1],
            "data":{{"labeled":200,"test":50}},"training":{{"epochs":1}},
            "budgets":{{"ws_seconds":1000,"standalone_seconds":1000,"max_evaluations":60}},
            "metrics":{{"bootstrap_samples":50}}{extra}}}"#
    );
    serde_json::from_str(&text).unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn two_methods_two_seeds_end_to_end() {
    let cfg = small_config(r#""ws-rs","ws-morea""#, "");
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let summary = run_experiment(&cfg, &a, false).unwrap();
    assert!(summary.failures.is_empty());

    // file accounting
    assert_eq!(
        files(&a.join("histories")),
        ["ws-morea__seed0.jsonl", "ws-morea__seed1.jsonl", "ws-rs__seed0.jsonl", "ws-rs__seed1.jsonl"]
    );
    assert_eq!(files(&a.join("metrics")), ["majority_hv.csv", "majority_ranks.csv"]);
    assert_eq!(files(&a.join("checkpoints")).len(), 2);
    let hv = fs::read_to_string(a.join("metrics/majority_hv.csv")).unwrap();
    assert!(hv.starts_with("method,seed,wallclock_s,hv,regret\n"));
    assert_eq!(hv.lines().count(), 1 + 4 * 60);

    // wallclock is cumulative and regret never negative
    let mut pooled = Vec::new();
    for path in &summary.histories {
        let h = read_history(path).unwrap();
        assert_eq!(h.len(), 60);
        assert!(h.windows(2).all(|w| w[0].wallclock_s <= w[1].wallclock_s));
        pooled.extend(h.iter().map(|r| ObjectiveVector::new(r.f0, r.f1)));
    }
    assert!(summary.metrics.hv.iter().all(|r| r.regret >= 0.0));

    // mid-ranks over the pooled sample average exactly one half, ties or not
    let norm = summary.metrics.normalizer.as_ref().unwrap();
    let n = norm.transform_all(&pooled);
    let f0: Vec<f64> = n.iter().map(|p| p.f0).collect();
    let f1: Vec<f64> = n.iter().map(|p| p.f1).collect();
    for v in [&f0, &f1] {
        assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 0.5).abs() < 1e-9, "{mean}");
    }
    // parameter counts are nearly tie-free, so their normalised values are close to uniform
    assert!(ks_uniform(&f1, 0.0, 1.0) < 0.1, "f1 KS {}", ks_uniform(&f1, 0.0, 1.0));

    // identical rerun, identical metrics
    run_experiment(&cfg, &b, false).unwrap();
    for f in ["majority_hv.csv", "majority_ranks.csv"] {
        assert_eq!(fs::read(a.join("metrics").join(f)).unwrap(), fs::read(b.join("metrics").join(f)).unwrap(), "{f}");
    }
    for f in files(&a.join("histories")) {
        assert_eq!(fs::read(a.join("histories").join(&f)).unwrap(), fs::read(b.join("histories").join(&f)).unwrap());
    }

    // refuses to overwrite unless forced
    assert!(matches!(run_experiment(&cfg, &a, false), Err(Error::OutputExists(_))));
    fs::write(a.join("notes.txt"), "keep me").unwrap();
    run_experiment(&cfg, &a, true).unwrap();
    assert_eq!(fs::read_to_string(a.join("notes.txt")).unwrap(), "keep me");

    // plot data
    let written = emit_plot_data(&a).unwrap();
    assert_eq!(written.len(), 5);
    let samples = fs::read_to_string(a.join("plots/param_samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1 + 4 * 500);
    let fronts = fs::read_to_string(a.join("plots/fronts.csv")).unwrap();
    assert!(fronts.lines().count() > 4);
}

#[test]
fn plots_need_inputs_and_write_nothing_otherwise() {
    let tmp = tempfile::tempdir().unwrap();
    let err = emit_plot_data(tmp.path()).unwrap_err();
    assert!(matches!(err, Error::MissingInput(ref m) if m.contains("config.json")), "{err}");
    assert!(!tmp.path().join("plots").exists());

    let cfg = small_config(r#""ws-rs""#, "");
    fs::write(tmp.path().join("config.json"), serde_json::to_string(&cfg).unwrap()).unwrap();
    let err = emit_plot_data(tmp.path()).unwrap_err();
    assert!(matches!(err, Error::MissingInput(ref m) if m.contains("majority_hv.csv")), "{err}");
    assert!(!tmp.path().join("plots").exists());
}

#[test]
fn failing_cells_are_isolated() {
    // an absurd learning rate blows up every training run
    let cfg = small_config(r#""ws-rs","ld""#, "");
    let cfg = ExperimentConfig {
        training: serde_json::from_str(r#"{"epochs":1,"adam":{"learning_rate":1e300}}"#).unwrap(),
        ..cfg
    };
    let tmp = tempfile::tempdir().unwrap();
    let summary = run_experiment(&cfg, tmp.path(), false).unwrap();
    let ws: Vec<_> = summary.failures.iter().filter(|f| f.method.to_string() == "ws-rs").collect();
    assert_eq!(ws.len(), 2);
    assert_eq!(files(&tmp.path().join("histories")), ["ld__seed0.jsonl", "ld__seed1.jsonl"]);
    let recorded: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("failures.json")).unwrap()).unwrap();
    assert_eq!(recorded.as_array().unwrap().len(), summary.failures.len());
}

#[test]
fn history_records_round_trip() {
    let space = SearchSpace::new(SpaceKind::Large, ModelDims::toy()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let records: Vec<HistoryRecord> = (0..20)
        .map(|i| {
            let config = space.sample_uniform(&mut rng);
            HistoryRecord {
                method: if i % 2 == 0 { "s-moasha" } else { "ws-ehvi" }.parse().unwrap(),
                task: "pattern".parse().unwrap(),
                seed: i,
                space: SpaceKind::Large,
                f0: 1.0 / (i as f64 + 3.0),
                f1: space.param_count(&config).unwrap().0 as f64,
                config,
                fidelity_epochs: (i % 3 == 0).then_some(i as usize),
                wallclock_s: 0.1 * i as f64 + 1e-17,
            }
        })
        .collect();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("h.jsonl");
    write_history(&path, &records).unwrap();
    assert_eq!(read_history(&path).unwrap(), records);
}

#[test]
fn layer_drop_yields_every_depth() {
    let dims = ModelDims::toy();
    let data = SyntheticTask {
        labeled: 100,
        test: 10,
        ..SyntheticTask::for_dims(nasprune::tasks::TaskName::Majority, &dims, 0)
    }
    .generate()
    .unwrap();
    let net = SuperNetwork::init(dims, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let train = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let out = layer_drop_baseline(&net, &data, &train, 0).unwrap();
    let h = out.archive.history();
    assert_eq!(h.len(), dims.layers);
    assert_eq!(h[0].config.values, vec![1; dims.layers]);
    assert_eq!(layer_drop_config(&dims, dims.layers - 1).values, vec![1, 0, 0, 0]);
    assert!(h.windows(2).all(|w| w[0].objectives.f1 > w[1].objectives.f1));
    assert!(h.windows(2).all(|w| w[0].wallclock_s < w[1].wallclock_s));
    let one_layer = SuperNetwork { dims: ModelDims { layers: 1, ..dims }, ..net.clone() };
    assert!(layer_drop_baseline(&one_layer, &data, &train, 0).is_err());
}

#[test]
fn pooled_normalised_objectives_are_near_uniform() {
    let cfg: ExperimentConfig = serde_json::from_str(
        r#"{"task":"majority","space":"LARGE","methods":["ws-rs","ws-morea"],"seeds":[0,1],
            "training":{"epochs":2},"budgets":{"ws_seconds":1000,"max_evaluations":60},
            "metrics":{"bootstrap_samples":50}}"#,
    )
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let summary = run_experiment(&cfg, tmp.path(), false).unwrap();
    let mut pooled = Vec::new();
    for path in &summary.histories {
        pooled.extend(read_history(path).unwrap().iter().map(|r| ObjectiveVector::new(r.f0, r.f1)));
    }
    assert!(pooled.len() >= 200);
    let n = summary.metrics.normalizer.as_ref().unwrap().transform_all(&pooled);
    for (name, v) in [("f0", n.iter().map(|p| p.f0).collect::<Vec<_>>()), ("f1", n.iter().map(|p| p.f1).collect())] {
        assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
        let ks = ks_uniform(&v, 0.0, 1.0);
        assert!(ks < 0.1, "{name} KS {ks}");
    }
}
