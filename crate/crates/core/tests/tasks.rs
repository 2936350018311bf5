use nasprune::tasks::{SyntheticTask, TaskName};
use nasprune::transformer::ModelDims;

fn spec(name: TaskName, labeled: usize, seed: u64) -> SyntheticTask {
    SyntheticTask {
        labeled,
        ..SyntheticTask::for_dims(name, &ModelDims::toy(), seed)
    }
}

#[test]
fn majority_classes_balanced_over_10k_examples() {
    let data = spec(TaskName::Majority, 10_000, 3).generate().unwrap();
    let pool: Vec<_> = data.train.iter().chain(&data.valid).collect();
    let ones = pool.iter().filter(|e| e.label == 1).count() as f64 / pool.len() as f64;
    assert!((0.48..=0.52).contains(&ones), "{ones}");
}

#[test]
fn labels_are_a_function_of_tokens() {
    for name in TaskName::ALL {
        let task = spec(name, 1000, 5);
        let data = task.generate().unwrap();
        for e in data.train.iter().chain(&data.valid).chain(&data.test) {
            assert_eq!(task.label(&e.tokens), Some(e.label));
            assert_eq!(e.tokens.len(), task.seq_len);
            assert!(e.tokens.iter().all(|&t| t < task.vocab));
        }
        let balance = data.train.iter().filter(|e| e.label == 0).count() as f64 / data.train.len() as f64;
        assert!((balance - 0.5).abs() < 0.05, "{name}: {balance}");
    }
}

#[test]
fn same_seed_same_first_batch() {
    let a = spec(TaskName::Majority, 1000, 7).generate().unwrap();
    let b = spec(TaskName::Majority, 1000, 7).generate().unwrap();
    assert_eq!(a, b);
    let c = spec(TaskName::Majority, 1000, 8).generate().unwrap();
    assert_ne!(a.train, c.train);
}

#[test]
fn split_sizes() {
    let data = spec(TaskName::Match, 1000, 1).generate().unwrap();
    assert_eq!((data.train.len(), data.valid.len(), data.test.len()), (700, 300, 300));
}

#[test]
fn invalid_specs_rejected() {
    let base = spec(TaskName::Majority, 1000, 0);
    assert!(SyntheticTask { vocab: 1, ..base.clone() }.generate().is_err());
    assert!(SyntheticTask { seq_len: 2, ..base.clone() }.generate().is_err());
    assert!(SyntheticTask { classes: 3, name: TaskName::Match, ..base }.generate().is_err());
}
