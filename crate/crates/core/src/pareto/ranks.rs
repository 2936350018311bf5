use rand::Rng;

use crate::error::{Error, Result};

/// 1-based ranks where the largest value gets rank 1; ties share their mean rank.
pub fn mid_ranks_descending(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Resamples a step trace onto `grid`, carrying the last observed value
/// forward. Grid points before the first observation take `initial`.
pub fn interpolate_locf(times: &[f64], values: &[f64], grid: &[f64], initial: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut k = 0;
    let mut current = initial;
    for &g in grid {
        while k < times.len() && times[k] <= g {
            current = values[k];
            k += 1;
        }
        out.push(current);
    }
    out
}

/// Bootstrap average rank of each method over time.
///
/// `traces[task][method][seed]` is a hypervolume trace on a grid shared by
/// every trace. Each draw picks one seed per (task, method), ranks the
/// methods per task and time step (higher is better), and the ranks are
/// averaged over tasks and draws. Returns `ranks[method][time]`.
pub fn average_ranks(traces: &[Vec<Vec<Vec<f64>>>], bootstrap_samples: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
    if traces.is_empty() || bootstrap_samples == 0 {
        return Err(Error::InvalidArgument("average_ranks needs at least one task and one draw".into()));
    }
    let methods = traces[0].len();
    if methods < 2 {
        return Err(Error::InvalidArgument("average_ranks needs at least two methods".into()));
    }
    let steps = traces[0].first().and_then(|s| s.first()).map_or(0, |t| t.len());
    if steps == 0 {
        return Err(Error::InvalidArgument("average_ranks got an empty time grid".into()));
    }
    for task in traces {
        if task.len() != methods {
            return Err(Error::InvalidArgument("every task needs the same methods".into()));
        }
        for seeds in task {
            if seeds.is_empty() {
                return Err(Error::InvalidArgument("a (task, method) cell has no seeds".into()));
            }
            if seeds.iter().any(|t| t.len() != steps) {
                return Err(Error::InvalidArgument("traces are not on a shared grid".into()));
            }
        }
    }
    let mut sums = vec![vec![0.0; steps]; methods];
    let mut column = vec![0.0; methods];
    for _ in 0..bootstrap_samples {
        for task in traces {
            let picks: Vec<&Vec<f64>> = task.iter().map(|seeds| &seeds[rng.gen_range(0..seeds.len())]).collect();
            for t in 0..steps {
                for (m, trace) in picks.iter().enumerate() {
                    column[m] = trace[t];
                }
                for (m, r) in mid_ranks_descending(&column).into_iter().enumerate() {
                    sums[m][t] += r;
                }
            }
        }
    }
    let denom = (bootstrap_samples * traces.len()) as f64;
    Ok(sums
        .into_iter()
        .map(|row| row.into_iter().map(|s| s / denom).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mid_ranks() {
        assert_eq!(mid_ranks_descending(&[3.0, 1.0, 2.0]), vec![1.0, 3.0, 2.0]);
        assert_eq!(mid_ranks_descending(&[1.0, 1.0, 0.0]), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn locf() {
        let v = interpolate_locf(&[1.0, 3.0], &[0.2, 0.5], &[0.0, 1.0, 2.0, 3.0, 10.0], 0.0);
        assert_eq!(v, vec![0.0, 0.2, 0.2, 0.5, 0.5]);
    }

    #[test]
    fn dominant_and_identical_methods() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let good = vec![vec![1.0, 2.0, 3.0]; 3];
        let bad = vec![vec![0.5, 1.0, 1.5]; 3];
        let r = average_ranks(&[vec![good.clone(), bad]], 50, &mut rng).unwrap();
        assert_eq!(r, vec![vec![1.0; 3], vec![2.0; 3]]);
        let r = average_ranks(&[vec![good.clone(), good]], 50, &mut rng).unwrap();
        assert_eq!(r, vec![vec![1.5; 3], vec![1.5; 3]]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(average_ranks(&[], 10, &mut rng).is_err());
        assert!(average_ranks(&[vec![vec![vec![1.0]]]], 10, &mut rng).is_err());
        assert!(average_ranks(&[vec![vec![vec![1.0]], vec![vec![1.0, 2.0]]]], 10, &mut rng).is_err());
    }
}
