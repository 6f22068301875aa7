//! Bidirectional stepwise subset search under an information criterion.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;

/// Scores a candidate subset (indices into the pool); lower is better.
/// `None` means the model could not be fitted and the move is skipped.
pub trait SubsetCriterion: Sync {
    fn score(&self, subset: &[usize]) -> Option<f64>;
}

impl<F: Fn(&[usize]) -> Option<f64> + Sync> SubsetCriterion for F {
    fn score(&self, subset: &[usize]) -> Option<f64> {
        self(subset)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepwiseResult {
    /// Selected pool indices, sorted.
    pub subset: Vec<usize>,
    pub score: f64,
    /// Number of accepted moves across all starts.
    pub moves: usize,
}

struct Memo<'a, C: SubsetCriterion> {
    criterion: &'a C,
    cache: Mutex<HashMap<Vec<usize>, Option<f64>>>,
}

impl<C: SubsetCriterion> Memo<'_, C> {
    fn score(&self, subset: &[usize]) -> Option<f64> {
        if let Some(v) = self.cache.lock().expect("memo lock").get(subset) {
            return *v;
        }
        let v = self.criterion.score(subset);
        self.cache.lock().expect("memo lock").insert(subset.to_vec(), v);
        v
    }
}

/// Total order used for every choice: lower score, then fewer features,
/// then lexically smaller sorted name list.
fn compare(names: &[String], a: (&[usize], f64), b: (&[usize], f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.len().cmp(&b.0.len())).then_with(|| {
        let mut na: Vec<&str> = a.0.iter().map(|&i| names[i].as_str()).collect();
        let mut nb: Vec<&str> = b.0.iter().map(|&i| names[i].as_str()).collect();
        na.sort_unstable();
        nb.sort_unstable();
        na.cmp(&nb)
    })
}

fn with(subset: &[usize], add: usize) -> Vec<usize> {
    let mut s = subset.to_vec();
    let pos = s.binary_search(&add).unwrap_or_else(|p| p);
    s.insert(pos, add);
    s
}

fn without(subset: &[usize], drop: usize) -> Vec<usize> {
    subset.iter().copied().filter(|&i| i != drop).collect()
}

/// From each start, repeatedly take the best single addition or removal
/// while it strictly lowers the criterion; keep the best end point over all
/// starts. Returns `None` when no start set can be scored.
pub fn stepwise_select<C: SubsetCriterion>(
    criterion: &C,
    names: &[String],
    starts: &[Vec<usize>],
) -> Option<StepwiseResult> {
    let memo = Memo {
        criterion,
        cache: Mutex::new(HashMap::new()),
    };
    let pool = names.len();
    let mut best: Option<StepwiseResult> = None;
    let mut moves = 0;
    for start in starts {
        let mut current: Vec<usize> = start.iter().copied().filter(|&i| i < pool).collect();
        current.sort_unstable();
        current.dedup();
        let Some(mut score) = memo.score(&current) else {
            continue;
        };
        loop {
            let mut neighbours: Vec<Vec<usize>> = (0..pool)
                .filter(|i| current.binary_search(i).is_err())
                .map(|i| with(&current, i))
                .collect();
            neighbours.extend(current.iter().map(|&i| without(&current, i)));
            let scored: Vec<(Vec<usize>, f64)> = neighbours
                .into_par_iter()
                .filter_map(|s| memo.score(&s).map(|v| (s, v)))
                .collect();
            let choice = scored
                .into_iter()
                .min_by(|a, b| compare(names, (&a.0, a.1), (&b.0, b.1)));
            match choice {
                Some((s, v)) if v < score => {
                    current = s;
                    score = v;
                    moves += 1;
                }
                _ => break,
            }
        }
        let better = match &best {
            None => true,
            Some(b) => compare(names, (&current, score), (&b.subset, b.score)) == Ordering::Less,
        };
        if better {
            best = Some(StepwiseResult {
                subset: current,
                score,
                moves: 0,
            });
        }
    }
    best.map(|mut b| {
        b.moves = moves;
        b
    })
}
