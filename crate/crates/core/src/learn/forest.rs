//! Bagged classification trees with Gini splits and per-split feature
//! subsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestSpec {
    #[serde(default = "default_trees")]
    pub trees: usize,
    /// Candidate features per split; `floor(sqrt(p))` when absent.
    #[serde(default)]
    pub mtry: Option<usize>,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
}

fn default_trees() -> usize {
    500
}

fn default_min_leaf() -> usize {
    1
}

impl Default for ForestSpec {
    fn default() -> Self {
        ForestSpec {
            trees: default_trees(),
            mtry: None,
            min_leaf: default_min_leaf(),
        }
    }
}

impl ForestSpec {
    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (p as f64).sqrt().floor() as usize)
            .clamp(1, p.max(1))
    }
}

pub const LEAF: u32 = u32::MAX;

/// A tree as parallel node arrays. Leaves have `feature == LEAF`; internal
/// nodes send `x <= threshold` to `left`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<u32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    /// Bootstrap class counts `[non-default, default]` at each node.
    pub counts: Vec<[u32; 2]>,
}

impl Tree {
    fn push(&mut self, counts: [u32; 2]) -> usize {
        self.feature.push(LEAF);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.counts.push(counts);
        self.feature.len() - 1
    }

    /// Leaf reached by a row given as a feature accessor.
    pub fn leaf(&self, x: impl Fn(usize) -> f64) -> usize {
        let mut node = 0;
        while self.feature[node] != LEAF {
            let f = self.feature[node] as usize;
            node = if x(f) <= self.threshold[node] {
                self.left[node]
            } else {
                self.right[node]
            } as usize;
        }
        node
    }

    /// Majority vote for default at the leaf; an even split counts half.
    pub fn vote(&self, x: impl Fn(usize) -> f64) -> f64 {
        let [n0, n1] = self.counts[self.leaf(x)];
        match n1.cmp(&n0) {
            std::cmp::Ordering::Greater => 1.0,
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Less => 0.0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.feature.len()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Forest {
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Mean decrease in Gini impurity per feature, averaged over trees.
    pub importance: Vec<f64>,
    /// Out-of-bag vote fraction per training row; `None` when the row was
    /// in every bootstrap sample.
    #[serde(skip)]
    pub oob: Vec<Option<f64>>,
}

/// Equality of the fitted model; out-of-bag bookkeeping is not compared.
impl PartialEq for Forest {
    fn eq(&self, other: &Forest) -> bool {
        self.n_features == other.n_features && self.trees == other.trees && self.importance == other.importance
    }
}

impl Forest {
    /// Fraction of trees voting default.
    pub fn score_row(&self, x: impl Fn(usize) -> f64 + Copy) -> f64 {
        self.trees.iter().map(|t| t.vote(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Scores for every row of column-major `columns`.
    pub fn score(&self, columns: &[&[f64]]) -> Vec<f64> {
        let n = columns.first().map_or(0, |c| c.len());
        (0..n)
            .into_par_iter()
            .map(|i| self.score_row(|f| columns[f][i]))
            .collect()
    }
}

/// Per-feature sorted distinct values and each row's rank among them.
struct Ranked {
    values: Vec<Vec<f64>>,
    ranks: Vec<Vec<u32>>,
}

impl Ranked {
    fn new(columns: &[&[f64]]) -> Ranked {
        let (values, ranks) = columns
            .par_iter()
            .map(|col| {
                let mut v: Vec<f64> = col.to_vec();
                v.sort_by(f64::total_cmp);
                v.dedup();
                let r: Vec<u32> = col
                    .iter()
                    .map(|x| v.binary_search_by(|p| p.total_cmp(x)).expect("value present") as u32)
                    .collect();
                (v, r)
            })
            .unzip();
        Ranked { values, ranks }
    }
}

/// Count-weighted Gini impurity, n * (1 - sum p_k^2).
fn gini(n0: f64, n1: f64) -> f64 {
    let n = n0 + n1;
    if n == 0.0 {
        0.0
    } else {
        n - (n0 * n0 + n1 * n1) / n
    }
}

struct Split {
    feature: usize,
    /// Highest rank sent left.
    rank: u32,
    decrease: f64,
}

fn best_split(
    rows: &[u32],
    y: &[bool],
    ranked: &Ranked,
    features: &[usize],
    min_leaf: usize,
    scratch: &mut Vec<(u32, bool)>,
) -> Option<Split> {
    let (mut t0, mut t1) = (0.0, 0.0);
    for &r in rows {
        if y[r as usize] {
            t1 += 1.0
        } else {
            t0 += 1.0
        }
    }
    let parent = gini(t0, t1);
    let n = rows.len();
    let mut best: Option<Split> = None;
    for &f in features {
        let rank = &ranked.ranks[f];
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (rank[r as usize], y[r as usize])));
        scratch.sort_unstable_by_key(|p| p.0);
        if scratch[0].0 == scratch[n - 1].0 {
            continue;
        }
        let (mut l0, mut l1) = (0.0, 0.0);
        for i in 0..n - 1 {
            if scratch[i].1 {
                l1 += 1.0
            } else {
                l0 += 1.0
            }
            if scratch[i].0 == scratch[i + 1].0 || i + 1 < min_leaf || n - i - 1 < min_leaf {
                continue;
            }
            let dec = parent - gini(l0, l1) - gini(t0 - l0, t1 - l1);
            if dec > 1e-12 && best.as_ref().is_none_or(|b| dec > b.decrease) {
                best = Some(Split {
                    feature: f,
                    rank: scratch[i].0,
                    decrease: dec,
                });
            }
        }
    }
    best
}

fn grow_tree(
    ranked: &Ranked,
    y: &[bool],
    spec: &ForestSpec,
    mtry: usize,
    rng: &mut ChaCha8Rng,
) -> (Tree, Vec<f64>, Vec<bool>) {
    let n = y.len();
    let p = ranked.ranks.len();
    let mut in_bag = vec![false; n];
    let sample: Vec<u32> = (0..n)
        .map(|_| {
            let i = rng.random_range(0..n);
            in_bag[i] = true;
            i as u32
        })
        .collect();

    let mut tree = Tree {
        feature: Vec::new(),
        threshold: Vec::new(),
        left: Vec::new(),
        right: Vec::new(),
        counts: Vec::new(),
    };
    let mut importance = vec![0.0; p];
    let mut order: Vec<usize> = (0..p).collect();
    let mut scratch = Vec::with_capacity(n);
    let count = |rows: &[u32]| {
        let d = rows.iter().filter(|&&r| y[r as usize]).count() as u32;
        [rows.len() as u32 - d, d]
    };

    let root = tree.push(count(&sample));
    let mut stack = vec![(root, sample)];
    while let Some((node, rows)) = stack.pop() {
        let [n0, n1] = tree.counts[node];
        if n0 == 0 || n1 == 0 || rows.len() < 2 * spec.min_leaf.max(1) {
            continue;
        }
        for k in 0..mtry {
            let j = rng.random_range(k..p);
            order.swap(k, j);
        }
        let Some(split) = best_split(&rows, y, ranked, &order[..mtry], spec.min_leaf.max(1), &mut scratch) else {
            continue;
        };
        let rank = &ranked.ranks[split.feature];
        let (l, r): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&i| rank[i as usize] <= split.rank);
        let vals = &ranked.values[split.feature];
        let threshold = (vals[split.rank as usize] + vals[split.rank as usize + 1]) / 2.0;
        importance[split.feature] += split.decrease;
        let li = tree.push(count(&l));
        let ri = tree.push(count(&r));
        tree.feature[node] = split.feature as u32;
        tree.threshold[node] = threshold;
        tree.left[node] = li as u32;
        tree.right[node] = ri as u32;
        stack.push((ri, r));
        stack.push((li, l));
    }
    (tree, importance, in_bag)
}

/// Train a forest on complete column-major data; `y` is the default flag.
/// Tree `t` draws from a ChaCha stream keyed by (`seed`, `t`), so results
/// do not depend on thread scheduling.
pub fn fit_forest(columns: &[&[f64]], y: &[bool], spec: &ForestSpec, seed: u64) -> Result<Forest> {
    let n = y.len();
    let p = columns.len();
    if spec.trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    if n < 2 || y.iter().all(|&v| v) || !y.iter().any(|&v| v) {
        return Err(Error::SingleClass {
            context: Some("forest training labels".into()),
        });
    }
    if p == 0 {
        return Err(Error::InvalidInput("forest needs at least one feature".into()));
    }
    let ranked = Ranked::new(columns);
    let mtry = spec.mtry_for(p);
    let grown: Vec<(Tree, Vec<f64>, Vec<bool>)> = (0..spec.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            grow_tree(&ranked, y, spec, mtry, &mut rng)
        })
        .collect();

    let mut importance = vec![0.0; p];
    let mut oob_votes = vec![(0.0, 0u32); n];
    for (tree, imp, in_bag) in &grown {
        for (acc, v) in importance.iter_mut().zip(imp) {
            *acc += v;
        }
        for i in (0..n).filter(|&i| !in_bag[i]) {
            oob_votes[i].0 += tree.vote(|f| columns[f][i]);
            oob_votes[i].1 += 1;
        }
    }
    importance.iter_mut().for_each(|v| *v /= spec.trees as f64);
    Ok(Forest {
        n_features: p,
        trees: grown.into_iter().map(|g| g.0).collect(),
        importance,
        oob: oob_votes
            .into_iter()
            .map(|(s, c)| (c > 0).then(|| s / c as f64))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tree_memorizes_training_rows() {
        let a = [0.1, 0.4, 0.35, 0.8, 0.9, 0.2];
        let b = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let y = [false, true, false, true, true, false];
        let spec = ForestSpec {
            trees: 1,
            mtry: Some(2),
            min_leaf: 1,
        };
        let f = fit_forest(&[&a, &b], &y, &spec, 7).unwrap();
        let cols: [&[f64]; 2] = [&a, &b];
        let s = f.score(&cols);
        // Rows outside the bootstrap may be misclassified, but every score is a vote.
        assert!(s.iter().all(|v| [0.0, 0.5, 1.0].contains(v)));
    }

    #[test]
    fn rejects_single_class() {
        let a = [1.0, 2.0];
        assert!(fit_forest(&[&a], &[true, true], &ForestSpec::default(), 1).is_err());
    }

    #[test]
    fn same_seed_same_forest() {
        let a: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64).collect();
        let y: Vec<bool> = a.iter().map(|&v| v > 20.0).collect();
        let spec = ForestSpec {
            trees: 10,
            ..ForestSpec::default()
        };
        let f1 = fit_forest(&[&a], &y, &spec, 3).unwrap();
        let f2 = fit_forest(&[&a], &y, &spec, 3).unwrap();
        assert_eq!(f1, f2);
    }
}
