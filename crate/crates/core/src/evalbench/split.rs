use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataio::{Edge, LabeledEdges};
use crate::error::{Error, Result};
use crate::numkit::Rng;

/// Genes held out of training: `max(1, round(n/4))`.
pub fn unseen_count(n: usize) -> usize {
    ((n as f64 / 4.0).round() as usize).max(1)
}

/// Gene-level train / seen-test / unseen-test partition of a label set.
///
/// A gene is unseen if it was held out in either role; edges touching an
/// unseen gene never reach the train or seen-test sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSplit {
    pub seen_tfs: BTreeSet<usize>,
    pub unseen_tfs: BTreeSet<usize>,
    pub seen_tgs: BTreeSet<usize>,
    pub unseen_tgs: BTreeSet<usize>,
    pub train: LabeledEdges,
    pub seen_test: LabeledEdges,
    pub unseen_test: LabeledEdges,
    pub dropped: LabeledEdges,
}

impl BenchmarkSplit {
    /// Union of unseen TFs and unseen TGs.
    pub fn unseen_genes(&self) -> BTreeSet<usize> {
        self.unseen_tfs.union(&self.unseen_tgs).copied().collect()
    }
}

fn hold_out(genes: &BTreeSet<usize>, rng: &mut Rng) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut order: Vec<usize> = genes.iter().copied().collect();
    rng.shuffle(&mut order);
    let k = unseen_count(order.len());
    let unseen = order[..k].iter().copied().collect();
    let seen = order[k..].iter().copied().collect();
    (seen, unseen)
}

/// Splits TFs and TGs 3:1 into seen/unseen, then the seen x seen edges
/// 3:1 into train/seen-test.
pub fn make_split(edges: &LabeledEdges, seed: u64) -> Result<BenchmarkSplit> {
    let tfs = edges.tfs();
    let tgs = edges.tgs();
    if tfs.len() < 4 || tgs.len() < 4 {
        return Err(Error::TooFewGenes {
            tfs: tfs.len(),
            tgs: tgs.len(),
        });
    }
    let mut rng = Rng::seed_from_u64(seed);
    let (seen_tfs, unseen_tfs) = hold_out(&tfs, &mut rng);
    let (seen_tgs, unseen_tgs) = hold_out(&tgs, &mut rng);
    let unseen: BTreeSet<usize> = unseen_tfs.union(&unseen_tgs).copied().collect();

    let mut seen_edges = Vec::new();
    let mut unseen_test = Vec::new();
    let mut dropped = Vec::new();
    for &e in edges.edges() {
        if unseen_tfs.contains(&e.tf) && unseen_tgs.contains(&e.tg) {
            unseen_test.push(e);
        } else if !unseen.contains(&e.tf) && !unseen.contains(&e.tg) {
            seen_edges.push(e);
        } else {
            dropped.push(e);
        }
    }
    rng.shuffle(&mut seen_edges);
    let n_train = (seen_edges.len() as f64 * 0.75).round() as usize;
    let seen_test = seen_edges.split_off(n_train);
    Ok(BenchmarkSplit {
        seen_tfs,
        unseen_tfs,
        seen_tgs,
        unseen_tgs,
        train: edges.with_edges(seen_edges)?,
        seen_test: edges.with_edges(seen_test)?,
        unseen_test: edges.with_edges(unseen_test)?,
        dropped: edges.with_edges(dropped)?,
    })
}

/// Per TF, keeps a random subset of negatives no larger than its
/// positive count. Edge order otherwise follows the input.
pub fn downsample_negatives(train: &LabeledEdges, seed: u64) -> Result<LabeledEdges> {
    let mut rng = Rng::seed_from_u64(seed);
    let mut pos: BTreeMap<usize, usize> = BTreeMap::new();
    let mut neg: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (idx, e) in train.edges().iter().enumerate() {
        if e.label {
            *pos.entry(e.tf).or_default() += 1;
        } else {
            neg.entry(e.tf).or_default().push(idx);
        }
    }
    let mut keep = vec![true; train.len()];
    for (tf, mut negs) in neg {
        let quota = pos.get(&tf).copied().unwrap_or(0);
        if negs.len() > quota {
            rng.shuffle(&mut negs);
            for &idx in &negs[quota..] {
                keep[idx] = false;
            }
        }
    }
    let edges: Vec<Edge> = train
        .edges()
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(e, _)| *e)
        .collect();
    train.with_edges(edges)
}

/// Positive fraction of each TF with at least one labeled edge.
pub fn tf_imbalance(train: &LabeledEdges) -> BTreeMap<usize, f64> {
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for e in train.edges() {
        let c = counts.entry(e.tf).or_default();
        c.0 += usize::from(e.label);
        c.1 += 1;
    }
    counts
        .into_iter()
        .map(|(tf, (p, n))| (tf, p as f64 / n as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("g{i}")).collect()
    }

    fn grid(tfs: usize, tgs: usize, rng: &mut Rng) -> LabeledEdges {
        let mut edges = vec![];
        for i in 0..tfs {
            for k in 0..tgs {
                edges.push(Edge::new(i, tfs + k, rng.bernoulli(0.3)));
            }
        }
        LabeledEdges::new(names(tfs + tgs), edges).unwrap()
    }

    #[test]
    fn unseen_count_examples() {
        assert_eq!(unseen_count(3), 1);
        assert_eq!(unseen_count(6), 2);
        assert_eq!(unseen_count(4), 1);
        assert_eq!(unseen_count(8), 2);
        assert_eq!(unseen_count(1), 1);
    }

    #[test]
    fn four_by_eight_split() {
        let e = grid(4, 8, &mut Rng::seed_from_u64(1));
        let s = make_split(&e, 3).unwrap();
        assert_eq!(s.unseen_tfs.len(), 1);
        assert_eq!(s.unseen_tgs.len(), 2);
        assert_eq!(s.unseen_test.len(), 2);
        // 3 seen TFs x 6 seen TGs, split 3:1.
        assert_eq!(s.train.len() + s.seen_test.len(), 18);
        assert_eq!(s.train.len(), 14);
        assert_eq!(s.dropped.len(), 32 - 18 - 2);
    }

    #[test]
    fn too_few_genes() {
        let e = grid(3, 6, &mut Rng::seed_from_u64(1));
        assert!(matches!(make_split(&e, 0), Err(Error::TooFewGenes { tfs: 3, tgs: 6 })));
    }

    #[test]
    fn split_is_seeded() {
        let e = grid(6, 10, &mut Rng::seed_from_u64(2));
        assert_eq!(make_split(&e, 9).unwrap(), make_split(&e, 9).unwrap());
        assert_ne!(make_split(&e, 9).unwrap(), make_split(&e, 10).unwrap());
    }

    #[test]
    fn genes_in_both_roles_stay_isolated() {
        let mut rng = Rng::seed_from_u64(4);
        let mut edges = vec![];
        for i in 0..6 {
            for k in 0..12 {
                if i != k {
                    edges.push(Edge::new(i, k, rng.bernoulli(0.4)));
                }
            }
        }
        let e = LabeledEdges::new(names(12), edges).unwrap();
        for seed in 0..50 {
            let s = make_split(&e, seed).unwrap();
            let unseen = s.unseen_genes();
            for t in s.train.edges().iter().chain(s.seen_test.edges()) {
                assert!(!unseen.contains(&t.tf) && !unseen.contains(&t.tg));
            }
            let total = s.train.len() + s.seen_test.len() + s.unseen_test.len() + s.dropped.len();
            assert_eq!(total, e.len());
        }
    }

    #[test]
    fn downsample_examples() {
        let mut edges = vec![];
        for k in 0..3 {
            edges.push(Edge::new(0, 10 + k, true));
        }
        for k in 3..13 {
            edges.push(Edge::new(0, 10 + k, false));
        }
        for k in 0..5 {
            edges.push(Edge::new(1, 10 + k, true));
        }
        for k in 5..7 {
            edges.push(Edge::new(1, 10 + k, false));
        }
        for k in 0..4 {
            edges.push(Edge::new(2, 10 + k, false));
        }
        let e = LabeledEdges::new(names(30), edges).unwrap();
        let d = downsample_negatives(&e, 5).unwrap();
        let count = |tf: usize, label: bool| d.edges().iter().filter(|x| x.tf == tf && x.label == label).count();
        assert_eq!((count(0, true), count(0, false)), (3, 3));
        assert_eq!((count(1, true), count(1, false)), (5, 2));
        assert_eq!((count(2, true), count(2, false)), (0, 0));
        assert_eq!(d, downsample_negatives(&e, 5).unwrap());
    }

    #[test]
    fn imbalance_examples() {
        let e = LabeledEdges::new(
            names(8),
            vec![
                Edge::new(0, 4, true),
                Edge::new(0, 5, true),
                Edge::new(0, 6, true),
                Edge::new(0, 7, false),
                Edge::new(1, 4, true),
            ],
        )
        .unwrap();
        let imb = tf_imbalance(&e);
        assert_eq!(imb[&0], 0.75);
        assert_eq!(imb[&1], 1.0);
        assert!(!imb.contains_key(&2));
    }
}
