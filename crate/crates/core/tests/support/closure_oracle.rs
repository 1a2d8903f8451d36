//! Naive fixed-point closure used to check `inference::close`.
//!
//! Costs are relaxed Bellman-Ford style over the whole unbounded closure
//! until nothing changes, then filtered by the depth cap. This shares no
//! code with the level-wise engine.

use std::collections::{BTreeMap, BTreeSet};

use calibench_core::kb::PredicateMeta;

pub type Key = (String, String, String);

/// (subject, predicate, object, truth, depth)
pub type Labeled = (String, String, String, bool, usize);

fn relax(cost: &mut BTreeMap<Key, usize>, key: Key, c: usize) -> bool {
    match cost.get(&key) {
        Some(&old) if old <= c => false,
        _ => {
            cost.insert(key, c);
            true
        }
    }
}

pub fn naive_closure(
    base: &[Key],
    meta: &BTreeMap<String, PredicateMeta>,
    max_depth: usize,
) -> BTreeSet<Labeled> {
    let mut cost: BTreeMap<Key, usize> = base.iter().cloned().map(|k| (k, 0)).collect();
    loop {
        let snapshot: Vec<(Key, usize)> = cost.iter().map(|(k, c)| (k.clone(), *c)).collect();
        let mut changed = false;
        for ((s, p, o), c) in &snapshot {
            let Some(m) = meta.get(p) else { continue };
            if m.symmetric {
                changed |= relax(&mut cost, (o.clone(), p.clone(), s.clone()), c + 1);
            }
            if let Some(inv) = &m.inverse {
                changed |= relax(&mut cost, (o.clone(), inv.clone(), s.clone()), c + 1);
            }
            if m.transitive {
                for ((s2, p2, o2), c2) in &snapshot {
                    if p2 == p && s2 == o {
                        changed |= relax(&mut cost, (s.clone(), p.clone(), o2.clone()), c + c2 + 1);
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let truths: BTreeMap<Key, usize> = cost.into_iter().filter(|(_, c)| *c <= max_depth).collect();
    let mut negs: BTreeMap<Key, usize> = BTreeMap::new();
    for ((s, p, o), c) in &truths {
        if *c + 1 > max_depth {
            continue;
        }
        if let Some(neg) = meta.get(p).and_then(|m| m.negation.clone()) {
            let key = (s.clone(), neg, o.clone());
            if !truths.contains_key(&key) {
                relax(&mut negs, key, c + 1);
            }
        }
    }

    truths
        .into_iter()
        .filter(|(_, c)| *c >= 1)
        .map(|((s, p, o), c)| (s, p, o, true, c))
        .chain(negs.into_iter().map(|((s, p, o), c)| (s, p, o, false, c)))
        .collect()
}
