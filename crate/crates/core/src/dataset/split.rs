use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::manifest::{Manifest, Record};

/// Largest-remainder apportionment of `n` items over `fractions`; ties go to
/// the earlier part.
fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Stratified, seeded train/test partition.
///
/// Each class is shuffled independently and divided by largest-remainder
/// rounding. Classes with fewer samples than parts go entirely to train.
pub fn split(manifest: &Manifest, train: f64, test: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    if !(train > 0.0 && test > 0.0 && ((train + test) - 1.0).abs() < 1e-9) {
        return Err(Error::invalid(format!(
            "split fractions must be positive and sum to 1, got {train} + {test}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<Record>> = BTreeMap::new();
    for r in &manifest.records {
        by_class.entry(r.label).or_default().push(r.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train_recs, mut test_recs) = (Vec::new(), Vec::new());
    for (label, mut recs) in by_class {
        recs.shuffle(&mut rng);
        if recs.len() < 2 {
            log::warn!(
                "class {} has {} sample(s); all assigned to train",
                manifest.vocab.name(label).unwrap_or("?"),
                recs.len()
            );
            train_recs.extend(recs);
            continue;
        }
        let counts = apportion(recs.len(), &[train, test]);
        let rest = recs.split_off(counts[0]);
        train_recs.extend(recs);
        test_recs.extend(rest);
    }
    let part = |records| Manifest::new(manifest.root.clone(), manifest.vocab.clone(), records);
    Ok((part(train_recs), part(test_recs)))
}
