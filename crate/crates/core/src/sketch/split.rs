//! Seen/unseen few-shot splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sample::{Abstraction, LabeledSample};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seen_categories: Vec<String>,
    pub unseen_categories: Vec<String>,
    pub shots_per_class: usize,
    pub seed: u64,
    pub train_samples: Vec<String>,
    pub eval_seen_samples: Vec<String>,
    pub eval_unseen_samples: Vec<String>,
}

impl DatasetSplit {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Draws `shots` training samples per seen category and abstraction source
/// present in `samples`. Remaining seen-category samples go to the seen
/// evaluation list, every unseen-category sample to the unseen one. The
/// result depends only on the sample ids, the category lists and `seed`.
pub fn build_split(
    samples: &[LabeledSample],
    seen: &[String],
    unseen: &[String],
    shots: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    if shots == 0 {
        return Err(Error::Config("shots must be positive".into()));
    }
    let seen_set: BTreeSet<&str> = seen.iter().map(String::as_str).collect();
    let unseen_set: BTreeSet<&str> = unseen.iter().map(String::as_str).collect();
    if let Some(both) = seen_set.intersection(&unseen_set).next() {
        return Err(Error::Config(format!(
            "category `{both}` is listed as both seen and unseen"
        )));
    }
    let mut ids = HashSet::new();
    for s in samples {
        if !ids.insert(s.id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate sample id `{}`", s.id)));
        }
    }

    let sources: BTreeSet<Abstraction> = samples.iter().map(|s| s.abstraction).collect();
    let mut buckets: BTreeMap<(&str, Abstraction), Vec<&str>> = BTreeMap::new();
    let mut eval_unseen = Vec::new();
    for s in samples {
        if seen_set.contains(s.category.as_str()) {
            buckets
                .entry((s.category.as_str(), s.abstraction))
                .or_default()
                .push(s.id.as_str());
        } else if unseen_set.contains(s.category.as_str()) {
            eval_unseen.push(s.id.clone());
        }
    }
    eval_unseen.sort();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut eval_seen = Vec::new();
    for category in seen {
        for &source in &sources {
            let mut bucket = buckets
                .remove(&(category.as_str(), source))
                .unwrap_or_default();
            if bucket.len() < shots {
                return Err(Error::InsufficientSamples {
                    category: category.clone(),
                    source_kind: source.source_tag().to_string(),
                    available: bucket.len(),
                    required: shots,
                });
            }
            bucket.sort_unstable();
            bucket.shuffle(&mut rng);
            train.extend(bucket[..shots].iter().map(|s| s.to_string()));
            eval_seen.extend(bucket[shots..].iter().map(|s| s.to_string()));
        }
    }
    eval_seen.sort();

    Ok(DatasetSplit {
        seen_categories: seen.to_vec(),
        unseen_categories: unseen.to_vec(),
        shots_per_class: shots,
        seed,
        train_samples: train,
        eval_seen_samples: eval_seen,
        eval_unseen_samples: eval_unseen,
    })
}
