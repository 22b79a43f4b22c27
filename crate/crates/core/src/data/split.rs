use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{validate_corpus, AdDocument, QARecord};
use crate::error::{Error, Result};

/// Seeded rank of an ad id. Ads are ordered by this key wherever a seeded
/// subset is taken, so an ad's position never depends on which other ads
/// are present.
pub fn ad_rank_key(seed: u64, ad_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(ad_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

/// Ad ids sorted by seeded rank (ties by id).
pub(crate) fn ranked_ids<'a>(ids: impl IntoIterator<Item = &'a str>, seed: u64) -> Vec<&'a str> {
    let mut keyed: Vec<(u64, &str)> = ids.into_iter().map(|id| (ad_rank_key(seed, id), id)).collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, id)| id).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdSplit {
    pub train: Vec<AdDocument>,
    pub validation: Vec<AdDocument>,
    pub seed: u64,
}

/// Record-level view of an [`AdSplit`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<QARecord>,
    pub validation: Vec<QARecord>,
    pub seed: u64,
}

/// Partitions ads into train and validation sides. The `round(fraction · N)`
/// lowest-ranked ads go to train; both sides keep input order.
pub fn split_by_ad(ads: &[AdDocument], train_fraction: f64, seed: u64) -> Result<AdSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if ads.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty corpus".into()));
    }
    validate_corpus(ads)?;

    let n_train = (train_fraction * ads.len() as f64).round() as usize;
    let ranked = ranked_ids(ads.iter().map(|ad| ad.id.as_str()), seed);
    let train_ids: std::collections::HashSet<&str> = ranked[..n_train].iter().copied().collect();

    let (train, validation) = ads.iter().cloned().partition(|ad| train_ids.contains(ad.id.as_str()));
    Ok(AdSplit { train, validation, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Language;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn corpus(n: usize) -> Vec<AdDocument> {
        (0..n)
            .map(|i| AdDocument::new(format!("ad{i}"), format!("text {i}"), Language::En))
            .collect()
    }

    #[test]
    fn seventy_thirty_of_ten() {
        let split = split_by_ad(&corpus(10), 0.7, 0).unwrap();
        assert_eq!(split.train.len(), 7);
        assert_eq!(split.validation.len(), 3);
    }

    #[test]
    fn deterministic_under_seed() {
        let ads = corpus(50);
        assert_eq!(split_by_ad(&ads, 0.7, 3).unwrap(), split_by_ad(&ads, 0.7, 3).unwrap());
        assert_ne!(split_by_ad(&ads, 0.7, 3).unwrap(), split_by_ad(&ads, 0.7, 4).unwrap());
    }

    #[test]
    fn runaways_corpus_size_gives_585_train_ads() {
        let split = split_by_ad(&corpus(835), 0.7, 0).unwrap();
        assert_eq!(split.train.len(), 585);
        assert_eq!(split.validation.len(), 250);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(split_by_ad(&corpus(3), 0.0, 0).is_err());
        assert!(split_by_ad(&corpus(3), 1.0, 0).is_err());
        assert!(split_by_ad(&[], 0.5, 0).is_err());
        let mut ads = corpus(3);
        ads[2].id = "ad0".into();
        assert!(matches!(split_by_ad(&ads, 0.5, 0), Err(Error::DuplicateIds(_))));
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 1usize..60, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let ads = corpus(n);
            let split = split_by_ad(&ads, frac, seed).unwrap();
            let train: HashSet<_> = split.train.iter().map(|a| a.id.clone()).collect();
            let val: HashSet<_> = split.validation.iter().map(|a| a.id.clone()).collect();
            prop_assert!(train.is_disjoint(&val));
            prop_assert_eq!(train.len() + val.len(), n);
            prop_assert_eq!(train.len(), (frac * n as f64).round() as usize);
        }

        #[test]
        fn adding_ads_keeps_relative_rank(n in 2usize..40, seed in any::<u64>()) {
            let small = ranked_ids(corpus(n).iter().map(|a| a.id.as_str()).collect::<Vec<_>>(), seed)
                .into_iter().map(String::from).collect::<Vec<_>>();
            let big_ads = corpus(n + 10);
            let big: Vec<String> = ranked_ids(big_ads.iter().map(|a| a.id.as_str()), seed)
                .into_iter().filter(|id| small.contains(&id.to_string())).map(String::from).collect();
            prop_assert_eq!(small, big);
        }
    }
}
