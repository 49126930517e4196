use super::{DatasetError, SceneEntry};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

/// Stratified split: each class contributes `round(n·test_fraction)` test
/// entries, clamped so both sides get at least one. Classes are visited in
/// label order and shuffled with one seeded stream, so a seed fixes the
/// split. Both halves keep the input order.
pub fn split_dataset(
    entries: &[SceneEntry],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<SceneEntry>, Vec<SceneEntry>), DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::Split(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        classes.entry(&e.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; entries.len()];
    for (label, mut idx) in classes {
        let n = idx.len();
        if n < 2 {
            return Err(DatasetError::Split(format!(
                "class `{label}` has {n} entry; stratification needs at least 2"
            )));
        }
        let k = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        idx.shuffle(&mut rng);
        for &i in &idx[..k] {
            is_test[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (e, t) in entries.iter().zip(is_test) {
        if t {
            test.push(e.clone());
        } else {
            train.push(e.clone());
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::path::PathBuf;

    fn entries(per_class: &[(&str, usize)]) -> Vec<SceneEntry> {
        per_class
            .iter()
            .flat_map(|(label, n)| {
                (0..*n).map(move |i| SceneEntry {
                    id: format!("{label}{i}"),
                    image: None,
                    mask: PathBuf::new(),
                    label: label.to_string(),
                    corners: vec![],
                    volume_ml: 1.0,
                    weight_g: None,
                    energy_kcal: 1.0,
                    split: None,
                })
            })
            .collect()
    }

    fn ids(es: &[SceneEntry]) -> Vec<String> {
        es.iter().map(|e| e.id.clone()).collect()
    }

    #[test]
    fn ten_per_class_gives_two_test() {
        let es = entries(&[("a", 10), ("b", 10), ("c", 10)]);
        let (train, test) = split_dataset(&es, 0.2, 3).unwrap();
        assert_eq!((train.len(), test.len()), (24, 6));
        for label in ["a", "b", "c"] {
            assert_eq!(test.iter().filter(|e| e.label == label).count(), 2);
        }
    }

    #[test]
    fn deterministic_partition() {
        let es = entries(&[("a", 7), ("b", 13), ("c", 2)]);
        let (tr1, te1) = split_dataset(&es, 0.2, 42).unwrap();
        let (tr2, te2) = split_dataset(&es, 0.2, 42).unwrap();
        assert_eq!((ids(&tr1), ids(&te1)), (ids(&tr2), ids(&te2)));
        let all: HashSet<_> = ids(&tr1).into_iter().chain(ids(&te1)).collect();
        assert_eq!(all.len(), es.len());
        assert!(ids(&tr1).iter().all(|i| !ids(&te1).contains(i)));
        let (_, te3) = split_dataset(&es, 0.2, 43).unwrap();
        assert_ne!(ids(&te1), ids(&te3));
    }

    #[test]
    fn singleton_class_rejected() {
        let es = entries(&[("a", 5), ("b", 1)]);
        assert!(matches!(split_dataset(&es, 0.2, 0), Err(DatasetError::Split(_))));
        assert!(split_dataset(&entries(&[("a", 5)]), 1.0, 0).is_err());
    }
}
