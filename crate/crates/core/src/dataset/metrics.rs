use super::{DatasetError, SceneEntry};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorMetrics {
    pub n: usize,
    pub mae: f64,
    /// Percent.
    pub mape: f64,
}

/// MAE and MAPE over `(truth, estimate)` pairs, accumulated in order.
/// MAPE divides each error by its own truth.
pub fn compute_metrics(pairs: &[(f64, f64)]) -> Result<ErrorMetrics, DatasetError> {
    if pairs.is_empty() {
        return Err(DatasetError::Metrics("no pairs".into()));
    }
    if let Some((t, _)) = pairs.iter().find(|(t, _)| !(*t > 0.0)) {
        return Err(DatasetError::Metrics(format!("MAPE undefined for ground truth {t}")));
    }
    let (mut abs, mut rel) = (0.0, 0.0);
    for &(truth, est) in pairs {
        let e = (est - truth).abs();
        abs += e;
        rel += e / truth;
    }
    let n = pairs.len() as f64;
    Ok(ErrorMetrics {
        n: pairs.len(),
        mae: abs / n,
        mape: 100.0 * rel / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Volume,
    Energy,
}

impl Field {
    pub fn of(&self, e: &SceneEntry) -> f64 {
        match self {
            Field::Volume => e.volume_ml,
            Field::Energy => e.energy_kcal,
        }
    }
}

/// Mean of `field` over `entries`, predicted for every entry.
pub fn baseline_predictor(entries: &[SceneEntry], field: Field) -> Result<Vec<f64>, DatasetError> {
    if entries.is_empty() {
        return Err(DatasetError::Metrics("baseline needs at least one entry".into()));
    }
    // Accumulated as offsets from the first value so that equal truths give
    // exactly that value back.
    let first = field.of(&entries[0]);
    let mean = first + entries.iter().map(|e| field.of(e) - first).sum::<f64>() / entries.len() as f64;
    Ok(vec![mean; entries.len()])
}

/// Volume and energy errors for one group of scenes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupMetrics {
    pub n: usize,
    pub vmae: f64,
    pub vmape: f64,
    pub emae: f64,
    pub emape: f64,
}

impl GroupMetrics {
    pub fn from_pairs(volume: &[(f64, f64)], energy: &[(f64, f64)]) -> Result<Self, DatasetError> {
        let v = compute_metrics(volume)?;
        let e = compute_metrics(energy)?;
        Ok(Self {
            n: v.n,
            vmae: v.mae,
            vmape: v.mape,
            emae: e.mae,
            emape: e.mape,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::path::PathBuf;

    fn entry(volume: f64, energy: f64) -> SceneEntry {
        SceneEntry {
            id: String::new(),
            image: None,
            mask: PathBuf::new(),
            label: "x".into(),
            corners: vec![],
            volume_ml: volume,
            weight_g: None,
            energy_kcal: energy,
            split: None,
        }
    }

    #[test]
    fn exact_and_single_pair() {
        let m = compute_metrics(&[(10.0, 10.0), (3.0, 3.0)]).unwrap();
        assert_eq!((m.mae, m.mape), (0.0, 0.0));
        let m = compute_metrics(&[(100.0, 90.0)]).unwrap();
        assert_eq!((m.mae, m.mape, m.n), (10.0, 10.0, 1));
    }

    #[test]
    fn hand_computed_five_pairs() {
        // |errors| = 10, 5, 0, 20, 15 → MAE 10; relative = .1, .1, 0, .4, .15 → MAPE 15%.
        let pairs = [(100.0, 110.0), (50.0, 45.0), (20.0, 20.0), (50.0, 70.0), (100.0, 85.0)];
        let m = compute_metrics(&pairs).unwrap();
        assert_eq!(m.mae, 10.0);
        assert!((m.mape - 15.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(compute_metrics(&[]).is_err());
        assert!(compute_metrics(&[(0.0, 1.0)]).is_err());
        assert!(baseline_predictor(&[], Field::Volume).is_err());
    }

    #[test]
    fn brute_force_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs: Vec<(f64, f64)> = (0..1000)
            .map(|_| (rng.random_range(1.0..500.0), rng.random_range(0.0..600.0)))
            .collect();
        let m = compute_metrics(&pairs).unwrap();
        // Reverse-order accumulation of errors as an independent oracle.
        let mut abs = 0.0;
        let mut rel = 0.0;
        for (t, e) in pairs.iter().rev() {
            abs += (t - e).abs();
            rel += (t - e).abs() / t;
        }
        assert!((m.mae - abs / 1000.0).abs() < 1e-9);
        assert!((m.mape - 100.0 * rel / 1000.0).abs() < 1e-9);
    }

    #[test]
    fn baseline_examples() {
        let es = [entry(100.0, 1.0), entry(300.0, 3.0)];
        assert_eq!(baseline_predictor(&es, Field::Volume).unwrap(), vec![200.0, 200.0]);
        let es = [entry(10.0, 1.0), entry(20.0, 1.0), entry(60.0, 1.0)];
        let pred = baseline_predictor(&es, Field::Volume).unwrap();
        let pairs: Vec<_> = es.iter().zip(&pred).map(|(e, p)| (e.volume_ml, *p)).collect();
        let mean = 30.0;
        let mad = es.iter().map(|e| (e.volume_ml - mean).abs()).sum::<f64>() / 3.0;
        assert!((compute_metrics(&pairs).unwrap().mae - mad).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            pairs in proptest::collection::vec((1.0f64..100.0, 0.0f64..200.0), 1..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = compute_metrics(&pairs).unwrap();
            let b = compute_metrics(&shuffled).unwrap();
            prop_assert!((a.mae - b.mae).abs() <= 1e-9 * a.mae.max(1.0));
            prop_assert!((a.mape - b.mape).abs() <= 1e-9 * a.mape.max(1.0));
        }

        #[test]
        fn baseline_mape_zero_iff_constant(truths in proptest::collection::vec(1.0f64..100.0, 1..20)) {
            let es: Vec<_> = truths.iter().map(|t| entry(*t, 1.0)).collect();
            let pred = baseline_predictor(&es, Field::Volume).unwrap();
            let pairs: Vec<_> = truths.iter().zip(&pred).map(|(t, p)| (*t, *p)).collect();
            let m = compute_metrics(&pairs).unwrap();
            prop_assert!(m.mape >= 0.0);
            let constant = truths.iter().all(|t| *t == truths[0]);
            prop_assert_eq!(m.mape == 0.0, constant);
        }
    }
}
