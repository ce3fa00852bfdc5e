use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data::Vehicle;
use crate::seed;

/// Vehicle roles for one cross-validation round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRoles {
    pub round: usize,
    /// Normal vehicles from every fold except this round's.
    pub train: Vec<String>,
    /// Anomalous fold added to the training normals for selecting (h, τ).
    pub validation_anomalous: Vec<String>,
    pub test_normal: Vec<String>,
    pub test_anomalous: Vec<String>,
}

impl RoundRoles {
    /// Validation set: the training normals plus one anomalous fold.
    pub fn validation(&self) -> impl Iterator<Item = (&str, bool)> {
        self.train
            .iter()
            .map(|v| (v.as_str(), false))
            .chain(self.validation_anomalous.iter().map(|v| (v.as_str(), true)))
    }

    pub fn test(&self) -> impl Iterator<Item = (&str, bool)> {
        self.test_normal
            .iter()
            .map(|v| (v.as_str(), false))
            .chain(self.test_anomalous.iter().map(|v| (v.as_str(), true)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub normal_folds: Vec<Vec<String>>,
    pub anomalous_folds: Vec<Vec<String>>,
    pub rounds: Vec<RoundRoles>,
}

fn shuffled_folds(mut ids: Vec<String>, k: usize, seed: u64) -> Vec<Vec<String>> {
    ids.shuffle(&mut seed::rng(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    folds
}

/// Seeded shuffle then round-robin split into `k` folds, no stratification.
pub fn build_plain_folds(ids: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFoldCount(k));
    }
    if ids.len() < k {
        return Err(EvalError::InsufficientVehicles {
            class: "labeled",
            needed: k,
            got: ids.len(),
            k,
        });
    }
    Ok(shuffled_folds(ids.to_vec(), k, seed))
}

/// Stratified `k`-fold plan with the normal-only training role map.
pub fn build_folds(vehicles: &[Vehicle], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFoldCount(k));
    }
    let (anom, norm): (Vec<&Vehicle>, Vec<&Vehicle>) = vehicles.iter().partition(|v| v.is_anomalous());
    for (class, got) in [("normal", norm.len()), ("anomalous", anom.len())] {
        if got < k {
            return Err(EvalError::InsufficientVehicles { class, needed: k, got, k });
        }
    }
    let ids = |vs: &[&Vehicle]| vs.iter().map(|v| v.vehicle_id.clone()).collect::<Vec<_>>();
    let normal_folds = shuffled_folds(ids(&norm), k, seed::derive(seed, 0));
    let anomalous_folds = shuffled_folds(ids(&anom), k, seed::derive(seed, 1));
    let rounds = (0..k)
        .map(|r| RoundRoles {
            round: r,
            train: (0..k).filter(|&f| f != r).flat_map(|f| normal_folds[f].clone()).collect(),
            validation_anomalous: anomalous_folds[r].clone(),
            test_normal: normal_folds[r].clone(),
            test_anomalous: (0..k).filter(|&f| f != r).flat_map(|f| anomalous_folds[f].clone()).collect(),
        })
        .collect();
    let plan = FoldPlan {
        k,
        normal_folds,
        anomalous_folds,
        rounds,
    };
    plan.validate()?;
    Ok(plan)
}

impl FoldPlan {
    /// Checks the partition and per-round role invariants.
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::PlanInvariant(m));
        if self.normal_folds.len() != self.k || self.anomalous_folds.len() != self.k || self.rounds.len() != self.k {
            return bad("fold or round count differs from k".into());
        }
        let normals: HashSet<&String> = self.normal_folds.iter().flatten().collect();
        let anomalies: HashSet<&String> = self.anomalous_folds.iter().flatten().collect();
        if normals.len() != self.normal_folds.iter().map(Vec::len).sum::<usize>()
            || anomalies.len() != self.anomalous_folds.iter().map(Vec::len).sum::<usize>()
        {
            return bad("folds overlap".into());
        }
        if !normals.is_disjoint(&anomalies) {
            return bad("vehicle in both classes".into());
        }
        for (r, roles) in self.rounds.iter().enumerate() {
            let others = |folds: &[Vec<String>]| -> HashSet<String> {
                (0..self.k).filter(|&f| f != r).flat_map(|f| folds[f].iter().cloned()).collect()
            };
            let set = |v: &[String]| v.iter().cloned().collect::<HashSet<String>>();
            if roles.round != r
                || set(&roles.train) != others(&self.normal_folds)
                || set(&roles.validation_anomalous) != set(&self.anomalous_folds[r])
                || set(&roles.test_normal) != set(&self.normal_folds[r])
                || set(&roles.test_anomalous) != others(&self.anomalous_folds)
            {
                return bad(format!("round {r} role map"));
            }
            let total = roles.train.len() + roles.validation_anomalous.len() + roles.test_normal.len() + roles.test_anomalous.len();
            let distinct: HashSet<&String> = roles
                .train
                .iter()
                .chain(&roles.validation_anomalous)
                .chain(&roles.test_normal)
                .chain(&roles.test_anomalous)
                .collect();
            if distinct.len() != total {
                return bad(format!("round {r} repeats a vehicle across roles"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::HealthLabel;
    use proptest::prelude::*;

    pub(crate) fn bare_fleet(n_normal: usize, n_anom: usize) -> Vec<Vehicle> {
        (0..n_normal + n_anom)
            .map(|i| Vehicle {
                vehicle_id: format!("v{i}"),
                health_label: if i < n_normal { HealthLabel::Normal } else { HealthLabel::Anomalous },
                snippets: Vec::new(),
            })
            .collect()
    }

    #[test]
    fn twenty_plus_five() {
        let plan = build_folds(&bare_fleet(20, 5), 5, 7).unwrap();
        for r in &plan.rounds {
            assert_eq!(r.train.len(), 16);
            assert_eq!(r.validation_anomalous.len(), 1);
            assert_eq!(r.test_normal.len(), 4);
            assert_eq!(r.test_anomalous.len(), 4);
        }
    }

    #[test]
    fn too_few_anomalies_names_the_class() {
        let err = build_folds(&bare_fleet(20, 4), 5, 0).unwrap_err();
        assert!(err.to_string().contains("anomalous"));
        let err = build_folds(&bare_fleet(3, 10), 5, 0).unwrap_err();
        assert!(err.to_string().contains("normal"));
    }

    #[test]
    fn same_seed_same_plan() {
        let f = bare_fleet(12, 7);
        assert_eq!(build_folds(&f, 5, 3).unwrap(), build_folds(&f, 5, 3).unwrap());
        assert_ne!(build_folds(&f, 5, 3).unwrap(), build_folds(&f, 5, 4).unwrap());
    }

    #[test]
    fn each_normal_tested_once() {
        let f = bare_fleet(23, 9);
        let plan = build_folds(&f, 5, 11).unwrap();
        let mut seen: Vec<&String> = plan.rounds.iter().flat_map(|r| &r.test_normal).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 23);
        for v in f.iter().filter(|v| v.is_anomalous()) {
            let as_val = plan.rounds.iter().filter(|r| r.validation_anomalous.contains(&v.vehicle_id)).count();
            let as_test = plan.rounds.iter().filter(|r| r.test_anomalous.contains(&v.vehicle_id)).count();
            assert_eq!((as_val, as_test), (1, 4));
        }
    }

    #[test]
    fn tampered_plan_fails_validation() {
        let mut plan = build_folds(&bare_fleet(10, 5), 5, 1).unwrap();
        let moved = plan.rounds[0].test_normal[0].clone();
        plan.rounds[0].train.push(moved);
        assert!(plan.validate().is_err());
    }

    proptest! {
        #[test]
        fn invariants_hold(n in 5usize..40, a in 5usize..20, seed in any::<u64>()) {
            let plan = build_folds(&bare_fleet(n, a), 5, seed).unwrap();
            prop_assert!(plan.validate().is_ok());
            let sizes: Vec<usize> = plan.normal_folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
