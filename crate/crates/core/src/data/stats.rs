use std::ops::Add;

use serde::{Deserialize, Serialize};

use super::Vehicle;

/// Fleet summary counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub vehicles: usize,
    pub anomalous_vehicles: usize,
    pub snippets: usize,
    pub capacity_labels: usize,
}

impl Add for DatasetStats {
    type Output = DatasetStats;

    fn add(self, o: DatasetStats) -> DatasetStats {
        DatasetStats {
            vehicles: self.vehicles + o.vehicles,
            anomalous_vehicles: self.anomalous_vehicles + o.anomalous_vehicles,
            snippets: self.snippets + o.snippets,
            capacity_labels: self.capacity_labels + o.capacity_labels,
        }
    }
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "vehicles            {}", self.vehicles)?;
        writeln!(f, "anomalous vehicles  {}", self.anomalous_vehicles)?;
        writeln!(f, "charging snippets   {}", self.snippets)?;
        write!(f, "capacity labels     {}", self.capacity_labels)
    }
}

pub fn dataset_stats(vehicles: &[Vehicle]) -> DatasetStats {
    vehicles
        .iter()
        .map(|v| DatasetStats {
            vehicles: 1,
            anomalous_vehicles: v.is_anomalous() as usize,
            snippets: v.snippets.len(),
            capacity_labels: v.snippets.iter().filter(|s| s.capacity_label.is_some()).count(),
        })
        .fold(DatasetStats::default(), Add::add)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::snippet::test_support::ramp_record;
    use crate::data::{extract_snippets, HealthLabel};

    fn fleet(n: usize, per: usize, offset: usize) -> Vec<Vehicle> {
        let base = extract_snippets(&ramp_record(128), 128, 64).unwrap().remove(0);
        (0..n)
            .map(|i| {
                let id = format!("v{}", i + offset);
                Vehicle {
                    vehicle_id: id.clone(),
                    health_label: if i % 3 == 0 { HealthLabel::Anomalous } else { HealthLabel::Normal },
                    snippets: (0..per)
                        .map(|k| {
                            let mut s = base.clone();
                            s.vehicle_id = id.clone();
                            s.snippet_index = k;
                            s.capacity_label = (k % 2 == 0).then_some(40.0);
                            s
                        })
                        .collect(),
                }
            })
            .collect()
    }

    #[test]
    fn empty_is_zero() {
        assert_eq!(dataset_stats(&[]), DatasetStats::default());
    }

    #[test]
    fn ten_by_twenty() {
        let s = dataset_stats(&fleet(10, 20, 0));
        assert_eq!(s.vehicles, 10);
        assert_eq!(s.snippets, 200);
        assert_eq!(s.anomalous_vehicles, 4);
        assert_eq!(s.capacity_labels, 100);
    }

    #[test]
    fn additive_over_disjoint_fleets() {
        let a = fleet(4, 3, 0);
        let b = fleet(7, 5, 100);
        let mut ab = a.clone();
        ab.extend(b.iter().cloned());
        assert_eq!(dataset_stats(&ab), dataset_stats(&a) + dataset_stats(&b));
    }
}
