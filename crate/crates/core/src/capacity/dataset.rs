use crate::data::{ChargingSnippet, Vehicle};

/// One vehicle's capacity-labeled snippets.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityVehicle {
    pub vehicle_id: String,
    pub snippets: Vec<ChargingSnippet>,
}

/// Capacity-labeled snippets grouped by vehicle, with no health labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CapacityDataset {
    pub vehicles: Vec<CapacityVehicle>,
}

impl CapacityDataset {
    /// Keep labeled snippets only. Vehicles without any stay listed so fold
    /// assignment sees the whole fleet.
    pub fn from_vehicles(vehicles: &[Vehicle]) -> Self {
        let vehicles = vehicles
            .iter()
            .map(|v| CapacityVehicle {
                vehicle_id: v.vehicle_id.clone(),
                snippets: v.snippets.iter().filter(|s| s.capacity_label.is_some()).cloned().collect(),
            })
            .collect();
        CapacityDataset { vehicles }
    }

    pub fn n_labeled(&self) -> usize {
        self.vehicles.iter().map(|v| v.snippets.len()).sum()
    }

    pub fn vehicle_ids(&self) -> Vec<String> {
        self.vehicles.iter().map(|v| v.vehicle_id.clone()).collect()
    }

    /// Snippets of the given vehicles, in dataset order.
    pub fn snippets_of<'a>(&'a self, ids: &[String]) -> Vec<&'a ChargingSnippet> {
        self.vehicles
            .iter()
            .filter(|v| ids.contains(&v.vehicle_id))
            .flat_map(|v| &v.snippets)
            .collect()
    }

    /// Population standard deviation of all labels.
    pub fn label_std(&self) -> Option<f64> {
        let labels: Vec<f64> = self.vehicles.iter().flat_map(|v| &v.snippets).filter_map(|s| s.capacity_label).collect();
        if labels.is_empty() {
            return None;
        }
        let n = labels.len() as f64;
        let mean = labels.iter().sum::<f64>() / n;
        Some((labels.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::HealthLabel;
    use crate::detectors::test_support::toy_vehicle;

    #[test]
    fn keeps_only_labeled_snippets_and_every_vehicle() {
        let mut a = toy_vehicle("a", 4, 0.003, HealthLabel::Anomalous);
        a.snippets[1].capacity_label = Some(40.0);
        a.snippets[3].capacity_label = Some(39.0);
        let b = toy_vehicle("b", 3, 0.003, HealthLabel::Normal);
        let d = CapacityDataset::from_vehicles(&[a, b]);
        assert_eq!(d.vehicle_ids(), vec!["a".to_string(), "b".to_string()]);
        assert_eq!(d.n_labeled(), 2);
        assert!(d.vehicles[1].snippets.is_empty());
        assert_eq!(d.snippets_of(&["a".into()]).len(), 2);
        assert!((d.label_std().unwrap() - 0.5).abs() < 1e-12);
    }
}
