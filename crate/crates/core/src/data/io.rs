//! JSON-Lines dataset files.
//!
//! `dataset.jsonl` holds one snippet per line with keys in this order:
//! `vehicle_id`, `snippet_index`, `mileage`, `health_label`, `capacity_label`,
//! `series` (128 arrays of 8 numbers). `manifest.json` lists every vehicle
//! with its health label, in fleet order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChargingSnippet, DataError, HealthLabel, Row, Vehicle};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One line of `dataset.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnippetRecord {
    pub vehicle_id: String,
    pub snippet_index: usize,
    pub mileage: f64,
    pub health_label: HealthLabel,
    pub capacity_label: Option<f64>,
    pub series: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub vehicle_id: String,
    pub health_label: HealthLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub vehicles: Vec<ManifestEntry>,
}

/// Write `dataset.jsonl` and `manifest.json` into `dir` (created if missing).
pub fn write_dataset(dir: &Path, vehicles: &[Vehicle]) -> Result<(), DataError> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(DATASET_FILE))?);
    for v in vehicles {
        for s in &v.snippets {
            let rec = SnippetRecord {
                vehicle_id: s.vehicle_id.clone(),
                snippet_index: s.snippet_index,
                mileage: s.mileage,
                health_label: v.health_label,
                capacity_label: s.capacity_label,
                series: s.series.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    let manifest = Manifest {
        vehicles: vehicles
            .iter()
            .map(|v| ManifestEntry {
                vehicle_id: v.vehicle_id.clone(),
                health_label: v.health_label,
            })
            .collect(),
    };
    let mut m = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut m, &manifest)?;
    m.write_all(b"\n")?;
    m.flush()?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DataError> {
    let f = File::open(dir.join(MANIFEST_FILE))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

/// Read a dataset directory back into vehicles, in manifest order.
///
/// Every snippet is validated; labels must agree with the manifest.
pub fn read_dataset(dir: &Path) -> Result<Vec<Vehicle>, DataError> {
    let manifest = read_manifest(dir)?;
    let mut vehicles: Vec<Vehicle> = Vec::with_capacity(manifest.vehicles.len());
    let mut slot: HashMap<String, usize> = HashMap::new();
    for e in &manifest.vehicles {
        if slot.insert(e.vehicle_id.clone(), vehicles.len()).is_some() {
            return Err(DataError::Inconsistent(format!("duplicate vehicle {} in manifest", e.vehicle_id)));
        }
        vehicles.push(Vehicle {
            vehicle_id: e.vehicle_id.clone(),
            health_label: e.health_label,
            snippets: Vec::new(),
        });
    }
    let f = File::open(dir.join(DATASET_FILE))?;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SnippetRecord =
            serde_json::from_str(&line).map_err(|source| DataError::Parse { line: i + 1, source })?;
        let Some(&k) = slot.get(&rec.vehicle_id) else {
            return Err(DataError::Inconsistent(format!(
                "line {}: vehicle {} missing from manifest",
                i + 1,
                rec.vehicle_id
            )));
        };
        if vehicles[k].health_label != rec.health_label {
            return Err(DataError::Inconsistent(format!(
                "line {}: health label of {} disagrees with manifest",
                i + 1,
                rec.vehicle_id
            )));
        }
        let s = ChargingSnippet::new(rec.vehicle_id, rec.snippet_index, rec.mileage, rec.series, rec.capacity_label)?;
        vehicles[k].snippets.push(s);
    }
    Ok(vehicles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::extract_snippets;
    use crate::data::snippet::test_support::ramp_record;

    fn two_vehicles() -> Vec<Vehicle> {
        let mut rec = ramp_record(256);
        rec.capacity_label = Some(38.125);
        let mut a = extract_snippets(&rec, 128, 64).unwrap();
        a[1].capacity_label = None;
        rec.vehicle_id = "veh-1".into();
        let b = extract_snippets(&rec, 128, 128).unwrap();
        vec![
            Vehicle { vehicle_id: "veh-0".into(), health_label: HealthLabel::Normal, snippets: a },
            Vehicle { vehicle_id: "veh-1".into(), health_label: HealthLabel::Anomalous, snippets: b },
        ]
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let fleet = two_vehicles();
        write_dataset(dir.path(), &fleet).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), fleet);
    }

    #[test]
    fn line_layout_is_fixed() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &two_vehicles()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(DATASET_FILE)).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with(
            r#"{"vehicle_id":"veh-0","snippet_index":0,"mileage":1234.0,"health_label":0,"capacity_label":38.125,"series":[[3.6,35.0,"#
        ));
        let second = text.lines().nth(1).unwrap();
        assert!(second.contains(r#""capacity_label":null"#));
        assert_eq!(text.lines().count(), 5);
        let m = read_manifest(dir.path()).unwrap();
        assert_eq!(m.vehicles.len(), 2);
        assert_eq!(m.vehicles[1].health_label, HealthLabel::Anomalous);
    }

    #[test]
    fn label_disagreement_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let fleet = two_vehicles();
        write_dataset(dir.path(), &fleet).unwrap();
        let manifest = Manifest {
            vehicles: vec![
                ManifestEntry { vehicle_id: "veh-0".into(), health_label: HealthLabel::Anomalous },
                ManifestEntry { vehicle_id: "veh-1".into(), health_label: HealthLabel::Anomalous },
            ],
        };
        std::fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&manifest).unwrap()).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(DataError::Inconsistent(_))));
    }
}
