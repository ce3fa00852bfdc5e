use super::DetectorError;
use crate::data::{Channel, Vehicle};

/// Mean over the vehicle's snippets of the population variance of `channel`.
pub fn variance_score(vehicle: &Vehicle, channel: Channel) -> Result<f64, DetectorError> {
    if vehicle.snippets.is_empty() {
        return Err(DetectorError::NoSnippets);
    }
    let total: f64 = vehicle
        .snippets
        .iter()
        .map(|s| {
            let n = s.series.len() as f64;
            let mean = s.channel(channel).sum::<f64>() / n;
            s.channel(channel).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
        })
        .sum();
    Ok(total / vehicle.snippets.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::HealthLabel;
    use crate::detectors::test_support::toy_vehicle;

    #[test]
    fn constant_channel_is_zero() {
        let v = toy_vehicle("a", 3, 0.0, HealthLabel::Normal);
        let mut v = v;
        for s in &mut v.snippets {
            for r in &mut s.series {
                r[Channel::MaxTemp.index()] = 30.0;
            }
        }
        assert_eq!(variance_score(&v, Channel::MaxTemp).unwrap(), 0.0);
    }

    #[test]
    fn alternating_unit_signal() {
        let mut v = toy_vehicle("a", 1, 0.0, HealthLabel::Normal);
        for (t, r) in v.snippets[0].series.iter_mut().enumerate() {
            r[Channel::Current.index()] = if t % 2 == 0 { 1.0 } else { -1.0 };
        }
        assert_eq!(variance_score(&v, Channel::Current).unwrap(), 1.0);
    }

    #[test]
    fn soc_variance_ignores_time_shift() {
        let v = toy_vehicle("a", 4, 0.003, HealthLabel::Normal);
        let mut shifted = v.clone();
        for s in &mut shifted.snippets {
            for r in &mut s.series {
                r[Channel::Timestamp.index()] += 12345.0;
            }
        }
        assert_eq!(variance_score(&v, Channel::Soc).unwrap(), variance_score(&shifted, Channel::Soc).unwrap());
    }

    #[test]
    fn empty_vehicle_errors() {
        let mut v = toy_vehicle("a", 1, 0.0, HealthLabel::Normal);
        v.snippets.clear();
        assert!(matches!(variance_score(&v, Channel::Soc), Err(DetectorError::NoSnippets)));
    }
}
