use serde::{Deserialize, Serialize};

use crate::data::{Channel, Row};

/// Voltage span and reference current defining the capacity label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelWindow {
    pub v_low: f64,
    pub v_high: f64,
    pub i_ref: f64,
    /// Allowed relative deviation of every current sample from `i_ref`.
    pub current_tolerance: f64,
}

impl Default for LabelWindow {
    fn default() -> Self {
        LabelWindow {
            v_low: 3.77,
            v_high: 4.05,
            i_ref: 35.0,
            current_tolerance: 0.15,
        }
    }
}

/// Time (s) at which the average cell voltage first rises through `level`
/// at or after row `from`, with the bracketing row index.
fn upward_crossing(rows: &[Row], level: f64, from: usize) -> Option<(f64, usize)> {
    let v = Channel::AvgCellVoltage.index();
    let ts = Channel::Timestamp.index();
    (from.max(1)..rows.len()).find_map(|k| {
        let (a, b) = (&rows[k - 1], &rows[k]);
        (a[v] < level && b[v] >= level).then(|| {
            let w = (level - a[v]) / (b[v] - a[v]);
            (a[ts] + w * (b[ts] - a[ts]), k)
        })
    })
}

fn current_at(rows: &[Row], k: usize, t: f64) -> f64 {
    let (i, ts) = (Channel::Current.index(), Channel::Timestamp.index());
    let (a, b) = (&rows[k - 1], &rows[k]);
    let w = (t - a[ts]) / (b[ts] - a[ts]);
    a[i] + w * (b[i] - a[i])
}

/// Charge (A·h) taken in between the first upward crossings of `v_low` and
/// `v_high`, by trapezoidal integration of the current.
///
/// Returns `None` when the record misses either crossing or any current
/// sample within the span strays outside the reference-current tolerance.
pub fn capacity_label(rows: &[Row], window: &LabelWindow) -> Option<f64> {
    let (ci, ts) = (Channel::Current.index(), Channel::Timestamp.index());
    let (t_lo, k_lo) = upward_crossing(rows, window.v_low, 1)?;
    let (t_hi, k_hi) = upward_crossing(rows, window.v_high, k_lo)?;
    let tol = window.current_tolerance * window.i_ref;
    if rows[k_lo - 1..=k_hi].iter().any(|r| (r[ci] - window.i_ref).abs() > tol) {
        return None;
    }
    // Piecewise-linear current from t_lo through the interior samples to t_hi.
    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(k_hi - k_lo + 2);
    knots.push((t_lo, current_at(rows, k_lo, t_lo)));
    knots.extend(rows[k_lo..k_hi].iter().map(|r| (r[ts], r[ci])));
    knots.push((t_hi, current_at(rows, k_hi, t_hi)));
    let amp_seconds: f64 = knots.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    Some(amp_seconds / 3600.0)
}
