use serde::{Deserialize, Serialize};

use super::sim::RunRecord;
use crate::geometry::Vec2;

/// Summary numbers for one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Path progress over ideal progress since first contact.
    pub normalized_distance: f64,
    pub max_deviation: f64,
    /// Slider position where `max_deviation` was reached.
    pub max_deviation_point: Vec2,
    pub max_contact_deviation: f64,
    pub final_lateral_offset: f64,
    pub first_minute_mean_offset: f64,
    pub final_minute_mean_offset: f64,
    pub contact_loss_count: u32,
    pub completed: bool,
    pub first_contact_time: Option<f64>,
    pub final_time: f64,
    /// Arc-length progress of the slider since first contact, m.
    pub progress: f64,
    pub ideal_distance: f64,
    pub peak_force: f64,
    /// Progress since first contact when contact was lost for good.
    pub contact_lost_at: Option<f64>,
}

/// Evaluates `record.trace`. `loss_timeout` is how long the force must stay
/// below threshold for contact to count as lost for good.
pub fn compute_metrics(record: &RunRecord, loss_timeout: f64) -> Metrics {
    let trace = &record.trace;
    let mut m = Metrics {
        peak_force: record.peak_force,
        ..Metrics::default()
    };
    let Some(last) = trace.last() else {
        return m;
    };
    m.final_time = last.t;
    m.final_lateral_offset = last.lateral_offset;
    for s in trace {
        let d = s.lateral_offset.abs();
        if d > m.max_deviation {
            m.max_deviation = d;
            m.max_deviation_point = s.slider.position;
        }
        if let Some(c) = s.contact_lateral_offset {
            m.max_contact_deviation = m.max_contact_deviation.max(c.abs());
        }
    }
    let mean_abs = |keep: &dyn Fn(f64) -> bool| {
        let (sum, n) = trace
            .iter()
            .filter(|s| keep(s.t))
            .fold((0.0, 0usize), |(a, n), s| (a + s.lateral_offset.abs(), n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    };
    m.first_minute_mean_offset = mean_abs(&|t| t <= 60.0);
    m.final_minute_mean_offset = mean_abs(&|t| t >= last.t - 60.0);

    let threshold = record.force_threshold;
    let Some(start) = trace.iter().position(|s| s.filtered_force.norm() >= threshold) else {
        m.completed = false;
        return m;
    };
    let t0 = trace[start].t;
    let s0 = trace[start].arc_length;
    m.first_contact_time = Some(t0);
    m.ideal_distance = record.nominal_speed * (last.t - t0);
    m.progress = last.arc_length - s0;
    m.normalized_distance = if m.ideal_distance > 0.0 {
        m.progress.abs() / m.ideal_distance
    } else {
        0.0
    };

    let mut in_contact = true;
    let mut lost: Option<(f64, f64)> = None;
    for s in &trace[start..] {
        let above = s.filtered_force.norm() >= threshold;
        if in_contact && !above {
            m.contact_loss_count += 1;
            lost = Some((s.t, s.arc_length - s0));
        }
        if above {
            lost = None;
        }
        in_contact = above;
    }
    m.contact_lost_at = match lost {
        Some((since, progress)) if last.t - since > loss_timeout || record.stopped_early => Some(progress),
        _ => None,
    };
    m.completed = record.abort.is_none() && !record.stopped_early;
    m
}
