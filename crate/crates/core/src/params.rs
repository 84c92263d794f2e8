//! Gait speed, cadence, step length and step time from step events.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::events::{walking_direction, EventError, StepEvent};
use crate::optimizer::OptimizedSequence;
use crate::skeleton::{Foot, JointId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamsError {
    #[error("TooFewSteps: {0} step events, at least 2 are needed")]
    TooFewSteps(usize),
    #[error("step events do not advance in time")]
    NonIncreasingEvents,
    #[error(transparent)]
    Event(#[from] EventError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDetail {
    pub foot: Foot,
    /// s
    pub time: f64,
    /// cm
    pub length_cm: f64,
    /// Time since the previous event (s); absent for the first event.
    pub duration: Option<f64>,
}

/// Walk-level gait parameters. Averages cover the steps after the first
/// event, which only marks the start of the measured interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitReport {
    pub walk_id: Option<String>,
    pub source: Option<String>,
    /// m/s
    pub gait_speed: f64,
    /// steps/min
    pub cadence: f64,
    /// cm
    pub step_length_cm: f64,
    /// s
    pub step_time: f64,
    pub steps_used: usize,
    /// s
    pub duration_used: f64,
    pub steps: Vec<StepDetail>,
}

/// Linear interpolation of the root position at time `t`.
fn root_at(seq: &OptimizedSequence, t: f64) -> Result<Vector3<f64>, EventError> {
    let root = |i: usize| {
        seq.frames[i].get(JointId::ROOT).copied().ok_or(EventError::MissingJoint {
            frame: i,
            joint: JointId::ROOT,
        })
    };
    let times = seq.times();
    let after = times.partition_point(|&x| x < t);
    if after == 0 {
        return root(0);
    }
    if after == times.len() {
        return root(times.len() - 1);
    }
    let (t0, t1) = (times[after - 1], times[after]);
    let w = (t - t0) / (t1 - t0);
    Ok(root(after - 1)? * (1.0 - w) + root(after)? * w)
}

pub fn compute_report(seq: &OptimizedSequence, events: &[StepEvent]) -> Result<GaitReport, ParamsError> {
    if events.len() < 2 {
        return Err(ParamsError::TooFewSteps(events.len()));
    }
    if events.windows(2).any(|w| !(w[1].time > w[0].time)) {
        return Err(ParamsError::NonIncreasingEvents);
    }
    let first = &events[0];
    let last = &events[events.len() - 1];
    let steps_used = events.len() - 1;
    let duration = last.time - first.time;
    let (direction, _) = walking_direction(seq)?;
    let travel = (root_at(seq, last.time)? - root_at(seq, first.time)?).dot(&direction);
    let mean_length = events[1..].iter().map(|e| e.length).sum::<f64>() / steps_used as f64;

    let steps = events
        .iter()
        .enumerate()
        .map(|(i, e)| StepDetail {
            foot: e.foot,
            time: e.time,
            length_cm: e.length * 100.0,
            duration: (i > 0).then(|| e.time - events[i - 1].time),
        })
        .collect();
    Ok(GaitReport {
        walk_id: seq.walk_id.clone(),
        source: seq.source.clone(),
        gait_speed: travel / duration,
        cadence: 60.0 * steps_used as f64 / duration,
        step_length_cm: mean_length * 100.0,
        step_time: duration / steps_used as f64,
        steps_used,
        duration_used: duration,
        steps,
    })
}

impl GaitReport {
    /// Relative gap between the measured speed and the speed implied by
    /// step length and cadence.
    pub fn speed_consistency(&self) -> f64 {
        let implied = self.step_length_cm / 100.0 * self.cadence / 60.0;
        (self.gait_speed - implied).abs() / self.gait_speed.abs()
    }
}
