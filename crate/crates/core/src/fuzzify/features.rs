//! Fixed-width numeric encodings used by the dense models.

use serde::{Deserialize, Serialize};

use crate::scenario::industry::{EventKind, IndustryInput, GATES, TIME_MARGIN, WORLD_MAX};
use crate::scenario::recodex::{JobInput, QUEUE_LEVELS, REF_DURATION_MAX, TIME_LIMIT_MAX};
use crate::scenario::{Input, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Features {
    Industry,
    Job,
}

pub const INDUSTRY_WIDTH: usize = 8;
pub const JOB_WIDTH: usize = 10;

impl Features {
    pub fn for_scenario(s: Scenario) -> Self {
        match s {
            Scenario::Industry => Features::Industry,
            Scenario::Recodex => Features::Job,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Features::Industry => INDUSTRY_WIDTH,
            Features::Job => JOB_WIDTH,
        }
    }

    /// Writes `width()` values into `out`. Panics on a scenario mismatch,
    /// which callers check beforehand.
    pub fn encode(self, input: &Input, out: &mut [f64]) {
        match (self, input) {
            (Features::Industry, Input::Industry(r)) => industry(r, out),
            (Features::Job, Input::Recodex(r)) => job(r, out),
            _ => panic!("feature encoding applied to the wrong scenario"),
        }
    }
}

/// Relative time, position, workplace one-hot and the two most recent
/// headgear events (+1 take, -1 return, 0 missing).
fn industry(r: &IndustryInput, out: &mut [f64]) {
    out[0] = (r.now - r.shift.start) / TIME_MARGIN;
    out[1] = r.worker.pos_x / WORLD_MAX.0;
    out[2] = r.worker.pos_y / WORLD_MAX.1;
    for (i, o) in out[3..3 + GATES.len()].iter_mut().enumerate() {
        *o = if r.shift.workplace.id == i { 1.0 } else { 0.0 };
    }
    let mut events: Vec<_> = r.worker.events.iter().collect();
    events.sort_by(|a, b| b.time.total_cmp(&a.time));
    for k in 0..2 {
        out[6 + k] = match events.get(k).map(|e| e.kind) {
            Some(EventKind::Take) => 1.0,
            Some(EventKind::Ret) => -1.0,
            None => 0.0,
        };
    }
}

fn job(r: &JobInput, out: &mut [f64]) {
    out[0] = r.job.ref_solution_duration / REF_DURATION_MAX;
    out[1] = r.job.time_limit / TIME_LIMIT_MAX;
    out[2..6].copy_from_slice(&r.job.noise);
    for (o, q) in out[6..10].iter_mut().zip(r.queues) {
        *o = q as f64 / (QUEUE_LEVELS - 1) as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::industry::*;

    #[test]
    fn industry_layout() {
        let r = IndustryInput {
            now: 1000.0,
            shift: Shift {
                start: 1000.0,
                end: 1000.0 + SHIFT_LEN,
                workplace: Workplace::new(1),
            },
            worker: Worker {
                pos_x: WORLD_MAX.0,
                pos_y: 0.0,
                events: vec![
                    Event { kind: EventKind::Take, time: 10.0 },
                    Event { kind: EventKind::Ret, time: 20.0 },
                    Event { kind: EventKind::Take, time: 5.0 },
                ],
            },
        };
        let mut out = [9.0; INDUSTRY_WIDTH];
        Features::Industry.encode(&Input::Industry(r), &mut out);
        assert_eq!(out, [0.0, 1.0, 0.0, 0.0, 1.0, 0.0, -1.0, 1.0]);
    }
}
