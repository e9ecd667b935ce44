//! Job scheduling scenario: jobs are routed to one of four workers.

use serde::{Deserialize, Serialize};

use crate::dsl::schema::{field, Schema, Type, Unit};
use crate::eval::Value;

pub const N_FAST: usize = 2;
pub const N_SLOW: usize = 2;
pub const N_WORKERS: usize = N_FAST + N_SLOW;
/// Queue lengths are quantized to `0..QUEUE_LEVELS`.
pub const QUEUE_LEVELS: u8 = 4;
/// Fast jobs spill to an idle slow worker once every fast queue exceeds this.
pub const SPILL_THRESHOLD: u8 = 2;
pub const NOISE_FEATURES: usize = 4;
/// Sampling ranges of the job features, also used for normalization.
pub const REF_DURATION_MAX: f64 = 180.0;
pub const TIME_LIMIT_MAX: f64 = 900.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    #[serde(rename = "refSolutionDuration")]
    pub ref_solution_duration: f64,
    #[serde(rename = "timeLimit")]
    pub time_limit: f64,
    pub noise: [f64; NOISE_FEATURES],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobInput {
    pub job: Job,
    /// Queue length per worker; fast workers first, then slow ones.
    pub queues: [u8; N_WORKERS],
}

pub fn schema() -> Schema {
    let mut s = Schema::new("recodex");
    let sec = Some(Unit::Seconds);
    let job = s.add_record(
        "Job",
        vec![
            field("refSolutionDuration", Type::Num, sec),
            field("timeLimit", Type::Num, sec),
        ],
    );
    s.add_root("job", Type::Record(job), None);
    s
}

pub fn bind(input: &JobInput) -> Vec<Value> {
    vec![Value::record(vec![
        Value::Num(input.job.ref_solution_duration),
        Value::Num(input.job.time_limit),
    ])]
}

/// Worker chosen for a job given its class (slow or not) and the queues.
/// Ties go to the lowest index.
pub fn assign(slow: bool, queues: &[u8; N_WORKERS]) -> usize {
    let least = |range: std::ops::Range<usize>| {
        range
            .min_by_key(|&i| (queues[i], i))
            .expect("non-empty worker group")
    };
    let slow_group = N_FAST..N_WORKERS;
    if slow {
        return least(slow_group);
    }
    let fast_saturated = queues[..N_FAST].iter().all(|&q| q > SPILL_THRESHOLD);
    if fast_saturated {
        if let Some(idle) = slow_group.clone().find(|&i| queues[i] == 0) {
            return idle;
        }
    }
    least(0..N_FAST)
}

pub fn is_slow_worker(class: usize) -> bool {
    class >= N_FAST
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_queues_fast_job_goes_to_first_fast_worker() {
        assert_eq!(assign(false, &[0, 0, 0, 0]), 0);
    }

    #[test]
    fn slow_job_never_lands_on_fast_worker() {
        for q in 0..256u32 {
            let queues = [(q & 3) as u8, (q >> 2 & 3) as u8, (q >> 4 & 3) as u8, (q >> 6 & 3) as u8];
            assert!(is_slow_worker(assign(true, &queues)));
        }
    }

    #[test]
    fn fast_job_spills_only_when_fast_group_saturated() {
        assert_eq!(assign(false, &[3, 3, 1, 0]), 3);
        assert_eq!(assign(false, &[3, 2, 0, 0]), 1);
        assert_eq!(assign(false, &[3, 3, 1, 1]), 0);
    }
}
