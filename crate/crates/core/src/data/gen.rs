//! Dataset generators. Proposals target one stratum at a time; the strict
//! oracle has the final word on every record.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, Dataset, Oracle, Provenance};
use crate::par;
use crate::scenario::industry::{
    Event, EventKind, IndustryInput, Shift, Worker, Workplace, GATES, SHIFT_LEN, TIME_MARGIN, WORLD_MAX,
};
use crate::scenario::recodex::{Job, JobInput, N_WORKERS, NOISE_FEATURES, QUEUE_LEVELS, REF_DURATION_MAX, TIME_LIMIT_MAX};
use crate::scenario::{Input, Scenario};

pub const DEFAULT_SIZE: usize = 20_000;
/// Smallest industry dataset: one record per stratum.
pub const MIN_SIZE: usize = 8;
pub const FALSE_STRATA: [&str; 7] = ["000", "001", "010", "011", "100", "101", "110"];

/// Grace period of the strict time rule around a shift.
const GRACE: f64 = 1200.0;
const GATE_RADIUS: f64 = 10.0;
const DAY: f64 = 86_400.0;
/// Shift starts are spread over this many days.
const HORIZON_DAYS: f64 = 30.0;
const MAX_EVENTS: usize = 4;
const ATTEMPTS_PER_RECORD: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub n: usize,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        GenSpec { n, seed }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Half the records fire the rule; the rest are spread evenly over the seven
/// ways of failing it.
pub fn gen_random_industry(spec: &GenSpec) -> Result<Dataset, DataError> {
    industry(spec, Provenance::Random)
}

/// Like [`gen_random_industry`], but the positive half comes from a shift
/// simulation: workers arrive around shift start and badge in at the gate
/// after picking up their headgear.
pub fn gen_combined(spec: &GenSpec) -> Result<Dataset, DataError> {
    industry(spec, Provenance::Combined)
}

fn industry(spec: &GenSpec, provenance: Provenance) -> Result<Dataset, DataError> {
    if spec.n < MIN_SIZE {
        return Err(DataError::TooSmall { n: spec.n, min: MIN_SIZE });
    }
    let oracle = Oracle::new(Scenario::Industry);
    let n_true = spec.n / 2;
    let n_false = spec.n - n_true;
    let mut plan: Vec<(usize, &str, usize)> = FALSE_STRATA
        .iter()
        .enumerate()
        .map(|(i, s)| (i, *s, n_false / 7 + usize::from(i < n_false % 7)))
        .collect();
    plan.push((7, "111", n_true));

    let parts = par::map(&plan, |&(stream, stratum, count)| {
        let mut rng = stream_rng(spec.seed, stream as u64);
        let simulate = provenance == Provenance::Combined && stratum == "111";
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut found = None;
            for _ in 0..ATTEMPTS_PER_RECORD {
                let input = if simulate {
                    simulate_arrival(&mut rng)
                } else {
                    propose(&mut rng, stratum)
                };
                let rec = oracle.record(Input::Industry(input))?;
                if rec.stratum == stratum {
                    found = Some(rec);
                    break;
                }
            }
            match found {
                Some(r) => out.push(r),
                None => {
                    return Err(DataError::Unreachable {
                        stratum: stratum.to_string(),
                        attempts: ATTEMPTS_PER_RECORD,
                    })
                }
            }
        }
        Ok(out)
    });
    let mut records = Vec::with_capacity(spec.n);
    for p in parts {
        records.extend(p?);
    }
    records.shuffle(&mut stream_rng(spec.seed, 100));
    Ok(Dataset {
        scenario: Scenario::Industry,
        provenance,
        seed: spec.seed,
        records,
    })
}

fn shift(rng: &mut ChaCha8Rng) -> Shift {
    let start = rng.random_range(0.0..HORIZON_DAYS * DAY);
    Shift {
        start,
        end: start + SHIFT_LEN,
        workplace: Workplace::new(rng.random_range(0..GATES.len())),
    }
}

fn propose(rng: &mut ChaCha8Rng, stratum: &str) -> IndustryInput {
    let bits: Vec<bool> = stratum.chars().map(|c| c == '1').collect();
    let shift = shift(rng);
    let t = if bits[0] {
        rng.random_range(-GRACE..SHIFT_LEN + GRACE)
    } else if rng.random_bool(0.5) {
        rng.random_range(-TIME_MARGIN..=-GRACE)
    } else {
        rng.random_range(SHIFT_LEN + GRACE..=SHIFT_LEN + TIME_MARGIN)
    };
    let now = shift.start + t;
    let gate = GATES[shift.workplace.id];
    let (x, y) = if bits[1] {
        near(rng, gate, GATE_RADIUS)
    } else {
        loop {
            let p = (rng.random_range(0.0..=WORLD_MAX.0), rng.random_range(0.0..=WORLD_MAX.1));
            if dist(p, gate) >= GATE_RADIUS {
                break p;
            }
        }
    };
    let latest = if bits[2] {
        Some(EventKind::Take)
    } else if rng.random_bool(1.0 / 3.0) {
        None
    } else {
        Some(EventKind::Ret)
    };
    let events = history(rng, now, latest);
    IndustryInput {
        now,
        shift,
        worker: Worker {
            pos_x: x,
            pos_y: y,
            events,
        },
    }
}

/// Uniform point in a disc.
fn near(rng: &mut ChaCha8Rng, c: (f64, f64), r: f64) -> (f64, f64) {
    let rad = r * rng.random::<f64>().sqrt();
    let th = rng.random_range(0.0..std::f64::consts::TAU);
    (c.0 + rad * th.cos(), c.1 + rad * th.sin())
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Up to four events within two days before `now`, stored out of order.
/// `latest` fixes the type of the most recent one; `None` means no history.
fn history(rng: &mut ChaCha8Rng, now: f64, latest: Option<EventKind>) -> Vec<Event> {
    let Some(latest) = latest else {
        return vec![];
    };
    let n = rng.random_range(1..=MAX_EVENTS);
    let mut times: Vec<f64> = (0..n).map(|_| now - rng.random_range(1.0..2.0 * DAY)).collect();
    times.sort_by(|a, b| b.total_cmp(a));
    let mut events: Vec<Event> = times
        .iter()
        .enumerate()
        .map(|(i, &time)| Event {
            kind: if i == 0 {
                latest
            } else if rng.random_bool(0.5) {
                EventKind::Take
            } else {
                EventKind::Ret
            },
            time,
        })
        .collect();
    events.shuffle(rng);
    events
}

/// A worker walking to the assigned gate and badging in. Arrival times
/// cluster ten minutes before shift start.
fn simulate_arrival(rng: &mut ChaCha8Rng) -> IndustryInput {
    let shift = shift(rng);
    let arrival = Normal::new(shift.start - 600.0, 300.0).expect("valid normal");
    let now = arrival.sample(rng);
    let gate = GATES[shift.workplace.id];
    // walk in a straight line from a random origin and stop a few meters out
    let origin = (rng.random_range(0.0..=WORLD_MAX.0), rng.random_range(0.0..=WORLD_MAX.1));
    let d = dist(origin, gate).max(1e-9);
    let remaining = Normal::<f64>::new(0.0, 3.0).expect("valid normal").sample(rng).abs().min(d);
    let pos = (
        gate.0 + (origin.0 - gate.0) / d * remaining,
        gate.1 + (origin.1 - gate.1) / d * remaining,
    );
    // headgear taken on the way in; maybe one earlier take/return pair
    let mut events = vec![Event {
        kind: EventKind::Take,
        time: now - rng.random_range(120.0..1200.0),
    }];
    if rng.random_bool(0.5) {
        let back = now - rng.random_range(0.5 * DAY..1.5 * DAY);
        events.push(Event {
            kind: EventKind::Ret,
            time: back,
        });
        events.push(Event {
            kind: EventKind::Take,
            time: back - SHIFT_LEN,
        });
    }
    events.shuffle(rng);
    IndustryInput {
        now,
        shift,
        worker: Worker {
            pos_x: pos.0,
            pos_y: pos.1,
            events,
        },
    }
}

/// Every sampled job paired with every queue state. `n` is the requested
/// record count, rounded up to whole jobs.
pub fn gen_recodex(spec: &GenSpec) -> Result<Dataset, DataError> {
    if spec.n == 0 {
        return Err(DataError::TooSmall { n: 0, min: 1 });
    }
    let oracle = Oracle::new(Scenario::Recodex);
    let states = queue_states();
    let n_jobs = spec.n.div_ceil(states.len());
    let mut rng = stream_rng(spec.seed, 0);
    let mut records = Vec::with_capacity(n_jobs * states.len());
    for _ in 0..n_jobs {
        let job = sample_job(&mut rng);
        for q in &states {
            records.push(oracle.record(Input::Recodex(JobInput {
                job: job.clone(),
                queues: *q,
            }))?);
        }
    }
    Ok(Dataset {
        scenario: Scenario::Recodex,
        provenance: Provenance::Recodex,
        seed: spec.seed,
        records,
    })
}

fn queue_states() -> Vec<[u8; N_WORKERS]> {
    let levels = QUEUE_LEVELS as usize;
    (0..levels.pow(N_WORKERS as u32))
        .map(|mut k| {
            let mut q = [0u8; N_WORKERS];
            for slot in q.iter_mut().rev() {
                *slot = (k % levels) as u8;
                k /= levels;
            }
            q
        })
        .collect()
}

/// Half the jobs are short on both counts, half exceed at least one limit.
fn sample_job(rng: &mut ChaCha8Rng) -> Job {
    let (r, t) = if rng.random_bool(0.5) {
        (rng.random_range(0.0..=60.0), rng.random_range(0.0..=300.0))
    } else {
        loop {
            let r = rng.random_range(0.0..REF_DURATION_MAX);
            let t = rng.random_range(0.0..TIME_LIMIT_MAX);
            if r > 60.0 || t > 300.0 {
                break (r, t);
            }
        }
    };
    let mut noise = [0.0; NOISE_FEATURES];
    for v in &mut noise {
        *v = rng.random();
    }
    Job {
        ref_solution_duration: r,
        time_limit: t,
        noise,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balance_plan() {
        let d = gen_random_industry(&GenSpec::new(8000, 3)).unwrap();
        assert_eq!(d.positives(), 4000);
        let strata = d.strata();
        for s in FALSE_STRATA {
            let c = strata[s];
            assert!((571..=572).contains(&c), "{s}: {c}");
        }
        assert!(matches!(
            gen_random_industry(&GenSpec::new(4, 1)),
            Err(DataError::TooSmall { .. })
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_combined(&GenSpec::new(400, 9)).unwrap();
        let b = gen_combined(&GenSpec::new(400, 9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_combined(&GenSpec::new(400, 10)).unwrap());
    }

    #[test]
    fn simulated_positives_stay_near_gates() {
        let d = gen_combined(&GenSpec::new(2000, 4)).unwrap();
        let pos: Vec<f64> = d
            .records
            .iter()
            .filter(|r| r.label == 1)
            .map(|r| {
                let r = r.input.industry().unwrap();
                dist((r.worker.pos_x, r.worker.pos_y), GATES[r.shift.workplace.id])
            })
            .collect();
        let mean = pos.iter().sum::<f64>() / pos.len() as f64;
        assert!(mean < GATE_RADIUS, "mean distance {mean}");
    }

    #[test]
    fn recodex_is_a_cartesian_product() {
        let d = gen_recodex(&GenSpec::new(600, 2)).unwrap();
        assert_eq!(d.len(), 3 * 256);
        assert_eq!(queue_states()[1], [0, 0, 0, 1]);
        let oracle = Oracle::new(Scenario::Recodex);
        for r in &d.records {
            assert_eq!(oracle.label(&r.input).unwrap().0, r.label);
        }
    }
}
