//! Workplace access scenario: schema, record type and binding.

use serde::{Deserialize, Serialize};

use crate::dsl::schema::{field, Schema, Type, Unit};
use crate::eval::Value;

/// Upper corner of the site; the lower corner is the origin.
pub const WORLD_MAX: (f64, f64) = (316.43506, 177.88289);
/// Gate position of each workplace.
pub const GATES: [(f64, f64); 3] = [(50.0, 40.0), (160.0, 130.0), (270.0, 60.0)];
pub const SHIFT_LEN: f64 = 8.0 * 3600.0;
/// Half-width of the sampled time window around a shift.
pub const TIME_MARGIN: f64 = 36000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "TAKE_HGEAR")]
    Take,
    #[serde(rename = "RET_HGEAR")]
    Ret,
}

impl EventKind {
    pub fn index(self) -> usize {
        match self {
            EventKind::Take => 0,
            EventKind::Ret => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    #[serde(rename = "posX")]
    pub pos_x: f64,
    #[serde(rename = "posY")]
    pub pos_y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workplace {
    pub id: usize,
    pub gate: Gate,
}

impl Workplace {
    pub fn new(id: usize) -> Self {
        let (x, y) = GATES[id];
        Workplace {
            id,
            gate: Gate { pos_x: x, pos_y: y },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub start: f64,
    pub end: f64,
    pub workplace: Workplace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Worker {
    #[serde(rename = "posX")]
    pub pos_x: f64,
    #[serde(rename = "posY")]
    pub pos_y: f64,
    pub events: Vec<Event>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndustryInput {
    pub now: f64,
    pub shift: Shift,
    pub worker: Worker,
}

impl IndustryInput {
    pub fn validate(&self) -> Result<(), String> {
        let s = &self.shift;
        if !(s.start < s.end) {
            return Err(format!("shift start {} is not before end {}", s.start, s.end));
        }
        if s.workplace.id >= GATES.len() {
            return Err(format!("unknown workplace id {}", s.workplace.id));
        }
        let w = &self.worker;
        let inside = |v: f64, hi: f64| (0.0..=hi).contains(&v);
        if !inside(w.pos_x, WORLD_MAX.0) || !inside(w.pos_y, WORLD_MAX.1) {
            return Err(format!("worker position ({}, {}) outside the site", w.pos_x, w.pos_y));
        }
        if let Some(e) = w.events.iter().find(|e| e.time > self.now) {
            return Err(format!("event at {} lies after NOW={}", e.time, self.now));
        }
        Ok(())
    }
}

pub fn schema() -> Schema {
    let mut s = Schema::new("industry");
    let event_type = s.add_enum("EventType", &["TAKE_HGEAR", "RET_HGEAR"], &[("RET_HGER", "RET_HGEAR")]);
    let wp_id = s.add_enum("WorkplaceId", &["W0", "W1", "W2"], &[]);
    let sec = Some(Unit::Seconds);
    let m = Some(Unit::Meters);
    let event = s.add_record(
        "Event",
        vec![field("type", Type::Enum(event_type), None), field("time", Type::Num, sec)],
    );
    let gate = s.add_record("Gate", vec![field("posX", Type::Num, m), field("posY", Type::Num, m)]);
    let workplace = s.add_record(
        "Workplace",
        vec![field("id", Type::Enum(wp_id), None), field("gate", Type::Record(gate), None)],
    );
    let worker = s.add_record(
        "Worker",
        vec![
            field("posX", Type::Num, m),
            field("posY", Type::Num, m),
            field("pos", Type::Vec2, m),
            field("events", Type::List(Box::new(Type::Record(event))), None),
            field("workplace", Type::Record(workplace), None),
        ],
    );
    let shift = s.add_record(
        "Shift",
        vec![
            field("start", Type::Num, sec),
            field("end", Type::Num, sec),
            field("startTime", Type::Num, sec),
            field("endTime", Type::Num, sec),
            field("workplace", Type::Record(workplace), None),
            field("workers", Type::List(Box::new(Type::Record(worker))), None),
        ],
    );
    s.add_root("NOW", Type::Num, sec);
    s.add_root("worker", Type::Record(worker), None);
    s.add_root("shifts", Type::List(Box::new(Type::Record(shift))), None);
    s
}

/// Root values in schema order: `NOW`, `worker`, `shifts`.
pub fn bind(input: &IndustryInput) -> Vec<Value> {
    let wp = &input.shift.workplace;
    let workplace = Value::record(vec![
        Value::Enum(wp.id),
        Value::record(vec![Value::Num(wp.gate.pos_x), Value::Num(wp.gate.pos_y)]),
    ]);
    let w = &input.worker;
    let events = w
        .events
        .iter()
        .map(|e| Value::record(vec![Value::Enum(e.kind.index()), Value::Num(e.time)]))
        .collect();
    let worker = Value::record(vec![
        Value::Num(w.pos_x),
        Value::Num(w.pos_y),
        Value::Vec2(w.pos_x, w.pos_y),
        Value::list(events),
        workplace.clone(),
    ]);
    let s = &input.shift;
    let shift = Value::record(vec![
        Value::Num(s.start),
        Value::Num(s.end),
        Value::Num(s.start),
        Value::Num(s.end),
        workplace,
        Value::list(vec![worker.clone()]),
    ]);
    vec![Value::Num(input.now), worker, Value::list(vec![shift])]
}
