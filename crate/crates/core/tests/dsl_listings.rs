use rulefuzz::dsl::ast::{BinOp, ExprKind};
use rulefuzz::dsl::{self, compile, list_trainables, parse, pretty, TrainableKind};
use rulefuzz::eval::Evaluator;
use rulefuzz::scenario::industry::{self, Event, EventKind, IndustryInput, Shift, Worker, Workplace};
use rulefuzz::scenario::recodex::{self, Job, JobInput};
use rulefuzz::scenario::{rules, Relaxation, Scenario};

fn industry_schema() -> dsl::Schema {
    industry::schema()
}

#[test]
fn every_bundled_file_checks() {
    for r in Relaxation::ALL {
        let typed = compile(r.source(), &industry_schema());
        assert!(typed.is_ok(), "{r}: {:?}", typed.err());
    }
    for src in [rules::IS_SLOW, rules::IS_SLOW_RELAXED] {
        let typed = compile(src, &recodex::schema());
        assert!(typed.is_ok(), "{:?}", typed.err());
    }
}

#[test]
fn during_shift_body_shape() {
    let file = parse(rules::ACCESS_STRICT).unwrap();
    let body = &file.pred("duringShift").unwrap().body;
    let ExprKind::Binary(BinOp::And, a, b) = &body.kind else {
        panic!("expected &&, got {body:?}");
    };
    assert!(matches!(a.kind, ExprKind::Binary(BinOp::Lt, _, _)));
    assert!(matches!(b.kind, ExprKind::Binary(BinOp::Gt, _, _)));
}

#[test]
fn trainables_per_file() {
    let schema = industry_schema();
    let strict = compile(rules::ACCESS_STRICT, &schema).unwrap();
    assert!(list_trainables(&strict).is_empty());

    let ab = list_trainables(&compile(rules::ACCESS_TIME_AB, &schema).unwrap());
    assert_eq!(ab.len(), 2);
    assert_eq!(ab[0].kind, TrainableKind::AboveThreshold);
    assert_eq!(ab[1].kind, TrainableKind::BelowThreshold);
    assert_eq!(format!("{} {}", ab[0].min.unwrap(), ab[0].max.unwrap()), "0 36000");
    assert_eq!(format!("{} {}", ab[1].min.unwrap(), ab[1].max.unwrap()), "-36000 0");

    let all = list_trainables(&compile(rules::ACCESS_ALL, &schema).unwrap());
    let kinds: Vec<_> = all.iter().map(|d| d.kind).collect();
    assert_eq!(
        kinds,
        [TrainableKind::RightValue1D, TrainableKind::RightValue2D, TrainableKind::RightCategories]
    );
    assert_eq!(all[0].capacity, 20);
    assert_eq!(all[1].capacity, 20);
    assert_eq!(all[1].qualifier_key.as_deref(), Some("worker.workplace.id"));
    assert_eq!(all[2].categories, Some(2));
    assert_eq!(all[2].capacity, 1);
    let mut ids: Vec<_> = all.iter().map(|d| d.site_id.clone()).collect();
    ids.dedup();
    assert_eq!(ids.len(), 3);
}

#[test]
fn ill_typed_conjunct_is_rejected() {
    let src = rules::ACCESS_STRICT.replace("          hasHeadgear(worker)", "          5");
    let errs = compile(&src, &industry_schema()).unwrap_err();
    assert!(errs.iter().any(|e| e.to_string().contains("Bool expected")), "{errs:?}");
}

#[test]
fn pretty_output_reparses() {
    for r in Relaxation::ALL {
        let mut a = parse(r.source()).unwrap();
        let mut b = parse(&pretty(&a)).unwrap();
        a.clear_spans();
        b.clear_spans();
        assert_eq!(a, b, "{r}");
    }
}

fn record(now: f64, start: f64, end: f64, pos: (f64, f64), events: &[(EventKind, f64)]) -> IndustryInput {
    IndustryInput {
        now,
        shift: Shift { start, end, workplace: Workplace::new(0) },
        worker: Worker {
            pos_x: pos.0,
            pos_y: pos.1,
            events: events.iter().map(|&(kind, time)| Event { kind, time }).collect(),
        },
    }
}

fn decide(input: &IndustryInput) -> (bool, String) {
    let typed = compile(rules::ACCESS_STRICT, &industry_schema()).unwrap();
    let globals = industry::bind(input);
    let ev = Evaluator::new(&typed, &globals);
    let d = ev.eval_rule(typed.rule("AccessToWorkplace").unwrap()).unwrap();
    (d.fired, d.stratum())
}

#[test]
fn oracle_examples() {
    let take = [(EventKind::Take, 5.0)];
    let gate = (50.0, 40.0);
    assert_eq!(decide(&record(9000.0, 10000.0, 20000.0, gate, &take)), (true, "111".into()));
    // NOW exactly at start - 1200
    assert_eq!(decide(&record(8800.0, 10000.0, 20000.0, gate, &take)).1, "011");
    // distance sqrt(89) < 10
    assert_eq!(decide(&record(9000.0, 10000.0, 20000.0, (55.0, 48.0), &take)).1, "111");
    let returned = [(EventKind::Take, 5.0), (EventKind::Ret, 9.0)];
    assert_eq!(decide(&record(9000.0, 10000.0, 20000.0, gate, &returned)), (false, "110".into()));
    assert_eq!(decide(&record(9000.0, 10000.0, 20000.0, gate, &[])), (false, "110".into()));
}

#[test]
fn is_slow_examples() {
    let typed = compile(rules::IS_SLOW, &Scenario::Recodex.schema()).unwrap();
    let slow = |r: f64, t: f64| {
        let input = JobInput {
            job: Job { ref_solution_duration: r, time_limit: t, noise: [0.0; 4] },
            queues: [0; 4],
        };
        let globals = recodex::bind(&input);
        Evaluator::new(&typed, &globals).eval_entry("isSlow").unwrap()
    };
    assert!(slow(61.0, 10.0));
    assert!(!slow(60.0, 300.0));
}
