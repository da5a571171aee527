use proctorline_core::audio::{AudioError, PcmWindow};
use proctorline_core::events::EventPayload;
use proctorline_core::objectgate::BoundingBox;
use proctorline_core::pipeline::{run_events, Engine, FlagDetail, VoiceClassifier};
use proctorline_core::pipeline::finalize_report;
use proctorline_core::{
    run_session, AudioPayload, Detection, Embedding, EngineConfig, FinalLabel, FlagKind, FrameDetections,
    ObjectClass, PipelineState, ReferenceSet, SensorEvent, SessionLog, EMBEDDING_DIM,
};
use proptest::prelude::*;

/// The first sample is the voice probability.
struct FirstSample;

impl VoiceClassifier for FirstSample {
    fn voice_probability(&self, w: &PcmWindow) -> Result<f64, AudioError> {
        Ok(w.samples[0] as f64)
    }
}

#[derive(Debug, Clone)]
enum Ev {
    Frame { persons: usize, device: Option<(bool, f64)> },
    Face(f64),
    Audio(f32),
}

fn arb_ev() -> impl Strategy<Value = Ev> {
    prop_oneof![
        6 => (prop_oneof![3 => Just(1usize), 2 => Just(0usize), 1 => Just(2usize)],
              proptest::option::weighted(0.3, (any::<bool>(), 0.0f64..=1.0)))
            .prop_map(|(persons, device)| Ev::Frame { persons, device }),
        1 => prop_oneof![Just(0.1), Just(0.9)].prop_map(Ev::Face),
        2 => (0.0f32..=1.0).prop_map(Ev::Audio),
    ]
}

fn materialize(t_ms: u64, e: &Ev) -> SensorEvent {
    let payload = match e {
        Ev::Frame { persons, device } => {
            let mut detections: Vec<Detection> = (0..*persons)
                .map(|i| Detection {
                    class: ObjectClass::Person,
                    score: 0.9,
                    bbox: BoundingBox::new(i as f64 * 100.0, 0.0, 80.0, 150.0),
                })
                .collect();
            if let Some((phone, score)) = device {
                detections.push(Detection {
                    class: if *phone { ObjectClass::Phone } else { ObjectClass::Laptop },
                    score: *score,
                    bbox: BoundingBox::new(200.0, 100.0, 40.0, 30.0),
                });
            }
            EventPayload::FrameDetections(FrameDetections { detections })
        }
        Ev::Face(offset) => {
            let mut v = vec![0.0; EMBEDDING_DIM];
            v[3] = *offset;
            EventPayload::FaceEmbedding(Embedding::new(v).unwrap())
        }
        Ev::Audio(p) => EventPayload::AudioWindow(AudioPayload::Inline(PcmWindow { sample_rate: 1, samples: vec![*p] })),
    };
    SensorEvent::new(t_ms, payload)
}

fn arb_log() -> impl Strategy<Value = SessionLog> {
    proptest::collection::vec((1u64..2_500, arb_ev()), 0..120).prop_map(|evs| {
        let mut t = 0;
        let events = evs
            .iter()
            .map(|(dt, e)| {
                t += dt;
                materialize(t, e)
            })
            .collect();
        SessionLog {
            session_id: "fuzz".into(),
            config: EngineConfig::default(),
            references: ReferenceSet::new(vec![Embedding::zeros(); 20]),
            events,
        }
    })
}

fn run(log: &SessionLog) -> proctorline_core::SessionReport {
    run_session(log, &EngineConfig::default(), Some(&FirstSample)).unwrap()
}

fn persons(e: &SensorEvent) -> Option<usize> {
    match &e.payload {
        EventPayload::FrameDetections(f) => {
            Some(f.detections.iter().filter(|d| d.class == ObjectClass::Person && d.score >= 0.5).count())
        }
        _ => None,
    }
}

/// (t, gap) of every zero-person gap longer than the limit, scanned directly.
fn absence_oracle(log: &SessionLog, limit: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut last_present: Option<u64> = None;
    let mut open: Option<u64> = None;
    for e in &log.events {
        match persons(e) {
            Some(0) => {
                if open.is_none() {
                    open = Some(last_present.unwrap_or(e.t_ms));
                }
            }
            Some(_) => {
                if let Some(start) = open.take() {
                    if e.t_ms - start > limit {
                        out.push((e.t_ms, e.t_ms - start));
                    }
                }
                last_present = Some(e.t_ms);
            }
            None => {}
        }
    }
    if let (Some(start), Some(last)) = (open, log.events.last()) {
        if last.t_ms - start > limit {
            out.push((last.t_ms, last.t_ms - start));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn split_replay_matches_one_shot(log in arb_log(), cut in 0.0f64..=1.0) {
        let cfg = EngineConfig::default();
        let split = (cut * log.events.len() as f64) as usize;
        let engine = Engine::new(&cfg, &log.references, Some(&FirstSample));
        let mut state = PipelineState::new();
        run_events(&mut state, &log.events[..split], &engine, 0).unwrap();
        let mut resumed = state.clone();
        run_events(&mut resumed, &log.events[split..], &engine, split).unwrap();
        resumed.close(&cfg).unwrap();
        prop_assert_eq!(finalize_report(resumed, &log.session_id), run(&log));
    }

    #[test]
    fn absence_flags_match_gap_scanner(log in arb_log()) {
        let got: Vec<(u64, u64)> = run(&log)
            .flags
            .iter()
            .filter(|f| f.kind == FlagKind::CandidateAbsence)
            .map(|f| match f.detail {
                FlagDetail::AbsenceMs(d) => (f.t_ms, d),
                other => panic!("unexpected detail {other:?}"),
            })
            .collect();
        prop_assert_eq!(got, absence_oracle(&log, 10_000));
    }

    #[test]
    fn one_flag_per_episode(log in arb_log()) {
        let report = run(&log);
        let resets = |kind: FlagKind, e: &SensorEvent| match (kind, &e.payload) {
            (FlagKind::MultiplePersons, _) => persons(e).is_some_and(|n| n < 2),
            (FlagKind::VoiceDetection, EventPayload::AudioWindow(AudioPayload::Inline(w))) => w.samples[0] <= 0.5,
            (FlagKind::PhoneDetection | FlagKind::GeneralSuspicious, EventPayload::FrameDetections(f)) => {
                f.detections.iter().filter(|d| matches!(d.class, ObjectClass::Phone | ObjectClass::Laptop)).all(|d| d.score < 0.35)
            }
            _ => false,
        };
        let device = |k: FlagKind| matches!(k, FlagKind::PhoneDetection | FlagKind::GeneralSuspicious);
        for kind in [FlagKind::MultiplePersons, FlagKind::VoiceDetection, FlagKind::PhoneDetection] {
            let times: Vec<u64> = report
                .flags
                .iter()
                .filter(|f| f.kind == kind || (device(kind) && device(f.kind)))
                .map(|f| f.t_ms)
                .collect();
            for w in times.windows(2) {
                let reset = log.events.iter().any(|e| e.t_ms > w[0] && e.t_ms < w[1] && resets(kind, e));
                prop_assert!(reset, "{:?} flags at {} and {} share an episode", kind, w[0], w[1]);
            }
        }
    }

    #[test]
    fn adding_a_trigger_never_clears_suspicion(log in arb_log(), at in 0.0f64..=1.0) {
        let before = run(&log);
        let mut more = log.clone();
        let i = (at * more.events.len() as f64) as usize;
        let t = more.events.get(i).map_or(more.events.last().map_or(0, |e| e.t_ms), |e| e.t_ms);
        more.events.insert(i.min(more.events.len()), materialize(t, &Ev::Frame { persons: 1, device: Some((true, 0.9)) }));
        let after = run(&more);
        prop_assert_eq!(after.final_label, FinalLabel::Suspect);
        if before.final_label == FinalLabel::Suspect {
            prop_assert_eq!(after.final_label, FinalLabel::Suspect);
        }
    }

    #[test]
    fn reports_are_sorted_and_labelled(log in arb_log()) {
        let r = run(&log);
        prop_assert!(r.flags.windows(2).all(|w| w[0].t_ms <= w[1].t_ms));
        prop_assert_eq!(r.final_label == FinalLabel::Suspect, !r.flags.is_empty());
        for f in &r.flags {
            prop_assert_eq!(f.clip.duration_ms, 5_000);
            prop_assert_eq!(f.clip.start_t_ms, f.t_ms);
            prop_assert_eq!(f.clip.trigger, f.kind);
        }
        prop_assert_eq!(run(&log), r);
    }
}
