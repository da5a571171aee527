use proctorline::sessionlog::{parse_session_log, session_log_string};
use proctorline_core::audio::PcmWindow;
use proctorline_core::events::{EventPayload, FrameImageRef, MaskRef};
use proctorline_core::{
    AudioPayload, BoundingBox, Detection, Embedding, EngineConfig, FrameDetections, ObjectClass, ReferenceSet,
    SensorEvent, SessionLog, EMBEDDING_DIM,
};
use proptest::prelude::*;

fn arb_class() -> impl Strategy<Value = ObjectClass> {
    prop_oneof![
        Just(ObjectClass::Person),
        Just(ObjectClass::Phone),
        Just(ObjectClass::Laptop),
        "[a-z ]{1,12}".prop_map(ObjectClass::Other),
    ]
}

fn arb_payload() -> impl Strategy<Value = EventPayload> {
    let det = (arb_class(), 0.0f64..=1.0, -1e3f64..1e3, -1e3f64..1e3, 0.0f64..500.0, 0.0f64..500.0)
        .prop_map(|(class, score, x, y, w, h)| Detection { class, score, bbox: BoundingBox::new(x, y, w, h) });
    prop_oneof![
        proptest::collection::vec(det, 0..4).prop_map(|d| EventPayload::FrameDetections(FrameDetections { detections: d })),
        proptest::collection::vec(-10.0f64..10.0, EMBEDDING_DIM)
            .prop_map(|v| EventPayload::FaceEmbedding(Embedding::new(v).unwrap())),
        proptest::collection::vec(-1.0f32..=1.0, 4)
            .prop_map(|s| EventPayload::AudioWindow(AudioPayload::Inline(PcmWindow { sample_rate: 4, samples: s }))),
        ("[a-z]{1,8}\\.ppm", 0u32..5).prop_map(|(image, n)| EventPayload::FrameImage(FrameImageRef {
            image,
            masks: (0..n).map(|id| MaskRef { id, path: format!("m{id}.pbm") }).collect(),
            keypoints: None,
        })),
    ]
}

fn arb_log() -> impl Strategy<Value = SessionLog> {
    (
        "[A-Za-z0-9_-]{1,16}",
        0.1f64..2.0,
        proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, EMBEDDING_DIM), 20),
        proptest::collection::vec((0u64..5_000, arb_payload()), 0..40),
    )
        .prop_map(|(session_id, face_threshold, refs, evs)| {
            let mut t = 0;
            let events = evs
                .into_iter()
                .map(|(dt, p)| {
                    t += dt;
                    SensorEvent::new(t, p)
                })
                .collect();
            SessionLog {
                session_id,
                config: EngineConfig { face_threshold, ..EngineConfig::default() },
                references: ReferenceSet::new(refs.into_iter().map(|r| Embedding::new(r).unwrap()).collect()),
                events,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn serialized_logs_parse_back(log in arb_log()) {
        let text = session_log_string(&log);
        let parsed = parse_session_log(text.as_bytes()).unwrap();
        prop_assert_eq!(&parsed, &log);
        prop_assert_eq!(session_log_string(&parsed), text);
    }
}
