//! Property tests over the public API.

use std::collections::BTreeSet;
use std::io::Cursor;

use fedrf_core::aggregation::{
    aggregate_detailed, resolve_weights, resolve_weights_with, AggregationError, WeightFill,
};
use fedrf_core::harness::partition_rows;
use fedrf_core::metrics::Confusion;
use fedrf_core::wire::{
    decode_forest, encode_forest, frame_read, frame_write, Envelope, ErrorCode, Message,
    MessageKind, TrainRequest, TrainResponse,
};
use fedrf_core::{
    fit_forest, ClientWeights, DataParams, Dataset, ForestParams, Metrics, ModelParams,
};
use proptest::prelude::*;

fn dataset() -> impl Strategy<Value = Dataset> {
    (1usize..=4, 2usize..=3, 6usize..=30).prop_flat_map(|(f, c, n)| {
        (
            prop::collection::vec(prop::collection::vec(-100.0f64..100.0, f), n),
            prop::collection::vec(0..c as u32, n),
        )
            .prop_map(move |(rows, mut labels)| {
                labels[0] = 0;
                labels[1] = 1;
                Dataset::from_rows(
                    (0..f).map(|i| format!("x{i}")).collect(),
                    &rows,
                    labels,
                    (0..c).map(|i| format!("k{i}")).collect(),
                )
                .unwrap()
            })
    })
}

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 _\\-é]{0,12}"
}

fn model_params() -> impl Strategy<Value = ModelParams> {
    (1u32..500, 0u32..50, 0u32..10, 0.01f64..=1.0, any::<u64>()).prop_map(|(b, i, r, f, s)| {
        ModelParams {
            n_base_estimators: b,
            n_incremental_estimators: i,
            incremental_rounds: r,
            sample_fraction: f,
            seed: s,
        }
    })
}

fn message() -> impl Strategy<Value = Message> {
    let bytes = prop::collection::vec(any::<u8>(), 0..64);
    prop_oneof![
        (any::<u16>(), text()).prop_map(|(v, p)| Message::Hello {
            protocol_version: v,
            peer: p
        }),
        (
            text(),
            prop::collection::vec(text(), 0..4),
            text(),
            prop::collection::vec(text(), 0..4)
        )
            .prop_map(|(t, i, p, l)| Message::SetDataParams(DataParams {
                target_column: t,
                ignored_columns: i,
                positive_label: p,
                label_names: l,
            })),
        Just(Message::DataParamsAck),
        model_params().prop_map(Message::SetModelParams),
        Just(Message::ModelParamsAck),
        (
            any::<u64>(),
            model_params(),
            any::<u64>(),
            prop::option::of(bytes.clone())
        )
            .prop_map(|(r, m, s, b)| Message::TrainRequest(TrainRequest {
                round_index: r,
                model_params: m,
                seed: s,
                base_forest: b,
            })),
        (any::<u64>(), any::<u64>(), bytes.clone()).prop_map(|(r, n, f)| {
            Message::TrainResponse(TrainResponse {
                round_index: r,
                n_samples: n,
                forest: f,
            })
        }),
        bytes.prop_map(|forest| Message::EvalRequest { forest }),
        (0u64..50, 0u64..50, 0u64..50, 0u64..50).prop_map(|(tp, fp, fn_, tn)| {
            let c = Confusion { tp, fp, fn_, tn };
            Message::EvalResponse(Metrics::from_confusion(c, tp + tn))
        }),
        (any::<u64>(), text()).prop_map(|(id, s)| Message::ApprovalPending {
            request_id: id,
            summary: s
        }),
        (text(), text()).prop_map(|(c, m)| Message::error(ErrorCode::parse(&c), m)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn partition_covers_every_row_once(
        n in 20usize..400,
        silos in 1usize..8,
        tf in 0.05f64..0.5,
        seed in any::<u64>(),
    ) {
        let split = partition_rows(n, None, silos, tf, seed, false).unwrap();
        let mut all: Vec<usize> = split.test.clone();
        all.extend(split.parts.iter().flatten());
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = split.parts.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(split.test.len(), (tf * n as f64 - 1e-9).ceil() as usize);
        prop_assert_eq!(&split, &partition_rows(n, None, silos, tf, seed, false).unwrap());
    }

    #[test]
    fn stratified_partition_keeps_classes(
        labels in prop::collection::vec(0u32..2, 60..300),
        silos in 1usize..5,
        seed in any::<u64>(),
    ) {
        prop_assume!(labels.iter().filter(|&&l| l == 1).count() >= 20);
        prop_assume!(labels.iter().filter(|&&l| l == 0).count() >= 20);
        let split = partition_rows(labels.len(), Some(&labels), silos, 0.2, seed, true).unwrap();
        for part in &split.parts {
            let classes: BTreeSet<u32> = part.iter().map(|&r| labels[r]).collect();
            prop_assert_eq!(classes.len(), 2);
        }
    }

    #[test]
    fn training_is_deterministic(data in dataset(), trees in 1usize..6, seed in any::<u64>()) {
        let p = ForestParams::with_estimators(trees, seed);
        prop_assert_eq!(fit_forest(&data, &p).unwrap(), fit_forest(&data, &p).unwrap());
    }

    #[test]
    fn codec_round_trips(data in dataset(), trees in 1usize..6, seed in any::<u64>()) {
        let forest = fit_forest(&data, &ForestParams::with_estimators(trees, seed)).unwrap();
        let bytes = encode_forest(&forest);
        let back = decode_forest(&bytes).unwrap();
        prop_assert_eq!(&back.trees, &forest.trees);
        prop_assert_eq!(encode_forest(&back), bytes);
        for row in data.rows() {
            prop_assert_eq!(back.predict(row).unwrap(), forest.predict(row).unwrap());
        }
    }

    #[test]
    fn decoder_rejects_noise(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode_forest(&bytes);
        let mut framed = b"FRF1\x01\x00".to_vec();
        framed.extend(&bytes);
        if let Ok(f) = decode_forest(&framed) {
            prop_assert!(f.validate().is_ok());
        }
    }

    #[test]
    fn messages_round_trip_through_frames(msg in message(), id in any::<u64>()) {
        let mut buf = Vec::new();
        frame_write(&mut buf, &msg.to_envelope(id)).unwrap();
        let env = frame_read(&mut Cursor::new(&buf)).unwrap();
        prop_assert_eq!(env.correlation_id, id);
        let back = Message::from_envelope(&env).unwrap();
        match (&msg, &back) {
            (Message::EvalResponse(a), Message::EvalResponse(b)) => {
                prop_assert_eq!(a.confusion, b.confusion);
                prop_assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
            }
            _ => prop_assert_eq!(&back, &msg),
        }
    }

    #[test]
    fn frame_reader_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..128)) {
        let _ = frame_read(&mut Cursor::new(&bytes));
    }

    #[test]
    fn payload_decoder_never_panics(
        kind in prop::sample::select(MessageKind::ALL.to_vec()),
        payload in prop::collection::vec(any::<u8>(), 0..128),
    ) {
        let env = Envelope { kind, correlation_id: 1, payload };
        let _ = Message::from_envelope(&env);
    }

    #[test]
    fn resolved_weights_sum_to_one(
        declared in prop::collection::vec(prop::option::of(0.0f64..0.2), 1..6),
        sizes in prop::collection::vec(1u64..500, 6),
    ) {
        let ids: Vec<String> = (0..declared.len()).map(|i| format!("s{i}")).collect();
        let input = ClientWeights::new(ids.iter().cloned().zip(declared).collect());
        let fill = WeightFill::Proportional(ids.iter().cloned().zip(sizes).collect());
        for fill in [WeightFill::Equal, fill] {
            let out = resolve_weights_with(&input, &ids, &fill).unwrap();
            prop_assert!((out.total() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn weight_resolution_errors() {
    let ids = |n: usize| (0..n).map(|i| format!("s{i}")).collect::<Vec<_>>();
    let w = |v: Vec<Option<f64>>| ClientWeights::new(ids(v.len()).into_iter().zip(v).collect());
    assert_eq!(
        resolve_weights(&w(vec![Some(0.5)]), &[]),
        Err(AggregationError::NoSuccessfulClients)
    );
    assert!(matches!(
        resolve_weights(&w(vec![Some(0.7), Some(0.6)]), &ids(2)),
        Err(AggregationError::DeclaredWeightsExceedOne(_))
    ));
    for bad in [-0.1, 1.5, f64::NAN] {
        assert!(matches!(
            resolve_weights(&w(vec![Some(bad), None]), &ids(2)),
            Err(AggregationError::InvalidWeight { .. })
        ));
    }
    let dup = ClientWeights::new(vec![("a".into(), None), ("a".into(), None)]);
    assert_eq!(
        resolve_weights(&dup, &["a".into()]),
        Err(AggregationError::DuplicateSilo("a".into()))
    );
}

#[test]
fn aggregation_scales_to_large_forests() {
    // 20 silos of 5,000 one-leaf trees each.
    let data = Dataset::from_rows(
        vec!["x".into()],
        &[vec![0.0], vec![1.0]],
        vec![0, 1],
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    let one = fit_forest(&data, &ForestParams::with_estimators(1, 0)).unwrap();
    let mut big = one.clone();
    big.trees = vec![one.trees[0].clone(); 5000];
    let forests: Vec<_> = (0..20).map(|i| (format!("s{i}"), big.clone())).collect();
    let weights = resolve_weights(
        &ClientWeights::absent(forests.iter().map(|f| f.0.clone())),
        &forests.iter().map(|f| f.0.clone()).collect::<Vec<_>>(),
    )
    .unwrap();
    let start = std::time::Instant::now();
    let agg = aggregate_detailed(&forests, &weights, 3).unwrap();
    assert_eq!(agg.forest.len(), 5000);
    assert_eq!(
        agg.selections.iter().map(|s| s.total()).sum::<usize>(),
        5000
    );
    assert!(start.elapsed().as_secs() < 5, "took {:?}", start.elapsed());
}
