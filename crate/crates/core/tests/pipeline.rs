mod common;

use std::fs;
use std::time::Duration;

use chrono::TimeDelta;
use common::{hours, run_scripted, scripted_config, tree};
use gpsloran::classify::ClassificationReport;
use gpsloran::convert::SessionManifest;
use gpsloran::orchestrate::{
    recover, session_timeline, work_dir, write_stats, CrashPoint, Hooks, PipelineError, Stage,
    StateError, StateStore, CLASSIFIED_DIR, CONVERTED_DIR, STATE_FILE,
};
use gpsloran::parse::StationId;
use gpsloran::simulate::{generate_stream, Scenario};
use gpsloran::Execution;

/// Sparse multi-day stream so several rotations stay cheap.
fn sparse(seed: u64, duration: Duration) -> Scenario {
    let mut s = Scenario::basic(seed, duration);
    s.gps_rate_hz = 1.0 / 60.0;
    s.stations[0].rate_hz = 1.0 / 120.0;
    s.zda_interval = Some(Duration::from_secs(600));
    s
}

#[test]
fn three_days_give_three_processed_segments() {
    let dir = tempfile::tempdir().unwrap();
    let s = sparse(1, hours(72) - Duration::from_secs(1));
    let stream = generate_stream(&s);
    let end = s.start + TimeDelta::hours(72) - TimeDelta::seconds(1);
    let report = run_scripted(
        &stream,
        scripted_config(dir.path()),
        Hooks::default(),
        s.start,
        end,
    )
    .unwrap();

    assert_eq!(report.segments.len(), 3);
    assert_eq!(report.exit_code(), 0);
    let state = StateStore::open(&report.session_dir)
        .unwrap()
        .state()
        .clone();
    for (i, e) in state.segments.iter().enumerate() {
        assert_eq!(e.stage, Stage::Converted);
        assert_eq!(e.segment.open_time, s.start + TimeDelta::days(i as i64));
        let work = work_dir(&report.session_dir, &e.segment);
        let rep = ClassificationReport::read(&work.join(CLASSIFIED_DIR)).unwrap();
        assert!(rep.is_consistent());
        assert_eq!(rep.segment.byte_count, e.segment.byte_count);
        let m = SessionManifest::read(&work.join(CONVERTED_DIR)).unwrap();
        assert!(m.verify(&work.join(CONVERTED_DIR)).is_empty());
        assert_eq!(m.record_counts.gps_fix, 24 * 60);
    }
    let timeline = session_timeline(&report.session_dir).unwrap();
    assert_eq!(
        timeline.len(),
        stream.truth.fixes.len() + stream.truth.loran.len()
    );
}

#[test]
fn failing_conversion_is_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let s = sparse(2, hours(72) - Duration::from_secs(1));
    let stream = generate_stream(&s);
    let hooks =
        Hooks::default().fail_convert_when(|i| (i == 2).then(|| "converter exploded".to_owned()));
    let end = s.start + TimeDelta::hours(72) - TimeDelta::seconds(1);
    let report = run_scripted(&stream, scripted_config(dir.path()), hooks, s.start, end).unwrap();

    assert_eq!(report.exit_code(), 2);
    assert_eq!(report.flagged(), 1);
    let stages: Vec<_> = report
        .segments
        .iter()
        .map(|s| (s.stage, s.failure.is_some()))
        .collect();
    assert_eq!(
        stages,
        vec![
            (Stage::Converted, false),
            (Stage::Classified, true),
            (Stage::Converted, false)
        ]
    );
    assert!(report.segments[1]
        .failure
        .as_deref()
        .unwrap()
        .contains("converter exploded"));
    // capture kept every byte
    assert_eq!(report.bytes_captured, stream.bytes.len() as u64);
}

#[test]
fn empty_period_yields_empty_valid_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let s = sparse(3, hours(1));
    let mut stream = generate_stream(&s);
    stream.bytes.clear();
    stream.lines.clear();
    let end = s.start + TimeDelta::hours(24) - TimeDelta::seconds(1);
    let report = run_scripted(
        &stream,
        scripted_config(dir.path()),
        Hooks::default(),
        s.start,
        end,
    )
    .unwrap();

    assert_eq!(report.segments.len(), 1);
    let state = StateStore::open(&report.session_dir)
        .unwrap()
        .state()
        .clone();
    let seg = &state.segments[0].segment;
    assert_eq!(seg.byte_count, 0);
    let work = work_dir(&report.session_dir, seg);
    let rep = ClassificationReport::read(&work.join(CLASSIFIED_DIR)).unwrap();
    assert_eq!(rep.total_lines, 0);
    let m = SessionManifest::read(&work.join(CONVERTED_DIR)).unwrap();
    assert_eq!(m.time_span, None);
    assert_eq!(m.record_counts.gps_fix, 0);
    assert!(m.verify(&work.join(CONVERTED_DIR)).is_empty());
}

fn two_day() -> (Scenario, chrono::DateTime<chrono::Utc>) {
    let s = sparse(4, hours(48) - Duration::from_secs(1));
    let end = s.start + TimeDelta::hours(48) - TimeDelta::seconds(1);
    (s, end)
}

#[test]
fn recovery_after_classification_only_converts() {
    let (s, end) = two_day();
    let stream = generate_stream(&s);
    let dir = tempfile::tempdir().unwrap();
    let hooks = Hooks::default()
        .crash_when(|site| site.point == CrashPoint::MidParse && site.segment_index == 2);
    let err = run_scripted(&stream, scripted_config(dir.path()), hooks, s.start, end).unwrap_err();
    let PipelineError::Crashed { point, session_dir } = err else {
        panic!("{err}")
    };
    assert_eq!(point, CrashPoint::MidParse);

    let state = StateStore::open(&session_dir).unwrap().state().clone();
    assert_eq!(state.segments[1].stage, Stage::Classified);
    let classified_before =
        tree(&work_dir(&session_dir, &state.segments[1].segment).join(CLASSIFIED_DIR));

    let rec = recover(&session_dir, Execution::default()).unwrap();
    let seg2 = state.segments[1].segment.file.clone();
    assert!(rec.reprocessed.contains(&(seg2, Stage::Classified)));
    assert!(rec.flagged.is_empty());
    assert!(rec
        .state
        .segments
        .iter()
        .all(|e| e.stage == Stage::Converted));
    let classified_after =
        tree(&work_dir(&session_dir, &state.segments[1].segment).join(CLASSIFIED_DIR));
    assert_eq!(classified_before, classified_after);
}

#[test]
fn recovery_from_mid_classification_matches_clean_run() {
    let (s, end) = two_day();
    let stream = generate_stream(&s);
    let clean = tempfile::tempdir().unwrap();
    let crashed = tempfile::tempdir().unwrap();
    let good = run_scripted(
        &stream,
        scripted_config(clean.path()),
        Hooks::default(),
        s.start,
        end,
    )
    .unwrap();

    let hooks = Hooks::default()
        .crash_when(|site| site.point == CrashPoint::MidClassify && site.segment_index == 1);
    let err = run_scripted(
        &stream,
        scripted_config(crashed.path()),
        hooks,
        s.start,
        end,
    )
    .unwrap_err();
    let PipelineError::Crashed { session_dir, .. } = err else {
        panic!("{err}")
    };
    let rec = recover(&session_dir, Execution::default()).unwrap();
    assert!(rec
        .reprocessed
        .iter()
        .any(|(f, st)| *st == Stage::Recorded && f == &good.segments[0].file));

    let a = tree(&good.session_dir.join("segments"));
    let b = tree(&session_dir.join("segments"));
    for (path, bytes) in &a {
        if path.starts_with(good.segments[0].file.trim_end_matches(".log")) {
            assert_eq!(Some(bytes), b.get(path), "{}", path.display());
        }
    }
    assert!(!b.keys().any(|p| p.to_string_lossy().contains(".tmp")));
}

#[test]
fn recovery_of_intact_state_is_a_no_op() {
    let (s, end) = two_day();
    let stream = generate_stream(&s);
    let dir = tempfile::tempdir().unwrap();
    let report = run_scripted(
        &stream,
        scripted_config(dir.path()),
        Hooks::default(),
        s.start,
        end,
    )
    .unwrap();
    let before = tree(&report.session_dir);
    let rec = recover(&report.session_dir, Execution::default()).unwrap();
    assert!(rec.reprocessed.is_empty());
    assert!(rec.sealed.is_empty());
    assert_eq!(before, tree(&report.session_dir));
}

#[test]
fn corrupt_state_lists_recoverable_segments() {
    let (s, end) = two_day();
    let stream = generate_stream(&s);
    let dir = tempfile::tempdir().unwrap();
    let report = run_scripted(
        &stream,
        scripted_config(dir.path()),
        Hooks::default(),
        s.start,
        end,
    )
    .unwrap();
    fs::write(report.session_dir.join(STATE_FILE), b"{ not json").unwrap();
    match recover(&report.session_dir, Execution::default()) {
        Err(e @ StateError::Corrupt { .. }) => {
            let msg = e.to_string();
            for seg in &report.segments {
                assert!(msg.contains(&seg.file), "{msg}");
            }
        }
        other => panic!("expected a corrupt-state error, got {other:?}"),
    }
}

#[test]
fn stats_follow_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let s = sparse(5, hours(30));
    let stream = generate_stream(&s);
    let end = s.start + TimeDelta::hours(30);
    let report = run_scripted(
        &stream,
        scripted_config(dir.path()),
        Hooks::default(),
        s.start,
        end,
    )
    .unwrap();
    let out = dir.path().join("stats");
    let st = write_stats(&report.session_dir, &out, None, Duration::from_secs(300)).unwrap();
    let m: StationId = "9930M".parse().unwrap();
    assert_eq!(st.snr_series, vec![(m, stream.truth.loran.len() as u64)]);
    assert_eq!(st.fix_count, stream.truth.fixes.len() as u64);
    let csv = fs::read_to_string(out.join("snr_9930M.csv")).unwrap();
    let values: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let truth: Vec<f64> = stream.truth.loran.iter().map(|l| l.snr_db).collect();
    assert_eq!(values, truth);
    assert!(out.join("summary.json").is_file());
    // one gap-free session
    assert!(st.summary.gaps.is_empty());
}

#[test]
fn unpaced_tcp_replay_matches_ground_truth() {
    use gpsloran::orchestrate::{Pipeline, PipelineConfig};
    use gpsloran::record::{RetryPolicy, SourceEndpoint};
    use gpsloran::simulate::{serve, Corruption, Pacing};
    use std::net::TcpListener;
    use std::sync::Arc;

    let mut s = Scenario::basic(6, hours(3));
    s.corruption = Corruption::uniform(0.02);
    let stream = Arc::new(generate_stream(&s));
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let server = serve(listener, stream.clone(), Pacing::Unpaced).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::new(
        SourceEndpoint::tcp(server.local_addr().to_string()).unwrap(),
        dir.path(),
    );
    cfg.retry = RetryPolicy::none();
    let report = Pipeline::new(cfg).run().unwrap();
    server.join().unwrap();
    assert_eq!(report.bytes_captured, stream.bytes.len() as u64);

    let got = session_timeline(&report.session_dir).unwrap();
    let want = stream.truth.timeline();
    assert_eq!(got.len(), want.len());
    assert!(got
        .iter()
        .zip(&want)
        .all(|(a, b)| a.payload.same_measurement(&b.payload)));

    // wall-clock run, so a midnight may split it
    let state = StateStore::open(&report.session_dir)
        .unwrap()
        .state()
        .clone();
    let dropped: u64 = state
        .segments
        .iter()
        .map(|e| {
            let m = SessionManifest::read(
                &work_dir(&report.session_dir, &e.segment).join(CONVERTED_DIR),
            )
            .unwrap();
            m.record_counts.quarantined + m.record_counts.parse_errors + m.record_counts.unsupported
        })
        .sum();
    let t = &stream.tally;
    assert_eq!(dropped, t.corrupted());
}
