use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU8, Ordering};
use std::sync::Arc;

use anyhow::{Context, Result};
use chrono::{DateTime, NaiveDateTime, Utc};
use gpsloran::classify::{route, RoutePolicy, SegmentInfo, DEFAULT_MAX_LINE_LEN};
use gpsloran::convert::{convert_classified, ConvertOptions};
use gpsloran::orchestrate::{self, Pipeline, PipelineConfig, PipelineError, RunReport};
use gpsloran::record::SessionMetadata;
use gpsloran::simulate::{generate_stream, Pacing, Scenario};
use gpsloran::Execution;

use crate::{ClassifyArgs, ConvertArgs, RecordArgs, StatsArgs};

pub const OK: u8 = 0;
pub const FATAL: u8 = 1;
pub const PARTIAL: u8 = 2;

/// First Ctrl-C asks the run to wind down, the second exits at once.
fn stop_on_interrupt(stop: Arc<AtomicBool>) {
    let hits = AtomicU8::new(0);
    let r = ctrlc::set_handler(move || {
        if hits.fetch_add(1, Ordering::SeqCst) > 0 {
            std::process::exit(130);
        }
        tracing::warn!("interrupt received, closing the current segment");
        stop.store(true, Ordering::SeqCst);
    });
    if let Err(e) = r {
        tracing::warn!(error = %e, "no interrupt handler");
    }
}

fn finish_run(result: Result<RunReport, PipelineError>) -> Result<u8> {
    let report = result?;
    println!("{}", report.session_dir.display());
    for s in &report.segments {
        match &s.failure {
            Some(f) => {
                tracing::warn!(segment = %s.file, stage = ?s.stage, failure = %f, "segment flagged")
            }
            None => tracing::info!(segment = %s.file, stage = ?s.stage, "segment done"),
        }
    }
    Ok(if report.exit_code() == 0 { OK } else { PARTIAL })
}

pub fn record(a: RecordArgs) -> Result<u8> {
    let mut cfg = PipelineConfig::new(a.source, a.out);
    if let Some(speed) = a.replay_speed {
        cfg.source = cfg
            .source
            .with_replay_speed(speed)
            .map_err(anyhow::Error::msg)?;
    }
    cfg.rotation = a.rotate;
    cfg.flush_interval = a.flush_interval;
    cfg.sync_on_flush = a.sync_on_flush;
    cfg.retry.max_retries = a.retries;
    let p = Pipeline::new(cfg).capture_only();
    stop_on_interrupt(p.stop_flag());
    finish_run(p.run())
}

/// Session id and open time for a loose segment file. Taken from the
/// session metadata next to it when there is one.
fn segment_info(path: &Path) -> Result<SegmentInfo> {
    let file = path
        .file_name()
        .and_then(|n| n.to_str())
        .context("segment path has no file name")?
        .to_owned();
    let dir = path.parent().unwrap_or(Path::new("."));
    if let Ok(meta) = SessionMetadata::read(dir) {
        if let Some(seg) = meta.segments.iter().find(|s| s.file == file) {
            return Ok(SegmentInfo {
                file,
                session_id: meta.session_id.clone(),
                open_time: seg.open_time,
            });
        }
    }
    let from_name = file
        .strip_prefix("raw_")
        .and_then(|s| s.get(..16))
        .and_then(|s| NaiveDateTime::parse_from_str(s, "%Y%m%dT%H%M%SZ").ok())
        .map(|t| t.and_utc());
    let open_time = match from_name {
        Some(t) => t,
        None => {
            let m = fs::metadata(path).with_context(|| format!("reading {}", path.display()))?;
            tracing::warn!(segment = %file, "open time unknown, using the file modification time");
            DateTime::<Utc>::from(m.modified()?)
        }
    };
    let session_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("segment")
        .to_owned();
    Ok(SegmentInfo {
        file,
        session_id,
        open_time,
    })
}

pub fn classify(a: ClassifyArgs, exec: Execution) -> Result<u8> {
    let info = segment_info(&a.segment)?;
    let policy = RoutePolicy {
        quarantine_invalid: !a.keep_invalid_checksums,
        max_line_len: a.max_line_len.unwrap_or(DEFAULT_MAX_LINE_LEN),
    };
    let report = route(&a.segment, info, &a.out, &policy, exec)?;
    tracing::info!(
        lines = report.total_lines,
        quarantined = report.quarantined_lines,
        invalid_checksums = report.invalid_checksum_lines,
        "classified"
    );
    print_json(&report)?;
    Ok(OK)
}

pub fn convert(a: ConvertArgs, exec: Execution) -> Result<u8> {
    let opts = ConvertOptions {
        formats: a.format,
        gap_threshold: a.gap_threshold,
        exec,
    };
    let manifest = convert_classified(&a.classified, &a.out, &opts)?;
    tracing::info!(
        gps = manifest.record_counts.gps_fix,
        loran = manifest.record_counts.loran_total(),
        parse_errors = manifest.record_counts.parse_errors,
        "converted"
    );
    print_json(&manifest)?;
    Ok(OK)
}

fn load_config(path: &Path, sequential: bool) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path).map_err(anyhow::Error::msg)?;
    if sequential {
        cfg.parallel = false;
    }
    Ok(cfg)
}

pub fn run(config: &Path, sequential: bool) -> Result<u8> {
    let cfg = load_config(config, sequential)?;
    let p = Pipeline::new(cfg);
    stop_on_interrupt(p.stop_flag());
    finish_run(p.run())
}

pub fn stats(a: StatsArgs) -> Result<u8> {
    let out = a.out.unwrap_or_else(|| a.session.join("stats"));
    let report = orchestrate::write_stats(&a.session, &out, a.station, a.gap_threshold)?;
    if let Some(st) = a.station {
        if report.snr_series.iter().all(|(_, n)| *n == 0) {
            tracing::warn!(station = %st, "no measurements for this station");
        }
    }
    for f in &report.files {
        tracing::info!(file = %f.display(), "wrote");
    }
    print_json(&report.summary)?;
    Ok(OK)
}

pub fn recover(
    state: &Path,
    resume_with: Option<&Path>,
    exec: Execution,
    sequential: bool,
) -> Result<u8> {
    let report = orchestrate::recover(state, exec)?;
    for f in &report.sealed {
        tracing::info!(segment = %f, "sealed");
    }
    if report.reprocessed.is_empty() {
        tracing::info!("nothing to reprocess");
    }
    for f in &report.flagged {
        tracing::warn!(segment = %f, "still failing, flagged");
    }
    let mut code = if report.flagged.is_empty() {
        OK
    } else {
        PARTIAL
    };
    if let Some(cfg) = resume_with {
        let cfg = load_config(cfg, sequential)?;
        tracing::info!(out = %cfg.out_dir.display(), "starting a new capture session");
        let p = Pipeline::new(cfg);
        stop_on_interrupt(p.stop_flag());
        code = code.max(finish_run(p.run())?);
    }
    Ok(code)
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::load(path).map_err(anyhow::Error::msg)
}

pub fn serve(scenario: &Path, listen: &str, pace: Pacing, truth: Option<&Path>) -> Result<u8> {
    let s = load_scenario(scenario)?;
    let stream = generate_stream(&s);
    if let Some(t) = truth {
        stream.truth.write_csv(t)?;
    }
    let listener = TcpListener::bind(listen).with_context(|| format!("binding {listen}"))?;
    let server = gpsloran::simulate::serve(listener, Arc::new(stream), pace)?;
    tracing::info!(addr = %server.local_addr(), pace = %pace, "serving");
    println!("{}", server.local_addr());
    std::io::stdout().flush()?;
    let report = server.join()?;
    tracing::info!(
        bytes = report.bytes_sent,
        connections = report.connections,
        "done"
    );
    Ok(OK)
}

pub fn generate(scenario: &Path, out: &Path, truth: Option<&Path>) -> Result<u8> {
    let s = load_scenario(scenario)?;
    let stream = generate_stream(&s);
    fs::write(out, &stream.bytes).with_context(|| format!("writing {}", out.display()))?;
    if let Some(t) = truth {
        stream.truth.write_csv(t)?;
    }
    let t = &stream.tally;
    tracing::info!(
        lines = t.lines,
        gga = t.gga,
        loran = t.loran,
        corrupted = t.corrupted(),
        bytes = stream.bytes.len(),
        "generated"
    );
    Ok(OK)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}
