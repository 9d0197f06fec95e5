use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ondetect_core::dataset::{encode_all, read_encoded_csv, read_raw_csv, split_initial, StreamPlan};
use ondetect_core::eval::{aggregate, render_report, AggregateMetrics, CategoryRecall, ReportFormat, ReportRow};
use ondetect_core::online::{
    resume_online, run_offline, run_online, AlertEvent, EvalResult, RoundReport, RunObserver,
    Snapshot,
};
use ondetect_core::pipeline::TEST_FILE;
use ondetect_core::profiles::{self, Profile};
use ondetect_core::{Checkpoint, DatasetDescriptor, Dataset, OnlineState, Prepared, RunMode, RunReport};
use serde::Serialize;

use crate::args::{EvaluateArgs, PreprocessArgs, RunArgs};

pub fn preprocess(args: &PreprocessArgs) -> Result<()> {
    let profile = args.input.profile()?;
    let data = args.input.load(profile.as_ref())?;
    data.save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    tracing::info!(
        out = %args.out.display(),
        train = data.train.len(),
        test = data.test.len(),
        "preprocessed"
    );
    println!("encoded_dim={}", data.schema.encoded_dim);
    Ok(())
}

/// Writes alerts as JSON lines and, optionally, a snapshot per round.
struct FileObserver {
    alerts: BufWriter<File>,
    snapshots: Option<PathBuf>,
}

impl FileObserver {
    fn open(dir: &Path, snapshots: bool, append: bool) -> Result<Self> {
        let path = dir.join("alerts.jsonl");
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        let snapshots = if snapshots {
            let d = dir.join("snapshots");
            fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
            Some(d)
        } else {
            None
        };
        Ok(Self {
            alerts: BufWriter::new(file),
            snapshots,
        })
    }
}

fn io_err(e: std::io::Error) -> ondetect_core::Error {
    ondetect_core::Error::Io {
        path: "alerts.jsonl".into(),
        source: e,
    }
}

impl RunObserver for FileObserver {
    fn alert(&mut self, event: &AlertEvent) -> ondetect_core::Result<()> {
        serde_json::to_writer(&mut self.alerts, event)?;
        self.alerts.write_all(b"\n").map_err(io_err)
    }

    fn round_done(&mut self, _state: &OnlineState, report: &RoundReport) -> ondetect_core::Result<()> {
        self.alerts.flush().map_err(io_err)?;
        tracing::info!(
            round = report.round,
            alerts = report.alerts,
            train_set_size = report.train_set_size,
            "round done"
        );
        Ok(())
    }

    fn wants_snapshots(&self) -> bool {
        self.snapshots.is_some()
    }

    fn snapshot(&mut self, snapshot: &Snapshot) -> ondetect_core::Result<()> {
        if let Some(dir) = &self.snapshots {
            snapshot.save(&dir.join(format!("round-{:04}.json", snapshot.state.round)))?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Summary {
    mode: RunMode,
    seeds: Vec<u64>,
    rows: Vec<ReportRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    aggregate: Option<AggregateMetrics>,
}

fn save_outputs(dir: &Path, report: &RunReport, state: &OnlineState, data: &Prepared) -> Result<()> {
    report.save(&dir.join("report.json"))?;
    Checkpoint::from_state(state, &data.schema)?.save(&dir.join("checkpoint.json"))?;
    Ok(())
}

fn split(data: &Prepared, fraction: f64, cfg: &ondetect_core::OnlineConfig) -> Result<(Dataset, Vec<ondetect_core::LabeledExample>)> {
    let plan = StreamPlan {
        initial_fraction: fraction,
        chunk_size: cfg.chunk_size,
        order_seed: cfg.seed,
    };
    Ok(split_initial(&data.train, &plan)?)
}

/// Returns the process exit code.
pub fn run(args: &RunArgs, offline: bool) -> Result<u8> {
    let offline = offline || args.offline;
    let profile = args.input.profile()?;
    let data = args.input.load(profile.as_ref())?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    if let Some(path) = &args.resume {
        return resume(args, profile.as_ref(), &data, path);
    }

    let mode = if offline { RunMode::Offline } else { RunMode::Online };
    let mut rows = Vec::new();
    let mut finals = Vec::new();
    let mut seeds = Vec::new();
    for i in 0..args.runs.get() as u64 {
        let seed = args.hyper.seed + i;
        let (cfg, fraction) = args.hyper.config(profile.as_ref(), seed)?;
        let dir = args.out.join(format!("seed-{seed}"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        tracing::info!(seed, ?mode, "run started");
        let (report, state) = if offline {
            run_offline(&data.train, &data.test, &cfg)?
        } else {
            let (initial, stream) = split(&data, fraction, &cfg)?;
            let mut observer = FileObserver::open(&dir, args.snapshot_every_round, false)?;
            let out = run_online(&initial, stream, &data.test, &cfg, &mut observer)?;
            observer.alerts.flush()?;
            out
        };
        save_outputs(&dir, &report, &state, &data)?;
        tracing::info!(seed, digest = %report.digest, secs = report.wall_clock_secs, "run finished");
        let suffix = if args.runs.get() > 1 {
            format!(" (seed {seed})")
        } else {
            String::new()
        };
        if !offline {
            rows.push(ReportRow::from_metrics(format!("initial{suffix}"), &report.initial.metrics));
        }
        let name = if offline { "offline" } else { "online" };
        rows.push(ReportRow::from_metrics(format!("{name}{suffix}"), &report.final_eval.metrics));
        finals.push(report.final_eval.metrics.clone());
        seeds.push(seed);
    }
    let agg = if finals.len() > 1 {
        let a = aggregate(&finals)?;
        rows.push(ReportRow {
            name: format!("mean of {}", finals.len()),
            accuracy: round2(a.accuracy.mean * 100.0),
            precision: a.precision.map(|s| round2(s.mean * 100.0)),
            recall: a.recall.map(|s| round2(s.mean * 100.0)),
            f1: a.f1.map(|s| round2(s.mean * 100.0)),
        });
        Some(a)
    } else {
        None
    };
    write_summary(&args.out, mode, seeds, rows, agg.clone())?;

    let mean_acc = agg
        .as_ref()
        .map_or(finals[0].accuracy, |a| a.accuracy.mean)
        * 100.0;
    let mean_f1 = match &agg {
        Some(a) => a.f1.map(|s| s.mean * 100.0),
        None => finals[0].f1.value().map(|v| v * 100.0),
    };
    Ok(check_targets(args, mean_acc, mean_f1))
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn check_targets(args: &RunArgs, acc: f64, f1: Option<f64>) -> u8 {
    let mut ok = true;
    if let Some(t) = args.target_accuracy {
        let hit = (acc - t).abs() <= args.tolerance;
        tracing::info!(accuracy = acc, target = t, tolerance = args.tolerance, hit, "accuracy target");
        ok &= hit;
    }
    if let Some(t) = args.target_f1 {
        let hit = f1.is_some_and(|v| (v - t).abs() <= args.tolerance);
        tracing::info!(f1 = ?f1, target = t, tolerance = args.tolerance, hit, "f1 target");
        ok &= hit;
    }
    if ok {
        0
    } else {
        eprintln!("metrics outside the requested tolerance");
        2
    }
}

fn write_summary(
    out: &Path,
    mode: RunMode,
    seeds: Vec<u64>,
    rows: Vec<ReportRow>,
    aggregate: Option<AggregateMetrics>,
) -> Result<()> {
    let markdown = render_report(&rows, ReportFormat::Markdown)?;
    fs::write(out.join("summary.md"), &markdown)?;
    fs::write(out.join("summary.csv"), render_report(&rows, ReportFormat::Csv)?)?;
    let summary = Summary {
        mode,
        seeds,
        rows,
        aggregate,
    };
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    print!("{markdown}");
    Ok(())
}

fn resume(args: &RunArgs, profile: Option<&Profile>, data: &Prepared, path: &Path) -> Result<u8> {
    let snapshot = Snapshot::load(path).with_context(|| format!("loading snapshot {}", path.display()))?;
    let cfg = snapshot.state.config.clone();
    let fraction = args
        .hyper
        .initial_fraction
        .or(profile.map(|p| p.initial_fraction))
        .unwrap_or(profiles::load("nsl-kdd")?.initial_fraction);
    let (initial, stream) = split(data, fraction, &cfg)?;
    if initial.len() != snapshot.state.initial_len {
        bail!(
            "snapshot was taken with an initial set of {} rows but this input gives {}; \
             pass the same data and --initial-fraction",
            snapshot.state.initial_len,
            initial.len()
        );
    }
    let dir = args.out.join(format!("seed-{}", cfg.seed));
    fs::create_dir_all(&dir)?;
    let mut observer = FileObserver::open(&dir, args.snapshot_every_round, true)?;
    let (report, state) = resume_online(snapshot, stream, &data.test, &mut observer)?;
    observer.alerts.flush()?;
    save_outputs(&dir, &report, &state, data)?;
    let rows = vec![
        ReportRow::from_metrics("initial", &report.initial.metrics),
        ReportRow::from_metrics("online", &report.final_eval.metrics),
    ];
    write_summary(&args.out, RunMode::Online, vec![cfg.seed], rows, None)?;
    let f1 = report.final_eval.metrics.f1.value().map(|v| v * 100.0);
    Ok(check_targets(args, report.final_eval.metrics.accuracy * 100.0, f1))
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    checkpoint_round: usize,
    rows: Vec<ReportRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    zero_day: Option<&'a [CategoryRecall]>,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let schema = Arc::new(ckpt.schema.clone());
    let test = match (&args.prepared, &args.test) {
        (Some(dir), _) => read_encoded_csv(&dir.join(TEST_FILE), schema)?,
        (None, Some(path)) => {
            let desc: DatasetDescriptor = match (&args.descriptor, &args.dataset) {
                (Some(d), _) => DatasetDescriptor::load(d)?,
                (None, Some(name)) => profiles::load(name)?.descriptor,
                (None, None) => bail!("pass --dataset or --descriptor to read a raw test file"),
            };
            let raw = read_raw_csv(path, &desc)?;
            encode_all(&raw.records, schema)?
        }
        (None, None) => bail!("pass --test or --prepared"),
    };
    let result: EvalResult = ckpt.evaluate(&test)?;
    let rows = vec![ReportRow::from_metrics("evaluate", &result.metrics)];
    let format: ReportFormat = args.format.parse()?;
    let text = match format {
        ReportFormat::Json => {
            let out = EvaluateOutput {
                checkpoint_round: ckpt.round,
                rows,
                zero_day: args.zero_day.then_some(result.zero_day.as_slice()),
            };
            serde_json::to_string_pretty(&out)? + "\n"
        }
        _ => {
            let mut text = render_report(&rows, format)?;
            if args.zero_day {
                text.push('\n');
                text.push_str(&render_zero_day(&result.zero_day, format));
            }
            text
        }
    };
    if let Some(path) = &args.out {
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{text}");
    Ok(())
}

fn render_zero_day(recalls: &[CategoryRecall], format: ReportFormat) -> String {
    let mut out = String::new();
    if format == ReportFormat::Markdown {
        out.push_str("| Category | Detected | Total | Recall |\n|---|---:|---:|---:|\n");
        for c in recalls {
            out.push_str(&format!(
                "| {} | {} | {} | {:.2} |\n",
                c.category,
                c.detected,
                c.total,
                c.recall * 100.0
            ));
        }
    } else {
        out.push_str("category,detected,total,recall\n");
        for c in recalls {
            out.push_str(&format!("{},{},{},{:.2}\n", c.category, c.detected, c.total, c.recall * 100.0));
        }
    }
    out
}

pub fn list_profiles() -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&profiles::builtin())?);
    Ok(())
}
