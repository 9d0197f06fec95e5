//! Binary detection metrics, per-family seen/unseen recall and table output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_labels(predictions: &[Label], truths: &[Label]) -> Result<Self> {
        if predictions.len() != truths.len() {
            return Err(Error::Dimension {
                expected: truths.len(),
                actual: predictions.len(),
            });
        }
        let mut c = Self::default();
        for (p, t) in predictions.iter().zip(truths) {
            c.record(*p, *t);
        }
        Ok(c)
    }

    pub fn record(&mut self, prediction: Label, truth: Label) {
        match (prediction, truth) {
            (Label::Attack, Label::Attack) => self.tp += 1,
            (Label::Attack, Label::Normal) => self.fp += 1,
            (Label::Normal, Label::Normal) => self.tn += 1,
            (Label::Normal, Label::Attack) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// A ratio that may be undefined because its denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ratio {
    Value(f64),
    Undefined { undefined: String },
}

impl Ratio {
    fn of(num: u64, den: u64, reason: &str) -> Self {
        if den == 0 {
            Ratio::Undefined {
                undefined: reason.to_owned(),
            }
        } else {
            Ratio::Value(num as f64 / den as f64)
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(*v),
            Ratio::Undefined { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
}

impl Metrics {
    pub fn from_counts(c: ConfusionCounts) -> Result<Self> {
        if c.total() == 0 {
            return Err(Error::Empty("no predictions to score"));
        }
        let accuracy = (c.tp + c.tn) as f64 / c.total() as f64;
        let precision = Ratio::of(c.tp, c.tp + c.fp, "no positive predictions");
        let recall = Ratio::of(c.tp, c.tp + c.fn_, "no attacks in ground truth");
        let f1 = match (precision.value(), recall.value()) {
            (Some(p), Some(r)) if p + r > 0.0 => Ratio::Value(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Ratio::Undefined {
                undefined: "precision and recall are both zero".into(),
            },
            _ => Ratio::Undefined {
                undefined: "precision or recall undefined".into(),
            },
        };
        Ok(Self {
            counts: c,
            accuracy,
            precision,
            recall,
            f1,
        })
    }
}

pub fn metrics(predictions: &[Label], truths: &[Label]) -> Result<Metrics> {
    Metrics::from_counts(ConfusionCounts::from_labels(predictions, truths)?)
}

/// Ground-truth tags of a test example for zero-day reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackTag {
    pub truth: Label,
    /// Attack type string; "unseen" means it never occurs in training data.
    pub attack: Option<String>,
    pub family: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRecall {
    pub category: String,
    pub detected: u64,
    pub total: u64,
    pub recall: f64,
}

/// Recall per `<family>_seen` / `<family>_unseen` bucket over attack examples.
/// Attacks without a family tag land in `untagged_*`.
pub fn zero_day_recall(
    predictions: &[Label],
    tags: &[AttackTag],
    training_attack_types: &BTreeSet<String>,
) -> Result<Vec<CategoryRecall>> {
    if predictions.len() != tags.len() {
        return Err(Error::Dimension {
            expected: tags.len(),
            actual: predictions.len(),
        });
    }
    let mut buckets: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for (pred, tag) in predictions.iter().zip(tags) {
        if tag.truth != Label::Attack {
            continue;
        }
        let seen = tag
            .attack
            .as_ref()
            .is_some_and(|a| training_attack_types.contains(a));
        let family = tag.family.as_deref().unwrap_or("untagged");
        let key = format!("{family}_{}", if seen { "seen" } else { "unseen" });
        let slot = buckets.entry(key).or_default();
        slot.1 += 1;
        if pred.is_attack() {
            slot.0 += 1;
        }
    }
    Ok(buckets
        .into_iter()
        .map(|(category, (detected, total))| CategoryRecall {
            category,
            detected,
            total,
            recall: detected as f64 / total as f64,
        })
        .collect())
}

/// One table row, with metrics as percentages rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn pct(v: f64) -> f64 {
    (v * 10_000.0).round() / 100.0
}

impl ReportRow {
    pub fn from_metrics(name: impl Into<String>, m: &Metrics) -> Self {
        Self {
            name: name.into(),
            accuracy: pct(m.accuracy),
            precision: m.precision.value().map(pct),
            recall: m.recall.value().map(pct),
            f1: m.f1.value().map(pct),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

const COLUMNS: [&str; 5] = ["name", "accuracy", "precision", "recall", "f1"];

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

pub fn render_report(rows: &[ReportRow], format: ReportFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Empty("no report rows"));
    }
    let mut out = String::new();
    match format {
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(rows)?;
            out.push('\n');
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(COLUMNS)?;
            for r in rows {
                w.write_record([
                    r.name.clone(),
                    format!("{:.2}", r.accuracy),
                    cell(r.precision),
                    cell(r.recall),
                    cell(r.f1),
                ])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
            out = String::from_utf8(bytes).expect("csv writer emits utf-8");
        }
        ReportFormat::Markdown => {
            out.push_str("| Method | Acc. | Pre. | Rec. | F1 |\n");
            out.push_str("|---|---:|---:|---:|---:|\n");
            for r in rows {
                let _ = writeln!(
                    out,
                    "| {} | {:.2} | {} | {} | {} |",
                    r.name,
                    r.accuracy,
                    cell(r.precision),
                    cell(r.recall),
                    cell(r.f1)
                );
            }
        }
    }
    Ok(out)
}

pub fn emit_report(rows: &[ReportRow], format: ReportFormat, path: &Path) -> Result<()> {
    let text = render_report(rows, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses the CSV form produced by [`render_report`].
pub fn parse_csv_report(text: &str) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let parse = |s: &str| -> Result<Option<f64>> {
        if s == "-" {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("bad metric cell {s:?}")))
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(ReportRow {
            name: rec[0].to_owned(),
            accuracy: parse(&rec[1])?.ok_or_else(|| Error::Config("missing accuracy".into()))?,
            precision: parse(&rec[2])?,
            recall: parse(&rec[3])?,
            f1: parse(&rec[4])?,
        });
    }
    Ok(rows)
}

/// Mean and population standard deviation of a metric over repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub accuracy: Spread,
    pub precision: Option<Spread>,
    pub recall: Option<Spread>,
    pub f1: Option<Spread>,
}

pub fn aggregate(runs: &[Metrics]) -> Result<AggregateMetrics> {
    if runs.is_empty() {
        return Err(Error::Empty("no runs to aggregate"));
    }
    let collect = |f: fn(&Metrics) -> Option<f64>| -> Option<Spread> {
        let vals: Option<Vec<f64>> = runs.iter().map(f).collect();
        vals.and_then(|v| Spread::of(&v))
    };
    Ok(AggregateMetrics {
        accuracy: Spread::of(&runs.iter().map(|m| m.accuracy).collect::<Vec<_>>())
            .expect("nonempty"),
        precision: collect(|m| m.precision.value()),
        recall: collect(|m| m.recall.value()),
        f1: collect(|m| m.f1.value()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(v: &[u8]) -> Vec<Label> {
        v.iter().map(|&x| Label::try_from(x).unwrap()).collect()
    }

    fn from_counts(tp: u64, fn_: u64, fp: u64, tn: u64) -> Metrics {
        Metrics::from_counts(ConfusionCounts { tp, fp, tn, fn_ }).unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let t = labels(&[0, 1, 1, 0, 1]);
        let m = metrics(&t, &t).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f1, Ratio::Value(1.0));
    }

    #[test]
    fn worked_counts() {
        let m = from_counts(96, 4, 12, 88);
        assert_eq!(m.accuracy, 184.0 / 200.0);
        let p = m.precision.value().unwrap();
        let r = m.recall.value().unwrap();
        assert!((p - 96.0 / 108.0).abs() < 1e-15);
        assert_eq!(r, 0.96);
        // 2·96 / (2·96 + 12 + 4)
        assert!((m.f1.value().unwrap() - 192.0 / 208.0).abs() < 1e-12);
        assert!((m.f1.value().unwrap() - 0.9231).abs() < 1e-4);
    }

    #[test]
    fn undefined_ratios_carry_reasons() {
        let m = metrics(&labels(&[0, 0]), &labels(&[0, 0])).unwrap();
        assert!(m.precision.value().is_none());
        assert!(m.recall.value().is_none());
        assert!(m.f1.value().is_none());
        assert!(metrics(&labels(&[0]), &labels(&[0, 1])).is_err());
        assert!(metrics(&[], &[]).is_err());
    }

    fn tag(truth: u8, attack: Option<&str>, family: Option<&str>) -> AttackTag {
        AttackTag {
            truth: Label::try_from(truth).unwrap(),
            attack: attack.map(str::to_owned),
            family: family.map(str::to_owned),
        }
    }

    #[test]
    fn zero_day_buckets() {
        let train: BTreeSet<String> = ["neptune".to_string(), "satan".to_string()].into();
        let tags = vec![
            tag(1, Some("neptune"), Some("DoS")),
            tag(1, Some("apache2"), Some("DoS")),
            tag(1, Some("apache2"), Some("DoS")),
            tag(1, Some("satan"), Some("Probe")),
            tag(0, None, None),
            tag(1, Some("mystery"), None),
        ];
        let preds = labels(&[1, 1, 0, 1, 1, 1]);
        let r = zero_day_recall(&preds, &tags, &train).unwrap();
        let get = |k: &str| r.iter().find(|c| c.category == k).unwrap();
        assert_eq!(get("DoS_seen").recall, 1.0);
        assert_eq!((get("DoS_unseen").detected, get("DoS_unseen").total), (1, 2));
        assert_eq!(get("Probe_seen").recall, 1.0);
        assert_eq!(get("untagged_unseen").total, 1);
        let attacks = tags.iter().filter(|t| t.truth == Label::Attack).count() as u64;
        assert_eq!(r.iter().map(|c| c.total).sum::<u64>(), attacks);
    }

    #[test]
    fn zero_day_matches_tally_oracle() {
        let train: BTreeSet<String> = ["a".to_string()].into();
        let fams = ["DoS", "Probe", "R2L", "U2R"];
        let types = ["a", "b", "c"];
        let mut tags = Vec::new();
        let mut preds = Vec::new();
        for i in 0..300usize {
            let attack = i % 5 != 0;
            tags.push(AttackTag {
                truth: if attack { Label::Attack } else { Label::Normal },
                attack: attack.then(|| types[i % 3].to_string()),
                family: attack.then(|| fams[(i / 3) % 4].to_string()),
            });
            preds.push(if (i * 7) % 3 == 0 { Label::Normal } else { Label::Attack });
        }
        let got = zero_day_recall(&preds, &tags, &train).unwrap();
        // independent tally: count per key in a flat list
        let mut keys: Vec<(String, bool)> = Vec::new();
        for (p, t) in preds.iter().zip(&tags) {
            if t.truth == Label::Attack {
                let seen = t.attack.as_deref() == Some("a");
                let k = format!("{}_{}", t.family.as_ref().unwrap(), if seen { "seen" } else { "unseen" });
                keys.push((k, p.is_attack()));
            }
        }
        for c in &got {
            let total = keys.iter().filter(|(k, _)| *k == c.category).count() as u64;
            let det = keys.iter().filter(|(k, d)| *k == c.category && *d).count() as u64;
            assert_eq!((c.detected, c.total), (det, total));
        }
    }

    #[test]
    fn report_formats() {
        let m = from_counts(9621, 379, 1567, 8433);
        let rows = vec![ReportRow::from_metrics("online", &m)];
        let json = render_report(&rows, ReportFormat::Json).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for k in ["accuracy", "precision", "recall", "f1"] {
            assert!(v[0].get(k).is_some(), "missing {k}");
        }
        let md = render_report(&rows, ReportFormat::Markdown).unwrap();
        assert!(md.starts_with("| Method | Acc. | Pre. | Rec. | F1 |"));
        assert!(md.contains("| online | 90.27 | 85.99 | 96.21 | 90.82 |"), "{md}");
        assert!(render_report(&[], ReportFormat::Csv).is_err());
    }

    #[test]
    fn csv_json_csv_round_trip() {
        let rows = vec![
            ReportRow::from_metrics("a", &from_counts(10, 2, 3, 20)),
            ReportRow {
                name: "no positives, \"quoted\"".into(),
                accuracy: 50.0,
                precision: None,
                recall: Some(0.0),
                f1: None,
            },
        ];
        let csv1 = render_report(&rows, ReportFormat::Csv).unwrap();
        let parsed = parse_csv_report(&csv1).unwrap();
        let json = render_report(&parsed, ReportFormat::Json).unwrap();
        let back: Vec<ReportRow> = serde_json::from_str(&json).unwrap();
        let csv2 = render_report(&back, ReportFormat::Csv).unwrap();
        assert_eq!(csv1, csv2);
        assert_eq!(parsed, rows);
    }

    #[test]
    fn spread_of_runs() {
        let s = Spread::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(Spread::of(&[]).is_none());
    }

    proptest! {
        #[test]
        fn metrics_are_order_invariant(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..200), rot in 0usize..200) {
            let p: Vec<Label> = pairs.iter().map(|x| Label::try_from(x.0).unwrap()).collect();
            let t: Vec<Label> = pairs.iter().map(|x| Label::try_from(x.1).unwrap()).collect();
            let a = metrics(&p, &t).unwrap();
            let k = rot % p.len();
            let mut p2 = p.clone();
            let mut t2 = t.clone();
            p2.rotate_left(k);
            t2.rotate_left(k);
            let b = metrics(&p2, &t2).unwrap();
            prop_assert_eq!(&a, &b);
            let c = a.counts;
            prop_assert_eq!(a.accuracy, (c.tp + c.tn) as f64 / c.total() as f64);
            prop_assert_eq!(c.total(), p.len() as u64);
        }
    }
}
