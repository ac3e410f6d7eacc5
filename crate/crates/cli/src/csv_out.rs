//! CSV and flat-text report writers.
//!
//! Every file has a fixed header and a constant column count; floats use
//! Rust's shortest round-trip formatting so identical runs produce
//! identical bytes. Optional cells are left empty.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use rlul_core::certify::CertificationReport;
use rlul_core::experiments::{Fig2Cell, Table1Row};
use rlul_core::train::EpochRecord;
use rlul_core::unlearn::UnlearnEvent;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

/// `epoch,train_loss,test_accuracy,per_sample_updates`
pub fn write_train_metrics(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,test_accuracy,per_sample_updates\n");
    for r in records {
        let acc = r.eval_accuracy.map(fmt_f64).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{}",
            r.epoch,
            fmt_f64(r.train_loss),
            acc,
            r.per_sample_updates
        )?;
    }
    write_file(path, &out)
}

/// `ordinal,index,action,cost_delta,probe_accuracy`
pub fn write_event_log(path: &Path, events: &[UnlearnEvent]) -> Result<()> {
    let mut out = String::from("ordinal,index,action,cost_delta,probe_accuracy\n");
    for e in events {
        let probe = e.probe_accuracy.map(fmt_f64).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            e.ordinal,
            e.index,
            e.action.name(),
            e.per_sample_updates_delta,
            probe
        )?;
    }
    write_file(path, &out)
}

/// `method,size,standard_test,unlearned_set,total_test`
pub fn write_table1(path: &Path, rows: &[Table1Row]) -> Result<()> {
    let mut out = String::from("method,size,standard_test,unlearned_set,total_test\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.method.name(),
            r.size,
            fmt_f64(r.acc_standard),
            fmt_f64(r.acc_unlearned),
            fmt_f64(r.acc_total)
        )?;
    }
    write_file(path, &out)
}

/// `rate,size,accuracy,diverged` — one file per optimizer; a size-0 anchor
/// row records the shared baseline accuracy.
pub fn write_fig2(path: &Path, cells: &[&Fig2Cell]) -> Result<()> {
    let mut out = String::from("rate,size,accuracy,diverged\n");
    for cell in cells {
        writeln!(out, "{},0,{},false", fmt_f64(cell.rate), fmt_f64(cell.initial_accuracy))?;
        for p in &cell.points {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(cell.rate),
                p.size,
                fmt_f64(p.accuracy),
                p.diverged
            )?;
        }
    }
    write_file(path, &out)
}

/// Flat `key = value` text record of a certification report.
pub fn certification_text(report: &CertificationReport) -> String {
    format!(
        "cosine_divergence = {}\nnorm_gap = {}\ndelta_hat = {}\nmia_advantage_unlearned = {}\nmia_advantage_oracle = {}\nverdict = {}\nthreshold = {}\n",
        fmt_f64(report.cosine_divergence),
        fmt_f64(report.norm_gap),
        fmt_f64(report.delta_hat),
        fmt_f64(report.mia_advantage_unlearned),
        fmt_f64(report.mia_advantage_oracle),
        report.verdict.name(),
        fmt_f64(report.threshold_used),
    )
}

/// Single-row CSV of a certification report.
pub fn write_certification(txt_path: &Path, csv_path: &Path, report: &CertificationReport) -> Result<()> {
    write_file(txt_path, &certification_text(report))?;
    let mut out = String::from(
        "cosine_divergence,norm_gap,delta_hat,mia_advantage_unlearned,mia_advantage_oracle,verdict,threshold\n",
    );
    writeln!(
        out,
        "{},{},{},{},{},{},{}",
        fmt_f64(report.cosine_divergence),
        fmt_f64(report.norm_gap),
        fmt_f64(report.delta_hat),
        fmt_f64(report.mia_advantage_unlearned),
        fmt_f64(report.mia_advantage_oracle),
        report.verdict.name(),
        fmt_f64(report.threshold_used),
    )?;
    write_file(csv_path, &out)
}

/// `p` rows by `k` class columns of probe softmax outputs.
pub fn write_probe_distribution(path: &Path, dist: &rlul_core::certify::ProbeDistribution) -> Result<()> {
    let k = dist.probs.ncols();
    let header: Vec<String> = (0..k).map(|c| format!("class_{c}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for row in dist.probs.outer_iter() {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rlul_core::unlearn::UnlearnAction;

    #[test]
    fn event_log_has_fixed_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        let events = vec![
            UnlearnEvent {
                ordinal: 1,
                index: 40,
                action: UnlearnAction::RelabelUpdate,
                per_sample_updates_delta: 9,
                probe_accuracy: None,
            },
            UnlearnEvent {
                ordinal: 2,
                index: 7,
                action: UnlearnAction::RetrainTriggered,
                per_sample_updates_delta: 900,
                probe_accuracy: Some(0.5),
            },
        ];
        write_event_log(&path, &events).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "ordinal,index,action,cost_delta,probe_accuracy");
        assert!(lines.iter().all(|l| l.matches(',').count() == 4));
        assert_eq!(lines[1], "1,40,relabel_update,9,");
        assert_eq!(lines[2], "2,7,retrain_triggered,900,0.5");
    }

    #[test]
    fn train_metrics_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let records = vec![EpochRecord {
            epoch: 1,
            train_loss: 0.25,
            eval_accuracy: Some(0.975),
            per_sample_updates: 60000,
        }];
        write_train_metrics(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "epoch,train_loss,test_accuracy,per_sample_updates\n1,0.25,0.975,60000\n"
        );
    }
}
