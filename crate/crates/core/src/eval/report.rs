use std::fmt::Write;

use super::cv::{EvalReport, OutOfFoldRatios};

fn fmt_r(r: Option<f64>) -> String {
    match r {
        Some(r) => format!("{r:.4}"),
        None => "undefined".into(),
    }
}

/// Human-readable summary of an evaluation report.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let pct = report.confidence_level * 100.0;
    writeln!(
        out,
        "model {} ({} features), {}-fold cross-validation, seed {}",
        report.model_id,
        report.feature_set.len(),
        report.folds,
        report.seed
    )
    .unwrap();
    if let Some(c) = &report.classification {
        writeln!(out).unwrap();
        writeln!(out, "phase classification: {} instances", c.instances).unwrap();
        writeln!(out, "  accuracy        {:.4}", c.accuracy).unwrap();
        writeln!(
            out,
            "  error rate      {:.4}  ({pct:.0}% CI {:.4} .. {:.4})",
            1.0 - c.accuracy,
            c.error_interval.lower,
            c.error_interval.upper
        )
        .unwrap();
        writeln!(out, "  confusion (rows actual, columns predicted)").unwrap();
        write!(out, "  {:>10}", "").unwrap();
        for l in &c.confusion.labels {
            write!(out, " {l:>8}").unwrap();
        }
        writeln!(out).unwrap();
        for (l, row) in c.confusion.labels.iter().zip(&c.confusion.counts) {
            write!(out, "  {l:>10}").unwrap();
            for v in row {
                write!(out, " {v:>8}").unwrap();
            }
            writeln!(out).unwrap();
        }
    }
    if let Some(r) = &report.regression {
        writeln!(out).unwrap();
        writeln!(out, "nymph stage ratios: {} instances", r.instances).unwrap();
        writeln!(out, "  stage  pearson_r        mae").unwrap();
        for s in &r.stages {
            writeln!(out, "  {:>5}  {:>9}  {:>9.4}", s.stage, fmt_r(s.pearson_r), s.mae).unwrap();
        }
        writeln!(
            out,
            "  mean abs error  ({pct:.0}% CI {:.4} .. {:.4})",
            r.error_interval.lower, r.error_interval.upper
        )
        .unwrap();
        let undefined = r.undefined_stages();
        if !undefined.is_empty() {
            writeln!(out, "  warning: correlation undefined for stages {undefined:?} (constant values)").unwrap();
        }
    }
    out
}

/// Long-format predicted-vs-actual table for scatter plots.
pub fn scatter_csv(predictions: &[OutOfFoldRatios]) -> String {
    let mut out = String::from("station_id,date,fold,stage,predicted,actual\n");
    for p in predictions {
        for s in 0..5 {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                p.station_id,
                p.date,
                p.fold,
                s + 1,
                p.predicted[s],
                p.actual[s]
            )
            .unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn scatter_rows() {
        let p = OutOfFoldRatios {
            station_id: "A".into(),
            date: NaiveDate::from_ymd_opt(2016, 6, 1).unwrap(),
            fold: 3,
            predicted: [0.5, 0.5, 0.0, 0.0, 0.0],
            actual: [1.0, 0.0, 0.0, 0.0, 0.0],
        };
        let csv = scatter_csv(&[p]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[1], "A,2016-06-01,3,1,0.5,1");
    }
}
