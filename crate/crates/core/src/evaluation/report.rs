use std::io::{Read, Write};

use super::harness::{EvalReport, Metric};
use crate::{Error, Result};

/// Pretty JSON with metadata and the aggregate table.
pub fn write_report_json<W: Write>(mut out: W, report: &EvalReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

/// Reads a report written by [`write_report_json`]; per-user rows are not restored.
pub fn read_report_json<R: Read>(source: R) -> Result<EvalReport> {
    serde_json::from_reader(source).map_err(|e| Error::Format(e.to_string()))
}

/// Raw per-user values as `user,checkpoint,metric,N,value`.
pub fn write_per_user_csv<W: Write>(mut out: W, report: &EvalReport) -> Result<()> {
    writeln!(out, "user,checkpoint,metric,N,value")?;
    for u in &report.users {
        for (c, &checkpoint) in report.meta.checkpoints.iter().enumerate() {
            for metric in Metric::ALL {
                for (k, &n) in report.meta.ns.iter().enumerate() {
                    let v = u.values[report.value_index(c, metric, k)];
                    writeln!(out, "{},{},{},{},{}", u.user, checkpoint, metric.as_str(), n, v)?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elicitation::{q_pop, GainRecommender};
    use crate::evaluation::{simulate_cold_start, EvalConfig};
    use crate::interactions::{short_head_split, split_users};
    use crate::synthetic;

    #[test]
    fn round_trip_and_csv() {
        let x = synthetic::ratings(20, 10, 0.5, 2);
        let split = split_users(&x, 0.2, 0).unwrap();
        let pop = short_head_split(&split.train, 0.33).unwrap();
        let cfg = EvalConfig { checkpoints: vec![1, 2], ns: vec![2], ..Default::default() };
        let report = simulate_cold_start(
            Some(&q_pop(&split.train)),
            &GainRecommender::new(&split.train),
            &split,
            &cfg,
            &pop,
        )
        .unwrap();
        let mut json = Vec::new();
        write_report_json(&mut json, &report).unwrap();
        let back = read_report_json(json.as_slice()).unwrap();
        assert_eq!(back.meta, report.meta);
        assert_eq!(back.aggregates, report.aggregates);

        let mut csv = Vec::new();
        write_per_user_csv(&mut csv, &report).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "user,checkpoint,metric,N,value");
        assert_eq!(lines.len(), 1 + 4 * 2 * 3);
        assert!(lines[1].contains(",1,ndcg,2,"));
    }
}
