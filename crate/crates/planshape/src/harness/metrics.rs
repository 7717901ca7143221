//! `metrics.csv`: one row per evaluation checkpoint.
//!
//! Columns, schema version 1:
//! `step, mean_eval_return, min, max, actor_loss, critic_or_td_loss,
//! epsilon, alignment_rate`. Optional columns are empty when the quantity
//! does not apply (e.g. `epsilon` for MAPPO) or nothing has been measured yet.

use std::path::Path;

use planshape_core::marl::MetricsRow;

pub const SCHEMA_VERSION: u32 = 1;
pub const HEADER: [&str; 8] = [
    "step",
    "mean_eval_return",
    "min",
    "max",
    "actor_loss",
    "critic_or_td_loss",
    "epsilon",
    "alignment_rate",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.mean_eval_return.to_string(),
            r.min.to_string(),
            r.max.to_string(),
            opt(r.actor_loss),
            opt(r.critic_or_td_loss),
            opt(r.epsilon),
            opt(r.alignment_rate),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct MetricsError {
    pub path: String,
    pub message: String,
}

pub fn read(path: &Path) -> Result<Vec<MetricsRow>, MetricsError> {
    let err = |message: String| MetricsError { path: path.display().to_string(), message };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let header = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    if header.iter().ne(HEADER) {
        return Err(err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let num = |k: usize| -> Result<f64, MetricsError> {
            rec[k].parse().map_err(|_| err(format!("column {} is not a number: {:?}", HEADER[k], &rec[k])))
        };
        let maybe = |k: usize| -> Result<Option<f64>, MetricsError> {
            if rec[k].is_empty() { Ok(None) } else { num(k).map(Some) }
        };
        rows.push(MetricsRow {
            step: rec[0].parse().map_err(|_| err(format!("bad step {:?}", &rec[0])))?,
            mean_eval_return: num(1)?,
            min: num(2)?,
            max: num(3)?,
            actor_loss: maybe(4)?,
            critic_or_td_loss: maybe(5)?,
            epsilon: maybe(6)?,
            alignment_rate: maybe(7)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let rows = vec![
            MetricsRow {
                step: 10,
                mean_eval_return: 0.25,
                min: 0.0,
                max: 1.0,
                actor_loss: Some(-0.125),
                critic_or_td_loss: Some(0.5),
                epsilon: None,
                alignment_rate: Some(0.75),
            },
            MetricsRow {
                step: 20,
                mean_eval_return: -3.5,
                min: -4.0,
                max: -3.0,
                actor_loss: None,
                critic_or_td_loss: None,
                epsilon: Some(0.05),
                alignment_rate: None,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.csv");
        std::fs::write(&p, to_csv(&rows)).unwrap();
        assert_eq!(read(&p).unwrap(), rows);
        assert!(to_csv(&rows).starts_with("step,mean_eval_return,min,max,actor_loss,"));
    }
}
