//! CSV report rows and their PASS/FAIL status.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Warn,
    Info,
}

impl Status {
    pub fn check(ok: bool) -> Status {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Warn => "WARN",
            Status::Info => "INFO",
        })
    }
}

/// One CSV row. Column meanings are listed in `docs/csv.md`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub mesh: String,
    pub level: usize,
    pub p: usize,
    pub variant: String,
    pub field: String,
    pub nelem: usize,
    pub h: f64,
    pub metric: String,
    /// `sum`, `max`, `value` or `trend`.
    pub aggregate: String,
    pub value: f64,
    pub status: Status,
    pub detail: String,
}

/// Identifies the run a row belongs to.
#[derive(Clone, Debug, Default)]
pub struct Context {
    pub experiment: String,
    pub mesh: String,
    pub level: usize,
    pub p: usize,
    pub variant: String,
    pub field: String,
    pub nelem: usize,
    pub h: f64,
}

impl Context {
    pub fn row(&self, metric: &str, aggregate: &str, value: f64, status: Status, detail: impl Into<String>) -> Row {
        Row {
            experiment: self.experiment.clone(),
            mesh: self.mesh.clone(),
            level: self.level,
            p: self.p,
            variant: self.variant.clone(),
            field: self.field.clone(),
            nelem: self.nelem,
            h: self.h,
            metric: metric.into(),
            aggregate: aggregate.into(),
            value,
            status,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub rows: Vec<Row>,
}

impl Report {
    pub fn push(&mut self, r: Row) {
        self.rows.push(r);
    }

    pub fn extend(&mut self, o: Report) {
        self.rows.extend(o.rows);
    }

    pub fn failed(&self) -> bool {
        self.rows.iter().any(|r| r.status == Status::Fail)
    }

    pub fn find(&self, metric: &str) -> impl Iterator<Item = &Row> {
        let m = metric.to_string();
        self.rows.iter().filter(move |r| r.metric == m)
    }

    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv(r: impl std::io::Read) -> Result<Report> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd.deserialize().collect::<std::result::Result<Vec<Row>, _>>()?;
        Ok(Report { rows })
    }

    pub fn load(path: &Path) -> Result<Report> {
        Report::read_csv(std::fs::File::open(path)?)
    }

    /// Human-readable table, one line per row.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            s.push_str(&format!(
                "{:<4} {:<12} L{} p={} {:<28} {:<6} {:>13.6e}  {}\n",
                r.status.to_string(),
                r.experiment,
                r.level,
                r.p,
                r.metric,
                r.aggregate,
                r.value,
                r.detail
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let ctx = Context { experiment: "commute".into(), mesh: "cube-kuhn, bc=D".into(), h: 0.1 + 0.2, ..Context::default() };
        let mut rep = Report::default();
        for (i, v) in [1.0 / 3.0, 1e-300, 6.02214076e23, f64::INFINITY, 0.0].into_iter().enumerate() {
            rep.push(ctx.row("m", "value", v, if i == 1 { Status::Fail } else { Status::Pass }, "patch of vertex 3"));
        }
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let back = Report::read_csv(&buf[..]).unwrap();
        assert_eq!(back.rows, rep.rows);
        assert!(back.failed());
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("experiment,mesh,level,p,variant,field,nelem,h,metric,aggregate,value,status,detail\n"));
    }
}
