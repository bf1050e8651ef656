use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::surrogate::TrainReport;

/// Column header of the records CSV. Preceded in files by a
/// `# schema: records/v1` comment line.
pub const RECORDS_HEADER: &str = "step,k,nov,eta_global,itero,adam_epochs,lbfgs_iters,wall_ms";
const SCHEMA_LINE: &str = "# schema: records/v1";

/// One pass through solve/estimate (and size/generate unless it was the
/// last).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub nov: usize,
    pub eta: f64,
    /// Exponent used to build the next mesh; 0 on the final iteration.
    pub itero: u32,
    pub wall_ms: u64,
    /// `‖∇u − ∇u_h‖` when the exact gradient is known.
    pub grad_error: Option<f64>,
}

/// Trace of one time step (step 0 is the initial projection loop).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptRecord {
    pub step: usize,
    pub time: f64,
    pub iterations: Vec<IterationRecord>,
    /// Training that produced the surrogate used by this step.
    pub train: Option<TrainReport>,
    /// False when the iteration cap was reached with the estimator still
    /// above tolerance.
    pub converged: bool,
}

impl AdaptRecord {
    pub fn last(&self) -> &IterationRecord {
        self.iterations.last().expect("a record holds at least one iteration")
    }

    pub fn final_nov(&self) -> usize {
        self.last().nov
    }

    pub fn optimizer_iterations(&self) -> usize {
        self.train.map_or(0, |t| t.total_iterations())
    }
}

/// Receives records as the driver produces them.
pub trait RecordSink {
    fn record(&mut self, rec: &AdaptRecord) -> Result<()>;
}

impl RecordSink for Vec<AdaptRecord> {
    fn record(&mut self, rec: &AdaptRecord) -> Result<()> {
        self.push(rec.clone());
        Ok(())
    }
}

/// Streams records as CSV rows, writing the header first.
pub struct CsvSink<W: Write> {
    out: W,
    header_written: bool,
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            header_written: false,
        }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> RecordSink for CsvSink<W> {
    fn record(&mut self, rec: &AdaptRecord) -> Result<()> {
        if !self.header_written {
            writeln!(self.out, "{SCHEMA_LINE}\n{RECORDS_HEADER}")?;
            self.header_written = true;
        }
        write_rows(&mut self.out, rec)?;
        self.out.flush()?;
        Ok(())
    }
}

fn write_rows(out: &mut impl Write, rec: &AdaptRecord) -> Result<()> {
    let (adam, lbfgs) = rec.train.map_or((0, 0), |t| (t.adam_epochs, t.lbfgs_iters));
    for it in &rec.iterations {
        writeln!(
            out,
            "{},{},{},{:e},{},{},{},{}",
            rec.step, it.k, it.nov, it.eta, it.itero, adam, lbfgs, it.wall_ms
        )?;
    }
    Ok(())
}

/// Writes all records with the schema line and header.
pub fn write_records(out: &mut impl Write, records: &[AdaptRecord]) -> Result<()> {
    writeln!(out, "{SCHEMA_LINE}\n{RECORDS_HEADER}")?;
    for r in records {
        write_rows(out, r)?;
    }
    Ok(())
}

/// Parses a records CSV, grouping rows by step. Comment lines starting with
/// `#` are skipped. Training counts are taken from each step's first row;
/// the step time and exact errors are not part of the schema and come back
/// as `NaN` / `None`.
pub fn read_records(input: impl BufRead) -> Result<Vec<AdaptRecord>> {
    let mut out: Vec<AdaptRecord> = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != RECORDS_HEADER {
                return Err(Error::Records(format!("unexpected header `{line}`")));
            }
            header_seen = true;
            continue;
        }
        let bad = |what: &str| Error::Records(format!("line {}: bad {what}", lineno + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad("column count"));
        }
        let int = |i: usize, what: &str| f[i].trim().parse::<u64>().map_err(|_| bad(what));
        let step = int(0, "step")? as usize;
        let it = IterationRecord {
            k: int(1, "k")? as usize,
            nov: int(2, "nov")? as usize,
            eta: f[3].trim().parse().map_err(|_| bad("eta_global"))?,
            itero: int(4, "itero")? as u32,
            wall_ms: int(7, "wall_ms")?,
            grad_error: None,
        };
        let train = TrainReport {
            adam_epochs: int(5, "adam_epochs")? as usize,
            lbfgs_iters: int(6, "lbfgs_iters")? as usize,
            initial_loss: f64::NAN,
            final_loss: f64::NAN,
            wall_ms: 0,
        };
        match out.last_mut() {
            Some(r) if r.step == step => r.iterations.push(it),
            _ => out.push(AdaptRecord {
                step,
                time: f64::NAN,
                iterations: vec![it],
                train: (train.adam_epochs + train.lbfgs_iters > 0).then_some(train),
                converged: true,
            }),
        }
    }
    if !header_seen {
        return Err(Error::Records("missing header".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<AdaptRecord> {
        let it = |k, nov, eta| IterationRecord {
            k,
            nov,
            eta,
            itero: 1,
            wall_ms: 3,
            grad_error: None,
        };
        vec![
            AdaptRecord {
                step: 0,
                time: 0.0,
                iterations: vec![it(1, 81, 0.5), it(2, 160, 0.25)],
                train: None,
                converged: true,
            },
            AdaptRecord {
                step: 1,
                time: 0.1,
                iterations: vec![it(1, 81, 0.4)],
                train: Some(TrainReport {
                    adam_epochs: 120,
                    lbfgs_iters: 7,
                    initial_loss: 1.0,
                    final_loss: 1e-6,
                    wall_ms: 5,
                }),
                converged: true,
            },
        ]
    }

    #[test]
    fn csv_round_trip() {
        let recs = sample();
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema: records/v1\nstep,k,nov,eta_global,itero,adam_epochs,lbfgs_iters,wall_ms\n"));
        let back = read_records(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].iterations, recs[0].iterations);
        assert_eq!(back[1].train.unwrap().adam_epochs, 120);
        assert_eq!(back[1].optimizer_iterations(), 127);

        let mut sink = CsvSink::new(Vec::new());
        for r in &recs {
            sink.record(r).unwrap();
        }
        assert_eq!(sink.into_inner(), buf);
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(read_records(&b"a,b\n"[..]).is_err());
        assert!(read_records(&b""[..]).is_err());
        let short = format!("{RECORDS_HEADER}\n0,1,2\n");
        assert!(read_records(short.as_bytes()).is_err());
    }
}
