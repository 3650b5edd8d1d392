//! `time,status,group` CSV.

use std::io::{Read, Write};

use thiserror::Error;

use super::IpdRecord;

#[derive(Debug, Error)]
pub enum IpdCsvError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
}

/// Times use six decimals.
pub fn write_ipd_csv<W: Write>(records: &[IpdRecord], out: W) -> Result<(), IpdCsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "status", "group"])?;
    for r in records {
        w.write_record([format!("{:.6}", r.time), r.status.to_string(), r.group.clone()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ipd_csv<R: Read>(input: R) -> Result<Vec<IpdRecord>, IpdCsvError> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["time", "status", "group"] {
        return Err(IpdCsvError::BadRow {
            row: 0,
            reason: format!("expected header time,status,group, got {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |reason: String| IpdCsvError::BadRow { row, reason };
        let time: f64 = rec[0].trim().parse().map_err(|_| bad(format!("bad time {:?}", &rec[0])))?;
        if !time.is_finite() || time < 0.0 {
            return Err(bad(format!("time {time} out of range")));
        }
        let status = match rec[1].trim() {
            "0" => 0,
            "1" => 1,
            s => return Err(bad(format!("status must be 0 or 1, got {s:?}"))),
        };
        out.push(IpdRecord::new(time, status, rec[2].to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let recs = vec![
            IpdRecord::new(1.5, 1, "Treatment"),
            IpdRecord::new(3.25, 0, "Control, arm B"),
        ];
        let mut buf = Vec::new();
        write_ipd_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time,status,group\n1.500000,1,Treatment\n"));
        assert_eq!(read_ipd_csv(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn rejects_bad_status() {
        let err = read_ipd_csv("time,status,group\n1.0,2,a\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IpdCsvError::BadRow { row: 1, .. }));
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(read_ipd_csv("t,s,g\n".as_bytes()).is_err());
    }
}
