//! Threshold tables: one CSV row per `ε`.

use std::io::{Read, Write};

use super::EpsilonThresholds;
use crate::error::{LabError, Result};

fn csv_error(e: csv::Error) -> LabError {
    LabError::Parse { what: "threshold table", detail: e.to_string() }
}

pub fn write_threshold_table<W: Write>(rows: &[EpsilonThresholds], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_threshold_table<R: Read>(input: R) -> Result<Vec<EpsilonThresholds>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip() {
        let row = EpsilonThresholds {
            epsilon: 0.2,
            delta_eps: 0.3138105960900001,
            h_eps: 0.001,
            mc_samples: 10_000,
            dt: 0.001,
            delta_radius: 0.0123,
            h_radius: 0.01,
            delta_bottomed_out: false,
            h_bottomed_out: true,
            bridge: false,
        };
        let mut buf = Vec::new();
        write_threshold_table(&[row.clone(), row.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("epsilon,delta_eps,h_eps"));
        assert_eq!(read_threshold_table(buf.as_slice()).unwrap(), vec![row.clone(), row]);
        assert!(read_threshold_table("epsilon\nfoo\n".as_bytes()).is_err());
    }
}
