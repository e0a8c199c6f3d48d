//! Line-delimited trial ledger: a CSV header, one record per trial in
//! `trial_id` order, and an optional trailing `#` truncation marker.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::stats::TrialRecord;

pub const HEADER: [&str; 8] = ["trial_id", "x", "y", "a", "b", "a_macro", "b_macro", "seed"];

pub fn write_ledger<W: Write>(mut writer: W, records: &[TrialRecord], truncation: Option<&Error>) -> Result<()> {
    {
        let mut w = csv::Writer::from_writer(&mut writer);
        for r in records {
            w.serialize(r).map_err(|e| Error::Parse(format!("ledger: {e}")))?;
        }
        if records.is_empty() {
            w.write_record(HEADER)
                .map_err(|e| Error::Parse(format!("ledger: {e}")))?;
        }
        w.flush().map_err(|e| Error::io("<ledger>", e))?;
    }
    if let Some(err) = truncation {
        writeln!(writer, "# truncated: {}", err.to_string().replace('\n', " "))
            .map_err(|e| Error::io("<ledger>", e))?;
    }
    Ok(())
}

/// Reads records back, skipping `#` comment lines.
pub fn read_ledger<R: Read>(reader: R) -> Result<Vec<TrialRecord>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Parse(format!("ledger: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_order_and_marker() {
        let r = TrialRecord {
            trial_id: 3,
            x: 1,
            y: 0,
            a: 1,
            b: 1,
            a_macro: 1,
            b_macro: 0,
            seed: 99,
        };
        let err = Error::Trial {
            trial_id: 4,
            stage: "alice_relay",
            source: Box::new(Error::Inconclusive("pointer not settled".into())),
        };
        let mut buf = Vec::new();
        write_ledger(&mut buf, &[r], Some(&err)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "trial_id,x,y,a,b,a_macro,b_macro,seed\n3,1,0,1,1,1,0,99\n\
             # truncated: trial 4 failed in stage alice_relay: inconclusive readout: pointer not settled\n"
        );
        assert_eq!(read_ledger(text.as_bytes()).unwrap(), vec![r]);
    }

    #[test]
    fn empty_ledger_keeps_header() {
        let mut buf = Vec::new();
        write_ledger(&mut buf, &[], None).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "trial_id,x,y,a,b,a_macro,b_macro,seed\n"
        );
    }
}
