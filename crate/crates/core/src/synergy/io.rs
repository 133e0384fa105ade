//! Basis persistence.
//!
//! ```text
//! # synergy basis rank=4 vaf=0.998731
//! muscle,w0,w1,w2,w3
//! HFL_r,0.0,0.21,1.0,0.0
//! ...
//! ```

use std::io::{BufRead, BufReader, Read, Write};

use ndarray::Array2;

use super::{SynergyBasis, SynergyError};

pub fn write_basis_csv<W: Write>(mut out: W, basis: &SynergyBasis) -> Result<(), SynergyError> {
    writeln!(out, "# synergy basis rank={} vaf={}", basis.rank(), basis.vaf)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["muscle".to_string()];
    header.extend((0..basis.rank()).map(|k| format!("w{k}")));
    w.write_record(&header)?;
    for (i, name) in basis.muscles.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(basis.w.row(i).iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_basis_csv<R: Read>(input: R) -> Result<SynergyBasis, SynergyError> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let comment = first
        .trim()
        .strip_prefix("# synergy basis")
        .ok_or_else(|| SynergyError::Format("missing `# synergy basis` header line".into()))?;
    let mut rank = None;
    let mut vaf = None;
    for field in comment.split_whitespace() {
        match field.split_once('=') {
            Some(("rank", v)) => rank = v.parse::<usize>().ok(),
            Some(("vaf", v)) => vaf = v.parse::<f64>().ok(),
            _ => {}
        }
    }
    let rank = rank.ok_or_else(|| SynergyError::Format("header lacks rank".into()))?;
    let vaf = vaf.ok_or_else(|| SynergyError::Format("header lacks vaf".into()))?;
    let mut csv = csv::Reader::from_reader(reader);
    let cols = csv.headers()?.len();
    if cols != rank + 1 {
        return Err(SynergyError::Format(format!("expected {} columns, found {cols}", rank + 1)));
    }
    let mut muscles = Vec::new();
    let mut values = Vec::new();
    for record in csv.records() {
        let record = record?;
        muscles.push(record[0].to_string());
        for k in 1..=rank {
            let x: f64 = record[k]
                .parse()
                .map_err(|_| SynergyError::Format(format!("bad weight `{}`", &record[k])))?;
            values.push(x);
        }
    }
    let w = Array2::from_shape_vec((muscles.len(), rank), values)
        .map_err(|e| SynergyError::Format(e.to_string()))?;
    let basis = SynergyBasis { muscles, w, vaf };
    basis.validate()?;
    Ok(basis)
}
