//! CSV export of state traces.

use std::io::Write;

use super::{ContactForces, SimState, NDOF};

const COORD_NAMES: [&str; NDOF] =
    ["x", "y", "trunk", "hip_l", "knee_l", "ankle_l", "hip_r", "knee_r", "ankle_r"];

pub fn header() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend(COORD_NAMES.iter().map(|n| format!("q_{n}")));
    cols.extend(COORD_NAMES.iter().map(|n| format!("qd_{n}")));
    cols.extend(["grf_left_n", "grf_left_t", "grf_right_n", "grf_right_t"].map(String::from));
    cols
}

/// Writes one row per recorded state.
pub struct StateTraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> StateTraceWriter<W> {
    pub fn new(writer: W) -> csv::Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(header())?;
        Ok(StateTraceWriter { inner })
    }

    pub fn record(&mut self, state: &SimState, contact: &ContactForces) -> csv::Result<()> {
        let mut row = Vec::with_capacity(1 + 2 * NDOF + 4);
        row.push(state.t);
        row.extend_from_slice(&state.q);
        row.extend_from_slice(&state.qd);
        for foot in &contact.feet {
            row.push(foot.normal);
            row.push(foot.tangential);
        }
        self.inner.write_record(row.iter().map(|v| v.to_string()))
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}
