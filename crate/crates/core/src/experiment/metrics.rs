use std::io;

use serde::{Deserialize, Serialize};

pub const METRICS_HEADER: &str = "episode,mean_score,collisions,oob,proximity,goals,ms_per_action";

/// One evaluated or training episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    /// Total score of all agents divided by the number of agents.
    pub mean_score: f64,
    pub collisions: u32,
    pub oob: u32,
    /// Total proximity penalty magnitude.
    pub proximity: f64,
    pub goals: u32,
    pub ms_per_action: f64,
}

/// CSV writer with the fixed metrics header. Rows are flushed as they are
/// written so partial runs leave usable files.
pub struct MetricsWriter<W: io::Write> {
    inner: csv::Writer<W>,
    rows: usize,
}

impl<W: io::Write> MetricsWriter<W> {
    pub fn new(out: W) -> Self {
        Self { inner: csv::WriterBuilder::new().has_headers(true).from_writer(out), rows: 0 }
    }

    pub fn write(&mut self, row: &MetricsRow) -> io::Result<()> {
        self.inner.serialize(row).map_err(io::Error::other)?;
        self.rows += 1;
        self.inner.flush()
    }

    /// Writes the header even when no row was written.
    pub fn finish(mut self) -> io::Result<W> {
        if self.rows == 0 {
            self.inner.write_record(METRICS_HEADER.split(',')).map_err(io::Error::other)?;
        }
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| io::Error::other(e.to_string()))
    }
}

pub fn read_metrics(text: &str) -> Result<Vec<MetricsRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: usize) -> MetricsRow {
        MetricsRow { episode: i, mean_score: 0.25 * i as f64, collisions: 2, oob: 1, proximity: 0.1, goals: 3, ms_per_action: 0.0 }
    }

    #[test]
    fn header_is_fixed_and_rows_round_trip() {
        let mut w = MetricsWriter::new(Vec::new());
        w.write(&row(0)).unwrap();
        w.write(&row(1)).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
        assert_eq!(read_metrics(&text).unwrap(), vec![row(0), row(1)]);
    }

    #[test]
    fn empty_file_still_has_header() {
        let text = String::from_utf8(MetricsWriter::new(Vec::new()).finish().unwrap()).unwrap();
        assert_eq!(text.trim_end(), METRICS_HEADER);
    }
}
