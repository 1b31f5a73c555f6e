use std::io::Write;

use serde::Serialize;

/// One row of the optional per-step trace CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub step: u64,
    pub episode: u64,
    pub action_kind: &'static str,
    pub operand: String,
    pub latency_class: &'static str,
    pub useless: bool,
    pub reward: f64,
}

pub struct TraceWriter {
    inner: csv::Writer<Box<dyn Write + Send>>,
}

impl TraceWriter {
    pub fn new<W: Write + Send + 'static>(w: W) -> Self {
        Self {
            inner: csv::Writer::from_writer(Box::new(w)),
        }
    }

    pub fn write(&mut self, record: &TraceRecord) -> csv::Result<()> {
        self.inner.serialize(record)
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

impl std::fmt::Debug for TraceWriter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TraceWriter")
    }
}
