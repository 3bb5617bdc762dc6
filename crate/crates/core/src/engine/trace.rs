//! Line-per-event debugging dump.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Accept,
    Reject,
    Arrive,
    Start,
    Complete,
    StreamDone,
    Switch,
    Preempt,
}

impl TraceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Accept => "accept",
            Self::Reject => "reject",
            Self::Arrive => "arrive",
            Self::Start => "start",
            Self::Complete => "complete",
            Self::StreamDone => "stream_done",
            Self::Switch => "switch",
            Self::Preempt => "preempt",
        }
    }
}

/// One traced event. `value` is the job's wait for `start` and
/// `complete`, the stream's net earning for `stream_done`, and the
/// destination class for `switch`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub kind: TraceKind,
    pub class: usize,
    pub stream: Option<u64>,
    pub server: Option<usize>,
    pub value: Option<f64>,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.time, self.kind.as_str(), self.class)?;
        match self.stream {
            Some(s) => write!(f, " {s}")?,
            None => write!(f, " -")?,
        }
        match self.server {
            Some(s) => write!(f, " {s}")?,
            None => write!(f, " -")?,
        }
        if let Some(v) = self.value {
            write!(f, " {v}")?;
        }
        Ok(())
    }
}

/// Renders records as `time kind class stream server [value]` lines.
pub fn render(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}
