//! Observable record of a duplex run: one event per JSON line.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "HARNESS")]
    Harness,
    #[serde(rename = "MCU1")]
    Mcu1,
    #[serde(rename = "MCU2")]
    Mcu2,
    #[serde(rename = "BOARD")]
    Board,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Harness => "HARNESS",
            Source::Mcu1 => "MCU1",
            Source::Mcu2 => "MCU2",
            Source::Board => "BOARD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    CycleOk,
    LocalDivergence,
    CrossDivergence,
    HeartbeatTimeout,
    SelftestFail,
    ReadbackFail,
    RebootStart,
    RebootDone,
    Resync,
    Halt,
    OutputChange,
    FaultInjected,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::CycleOk => "cycle_ok",
            EventKind::LocalDivergence => "local_divergence",
            EventKind::CrossDivergence => "cross_divergence",
            EventKind::HeartbeatTimeout => "heartbeat_timeout",
            EventKind::SelftestFail => "selftest_fail",
            EventKind::ReadbackFail => "readback_fail",
            EventKind::RebootStart => "reboot_start",
            EventKind::RebootDone => "reboot_done",
            EventKind::Resync => "resync",
            EventKind::Halt => "halt",
            EventKind::OutputChange => "output_change",
            EventKind::FaultInjected => "fault_injected",
        }
    }

    /// Kinds that never occur in a fault-free run.
    pub fn is_anomaly(self) -> bool {
        !matches!(
            self,
            EventKind::CycleOk | EventKind::OutputChange | EventKind::FaultInjected
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub source: Source,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub details: Map<String, Value>,
}

impl TraceEvent {
    pub fn new(cycle: u64, source: Source, kind: EventKind) -> Self {
        TraceEvent {
            cycle,
            source,
            kind,
            details: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.details.insert(key.to_string(), value.into());
        self
    }

    pub fn detail(&self, key: &str) -> Option<&Value> {
        self.details.get(key)
    }
}

/// Stable order within a cycle: harness actions, then MCU1, MCU2, board.
pub fn sort_events(events: &mut [TraceEvent]) {
    events.sort_by_key(|e| (e.cycle, e.source));
}
