//! Fault plans as JSON: `[{"t_ms": 20000, "event": "kill_worker", "node": 1}]`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use theta_core::cluster::{AppId, FaultEvent, FaultPlan};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    KillWorker,
    KillMaster,
    KillDriver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultStep {
    pub t_ms: u64,
    pub event: FaultKind,
    /// Worker or master index; the application index for driver kills.
    #[serde(default)]
    pub node: u32,
}

impl FaultStep {
    pub fn to_event(self) -> FaultEvent {
        match self.event {
            FaultKind::KillWorker => FaultEvent::KillWorker(self.node),
            FaultKind::KillMaster => FaultEvent::KillMaster(self.node),
            FaultKind::KillDriver => FaultEvent::KillDriver(AppId(self.node)),
        }
    }
}

pub fn parse_plan(text: &str) -> std::result::Result<Vec<FaultStep>, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn read_plan(path: &Path) -> Result<Vec<FaultStep>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_plan(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_fault_plan(steps: &[FaultStep]) -> Result<FaultPlan> {
    Ok(FaultPlan::new(
        steps.iter().map(|s| (s.t_ms, s.to_event())).collect(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_kinds() {
        let plan = parse_plan(
            r#"[{"t_ms": 1000, "event": "kill_worker", "node": 1},
                {"t_ms": 2000, "event": "kill_master", "node": 0},
                {"t_ms": 3000, "event": "kill_driver"}]"#,
        )
        .unwrap();
        let events: Vec<FaultEvent> = plan.iter().map(|s| s.to_event()).collect();
        assert_eq!(
            events,
            vec![
                FaultEvent::KillWorker(1),
                FaultEvent::KillMaster(0),
                FaultEvent::KillDriver(AppId(0))
            ]
        );
        assert!(to_fault_plan(&plan).is_ok());
    }

    #[test]
    fn rejects_unknown_event_and_disorder() {
        assert!(parse_plan(r#"[{"t_ms": 1, "event": "reboot", "node": 0}]"#).is_err());
        let plan = parse_plan(
            r#"[{"t_ms": 5, "event": "kill_worker"}, {"t_ms": 1, "event": "kill_master"}]"#,
        )
        .unwrap();
        assert!(to_fault_plan(&plan).is_err());
    }
}
