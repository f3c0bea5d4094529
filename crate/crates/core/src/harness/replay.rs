use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use super::HarnessError;
use crate::session::{replay as fold, EventRecord, RoomState};

/// Rebuilds a room from its event log.
pub fn replay(log: &[EventRecord]) -> Result<RoomState, HarnessError> {
    fold(log).map_err(HarnessError::from)
}

#[derive(Deserialize)]
struct LoggedEvent {
    room_id: String,
    #[serde(flatten)]
    record: EventRecord,
}

/// Reads the server's newline-delimited event-log mirror, grouped by room.
pub fn read_event_log(path: &Path) -> Result<BTreeMap<String, Vec<EventRecord>>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let mut rooms: BTreeMap<String, Vec<EventRecord>> = BTreeMap::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LoggedEvent = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Io(format!("{}:{}: {e}", path.display(), n + 1)))?;
        rooms.entry(entry.room_id).or_default().push(entry.record);
    }
    Ok(rooms)
}

/// Replays every room found in an event-log file.
pub fn replay_file(path: &Path) -> Result<BTreeMap<String, RoomState>, HarnessError> {
    read_event_log(path)?.into_iter().map(|(room, log)| Ok((room, replay(&log)?))).collect()
}
