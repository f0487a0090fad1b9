//! One-JSON-object-per-line event logs.

use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{Map, Value};

/// Shared event sink. Cloning shares the underlying writer.
#[derive(Clone, Default)]
pub struct EventLog {
    sink: Option<Arc<Mutex<Box<dyn Write + Send>>>>,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog")
            .field("enabled", &self.sink.is_some())
            .finish()
    }
}

impl EventLog {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn to_writer(w: impl Write + Send + 'static) -> Self {
        Self {
            sink: Some(Arc::new(Mutex::new(Box::new(w)))),
        }
    }

    pub fn stdout() -> Self {
        Self::to_writer(std::io::stdout())
    }

    /// Writes `{"ts_ms": .., "event": .., ..fields}`. `fields` should be a
    /// JSON object; anything else is stored under `"data"`.
    pub fn emit(&self, event: &str, fields: Value) {
        let Some(sink) = &self.sink else { return };
        let mut obj = Map::new();
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        obj.insert("ts_ms".into(), ts.into());
        obj.insert("event".into(), event.into());
        match fields {
            Value::Object(m) => obj.extend(m),
            Value::Null => {}
            other => {
                obj.insert("data".into(), other);
            }
        }
        let mut line = Value::Object(obj).to_string();
        line.push('\n');
        if let Ok(mut w) = sink.lock() {
            let _ = w.write_all(line.as_bytes());
            let _ = w.flush();
        }
    }
}
