//! Line-delimited JSON events on standard error.

use std::io::Write;

use log::{Level, LevelFilter, Log, Metadata, Record};

struct JsonLogger {
    level: LevelFilter,
}

impl Log for JsonLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= self.level
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let event = serde_json::json!({
            "level": level_name(record.level()),
            "target": record.target(),
            "message": record.args().to_string(),
        });
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "{event}");
    }

    fn flush(&self) {
        let _ = std::io::stderr().flush();
    }
}

fn level_name(l: Level) -> &'static str {
    match l {
        Level::Error => "error",
        Level::Warn => "warn",
        Level::Info => "info",
        Level::Debug => "debug",
        Level::Trace => "trace",
    }
}

pub fn init(level: LevelFilter) {
    if log::set_logger(Box::leak(Box::new(JsonLogger { level }))).is_ok() {
        log::set_max_level(level);
    }
}
