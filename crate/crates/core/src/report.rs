//! Per-stage run reports, written both as human-readable text and as a
//! flat `key=value` file for CI assertions.

use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

/// Ordered key/value report of one pipeline stage.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub stage: String,
    entries: Vec<(String, String)>,
    started: Instant,
}

impl RunReport {
    pub fn new(stage: &str) -> Self {
        RunReport {
            stage: stage.to_string(),
            entries: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Appends wall time and peak RSS, then writes `<stage>.report.txt`
    /// and `<stage>.report.kv` into `dir`.
    pub fn finish(mut self, dir: &Path) -> io::Result<()> {
        self.set("wall_ms", self.started.elapsed().as_millis());
        if let Some(rss) = peak_rss_bytes() {
            self.set("peak_rss_bytes", rss);
        }
        let txt = dir.join(format!("{}.report.txt", self.stage));
        let mut w = std::fs::File::create(txt)?;
        writeln!(w, "stage: {}", self.stage)?;
        for (k, v) in &self.entries {
            writeln!(w, "  {k}: {v}")?;
        }
        let kv = dir.join(format!("{}.report.kv", self.stage));
        let mut w = std::fs::File::create(kv)?;
        writeln!(w, "stage={}", self.stage)?;
        for (k, v) in &self.entries {
            writeln!(w, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Peak resident set size of this process, from /proc on Linux.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: u64 = rest.trim().trim_end_matches(" kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_files_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = RunReport::new("ingest");
        r.set("rows_in", 100);
        r.set("rows_out", 90);
        r.finish(dir.path()).unwrap();
        let kv = std::fs::read_to_string(dir.path().join("ingest.report.kv")).unwrap();
        assert!(kv.contains("stage=ingest"));
        assert!(kv.contains("rows_in=100"));
        assert!(kv.contains("wall_ms="));
        let txt = std::fs::read_to_string(dir.path().join("ingest.report.txt")).unwrap();
        assert!(txt.contains("rows_out: 90"));
    }

    #[test]
    fn peak_rss_readable_on_linux() {
        if cfg!(target_os = "linux") {
            assert!(peak_rss_bytes().unwrap() > 0);
        }
    }
}
