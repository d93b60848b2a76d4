use std::fmt::Display;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// A block of `key=value` lines headed by the command name and config hash.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    command: String,
    hash: String,
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str, hash: &str) -> Self {
        Report {
            command: command.to_string(),
            hash: hash.to_string(),
            lines: Vec::new(),
        }
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl Display) {
        self.lines.push((key.into(), value.to_string()));
    }

    /// Records a real number with six decimals, so reports diff cleanly.
    pub fn num(&mut self, key: impl Into<String>, value: f64) {
        self.put(key, format!("{value:.6}"));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = format!("[{}] config={}\n", self.command, self.hash);
        for (k, v) in &self.lines {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Appends the block to `path` and prints it.
    pub fn emit(&self, path: &Path) -> CliResult<()> {
        let text = self.render();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_error(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| io_error(path, e))?;
        print!("{text}");
        Ok(())
    }
}

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

/// Parses rendered blocks back into `(command, pairs)`.
pub fn parse_blocks(text: &str) -> Vec<(String, Vec<(String, String)>)> {
    let mut out: Vec<(String, Vec<(String, String)>)> = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('[') {
            let cmd = rest.split(']').next().unwrap_or_default().to_string();
            out.push((cmd, Vec::new()));
        } else if let (Some((k, v)), Some(block)) = (line.split_once('='), out.last_mut()) {
            block.1.push((k.to_string(), v.to_string()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_parse() {
        let mut r = Report::new("eval", "abc");
        r.num("f05", 0.5);
        r.put("lines", 3);
        let text = r.render();
        assert_eq!(text, "[eval] config=abc\nf05=0.500000\nlines=3\n");
        let blocks = parse_blocks(&format!("{text}{text}"));
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[1].1[0], ("f05".to_string(), "0.500000".to_string()));
        assert_eq!(r.get("lines"), Some("3"));
    }

    #[test]
    fn emit_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/report.txt");
        let r = Report::new("gen", "h");
        r.emit(&path).unwrap();
        r.emit(&path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "[gen] config=h\n[gen] config=h\n"
        );
    }
}
