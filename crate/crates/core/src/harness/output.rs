use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::write_atomically;

/// Record of one run: what was asked for and which files came out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub timestamp: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub summary: serde_json::Value,
}

/// Writes `<dir>/<command>_<timestamp>_<name>` files atomically and keeps the
/// list for the manifest.
pub struct OutputSink {
    dir: PathBuf,
    prefix: String,
    written: Vec<String>,
}

impl OutputSink {
    pub fn new(dir: &Path, command: &str, timestamp: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            prefix: format!("{command}_{timestamp}"),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{}_{name}", self.prefix))
    }

    pub fn write<F>(&mut self, name: &str, body: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
    {
        let path = self.path(name);
        write_atomically(&path, body)?;
        self.written.push(path.display().to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Writes the manifest last so it lists every other output.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<PathBuf> {
        manifest.outputs = self.written.clone();
        self.write_json("manifest.json", &manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_files_and_lists_them_in_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = OutputSink::new(&dir.path().join("out"), "curves", "20260101-000000").unwrap();
        let roc = sink.write("roc.csv", |w| Ok(writeln!(w, "threshold,fpr,tpr")?)).unwrap();
        assert!(roc.ends_with("curves_20260101-000000_roc.csv"));
        let manifest = Manifest {
            command: "curves".into(),
            timestamp: "20260101-000000".into(),
            version: "0".into(),
            seed: 7,
            config: serde_json::json!({"a": 1}),
            inputs: vec![],
            outputs: vec![],
            summary: serde_json::Value::Null,
        };
        let path = sink.finish(manifest).unwrap();
        let back: Manifest = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(back.outputs, vec![roc.display().to_string()]);
        assert_eq!(back.seed, 7);
    }
}
