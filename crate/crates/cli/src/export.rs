use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nbbm_core::grid::GridDensity;
use serde::Serialize;

use crate::spec::ExperimentSpec;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header lines carried by every output file.
pub fn header(spec: &ExperimentSpec) -> Vec<String> {
    vec![format!("nbbm {VERSION}"), format!("spec {}", spec.to_json())]
}

/// Output directory of one experiment.
pub struct OutDir {
    root: PathBuf,
    header: Vec<String>,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path, spec: &ExperimentSpec) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf(), header: header(spec), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
    }

    /// CSV with the header, then `columns`, then `rows`.
    pub fn csv(&mut self, name: &str, columns: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
        let header = self.header.clone();
        let mut w = self.open(name)?;
        for line in &header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{columns}")?;
        for r in rows {
            writeln!(w, "{r}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn density(&mut self, name: &str, f: &GridDensity) -> Result<()> {
        let header = self.header.clone();
        let mut w = self.open(name)?;
        f.write_csv(&mut w, &header)?;
        w.flush()?;
        Ok(())
    }

    pub fn with_writer(&mut self, name: &str, body: impl FnOnce(&mut dyn Write, &[String]) -> Result<()>) -> Result<()> {
        let header = self.header.clone();
        let mut w = self.open(name)?;
        body(&mut w, &header)?;
        w.flush()?;
        Ok(())
    }

    /// `report.txt`: header lines, then `key = value` lines.
    pub fn report(&mut self, entries: &[(String, String)]) -> Result<()> {
        let rows: Vec<String> = entries.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        let header = self.header.clone();
        let mut w = self.open("report.txt")?;
        for line in &header {
            writeln!(w, "# {line}")?;
        }
        for r in rows {
            writeln!(w, "{r}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// `manifest.json` listing the configuration, the files written and `extra`.
    pub fn finish<T: Serialize>(mut self, spec: &ExperimentSpec, extra: &T) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Manifest<'a, T> {
            version: &'a str,
            kind: Option<&'a str>,
            spec: &'a ExperimentSpec,
            files: &'a [String],
            results: &'a T,
        }
        self.files.sort();
        let m = Manifest { version: VERSION, kind: spec.kind.map(|k| k.name()), spec, files: &self.files, results: extra };
        let path = self.root.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&m)?)?;
        Ok(self.root)
    }
}
