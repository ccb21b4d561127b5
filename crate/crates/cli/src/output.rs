//! Output directory bookkeeping and the per-directory manifest.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use phaselab::field::PhaseSpaceField;
use phaselab::hilbert::DensityOperator;
use phaselab::io;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Format, OutputConfig, Tolerances};
use crate::error::Result;

pub const MANIFEST: &str = "manifest.json";

/// Files written by one command, relative to the output directory.
pub struct Outputs {
    dir: PathBuf,
    formats: Vec<Format>,
    files: Vec<String>,
    pub warnings: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Outputs {
    pub fn new(dir: &Path, cfg: &OutputConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), formats: cfg.formats.clone(), files: Vec::new(), warnings: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn claim(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        if !self.files.iter().any(|f| f == rel) {
            self.files.push(rel.to_string());
        }
        Ok(path)
    }

    pub fn text(&mut self, rel: &str, text: &str) -> Result<()> {
        let path = self.claim(rel)?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.text(rel, &text)
    }

    /// Runs `write` on a buffered file when CSV output is enabled.
    pub fn csv(
        &mut self,
        rel: &str,
        write: impl FnOnce(BufWriter<fs::File>) -> phaselab::error::Result<()>,
    ) -> Result<()> {
        if !self.wants(Format::Csv) {
            return Ok(());
        }
        let path = self.claim(rel)?;
        write(BufWriter::new(fs::File::create(path)?))?;
        Ok(())
    }

    /// `stem.{bin,json}`, `stem.csv` and `stem.gp` as the formats allow.
    pub fn field(&mut self, stem: &str, field: &PhaseSpaceField, t: Option<f64>, title: &str) -> Result<()> {
        if self.wants(Format::Binary) {
            let path = self.claim(&format!("{stem}.bin"))?;
            self.claim(&format!("{stem}.json"))?;
            io::write_field_snapshot(field, t, &path)?;
        }
        let csv = format!("{stem}.csv");
        self.csv(&csv, |w| io::write_field_csv(field, w))?;
        if self.wants(Format::Gnuplot) {
            if field.spec().d() != 1 {
                self.warnings.push(format!("{stem}: gnuplot heatmaps need a single mode; script skipped"));
                return Ok(());
            }
            let name = |p: &str| Path::new(p).file_name().expect("file name").to_string_lossy().into_owned();
            let script = io::gnuplot_heatmap(&name(&csv), &name(&format!("{stem}.png")), title, field)?;
            self.text(&format!("{stem}.gp"), &script)?;
            if !self.wants(Format::Csv) {
                self.warnings.push(format!("{stem}.gp refers to {csv}, which is not written without the csv format"));
            }
        }
        Ok(())
    }

    pub fn density(&mut self, stem: &str, state: &DensityOperator, t: Option<f64>) -> Result<()> {
        if self.wants(Format::Binary) {
            let path = self.claim(&format!("{stem}.bin"))?;
            self.claim(&format!("{stem}.json"))?;
            io::write_density_snapshot(state, t, &path)?;
        }
        Ok(())
    }

    /// Hashes every recorded file and writes `manifest.json` next to them.
    pub fn finish(mut self, info: ManifestInfo<'_>) -> Result<Manifest> {
        self.files.sort();
        let files = self
            .files
            .iter()
            .map(|rel| Ok(FileEntry { path: rel.clone(), sha256: sha256_hex(&fs::read(self.dir.join(rel))?) }))
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            tool: "phaselab",
            version: env!("CARGO_PKG_VERSION"),
            command: info.command.to_string(),
            config_sha256: sha256_hex(info.config_text.as_bytes()),
            seed: info.seed,
            tolerances: info.tolerances.clone(),
            status: if info.violations.is_empty() { "pass" } else { "tolerance_violation" },
            violations: info.violations.to_vec(),
            warnings: info.warnings.to_vec(),
            files,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(manifest)
    }
}

pub struct ManifestInfo<'a> {
    pub command: &'a str,
    pub config_text: &'a str,
    pub seed: u64,
    pub tolerances: &'a Tolerances,
    pub violations: &'a [String],
    pub warnings: &'a [String],
}

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub status: &'static str,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
    pub files: Vec<FileEntry>,
}
