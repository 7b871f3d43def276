//! Output files: CSV data, JSON summaries, and the run manifest.
//!
//! A run is fully reconstructible from its manifest, and reruns with an
//! identical manifest produce byte-identical outputs (fixed seed, fixed
//! reduction order, deterministic formatting).

use crate::config::Config;
use anyhow::{Context, Result};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(path: &Path) -> Result<OutDir> {
        std::fs::create_dir_all(path)
            .with_context(|| format!("creating output directory {}", path.display()))?;
        Ok(OutDir {
            root: path.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn writer(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        let file =
            File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    /// Every run stamps its full parameter set and code version.
    pub fn write_manifest(&self, command: &str, config: &Config) -> Result<()> {
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
        });
        self.write_json("manifest.json", &manifest)
    }

    pub fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<()> {
        let mut w = self.writer(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    /// `(n, m, re, im)` rows of a complex matrix.
    pub fn write_complex_matrix(&self, name: &str, m: &Array2<C64>) -> Result<()> {
        let mut w = self.writer(name)?;
        writeln!(w, "n,m,re,im")?;
        for a in 0..m.nrows() {
            for b in 0..m.ncols() {
                writeln!(w, "{},{},{:.17e},{:.17e}", a + 1, b + 1, m[[a, b]].re, m[[a, b]].im)?;
            }
        }
        Ok(())
    }

    /// `(n, m, value)` rows of a real matrix.
    pub fn write_real_matrix(&self, name: &str, m: &Array2<f64>) -> Result<()> {
        let mut w = self.writer(name)?;
        writeln!(w, "n,m,value")?;
        for a in 0..m.nrows() {
            for b in 0..m.ncols() {
                writeln!(w, "{},{},{:.17e}", a + 1, b + 1, m[[a, b]])?;
            }
        }
        Ok(())
    }

    /// Complex series, e.g. correlators: `(x, re, im)`.
    pub fn write_complex_series(
        &self,
        name: &str,
        header: &str,
        x: &[f64],
        y: &[C64],
    ) -> Result<()> {
        let mut w = self.writer(name)?;
        writeln!(w, "{header}")?;
        for (xi, yi) in x.iter().zip(y) {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", xi, yi.re, yi.im)?;
        }
        Ok(())
    }

    /// Real columns with a caller-provided header.
    pub fn write_columns(&self, name: &str, header: &str, rows: &[Vec<f64>]) -> Result<()> {
        let mut w = self.writer(name)?;
        writeln!(w, "{header}")?;
        for row in rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

pub fn complex_json(c: C64) -> serde_json::Value {
    json!({ "re": c.re, "im": c.im })
}
