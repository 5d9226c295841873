//! Artifact writers. CSV cells hold 17 significant digits so rereads are
//! lossless, and every byte of output is a pure function of the config.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{io_err, CliError};

type Result<T> = std::result::Result<T, CliError>;

/// Full-precision float cell: 17 significant digits, '.' separator.
pub fn fnum(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Csv {
    out: BufWriter<File>,
    path: PathBuf,
}

impl Csv {
    pub fn create(dir: &Path, name: &str, header: &str) -> Result<Csv> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir.display(), e))?;
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| io_err(path.display(), e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{header}").map_err(|e| io_err(path.display(), e))?;
        Ok(Csv { out, path })
    }

    pub fn row(&mut self, cells: &[String]) -> Result<()> {
        writeln!(self.out, "{}", cells.join(","))
            .map_err(|e| io_err(self.path.display(), e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| io_err(self.path.display(), e))
    }
}

pub fn write_text(dir: &Path, name: &str, content: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir.display(), e))?;
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| io_err(path.display(), e))
}
