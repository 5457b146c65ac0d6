//! CSV artifacts. Every file starts with a comment line carrying the tool
//! version and the config hash.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use stefan_core::control::DiscreteControl;
use stefan_core::forward::DiscreteState;

#[derive(Debug, Clone)]
pub struct Stamp {
    pub config_hash: String,
}

impl Stamp {
    fn header(&self) -> String {
        format!(
            "# {} {} config-sha256={}\n",
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION"),
            self.config_hash
        )
    }
}

/// Shortest round-trip text; exponent form for very small or large values.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub struct CsvOut<'a> {
    pub dir: &'a Path,
    pub stamp: &'a Stamp,
}

impl CsvOut<'_> {
    pub fn write(&self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(self.dir)?;
        let path = self.dir.join(name);
        let mut file = File::create(&path)?;
        file.write_all(self.stamp.header().as_bytes())?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(columns)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn state(&self, state: &DiscreteState) -> std::io::Result<PathBuf> {
        let grid = &state.grid;
        let mut rows = Vec::with_capacity((grid.m + 1) * (grid.n + 1));
        for k in 0..=grid.n {
            for i in 0..=grid.m {
                rows.push(vec![
                    i.to_string(),
                    k.to_string(),
                    num(grid.x(i)),
                    num(grid.t(k)),
                    num(state.get(i, k)),
                ]);
            }
        }
        self.write("state.csv", &["i", "k", "x", "t", "v"], &rows)
    }

    pub fn control(&self, control: &DiscreteControl) -> std::io::Result<PathBuf> {
        let rows: Vec<Vec<String>> = control
            .values()
            .iter()
            .enumerate()
            .map(|(k, g)| vec![k.to_string(), num(k as f64 * control.tau()), num(*g)])
            .collect();
        self.write("control.csv", &["k", "t", "g"], &rows)
    }

    /// Two-column name/value listing.
    pub fn pairs(&self, name: &str, pairs: &[(&str, String)]) -> std::io::Result<PathBuf> {
        let rows: Vec<Vec<String>> = pairs.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect();
        self.write(name, &["quantity", "value"], &rows)
    }
}
