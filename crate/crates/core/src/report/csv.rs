//! Plain CSV tables with a provenance comment line, written atomically.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::config::ModelConfig;
use crate::mfg::MeanFieldSolution;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    /// `key=value` pairs for the leading `#` line.
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            meta: Vec::new(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Adds the config hash and grid resolution to the header line.
    pub fn for_config(mut self, cfg: &ModelConfig) -> Self {
        self.meta.push(("config_hash".into(), cfg.hash_hex()));
        self.meta.push((
            "grid_steps_per_unit_time".into(),
            cfg.solver.grid_steps_per_unit_time.to_string(),
        ));
        self
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|v| fmt_f64(*v)).collect());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.meta.is_empty() {
            let meta: Vec<String> = self.meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(out, "# {}", meta.join(","));
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().peekable();
        let mut meta = Vec::new();
        if let Some(first) = lines.peek() {
            if let Some(rest) = first.strip_prefix("# ") {
                for pair in rest.split(',') {
                    let (k, v) = pair.split_once('=').ok_or_else(|| format!("bad meta `{pair}`"))?;
                    meta.push((k.to_string(), v.to_string()));
                }
                lines.next();
            }
        }
        let header = lines.next().ok_or("missing header row")?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != columns.len() {
                return Err(format!("row {} has {} fields, header has {}", i + 1, row.len(), columns.len()));
            }
            rows.push(row);
        }
        Ok(Table { meta, columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column; unparsable cells become NaN.
    pub fn numeric(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column(name)?;
        Some(self.rows.iter().map(|r| r[idx].parse().unwrap_or(f64::NAN)).collect())
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

/// Shortest round-trip form, with an exponent outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp: PathBuf = path.with_file_name(format!(
        ".{name}.tmp-{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// One row per node; `L`/`R` rows at every trade date.
pub fn equilibrium_table(cfg: &ModelConfig, mf: &MeanFieldSolution) -> Table {
    let n = mf.n_states();
    let mut cols = vec!["time".to_string(), "side".to_string()];
    cols.extend((1..=n).map(|i| format!("E_{i}")));
    cols.extend((1..=n).map(|i| format!("mu_{i}")));
    cols.extend(["E_agg".to_string(), "mu_agg".to_string()]);
    let mut table = Table::new(cols).for_config(cfg);
    let grid = mf.grid();
    let last_segment = grid.n_segments() - 1;
    for (s, j, t, e) in mf.e_by_state.iter_nodes() {
        let is_left = j == grid.segment(s).len() - 1 && s < last_segment;
        let mut row = vec![fmt_f64(t), if is_left { "L" } else { "R" }.to_string()];
        row.extend(e.iter().map(|v| fmt_f64(*v)));
        row.extend(mf.mu_by_state.node(s, j).iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(mf.e_agg.node(s, j)[0]));
        row.push(fmt_f64(mf.mu_agg.node(s, j)[0]));
        table.push(row);
    }
    table
}

pub fn xi_table(cfg: &ModelConfig, times: &[f64], xi: &[f64]) -> Table {
    let mut table = Table::new(["k", "t_k", "xi_star_k"]).for_config(cfg);
    for (k, (t, x)) in times.iter().zip(xi).enumerate() {
        table.push(vec![(k + 1).to_string(), fmt_f64(*t), fmt_f64(*x)]);
    }
    table
}

pub fn key_value_table(cfg: &ModelConfig, pairs: &[(&str, f64)]) -> Table {
    let mut table = Table::new(["key", "value"]).for_config(cfg);
    for (k, v) in pairs {
        table.push(vec![k.to_string(), fmt_f64(*v)]);
    }
    table
}
