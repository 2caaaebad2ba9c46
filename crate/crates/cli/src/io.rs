//! Artifact serialization. Every file is written to a temporary sibling and
//! renamed into place.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use chemoblow_core::{
    EnergyRecord, FullState, Observer, RadialField, RadialGrid, ReducedState, StepInfo,
};
use serde::Serialize;

/// `0.1.0 (abc1234)`; the revision comes from the build environment.
pub fn version_stamp() -> String {
    format!(
        "{} ({})",
        env!("CARGO_PKG_VERSION"),
        env!("CHEMOBLOW_GIT_REV")
    )
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Serializes `rows` as CSV with the header derived from `T`.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    Ok(w.into_inner()?)
}

/// CSV from a header and numeric columns of equal length.
pub fn columns_csv(header: &[&str], columns: &[&[f64]]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    let len = columns.first().map_or(0, |c| c.len());
    let mut row = Vec::with_capacity(header.len());
    for i in 0..len {
        row.clear();
        row.extend(columns.iter().map(|c| c[i].to_string()));
        w.write_record(&row)?;
    }
    Ok(w.into_inner()?)
}

pub fn ledger_csv(records: &[EnergyRecord]) -> Result<Vec<u8>> {
    if records.is_empty() {
        return Ok(b"t,F,D,mass,u_max,dt\n".to_vec());
    }
    csv_bytes(records)
}

/// Named cell fields written to a snapshot.
pub trait SnapshotColumns {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<&RadialField>;
}

impl SnapshotColumns for FullState {
    fn header() -> &'static [&'static str] {
        &["r", "u", "v", "w"]
    }

    fn fields(&self) -> Vec<&RadialField> {
        vec![&self.u, &self.v, &self.w]
    }
}

impl SnapshotColumns for ReducedState {
    fn header() -> &'static [&'static str] {
        &["r", "u", "z"]
    }

    fn fields(&self) -> Vec<&RadialField> {
        vec![&self.u, &self.z]
    }
}

pub fn snapshot_csv<S: SnapshotColumns>(grid: &RadialGrid, state: &S) -> Result<Vec<u8>> {
    let mut columns: Vec<&[f64]> = vec![grid.centers()];
    columns.extend(state.fields().into_iter().map(|f| f.values()));
    columns_csv(S::header(), &columns)
}

/// Keeps the first accepted state and, when `every > 0`, every `every`-th one
/// after it. The final state is added by the caller.
pub struct SnapshotRecorder<S> {
    every: usize,
    seen: usize,
    pub states: Vec<(usize, S)>,
}

impl<S> SnapshotRecorder<S> {
    pub fn new(every: usize) -> Self {
        Self {
            every,
            seen: 0,
            states: Vec::new(),
        }
    }

    pub fn steps_seen(&self) -> usize {
        self.seen
    }
}

impl<S: Clone> Observer<S> for SnapshotRecorder<S> {
    fn observe(
        &mut self,
        _grid: &RadialGrid,
        state: &S,
        _info: &StepInfo,
    ) -> chemoblow_core::Result<()> {
        let k = self.seen;
        self.seen += 1;
        if k == 0 || (self.every > 0 && k.is_multiple_of(self.every)) {
            self.states.push((k, state.clone()));
        }
        Ok(())
    }
}

/// Writes `snapshots/NNNN.csv`, numbered by accepted step.
pub fn write_snapshots<S: SnapshotColumns>(
    dir: &Path,
    grid: &RadialGrid,
    states: &[(usize, S)],
) -> Result<()> {
    let snap_dir = dir.join("snapshots");
    std::fs::create_dir_all(&snap_dir)
        .with_context(|| format!("cannot create {}", snap_dir.display()))?;
    for (k, state) in states {
        write_atomic(
            &snap_dir.join(format!("{k:04}.csv")),
            &snapshot_csv(grid, state)?,
        )?;
    }
    Ok(())
}

/// Reads `r,u,v,w` data and checks it sits on the centers of `grid`.
pub fn read_initial_csv(
    path: &Path,
    grid: &RadialGrid,
) -> Result<(RadialField, RadialField, RadialField)> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != ["r", "u", "v", "w"] {
        bail!(
            "{}: expected header r,u,v,w, found {}",
            path.display(),
            header.join(",")
        );
    }
    let mut cols = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for (line, record) in reader.deserialize::<[f64; 4]>().enumerate() {
        let row = record.with_context(|| format!("{}: bad row {}", path.display(), line + 2))?;
        for (c, x) in cols.iter_mut().zip(row) {
            c.push(x);
        }
    }
    if cols[0].len() != grid.cells() {
        bail!(
            "{}: {} rows but the grid has {} cells",
            path.display(),
            cols[0].len(),
            grid.cells()
        );
    }
    let tol = 1e-9 * grid.radius();
    if let Some(i) = cols[0]
        .iter()
        .zip(grid.centers())
        .position(|(a, b)| (a - b).abs() > tol)
    {
        bail!(
            "{}: row {} has r = {} but the cell center is {}",
            path.display(),
            i + 2,
            cols[0][i],
            grid.centers()[i]
        );
    }
    let [_, u, v, w] = cols;
    Ok((
        RadialField::new(u),
        RadialField::new(v),
        RadialField::new(w),
    ))
}
