//! File emission: per-step metrics CSV, sampling-mask and singular-value
//! dumps, binary snapshot dumps, plot-ready columnar data, and the run
//! summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use arom_core::snapshot::{write_snapshot, SnapshotData, SnapshotIndex};
use arom_core::{relative_l1_error, Mesh, SamplingSets, SolveKind, StepRecord, StepSink};

#[derive(Debug, Clone)]
pub struct OutputOptions {
    pub dir: PathBuf,
    pub dump_stride: usize,
    pub dump_masks: bool,
    pub dump_svals: bool,
    pub density_only_error: bool,
}

impl OutputOptions {
    pub fn ensure_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.dir)
            .with_context(|| format!("cannot create output directory {}", self.dir.display()))
    }
}

pub fn kind_label(kind: SolveKind) -> &'static str {
    match kind {
        SolveKind::Full { escalated: false } => "full",
        SolveKind::Full { escalated: true } => "full_escalated",
        SolveKind::Hybrid => "hybrid",
    }
}

/// Streaming sink writing the per-step artifacts of one run.
pub struct RunSink<'a> {
    label: String,
    metrics: BufWriter<File>,
    masks: Option<BufWriter<File>>,
    svals: Option<BufWriter<File>>,
    dumps: Option<DumpState>,
    /// Reference trajectory (index 0 = initial state) for per-step errors.
    reference: Option<&'a [Vec<f64>]>,
    density_only: bool,
    n_vars: usize,
    n_cells: usize,
    dim: usize,
    cells_per_axis: Vec<usize>,
    pub errors: Vec<f64>,
    pub final_snapshot: Option<(Vec<f64>, f64)>,
}

struct DumpState {
    dir: PathBuf,
    stride: usize,
    index: SnapshotIndex,
}

impl<'a> RunSink<'a> {
    pub fn create(
        label: &str,
        mesh: &Mesh,
        n_vars: usize,
        opts: &OutputOptions,
        reference: Option<&'a [Vec<f64>]>,
    ) -> Result<Self> {
        opts.ensure_dir()?;
        let metrics_path = opts.dir.join(format!("{label}_metrics.csv"));
        let mut metrics = BufWriter::new(
            File::create(&metrics_path)
                .with_context(|| format!("cannot create {}", metrics_path.display()))?,
        );
        writeln!(metrics, "k,kind,n_gamma,n_p,j_sub,e_k,wall_ms")?;

        let masks = if opts.dump_masks {
            let p = opts.dir.join(format!("{label}_masks.csv"));
            let mut w = BufWriter::new(File::create(&p)?);
            writeln!(w, "k,mask")?;
            Some(w)
        } else {
            None
        };
        let svals = if opts.dump_svals {
            let p = opts.dir.join(format!("{label}_singular_values.csv"));
            let mut w = BufWriter::new(File::create(&p)?);
            writeln!(w, "k,sigma...")?;
            Some(w)
        } else {
            None
        };
        let dumps = if opts.dump_stride > 0 {
            let dir = opts.dir.join(format!("{label}_snapshots"));
            std::fs::create_dir_all(&dir)?;
            let index = SnapshotIndex::create(&dir.join("index.txt"))?;
            Some(DumpState {
                dir,
                stride: opts.dump_stride,
                index,
            })
        } else {
            None
        };

        let cells_per_axis = (0..mesh.dim()).map(|a| mesh.cells_along(a)).collect();
        Ok(RunSink {
            label: label.to_string(),
            metrics,
            masks,
            svals,
            dumps,
            reference,
            density_only: opts.density_only_error,
            n_vars,
            n_cells: mesh.n_cells(),
            dim: mesh.dim(),
            cells_per_axis,
            errors: Vec::new(),
            final_snapshot: None,
        })
    }

    fn dump(&mut self, k: usize, flat: &[f64], time: f64) {
        let Some(d) = &mut self.dumps else {
            return;
        };
        if k % d.stride != 0 {
            return;
        }
        let file = d.dir.join(format!("snap_{k:06}.bin"));
        let snap = SnapshotData {
            dim: self.dim,
            cells: self.cells_per_axis.clone(),
            n_vars: self.n_vars,
            time,
            values: flat.to_vec(),
        };
        if let Err(e) = write_snapshot(&file, &snap) {
            eprintln!("warning: snapshot dump failed ({}): {e}", file.display());
            return;
        }
        let _ = d.index.record(k, time, &file);
    }

    pub fn finish(self) -> Result<()> {
        if let Some(d) = self.dumps {
            d.index.finish()?;
        }
        let _ = self.label;
        Ok(())
    }
}

impl<'a> StepSink for RunSink<'a> {
    fn on_initial(&mut self, flat: &[f64], time: f64) {
        self.dump(0, flat, time);
    }

    fn on_step(
        &mut self,
        record: &StepRecord,
        flat: &[f64],
        time: f64,
        sampling: Option<&SamplingSets>,
        singular_values: Option<&[f64]>,
    ) {
        let e_k = match self.reference {
            Some(traj) => {
                let e = relative_l1_error(flat, &traj[record.k], self.n_vars, self.density_only);
                self.errors.push(e);
                e
            }
            None => f64::NAN,
        };
        let _ = writeln!(
            self.metrics,
            "{},{},{},{},{},{:.12e},{:.4}",
            record.k,
            kind_label(record.kind),
            record.n_gamma,
            record.n_p,
            record.subiterations,
            e_k,
            record.solve_seconds * 1e3,
        );

        if let Some(w) = &mut self.masks {
            let mask = match sampling {
                Some(sets) => sets
                    .mask(self.n_cells)
                    .iter()
                    .map(|m| char::from(b'0' + m))
                    .collect::<String>(),
                None => "1".repeat(self.n_cells),
            };
            let _ = writeln!(w, "{},{}", record.k, mask);
        }
        if let (Some(w), Some(svals)) = (&mut self.svals, singular_values) {
            let cols = svals
                .iter()
                .map(|s| format!("{s:.12e}"))
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(w, "{},{}", record.k, cols);
        }
        self.dump(record.k, flat, time);
        if record.k > 0 {
            self.final_snapshot = Some((flat.to_vec(), time));
        }
    }
}

/// Writes key = value lines to `summary.txt` and mirrors them on stdout.
pub fn write_summary(dir: &Path, lines: &[(String, String)]) -> Result<()> {
    let path = dir.join("summary.txt");
    let mut w = BufWriter::new(File::create(&path)?);
    for (k, v) in lines {
        writeln!(w, "{k} = {v}")?;
        println!("{k} = {v}");
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready columnar text: header row, then one comma-separated row per
/// entry.
pub fn write_columns(path: &Path, headers: &[&str], columns: &[Vec<f64>]) -> Result<()> {
    assert!(!columns.is_empty());
    let rows = columns[0].len();
    assert!(columns.iter().all(|c| c.len() == rows));
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", headers.join(","))?;
    for r in 0..rows {
        let line = columns
            .iter()
            .map(|c| format!("{:.12e}", c[r]))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Density column of a flat conservative state.
pub fn density_column(flat: &[f64], n_vars: usize) -> Vec<f64> {
    flat.chunks_exact(n_vars).map(|r| r[0]).collect()
}
