//! CSV series, binary snapshots with JSON sidecars, and gnuplot scripts.
//!
//! Binary payloads are row-major little-endian: `float64` for fields,
//! interleaved `(re, im)` `complex128` for operators. The sidecar carries
//! everything needed to rebuild the lattice or the composite system.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array2, ArrayD, Dimension, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::PlantRow;
use crate::field::{lattice_point, FieldRole, PhaseSpaceField, ReferenceMeasure};
use crate::fourier::C64;
use crate::hilbert::{CompositeSystem, DensityOperator, Factor, Representation};
use crate::lattice::{make_phase_space_from, PhaseSpaceParams};
use crate::moyal::DiagnosticsRow;

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_diagnostics_csv<W: Write>(rows: &[DiagnosticsRow], out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "t,mass,l2,energy,min_w,purity_est")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            num(r.t),
            num(r.mass),
            num(r.l2),
            num(r.energy),
            num(r.min_w),
            num(r.purity_est)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_plant_csv<W: Write>(rows: &[PlantRow], out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "t,plant_purity,plant_energy,plant_trace,square_gap")?;
    for r in rows {
        let gap = r.square_gap.map(num).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", num(r.t), num(r.plant_purity), num(r.plant_energy), num(r.plant_trace), gap)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per lattice point: `q1..qd, p1..pd, value`, in row-major index order.
pub fn write_field_csv<W: Write>(field: &PhaseSpaceField, out: W) -> Result<()> {
    let spec = field.spec();
    let d = spec.d();
    let mut w = BufWriter::new(out);
    let mut head: Vec<String> = (1..=d).map(|t| format!("q{t}")).collect();
    head.extend((1..=d).map(|t| format!("p{t}")));
    head.push("value".into());
    writeln!(w, "{}", head.join(","))?;
    for (ix, v) in field.values.indexed_iter() {
        let (q, p) = lattice_point(spec, ix.slice());
        let mut cols: Vec<String> = q.into_iter().chain(p).map(num).collect();
        cols.push(num(*v));
        writeln!(w, "{}", cols.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub kind: String,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub shape: Vec<usize>,
    pub role: FieldRole,
    pub reference: ReferenceMeasure,
    pub spec: PhaseSpaceParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorMeta {
    Grid { label: String, spec: PhaseSpaceParams },
    Levels { label: String, n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSidecar {
    pub kind: String,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub shape: Vec<usize>,
    pub representation: Representation,
    pub factors: Vec<FactorMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

/// `stem.bin` and `stem.json`.
pub fn snapshot_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != 8 * expected {
        return Err(Error::GridMismatch(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            8 * expected
        )));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

pub fn write_field_snapshot(field: &PhaseSpaceField, t: Option<f64>, stem: &Path) -> Result<()> {
    let (bin, json) = snapshot_paths(stem);
    let mut w = BufWriter::new(fs::File::create(&bin)?);
    for v in field.values.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let meta = FieldSidecar {
        kind: "phase_space_field".into(),
        dtype: "float64".into(),
        byte_order: "little".into(),
        layout: "row_major".into(),
        shape: field.values.shape().to_vec(),
        role: field.role,
        reference: field.reference,
        spec: field.spec().params(),
        t,
    };
    write_json(&json, &meta)
}

pub fn read_field_snapshot(stem: &Path) -> Result<(PhaseSpaceField, FieldSidecar)> {
    let (bin, json) = snapshot_paths(stem);
    let meta: FieldSidecar = serde_json::from_str(&fs::read_to_string(&json)?)?;
    let spec = make_phase_space_from(&meta.spec)?;
    let len = meta.shape.iter().product();
    let data = read_f64s(&bin, len)?;
    let values = ArrayD::from_shape_vec(IxDyn(&meta.shape), data)
        .map_err(|e| Error::GridMismatch(format!("snapshot shape: {e}")))?;
    let field = PhaseSpaceField::new(values, meta.role, meta.reference, spec)?;
    Ok((field, meta))
}

fn factor_meta(system: &CompositeSystem) -> Vec<FactorMeta> {
    system
        .labels()
        .iter()
        .zip(system.factors())
        .map(|(label, f)| match f {
            Factor::Grid(s) => FactorMeta::Grid { label: label.clone(), spec: s.params() },
            Factor::Levels(n) => FactorMeta::Levels { label: label.clone(), n: *n },
        })
        .collect()
}

pub fn system_from_meta(factors: &[FactorMeta]) -> Result<Arc<CompositeSystem>> {
    let parts = factors
        .iter()
        .map(|f| {
            Ok(match f {
                FactorMeta::Grid { label, spec } => (label.clone(), Factor::Grid(make_phase_space_from(spec)?)),
                FactorMeta::Levels { label, n } => (label.clone(), Factor::Levels(*n)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CompositeSystem::new(parts)
}

pub fn write_density_snapshot(t: &DensityOperator, time: Option<f64>, stem: &Path) -> Result<()> {
    let (bin, json) = snapshot_paths(stem);
    let mut w = BufWriter::new(fs::File::create(&bin)?);
    for v in t.matrix().iter() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    let meta = OperatorSidecar {
        kind: "density_operator".into(),
        dtype: "complex128".into(),
        byte_order: "little".into(),
        layout: "row_major".into(),
        shape: vec![t.dim(), t.dim()],
        representation: t.rep(),
        factors: factor_meta(t.system()),
        t: time,
    };
    write_json(&json, &meta)
}

/// Reads an operator snapshot; the matrix is validated as a density operator.
pub fn read_density_snapshot(stem: &Path) -> Result<(DensityOperator, OperatorSidecar)> {
    let (bin, json) = snapshot_paths(stem);
    let meta: OperatorSidecar = serde_json::from_str(&fs::read_to_string(&json)?)?;
    let system = system_from_meta(&meta.factors)?;
    let dim = system.dim();
    if meta.shape != [dim, dim] {
        return Err(Error::SpecMismatch(format!("sidecar shape {:?} does not match dimension {dim}", meta.shape)));
    }
    let data = read_f64s(&bin, 2 * dim * dim)?;
    let values: Vec<C64> = data.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
    let m = Array2::from_shape_vec((dim, dim), values).expect("length checked");
    let t = DensityOperator::new(m, meta.representation, system)?;
    Ok((t, meta))
}

/// Gnuplot heatmap script for a single-mode field written by [`write_field_csv`].
pub fn gnuplot_heatmap(csv_name: &str, png_name: &str, title: &str, field: &PhaseSpaceField) -> Result<String> {
    if field.spec().d() != 1 {
        return Err(Error::GridMismatch(format!(
            "heatmaps need a single mode, field has {} degrees of freedom",
            field.spec().d()
        )));
    }
    let lim = field.max_abs().max(1e-300);
    Ok(format!(
        "set terminal pngcairo size 800,700\n\
         set output '{png_name}'\n\
         set datafile separator ','\n\
         set title '{title}'\n\
         set xlabel 'q'\n\
         set ylabel 'p'\n\
         set size ratio -1\n\
         set view map\n\
         set palette defined (-1 'blue', 0 'white', 1 'red')\n\
         set cbrange [{neg}:{lim}]\n\
         plot '{csv_name}' every ::1 using 1:2:3 with image notitle\n",
        neg = num(-lim),
        lim = num(lim),
    ))
}
