//! Flat CSV rows shared by `eval`, `search` and `bench`, and the Markdown
//! table rendered from them.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::cost::{BenchResult, CostReport};
use crate::error::{Error, Result};
use crate::numerics::PrecisionMode;
use crate::search::{EvalRecord, Genome};
use crate::seed::fnv1a64;

pub const CSV_HEADER: &str =
    "label,embed_dim,depth,heads,mlp_ratios,merge_r,precision,accuracy,params,flops,energy_units,fps,seed";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvRow {
    pub label: String,
    pub embed_dim: usize,
    pub depth: usize,
    /// Per-layer head counts joined with `;`.
    pub heads: String,
    /// Per-layer MLP ratios joined with `;`.
    pub mlp_ratios: String,
    pub merge_r: usize,
    pub precision: PrecisionMode,
    pub accuracy: Option<f64>,
    pub params: u64,
    pub flops: u64,
    pub energy_units: f64,
    pub fps: Option<f64>,
    pub seed: u64,
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

/// `<name>_r=<r>_<precision>`, where `name` is a known model name or `g`
/// followed by eight hex digits of the genome key's hash.
pub fn genome_label(genome: &Genome, name: Option<&str>) -> String {
    let stem = match name {
        Some(n) => n.to_string(),
        None => format!("g{:08x}", fnv1a64(genome.key().as_bytes()) as u32),
    };
    format!("{stem}_r={}_{}", genome.merge_r, genome.precision)
}

impl CsvRow {
    pub fn new(
        label: String,
        genome: &Genome,
        cost: &CostReport,
        accuracy: Option<f64>,
        bench: Option<&BenchResult>,
        seed: u64,
    ) -> CsvRow {
        CsvRow {
            label,
            embed_dim: genome.arch.embed_dim,
            depth: genome.arch.depth,
            heads: join(&genome.arch.heads),
            mlp_ratios: join(&genome.arch.mlp_ratios),
            merge_r: genome.merge_r,
            precision: genome.precision,
            accuracy,
            params: cost.params,
            flops: cost.flops,
            energy_units: cost.energy_units,
            fps: bench.map(|b| b.fps),
            seed,
        }
    }

    pub fn from_record(record: &EvalRecord, name: Option<&str>) -> CsvRow {
        CsvRow::new(
            genome_label(&record.genome, name),
            &record.genome,
            &record.cost,
            Some(record.accuracy),
            record.bench.as_ref(),
            record.eval_seed,
        )
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::invalid("csv header", format!("expected `{CSV_HEADER}`")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// One line of the Markdown table.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub accuracy: Option<f64>,
    pub fps: Option<f64>,
    pub energy_units: f64,
    pub params: u64,
    pub flops: u64,
}

impl From<&CsvRow> for ReportRow {
    fn from(r: &CsvRow) -> Self {
        ReportRow {
            label: r.label.clone(),
            accuracy: r.accuracy,
            fps: r.fps,
            energy_units: r.energy_units,
            params: r.params,
            flops: r.flops,
        }
    }
}

fn or_dash(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_else(|| "-".to_string())
}

impl ReportRow {
    /// Cells in column order. Accuracy in percent, energy in units of 1e9,
    /// parameters in millions and FLOPs in billions.
    pub fn cells(&self) -> [String; 6] {
        [
            self.label.clone(),
            or_dash(self.accuracy, |a| format!("{:.1}", a * 100.0)),
            or_dash(self.fps, |f| format!("{f:.1}")),
            format!("{:.3}", self.energy_units / 1e9),
            format!("{:.1}M", self.params as f64 / 1e6),
            format!("{:.1}", self.flops as f64 / 1e9),
        ]
    }
}

pub fn render_markdown(rows: &[ReportRow]) -> String {
    let mut s = String::from("| Model | Acc. | FPS | Energy | #params | GFLOPs |\n");
    s.push_str("|:------|-----:|----:|-------:|--------:|-------:|\n");
    for r in rows {
        s.push_str(&format!("| {} |\n", r.cells().join(" | ")));
    }
    s
}
