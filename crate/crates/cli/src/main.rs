use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use gapcomp::completion::{random_mask, svp_complete, SvpParams};
use gapcomp::field::GappyTensor4;
use gapcomp::io::{self, GSA_MAGIC, GST_MAGIC};
use gapcomp::partition::{greedy_partition, pow2_partition};
use gapcomp::pipeline::{
    compress_dataset, decompress_dataset, sweep_splits, CompressionReport, Method,
};
use gapcomp::synth::{synth, SynthSpec};

#[derive(Parser)]
#[command(
    name = "gapcomp",
    version,
    about = "Compress gappy 4-D ocean fields with low-rank tensor formats"
)]
struct Cli {
    /// Print the machine-readable JSON report instead of the summary.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic field and write it as GST.
    Synth(SynthArgs),
    /// Cover the ocean mask of a field with rectangular blocks.
    Partition(PartitionArgs),
    /// Compress a GST field into a GSA archive.
    Compress(CompressArgs),
    /// Reconstruct a GST field from a GSA archive.
    Decompress(DecompressArgs),
    /// Summarize a GST field or GSA archive.
    Stats(StatsArgs),
    /// Compare compression ratios over several temporal splittings.
    Sweep(SweepArgs),
    /// Run SVP tensor completion on the largest ocean block.
    Complete(CompleteArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [64, 48, 8, 64])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PartitionArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    s_min: usize,
    /// Restrict block sides to powers of two.
    #[arg(long)]
    pow2: bool,
    /// Write the block list as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompressArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "tucker")]
    method: Method,
    #[arg(long)]
    eps_max: f64,
    #[arg(long, default_value_t = 4)]
    s_min: usize,
    #[arg(long, default_value_t = 1)]
    splits: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecompressArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "tucker")]
    method: Method,
    #[arg(long)]
    eps_max: f64,
    #[arg(long, default_value_t = 4)]
    s_min: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4])]
    splits: Vec<usize>,
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Ratio of all entries to observed entries.
    #[arg(long, default_value_t = 4.0)]
    cr: f64,
    /// Rank caps, one per mode.
    #[arg(long, value_delimiter = ',')]
    caps: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 1)]
    delta: usize,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    s_min: usize,
    /// Write per-iteration errors as JSON.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

/// Formats `x` with six significant digits.
fn sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        format!("{:.*}", (5 - exp) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn dims4(v: &[usize]) -> Result<[usize; 4]> {
    v.try_into()
        .map_err(|_| anyhow::anyhow!("expected 4 dims, got {}", v.len()))
}

fn read_field(path: &Path) -> Result<GappyTensor4> {
    io::read_gst(path).with_context(|| format!("reading {}", path.display()))
}

fn report_lines(r: &CompressionReport) -> Vec<String> {
    let mut lines = vec![format!(
        "{:<20} {:<9} {:<16} {:>9} {:>9} {:<11} {:<11} {}",
        "block", "steps", "ranks", "before", "after", "rel_frob", "chebyshev", "cr"
    )];
    for b in &r.blocks {
        let rect = b.rect;
        let ranks = if b.raw {
            "raw".to_string()
        } else {
            format!("{:?}", b.ranks)
        };
        lines.push(format!(
            "{:<20} {:<9} {:<16} {:>9} {:>9} {:<11} {:<11} {}",
            format!(
                "{}..{} x {}..{}",
                rect.x_start, rect.x_end, rect.y_start, rect.y_end
            ),
            format!("{}..{}", b.interval.0, b.interval.1),
            ranks,
            b.elements_before,
            b.elements_after,
            sig(b.relative_frobenius),
            sig(b.chebyshev),
            sig(b.cr),
        ));
    }
    let raw = r.blocks.iter().filter(|b| b.raw).count();
    lines.extend([
        String::new(),
        format!("method        {}", r.method),
        format!("eps_max       {}", sig(r.eps_max)),
        format!("splits        {}", r.n_splits),
        format!("blocks        {} ({} raw)", r.blocks.len(), raw),
        format!("leftovers     {}", r.leftover_count),
        format!(
            "stored        {}",
            r.block_elements_after + r.leftover_count
        ),
        format!("CR_all        {}", sig(r.cr_all)),
        format!("CR_sub        {}", sig(r.cr_sub)),
        format!("CR_defined    {}", sig(r.cr_all_defined)),
        format!("max error     {}", sig(r.max_error)),
    ]);
    lines
}

/// Size of the JSON header of a framed file.
fn header_bytes(bytes: &[u8]) -> u64 {
    bytes
        .get(8..16)
        .map_or(0, |b| u64::from_le_bytes(b.try_into().unwrap()))
}

fn emit(json_mode: bool, value: Value, lines: Vec<String>) -> Result<()> {
    if json_mode {
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        for l in lines {
            println!("{l}");
        }
    }
    Ok(())
}

fn field_summary(data: &GappyTensor4) -> (Value, Vec<String>) {
    let defined: Vec<f64> = data
        .values()
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .collect();
    let min = defined.iter().copied().fold(f64::INFINITY, f64::min);
    let max = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ocean = data.mask().count() as f64 / data.mask().cells().len() as f64;
    let value = json!({
        "kind": "gst",
        "dims": data.dims(),
        "elements": data.len(),
        "defined": data.defined_count(),
        "ocean_fraction": ocean,
        "min": min,
        "max": max,
    });
    let lines = vec![
        format!("dims          {:?}", data.dims()),
        format!("elements      {}", data.len()),
        format!("defined       {}", data.defined_count()),
        format!("ocean         {}", sig(ocean)),
        format!("range         {} .. {}", sig(min), sig(max)),
    ];
    (value, lines)
}

fn run(cli: Cli) -> Result<()> {
    let json_mode = cli.json;
    match cli.command {
        Command::Synth(a) => {
            let spec = SynthSpec {
                dims: dims4(&a.dims)?,
                seed: a.seed,
                noise: a.noise,
                ..SynthSpec::default()
            };
            let data = synth(&spec)?;
            io::write_gst(&data, &a.out)?;
            let (value, mut lines) = field_summary(&data);
            lines.insert(0, format!("wrote {}", a.out.display()));
            emit(json_mode, value, lines)
        }
        Command::Partition(a) => {
            let data = read_field(&a.input)?;
            let result = if a.pow2 {
                pow2_partition(data.mask(), a.s_min)?
            } else {
                greedy_partition(data.mask(), a.s_min)
            };
            if let Some(out) = &a.out {
                fs::write(out, serde_json::to_vec_pretty(&result)?)?;
            }
            let covered: usize = result.blocks.iter().map(|b| b.area()).sum();
            let value = json!({
                "blocks": result.blocks,
                "covered_cells": covered,
                "leftover_cells": result.leftover_cells,
            });
            let lines = vec![
                format!("blocks        {}", result.blocks.len()),
                format!("covered       {covered}"),
                format!("leftover      {}", result.leftover_cells),
            ];
            emit(json_mode, value, lines)
        }
        Command::Compress(a) => {
            let data = read_field(&a.input)?;
            let (archive, report) =
                compress_dataset(&data, a.method, a.eps_max, a.s_min, a.splits)?;
            io::write_gsa(&archive, Some(&report), &a.out)?;
            emit(
                json_mode,
                serde_json::to_value(&report)?,
                report_lines(&report),
            )
        }
        Command::Decompress(a) => {
            let (archive, _) = io::read_gsa(&a.input)?;
            let data = decompress_dataset(&archive)?;
            io::write_gst(&data, &a.out)?;
            let (value, mut lines) = field_summary(&data);
            lines.insert(0, format!("wrote {}", a.out.display()));
            emit(json_mode, value, lines)
        }
        Command::Stats(a) => {
            let bytes =
                fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
            match bytes.get(..4) {
                Some(m) if m == GST_MAGIC => {
                    let (value, lines) = field_summary(&io::decode_gst(&bytes)?);
                    emit(json_mode, value, lines)
                }
                Some(m) if m == GSA_MAGIC => {
                    let (archive, report) = io::decode_gsa(&bytes)?;
                    let total: usize = archive.dims.iter().product();
                    let stored = archive.stored_elements();
                    let mut lines = vec![
                        format!("dims          {:?}", archive.dims),
                        format!("stored        {stored}"),
                        format!("CR_all        {}", sig(total as f64 / stored as f64)),
                    ];
                    if let Some(r) = &report {
                        lines = report_lines(r);
                    }
                    lines.push(format!("manifest      {} bytes", header_bytes(&bytes)));
                    let value = json!({
                        "kind": "gsa",
                        "dims": archive.dims,
                        "stored_elements": stored,
                        "manifest_bytes": header_bytes(&bytes),
                        "report": report,
                    });
                    emit(json_mode, value, lines)
                }
                _ => bail!(
                    "{} is neither a GST field nor a GSA archive",
                    a.input.display()
                ),
            }
        }
        Command::Sweep(a) => {
            let data = read_field(&a.input)?;
            let rows = sweep_splits(&data, a.method, a.eps_max, a.s_min, &a.splits)?;
            let mut lines =
                vec!["splits  CR_all      CR_sub      stored      max_error".to_string()];
            for r in &rows {
                lines.push(format!(
                    "{:<7} {:<11} {:<11} {:<11} {}",
                    r.n_splits,
                    sig(r.cr_all),
                    sig(r.cr_sub),
                    r.elements_after + r.leftover_count,
                    sig(r.max_error)
                ));
            }
            emit(json_mode, serde_json::to_value(&rows)?, lines)
        }
        Command::Complete(a) => {
            let data = read_field(&a.input)?;
            let nt = data.dims()[3];
            let rect = greedy_partition(data.mask(), a.s_min)
                .blocks
                .first()
                .copied()
                .with_context(|| format!("no ocean block of side >= {}", a.s_min))?;
            let x = data.extract_block(&rect, 0, nt)?;
            let mask = random_mask(x.dims(), a.cr, a.seed)?;
            let mut params = SvpParams::new(a.caps);
            params.eta = a.eta;
            params.delta = a.delta;
            params.eps = a.eps;
            params.max_iters = a.max_iters;
            params.trace = a.trace_out.is_some();
            let out = svp_complete(&x, &mask, &params, Some(&x))?;
            let full = x.relative_error(&out.completion)?;
            if let (Some(path), Some(trace)) = (&a.trace_out, &out.trace) {
                fs::write(path, serde_json::to_vec_pretty(trace)?)?;
            }
            let value = json!({
                "block": rect,
                "block_dims": x.dims(),
                "observed": mask.indices.len(),
                "iterations": out.iterations,
                "converged": out.converged,
                "ranks": out.ranks,
                "masked_relative_error": out.masked_error,
                "full_relative_error": full,
            });
            let lines = vec![
                format!("block         {:?}", x.dims()),
                format!("observed      {}", mask.indices.len()),
                format!(
                    "iterations    {} ({})",
                    out.iterations,
                    if out.converged {
                        "converged"
                    } else {
                        "cap reached"
                    }
                ),
                format!("ranks         {:?}", out.ranks),
                format!("masked error  {}", sig(out.masked_error)),
                format!("full error    {}", sig(full)),
            ];
            emit(json_mode, value, lines)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
