use std::path::PathBuf;

use anyhow::Result;
use beamcal::io;
use beamcal::MetricReport;

use super::Env;
use super::evaluate::table_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// Aligned text columns.
    Text,
    Csv,
    Markdown,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Metric report manifest written by `evaluate`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

fn cells(r: &MetricReport) -> [String; 4] {
    [
        r.label(),
        format!("{:.4}", r.s_r),
        format!("{:.4}", r.e_a_rms_deg),
        format!("{:.3}", r.e_c_db),
    ]
}

const HEADER: [&str; 4] = ["model", "S_R", "E_A [deg]", "E_C [dB]"];

pub fn render(reports: &[MetricReport], format: Format) -> String {
    match format {
        Format::Csv => table_csv(reports),
        Format::Markdown => {
            let mut out = format!("| {} |\n|---|---:|---:|---:|\n", HEADER.join(" | "));
            for r in reports {
                out.push_str(&format!("| {} |\n", cells(r).join(" | ")));
            }
            out
        }
        Format::Text => {
            let rows: Vec<[String; 4]> = reports.iter().map(cells).collect();
            let mut width = HEADER.map(str::len);
            for row in &rows {
                for (w, c) in width.iter_mut().zip(row) {
                    *w = (*w).max(c.len());
                }
            }
            let line = |c: [&str; 4]| {
                format!("{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}\n", c[0], c[1], c[2], c[3], w0 = width[0], w1 = width[1], w2 = width[2], w3 = width[3])
            };
            let mut out = line(HEADER);
            for row in &rows {
                out.push_str(&line([&row[0], &row[1], &row[2], &row[3]]));
            }
            if let Some(r) = reports.first() {
                out.push_str(&format!("evaluated on {}, {:?} similarity\n", r.eval_set, r.similarity_mode));
            }
            out
        }
    }
}

pub fn run(env: &Env, args: &Args) -> Result<()> {
    let reports = io::load_reports(&super::manifest_path(&args.input))?;
    crate::output::emit(env.json(), &reports, || render(&reports, args.format))
}
