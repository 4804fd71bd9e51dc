//! `cotdr-lab`: simulate and analyze multi-core fiber skew measurements.
//!
//! Exit codes: 0 success, 2 usage, 3 configuration/format, 4 resolution,
//! 5 ambiguity, 6 fit/unwrap/step, 7 I/O, 8 golay check failed.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cotdr_core::golay::{complementary_sum_check, generate_golay};
use cotdr_core::mps::write_spectrum_csv;
use cotdr_core::pipeline::{self, RunOptions};
use cotdr_core::report::{self, MeasurementReport, Table1Row};
use cotdr_core::scenario::{self, Scenario};
use cotdr_core::{Error, Result};

const GOLAY_FAILED: u8 = 8;

#[derive(Parser)]
#[command(name = "cotdr-lab", version, about = "Correlation-OTDR skew measurement lab")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Overrides the scenario's RNG seed.
    #[arg(long, global = true, env = "COTDR_LAB_SEED")]
    seed: Option<u64>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads. Each one holds one acquisition in memory.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,
    /// Also store the simulated traces under `<out>/traces`.
    #[arg(long, global = true)]
    dump_traces: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the complementary property of the order-k Golay pair.
    GolayCheck { k: u32 },
    /// Simulate all acquisitions and store the traces.
    Simulate { scenario: String },
    /// Analyze traces stored by `simulate`.
    Analyze { dir: PathBuf },
    /// Simulate and analyze a scenario.
    Run { scenario: String },
    /// Core delays over the temperature sweep.
    TempSweep { scenario: String },
    /// MPS group delay, dispersion and DGD spectra per core.
    Mps { scenario: String },
    /// Offset between MPS and C-OTDR delays at the reference temperature.
    Compare { scenario: String },
    /// Full report, or the fiber summary table with `--table1`.
    Report {
        #[arg(long)]
        table1: bool,
        #[arg(required = true)]
        scenarios: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(common: &Common, name: &str) -> Result<Scenario> {
    let mut s = scenario::load(name)?;
    if let Some(seed) = common.seed {
        s.setup.rng_seed = seed;
    }
    Ok(s)
}

/// The scenario restricted to its reference temperature.
fn at_reference(mut s: Scenario) -> Scenario {
    s.sweep_c = vec![s.reference_temperature()];
    s
}

fn options(common: &Common) -> RunOptions {
    RunOptions {
        threads: common.parallel,
        dump_dir: if common.dump_traces {
            common.out.as_ref().map(|o| o.join("traces"))
        } else {
            None
        },
    }
}

fn emit(common: &Common, file: &str, content: &str) -> Result<()> {
    match &common.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(file), content)?;
        }
        None => io::stdout().write_all(content.as_bytes())?,
    }
    Ok(())
}

fn csv(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn json(value: &impl serde::Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

fn emit_report(common: &Common, r: &MeasurementReport) -> Result<()> {
    match common.format.unwrap_or(Format::Json) {
        Format::Json => emit(common, "report.json", &json(r)),
        Format::Csv => emit(common, "delays.csv", &csv(|w| r.write_delays_csv(w))?),
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let common = &cli.common;
    match &cli.command {
        Command::GolayCheck { k } => return golay_check(common, *k),
        Command::Simulate { scenario } => {
            let s = load(common, scenario)?;
            let out = common
                .out
                .as_ref()
                .ok_or_else(|| Error::Config("simulate needs --out <dir>".into()))?;
            let manifest = pipeline::simulate_to_dir(&s, out, common.parallel)?;
            eprintln!(
                "wrote {} acquisitions to {}",
                manifest.acquisitions.len(),
                out.display()
            );
        }
        Command::Analyze { dir } => {
            let r = pipeline::analyze_dir(dir, common.parallel)?;
            emit_report(common, &r)?;
        }
        Command::Run { scenario } => {
            let s = load(common, scenario)?;
            let r = pipeline::run_scenario(&s, &options(common))?;
            emit_report(common, &r)?;
        }
        Command::TempSweep { scenario } => {
            let s = load(common, scenario)?;
            let r = pipeline::run_scenario(&s, &options(common))?;
            match common.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    emit(common, "temp_sweep.csv", &csv(|w| r.write_delays_csv(w))?)?;
                    if common.out.is_some() && !r.tdc.is_empty() {
                        emit(common, "tdc.csv", &csv(|w| r.write_tdc_csv(w))?)?;
                    }
                }
                Format::Json => {
                    let delays: Vec<_> = r.temperatures.iter().flat_map(|t| t.delays.clone()).collect();
                    let value = serde_json::json!({
                        "delays": delays,
                        "tdc": r.tdc,
                        "skew_excursions_s": r.skew_excursions_s,
                    });
                    emit(common, "temp_sweep.json", &json(&value))?;
                }
            }
        }
        Command::Mps { scenario } => mps(common, &load(common, scenario)?)?,
        Command::Compare { scenario } => {
            let s = at_reference(load(common, scenario)?);
            let r = pipeline::run_scenario(&s, &options(common))?;
            match common.format.unwrap_or(Format::Json) {
                Format::Json => emit(common, "comparison.json", &json(&r.method_comparison))?,
                Format::Csv => emit(common, "comparison.csv", &csv(|w| r.write_comparison_csv(w))?)?,
            }
        }
        Command::Report { table1, scenarios } => {
            if !*table1 {
                if scenarios.len() != 1 {
                    return Err(Error::Config("report without --table1 takes one scenario".into()));
                }
                let s = load(common, &scenarios[0])?;
                let r = pipeline::run_scenario(&s, &options(common))?;
                emit_report(common, &r)?;
                return Ok(0);
            }
            let rows = scenarios
                .iter()
                .map(|name| {
                    let s = at_reference(load(common, name)?);
                    Ok(pipeline::run_scenario(&s, &RunOptions { threads: common.parallel, dump_dir: None })?.table1)
                })
                .collect::<Result<Vec<Table1Row>>>()?;
            match common.format {
                None => emit(common, "table1.txt", &csv(|w| report::write_table1_text(w, &rows))?)?,
                Some(Format::Csv) => emit(common, "table1.csv", &csv(|w| report::write_table1_csv(w, &rows))?)?,
                Some(Format::Json) => emit(common, "table1.json", &json(&rows))?,
            }
        }
    }
    Ok(0)
}

fn golay_check(common: &Common, k: u32) -> Result<u8> {
    let pair = generate_golay(k)?;
    let sum = complementary_sum_check(&pair);
    let n = pair.len();
    let peak = sum[0];
    let sidelobe = sum[1..].iter().map(|v| v.abs()).max().unwrap_or(0);
    let ok = peak == 2 * n as i64 && sidelobe == 0;
    let verdict = if ok { "OK" } else { "FAILED" };
    match common.format {
        Some(Format::Json) => {
            let value = serde_json::json!({
                "order": k, "length": n, "ok": ok, "peak": peak, "max_sidelobe": sidelobe,
            });
            emit(common, "golay_check.json", &json(&value))?;
        }
        Some(Format::Csv) => {
            emit(
                common,
                "golay_check.csv",
                &format!("order,length,ok,peak,max_sidelobe\n{k},{n},{ok},{peak},{sidelobe}\n"),
            )?;
        }
        None => {
            println!("{n}-bit pair {verdict}: peak {peak}, max sidelobe {sidelobe}");
            if let Some(dir) = &common.out {
                fs::create_dir_all(dir)?;
                pair.write_text(dir.join(format!("golay_{k}.txt")))?;
            }
        }
    }
    Ok(if ok { 0 } else { GOLAY_FAILED })
}

fn mps(common: &Common, s: &Scenario) -> Result<()> {
    let spectra = s
        .fiber
        .core_ids()
        .into_iter()
        .map(|id| pipeline::mps_spectra(s, id))
        .collect::<Result<Vec<_>>>()?;
    let summary = csv(|w| {
        writeln!(w, "core,pmd_ps,group_delay_at_probe_s")?;
        for sp in &spectra {
            let probe = s.mps.probe_wavelength_nm;
            let tau = sp
                .group_delay
                .iter()
                .min_by(|a, b| (a.0 - probe).abs().total_cmp(&(b.0 - probe).abs()))
                .map_or(f64::NAN, |p| p.1);
            writeln!(w, "{},{},{:e}", sp.core_id, sp.pmd_s * 1e12, tau)?;
        }
        Ok(())
    })?;
    if common.format == Some(Format::Json) {
        let value: Vec<_> = spectra
            .iter()
            .map(|sp| serde_json::json!({"core": sp.core_id, "pmd_ps": sp.pmd_s * 1e12}))
            .collect();
        return emit(common, "pmd.json", &json(&value));
    }
    emit(common, "pmd.csv", &summary)?;
    if let Some(dir) = &common.out {
        for sp in &spectra {
            let id = sp.core_id;
            write_file(dir, &format!("tau_core{id}.csv"), |w| {
                write_spectrum_csv(w, "group_delay_s", &sp.group_delay)
            })?;
            write_file(dir, &format!("cd_core{id}.csv"), |w| {
                write_spectrum_csv(w, "dispersion_ps_per_nm_km", &sp.dispersion)
            })?;
            write_file(dir, &format!("dgd_core{id}.csv"), |w| {
                write_spectrum_csv(w, "dgd_s", &sp.dgd)
            })?;
        }
    }
    Ok(())
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(dir.join(name), buf)?;
    Ok(())
}
