//! Command-line front end: `run`, `baseline`, `report` and `check`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use parafem::adapt::{read_records, run, run_baseline, AdaptConfig, AdaptRecord, CsvSink, RecordSink};
use parafem::bench::{make_case, read_report, write_dat, write_svg, ConvergenceReport};
use parafem::config::Config;
use parafem::mesh::{gmsh_version, GeneratorKind};

#[derive(Debug, Parser)]
#[command(
    name = "parafem",
    version,
    about = "Surrogate-enhanced hr-adaptive FEM for 2D heat problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Size-field driver with the neural surrogate.
    Run { case: String },
    /// Bisection baseline with Dörfler marking.
    Baseline { case: String },
    /// Convergence report from a records or report CSV.
    Report { input: PathBuf },
    /// Probe the mesh generator.
    Check,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long, global = true)]
    etol: Option<f64>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,
    #[arg(long = "theta-r", global = true)]
    theta_r: Option<f64>,
    #[arg(long, global = true, value_parser = parse_generator)]
    generator: Option<GeneratorKind>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

fn parse_generator(s: &str) -> Result<GeneratorKind, String> {
    s.parse().map_err(|e: parafem::Error| e.to_string())
}

type CliResult<T> = Result<T, String>;

/// Runs the command line `args` (including the program name) and returns
/// the process exit code. Progress goes to `out`, diagnostics to `err`.
pub fn run_cli<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let config = Config::load(cli.opts.config.as_deref(), std::env::vars()).map_err(|e| e.to_string())?;
    match &cli.command {
        Command::Run { case } => simulate(case, false, &config, &cli.opts, out),
        Command::Baseline { case } => simulate(case, true, &config, &cli.opts, out),
        Command::Report { input } => report(input, &cli.opts.out, out),
        Command::Check => check(&config, &cli.opts, out),
    }
}

fn adapt_config(case: &parafem::bench::ManufacturedCase, config: &Config, o: &Overrides) -> CliResult<AdaptConfig> {
    let mut cfg = config.adapt_config(case);
    if let Some(v) = o.etol {
        cfg.etol = v;
    }
    if let Some(v) = o.tau {
        cfg.tau = v;
    }
    if let Some(v) = o.t_end {
        cfg.t_end = v;
    }
    if let Some(v) = o.theta_r {
        cfg.theta_r = v;
    }
    if let Some(v) = o.generator {
        cfg.generator.kind = v;
    }
    if let Some(v) = o.seed {
        cfg.train.seed = v;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| format!("cannot create {}: {e}", path.display()))
}

fn simulate(name: &str, baseline: bool, config: &Config, o: &Overrides, out: &mut dyn Write) -> CliResult<()> {
    let case = make_case(name).map_err(|e| e.to_string())?;
    let cfg = adapt_config(&case, config, o)?;
    if cfg.generator.kind == GeneratorKind::External && !cfg.generator.fallback_on_missing {
        gmsh_version(&cfg.generator).map_err(|e| format!("{e} (use --generator fallback)"))?;
    }
    fs::create_dir_all(&o.out).map_err(|e| format!("cannot create {}: {e}", o.out.display()))?;
    let problem = case.problem(cfg.t_end);
    let records_path = o.out.join("records.csv");
    let mut sink = Progress {
        csv: CsvSink::new(create(&records_path)?),
        out,
    };
    let records = if baseline {
        run_baseline(&problem, &cfg, &mut sink)
    } else {
        run(&problem, &cfg, &mut sink)
    }
    .map_err(|e| e.to_string())?;
    let report = ConvergenceReport::from_records(&records).map_err(|e| e.to_string())?;
    write_report(&report, &o.out)?;
    writeln!(sink.out, "{}", report.summary()).map_err(|e| e.to_string())?;
    writeln!(sink.out, "wrote {}", o.out.display()).map_err(|e| e.to_string())?;
    Ok(())
}

/// Streams records to the CSV and prints one line per completed step.
struct Progress<'a, W: Write> {
    csv: CsvSink<W>,
    out: &'a mut dyn Write,
}

impl<W: Write> RecordSink for Progress<'_, W> {
    fn record(&mut self, rec: &AdaptRecord) -> parafem::Result<()> {
        self.csv.record(rec)?;
        let novs: Vec<String> = rec.iterations.iter().map(|i| i.nov.to_string()).collect();
        writeln!(
            self.out,
            "step {} (t = {:.3}): {} iterations, NOV {}, estimator {:.3e}",
            rec.step,
            rec.time,
            rec.iterations.len(),
            novs.join(" "),
            rec.last().eta
        )?;
        Ok(())
    }
}

fn write_report(report: &ConvergenceReport, dir: &Path) -> CliResult<()> {
    let io = |e: parafem::Error| e.to_string();
    let mut f = create(&dir.join("report.csv"))?;
    report.write_csv(&mut f).map_err(io)?;
    let mut series: Vec<(&str, Vec<(f64, f64)>)> = Vec::new();
    for (file, finals, estimator, label) in [
        ("error_vs_nov.dat", false, false, "gradient error"),
        ("error_vs_nov_final.dat", true, false, "gradient error (final)"),
        ("estimator_vs_nov.dat", false, true, "estimator"),
        ("estimator_vs_nov_final.dat", true, true, "estimator (final)"),
    ] {
        let pts = report.points(finals, estimator);
        if pts.is_empty() {
            continue;
        }
        let column = if estimator { "eta_global" } else { "grad_error" };
        write_dat(&mut create(&dir.join(file))?, &format!("nov {column}"), &pts).map_err(io)?;
        if !finals {
            series.push((label, pts));
        }
    }
    let refs: Vec<(&str, &[(f64, f64)])> = series.iter().map(|(n, p)| (*n, p.as_slice())).collect();
    write_svg(
        &mut create(&dir.join("convergence.svg"))?,
        "error and estimator vs NOV",
        &refs,
    )
    .map_err(io)?;
    Ok(())
}

fn report(input: &Path, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let open = || {
        File::open(input)
            .map(BufReader::new)
            .map_err(|e| format!("cannot open {}: {e}", input.display()))
    };
    let header = open()?
        .lines()
        .map_while(Result::ok)
        .find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .ok_or_else(|| format!("{} is empty", input.display()))?;
    let rep = if header.trim() == parafem::bench::REPORT_HEADER {
        read_report(open()?)
    } else {
        read_records(open()?).and_then(|r| ConvergenceReport::from_records(&r))
    }
    .map_err(|e| format!("{}: {e}", input.display()))?;
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    write_report(&rep, dir)?;
    writeln!(out, "{}", rep.summary()).map_err(|e| e.to_string())?;
    Ok(())
}

fn check(config: &Config, o: &Overrides, out: &mut dyn Write) -> CliResult<()> {
    let case = make_case("rotation").map_err(|e| e.to_string())?;
    let cfg = adapt_config(&case, config, o)?.generator;
    let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(|e| e.to_string());
    w(out, format!("parafem {}", env!("CARGO_PKG_VERSION")))?;
    match gmsh_version(&cfg) {
        Ok(v) => w(out, format!("gmsh {v} ({})", cfg.gmsh.display()))?,
        Err(e) if cfg.kind == GeneratorKind::External => return Err(e.to_string()),
        Err(e) => w(out, format!("gmsh unavailable: {e}"))?,
    }
    let kind = match cfg.kind {
        GeneratorKind::External => "external",
        GeneratorKind::Fallback => "fallback",
    };
    w(out, format!("generator: {kind}"))
}
