//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure (`compare` mismatch),
//! 2 usage / parse / run errors.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::Matrix3;
use starkecho::analysis::{
    clip_window, compare, detect_echo_with_threshold, efficiency_sweep, oracle_predict, sweep_2d,
    AnalysisError,
};
use starkecho::csvio::{self, atomic_write};
use starkecho::dynamics::{
    propagate_ensemble, ControlDetuning, DecayRates, Method, PropagationConfig,
};
use starkecho::ensemble::build_ensemble;
use starkecho::manifest::{NamedEcho, RunManifest};
use starkecho::sequence::{
    parse_sequence, preset, serialize_sequence, validate, Preset, PulseSequence, PRESET_NAMES,
};
use starkecho::svg::{LinePlot, Series};
use starkecho::trace::TraceSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "starkecho", version, about = "Photon-echo pulse-sequence simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a sequence and write trace.csv, echoes.json, manifest.json.
    Run(RunArgs),
    /// Sweep the pre-rephasing Stark phase and record echo amplitudes.
    Sweep(SweepArgs),
    /// Print the analytic phase-ledger prediction for a sequence.
    Oracle(OracleArgs),
    /// Render a trace or sweep CSV as a standalone SVG line plot.
    Plot(PlotArgs),
    /// Run simulation and oracle, check them against each other.
    Compare(CompareArgs),
    /// Print the canonical text of a named preset.
    Preset(PresetArgs),
}

#[derive(Args)]
struct SeqSource {
    /// Sequence file in the pulse-program text format.
    file: Option<PathBuf>,
    /// Use a built-in preset instead of a file.
    #[arg(long, value_parser = PRESET_NAMES.to_vec())]
    preset: Option<String>,
}

impl SeqSource {
    fn load(&self) -> Result<PulseSequence> {
        match (&self.file, &self.preset) {
            (None, Some(name)) => Ok(preset(Preset::from_name(name)?)),
            (Some(path), None) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read sequence file '{}'", path.display()))?;
                parse_sequence(&text)
                    .map_err(|e| anyhow!("{}: {e}", path.display()))
            }
            (None, None) => bail!("provide a sequence file or --preset NAME"),
            (Some(_), Some(_)) => bail!("provide either a sequence file or --preset, not both"),
        }
    }
}

#[derive(Args)]
struct CommonRunOpts {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the sequence's grid step, us.
    #[arg(long)]
    dt: Option<f64>,
    /// Integrator: exact (piecewise unitary) or rk4.
    #[arg(long, value_parser = ["exact", "rk4"])]
    method: Option<String>,
    /// 3x3 CSV file of decay rates (1/us); implies the rk4 method.
    #[arg(long)]
    gamma: Option<PathBuf>,
    /// Propagate groups sequentially instead of on the thread pool.
    #[arg(long)]
    serial: bool,
    /// Apply the group detuning to the control transition during control
    /// pulses.
    #[arg(long)]
    control_group_delta: bool,
}

impl CommonRunOpts {
    fn apply(&self, seq: &mut PulseSequence) -> Result<(PropagationConfig, DecayRates)> {
        if let Some(dt) = self.dt {
            seq.dt = dt;
        }
        let gamma = match &self.gamma {
            None => DecayRates::none(),
            Some(path) => read_gamma(path)?,
        };
        let mut config = PropagationConfig::from_sequence(seq);
        config.parallel = !self.serial;
        if self.control_group_delta {
            config.control_detuning = ControlDetuning::GroupDelta;
        }
        config.method = match self.method.as_deref() {
            Some("exact") => Method::ExactPiecewise,
            Some("rk4") => Method::Rk4,
            Some(other) => bail!("unknown method '{other}'"),
            None if !gamma.is_zero() => Method::Rk4,
            None => Method::ExactPiecewise,
        };
        Ok((config, gamma))
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SeqSource,
    /// Reproduce a previous run from its manifest.
    #[arg(long, conflicts_with_all = ["file", "preset"])]
    from_manifest: Option<PathBuf>,
    #[command(flatten)]
    opts: CommonRunOpts,
    /// Also write per-group rho_12 series to groups.csv.
    #[arg(long)]
    per_group: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SeqSource,
    #[command(flatten)]
    opts: CommonRunOpts,
    /// Stark phase grid start:end:count; accepts pi expressions (pi/2, 2pi).
    #[arg(long, default_value = "0:2pi:33")]
    phi: String,
    /// Also write the 2D (phase x detuning-offset) map to sweep2d.csv.
    #[arg(long = "2d")]
    two_d: bool,
    /// Detuning-offset grid for --2d, MHz, start:end:count.
    #[arg(long, default_value = "-0.5:0.5:5")]
    offsets: String,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    source: SeqSource,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// trace.csv or sweep.csv produced by run/sweep.
    csv: PathBuf,
    /// Comma-separated column names to plot.
    #[arg(long, default_value = "im12")]
    columns: String,
    /// Output SVG path.
    #[arg(long, default_value = "plot.svg")]
    out: PathBuf,
    /// Manifest of the run; shades pulse intervals.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "")]
    title: String,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: SeqSource,
    #[command(flatten)]
    opts: CommonRunOpts,
}

#[derive(Args)]
struct PresetArgs {
    /// Preset name.
    #[arg(value_parser = PRESET_NAMES.to_vec())]
    name: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Run(args) => cmd_run(args).map(|_| ExitCode::SUCCESS),
        Cmd::Sweep(args) => cmd_sweep(args).map(|_| ExitCode::SUCCESS),
        Cmd::Oracle(args) => cmd_oracle(args).map(|_| ExitCode::SUCCESS),
        Cmd::Plot(args) => cmd_plot(args).map(|_| ExitCode::SUCCESS),
        Cmd::Compare(args) => cmd_compare(args),
        Cmd::Preset(args) => {
            print!("{}", serialize_sequence(&preset(Preset::from_name(&args.name)?)));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read_gamma(path: &Path) -> Result<DecayRates> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read gamma file '{}'", path.display()))?;
    let mut m = Matrix3::zeros();
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != 3 {
        bail!("gamma file must have 3 rows of 3 comma-separated rates");
    }
    for (i, row) in rows.iter().enumerate() {
        let vals: Vec<&str> = row.split(',').collect();
        if vals.len() != 3 {
            bail!("gamma row {} must have 3 values", i + 1);
        }
        for (j, v) in vals.iter().enumerate() {
            let rate: f64 = v.trim().parse().with_context(|| format!("bad rate '{v}'"))?;
            if rate < 0.0 {
                bail!("decay rates must be nonnegative");
            }
            m[(i, j)] = rate;
        }
    }
    Ok(DecayRates(m))
}

fn check_valid(seq: &PulseSequence) -> Result<()> {
    let violations = validate(seq);
    if violations.is_empty() {
        return Ok(());
    }
    let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    bail!("invalid sequence:\n  {}", msgs.join("\n  "));
}

/// Detect echoes at the oracle-predicted times, one shared bare-reference
/// run for the thresholds.
fn detect_predicted_echoes(traces: &TraceSet) -> Result<Vec<NamedEcho>> {
    let prediction = match oracle_predict(&traces.sequence) {
        Ok(p) => p,
        Err(AnalysisError::Unclassifiable { .. }) | Err(AnalysisError::BadStructure(_)) => {
            return Ok(Vec::new())
        }
        Err(e) => return Err(e.into()),
    };
    if prediction.echoes.is_empty() {
        return Ok(Vec::new());
    }
    let bare = starkecho::analysis::bare_counterpart_traces(traces)?;
    let mut out = Vec::new();
    for echo in &prediction.echoes {
        let halfwidth = clip_window(&traces.sequence, echo.time, 1.0);
        if halfwidth < 2.0 * traces.config.dt {
            continue;
        }
        let bare_report = detect_echo_with_threshold(&bare, echo.time, halfwidth, 0.0)?;
        let threshold = 0.05 * bare_report.amplitude;
        let report = detect_echo_with_threshold(traces, echo.time, halfwidth, threshold)?;
        out.push(NamedEcho { name: echo.name.clone(), report });
    }
    Ok(out)
}

fn run_traces(
    seq: &PulseSequence,
    config: &PropagationConfig,
    gamma: &DecayRates,
) -> Result<TraceSet> {
    let ensemble = build_ensemble(&seq.ensemble)?;
    Ok(propagate_ensemble(seq, &ensemble, gamma, config)?)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let started = Instant::now();
    let (mut seq, config_override) = match &args.from_manifest {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read manifest '{}'", path.display()))?;
            let manifest = RunManifest::from_json(&text).context("malformed manifest")?;
            let (seq, config, gamma) = manifest.replay_inputs().map_err(|e| anyhow!(e))?;
            (seq, Some((config, gamma)))
        }
        None => (args.source.load()?, None),
    };
    let (mut config, mut gamma) = args.opts.apply(&mut seq)?;
    if let Some((c, g)) = config_override {
        config = c;
        gamma = g;
        config.parallel = !args.opts.serial;
    }
    config.keep_per_group = args.per_group;
    check_valid(&seq)?;

    let mut traces = run_traces(&seq, &config, &gamma)?;
    let echoes = detect_predicted_echoes(&traces)?;

    std::fs::create_dir_all(&args.opts.out)
        .with_context(|| format!("cannot create '{}'", args.opts.out.display()))?;
    let out = &args.opts.out;
    atomic_write(&out.join("trace.csv"), csvio::trace_csv(&traces).as_bytes())?;
    if let Some(groups) = csvio::groups_csv(&traces) {
        atomic_write(&out.join("groups.csv"), groups.as_bytes())?;
    }
    traces.per_group = None;
    atomic_write(
        &out.join("echoes.json"),
        serde_json::to_string_pretty(&echoes)?.as_bytes(),
    )?;
    let manifest = RunManifest::new(
        &seq,
        &traces.ensemble,
        &config,
        &gamma,
        echoes.clone(),
        started.elapsed().as_secs_f64() * 1e3,
    );
    atomic_write(&out.join("manifest.json"), manifest.to_json().as_bytes())?;

    println!(
        "wrote {} ({} rows), echoes.json ({} echoes), manifest.json",
        out.join("trace.csv").display(),
        traces.len(),
        echoes.len()
    );
    for e in &echoes {
        println!(
            "  {}: {} at {:.2} us (|Im| peak {:.4e}, threshold {:.4e})",
            e.name, e.report.character, e.report.echo_time, e.report.amplitude,
            e.report.silence_threshold
        );
    }
    Ok(())
}

/// Parse `start:end:count` with pi expressions, inclusive endpoints.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("grid '{spec}' must be start:end:count");
    }
    let a = parse_angle(parts[0])?;
    let b = parse_angle(parts[1])?;
    let n: usize = parts[2].parse().with_context(|| format!("bad count '{}'", parts[2]))?;
    if n == 0 {
        bail!("grid count must be at least 1");
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect())
}

/// `pi`, `2pi`, `pi/2`, `3pi/4`, `0.25pi`, or a plain number.
fn parse_angle(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Some(idx) = s.find("pi") {
        let (pre, post) = (&s[..idx], &s[idx + 2..]);
        let mut v = if pre.is_empty() || pre == "+" {
            1.0
        } else if pre == "-" {
            -1.0
        } else {
            pre.parse::<f64>().with_context(|| format!("bad angle '{s}'"))?
        };
        v *= PI;
        if let Some(den) = post.strip_prefix('/') {
            let d: f64 = den.parse().with_context(|| format!("bad angle '{s}'"))?;
            v /= d;
        } else if !post.is_empty() {
            bail!("bad angle '{s}'");
        }
        Ok(v)
    } else {
        s.parse::<f64>().with_context(|| format!("bad angle '{s}'"))
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut seq = args.source.load()?;
    let (_config, gamma) = args.opts.apply(&mut seq)?;
    if !gamma.is_zero() {
        bail!("sweeps run without decay; drop --gamma");
    }
    check_valid(&seq)?;
    let phis = parse_grid(&args.phi)?;

    let rows = efficiency_sweep(&seq, &phis)?;
    std::fs::create_dir_all(&args.opts.out)?;
    atomic_write(&args.opts.out.join("sweep.csv"), csvio::sweep_csv(&rows).as_bytes())?;
    println!("wrote {} ({} rows)", args.opts.out.join("sweep.csv").display(), rows.len());

    if args.two_d {
        let offsets = parse_grid(&args.offsets)?;
        let grid = sweep_2d(&seq, &phis, &offsets)?;
        atomic_write(&args.opts.out.join("sweep2d.csv"), csvio::sweep2d_csv(&grid).as_bytes())?;
        println!(
            "wrote {} ({} x {})",
            args.opts.out.join("sweep2d.csv").display(),
            offsets.len(),
            phis.len()
        );
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let seq = args.source.load()?;
    check_valid(&seq)?;
    let prediction = oracle_predict(&seq)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&prediction)?);
        return Ok(());
    }
    println!("phase ledger:");
    for entry in &prediction.ledger {
        println!("  {:>6.2} us  {:<4} {}", entry.t_on, entry.pulse, entry.action);
    }
    if prediction.echoes.is_empty() {
        println!("no echoes predicted (no data/rephasing structure)");
    }
    for e in &prediction.echoes {
        println!(
            "{}: {} at {} us (quadrature {:?}, net Stark phase {:+.4} rad)",
            e.name, e.character, e.time, e.quadrature, e.net_phase
        );
    }
    if prediction.balanced {
        println!("note: balanced Stark pair before e1 - behaves like the bare sequence");
    }
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.csv)
        .with_context(|| format!("cannot read '{}'", args.csv.display()))?;
    let table = csvio::read_csv(&text).map_err(|e| anyhow!("{}: {e}", args.csv.display()))?;
    let (x_name, x_label) = if table.column("time_us").is_some() {
        ("time_us", "time (us)")
    } else if table.column("phi_rad").is_some() {
        ("phi_rad", "Stark phase (rad)")
    } else {
        bail!(
            "schema mismatch: '{}' has neither a time_us nor a phi_rad column",
            args.csv.display()
        );
    };
    let xs = table.column(x_name).unwrap();

    let mut series = Vec::new();
    for name in args.columns.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let ys = table
            .column(name)
            .ok_or_else(|| anyhow!("schema mismatch: no column '{name}'"))?;
        series.push(Series {
            label: name.to_string(),
            points: xs.iter().copied().zip(ys.iter().copied()).collect(),
        });
    }
    if series.is_empty() {
        bail!("no columns selected");
    }

    let mut shaded = Vec::new();
    if let Some(path) = &args.manifest {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest '{}'", path.display()))?;
        let manifest = RunManifest::from_json(&text).context("malformed manifest")?;
        let (seq, _, _) = manifest.replay_inputs().map_err(|e| anyhow!(e))?;
        shaded = seq.pulses.iter().map(|p| (p.t_on, p.t_off())).collect();
    }

    let plot = LinePlot {
        title: args.title.clone(),
        x_label: x_label.to_string(),
        y_label: args.columns.clone(),
        series,
        shaded,
        ..Default::default()
    };
    atomic_write(&args.out, plot.render().as_bytes())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode> {
    let mut seq = args.source.load()?;
    let (config, gamma) = args.opts.apply(&mut seq)?;
    check_valid(&seq)?;
    let prediction = oracle_predict(&seq)?;
    let traces = run_traces(&seq, &config, &gamma)?;
    let report = compare(&traces, &prediction)?;

    for c in &report.checks {
        let verdict = if c.pass { "pass" } else { "FAIL" };
        println!(
            "{verdict} {}: predicted {} at {} us; simulated {} at {} us (|Im| peak {:.4e})",
            c.name,
            c.predicted_character,
            c.predicted_time,
            c.detected_character,
            c.detected_time,
            c.detected_amplitude
        );
    }
    if report.checks.is_empty() {
        println!("no echoes predicted; nothing to check");
    }
    if let Some(note) = &report.note {
        println!("note: {note}");
    }
    if report.pass {
        println!("oracle and simulation agree");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("oracle and simulation disagree");
        Ok(ExitCode::from(1))
    }
}
