//! Batch driver behind the `fdlab` binary.
//!
//! Exit codes: 0 success, 1 acceptance failure, 2 invalid input, 3 solver failure.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::acceptance::{run_all, write_reports_csv, AcceptanceOptions};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::flow::{run_flow, uniform_samples, FlowState, FunctionalSet, Variables};
use crate::functionals::{entropy_suite, gn_deficit, relative_values, rstar_remainder, weighted_remainder, FunctionalReport};
use crate::params::ParamSet;
use crate::region::{region_map, write_region_csv};
use crate::spectral::{
    assemble_mode, hardy_poincare_constant, solve_spectrum, symmetry_threshold_via_q, write_spectrum_csv,
    write_threshold_csv, Family,
};

#[derive(Debug, Parser)]
#[command(name = "fdlab", version, about = "Entropy methods for weighted fast diffusion: flows, functionals, spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file; defaults apply to missing sections.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides [output].dir); created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// section.field=value, applied after the file. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Print the derived parameter set.
    Derive,
    /// Run a flow and write the sampled functionals.
    Simulate,
    /// Run a flow and write every functional with its terms at each sample.
    Trace,
    /// Eigenvalues of the linearized operator for ℓ = 0..ℓ_max.
    Spectrum,
    /// Locate the symmetry-breaking threshold along β = γ + 2(α − 1).
    Threshold,
    /// Classify a (γ, β) sweep.
    RegionMap,
    /// Gagliardo–Nirenberg deficit of w = u^{1/(2q)} for the configured datum.
    GnDeficit,
    /// Run the acceptance suite.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Derive => "derive",
            Command::Simulate => "simulate",
            Command::Trace => "trace",
            Command::Spectrum => "spectrum",
            Command::Threshold => "threshold",
            Command::RegionMap => "region-map",
            Command::GnDeficit => "gn-deficit",
            Command::Verify => "verify",
        }
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let text = match &cli.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::parse(&text, &cli.overrides)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

struct Ctx {
    cfg: RunConfig,
    command: Command,
}

impl Ctx {
    fn meta(&self, ps: Option<&ParamSet>) -> Vec<(String, String)> {
        let mut m = vec![
            ("command".to_string(), self.command.name().to_string()),
            ("config_hash".to_string(), self.cfg.hash()),
            ("fdlab_core".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ];
        if let Some(ps) = ps {
            let rec: Vec<String> = ps.records().iter().map(|(k, v)| format!("{k}={v}")).collect();
            m.push(("params".to_string(), rec.join(" ")));
        }
        m
    }

    /// Write `name` in the output directory through a temporary file and a rename.
    fn write<F>(&self, name: &str, body: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        write_atomic(&self.cfg.output.dir, name, body)
    }
}

fn write_atomic<F>(dir: &Path, name: &str, body: F) -> Result<PathBuf>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}

fn execute(cli: &Cli) -> Result<i32> {
    let ctx = Ctx { cfg: load(cli)?, command: cli.command };
    match cli.command {
        Command::Derive => derive(&ctx),
        Command::Simulate => simulate(&ctx),
        Command::Trace => trace(&ctx),
        Command::Spectrum => spectrum(&ctx),
        Command::Threshold => threshold(&ctx),
        Command::RegionMap => region(&ctx),
        Command::GnDeficit => gn(&ctx),
        Command::Verify => verify(&ctx),
    }
}

fn derive(ctx: &Ctx) -> Result<i32> {
    let ps = ctx.cfg.params()?;
    let rec = ps.records();
    let width = rec.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &rec {
        println!("{k:<width$}  {v}");
    }
    let path = ctx.write("params.csv", |w| {
        for (k, v) in ctx.meta(None) {
            writeln!(w, "# {k}: {v}")?;
        }
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["key", "value"])?;
        for (k, v) in &rec {
            c.write_record([*k, v.as_str()])?;
        }
        c.flush()?;
        Ok(())
    })?;
    eprintln!("wrote {}", path.display());
    Ok(0)
}

fn initial_state(ctx: &Ctx) -> Result<(ParamSet, FlowState)> {
    let ps = ctx.cfg.params()?;
    let grid = ctx.cfg.grid(&ps)?;
    let datum = ctx.cfg.datum(&ps, &grid)?;
    Ok((ps, FlowState::new(datum, 0.0, ctx.cfg.time.variables, ps)?))
}

fn simulate(ctx: &Ctx) -> Result<i32> {
    let (ps, s0) = initial_state(ctx)?;
    let t = &ctx.cfg.time;
    let samples = uniform_samples(t.horizon, t.samples.max(1));
    let (trace, failure) = match run_flow(&s0, t.horizon, &samples, &FunctionalSet::all(), &ctx.cfg.stepper()) {
        Ok(tr) => (tr, None),
        Err(f) => (f.partial, Some(f.error)),
    };
    let path = ctx.write("trace.csv", |w| trace.write_csv(w, &ctx.meta(Some(&ps))))?;
    eprintln!("wrote {} ({} rows)", path.display(), trace.rows.len());
    match failure {
        Some(e) => Err(e),
        None => Ok(0),
    }
}

fn reports_for(s: &FlowState) -> Vec<FunctionalReport> {
    let mut out = Vec::new();
    if let Ok(e) = entropy_suite(&s.field, &s.ps, s.variables) {
        out.extend(e.reports(&s.field, &s.ps));
    }
    if s.variables == Variables::SelfSimilar && s.ps.is_unweighted() {
        out.extend(rstar_remainder(&s.field, &s.ps).ok());
    }
    out.extend(weighted_remainder(&s.field, &s.ps, None).ok());
    out
}

fn trace(ctx: &Ctx) -> Result<i32> {
    let (ps, s0) = initial_state(ctx)?;
    let t = &ctx.cfg.time;
    if !(t.horizon > 0.0) {
        return Err(Error::Argument(format!("horizon {} must be positive", t.horizon)));
    }
    let times = uniform_samples(t.horizon, t.samples.max(1));
    let mut rows: Vec<(f64, String, String, f64)> = Vec::new();
    let push = |s: &FlowState, rows: &mut Vec<(f64, String, String, f64)>| {
        for r in reports_for(s) {
            rows.push((s.time, r.name.clone(), "value".into(), r.value));
            rows.extend(r.terms.iter().map(|(k, v)| (s.time, r.name.clone(), k.clone(), *v)));
        }
        if s.variables == Variables::SelfSimilar {
            let (e, i) = relative_values(&s.field, &s.ps);
            rows.push((s.time, "E_rel".into(), "value".into(), e));
            rows.push((s.time, "I_rel".into(), "value".into(), i));
        }
    };
    push(&s0, &mut rows);
    let mut state = s0;
    let mut failure = None;
    for w in times.windows(2) {
        match run_flow(&state, w[1] - w[0], &[], &FunctionalSet::none(), &ctx.cfg.stepper()) {
            Ok(tr) => {
                state = tr.final_state.ok_or_else(|| Error::Argument("flow ended without a final state".into()))?;
                push(&state, &mut rows);
            }
            Err(f) => {
                failure = Some(f.error);
                break;
            }
        }
    }
    let path = ctx.write("functionals.csv", |w| {
        for (k, v) in ctx.meta(Some(&ps)) {
            writeln!(w, "# {k}: {v}")?;
        }
        writeln!(w, "# variables: {}", ctx.cfg.time.variables.as_str())?;
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["time", "name", "term", "value"])?;
        for (t, n, k, v) in &rows {
            c.write_record([format!("{t:.12e}"), n.clone(), k.clone(), format!("{v:.12e}")])?;
        }
        c.flush()?;
        Ok(())
    })?;
    eprintln!("wrote {} ({} rows)", path.display(), rows.len());
    match failure {
        Some(e) => Err(e),
        None => Ok(0),
    }
}

fn spectrum(ctx: &Ctx) -> Result<i32> {
    let ps = ctx.cfg.params()?;
    let grid = ctx.cfg.grid(&ps)?;
    let sc = &ctx.cfg.spectral;
    let spectra = (0..=sc.ell_max)
        .into_par_iter()
        .map(|ell| solve_spectrum(&assemble_mode(&ps, ell, &grid)?, sc.count))
        .collect::<Result<Vec<_>>>()?;
    let mut meta = ctx.meta(Some(&ps));
    meta.push(("grid".into(), grid.describe()));
    meta.push(("convention".into(), spectra[0].convention.statement.into()));
    if sc.ell_max >= 2 {
        let hp = hardy_poincare_constant(&ps, &grid, sc.ell_max)?;
        meta.push(("lambda1".into(), format!("{:.12e} (ell = {})", hp.lambda1, hp.ell)));
        println!("lambda1 = {:.12e} at ell = {}", hp.lambda1, hp.ell);
    }
    let path = ctx.write("spectrum.csv", |w| write_spectrum_csv(&spectra, w, &meta))?;
    eprintln!("wrote {}", path.display());
    Ok(0)
}

fn threshold(ctx: &Ctx) -> Result<i32> {
    let ps = ctx.cfg.params()?;
    let family = Family { d: ps.d, gamma: ps.gamma, p: ps.p };
    let th = symmetry_threshold_via_q(&family, ctx.cfg.bracket()?, &ctx.cfg.qgrid(), ctx.cfg.spectral.ell_max, ctx.cfg.spectral.tol)?;
    let predicted = family.predicted_alpha();
    println!("alpha = {:.9}  beta = {:.9}", th.alpha, th.beta);
    if let Some(a) = predicted {
        println!("alpha_FS fixed point = {a:.9}  gap = {:.3e}", th.alpha - a);
    }
    let mut meta = ctx.meta(None);
    meta.push(("family".into(), format!("d={} gamma={} p={}", family.d, family.gamma, family.p)));
    meta.push(("alpha".into(), format!("{:.12e}", th.alpha)));
    meta.push(("beta".into(), format!("{:.12e}", th.beta)));
    if let Some(a) = predicted {
        meta.push(("alpha_fs".into(), format!("{a:.12e}")));
    }
    let path = ctx.write("threshold.csv", |w| write_threshold_csv(&th, w, &meta))?;
    eprintln!("wrote {}", path.display());
    Ok(0)
}

fn region(ctx: &Ctx) -> Result<i32> {
    let p = ctx.cfg.params()?.p;
    let (g, b) = ctx.cfg.axes()?;
    let confirm = ctx.cfg.sweep.confirm.then(|| (ctx.cfg.qgrid(), ctx.cfg.spectral.ell_max));
    let cells = region_map(ctx.cfg.problem.d, g, b, p, confirm)?;
    let path = ctx.write("region_map.csv", |w| write_region_csv(&cells, w, &ctx.meta(None)))?;
    eprintln!("wrote {} ({} cells)", path.display(), cells.len());
    Ok(0)
}

fn gn(ctx: &Ctx) -> Result<i32> {
    let ps = ctx.cfg.params()?;
    let grid = ctx.cfg.grid(&ps)?;
    let u = ctx.cfg.datum(&ps, &grid)?;
    let w = u.map(|v| v.powf(1.0 / (2.0 * ps.q())));
    let rep = gn_deficit(&w, &ps)?;
    println!("deficit = {:.12e}  relative = {:.12e}", rep.value, rep.term("relative").unwrap_or(f64::NAN));
    let path = ctx.write("gn_deficit.csv", |out| {
        for (k, v) in ctx.meta(Some(&ps)) {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "# grid: {}", rep.grid)?;
        for warn in &rep.warnings {
            writeln!(out, "# warning: {warn}")?;
        }
        let mut c = csv::Writer::from_writer(out);
        c.write_record(["name", "term", "value"])?;
        rep.write_csv_rows(&mut c)?;
        c.flush()?;
        Ok(())
    })?;
    eprintln!("wrote {}", path.display());
    Ok(0)
}

fn verify(ctx: &Ctx) -> Result<i32> {
    let v = &ctx.cfg.verify;
    if !(v.resolution > 0.0) {
        return Err(Error::Config(format!("[verify].resolution = {} must be positive", v.resolution)));
    }
    let opts = AcceptanceOptions { only: v.criteria.clone(), resolution: v.resolution };
    let reports = run_all(&opts)?;
    for r in &reports {
        println!("{}", r.line());
    }
    let path = ctx.write("acceptance.csv", |w| write_reports_csv(&reports, w, &ctx.meta(None)))?;
    eprintln!("wrote {}", path.display());
    Ok(if reports.iter().all(|r| r.passed) { 0 } else { 1 })
}
