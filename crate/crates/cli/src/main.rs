use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use thermal_cqed::casimir::{build_cp_field, line_shift_rays, write_rays_csv};
use thermal_cqed::cavity::{cooperativity, Vec3};
use thermal_cqed::config::{Manifest, RunConfig, Sampler};
use thermal_cqed::ensemble::{
    run_delayed_pair, run_ensemble, run_single, with_workers, TransitRun,
};
use thermal_cqed::trajectory::{write_trajectories_csv, Preset};
use thermal_cqed::units::{angular_to_ghz, angular_to_mhz, C, KB, NM, NS};
use thermal_cqed::Error;

const TABLE_KAPPA: f64 = 4.0e10;
const TABLE_G_GHZ: f64 = 15.0;
const TABLE_COOPERATIVITY: f64 = 18.0;
const QUOTED_TRANSIT_NS: f64 = 1.0;

#[derive(Parser, Debug)]
#[command(
    name = "tcqed",
    version,
    about = "Thermal atoms crossing a photonic-crystal nanobeam cavity"
)]
struct Cli {
    /// TOML run configuration; flags given here take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (config: output_dir).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Random seed (config: seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core (config: workers).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Leave Casimir-Polder shifts out of the dynamics (config: casimir.enabled).
    #[arg(long, global = true)]
    no_cp: bool,
    /// Detuning grid points (config: sweep.points).
    #[arg(long, global = true)]
    points: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cavity parameter report against the reference table.
    Params,
    /// One atom along a preset path (config: single.preset).
    Single {
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
    },
    /// Two atoms on the central path, the second delayed (config: pair.delay_ns).
    Pair {
        /// Delay in ns.
        #[arg(long)]
        delay: Option<f64>,
    },
    /// Averaged spectrum over a sampled ensemble (config: ensemble.count, ensemble.sampler).
    Ensemble {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, value_enum)]
        sampler: Option<SamplerArg>,
    },
    /// Tabulate the Casimir-Polder line shift (config: casimir.grid_spacing_nm).
    CpField {
        /// Grid spacing in nm.
        #[arg(long)]
        spacing: Option<f64>,
    },
    /// Rerun a manifest and compare output hashes (writes to <manifest dir>/replay unless --output is given).
    Replay { manifest: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    Fig4a,
    Fig4b,
    Fig4c,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Fig4a => Preset::Fig4a,
            PresetArg::Fig4b => Preset::Fig4b,
            PresetArg::Fig4c => Preset::Fig4c,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SamplerArg {
    Thermal,
    Liad,
}

/// Usage problems exit with 2, everything else with 1.
struct Usage(String);

impl std::fmt::Debug for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) | Some(Error::Parse { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            Error::Io(io) => {
                anyhow::Error::new(Usage(format!("cannot read {}: {io}", p.display())))
            }
            other => other.into(),
        })?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.output {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if cli.no_cp {
        cfg.casimir.enabled = false;
    }
    if let Some(p) = cli.points {
        cfg.sweep.points = p;
        cfg.sweep.delta_cl_ghz = None;
    }
    match &cli.command {
        Command::Single { preset: Some(p) } => {
            cfg.single.preset = (*p).into();
            cfg.single.position_nm = None;
            cfg.single.velocity_m_s = None;
        }
        Command::Pair { delay: Some(d) } => cfg.pair.delay_ns = *d,
        Command::Ensemble { count, sampler } => {
            if let Some(c) = count {
                cfg.ensemble.count = *c;
            }
            if let Some(s) = sampler {
                cfg.ensemble.sampler = match s {
                    SamplerArg::Thermal => Sampler::Thermal,
                    SamplerArg::Liad => Sampler::Liad,
                };
            }
        }
        Command::CpField { spacing: Some(s) } => cfg.casimir.grid_spacing_nm = *s,
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest, cli.output.as_deref());
    }
    let cfg = resolve_config(&cli)?;
    let name = match &cli.command {
        Command::Params => return params(&cfg),
        Command::Single { .. } => "single",
        Command::Pair { .. } => "pair",
        Command::Ensemble { .. } => "ensemble",
        Command::CpField { .. } => "cp-field",
        Command::Replay { .. } => unreachable!(),
    };
    let manifest = execute(name, &cfg)?;
    println!(
        "wrote {} files to {}",
        manifest.outputs.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> thermal_cqed::Result<()>,
) -> anyhow::Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Runs a pipeline command and writes its outputs plus `<stem>_manifest.json`.
fn execute(command: &str, cfg: &RunConfig) -> anyhow::Result<Manifest> {
    with_workers(cfg.workers, || execute_in_pool(command, cfg))?
}

fn execute_in_pool(command: &str, cfg: &RunConfig) -> anyhow::Result<Manifest> {
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let start = Instant::now();
    let mut manifest = Manifest::new(command, cfg);
    let mut files: Vec<PathBuf> = Vec::new();
    let stem: String;
    let model = || -> anyhow::Result<_> {
        let m = cfg.build_model()?;
        Ok(m)
    };
    match command {
        "single" | "pair" => {
            let model = model()?;
            let sweep = cfg.build_sweep(&model)?;
            let (run, s) = if command == "single" {
                let preset = cfg.single.preset;
                manifest
                    .arguments
                    .insert("preset".into(), preset.name().into());
                let traj = cfg.single_trajectory();
                (
                    run_single(&model, &sweep, &traj)?,
                    format!("single_{}", preset.name()),
                )
            } else {
                let delay = cfg.pair.delay_ns;
                manifest
                    .arguments
                    .insert("delay_ns".into(), delay.to_string());
                let traj = Preset::Fig4a.trajectory();
                (
                    run_delayed_pair(&model, &sweep, &traj, delay * NS)?,
                    format!("pair_{delay}ns"),
                )
            };
            stem = s;
            files.extend(write_transit(&out, &stem, &run)?);
            manifest
                .summary
                .insert("failed_points".into(), run.failures.len().into());
            manifest
                .summary
                .insert("diagnostics".into(), serde_json::to_value(run.diagnostics)?);
        }
        "ensemble" => {
            let model = model()?;
            let sweep = cfg.build_sweep(&model)?;
            let spec = cfg.ensemble_spec()?;
            let sampler = match cfg.ensemble.sampler {
                Sampler::Thermal => "thermal",
                Sampler::Liad => "liad",
            };
            manifest.arguments.insert("sampler".into(), sampler.into());
            manifest
                .arguments
                .insert("count".into(), spec.count.to_string());
            let res = run_ensemble(&model, &sweep, &spec)?;
            stem = format!("ensemble_{sampler}");
            let p = out.join(format!("{stem}_spectrum.csv"));
            write_with(&p, |w| res.write_spectrum_csv(w))?;
            files.push(p);
            let p = out.join(format!("{stem}_trajectories.csv"));
            write_with(&p, |w| write_trajectories_csv(&res.trajectories, w))?;
            files.push(p);
            manifest
                .summary
                .insert("interacting".into(), res.interacting.into());
            manifest
                .summary
                .insert("excluded".into(), res.excluded.len().into());
            manifest.summary.insert(
                "terminations".into(),
                serde_json::to_value(&res.terminations)?,
            );
            manifest
                .summary
                .insert("diagnostics".into(), serde_json::to_value(res.diagnostics)?);
        }
        "cp-field" => {
            let cavity = cfg.build_cavity()?;
            let cp = cfg.build_casimir(&cavity, &cfg.build_atom())?;
            let field = build_cp_field(&cp, &cfg.cp_grid(&cavity), cfg.casimir.strict)?;
            stem = "cp".into();
            let p = out.join("cp_field.txt");
            write_with(&p, |w| field.write_to(w))?;
            files.push(p);
            let p = out.join("cp_rays.csv");
            write_with(&p, |w| {
                write_rays_csv(&line_shift_rays(&cp, 201, 500.0 * NM), w)
            })?;
            files.push(p);
            manifest
                .summary
                .insert("cache_key".into(), field.key.clone().into());
            manifest.summary.insert(
                "centre_shift_mhz".into(),
                angular_to_mhz(cp.shift(&Vec3::zeros())).into(),
            );
        }
        other => bail!(Usage(format!("unknown command {other}"))),
    }
    for f in &files {
        manifest.record_output(&out, f)?;
    }
    manifest
        .timings_s
        .insert("total".into(), start.elapsed().as_secs_f64());
    manifest.write(&out.join(format!("{stem}_manifest.json")))?;
    Ok(manifest)
}

fn write_transit(out: &Path, stem: &str, run: &TransitRun) -> anyhow::Result<Vec<PathBuf>> {
    let map = out.join(format!("{stem}_map.csv"));
    write_with(&map, |w| run.map.write_csv(w))?;
    let avg = out.join(format!("{stem}_average.csv"));
    write_with(&avg, |w| run.write_average_csv(w))?;
    let zero = out.join(format!("{stem}_zero_trace.csv"));
    write_with(&zero, |w| run.write_zero_trace_csv(w))?;
    let mut files = vec![map, avg, zero];
    for (i, s) in run.schedules.iter().enumerate() {
        let p = out.join(format!("{stem}_schedule_{i}.csv"));
        write_with(&p, |w| s.write_csv(w))?;
        files.push(p);
    }
    Ok(files)
}

fn replay(path: &Path, output: Option<&Path>) -> anyhow::Result<()> {
    let recorded = Manifest::load(path).map_err(|e| match e {
        Error::Io(io) => anyhow::Error::new(Usage(format!("cannot read {}: {io}", path.display()))),
        other => other.into(),
    })?;
    let mut cfg = recorded.config.clone();
    // never overwrite the recorded outputs
    cfg.output_dir = match output {
        Some(o) => o.to_path_buf(),
        None => path.parent().unwrap_or(Path::new(".")).join("replay"),
    };
    let fresh = execute(&recorded.command, &cfg)?;
    let old: BTreeMap<_, _> = recorded
        .outputs
        .iter()
        .map(|o| (o.path.clone(), o.sha256.clone()))
        .collect();
    let new: BTreeMap<_, _> = fresh
        .outputs
        .iter()
        .map(|o| (o.path.clone(), o.sha256.clone()))
        .collect();
    let mut mismatched = Vec::new();
    for (p, h) in &old {
        match new.get(p) {
            Some(n) if n == h => println!("identical {p}"),
            Some(_) => mismatched.push(p.clone()),
            None => mismatched.push(format!("{p} (missing)")),
        }
    }
    if !mismatched.is_empty() {
        bail!(
            "replay differs from the recorded run: {}",
            mismatched.join(", ")
        );
    }
    println!("replay reproduced all {} outputs", old.len());
    Ok(())
}

fn deviation(value: f64, reference: f64) -> String {
    format!("{:+.1}%", 100.0 * (value / reference - 1.0))
}

fn params(cfg: &RunConfig) -> anyhow::Result<()> {
    let cavity = cfg.build_cavity()?;
    let atom = cfg.build_atom();
    let lambda = 2.0 * std::f64::consts::PI * C / cavity.omega_res;
    let kappa = cavity.kappa();
    let g = cavity.g_max(&atom);
    let sigma = atom.rms_speed(300.0);
    let tau = cavity.transit_time(sigma)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let c_rad = cooperativity(g, kappa, atom.gamma)?;
    // g quoted in Hz while the decay rates stay in 1/s
    let c_hz = cooperativity(g / two_pi, kappa, atom.gamma)?;
    let g_table = two_pi * TABLE_G_GHZ * 1e9;
    let c_table_rad = cooperativity(g_table, TABLE_KAPPA, atom.gamma)?;
    let c_table_hz = cooperativity(g_table / two_pi, TABLE_KAPPA, atom.gamma)?;
    let mut s = String::new();
    use std::fmt::Write as _;
    writeln!(s, "resonance wavelength   {:.1} nm", lambda / NM)?;
    writeln!(s, "quality factor         {:.0}", cavity.quality_factor)?;
    writeln!(
        s,
        "mode volume            {:.4} lambda^3 ({:.4e} um^3)",
        cavity.mode_volume / lambda.powi(3),
        cavity.mode_volume * 1e18
    )?;
    writeln!(
        s,
        "kappa = omega/Q        {:.3e} 1/s (2pi x {:.3} GHz)   table {:.1e} 1/s  {}",
        kappa,
        angular_to_ghz(kappa),
        TABLE_KAPPA,
        deviation(kappa, TABLE_KAPPA)
    )?;
    let source = if cavity.peak_coupling().is_some() {
        "configured"
    } else {
        "from dipole and V"
    };
    writeln!(
        s,
        "g_max ({source})  {:.3e} rad/s (2pi x {:.2} GHz)   table 2pi x {:.0} GHz  {}  DISCREPANCY",
        g,
        angular_to_ghz(g),
        TABLE_G_GHZ,
        deviation(angular_to_ghz(g), TABLE_G_GHZ)
    )?;
    writeln!(
        s,
        "C = g/sqrt(kappa Gamma)  {:.1} (g in rad/s)  {:.1} (g in Hz)   table {:.0}  DISCREPANCY",
        c_rad, c_hz, TABLE_COOPERATIVITY
    )?;
    writeln!(
        s,
        "C from table g, kappa    {:.1} (g in rad/s)  {:.1} (g in Hz)   table {:.0}",
        c_table_rad, c_table_hz, TABLE_COOPERATIVITY
    )?;
    writeln!(
        s,
        "Gamma                  {:.4e} 1/s (2pi x {:.3} MHz)",
        atom.gamma,
        angular_to_mhz(atom.gamma)
    )?;
    writeln!(
        s,
        "rms speed at 300 K     {:.1} m/s (sqrt(3 kB T / m), kB = {:.4e})",
        sigma, KB
    )?;
    writeln!(
        s,
        "transit time h/sigma   {:.3} ns   quoted ~{:.0} ns  {}",
        tau / NS,
        QUOTED_TRANSIT_NS,
        deviation(tau / NS, QUOTED_TRANSIT_NS)
    )?;
    print!("{s}");
    Ok(())
}
