//! Detuning sweeps over single transits, thermal ensembles and delayed atom pairs.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::casimir::CPField;
use crate::cavity::{BeamGeometry, CavityModel};
use crate::dynamics::evolve::linspace;
use crate::dynamics::hilbert::with_ground_atoms;
use crate::dynamics::steady::steady_photon_number;
use crate::dynamics::{
    empty_cavity_steady_state, propagate as evolve, DensityMatrix, DriveParams, EvolveOptions,
    HilbertSpec, MasterKernel, Rates, Schedules,
};
use crate::error::{Error, Result};
use crate::trajectory::{
    default_dt, propagate, sample_liad, sample_thermal, schedule_from_trajectory, EnsembleSpec,
    PulseSchedule, SamplerKind, SimBox, Termination, Trajectory,
};
use crate::units::{angular_to_ghz, AtomSpecies, NS};

/// Fraction of failed detuning points tolerated in a single-trajectory sweep.
pub const MAX_POINT_FAILURE_FRACTION: f64 = 0.01;
/// Fraction of failed trajectories tolerated in an ensemble.
pub const MAX_TRAJECTORY_FAILURE_FRACTION: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    EmptyCavity,
}

/// Everything that stays fixed across a sweep.
#[derive(Debug, Clone)]
pub struct Model {
    pub cavity: CavityModel,
    pub atom: AtomSpecies,
    pub cp_field: CPField,
    pub sim_box: SimBox,
}

impl Model {
    pub fn rates(&self) -> Rates {
        Rates {
            kappa: self.cavity.kappa(),
            gamma: self.atom.gamma,
        }
    }

    pub fn g_max(&self) -> f64 {
        self.cavity.g_max(&self.atom)
    }

    pub fn geometry(&self) -> &BeamGeometry {
        &self.cavity.geometry
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Cavity minus probe frequency, rad/s, strictly increasing.
    pub delta_cl: Vec<f64>,
    /// Observation window [0, t_obs].
    pub t_obs: f64,
    /// Output samples of the photon map over the window.
    pub time_samples: usize,
    pub photon_cutoff: usize,
    pub eps_p: f64,
    /// Bare atom minus cavity frequency, rad/s.
    pub atom_cavity_detuning: f64,
    pub normalization: Normalization,
    pub evolve: EvolveOptions,
    /// Integration continues this many cavity lifetimes after the last coupling.
    pub settle_lifetimes: f64,
    /// Schedule step; `None` picks the default from the trajectory speed.
    pub dt: Option<f64>,
}

impl SweepSpec {
    /// `points` detunings evenly spaced over [-half_width, half_width].
    pub fn symmetric_grid(half_width: f64, points: usize) -> Vec<f64> {
        if points == 1 {
            return vec![0.0];
        }
        (0..points)
            .map(|k| {
                // exact zero at the centre of odd grids
                let j = 2 * k as i64 - (points as i64 - 1);
                half_width * j as f64 / (points - 1) as f64
            })
            .collect()
    }

    /// 201 points over +-3 g_max, 10 ns window, drive kappa/20, N = 4.
    pub fn default_for(model: &Model) -> Self {
        let kappa = model.cavity.kappa();
        Self {
            delta_cl: Self::symmetric_grid(3.0 * model.g_max(), 201),
            t_obs: 10.0 * NS,
            time_samples: 201,
            photon_cutoff: 4,
            eps_p: kappa / 20.0,
            atom_cavity_detuning: 0.0,
            normalization: Normalization::EmptyCavity,
            evolve: EvolveOptions::default(),
            settle_lifetimes: 40.0,
            dt: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_cl.is_empty() {
            return Err(Error::Config("detuning grid is empty".into()));
        }
        if self.delta_cl.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "detuning grid must be strictly increasing".into(),
            ));
        }
        if !(self.t_obs > 0.0) {
            return Err(Error::Config(format!(
                "observation window must be positive, got {}",
                self.t_obs
            )));
        }
        if self.time_samples < 2 {
            return Err(Error::Config(
                "at least two time samples are required".into(),
            ));
        }
        if !(self.eps_p >= 0.0) || !(self.settle_lifetimes >= 0.0) {
            return Err(Error::Config(
                "drive amplitude and settle time must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn drive(&self, delta_cl: f64) -> DriveParams {
        DriveParams {
            delta_cl,
            atom_cavity_detuning: self.atom_cavity_detuning,
            eps_p: self.eps_p,
        }
    }

    /// Index of the detuning closest to zero.
    pub fn zero_index(&self) -> usize {
        (0..self.delta_cl.len())
            .min_by(|&a, &b| self.delta_cl[a].abs().total_cmp(&self.delta_cl[b].abs()))
            .unwrap_or(0)
    }
}

/// Empty-cavity steady state at every detuning.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub states: Vec<DensityMatrix>,
    pub photons: Vec<f64>,
}

pub fn baseline(model: &Model, sweep: &SweepSpec) -> Result<Baseline> {
    sweep.validate()?;
    let kappa = model.cavity.kappa();
    let states = sweep
        .delta_cl
        .iter()
        .map(|&d| empty_cavity_steady_state(sweep.photon_cutoff, &sweep.drive(d), kappa))
        .collect::<Result<Vec<_>>>()?;
    let photons = states
        .iter()
        .map(|rho| (0..rho.nrows()).map(|k| k as f64 * rho[(k, k)].re).sum())
        .collect();
    Ok(Baseline { states, photons })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
    pub max_top_population: f64,
    pub rhs_evaluations: usize,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            max_trace_error: 0.0,
            min_eigenvalue: f64::INFINITY,
            max_top_population: 0.0,
            rhs_evaluations: 0,
        }
    }
}

impl Diagnostics {
    fn merge(&mut self, o: &Diagnostics) {
        self.max_trace_error = self.max_trace_error.max(o.max_trace_error);
        self.min_eigenvalue = self.min_eigenvalue.min(o.min_eigenvalue);
        self.max_top_population = self.max_top_population.max(o.max_top_population);
        self.rhs_evaluations += o.rhs_evaluations;
    }
}

struct Column {
    trace: Vec<f64>,
    average: f64,
    diagnostics: Diagnostics,
}

/// Span over which any atom couples or is shifted.
fn active_span(schedules: &[PulseSchedule]) -> Option<(f64, f64)> {
    schedules
        .iter()
        .filter_map(|s| s.support())
        .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
}

/// Photon number over the window for one detuning. Outside the active span the
/// state is the empty-cavity steady state, so only that span is integrated.
#[allow(clippy::too_many_arguments)]
fn transit_column(
    kernel: &MasterKernel,
    schedules: &[PulseSchedule],
    sweep: &SweepSpec,
    kappa: f64,
    start: &DensityMatrix,
    n_base: f64,
    delta: f64,
    window: f64,
    times: Option<&[f64]>,
) -> Result<Column> {
    let flat = |times: Option<&[f64]>| Column {
        trace: times.map(|t| vec![n_base; t.len()]).unwrap_or_default(),
        average: n_base,
        diagnostics: Diagnostics::default(),
    };
    let Some((t_a, t_b)) = active_span(schedules) else {
        return Ok(flat(times));
    };
    let t_a = t_a.max(0.0);
    let t_c = if kappa > 0.0 {
        (t_b + sweep.settle_lifetimes / kappa).min(window)
    } else {
        window
    };
    if !(t_c > t_a) {
        return Ok(flat(times));
    }
    let mut samples: Vec<f64> = times
        .map(|t| t.iter().copied().filter(|&x| x > t_a && x < t_c).collect())
        .unwrap_or_default();
    samples.push(t_c);
    let rho0 = with_ground_atoms(start, &kernel.spec)?;
    let ev = evolve(
        &rho0,
        kernel,
        &Schedules(schedules),
        &sweep.drive(delta),
        t_a,
        &samples,
        &sweep.evolve,
    )?;
    let trace = match times {
        Some(t) => {
            let mut it = ev.photon_number.iter();
            t.iter()
                .map(|&x| {
                    if x > t_a && x < t_c {
                        *it.next().unwrap()
                    } else {
                        n_base
                    }
                })
                .collect()
        }
        None => Vec::new(),
    };
    let average = (n_base * (t_a + (window - t_c)) + ev.mean_photon_number * (t_c - t_a)) / window;
    Ok(Column {
        trace,
        average,
        diagnostics: Diagnostics {
            max_trace_error: ev.max_trace_error,
            min_eigenvalue: ev.min_eigenvalue,
            max_top_population: ev.max_top_population,
            rhs_evaluations: ev.stats.evaluations,
        },
    })
}

/// Photon number on a (time x detuning) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonMap {
    pub times: Vec<f64>,
    pub delta_cl: Vec<f64>,
    /// values[detuning][time]; NaN for failed detuning points.
    pub values: Vec<Vec<f64>>,
    pub baseline: Vec<f64>,
}

impl PhotonMap {
    /// Long format `t_ns,delta_cl_ghz,photon_number,baseline`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t_ns,delta_cl_ghz,photon_number,baseline")?;
        for (j, col) in self.values.iter().enumerate() {
            for (k, v) in col.iter().enumerate() {
                writeln!(
                    w,
                    "{:.6},{:.9},{:.12e},{:.12e}",
                    self.times[k] / NS,
                    angular_to_ghz(self.delta_cl[j]),
                    v,
                    self.baseline[j]
                )?;
            }
        }
        Ok(())
    }
}

/// Output of a single- or two-atom transit sweep.
#[derive(Debug, Clone)]
pub struct TransitRun {
    pub trajectories: Vec<Trajectory>,
    pub schedules: Vec<PulseSchedule>,
    pub map: PhotonMap,
    /// Time-averaged photon number per detuning.
    pub average: Vec<f64>,
    pub failures: Vec<(usize, String)>,
    pub diagnostics: Diagnostics,
}

impl TransitRun {
    pub fn normalized_average(&self) -> Vec<f64> {
        self.average
            .iter()
            .zip(&self.map.baseline)
            .map(|(a, b)| a / b)
            .collect()
    }

    /// Photon-number trace at the detuning nearest zero.
    pub fn zero_detuning_trace(&self) -> &[f64] {
        let j = (0..self.map.delta_cl.len())
            .min_by(|&a, &b| {
                self.map.delta_cl[a]
                    .abs()
                    .total_cmp(&self.map.delta_cl[b].abs())
            })
            .unwrap_or(0);
        &self.map.values[j]
    }

    /// `delta_cl_ghz,mean_photon,baseline,normalized`.
    pub fn write_average_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "delta_cl_ghz,mean_photon,baseline,normalized")?;
        for j in 0..self.average.len() {
            writeln!(
                w,
                "{:.9},{:.12e},{:.12e},{:.12e}",
                angular_to_ghz(self.map.delta_cl[j]),
                self.average[j],
                self.map.baseline[j],
                self.average[j] / self.map.baseline[j]
            )?;
        }
        Ok(())
    }

    /// `t_ns,photon_number,baseline` at the detuning nearest zero.
    pub fn write_zero_trace_csv(&self, mut w: impl Write) -> Result<()> {
        let j = (0..self.map.delta_cl.len())
            .min_by(|&a, &b| {
                self.map.delta_cl[a]
                    .abs()
                    .total_cmp(&self.map.delta_cl[b].abs())
            })
            .unwrap_or(0);
        writeln!(w, "t_ns,photon_number,baseline")?;
        for (k, v) in self.map.values[j].iter().enumerate() {
            writeln!(
                w,
                "{:.6},{:.12e},{:.12e}",
                self.map.times[k] / NS,
                v,
                self.map.baseline[j]
            )?;
        }
        Ok(())
    }
}

fn schedule_dt(model: &Model, sweep: &SweepSpec, trajs: &[Trajectory]) -> f64 {
    sweep.dt.unwrap_or_else(|| {
        let vmax = trajs.iter().map(|t| t.speed()).fold(0.0, f64::max);
        default_dt(&model.cavity, vmax)
    })
}

/// Sweeps the detuning grid for atoms following already propagated trajectories.
pub fn run_transit(
    model: &Model,
    sweep: &SweepSpec,
    trajectories: &[Trajectory],
    window: f64,
) -> Result<TransitRun> {
    sweep.validate()?;
    if trajectories.is_empty() {
        return Err(Error::Domain("no trajectories given".into()));
    }
    let spec = HilbertSpec::new(sweep.photon_cutoff, trajectories.len())?;
    let kernel = MasterKernel::new(&spec, &model.rates())?;
    let dt = schedule_dt(model, sweep, trajectories);
    let schedules = trajectories
        .iter()
        .map(|t| {
            schedule_from_trajectory(
                t,
                &model.cavity,
                &model.atom,
                &model.cp_field,
                dt,
                (0.0, window),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let base = baseline(model, sweep)?;
    let times = linspace(0.0, window, sweep.time_samples);
    let kappa = model.cavity.kappa();
    let columns: Vec<Result<Column>> = sweep
        .delta_cl
        .par_iter()
        .enumerate()
        .map(|(j, &d)| {
            transit_column(
                &kernel,
                &schedules,
                sweep,
                kappa,
                &base.states[j],
                base.photons[j],
                d,
                window,
                Some(&times),
            )
        })
        .collect();
    let mut values = Vec::with_capacity(columns.len());
    let mut average = Vec::with_capacity(columns.len());
    let mut failures = Vec::new();
    let mut diagnostics = Diagnostics::default();
    for (j, c) in columns.into_iter().enumerate() {
        match c {
            Ok(c) => {
                diagnostics.merge(&c.diagnostics);
                values.push(c.trace);
                average.push(c.average);
            }
            Err(e) => {
                log::warn!(
                    "detuning {:.3} GHz failed: {e}",
                    angular_to_ghz(sweep.delta_cl[j])
                );
                failures.push((j, e.to_string()));
                values.push(vec![f64::NAN; times.len()]);
                average.push(f64::NAN);
            }
        }
    }
    let total = sweep.delta_cl.len();
    if failures.len() as f64 > MAX_POINT_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total,
            first: failures[0].1.clone(),
        });
    }
    Ok(TransitRun {
        trajectories: trajectories.to_vec(),
        schedules,
        map: PhotonMap {
            times,
            delta_cl: sweep.delta_cl.clone(),
            values,
            baseline: base.photons,
        },
        average,
        failures,
        diagnostics,
    })
}

/// One atom on `traj` (not yet propagated), observed over [0, t_obs].
pub fn run_single(model: &Model, sweep: &SweepSpec, traj: &Trajectory) -> Result<TransitRun> {
    let traj = propagate(
        traj,
        model.geometry(),
        &model.sim_box,
        default_dt(&model.cavity, traj.speed()),
        sweep.t_obs,
    )?;
    run_transit(model, sweep, &[traj], sweep.t_obs)
}

/// Two atoms on the same path, the second launched `delay` later. The window is
/// extended by the delay so both transits are observed.
pub fn run_delayed_pair(
    model: &Model,
    sweep: &SweepSpec,
    traj: &Trajectory,
    delay: f64,
) -> Result<TransitRun> {
    if !(delay >= 0.0) {
        return Err(Error::Config(format!(
            "delay must be non-negative, got {delay}"
        )));
    }
    let window = sweep.t_obs + delay;
    let dt = default_dt(&model.cavity, traj.speed());
    let first = propagate(traj, model.geometry(), &model.sim_box, dt, window)?;
    let second = first.delayed(first.id + 1, delay);
    run_transit(model, sweep, &[first, second], window)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumResult {
    pub delta_cl: f64,
    pub mean_photon: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TerminationCounts {
    pub crashed_device: usize,
    pub left_box: usize,
    pub max_time: usize,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub spectrum: Vec<SpectrumResult>,
    pub baseline: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    /// Trajectories whose path entered the mode region.
    pub interacting: usize,
    pub excluded: Vec<(usize, String)>,
    pub terminations: TerminationCounts,
    pub diagnostics: Diagnostics,
}

impl EnsembleResult {
    /// `delta_cl_ghz,mean,stderr,n`.
    pub fn write_spectrum_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "delta_cl_ghz,mean,stderr,n")?;
        for s in &self.spectrum {
            writeln!(
                w,
                "{:.9},{:.12e},{:.12e},{}",
                angular_to_ghz(s.delta_cl),
                s.mean_photon,
                s.std_error,
                s.n_samples
            )?;
        }
        Ok(())
    }
}

struct TrajectoryOutcome {
    trajectory: Trajectory,
    values: Result<Vec<f64>>,
    interacting: bool,
    diagnostics: Diagnostics,
}

fn ensemble_member(
    model: &Model,
    sweep: &SweepSpec,
    kernel: &MasterKernel,
    base: &Baseline,
    traj: &Trajectory,
) -> TrajectoryOutcome {
    let mut diagnostics = Diagnostics::default();
    let dt = sweep
        .dt
        .unwrap_or_else(|| default_dt(&model.cavity, traj.speed()));
    let propagated = match propagate(traj, model.geometry(), &model.sim_box, dt, sweep.t_obs) {
        Ok(p) => p,
        Err(e) => {
            return TrajectoryOutcome {
                trajectory: traj.clone(),
                values: Err(e),
                interacting: false,
                diagnostics,
            }
        }
    };
    let schedule = match schedule_from_trajectory(
        &propagated,
        &model.cavity,
        &model.atom,
        &model.cp_field,
        dt,
        (0.0, sweep.t_obs),
    ) {
        Ok(s) => s,
        Err(e) => {
            return TrajectoryOutcome {
                trajectory: propagated,
                values: Err(e),
                interacting: false,
                diagnostics,
            }
        }
    };
    let interacting = schedule.support().is_some();
    let kappa = model.cavity.kappa();
    let schedules = [schedule];
    let values = sweep
        .delta_cl
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            let n_base = base.photons[j];
            let c = transit_column(
                kernel,
                &schedules,
                sweep,
                kappa,
                &base.states[j],
                n_base,
                d,
                sweep.t_obs,
                None,
            )?;
            diagnostics.merge(&c.diagnostics);
            Ok(match sweep.normalization {
                Normalization::Raw => c.average,
                Normalization::EmptyCavity => c.average / n_base,
            })
        })
        .collect::<Result<Vec<f64>>>();
    TrajectoryOutcome {
        trajectory: propagated,
        values,
        interacting,
        diagnostics,
    }
}

/// Draws the ensemble and averages the time-averaged (normalized) photon number
/// over trajectories at every detuning. Results depend only on the seed:
/// trajectories use independent random streams and are reduced in index order.
pub fn run_ensemble(
    model: &Model,
    sweep: &SweepSpec,
    spec: &EnsembleSpec,
) -> Result<EnsembleResult> {
    sweep.validate()?;
    let trajs = match spec.kind {
        SamplerKind::ThermalBox => sample_thermal(spec, &model.atom)?,
        SamplerKind::LiadWall => sample_liad(spec, &model.atom, model.geometry())?,
        other => {
            return Err(Error::Config(format!(
                "ensembles need a thermal or LIAD sampler, got {other:?}"
            )))
        }
    };
    run_ensemble_on(model, sweep, &trajs)
}

/// Same as `run_ensemble` for explicit launch conditions.
pub fn run_ensemble_on(
    model: &Model,
    sweep: &SweepSpec,
    trajs: &[Trajectory],
) -> Result<EnsembleResult> {
    sweep.validate()?;
    if trajs.is_empty() {
        return Err(Error::Config("ensemble count must be at least 1".into()));
    }
    let spec = HilbertSpec::new(sweep.photon_cutoff, 1)?;
    let kernel = MasterKernel::new(&spec, &model.rates())?;
    let base = baseline(model, sweep)?;
    let done = AtomicUsize::new(0);
    let total = trajs.len();
    let outcomes: Vec<TrajectoryOutcome> = trajs
        .par_iter()
        .map(|t| {
            let out = ensemble_member(model, sweep, &kernel, &base, t);
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if n.is_multiple_of(100) || n == total {
                log::info!("{n}/{total} trajectories");
            }
            out
        })
        .collect();

    let m = sweep.delta_cl.len();
    // Welford updates; the spread is often ~1e-10 of the mean
    let mut mean = vec![0.0; m];
    let mut m2 = vec![0.0; m];
    let mut n_ok = 0usize;
    let mut excluded = Vec::new();
    let mut terminations = TerminationCounts::default();
    let mut interacting = 0;
    let mut diagnostics = Diagnostics::default();
    let mut trajectories = Vec::with_capacity(total);
    for (i, o) in outcomes.into_iter().enumerate() {
        match o.trajectory.termination {
            Some(Termination::CrashedDevice) => terminations.crashed_device += 1,
            Some(Termination::LeftBox) => terminations.left_box += 1,
            Some(Termination::MaxTime) => terminations.max_time += 1,
            None => {}
        }
        diagnostics.merge(&o.diagnostics);
        match o.values {
            Ok(v) => {
                n_ok += 1;
                interacting += o.interacting as usize;
                for j in 0..m {
                    let d = v[j] - mean[j];
                    mean[j] += d / n_ok as f64;
                    m2[j] += d * (v[j] - mean[j]);
                }
            }
            Err(e) => {
                log::warn!("trajectory {i} excluded: {e}");
                excluded.push((i, e.to_string()));
            }
        }
        trajectories.push(o.trajectory);
    }
    if excluded.len() as f64 > MAX_TRAJECTORY_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures {
            failed: excluded.len(),
            total,
            first: excluded[0].1.clone(),
        });
    }
    let n = n_ok as f64;
    let spectrum = (0..m)
        .map(|j| {
            let var = if n_ok > 1 { m2[j] / (n - 1.0) } else { 0.0 };
            SpectrumResult {
                delta_cl: sweep.delta_cl[j],
                mean_photon: mean[j],
                std_error: (var / n).sqrt(),
                n_samples: n_ok,
            }
        })
        .collect();
    Ok(EnsembleResult {
        spectrum,
        baseline: base.photons,
        trajectories,
        interacting,
        excluded,
        terminations,
        diagnostics,
    })
}

/// Runs `f` on a dedicated pool of `workers` threads (0 means one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Steady-state photon number for atoms held at fixed couplings.
pub fn stationary_spectrum(model: &Model, sweep: &SweepSpec, g: &[f64]) -> Result<Vec<f64>> {
    sweep.validate()?;
    let spec = HilbertSpec::new(sweep.photon_cutoff, g.len())?;
    let zeros = vec![0.0; g.len()];
    sweep
        .delta_cl
        .iter()
        .map(|&d| steady_photon_number(&spec, &sweep.drive(d), &model.rates(), g, &zeros))
        .collect()
}

/// Local maxima of `f` sampled on `grid`, refined by golden-section search.
pub fn refine_peaks(
    grid: &[f64],
    values: &[f64],
    mut f: impl FnMut(f64) -> Result<f64>,
    tol: f64,
) -> Result<Vec<f64>> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut peaks = Vec::new();
    for k in 1..grid.len().saturating_sub(1) {
        if !(values[k] > values[k - 1] && values[k] >= values[k + 1]) {
            continue;
        }
        let (mut a, mut b) = (grid[k - 1], grid[k + 1]);
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let mut f1 = f(x1)?;
        let mut f2 = f(x2)?;
        while b - a > tol {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = f(x2)?;
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = f(x1)?;
            }
        }
        peaks.push(0.5 * (a + b));
    }
    Ok(peaks)
}

/// Positions of the transmission maxima for atoms held at coupling `g` each.
pub fn vacuum_rabi_peaks(model: &Model, sweep: &SweepSpec, g: &[f64]) -> Result<Vec<f64>> {
    let values = stationary_spectrum(model, sweep, g)?;
    let spec = HilbertSpec::new(sweep.photon_cutoff, g.len())?;
    let zeros = vec![0.0; g.len()];
    let rates = model.rates();
    let tol = 1e-6 * model.g_max();
    refine_peaks(
        &sweep.delta_cl,
        &values,
        |d| steady_photon_number(&spec, &sweep.drive(d), &rates, g, &zeros),
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::Vec3;
    use crate::trajectory::Preset;
    use crate::units::default_rubidium;

    fn model() -> Model {
        Model {
            cavity: CavityModel::table_one(),
            atom: default_rubidium(),
            cp_field: CPField::zero(),
            sim_box: SimBox::default(),
        }
    }

    #[test]
    fn symmetric_grid_has_exact_zero() {
        let g = SweepSpec::symmetric_grid(3.0, 201);
        assert_eq!(g.len(), 201);
        assert_eq!(g[100], 0.0);
        assert_eq!(g[0], -3.0);
        assert_eq!(g[200], 3.0);
        assert_eq!(SweepSpec::symmetric_grid(1.0, 1), vec![0.0]);
    }

    #[test]
    fn sweep_validation() {
        let m = model();
        let mut s = SweepSpec::default_for(&m);
        assert!(s.validate().is_ok());
        s.delta_cl = vec![0.0, 0.0];
        assert!(s.validate().is_err());
        s.delta_cl = vec![];
        assert!(s.validate().is_err());
    }

    #[test]
    fn non_interacting_path_gives_baseline() {
        let m = model();
        let mut sweep = SweepSpec::default_for(&m);
        sweep.delta_cl = SweepSpec::symmetric_grid(3.0 * m.g_max(), 11);
        let far = Trajectory::launch(
            0,
            Vec3::new(0.0, 2.0e-6, 2.0e-6),
            Vec3::new(0.0, 0.0, -100.0),
            0.0,
        );
        let run = run_single(&m, &sweep, &far).unwrap();
        for (j, col) in run.map.values.iter().enumerate() {
            assert!(col.iter().all(|&v| v == run.map.baseline[j]));
        }
        assert!(run.normalized_average().iter().all(|&v| v == 1.0));
        let ens = run_ensemble_on(&m, &sweep, &[far]).unwrap();
        assert!(ens
            .spectrum
            .iter()
            .all(|s| s.mean_photon == 1.0 && s.std_error == 0.0));
    }

    #[test]
    fn baseline_is_lorentzian() {
        let m = model();
        let mut sweep = SweepSpec::default_for(&m);
        sweep.delta_cl = SweepSpec::symmetric_grid(2.0 * m.cavity.kappa(), 9);
        let b = baseline(&m, &sweep).unwrap();
        let k = m.cavity.kappa();
        for (d, n) in sweep.delta_cl.iter().zip(&b.photons) {
            let expect = sweep.eps_p.powi(2) / (d * d + k * k / 4.0);
            assert!((n - expect).abs() < 1e-6 * expect);
        }
    }

    #[test]
    fn golden_section_finds_parabola_top() {
        let grid: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let f = |x: f64| -(x - 0.437).powi(2);
        let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
        let peaks = refine_peaks(&grid, &values, |x| Ok(f(x)), 1e-9).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0] - 0.437).abs() < 1e-8);
    }

    #[test]
    fn delayed_pair_rejects_negative_delay() {
        let m = model();
        let sweep = SweepSpec::default_for(&m);
        assert!(run_delayed_pair(&m, &sweep, &Preset::Fig4a.trajectory(), -1e-9).is_err());
    }
}
