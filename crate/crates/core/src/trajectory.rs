//! Atom trajectories: samplers, ballistic propagation with crash detection, and
//! conversion of a path into a time series of coupling and level shift.
//!
//! Paths are straight lines. The Casimir-Polder potential shifts the atomic
//! level but does not deflect the atom.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::casimir::CPField;
use crate::cavity::{BeamGeometry, CavityModel, Vec3};
use crate::error::{Error, Result};
use crate::units::{AtomSpecies, NM, NS, PS};

/// Upper bound on the schedule step.
pub const MAX_SCHEDULE_DT: f64 = 1.0 * PS;
/// Samples per Gaussian width required along the path.
pub const SAMPLES_PER_WIDTH: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    CrashedDevice,
    LeftBox,
    MaxTime,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::CrashedDevice => "crashed_device",
            Termination::LeftBox => "left_box",
            Termination::MaxTime => "max_time",
        })
    }
}

/// Axis-aligned simulation volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for SimBox {
    fn default() -> Self {
        Self {
            min: [-2.5e-6, -2.5e-6, -2.5e-6],
            max: [2.5e-6, 2.5e-6, 2.5e-6],
        }
    }
}

impl SimBox {
    pub fn validate(&self) -> Result<()> {
        if (0..3).any(|a| !(self.max[a] > self.min[a])) {
            return Err(Error::Config(format!(
                "simulation box has zero volume: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, r: &Vec3) -> bool {
        (0..3).all(|a| r[a] >= self.min[a] && r[a] <= self.max[a])
    }

    fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }
}

/// A straight-line atom path. `t_end` is infinite and `termination` empty until
/// the path has been propagated.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub r0: Vec3,
    pub v0: Vec3,
    pub t_start: f64,
    pub t_end: f64,
    pub termination: Option<Termination>,
}

impl Trajectory {
    pub fn launch(id: usize, r0: Vec3, v0: Vec3, t_start: f64) -> Self {
        Self {
            id,
            r0,
            v0,
            t_start,
            t_end: f64::INFINITY,
            termination: None,
        }
    }

    pub fn position(&self, t: f64) -> Vec3 {
        self.r0 + self.v0 * (t - self.t_start)
    }

    pub fn speed(&self) -> f64 {
        self.v0.norm()
    }

    /// Same path launched `delay` later.
    pub fn delayed(&self, id: usize, delay: f64) -> Self {
        let mut t = self.clone();
        t.id = id;
        t.t_start += delay;
        t.t_end += delay;
        t
    }
}

/// Named initial conditions used for single-trajectory runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fig4a,
    Fig4b,
    Fig4c,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Fig4a, Preset::Fig4b, Preset::Fig4c];

    /// Initial position (m) and velocity (m/s).
    pub fn initial_conditions(self) -> (Vec3, Vec3) {
        match self {
            Preset::Fig4a => (Vec3::new(0.0, 0.0, 600.0 * NM), Vec3::new(0.0, 0.0, -200.0)),
            Preset::Fig4b => (
                Vec3::new(100.0 * NM, 150.0 * NM, 300.0 * NM),
                Vec3::new(0.0, 50.0, -100.0),
            ),
            Preset::Fig4c => (
                Vec3::new(800.0 * NM, -200.0 * NM, -500.0 * NM),
                Vec3::new(120.0, -40.0, 100.0),
            ),
        }
    }

    pub fn trajectory(self) -> Trajectory {
        let (r0, v0) = self.initial_conditions();
        Trajectory::launch(0, r0, v0, 0.0)
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig4a => "fig4a",
            Preset::Fig4b => "fig4b",
            Preset::Fig4c => "fig4c",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset `{s}` (expected fig4a, fig4b or fig4c)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    ThermalBox,
    LiadWall,
    Fixed,
    DelayedPair,
}

/// Emitting patch of a vapour-cell wall parallel to the xy plane; atoms leave towards +z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallSpec {
    pub z: f64,
    pub center: [f64; 2],
    pub size: [f64; 2],
}

impl Default for WallSpec {
    fn default() -> Self {
        Self {
            z: -2.0e-6,
            center: [0.0, 0.0],
            size: [4.0e-6, 4.0e-6],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub kind: SamplerKind,
    pub temperature: f64,
    pub count: usize,
    pub seed: u64,
    pub sim_box: SimBox,
    pub wall: WallSpec,
    /// Used by `Fixed` and `DelayedPair`.
    pub preset: Preset,
    /// Used by `DelayedPair`, s.
    pub delay: f64,
}

impl EnsembleSpec {
    pub fn liad(count: usize, seed: u64) -> Self {
        Self {
            kind: SamplerKind::LiadWall,
            temperature: 300.0,
            count,
            seed,
            sim_box: SimBox::default(),
            wall: WallSpec::default(),
            preset: Preset::Fig4a,
            delay: 0.0,
        }
    }

    pub fn thermal(count: usize, seed: u64, temperature: f64) -> Self {
        Self {
            kind: SamplerKind::ThermalBox,
            temperature,
            ..Self::liad(count, seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("ensemble count must be at least 1".into()));
        }
        if matches!(self.kind, SamplerKind::ThermalBox | SamplerKind::LiadWall)
            && !(self.temperature > 0.0)
        {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        self.sim_box.validate()
    }
}

/// Independent stream per trajectory, so results do not depend on scheduling.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

/// Uniform entry points on the box faces (face chosen by area), flux-weighted
/// inward normal velocity (Rayleigh) and Gaussian tangential components.
pub fn sample_thermal(spec: &EnsembleSpec, atom: &AtomSpecies) -> Result<Vec<Trajectory>> {
    if spec.kind != SamplerKind::ThermalBox {
        return Err(Error::Config(format!(
            "sample_thermal called with sampler {:?}",
            spec.kind
        )));
    }
    spec.validate()?;
    let b = &spec.sim_box;
    let sigma = atom.velocity_scale(spec.temperature);
    let areas = [
        b.extent(1) * b.extent(2),
        b.extent(0) * b.extent(2),
        b.extent(0) * b.extent(1),
    ];
    let total = 2.0 * areas.iter().sum::<f64>();
    Ok((0..spec.count)
        .map(|i| {
            let mut rng = trajectory_rng(spec.seed, i);
            let mut pick = unit(&mut rng) * total;
            let mut face = 0;
            while face < 5 && pick >= areas[face / 2] {
                pick -= areas[face / 2];
                face += 1;
            }
            let axis = face / 2;
            let low_side = face % 2 == 0;
            let mut r = Vec3::zeros();
            let mut v = Vec3::zeros();
            for a in 0..3 {
                if a == axis {
                    r[a] = if low_side { b.min[a] } else { b.max[a] };
                    let vn = sigma * (-2.0 * (1.0 - unit(&mut rng)).ln()).sqrt();
                    v[a] = if low_side { vn } else { -vn };
                } else {
                    r[a] = b.min[a] + unit(&mut rng) * b.extent(a);
                    let n: f64 = rng.sample(StandardNormal);
                    v[a] = sigma * n;
                }
            }
            Trajectory::launch(i, r, v, 0.0)
        })
        .collect())
}

/// Light-induced desorption from a wall patch: uniform start points, Lambertian
/// directions about +z and flux-weighted Maxwell-Boltzmann speeds.
pub fn sample_liad(
    spec: &EnsembleSpec,
    atom: &AtomSpecies,
    geometry: &BeamGeometry,
) -> Result<Vec<Trajectory>> {
    if spec.kind != SamplerKind::LiadWall {
        return Err(Error::Config(format!(
            "sample_liad called with sampler {:?}",
            spec.kind
        )));
    }
    spec.validate()?;
    let w = &spec.wall;
    if w.z.abs() <= geometry.height / 2.0 {
        return Err(Error::Config(format!(
            "LIAD wall plane z = {:.1} nm intersects the beam",
            w.z / NM
        )));
    }
    if !(w.size[0] > 0.0 && w.size[1] > 0.0) {
        return Err(Error::Config(format!(
            "LIAD patch must have positive size, got {:?}",
            w.size
        )));
    }
    // atoms leave the wall towards the beam
    let up = if w.z < 0.0 { 1.0 } else { -1.0 };
    let sigma = atom.velocity_scale(spec.temperature);
    Ok((0..spec.count)
        .map(|i| {
            let mut rng = trajectory_rng(spec.seed, i);
            let x = w.center[0] + (unit(&mut rng) - 0.5) * w.size[0];
            let y = w.center[1] + (unit(&mut rng) - 0.5) * w.size[1];
            let cos_t = unit(&mut rng).sqrt();
            let sin_t = (1.0 - cos_t * cos_t).sqrt();
            let phi = 2.0 * PI * unit(&mut rng);
            // v^3 exp(-v^2 / 2 sigma^2): v^2 / (2 sigma^2) is Gamma(2, 1)
            let g2 = -((1.0 - unit(&mut rng)) * (1.0 - unit(&mut rng))).ln();
            let speed = sigma * (2.0 * g2).sqrt();
            let dir = Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), up * cos_t);
            Trajectory::launch(i, Vec3::new(x, y, w.z), dir * speed, 0.0)
        })
        .collect())
}

/// Default propagation step: min(sx, sy, sz) / (20 |v|), capped at 1 ps.
pub fn default_dt(cavity: &CavityModel, speed: f64) -> f64 {
    let smin = cavity
        .mode_widths
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if speed > 0.0 {
        (smin / (SAMPLES_PER_WIDTH * speed)).min(MAX_SCHEDULE_DT)
    } else {
        MAX_SCHEDULE_DT
    }
}

/// Straight-line motion from `t_start` until the atom enters the dielectric, leaves
/// the box, or `t_max` has elapsed. Crossing times are bisected down to `dt / 100`.
pub fn propagate(
    traj: &Trajectory,
    geometry: &BeamGeometry,
    sim_box: &SimBox,
    dt: f64,
    t_max: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if geometry.is_inside_dielectric(&traj.r0) {
        return Err(Error::InvalidStart {
            x: traj.r0.x,
            y: traj.r0.y,
            z: traj.r0.z,
        });
    }
    let t_stop = traj.t_start + t_max;
    let stopped = |t: f64| -> Option<Termination> {
        let r = traj.position(t);
        if geometry.is_inside_dielectric(&r) {
            Some(Termination::CrashedDevice)
        } else if !sim_box.contains(&r) {
            Some(Termination::LeftBox)
        } else {
            None
        }
    };
    let mut out = traj.clone();
    if traj.v0.norm() > 0.0 {
        let steps = (t_max / dt).ceil() as usize;
        let mut prev = traj.t_start;
        for k in 1..=steps {
            let t = (traj.t_start + k as f64 * dt).min(t_stop);
            if let Some(kind) = stopped(t) {
                let (mut lo, mut hi) = (prev, t);
                while hi - lo > dt / 100.0 {
                    let mid = 0.5 * (lo + hi);
                    if stopped(mid).is_some() {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                out.t_end = hi;
                out.termination = Some(kind);
                return Ok(out);
            }
            prev = t;
        }
    }
    out.t_end = t_stop;
    out.termination = Some(Termination::MaxTime);
    Ok(out)
}

/// Per-atom coupling g(t) and Casimir-Polder shift on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    pub t0: f64,
    pub dt: f64,
    pub g: Vec<f64>,
    pub delta_cp: Vec<f64>,
    /// True while the atom is in flight.
    pub active: Vec<bool>,
}

impl PulseSchedule {
    /// Schedule of an atom that never couples.
    pub fn empty(t0: f64, t1: f64, dt: f64) -> Self {
        let n = ((t1 - t0) / dt).round() as usize + 1;
        Self {
            t0,
            dt,
            g: vec![0.0; n],
            delta_cp: vec![0.0; n],
            active: vec![false; n],
        }
    }

    /// Constant coupling over the window (a stationary atom).
    pub fn constant(t0: f64, t1: f64, dt: f64, g: f64, delta_cp: f64) -> Self {
        let n = ((t1 - t0) / dt).round() as usize + 1;
        Self {
            t0,
            dt,
            g: vec![g; n],
            delta_cp: vec![delta_cp; n],
            active: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    /// Linear interpolation of (g, delta_cp); zero outside the sampled window.
    #[inline]
    pub fn at(&self, t: f64) -> (f64, f64) {
        let u = (t - self.t0) / self.dt;
        let last = self.len() - 1;
        if !(u >= 0.0) || u > last as f64 {
            return (0.0, 0.0);
        }
        let k = (u.floor() as usize).min(last.saturating_sub(1));
        if last == 0 {
            return (self.g[0], self.delta_cp[0]);
        }
        let f = u - k as f64;
        (
            self.g[k] + f * (self.g[k + 1] - self.g[k]),
            self.delta_cp[k] + f * (self.delta_cp[k + 1] - self.delta_cp[k]),
        )
    }

    /// Time span over which coupling or shift is non-zero, padded by one sample.
    pub fn support(&self) -> Option<(f64, f64)> {
        let nz = |k: &usize| self.g[*k] != 0.0 || self.delta_cp[*k] != 0.0;
        let first = (0..self.len()).find(nz)?;
        let last = (0..self.len()).rev().find(nz)?;
        Some((
            self.time(first.saturating_sub(1)),
            self.time((last + 1).min(self.len() - 1)),
        ))
    }

    pub fn peak(&self) -> f64 {
        self.g.iter().copied().fold(0.0, f64::max)
    }

    /// CSV columns `t_ns,g_ghz,delta_cp_ghz` (ordinary frequencies).
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t_ns,g_ghz,delta_cp_ghz")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{:.6},{:.9e},{:.9e}",
                self.time(k) / NS,
                crate::units::angular_to_ghz(self.g[k]),
                crate::units::angular_to_ghz(self.delta_cp[k])
            )?;
        }
        Ok(())
    }
}

/// Samples g(r(t)) and the CP shift on `[t0, t1]` with step `dt`. Outside the
/// trajectory's flight time, and beyond the 5-sigma mode ellipsoid, g is zero.
pub fn schedule_from_trajectory(
    traj: &Trajectory,
    cavity: &CavityModel,
    atom: &AtomSpecies,
    cp: &CPField,
    dt: f64,
    window: (f64, f64),
) -> Result<PulseSchedule> {
    let speed = traj.speed();
    let smin = cavity
        .mode_widths
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(dt > 0.0) || (speed > 0.0 && dt > smin / (SAMPLES_PER_WIDTH * speed) * (1.0 + 1e-12)) {
        return Err(Error::Config(format!(
            "trajectory {}: dt = {:.3e} s does not resolve the mode transit (need <= {:.3e} s at {:.1} m/s)",
            traj.id,
            dt,
            smin / (SAMPLES_PER_WIDTH * speed.max(f64::MIN_POSITIVE)),
            speed
        )));
    }
    let (t0, t1) = window;
    let n = ((t1 - t0) / dt).round() as usize + 1;
    let g_max = cavity.g_max(atom);
    // integer sample offset of the launch keeps delayed copies exactly shifted
    let launch_steps = (traj.t_start - t0) / dt;
    let integral_launch = (launch_steps - launch_steps.round()).abs() < 1e-9;
    let mut g = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut active = vec![false; n];
    for k in 0..n {
        let t = t0 + k as f64 * dt;
        if t < traj.t_start || t > traj.t_end {
            continue;
        }
        let elapsed = if integral_launch {
            (k as f64 - launch_steps.round()) * dt
        } else {
            t - traj.t_start
        };
        let r = traj.r0 + traj.v0 * elapsed;
        active[k] = true;
        if cavity.in_mode_support(&r) {
            g[k] = g_max * cavity.mode_amplitude(&r);
        }
        delta[k] = cp.query(&r);
    }
    Ok(PulseSchedule {
        t0,
        dt,
        g,
        delta_cp: delta,
        active,
    })
}

/// CSV `index,x0_nm,y0_nm,z0_nm,vx_m_s,vy_m_s,vz_m_s,termination,t_end_ns`.
pub fn write_trajectories_csv(trajs: &[Trajectory], mut w: impl Write) -> Result<()> {
    writeln!(
        w,
        "index,x0_nm,y0_nm,z0_nm,vx_m_s,vy_m_s,vz_m_s,termination,t_end_ns"
    )?;
    for t in trajs {
        let term = t
            .termination
            .map(|k| k.to_string())
            .unwrap_or_else(|| "pending".into());
        writeln!(
            w,
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{},{:.6}",
            t.id,
            t.r0.x / NM,
            t.r0.y / NM,
            t.r0.z / NM,
            t.v0.x,
            t.v0.y,
            t.v0.z,
            term,
            t.t_end / NS
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::default_rubidium;
    use approx::assert_relative_eq;

    #[test]
    fn central_transit_passes_the_hole() {
        let geo = BeamGeometry::default();
        let t = Preset::Fig4a.trajectory();
        let out = propagate(&t, &geo, &SimBox::default(), 1e-12, 100e-9).unwrap();
        assert_eq!(out.termination, Some(Termination::LeftBox));
        // z: 600 nm -> -2500 nm at 200 m/s
        assert!((out.t_end - 3.1e-6 / 200.0).abs() < 1e-14);
    }

    #[test]
    fn off_axis_atom_hits_the_beam_top() {
        let geo = BeamGeometry::default();
        let t = Trajectory::launch(
            0,
            Vec3::new(0.0, 300.0 * NM, 600.0 * NM),
            Vec3::new(0.0, 0.0, -200.0),
            0.0,
        );
        let dt = 1e-12;
        let out = propagate(&t, &geo, &SimBox::default(), dt, 100e-9).unwrap();
        // y = 300 nm is outside the beam (|y| <= 210 nm) so it passes; use y = 150 nm
        assert_eq!(out.termination, Some(Termination::LeftBox));
        let t = Trajectory::launch(
            0,
            Vec3::new(0.0, 150.0 * NM, 600.0 * NM),
            Vec3::new(0.0, 0.0, -200.0),
            0.0,
        );
        let out = propagate(&t, &geo, &SimBox::default(), dt, 100e-9).unwrap();
        assert_eq!(out.termination, Some(Termination::CrashedDevice));
        let analytic = (600.0 - 125.0) * NM / 200.0;
        assert!((out.t_end - analytic).abs() * 200.0 <= dt * 200.0 / 100.0);
        let hit = out.position(out.t_end);
        assert!((hit.z - geo.height / 2.0).abs() <= dt * 200.0 / 100.0);
    }

    #[test]
    fn hole_wall_crossing() {
        // moving along +y inside the central hole hits the wall at y = 63 nm
        let geo = BeamGeometry::default();
        let dt = 1e-12;
        let t = Trajectory::launch(0, Vec3::zeros(), Vec3::new(0.0, 150.0, 0.0), 0.0);
        let out = propagate(&t, &geo, &SimBox::default(), dt, 10e-9).unwrap();
        assert_eq!(out.termination, Some(Termination::CrashedDevice));
        assert!((out.position(out.t_end).y - 63.0 * NM).abs() <= 150.0 * dt / 100.0);
    }

    #[test]
    fn resting_atom_runs_out_of_time() {
        let geo = BeamGeometry::default();
        let t = Trajectory::launch(0, Vec3::new(0.0, 0.0, 500.0 * NM), Vec3::zeros(), 1e-9);
        let out = propagate(&t, &geo, &SimBox::default(), 1e-12, 5e-9).unwrap();
        assert_eq!(out.termination, Some(Termination::MaxTime));
        assert_eq!(out.t_end, 6e-9);
    }

    #[test]
    fn start_inside_dielectric_rejected() {
        let geo = BeamGeometry::default();
        let t = Trajectory::launch(0, Vec3::new(4.5 * geo.period, 0.0, 0.0), Vec3::zeros(), 0.0);
        assert!(matches!(
            propagate(&t, &geo, &SimBox::default(), 1e-12, 1e-9),
            Err(Error::InvalidStart { .. })
        ));
        assert!(propagate(
            &Preset::Fig4a.trajectory(),
            &geo,
            &SimBox::default(),
            0.0,
            1e-9
        )
        .is_err());
    }

    #[test]
    fn samplers_are_deterministic() {
        let rb = default_rubidium();
        let geo = BeamGeometry::default();
        let spec = EnsembleSpec::liad(50, 7);
        assert_eq!(
            sample_liad(&spec, &rb, &geo).unwrap(),
            sample_liad(&spec, &rb, &geo).unwrap()
        );
        let other = EnsembleSpec::liad(50, 8);
        assert_ne!(
            sample_liad(&spec, &rb, &geo).unwrap(),
            sample_liad(&other, &rb, &geo).unwrap()
        );
        let th = EnsembleSpec::thermal(50, 7, 300.0);
        assert_eq!(
            sample_thermal(&th, &rb).unwrap(),
            sample_thermal(&th, &rb).unwrap()
        );
        // prefix property: the first trajectories do not depend on the count
        let longer = EnsembleSpec::liad(80, 7);
        assert_eq!(
            sample_liad(&spec, &rb, &geo).unwrap()[..],
            sample_liad(&longer, &rb, &geo).unwrap()[..50]
        );
    }

    #[test]
    fn sampler_configuration_errors() {
        let rb = default_rubidium();
        let geo = BeamGeometry::default();
        let mut spec = EnsembleSpec::liad(10, 1);
        spec.wall.z = 50.0 * NM;
        assert!(matches!(
            sample_liad(&spec, &rb, &geo),
            Err(Error::Config(_))
        ));
        let mut th = EnsembleSpec::thermal(10, 1, 300.0);
        th.sim_box.max[2] = th.sim_box.min[2];
        assert!(sample_thermal(&th, &rb).is_err());
        assert!(sample_thermal(&EnsembleSpec::liad(10, 1), &rb).is_err());
        assert!(sample_liad(
            &EnsembleSpec {
                count: 0,
                ..EnsembleSpec::liad(1, 1)
            },
            &rb,
            &geo
        )
        .is_err());
    }

    #[test]
    fn cold_gas_is_slow() {
        let rb = default_rubidium();
        let th = EnsembleSpec::thermal(1000, 3, 1e-6);
        assert!(sample_thermal(&th, &rb)
            .unwrap()
            .iter()
            .all(|t| t.speed() < 0.1));
    }

    #[test]
    fn thermal_entry_points_on_faces_and_inward() {
        let rb = default_rubidium();
        let th = EnsembleSpec::thermal(500, 11, 300.0);
        let b = th.sim_box;
        for t in sample_thermal(&th, &rb).unwrap() {
            let on_face = (0..3)
                .find(|&a| t.r0[a] == b.min[a] || t.r0[a] == b.max[a])
                .expect("on a face");
            let inward = if t.r0[on_face] == b.min[on_face] {
                t.v0[on_face] > 0.0
            } else {
                t.v0[on_face] < 0.0
            };
            assert!(inward);
        }
    }

    #[test]
    fn liad_emission_is_forward() {
        let rb = default_rubidium();
        let geo = BeamGeometry::default();
        let trajs = sample_liad(&EnsembleSpec::liad(2000, 5), &rb, &geo).unwrap();
        assert!(trajs.iter().all(|t| t.v0.z > 0.0 && t.r0.z == -2.0e-6));
    }

    #[test]
    fn schedule_through_centre_is_symmetric() {
        let cav = CavityModel::table_one();
        let rb = default_rubidium();
        let traj = propagate(
            &Preset::Fig4a.trajectory(),
            &cav.geometry,
            &SimBox::default(),
            1e-12,
            10e-9,
        )
        .unwrap();
        let dt = default_dt(&cav, traj.speed());
        assert_eq!(dt, 1e-12);
        let s =
            schedule_from_trajectory(&traj, &cav, &rb, &CPField::zero(), dt, (0.0, 6e-9)).unwrap();
        let (kmax, gmax) =
            s.g.iter()
                .enumerate()
                .fold((0, 0.0), |b, (k, &g)| if g > b.1 { (k, g) } else { b });
        // z(t) = 0 at t = 3 ns
        assert_eq!(kmax, 3000);
        assert_relative_eq!(gmax, cav.g_max(&rb), max_relative = 1e-12);
        for j in 1..2000 {
            assert_relative_eq!(
                s.g[kmax - j],
                s.g[kmax + j],
                max_relative = 1e-9,
                epsilon = 1e-300
            );
        }
        // continuity bound: |dg| <= g_max dt / tau_min
        let tau_min = cav.mode_widths[2] / traj.speed();
        for w in s.g.windows(2) {
            assert!((w[1] - w[0]).abs() <= cav.g_max(&rb) * dt / tau_min);
        }
    }

    #[test]
    fn distant_path_has_no_coupling() {
        let cav = CavityModel::table_one();
        let rb = default_rubidium();
        let traj = Trajectory::launch(
            0,
            Vec3::new(0.0, 1.5e-6, 2e-6),
            Vec3::new(0.0, 0.0, -200.0),
            0.0,
        );
        let s = schedule_from_trajectory(&traj, &cav, &rb, &CPField::zero(), 1e-12, (0.0, 5e-9))
            .unwrap();
        assert!(s.g.iter().all(|&g| g == 0.0));
        assert!(s.support().is_none());
    }

    #[test]
    fn delayed_copy_is_time_shifted() {
        let cav = CavityModel::table_one();
        let rb = default_rubidium();
        let first = propagate(
            &Preset::Fig4a.trajectory(),
            &cav.geometry,
            &SimBox::default(),
            1e-12,
            20e-9,
        )
        .unwrap();
        let second = first.delayed(1, 2e-9);
        let window = (0.0, 10e-9);
        let s1 =
            schedule_from_trajectory(&first, &cav, &rb, &CPField::zero(), 1e-12, window).unwrap();
        let s2 =
            schedule_from_trajectory(&second, &cav, &rb, &CPField::zero(), 1e-12, window).unwrap();
        for k in 0..(s1.len() - 2000) {
            assert_eq!(s2.g[k + 2000], s1.g[k]);
        }
        assert!(s2.g[..2000].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn coarse_dt_is_rejected() {
        let cav = CavityModel::table_one();
        let rb = default_rubidium();
        let traj = Preset::Fig4a.trajectory();
        let err = schedule_from_trajectory(&traj, &cav, &rb, &CPField::zero(), 1e-10, (0.0, 1e-9))
            .unwrap_err();
        assert!(err.to_string().contains("trajectory 0"));
    }

    #[test]
    fn schedule_interpolation_and_termination() {
        let cav = CavityModel::table_one();
        let rb = default_rubidium();
        let geo = &cav.geometry;
        let t = Trajectory::launch(
            3,
            Vec3::new(0.0, 150.0 * NM, 400.0 * NM),
            Vec3::new(0.0, 0.0, -200.0),
            0.0,
        );
        let t = propagate(&t, geo, &SimBox::default(), 1e-12, 10e-9).unwrap();
        let s =
            schedule_from_trajectory(&t, &cav, &rb, &CPField::zero(), 1e-12, (0.0, 3e-9)).unwrap();
        let k_end = (t.t_end / 1e-12).ceil() as usize;
        assert!(s.g[k_end..].iter().all(|&g| g == 0.0));
        assert!(s.active[..k_end].iter().all(|&a| a));
        assert!(s.g[k_end - 1] > 0.0);
        let (gm, _) = s.at(0.5e-12 + 100e-12);
        assert_relative_eq!(gm, 0.5 * (s.g[100] + s.g[101]), max_relative = 1e-12);
        assert_eq!(s.at(-1e-12), (0.0, 0.0));
        assert!(s.peak() < cav.g_max(&rb));
    }
}
