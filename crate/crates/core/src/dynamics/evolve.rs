//! Time evolution with a time-dependent coupling per atom.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::hilbert::{hermitize, DensityMatrix};
use super::integrator::{Dopri5, Dopri5Options, Dopri5Stats, OdeSystem};
use super::master::{Coefficients, DriveParams, MasterKernel};
use crate::error::{Error, Result};
use crate::trajectory::PulseSchedule;

/// Supplies g_i(t) and the level shift delta_i(t) for every atom.
pub trait CouplingSource: Sync {
    fn n_atoms(&self) -> usize;
    fn sample(&self, t: f64, g: &mut [f64], delta_cp: &mut [f64]);
}

/// One schedule per atom, linearly interpolated.
#[derive(Debug, Clone, Copy)]
pub struct Schedules<'a>(pub &'a [PulseSchedule]);

impl CouplingSource for Schedules<'_> {
    fn n_atoms(&self) -> usize {
        self.0.len()
    }

    #[inline]
    fn sample(&self, t: f64, g: &mut [f64], delta_cp: &mut [f64]) {
        for (i, s) in self.0.iter().enumerate() {
            (g[i], delta_cp[i]) = s.at(t);
        }
    }
}

/// Atoms held at fixed coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticCoupling {
    pub g: Vec<f64>,
    pub delta_cp: Vec<f64>,
}

impl StaticCoupling {
    pub fn new(g: Vec<f64>) -> Self {
        let n = g.len();
        Self {
            g,
            delta_cp: vec![0.0; n],
        }
    }
}

impl CouplingSource for StaticCoupling {
    fn n_atoms(&self) -> usize {
        self.g.len()
    }

    fn sample(&self, _t: f64, g: &mut [f64], delta_cp: &mut [f64]) {
        g.copy_from_slice(&self.g);
        delta_cp.copy_from_slice(&self.delta_cp);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub integrator: Dopri5Options,
    pub trace_tol: f64,
    pub positivity_tol: f64,
    /// Largest population allowed in the top Fock level.
    pub cutoff_tol: f64,
    /// Smallest eigenvalue is checked at every n-th output sample and at the end.
    pub eig_stride: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            integrator: Dopri5Options::default(),
            trace_tol: 1e-8,
            positivity_tol: 1e-8,
            cutoff_tol: 1e-4,
            eig_stride: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub times: Vec<f64>,
    pub photon_number: Vec<f64>,
    /// Excited-state population per atom at each sample.
    pub atom_excitation: Vec<Vec<f64>>,
    /// Exact time average of <a'a> from `t0` to the last sample.
    pub mean_photon_number: f64,
    pub final_state: DensityMatrix,
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
    pub max_top_population: f64,
    pub stats: Dopri5Stats,
}

struct System<'a> {
    kernel: &'a MasterKernel,
    source: &'a dyn CouplingSource,
    drive: DriveParams,
    coeffs: Coefficients,
    g: Vec<f64>,
    delta: Vec<f64>,
    scratch: Vec<Complex64>,
    /// 1 / averaging span, so the running integral is already the average.
    avg_weight: f64,
}

impl OdeSystem for System<'_> {
    fn rhs(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let d = self.kernel.dim();
        let n2 = d * d;
        self.source.sample(t, &mut self.g, &mut self.delta);
        self.coeffs.update(&self.drive, &self.g, &self.delta);
        self.kernel
            .eval(&self.coeffs, &y[..n2], &mut dy[..n2], &mut self.scratch);
        let n: f64 = (0..d)
            .map(|k| self.kernel.photons(k) * y[k + k * d].re)
            .sum();
        dy[n2] = Complex64::new(n * self.avg_weight, 0.0);
    }
}

/// Propagates `rho0` from `t0` through the (sorted) `sample_times`, recording
/// observables and enforcing trace, positivity and truncation checks.
pub fn propagate(
    rho0: &DensityMatrix,
    kernel: &MasterKernel,
    source: &dyn CouplingSource,
    drive: &DriveParams,
    t0: f64,
    sample_times: &[f64],
    opts: &EvolveOptions,
) -> Result<Evolution> {
    let spec = kernel.spec;
    let d = kernel.dim();
    if rho0.nrows() != d || rho0.ncols() != d {
        return Err(Error::Domain(format!(
            "initial state is {}x{}, expected {d}x{d}",
            rho0.nrows(),
            rho0.ncols()
        )));
    }
    if source.n_atoms() != spec.n_atoms {
        return Err(Error::Domain(format!(
            "{} coupling schedules for {} atoms",
            source.n_atoms(),
            spec.n_atoms
        )));
    }
    let Some(&t_last) = sample_times.last() else {
        return Err(Error::Domain("no output times requested".into()));
    };
    if sample_times[0] < t0 || sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain(
            "output times must be sorted and not before the start time".into(),
        ));
    }
    let mut rho = rho0.clone();
    hermitize(&mut rho);
    let n2 = d * d;
    let mut y: Vec<Complex64> = rho.as_slice().to_vec();
    y.push(Complex64::default());
    let span = t_last - t0;
    let mut sys = System {
        kernel,
        source,
        drive: *drive,
        coeffs: Coefficients::new(drive, &vec![0.0; spec.n_atoms], &vec![0.0; spec.n_atoms]),
        g: vec![0.0; spec.n_atoms],
        delta: vec![0.0; spec.n_atoms],
        scratch: vec![Complex64::default(); n2],
        avg_weight: if span > 0.0 { 1.0 / span } else { 0.0 },
    };
    let mut stepper = Dopri5::new(n2 + 1, opts.integrator);
    let mut out = Evolution {
        times: Vec::with_capacity(sample_times.len()),
        photon_number: Vec::with_capacity(sample_times.len()),
        atom_excitation: vec![Vec::with_capacity(sample_times.len()); spec.n_atoms],
        mean_photon_number: 0.0,
        final_state: rho,
        max_trace_error: 0.0,
        min_eigenvalue: f64::INFINITY,
        max_top_population: 0.0,
        stats: Dopri5Stats::default(),
    };
    let mut t = t0;
    for (j, &ts) in sample_times.iter().enumerate() {
        stepper.integrate_to(&mut sys, &mut t, &mut y, ts)?;
        let diag = |k: usize| y[k + k * d].re;
        let trace: f64 = (0..d).map(diag).sum();
        let photons: f64 = (0..d).map(|k| kernel.photons(k) * diag(k)).sum();
        let top: f64 = (0..d)
            .filter(|&k| spec.photons(k) == spec.photon_cutoff)
            .map(diag)
            .sum();
        out.times.push(ts);
        out.photon_number.push(photons);
        for (i, exc) in out.atom_excitation.iter_mut().enumerate() {
            exc.push((0..d).filter(|&k| kernel.is_excited(k, i)).map(diag).sum());
        }
        out.max_trace_error = out.max_trace_error.max((trace - 1.0).abs());
        out.max_top_population = out.max_top_population.max(top);
        if (trace - 1.0).abs() > opts.trace_tol {
            return Err(Error::Invariant(format!(
                "trace drifted to {trace:.12} at t = {ts:.6e} s"
            )));
        }
        if top > opts.cutoff_tol {
            return Err(Error::Cutoff {
                t: ts,
                population: top,
            });
        }
        if j % opts.eig_stride.max(1) == 0 || j + 1 == sample_times.len() {
            let mut m = DMatrix::from_column_slice(d, d, &y[..n2]);
            hermitize(&mut m);
            let lo = m.symmetric_eigenvalues().min();
            out.min_eigenvalue = out.min_eigenvalue.min(lo);
            if lo < -opts.positivity_tol {
                return Err(Error::Invariant(format!(
                    "density matrix eigenvalue {lo:.3e} at t = {ts:.6e} s"
                )));
            }
        }
    }
    out.mean_photon_number = y[n2].re;
    out.final_state = DMatrix::from_column_slice(d, d, &y[..n2]);
    hermitize(&mut out.final_state);
    out.stats = stepper.stats;
    Ok(out)
}

/// `n` evenly spaced times on `[t0, t1]` including both ends.
pub fn linspace(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t1],
        _ => (0..n)
            .map(|k| t0 + (t1 - t0) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::hilbert::{basis_projector, build_operators, with_ground_atoms, HilbertSpec};
    use super::super::master::Rates;
    use super::super::steady::empty_cavity_steady_state;
    use super::*;

    const KAPPA: f64 = 3.7e10;
    const GAMMA: f64 = 3.8e7;

    #[test]
    fn free_cavity_decay() {
        let spec = HilbertSpec::new(4, 0).unwrap();
        let kernel = MasterKernel::new(
            &spec,
            &Rates {
                kappa: KAPPA,
                gamma: GAMMA,
            },
        )
        .unwrap();
        let rho0 = basis_projector(&spec, 1, 0);
        let drive = DriveParams {
            delta_cl: 0.0,
            atom_cavity_detuning: 0.0,
            eps_p: 0.0,
        };
        let times = linspace(0.0, 100e-12, 11);
        let ev = propagate(
            &rho0,
            &kernel,
            &StaticCoupling::new(vec![]),
            &drive,
            0.0,
            &times,
            &Default::default(),
        )
        .unwrap();
        for (t, n) in ev.times.iter().zip(&ev.photon_number) {
            assert!((n - (-KAPPA * t).exp()).abs() < 1e-8);
        }
        // time average of exp(-kappa t)
        let avg = (1.0 - (-KAPPA * 100e-12f64).exp()) / (KAPPA * 100e-12);
        assert!((ev.mean_photon_number - avg).abs() < 1e-8);
    }

    #[test]
    fn atom_decay_and_rabi_exchange() {
        let spec = HilbertSpec::new(3, 1).unwrap();
        let g = 2.0e11;
        let kernel = MasterKernel::new(
            &spec,
            &Rates {
                kappa: 0.0,
                gamma: 0.0,
            },
        )
        .unwrap();
        let rho0 = basis_projector(&spec, 0, 1);
        let drive = DriveParams {
            delta_cl: 0.0,
            atom_cavity_detuning: 0.0,
            eps_p: 0.0,
        };
        let times = linspace(0.0, 40e-12, 41);
        let ev = propagate(
            &rho0,
            &kernel,
            &StaticCoupling::new(vec![g]),
            &drive,
            0.0,
            &times,
            &Default::default(),
        )
        .unwrap();
        for (k, t) in ev.times.iter().enumerate() {
            let p = (g * t).cos().powi(2);
            assert!((ev.atom_excitation[0][k] - p).abs() < 1e-7);
            assert!((ev.photon_number[k] - (1.0 - p)).abs() < 1e-7);
        }

        let kernel = MasterKernel::new(
            &spec,
            &Rates {
                kappa: 0.0,
                gamma: GAMMA,
            },
        )
        .unwrap();
        let times = linspace(0.0, 50e-9, 6);
        let ev = propagate(
            &rho0,
            &kernel,
            &StaticCoupling::new(vec![0.0]),
            &drive,
            0.0,
            &times,
            &Default::default(),
        )
        .unwrap();
        for (k, t) in ev.times.iter().enumerate() {
            assert!((ev.atom_excitation[0][k] - (-GAMMA * t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn driven_cavity_stays_in_steady_state() {
        let spec = HilbertSpec::new(4, 1).unwrap();
        let drive = DriveParams {
            delta_cl: 0.0,
            atom_cavity_detuning: 0.0,
            eps_p: KAPPA / 20.0,
        };
        let cav = empty_cavity_steady_state(spec.photon_cutoff, &drive, KAPPA).unwrap();
        let rho0 = with_ground_atoms(&cav, &spec).unwrap();
        let kernel = MasterKernel::new(
            &spec,
            &Rates {
                kappa: KAPPA,
                gamma: GAMMA,
            },
        )
        .unwrap();
        let times = linspace(0.0, 1e-9, 11);
        let ev = propagate(
            &rho0,
            &kernel,
            &StaticCoupling::new(vec![0.0]),
            &drive,
            0.0,
            &times,
            &Default::default(),
        )
        .unwrap();
        for n in &ev.photon_number {
            assert!((n - ev.photon_number[0]).abs() < 1e-10);
        }
        assert!((ev.photon_number[0] - 0.01).abs() < 1e-5);
    }

    #[test]
    fn small_cutoff_is_detected() {
        let spec = HilbertSpec::new(2, 0).unwrap();
        let kernel = MasterKernel::new(
            &spec,
            &Rates {
                kappa: KAPPA,
                gamma: 0.0,
            },
        )
        .unwrap();
        let drive = DriveParams {
            delta_cl: 0.0,
            atom_cavity_detuning: 0.0,
            eps_p: KAPPA,
        };
        let rho0 = basis_projector(&spec, 0, 0);
        let times = linspace(0.0, 1e-9, 11);
        let err = propagate(
            &rho0,
            &kernel,
            &StaticCoupling::new(vec![]),
            &drive,
            0.0,
            &times,
            &Default::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Cutoff { .. }));
    }

    #[test]
    fn argument_checks() {
        let spec = HilbertSpec::new(2, 1).unwrap();
        let kernel = MasterKernel::new(
            &spec,
            &Rates {
                kappa: KAPPA,
                gamma: 0.0,
            },
        )
        .unwrap();
        let drive = DriveParams {
            delta_cl: 0.0,
            atom_cavity_detuning: 0.0,
            eps_p: 0.0,
        };
        let rho0 = basis_projector(&spec, 0, 0);
        let none = StaticCoupling::new(vec![]);
        let one = StaticCoupling::new(vec![1.0]);
        assert!(propagate(
            &rho0,
            &kernel,
            &none,
            &drive,
            0.0,
            &[1e-9],
            &Default::default()
        )
        .is_err());
        assert!(propagate(&rho0, &kernel, &one, &drive, 0.0, &[], &Default::default()).is_err());
        assert!(propagate(
            &rho0,
            &kernel,
            &one,
            &drive,
            0.0,
            &[2e-9, 1e-9],
            &Default::default()
        )
        .is_err());
        let small = basis_projector(&HilbertSpec::new(1, 1).unwrap(), 0, 0);
        assert!(propagate(
            &small,
            &kernel,
            &one,
            &drive,
            0.0,
            &[1e-9],
            &Default::default()
        )
        .is_err());
        let _ = build_operators(&spec).unwrap();
    }
}
