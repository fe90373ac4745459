//! Steady state of a time-independent Liouvillian by direct linear solve.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::hilbert::{build_operators, hermitize, DensityMatrix, HilbertSpec, Operators};
use super::master::{hamiltonian, Coefficients, DriveParams, Rates};
use crate::error::{Error, Result};

/// Pivot ratio below which the null space is treated as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// max |L rho| / max |L|.
    pub residual: f64,
    /// Smallest over largest pivot of the trace-constrained system.
    pub pivot_ratio: f64,
}

/// Liouvillian acting on column-major vec(rho), using vec(A rho B) = (B^T (x) A) vec(rho).
pub fn liouvillian(h: &DMatrix<Complex64>, ops: &Operators, rates: &Rates) -> DMatrix<Complex64> {
    let d = h.nrows();
    let id = DMatrix::<Complex64>::identity(d, d);
    let mut l = (id.kronecker(h) - h.transpose().kronecker(&id)) * Complex64::new(0.0, -1.0);
    let mut jumps = vec![(&ops.a, rates.kappa)];
    jumps.extend(ops.sigma_minus.iter().map(|s| (s, rates.gamma)));
    for (op, rate) in jumps {
        if rate == 0.0 {
            continue;
        }
        let n = op.adjoint() * op;
        let term = op.conjugate().kronecker(op)
            - (id.kronecker(&n) + n.transpose().kronecker(&id)) * Complex64::new(0.5, 0.0);
        l += term * Complex64::new(rate, 0.0);
    }
    l
}

/// Solves L rho = 0 with Tr rho = 1 replacing the first equation.
pub fn steady_state(h: &DMatrix<Complex64>, ops: &Operators, rates: &Rates) -> Result<SteadyState> {
    rates.validate()?;
    let d = h.nrows();
    if d != ops.spec.dim() {
        return Err(Error::Domain(format!(
            "Hamiltonian is {d}x{d}, operators are {}",
            ops.spec.dim()
        )));
    }
    let l = liouvillian(h, ops, rates);
    let scale = l.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Ambiguous("Liouvillian vanishes".into()));
    }
    let mut a = &l / Complex64::new(scale, 0.0);
    for j in 0..d * d {
        a[(0, j)] = if j % d == j / d {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::default()
        };
    }
    let mut b = nalgebra::DVector::zeros(d * d);
    b[0] = Complex64::new(1.0, 0.0);
    let lu = a.lu();
    let u = lu.u();
    let pivots: Vec<f64> = u.diagonal().iter().map(|z| z.norm()).collect();
    let pmax = pivots.iter().copied().fold(0.0, f64::max);
    let pmin = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    let pivot_ratio = pmin / pmax;
    if !(pivot_ratio >= DEGENERACY_THRESHOLD) {
        return Err(Error::Ambiguous(format!(
            "Liouvillian null space is degenerate (pivot ratio {pivot_ratio:.2e})"
        )));
    }
    let x = lu
        .solve(&b)
        .ok_or_else(|| Error::Ambiguous("trace-constrained system is singular".into()))?;
    let mut rho = DMatrix::from_column_slice(d, d, x.as_slice());
    hermitize(&mut rho);
    let r = &l * nalgebra::DVector::from_column_slice(rho.as_slice());
    let residual = r.iter().map(|z| z.norm()).fold(0.0, f64::max) / scale;
    if residual > RESIDUAL_TOLERANCE {
        return Err(Error::Invariant(format!(
            "steady-state residual {residual:.2e} too large"
        )));
    }
    Ok(SteadyState {
        rho,
        residual,
        pivot_ratio,
    })
}

/// Driven empty cavity truncated at `photon_cutoff`; returns the cavity-only state.
pub fn empty_cavity_steady_state(
    photon_cutoff: usize,
    drive: &DriveParams,
    kappa: f64,
) -> Result<DensityMatrix> {
    let spec = HilbertSpec::new(photon_cutoff, 0)?;
    let ops = build_operators(&spec)?;
    let h = hamiltonian(&ops, &Coefficients::new(drive, &[], &[]));
    Ok(steady_state(&h, &ops, &Rates { kappa, gamma: 0.0 })?.rho)
}

/// Steady-state <a'a> with atoms held at fixed couplings.
pub fn steady_photon_number(
    spec: &HilbertSpec,
    drive: &DriveParams,
    rates: &Rates,
    g: &[f64],
    delta_cp: &[f64],
) -> Result<f64> {
    let ops = build_operators(spec)?;
    let h = hamiltonian(&ops, &Coefficients::new(drive, g, delta_cp));
    let ss = steady_state(&h, &ops, rates)?;
    Ok((&ops.number * &ss.rho).trace().re)
}
