//! Lindblad right-hand side in the frame rotating at the probe frequency (hbar = 1):
//!
//! H = dcl a'a + sum_i (dac + dcl + delta_i) s_i' s_i + sum_i g_i (a s_i' + s_i a') + eps (a + a')
//!
//! with dcl = w_c - w_p and dac = w_a - w_c, cavity decay kappa on `a` and
//! spontaneous emission gamma on each `s_i`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::hilbert::{HilbertSpec, Operators};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    /// Cavity minus probe frequency, rad/s.
    pub delta_cl: f64,
    /// Bare atom minus cavity frequency, rad/s.
    pub atom_cavity_detuning: f64,
    /// Probe amplitude, rad/s.
    pub eps_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub kappa: f64,
    pub gamma: f64,
}

impl Rates {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::Domain(format!(
                "decay rates must be non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Instantaneous Hamiltonian parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub delta_cl: f64,
    pub eps_p: f64,
    /// Atom minus probe frequency per atom, including its level shift.
    pub atom_detuning: Vec<f64>,
    pub g: Vec<f64>,
}

impl Coefficients {
    pub fn new(drive: &DriveParams, g: &[f64], delta_cp: &[f64]) -> Self {
        let mut c = Self {
            delta_cl: drive.delta_cl,
            eps_p: drive.eps_p,
            atom_detuning: vec![0.0; g.len()],
            g: vec![0.0; g.len()],
        };
        c.update(drive, g, delta_cp);
        c
    }

    #[inline]
    pub fn update(&mut self, drive: &DriveParams, g: &[f64], delta_cp: &[f64]) {
        let base = drive.atom_cavity_detuning + drive.delta_cl;
        for i in 0..g.len() {
            self.g[i] = g[i];
            self.atom_detuning[i] = base + delta_cp[i];
        }
    }
}

/// Dense Hamiltonian for the given coefficients.
pub fn hamiltonian(ops: &Operators, c: &Coefficients) -> DMatrix<Complex64> {
    let re = |x: f64| Complex64::new(x, 0.0);
    let mut h = &ops.number * re(c.delta_cl) + (&ops.a + &ops.a_dag) * re(c.eps_p);
    for i in 0..ops.spec.n_atoms {
        let sp = &ops.sigma_plus[i];
        let sm = &ops.sigma_minus[i];
        h += (sp * sm) * re(c.atom_detuning[i]);
        h += (&ops.a * sp + sm * &ops.a_dag) * re(c.g[i]);
    }
    h
}

/// d rho / dt for a dense Hamiltonian. Valid for any matrix `rho`, which makes it
/// usable for building the Liouvillian column by column.
pub fn lindblad_rhs(
    h: &DMatrix<Complex64>,
    ops: &Operators,
    rates: &Rates,
    rho: &DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let mi = Complex64::new(0.0, -1.0);
    let mut out = (h * rho - rho * h) * mi;
    let mut dissipate = |l: &DMatrix<Complex64>, ld: &DMatrix<Complex64>, rate: f64| {
        if rate == 0.0 {
            return;
        }
        let ldl = ld * l;
        let term = l * rho * ld - (&ldl * rho + rho * &ldl) * Complex64::new(0.5, 0.0);
        out += term * Complex64::new(rate, 0.0);
    };
    dissipate(&ops.a, &ops.a_dag, rates.kappa);
    for i in 0..ops.spec.n_atoms {
        dissipate(&ops.sigma_minus[i], &ops.sigma_plus[i], rates.gamma);
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Coupling {
    row: usize,
    col: usize,
    factor: f64,
    /// 0 for the probe, 1 + i for atom i.
    source: usize,
}

/// Sparse evaluation of the master equation on column-major Hermitian matrices.
///
/// Uses d rho = X + X^dagger + jumps with X = -i H_eff rho, which relies on
/// `rho` being exactly Hermitian; the result is then exactly Hermitian too.
#[derive(Debug, Clone)]
pub struct MasterKernel {
    pub spec: HilbertSpec,
    pub rates: Rates,
    dim: usize,
    photons: Vec<f64>,
    excited: Vec<usize>,
    couplings: Vec<Coupling>,
    /// Index with one more photon and sqrt(n + 1).
    raise_photon: Vec<Option<(usize, f64)>>,
    /// Per atom: index with that atom excited, if currently ground.
    raise_atom: Vec<Vec<Option<usize>>>,
}

impl MasterKernel {
    pub fn new(spec: &HilbertSpec, rates: &Rates) -> Result<Self> {
        spec.validate()?;
        rates.validate()?;
        let d = spec.dim();
        let n_max = spec.photon_cutoff;
        let mut couplings = Vec::new();
        for col in 0..d {
            let n = spec.photons(col);
            let bits = spec.atom_bits(col);
            if n > 0 {
                let f = (n as f64).sqrt();
                // a and a' for the probe
                couplings.push(Coupling {
                    row: spec.index(n - 1, bits),
                    col,
                    factor: f,
                    source: 0,
                });
                couplings.push(Coupling {
                    row: col,
                    col: spec.index(n - 1, bits),
                    factor: f,
                    source: 0,
                });
                for i in 0..spec.n_atoms {
                    if bits & (1 << i) == 0 {
                        // a s_i' and its adjoint s_i a'
                        let row = spec.index(n - 1, bits | (1 << i));
                        couplings.push(Coupling {
                            row,
                            col,
                            factor: f,
                            source: 1 + i,
                        });
                        couplings.push(Coupling {
                            row: col,
                            col: row,
                            factor: f,
                            source: 1 + i,
                        });
                    }
                }
            }
        }
        couplings.sort_by_key(|c| (c.source, c.row, c.col));
        Ok(Self {
            spec: *spec,
            rates: *rates,
            dim: d,
            photons: (0..d).map(|k| spec.photons(k) as f64).collect(),
            excited: (0..d).map(|k| spec.atom_bits(k)).collect(),
            couplings,
            raise_photon: (0..d)
                .map(|k| {
                    let n = spec.photons(k);
                    (n < n_max).then(|| {
                        (
                            spec.index(n + 1, spec.atom_bits(k)),
                            ((n + 1) as f64).sqrt(),
                        )
                    })
                })
                .collect(),
            raise_atom: (0..spec.n_atoms)
                .map(|i| {
                    (0..d)
                        .map(|k| (spec.atom_bits(k) & (1 << i) == 0).then_some(k | (1 << i)))
                        .collect()
                })
                .collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Photon number of basis state k.
    pub fn photons(&self, k: usize) -> f64 {
        self.photons[k]
    }

    pub fn is_excited(&self, k: usize, atom: usize) -> bool {
        self.excited[k] & (1 << atom) != 0
    }

    /// `out = L(rho)`; `scratch` must have the same length as `rho`.
    pub fn eval(
        &self,
        c: &Coefficients,
        rho: &[Complex64],
        out: &mut [Complex64],
        scratch: &mut [Complex64],
    ) {
        let d = self.dim;
        let (kappa, gamma) = (self.rates.kappa, self.rates.gamma);
        debug_assert_eq!(rho.len(), d * d);
        let x = scratch;
        for r in 0..d {
            let n = self.photons[r];
            let mut e = c.delta_cl * n;
            let mut decay = kappa * n;
            for i in 0..self.spec.n_atoms {
                if self.excited[r] & (1 << i) != 0 {
                    e += c.atom_detuning[i];
                    decay += gamma;
                }
            }
            let h = Complex64::new(e, -0.5 * decay);
            for col in 0..d {
                x[r + col * d] = h * rho[r + col * d];
            }
        }
        for cp in &self.couplings {
            let v = cp.factor
                * if cp.source == 0 {
                    c.eps_p
                } else {
                    c.g[cp.source - 1]
                };
            if v == 0.0 {
                continue;
            }
            for col in 0..d {
                x[cp.row + col * d] += rho[cp.col + col * d] * v;
            }
        }
        // X = -i H_eff rho
        for z in x.iter_mut() {
            *z = Complex64::new(z.im, -z.re);
        }
        for col in 0..d {
            for r in 0..d {
                let mut v = x[r + col * d] + x[col + r * d].conj();
                if kappa != 0.0 {
                    if let (Some((ur, sr)), Some((uc, sc))) =
                        (self.raise_photon[r], self.raise_photon[col])
                    {
                        v += rho[ur + uc * d] * (kappa * (sr * sc));
                    }
                }
                if gamma != 0.0 {
                    for raise in &self.raise_atom {
                        if let (Some(ur), Some(uc)) = (raise[r], raise[col]) {
                            v += rho[ur + uc * d] * gamma;
                        }
                    }
                }
                out[r + col * d] = v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::hilbert::{build_operators, hermitize};
    use super::*;
    use proptest::prelude::*;

    fn random_state(spec: &HilbertSpec, seed: u64) -> DMatrix<Complex64> {
        // a psd, unit-trace matrix from a deterministic pseudo-random factor
        let d = spec.dim();
        let mut s = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let mut next = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let b = DMatrix::from_fn(d, d, |_, _| Complex64::new(next(), next()));
        let mut rho = &b * b.adjoint();
        let tr = rho.trace();
        rho /= tr;
        hermitize(&mut rho);
        rho
    }

    fn coeffs(n_atoms: usize) -> Coefficients {
        let drive = DriveParams {
            delta_cl: 1.3e10,
            atom_cavity_detuning: -2.0e9,
            eps_p: 3.0e9,
        };
        let g: Vec<f64> = (0..n_atoms)
            .map(|i| 2.0e11 * (1.0 - 0.3 * i as f64))
            .collect();
        let dcp: Vec<f64> = (0..n_atoms).map(|i| -8.0e7 * (i + 1) as f64).collect();
        Coefficients::new(&drive, &g, &dcp)
    }

    fn kernel_matches_dense(n_cut: usize, n_atoms: usize, seed: u64) {
        let spec = HilbertSpec::new(n_cut, n_atoms).unwrap();
        let ops = build_operators(&spec).unwrap();
        let rates = Rates {
            kappa: 3.7e10,
            gamma: 3.8e7,
        };
        let c = coeffs(n_atoms);
        let rho = random_state(&spec, seed);
        let dense = lindblad_rhs(&hamiltonian(&ops, &c), &ops, &rates, &rho);
        let kernel = MasterKernel::new(&spec, &rates).unwrap();
        let mut out = vec![Complex64::default(); spec.dim() * spec.dim()];
        let mut scratch = out.clone();
        kernel.eval(&c, rho.as_slice(), &mut out, &mut scratch);
        let scale = dense.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in dense.iter().zip(&out) {
            assert!((a - b).norm() <= 1e-12 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn kernel_agrees_with_dense_form() {
        for (n, m) in [(4, 0), (4, 1), (4, 2), (6, 1), (2, 2)] {
            kernel_matches_dense(n, m, 17 + n as u64 * 3 + m as u64);
        }
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let spec = HilbertSpec::new(4, 2).unwrap();
        let ops = build_operators(&spec).unwrap();
        let h = hamiltonian(&ops, &coeffs(2));
        assert!((&h - h.adjoint()).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn negative_rates_rejected() {
        let spec = HilbertSpec::new(4, 1).unwrap();
        assert!(MasterKernel::new(
            &spec,
            &Rates {
                kappa: -1.0,
                gamma: 0.0
            }
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn rhs_is_traceless_and_hermitian(seed in 0u64..10_000, m in 0usize..3) {
            let spec = HilbertSpec::new(4, m).unwrap();
            let rates = Rates { kappa: 3.7e10, gamma: 3.8e7 };
            let kernel = MasterKernel::new(&spec, &rates).unwrap();
            let rho = random_state(&spec, seed);
            let d = spec.dim();
            let mut out = vec![Complex64::default(); d * d];
            let mut scratch = out.clone();
            kernel.eval(&coeffs(m), rho.as_slice(), &mut out, &mut scratch);
            let tr: Complex64 = (0..d).map(|k| out[k + k * d]).sum();
            let scale = out.iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(tr.norm() <= 1e-13 * scale);
            for r in 0..d {
                for c in 0..d {
                    prop_assert_eq!(out[r + c * d], out[c + r * d].conj());
                }
            }
        }
    }
}
