use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest Liouville-space dimension accepted for dense propagation.
pub const MAX_DIMENSION: usize = 64;
pub const MAX_ATOMS: usize = 2;

pub type DensityMatrix = DMatrix<Complex64>;

/// Truncated Fock space (0..=photon_cutoff) times `n_atoms` two-level atoms.
/// Basis index is `n * 2^M + atom_bits`, bit i set when atom i is excited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertSpec {
    pub photon_cutoff: usize,
    pub n_atoms: usize,
}

impl HilbertSpec {
    pub fn new(photon_cutoff: usize, n_atoms: usize) -> Result<Self> {
        let spec = Self {
            photon_cutoff,
            n_atoms,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.photon_cutoff < 1 {
            return Err(Error::Config("photon cutoff must be at least 1".into()));
        }
        if self.n_atoms > MAX_ATOMS {
            return Err(Error::Config(format!(
                "at most {MAX_ATOMS} atoms are supported, got {}",
                self.n_atoms
            )));
        }
        if self.dim() > MAX_DIMENSION {
            return Err(Error::Config(format!(
                "Hilbert dimension {} exceeds the limit of {MAX_DIMENSION}",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn atom_states(&self) -> usize {
        1 << self.n_atoms
    }

    pub fn dim(&self) -> usize {
        (self.photon_cutoff + 1) * self.atom_states()
    }

    pub fn index(&self, photons: usize, atom_bits: usize) -> usize {
        photons * self.atom_states() + atom_bits
    }

    pub fn photons(&self, index: usize) -> usize {
        index / self.atom_states()
    }

    pub fn atom_bits(&self, index: usize) -> usize {
        index % self.atom_states()
    }

    pub fn with_atoms(&self, n_atoms: usize) -> Result<Self> {
        Self::new(self.photon_cutoff, n_atoms)
    }
}

/// Dense operators on the joint space.
#[derive(Debug, Clone)]
pub struct Operators {
    pub spec: HilbertSpec,
    pub a: DMatrix<Complex64>,
    pub a_dag: DMatrix<Complex64>,
    pub number: DMatrix<Complex64>,
    pub sigma_minus: Vec<DMatrix<Complex64>>,
    pub sigma_plus: Vec<DMatrix<Complex64>>,
    pub identity: DMatrix<Complex64>,
}

pub fn build_operators(spec: &HilbertSpec) -> Result<Operators> {
    spec.validate()?;
    let d = spec.dim();
    let one = Complex64::new(1.0, 0.0);
    let mut a = DMatrix::zeros(d, d);
    for col in 0..d {
        let n = spec.photons(col);
        if n > 0 {
            a[(spec.index(n - 1, spec.atom_bits(col)), col)] = one * (n as f64).sqrt();
        }
    }
    let mut sigma_minus = Vec::with_capacity(spec.n_atoms);
    for i in 0..spec.n_atoms {
        let mut s = DMatrix::zeros(d, d);
        for col in 0..d {
            let bits = spec.atom_bits(col);
            if bits & (1 << i) != 0 {
                s[(spec.index(spec.photons(col), bits & !(1 << i)), col)] = one;
            }
        }
        sigma_minus.push(s);
    }
    let a_dag = a.adjoint();
    let number = &a_dag * &a;
    Ok(Operators {
        spec: *spec,
        sigma_plus: sigma_minus.iter().map(|s| s.adjoint()).collect(),
        sigma_minus,
        a,
        a_dag,
        number,
        identity: DMatrix::identity(d, d),
    })
}

/// Pure state |n photons, atom_bits><...|.
pub fn basis_projector(spec: &HilbertSpec, photons: usize, atom_bits: usize) -> DensityMatrix {
    let d = spec.dim();
    let mut rho = DMatrix::zeros(d, d);
    let k = spec.index(photons, atom_bits);
    rho[(k, k)] = Complex64::new(1.0, 0.0);
    rho
}

/// Embeds a cavity-only state into the joint space with all atoms in the ground state.
pub fn with_ground_atoms(
    cavity_state: &DensityMatrix,
    spec: &HilbertSpec,
) -> Result<DensityMatrix> {
    let nc = spec.photon_cutoff + 1;
    if cavity_state.nrows() != nc || cavity_state.ncols() != nc {
        return Err(Error::Domain(format!(
            "cavity state is {}x{}, expected {nc}x{nc}",
            cavity_state.nrows(),
            cavity_state.ncols()
        )));
    }
    let d = spec.dim();
    let mut rho = DMatrix::zeros(d, d);
    for m in 0..nc {
        for n in 0..nc {
            rho[(spec.index(m, 0), spec.index(n, 0))] = cavity_state[(m, n)];
        }
    }
    Ok(rho)
}

/// Hermitian part, (rho + rho^dagger) / 2.
pub fn hermitize(rho: &mut DensityMatrix) {
    let d = rho.nrows();
    for c in 0..d {
        rho[(c, c)].im = 0.0;
        for r in (c + 1)..d {
            let avg = 0.5 * (rho[(r, c)] + rho[(c, r)].conj());
            rho[(r, c)] = avg;
            rho[(c, r)] = avg.conj();
        }
    }
}

pub fn commutator(x: &DMatrix<Complex64>, y: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    x * y - y * x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn dimensions_and_limits() {
        assert_eq!(HilbertSpec::new(4, 2).unwrap().dim(), 20);
        assert_eq!(HilbertSpec::new(4, 0).unwrap().dim(), 5);
        assert!(HilbertSpec::new(0, 1).is_err());
        assert!(HilbertSpec::new(4, 3).is_err());
        assert!(HilbertSpec::new(20, 2).is_err());
        assert!(HilbertSpec::new(15, 2).is_ok());
    }

    #[test]
    fn ladder_commutator_away_from_cutoff() {
        let spec = HilbertSpec::new(5, 1).unwrap();
        let ops = build_operators(&spec).unwrap();
        let c = commutator(&ops.a, &ops.a_dag);
        for k in 0..spec.dim() {
            for l in 0..spec.dim() {
                let expect = if k == l { 1.0 } else { 0.0 };
                if spec.photons(k) < spec.photon_cutoff && spec.photons(l) < spec.photon_cutoff {
                    assert!((c[(k, l)] - Complex64::new(expect, 0.0)).norm() < 1e-14);
                }
            }
        }
        // the truncation only shows up in the top Fock block
        assert!((c[(spec.dim() - 1, spec.dim() - 1)].re + spec.photon_cutoff as f64).abs() < 1e-14);
    }

    #[test]
    fn atom_operators() {
        let spec = HilbertSpec::new(3, 2).unwrap();
        let ops = build_operators(&spec).unwrap();
        for i in 0..2 {
            let sz = commutator(&ops.sigma_plus[i], &ops.sigma_minus[i]);
            // [s+, s-] = sigma_z
            for k in 0..spec.dim() {
                let excited = spec.atom_bits(k) & (1 << i) != 0;
                assert_eq!(sz[(k, k)].re, if excited { 1.0 } else { -1.0 });
            }
            assert!(max_abs(&commutator(&ops.sigma_minus[i], &ops.a)) < 1e-15);
            let sq = &ops.sigma_minus[i] * &ops.sigma_minus[i];
            assert!(max_abs(&sq) == 0.0);
        }
        assert!(max_abs(&commutator(&ops.sigma_minus[0], &ops.sigma_plus[1])) < 1e-15);
    }

    #[test]
    fn number_operator_diagonal() {
        let spec = HilbertSpec::new(4, 1).unwrap();
        let ops = build_operators(&spec).unwrap();
        for k in 0..spec.dim() {
            assert!((ops.number[(k, k)].re - spec.photons(k) as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn embedding_and_hermitize() {
        let spec = HilbertSpec::new(2, 1).unwrap();
        let mut cav = DMatrix::zeros(3, 3);
        cav[(0, 0)] = Complex64::new(0.9, 0.0);
        cav[(1, 1)] = Complex64::new(0.1, 0.0);
        cav[(0, 1)] = Complex64::new(0.0, 0.2);
        cav[(1, 0)] = Complex64::new(0.0, -0.2);
        let rho = with_ground_atoms(&cav, &spec).unwrap();
        assert_eq!(
            rho[(spec.index(1, 0), spec.index(0, 0))],
            Complex64::new(0.0, -0.2)
        );
        assert!(with_ground_atoms(&cav, &HilbertSpec::new(3, 1).unwrap()).is_err());
        let mut m = rho.clone();
        m[(0, 2)] = Complex64::new(1.0, 1.0);
        hermitize(&mut m);
        assert_eq!(m[(2, 0)], Complex64::new(0.5, -0.6));
        assert_eq!(basis_projector(&spec, 1, 1)[(3, 3)].re, 1.0);
    }
}
