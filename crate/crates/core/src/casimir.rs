//! Casimir-Polder level shifts from a single-Lorentzian scattered Green's function.
//!
//! The scattered Green's tensor trace is modelled as one causal pole at the
//! cavity resonance,
//!
//! ```text
//! Tr G_sc(r, r; w) = A(r) (kappa/2) / (w_res - w - i kappa/2)
//! ```
//!
//! whose imaginary part is a unit-height Lorentzian scaled by `A(r)`. The
//! amplitude follows the mode intensity, with a near-field factor that grows as
//! the cube of the inverse distance to the nearest dielectric surface:
//!
//! ```text
//! A(r) = A0 |u(r)|^2 (1 + (l_s / max(d(r), d_min))^3)
//! ```
//!
//! `A0` is calibrated so that the Purcell factor at the mode centre equals the
//! single-mode value `(3 / 4 pi^2) (lambda^3 / V) Q`. Setting `l_s = 0` leaves
//! the pure mode-expansion amplitude.
//!
//! The ground-state potential is
//! `U_g / hbar = -(mu0 / 2 pi) Int_0^W Im[alpha(w) Tr G_sc(w)] w^2 dw`.
//! For a two-level atom the excited-state polarizability is `-alpha`, and the
//! resonant excited-state term is already carried by the Jaynes-Cummings
//! coupling, so the transition-frequency shift fed to the dynamics is
//! `delta_cp = (U_e - U_g) / hbar = -2 U_g / hbar`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cavity::{CavityModel, Vec3};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::units::{AtomSpecies, C, HBAR, MU0, NM};

/// Upper frequency cutoff in units of the cavity resonance.
pub const DEFAULT_CUTOFF_FACTOR: f64 = 10.0;
pub const DEFAULT_REL_TOL: f64 = 1e-6;
pub const DEFAULT_SURFACE_LENGTH: f64 = 20.0 * NM;
pub const DEFAULT_MIN_SURFACE_DISTANCE: f64 = 5.0 * NM;

/// Single-pole model of the scattered Green's tensor trace.
#[derive(Debug, Clone)]
pub struct LorentzianGreen {
    pub omega_res: f64,
    pub kappa: f64,
    /// Amplitude prefactor A0, 1/m.
    pub peak_amplitude: f64,
    /// Near-field length l_s, m.
    pub surface_length: f64,
    /// Saturation distance d_min, m.
    pub min_surface_distance: f64,
    cavity: CavityModel,
}

impl LorentzianGreen {
    pub fn new(
        cavity: &CavityModel,
        peak_amplitude: f64,
        surface_length: f64,
        min_surface_distance: f64,
    ) -> Result<Self> {
        if !(peak_amplitude >= 0.0) || !(surface_length >= 0.0) || !(min_surface_distance > 0.0) {
            return Err(Error::Config(format!(
                "invalid Green's function parameters: A0 = {peak_amplitude}, l_s = {surface_length}, d_min = {min_surface_distance}"
            )));
        }
        Ok(Self {
            omega_res: cavity.omega_res,
            kappa: cavity.kappa(),
            peak_amplitude,
            surface_length,
            min_surface_distance,
            cavity: cavity.clone(),
        })
    }

    /// Calibrates A0 so that the on-resonance Purcell factor at the mode centre
    /// equals [`single_mode_purcell`].
    pub fn calibrated(
        cavity: &CavityModel,
        surface_length: f64,
        min_surface_distance: f64,
    ) -> Result<Self> {
        let mut model = Self::new(cavity, 1.0, surface_length, min_surface_distance)?;
        let target = single_mode_purcell(cavity);
        let unit = model.amplitude(&Vec3::zeros());
        model.peak_amplitude = (target - 1.0) * free_space_trace_im(cavity.omega_res) / unit;
        Ok(model)
    }

    pub fn surface_factor(&self, r: &Vec3) -> f64 {
        if self.surface_length == 0.0 {
            return 1.0;
        }
        let d = self
            .cavity
            .geometry
            .distance_to_dielectric(r)
            .max(self.min_surface_distance);
        1.0 + (self.surface_length / d).powi(3)
    }

    /// A(r), 1/m.
    pub fn amplitude(&self, r: &Vec3) -> f64 {
        let u = self.cavity.mode_amplitude(r);
        self.peak_amplitude * u * u * self.surface_factor(r)
    }

    /// Complex trace of the scattered Green's tensor per unit amplitude.
    pub fn unit_trace(&self, omega: f64) -> Complex64 {
        let half = 0.5 * self.kappa;
        Complex64::new(half, 0.0) / Complex64::new(self.omega_res - omega, -half)
    }

    pub fn trace(&self, r: &Vec3, omega: f64) -> Complex64 {
        self.unit_trace(omega) * self.amplitude(r)
    }

    pub fn cavity(&self) -> &CavityModel {
        &self.cavity
    }
}

/// Im Tr G_sc(r, r; w) = A(r) (kappa/2)^2 / ((w - w_res)^2 + (kappa/2)^2).
pub fn green_trace_im(model: &LorentzianGreen, r: &Vec3, omega: f64) -> f64 {
    let half = 0.5 * model.kappa;
    let detuning = omega - model.omega_res;
    model.amplitude(r) * half * half / (detuning * detuning + half * half)
}

/// Im Tr G_0(w) = w / (2 pi c) in free space.
pub fn free_space_trace_im(omega: f64) -> f64 {
    omega / (2.0 * PI * C)
}

/// `(3 / 4 pi^2) (lambda^3 / V) Q` with n_eff = 1.
pub fn single_mode_purcell(cavity: &CavityModel) -> f64 {
    3.0 / (4.0 * PI * PI) * cavity.wavelength().powi(3) / cavity.mode_volume * cavity.quality_factor
}

/// Isotropic two-level Lorentz polarizability of a ground-state atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polarizability {
    pub omega_a: f64,
    pub dipole: f64,
    pub gamma: f64,
}

impl From<&AtomSpecies> for Polarizability {
    fn from(atom: &AtomSpecies) -> Self {
        Self {
            omega_a: atom.omega_a,
            dipole: atom.dipole,
            gamma: atom.gamma,
        }
    }
}

impl Polarizability {
    /// `alpha(w) = (d^2/hbar) [1/(w_a - w - i g/2) + 1/(w_a + w + i g/2)]`, C^2 m^2 / J.
    pub fn alpha(&self, omega: f64) -> Complex64 {
        let half = 0.5 * self.gamma;
        let scale = self.dipole * self.dipole / HBAR;
        let one = Complex64::new(1.0, 0.0);
        (one / Complex64::new(self.omega_a - omega, -half)
            + one / Complex64::new(self.omega_a + omega, half))
            * scale
    }
}

pub fn polarizability_im(p: &Polarizability, omega: f64) -> f64 {
    p.alpha(omega).im
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureSettings {
    pub cutoff_factor: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            cutoff_factor: DEFAULT_CUTOFF_FACTOR,
            rel_tol: DEFAULT_REL_TOL,
            max_intervals: 5000,
        }
    }
}

/// Interior points that isolate the two narrow resonances (widths gamma and kappa).
fn resonance_breakpoints(model: &LorentzianGreen, p: &Polarizability) -> Vec<f64> {
    let mut pts = Vec::new();
    for centre in [model.omega_res, p.omega_a] {
        pts.push(centre);
        for width in [model.kappa, p.gamma] {
            for k in [1.0, 10.0, 100.0, 1000.0] {
                pts.push(centre - k * width);
                pts.push(centre + k * width);
            }
        }
    }
    pts
}

/// `Im[alpha(w) G_unit(w)] w^2`, the integrand per unit Green's amplitude.
pub fn unit_integrand(model: &LorentzianGreen, p: &Polarizability, omega: f64) -> f64 {
    (p.alpha(omega) * model.unit_trace(omega)).im * omega * omega
}

/// `-(mu0 / 2 pi) Int_0^W Im[alpha G_unit] w^2 dw`, the ground-state potential per unit amplitude (rad/s * m).
pub fn unit_potential(
    model: &LorentzianGreen,
    p: &Polarizability,
    settings: &QuadratureSettings,
) -> Result<f64> {
    let upper = settings.cutoff_factor * model.omega_res;
    let res = quadrature::integrate(
        |w| unit_integrand(model, p, w),
        0.0,
        upper,
        &resonance_breakpoints(model, p),
        settings.rel_tol,
        0.0,
        settings.max_intervals,
    )?;
    Ok(-MU0 / (2.0 * PI) * res.value)
}

/// Ground-state Casimir-Polder potential U_g(r) / hbar, rad/s.
pub fn cp_potential(model: &LorentzianGreen, p: &Polarizability, r: &Vec3) -> Result<f64> {
    let a = model.amplitude(r);
    if a == 0.0 {
        return Ok(0.0);
    }
    Ok(a * unit_potential(model, p, &QuadratureSettings::default())?)
}

/// Transition-frequency shift `(U_e - U_g) / hbar = -2 U_g / hbar`, rad/s.
pub fn cp_shift(model: &LorentzianGreen, p: &Polarizability, r: &Vec3) -> Result<f64> {
    Ok(-2.0 * cp_potential(model, p, r)?)
}

/// Evaluates the frequency integral once; the shift is linear in A(r).
#[derive(Debug, Clone)]
pub struct CasimirPolder {
    pub green: LorentzianGreen,
    pub polarizability: Polarizability,
    unit_shift: f64,
}

impl CasimirPolder {
    pub fn new(
        green: LorentzianGreen,
        polarizability: Polarizability,
        settings: &QuadratureSettings,
    ) -> Result<Self> {
        let unit_shift = -2.0 * unit_potential(&green, &polarizability, settings)?;
        Ok(Self {
            green,
            polarizability,
            unit_shift,
        })
    }

    pub fn shift(&self, r: &Vec3) -> f64 {
        let a = self.green.amplitude(r);
        if a == 0.0 {
            0.0
        } else {
            a * self.unit_shift
        }
    }

    pub fn potential(&self, r: &Vec3) -> f64 {
        -0.5 * self.shift(r)
    }

    pub fn unit_shift(&self) -> f64 {
        self.unit_shift
    }
}

/// `F_P(w) = Im Tr G_sc / Im Tr G_0 + 1`.
pub fn purcell_spectrum(model: &LorentzianGreen, r: &Vec3, omegas: &[f64]) -> Vec<f64> {
    omegas
        .iter()
        .map(|&w| green_trace_im(model, r, w) / free_space_trace_im(w) + 1.0)
        .collect()
}

/// Regular grid on which the shift is tabulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub spacing: f64,
    pub half_extent: [f64; 3],
}

impl GridSpec {
    /// 10 nm spacing over +-(2 sx, 2 sy, 2 sz).
    pub fn around_mode(cavity: &CavityModel) -> Self {
        let [sx, sy, sz] = cavity.mode_widths;
        Self {
            spacing: 10.0 * NM,
            half_extent: [2.0 * sx, 2.0 * sy, 2.0 * sz],
        }
    }

    fn dims(&self) -> [usize; 3] {
        self.half_extent
            .map(|h| (2.0 * h / self.spacing).round() as usize + 1)
    }
}

/// Tabulated line shift with trilinear interpolation; zero outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CPField {
    pub dims: [usize; 3],
    pub spacing: f64,
    pub origin: Vec3,
    /// Shift per node, rad/s, x fastest.
    pub values: Vec<f64>,
    /// False for nodes inside the dielectric; their value is the saturated surface value.
    pub valid: Vec<bool>,
    pub key: String,
}

#[derive(Serialize)]
struct CacheKey<'a> {
    omega_res: f64,
    kappa: f64,
    peak_amplitude: f64,
    surface_length: f64,
    min_surface_distance: f64,
    mode_widths: [f64; 3],
    width: f64,
    height: f64,
    period: f64,
    mirror_hole_radius: f64,
    taper_radii: &'a [f64],
    mirror_holes_per_side: usize,
    omega_a: f64,
    dipole: f64,
    gamma: f64,
    unit_shift: f64,
    grid: GridSpec,
}

/// Hex SHA-256 of every parameter that determines the field.
pub fn cache_key(cp: &CasimirPolder, grid: &GridSpec) -> String {
    let g = &cp.green;
    let geo = &g.cavity.geometry;
    let key = CacheKey {
        omega_res: g.omega_res,
        kappa: g.kappa,
        peak_amplitude: g.peak_amplitude,
        surface_length: g.surface_length,
        min_surface_distance: g.min_surface_distance,
        mode_widths: g.cavity.mode_widths,
        width: geo.width,
        height: geo.height,
        period: geo.period,
        mirror_hole_radius: geo.mirror_hole_radius,
        taper_radii: &geo.taper_radii,
        mirror_holes_per_side: geo.mirror_holes_per_side,
        omega_a: cp.polarizability.omega_a,
        dipole: cp.polarizability.dipole,
        gamma: cp.polarizability.gamma,
        unit_shift: cp.unit_shift,
        grid: *grid,
    };
    let json = serde_json::to_string(&key).expect("cache key serialises");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Samples the line shift on `grid`. A spacing coarser than sz/4 is an error in strict mode
/// and a warning otherwise.
pub fn build_cp_field(cp: &CasimirPolder, grid: &GridSpec, strict: bool) -> Result<CPField> {
    let sz = cp.green.cavity.mode_widths[2];
    if !(grid.spacing > 0.0) || grid.half_extent.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::Config(format!("invalid CP grid {grid:?}")));
    }
    if grid.spacing > sz / 4.0 {
        let msg = format!(
            "CP grid spacing {:.1} nm is coarser than sz/4 = {:.1} nm",
            grid.spacing / NM,
            sz / 4.0 / NM
        );
        if strict {
            return Err(Error::Config(msg));
        }
        log::warn!("{msg}");
    }
    let dims = grid.dims();
    let origin = Vec3::new(
        -grid.half_extent[0],
        -grid.half_extent[1],
        -grid.half_extent[2],
    );
    let n = dims.iter().product::<usize>();
    let geometry = &cp.green.cavity.geometry;
    let (values, valid): (Vec<f64>, Vec<bool>) = (0..n)
        .into_par_iter()
        .map(|idx| {
            let r = node_position(dims, grid.spacing, &origin, idx);
            (cp.shift(&r), !geometry.is_inside_dielectric(&r))
        })
        .unzip();
    Ok(CPField {
        dims,
        spacing: grid.spacing,
        origin,
        values,
        valid,
        key: cache_key(cp, grid),
    })
}

fn node_position(dims: [usize; 3], spacing: f64, origin: &Vec3, idx: usize) -> Vec3 {
    let i = idx % dims[0];
    let j = (idx / dims[0]) % dims[1];
    let k = idx / (dims[0] * dims[1]);
    origin + Vec3::new(i as f64, j as f64, k as f64) * spacing
}

impl CPField {
    /// A field that is zero everywhere (CP shifts disabled).
    pub fn zero() -> Self {
        Self {
            dims: [1, 1, 1],
            spacing: 1.0,
            origin: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            values: vec![0.0],
            valid: vec![true],
            key: String::from("zero"),
        }
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn node(&self, idx: usize) -> Vec3 {
        node_position(self.dims, self.spacing, &self.origin, idx)
    }

    /// Trilinear interpolation; zero outside the sampled box.
    pub fn query(&self, r: &Vec3) -> f64 {
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let u = (r[a] - self.origin[a]) / self.spacing;
            let last = (self.dims[a] - 1) as f64;
            if !(u >= 0.0 && u <= last) {
                return 0.0;
            }
            if self.dims[a] == 1 {
                base[a] = 0;
                frac[a] = 0.0;
                continue;
            }
            let i = (u.floor() as usize).min(self.dims[a] - 2);
            base[a] = i;
            frac[a] = u - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8usize {
            let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if off[a] == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w == 0.0 {
                continue;
            }
            let idx = self.index(
                (base[0] + off[0]).min(self.dims[0] - 1),
                (base[1] + off[1]).min(self.dims[1] - 1),
                (base[2] + off[2]).min(self.dims[2] - 1),
            );
            acc += w * self.values[idx];
        }
        acc
    }

    /// Column text: header `nx ny nz dx dy dz`, then `x y z shift valid` per node
    /// (shift in rad/s). A `# key <hash>` comment carries the cache key.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# key {}", self.key)?;
        writeln!(w, "# x y z shift valid")?;
        writeln!(
            w,
            "{} {} {} {:e} {:e} {:e}",
            self.dims[0], self.dims[1], self.dims[2], self.spacing, self.spacing, self.spacing
        )?;
        for idx in 0..self.values.len() {
            let r = self.node(idx);
            writeln!(
                w,
                "{:e} {:e} {:e} {:e} {}",
                r.x,
                r.y,
                r.z,
                self.values[idx],
                u8::from(self.valid[idx])
            )?;
        }
        Ok(())
    }

    pub fn read_from(reader: impl BufRead) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            context: format!("CP field line {line}"),
            message,
        };
        let mut key = String::new();
        let mut header: Option<([usize; 3], f64)> = None;
        let mut origin = None;
        let mut values = Vec::new();
        let mut valid = Vec::new();
        for (ln, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(rest) = t.strip_prefix('#') {
                if let Some(k) = rest.trim().strip_prefix("key ") {
                    key = k.trim().to_string();
                }
                continue;
            }
            let cols: Vec<&str> = t.split_whitespace().collect();
            if header.is_none() {
                if cols.len() != 6 {
                    return Err(err(
                        ln + 1,
                        format!("header needs `nx ny nz dx dy dz`, got `{t}`"),
                    ));
                }
                let mut dims = [0usize; 3];
                for a in 0..3 {
                    dims[a] = cols[a].parse().map_err(|e| err(ln + 1, format!("{e}")))?;
                }
                let spacing: f64 = cols[3].parse().map_err(|e| err(ln + 1, format!("{e}")))?;
                header = Some((dims, spacing));
                continue;
            }
            if cols.len() != 5 {
                return Err(err(
                    ln + 1,
                    format!("expected 5 columns, got {}", cols.len()),
                ));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(ln + 1, format!("{e}")));
            let r = Vec3::new(num(cols[0])?, num(cols[1])?, num(cols[2])?);
            origin.get_or_insert(r);
            values.push(num(cols[3])?);
            valid.push(cols[4] != "0");
        }
        let (dims, spacing) = header.ok_or_else(|| err(0, "missing header".into()))?;
        if values.len() != dims.iter().product::<usize>() {
            return Err(err(
                0,
                format!(
                    "expected {} nodes, got {}",
                    dims.iter().product::<usize>(),
                    values.len()
                ),
            ));
        }
        Ok(Self {
            dims,
            spacing,
            origin: origin.unwrap_or_else(Vec3::zeros),
            values,
            valid,
            key,
        })
    }
}

/// A sample of the line shift along one of the two reference rays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayPoint {
    pub ray: &'static str,
    /// Distance travelled along the ray from its start.
    pub s: f64,
    pub position: Vec3,
    pub surface_distance: f64,
    pub shift: f64,
}

/// Line shift along the +z ray from the top surface above the central hole
/// (out to `z_length`) and along the +y ray from the hole centre to its wall.
pub fn line_shift_rays(cp: &CasimirPolder, points: usize, z_length: f64) -> Vec<RayPoint> {
    let geometry = &cp.green.cavity.geometry;
    let h = geometry.height / 2.0;
    let wall = geometry
        .holes()
        .iter()
        .find(|h| h.x == 0.0)
        .map(|h| h.radius)
        .unwrap_or(0.0);
    let n = points.max(2);
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        let s = z_length * k as f64 / (n - 1) as f64;
        let r = Vec3::new(0.0, 0.0, h + s);
        out.push(RayPoint {
            ray: "z",
            s,
            position: r,
            surface_distance: geometry.distance_to_dielectric(&r),
            shift: cp.shift(&r),
        });
    }
    // stop short of the wall, where the distance floor takes over
    let y_end = (wall - cp.green.min_surface_distance).max(0.0);
    for k in 0..n {
        let s = y_end * k as f64 / (n - 1) as f64;
        let r = Vec3::new(0.0, s, 0.0);
        out.push(RayPoint {
            ray: "y",
            s,
            position: r,
            surface_distance: geometry.distance_to_dielectric(&r),
            shift: cp.shift(&r),
        });
    }
    out
}

/// CSV `ray,s_nm,x_nm,y_nm,z_nm,surface_distance_nm,shift_mhz` (ordinary frequency).
pub fn write_rays_csv(points: &[RayPoint], mut w: impl Write) -> Result<()> {
    writeln!(w, "ray,s_nm,x_nm,y_nm,z_nm,surface_distance_nm,shift_mhz")?;
    for p in points {
        writeln!(
            w,
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.9e}",
            p.ray,
            p.s / NM,
            p.position.x / NM,
            p.position.y / NM,
            p.position.z / NM,
            p.surface_distance / NM,
            crate::units::angular_to_mhz(p.shift)
        )?;
    }
    Ok(())
}
