//! Single-mode model of the nano-beam photonic-crystal cavity.
//!
//! Coordinates: x along the beam, y across its width, z normal to the slab.
//! The origin is the centre of the central air hole, which is also the
//! maximum of the mode function.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::units::{AtomSpecies, EPS0, HBAR, NM};

pub type Vec3 = Vector3<f64>;

/// Radius (in units of the Gaussian widths) beyond which the mode is treated as zero.
pub const MODE_SUPPORT_SIGMAS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hole {
    pub x: f64,
    pub radius: f64,
}

/// Suspended SiN beam perforated by a row of cylindrical air holes along x.
///
/// The central hole sits at `x = 0` with radius `taper_radii[0]`; the remaining
/// taper radii follow at pitch `period` on both sides, then
/// `mirror_holes_per_side` holes of `mirror_hole_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamGeometry {
    pub width: f64,
    pub height: f64,
    pub period: f64,
    pub mirror_hole_radius: f64,
    pub taper_radii: Vec<f64>,
    pub mirror_holes_per_side: usize,
}

impl Default for BeamGeometry {
    fn default() -> Self {
        Self {
            width: 420.0 * NM,
            height: 250.0 * NM,
            period: 325.0 * NM,
            mirror_hole_radius: 91.0 * NM,
            taper_radii: vec![63.0 * NM, 67.0 * NM, 73.0 * NM, 81.0 * NM],
            mirror_holes_per_side: 12,
        }
    }
}

impl BeamGeometry {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("width", self.width),
            ("height", self.height),
            ("period", self.period),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "beam {name} must be positive, got {v}"
                )));
            }
        }
        if self.taper_radii.is_empty() {
            return Err(Error::Config(
                "at least the central hole radius is required".into(),
            ));
        }
        let radii = self
            .taper_radii
            .iter()
            .chain(std::iter::once(&self.mirror_hole_radius));
        for &r in radii {
            if !(r >= 0.0) {
                return Err(Error::Config(format!(
                    "hole radius must be non-negative, got {r}"
                )));
            }
            if r >= self.width / 2.0 {
                return Err(Error::Config(format!(
                    "hole radius {:.1} nm does not fit in a {:.1} nm wide beam",
                    r / NM,
                    self.width / NM
                )));
            }
        }
        let holes = self.holes();
        for pair in holes.windows(2) {
            if pair[0].radius + pair[1].radius >= pair[1].x - pair[0].x {
                return Err(Error::Config(format!(
                    "holes at x = {:.1} nm and x = {:.1} nm overlap",
                    pair[0].x / NM,
                    pair[1].x / NM
                )));
            }
        }
        Ok(())
    }

    /// Index of the outermost hole on each side.
    fn last_hole_index(&self) -> usize {
        self.taper_radii.len() - 1 + self.mirror_holes_per_side
    }

    pub fn half_length(&self) -> f64 {
        (self.last_hole_index() as f64 + 0.5) * self.period
    }

    fn hole_radius(&self, index: usize) -> f64 {
        self.taper_radii
            .get(index)
            .copied()
            .unwrap_or(self.mirror_hole_radius)
    }

    /// All holes ordered by x.
    pub fn holes(&self) -> Vec<Hole> {
        let n = self.last_hole_index() as i64;
        (-n..=n)
            .map(|k| Hole {
                x: k as f64 * self.period,
                radius: self.hole_radius(k.unsigned_abs() as usize),
            })
            .collect()
    }

    /// The only hole that can contain a point with this x coordinate.
    fn nearest_hole(&self, x: f64) -> Option<Hole> {
        let k = (x / self.period).round();
        let n = self.last_hole_index() as f64;
        if k.abs() > n {
            return None;
        }
        Some(Hole {
            x: k * self.period,
            radius: self.hole_radius(k.abs() as usize),
        })
    }

    fn in_hole(&self, x: f64, y: f64) -> bool {
        match self.nearest_hole(x) {
            Some(h) => (x - h.x).hypot(y) < h.radius,
            None => false,
        }
    }

    pub fn is_inside_dielectric(&self, r: &Vec3) -> bool {
        r.x.abs() <= self.half_length()
            && r.y.abs() <= self.width / 2.0
            && r.z.abs() <= self.height / 2.0
            && !self.in_hole(r.x, r.y)
    }

    /// Euclidean distance from `r` to the nearest point of the dielectric; zero inside it.
    ///
    /// The solid is (rectangle minus disks) x [-h/2, h/2], so the distance splits
    /// into an in-plane part and a z part.
    pub fn distance_to_dielectric(&self, r: &Vec3) -> f64 {
        let hl = self.half_length();
        let hw = self.width / 2.0;
        let in_rect = r.x.abs() <= hl && r.y.abs() <= hw;
        let d_plane = if in_rect {
            match self.nearest_hole(r.x) {
                Some(h) => {
                    let rho = (r.x - h.x).hypot(r.y);
                    (h.radius - rho).max(0.0)
                }
                None => 0.0,
            }
        } else {
            let dx = (r.x.abs() - hl).max(0.0);
            let dy = (r.y.abs() - hw).max(0.0);
            dx.hypot(dy)
        };
        let dz = (r.z.abs() - self.height / 2.0).max(0.0);
        d_plane.hypot(dz)
    }
}

/// Cavity resonance, loss and mode shape.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityModel {
    pub omega_res: f64,
    pub quality_factor: f64,
    pub mode_volume: f64,
    /// Gaussian widths (sx, sy, sz) of the amplitude profile, m.
    pub mode_widths: [f64; 3],
    pub geometry: BeamGeometry,
    kappa: f64,
    /// Replaces the dipole-coupling formula for g_max when set.
    peak_coupling: Option<f64>,
}

impl CavityModel {
    pub fn new(
        omega_res: f64,
        quality_factor: f64,
        mode_volume: f64,
        mode_widths: [f64; 3],
        geometry: BeamGeometry,
    ) -> Result<Self> {
        if !(omega_res > 0.0) || !(quality_factor > 0.0) || !(mode_volume > 0.0) {
            return Err(Error::Config(format!(
                "cavity needs positive resonance, Q and mode volume (got {omega_res}, {quality_factor}, {mode_volume})"
            )));
        }
        if mode_widths.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config(format!(
                "mode widths must be positive, got {mode_widths:?}"
            )));
        }
        geometry.validate()?;
        Ok(Self {
            omega_res,
            quality_factor,
            mode_volume,
            mode_widths,
            geometry,
            kappa: omega_res / quality_factor,
            peak_coupling: None,
        })
    }

    /// 780 nm resonance, Q = 65 000, V = 0.08 lambda^3 and the default mode widths.
    pub fn table_one() -> Self {
        let lambda = 780.0 * NM;
        Self::new(
            2.0 * PI * crate::units::C / lambda,
            65_000.0,
            0.08 * lambda.powi(3),
            [450.0 * NM, 160.0 * NM, 140.0 * NM],
            BeamGeometry::default(),
        )
        .expect("built-in cavity parameters are valid")
    }

    /// Photon (energy) decay rate omega_res / Q.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn wavelength(&self) -> f64 {
        2.0 * PI * crate::units::C / self.omega_res
    }

    /// Normalised amplitude profile u(r), 1 at the origin.
    pub fn mode_amplitude(&self, r: &Vec3) -> f64 {
        let [sx, sy, sz] = self.mode_widths;
        (-(r.x * r.x) / (2.0 * sx * sx)
            - (r.y * r.y) / (2.0 * sy * sy)
            - (r.z * r.z) / (2.0 * sz * sz))
            .exp()
    }

    /// Squared ellipsoidal radius in units of the mode widths.
    pub fn mode_radius_sq(&self, r: &Vec3) -> f64 {
        let [sx, sy, sz] = self.mode_widths;
        (r.x / sx).powi(2) + (r.y / sy).powi(2) + (r.z / sz).powi(2)
    }

    pub fn in_mode_support(&self, r: &Vec3) -> bool {
        self.mode_radius_sq(r) <= MODE_SUPPORT_SIGMAS * MODE_SUPPORT_SIGMAS
    }

    /// Fixes g_max instead of deriving it from the dipole and mode volume.
    pub fn with_peak_coupling(mut self, g: f64) -> Result<Self> {
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::Config(format!(
                "peak coupling must be non-negative, got {g}"
            )));
        }
        self.peak_coupling = Some(g);
        Ok(self)
    }

    pub fn peak_coupling(&self) -> Option<f64> {
        self.peak_coupling
    }

    pub fn g_max(&self, atom: &AtomSpecies) -> f64 {
        self.peak_coupling
            .unwrap_or_else(|| g_max(self.omega_res, self.mode_volume, atom.dipole))
    }

    pub fn coupling_at(&self, atom: &AtomSpecies, r: &Vec3) -> f64 {
        self.g_max(atom) * self.mode_amplitude(r)
    }

    /// Order-of-magnitude interaction time `h / sigma_v`.
    pub fn transit_time(&self, sigma_v: f64) -> Result<f64> {
        if !(sigma_v > 0.0) {
            return Err(Error::Domain(format!(
                "speed must be positive, got {sigma_v}"
            )));
        }
        Ok(self.geometry.height / sigma_v)
    }
}

/// Peak vacuum Rabi frequency `d * sqrt(omega / (2 hbar eps0 V))`, rad/s.
pub fn g_max(omega_res: f64, mode_volume: f64, dipole: f64) -> f64 {
    (omega_res / (2.0 * HBAR * EPS0 * mode_volume)).sqrt() * dipole
}

/// `g / sqrt(kappa * gamma)`.
pub fn cooperativity(g: f64, kappa: f64, gamma: f64) -> Result<f64> {
    if !(kappa > 0.0) || !(gamma > 0.0) {
        return Err(Error::Domain(format!(
            "decay rates must be positive (kappa = {kappa}, gamma = {gamma})"
        )));
    }
    Ok(g / (kappa * gamma).sqrt())
}

/// Permittivity and field intensity sampled on a regular grid (x fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ModeField {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: Vec3,
    pub eps: Vec<f64>,
    pub intensity: Vec<f64>,
}

impl ModeField {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: Vec3,
        eps: Vec<f64>,
        intensity: Vec<f64>,
    ) -> Result<Self> {
        let n = dims.iter().product::<usize>();
        if n == 0 || eps.len() != n || intensity.len() != n {
            return Err(Error::Config(format!(
                "mode field expects {n} cells, got eps {} / intensity {}",
                eps.len(),
                intensity.len()
            )));
        }
        if spacing.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Config(format!(
                "grid spacing must be positive, got {spacing:?}"
            )));
        }
        if let Some(e) = eps.iter().find(|e| !(**e >= 1.0)) {
            return Err(Error::Config(format!(
                "relative permittivity must be >= 1, got {e}"
            )));
        }
        if let Some(i) = intensity.iter().find(|i| !(**i >= 0.0)) {
            return Err(Error::Config(format!(
                "intensity must be non-negative, got {i}"
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            eps,
            intensity,
        })
    }

    /// Builds a field by evaluating `f(r) -> (eps, intensity)` at every cell centre.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: Vec3,
        f: impl Fn(&Vec3) -> (f64, f64),
    ) -> Result<Self> {
        let n = dims.iter().product();
        let mut eps = Vec::with_capacity(n);
        let mut intensity = Vec::with_capacity(n);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let r = origin
                        + Vec3::new(
                            i as f64 * spacing[0],
                            j as f64 * spacing[1],
                            k as f64 * spacing[2],
                        );
                    let (e, v) = f(&r);
                    eps.push(e);
                    intensity.push(v);
                }
            }
        }
        Self::new(dims, spacing, origin, eps, intensity)
    }

    pub fn position(&self, index: usize) -> Vec3 {
        let [nx, ny, _] = self.dims;
        let i = index % nx;
        let j = (index / nx) % ny;
        let k = index / (nx * ny);
        self.origin
            + Vec3::new(
                i as f64 * self.spacing[0],
                j as f64 * self.spacing[1],
                k as f64 * self.spacing[2],
            )
    }

    /// Text format: a header line `nx ny nz dx dy dz`, then one `x y z eps intensity`
    /// line per cell with x varying fastest. Lines starting with `#` are comments.
    pub fn read_from(reader: impl BufRead) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            context: format!("mode field line {line}"),
            message,
        };
        let mut lines = reader.lines().enumerate().filter(|(_, l)| {
            l.as_ref()
                .map(|s| !s.trim().is_empty() && !s.trim_start().starts_with('#'))
                .unwrap_or(true)
        });
        let (hl, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header".into()))?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(parse_err(
                hl + 1,
                format!("header needs `nx ny nz dx dy dz`, got `{header}`"),
            ));
        }
        let mut dims = [0usize; 3];
        let mut spacing = [0f64; 3];
        for a in 0..3 {
            dims[a] = fields[a]
                .parse()
                .map_err(|e| parse_err(hl + 1, format!("{e}")))?;
            spacing[a] = fields[a + 3]
                .parse()
                .map_err(|e| parse_err(hl + 1, format!("{e}")))?;
        }
        let n: usize = dims.iter().product();
        let mut eps = Vec::with_capacity(n);
        let mut intensity = Vec::with_capacity(n);
        let mut origin = None;
        for (ln, line) in lines {
            let line = line?;
            let vals = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(ln + 1, format!("{e}")))?;
            if vals.len() != 5 {
                return Err(parse_err(
                    ln + 1,
                    format!("expected 5 columns, got {}", vals.len()),
                ));
            }
            origin.get_or_insert(Vec3::new(vals[0], vals[1], vals[2]));
            eps.push(vals[3]);
            intensity.push(vals[4]);
        }
        let origin = origin.ok_or_else(|| parse_err(hl + 1, "no cells".into()))?;
        Self::new(dims, spacing, origin, eps, intensity)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# x y z eps intensity")?;
        writeln!(
            w,
            "{} {} {} {:e} {:e} {:e}",
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.spacing[0],
            self.spacing[1],
            self.spacing[2]
        )?;
        for idx in 0..self.eps.len() {
            let r = self.position(idx);
            writeln!(
                w,
                "{:e} {:e} {:e} {:e} {:e}",
                r.x, r.y, r.z, self.eps[idx], self.intensity[idx]
            )?;
        }
        Ok(())
    }
}

/// Effective mode volume: integral of eps|E|^2 over the grid divided by its maximum.
pub fn mode_volume(field: &ModeField) -> Result<f64> {
    let dv: f64 = field.spacing.iter().product();
    let (sum, max) = field
        .eps
        .iter()
        .zip(&field.intensity)
        .map(|(e, i)| e * i)
        .fold((0.0, 0.0f64), |(s, m), w| (s + w, m.max(w)));
    if !(max > 0.0) {
        return Err(Error::DegenerateField(
            "intensity is zero everywhere".into(),
        ));
    }
    Ok(sum * dv / max)
}
