//! Run configuration (TOML) and run manifests (JSON).
//!
//! Lengths are in nm, times in ns, velocities in m/s and frequencies in GHz
//! (ordinary, not angular). Every field has a default; the defaults describe the
//! central transit at 200 m/s through the Table-1 cavity.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::casimir::{
    build_cp_field, CPField, CasimirPolder, GridSpec, LorentzianGreen, QuadratureSettings,
};
use crate::cavity::{BeamGeometry, CavityModel, Vec3};
use crate::dynamics::integrator::Dopri5Options;
use crate::dynamics::EvolveOptions;
use crate::ensemble::{Model, Normalization, SweepSpec};
use crate::error::{Error, Result};
use crate::trajectory::{EnsembleSpec, Preset, SamplerKind, SimBox, Trajectory, WallSpec};
use crate::units::{
    angular_frequency_from_wavelength, default_rubidium, ghz_to_angular, AtomSpecies, NM, NS, PS,
};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub cavity: CavityConfig,
    pub atom: AtomConfig,
    pub casimir: CasimirConfig,
    pub single: SingleConfig,
    pub pair: PairConfig,
    pub ensemble: EnsembleConfig,
    #[serde(rename = "box")]
    pub sim_box: BoxConfig,
    pub sweep: SweepConfig,
    pub integrator: IntegratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            workers: 0,
            cavity: CavityConfig::default(),
            atom: AtomConfig::default(),
            casimir: CasimirConfig::default(),
            single: SingleConfig::default(),
            pair: PairConfig::default(),
            ensemble: EnsembleConfig::default(),
            sim_box: BoxConfig::default(),
            sweep: SweepConfig::default(),
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavityConfig {
    pub wavelength_nm: f64,
    pub quality_factor: f64,
    /// In units of lambda^3.
    pub mode_volume: f64,
    pub mode_widths_nm: [f64; 3],
    /// Peak coupling g_max / 2pi in GHz; derived from the dipole and mode volume when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_max_ghz: Option<f64>,
    pub beam: BeamConfig,
}

impl Default for CavityConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 780.0,
            quality_factor: 65_000.0,
            mode_volume: 0.08,
            mode_widths_nm: [450.0, 160.0, 140.0],
            g_max_ghz: None,
            beam: BeamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamConfig {
    pub width_nm: f64,
    pub height_nm: f64,
    pub period_nm: f64,
    /// Central hole first.
    pub taper_radii_nm: Vec<f64>,
    pub mirror_hole_radius_nm: f64,
    pub mirror_holes_per_side: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            width_nm: 420.0,
            height_nm: 250.0,
            period_nm: 325.0,
            taper_radii_nm: vec![63.0, 67.0, 73.0, 81.0],
            mirror_hole_radius_nm: 91.0,
            mirror_holes_per_side: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Rb87,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtomConfig {
    pub species: Species,
}

impl Default for AtomConfig {
    fn default() -> Self {
        Self {
            species: Species::Rb87,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CasimirConfig {
    /// Feed the line shift into the dynamics.
    pub enabled: bool,
    pub surface_length_nm: f64,
    pub min_surface_distance_nm: f64,
    pub grid_spacing_nm: f64,
    /// Reject grids coarser than sz / 4 instead of warning.
    pub strict: bool,
    pub cutoff_factor: f64,
    pub rel_tol: f64,
}

impl Default for CasimirConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            surface_length_nm: 20.0,
            min_surface_distance_nm: 5.0,
            grid_spacing_nm: 10.0,
            strict: false,
            cutoff_factor: 10.0,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleConfig {
    pub preset: Preset,
    /// Overrides the preset start point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_nm: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub velocity_m_s: Option<[f64; 3]>,
}

impl Default for SingleConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Fig4a,
            position_nm: None,
            velocity_m_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairConfig {
    pub delay_ns: f64,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self { delay_ns: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Thermal,
    Liad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub sampler: Sampler,
    pub count: usize,
    pub temperature_k: f64,
    pub wall_z_nm: f64,
    pub wall_center_nm: [f64; 2],
    pub wall_size_nm: [f64; 2],
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            sampler: Sampler::Liad,
            count: 2000,
            temperature_k: 300.0,
            wall_z_nm: -2000.0,
            wall_center_nm: [0.0, 0.0],
            wall_size_nm: [4000.0, 4000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxConfig {
    pub min_nm: [f64; 3],
    pub max_nm: [f64; 3],
}

impl Default for BoxConfig {
    fn default() -> Self {
        Self {
            min_nm: [-2500.0; 3],
            max_nm: [2500.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub points: usize,
    /// Grid half-width in units of g_max.
    pub span_g_max: f64,
    /// Explicit cavity-laser detunings, GHz; replaces `points` and `span_g_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_cl_ghz: Option<Vec<f64>>,
    pub t_obs_ns: f64,
    pub time_samples: usize,
    pub photon_cutoff: usize,
    /// Probe amplitude in units of kappa.
    pub drive_over_kappa: f64,
    pub normalization: Normalization,
    pub settle_lifetimes: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_ps: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            points: 201,
            span_g_max: 3.0,
            delta_cl_ghz: None,
            t_obs_ns: 10.0,
            time_samples: 201,
            photon_cutoff: 4,
            drive_over_kappa: 0.05,
            normalization: Normalization::EmptyCavity,
            settle_lifetimes: 40.0,
            dt_ps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub trace_tol: f64,
    pub positivity_tol: f64,
    pub cutoff_tol: f64,
    pub eig_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        let e = EvolveOptions::default();
        Self {
            rtol: e.integrator.rtol,
            atol: e.integrator.atol,
            trace_tol: e.trace_tol,
            positivity_tol: e.positivity_tol,
            cutoff_tol: e.cutoff_tol,
            eig_stride: e.eig_stride,
        }
    }
}

fn parse_error(context: impl Into<String>, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        context: context.into(),
        message: e.to_string(),
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| parse_error("config", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| parse_error(path.display().to_string(), e))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| parse_error("config", e))
    }

    pub fn build_cavity(&self) -> Result<CavityModel> {
        let c = &self.cavity;
        let lambda = c.wavelength_nm * NM;
        let b = &c.beam;
        let cavity = CavityModel::new(
            angular_frequency_from_wavelength(lambda)?,
            c.quality_factor,
            c.mode_volume * lambda.powi(3),
            c.mode_widths_nm.map(|s| s * NM),
            BeamGeometry {
                width: b.width_nm * NM,
                height: b.height_nm * NM,
                period: b.period_nm * NM,
                mirror_hole_radius: b.mirror_hole_radius_nm * NM,
                taper_radii: b.taper_radii_nm.iter().map(|r| r * NM).collect(),
                mirror_holes_per_side: b.mirror_holes_per_side,
            },
        )?;
        match c.g_max_ghz {
            Some(f) => cavity.with_peak_coupling(ghz_to_angular(f)),
            None => Ok(cavity),
        }
    }

    pub fn build_atom(&self) -> AtomSpecies {
        match self.atom.species {
            Species::Rb87 => default_rubidium(),
        }
    }

    pub fn build_casimir(&self, cavity: &CavityModel, atom: &AtomSpecies) -> Result<CasimirPolder> {
        let c = &self.casimir;
        let green = LorentzianGreen::calibrated(
            cavity,
            c.surface_length_nm * NM,
            c.min_surface_distance_nm * NM,
        )?;
        let settings = QuadratureSettings {
            cutoff_factor: c.cutoff_factor,
            rel_tol: c.rel_tol,
            ..QuadratureSettings::default()
        };
        CasimirPolder::new(green, atom.into(), &settings)
    }

    pub fn cp_grid(&self, cavity: &CavityModel) -> GridSpec {
        GridSpec {
            spacing: self.casimir.grid_spacing_nm * NM,
            ..GridSpec::around_mode(cavity)
        }
    }

    /// Tabulated line shift, or a zero field when the shift is disabled.
    pub fn build_cp_field(&self, cavity: &CavityModel, atom: &AtomSpecies) -> Result<CPField> {
        if !self.casimir.enabled {
            return Ok(CPField::zero());
        }
        let cp = self.build_casimir(cavity, atom)?;
        build_cp_field(&cp, &self.cp_grid(cavity), self.casimir.strict)
    }

    pub fn sim_box(&self) -> Result<SimBox> {
        let b = SimBox {
            min: self.sim_box.min_nm.map(|v| v * NM),
            max: self.sim_box.max_nm.map(|v| v * NM),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn build_model(&self) -> Result<Model> {
        let cavity = self.build_cavity()?;
        let atom = self.build_atom();
        let cp_field = self.build_cp_field(&cavity, &atom)?;
        Ok(Model {
            cavity,
            atom,
            cp_field,
            sim_box: self.sim_box()?,
        })
    }

    pub fn build_sweep(&self, model: &Model) -> Result<SweepSpec> {
        let s = &self.sweep;
        let i = &self.integrator;
        let delta_cl = match &s.delta_cl_ghz {
            Some(v) => v.iter().map(|&f| ghz_to_angular(f)).collect(),
            None => {
                if s.points == 0 {
                    return Err(Error::Config("sweep.points must be at least 1".into()));
                }
                SweepSpec::symmetric_grid(s.span_g_max * model.g_max(), s.points)
            }
        };
        let sweep = SweepSpec {
            delta_cl,
            t_obs: s.t_obs_ns * NS,
            time_samples: s.time_samples,
            photon_cutoff: s.photon_cutoff,
            eps_p: s.drive_over_kappa * model.cavity.kappa(),
            atom_cavity_detuning: model.atom.omega_a - model.cavity.omega_res,
            normalization: s.normalization,
            evolve: EvolveOptions {
                integrator: Dopri5Options {
                    rtol: i.rtol,
                    atol: i.atol,
                    ..Dopri5Options::default()
                },
                trace_tol: i.trace_tol,
                positivity_tol: i.positivity_tol,
                cutoff_tol: i.cutoff_tol,
                eig_stride: i.eig_stride,
            },
            settle_lifetimes: s.settle_lifetimes,
            dt: s.dt_ps.map(|d| d * PS),
        };
        sweep.validate()?;
        Ok(sweep)
    }

    pub fn single_trajectory(&self) -> Trajectory {
        let (r0, v0) = self.single.preset.initial_conditions();
        let r0 = self
            .single
            .position_nm
            .map(|p| Vec3::from(p.map(|x| x * NM)))
            .unwrap_or(r0);
        let v0 = self.single.velocity_m_s.map(Vec3::from).unwrap_or(v0);
        Trajectory::launch(0, r0, v0, 0.0)
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        let e = &self.ensemble;
        Ok(EnsembleSpec {
            kind: match e.sampler {
                Sampler::Thermal => SamplerKind::ThermalBox,
                Sampler::Liad => SamplerKind::LiadWall,
            },
            temperature: e.temperature_k,
            count: e.count,
            seed: self.seed,
            sim_box: self.sim_box()?,
            wall: WallSpec {
                z: e.wall_z_nm * NM,
                center: e.wall_center_nm.map(|v| v * NM),
                size: e.wall_size_nm.map(|v| v * NM),
            },
            preset: self.single.preset,
            delay: self.pair.delay_ns * NS,
        })
    }
}

/// A written output file and its SHA-256.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    /// Command-specific arguments after config resolution.
    pub arguments: BTreeMap<String, String>,
    pub config: RunConfig,
    pub seed: u64,
    pub package_version: String,
    pub outputs: Vec<OutputRecord>,
    pub timings_s: BTreeMap<String, f64>,
    #[serde(default)]
    pub summary: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.to_string(),
            arguments: BTreeMap::new(),
            config: config.clone(),
            seed: config.seed,
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            timings_s: BTreeMap::new(),
            summary: BTreeMap::new(),
        }
    }

    /// Hashes `path` and records it relative to `base`.
    pub fn record_output(&mut self, base: &Path, path: &Path) -> Result<()> {
        let rel = path.strip_prefix(base).unwrap_or(path);
        self.outputs.push(OutputRecord {
            path: rel.to_string_lossy().into_owned(),
            sha256: file_sha256(path)?,
        });
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| parse_error("manifest", e))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(s).map_err(|e| parse_error("manifest", e))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(parse_error(
                "manifest",
                format!(
                    "unsupported schema version {} (expected {MANIFEST_SCHEMA_VERSION})",
                    m.schema_version
                ),
            ));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::default_rubidium;

    #[test]
    fn defaults_describe_the_central_transit() {
        let cfg = RunConfig::default();
        let t = cfg.single_trajectory();
        assert_eq!(t.r0, Vec3::new(0.0, 0.0, 600.0 * NM));
        assert_eq!(t.v0, Vec3::new(0.0, 0.0, -200.0));
        let cav = cfg.build_cavity().unwrap();
        let table = CavityModel::table_one();
        assert!((cav.kappa() / table.kappa() - 1.0).abs() < 1e-12);
        assert!((cav.mode_volume / table.mode_volume - 1.0).abs() < 1e-12);
        let (a, b) = (&cav.geometry, &table.geometry);
        assert!((a.height - b.height).abs() < 1e-20 && (a.width - b.width).abs() < 1e-20);
        assert_eq!(a.holes().len(), b.holes().len());
        assert_eq!(cfg.sim_box().unwrap(), SimBox::default());
        let spec = cfg.ensemble_spec().unwrap();
        assert!((spec.wall.z - WallSpec::default().z).abs() < 1e-20);
        assert_eq!(cfg.build_atom(), default_rubidium());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig {
            seed: 42,
            ..Default::default()
        };
        cfg.single.position_nm = Some([1.5, -2.25, 600.125]);
        cfg.sweep.delta_cl_ghz = Some(vec![-1.0 / 3.0, 0.0, 0.1]);
        cfg.sweep.dt_ps = Some(0.1);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_toml_str("sead = 3"),
            Err(Error::Parse { .. })
        ));
        let cfg = RunConfig::from_toml_str("[cavity]\ng_max_ghz = 15.0").unwrap();
        let g = cfg.build_cavity().unwrap().g_max(&default_rubidium());
        assert!((g - ghz_to_angular(15.0)).abs() < 1e-3);
        assert!(RunConfig::from_toml_str("[sweep]\npoint = 3").is_err());
        assert!(RunConfig::from_toml_str("[single]\npreset = \"fig9\"").is_err());
        let cfg = RunConfig::from_toml_str(
            "[single]\npreset = \"fig4c\"\n[ensemble]\nsampler = \"thermal\"",
        )
        .unwrap();
        assert_eq!(cfg.single.preset, Preset::Fig4c);
        assert_eq!(cfg.ensemble.sampler, Sampler::Thermal);
    }

    #[test]
    fn sweep_from_config() {
        let mut cfg = RunConfig::default();
        cfg.casimir.enabled = false;
        let model = cfg.build_model().unwrap();
        let sweep = cfg.build_sweep(&model).unwrap();
        assert_eq!(sweep.delta_cl.len(), 201);
        assert!((sweep.delta_cl[200] - 3.0 * model.g_max()).abs() < 1e-3);
        assert!((sweep.eps_p - model.cavity.kappa() / 20.0).abs() < 1e-6);
        assert!(sweep.atom_cavity_detuning.abs() < 1e3);
        cfg.sweep.delta_cl_ghz = Some(vec![1.0, 0.0]);
        assert!(cfg.build_sweep(&model).is_err());
    }

    #[test]
    fn manifest_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("a.csv");
        fs::write(&file, "x\n1\n").unwrap();
        let mut m = Manifest::new("single", &RunConfig::default());
        m.record_output(dir.path(), &file).unwrap();
        m.timings_s.insert("total".into(), 0.5);
        assert_eq!(m.outputs[0].path, "a.csv");
        let back = Manifest::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let bumped = m
            .to_json()
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(Manifest::from_json(&bumped).is_err());
    }
}
