//! TOML run configuration.
//!
//! One file describes one pair of channels, one energy grid and the solver
//! knobs. Energies are given in units of `E*`; lengths and the optional
//! `c_rep` coefficients in atomic units.

use std::fs;
use std::path::{Path, PathBuf};

use rexch_core::calibration::{CalibrationOptions, CaseTag, PairTemplate};
use rexch_core::correction::ClassifyOptions;
use rexch_core::exchange::SeriesOptions;
use rexch_core::phase_amplitude::EnvelopeOptions;
use rexch_core::potentials::{make_pair, ChannelLabel, ChannelPair, ChannelPotential};
use rexch_core::radial::SolverSettings;
use rexch_core::scales::{derive_scales, TailSpec};
use rexch_core::scan::{log_grid, DeltaASource, ScanOptions};
use rexch_core::units::reduced_mass_amu;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::output::Format;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tail: TailSection,
    pub mass: MassSection,
    pub channel: Channels,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub phase_shifts: PhaseShiftSection,
    pub calibrate: Option<CalibrateSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSection {
    pub n: u32,
    pub c_n: f64,
}

/// Either both atomic masses in amu or the reduced mass in electron masses.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassSection {
    pub amu: Option<[f64; 2]>,
    pub mu_au: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channels {
    pub a: ChannelSection,
    pub b: ChannelSection,
}

/// Exactly one of `r_min`, `c_rep` or `table`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// Position of the well minimum of the `r^-12` core family.
    pub r_min: Option<f64>,
    pub c_rep: Option<f64>,
    /// Two-column `r V` file (atomic units), relative to the config file.
    pub table: Option<PathBuf>,
    /// Radius beyond which a tabulated curve is replaced by the tail.
    pub splice: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Value(f64),
    /// `"ceiling"`: just below `0.2` of the shallower well depth.
    Keyword(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub from: f64,
    pub to: Bound,
    pub per_decade: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub segments: Vec<Segment>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            segments: vec![Segment {
                from: 1e-3,
                to: Bound::Value(1e5),
                per_decade: 5,
            }],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub steps_per_wavelength: f64,
    pub match_tolerance: f64,
    pub max_relative_step: f64,
    pub envelope_rtol: f64,
    /// Numerov steps allowed per radial solve.
    pub max_steps: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverSettings::<f64>::default();
        SolverSection {
            steps_per_wavelength: s.steps_per_wavelength,
            match_tolerance: s.match_tolerance,
            max_relative_step: s.max_relative_step,
            envelope_rtol: EnvelopeOptions::<f64>::default().rtol,
            max_steps: s.max_steps,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    /// Partial waves beyond `ceil(L)`.
    pub margin: usize,
    pub delta_a: DeltaASource,
    pub resonance_factor: f64,
    pub plateau: f64,
    pub unlock_gap: f64,
    pub sustain_decades: f64,
    pub max_drift: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        let c = ClassifyOptions::default();
        ScanSection {
            margin: SeriesOptions::default().margin,
            delta_a: DeltaASource::Envelope,
            resonance_factor: 1e3,
            plateau: c.plateau,
            unlock_gap: c.unlock_gap,
            sustain_decades: c.sustain_decades,
            max_drift: c.max_drift,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseShiftSection {
    /// Highest partial wave; `ceil(L) + margin` when absent.
    pub ell_max: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    pub target: CaseTag,
    pub r_min_bounds: Option<[f64; 2]>,
    pub c_rep_bounds: Option<[f64; 2]>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_bisections")]
    pub max_bisections: usize,
}

fn default_seeds() -> usize {
    CalibrationOptions::default().seeds
}

fn default_tolerance() -> f64 {
    CalibrationOptions::default().tolerance
}

fn default_bisections() -> usize {
    CalibrationOptions::default().max_bisections
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

/// A parsed configuration together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    /// SHA-256 over the physics sections and any table files.
    pub hash: String,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::config(msg)
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} must be positive, got {v}")))
    }
}

/// Sections that change results; output placement is left out of the hash.
#[derive(Serialize)]
struct HashView<'a> {
    tail: &'a TailSection,
    mass: &'a MassSection,
    channel: &'a Channels,
    grid: &'a GridSection,
    solver: &'a SolverSection,
    scan: &'a ScanSection,
    phase_shifts: &'a PhaseShiftSection,
    calibrate: &'a Option<CalibrateSection>,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::parse(&text, base_dir)
    }

    pub fn parse(text: &str, base_dir: PathBuf) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        config.validate()?;
        let mut hasher = Sha256::new();
        let view = HashView {
            tail: &config.tail,
            mass: &config.mass,
            channel: &config.channel,
            grid: &config.grid,
            solver: &config.solver,
            scan: &config.scan,
            phase_shifts: &config.phase_shifts,
            calibrate: &config.calibrate,
        };
        hasher.update(serde_json::to_vec(&view).expect("plain data serializes"));
        for ch in [&config.channel.a, &config.channel.b] {
            if let Some(t) = &ch.table {
                let p = base_dir.join(t);
                let bytes = fs::read(&p)
                    .map_err(|e| bad(format!("cannot read table {}: {e}", p.display())))?;
                hasher.update(&bytes);
            }
        }
        let hash = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(LoadedConfig {
            config,
            base_dir,
            hash,
        })
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        positive("tail.c_n", self.tail.c_n)?;
        match (&self.mass.amu, self.mass.mu_au) {
            (Some([m1, m2]), None) => {
                positive("mass.amu[0]", *m1)?;
                positive("mass.amu[1]", *m2)?;
            }
            (None, Some(mu)) => positive("mass.mu_au", mu)?,
            _ => return Err(bad("give exactly one of mass.amu or mass.mu_au")),
        }
        for (name, ch) in [("a", &self.channel.a), ("b", &self.channel.b)] {
            let given = [ch.r_min.is_some(), ch.c_rep.is_some(), ch.table.is_some()];
            if given.iter().filter(|g| **g).count() != 1 {
                return Err(bad(format!(
                    "channel.{name}: give exactly one of r_min, c_rep or table"
                )));
            }
            if ch.table.is_some() != ch.splice.is_some() {
                return Err(bad(format!(
                    "channel.{name}: splice goes with table and only with table"
                )));
            }
            if let Some(r) = ch.r_min {
                positive(&format!("channel.{name}.r_min"), r)?;
            }
            if let Some(c) = ch.c_rep {
                positive(&format!("channel.{name}.c_rep"), c)?;
            }
        }
        if self.grid.segments.is_empty() {
            return Err(bad("grid.segments is empty"));
        }
        for (i, s) in self.grid.segments.iter().enumerate() {
            positive(&format!("grid.segments[{i}].from"), s.from)?;
            if s.per_decade < 4 {
                return Err(bad(format!(
                    "grid.segments[{i}].per_decade = {} (at least 4)",
                    s.per_decade
                )));
            }
            match &s.to {
                Bound::Value(v) => positive(&format!("grid.segments[{i}].to"), *v)?,
                Bound::Keyword(k) if k == "ceiling" => {}
                Bound::Keyword(k) => {
                    return Err(bad(format!(
                        "grid.segments[{i}].to = \"{k}\" (a number or \"ceiling\")"
                    )))
                }
            }
        }
        let s = &self.solver;
        if !(s.steps_per_wavelength >= 20.0) {
            return Err(bad("solver.steps_per_wavelength must be at least 20"));
        }
        positive("solver.match_tolerance", s.match_tolerance)?;
        positive("solver.max_relative_step", s.max_relative_step)?;
        positive("solver.envelope_rtol", s.envelope_rtol)?;
        if s.max_steps == 0 {
            return Err(bad("solver.max_steps must be positive"));
        }
        let c = &self.scan;
        positive("scan.resonance_factor", c.resonance_factor)?;
        positive("scan.plateau", c.plateau)?;
        positive("scan.unlock_gap", c.unlock_gap)?;
        positive("scan.sustain_decades", c.sustain_decades)?;
        positive("scan.max_drift", c.max_drift)?;
        if let Some(cal) = &self.calibrate {
            if cal.r_min_bounds.is_some() == cal.c_rep_bounds.is_some() {
                return Err(bad(
                    "calibrate: give exactly one of r_min_bounds or c_rep_bounds",
                ));
            }
            positive("calibrate.tolerance", cal.tolerance)?;
            if cal.seeds < 2 {
                return Err(bad("calibrate.seeds must be at least 2"));
            }
            if self.channel.b.table.is_some() {
                return Err(bad(
                    "calibrate: channel b must use the r^-12 core (r_min or c_rep)",
                ));
            }
        }
        Ok(())
    }

    pub fn tail(&self) -> Result<TailSpec<f64>, CliError> {
        Ok(TailSpec::new(self.tail.n, self.tail.c_n)?)
    }

    pub fn mu(&self) -> f64 {
        match (self.mass.amu, self.mass.mu_au) {
            (Some([m1, m2]), _) => reduced_mass_amu(m1, m2),
            (None, Some(mu)) => mu,
            (None, None) => unreachable!("validated"),
        }
    }

    /// `C_rep` placing the minimum of `C_rep/r^12 - C_n/r^n` at `r_min`.
    pub fn c_rep_for(&self, r_min: f64) -> f64 {
        let n = self.tail.n as f64;
        n * self.tail.c_n * r_min.powf(12.0 - n) / 12.0
    }

    /// Inverse of [`RunConfig::c_rep_for`].
    pub fn r_min_for(&self, c_rep: f64) -> f64 {
        let n = self.tail.n as f64;
        (12.0 * c_rep / (n * self.tail.c_n)).powf(1.0 / (12.0 - n))
    }

    fn channel(
        &self,
        label: ChannelLabel,
        sec: &ChannelSection,
        base_dir: &Path,
    ) -> Result<ChannelPotential<f64>, CliError> {
        let tail = self.tail()?;
        if let Some(r) = sec.r_min {
            return Ok(ChannelPotential::power12(label, self.c_rep_for(r), tail)?);
        }
        if let Some(c) = sec.c_rep {
            return Ok(ChannelPotential::power12(label, c, tail)?);
        }
        let path = base_dir.join(sec.table.as_ref().expect("validated"));
        let (r, v) = read_table(&path)?;
        Ok(ChannelPotential::tabulated(
            label,
            r,
            v,
            tail,
            sec.splice.expect("validated"),
        )?)
    }

    pub fn pair(&self, base_dir: &Path) -> Result<ChannelPair<f64>, CliError> {
        let va = self.channel(ChannelLabel::A, &self.channel.a, base_dir)?;
        let vb = self.channel(ChannelLabel::B, &self.channel.b, base_dir)?;
        Ok(make_pair(va, vb, self.mu())?)
    }

    pub fn template(&self, base_dir: &Path) -> Result<Option<PairTemplate<f64>>, CliError> {
        let Some(cal) = &self.calibrate else {
            return Ok(None);
        };
        let pair = self.pair(base_dir)?;
        let bounds = match (cal.r_min_bounds, cal.c_rep_bounds) {
            (Some([lo, hi]), None) => (self.c_rep_for(lo), self.c_rep_for(hi)),
            (None, Some([lo, hi])) => (lo, hi),
            _ => unreachable!("validated"),
        };
        Ok(Some(PairTemplate::new(pair.va, pair.vb, pair.mu, bounds)?))
    }

    pub fn calibration_options(&self) -> Option<CalibrationOptions> {
        self.calibrate.as_ref().map(|c| CalibrationOptions {
            plateau: self.scan.plateau,
            seeds: c.seeds,
            max_bisections: c.max_bisections,
            tolerance: c.tolerance,
        })
    }

    pub fn settings(&self) -> SolverSettings<f64> {
        SolverSettings {
            steps_per_wavelength: self.solver.steps_per_wavelength,
            match_tolerance: self.solver.match_tolerance,
            max_relative_step: self.solver.max_relative_step,
            max_steps: self.solver.max_steps,
            ..SolverSettings::default()
        }
    }

    pub fn scan_options(&self, delta_a: Option<DeltaASource>) -> ScanOptions {
        ScanOptions {
            series: SeriesOptions {
                margin: self.scan.margin,
                ..SeriesOptions::default()
            },
            envelope: EnvelopeOptions {
                rtol: self.solver.envelope_rtol,
                ..EnvelopeOptions::default()
            },
            delta_a: delta_a.unwrap_or(self.scan.delta_a),
            resonance_factor: self.scan.resonance_factor,
            classify: ClassifyOptions {
                plateau: self.scan.plateau,
                unlock_gap: self.scan.unlock_gap,
                sustain_decades: self.scan.sustain_decades,
                max_drift: self.scan.max_drift,
            },
        }
    }

    /// Scan energies in units of `E*`, strictly increasing and below the
    /// validity ceiling of `pair`.
    pub fn energies(&self, pair: &ChannelPair<f64>) -> Result<Vec<f64>, CliError> {
        let e_star = derive_scales(&pair.tail(), pair.mu)?.e_star;
        let ceiling = 0.2 * pair.shallow_depth()? / e_star;
        let mut out: Vec<f64> = Vec::new();
        for (i, s) in self.grid.segments.iter().enumerate() {
            let to = match &s.to {
                Bound::Value(v) => *v,
                Bound::Keyword(_) => ceiling * 0.999,
            };
            let seg = log_grid(s.from, to, s.per_decade)
                .map_err(|e| bad(format!("grid.segments[{i}]: {e}")))?;
            if let (Some(&last), Some(&first)) = (out.last(), seg.first()) {
                if !(first > last) {
                    return Err(bad(format!(
                        "grid.segments[{i}] starts at {first} E*, not above the previous segment"
                    )));
                }
            }
            out.extend(seg);
        }
        if let Some(&top) = out.last() {
            if top >= ceiling {
                return Err(bad(format!(
                    "grid reaches {top:e} E*, above the ceiling 0.2 V_depth = {ceiling:e} E*"
                )));
            }
        }
        Ok(out)
    }
}

/// Whitespace- or comma-separated `r V` pairs; `#` starts a comment.
pub fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| bad(format!("cannot read table {}: {e}", path.display())))?;
    let mut r = Vec::new();
    let mut v = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
        match parsed.as_deref() {
            Some([x, y]) => {
                r.push(*x);
                v.push(*y);
            }
            _ => {
                return Err(bad(format!(
                    "{}:{}: expected two numbers",
                    path.display(),
                    no + 1
                )))
            }
        }
    }
    Ok((r, v))
}
