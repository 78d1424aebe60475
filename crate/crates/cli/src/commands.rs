//! One function per subcommand. Each computes everything first and writes
//! files only at the end, so a failed run leaves no partial data table.

use std::fs;
use std::path::PathBuf;

use clap::ValueEnum;
use rayon::prelude::*;
use rexch_core::agreement::{high_energy_limit, locking_agreement, plateau_mean};
use rexch_core::calibration::{calibrate_case, CalibrationReport};
use rexch_core::correction::{sigma_lock, sigma_model, sigma_osc, CorrectionInputs};
use rexch_core::exchange::{delta_eta_series, SeriesOptions};
use rexch_core::potentials::{well_summary, ChannelPair};
use rexch_core::radial::scattering_length;
use rexch_core::scales::{
    critical_l, cutoff_lambda, derive_scales, g_factor, langevin_sigma, partial_wave_cutoff,
    wavenumber,
};
use rexch_core::scan::{run_scan, DeltaASource, ExchangeScan};
use serde_json::{json, Value};

use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::output::{write_json, Cell, Format, Table, SCAN_COLUMNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Scales,
    PhaseShifts,
    CrossSection,
    Correction,
    Compare,
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Scales => "scales",
            Command::PhaseShifts => "phase-shifts",
            Command::CrossSection => "cross-section",
            Command::Correction => "correction",
            Command::Compare => "compare",
            Command::Calibrate => "calibrate",
        }
    }

    fn file_stem(self) -> String {
        self.name().replace('-', "_")
    }
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub command: Command,
    pub config: PathBuf,
    /// `--out` or the environment default; the config decides otherwise.
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub format: Option<Format>,
}

/// Files written by a successful run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

pub const DEFAULT_OUT_DIR: &str = "rexch-out";

const UNITS: [(&str, &str); 5] = [
    ("energy", "hartree"),
    ("length", "bohr"),
    ("cross_section", "bohr^2"),
    ("phase", "rad"),
    ("mass", "electron mass"),
];

struct Run {
    cfg: LoadedConfig,
    command: Command,
    out_dir: PathBuf,
    format: Format,
}

/// A failed run and whatever of it should still be written.
type Failure = Box<(CliError, Option<Outputs>)>;

/// Everything a run produces, written in one go.
struct Outputs {
    tables: Vec<Table>,
    json: Vec<(String, Value)>,
    meta: Value,
}

pub fn run(args: &RunArgs) -> Result<RunSummary, CliError> {
    let cfg = LoadedConfig::from_path(&args.config)?;
    let out_dir = match (&args.out, &cfg.config.output.dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => cfg.base_dir.join(d),
        (None, None) => PathBuf::from(DEFAULT_OUT_DIR),
    };
    let format = args
        .format
        .or(cfg.config.output.format)
        .unwrap_or(Format::Csv);
    let run = Run {
        cfg,
        command: args.command,
        out_dir,
        format,
    };
    match args.jobs {
        Some(0) => Err(CliError::config("--jobs must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Io(format!("cannot start {n} worker threads: {e}")))?;
            pool.install(|| run.execute())
        }
        None => run.execute(),
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

impl Run {
    fn execute(&self) -> Result<RunSummary, CliError> {
        let outputs = match self.command {
            Command::Scales => self.scales(),
            Command::PhaseShifts => self.phase_shifts(),
            Command::CrossSection => self.scan_command(Some(DeltaASource::None)),
            Command::Correction | Command::Compare => self.scan_command(None),
            Command::Calibrate => self.calibrate(),
        };
        match outputs {
            Ok(o) => self.write(o),
            Err(failure) => {
                let (err, partial) = *failure;
                if let Some(o) = partial {
                    // Keep the evidence of a failed calibration on disk.
                    self.write(o)?;
                }
                Err(err)
            }
        }
    }

    fn write(&self, o: Outputs) -> Result<RunSummary, CliError> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", self.out_dir.display())))?;
        let mut files = Vec::new();
        for t in &o.tables {
            files.push(t.write(&self.out_dir, self.format)?);
        }
        for (name, v) in &o.json {
            files.push(write_json(&self.out_dir, name, v)?);
        }
        let names: Vec<String> = files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        let columns: serde_json::Map<String, Value> = o
            .tables
            .iter()
            .map(|t| (t.name.clone(), json!(t.columns)))
            .collect();
        let mut meta = json!({
            "tool": "rexch",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command.name(),
            "config_hash": self.cfg.hash,
            "format": self.format,
            "units": UNITS.iter().map(|(k, v)| (k.to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
            "files": names,
            "columns": columns,
        });
        if let (Value::Object(m), Value::Object(extra)) = (&mut meta, o.meta) {
            m.extend(extra);
        }
        let stem = self.command.file_stem();
        files.push(write_json(
            &self.out_dir,
            &format!("{stem}.meta.json"),
            &meta,
        )?);
        Ok(RunSummary {
            out_dir: self.out_dir.clone(),
            files,
        })
    }

    /// The configured pair, calibrated first when `[calibrate]` is present.
    fn pair(&self) -> Result<(ChannelPair<f64>, Option<CalibrationReport>), CliError> {
        let c = &self.cfg.config;
        match (c.template(&self.cfg.base_dir)?, &c.calibrate) {
            (Some(t), Some(cal)) => {
                let opts = c.calibration_options().expect("calibrate section present");
                let report = calibrate_case(&t, cal.target, &c.settings(), &opts)?;
                Ok((t.with_c_rep(report.c_rep)?, Some(report)))
            }
            _ => Ok((c.pair(&self.cfg.base_dir)?, None)),
        }
    }

    fn pair_meta(&self, pair: &ChannelPair<f64>) -> Value {
        json!({
            "mu_au": pair.mu,
            "c_rep_a": pair.va.c_rep(),
            "c_rep_b": pair.vb.c_rep(),
            "r_min_b": pair.vb.c_rep().map(|c| self.cfg.config.r_min_for(c)),
            "boundary_r": pair.boundary_r,
        })
    }

    fn calibration_meta(&self, report: &Option<CalibrationReport>) -> Value {
        report.as_ref().map_or(Value::Null, |r| {
            let mut v = to_value(r);
            v["r_min_b"] = json!(self.cfg.config.r_min_for(r.c_rep));
            v
        })
    }

    fn scales(&self) -> Result<Outputs, Failure> {
        self.scales_inner().map_err(|e| Box::new((e, None)))
    }

    fn scales_inner(&self) -> Result<Outputs, CliError> {
        let c = &self.cfg.config;
        let pair = c.pair(&self.cfg.base_dir)?;
        let tail = pair.tail();
        let s = derive_scales(&tail, pair.mu)?;
        let settings = c.settings();
        let mut t = Table::new(
            "scales",
            &[
                "E_au",
                "E_over_Estar",
                "k_au",
                "Lambda",
                "L_crit",
                "ell_max",
                "sigma_L_au2",
            ],
        );
        for x in c.energies(&pair)? {
            let e = x * s.e_star;
            let lam = cutoff_lambda(&tail, pair.mu, e)?;
            t.push(vec![
                Cell::Num(e),
                Cell::Num(x),
                Cell::Num(wavenumber(pair.mu, e)),
                Cell::Num(lam),
                Cell::Num(critical_l(lam)),
                Cell::Int((partial_wave_cutoff(lam) + c.scan.margin) as i64),
                Cell::Num(langevin_sigma(&tail, pair.mu, e)?),
            ]);
        }
        let wa = well_summary(&pair.va)?;
        let wb = well_summary(&pair.vb)?;
        let a_a = scattering_length(&pair.va, pair.mu, &settings)?;
        let a_b = scattering_length(&pair.vb, pair.mu, &settings)?;
        let meta = json!({
            "scales": {
                "n": tail.n,
                "c_n": tail.c_n,
                "r_star": s.r_star,
                "e_star": s.e_star,
                "k_star": s.k_star,
                "g_n": g_factor::<f64>(tail.n)?,
            },
            "pair": self.pair_meta(&pair),
            "wells": {
                "a": { "r_min": wa.r_min, "depth": wa.v_depth },
                "b": { "r_min": wb.r_min, "depth": wb.v_depth },
                "energy_ceiling_au": 0.2 * pair.shallow_depth()?,
            },
            "scattering_lengths": {
                "a": to_value(&a_a),
                "b": to_value(&a_b),
                "delta_a": a_b.a - a_a.a,
            },
        });
        Ok(Outputs {
            tables: vec![t],
            json: Vec::new(),
            meta,
        })
    }

    fn phase_shifts(&self) -> Result<Outputs, Failure> {
        self.phase_shifts_inner().map_err(|e| Box::new((e, None)))
    }

    fn phase_shifts_inner(&self) -> Result<Outputs, CliError> {
        let c = &self.cfg.config;
        let (pair, report) = self.pair()?;
        let e_star = derive_scales(&pair.tail(), pair.mu)?.e_star;
        let settings = c.settings();
        let opts = SeriesOptions {
            margin: c.scan.margin,
            max_ell: c.phase_shifts.ell_max,
            ..SeriesOptions::default()
        };
        let energies = c.energies(&pair)?;
        let series = energies
            .par_iter()
            .map(|&x| delta_eta_series(&pair, x * e_star, &settings, &opts))
            .collect::<Result<Vec<_>, _>>()?;
        let mut t = Table::new(
            "phase_shifts",
            &[
                "E_au",
                "ell",
                "eta_a_rad",
                "eta_b_rad",
                "delta_eta_rad",
                "sin2_delta_eta",
                "perturbed",
            ],
        );
        let mut warnings = Vec::new();
        for s in &series {
            for en in &s.entries {
                t.push(vec![
                    Cell::Num(s.energy),
                    Cell::Int(en.ell as i64),
                    Cell::Num(en.eta_a),
                    Cell::Num(en.eta_b),
                    Cell::Num(en.delta_eta),
                    Cell::Num(en.sin2),
                    Cell::Flag(en.perturbed),
                ]);
            }
            warnings.extend(
                s.warnings
                    .iter()
                    .map(|w| json!({ "E_au": s.energy, "warning": w })),
            );
        }
        Ok(Outputs {
            tables: vec![t],
            json: Vec::new(),
            meta: json!({
                "pair": self.pair_meta(&pair),
                "calibration": self.calibration_meta(&report),
                "warnings": warnings,
            }),
        })
    }

    fn scan_command(&self, delta_a: Option<DeltaASource>) -> Result<Outputs, Failure> {
        self.scan_inner(delta_a).map_err(|e| Box::new((e, None)))
    }

    fn scan_inner(&self, delta_a: Option<DeltaASource>) -> Result<Outputs, CliError> {
        let c = &self.cfg.config;
        let (pair, report) = self.pair()?;
        let energies = c.energies(&pair)?;
        let opts = c.scan_options(delta_a);
        let scan = run_scan(&pair, &energies, &c.settings(), &opts)?;
        let mut tables = vec![scan_table(&self.command.file_stem(), &scan)];
        let mut json_files = Vec::new();
        if matches!(self.command, Command::Correction | Command::Compare) {
            tables.push(model_table(&pair, &scan));
        }
        if self.command == Command::Compare {
            json_files.push((
                "agreement.json".to_string(),
                agreement(&scan, c.scan.plateau),
            ));
        }
        let warnings: Vec<Value> = scan
            .rows
            .iter()
            .flat_map(|r| {
                r.point
                    .series
                    .warnings
                    .iter()
                    .map(move |w| json!({ "E_au": r.energy, "warning": w }))
            })
            .collect();
        Ok(Outputs {
            tables,
            json: json_files,
            meta: json!({
                "pair": self.pair_meta(&pair),
                "calibration": self.calibration_meta(&report),
                "delta_a_source": opts.delta_a,
                "label": scan.label,
                "resonant_rows": scan.rows.iter().filter(|r| r.resonance).count(),
                "warnings": warnings,
            }),
        })
    }

    fn calibrate(&self) -> Result<Outputs, Failure> {
        let c = &self.cfg.config;
        let no_section = || {
            Box::new((
                CliError::config("calibrate needs a [calibrate] section"),
                None,
            ))
        };
        let cal = c.calibrate.as_ref().ok_or_else(no_section)?;
        let template = c
            .template(&self.cfg.base_dir)
            .map_err(|e| Box::new((e, None)))?
            .ok_or_else(no_section)?;
        let opts = c.calibration_options().ok_or_else(no_section)?;
        let result = calibrate_case(&template, cal.target, &c.settings(), &opts);
        let trace_table = |trace: &[(f64, f64)]| {
            let mut t = Table::new("calibration_trace", &["c_rep", "r_min", "delta_delta0_rad"]);
            for &(cr, d) in trace {
                t.push(vec![
                    Cell::Num(cr),
                    Cell::Num(c.r_min_for(cr)),
                    Cell::Num(d),
                ]);
            }
            t
        };
        match result {
            Ok(report) => {
                let trace: Vec<(f64, f64)> = report
                    .trace
                    .iter()
                    .map(|s| (s.c_rep, s.delta_delta0))
                    .collect();
                Ok(Outputs {
                    tables: vec![trace_table(&trace)],
                    json: vec![(
                        "calibration.json".to_string(),
                        self.calibration_meta(&Some(report.clone())),
                    )],
                    meta: json!({
                        "target": cal.target,
                        "achieved": report.achieved,
                        "iterations": report.iterations,
                    }),
                })
            }
            Err(e) => {
                let err = CliError::from(e);
                let partial = match &err {
                    CliError::Calibration { trace, message } => Some(Outputs {
                        tables: vec![trace_table(trace)],
                        json: Vec::new(),
                        meta: json!({
                            "target": cal.target,
                            "failed": message,
                        }),
                    }),
                    _ => None,
                };
                Err(Box::new((err, partial)))
            }
        }
    }
}

/// The 13-column energy-scan table.
pub fn scan_table(name: &str, scan: &ExchangeScan) -> Table {
    let mut t = Table::new(name, &SCAN_COLUMNS);
    let text = |s: Option<&str>| s.map_or(Cell::Empty, |s| Cell::Text(s.to_string()));
    for r in &scan.rows {
        let p = &r.point;
        t.push(vec![
            Cell::Num(r.energy),
            Cell::Num(p.sigma0),
            Cell::Num(p.sigma_exc),
            Cell::Num(p.sigma_l),
            Cell::Num(p.lambda),
            Cell::Num(p.f_exact),
            r.f_model.into(),
            Cell::Num(r.f_lock),
            Cell::Num(p.delta_delta0),
            r.delta_a0.into(),
            text(scan.label.map(|l| l.regime(r.e_rel).as_str())),
            text(scan.label.map(|l| l.case_tag.as_str())),
            Cell::Flag(r.resonance),
        ]);
    }
    t
}

/// Model cross sections next to the exact ones.
fn model_table(pair: &ChannelPair<f64>, scan: &ExchangeScan) -> Table {
    let mut t = Table::new(
        "model",
        &[
            "E_au",
            "sigma_model_au2",
            "sigma_lock_au2",
            "sigma_osc_au2",
            "F_model",
            "f_lock",
        ],
    );
    for r in &scan.rows {
        let p = &r.point;
        let k = wavenumber(pair.mu, r.energy);
        let (model, osc) = match (r.f_model, r.delta_a0) {
            (Some(f), Some(da)) => {
                let inp = CorrectionInputs {
                    delta_delta0: p.delta_delta0,
                    delta_a0: da,
                    lambda: p.lambda,
                };
                // A negative model correction has no model cross section.
                (
                    sigma_model(p.sigma0, f, p.sigma_l).ok(),
                    Some(sigma_osc(p.sigma_l, &inp)),
                )
            }
            _ => (None, None),
        };
        t.push(vec![
            Cell::Num(r.energy),
            model.into(),
            Cell::Num(sigma_lock(k, p.sigma_l, p.delta_delta0)),
            osc.into(),
            r.f_model.into(),
            Cell::Num(r.f_lock),
        ]);
    }
    t
}

/// Locking, plateau and high-energy agreement; parts that do not apply to
/// this scan are reported as errors in place.
fn agreement(scan: &ExchangeScan, plateau: f64) -> Value {
    let as_json = |r: Result<Value, rexch_core::Error>| {
        r.unwrap_or_else(|e| json!({ "unavailable": e.to_string() }))
    };
    json!({
        "locking": as_json(locking_agreement(scan).map(|v| to_value(&v))),
        "plateau_mean_F_exact": plateau_mean(scan, plateau),
        "high_energy": as_json(high_energy_limit(scan, 1.0).map(|v| to_value(&v))),
    })
}
