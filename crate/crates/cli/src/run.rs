//! Pipelines behind each subcommand and the files they write.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use iqa_core::ensemble::{crossing_fraction, final_energy_comparison, EnsembleConfig};
use iqa_core::exact::{initial_state, propagate, PropagateOptions};
use iqa_core::meanfield::{
    ground_state_reference_curve, run_meanfield, saddle_branches, solve_saddle, SaddlePointQuery,
};
use iqa_core::models::{
    make_deterministic_sk, sample_sk, DeterministicKind, PSpinModel, ProblemModel, SkDocument, SkInstance,
};
use iqa_core::schedules::{AnnealPath, FieldProfile};
use iqa_core::spectrum::{
    adiabatic_bound, default_grid_points, default_k_levels, detect_crossings, lowest_levels, CrossingOptions,
};

use crate::config::{ConfigError, ModelKind, RunConfig, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] iqa_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Core(
                iqa_core::Error::Domain(_) | iqa_core::Error::Capacity { .. } | iqa_core::Error::UnsupportedProfile(_),
            ) => EXIT_CONFIG,
            _ => EXIT_NUMERIC,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Core(iqa_core::Error::Domain(_)) => "domain",
            RunError::Core(iqa_core::Error::Capacity { .. }) => "capacity",
            RunError::Core(iqa_core::Error::UnsupportedProfile(_)) => "unsupported_profile",
            RunError::Core(iqa_core::Error::Integrator { .. }) => "integrator",
            RunError::Core(iqa_core::Error::Ensemble(_)) => "ensemble",
            RunError::Core(_) => "numeric",
            RunError::Io(_) => "io",
        }
    }

    pub fn to_json(&self) -> Value {
        let key = match self {
            RunError::Config(c) => c.key().map(str::to_string),
            _ => None,
        };
        json!({ "error": self.kind(), "key": key, "message": self.to_string(), "exit_code": self.exit_code() })
    }
}

/// A fully resolved run.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub subcommand: Subcommand,
    pub preset: Option<String>,
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub summary: Value,
    /// Data files written, relative to the output directory.
    pub files: Vec<String>,
}

/// Output directory: the configured one, else `$IQA_OUTPUT_ROOT/<name>-<hash>`.
pub fn default_out_dir(sub: Subcommand, preset: Option<&str>, cfg: &RunConfig) -> PathBuf {
    if let Some(dir) = &cfg.output.dir {
        return dir.clone();
    }
    let root = std::env::var_os("IQA_OUTPUT_ROOT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    let name = preset.unwrap_or(sub.as_str());
    root.join(format!("{name}-{}", &cfg.hash()[..12]))
}

/// Full double precision, fixed layout.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Compact label for a total time in file names.
fn t_label(t: f64) -> String {
    format!("{t}")
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> std::io::Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.text(name, &text)
    }

    fn json(&mut self, name: &str, value: &Value) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
        text.push('\n');
        self.text(name, &text)
    }

    fn text(&mut self, name: &str, text: &str) -> std::io::Result<()> {
        fs::write(self.dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

pub fn build_model(cfg: &RunConfig) -> Result<ProblemModel, RunError> {
    let m = &cfg.model;
    let model: ProblemModel = match m.kind {
        ModelKind::Pspin => PSpinModel::new(m.n, m.p)?.into(),
        ModelKind::Sk => sample_sk(m.n, m.seed)?.into(),
        ModelKind::Fig4 => make_deterministic_sk(DeterministicKind::Fig4, m.n)?.into(),
        ModelKind::Fig5 => make_deterministic_sk(DeterministicKind::Fig5, m.n)?.into(),
        ModelKind::File => {
            let path = m.file.as_ref().expect("validated");
            let text = fs::read_to_string(path)
                .map_err(|e| ConfigError::Read { path: path.display().to_string(), msg: e.to_string() })?;
            let doc: SkDocument = serde_json::from_str(&text)
                .map_err(|e| ConfigError::Invalid { key: "model.file".into(), msg: e.to_string() })?;
            if doc.n != m.n {
                return Err(ConfigError::Invalid {
                    key: "model.n".into(),
                    msg: format!("{} but the instance file has N = {}", m.n, doc.n),
                }
                .into());
            }
            SkInstance::try_from(doc)?.into()
        }
    };
    Ok(model)
}

fn build_path(cfg: &RunConfig, total_time: f64) -> Result<AnnealPath, RunError> {
    let p = &cfg.path;
    Ok(AnnealPath::new(p.s0, p.tau0, p.s1, p.tau1, total_time, p.dt)?)
}

/// Validates, runs the pipeline and writes data files plus `run.json`.
pub fn execute(inv: &Invocation) -> Result<Outcome, RunError> {
    inv.config.validate(inv.subcommand)?;
    fs::create_dir_all(&inv.out_dir)?;
    let start = Instant::now();
    let mut w = Writer { dir: inv.out_dir.clone(), files: Vec::new() };
    let cfg = &inv.config;
    let summary = match inv.subcommand {
        Subcommand::Meanfield => meanfield(cfg, &mut w)?,
        Subcommand::Exact => exact(cfg, &mut w)?,
        Subcommand::Spectrum => spectrum(cfg, &mut w)?,
        Subcommand::EnsembleFraction => ensemble_fraction(cfg, &inv.out_dir, &mut w)?,
        Subcommand::EnsembleCompare => ensemble_compare(cfg, &inv.out_dir, &mut w)?,
        Subcommand::Saddle => saddle(cfg, &mut w)?,
    };
    w.json("summary.json", &summary)?;
    w.text("config.toml", &cfg.to_toml())?;
    let sidecar = json!({
        "tool": "iqa",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": inv.subcommand.as_str(),
        "preset": inv.preset,
        "config_hash": cfg.hash(),
        "config": cfg,
        "threads": inv.threads,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "outputs": w.files,
    });
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    text.push('\n');
    fs::write(inv.out_dir.join("run.json"), text)?;
    Ok(Outcome { out_dir: inv.out_dir.clone(), summary, files: w.files })
}

/// Writes `error.json` next to the outputs, if the directory can be made.
pub fn write_error(out_dir: &Path, err: &RunError) {
    if fs::create_dir_all(out_dir).is_ok() {
        let text = serde_json::to_string_pretty(&err.to_json()).expect("error serializes");
        let _ = fs::write(out_dir.join("error.json"), text + "\n");
    }
}

fn meanfield(cfg: &RunConfig, w: &mut Writer) -> Result<Value, RunError> {
    let mf = &cfg.meanfield;
    let sizes = if mf.n_values.is_empty() { vec![cfg.model.n] } else { mf.n_values.clone() };
    let mut runs: Vec<(usize, f64)> = Vec::new();
    for &n in &sizes {
        if mf.t_values.is_empty() && mf.t_per_n.is_empty() {
            runs.push((n, cfg.path.total_time));
        }
        runs.extend(mf.t_values.iter().map(|&t| (n, t)));
        runs.extend(mf.t_per_n.iter().map(|&c| (n, c * n as f64)));
    }
    let results: Vec<_> = runs
        .par_iter()
        .map(|&(n, t)| -> Result<_, RunError> {
            let path = build_path(cfg, t)?;
            let profile = FieldProfile::new(cfg.profile.kind, n)?;
            let model = PSpinModel::new(n, cfg.model.p)?;
            let traj = run_meanfield(&path, &profile, &model, mf.stride)?;
            let reference = if mf.reference_points > 0 {
                Some(ground_state_reference_curve(&path, &profile, &model, mf.reference_points)?)
            } else {
                None
            };
            log::info!("meanfield N={n} T={t}: m_z(T) = {}", traj.final_mz);
            Ok((n, t, traj, reference))
        })
        .collect::<Result<_, _>>()?;

    let mut finals = Vec::new();
    for (n, t, traj, reference) in &results {
        let tag = format!("N{n}_T{}", t_label(*t));
        w.csv(
            &format!("trajectory_{tag}.csv"),
            &["t", "m_z", "energy_density"],
            traj.samples.iter().map(|s| vec![fmt_f64(s.t), fmt_f64(s.m_z), fmt_f64(s.energy_density)]),
        )?;
        if let Some(curve) = reference {
            w.csv(
                &format!("reference_{tag}.csv"),
                &["t", "m_z"],
                curve.iter().map(|(t, m)| vec![fmt_f64(*t), fmt_f64(*m)]),
            )?;
        }
        finals.push(json!({ "N": n, "T": t, "final_mz": traj.final_mz, "max_norm_error": traj.max_norm_error }));
    }
    w.csv(
        "final.csv",
        &["N", "T", "final_mz", "max_norm_error"],
        results.iter().map(|(n, t, traj, _)| {
            vec![n.to_string(), fmt_f64(*t), fmt_f64(traj.final_mz), fmt_f64(traj.max_norm_error)]
        }),
    )?;
    Ok(json!({ "subcommand": "meanfield", "profile": cfg.profile.kind.as_str(), "runs": finals }))
}

fn write_instance(model: &ProblemModel, w: &mut Writer) -> Result<(), RunError> {
    if let ProblemModel::Sk(sk) = model {
        let doc = SkDocument::from(sk.clone());
        w.json("instance.json", &serde_json::to_value(doc).expect("instance serializes"))?;
    }
    Ok(())
}

fn exact(cfg: &RunConfig, w: &mut Writer) -> Result<Value, RunError> {
    let model = build_model(cfg)?;
    let n = model.n_spins();
    let path = build_path(cfg, cfg.path.total_time)?;
    let profile = FieldProfile::new(cfg.profile.kind, n)?;
    let psi = initial_state(&model, &path, &profile)?;
    let traj = propagate(psi, &path, &profile, &model, &PropagateOptions { stride: cfg.exact.stride })?;
    write_instance(&model, w)?;

    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=n).map(|j| format!("m_{j}")));
    header.extend(["energy".into(), "energy_fraction".into()]);
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    w.csv(
        "trajectory.csv",
        &header_refs,
        traj.samples.iter().map(|s| {
            let mut row = vec![fmt_f64(s.t)];
            row.extend(s.magnetizations.iter().map(|&m| fmt_f64(m)));
            row.push(fmt_f64(s.energy));
            row.push(fmt_f64(s.energy_fraction));
            row
        }),
    )?;
    w.json("freeze.json", &serde_json::to_value(&traj.freeze_log).expect("freeze log serializes"))?;
    let last = traj.final_sample();
    Ok(json!({
        "subcommand": "exact",
        "n_spins": n,
        "profile": cfg.profile.kind.as_str(),
        "final_energy": last.energy,
        "final_energy_fraction": last.energy_fraction,
        "final_magnetizations": last.magnetizations,
        "max_norm_error": traj.max_norm_error,
        "freeze_log": traj.freeze_log,
    }))
}

fn spectrum(cfg: &RunConfig, w: &mut Writer) -> Result<Value, RunError> {
    let model = build_model(cfg)?;
    let n = model.n_spins();
    let sp = &cfg.spectrum;
    let path = build_path(cfg, cfg.path.total_time)?;
    let profile = FieldProfile::new(cfg.profile.kind, n)?;
    let k = if sp.k_levels == 0 { default_k_levels(n) } else { sp.k_levels };
    let grid = if sp.grid_points == 0 { default_grid_points(n) } else { sp.grid_points };
    let slices = lowest_levels(&model, &path, &profile, k, grid)?;
    write_instance(&model, w)?;

    let mut rows = Vec::new();
    for slice in &slices {
        for (rank, level) in slice.levels.iter().enumerate() {
            rows.push(vec![
                fmt_f64(slice.t_over_t),
                fmt_f64(slice.s),
                fmt_f64(slice.tau),
                rank.to_string(),
                fmt_f64(level.energy),
                level.sector.bit_string(),
                level.index.to_string(),
            ]);
        }
    }
    w.csv("levels.csv", &["t_over_T", "s", "tau", "level_rank", "energy", "sector_bits", "sector_index"], rows)?;

    let mut opts = CrossingOptions::new(
        sp.crossing_k,
        if sp.crossing_grid == 0 { default_grid_points(n) } else { sp.crossing_grid },
    );
    opts.tau_tol = sp.tau_tol;
    opts.degeneracy_tol = sp.degeneracy_tol;
    let report = detect_crossings(&model, &path, &profile, &opts)?;
    let ground = report.ground_crossings();
    w.json(
        "crossings.json",
        &json!({
            "ground_crossings": ground,
            "all_crossings": report.events.len(),
            "report": report,
        }),
    )?;
    let mut summary = json!({
        "subcommand": "spectrum",
        "n_spins": n,
        "k_levels": k,
        "grid_points": grid,
        "ground_crossings": ground,
        "all_crossings": report.events.len(),
        "degeneracies": report.degeneracies.len(),
    });
    if sp.adiabatic_bound {
        let bound = adiabatic_bound(&model, &path, &profile, opts.n_grid)?;
        let value = serde_json::to_value(&bound).expect("bound serializes");
        w.json("bound.json", &value)?;
        summary["adiabatic_bound"] = value;
    }
    Ok(summary)
}

fn ensemble_config(cfg: &RunConfig, out_dir: &Path) -> Result<EnsembleConfig, RunError> {
    let e = &cfg.ensemble;
    let mut ec =
        EnsembleConfig::new(e.n_values.clone(), e.realizations, e.base_seed, build_path(cfg, cfg.path.total_time)?);
    ec.first_realization = e.first_realization;
    ec.profile = cfg.profile.kind;
    ec.t_values = e.t_values.clone();
    ec.grid_per_spin = e.grid_per_spin;
    ec.tau_tol = e.tau_tol;
    ec.max_instances = (e.max_instances > 0).then_some(e.max_instances);
    ec.output_dir = Some(out_dir.to_path_buf());
    Ok(ec)
}

fn ensemble_fraction(cfg: &RunConfig, out_dir: &Path, w: &mut Writer) -> Result<Value, RunError> {
    let ec = ensemble_config(cfg, out_dir)?;
    let points = crossing_fraction(&ec)?;
    w.csv(
        "fraction.csv",
        &["N", "f", "ci_low", "ci_high", "n_ok"],
        points.iter().map(|p| {
            vec![p.n.to_string(), fmt_f64(p.fraction), fmt_f64(p.ci_low), fmt_f64(p.ci_high), p.n_ok.to_string()]
        }),
    )?;
    Ok(json!({ "subcommand": "ensemble-fraction", "config_hash": ec.config_hash(), "points": points }))
}

fn ensemble_compare(cfg: &RunConfig, out_dir: &Path, w: &mut Writer) -> Result<Value, RunError> {
    let ec = ensemble_config(cfg, out_dir)?;
    let report = final_energy_comparison(&ec)?;
    w.csv(
        "compare.csv",
        &["T", "protocol", "mean_fraction", "n_instances"],
        report.points.iter().map(|p| {
            vec![fmt_f64(p.total_time), p.protocol.clone(), fmt_f64(p.mean_fraction), p.n_instances.to_string()]
        }),
    )?;
    Ok(json!({ "subcommand": "ensemble-compare", "config_hash": ec.config_hash(), "report": report }))
}

fn saddle(cfg: &RunConfig, w: &mut Writer) -> Result<Value, RunError> {
    let sd = &cfg.saddle;
    let query = |s: f64, tau: f64| SaddlePointQuery { s, tau, p: cfg.model.p, beta: sd.beta.unwrap_or(f64::INFINITY) };
    let q = query(sd.s, sd.tau);
    let sol = solve_saddle(&q, None)?;
    let branches = saddle_branches(&q, None)?;
    if sd.grid > 1 {
        let g = sd.grid;
        let points: Vec<(f64, f64)> =
            (0..g).flat_map(|i| (0..g).map(move |k| (i as f64 / (g - 1) as f64, k as f64 / (g - 1) as f64))).collect();
        let rows = points
            .par_iter()
            .map(|&(s, tau)| {
                let sol = solve_saddle(&query(s, tau), None)?;
                Ok(vec![
                    fmt_f64(s),
                    fmt_f64(tau),
                    fmt_f64(sol.m),
                    fmt_f64(sol.h),
                    fmt_f64(sol.f),
                    fmt_f64(sol.residual),
                ])
            })
            .collect::<Result<Vec<_>, iqa_core::Error>>()?;
        w.csv("saddle_grid.csv", &["s", "tau", "m", "h", "f", "residual"], rows)?;
    }
    let note = if branches.len() > 1 {
        format!("{} self-consistent branches; the lowest f is reported", branches.len())
    } else {
        String::new()
    };
    Ok(json!({
        "subcommand": "saddle",
        "s": sd.s,
        "tau": sd.tau,
        "p": cfg.model.p,
        "beta": sd.beta,
        "m": sol.m,
        "h": sol.h,
        "f": sol.f,
        "residual": sol.residual,
        "branches": branches,
        "note": note,
    }))
}
