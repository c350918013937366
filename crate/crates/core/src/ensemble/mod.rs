//! Batch experiments over random SK instances.
//!
//! Instance `r` of size `N` is drawn from the seed `derive_seed(base_seed, N, r)`,
//! so results do not depend on scheduling or worker count. Every computed
//! quantity is stored as a [`RunRecord`]; a run over an existing output
//! directory reuses whatever is already there.

mod store;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use store::{EnergyRecord, RecordKey, RecordStore, RunRecord, ScreenRecord, RECORD_FILE};

use crate::error::{Error, Result};
use crate::exact::{initial_state, propagate, PropagateOptions};
use crate::models::{sample_sk, ProblemModel};
use crate::schedules::{AnnealPath, FieldProfile, ProfileKind};
use crate::seeding::derive_seed;
use crate::spectrum::{detect_crossings, CrossingOptions, MAX_SPECTRUM_SPINS};

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959963984540054;

pub const PROTOCOL_IQA: &str = "iqa";
pub const PROTOCOL_CONVENTIONAL: &str = "conventional";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_values: Vec<usize>,
    /// Instances drawn per N.
    pub realizations: u64,
    /// Index of the first instance; lets several workers split a range.
    #[serde(default)]
    pub first_realization: u64,
    pub base_seed: u64,
    /// Profile of the inhomogeneous protocol.
    pub profile: ProfileKind,
    /// Path template. Crossing scans ignore `T`; comparisons replace it with
    /// each entry of `t_values`.
    pub path: AnnealPath,
    #[serde(default)]
    pub t_values: Vec<f64>,
    /// Crossing grid points per spin.
    #[serde(default = "default_grid_per_spin")]
    pub grid_per_spin: usize,
    #[serde(default = "default_tau_tol")]
    pub tau_tol: f64,
    /// Comparison only: stop after this many qualifying instances, taken in
    /// realization order.
    #[serde(default)]
    pub max_instances: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_grid_per_spin() -> usize {
    40
}

fn default_tau_tol() -> f64 {
    1e-6
}

impl EnsembleConfig {
    pub fn new(n_values: Vec<usize>, realizations: u64, base_seed: u64, path: AnnealPath) -> Self {
        EnsembleConfig {
            n_values,
            realizations,
            first_realization: 0,
            base_seed,
            profile: ProfileKind::Ramp,
            path,
            t_values: Vec::new(),
            grid_per_spin: default_grid_per_spin(),
            tau_tol: default_tau_tol(),
            max_instances: None,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::domain("realizations must be at least 1"));
        }
        if self.n_values.is_empty() {
            return Err(Error::domain("no system sizes given"));
        }
        for &n in &self.n_values {
            if !(2..=MAX_SPECTRUM_SPINS).contains(&n) {
                return Err(Error::Capacity { what: "ensemble instances", n, max: MAX_SPECTRUM_SPINS });
            }
        }
        if self.profile == ProfileKind::Homogeneous {
            return Err(Error::UnsupportedProfile(
                "the ensemble compares an inhomogeneous profile with the homogeneous one".into(),
            ));
        }
        if self.grid_per_spin == 0 || !(self.tau_tol > 0.0) {
            return Err(Error::domain("crossing grid and tolerance must be positive"));
        }
        self.path.validate()
    }

    pub fn seed(&self, n: usize, r: u64) -> u64 {
        derive_seed(self.base_seed, n, r)
    }

    fn realization_range(&self) -> std::ops::Range<u64> {
        self.first_realization..self.first_realization + self.realizations
    }

    fn crossing_options(&self, n: usize) -> CrossingOptions {
        let mut opts = CrossingOptions::new(1, self.grid_per_spin * n);
        opts.tau_tol = self.tau_tol;
        opts
    }

    /// Hash of every setting that affects a stored record. Sizes, counts,
    /// the realization range and the T list only select which records are
    /// needed, so they are left out.
    pub fn config_hash(&self) -> String {
        let p = &self.path;
        let canonical = serde_json::json!({
            "format": 1,
            "base_seed": self.base_seed,
            "profile": self.profile.as_str(),
            "path": [p.s0.to_bits(), p.tau0.to_bits(), p.s1.to_bits(), p.tau1.to_bits(), p.dt.to_bits()],
            "grid_per_spin": self.grid_per_spin,
            "tau_tol": self.tau_tol.to_bits(),
        });
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn open_store(&self) -> Result<RecordStore> {
        match &self.output_dir {
            Some(dir) => RecordStore::open(dir, &self.config_hash()),
            None => Ok(RecordStore::in_memory(&self.config_hash())),
        }
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    // the bounds are exactly 0 and 1 at the edges
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionPoint {
    pub n: usize,
    pub fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Instances that completed.
    pub n_ok: usize,
    pub n_ground_crossing: usize,
    /// Instances with any tracked crossing. Equal to the ground count while
    /// only the ground level is scanned.
    pub n_any_crossing: usize,
    pub n_failed: usize,
}

fn screen_instance(config: &EnsembleConfig, store: &RecordStore, n: usize, r: u64) -> Result<ScreenRecord> {
    let seed = config.seed(n, r);
    if let Some(RunRecord::Screen(rec)) = store.get(&RecordKey::Screen { n, seed }) {
        return Ok(rec);
    }
    let start = Instant::now();
    let outcome = (|| {
        let model: ProblemModel = sample_sk(n, seed)?.into();
        let profile = FieldProfile::new(config.profile, n)?;
        detect_crossings(&model, &config.path, &profile, &config.crossing_options(n))
    })();
    let (crossing_count, ground_crossing_count, refined_taus, error) = match outcome {
        Ok(report) => {
            let taus = report.events.iter().filter(|e| e.involves_ground).map(|e| e.refined_tau).collect();
            (report.events.len(), report.ground_crossings(), taus, None)
        }
        Err(e) => {
            log::warn!("crossing scan failed for N={n}, r={r}: {e}");
            (0, 0, Vec::new(), Some(e.to_string()))
        }
    };
    let rec = ScreenRecord {
        n,
        realization: r,
        seed,
        crossing_count,
        ground_crossing_count,
        refined_taus,
        error,
        wall_time: start.elapsed().as_secs_f64(),
        config_hash: store.hash().to_string(),
    };
    store.append(RunRecord::Screen(rec.clone()))?;
    Ok(rec)
}

fn screen_all(config: &EnsembleConfig, store: &RecordStore, n: usize) -> Result<Vec<ScreenRecord>> {
    let range: Vec<u64> = config.realization_range().collect();
    range.into_par_iter().map(|r| screen_instance(config, store, n, r)).collect()
}

/// Fraction of instances whose ground level crosses at least once, per N.
pub fn crossing_fraction(config: &EnsembleConfig) -> Result<Vec<FractionPoint>> {
    let store = config.open_store()?;
    crossing_fraction_with(config, &store)
}

pub fn crossing_fraction_with(config: &EnsembleConfig, store: &RecordStore) -> Result<Vec<FractionPoint>> {
    config.validate()?;
    let mut points = Vec::with_capacity(config.n_values.len());
    for &n in &config.n_values {
        let records = screen_all(config, store, n)?;
        let n_failed = records.iter().filter(|r| r.error.is_some()).count();
        if n_failed > 0 {
            log::warn!("N={n}: {n_failed} of {} instances failed and are excluded", records.len());
        }
        let ok: Vec<&ScreenRecord> = records.iter().filter(|r| r.error.is_none()).collect();
        let n_ok = ok.len();
        if n_ok == 0 {
            return Err(Error::Ensemble(format!("every instance at N={n} failed")));
        }
        let n_ground = ok.iter().filter(|r| r.ground_crossing_count > 0).count();
        let n_any = ok.iter().filter(|r| r.crossing_count > 0).count();
        let (ci_low, ci_high) = wilson_interval(n_ground, n_ok, WILSON_Z);
        log::info!("N={n}: {n_ground}/{n_ok} instances cross");
        points.push(FractionPoint {
            n,
            fraction: n_ground as f64 / n_ok as f64,
            ci_low,
            ci_high,
            n_ok,
            n_ground_crossing: n_ground,
            n_any_crossing: n_any,
            n_failed,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePoint {
    #[serde(rename = "T")]
    pub total_time: f64,
    pub protocol: String,
    pub mean_fraction: f64,
    /// Standard error of the mean.
    pub std_error: f64,
    pub n_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub protocol: String,
    /// Mean fraction at the largest T.
    pub value: f64,
    /// Change from the second-largest T, if there is one.
    pub change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n: usize,
    pub points: Vec<ComparePoint>,
    pub plateaus: Vec<Plateau>,
    /// Seeds of the instances included, in realization order.
    pub instance_seeds: Vec<u64>,
    pub screened: usize,
}

impl ComparisonReport {
    pub fn point(&self, total_time: f64, protocol: &str) -> Option<&ComparePoint> {
        self.points.iter().find(|p| p.total_time == total_time && p.protocol == protocol)
    }

    pub fn plateau(&self, protocol: &str) -> Option<&Plateau> {
        self.plateaus.iter().find(|p| p.protocol == protocol)
    }
}

fn energy_instance(
    config: &EnsembleConfig,
    store: &RecordStore,
    screen: &ScreenRecord,
    total_time: f64,
    protocol: &str,
) -> Result<EnergyRecord> {
    let n = screen.n;
    let key = RecordKey::Energy { n, seed: screen.seed, t_bits: total_time.to_bits(), protocol: protocol.to_string() };
    if let Some(RunRecord::Energy(rec)) = store.get(&key) {
        return Ok(rec);
    }
    let start = Instant::now();
    let outcome = (|| {
        let model: ProblemModel = sample_sk(n, screen.seed)?.into();
        let kind = if protocol == PROTOCOL_IQA { config.profile } else { ProfileKind::Homogeneous };
        let profile = FieldProfile::new(kind, n)?;
        let mut path = config.path;
        path.total_time = total_time;
        let psi = initial_state(&model, &path, &profile)?;
        let traj = propagate(psi, &path, &profile, &model, &PropagateOptions { stride: usize::MAX })?;
        let last = traj.final_sample();
        Ok::<_, Error>((last.energy, last.energy_fraction))
    })();
    let (final_energy, energy_fraction, error) = match outcome {
        Ok((e, f)) => (e, f, None),
        Err(e) => {
            log::warn!("propagation failed for N={n}, seed={}, T={total_time}, {protocol}: {e}", screen.seed);
            (f64::NAN, f64::NAN, Some(e.to_string()))
        }
    };
    let rec = EnergyRecord {
        n,
        realization: screen.realization,
        seed: screen.seed,
        total_time,
        protocol: protocol.to_string(),
        final_energy,
        energy_fraction,
        error,
        wall_time: start.elapsed().as_secs_f64(),
        config_hash: store.hash().to_string(),
    };
    store.append(RunRecord::Energy(rec.clone()))?;
    Ok(rec)
}

/// Crossing-conditioned mean final energy fraction of both protocols for
/// every T in the configuration.
pub fn final_energy_comparison(config: &EnsembleConfig) -> Result<ComparisonReport> {
    let store = config.open_store()?;
    final_energy_comparison_with(config, &store)
}

pub fn final_energy_comparison_with(config: &EnsembleConfig, store: &RecordStore) -> Result<ComparisonReport> {
    config.validate()?;
    let n = match config.n_values.as_slice() {
        [n] => *n,
        _ => return Err(Error::domain("the energy comparison takes exactly one system size")),
    };
    if config.t_values.is_empty() {
        return Err(Error::domain("no total times given"));
    }
    if config.t_values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("total times must be strictly ascending"));
    }

    let screened = screen_all(config, store, n)?;
    let mut qualifying: Vec<ScreenRecord> =
        screened.iter().filter(|r| r.error.is_none() && r.ground_crossing_count > 0).cloned().collect();
    if let Some(cap) = config.max_instances {
        qualifying.truncate(cap);
    }
    if qualifying.is_empty() {
        return Err(Error::Ensemble(format!(
            "none of the {} instances at N={n} has a ground-level crossing; increase the number of realizations",
            screened.len()
        )));
    }
    log::info!("N={n}: {} qualifying instances of {} screened", qualifying.len(), screened.len());

    let protocols = [PROTOCOL_IQA, PROTOCOL_CONVENTIONAL];
    let mut jobs: Vec<(usize, f64, &str)> = Vec::new();
    for i in 0..qualifying.len() {
        for &t in &config.t_values {
            jobs.extend(protocols.iter().map(|&p| (i, t, p)));
        }
    }
    let records: Vec<EnergyRecord> = jobs
        .into_par_iter()
        .map(|(i, t, p)| energy_instance(config, store, &qualifying[i], t, p))
        .collect::<Result<_>>()?;

    audit_crossing_condition(store, &records)?;

    let mut groups: BTreeMap<(usize, u64), Vec<f64>> = BTreeMap::new();
    for rec in &records {
        if rec.error.is_some() {
            continue;
        }
        let pi = protocols.iter().position(|&p| p == rec.protocol).expect("known protocol");
        groups.entry((pi, rec.total_time.to_bits())).or_default().push(rec.energy_fraction);
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} propagations failed and are excluded from the means");
    }

    let mut points = Vec::new();
    let mut plateaus = Vec::new();
    for (pi, &protocol) in protocols.iter().enumerate() {
        let mut means = Vec::new();
        for &t in &config.t_values {
            let values = groups.get(&(pi, t.to_bits())).cloned().unwrap_or_default();
            let (mean, std_error) = mean_and_error(&values);
            means.push(mean);
            points.push(ComparePoint {
                total_time: t,
                protocol: protocol.to_string(),
                mean_fraction: mean,
                std_error,
                n_instances: values.len(),
            });
        }
        let k = means.len();
        plateaus.push(Plateau {
            protocol: protocol.to_string(),
            value: means[k - 1],
            change: (k > 1).then(|| means[k - 1] - means[k - 2]),
        });
    }
    Ok(ComparisonReport {
        n,
        points,
        plateaus,
        instance_seeds: qualifying.iter().map(|r| r.seed).collect(),
        screened: screened.len(),
    })
}

/// Checks that every averaged record belongs to an instance whose stored
/// crossing summary shows a ground crossing.
fn audit_crossing_condition(store: &RecordStore, records: &[EnergyRecord]) -> Result<()> {
    for rec in records {
        match store.get(&RecordKey::Screen { n: rec.n, seed: rec.seed }) {
            Some(RunRecord::Screen(s)) if s.error.is_none() && s.ground_crossing_count > 0 => {}
            _ => {
                return Err(Error::Ensemble(format!(
                    "instance N={}, seed={} has no stored ground crossing but entered the average",
                    rec.n, rec.seed
                )))
            }
        }
    }
    Ok(())
}

fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_limits() {
        let (lo, hi) = wilson_interval(0, 10, WILSON_Z);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.2 && hi < 0.35);
        let (lo, hi) = wilson_interval(10, 10, WILSON_Z);
        assert!(lo > 0.65 && lo < 0.8);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn hash_ignores_selection_fields() {
        let path = AnnealPath::diagonal(1.0, 0.01).unwrap();
        let a = EnsembleConfig::new(vec![4], 10, 7, path);
        let mut b = a.clone();
        b.n_values = vec![6, 8];
        b.realizations = 3;
        b.first_realization = 5;
        b.t_values = vec![1.0];
        assert_eq!(a.config_hash(), b.config_hash());
        b.base_seed = 8;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn rejects_bad_config() {
        let path = AnnealPath::diagonal(1.0, 0.01).unwrap();
        let mut c = EnsembleConfig::new(vec![4], 0, 1, path);
        assert!(c.validate().is_err());
        c.realizations = 1;
        c.n_values = vec![17];
        assert!(matches!(c.validate(), Err(Error::Capacity { .. })));
    }

    #[test]
    fn audit_catches_unscreened_instances() {
        let store = RecordStore::in_memory("h");
        let energy = |seed: u64| EnergyRecord {
            n: 4,
            realization: 0,
            seed,
            total_time: 1.0,
            protocol: PROTOCOL_IQA.into(),
            final_energy: 0.0,
            energy_fraction: 0.0,
            error: None,
            wall_time: 0.0,
            config_hash: "h".into(),
        };
        let screen = |seed: u64, crossings: usize| ScreenRecord {
            n: 4,
            realization: 0,
            seed,
            crossing_count: crossings,
            ground_crossing_count: crossings,
            refined_taus: vec![],
            error: None,
            wall_time: 0.0,
            config_hash: "h".into(),
        };
        store.append(RunRecord::Screen(screen(1, 1))).unwrap();
        store.append(RunRecord::Screen(screen(2, 0))).unwrap();
        assert!(audit_crossing_condition(&store, &[energy(1)]).is_ok());
        assert!(audit_crossing_condition(&store, &[energy(2)]).is_err());
        assert!(audit_crossing_condition(&store, &[energy(3)]).is_err());
    }
}
