//! Exact level crossings between sectors, and the adiabatic-time bound.
//!
//! Ground crossings are found from changes of the ground sector between
//! neighbouring grid points. Because frozen sets only grow along a path, the
//! ground label at the later point is projected onto the earlier mask before
//! comparing, so a sector splitting in two at a field-off breakpoint is not
//! mistaken for a crossing. Each change is bisected until the τ bracket is
//! narrower than the tolerance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{merge_levels, EigenOptions, SectorLabel, SpectralProblem};
use crate::error::{Error, Result};
use crate::models::ProblemModel;
use crate::schedules::{AnnealPath, FieldProfile, ProfileKind};

#[derive(Debug, Clone, Copy)]
pub struct CrossingOptions {
    /// Levels tracked for excited crossings; 1 restricts the search to the
    /// ground level.
    pub k_levels: usize,
    /// Uniform grid points in `t/T`, before the breakpoints are added.
    pub n_grid: usize,
    /// Bisection stops once the τ bracket is narrower than this.
    pub tau_tol: f64,
    /// Energy differences below this are degeneracies, not crossings.
    pub degeneracy_tol: f64,
    pub eigen: EigenOptions,
}

impl CrossingOptions {
    pub fn new(k_levels: usize, n_grid: usize) -> Self {
        CrossingOptions { k_levels, n_grid, tau_tol: 1e-6, degeneracy_tol: 1e-12, eigen: EigenOptions::default() }
    }

    /// Ground-level search on the default grid.
    pub fn ground_only(n_spins: usize) -> Self {
        Self::new(1, super::default_grid_points(n_spins))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub tau_bracket: [f64; 2],
    pub t_over_t_bracket: [f64; 2],
    /// Lower of the two levels on the left of the bracket.
    pub sector_a: SectorLabel,
    /// Lower of the two levels on the right of the bracket.
    pub sector_b: SectorLabel,
    /// Index `r` of the adjacent pair `(r, r+1)` that crossed; 0 for the
    /// ground level.
    pub level_rank: usize,
    pub refined_tau: f64,
    pub involves_ground: bool,
    /// `E_a − E_b` at the left and right ends of the bracket.
    pub gap_left: f64,
    pub gap_right: f64,
}

/// Ground sectors closer than the degeneracy tolerance at a sample point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degeneracy {
    pub t_over_t: f64,
    pub tau: f64,
    pub sector_a: SectorLabel,
    pub sector_b: SectorLabel,
    pub splitting: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub events: Vec<CrossingEvent>,
    pub degeneracies: Vec<Degeneracy>,
    /// Sample points `t/T` of the scan grid.
    pub grid: Vec<f64>,
}

impl CrossingReport {
    pub fn ground_crossings(&self) -> usize {
        self.events.iter().filter(|e| e.involves_ground).count()
    }

    pub fn has_ground_crossing(&self) -> bool {
        self.ground_crossings() > 0
    }
}

/// Per-sector levels at one point of the path.
struct Point {
    u: f64,
    tau: f64,
    mask: u64,
    /// Every sector with its lowest levels, in label order.
    sectors: Vec<(SectorLabel, Vec<f64>)>,
    ground: SectorLabel,
    ground_energy: f64,
}

impl Point {
    /// Lowest energy among sectors compatible with `label`.
    fn energy_of(&self, label: &SectorLabel) -> f64 {
        self.sectors.iter().filter(|(l, _)| !l.conflicts_with(label)).map(|(_, lv)| lv[0]).fold(f64::INFINITY, f64::min)
    }

    fn level(&self, label: &SectorLabel, index: usize) -> Option<f64> {
        self.sectors.iter().find(|(l, _)| l == label).and_then(|(_, lv)| lv.get(index).copied())
    }
}

struct Scanner<'a> {
    problem: SpectralProblem,
    path: &'a AnnealPath,
    profile: &'a FieldProfile,
    opts: CrossingOptions,
}

#[derive(Clone, Copy)]
struct GridPoint {
    u: f64,
    tau_pin: Option<f64>,
}

impl<'a> Scanner<'a> {
    fn coords(&self, gp: GridPoint) -> (f64, f64) {
        let (s, tau) = self.path.at_fraction(gp.u);
        (s, gp.tau_pin.unwrap_or(tau))
    }

    fn evaluate(&self, gp: GridPoint, k: usize) -> Result<Point> {
        let (s, tau) = self.coords(gp);
        let gammas = self.profile.gammas(s, tau);
        let sectors = self.problem.all_sector_levels(s, &gammas, k, &self.opts.eigen)?;
        let (ground, ground_energy) = sectors
            .iter()
            .map(|(l, lv)| (*l, lv[0]))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("at least one sector");
        Ok(Point { u: gp.u, tau, mask: super::mask_of(&gammas), sectors, ground, ground_energy })
    }

    fn grid(&self) -> Vec<GridPoint> {
        let n = self.opts.n_grid.max(2);
        let mut pts: Vec<GridPoint> =
            (0..n).map(|i| GridPoint { u: i as f64 / (n - 1) as f64, tau_pin: None }).collect();
        if self.profile.kind != ProfileKind::Homogeneous {
            for j in 1..=self.profile.n_spins {
                let tau_off = self.profile.field_off_tau(j).expect("inhomogeneous profile");
                if let Some(u) = self.path.fraction_at_tau(tau_off) {
                    pts.push(GridPoint { u, tau_pin: Some(tau_off) });
                }
            }
        }
        pts.sort_by(|a, b| a.u.total_cmp(&b.u).then(b.tau_pin.is_some().cmp(&a.tau_pin.is_some())));
        // keep the pinned copy when a breakpoint coincides with a uniform point
        pts.dedup_by(|later, earlier| (later.u - earlier.u).abs() < 1e-15);
        pts
    }

    fn ground_changed(a: &Point, b: &Point) -> bool {
        b.ground.restrict(a.mask) != a.ground
    }

    fn narrow_enough(&self, a: &Point, b: &Point) -> bool {
        let tau_span = self.path.tau1 - self.path.tau0;
        if tau_span > 0.0 {
            (b.tau - a.tau).abs() < self.opts.tau_tol || b.u - a.u < 1e-14
        } else {
            b.u - a.u < self.opts.tau_tol
        }
    }

    fn bisect_ground(&self, a: &Point, b: &Point, out: &mut CrossingReport) -> Result<()> {
        if self.narrow_enough(a, b) {
            self.record_ground(a, b, out);
            return Ok(());
        }
        let c = self.evaluate(GridPoint { u: 0.5 * (a.u + b.u), tau_pin: None }, 1)?;
        if Self::ground_changed(a, &c) {
            self.bisect_ground(a, &c, out)?;
        }
        if Self::ground_changed(&c, b) {
            self.bisect_ground(&c, b, out)?;
        }
        Ok(())
    }

    fn record_ground(&self, a: &Point, b: &Point, out: &mut CrossingReport) {
        let (la, lb) = (a.ground, b.ground);
        let gap_left = a.energy_of(&la) - a.energy_of(&lb);
        let gap_right = b.energy_of(&la) - b.energy_of(&lb);
        let tol = self.opts.degeneracy_tol;
        if gap_left.abs() <= tol && gap_right.abs() <= tol {
            out.degeneracies.push(Degeneracy {
                t_over_t: b.u,
                tau: b.tau,
                sector_a: la,
                sector_b: lb,
                splitting: gap_right.abs().max(gap_left.abs()),
            });
            return;
        }
        out.events.push(CrossingEvent {
            tau_bracket: [a.tau, b.tau],
            t_over_t_bracket: [a.u, b.u],
            sector_a: la,
            sector_b: lb,
            level_rank: 0,
            refined_tau: interpolate_zero(a.tau, gap_left, b.tau, gap_right),
            involves_ground: true,
            gap_left,
            gap_right,
        });
    }

    fn record_point_degeneracy(&self, p: &Point, out: &mut CrossingReport) {
        let second = p
            .sectors
            .iter()
            .filter(|(l, _)| *l != p.ground)
            .map(|(l, lv)| (*l, lv[0]))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((label, e)) = second {
            let splitting = e - p.ground_energy;
            if splitting <= self.opts.degeneracy_tol {
                out.degeneracies.push(Degeneracy {
                    t_over_t: p.u,
                    tau: p.tau,
                    sector_a: p.ground,
                    sector_b: label,
                    splitting,
                });
            }
        }
    }

    /// Crossings between tracked excited levels of different sectors on an
    /// interval where the frozen set does not change.
    fn excited_crossings(&self, a: &Point, b: &Point, out: &mut CrossingReport) -> Result<()> {
        let k = self.opts.k_levels;
        let merged_a = merge_levels(&a.sectors, k);
        let merged_b = merge_levels(&b.sectors, k);
        let mut ids: Vec<(SectorLabel, usize)> =
            merged_a.iter().chain(merged_b.iter()).map(|l| (l.sector, l.index)).collect();
        ids.sort();
        ids.dedup();
        let rank_at_a =
            |id: &(SectorLabel, usize)| merged_a.iter().position(|l| (l.sector, l.index) == *id).unwrap_or(k);
        let tol = self.opts.degeneracy_tol;
        for (i, x) in ids.iter().enumerate() {
            for y in &ids[i + 1..] {
                if x.0 == y.0 {
                    continue;
                }
                let (Some(xa), Some(ya), Some(xb), Some(yb)) =
                    (a.level(&x.0, x.1), a.level(&y.0, y.1), b.level(&x.0, x.1), b.level(&y.0, y.1))
                else {
                    continue;
                };
                let (da, db) = (xa - ya, xb - yb);
                if !((da < -tol && db > tol) || (da > tol && db < -tol)) {
                    continue;
                }
                // orient so that `lo` is below on the left
                let (lo, hi) = if da < 0.0 { (*x, *y) } else { (*y, *x) };
                let (ua, ub, ta, tb, ga, gb) = self.bisect_pair(a, b, lo, hi, -da.abs(), db.abs())?;
                let u_mid = 0.5 * (ua + ub);
                // a pair that meets at the global ground was reported as a ground crossing
                let mid = self.evaluate(GridPoint { u: u_mid, tau_pin: None }, 1)?;
                let meet = self.pair_levels(u_mid, lo, hi)?;
                if meet.0.min(meet.1) <= mid.ground_energy + 1e-9 {
                    continue;
                }
                out.events.push(CrossingEvent {
                    tau_bracket: [ta, tb],
                    t_over_t_bracket: [ua, ub],
                    sector_a: lo.0,
                    sector_b: hi.0,
                    level_rank: rank_at_a(&lo).min(rank_at_a(&hi)),
                    refined_tau: interpolate_zero(ta, ga, tb, gb),
                    involves_ground: false,
                    gap_left: ga,
                    gap_right: gb,
                });
            }
        }
        Ok(())
    }

    fn pair_levels(&self, u: f64, x: (SectorLabel, usize), y: (SectorLabel, usize)) -> Result<(f64, f64)> {
        let (s, tau) = self.path.at_fraction(u);
        let gammas = self.profile.gammas(s, tau);
        let ex = self.problem.sector_levels(s, &gammas, x.0, x.1 + 1, &self.opts.eigen)?;
        let ey = self.problem.sector_levels(s, &gammas, y.0, y.1 + 1, &self.opts.eigen)?;
        Ok((ex[x.1], ey[y.1]))
    }

    #[allow(clippy::type_complexity)]
    fn bisect_pair(
        &self,
        a: &Point,
        b: &Point,
        lo: (SectorLabel, usize),
        hi: (SectorLabel, usize),
        mut ga: f64,
        mut gb: f64,
    ) -> Result<(f64, f64, f64, f64, f64, f64)> {
        let (mut ua, mut ub, mut ta, mut tb) = (a.u, b.u, a.tau, b.tau);
        while (tb - ta).abs() >= self.opts.tau_tol && ub - ua > 1e-14 {
            let um = 0.5 * (ua + ub);
            let (el, eh) = self.pair_levels(um, lo, hi)?;
            let gm = el - eh;
            let tm = self.path.at_fraction(um).1;
            if gm < 0.0 {
                ua = um;
                ta = tm;
                ga = gm;
            } else {
                ub = um;
                tb = tm;
                gb = gm;
            }
        }
        Ok((ua, ub, ta, tb, ga, gb))
    }
}

fn interpolate_zero(x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    if y1 == y0 {
        0.5 * (x0 + x1)
    } else {
        (x0 + (x1 - x0) * (-y0) / (y1 - y0)).clamp(x0.min(x1), x0.max(x1))
    }
}

/// Scans the path for exact level crossings.
pub fn detect_crossings(
    model: &ProblemModel,
    path: &AnnealPath,
    profile: &FieldProfile,
    opts: &CrossingOptions,
) -> Result<CrossingReport> {
    super::check_sizes(model, profile)?;
    path.validate()?;
    if opts.k_levels == 0 {
        return Err(Error::domain("crossing search needs k_levels >= 1"));
    }
    let scanner = Scanner { problem: SpectralProblem::new(model)?, path, profile, opts: *opts };
    let grid = scanner.grid();
    let k = opts.k_levels;
    let points: Vec<Point> = grid.par_iter().map(|gp| scanner.evaluate(*gp, k)).collect::<Result<_>>()?;

    let mut report =
        CrossingReport { events: Vec::new(), degeneracies: Vec::new(), grid: grid.iter().map(|g| g.u).collect() };
    for p in &points {
        scanner.record_point_degeneracy(p, &mut report);
    }
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if Scanner::ground_changed(a, b) {
            scanner.bisect_ground(a, b, &mut report)?;
        }
        if k > 1 && a.mask == b.mask {
            scanner.excited_crossings(a, b, &mut report)?;
        }
    }
    report.events.sort_by(|x, y| {
        x.refined_tau
            .total_cmp(&y.refined_tau)
            .then(y.involves_ground.cmp(&x.involves_ground))
            .then(x.sector_a.cmp(&y.sector_a))
            .then(x.sector_b.cmp(&y.sector_b))
    });
    Ok(report)
}

/// `Σ_j |dΓ_j/ds|` at path fraction `u`.
pub fn field_speed_sum(profile: &FieldProfile, path: &AnnealPath, u: f64) -> Result<f64> {
    let (s, tau) = path.at_fraction(u);
    let dx_ds = match profile.kind {
        ProfileKind::Homogeneous => 1.0,
        ProfileKind::Ramp | ProfileKind::Quench => {
            let ds = path.s1 - path.s0;
            if ds <= 0.0 {
                return Err(Error::domain("field speed per unit s is undefined when s is constant"));
            }
            (path.tau1 - path.tau0) / ds
        }
    };
    let x = profile.control(s, tau);
    let mut total = 0.0;
    for j in 1..=profile.n_spins {
        total += profile.gamma_slope(j, x)?.abs();
    }
    Ok(total * dx_ds.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AdiabaticBound {
    Finite {
        /// `max (‖H0‖ + Σ_j |dΓ_j/ds|) / Δ²` over the grid.
        time: f64,
        t_over_t: f64,
        min_gap: f64,
    },
    /// The gap closes exactly; no run time is adiabatic.
    Infinite { tau: f64, reason: String },
}

/// Heuristic adiabatic run time along the path.
pub fn adiabatic_bound(
    model: &ProblemModel,
    path: &AnnealPath,
    profile: &FieldProfile,
    n_grid: usize,
) -> Result<AdiabaticBound> {
    // fails early for profiles without a field slope
    field_speed_sum(profile, path, 0.0)?;
    let opts = CrossingOptions::new(1, n_grid);
    let report = detect_crossings(model, path, profile, &opts)?;
    if let Some(ev) = report.events.iter().find(|e| e.involves_ground) {
        return Ok(AdiabaticBound::Infinite {
            tau: ev.refined_tau,
            reason: format!("ground crossing between sectors {} and {}", ev.sector_a, ev.sector_b),
        });
    }
    let problem = SpectralProblem::new(model)?;
    let h0 = problem.h0_norm();
    let n = n_grid.max(2);
    let eig = EigenOptions::default();
    let samples: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let u = i as f64 / (n - 1) as f64;
            let slice = super::slice_at(&problem, path, profile, u, None, 2, &eig)?;
            let gap = slice.levels[1].energy - slice.levels[0].energy;
            Ok((u, slice.tau, gap))
        })
        .collect::<Result<_>>()?;
    let mut best = (0.0, 0.0, f64::INFINITY);
    for (u, tau, gap) in samples {
        if gap < 1e-12 {
            return Ok(AdiabaticBound::Infinite { tau, reason: format!("gap {gap:e} at t/T = {u}") });
        }
        let time = (h0 + field_speed_sum(profile, path, u)?) / (gap * gap);
        if time > best.0 {
            best = (time, u, best.2);
        }
        best.2 = best.2.min(gap);
    }
    Ok(AdiabaticBound::Finite { time: best.0, t_over_t: best.1, min_gap: best.2 })
}
