//! Classification of the rotor's asymptotic motion (threshold rotation vs.
//! p:q frequency locking), the analytic 1:2 phase lag and its measured
//! counterpart, the locking-region map in the reduced parameter space
//! (Γ/f_d, N/(I f_d²)), and adiabatic parameter-path sweeps with hysteresis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_periods, PeriodObserver, RotorState, Sample, Trajectory};
use crate::error::{Error, Result};
use crate::params::{Coefficients, Dimensionless, DriveConfig, SystemParams};
use crate::IntegratorSettings;

use std::f64::consts::PI;

/// Kind of limit cycle reached by the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CycleKind {
    /// Rotation frequency set by the torque/damping balance N/(4πIΓ).
    Threshold,
    /// p rotations per q drive periods (f_r = p/q · f_d), reduced fraction.
    Lock { p: u32, q: u32 },
    /// Neither criterion met within tolerances.
    Unresolved,
}

impl CycleKind {
    pub fn is_lock(&self, p: u32, q: u32) -> bool {
        matches!(self, CycleKind::Lock { p: a, q: b } if *a == p && *b == q)
    }

    pub fn label(&self) -> String {
        match self {
            CycleKind::Threshold => "threshold".to_string(),
            CycleKind::Lock { p, q } => format!("lock_{p}_{q}"),
            CycleKind::Unresolved => "unresolved".to_string(),
        }
    }
}

/// Outcome of classifying one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCycleReport {
    pub kind: CycleKind,
    /// Mean rotation frequency over the trailing analysis window, Hz (or in
    /// units of f_d for the dimensionless entry points).
    pub f_r: f64,
    /// Steady phase lag φ ∈ [0, π] between drive and rotation; present only
    /// for 1:2 locks.
    pub phase_lag: Option<f64>,
    /// Convergence metric of the stroboscopic map over the trailing window.
    pub residual: f64,
}

/// Settings of the limit-cycle classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifySettings {
    pub steps_per_half_period: u32,
    /// Periods discarded before the first analysis window.
    pub transient_periods: u32,
    /// The transient is re-run, doubling each time, at most this many times
    /// when a lock candidate is still converging.
    pub max_transient_doublings: u32,
    /// Analysis window length in drive periods.
    pub window_periods: u32,
    /// Extra window used to average the locked phase.
    pub phase_window_periods: u32,
    /// Largest q considered in the p:q lock search.
    pub q_max: u32,
    /// Stroboscopic fixed-point residual required for a lock.
    pub lock_residual_tol: f64,
    /// |f_r·q − f_d·p|/f_d required for a lock.
    pub freq_quantization_tol: f64,
    /// Relative tolerance on |f_r − N/(4πIΓ)| for threshold classification.
    pub threshold_tol: f64,
}

impl Default for ClassifySettings {
    fn default() -> Self {
        ClassifySettings {
            steps_per_half_period: 200,
            transient_periods: 2000,
            max_transient_doublings: 4,
            window_periods: 1000,
            phase_window_periods: 256,
            q_max: 8,
            lock_residual_tol: 1e-6,
            freq_quantization_tol: 1e-6,
            threshold_tol: 0.05,
        }
    }
}

impl ClassifySettings {
    /// Cheaper settings for large region maps; classification tolerances are
    /// unchanged, only the time budget shrinks.
    pub fn for_region_map() -> Self {
        ClassifySettings {
            steps_per_half_period: 32,
            transient_periods: 1000,
            max_transient_doublings: 2,
            ..Self::default()
        }
    }

    fn integrator(&self) -> IntegratorSettings {
        IntegratorSettings {
            steps_per_half_period: self.steps_per_half_period,
            transient_periods: self.transient_periods,
            output_stride: 1,
        }
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Strobe stride at which a p:q lock is a fixed point of the (α mod π, α̇)
/// map: the smallest m with 2·p·m/q integer.
fn lock_stride(p: u32, q: u32) -> u32 {
    q / gcd(2 * p, q)
}

/// Difference of two angles folded into [-π/2, π/2), respecting the rod's
/// head-tail symmetry (orientation defined mod π).
fn half_turn_diff(a: f64, b: f64) -> f64 {
    (a - b + PI / 2.0).rem_euclid(PI) - PI / 2.0
}

/// Reduce a raw phase to the physical range [0, π].
fn reduce_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(2.0 * PI);
    if r > PI {
        2.0 * PI - r
    } else {
        r
    }
}

/// Threshold rotation frequency N/(4πIΓ): balance of the damping and the
/// time-averaged radiation torque N/2 at duty 1/2.
pub fn threshold_frequency(coeffs: &Coefficients) -> Result<f64> {
    if coeffs.damping <= 0.0 {
        return Err(Error::Unsupported {
            message: "threshold frequency is undefined at zero damping".into(),
        });
    }
    Ok(coeffs.torque / (4.0 * PI * coeffs.inertia * coeffs.damping))
}

/// Threshold frequency in units of f_d for arbitrary duty:
/// ñ·duty/(2π·γ̃); `None` at zero damping.
pub fn threshold_ratio(point: &Dimensionless, duty: f64) -> Option<f64> {
    if point.gamma <= 0.0 {
        return None;
    }
    Some(point.torque * duty / (2.0 * PI * point.gamma))
}

/// Analytic phase lag of 1:2-locked rotation (duty 1/2),
///
///   φ = arccos[(π/2V)(N − 2π f_d I Γ)],
///
/// obtained by averaging the equation of motion over one driving period.
/// Returns `None` when the arccos argument leaves [−1, 1]: the necessary
/// condition for 1:2 locking fails and the lock is impossible.
pub fn phase_lag_analytic(coeffs: &Coefficients, drive: &DriveConfig) -> Option<f64> {
    phase_lag_analytic_dimensionless(&coeffs.dimensionless(drive))
}

/// Dimensionless form of the analytic 1:2 phase lag:
/// x = (π/2ṽ)(ñ − 2πγ̃), φ = arccos x for |x| ≤ 1.
pub fn phase_lag_analytic_dimensionless(point: &Dimensionless) -> Option<f64> {
    if point.potential <= 0.0 {
        return None;
    }
    let x = PI / (2.0 * point.potential) * (point.torque - 2.0 * PI * point.gamma);
    if x.abs() <= 1.0 {
        Some(x.acos())
    } else {
        None
    }
}

/// Measured phase lag of a 1:2-locked trajectory.
///
/// Fits α(t) = α₀ + π f_d t over the trailing window (least squares on the
/// unwrapped orientation, time referenced to the trajectory start, which is a
/// switch into circular polarization) and returns φ = π − 2α₀ reduced to
/// [0, π]. Errors if the fitted slope deviates from π f_d.
pub fn phase_lag_measured(traj: &Trajectory, drive: &DriveConfig) -> Result<f64> {
    const SLOPE_TOL: f64 = 1e-5;
    let per = traj.samples_per_period as usize;
    let window_periods = traj.periods.min(512);
    if window_periods < 4 {
        return Err(Error::WindowTooLong {
            requested: 4,
            available: traj.periods,
        });
    }
    let n_window = window_periods as usize * per;
    let t0 = traj.samples[0].time;
    let tail = &traj.samples[traj.samples.len() - n_window..];

    // least-squares slope/intercept on (t, alpha)
    let n = tail.len() as f64;
    let mut st = 0.0;
    let mut sa = 0.0;
    for s in tail {
        st += s.time - t0;
        sa += s.alpha;
    }
    let tbar = st / n;
    let abar = sa / n;
    let mut stt = 0.0;
    let mut sta = 0.0;
    for s in tail {
        let dt = s.time - t0 - tbar;
        stt += dt * dt;
        sta += dt * (s.alpha - abar);
    }
    let slope = sta / stt;
    let target = PI * drive.frequency_hz;
    let rel_dev = ((slope - target) / target).abs();
    if rel_dev > SLOPE_TOL {
        return Err(Error::WindowNotLocked {
            rel_dev,
            tol: SLOPE_TOL,
        });
    }

    // mean phase over an integer number of periods; the periodic ripple of
    // the locked cycle averages out exactly on this grid
    let mut sum = 0.0;
    for s in tail {
        sum += s.alpha - target * (s.time - t0);
    }
    let alpha0 = sum / n;
    Ok(reduce_phase(PI - 2.0 * alpha0))
}

/// Observer collecting period-boundary states for lock detection.
struct BoundaryObserver {
    ends: Vec<(f64, f64)>, // (alpha unwrapped, omega/f_d)
    f_d: f64,
}

impl PeriodObserver for BoundaryObserver {
    fn on_period_end(&mut self, _period: u64, state: &RotorState) {
        self.ends.push((state.alpha, state.omega / self.f_d));
    }
}

/// Lock candidate detection over a window of period-boundary states.
///
/// `r` is the mean rotation in units of f_d; candidates p:q with q ≤ q_max
/// are accepted when the strided stroboscopic residual and the frequency
/// quantization both fall below their tolerances.
struct WindowAnalysis {
    r: f64,
    lock: Option<(u32, u32, f64)>,
    /// Best residual among still-converging candidates, for the retry logic.
    converging_residual: f64,
    /// Plain m = 1 strobe residual, reported for non-locked states.
    generic_residual: f64,
}

fn strobe_residual(ends: &[(f64, f64)], stride: usize) -> f64 {
    let n_pairs = (ends.len() / stride).saturating_sub(1).min(100);
    if n_pairs == 0 {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for j in 0..n_pairs {
        let a = ends[ends.len() - 1 - j * stride];
        let b = ends[ends.len() - 1 - (j + 1) * stride];
        let d = half_turn_diff(a.0, b.0).abs() + (a.1 - b.1).abs() / (2.0 * PI);
        worst = worst.max(d);
    }
    worst
}

fn analyze_window(ends: &[(f64, f64)], window_periods: u32, settings: &ClassifySettings) -> WindowAnalysis {
    let w = window_periods as usize;
    let last = ends[ends.len() - 1];
    let first = ends[ends.len() - 1 - w];
    let r = (last.0 - first.0) / (2.0 * PI * w as f64);

    let mut lock = None;
    let mut converging = f64::INFINITY;
    for q in 1..=settings.q_max {
        let p_est = (r * q as f64).round();
        if p_est < 1.0 {
            continue;
        }
        let p = p_est as u32;
        if gcd(p, q) != 1 {
            continue;
        }
        let quant = (r * q as f64 - p as f64).abs();
        if quant > 0.02 {
            continue;
        }
        let m = lock_stride(p, q) as usize;
        let residual = strobe_residual(ends, m);
        if residual < settings.lock_residual_tol && quant < settings.freq_quantization_tol {
            lock = Some((p, q, residual));
            break;
        }
        if residual < 1e-3 {
            converging = converging.min(residual);
        }
    }

    WindowAnalysis {
        r,
        lock,
        converging_residual: converging,
        generic_residual: strobe_residual(ends, 1),
    }
}

/// Observer accumulating the mean of α(τ) − π·τ over a phase window.
struct PhaseAverager {
    f_d: f64,
    t0: f64,
    sum: f64,
    count: u64,
}

impl PeriodObserver for PhaseAverager {
    fn on_sample(&mut self, sample: Sample) {
        self.sum += sample.alpha - PI * self.f_d * (sample.time - self.t0);
        self.count += 1;
    }
}

/// Classify the asymptotic motion at a dimensionless operating point.
///
/// `initial` is (α, α̇/f_d); the returned `f_r` is in units of f_d. The
/// classifier discards the configured transient, searches p:q locks up to
/// q_max by stroboscopic fixed-point convergence plus frequency
/// quantization, then tests the threshold balance; the transient is doubled
/// (bounded) while a lock candidate is still converging.
pub fn classify_dimensionless(
    point: &Dimensionless,
    duty: f64,
    initial: (f64, f64),
    settings: &ClassifySettings,
) -> Result<LimitCycleReport> {
    classify_dimensionless_biased(point, duty, initial, settings, 0.0)
}

/// [`classify_dimensionless`] with an extra constant angular acceleration
/// (external torque over I·f_d²) applied in both polarization states.
pub(crate) fn classify_dimensionless_biased(
    point: &Dimensionless,
    duty: f64,
    initial: (f64, f64),
    settings: &ClassifySettings,
    bias_torque: f64,
) -> Result<LimitCycleReport> {
    let coeffs = point.as_unit_coefficients();
    let drive = DriveConfig {
        frequency_hz: 1.0,
        duty,
    };
    let integ = settings.integrator();

    let mut state = RotorState::new(initial.0, initial.1);
    let mut observer = BoundaryObserver {
        ends: Vec::new(),
        f_d: 1.0,
    };

    // initial transient
    run_periods(
        &mut state,
        &coeffs,
        &drive,
        &integ,
        settings.transient_periods as u64,
        bias_torque,
        false,
        &mut crate::dynamics::NullObserver,
    )?;

    let mut report = None;
    for attempt in 0..=settings.max_transient_doublings {
        observer.ends.clear();
        observer.ends.push((state.alpha, state.omega));
        run_periods(
            &mut state,
            &coeffs,
            &drive,
            &integ,
            settings.window_periods as u64,
            bias_torque,
            false,
            &mut observer,
        )?;
        let analysis = analyze_window(&observer.ends, settings.window_periods, settings);

        if let Some((p, q, residual)) = analysis.lock {
            let phase = if (p, q) == (1, 2) {
                let mut averager = PhaseAverager {
                    f_d: 1.0,
                    t0: state.time,
                    sum: 0.0,
                    count: 0,
                };
                // the phase window starts at a period boundary (a switch
                // into circular polarization), matching the φ convention
                let shifted = RotorState {
                    time: 0.0,
                    ..state
                };
                let mut s = shifted;
                run_periods(
                    &mut s,
                    &coeffs,
                    &drive,
                    &integ,
                    settings.phase_window_periods as u64,
                    bias_torque,
                    true,
                    &mut averager,
                )?;
                Some(reduce_phase(PI - 2.0 * averager.sum / averager.count as f64))
            } else {
                None
            };
            report = Some(LimitCycleReport {
                kind: CycleKind::Lock { p, q },
                f_r: p as f64 / q as f64,
                phase_lag: phase,
                residual,
            });
            break;
        }

        let still_converging = analysis.converging_residual.is_finite();
        if !still_converging || attempt == settings.max_transient_doublings {
            // threshold balance test
            let resolution = 1.0 / (2.0 * PI * settings.window_periods as f64);
            let kind = match threshold_ratio(point, duty) {
                Some(pred) => {
                    if (analysis.r - pred).abs()
                        <= (settings.threshold_tol * analysis.r.abs()).max(resolution)
                    {
                        CycleKind::Threshold
                    } else {
                        CycleKind::Unresolved
                    }
                }
                None => CycleKind::Unresolved,
            };
            report = Some(LimitCycleReport {
                kind,
                f_r: analysis.r,
                phase_lag: None,
                residual: analysis.generic_residual,
            });
            break;
        }

        // candidate still converging: extend the transient and retry
        let extra = settings.transient_periods as u64 * (1 << attempt);
        run_periods(
            &mut state,
            &coeffs,
            &drive,
            &integ,
            extra,
            bias_torque,
            false,
            &mut crate::dynamics::NullObserver,
        )?;
    }

    Ok(report.expect("classification loop always produces a report"))
}

/// Classify at an SI operating point; `f_r` is returned in hertz.
pub fn classify(
    coeffs: &Coefficients,
    drive: &DriveConfig,
    initial: &RotorState,
    settings: &ClassifySettings,
) -> Result<LimitCycleReport> {
    let point = coeffs.dimensionless(drive);
    let scaled = (initial.alpha, initial.omega / drive.frequency_hz);
    let mut report = classify_dimensionless(&point, drive.duty, scaled, settings)?;
    report.f_r *= drive.frequency_hz;
    Ok(report)
}

/// One axis of the region-map grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        (0..self.count)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64)
            .collect()
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid(name, "grid axis needs at least one point"));
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.max < self.min {
            return Err(Error::invalid(name, "grid axis bounds must be finite and ordered"));
        }
        Ok(())
    }
}

/// Grid over the reduced parameter space (γ̃ = Γ/f_d, ñ = N/(I f_d²)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub gamma: AxisSpec,
    pub torque: AxisSpec,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        self.gamma.validate("grid.gamma")?;
        self.torque.validate("grid.torque")
    }
}

/// Outcome at one grid cell for one initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub kind: CycleKind,
    pub f_r: f64,
    pub residual: f64,
}

/// One cell of the region map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCell {
    pub gamma: f64,
    pub torque: f64,
    /// Analytic 1:2 phase lag when the lock is possible (Eq.-consistent
    /// necessary condition), `None` in the white region.
    pub analytic_phase: Option<f64>,
    /// Within half a cell of the line where threshold rotation coincides
    /// with 1:2 (ñ = 2πγ̃) or 1:4 (ñ = πγ̃) locking.
    pub on_coincidence_1_2: bool,
    pub on_coincidence_1_4: bool,
    pub outcomes: Vec<CellOutcome>,
}

/// Map of the reduced parameter space at a fixed torque/potential ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub nv_ratio: f64,
    pub duty: f64,
    pub gamma_axis: Vec<f64>,
    pub torque_axis: Vec<f64>,
    /// Row-major: index = i_torque * gamma_axis.len() + i_gamma.
    pub cells: Vec<RegionCell>,
}

/// The 8 default initial conditions (α, α̇/f_d) used to probe each cell:
/// (α, α̇/2πf_d) ∈ {0, π/4} × {0, 0.25, 0.5, 1.0}, covering libration-like
/// and rotation-like starts.
pub fn default_ensemble() -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(8);
    for alpha in [0.0, PI / 4.0] {
        for rot in [0.0, 0.25, 0.5, 1.0] {
            out.push((alpha, 2.0 * PI * rot));
        }
    }
    out
}

/// Sweep the reduced parameter space on a grid. Each cell records the
/// analytic lockability flag and the simulated classification for every
/// member of the initial-condition ensemble. Cells are independent and run
/// in parallel; the output ordering is deterministic.
pub fn map_region(
    grid: &GridSpec,
    nv_ratio: f64,
    duty: f64,
    ensemble: &[(f64, f64)],
    settings: &ClassifySettings,
) -> Result<RegionMap> {
    grid.validate()?;
    if !(nv_ratio.is_finite() && nv_ratio > 0.0) {
        return Err(Error::invalid("nv_ratio", "must be finite and > 0"));
    }
    let gamma_axis = grid.gamma.values();
    let torque_axis = grid.torque.values();
    let d_gamma = if gamma_axis.len() > 1 {
        gamma_axis[1] - gamma_axis[0]
    } else {
        0.0
    };
    let d_torque = if torque_axis.len() > 1 {
        torque_axis[1] - torque_axis[0]
    } else {
        0.0
    };

    let indices: Vec<(usize, usize)> = (0..torque_axis.len())
        .flat_map(|j| (0..gamma_axis.len()).map(move |i| (j, i)))
        .collect();

    let cells: Vec<RegionCell> = indices
        .par_iter()
        .map(|&(j, i)| {
            let gamma = gamma_axis[i];
            let torque = torque_axis[j];
            let point = Dimensionless {
                gamma,
                torque,
                potential: torque / nv_ratio,
            };
            let analytic_phase = phase_lag_analytic_dimensionless(&point);
            let half_cell = 0.5 * d_torque + 2.0 * PI * 0.5 * d_gamma;
            let outcomes = ensemble
                .iter()
                .map(|&ic| match classify_dimensionless(&point, duty, ic, settings) {
                    Ok(r) => CellOutcome {
                        kind: r.kind,
                        f_r: r.f_r,
                        residual: r.residual,
                    },
                    Err(_) => CellOutcome {
                        kind: CycleKind::Unresolved,
                        f_r: f64::NAN,
                        residual: f64::INFINITY,
                    },
                })
                .collect();
            RegionCell {
                gamma,
                torque,
                analytic_phase,
                on_coincidence_1_2: (torque - 2.0 * PI * gamma).abs() <= half_cell,
                on_coincidence_1_4: (torque - PI * gamma).abs() <= 0.5 * d_torque + PI * 0.5 * d_gamma,
                outcomes: outcomes,
            }
        })
        .collect();

    Ok(RegionMap {
        nv_ratio,
        duty,
        gamma_axis,
        torque_axis,
        cells,
    })
}

/// Coordinate space of a parameter path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSpace {
    /// Waypoints are (pressure in Pa, drive frequency in Hz).
    PressureDrive,
    /// Waypoints are (γ̃, ñ); converted to an equivalent physical
    /// (pressure, frequency) path through the configured system so the
    /// carried state stays physical across frequency changes.
    Dimensionless,
}

/// An adiabatic path through parameter space: piecewise-linear ramps between
/// waypoints, parameters updated once per drive period so polarization
/// switches stay exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterPath {
    pub space: PathSpace,
    pub waypoints: Vec<[f64; 2]>,
    /// Periods spent ramping across each segment (len = waypoints − 1).
    pub dwell_periods: Vec<u64>,
    /// Classification reports emitted per segment.
    pub reports_per_segment: u32,
}

impl ParameterPath {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::invalid("path.waypoints", "need at least 2 waypoints"));
        }
        if self.dwell_periods.len() != self.waypoints.len() - 1 {
            return Err(Error::invalid(
                "path.dwell_periods",
                "need exactly one dwell per segment (waypoints − 1)",
            ));
        }
        if self.dwell_periods.iter().any(|&d| d == 0) {
            return Err(Error::invalid("path.dwell_periods", "dwell must be >= 1 period"));
        }
        if self.reports_per_segment == 0 {
            return Err(Error::invalid("path.reports_per_segment", "must be >= 1"));
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if !(w[0].is_finite() && w[1].is_finite()) || w[0] < 0.0 || w[1] <= 0.0 {
                return Err(Error::invalid(
                    format!("path.waypoints[{i}]"),
                    "coordinates must be finite, first >= 0, second > 0",
                ));
            }
        }
        Ok(())
    }

    /// Scale every dwell by `factor` (ramp-rate refinement).
    pub fn with_dwell_scaled(&self, factor: f64) -> Self {
        ParameterPath {
            dwell_periods: self
                .dwell_periods
                .iter()
                .map(|&d| ((d as f64 * factor).round() as u64).max(1))
                .collect(),
            ..self.clone()
        }
    }
}

/// One classification report along a path sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub segment: usize,
    /// Position within the segment, 0 (start) ..= 1 (end waypoint).
    pub fraction: f64,
    pub pressure_pa: f64,
    pub frequency_hz: f64,
    pub gamma: f64,
    pub torque: f64,
    pub potential: f64,
    /// f_r in units of the instantaneous f_d.
    pub f_ratio: f64,
    pub report: LimitCycleReport,
}

/// Sweep settings; classification tolerances are shared with
/// [`ClassifySettings`], the analysis window is the trailing part of each
/// report interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub steps_per_half_period: u32,
    pub window_periods: u32,
    pub q_max: u32,
    pub lock_residual_tol: f64,
    pub freq_quantization_tol: f64,
    pub threshold_tol: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            steps_per_half_period: 64,
            window_periods: 200,
            q_max: 8,
            lock_residual_tol: 1e-6,
            freq_quantization_tol: 1e-6,
            threshold_tol: 0.05,
        }
    }
}

/// Per-period parameter ramp: linear interpolation between the segment's
/// physical endpoints, applied piecewise-constant over each period.
struct Ramp<'a> {
    system: &'a SystemParams,
    p_a: f64,
    p_b: f64,
    f_a: f64,
    f_b: f64,
    /// Periods of this segment already completed before this chunk.
    offset: u64,
    dwell: u64,
    ends: Vec<(f64, f64)>,
    f_current: f64,
}

impl PeriodObserver for Ramp<'_> {
    fn on_period_end(&mut self, _period: u64, state: &RotorState) {
        self.ends.push((state.alpha, state.omega / self.f_current));
    }

    fn coefficients_for_period(&mut self, period: u64) -> Option<(Coefficients, DriveConfig)> {
        let idx = self.offset + period;
        let frac = if self.dwell <= 1 {
            1.0
        } else {
            idx as f64 / (self.dwell - 1) as f64
        };
        let pressure = self.p_a + (self.p_b - self.p_a) * frac;
        let f_d = self.f_a + (self.f_b - self.f_a) * frac;
        self.f_current = f_d;
        let sys = self.system.with_pressure(pressure);
        Some((
            sys.coefficients(),
            DriveConfig {
                frequency_hz: f_d,
                duty: self.system.drive.duty,
            },
        ))
    }
}

/// Integrate continuously along a parameter path, never resetting the state,
/// and classify the motion at `reports_per_segment` points per segment.
/// Because the state is carried over, the classification at a waypoint can
/// depend on the approach direction (hysteresis).
pub fn sweep_path(
    path: &ParameterPath,
    system: &SystemParams,
    initial: &RotorState,
    settings: &SweepSettings,
) -> Result<Vec<PathPoint>> {
    path.validate()?;
    system.validate()?;

    // convert a waypoint to (pressure, frequency)
    let to_physical = |w: [f64; 2]| -> (f64, f64) {
        match path.space {
            PathSpace::PressureDrive => (w[0], w[1]),
            PathSpace::Dimensionless => {
                let coeffs_unit = system.with_pressure(1.0).coefficients();
                let inertia = coeffs_unit.inertia;
                // ñ = N/(I f²)  =>  f = sqrt(N/(ñ I))
                let f_d = (coeffs_unit.torque / (w[1] * inertia)).sqrt();
                // γ̃ = Γ/f  with Γ linear in pressure
                let pressure = w[0] * f_d / coeffs_unit.damping;
                (pressure, f_d)
            }
        }
    };

    let classify_settings = ClassifySettings {
        q_max: settings.q_max,
        lock_residual_tol: settings.lock_residual_tol,
        freq_quantization_tol: settings.freq_quantization_tol,
        threshold_tol: settings.threshold_tol,
        window_periods: settings.window_periods,
        ..ClassifySettings::default()
    };

    let integ = IntegratorSettings {
        steps_per_half_period: settings.steps_per_half_period,
        transient_periods: 0,
        output_stride: 1,
    };

    let mut state = *initial;
    let mut out = Vec::new();

    for (segment, pair) in path.waypoints.windows(2).enumerate() {
        let (p_a, f_a) = to_physical(pair[0]);
        let (p_b, f_b) = to_physical(pair[1]);
        let dwell = path.dwell_periods[segment];
        let reports = (path.reports_per_segment as u64).min(dwell);

        let mut done: u64 = 0;
        for rep in 0..reports {
            let until = (rep + 1) * dwell / reports;
            let chunk = until - done;
            let mut ramp = Ramp {
                system,
                p_a,
                p_b,
                f_a,
                f_b,
                offset: done,
                dwell,
                ends: Vec::with_capacity(chunk as usize + 1),
                f_current: f_a,
            };
            // the coefficients handed to run_periods are replaced per period
            // by the ramp observer; pass the segment-start values
            run_periods(
                &mut state,
                &system.with_pressure(p_a).coefficients(),
                &DriveConfig {
                    frequency_hz: f_a,
                    duty: system.drive.duty,
                },
                &integ,
                chunk,
                0.0,
                false,
                &mut ramp,
            )?;
            done = until;

            // classify the trailing window of this report interval
            let frac = done as f64 / dwell as f64;
            let ramp_frac = if dwell <= 1 {
                1.0
            } else {
                (done - 1) as f64 / (dwell - 1) as f64
            };
            let pressure = p_a + (p_b - p_a) * ramp_frac;
            let f_d = f_a + (f_b - f_a) * ramp_frac;
            let sys_now = system.with_pressure(pressure);
            let coeffs_now = sys_now.coefficients();
            let drive_now = DriveConfig {
                frequency_hz: f_d,
                duty: system.drive.duty,
            };
            let point = coeffs_now.dimensionless(&drive_now);

            let w = (settings.window_periods as usize).min(ramp.ends.len().saturating_sub(1));
            let report = if w >= 8 {
                let analysis = analyze_window(&ramp.ends, w as u32, &classify_settings);
                let kind = if let Some((p, q, _)) = analysis.lock {
                    CycleKind::Lock { p, q }
                } else {
                    let resolution = 1.0 / (2.0 * PI * w as f64);
                    match threshold_ratio(&point, drive_now.duty) {
                        Some(pred)
                            if (analysis.r - pred).abs()
                                <= (settings.threshold_tol * analysis.r.abs()).max(resolution) =>
                        {
                            CycleKind::Threshold
                        }
                        _ => CycleKind::Unresolved,
                    }
                };
                LimitCycleReport {
                    kind,
                    f_r: analysis.r * f_d,
                    phase_lag: None,
                    residual: match analysis.lock {
                        Some((_, _, res)) => res,
                        None => analysis.generic_residual,
                    },
                }
            } else {
                LimitCycleReport {
                    kind: CycleKind::Unresolved,
                    f_r: f64::NAN,
                    phase_lag: None,
                    residual: f64::INFINITY,
                }
            };

            out.push(PathPoint {
                segment,
                fraction: frac,
                pressure_pa: pressure,
                frequency_hz: f_d,
                gamma: point.gamma,
                torque: point.torque,
                potential: point.potential,
                f_ratio: report.f_r / f_d,
                report,
            });
        }
    }
    Ok(out)
}
