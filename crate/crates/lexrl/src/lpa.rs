//! Lexicographic projection ascent for differentiable objectives.
//!
//! Each iteration picks the first objective whose threshold is unmet (or the
//! final, unconstrained one) and ascends it — after bending the ascent
//! direction into the hypercones of all higher-priority gradients so their
//! objectives cannot be eroded. When no such direction exists the run stops:
//! within the cone tolerance `delta`, the point is stationary for this
//! prioritized problem.

use crate::cone::{angle_between, norm, project_cone, Hypercone, EPS_ANGLE};
use crate::lmdp::first_unsatisfied;
use crate::{Error, Result};

/// Directions shorter than this are treated as vanished (no usable ascent).
pub const DIRECTION_NORM_TOL: f64 = 1e-12;

/// Parameters of the direction search shared by the gradient optimizer and
/// the policy-gradient trainer.
#[derive(Debug, Clone)]
pub struct DirectionConfig {
    /// Thresholds for objectives `1..K−1`; the last objective is uncapped.
    pub thresholds: Vec<f64>,
    /// Cone aperture parameter in `[0, π/2)`; larger values protect
    /// higher-priority objectives more aggressively.
    pub delta: f64,
    /// When set, objectives currently above `threshold + buffer` do not
    /// constrain the direction at all (their cones are skipped).
    pub active_constraints: bool,
    /// Slack added to thresholds when deciding which constraints are
    /// comfortably satisfied; only meaningful with `active_constraints`.
    pub buffer: f64,
}

impl DirectionConfig {
    pub fn new(thresholds: Vec<f64>, delta: f64) -> Self {
        Self {
            thresholds,
            delta,
            active_constraints: false,
            buffer: 0.0,
        }
    }

    pub fn with_active_constraints(mut self, buffer: f64) -> Self {
        self.active_constraints = true;
        self.buffer = buffer;
        self
    }
}

/// Finds an update direction that ascends the currently active objective
/// while staying inside the hypercones of every higher-priority gradient.
///
/// `grads[i]` and `values[i]` describe objective `i + 1`; the active
/// objective is the first with an unmet threshold, else the last. Returns
/// `None` when no direction survives: every candidate either vanishes or
/// leaves some protected cone (a stationarity signal for the thresholded
/// problem).
pub fn find_direction(
    grads: &[Vec<f64>],
    values: &[f64],
    cfg: &DirectionConfig,
) -> Result<Option<Vec<f64>>> {
    let k = grads.len();
    if k == 0 || values.len() != k || cfg.thresholds.len() + 1 != k {
        return Err(Error::DimensionMismatch(format!(
            "find_direction: {} gradients, {} values, {} thresholds",
            k,
            values.len(),
            cfg.thresholds.len()
        )));
    }
    let dim = grads[0].len();
    if dim == 0 || grads.iter().any(|g| g.len() != dim) {
        return Err(Error::DimensionMismatch(
            "find_direction: gradients must share one nonzero dimension".into(),
        ));
    }
    for x in grads.iter().flatten().chain(values) {
        if !x.is_finite() {
            return Err(Error::NonFinite("find_direction input".into()));
        }
    }

    let boundary = std::f64::consts::FRAC_PI_2 - cfg.delta;
    let exempt = |j: usize| {
        // A comfortably satisfied constrained objective imposes nothing when
        // active-constraints mode is on; the last objective never qualifies.
        j + 1 < k && cfg.active_constraints && values[j] > cfg.thresholds[j] + cfg.buffer
    };
    // Objectives with (numerically) zero gradient are locally flat: no
    // direction can hurt them to first order, and they cannot define a cone.
    let flat = |j: usize| norm(&grads[j]) <= DIRECTION_NORM_TOL;

    let active = first_unsatisfied(values, &cfg.thresholds)?; // 1-based
    let mut u = grads[active - 1].clone();

    for j in 0..active - 1 {
        if exempt(j) || flat(j) || norm(&u) <= DIRECTION_NORM_TOL {
            continue;
        }
        if angle_between(&u, &grads[j])? < boundary {
            continue; // already safely inside this cone
        }
        let cone = Hypercone::new(grads[j].clone(), cfg.delta)?;
        u = project_cone(&u, &cone)?;
    }

    if norm(&u) <= DIRECTION_NORM_TOL {
        return Ok(None);
    }
    // A later projection can push the direction back out of an earlier cone;
    // accept only directions that end up inside all of them (and still ascend
    // the active objective itself).
    for j in 0..active {
        if exempt(j) || flat(j) {
            continue;
        }
        if angle_between(&u, &grads[j])? > boundary + EPS_ANGLE {
            return Ok(None);
        }
    }
    Ok(Some(u))
}

/// A differentiable multi-objective problem over `R^n`.
pub trait MultiObjective {
    /// Input dimension `n`.
    fn dim(&self) -> usize;
    /// Number of objectives `K`.
    fn k(&self) -> usize;
    /// All objective values at `x`.
    fn values(&self, x: &[f64]) -> Vec<f64>;
    /// All objective gradients at `x`.
    fn gradients(&self, x: &[f64]) -> Vec<Vec<f64>>;
    /// A shared smoothness (gradient Lipschitz) constant, when known.
    fn smoothness(&self) -> Option<f64> {
        None
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    /// The iteration budget ran out.
    MaxIters,
    /// No feasible ascent direction exists at the final point (within the
    /// cone tolerance, the point is stationary for the thresholded problem).
    Stationary,
}

/// One recorded iterate: the point, its objective values, and the direction
/// taken from it (`None` on the final record).
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub direction: Option<Vec<f64>>,
}

/// Full history of a run. The last step always has `direction: None`.
#[derive(Debug, Clone)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    pub stop: StopReason,
}

impl Trace {
    /// Objective values at the final iterate.
    pub fn final_values(&self) -> &[f64] {
        &self.steps.last().expect("trace is never empty").values
    }

    /// The final iterate.
    pub fn final_x(&self) -> &[f64] {
        &self.steps.last().expect("trace is never empty").x
    }
}

/// A run that hit non-finite numbers; the partial history is preserved so
/// callers can still report it.
#[derive(Debug)]
pub struct LpaAbort {
    pub partial: Trace,
    pub message: String,
}

impl std::fmt::Display for LpaAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted: {}", self.message)
    }
}

impl std::error::Error for LpaAbort {}

impl From<LpaAbort> for Error {
    fn from(a: LpaAbort) -> Self {
        Error::NonFinite(a.message)
    }
}

/// Settings for [`lpa_run`].
#[derive(Debug, Clone)]
pub struct LpaConfig {
    pub direction: DirectionConfig,
    pub step_size: f64,
    pub max_iters: usize,
}

/// Fixed-step ascent: `x ← x + step_size · d` with `d` from
/// [`find_direction`], until the direction vanishes or the budget runs out.
///
/// Non-finite values or gradients abort the run; the partial trace rides
/// along in the error.
pub fn lpa_run(
    problem: &dyn MultiObjective,
    x0: &[f64],
    cfg: &LpaConfig,
) -> std::result::Result<Trace, LpaAbort> {
    let mut x = x0.to_vec();
    let mut steps: Vec<TraceStep> = Vec::new();
    let abort = |steps: Vec<TraceStep>, message: String| LpaAbort {
        partial: Trace {
            steps,
            stop: StopReason::MaxIters,
        },
        message,
    };

    for iter in 0..cfg.max_iters {
        let values = problem.values(&x);
        let grads = problem.gradients(&x);
        if values.iter().any(|v| !v.is_finite()) || grads.iter().flatten().any(|g| !g.is_finite())
        {
            return Err(abort(
                steps,
                format!("non-finite objective data at iteration {iter}, x = {x:?}"),
            ));
        }
        let dir = match find_direction(&grads, &values, &cfg.direction) {
            Ok(d) => d,
            Err(e) => return Err(abort(steps, format!("iteration {iter}: {e}"))),
        };
        match dir {
            None => {
                steps.push(TraceStep {
                    x: x.clone(),
                    values,
                    direction: None,
                });
                return Ok(Trace {
                    steps,
                    stop: StopReason::Stationary,
                });
            }
            Some(d) => {
                steps.push(TraceStep {
                    x: x.clone(),
                    values,
                    direction: Some(d.clone()),
                });
                for (xi, di) in x.iter_mut().zip(&d) {
                    *xi += cfg.step_size * di;
                }
            }
        }
    }
    let values = problem.values(&x);
    steps.push(TraceStep {
        x,
        values,
        direction: None,
    });
    Ok(Trace {
        steps,
        stop: StopReason::MaxIters,
    })
}

/// The bundled two-objective demonstration problem: a pair of concave
/// quadratics with distinct maximizers, so improving one eventually costs
/// the other.
///
/// `F1(x, y) = −4x² − y² + xy` (max 0 at the origin) and
/// `F2(x, y) = −(x−1)² − (y−1/2)²` (max 0 at `(1, 1/2)`).
#[derive(Debug, Clone, Copy, Default)]
pub struct ConcaveQuadraticPair;

impl MultiObjective for ConcaveQuadraticPair {
    fn dim(&self) -> usize {
        2
    }

    fn k(&self) -> usize {
        2
    }

    fn values(&self, x: &[f64]) -> Vec<f64> {
        let (x, y) = (x[0], x[1]);
        vec![
            -4.0 * x * x - y * y + x * y,
            -(x - 1.0).powi(2) - (y - 0.5).powi(2),
        ]
    }

    fn gradients(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let (x, y) = (x[0], x[1]);
        vec![
            vec![-8.0 * x + y, -2.0 * y + x],
            vec![-2.0 * (x - 1.0), -2.0 * (y - 0.5)],
        ]
    }

    fn smoothness(&self) -> Option<f64> {
        // Largest Hessian eigenvalue across the pair: 5 + √10 (first
        // objective); the second has constant curvature 2.
        Some(5.0 + 10f64.sqrt())
    }
}

impl ConcaveQuadraticPair {
    /// The standard run settings for this problem: protect `F1` at −0.5 with
    /// a 2° cone, step 0.2, 500 iterations.
    pub fn standard_config(active_constraints: bool, buffer: f64) -> LpaConfig {
        let mut direction = DirectionConfig::new(vec![-0.5], std::f64::consts::PI / 90.0);
        if active_constraints {
            direction = direction.with_active_constraints(buffer);
        }
        LpaConfig {
            direction,
            step_size: 0.2,
            max_iters: 500,
        }
    }

    /// The standard start point, inside the region where `F1` is unmet.
    pub fn standard_start() -> Vec<f64> {
        vec![-1.0, -1.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    #[test]
    fn satisfied_first_objective_projects_second_gradient() {
        let cfg = DirectionConfig::new(vec![5.0], FRAC_PI_4);
        let d = find_direction(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[6.0, 0.0],
            &cfg,
        )
        .unwrap()
        .unwrap();
        assert!((d[0] - 0.5).abs() < 1e-12 && (d[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unmet_first_objective_gets_its_raw_gradient() {
        let cfg = DirectionConfig::new(vec![5.0], FRAC_PI_4);
        let d = find_direction(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[4.0, 0.0], &cfg)
            .unwrap()
            .unwrap();
        assert_eq!(d, vec![1.0, 0.0]);
    }

    #[test]
    fn opposed_gradients_yield_no_direction() {
        let cfg = DirectionConfig::new(vec![5.0], 0.05);
        let d = find_direction(&[vec![1.0, 0.0], vec![-1.0, 0.0]], &[6.0, 0.0], &cfg).unwrap();
        assert!(d.is_none());
    }

    #[test]
    fn buffered_slack_releases_the_constraint() {
        // Same opposed setup, but the first objective sits far above its
        // threshold and active-constraints mode waives its cone.
        let cfg = DirectionConfig::new(vec![5.0], 0.05).with_active_constraints(0.5);
        let d = find_direction(&[vec![1.0, 0.0], vec![-1.0, 0.0]], &[6.0, 0.0], &cfg)
            .unwrap()
            .unwrap();
        assert_eq!(d, vec![-1.0, 0.0]);
    }

    #[test]
    fn buffer_keeps_barely_satisfied_constraints_enforced() {
        // Value 5.3 is above the threshold but inside the buffer band, so the
        // cone still applies and the opposed direction dies.
        let cfg = DirectionConfig::new(vec![5.0], 0.05).with_active_constraints(0.5);
        let d = find_direction(&[vec![1.0, 0.0], vec![-1.0, 0.0]], &[5.3, 0.0], &cfg).unwrap();
        assert!(d.is_none());
    }

    #[test]
    fn single_objective_returns_plain_gradient() {
        let cfg = DirectionConfig::new(vec![], 0.2);
        let d = find_direction(&[vec![0.3, -0.7]], &[1.0], &cfg).unwrap().unwrap();
        assert_eq!(d, vec![0.3, -0.7]);
    }

    #[test]
    fn zero_active_gradient_reports_stationary() {
        let cfg = DirectionConfig::new(vec![5.0], 0.1);
        let d = find_direction(&[vec![1.0, 0.0], vec![0.0, 0.0]], &[6.0, 0.0], &cfg).unwrap();
        assert!(d.is_none());
    }

    #[test]
    fn flat_protected_objective_is_skipped() {
        let cfg = DirectionConfig::new(vec![5.0], 0.1);
        let d = find_direction(&[vec![0.0, 0.0], vec![0.0, 1.0]], &[6.0, 0.0], &cfg)
            .unwrap()
            .unwrap();
        assert_eq!(d, vec![0.0, 1.0]);
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let cfg = DirectionConfig::new(vec![5.0], 0.1);
        assert!(find_direction(&[vec![1.0, 0.0]], &[6.0, 0.0], &cfg).is_err());
        assert!(find_direction(&[vec![1.0], vec![1.0, 0.0]], &[6.0, 0.0], &cfg).is_err());
    }

    /// A single concave quadratic for plain-ascent sanity checks.
    struct Bowl {
        center: Vec<f64>,
    }

    impl MultiObjective for Bowl {
        fn dim(&self) -> usize {
            self.center.len()
        }
        fn k(&self) -> usize {
            1
        }
        fn values(&self, x: &[f64]) -> Vec<f64> {
            vec![-x
                .iter()
                .zip(&self.center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()]
        }
        fn gradients(&self, x: &[f64]) -> Vec<Vec<f64>> {
            vec![x
                .iter()
                .zip(&self.center)
                .map(|(a, c)| -2.0 * (a - c))
                .collect()]
        }
        fn smoothness(&self) -> Option<f64> {
            Some(2.0)
        }
    }

    #[test]
    fn single_objective_run_reaches_the_maximum() {
        let problem = Bowl {
            center: vec![0.7, -0.3],
        };
        let cfg = LpaConfig {
            direction: DirectionConfig::new(vec![], 0.0),
            step_size: 0.2,
            max_iters: 500,
        };
        let trace = lpa_run(&problem, &[2.0, 2.0], &cfg).unwrap();
        let grad = problem.gradients(trace.final_x());
        assert!(norm(&grad[0]) < 1e-4, "gradient norm {}", norm(&grad[0]));
    }

    #[test]
    fn trace_records_prestep_points_in_order() {
        let problem = Bowl {
            center: vec![0.0],
        };
        let cfg = LpaConfig {
            direction: DirectionConfig::new(vec![], 0.0),
            step_size: 0.2,
            max_iters: 3,
        };
        let trace = lpa_run(&problem, &[1.0], &cfg).unwrap();
        assert_eq!(trace.stop, StopReason::MaxIters);
        assert_eq!(trace.steps.len(), 4);
        // x ← x − 0.2·2x shrinks the iterate to 0.6x: 1, 0.6, 0.36, 0.216.
        assert!((trace.steps[0].x[0] - 1.0).abs() < 1e-12);
        assert!((trace.steps[1].x[0] - 0.6).abs() < 1e-12);
        assert!((trace.steps[3].x[0] - 0.216).abs() < 1e-12);
        assert!(trace.steps[0].direction.is_some());
        assert!(trace.steps[3].direction.is_none());
    }

    #[test]
    fn nan_objective_aborts_with_partial_trace() {
        struct Poison;
        impl MultiObjective for Poison {
            fn dim(&self) -> usize {
                1
            }
            fn k(&self) -> usize {
                1
            }
            fn values(&self, x: &[f64]) -> Vec<f64> {
                vec![if x[0] > 1.0 { f64::NAN } else { x[0] }]
            }
            fn gradients(&self, _x: &[f64]) -> Vec<Vec<f64>> {
                vec![vec![1.0]]
            }
        }
        let cfg = LpaConfig {
            direction: DirectionConfig::new(vec![], 0.0),
            step_size: 1.0,
            max_iters: 10,
        };
        let err = lpa_run(&Poison, &[0.0], &cfg).unwrap_err();
        assert!(err.message.contains("non-finite"));
        assert!(!err.partial.steps.is_empty());
    }

    #[test]
    fn benchmark_first_phase_ascends_first_objective() {
        let problem = ConcaveQuadraticPair;
        let cfg = ConcaveQuadraticPair::standard_config(false, 0.0);
        let x0 = ConcaveQuadraticPair::standard_start();
        assert!(problem.values(&x0)[0] < -0.5); // start genuinely unmet
        let trace = lpa_run(&problem, &x0, &cfg).unwrap();
        // The protected objective must end at or above its threshold (small
        // slack for the final partial step).
        assert!(trace.final_values()[0] >= -0.5 - 0.05);
        let _ = PI;
    }
}
