use std::io::Write;

use log::warn;

use crate::error::{Error, Result};
use crate::num::Real;

use super::rk::{adapt_step, embedded_step, error_norm, rk2_step, BOGACKI_SHAMPINE, DORMAND_PRINCE};
use super::split::{split_step_system, SplitMode};
use super::{Method, OdeSystem, SolverConfig};

/// One attempted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord<T> {
    /// Start of the step.
    pub t: T,
    pub tau: T,
    pub accepted: bool,
    /// Weighted error norm; zero for fixed-step methods.
    pub error_norm: T,
    /// Right-hand-side evaluations spent on this attempt.
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub cfl_warnings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub state: Vec<T>,
    pub t: T,
    pub records: Vec<StepRecord<T>>,
    pub stats: IntegrationStats,
}

/// Integration stopped early; carries the last good state.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error}")]
pub struct Aborted<T: std::fmt::Debug> {
    pub error: Error,
    pub state: Vec<T>,
    pub t: T,
    pub records: Vec<StepRecord<T>>,
    pub stats: IntegrationStats,
}

impl<T: std::fmt::Debug> From<Aborted<T>> for Error {
    fn from(a: Aborted<T>) -> Self {
        a.error
    }
}

type StopFn<'h, T> = dyn FnMut(usize, T, &mut [T]) -> Result<bool> + 'h;
type StepFn<'h, T> = dyn FnMut(T, &[T]) + 'h;

/// Observation and event hooks for [`integrate`].
#[derive(Default)]
pub struct Hooks<'h, T> {
    /// Sorted times the integrator must land on exactly.
    pub stops: &'h [T],
    /// Called at each stop with its index; may modify the state and must
    /// then return `true`.
    pub on_stop: Option<Box<StopFn<'h, T>>>,
    /// Called after every accepted step.
    pub on_step: Option<Box<StepFn<'h, T>>>,
}

/// Slightly below `t`, so data evaluated there take their left limit.
fn left_of<T: Real>(t: T) -> T {
    if t == T::zero() {
        t
    } else {
        t - t.abs() * T::epsilon()
    }
}

/// Advances `y0` from `t0` to `t1`.
///
/// Steps never straddle a breakpoint reported by the system: a step that
/// would cross one is shortened to end on it, and stages at the step end
/// see the left limit of the data. Stop times are landed on exactly.
#[allow(clippy::result_large_err)] // the partial trajectory is the point of the error
pub fn integrate<T: Real>(
    sys: &dyn OdeSystem<T>,
    y0: &[T],
    t0: T,
    t1: T,
    cfg: &SolverConfig<T>,
    mut hooks: Hooks<'_, T>,
) -> Result<Trajectory<T>, Aborted<T>> {
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut records = Vec::new();
    let mut stats = IntegrationStats::default();
    macro_rules! bail {
        ($e:expr) => {
            return Err(Aborted { error: $e, state: y, t, records, stats })
        };
    }
    if let Err(e) = cfg.validate() {
        bail!(e);
    }
    if !(t1 >= t0) {
        bail!(Error::invalid("t1", "must not precede t0"));
    }
    if y.len() != sys.len() {
        bail!(Error::invalid("state", "length does not match the system"));
    }

    let tableau = match cfg.method {
        Method::Rk23 => Some(&BOGACKI_SHAMPINE),
        Method::Rk45 => Some(&DORMAND_PRINCE),
        _ => None,
    };
    let adaptive = tableau.is_some() && cfg.fixed_step.is_none();
    let span = t1 - t0;
    let mut tau = match (cfg.fixed_step, cfg.initial_step) {
        (Some(h), _) => h,
        (None, Some(h)) => h,
        (None, None) => (span * T::lit(1e-3)).max(cfg.min_step * T::lit(10.0)).min(T::lit(1e-6)),
    };
    tau = tau.min(cfg.max_step);
    let mut stop_idx = hooks.stops.partition_point(|&s| s < t0);
    let mut fsal: Option<Vec<T>> = None;
    let mut after_reject = false;
    let mut bps: Vec<T> = Vec::new();
    let mut cfl_warned = false;

    loop {
        // stops at the current time
        while stop_idx < hooks.stops.len() && hooks.stops[stop_idx] <= t {
            if let Some(f) = hooks.on_stop.as_mut() {
                match f(stop_idx, t, &mut y) {
                    Ok(true) => fsal = None,
                    Ok(false) => {}
                    Err(e) => bail!(e),
                }
            }
            stop_idx += 1;
        }
        if t >= t1 {
            break;
        }
        let target = if stop_idx < hooks.stops.len() { hooks.stops[stop_idx].min(t1) } else { t1 };
        let proposal = tau.min(cfg.max_step);
        let snap = proposal * T::lit(1e-9);
        let mut end = t + proposal;
        let mut landed = false;
        bps.clear();
        sys.breakpoints(t + snap, end + snap, &mut bps);
        if let Some(first) = bps.iter().copied().filter(|&b| b > t + snap).reduce(T::min) {
            if first < end + snap {
                end = first;
                landed = true;
            }
        }
        if end >= target - snap {
            end = target;
            landed = true;
        }
        let h = end - t;
        let t_end_eval = if landed { left_of(end) } else { end };

        if !adaptive {
            if let Some(cfl) = sys.cfl_number(t, end, h) {
                if cfl > cfg.cfl {
                    stats.cfl_warnings += 1;
                    if !cfl_warned {
                        warn!(
                            "CFL number {:.3} exceeds the configured limit {:.3} (step {:e} s)",
                            cfl.to_f64_lossy(),
                            cfg.cfl.to_f64_lossy(),
                            h.to_f64_lossy()
                        );
                        cfl_warned = true;
                    }
                }
            }
        }

        let (ynew, norm, evals, last) = match cfg.method {
            Method::Rk2 => match rk2_step(sys, &y, t, h, t_end_eval) {
                Ok(v) => (v, T::zero(), 2, None),
                Err(e) => bail!(e),
            },
            Method::Rk23 | Method::Rk45 => {
                let tab = tableau.expect("embedded method");
                let reuse = if tab.fsal { fsal.as_deref() } else { None };
                let evals = tab.c.len() - usize::from(reuse.is_some());
                match embedded_step(sys, &y, t, h, t_end_eval, tab, reuse) {
                    Ok((yn, err, last)) => {
                        let norm = if adaptive { error_norm(&err, &y, &yn, cfg.atol, cfg.rtol) } else { T::zero() };
                        (yn, norm, evals, Some(last))
                    }
                    Err(e) => bail!(e),
                }
            }
            Method::SplitLie | Method::SplitStrang => {
                let mode = if cfg.method == Method::SplitLie { SplitMode::Lie } else { SplitMode::Strang };
                match split_step_system(sys, &y, t, h, mode, cfg) {
                    Ok((yn, evals)) => (yn, T::zero(), evals, None),
                    Err(e) => bail!(e),
                }
            }
        };
        stats.evaluations += evals;

        let (accept, tau_next) = if adaptive {
            match adapt_step(norm, h, tableau.expect("embedded").est_order, cfg, after_reject) {
                Ok(v) => v,
                Err(Error::StepSizeTooSmall { tau, min, .. }) => {
                    bail!(Error::StepSizeTooSmall { t: t.to_f64_lossy(), tau, min })
                }
                Err(e) => bail!(e),
            }
        } else {
            (true, cfg.fixed_step.unwrap_or(h))
        };
        if cfg.record_steps {
            records.push(StepRecord { t, tau: h, accepted: accept, error_norm: norm, evaluations: evals });
        }
        if accept {
            t = end;
            y = ynew;
            stats.accepted += 1;
            // a step shortened to land on an event keeps the earlier proposal
            tau = if adaptive && landed && !after_reject { tau_next.max(proposal) } else { tau_next };
            after_reject = false;
            fsal = if landed { None } else { last };
            if let Some(f) = hooks.on_step.as_mut() {
                f(t, &y);
            }
        } else {
            stats.rejected += 1;
            after_reject = true;
            tau = tau_next;
        }
    }
    Ok(Trajectory { state: y, t, records, stats })
}

/// CSV with columns `t,tau,accepted,error_norm`.
pub fn write_step_records<T: Real, W: Write>(records: &[StepRecord<T>], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,tau,accepted,error_norm")?;
    for r in records {
        writeln!(
            w,
            "{:e},{:e},{},{:e}",
            r.t.to_f64_lossy(),
            r.tau.to_f64_lossy(),
            u8::from(r.accepted),
            r.error_norm.to_f64_lossy()
        )?;
    }
    Ok(())
}
