//! Explicit time integration: fixed-step Heun, embedded Bogacki–Shampine
//! 3(2) and Dormand–Prince 5(4) with step-size control, and Lie/Strang
//! splitting between advection and magnetization dynamics.

mod driver;
mod rk;
mod split;

pub use driver::{integrate, write_step_records, Aborted, Hooks, IntegrationStats, StepRecord, Trajectory};
pub use rk::{adapt_step, embedded_step, error_norm, rk2_step, Tableau, BOGACKI_SHAMPINE, DORMAND_PRINCE};
pub use split::{split_step, PartSystem, SplitMode};

use crate::error::{Error, Result};
use crate::num::Real;

/// Semi-discrete system `y' = F(t, y)`.
pub trait OdeSystem<T: Real>: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn rhs(&self, t: T, y: &[T], dy: &mut [T]) -> Result<()>;

    /// One operand of an advection/reaction splitting.
    fn rhs_part(&self, _part: SplitPart, _t: T, _y: &[T], _dy: &mut [T]) -> Result<()> {
        Err(Error::invalid("method", "this system cannot be split"))
    }

    /// Times in `(t0, t1)` where the data are discontinuous or kinked.
    fn breakpoints(&self, _t0: T, _t1: T, _out: &mut Vec<T>) {}

    /// `τ·max|u|·(2k+1)/h` for a step of length `tau`, if meaningful.
    fn cfl_number(&self, _t0: T, _t1: T, _tau: T) -> Option<T> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Advection,
    Reaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk2,
    Rk23,
    Rk45,
    SplitLie,
    SplitStrang,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rk2 => "rk2",
            Method::Rk23 => "rk23",
            Method::Rk45 => "rk45",
            Method::SplitLie => "split-lie",
            Method::SplitStrang => "split-strang",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rk2" => Method::Rk2,
            "rk23" => Method::Rk23,
            "rk45" => Method::Rk45,
            "split-lie" => Method::SplitLie,
            "split-strang" => Method::SplitStrang,
            other => return Err(Error::invalid("solver.method", format!("unknown method `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    pub method: Method,
    pub rtol: T,
    pub atol: T,
    pub safety: T,
    pub min_factor: T,
    pub max_factor: T,
    pub max_step: T,
    /// Absolute lower bound on the step; going below aborts.
    pub min_step: T,
    /// Fixed step for `rk2` and the outer step of splitting. Also forces
    /// fixed stepping for the embedded pairs when set.
    pub fixed_step: Option<T>,
    pub initial_step: Option<T>,
    /// CFL guard for fixed stepping.
    pub cfl: T,
    /// Method for the sub-integrations of a splitting step.
    pub split_inner: Method,
    /// Keep a [`StepRecord`] for every attempted step.
    pub record_steps: bool,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            rtol: T::lit(1e-6),
            atol: T::lit(1e-8),
            safety: T::lit(0.9),
            min_factor: T::lit(0.2),
            max_factor: T::lit(5.0),
            max_step: T::infinity(),
            min_step: T::lit(1e-14),
            fixed_step: None,
            initial_step: None,
            cfl: T::one(),
            split_inner: Method::Rk45,
            record_steps: false,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > T::zero() && self.atol > T::zero()) {
            return Err(Error::invalid("solver.rtol/atol", "must be positive"));
        }
        if !(self.min_factor > T::zero() && self.min_factor < T::one() && self.max_factor > T::one()) {
            return Err(Error::invalid("solver.min_factor/max_factor", "need 0 < min < 1 < max"));
        }
        if !(self.safety > T::zero() && self.safety <= T::one()) {
            return Err(Error::invalid("solver.safety", "must lie in (0, 1]"));
        }
        if !(self.max_step > T::zero()) || !(self.min_step >= T::zero()) {
            return Err(Error::invalid("solver.max_step/min_step", "must be positive"));
        }
        if let Some(h) = self.fixed_step {
            if !(h.is_finite() && h > T::zero()) {
                return Err(Error::invalid("solver.fixed_step", "must be positive"));
            }
        }
        let needs_fixed = matches!(self.method, Method::Rk2 | Method::SplitLie | Method::SplitStrang);
        if needs_fixed && self.fixed_step.is_none() {
            return Err(Error::invalid("solver.fixed_step", format!("required by method {}", self.method.name())));
        }
        if matches!(self.split_inner, Method::SplitLie | Method::SplitStrang) {
            return Err(Error::invalid("solver.split_inner", "must be an RK method"));
        }
        Ok(())
    }
}
