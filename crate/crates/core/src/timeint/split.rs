use crate::error::Result;
use crate::num::Real;

use super::driver::{integrate, Hooks};
use super::{Method, OdeSystem, SolverConfig, SplitPart};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Advect over τ, then react over τ.
    Lie,
    /// Advect τ/2, react τ, advect τ/2.
    Strang,
}

/// One operand of a splittable system viewed as a system of its own.
pub struct PartSystem<'a, T> {
    pub inner: &'a dyn OdeSystem<T>,
    pub part: SplitPart,
}

impl<T: Real> OdeSystem<T> for PartSystem<'_, T> {
    fn len(&self) -> usize {
        self.inner.len()
    }
    fn rhs(&self, t: T, y: &[T], dy: &mut [T]) -> Result<()> {
        self.inner.rhs_part(self.part, t, y, dy)
    }
    fn breakpoints(&self, t0: T, t1: T, out: &mut Vec<T>) {
        self.inner.breakpoints(t0, t1, out);
    }
}

fn sub_integrate<T: Real>(
    sys: &dyn OdeSystem<T>,
    y: &[T],
    t0: T,
    t1: T,
    cfg: &SolverConfig<T>,
) -> Result<(Vec<T>, usize)> {
    let mut inner = SolverConfig { method: cfg.split_inner, record_steps: false, ..*cfg };
    inner.fixed_step = match cfg.split_inner {
        Method::Rk2 => Some(t1 - t0),
        _ => None,
    };
    inner.initial_step = Some(t1 - t0);
    let tr = integrate(sys, y, t0, t1, &inner, Hooks::default())?;
    Ok((tr.state, tr.stats.evaluations))
}

/// One splitting step from `t` to `t + tau`; each sub-problem is solved
/// with `cfg.split_inner` under the tolerances of `cfg`. Returns the new
/// state and the number of right-hand-side evaluations.
#[allow(clippy::too_many_arguments)]
pub fn split_step<T: Real>(
    adv: &dyn OdeSystem<T>,
    mag: &dyn OdeSystem<T>,
    y: &[T],
    t: T,
    tau: T,
    mode: SplitMode,
    cfg: &SolverConfig<T>,
) -> Result<(Vec<T>, usize)> {
    match mode {
        SplitMode::Lie => {
            let (y1, e1) = sub_integrate(adv, y, t, t + tau, cfg)?;
            let (y2, e2) = sub_integrate(mag, &y1, t, t + tau, cfg)?;
            Ok((y2, e1 + e2))
        }
        SplitMode::Strang => {
            let mid = t + tau * T::lit(0.5);
            let (y1, e1) = sub_integrate(adv, y, t, mid, cfg)?;
            let (y2, e2) = sub_integrate(mag, &y1, t, t + tau, cfg)?;
            let (y3, e3) = sub_integrate(adv, &y2, mid, t + tau, cfg)?;
            Ok((y3, e1 + e2 + e3))
        }
    }
}

/// [`split_step`] on the two operands of one splittable system.
pub(crate) fn split_step_system<T: Real>(
    sys: &dyn OdeSystem<T>,
    y: &[T],
    t: T,
    tau: T,
    mode: SplitMode,
    cfg: &SolverConfig<T>,
) -> Result<(Vec<T>, usize)> {
    let adv = PartSystem { inner: sys, part: SplitPart::Advection };
    let mag = PartSystem { inner: sys, part: SplitPart::Reaction };
    split_step(&adv, &mag, y, t, tau, mode, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y' = a·y + b·y split into two scalar linear parts (commuting).
    struct Pair;
    impl OdeSystem<f64> for Pair {
        fn len(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = -3.0 * y[0];
            Ok(())
        }
        fn rhs_part(&self, part: SplitPart, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = match part {
                SplitPart::Advection => -y[0],
                SplitPart::Reaction => -2.0 * y[0],
            };
            Ok(())
        }
    }

    #[test]
    fn commuting_parts_match_coupled() {
        let cfg = SolverConfig { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        for mode in [SplitMode::Lie, SplitMode::Strang] {
            let (y, _) = split_step_system(&Pair, &[1.0], 0.0, 0.5, mode, &cfg).unwrap();
            assert!((y[0] - (-1.5f64).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_advection_is_pure_reaction() {
        struct NoAdv;
        impl OdeSystem<f64> for NoAdv {
            fn len(&self) -> usize {
                1
            }
            fn rhs(&self, t: f64, _y: &[f64], dy: &mut [f64]) -> Result<()> {
                dy[0] = t.cos();
                Ok(())
            }
            fn rhs_part(&self, part: SplitPart, t: f64, _y: &[f64], dy: &mut [f64]) -> Result<()> {
                dy[0] = if part == SplitPart::Reaction { t.cos() } else { 0.0 };
                Ok(())
            }
        }
        let cfg = SolverConfig { rtol: 1e-11, atol: 1e-13, ..Default::default() };
        let (y, _) = split_step_system(&NoAdv, &[0.0], 0.0, 1.0, SplitMode::Strang, &cfg).unwrap();
        assert!((y[0] - 1f64.sin()).abs() < 1e-10);
    }
}
