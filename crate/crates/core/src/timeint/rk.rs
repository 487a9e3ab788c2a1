use crate::error::{Error, Result};
use crate::num::Real;

use super::{OdeSystem, SolverConfig};

/// Explicit embedded Runge–Kutta tableau. `b` gives the propagated
/// solution, `e = b − b̂` the error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Tableau {
    pub c: &'static [f64],
    pub a: &'static [&'static [f64]],
    pub b: &'static [f64],
    pub e: &'static [f64],
    /// Order of the propagated solution.
    pub order: usize,
    /// Order of the embedded estimate, used by the controller.
    pub est_order: usize,
    /// Last stage equals the derivative at the new point.
    pub fsal: bool,
}

pub const BOGACKI_SHAMPINE: Tableau = Tableau {
    c: &[0.0, 0.5, 0.75, 1.0],
    a: &[&[], &[0.5], &[0.0, 0.75], &[2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0]],
    b: &[2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0],
    e: &[2.0 / 9.0 - 7.0 / 24.0, 1.0 / 3.0 - 0.25, 4.0 / 9.0 - 1.0 / 3.0, -0.125],
    order: 3,
    est_order: 2,
    fsal: true,
};

pub const DORMAND_PRINCE: Tableau = Tableau {
    c: &[0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0],
    a: &[
        &[],
        &[0.2],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
        &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ],
    b: &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0],
    e: &[71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0],
    order: 5,
    est_order: 4,
    fsal: true,
};

fn finite_or_fail<T: Real>(y: &[T], t: T) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::StepFailure { t: t.to_f64_lossy(), reason: "non-finite state after step".into() })
    }
}

/// Heun step: `y¹ = y + τF(t, y)`, `y' = ½(y + y¹) + ½τF(t+τ, y¹)`.
/// `t_end` is where the second stage is evaluated (normally `t + τ`).
pub fn rk2_step<T: Real, S: OdeSystem<T> + ?Sized>(sys: &S, y: &[T], t: T, tau: T, t_end: T) -> Result<Vec<T>> {
    let n = y.len();
    let mut k = vec![T::zero(); n];
    sys.rhs(t, y, &mut k)?;
    let y1: Vec<T> = y.iter().zip(&k).map(|(&a, &b)| a + tau * b).collect();
    sys.rhs(t_end, &y1, &mut k)?;
    let half = T::lit(0.5);
    let out: Vec<T> = (0..n).map(|i| half * (y[i] + y1[i]) + half * tau * k[i]).collect();
    finite_or_fail(&out, t)?;
    Ok(out)
}

/// One step of an embedded pair. Returns the new state, the error vector
/// and the last stage derivative (valid for FSAL reuse). `k1` may supply
/// `F(t, y)` from the previous step. Stages with `c = 1` are evaluated at
/// `t_end`.
pub fn embedded_step<T: Real, S: OdeSystem<T> + ?Sized>(
    sys: &S,
    y: &[T],
    t: T,
    tau: T,
    t_end: T,
    tab: &Tableau,
    k1: Option<&[T]>,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let n = y.len();
    let s = tab.c.len();
    let mut k: Vec<Vec<T>> = Vec::with_capacity(s);
    let mut tmp = vec![T::zero(); n];
    for i in 0..s {
        let mut ki = vec![T::zero(); n];
        if i == 0 {
            if let Some(d) = k1 {
                ki.copy_from_slice(d);
                k.push(ki);
                continue;
            }
            sys.rhs(t, y, &mut ki)?;
        } else {
            tmp.copy_from_slice(y);
            for (j, &aij) in tab.a[i].iter().enumerate() {
                if aij != 0.0 {
                    let c = tau * T::lit(aij);
                    for (x, kj) in tmp.iter_mut().zip(&k[j]) {
                        *x += c * *kj;
                    }
                }
            }
            let ti = if tab.c[i] == 1.0 { t_end } else { t + tau * T::lit(tab.c[i]) };
            sys.rhs(ti, &tmp, &mut ki)?;
        }
        k.push(ki);
    }
    let mut ynew = y.to_vec();
    let mut err = vec![T::zero(); n];
    for i in 0..s {
        let bi = T::lit(tab.b[i]) * tau;
        let ei = T::lit(tab.e[i]) * tau;
        for j in 0..n {
            ynew[j] += bi * k[i][j];
            err[j] += ei * k[i][j];
        }
    }
    finite_or_fail(&ynew, t)?;
    let last = k.pop().expect("at least one stage");
    Ok((ynew, err, last))
}

/// Weighted RMS norm with scale `atol + rtol·max(|y|, |y_new|)`.
pub fn error_norm<T: Real>(err: &[T], y: &[T], ynew: &[T], atol: T, rtol: T) -> T {
    if err.is_empty() {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..err.len() {
        let sc = atol + rtol * y[i].abs().max(ynew[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / T::from_usize_lossy(err.len())).sqrt()
}

/// Elementary controller. Accepts iff `norm ≤ 1`; the step factor is
/// `safety·norm^(−1/(p+1))` clamped to `[min_factor, max_factor]`, capped at
/// 1 on rejection or directly after one.
pub fn adapt_step<T: Real>(
    norm: T,
    tau: T,
    est_order: usize,
    cfg: &SolverConfig<T>,
    after_reject: bool,
) -> Result<(bool, T)> {
    if norm.is_nan() || norm < T::zero() {
        return Err(Error::invalid("error estimate", "must be non-negative"));
    }
    let accept = norm <= T::one();
    let raw = if norm == T::zero() {
        cfg.max_factor
    } else {
        cfg.safety * norm.powf(-T::one() / T::from_usize_lossy(est_order + 1))
    };
    let mut factor = raw.max(cfg.min_factor).min(cfg.max_factor);
    if !accept || after_reject {
        factor = factor.min(T::one());
    }
    let next = tau * factor;
    if next < cfg.min_step {
        return Err(Error::StepSizeTooSmall {
            t: f64::NAN,
            tau: next.to_f64_lossy(),
            min: cfg.min_step.to_f64_lossy(),
        });
    }
    Ok((accept, next))
}
