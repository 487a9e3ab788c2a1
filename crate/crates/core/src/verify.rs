//! Independent oracles and checkers used to validate simulation runs.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::mesh_dg::{DgSpace, DgState, EnergyTerms};
use crate::num::Real;
use crate::physics::TissueParams;
use crate::quadrature::GaussLegendre;

/// Dynamic equilibrium of an ideally spoiled gradient echo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState<T> {
    /// Longitudinal magnetization just before each excitation.
    pub mz: T,
    /// Transverse magnitude at the echo.
    pub signal: T,
}

/// Fixed point of `Mz⁺ = M0(1 - E1) + E1 cos(α) Mz`, with signal
/// `sin(α) Mz e^{-TE/T2}`.
pub fn spoiled_steady_state<T: Real>(tissue: &TissueParams<T>, tr: T, te: T, flip: T) -> SteadyState<T> {
    let e1 = (-tr * tissue.r1()).exp();
    let mz = tissue.m0() * (T::one() - e1) / (T::one() - e1 * flip.cos());
    SteadyState { mz, signal: flip.sin() * mz * (-te * tissue.r2()).exp() }
}

/// The same recursion started from `mz0`; entry `n` is the state before
/// excitation `n` and the echo magnitude it produces.
pub fn spoiled_recursion<T: Real>(
    tissue: &TissueParams<T>,
    tr: T,
    te: T,
    flip: T,
    mz0: T,
    n: usize,
) -> Vec<SteadyState<T>> {
    let e1 = (-tr * tissue.r1()).exp();
    let e2 = (-te * tissue.r2()).exp();
    let (s, c) = flip.sin_cos();
    let mut mz = mz0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(SteadyState { mz, signal: s * mz.abs() * e2 });
        mz = tissue.m0() * (T::one() - e1) + e1 * c * mz;
    }
    out
}

/// Energy budget of a state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample<T> {
    pub t: T,
    /// `½‖M‖²`
    pub energy: T,
    /// Dissipation rate: penalty, interior jumps and outflow boundary; the
    /// inflow boundary counts as well when no data enter through it.
    pub dissipation: T,
    /// Supply rate: `‖f‖²/(2σ)` plus the inflow data term.
    pub supply: T,
}

impl<T: Real> EnergySample<T> {
    pub fn from_terms(t: T, e: &EnergyTerms<T>, sigma: T) -> Self {
        let half = T::lit(0.5);
        let mut dissipation = e.penalty + e.jumps + e.boundary_out;
        if e.inflow_supply == T::zero() {
            dissipation += e.boundary_in;
        }
        let source = if e.source_sq == T::zero() { T::zero() } else { e.source_sq * half / sigma };
        Self { t, energy: half * e.norm_sq, dissipation, supply: source + e.inflow_supply }
    }
}

/// Left and right side of the energy estimate along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport<T> {
    pub sigma: T,
    pub t: Vec<T>,
    pub lhs: Vec<T>,
    pub rhs: Vec<T>,
    pub pass: bool,
    /// The time quadrature error could change the verdict.
    pub inconclusive: bool,
    /// `min(rhs·(1+tol) - lhs)`.
    pub margin: T,
}

pub const ENERGY_TOLERANCE: f64 = 1e-6;

/// Weights `(a, b)` of `∫_0^Δ e^{-σ(Δ-s)} g(s) ds ≈ a g(0) + b g(Δ)` for
/// linear `g`.
fn weighted_trapezoid<T: Real>(sigma: T, dt: T) -> (T, T) {
    let x = sigma * dt;
    if x < T::lit(0.1) {
        // a/Δ = Σ (n+1)(-x)^n/(n+2)!, b/Δ = Σ (-x)^n/(n+2)!
        let (mut a, mut b) = (T::zero(), T::zero());
        let mut term = T::lit(0.5);
        for n in 0..14 {
            a += term * T::from_usize_lossy(n + 1);
            b += term;
            term = term * (-x) / T::from_usize_lossy(n + 3);
        }
        return (a * dt, b * dt);
    }
    let ex = (-x).exp();
    let total = (T::one() - ex) / sigma;
    let a = (T::one() - ex * (T::one() + x)) / (dt * sigma * sigma);
    (a, total - a)
}

fn running_integral<T: Real>(samples: &[EnergySample<T>], sigma: T, g: impl Fn(&EnergySample<T>) -> T) -> Vec<T> {
    let mut out = Vec::with_capacity(samples.len());
    let mut acc = T::zero();
    out.push(acc);
    for w in samples.windows(2) {
        let dt = w[1].t - w[0].t;
        let (a, b) = weighted_trapezoid(sigma, dt);
        acc = acc * (-sigma * dt).exp() + a * g(&w[0]) + b * g(&w[1]);
        out.push(acc);
    }
    out
}

/// Checks `E(t) + ∫e^{σ(τ-t)}D ≤ E(0)e^{-σt} + ∫e^{σ(τ-t)}S` at every
/// sample. The time integrals use a product trapezoid rule; a second pass
/// on every other sample gives a Richardson error estimate.
pub fn check_energy_inequality<T: Real>(samples: &[EnergySample<T>], sigma: T) -> Result<EnergyReport<T>> {
    if samples.is_empty() {
        return Err(Error::invalid("energy samples", "trajectory is empty"));
    }
    if samples.windows(2).any(|w| !(w[1].t >= w[0].t)) {
        return Err(Error::invalid("energy samples", "times must not decrease"));
    }
    if !(sigma >= T::zero()) {
        return Err(Error::invalid("sigma", "must be non-negative"));
    }
    let tol = T::lit(ENERGY_TOLERANCE);
    let d = running_integral(samples, sigma, |s| s.dissipation);
    let s = running_integral(samples, sigma, |s| s.supply);
    let coarse: Vec<EnergySample<T>> = samples.iter().step_by(2).copied().collect();
    let (dc, sc) = if coarse.len() >= 3 {
        (running_integral(&coarse, sigma, |s| s.dissipation), running_integral(&coarse, sigma, |s| s.supply))
    } else {
        (Vec::new(), Vec::new())
    };
    let e0 = samples[0].energy;
    let t0 = samples[0].t;
    let mut report = EnergyReport {
        sigma,
        t: Vec::with_capacity(samples.len()),
        lhs: Vec::with_capacity(samples.len()),
        rhs: Vec::with_capacity(samples.len()),
        pass: true,
        inconclusive: false,
        margin: T::infinity(),
    };
    for (i, smp) in samples.iter().enumerate() {
        let lhs = smp.energy + d[i];
        let rhs = e0 * (-sigma * (smp.t - t0)).exp() + s[i];
        let bound = rhs * (T::one() + tol);
        let ok = lhs <= bound;
        report.pass &= ok;
        report.margin = report.margin.min(bound - lhs);
        if i % 2 == 0 && !dc.is_empty() {
            let three = T::lit(3.0);
            let el = (d[i] - dc[i / 2]).abs() / three;
            let er = (s[i] - sc[i / 2]).abs() / three;
            let sure_pass = lhs + el <= (rhs - er) * (T::one() + tol);
            let sure_fail = lhs - el > (rhs + er) * (T::one() + tol);
            if !(sure_pass || sure_fail) {
                report.inconclusive = true;
            }
        }
        report.t.push(smp.t);
        report.lhs.push(lhs);
        report.rhs.push(rhs);
    }
    Ok(report)
}

/// CSV with columns `t,lhs,rhs`.
pub fn write_energy_csv<T: Real, W: Write>(report: &EnergyReport<T>, mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,lhs,rhs")?;
    for i in 0..report.t.len() {
        writeln!(
            w,
            "{:e},{:e},{:e}",
            report.t[i].to_f64_lossy(),
            report.lhs[i].to_f64_lossy(),
            report.rhs[i].to_f64_lossy()
        )?;
    }
    Ok(())
}

/// Errors over a refinement family and the fitted order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport<T> {
    pub h: Vec<T>,
    pub errors: Vec<T>,
    /// Least-squares slope of `log e` against `log h`.
    pub order: T,
    /// Errors decrease strictly with `h`.
    pub monotone: bool,
    pub reference: String,
}

impl<T: Real> ConvergenceReport<T> {
    pub fn warning(&self) -> Option<&'static str> {
        (!self.monotone).then_some("errors are not monotone in h; order not meaningful")
    }
}

/// Fits `e ≈ C h^p` by least squares in log-log space.
pub fn convergence_order<T: Real>(h: &[T], errors: &[T], reference: impl Into<String>) -> Result<ConvergenceReport<T>> {
    if h.len() != errors.len() || h.len() < 3 {
        return Err(Error::invalid("convergence", "need at least 3 levels with one error each"));
    }
    if h.windows(2).any(|w| !(w[1] < w[0])) || h.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::invalid("convergence", "h must be positive and strictly decreasing"));
    }
    if errors.iter().any(|&e| !(e > T::zero() && e.is_finite())) {
        return Err(Error::invalid("convergence", "errors must be positive and finite"));
    }
    let n = T::from_usize_lossy(h.len());
    let xs: Vec<T> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<T> = errors.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxy: T = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    if !monotone {
        log::warn!("non-monotone errors in refinement study");
    }
    Ok(ConvergenceReport {
        h: h.to_vec(),
        errors: errors.to_vec(),
        order: sxy / sxx,
        monotone,
        reference: reference.into(),
    })
}

/// CSV with columns `h,error,observed_order`; the order is the rate
/// between each level and the previous one, empty on the first row.
pub fn write_convergence_csv<T: Real, W: Write>(report: &ConvergenceReport<T>, mut w: W) -> std::io::Result<()> {
    writeln!(w, "h,error,observed_order")?;
    for i in 0..report.h.len() {
        let order = if i == 0 {
            String::new()
        } else {
            let p = (report.errors[i - 1] / report.errors[i]).ln() / (report.h[i - 1] / report.h[i]).ln();
            format!("{:e}", p.to_f64_lossy())
        };
        writeln!(w, "{:e},{:e},{order}", report.h[i].to_f64_lossy(), report.errors[i].to_f64_lossy())?;
    }
    Ok(())
}

/// `L²` and `L∞` norms of the difference of one component between two DG
/// states on nested meshes covering the same domain. Integration runs over
/// the finer mesh, exactly for polynomial differences.
pub fn component_difference<T: Real>(
    a_space: &DgSpace<T>,
    a: &DgState<T>,
    b_space: &DgSpace<T>,
    b: &DgState<T>,
    comp: usize,
) -> Result<(T, T)> {
    let (fine_space, fine, other_space, other) = if a_space.mesh().num_cells() >= b_space.mesh().num_cells() {
        (a_space, a, b_space, b)
    } else {
        (b_space, b, a_space, a)
    };
    let mesh = fine_space.mesh();
    if mesh.axes() != other_space.mesh().axes() {
        return Err(Error::invalid("meshes", "axes differ"));
    }
    let dim = mesh.dim();
    let q = fine_space.degree().max(other_space.degree()) + 1;
    let rule = GaussLegendre::<T>::new(q);
    let jvol = mesh.cell_volume() / T::from_usize_lossy(1 << dim);
    let mut l2 = T::zero();
    let mut linf = T::zero();
    let mut xi = vec![T::zero(); dim];
    for cell in 0..mesh.num_cells() {
        for p in 0..q.pow(dim as u32) {
            let mut rem = p;
            let mut w = jvol;
            for x in xi.iter_mut() {
                let i = rem % q;
                rem /= q;
                *x = rule.nodes[i];
                w *= rule.weights[i];
            }
            let r = mesh.position(cell, &xi);
            let va = fine.eval_ref(fine_space, cell, &xi).to_array()[comp];
            let vb = other
                .eval(other_space, r)
                .ok_or_else(|| Error::invalid("meshes", "reference mesh does not cover the domain"))?
                .to_array()[comp];
            let d = va - vb;
            l2 += w * d * d;
            linf = linf.max(d.abs());
        }
    }
    Ok((l2.sqrt(), linf))
}

/// Distance outside `[-bound, bound]` and total variation of a profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overshoot<T> {
    pub excess: T,
    pub total_variation: T,
}

pub fn overshoot_metric<T: Real>(profile: &[T], bound: T) -> Overshoot<T> {
    let excess = profile.iter().map(|&v| (v.abs() - bound).max(T::zero())).fold(T::zero(), T::max);
    let total_variation = profile.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Overshoot { excess, total_variation }
}

/// `n` equispaced samples of one component along the segment `from → to`.
pub fn sample_line<T: Real>(
    space: &DgSpace<T>,
    state: &DgState<T>,
    comp: usize,
    from: [T; 3],
    to: [T; 3],
    n: usize,
) -> Vec<T> {
    (0..n)
        .filter_map(|i| {
            let s = if n > 1 { T::from_usize_lossy(i) / T::from_usize_lossy(n - 1) } else { T::zero() };
            let r = [0, 1, 2].map(|a| from[a] + (to[a] - from[a]) * s);
            state.eval(space, r).map(|m| m.to_array()[comp])
        })
        .collect()
}

/// One line of a check summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckLine {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}
