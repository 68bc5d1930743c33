//! Classical minimization of E(t) = t†H̃t over a gate family's parameters,
//! and overlap maximization for time evolution.
//!
//! Unitarity is enforced by construction: the search runs over the family's
//! unconstrained angles, never over raw coefficients.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::effective::{quadratic_form, EffectiveHamiltonian};
use crate::error::{Error, Result};
use crate::gates::{BasisProjector, GateFamily, TCoefficients};
use crate::linalg;
use crate::rng::stream;

/// Classical method used for the per-gate subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMethod {
    NelderMead,
    GradientOnHTilde,
    Powell,
}

impl fmt::Display for OptMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptMethod::NelderMead => write!(f, "nelder-mead"),
            OptMethod::GradientOnHTilde => write!(f, "gradient"),
            OptMethod::Powell => write!(f, "powell"),
        }
    }
}

impl FromStr for OptMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nelder-mead" | "nm" => Ok(OptMethod::NelderMead),
            "gradient" => Ok(OptMethod::GradientOnHTilde),
            "powell" => Ok(OptMethod::Powell),
            other => Err(Error::Parse(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub method: OptMethod,
    /// Start candidates: the warm start plus `restarts - 1` random draws.
    pub restarts: usize,
    /// Objective evaluation budget per restart.
    pub max_evals: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: OptMethod::NelderMead,
            restarts: 4,
            max_evals: 4000,
            tolerance: 1e-10,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub params: Vec<f64>,
    pub value: f64,
    pub evals_used: usize,
    /// Which start candidate won (0 is the warm start).
    pub start_index: usize,
    pub converged: bool,
}

struct RunOutcome {
    params: Vec<f64>,
    value: f64,
    evals: usize,
    converged: bool,
}

/// Gate energy E = Re(t† H̃ t); the imaginary part must vanish for a
/// Hermitian H̃ and is asserted against.
pub fn gate_energy(t: &TCoefficients, h: &EffectiveHamiltonian) -> f64 {
    assert_eq!(t.len(), h.k(), "coefficient length must match H̃");
    let k = h.k();
    let m = h.matrix();
    let mut acc = Complex64::ZERO;
    for a in 0..k {
        let mut row = Complex64::ZERO;
        for b in 0..k {
            row += m[(a, b)] * t.t[b];
        }
        acc += t.t[a].conj() * row;
    }
    let scale = acc.norm().max(1.0);
    assert!(
        acc.im.abs() <= 1e-8 * scale,
        "imaginary energy {} from a non-Hermitian H̃",
        acc.im
    );
    acc.re
}

fn spread_edge() -> f64 {
    0.1
}

/// Downhill simplex with the standard (1, 2, 0.5, 0.5) coefficients.
/// Converges when the simplex value spread drops below `tolerance`.
fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    max_evals: usize,
    tolerance: f64,
) -> RunOutcome {
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += spread_edge();
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        if spread < tolerance {
            let (params, value) = simplex.swap_remove(0);
            return RunOutcome {
                params,
                value,
                evals,
                converged: true,
            };
        }
        if evals >= max_evals {
            let (params, value) = simplex.swap_remove(0);
            return RunOutcome {
                params,
                value,
                evals,
                converged: false,
            };
        }

        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(x, _)| x[i]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let point_at = |coef: f64| -> Vec<f64> {
            (0..n)
                .map(|i| centroid[i] + coef * (centroid[i] - worst.0[i]))
                .collect()
        };

        let xr = point_at(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = point_at(alpha * gamma);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        // contraction
        let (xc, fc) = if fr < worst.1 {
            let x = point_at(alpha * rho);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = point_at(-rho);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if fc < worst.1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].0.clone();
        for item in simplex.iter_mut().skip(1) {
            for i in 0..n {
                item.0[i] = best[i] + sigma * (item.0[i] - best[i]);
            }
            item.1 = eval(&item.0, &mut evals);
        }
    }
}

/// Golden-section bracketing of a minimum along a ray.
fn bracket(
    g: &mut dyn FnMut(f64) -> f64,
    evals: &mut usize,
    max_evals: usize,
) -> (f64, f64, f64, f64, f64, f64) {
    const GOLD: f64 = 1.618_033_988_749_895;
    let mut a = 0.0;
    let mut b = 0.5;
    let mut fa = {
        *evals += 1;
        g(a)
    };
    let mut fb = {
        *evals += 1;
        g(b)
    };
    if fb > fa {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = b + GOLD * (b - a);
    let mut fc = {
        *evals += 1;
        g(c)
    };
    while fb > fc && *evals < max_evals {
        a = b;
        fa = fb;
        b = c;
        fb = fc;
        c = b + GOLD * (b - a);
        *evals += 1;
        fc = g(c);
    }
    (a, b, c, fa, fb, fc)
}

/// Brent's parabolic/golden line minimization on a bracketed interval.
fn brent_line(
    g: &mut dyn FnMut(f64) -> f64,
    evals: &mut usize,
    max_evals: usize,
    bracket: (f64, f64, f64, f64),
) -> (f64, f64) {
    const CGOLD: f64 = 0.381_966_011_250_105;
    let (mut a, mut b, xm0, fxm0) = bracket;
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let (mut x, mut w, mut v) = (xm0, xm0, xm0);
    let (mut fx, mut fw, mut fv) = (fxm0, fxm0, fxm0);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let tol = 1e-10;
    for _ in 0..100 {
        if *evals >= max_evals {
            break;
        }
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            let mut q2 = 2.0 * (q - r);
            if q2 > 0.0 {
                p = -p;
            }
            q2 = q2.abs();
            let e_old = e;
            if p.abs() < (0.5 * q2 * e_old).abs() && p > q2 * (a - x) && p < q2 * (b - x) {
                e = d;
                d = p / q2;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm > x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + if d > 0.0 { tol1 } else { -tol1 }
        };
        *evals += 1;
        let fu = g(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

fn line_minimize(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &mut Vec<f64>,
    fx: &mut f64,
    dir: &[f64],
    evals: &mut usize,
    max_evals: usize,
) {
    let base = x.clone();
    let mut g = |alpha: f64| -> f64 {
        let probe: Vec<f64> = base.iter().zip(dir).map(|(b, d)| b + alpha * d).collect();
        f(&probe)
    };
    let (a, b, cc, _fa, fb, _fc) = bracket(&mut g, evals, max_evals);
    let (alpha, falpha) = brent_line(&mut g, evals, max_evals, (a, cc, b, fb));
    if falpha < *fx {
        for (xi, d) in x.iter_mut().zip(dir) {
            *xi += alpha * d;
        }
        *fx = falpha;
    }
}

/// Powell's direction-set method with the net-direction replacement rule.
fn powell(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    max_evals: usize,
    tolerance: f64,
) -> RunOutcome {
    let n = x0.len();
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut evals = 0usize;
    let mut x = x0.to_vec();
    let mut fx = {
        evals += 1;
        f(&x)
    };
    loop {
        let f_start = fx;
        let x_start = x.clone();
        let mut biggest_drop = 0.0;
        let mut biggest_idx = 0;
        for i in 0..n {
            let f_before = fx;
            let dir = dirs[i].clone();
            line_minimize(f, &mut x, &mut fx, &dir, &mut evals, max_evals);
            if f_before - fx > biggest_drop {
                biggest_drop = f_before - fx;
                biggest_idx = i;
            }
        }
        if 2.0 * (f_start - fx) <= tolerance * (f_start.abs() + fx.abs()) + 1e-25 {
            return RunOutcome {
                params: x,
                value: fx,
                evals,
                converged: true,
            };
        }
        if evals >= max_evals {
            return RunOutcome {
                params: x,
                value: fx,
                evals,
                converged: false,
            };
        }
        let x_extrap: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| 2.0 * a - b).collect();
        evals += 1;
        let f_extrap = f(&x_extrap);
        if f_extrap < f_start {
            let t = 2.0 * (f_start - 2.0 * fx + f_extrap)
                * (f_start - fx - biggest_drop).powi(2)
                - biggest_drop * (f_start - f_extrap).powi(2);
            if t < 0.0 {
                let new_dir: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| a - b).collect();
                line_minimize(f, &mut x, &mut fx, &new_dir, &mut evals, max_evals);
                dirs[biggest_idx] = dirs[n - 1].clone();
                dirs[n - 1] = new_dir;
            }
        }
    }
}

/// Fixed-step descent using the analytic dE/dθ = 2 Re(t† H̃ dt/dθ).
fn descend_on_h_tilde(
    h: &EffectiveHamiltonian,
    family: &GateFamily,
    projector: &BasisProjector,
    x0: &[f64],
    max_evals: usize,
    tolerance: f64,
) -> Result<RunOutcome> {
    const STEP: f64 = 0.05;
    let k = h.k();
    let mut x = x0.to_vec();
    let mut best = x.clone();
    let coeffs = |p: &[f64]| -> Result<Vec<Complex64>> {
        Ok(projector.project_dyn(&family.unitary(p)?))
    };
    let mut t = coeffs(&x)?;
    let mut value = quadratic_form(h.matrix(), &t);
    let mut best_value = value;
    let mut evals = 1usize;
    while evals < max_evals {
        let dt = family.coefficient_gradients(&x)?;
        // u = H̃ t
        let u: Vec<Complex64> = (0..k)
            .map(|a| (0..k).map(|b| h.matrix()[(a, b)] * t[b]).sum())
            .collect();
        let grad: Vec<f64> = (0..family.param_count())
            .map(|i| {
                let s: Complex64 = (0..k).map(|a| u[a].conj() * dt[(a, i)]).sum();
                2.0 * s.re
            })
            .collect();
        for (xi, g) in x.iter_mut().zip(&grad) {
            *xi -= STEP * g;
        }
        t = coeffs(&x)?;
        let new_value = quadratic_form(h.matrix(), &t);
        evals += 1;
        if new_value < best_value {
            best_value = new_value;
            best = x.clone();
        }
        if (value - new_value).abs() < tolerance {
            return Ok(RunOutcome {
                params: best,
                value: best_value,
                evals,
                converged: true,
            });
        }
        value = new_value;
    }
    Ok(RunOutcome {
        params: best,
        value: best_value,
        evals,
        converged: false,
    })
}

fn run_starts(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    gradient_run: Option<&dyn Fn(&[f64], usize, f64) -> Result<RunOutcome>>,
    family: &GateFamily,
    warm_start: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    if warm_start.len() != family.param_count() {
        return Err(Error::ParamCount {
            family: family.name(),
            expected: family.param_count(),
            got: warm_start.len(),
        });
    }
    let mut starts = vec![warm_start.to_vec()];
    let mut rng = stream(cfg.seed, &[0x6f70_74]);
    for _ in 1..cfg.restarts.max(1) {
        starts.push(family.random_params(&mut rng));
    }
    let mut best: Option<(RunOutcome, usize)> = None;
    let mut total_evals = 0usize;
    for (idx, start) in starts.iter().enumerate() {
        let outcome = match (cfg.method, gradient_run) {
            (OptMethod::NelderMead, _) => {
                nelder_mead(objective, start, cfg.max_evals, cfg.tolerance)
            }
            (OptMethod::Powell, _) => powell(objective, start, cfg.max_evals, cfg.tolerance),
            (OptMethod::GradientOnHTilde, Some(run)) => run(start, cfg.max_evals, cfg.tolerance)?,
            (OptMethod::GradientOnHTilde, None) => {
                return Err(Error::Invalid(
                    "gradient method is not available for this objective".into(),
                ))
            }
        };
        total_evals += outcome.evals;
        let better = match &best {
            None => true,
            Some((b, _)) => outcome.value < b.value,
        };
        if better {
            best = Some((outcome, idx));
        }
    }
    let (outcome, start_index) = best.expect("at least one start");
    Ok(OptResult {
        params: outcome.params,
        value: outcome.value,
        evals_used: total_evals,
        start_index,
        converged: outcome.converged,
    })
}

/// Minimize the gate energy t(θ)† H̃ t(θ) over the family's parameters.
/// The warm start is always among the candidates, so with an exact H̃ the
/// result never exceeds the warm-start energy.
pub fn minimize_gate(
    h: &EffectiveHamiltonian,
    family: &GateFamily,
    warm_start: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    let basis = family.basis();
    if basis.len() != h.k() {
        return Err(Error::DimensionMismatch {
            context: "basis length vs H̃",
            left: basis.len(),
            right: h.k(),
        });
    }
    let projector = BasisProjector::new(&basis)?;
    let two_qubit = family.n_qubits() == 2;
    let mut objective = |p: &[f64]| -> f64 {
        let t = if two_qubit {
            projector.project4(&family.unitary4(p).expect("parameter count is fixed"))
        } else {
            projector.project_dyn(&family.unitary(p).expect("parameter count is fixed"))
        };
        quadratic_form(h.matrix(), &t)
    };
    let gradient_run = |start: &[f64], max_evals: usize, tol: f64| {
        descend_on_h_tilde(h, family, &projector, start, max_evals, tol)
    };
    run_starts(&mut objective, Some(&gradient_run), family, warm_start, cfg)
}

/// Smallest generalized eigenvalue of (H̃, S̃): the energy of the best state
/// in the slot's derivative span, ignoring the unitarity constraint. A lower
/// bound for [`minimize_gate`] on an exact H̃.
pub fn generalized_lower_bound(
    h: &EffectiveHamiltonian,
    s: &DMatrix<Complex64>,
) -> Result<f64> {
    if s.nrows() != h.k() || s.ncols() != h.k() {
        return Err(Error::DimensionMismatch {
            context: "overlap matrix vs H̃",
            left: s.nrows(),
            right: h.k(),
        });
    }
    linalg::require_hermitian(s, 1e-8)?;
    let (vals, vecs) = linalg::hermitian_eigen(s);
    let max = vals.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-300);
    if vals[0] < -1e-8 * max {
        return Err(Error::IndefiniteOverlap {
            eigenvalue: vals[0],
        });
    }
    // whiten on the non-degenerate part of the overlap
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 1e-10 * max).collect();
    if keep.is_empty() {
        return Err(Error::Invalid("overlap matrix is numerically zero".into()));
    }
    let k = h.k();
    let mut w = DMatrix::zeros(k, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        let scale = 1.0 / vals[i].sqrt();
        for r in 0..k {
            w[(r, col)] = vecs[(r, i)] * scale;
        }
    }
    let m = w.adjoint() * h.matrix() * &w;
    let sym = (&m + m.adjoint()).scale(0.5);
    let (mvals, _) = linalg::hermitian_eigen(&sym);
    Ok(mvals[0])
}

/// Maximize |t(θ)† v| over the family's parameters. The reported value is
/// the achieved magnitude. An all-zero v is degenerate and returns the warm
/// start unchanged.
pub fn maximize_overlap(
    v: &[Complex64],
    family: &GateFamily,
    warm_start: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    let basis = family.basis();
    if basis.len() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "overlap components vs basis",
            left: v.len(),
            right: basis.len(),
        });
    }
    if v.iter().all(|z| z.norm() < 1e-300) {
        return Ok(OptResult {
            params: warm_start.to_vec(),
            value: 0.0,
            evals_used: 0,
            start_index: 0,
            converged: true,
        });
    }
    let projector = BasisProjector::new(&basis)?;
    let two_qubit = family.n_qubits() == 2;
    let overlap = |t: &[Complex64]| -> Complex64 {
        t.iter().zip(v).map(|(ti, vi)| ti.conj() * vi).sum()
    };
    let mut objective = |p: &[f64]| -> f64 {
        let t = if two_qubit {
            projector.project4(&family.unitary4(p).expect("parameter count is fixed"))
        } else {
            projector.project_dyn(&family.unitary(p).expect("parameter count is fixed"))
        };
        -overlap(&t).norm()
    };
    let gradient_run = |start: &[f64], max_evals: usize, tol: f64| -> Result<RunOutcome> {
        // ascent on |f| with d|f|/dθ = Re(f* Σ_a (dt_a/dθ)* v_a)/|f|
        const STEP: f64 = 0.05;
        let mut x = start.to_vec();
        let coeffs = |p: &[f64]| -> Result<Vec<Complex64>> {
            Ok(projector.project_dyn(&family.unitary(p)?))
        };
        let mut value = overlap(&coeffs(&x)?).norm();
        let mut evals = 1usize;
        let mut best = x.clone();
        let mut best_value = value;
        while evals < max_evals {
            let t = coeffs(&x)?;
            let f_c = overlap(&t);
            if f_c.norm() < 1e-14 {
                break;
            }
            let dt = family.coefficient_gradients(&x)?;
            let grad: Vec<f64> = (0..family.param_count())
                .map(|i| {
                    let s: Complex64 = (0..t.len()).map(|a| dt[(a, i)].conj() * v[a]).sum();
                    (f_c.conj() * s).re / f_c.norm()
                })
                .collect();
            for (xi, g) in x.iter_mut().zip(&grad) {
                *xi += STEP * g;
            }
            let new_value = overlap(&coeffs(&x)?).norm();
            evals += 1;
            if new_value > best_value {
                best_value = new_value;
                best = x.clone();
            }
            if (new_value - value).abs() < tol {
                return Ok(RunOutcome {
                    params: best,
                    value: -best_value,
                    evals,
                    converged: true,
                });
            }
            value = new_value;
        }
        Ok(RunOutcome {
            params: best,
            value: -best_value,
            evals,
            converged: false,
        })
    };
    let result = run_starts(&mut objective, Some(&gradient_run), family, warm_start, cfg)?;
    Ok(OptResult {
        value: -result.value,
        ..result
    })
}
