//! Stationary points of the conservative post-fault system.
//!
//! All equilibria lie on the ω = 0 manifold, so they are the critical points
//! of the potential energy. Their type (number of Jacobian eigenvalues with
//! positive real part) equals the number of negative Hessian eigenvalues; the
//! closest-UEP critical energy is the lowest potential over the type-1 points.

mod continuation;

pub use continuation::{continue_branch, write_branches_csv, Branch, BranchPoint, ContinuationOptions, Segment};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::energy::HamiltonianModel;
use crate::netmodel::ReducedNetwork;
use crate::swing::{electrical_power, GeneratorParams};

/// Residual bound on ‖F̂‖ for an accepted equilibrium.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Real-part threshold for counting unstable eigenvalues.
pub const EIGEN_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("Newton iteration did not converge within {0} iterations")]
    Diverged(usize),
    #[error("converged point has type {0}, not a stable equilibrium")]
    NotStable(usize),
    #[error("eigenvalue {0} lies on the imaginary axis within tolerance")]
    Marginal(Complex64),
    #[error("no type-1 equilibrium found; no energy boundary")]
    NoBoundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPoint {
    /// Modeled angles (ω = 0 implied).
    pub delta: Vec<f64>,
    /// Potential energy E_pot(δ).
    pub energy: f64,
    pub type_index: usize,
    pub spectrum: Vec<Complex64>,
}

impl EquilibriumPoint {
    pub fn is_stable(&self) -> bool {
        self.type_index == 0
    }

    /// ‖δ‖₂, the ordinate of the branch diagrams.
    pub fn norm(&self) -> f64 {
        self.delta.iter().map(|d| d * d).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalEnergy {
    pub closest_uep: EquilibriumPoint,
    pub e_c: f64,
    /// Every type-1 equilibrium considered.
    pub candidates: Vec<EquilibriumPoint>,
}

/// Jacobian of `(ω, Â(δ))` at `(δ, 0)`.
pub fn jacobian(model: &HamiltonianModel, delta: &[f64]) -> DMatrix<f64> {
    let k = model.potential_hessian(delta);
    let modeled = model.gp.modeled();
    let m = modeled.len();
    let mut j = DMatrix::zeros(2 * m, 2 * m);
    for a in 0..m {
        j[(a, m + a)] = 1.0;
        for b in 0..m {
            j[(m + a, b)] = -k[(a, b)] / model.gp.m[modeled[a]];
        }
    }
    j
}

/// Counts Jacobian eigenvalues with real part above [`EIGEN_TOL`].
///
/// The Jacobian is `[[0, I], [−M⁻¹K, 0]]`, so its eigenvalues are `±√μ` for
/// the eigenvalues μ of `−M⁻¹K`, which is similar to the symmetric
/// `−M^{-1/2} K M^{-1/2}` and therefore has a real spectrum. Centres sit
/// exactly on the imaginary axis; only μ near zero (a degenerate, fold-like
/// point) makes the count ambiguous, so the tolerance applies to |λ|² = |μ|.
pub fn classify(model: &HamiltonianModel, delta: &[f64]) -> Result<(usize, Vec<Complex64>), EquilibriumError> {
    let k = model.potential_hessian(delta);
    let modeled = model.gp.modeled();
    let s: Vec<f64> = modeled.iter().map(|&i| model.gp.m[i].sqrt().recip()).collect();
    let scaled = DMatrix::from_fn(k.nrows(), k.ncols(), |a, b| -s[a] * 0.5 * (k[(a, b)] + k[(b, a)]) * s[b]);
    let mut mu: Vec<f64> = scaled.symmetric_eigenvalues().iter().copied().collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    let mut spectrum = Vec::with_capacity(2 * mu.len());
    for &m in &mu {
        let r = m.abs().sqrt();
        if m.abs() <= EIGEN_TOL {
            return Err(EquilibriumError::Marginal(Complex64::new(r, 0.0)));
        }
        if m > 0.0 {
            spectrum.extend([Complex64::new(r, 0.0), Complex64::new(-r, 0.0)]);
        } else {
            spectrum.extend([Complex64::new(0.0, r), Complex64::new(0.0, -r)]);
        }
    }
    let count = spectrum.iter().filter(|z| z.re > EIGEN_TOL).count();
    Ok((count, spectrum))
}

/// Max-norm of the conservative field's accelerations at `(δ, 0)`.
pub fn residual(model: &HamiltonianModel, delta: &[f64]) -> f64 {
    model.field().accelerations(delta).iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn point(model: &HamiltonianModel, delta: Vec<f64>) -> Result<EquilibriumPoint, EquilibriumError> {
    let (type_index, spectrum) = classify(model, &delta)?;
    Ok(EquilibriumPoint { energy: model.potential(&delta), delta, type_index, spectrum })
}

/// Damped Newton iteration for `residual(δ) = 0` with Jacobian `jac(δ)`.
/// Returns the root and the number of iterations used.
pub(crate) fn newton<R, J>(mut delta: Vec<f64>, max_iter: usize, tol: f64, res: R, jac: J) -> Option<(Vec<f64>, usize)>
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> DMatrix<f64>,
{
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut r = res(&delta);
    for it in 0..max_iter {
        if norm(&r) <= tol {
            return Some((delta, it));
        }
        let step = jac(&delta).lu().solve(&DVector::from_column_slice(&r))?;
        if step.iter().any(|s| !s.is_finite()) {
            return None;
        }
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = delta.iter().zip(step.iter()).map(|(d, s)| d - lambda * s).collect();
            let rt = res(&trial);
            if norm(&rt) < norm(&r) || lambda < 1e-3 {
                delta = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
        }
        if step.amax() * lambda < 1e-15 {
            break;
        }
    }
    (norm(&r) <= tol).then_some((delta, max_iter))
}

/// Newton solve for an equilibrium of the conservative field near `guess`.
pub fn solve_equilibrium(model: &HamiltonianModel, guess: &[f64], max_iter: usize) -> Option<(Vec<f64>, usize)> {
    let modeled = model.gp.modeled();
    let scale: Vec<f64> = modeled.iter().map(|&i| model.gp.m[i]).collect();
    let (delta, iters) = newton(
        guess.to_vec(),
        max_iter,
        1e-12,
        |d| model.potential_gradient(d),
        |d| model.potential_hessian(d),
    )?;
    let ok = model
        .potential_gradient(&delta)
        .iter()
        .zip(&scale)
        .all(|(g, m)| (g / m).abs() <= RESIDUAL_TOL);
    ok.then_some((delta, iters))
}

fn exact_jacobian(red: &ReducedNetwork, gp: &GeneratorParams, delta: &[f64]) -> DMatrix<f64> {
    let full = gp.full_angles(delta);
    let modeled = gp.modeled();
    let n = full.len();
    let m = modeled.len();
    DMatrix::from_fn(m, m, |a, b| {
        let i = modeled[a];
        let ee = |k: usize| red.e[i] * red.e[k];
        // d(P_m − P_e,i)/dδ_j
        if a == b {
            -(0..n)
                .filter(|&k| k != i)
                .map(|k| {
                    let th = full[i] - full[k];
                    ee(k) * (-red.g[(i, k)] * th.sin() + red.b[(i, k)] * th.cos())
                })
                .sum::<f64>()
        } else {
            let k = modeled[b];
            let th = full[i] - full[k];
            -ee(k) * (red.g[(i, k)] * th.sin() - red.b[(i, k)] * th.cos())
        }
    })
}

/// Stable post-fault equilibrium and the conservative model anchored at it.
///
/// The anchor and the equilibrium must agree (`P_a = P(δ^s)` with δ^s a root of
/// the field built from that `P_a`). Since the frozen-load field coincides
/// with the exact field at its own anchor, the joint fixed point is a root of
/// the exact swing equations, which Newton solves directly.
pub fn find_sep(red: &ReducedNetwork, gp: &GeneratorParams, guess: &[f64]) -> Result<(EquilibriumPoint, HamiltonianModel), EquilibriumError> {
    const MAX_ITER: usize = 50;
    let modeled = gp.modeled();
    let (delta, _) = newton(
        guess.to_vec(),
        MAX_ITER,
        1e-13,
        |d| {
            let pe = electrical_power(red, &gp.full_angles(d));
            modeled.iter().map(|&i| gp.pm[i] - pe[i]).collect()
        },
        |d| exact_jacobian(red, gp, d),
    )
    .ok_or(EquilibriumError::Diverged(MAX_ITER))?;
    let model = HamiltonianModel::new(red.clone(), gp.clone(), delta.clone());
    if residual(&model, &delta) > RESIDUAL_TOL {
        return Err(EquilibriumError::Diverged(MAX_ITER));
    }
    let p = point(&model, delta)?;
    if !p.is_stable() {
        return Err(EquilibriumError::NotStable(p.type_index));
    }
    Ok((p, model))
}

#[derive(Debug, Clone, Copy)]
pub struct EnumerateOptions {
    /// Starting points per angle coordinate.
    pub grid_density: usize,
    /// Half-width of the search box around δ^s.
    pub half_width: f64,
    /// Two equilibria closer than this (after wrapping) are the same point.
    pub dedup_tol: f64,
    pub max_iter: usize,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self { grid_density: 40, half_width: 2.0 * PI, dedup_tol: 1e-6, max_iter: 50 }
    }
}

/// Representative of `delta` in the 2π-periodic cell centred on `center`.
pub fn canonical(delta: &[f64], center: &[f64]) -> Vec<f64> {
    delta
        .iter()
        .zip(center)
        .map(|(&d, &c)| {
            let w = (d - c).rem_euclid(2.0 * PI);
            c + if w > PI { w - 2.0 * PI } else { w }
        })
        .collect()
}

/// Distance between two angle vectors modulo 2π per coordinate.
pub fn wrapped_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let w = (x - y).rem_euclid(2.0 * PI);
            w.min(2.0 * PI - w)
        })
        .fold(0.0f64, f64::max)
}

/// All equilibria in the cell centred on the model's anchor, found by
/// multi-start Newton from a uniform grid. Points with a marginal spectrum
/// are dropped.
pub fn enumerate_equilibria(model: &HamiltonianModel, opts: &EnumerateOptions) -> Vec<EquilibriumPoint> {
    let center = &model.anchor;
    let dim = center.len();
    let n = opts.grid_density.max(1);
    let coord = |j: usize| {
        if n == 1 {
            0.0
        } else {
            -opts.half_width + 2.0 * opts.half_width * j as f64 / (n - 1) as f64
        }
    };

    let mut found: Vec<Vec<f64>> = Vec::new();
    let total = n.pow(dim as u32);
    for flat in 0..total {
        let mut rem = flat;
        let guess: Vec<f64> = (0..dim)
            .map(|d| {
                let j = rem % n;
                rem /= n;
                center[d] + coord(j)
            })
            .collect();
        if let Some((root, _)) = solve_equilibrium(model, &guess, opts.max_iter) {
            let root = canonical(&root, center);
            if !found.iter().any(|f| wrapped_distance(f, &root) <= opts.dedup_tol) {
                found.push(root);
            }
        }
    }
    found.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    found.into_iter().filter_map(|d| point(model, d).ok()).collect()
}

/// Type-1 equilibria (the set S).
pub fn enumerate_ueps(model: &HamiltonianModel, opts: &EnumerateOptions) -> Vec<EquilibriumPoint> {
    enumerate_equilibria(model, opts).into_iter().filter(|p| p.type_index == 1).collect()
}

/// Closest-UEP critical energy over the type-1 members of `set`.
pub fn closest_uep(set: &[EquilibriumPoint]) -> Result<CriticalEnergy, EquilibriumError> {
    let mut candidates: Vec<EquilibriumPoint> = set.iter().filter(|p| p.type_index == 1).cloned().collect();
    candidates.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then_with(|| a.delta.partial_cmp(&b.delta).expect("finite angles"))
    });
    let closest = candidates.first().cloned().ok_or(EquilibriumError::NoBoundary)?;
    Ok(CriticalEnergy { e_c: closest.energy, closest_uep: closest, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::ReducedNetwork;
    use nalgebra::DMatrix;

    fn smib_model(pm: f64, pbar: f64, m: f64) -> HamiltonianModel {
        let red = ReducedNetwork {
            g: DMatrix::zeros(2, 2),
            b: DMatrix::from_row_slice(2, 2, &[-pbar, pbar, pbar, -pbar]),
            pbar: DMatrix::from_row_slice(2, 2, &[0.0, pbar, pbar, 0.0]),
            e: vec![1.0, 1.0],
            machines: vec![1, 2],
        };
        let gp = GeneratorParams { m: vec![m, f64::INFINITY], pm: vec![pm, 0.0], e: vec![1.0, 1.0], infinite_index: Some(1) };
        let (_, model) = find_sep(&red, &gp, &[0.1]).unwrap();
        model
    }

    #[test]
    fn pendulum_equilibria() {
        let model = smib_model(0.0, 1.0, 0.1);
        assert!(model.anchor[0].abs() < 1e-12);
        let all = enumerate_equilibria(&model, &EnumerateOptions::default());
        assert_eq!(all.len(), 2);
        let uep = all.iter().find(|p| p.type_index == 1).unwrap();
        assert!((uep.delta[0].abs() - PI).abs() < 1e-10);
        assert!((uep.energy - model.potential(&[0.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pendulum_saddle_type() {
        let model = smib_model(0.0, 1.0, 0.1);
        let (k, spectrum) = classify(&model, &[PI]).unwrap();
        assert_eq!(k, 1);
        let max_re = spectrum.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        assert!((max_re - (1.0f64 / 0.1).sqrt()).abs() < 1e-9);
        assert_eq!(classify(&model, &[0.0]).unwrap().0, 0);
    }

    #[test]
    fn spectrum_matches_full_jacobian() {
        let model = smib_model(0.3, 1.2, 0.05);
        for d in [0.2, 2.5] {
            let (_, spec) = classify(&model, &[d]).unwrap();
            let mut full: Vec<Complex64> = jacobian(&model, &[d]).complex_eigenvalues().iter().copied().collect();
            full.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
            let mut ours = spec.clone();
            ours.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
            for (a, b) in full.iter().zip(&ours) {
                assert!((a - b).norm() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn marginal_at_fold() {
        // P_m = P̄: SEP and UEP merge at π/2.
        let red = ReducedNetwork {
            g: DMatrix::zeros(2, 2),
            b: DMatrix::zeros(2, 2),
            pbar: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            e: vec![1.0, 1.0],
            machines: vec![1, 2],
        };
        let gp = GeneratorParams { m: vec![0.1, 1.0], pm: vec![1.0, 0.0], e: vec![1.0, 1.0], infinite_index: Some(1) };
        let model = HamiltonianModel::new(red, gp, vec![0.0]);
        assert!(matches!(classify(&model, &[PI / 2.0]), Err(EquilibriumError::Marginal(_))));
    }

    #[test]
    fn closest_uep_filters_and_orders() {
        let mk = |e: f64, t: usize, d: f64| EquilibriumPoint { delta: vec![d], energy: e, type_index: t, spectrum: vec![] };
        let set = vec![mk(3.0, 1, 1.0), mk(-5.0, 2, 2.0), mk(1.0, 1, 3.0), mk(-9.0, 0, 0.0)];
        let ce = closest_uep(&set).unwrap();
        assert_eq!(ce.e_c, 1.0);
        assert_eq!(ce.candidates.len(), 2);
        let mut rev = set.clone();
        rev.reverse();
        assert_eq!(closest_uep(&rev).unwrap(), ce);
        assert_eq!(closest_uep(&[mk(0.0, 0, 0.0)]), Err(EquilibriumError::NoBoundary));
        assert_eq!(closest_uep(&[mk(2.0, 1, 0.5)]).unwrap().e_c, 2.0);
    }

    #[test]
    fn canonical_cell() {
        let c = canonical(&[7.0, -4.0], &[0.5, 0.0]);
        assert!((c[0] - (7.0 - 2.0 * PI)).abs() < 1e-12);
        assert!((c[1] - (-4.0 + 2.0 * PI)).abs() < 1e-12);
        assert!(wrapped_distance(&[0.1], &[0.1 + 2.0 * PI]) < 1e-12);
    }
}
