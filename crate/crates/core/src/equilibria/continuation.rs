//! Natural-parameter continuation of equilibrium branches.

use std::cell::RefCell;
use std::collections::HashMap;
use std::io::Write;

use super::{canonical, enumerate_equilibria, solve_equilibrium, wrapped_distance, EnumerateOptions, EquilibriumPoint};
use crate::energy::HamiltonianModel;

#[derive(Debug, Clone, Copy)]
pub struct ContinuationOptions {
    pub initial_step: f64,
    /// Step floor; a corrector failure below it marks a fold.
    pub min_step: f64,
    pub growth: f64,
    /// Corrector iterations allowed per step.
    pub max_corrector: usize,
    /// Largest accepted distance between predictor and corrected point.
    pub max_jump: f64,
    /// Re-seeding interval as a fraction of the parameter range.
    pub checkpoint_fraction: f64,
    pub enumerate: EnumerateOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.05,
            min_step: 1e-5,
            growth: 1.5,
            max_corrector: 8,
            max_jump: 0.2,
            checkpoint_fraction: 0.05,
            enumerate: EnumerateOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub param: f64,
    pub point: EquilibriumPoint,
    /// ‖δ‖₂ of the point wrapped into the cell around the SEP at `param`.
    pub norm: f64,
}

/// Maximal run of a branch with a constant type index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub type_index: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Branch {
    /// Points in increasing parameter order.
    pub points: Vec<BranchPoint>,
    /// Parameter values where the branch ends in a fold.
    pub folds: Vec<f64>,
}

impl Branch {
    pub fn segments(&self) -> Vec<Segment> {
        let mut out: Vec<Segment> = Vec::new();
        for bp in &self.points {
            match out.last_mut() {
                Some(s) if s.type_index == bp.point.type_index => s.end = bp.param,
                _ => out.push(Segment { start: bp.param, end: bp.param, type_index: bp.point.type_index }),
            }
        }
        out
    }

    pub fn param_range(&self) -> Option<(f64, f64)> {
        Some((self.points.first()?.param, self.points.last()?.param))
    }

    fn point_at(&self, p: f64, tol: f64) -> Option<&BranchPoint> {
        self.points.iter().find(|bp| (bp.param - p).abs() <= tol)
    }
}

struct ModelCache<'a, F> {
    build: &'a F,
    map: RefCell<HashMap<u64, Option<std::rc::Rc<HamiltonianModel>>>>,
}

impl<'a, F: Fn(f64) -> Option<HamiltonianModel>> ModelCache<'a, F> {
    fn get(&self, p: f64) -> Option<std::rc::Rc<HamiltonianModel>> {
        self.map
            .borrow_mut()
            .entry(p.to_bits())
            .or_insert_with(|| (self.build)(p).map(std::rc::Rc::new))
            .clone()
    }
}

enum Stop {
    Reached,
    Fold(f64),
    /// The model ceased to exist (no SEP, dispatch failure, ...).
    Boundary,
}

/// Traces every equilibrium branch of `model_at` over `[lo, hi]`.
///
/// Each branch is seeded from an enumeration at a checkpoint, followed in both
/// directions with a secant predictor and Newton corrector, and ends at the
/// range limits, at a fold, or where the model stops existing. Enumeration is
/// repeated at every checkpoint so branches born inside the range are found.
pub fn continue_branch<F>(model_at: F, lo: f64, hi: f64, opts: &ContinuationOptions) -> Vec<Branch>
where
    F: Fn(f64) -> Option<HamiltonianModel>,
{
    assert!(hi > lo, "empty continuation range");
    let cache = ModelCache { build: &model_at, map: RefCell::new(HashMap::new()) };
    let n_cp = (1.0 / opts.checkpoint_fraction).round().max(1.0) as usize;
    let checkpoints: Vec<f64> = (0..=n_cp).map(|j| lo + (hi - lo) * j as f64 / n_cp as f64).collect();

    let mut branches: Vec<Branch> = Vec::new();
    for &cp in &checkpoints {
        let Some(model) = cache.get(cp) else { continue };
        for eq in enumerate_equilibria(&model, &opts.enumerate) {
            let known = branches.iter().any(|b| {
                b.point_at(cp, 1e-9 * (hi - lo))
                    .is_some_and(|bp| wrapped_distance(&bp.point.delta, &eq.delta) <= 1e-5)
            });
            if known {
                continue;
            }
            let (mut back, stop_back) = trace(&cache, cp, &eq.delta, -1.0, lo, &checkpoints, opts);
            let (fwd, stop_fwd) = trace(&cache, cp, &eq.delta, 1.0, hi, &checkpoints, opts);
            back.reverse();
            let mut branch = Branch { points: back, folds: Vec::new() };
            branch.points.push(bp(&cache, cp, eq));
            branch.points.extend(fwd);
            for stop in [stop_back, stop_fwd] {
                if let Stop::Fold(p) = stop {
                    branch.folds.push(p);
                }
            }
            branch.folds.sort_by(f64::total_cmp);
            branches.push(branch);
        }
    }
    branches
}

fn bp<F: Fn(f64) -> Option<HamiltonianModel>>(cache: &ModelCache<'_, F>, p: f64, point: EquilibriumPoint) -> BranchPoint {
    let sep = cache.get(p).map(|m| m.anchor.clone()).unwrap_or_else(|| point.delta.clone());
    let norm = canonical(&point.delta, &sep).iter().map(|d| d * d).sum::<f64>().sqrt();
    BranchPoint { param: p, point, norm }
}

fn trace<F>(
    cache: &ModelCache<'_, F>,
    start: f64,
    delta0: &[f64],
    dir: f64,
    end: f64,
    checkpoints: &[f64],
    opts: &ContinuationOptions,
) -> (Vec<BranchPoint>, Stop)
where
    F: Fn(f64) -> Option<HamiltonianModel>,
{
    let start_type = cache
        .get(start)
        .and_then(|m| super::classify(&m, delta0).ok())
        .map(|(k, _)| k);
    let mut out = Vec::new();
    let mut p = start;
    let mut delta = delta0.to_vec();
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let mut h = opts.initial_step;
    let eps = 1e-12 * (1.0 + end.abs());
    loop {
        if (end - p) * dir <= eps {
            return (out, Stop::Reached);
        }
        let next_cp = checkpoints
            .iter()
            .copied()
            .filter(|&c| (c - p) * dir > eps)
            .min_by(|a, b| ((a - p) * dir).total_cmp(&((b - p) * dir)))
            .unwrap_or(end);
        // Land exactly on checkpoints so re-seeding can recognise known branches.
        let target = if (next_cp - p) * dir <= h * (1.0 + 1e-6) { next_cp } else { p + dir * h };
        let target = if (target - end) * dir > 0.0 { end } else { target };
        let step = (target - p).abs();

        let predicted: Vec<f64> = match &prev {
            Some((pp, dp)) => delta
                .iter()
                .zip(dp)
                .map(|(d, q)| d + (d - q) / (p - pp) * (target - p))
                .collect(),
            None => delta.clone(),
        };

        let Some(model) = cache.get(target) else {
            if h <= opts.min_step {
                return (out, Stop::Boundary);
            }
            h = (h * 0.5).max(opts.min_step * 0.5);
            continue;
        };
        let accepted = solve_equilibrium(&model, &predicted, opts.max_corrector).and_then(|(d, iters)| {
            if wrapped_distance(&d, &predicted) > opts.max_jump {
                return None;
            }
            let (k, spectrum) = super::classify(&model, &d).ok()?;
            if Some(k) != start_type {
                return None;
            }
            Some((d, k, spectrum, iters))
        });
        match accepted {
            Some((d, k, spectrum, iters)) => {
                let energy = model.potential(&d);
                out.push(bp(cache, target, EquilibriumPoint { delta: d.clone(), energy, type_index: k, spectrum }));
                prev = Some((p, std::mem::replace(&mut delta, d)));
                p = target;
                if iters <= 3 {
                    h = (h * opts.growth).min(opts.initial_step);
                }
            }
            None => {
                if step <= opts.min_step {
                    return (out, Stop::Fold(p + dir * step * 0.5));
                }
                h = (step * 0.5).max(opts.min_step * 0.5);
            }
        }
    }
}

/// Writes branch points as CSV: `branch,param,norm,type,energy,delta...`.
pub fn write_branches_csv<W: Write>(branches: &[Branch], mut w: W) -> std::io::Result<()> {
    let dim = branches.iter().flat_map(|b| b.points.first()).map(|bp| bp.point.delta.len()).next().unwrap_or(0);
    let mut header = String::from("branch,param,norm,type,energy");
    for i in 0..dim {
        header.push_str(&format!(",delta{}", i + 1));
    }
    writeln!(w, "{header}")?;
    for (bi, b) in branches.iter().enumerate() {
        for bp in &b.points {
            let deltas: String = bp.point.delta.iter().map(|d| format!(",{d}")).collect();
            writeln!(w, "{bi},{},{},{},{}{deltas}", bp.param, bp.norm, bp.point.type_index, bp.point.energy)?;
        }
    }
    Ok(())
}
