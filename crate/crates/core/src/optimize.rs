//! Seeded global-best particle swarm maximization over a box.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmConfig {
    pub swarm_size: usize,
    pub max_iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Minimum improvement of the global best that resets the stall counter.
    pub tolerance: f64,
    pub stall_iterations: usize,
    /// Per-dimension `(lo, hi)`.
    pub bounds: Vec<(f64, f64)>,
}

impl SwarmConfig {
    /// Constriction-style defaults over the given box.
    pub fn with_bounds(bounds: Vec<(f64, f64)>) -> Self {
        Self {
            swarm_size: 40,
            max_iterations: 200,
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
            tolerance: 1e-6,
            stall_iterations: 25,
            bounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("swarm config: {msg}")));
        if self.swarm_size < 2 {
            return bad("swarm_size must be at least 2");
        }
        if !(self.inertia > 0.0 && self.inertia < 1.0) {
            return bad("inertia must lie in (0, 1)");
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return bad("tolerance must be positive");
        }
        if self.bounds.is_empty() {
            return bad("at least one dimension is required");
        }
        if self.bounds.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return bad("every bound needs finite lo < hi");
        }
        if !self.cognitive.is_finite() || !self.social.is_finite() {
            return bad("coefficients must be finite");
        }
        Ok(())
    }
}

/// Incumbent after one iteration (iteration 0 is the initial swarm).
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub best_value: f64,
    pub best_point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub iterations_used: usize,
    pub evaluations: usize,
    /// Whether the best point sits on either face of the box, per dimension.
    pub hit_bounds: Vec<bool>,
    /// Stopped by the stall rule rather than the iteration cap.
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NEG_INFINITY
    }
}

/// Maximizes `objective` over the box in `config`. Non-finite objective values
/// count as −∞ and never become the incumbent. Equal seeds give bit-identical
/// runs.
pub fn maximize<F>(objective: F, config: &SwarmConfig, seed: u64) -> Result<OptimizationResult>
where
    F: Fn(&[f64]) -> f64,
{
    config.validate()?;
    let dim = config.bounds.len();
    let n = config.swarm_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut pos = vec![0.0; n * dim];
    let mut vel = vec![0.0; n * dim];
    for i in 0..n {
        for (d, &(lo, hi)) in config.bounds.iter().enumerate() {
            let span = hi - lo;
            pos[i * dim + d] = (lo + rng.random::<f64>() * span).min(hi);
            vel[i * dim + d] = (rng.random::<f64>() * 2.0 - 1.0) * span / 4.0;
        }
    }

    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        sanitize(objective(x))
    };

    let mut fit: Vec<f64> = (0..n).map(|i| eval(&pos[i * dim..(i + 1) * dim])).collect();
    let mut pbest = pos.clone();
    let mut pbest_fit = fit.clone();

    let mut g = match argmax(&pbest_fit) {
        Some(g) => g,
        None => return Err(Error::InitializationFailure),
    };
    let mut gbest: Vec<f64> = pbest[g * dim..(g + 1) * dim].to_vec();
    let mut gbest_fit = pbest_fit[g];
    let mut trace = vec![TracePoint { iteration: 0, best_value: gbest_fit, best_point: gbest.clone() }];

    let mut stall = 0usize;
    let mut converged = false;
    let mut iterations_used = 0usize;
    for it in 1..=config.max_iterations {
        iterations_used = it;
        for i in 0..n {
            for (d, &(lo, hi)) in config.bounds.iter().enumerate() {
                let k = i * dim + d;
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let mut v = config.inertia * vel[k]
                    + config.cognitive * r1 * (pbest[k] - pos[k])
                    + config.social * r2 * (gbest[d] - pos[k]);
                let mut x = pos[k] + v;
                if x < lo {
                    x = lo;
                    v = 0.0;
                } else if x > hi {
                    x = hi;
                    v = 0.0;
                }
                pos[k] = x;
                vel[k] = v;
            }
        }
        // Evaluate in particle order, then update the incumbent once.
        for i in 0..n {
            let x = &pos[i * dim..(i + 1) * dim];
            fit[i] = eval(x);
            if fit[i] > pbest_fit[i] {
                pbest_fit[i] = fit[i];
                pbest[i * dim..(i + 1) * dim].copy_from_slice(x);
            }
        }
        let previous = gbest_fit;
        if let Some(best) = argmax(&pbest_fit) {
            if pbest_fit[best] > gbest_fit {
                g = best;
                gbest_fit = pbest_fit[g];
                gbest.copy_from_slice(&pbest[g * dim..(g + 1) * dim]);
            }
        }
        trace.push(TracePoint { iteration: it, best_value: gbest_fit, best_point: gbest.clone() });

        if gbest_fit - previous < config.tolerance {
            stall += 1;
            if stall >= config.stall_iterations {
                converged = true;
                break;
            }
        } else {
            stall = 0;
        }
    }

    let hit_bounds = gbest.iter().zip(&config.bounds).map(|(&x, &(lo, hi))| x <= lo || x >= hi).collect();
    Ok(OptimizationResult {
        best_point: gbest,
        best_value: gbest_fit,
        iterations_used,
        evaluations,
        hit_bounds,
        converged,
        trace,
    })
}

/// Index of the largest finite value; ties go to the lowest index.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::cell::RefCell;

    fn sphere(x: &[f64]) -> f64 {
        -((x[0] - 3.0).powi(2) + (x[1] - 5.0).powi(2))
    }

    fn box100() -> SwarmConfig {
        SwarmConfig::with_bounds(vec![(0.0, 100.0), (0.0, 100.0)])
    }

    #[test]
    fn sphere_optimum() {
        let r = maximize(sphere, &box100(), 7).unwrap();
        assert!((r.best_point[0] - 3.0).abs() < 1e-3 && (r.best_point[1] - 5.0).abs() < 1e-3, "{:?}", r.best_point);
        assert!(r.best_value.abs() < 1e-5);
        assert_eq!(r.best_value, sphere(&r.best_point));
    }

    #[test]
    fn constant_objective_stalls() {
        let r = maximize(|_| 2.5, &box100(), 1).unwrap();
        assert!(r.converged);
        assert_eq!(r.best_value, 2.5);
        assert_eq!(r.iterations_used, 25);
    }

    #[test]
    fn all_failures_at_init() {
        let err = maximize(|_| f64::NAN, &box100(), 1).unwrap_err();
        assert_eq!(err, Error::InitializationFailure);
    }

    #[test]
    fn sentinel_never_incumbent() {
        // Failure on the left half of the box.
        let r = maximize(|x| if x[0] < 50.0 { f64::NEG_INFINITY } else { -x[0] }, &box100(), 3).unwrap();
        assert!(r.best_point[0] >= 50.0);
        assert!(r.best_value.is_finite());
    }

    #[test]
    fn every_evaluation_inside_box() {
        let seen = RefCell::new(Vec::new());
        let cfg = SwarmConfig::with_bounds(vec![(-2.0, 1.0), (10.0, 11.0)]);
        let r = maximize(
            |x| {
                seen.borrow_mut().push((x[0], x[1]));
                -(x[0] - 5.0).abs() - x[1]
            },
            &cfg,
            11,
        )
        .unwrap();
        let seen = seen.into_inner();
        assert_eq!(seen.len(), r.evaluations);
        assert!(seen.iter().all(|&(a, b)| (-2.0..=1.0).contains(&a) && (10.0..=11.0).contains(&b)));
        // Optimum sits on the corner (1, 10).
        assert_eq!(r.best_point, vec![1.0, 10.0]);
        assert_eq!(r.hit_bounds, vec![true, true]);
    }

    #[test]
    fn incumbent_is_monotone_and_deterministic() {
        let rosen = |x: &[f64]| -(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2));
        let cfg = SwarmConfig::with_bounds(vec![(-5.0, 10.0), (-5.0, 10.0)]);
        let a = maximize(rosen, &cfg, 99).unwrap();
        let b = maximize(rosen, &cfg, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.windows(2).all(|w| w[1].best_value >= w[0].best_value));
        let c = maximize(rosen, &cfg, 100).unwrap();
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = box100();
        cfg.swarm_size = 1;
        assert!(maximize(sphere, &cfg, 0).is_err());
        let mut cfg = box100();
        cfg.bounds[0] = (5.0, 5.0);
        assert!(maximize(sphere, &cfg, 0).is_err());
        let mut cfg = box100();
        cfg.inertia = 1.0;
        assert!(maximize(sphere, &cfg, 0).is_err());
    }
}
