//! Bounded derivative-free local optimization with seeded random restarts.
//!
//! Every restart draws a uniform start inside the bounds and runs a bounded
//! Nelder-Mead search (with one polishing rerun from the found point).
//! Restarts are independent, run in parallel, and the log is canonicalized
//! by restart index, so a fixed seed reproduces the outcome bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    pub max_iters: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    /// Initial simplex step as a fraction of each bound width.
    pub init_step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions {
            max_iters: 0, // 0 = 400 * dimension
            f_tol: 1e-9,
            x_tol: 1e-10,
            init_step: 0.08,
        }
    }
}

pub struct OptimizationProblem<'a> {
    /// Objective to minimize; NaN marks an evaluation failure.
    pub objective: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    pub bounds: Vec<(f64, f64)>,
    pub restarts: usize,
    pub seed: u64,
    pub nm: NmOptions,
}

impl<'a> OptimizationProblem<'a> {
    pub fn new(
        objective: &'a (dyn Fn(&[f64]) -> f64 + Sync),
        bounds: Vec<(f64, f64)>,
        restarts: usize,
        seed: u64,
    ) -> Self {
        OptimizationProblem {
            objective,
            bounds,
            restarts,
            seed,
            nm: NmOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RestartRecord {
    pub index: usize,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub value: f64,
    /// Objective failed at the start point; the restart was skipped.
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizationOutcome {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    pub restarts: Vec<RestartRecord>,
}

fn clamp(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *xi = xi.clamp(lo, hi);
    }
}

fn guard(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Bounded Nelder-Mead from `x0`. Candidate points are projected onto the
/// box; NaN objective values are treated as +inf.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: &NmOptions,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    let max_iters = if opts.max_iters == 0 {
        400 * d
    } else {
        opts.max_iters
    };
    let eval = |x: &[f64]| guard(f(x));

    // initial simplex: x0 plus a step along each coordinate, reflected when
    // the step would leave the box
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    simplex.push(x0.to_vec());
    for i in 0..d {
        let (lo, hi) = bounds[i];
        let width = (hi - lo).max(1e-12);
        let mut p = x0.to_vec();
        let step = opts.init_step * width;
        p[i] = if p[i] + step <= hi {
            p[i] + step
        } else {
            p[i] - step
        };
        clamp(&mut p, bounds);
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();

    for _ in 0..max_iters {
        // order ascending by value
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let reordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let revalues: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        simplex = reordered;
        values = revalues;

        let f_best = values[0];
        let f_worst = values[d];
        let mut diam = 0.0f64;
        for p in &simplex[1..] {
            for i in 0..d {
                diam = diam.max((p[i] - simplex[0][i]).abs());
            }
        }
        if (f_worst - f_best).abs() <= opts.f_tol * (1.0 + f_best.abs())
            && diam <= opts.x_tol * (1.0 + simplex[0].iter().fold(0.0f64, |a, x| a.max(x.abs())))
        {
            break;
        }

        let centroid: Vec<f64> = (0..d)
            .map(|i| simplex[..d].iter().map(|p| p[i]).sum::<f64>() / d as f64)
            .collect();
        let lerp = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..d)
                .map(|i| centroid[i] + t * (centroid[i] - simplex[d][i]))
                .collect();
            clamp(&mut p, bounds);
            p
        };

        let refl = lerp(1.0);
        let f_refl = eval(&refl);
        if f_refl < values[0] {
            let exp = lerp(2.0);
            let f_exp = eval(&exp);
            if f_exp < f_refl {
                simplex[d] = exp;
                values[d] = f_exp;
            } else {
                simplex[d] = refl;
                values[d] = f_refl;
            }
        } else if f_refl < values[d - 1] {
            simplex[d] = refl;
            values[d] = f_refl;
        } else {
            let contr = if f_refl < values[d] {
                lerp(0.5)
            } else {
                lerp(-0.5)
            };
            let f_contr = eval(&contr);
            if f_contr < values[d].min(f_refl) {
                simplex[d] = contr;
                values[d] = f_contr;
            } else {
                // shrink toward the best vertex
                let best = simplex[0].clone();
                for k in 1..=d {
                    for (xi, bi) in simplex[k].iter_mut().zip(&best) {
                        *xi = 0.5 * (*xi + bi);
                    }
                    clamp(&mut simplex[k], bounds);
                    values[k] = eval(&simplex[k]);
                }
            }
        }
    }

    let mut best = 0;
    for k in 1..=d {
        if values[k] < values[best] {
            best = k;
        }
    }
    (simplex[best].clone(), values[best])
}

fn restart_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs all restarts and returns the global best with the full log.
pub fn optimize(problem: &OptimizationProblem) -> OptimizationOutcome {
    let records: Vec<RestartRecord> = (0..problem.restarts)
        .into_par_iter()
        .map(|index| {
            let mut rng = restart_rng(problem.seed, index);
            let start: Vec<f64> = problem
                .bounds
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                .collect();
            let f0 = (problem.objective)(&start);
            if f0.is_nan() {
                return RestartRecord {
                    index,
                    start: start.clone(),
                    end: start,
                    value: f64::INFINITY,
                    failed: true,
                };
            }
            let (x1, _) = nelder_mead(problem.objective, &start, &problem.bounds, &problem.nm);
            // polish with a tighter simplex around the found point
            let polish = NmOptions {
                init_step: 0.01,
                ..problem.nm
            };
            let (x2, f2) = nelder_mead(problem.objective, &x1, &problem.bounds, &polish);
            RestartRecord {
                index,
                start,
                end: x2,
                value: f2,
                failed: false,
            }
        })
        .collect();

    let mut best: Option<&RestartRecord> = None;
    for r in &records {
        if r.failed {
            continue;
        }
        match best {
            None => best = Some(r),
            Some(b) if r.value < b.value => best = Some(r),
            _ => {}
        }
    }
    let best = best.expect("at least one restart must succeed");
    OptimizationOutcome {
        best_x: best.end.clone(),
        best_value: best.value,
        restarts: records.clone(),
    }
}
