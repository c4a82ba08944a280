//! Degeneration-model updates: ridge least-squares estimation of the blur
//! kernel from (low-res observation, current cube) and of the spectral
//! response from (multispectral observation, current cube).
//!
//! Both subproblems are convex quadratics. The kernel problem is solved over
//! its K^2 unknowns via conjugate gradients on the normal equations (default)
//! or plain gradient descent; the SRF problem has a closed form through a
//! Cholesky solve whenever the band count is small, with an iterative
//! fallback. Solutions are projected back onto the feasible set (nonnegative,
//! normalized) after the unconstrained solve.

use crate::cube::{BlurKernel, HsiCube, SrfMatrix};
use crate::degeneration::reflect;
use crate::error::{Error, Result};

/// Iterative solver choice for the unconstrained quadratic subproblems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    ConjugateGradient,
    GradientDescent,
}

/// Settings for one estimation step.
#[derive(Debug, Clone)]
pub struct EstimationConfig {
    /// Ridge weight on the kernel.
    pub kernel_ridge: f64,
    /// Ridge weight on the SRF.
    pub srf_ridge: f64,
    /// Solver iterations per step.
    pub inner_iters: usize,
    pub solver: Solver,
    /// Step size for the gradient-descent solver.
    pub lr: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            kernel_ridge: 1e-6,
            srf_ridge: 1e-6,
            inner_iters: 10,
            solver: Solver::ConjugateGradient,
            lr: 1e-4,
        }
    }
}

/// Band count at or below which the SRF solve uses the closed form.
const SRF_CLOSED_FORM_MAX_BANDS: usize = 64;

/// Consecutive objective increases treated as divergence.
const DIVERGENCE_PATIENCE: usize = 5;

// ---------------------------------------------------------------------------
// dense symmetric solves
// ---------------------------------------------------------------------------

/// Dense symmetric matrix in row-major storage.
struct SymmetricSystem {
    n: usize,
    /// `gram + ridge * I`.
    matrix: Vec<f64>,
    rhs: Vec<f64>,
    /// Constant completing the true objective `x' (G + rI) x - 2 x' rhs + c`.
    constant: f64,
}

impl SymmetricSystem {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let row = &self.matrix[i * self.n..(i + 1) * self.n];
            out[i] = row.iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
    }

    /// Objective value `x'Mx - 2 x'rhs + constant` (the data-fidelity plus
    /// ridge loss of the original problem).
    fn objective(&self, x: &[f64]) -> f64 {
        let mut mx = vec![0.0; self.n];
        self.apply(x, &mut mx);
        let quad: f64 = x.iter().zip(&mx).map(|(&a, &b)| a * b).sum();
        let lin: f64 = x.iter().zip(&self.rhs).map(|(&a, &b)| a * b).sum();
        quad - 2.0 * lin + self.constant
    }

    /// Conjugate gradients from `x0` for `iters` iterations. Returns the
    /// iterate and the objective trace (initial value plus one per
    /// iteration).
    fn solve_cg(&self, x0: &[f64], iters: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut x = x0.to_vec();
        let mut ax = vec![0.0; n];
        self.apply(&x, &mut ax);
        let mut r: Vec<f64> = self.rhs.iter().zip(&ax).map(|(&b, &a)| b - a).collect();
        let mut d = r.clone();
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        let mut trace = vec![self.objective(&x)];
        let mut ad = vec![0.0; n];
        for _ in 0..iters {
            if rr <= 1e-300 {
                trace.push(self.objective(&x));
                continue;
            }
            self.apply(&d, &mut ad);
            let dad: f64 = d.iter().zip(&ad).map(|(&a, &b)| a * b).sum();
            if dad <= 0.0 {
                // Numerically semi-definite direction; stop moving.
                trace.push(self.objective(&x));
                continue;
            }
            let alpha = rr / dad;
            for i in 0..n {
                x[i] += alpha * d[i];
                r[i] -= alpha * ad[i];
            }
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            let beta = rr_new / rr;
            for i in 0..n {
                d[i] = r[i] + beta * d[i];
            }
            rr = rr_new;
            trace.push(self.objective(&x));
        }
        (x, trace)
    }

    /// Plain gradient descent with fixed step size. Fails on sustained
    /// objective increase.
    fn solve_gd(&self, x0: &[f64], iters: usize, lr: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let mut x = x0.to_vec();
        let mut trace = vec![self.objective(&x)];
        let mut grad = vec![0.0; n];
        let mut rising = 0usize;
        for _ in 0..iters {
            self.apply(&x, &mut grad);
            for i in 0..n {
                grad[i] = 2.0 * (grad[i] - self.rhs[i]);
            }
            for i in 0..n {
                x[i] -= lr * grad[i];
            }
            let obj = self.objective(&x);
            if obj > trace.last().unwrap() + 1e-15 {
                rising += 1;
                if rising >= DIVERGENCE_PATIENCE {
                    trace.push(obj);
                    return Err(Error::solver(
                        format!(
                            "gradient descent diverged: objective rose {DIVERGENCE_PATIENCE} consecutive iterations (lr {lr})"
                        ),
                        trace,
                    ));
                }
            } else {
                rising = 0;
            }
            trace.push(obj);
        }
        Ok((x, trace))
    }
}

/// In-place Cholesky factorization of a symmetric positive-definite matrix.
/// Returns the lower factor, or an error naming the failing pivot.
fn cholesky(matrix: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = matrix[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::solver(
                        format!(
                            "normal matrix is singular at pivot {i} (value {sum:.3e}); increase the ridge weight"
                        ),
                        vec![],
                    ));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solve `L L' x = b` given the lower Cholesky factor.
fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

// ---------------------------------------------------------------------------
// kernel estimation
// ---------------------------------------------------------------------------

/// Assemble the normal equations of `min ||X - (k * Z) down_s||^2 + r ||k||^2`
/// over the flattened kernel. The observation enters only through the
/// right-hand side and the constant term.
fn kernel_system(x: &HsiCube, z: &HsiCube, s: usize, ksize: usize, ridge: f64) -> Result<SymmetricSystem> {
    let (bands, h, w) = z.shape();
    let (xb, oh, ow) = x.shape();
    if xb != bands || oh * s != h || ow * s != w {
        return Err(Error::shape(format!(
            "observation {:?} inconsistent with cube {:?} at scale {s}",
            x.shape(),
            z.shape()
        )));
    }
    if ksize % 2 == 0 || ksize > h.min(w) {
        return Err(Error::shape(format!(
            "kernel size {ksize} invalid for {h}x{w} cube"
        )));
    }
    let k2 = ksize * ksize;
    let half = (ksize / 2) as i64;
    let off = (s / 2) as i64;
    let rows = bands * oh * ow;

    // Explicit design matrix: each row holds the Z patch seen by one output
    // sample. Desk-scale sizes keep this small.
    let mut design = vec![0.0; rows * k2];
    let mut row = 0usize;
    for b in 0..bands {
        let src = z.band(b);
        for oi in 0..oh {
            let base_r = (oi * s) as i64 + off;
            for oj in 0..ow {
                let base_c = (oj * s) as i64 + off;
                let dst = &mut design[row * k2..(row + 1) * k2];
                for u in 0..ksize as i64 {
                    let r = reflect(base_r + u - half, h);
                    for v in 0..ksize as i64 {
                        let c = reflect(base_c + v - half, w);
                        dst[(u * ksize as i64 + v) as usize] = src[r * w + c];
                    }
                }
                row += 1;
            }
        }
    }

    let mut gram = vec![0.0; k2 * k2];
    let mut rhs = vec![0.0; k2];
    for (r, obs) in x.data().iter().enumerate() {
        let arow = &design[r * k2..(r + 1) * k2];
        for p in 0..k2 {
            let ap = arow[p];
            if ap == 0.0 {
                continue;
            }
            rhs[p] += ap * obs;
            let dst = &mut gram[p * k2..(p + 1) * k2];
            for (d, &aq) in dst[p..].iter_mut().zip(&arow[p..]) {
                *d += ap * aq;
            }
        }
    }
    // Mirror the upper triangle and add the ridge.
    for p in 0..k2 {
        for q in 0..p {
            gram[p * k2 + q] = gram[q * k2 + p];
        }
        gram[p * k2 + p] += ridge;
    }
    let constant: f64 = x.data().iter().map(|v| v * v).sum();
    Ok(SymmetricSystem { n: k2, matrix: gram, rhs, constant })
}

/// Unconstrained ridge solution for the kernel, before projection. Exposed
/// so the ridge-limit behavior is observable. Returns the flattened kernel
/// and the objective trace.
pub fn solve_kernel_raw(
    x: &HsiCube,
    z: &HsiCube,
    s: usize,
    k_init: &BlurKernel,
    config: &EstimationConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let system = kernel_system(x, z, s, k_init.size(), config.kernel_ridge)?;
    match config.solver {
        Solver::ConjugateGradient => Ok(system.solve_cg(k_init.weights(), config.inner_iters)),
        Solver::GradientDescent => system.solve_gd(k_init.weights(), config.inner_iters, config.lr),
    }
}

/// One kernel update: solve the ridge least-squares subproblem from `k_init`
/// for `config.inner_iters` iterations, then project onto the feasible set.
pub fn estimate_kernel_step(
    x: &HsiCube,
    z: &HsiCube,
    s: usize,
    k_init: &BlurKernel,
    config: &EstimationConfig,
) -> Result<BlurKernel> {
    let (raw, _trace) = solve_kernel_raw(x, z, s, k_init, config)?;
    project_kernel(&raw, k_init.size())
}

// ---------------------------------------------------------------------------
// SRF estimation
// ---------------------------------------------------------------------------

/// Normal-equation pieces shared by every SRF row: `G = Z Z' + r I` over
/// flattened bands, plus `rhs_j = Z y_j'` per output band.
fn srf_system(y: &HsiCube, z: &HsiCube, ridge: f64) -> Result<(Vec<f64>, Vec<f64>, usize, usize)> {
    let (bands, h, w) = z.shape();
    let (out_bands, yh, yw) = y.shape();
    if (yh, yw) != (h, w) {
        return Err(Error::shape(format!(
            "observation {}x{} does not match cube {}x{}",
            yh, yw, h, w
        )));
    }
    let n = h * w;
    let mut gram = vec![0.0; bands * bands];
    for i in 0..bands {
        let zi = z.band(i);
        for j in i..bands {
            let dot: f64 = zi.iter().zip(z.band(j)).map(|(&a, &b)| a * b).sum();
            gram[i * bands + j] = dot;
            gram[j * bands + i] = dot;
        }
    }
    for i in 0..bands {
        gram[i * bands + i] += ridge;
    }
    let mut rhs = vec![0.0; out_bands * bands];
    for j in 0..out_bands {
        let yj = y.band(j);
        for i in 0..bands {
            rhs[j * bands + i] = z.band(i).iter().zip(yj).map(|(&a, &b)| a * b).sum();
        }
    }
    let _ = n;
    Ok((gram, rhs, bands, out_bands))
}

/// Unconstrained ridge solution for the SRF, before projection: closed form
/// via Cholesky when the band count is small, otherwise iterative per row
/// from `p_init`. Returns the flattened row-major matrix.
pub fn solve_srf_raw(
    y: &HsiCube,
    z: &HsiCube,
    p_init: &SrfMatrix,
    config: &EstimationConfig,
) -> Result<Vec<f64>> {
    if p_init.in_bands() != z.bands() {
        return Err(Error::shape(format!(
            "SRF init expects {} bands, cube has {}",
            p_init.in_bands(),
            z.bands()
        )));
    }
    if p_init.out_bands() != y.bands() {
        return Err(Error::shape(format!(
            "SRF init produces {} bands, observation has {}",
            p_init.out_bands(),
            y.bands()
        )));
    }
    let (gram, rhs, bands, out_bands) = srf_system(y, z, config.srf_ridge)?;
    let mut solution = vec![0.0; out_bands * bands];
    if bands <= SRF_CLOSED_FORM_MAX_BANDS {
        let l = cholesky(&gram, bands)?;
        for j in 0..out_bands {
            let row = cholesky_solve(&l, bands, &rhs[j * bands..(j + 1) * bands]);
            solution[j * bands..(j + 1) * bands].copy_from_slice(&row);
        }
    } else {
        let constant = 0.0; // per-row constants are not needed for the iterate
        for j in 0..out_bands {
            let system = SymmetricSystem {
                n: bands,
                matrix: gram.clone(),
                rhs: rhs[j * bands..(j + 1) * bands].to_vec(),
                constant,
            };
            let x0 = p_init.row(j);
            let row = match config.solver {
                Solver::ConjugateGradient => system.solve_cg(x0, config.inner_iters).0,
                Solver::GradientDescent => system.solve_gd(x0, config.inner_iters, config.lr)?.0,
            };
            solution[j * bands..(j + 1) * bands].copy_from_slice(&row);
        }
    }
    Ok(solution)
}

/// One SRF update: ridge least squares then per-row feasibility projection.
pub fn estimate_srf_step(
    y: &HsiCube,
    z: &HsiCube,
    p_init: &SrfMatrix,
    config: &EstimationConfig,
) -> Result<SrfMatrix> {
    let raw = solve_srf_raw(y, z, p_init, config)?;
    project_srf(&raw, p_init.out_bands(), p_init.in_bands())
}

// ---------------------------------------------------------------------------
// feasibility projections
// ---------------------------------------------------------------------------

fn project_simplex_like(values: &mut [f64]) {
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let sum: f64 = values.iter().sum();
    if sum <= 0.0 {
        let uniform = 1.0 / values.len() as f64;
        values.iter_mut().for_each(|v| *v = uniform);
    } else {
        values.iter_mut().for_each(|v| *v /= sum);
    }
}

/// Clamp negatives to zero and renormalize globally; an all-zero input maps
/// to the uniform kernel.
pub fn project_kernel(raw: &[f64], size: usize) -> Result<BlurKernel> {
    if raw.len() != size * size {
        return Err(Error::shape(format!(
            "raw kernel length {} != {size}x{size}",
            raw.len()
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("raw kernel".into()));
    }
    let mut weights = raw.to_vec();
    project_simplex_like(&mut weights);
    BlurKernel::new(size, weights)
}

/// Clamp negatives to zero and renormalize each row; an all-zero row maps to
/// the uniform row.
pub fn project_srf(raw: &[f64], out_bands: usize, in_bands: usize) -> Result<SrfMatrix> {
    if raw.len() != out_bands * in_bands {
        return Err(Error::shape(format!(
            "raw SRF length {} != {out_bands}x{in_bands}",
            raw.len()
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("raw SRF".into()));
    }
    let mut weights = raw.to_vec();
    for j in 0..out_bands {
        project_simplex_like(&mut weights[j * in_bands..(j + 1) * in_bands]);
    }
    SrfMatrix::new(out_bands, in_bands, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degeneration::{gaussian_kernel, spatial_degrade, spectral_degrade, GaussianSpec};
    use crate::rng::Rng;
    use approx::assert_relative_eq;

    fn random_cube(bands: usize, h: usize, w: usize, seed: u64) -> HsiCube {
        let mut rng = Rng::new(seed);
        HsiCube::from_fn(bands, h, w, |_, _, _| rng.uniform()).unwrap()
    }

    fn random_srf(out_bands: usize, in_bands: usize, seed: u64) -> SrfMatrix {
        let mut rng = Rng::new(seed);
        let mut weights = vec![0.0; out_bands * in_bands];
        for j in 0..out_bands {
            let row = &mut weights[j * in_bands..(j + 1) * in_bands];
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = rng.uniform() + 0.05;
                sum += *v;
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        SrfMatrix::new(out_bands, in_bands, weights).unwrap()
    }

    // ---- kernel ----

    #[test]
    fn kernel_generate_and_recover() {
        let z = random_cube(8, 32, 32, 1);
        let truth = gaussian_kernel(&GaussianSpec { size: 7, sigma: 1.4 }).unwrap();
        let x = spatial_degrade(&z, &truth, 2).unwrap();
        let config = EstimationConfig {
            kernel_ridge: 0.0,
            inner_iters: 500,
            ..EstimationConfig::default()
        };
        let init = BlurKernel::delta(7).unwrap();
        let estimated = estimate_kernel_step(&x, &z, 2, &init, &config).unwrap();
        let err = estimated.relative_error(&truth).unwrap();
        assert!(err < 1e-2, "kernel recovery error {err}");
    }

    #[test]
    fn delta_kernel_is_fixed_point_when_z_equals_x() {
        let z = random_cube(3, 12, 12, 2);
        let config = EstimationConfig {
            kernel_ridge: 0.0,
            inner_iters: 50,
            ..EstimationConfig::default()
        };
        let init = BlurKernel::delta(5).unwrap();
        let estimated = estimate_kernel_step(&z, &z, 1, &init, &config).unwrap();
        let err = estimated.relative_error(&init).unwrap();
        assert!(err < 1e-10, "delta not a fixed point: {err}");
    }

    #[test]
    fn huge_ridge_shrinks_raw_solution_toward_zero() {
        let z = random_cube(3, 16, 16, 3);
        let truth = gaussian_kernel(&GaussianSpec { size: 5, sigma: 1.0 }).unwrap();
        let x = spatial_degrade(&z, &truth, 2).unwrap();
        let config = EstimationConfig {
            kernel_ridge: 1e6,
            inner_iters: 200,
            ..EstimationConfig::default()
        };
        let init = BlurKernel::delta(5).unwrap();
        let (raw, _) = solve_kernel_raw(&x, &z, 2, &init, &config).unwrap();
        let norm: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-2, "raw norm {norm} not shrunk by ridge");
        // Post-projection the near-uniform tiny values become near-uniform.
        let projected = estimate_kernel_step(&x, &z, 2, &init, &config).unwrap();
        let uniform = 1.0 / 25.0;
        for &wv in projected.weights() {
            assert!((wv - uniform).abs() < 0.5 * uniform, "weight {wv} far from uniform");
        }
    }

    #[test]
    fn cg_objective_is_monotone_nonincreasing() {
        let z = random_cube(4, 16, 16, 4);
        let truth = gaussian_kernel(&GaussianSpec { size: 5, sigma: 1.2 }).unwrap();
        let x = spatial_degrade(&z, &truth, 2).unwrap();
        let config = EstimationConfig {
            kernel_ridge: 1e-8,
            inner_iters: 40,
            ..EstimationConfig::default()
        };
        let init = BlurKernel::delta(5).unwrap();
        let (_, trace) = solve_kernel_raw(&x, &z, 2, &init, &config).unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "objective rose: {pair:?}");
        }
    }

    #[test]
    fn gd_objective_is_monotone_with_sane_lr() {
        let z = random_cube(2, 16, 16, 5);
        let truth = gaussian_kernel(&GaussianSpec { size: 5, sigma: 0.9 }).unwrap();
        let x = spatial_degrade(&z, &truth, 2).unwrap();
        let config = EstimationConfig {
            kernel_ridge: 1e-8,
            inner_iters: 100,
            solver: Solver::GradientDescent,
            lr: 1e-4,
            ..EstimationConfig::default()
        };
        let init = BlurKernel::delta(5).unwrap();
        let (_, trace) = solve_kernel_raw(&x, &z, 2, &init, &config).unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "objective rose: {pair:?}");
        }
    }

    #[test]
    fn gd_divergence_is_reported_with_trace() {
        let z = random_cube(2, 16, 16, 6);
        let truth = gaussian_kernel(&GaussianSpec { size: 5, sigma: 0.9 }).unwrap();
        let x = spatial_degrade(&z, &truth, 2).unwrap();
        let config = EstimationConfig {
            kernel_ridge: 0.0,
            inner_iters: 100,
            solver: Solver::GradientDescent,
            lr: 10.0, // far beyond the stability bound
            ..EstimationConfig::default()
        };
        let init = BlurKernel::delta(5).unwrap();
        match solve_kernel_raw(&x, &z, 2, &init, &config) {
            Err(Error::Solver { trace, .. }) => assert!(trace.len() >= DIVERGENCE_PATIENCE),
            other => panic!("expected solver divergence, got {other:?}"),
        }
    }

    #[test]
    fn recovery_improves_with_iteration_budget() {
        let z = random_cube(4, 24, 24, 7);
        let truth = gaussian_kernel(&GaussianSpec { size: 7, sigma: 1.3 }).unwrap();
        let x = spatial_degrade(&z, &truth, 2).unwrap();
        let init = BlurKernel::delta(7).unwrap();
        let mut errors = Vec::new();
        for budget in [50, 200, 500] {
            // Step size below the stability bound 1/lambda_max of this
            // problem's Gram matrix, slow enough that the budget matters.
            let config = EstimationConfig {
                kernel_ridge: 0.0,
                inner_iters: budget,
                solver: Solver::GradientDescent,
                lr: 4e-5,
                ..EstimationConfig::default()
            };
            let estimated = estimate_kernel_step(&x, &z, 2, &init, &config).unwrap();
            errors.push(estimated.relative_error(&truth).unwrap());
        }
        assert!(
            errors[0] >= errors[1] && errors[1] >= errors[2],
            "errors not non-increasing over budgets: {errors:?}"
        );
        assert!(errors[2] < errors[0], "no strict improvement: {errors:?}");
    }

    // ---- SRF ----

    #[test]
    fn srf_identity_recovery() {
        let z = random_cube(6, 10, 10, 8);
        let config = EstimationConfig { srf_ridge: 0.0, ..EstimationConfig::default() };
        let init = SrfMatrix::identity(6).unwrap();
        let estimated = estimate_srf_step(&z, &z, &init, &config).unwrap();
        let err = estimated.relative_error(&init).unwrap();
        assert!(err < 1e-8, "identity recovery error {err}");
    }

    #[test]
    fn srf_generate_and_recover() {
        let z = random_cube(16, 12, 12, 9);
        let truth = random_srf(4, 16, 10);
        let y = spectral_degrade(&z, &truth).unwrap();
        let config = EstimationConfig { srf_ridge: 1e-8, ..EstimationConfig::default() };
        let init = SrfMatrix::boxcar(4, 16).unwrap();
        let estimated = estimate_srf_step(&y, &z, &init, &config).unwrap();
        let err = estimated.relative_error(&truth).unwrap();
        assert!(err < 1e-6, "SRF recovery error {err}");
    }

    #[test]
    fn srf_huge_ridge_shrinks_raw_solution() {
        let z = random_cube(6, 10, 10, 11);
        let truth = random_srf(2, 6, 12);
        let y = spectral_degrade(&z, &truth).unwrap();
        let config = EstimationConfig { srf_ridge: 1e9, ..EstimationConfig::default() };
        let init = SrfMatrix::boxcar(2, 6).unwrap();
        let raw = solve_srf_raw(&y, &z, &init, &config).unwrap();
        assert!(raw.iter().all(|v| v.abs() < 1e-3), "raw SRF not shrunk: {raw:?}");
    }

    #[test]
    fn srf_singular_system_suggests_ridge() {
        // A rank-deficient cube: two identical bands make Z Z' singular.
        let base = random_cube(1, 8, 8, 13);
        let z = HsiCube::from_fn(2, 8, 8, |_, r, c| base.get(0, r, c)).unwrap();
        let y = z.clone();
        let config = EstimationConfig { srf_ridge: 0.0, ..EstimationConfig::default() };
        let init = SrfMatrix::identity(2).unwrap();
        match estimate_srf_step(&y, &z, &init, &config) {
            Err(Error::Solver { message, .. }) => {
                assert!(message.contains("ridge"), "message: {message}")
            }
            other => panic!("expected singular-system error, got {other:?}"),
        }
    }

    #[test]
    fn estimation_is_deterministic() {
        let z = random_cube(4, 16, 16, 14);
        let truth = gaussian_kernel(&GaussianSpec { size: 5, sigma: 1.0 }).unwrap();
        let x = spatial_degrade(&z, &truth, 2).unwrap();
        let config = EstimationConfig::default();
        let init = BlurKernel::delta(5).unwrap();
        let a = estimate_kernel_step(&x, &z, 2, &init, &config).unwrap();
        let b = estimate_kernel_step(&x, &z, 2, &init, &config).unwrap();
        assert_eq!(a.weights(), b.weights());
    }

    // ---- projections ----

    #[test]
    fn projections_are_idempotent_on_feasible_input() {
        let k = gaussian_kernel(&GaussianSpec { size: 3, sigma: 0.7 }).unwrap();
        let projected = project_kernel(k.weights(), 3).unwrap();
        for (a, b) in projected.weights().iter().zip(k.weights()) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
        let p = random_srf(2, 5, 15);
        let projected = project_srf(p.weights(), 2, 5).unwrap();
        for (a, b) in projected.weights().iter().zip(p.weights()) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn projection_clamps_and_renormalizes() {
        let p = project_srf(&[-1.0, 1.0, 1.0], 1, 3).unwrap();
        assert_eq!(p.row(0), &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn projection_maps_zeros_to_uniform() {
        let k = project_kernel(&[0.0; 9], 3).unwrap();
        assert_eq!(k.weights(), &[1.0 / 9.0; 9]);
        let p = project_srf(&[0.0; 4], 1, 4).unwrap();
        assert_eq!(p.row(0), &[0.25, 0.25, 0.25, 0.25]);
    }
}
