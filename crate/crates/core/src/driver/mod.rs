//! Orchestration of blind fusion runs: the alternating optimization loop,
//! the separate and joint ablation modes, and meta pre-training of the
//! reconstruction network.
//!
//! Budget accounting: one schedule defines `outer_iters * inner_iters`
//! allotted iterations for each of the three variable groups (kernel, SRF,
//! reconstruction parameters). Every mode consumes exactly that allotment —
//! alternating spends it in interleaved windows, separate spends each
//! group's allotment in one block, joint spends all groups simultaneously
//! one step at a time. A solver that happens to finish its subproblem early
//! (the closed-form SRF solve) still consumes its allotment; fairness is
//! defined on allotted iterations, not on floating-point work.

mod meta;

pub use meta::{
    adaptation_psnr_curve, make_meta_tasks, maml_pretrain, CropRect, MetaConfig, MetaTask,
    SamplerRanges,
};

use crate::autodiff::{
    adam_step, AdamConfig, AdamState, Graph, NetworkParams, Op, Tensor,
};
use crate::cube::{BlurKernel, HsiCube, SrfMatrix};
use crate::degeneration::{spatial_degrade, spectral_degrade};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_kernel_step, estimate_srf_step, project_kernel, project_srf, EstimationConfig,
};
use crate::metrics::MetricReport;
use crate::reconstruction::{build_recon_graph, Backbone, DipProblem, ReconNet};
use std::collections::BTreeMap;

/// Iteration schedule and learning rates for one fusion run.
#[derive(Debug, Clone, Copy)]
pub struct Schedule {
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// Step size for the degeneration parameters (kernel and SRF).
    pub lr_degeneration: f64,
    /// Step size for the reconstruction network.
    pub lr_reconstruction: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            outer_iters: 40,
            inner_iters: 10,
            lr_degeneration: 1e-4,
            lr_reconstruction: 1e-3,
        }
    }
}

impl Schedule {
    pub fn total_budget(&self) -> usize {
        self.outer_iters * self.inner_iters
    }
}

/// Optimization manner under comparison in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Estimate the operators once from the rough estimate, then reconstruct.
    Separate,
    /// One loop updating kernel, SRF, and network together every step.
    Joint,
    /// Interleaved convex operator updates and reconstruction windows.
    Alternating,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Separate => "Separate",
            Mode::Joint => "Joint",
            Mode::Alternating => "Alternating",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "separate" | "sep" => Ok(Mode::Separate),
            "joint" => Ok(Mode::Joint),
            "alternating" | "alter" => Ok(Mode::Alternating),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

/// Reference data for error traces; every field optional.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub cube: Option<HsiCube>,
    pub kernel: Option<BlurKernel>,
    pub srf: Option<SrfMatrix>,
}

/// One per-outer-iteration trace entry.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub outer_iter: usize,
    /// Mean absolute data residuals under the current operators. Their sum
    /// is the reconstruction objective, which is what makes the
    /// near-monotone descent of the trace checkable.
    pub residual_x: f64,
    pub residual_y: f64,
    /// Relative L2 kernel error vs ground truth, when available.
    pub kernel_error: Option<f64>,
    /// Relative Frobenius SRF error vs ground truth, when available.
    pub srf_error: Option<f64>,
    pub metrics: Option<MetricReport>,
}

/// Full per-run trace plus consumed budget allotments.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub kernel_units: usize,
    pub srf_units: usize,
    pub recon_steps: usize,
}

impl RunTrace {
    pub const CSV_HEADER: &'static str =
        "outer_iter,residual_x,residual_y,kernel_error,srf_error,rmse,psnr,sam,ssim";

    /// One CSV row per outer iteration; unavailable columns stay empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
            let m = r
                .metrics
                .map(|m| m.to_csv_row())
                .unwrap_or_else(|| ",,,".to_string());
            out.push_str(&format!(
                "{},{:.6e},{:.6e},{},{},{}\n",
                r.outer_iter,
                r.residual_x,
                r.residual_y,
                opt(r.kernel_error),
                opt(r.srf_error),
                m
            ));
        }
        out
    }
}

/// Result of one fusion run.
pub struct FusionOutcome {
    pub z: HsiCube,
    pub kernel: BlurKernel,
    pub srf: SrfMatrix,
    pub recon_params: NetworkParams,
    pub trace: RunTrace,
}

/// Relative L2 error between kernels of possibly different declared
/// supports: both are zero-embedded onto the larger canvas first.
pub fn kernel_error(estimated: &BlurKernel, truth: &BlurKernel) -> Result<f64> {
    let size = estimated.size().max(truth.size());
    let a = estimated.embed(size)?;
    let b = truth.embed(size)?;
    a.relative_error(&b)
}

/// Mean absolute residual of the spatial observation under a candidate
/// kernel.
fn residual_after(x: &HsiCube, z: &HsiCube, scale: usize, kernel: &BlurKernel) -> Result<f64> {
    let r = spatial_degrade(z, kernel, scale)?.sub(x)?;
    Ok(r.norm_l1() / r.len() as f64)
}

/// Mean absolute residual of the spectral observation under a candidate SRF.
fn srf_residual_after(y: &HsiCube, z: &HsiCube, srf: &SrfMatrix) -> Result<f64> {
    let r = spectral_degrade(z, srf)?.sub(y)?;
    Ok(r.norm_l1() / r.len() as f64)
}

/// The DIP data objective evaluated directly on a cube: mean absolute
/// residuals of both observations under the given operators.
fn data_l1_loss(
    x: &HsiCube,
    y: &HsiCube,
    kernel: &BlurKernel,
    srf: &SrfMatrix,
    scale: usize,
    z: &HsiCube,
) -> Result<f64> {
    let rx = spatial_degrade(z, kernel, scale)?.sub(x)?;
    let ry = spectral_degrade(z, srf)?.sub(y)?;
    Ok(rx.norm_l1() / rx.len() as f64 + ry.norm_l1() / ry.len() as f64)
}

fn make_record(
    outer_iter: usize,
    x: &HsiCube,
    y: &HsiCube,
    scale: usize,
    z: &HsiCube,
    kernel: &BlurKernel,
    srf: &SrfMatrix,
    gt: Option<&GroundTruth>,
) -> Result<TraceRecord> {
    let rx = spatial_degrade(z, kernel, scale)?.sub(x)?;
    let ry = spectral_degrade(z, srf)?.sub(y)?;
    let residual_x = rx.norm_l1() / rx.len() as f64;
    let residual_y = ry.norm_l1() / ry.len() as f64;
    let mut record = TraceRecord {
        outer_iter,
        residual_x,
        residual_y,
        kernel_error: None,
        srf_error: None,
        metrics: None,
    };
    if let Some(gt) = gt {
        if let Some(k_true) = &gt.kernel {
            record.kernel_error = Some(kernel_error(kernel, k_true)?);
        }
        if let Some(p_true) = &gt.srf {
            record.srf_error = Some(srf.relative_error(p_true)?);
        }
        if let Some(cube) = &gt.cube {
            record.metrics = Some(MetricReport::compute(cube, z)?);
        }
    }
    Ok(record)
}

/// Run one blind fusion reconstruction.
///
/// The backbone produces the rough estimate once; the chosen mode then
/// spends the schedule's budget estimating the degeneration operators and
/// fitting the reconstruction network. `ground_truth`, when given, enriches
/// the trace with operator errors and quality metrics; it never influences
/// the optimization.
#[allow(clippy::too_many_arguments)]
pub fn run_alternating(
    x: &HsiCube,
    y: &HsiCube,
    scale: usize,
    backbone: &Backbone,
    recon_init: &ReconNet,
    kernel_init: &BlurKernel,
    srf_init: &SrfMatrix,
    schedule: &Schedule,
    est_base: &EstimationConfig,
    mode: Mode,
    ground_truth: Option<&GroundTruth>,
) -> Result<FusionOutcome> {
    if schedule.outer_iters == 0 || schedule.inner_iters == 0 {
        return Err(Error::param("schedule iterations must be >= 1"));
    }
    let zhat = backbone.forward(x, y)?;
    match mode {
        Mode::Alternating => run_alternating_mode(
            x, y, scale, &zhat, recon_init, kernel_init, srf_init, schedule, est_base,
            ground_truth,
        ),
        Mode::Separate => run_separate_mode(
            x, y, scale, &zhat, recon_init, kernel_init, srf_init, schedule, est_base,
            ground_truth,
        ),
        Mode::Joint => run_joint_mode(
            x, y, scale, &zhat, recon_init, kernel_init, srf_init, schedule, ground_truth,
        ),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_alternating_mode(
    x: &HsiCube,
    y: &HsiCube,
    scale: usize,
    zhat: &HsiCube,
    recon_init: &ReconNet,
    kernel_init: &BlurKernel,
    srf_init: &SrfMatrix,
    schedule: &Schedule,
    est_base: &EstimationConfig,
    gt: Option<&GroundTruth>,
) -> Result<FusionOutcome> {
    let mut kernel = kernel_init.clone();
    let mut srf = srf_init.clone();
    let mut z = zhat.clone();
    let mut params = recon_init.params.clone();
    let adam_cfg = AdamConfig::new(schedule.lr_reconstruction);
    let est = EstimationConfig { inner_iters: schedule.inner_iters, ..est_base.clone() };

    let mut problem = DipProblem::new(x, y, &kernel, &srf, scale, zhat, recon_init)?;
    let mut trace = RunTrace::default();

    for outer in 1..=schedule.outer_iters {
        // Convex operator updates from the current reconstruction,
        // warm-started at the previous estimates. The feasibility projection
        // can push a ridge solution past the incumbent's data fit, so a
        // candidate is accepted only when it does not worsen its own
        // residual at the current reconstruction.
        let candidate = estimate_kernel_step(x, &z, scale, &kernel, &est)?;
        if residual_after(x, &z, scale, &candidate)? <= residual_after(x, &z, scale, &kernel)? {
            kernel = candidate;
        }
        let candidate = estimate_srf_step(y, &z, &srf, &est)?;
        if srf_residual_after(y, &z, &candidate)? <= srf_residual_after(y, &z, &srf)? {
            srf = candidate;
        }
        trace.kernel_units += schedule.inner_iters;
        trace.srf_units += schedule.inner_iters;

        problem.set_operators(&kernel, &srf)?;
        // Each inner window is an independent optimization: the parameters
        // warm-start from the previous outer iterate but the moments do not,
        // since the loss surface just changed under them. The incumbent
        // reconstruction competes under the new operators, so a window that
        // fails to improve on it leaves z untouched.
        let mut adam = AdamState::new();
        let mut window_best = data_l1_loss(x, y, &kernel, &srf, scale, &z)?;
        let mut window_z = None;
        for _ in 0..schedule.inner_iters {
            let (loss, iterate) = problem.step(&mut params, &mut adam, &adam_cfg)?;
            if loss < window_best {
                window_best = loss;
                window_z = Some(iterate);
            }
        }
        trace.recon_steps += schedule.inner_iters;
        // The window's final parameters have not been evaluated yet.
        let (final_loss, final_z) = problem.evaluate(&params)?;
        if final_loss < window_best {
            window_z = Some(final_z);
        }
        if let Some(improved) = window_z {
            z = improved;
        }

        trace.records.push(make_record(outer, x, y, scale, &z, &kernel, &srf, gt)?);
    }
    Ok(FusionOutcome { z, kernel, srf, recon_params: params, trace })
}

#[allow(clippy::too_many_arguments)]
fn run_separate_mode(
    x: &HsiCube,
    y: &HsiCube,
    scale: usize,
    zhat: &HsiCube,
    recon_init: &ReconNet,
    kernel_init: &BlurKernel,
    srf_init: &SrfMatrix,
    schedule: &Schedule,
    est_base: &EstimationConfig,
    gt: Option<&GroundTruth>,
) -> Result<FusionOutcome> {
    let budget = schedule.total_budget();
    // Operators estimated once, from the rough estimate only.
    let est = EstimationConfig { inner_iters: budget, ..est_base.clone() };
    let kernel = estimate_kernel_step(x, zhat, scale, kernel_init, &est)?;
    let srf = estimate_srf_step(y, zhat, srf_init, &est)?;

    let mut trace = RunTrace::default();
    trace.kernel_units = budget;
    trace.srf_units = budget;

    let problem = DipProblem::new(x, y, &kernel, &srf, scale, zhat, recon_init)?;
    let mut params = recon_init.params.clone();
    let mut adam = AdamState::new();
    let adam_cfg = AdamConfig::new(schedule.lr_reconstruction);

    let mut best = f64::INFINITY;
    let mut z = zhat.clone();
    for outer in 1..=schedule.outer_iters {
        for _ in 0..schedule.inner_iters {
            let (loss, iterate) = problem.step(&mut params, &mut adam, &adam_cfg)?;
            if loss < best {
                best = loss;
                z = iterate;
            }
        }
        trace.recon_steps += schedule.inner_iters;
        trace.records.push(make_record(outer, x, y, scale, &z, &kernel, &srf, gt)?);
    }
    let (final_loss, final_z) = problem.evaluate(&params)?;
    if final_loss < best {
        z = final_z;
        let last = trace.records.last_mut().expect("at least one outer iteration");
        *last = make_record(schedule.outer_iters, x, y, scale, &z, &kernel, &srf, gt)?;
    }
    Ok(FusionOutcome { z, kernel, srf, recon_params: params, trace })
}

#[allow(clippy::too_many_arguments)]
fn run_joint_mode(
    x: &HsiCube,
    y: &HsiCube,
    scale: usize,
    zhat: &HsiCube,
    recon_init: &ReconNet,
    kernel_init: &BlurKernel,
    srf_init: &SrfMatrix,
    schedule: &Schedule,
    gt: Option<&GroundTruth>,
) -> Result<FusionOutcome> {
    recon_init.check_operators(kernel_init, srf_init)?;
    let (bands, h, w) = zhat.shape();
    let ksize = kernel_init.size();
    let klen = ksize * ksize;
    let out_bands = srf_init.out_bands();
    let plen = out_bands * bands;

    // One graph over every variable group: the kernel and SRF live as
    // parameters, feeding both the degradation layers and (flattened) the
    // guidance branches.
    let mut g = Graph::new();
    let zin = g.input("zhat", &[bands, h, w]);
    let kparam = g.param("joint.kernel", &[ksize, ksize]);
    let pparam = g.param("joint.srf", &[out_bands, bands]);
    let kvec = g.op(Op::Reshape { input: kparam, shape: vec![klen] })?;
    let pvec = g.op(Op::Reshape { input: pparam, shape: vec![plen] })?;
    let z_node = build_recon_graph(&mut g, &recon_init.config, bands, zin, kvec, klen, pvec, plen)?;
    let x_pred = g.op(Op::SpatialDegrade { input: z_node, kernel: kparam, factor: scale })?;
    let y_pred = g.op(Op::SpectralDegrade { input: z_node, srf: pparam })?;
    let x_obs = g.input("x_obs", &[bands, h / scale, w / scale]);
    let y_obs = g.input("y_obs", &[out_bands, h, w]);
    let lx = g.op(Op::MaeLoss { pred: x_pred, target: x_obs })?;
    let ly = g.op(Op::MaeLoss { pred: y_pred, target: y_obs })?;
    let loss_node = g.op(Op::Add { a: lx, b: ly })?;

    let mut inputs = BTreeMap::new();
    inputs.insert("zhat".to_string(), Tensor::from_cube(zhat));
    inputs.insert("x_obs".to_string(), Tensor::from_cube(x));
    inputs.insert("y_obs".to_string(), Tensor::from_cube(y));

    let mut params = recon_init.params.clone();
    params.insert(
        "joint.kernel".to_string(),
        Tensor::from_vec(vec![ksize, ksize], kernel_init.weights().to_vec())?,
    );
    params.insert(
        "joint.srf".to_string(),
        Tensor::from_vec(vec![out_bands, bands], srf_init.weights().to_vec())?,
    );

    let mut adam_cfg = AdamConfig::new(schedule.lr_reconstruction);
    adam_cfg.lr_overrides.insert("joint.kernel".to_string(), schedule.lr_degeneration);
    adam_cfg.lr_overrides.insert("joint.srf".to_string(), schedule.lr_degeneration);
    let mut adam = AdamState::new();

    let mut trace = RunTrace::default();
    let mut best = f64::INFINITY;
    let mut z = zhat.clone();
    for outer in 1..=schedule.outer_iters {
        for _ in 0..schedule.inner_iters {
            let tape = g.forward(&params, &inputs)?;
            let loss = tape.value(loss_node).data()[0];
            if !loss.is_finite() {
                return Err(Error::solver("joint loss became non-finite", vec![loss]));
            }
            if loss < best {
                best = loss;
                z = tape.value(z_node).to_cube()?;
            }
            let grads = g.backward(&tape, loss_node)?.by_param;
            adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
        }
        trace.kernel_units += schedule.inner_iters;
        trace.srf_units += schedule.inner_iters;
        trace.recon_steps += schedule.inner_iters;

        // Project the operator iterates onto the feasible set at the
        // alternation cadence, writing the projection back into the run.
        let kernel = project_kernel(params["joint.kernel"].data(), ksize)?;
        let srf = project_srf(params["joint.srf"].data(), out_bands, bands)?;
        params.insert(
            "joint.kernel".to_string(),
            Tensor::from_vec(vec![ksize, ksize], kernel.weights().to_vec())?,
        );
        params.insert(
            "joint.srf".to_string(),
            Tensor::from_vec(vec![out_bands, bands], srf.weights().to_vec())?,
        );
        trace.records.push(make_record(outer, x, y, scale, &z, &kernel, &srf, gt)?);
    }

    let kernel = project_kernel(params["joint.kernel"].data(), ksize)?;
    let srf = project_srf(params["joint.srf"].data(), out_bands, bands)?;
    params.remove("joint.kernel");
    params.remove("joint.srf");
    Ok(FusionOutcome { z, kernel, srf, recon_params: params, trace })
}
