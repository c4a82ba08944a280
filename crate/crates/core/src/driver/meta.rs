//! Meta pre-training of the reconstruction network.
//!
//! Tasks are synthesized scenes with kernels and SRF perturbations drawn
//! from the pre-training sampler ranges. Each task's pixels split into
//! disjoint support and query crops; an episode estimates the operators once
//! from the support crop, takes one task-level gradient step on the support
//! loss, and contributes the query loss gradient at the adapted parameters
//! to the meta update (first-order).

use crate::autodiff::{adam_step, AdamConfig, AdamState, NetworkParams, Tensor};
use crate::cube::{BlurKernel, HsiCube, SrfMatrix};
use crate::degeneration::{simulate_pair, DegenerationConfig, GaussianSpec, KernelSpec};
use crate::error::{Error, Result};
use crate::estimation::{estimate_kernel_step, estimate_srf_step, EstimationConfig};
use crate::metrics::psnr;
use crate::reconstruction::{Backbone, DipProblem, ReconNet};
use crate::rng::Rng;

/// Degeneration sampler ranges for meta-task synthesis.
#[derive(Debug, Clone, Copy)]
pub struct SamplerRanges {
    /// Odd kernel sizes drawn uniformly from this inclusive range.
    pub kernel_size: (usize, usize),
    pub sigma: (f64, f64),
    pub srf_c: (f64, f64),
}

impl Default for SamplerRanges {
    fn default() -> Self {
        SamplerRanges { kernel_size: (5, 15), sigma: (0.5, 2.0), srf_c: (5e-3, 8e-3) }
    }
}

/// Axis-aligned pixel rectangle in high-resolution coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRect {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl CropRect {
    pub fn disjoint_from(&self, other: &CropRect) -> bool {
        self.col0 + self.width <= other.col0
            || other.col0 + other.width <= self.col0
            || self.row0 + self.height <= other.row0
            || other.row0 + other.height <= self.row0
    }
}

/// One meta-learning task: a synthesized observation pair, its ground truth,
/// and the support/query split.
#[derive(Debug, Clone)]
pub struct MetaTask {
    pub truth: HsiCube,
    pub lr_hsi: HsiCube,
    pub hr_msi: HsiCube,
    pub kernel_true: BlurKernel,
    pub srf_true: SrfMatrix,
    pub scale: usize,
    pub support: CropRect,
    pub query: CropRect,
}

impl MetaTask {
    /// Crop all three cubes consistently to a rectangle; the rectangle must
    /// be scale-aligned.
    pub fn crop(&self, rect: &CropRect) -> Result<(HsiCube, HsiCube, HsiCube)> {
        let s = self.scale;
        let truth = self.truth.crop(rect.row0, rect.col0, rect.height, rect.width)?;
        let msi = self.hr_msi.crop(rect.row0, rect.col0, rect.height, rect.width)?;
        let hsi = self
            .lr_hsi
            .crop(rect.row0 / s, rect.col0 / s, rect.height / s, rect.width / s)?;
        Ok((truth, hsi, msi))
    }
}

/// Sample `count` tasks from the given high-resolution cubes (used
/// round-robin). Each task draws an odd Gaussian kernel size, a standard
/// deviation, and an SRF perturbation coefficient from `ranges`, simulates
/// the observation pair, and splits the scene into left (support) and right
/// (query) halves.
pub fn make_meta_tasks(
    hr_cubes: &[HsiCube],
    srf_base: &SrfMatrix,
    scale: usize,
    snr_db: f64,
    ranges: &SamplerRanges,
    count: usize,
    rng: &Rng,
) -> Result<Vec<MetaTask>> {
    if count == 0 {
        return Err(Error::param("task count must be >= 1"));
    }
    if hr_cubes.is_empty() {
        return Err(Error::param("need at least one source cube"));
    }
    let (lo, hi) = ranges.kernel_size;
    if lo % 2 == 0 || hi % 2 == 0 || lo > hi {
        return Err(Error::param(format!("kernel size range [{lo}, {hi}] must be odd")));
    }
    let mut tasks = Vec::with_capacity(count);
    for index in 0..count {
        let cube = &hr_cubes[index % hr_cubes.len()];
        let (_, h, w) = cube.shape();
        let half_w = w / 2;
        if half_w % scale != 0 || h % scale != 0 || half_w < 2 * scale {
            return Err(Error::shape(format!(
                "cube {h}x{w} too small to crop into scale-{scale} halves"
            )));
        }
        let mut task_rng = rng.derive(0x4d45_5441 ^ index as u64); // "META"
        let steps = (hi - lo) / 2;
        let size = lo + 2 * task_rng.range_int(0, steps as i64) as usize;
        let sigma = task_rng.range(ranges.sigma.0, ranges.sigma.1);
        let c = task_rng.range(ranges.srf_c.0, ranges.srf_c.1);
        let cfg = DegenerationConfig {
            scale,
            kernel_spec: KernelSpec::Gaussian(GaussianSpec { size, sigma }),
            srf_base: srf_base.clone(),
            srf_perturb_c: c,
            snr_hsi_db: snr_db,
            snr_msi_db: snr_db,
        };
        let pair = simulate_pair(cube, &cfg, &task_rng)?;
        let support = CropRect { row0: 0, col0: 0, height: h, width: half_w };
        let query = CropRect { row0: 0, col0: half_w, height: h, width: w - half_w };
        tasks.push(MetaTask {
            truth: cube.clone(),
            lr_hsi: pair.lr_hsi,
            hr_msi: pair.hr_msi,
            kernel_true: pair.kernel_true,
            srf_true: pair.srf_true,
            scale,
            support,
            query,
        });
    }
    Ok(tasks)
}

/// Meta pre-training settings.
#[derive(Debug, Clone)]
pub struct MetaConfig {
    /// Task-level learning rate, halved every 10 epochs.
    pub task_lr: f64,
    pub epochs: usize,
    pub tasks_per_batch: usize,
    /// First-order approximation (the only supported variant; the engine is
    /// first-order only).
    pub first_order: bool,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig { task_lr: 1e-3, epochs: 100, tasks_per_batch: 4, first_order: true }
    }
}

/// Epochs between halvings of the task-level rate.
const TASK_LR_HALF_LIFE: usize = 10;

/// A task prepared for repeated episodes: rough estimates, estimated
/// operators, and the two crop objectives, all computed once.
struct PreparedTask {
    support: DipProblem,
    query: DipProblem,
}

fn prepare_task(
    task: &MetaTask,
    backbone: &Backbone,
    net: &ReconNet,
    est: &EstimationConfig,
    kernel_init: &BlurKernel,
    srf_init: &SrfMatrix,
) -> Result<PreparedTask> {
    let (_, sup_x, sup_y) = task.crop(&task.support)?;
    let (_, qry_x, qry_y) = task.crop(&task.query)?;
    let sup_zhat = backbone.forward(&sup_x, &sup_y)?;
    let qry_zhat = backbone.forward(&qry_x, &qry_y)?;
    // One estimation pass per episode, from support data only.
    let kernel = estimate_kernel_step(&sup_x, &sup_zhat, task.scale, kernel_init, est)?;
    let srf = estimate_srf_step(&sup_y, &sup_zhat, srf_init, est)?;
    let support = DipProblem::new(&sup_x, &sup_y, &kernel, &srf, task.scale, &sup_zhat, net)?;
    let query = DipProblem::new(&qry_x, &qry_y, &kernel, &srf, task.scale, &qry_zhat, net)?;
    Ok(PreparedTask { support, query })
}

/// Loss gradient of one objective at the given parameters.
fn loss_and_grad(problem: &DipProblem, params: &NetworkParams) -> Result<(f64, NetworkParams)> {
    problem.grad(params)
}

/// First-order MAML over the prepared tasks. Returns the meta-initialization
/// and the per-epoch mean query loss at the adapted parameters (the
/// meta-objective).
#[allow(clippy::too_many_arguments)]
pub fn maml_pretrain(
    tasks: &[MetaTask],
    backbone: &Backbone,
    recon_init: &ReconNet,
    kernel_init: &BlurKernel,
    srf_init: &SrfMatrix,
    est: &EstimationConfig,
    config: &MetaConfig,
) -> Result<(NetworkParams, Vec<f64>)> {
    if tasks.len() < 2 {
        return Err(Error::param("meta pre-training needs at least 2 tasks"));
    }
    if !config.first_order {
        return Err(Error::param(
            "second-order MAML is not supported; the engine is first-order only",
        ));
    }
    if config.tasks_per_batch == 0 {
        return Err(Error::param("tasks_per_batch must be >= 1"));
    }
    let prepared: Vec<PreparedTask> = tasks
        .iter()
        .map(|t| prepare_task(t, backbone, recon_init, est, kernel_init, srf_init))
        .collect::<Result<_>>()?;

    let mut params = recon_init.params.clone();
    let mut adam = AdamState::new();
    let adam_cfg = AdamConfig::new(config.task_lr);
    let mut epoch_objectives = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let task_lr = config.task_lr * 0.5f64.powi((epoch / TASK_LR_HALF_LIFE) as i32);
        let mut epoch_total = 0.0;
        for batch in prepared.chunks(config.tasks_per_batch) {
            let mut meta_grad: Option<NetworkParams> = None;
            for task in batch {
                // Inner step on the support loss.
                let (_, grad_tr) = loss_and_grad(&task.support, &params)?;
                let mut adapted = params.clone();
                for (name, tensor) in adapted.iter_mut() {
                    if let Some(g) = grad_tr.get(name) {
                        for (p, &gv) in tensor.data_mut().iter_mut().zip(g.data()) {
                            *p -= task_lr * gv;
                        }
                    }
                }
                // Query loss at the adapted parameters; its gradient is the
                // first-order meta contribution.
                let (loss_te, grad_te) = loss_and_grad(&task.query, &adapted)?;
                if !loss_te.is_finite() {
                    return Err(Error::solver("meta-objective became non-finite", vec![loss_te]));
                }
                epoch_total += loss_te;
                match &mut meta_grad {
                    None => meta_grad = Some(grad_te),
                    Some(acc) => {
                        for (name, g) in &grad_te {
                            if let Some(a) = acc.get_mut(name) {
                                a.add_assign(g);
                            }
                        }
                    }
                }
            }
            let meta_grad = meta_grad.expect("non-empty batch");
            adam_step(&mut params, &meta_grad, &mut adam, &adam_cfg)?;
        }
        epoch_objectives.push(epoch_total / tasks.len() as f64);
    }
    Ok((params, epoch_objectives))
}

/// Adapt a reconstruction parameter set to one task at test time (operators
/// estimated once from the rough estimate, then DIP steps on the full
/// scene), tracking PSNR against the task's ground truth after every step.
/// Element `t` of the returned curve is the PSNR after `t` steps.
pub fn adaptation_psnr_curve(
    task: &MetaTask,
    backbone: &Backbone,
    net: &ReconNet,
    kernel_init: &BlurKernel,
    srf_init: &SrfMatrix,
    est: &EstimationConfig,
    iters: usize,
    lr: f64,
) -> Result<Vec<f64>> {
    let zhat = backbone.forward(&task.lr_hsi, &task.hr_msi)?;
    let kernel = estimate_kernel_step(&task.lr_hsi, &zhat, task.scale, kernel_init, est)?;
    let srf = estimate_srf_step(&task.hr_msi, &zhat, srf_init, est)?;
    let problem =
        DipProblem::new(&task.lr_hsi, &task.hr_msi, &kernel, &srf, task.scale, &zhat, net)?;
    let mut params = net.params.clone();
    let mut adam = AdamState::new();
    let adam_cfg = AdamConfig::new(lr);
    let mut curve = Vec::with_capacity(iters + 1);
    let (_, z0) = problem.evaluate(&params)?;
    curve.push(psnr(&task.truth, &z0)?);
    for _ in 0..iters {
        problem.step(&mut params, &mut adam, &adam_cfg)?;
        let (_, z) = problem.evaluate(&params)?;
        curve.push(psnr(&task.truth, &z)?);
    }
    Ok(curve)
}
