//! Fusion backbone: a small convolutional network that maps an observation
//! pair to a rough high-resolution estimate. It is pre-trained on synthetic
//! degradations and then frozen; at test time its output seeds the guided
//! reconstruction network.

use crate::autodiff::{
    adam_step, init_params, param_count, AdamConfig, AdamState, Graph, NetworkParams, NodeId, Op,
    Tensor,
};
use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::rng::Rng;
use std::collections::BTreeMap;

/// Backbone hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct BackboneConfig {
    /// Feature channels in the convolutional trunk.
    pub width: usize,
    /// Number of conv + activation blocks before the output head.
    pub depth: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig { width: 32, depth: 4 }
    }
}

/// One supervised training triple: ground-truth cube plus its degraded
/// observation pair.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub truth: HsiCube,
    pub lr_hsi: HsiCube,
    pub hr_msi: HsiCube,
}

/// A configured backbone with its parameter store.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub params: NetworkParams,
    /// Hyperspectral and multispectral band counts the parameters were built
    /// for.
    pub hsi_bands: usize,
    pub msi_bands: usize,
}

/// Parameter shapes `(name, shape, fan_in)`; a zero fan-in requests
/// zero-initialization (biases and the residual output head).
fn param_shapes(
    config: &BackboneConfig,
    hsi_bands: usize,
    msi_bands: usize,
) -> Vec<(String, Vec<usize>, usize)> {
    let mut shapes = Vec::new();
    let mut in_ch = hsi_bands + msi_bands;
    for d in 0..config.depth {
        shapes.push((format!("backbone.conv{d}.weight"), vec![config.width, in_ch, 3, 3], in_ch * 9));
        shapes.push((format!("backbone.conv{d}.bias"), vec![config.width], 0));
        in_ch = config.width;
    }
    // Zero-initialized head keeps the untrained backbone at the residual
    // identity (output = upsampled HSI).
    shapes.push(("backbone.final.weight".to_string(), vec![hsi_bands, in_ch, 3, 3], 0));
    shapes.push(("backbone.final.bias".to_string(), vec![hsi_bands], 0));
    shapes
}

/// Build the forward graph for fixed observation shapes. Returns the graph
/// and the output node.
pub(crate) fn build_graph(
    config: &BackboneConfig,
    hsi_bands: usize,
    msi_bands: usize,
    lr_shape: (usize, usize),
    scale: usize,
) -> Result<(Graph, NodeId)> {
    let (h, w) = lr_shape;
    let mut g = Graph::new();
    let x = g.input("x", &[hsi_bands, h, w]);
    let y = g.input("y", &[msi_bands, h * scale, w * scale]);
    let xup = g.op(Op::UpsampleBilinear { input: x, factor: scale })?;
    let mut t = g.op(Op::Concat { a: xup, b: y })?;
    for d in 0..config.depth {
        let in_ch = if d == 0 { hsi_bands + msi_bands } else { config.width };
        let wn = g.param(&format!("backbone.conv{d}.weight"), &[config.width, in_ch, 3, 3]);
        let bn = g.param(&format!("backbone.conv{d}.bias"), &[config.width]);
        let c = g.op(Op::Conv2d { input: t, weight: wn, bias: bn })?;
        t = g.op(Op::LeakyRelu { input: c, slope: 0.2 })?;
    }
    let wf = g.param("backbone.final.weight", &[hsi_bands, config.width, 3, 3]);
    let bf = g.param("backbone.final.bias", &[hsi_bands]);
    let head = g.op(Op::Conv2d { input: t, weight: wf, bias: bf })?;
    let out = g.op(Op::Add { a: head, b: xup })?;
    Ok((g, out))
}

impl Backbone {
    /// Fresh backbone with seeded initialization.
    pub fn init(config: BackboneConfig, hsi_bands: usize, msi_bands: usize, rng: &mut Rng) -> Self {
        if config.width == 0 || config.depth == 0 {
            // Constructor-level misuse; widths are validated here rather
            // than threaded through Result in every caller.
            panic!("backbone width and depth must be >= 1");
        }
        let params = init_params(&param_shapes(&config, hsi_bands, msi_bands), rng);
        Backbone { config, params, hsi_bands, msi_bands }
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.params)
    }

    /// Rough estimate from an observation pair. The scale is inferred from
    /// the shapes.
    pub fn forward(&self, lr_hsi: &HsiCube, hr_msi: &HsiCube) -> Result<HsiCube> {
        let (xb, xh, xw) = lr_hsi.shape();
        let (yb, yh, yw) = hr_msi.shape();
        if xb != self.hsi_bands || yb != self.msi_bands {
            return Err(Error::shape(format!(
                "backbone built for {}/{} bands, observations have {xb}/{yb}",
                self.hsi_bands, self.msi_bands
            )));
        }
        if yh % xh != 0 || yw % xw != 0 || yh / xh != yw / xw {
            return Err(Error::shape(format!(
                "MSI {yh}x{yw} is not an integer upscale of HSI {xh}x{xw}"
            )));
        }
        let scale = yh / xh;
        let (graph, out) = build_graph(&self.config, xb, yb, (xh, xw), scale)?;
        let mut inputs = BTreeMap::new();
        inputs.insert("x".to_string(), Tensor::from_cube(lr_hsi));
        inputs.insert("y".to_string(), Tensor::from_cube(hr_msi));
        let tape = graph.forward(&self.params, &inputs)?;
        tape.value(out).to_cube()
    }
}

/// Pre-train a backbone on supervised triples with an L1 objective and Adam.
/// All samples must share shapes. Returns the trained backbone and the mean
/// per-epoch losses.
pub fn train_backbone(
    dataset: &[TrainingSample],
    config: BackboneConfig,
    epochs: usize,
    lr: f64,
    rng: &mut Rng,
) -> Result<(Backbone, Vec<f64>)> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::param("backbone training needs a non-empty dataset"))?;
    let (bands, h, w) = first.lr_hsi.shape();
    let (msi_bands, yh, yw) = first.hr_msi.shape();
    if yh % h != 0 || yh / h != yw / w {
        return Err(Error::shape("MSI shape is not an integer upscale of the HSI"));
    }
    let scale = yh / h;
    for sample in dataset {
        if sample.lr_hsi.shape() != (bands, h, w)
            || sample.hr_msi.shape() != (msi_bands, yh, yw)
            || sample.truth.shape() != (bands, yh, yw)
        {
            return Err(Error::shape("training samples must share shapes"));
        }
    }

    let mut backbone = Backbone::init(config, bands, msi_bands, rng);
    let (graph, out) = build_graph(&config, bands, msi_bands, (h, w), scale)?;
    let mut g = graph;
    let target = g.input("target", &[bands, yh, yw]);
    let loss_node = g.op(Op::MaeLoss { pred: out, target })?;

    let adam = AdamConfig::new(lr);
    let mut state = AdamState::new();
    let mut epoch_losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut total = 0.0;
        for sample in dataset {
            let mut inputs = BTreeMap::new();
            inputs.insert("x".to_string(), Tensor::from_cube(&sample.lr_hsi));
            inputs.insert("y".to_string(), Tensor::from_cube(&sample.hr_msi));
            inputs.insert("target".to_string(), Tensor::from_cube(&sample.truth));
            let tape = g.forward(&backbone.params, &inputs)?;
            total += tape.value(loss_node).data()[0];
            let grads = g.backward(&tape, loss_node)?.by_param;
            adam_step(&mut backbone.params, &grads, &mut state, &adam)?;
        }
        epoch_losses.push(total / dataset.len() as f64);
    }
    Ok((backbone, epoch_losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degeneration::{
        gaussian_kernel, simulate_pair, spatial_degrade, spectral_degrade, DegenerationConfig,
        GaussianSpec, KernelSpec,
    };
    use crate::cube::SrfMatrix;
    use crate::metrics::psnr;
    use crate::resample::bicubic_upsample;
    use crate::synth::synthetic_cube;

    fn toy_sample(seed: u64) -> TrainingSample {
        let truth = synthetic_cube(4, 16, 16, &mut Rng::new(seed)).unwrap();
        let kernel = gaussian_kernel(&GaussianSpec { size: 5, sigma: 1.0 }).unwrap();
        let srf = SrfMatrix::boxcar(2, 4).unwrap();
        let lr_hsi = spatial_degrade(&truth, &kernel, 2).unwrap();
        let hr_msi = spectral_degrade(&truth, &srf).unwrap();
        TrainingSample { truth, lr_hsi, hr_msi }
    }

    #[test]
    fn untrained_output_is_upsampled_hsi() {
        // Zero-initialized head means the network starts as the residual
        // identity around the bilinear upsample.
        let sample = toy_sample(1);
        let backbone = Backbone::init(BackboneConfig { width: 8, depth: 2 }, 4, 2, &mut Rng::new(2));
        let out = backbone.forward(&sample.lr_hsi, &sample.hr_msi).unwrap();
        assert_eq!(out.shape(), (4, 16, 16));
        let up = crate::resample::bilinear_upsample(&sample.lr_hsi, 2).unwrap();
        assert_eq!(out.data(), up.data());
    }

    #[test]
    fn single_sample_overfit_halves_the_loss() {
        let dataset = vec![toy_sample(3)];
        let (_, losses) = train_backbone(
            &dataset,
            BackboneConfig { width: 8, depth: 2 },
            200,
            1e-3,
            &mut Rng::new(4),
        )
        .unwrap();
        let first = losses[0];
        let last = *losses.last().unwrap();
        assert!(
            last <= 0.5 * first,
            "loss went {first} -> {last}, less than 50% reduction"
        );
    }

    #[test]
    fn trained_backbone_beats_bicubic_on_held_out_scene() {
        let dataset: Vec<TrainingSample> = (10..16).map(toy_sample).collect();
        let (backbone, _) = train_backbone(
            &dataset,
            BackboneConfig { width: 12, depth: 3 },
            120,
            1e-3,
            &mut Rng::new(5),
        )
        .unwrap();

        let held_out = synthetic_cube(4, 16, 16, &mut Rng::new(99)).unwrap();
        let cfg = DegenerationConfig {
            scale: 2,
            kernel_spec: KernelSpec::Gaussian(GaussianSpec { size: 5, sigma: 1.0 }),
            srf_base: SrfMatrix::boxcar(2, 4).unwrap(),
            srf_perturb_c: 0.0,
            snr_hsi_db: f64::INFINITY,
            snr_msi_db: f64::INFINITY,
        };
        let pair = simulate_pair(&held_out, &cfg, &Rng::new(100)).unwrap();
        let fused = backbone.forward(&pair.lr_hsi, &pair.hr_msi).unwrap();
        let baseline = bicubic_upsample(&pair.lr_hsi, 2).unwrap();
        let psnr_fused = psnr(&held_out, &fused).unwrap();
        let psnr_bicubic = psnr(&held_out, &baseline).unwrap();
        assert!(
            psnr_fused > psnr_bicubic,
            "backbone {psnr_fused:.2} dB did not beat bicubic {psnr_bicubic:.2} dB"
        );
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(train_backbone(&[], BackboneConfig::default(), 1, 1e-3, &mut Rng::new(1)).is_err());
    }
}
