//! Guided reconstruction network: a spatial branch conditioned on the
//! flattened blur kernel, a spectral branch conditioned on the flattened
//! spectral response, and a fusion head with a residual connection to the
//! rough estimate. The conditioning is a learned per-channel scale and shift
//! derived from each operator embedding.

use crate::autodiff::{init_params, param_count, Graph, NetworkParams, NodeId, Op, Tensor};
use crate::cube::{BlurKernel, HsiCube, SrfMatrix};
use crate::error::{Error, Result};
use crate::rng::Rng;
use std::collections::BTreeMap;

/// Reconstruction network hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct ReconNetConfig {
    pub spatial_width: usize,
    pub spectral_width: usize,
    /// Convolutions in the fusion head, including the output layer.
    pub fusion_depth: usize,
    /// Embedding size for the flattened kernel guidance.
    pub kernel_embed: usize,
    /// Embedding size for the flattened SRF guidance.
    pub srf_embed: usize,
}

impl Default for ReconNetConfig {
    fn default() -> Self {
        ReconNetConfig {
            spatial_width: 32,
            spectral_width: 32,
            fusion_depth: 2,
            kernel_embed: 16,
            srf_embed: 16,
        }
    }
}

/// A configured reconstruction network with its parameter store. The
/// parameter shapes are tied to the cube band count, the estimated kernel
/// support, and the SRF shape.
#[derive(Debug, Clone)]
pub struct ReconNet {
    pub config: ReconNetConfig,
    pub params: NetworkParams,
    pub bands: usize,
    pub kernel_size: usize,
    pub srf_out_bands: usize,
}

/// Per-branch conditioning: embed the guidance vector, then derive scale and
/// shift vectors for the target channel count.
fn conditioning(
    g: &mut Graph,
    prefix: &str,
    guidance: NodeId,
    guidance_len: usize,
    embed: usize,
    channels: usize,
) -> Result<(NodeId, NodeId)> {
    let we = g.param(&format!("{prefix}.embed.weight"), &[embed, guidance_len]);
    let be = g.param(&format!("{prefix}.embed.bias"), &[embed]);
    let e0 = g.op(Op::Dense { input: guidance, weight: we, bias: be })?;
    let emb = g.op(Op::LeakyRelu { input: e0, slope: 0.2 })?;
    let ws = g.param(&format!("{prefix}.scale.weight"), &[channels, embed]);
    let bs = g.param(&format!("{prefix}.scale.bias"), &[channels]);
    let scale = g.op(Op::Dense { input: emb, weight: ws, bias: bs })?;
    let wh = g.param(&format!("{prefix}.shift.weight"), &[channels, embed]);
    let bh = g.param(&format!("{prefix}.shift.bias"), &[channels]);
    let shift = g.op(Op::Dense { input: emb, weight: wh, bias: bh })?;
    Ok((scale, shift))
}

/// Append the reconstruction network to `g`. The caller supplies the rough
/// estimate node and the flattened guidance vectors (inputs in DIP mode,
/// reshaped parameters in joint mode). Returns the output node.
pub(crate) fn build_graph(
    g: &mut Graph,
    config: &ReconNetConfig,
    bands: usize,
    zhat: NodeId,
    kernel_vec: NodeId,
    kernel_len: usize,
    srf_vec: NodeId,
    srf_len: usize,
) -> Result<NodeId> {
    // Spatial branch: 3x3 convolutions modulated by the kernel embedding.
    let (kscale, kshift) =
        conditioning(g, "recon.kguide", kernel_vec, kernel_len, config.kernel_embed, config.spatial_width)?;
    let w0 = g.param("recon.spatial0.weight", &[config.spatial_width, bands, 3, 3]);
    let b0 = g.param("recon.spatial0.bias", &[config.spatial_width]);
    let s0 = g.op(Op::Conv2d { input: zhat, weight: w0, bias: b0 })?;
    let s0a = g.op(Op::LeakyRelu { input: s0, slope: 0.2 })?;
    let s0m = g.op(Op::Modulate { input: s0a, scale: kscale, shift: kshift })?;
    let w1 = g.param("recon.spatial1.weight", &[config.spatial_width, config.spatial_width, 3, 3]);
    let b1 = g.param("recon.spatial1.bias", &[config.spatial_width]);
    let s1 = g.op(Op::Conv2d { input: s0m, weight: w1, bias: b1 })?;
    let spatial = g.op(Op::LeakyRelu { input: s1, slope: 0.2 })?;

    // Spectral branch: band mixing modulated by the SRF embedding.
    let (pscale, pshift) =
        conditioning(g, "recon.pguide", srf_vec, srf_len, config.srf_embed, config.spectral_width)?;
    let m0w = g.param("recon.spectral0.weight", &[config.spectral_width, bands]);
    let m0b = g.param("recon.spectral0.bias", &[config.spectral_width]);
    let c0 = g.op(Op::BandMix { input: zhat, weight: m0w, bias: m0b })?;
    let c0a = g.op(Op::LeakyRelu { input: c0, slope: 0.2 })?;
    let c0m = g.op(Op::Modulate { input: c0a, scale: pscale, shift: pshift })?;
    let m1w = g.param("recon.spectral1.weight", &[config.spectral_width, config.spectral_width]);
    let m1b = g.param("recon.spectral1.bias", &[config.spectral_width]);
    let c1 = g.op(Op::BandMix { input: c0m, weight: m1w, bias: m1b })?;
    let spectral = g.op(Op::LeakyRelu { input: c1, slope: 0.2 })?;

    // Fusion head with residual connection to the rough estimate.
    let mut t = g.op(Op::Concat { a: spatial, b: spectral })?;
    let mut in_ch = config.spatial_width + config.spectral_width;
    for d in 0..config.fusion_depth.saturating_sub(1) {
        let wf = g.param(&format!("recon.fusion{d}.weight"), &[config.spatial_width, in_ch, 3, 3]);
        let bf = g.param(&format!("recon.fusion{d}.bias"), &[config.spatial_width]);
        let f = g.op(Op::Conv2d { input: t, weight: wf, bias: bf })?;
        t = g.op(Op::LeakyRelu { input: f, slope: 0.2 })?;
        in_ch = config.spatial_width;
    }
    let wo = g.param("recon.final.weight", &[bands, in_ch, 3, 3]);
    let bo = g.param("recon.final.bias", &[bands]);
    let head = g.op(Op::Conv2d { input: t, weight: wo, bias: bo })?;
    g.op(Op::Add { a: head, b: zhat })
}

/// Parameter shapes `(name, shape, fan_in)`; zero fan-in means
/// zero-initialized (biases and the residual output head).
fn param_shapes(
    config: &ReconNetConfig,
    bands: usize,
    kernel_len: usize,
    srf_len: usize,
) -> Vec<(String, Vec<usize>, usize)> {
    let mut shapes = Vec::new();
    for (prefix, len, embed, channels) in [
        ("recon.kguide", kernel_len, config.kernel_embed, config.spatial_width),
        ("recon.pguide", srf_len, config.srf_embed, config.spectral_width),
    ] {
        shapes.push((format!("{prefix}.embed.weight"), vec![embed, len], len));
        shapes.push((format!("{prefix}.embed.bias"), vec![embed], 0));
        shapes.push((format!("{prefix}.scale.weight"), vec![channels, embed], embed));
        shapes.push((format!("{prefix}.scale.bias"), vec![channels], 0));
        shapes.push((format!("{prefix}.shift.weight"), vec![channels, embed], embed));
        shapes.push((format!("{prefix}.shift.bias"), vec![channels], 0));
    }
    shapes.push(("recon.spatial0.weight".into(), vec![config.spatial_width, bands, 3, 3], bands * 9));
    shapes.push(("recon.spatial0.bias".into(), vec![config.spatial_width], 0));
    shapes.push((
        "recon.spatial1.weight".into(),
        vec![config.spatial_width, config.spatial_width, 3, 3],
        config.spatial_width * 9,
    ));
    shapes.push(("recon.spatial1.bias".into(), vec![config.spatial_width], 0));
    shapes.push(("recon.spectral0.weight".into(), vec![config.spectral_width, bands], bands));
    shapes.push(("recon.spectral0.bias".into(), vec![config.spectral_width], 0));
    shapes.push((
        "recon.spectral1.weight".into(),
        vec![config.spectral_width, config.spectral_width],
        config.spectral_width,
    ));
    shapes.push(("recon.spectral1.bias".into(), vec![config.spectral_width], 0));
    let mut in_ch = config.spatial_width + config.spectral_width;
    for d in 0..config.fusion_depth.saturating_sub(1) {
        shapes.push((
            format!("recon.fusion{d}.weight"),
            vec![config.spatial_width, in_ch, 3, 3],
            in_ch * 9,
        ));
        shapes.push((format!("recon.fusion{d}.bias"), vec![config.spatial_width], 0));
        in_ch = config.spatial_width;
    }
    shapes.push(("recon.final.weight".into(), vec![bands, in_ch, 3, 3], 0));
    shapes.push(("recon.final.bias".into(), vec![bands], 0));
    shapes
}

impl ReconNet {
    /// Fresh network with seeded initialization. The residual output head
    /// starts at zero, so the initial forward pass returns the rough
    /// estimate unchanged.
    pub fn init(
        config: ReconNetConfig,
        bands: usize,
        kernel_size: usize,
        srf_out_bands: usize,
        rng: &mut Rng,
    ) -> Self {
        let shapes = param_shapes(&config, bands, kernel_size * kernel_size, srf_out_bands * bands);
        ReconNet {
            config,
            params: init_params(&shapes, rng),
            bands,
            kernel_size,
            srf_out_bands,
        }
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.params)
    }

    /// Replace every parameter (including the zero-initialized head) with
    /// random values. Used by gradient checks and sensitivity probes, where
    /// a zero head would make most gradients trivially zero.
    pub fn randomize_all(&mut self, scale: f64, rng: &mut Rng) {
        for tensor in self.params.values_mut() {
            for v in tensor.data_mut() {
                *v = scale * rng.normal();
            }
        }
    }

    pub(crate) fn check_operators(&self, kernel: &BlurKernel, srf: &SrfMatrix) -> Result<()> {
        if kernel.size() != self.kernel_size {
            return Err(Error::shape(format!(
                "network built for kernel size {}, got {}",
                self.kernel_size,
                kernel.size()
            )));
        }
        if srf.out_bands() != self.srf_out_bands || srf.in_bands() != self.bands {
            return Err(Error::shape(format!(
                "network built for SRF {}x{}, got {}x{}",
                self.srf_out_bands,
                self.bands,
                srf.out_bands(),
                srf.in_bands()
            )));
        }
        Ok(())
    }
}

/// Run the reconstruction network once under the given operators.
pub fn recon_forward(
    zhat: &HsiCube,
    kernel: &BlurKernel,
    srf: &SrfMatrix,
    net: &ReconNet,
) -> Result<HsiCube> {
    net.check_operators(kernel, srf)?;
    let (bands, h, w) = zhat.shape();
    if bands != net.bands {
        return Err(Error::shape(format!(
            "network built for {} bands, estimate has {bands}",
            net.bands
        )));
    }
    let klen = net.kernel_size * net.kernel_size;
    let plen = net.srf_out_bands * net.bands;
    let mut g = Graph::new();
    let zin = g.input("zhat", &[bands, h, w]);
    let kin = g.input("kernel_vec", &[klen]);
    let pin = g.input("srf_vec", &[plen]);
    let out = build_graph(&mut g, &net.config, bands, zin, kin, klen, pin, plen)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("zhat".to_string(), Tensor::from_cube(zhat));
    inputs.insert(
        "kernel_vec".to_string(),
        Tensor::from_vec(vec![klen], kernel.weights().to_vec())?,
    );
    inputs.insert("srf_vec".to_string(), Tensor::from_vec(vec![plen], srf.weights().to_vec())?);
    let tape = g.forward(&net.params, &inputs)?;
    tape.value(out).to_cube()
}
