//! Operations of the static graph: forward evaluation, build-time shape
//! inference, and reverse-mode gradients.
//!
//! Activations are `(channels, height, width)` tensors; vectors are rank-1.
//! Convolutions run at stride 1 with edge-inclusive reflect padding, matching
//! the degeneration operators' boundary rule.

use super::tensor::Tensor;
use super::NodeId;
use crate::degeneration::reflect;
use crate::error::{Error, Result};
use crate::resample::linear_taps;

/// Graph operation. Fields reference operand node ids.
#[derive(Debug, Clone)]
pub enum Op {
    /// 2-D correlation, stride 1, reflect padding. `weight` is
    /// `(out_c, in_c, k, k)` with odd `k`; `bias` is `(out_c)`.
    Conv2d { input: NodeId, weight: NodeId, bias: NodeId },
    /// Pointwise band mixing (1x1 convolution across channels). `weight` is
    /// `(out_c, in_c)`, `bias` `(out_c)`.
    BandMix { input: NodeId, weight: NodeId, bias: NodeId },
    /// Elementwise leaky rectifier.
    LeakyRelu { input: NodeId, slope: f64 },
    /// Nearest-neighbor upsampling by an integer factor.
    UpsampleNearest { input: NodeId, factor: usize },
    /// Bilinear upsampling by an integer factor, center-aligned and
    /// edge-clamped.
    UpsampleBilinear { input: NodeId, factor: usize },
    /// Elementwise sum of two same-shape tensors.
    Add { a: NodeId, b: NodeId },
    /// Channel concatenation of two `(C, H, W)` tensors.
    Concat { a: NodeId, b: NodeId },
    /// Vector affine map: `weight (m, n)` applied to a rank-1 input plus
    /// `bias (m)`.
    Dense { input: NodeId, weight: NodeId, bias: NodeId },
    /// Per-channel conditioning: `y[c] = x[c] * (1 + scale[c]) + shift[c]`
    /// with rank-1 `scale`/`shift` broadcast over the spatial grid. This is
    /// how flattened kernel / SRF embeddings steer the feature maps.
    Modulate { input: NodeId, scale: NodeId, shift: NodeId },
    /// Reinterpret the buffer under a new shape of equal length.
    Reshape { input: NodeId, shape: Vec<usize> },
    /// Spatial degeneration as a differentiable layer: per-channel
    /// correlation with a `(k, k)` kernel node under reflect padding, then
    /// decimation by `factor`. Gradients flow to both the image and the
    /// kernel.
    SpatialDegrade { input: NodeId, kernel: NodeId, factor: usize },
    /// Spectral degeneration as a differentiable layer: `(b, B)` response
    /// node applied across channels. Gradients flow to both operands.
    SpectralDegrade { input: NodeId, srf: NodeId },
    /// Mean squared error to a target node; scalar output.
    MseLoss { pred: NodeId, target: NodeId },
    /// Mean absolute error to a target node; scalar output. The subgradient
    /// at exactly zero is zero.
    MaeLoss { pred: NodeId, target: NodeId },
}

impl Op {
    /// Operand node ids.
    pub fn inputs(&self) -> Vec<NodeId> {
        match *self {
            Op::Conv2d { input, weight, bias } => vec![input, weight, bias],
            Op::BandMix { input, weight, bias } => vec![input, weight, bias],
            Op::LeakyRelu { input, .. } => vec![input],
            Op::UpsampleNearest { input, .. } => vec![input],
            Op::UpsampleBilinear { input, .. } => vec![input],
            Op::Add { a, b } => vec![a, b],
            Op::Concat { a, b } => vec![a, b],
            Op::Dense { input, weight, bias } => vec![input, weight, bias],
            Op::Modulate { input, scale, shift } => vec![input, scale, shift],
            Op::Reshape { input, .. } => vec![input],
            Op::SpatialDegrade { input, kernel, .. } => vec![input, kernel],
            Op::SpectralDegrade { input, srf } => vec![input, srf],
            Op::MseLoss { pred, target } => vec![pred, target],
            Op::MaeLoss { pred, target } => vec![pred, target],
        }
    }

    /// Output shape from operand shapes; rejects inconsistent graphs at
    /// build time.
    pub fn infer_shape(&self, shapes: &[Vec<usize>]) -> Result<Vec<usize>> {
        let rank3 = |id: NodeId, what: &str| -> Result<(usize, usize, usize)> {
            let s = &shapes[id];
            if s.len() != 3 {
                return Err(Error::shape(format!("{what} must be rank-3, got {s:?}")));
            }
            Ok((s[0], s[1], s[2]))
        };
        match self {
            Op::Conv2d { input, weight, bias } => {
                let (ci, h, w) = rank3(*input, "conv input")?;
                let ws = &shapes[*weight];
                if ws.len() != 4 || ws[2] != ws[3] || ws[2] % 2 == 0 {
                    return Err(Error::shape(format!(
                        "conv weight must be (out, in, k, k) with odd k, got {ws:?}"
                    )));
                }
                if ws[1] != ci {
                    return Err(Error::shape(format!(
                        "conv weight expects {} input channels, input has {ci}",
                        ws[1]
                    )));
                }
                let half = ws[2] / 2;
                if half > h || half > w {
                    return Err(Error::shape(format!(
                        "conv kernel {} too large for {h}x{w} input",
                        ws[2]
                    )));
                }
                if shapes[*bias] != vec![ws[0]] {
                    return Err(Error::shape("conv bias shape mismatch"));
                }
                Ok(vec![ws[0], h, w])
            }
            Op::BandMix { input, weight, bias } => {
                let (ci, h, w) = rank3(*input, "band-mix input")?;
                let ws = &shapes[*weight];
                if ws.len() != 2 || ws[1] != ci {
                    return Err(Error::shape(format!(
                        "band-mix weight must be (out, {ci}), got {ws:?}"
                    )));
                }
                if shapes[*bias] != vec![ws[0]] {
                    return Err(Error::shape("band-mix bias shape mismatch"));
                }
                Ok(vec![ws[0], h, w])
            }
            Op::LeakyRelu { input, .. } => Ok(shapes[*input].clone()),
            Op::UpsampleNearest { input, factor } | Op::UpsampleBilinear { input, factor } => {
                if *factor == 0 {
                    return Err(Error::param("upsample factor must be >= 1"));
                }
                let (c, h, w) = rank3(*input, "upsample input")?;
                Ok(vec![c, h * factor, w * factor])
            }
            Op::Add { a, b } => {
                if shapes[*a] != shapes[*b] {
                    return Err(Error::shape(format!(
                        "add operands differ: {:?} vs {:?}",
                        shapes[*a], shapes[*b]
                    )));
                }
                Ok(shapes[*a].clone())
            }
            Op::Concat { a, b } => {
                let (ca, h, w) = rank3(*a, "concat lhs")?;
                let (cb, h2, w2) = rank3(*b, "concat rhs")?;
                if (h, w) != (h2, w2) {
                    return Err(Error::shape(format!(
                        "concat spatial mismatch: {h}x{w} vs {h2}x{w2}"
                    )));
                }
                Ok(vec![ca + cb, h, w])
            }
            Op::Dense { input, weight, bias } => {
                let xs = &shapes[*input];
                let ws = &shapes[*weight];
                if xs.len() != 1 || ws.len() != 2 || ws[1] != xs[0] {
                    return Err(Error::shape(format!(
                        "dense expects vector (n) and weight (m, n), got {xs:?} and {ws:?}"
                    )));
                }
                if shapes[*bias] != vec![ws[0]] {
                    return Err(Error::shape("dense bias shape mismatch"));
                }
                Ok(vec![ws[0]])
            }
            Op::Modulate { input, scale, shift } => {
                let (c, h, w) = rank3(*input, "modulate input")?;
                if shapes[*scale] != vec![c] || shapes[*shift] != vec![c] {
                    return Err(Error::shape(format!(
                        "modulate needs rank-1 scale/shift of length {c}"
                    )));
                }
                Ok(vec![c, h, w])
            }
            Op::Reshape { input, shape } => {
                let from: usize = shapes[*input].iter().product();
                let to: usize = shape.iter().product();
                if from != to {
                    return Err(Error::shape(format!(
                        "reshape length mismatch: {from} -> {to}"
                    )));
                }
                Ok(shape.clone())
            }
            Op::SpatialDegrade { input, kernel, factor } => {
                let (c, h, w) = rank3(*input, "spatial degrade input")?;
                let ks = &shapes[*kernel];
                if ks.len() != 2 || ks[0] != ks[1] || ks[0] % 2 == 0 {
                    return Err(Error::shape(format!(
                        "spatial degrade kernel must be odd square, got {ks:?}"
                    )));
                }
                if *factor == 0 || h % factor != 0 || w % factor != 0 {
                    return Err(Error::shape(format!(
                        "factor {factor} must divide {h}x{w}"
                    )));
                }
                if ks[0] > h.min(w) {
                    return Err(Error::shape("spatial degrade kernel larger than image"));
                }
                Ok(vec![c, h / factor, w / factor])
            }
            Op::SpectralDegrade { input, srf } => {
                let (c, h, w) = rank3(*input, "spectral degrade input")?;
                let ps = &shapes[*srf];
                if ps.len() != 2 || ps[1] != c {
                    return Err(Error::shape(format!(
                        "spectral degrade srf must be (b, {c}), got {ps:?}"
                    )));
                }
                Ok(vec![ps[0], h, w])
            }
            Op::MseLoss { pred, target } | Op::MaeLoss { pred, target } => {
                if shapes[*pred] != shapes[*target] {
                    return Err(Error::shape(format!(
                        "loss operands differ: {:?} vs {:?}",
                        shapes[*pred], shapes[*target]
                    )));
                }
                Ok(vec![1])
            }
        }
    }

    pub fn forward(&self, values: &[Tensor], out_shape: &[usize]) -> Result<Tensor> {
        let mut out = Tensor::zeros(out_shape);
        match *self {
            Op::Conv2d { input, weight, bias } => {
                let x = &values[input];
                let w = &values[weight];
                let b = &values[bias];
                let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (co, k) = (w.shape()[0], w.shape()[2]);
                let half = (k / 2) as i64;
                let plane = h * wd;
                let od = out.data_mut();
                for o in 0..co {
                    let dst = &mut od[o * plane..(o + 1) * plane];
                    dst.fill(b.data()[o]);
                    for i in 0..ci {
                        let src = &x.data()[i * plane..(i + 1) * plane];
                        let wbase = ((o * ci) + i) * k * k;
                        for u in 0..k {
                            for v in 0..k {
                                let wt = w.data()[wbase + u * k + v];
                                if wt == 0.0 {
                                    continue;
                                }
                                let du = u as i64 - half;
                                let dv = v as i64 - half;
                                for r in 0..h {
                                    let sr = reflect(r as i64 + du, h);
                                    let srow = &src[sr * wd..(sr + 1) * wd];
                                    let drow = &mut dst[r * wd..(r + 1) * wd];
                                    for c in 0..wd {
                                        let sc = reflect(c as i64 + dv, wd);
                                        drow[c] += wt * srow[sc];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::BandMix { input, weight, bias } => {
                let x = &values[input];
                let w = &values[weight];
                let b = &values[bias];
                let ci = x.shape()[0];
                let plane = x.shape()[1] * x.shape()[2];
                let co = w.shape()[0];
                let od = out.data_mut();
                for o in 0..co {
                    let dst = &mut od[o * plane..(o + 1) * plane];
                    dst.fill(b.data()[o]);
                    for i in 0..ci {
                        let wt = w.data()[o * ci + i];
                        if wt == 0.0 {
                            continue;
                        }
                        let src = &x.data()[i * plane..(i + 1) * plane];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += wt * s;
                        }
                    }
                }
            }
            Op::LeakyRelu { input, slope } => {
                for (d, &s) in out.data_mut().iter_mut().zip(values[input].data()) {
                    *d = if s > 0.0 { s } else { slope * s };
                }
            }
            Op::UpsampleNearest { input, factor } => {
                let x = &values[input];
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (oh, ow) = (h * factor, w * factor);
                let od = out.data_mut();
                for ch in 0..c {
                    let src = &x.data()[ch * h * w..(ch + 1) * h * w];
                    let dst = &mut od[ch * oh * ow..(ch + 1) * oh * ow];
                    for r in 0..oh {
                        let sr = r / factor;
                        for cc in 0..ow {
                            dst[r * ow + cc] = src[sr * w + cc / factor];
                        }
                    }
                }
            }
            Op::UpsampleBilinear { input, factor } => {
                let x = &values[input];
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (oh, ow) = (h * factor, w * factor);
                let row_taps = linear_taps(oh, h, factor);
                let col_taps = linear_taps(ow, w, factor);
                let od = out.data_mut();
                for ch in 0..c {
                    let src = &x.data()[ch * h * w..(ch + 1) * h * w];
                    let dst = &mut od[ch * oh * ow..(ch + 1) * oh * ow];
                    for (r, &(r0, r1, fr)) in row_taps.iter().enumerate() {
                        for (cc, &(c0, c1, fc)) in col_taps.iter().enumerate() {
                            let top = src[r0 * w + c0] * (1.0 - fc) + src[r0 * w + c1] * fc;
                            let bot = src[r1 * w + c0] * (1.0 - fc) + src[r1 * w + c1] * fc;
                            dst[r * ow + cc] = top * (1.0 - fr) + bot * fr;
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for ((d, &x), &y) in
                    out.data_mut().iter_mut().zip(values[a].data()).zip(values[b].data())
                {
                    *d = x + y;
                }
            }
            Op::Concat { a, b } => {
                let na = values[a].len();
                out.data_mut()[..na].copy_from_slice(values[a].data());
                out.data_mut()[na..].copy_from_slice(values[b].data());
            }
            Op::Dense { input, weight, bias } => {
                let x = values[input].data();
                let w = &values[weight];
                let n = x.len();
                for (o, d) in out.data_mut().iter_mut().enumerate() {
                    let row = &w.data()[o * n..(o + 1) * n];
                    *d = values[bias].data()[o]
                        + row.iter().zip(x).map(|(&a, &b)| a * b).sum::<f64>();
                }
            }
            Op::Modulate { input, scale, shift } => {
                let x = &values[input];
                let c = x.shape()[0];
                let plane = x.shape()[1] * x.shape()[2];
                let od = out.data_mut();
                for ch in 0..c {
                    let g = 1.0 + values[scale].data()[ch];
                    let s = values[shift].data()[ch];
                    let src = &x.data()[ch * plane..(ch + 1) * plane];
                    let dst = &mut od[ch * plane..(ch + 1) * plane];
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d = v * g + s;
                    }
                }
            }
            Op::Reshape { input, .. } => {
                out.data_mut().copy_from_slice(values[input].data());
            }
            Op::SpatialDegrade { input, kernel, factor } => {
                let x = &values[input];
                let k = &values[kernel];
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let ks = k.shape()[0] as i64;
                let half = ks / 2;
                let off = (factor / 2) as i64;
                let (oh, ow) = (h / factor, w / factor);
                let od = out.data_mut();
                for ch in 0..c {
                    let src = &x.data()[ch * h * w..(ch + 1) * h * w];
                    let dst = &mut od[ch * oh * ow..(ch + 1) * oh * ow];
                    for oi in 0..oh {
                        let base_r = (oi * factor) as i64 + off;
                        for oj in 0..ow {
                            let base_c = (oj * factor) as i64 + off;
                            let mut acc = 0.0;
                            for u in 0..ks {
                                let r = reflect(base_r + u - half, h);
                                for v in 0..ks {
                                    let cc = reflect(base_c + v - half, w);
                                    acc += k.data()[(u * ks + v) as usize] * src[r * w + cc];
                                }
                            }
                            dst[oi * ow + oj] = acc;
                        }
                    }
                }
            }
            Op::SpectralDegrade { input, srf } => {
                let x = &values[input];
                let p = &values[srf];
                let ci = x.shape()[0];
                let plane = x.shape()[1] * x.shape()[2];
                let co = p.shape()[0];
                let od = out.data_mut();
                for j in 0..co {
                    let dst = &mut od[j * plane..(j + 1) * plane];
                    for i in 0..ci {
                        let wt = p.data()[j * ci + i];
                        if wt == 0.0 {
                            continue;
                        }
                        let src = &x.data()[i * plane..(i + 1) * plane];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += wt * s;
                        }
                    }
                }
            }
            Op::MseLoss { pred, target } => {
                let p = values[pred].data();
                let t = values[target].data();
                let n = p.len() as f64;
                out.data_mut()[0] =
                    p.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum::<f64>() / n;
            }
            Op::MaeLoss { pred, target } => {
                let p = values[pred].data();
                let t = values[target].data();
                let n = p.len() as f64;
                out.data_mut()[0] = p.iter().zip(t).map(|(&a, &b)| (a - b).abs()).sum::<f64>() / n;
            }
        }
        Ok(out)
    }

    /// Push gradient contributions to each operand through `sink`.
    pub fn backward(
        &self,
        values: &[Tensor],
        upstream: &Tensor,
        mut sink: impl FnMut(NodeId, Tensor),
    ) -> Result<()> {
        match *self {
            Op::Conv2d { input, weight, bias } => {
                let x = &values[input];
                let w = &values[weight];
                let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (co, k) = (w.shape()[0], w.shape()[2]);
                let half = (k / 2) as i64;
                let plane = h * wd;

                let mut dx = Tensor::zeros(x.shape());
                let mut dw = Tensor::zeros(w.shape());
                let mut db = Tensor::zeros(&[co]);
                for o in 0..co {
                    let g = &upstream.data()[o * plane..(o + 1) * plane];
                    db.data_mut()[o] = g.iter().sum();
                    for i in 0..ci {
                        let src = &x.data()[i * plane..(i + 1) * plane];
                        let wbase = ((o * ci) + i) * k * k;
                        let dst = &mut dx.data_mut()[i * plane..(i + 1) * plane];
                        for u in 0..k {
                            for v in 0..k {
                                let du = u as i64 - half;
                                let dv = v as i64 - half;
                                let wt = w.data()[wbase + u * k + v];
                                let mut wacc = 0.0;
                                for r in 0..h {
                                    let sr = reflect(r as i64 + du, h);
                                    let grow = &g[r * wd..(r + 1) * wd];
                                    for c in 0..wd {
                                        let sc = reflect(c as i64 + dv, wd);
                                        let gv = grow[c];
                                        wacc += gv * src[sr * wd + sc];
                                        dst[sr * wd + sc] += gv * wt;
                                    }
                                }
                                dw.data_mut()[wbase + u * k + v] += wacc;
                            }
                        }
                    }
                }
                sink(input, dx);
                sink(weight, dw);
                sink(bias, db);
            }
            Op::BandMix { input, weight, bias } => {
                let x = &values[input];
                let w = &values[weight];
                let ci = x.shape()[0];
                let plane = x.shape()[1] * x.shape()[2];
                let co = w.shape()[0];
                let mut dx = Tensor::zeros(x.shape());
                let mut dw = Tensor::zeros(w.shape());
                let mut db = Tensor::zeros(&[co]);
                for o in 0..co {
                    let g = &upstream.data()[o * plane..(o + 1) * plane];
                    db.data_mut()[o] = g.iter().sum();
                    for i in 0..ci {
                        let wt = w.data()[o * ci + i];
                        let src = &x.data()[i * plane..(i + 1) * plane];
                        let dst = &mut dx.data_mut()[i * plane..(i + 1) * plane];
                        let mut wacc = 0.0;
                        for ((d, &gv), &s) in dst.iter_mut().zip(g).zip(src) {
                            *d += gv * wt;
                            wacc += gv * s;
                        }
                        dw.data_mut()[o * ci + i] = wacc;
                    }
                }
                sink(input, dx);
                sink(weight, dw);
                sink(bias, db);
            }
            Op::LeakyRelu { input, slope } => {
                let x = values[input].data();
                let mut dx = Tensor::zeros(values[input].shape());
                for ((d, &g), &v) in dx.data_mut().iter_mut().zip(upstream.data()).zip(x) {
                    *d = if v > 0.0 { g } else { g * slope };
                }
                sink(input, dx);
            }
            Op::UpsampleNearest { input, factor } => {
                let x = &values[input];
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (oh, ow) = (h * factor, w * factor);
                let mut dx = Tensor::zeros(x.shape());
                for ch in 0..c {
                    let g = &upstream.data()[ch * oh * ow..(ch + 1) * oh * ow];
                    let dst = &mut dx.data_mut()[ch * h * w..(ch + 1) * h * w];
                    for r in 0..oh {
                        for cc in 0..ow {
                            dst[(r / factor) * w + cc / factor] += g[r * ow + cc];
                        }
                    }
                }
                sink(input, dx);
            }
            Op::UpsampleBilinear { input, factor } => {
                let x = &values[input];
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (oh, ow) = (h * factor, w * factor);
                let row_taps = linear_taps(oh, h, factor);
                let col_taps = linear_taps(ow, w, factor);
                let mut dx = Tensor::zeros(x.shape());
                for ch in 0..c {
                    let g = &upstream.data()[ch * oh * ow..(ch + 1) * oh * ow];
                    let dst = &mut dx.data_mut()[ch * h * w..(ch + 1) * h * w];
                    for (r, &(r0, r1, fr)) in row_taps.iter().enumerate() {
                        for (cc, &(c0, c1, fc)) in col_taps.iter().enumerate() {
                            let gv = g[r * ow + cc];
                            dst[r0 * w + c0] += gv * (1.0 - fr) * (1.0 - fc);
                            dst[r0 * w + c1] += gv * (1.0 - fr) * fc;
                            dst[r1 * w + c0] += gv * fr * (1.0 - fc);
                            dst[r1 * w + c1] += gv * fr * fc;
                        }
                    }
                }
                sink(input, dx);
            }
            Op::Add { a, b } => {
                sink(a, upstream.clone());
                sink(b, upstream.clone());
            }
            Op::Concat { a, b } => {
                let na = values[a].len();
                let mut da = Tensor::zeros(values[a].shape());
                let mut db = Tensor::zeros(values[b].shape());
                da.data_mut().copy_from_slice(&upstream.data()[..na]);
                db.data_mut().copy_from_slice(&upstream.data()[na..]);
                sink(a, da);
                sink(b, db);
            }
            Op::Dense { input, weight, bias } => {
                let x = values[input].data();
                let w = &values[weight];
                let n = x.len();
                let m = w.shape()[0];
                let mut dx = Tensor::zeros(values[input].shape());
                let mut dw = Tensor::zeros(w.shape());
                let mut db = Tensor::zeros(&[m]);
                for o in 0..m {
                    let g = upstream.data()[o];
                    db.data_mut()[o] = g;
                    let row = &w.data()[o * n..(o + 1) * n];
                    let drow = &mut dw.data_mut()[o * n..(o + 1) * n];
                    for i in 0..n {
                        dx.data_mut()[i] += g * row[i];
                        drow[i] = g * x[i];
                    }
                }
                sink(input, dx);
                sink(weight, dw);
                sink(bias, db);
            }
            Op::Modulate { input, scale, shift } => {
                let x = &values[input];
                let c = x.shape()[0];
                let plane = x.shape()[1] * x.shape()[2];
                let mut dx = Tensor::zeros(x.shape());
                let mut dscale = Tensor::zeros(&[c]);
                let mut dshift = Tensor::zeros(&[c]);
                for ch in 0..c {
                    let gain = 1.0 + values[scale].data()[ch];
                    let g = &upstream.data()[ch * plane..(ch + 1) * plane];
                    let src = &x.data()[ch * plane..(ch + 1) * plane];
                    let dst = &mut dx.data_mut()[ch * plane..(ch + 1) * plane];
                    let mut ds = 0.0;
                    let mut dh = 0.0;
                    for ((d, &gv), &v) in dst.iter_mut().zip(g).zip(src) {
                        *d = gv * gain;
                        ds += gv * v;
                        dh += gv;
                    }
                    dscale.data_mut()[ch] = ds;
                    dshift.data_mut()[ch] = dh;
                }
                sink(input, dx);
                sink(scale, dscale);
                sink(shift, dshift);
            }
            Op::Reshape { input, .. } => {
                let mut dx = Tensor::zeros(values[input].shape());
                dx.data_mut().copy_from_slice(upstream.data());
                sink(input, dx);
            }
            Op::SpatialDegrade { input, kernel, factor } => {
                let x = &values[input];
                let k = &values[kernel];
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let ks = k.shape()[0] as i64;
                let half = ks / 2;
                let off = (factor / 2) as i64;
                let (oh, ow) = (h / factor, w / factor);
                let mut dx = Tensor::zeros(x.shape());
                let mut dk = Tensor::zeros(k.shape());
                for ch in 0..c {
                    let g = &upstream.data()[ch * oh * ow..(ch + 1) * oh * ow];
                    let src = &x.data()[ch * h * w..(ch + 1) * h * w];
                    let dst = &mut dx.data_mut()[ch * h * w..(ch + 1) * h * w];
                    for oi in 0..oh {
                        let base_r = (oi * factor) as i64 + off;
                        for oj in 0..ow {
                            let base_c = (oj * factor) as i64 + off;
                            let gv = g[oi * ow + oj];
                            for u in 0..ks {
                                let r = reflect(base_r + u - half, h);
                                for v in 0..ks {
                                    let cc = reflect(base_c + v - half, w);
                                    let idx = (u * ks + v) as usize;
                                    dst[r * w + cc] += gv * k.data()[idx];
                                    dk.data_mut()[idx] += gv * src[r * w + cc];
                                }
                            }
                        }
                    }
                }
                sink(input, dx);
                sink(kernel, dk);
            }
            Op::SpectralDegrade { input, srf } => {
                let x = &values[input];
                let p = &values[srf];
                let ci = x.shape()[0];
                let plane = x.shape()[1] * x.shape()[2];
                let co = p.shape()[0];
                let mut dx = Tensor::zeros(x.shape());
                let mut dp = Tensor::zeros(p.shape());
                for j in 0..co {
                    let g = &upstream.data()[j * plane..(j + 1) * plane];
                    for i in 0..ci {
                        let wt = p.data()[j * ci + i];
                        let src = &x.data()[i * plane..(i + 1) * plane];
                        let dst = &mut dx.data_mut()[i * plane..(i + 1) * plane];
                        let mut pacc = 0.0;
                        for ((d, &gv), &s) in dst.iter_mut().zip(g).zip(src) {
                            *d += gv * wt;
                            pacc += gv * s;
                        }
                        dp.data_mut()[j * ci + i] = pacc;
                    }
                }
                sink(input, dx);
                sink(srf, dp);
            }
            Op::MseLoss { pred, target } => {
                let p = values[pred].data();
                let t = values[target].data();
                let n = p.len() as f64;
                let g = upstream.data()[0];
                let mut dp = Tensor::zeros(values[pred].shape());
                let mut dt = Tensor::zeros(values[target].shape());
                for i in 0..p.len() {
                    let d = 2.0 * (p[i] - t[i]) / n * g;
                    dp.data_mut()[i] = d;
                    dt.data_mut()[i] = -d;
                }
                sink(pred, dp);
                sink(target, dt);
            }
            Op::MaeLoss { pred, target } => {
                let p = values[pred].data();
                let t = values[target].data();
                let n = p.len() as f64;
                let g = upstream.data()[0];
                let mut dp = Tensor::zeros(values[pred].shape());
                let mut dt = Tensor::zeros(values[target].shape());
                for i in 0..p.len() {
                    let diff = p[i] - t[i];
                    let s = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    let d = s / n * g;
                    dp.data_mut()[i] = d;
                    dt.data_mut()[i] = -d;
                }
                sink(pred, dp);
                sink(target, dt);
            }
        }
        Ok(())
    }
}
