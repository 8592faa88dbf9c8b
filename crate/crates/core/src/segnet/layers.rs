//! Tensor kernels on channel-major `[c][h][w]` buffers.

/// Square convolution with odd kernel size and zero "same" padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
}

impl Conv {
    pub const fn new(in_c: usize, out_c: usize, k: usize) -> Self {
        Self { in_c, out_c, k }
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.in_c * self.k * self.k
    }

    pub fn fan_in(&self) -> usize {
        self.in_c * self.k * self.k
    }

    pub fn fan_out(&self) -> usize {
        self.out_c * self.k * self.k
    }

    /// Copies `c` planes into a zero border of width `k/2`.
    fn pad(&self, input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
        let p = self.k / 2;
        let (ph, pw) = (h + 2 * p, w + 2 * p);
        let mut out = vec![0.0; c * ph * pw];
        for ch in 0..c {
            for y in 0..h {
                let src = &input[(ch * h + y) * w..(ch * h + y + 1) * w];
                let at = (ch * ph + y + p) * pw + p;
                out[at..at + w].copy_from_slice(src);
            }
        }
        out
    }

    /// Correlates padded planes with `weight[oc][ic][ky][kx]`.
    fn correlate(
        &self,
        padded: &[f64],
        (in_c, out_c): (usize, usize),
        h: usize,
        w: usize,
        weight: &[f64],
        bias: Option<&[f64]>,
    ) -> Vec<f64> {
        let mut out = vec![0.0; out_c * h * w];
        let mut oc = 0;
        while oc < out_c {
            if out_c - oc >= 2 {
                self.correlate_group::<2>(padded, in_c, h, w, weight, bias, oc, &mut out);
                oc += 2;
            } else {
                self.correlate_group::<1>(padded, in_c, h, w, weight, bias, oc, &mut out);
                oc += 1;
            }
        }
        out
    }

    /// Output channels `oc0..oc0 + G`, eight pixels at a time.
    #[allow(clippy::too_many_arguments)]
    fn correlate_group<const G: usize>(
        &self,
        padded: &[f64],
        in_c: usize,
        h: usize,
        w: usize,
        weight: &[f64],
        bias: Option<&[f64]>,
        oc0: usize,
        out: &mut [f64],
    ) {
        const B: usize = 8;
        let k = self.k;
        let pw = w + k - 1;
        let pplane = (h + k - 1) * pw;
        let kk = k * k;
        for y in 0..h {
            let mut x0 = 0;
            while x0 < w {
                let n = B.min(w - x0);
                let mut acc = [[0.0; B]; G];
                for (g, a) in acc.iter_mut().enumerate() {
                    *a = [bias.map_or(0.0, |b| b[oc0 + g]); B];
                }
                for ic in 0..in_c {
                    for ky in 0..k {
                        let row = &padded[ic * pplane + (y + ky) * pw + x0..];
                        let wr: [&[f64]; G] = std::array::from_fn(|g| {
                            let at = ((oc0 + g) * in_c + ic) * kk + ky * k;
                            &weight[at..at + k]
                        });
                        if n == B {
                            for kx in 0..k {
                                let r: &[f64; B] = row[kx..kx + B].try_into().expect("eight pixels");
                                for g in 0..G {
                                    let wv = wr[g][kx];
                                    for i in 0..B {
                                        acc[g][i] += wv * r[i];
                                    }
                                }
                            }
                        } else {
                            for kx in 0..k {
                                for g in 0..G {
                                    for i in 0..n {
                                        acc[g][i] += wr[g][kx] * row[kx + i];
                                    }
                                }
                            }
                        }
                    }
                }
                for (g, a) in acc.iter().enumerate() {
                    let at = ((oc0 + g) * h + y) * w + x0;
                    out[at..at + n].copy_from_slice(&a[..n]);
                }
                x0 += n;
            }
        }
    }

    pub fn forward(&self, input: &[f64], h: usize, w: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_c * h * w);
        let padded = self.pad(input, self.in_c, h, w);
        self.correlate(&padded, (self.in_c, self.out_c), h, w, weight, Some(bias))
    }

    /// Accumulates weight and bias gradients and returns the input gradient
    /// (skipped when `need_input` is false).
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        input: &[f64],
        h: usize,
        w: usize,
        weight: &[f64],
        grad_out: &[f64],
        grad_weight: &mut [f64],
        grad_bias: &mut [f64],
        need_input: bool,
    ) -> Option<Vec<f64>> {
        let plane = h * w;
        let k = self.k;
        let pw = w + k - 1;
        let pplane = (h + k - 1) * pw;
        let padded = self.pad(input, self.in_c, h, w);
        for oc in 0..self.out_c {
            let go = &grad_out[oc * plane..(oc + 1) * plane];
            grad_bias[oc] += go.iter().sum::<f64>();
            for ic in 0..self.in_c {
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = 0.0;
                        for y in 0..h {
                            let at = ic * pplane + (y + ky) * pw + kx;
                            acc += dot(&go[y * w..(y + 1) * w], &padded[at..at + w]);
                        }
                        grad_weight[((oc * self.in_c + ic) * k + ky) * k + kx] += acc;
                    }
                }
            }
        }
        if !need_input {
            return None;
        }
        // input gradient = correlation of the output gradient with the
        // spatially flipped, channel-transposed kernel
        let mut flipped = vec![0.0; weight.len()];
        for oc in 0..self.out_c {
            for ic in 0..self.in_c {
                for ky in 0..k {
                    for kx in 0..k {
                        flipped[((ic * self.out_c + oc) * k + (k - 1 - ky)) * k + (k - 1 - kx)] =
                            weight[((oc * self.in_c + ic) * k + ky) * k + kx];
                    }
                }
            }
        }
        let padded_go = self.pad(grad_out, self.out_c, h, w);
        Some(self.correlate(&padded_go, (self.out_c, self.in_c), h, w, &flipped, None))
    }
}

/// Dot product with four independent accumulators (fixed summation order).
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            lanes[l] += x[l] * y[l];
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Shifts and scales each plane to zero mean and unit variance; constant
/// planes become all zeros.
pub fn standardize(input: &[f64], c: usize, plane: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(input.len());
    for ch in 0..c {
        let src = &input[ch * plane..(ch + 1) * plane];
        let mean = src.iter().sum::<f64>() / plane as f64;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
        let inv = if var > 1e-16 { 1.0 / var.sqrt() } else { 0.0 };
        out.extend(src.iter().map(|v| (v - mean) * inv));
    }
    out
}

/// 2×2 average pooling; `h` and `w` must be even.
pub fn avg_pool2(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        let src = &input[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                let a = src[2 * y * w + 2 * x] + src[2 * y * w + 2 * x + 1];
                let b = src[(2 * y + 1) * w + 2 * x] + src[(2 * y + 1) * w + 2 * x + 1];
                dst[y * ow + x] = 0.25 * (a + b);
            }
        }
    }
    out
}

/// Adjoint of [`avg_pool2`]: spreads a quarter of each gradient to its 2×2 block.
pub fn avg_pool2_backward(grad_out: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut gin = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                gin[ch * h * w + y * w + x] = 0.25 * grad_out[ch * oh * ow + (y / 2) * ow + x / 2];
            }
        }
    }
    gin
}

/// Nearest-neighbour 2× upsampling from `h×w` to `2h×2w`.
pub fn upsample2(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                out[ch * oh * ow + y * ow + x] = input[ch * h * w + (y / 2) * w + x / 2];
            }
        }
    }
    out
}

/// Adjoint of [`upsample2`]: sums each 2×2 block. `h`, `w` are the small dims.
pub fn upsample2_backward(grad_out: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut gin = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                gin[ch * h * w + (y / 2) * w + x / 2] += grad_out[ch * oh * ow + y * ow + x];
            }
        }
    }
    gin
}

pub fn tanh_inplace(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.tanh());
}

/// Multiplies an upstream gradient by `1 − a²` where `a = tanh(pre)`.
pub fn tanh_backward(activated: &[f64], grad: &mut [f64]) {
    for (g, a) in grad.iter_mut().zip(activated) {
        *g *= 1.0 - a * a;
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
