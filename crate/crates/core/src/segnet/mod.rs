//! Small from-scratch convolutional networks and the shared SGD trainer.
//!
//! [`SegNet`] is a one-level encoder–decoder with a skip connection that maps
//! an image to a per-pixel probability map. [`ScoreNet`] reuses the same
//! encoder blocks, global-average-pools them and emits one logit.

pub mod checkpoint;
pub mod layers;
pub mod task;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{ensure_same, GrayImage, ProbMap};
use layers::{
    avg_pool2, avg_pool2_backward, sigmoid, standardize, tanh_backward, tanh_inplace, upsample2,
    upsample2_backward, Conv,
};

/// Flat parameter vector in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params(pub Vec<f64>);

impl Params {
    pub fn zeros(n: usize) -> Self {
        Params(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Uniform initialisation bound `√(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Shape of the encoder–decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSpec {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub enc1: usize,
    pub enc2: usize,
    pub dec: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            in_channels: 1,
            enc1: 8,
            enc2: 16,
            dec: 8,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < 2 || self.width < 2 || self.height % 2 != 0 || self.width % 2 != 0 {
            return Err(Error::config(
                "network.height/width",
                "must be even and at least 2 (one 2x downsampling level)",
            ));
        }
        if self.in_channels == 0 || self.enc1 == 0 || self.enc2 == 0 || self.dec == 0 {
            return Err(Error::config("network channels", "must be positive"));
        }
        Ok(())
    }
}

/// A contiguous block of the parameter vector.
#[derive(Debug, Clone, Copy)]
struct Block {
    conv: Conv,
    w: usize,
    b: usize,
}

impl Block {
    fn weight<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + self.conv.weight_len()]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.b + self.conv.out_c]
    }

    fn grads<'a>(&self, g: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        let (head, tail) = g.split_at_mut(self.b);
        (&mut head[self.w..self.w + self.conv.weight_len()], &mut tail[..self.conv.out_c])
    }
}

fn layout(convs: &[Conv]) -> (Vec<Block>, usize) {
    let mut off = 0;
    let blocks = convs
        .iter()
        .map(|&conv| {
            let w = off;
            let b = w + conv.weight_len();
            off = b + conv.out_c;
            Block { conv, w, b }
        })
        .collect();
    (blocks, off)
}

fn init_blocks(blocks: &[Block], total: usize, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![0.0; total];
    for blk in blocks {
        let s = glorot_bound(blk.conv.fan_in(), blk.conv.fan_out());
        for v in &mut p[blk.w..blk.w + blk.conv.weight_len()] {
            *v = rng.random_range(-s..=s);
        }
    }
    Params(p)
}

/// Encoder–decoder segmenter: conv → pool → conv → upsample ⊕ skip → conv → 1×1 → sigmoid.
#[derive(Debug, Clone)]
pub struct SegNet {
    spec: NetworkSpec,
    blocks: Vec<Block>,
    n_params: usize,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct SegCache {
    input: Vec<f64>,
    a1: Vec<f64>,
    p1: Vec<f64>,
    a2: Vec<f64>,
    cat: Vec<f64>,
    a3: Vec<f64>,
    y: Vec<f64>,
}

impl SegNet {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let convs = [
            Conv::new(spec.in_channels, spec.enc1, 3),
            Conv::new(spec.enc1, spec.enc2, 3),
            Conv::new(spec.enc1 + spec.enc2, spec.dec, 3),
            Conv::new(spec.dec, 1, 1),
        ];
        let (blocks, n_params) = layout(&convs);
        Ok(Self {
            spec,
            blocks,
            n_params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.n_params
    }

    /// Uniform weights within the Glorot bound of each layer, zero biases.
    pub fn init_params(&self, seed: u64) -> Params {
        init_blocks(&self.blocks, self.n_params, seed)
    }

    /// Per-layer `(weight_range, bias_range, bound)` for inspecting initialisation.
    pub fn layer_bounds(&self) -> Vec<(std::ops::Range<usize>, std::ops::Range<usize>, f64)> {
        self.blocks
            .iter()
            .map(|b| {
                (
                    b.w..b.w + b.conv.weight_len(),
                    b.b..b.b + b.conv.out_c,
                    glorot_bound(b.conv.fan_in(), b.conv.fan_out()),
                )
            })
            .collect()
    }

    fn check(&self, params: &Params, input_len: usize) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::LengthMismatch {
                what: "parameter vector",
                left: params.len(),
                right: self.n_params,
            });
        }
        let want = self.spec.in_channels * self.spec.height * self.spec.width;
        if input_len != want {
            return Err(Error::LengthMismatch {
                what: "network input",
                left: input_len,
                right: want,
            });
        }
        Ok(())
    }

    /// Forward pass over a raw channel-major input buffer.
    pub fn forward_raw(&self, params: &Params, input: &[f64]) -> Result<SegCache> {
        self.check(params, input.len())?;
        let p = params.as_slice();
        let (h, w) = (self.spec.height, self.spec.width);
        let (h2, w2) = (h / 2, w / 2);
        let [b1, b2, b3, b4] = [self.blocks[0], self.blocks[1], self.blocks[2], self.blocks[3]];

        let input = standardize(input, self.spec.in_channels, h * w);
        let mut a1 = b1.conv.forward(&input, h, w, b1.weight(p), b1.bias(p));
        tanh_inplace(&mut a1);
        let p1 = avg_pool2(&a1, b1.conv.out_c, h, w);
        let mut a2 = b2.conv.forward(&p1, h2, w2, b2.weight(p), b2.bias(p));
        tanh_inplace(&mut a2);
        let u2 = upsample2(&a2, b2.conv.out_c, h2, w2);
        let mut cat = Vec::with_capacity(a1.len() + u2.len());
        cat.extend_from_slice(&a1);
        cat.extend_from_slice(&u2);
        let mut a3 = b3.conv.forward(&cat, h, w, b3.weight(p), b3.bias(p));
        tanh_inplace(&mut a3);
        let z = b4.conv.forward(&a3, h, w, b4.weight(p), b4.bias(p));
        let y = z.into_iter().map(sigmoid).collect();
        Ok(SegCache {
            input,
            a1,
            p1,
            a2,
            cat,
            a3,
            y,
        })
    }

    pub fn forward(&self, params: &Params, image: &GrayImage) -> Result<ProbMap> {
        ensure_same((self.spec.height, self.spec.width), image.shape())?;
        let cache = self.forward_raw(params, image.data())?;
        ProbMap::new(self.spec.height, self.spec.width, cache.y)
    }

    /// Reverse-mode gradients of `Σ_j loss_grad_j · y_j` with respect to every parameter.
    pub fn backward_cached(&self, params: &Params, cache: &SegCache, loss_grad: &[f64]) -> Result<Vec<f64>> {
        let (h, w) = (self.spec.height, self.spec.width);
        if loss_grad.len() != h * w {
            return Err(Error::LengthMismatch {
                what: "loss gradient",
                left: loss_grad.len(),
                right: h * w,
            });
        }
        let p = params.as_slice();
        let (h2, w2) = (h / 2, w / 2);
        let [b1, b2, b3, b4] = [self.blocks[0], self.blocks[1], self.blocks[2], self.blocks[3]];
        let mut g = vec![0.0; self.n_params];

        let dz: Vec<f64> = loss_grad
            .iter()
            .zip(&cache.y)
            .map(|(gy, y)| gy * y * (1.0 - y))
            .collect();
        let (gw, gb) = b4.grads(&mut g);
        let mut da3 = b4
            .conv
            .backward(&cache.a3, h, w, b4.weight(p), &dz, gw, gb, true)
            .expect("input grad requested");
        tanh_backward(&cache.a3, &mut da3);
        let (gw, gb) = b3.grads(&mut g);
        let dcat = b3
            .conv
            .backward(&cache.cat, h, w, b3.weight(p), &da3, gw, gb, true)
            .expect("input grad requested");
        let split = b1.conv.out_c * h * w;
        let mut da1 = dcat[..split].to_vec();
        let mut da2 = upsample2_backward(&dcat[split..], b2.conv.out_c, h2, w2);
        tanh_backward(&cache.a2, &mut da2);
        let (gw, gb) = b2.grads(&mut g);
        let dp1 = b2
            .conv
            .backward(&cache.p1, h2, w2, b2.weight(p), &da2, gw, gb, true)
            .expect("input grad requested");
        for (d, e) in da1.iter_mut().zip(avg_pool2_backward(&dp1, b1.conv.out_c, h, w)) {
            *d += e;
        }
        tanh_backward(&cache.a1, &mut da1);
        let (gw, gb) = b1.grads(&mut g);
        b1.conv
            .backward(&cache.input, h, w, b1.weight(p), &da1, gw, gb, false);
        Ok(g)
    }

    pub fn backward(&self, params: &Params, image: &GrayImage, loss_grad: &[f64]) -> Result<Vec<f64>> {
        ensure_same((self.spec.height, self.spec.width), image.shape())?;
        let cache = self.forward_raw(params, image.data())?;
        self.backward_cached(params, &cache, loss_grad)
    }
}

impl SegCache {
    pub fn output(&self) -> &[f64] {
        &self.y
    }
}

/// Image-level scorer: two encoder blocks, global average pooling, one logit.
#[derive(Debug, Clone)]
pub struct ScoreNet {
    spec: NetworkSpec,
    blocks: Vec<Block>,
    n_params: usize,
}

#[derive(Debug, Clone)]
pub struct ScoreCache {
    input: Vec<f64>,
    a1: Vec<f64>,
    p1: Vec<f64>,
    a2: Vec<f64>,
    pooled: Vec<f64>,
    pub logit: f64,
}

impl ScoreNet {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let convs = [
            Conv::new(spec.in_channels, spec.enc1, 3),
            Conv::new(spec.enc1, spec.enc2, 3),
            // dense head stored as a 1×1 convolution over the pooled vector
            Conv::new(spec.enc2, 1, 1),
        ];
        let (blocks, n_params) = layout(&convs);
        Ok(Self {
            spec,
            blocks,
            n_params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.n_params
    }

    pub fn init_params(&self, seed: u64) -> Params {
        init_blocks(&self.blocks, self.n_params, seed)
    }

    pub fn forward_raw(&self, params: &Params, input: &[f64]) -> Result<ScoreCache> {
        let want = self.spec.in_channels * self.spec.height * self.spec.width;
        if input.len() != want || params.len() != self.n_params {
            return Err(Error::LengthMismatch {
                what: "score network input/params",
                left: input.len(),
                right: want,
            });
        }
        let p = params.as_slice();
        let (h, w) = (self.spec.height, self.spec.width);
        let (h2, w2) = (h / 2, w / 2);
        let [b1, b2, b3] = [self.blocks[0], self.blocks[1], self.blocks[2]];
        let input = standardize(input, self.spec.in_channels, h * w);
        let mut a1 = b1.conv.forward(&input, h, w, b1.weight(p), b1.bias(p));
        tanh_inplace(&mut a1);
        let p1 = avg_pool2(&a1, b1.conv.out_c, h, w);
        let mut a2 = b2.conv.forward(&p1, h2, w2, b2.weight(p), b2.bias(p));
        tanh_inplace(&mut a2);
        let plane = h2 * w2;
        let pooled: Vec<f64> = a2
            .chunks(plane)
            .map(|c| c.iter().sum::<f64>() / plane as f64)
            .collect();
        let logit = b3.conv.forward(&pooled, 1, 1, b3.weight(p), b3.bias(p))[0];
        Ok(ScoreCache {
            input,
            a1,
            p1,
            a2,
            pooled,
            logit,
        })
    }

    /// Gradient of `dlogit · logit` with respect to every parameter.
    pub fn backward_cached(&self, params: &Params, cache: &ScoreCache, dlogit: f64) -> Vec<f64> {
        let p = params.as_slice();
        let (h, w) = (self.spec.height, self.spec.width);
        let (h2, w2) = (h / 2, w / 2);
        let [b1, b2, b3] = [self.blocks[0], self.blocks[1], self.blocks[2]];
        let mut g = vec![0.0; self.n_params];
        let (gw, gb) = b3.grads(&mut g);
        let dpool = b3
            .conv
            .backward(&cache.pooled, 1, 1, b3.weight(p), &[dlogit], gw, gb, true)
            .expect("input grad requested");
        let plane = h2 * w2;
        let mut da2: Vec<f64> = dpool
            .iter()
            .flat_map(|&d| std::iter::repeat(d / plane as f64).take(plane))
            .collect();
        tanh_backward(&cache.a2, &mut da2);
        let (gw, gb) = b2.grads(&mut g);
        let dp1 = b2
            .conv
            .backward(&cache.p1, h2, w2, b2.weight(p), &da2, gw, gb, true)
            .expect("input grad requested");
        let mut da1 = avg_pool2_backward(&dp1, b1.conv.out_c, h, w);
        tanh_backward(&cache.a1, &mut da1);
        let (gw, gb) = b1.grads(&mut g);
        b1.conv
            .backward(&cache.input, h, w, b1.weight(p), &da1, gw, gb, false);
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> NetworkSpec {
        NetworkSpec {
            height: 8,
            width: 6,
            ..NetworkSpec::default()
        }
    }

    fn image(spec: &NetworkSpec) -> GrayImage {
        let n = spec.height * spec.width;
        GrayImage::new(
            spec.height,
            spec.width,
            (0..n).map(|i| ((i * 37) % 17) as f64 / 16.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn default_network_is_small() {
        let net = SegNet::new(NetworkSpec::default()).unwrap();
        assert!(net.param_count() <= 100_000);
        assert_eq!(net.param_count(), 80 + 1168 + 1736 + 9);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let net = SegNet::new(small_spec()).unwrap();
        assert_eq!(net.init_params(5), net.init_params(5));
        assert_ne!(net.init_params(5), net.init_params(6));
        let p = net.init_params(11);
        for (wr, br, bound) in net.layer_bounds() {
            assert!(p.0[wr].iter().all(|v| v.abs() <= bound));
            assert!(p.0[br].iter().all(|&v| v == 0.0));
        }
        assert!((glorot_bound(72, 72) - (6.0f64 / 144.0).sqrt()).abs() < 1e-15);
        assert!((glorot_bound(72, 72) - 0.2041).abs() < 1e-4);
    }

    #[test]
    fn zero_params_give_one_half() {
        let spec = small_spec();
        let net = SegNet::new(spec).unwrap();
        let out = net.forward(&Params::zeros(net.param_count()), &image(&spec)).unwrap();
        assert_eq!(out.shape(), (8, 6));
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn rejects_bad_shapes() {
        let spec = small_spec();
        let net = SegNet::new(spec).unwrap();
        let p = net.init_params(0);
        assert!(net.forward(&p, &GrayImage::filled(4, 4, 0.1).unwrap()).is_err());
        assert!(net.backward(&p, &image(&spec), &[0.0; 3]).is_err());
        assert!(SegNet::new(NetworkSpec { height: 7, ..spec }).is_err());
    }

    #[test]
    fn backward_is_linear_in_loss_grad() {
        let spec = small_spec();
        let net = SegNet::new(spec).unwrap();
        let p = net.init_params(3);
        let img = image(&spec);
        let n = spec.height * spec.width;
        let zero = net.backward(&p, &img, &vec![0.0; n]).unwrap();
        assert!(zero.iter().all(|&g| g == 0.0));
        let g1: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let g2: Vec<f64> = g1.iter().map(|v| 2.0 * v).collect();
        let a = net.backward(&p, &img, &g1).unwrap();
        let b = net.backward(&p, &img, &g2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn seg_gradient_matches_finite_differences() {
        let spec = small_spec();
        let net = SegNet::new(spec).unwrap();
        let mut p = net.init_params(9);
        // nonzero biases exercise every path
        for (i, v) in p.0.iter_mut().enumerate() {
            *v += 0.01 * ((i % 5) as f64 - 2.0);
        }
        let img = image(&spec);
        let n = spec.height * spec.width;
        let weights: Vec<f64> = (0..n).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let objective = |p: &Params| -> f64 {
            let y = net.forward(p, &img).unwrap();
            y.data().iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let analytic = net.backward(&p, &img, &weights).unwrap();
        let h = 1e-5;
        for i in (0..p.len()).step_by(7) {
            let mut plus = p.clone();
            plus.0[i] += h;
            let mut minus = p.clone();
            minus.0[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
            assert!(err < 1e-4, "param {i}: fd {fd} analytic {}", analytic[i]);
        }
    }

    #[test]
    fn score_gradient_matches_finite_differences() {
        let spec = NetworkSpec {
            in_channels: 3,
            ..small_spec()
        };
        let net = ScoreNet::new(spec).unwrap();
        let mut p = net.init_params(4);
        for (i, v) in p.0.iter_mut().enumerate() {
            *v += 0.02 * ((i % 3) as f64 - 1.0);
        }
        let n = 3 * spec.height * spec.width;
        let x: Vec<f64> = (0..n).map(|i| ((i * 29) % 11) as f64 / 10.0).collect();
        let analytic = net.backward_cached(&p, &net.forward_raw(&p, &x).unwrap(), 1.0);
        let h = 1e-5;
        for i in 0..p.len() {
            let mut plus = p.clone();
            plus.0[i] += h;
            let mut minus = p.clone();
            minus.0[i] -= h;
            let fd = (net.forward_raw(&plus, &x).unwrap().logit - net.forward_raw(&minus, &x).unwrap().logit)
                / (2.0 * h);
            let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
            assert!(err < 1e-4, "param {i}: fd {fd} analytic {}", analytic[i]);
        }
    }
}
