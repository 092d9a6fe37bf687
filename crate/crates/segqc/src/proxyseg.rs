//! Small dropout-equipped encoder–decoder segmenter.
//!
//! Two jobs: producing snapshot segmentations along its own training
//! trajectory for dataset generation, and serving as the stochastic
//! (Monte-Carlo dropout) probability source for the uncertainty baseline.
//! Accuracy is explicitly not the goal; any probabilistic segmenter
//! satisfies the interface.

use ndarray::{Array3, Array4, ArrayD, IxDyn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegQcError};
use crate::hierarchy::{ClassHierarchy, BACKGROUND};
use crate::mask::LabelMask;
use crate::nn::{init, Adam, NodeId, ParamSet, Tape};
use crate::volume::Volume;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxySegConfig {
    pub in_modalities: usize,
    pub base_channels: usize,
    /// Resolution levels including the bottleneck; `depth - 1` downsamplings.
    pub depth: usize,
    pub dropout_p: f64,
    pub leaky_slope: f64,
}

impl ProxySegConfig {
    pub fn new(in_modalities: usize) -> Self {
        Self { in_modalities, base_channels: 16, depth: 2, dropout_p: 0.5, leaky_slope: 0.01 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dropout_p > 0.0 && self.dropout_p < 1.0) {
            return Err(SegQcError::InvalidConfig("dropout probability must be in (0, 1)".into()));
        }
        if self.depth < 2 {
            return Err(SegQcError::InvalidConfig("depth must be at least 2".into()));
        }
        if self.in_modalities == 0 || self.base_channels == 0 {
            return Err(SegQcError::InvalidConfig("modalities and channels must be positive".into()));
        }
        Ok(())
    }

    pub fn required_divisor(&self) -> usize {
        1 << (self.depth - 1)
    }
}

struct ConvBlock {
    w: usize,
    gamma: usize,
    beta: usize,
    stride: [usize; 3],
    pad: usize,
    channels: usize,
    dropout: bool,
}

impl ConvBlock {
    #[allow(clippy::too_many_arguments)]
    fn new(
        params: &mut ParamSet<f32>,
        rng: &mut impl Rng,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: [usize; 3],
        dropout: bool,
    ) -> Self {
        let w = params.register(
            format!("{name}.weight"),
            init::kaiming_normal(&[cout, cin, k, k, k], cin * k * k * k, rng),
        );
        let gamma = params.register(format!("{name}.gamma"), init::constant(&[cout], 1.0));
        let beta = params.register(format!("{name}.beta"), init::constant(&[cout], 0.0));
        Self { w, gamma, beta, stride, pad: k / 2, channels: cout, dropout }
    }

    fn apply(
        &self,
        tape: &mut Tape<f32>,
        params: &ParamSet<f32>,
        x: NodeId,
        slope: f64,
        dropout: &mut Option<(&mut dyn RngCore, f64)>,
    ) -> NodeId {
        let w = tape.param(params.tensor(self.w).clone(), self.w);
        let mut y = tape.conv3d(x, w, None, self.stride, self.pad);
        let g = tape.param(params.tensor(self.gamma).clone(), self.gamma);
        let b = tape.param(params.tensor(self.beta).clone(), self.beta);
        y = tape.instance_norm(y, g, b, 1e-5);
        y = tape.leaky_relu(y, slope);
        if self.dropout {
            if let Some((rng, p)) = dropout {
                let keep: Vec<bool> = (0..self.channels)
                    .map(|_| rng.next_u32() as f64 / u32::MAX as f64 >= *p)
                    .collect();
                y = tape.channel_dropout(y, keep, 1.0 / (1.0 - *p));
            }
        }
        y
    }
}

struct Level {
    block_a: ConvBlock,
    block_b: ConvBlock,
}

pub struct ProxySegNet {
    config: ProxySegConfig,
    hierarchy: ClassHierarchy,
    params: ParamSet<f32>,
    encoder: Vec<Level>,
    downs: Vec<ConvBlock>,
    up_reduces: Vec<ConvBlock>,
    dec_blocks: Vec<ConvBlock>,
    head_w: usize,
    head_b: usize,
}

impl ProxySegNet {
    pub fn new(config: ProxySegConfig, hierarchy: ClassHierarchy, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let f = config.base_channels;
        let classes_out = hierarchy.num_base_labels() + 1;

        let mut encoder = Vec::new();
        let mut downs = Vec::new();
        let mut cin = config.in_modalities;
        for level in 0..config.depth {
            let width = f << level;
            encoder.push(Level {
                block_a: ConvBlock::new(
                    &mut params,
                    &mut rng,
                    &format!("enc{level}.a"),
                    cin,
                    width,
                    3,
                    [1; 3],
                    true,
                ),
                block_b: ConvBlock::new(
                    &mut params,
                    &mut rng,
                    &format!("enc{level}.b"),
                    width,
                    width,
                    3,
                    [1; 3],
                    true,
                ),
            });
            if level + 1 < config.depth {
                downs.push(ConvBlock::new(
                    &mut params,
                    &mut rng,
                    &format!("down{level}"),
                    width,
                    width * 2,
                    3,
                    [2; 3],
                    false,
                ));
            }
            cin = width * 2;
        }

        let mut up_reduces = Vec::new();
        let mut dec_blocks = Vec::new();
        for level in (0..config.depth - 1).rev() {
            let skip_w = f << level;
            let from_w = skip_w * 2;
            up_reduces.push(ConvBlock::new(
                &mut params,
                &mut rng,
                &format!("up{level}.reduce"),
                from_w,
                skip_w,
                1,
                [1; 3],
                false,
            ));
            dec_blocks.push(ConvBlock::new(
                &mut params,
                &mut rng,
                &format!("up{level}.conv"),
                skip_w * 2,
                skip_w,
                3,
                [1; 3],
                true,
            ));
        }

        let head_w = params.register(
            "head.weight",
            init::kaiming_normal(&[classes_out, f, 1, 1, 1], f, &mut rng),
        );
        let head_b = params.register("head.bias", init::constant(&[classes_out], 0.0));

        Ok(Self {
            config,
            hierarchy,
            params,
            encoder,
            downs,
            up_reduces,
            dec_blocks,
            head_w,
            head_b,
        })
    }

    pub fn config(&self) -> &ProxySegConfig {
        &self.config
    }

    pub fn hierarchy(&self) -> &ClassHierarchy {
        &self.hierarchy
    }

    fn check_shape(&self, shape: [usize; 3]) -> Result<()> {
        let div = self.config.required_divisor();
        if shape.iter().any(|&s| s % div != 0) {
            return Err(SegQcError::IndivisibleShape {
                shape: shape.to_vec(),
                required: vec![div; 3],
            });
        }
        Ok(())
    }

    /// Forward pass producing the softmax probability node over
    /// `num_base_labels + 1` channels (background first).
    fn forward(
        &self,
        volume: &Volume,
        mut dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<(Tape<f32>, NodeId)> {
        if volume.num_modalities() != self.config.in_modalities {
            return Err(SegQcError::InvalidConfig(format!(
                "proxy expects {} modalities, got {}",
                self.config.in_modalities,
                volume.num_modalities()
            )));
        }
        self.check_shape(volume.spatial_shape())?;
        let mut tape = Tape::without_input_grads();
        let x = tape.input(volume.data().clone().into_dyn());
        let slope = self.config.leaky_slope;
        let p = self.config.dropout_p;

        let mut skips = Vec::new();
        let mut cur = x;
        for (level, enc) in self.encoder.iter().enumerate() {
            let mut dropout = dropout_rng.as_deref_mut().map(|r| (r as &mut dyn RngCore, p));
            cur = enc.block_a.apply(&mut tape, &self.params, cur, slope, &mut dropout);
            cur = enc.block_b.apply(&mut tape, &self.params, cur, slope, &mut dropout);
            if level + 1 < self.config.depth {
                skips.push(cur);
                let mut no_drop = None;
                cur = self.downs[level].apply(&mut tape, &self.params, cur, slope, &mut no_drop);
            }
        }
        for (i, (reduce, conv)) in self.up_reduces.iter().zip(self.dec_blocks.iter()).enumerate() {
            let skip = skips[skips.len() - 1 - i];
            let up = tape.upsample_nearest(cur, [2, 2, 2]);
            let mut no_drop = None;
            let red = reduce.apply(&mut tape, &self.params, up, slope, &mut no_drop);
            let cat = tape.concat_channels(&[red, skip]);
            let mut dropout = dropout_rng.as_deref_mut().map(|r| (r as &mut dyn RngCore, p));
            cur = conv.apply(&mut tape, &self.params, cat, slope, &mut dropout);
        }
        let hw = tape.param(self.params.tensor(self.head_w).clone(), self.head_w);
        let hb = tape.param(self.params.tensor(self.head_b).clone(), self.head_b);
        let logits = tape.conv3d(cur, hw, Some(hb), [1; 3], 0);
        let probs = tape.softmax_channels(logits);
        Ok((tape, probs))
    }

    /// Deterministic per-voxel class probabilities, shape (L+1, D, H, W).
    pub fn segment(&self, volume: &Volume) -> Result<Array4<f32>> {
        let (tape, probs) = self.forward(volume, None)?;
        Ok(to_array4(tape.value(probs).view().into_owned()))
    }

    /// Argmax labels of [`ProxySegNet::segment`], mapped back to base codes.
    pub fn segment_labels(&self, volume: &Volume) -> Result<LabelMask> {
        let probs = self.segment(volume)?;
        Ok(self.argmax_labels(&probs))
    }

    pub fn argmax_labels(&self, probs: &Array4<f32>) -> LabelMask {
        let (l, d, h, w) = probs.dim();
        let codes: Vec<u8> = std::iter::once(BACKGROUND)
            .chain(self.hierarchy.base_labels().iter().map(|b| b.code))
            .collect();
        debug_assert_eq!(codes.len(), l);
        let out = Array3::from_shape_fn((d, h, w), |(z, y, x)| {
            let mut best = 0usize;
            let mut best_p = f32::NEG_INFINITY;
            for (ci, &code) in codes.iter().enumerate() {
                let _ = code;
                let p = probs[[ci, z, y, x]];
                if p > best_p {
                    best_p = p;
                    best = ci;
                }
            }
            codes[best]
        });
        LabelMask::new_unchecked(out, self.hierarchy.clone())
    }

    /// Mean softmax probability over `t` stochastic dropout passes
    /// (`dropout = false` degenerates to `t` identical deterministic passes).
    pub fn mc_dropout_umap(
        &self,
        volume: &Volume,
        t: usize,
        seed: u64,
        dropout: bool,
    ) -> Result<Array4<f32>> {
        if t == 0 {
            return Err(SegQcError::InvalidConfig("need at least one pass".into()));
        }
        let mut acc: Option<Array4<f32>> = None;
        for pass in 0..t {
            let probs = if dropout {
                let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(pass as u64));
                let (tape, node) = self.forward(volume, Some(&mut rng))?;
                to_array4(tape.value(node).view().into_owned())
            } else {
                self.segment(volume)?
            };
            acc = Some(match acc {
                None => probs,
                Some(mut a) => {
                    a.zip_mut_with(&probs, |x, &y| *x += y);
                    a
                }
            });
        }
        let mut mean = acc.expect("t >= 1");
        mean.mapv_inplace(|v| v / t as f32);
        Ok(mean)
    }

    /// Trains with voxel-wise cross entropy against the ground-truth labels;
    /// returns the per-epoch mean loss. One Adam step per case.
    pub fn train(
        &mut self,
        cases: &[(&Volume, &LabelMask)],
        epochs: usize,
        lr: f64,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if cases.is_empty() {
            return Err(SegQcError::InvalidConfig("no training cases".into()));
        }
        let mut opt = Adam::new(&self.params);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let codes: Vec<u8> = std::iter::once(BACKGROUND)
            .chain(self.hierarchy.base_labels().iter().map(|b| b.code))
            .collect();
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let mut order: Vec<usize> = (0..cases.len()).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for (step, &i) in order.iter().enumerate() {
                let (vol, gt) = cases[i];
                let (tape, probs_node) = self.forward(vol, Some(&mut rng))?;
                let probs = tape.value(probs_node);
                let (loss, grad) = softmax_ce(&probs.view().into_owned(), gt, &codes);
                if !loss.is_finite() {
                    return Err(SegQcError::Divergence { epoch, step });
                }
                epoch_loss += loss;
                let grads = tape.backward(vec![(probs_node, grad)]);
                let pg = tape.param_grads(&grads, &self.params);
                opt.step(&mut self.params, &pg, lr, 0.0);
            }
            history.push(epoch_loss / cases.len() as f64);
        }
        Ok(history)
    }
}

fn to_array4(a: ArrayD<f32>) -> Array4<f32> {
    a.into_dimensionality::<ndarray::Ix4>().expect("4-d tensor")
}

/// Cross entropy of softmax probabilities against integer labels, with the
/// gradient w.r.t. the probabilities.
fn softmax_ce(probs: &ArrayD<f32>, gt: &LabelMask, codes: &[u8]) -> (f64, ArrayD<f32>) {
    let shape = probs.shape();
    let voxels: usize = shape[1..].iter().product();
    let ps = probs.as_slice().expect("standard layout");
    let gs = gt.data().as_slice().expect("contiguous labels");
    let mut chan_of = [0usize; 256];
    for (ci, &code) in codes.iter().enumerate() {
        chan_of[code as usize] = ci;
    }
    let mut loss = 0.0f64;
    let mut grad = vec![0.0f32; ps.len()];
    let inv_v = 1.0 / voxels as f64;
    for (v, &code) in gs.iter().enumerate() {
        let ci = chan_of[code as usize];
        let p = ps[ci * voxels + v].max(1e-7);
        loss -= (p as f64).ln() * inv_v;
        grad[ci * voxels + v] = -(inv_v as f32) / p;
    }
    (loss, ArrayD::from_shape_vec(IxDyn(shape), grad).expect("same shape"))
}


/// Checkpoint: opaque weights blob + `config.json` sidecar.
pub mod checkpoint {
    use std::fs;
    use std::path::Path;

    use serde::{Deserialize, Serialize};

    use super::{ProxySegConfig, ProxySegNet};
    use crate::error::{Result, SegQcError};
    use crate::hierarchy::ClassHierarchy;

    #[derive(Serialize, Deserialize)]
    struct ProxySidecar {
        schema_version: u32,
        config: ProxySegConfig,
        hierarchy: ClassHierarchy,
    }

    pub fn save_proxy(net: &ProxySegNet, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| SegQcError::io(dir.display().to_string(), e))?;
        let sidecar = ProxySidecar {
            schema_version: 1,
            config: net.config().clone(),
            hierarchy: net.hierarchy().clone(),
        };
        let p = dir.join("config.json");
        fs::write(&p, serde_json::to_string_pretty(&sidecar)?)
            .map_err(|e| SegQcError::io(p.display().to_string(), e))?;
        let mut buf = Vec::new();
        net.params.save(&mut buf)?;
        let p = dir.join("weights.bin");
        fs::write(&p, buf).map_err(|e| SegQcError::io(p.display().to_string(), e))?;
        Ok(())
    }

    pub fn load_proxy(dir: &Path) -> Result<ProxySegNet> {
        let p = dir.join("config.json");
        let raw =
            fs::read_to_string(&p).map_err(|e| SegQcError::io(p.display().to_string(), e))?;
        let sidecar: ProxySidecar = serde_json::from_str(&raw)?;
        if sidecar.schema_version != 1 {
            return Err(SegQcError::CheckpointMismatch(format!(
                "unsupported proxy schema {}",
                sidecar.schema_version
            )));
        }
        let mut net = ProxySegNet::new(sidecar.config, sidecar.hierarchy, 0)?;
        let p = dir.join("weights.bin");
        let bytes = fs::read(&p).map_err(|e| SegQcError::io(p.display().to_string(), e))?;
        net.params.load(&mut bytes.as_slice())?;
        Ok(net)
    }

    #[cfg(test)]
    mod tests {
        use super::*;
        use crate::datagen::{generate_phantom, PhantomSpec};

        #[test]
        fn proxy_checkpoint_round_trip() {
            let (vol, _) = generate_phantom(&PhantomSpec::default_brain(12), 1).unwrap();
            let net =
                ProxySegNet::new(ProxySegConfig::new(1), ClassHierarchy::brats(), 8).unwrap();
            let dir = tempfile::tempdir().unwrap();
            save_proxy(&net, dir.path()).unwrap();
            let back = load_proxy(dir.path()).unwrap();
            assert_eq!(net.segment(&vol).unwrap(), back.segment(&vol).unwrap());
        }
    }
}
