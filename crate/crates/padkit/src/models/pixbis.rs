//! Pixel-wise binary supervision network.
//!
//! Backbone: the stem plus the first two dense blocks (and both transition
//! layers) of a 121-layer densely connected network — growth 32, bottleneck
//! width 4×growth, 0.5 transition compression. A 224×224 input reaches the
//! second transition at 14×14 with 256 channels; a 1×1 convolution produces
//! the 14×14 pixel logit map and a dense layer over the flattened map gives
//! the binary logit.

use crate::error::Result;
use crate::mixstyle::InsertionPoint;
use crate::nn::layers::{BatchNorm2d, Conv2dLayer, LinearLayer};
use crate::nn::{avg_pool2d, global_avg_pool, max_pool2d, ops, Elem, Initializer, ParamStore, Tape, Var};

use super::{ForwardCtx, ModelOutput};

const GROWTH: usize = 32;
const BN_SIZE: usize = 4;

/// Side length of the pixel supervision map for 224×224 inputs.
pub const PIXEL_MAP_SIDE: usize = 14;

struct DenseLayer {
    bn1: BatchNorm2d,
    conv1: Conv2dLayer,
    bn2: BatchNorm2d,
    conv2: Conv2dLayer,
}

impl DenseLayer {
    fn new<F: Elem>(
        store: &mut ParamStore<F>,
        init: &mut Initializer,
        name: &str,
        cin: usize,
    ) -> Self {
        let bottleneck = BN_SIZE * GROWTH;
        Self {
            bn1: BatchNorm2d::new(store, init, &format!("{name}.norm1"), cin),
            conv1: Conv2dLayer::new(store, init, &format!("{name}.conv1"), cin, bottleneck, 1, 1, 0, false),
            bn2: BatchNorm2d::new(store, init, &format!("{name}.norm2"), bottleneck),
            conv2: Conv2dLayer::new(store, init, &format!("{name}.conv2"), bottleneck, GROWTH, 3, 1, 1, false),
        }
    }

    /// Produces `growth` new channels and concatenates them onto the input.
    fn forward<F: Elem>(
        &self,
        tape: &Tape<F>,
        store: &mut ParamStore<F>,
        x: Var,
        training: bool,
    ) -> Var {
        let mut new = self.bn1.forward(tape, store, x, training);
        new = ops::relu(tape, new);
        new = self.conv1.forward(tape, store, new);
        new = self.bn2.forward(tape, store, new, training);
        new = ops::relu(tape, new);
        new = self.conv2.forward(tape, store, new);
        ops::concat(tape, &[x, new], 1)
    }
}

struct Transition {
    bn: BatchNorm2d,
    conv: Conv2dLayer,
}

impl Transition {
    fn new<F: Elem>(
        store: &mut ParamStore<F>,
        init: &mut Initializer,
        name: &str,
        cin: usize,
        cout: usize,
    ) -> Self {
        Self {
            bn: BatchNorm2d::new(store, init, &format!("{name}.norm"), cin),
            conv: Conv2dLayer::new(store, init, &format!("{name}.conv"), cin, cout, 1, 1, 0, false),
        }
    }

    fn forward<F: Elem>(
        &self,
        tape: &Tape<F>,
        store: &mut ParamStore<F>,
        x: Var,
        training: bool,
    ) -> Var {
        let mut out = self.bn.forward(tape, store, x, training);
        out = ops::relu(tape, out);
        out = self.conv.forward(tape, store, out);
        avg_pool2d(tape, out, 2, 2)
    }
}

pub struct PixBisNet {
    conv0: Conv2dLayer,
    bn0: BatchNorm2d,
    block1: Vec<DenseLayer>,
    trans1: Transition,
    block2: Vec<DenseLayer>,
    trans2: Transition,
    pixel_conv: Conv2dLayer,
    binary_fc: LinearLayer,
}

impl PixBisNet {
    pub fn new<F: Elem>(store: &mut ParamStore<F>, init: &mut Initializer) -> Self {
        let conv0 = Conv2dLayer::new(store, init, "features.conv0", 3, 64, 7, 2, 3, false);
        let bn0 = BatchNorm2d::new(store, init, "features.norm0", 64);
        let mut chans = 64;
        let mut block1 = Vec::new();
        for i in 0..6 {
            block1.push(DenseLayer::new(
                store,
                init,
                &format!("features.denseblock1.denselayer{}", i + 1),
                chans,
            ));
            chans += GROWTH;
        }
        let trans1 = Transition::new(store, init, "features.transition1", chans, chans / 2);
        chans /= 2;
        let mut block2 = Vec::new();
        for i in 0..12 {
            block2.push(DenseLayer::new(
                store,
                init,
                &format!("features.denseblock2.denselayer{}", i + 1),
                chans,
            ));
            chans += GROWTH;
        }
        let trans2 = Transition::new(store, init, "features.transition2", chans, chans / 2);
        chans /= 2;
        debug_assert_eq!(chans, 256);
        let pixel_conv = Conv2dLayer::new(store, init, "pixel_head", chans, 1, 1, 1, 0, true);
        let binary_fc = LinearLayer::new(
            store,
            init,
            "binary_head",
            PIXEL_MAP_SIDE * PIXEL_MAP_SIDE,
            1,
        );
        Self {
            conv0,
            bn0,
            block1,
            trans1,
            block2,
            trans2,
            pixel_conv,
            binary_fc,
        }
    }

    pub fn forward<F: Elem>(
        &self,
        tape: &Tape<F>,
        store: &mut ParamStore<F>,
        x: Var,
        mut ctx: ForwardCtx<'_>,
    ) -> Result<ModelOutput> {
        let training = ctx.training();
        let mut out = self.conv0.forward(tape, store, x);
        out = self.bn0.forward(tape, store, out, training);
        out = ops::relu(tape, out);
        out = max_pool2d(tape, out, 3, 2, 1);
        for layer in &self.block1 {
            out = layer.forward(tape, store, out, training);
        }
        out = ctx.maybe_mix(tape, out, InsertionPoint::AfterDenseBlock1)?;
        out = self.trans1.forward(tape, store, out, training);
        for layer in &self.block2 {
            out = layer.forward(tape, store, out, training);
        }
        out = self.trans2.forward(tape, store, out, training);

        let features = global_avg_pool(tape, out);
        let pixel_logits = self.pixel_conv.forward(tape, store, out);
        let pixel_map = ops::sigmoid(tape, pixel_logits);
        let shape = tape.value(pixel_logits).shape().to_vec();
        let flat = ops::reshape(tape, pixel_logits, &[shape[0], shape[2] * shape[3]]);
        let logit = self.binary_fc.forward(tape, store, flat);
        let binary_prob = ops::sigmoid(tape, logit);
        Ok(ModelOutput {
            logit,
            binary_prob,
            pixel_logits: Some(pixel_logits),
            pixel_map: Some(pixel_map),
            features,
        })
    }
}
