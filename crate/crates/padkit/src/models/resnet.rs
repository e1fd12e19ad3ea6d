//! 18-layer residual network with a single sigmoid head, trained from
//! scratch. Structure: 7×7/2 stem + 3×3/2 max pool, four stages of two
//! basic blocks (64/128/256/512 channels, stride 2 from stage 2 on),
//! global average pooling, and a 512→1 head.

use crate::error::Result;
use crate::mixstyle::InsertionPoint;
use crate::nn::layers::{BatchNorm2d, Conv2dLayer, LinearLayer};
use crate::nn::{global_avg_pool, max_pool2d, ops, Elem, Initializer, ParamStore, Tape, Var};

use super::{ForwardCtx, ModelOutput};

struct BasicBlock {
    conv1: Conv2dLayer,
    bn1: BatchNorm2d,
    conv2: Conv2dLayer,
    bn2: BatchNorm2d,
    downsample: Option<(Conv2dLayer, BatchNorm2d)>,
}

impl BasicBlock {
    fn new<F: Elem>(
        store: &mut ParamStore<F>,
        init: &mut Initializer,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
    ) -> Self {
        let conv1 = Conv2dLayer::new(store, init, &format!("{name}.conv1"), cin, cout, 3, stride, 1, false);
        let bn1 = BatchNorm2d::new(store, init, &format!("{name}.bn1"), cout);
        let conv2 = Conv2dLayer::new(store, init, &format!("{name}.conv2"), cout, cout, 3, 1, 1, false);
        let bn2 = BatchNorm2d::new(store, init, &format!("{name}.bn2"), cout);
        let downsample = (stride != 1 || cin != cout).then(|| {
            (
                Conv2dLayer::new(store, init, &format!("{name}.downsample.0"), cin, cout, 1, stride, 0, false),
                BatchNorm2d::new(store, init, &format!("{name}.downsample.1"), cout),
            )
        });
        Self {
            conv1,
            bn1,
            conv2,
            bn2,
            downsample,
        }
    }

    fn forward<F: Elem>(
        &self,
        tape: &Tape<F>,
        store: &mut ParamStore<F>,
        x: Var,
        training: bool,
    ) -> Var {
        let mut out = self.conv1.forward(tape, store, x);
        out = self.bn1.forward(tape, store, out, training);
        out = ops::relu(tape, out);
        out = self.conv2.forward(tape, store, out);
        out = self.bn2.forward(tape, store, out, training);
        let identity = match &self.downsample {
            None => x,
            Some((conv, bn)) => {
                let d = conv.forward(tape, store, x);
                bn.forward(tape, store, d, training)
            }
        };
        ops::relu(tape, ops::add(tape, out, identity))
    }
}

pub struct ResNet18 {
    conv1: Conv2dLayer,
    bn1: BatchNorm2d,
    stages: Vec<Vec<BasicBlock>>,
    fc: LinearLayer,
}

impl ResNet18 {
    pub fn new<F: Elem>(store: &mut ParamStore<F>, init: &mut Initializer) -> Self {
        let conv1 = Conv2dLayer::new(store, init, "conv1", 3, 64, 7, 2, 3, false);
        let bn1 = BatchNorm2d::new(store, init, "bn1", 64);
        let widths = [64usize, 128, 256, 512];
        let mut stages = Vec::new();
        let mut cin = 64;
        for (si, &cout) in widths.iter().enumerate() {
            let stride = if si == 0 { 1 } else { 2 };
            let mut blocks = Vec::new();
            for bi in 0..2 {
                let s = if bi == 0 { stride } else { 1 };
                let in_ch = if bi == 0 { cin } else { cout };
                blocks.push(BasicBlock::new(
                    store,
                    init,
                    &format!("layer{}.{bi}", si + 1),
                    in_ch,
                    cout,
                    s,
                ));
            }
            stages.push(blocks);
            cin = cout;
        }
        let fc = LinearLayer::new(store, init, "fc", 512, 1);
        Self {
            conv1,
            bn1,
            stages,
            fc,
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
        let mut out = self.conv1.forward(tape, store, x);
        out = self.bn1.forward(tape, store, out, training);
        out = ops::relu(tape, out);
        out = max_pool2d(tape, out, 3, 2, 1);
        for (si, blocks) in self.stages.iter().enumerate() {
            for block in blocks {
                out = block.forward(tape, store, out, training);
            }
            out = match si {
                0 => ctx.maybe_mix(tape, out, InsertionPoint::AfterResidualStage1)?,
                1 => ctx.maybe_mix(tape, out, InsertionPoint::AfterResidualStage2)?,
                _ => out,
            };
        }
        let features = global_avg_pool(tape, out);
        let logit = self.fc.forward(tape, store, features);
        let binary_prob = ops::sigmoid(tape, logit);
        Ok(ModelOutput {
            logit,
            binary_prob,
            pixel_logits: None,
            pixel_map: None,
            features,
        })
    }
}
