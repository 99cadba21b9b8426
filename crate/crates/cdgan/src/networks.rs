//! Declarative layer specs for the two network families and the builders
//! that turn a spec into a runnable [`Network`].
//!
//! The generator is the familiar residual translator: a 7x7 boundary
//! layer, two stride-2 downsamplers, a stack of residual blocks, two
//! learned upsamplers, and a tanh output layer. The discriminator is the
//! 70x70 patch classifier: stacked 4x4 convolutions whose output is a
//! grid of per-patch scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    init_weights, Conv2d, ConvTranspose2d, Feat, InstanceNorm2d, Layer, LeakyRelu, Network,
    PadMode, ParameterStore, Relu, ResidualBlock, Tanh, Tape,
};

/// Kind of a network stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    /// Transposed convolution; `stride` is the upsampling factor.
    Deconv,
    ResBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    None,
    Instance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    LeakyRelu02,
    Tanh,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PadKind {
    Reflect,
    Zero,
}

/// One stage of a network spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub filters: usize,
    pub norm: NormKind,
    pub activation: Activation,
    pub padding: PadKind,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        if ![3, 4, 7].contains(&self.kernel) {
            return Err(Error::LayerSpec(format!("kernel {} not in {{3,4,7}}", self.kernel)));
        }
        if self.filters == 0 {
            return Err(Error::LayerSpec("filters must be >= 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::LayerSpec("stride must be >= 1".into()));
        }
        Ok(())
    }

    fn conv(kernel: usize, stride: usize, filters: usize, norm: NormKind, activation: Activation, padding: PadKind) -> Self {
        Self { kind: LayerKind::Conv, kernel, stride, filters, norm, activation, padding }
    }

    fn deconv(filters: usize) -> Self {
        Self {
            kind: LayerKind::Deconv,
            kernel: 3,
            stride: 2,
            filters,
            norm: NormKind::Instance,
            activation: Activation::Relu,
            padding: PadKind::Zero,
        }
    }

    fn resblock(filters: usize) -> Self {
        Self {
            kind: LayerKind::ResBlock,
            kernel: 3,
            stride: 1,
            filters,
            norm: NormKind::Instance,
            activation: Activation::Relu,
            padding: PadKind::Zero,
        }
    }

    /// Implied spatial padding: half-kernel for odd kernels, 1 for the 4x4
    /// discriminator convolutions.
    fn pad_amount(&self) -> usize {
        match self.kernel {
            4 => 1,
            k => (k - 1) / 2,
        }
    }
}

/// Width/depth profile. `Full` matches the published architecture; `Test`
/// divides every filter count by 8 and uses 2 residual blocks so that
/// desk-scale gradient and convergence checks stay cheap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkProfile {
    Full,
    Test,
}

impl NetworkProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            NetworkProfile::Full => "full",
            NetworkProfile::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(NetworkProfile::Full),
            "test" => Ok(NetworkProfile::Test),
            other => Err(Error::Config(format!("unknown profile `{other}` (full|test)"))),
        }
    }

    fn width(self, full: usize) -> usize {
        match self {
            NetworkProfile::Full => full,
            NetworkProfile::Test => (full / 8).max(1),
        }
    }

    fn resblocks(self) -> usize {
        match self {
            NetworkProfile::Full => 9,
            NetworkProfile::Test => 2,
        }
    }
}

/// Ordered layer list for a generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub layers: Vec<LayerSpec>,
}

impl GeneratorSpec {
    /// C7S1_64, C3S2_128, C3S2_256, RB256 x 9, DC3S2_128, DC3S2_64,
    /// C7S1_3 (tanh, no norm), scaled by the profile.
    pub fn standard(profile: NetworkProfile) -> Self {
        let w = |f| profile.width(f);
        let mut layers = vec![
            LayerSpec::conv(7, 1, w(64), NormKind::Instance, Activation::Relu, PadKind::Reflect),
            LayerSpec::conv(3, 2, w(128), NormKind::Instance, Activation::Relu, PadKind::Zero),
            LayerSpec::conv(3, 2, w(256), NormKind::Instance, Activation::Relu, PadKind::Zero),
        ];
        layers.extend(std::iter::repeat(LayerSpec::resblock(w(256))).take(profile.resblocks()));
        layers.push(LayerSpec::deconv(w(128)));
        layers.push(LayerSpec::deconv(w(64)));
        layers.push(LayerSpec::conv(7, 1, 3, NormKind::None, Activation::Tanh, PadKind::Reflect));
        Self { layers }
    }

    pub fn validate(&self) -> Result<()> {
        for l in &self.layers {
            l.validate()?;
        }
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::LayerSpec("generator spec is empty".into()))?;
        if last.filters != 3 || last.activation != Activation::Tanh {
            return Err(Error::LayerSpec(
                "generator must end with a 3-filter tanh layer".into(),
            ));
        }
        Ok(())
    }

    /// Product of all down/up-sampling factors; inputs must be divisible
    /// by this for shape preservation.
    pub fn spatial_divisor(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::Conv && l.stride > 1)
            .map(|l| l.stride)
            .product()
    }
}

/// Ordered layer list for a discriminator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub layers: Vec<LayerSpec>,
}

impl DiscriminatorSpec {
    /// C4S2_64 (no norm), C4S2_128, C4S2_256, C4_512, C4S1_1 (no norm, no
    /// activation), hidden activations all LeakyReLU(0.2). The 512-filter
    /// layer runs at stride 1, giving the 70-pixel receptive field; pass
    /// `fourth_layer_stride = 2` to build the all-stride-2 variant.
    pub fn standard(profile: NetworkProfile) -> Self {
        Self::with_fourth_layer_stride(profile, 1)
    }

    pub fn with_fourth_layer_stride(profile: NetworkProfile, fourth_layer_stride: usize) -> Self {
        let w = |f| profile.width(f);
        let lrelu = Activation::LeakyRelu02;
        Self {
            layers: vec![
                LayerSpec::conv(4, 2, w(64), NormKind::None, lrelu, PadKind::Zero),
                LayerSpec::conv(4, 2, w(128), NormKind::Instance, lrelu, PadKind::Zero),
                LayerSpec::conv(4, 2, w(256), NormKind::Instance, lrelu, PadKind::Zero),
                LayerSpec::conv(4, fourth_layer_stride, w(512), NormKind::Instance, lrelu, PadKind::Zero),
                LayerSpec::conv(4, 1, 1, NormKind::None, Activation::None, PadKind::Zero),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for l in &self.layers {
            l.validate()?;
        }
        if self.layers.is_empty() {
            return Err(Error::LayerSpec("discriminator spec is empty".into()));
        }
        Ok(())
    }
}

/// Receptive field of one output unit, via the standard recurrence
/// rf <- rf + (k - 1) * jump; jump <- jump * stride.
pub fn receptive_field(spec: &DiscriminatorSpec) -> usize {
    let mut rf = 1usize;
    let mut jump = 1usize;
    for l in &spec.layers {
        rf += (l.kernel - 1) * jump;
        jump *= l.stride;
    }
    rf
}

/// Spatial output size of a conv stack per the convolution arithmetic
/// oh = floor((h + 2p - k) / s) + 1; `None` when some layer underflows.
pub fn conv_stack_output(spec: &DiscriminatorSpec, h: usize, w: usize) -> Option<(usize, usize)> {
    let mut cur = (h, w);
    for l in &spec.layers {
        let p = l.pad_amount();
        let oh = (cur.0 + 2 * p).checked_sub(l.kernel)? / l.stride + 1;
        let ow = (cur.1 + 2 * p).checked_sub(l.kernel)? / l.stride + 1;
        if oh == 0 || ow == 0 {
            return None;
        }
        cur = (oh, ow);
    }
    Some(cur)
}

fn push_stage(layers: &mut Vec<(String, Box<dyn Layer>)>, idx: usize, spec: &LayerSpec, in_channels: usize) -> usize {
    let name = |suffix: &str| format!("l{idx:02}{suffix}");
    match spec.kind {
        LayerKind::Conv => {
            let pad = match spec.padding {
                PadKind::Reflect => PadMode::Reflect(spec.pad_amount()),
                PadKind::Zero => PadMode::Zero(spec.pad_amount()),
            };
            layers.push((
                name(""),
                Box::new(Conv2d::new(in_channels, spec.filters, spec.kernel, spec.stride, pad)),
            ));
        }
        LayerKind::Deconv => {
            layers.push((
                name(""),
                Box::new(ConvTranspose2d::new(
                    in_channels,
                    spec.filters,
                    spec.kernel,
                    spec.stride,
                    1,
                    spec.stride - 1,
                )),
            ));
        }
        LayerKind::ResBlock => {
            assert_eq!(in_channels, spec.filters, "residual block cannot change width");
            layers.push((name(""), Box::new(ResidualBlock::new(spec.filters))));
            return spec.filters; // norm/activation are inside the block
        }
    }
    if spec.norm == NormKind::Instance {
        layers.push((name(".norm"), Box::new(InstanceNorm2d::new(spec.filters))));
    }
    match spec.activation {
        Activation::Relu => layers.push((name(".act"), Box::new(Relu))),
        Activation::LeakyRelu02 => layers.push((name(".act"), Box::new(LeakyRelu::new(0.2)))),
        Activation::Tanh => layers.push((name(".act"), Box::new(Tanh))),
        Activation::None => {}
    }
    spec.filters
}

fn assemble(specs: &[LayerSpec], in_channels: usize) -> Network {
    let mut layers = Vec::new();
    let mut channels = in_channels;
    for (idx, spec) in specs.iter().enumerate() {
        channels = push_stage(&mut layers, idx, spec, channels);
    }
    Network::new(layers)
}

/// A built generator: 3-channel image in, 3-channel tanh image out.
pub struct Generator {
    pub spec: GeneratorSpec,
    pub seed: u64,
    net: Network,
}

impl Generator {
    fn check_input(&self, x: &Feat) -> Result<()> {
        let (c, h, w) = x.dim();
        if c != 3 {
            return Err(Error::shape_mismatch("generator input channels", &[c], &[3]));
        }
        let divisor = self.spec.spatial_divisor();
        if divisor > 1 && (h % divisor != 0 || w % divisor != 0) {
            return Err(Error::Indivisible { height: h, width: w, divisor });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Feat) -> Result<(Feat, Tape)> {
        self.check_input(x)?;
        self.net.forward(x)
    }

    pub fn infer(&self, x: &Feat) -> Result<Feat> {
        self.check_input(x)?;
        self.net.infer(x)
    }

    pub fn net_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn parameter_store(&mut self) -> ParameterStore {
        self.net.parameter_store()
    }

    pub fn load_parameter_store(&mut self, store: &ParameterStore) -> Result<()> {
        self.net.load_parameter_store(store)
    }
}

/// Builds and initializes a generator.
pub fn build_generator(spec: &GeneratorSpec, seed: u64) -> Result<Generator> {
    spec.validate()?;
    let mut net = assemble(&spec.layers, 3);
    init_weights(&mut net, seed);
    Ok(Generator {
        spec: spec.clone(),
        seed,
        net,
    })
}

/// A built discriminator: 3-channel image in, 1-channel patch-score map out.
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    pub seed: u64,
    net: Network,
}

impl Discriminator {
    fn check_input(&self, x: &Feat) -> Result<()> {
        let (c, h, w) = x.dim();
        if c != 3 {
            return Err(Error::shape_mismatch("discriminator input channels", &[c], &[3]));
        }
        if conv_stack_output(&self.spec, h, w).is_none() {
            return Err(Error::InputTooSmall {
                height: h,
                width: w,
                receptive_field: receptive_field(&self.spec),
                layer: format!("{}-layer patch stack", self.spec.layers.len()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Feat) -> Result<(Feat, Tape)> {
        self.check_input(x)?;
        self.net.forward(x)
    }

    pub fn infer(&self, x: &Feat) -> Result<Feat> {
        self.check_input(x)?;
        self.net.infer(x)
    }

    pub fn net_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn parameter_store(&mut self) -> ParameterStore {
        self.net.parameter_store()
    }

    pub fn load_parameter_store(&mut self, store: &ParameterStore) -> Result<()> {
        self.net.load_parameter_store(store)
    }
}

/// Builds and initializes a discriminator.
pub fn build_discriminator(spec: &DiscriminatorSpec, seed: u64) -> Result<Discriminator> {
    spec.validate()?;
    let mut net = assemble(&spec.layers, 3);
    init_weights(&mut net, seed);
    Ok(Discriminator {
        spec: spec.clone(),
        seed,
        net,
    })
}
