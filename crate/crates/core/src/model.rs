//! Real NVP flow built from affine coupling layers.
//!
//! Each coupling layer keeps the masked half of its input and moves the
//! other half by `y = x * exp(s(x_m)) + t(x_m)`, where the scale net ends in
//! Tanh and the translation net ends in a Linear layer. The base density is
//! a standard multivariate normal.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{fc_forward_into, ActivationKind, Matrix};
use crate::rng::RandomStream;

pub const GRID_COUPLING: [usize; 2] = [4, 6];
pub const GRID_DEPTH: [usize; 3] = [3, 4, 5];
pub const GRID_UNITS: [usize; 3] = [32, 48, 64];

const LN_2PI: f32 = 1.837_877_1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Scale,
    Translation,
}

impl NetKind {
    pub fn name(self) -> &'static str {
        match self {
            NetKind::Scale => "scale",
            NetKind::Translation => "translation",
        }
    }

    fn final_activation(self) -> ActivationKind {
        match self {
            NetKind::Scale => ActivationKind::Tanh,
            NetKind::Translation => ActivationKind::Linear,
        }
    }
}

/// Address of one FC layer inside a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub coupling: usize,
    pub net: NetKind,
    pub fc: usize,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}/{}/fc{}", self.coupling, self.net.name(), self.fc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    pub weights: Matrix,
    pub bias: Vec<f32>,
    pub activation: ActivationKind,
}

impl FcLayer {
    fn forward(&self, input: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; self.weights.rows()];
        // Shapes are validated when the model is built.
        fc_forward_into(&self.weights, &self.bias, input, self.activation, &mut out)
            .expect("fc layer shape validated at construction");
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLayer {
    /// `true` marks the pass-through half.
    pub mask: Vec<bool>,
    pub scale_net: Vec<FcLayer>,
    pub translation_net: Vec<FcLayer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskScheme {
    /// Layer 0 passes the first half through, layer 1 the second half, and so on.
    AlternatingHalves,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelDefinition {
    pub input_dim: usize,
    pub n_coupling: usize,
    pub fc_depth: usize,
    pub units: usize,
    pub mask_scheme: MaskScheme,
}

impl ModelDefinition {
    pub fn new(input_dim: usize, n_coupling: usize, fc_depth: usize, units: usize) -> Self {
        Self { input_dim, n_coupling, fc_depth, units, mask_scheme: MaskScheme::AlternatingHalves }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 2 {
            return Err(Error::config(format!("input_dim must be at least 2, got {}", self.input_dim)));
        }
        if self.n_coupling == 0 || self.fc_depth == 0 || self.units == 0 {
            return Err(Error::config(format!(
                "coupling layers, fc depth and units must be positive (got {}, {}, {})",
                self.n_coupling, self.fc_depth, self.units
            )));
        }
        Ok(())
    }

    /// Checks the hyper-parameters against the 4/6 x 3/4/5 x 32/48/64 grid.
    pub fn validate_grid(&self) -> Result<()> {
        self.validate()?;
        if !GRID_COUPLING.contains(&self.n_coupling)
            || !GRID_DEPTH.contains(&self.fc_depth)
            || !GRID_UNITS.contains(&self.units)
        {
            return Err(Error::config(format!("{} is not a grid model", self.model_id())));
        }
        Ok(())
    }

    pub fn model_id(&self) -> String {
        format!("C{}D{}U{}", self.n_coupling, self.fc_depth, self.units)
    }

    pub fn mask(&self, coupling: usize) -> Vec<bool> {
        let half = self.input_dim / 2;
        (0..self.input_dim).map(|i| if coupling.is_multiple_of(2) { i < half } else { i >= half }).collect()
    }

    /// FC layer shapes `(rows, cols)` of one net in a coupling layer.
    pub fn net_shapes(&self, coupling: usize) -> Vec<(usize, usize)> {
        let mask = self.mask(coupling);
        let n_in = mask.iter().filter(|&&m| m).count();
        let n_out = mask.len() - n_in;
        (0..self.fc_depth)
            .map(|fc| {
                let cols = if fc == 0 { n_in } else { self.units };
                let rows = if fc + 1 == self.fc_depth { n_out } else { self.units };
                (rows, cols)
            })
            .collect()
    }

    pub fn activation(&self, net: NetKind, fc: usize) -> ActivationKind {
        if fc + 1 == self.fc_depth {
            net.final_activation()
        } else {
            ActivationKind::Relu
        }
    }

    /// All FC sites in canonical order: coupling, then scale before
    /// translation, then FC index.
    pub fn sites(&self) -> Vec<Site> {
        let mut sites = Vec::with_capacity(self.n_coupling * 2 * self.fc_depth);
        for coupling in 0..self.n_coupling {
            for net in [NetKind::Scale, NetKind::Translation] {
                for fc in 0..self.fc_depth {
                    sites.push(Site { coupling, net, fc });
                }
            }
        }
        sites
    }

    pub fn total_fc_layers(&self) -> usize {
        self.n_coupling * 2 * self.fc_depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Nominal,
    Anomalous,
}

impl Label {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Label::Nominal),
            1 => Some(Label::Anomalous),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Label::Nominal => 0,
            Label::Anomalous => 1,
        }
    }
}

/// Outcome of scoring one sample: a label, or a detected unrecoverable
/// error when the log-likelihood is not finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prediction {
    Label(Label),
    Due,
}

impl Prediction {
    pub fn from_score(log_prob: f32, threshold: f32) -> Self {
        if !log_prob.is_finite() {
            Prediction::Due
        } else if log_prob >= threshold {
            Prediction::Label(Label::Nominal)
        } else {
            Prediction::Label(Label::Anomalous)
        }
    }

    pub fn is_due(self) -> bool {
        matches!(self, Prediction::Due)
    }
}

/// Sees every FC layer output, after its activation, during a forward pass.
pub trait OutputVisitor {
    fn visit(&mut self, site: Site, activation: ActivationKind, output: &mut [f32]);
}

pub struct NoopVisitor;

impl OutputVisitor for NoopVisitor {
    #[inline]
    fn visit(&mut self, _: Site, _: ActivationKind, _: &mut [f32]) {}
}

impl<V: OutputVisitor + ?Sized> OutputVisitor for &mut V {
    fn visit(&mut self, site: Site, activation: ActivationKind, output: &mut [f32]) {
        (**self).visit(site, activation, output)
    }
}

fn run_net(
    layers: &[FcLayer],
    coupling: usize,
    net: NetKind,
    input: &[f32],
    visitor: &mut dyn OutputVisitor,
) -> Vec<f32> {
    let mut h = input.to_vec();
    for (fc, layer) in layers.iter().enumerate() {
        h = layer.forward(&h);
        visitor.visit(Site { coupling, net, fc }, layer.activation, &mut h);
    }
    h
}

impl CouplingLayer {
    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.mask.len() {
            return Err(Error::config(format!("coupling layer expects {} values, got {len}", self.mask.len())));
        }
        Ok(())
    }

    fn split(&self, v: &[f32]) -> Vec<f32> {
        v.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(&x, _)| x).collect()
    }

    fn conditioners(&self, index: usize, kept: &[f32], visitor: &mut dyn OutputVisitor) -> (Vec<f32>, Vec<f32>) {
        let s = run_net(&self.scale_net, index, NetKind::Scale, kept, visitor);
        let t = run_net(&self.translation_net, index, NetKind::Translation, kept, visitor);
        (s, t)
    }

    pub fn forward(&self, x: &[f32]) -> Result<(Vec<f32>, f32)> {
        self.forward_visit(0, x, &mut NoopVisitor)
    }

    /// Forward pass reporting this layer as coupling `index` to the visitor.
    pub fn forward_visit(&self, index: usize, x: &[f32], visitor: &mut dyn OutputVisitor) -> Result<(Vec<f32>, f32)> {
        self.check_len(x.len())?;
        let kept = self.split(x);
        let (s, t) = self.conditioners(index, &kept, visitor);
        let mut y = x.to_vec();
        let mut k = 0;
        let mut log_det = 0.0f32;
        for (yi, &m) in y.iter_mut().zip(&self.mask) {
            if !m {
                *yi = *yi * libm::expf(s[k]) + t[k];
                log_det += s[k];
                k += 1;
            }
        }
        Ok((y, log_det))
    }

    pub fn inverse(&self, y: &[f32]) -> Result<Vec<f32>> {
        self.check_len(y.len())?;
        let kept = self.split(y);
        let (s, t) = self.conditioners(0, &kept, &mut NoopVisitor);
        let mut x = y.to_vec();
        let mut k = 0;
        for (xi, &m) in x.iter_mut().zip(&self.mask) {
            if !m {
                *xi = (*xi - t[k]) * libm::expf(-s[k]);
                k += 1;
            }
        }
        Ok(x)
    }

    pub fn net(&self, kind: NetKind) -> &[FcLayer] {
        match kind {
            NetKind::Scale => &self.scale_net,
            NetKind::Translation => &self.translation_net,
        }
    }

    pub fn net_mut(&mut self, kind: NetKind) -> &mut [FcLayer] {
        match kind {
            NetKind::Scale => &mut self.scale_net,
            NetKind::Translation => &mut self.translation_net,
        }
    }
}

/// Log density of `z` under the standard normal, accumulated in binary32.
pub fn standard_normal_log_density(z: &[f32]) -> f32 {
    let mut sq = 0.0f32;
    for v in z {
        sq += v * v;
    }
    -0.5 * z.len() as f32 * LN_2PI - 0.5 * sq
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub definition: ModelDefinition,
    pub layers: Vec<CouplingLayer>,
    pub threshold: Option<f32>,
}

impl ModelState {
    /// Builds a model from explicit layers, checking every structural invariant.
    pub fn from_parts(definition: ModelDefinition, layers: Vec<CouplingLayer>, threshold: Option<f32>) -> Result<Self> {
        let model = Self { definition, layers, threshold };
        model.validate()?;
        Ok(model)
    }

    /// A model whose nets are all zero, i.e. the identity flow.
    pub fn identity(definition: ModelDefinition) -> Result<Self> {
        Self::build(definition, |_, _, _| 0.0)
    }

    /// Glorot-uniform weights with small uniform biases; final layers are
    /// damped so a fresh model stays close to the identity flow.
    pub fn random_init(definition: ModelDefinition, stream: &mut RandomStream) -> Result<Self> {
        Self::build(definition, |site, (rows, cols), is_bias| {
            let last = site.fc + 1 == definition.fc_depth;
            let bound = if is_bias { 0.1 } else { (6.0 / (rows + cols) as f64).sqrt() };
            let gain = if last { 0.1 } else { 1.0 };
            ((stream.next_f64() * 2.0 - 1.0) * bound * gain) as f32
        })
    }

    fn build(definition: ModelDefinition, mut value: impl FnMut(Site, (usize, usize), bool) -> f32) -> Result<Self> {
        definition.validate()?;
        let mut layers = Vec::with_capacity(definition.n_coupling);
        for coupling in 0..definition.n_coupling {
            let shapes = definition.net_shapes(coupling);
            let mut nets = [NetKind::Scale, NetKind::Translation].map(|net| {
                shapes
                    .iter()
                    .enumerate()
                    .map(|(fc, &(rows, cols))| {
                        let site = Site { coupling, net, fc };
                        let w: Vec<f32> = (0..rows * cols).map(|_| value(site, (rows, cols), false)).collect();
                        let b: Vec<f32> = (0..rows).map(|_| value(site, (rows, cols), true)).collect();
                        FcLayer {
                            weights: Matrix::new(rows, cols, w).expect("shape from definition"),
                            bias: b,
                            activation: definition.activation(net, fc),
                        }
                    })
                    .collect::<Vec<_>>()
            });
            let translation_net = std::mem::take(&mut nets[1]);
            let scale_net = std::mem::take(&mut nets[0]);
            layers.push(CouplingLayer { mask: definition.mask(coupling), scale_net, translation_net });
        }
        Ok(Self { definition, layers, threshold: None })
    }

    pub fn validate(&self) -> Result<()> {
        let def = &self.definition;
        def.validate()?;
        if self.layers.len() != def.n_coupling {
            return Err(Error::config(format!(
                "definition declares {} coupling layers, model has {}",
                def.n_coupling,
                self.layers.len()
            )));
        }
        for (c, layer) in self.layers.iter().enumerate() {
            if layer.mask != def.mask(c) {
                return Err(Error::config(format!("coupling {c} mask does not follow the mask scheme")));
            }
            let shapes = def.net_shapes(c);
            for net in [NetKind::Scale, NetKind::Translation] {
                let layers = layer.net(net);
                if layers.len() != def.fc_depth {
                    return Err(Error::config(format!(
                        "coupling {c} {} net has {} layers, expected {}",
                        net.name(),
                        layers.len(),
                        def.fc_depth
                    )));
                }
                for (fc, (fc_layer, &(rows, cols))) in layers.iter().zip(&shapes).enumerate() {
                    let site = Site { coupling: c, net, fc };
                    if fc_layer.weights.rows() != rows || fc_layer.weights.cols() != cols || fc_layer.bias.len() != rows
                    {
                        return Err(Error::config(format!("{site} has the wrong shape")));
                    }
                    if fc_layer.activation != def.activation(net, fc) {
                        return Err(Error::config(format!(
                            "{site} uses {} where {} is required",
                            fc_layer.activation.name(),
                            def.activation(net, fc).name()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn model_id(&self) -> String {
        self.definition.model_id()
    }

    pub fn fc_layer(&self, site: Site) -> &FcLayer {
        &self.layers[site.coupling].net(site.net)[site.fc]
    }

    pub fn fc_layer_mut(&mut self, site: Site) -> &mut FcLayer {
        &mut self.layers[site.coupling].net_mut(site.net)[site.fc]
    }

    /// Iterates over every FC layer in canonical order.
    pub fn fc_layers(&self) -> impl Iterator<Item = (Site, &FcLayer)> + '_ {
        self.definition.sites().into_iter().map(move |site| (site, self.fc_layer(site)))
    }

    pub fn weight_count(&self) -> usize {
        self.fc_layers().map(|(_, l)| l.weights.as_slice().len()).sum()
    }

    pub fn bias_count(&self) -> usize {
        self.fc_layers().map(|(_, l)| l.bias.len()).sum()
    }

    /// Full flow `x -> z` with the summed log-determinant.
    pub fn forward(&self, x: &[f32]) -> Result<(Vec<f32>, f32)> {
        self.forward_visit(x, &mut NoopVisitor)
    }

    pub fn forward_visit(&self, x: &[f32], visitor: &mut dyn OutputVisitor) -> Result<(Vec<f32>, f32)> {
        self.check_input(x)?;
        let mut z = x.to_vec();
        let mut log_det = 0.0f32;
        for (i, layer) in self.layers.iter().enumerate() {
            let (next, ld) = layer.forward_visit(i, &z, visitor)?;
            z = next;
            log_det += ld;
        }
        Ok((z, log_det))
    }

    pub fn inverse(&self, z: &[f32]) -> Result<Vec<f32>> {
        self.check_input(z)?;
        let mut x = z.to_vec();
        for layer in self.layers.iter().rev() {
            x = layer.inverse(&x)?;
        }
        Ok(x)
    }

    pub fn log_prob(&self, x: &[f32]) -> Result<f32> {
        self.log_prob_visit(x, &mut NoopVisitor)
    }

    pub fn log_prob_visit(&self, x: &[f32], visitor: &mut dyn OutputVisitor) -> Result<f32> {
        let (z, log_det) = self.forward_visit(x, visitor)?;
        Ok(standard_normal_log_density(&z) + log_det)
    }

    pub fn classify(&self, x: &[f32]) -> Result<Prediction> {
        let threshold = self.require_threshold()?;
        Ok(Prediction::from_score(self.log_prob(x)?, threshold))
    }

    pub fn require_threshold(&self) -> Result<f32> {
        self.threshold.ok_or_else(|| Error::config(format!("model {} has no decision threshold", self.model_id())))
    }

    /// Dimensions moved by at least one coupling layer.
    pub fn transformed_dims(&self) -> Vec<bool> {
        let mut seen = vec![false; self.definition.input_dim];
        for layer in &self.layers {
            for (s, &m) in seen.iter_mut().zip(&layer.mask) {
                *s |= !m;
            }
        }
        seen
    }

    fn check_input(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.definition.input_dim {
            return Err(Error::config(format!(
                "model {} expects {} features, got {}",
                self.model_id(),
                self.definition.input_dim,
                x.len()
            )));
        }
        Ok(())
    }
}

/// Nearest-rank percentile of the log-likelihoods of `samples`, used as
/// the anomaly threshold: scores below it are flagged anomalous.
pub fn calibrate_threshold<'a>(
    model: &ModelState,
    samples: impl IntoIterator<Item = &'a [f32]>,
    percentile: f64,
) -> Result<f32> {
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::config(format!("percentile {percentile} outside [0, 100]")));
    }
    let mut scores = Vec::new();
    for x in samples {
        let lp = model.log_prob(x)?;
        if !lp.is_finite() {
            return Err(Error::config("calibration sample has a non-finite log-likelihood"));
        }
        scores.push(lp);
    }
    if scores.is_empty() {
        return Err(Error::config("calibration needs at least one sample"));
    }
    scores.sort_by(f32::total_cmp);
    let rank = (percentile / 100.0 * scores.len() as f64).ceil() as usize;
    Ok(scores[rank.saturating_sub(1).min(scores.len() - 1)])
}
