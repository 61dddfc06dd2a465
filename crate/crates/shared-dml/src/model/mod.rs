//! The trainable network: a shared feature extractor, two unit-hypersphere
//! embedding heads, and the correlation regressor.
//!
//! All math is explicit `f64` so the backward pass (see [`backward`]) can be
//! checked against finite differences at tight tolerance. Parameter tensors
//! are exposed as named flat views; the optimizer, the checkpoint format and
//! the gradient checks all iterate over the same canonical order.

mod backward;
mod optimizer;
mod tape;

pub use backward::backward;
pub use optimizer::{optimizer_step, AdamHyper, OptimizerState};
pub use tape::{forward_step, StepSpec, StepTape, TapeTriplet};

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Which embedding head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Discriminative (class) embedding, dimension `class_dim`.
    Class,
    /// Shared-characteristics embedding, dimension `shared_dim`.
    Shared,
}

/// Network dimensions.
///
/// `hidden` lists the widths of the feature extractor's hidden layers; it may
/// be empty, in which case the extractor is a single linear map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims {
    pub ambient: usize,
    pub hidden: Vec<usize>,
    pub feature: usize,
    pub class_dim: usize,
    pub shared_dim: usize,
    pub regressor_hidden: usize,
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("ambient", self.ambient),
            ("feature", self.feature),
            ("class_dim", self.class_dim),
            ("shared_dim", self.shared_dim),
            ("regressor_hidden", self.regressor_hidden),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden", "hidden widths must be positive"));
        }
        // The hypersphere density q(d) has exponent (D-3)/2, so D >= 3.
        if self.class_dim < 3 {
            return Err(Error::config("class_dim", "must be >= 3"));
        }
        if self.shared_dim < 3 {
            return Err(Error::config("shared_dim", "must be >= 3"));
        }
        Ok(())
    }

    /// Widths of the feature extractor layers as (input, output) pairs.
    fn f_layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.ambient];
        widths.extend_from_slice(&self.hidden);
        widths.push(self.feature);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// A dense layer: `out = W x + b`, with `W` stored row-major (`out x in`).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub out_dim: usize,
    pub in_dim: usize,
}

impl Linear {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Linear {
        Linear { w: vec![0.0; out_dim * in_dim], b: vec![0.0; out_dim], out_dim, in_dim }
    }

    /// Fan-in scaled uniform weights, zero biases.
    fn init(out_dim: usize, in_dim: usize, r: &mut rand_chacha::ChaCha8Rng) -> Linear {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = (0..out_dim * in_dim).map(|_| r.random_range(-bound..bound)).collect();
        Linear { w, b: vec![0.0; out_dim], out_dim, in_dim }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::dimension(format!(
                "linear layer expects input of length {}, got {}",
                self.in_dim,
                x.len()
            )));
        }
        let mut out = self.b.clone();
        for row in 0..self.out_dim {
            let weights = &self.w[row * self.in_dim..(row + 1) * self.in_dim];
            out[row] += weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        Ok(out)
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// All trainable parameters.
///
/// `margin_beta` is the learnable margin-loss boundary; it rides along as a
/// single extra scalar and is excluded from [`ModelParams::param_count`],
/// which counts the network tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    pub f_layers: Vec<Linear>,
    pub phi: Linear,
    pub phi_star: Linear,
    pub p1: Linear,
    pub p2: Linear,
    pub margin_beta: f64,
}

/// One gradient buffer per parameter tensor, shape-congruent with
/// [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub f_layers: Vec<Linear>,
    pub phi: Linear,
    pub phi_star: Linear,
    pub p1: Linear,
    pub p2: Linear,
    pub margin_beta: f64,
}

/// Initialize parameters: fan-in scaled uniform weights, zero biases, margin
/// boundary at 0.6. Deterministic given the seed.
pub fn init_params(dims: &Dims, seed: u64) -> Result<ModelParams> {
    dims.validate()?;
    let mut r = rng::seeded(seed, rng::stream::INIT);
    let f_layers = dims
        .f_layer_shapes()
        .into_iter()
        .map(|(i, o)| Linear::init(o, i, &mut r))
        .collect();
    let phi = Linear::init(dims.class_dim, dims.feature, &mut r);
    let phi_star = Linear::init(dims.shared_dim, dims.feature, &mut r);
    let p1 = Linear::init(dims.regressor_hidden, dims.shared_dim, &mut r);
    let p2 = Linear::init(dims.class_dim, dims.regressor_hidden, &mut r);
    Ok(ModelParams { dims: dims.clone(), f_layers, phi, phi_star, p1, p2, margin_beta: 0.6 })
}

impl ModelParams {
    /// Total network parameter count (weights and biases of all layers).
    pub fn param_count(&self) -> usize {
        self.f_layers.iter().map(Linear::param_count).sum::<usize>()
            + self.phi.param_count()
            + self.phi_star.param_count()
            + self.p1.param_count()
            + self.p2.param_count()
    }

    /// Feature extractor forward: rectifier after each hidden layer, linear
    /// output.
    pub fn forward_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dims.ambient {
            return Err(Error::dimension(format!(
                "input has length {}, expected ambient {}",
                x.len(),
                self.dims.ambient
            )));
        }
        let last = self.f_layers.len() - 1;
        let mut a = x.to_vec();
        for (l, layer) in self.f_layers.iter().enumerate() {
            let mut z = layer.forward(&a)?;
            if l < last {
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            a = z;
        }
        Ok(a)
    }

    fn head_layer(&self, head: Head) -> &Linear {
        match head {
            Head::Class => &self.phi,
            Head::Shared => &self.phi_star,
        }
    }

    /// Embed a feature vector on the unit hypersphere of the chosen head.
    ///
    /// Errors if the pre-normalization head output is the zero vector, which
    /// has no direction.
    pub fn embed(&self, f_vec: &[f64], head: Head) -> Result<Vec<f64>> {
        let mut u = self.head_layer(head).forward(f_vec)?;
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateEmbedding);
        }
        for v in u.iter_mut() {
            *v /= norm;
        }
        Ok(u)
    }

    /// Convenience: ambient input straight to an embedding.
    pub fn embed_input(&self, x: &[f64], head: Head) -> Result<Vec<f64>> {
        let f_vec = self.forward_features(x)?;
        self.embed(&f_vec, head)
    }

    /// Regressor forward: dense, rectifier, dense; output unnormalized.
    pub fn regressor_forward(&self, phi_star_vec: &[f64]) -> Result<Vec<f64>> {
        let mut h = self.p1.forward(phi_star_vec)?;
        for v in h.iter_mut() {
            *v = v.max(0.0);
        }
        self.p2.forward(&h)
    }

    /// Re-draw only the named head with the init scheme; everything else is
    /// bit-identical.
    pub fn reinit_encoder(&self, head: Head, seed: u64) -> ModelParams {
        let mut out = self.clone();
        let mut r = rng::seeded(seed, rng::stream::REINIT);
        match head {
            Head::Class => out.phi = Linear::init(self.dims.class_dim, self.dims.feature, &mut r),
            Head::Shared => {
                out.phi_star = Linear::init(self.dims.shared_dim, self.dims.feature, &mut r)
            }
        }
        out
    }

    /// Named flat views over every parameter tensor, in canonical order.
    pub fn flat_views(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, l) in self.f_layers.iter().enumerate() {
            out.push((format!("f.{i}.weight"), l.w.as_slice()));
            out.push((format!("f.{i}.bias"), l.b.as_slice()));
        }
        out.push(("phi.weight".into(), self.phi.w.as_slice()));
        out.push(("phi.bias".into(), self.phi.b.as_slice()));
        out.push(("phi_star.weight".into(), self.phi_star.w.as_slice()));
        out.push(("phi_star.bias".into(), self.phi_star.b.as_slice()));
        out.push(("p.0.weight".into(), self.p1.w.as_slice()));
        out.push(("p.0.bias".into(), self.p1.b.as_slice()));
        out.push(("p.1.weight".into(), self.p2.w.as_slice()));
        out.push(("p.1.bias".into(), self.p2.b.as_slice()));
        out.push(("margin_beta".into(), std::slice::from_ref(&self.margin_beta)));
        out
    }

    /// Mutable variant of [`ModelParams::flat_views`], same order.
    pub fn flat_views_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (i, l) in self.f_layers.iter_mut().enumerate() {
            out.push((format!("f.{i}.weight"), l.w.as_mut_slice()));
            out.push((format!("f.{i}.bias"), l.b.as_mut_slice()));
        }
        out.push(("phi.weight".into(), self.phi.w.as_mut_slice()));
        out.push(("phi.bias".into(), self.phi.b.as_mut_slice()));
        out.push(("phi_star.weight".into(), self.phi_star.w.as_mut_slice()));
        out.push(("phi_star.bias".into(), self.phi_star.b.as_mut_slice()));
        out.push(("p.0.weight".into(), self.p1.w.as_mut_slice()));
        out.push(("p.0.bias".into(), self.p1.b.as_mut_slice()));
        out.push(("p.1.weight".into(), self.p2.w.as_mut_slice()));
        out.push(("p.1.bias".into(), self.p2.b.as_mut_slice()));
        out.push(("margin_beta".into(), std::slice::from_mut(&mut self.margin_beta)));
        out
    }

    /// Tensor names whose gradients flow through the encoders (subject to
    /// gradient reversal on the correlation term), as opposed to the
    /// regressor side.
    pub fn is_encoder_side(name: &str) -> bool {
        !name.starts_with("p.")
    }
}

impl GradientSet {
    /// Zero gradients with the same shapes as `params`.
    pub fn zeros_like(params: &ModelParams) -> GradientSet {
        GradientSet {
            f_layers: params
                .f_layers
                .iter()
                .map(|l| Linear::zeros(l.out_dim, l.in_dim))
                .collect(),
            phi: Linear::zeros(params.phi.out_dim, params.phi.in_dim),
            phi_star: Linear::zeros(params.phi_star.out_dim, params.phi_star.in_dim),
            p1: Linear::zeros(params.p1.out_dim, params.p1.in_dim),
            p2: Linear::zeros(params.p2.out_dim, params.p2.in_dim),
            margin_beta: 0.0,
        }
    }

    pub fn flat_views(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, l) in self.f_layers.iter().enumerate() {
            out.push((format!("f.{i}.weight"), l.w.as_slice()));
            out.push((format!("f.{i}.bias"), l.b.as_slice()));
        }
        out.push(("phi.weight".into(), self.phi.w.as_slice()));
        out.push(("phi.bias".into(), self.phi.b.as_slice()));
        out.push(("phi_star.weight".into(), self.phi_star.w.as_slice()));
        out.push(("phi_star.bias".into(), self.phi_star.b.as_slice()));
        out.push(("p.0.weight".into(), self.p1.w.as_slice()));
        out.push(("p.0.bias".into(), self.p1.b.as_slice()));
        out.push(("p.1.weight".into(), self.p2.w.as_slice()));
        out.push(("p.1.bias".into(), self.p2.b.as_slice()));
        out.push(("margin_beta".into(), std::slice::from_ref(&self.margin_beta)));
        out
    }

    /// Check shape congruence against a parameter set.
    pub fn check_congruent(&self, params: &ModelParams) -> Result<()> {
        let a = self.flat_views();
        let b = params.flat_views();
        if a.len() != b.len() {
            return Err(Error::Internal("gradient/parameter tensor count mismatch".into()));
        }
        for ((na, va), (nb, vb)) in a.iter().zip(b.iter()) {
            if na != nb || va.len() != vb.len() {
                return Err(Error::Internal(format!(
                    "gradient tensor `{na}` ({}) does not match parameter `{nb}` ({})",
                    va.len(),
                    vb.len()
                )));
            }
        }
        Ok(())
    }
}

const CHECKPOINT_MAGIC: &str = "shared-dml-checkpoint v1";

/// Write all parameter tensors to a versioned text checkpoint.
///
/// Layout: a magic line, a dims line, then one `tensor <name> <len> v...`
/// line per tensor in canonical order. Floats use shortest round-trip form.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let d = &params.dims;
    let hidden = d.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",");
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(
        out,
        "ambient={} hidden={} feature={} class_dim={} shared_dim={} regressor_hidden={}",
        d.ambient, hidden, d.feature, d.class_dim, d.shared_dim, d.regressor_hidden
    );
    for (name, view) in params.flat_views() {
        let _ = write!(out, "tensor {name} {}", view.len());
        for v in view {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();

    let (_, magic) = lines.next().ok_or_else(|| Error::parse(1, "missing checkpoint header"))?;
    if magic.trim() != CHECKPOINT_MAGIC {
        return Err(Error::parse(1, format!("unsupported checkpoint header {magic:?}")));
    }
    let (_, dims_line) = lines.next().ok_or_else(|| Error::parse(2, "missing dims line"))?;
    let dims = parse_dims_line(dims_line)?;
    let mut params = init_params(&dims, 0)?;

    let mut expected = params.flat_views_mut();
    let mut cursor = 0usize;
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("tensor") => {}
            other => return Err(Error::parse(lineno, format!("expected tensor line, got {other:?}"))),
        }
        let name = fields.next().ok_or_else(|| Error::parse(lineno, "missing tensor name"))?;
        let len: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(lineno, "missing tensor length"))?;
        let (exp_name, view) = expected
            .get_mut(cursor)
            .ok_or_else(|| Error::parse(lineno, "more tensors than the dims imply"))?;
        if name != exp_name {
            return Err(Error::parse(lineno, format!("expected tensor `{exp_name}`, got `{name}`")));
        }
        if len != view.len() {
            return Err(Error::parse(
                lineno,
                format!("tensor `{name}` has length {len}, expected {}", view.len()),
            ));
        }
        for (slot, field) in view.iter_mut().zip(fields.by_ref()) {
            *slot = field
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad float {field:?} in `{name}`")))?;
        }
        if fields.next().is_some() {
            return Err(Error::parse(lineno, format!("too many values for tensor `{name}`")));
        }
        cursor += 1;
    }
    if cursor != expected.len() {
        return Err(Error::parse(
            0,
            format!("checkpoint has {cursor} tensors, expected {}", expected.len()),
        ));
    }
    drop(expected);
    Ok(params)
}

fn parse_dims_line(line: &str) -> Result<Dims> {
    let bad = |msg: String| Error::parse(2, msg);
    let mut map = std::collections::HashMap::new();
    for part in line.split_whitespace() {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed dims field {part:?}")))?;
        map.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| {
        map.get(k)
            .ok_or_else(|| bad(format!("missing dims field `{k}`")))
            .and_then(|v| v.parse::<usize>().map_err(|_| bad(format!("bad dims value for `{k}`"))))
    };
    let hidden_raw = map.get("hidden").ok_or_else(|| bad("missing dims field `hidden`".into()))?;
    let hidden = if hidden_raw.is_empty() {
        Vec::new()
    } else {
        hidden_raw
            .split(',')
            .map(|s| s.parse::<usize>().map_err(|_| bad(format!("bad hidden width {s:?}"))))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(Dims {
        ambient: get("ambient")?,
        hidden,
        feature: get("feature")?,
        class_dim: get("class_dim")?,
        shared_dim: get("shared_dim")?,
        regressor_hidden: get("regressor_hidden")?,
    })
}
