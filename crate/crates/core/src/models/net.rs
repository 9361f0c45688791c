use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::spec::{Architecture, ModelSpec};
use crate::error::{Error, Result};
use crate::kernel::{
    grad_check, Activation, BatchNorm, Dense, GradCheckReport, Graph, Init, Mode, NormStore,
    ParamStore, Tensor, Var,
};

/// Number of condition channels: `(m, f, d_x, d_y, d_z)`.
pub const CONDITION_DIM: usize = 5;
/// PointNet per-point input: coordinates, mass, force, direction.
pub const POINTNET_INPUT_DIM: usize = 3 + CONDITION_DIM;
/// Trunk per-point input: coordinates and SDF.
pub const QUERY_DIM: usize = 4;

/// Normalized model inputs for a batch.
#[derive(Debug, Clone)]
pub struct ModelInput {
    /// `[B, 5]`, mass and force normalized, direction raw.
    pub condition: Tensor,
    /// `[B, N, 3]` query coordinates.
    pub coords: Tensor,
    /// `[B, N]`
    pub sdf: Option<Tensor>,
    /// `[B, N_b, 3]` branch point cloud; the queries are used when absent.
    pub cloud: Option<Tensor>,
}

impl ModelInput {
    pub fn batch(&self) -> usize {
        self.coords.shape()[0]
    }

    pub fn points(&self) -> usize {
        self.coords.shape()[1]
    }
}

/// Tensors substituted for intermediate latents (testing and chunked inference).
#[derive(Debug, Clone, Default)]
pub struct LatentOverride {
    /// DeepONet `B` or Point-DeepONet `B^α`, `[B, H]`.
    pub branch: Option<Tensor>,
    /// Point-DeepONet `B^β`, `[B, N, H]`.
    pub branch_beta: Option<Tensor>,
    /// DeepONet `T` or Point-DeepONet `T^β`, `[B, N, H·fields]`.
    pub trunk: Option<Tensor>,
}

/// Graph handles of a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// After the bounded head activation, `[B, N, fields]`.
    pub output: Var,
    /// Before the head activation.
    pub logits: Var,
}

struct Mlp {
    layers: Vec<Dense>,
    hidden: Activation,
    last: Activation,
}

impl Mlp {
    /// `dims = [input, hidden.., output]`.
    fn new(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        hidden: Activation,
        last: Activation,
        init: impl Fn(usize) -> Init,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(store, &format!("{name}.{i}"), w[0], w[1], init(i), rng))
            .collect();
        Self {
            layers,
            hidden,
            last,
        }
    }

    fn forward(&self, g: &mut Graph, params: &ParamStore, mut x: Var) -> Result<Var> {
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, params, x)?;
            let act = if i + 1 == n { self.last } else { self.hidden };
            if act != Activation::Identity {
                x = g.activation(x, act);
            }
        }
        Ok(x)
    }
}

/// Shared pointwise dense + batchnorm + activation.
struct ConvBlock {
    dense: Dense,
    bn: BatchNorm,
    act: Activation,
}

struct BlockStack(Vec<ConvBlock>);

impl BlockStack {
    #[allow(clippy::too_many_arguments)]
    fn new(
        store: &mut ParamStore,
        norms: &mut NormStore,
        name: &str,
        input: usize,
        widths: &[usize],
        act: Activation,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut fan_in = input;
        let mut blocks = Vec::with_capacity(widths.len());
        for (i, &w) in widths.iter().enumerate() {
            let n = format!("{name}.{i}");
            blocks.push(ConvBlock {
                dense: Dense::new(store, &n, fan_in, w, init, rng),
                bn: BatchNorm::new(store, norms, &format!("{n}.bn"), w),
                act,
            });
            fan_in = w;
        }
        Self(blocks)
    }

    fn forward(
        &self,
        g: &mut Graph,
        params: &ParamStore,
        norms: &NormStore,
        mut x: Var,
        mode: Mode,
    ) -> Result<Var> {
        for b in &self.0 {
            x = b.dense.forward(g, params, x)?;
            x = b.bn.forward(g, params, norms, x, mode)?;
            x = g.activation(x, b.act);
        }
        Ok(x)
    }
}

struct PointNet {
    local: BlockStack,
    global: BlockStack,
    head: BlockStack,
    out: Dense,
}

struct DeepOnet {
    branch: Mlp,
    trunk: Mlp,
}

struct PointDeepOnet {
    condition: Mlp,
    encoder: BlockStack,
    trunk: Mlp,
    fusion: Mlp,
    branch_head: Dense,
    trunk_head: Dense,
}

enum Network {
    PointNet(PointNet),
    DeepOnet(DeepOnet),
    PointDeepOnet(PointDeepOnet),
}

/// A network with its parameters and batchnorm statistics.
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamStore,
    pub norms: NormStore,
    net: Network,
}

impl Model {
    /// Build and initialize from `seed`. Construction order is fixed, so the
    /// same `(spec, seed)` always yields the same parameters.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut norms = NormStore::default();
        let h = spec.latent;
        let f = spec.fields;
        let net = match spec.architecture {
            Architecture::PointNet => {
                let local = spec.scaled(&spec.pointnet_local);
                let global = spec.scaled(&spec.pointnet_global);
                let head = spec.scaled(&spec.pointnet_head);
                let local_out = *local.last().unwrap();
                let global_out = *global.last().unwrap();
                let (p, n) = (&mut params, &mut norms);
                let local = BlockStack::new(p, n, "pointnet.local", POINTNET_INPUT_DIM, &local, Activation::Relu, Init::FanIn, &mut rng);
                let globalst = BlockStack::new(p, n, "pointnet.global", local_out, &global, Activation::Relu, Init::FanIn, &mut rng);
                let head_in = local_out + global_out;
                let head_out = *head.last().unwrap();
                let headst = BlockStack::new(p, n, "pointnet.head", head_in, &head, Activation::Relu, Init::FanIn, &mut rng);
                let out = Dense::new(p, "pointnet.out", head_out, f, Init::FanIn, &mut rng);
                Network::PointNet(PointNet {
                    local,
                    global: globalst,
                    head: headst,
                    out,
                })
            }
            Architecture::DeepOnet => {
                let mut bd = vec![CONDITION_DIM];
                bd.extend(&spec.branch_widths);
                bd.push(h);
                let mut td = vec![QUERY_DIM];
                td.extend(&spec.trunk_widths);
                td.push(h * f);
                let branch = Mlp::new(&mut params, "deeponet.branch", &bd, Activation::Silu, Activation::Identity, |_| Init::Glorot, &mut rng);
                let trunk = Mlp::new(&mut params, "deeponet.trunk", &td, Activation::Silu, Activation::Identity, |_| Init::Glorot, &mut rng);
                Network::DeepOnet(DeepOnet { branch, trunk })
            }
            Architecture::PointDeepOnet => {
                let omega = spec.sine_omega;
                let mut cd = vec![CONDITION_DIM];
                cd.extend(&spec.branch_widths);
                cd.push(h);
                let condition = Mlp::new(&mut params, "pdon.condition", &cd, Activation::Silu, Activation::Identity, |_| Init::Glorot, &mut rng);
                let mut ew = spec.encoder_widths.clone();
                ew.push(h);
                let encoder = BlockStack::new(&mut params, &mut norms, "pdon.encoder", 3, &ew, Activation::Silu, Init::Glorot, &mut rng);
                let mut td = vec![QUERY_DIM];
                td.extend(&spec.trunk_widths);
                td.push(h);
                let siren = |i: usize| if i == 0 { Init::SirenFirst } else { Init::SirenHidden(omega) };
                let sine = Activation::Sine(omega);
                let trunk = Mlp::new(&mut params, "pdon.trunk", &td, sine, sine, siren, &mut rng);
                let mut fd = vec![h];
                fd.extend(&spec.fusion_widths);
                let fusion = Mlp::new(&mut params, "pdon.fusion", &fd, Activation::Silu, Activation::Silu, |_| Init::Glorot, &mut rng);
                let fused = *fd.last().unwrap();
                // Each head shrunk by H^-1/4 so the H-term dot product starts with unit-order variance.
                let head_init = Init::GlorotScaled((h as f64).powf(-0.25));
                let branch_head = Dense::new(&mut params, "pdon.branch_head", fused, h, head_init, &mut rng);
                let trunk_head = Dense::new(&mut params, "pdon.trunk_head", fused, h * f, head_init, &mut rng);
                Network::PointDeepOnet(PointDeepOnet {
                    condition,
                    encoder,
                    trunk,
                    fusion,
                    branch_head,
                    trunk_head,
                })
            }
        };
        Ok(Self {
            spec,
            params,
            norms,
            net,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.spec.architecture
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Build the network-specific input tensors: masking ablated channels,
    /// tiling the condition for PointNet, appending SDF for trunks.
    pub fn assemble(&self, input: &ModelInput) -> Result<Vec<Tensor>> {
        let cs = input.condition.shape();
        let qs = input.coords.shape();
        if cs.len() != 2 || cs[1] != CONDITION_DIM {
            return Err(Error::shape("condition", cs, &[cs.first().copied().unwrap_or(0), CONDITION_DIM]));
        }
        if qs.len() != 3 || qs[2] != 3 || qs[0] != cs[0] {
            return Err(Error::shape("coords", qs, &[cs[0], 0, 3]));
        }
        let (b, n) = (qs[0], qs[1]);
        let mut cond = input.condition.data().to_vec();
        if !self.spec.use_mass {
            cond.chunks_exact_mut(CONDITION_DIM).for_each(|c| c[0] = 0.0);
        }
        let coords = input.coords.data();
        match self.spec.architecture {
            Architecture::PointNet => {
                let mut x = Vec::with_capacity(b * n * POINTNET_INPUT_DIM);
                for bi in 0..b {
                    let c = &cond[bi * CONDITION_DIM..(bi + 1) * CONDITION_DIM];
                    for i in 0..n {
                        x.extend_from_slice(&coords[(bi * n + i) * 3..(bi * n + i + 1) * 3]);
                        x.extend_from_slice(c);
                    }
                }
                Ok(vec![Tensor::new(&[b, n, POINTNET_INPUT_DIM], x)?])
            }
            arch => {
                let sdf = match (&input.sdf, self.spec.use_sdf) {
                    (Some(s), _) => {
                        if s.shape() != [b, n] {
                            return Err(Error::shape("sdf", s.shape(), &[b, n]));
                        }
                        Some(s.data())
                    }
                    (None, true) => {
                        return Err(Error::Schema("missing inputs: sdf (model uses SDF)".into()))
                    }
                    (None, false) => None,
                };
                let mut q = Vec::with_capacity(b * n * QUERY_DIM);
                for r in 0..b * n {
                    q.extend_from_slice(&coords[r * 3..(r + 1) * 3]);
                    q.push(match sdf {
                        Some(s) if self.spec.use_sdf => s[r],
                        _ => 0.0,
                    });
                }
                let mut out = vec![Tensor::new(&[b, CONDITION_DIM], cond)?];
                if arch == Architecture::PointDeepOnet {
                    let cloud = input.cloud.as_ref().unwrap_or(&input.coords);
                    let cls = cloud.shape();
                    if cls.len() != 3 || cls[0] != b || cls[2] != 3 {
                        return Err(Error::shape("cloud", cls, &[b, 0, 3]));
                    }
                    out.push(cloud.clone());
                }
                out.push(Tensor::new(&[b, n, QUERY_DIM], q)?);
                Ok(out)
            }
        }
    }

    /// Forward on already assembled inputs (see [`Model::assemble`]).
    pub fn forward_vars(
        &self,
        g: &mut Graph,
        params: &ParamStore,
        inputs: &[Var],
        mode: Mode,
        hooks: &LatentOverride,
    ) -> Result<Forward> {
        forward_network(&self.net, &self.spec, g, params, &self.norms, inputs, mode, hooks)
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        input: &ModelInput,
        mode: Mode,
        hooks: &LatentOverride,
    ) -> Result<Forward> {
        let vars: Vec<Var> = self
            .assemble(input)?
            .into_iter()
            .map(|t| g.constant(t))
            .collect();
        self.forward_vars(g, &self.params, &vars, mode, hooks)
    }

    /// Eval-mode prediction in head space, `[B, N, fields]`.
    pub fn predict(&self, input: &ModelInput) -> Result<Tensor> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, input, Mode::Eval, &LatentOverride::default())?;
        Ok(g.value(out.output).clone())
    }

    /// The branch latent (`B` or `B^α`) of an operator model, `[B, H]`.
    pub fn branch_latent(&self, input: &ModelInput, mode: Mode) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars: Vec<Var> = self
            .assemble(input)?
            .into_iter()
            .map(|t| g.constant(t))
            .collect();
        let v = match &self.net {
            Network::DeepOnet(net) => net.branch.forward(&mut g, &self.params, vars[0])?,
            Network::PointDeepOnet(net) => {
                pdon_branch(net, &mut g, &self.params, &self.norms, vars[0], vars[1], mode)?
            }
            Network::PointNet(_) => {
                return Err(Error::UnsupportedResolution(
                    "pointnet has no separable branch latent".into(),
                ))
            }
        };
        Ok(g.value(v).clone())
    }

    /// Run a forward in `mode`, reduce with fixed random weights and compare
    /// recorded gradients to central differences over every parameter and input.
    pub fn grad_check(&mut self, input: &ModelInput, mode: Mode, step: f64, seed: u64) -> Result<GradCheckReport> {
        use rand::Rng;
        let mut inputs = self.assemble(input)?;
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = self.forward_vars(&mut g, &self.params, &vars, mode, &LatentOverride::default())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = Tensor::from_fn(g.shape(out.output), |_| rng.gen_range(-1.0..1.0));
        drop(g);
        let Model {
            spec,
            params,
            norms,
            net,
        } = self;
        grad_check(params, &mut inputs, step, |g, params, vars| {
            let hooks = LatentOverride::default();
            let out = forward_network(net, spec, g, params, norms, vars, mode, &hooks)?;
            g.dot_const(out.output, &weights)
        })
    }
}

fn pdon_branch(
    net: &PointDeepOnet,
    g: &mut Graph,
    params: &ParamStore,
    norms: &NormStore,
    condition: Var,
    cloud: Var,
    mode: Mode,
) -> Result<Var> {
    let bc = net.condition.forward(g, params, condition)?;
    let enc = net.encoder.forward(g, params, norms, cloud, mode)?;
    let bp = g.maxpool_points(enc)?;
    g.add(bc, bp)
}

fn override_or(g: &mut Graph, t: &Option<Tensor>, expect: &[usize], name: &'static str) -> Result<Option<Var>> {
    match t {
        Some(t) if t.shape() != expect => Err(Error::shape(name, t.shape(), expect)),
        Some(t) => Ok(Some(g.constant(t.clone()))),
        None => Ok(None),
    }
}

#[allow(clippy::too_many_arguments)]
fn forward_network(
    net: &Network,
    spec: &ModelSpec,
    g: &mut Graph,
    params: &ParamStore,
    norms: &NormStore,
    inputs: &[Var],
    mode: Mode,
    hooks: &LatentOverride,
) -> Result<Forward> {
    let h = spec.latent;
    let f = spec.fields;
    match net {
        Network::PointNet(pn) => {
            let xs = g.shape(inputs[0]).to_vec();
            if xs[1] != spec.points {
                return Err(Error::UnsupportedResolution(format!(
                    "pointnet was built for {} points, got {}",
                    spec.points, xs[1]
                )));
            }
            let local = pn.local.forward(g, params, norms, inputs[0], mode)?;
            let feat = pn.global.forward(g, params, norms, local, mode)?;
            let global = g.maxpool_points(feat)?;
            let x = g.concat_tiled(local, global)?;
            let x = pn.head.forward(g, params, norms, x, mode)?;
            let logits = pn.out.forward(g, params, x)?;
            let output = g.activation(logits, Activation::Sigmoid);
            Ok(Forward { output, logits })
        }
        Network::DeepOnet(net) => {
            let qs = g.shape(inputs[1]).to_vec();
            let (b, n) = (qs[0], qs[1]);
            let branch = match override_or(g, &hooks.branch, &[b, h], "branch override")? {
                Some(v) => v,
                None => net.branch.forward(g, params, inputs[0])?,
            };
            let trunk = match override_or(g, &hooks.trunk, &[b, n, h * f], "trunk override")? {
                Some(v) => v,
                None => net.trunk.forward(g, params, inputs[1])?,
            };
            let tiled = g.broadcast_points(branch, n)?;
            let logits = g.latent_dot(tiled, trunk, f)?;
            let output = g.activation(logits, Activation::Tanh);
            Ok(Forward { output, logits })
        }
        Network::PointDeepOnet(net) => {
            let qs = g.shape(inputs[2]).to_vec();
            let (b, n) = (qs[0], qs[1]);
            let bb = override_or(g, &hooks.branch_beta, &[b, n, h], "branch_beta override")?;
            let tb = override_or(g, &hooks.trunk, &[b, n, h * f], "trunk override")?;
            let (branch_beta, trunk_beta) = match (bb, tb) {
                (Some(bb), Some(tb)) => (bb, tb),
                (bb, tb) => {
                    let alpha = match override_or(g, &hooks.branch, &[b, h], "branch override")? {
                        Some(v) => v,
                        None => pdon_branch(net, g, params, norms, inputs[0], inputs[1], mode)?,
                    };
                    let t_alpha = net.trunk.forward(g, params, inputs[2])?;
                    let tiled = g.broadcast_points(alpha, n)?;
                    let fused = g.mul(tiled, t_alpha)?;
                    let fused = net.fusion.forward(g, params, fused)?;
                    let bb = match bb {
                        Some(v) => v,
                        None => net.branch_head.forward(g, params, fused)?,
                    };
                    let tb = match tb {
                        Some(v) => v,
                        None => net.trunk_head.forward(g, params, fused)?,
                    };
                    (bb, tb)
                }
            };
            let logits = g.latent_dot(branch_beta, trunk_beta, f)?;
            let output = g.activation(logits, Activation::Tanh);
            Ok(Forward { output, logits })
        }
    }
}
