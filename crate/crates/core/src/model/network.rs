use rand::Rng;

use super::config::{DecodeMode, IntervalPooling, SwagConfig, Task};
use super::pooling::{interval_pool, key_pool, Pooled};
use crate::data::{HorizonGrid, PhaseLabel, SECONDS_PER_MINUTE};
use crate::error::{Result, SwagError};
use crate::numerics::{
    mse_loss, sinusoidal_positional_encoding, softmax_rows, weighted_cross_entropy, FeedForward, FfnCache,
    LayerNorm, Linear, LnCache, Mask, Matrix, MhaCache, Module, MultiHeadAttention, Parameter,
};
use crate::priors::TransitionPriorTensor;
use crate::rng::{derive_seed, rng_from};

/// Windowed self-attention with a residual and post-norm.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub norm: LayerNorm,
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    attn: MhaCache,
    norm: LnCache,
}

impl EncoderLayer {
    fn new<R: Rng>(dim: usize, heads: usize, rng: &mut R) -> Self {
        Self {
            attn: MultiHeadAttention::new(dim, heads, rng),
            norm: LayerNorm::new(dim),
        }
    }

    pub fn forward(&self, x: &Matrix, window: usize) -> (Matrix, EncoderCache) {
        let (mut z, attn) = self.attn.forward(x, x, Mask::None, Some(window));
        z.add_assign(x);
        let (y, norm) = self.norm.forward(&z);
        (y, EncoderCache { attn, norm })
    }

    pub fn backward(&mut self, cache: &EncoderCache, gy: &Matrix) -> Matrix {
        let mut gx = self.norm.backward(&cache.norm, gy);
        let (gq, gkv) = self.attn.backward(&cache.attn, &gx);
        gx.add_assign(&gq);
        gx.add_assign(&gkv);
        gx
    }
}

impl Module for EncoderLayer {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        self.attn.visit(f);
        self.norm.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.attn.visit_mut(f);
        self.norm.visit_mut(f);
    }
}

/// Post-norm decoder block: self-attention, optional cross-attention to a
/// memory, feed-forward.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderLayer {
    pub self_attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub cross: Option<(MultiHeadAttention, LayerNorm)>,
    pub ffn: FeedForward,
    pub norm3: LayerNorm,
}

#[derive(Clone, Debug)]
pub struct DecoderCache {
    sa: MhaCache,
    n1: LnCache,
    cross: Option<(MhaCache, LnCache)>,
    ffn: FfnCache,
    n3: LnCache,
}

impl DecoderLayer {
    fn new<R: Rng>(dim: usize, heads: usize, ffn: usize, cross: bool, rng: &mut R) -> Self {
        let self_attn = MultiHeadAttention::new(dim, heads, rng);
        let cross = cross.then(|| (MultiHeadAttention::new(dim, heads, rng), LayerNorm::new(dim)));
        Self {
            self_attn,
            norm1: LayerNorm::new(dim),
            cross,
            ffn: FeedForward::new(dim, ffn, rng),
            norm3: LayerNorm::new(dim),
        }
    }

    pub fn forward(&self, x: &Matrix, memory: Option<&Matrix>, mask: Mask) -> (Matrix, DecoderCache) {
        let (mut z, sa) = self.self_attn.forward(x, x, mask, None);
        z.add_assign(x);
        let (mut h, n1) = self.norm1.forward(&z);
        let cross = match (&self.cross, memory) {
            (Some((attn, norm)), Some(mem)) => {
                let (mut z, ca) = attn.forward(&h, mem, Mask::None, None);
                z.add_assign(&h);
                let (h2, cn) = norm.forward(&z);
                h = h2;
                Some((ca, cn))
            }
            (None, None) => None,
            _ => panic!("decoder memory does not match layer layout"),
        };
        let (mut z, ffn) = self.ffn.forward(&h);
        z.add_assign(&h);
        let (y, n3) = self.norm3.forward(&z);
        (y, DecoderCache { sa, n1, cross, ffn, n3 })
    }

    /// Returns the input gradient and, with cross-attention, the memory gradient.
    pub fn backward(&mut self, cache: &DecoderCache, gy: &Matrix) -> (Matrix, Option<Matrix>) {
        let mut gh = self.norm3.backward(&cache.n3, gy);
        let g = self.ffn.backward(&cache.ffn, &gh);
        gh.add_assign(&g);
        let mut gmem = None;
        if let (Some((attn, norm)), Some((ca, cn))) = (&mut self.cross, &cache.cross) {
            let mut gz = norm.backward(cn, &gh);
            let (gq, gkv) = attn.backward(ca, &gz);
            gz.add_assign(&gq);
            gh = gz;
            gmem = Some(gkv);
        }
        let mut gz = self.norm1.backward(&cache.n1, &gh);
        let (gq, gkv) = self.self_attn.backward(&cache.sa, &gz);
        gz.add_assign(&gq);
        gz.add_assign(&gkv);
        (gz, gmem)
    }
}

impl Module for DecoderLayer {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        self.self_attn.visit(f);
        self.norm1.visit(f);
        if let Some((a, n)) = &self.cross {
            a.visit(f);
            n.visit(f);
        }
        self.ffn.visit(f);
        self.norm3.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.self_attn.visit_mut(f);
        self.norm1.visit_mut(f);
        if let Some((a, n)) = &mut self.cross {
            a.visit_mut(f);
            n.visit_mut(f);
        }
        self.ffn.visit_mut(f);
        self.norm3.visit_mut(f);
    }
}

/// Learned future-token embeddings `u`, the prior lift `W_p, b_p` and the
/// token layer norm used by single-pass decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryTokens {
    pub embeddings: Parameter,
    pub prior_proj: Linear,
    pub norm: LayerNorm,
}

impl Module for QueryTokens {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.embeddings);
        self.prior_proj.visit(f);
        self.norm.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.embeddings);
        self.prior_proj.visit_mut(f);
        self.norm.visit_mut(f);
    }
}

/// Outputs of one forward pass on a single window.
#[derive(Clone, Debug, PartialEq)]
pub struct AnticipationOutput {
    /// Phase probabilities for the last `M` frames, `M × C`.
    pub recognized: Matrix,
    /// Future class probabilities, `N × (C + 1)`, in classification mode.
    pub future: Option<Matrix>,
    /// Minutes until each class (EOS last), in `[0, N]`, in regression mode.
    pub remaining: Option<Vec<f64>>,
    /// Decoder passes used to produce the future.
    pub decode_steps: usize,
}

impl AnticipationOutput {
    /// Argmax of the most recent recognition row.
    pub fn current_class(&self) -> usize {
        crate::priors::argmax(self.recognized.row(self.recognized.rows() - 1))
    }

    pub fn future_labels(&self) -> Option<Vec<usize>> {
        self.future
            .as_ref()
            .map(|f| (0..f.rows()).map(|n| crate::priors::argmax(f.row(n))).collect())
    }
}

/// Supervision for one training window.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    /// Labels of the last `M` frames.
    pub recognition: Vec<usize>,
    /// Ground-truth phase at the current second.
    pub current: usize,
    /// Labels at `t + 60n` for `n = 1..=N`.
    pub future: Vec<usize>,
    /// Per-class remaining minutes, clamped to `N`.
    pub remaining: Vec<f64>,
    /// Next-minute labels for every context token (AR only).
    pub context: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub recognition: f64,
    pub anticipation: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.recognition + self.anticipation
    }
}

struct TrunkCache {
    x: Matrix,
    enc: Vec<EncoderCache>,
    e: Matrix,
    key: Pooled,
    rec_in: Matrix,
}

struct Trunk {
    cache: TrunkCache,
    recognized: Matrix,
    memory: Matrix,
    interval: Option<Pooled>,
}

struct DecodePass {
    caches: Vec<DecoderCache>,
    out: Matrix,
    logits: Matrix,
}

/// The full network: input projection, windowed encoder, compression,
/// recognition head and a single-pass or auto-regressive decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct SwagModel {
    config: SwagConfig,
    num_phases: usize,
    feature_dim: usize,
    priors: Option<TransitionPriorTensor>,
    pub input: Linear,
    pub encoder: Vec<EncoderLayer>,
    pub key_proj: Linear,
    pub rec_head: Linear,
    pub mem_proj: Linear,
    pub queries: Option<QueryTokens>,
    pub class_embed: Option<Parameter>,
    pub decoder: Vec<DecoderLayer>,
    pub head: Linear,
    positions: Matrix,
}

impl SwagModel {
    pub fn new(
        config: SwagConfig,
        num_phases: usize,
        feature_dim: usize,
        priors: Option<TransitionPriorTensor>,
    ) -> Result<Self> {
        config.validate(num_phases)?;
        if config.task == Task::Regression && config.decode_mode != DecodeMode::Sp {
            return Err(SwagError::Config("regression is single-pass without priors".into()));
        }
        if feature_dim == 0 {
            return Err(SwagError::Config("feature dimension must be positive".into()));
        }
        if config.decode_mode == DecodeMode::SpStar {
            let p = priors
                .as_ref()
                .ok_or_else(|| SwagError::Config("sp_star needs a transition prior tensor".into()))?;
            if p.num_phases() != num_phases || p.horizon() < config.horizon {
                return Err(SwagError::Config(format!(
                    "priors cover {} phases and {} minutes, model needs {} and {}",
                    p.num_phases(),
                    p.horizon(),
                    num_phases,
                    config.horizon
                )));
            }
        }
        let (d, dim) = (config.pooled_dim, config.model_dim);
        let classes = num_phases + 1;
        let mut rng = rng_from(derive_seed(config.seed, 10, 0));
        let input = Linear::new(feature_dim, dim, &mut rng);
        let encoder = (0..config.encoder_layers)
            .map(|_| EncoderLayer::new(dim, config.heads, &mut rng))
            .collect();
        let key_proj = Linear::new(dim, d, &mut rng);
        let rec_head = Linear::new(d + dim, num_phases, &mut rng);
        let mem_proj = Linear::new(d, dim, &mut rng);
        let ar = config.decode_mode == DecodeMode::Ar;
        let queries = (!ar).then(|| QueryTokens {
            embeddings: Parameter::new(Matrix::xavier_uniform(config.query_tokens(), dim, &mut rng)),
            prior_proj: Linear::new(classes, dim, &mut rng),
            norm: LayerNorm::new(dim),
        });
        let class_embed = ar.then(|| Parameter::new(Matrix::xavier_uniform(classes, dim, &mut rng)));
        let decoder = (0..config.decoder_layers)
            .map(|_| DecoderLayer::new(dim, config.heads, config.ffn_dim, !ar, &mut rng))
            .collect();
        let head = Linear::new(dim, classes, &mut rng);
        let positions = Self::position_table(&config)?;
        Ok(Self {
            config,
            num_phases,
            feature_dim,
            priors,
            input,
            encoder,
            key_proj,
            rec_head,
            mem_proj,
            queries,
            class_embed,
            decoder,
            head,
            positions,
        })
    }

    /// Single-pass tokens use positions `1..=T`; the AR sequence uses
    /// `0..M + N - 1`.
    fn position_table(config: &SwagConfig) -> Result<Matrix> {
        let (offset, count) = match config.decode_mode {
            DecodeMode::Ar => (0, config.context_tokens + config.horizon),
            _ => (1, config.query_tokens()),
        };
        let rows = (0..count)
            .map(|p| sinusoidal_positional_encoding(p + offset, config.model_dim))
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    }

    pub fn config(&self) -> &SwagConfig {
        &self.config
    }

    pub fn num_phases(&self) -> usize {
        self.num_phases
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn priors(&self) -> Option<&TransitionPriorTensor> {
        self.priors.as_ref()
    }

    /// Same weights, different decoding mode. Only switches that keep the
    /// parameter layout are allowed (SP and SP*).
    pub fn with_mode(&self, mode: DecodeMode, prior_scale: f64, priors: Option<TransitionPriorTensor>) -> Result<Self> {
        let from_sp = matches!(self.config.decode_mode, DecodeMode::Sp | DecodeMode::SpStar);
        let to_sp = matches!(mode, DecodeMode::Sp | DecodeMode::SpStar);
        if !(from_sp && to_sp) {
            return Err(SwagError::Config("only sp and sp_star share a parameter layout".into()));
        }
        let config = SwagConfig {
            decode_mode: mode,
            prior_scale,
            ..self.config.clone()
        };
        let mut out = Self::new(config, self.num_phases, self.feature_dim, priors)?;
        out.set_flat_values(&self.flat_values());
        Ok(out)
    }

    /// Prior probability rows for the single-pass tokens, `T × (C + 1)`.
    fn prior_rows(&self, current: usize) -> Result<Option<Matrix>> {
        if self.config.decode_mode != DecodeMode::SpStar {
            return Ok(None);
        }
        let priors = self.priors.as_ref().expect("checked at construction");
        if current >= self.num_phases {
            return Err(SwagError::Domain(format!("cannot condition priors on class {current}")));
        }
        let rows = priors.probability_vectors(PhaseLabel(current), &HorizonGrid::new(self.config.horizon))?;
        Ok(Some(Matrix::from_rows(&rows[..self.config.query_tokens()])?))
    }

    fn trunk(&self, x: &Matrix) -> Result<Trunk> {
        let c = &self.config;
        if x.rows() != c.context_seconds || x.cols() != self.feature_dim {
            return Err(SwagError::Shape {
                op: "model input",
                left: x.shape(),
                right: (c.context_seconds, self.feature_dim),
            });
        }
        let mut h = self.input.forward(x);
        let mut enc = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            let (y, cache) = layer.forward(&h, c.window);
            enc.push(cache);
            h = y;
        }
        let e = h;
        let ep = self.key_proj.forward(&e);
        let m = c.context_tokens;
        let l = c.context_seconds;
        let key = key_pool(&ep, m);
        let rec_in = Matrix::hcat(&[&key.tokens, &e.slice_rows(l - m, l)]);
        let recognized = softmax_rows(&self.rec_head.forward(&rec_in));
        let (memory, interval) = match c.decode_mode {
            DecodeMode::Ar => {
                let cumulative = c.interval_pooling == IntervalPooling::Cumulative;
                let pooled = interval_pool(&ep, SECONDS_PER_MINUTE, cumulative);
                (self.mem_proj.forward(&pooled.tokens), Some(pooled))
            }
            _ => (self.mem_proj.forward(&key.tokens), None),
        };
        Ok(Trunk {
            cache: TrunkCache {
                x: x.clone(),
                enc,
                e,
                key,
                rec_in,
            },
            recognized,
            memory,
            interval,
        })
    }

    fn run_decoder(&self, input: Matrix, memory: Option<&Matrix>, mask: Mask) -> DecodePass {
        let mut h = input;
        let mut caches = Vec::with_capacity(self.decoder.len());
        for layer in &self.decoder {
            let (y, cache) = layer.forward(&h, memory, mask);
            caches.push(cache);
            h = y;
        }
        let logits = self.head.forward(&h);
        DecodePass {
            caches,
            out: h,
            logits,
        }
    }

    /// Single-pass query tokens and the pre-norm sum they came from.
    fn single_pass_queries(&self, prior: Option<&Matrix>) -> (Matrix, Matrix, LnCache) {
        let q = self.queries.as_ref().expect("single-pass layout");
        let mut pre = q.embeddings.value.clone();
        pre.add_assign(&self.positions);
        if let Some(p) = prior {
            let alpha = self.config.prior_scale;
            if alpha != 0.0 {
                pre.add_assign(&q.prior_proj.forward(p).scale(alpha));
            }
        }
        let (tokens, cache) = q.norm.forward(&pre);
        (tokens, pre, cache)
    }

    /// AR input: context tokens followed by embeddings of `generated`, each
    /// with its position encoding.
    fn ar_input(&self, memory: &Matrix, generated: &[usize]) -> Matrix {
        let emb = self.class_embed.as_ref().expect("ar layout");
        let rows = memory.rows() + generated.len();
        let mut x = Matrix::zeros(rows, self.config.model_dim);
        for i in 0..memory.rows() {
            x.row_mut(i).copy_from_slice(memory.row(i));
        }
        for (k, &c) in generated.iter().enumerate() {
            x.row_mut(memory.rows() + k).copy_from_slice(emb.value.row(c));
        }
        x.add_assign(&self.positions.slice_rows(0, rows));
        x
    }

    /// Greedy generation of `steps` tokens. Returns the tokens and the final pass.
    fn ar_generate(&self, memory: &Matrix, steps: usize) -> (Vec<usize>, Option<DecodePass>) {
        let m = memory.rows();
        let mut generated = Vec::with_capacity(steps);
        let mut last = None;
        for k in 0..steps {
            let pass = self.run_decoder(self.ar_input(memory, &generated), None, Mask::Causal);
            generated.push(crate::priors::argmax(pass.logits.row(m - 1 + k)));
            last = Some(pass);
        }
        (generated, last)
    }

    /// Forward pass on one `L × D_f` window. `current_override` replaces the
    /// recognized class used to index the priors.
    pub fn forward(&self, x: &Matrix, current_override: Option<usize>) -> Result<AnticipationOutput> {
        let trunk = self.trunk(x)?;
        let c = &self.config;
        let recognized = trunk.recognized;
        let current = current_override
            .unwrap_or_else(|| crate::priors::argmax(recognized.row(recognized.rows() - 1)));
        let mut out = AnticipationOutput {
            recognized,
            future: None,
            remaining: None,
            decode_steps: 1,
        };
        match (c.decode_mode, c.task) {
            (DecodeMode::Ar, _) => {
                let m = trunk.memory.rows();
                let (_, pass) = self.ar_generate(&trunk.memory, c.horizon);
                let probs = softmax_rows(&pass.expect("horizon is positive").logits);
                out.future = Some(probs.slice_rows(m - 1, m - 1 + c.horizon));
                out.decode_steps = c.horizon;
            }
            (_, Task::Classification) => {
                let prior = self.prior_rows(current)?;
                let (tokens, _, _) = self.single_pass_queries(prior.as_ref());
                let pass = self.run_decoder(tokens, Some(&trunk.memory), Mask::None);
                out.future = Some(softmax_rows(&pass.logits));
            }
            (_, Task::Regression) => {
                let (tokens, _, _) = self.single_pass_queries(None);
                let pass = self.run_decoder(tokens, Some(&trunk.memory), Mask::None);
                let n = c.horizon as f64;
                out.remaining = Some(pass.logits.row(0).iter().map(|&z| n * sigmoid(z)).collect());
            }
        }
        Ok(out)
    }

    /// Forward, loss and backward for one window. Gradients are scaled by
    /// `scale` and accumulated into the parameters.
    pub fn accumulate_gradients(&mut self, x: &Matrix, targets: &Targets, scale: f64) -> Result<LossParts> {
        let trunk = self.trunk(x)?;
        let c = self.config.clone();
        let weights = c.output_weights(self.num_phases);
        let rec = weighted_cross_entropy(&trunk.recognized, &targets.recognition, &weights[..self.num_phases]);
        let mut parts = LossParts {
            recognition: rec.loss,
            anticipation: 0.0,
        };
        let grad_rec_logits = rec.grad.scale(scale);
        let m = c.context_tokens;

        // Decoder branch: returns the gradient on the memory tokens.
        let g_memory = match (c.decode_mode, c.task) {
            (DecodeMode::Ar, _) => {
                let (generated, _) = self.ar_generate(&trunk.memory, c.horizon - 1);
                let pass = self.run_decoder(self.ar_input(&trunk.memory, &generated), None, Mask::Causal);
                let probs = softmax_rows(&pass.logits);
                let mut seq_targets = targets.context.clone();
                seq_targets.extend_from_slice(&targets.future[1..]);
                let ce = weighted_cross_entropy(&probs, &seq_targets, &weights);
                parts.anticipation = ce.loss;
                let gin = self.decoder_backward(&pass, &ce.grad.scale(scale)).0;
                if let Some(emb) = &mut self.class_embed {
                    for (k, &cls) in generated.iter().enumerate() {
                        for (g, v) in emb.grad.row_mut(cls).iter_mut().zip(gin.row(m + k)) {
                            *g += v;
                        }
                    }
                }
                gin.slice_rows(0, m)
            }
            (_, task) => {
                let prior = match task {
                    Task::Classification => self.prior_rows(targets.current)?,
                    Task::Regression => None,
                };
                let (tokens, _, qcache) = self.single_pass_queries(prior.as_ref());
                let pass = self.run_decoder(tokens, Some(&trunk.memory), Mask::None);
                let g_logits = match task {
                    Task::Classification => {
                        let probs = softmax_rows(&pass.logits);
                        let ce = weighted_cross_entropy(&probs, &targets.future, &weights);
                        parts.anticipation = ce.loss;
                        ce.grad.scale(scale)
                    }
                    Task::Regression => {
                        let n = c.horizon as f64;
                        let s: Vec<f64> = pass.logits.row(0).iter().map(|&z| sigmoid(z)).collect();
                        let target: Vec<f64> = targets.remaining.iter().map(|r| r / n).collect();
                        let (loss, g) = mse_loss(&s, &target);
                        parts.anticipation = loss;
                        let gz = g.iter().zip(&s).map(|(g, s)| scale * g * s * (1.0 - s)).collect();
                        Matrix::from_vec(1, s.len(), gz)?
                    }
                };
                let (gq, gmem) = self.decoder_backward(&pass, &g_logits);
                let q = self.queries.as_mut().expect("single-pass layout");
                let gpre = q.norm.backward(&qcache, &gq);
                q.embeddings.grad.add_assign(&gpre);
                if let Some(p) = &prior {
                    if c.prior_scale != 0.0 {
                        q.prior_proj.accumulate(p, &gpre.scale(c.prior_scale));
                    }
                }
                gmem.expect("cross-attention memory")
            }
        };
        if !parts.total().is_finite() {
            return Err(SwagError::Domain(format!("non-finite loss {parts:?}")));
        }
        self.trunk_backward(&trunk, &grad_rec_logits, &g_memory);
        Ok(parts)
    }

    /// Back through head and decoder. Returns the input gradient and the
    /// summed memory gradient when there is cross-attention.
    fn decoder_backward(&mut self, pass: &DecodePass, g_logits: &Matrix) -> (Matrix, Option<Matrix>) {
        let mut g = self.head.backward(&pass.out, g_logits);
        let mut gmem: Option<Matrix> = None;
        for (layer, cache) in self.decoder.iter_mut().zip(&pass.caches).rev() {
            let (gx, gm) = layer.backward(cache, &g);
            g = gx;
            if let Some(gm) = gm {
                match &mut gmem {
                    Some(acc) => acc.add_assign(&gm),
                    None => gmem = Some(gm),
                }
            }
        }
        (g, gmem)
    }

    fn trunk_backward(&mut self, trunk: &Trunk, g_rec_logits: &Matrix, g_memory: &Matrix) {
        let c = &self.config;
        let (l, m, d) = (c.context_seconds, c.context_tokens, c.pooled_dim);
        let tc = &trunk.cache;
        let g_rec_in = self.rec_head.backward(&tc.rec_in, g_rec_logits);
        let parts = g_rec_in.split_cols(&[d, c.model_dim]);
        let mut g_key = parts[0].clone();
        let mut g_ep = match &trunk.interval {
            Some(pooled) => {
                let g_pooled = self.mem_proj.backward(&pooled.tokens, g_memory);
                pooled.backward(&g_pooled, l)
            }
            None => {
                g_key.add_assign(&self.mem_proj.backward(&tc.key.tokens, g_memory));
                Matrix::zeros(l, d)
            }
        };
        g_ep.add_assign(&tc.key.backward(&g_key, l));
        let mut g_e = self.key_proj.backward(&tc.e, &g_ep);
        g_e.add_block(l - m, 0, &parts[1]);
        let mut g = g_e;
        for (layer, cache) in self.encoder.iter_mut().zip(&tc.enc).rev() {
            g = layer.backward(cache, &g);
        }
        self.input.accumulate(&tc.x, &g);
    }

    /// Round every weight to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        self.visit_mut(&mut |p| {
            p.value.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        });
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Module for SwagModel {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        self.input.visit(f);
        for l in &self.encoder {
            l.visit(f);
        }
        self.key_proj.visit(f);
        self.rec_head.visit(f);
        self.mem_proj.visit(f);
        if let Some(q) = &self.queries {
            q.visit(f);
        }
        if let Some(e) = &self.class_embed {
            f(e);
        }
        for l in &self.decoder {
            l.visit(f);
        }
        self.head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.input.visit_mut(f);
        for l in &mut self.encoder {
            l.visit_mut(f);
        }
        self.key_proj.visit_mut(f);
        self.rec_head.visit_mut(f);
        self.mem_proj.visit_mut(f);
        if let Some(q) = &mut self.queries {
            q.visit_mut(f);
        }
        if let Some(e) = &mut self.class_embed {
            f(e);
        }
        for l in &mut self.decoder {
            l.visit_mut(f);
        }
        self.head.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledSequence;
    use crate::numerics::{check_parameter_gradients, clip_grad_norm, Sgd};
    use crate::priors::extract_transition_priors;
    use rand::Rng;

    const PHASES: usize = 3;
    const FEATURES: usize = 3;

    fn tiny(mode: DecodeMode, task: Task) -> SwagConfig {
        SwagConfig {
            context_seconds: 120,
            window: 20,
            context_tokens: 2,
            pooled_dim: 4,
            model_dim: 8,
            heads: 2,
            encoder_layers: 1,
            decoder_layers: 2,
            ffn_dim: 8,
            horizon: 3,
            decode_mode: mode,
            task,
            seed: 3,
            ..SwagConfig::default()
        }
    }

    fn priors() -> TransitionPriorTensor {
        let seqs: Vec<LabeledSequence> = (0..4)
            .map(|k| {
                let labels = [vec![0; 60 + 30 * k], vec![1 + k % 2; 90], vec![2; 120]].concat();
                LabeledSequence::from_indices(format!("p{k}"), PHASES, &labels).unwrap()
            })
            .collect();
        extract_transition_priors(&seqs, &HorizonGrid::new(5), PHASES, 1).unwrap()
    }

    fn model(mode: DecodeMode, task: Task) -> SwagModel {
        let p = (mode == DecodeMode::SpStar).then(priors);
        SwagModel::new(tiny(mode, task), PHASES, FEATURES, p).unwrap()
    }

    fn input(seed: u64) -> Matrix {
        let mut rng = rng_from(seed);
        let data = (0..120 * FEATURES).map(|_| rng.random_range(-1.5..1.5)).collect();
        Matrix::from_vec(120, FEATURES, data).unwrap()
    }

    fn targets() -> Targets {
        Targets {
            recognition: vec![0, 1],
            current: 1,
            future: vec![1, 2, 3],
            remaining: vec![3.0, 0.0, 1.4, 2.6],
            context: vec![0, 1],
        }
    }

    fn assert_rows_normalized(m: &Matrix) {
        for i in 0..m.rows() {
            assert!((m.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn output_shapes() {
        let x = input(1);
        for mode in [DecodeMode::Sp, DecodeMode::SpStar, DecodeMode::Ar] {
            let out = model(mode, Task::Classification).forward(&x, None).unwrap();
            assert_eq!(out.recognized.shape(), (2, PHASES));
            let f = out.future.as_ref().unwrap();
            assert_eq!(f.shape(), (3, PHASES + 1));
            assert_rows_normalized(&out.recognized);
            assert_rows_normalized(f);
            assert_eq!(out.decode_steps, if mode == DecodeMode::Ar { 3 } else { 1 });
            assert!(out.remaining.is_none());
        }
        let out = model(DecodeMode::Sp, Task::Regression).forward(&x, None).unwrap();
        let r = out.remaining.unwrap();
        assert_eq!(r.len(), PHASES + 1);
        assert!(r.iter().all(|&v| (0.0..=3.0).contains(&v)));
        assert!(out.future.is_none());
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let m = model(DecodeMode::Sp, Task::Classification);
        assert!(matches!(m.forward(&Matrix::zeros(60, FEATURES), None), Err(SwagError::Shape { .. })));
        assert!(SwagModel::new(tiny(DecodeMode::SpStar, Task::Classification), PHASES, FEATURES, None).is_err());
        assert!(SwagModel::new(tiny(DecodeMode::SpStar, Task::Regression), PHASES, FEATURES, Some(priors())).is_err());
    }

    #[test]
    fn zero_prior_scale_matches_plain_single_pass() {
        let sp = model(DecodeMode::Sp, Task::Classification);
        let star = sp.with_mode(DecodeMode::SpStar, 0.0, Some(priors())).unwrap();
        for seed in 0..5 {
            let x = input(seed);
            for current in 0..PHASES {
                assert_eq!(sp.forward(&x, Some(current)).unwrap(), star.forward(&x, Some(current)).unwrap());
            }
        }
    }

    #[test]
    fn prior_tokens_follow_the_current_class() {
        let star = model(DecodeMode::SpStar, Task::Classification);
        let q = |c| star.single_pass_queries(star.prior_rows(c).unwrap().as_ref()).0;
        let (a, b) = (q(0), q(2));
        assert!(a.data().iter().zip(b.data()).any(|(x, y)| (x - y).abs() > 1e-6));
        assert!(star.prior_rows(PHASES).is_err());
        let (_, _, cache) = star.single_pass_queries(None);
        for i in 0..cache.xhat.rows() {
            let row = cache.xhat.row(i);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn ar_logits_are_causal() {
        let m = model(DecodeMode::Ar, Task::Classification);
        let trunk = m.trunk(&input(2)).unwrap();
        let seq = m.ar_input(&trunk.memory, &[1, 3]);
        let base = m.run_decoder(seq.clone(), None, Mask::Causal).logits;
        let mut rng = rng_from(9);
        for pos in 0..seq.rows() {
            let mut perturbed = seq.clone();
            for r in pos + 1..seq.rows() {
                for v in perturbed.row_mut(r) {
                    *v += rng.random_range(-2.0..2.0);
                }
            }
            let out = m.run_decoder(perturbed, None, Mask::Causal).logits;
            for r in 0..=pos {
                assert_eq!(out.row(r), base.row(r), "row {r} moved after perturbing past {pos}");
            }
        }
        assert!(m.ar_generate(&trunk.memory, 0).0.is_empty());
        assert_eq!(m.ar_generate(&trunk.memory, 3).0, m.ar_generate(&trunk.memory, 3).0);
    }

    #[test]
    fn decoder_ignores_memory_order() {
        let m = model(DecodeMode::Sp, Task::Classification);
        let mut rng = rng_from(4);
        let memory = Matrix::xavier_uniform(5, 8, &mut rng);
        let reversed = Matrix::from_rows(&(0..5).rev().map(|i| memory.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let (q, _, _) = m.single_pass_queries(None);
        let a = m.run_decoder(q.clone(), Some(&memory), Mask::None).logits;
        let b = m.run_decoder(q, Some(&reversed), Mask::None).logits;
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn gradient_error(mode: DecodeMode, task: Task) -> f64 {
        let mut m = model(mode, task);
        let (x, t) = (input(5), targets());
        check_parameter_gradients(&mut m, |m| m.accumulate_gradients(&x, &t, 1.0).unwrap().total(), 1e-5)
    }

    #[test]
    fn single_pass_gradients_match_finite_differences() {
        let err = gradient_error(DecodeMode::Sp, Task::Classification);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn prior_gradients_match_finite_differences() {
        let err = gradient_error(DecodeMode::SpStar, Task::Classification);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn ar_gradients_match_finite_differences() {
        let err = gradient_error(DecodeMode::Ar, Task::Classification);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn regression_gradients_match_finite_differences() {
        let err = gradient_error(DecodeMode::Sp, Task::Regression);
        assert!(err < 1e-4, "{err}");
    }

    /// Fit a single window with the training schedule, one step per epoch.
    fn overfit(mode: DecodeMode, task: Task, epochs: usize, lr: f64, momentum: f64) -> Vec<LossParts> {
        let mut m = model(mode, task);
        let (x, t) = (input(6), targets());
        let schedule = SwagConfig {
            lr,
            epochs,
            ..m.config().clone()
        };
        let mut sgd = Sgd::new(lr, momentum, 0.0);
        (0..epochs)
            .map(|epoch| {
                sgd.lr = super::super::train::epoch_lr(&schedule, epoch);
                let parts = m.accumulate_gradients(&x, &t, 1.0).unwrap();
                clip_grad_norm(&mut m, 1.0);
                sgd.step(&mut m);
                parts
            })
            .collect()
    }

    #[test]
    fn regression_overfits_one_window() {
        let losses = overfit(DecodeMode::Sp, Task::Regression, 500, 0.05, 0.9);
        let last = losses.last().unwrap().anticipation;
        assert!(last < 1e-3, "{last}");
    }

    #[test]
    fn classification_overfits_one_window() {
        for mode in [DecodeMode::Sp, DecodeMode::SpStar] {
            let totals: Vec<f64> = overfit(mode, Task::Classification, 1000, 0.01, 0.5).iter().map(|p| p.total()).collect();
            assert!(totals.windows(2).skip(3).all(|w| w[1] <= w[0]), "{mode:?}: {totals:?}");
            assert!(*totals.last().unwrap() < 0.1, "{mode:?}: {totals:?}");
        }
    }

    #[test]
    fn rounding_is_idempotent_and_small() {
        let mut m = model(DecodeMode::Sp, Task::Classification);
        let before = m.flat_values();
        m.round_to_f32();
        let once = m.flat_values();
        m.round_to_f32();
        assert_eq!(once, m.flat_values());
        assert!(before.iter().zip(&once).all(|(a, b)| (a - b).abs() <= a.abs() * 1e-7));
    }
}
