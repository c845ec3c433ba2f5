//! Density model over dataset `(s, a)` pairs and the coverage score `d^pi`.
//!
//! A shared trunk reads `(s, a^c, onehot(a^d))` and feeds three heads: a
//! diagonal Gaussian over the state, a diagonal Gaussian over the
//! continuous settings and a categorical over the mode. Gaussian scales
//! are `exp(clamp(log_var)) + 1e-6`.

use rand::Rng;

use crate::data::{Transitions, N_CONT, N_STATE};
use crate::error::{Error, Result};
use crate::kv::{join_widths, parse_widths, KvFile};
use crate::learners::{critic_input, PolicyActions};
use crate::nn::{softmax_rows, AdamState, Checkpoint, Matrix, Mlp, LOG_2PI};
use crate::rng::{stream, stream_rng};

const N_MODES: usize = 2;
const SCALE_EPS: f64 = 1e-6;
/// Output columns: state mean, state log-var, settings mean, settings
/// log-var, mode logits.
const OUT_DIM: usize = 2 * N_STATE + 2 * N_CONT + N_MODES;
const STATE_LV: usize = N_STATE;
const CONT_MEAN: usize = 2 * N_STATE;
const CONT_LV: usize = CONT_MEAN + N_CONT;
const LOGITS: usize = CONT_LV + N_CONT;

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f32,
    /// Trunk widths.
    pub hidden: Vec<usize>,
    pub log_var_min: f32,
    pub log_var_max: f32,
}

impl CoverageConfig {
    pub fn paper() -> Self {
        CoverageConfig {
            steps: 50_000,
            batch_size: 256,
            lr: 3e-4,
            hidden: vec![256, 256],
            log_var_min: -5.0,
            log_var_max: 2.0,
        }
    }

    pub fn desk() -> Self {
        CoverageConfig { steps: 20_000, batch_size: 128, lr: 1e-3, hidden: vec![64, 64], ..Self::paper() }
    }

    pub fn apply(mut self, mut kv: KvFile) -> Result<Self> {
        kv.take_into("steps", &mut self.steps)?;
        kv.take_into("batch_size", &mut self.batch_size)?;
        kv.take_into("lr", &mut self.lr)?;
        if let Some(h) = kv.take::<String>("hidden")? {
            self.hidden = parse_widths(&h)?;
        }
        kv.take_into("log_var_min", &mut self.log_var_min)?;
        kv.take_into("log_var_max", &mut self.log_var_max)?;
        kv.finish()?;
        self.validate()?;
        Ok(self)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("steps", self.steps);
        kv.set("batch_size", self.batch_size);
        kv.set("lr", self.lr);
        kv.set("hidden", join_widths(&self.hidden));
        kv.set("log_var_min", self.log_var_min);
        kv.set("log_var_max", self.log_var_max);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("coverage steps, batch and lr must be positive".into()));
        }
        if !(self.log_var_min < self.log_var_max) {
            return Err(Error::InvalidArgument(format!(
                "log-var clamp [{}, {}] is empty",
                self.log_var_min, self.log_var_max
            )));
        }
        Ok(())
    }
}

/// Mean log-likelihood split by head.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CoverageScore {
    /// `state + sum(cont) + disc`.
    pub d_pi: f64,
    pub state: f64,
    pub cont: [f64; N_CONT],
    pub disc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageModel {
    pub net: Mlp,
    pub log_var_min: f32,
    pub log_var_max: f32,
}

/// Per-row log densities by head.
struct HeadLogProbs {
    state: Vec<f64>,
    cont: Vec<[f64; N_CONT]>,
    disc: Vec<f64>,
}

impl CoverageModel {
    pub fn new<R: Rng + ?Sized>(cfg: &CoverageConfig, rng: &mut R) -> Self {
        let mut sizes = vec![N_STATE + N_CONT + N_MODES];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(OUT_DIM);
        CoverageModel { net: Mlp::new(&sizes, rng), log_var_min: cfg.log_var_min, log_var_max: cfg.log_var_max }
    }

    fn clamp(&self, lv: f32) -> f64 {
        lv.clamp(self.log_var_min, self.log_var_max) as f64
    }

    /// Gaussian scales of every state and settings dimension, row by row.
    pub fn scales(&self, states: &Matrix, actions: &PolicyActions) -> Result<Matrix> {
        let out = self.net.predict(&critic_input(states, &actions.cont, &actions.modes)?)?;
        let mut s = Matrix::zeros(out.rows(), N_STATE + N_CONT);
        for r in 0..out.rows() {
            let row = out.row(r);
            for j in 0..N_STATE {
                s.set(r, j, (self.clamp(row[STATE_LV + j]).exp() + SCALE_EPS) as f32);
            }
            for k in 0..N_CONT {
                s.set(r, N_STATE + k, (self.clamp(row[CONT_LV + k]).exp() + SCALE_EPS) as f32);
            }
        }
        Ok(s)
    }

    fn head_log_probs(&self, states: &Matrix, actions: &PolicyActions) -> Result<HeadLogProbs> {
        let out = self.net.predict(&critic_input(states, &actions.cont, &actions.modes)?)?;
        let probs = softmax_rows(&out.columns(LOGITS, N_MODES)?);
        let b = out.rows();
        let mut lp = HeadLogProbs { state: vec![0.0; b], cont: vec![[0.0; N_CONT]; b], disc: vec![0.0; b] };
        for r in 0..b {
            let row = out.row(r);
            for j in 0..N_STATE {
                lp.state[r] += normal_log_prob(states.get(r, j), row[j], self.clamp(row[STATE_LV + j]));
            }
            for k in 0..N_CONT {
                lp.cont[r][k] =
                    normal_log_prob(actions.cont.get(r, k), row[CONT_MEAN + k], self.clamp(row[CONT_LV + k]));
            }
            lp.disc[r] = (probs.get(r, actions.modes[r]) as f64).max(f64::MIN_POSITIVE).ln();
        }
        Ok(lp)
    }

    /// `log p(s, a)` per row.
    pub fn log_prob(&self, states: &Matrix, actions: &PolicyActions) -> Result<Vec<f64>> {
        let lp = self.head_log_probs(states, actions)?;
        Ok((0..lp.state.len()).map(|r| lp.state[r] + lp.cont[r].iter().sum::<f64>() + lp.disc[r]).collect())
    }

    /// Training objective on a batch: per-head mean NLL summed over heads,
    /// with its parameter gradient.
    pub fn nll_loss(&self, states: &Matrix, actions: &PolicyActions) -> Result<(f64, Mlp)> {
        let (out, cache) = self.net.forward(&critic_input(states, &actions.cont, &actions.modes)?)?;
        let b = out.rows();
        let probs = softmax_rows(&out.columns(LOGITS, N_MODES)?);
        let mut g = Matrix::zeros(b, OUT_DIM);
        let (ws, wc, wd) = (1.0 / (b * N_STATE) as f64, 1.0 / (b * N_CONT) as f64, 1.0 / b as f64);
        let mut loss = 0.0f64;
        for r in 0..b {
            let row = out.row(r).to_vec();
            let grow = g.row_mut(r);
            let mut gauss = |x: f32, mean_col: usize, lv_col: usize, w: f64| {
                let (l, dm, dlv) = self.normal_nll_grad(x, row[mean_col], row[lv_col]);
                grow[mean_col] = (w * dm) as f32;
                grow[lv_col] = (w * dlv) as f32;
                w * l
            };
            for j in 0..N_STATE {
                loss += gauss(states.get(r, j), j, STATE_LV + j, ws);
            }
            for k in 0..N_CONT {
                loss += gauss(actions.cont.get(r, k), CONT_MEAN + k, CONT_LV + k, wc);
            }
            let m = actions.modes[r];
            loss -= wd * (probs.get(r, m) as f64).max(f64::MIN_POSITIVE).ln();
            for c in 0..N_MODES {
                let onehot = if c == m { 1.0 } else { 0.0 };
                grow[LOGITS + c] = (wd * (probs.get(r, c) as f64 - onehot)) as f32;
            }
        }
        let (grads, _) = self.net.backward(&cache, &g)?;
        Ok((loss, grads))
    }

    /// NLL of `x` and its derivatives with respect to the mean and the
    /// unclamped log-var output.
    fn normal_nll_grad(&self, x: f32, mean: f32, lv: f32) -> (f64, f64, f64) {
        let c = self.clamp(lv);
        let e = c.exp();
        let sigma = e + SCALE_EPS;
        let d = (x - mean) as f64;
        let nll = 0.5 * (d / sigma).powi(2) + sigma.ln() + 0.5 * LOG_2PI;
        let dm = -d / (sigma * sigma);
        let inside = lv > self.log_var_min && lv < self.log_var_max;
        let dlv = if inside { (1.0 / sigma - d * d / sigma.powi(3)) * e } else { 0.0 };
        (nll, dm, dlv)
    }

    pub fn push_to(&self, ck: &mut Checkpoint) {
        ck.push_mlp("coverage", &self.net);
        ck.push("coverage.log_var_clamp", &Matrix::from_vec(1, 2, vec![self.log_var_min, self.log_var_max]).unwrap());
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let clamp = ck.get("coverage.log_var_clamp")?;
        if clamp.data().len() != 2 {
            return Err(Error::dim("CoverageModel::from_checkpoint", 2, clamp.data().len()));
        }
        let net = ck.mlp("coverage")?;
        if net.input_dim() != N_STATE + N_CONT + N_MODES || net.output_dim() != OUT_DIM {
            return Err(Error::dim("CoverageModel::from_checkpoint", OUT_DIM, net.output_dim()));
        }
        Ok(CoverageModel { net, log_var_min: clamp.data()[0], log_var_max: clamp.data()[1] })
    }
}

fn normal_log_prob(x: f32, mean: f32, clamped_lv: f64) -> f64 {
    let sigma = clamped_lv.exp() + SCALE_EPS;
    let z = (x - mean) as f64 / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * LOG_2PI
}

/// Dataset actions as a [`PolicyActions`] batch.
pub fn dataset_actions(tr: &Transitions) -> PolicyActions {
    PolicyActions { cont: tr.cont.clone(), modes: tr.modes.clone() }
}

#[derive(Clone, Debug)]
pub struct CoverageFit {
    pub model: CoverageModel,
    /// Training loss of every step.
    pub losses: Vec<f64>,
}

impl CoverageFit {
    /// Means of consecutive non-overlapping windows of `window` steps.
    pub fn window_means(&self, window: usize) -> Vec<f64> {
        self.losses.chunks_exact(window.max(1)).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
    }
}

/// Fits the density model to the dataset pairs by minibatch NLL descent.
pub fn coverage_fit(tr: &Transitions, cfg: &CoverageConfig, seed: u64) -> Result<CoverageFit> {
    cfg.validate()?;
    if tr.is_empty() {
        return Err(Error::InvalidArgument("coverage model needs at least one transition".into()));
    }
    let mut model = CoverageModel::new(cfg, &mut stream_rng(seed, stream::INIT));
    let mut adam = AdamState::new(&model.net, cfg.lr);
    let mut rng = stream_rng(seed, stream::COVERAGE);
    let b = cfg.batch_size.min(tr.len());
    let mut rows = vec![0usize; b];
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        for r in rows.iter_mut() {
            *r = rng.random_range(0..tr.len());
        }
        let states = tr.states.select_rows(&rows);
        let actions = PolicyActions { cont: tr.cont.select_rows(&rows), modes: rows.iter().map(|&i| tr.modes[i]).collect() };
        let (loss, grads) = model.nll_loss(&states, &actions)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("coverage NLL"));
        }
        adam.step(&mut model.net, &grads)?;
        losses.push(loss);
    }
    Ok(CoverageFit { model, losses })
}

/// Mean log-likelihood of `(s, a)` pairs, overall and per head.
pub fn coverage_score(model: &CoverageModel, states: &Matrix, actions: &PolicyActions) -> Result<CoverageScore> {
    let b = states.rows();
    if b == 0 {
        return Err(Error::InvalidArgument("no states to score".into()));
    }
    if actions.cont.rows() != b || actions.modes.len() != b {
        return Err(Error::dim("coverage_score", b, actions.modes.len()));
    }
    let lp = model.head_log_probs(states, actions)?;
    let n = b as f64;
    let mut s = CoverageScore {
        state: lp.state.iter().sum::<f64>() / n,
        disc: lp.disc.iter().sum::<f64>() / n,
        ..Default::default()
    };
    for k in 0..N_CONT {
        s.cont[k] = lp.cont.iter().map(|c| c[k]).sum::<f64>() / n;
    }
    s.d_pi = s.state + s.cont.iter().sum::<f64>() + s.disc;
    Ok(s)
}
