//! An analytically solvable linear-Gaussian world.
//!
//! Data is generated as x = U·y + γ·ε with y, ε standard normal, so the
//! data covariance Σ_x = U·Uᵀ + γ²·I is known exactly. The encoder is a
//! linear Gaussian channel q(z|x) = N(A·x + b, diag(s²)), which makes every
//! per-factor mutual information available in closed form:
//!
//!   I(x; z_h) = ½ ln((a_hᵀ Σ_x a_h + s_h²) / s_h²)
//!
//! The module also carries a deterministic full-batch β-ELBO trainer for the
//! linear family (encoder-noise expectations taken analytically) and the
//! closed-form reconstruction error of the best linear decoder reading only
//! a masked subset of factors.

use crate::error::{Error, Result};
use crate::snapshot::EncoderSnapshot;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// How the encoder matrix A is constructed by [`make_world`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    /// A = [I | 0]: factor h reads data coordinate h (h < min(H, D)).
    Diagonal,
    /// A entries drawn N(0, 1)/√D from the world seed.
    Random,
    /// A = 0: every factor is independent of the data.
    Zero,
}

/// Encoder construction parameters: kind, per-factor noise scale s, and an
/// optional offset b (empty means zero).
#[derive(Debug, Clone)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub noise: f64,
    pub offset: Vec<f64>,
}

impl EncoderSpec {
    pub fn diagonal() -> Self {
        Self {
            kind: EncoderKind::Diagonal,
            noise: 1.0,
            offset: Vec::new(),
        }
    }

    pub fn random() -> Self {
        Self {
            kind: EncoderKind::Random,
            noise: 1.0,
            offset: Vec::new(),
        }
    }

    pub fn zero() -> Self {
        Self {
            kind: EncoderKind::Zero,
            noise: 1.0,
            offset: Vec::new(),
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_offset(mut self, offset: Vec<f64>) -> Self {
        self.offset = offset;
        self
    }
}

/// Ground-truth generative model plus a linear Gaussian encoder/decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWorld {
    data_dim: usize,
    intrinsic_dim: usize,
    latent_dim: usize,
    gamma: f64,
    seed: u64,
    generator: DMatrix<f64>,  // D×P
    data_cov: DMatrix<f64>,   // D×D
    enc_weight: DMatrix<f64>, // H×D
    enc_offset: DVector<f64>, // H
    enc_scale: DVector<f64>,  // H, strictly positive
    dec_weight: DMatrix<f64>, // D×H
    dec_offset: DVector<f64>, // D
    dec_noise: f64,
}

impl LinearWorld {
    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn data_cov(&self) -> &DMatrix<f64> {
        &self.data_cov
    }

    pub fn enc_weight(&self) -> &DMatrix<f64> {
        &self.enc_weight
    }

    pub fn enc_offset(&self) -> &DVector<f64> {
        &self.enc_offset
    }

    pub fn enc_scale(&self) -> &DVector<f64> {
        &self.enc_scale
    }

    pub fn dec_weight(&self) -> &DMatrix<f64> {
        &self.dec_weight
    }

    pub fn dec_noise(&self) -> f64 {
        self.dec_noise
    }

    /// a_hᵀ Σ_x a_h, the variance of the h-th latent mean under the data law.
    pub fn latent_mean_variance(&self, h: usize) -> f64 {
        let row = self.enc_weight.row(h).transpose();
        (row.transpose() * &self.data_cov * &row)[(0, 0)].max(0.0)
    }

    pub fn to_json(&self) -> String {
        let mut s =
            serde_json::to_string_pretty(&WorldDoc::from(self)).expect("world serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: WorldDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn from_row_major(rows: usize, cols: usize, data: &[f64], name: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Format(format!(
            "{name}: expected {rows}×{cols}={} entries, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

/// Replayable on-disk form of a [`LinearWorld`]; all matrices row-major.
#[derive(Serialize, Deserialize)]
struct WorldDoc {
    data_dim: usize,
    intrinsic_dim: usize,
    latent_dim: usize,
    gamma: f64,
    seed: u64,
    generator: Vec<f64>,
    data_cov: Vec<f64>,
    enc_weight: Vec<f64>,
    enc_offset: Vec<f64>,
    enc_scale: Vec<f64>,
    dec_weight: Vec<f64>,
    dec_offset: Vec<f64>,
    dec_noise: f64,
}

impl From<&LinearWorld> for WorldDoc {
    fn from(w: &LinearWorld) -> Self {
        Self {
            data_dim: w.data_dim,
            intrinsic_dim: w.intrinsic_dim,
            latent_dim: w.latent_dim,
            gamma: w.gamma,
            seed: w.seed,
            generator: row_major(&w.generator),
            data_cov: row_major(&w.data_cov),
            enc_weight: row_major(&w.enc_weight),
            enc_offset: w.enc_offset.iter().copied().collect(),
            enc_scale: w.enc_scale.iter().copied().collect(),
            dec_weight: row_major(&w.dec_weight),
            dec_offset: w.dec_offset.iter().copied().collect(),
            dec_noise: w.dec_noise,
        }
    }
}

impl TryFrom<WorldDoc> for LinearWorld {
    type Error = Error;

    fn try_from(doc: WorldDoc) -> Result<Self> {
        let (d, p, h) = (doc.data_dim, doc.intrinsic_dim, doc.latent_dim);
        if doc.enc_scale.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::Format(
                "encoder noise scales must be positive".into(),
            ));
        }
        if !(doc.dec_noise > 0.0) {
            return Err(Error::Format("decoder noise must be positive".into()));
        }
        Ok(LinearWorld {
            data_dim: d,
            intrinsic_dim: p,
            latent_dim: h,
            gamma: doc.gamma,
            seed: doc.seed,
            generator: from_row_major(d, p, &doc.generator, "generator")?,
            data_cov: from_row_major(d, d, &doc.data_cov, "data_cov")?,
            enc_weight: from_row_major(h, d, &doc.enc_weight, "enc_weight")?,
            enc_offset: DVector::from_vec(doc.enc_offset),
            enc_scale: DVector::from_vec(doc.enc_scale),
            dec_weight: from_row_major(d, h, &doc.dec_weight, "dec_weight")?,
            dec_offset: DVector::from_vec(doc.dec_offset),
            dec_noise: doc.dec_noise,
        })
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Builds a deterministic world. The generator has axis-aligned orthogonal
/// columns scaled by the square roots of `spectrum`, so Σ_x is diagonal when
/// γ = 0 and D = P.
pub fn make_world(
    data_dim: usize,
    intrinsic_dim: usize,
    latent_dim: usize,
    spectrum: &[f64],
    gamma: f64,
    encoder: &EncoderSpec,
    seed: u64,
) -> Result<LinearWorld> {
    if intrinsic_dim == 0 || data_dim == 0 || latent_dim == 0 {
        return Err(Error::Usage("dimensions must be >= 1".into()));
    }
    if intrinsic_dim > data_dim {
        return Err(Error::Usage(format!(
            "intrinsic dimension {intrinsic_dim} exceeds data dimension {data_dim}"
        )));
    }
    if spectrum.len() != intrinsic_dim {
        return Err(Error::Usage(format!(
            "spectrum has {} entries, expected P={intrinsic_dim}",
            spectrum.len()
        )));
    }
    if spectrum.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Usage("spectrum entries must be positive".into()));
    }
    if !(gamma >= 0.0) {
        return Err(Error::Usage(format!("gamma must be >= 0, got {gamma}")));
    }
    if !(encoder.noise > 0.0) {
        return Err(Error::Usage("encoder noise scale must be positive".into()));
    }
    if !encoder.offset.is_empty() && encoder.offset.len() != latent_dim {
        return Err(Error::Usage(format!(
            "encoder offset has {} entries, expected H={latent_dim}",
            encoder.offset.len()
        )));
    }

    let mut generator = DMatrix::<f64>::zeros(data_dim, intrinsic_dim);
    for (j, &v) in spectrum.iter().enumerate() {
        generator[(j, j)] = v.sqrt();
    }
    let data_cov = &generator * generator.transpose()
        + DMatrix::<f64>::identity(data_dim, data_dim) * (gamma * gamma);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc_weight = match encoder.kind {
        EncoderKind::Diagonal => {
            let mut a = DMatrix::<f64>::zeros(latent_dim, data_dim);
            for i in 0..latent_dim.min(data_dim) {
                a[(i, i)] = 1.0;
            }
            a
        }
        EncoderKind::Random => {
            let scale = 1.0 / (data_dim as f64).sqrt();
            DMatrix::from_fn(latent_dim, data_dim, |_, _| {
                standard_normal(&mut rng) * scale
            })
        }
        EncoderKind::Zero => DMatrix::zeros(latent_dim, data_dim),
    };
    let enc_offset = if encoder.offset.is_empty() {
        DVector::zeros(latent_dim)
    } else {
        DVector::from_vec(encoder.offset.clone())
    };
    let enc_scale = DVector::from_element(latent_dim, encoder.noise);

    // Decoder starts at the trainer's initialization; only training gives it
    // meaning, every closed-form evaluation ignores it.
    let dec_scale = 1.0 / (data_dim as f64).sqrt();
    let dec_weight = DMatrix::from_fn(data_dim, latent_dim, |_, _| {
        standard_normal(&mut rng) * dec_scale
    });

    Ok(LinearWorld {
        data_dim,
        intrinsic_dim,
        latent_dim,
        gamma,
        seed,
        generator,
        data_cov,
        enc_weight,
        enc_offset,
        enc_scale,
        dec_weight,
        dec_offset: DVector::zeros(data_dim),
        dec_noise: 1.0,
    })
}

/// Exact per-factor MI in nats: ½ ln((a_hᵀ Σ_x a_h + s_h²) / s_h²).
pub fn analytic_factor_mi(world: &LinearWorld) -> Vec<f64> {
    (0..world.latent_dim)
        .map(|h| {
            let t = world.latent_mean_variance(h);
            let s2 = world.enc_scale[h] * world.enc_scale[h];
            0.5 * ((t + s2) / s2).ln()
        })
        .collect()
}

/// Draws one data sample x = U·y + γ·ε, returning (x, y).
fn draw_sample(world: &LinearWorld, rng: &mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>) {
    let y = DVector::from_fn(world.intrinsic_dim, |_, _| standard_normal(rng));
    let mut x = &world.generator * &y;
    if world.gamma > 0.0 {
        for i in 0..world.data_dim {
            x[i] += world.gamma * standard_normal(rng);
        }
    } else {
        // Keep the stream position independent of gamma.
        for _ in 0..world.data_dim {
            let _ = standard_normal(rng);
        }
    }
    (x, y)
}

/// Samples M data points and returns the encoder snapshot (μ = A·x + b,
/// σ = s). Deterministic given the seed.
pub fn sample_snapshot(
    world: &LinearWorld,
    num_samples: usize,
    seed: u64,
) -> Result<EncoderSnapshot> {
    if num_samples == 0 {
        return Err(Error::Usage("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = world.latent_dim;
    let mut mu = Vec::with_capacity(num_samples * h);
    let mut sigma = Vec::with_capacity(num_samples * h);
    for _ in 0..num_samples {
        let (x, _) = draw_sample(world, &mut rng);
        let m = &world.enc_weight * &x + &world.enc_offset;
        for j in 0..h {
            mu.push(m[j]);
            sigma.push(world.enc_scale[j]);
        }
    }
    EncoderSnapshot::new(
        num_samples,
        h,
        mu,
        sigma,
        format!("linear-world seed={} M={num_samples}", seed),
    )
}

/// Labeling of intrinsic coordinates for classification experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRule {
    /// Quadrant signs of the first two intrinsic coordinates; 4 classes.
    Quadrant,
}

impl LabelRule {
    pub fn num_classes(&self) -> usize {
        match self {
            LabelRule::Quadrant => 4,
        }
    }

    fn label(&self, y: &DVector<f64>) -> usize {
        match self {
            LabelRule::Quadrant => {
                let a = usize::from(y[0] > 0.0);
                let b = usize::from(y[1] > 0.0);
                2 * a + b
            }
        }
    }
}

/// Draws M labeled samples: latent means (row-major M×H) and class labels.
pub fn sample_labeled(
    world: &LinearWorld,
    num_samples: usize,
    seed: u64,
    rule: LabelRule,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if num_samples == 0 {
        return Err(Error::Usage("need at least one sample".into()));
    }
    if world.intrinsic_dim < 2 && rule == LabelRule::Quadrant {
        return Err(Error::Usage(
            "quadrant labels need intrinsic dimension >= 2".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = world.latent_dim;
    let mut latents = Vec::with_capacity(num_samples * h);
    let mut labels = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let (x, y) = draw_sample(world, &mut rng);
        let m = &world.enc_weight * &x + &world.enc_offset;
        latents.extend(m.iter().copied());
        labels.push(rule.label(&y));
    }
    Ok((latents, labels))
}

/// One record of the training trace.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub elbo: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

/// Per-step β-ELBO values; steps are strictly increasing.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

/// Trainer configuration.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub data_dim: usize,
    pub intrinsic_dim: usize,
    pub latent_dim: usize,
    pub spectrum: Vec<f64>,
    pub gamma: f64,
    pub beta: f64,
    pub num_samples: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

struct Params {
    a: DMatrix<f64>,
    b: DVector<f64>,
    ln_s: DVector<f64>,
    w: DMatrix<f64>,
    c: DVector<f64>,
    ln_sig: f64,
}

struct Moments {
    mean: DVector<f64>,   // x̄
    second: DMatrix<f64>, // (1/M) Σ x xᵀ
}

fn objective(p: &Params, mo: &Moments, beta: f64, d: usize) -> (f64, f64, f64) {
    let s2 = p.ln_s.map(|t| (2.0 * t).exp());
    let sig2 = (2.0 * p.ln_sig).exp();
    let bmat = DMatrix::<f64>::identity(d, d) - &p.w * &p.a;
    let dvec = &p.w * &p.b + &p.c;
    let q_rec = (&bmat * &mo.second * bmat.transpose()).trace()
        - 2.0 * dvec.dot(&(&bmat * &mo.mean))
        + dvec.norm_squared();
    let noise: f64 = (0..p.w.ncols())
        .map(|h| p.w.column(h).norm_squared() * s2[h])
        .sum();
    let recon =
        -0.5 * d as f64 * (2.0 * std::f64::consts::PI * sig2).ln() - (q_rec + noise) / (2.0 * sig2);
    let enc_quad = (&p.a * &mo.second * p.a.transpose()).trace()
        + 2.0 * p.b.dot(&(&p.a * &mo.mean))
        + p.b.norm_squared();
    let kl = 0.5 * ((0..s2.len()).map(|h| s2[h] - 1.0 - s2[h].ln()).sum::<f64>() + enc_quad);
    (recon - beta * kl, recon, kl)
}

struct Grads {
    a: DMatrix<f64>,
    b: DVector<f64>,
    ln_s: DVector<f64>,
    w: DMatrix<f64>,
    c: DVector<f64>,
    ln_sig: f64,
}

fn gradient(p: &Params, mo: &Moments, beta: f64, d: usize) -> Grads {
    let s2 = p.ln_s.map(|t| (2.0 * t).exp());
    let sig2 = (2.0 * p.ln_sig).exp();
    let bmat = DMatrix::<f64>::identity(d, d) - &p.w * &p.a;
    let dvec = &p.w * &p.b + &p.c;
    let e = &bmat * &mo.second - &dvec * mo.mean.transpose();
    let rbar = &bmat * &mo.mean - &dvec;
    let c1 = &e * p.a.transpose() + &rbar * p.b.transpose();
    let mut w_s2 = p.w.clone();
    for h in 0..w_s2.ncols() {
        let mut col = w_s2.column_mut(h);
        col *= s2[h];
    }
    let g_w = (c1 - w_s2) / sig2;
    let g_c = &rbar / sig2;
    let g_a =
        (p.w.transpose() * &e) / sig2 - (&p.a * &mo.second + &p.b * mo.mean.transpose()) * beta;
    let g_b = (p.w.transpose() * &rbar) / sig2 - (&p.a * &mo.mean + &p.b) * beta;
    let g_ln_s = DVector::from_fn(s2.len(), |h, _| {
        -p.w.column(h).norm_squared() * s2[h] / sig2 - beta * (s2[h] - 1.0)
    });
    let q_rec = (&bmat * &mo.second * bmat.transpose()).trace()
        - 2.0 * dvec.dot(&(&bmat * &mo.mean))
        + dvec.norm_squared();
    let noise: f64 = (0..p.w.ncols())
        .map(|h| p.w.column(h).norm_squared() * s2[h])
        .sum();
    let g_ln_sig = -(d as f64) + (q_rec + noise) / sig2;
    Grads {
        a: g_a,
        b: g_b,
        ln_s: g_ln_s,
        w: g_w,
        c: g_c,
        ln_sig: g_ln_sig,
    }
}

fn step_params(p: &Params, g: &Grads, lr: f64) -> Params {
    Params {
        a: &p.a + &g.a * lr,
        b: &p.b + &g.b * lr,
        ln_s: &p.ln_s + &g.ln_s * lr,
        w: &p.w + &g.w * lr,
        c: &p.c + &g.c * lr,
        ln_sig: p.ln_sig + g.ln_sig * lr,
    }
}

/// Decoder noise level held fixed during training (see below).
const TRAIN_DEC_NOISE: f64 = 0.1;

/// Fits a linear β-VAE by full-batch gradient ascent on the analytic β-ELBO.
///
/// The dataset is drawn once from the generative model; encoder-noise
/// expectations inside the objective are exact, so the whole run is a
/// deterministic function of the configuration. The learning rate halves
/// whenever a step would decrease the objective, which keeps the trace
/// non-decreasing.
///
/// The decoder noise σ_dec is held fixed at [`TRAIN_DEC_NOISE`] rather than
/// trained. Jointly maximizing over σ_dec is degenerate for β > 1: every
/// stationary point satisfies σ_dec² = (mean residual)/D with each active
/// factor contributing β·σ_dec² of residual, which forces the number of
/// active factors below D/β — for any β ≥ D the optimum is full posterior
/// collapse, erasing the very sparsity structure this oracle exists to
/// exhibit. A fixed moderate noise level keeps the rate/distortion
/// trade-off meaningful: factors whose data variance exceeds β·σ_dec² stay
/// active, the rest collapse to the prior.
pub fn train_beta_vae(cfg: &TrainConfig) -> Result<(LinearWorld, TrainTrace)> {
    if !(cfg.beta > 0.0) {
        return Err(Error::Usage(format!("beta must be > 0, got {}", cfg.beta)));
    }
    if cfg.steps == 0 {
        return Err(Error::Usage("steps must be >= 1".into()));
    }
    if cfg.num_samples == 0 {
        return Err(Error::Usage("need at least one training sample".into()));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::Usage("learning rate must be positive".into()));
    }
    let base = make_world(
        cfg.data_dim,
        cfg.intrinsic_dim,
        cfg.latent_dim,
        &cfg.spectrum,
        cfg.gamma,
        &EncoderSpec::zero(),
        cfg.seed,
    )?;

    // Dataset moments; the objective is quadratic in x so these suffice.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.data_dim;
    let mut mean = DVector::<f64>::zeros(d);
    let mut second = DMatrix::<f64>::zeros(d, d);
    for _ in 0..cfg.num_samples {
        let (x, _) = draw_sample(&base, &mut rng);
        mean += &x;
        second.syger(1.0, &x, &x, 1.0);
    }
    let m = cfg.num_samples as f64;
    mean /= m;
    second /= m;
    // syger fills the lower triangle; mirror it.
    for i in 0..d {
        for j in (i + 1)..d {
            second[(i, j)] = second[(j, i)];
        }
    }
    let mo = Moments { mean, second };

    // Symmetric seeded init: A, W ~ N(0,1)/√D, s = 1, b = c = 0, σ_dec = 1.
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let scale = 1.0 / (d as f64).sqrt();
    let mut p = Params {
        a: DMatrix::from_fn(cfg.latent_dim, d, |_, _| {
            standard_normal(&mut init_rng) * scale
        }),
        b: DVector::zeros(cfg.latent_dim),
        ln_s: DVector::zeros(cfg.latent_dim),
        w: DMatrix::from_fn(d, cfg.latent_dim, |_, _| {
            standard_normal(&mut init_rng) * scale
        }),
        c: DVector::zeros(d),
        ln_sig: TRAIN_DEC_NOISE.ln(),
    };

    let (mut best, mut last_recon, mut last_kl) = objective(&p, &mo, cfg.beta, d);
    if !best.is_finite() {
        return Err(Error::Training { step: 0 });
    }
    let mut lr = cfg.learning_rate;
    let mut trace = TrainTrace::default();
    for step in 1..=cfg.steps {
        loop {
            let mut g = gradient(&p, &mo, cfg.beta, d);
            g.ln_sig = 0.0; // σ_dec stays fixed; see the function docs.
            let cand = step_params(&p, &g, lr);
            let (obj, recon, kl) = objective(&cand, &mo, cfg.beta, d);
            if !obj.is_finite() {
                lr *= 0.5;
                if lr < 1e-300 {
                    return Err(Error::Training { step });
                }
                continue;
            }
            if obj + 1e-12 >= best {
                p = cand;
                best = obj;
                last_recon = recon;
                last_kl = kl;
                break;
            }
            lr *= 0.5;
            if lr < 1e-18 {
                // Stalled at numerical precision; hold position.
                break;
            }
        }
        trace.records.push(TraceRecord {
            step,
            elbo: best,
            reconstruction: last_recon,
            kl: last_kl,
        });
    }

    let world = LinearWorld {
        enc_weight: p.a,
        enc_offset: p.b,
        enc_scale: p.ln_s.map(|t| t.exp()),
        dec_weight: p.w,
        dec_offset: p.c,
        dec_noise: p.ln_sig.exp(),
        ..base
    };
    Ok((world, trace))
}

/// Expected squared reconstruction error of the best linear decoder that
/// reads only the kept factors (masked factors zeroed before decoding):
/// the trace of the residual covariance of x given z_kept.
pub fn optimal_truncated_mse(world: &LinearWorld, keep: &[bool]) -> Result<f64> {
    if keep.len() != world.latent_dim {
        return Err(Error::Usage(format!(
            "mask has {} entries, expected H={}",
            keep.len(),
            world.latent_dim
        )));
    }
    let total: f64 = world.data_cov.trace();
    let kept: Vec<usize> = (0..world.latent_dim).filter(|&h| keep[h]).collect();
    if kept.is_empty() {
        return Ok(total);
    }
    let k = kept.len();
    let d = world.data_dim;
    let mut a_k = DMatrix::<f64>::zeros(k, d);
    for (r, &h) in kept.iter().enumerate() {
        a_k.row_mut(r).copy_from(&world.enc_weight.row(h));
    }
    let c = &a_k * &world.data_cov; // K×D, Cov(z_kept, x)
    let mut gram = &c * a_k.transpose(); // K×K
    for (r, &h) in kept.iter().enumerate() {
        gram[(r, r)] += world.enc_scale[h] * world.enc_scale[h];
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Evaluation("kept-factor covariance is not positive definite".into())
    })?;
    let solved = chol.solve(&c); // K×D
    let explained: f64 = c.iter().zip(solved.iter()).map(|(a, b)| a * b).sum();
    Ok((total - explained).max(0.0))
}
