use std::fmt;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, OptState};
use crate::autodiff::SegmentGroup;
use crate::dataio::LabeledEdges;
use crate::error::{Error, Result};
use crate::models::{
    compose_adjacency, edge_scores_with, mixing_matrix, BcScore, ElboObjective, EmbeddingPrior,
    LowRankLogits, MlpParams, ModelState, PriorConfig, Variant,
};
use crate::numkit::{lu_factor, normal_matrix, Matrix, Rng};

/// Architecture and prior settings fixed at initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub prior: PriorConfig,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            prior: PriorConfig::default(),
            encoder_hidden: vec![16],
            decoder_hidden: vec![16],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_adjacency: f64,
    pub lr_networks: f64,
    /// Epochs of adjacency updates per cycle.
    pub k1: usize,
    /// Epochs of network updates per cycle.
    pub k2: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Reparameterization samples per minibatch.
    pub mc_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr_adjacency: 1e-2,
            lr_networks: 1e-3,
            k1: 1,
            k2: 1,
            adam: AdamConfig::default(),
            seed: 0,
            mc_samples: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_adjacency > 0.0 && self.lr_networks > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        if self.k1 == 0 || self.k2 == 0 {
            return Err(Error::InvalidConfig("k1 and k2 must be >= 1".into()));
        }
        if self.batch_size == 0 || self.mc_samples == 0 {
            return Err(Error::InvalidConfig("batch size and sample count must be >= 1".into()));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::InvalidConfig("adam betas must lie in [0, 1), eps > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Adjacency,
    Networks,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Adjacency => "adjacency",
            Phase::Networks => "networks",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub epoch: usize,
    pub phase: Phase,
    /// Full-data ELBO estimate accumulated over the epoch's minibatches.
    pub elbo: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub entries: Vec<TraceEntry>,
    /// Adjacency steps undone because the mixing matrix became singular.
    pub rejected_steps: usize,
    pub final_lr_adjacency: f64,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn elbos(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.elbo).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "phase", "elbo", "seconds"])
            .map_err(csv_err)?;
        for e in &self.entries {
            w.write_record([
                e.epoch.to_string(),
                e.phase.to_string(),
                e.elbo.to_string(),
                e.seconds.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Fresh parameters: adjacency entries `N(0, 1e-4)`, logit factors
/// `N(0, 1e-2/√h)`, `w = 0`, network weights `N(0, 1/fan_in)`, biases 0.
///
/// `embeddings` (`P x d`) is required for the InfoSEM variants.
pub fn init_state(
    variant: Variant,
    p: usize,
    embeddings: Option<&Matrix>,
    cfg: &ModelConfig,
    rng: &mut Rng,
) -> Result<ModelState> {
    cfg.prior.validate()?;
    if p == 0 {
        return Err(Error::InvalidConfig("model needs at least one gene".into()));
    }
    let mut adjacency = normal_matrix(rng, p, p, 1e-2);
    adjacency.zero_diagonal();
    let logits = if variant == Variant::InfoSemBc {
        let h = cfg.prior.rank_h;
        if h > p {
            return Err(Error::InvalidConfig(format!("rank_h {h} exceeds P={p}")));
        }
        let std = (1e-2 / (h as f64).sqrt()).sqrt();
        Some(LowRankLogits {
            a: normal_matrix(rng, p, h, std),
            b: normal_matrix(rng, h, p, std),
        })
    } else {
        None
    };
    let embedding = if variant.uses_embeddings() {
        let h = embeddings
            .ok_or_else(|| Error::MissingInput(format!("gene embeddings for {variant}")))?;
        if h.rows() != p || h.cols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "embeddings are {}x{}, expected {p} rows",
                h.rows(),
                h.cols()
            )));
        }
        Some(EmbeddingPrior::new(h.clone()))
    } else {
        None
    };
    let encoder = MlpParams::random(&cfg.encoder_hidden, rng);
    let decoder = MlpParams::random(&cfg.decoder_hidden, rng);
    let state = ModelState {
        variant,
        adjacency,
        logits,
        embedding,
        encoder,
        decoder,
        prior: cfg.prior.clone(),
        regulators: None,
    };
    state.validate()?;
    Ok(state)
}

fn effective_adjacency(state: &ModelState) -> Result<Matrix> {
    match &state.logits {
        Some(l) => compose_adjacency(&state.adjacency, l),
        None => Ok(state.adjacency.clone()),
    }
}

fn mixing_is_regular(state: &ModelState) -> bool {
    effective_adjacency(state)
        .and_then(|a| mixing_matrix(&a))
        .and_then(|m| lu_factor(&m))
        .is_ok()
}

fn columns(x: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), idx.len());
    for i in 0..x.rows() {
        let src = x.row(i);
        for (dst, &j) in out.row_mut(i).iter_mut().zip(idx) {
            *dst = src[j];
        }
    }
    out
}

/// Maximizes the variant ELBO of `state` on the cells of `x` (`P x N`).
///
/// Epochs cycle through `k1` adjacency epochs (adjacency, logit factors,
/// `w`) and `k2` network epochs (encoder, decoder). Within an epoch the
/// cells are shuffled and visited in minibatches; per-cell terms are
/// scaled by `N / batch`. An adjacency step that leaves the mixing matrix
/// singular is undone and the adjacency learning rate halved.
pub fn train(
    mut state: ModelState,
    x: &Matrix,
    y: Option<&LabeledEdges>,
    cfg: &TrainConfig,
) -> Result<(ModelState, TrainTrace)> {
    cfg.validate()?;
    state.validate()?;
    let (p, n) = x.shape();
    if p != state.n_genes() {
        return Err(Error::DimensionMismatch(format!(
            "expression has {p} genes, model has {}",
            state.n_genes()
        )));
    }
    if n == 0 {
        return Err(Error::DimensionMismatch("expression has no cells".into()));
    }
    if state.variant.uses_labels() && y.is_none() {
        return Err(Error::MissingInput("infosem-bc needs a (possibly empty) label set".into()));
    }
    let batch = if cfg.batch_size > n {
        log::warn!("batch size {} exceeds {n} cells; using {n}", cfg.batch_size);
        n
    } else {
        cfg.batch_size
    };

    let mut params = state.params();
    let mut opt_adj = OptState::new(
        &params,
        &[
            SegmentGroup::Adjacency,
            SegmentGroup::LowRank,
            SegmentGroup::EmbeddingWeights,
        ],
    );
    let mut opt_net = OptState::new(&params, &[SegmentGroup::Encoder, SegmentGroup::Decoder]);
    let mut order_rng = Rng::derive(cfg.seed, 1);
    let mut noise_rng = Rng::derive(cfg.seed, 2);
    let mut lr_adj = cfg.lr_adjacency;
    let mut trace = TrainTrace::default();
    let start = Instant::now();
    let mut cells: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let phase = if epoch % (cfg.k1 + cfg.k2) < cfg.k1 {
            Phase::Adjacency
        } else {
            Phase::Networks
        };
        order_rng.shuffle(&mut cells);
        let mut epoch_elbo = 0.0;
        for chunk in cells.chunks(batch) {
            let xb = columns(x, chunk);
            let scale = n as f64 / chunk.len() as f64;
            let obj = ElboObjective::sampled(&state, xb, cfg.mc_samples, scale, y, &mut noise_rng)?;
            let (value, grad) = obj.value_and_gradient(&params)?;
            epoch_elbo += value / scale;
            match phase {
                Phase::Networks => {
                    adam_step(&mut params, &grad, &mut opt_net, cfg.lr_networks, &cfg.adam)?;
                    state.load_params(&params)?;
                }
                Phase::Adjacency => {
                    let saved = (params.clone(), opt_adj.clone());
                    adam_step(&mut params, &grad, &mut opt_adj, lr_adj, &cfg.adam)?;
                    state.load_params(&params)?;
                    if !mixing_is_regular(&state) {
                        (params, opt_adj) = saved;
                        state.load_params(&params)?;
                        lr_adj *= 0.5;
                        trace.rejected_steps += 1;
                        log::warn!(
                            "epoch {epoch}: mixing matrix became singular; adjacency learning rate halved to {lr_adj}"
                        );
                    }
                }
            }
        }
        log::debug!("epoch {epoch} ({phase}): elbo {epoch_elbo:.6}");
        trace.entries.push(TraceEntry {
            epoch,
            phase,
            elbo: epoch_elbo,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    trace.final_lr_adjacency = lr_adj;
    Ok((state, trace))
}

/// Mean edge scores over models trained from each seed, with regulation
/// limited to `regulators` when given.
///
/// Members train in parallel; the mean is taken in ascending seed order
/// so the result does not depend on the order of `seeds`.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_scores(
    variant: Variant,
    x: &Matrix,
    y: Option<&LabeledEdges>,
    embeddings: Option<&Matrix>,
    regulators: Option<&[bool]>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    score: BcScore,
    seeds: &[u64],
) -> Result<Matrix> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("ensemble needs at least one seed".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    let members: Vec<Matrix> = sorted
        .par_iter()
        .map(|&seed| {
            let mut rng = Rng::derive(seed, 0);
            let mut state = init_state(variant, x.rows(), embeddings, model_cfg, &mut rng)?;
            if let Some(r) = regulators {
                state.restrict_regulators(r)?;
            }
            let cfg = TrainConfig {
                seed,
                ..train_cfg.clone()
            };
            let (state, _) = train(state, x, y, &cfg)?;
            edge_scores_with(&state, score)
        })
        .collect::<Result<_>>()?;
    let p = x.rows();
    let mut mean = Matrix::zeros(p, p);
    for m in &members {
        for i in 0..p {
            for k in 0..p {
                if i != k {
                    mean[(i, k)] += m[(i, k)];
                }
            }
        }
    }
    let k = members.len() as f64;
    for i in 0..p {
        for j in 0..p {
            mean[(i, j)] = if i == j { f64::NEG_INFINITY } else { mean[(i, j)] / k };
        }
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Edge;

    fn sem_data(p: usize, n: usize, seed: u64) -> (Matrix, Matrix) {
        let mut rng = Rng::seed_from_u64(seed);
        let mut a = Matrix::zeros(p, p);
        for k in 1..p {
            a[(0, k)] = if k % 2 == 0 { 0.6 } else { -0.5 };
        }
        let z = normal_matrix(&mut rng, p, n, 1.0);
        let m = mixing_matrix(&a).unwrap();
        let x = lu_factor(&m).unwrap().solve(&z).unwrap();
        (x, a)
    }

    fn embeddings(p: usize) -> Matrix {
        normal_matrix(&mut Rng::seed_from_u64(99), p, 3, 1.0)
    }

    #[test]
    fn init_is_seeded_and_small() {
        let cfg = ModelConfig::default();
        let h = embeddings(30);
        for v in Variant::ALL {
            let a = init_state(v, 30, Some(&h), &cfg, &mut Rng::seed_from_u64(1)).unwrap();
            let b = init_state(v, 30, Some(&h), &cfg, &mut Rng::seed_from_u64(1)).unwrap();
            assert_eq!(a, b);
            for i in 0..30 {
                assert_eq!(a.adjacency[(i, i)], 0.0);
            }
            let composed = effective_adjacency(&a).unwrap();
            assert!(composed.max_abs() < 0.1);
            if let Some(e) = &a.embedding {
                assert!(e.w.as_slice().iter().all(|&w| w == 0.0));
            }
        }
        assert!(matches!(
            init_state(Variant::InfoSemB, 30, None, &cfg, &mut Rng::seed_from_u64(1)),
            Err(Error::MissingInput(_))
        ));
    }

    #[test]
    fn composed_init_stays_small_for_p_100() {
        let cfg = ModelConfig::default();
        let mut worst: f64 = 0.0;
        for seed in 0..20 {
            let s = init_state(Variant::InfoSemBc, 100, Some(&embeddings(100)), &cfg, &mut Rng::seed_from_u64(seed)).unwrap();
            worst = worst.max(effective_adjacency(&s).unwrap().max_abs());
            let gate = s.logits.as_ref().unwrap().product().unwrap().map(crate::numkit::sigmoid);
            assert!(gate.as_slice().iter().all(|g| (g - 0.5).abs() < 0.05));
        }
        assert!(worst < 0.1, "{worst}");
    }

    #[test]
    fn zero_epochs_leave_state_unchanged() {
        let (x, _) = sem_data(5, 20, 0);
        let s = init_state(Variant::DeepSem, 5, None, &ModelConfig::default(), &mut Rng::seed_from_u64(0)).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (out, trace) = train(s.clone(), &x, None, &cfg).unwrap();
        assert_eq!(out, s);
        assert!(trace.is_empty());
    }

    #[test]
    fn smoke_training_improves_elbo() {
        let (x, _) = sem_data(10, 64, 1);
        let s = init_state(Variant::DeepSem, 10, None, &ModelConfig::default(), &mut Rng::seed_from_u64(2)).unwrap();
        let cfg = TrainConfig { epochs: 50, batch_size: 16, ..TrainConfig::default() };
        let (out, trace) = train(s, &x, None, &cfg).unwrap();
        assert_eq!(trace.len(), 50);
        let e = trace.elbos();
        let first: f64 = e[..5].iter().sum::<f64>() / 5.0;
        let last: f64 = e[45..].iter().sum::<f64>() / 5.0;
        assert!(last > first, "first {first}, last {last}");
        assert!(out.is_finite());
        for i in 0..10 {
            assert_eq!(out.adjacency[(i, i)], 0.0);
        }
        assert_eq!(trace.entries[0].phase, Phase::Adjacency);
        assert_eq!(trace.entries[1].phase, Phase::Networks);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let (x, _) = sem_data(6, 40, 3);
        let h = embeddings(6);
        let y = LabeledEdges::new(
            (0..6).map(|i| format!("g{i}")).collect(),
            vec![Edge::new(0, 1, true), Edge::new(0, 2, false), Edge::new(1, 3, true)],
        )
        .unwrap();
        let model = ModelConfig {
            prior: PriorConfig { rank_h: 2, ..PriorConfig::default() },
            ..ModelConfig::default()
        };
        for v in Variant::ALL {
            let run = || {
                let s = init_state(v, 6, Some(&h), &model, &mut Rng::seed_from_u64(5)).unwrap();
                let cfg = TrainConfig { epochs: 6, batch_size: 16, k1: 2, seed: 11, ..TrainConfig::default() };
                let (s, t) = train(s, &x, Some(&y), &cfg).unwrap();
                (s.to_json().unwrap(), t.elbos().iter().map(|e| e.to_bits()).collect::<Vec<_>>())
            };
            assert_eq!(run(), run(), "{v}");
        }
    }

    #[test]
    fn singular_steps_are_rejected() {
        // Two genes with a huge adjacency learning rate: a step that drives
        // a_01 * a_10 to 1 must be undone.
        let mut rng = Rng::seed_from_u64(4);
        let x = normal_matrix(&mut rng, 2, 32, 1.0);
        let mut s = init_state(Variant::DeepSem, 2, None, &ModelConfig::default(), &mut rng).unwrap();
        s.adjacency[(0, 1)] = 1.0;
        s.adjacency[(1, 0)] = 0.999;
        let cfg = TrainConfig { epochs: 4, batch_size: 32, lr_adjacency: 5.0, ..TrainConfig::default() };
        match train(s, &x, None, &cfg) {
            Ok((out, trace)) => {
                assert!(mixing_is_regular(&out));
                assert!(trace.final_lr_adjacency <= 5.0);
                assert_eq!(trace.final_lr_adjacency, 5.0 * 0.5f64.powi(trace.rejected_steps as i32));
            }
            Err(e) => panic!("training aborted: {e}"),
        }
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let (x, _) = sem_data(4, 16, 0);
        let s = init_state(Variant::DeepSem, 4, None, &ModelConfig::default(), &mut Rng::seed_from_u64(0)).unwrap();
        let (_, t) = train(s, &x, None, &TrainConfig { epochs: 3, batch_size: 8, ..TrainConfig::default() }).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,phase,elbo,seconds");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("1,networks,"));
    }

    #[test]
    fn ensemble_of_one_equals_single_run_and_ignores_seed_order() {
        let (x, _) = sem_data(5, 32, 6);
        let model = ModelConfig::default();
        let cfg = TrainConfig { epochs: 4, batch_size: 16, ..TrainConfig::default() };
        let single = ensemble_scores(Variant::DeepSem, &x, None, None, None, &model, &cfg, BcScore::Logit, &[7]).unwrap();
        let s = init_state(Variant::DeepSem, 5, None, &model, &mut Rng::derive(7, 0)).unwrap();
        let (s, _) = train(s, &x, None, &TrainConfig { seed: 7, ..cfg.clone() }).unwrap();
        let direct = edge_scores_with(&s, BcScore::Logit).unwrap();
        for i in 0..5 {
            for k in 0..5 {
                assert_eq!(single[(i, k)].to_bits(), direct[(i, k)].to_bits());
            }
        }
        let a = ensemble_scores(Variant::DeepSem, &x, None, None, None, &model, &cfg, BcScore::Logit, &[1, 2, 3]).unwrap();
        let b = ensemble_scores(Variant::DeepSem, &x, None, None, None, &model, &cfg, BcScore::Logit, &[3, 1, 2]).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
