//! The assembled recommender: optional semantic transform, fusion with ID
//! embeddings, and the causal-attention backbone over the fused item table.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::adapter::{
    fuse_graph, stacked_identity, Activation, Checkpoint, FusionMode, MlpAdapterParams, SpecTranConfig, SpecTranParams,
    TaylorMode,
};
use crate::error::{Error, Result};
use crate::evalkit::Scorer;
use crate::numkit::{DenseMatrix, ParamId, ParamStore, Tape, Var};
use crate::recmodel::{embed_sequence, encode_sequence, last_positions, BackboneConfig, Batch, SasrecParams};
use crate::rng::{substream, streams, Rng};
use crate::spectral::{identity_project, svd_decompose, truncate_project};
use crate::Scalar;

/// How semantic embeddings are turned into `d`-dimensional item vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Transform {
    #[default]
    SpecTran,
    Mlp,
    SvdTruncate,
    SvdIdentity,
    /// ID embeddings only.
    None,
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::SpecTran => "spectran",
            Transform::Mlp => "mlp",
            Transform::SvdTruncate => "svd_truncate",
            Transform::SvdIdentity => "svd_identity",
            Transform::None => "none",
        })
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectran" => Ok(Transform::SpecTran),
            "mlp" => Ok(Transform::Mlp),
            "svd_truncate" => Ok(Transform::SvdTruncate),
            "svd_identity" => Ok(Transform::SvdIdentity),
            "none" => Ok(Transform::None),
            _ => Err(Error::Config(format!("unknown transform {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub transform: Transform,
    pub fusion: FusionMode,
    pub backbone: BackboneConfig,
    /// Inner attention width `m` of the spectral transform; `None` means `d`.
    pub attention_dim: Option<usize>,
    pub taylor_order: usize,
    pub taylor_mode: TaylorMode,
    /// Hidden width of the MLP adapter; `None` means `d`.
    pub mlp_hidden: Option<usize>,
    pub mlp_activation: Activation,
    pub temperature: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            transform: Transform::SpecTran,
            fusion: FusionMode::Add,
            backbone: BackboneConfig::default(),
            attention_dim: None,
            taylor_order: 3,
            taylor_mode: TaylorMode::Shared,
            mlp_hidden: None,
            mlp_activation: Activation::Relu,
            temperature: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn d(&self) -> usize {
        self.backbone.d
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature {} must be positive", self.temperature)));
        }
        if self.attention_dim == Some(0) || self.mlp_hidden == Some(0) {
            return Err(Error::Config("attention_dim and mlp_hidden must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Adapter {
    None,
    SpecTran(SpecTranParams),
    Mlp(MlpAdapterParams),
}

/// Semantic input carried by the model as tape constants.
#[derive(Clone, Debug)]
enum Semantic<T> {
    None,
    /// Spectral basis `U` and singular values for the learnable transform.
    Basis { u: Arc<DenseMatrix<T>>, sigma: Vec<T> },
    /// Raw `N × l` embeddings for the MLP.
    Raw(Arc<DenseMatrix<T>>),
    /// Precomputed `E_s` for the static spectral projections.
    Fixed(Arc<DenseMatrix<T>>),
}

const PROJECTION: &str = "fusion.projection";

/// Sequential recommender with every trainable tensor in one [`ParamStore`].
#[derive(Clone, Debug)]
pub struct SeqRecModel<T> {
    config: ModelConfig,
    num_items: usize,
    semantic_dim: usize,
    store: ParamStore<T>,
    backbone: SasrecParams,
    adapter: Adapter,
    projection: Option<ParamId>,
    semantic: Semantic<T>,
    frozen: Vec<bool>,
}

impl<T: Scalar> SeqRecModel<T> {
    /// Builds and initialises a model. The backbone and the adapter draw
    /// from separate named streams, so the backbone initialisation does not
    /// depend on the transform.
    pub fn new(config: ModelConfig, embeddings: Option<&DenseMatrix<T>>, num_items: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.d();
        let mut backbone_rng = substream(seed, &format!("{}.backbone", streams::INIT));
        let mut adapter_rng = substream(seed, &format!("{}.adapter", streams::INIT));
        let mut store = ParamStore::new();
        let backbone = SasrecParams::init(&mut store, &config.backbone, num_items, &mut backbone_rng)?;

        let e = match (config.transform, embeddings) {
            (Transform::None, _) => None,
            (_, None) => {
                return Err(Error::Config(format!(
                    "transform {} needs semantic embeddings",
                    config.transform
                )))
            }
            (_, Some(e)) => {
                if e.rows() != num_items {
                    return Err(Error::Config(format!(
                        "embedding matrix has {} rows for {num_items} items",
                        e.rows()
                    )));
                }
                Some(e)
            }
        };
        let semantic_dim = e.map_or(0, DenseMatrix::cols);

        // Under semantic_init the transform runs once, on a scratch store.
        let seed_only = config.fusion == FusionMode::SemanticInit;
        let mut scratch = ParamStore::new();
        let target: &mut ParamStore<T> = if seed_only { &mut scratch } else { &mut store };

        let (adapter, semantic) = match (config.transform, e) {
            (Transform::None, _) | (_, None) => (Adapter::None, Semantic::None),
            (Transform::SpecTran, Some(e)) => {
                let f = svd_decompose(e)?;
                let cfg = SpecTranConfig {
                    m: config.attention_dim.unwrap_or(d),
                    order: config.taylor_order,
                    mode: config.taylor_mode,
                    ..SpecTranConfig::new(d)
                };
                let p = SpecTranParams::init(target, &cfg, f.rank(), &mut adapter_rng)?;
                let basis = Semantic::Basis {
                    u: Arc::new(f.u().clone()),
                    sigma: f.sigma().to_vec(),
                };
                (Adapter::SpecTran(p), basis)
            }
            (Transform::Mlp, Some(e)) => {
                let hidden = config.mlp_hidden.unwrap_or(d);
                let p = MlpAdapterParams::init(target, &[e.cols(), hidden, d], config.mlp_activation, &mut adapter_rng)?;
                (Adapter::Mlp(p), Semantic::Raw(Arc::new(e.clone())))
            }
            (Transform::SvdTruncate | Transform::SvdIdentity, Some(e)) => {
                let f = svd_decompose(e)?;
                if d > f.rank() {
                    return Err(Error::Config(format!("d={d} exceeds embedding rank {}", f.rank())));
                }
                let fixed = if config.transform == Transform::SvdTruncate {
                    truncate_project(&f, d)?
                } else {
                    identity_project(&f, d)?
                };
                (Adapter::None, Semantic::Fixed(Arc::new(fixed)))
            }
        };

        let mut model = Self {
            config,
            num_items,
            semantic_dim,
            frozen: Vec::new(),
            store,
            backbone,
            adapter,
            projection: None,
            semantic,
        };
        if seed_only {
            if !matches!(model.semantic, Semantic::None) {
                let e_s = model.semantic_embeddings_with(&scratch)?;
                model.store.set(model.backbone.item, e_s)?;
            }
            model.adapter = Adapter::None;
            model.semantic = Semantic::None;
        } else if model.config.fusion == FusionMode::ConcatProject && !matches!(model.semantic, Semantic::None) {
            model.projection = Some(model.store.insert(PROJECTION, stacked_identity(d))?);
        }
        model.frozen = vec![false; model.store.len()];
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn backbone(&self) -> &SasrecParams {
        &self.backbone
    }

    pub fn spectran_params(&self) -> Option<&SpecTranParams> {
        match &self.adapter {
            Adapter::SpecTran(p) => Some(p),
            _ => None,
        }
    }

    pub fn mlp_params(&self) -> Option<&MlpAdapterParams> {
        match &self.adapter {
            Adapter::Mlp(p) => Some(p),
            _ => None,
        }
    }

    /// Singular values of the semantic matrix when the spectral transform is active.
    pub fn spectral_sigma(&self) -> Option<&[T]> {
        match &self.semantic {
            Semantic::Basis { sigma, .. } => Some(sigma),
            _ => None,
        }
    }

    /// Total trainable scalars.
    pub fn trainable_scalars(&self) -> usize {
        self.store.num_scalars()
    }

    /// Trainable scalars beyond the ID-only backbone.
    pub fn adapter_scalars(&self) -> usize {
        self.trainable_scalars() - self.backbone.num_scalars(&self.store)
    }

    /// Excludes the named parameter from optimisation.
    pub fn freeze(&mut self, name: &str) -> Result<()> {
        let id = self
            .store
            .id(name)
            .ok_or_else(|| Error::Config(format!("no parameter named {name}")))?;
        self.frozen[id.index()] = true;
        Ok(())
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen[id.index()]
    }

    fn semantic_graph(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> Result<Option<Var>> {
        Ok(match (&self.semantic, &self.adapter) {
            (Semantic::None, _) => None,
            (Semantic::Fixed(e), _) => Some(tape.constant(e.clone())),
            (Semantic::Basis { u, sigma }, Adapter::SpecTran(p)) => {
                let u = tape.constant(u.clone());
                Some(p.project(tape, store, u, sigma)?)
            }
            (Semantic::Raw(e), Adapter::Mlp(p)) => {
                let x = tape.constant(e.clone());
                Some(p.forward(tape, store, x)?)
            }
            _ => return Err(Error::Contract("semantic input and adapter disagree".into())),
        })
    }

    fn semantic_embeddings_with(&self, store: &ParamStore<T>) -> Result<DenseMatrix<T>> {
        let mut tape = Tape::new();
        let v = self
            .semantic_graph(&mut tape, store)?
            .ok_or_else(|| Error::Contract("model has no semantic transform".into()))?;
        Ok(tape.value(v).clone())
    }

    /// Transformed semantic embeddings `E_s`, if the model has any.
    pub fn semantic_embeddings(&self) -> Result<Option<DenseMatrix<T>>> {
        let mut tape = Tape::new();
        Ok(self.semantic_graph(&mut tape, &self.store)?.map(|v| tape.value(v).clone()))
    }

    /// Records the fused item table `E_item` on the tape.
    pub fn item_table(&self, tape: &mut Tape<T>) -> Result<Var> {
        let e_id = tape.param(&self.store, self.backbone.item);
        match self.semantic_graph(tape, &self.store)? {
            None => Ok(e_id),
            Some(e_s) => {
                let proj = self.projection.map(|p| tape.param(&self.store, p));
                fuse_graph(tape, e_s, e_id, self.config.fusion, proj)
            }
        }
    }

    pub fn item_table_value(&self) -> Result<DenseMatrix<T>> {
        let mut tape = Tape::new();
        let v = self.item_table(&mut tape)?;
        Ok(tape.value(v).clone())
    }

    /// Mean InfoNCE loss of a batch; dropout is active when `dropout` is given.
    pub fn loss(&self, tape: &mut Tape<T>, batch: &Batch, dropout: Option<&mut Rng>) -> Result<Var> {
        if batch.is_empty() || batch.negatives.len() != batch.len() || batch.histories.len() != batch.len() {
            return Err(Error::Contract("malformed batch".into()));
        }
        let items = self.item_table(tape)?;
        let repr = self.user_graph(tape, items, &batch.history_slices(), dropout)?;
        let scores = tape.candidate_scores(repr, items, Arc::new(batch.candidates()))?;
        tape.infonce(scores, T::of(self.config.temperature))
    }

    fn user_graph(&self, tape: &mut Tape<T>, items: Var, histories: &[&[usize]], dropout: Option<&mut Rng>) -> Result<Var> {
        let emb = embed_sequence(tape, items, &self.store, &self.backbone, histories)?;
        let all = encode_sequence(tape, &emb, &self.store, &self.backbone, &self.config.backbone, dropout)?;
        last_positions(tape, all, emb.batch, emb.len)
    }

    /// User representations (`histories.len() × d`) against a precomputed item table.
    pub fn user_representations(&self, item_table: &Arc<DenseMatrix<T>>, histories: &[&[usize]]) -> Result<DenseMatrix<T>> {
        let mut tape = Tape::new();
        let items = tape.constant(item_table.clone());
        let repr = self.user_graph(&mut tape, items, histories, None)?;
        Ok(tape.value(repr).clone())
    }

    /// Scorer over a cached item table, for evaluation.
    pub fn scorer(&self) -> Result<ModelScorer<'_, T>> {
        Ok(ModelScorer {
            model: self,
            table: Arc::new(self.item_table_value()?),
        })
    }

    pub fn metadata(&self) -> BTreeMap<String, String> {
        let c = &self.config;
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("transform", c.transform.to_string());
        put("fusion", c.fusion.to_string());
        put("d", c.d().to_string());
        put("blocks", c.backbone.blocks.to_string());
        put("max_len", c.backbone.max_len.to_string());
        put("num_items", self.num_items.to_string());
        put("semantic_dim", self.semantic_dim.to_string());
        if let Some(p) = self.spectran_params() {
            put("m", p.m().to_string());
            put("r", p.r().to_string());
            put("taylor_order", p.order().to_string());
            put("taylor_mode", c.taylor_mode.to_string());
        }
        if self.mlp_params().is_some() {
            put("mlp_hidden", c.mlp_hidden.unwrap_or(c.d()).to_string());
            put("mlp_activation", c.mlp_activation.to_string());
        }
        m
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint::from_store(&self.store, self.metadata())
    }

    /// Loads parameters from a checkpoint written by a model of the same configuration.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint<T>) -> Result<()> {
        for key in ["transform", "fusion", "d", "num_items", "max_len", "blocks"] {
            let ours = self.metadata().remove(key);
            let theirs = ck.meta(key).map(str::to_string);
            if ours != theirs {
                return Err(Error::Config(format!(
                    "checkpoint {key} = {} but configuration has {}",
                    theirs.as_deref().unwrap_or("<missing>"),
                    ours.as_deref().unwrap_or("<missing>")
                )));
            }
        }
        ck.apply_to(&mut self.store)
    }
}

/// Full-catalog scorer over a frozen item table.
pub struct ModelScorer<'a, T> {
    model: &'a SeqRecModel<T>,
    table: Arc<DenseMatrix<T>>,
}

impl<'a, T: Scalar> ModelScorer<'a, T> {
    pub fn item_table(&self) -> &DenseMatrix<T> {
        &self.table
    }
}

impl<T: Scalar> Scorer<T> for ModelScorer<'_, T> {
    fn num_items(&self) -> usize {
        self.table.rows()
    }

    fn score_histories(&self, histories: &[&[usize]]) -> Result<DenseMatrix<T>> {
        let repr = self.model.user_representations(&self.table, histories)?;
        repr.matmul_nt(&self.table)
    }
}
