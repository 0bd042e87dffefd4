//! Three-branch attention bookkeeping and a small deterministic attention
//! block that exposes it.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::grid::{FeatureGrid, GridError, Mask};
use crate::rng::{fnv1a, stream_id, Branch, NoiseStream, Purpose};

pub const DEFAULT_EMBED_DIM: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttentionError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

type Result<T> = std::result::Result<T, AttentionError>;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTokens {
    tokens: Vec<String>,
    embeddings: DMatrix<f64>,
}

impl PromptTokens {
    /// Lowercases and splits on whitespace. Each token's embedding is a
    /// normal vector drawn from a stream keyed by a hash of the token,
    /// then scaled to unit length.
    pub fn encode(text: &str, dim: usize, seed: u64) -> Self {
        let tokens: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
        let mut embeddings = DMatrix::zeros(tokens.len(), dim);
        for (i, tok) in tokens.iter().enumerate() {
            let key = fnv1a(seed, tok.as_bytes());
            let mut stream = NoiseStream::new(key, stream_id(Purpose::Weights, 0, Branch::None));
            let v = stream.normals(dim);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (j, x) in v.iter().enumerate() {
                embeddings[(i, j)] = x / norm;
            }
        }
        Self { tokens, embeddings }
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            tokens: Vec::new(),
            embeddings: DMatrix::zeros(0, dim),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    /// One row per token.
    pub fn embeddings(&self) -> &DMatrix<f64> {
        &self.embeddings
    }

    /// Zero vector for an empty prompt.
    pub fn mean_embedding(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        (0..self.dim())
            .map(|j| self.embeddings.column(j).sum() / n)
            .collect()
    }
}

/// Target token index to source token index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AlignmentMap {
    pairs: Vec<(usize, usize)>,
}

impl AlignmentMap {
    pub fn identity(n: usize) -> Self {
        Self {
            pairs: (0..n).map(|i| (i, i)).collect(),
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn source_of(&self, j: usize) -> Option<usize> {
        self.pairs.iter().find(|(t, _)| *t == j).map(|(_, s)| *s)
    }
}

/// Each target token, left to right, takes the first unused source token
/// with the same text.
pub fn align_tokens(src: &PromptTokens, tgt: &PromptTokens) -> AlignmentMap {
    let mut used = vec![false; src.len()];
    let mut pairs = Vec::new();
    for (j, tok) in tgt.tokens.iter().enumerate() {
        if let Some(i) = (0..src.len()).find(|&i| !used[i] && &src.tokens[i] == tok) {
            used[i] = true;
            pairs.push((j, i));
        }
    }
    AlignmentMap { pairs }
}

/// Token-major attention: one row per token, one column per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub rows: DMatrix<f64>,
}

impl AttentionMap {
    pub fn tokens(&self) -> usize {
        self.rows.nrows()
    }

    pub fn cells(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.row_iter().map(|r| r.sum()).collect()
    }

    /// Rows as grid rows: `h = tokens`, `w = cells`, one channel.
    pub fn to_grid(&self) -> Result<FeatureGrid> {
        let (n, m) = self.rows.shape();
        let data = self.rows.transpose().as_slice().to_vec();
        Ok(FeatureGrid::new(n, m, 1, data)?)
    }
}

/// Rows of `m_src` replace the aligned rows of `m_ref` once `t >= t_c`.
pub fn replace_attention(
    m_src: &AttentionMap,
    m_ref: &AttentionMap,
    align: &AlignmentMap,
    t: usize,
    t_c: usize,
) -> Result<AttentionMap> {
    if m_src.cells() != m_ref.cells() {
        return Err(AttentionError::DimensionMismatch(format!(
            "source map has {} cells, reference map {}",
            m_src.cells(),
            m_ref.cells()
        )));
    }
    if let Some(&(j, i)) = align
        .pairs
        .iter()
        .find(|(j, i)| *j >= m_ref.tokens() || *i >= m_src.tokens())
    {
        return Err(AttentionError::DimensionMismatch(format!(
            "alignment {j}->{i} outside {}x{} maps",
            m_ref.tokens(),
            m_src.tokens()
        )));
    }
    let mut out = m_ref.clone();
    if t >= t_c {
        for &(j, i) in &align.pairs {
            out.rows.set_row(j, &m_src.rows.row(i));
        }
    }
    Ok(out)
}

/// Per-branch query, key and value matrices, one row per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchState {
    pub latent: FeatureGrid,
    pub q: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl BranchState {
    pub fn new(latent: FeatureGrid, q: DMatrix<f64>, k: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        let cells = latent.cells();
        if q.nrows() != cells || k.nrows() != cells || v.nrows() != cells || q.ncols() != k.ncols() {
            return Err(AttentionError::DimensionMismatch(format!(
                "q {:?}, k {:?}, v {:?} for {cells} cells",
                q.shape(),
                k.shape(),
                v.shape()
            )));
        }
        Ok(Self { latent, q, k, v })
    }

    pub fn triple(&self) -> Triple<'_> {
        Triple {
            q: &self.q,
            k: &self.k,
            v: &self.v,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Triple<'a> {
    pub q: &'a DMatrix<f64>,
    pub k: &'a DMatrix<f64>,
    pub v: &'a DMatrix<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Routed<'a> {
    pub source: Triple<'a>,
    pub reference: Triple<'a>,
    pub target: Triple<'a>,
}

/// The returned triples borrow the branch matrices, so callers can check
/// which branch a matrix came from with `std::ptr::eq`.
pub fn route_qkv<'a>(
    src: &'a BranchState,
    reference: &'a BranchState,
    tgt: &'a BranchState,
    t: usize,
    t_s: usize,
) -> Result<Routed<'a>> {
    let shapes = |b: &BranchState| (b.q.shape(), b.k.shape(), b.v.shape());
    if shapes(src) != shapes(reference) || shapes(src) != shapes(tgt) {
        return Err(AttentionError::DimensionMismatch(format!(
            "branch shapes {:?} / {:?} / {:?}",
            shapes(src),
            shapes(reference),
            shapes(tgt)
        )));
    }
    let reference_triple = if t >= t_s {
        Triple {
            q: &src.q,
            k: &src.k,
            v: &reference.v,
        }
    } else {
        reference.triple()
    };
    Ok(Routed {
        source: src.triple(),
        reference: reference_triple,
        target: Triple {
            q: &tgt.q,
            k: &reference.k,
            v: &reference.v,
        },
    })
}

/// `z_tgt` inside the mask and `z_ref` outside it while
/// `iteration <= fuse_steps` (iterations count from 1); `z_tgt` afterwards.
pub fn masked_fuse(
    z_tgt: &FeatureGrid,
    z_ref: &FeatureGrid,
    mask: &Mask,
    iteration: usize,
    fuse_steps: usize,
) -> Result<FeatureGrid> {
    if !z_tgt.same_dims(z_ref) || mask.shape() != z_tgt.shape() {
        return Err(AttentionError::ShapeMismatch(format!(
            "target {:?}x{}, reference {:?}x{}, mask {:?}",
            z_tgt.shape(),
            z_tgt.channels(),
            z_ref.shape(),
            z_ref.channels(),
            mask.shape()
        )));
    }
    if iteration > fuse_steps {
        return Ok(z_tgt.clone());
    }
    let mut data = Vec::with_capacity(z_tgt.data().len());
    for (i, &inside) in mask.bits().iter().enumerate() {
        let from = if inside { z_tgt } else { z_ref };
        data.extend_from_slice(from.cell_at(i));
    }
    Ok(z_tgt.with_data(data)?)
}

fn softmax_rows(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in m.row_iter_mut() {
        let max = row.max();
        row.apply(|x| *x = (*x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    m
}

fn to_matrix(grid: &FeatureGrid) -> DMatrix<f64> {
    DMatrix::from_row_slice(grid.cells(), grid.channels(), grid.data())
}

fn to_grid(template: &FeatureGrid, m: &DMatrix<f64>) -> Result<FeatureGrid> {
    Ok(template.with_data(m.transpose().as_slice().to_vec())?)
}

/// Single-head attention block: self-attention over cells followed by
/// cross-attention from prompt tokens to cells. Weights are fixed normal
/// draws scaled by `1/sqrt(fan_in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyAttention {
    channels: usize,
    embed_dim: usize,
    w_q: DMatrix<f64>,
    w_k: DMatrix<f64>,
    w_v: DMatrix<f64>,
    w_qt: DMatrix<f64>,
    w_kt: DMatrix<f64>,
    w_tv: DMatrix<f64>,
}

impl ToyAttention {
    pub fn new(channels: usize, embed_dim: usize, seed: u64) -> Self {
        let mut stream = NoiseStream::for_purpose(seed, Purpose::Weights, 1, Branch::None);
        let mut draw = |r: usize, c: usize| {
            let scale = 1.0 / (r as f64).sqrt();
            DMatrix::from_row_slice(r, c, &stream.normals(r * c)).scale(scale)
        };
        Self {
            channels,
            embed_dim,
            w_q: draw(channels, embed_dim),
            w_k: draw(channels, embed_dim),
            w_v: draw(channels, channels),
            w_qt: draw(embed_dim, embed_dim),
            w_kt: draw(channels, embed_dim),
            w_tv: draw(embed_dim, channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn check_latent(&self, latent: &FeatureGrid) -> Result<()> {
        if latent.channels() != self.channels {
            return Err(AttentionError::DimensionMismatch(format!(
                "latent has {} channels, layer expects {}",
                latent.channels(),
                self.channels
            )));
        }
        Ok(())
    }

    fn check_prompt(&self, prompt: &PromptTokens) -> Result<()> {
        if prompt.dim() != self.embed_dim {
            return Err(AttentionError::DimensionMismatch(format!(
                "embeddings have dimension {}, layer expects {}",
                prompt.dim(),
                self.embed_dim
            )));
        }
        Ok(())
    }

    pub fn branch_state(&self, latent: &FeatureGrid) -> Result<BranchState> {
        self.check_latent(latent)?;
        let x = to_matrix(latent);
        BranchState::new(latent.clone(), &x * &self.w_q, &x * &self.w_k, &x * &self.w_v)
    }

    /// `latent + softmax(Q K^T / sqrt(e)) V`.
    pub fn self_attend(&self, latent: &FeatureGrid, qkv: Triple<'_>) -> Result<FeatureGrid> {
        self.check_latent(latent)?;
        let cells = latent.cells();
        if qkv.q.shape() != (cells, self.embed_dim)
            || qkv.k.shape() != (cells, self.embed_dim)
            || qkv.v.shape() != (cells, self.channels)
        {
            return Err(AttentionError::DimensionMismatch(format!(
                "q {:?}, k {:?}, v {:?} for {cells} cells",
                qkv.q.shape(),
                qkv.k.shape(),
                qkv.v.shape()
            )));
        }
        let scores = (qkv.q * qkv.k.transpose()) / (self.embed_dim as f64).sqrt();
        let out = to_matrix(latent) + softmax_rows(scores) * qkv.v;
        to_grid(latent, &out)
    }

    /// Softmax over cells for each token.
    pub fn cross_map(&self, features: &FeatureGrid, prompt: &PromptTokens) -> Result<AttentionMap> {
        self.check_latent(features)?;
        self.check_prompt(prompt)?;
        let queries = prompt.embeddings() * &self.w_qt;
        let keys = to_matrix(features) * &self.w_kt;
        let scores = (queries * keys.transpose()) / (self.embed_dim as f64).sqrt();
        Ok(AttentionMap {
            rows: softmax_rows(scores),
        })
    }

    /// `features + M^T (E W_v)`.
    pub fn cross_apply(
        &self,
        features: &FeatureGrid,
        map: &AttentionMap,
        prompt: &PromptTokens,
    ) -> Result<FeatureGrid> {
        self.check_latent(features)?;
        self.check_prompt(prompt)?;
        if map.tokens() != prompt.len() || map.cells() != features.cells() {
            return Err(AttentionError::DimensionMismatch(format!(
                "map {}x{} for {} tokens and {} cells",
                map.tokens(),
                map.cells(),
                prompt.len(),
                features.cells()
            )));
        }
        let values = prompt.embeddings() * &self.w_tv;
        let out = to_matrix(features) + map.rows.transpose() * values;
        to_grid(features, &out)
    }

    /// A branch attending with its own triple.
    pub fn forward(&self, branch: &BranchState, prompt: &PromptTokens) -> Result<(AttentionMap, FeatureGrid)> {
        let h = self.self_attend(&branch.latent, branch.triple())?;
        let map = self.cross_map(&h, prompt)?;
        let out = self.cross_apply(&h, &map, prompt)?;
        Ok((map, out))
    }
}
