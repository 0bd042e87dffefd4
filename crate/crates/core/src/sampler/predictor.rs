use nalgebra::{DMatrix, RowDVector};

use crate::attention::PromptTokens;
use crate::grid::FeatureGrid;
use crate::rng::{Branch, NoiseStream, Purpose};

use super::SamplerError;

/// `eps(z, t, l)`; `prompt = None` is the unconditional prediction.
pub trait NoisePredictor: Send + Sync {
    fn predict(
        &self,
        features: &FeatureGrid,
        t: usize,
        prompt: Option<&PromptTokens>,
    ) -> Result<FeatureGrid, SamplerError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl NoisePredictor for ZeroPredictor {
    fn predict(
        &self,
        features: &FeatureGrid,
        _t: usize,
        _prompt: Option<&PromptTokens>,
    ) -> Result<FeatureGrid, SamplerError> {
        Ok(FeatureGrid::zeros(
            features.height(),
            features.width(),
            features.channels(),
        )?)
    }
}

/// `eps = z A + mean(l) B` per cell, with seeded `A` (d x d) and `B` (e x d).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearToyPredictor {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearToyPredictor {
    pub fn new(channels: usize, embed_dim: usize, seed: u64) -> Self {
        let mut s = NoiseStream::for_purpose(seed, Purpose::Weights, 2, Branch::None);
        let a = DMatrix::from_row_slice(channels, channels, &s.normals(channels * channels))
            .scale(0.5 / (channels as f64).sqrt());
        let b = DMatrix::from_row_slice(embed_dim, channels, &s.normals(embed_dim * channels))
            .scale(0.5 / (embed_dim as f64).sqrt());
        Self { a, b }
    }
}

impl NoisePredictor for LinearToyPredictor {
    fn predict(
        &self,
        features: &FeatureGrid,
        _t: usize,
        prompt: Option<&PromptTokens>,
    ) -> Result<FeatureGrid, SamplerError> {
        let d = features.channels();
        if self.a.nrows() != d {
            return Err(SamplerError::ShapeMismatch(format!(
                "predictor expects {} channels, got {d}",
                self.a.nrows()
            )));
        }
        let z = DMatrix::from_row_slice(features.cells(), d, features.data());
        let mut out = z * &self.a;
        if let Some(p) = prompt {
            if p.dim() != self.b.nrows() {
                return Err(SamplerError::ShapeMismatch(format!(
                    "predictor expects embeddings of {}, got {}",
                    self.b.nrows(),
                    p.dim()
                )));
            }
            let bias = RowDVector::from_vec(p.mean_embedding()) * &self.b;
            for mut row in out.row_iter_mut() {
                row += &bias;
            }
        }
        Ok(features.with_data(out.transpose().as_slice().to_vec())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::DEFAULT_EMBED_DIM;

    #[test]
    fn linear_predictor_matches_hand_product() {
        let p = LinearToyPredictor::new(2, DEFAULT_EMBED_DIM, 4);
        let z = FeatureGrid::new(1, 2, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let prompt = PromptTokens::encode("a b", DEFAULT_EMBED_DIM, 0);
        let out = p.predict(&z, 3, Some(&prompt)).unwrap();
        let mean = prompt.mean_embedding();
        for cell in 0..2 {
            for j in 0..2 {
                let mut want = 0.0;
                for i in 0..2 {
                    want += z.cell_at(cell)[i] * p.a[(i, j)];
                }
                for (k, m) in mean.iter().enumerate() {
                    want += m * p.b[(k, j)];
                }
                assert!((out.cell_at(cell)[j] - want).abs() < 1e-12);
            }
        }
        let unconditional = p.predict(&z, 3, None).unwrap();
        assert_ne!(unconditional, out);
    }

    #[test]
    fn zero_predictor() {
        let z = FeatureGrid::new(1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ZeroPredictor.predict(&z, 1, None).unwrap().data(), &[0.0; 3]);
    }
}
