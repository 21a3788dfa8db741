use serde::{Deserialize, Serialize};

use super::ModelError;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Fixed padded sequence length L.
    pub seq_len: usize,
    pub d_model: usize,
    pub gru_hidden: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_blocks: usize,
    pub n_classes: usize,
    /// Add sinusoidal positions to the embedded rows.
    pub positional_encoding: bool,
    /// Run the BiGRU and its projection; when off, embeddings feed the
    /// encoder blocks directly.
    pub bigru: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seq_len: 128,
            d_model: 64,
            gru_hidden: 32,
            n_heads: 4,
            d_ff: 128,
            n_blocks: 2,
            n_classes: 2,
            positional_encoding: true,
            bigru: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("seq_len", self.seq_len),
            ("d_model", self.d_model),
            ("gru_hidden", self.gru_hidden),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!("{name} must be positive")));
        }
        if self.n_classes != 2 {
            return Err(ModelError::InvalidConfig(format!(
                "n_classes must be 2, got {}",
                self.n_classes
            )));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::HeadDivisibility {
                d_model: self.d_model,
                heads: self.n_heads,
            });
        }
        if self.positional_encoding && !self.d_model.is_multiple_of(2) {
            return Err(ModelError::OddDimension(self.d_model));
        }
        Ok(())
    }
}
