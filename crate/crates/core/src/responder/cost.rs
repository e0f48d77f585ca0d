use serde::{Deserialize, Serialize};

use super::ResponderError;

/// `tokens × price / 1e6`, in USD.
pub fn estimate_cost(tokens_per_request: u64, price_per_million: f64) -> Result<f64, ResponderError> {
    if tokens_per_request == 0 {
        return Err(ResponderError::InvalidInput("token count must be positive".into()));
    }
    if !price_per_million.is_finite() || price_per_million <= 0.0 {
        return Err(ResponderError::InvalidInput("price must be positive".into()));
    }
    Ok(tokens_per_request as f64 * price_per_million / 1_000_000.0)
}

/// Token pricing used to stamp generated replies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub price_per_million: f64,
    /// Used when the client does not report usage.
    pub default_tokens_per_request: u64,
}

impl Default for Pricing {
    fn default() -> Self {
        Self {
            price_per_million: 30.0,
            default_tokens_per_request: 1600,
        }
    }
}
