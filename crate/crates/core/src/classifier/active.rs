use super::embedding::{embed, EmbeddingProvider};
use super::model::{predict, HateModel};
use super::ClassifierError;
use crate::ingest::PostRecord;

/// Scores the pool and returns the `batch_size` most likely harmful posts for
/// annotation, highest probability first, ties by post id.
pub fn select_active_batch(
    model: &HateModel,
    provider: &dyn EmbeddingProvider,
    pool: &[PostRecord],
    batch_size: usize,
) -> Result<Vec<(PostRecord, f64)>, ClassifierError> {
    if batch_size == 0 {
        return Err(ClassifierError::InvalidInput("batch_size must be at least 1".into()));
    }
    let mut scored = pool
        .iter()
        .map(|post| {
            let e = embed(&post.text, provider)?;
            Ok((post.clone(), predict(model, &e)?.probability))
        })
        .collect::<Result<Vec<_>, ClassifierError>>()?;
    scored.sort_by(|(a, pa), (b, pb)| pb.total_cmp(pa).then_with(|| a.post_id.cmp(&b.post_id)));
    scored.truncate(batch_size);
    Ok(scored)
}
