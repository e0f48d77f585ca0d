use super::article::Article;
use super::ResponderError;
use crate::classifier::{cosine, EmbeddingVector};

pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedArticle<'a> {
    pub article: &'a Article,
    pub similarity: f64,
}

/// Top `k` articles by cosine similarity to `target`, descending, ties by
/// title. Articles with negative similarity are never returned.
pub fn rank_articles<'a>(
    target: &EmbeddingVector,
    store: &'a [Article],
    k: usize,
) -> Result<Vec<RankedArticle<'a>>, ResponderError> {
    if k == 0 {
        return Err(ResponderError::InvalidInput("k must be at least 1".into()));
    }
    if target.norm() == 0.0 {
        return Err(ResponderError::InvalidEmbedding("target has zero norm".into()));
    }
    let mut ranked = Vec::with_capacity(store.len());
    for article in store {
        let emb = article.embedding.as_ref().ok_or_else(|| {
            ResponderError::InvalidEmbedding(format!("article `{}` has no embedding", article.title))
        })?;
        if emb.dim() != target.dim() {
            return Err(ResponderError::InvalidEmbedding(format!(
                "article `{}` has {} dimensions, target has {}",
                article.title,
                emb.dim(),
                target.dim()
            )));
        }
        let similarity = cosine(target, emb)
            .map_err(|e| ResponderError::InvalidEmbedding(format!("article `{}`: {e}", article.title)))?;
        ranked.push(RankedArticle { article, similarity });
    }
    ranked.retain(|r| r.similarity >= 0.0);
    ranked.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.article.title.cmp(&b.article.title))
    });
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::responder::ArticleCategory;

    fn art(title: &str, v: Vec<f64>) -> Article {
        Article {
            title: title.into(),
            last_update: chrono::NaiveDate::from_ymd_opt(2023, 1, 1).unwrap(),
            category: ArticleCategory::Others,
            url: format!("https://example.org/{title}"),
            text: title.into(),
            summary: String::new(),
            embedding: Some(EmbeddingVector::new(v).unwrap()),
        }
    }

    #[test]
    fn self_query_ranks_first_with_unit_similarity() {
        let store = vec![art("a", vec![1.0, 0.0]), art("b", vec![0.6, 0.8])];
        let target = EmbeddingVector::new(vec![0.6, 0.8]).unwrap();
        let r = rank_articles(&target, &store, 3).unwrap();
        assert_eq!(r[0].article.title, "b");
        assert!((r[0].similarity - 1.0).abs() < 1e-12);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn orthogonal_article_scores_zero() {
        let store = vec![art("a", vec![1.0, 0.0])];
        let target = EmbeddingVector::new(vec![0.0, 2.0]).unwrap();
        let r = rank_articles(&target, &store, 1).unwrap();
        assert_eq!(r[0].similarity, 0.0);
    }

    #[test]
    fn negative_similarity_is_dropped() {
        let store = vec![art("a", vec![-1.0, 0.0]), art("b", vec![1.0, 0.0])];
        let target = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let r = rank_articles(&target, &store, 3).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].article.title, "b");
    }

    #[test]
    fn ties_break_by_title() {
        let store = vec![art("zeta", vec![1.0, 0.0]), art("alpha", vec![1.0, 0.0])];
        let target = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let r = rank_articles(&target, &store, 2).unwrap();
        assert_eq!(r[0].article.title, "alpha");
    }

    #[test]
    fn errors() {
        let store = vec![art("a", vec![1.0, 0.0])];
        let zero = EmbeddingVector::zeros(2);
        assert!(matches!(rank_articles(&zero, &store, 3), Err(ResponderError::InvalidEmbedding(_))));
        let t = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        assert!(rank_articles(&t, &store, 0).is_err());
        let mut missing = store.clone();
        missing[0].embedding = None;
        assert!(rank_articles(&t, &missing, 1).is_err());
        let t3 = EmbeddingVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(rank_articles(&t3, &store, 1).is_err());
    }
}
