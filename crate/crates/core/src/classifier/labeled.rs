use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embedding::{embed, EmbeddingProvider};
use super::model::{Label, LabeledExample};
use super::ClassifierError;
use crate::types::PostId;

/// One line of a labelled training file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub post_id: PostId,
    pub text: String,
    pub label: Label,
}

pub fn load_labeled_texts(path: &Path) -> Result<Vec<LabeledText>, ClassifierError> {
    let file = std::fs::File::open(path)
        .map_err(|e| ClassifierError::InvalidInput(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ClassifierError::InvalidInput(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| ClassifierError::InvalidInput(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

pub fn embed_labeled(
    texts: &[LabeledText],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<LabeledExample>, ClassifierError> {
    texts
        .iter()
        .map(|t| {
            Ok(LabeledExample {
                post_id: t.post_id.clone(),
                embedding: embed(&t.text, provider)?,
                label: t.label,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::HashedBagOfWords;
    use std::io::Write;

    #[test]
    fn reads_jsonl_and_embeds() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"post_id":"a","text":"precz stąd","label":"harmful"}}"#).unwrap();
        writeln!(f).unwrap();
        writeln!(f, r#"{{"post_id":"b","text":"pomagamy razem","label":"not_harmful"}}"#).unwrap();
        let texts = load_labeled_texts(f.path()).unwrap();
        assert_eq!(texts.len(), 2);
        let ex = embed_labeled(&texts, &HashedBagOfWords::default()).unwrap();
        assert_eq!(ex[1].label, Label::NotHarmful);
        writeln!(f, "nope").unwrap();
        let err = load_labeled_texts(f.path()).unwrap_err();
        assert!(err.to_string().contains("line 4"));
    }
}
