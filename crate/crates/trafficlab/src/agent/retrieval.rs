//! Offline-literature retrieval: a small BM25 index over a directory of
//! plain-text documents, used to ground idea prompts.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// BM25 term-frequency saturation constant.
pub const BM25_K1: f64 = 1.2;
/// BM25 length-normalization constant.
pub const BM25_B: f64 = 0.75;

/// One retrieved document with its relevance score.
#[derive(Debug, Clone, PartialEq)]
pub struct Passage {
    pub name: String,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone)]
struct Doc {
    name: String,
    text: String,
    token_count: usize,
    term_freq: HashMap<String, usize>,
}

/// Lowercased alphanumeric tokens.
fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// An immutable BM25 index; one document per corpus file.
#[derive(Debug, Clone, Default)]
pub struct CorpusIndex {
    docs: Vec<Doc>,
    doc_freq: HashMap<String, usize>,
    avg_len: f64,
}

impl CorpusIndex {
    /// Index `(name, text)` documents in the given order.
    pub fn build(documents: Vec<(String, String)>) -> CorpusIndex {
        let mut docs = Vec::with_capacity(documents.len());
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for (name, text) in documents {
            let tokens = tokenize(&text);
            let mut term_freq: HashMap<String, usize> = HashMap::new();
            for token in &tokens {
                *term_freq.entry(token.clone()).or_default() += 1;
            }
            for term in term_freq.keys() {
                *doc_freq.entry(term.clone()).or_default() += 1;
            }
            docs.push(Doc { name, text, token_count: tokens.len(), term_freq });
        }
        let avg_len = if docs.is_empty() {
            0.0
        } else {
            docs.iter().map(|d| d.token_count).sum::<usize>() as f64 / docs.len() as f64
        };
        CorpusIndex { docs, doc_freq, avg_len }
    }

    /// Index every regular file in `dir` as one document, ordered by file
    /// name. A missing directory is an error; an empty one yields an empty
    /// index.
    pub fn from_dir(dir: &Path) -> Result<CorpusIndex> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut files: Vec<std::path::PathBuf> = entries
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let mut documents = Vec::with_capacity(files.len());
        for path in files {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            documents.push((name, text));
        }
        Ok(CorpusIndex::build(documents))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Inverse document frequency with the non-negative formulation:
    /// `ln(1 + (N − df + 0.5) / (df + 0.5))`.
    fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn score(&self, doc: &Doc, query_terms: &[String]) -> f64 {
        let mut score = 0.0;
        for term in query_terms {
            let tf = doc.term_freq.get(term).copied().unwrap_or(0) as f64;
            if tf == 0.0 {
                continue;
            }
            let norm = 1.0 - BM25_B + BM25_B * doc.token_count as f64 / self.avg_len;
            score += self.idf(term) * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm);
        }
        score
    }

    /// Top-`k` documents by BM25 score, ties broken by document order.
    pub fn retrieve(&self, query: &str, k: usize) -> Vec<Passage> {
        if self.docs.is_empty() || k == 0 {
            return Vec::new();
        }
        // Deduplicate query terms, preserving first occurrence.
        let mut query_terms = tokenize(query);
        let mut seen = std::collections::HashSet::new();
        query_terms.retain(|t| seen.insert(t.clone()));

        let mut ranked: Vec<(usize, f64)> = self
            .docs
            .iter()
            .enumerate()
            .map(|(i, doc)| (i, self.score(doc, &query_terms)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
            .into_iter()
            .take(k)
            .map(|(i, score)| Passage {
                name: self.docs[i].name.clone(),
                score,
                text: self.docs[i].text.clone(),
            })
            .collect()
    }
}

/// Render retrieved passages for prompt injection; explicit marker when
/// nothing was retrieved.
pub fn format_passages(passages: &[Passage]) -> String {
    if passages.is_empty() {
        return "No passages retrieved.".to_string();
    }
    let mut out = String::new();
    for (i, p) in passages.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&format!("Passage {} ({}):\n{}", i + 1, p.name, p.text.trim_end()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(docs: &[(&str, &str)]) -> CorpusIndex {
        CorpusIndex::build(
            docs.iter().map(|(n, t)| (n.to_string(), t.to_string())).collect(),
        )
    }

    #[test]
    fn unique_term_ranks_its_document_first() {
        let index = corpus(&[
            ("a.txt", "traffic flow density relation"),
            ("b.txt", "lane change politeness incentive"),
            ("c.txt", "car following spacing model"),
        ]);
        let hits = index.retrieve("politeness", 3);
        assert_eq!(hits[0].name, "b.txt");
        assert!(hits[0].score > 0.0);
        // The other two score zero on this query and keep document order.
        assert_eq!(hits[1].name, "a.txt");
        assert_eq!(hits[2].name, "c.txt");
    }

    #[test]
    fn empty_corpus_gives_empty_results() {
        let index = CorpusIndex::default();
        assert!(index.retrieve("anything", 5).is_empty());
        assert!(index.is_empty());
    }

    #[test]
    fn k_larger_than_corpus_returns_all() {
        let index = corpus(&[("a", "x"), ("b", "y")]);
        assert_eq!(index.retrieve("x y", 10).len(), 2);
    }

    #[test]
    fn scores_are_non_negative_and_repeat_terms_do_not_double_count() {
        let index = corpus(&[
            ("a", "alpha beta gamma"),
            ("b", "alpha alpha alpha beta"),
            ("c", "delta"),
        ]);
        for p in index.retrieve("alpha beta gamma delta", 3) {
            assert!(p.score >= 0.0);
        }
        let once = index.retrieve("alpha", 3);
        let thrice = index.retrieve("alpha alpha alpha", 3);
        assert_eq!(once, thrice);
    }

    #[test]
    fn appending_unrelated_document_preserves_existing_order() {
        let base = vec![
            ("a".to_string(), "traffic density speed flow".to_string()),
            ("b".to_string(), "density density speed".to_string()),
            ("c".to_string(), "flow of time".to_string()),
        ];
        let before = corpus(&[
            ("a", "traffic density speed flow"),
            ("b", "density density speed"),
            ("c", "flow of time"),
        ])
        .retrieve("density", 3);

        let mut extended = base;
        extended.push(("z".to_string(), "unrelated lexicon entirely".to_string()));
        let after = CorpusIndex::build(extended).retrieve("density", 4);

        let order_before: Vec<&str> =
            before.iter().filter(|p| p.score > 0.0).map(|p| p.name.as_str()).collect();
        let order_after: Vec<&str> =
            after.iter().filter(|p| p.score > 0.0).map(|p| p.name.as_str()).collect();
        assert_eq!(order_before, order_after);
    }

    #[test]
    fn from_dir_orders_by_file_name() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("02-second.txt"), "beta").unwrap();
        std::fs::write(dir.path().join("01-first.txt"), "alpha").unwrap();
        let index = CorpusIndex::from_dir(dir.path()).unwrap();
        assert_eq!(index.len(), 2);
        let hits = index.retrieve("alpha beta", 2);
        let names: Vec<&str> = hits.iter().map(|p| p.name.as_str()).collect();
        assert!(names.contains(&"01-first.txt") && names.contains(&"02-second.txt"));
        assert!(CorpusIndex::from_dir(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn format_passages_marks_empty_retrieval() {
        assert_eq!(format_passages(&[]), "No passages retrieved.");
        let text = format_passages(&[Passage {
            name: "a.txt".into(),
            score: 1.5,
            text: "Greenshields proposed a linear relation.\n".into(),
        }]);
        assert_eq!(text, "Passage 1 (a.txt):\nGreenshields proposed a linear relation.");
    }
}
