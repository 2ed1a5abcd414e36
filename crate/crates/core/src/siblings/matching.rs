//! Token, embedding and Jaccard matching of statement contexts.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use super::embedding::{cosine, embed, EmbedError, EmbeddingCache, EmbeddingProvider};
use super::tokenize::tokenize;
use super::{CandidateSibling, StatementContext};
use crate::tfidf::TfIdf;

fn same_statement(a: &StatementContext, b: &StatementContext) -> bool {
    a.target.file == b.target.file && a.target.ordinal == b.target.ordinal
}

fn by_score_then_position(
    a_score: f64,
    a: &StatementContext,
    b_score: f64,
    b: &StatementContext,
) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a.key().cmp(&b.key()))
}

/// Top `limit` pool contexts by TF-IDF cosine against `target`.
///
/// The corpus is the pool plus the target; the target's own context is never
/// returned.
pub fn token_match(
    target: &StatementContext,
    pool: &[StatementContext],
    limit: usize,
) -> Vec<CandidateSibling> {
    let others: Vec<&StatementContext> = pool.iter().filter(|c| !same_statement(c, target)).collect();
    if others.is_empty() || limit == 0 {
        return Vec::new();
    }
    let mut docs = vec![tokenize(&target.rendered)];
    docs.extend(others.iter().map(|c| tokenize(&c.rendered)));
    let model = TfIdf::fit(&docs);
    let mut scored: Vec<(f64, &StatementContext)> = others
        .iter()
        .enumerate()
        .map(|(k, c)| (model.cosine(0, k + 1), *c))
        .collect();
    scored.sort_by(|(sa, a), (sb, b)| by_score_then_position(*sa, a, *sb, b));
    scored.truncate(limit);
    scored
        .into_iter()
        .map(|(s, c)| CandidateSibling {
            context: c.clone(),
            token_similarity: s,
            embedding_similarity: None,
            jaccard_similarity: None,
        })
        .collect()
}

/// Keeps candidates whose embedding cosine with `target` is at least `theta`,
/// sorted by that cosine descending.
pub fn embedding_match(
    target: &StatementContext,
    candidates: Vec<CandidateSibling>,
    theta: f64,
    provider: &dyn EmbeddingProvider,
    cache: &dyn EmbeddingCache,
) -> Result<Vec<CandidateSibling>, EmbedError> {
    if candidates.is_empty() {
        return Ok(candidates);
    }
    let mut texts = vec![target.rendered.clone()];
    texts.extend(candidates.iter().map(|c| c.context.rendered.clone()));
    let vectors = embed(&texts, provider, cache)?;
    let mut kept: Vec<CandidateSibling> = candidates
        .into_iter()
        .zip(&vectors[1..])
        .filter_map(|(mut c, v)| {
            let sim = cosine(&vectors[0], v);
            c.embedding_similarity = Some(sim);
            (sim >= theta).then_some(c)
        })
        .collect();
    kept.sort_by(|a, b| {
        by_score_then_position(
            a.embedding_similarity.unwrap_or(f64::NEG_INFINITY),
            &a.context,
            b.embedding_similarity.unwrap_or(f64::NEG_INFINITY),
            &b.context,
        )
    });
    Ok(kept)
}

/// Jaccard index of two sets; two empty sets are identical (1.0).
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// Keeps candidates whose token-set Jaccard with `target` is at least
/// `alpha`, recording the similarity and preserving order.
pub fn jaccard_filter(
    candidates: &[CandidateSibling],
    target: &StatementContext,
    alpha: f64,
) -> Vec<CandidateSibling> {
    let reference = token_set(&target.rendered);
    candidates
        .iter()
        .filter_map(|c| {
            let sim = jaccard(&reference, &token_set(&c.context.rendered));
            let mut c = c.clone();
            c.jaccard_similarity = Some(sim);
            (sim >= alpha).then_some(c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::super::{extract_context, LocalHashEmbedder, MemoryCache};
    use super::*;
    use crate::subject::SourceIndex;

    fn contexts(lines: &[&str]) -> Vec<StatementContext> {
        let body: String = lines.iter().map(|l| format!("  {l}\n")).collect();
        let src = format!("class T {{\nvoid m() {{\n{body}}}\n}}\n");
        let idx = SourceIndex::from_sources(Path::new("/x"), vec![("T.java".into(), src)]);
        idx.file("T.java")
            .unwrap()
            .statements
            .iter()
            .map(|s| {
                // single-line contexts keep the measures easy to reason about
                StatementContext::new(s.clone(), vec![s.clone()])
            })
            .collect()
    }

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn jaccard_values() {
        assert_eq!(jaccard(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])), 0.5);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"])), 0.0);
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["b", "a"])), 1.0);
        assert_eq!(jaccard::<String>(&set(&[]), &set(&[])), 1.0);
    }

    #[test]
    fn verbatim_copy_ranks_first() {
        let ctx = contexts(&["x = foo(bar);", "y = baz();", "x = foo(bar);", "q = foo(zz);"]);
        let got = token_match(&ctx[0], &ctx, 100);
        assert_eq!(got.len(), 3, "target excluded");
        assert_eq!(got[0].context.target.span.start, 5);
        assert_eq!(got[0].token_similarity, 1.0);
    }

    #[test]
    fn empty_pool_and_limit() {
        let ctx = contexts(&["a = b;", "c = d;", "e = f;"]);
        assert!(token_match(&ctx[0], &[], 10).is_empty());
        assert_eq!(token_match(&ctx[0], &ctx, 1).len(), 1);
        // zero similarity ties are broken by position
        let lines: Vec<u32> = token_match(&ctx[0], &ctx, 10)
            .iter()
            .map(|c| c.context.target.span.start)
            .collect();
        assert_eq!(lines, vec![4, 5]);
    }

    #[test]
    fn embedding_thresholds() {
        let ctx = contexts(&["x = foo(bar);", "x = foo(bar);", "y = other(thing);"]);
        let cands = token_match(&ctx[0], &ctx, 10);
        let p = LocalHashEmbedder::default();
        let cache = MemoryCache::default();
        let all = embedding_match(&ctx[0], cands.clone(), -1.0, &p, &cache).unwrap();
        assert_eq!(all.len(), 2);
        let exact = embedding_match(&ctx[0], cands, 1.0, &p, &cache).unwrap();
        assert_eq!(exact.len(), 1);
        assert_eq!(exact[0].context.target.span.start, 4);
        assert_eq!(exact[0].embedding_similarity, Some(1.0));
    }

    #[test]
    fn jaccard_filter_identity_at_zero() {
        let ctx = contexts(&["a = b + c;", "b = c + d;", "z = w;"]);
        let cands = token_match(&ctx[0], &ctx, 10);
        let kept = jaccard_filter(&cands, &ctx[0], 0.0);
        assert_eq!(kept.len(), cands.len());
        let half = jaccard_filter(&cands, &ctx[0], 0.5);
        assert_eq!(half.len(), 1);
        assert_eq!(half[0].jaccard_similarity, Some(0.5));
    }

    #[test]
    fn contexts_from_index_are_usable() {
        let idx = SourceIndex::from_sources(
            Path::new("/x"),
            vec![("A.java".into(), "class A {\n  void f() {\n    int a = 1;\n    g(a);\n  }\n}\n".into())],
        );
        let s = idx.statement_at("A.java", 4).unwrap();
        let ctx = extract_context(&idx, s);
        assert_eq!(ctx.rendered, "int a = 1;\ng(a);");
    }
}
