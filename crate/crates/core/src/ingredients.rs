//! Fix-ingredient harvesting.
//!
//! For every marked sibling line, the fields and methods it references are
//! resolved to declaring classes by name, every member of those classes is
//! collected, and the collection is ranked by TF-IDF similarity to the line.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use tracing::debug;

use crate::siblings::{tokenize, MethodGroup};
use crate::subject::{
    declared_type, identifiers_in, ClassDecl, IdentifierKind, MemberDecl, MemberKind, SourceIndex,
    Statement,
};
use crate::tfidf::TfIdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IngredientKind {
    MethodDeclaration,
    FieldDeclaration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixIngredient {
    pub kind: IngredientKind,
    pub signature: String,
    pub class: String,
    pub file: String,
    pub line: u32,
    pub score: f64,
    /// Referenced directly by a sibling line rather than found by ranking.
    pub direct: bool,
}

fn ingredient(class: &ClassDecl, member: &MemberDecl, score: f64, direct: bool) -> FixIngredient {
    FixIngredient {
        kind: match member.kind {
            MemberKind::Method => IngredientKind::MethodDeclaration,
            MemberKind::Field => IngredientKind::FieldDeclaration,
        },
        signature: member.signature.clone(),
        class: class.name.clone(),
        file: class.file.clone(),
        line: member.line,
        score,
        direct,
    }
}

/// Harvests ingredients for every sibling line of every group; at most `n`
/// ranked declarations per line on top of the directly referenced ones.
pub fn extract_fix_ingredients(
    groups: &[MethodGroup],
    index: &SourceIndex,
    n: usize,
) -> Vec<FixIngredient> {
    let mut direct: Vec<FixIngredient> = Vec::new();
    let mut ranked: Vec<FixIngredient> = Vec::new();
    for group in groups {
        for &line in &group.sibling_lines {
            let Some(stmt) = index.statement_starting_at(group.file(), line) else {
                continue;
            };
            let (d, r) = ingredients_for_line(stmt, index, n);
            direct.extend(d);
            ranked.extend(r);
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for ing in direct.into_iter().chain(ranked) {
        if seen.insert((ing.file.clone(), ing.line, ing.signature.clone())) {
            out.push(ing);
        }
    }
    out
}

/// Direct and top-`n` ranked ingredients of one sibling line.
fn ingredients_for_line(
    stmt: &Statement,
    index: &SourceIndex,
    n: usize,
) -> (Vec<FixIngredient>, Vec<FixIngredient>) {
    let mut classes: Vec<&ClassDecl> = Vec::new();
    let mut referenced: Vec<(String, Vec<&ClassDecl>)> = Vec::new();
    for id in identifiers_in(stmt) {
        if id.kind == IdentifierKind::Variable {
            continue;
        }
        let resolved = resolve_declarers(stmt, index, &id.name, id.receiver.as_deref());
        if resolved.is_empty() {
            debug!("no declaring class found for {} at {}", id.name, stmt.location());
        }
        for c in &resolved {
            if !classes.iter().any(|k| std::ptr::eq(*k, *c)) {
                classes.push(c);
            }
        }
        referenced.push((id.name, resolved));
    }
    let mut members: Vec<(&ClassDecl, &MemberDecl)> = classes
        .iter()
        .flat_map(|c| c.members.iter().map(move |m| (*c, m)))
        .collect();
    members.sort_by(|a, b| (&a.0.file, a.1.line).cmp(&(&b.0.file, b.1.line)));
    if members.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let mut docs = vec![tokenize(&stmt.text)];
    docs.extend(members.iter().map(|(_, m)| tokenize(&m.signature)));
    let model = TfIdf::fit(&docs);
    let score = |k: usize| model.cosine(0, k + 1);

    let mut direct = Vec::new();
    let mut is_direct = vec![false; members.len()];
    for (name, declarers) in &referenced {
        for (k, (c, m)) in members.iter().enumerate() {
            if m.name == *name && declarers.iter().any(|d| std::ptr::eq(*d, *c)) && !is_direct[k] {
                is_direct[k] = true;
                direct.push(ingredient(c, m, score(k), true));
            }
        }
    }
    let mut rest: Vec<(f64, usize)> = (0..members.len())
        .filter(|&k| !is_direct[k])
        .map(|k| (score(k), k))
        .collect();
    // members are already in (file, line) order, so a stable sort keeps the tie-break
    rest.sort_by(|a, b| b.0.total_cmp(&a.0));
    let ranked = rest
        .into_iter()
        .take(n)
        .map(|(s, k)| ingredient(members[k].0, members[k].1, s, false))
        .collect();
    (direct, ranked)
}

/// Classes that declare `name` as accessed through `receiver` on `stmt`.
fn resolve_declarers<'a>(
    stmt: &Statement,
    index: &'a SourceIndex,
    name: &str,
    receiver: Option<&str>,
) -> Vec<&'a ClassDecl> {
    let method = index.method_of(stmt);
    let own_class = method
        .and_then(|m| m.class.as_deref())
        .and_then(|c| index.class(&stmt.file, c));
    let ty = match receiver {
        None | Some("this") => own_class.map(|c| c.name.clone()),
        Some(r) => receiver_type(stmt, index, r).or_else(|| Some(r.to_string())),
    };
    let typed: Vec<&ClassDecl> = match &ty {
        Some(t) => index.classes_named(t),
        None => Vec::new(),
    };
    let declaring: Vec<&ClassDecl> = typed
        .iter()
        .copied()
        .filter(|c| c.members.iter().any(|m| m.name == name))
        .collect();
    if !declaring.is_empty() {
        return declaring;
    }
    // name search across the whole index
    index
        .classes()
        .filter(|c| c.members.iter().any(|m| m.name == name))
        .collect()
}

/// Declared type of `var` from local declarations, parameters or fields.
fn receiver_type(stmt: &Statement, index: &SourceIndex, var: &str) -> Option<String> {
    let method = index.method_of(stmt)?;
    let local = index
        .statements_in_method(method)
        .into_iter()
        .filter(|s| s.span.start <= stmt.span.start)
        .rev()
        .find_map(|s| declared_type(&s.text, var));
    if local.is_some() {
        return local;
    }
    if let Some((_, ty)) = method.params.iter().find(|(n, _)| n == var) {
        return Some(ty.clone());
    }
    let class = index.class(&stmt.file, method.class.as_deref()?)?;
    class
        .members
        .iter()
        .find(|m| m.kind == MemberKind::Field && m.name == var)
        .and_then(|m| m.declared_type.clone())
}
