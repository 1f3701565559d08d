//! Rule-based record extraction from text and type-based reference
//! retrieval. The extractor stands in for a learned IE model: it is
//! deterministic, dependency-free, and doubles as the oracle behind the
//! content metrics.

use std::collections::{BTreeMap, BTreeSet};

use crate::data::{Instance, Table};
use crate::error::{Error, Result};

/// Statistic types the extractor can recognize, with the single-token keyword
/// that disambiguates each. Keywords are unique, so a value token followed by
/// a keyword pins the type.
pub const LEXICON: &[(&str, &str)] = &[
    ("pts", "points"),
    ("reb", "rebounds"),
    ("ast", "assists"),
    ("stl", "steals"),
    ("blk", "blocks"),
    ("min", "minutes"),
    ("to", "turnovers"),
    ("pf", "fouls"),
    ("fgm", "buckets"),
    ("fga", "attempts"),
];

/// A record read off a text span: same semantics as a table record, minus the
/// grid position.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExtractedRecord {
    pub entity: String,
    pub rtype: String,
    pub value: String,
}

/// An extraction with the token positions it came from. `entity_pos` is the
/// mention the value was attributed to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordMatch {
    pub record: ExtractedRecord,
    pub value_pos: usize,
    pub entity_pos: usize,
}

/// Extractor knobs. `entity_window` bounds the token distance between a value
/// and the entity mention it is attributed to; `keyword_window` bounds how
/// far after the value its type keyword may sit.
#[derive(Clone, Copy, Debug)]
pub struct ExtractorConfig {
    pub entity_window: usize,
    pub keyword_window: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            entity_window: 10,
            keyword_window: 1,
        }
    }
}

fn is_numeric(token: &str) -> bool {
    !token.is_empty() && token.bytes().all(|b| b.is_ascii_digit())
}

/// Positional extraction: a value is any numeric token whose type keyword
/// follows within `keyword_window`; it is attributed to the nearest mention
/// of a candidate-table entity within `entity_window`, preferring mentions
/// that precede the value (stat prose names the subject first).
pub fn extract_matches(
    text: &[String],
    candidates: &Table,
    cfg: &ExtractorConfig,
) -> Vec<RecordMatch> {
    let keyword_to_type: BTreeMap<&str, &str> = LEXICON.iter().map(|&(t, k)| (k, t)).collect();

    // Mention position -> row entity. First token of each entity name only
    // needs handling for multi-token names: any token of the name counts.
    let mut mention_at: Vec<Option<&str>> = vec![None; text.len()];
    for entity in candidates.entities() {
        let name_tokens: Vec<&str> = entity.split_whitespace().collect();
        for (pos, tok) in text.iter().enumerate() {
            if name_tokens.contains(&tok.as_str()) {
                mention_at[pos] = Some(entity);
            }
        }
    }

    let mut out = Vec::new();
    for (pos, tok) in text.iter().enumerate() {
        if !is_numeric(tok) {
            continue;
        }
        let rtype = (1..=cfg.keyword_window)
            .filter_map(|d| text.get(pos + d))
            .find_map(|t| keyword_to_type.get(t.as_str()));
        let Some(&rtype) = rtype else { continue };

        // Nearest preceding mention wins; fall back to nearest following.
        let preceding = (0..pos)
            .rev()
            .take(cfg.entity_window)
            .find(|&q| mention_at[q].is_some());
        let following = (pos + 1..text.len())
            .take(cfg.entity_window)
            .find(|&q| mention_at[q].is_some());
        let Some(q) = preceding.or(following) else {
            continue;
        };
        out.push(RecordMatch {
            record: ExtractedRecord {
                entity: mention_at[q].unwrap().to_string(),
                rtype: rtype.to_string(),
                value: tok.clone(),
            },
            value_pos: pos,
            entity_pos: q,
        });
    }
    out
}

/// Unique records extracted from `text` against the candidate table.
pub fn extract_records_from_text(
    text: &[String],
    candidates: &Table,
    cfg: &ExtractorConfig,
) -> BTreeSet<ExtractedRecord> {
    extract_matches(text, candidates, cfg)
        .into_iter()
        .map(|m| m.record)
        .collect()
}

/// Record types mentioned by an instance's auxiliary summary.
fn aux_type_set(inst: &Instance, cfg: &ExtractorConfig) -> Result<BTreeSet<String>> {
    let aux = inst.y_aux.as_ref().ok_or_else(|| {
        Error::Config(format!("instance `{}` has no auxiliary summary", inst.id))
    })?;
    Ok(extract_records_from_text(aux, &inst.x, cfg)
        .into_iter()
        .map(|r| r.rtype)
        .collect())
}

/// Pick the pool instance whose auxiliary summary mentions record types
/// closest to the target's: maximal type-set intersection, ties broken by
/// larger Jaccard similarity, then by smallest instance id. The target itself
/// is always excluded.
pub fn retrieve_reference<'a>(
    target: &Instance,
    pool: &'a [Instance],
    cfg: &ExtractorConfig,
) -> Result<&'a Instance> {
    let target_types = aux_type_set(target, cfg)?;
    let mut best: Option<(&Instance, usize, f64)> = None;
    for cand in pool {
        if cand.id == target.id {
            continue;
        }
        let cand_types = aux_type_set(cand, cfg)?;
        let inter = target_types.intersection(&cand_types).count();
        let union = target_types.union(&cand_types).count();
        let jaccard = if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        };
        let better = match &best {
            None => true,
            Some((b, bi, bj)) => {
                inter > *bi
                    || (inter == *bi && jaccard > *bj)
                    || (inter == *bi && jaccard == *bj && cand.id < b.id)
            }
        };
        if better {
            best = Some((cand, inter, jaccard));
        }
    }
    best.map(|(inst, _, _)| inst).ok_or(Error::EmptyPool)
}

/// Rebuild a corpus so every instance's reference pair comes from its
/// retrieved neighbor: `y_prime` becomes the neighbor's auxiliary summary and
/// `x_prime` the neighbor's table.
pub fn build_dataset(corpus: &[Instance], cfg: &ExtractorConfig) -> Result<Vec<Instance>> {
    let mut out = Vec::with_capacity(corpus.len());
    for inst in corpus {
        let neighbor = retrieve_reference(inst, corpus, cfg)?;
        let mut rebuilt = inst.clone();
        rebuilt.y_prime = neighbor
            .y_aux
            .clone()
            .ok_or_else(|| Error::Config(format!("neighbor `{}` has no aux", neighbor.id)))?;
        rebuilt.x_prime = Some(neighbor.x.clone());
        out.push(rebuilt);
    }
    Ok(out)
}
