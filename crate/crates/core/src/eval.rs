//! Automatic metrics: style BLEU against the reference summary, content
//! fidelity against the source table, and content selection against the
//! auxiliary summary's records.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::data::{Instance, Table};
use crate::error::{Error, Result};
use crate::ie::{extract_matches, extract_records_from_text, ExtractedRecord, ExtractorConfig};

/// Placeholder for masked record tokens.
pub const RECORD_MASK: &str = "<rec>";

/// Corpus-level BLEU with clipped n-gram precisions pooled over all segments
/// (up to `max_n`), geometric mean, brevity penalty, no smoothing: any empty
/// n-gram precision zeroes the score. Returns a 0-100 value.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<String>], max_n: usize) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Config("BLEU needs at least one candidate".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Config(format!(
            "BLEU candidate/reference count mismatch: {} vs {}",
            candidates.len(),
            references.len()
        )));
    }
    let max_n = max_n.max(1);
    let mut matched = vec![0u64; max_n];
    let mut total = vec![0u64; max_n];
    let (mut cand_len, mut ref_len) = (0u64, 0u64);

    for (cand, reference) in candidates.iter().zip(references) {
        cand_len += cand.len() as u64;
        ref_len += reference.len() as u64;
        for n in 1..=max_n {
            if cand.len() < n {
                continue;
            }
            let mut ref_counts: BTreeMap<&[String], u64> = BTreeMap::new();
            if reference.len() >= n {
                for gram in reference.windows(n) {
                    *ref_counts.entry(gram).or_insert(0) += 1;
                }
            }
            let mut cand_counts: BTreeMap<&[String], u64> = BTreeMap::new();
            for gram in cand.windows(n) {
                *cand_counts.entry(gram).or_insert(0) += 1;
            }
            for (gram, count) in cand_counts {
                total[n - 1] += count;
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                matched[n - 1] += count.min(clip);
            }
        }
    }

    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0f64;
    for n in 0..max_n {
        if total[n] == 0 || matched[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matched[n] as f64 / total[n] as f64).ln();
    }
    let geo = (log_sum / max_n as f64).exp();
    let bp = if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(100.0 * geo * bp)
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Content fidelity of a generated text against its source table: precision
/// of extracted records that really appear in the table, plus the count of
/// unique correct ones. An empty extraction scores zero precision.
pub fn content_fidelity(z: &[String], x: &Table, cfg: &ExtractorConfig) -> (f64, usize) {
    let extracted = extract_records_from_text(z, x, cfg);
    let table_records: BTreeSet<ExtractedRecord> = x
        .linearize()
        .iter()
        .map(|r| ExtractedRecord {
            entity: r.entity.clone(),
            rtype: r.rtype.clone(),
            value: r.value.clone(),
        })
        .collect();
    let correct = extracted.intersection(&table_records).count();
    (pct(correct, extracted.len()), correct)
}

/// Content selection of a generated text against the auxiliary summary:
/// precision/recall/F1 of the record sets extracted from each (the generated
/// text against `x`, the auxiliary text against its own table `x_gold`).
pub fn content_selection(
    z: &[String],
    y_aux: &[String],
    x: &Table,
    x_gold: &Table,
    cfg: &ExtractorConfig,
) -> (f64, f64, f64) {
    let from_z = extract_records_from_text(z, x, cfg);
    let from_aux = extract_records_from_text(y_aux, x_gold, cfg);
    let inter = from_z.intersection(&from_aux).count();
    let p = pct(inter, from_z.len());
    let r = pct(inter, from_aux.len());
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Replace the tokens of every extracted record (its value position and all
/// mention positions of its entity) with [`RECORD_MASK`].
pub fn mask_records(text: &[String], candidates: &Table, cfg: &ExtractorConfig) -> Vec<String> {
    let matches = extract_matches(text, candidates, cfg);
    let mut masked = text.to_vec();
    let mut entities: BTreeSet<&str> = BTreeSet::new();
    for m in &matches {
        masked[m.value_pos] = RECORD_MASK.to_string();
        entities.insert(&text[m.entity_pos]);
    }
    for tok in &mut masked {
        if entities.contains(tok.as_str()) {
            *tok = RECORD_MASK.to_string();
        }
    }
    masked
}

/// The three automatic metrics side by side. CF and CS are averaged per
/// instance; style BLEU is corpus-level over pooled n-gram counts.
#[derive(Clone, Debug, Serialize)]
pub struct MetricReport {
    pub style_bleu: f64,
    pub cf_precision: f64,
    pub cf_count: f64,
    pub cs_precision: f64,
    pub cs_recall: f64,
    pub cs_f1: f64,
}

impl MetricReport {
    /// Two-row table: content fidelity, content selection, style BLEU.
    pub fn formatted(&self) -> String {
        format!(
            "{:>8} {:>8} {:>8} {:>8} {:>8} {:>11}\n{:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>11.2}\n",
            "CF P%",
            "CF #",
            "CS P%",
            "CS R%",
            "CS F%",
            "Style BLEU",
            self.cf_precision,
            self.cf_count,
            self.cs_precision,
            self.cs_recall,
            self.cs_f1,
            self.style_bleu,
        )
    }
}

/// Score generated summaries against their instances. With `mask` set, the
/// style BLEU is computed after masking record tokens on both sides (the
/// generation against `x`, the reference against its own table).
pub fn evaluate_corpus(
    generations: &[Vec<String>],
    instances: &[Instance],
    cfg: &ExtractorConfig,
    mask: bool,
) -> Result<MetricReport> {
    if generations.len() != instances.len() {
        return Err(Error::Config(format!(
            "{} generations for {} instances",
            generations.len(),
            instances.len()
        )));
    }
    let mut cands = Vec::with_capacity(generations.len());
    let mut refs = Vec::with_capacity(generations.len());
    let (mut cf_p, mut cf_n, mut cs_p, mut cs_r, mut cs_f) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (z, inst) in generations.iter().zip(instances) {
        if mask {
            cands.push(mask_records(z, &inst.x, cfg));
            let ref_table = inst.x_prime.as_ref().unwrap_or(&inst.x);
            refs.push(mask_records(&inst.y_prime, ref_table, cfg));
        } else {
            cands.push(z.clone());
            refs.push(inst.y_prime.clone());
        }
        let (p, count) = content_fidelity(z, &inst.x, cfg);
        cf_p += p;
        cf_n += count as f64;
        if let Some(aux) = &inst.y_aux {
            let (p, r, f) = content_selection(z, aux, &inst.x, &inst.x, cfg);
            cs_p += p;
            cs_r += r;
            cs_f += f;
        }
    }
    let n = instances.len() as f64;
    let with_aux = instances.iter().filter(|i| i.y_aux.is_some()).count().max(1) as f64;
    Ok(MetricReport {
        style_bleu: bleu(&cands, &refs, 4)?,
        cf_precision: cf_p / n,
        cf_count: cf_n / n,
        cs_precision: cs_p / with_aux,
        cs_recall: cs_r / with_aux,
        cs_f1: cs_f / with_aux,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{tokenize, Feature};

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn identical_candidate_scores_100() {
        let c = vec![toks("the cat sat on the mat .")];
        let r = c.clone();
        assert!((bleu(&c, &r, 4).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn zero_fourgram_precision_zeroes_bleu() {
        let c = vec![toks("a b c d")];
        let r = vec![toks("a b c e")];
        assert_eq!(bleu(&c, &r, 4).unwrap(), 0.0);
    }

    #[test]
    fn empty_candidate_scores_zero_but_empty_list_errors() {
        let c = vec![Vec::new()];
        let r = vec![toks("a b")];
        assert_eq!(bleu(&c, &r, 4).unwrap(), 0.0);
        assert!(bleu(&[], &[], 4).is_err());
    }

    #[test]
    fn fidelity_counts_matching_records() {
        let x = Table::new(vec![
            ("ana".into(), "pts".into(), "10".into(), Feature::Home),
            ("ana".into(), "reb".into(), "5".into(), Feature::Home),
        ])
        .unwrap();
        let cfg = ExtractorConfig::default();
        // One right record, one wrong value: precision 50, count 1.
        let z = toks("ana scored 10 points and 9 rebounds .");
        let (p, count) = content_fidelity(&z, &x, &cfg);
        assert_eq!(p, 50.0);
        assert_eq!(count, 1);
        // Nothing extractable: 0 / 0 by convention.
        let (p0, c0) = content_fidelity(&toks("great game ."), &x, &cfg);
        assert_eq!((p0, c0), (0.0, 0));
        // Everything correct.
        let (p1, c1) = content_fidelity(&toks("ana had 10 points and 5 rebounds ."), &x, &cfg);
        assert_eq!((p1, c1), (100.0, 2));
    }

    #[test]
    fn selection_is_set_arithmetic() {
        let x = Table::new(vec![
            ("ana".into(), "pts".into(), "10".into(), Feature::Home),
            ("ana".into(), "reb".into(), "5".into(), Feature::Home),
            ("bo".into(), "pts".into(), "3".into(), Feature::Home),
            ("bo".into(), "reb".into(), "7".into(), Feature::Home),
        ])
        .unwrap();
        let cfg = ExtractorConfig::default();
        // z mentions {(ana pts 10), (bo reb 7)}; aux mentions {(ana pts 10),
        // (bo pts 3)}: intersection 1 -> P = R = 50, F = 50.
        let z = toks("ana scored 10 points . bo grabbed 7 rebounds .");
        let aux = toks("ana scored 10 points . bo added 3 points .");
        let (p, r, f) = content_selection(&z, &aux, &x, &x, &cfg);
        assert_eq!((p, r), (50.0, 50.0));
        assert!((f - 50.0).abs() < 1e-9);

        let (p2, r2, f2) = content_selection(&aux, &aux, &x, &x, &cfg);
        assert_eq!((p2, r2, f2), (100.0, 100.0, 100.0));

        let disjoint = toks("ana had 9 points .");
        let (p3, r3, f3) = content_selection(&disjoint, &aux, &x, &x, &cfg);
        assert_eq!((p3, r3, f3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn duplicate_extractions_do_not_inflate_metrics() {
        let x = Table::new(vec![("ana".into(), "pts".into(), "10".into(), Feature::Home)])
            .unwrap();
        let cfg = ExtractorConfig::default();
        let once = toks("ana scored 10 points .");
        let twice = toks("ana scored 10 points . ana scored 10 points .");
        assert_eq!(
            content_fidelity(&once, &x, &cfg),
            content_fidelity(&twice, &x, &cfg)
        );
        let (p1, r1, f1) = content_selection(&once, &once, &x, &x, &cfg);
        let (p2, r2, f2) = content_selection(&twice, &once, &x, &x, &cfg);
        assert_eq!((p1, r1, f1), (p2, r2, f2));
    }

    #[test]
    fn masking_hides_values_and_entity_mentions() {
        let x = Table::new(vec![("ana".into(), "pts".into(), "10".into(), Feature::Home)])
            .unwrap();
        let cfg = ExtractorConfig::default();
        let masked = mask_records(&toks("ana scored 10 points , ana smiled ."), &x, &cfg);
        assert_eq!(
            masked,
            toks(&format!(
                "{m} scored {m} points , {m} smiled .",
                m = RECORD_MASK
            ))
        );
    }
}
