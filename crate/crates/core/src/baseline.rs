//! Rule-based slot filling: mask the record tokens of the reference summary
//! and refill them from the source table, leaving every other token alone.

use std::collections::BTreeMap;

use crate::data::Table;
use crate::ie::{extract_matches, ExtractorConfig};

/// Slot-filled output. Non-slot tokens are identical to the reference and
/// the length is preserved; `unmapped_slots` counts slots whose type or row
/// had no counterpart in the target table (their original tokens were kept).
#[derive(Clone, Debug)]
pub struct SlotFillOutput {
    pub tokens: Vec<String>,
    pub unmapped_slots: usize,
}

/// Fill the reference summary `y_prime` (written for `x_prime`) with records
/// from `x`. Value slots come from extracting `y_prime` against `x_prime`;
/// entities align by row order and types by column name. Mentions of mapped
/// entities are renamed token-for-token (k-th name token to k-th name token,
/// clamped).
pub fn rule_sf(
    x: &Table,
    y_prime: &[String],
    x_prime: &Table,
    cfg: &ExtractorConfig,
) -> SlotFillOutput {
    let matches = extract_matches(y_prime, x_prime, cfg);
    let mut tokens = y_prime.to_vec();
    let mut unmapped = 0usize;
    // Reference-side entity -> target-side row entity, by row order.
    let mut entity_map: BTreeMap<&str, &str> = BTreeMap::new();

    for m in &matches {
        let Some(row) = x_prime.row_of_entity(&m.record.entity) else {
            unmapped += 1;
            continue;
        };
        if row >= x.n_rows() {
            unmapped += 1;
            continue;
        }
        let Some(col) = x.col_of_type(&m.record.rtype) else {
            unmapped += 1;
            continue;
        };
        let target = x.record(row, col);
        tokens[m.value_pos] = target.value.clone();
        entity_map.insert(&m.record.entity, &target.entity);
    }

    // Rename every mention token of mapped entities.
    for (from, to) in &entity_map {
        let from_tokens: Vec<&str> = from.split_whitespace().collect();
        let to_tokens: Vec<&str> = to.split_whitespace().collect();
        for (pos, original) in y_prime.iter().enumerate() {
            if let Some(k) = from_tokens.iter().position(|t| t == original) {
                tokens[pos] = to_tokens[k.min(to_tokens.len() - 1)].to_string();
            }
        }
    }

    SlotFillOutput {
        tokens,
        unmapped_slots: unmapped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{tokenize, Feature};
    use crate::eval::{bleu, mask_records};

    fn table(rows: &[(&str, &[(&str, &str)])]) -> Table {
        let mut cells = Vec::new();
        for (entity, stats) in rows {
            for (t, v) in *stats {
                cells.push((
                    entity.to_string(),
                    t.to_string(),
                    v.to_string(),
                    Feature::Home,
                ));
            }
        }
        Table::new(cells).unwrap()
    }

    #[test]
    fn swaps_entity_and_value_by_alignment() {
        let x_prime = table(&[("jordan", &[("pts", "30")])]);
        let x = table(&[("james", &[("pts", "25")])]);
        let y_prime = tokenize("jordan scored 30 points .");
        let out = rule_sf(&x, &y_prime, &x_prime, &ExtractorConfig::default());
        assert_eq!(out.tokens, tokenize("james scored 25 points ."));
        assert_eq!(out.unmapped_slots, 0);
    }

    #[test]
    fn missing_type_keeps_original_token() {
        let x_prime = table(&[("jordan", &[("pts", "30"), ("blk", "4")])]);
        let x = table(&[("james", &[("pts", "25"), ("reb", "9")])]);
        let y_prime = tokenize("jordan scored 30 points and 4 blocks .");
        let out = rule_sf(&x, &y_prime, &x_prime, &ExtractorConfig::default());
        // pts maps, blk does not: "4" survives, entity still renamed.
        assert_eq!(out.tokens, tokenize("james scored 25 points and 4 blocks ."));
        assert_eq!(out.unmapped_slots, 1);
    }

    #[test]
    fn non_slot_tokens_and_length_are_preserved() {
        let x_prime = table(&[
            ("jordan", &[("pts", "30"), ("reb", "8")]),
            ("bird", &[("pts", "22"), ("reb", "11")]),
        ]);
        let x = table(&[
            ("james", &[("pts", "25"), ("reb", "9")]),
            ("curry", &[("pts", "31"), ("reb", "5")]),
        ]);
        let y_prime =
            tokenize("what a game . jordan had 30 points and 8 rebounds . bird added 22 points .");
        let out = rule_sf(&x, &y_prime, &x_prime, &ExtractorConfig::default());
        assert_eq!(out.tokens.len(), y_prime.len());
        let slots = ["jordan", "bird", "30", "8", "22"];
        for (a, b) in y_prime.iter().zip(&out.tokens) {
            if slots.contains(&a.as_str()) {
                assert_ne!(a, b, "slot token `{a}` should have been replaced");
            } else {
                assert_eq!(a, b, "non-slot token `{a}` must survive");
            }
        }
    }

    #[test]
    fn masked_output_matches_masked_reference_exactly() {
        let x_prime = table(&[
            ("jordan", &[("pts", "30"), ("reb", "8")]),
            ("bird", &[("pts", "22"), ("reb", "11")]),
        ]);
        let x = table(&[
            ("james", &[("pts", "25"), ("reb", "9")]),
            ("curry", &[("pts", "31"), ("reb", "5")]),
        ]);
        let y_prime =
            tokenize("jordan had 30 points and 8 rebounds . bird added 22 points late .");
        let cfg = ExtractorConfig::default();
        let out = rule_sf(&x, &y_prime, &x_prime, &cfg);
        let masked_out = mask_records(&out.tokens, &x, &cfg);
        let masked_ref = mask_records(&y_prime, &x_prime, &cfg);
        assert_eq!(masked_out, masked_ref);
        let score = bleu(&[masked_out], &[masked_ref], 4).unwrap();
        assert!((score - 100.0).abs() < 1e-9);
    }
}
