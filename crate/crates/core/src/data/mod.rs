//! Record/table/instance data structures, tokenization, corpus IO,
//! vocabulary, and the seeded synthetic corpus generator.

pub mod corpus;
pub mod synth;
pub mod vocab;

pub use corpus::{parse_corpus, write_corpus, Split, SplitStats};
pub use synth::{synth_corpus, SynthConfig};
pub use vocab::{build_vocab, ExtendedVocab, Vocab};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether the entity of a record played at home or visited.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Home,
    Visiting,
}

impl Feature {
    /// Reserved embedding token for this feature value.
    pub fn token(self) -> &'static str {
        match self {
            Feature::Home => "<home>",
            Feature::Visiting => "<vis>",
        }
    }
}

/// One table cell: who, which statistic, its value, home/visiting, and the
/// cell's grid position.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub entity: String,
    pub rtype: String,
    pub value: String,
    pub feature: Feature,
    pub row: usize,
    pub col: usize,
}

/// Closed inventory of record types accepted by the loader. The first block
/// doubles as the extraction lexicon (see [`crate::ie`]); the rest exist so
/// box-score exports with the usual per-player and per-team columns pass
/// validation unchanged.
pub const TYPE_INVENTORY: &[&str] = &[
    // Extractable statistic types (unique single-token keyword each).
    "pts", "reb", "ast", "stl", "blk", "min", "to", "pf", "fgm", "fga",
    // Accepted for parsing; no unique keyword, so not extractable.
    "fg_pct", "fg3m", "fg3a", "fg3_pct", "ftm", "fta", "ft_pct", "oreb", "dreb",
    "start_position", "first_name", "second_name",
    "team_pts", "team_wins", "team_losses", "team_city", "team_name", "team_ast",
    "team_reb", "team_to", "team_fg_pct", "team_fg3_pct", "team_ft_pct",
    "team_pts_qtr1", "team_pts_qtr2", "team_pts_qtr3", "team_pts_qtr4",
];

/// Row-major grid of records: one row per entity, one column per type.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    records: Vec<Record>,
    n_rows: usize,
    n_cols: usize,
}

impl Table {
    /// Build and validate a table from records listed row-major. Rows are
    /// delimited by entity changes; every row must repeat the first row's
    /// column type sequence, and entities must not recur later in the grid.
    pub fn new(cells: Vec<(String, String, String, Feature)>) -> Result<Table> {
        if cells.is_empty() {
            return Err(Error::Config("table with no records".into()));
        }
        for (_, rtype, _, _) in &cells {
            if !TYPE_INVENTORY.contains(&rtype.as_str()) {
                return Err(Error::Config(format!("unknown record type `{rtype}`")));
            }
        }
        // Column schema from the first row.
        let first_entity = cells[0].0.clone();
        let mut schema: Vec<String> = Vec::new();
        for (entity, rtype, _, _) in &cells {
            if *entity != first_entity {
                break;
            }
            schema.push(rtype.clone());
        }
        let n_cols = schema.len();
        if cells.len() % n_cols != 0 {
            return Err(Error::Config(format!(
                "ragged table: {} records do not fill rows of {n_cols}",
                cells.len()
            )));
        }
        let n_rows = cells.len() / n_cols;

        let mut records = Vec::with_capacity(cells.len());
        let mut seen_entities: Vec<String> = Vec::new();
        for (idx, (entity, rtype, value, feature)) in cells.into_iter().enumerate() {
            let (row, col) = (idx / n_cols, idx % n_cols);
            if col == 0 {
                if seen_entities.contains(&entity) {
                    return Err(Error::Config(format!(
                        "entity `{entity}` appears in more than one row"
                    )));
                }
                seen_entities.push(entity.clone());
            } else if entity != seen_entities[row] {
                return Err(Error::Config(format!(
                    "row {row} mixes entities `{}` and `{entity}`",
                    seen_entities[row]
                )));
            }
            if rtype != schema[col] {
                return Err(Error::Config(format!(
                    "row {row} col {col}: expected type `{}`, got `{rtype}`",
                    schema[col]
                )));
            }
            if value.is_empty() {
                return Err(Error::Config(format!("row {row} col {col}: empty value")));
            }
            records.push(Record {
                entity,
                rtype,
                value,
                feature,
                row,
                col,
            });
        }
        Ok(Table {
            records,
            n_rows,
            n_cols,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of records, `n_rows * n_cols`.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in row-major order; index `o` corresponds to
    /// `(o / n_cols, o % n_cols)`.
    pub fn linearize(&self) -> &[Record] {
        &self.records
    }

    pub fn offset(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        row * self.n_cols + col
    }

    pub fn row_col(&self, offset: usize) -> (usize, usize) {
        debug_assert!(offset < self.records.len());
        (offset / self.n_cols, offset % self.n_cols)
    }

    pub fn record(&self, row: usize, col: usize) -> &Record {
        &self.records[self.offset(row, col)]
    }

    /// Entity of each row, in row order.
    pub fn entities(&self) -> Vec<&str> {
        (0..self.n_rows)
            .map(|i| self.record(i, 0).entity.as_str())
            .collect()
    }

    /// Column type schema.
    pub fn types(&self) -> Vec<&str> {
        (0..self.n_cols)
            .map(|j| self.record(0, j).rtype.as_str())
            .collect()
    }

    /// Column index of a type, if present.
    pub fn col_of_type(&self, rtype: &str) -> Option<usize> {
        (0..self.n_cols).find(|&j| self.record(0, j).rtype == rtype)
    }

    /// Row index of an entity, if present.
    pub fn row_of_entity(&self, entity: &str) -> Option<usize> {
        (0..self.n_rows).find(|&i| self.record(i, 0).entity == entity)
    }
}

/// One train/eval unit: the source table `x`, the style reference `y_prime`
/// (a summary written for another table), that other table `x_prime`, and
/// `y_aux`, the summary originally written for `x`. Only `(x, y_prime)` are
/// consumed at test time.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: String,
    pub x: Table,
    pub x_prime: Option<Table>,
    pub y_prime: Vec<String>,
    pub y_aux: Option<Vec<String>>,
}

/// Lowercase, split on whitespace, and peel leading/trailing ASCII
/// punctuation into separate tokens. Interior punctuation stays put, so
/// decimal record values like `48.5` survive as single tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chunk = chunk.to_lowercase();
        let bytes = chunk.as_bytes();
        let start = bytes.iter().position(|b| !b.is_ascii_punctuation());
        match start {
            None => {
                // All punctuation: one token per character.
                for b in bytes {
                    out.push((*b as char).to_string());
                }
            }
            Some(start) => {
                let end = bytes.iter().rposition(|b| !b.is_ascii_punctuation()).unwrap();
                for b in &bytes[..start] {
                    out.push((*b as char).to_string());
                }
                out.push(chunk[start..=end].to_string());
                for b in &bytes[end + 1..] {
                    out.push((*b as char).to_string());
                }
            }
        }
    }
    out
}

/// Join tokens back into corpus text.
pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(e: &str, t: &str, v: &str) -> (String, String, String, Feature) {
        (e.into(), t.into(), v.into(), Feature::Home)
    }

    #[test]
    fn linearize_is_row_major() {
        let table = Table::new(vec![
            cell("a", "pts", "1"),
            cell("a", "reb", "2"),
            cell("b", "pts", "3"),
            cell("b", "reb", "4"),
        ])
        .unwrap();
        let order: Vec<(usize, usize)> = (0..table.len()).map(|o| table.row_col(o)).collect();
        assert_eq!(order, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(table.offset(1, 0), 2);
    }

    #[test]
    fn offset_round_trip() {
        // 3x4 grid: 12 records; (1, 2) <-> 6.
        let mut cells = Vec::new();
        for e in ["a", "b", "c"] {
            for t in ["pts", "reb", "ast", "stl"] {
                cells.push(cell(e, t, "5"));
            }
        }
        let table = Table::new(cells).unwrap();
        assert_eq!(table.len(), 12);
        assert_eq!(table.offset(1, 2), 6);
        assert_eq!(table.row_col(6), (1, 2));
    }

    #[test]
    fn rejects_unknown_type() {
        let err = Table::new(vec![cell("a", "xyz", "1")]).unwrap_err();
        assert!(err.to_string().contains("xyz"));
    }

    #[test]
    fn rejects_inconsistent_schema() {
        assert!(Table::new(vec![
            cell("a", "pts", "1"),
            cell("a", "reb", "2"),
            cell("b", "pts", "3"),
            cell("b", "ast", "4"),
        ])
        .is_err());
    }

    #[test]
    fn rejects_repeated_entity_row() {
        assert!(Table::new(vec![
            cell("a", "pts", "1"),
            cell("b", "pts", "2"),
            cell("a", "pts", "3"),
        ])
        .is_err());
    }

    #[test]
    fn tokenize_splits_edges_keeps_interior() {
        assert_eq!(
            tokenize("James scored 25 points, (really)."),
            vec!["james", "scored", "25", "points", ",", "(", "really", ")", "."]
        );
        assert_eq!(tokenize("shot 48.5 percent"), vec!["shot", "48.5", "percent"]);
    }

    #[test]
    fn tokenize_detokenize_round_trip() {
        let text = "smith posted 31 points , 4 rebounds and 2 blocks .";
        let toks = tokenize(text);
        assert_eq!(detokenize(&toks), text);
        assert_eq!(tokenize(&detokenize(&toks)), toks);
    }
}
