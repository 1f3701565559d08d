use std::collections::{BTreeMap, HashMap};

use super::{Instance, Table};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token/index bijection with the four specials pinned at 0..=3 and the two
/// feature tokens right after them.
#[derive(Clone, Debug)]
pub struct Vocab {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, usize>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let mut id_to_token =
            vec![PAD_TOKEN.into(), BOS_TOKEN.into(), EOS_TOKEN.into(), UNK_TOKEN.into()];
        id_to_token.push("<home>".into());
        id_to_token.push("<vis>".into());
        for t in tokens {
            if !id_to_token.contains(&t) {
                id_to_token.push(t);
            }
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            id_to_token,
            token_to_id,
        }
    }

    /// Restore a vocabulary from its full token list (checkpoint loading).
    pub fn from_id_list(id_to_token: Vec<String>) -> Self {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            id_to_token,
            token_to_id,
        }
    }

    /// Index of a token, or [`UNK`] if it was never kept.
    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.id_to_token[id]
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

/// Count every summary token plus record entities, types and values, then
/// keep the ones at or above `min_freq`, most frequent first (ties broken
/// alphabetically). Specials and feature tokens are always present.
pub fn build_vocab(instances: &[Instance], min_freq: usize) -> Vocab {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut bump = |tok: &str| *counts.entry(tok.to_string()).or_insert(0) += 1;
    for inst in instances {
        for tok in &inst.y_prime {
            bump(tok);
        }
        if let Some(aux) = &inst.y_aux {
            for tok in aux {
                bump(tok);
            }
        }
        for table in [Some(&inst.x), inst.x_prime.as_ref()].into_iter().flatten() {
            for rec in table.linearize() {
                bump(&rec.entity);
                bump(&rec.rtype);
                bump(&rec.value);
            }
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_freq)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocab::from_tokens(kept.into_iter().map(|(t, _)| t).collect())
}

/// Per-instance view that extends the base vocabulary with the table's value
/// tokens that fell outside it. Generation never produces the extras from the
/// vocabulary softmax, but the copy mechanism can emit them and losses can
/// target them.
pub struct ExtendedVocab<'a> {
    base: &'a Vocab,
    extras: Vec<String>,
    extra_ids: HashMap<String, usize>,
}

impl<'a> ExtendedVocab<'a> {
    pub fn new(base: &'a Vocab, table: &Table) -> Self {
        let mut extras = Vec::new();
        let mut extra_ids = HashMap::new();
        for rec in table.linearize() {
            if !base.contains(&rec.value) && !extra_ids.contains_key(&rec.value) {
                extra_ids.insert(rec.value.clone(), base.len() + extras.len());
                extras.push(rec.value.clone());
            }
        }
        Self {
            base,
            extras,
            extra_ids,
        }
    }

    /// Base vocabulary size plus this table's extras.
    pub fn total(&self) -> usize {
        self.base.len() + self.extras.len()
    }

    pub fn base_len(&self) -> usize {
        self.base.len()
    }

    /// Extended id: base id if known, copyable extra id if the token is one
    /// of the table's out-of-vocabulary values, [`UNK`] otherwise.
    pub fn id(&self, token: &str) -> usize {
        if self.base.contains(token) {
            self.base.id(token)
        } else {
            self.extra_ids.get(token).copied().unwrap_or(UNK)
        }
    }

    pub fn token(&self, id: usize) -> &str {
        if id < self.base.len() {
            self.base.token(id)
        } else {
            &self.extras[id - self.base.len()]
        }
    }

    /// Collapse an extended id to something embeddable: extras become UNK.
    pub fn embeddable(&self, id: usize) -> usize {
        if id < self.base.len() {
            id
        } else {
            UNK
        }
    }
}
