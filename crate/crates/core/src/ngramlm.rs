//! Word n-gram language model with interpolated add-k smoothing.
//!
//! For a history `h` of length `m - 1` seen `c(h)` times,
//!
//! ```text
//! P_m(w | h) = (c(h, w) + k·|O|·P_{m-1}(w | h')) / (c(h) + k·|O|)
//! ```
//!
//! where `h'` drops the oldest word of `h`, `|O|` is the number of outcomes
//! (the LM vocabulary plus `<unk>` and `</s>`), and `P_0` is uniform. A
//! history never observed at order `m` backs off to `P_{m-1}` unchanged. At
//! order one this reduces to plain add-k: `(c(w) + k) / (N + k·|O|)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vocab::UNK;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

pub type WordId = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct NGramModel {
    order: usize,
    k: f64,
    /// LM vocabulary in ascending order; ids are positions.
    words: Vec<String>,
    index: HashMap<String, WordId>,
    /// `events[m - 1]`: counts of m-grams (history followed by predicted word).
    events: Vec<HashMap<Vec<WordId>, u64>>,
    /// `histories[m - 1]`: total count of each (m - 1)-word history.
    histories: Vec<HashMap<Vec<WordId>, u64>>,
}

/// Splits a plain-text corpus into case-folded sentences, skipping blank lines.
pub fn parse_corpus(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| {
            l.split_whitespace()
                .map(str::to_lowercase)
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn train_ngram<S: AsRef<str>>(corpus: &[Vec<S>], order: usize, k: f64) -> Result<NGramModel> {
    if order == 0 {
        return Err(Error::invalid("n-gram order must be at least 1"));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::invalid("smoothing constant must be positive"));
    }
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyCorpus);
    }
    let mut vocab = std::collections::BTreeSet::new();
    for sentence in corpus {
        for w in sentence {
            let w = w.as_ref().to_lowercase();
            if w == BOS || w == EOS {
                return Err(Error::invalid(format!("reserved token {w} in corpus")));
            }
            if w != UNK {
                vocab.insert(w);
            }
        }
    }
    let mut model = NGramModel::empty(order, k, vocab.into_iter().collect());
    for sentence in corpus {
        let ids: Vec<WordId> = sentence.iter().map(|w| model.word_id(w.as_ref())).collect();
        model.count_sentence(&ids);
    }
    Ok(model)
}

impl NGramModel {
    fn empty(order: usize, k: f64, words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as WordId))
            .collect();
        NGramModel {
            order,
            k,
            words,
            index,
            events: vec![HashMap::new(); order],
            histories: vec![HashMap::new(); order],
        }
    }

    fn count_sentence(&mut self, ids: &[WordId]) {
        let padded = self.pad(ids);
        for i in self.order - 1..padded.len() {
            for m in 1..=self.order {
                let gram = &padded[i + 1 - m..=i];
                *self.events[m - 1].entry(gram.to_vec()).or_default() += 1;
                *self.histories[m - 1]
                    .entry(gram[..m - 1].to_vec())
                    .or_default() += 1;
            }
        }
    }

    fn pad(&self, ids: &[WordId]) -> Vec<WordId> {
        let mut padded = vec![self.bos(); self.order - 1];
        padded.extend_from_slice(ids);
        padded.push(self.eos());
        padded
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    /// LM vocabulary `V^LM`, excluding `<unk>` and boundary markers.
    pub fn vocabulary(&self) -> &[String] {
        &self.words
    }

    pub fn unk(&self) -> WordId {
        self.words.len() as WordId
    }

    pub fn eos(&self) -> WordId {
        self.words.len() as WordId + 1
    }

    pub fn bos(&self) -> WordId {
        self.words.len() as WordId + 2
    }

    /// Size of the predicted outcome set: `|V^LM| + 2`.
    pub fn num_outcomes(&self) -> usize {
        self.words.len() + 2
    }

    /// Id of a word; anything outside `V^LM` maps to `<unk>`.
    pub fn word_id(&self, word: &str) -> WordId {
        match self.index.get(word) {
            Some(&id) => id,
            None => self
                .index
                .get(&word.to_lowercase())
                .copied()
                .unwrap_or(self.unk()),
        }
    }

    pub fn token(&self, id: WordId) -> &str {
        let id = id as usize;
        match id.checked_sub(self.words.len()) {
            None => &self.words[id],
            Some(0) => UNK,
            Some(1) => EOS,
            _ => BOS,
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// `ln P(word | history)`; only the last `n - 1` history ids are used
    /// and a short history is padded with `<s>`.
    pub fn log_prob(&self, history: &[WordId], word: WordId) -> f64 {
        let need = self.order - 1;
        let mut ctx: Vec<WordId> = Vec::with_capacity(self.order);
        if history.len() < need {
            ctx.resize(need - history.len(), self.bos());
            ctx.extend_from_slice(history);
        } else {
            ctx.extend_from_slice(&history[history.len() - need..]);
        }
        self.log_prob_at_order(&ctx, word, self.order)
    }

    /// Natural-log probability of a sentence including the end marker.
    pub fn score_ids(&self, ids: &[WordId]) -> f64 {
        let padded = self.pad(ids);
        let start = self.order - 1;
        (start..padded.len())
            .map(|i| self.log_prob(&padded[..i], padded[i]))
            .sum()
    }

    pub fn ids<S: AsRef<str>>(&self, sentence: &[S]) -> Vec<WordId> {
        sentence.iter().map(|w| self.word_id(w.as_ref())).collect()
    }

    /// Sum of `ln P(w_t | previous n - 1 words)` over the words and `</s>`.
    pub fn score<S: AsRef<str>>(&self, sentence: &[S]) -> f64 {
        self.score_ids(&self.ids(sentence))
    }

    /// ARPA-like text: a `\data\` header with order, k and per-order counts,
    /// then one `\m-grams:` block per order of `log10prob<TAB>n-gram<TAB>count`
    /// lines, then `\end\`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\\data\\");
        let _ = writeln!(out, "order={}", self.order);
        let _ = writeln!(out, "k={:?}", self.k);
        for m in 1..=self.order {
            let _ = writeln!(out, "ngram {m}={}", self.events[m - 1].len());
        }
        for m in 1..=self.order {
            let _ = writeln!(out, "\n\\{m}-grams:");
            let mut lines: BTreeMap<String, (f64, u64)> = BTreeMap::new();
            for (gram, &count) in &self.events[m - 1] {
                let text = gram
                    .iter()
                    .map(|&id| self.token(id))
                    .collect::<Vec<_>>()
                    .join(" ");
                let lp = self.log_prob_at_order(&gram[..m - 1], gram[m - 1], m);
                lines.insert(text, (lp / std::f64::consts::LN_10, count));
            }
            for (text, (lp10, count)) in lines {
                let _ = writeln!(out, "{lp10:.6}\t{text}\t{count}");
            }
        }
        let _ = writeln!(out, "\n\\end\\");
        out
    }

    /// `ln P_m(word | history)` with `history` exactly `m - 1` long.
    fn log_prob_at_order(&self, history: &[WordId], word: WordId, m: usize) -> f64 {
        let outcomes = self.num_outcomes() as f64;
        let pseudo = self.k * outcomes;
        let mut p = 1.0 / outcomes;
        for j in 1..=m {
            let h = &history[history.len() - (j - 1)..];
            let seen = self.histories[j - 1].get(h).copied().unwrap_or(0);
            if seen == 0 {
                continue;
            }
            let mut key = h.to_vec();
            key.push(word);
            let c = self.events[j - 1].get(&key).copied().unwrap_or(0);
            p = (c as f64 + pseudo * p) / (seen as f64 + pseudo);
        }
        p.ln()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty())
            .peekable();

        match lines.next() {
            Some((_, "\\data\\")) => {}
            Some((n, _)) => return Err(Error::parse(n, "expected \\data\\")),
            None => return Err(Error::MissingSection("\\data\\".into())),
        }
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::MissingSection(format!("header field {key}")))?;
            let value = line
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| Error::parse(n, format!("expected {key}=...")))?;
            Ok((n, value.trim().to_string()))
        };
        let (n, order) = header("order")?;
        let order: usize = order
            .parse()
            .map_err(|_| Error::parse(n, "order is not an integer"))?;
        if order == 0 || order > 16 {
            return Err(Error::parse(n, "order out of range"));
        }
        let (n, k) = header("k")?;
        let k: f64 = k
            .parse()
            .map_err(|_| Error::parse(n, "k is not a number"))?;
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::parse(n, "k must be positive"));
        }
        let mut declared = Vec::with_capacity(order);
        for m in 1..=order {
            let (n, v) = header(&format!("ngram {m}"))?;
            let count: usize = v
                .parse()
                .map_err(|_| Error::parse(n, "count is not an integer"))?;
            declared.push(count);
        }

        // (tokens, count) per order, resolved to ids once the vocabulary is known
        let mut blocks: Vec<Vec<(usize, Vec<String>, u64)>> = Vec::with_capacity(order);
        for (m, &expected) in (1..=order).zip(&declared) {
            let title = format!("\\{m}-grams:");
            match lines.next() {
                Some((_, l)) if l == title => {}
                Some((n, _)) => return Err(Error::parse(n, format!("expected {title}"))),
                None => return Err(Error::MissingSection(title)),
            }
            let mut block = Vec::new();
            while let Some(&(n, line)) = lines.peek() {
                if line.starts_with('\\') {
                    break;
                }
                lines.next();
                let mut fields = line.split('\t');
                let (lp, gram, count) =
                    match (fields.next(), fields.next(), fields.next(), fields.next()) {
                        (Some(a), Some(b), Some(c), None) => (a, b, c),
                        _ => return Err(Error::parse(n, "expected logprob, n-gram and count")),
                    };
                let lp: f64 = lp
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(n, "bad logprob"))?;
                if !(lp <= 0.0) {
                    return Err(Error::parse(n, "logprob must be <= 0"));
                }
                let count: u64 = count
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(n, "bad count"))?;
                if count == 0 {
                    return Err(Error::parse(n, "zero count"));
                }
                let tokens: Vec<String> = gram.split(' ').map(str::to_string).collect();
                if tokens.len() != m || tokens.iter().any(|t| t.is_empty()) {
                    return Err(Error::parse(n, format!("expected a {m}-gram")));
                }
                block.push((n, tokens, count));
            }
            if block.len() != expected {
                return Err(Error::MissingSection(format!(
                    "{title} declares {expected} entries, found {}",
                    block.len()
                )));
            }
            blocks.push(block);
        }
        match lines.next() {
            Some((_, "\\end\\")) => {}
            Some((n, _)) => return Err(Error::parse(n, "expected \\end\\")),
            None => return Err(Error::MissingSection("\\end\\".into())),
        }
        if let Some((n, _)) = lines.next() {
            return Err(Error::parse(n, "content after \\end\\"));
        }

        let mut vocab = std::collections::BTreeSet::new();
        for (n, tokens, _) in &blocks[0] {
            let w = &tokens[0];
            if w == BOS {
                return Err(Error::parse(*n, "<s> cannot be predicted"));
            }
            if w != EOS && w != UNK {
                vocab.insert(w.clone());
            }
        }
        let mut model = NGramModel::empty(order, k, vocab.into_iter().collect());
        for (m, block) in (1..=order).zip(&blocks) {
            for (n, tokens, count) in block {
                let mut ids = Vec::with_capacity(m);
                for (pos, t) in tokens.iter().enumerate() {
                    let last = pos == m - 1;
                    let id = match t.as_str() {
                        BOS if !last => model.bos(),
                        EOS if last => model.eos(),
                        UNK => model.unk(),
                        w => *model
                            .index
                            .get(w)
                            .ok_or_else(|| Error::parse(*n, format!("{w:?} not in vocabulary")))?,
                    };
                    ids.push(id);
                }
                if model.events[m - 1].insert(ids.clone(), *count).is_some() {
                    return Err(Error::parse(*n, "duplicate n-gram"));
                }
                let h = model.histories[m - 1]
                    .entry(ids[..m - 1].to_vec())
                    .or_default();
                *h = h
                    .checked_add(*count)
                    .ok_or_else(|| Error::parse(*n, "count overflow"))?;
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        parse_corpus(&lines.join("\n"))
    }

    #[test]
    fn unigram_add_k() {
        let k = 0.1;
        let lm = train_ngram(&corpus(&["a b", "a c"]), 1, k).unwrap();
        assert_eq!(lm.vocabulary(), ["a", "b", "c"]);
        // six predicted tokens (a b </s> a c </s>), outcomes {a, b, c, <unk>, </s>}
        let p_a = lm.log_prob(&[], lm.word_id("a")).exp();
        assert!((p_a - (2.0 + k) / (6.0 + k * 5.0)).abs() < 1e-15);
        let p_unseen = lm.log_prob(&[], lm.word_id("zzz")).exp();
        assert!((p_unseen - k / (6.0 + k * 5.0)).abs() < 1e-15);
        assert!(p_unseen > 0.0);
    }

    #[test]
    fn unigram_score_ignores_order() {
        let lm = train_ngram(&corpus(&["a b c", "c a"]), 1, 0.1).unwrap();
        assert!((lm.score(&["a", "b", "c"]) - lm.score(&["c", "b", "a"])).abs() < 1e-12);
    }

    #[test]
    fn empty_sentence_scores_end_marker() {
        let lm = train_ngram(&corpus(&["a b", "a c"]), 2, 0.1).unwrap();
        let empty: [&str; 0] = [];
        let expected = lm.log_prob(&[lm.bos()], lm.eos());
        assert_eq!(lm.score(&empty), expected);
    }

    #[test]
    fn bigram_order_sensitivity() {
        let mut lines = vec!["a b"; 20];
        lines.push("b a");
        let lm = train_ngram(&corpus(&lines), 2, 0.1).unwrap();
        assert!(lm.score(&["a", "b"]) > lm.score(&["b", "a"]) + 1.0);
    }

    #[test]
    fn repeated_sentence_is_near_certain() {
        let lines = vec!["x y z"; 200];
        let lm = train_ngram(&corpus(&lines), 3, 0.01).unwrap();
        assert!(lm.score(&["x", "y", "z"]) > -0.01);
    }

    #[test]
    fn empty_corpus_rejected() {
        let empty: Vec<Vec<String>> = vec![];
        assert!(matches!(
            train_ngram(&empty, 2, 0.1),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn text_round_trip_exact() {
        let lm = train_ngram(&corpus(&["a b c", "b c a", "a a"]), 3, 0.1).unwrap();
        let back = NGramModel::parse(&lm.to_text()).unwrap();
        assert_eq!(back, lm);
        for s in [vec!["a", "c"], vec!["q", "a", "b"], vec![]] {
            assert_eq!(back.score(&s), lm.score(&s));
        }
    }

    #[test]
    fn truncated_file_names_missing_section() {
        let lm = train_ngram(&corpus(&["a b c"]), 2, 0.1).unwrap();
        let text = lm.to_text();
        let cut = &text[..text.find("\\2-grams:").unwrap()];
        match NGramModel::parse(cut) {
            Err(Error::MissingSection(s)) => assert!(s.contains("2-grams")),
            other => panic!("{other:?}"),
        }
        let cut = &text[..text.find("\\end\\").unwrap()];
        assert!(matches!(
            NGramModel::parse(cut),
            Err(Error::MissingSection(_))
        ));
    }

    #[test]
    fn empty_block_accepted() {
        let text = "\\data\\\norder=2\nk=0.5\nngram 1=2\nngram 2=0\n\n\\1-grams:\n-0.3\ta\t1\n-0.3\t</s>\t1\n\n\\2-grams:\n\n\\end\\\n";
        let lm = NGramModel::parse(text).unwrap();
        // no bigram history seen, so bigram queries back off to the unigram
        let uni = lm.log_prob_at_order(&[], lm.word_id("a"), 1);
        assert_eq!(lm.log_prob(&[lm.word_id("a")], lm.word_id("a")), uni);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "\\data\\\norder=1\nk=0.5\nngram 1=1\n\\1-grams:\nnot-a-number\ta\t1\n\\end\\\n";
        match NGramModel::parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
    }
}
