//! Letter-level CTC: forward-backward loss with exact gradients, greedy
//! decoding, and a brute-force alignment enumerator used as a test oracle.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::aggloss::Emissions;
use crate::error::{Error, Result};
use crate::matrix::{log_add, Matrix};
use crate::worddecode::collapse_argmax;

pub const SEPARATOR: char = '|';

/// Letters, then the word separator, then an implicit blank (id = `len()`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LetterAlphabet {
    symbols: Vec<char>,
    index: HashMap<char, usize>,
}

impl LetterAlphabet {
    /// Sorted unique letters of `words` followed by the separator.
    pub fn from_words<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut letters = BTreeSet::new();
        for w in words {
            let w = w.as_ref();
            if w == crate::vocab::UNK {
                continue;
            }
            for ch in w.chars() {
                if ch == SEPARATOR || ch.is_whitespace() {
                    return Err(Error::invalid(format!("word {w:?} contains {ch:?}")));
                }
                letters.insert(ch);
            }
        }
        let mut symbols: Vec<char> = letters.into_iter().collect();
        symbols.push(SEPARATOR);
        Ok(Self::from_symbols(symbols))
    }

    fn from_symbols(symbols: Vec<char>) -> Self {
        let index = symbols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        LetterAlphabet { symbols, index }
    }

    /// Number of symbols including the separator, excluding blank.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_classes(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn blank_id(&self) -> usize {
        self.symbols.len()
    }

    pub fn separator_id(&self) -> usize {
        self.index[&SEPARATOR]
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn id(&self, ch: char) -> Option<usize> {
        self.index.get(&ch).copied()
    }

    /// Spells each word followed by the separator: `["w07"]` -> `w 0 7 |`.
    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Result<CtcTarget> {
        let mut symbols = Vec::new();
        for w in words {
            for ch in w.as_ref().chars() {
                let id = self
                    .id(ch)
                    .filter(|&id| id != self.separator_id())
                    .ok_or_else(|| Error::invalid(format!("symbol {ch:?} not in alphabet")))?;
                symbols.push(id);
            }
            symbols.push(self.separator_id());
        }
        Ok(CtcTarget { symbols })
    }

    /// Splits a symbol sequence on separators, dropping empty words.
    pub fn decode_words(&self, target: &CtcTarget) -> Vec<String> {
        let mut words = Vec::new();
        let mut current = String::new();
        for &id in &target.symbols {
            if id == self.separator_id() {
                if !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
            } else if let Some(&ch) = self.symbols.get(id) {
                current.push(ch);
            }
        }
        if !current.is_empty() {
            words.push(current);
        }
        words
    }

    pub fn to_text(&self) -> String {
        self.symbols.iter().map(|c| format!("{c}\n")).collect()
    }

    /// One symbol per line; must contain the separator; blank is implicit.
    pub fn parse(text: &str) -> Result<Self> {
        let mut symbols = Vec::new();
        let mut seen = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.trim_end_matches('\r');
            let mut chars = line.chars();
            let ch = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(Error::parse(lineno, "expected exactly one symbol")),
            };
            if ch.is_whitespace() {
                return Err(Error::parse(lineno, "whitespace symbol"));
            }
            if let Some(prev) = seen.insert(ch, lineno) {
                return Err(Error::parse(
                    lineno,
                    format!("duplicate symbol {ch:?} (first on line {prev})"),
                ));
            }
            symbols.push(ch);
        }
        if !seen.contains_key(&SEPARATOR) {
            return Err(Error::MissingSection("separator \"|\"".into()));
        }
        Ok(Self::from_symbols(symbols))
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

/// Label sequence without blanks.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct CtcTarget {
    pub symbols: Vec<usize>,
}

impl CtcTarget {
    pub fn new(symbols: Vec<usize>) -> Self {
        CtcTarget { symbols }
    }

    /// `|target|` plus one extra frame per adjacent repeated symbol.
    pub fn min_frames(&self) -> usize {
        let repeats = self.symbols.windows(2).filter(|w| w[0] == w[1]).count();
        self.symbols.len() + repeats
    }
}

fn validate(emissions: &Emissions, target: &CtcTarget) -> Result<usize> {
    let blank = emissions.num_classes() - 1;
    if let Some(&bad) = target.symbols.iter().find(|&&s| s >= blank) {
        return Err(Error::invalid(format!(
            "target symbol {bad} not below blank id {blank}"
        )));
    }
    let required = target.min_frames();
    if emissions.num_frames() < required {
        return Err(Error::TargetUnalignable {
            required,
            available: emissions.num_frames(),
        });
    }
    Ok(blank)
}

/// Negative log-likelihood of `target` summed over all alignments, and its
/// gradient with respect to the logits that produced `emissions`.
pub fn ctc_loss(emissions: &Emissions, target: &CtcTarget) -> Result<(f64, Matrix)> {
    let blank = validate(emissions, target)?;
    let t_len = emissions.num_frames();
    let ext: Vec<usize> = std::iter::once(blank)
        .chain(target.symbols.iter().flat_map(|&s| [s, blank]))
        .collect();
    let s_len = ext.len();
    // skip transition s-2 -> s allowed for non-blank labels differing from s-2
    let skip: Vec<bool> = (0..s_len)
        .map(|s| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2])
        .collect();
    let lp = emissions.log_probs();
    let neg = f64::NEG_INFINITY;

    let mut alpha = Matrix::from_vec(t_len, s_len, vec![neg; t_len * s_len]);
    alpha.set(0, 0, lp.get(0, ext[0]));
    if s_len > 1 {
        alpha.set(0, 1, lp.get(0, ext[1]));
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut acc = alpha.get(t - 1, s);
            if s >= 1 {
                acc = log_add(acc, alpha.get(t - 1, s - 1));
            }
            if skip[s] {
                acc = log_add(acc, alpha.get(t - 1, s - 2));
            }
            if acc != neg {
                alpha.set(t, s, acc + lp.get(t, ext[s]));
            }
        }
    }
    let last = t_len - 1;
    let log_p = if s_len > 1 {
        log_add(alpha.get(last, s_len - 1), alpha.get(last, s_len - 2))
    } else {
        alpha.get(last, 0)
    };
    if !log_p.is_finite() {
        return Err(Error::TargetUnalignable {
            required: target.min_frames(),
            available: t_len,
        });
    }

    // beta(t, s): log-probability of the remaining frames t+1.. given state s at t
    let mut beta = Matrix::from_vec(t_len, s_len, vec![neg; t_len * s_len]);
    beta.set(last, s_len - 1, 0.0);
    if s_len > 1 {
        beta.set(last, s_len - 2, 0.0);
    }
    for t in (0..last).rev() {
        for s in 0..s_len {
            let mut acc = beta.get(t + 1, s) + lp.get(t + 1, ext[s]);
            if s + 1 < s_len {
                acc = log_add(acc, beta.get(t + 1, s + 1) + lp.get(t + 1, ext[s + 1]));
            }
            if s + 2 < s_len && skip[s + 2] {
                acc = log_add(acc, beta.get(t + 1, s + 2) + lp.get(t + 1, ext[s + 2]));
            }
            beta.set(t, s, acc);
        }
    }

    let c = emissions.num_classes();
    let mut grad = Matrix::zeros(t_len, c);
    for t in 0..t_len {
        let g = grad.row_mut(t);
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = lp.get(t, k).exp();
        }
        for s in 0..s_len {
            let a = alpha.get(t, s);
            let b = beta.get(t, s);
            if a != neg && b != neg {
                g[ext[s]] -= (a + b - log_p).exp();
            }
        }
    }
    Ok((-log_p, grad))
}

pub const BRUTE_FORCE_MAX_FRAMES: usize = 10;
pub const BRUTE_FORCE_MAX_CLASSES: usize = 8;

/// Sums the probability of every frame labeling that collapses to `target`
/// by walking the labeling tree frame by frame. Branches whose collapsed
/// prefix already disagrees with the target are cut, since none of their
/// completions can contribute. Returns `-ln` of the total.
pub fn ctc_brute_force(emissions: &Emissions, target: &CtcTarget) -> Result<f64> {
    if emissions.num_frames() > BRUTE_FORCE_MAX_FRAMES
        || emissions.num_classes() > BRUTE_FORCE_MAX_CLASSES
    {
        return Err(Error::BoundExceeded(format!(
            "brute force needs T <= {BRUTE_FORCE_MAX_FRAMES} and C <= {BRUTE_FORCE_MAX_CLASSES}"
        )));
    }
    let blank = validate(emissions, target)?;
    let probs = emissions.probs();

    fn walk(
        t: usize,
        matched: usize,
        last: usize,
        mass: f64,
        probs: &Matrix,
        target: &[usize],
        blank: usize,
    ) -> f64 {
        if t == probs.rows() {
            return if matched == target.len() { mass } else { 0.0 };
        }
        let mut total = 0.0;
        for c in 0..probs.cols() {
            let next = if c == blank {
                Some((matched, blank))
            } else if c == last {
                Some((matched, c))
            } else if matched < target.len() && target[matched] == c {
                Some((matched + 1, c))
            } else {
                None
            };
            if let Some((m, l)) = next {
                total += walk(t + 1, m, l, mass * probs.get(t, c), probs, target, blank);
            }
        }
        total
    }

    let total = walk(0, 0, blank, 1.0, &probs, &target.symbols, blank);
    if total <= 0.0 {
        return Err(Error::TargetUnalignable {
            required: target.min_frames(),
            available: emissions.num_frames(),
        });
    }
    Ok(-total.ln())
}

/// Argmax per frame, collapse repeats, drop blanks.
pub fn ctc_greedy_decode(emissions: &Emissions, alphabet: &LetterAlphabet) -> Result<CtcTarget> {
    if emissions.num_classes() != alphabet.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: alphabet.num_classes(),
            actual: emissions.num_classes(),
        });
    }
    Ok(CtcTarget::new(collapse_argmax(
        emissions,
        alphabet.blank_id(),
    )))
}
