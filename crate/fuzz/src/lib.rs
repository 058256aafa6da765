//! Parser checks shared by the fuzz targets and the corpus replay test.
//! Each accepts arbitrary bytes; anything that parses must survive a
//! write/parse round trip unchanged. The return value says whether the
//! input parsed.

use wordbag::ctc::LetterAlphabet;
use wordbag::encoder::{decode_checkpoint, encode_checkpoint};
use wordbag::ngramlm::NGramModel;
use wordbag::pipeline::PipelineConfig;
use wordbag::synthdata::{parse_dataset, write_dataset};
use wordbag::vocab::Vocabulary;
use wordbag::worddecode::{parse_pseudo_labels, write_pseudo_labels};

/// Asserts that `write(parse(text))` is a fixed point of `write . parse`.
fn fixpoint<T>(
    data: &[u8],
    parse: impl Fn(&str) -> wordbag::Result<T>,
    write: impl Fn(&T) -> String,
) -> bool {
    let Ok(text) = std::str::from_utf8(data) else {
        return false;
    };
    let Ok(value) = parse(text) else { return false };
    let once = write(&value);
    let again = parse(&once).expect("written form must parse");
    assert_eq!(once, write(&again));
    true
}

pub fn vocab_file(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else {
        return false;
    };
    let Ok(v) = Vocabulary::parse(text) else {
        return false;
    };
    assert_eq!(Vocabulary::parse(&v.to_text()).unwrap(), v);
    true
}

pub fn alphabet_file(data: &[u8]) -> bool {
    fixpoint(data, LetterAlphabet::parse, LetterAlphabet::to_text)
}

pub fn arpa_model(data: &[u8]) -> bool {
    fixpoint(data, NGramModel::parse, NGramModel::to_text)
}

pub fn dataset_jsonl(data: &[u8]) -> bool {
    fixpoint(data, parse_dataset, |s| write_dataset(s))
}

pub fn pseudolabel_jsonl(data: &[u8]) -> bool {
    fixpoint(data, parse_pseudo_labels, |r| write_pseudo_labels(r))
}

pub fn checkpoint(data: &[u8]) -> bool {
    let Ok(params) = decode_checkpoint(data) else {
        return false;
    };
    let bytes = encode_checkpoint(&params);
    let again = decode_checkpoint(&bytes).expect("encoded checkpoint must decode");
    assert_eq!(bytes, encode_checkpoint(&again));
    true
}

pub fn config(data: &[u8]) -> bool {
    fixpoint(data, PipelineConfig::parse, PipelineConfig::to_toml)
}
