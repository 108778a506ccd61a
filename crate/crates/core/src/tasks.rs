//! Benchmark dataset formats: CoNLL-U for tagging and NER, line-delimited
//! JSON for sentiment graphs, negation and sentence polarity.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("line {line}: {message}")]
    Conllu { line: usize, message: String },
    #[error("label {position}: `{label}` is not O, B-TYPE or I-TYPE with a known type")]
    Bio { position: usize, label: String },
    #[error("entity spans {first:?} and {second:?} overlap")]
    Overlap {
        first: (usize, usize),
        second: (usize, usize),
    },
    #[error("entity span ({start}, {end}) is outside a sentence of {len} tokens")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("line {line} (sent_id {sent_id}): {message}")]
    Record {
        line: usize,
        sent_id: String,
        message: String,
    },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("token `{token}` not found in text after character {from}")]
    Alignment { token: String, from: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

macro_rules! upos_tags {
    ($($tag:ident),* $(,)?) => {
        /// Universal POS categories.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Upos { $($tag),* }

        impl Upos {
            pub const ALL: [Upos; 17] = [$(Upos::$tag),*];

            pub fn as_str(&self) -> &'static str {
                match self { $(Upos::$tag => stringify!($tag)),* }
            }
        }

        impl FromStr for Upos {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $(stringify!($tag) => Ok(Upos::$tag),)*
                    _ => Err(format!("unknown UPOS tag `{s}`")),
                }
            }
        }
    };
}

upos_tags!(
    ADJ, ADP, ADV, AUX, CCONJ, DET, INTJ, NOUN, NUM, PART, PRON, PROPN, PUNCT, SCONJ, SYM, VERB, X,
);

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub upos: Vec<Upos>,
}

/// One syntactic word of a CoNLL-U sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConlluWord {
    pub form: String,
    pub upos: Upos,
    pub misc: String,
}

/// Reads CoNLL-U into sentences of syntactic words. Multiword-token ranges
/// (`1-2`) and empty nodes (`1.1`) are skipped.
pub fn read_conllu(reader: impl BufRead) -> Result<Vec<Vec<ConlluWord>>, TaskError> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() != 10 {
            return Err(TaskError::Conllu {
                line: lineno,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains(['-', '.']) {
            continue;
        }
        let upos = cols[3]
            .parse::<Upos>()
            .map_err(|message| TaskError::Conllu {
                line: lineno,
                message,
            })?;
        current.push(ConlluWord {
            form: cols[1].to_string(),
            upos,
            misc: cols[9].to_string(),
        });
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

pub fn parse_conllu(reader: impl BufRead) -> Result<Vec<TaggedSentence>, TaskError> {
    Ok(read_conllu(reader)?
        .into_iter()
        .map(|words| TaggedSentence {
            tokens: words.iter().map(|w| w.form.clone()).collect(),
            upos: words.iter().map(|w| w.upos).collect(),
        })
        .collect())
}

/// Named-entity types of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "PER")]
    Per,
    #[serde(rename = "ORG")]
    Org,
    #[serde(rename = "LOC")]
    Loc,
    #[serde(rename = "GPE-LOC")]
    GpeLoc,
    #[serde(rename = "GPE-ORG")]
    GpeOrg,
    #[serde(rename = "PROD")]
    Prod,
    #[serde(rename = "EVT")]
    Evt,
    #[serde(rename = "DRV")]
    Drv,
}

impl EntityType {
    pub const ALL: [EntityType; 8] = [
        EntityType::Per,
        EntityType::Org,
        EntityType::Loc,
        EntityType::GpeLoc,
        EntityType::GpeOrg,
        EntityType::Prod,
        EntityType::Evt,
        EntityType::Drv,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Org => "ORG",
            EntityType::Loc => "LOC",
            EntityType::GpeLoc => "GPE-LOC",
            EntityType::GpeOrg => "GPE-ORG",
            EntityType::Prod => "PROD",
            EntityType::Evt => "EVT",
            EntityType::Drv => "DRV",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = ();

    /// Accepts `GPE_LOC` as well as `GPE-LOC`.
    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.replace('_', "-");
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or(())
    }
}

/// Inclusive token span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: EntityType,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, label: EntityType) -> Self {
        EntitySpan { start, end, label }
    }
}

/// Decodes BIO labels into spans. An `I-X` that does not continue an open
/// `X` span starts a new one, as if it were `B-X`.
pub fn parse_bio<S: AsRef<str>>(labels: &[S]) -> Result<Vec<EntitySpan>, TaskError> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, EntityType)> = None;
    let close =
        |open: &mut Option<(usize, EntityType)>, end: usize, spans: &mut Vec<EntitySpan>| {
            if let Some((start, label)) = open.take() {
                spans.push(EntitySpan::new(start, end, label));
            }
        };
    for (i, label) in labels.iter().enumerate() {
        let label = label.as_ref();
        let bad = || TaskError::Bio {
            position: i,
            label: label.to_string(),
        };
        if label == "O" {
            close(&mut open, i.wrapping_sub(1), &mut spans);
            continue;
        }
        let (prefix, ty) = label.split_once('-').ok_or_else(bad)?;
        let ty: EntityType = ty.parse().map_err(|_| bad())?;
        match prefix {
            "B" => {
                close(&mut open, i.wrapping_sub(1), &mut spans);
                open = Some((i, ty));
            }
            "I" => {
                if open.map(|(_, t)| t) != Some(ty) {
                    close(&mut open, i.wrapping_sub(1), &mut spans);
                    open = Some((i, ty));
                }
            }
            _ => return Err(bad()),
        }
    }
    close(&mut open, labels.len().wrapping_sub(1), &mut spans);
    Ok(spans)
}

pub fn encode_bio(spans: &[EntitySpan], len: usize) -> Result<Vec<String>, TaskError> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    for s in &sorted {
        if s.start > s.end || s.end >= len {
            return Err(TaskError::SpanOutOfRange {
                start: s.start,
                end: s.end,
                len,
            });
        }
    }
    for w in sorted.windows(2) {
        if w[1].start <= w[0].end {
            return Err(TaskError::Overlap {
                first: (w[0].start, w[0].end),
                second: (w[1].start, w[1].end),
            });
        }
    }
    let mut labels = vec!["O".to_string(); len];
    for s in sorted {
        labels[s.start] = format!("B-{}", s.label);
        for l in &mut labels[s.start + 1..=s.end] {
            *l = format!("I-{}", s.label);
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NerSentence {
    pub tokens: Vec<String>,
    pub entities: Vec<EntitySpan>,
}

/// Reads NER annotation from the CoNLL-U MISC column (`name=B-PER`); words
/// without a `name` attribute are `O`.
pub fn parse_conllu_ner(reader: impl BufRead) -> Result<Vec<NerSentence>, TaskError> {
    read_conllu(reader)?
        .into_iter()
        .map(|words| {
            let labels: Vec<&str> = words
                .iter()
                .map(|w| {
                    w.misc
                        .split('|')
                        .find_map(|kv| kv.strip_prefix("name="))
                        .unwrap_or("O")
                })
                .collect();
            Ok(NerSentence {
                tokens: words.iter().map(|w| w.form.clone()).collect(),
                entities: parse_bio(&labels)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[serde(alias = "Positive")]
    Positive,
    #[serde(alias = "Negative")]
    Negative,
}

impl Polarity {
    pub const ALL: [Polarity; 2] = [Polarity::Positive, Polarity::Negative];

    pub fn as_str(&self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type TokenSet = BTreeSet<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentimentGraph {
    pub holder: TokenSet,
    pub target: TokenSet,
    pub expression: TokenSet,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NegationInstance {
    pub cue: TokenSet,
    pub scope: TokenSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceInfo {
    pub sent_id: String,
    #[serde(default)]
    pub text: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct SentimentRecord {
    #[serde(flatten)]
    info: SentenceInfo,
    #[serde(default)]
    opinions: Vec<SentimentGraph>,
}

#[derive(Debug, Deserialize)]
struct NegationRecord {
    #[serde(flatten)]
    info: SentenceInfo,
    #[serde(default)]
    negations: Vec<NegationInstance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceLabel {
    pub sent_id: String,
    #[serde(default)]
    pub text: String,
    pub label: Polarity,
}

pub type SentimentDataset = Vec<(SentenceInfo, Vec<SentimentGraph>)>;
pub type NegationDataset = Vec<(SentenceInfo, Vec<NegationInstance>)>;

fn read_jsonl<T, F>(reader: impl BufRead, mut handle: F) -> Result<Vec<T>, TaskError>
where
    T: serde::de::DeserializeOwned,
    F: FnMut(usize, &T) -> Result<(), TaskError>,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|source| TaskError::Json {
            line: i + 1,
            source,
        })?;
        handle(i + 1, &record)?;
        out.push(record);
    }
    Ok(out)
}

fn check_indices(
    line: usize,
    info: &SentenceInfo,
    what: &str,
    set: &TokenSet,
    non_empty: bool,
) -> Result<(), TaskError> {
    let fail = |message: String| TaskError::Record {
        line,
        sent_id: info.sent_id.clone(),
        message,
    };
    if non_empty && set.is_empty() {
        return Err(fail(format!("{what} is empty")));
    }
    if let Some(&max) = set.last() {
        if max >= info.tokens.len() {
            return Err(fail(format!(
                "{what} index {max} is out of range for {} tokens",
                info.tokens.len()
            )));
        }
    }
    Ok(())
}

pub fn parse_sentiment_graphs(reader: impl BufRead) -> Result<SentimentDataset, TaskError> {
    let records: Vec<SentimentRecord> = read_jsonl(reader, |line, r: &SentimentRecord| {
        for g in &r.opinions {
            check_indices(line, &r.info, "holder", &g.holder, false)?;
            check_indices(line, &r.info, "target", &g.target, false)?;
            check_indices(line, &r.info, "expression", &g.expression, true)?;
        }
        Ok(())
    })?;
    Ok(records.into_iter().map(|r| (r.info, r.opinions)).collect())
}

pub fn parse_negations(reader: impl BufRead) -> Result<NegationDataset, TaskError> {
    let records: Vec<NegationRecord> = read_jsonl(reader, |line, r: &NegationRecord| {
        for n in &r.negations {
            check_indices(line, &r.info, "cue", &n.cue, true)?;
            check_indices(line, &r.info, "scope", &n.scope, false)?;
        }
        Ok(())
    })?;
    Ok(records.into_iter().map(|r| (r.info, r.negations)).collect())
}

pub fn parse_sentence_labels(reader: impl BufRead) -> Result<Vec<SentenceLabel>, TaskError> {
    read_jsonl(reader, |_, _: &SentenceLabel| Ok(()))
}

/// Keeps sentences whose opinions all share one polarity; sentences with
/// mixed or no sentiment are dropped.
pub fn derive_sentence_labels(
    dataset: &[(SentenceInfo, Vec<SentimentGraph>)],
) -> Vec<SentenceLabel> {
    dataset
        .iter()
        .filter_map(|(info, graphs)| {
            let first = graphs.first()?.polarity;
            graphs
                .iter()
                .all(|g| g.polarity == first)
                .then(|| SentenceLabel {
                    sent_id: info.sent_id.clone(),
                    text: info.text.clone(),
                    label: first,
                })
        })
        .collect()
}

/// Character (not byte) offsets `[start, end)` of each token in `text`,
/// found left to right.
pub fn token_char_offsets<S: AsRef<str>>(
    text: &str,
    tokens: &[S],
) -> Result<Vec<(usize, usize)>, TaskError> {
    let mut offsets = Vec::with_capacity(tokens.len());
    let mut byte_cursor = 0;
    let mut char_cursor = 0;
    for token in tokens {
        let token = token.as_ref();
        let rest = &text[byte_cursor..];
        let found = rest.find(token).ok_or_else(|| TaskError::Alignment {
            token: token.to_string(),
            from: char_cursor,
        })?;
        let start = char_cursor + rest[..found].chars().count();
        let end = start + token.chars().count();
        offsets.push((start, end));
        byte_cursor += found + token.len();
        char_cursor = end;
    }
    Ok(offsets)
}

/// Tokens overlapping the character span `[start, end)`.
pub fn char_span_to_tokens(offsets: &[(usize, usize)], start: usize, end: usize) -> TokenSet {
    offsets
        .iter()
        .enumerate()
        .filter(|(_, &(s, e))| s < end && start < e)
        .map(|(i, _)| i)
        .collect()
}

/// Expected train/dev/test sentence counts for one benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub task: String,
    pub train: u64,
    pub dev: u64,
    pub test: u64,
}

impl SplitSpec {
    pub fn new(task: &str, train: u64, dev: u64, test: u64) -> Self {
        SplitSpec {
            task: task.to_string(),
            train,
            dev,
            test,
        }
    }
}

/// Built-in sentence counts of the seven benchmark datasets.
pub fn benchmark_splits() -> Vec<SplitSpec> {
    vec![
        SplitSpec::new("pos-bokmaal", 15_696, 2_409, 1_939),
        SplitSpec::new("pos-nynorsk", 14_174, 1_890, 1_511),
        SplitSpec::new("ner-bokmaal", 15_696, 2_409, 1_939),
        SplitSpec::new("ner-nynorsk", 14_174, 1_890, 1_511),
        SplitSpec::new("sentence-sa", 2_675, 516, 417),
        SplitSpec::new("fine-grained-sa", 8_543, 1_531, 1_272),
        SplitSpec::new("negation", 8_543, 1_531, 1_272),
    ]
}

pub fn find_split_spec(task: &str) -> Option<SplitSpec> {
    benchmark_splits().into_iter().find(|s| s.task == task)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: u64,
    pub dev: u64,
    pub test: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitCheck {
    pub split: &'static str,
    pub expected: u64,
    pub actual: u64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitReport {
    pub task: String,
    pub checks: Vec<SplitCheck>,
    pub pass: bool,
}

impl SplitReport {
    /// One line per failing split, e.g. `dev: expected 2409, found 2410 (+1)`.
    pub fn diff(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| {
                format!(
                    "{}: expected {}, found {} ({:+})",
                    c.split,
                    c.expected,
                    c.actual,
                    c.actual as i64 - c.expected as i64
                )
            })
            .collect()
    }
}

pub fn validate_splits(actual: SplitCounts, spec: &SplitSpec) -> SplitReport {
    let checks: Vec<SplitCheck> = [
        ("train", spec.train, actual.train),
        ("dev", spec.dev, actual.dev),
        ("test", spec.test, actual.test),
    ]
    .into_iter()
    .map(|(split, expected, actual)| SplitCheck {
        split,
        expected,
        actual,
        pass: expected == actual,
    })
    .collect();
    SplitReport {
        task: spec.task.clone(),
        pass: checks.iter().all(|c| c.pass),
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, form: &str, upos: &str, misc: &str) -> String {
        format!("{id}\t{form}\t_\t{upos}\t_\t_\t0\t_\t_\t{misc}\n")
    }

    #[test]
    fn conllu_basics() {
        assert!(parse_conllu("".as_bytes()).unwrap().is_empty());
        let text = format!(
            "# sent_id = 1\n{}{}{}\n",
            row("1-2", "hundenløper", "_", "_"),
            row("1", "hunden", "NOUN", "_"),
            row("2", "løper", "VERB", "_"),
        );
        let s = parse_conllu(text.as_bytes()).unwrap();
        assert_eq!(
            s,
            vec![TaggedSentence {
                tokens: vec!["hunden".into(), "løper".into()],
                upos: vec![Upos::NOUN, Upos::VERB],
            }]
        );
    }

    #[test]
    fn conllu_skips_empty_nodes_and_reports_bad_lines() {
        let text = format!("{}{}", row("1", "a", "X", "_"), row("1.1", "b", "_", "_"));
        assert_eq!(parse_conllu(text.as_bytes()).unwrap()[0].tokens, ["a"]);

        let text = format!("{}1\tb\t_\tX\t_\t_\t0\t_\t_\n", row("1", "a", "X", "_"));
        match parse_conllu(text.as_bytes()).unwrap_err() {
            TaskError::Conllu { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
        let text = row("1", "a", "NOUNISH", "_");
        assert!(matches!(
            parse_conllu(text.as_bytes()),
            Err(TaskError::Conllu { line: 1, .. })
        ));
    }

    #[test]
    fn bio_examples() {
        assert!(parse_bio(&["O", "O"]).unwrap().is_empty());
        assert_eq!(
            parse_bio(&["B-PER", "I-PER", "O", "B-ORG"]).unwrap(),
            vec![
                EntitySpan::new(0, 1, EntityType::Per),
                EntitySpan::new(3, 3, EntityType::Org)
            ]
        );
        assert_eq!(
            parse_bio(&["O", "I-LOC"]).unwrap(),
            vec![EntitySpan::new(1, 1, EntityType::Loc)]
        );
        assert_eq!(
            parse_bio(&["B-PER", "I-ORG"]).unwrap(),
            vec![
                EntitySpan::new(0, 0, EntityType::Per),
                EntitySpan::new(1, 1, EntityType::Org)
            ]
        );
        assert_eq!(
            parse_bio(&["B-GPE_LOC"]).unwrap()[0].label,
            EntityType::GpeLoc
        );
        assert!(matches!(
            parse_bio(&["O", "B-FOO"]),
            Err(TaskError::Bio { position: 1, .. })
        ));
        assert!(parse_bio(&["X-PER"]).is_err());
    }

    #[test]
    fn bio_encoding() {
        assert_eq!(encode_bio(&[], 3).unwrap(), ["O", "O", "O"]);
        assert_eq!(
            encode_bio(&[EntitySpan::new(0, 1, EntityType::Per)], 3).unwrap(),
            ["B-PER", "I-PER", "O"]
        );
        let overlapping = [
            EntitySpan::new(0, 2, EntityType::Per),
            EntitySpan::new(2, 3, EntityType::Org),
        ];
        assert!(matches!(
            encode_bio(&overlapping, 5),
            Err(TaskError::Overlap { .. })
        ));
        assert!(encode_bio(&[EntitySpan::new(1, 3, EntityType::Per)], 3).is_err());
    }

    #[test]
    fn ner_from_misc_column() {
        let text = format!(
            "{}{}{}",
            row("1", "Ola", "PROPN", "name=B-PER"),
            row("2", "Nordmann", "PROPN", "SpaceAfter=No|name=I-PER"),
            row("3", "Oslo", "PROPN", "name=B-GPE_LOC"),
        );
        let s = parse_conllu_ner(text.as_bytes()).unwrap();
        assert_eq!(
            s[0].entities,
            vec![
                EntitySpan::new(0, 1, EntityType::Per),
                EntitySpan::new(2, 2, EntityType::GpeLoc)
            ]
        );
    }

    const OPINION: &str = r#"{"sent_id":"s1","text":"a b c d e f","tokens":["a","b","c","d","e","f"],"opinions":[{"holder":[],"target":[2,3],"expression":[5],"polarity":"positive"}]}"#;

    #[test]
    fn sentiment_records() {
        let none = r#"{"sent_id":"s0","text":"x","tokens":["x"],"opinions":[]}"#;
        let data = parse_sentiment_graphs(format!("{none}\n{OPINION}\n").as_bytes()).unwrap();
        assert!(data[0].1.is_empty());
        let g = &data[1].1[0];
        assert!(g.holder.is_empty());
        assert_eq!(g.target, [2, 3].into_iter().collect());
        assert_eq!(g.polarity, Polarity::Positive);

        let bad = OPINION.replace("[5]", "[99]");
        let err = parse_sentiment_graphs(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("s1"));
        let empty_exp = OPINION.replace("[5]", "[]");
        assert!(parse_sentiment_graphs(empty_exp.as_bytes()).is_err());
        assert!(matches!(
            parse_sentiment_graphs("{".as_bytes()),
            Err(TaskError::Json { line: 1, .. })
        ));
    }

    #[test]
    fn negation_records() {
        let line =
            r#"{"sent_id":"n1","tokens":["ikke","bra"],"negations":[{"cue":[0],"scope":[1]}]}"#;
        let data = parse_negations(line.as_bytes()).unwrap();
        assert_eq!(data[0].1[0].cue, [0].into_iter().collect());
        let bad = line.replace("\"cue\":[0]", "\"cue\":[]");
        assert!(parse_negations(bad.as_bytes()).is_err());
    }

    fn graph(polarity: Polarity) -> SentimentGraph {
        SentimentGraph {
            holder: TokenSet::new(),
            target: TokenSet::new(),
            expression: [0].into_iter().collect(),
            polarity,
        }
    }

    #[test]
    fn sentence_label_derivation() {
        let info = |id: &str| SentenceInfo {
            sent_id: id.into(),
            text: String::new(),
            tokens: vec!["x".into()],
        };
        let data = vec![
            (
                info("mixed"),
                vec![graph(Polarity::Positive), graph(Polarity::Negative)],
            ),
            (
                info("pos"),
                vec![graph(Polarity::Positive), graph(Polarity::Positive)],
            ),
            (info("none"), vec![]),
        ];
        let labels = derive_sentence_labels(&data);
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].sent_id, "pos");
        assert_eq!(labels[0].label, Polarity::Positive);
    }

    #[test]
    fn char_offsets() {
        let text = "Blå hus, ja";
        let tokens = ["Blå", "hus", ",", "ja"];
        let offsets = token_char_offsets(text, &tokens).unwrap();
        assert_eq!(offsets, vec![(0, 3), (4, 7), (7, 8), (9, 11)]);
        assert_eq!(
            char_span_to_tokens(&offsets, 0, 7),
            [0, 1].into_iter().collect()
        );
        assert!(token_char_offsets(text, &["nei"]).is_err());
    }

    #[test]
    fn split_table() {
        let pos = find_split_spec("pos-bokmaal").unwrap();
        assert_eq!((pos.train, pos.dev, pos.test), (15_696, 2_409, 1_939));
        let neg = find_split_spec("negation").unwrap();
        assert_eq!((neg.train, neg.dev, neg.test), (8_543, 1_531, 1_272));
        let spec = SplitSpec::new("toy", 2, 1, 1);
        let ok = validate_splits(
            SplitCounts {
                train: 2,
                dev: 1,
                test: 1,
            },
            &spec,
        );
        assert!(ok.pass && ok.diff().is_empty());
        let bad = validate_splits(
            SplitCounts {
                train: 2,
                dev: 2,
                test: 1,
            },
            &spec,
        );
        assert!(!bad.pass);
        assert_eq!(bad.diff(), vec!["dev: expected 1, found 2 (+1)"]);
    }
}
