//! Rule-based parsing of transcribed controller utterances.
//!
//! Keyword groups, spoken digits, and phonetic letters live in
//! `data/phraseology.toml`; airline aliases in `data/callsigns.csv`. Both can be
//! replaced at runtime without rebuilding.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::Channel;

const DEFAULT_PHRASEOLOGY: &str = include_str!("../data/phraseology.toml");
const DEFAULT_CALLSIGNS: &str = include_str!("../data/callsigns.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Atco,
    Pilot,
    Unknown,
}

impl std::str::FromStr for Speaker {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "atco" => Ok(Speaker::Atco),
            "pilot" => Ok(Speaker::Pilot),
            "unknown" | "" => Ok(Speaker::Unknown),
            other => Err(format!("unknown speaker {other:?}")),
        }
    }
}

impl Speaker {
    fn as_str(self) -> &'static str {
        match self {
            Speaker::Atco => "atco",
            Speaker::Pilot => "pilot",
            Speaker::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptUtterance {
    pub start_t: f64,
    pub duration_s: f64,
    pub speaker: Speaker,
    pub text: String,
}

impl TranscriptUtterance {
    pub fn tokens(&self) -> Vec<String> {
        tokenize(&self.text)
    }
}

/// Lowercase word tokens with punctuation stripped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
    None,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandFlags {
    pub conditional: bool,
    pub compound: bool,
}

impl CommandFlags {
    pub fn any(&self) -> bool {
        self.conditional || self.compound
    }

    /// Exclusion reason, e.g. `conditional` or `conditional+compound`.
    pub fn reason(&self) -> Option<String> {
        match (self.conditional, self.compound) {
            (false, false) => None,
            (true, false) => Some("conditional".into()),
            (false, true) => Some("compound".into()),
            (true, true) => Some("conditional+compound".into()),
        }
    }
}

/// A structured controller instruction. `value` is absent only for flagged
/// (conditional/compound) utterances whose number could not be read; such
/// commands never survive [`filter_commands`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedCommand {
    pub callsign: String,
    pub ctype: Channel,
    pub value: Option<i64>,
    pub direction: Direction,
    pub start_t: f64,
    pub duration_s: f64,
    pub flags: CommandFlags,
}

impl ParsedCommand {
    pub fn end_t(&self) -> f64 {
        self.start_t + self.duration_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum ParseError {
    #[error("no callsign")]
    NoCallsign,
    #[error("no command keyword")]
    NotACommand,
    #[error("command without a readable value")]
    MissingValue,
    #[error("utterance is not from the controller")]
    WrongSpeaker,
}

#[derive(Debug, Clone, Deserialize)]
struct PhraseologyFile {
    keywords: KeywordFile,
    digits: BTreeMap<String, u32>,
    multipliers: BTreeMap<String, u64>,
    letters: BTreeMap<String, char>,
}

#[derive(Debug, Clone, Deserialize)]
struct KeywordFile {
    altitude: Vec<String>,
    speed: Vec<String>,
    heading: Vec<String>,
    conditional: Vec<String>,
}

/// Keyword groups and number vocabulary.
#[derive(Debug, Clone)]
pub struct Phraseology {
    groups: Vec<(Channel, Vec<Vec<String>>)>,
    conditional: Vec<String>,
    digits: HashMap<String, u32>,
    multipliers: HashMap<String, u64>,
    letters: HashMap<String, char>,
    digit_words: [String; 10],
    letter_words: BTreeMap<char, String>,
}

impl Default for Phraseology {
    fn default() -> Self {
        Phraseology::from_toml(DEFAULT_PHRASEOLOGY).expect("bundled phraseology table is valid")
    }
}

impl Phraseology {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: PhraseologyFile =
            toml::from_str(text).map_err(|e| Error::BadConfig(format!("phraseology: {e}")))?;
        let split = |v: &[String]| -> Vec<Vec<String>> {
            v.iter().map(|k| k.split_whitespace().map(str::to_owned).collect()).collect()
        };
        let groups = vec![
            (Channel::Altitude, split(&file.keywords.altitude)),
            (Channel::Speed, split(&file.keywords.speed)),
            (Channel::Heading, split(&file.keywords.heading)),
        ];
        let mut digit_words: [String; 10] = Default::default();
        // canonical spoken digit: the alphabetically first word per digit that
        // is also the common one ("nine" over "niner" etc.)
        for d in 0..10u32 {
            let canonical = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"]
                [d as usize];
            let word = if file.digits.get(canonical) == Some(&d) {
                canonical.to_owned()
            } else {
                file.digits
                    .iter()
                    .find(|(_, &v)| v == d)
                    .map(|(k, _)| k.clone())
                    .ok_or_else(|| Error::BadConfig(format!("phraseology: no word for digit {d}")))?
            };
            digit_words[d as usize] = word;
        }
        let mut letter_words = BTreeMap::new();
        for (word, &c) in &file.letters {
            letter_words.entry(c).or_insert_with(|| word.clone());
        }
        Ok(Phraseology {
            groups,
            conditional: file.keywords.conditional,
            digits: file.digits.into_iter().collect(),
            multipliers: file.multipliers.into_iter().collect(),
            letters: file.letters.into_iter().collect(),
            digit_words,
            letter_words,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Drops `maintain` from the altitude group.
    pub fn without_bare_maintain(mut self) -> Self {
        for (ch, kws) in &mut self.groups {
            if *ch == Channel::Altitude {
                kws.retain(|k| k != &["maintain"]);
            }
        }
        self
    }

    fn digit(&self, tok: &str) -> Option<u32> {
        self.digits.get(tok).copied()
    }

    fn is_number_token(&self, tok: &str) -> bool {
        self.digits.contains_key(tok) || self.multipliers.contains_key(tok)
    }

    fn digit_word(&self, d: u32) -> &str {
        &self.digit_words[d as usize]
    }

    /// Every (position, group, keyword length) hit in `tokens`, left to right.
    fn keyword_hits(&self, tokens: &[String]) -> Vec<(usize, Channel, usize)> {
        let mut hits = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut best: Option<(Channel, usize)> = None;
            for (ch, kws) in &self.groups {
                for kw in kws {
                    if tokens[i..].starts_with(kw) && best.is_none_or(|(_, l)| kw.len() > l) {
                        best = Some((*ch, kw.len()));
                    }
                }
            }
            match best {
                Some((ch, len)) => {
                    hits.push((i, ch, len));
                    i += len;
                }
                None => i += 1,
            }
        }
        hits
    }
}

/// Spoken airline alias to ICAO designator.
#[derive(Debug, Clone)]
pub struct CallsignTable {
    /// alias tokens -> code, in file order
    entries: Vec<(Vec<String>, String)>,
    by_alias: HashMap<Vec<String>, String>,
    max_alias_len: usize,
}

impl Default for CallsignTable {
    fn default() -> Self {
        CallsignTable::from_csv(DEFAULT_CALLSIGNS.as_bytes()).expect("bundled callsign table is valid")
    }
}

impl CallsignTable {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut entries = Vec::new();
        let mut by_alias = HashMap::new();
        for (alias, code) in pairs {
            let tokens = tokenize(&alias);
            if tokens.is_empty() {
                return Err(Error::BadConfig("empty airline alias".into()));
            }
            if code.len() != 3 || !code.chars().all(|c| c.is_ascii_uppercase()) {
                return Err(Error::BadConfig(format!("ICAO code {code:?} must be three uppercase letters")));
            }
            if by_alias.insert(tokens.clone(), code.clone()).is_some() {
                return Err(Error::BadConfig(format!("duplicate airline alias {alias:?}")));
            }
            entries.push((tokens, code));
        }
        let max_alias_len = entries.iter().map(|(t, _)| t.len()).max().unwrap_or(0);
        Ok(CallsignTable { entries, by_alias, max_alias_len })
    }

    /// Reads `alias,icao` rows.
    pub fn from_csv<R: Read>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            alias: String,
            icao: String,
        }
        let mut rdr = csv::Reader::from_reader(r);
        let rows: Vec<Row> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        Self::new(rows.into_iter().map(|r| (r.alias, r.icao)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["alias", "icao"])?;
        for (alias, code) in &self.entries {
            wtr.write_record([alias.join(" "), code.clone()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// First alias listed for `code`.
    pub fn alias_for(&self, code: &str) -> Option<&[String]> {
        self.entries.iter().find(|(_, c)| c == code).map(|(a, _)| a.as_slice())
    }

    pub fn codes(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for (_, c) in &self.entries {
            if !seen.contains(&c.as_str()) {
                seen.push(c.as_str());
            }
        }
        seen
    }
}

fn bare_icao_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^([a-z]{3})([0-9]{1,4}[a-z]{0,2})$").expect("valid regex"))
}

/// Reads the callsign at the front of `tokens`: the longest airline alias
/// followed by spoken digits and optional phonetic suffix letters, or a literal
/// ICAO designator such as `sia631`. Returns the identifier and the unconsumed tail.
pub fn parse_callsign<'a>(
    tokens: &'a [String],
    table: &CallsignTable,
    phr: &Phraseology,
) -> std::result::Result<(String, &'a [String]), ParseError> {
    for len in (1..=table.max_alias_len.min(tokens.len())).rev() {
        let Some(code) = table.by_alias.get(&tokens[..len]) else {
            continue;
        };
        let mut i = len;
        let mut ident = code.clone();
        while i < tokens.len() && i - len < 4 {
            match phr.digit(&tokens[i]) {
                Some(d) => {
                    ident.push(char::from_digit(d, 10).expect("digit"));
                    i += 1;
                }
                None => break,
            }
        }
        if i == len {
            continue;
        }
        let digits_end = i;
        while i < tokens.len() && i - digits_end < 2 {
            match phr.letters.get(&tokens[i]) {
                Some(&c) => {
                    ident.push(c);
                    i += 1;
                }
                None => break,
            }
        }
        return Ok((ident, &tokens[i..]));
    }
    if let Some(first) = tokens.first() {
        if bare_icao_pattern().is_match(first) {
            return Ok((first.to_ascii_uppercase(), &tokens[1..]));
        }
    }
    Err(ParseError::NoCallsign)
}

/// Reads a run of number words starting at `i`; returns (value, tokens used).
fn read_number(tokens: &[String], i: usize, phr: &Phraseology) -> Option<(i64, usize)> {
    let mut total: i64 = 0;
    let mut current: Option<i64> = None;
    let mut j = i;
    while j < tokens.len() && phr.is_number_token(&tokens[j]) {
        let tok = &tokens[j];
        if let Some(d) = phr.digit(tok) {
            current = Some(current.unwrap_or(0).checked_mul(10)?.checked_add(d as i64)?);
        } else if let Some(&m) = phr.multipliers.get(tok) {
            total = total.checked_add(current.unwrap_or(1).checked_mul(m as i64)?)?;
            current = None;
        }
        j += 1;
    }
    if j == i {
        return None;
    }
    Some((total + current.unwrap_or(0), j - i))
}

pub fn command_flags(tail: &[String], phr: &Phraseology) -> CommandFlags {
    let hits = phr.keyword_hits(tail);
    let mut groups: Vec<Channel> = hits.iter().map(|h| h.1).collect();
    groups.sort();
    groups.dedup();
    CommandFlags {
        conditional: tail.iter().any(|t| phr.conditional.contains(t)),
        compound: groups.len() >= 2,
    }
}

fn value_in_range(ctype: Channel, v: i64) -> Option<i64> {
    match ctype {
        Channel::Altitude => (0..=60_000).contains(&v).then_some(v),
        Channel::Speed => (80..=600).contains(&v).then_some(v),
        Channel::Heading => match v {
            360 => Some(0),
            0..=359 => Some(v),
            _ => None,
        },
    }
}

pub fn parse_utterance(
    u: &TranscriptUtterance,
    table: &CallsignTable,
    phr: &Phraseology,
) -> std::result::Result<ParsedCommand, ParseError> {
    if u.speaker != Speaker::Atco {
        return Err(ParseError::WrongSpeaker);
    }
    let tokens = u.tokens();
    let (callsign, tail) = parse_callsign(&tokens, table, phr)?;
    let hits = phr.keyword_hits(tail);
    let &(first_pos, ctype, _) = hits.first().ok_or(ParseError::NotACommand)?;
    let flags = command_flags(tail, phr);

    let mut value = None;
    let mut j = first_pos;
    while j < tail.len() {
        if let Some((v, _)) = read_number(tail, j, phr) {
            let flight_level = j >= 2 && tail[j - 2] == "flight" && tail[j - 1] == "level";
            let v = if flight_level { v.checked_mul(100) } else { Some(v) };
            value = v.and_then(|v| value_in_range(ctype, v));
            break;
        }
        j += 1;
    }
    if value.is_none() && !flags.any() {
        return Err(ParseError::MissingValue);
    }

    let direction = if ctype == Channel::Heading {
        tail.iter()
            .find_map(|t| match t.as_str() {
                "left" => Some(Direction::Left),
                "right" => Some(Direction::Right),
                _ => None,
            })
            .unwrap_or(Direction::None)
    } else {
        Direction::None
    };

    Ok(ParsedCommand {
        callsign,
        ctype,
        value,
        direction,
        start_t: u.start_t,
        duration_s: u.duration_s,
        flags,
    })
}

/// Splits parsed commands into (kept, excluded); flagged commands are excluded.
pub fn filter_commands(cmds: Vec<ParsedCommand>) -> (Vec<ParsedCommand>, Vec<ParsedCommand>) {
    cmds.into_iter().partition(|c| !c.flags.any() && c.value.is_some())
}

fn spoken_digits(n: i64, width: usize, phr: &Phraseology) -> Vec<String> {
    format!("{n:0width$}")
        .chars()
        .map(|c| phr.digit_word(c.to_digit(10).expect("decimal digit")).to_owned())
        .collect()
}

/// Altitude below the transition level: "three thousand five hundred".
fn spoken_altitude(v: i64, phr: &Phraseology) -> Vec<String> {
    if v % 100 != 0 || v == 0 {
        return spoken_digits(v, 1, phr);
    }
    let thousands = v / 1000;
    let hundreds = (v % 1000) / 100;
    let mut words = Vec::new();
    if thousands > 0 {
        words.extend(spoken_digits(thousands, 1, phr));
        words.push("thousand".into());
    }
    if hundreds > 0 {
        words.push(phr.digit_word(hundreds as u32).to_owned());
        words.push("hundred".into());
    }
    words
}

/// Levels at or above this are spoken as flight levels.
pub const TRANSITION_ALTITUDE_FT: i64 = 11_000;

/// Canonical phraseology for a clean command. `increasing` picks climb/increase
/// over descend/reduce.
pub fn render_command(
    cmd: &ParsedCommand,
    increasing: bool,
    table: &CallsignTable,
    phr: &Phraseology,
) -> Option<String> {
    let value = cmd.value?;
    let code = cmd.callsign.get(..3)?;
    let rest = &cmd.callsign[3..];
    let mut words: Vec<String> = table.alias_for(code)?.to_vec();
    for c in rest.chars() {
        match c.to_digit(10) {
            Some(d) => words.push(phr.digit_word(d).to_owned()),
            None => words.push(phr.letter_words.get(&c)?.clone()),
        }
    }
    match cmd.ctype {
        Channel::Altitude => {
            words.push(if increasing { "climb" } else { "descend" }.into());
            words.push("to".into());
            if value >= TRANSITION_ALTITUDE_FT && value % 100 == 0 {
                words.push("flight".into());
                words.push("level".into());
                words.extend(spoken_digits(value / 100, 3, phr));
            } else {
                words.extend(spoken_altitude(value, phr));
            }
        }
        Channel::Speed => {
            words.push(if increasing { "increase" } else { "reduce" }.into());
            words.push("speed".into());
            words.push("to".into());
            words.extend(spoken_digits(value, 1, phr));
        }
        Channel::Heading => {
            match cmd.direction {
                Direction::Left => words.extend(["turn".into(), "left".into()]),
                Direction::Right => words.extend(["turn".into(), "right".into()]),
                Direction::None => words.push("fly".into()),
            }
            words.push("heading".into());
            words.extend(spoken_digits(value, 3, phr));
        }
    }
    Some(words.join(" "))
}

/// One transcript line and what the parser made of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseRecord {
    pub utterance: TranscriptUtterance,
    pub outcome: std::result::Result<ParsedCommand, ParseError>,
    pub excluded: bool,
    pub reason: Option<String>,
}

pub fn parse_transcript(
    utterances: &[TranscriptUtterance],
    table: &CallsignTable,
    phr: &Phraseology,
) -> Vec<ParseRecord> {
    crate::par::map(utterances, |u| {
        let outcome = parse_utterance(u, table, phr);
        let (excluded, reason) = match &outcome {
            Ok(cmd) => {
                let (kept, _) = filter_commands(vec![cmd.clone()]);
                (kept.is_empty(), cmd.flags.reason())
            }
            Err(_) => (true, None),
        };
        ParseRecord { utterance: u.clone(), outcome, excluded, reason }
    })
}

pub const TRANSCRIPT_HEADER: &str = "start_t\tduration_s\tspeaker\ttext";

/// Reads `start_t<TAB>duration_s<TAB>speaker<TAB>text`; a header line is optional.
pub fn read_transcript<R: BufRead>(r: R) -> Result<Vec<TranscriptUtterance>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || (n == 0 && line.starts_with("start_t")) {
            continue;
        }
        let bad = |msg: &str| Error::Format { path: format!("transcript line {}", n + 1), msg: msg.into() };
        let mut cols = line.splitn(4, '\t');
        let start_t: f64 = cols.next().and_then(|c| c.trim().parse().ok()).ok_or_else(|| bad("start_t"))?;
        let duration_s: f64 =
            cols.next().and_then(|c| c.trim().parse().ok()).ok_or_else(|| bad("duration_s"))?;
        let speaker: Speaker = cols.next().ok_or_else(|| bad("speaker"))?.parse().map_err(|e: String| bad(&e))?;
        let text = cols.next().ok_or_else(|| bad("text"))?.trim().to_owned();
        if !(duration_s > 0.0) {
            return Err(bad("duration_s must be positive"));
        }
        out.push(TranscriptUtterance { start_t, duration_s, speaker, text });
    }
    Ok(out)
}

pub fn write_transcript<W: Write>(mut w: W, utterances: &[TranscriptUtterance]) -> Result<()> {
    writeln!(w, "{TRANSCRIPT_HEADER}")?;
    for u in utterances {
        writeln!(w, "{}\t{}\t{}\t{}", u.start_t, u.duration_s, u.speaker.as_str(), u.text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utter(text: &str) -> TranscriptUtterance {
        TranscriptUtterance { start_t: 100.0, duration_s: 3.0, speaker: Speaker::Atco, text: text.into() }
    }

    fn parse(text: &str) -> std::result::Result<ParsedCommand, ParseError> {
        parse_utterance(&utter(text), &CallsignTable::default(), &Phraseology::default())
    }

    #[test]
    fn callsign_prefix_and_tail() {
        let toks = tokenize("speedbird one two three turn left heading zero");
        let (cs, tail) = parse_callsign(&toks, &CallsignTable::default(), &Phraseology::default()).unwrap();
        assert_eq!(cs, "BAW123");
        assert_eq!(tail.join(" "), "turn left heading zero");
    }

    #[test]
    fn callsign_variants() {
        let table = CallsignTable::default();
        let phr = Phraseology::default();
        let toks = tokenize("air china four five alfa bravo descend");
        assert_eq!(parse_callsign(&toks, &table, &phr).unwrap().0, "CCA45AB");
        let toks = tokenize("sia631 descend to flight level one one zero");
        assert_eq!(parse_callsign(&toks, &table, &phr).unwrap().0, "SIA631");
        assert_eq!(parse_callsign(&[], &table, &phr), Err(ParseError::NoCallsign));
        let toks = tokenize("speedbird descend");
        assert_eq!(parse_callsign(&toks, &table, &phr), Err(ParseError::NoCallsign));
    }

    #[test]
    fn number_words() {
        let phr = Phraseology::default();
        let n = |s: &str| read_number(&tokenize(s), 0, &phr).map(|x| x.0);
        assert_eq!(n("three thousand"), Some(3000));
        assert_eq!(n("three thousand five hundred"), Some(3500));
        assert_eq!(n("one one thousand"), Some(11000));
        assert_eq!(n("one eight zero"), Some(180));
        assert_eq!(n("niner zero"), Some(90));
        assert_eq!(n("to"), None);
    }

    #[test]
    fn flight_level_in_feet() {
        let c = parse("singapore six three one climb to flight level one one zero").unwrap();
        assert_eq!((c.ctype, c.value), (Channel::Altitude, Some(11_000)));
    }

    #[test]
    fn error_outcomes() {
        assert_eq!(parse("qantas one good day"), Err(ParseError::NotACommand));
        assert_eq!(parse("qantas one descend now"), Err(ParseError::MissingValue));
        assert_eq!(parse("qantas one reduce speed to five"), Err(ParseError::MissingValue));
        assert_eq!(parse("good morning all stations"), Err(ParseError::NoCallsign));
        let mut u = utter("qantas one descend to three thousand");
        u.speaker = Speaker::Pilot;
        assert_eq!(
            parse_utterance(&u, &CallsignTable::default(), &Phraseology::default()),
            Err(ParseError::WrongSpeaker)
        );
    }

    #[test]
    fn maintain_is_configurable() {
        let table = CallsignTable::default();
        let strict = Phraseology::default().without_bare_maintain();
        let u = utter("qantas one maintain three thousand");
        assert_eq!(parse_utterance(&u, &table, &strict), Err(ParseError::NotACommand));
        assert_eq!(parse(&u.text).unwrap().value, Some(3000));
    }

    #[test]
    fn heading_360_is_north() {
        assert_eq!(parse("qantas one fly heading three six zero").unwrap().value, Some(0));
    }

    #[test]
    fn table_validation() {
        assert!(CallsignTable::new([("a".into(), "ab".into())]).is_err());
        assert!(CallsignTable::new([("a".into(), "ABC".into()), ("a".into(), "ABD".into())]).is_err());
    }

    #[test]
    fn transcript_tsv_roundtrip() {
        let us = vec![utter("qantas one descend to three thousand")];
        let mut buf = Vec::new();
        write_transcript(&mut buf, &us).unwrap();
        assert_eq!(read_transcript(buf.as_slice()).unwrap(), us);
        assert!(read_transcript("1\t0\tatco\tx\n".as_bytes()).is_err());
    }
}
