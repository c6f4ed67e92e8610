use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_SYMBOL: &str = "PAD";
pub const UNK_SYMBOL: &str = "UNK";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Fixed, ordered phoneme symbol set. Index 0 is always PAD, index 1 UNK;
/// the remaining symbols are sorted so the mapping is stable across runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeInventory {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhonemeInventory {
    /// Build from a set of non-reserved symbols; duplicates and clashes with
    /// the reserved names are errors.
    pub fn from_symbols<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut sorted = BTreeSet::new();
        for s in symbols {
            let s: String = s.into();
            if s == PAD_SYMBOL || s == UNK_SYMBOL {
                return Err(Error::Inventory(format!("'{s}' is reserved")));
            }
            if s.is_empty() {
                return Err(Error::Inventory("empty phoneme symbol".into()));
            }
            if !sorted.insert(s.clone()) {
                return Err(Error::Inventory(format!("duplicate symbol '{s}'")));
            }
        }
        let mut all = vec![PAD_SYMBOL.to_string(), UNK_SYMBOL.to_string()];
        all.extend(sorted);
        let index = all
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(PhonemeInventory {
            symbols: all,
            index,
        })
    }

    /// Inventory stored as one symbol per line in index order.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let body = std::fs::read_to_string(path.as_ref())?;
        let lines: Vec<&str> = body.lines().filter(|l| !l.is_empty()).collect();
        if lines.len() < 2 || lines[PAD_ID] != PAD_SYMBOL || lines[UNK_ID] != UNK_SYMBOL {
            return Err(Error::Inventory(format!(
                "{} is not an inventory file (PAD/UNK header missing)",
                path.as_ref().display()
            )));
        }
        Self::from_symbols(lines[2..].iter().map(|s| s.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.symbols.join("\n") + "\n")?;
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

/// Word-to-phonemes lookup table.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn empty() -> Self {
        Lexicon::default()
    }

    /// Parse `WORD<TAB>PH1 PH2 ...` lines; '#' lines are comments.
    /// Duplicate words are ambiguous and rejected.
    pub fn parse(body: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (lineno, line) in body.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, phones) = line.split_once('\t').ok_or_else(|| {
                Error::Inventory(format!("line {}: missing TAB separator", lineno + 1))
            })?;
            let word = word.trim().to_uppercase();
            let phones: Vec<String> = phones
                .split_whitespace()
                .map(|p| p.to_string())
                .collect();
            if word.is_empty() || phones.is_empty() {
                return Err(Error::Inventory(format!(
                    "line {}: empty word or pronunciation",
                    lineno + 1
                )));
            }
            if entries.insert(word.clone(), phones).is_some() {
                return Err(Error::Inventory(format!(
                    "line {}: duplicate entry for '{word}'",
                    lineno + 1
                )));
            }
        }
        Ok(Lexicon { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn lookup(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn phoneme_symbols(&self) -> BTreeSet<String> {
        self.entries.values().flatten().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Token IDs for one utterance, with optional ground-truth durations in mel
/// frames (present on training data, absent at synthesis time).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeSequence {
    pub ids: Vec<usize>,
    pub durations: Option<Vec<usize>>,
    pub source_text: String,
}

impl PhonemeSequence {
    pub fn new(ids: Vec<usize>, source_text: impl Into<String>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyText);
        }
        Ok(PhonemeSequence {
            ids,
            durations: None,
            source_text: source_text.into(),
        })
    }

    pub fn with_durations(mut self, durations: Vec<usize>) -> Result<Self> {
        if durations.len() != self.ids.len() {
            return Err(Error::Shape(format!(
                "{} durations for {} phonemes",
                durations.len(),
                self.ids.len()
            )));
        }
        if durations.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape("durations must be >= 1".into()));
        }
        self.durations = Some(durations);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn total_frames(&self) -> Option<usize> {
        self.durations.as_ref().map(|d| d.iter().sum())
    }
}

/// Inventory holding the reserved symbols plus every phoneme the lexicon
/// mentions. An empty lexicon yields just {PAD, UNK}.
pub fn build_inventory(lexicon: &Lexicon) -> Result<PhonemeInventory> {
    PhonemeInventory::from_symbols(lexicon.phoneme_symbols())
}

/// Convert text to phoneme IDs: uppercase word lookup in the lexicon,
/// falling back to per-character symbols for out-of-vocabulary words, with
/// UNK absorbing anything the inventory does not know. Punctuation is
/// dropped. Total on nonempty text; empty output is an error.
pub fn text_to_phonemes(
    text: &str,
    inventory: &PhonemeInventory,
    lexicon: &Lexicon,
) -> Result<PhonemeSequence> {
    let mut ids = Vec::new();
    for token in text.split_whitespace() {
        let word: String = token
            .chars()
            .filter(|c| c.is_alphanumeric() || *c == '\'')
            .collect::<String>()
            .to_uppercase();
        if word.is_empty() {
            continue;
        }
        if let Some(phones) = lexicon.lookup(&word) {
            for p in phones {
                ids.push(inventory.id(p).unwrap_or(UNK_ID));
            }
        } else {
            for ch in word.chars() {
                ids.push(inventory.id(&ch.to_string()).unwrap_or(UNK_ID));
            }
        }
    }
    if ids.is_empty() {
        return Err(Error::EmptyText);
    }
    PhonemeSequence::new(ids, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_lexicon_gives_reserved_only() {
        let inv = build_inventory(&Lexicon::empty()).unwrap();
        assert_eq!(inv.size(), 2);
        assert_eq!(inv.symbol(PAD_ID), Some(PAD_SYMBOL));
        assert_eq!(inv.symbol(UNK_ID), Some(UNK_SYMBOL));
    }

    #[test]
    fn inventory_is_sorted_and_stable() {
        let lex = Lexicon::parse("ABBA\tB AA\nCAB\tB AA B\n").unwrap();
        let inv = build_inventory(&lex).unwrap();
        assert_eq!(inv.size(), 4);
        assert_eq!(inv.id("AA"), Some(2));
        assert_eq!(inv.id("B"), Some(3));
        let again = build_inventory(&lex).unwrap();
        assert_eq!(inv, again);
    }

    #[test]
    fn reserved_and_duplicate_symbols_rejected() {
        assert!(matches!(
            PhonemeInventory::from_symbols(["A", "PAD"]),
            Err(Error::Inventory(_))
        ));
        assert!(matches!(
            PhonemeInventory::from_symbols(["A", "A"]),
            Err(Error::Inventory(_))
        ));
    }

    #[test]
    fn duplicate_lexicon_word_rejected() {
        assert!(matches!(
            Lexicon::parse("CAT\tK AE T\nCAT\tK AH T\n"),
            Err(Error::Inventory(_))
        ));
    }

    #[test]
    fn lexicon_hit_is_verbatim() {
        let lex = Lexicon::parse("# comment\nHELLO\tHH AH L OW\n").unwrap();
        let inv = build_inventory(&lex).unwrap();
        let seq = text_to_phonemes("hello", &inv, &lex).unwrap();
        let symbols: Vec<&str> = seq.ids.iter().map(|&i| inv.symbol(i).unwrap()).collect();
        assert_eq!(symbols, ["HH", "AH", "L", "OW"]);
    }

    #[test]
    fn empty_text_is_an_error() {
        let inv = build_inventory(&Lexicon::empty()).unwrap();
        assert!(matches!(
            text_to_phonemes("", &inv, &Lexicon::empty()),
            Err(Error::EmptyText)
        ));
        assert!(matches!(
            text_to_phonemes("...!!!", &inv, &Lexicon::empty()),
            Err(Error::EmptyText)
        ));
    }

    #[test]
    fn character_fallback_for_oov_words() {
        let inv = PhonemeInventory::from_symbols(["A", "B"]).unwrap();
        let seq = text_to_phonemes("A B A", &inv, &Lexicon::empty()).unwrap();
        assert_eq!(
            seq.ids,
            vec![inv.id("A").unwrap(), inv.id("B").unwrap(), inv.id("A").unwrap()]
        );
        // Unknown characters absorb into UNK; the map is total.
        let seq = text_to_phonemes("AXB", &inv, &Lexicon::empty()).unwrap();
        assert_eq!(seq.ids, vec![2, UNK_ID, 3]);
    }

    #[test]
    fn pad_never_appears_in_sequences() {
        let lex = Lexicon::parse("ONE\tW AH N\nTWO\tT UW\n").unwrap();
        let inv = build_inventory(&lex).unwrap();
        for text in ["one two", "unknownword", "one mixedcase Two!"] {
            let seq = text_to_phonemes(text, &inv, &lex).unwrap();
            assert!(seq.ids.iter().all(|&i| i != PAD_ID), "{text}");
        }
    }

    #[test]
    fn inventory_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inventory.txt");
        let inv = PhonemeInventory::from_symbols(["A", "B", "ZH"]).unwrap();
        inv.save(&path).unwrap();
        let back = PhonemeInventory::load(&path).unwrap();
        assert_eq!(inv, back);
    }

    #[test]
    fn durations_validated() {
        let seq = PhonemeSequence::new(vec![2, 3], "ab").unwrap();
        assert!(seq.clone().with_durations(vec![1]).is_err());
        assert!(seq.clone().with_durations(vec![1, 0]).is_err());
        let ok = seq.with_durations(vec![2, 5]).unwrap();
        assert_eq!(ok.total_frames(), Some(7));
    }
}
