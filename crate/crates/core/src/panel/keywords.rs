use std::collections::{BTreeMap, HashSet};

use regex::Regex;

use crate::error::{Error, Result};

/// Case-insensitive keyword phrases grouped by category.
#[derive(Debug, Clone)]
pub struct KeywordDictionary {
    categories: BTreeMap<String, Vec<String>>,
    patterns: Vec<Regex>,
}

impl KeywordDictionary {
    pub fn new(categories: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut patterns = Vec::new();
        for (cat, phrases) in &categories {
            for p in phrases {
                let words: Vec<&str> = p.split_whitespace().collect();
                if words.is_empty() {
                    return Err(Error::Config(format!("empty phrase in category `{cat}`")));
                }
                let key = words.join(" ").to_lowercase();
                if !seen.insert(key.clone()) {
                    return Err(Error::Config(format!("duplicate phrase `{key}`")));
                }
                // Internal whitespace in a phrase matches any whitespace run.
                let body = words
                    .iter()
                    .map(|w| regex::escape(w))
                    .collect::<Vec<_>>()
                    .join(r"\s+");
                patterns.push(Regex::new(&format!("(?i){body}")).expect("escaped phrase"));
            }
        }
        Ok(Self {
            categories,
            patterns,
        })
    }

    /// Parse the plain-text format: `[category]` headers followed by one
    /// phrase per line. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut categories: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_string();
                categories.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let cat = current.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "line {}: phrase before any [category] header",
                    lineno + 1
                ))
            })?;
            categories.get_mut(cat).unwrap().push(line.to_string());
        }
        Self::new(categories)
    }

    /// Keyword lists used for GenAI adoption measurement.
    pub fn genai_default() -> Self {
        let core = [
            "generative AI",
            "generative artificial intelligence",
            "large language model",
            "LLM",
            "ChatGPT",
            "GPT-4",
            "Claude",
            "Gemini",
            "Copilot",
        ];
        let application = [
            "AI-powered",
            "machine learning application",
            "natural language processing",
            "automated underwriting",
            "algorithmic trading",
            "robo-advisor",
        ];
        let strategic = [
            "AI strategy",
            "artificial intelligence initiative",
            "digital transformation",
            "AI investment",
            "AI implementation",
        ];
        let to_vec = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        let mut categories = BTreeMap::new();
        categories.insert("application".to_string(), to_vec(&application));
        categories.insert("core".to_string(), to_vec(&core));
        categories.insert("strategic".to_string(), to_vec(&strategic));
        Self::new(categories).expect("default dictionary is valid")
    }

    pub fn categories(&self) -> &BTreeMap<String, Vec<String>> {
        &self.categories
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn count_phrase(re: &Regex, doc: &str) -> u64 {
    let mut count = 0;
    let mut pos = 0;
    while let Some(m) = re.find_at(doc, pos) {
        let before_ok = doc[..m.start()]
            .chars()
            .next_back()
            .is_none_or(|c| !is_word_char(c));
        let after_ok = doc[m.end()..]
            .chars()
            .next()
            .is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            count += 1;
            pos = m.end();
        } else {
            // retry one character further on
            pos = m.start() + doc[m.start()..].chars().next().map_or(1, char::len_utf8);
        }
        if pos >= doc.len() {
            break;
        }
    }
    count
}

/// Sum over phrases of non-overlapping, case-insensitive, whole-word
/// occurrences. `LLM` does not match inside `LLMs`.
pub fn count_mentions(document: &str, dict: &KeywordDictionary) -> u64 {
    dict.patterns
        .iter()
        .map(|re| count_phrase(re, document))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dict(phrases: &[&str]) -> KeywordDictionary {
        let mut c = BTreeMap::new();
        c.insert(
            "core".into(),
            phrases.iter().map(|s| s.to_string()).collect(),
        );
        KeywordDictionary::new(c).unwrap()
    }

    #[test]
    fn direct_count() {
        let d = dict(&["generative AI", "ChatGPT"]);
        assert_eq!(
            count_mentions("we deployed generative AI and ChatGPT", &d),
            2
        );
    }

    #[test]
    fn empty_document() {
        assert_eq!(count_mentions("", &KeywordDictionary::genai_default()), 0);
    }

    #[test]
    fn fixture_corpus_counts_and_indicator() {
        let d = KeywordDictionary::genai_default();
        let corpus = [
            "Net interest margin compressed; deposit costs rose.",
            "We began a pilot of generative   AI for customer service.",
            "Our ChatGPT pilot, our GPT-4 evaluation and a Copilot rollout are part of our AI strategy.",
        ];
        // hand count: 0; 1 (generative AI); 4 (ChatGPT, GPT-4, Copilot, AI strategy)
        let counts: Vec<u64> = corpus.iter().map(|doc| count_mentions(doc, &d)).collect();
        assert_eq!(counts, vec![0, 1, 4]);
        let indicator: Vec<u8> = counts.iter().map(|&c| u8::from(c > 0)).collect();
        assert_eq!(indicator, vec![0, 1, 1]);
    }

    #[test]
    fn word_boundaries_and_case() {
        let d = dict(&["LLM", "GPT-4"]);
        assert_eq!(count_mentions("LLMs and an llm", &d), 1);
        assert_eq!(count_mentions("gpt-4, GPT-4o, GPT-4.", &d), 2);
        assert_eq!(count_mentions("xLLM LLM_x LLM", &d), 1);
    }

    #[test]
    fn parse_text_format() {
        let d = KeywordDictionary::parse("# dict\n[core]\nChatGPT\n\n[strategic]\nAI strategy\n")
            .unwrap();
        assert_eq!(d.categories().len(), 2);
        assert!(KeywordDictionary::parse("ChatGPT\n").is_err());
        assert!(KeywordDictionary::parse("[a]\nChatGPT\n[b]\nchatgpt\n").is_err());
    }

    proptest! {
        #[test]
        fn additive_over_concatenation(a in "[a-zA-Z ,.\\-4]{0,60}", b in "[a-zA-Z ,.\\-4]{0,60}") {
            // single-token phrases: a multiword phrase split across the join is not counted in either part
            let d = dict(&["AI", "GPT-4"]);
            let joined = format!("{a} {b}");
            prop_assert_eq!(count_mentions(&joined, &d), count_mentions(&a, &d) + count_mentions(&b, &d));
        }
    }
}
