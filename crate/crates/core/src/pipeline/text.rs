// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Sentence splitting, normalization, tokenization and contraction
//! splitting. All functions are pure.

pub const TAG_POS: &str = "TAG_POS";
pub const TAG_NEG: &str = "TAG_NEG";
pub const TAG_URL: &str = "TAG_URL";
pub const TAG_MENTION: &str = "TAG_MENTION";

const POSITIVE_EMOTICONS: &[&str] = &[
    ":)", ":-)", ":]", ":D", ":-D", ";)", ";-)", ":P", ":-P", ":p", "=)", "=D", "<3", "^_^", "xD", "XD", ":o)",
];
const NEGATIVE_EMOTICONS: &[&str] = &[
    ":(", ":-(", ":[", ":'(", ":/", ":-/", ":\\", "D:", ">:(", ":|", "=(", "</3", ":@",
];

/// Lowercase shorthand and its expansion. No expansion contains a key.
const ABBREVIATIONS: &[(&str, &str)] = &[
    ("2day", "today"),
    ("2moro", "tomorrow"),
    ("2nite", "tonight"),
    ("b4", "before"),
    ("bc", "because"),
    ("btw", "by the way"),
    ("cuz", "because"),
    ("gr8", "great"),
    ("idk", "i do not know"),
    ("imo", "in my opinion"),
    ("jk", "just kidding"),
    ("luv", "love"),
    ("omg", "oh my god"),
    ("pls", "please"),
    ("plz", "please"),
    ("ppl", "people"),
    ("r", "are"),
    ("thx", "thanks"),
    ("tmrw", "tomorrow"),
    ("u", "you"),
    ("ur", "your"),
    ("w/", "with"),
    ("w/o", "without"),
];

const NON_TERMINAL_ABBREVIATIONS: &[&str] = &["mr.", "mrs.", "ms.", "dr.", "st.", "vs.", "e.g.", "i.e.", "etc.", "jr.", "sr."];

/// Splits text after runs of `.`, `!` or `?` that are followed by whitespace
/// or the end of the text. Common title abbreviations do not end a sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i;
            while j + 1 < chars.len() && matches!(chars[j + 1].1, '.' | '!' | '?') {
                j += 1;
            }
            let end = chars.get(j + 1).map_or(text.len(), |(p, _)| *p);
            let at_boundary = chars.get(j + 1).map_or(true, |(_, c)| c.is_whitespace());
            if at_boundary && !ends_with_abbreviation(&text[start..end]) {
                push_trimmed(&mut out, &text[start..end]);
                start = end;
            }
            i = j + 1;
            let _ = pos;
            continue;
        }
        i += 1;
    }
    push_trimmed(&mut out, &text[start..]);
    if out.is_empty() && !text.is_empty() {
        out.push(text.to_string());
    }
    out
}

fn ends_with_abbreviation(segment: &str) -> bool {
    let last = segment.split_whitespace().last().unwrap_or("").to_lowercase();
    NON_TERMINAL_ABBREVIATIONS.contains(&last.as_str())
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// Replaces emoticons, URLs, mentions and shorthand with semantic tags or
/// their expansions, strips hashtag markers and collapses whitespace.
/// Idempotent.
pub fn normalize(sentence: &str) -> String {
    let mut out: Vec<String> = Vec::new();
    for raw in sentence.split_whitespace() {
        let chunk = match raw.strip_prefix('#').map(|r| r.trim_start_matches('#')) {
            Some(rest) if rest.starts_with(char::is_alphanumeric) => rest,
            _ => raw,
        };
        if POSITIVE_EMOTICONS.contains(&chunk) {
            out.push(TAG_POS.into());
            continue;
        }
        if NEGATIVE_EMOTICONS.contains(&chunk) {
            out.push(TAG_NEG.into());
            continue;
        }
        let lower = chunk.to_lowercase();
        if lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.") {
            out.push(TAG_URL.into());
            continue;
        }
        let (core, trail) = split_trailing_punct(chunk);
        if core.len() > 1 && core.starts_with('@') && core[1..].chars().all(|c| c.is_alphanumeric() || c == '_') {
            out.push(format!("{TAG_MENTION}{trail}"));
            continue;
        }
        let key = core.to_lowercase();
        match ABBREVIATIONS.iter().find(|(k, _)| *k == key) {
            Some((_, expansion)) => out.push(format!("{expansion}{trail}")),
            None => out.push(chunk.to_string()),
        }
    }
    out.join(" ")
}

fn split_trailing_punct(chunk: &str) -> (&str, &str) {
    let core = chunk.trim_end_matches(['.', ',', '!', '?', ';', ':']);
    (core, &chunk[core.len()..])
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits a sentence into word tokens and punctuation tokens. Words may
/// contain inner apostrophes, hyphens, and `.`/`,` between digits; runs of
/// the same punctuation character form one token.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let chars: Vec<char> = sentence.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if is_word_char(c) {
            let start = i;
            i += 1;
            while i < chars.len() {
                let c = chars[i];
                if is_word_char(c) {
                    i += 1;
                    continue;
                }
                let prev = chars[i - 1];
                let next = chars.get(i + 1).copied();
                let joins = match c {
                    '\'' | '\u{2019}' | '-' => is_word_char(prev) && next.is_some_and(|n| n.is_alphanumeric()),
                    '.' | ',' => prev.is_ascii_digit() && next.is_some_and(|n| n.is_ascii_digit()),
                    _ => false,
                };
                if joins {
                    i += 1;
                } else {
                    break;
                }
            }
            tokens.push(chars[start..i].iter().collect());
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i] == c {
            i += 1;
        }
        tokens.push(chars[start..i].iter().collect());
    }
    tokens
}

const CONTRACTIONS: &[(&str, &[&str])] = &[
    ("ain't", &["is", "not"]),
    ("aren't", &["are", "not"]),
    ("can't", &["can", "not"]),
    ("couldn't", &["could", "not"]),
    ("didn't", &["did", "not"]),
    ("doesn't", &["does", "not"]),
    ("don't", &["do", "not"]),
    ("hadn't", &["had", "not"]),
    ("hasn't", &["has", "not"]),
    ("haven't", &["have", "not"]),
    ("he'd", &["he", "would"]),
    ("he'll", &["he", "will"]),
    ("he's", &["he", "is"]),
    ("i'd", &["i", "would"]),
    ("i'll", &["i", "will"]),
    ("i'm", &["i", "am"]),
    ("i've", &["i", "have"]),
    ("isn't", &["is", "not"]),
    ("it'll", &["it", "will"]),
    ("it's", &["it", "is"]),
    ("let's", &["let", "us"]),
    ("mustn't", &["must", "not"]),
    ("she'd", &["she", "would"]),
    ("she'll", &["she", "will"]),
    ("she's", &["she", "is"]),
    ("shouldn't", &["should", "not"]),
    ("that's", &["that", "is"]),
    ("there's", &["there", "is"]),
    ("they'd", &["they", "would"]),
    ("they'll", &["they", "will"]),
    ("they're", &["they", "are"]),
    ("they've", &["they", "have"]),
    ("wasn't", &["was", "not"]),
    ("we'd", &["we", "would"]),
    ("we'll", &["we", "will"]),
    ("we're", &["we", "are"]),
    ("we've", &["we", "have"]),
    ("weren't", &["were", "not"]),
    ("what's", &["what", "is"]),
    ("won't", &["will", "not"]),
    ("wouldn't", &["would", "not"]),
    ("you'd", &["you", "would"]),
    ("you'll", &["you", "will"]),
    ("you're", &["you", "are"]),
    ("you've", &["you", "have"]),
];

/// Expands known contractions (`don't` -> `do not`). The first part keeps an
/// initial capital. Anything not in the table is left alone.
pub fn split_contractions(tokens: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for token in tokens {
        if !token.chars().any(is_apostrophe) {
            out.push(token.clone());
            continue;
        }
        let key: String = token
            .chars()
            .map(|c| if is_apostrophe(c) { '\'' } else { c })
            .collect::<String>()
            .to_lowercase();
        match CONTRACTIONS.iter().find(|(k, _)| *k == key) {
            Some((_, parts)) => {
                let capital = token.chars().next().is_some_and(char::is_uppercase);
                for (i, part) in parts.iter().enumerate() {
                    if i == 0 && capital {
                        let mut cs = part.chars();
                        let first = cs.next().map(|c| c.to_uppercase().collect::<String>()).unwrap_or_default();
                        out.push(first + cs.as_str());
                    } else {
                        out.push(part.to_string());
                    }
                }
            }
            None => out.push(token.clone()),
        }
    }
    out
}

/// True for tokens made only of punctuation or symbols.
pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && !token.chars().any(is_word_char)
}
