//! Tokenization shared by names, attributes, queries and feedback text.

/// Words dropped from every token stream.
pub const STOPWORDS: [&str; 9] = ["the", "a", "an", "of", "from", "my", "your", "is", "it"];

/// Lowercases, splits on anything that is not alphanumeric or an apostrophe,
/// drops possessive `'s`, strips remaining apostrophes and removes stopwords.
///
/// `"Alice's computer"` becomes `["alice", "computer"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'");
    lowered
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter_map(|piece| {
            let piece = piece.trim_matches('\'');
            let piece = piece.strip_suffix("'s").unwrap_or(piece);
            let word: String = piece.chars().filter(|c| *c != '\'').collect();
            if word.is_empty() || STOPWORDS.contains(&word.as_str()) {
                None
            } else {
                Some(word)
            }
        })
        .collect()
}

/// Visible attribute words: colors, materials and finishes a camera could
/// ground. Scene generation draws visual tokens from it and the scripted
/// policy picks them out of descriptive feedback.
pub const ATTRIBUTE_LEXICON: [&str; 20] = [
    "black", "white", "gray", "red", "blue", "green", "yellow", "brown", "orange", "pink", "wooden", "metal", "leather",
    "fabric", "plastic", "glass", "striped", "round", "square", "silver",
];

/// Tokens of `text` that are attribute words, in order, without repeats.
pub fn attribute_tokens(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in tokenize(text) {
        if ATTRIBUTE_LEXICON.contains(&t.as_str()) && !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// Capitalizes the first character, used when a stored lowercase name is
/// spoken back to the user.
pub fn capitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// A stored name placed mid-sentence: owner names are capitalized, names
/// led by an article stay lowercase.
pub fn mid_sentence_name(name: &str) -> String {
    if name.starts_with("the ") || name.starts_with("a ") {
        name.to_string()
    } else {
        capitalize(name)
    }
}
