/// Sentence terminators used when none are configured.
pub const DEFAULT_TERMINATORS: &[char] = &['。', '！', '？', '.', '!', '?'];

/// Splits text into sentences using [`DEFAULT_TERMINATORS`].
pub fn split_sentences(text: &str) -> Vec<String> {
    split_sentences_with(text, DEFAULT_TERMINATORS)
}

/// Splits text after every terminator character. The terminator stays on the
/// sentence it ends; whitespace between sentences is dropped and a trailing
/// fragment without a terminator becomes the last sentence.
pub fn split_sentences_with(text: &str, terminators: &[char]) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        if terminators.contains(&ch) {
            let end = i + ch.len_utf8();
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, piece: &str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chinese_terminators() {
        assert_eq!(split_sentences("甲。乙！丙？"), vec!["甲。", "乙！", "丙？"]);
    }

    #[test]
    fn empty_and_unterminated() {
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("   ").is_empty());
        assert_eq!(split_sentences("abc"), vec!["abc"]);
        assert_eq!(split_sentences("One. Two? three"), vec!["One.", "Two?", "three"]);
    }

    #[test]
    fn custom_terminators() {
        assert_eq!(split_sentences_with("a;b.c", &[';']), vec!["a;", "b.c"]);
    }

    proptest! {
        #[test]
        fn rejoining_reproduces_input(pieces in prop::collection::vec("[a-z ]{0,6}[.!?。]", 0..8), tail in "[a-z]{0,4}", sep in "[ \n]{0,2}") {
            let text = format!("{}{}", pieces.join(&sep), tail);
            let sentences = split_sentences(&text);
            let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
            prop_assert_eq!(strip(&sentences.concat()), strip(&text));
            for s in &sentences {
                prop_assert!(!s.is_empty());
                prop_assert_eq!(s.trim(), s.as_str());
            }
        }
    }
}
