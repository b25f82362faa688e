/// Token that replaces every all-digit word.
pub const NUM_TOKEN: &str = "<num>";

/// Default tokenizer: lowercases, splits on whitespace and at punctuation
/// boundaries (each punctuation character is its own token), and collapses
/// all-digit words to [`NUM_TOKEN`].
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();

    fn flush(word: &mut String, tokens: &mut Vec<String>) {
        if word.is_empty() {
            return;
        }
        if word.chars().all(|c| c.is_ascii_digit()) {
            tokens.push(NUM_TOKEN.to_string());
        } else {
            tokens.push(word.to_lowercase());
        }
        word.clear();
    }

    for c in text.chars() {
        if c.is_alphanumeric() {
            word.push(c);
        } else {
            flush(&mut word, &mut tokens);
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    flush(&mut word, &mut tokens);
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("We use SpeakUp, 2,000 students."),
            vec!["we", "use", "speakup", ",", "<num>", ",", "<num>", "students", "."]
        );
    }

    #[test]
    fn mixed_alphanumerics_stay_whole() {
        assert_eq!(tokenize("f2f (BiLSTM)"), vec!["f2f", "(", "bilstm", ")"]);
    }

    #[test]
    fn whitespace_only_is_empty() {
        assert!(tokenize(" \t ").is_empty());
    }
}
