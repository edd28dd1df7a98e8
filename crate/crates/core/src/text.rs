//! Tokenizers shared by the index and the similarity measures.

/// Lowercased words of free text, split on anything that is not alphanumeric.
pub fn tokenize_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn is_endpoint_separator(c: char) -> bool {
    matches!(c, '/' | '?' | '&' | '=' | '.' | '-' | '_' | ':' | '#') || c.is_whitespace()
}

/// Terms of a resource locator: path segments, host labels and query
/// parameters, lowercased, with empty segments dropped.
pub fn tokenize_endpoint(endpoint: &str) -> Vec<String> {
    endpoint
        .split(is_endpoint_separator)
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}
