pub const URL_TOKEN: &str = "<url>";
pub const MENTION_TOKEN: &str = "<mention>";

/// Lowercases `text`, replaces URLs and @-mentions with placeholder tokens,
/// and splits the rest into alphanumeric runs and single punctuation marks.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    for chunk in lower.split_whitespace() {
        if is_url(chunk) {
            tokens.push(URL_TOKEN.to_string());
            continue;
        }
        split_chunk(chunk, &mut tokens);
    }
    tokens
}

fn is_url(chunk: &str) -> bool {
    chunk.starts_with("http://") || chunk.starts_with("https://") || chunk.starts_with("www.")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn split_chunk(chunk: &str, tokens: &mut Vec<String>) {
    let mut chars = chunk.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        if c == '@' && chars.peek().is_some_and(|&(_, n)| is_word_char(n)) {
            while chars.peek().is_some_and(|&(_, n)| is_word_char(n)) {
                chars.next();
            }
            tokens.push(MENTION_TOKEN.to_string());
        } else if is_word_char(c) {
            let mut end = start + c.len_utf8();
            while let Some(&(i, n)) = chars.peek() {
                if !is_word_char(n) {
                    break;
                }
                end = i + n.len_utf8();
                chars.next();
            }
            tokens.push(chunk[start..end].to_string());
        } else {
            tokens.push(c.to_string());
        }
    }
}
