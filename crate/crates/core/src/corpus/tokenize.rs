// Multi-character operators, longest first so maximal munch falls out of a
// linear scan.
const OPERATORS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<=", ">=", "==", "!=", "&&", "||", "<<", ">>", "+=", "-=",
    "*=", "/=", "%=", "&=", "|=", "^=", "::", "##",
];

pub const STRING_TOKEN: &str = "STR";
pub const CHAR_TOKEN: &str = "CHR";

/// Splits one C/C++ source line into tokens.
///
/// Identifiers, numeric literals and operators become tokens; string and
/// character literals collapse to `STR` / `CHR`. Non-ASCII characters and
/// comments are dropped.
pub fn tokenize_statement(text: &str) -> Vec<String> {
    let bytes: Vec<u8> = text.bytes().filter(u8::is_ascii).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            break;
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i = find_comment_end(&bytes, i + 2);
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(ascii(&bytes[start..i]));
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.') {
                i += 1;
            }
            out.push(ascii(&bytes[start..i]));
        } else if c == b'"' || c == b'\'' {
            i = skip_literal(&bytes, i);
            out.push(if c == b'"' { STRING_TOKEN } else { CHAR_TOKEN }.to_string());
        } else if let Some(op) = OPERATORS.iter().find(|op| bytes[i..].starts_with(op.as_bytes())) {
            out.push((*op).to_string());
            i += op.len();
        } else {
            out.push((c as char).to_string());
            i += 1;
        }
    }
    out
}

/// Joins tokens with single spaces.
pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}

fn ascii(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn find_comment_end(bytes: &[u8], from: usize) -> usize {
    bytes[from..]
        .windows(2)
        .position(|w| w == b"*/")
        .map_or(bytes.len(), |p| from + p + 2)
}

// Returns the index just past the closing quote, or the end of input for an
// unterminated literal.
fn skip_literal(bytes: &[u8], open: usize) -> usize {
    let quote = bytes[open];
    let mut i = open + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b if b == quote => return i + 1,
            _ => i += 1,
        }
    }
    bytes.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize_statement(s)
    }

    #[test]
    fn for_loop_header() {
        assert_eq!(
            toks("for(i=0;i<10;i++)"),
            ["for", "(", "i", "=", "0", ";", "i", "<", "10", ";", "i", "++", ")"]
        );
    }

    #[test]
    fn empty_input() {
        assert!(toks("").is_empty());
        assert!(toks("   \t").is_empty());
    }

    #[test]
    fn maximal_munch() {
        assert_eq!(toks("a<=b && c;"), ["a", "<=", "b", "&&", "c", ";"]);
        assert_eq!(toks("p->x <<= 2"), ["p", "->", "x", "<<=", "2"]);
        assert_eq!(toks("a---b"), ["a", "--", "-", "b"]);
        assert_eq!(toks("x+=y-=z*=w/=v"), ["x", "+=", "y", "-=", "z", "*=", "w", "/=", "v"]);
        assert_eq!(toks("a||b!=c==d>>e"), ["a", "||", "b", "!=", "c", "==", "d", ">>", "e"]);
    }

    #[test]
    fn literals_collapse() {
        assert_eq!(
            toks(r#"printf("%d \"q\"\n", 'x', '\'');"#),
            ["printf", "(", "STR", ",", "CHR", ",", "CHR", ")", ";"]
        );
        assert_eq!(toks("x = 0x1Fu + 1.5f;"), ["x", "=", "0x1Fu", "+", "1.5f", ";"]);
    }

    #[test]
    fn comments_and_non_ascii_dropped() {
        assert_eq!(toks("a = b; // tail"), ["a", "=", "b", ";"]);
        assert_eq!(toks("a /* mid */ = b;"), ["a", "=", "b", ";"]);
        assert_eq!(toks("a = \u{e9}b;"), ["a", "=", "b", ";"]);
    }

    proptest! {
        #[test]
        fn space_join_preserves_tokens(s in "[ -~]{0,60}") {
            let t = tokenize_statement(&s);
            let again = tokenize_statement(&detokenize(&t));
            prop_assert_eq!(again, t);
        }
    }
}
