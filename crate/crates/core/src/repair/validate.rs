//! Strict JSON validation by recursive descent.
//!
//! Deliberately a separate implementation from the streaming scanner so the
//! two can cross-check each other: `scan_partial` reports `complete` exactly
//! when `validate` accepts.

/// Position-bearing syntax error: first offending byte offset plus a
/// description of what was expected there.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{offset}:{expected}")]
pub struct ValidationError {
    pub offset: usize,
    pub expected: String,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, expected: &str) -> Result<T, ValidationError> {
        Err(ValidationError {
            offset: self.pos,
            expected: expected.to_string(),
        })
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn expect_byte(&mut self, b: u8, what: &str) -> Result<(), ValidationError> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(what)
        }
    }

    fn value(&mut self, depth: usize) -> Result<(), ValidationError> {
        if depth > 512 {
            return self.err("shallower nesting");
        }
        match self.peek() {
            Some(b'{') => self.object(depth),
            Some(b'[') => self.array(depth),
            Some(b'"') => self.string(),
            Some(b'-' | b'0'..=b'9') => self.number(),
            Some(b't') => self.keyword("true"),
            Some(b'f') => self.keyword("false"),
            Some(b'n') => self.keyword("null"),
            _ => self.err("value"),
        }
    }

    fn object(&mut self, depth: usize) -> Result<(), ValidationError> {
        self.pos += 1; // '{'
        self.skip_ws();
        if self.peek() == Some(b'}') {
            self.pos += 1;
            return Ok(());
        }
        loop {
            if self.peek() != Some(b'"') {
                return self.err("object key string");
            }
            self.string()?;
            self.skip_ws();
            self.expect_byte(b':', "':'")?;
            self.skip_ws();
            self.value(depth + 1)?;
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    self.skip_ws();
                    // strictness: no trailing comma before '}'
                    if self.peek() == Some(b'}') {
                        return self.err("object key string");
                    }
                }
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(());
                }
                _ => return self.err("',' or '}'"),
            }
        }
    }

    fn array(&mut self, depth: usize) -> Result<(), ValidationError> {
        self.pos += 1; // '['
        self.skip_ws();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(());
        }
        loop {
            self.value(depth + 1)?;
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    self.skip_ws();
                    if self.peek() == Some(b']') {
                        return self.err("value");
                    }
                }
                Some(b']') => {
                    self.pos += 1;
                    return Ok(());
                }
                _ => return self.err("',' or ']'"),
            }
        }
    }

    fn string(&mut self) -> Result<(), ValidationError> {
        self.pos += 1; // '"'
        loop {
            match self.peek() {
                None => return self.err("closing '\"'"),
                Some(b'"') => {
                    self.pos += 1;
                    return Ok(());
                }
                Some(b'\\') => {
                    self.pos += 1;
                    match self.peek() {
                        Some(b'"' | b'\\' | b'/' | b'b' | b'f' | b'n' | b'r' | b't') => {
                            self.pos += 1
                        }
                        Some(b'u') => {
                            self.pos += 1;
                            for _ in 0..4 {
                                match self.peek() {
                                    Some(h) if h.is_ascii_hexdigit() => self.pos += 1,
                                    _ => return self.err("hex digit"),
                                }
                            }
                        }
                        _ => return self.err("escape character"),
                    }
                }
                Some(c) if c < 0x20 => return self.err("non-control string character"),
                Some(_) => self.pos += 1,
            }
        }
    }

    fn number(&mut self) -> Result<(), ValidationError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        match self.peek() {
            Some(b'0') => self.pos += 1,
            Some(b'1'..=b'9') => {
                while matches!(self.peek(), Some(b'0'..=b'9')) {
                    self.pos += 1;
                }
            }
            _ => return self.err("digit"),
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            if !matches!(self.peek(), Some(b'0'..=b'9')) {
                return self.err("fraction digit");
            }
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if !matches!(self.peek(), Some(b'0'..=b'9')) {
                return self.err("exponent digit");
            }
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        Ok(())
    }

    fn keyword(&mut self, word: &str) -> Result<(), ValidationError> {
        if self.bytes[self.pos..].starts_with(word.as_bytes()) {
            self.pos += word.len();
            Ok(())
        } else {
            self.err(word)
        }
    }
}

/// Accept exactly one top-level document, strictly per the standard JSON
/// grammar below the root: no trailing commas, no comments, no trailing
/// content. The root must be an object or array — domain-model documents are
/// never bare scalars, and this is what lets a scan classify text that
/// starts mid-document (e.g. inside a key-value pair) as unrepairable.
pub fn validate(text: &str) -> Result<(), ValidationError> {
    let mut parser = Parser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    parser.skip_ws();
    match parser.peek() {
        Some(b'{') => parser.object(0)?,
        Some(b'[') => parser.array(0)?,
        _ => return parser.err("'{' or '['"),
    }
    parser.skip_ws();
    if parser.pos != parser.bytes.len() {
        return parser.err("end of input");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_grammar_coverage() {
        assert!(validate("{\"a\": [1, 2.5e3, null]}").is_ok());
        assert!(validate("  [true, false, \"x\\u00e9\", -0.5]  ").is_ok());
        assert!(validate("[\"\", 0, 1e-9, []]").is_ok());
    }

    #[test]
    fn rejects_bare_scalar_documents() {
        for text in ["\"\"", "0", "true", "null"] {
            let err = validate(text).unwrap_err();
            assert_eq!(err.offset, 0);
            assert_eq!(err.expected, "'{' or '['");
        }
    }

    #[test]
    fn rejects_trailing_comma_at_its_offset() {
        let err = validate("{\"a\": 1,}").unwrap_err();
        assert_eq!(err.offset, 8);
    }

    #[test]
    fn rejects_two_top_level_values() {
        let err = validate("{} {}").unwrap_err();
        assert_eq!(err.offset, 3);
        assert_eq!(err.expected, "end of input");
    }

    #[test]
    fn rejects_partial_and_malformed_input() {
        assert!(validate("").is_err());
        assert!(validate("{\"a\": ").is_err());
        assert!(validate("[1 2]").is_err());
        assert!(validate("01").is_err());
        assert!(validate("{\"a\": 'x'}").is_err());
        assert!(validate("\"\\q\"").is_err());
    }
}
