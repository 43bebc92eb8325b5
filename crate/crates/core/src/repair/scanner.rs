//! Single-pass pushdown scan over (possibly truncated) JSON text.
//!
//! The scanner classifies its input as a complete document, a proper prefix
//! of some valid document, or neither, while tracking the open-container
//! stack and the latest byte offset at which a truncation-plus-closers
//! repair is possible.

/// Kind of an open container on the stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ContainerKind {
    Object,
    Array,
}

/// Parse state of the innermost open container.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ContainerState {
    ExpectKey,
    ExpectColon,
    ExpectValue,
    AfterValue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ContainerFrame {
    pub kind: ContainerKind,
    pub state: ContainerState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanStatus {
    Complete,
    Prefix,
    NotAPrefix,
}

/// Result of scanning; `safe_point`/`stack_at_safe_point` drive repair.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PartialJsonScan {
    pub status: ScanStatus,
    /// Open containers remaining at end of input (empty when complete).
    pub container_stack: Vec<ContainerFrame>,
    /// End offset of the last syntactically complete value at any depth.
    pub last_complete_offset: usize,
    /// Latest offset at which truncation plus stack closers yields valid
    /// JSON: the later of `last_complete_offset` and the last container
    /// opening.
    pub safe_point: usize,
    /// Container kinds open at `safe_point`, outermost first.
    pub stack_at_safe_point: Vec<ContainerKind>,
    pub in_string: bool,
    pub escape: bool,
}

// Internal container states; ExpectKeyOrEnd is ExpectKey that also accepts
// '}' (right after '{'), ExpectValueOrEnd likewise for ']' after '['.
#[derive(Clone, Copy, PartialEq, Eq)]
enum ObjState {
    ExpectKeyOrEnd,
    ExpectKey,
    ExpectColon,
    ExpectValue,
    AfterValue,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ArrState {
    ExpectValueOrEnd,
    ExpectValue,
    AfterValue,
}

#[derive(Clone, Copy)]
enum Frame {
    Object(ObjState),
    Array(ArrState),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum NumState {
    Minus,
    IntZero,
    Int,
    FracDot,
    Frac,
    ExpMark,
    ExpSign,
    Exp,
}

impl NumState {
    fn accepting(self) -> bool {
        matches!(self, Self::IntZero | Self::Int | Self::Frac | Self::Exp)
    }
}

enum Mode {
    Idle,
    InString {
        is_key: bool,
        escape: bool,
        hex_remaining: u8,
    },
    InNumber(NumState),
    InKeyword {
        word: &'static str,
        matched: usize,
    },
}

struct Scanner {
    stack: Vec<Frame>,
    mode: Mode,
    top_level_done: bool,
    saw_value_start: bool,
    last_complete_offset: usize,
    safe_point: usize,
    safe_stack: Vec<ContainerKind>,
    failed: bool,
}

impl Scanner {
    fn new() -> Self {
        Self {
            stack: Vec::new(),
            mode: Mode::Idle,
            top_level_done: false,
            saw_value_start: false,
            last_complete_offset: 0,
            safe_point: 0,
            safe_stack: Vec::new(),
            failed: false,
        }
    }

    fn stack_kinds(&self) -> Vec<ContainerKind> {
        self.stack
            .iter()
            .map(|f| match f {
                Frame::Object(_) => ContainerKind::Object,
                Frame::Array(_) => ContainerKind::Array,
            })
            .collect()
    }

    fn mark_safe(&mut self, offset: usize) {
        self.safe_point = offset;
        self.safe_stack = self.stack_kinds();
    }

    fn value_complete(&mut self, end: usize) {
        self.last_complete_offset = end;
        match self.stack.last_mut() {
            None => self.top_level_done = true,
            Some(Frame::Object(s)) => *s = ObjState::AfterValue,
            Some(Frame::Array(s)) => *s = ArrState::AfterValue,
        }
        self.mark_safe(end);
    }

    fn expects_value(&self) -> bool {
        if self.top_level_done {
            return false;
        }
        match self.stack.last() {
            None => !self.saw_value_start,
            Some(Frame::Object(s)) => *s == ObjState::ExpectValue,
            Some(Frame::Array(s)) => {
                matches!(s, ArrState::ExpectValueOrEnd | ArrState::ExpectValue)
            }
        }
    }

    /// Handle one byte in Idle mode. Returns false on a definitive syntax
    /// violation (input is not a prefix of any valid document).
    fn idle_byte(&mut self, b: u8, i: usize) -> bool {
        if b.is_ascii_whitespace() && matches!(b, b' ' | b'\t' | b'\n' | b'\r') {
            return true;
        }
        if self.top_level_done {
            return false; // trailing non-whitespace after the document
        }
        if self.expects_value() {
            // the document root must be an object or array; a scalar start
            // means the text began inside some other document
            if self.stack.is_empty() && !matches!(b, b'{' | b'[') {
                return false;
            }
            // ']' immediately after '[' closes an empty array
            if b == b']' {
                if let Some(Frame::Array(ArrState::ExpectValueOrEnd)) = self.stack.last() {
                    self.stack.pop();
                    self.value_complete(i + 1);
                    return true;
                }
                return false;
            }
            self.saw_value_start = true;
            match b {
                b'{' => {
                    self.stack.push(Frame::Object(ObjState::ExpectKeyOrEnd));
                    self.mark_safe(i + 1);
                }
                b'[' => {
                    self.stack.push(Frame::Array(ArrState::ExpectValueOrEnd));
                    self.mark_safe(i + 1);
                }
                b'"' => {
                    self.mode = Mode::InString {
                        is_key: false,
                        escape: false,
                        hex_remaining: 0,
                    }
                }
                b'-' => self.mode = Mode::InNumber(NumState::Minus),
                b'0' => self.mode = Mode::InNumber(NumState::IntZero),
                b'1'..=b'9' => self.mode = Mode::InNumber(NumState::Int),
                b't' => self.mode = Mode::InKeyword { word: "true", matched: 1 },
                b'f' => self.mode = Mode::InKeyword { word: "false", matched: 1 },
                b'n' => self.mode = Mode::InKeyword { word: "null", matched: 1 },
                _ => return false,
            }
            return true;
        }
        match self.stack.last().copied() {
            Some(Frame::Object(state)) => match (state, b) {
                (ObjState::ExpectKeyOrEnd, b'}') => {
                    self.stack.pop();
                    self.value_complete(i + 1);
                    true
                }
                (ObjState::ExpectKeyOrEnd | ObjState::ExpectKey, b'"') => {
                    self.mode = Mode::InString {
                        is_key: true,
                        escape: false,
                        hex_remaining: 0,
                    };
                    true
                }
                (ObjState::ExpectColon, b':') => {
                    if let Some(Frame::Object(s)) = self.stack.last_mut() {
                        *s = ObjState::ExpectValue;
                    }
                    true
                }
                (ObjState::AfterValue, b',') => {
                    if let Some(Frame::Object(s)) = self.stack.last_mut() {
                        *s = ObjState::ExpectKey;
                    }
                    true
                }
                (ObjState::AfterValue, b'}') => {
                    self.stack.pop();
                    self.value_complete(i + 1);
                    true
                }
                _ => false,
            },
            Some(Frame::Array(state)) => match (state, b) {
                (ArrState::AfterValue, b',') => {
                    if let Some(Frame::Array(s)) = self.stack.last_mut() {
                        *s = ArrState::ExpectValue;
                    }
                    true
                }
                (ArrState::AfterValue, b']') => {
                    self.stack.pop();
                    self.value_complete(i + 1);
                    true
                }
                _ => false,
            },
            None => false,
        }
    }

    fn number_byte(state: NumState, b: u8) -> Option<NumState> {
        use NumState::*;
        match (state, b) {
            (Minus, b'0') => Some(IntZero),
            (Minus, b'1'..=b'9') => Some(Int),
            (Int, b'0'..=b'9') => Some(Int),
            (IntZero | Int, b'.') => Some(FracDot),
            (IntZero | Int | Frac, b'e' | b'E') => Some(ExpMark),
            (FracDot | Frac, b'0'..=b'9') => Some(Frac),
            (ExpMark, b'+' | b'-') => Some(ExpSign),
            (ExpMark | ExpSign | Exp, b'0'..=b'9') => Some(Exp),
            _ => None,
        }
    }

    fn feed(&mut self, bytes: &[u8]) {
        let mut i = 0;
        while i < bytes.len() {
            if self.failed {
                return;
            }
            let b = bytes[i];
            match &mut self.mode {
                Mode::Idle => {
                    if !self.idle_byte(b, i) {
                        self.failed = true;
                        return;
                    }
                    i += 1;
                }
                Mode::InString {
                    is_key,
                    escape,
                    hex_remaining,
                } => {
                    if *hex_remaining > 0 {
                        if b.is_ascii_hexdigit() {
                            *hex_remaining -= 1;
                        } else {
                            self.failed = true;
                            return;
                        }
                    } else if *escape {
                        match b {
                            b'"' | b'\\' | b'/' | b'b' | b'f' | b'n' | b'r' | b't' => {
                                *escape = false
                            }
                            b'u' => {
                                *escape = false;
                                *hex_remaining = 4;
                            }
                            _ => {
                                self.failed = true;
                                return;
                            }
                        }
                    } else {
                        match b {
                            b'"' => {
                                let key = *is_key;
                                self.mode = Mode::Idle;
                                if key {
                                    if let Some(Frame::Object(s)) = self.stack.last_mut() {
                                        *s = ObjState::ExpectColon;
                                    }
                                } else {
                                    self.value_complete(i + 1);
                                }
                            }
                            b'\\' => *escape = true,
                            0x00..=0x1f => {
                                self.failed = true;
                                return;
                            }
                            _ => {}
                        }
                    }
                    i += 1;
                }
                Mode::InNumber(state) => {
                    if let Some(next) = Self::number_byte(*state, b) {
                        *state = next;
                        i += 1;
                    } else if matches!(b, b' ' | b'\t' | b'\n' | b'\r' | b',' | b'}' | b']')
                        && state.accepting()
                    {
                        self.mode = Mode::Idle;
                        self.value_complete(i);
                        // reprocess the delimiter in Idle mode
                    } else {
                        self.failed = true;
                        return;
                    }
                }
                Mode::InKeyword { word, matched } => {
                    if word.as_bytes().get(*matched) == Some(&b) {
                        *matched += 1;
                        let done = *matched == word.len();
                        i += 1;
                        if done {
                            self.mode = Mode::Idle;
                            self.value_complete(i);
                        }
                    } else {
                        self.failed = true;
                        return;
                    }
                }
            }
        }
    }

    fn finish(mut self, len: usize) -> PartialJsonScan {
        // A trailing number in an accepting state is a complete value at EOF.
        if !self.failed {
            if let Mode::InNumber(state) = self.mode {
                if state.accepting() {
                    self.mode = Mode::Idle;
                    self.value_complete(len);
                }
            }
        }
        let (in_string, escape) = match &self.mode {
            Mode::InString { escape, .. } => (true, *escape),
            _ => (false, false),
        };
        let status = if self.failed {
            ScanStatus::NotAPrefix
        } else if self.top_level_done && matches!(self.mode, Mode::Idle) && self.stack.is_empty() {
            ScanStatus::Complete
        } else {
            ScanStatus::Prefix
        };
        let container_stack = self
            .stack
            .iter()
            .map(|f| match f {
                Frame::Object(s) => ContainerFrame {
                    kind: ContainerKind::Object,
                    state: match s {
                        ObjState::ExpectKeyOrEnd | ObjState::ExpectKey => ContainerState::ExpectKey,
                        ObjState::ExpectColon => ContainerState::ExpectColon,
                        ObjState::ExpectValue => ContainerState::ExpectValue,
                        ObjState::AfterValue => ContainerState::AfterValue,
                    },
                },
                Frame::Array(s) => ContainerFrame {
                    kind: ContainerKind::Array,
                    state: match s {
                        ArrState::ExpectValueOrEnd | ArrState::ExpectValue => {
                            ContainerState::ExpectValue
                        }
                        ArrState::AfterValue => ContainerState::AfterValue,
                    },
                },
            })
            .collect();
        PartialJsonScan {
            status,
            container_stack,
            last_complete_offset: self.last_complete_offset,
            safe_point: self.safe_point,
            stack_at_safe_point: self.safe_stack,
            in_string,
            escape,
        }
    }
}

/// Scan sanitized UTF-8 text left to right.
pub fn scan_partial(text: &str) -> PartialJsonScan {
    let mut scanner = Scanner::new();
    scanner.feed(text.as_bytes());
    scanner.finish(text.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_document() {
        let scan = scan_partial("{\"a\": 1}");
        assert_eq!(scan.status, ScanStatus::Complete);
        assert!(scan.container_stack.is_empty());
        assert_eq!(scan.last_complete_offset, 8);
    }

    #[test]
    fn nested_prefix_tracks_stack_and_offset() {
        let text = "{\"a\": {\"b\": [1, 2";
        let scan = scan_partial(text);
        assert_eq!(scan.status, ScanStatus::Prefix);
        let kinds: Vec<ContainerKind> = scan.container_stack.iter().map(|f| f.kind).collect();
        assert_eq!(
            kinds,
            vec![
                ContainerKind::Object,
                ContainerKind::Object,
                ContainerKind::Array
            ]
        );
        // last complete value is the trailing `2`, ending at EOF
        assert_eq!(scan.last_complete_offset, text.len());
    }

    #[test]
    fn document_started_inside_another_is_not_a_prefix() {
        assert_eq!(scan_partial("\": 1}").status, ScanStatus::NotAPrefix);
    }

    #[test]
    fn trailing_content_after_document_is_not_a_prefix() {
        assert_eq!(scan_partial("{} {}").status, ScanStatus::NotAPrefix);
        assert_eq!(scan_partial("{}   ").status, ScanStatus::Complete);
    }

    #[test]
    fn dangling_key_and_colon_keep_safe_point_at_open_brace() {
        let scan = scan_partial("{\"a\":");
        assert_eq!(scan.status, ScanStatus::Prefix);
        assert_eq!(scan.safe_point, 1);
        assert_eq!(scan.stack_at_safe_point, vec![ContainerKind::Object]);
    }

    #[test]
    fn incomplete_number_is_prefix_but_not_safe() {
        let scan = scan_partial("{\"a\": 12.");
        assert_eq!(scan.status, ScanStatus::Prefix);
        assert_eq!(scan.safe_point, 1);
    }

    #[test]
    fn complete_trailing_number_is_safe_at_eof() {
        let scan = scan_partial("{\"a\": 12");
        assert_eq!(scan.status, ScanStatus::Prefix);
        assert_eq!(scan.safe_point, 8);
    }

    #[test]
    fn leading_zero_is_rejected() {
        assert_eq!(scan_partial("[01]").status, ScanStatus::NotAPrefix);
    }

    #[test]
    fn unterminated_string_is_prefix() {
        let scan = scan_partial("{\"a\": \"xy");
        assert_eq!(scan.status, ScanStatus::Prefix);
        assert!(scan.in_string);
        assert_eq!(scan.safe_point, 1);
    }

    #[test]
    fn raw_control_char_in_string_is_not_a_prefix() {
        assert_eq!(scan_partial("{\"a\": \"x\ny\"}").status, ScanStatus::NotAPrefix);
    }

    #[test]
    fn partial_escapes_are_prefixes() {
        assert_eq!(scan_partial("[\"a\\").status, ScanStatus::Prefix);
        assert_eq!(scan_partial("[\"a\\u12").status, ScanStatus::Prefix);
        assert_eq!(scan_partial("[\"a\\x\"").status, ScanStatus::NotAPrefix);
        assert_eq!(scan_partial("[\"a\\uZ\"").status, ScanStatus::NotAPrefix);
    }

    #[test]
    fn scalars_complete_inside_containers_only() {
        assert_eq!(scan_partial("[true]").status, ScanStatus::Complete);
        assert_eq!(scan_partial("[tru").status, ScanStatus::Prefix);
        assert_eq!(scan_partial("[trux").status, ScanStatus::NotAPrefix);
        assert_eq!(scan_partial("[12]").status, ScanStatus::Complete);
        assert_eq!(scan_partial("[12.").status, ScanStatus::Prefix);
        assert_eq!(scan_partial("[-").status, ScanStatus::Prefix);
    }

    #[test]
    fn bare_scalar_documents_are_rejected() {
        for text in ["true", "12", "\"x\"", "null", "-"] {
            assert_eq!(scan_partial(text).status, ScanStatus::NotAPrefix, "{text}");
        }
    }

    #[test]
    fn empty_and_whitespace_inputs_are_prefixes() {
        assert_eq!(scan_partial("").status, ScanStatus::Prefix);
        assert_eq!(scan_partial("  \n").status, ScanStatus::Prefix);
    }

    #[test]
    fn trailing_comma_is_prefix_not_complete() {
        let scan = scan_partial("{\"a\": 1,");
        assert_eq!(scan.status, ScanStatus::Prefix);
        // cut at the end of the `1`, so the trailing comma is dropped
        assert_eq!(scan.safe_point, 7);
    }
}
