use super::ast::is_id_continue;
use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum TokenKind {
    Word(String),
    Str(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Colon,
    Comma,
    Eof,
}

impl TokenKind {
    pub(crate) fn describe(&self) -> String {
        match self {
            TokenKind::Word(w) => format!("`{w}`"),
            TokenKind::Str(_) => "string literal".to_owned(),
            TokenKind::LBrace => "`{`".to_owned(),
            TokenKind::RBrace => "`}`".to_owned(),
            TokenKind::LBracket => "`[`".to_owned(),
            TokenKind::RBracket => "`]`".to_owned(),
            TokenKind::Colon => "`:`".to_owned(),
            TokenKind::Comma => "`,`".to_owned(),
            TokenKind::Eof => "end of input".to_owned(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
}

pub(crate) struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Self {
            src,
            pos: 0,
            line: 1,
            column: 1,
        }
    }

    pub(crate) fn tokenize(mut self) -> Result<Vec<Token>, ParseError> {
        let mut tokens = Vec::new();
        loop {
            let token = self.next_token()?;
            let done = token.kind == TokenKind::Eof;
            tokens.push(token);
            if done {
                return Ok(tokens);
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, line: usize, column: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line,
            column,
            production: "Token",
            message: message.into(),
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self) -> Result<Token, ParseError> {
        self.skip_trivia();
        let (line, column) = (self.line, self.column);
        let token = |kind| Token { kind, line, column };
        let Some(c) = self.peek() else {
            return Ok(token(TokenKind::Eof));
        };
        let simple = match c {
            '{' => Some(TokenKind::LBrace),
            '}' => Some(TokenKind::RBrace),
            '[' => Some(TokenKind::LBracket),
            ']' => Some(TokenKind::RBracket),
            ':' => Some(TokenKind::Colon),
            ',' => Some(TokenKind::Comma),
            _ => None,
        };
        if let Some(kind) = simple {
            self.bump();
            return Ok(token(kind));
        }
        if c == '"' {
            let value = if self.src[self.pos..].starts_with("\"\"\"") {
                self.triple_string(line, column)?
            } else {
                self.quoted_string(line, column)?
            };
            return Ok(token(TokenKind::Str(value)));
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.peek().is_some_and(is_id_continue) {
                self.bump();
            }
            return Ok(token(TokenKind::Word(self.src[start..self.pos].to_owned())));
        }
        Err(self.error(line, column, format!("unexpected character {c:?}")))
    }

    fn triple_string(&mut self, line: usize, column: usize) -> Result<String, ParseError> {
        for _ in 0..3 {
            self.bump();
        }
        // A newline directly after the opening quotes is not part of the value.
        if self.peek() == Some('\n') {
            self.bump();
        }
        let start = self.pos;
        match self.src[start..].find("\"\"\"") {
            Some(len) => {
                let value = self.src[start..start + len].to_owned();
                while self.pos < start + len + 3 {
                    self.bump();
                }
                Ok(value)
            }
            None => Err(self.error(line, column, "unterminated triple-quoted string")),
        }
    }

    fn quoted_string(&mut self, line: usize, column: usize) -> Result<String, ParseError> {
        self.bump();
        let mut value = String::new();
        loop {
            let Some(c) = self.bump() else {
                return Err(self.error(line, column, "unterminated string"));
            };
            match c {
                '"' => return Ok(value),
                '\n' => return Err(self.error(line, column, "newline in string literal")),
                '\\' => {
                    let (el, ec) = (self.line, self.column);
                    match self.bump() {
                        Some('"') => value.push('"'),
                        Some('\\') => value.push('\\'),
                        Some('n') => value.push('\n'),
                        Some('r') => value.push('\r'),
                        Some('t') => value.push('\t'),
                        Some('u') => value.push(self.unicode_escape(el, ec)?),
                        other => {
                            return Err(self.error(el, ec, format!("invalid escape {other:?}")))
                        }
                    }
                }
                c => value.push(c),
            }
        }
    }

    fn unicode_escape(&mut self, line: usize, column: usize) -> Result<char, ParseError> {
        if self.bump() != Some('{') {
            return Err(self.error(line, column, "expected `{` after \\u"));
        }
        let mut hex = String::new();
        loop {
            match self.bump() {
                Some('}') => break,
                Some(c) if c.is_ascii_hexdigit() && hex.len() < 6 => hex.push(c),
                _ => return Err(self.error(line, column, "malformed \\u{...} escape")),
            }
        }
        u32::from_str_radix(&hex, 16)
            .ok()
            .and_then(char::from_u32)
            .ok_or_else(|| self.error(line, column, "invalid unicode scalar in escape"))
    }
}
