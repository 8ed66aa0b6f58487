use std::path::Path;

use crate::diagnostics::{Code, Diagnostic, SourceSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Keyword {
    App,
    Vars,
    Bool,
    Enum,
    States,
    Functions,
    Transitions,
    On,
    When,
    And,
    Set,
    Does,
    True,
    False,
}

impl Keyword {
    pub(crate) const ALL: [(&'static str, Keyword); 14] = [
        ("app", Keyword::App),
        ("vars", Keyword::Vars),
        ("bool", Keyword::Bool),
        ("enum", Keyword::Enum),
        ("states", Keyword::States),
        ("functions", Keyword::Functions),
        ("transitions", Keyword::Transitions),
        ("on", Keyword::On),
        ("when", Keyword::When),
        ("and", Keyword::And),
        ("set", Keyword::Set),
        ("does", Keyword::Does),
        ("true", Keyword::True),
        ("false", Keyword::False),
    ];

    pub(crate) fn as_str(self) -> &'static str {
        Self::ALL.iter().find(|(_, k)| *k == self).unwrap().0
    }

    fn lookup(word: &str) -> Option<Keyword> {
        Self::ALL.iter().find(|(w, _)| *w == word).map(|(_, k)| *k)
    }

    pub(crate) fn is_section(self) -> bool {
        matches!(
            self,
            Keyword::Vars | Keyword::States | Keyword::Functions | Keyword::Transitions
        )
    }
}

pub fn is_keyword(word: &str) -> bool {
    Keyword::lookup(word).is_some()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    Kw(Keyword),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Colon,
    Star,
    Arrow,
    EqEq,
    NotEq,
    Assign,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string".into(),
            Tok::Kw(k) => format!("'{}'", k.as_str()),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Colon => "':'".into(),
            Tok::Star => "'*'".into(),
            Tok::Arrow => "'->'".into(),
            Tok::EqEq => "'=='".into(),
            Tok::NotEq => "'!='".into(),
            Tok::Assign => "'='".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }
}

/// Splits source text into tokens. Lexical errors are reported and the
/// offending characters skipped, so parsing can continue.
pub(crate) fn tokenize(src: &str, file: &Path) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut cur = Cursor {
        chars: src.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut toks = Vec::new();
    let mut diags = Vec::new();
    let span = |line, col, len| SourceSpan::new(file, line, col, len);

    while let Some(c) = cur.peek() {
        let (line, col) = (cur.line, cur.col);
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '#' {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut word = String::new();
            while let Some(c) = cur.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    word.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
            let len = word.len() as u32;
            let tok = match Keyword::lookup(&word) {
                Some(k) => Tok::Kw(k),
                None => Tok::Ident(word),
            };
            toks.push(Token {
                tok,
                span: span(line, col, len),
            });
            continue;
        }
        if c == '"' {
            cur.bump();
            let mut text = String::new();
            let mut raw_len = 1u32;
            let mut closed = false;
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
                raw_len += 1;
                match c {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => match cur.peek() {
                        Some(e @ ('"' | '\\')) => {
                            cur.bump();
                            raw_len += 1;
                            text.push(e);
                        }
                        Some(other) if other != '\n' => {
                            diags.push(
                                Diagnostic::new(
                                    Code::SyntaxError,
                                    "",
                                    format!("unknown escape `\\{other}` (only `\\\"` and `\\\\` are allowed)"),
                                )
                                .at(Some(&span(cur.line, cur.col - 1, 2))),
                            );
                            cur.bump();
                            raw_len += 1;
                        }
                        _ => {}
                    },
                    c => text.push(c),
                }
            }
            if !closed {
                diags.push(
                    Diagnostic::new(Code::SyntaxError, "", "unterminated string literal")
                        .at(Some(&span(line, col, raw_len))),
                );
            }
            toks.push(Token {
                tok: Tok::Str(text),
                span: span(line, col, raw_len),
            });
            continue;
        }
        cur.bump();
        let two = |cur: &mut Cursor<'_>, next: char| {
            if cur.peek() == Some(next) {
                cur.bump();
                true
            } else {
                false
            }
        };
        let (tok, len) = match c {
            '{' => (Some(Tok::LBrace), 1),
            '}' => (Some(Tok::RBrace), 1),
            '(' => (Some(Tok::LParen), 1),
            ')' => (Some(Tok::RParen), 1),
            ',' => (Some(Tok::Comma), 1),
            ':' => (Some(Tok::Colon), 1),
            '*' => (Some(Tok::Star), 1),
            '-' if two(&mut cur, '>') => (Some(Tok::Arrow), 2),
            '=' if two(&mut cur, '=') => (Some(Tok::EqEq), 2),
            '=' => (Some(Tok::Assign), 1),
            '!' if two(&mut cur, '=') => (Some(Tok::NotEq), 2),
            _ => (None, 1),
        };
        match tok {
            Some(tok) => toks.push(Token {
                tok,
                span: span(line, col, len),
            }),
            None => diags.push(
                Diagnostic::new(Code::SyntaxError, "", format!("unexpected character `{c}`"))
                    .at(Some(&span(line, col, 1))),
            ),
        }
    }
    toks.push(Token {
        tok: Tok::Eof,
        span: span(cur.line, cur.col, 1),
    });
    (toks, diags)
}
