use std::path::{Path, PathBuf};

use super::lexer::{tokenize, Keyword, Tok, Token};
use crate::diagnostics::{Code, Diagnostic, Diagnostics, SourceSpan};
use crate::model::{
    Comparator, Literal, RawAction, RawAssign, RawAtom, RawDomain, RawFunction, RawMachine, RawTransition, RawVar,
    Spanned,
};

/// The parsed contents of one model file: unvalidated app descriptions in
/// source order, each node carrying its source span.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDocument {
    pub file: PathBuf,
    pub apps: Vec<RawMachine>,
}

/// Marker for "this construct failed; diagnostics already recorded".
struct Failed;

type PResult<T> = Result<T, Failed>;

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].span.clone()
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_kw(&self, kw: Keyword) -> bool {
        *self.peek() == Tok::Kw(kw)
    }

    fn error_here(&mut self, expected: &[&str]) -> Failed {
        let found = self.peek().describe();
        let message = format!("expected {}, found {found}", expected.join(" or "));
        let d = Diagnostic::new(Code::SyntaxError, "", message)
            .at(Some(&self.span()))
            .expecting(expected.iter().map(|s| s.to_string()).collect());
        self.diags.push(d);
        Failed
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> PResult<SourceSpan> {
        if *self.peek() == tok {
            Ok(self.bump().span)
        } else {
            Err(self.error_here(&[expected]))
        }
    }

    fn expect_kw(&mut self, kw: Keyword) -> PResult<SourceSpan> {
        let label = format!("'{}'", kw.as_str());
        self.expect(Tok::Kw(kw), &label)
    }

    fn ident(&mut self) -> PResult<Spanned<String>> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.bump().span;
                Ok(Spanned::new(name, Some(span)))
            }
            _ => Err(self.error_here(&["identifier"])),
        }
    }

    fn string(&mut self) -> PResult<Spanned<String>> {
        match self.peek().clone() {
            Tok::Str(text) => {
                let span = self.bump().span;
                Ok(Spanned::new(text, Some(span)))
            }
            _ => Err(self.error_here(&["string"])),
        }
    }

    fn literal(&mut self) -> PResult<Spanned<Literal>> {
        let lit = match self.peek().clone() {
            Tok::Kw(Keyword::True) => Literal::Bool(true),
            Tok::Kw(Keyword::False) => Literal::Bool(false),
            Tok::Ident(name) => Literal::Sym(name),
            _ => return Err(self.error_here(&["'true'", "'false'", "identifier"])),
        };
        let span = self.bump().span;
        Ok(Spanned::new(lit, Some(span)))
    }

    /// `( IDENT ("," IDENT)* )`, assuming the current token is `(`.
    fn ident_list(&mut self) -> PResult<Vec<Spanned<String>>> {
        self.expect(Tok::LParen, "'('")?;
        let mut out = vec![self.ident()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            out.push(self.ident()?);
        }
        self.expect(Tok::RParen, "')'")?;
        Ok(out)
    }

    fn at_block_boundary(&self) -> bool {
        match self.peek() {
            Tok::Eof => true,
            Tok::Kw(k) => k.is_section() || *k == Keyword::App,
            _ => false,
        }
    }

    /// Skips to just after the `}` that closes the current block, stopping
    /// early (without consuming) at a section keyword, `app`, or end of
    /// input. Returns true if the closing brace was consumed.
    fn recover_to_block_end(&mut self) -> bool {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::LBrace => depth += 1,
                Tok::RBrace if depth == 0 => {
                    self.bump();
                    return true;
                }
                Tok::RBrace => depth -= 1,
                _ if depth == 0 && self.at_block_boundary() => return false,
                Tok::Eof => return false,
                _ => {}
            }
            self.bump();
        }
    }

    fn unterminated(&mut self, what: &str, open: &SourceSpan) {
        let found = self.peek().describe();
        self.diags.push(
            Diagnostic::new(
                Code::UnterminatedBlock,
                "",
                format!("`{what}` block is not closed (reached {found})"),
            )
            .at(Some(open))
            .expecting(vec!["'}'".into()]),
        );
    }

    /// Parses `{ item* }` where items are produced by `item`. Errors inside
    /// an item recover at `resync` points or at the end of the block.
    fn block<T>(
        &mut self,
        name: &str,
        open: &SourceSpan,
        mut item: impl FnMut(&mut Self) -> PResult<T>,
        resync: impl Fn(&Self) -> bool,
    ) -> Vec<T> {
        let mut out = Vec::new();
        if self.expect(Tok::LBrace, "'{'").is_err() {
            self.recover_to_block_end();
            return out;
        }
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    return out;
                }
                _ if self.at_block_boundary() => {
                    self.unterminated(name, open);
                    return out;
                }
                _ => {}
            }
            match item(self) {
                Ok(v) => out.push(v),
                Err(Failed) => {
                    // Resynchronise at the next item start, or give up on
                    // the block.
                    loop {
                        if resync(self) || *self.peek() == Tok::RBrace || self.at_block_boundary() {
                            break;
                        }
                        if *self.peek() == Tok::LBrace {
                            self.bump();
                            self.recover_to_block_end();
                            continue;
                        }
                        self.bump();
                    }
                }
            }
        }
    }

    fn vardecl(&mut self) -> PResult<RawVar> {
        let name = self.ident()?;
        self.expect(Tok::Colon, "':'")?;
        let domain = match self.peek() {
            Tok::Kw(Keyword::Bool) => {
                self.bump();
                RawDomain::Bool
            }
            Tok::Kw(Keyword::Enum) => {
                self.bump();
                RawDomain::Enum(self.ident_list()?)
            }
            _ => return Err(self.error_here(&["'bool'", "'enum'"])),
        };
        if *self.peek() != Tok::Assign {
            return Err(self.error_here(&["'='"]));
        }
        self.bump();
        let initial = self.literal()?;
        Ok(RawVar { name, domain, initial })
    }

    fn states(&mut self, open: &SourceSpan) -> (Vec<Spanned<String>>, Vec<Spanned<String>>) {
        let mut states = Vec::new();
        let mut initial = Vec::new();
        if self.expect(Tok::LBrace, "'{'").is_err() {
            self.recover_to_block_end();
            return (states, initial);
        }
        let result = (|| -> PResult<()> {
            loop {
                let name = self.ident()?;
                if *self.peek() == Tok::Star {
                    self.bump();
                    initial.push(name.clone());
                }
                states.push(name);
                match self.peek() {
                    Tok::Comma => {
                        self.bump();
                    }
                    Tok::RBrace => {
                        self.bump();
                        return Ok(());
                    }
                    _ if self.at_block_boundary() => {
                        self.unterminated("states", open);
                        return Ok(());
                    }
                    _ => return Err(self.error_here(&["','", "'*'", "'}'"])),
                }
            }
        })();
        if result.is_err() {
            self.recover_to_block_end();
        }
        (states, initial)
    }

    fn funcdecl(&mut self) -> PResult<RawFunction> {
        let name = self.ident()?;
        let params = if *self.peek() == Tok::LParen {
            self.ident_list()?
        } else {
            Vec::new()
        };
        let description = if *self.peek() == Tok::Colon {
            self.bump();
            Some(self.string()?)
        } else {
            None
        };
        Ok(RawFunction {
            name,
            params,
            description,
        })
    }

    fn atom(&mut self) -> PResult<RawAtom> {
        let var = self.ident()?;
        let cmp = match self.peek() {
            Tok::EqEq => Comparator::Eq,
            Tok::NotEq => Comparator::Ne,
            Tok::Assign => {
                let d = Diagnostic::new(
                    Code::SyntaxError,
                    "",
                    "expected '==' or '!=', found '='; did you mean '=='?",
                )
                .at(Some(&self.span()))
                .expecting(vec!["'=='".into(), "'!='".into()]);
                self.diags.push(d);
                return Err(Failed);
            }
            _ => return Err(self.error_here(&["'=='", "'!='"])),
        };
        self.bump();
        let value = self.literal()?;
        Ok(RawAtom { var, cmp, value })
    }

    fn assignment(&mut self) -> PResult<RawAssign> {
        let var = self.ident()?;
        match self.peek() {
            Tok::Assign => {
                self.bump();
            }
            Tok::EqEq => {
                let d = Diagnostic::new(
                    Code::SyntaxError,
                    "",
                    "expected '=', found '=='; assignments use a single '='",
                )
                .at(Some(&self.span()))
                .expecting(vec!["'='".into()]);
                self.diags.push(d);
                return Err(Failed);
            }
            _ => return Err(self.error_here(&["'='"])),
        }
        let value = self.literal()?;
        Ok(RawAssign { var, value })
    }

    fn transition(&mut self) -> PResult<RawTransition> {
        let id = self.ident()?;
        self.expect(Tok::Colon, "':'")?;
        let source = self.ident()?;
        self.expect(Tok::Arrow, "'->'")?;
        let target = self.ident()?;
        self.expect_kw(Keyword::On)?;
        let event = self.string()?;
        let mut guard = Vec::new();
        if self.at_kw(Keyword::When) {
            self.bump();
            guard.push(self.atom()?);
            while self.at_kw(Keyword::And) {
                self.bump();
                guard.push(self.atom()?);
            }
        }
        let mut update = Vec::new();
        if self.at_kw(Keyword::Set) {
            self.bump();
            update.push(self.assignment()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                update.push(self.assignment()?);
            }
        }
        let mut action = None;
        if self.at_kw(Keyword::Does) {
            self.bump();
            let function = self.ident()?;
            let slots = if *self.peek() == Tok::LParen {
                Some(self.ident_list()?)
            } else {
                None
            };
            action = Some(RawAction { function, slots });
        }
        // A transition ends at the next transition header or the block end.
        if !(self.at_transition_start() || *self.peek() == Tok::RBrace || self.at_block_boundary()) {
            let expected: &[&str] = if action.is_some() {
                &["'('", "transition", "'}'"]
            } else if !update.is_empty() {
                &["','", "'does'", "transition", "'}'"]
            } else if !guard.is_empty() {
                &["'and'", "'set'", "'does'", "transition", "'}'"]
            } else {
                &["'when'", "'set'", "'does'", "transition", "'}'"]
            };
            return Err(self.error_here(expected));
        }
        Ok(RawTransition {
            id,
            source,
            target,
            event,
            guard,
            update,
            action,
        })
    }

    /// `IDENT ':'` starts a transition; colons appear nowhere else inside one.
    fn at_transition_start(&self) -> bool {
        matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Colon
    }

    fn app(&mut self) -> Option<RawMachine> {
        let app_kw = self.bump().span;
        let app_id = match self.string() {
            Ok(s) => s,
            Err(Failed) => {
                self.skip_to_next_app();
                return None;
            }
        };
        if self.expect(Tok::LBrace, "'{'").is_err() {
            self.skip_to_next_app();
            return None;
        }
        let mut machine = RawMachine {
            app_id,
            vars: Vec::new(),
            states: Vec::new(),
            initial: Vec::new(),
            functions: Vec::new(),
            transitions: Vec::new(),
        };
        let mut seen: Vec<Keyword> = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Eof | Tok::Kw(Keyword::App) => {
                    self.unterminated("app", &app_kw);
                    break;
                }
                Tok::Kw(kw) if kw.is_section() => {
                    let open = self.bump().span;
                    let duplicate = seen.contains(&kw);
                    if duplicate {
                        self.diags.push(
                            Diagnostic::new(
                                Code::DuplicateSection,
                                format!("app {}", machine.app_id.value),
                                format!("`{}` section appears more than once", kw.as_str()),
                            )
                            .at(Some(&open)),
                        );
                    } else {
                        seen.push(kw);
                    }
                    self.section(kw, &open, &mut machine, duplicate);
                }
                _ => {
                    self.error_here(&["'vars'", "'states'", "'functions'", "'transitions'", "'}'"]);
                    // Skip to the next section keyword or the app's end.
                    loop {
                        match self.peek() {
                            Tok::RBrace | Tok::Eof => break,
                            Tok::Kw(k) if k.is_section() || *k == Keyword::App => break,
                            Tok::LBrace => {
                                self.bump();
                                self.recover_to_block_end();
                            }
                            _ => {
                                self.bump();
                            }
                        }
                    }
                }
            }
        }
        for (kw, label) in [(Keyword::States, "states"), (Keyword::Transitions, "transitions")] {
            if !seen.contains(&kw) {
                self.diags.push(
                    Diagnostic::new(
                        Code::SyntaxError,
                        format!("app {}", machine.app_id.value),
                        format!("app is missing its '{label}' section"),
                    )
                    .at(machine.app_id.span.as_ref())
                    .expecting(vec![format!("'{label}'")]),
                );
            }
        }
        Some(machine)
    }

    fn section(&mut self, kw: Keyword, open: &SourceSpan, machine: &mut RawMachine, discard: bool) {
        match kw {
            Keyword::Vars => {
                let vars = self.block("vars", open, Self::vardecl, |p| {
                    matches!(p.peek(), Tok::Ident(_)) && *p.peek_at(1) == Tok::Colon
                });
                if !discard {
                    machine.vars = vars;
                }
            }
            Keyword::States => {
                let (states, initial) = self.states(open);
                if !discard {
                    machine.states = states;
                    machine.initial = initial;
                }
            }
            Keyword::Functions => {
                let functions = self.block("functions", open, Self::funcdecl, |_| false);
                if !discard {
                    machine.functions = functions;
                }
            }
            Keyword::Transitions => {
                let transitions = self.block("transitions", open, Self::transition, Self::at_transition_start);
                if !discard {
                    machine.transitions = transitions;
                }
            }
            _ => unreachable!("not a section keyword"),
        }
    }

    fn skip_to_next_app(&mut self) {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::Kw(Keyword::App) if depth == 0 => return,
                Tok::LBrace => depth += 1,
                Tok::RBrace => depth = depth.saturating_sub(1),
                _ => {}
            }
            self.bump();
        }
    }
}

/// Parses model source text. On failure, returns every syntax diagnostic
/// found; the parser recovers at block boundaries so one run can report
/// several independent errors.
pub fn parse_model(text: &str) -> Result<ModelDocument, Diagnostics> {
    parse_model_in(Path::new("<input>"), text)
}

/// As [`parse_model`], attributing spans to `file`.
pub fn parse_model_in(file: &Path, text: &str) -> Result<ModelDocument, Diagnostics> {
    let (toks, lex_diags) = tokenize(text, file);
    let mut p = Parser {
        toks,
        pos: 0,
        diags: lex_diags,
    };
    let mut apps = Vec::new();
    if *p.peek() == Tok::Eof {
        p.error_here(&["'app'"]);
    }
    while *p.peek() != Tok::Eof {
        if p.at_kw(Keyword::App) {
            if let Some(app) = p.app() {
                apps.push(app);
            }
        } else {
            p.error_here(&["'app'"]);
            p.bump();
            p.skip_to_next_app();
        }
    }
    if p.diags.is_empty() {
        Ok(ModelDocument {
            file: file.to_path_buf(),
            apps,
        })
    } else {
        p.diags.sort_by_key(|d| d.span.as_ref().map(|s| (s.line, s.column)));
        Err(Diagnostics(p.diags))
    }
}
