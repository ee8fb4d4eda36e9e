use super::ast::{Annotation, DetectorKind, Expr, Rule, RuleSource};
use super::lexer::{tokenize, Spanned, Tok};
use super::{ParseError, ParseErrorKind};

/// Options for [`parse_rule_with`].
#[derive(Debug, Clone, Default)]
pub struct ParseOptions<'a> {
    /// When set, comparisons and detectors may only name these streams.
    pub declared_streams: Option<&'a [&'a str]>,
    /// Line number reported in diagnostics.
    pub line: usize,
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    opts: &'a ParseOptions<'a>,
    annotations: Vec<Annotation>,
}

impl Parser<'_> {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, at: &Spanned, kind: ParseErrorKind, message: String) -> ParseError {
        ParseError {
            line: at.line,
            column: at.column,
            kind,
            message,
        }
    }

    fn expected(&self, what: &str) -> ParseError {
        let at = self.peek();
        self.error_at(
            at,
            ParseErrorKind::Syntax,
            format!("expected {what}, found {}", at.tok.describe()),
        )
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Spanned, ParseError> {
        if self.peek().tok == want {
            Ok(self.bump())
        } else {
            Err(self.expected(what))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, Spanned), ParseError> {
        match &self.peek().tok {
            Tok::Ident(name) => {
                let name = name.clone();
                Ok((name, self.bump()))
            }
            _ => Err(self.expected(what)),
        }
    }

    fn check_stream(&self, name: &str, at: &Spanned) -> Result<(), ParseError> {
        if let Some(declared) = self.opts.declared_streams {
            if !declared.contains(&name) {
                return Err(self.error_at(
                    at,
                    ParseErrorKind::UnknownStream,
                    format!("unknown stream `{name}`"),
                ));
            }
        }
        Ok(())
    }

    fn rule(&mut self) -> Result<Rule, ParseError> {
        let (name, _) = self.expect_ident("rule name")?;
        self.expect(Tok::Assign, "`:=`")?;
        let expr = self.or_expr()?;
        if self.peek().tok != Tok::End {
            return Err(self.expected("`∨`, `∧` or end of rule"));
        }
        Ok(Rule {
            name,
            expr,
            annotations: std::mem::take(&mut self.annotations),
        })
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut items = vec![self.and_expr()?];
        while self.peek().tok == Tok::Or {
            self.bump();
            items.push(self.and_expr()?);
        }
        Ok(if items.len() == 1 {
            items.pop().expect("one item")
        } else {
            Expr::Or(items)
        })
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut items = vec![self.unary()?];
        while self.peek().tok == Tok::And {
            self.bump();
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 {
            items.pop().expect("one item")
        } else {
            Expr::And(items)
        })
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek().tok == Tok::Not {
            self.bump();
            return Ok(Expr::Not(Box::new(self.primary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().tok.clone() {
            Tok::LParen => {
                self.bump();
                let inner = self.or_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => match self.peek_at(1) {
                Tok::Rel(_) => self.compare(name),
                Tok::LParen => self.detector(name),
                _ => {
                    self.bump();
                    Ok(Expr::EventPredicate(name))
                }
            },
            _ => Err(self.expected("a comparison, detector, event name or `(`")),
        }
    }

    fn compare(&mut self, stream: String) -> Result<Expr, ParseError> {
        let at = self.bump();
        self.check_stream(&stream, &at)?;
        let op = match self.bump().tok {
            Tok::Rel(op) => op,
            _ => unreachable!("caller checked for a relation"),
        };
        let value = match self.peek().tok {
            Tok::Number(v) => {
                self.bump();
                v
            }
            _ => return Err(self.expected(&format!("a number after `{}`", op.symbol()))),
        };
        if let Tok::Ident(unit) = &self.peek().tok {
            let unit = unit.clone();
            let at = self.bump();
            self.annotations.push(Annotation {
                line: at.line,
                column: at.column,
                message: format!("unit `{unit}` after {value} ignored"),
            });
        }
        Ok(Expr::Compare { stream, op, value })
    }

    fn detector(&mut self, name: String) -> Result<Expr, ParseError> {
        let at = self.bump();
        let kind = DetectorKind::from_name(&name).ok_or_else(|| {
            self.error_at(
                &at,
                ParseErrorKind::UnknownDetector,
                format!("unknown detector `{name}`"),
            )
        })?;
        self.expect(Tok::LParen, "`(`")?;
        let (stream, stream_at) = self.expect_ident("a stream name")?;
        self.check_stream(&stream, &stream_at)?;
        let mut params = Vec::new();
        while self.peek().tok == Tok::Comma {
            self.bump();
            let (key, key_at) = self.expect_ident("a parameter name")?;
            if !kind.defaults().iter().any(|(k, _)| *k == key) {
                return Err(self.error_at(
                    &key_at,
                    ParseErrorKind::Parameter,
                    format!("`{}` has no parameter `{key}`", kind.name()),
                ));
            }
            self.expect(Tok::Equals, "`=`")?;
            let value = match self.peek().tok {
                Tok::Number(v) => {
                    self.bump();
                    v
                }
                _ => return Err(self.expected("a number")),
            };
            if key == "window_s" && !(value >= 1.0 && value.fract() == 0.0) {
                return Err(self.error_at(
                    &key_at,
                    ParseErrorKind::Parameter,
                    format!("window_s must be a positive whole number of seconds, got {value}"),
                ));
            }
            params.push((key, value));
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(Expr::Detector {
            kind,
            stream,
            params,
        })
    }
}

pub fn parse_rule_with(text: &str, opts: &ParseOptions<'_>) -> Result<Rule, ParseError> {
    let line = opts.line.max(1);
    let toks = tokenize(text, line)?;
    let mut p = Parser {
        toks,
        pos: 0,
        opts,
        annotations: Vec::new(),
    };
    p.rule()
}

/// Parses a single `Name := expression` rule.
pub fn parse_rule(text: &str) -> Result<Rule, ParseError> {
    parse_rule_with(text, &ParseOptions::default())
}

pub fn parse_rule_source(src: &RuleSource, declared: Option<&[&str]>) -> Result<Rule, ParseError> {
    parse_rule_with(
        &src.body,
        &ParseOptions {
            declared_streams: declared,
            line: 1,
        },
    )
}

/// Parses a rule file: one rule per line, `#` starts a comment.
pub fn parse_rule_file(text: &str, declared: Option<&[&str]>) -> Result<Vec<Rule>, ParseError> {
    let mut rules: Vec<Rule> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let rule = parse_rule_with(
            body,
            &ParseOptions {
                declared_streams: declared,
                line: i + 1,
            },
        )?;
        if rules.iter().any(|r| r.name == rule.name) {
            return Err(ParseError {
                line: i + 1,
                column: 1,
                kind: ParseErrorKind::Syntax,
                message: format!("rule `{}` is defined twice", rule.name),
            });
        }
        rules.push(rule);
    }
    Ok(rules)
}
