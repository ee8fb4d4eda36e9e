use super::ast::RelOp;
use super::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    Assign,
    LParen,
    RParen,
    Comma,
    Equals,
    Rel(RelOp),
    Or,
    And,
    Not,
    End,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(v) => format!("number `{v}`"),
            Tok::Assign => "`:=`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Equals => "`=`".into(),
            Tok::Rel(op) => format!("`{}`", op.symbol()),
            Tok::Or => "`OR`".into(),
            Tok::And => "`AND`".into(),
            Tok::Not => "`NOT`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

/// A token with its 1-based line and column (in characters).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == '.'
}

pub(crate) fn tokenize(src: &str, line: usize) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |column: usize, message: String| ParseError {
        line,
        column,
        kind: ParseErrorKind::Syntax,
        message,
    };

    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '∨' => Some(Tok::Or),
            '∧' => Some(Tok::And),
            '¬' => Some(Tok::Not),
            '≥' => Some(Tok::Rel(RelOp::Ge)),
            '≤' => Some(Tok::Rel(RelOp::Le)),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned { tok, line, column });
            i += 1;
            continue;
        }
        let next = chars.get(i + 1).copied();
        let pair = match (c, next) {
            (':', Some('=')) => Some(Tok::Assign),
            ('>', Some('=')) => Some(Tok::Rel(RelOp::Ge)),
            ('<', Some('=')) => Some(Tok::Rel(RelOp::Le)),
            ('=', Some('=')) => Some(Tok::Rel(RelOp::Eq)),
            _ => None,
        };
        if let Some(tok) = pair {
            out.push(Spanned { tok, line, column });
            i += 2;
            continue;
        }
        match c {
            '>' => {
                out.push(Spanned {
                    tok: Tok::Rel(RelOp::Gt),
                    line,
                    column,
                });
                i += 1;
            }
            '<' => {
                out.push(Spanned {
                    tok: Tok::Rel(RelOp::Lt),
                    line,
                    column,
                });
                i += 1;
            }
            '=' => {
                out.push(Spanned {
                    tok: Tok::Equals,
                    line,
                    column,
                });
                i += 1;
            }
            c if c.is_ascii_digit()
                || (c == '-' && next.is_some_and(|n| n.is_ascii_digit() || n == '.'))
                || (c == '.' && next.is_some_and(|n| n.is_ascii_digit())) =>
            {
                let start = i;
                i += 1;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // Exponent only when followed by digits, so `400 e` stays a unit.
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value = text
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(column, format!("malformed number `{text}`")))?;
                out.push(Spanned {
                    tok: Tok::Number(value),
                    line,
                    column,
                });
            }
            c if is_ident_start(c) => {
                let start = i;
                while i < chars.len() && is_ident_continue(chars[i]) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let tok = match word.as_str() {
                    "OR" => Tok::Or,
                    "AND" => Tok::And,
                    "NOT" => Tok::Not,
                    _ => Tok::Ident(word),
                };
                out.push(Spanned { tok, line, column });
            }
            other => return Err(err(column, format!("unexpected character `{other}`"))),
        }
    }
    out.push(Spanned {
        tok: Tok::End,
        line,
        column: chars.len() + 1,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s, 1).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn operators_and_synonyms() {
        assert_eq!(
            toks("a ∨ b OR c ∧ d AND ¬ e NOT f"),
            vec![
                Tok::Ident("a".into()),
                Tok::Or,
                Tok::Ident("b".into()),
                Tok::Or,
                Tok::Ident("c".into()),
                Tok::And,
                Tok::Ident("d".into()),
                Tok::And,
                Tok::Not,
                Tok::Ident("e".into()),
                Tok::Not,
                Tok::Ident("f".into()),
                Tok::End
            ]
        );
    }

    #[test]
    fn relations() {
        assert_eq!(
            toks("> >= ≥ < <= ≤ =="),
            vec![
                Tok::Rel(RelOp::Gt),
                Tok::Rel(RelOp::Ge),
                Tok::Rel(RelOp::Ge),
                Tok::Rel(RelOp::Lt),
                Tok::Rel(RelOp::Le),
                Tok::Rel(RelOp::Le),
                Tok::Rel(RelOp::Eq),
                Tok::End
            ]
        );
    }

    #[test]
    fn numbers_and_hyphenated_names() {
        assert_eq!(
            toks("detect-climb(Altitude, gain_m=-2.5) 400W 1e3"),
            vec![
                Tok::Ident("detect-climb".into()),
                Tok::LParen,
                Tok::Ident("Altitude".into()),
                Tok::Comma,
                Tok::Ident("gain_m".into()),
                Tok::Equals,
                Tok::Number(-2.5),
                Tok::RParen,
                Tok::Number(400.0),
                Tok::Ident("W".into()),
                Tok::Number(1000.0),
                Tok::End
            ]
        );
    }

    #[test]
    fn columns_count_characters() {
        let t = tokenize("¬ HR", 3).unwrap();
        assert_eq!((t[1].line, t[1].column), (3, 3));
        assert_eq!(t[2].column, 5);
        assert!(tokenize("a $ b", 1).is_err());
    }
}
