use std::sync::Arc;

use microrelay_core::Span;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// `%name`
    Local(String),
    /// `@name`
    Global(String),
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Punct(&'static str),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Local(n) => format!("`%{n}`"),
            Tok::Global(n) => format!("`@{n}`"),
            Tok::Ident(n) => format!("`{n}`"),
            Tok::Int(v) => format!("`{v}`"),
            Tok::Float(v) => format!("`{v:?}`"),
            Tok::Str(s) => format!("{s:?}"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => String::from("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("SyntaxError at {span}: {message}")]
pub struct LexError {
    pub span: Span,
    pub message: String,
}

const PUNCT: [&str; 19] = [":=", "->", "=>", "(", ")", "[", "]", "{", "}", "<", ">", ",", ";", ":", ".", "=", "!", "?", "-"];

fn ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub fn lex(text: &str, file: &Arc<str>) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out: Vec<Token> = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let span = |l0: u32, c0: u32, l1: u32, c1: u32| Span {
        file: file.clone(),
        start_line: l0,
        start_col: c0,
        end_line: l1,
        end_col: c1,
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (l0, c0, start) = (line, col, i);
        let after_dot = matches!(out.last(), Some(Token { tok: Tok::Punct("."), .. }));
        let tok = if c == '%' || c == '@' {
            i += 1;
            while i < chars.len() && ident_char(chars[i]) {
                i += 1;
            }
            let name: String = chars[start + 1..i].iter().collect();
            if name.is_empty() {
                return Err(LexError { span: span(l0, c0, l0, c0 + 1), message: format!("expected a name after `{c}`") });
            }
            if c == '%' {
                Tok::Local(name)
            } else {
                Tok::Global(name)
            }
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut float = false;
            if !after_dot && i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if !after_dot && i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    float = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let bad = || LexError { span: span(l0, c0, line, col + (i - start) as u32), message: format!("malformed number `{s}`") };
            if float {
                Tok::Float(s.parse().map_err(|_| bad())?)
            } else {
                Tok::Int(s.parse().map_err(|_| bad())?)
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && ident_char(chars[i]) {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c == '"' {
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(LexError { span: span(l0, c0, l0, c0 + 1), message: String::from("unterminated string") })
                    }
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some('n') => s.push('\n'),
                            Some(&e @ ('"' | '\\')) => s.push(e),
                            _ => {
                                return Err(LexError { span: span(l0, c0, l0, c0 + 1), message: String::from("bad escape in string") })
                            }
                        }
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            Tok::Str(s)
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match PUNCT.iter().find(|p| rest.starts_with(**p)) {
                Some(p) => {
                    i += p.len();
                    Tok::Punct(p)
                }
                None => {
                    return Err(LexError { span: span(l0, c0, l0, c0 + 1), message: format!("unexpected character `{c}`") })
                }
            }
        };
        col += (i - start) as u32;
        out.push(Token { tok, span: span(l0, c0, line, col) });
    }
    out.push(Token { tok: Tok::Eof, span: span(line, col, line, col) });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s, &Arc::from("t")).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers_and_projections() {
        assert_eq!(
            toks("%t.0.1 -2.5e3 7"),
            vec![
                Tok::Local("t".into()),
                Tok::Punct("."),
                Tok::Int(0),
                Tok::Punct("."),
                Tok::Int(1),
                Tok::Float(-2500.0),
                Tok::Int(7),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn punctuation_and_comments() {
        assert_eq!(
            toks("%r := !%r; // note\n-> =>"),
            vec![
                Tok::Local("r".into()),
                Tok::Punct(":="),
                Tok::Punct("!"),
                Tok::Local("r".into()),
                Tok::Punct(";"),
                Tok::Punct("->"),
                Tok::Punct("=>"),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn spans_track_lines() {
        let t = lex("a\n  bc", &Arc::from("f.rly")).unwrap();
        assert_eq!((t[1].span.start_line, t[1].span.start_col, t[1].span.end_col), (2, 3, 5));
    }
}
