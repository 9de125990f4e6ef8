//! Tokenizer for HRA query text.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Backquoted identifier; never a keyword.
    QIdent(String),
    Str(String),
    Int(i64),
    Float(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Colon,
    Semi,
    Arrow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::QIdent(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "string \"{s}\""),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Float(x) => write!(f, "`{x}`"),
            Tok::Eof => f.write_str("end of input"),
            t => {
                let s = match t {
                    Tok::LParen => "(",
                    Tok::RParen => ")",
                    Tok::LBracket => "[",
                    Tok::RBracket => "]",
                    Tok::Comma => ",",
                    Tok::Dot => ".",
                    Tok::Colon => ":",
                    Tok::Semi => ";",
                    Tok::Arrow => "->",
                    Tok::Eq => "=",
                    Tok::Ne => "!=",
                    Tok::Lt => "<",
                    Tok::Le => "<=",
                    Tok::Gt => ">",
                    Tok::Ge => ">=",
                    Tok::Plus => "+",
                    Tok::Minus => "-",
                    Tok::Star => "*",
                    Tok::Slash => "/",
                    _ => unreachable!(),
                };
                write!(f, "`{s}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        // `--` line comments.
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                bump!();
            }
            out.push(Token { tok: Tok::Ident(s), pos });
            continue;
        }
        if c == '`' {
            // Quoted identifier for names with spaces or punctuation.
            bump!();
            let mut s = String::new();
            loop {
                if i >= chars.len() {
                    return Err(LexError { pos, message: "unterminated quoted identifier".into() });
                }
                if chars[i] == '`' {
                    bump!();
                    break;
                }
                s.push(chars[i]);
                bump!();
            }
            out.push(Token { tok: Tok::QIdent(s), pos });
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            let mut float = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                bump!();
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                float = true;
                s.push('.');
                bump!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    s.push(chars[i]);
                    bump!();
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    float = true;
                    while i < j {
                        s.push(chars[i]);
                        bump!();
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        s.push(chars[i]);
                        bump!();
                    }
                }
            }
            let tok = if float {
                Tok::Float(s.parse().map_err(|_| LexError { pos, message: format!("invalid number `{s}`") })?)
            } else {
                Tok::Int(s.parse().map_err(|_| LexError { pos, message: format!("integer `{s}` out of range") })?)
            };
            out.push(Token { tok, pos });
            continue;
        }
        if c == '\'' || c == '"' {
            let quote = c;
            bump!();
            let mut s = String::new();
            loop {
                if i >= chars.len() {
                    return Err(LexError { pos, message: "unterminated string literal".into() });
                }
                let d = chars[i];
                if d == quote {
                    if chars.get(i + 1) == Some(&quote) {
                        s.push(quote);
                        bump!();
                        bump!();
                        continue;
                    }
                    bump!();
                    break;
                }
                if d == '\\' && quote == '"' {
                    if let Some(&e) = chars.get(i + 1) {
                        let mapped = match e {
                            'n' => Some('\n'),
                            't' => Some('\t'),
                            '"' => Some('"'),
                            '\\' => Some('\\'),
                            _ => None,
                        };
                        if let Some(m) = mapped {
                            s.push(m);
                            bump!();
                            bump!();
                            continue;
                        }
                    }
                }
                s.push(d);
                bump!();
            }
            out.push(Token { tok: Tok::Str(s), pos });
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let tok2 = match two.as_str() {
            "->" => Some(Tok::Arrow),
            "!=" | "<>" => Some(Tok::Ne),
            "<=" => Some(Tok::Le),
            ">=" => Some(Tok::Ge),
            "==" => Some(Tok::Eq),
            _ => None,
        };
        if let Some(tok) = tok2 {
            bump!();
            bump!();
            out.push(Token { tok, pos });
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            ':' => Tok::Colon,
            ';' => Tok::Semi,
            '=' => Tok::Eq,
            '<' => Tok::Lt,
            '>' => Tok::Gt,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            other => return Err(LexError { pos, message: format!("unexpected character `{other}`") }),
        };
        bump!();
        out.push(Token { tok, pos });
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_and_tokens() {
        let t = tokenize("Select(x >= 2.5,\n  t) -- note").unwrap();
        let toks: Vec<&Tok> = t.iter().map(|t| &t.tok).collect();
        assert_eq!(
            toks,
            vec![
                &Tok::Ident("Select".into()),
                &Tok::LParen,
                &Tok::Ident("x".into()),
                &Tok::Ge,
                &Tok::Float(2.5),
                &Tok::Comma,
                &Tok::Ident("t".into()),
                &Tok::RParen,
                &Tok::Eof
            ]
        );
        assert_eq!(t[6].pos, Pos { line: 2, col: 3 });
    }

    #[test]
    fn strings_keep_content() {
        let t = tokenize(r#"'it''s' "Is {dob} \"ok\"?""#).unwrap();
        assert_eq!(t[0].tok, Tok::Str("it's".into()));
        assert_eq!(t[1].tok, Tok::Str("Is {dob} \"ok\"?".into()));
    }

    #[test]
    fn bad_character_is_located() {
        let e = tokenize("a\n  #").unwrap_err();
        assert_eq!(e.pos, Pos { line: 2, col: 3 });
    }
}
