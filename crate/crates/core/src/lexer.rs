//! Tokenizer for `.ant` sources. Tracks line/column for error reporting;
//! `//` comments run to end of line.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    // keywords
    Class,
    Interface,
    Implements,
    Extends,
    Def,
    Let,
    In,
    New,
    Weak,
    Null,
    IntTy,
    UnitTy,
    // punctuation
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Semi,
    Comma,
    Dot,
    Assign,    // =
    PlusEq,    // +=
    MinusEq,   // -=
    Plus,
    Minus,
    Star,
    Slash,
    Ne,        // !=
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(x) => return write!(f, "identifier `{x}`"),
            Tok::Int(n) => return write!(f, "integer `{n}`"),
            Tok::Class => "`class`",
            Tok::Interface => "`interface`",
            Tok::Implements => "`implements`",
            Tok::Extends => "`extends`",
            Tok::Def => "`def`",
            Tok::Let => "`let`",
            Tok::In => "`in`",
            Tok::New => "`new`",
            Tok::Weak => "`weak`",
            Tok::Null => "`null`",
            Tok::IntTy => "`int`",
            Tok::UnitTy => "`Unit`",
            Tok::LBrace => "`{`",
            Tok::RBrace => "`}`",
            Tok::LParen => "`(`",
            Tok::RParen => "`)`",
            Tok::LBracket => "`[`",
            Tok::RBracket => "`]`",
            Tok::Colon => "`:`",
            Tok::Semi => "`;`",
            Tok::Comma => "`,`",
            Tok::Dot => "`.`",
            Tok::Assign => "`=`",
            Tok::PlusEq => "`+=`",
            Tok::MinusEq => "`-=`",
            Tok::Plus => "`+`",
            Tok::Minus => "`-`",
            Tok::Star => "`*`",
            Tok::Slash => "`/`",
            Tok::Ne => "`!=`",
            Tok::Lt => "`<`",
            Tok::Le => "`<=`",
            Tok::Gt => "`>`",
            Tok::Ge => "`>=`",
            Tok::Eof => "end of input",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{pos}: {message}")]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if let Some(c) = c {
                if c == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
            }
            c
        }};
    }

    loop {
        let pos = Pos { line, col };
        let c = match chars.peek().copied() {
            None => break,
            Some(c) => c,
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '/' => {
                bump!();
                if chars.peek() == Some(&'/') {
                    while let Some(&c) = chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        bump!();
                    }
                } else {
                    out.push(Token { tok: Tok::Slash, pos });
                }
            }
            '0'..='9' => {
                let mut n: i64 = 0;
                while let Some(&c) = chars.peek() {
                    if let Some(d) = c.to_digit(10) {
                        n = n
                            .checked_mul(10)
                            .and_then(|n| n.checked_add(d as i64))
                            .ok_or_else(|| LexError {
                                pos,
                                message: "integer literal out of 64-bit range".into(),
                            })?;
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push(Token { tok: Tok::Int(n), pos });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                let tok = match s.as_str() {
                    "class" => Tok::Class,
                    "interface" => Tok::Interface,
                    "implements" => Tok::Implements,
                    "extends" => Tok::Extends,
                    "def" => Tok::Def,
                    "let" => Tok::Let,
                    "in" => Tok::In,
                    "new" => Tok::New,
                    "weak" => Tok::Weak,
                    "null" => Tok::Null,
                    "int" => Tok::IntTy,
                    "Unit" => Tok::UnitTy,
                    _ => Tok::Ident(s),
                };
                out.push(Token { tok, pos });
            }
            _ => {
                bump!();
                let two = |next: char, chars: &mut std::iter::Peekable<std::str::Chars<'_>>| {
                    chars.peek() == Some(&next)
                };
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ':' => Tok::Colon,
                    ';' => Tok::Semi,
                    ',' => Tok::Comma,
                    '.' => Tok::Dot,
                    '*' => Tok::Star,
                    '+' => {
                        if two('=', &mut chars) {
                            bump!();
                            Tok::PlusEq
                        } else {
                            Tok::Plus
                        }
                    }
                    '-' => {
                        if two('=', &mut chars) {
                            bump!();
                            Tok::MinusEq
                        } else {
                            Tok::Minus
                        }
                    }
                    '=' => {
                        if two('=', &mut chars) {
                            bump!();
                        }
                        Tok::Assign
                    }
                    '!' => {
                        if two('=', &mut chars) {
                            bump!();
                            Tok::Ne
                        } else {
                            return Err(LexError { pos, message: "unexpected `!`".into() });
                        }
                    }
                    '<' => {
                        if two('=', &mut chars) {
                            bump!();
                            Tok::Le
                        } else {
                            Tok::Lt
                        }
                    }
                    '>' => {
                        if two('=', &mut chars) {
                            bump!();
                            Tok::Ge
                        } else {
                            Tok::Gt
                        }
                    }
                    other => {
                        return Err(LexError {
                            pos,
                            message: format!("unexpected character `{other}`"),
                        })
                    }
                };
                out.push(Token { tok, pos });
            }
        }
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}
