use crate::model::Span;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

const SYMBOLS: [&str; 20] = [
    "<=", ">=", "&&", "||", "!", "(", ")", "{", "}", ",", ";", "=", "<", ">", "+", "-", "*", "/", ".", "@",
];

/// Splits text into tokens. `#` starts a comment running to end of line.
pub fn lex(text: &str) -> Result<Vec<Token>, (Span, String)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
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
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = Span { line, column: col, length: 1 };
        if c.is_ascii_digit() {
            let s = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let lit: String = chars[s..i].iter().collect();
            let n = lit.parse::<i64>().map_err(|_| (start, format!("integer literal `{lit}` out of range")))?;
            out.push(Token { tok: Tok::Int(n), span: Span { length: i - s, ..start } });
            col += i - s;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let id: String = chars[s..i].iter().collect();
            out.push(Token { tok: Tok::Ident(id), span: Span { length: i - s, ..start } });
            col += i - s;
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                out.push(Token { tok: Tok::Sym(s), span: Span { length: s.len(), ..start } });
                i += s.len();
                col += s.len();
            }
            None => return Err((start, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token { tok: Tok::Eof, span: Span { line, column: col, length: 0 } });
    Ok(out)
}
