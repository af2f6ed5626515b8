//! Text syntax for expressions.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          right-associative
//! primary := number | 'i' | 'x' digits | func '(' args ')' | '(' expr ')'
//! func    := sqrt | log | exp | sin | cos | acos | abs2
//! ```
//!
//! Exponents must fold to a real rational constant. Numbers are exact: `0.25`
//! is the rational `1/4`. [`format`] prints an expression so that parsing it
//! back gives the same canonical tree.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::{One, Pow, Signed, Zero};
use thiserror::Error;

use crate::expr::{coeff_rational, Coeff, Expr, Kind, Prim, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("variable x{index} outside x1..x{dim}")]
    VariableOutOfRange { index: u64, dim: usize },
    #[error("exponent is not a real rational constant")]
    NonRationalExponent,
    #[error("division by zero")]
    DivisionByZero,
}

/// A parse failure located at a byte offset of the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rational),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    /// Returns the next token and its starting offset.
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let Some(c) = rest.chars().next() else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == '.' {
            let len = rest
                .find(|ch: char| !(ch.is_ascii_digit() || ch == '.'))
                .unwrap_or(rest.len());
            let text = &rest[..len];
            self.pos += len;
            return parse_number(text)
                .map(|r| (Tok::Num(r), start))
                .ok_or_else(|| err(ParseErrorKind::Syntax(format!("bad number `{text}`")), start));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let len = rest
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                .unwrap_or(rest.len());
            self.pos += len;
            return Ok((Tok::Ident(rest[..len].to_string()), start));
        }
        if "+-*/^(),".contains(c) {
            self.pos += 1;
            return Ok((Tok::Op(c), start));
        }
        Err(err(ParseErrorKind::Syntax(format!("unexpected character `{c}`")), start))
    }
}

fn parse_number(text: &str) -> Option<Rational> {
    let (int, frac) = match text.split_once('.') {
        Some((a, b)) => (a, b),
        None => (text, ""),
    };
    if (int.is_empty() && frac.is_empty()) || frac.contains('.') {
        return None;
    }
    let digits = format!("{int}{frac}");
    let n: BigInt = digits.parse().ok()?;
    let d = BigInt::from(10u32).pow(frac.len() as u32);
    Some(Rational::new(n, d))
}

fn err(kind: ParseErrorKind, offset: usize) -> ParseError {
    ParseError { kind, offset }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    at: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(), ParseError> {
        let (t, at) = self.lex.next()?;
        self.tok = t;
        self.at = at;
        Ok(())
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.tok == Tok::Op(c) {
            self.bump()
        } else {
            Err(self.unexpected(&format!("expected `{c}`")))
        }
    }

    fn unexpected(&self, what: &str) -> ParseError {
        let found = match &self.tok {
            Tok::Num(_) => "number".to_string(),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::End => "end of input".to_string(),
        };
        err(ParseErrorKind::Syntax(format!("{what}, found {found}")), self.at)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.tok {
                Tok::Op('+') => {
                    self.bump()?;
                    terms.push(self.term()?);
                }
                Tok::Op('-') => {
                    self.bump()?;
                    terms.push(-self.term()?);
                }
                _ => return Ok(Expr::sum(terms)),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            match self.tok {
                Tok::Op('*') => {
                    self.bump()?;
                    acc = acc * self.unary()?;
                }
                Tok::Op('/') => {
                    self.bump()?;
                    let at = self.at;
                    let d = self.unary()?;
                    if d.is_zero() {
                        return Err(err(ParseErrorKind::DivisionByZero, at));
                    }
                    acc = acc / d;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.tok {
            Tok::Op('-') => {
                self.bump()?;
                Ok(-self.unary()?)
            }
            Tok::Op('+') => {
                self.bump()?;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.tok != Tok::Op('^') {
            return Ok(base);
        }
        self.bump()?;
        let at = self.at;
        let exp = self.unary()?;
        let e = match exp.as_const() {
            Some(c) if c.im.is_zero() => c.re.clone(),
            _ => return Err(err(ParseErrorKind::NonRationalExponent, at)),
        };
        if base.is_zero() && !e.is_positive() {
            return Err(err(ParseErrorKind::DivisionByZero, at));
        }
        Ok(Expr::pow(&base, &e))
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let at = self.at;
        match self.tok.clone() {
            Tok::Num(r) => {
                self.bump()?;
                Ok(Expr::constant(coeff_rational(r)))
            }
            Tok::Op('(') => {
                self.bump()?;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump()?;
                self.ident(&name, at)
            }
            _ => Err(self.unexpected("expected an operand")),
        }
    }

    fn ident(&mut self, name: &str, at: usize) -> Result<Expr, ParseError> {
        if name == "i" {
            return Ok(Expr::i());
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: u64 = digits.parse().unwrap_or(u64::MAX);
                if index == 0 || index > self.dim as u64 {
                    return Err(err(ParseErrorKind::VariableOutOfRange { index, dim: self.dim }, at));
                }
                return Ok(Expr::var(index as u32));
            }
        }
        let prim = match name {
            "sqrt" => None,
            "log" => Some(Prim::Log),
            "exp" => Some(Prim::Exp),
            "sin" => Some(Prim::Sin),
            "cos" => Some(Prim::Cos),
            "acos" => Some(Prim::Acos),
            "abs2" => return self.abs2(at),
            _ => return Err(err(ParseErrorKind::UnknownIdentifier(name.to_string()), at)),
        };
        self.expect('(')?;
        let arg = self.expr()?;
        self.expect(')')?;
        Ok(match prim {
            Some(p) => Expr::prim(p, arg),
            None => arg.sqrt(),
        })
    }

    fn index_arg(&mut self) -> Result<u32, ParseError> {
        let at = self.at;
        match self.tok.clone() {
            Tok::Num(r) if r.is_integer() => {
                self.bump()?;
                let k = r.to_integer();
                if k < BigInt::one() || k > BigInt::from(self.dim) {
                    let index = num_traits::ToPrimitive::to_u64(&k).unwrap_or(0);
                    return Err(err(ParseErrorKind::VariableOutOfRange { index, dim: self.dim }, at));
                }
                Ok(num_traits::ToPrimitive::to_u32(&k).expect("bounded by dim"))
            }
            _ => Err(self.unexpected("expected an integer variable index")),
        }
    }

    fn abs2(&mut self, at: usize) -> Result<Expr, ParseError> {
        self.expect('(')?;
        let k = self.index_arg()?;
        self.expect(',')?;
        let l = self.index_arg()?;
        self.expect(')')?;
        if k > l {
            return Err(err(ParseErrorKind::Syntax(format!("abs2({k}, {l}) has an empty range")), at));
        }
        Ok(Expr::abs2(k, l))
    }
}

/// Parses `src` as an expression over `x1..x{dim}`.
pub fn parse(src: &str, dim: usize) -> Result<Expr, ParseError> {
    let mut p = Parser { lex: Lexer { src, pos: 0 }, tok: Tok::End, at: 0, dim };
    p.bump()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(p.unexpected("expected an operator or end of input"));
    }
    Ok(e)
}

// ---- printing -------------------------------------------------------------

const P_SUM: u8 = 1;
const P_PRODUCT: u8 = 2;
const P_NEG: u8 = 3;
const P_POWER: u8 = 4;
const P_ATOM: u8 = 5;

fn rational_text(r: &Rational) -> (String, u8) {
    let s = if r.is_integer() { r.numer().to_string() } else { format!("{}/{}", r.numer(), r.denom()) };
    let prec = if r.is_negative() {
        P_NEG
    } else if r.is_integer() {
        P_ATOM
    } else {
        P_PRODUCT
    };
    (s, prec)
}

fn coeff_text(c: &Coeff) -> (String, u8) {
    if c.im.is_zero() {
        return rational_text(&c.re);
    }
    let imag = |r: &Rational| -> (String, u8) {
        if r.is_one() {
            ("i".to_string(), P_ATOM)
        } else if (-r).is_one() {
            ("-i".to_string(), P_NEG)
        } else {
            let prec = if r.is_negative() { P_NEG } else { P_PRODUCT };
            (format!("{}*i", rational_text(r).0), prec)
        }
    };
    if c.re.is_zero() {
        return imag(&c.im);
    }
    let (re, _) = rational_text(&c.re);
    let (im, _) = imag(&c.im.abs());
    let sign = if c.im.is_negative() { '-' } else { '+' };
    (format!("{re} {sign} {im}"), P_SUM)
}

fn wrap(out: &mut String, text: (String, u8), min: u8) {
    if text.1 < min {
        let _ = write!(out, "({})", text.0);
    } else {
        out.push_str(&text.0);
    }
}

fn render(e: &Expr) -> (String, u8) {
    match e.kind() {
        Kind::Const(c) => coeff_text(c),
        Kind::Var(k) => (format!("x{k}"), P_ATOM),
        Kind::Prim(p, a) => (format!("{}({})", p.name(), render(a).0), P_ATOM),
        Kind::Power(b, x) => {
            if *x == Rational::new(BigInt::one(), BigInt::from(2)) {
                return (format!("sqrt({})", render(b).0), P_ATOM);
            }
            let mut s = String::new();
            wrap(&mut s, render(b), P_ATOM);
            s.push('^');
            if x.is_integer() && !x.is_negative() {
                s.push_str(&x.numer().to_string());
            } else {
                let _ = write!(s, "({})", rational_text(x).0);
            }
            (s, P_POWER)
        }
        Kind::Product(fs) => {
            let mut s = String::new();
            let mut rest: &[Expr] = fs;
            let mut prec = P_PRODUCT;
            if let Some(c) = fs[0].as_const() {
                rest = &fs[1..];
                if c.im.is_zero() && (-&c.re).is_one() {
                    s.push('-');
                    prec = P_NEG;
                } else {
                    let text = coeff_text(c);
                    if text.1 == P_NEG {
                        // leading sign binds the whole product: "-3*x1"
                        prec = P_NEG;
                        s.push_str(&text.0);
                    } else {
                        wrap(&mut s, text, P_PRODUCT);
                    }
                    s.push('*');
                }
            }
            for (n, f) in rest.iter().enumerate() {
                if n > 0 {
                    s.push('*');
                }
                wrap(&mut s, render(f), P_POWER);
            }
            (s, prec)
        }
        Kind::Sum(ts) => {
            let mut s = String::new();
            for (n, t) in ts.iter().enumerate() {
                let (text, prec) = render(t);
                let text = if prec < P_NEG { format!("({text})") } else { text };
                if n == 0 {
                    s.push_str(&text);
                } else if let Some(rest) = text.strip_prefix('-') {
                    let _ = write!(s, " - {rest}");
                } else {
                    let _ = write!(s, " + {text}");
                }
            }
            (s, P_SUM)
        }
    }
}

/// Deterministic text form; `parse(&format(e), m)` rebuilds `e`.
pub fn format(e: &Expr) -> String {
    render(e).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(k: u32) -> Expr {
        Expr::var(k)
    }

    #[test]
    fn parses_radial_example() {
        let e = parse("sqrt(x1^2+x2^2+x3^2) + i*x4", 4).unwrap();
        let want = Expr::abs2(1, 3).sqrt() + Expr::i() * x(4);
        assert_eq!(e, want);
        assert_eq!(parse("sqrt(abs2(1,3))+i*x4", 4).unwrap(), want);
    }

    #[test]
    fn parses_product_plus_sine() {
        let e = parse("(x1+i*x2)*(x3+i*x4) + sin(x5+i*x6)", 6).unwrap();
        let want = (x(1) + Expr::i() * x(2)) * (x(3) + Expr::i() * x(4))
            + (x(5) + Expr::i() * x(6)).sin();
        assert_eq!(e, want);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(parse("x1 - x2 - x3", 3).unwrap(), x(1) - x(2) - x(3));
        assert_eq!(parse("x1 / x2 / x3", 3).unwrap(), x(1) / (x(2) * x(3)));
        assert_eq!(parse("2^3^2", 1).unwrap(), Expr::int(512));
        assert_eq!(parse("-x1^2", 1).unwrap(), -(x(1).powi(2)));
        assert_eq!(parse("x1^-1", 1).unwrap(), x(1).recip());
        assert_eq!(parse("x1^(1/2)", 1).unwrap(), x(1).sqrt());
        assert_eq!(parse("0.25*x1", 1).unwrap(), Expr::rational(1, 4) * x(1));
        assert_eq!(parse(" x1 *\n x2 ", 2).unwrap(), x(1) * x(2));
    }

    #[test]
    fn rejects_bad_variables() {
        let e = parse("x0 + 1", 3).unwrap_err();
        assert_eq!(e.offset, 0);
        assert!(matches!(e.kind, ParseErrorKind::VariableOutOfRange { index: 0, .. }));
        let e = parse("x1 + x4", 3).unwrap_err();
        assert_eq!(e.offset, 5);
        assert!(parse("abs2(1,4)", 3).is_err());
    }

    #[test]
    fn rejects_unknown_identifiers_with_location() {
        let e = parse("x1 + tan(x2)", 2).unwrap_err();
        assert_eq!(e.offset, 5);
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("tan".into()));
        let e = parse("2 y", 2).unwrap_err();
        assert_eq!(e.offset, 2);
    }

    #[test]
    fn rejects_syntax_errors() {
        assert!(matches!(parse("x1 +", 1).unwrap_err().kind, ParseErrorKind::Syntax(_)));
        assert_eq!(parse("(x1", 1).unwrap_err().offset, 3);
        assert_eq!(parse("x1 x2", 2).unwrap_err().offset, 3);
        assert_eq!(parse("x1 $ 2", 1).unwrap_err().offset, 3);
        assert_eq!(parse("x1^x2", 2).unwrap_err().kind, ParseErrorKind::NonRationalExponent);
        assert_eq!(parse("x1^i", 1).unwrap_err().kind, ParseErrorKind::NonRationalExponent);
        assert_eq!(parse("x1/(2-2)", 1).unwrap_err().kind, ParseErrorKind::DivisionByZero);
    }

    #[test]
    fn formats_simple_forms() {
        assert_eq!(format(&Expr::zero()), "0");
        assert_eq!(format(&parse("i*x4", 4).unwrap()), "i*x4");
        assert_eq!(format(&parse("x1 - 2*x2", 2).unwrap()), "x1 - 2*x2");
        assert_eq!(format(&parse("sqrt(x1)", 1).unwrap()), "sqrt(x1)");
    }

    #[test]
    fn round_trips() {
        for src in [
            "sqrt(x1^2+x2^2+x3^2) + i*x4",
            "4*x1*(x3 - i*x2)/(x2^2+x3^2) - (x3 + i*x2)/abs2(1,4)",
            "log(sqrt(abs2(1,4))) + i*acos(x1/sqrt(abs2(1,4)))",
            "(1+2*i)*x1^(-3/2) - (3/5)*x2 + (-2)^(1/3)",
            "-x1 - i - 1/2",
            "(2/3 - i/7)*exp(-x1)*cos(x2)^3",
            "(x1^(1/3))^(1/2)",
            "sqrt(x1)^(1/3) + (x1*x2)^(2/3)",
        ] {
            let e = parse(src, 4).unwrap();
            let text = format(&e);
            let back = parse(&text, 4).unwrap();
            assert_eq!(back, e, "{src} -> {text}");
        }
    }
}
