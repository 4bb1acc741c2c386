//! Recursive-descent parser for the property fragment.
//!
//! ```text
//! formula := "P" bound "[" path "]"
//!          | "R" "{" STRING "}" bound "[" path "]"
//! bound   := ">=" NUMBER | "<=" NUMBER | "=?"
//! path    := "F" expr | expr "U" expr
//! expr    := conj ("|" conj)*
//! conj    := unary ("&" unary)*
//! unary   := "!" unary | "(" expr ")" | "true" | "false" | IDENT cmp INTEGER
//! cmp     := "=" | "!=" | "<" | "<=" | ">" | ">="
//! ```

use super::ast::{Bound, CmpOp, PathFormula, PctlFormula, StateExpr};
use super::PctlError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Sym(&'static str),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Number(s) => format!("`{s}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::End => "end of input".into(),
        }
    }
}

const SYMBOLS: [&str; 15] = [
    ">=", "<=", "!=", "=?", "[", "]", "{", "}", "(", ")", "!", "&", "|", "=", "<",
];

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, PctlError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((start, Tok::Ident(chars[start..i].iter().collect())));
        } else if c.is_ascii_digit()
            || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
            || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '+' || d == '-') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push((start, Tok::Number(chars[start..i].iter().collect())));
        } else if c == '"' {
            i += 1;
            while i < chars.len() && chars[i] != '"' {
                i += 1;
            }
            if i == chars.len() {
                return Err(PctlError::Syntax {
                    pos: start,
                    found: "unterminated string".into(),
                    expected: vec!["`\"`".into()],
                });
            }
            out.push((start, Tok::Str(chars[start + 1..i].iter().collect())));
            i += 1;
        } else if c == '>' {
            // `>` alone is only valid as a comparison operator.
            if chars.get(i + 1) == Some(&'=') {
                out.push((start, Tok::Sym(">=")));
                i += 2;
            } else {
                out.push((start, Tok::Sym(">")));
                i += 1;
            }
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
                return Err(PctlError::Syntax {
                    pos: start,
                    found: format!("`{c}`"),
                    expected: vec!["a token".into()],
                });
            };
            out.push((start, Tok::Sym(sym)));
            i += sym.chars().count();
        }
    }
    out.push((chars.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> PctlError {
        PctlError::Syntax {
            pos: self.pos(),
            found: self.peek().describe(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), PctlError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[&format!("`{s}`")]))
        }
    }

    fn formula(&mut self) -> Result<PctlFormula, PctlError> {
        let f = if self.is_kw("P") {
            self.bump();
            let bound = self.bound(true)?;
            let path = self.bracketed_path()?;
            PctlFormula::Prob { bound, path }
        } else if self.is_kw("R") {
            self.bump();
            self.expect_sym("{")?;
            let label = match self.bump() {
                (_, Tok::Str(s)) if !s.is_empty() => s,
                (pos, tok) => {
                    return Err(PctlError::Syntax {
                        pos,
                        found: tok.describe(),
                        expected: vec!["reward label string".into()],
                    })
                }
            };
            self.expect_sym("}")?;
            let bound = self.bound(false)?;
            let path = self.bracketed_path()?;
            PctlFormula::Reward { label, bound, path }
        } else {
            return Err(self.error(&["`P`", "`R`"]));
        };
        if *self.peek() != Tok::End {
            return Err(self.error(&["end of input"]));
        }
        Ok(f)
    }

    fn bound(&mut self, probability: bool) -> Result<Bound, PctlError> {
        let make: fn(f64) -> Bound = if self.is_sym(">=") {
            Bound::AtLeast
        } else if self.is_sym("<=") {
            Bound::AtMost
        } else if self.is_sym("=?") {
            self.bump();
            return Ok(Bound::Query);
        } else {
            return Err(self.error(&["`>=`", "`<=`", "`=?`"]));
        };
        self.bump();
        let (pos, tok) = (self.pos(), self.peek().clone());
        let Tok::Number(text) = tok else {
            return Err(self.error(&["number"]));
        };
        self.bump();
        let v: f64 = text.parse().map_err(|_| PctlError::Syntax {
            pos,
            found: format!("`{text}`"),
            expected: vec!["number".into()],
        })?;
        let ok = if probability {
            (0.0..=1.0).contains(&v)
        } else {
            v.is_finite() && v >= 0.0
        };
        if !ok {
            let range = if probability { "[0, 1]" } else { "[0, inf)" };
            return Err(PctlError::Semantic {
                pos: Some(pos),
                message: format!("bound {v} outside {range}"),
            });
        }
        Ok(make(v))
    }

    fn bracketed_path(&mut self) -> Result<PathFormula, PctlError> {
        self.expect_sym("[")?;
        let path = if self.is_kw("F") {
            self.bump();
            PathFormula::Eventually(self.expr()?)
        } else {
            let lhs = self.expr()?;
            if !self.is_kw("U") {
                return Err(self.error(&["`U`", "`&`", "`|`"]));
            }
            self.bump();
            PathFormula::Until(lhs, self.expr()?)
        };
        if !self.is_sym("]") {
            return Err(self.error(&["`]`", "`&`", "`|`"]));
        }
        self.bump();
        Ok(path)
    }

    fn expr(&mut self) -> Result<StateExpr, PctlError> {
        let mut e = self.conj()?;
        while self.is_sym("|") {
            self.bump();
            e = StateExpr::or(e, self.conj()?);
        }
        Ok(e)
    }

    fn conj(&mut self) -> Result<StateExpr, PctlError> {
        let mut e = self.unary()?;
        while self.is_sym("&") {
            self.bump();
            e = StateExpr::and(e, self.unary()?);
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<StateExpr, PctlError> {
        const START: [&str; 5] = ["`!`", "`(`", "`true`", "`false`", "state field"];
        if self.is_sym("!") {
            self.bump();
            return Ok(StateExpr::not(self.unary()?));
        }
        if self.is_sym("(") {
            self.bump();
            let e = self.expr()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        let field = match self.peek() {
            Tok::Ident(s) if s == "true" => {
                self.bump();
                return Ok(StateExpr::True);
            }
            Tok::Ident(s) if s == "false" => {
                self.bump();
                return Ok(StateExpr::False);
            }
            Tok::Ident(s) if !matches!(s.as_str(), "F" | "U" | "P" | "R") => s.clone(),
            _ => return Err(self.error(&START)),
        };
        self.bump();
        let op = match self.peek() {
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("!=") => CmpOp::Ne,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            _ => return Err(self.error(&["`=`", "`!=`", "`<`", "`<=`", "`>`", "`>=`"])),
        };
        self.bump();
        let value = match self.peek() {
            Tok::Number(n) => n.parse::<i64>().ok(),
            _ => None,
        };
        let Some(value) = value else {
            return Err(self.error(&["integer"]));
        };
        self.bump();
        Ok(StateExpr::Atom { field, op, value })
    }
}

pub fn parse(text: &str) -> Result<PctlFormula, PctlError> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
    };
    p.formula()
}

/// A formula from a property file, optionally named with a `name:` prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedProperty {
    pub name: String,
    pub line: usize,
    pub source: String,
    pub formula: PctlFormula,
}

/// One formula per line; `#` starts a comment. Unnamed properties are
/// called `prop<line>`.
pub fn parse_properties(text: &str) -> Result<Vec<NamedProperty>, PctlError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (name, body) = match content.split_once(':') {
            Some((n, b))
                if !n.trim().is_empty()
                    && n.trim()
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_') =>
            {
                (n.trim().to_string(), b.trim())
            }
            _ => (format!("prop{line}"), content),
        };
        let formula = parse(body).map_err(|e| PctlError::Property {
            line,
            source: Box::new(e),
        })?;
        out.push(NamedProperty {
            name,
            line,
            source: body.to_string(),
            formula,
        });
    }
    if out.is_empty() {
        return Err(PctlError::Usage(
            "property file contains no formulas".into(),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(v: i64) -> StateExpr {
        StateExpr::atom("m", CmpOp::Eq, v)
    }

    #[test]
    fn goal_bound_example() {
        let f = parse("P>=0.6 [ F m=3 ]").unwrap();
        assert_eq!(
            f,
            PctlFormula::Prob {
                bound: Bound::AtLeast(0.6),
                path: PathFormula::Eventually(m(3)),
            }
        );
        assert_eq!(parse("P >= 0.6[F m=3]").unwrap(), f);
        assert_eq!(parse("  P>=0.6[F\tm = 3]  ").unwrap(), f);
        assert_eq!(f.to_string(), "P>=0.6 [ F m=3 ]");
    }

    #[test]
    fn reward_until() {
        let f = parse(r#"R{"unsafe"}=? [ true U m=2 ]"#).unwrap();
        assert_eq!(
            f,
            PctlFormula::Reward {
                label: "unsafe".into(),
                bound: Bound::Query,
                path: PathFormula::Until(StateExpr::True, m(2)),
            }
        );
        assert_eq!(f.to_string(), r#"R{"unsafe"}=? [ true U m=2 ]"#);
    }

    #[test]
    fn precedence_and_parentheses() {
        let f = parse("P=? [ !m=1 & e>2 | do<=0 U (m=2 | m=3) & e!=0 ]").unwrap();
        let PctlFormula::Prob {
            path: PathFormula::Until(lhs, rhs),
            ..
        } = &f
        else {
            panic!("{f:?}")
        };
        assert_eq!(
            *lhs,
            StateExpr::or(
                StateExpr::and(StateExpr::not(m(1)), StateExpr::atom("e", CmpOp::Gt, 2)),
                StateExpr::atom("do", CmpOp::Le, 0)
            )
        );
        assert_eq!(
            *rhs,
            StateExpr::and(
                StateExpr::or(m(2), m(3)),
                StateExpr::atom("e", CmpOp::Ne, 0)
            )
        );
        assert_eq!(parse(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn missing_bound_is_positioned() {
        match parse("P>=[F m=3]") {
            Err(PctlError::Syntax { pos, expected, .. }) => {
                assert_eq!(pos, 3);
                assert_eq!(expected, vec!["number".to_string()]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_inputs_are_positioned() {
        let cases = [
            ("", 0),
            ("Q>=0.5 [ F m=3 ]", 0),
            ("P>0.5 [ F m=3 ]", 1),
            ("P>=0.5 F m=3 ]", 7),
            ("P>=0.5 [ F m=3", 14),
            ("P>=0.5 [ F m= ]", 14),
            ("P>=0.5 [ F m=3.5 ]", 13),
            ("P>=0.5 [ m=3 ]", 13),
            ("P>=0.5 [ F (m=3 ]", 16),
            ("R{unsafe}=? [ F m=2 ]", 2),
            ("R{\"unsafe}=? [ F m=2 ]", 2),
            ("P=? [ F m=3 ] extra", 14),
            ("P=? [ F m=3 $ ]", 12),
        ];
        for (text, want) in cases {
            match parse(text) {
                Err(PctlError::Syntax { pos, expected, .. }) => {
                    assert_eq!(pos, want, "{text}");
                    assert!(!expected.is_empty());
                }
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn bound_range_is_semantic() {
        assert!(matches!(
            parse("P>=1.5 [ F m=3 ]"),
            Err(PctlError::Semantic { pos: Some(3), .. })
        ));
        assert!(matches!(
            parse(r#"R{"unsafe"}<=-1 [ F m=3 ]"#),
            Err(PctlError::Semantic { .. })
        ));
        assert!(parse(r#"R{"unsafe"}<=20 [ F m=3 ]"#).is_ok());
    }

    #[test]
    fn property_file() {
        let text = "# outcomes\nC1: P>=0.6 [ F m=3 ]\n\nP<=0.1 [ F m=2 ] # collision\n";
        let props = parse_properties(text).unwrap();
        assert_eq!(props.len(), 2);
        assert_eq!(props[0].name, "C1");
        assert_eq!(props[1].name, "prop4");
        assert_eq!(props[1].line, 4);
        match parse_properties("C1: P>=0.6 [ F m=3 ]\nC2: P<= [ F m=2 ]") {
            Err(PctlError::Property { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(parse_properties("# nothing\n").is_err());
    }

    fn arb_expr() -> impl Strategy<Value = StateExpr> {
        let leaf = prop_oneof![
            Just(StateExpr::True),
            Just(StateExpr::False),
            (
                prop::sample::select(vec!["m", "e", "do", "du"]),
                prop::sample::select(vec![
                    CmpOp::Eq,
                    CmpOp::Ne,
                    CmpOp::Lt,
                    CmpOp::Le,
                    CmpOp::Gt,
                    CmpOp::Ge
                ]),
                -3i64..12
            )
                .prop_map(|(f, op, v)| StateExpr::atom(f, op, v)),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(StateExpr::not),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| StateExpr::and(a, b)),
                (inner.clone(), inner).prop_map(|(a, b)| StateExpr::or(a, b)),
            ]
        })
    }

    fn arb_formula() -> impl Strategy<Value = PctlFormula> {
        let bound = prop_oneof![
            Just(Bound::Query),
            (0.0f64..=1.0).prop_map(Bound::AtLeast),
            (0.0f64..=1.0).prop_map(Bound::AtMost),
        ];
        let path = prop_oneof![
            arb_expr().prop_map(PathFormula::Eventually),
            (arb_expr(), arb_expr()).prop_map(|(a, b)| PathFormula::Until(a, b)),
        ];
        (bound, path, any::<bool>()).prop_map(|(bound, path, reward)| {
            if reward {
                PctlFormula::Reward {
                    label: "unsafe".into(),
                    bound,
                    path,
                }
            } else {
                PctlFormula::Prob { bound, path }
            }
        })
    }

    proptest! {
        #[test]
        fn render_parse_identity(f in arb_formula()) {
            let text = f.to_string();
            let back = parse(&text).unwrap();
            prop_assert_eq!(&back, &f);
            prop_assert_eq!(back.to_string(), text);
        }
    }
}
