//! The preference-rule language: a modified Horn clause whose body is a
//! conjunction of attribute and relation atoms and whose head marks labels
//! as preferred (`+`) or non-preferred (`-`) for entities bound by the body.
//!
//! Surface syntax, one rule per line:
//!
//! ```text
//! HasWord(E1,'fat') & HasWord(E1,'obese') & Cites(E2,E1) => label(E2,type2)+
//! ```
//!
//! `&` joins body atoms, `=>` introduces the heads, `;` separates multiple
//! heads, `#` starts a comment. Variables are uppercase-initial identifiers;
//! an atom whose second argument is a variable is a relation atom, one whose
//! second argument is a quoted literal is an attribute atom. Quantification
//! is implicitly universal.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Prefer,
    Avoid,
}

/// `Attr(Var,'value')` — holds for an entity when the feature named
/// `Attr:value` in the vocab has a positive value on that entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrAtom {
    pub attr: String,
    pub var: String,
    pub value: String,
}

impl AttrAtom {
    /// Composite vocab key resolving this atom to a feature index.
    pub fn vocab_key(&self) -> String {
        format!("{}:{}", self.attr, self.value)
    }
}

/// `rel(Var1,Var2)` — holds when the edge is present in the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelAtom {
    pub rel: String,
    pub var1: String,
    pub var2: String,
}

/// `label(Var,name)+` or `label(Var,name)-`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelPref {
    pub var: String,
    pub label: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceRule {
    pub body_attrs: Vec<AttrAtom>,
    pub body_rels: Vec<RelAtom>,
    pub heads: Vec<LabelPref>,
    pub source_line: usize,
}

impl PreferenceRule {
    /// All variables appearing in the body, sorted.
    pub fn variables(&self) -> Vec<String> {
        let mut vars: BTreeSet<&str> = BTreeSet::new();
        for a in &self.body_attrs {
            vars.insert(&a.var);
        }
        for r in &self.body_rels {
            vars.insert(&r.var1);
            vars.insert(&r.var2);
        }
        vars.into_iter().map(String::from).collect()
    }

    pub fn pretty(&self) -> String {
        let mut body: Vec<String> = self
            .body_attrs
            .iter()
            .map(|a| format!("{}({},'{}')", a.attr, a.var, a.value))
            .collect();
        body.extend(
            self.body_rels
                .iter()
                .map(|r| format!("{}({},{})", r.rel, r.var1, r.var2)),
        );
        let heads: Vec<String> = self
            .heads
            .iter()
            .map(|h| {
                let sign = match h.polarity {
                    Polarity::Prefer => "+",
                    Polarity::Avoid => "-",
                };
                format!("label({},{}){}", h.var, h.label, sign)
            })
            .collect();
        format!("{} => {}", body.join(" & "), heads.join("; "))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet {
    pub rules: Vec<PreferenceRule>,
}

impl RuleSet {
    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn pretty(&self) -> String {
        self.rules
            .iter()
            .map(|r| r.pretty())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// A validation finding: the rule parses but names something the graph does
/// not have.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Literal(String),
    LParen,
    RParen,
    Comma,
    Amp,
    Arrow,
    Semi,
    Plus,
    Minus,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier '{s}'"),
            Tok::Literal(s) => write!(f, "literal '{s}'"),
            Tok::LParen => write!(f, "'('"),
            Tok::RParen => write!(f, "')'"),
            Tok::Comma => write!(f, "','"),
            Tok::Amp => write!(f, "'&'"),
            Tok::Arrow => write!(f, "'=>'"),
            Tok::Semi => write!(f, "';'"),
            Tok::Plus => write!(f, "'+'"),
            Tok::Minus => write!(f, "'-'"),
        }
    }
}

fn lex_line(line: &str, lineno: usize) -> Result<Vec<(Tok, usize)>> {
    let mut toks = Vec::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let col = i + 1;
        let c = chars[i];
        match c {
            ' ' | '\t' | '\r' => i += 1,
            '#' => break, // comment runs to end of line
            '(' => {
                toks.push((Tok::LParen, col));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, col));
                i += 1;
            }
            ',' => {
                toks.push((Tok::Comma, col));
                i += 1;
            }
            '&' => {
                toks.push((Tok::Amp, col));
                i += 1;
            }
            ';' => {
                toks.push((Tok::Semi, col));
                i += 1;
            }
            '+' => {
                toks.push((Tok::Plus, col));
                i += 1;
            }
            '-' => {
                toks.push((Tok::Minus, col));
                i += 1;
            }
            '=' => {
                if chars.get(i + 1) == Some(&'>') {
                    toks.push((Tok::Arrow, col));
                    i += 2;
                } else {
                    return Err(syntax(lineno, col, "expected '=>'"));
                }
            }
            '\'' => {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j] != '\'' {
                    j += 1;
                }
                if j == chars.len() {
                    return Err(syntax(lineno, col, "unterminated literal"));
                }
                toks.push((Tok::Literal(chars[start..j].iter().collect()), col));
                i = j + 1;
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_')
                {
                    i += 1;
                }
                toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
            }
            other => {
                return Err(syntax(lineno, col, &format!("unexpected character '{other}'")));
            }
        }
    }
    Ok(toks)
}

fn syntax(line: usize, col: usize, msg: &str) -> Error {
    Error::RuleSyntax {
        line,
        col,
        msg: msg.to_string(),
    }
}

fn is_var(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

struct LineParser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    eol_col: usize,
}

impl LineParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|&(_, c)| c)
            .unwrap_or(self.eol_col)
    }

    fn next(&mut self, expected: &str) -> Result<(Tok, usize)> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(syntax(
                self.line,
                self.eol_col,
                &format!("expected {expected}, found end of line"),
            )),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<()> {
        let (t, col) = self.next(&tok.to_string())?;
        if t == tok {
            Ok(())
        } else {
            Err(syntax(self.line, col, &format!("expected {tok}, found {t}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize)> {
        let (t, col) = self.next(what)?;
        match t {
            Tok::Ident(s) => Ok((s, col)),
            other => Err(syntax(self.line, col, &format!("expected {what}, found {other}"))),
        }
    }

    fn var(&mut self, what: &str) -> Result<(String, usize)> {
        let (name, col) = self.ident(what)?;
        if is_var(&name) {
            Ok((name, col))
        } else {
            Err(syntax(
                self.line,
                col,
                &format!("expected {what} (uppercase-initial), found '{name}'"),
            ))
        }
    }

    fn parse_rule(&mut self) -> Result<PreferenceRule> {
        let mut body_attrs = Vec::new();
        let mut body_rels = Vec::new();
        loop {
            let (name, _) = self.ident("atom name")?;
            self.expect(Tok::LParen)?;
            let (var1, _) = self.var("variable")?;
            self.expect(Tok::Comma)?;
            let (arg, col) = self.next("variable or quoted literal")?;
            match arg {
                Tok::Ident(v) if is_var(&v) => {
                    body_rels.push(RelAtom {
                        rel: name,
                        var1,
                        var2: v,
                    });
                }
                Tok::Literal(value) => {
                    body_attrs.push(AttrAtom {
                        attr: name,
                        var: var1,
                        value,
                    });
                }
                other => {
                    return Err(syntax(
                        self.line,
                        col,
                        &format!("expected variable or quoted literal, found {other}"),
                    ));
                }
            }
            self.expect(Tok::RParen)?;
            match self.next("'&' or '=>'")? {
                (Tok::Amp, _) => continue,
                (Tok::Arrow, _) => break,
                (other, col) => {
                    return Err(syntax(
                        self.line,
                        col,
                        &format!("expected '&' or '=>', found {other}"),
                    ));
                }
            }
        }

        let mut heads = Vec::new();
        let mut head_cols = Vec::new();
        loop {
            let (kw, kw_col) = self.ident("'label'")?;
            if kw != "label" {
                return Err(syntax(
                    self.line,
                    kw_col,
                    &format!("expected 'label', found '{kw}'"),
                ));
            }
            self.expect(Tok::LParen)?;
            let (var, var_col) = self.var("variable")?;
            self.expect(Tok::Comma)?;
            let (label, _) = self.ident("label name")?;
            self.expect(Tok::RParen)?;
            let polarity = match self.next("'+' or '-'")? {
                (Tok::Plus, _) => Polarity::Prefer,
                (Tok::Minus, _) => Polarity::Avoid,
                (other, col) => {
                    return Err(syntax(
                        self.line,
                        col,
                        &format!("expected '+' or '-', found {other}"),
                    ));
                }
            };
            heads.push(LabelPref { var, label, polarity });
            head_cols.push(var_col);
            match self.peek() {
                Some(Tok::Semi) => {
                    self.pos += 1;
                }
                None => break,
                Some(other) => {
                    let col = self.col();
                    let msg = format!("expected ';' or end of line, found {other}");
                    return Err(syntax(self.line, col, &msg));
                }
            }
        }

        let rule = PreferenceRule {
            body_attrs,
            body_rels,
            heads,
            source_line: self.line,
        };

        // every head variable must be bound by at least one body atom
        let bound = rule.variables();
        for (h, &col) in rule.heads.iter().zip(&head_cols) {
            if !bound.contains(&h.var) {
                return Err(syntax(
                    self.line,
                    col,
                    &format!("head variable '{}' is not bound in the body", h.var),
                ));
            }
        }
        // duplicate (var, label) heads are conflicting or redundant
        for (i, a) in rule.heads.iter().enumerate() {
            for b in &rule.heads[i + 1..] {
                if a.var == b.var && a.label == b.label {
                    return Err(syntax(
                        self.line,
                        head_cols[i],
                        &format!("duplicate head for ({}, {})", a.var, a.label),
                    ));
                }
            }
        }
        Ok(rule)
    }
}

/// Parse a whole advice file. Comments and blank lines are ignored; rules
/// keep their source line for diagnostics. Empty input is a valid empty
/// rule set (advice disabled).
pub fn parse_rules(text: &str) -> Result<RuleSet> {
    let mut rules = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let toks = lex_line(raw, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let eol_col = raw.chars().count() + 1;
        let mut p = LineParser {
            toks,
            pos: 0,
            line: lineno,
            eol_col,
        };
        rules.push(p.parse_rule()?);
    }
    Ok(RuleSet { rules })
}

/// Check every name a rule set uses against the graph: attribute atoms must
/// resolve through the feature vocab (composite `Attr:value` keys), relation
/// atoms against relation names, head labels against the label set. Returns
/// an empty list iff fully resolvable.
pub fn validate(rules: &RuleSet, g: &KnowledgeGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for rule in &rules.rules {
        for a in &rule.body_attrs {
            let key = a.vocab_key();
            if !g.feature_vocab().contains_key(&key) {
                out.push(Diagnostic {
                    line: rule.source_line,
                    message: format!("unknown attribute '{key}' (not in vocab)"),
                });
            }
        }
        for r in &rule.body_rels {
            if g.relation_by_name(&r.rel).is_none() {
                out.push(Diagnostic {
                    line: rule.source_line,
                    message: format!("unknown relation '{}'", r.rel),
                });
            }
        }
        for h in &rule.heads {
            if g.label_index(&h.label).is_none() {
                out.push(Diagnostic {
                    line: rule.source_line,
                    message: format!("unknown label '{}'", h.label),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::load_graph_from_strs;
    use proptest::prelude::*;

    #[test]
    fn parses_citation_rule() {
        let rs = parse_rules(
            "HasWord(E1,'fat') & HasWord(E1,'obese') & Cites(E2,E1) => label(E2,type2)+\n",
        )
        .unwrap();
        assert_eq!(rs.rules.len(), 1);
        let r = &rs.rules[0];
        assert_eq!(r.body_attrs.len(), 2);
        assert_eq!(r.body_rels.len(), 1);
        assert_eq!(r.heads.len(), 1);
        assert_eq!(r.heads[0].polarity, Polarity::Prefer);
        assert_eq!(r.heads[0].var, "E2");
        assert_eq!(r.heads[0].label, "type2");
        assert_eq!(r.body_rels[0].rel, "Cites");
        assert_eq!(r.source_line, 1);
    }

    #[test]
    fn empty_text_is_empty_ruleset() {
        assert!(parse_rules("").unwrap().is_empty());
        assert!(parse_rules("# just a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn unbound_head_variable_is_error() {
        let err = parse_rules("Cites(E2,E1) => label(E3,type1)+").unwrap_err();
        match err {
            Error::RuleSyntax { line, msg, .. } => {
                assert_eq!(line, 1);
                assert!(msg.contains("E3"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_head_is_error() {
        let err =
            parse_rules("Cites(E2,E1) => label(E2,t)+; label(E2,t)-").unwrap_err();
        assert!(matches!(err, Error::RuleSyntax { .. }));
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_rules("HasWord(E1,'fat') label(E1,t)+").unwrap_err();
        match err {
            Error::RuleSyntax { line: 1, col, .. } => assert_eq!(col, 19),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn avoid_polarity_and_multiple_heads() {
        let rs = parse_rules("Has(E,'x') => label(E,a)+; label(E,b)-").unwrap();
        let heads = &rs.rules[0].heads;
        assert_eq!(heads[1].polarity, Polarity::Avoid);
        assert_eq!(heads.len(), 2);
    }

    #[test]
    fn lowercase_second_arg_rejected() {
        assert!(parse_rules("rel(E1,foo) => label(E1,t)+").is_err());
    }

    #[test]
    fn trailing_comment_ignored() {
        let rs = parse_rules("Has(E,'x') => label(E,t)+ # reason\n").unwrap();
        assert_eq!(rs.rules.len(), 1);
    }

    #[test]
    fn rule_order_is_source_order() {
        let rs = parse_rules(
            "# header\nA(E,'1') => label(E,t)+\n\nB(E,'2') => label(E,u)+\n",
        )
        .unwrap();
        assert_eq!(rs.rules[0].source_line, 2);
        assert_eq!(rs.rules[1].source_line, 4);
        assert_eq!(rs.rules[0].body_attrs[0].attr, "A");
        assert_eq!(rs.rules[1].body_attrs[0].attr, "B");
    }

    fn toy_graph() -> crate::graph::KnowledgeGraph {
        load_graph_from_strs(
            "a\ttype1\t0:1.0\nb\ttype2\t1:0.5\nc\tnone\t\n",
            "sameAuthor\ta\tb\n",
            Some("HasWord:fat\t0\nHasWord:obese\t1\n"),
            true,
        )
        .unwrap()
    }

    #[test]
    fn validate_unknown_relation() {
        let g = toy_graph();
        let rs = parse_rules("Cites(E2,E1) => label(E2,type1)+").unwrap();
        let diags = validate(&rs, &g);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("Cites"));
    }

    #[test]
    fn validate_clean_rule() {
        let g = toy_graph();
        let rs =
            parse_rules("HasWord(E1,'fat') & sameAuthor(E2,E1) => label(E2,type2)+").unwrap();
        assert!(validate(&rs, &g).is_empty());
    }

    #[test]
    fn validate_unknown_label_and_attr() {
        let g = toy_graph();
        let rs = parse_rules("HasWord(E1,'zzz') => label(E1,type4)+").unwrap();
        let diags = validate(&rs, &g);
        assert_eq!(diags.len(), 2);
        assert!(diags.iter().any(|d| d.message.contains("type4")));
        assert!(diags.iter().any(|d| d.message.contains("HasWord:zzz")));
    }

    #[test]
    fn pretty_round_trip_fixed_point() {
        let src = "HasWord(E1,'fat') & HasWord(E1,'obese') & Cites(E2,E1) => label(E2,type2)+\nR(A,B) => label(A,x)+; label(B,y)-\n";
        let once = parse_rules(src).unwrap();
        let twice = parse_rules(&once.pretty()).unwrap();
        // source lines shift when comments/blanks disappear; compare content
        let strip = |rs: &RuleSet| {
            rs.rules
                .iter()
                .map(|r| (r.body_attrs.clone(), r.body_rels.clone(), r.heads.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&once), strip(&twice));
        assert_eq!(once.pretty(), twice.pretty());
    }

    fn arb_var() -> impl Strategy<Value = String> {
        prop_oneof![Just("E1".into()), Just("E2".into()), Just("X".into())]
    }

    fn arb_rule() -> impl Strategy<Value = PreferenceRule> {
        let attr = (arb_var(), "[a-z]{1,6}").prop_map(|(var, value)| AttrAtom {
            attr: "HasWord".into(),
            var,
            value,
        });
        let rel = (arb_var(), arb_var()).prop_map(|(var1, var2)| RelAtom {
            rel: "cites".into(),
            var1,
            var2,
        });
        (
            proptest::collection::vec(attr, 0..3),
            proptest::collection::vec(rel, 0..3),
            proptest::collection::vec(
                (any::<bool>(), proptest::sample::select(vec!["t1", "t2"])),
                1..3,
            ),
        )
            .prop_filter_map("need a bound body var", |(attrs, rels, head_specs)| {
                let rule = PreferenceRule {
                    body_attrs: attrs,
                    body_rels: rels,
                    heads: vec![],
                    source_line: 1,
                };
                let vars = rule.variables();
                if vars.is_empty() {
                    return None;
                }
                let mut heads = Vec::new();
                for (i, (prefer, label)) in head_specs.into_iter().enumerate() {
                    let var = vars[i % vars.len()].clone();
                    let head = LabelPref {
                        var,
                        label: label.to_string(),
                        polarity: if prefer { Polarity::Prefer } else { Polarity::Avoid },
                    };
                    if heads
                        .iter()
                        .any(|h: &LabelPref| h.var == head.var && h.label == head.label)
                    {
                        continue;
                    }
                    heads.push(head);
                }
                if heads.is_empty() {
                    return None;
                }
                Some(PreferenceRule { heads, ..rule })
            })
    }

    proptest! {
        #[test]
        fn generated_rules_round_trip(rule in arb_rule()) {
            let printed = rule.pretty();
            let parsed = parse_rules(&printed).unwrap();
            prop_assert_eq!(parsed.rules.len(), 1);
            let got = &parsed.rules[0];
            prop_assert_eq!(&got.body_attrs, &rule.body_attrs);
            prop_assert_eq!(&got.body_rels, &rule.body_rels);
            prop_assert_eq!(&got.heads, &rule.heads);
        }

        #[test]
        fn corrupted_rules_rejected(rule in arb_rule(), kind in 0usize..4) {
            let printed = rule.pretty();
            let corrupted = match kind {
                0 => printed.replace("=>", "="),
                1 => printed.replace('(', " "),
                2 => format!("{printed} &"),
                _ => format!("1{printed}"),
            };
            prop_assert!(parse_rules(&corrupted).is_err());
        }
    }
}
