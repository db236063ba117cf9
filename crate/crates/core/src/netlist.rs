//! Line-oriented SPICE-subset netlists.
//!
//! Supported cards:
//!
//! ```text
//! Rname n1 n2 value
//! Lname n1 n2 value
//! Cname n1 n2 value
//! Vname n+ n- AC mag [phase_deg]
//! Kname Lref1 Lref2 k
//! .probe v(node)
//! .end
//! ```
//!
//! Values accept the suffixes `p n u m k meg` (case-insensitive). Lines
//! starting with `*` or `#` are comments. Anything after `.end` is ignored.
//! Node `0` is ground.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub const GROUND: &str = "0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    Resistor,
    Inductor,
    Capacitor,
    AcSource,
    Coupling,
}

impl ElementKind {
    fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'R' => Some(Self::Resistor),
            'L' => Some(Self::Inductor),
            'C' => Some(Self::Capacitor),
            'V' => Some(Self::AcSource),
            'K' => Some(Self::Coupling),
            _ => None,
        }
    }
}

/// One netlist card.
///
/// For [`ElementKind::Coupling`] the two `nodes` are the names of the coupled
/// inductors and `value` is the coupling coefficient `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub kind: ElementKind,
    pub name: String,
    pub nodes: [String; 2],
    pub value: f64,
    pub phase_deg: f64,
}

impl Element {
    pub fn resistor(name: &str, a: &str, b: &str, ohms: f64) -> Self {
        Self::two_terminal(ElementKind::Resistor, name, a, b, ohms)
    }

    pub fn inductor(name: &str, a: &str, b: &str, henry: f64) -> Self {
        Self::two_terminal(ElementKind::Inductor, name, a, b, henry)
    }

    pub fn capacitor(name: &str, a: &str, b: &str, farad: f64) -> Self {
        Self::two_terminal(ElementKind::Capacitor, name, a, b, farad)
    }

    pub fn ac_source(name: &str, pos: &str, neg: &str, magnitude: f64, phase_deg: f64) -> Self {
        Self {
            phase_deg,
            ..Self::two_terminal(ElementKind::AcSource, name, pos, neg, magnitude)
        }
    }

    pub fn coupling(name: &str, l1: &str, l2: &str, k: f64) -> Self {
        Self::two_terminal(ElementKind::Coupling, name, l1, l2, k)
    }

    fn two_terminal(kind: ElementKind, name: &str, a: &str, b: &str, value: f64) -> Self {
        Self {
            kind,
            name: name.to_string(),
            nodes: [a.to_string(), b.to_string()],
            value,
            phase_deg: 0.0,
        }
    }

    /// True for elements whose `nodes` are circuit nodes (everything but couplings).
    pub fn is_branch(&self) -> bool {
        self.kind != ElementKind::Coupling
    }
}

/// A linear network: an ordered element list plus probe nodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Circuit {
    pub elements: Vec<Element>,
    pub probes: Vec<String>,
    /// Free-text comment lines, emitted as `* ...` before the elements.
    pub comments: Vec<String>,
}

impl Circuit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements
            .iter()
            .find(|e| e.name.eq_ignore_ascii_case(name))
    }

    pub fn sources(&self) -> impl Iterator<Item = &Element> {
        self.elements
            .iter()
            .filter(|e| e.kind == ElementKind::AcSource)
    }

    /// Non-ground nodes in order of first appearance.
    pub fn nodes(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for e in self.elements.iter().filter(|e| e.is_branch()) {
            for n in &e.nodes {
                if n != GROUND && !seen.iter().any(|s| s == n) {
                    seen.push(n.clone());
                }
            }
        }
        seen
    }

    pub fn has_node(&self, node: &str) -> bool {
        node == GROUND
            || self
                .elements
                .iter()
                .filter(|e| e.is_branch())
                .any(|e| e.nodes.iter().any(|n| n == node))
    }

    /// Nodes that have no conductive path to ground.
    pub fn floating_nodes(&self) -> Vec<String> {
        let nodes = self.nodes();
        let index: HashMap<&str, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i + 1))
            .collect();
        let idx = |n: &str| if n == GROUND { 0 } else { index[n] };

        let mut parent: Vec<usize> = (0..=nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in self.elements.iter().filter(|e| e.is_branch()) {
            let a = find(&mut parent, idx(&e.nodes[0]));
            let b = find(&mut parent, idx(&e.nodes[1]));
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        nodes
            .iter()
            .filter(|n| find(&mut parent, idx(n)) != root)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown value suffix '{0}'")]
    UnknownSuffix(String),
    #[error("duplicate element name '{0}'")]
    DuplicateName(String),
    #[error("coupling '{coupling}' references missing inductor '{inductor}'")]
    MissingInductor { coupling: String, inductor: String },
    #[error("coupling '{0}' must reference two distinct inductors")]
    SelfCoupling(String),
    #[error("probe on undeclared node '{0}'")]
    UndeclaredProbe(String),
    #[error("coupling coefficient {0} outside (0,1]")]
    CouplingOutOfRange(f64),
    #[error("nonpositive component value {value} for '{name}'")]
    NonPositiveValue { name: String, value: f64 },
    #[error("unrecognized directive '{0}'")]
    UnknownDirective(String),
}

/// A parse failure with a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &line[s..i],
                    column: line[..s].chars().count() + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: line[..s].chars().count() + 1,
        });
    }
    out
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parse a numeric value with an optional engineering suffix.
///
/// Suffixes are folded into the decimal exponent before conversion, so
/// `10u` yields exactly the same double as the literal `1e-5`.
pub fn parse_value(text: &str) -> Result<f64, ParseErrorKind> {
    let bytes = text.as_bytes();
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - frac_start;
    }
    if digits == 0 {
        return Err(ParseErrorKind::Syntax(format!("expected a number, found '{text}'")));
    }
    let mantissa = &text[..i];

    let mut exponent: i64 = 0;
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let exp_digits_start = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_digits_start {
            exponent = text[i + 1..j]
                .parse()
                .map_err(|_| ParseErrorKind::Syntax(format!("exponent out of range in '{text}'")))?;
            i = j;
        }
    }

    let suffix = &text[i..];
    let scale = match suffix.to_ascii_lowercase().as_str() {
        "" => 0,
        "p" => -12,
        "n" => -9,
        "u" => -6,
        "m" => -3,
        "k" => 3,
        "meg" => 6,
        _ => return Err(ParseErrorKind::UnknownSuffix(suffix.to_string())),
    };
    let exponent = exponent
        .checked_add(scale)
        .ok_or_else(|| ParseErrorKind::Syntax(format!("exponent out of range in '{text}'")))?;
    let value: f64 = format!("{mantissa}e{exponent}")
        .parse()
        .map_err(|_| ParseErrorKind::Syntax(format!("malformed number '{text}'")))?;
    if !value.is_finite() {
        return Err(ParseErrorKind::Syntax(format!("value '{text}' is not finite")));
    }
    Ok(value)
}

struct LineParser<'a> {
    line: usize,
    tokens: Vec<Token<'a>>,
    end_column: usize,
}

impl<'a> LineParser<'a> {
    fn err_at(&self, column: usize, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: self.line,
            column,
            kind,
        }
    }

    fn err(&self, idx: usize, kind: ParseErrorKind) -> ParseError {
        let column = self.tokens.get(idx).map_or(self.end_column, |t| t.column);
        self.err_at(column, kind)
    }

    fn expect_count(&self, min: usize, max: usize, usage: &str) -> Result<(), ParseError> {
        let n = self.tokens.len();
        if n < min {
            return Err(self.err(n, ParseErrorKind::Syntax(format!("expected '{usage}'"))));
        }
        if n > max {
            return Err(self.err(
                max,
                ParseErrorKind::Syntax(format!("unexpected token '{}'", self.tokens[max].text)),
            ));
        }
        Ok(())
    }

    fn ident(&self, idx: usize, what: &str) -> Result<&'a str, ParseError> {
        let t = self.tokens[idx];
        if is_identifier(t.text) {
            Ok(t.text)
        } else {
            Err(self.err(
                idx,
                ParseErrorKind::Syntax(format!("invalid {what} '{}'", t.text)),
            ))
        }
    }

    fn value(&self, idx: usize) -> Result<f64, ParseError> {
        parse_value(self.tokens[idx].text).map_err(|k| self.err(idx, k))
    }
}

/// Parse netlist text into a [`Circuit`].
pub fn parse_netlist(text: &str) -> Result<Circuit, ParseError> {
    let mut circuit = Circuit::new();
    let mut names: HashMap<String, usize> = HashMap::new();
    // (probe node, line, column), validated once every element is known
    let mut pending_probes: Vec<(String, usize, usize)> = Vec::new();
    let mut pending_couplings: Vec<(usize, usize, usize)> = Vec::new();

    for (line_idx, raw) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let trimmed = raw.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('*').or_else(|| trimmed.strip_prefix('#')) {
            circuit.comments.push(rest.trim().to_string());
            continue;
        }

        let p = LineParser {
            line: line_no,
            tokens: tokenize(raw),
            end_column: raw.chars().count() + 1,
        };
        let head = p.tokens[0];

        if head.text.starts_with('.') {
            match head.text.to_ascii_lowercase().as_str() {
                ".end" => {
                    p.expect_count(1, 1, ".end")?;
                    break;
                }
                ".probe" => {
                    let rest: String = p.tokens[1..].iter().map(|t| t.text).collect();
                    let column = p.tokens.get(1).map_or(p.end_column, |t| t.column);
                    let lower = rest.to_ascii_lowercase();
                    let node = if lower.starts_with("v(") && rest.ends_with(')') && rest.len() > 3 {
                        &rest[2..rest.len() - 1]
                    } else {
                        return Err(p.err_at(
                            column,
                            ParseErrorKind::Syntax("expected '.probe v(node)'".into()),
                        ));
                    };
                    if !is_identifier(node) {
                        return Err(p.err_at(
                            column,
                            ParseErrorKind::Syntax(format!("invalid node '{node}'")),
                        ));
                    }
                    pending_probes.push((node.to_string(), line_no, column));
                }
                other => {
                    return Err(p.err(0, ParseErrorKind::UnknownDirective(other.to_string())));
                }
            }
            continue;
        }

        let kind = head
            .text
            .chars()
            .next()
            .and_then(ElementKind::from_letter)
            .ok_or_else(|| {
                p.err(
                    0,
                    ParseErrorKind::Syntax(format!("unknown element type '{}'", head.text)),
                )
            })?;
        let name = p.ident(0, "element name")?;
        let key = name.to_ascii_uppercase();
        if names.contains_key(&key) {
            return Err(p.err(0, ParseErrorKind::DuplicateName(name.to_string())));
        }

        let element = match kind {
            ElementKind::Resistor | ElementKind::Inductor | ElementKind::Capacitor => {
                p.expect_count(4, 4, "name node node value")?;
                let a = p.ident(1, "node")?;
                let b = p.ident(2, "node")?;
                let value = p.value(3)?;
                if value <= 0.0 {
                    return Err(p.err(
                        3,
                        ParseErrorKind::NonPositiveValue {
                            name: name.to_string(),
                            value,
                        },
                    ));
                }
                Element::two_terminal(kind, name, a, b, value)
            }
            ElementKind::AcSource => {
                p.expect_count(5, 6, "name node node AC magnitude [phase]")?;
                let a = p.ident(1, "node")?;
                let b = p.ident(2, "node")?;
                if !p.tokens[3].text.eq_ignore_ascii_case("ac") {
                    return Err(p.err(3, ParseErrorKind::Syntax("expected 'AC'".into())));
                }
                let magnitude = p.value(4)?;
                if magnitude < 0.0 {
                    return Err(p.err(
                        4,
                        ParseErrorKind::NonPositiveValue {
                            name: name.to_string(),
                            value: magnitude,
                        },
                    ));
                }
                let phase = if p.tokens.len() == 6 { p.value(5)? } else { 0.0 };
                Element::ac_source(name, a, b, magnitude, phase)
            }
            ElementKind::Coupling => {
                p.expect_count(4, 4, "name inductor inductor k")?;
                let l1 = p.ident(1, "inductor name")?;
                let l2 = p.ident(2, "inductor name")?;
                let k = p.value(3)?;
                if !(k > 0.0 && k <= 1.0) {
                    return Err(p.err(3, ParseErrorKind::CouplingOutOfRange(k)));
                }
                if l1.eq_ignore_ascii_case(l2) {
                    return Err(p.err(2, ParseErrorKind::SelfCoupling(name.to_string())));
                }
                pending_couplings.push((circuit.elements.len(), line_no, p.tokens[1].column));
                Element::coupling(name, l1, l2, k)
            }
        };
        names.insert(key, circuit.elements.len());
        circuit.elements.push(element);
    }

    for (idx, line, column) in pending_couplings {
        let coupling = &circuit.elements[idx];
        for reference in &coupling.nodes {
            let found = names
                .get(&reference.to_ascii_uppercase())
                .map(|&i| circuit.elements[i].kind == ElementKind::Inductor)
                .unwrap_or(false);
            if !found {
                return Err(ParseError {
                    line,
                    column,
                    kind: ParseErrorKind::MissingInductor {
                        coupling: coupling.name.clone(),
                        inductor: reference.clone(),
                    },
                });
            }
        }
    }

    for (node, line, column) in pending_probes {
        if !circuit.has_node(&node) {
            return Err(ParseError {
                line,
                column,
                kind: ParseErrorKind::UndeclaredProbe(node),
            });
        }
        circuit.probes.push(node);
    }

    Ok(circuit)
}

/// Shortest round-tripping scientific form: `8`, `1e-5`, `2.533e-3`.
pub fn format_value(value: f64) -> String {
    let s = format!("{value:e}");
    match s.strip_suffix("e0") {
        Some(plain) => plain.to_string(),
        None => s,
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b] = &self.nodes;
        match self.kind {
            ElementKind::AcSource if self.phase_deg != 0.0 => write!(
                f,
                "{} {a} {b} AC {} {}",
                self.name,
                format_value(self.value),
                format_value(self.phase_deg)
            ),
            ElementKind::AcSource => {
                write!(f, "{} {a} {b} AC {}", self.name, format_value(self.value))
            }
            _ => write!(f, "{} {a} {b} {}", self.name, format_value(self.value)),
        }
    }
}

/// Canonical netlist text for `circuit`.
pub fn emit_netlist(circuit: &Circuit) -> String {
    let mut out = String::new();
    for c in &circuit.comments {
        if c.is_empty() {
            out.push_str("*\n");
        } else {
            out.push_str("* ");
            out.push_str(c);
            out.push('\n');
        }
    }
    for e in &circuit.elements {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    for p in &circuit.probes {
        out.push_str(&format!(".probe v({p})\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_series_lc() {
        let c = parse_netlist("V1 in 0 AC 1\nC1 in m 10u\nL1 m 0 2.533m\n.probe v(m)").unwrap();
        assert_eq!(c.elements.len(), 3);
        assert_eq!(c.probes, vec!["m".to_string()]);
        assert_eq!(c.element("C1").unwrap().value, 1e-5);
        assert_eq!(c.element("L1").unwrap().value, 2.533e-3);
        assert_eq!(c.element("V1").unwrap().kind, ElementKind::AcSource);
    }

    #[test]
    fn empty_text_is_an_empty_circuit() {
        let c = parse_netlist("").unwrap();
        assert!(c.elements.is_empty());
        assert!(c.probes.is_empty());
    }

    #[test]
    fn suffix_table_is_exact() {
        assert_eq!(parse_value("10u").unwrap(), 1e-5);
        assert_eq!(parse_value("2.533m").unwrap(), 2.533e-3);
        assert_eq!(parse_value("1meg").unwrap(), 1e6);
        assert_eq!(parse_value("1MEG").unwrap(), 1e6);
        assert_eq!(parse_value("4.7n").unwrap(), 4.7e-9);
        assert_eq!(parse_value("22p").unwrap(), 22e-12);
        assert_eq!(parse_value("3.3k").unwrap(), 3300.0);
        assert_eq!(parse_value("1e3k").unwrap(), 1e6);
        assert_eq!(parse_value(".5").unwrap(), 0.5);
        assert!(matches!(parse_value("1x"), Err(ParseErrorKind::UnknownSuffix(_))));
        assert!(matches!(parse_value("1mega"), Err(ParseErrorKind::UnknownSuffix(_))));
        assert!(matches!(parse_value("abc"), Err(ParseErrorKind::Syntax(_))));
    }

    #[test]
    fn element_letters_are_case_insensitive() {
        let c = parse_netlist("v1 a 0 ac 2 30\nr1 a 0 1k").unwrap();
        assert_eq!(c.elements[0].kind, ElementKind::AcSource);
        assert_eq!(c.elements[0].phase_deg, 30.0);
        assert_eq!(c.elements[1].kind, ElementKind::Resistor);
    }

    #[test]
    fn coupling_out_of_range() {
        let err = parse_netlist("K1 L1 L2 1.5").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::CouplingOutOfRange(1.5));
        assert_eq!((err.line, err.column), (1, 10));
        let err = parse_netlist("K1 L1 L2 0").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::CouplingOutOfRange(0.0));
    }

    #[test]
    fn coupling_to_missing_inductor() {
        let err = parse_netlist("L1 a 0 1m\nR2 a 0 1\nK1 L1 R2 0.5").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::MissingInductor { .. }));
        assert_eq!(err.line, 3);
        let err = parse_netlist("K1 L1 L1 0.5\nL1 a 0 1m").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::SelfCoupling(_)));
    }

    #[test]
    fn coupling_may_precede_inductors() {
        let c = parse_netlist("K1 LA LB 1\nLA a 0 1m\nLB b 0 1m").unwrap();
        assert_eq!(c.elements[0].kind, ElementKind::Coupling);
    }

    #[test]
    fn rejects_duplicates_and_bad_values() {
        let err = parse_netlist("R1 a 0 1\nr1 a 0 2").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::DuplicateName("r1".into()));
        assert_eq!(err.line, 2);

        let err = parse_netlist("C1 a 0 -1u").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::NonPositiveValue { .. }));
        let err = parse_netlist("R1 a 0 0").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::NonPositiveValue { .. }));

        let err = parse_netlist("R1 a 0 10q").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownSuffix("q".into()));
        assert_eq!(err.column, 8);
    }

    #[test]
    fn probe_on_undeclared_node() {
        let err = parse_netlist("R1 a 0 1\n.probe v(b)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UndeclaredProbe("b".into()));
        assert_eq!((err.line, err.column), (2, 8));
        assert!(parse_netlist(".probe v(0)").is_ok());
    }

    #[test]
    fn syntax_errors_are_positioned() {
        let err = parse_netlist("R1 a 0 1\n  V1 a 0 DC 1").unwrap_err();
        assert_eq!((err.line, err.column), (2, 10));
        let err = parse_netlist("R1 a").unwrap_err();
        assert_eq!((err.line, err.column), (1, 5));
        let err = parse_netlist("Q1 a b c").unwrap_err();
        assert_eq!((err.line, err.column), (1, 1));
        let err = parse_netlist(".tran 1u 1m").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::UnknownDirective(_)));
        let err = parse_netlist("R1 a 0 1 extra").unwrap_err();
        assert_eq!(err.column, 10);
    }

    #[test]
    fn comments_blank_lines_and_end() {
        let c = parse_netlist("* title\n\n# note\nR1 a 0 1\n.END\nthis is ignored").unwrap();
        assert_eq!(c.comments, vec!["title".to_string(), "note".to_string()]);
        assert_eq!(c.elements.len(), 1);
    }

    #[test]
    fn canonical_emission() {
        let mut c = Circuit::new();
        c.elements.push(Element::resistor("R1", "a", "0", 8.0));
        assert_eq!(emit_netlist(&c), "R1 a 0 8\n");

        c.elements.push(Element::capacitor("C1", "a", "0", 1e-5));
        assert_eq!(emit_netlist(&c), "R1 a 0 8\nC1 a 0 1e-5\n");
        assert_eq!(format_value(1000.0), "1e3");
        assert_eq!(format_value(2.533e-3), "2.533e-3");
    }

    #[test]
    fn floating_subcircuit_is_detected() {
        let c = parse_netlist("V1 a 0 AC 1\nR1 a 0 1\nL1 b c 1m\nL2 a 0 1m\nK1 L1 L2 1").unwrap();
        assert_eq!(c.floating_nodes(), vec!["b".to_string(), "c".to_string()]);
        let c = parse_netlist("V1 a 0 AC 1\nR1 a b 1\nR2 b 0 1").unwrap();
        assert!(c.floating_nodes().is_empty());
    }
}
