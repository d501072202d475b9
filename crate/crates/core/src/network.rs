//! Line-oriented description language for Gaussian microwave networks.
//!
//! ```text
//! program  := line*
//! line     := (stmt | comment | blank) "\n"
//! stmt     := "mode" ID
//!           | "source" ("vacuum" | "coherent") ID kv*
//!           | "squeeze" ID kv*
//!           | "hybrid" ID ID kv*
//!           | "loss" ID value
//!           | "psa" ID kv*
//!           | "couple" ID "from" ID kv*
//!           | "discard" ID
//!           | "output" ID+
//! kv       := KEY "=" value
//! value    := NUM | "$" ID
//! ```
//!
//! Gains, squeezing, couplings and losses are in dB, angles in degrees,
//! displacements in photons. `$name` values are bound at execution time.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::gaussian::{
    db_to_linear, polar_displacement, BeamsplitterConvention, GaussianState, NoiseModel, StateError,
};

/// Reference netlist of the teleportation chain.
pub const TELEPORT_NET: &str = include_str!("../assets/teleport.net");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("line {line}, column {column}: {message} (expected {expected})")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
        expected: String,
    },
    #[error("line {line}: {message}")]
    Semantic { line: usize, message: String },
    #[error("unbound parameter `${0}`")]
    Unbound(String),
    #[error("parameter `${name}` must be finite, got {value}")]
    NonFinite { name: String, value: f64 },
    #[error(transparent)]
    State(#[from] StateError),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Unit {
    Decibel,
    Degree,
    Photon,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::Decibel => "dB",
            Unit::Degree => "deg",
            Unit::Photon => "photons",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Param(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => write!(f, "{v}"),
            Value::Param(name) => write!(f, "${name}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Vacuum,
    Coherent,
}

pub type Args = Vec<(String, Value)>;

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Mode(String),
    Source {
        kind: SourceKind,
        mode: String,
        args: Args,
    },
    Squeeze {
        mode: String,
        args: Args,
    },
    Hybrid {
        a: String,
        b: String,
        args: Args,
    },
    Loss {
        mode: String,
        loss: Value,
    },
    Psa {
        mode: String,
        args: Args,
    },
    Couple {
        target: String,
        from: String,
        args: Args,
    },
    Discard(String),
    Output(Vec<String>),
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &Args) -> fmt::Result {
    for (k, v) in args {
        write!(f, " {k}={v}")?;
    }
    Ok(())
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Mode(m) => write!(f, "mode {m}"),
            Statement::Source { kind, mode, args } => {
                let k = match kind {
                    SourceKind::Vacuum => "vacuum",
                    SourceKind::Coherent => "coherent",
                };
                write!(f, "source {k} {mode}")?;
                write_args(f, args)
            }
            Statement::Squeeze { mode, args } => {
                write!(f, "squeeze {mode}")?;
                write_args(f, args)
            }
            Statement::Hybrid { a, b, args } => {
                write!(f, "hybrid {a} {b}")?;
                write_args(f, args)
            }
            Statement::Loss { mode, loss } => write!(f, "loss {mode} {loss}"),
            Statement::Psa { mode, args } => {
                write!(f, "psa {mode}")?;
                write_args(f, args)
            }
            Statement::Couple { target, from, args } => {
                write!(f, "couple {target} from {from}")?;
                write_args(f, args)
            }
            Statement::Discard(m) => write!(f, "discard {m}"),
            Statement::Output(ms) => write!(f, "output {}", ms.join(" ")),
        }
    }
}

/// Parsed and checked netlist.
#[derive(Debug, Clone)]
pub struct NetworkDesc {
    pub statements: Vec<Statement>,
    /// Source line of each statement.
    pub lines: Vec<usize>,
    /// Unbound parameters with the unit they are used in.
    pub parameters: BTreeMap<String, Unit>,
}

impl PartialEq for NetworkDesc {
    fn eq(&self, other: &Self) -> bool {
        self.statements == other.statements && self.parameters == other.parameters
    }
}

impl fmt::Display for NetworkDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.statements {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

const KEYWORDS: &str = "one of mode, source, squeeze, hybrid, loss, psa, couple, discard, output";

struct Token<'a> {
    text: &'a str,
    column: usize,
}

struct LineCursor<'a> {
    line: usize,
    tokens: Vec<Token<'a>>,
    pos: usize,
    end_column: usize,
}

impl<'a> LineCursor<'a> {
    fn new(line: usize, text: &'a str) -> Self {
        let mut tokens = Vec::new();
        let mut start = None;
        for (i, ch) in text.char_indices() {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    tokens.push(Token {
                        text: &text[s..i],
                        column: s + 1,
                    });
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            tokens.push(Token {
                text: &text[s..],
                column: s + 1,
            });
        }
        Self {
            line,
            tokens,
            pos: 0,
            end_column: text.trim_end().len() + 1,
        }
    }

    fn syntax(&self, column: usize, message: impl Into<String>, expected: &str) -> NetworkError {
        NetworkError::Syntax {
            line: self.line,
            column,
            message: message.into(),
            expected: expected.to_string(),
        }
    }

    fn next(&mut self, expected: &str) -> Result<&Token<'a>> {
        if self.pos >= self.tokens.len() {
            return Err(self.syntax(self.end_column, "unexpected end of line", expected));
        }
        self.pos += 1;
        Ok(&self.tokens[self.pos - 1])
    }

    fn ident(&mut self, expected: &str) -> Result<String> {
        let tok = self.next(expected)?;
        let (text, column) = (tok.text, tok.column);
        if is_ident(text) {
            Ok(text.to_string())
        } else {
            Err(self.syntax(
                column,
                format!("`{text}` is not a valid identifier"),
                expected,
            ))
        }
    }

    fn keyword(&mut self, word: &str) -> Result<()> {
        let expected = format!("`{word}`");
        let tok = self.next(&expected)?;
        let (text, column) = (tok.text, tok.column);
        if text == word {
            Ok(())
        } else {
            Err(self.syntax(column, format!("found `{text}`"), &expected))
        }
    }

    fn value(&mut self) -> Result<Value> {
        let tok = self.next("a number or `$name`")?;
        let (text, column) = (tok.text, tok.column);
        parse_value(text).ok_or_else(|| {
            self.syntax(
                column,
                format!("invalid value `{text}`"),
                "a number or `$name`",
            )
        })
    }

    fn kvs(&mut self) -> Result<Vec<(String, Value, usize)>> {
        let mut out = Vec::new();
        while self.pos < self.tokens.len() {
            let tok = &self.tokens[self.pos];
            self.pos += 1;
            let (text, column) = (tok.text, tok.column);
            let Some((key, val)) = text.split_once('=') else {
                return Err(self.syntax(column, format!("found `{text}`"), "KEY=VALUE"));
            };
            if !is_ident(key) {
                return Err(self.syntax(column, format!("invalid key `{key}`"), "KEY=VALUE"));
            }
            let value = parse_value(val).ok_or_else(|| {
                self.syntax(
                    column + key.len() + 1,
                    format!("invalid value `{val}`"),
                    "a number or `$name`",
                )
            })?;
            out.push((key.to_string(), value, column));
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        match self.tokens.get(self.pos) {
            Some(tok) => Err(self.syntax(
                tok.column,
                format!("unexpected `{}`", tok.text),
                "end of line",
            )),
            None => Ok(()),
        }
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_value(s: &str) -> Option<Value> {
    if let Some(name) = s.strip_prefix('$') {
        return is_ident(name).then(|| Value::Param(name.to_string()));
    }
    let first = s.chars().next()?;
    if !(first.is_ascii_digit() || first == '-' || first == '+' || first == '.') {
        return None;
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Value::Number)
}

/// Allowed keyword arguments: (key, unit, required).
type KeySpec = &'static [(&'static str, Unit, bool)];

const COHERENT_KEYS: KeySpec = &[("nd", Unit::Photon, true), ("theta", Unit::Degree, false)];
const SQUEEZE_KEYS: KeySpec = &[("S", Unit::Decibel, true), ("angle", Unit::Degree, false)];
const HYBRID_KEYS: KeySpec = &[("loss", Unit::Decibel, false)];
const PSA_KEYS: KeySpec = &[("G", Unit::Decibel, true), ("angle", Unit::Degree, false)];
const COUPLE_KEYS: KeySpec = &[("beta", Unit::Decibel, true)];

#[derive(Default)]
struct Checker {
    declared: Vec<String>,
    touched: HashSet<String>,
    discarded: HashSet<String>,
    sourced: HashSet<String>,
    parameters: BTreeMap<String, Unit>,
}

impl Checker {
    fn semantic(line: usize, message: String) -> NetworkError {
        NetworkError::Semantic { line, message }
    }

    fn use_mode(&mut self, line: usize, mode: &str) -> Result<()> {
        if !self.declared.iter().any(|m| m == mode) {
            return Err(Self::semantic(
                line,
                format!("mode `{mode}` is not declared"),
            ));
        }
        if self.discarded.contains(mode) {
            return Err(Self::semantic(line, format!("mode `{mode}` was discarded")));
        }
        self.touched.insert(mode.to_string());
        Ok(())
    }

    fn distinct(line: usize, a: &str, b: &str) -> Result<()> {
        if a == b {
            return Err(Self::semantic(
                line,
                format!("`{a}` cannot be coupled to itself"),
            ));
        }
        Ok(())
    }

    fn value(&mut self, line: usize, value: &Value, unit: Unit) -> Result<()> {
        if let Value::Param(name) = value {
            match self.parameters.get(name) {
                Some(&u) if u != unit => {
                    return Err(Self::semantic(
                        line,
                        format!("parameter `${name}` redefined: used as {u} and as {unit}"),
                    ))
                }
                _ => {
                    self.parameters.insert(name.clone(), unit);
                }
            }
        }
        Ok(())
    }

    fn args(
        &mut self,
        cursor: &LineCursor,
        raw: Vec<(String, Value, usize)>,
        spec: KeySpec,
    ) -> Result<Args> {
        let line = cursor.line;
        let mut out: Args = Vec::with_capacity(raw.len());
        for (key, value, column) in raw {
            let Some(&(_, unit, _)) = spec.iter().find(|(k, _, _)| *k == key) else {
                let keys: Vec<&str> = spec.iter().map(|(k, _, _)| *k).collect();
                return Err(cursor.syntax(
                    column,
                    format!("unknown key `{key}`"),
                    &if keys.is_empty() {
                        "no arguments".to_string()
                    } else {
                        keys.join(", ")
                    },
                ));
            };
            if out.iter().any(|(k, _)| *k == key) {
                return Err(Self::semantic(
                    line,
                    format!("parameter `{key}` given twice"),
                ));
            }
            self.value(line, &value, unit)?;
            out.push((key, value));
        }
        for (key, _, required) in spec {
            if *required && !out.iter().any(|(k, _)| k == key) {
                return Err(Self::semantic(line, format!("missing required `{key}=`")));
            }
        }
        Ok(out)
    }
}

/// Parses and checks a netlist.
pub fn parse_network(text: &str) -> Result<NetworkDesc> {
    let mut checker = Checker::default();
    let mut statements = Vec::new();
    let mut lines = Vec::new();
    let mut output_line: Option<usize> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("");
        let mut cur = LineCursor::new(line, content);
        if cur.tokens.is_empty() {
            continue;
        }
        if let Some(out) = output_line {
            return Err(Checker::semantic(
                line,
                format!("statement after `output` on line {out}"),
            ));
        }
        let head = cur.next(KEYWORDS)?;
        let (word, column) = (head.text, head.column);
        let stmt = match word {
            "mode" => {
                let m = cur.ident("a mode name")?;
                cur.finish()?;
                if checker.declared.contains(&m) {
                    return Err(Checker::semantic(
                        line,
                        format!("mode `{m}` declared twice"),
                    ));
                }
                checker.declared.push(m.clone());
                Statement::Mode(m)
            }
            "source" => {
                let kind_tok = cur.next("`vacuum` or `coherent`")?;
                let (ktext, kcol) = (kind_tok.text, kind_tok.column);
                let kind = match ktext {
                    "vacuum" => SourceKind::Vacuum,
                    "coherent" => SourceKind::Coherent,
                    other => {
                        return Err(cur.syntax(
                            kcol,
                            format!("unknown source `{other}`"),
                            "`vacuum` or `coherent`",
                        ))
                    }
                };
                let mode = cur.ident("a mode name")?;
                let raw = cur.kvs()?;
                if checker.touched.contains(&mode) {
                    return Err(Checker::semantic(
                        line,
                        format!("source for `{mode}` must precede every other use of it"),
                    ));
                }
                checker.use_mode(line, &mode)?;
                if !checker.sourced.insert(mode.clone()) {
                    return Err(Checker::semantic(line, format!("`{mode}` has two sources")));
                }
                let spec: KeySpec = match kind {
                    SourceKind::Vacuum => &[],
                    SourceKind::Coherent => COHERENT_KEYS,
                };
                let args = checker.args(&cur, raw, spec)?;
                Statement::Source { kind, mode, args }
            }
            "squeeze" => {
                let mode = cur.ident("a mode name")?;
                let raw = cur.kvs()?;
                checker.use_mode(line, &mode)?;
                let args = checker.args(&cur, raw, SQUEEZE_KEYS)?;
                Statement::Squeeze { mode, args }
            }
            "hybrid" => {
                let a = cur.ident("a mode name")?;
                let b = cur.ident("a mode name")?;
                let raw = cur.kvs()?;
                checker.use_mode(line, &a)?;
                checker.use_mode(line, &b)?;
                Checker::distinct(line, &a, &b)?;
                let args = checker.args(&cur, raw, HYBRID_KEYS)?;
                Statement::Hybrid { a, b, args }
            }
            "loss" => {
                let mode = cur.ident("a mode name")?;
                let loss = cur.value()?;
                cur.finish()?;
                checker.use_mode(line, &mode)?;
                if let Value::Number(v) = loss {
                    if v < 0.0 {
                        return Err(Checker::semantic(line, format!("negative loss {v} dB")));
                    }
                }
                checker.value(line, &loss, Unit::Decibel)?;
                Statement::Loss { mode, loss }
            }
            "psa" => {
                let mode = cur.ident("a mode name")?;
                let raw = cur.kvs()?;
                checker.use_mode(line, &mode)?;
                let args = checker.args(&cur, raw, PSA_KEYS)?;
                Statement::Psa { mode, args }
            }
            "couple" => {
                let target = cur.ident("a mode name")?;
                cur.keyword("from")?;
                let from = cur.ident("a mode name")?;
                let raw = cur.kvs()?;
                checker.use_mode(line, &target)?;
                checker.use_mode(line, &from)?;
                Checker::distinct(line, &target, &from)?;
                let args = checker.args(&cur, raw, COUPLE_KEYS)?;
                Statement::Couple { target, from, args }
            }
            "discard" => {
                let m = cur.ident("a mode name")?;
                cur.finish()?;
                checker.use_mode(line, &m)?;
                checker.discarded.insert(m.clone());
                Statement::Discard(m)
            }
            "output" => {
                let mut modes = vec![cur.ident("a mode name")?];
                while cur.pos < cur.tokens.len() {
                    modes.push(cur.ident("a mode name")?);
                }
                for (i, m) in modes.iter().enumerate() {
                    checker.use_mode(line, m)?;
                    if modes[..i].contains(m) {
                        return Err(Checker::semantic(line, format!("`{m}` listed twice")));
                    }
                }
                output_line = Some(line);
                Statement::Output(modes)
            }
            other => {
                return Err(cur.syntax(column, format!("unknown keyword `{other}`"), KEYWORDS));
            }
        };
        statements.push(stmt);
        lines.push(line);
    }

    if output_line.is_none() {
        let last = text.lines().count().max(1);
        return Err(Checker::semantic(
            last,
            "program has no `output` statement".into(),
        ));
    }
    Ok(NetworkDesc {
        statements,
        lines,
        parameters: checker.parameters,
    })
}

/// A compiled element with possibly unbound parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Displace {
        photons: Value,
        theta_deg: Value,
    },
    Squeeze {
        squeezing_db: Value,
        angle_deg: Value,
    },
    /// 50:50 beamsplitter followed by insertion loss on both outputs.
    Hybrid {
        loss_db: Value,
    },
    Loss {
        loss_db: Value,
    },
    Psa {
        gain_db: Value,
        angle_deg: Value,
    },
    /// Beamsplitter of transmissivity `1 − 10^(β/10)` on (target, from).
    Couple {
        beta_db: Value,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Channel {
        element: Element,
        modes: Vec<String>,
    },
    Trace(String),
    Output(Vec<String>),
}

/// Ordered channel sequence over a product-vacuum initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProgram {
    pub modes: Vec<String>,
    pub steps: Vec<Step>,
    pub parameters: BTreeMap<String, Unit>,
}

fn arg(args: &Args, key: &str, default: f64) -> Value {
    args.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.clone())
        .unwrap_or(Value::Number(default))
}

/// Lowers a checked description to a channel program, one step per
/// statement. `mode` and vacuum sources produce no step.
pub fn compile_network(desc: &NetworkDesc) -> ChannelProgram {
    let mut modes = Vec::new();
    let mut steps = Vec::new();
    for stmt in &desc.statements {
        let step = match stmt {
            Statement::Mode(m) => {
                modes.push(m.clone());
                continue;
            }
            Statement::Source {
                kind: SourceKind::Vacuum,
                ..
            } => continue,
            Statement::Source {
                kind: SourceKind::Coherent,
                mode,
                args,
            } => Step::Channel {
                element: Element::Displace {
                    photons: arg(args, "nd", 0.0),
                    theta_deg: arg(args, "theta", 0.0),
                },
                modes: vec![mode.clone()],
            },
            Statement::Squeeze { mode, args } => Step::Channel {
                element: Element::Squeeze {
                    squeezing_db: arg(args, "S", 0.0),
                    angle_deg: arg(args, "angle", 0.0),
                },
                modes: vec![mode.clone()],
            },
            Statement::Hybrid { a, b, args } => Step::Channel {
                element: Element::Hybrid {
                    loss_db: arg(args, "loss", 0.0),
                },
                modes: vec![a.clone(), b.clone()],
            },
            Statement::Loss { mode, loss } => Step::Channel {
                element: Element::Loss {
                    loss_db: loss.clone(),
                },
                modes: vec![mode.clone()],
            },
            Statement::Psa { mode, args } => Step::Channel {
                element: Element::Psa {
                    gain_db: arg(args, "G", 0.0),
                    angle_deg: arg(args, "angle", 0.0),
                },
                modes: vec![mode.clone()],
            },
            Statement::Couple { target, from, args } => Step::Channel {
                element: Element::Couple {
                    beta_db: arg(args, "beta", 0.0),
                },
                modes: vec![target.clone(), from.clone()],
            },
            Statement::Discard(m) => Step::Trace(m.clone()),
            Statement::Output(ms) => Step::Output(ms.clone()),
        };
        steps.push(step);
    }
    ChannelProgram {
        modes,
        steps,
        parameters: desc.parameters.clone(),
    }
}

struct Binder<'a> {
    bindings: &'a BTreeMap<String, f64>,
}

impl Binder<'_> {
    fn get(&self, v: &Value) -> Result<f64> {
        match v {
            Value::Number(x) => Ok(*x),
            Value::Param(name) => {
                let x = *self
                    .bindings
                    .get(name)
                    .ok_or_else(|| NetworkError::Unbound(name.clone()))?;
                if !x.is_finite() {
                    return Err(NetworkError::NonFinite {
                        name: name.clone(),
                        value: x,
                    });
                }
                Ok(x)
            }
        }
    }
}

impl ChannelProgram {
    pub fn channel_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, Step::Channel { .. }))
            .count()
    }

    pub fn trace_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, Step::Trace(_)))
            .count()
    }

    pub fn output_modes(&self) -> &[String] {
        self.steps
            .iter()
            .find_map(|s| match s {
                Step::Output(ms) => Some(ms.as_slice()),
                _ => None,
            })
            .unwrap_or(&[])
    }

    /// Names of parameters without a binding.
    pub fn unbound<'a>(&'a self, bindings: &BTreeMap<String, f64>) -> Vec<&'a str> {
        self.parameters
            .keys()
            .filter(|k| !bindings.contains_key(*k))
            .map(String::as_str)
            .collect()
    }

    /// Quadrature means of the first coherent source, the reference state
    /// for fidelity; vacuum if there is none.
    pub fn input_reference(&self, bindings: &BTreeMap<String, f64>) -> Result<[f64; 2]> {
        let binder = Binder { bindings };
        for step in &self.steps {
            if let Step::Channel {
                element: Element::Displace { photons, theta_deg },
                ..
            } = step
            {
                let n = binder.get(photons)?;
                let theta = binder.get(theta_deg)?.to_radians();
                return Ok(polar_displacement(n, theta));
            }
        }
        Ok([0.0, 0.0])
    }

    /// Folds the program over the product vacuum and returns the reduced
    /// state of the `output` modes.
    pub fn execute(
        &self,
        bindings: &BTreeMap<String, f64>,
        noise: &NoiseModel,
    ) -> Result<GaussianState> {
        if let Some(name) = self.unbound(bindings).first() {
            return Err(NetworkError::Unbound(name.to_string()));
        }
        noise.validate()?;
        let env = noise.env_photons();
        let b = Binder { bindings };
        let mut state = GaussianState::vacuum(self.modes.iter().cloned())?;
        for step in &self.steps {
            state = match step {
                Step::Channel { element, modes } => {
                    let m0 = modes[0].as_str();
                    match element {
                        Element::Displace { photons, theta_deg } => {
                            let n = b.get(photons)?;
                            if n < 0.0 {
                                return Err(StateError::InvalidArgument(format!(
                                    "negative displacement photons {n}"
                                ))
                                .into());
                            }
                            let [dq, dp] = polar_displacement(n, b.get(theta_deg)?.to_radians());
                            state.displace(m0, dq, dp)?
                        }
                        Element::Squeeze {
                            squeezing_db,
                            angle_deg,
                        } => state.squeeze(
                            m0,
                            b.get(squeezing_db)?,
                            b.get(angle_deg)?.to_radians(),
                        )?,
                        Element::Hybrid { loss_db } => {
                            let l = b.get(loss_db)?;
                            let m1 = modes[1].as_str();
                            state
                                .beamsplitter(m0, m1, 0.5, BeamsplitterConvention::Real)?
                                .loss(m0, l, env)?
                                .loss(m1, l, env)?
                        }
                        Element::Loss { loss_db } => state.loss(m0, b.get(loss_db)?, env)?,
                        Element::Psa { gain_db, angle_deg } => state.phase_sensitive_amp(
                            m0,
                            b.get(gain_db)?,
                            b.get(angle_deg)?.to_radians(),
                            noise,
                        )?,
                        Element::Couple { beta_db } => {
                            let beta = b.get(beta_db)?;
                            if beta >= 0.0 {
                                return Err(StateError::InvalidArgument(format!(
                                    "coupler β must be < 0 dB, got {beta}"
                                ))
                                .into());
                            }
                            state.beamsplitter(
                                m0,
                                &modes[1],
                                1.0 - db_to_linear(beta),
                                BeamsplitterConvention::Real,
                            )?
                        }
                    }
                }
                Step::Trace(m) => {
                    let keep: Vec<&str> = state
                        .modes()
                        .iter()
                        .map(String::as_str)
                        .filter(|k| k != m)
                        .collect();
                    state.partial_trace(&keep)?
                }
                Step::Output(ms) => {
                    let keep: Vec<&str> = ms.iter().map(String::as_str).collect();
                    return Ok(state.partial_trace(&keep)?);
                }
            };
        }
        unreachable!("checked programs end with an output step")
    }
}
