//! Line-oriented text formats for instances and flows.
//!
//! Instance files:
//!
//! ```text
//! # comment
//! node 1
//! social <i> <j> <S_ij> <S_ji>
//! request <provider> <requester> <R> <U>
//! provider_cap <i> <C>
//! ```
//!
//! Request edges get ids `0, 1, ...` in file order. Amounts are decimal
//! strings with at most `precision` fractional digits and are held exactly.
//!
//! Flow files hold `request_flow <provider> <requester> <edge_id> <value>` and
//! `social_flow <i> <j> <value>` lines; every other line is ignored so solver
//! output can be fed back in unchanged.

use std::fmt::Write as _;

use num_traits::Signed;
use thiserror::Error;

use crate::graph::{
    build_graph, EdgeId, Flow, FlowError, GraphError, NodeId, RequestEdge, SocialPair, SocialRequestGraph,
};
use crate::Rational;

pub const DEFAULT_PRECISION: u32 = 6;

/// Largest supported precision; `10^18` still fits an `i64` denominator.
pub const MAX_PRECISION: u32 = 18;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{value:?} has more than {precision} fractional digits")]
    PrecisionExceeded { value: String, precision: u32 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("amount {0} has no finite decimal expansion")]
    NonDecimal(Rational),
    #[error("virtual edge {0} cannot be written to an instance file")]
    VirtualEdge(EdgeId),
}

/// Parses a decimal string such as `-12.050` into an exact rational.
pub fn parse_decimal(text: &str, precision: u32) -> Result<Rational, InstanceError> {
    let bad = || InstanceError::Parse { line: 0, message: format!("invalid number {text:?}") };
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((a, b)) => (a, b),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let frac_trimmed = frac_part.trim_end_matches('0');
    if frac_trimmed.len() as u32 > precision.min(MAX_PRECISION) {
        return Err(InstanceError::PrecisionExceeded { value: text.to_string(), precision });
    }
    let digits = format!("{int_part}{frac_trimmed}");
    let mantissa: i64 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
    let scale = 10i64.checked_pow(frac_trimmed.len() as u32).ok_or_else(bad)?;
    let value = Rational::new(mantissa, scale);
    Ok(if negative { -value } else { value })
}

/// Formats a rational as a terminating decimal with no trailing zeros.
pub fn format_decimal(value: Rational) -> Result<String, InstanceError> {
    let denom = *value.denom();
    let mut digits = 0u32;
    let mut pow = 1i128;
    while pow % denom as i128 != 0 {
        digits += 1;
        pow *= 10;
        if digits > MAX_PRECISION {
            return Err(InstanceError::NonDecimal(value));
        }
    }
    let scaled = (*value.numer() as i128) * (pow / denom as i128);
    let sign = if scaled < 0 { "-" } else { "" };
    let abs = scaled.unsigned_abs();
    if digits == 0 {
        return Ok(format!("{sign}{abs}"));
    }
    let unit = 10u128.pow(digits);
    let frac = format!("{:0width$}", abs % unit, width = digits as usize);
    Ok(format!("{sign}{}.{}", abs / unit, frac.trim_end_matches('0')))
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(head, _)| head).trim()
}

struct Fields<'a> {
    line: usize,
    parts: Vec<&'a str>,
    precision: u32,
}

impl<'a> Fields<'a> {
    fn expect_len(&self, n: usize) -> Result<(), InstanceError> {
        if self.parts.len() == n {
            Ok(())
        } else {
            Err(self.error(format!("{:?} expects {} fields, found {}", self.parts[0], n - 1, self.parts.len() - 1)))
        }
    }

    fn error(&self, message: String) -> InstanceError {
        InstanceError::Parse { line: self.line, message }
    }

    fn node(&self, k: usize) -> Result<NodeId, InstanceError> {
        self.parts[k]
            .parse::<u32>()
            .map(NodeId)
            .map_err(|_| self.error(format!("invalid node id {:?}", self.parts[k])))
    }

    fn amount(&self, k: usize) -> Result<Rational, InstanceError> {
        parse_decimal(self.parts[k], self.precision).map_err(|e| match e {
            InstanceError::Parse { message, .. } => InstanceError::Parse { line: self.line, message },
            other => other,
        })
    }
}

fn lines(text: &str, precision: u32) -> impl Iterator<Item = Fields<'_>> {
    text.lines().enumerate().filter_map(move |(k, raw)| {
        let body = strip_comment(raw);
        (!body.is_empty()).then(|| Fields { line: k + 1, parts: body.split_whitespace().collect(), precision })
    })
}

/// Parses an instance file into an exact rational graph.
pub fn parse_instance(text: &str, precision: u32) -> Result<SocialRequestGraph<Rational>, InstanceError> {
    let mut nodes = Vec::new();
    let mut social = Vec::new();
    let mut requests = Vec::new();
    let mut caps = Vec::new();
    for f in lines(text, precision) {
        match f.parts[0] {
            "node" => {
                f.expect_len(2)?;
                nodes.push(f.node(1)?);
            }
            "social" => {
                f.expect_len(5)?;
                social.push(SocialPair::new(f.node(1)?, f.node(2)?, f.amount(3)?, f.amount(4)?));
            }
            "request" => {
                f.expect_len(5)?;
                requests.push(RequestEdge {
                    id: EdgeId(requests.len() as u32),
                    provider: f.node(1)?,
                    requester: f.node(2)?,
                    capacity: f.amount(3)?,
                    utility: f.amount(4)?,
                    is_virtual: false,
                });
            }
            "provider_cap" => {
                f.expect_len(3)?;
                caps.push((f.node(1)?, f.amount(2)?));
            }
            other => return Err(f.error(format!("unknown record {other:?}"))),
        }
    }
    Ok(build_graph(nodes, social, requests, caps)?)
}

/// Serializes a graph in the instance format. Edge ids are implied by order,
/// so a graph whose ids are `0..n` round-trips exactly.
pub fn write_instance(graph: &SocialRequestGraph<Rational>) -> Result<String, InstanceError> {
    let mut out = String::new();
    for n in graph.nodes() {
        writeln!(out, "node {n}").unwrap();
    }
    for p in graph.social() {
        writeln!(out, "social {} {} {} {}", p.i, p.j, format_decimal(p.cap_ij)?, format_decimal(p.cap_ji)?).unwrap();
    }
    for e in graph.requests() {
        if e.is_virtual {
            return Err(InstanceError::VirtualEdge(e.id));
        }
        writeln!(
            out,
            "request {} {} {} {}",
            e.provider,
            e.requester,
            format_decimal(e.capacity)?,
            format_decimal(e.utility)?
        )
        .unwrap();
    }
    for (n, c) in graph.provider_caps() {
        writeln!(out, "provider_cap {n} {}", format_decimal(*c)?).unwrap();
    }
    Ok(out)
}

/// Writes one line per request edge and per social pair.
pub fn write_flow(graph: &SocialRequestGraph<Rational>, flow: &Flow<Rational>) -> Result<String, InstanceError> {
    let mut out = String::new();
    for (e, v) in graph.requests().iter().zip(&flow.request) {
        writeln!(out, "request_flow {} {} {} {}", e.provider, e.requester, e.id, format_decimal(*v)?).unwrap();
    }
    for (p, v) in graph.social().iter().zip(&flow.social) {
        writeln!(out, "social_flow {} {} {}", p.i, p.j, format_decimal(*v)?).unwrap();
    }
    Ok(out)
}

/// Reads the flow lines of a flow file; endpoints of request lines must match the graph.
pub fn parse_flow(
    graph: &SocialRequestGraph<Rational>,
    text: &str,
    precision: u32,
) -> Result<Flow<Rational>, InstanceError> {
    let mut request = Vec::new();
    let mut social = Vec::new();
    for f in lines(text, precision) {
        match f.parts[0] {
            "request_flow" => {
                f.expect_len(5)?;
                let (provider, requester) = (f.node(1)?, f.node(2)?);
                let id = f.parts[3]
                    .parse::<u32>()
                    .map(EdgeId)
                    .map_err(|_| f.error(format!("invalid edge id {:?}", f.parts[3])))?;
                match graph.request(id) {
                    Some(e) if e.provider == provider && e.requester == requester => {}
                    _ => return Err(FlowError::KeyMismatch(format!("request edge {id} ({provider} -> {requester})")).into()),
                }
                let v = f.amount(4)?;
                if v.is_negative() {
                    return Err(f.error(format!("negative request flow {v}")));
                }
                request.push((id, v));
            }
            "social_flow" => {
                f.expect_len(4)?;
                social.push((f.node(1)?, f.node(2)?, f.amount(3)?));
            }
            _ => {}
        }
    }
    Ok(Flow::from_records(graph, request, social)?)
}
