//! Line-oriented text format for pulse programs.
//!
//! ```text
//! # comment
//! dt 0.01us
//! end 25us
//! ensemble fwhm=850kHz spacing=10kHz groups=201
//! pulse name=D channel=probe at=1us dur=0.01us rabi=12.5MHz detune=0MHz
//! ```
//!
//! Units are mandatory suffixes (`us` for times, `MHz`/`kHz` for
//! frequencies). The serializer emits a canonical form: header directives
//! first, pulses sorted by arrival time (ties broken by channel then name),
//! fixed key order, shortest round-trip float formatting, so
//! `parse(serialize(s)) == s`.

use super::{validate, Channel, Pulse, PulseSequence};
use crate::ensemble::EnsembleSpec;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("line {line}, col {col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, col: usize, message: impl Into<String>) -> Self {
        Self { line, col, message: message.into() }
    }
}

/// A `key=value` token with its column, before unit interpretation.
struct Token<'a> {
    key: &'a str,
    value: &'a str,
    col: usize,
}

fn tokenize(line: &str, lineno: usize) -> Result<(&str, Vec<Token<'_>>), ParseError> {
    let mut parts = Vec::new();
    let mut head = "";
    for (i, word) in line.split_whitespace().enumerate() {
        // byte offset of this word in the original line, 1-based
        let col = line.find(word).map(|p| p + 1).unwrap_or(1);
        if i == 0 {
            head = word;
            continue;
        }
        match word.split_once('=') {
            Some((k, v)) => parts.push(Token { key: k, value: v, col }),
            None => parts.push(Token { key: "", value: word, col }),
        }
    }
    if head.is_empty() {
        return Err(ParseError::new(lineno, 1, "empty directive"));
    }
    Ok((head, parts))
}

/// Split a magnitude + unit suffix, e.g. `"0.1us"` -> `(0.1, "us")`.
fn number_with_unit(raw: &str, line: usize, col: usize) -> Result<(f64, &str), ParseError> {
    let split = raw
        .char_indices()
        .find(|(_, c)| c.is_ascii_alphabetic())
        .map(|(i, _)| i)
        .ok_or_else(|| {
            ParseError::new(line, col, format!("missing unit suffix on '{raw}'"))
        })?;
    let (num, unit) = raw.split_at(split);
    let value: f64 = num.parse().map_err(|_| {
        ParseError::new(line, col, format!("invalid number '{num}'"))
    })?;
    Ok((value, unit))
}

fn time_us(raw: &str, line: usize, col: usize) -> Result<f64, ParseError> {
    let (v, unit) = number_with_unit(raw, line, col)?;
    match unit {
        "us" => Ok(v),
        other => Err(ParseError::new(line, col, format!("unknown time unit '{other}', expected us"))),
    }
}

fn freq_mhz(raw: &str, line: usize, col: usize) -> Result<f64, ParseError> {
    let (v, unit) = number_with_unit(raw, line, col)?;
    match unit {
        "MHz" => Ok(v),
        "kHz" => Ok(v / 1000.0),
        other => Err(ParseError::new(line, col, format!("unknown frequency unit '{other}', expected MHz or kHz"))),
    }
}

fn freq_khz(raw: &str, line: usize, col: usize) -> Result<f64, ParseError> {
    freq_mhz(raw, line, col).map(|v| v * 1000.0)
}

/// Parse the pulse-program text format into a validated [`PulseSequence`].
pub fn parse_sequence(text: &str) -> Result<PulseSequence, ParseError> {
    let mut dt: Option<f64> = None;
    let mut t_end: Option<f64> = None;
    let mut ensemble: Option<EnsembleSpec> = None;
    let mut pulses: Vec<Pulse> = Vec::new();
    let mut names: HashSet<String> = HashSet::new();
    let mut pulse_lines: Vec<usize> = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let (head, tokens) = tokenize(line, lineno)?;
        match head {
            "dt" | "end" => {
                let tok = tokens.first().ok_or_else(|| {
                    ParseError::new(lineno, 1, format!("'{head}' needs a value, e.g. '{head} 0.01us'"))
                })?;
                if !tok.key.is_empty() {
                    return Err(ParseError::new(lineno, tok.col, format!("'{head}' takes a bare value, not key=value")));
                }
                let v = time_us(tok.value, lineno, tok.col)?;
                if head == "dt" {
                    dt = Some(v);
                } else {
                    t_end = Some(v);
                }
            }
            "ensemble" => {
                let (mut fwhm, mut spacing, mut groups) = (None, None, None);
                for tok in &tokens {
                    match tok.key {
                        "fwhm" => fwhm = Some(freq_khz(tok.value, lineno, tok.col)?),
                        "spacing" => spacing = Some(freq_khz(tok.value, lineno, tok.col)?),
                        "groups" => {
                            let n: usize = tok.value.parse().map_err(|_| {
                                ParseError::new(lineno, tok.col, format!("invalid group count '{}'", tok.value))
                            })?;
                            groups = Some(n);
                        }
                        other => {
                            return Err(ParseError::new(lineno, tok.col, format!("unknown ensemble key '{other}'")))
                        }
                    }
                }
                let missing = [("fwhm", fwhm.is_none()), ("spacing", spacing.is_none()), ("groups", groups.is_none())];
                if let Some((k, _)) = missing.iter().find(|(_, m)| *m) {
                    return Err(ParseError::new(lineno, 1, format!("ensemble directive missing '{k}'")));
                }
                ensemble = Some(EnsembleSpec::new(fwhm.unwrap(), spacing.unwrap(), groups.unwrap()));
            }
            "pulse" => {
                let mut name: Option<String> = None;
                let mut channel: Option<Channel> = None;
                let (mut at, mut dur, mut rabi, mut detune) = (None, None, None, None);
                for tok in &tokens {
                    match tok.key {
                        "name" => name = Some(tok.value.to_string()),
                        "channel" => {
                            channel = Some(match tok.value {
                                "probe" => Channel::Probe,
                                "control" => Channel::Control,
                                other => {
                                    return Err(ParseError::new(
                                        lineno,
                                        tok.col,
                                        format!("unknown channel '{other}', expected probe or control"),
                                    ))
                                }
                            })
                        }
                        "at" => at = Some(time_us(tok.value, lineno, tok.col)?),
                        "dur" => dur = Some(time_us(tok.value, lineno, tok.col)?),
                        "rabi" => rabi = Some(freq_mhz(tok.value, lineno, tok.col)?),
                        "detune" => detune = Some(freq_mhz(tok.value, lineno, tok.col)?),
                        other => {
                            return Err(ParseError::new(lineno, tok.col, format!("unknown pulse key '{other}'")))
                        }
                    }
                }
                let missing = [
                    ("name", name.is_none()),
                    ("channel", channel.is_none()),
                    ("at", at.is_none()),
                    ("dur", dur.is_none()),
                    ("rabi", rabi.is_none()),
                    ("detune", detune.is_none()),
                ];
                if let Some((k, _)) = missing.iter().find(|(_, m)| *m) {
                    return Err(ParseError::new(lineno, 1, format!("pulse directive missing '{k}'")));
                }
                let name = name.unwrap();
                if !names.insert(name.clone()) {
                    return Err(ParseError::new(lineno, 1, format!("duplicate pulse name '{name}'")));
                }
                pulses.push(Pulse {
                    name,
                    channel: channel.unwrap(),
                    t_on: at.unwrap(),
                    duration: dur.unwrap(),
                    rabi_mhz: rabi.unwrap(),
                    detune_mhz: detune.unwrap(),
                });
                pulse_lines.push(lineno);
            }
            other => {
                return Err(ParseError::new(lineno, 1, format!("unknown directive '{other}'")));
            }
        }
    }

    let dt = dt.ok_or_else(|| ParseError::new(0, 0, "missing 'dt' directive"))?;
    let t_end = t_end.ok_or_else(|| ParseError::new(0, 0, "missing 'end' directive"))?;
    let ensemble = ensemble.ok_or_else(|| ParseError::new(0, 0, "missing 'ensemble' directive"))?;

    let mut seq = PulseSequence { pulses, dt, t_end, ensemble };
    sort_canonical(&mut seq.pulses);
    let violations = validate(&seq);
    if let Some(v) = violations.first() {
        return Err(ParseError::new(0, 0, format!("invalid sequence: {v}")));
    }
    Ok(seq)
}

fn sort_canonical(pulses: &mut [Pulse]) {
    pulses.sort_by(|a, b| {
        a.t_on
            .total_cmp(&b.t_on)
            .then_with(|| {
                let rank = |c: Channel| match c {
                    Channel::Probe => 0,
                    Channel::Control => 1,
                };
                rank(a.channel).cmp(&rank(b.channel))
            })
            .then_with(|| a.name.cmp(&b.name))
    });
}

/// Emit the canonical text form of a sequence.
pub fn serialize_sequence(seq: &PulseSequence) -> String {
    let mut sorted = seq.pulses.clone();
    sort_canonical(&mut sorted);
    let mut out = String::new();
    out.push_str(&format!("dt {}us\n", seq.dt));
    out.push_str(&format!("end {}us\n", seq.t_end));
    out.push_str(&format!(
        "ensemble fwhm={}kHz spacing={}kHz groups={}\n",
        seq.ensemble.fwhm_khz, seq.ensemble.spacing_khz, seq.ensemble.group_count
    ));
    for p in &sorted {
        out.push_str(&format!(
            "pulse name={} channel={} at={}us dur={}us rabi={}MHz detune={}MHz\n",
            p.name, p.channel, p.t_on, p.duration, p.rabi_mhz, p.detune_mhz
        ));
    }
    out
}
