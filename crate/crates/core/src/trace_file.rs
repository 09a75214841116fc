//! Plain-text network traces.
//!
//! One event per line:
//!
//! ```text
//! C <conn-id>          a new connection
//! S <conn-id> <hex2>   one byte sent to the server
//! F <conn-id> <hex2>   one byte sent from the server
//! ```
//!
//! `#` starts a comment; blank lines are ignored.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::network_model::{ConnId, NetworkEvent, NetworkTrace};

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading {path}: {source}")]
    Io { path: String, source: io::Error },
}

pub fn render_event(ev: &NetworkEvent) -> String {
    match *ev {
        NetworkEvent::NewConnection(c) => format!("C {c}"),
        NetworkEvent::ToServer(c, b) => format!("S {c} {b:02x}"),
        NetworkEvent::FromServer(c, b) => format!("F {c} {b:02x}"),
    }
}

pub fn render(trace: &[NetworkEvent]) -> String {
    let mut out = String::new();
    for ev in trace {
        let _ = writeln!(out, "{}", render_event(ev));
    }
    out
}

pub fn parse(text: &str) -> Result<NetworkTrace, TraceFileError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| TraceFileError::Parse { line: idx + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let conn = |s: &str| {
            if !s.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err(format!("bad connection id {s:?}")));
            }
            s.parse::<u32>().map(ConnId).map_err(|_| err(format!("bad connection id {s:?}")))
        };
        let byte = |s: &str| {
            if s.len() != 2 {
                return Err(err(format!("byte {s:?} is not two hex digits")));
            }
            u8::from_str_radix(s, 16).map_err(|_| err(format!("byte {s:?} is not two hex digits")))
        };
        let ev = match fields.as_slice() {
            ["C", c] => NetworkEvent::NewConnection(conn(c)?),
            ["S", c, b] => NetworkEvent::ToServer(conn(c)?, byte(b)?),
            ["F", c, b] => NetworkEvent::FromServer(conn(c)?, byte(b)?),
            _ => return Err(err(format!("unrecognized event {line:?}"))),
        };
        out.push(ev);
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<NetworkTrace, TraceFileError> {
    let text =
        fs::read_to_string(path).map_err(|source| TraceFileError::Io { path: path.display().to_string(), source })?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn event() -> impl Strategy<Value = NetworkEvent> {
        prop_oneof![
            any::<u32>().prop_map(|c| NetworkEvent::NewConnection(ConnId(c))),
            (any::<u32>(), any::<u8>()).prop_map(|(c, b)| NetworkEvent::ToServer(ConnId(c), b)),
            (any::<u32>(), any::<u8>()).prop_map(|(c, b)| NetworkEvent::FromServer(ConnId(c), b)),
        ]
    }

    proptest! {
        #[test]
        fn render_then_parse_is_identity(tr in proptest::collection::vec(event(), 0..40)) {
            prop_assert_eq!(parse(&render(&tr)).unwrap(), tr);
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# header\n\nC 1   # open\nS 1 61\nF 1 00\n";
        let tr = parse(text).unwrap();
        assert_eq!(
            tr,
            vec![
                NetworkEvent::NewConnection(ConnId(1)),
                NetworkEvent::ToServer(ConnId(1), 0x61),
                NetworkEvent::FromServer(ConnId(1), 0)
            ]
        );
        assert!(parse("").unwrap().is_empty());
    }

    #[test]
    fn malformed_lines_report_their_number() {
        for bad in ["X 1", "C", "S 1 6", "S 1 zz", "C -1", "F 1 100", "C 1 2"] {
            let text = format!("C 1\n{bad}\n");
            match parse(&text) {
                Err(TraceFileError::Parse { line, .. }) => assert_eq!(line, 2, "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }
}
