//! Minimal Newick reader/writer.
//!
//! Grammar (whitespace between tokens is ignored):
//!
//! ```text
//! tree       := node ";"
//! node       := [ "(" node { "," node } ")" ] [ label ] [ ":" number ] [ annotation ]
//! label      := one or more of [A-Za-z0-9_.|-]
//! annotation := "[&" key "=" number { "," key "=" number } "]"
//! ```
//!
//! The only annotation key interpreted by this crate is `nu`, the mutation
//! rate of the branch above the node. Other keys are accepted and dropped.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NewickNode {
    pub label: Option<String>,
    pub length: Option<f64>,
    pub nu: Option<f64>,
    pub children: Vec<NewickNode>,
}

impl NewickNode {
    pub fn leaf(label: impl Into<String>, length: Option<f64>) -> Self {
        NewickNode { label: Some(label.into()), length, ..Default::default() }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn to_newick(&self) -> String {
        let mut out = String::new();
        self.write(&mut out);
        out.push(';');
        out
    }

    fn write(&self, out: &mut String) {
        if !self.children.is_empty() {
            out.push('(');
            for (i, c) in self.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                c.write(out);
            }
            out.push(')');
        }
        if let Some(l) = &self.label {
            out.push_str(l);
        }
        if let Some(len) = self.length {
            out.push(':');
            out.push_str(&format_number(len));
        }
        if let Some(nu) = self.nu {
            out.push_str("[&nu=");
            out.push_str(&format_number(nu));
            out.push(']');
        }
    }
}

/// Shortest representation that round-trips, with tiny negative zeros cleaned up.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

pub fn parse(input: &str) -> Result<NewickNode> {
    let mut p = Parser { s: input.as_bytes(), pos: 0 };
    let node = p.node()?;
    p.skip_ws();
    p.expect(b';')?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(p.err("trailing characters after ';'"));
    }
    Ok(node)
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Newick { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            Some(x) => Err(self.err(format!("expected '{}', found '{}'", c as char, x as char))),
            None => Err(self.err(format!("expected '{}', found end of input", c as char))),
        }
    }

    fn node(&mut self) -> Result<NewickNode> {
        let mut node = NewickNode::default();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            loop {
                node.children.push(self.node()?);
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.err("expected ',' or ')'")),
                }
            }
        }
        node.label = self.label();
        if self.peek() == Some(b':') {
            self.pos += 1;
            node.length = Some(self.number()?);
        }
        if self.peek() == Some(b'[') {
            node.nu = self.annotation()?;
        }
        if node.children.is_empty() && node.label.is_none() {
            return Err(self.err("leaf without a label"));
        }
        Ok(node)
    }

    fn label(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() {
            let c = self.s[self.pos];
            if c.is_ascii_alphanumeric() || matches!(c, b'_' | b'.' | b'|' | b'-') {
                self.pos += 1;
            } else {
                break;
            }
        }
        (self.pos > start).then(|| String::from_utf8_lossy(&self.s[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() {
            let c = self.s[self.pos];
            if c.is_ascii_digit() || matches!(c, b'.' | b'-' | b'+' | b'e' | b'E') {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        text.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::Newick { pos: start, msg: format!("bad number '{text}'") })
    }

    fn annotation(&mut self) -> Result<Option<f64>> {
        self.expect(b'[')?;
        self.expect(b'&')?;
        let mut nu = None;
        loop {
            let key = self.label().ok_or_else(|| self.err("expected annotation key"))?;
            self.expect(b'=')?;
            let value = self.number()?;
            if key == "nu" {
                nu = Some(value);
            }
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b']') => {
                    self.pos += 1;
                    return Ok(nu);
                }
                _ => return Err(self.err("expected ',' or ']' in annotation")),
            }
        }
    }
}
